//! Class-based TF-IDF.
//!
//! All documents of a class are pooled. For gram `g` and class `c`:
//!
//! ```text
//! W(g, c) = tf(g, c) * ln(1 + A / tf(g))
//! ```
//!
//! where `tf(g, c)` is the pooled count of `g` in `c`, `tf(g)` its count over
//! all classes, and `A` the average number of counted grams per class. The
//! outlier class takes part in `tf(g)` and `A` like any other class.

use std::collections::{BTreeMap, HashMap};

use crate::textprep::CountMatrix;

#[derive(Debug, Clone)]
pub struct ClassTfIdf {
    classes: Vec<i32>,
    class_tf: Vec<HashMap<usize, u64>>,
    corpus_tf: Vec<u64>,
    avg_class_len: f64,
}

impl ClassTfIdf {
    /// `topics[d]` is the class of row `d` of `counts`.
    pub fn fit(topics: &[i32], counts: &CountMatrix) -> Self {
        assert_eq!(topics.len(), counts.n_rows(), "one topic id per count row");
        let mut by_class: BTreeMap<i32, HashMap<usize, u64>> = BTreeMap::new();
        let mut corpus_tf = vec![0u64; counts.n_cols()];
        for (row, &topic) in counts.rows().iter().zip(topics) {
            let tf = by_class.entry(topic).or_default();
            for &(col, n) in row {
                *tf.entry(col).or_insert(0) += n as u64;
                corpus_tf[col] += n as u64;
            }
        }
        let total: u64 = corpus_tf.iter().sum();
        let n_classes = by_class.len().max(1);
        let (classes, class_tf) = by_class.into_iter().unzip();
        ClassTfIdf {
            classes,
            class_tf,
            corpus_tf,
            avg_class_len: total as f64 / n_classes as f64,
        }
    }

    /// Class ids in ascending order.
    pub fn classes(&self) -> &[i32] {
        &self.classes
    }

    pub fn avg_class_len(&self) -> f64 {
        self.avg_class_len
    }

    pub fn tf(&self, class: i32, gram: usize) -> u64 {
        self.class_index(class)
            .and_then(|ci| self.class_tf[ci].get(&gram).copied())
            .unwrap_or(0)
    }

    pub fn corpus_tf(&self, gram: usize) -> u64 {
        self.corpus_tf.get(gram).copied().unwrap_or(0)
    }

    fn class_index(&self, class: i32) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }

    fn weight(&self, tf: u64, gram: usize) -> f64 {
        let total = self.corpus_tf[gram];
        if tf == 0 || total == 0 {
            return 0.0;
        }
        tf as f64 * (1.0 + self.avg_class_len / total as f64).ln()
    }

    /// `W(gram, class)`; zero for grams absent from the class.
    pub fn score(&self, class: i32, gram: usize) -> f64 {
        self.weight(self.tf(class, gram), gram)
    }

    /// Grams present in `class`, best first, ties broken by lower gram index.
    pub fn ranked(&self, class: i32, top_n: usize) -> Vec<(usize, f64)> {
        let Some(ci) = self.class_index(class) else {
            return Vec::new();
        };
        let mut scored: Vec<(usize, f64)> = self.class_tf[ci]
            .iter()
            .map(|(&g, &tf)| (g, self.weight(tf, g)))
            .collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        scored.truncate(top_n);
        scored
    }
}

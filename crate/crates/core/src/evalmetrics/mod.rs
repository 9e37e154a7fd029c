//! Classifier scoring against gold labels and inter-annotator agreement.

mod report;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

pub use report::{compare_reports, Comparison, ComparisonRow};

use crate::corpus::StanceLabel;
use crate::stance::ClassificationTrace;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {0} gold labels, {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("label at position {0} is not one of the classes")]
    UnknownLabel(usize),
    #[error("nothing to score")]
    Empty,
    #[error("AUC is undefined without both positive and negative items")]
    DegenerateGold,
    #[error("item {0} has no score for the class")]
    MissingScore(usize),
}

/// Counts with rows indexed by gold class and columns by predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix<L> {
    pub classes: Vec<L>,
    pub cells: Vec<Vec<u64>>,
}

impl<L: PartialEq> ConfusionMatrix<L> {
    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn get(&self, gold: &L, pred: &L) -> u64 {
        match (self.index(gold), self.index(pred)) {
            (Some(g), Some(p)) => self.cells[g][p],
            _ => 0,
        }
    }

    pub fn index(&self, label: &L) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}

pub fn confusion<L: PartialEq + Clone>(gold: &[L], pred: &[L], classes: &[L]) -> Result<ConfusionMatrix<L>, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch(gold.len(), pred.len()));
    }
    let k = classes.len();
    let mut cells = vec![vec![0u64; k]; k];
    let idx = |l: &L, i: usize| classes.iter().position(|c| c == l).ok_or(MetricError::UnknownLabel(i));
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        cells[idx(g, i)?][idx(p, i)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold items of this class.
    pub support: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

/// Rate metrics of a confusion matrix. `per_class` follows the class order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixScores {
    pub accuracy: f64,
    /// Mean recall over classes that occur in the gold labels.
    pub balanced_accuracy: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassScores>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

pub fn scores<L: PartialEq>(m: &ConfusionMatrix<L>) -> Result<MatrixScores, MetricError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricError::Empty);
    }
    let k = m.classes.len();
    let diag: u64 = (0..k).map(|i| m.cells[i][i]).sum();
    let mut per_class = Vec::with_capacity(k);
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..k {
        let tp = m.cells[c][c];
        let support: u64 = m.cells[c].iter().sum();
        let predicted: u64 = (0..k).map(|g| m.cells[g][c]).sum();
        let (fp, fn_) = (predicted - tp, support - tp);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        per_class.push(ClassScores {
            precision: ratio(tp, predicted),
            recall: ratio(tp, support),
            f1: f1(tp, fp, fn_),
            support,
            auc: None,
        });
    }
    let present: Vec<&ClassScores> = per_class.iter().filter(|c| c.support > 0).collect();
    Ok(MatrixScores {
        accuracy: ratio(diag, total),
        balanced_accuracy: present.iter().map(|c| c.recall).sum::<f64>() / present.len() as f64,
        f1_micro: f1(tp_all, fp_all, fn_all),
        f1_macro: per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64,
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementReport {
    pub n_items: usize,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub kappa: f64,
}

/// Cohen's kappa for two raters. When both raters use a single identical
/// class throughout, chance agreement is 1 and kappa is reported as 1.
pub fn cohen_kappa<L: Ord + Clone>(a1: &[L], a2: &[L]) -> Result<AgreementReport, MetricError> {
    if a1.len() != a2.len() {
        return Err(MetricError::LengthMismatch(a1.len(), a2.len()));
    }
    if a1.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = a1.len() as f64;
    let mut m1: BTreeMap<&L, u64> = BTreeMap::new();
    let mut m2: BTreeMap<&L, u64> = BTreeMap::new();
    let mut agree = 0u64;
    for (x, y) in a1.iter().zip(a2) {
        *m1.entry(x).or_default() += 1;
        *m2.entry(y).or_default() += 1;
        agree += u64::from(x == y);
    }
    let po = agree as f64 / n;
    let pe: f64 = m1
        .iter()
        .map(|(l, &c1)| (c1 as f64 / n) * (m2.get(l).copied().unwrap_or(0) as f64 / n))
        .sum();
    let kappa = if pe >= 1.0 { 1.0 } else { (po - pe) / (1.0 - pe) };
    Ok(AgreementReport {
        n_items: a1.len(),
        observed_agreement: po,
        expected_agreement: pe,
        kappa,
    })
}

/// Area under the ROC curve: the chance that a random positive outscores a
/// random negative, ties counting half. Uses average ranks.
pub fn roc_auc(positive: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    if positive.len() != scores.len() {
        return Err(MetricError::LengthMismatch(positive.len(), scores.len()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::DegenerateGold);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are doubled so tied averages stay integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u128;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum2 += avg2;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

/// One-vs-rest AUC of `class`, reading each item's score for it.
pub fn roc_auc_ovr<L: Ord>(gold: &[L], scores: &[BTreeMap<L, f64>], class: &L) -> Result<f64, MetricError> {
    if gold.len() != scores.len() {
        return Err(MetricError::LengthMismatch(gold.len(), scores.len()));
    }
    let s = scores
        .iter()
        .enumerate()
        .map(|(i, m)| m.get(class).copied().ok_or(MetricError::MissingScore(i)))
        .collect::<Result<Vec<f64>, _>>()?;
    let pos: Vec<bool> = gold.iter().map(|g| g == class).collect();
    roc_auc(&pos, &s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    /// Score traces whose decision fell back to the default label.
    pub include_fallback: bool,
}

/// Stance predictions scored against gold labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix<StanceLabel>,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub per_class: BTreeMap<StanceLabel, ClassScores>,
    pub n_scored: usize,
    pub n_fallback_excluded: usize,
    /// Gold items without a trace.
    pub n_missing: usize,
}

impl EvalReport {
    pub fn from_labels(gold: &[StanceLabel], pred: &[StanceLabel]) -> Result<Self, MetricError> {
        let m = confusion(gold, pred, StanceLabel::ALL)?;
        let s = scores(&m)?;
        Ok(EvalReport {
            per_class: StanceLabel::ALL.iter().copied().zip(s.per_class).collect(),
            matrix: m,
            accuracy: s.accuracy,
            balanced_accuracy: s.balanced_accuracy,
            f1_micro: s.f1_micro,
            f1_macro: s.f1_macro,
            n_scored: gold.len(),
            n_fallback_excluded: 0,
            n_missing: 0,
        })
    }

    pub fn auc(&self, label: StanceLabel) -> Option<f64> {
        self.per_class.get(&label).and_then(|c| c.auc)
    }
}

/// Scores traces against `gold`. Only posts present in both are used. AUC
/// is filled in for a class when every scored trace carries a score for it
/// and the class is neither absent nor universal in the gold labels.
pub fn evaluate_traces(
    traces: &[ClassificationTrace],
    gold: &HashMap<String, StanceLabel>,
    opts: EvalOptions,
) -> Result<EvalReport, MetricError> {
    let mut g = Vec::new();
    let mut p = Vec::new();
    let mut sc = Vec::new();
    let mut excluded = 0;
    let mut seen = 0;
    for t in traces {
        let Some(&label) = gold.get(&t.post_id) else { continue };
        seen += 1;
        if t.parse_fallback && !opts.include_fallback {
            excluded += 1;
            continue;
        }
        g.push(label);
        p.push(t.label);
        sc.push(t.scores.clone());
    }
    let mut report = EvalReport::from_labels(&g, &p)?;
    report.n_fallback_excluded = excluded;
    report.n_missing = gold.len().saturating_sub(seen);
    if let Some(all) = sc.into_iter().collect::<Option<Vec<_>>>() {
        for (label, cs) in report.per_class.iter_mut() {
            cs.auc = roc_auc_ovr(&g, &all, label).ok();
        }
    }
    Ok(report)
}

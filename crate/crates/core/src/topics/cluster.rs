//! Average-linkage agglomerative clustering under cosine distance.

use serde::{Deserialize, Serialize};

/// Topic id of posts that belong to no cluster.
pub const OUTLIER: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Merges with average-linkage distance at or below this value are kept.
    pub linkage_threshold: f64,
    /// Clusters smaller than this dissolve into the outlier topic.
    pub min_cluster_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            linkage_threshold: 0.5,
            min_cluster_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("cannot cluster an empty vector set")]
    Empty,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    MixedDimensions {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.linkage_threshold > 0.0 && self.linkage_threshold < 1.0) {
            return Err(ClusterError::Params(format!(
                "linkage_threshold must lie in (0, 1), got {}",
                self.linkage_threshold
            )));
        }
        if self.min_cluster_size < 2 {
            return Err(ClusterError::Params(format!(
                "min_cluster_size must be at least 2, got {}",
                self.min_cluster_size
            )));
        }
        Ok(())
    }
}

/// `1 - cos(a, b)`, with zero vectors treated as orthogonal to everything.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// One merge of the dendrogram: two cluster representatives and the
/// average-linkage distance between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Full average-linkage dendrogram via the nearest-neighbour chain method.
/// Merges are listed in the order they were formed, which is not sorted by
/// height; average linkage has no inversions, so cutting at a height keeps
/// exactly the merges at or below it.
pub fn average_linkage(vectors: &[Vec<f64>]) -> Vec<Merge> {
    let n = vectors.len();
    if n < 2 {
        return Vec::new();
    }
    let mut dist = Condensed {
        n,
        d: vec![0.0; n * (n - 1) / 2],
    };
    for i in 0..n {
        for j in i + 1..n {
            dist.set(i, j, cosine_distance(&vectors[i], &vectors[j]));
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::new();

    while merges.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster remains"));
        }
        let (a, b) = loop {
            let a = *chain.last().expect("chain is non-empty");
            let prev = chain.len().checked_sub(2).map(|k| chain[k]);
            let mut best: Option<(usize, f64)> = None;
            for c in (0..n).filter(|&c| active[c] && c != a) {
                let d = dist.get(a, c);
                let better = match best {
                    None => true,
                    Some((bc, bd)) => d < bd || (d == bd && Some(c) == prev && Some(bc) != prev),
                };
                if better {
                    best = Some((c, d));
                }
            }
            let (b, _) = best.expect("at least two active clusters");
            if Some(b) == prev {
                chain.pop();
                chain.pop();
                break (a, b);
            }
            chain.push(b);
        };

        let height = dist.get(a, b);
        let (keep, gone) = if a < b { (a, b) } else { (b, a) };
        let (sk, sg) = (size[keep] as f64, size[gone] as f64);
        for c in (0..n).filter(|&c| active[c] && c != keep && c != gone) {
            let v = (sk * dist.get(keep, c) + sg * dist.get(gone, c)) / (sk + sg);
            dist.set(keep, c, v);
        }
        active[gone] = false;
        size[keep] += size[gone];
        merges.push(Merge { a: keep, b: gone, height });
    }
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Groups point indices by cutting the dendrogram at `threshold`.
pub fn cut(n: usize, merges: &[Merge], threshold: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    for m in merges.iter().filter(|m| m.height <= threshold) {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Turns groups into topic ids: groups below `min_size` become
/// [`OUTLIER`], the rest are numbered from 0 by descending size, ties
/// broken by the smallest member index.
pub fn label_groups(n: usize, mut groups: Vec<Vec<usize>>, min_size: usize) -> Vec<i32> {
    let mut labels = vec![OUTLIER; n];
    groups.retain(|g| g.len() >= min_size);
    groups.sort_by(|x, y| y.len().cmp(&x.len()).then(x[0].cmp(&y[0])));
    for (topic, g) in groups.iter().enumerate() {
        for &i in g {
            labels[i] = topic as i32;
        }
    }
    labels
}

/// Clusters the vectors and returns one topic id per input vector.
pub fn cluster_embeddings(vectors: &[Vec<f64>], params: &ClusterParams) -> Result<Vec<i32>, ClusterError> {
    params.validate()?;
    let first = vectors.first().ok_or(ClusterError::Empty)?;
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != first.len() {
            return Err(ClusterError::MixedDimensions {
                index,
                expected: first.len(),
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ClusterError::NonFinite { index });
        }
    }
    let merges = average_linkage(vectors);
    let groups = cut(vectors.len(), &merges, params.linkage_threshold);
    Ok(label_groups(vectors.len(), groups, params.min_cluster_size))
}

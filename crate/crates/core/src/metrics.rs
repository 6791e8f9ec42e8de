//! External clustering metrics: NMI, ACC, and the pair-counting family
//! (adjusted Rand index, F-score, precision, recall).
//!
//! Labels are arbitrary `usize` values; only the induced partitions matter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmi: f64,
    pub acc: f64,
    pub ar: f64,
    pub fscore: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub ar: f64,
    pub fscore: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Contingency counts between two labelings. Rows follow the distinct values
/// of `pred` in first-appearance order, columns those of `truth`.
#[derive(Clone, Debug)]
pub struct Contingency {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "labelings differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("labelings are empty".into()));
    }
    Ok(())
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        check_lengths(pred, truth)?;
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut counts = vec![vec![0usize; kt]; kp];
        for (a, b) in p.iter().zip(&t) {
            counts[*a][*b] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kt).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: pred.len(),
        })
    }
}

/// Normalized mutual information with natural logarithms and geometric-mean
/// normalization. Returns 0 when either partition has a single cluster.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let n = c.n as f64;
    let mut mutual = 0.0;
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mutual += nij * (n * nij / (c.row_sums[i] as f64 * c.col_sums[j] as f64)).ln();
            }
        }
    }
    let entropy = |sums: &[usize]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0)
            .map(|&s| s as f64 * (s as f64 / n).ln())
            .sum()
    };
    let (hp, ht) = (entropy(&c.row_sums), entropy(&c.col_sums));
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    Ok((mutual / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with potentials). Returns `assignment[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("hungarian needs a square cost matrix".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("hungarian cost"));
    }
    // 1-based arrays with a virtual column 0, classic O(n^3) formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// Clustering accuracy under the best one-to-one cluster-to-class mapping.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let size = c.row_sums.len().max(c.col_sums.len());
    let mut counts = vec![vec![0.0; size]; size];
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            counts[i][j] = v as f64;
        }
    }
    let max = counts.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let cost: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|&v| max - v).collect()).collect();
    let assignment = hungarian(&cost)?;
    let matched: f64 = assignment.iter().enumerate().map(|(i, &j)| counts[i][j]).sum();
    Ok(matched / c.n as f64)
}

fn choose2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Pair-counting metrics over all `N(N-1)/2` unordered sample pairs.
///
/// Precision and recall are 0 when their denominators are 0; the adjusted
/// Rand index is 1 when the chance-corrected denominator vanishes, which only
/// happens for identical trivial partitions.
pub fn pair_metrics(pred: &[usize], truth: &[usize]) -> Result<PairMetrics> {
    let c = Contingency::new(pred, truth)?;
    let tp: f64 = c.counts.iter().flatten().map(|&v| choose2(v)).sum();
    let pred_pairs: f64 = c.row_sums.iter().map(|&v| choose2(v)).sum();
    let true_pairs: f64 = c.col_sums.iter().map(|&v| choose2(v)).sum();
    let total = choose2(c.n);
    let precision = if pred_pairs > 0.0 { tp / pred_pairs } else { 0.0 };
    let recall = if true_pairs > 0.0 { tp / true_pairs } else { 0.0 };
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let expected = if total > 0.0 { pred_pairs * true_pairs / total } else { 0.0 };
    let max_index = 0.5 * (pred_pairs + true_pairs);
    let ar = if max_index - expected == 0.0 {
        1.0
    } else {
        (tp - expected) / (max_index - expected)
    };
    Ok(PairMetrics {
        ar,
        fscore,
        precision,
        recall,
    })
}

/// All six metrics.
pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    let pairs = pair_metrics(pred, truth)?;
    Ok(MetricsReport {
        nmi: nmi(pred, truth)?,
        acc: acc(pred, truth)?,
        ar: pairs.ar,
        fscore: pairs.fscore,
        precision: pairs.precision,
        recall: pairs.recall,
    })
}

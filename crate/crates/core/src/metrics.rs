//! Edge recovery and estimation-error metrics.

use std::collections::BTreeSet;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Off-diagonal magnitudes above this count as edges.
pub const EDGE_THRESHOLD: f64 = 1e-8;

/// Upper-triangle pairs `(i, j)`, `i < j`, 0-based.
pub type EdgeSet = BTreeSet<(usize, usize)>;

pub fn edge_set<F: Scalar>(omega: ArrayView2<'_, F>, threshold: F) -> EdgeSet {
    let p = omega.nrows();
    let mut out = EdgeSet::new();
    for i in 0..p {
        for j in i + 1..p {
            if omega[[i, j]].abs() > threshold {
                out.insert((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Counts over all `p(p−1)/2` unordered pairs.
pub fn confusion(estimated: &EdgeSet, truth: &EdgeSet, p: usize) -> Confusion {
    let tp = estimated.intersection(truth).count() as u64;
    let fp = estimated.len() as u64 - tp;
    let fn_ = truth.len() as u64 - tp;
    let pairs = (p * p.saturating_sub(1) / 2) as u64;
    Confusion {
        tp,
        fp,
        fn_,
        tn: pairs - tp - fp - fn_,
    }
}

/// Matthews correlation; zero whenever a marginal of the table is empty.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    // Paired so that a perfect table gives exact squares.
    let denom = (factors[0] * factors[1]).sqrt() * (factors[2] * factors[3]).sqrt();
    (tp * tn - fp * fn_) / denom
}

/// `(precision, recall)`, each zero when undefined.
pub fn precision_recall(c: &Confusion) -> (f64, f64) {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

/// Frobenius norm of the off-diagonal error, both triangles included.
pub fn mofe<F: Scalar>(estimate: ArrayView2<'_, F>, truth: ArrayView2<'_, F>) -> F {
    let mut sum = F::zero();
    for ((i, j), &e) in estimate.indexed_iter() {
        if i != j {
            let d = e - truth[[i, j]];
            sum += d * d;
        }
    }
    sum.sqrt()
}

/// Metrics for one estimate against its truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub mcc: f64,
    pub precision: f64,
    pub recall: f64,
    pub mofe: f64,
    pub confusion: Confusion,
}

pub fn score<F: Scalar>(estimate: ArrayView2<'_, F>, truth: ArrayView2<'_, F>) -> EdgeScores {
    let thr = F::lit(EDGE_THRESHOLD);
    let c = confusion(&edge_set(estimate, thr), &edge_set(truth, thr), estimate.nrows());
    let (precision, recall) = precision_recall(&c);
    EdgeScores {
        mcc: mcc(&c),
        precision,
        recall,
        mofe: mofe(estimate, truth).to_f64_lossy(),
        confusion: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(tp: u64, fp: u64, tn: u64, fn_: u64) -> Confusion {
        Confusion { tp, fp, tn, fn_ }
    }

    #[test]
    fn mcc_examples() {
        assert!((mcc(&table(2, 1, 3, 1)) - 5.0 / 12.0).abs() < 1e-12);
        assert_eq!(mcc(&table(3, 0, 7, 0)), 1.0);
        assert_eq!(mcc(&table(0, 3, 0, 7)), -1.0);
        assert_eq!(mcc(&table(0, 0, 10, 0)), 0.0);
        assert_eq!(mcc(&table(0, 0, 0, 0)), 0.0);
    }

    #[test]
    fn precision_recall_examples() {
        assert_eq!(precision_recall(&table(0, 0, 5, 4)), (0.0, 0.0));
        assert_eq!(precision_recall(&table(3, 1, 0, 3)), (0.75, 0.5));
    }

    #[test]
    fn mofe_examples() {
        let zero = array![[1.0, 0.0], [0.0, 1.0]];
        let est = array![[5.0, 0.3], [0.3, -2.0]];
        assert!((mofe(est.view(), zero.view()) - 0.18f64.sqrt()).abs() < 1e-12);
        assert_eq!(mofe(zero.view(), (zero.clone() * 3.0).view()), 0.0);
    }

    #[test]
    fn confusion_partitions_pairs() {
        let mut truth = EdgeSet::new();
        truth.extend([(0, 1), (1, 2)]);
        let mut est = EdgeSet::new();
        est.extend([(0, 1), (0, 3)]);
        let c = confusion(&est, &truth, 4);
        assert_eq!(c, table(1, 1, 3, 1));
        assert_eq!(c.total(), 6);
    }

    #[test]
    fn edge_threshold_is_strict() {
        let om = array![[1.0, 1e-8, 2e-8], [1e-8, 1.0, -0.5], [2e-8, -0.5, 1.0]];
        let e = edge_set(om.view(), EDGE_THRESHOLD);
        assert_eq!(e.into_iter().collect::<Vec<_>>(), vec![(0, 2), (1, 2)]);
    }
}

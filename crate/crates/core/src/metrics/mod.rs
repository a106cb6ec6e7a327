//! Evaluation metrics: binary and multiclass MCC, Cohen's kappa, balanced
//! accuracy and exact-match cleavage-site precision/recall, broken down by
//! signal type and organism group.

mod report;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::seqio::{OrganismGroup, SpType, NUM_TYPES};

pub use report::{evaluate, CellMetrics, CsCounts, MetricsReport, OverallMetrics};

/// One evaluated sequence: gold and predicted type and cleavage site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub group: OrganismGroup,
    pub gold_type: SpType,
    pub gold_cs: Option<usize>,
    pub pred_type: SpType,
    pub pred_cs: Option<usize>,
    /// Predicted class probabilities, when available, for score/label dumps.
    pub type_probs: Option<[f32; NUM_TYPES]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Tally of `(gold_positive, predicted_positive)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (gold, pred) in pairs {
            match (gold, pred) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    /// True when the MCC denominator vanishes.
    pub fn is_degenerate(&self) -> bool {
        self.tp + self.fp == 0 || self.tp + self.fn_ == 0 || self.tn + self.fp == 0 || self.tn + self.fn_ == 0
    }
}

/// Matthews correlation; `0` when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    if c.is_degenerate() {
        return 0.0;
    }
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    (tp * tn - fp * fn_) / den
}

/// `(TPR + TNR) / 2`; `None` without both a gold positive and a gold negative.
pub fn balanced_accuracy(c: &ConfusionCounts) -> Option<f64> {
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    if pos == 0 || neg == 0 {
        return None;
    }
    Some((c.tp as f64 / pos as f64 + c.tn as f64 / neg as f64) / 2.0)
}

/// `K × K` counts, rows gold, columns predicted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    cells: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            cells: vec![0; k * k],
        }
    }

    pub fn from_labels(k: usize, gold: &[usize], pred: &[usize]) -> Self {
        assert_eq!(gold.len(), pred.len(), "gold and predicted labels must align");
        let mut m = Self::new(k);
        for (&g, &p) in gold.iter().zip(pred) {
            m.add(g, p);
        }
        m
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        self.cells[gold * self.k + pred] += 1;
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.cells[gold * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn gold_totals(&self) -> Vec<u64> {
        (0..self.k).map(|g| (0..self.k).map(|p| self.get(g, p)).sum()).collect()
    }

    pub fn pred_totals(&self) -> Vec<u64> {
        (0..self.k).map(|p| (0..self.k).map(|g| self.get(g, p)).sum()).collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }
}

/// Gorodkin's multiclass correlation `R_K`; `0` when its denominator vanishes.
pub fn multiclass_mcc(m: &ConfusionMatrix) -> f64 {
    let n = m.total() as f64;
    let t = m.gold_totals();
    let p = m.pred_totals();
    let tp: f64 = t.iter().zip(&p).map(|(&a, &b)| a as f64 * b as f64).sum();
    let pp: f64 = p.iter().map(|&x| (x as f64).powi(2)).sum();
    let tt: f64 = t.iter().map(|&x| (x as f64).powi(2)).sum();
    let den = ((n * n - pp) * (n * n - tt)).sqrt();
    if den == 0.0 {
        return 0.0;
    }
    (m.trace() as f64 * n - tp) / den
}

/// Cohen's kappa; `0` when chance agreement is total (or the table is empty).
pub fn kappa(m: &ConfusionMatrix) -> f64 {
    let n = m.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let po = m.trace() as f64 / n;
    let pe: f64 = m
        .gold_totals()
        .iter()
        .zip(m.pred_totals())
        .map(|(&g, p)| g as f64 * p as f64)
        .sum::<f64>()
        / (n * n);
    if pe >= 1.0 {
        return 0.0;
    }
    (po - pe) / (1.0 - pe)
}

/// Mean recall over the classes present in the gold labels, with the list of
/// absent classes that were left out.
pub fn multiclass_balanced_accuracy(m: &ConfusionMatrix) -> (f64, Vec<usize>) {
    let gold = m.gold_totals();
    let mut sum = 0.0;
    let mut present = 0usize;
    let mut excluded = Vec::new();
    for (k, &g) in gold.iter().enumerate() {
        if g == 0 {
            excluded.push(k);
        } else {
            sum += m.get(k, k) as f64 / g as f64;
            present += 1;
        }
    }
    let value = if present == 0 { 0.0 } else { sum / present as f64 };
    (value, excluded)
}

/// Confusion tallies of `target` within `group` (`None` pools every group):
/// the MCC1 set holds records whose gold type is `target` or `NO_SP`, the MCC2
/// set holds all of them. A prediction is positive when it names `target`.
pub fn mcc_sets(
    records: &[EvalRecord],
    target: SpType,
    group: Option<OrganismGroup>,
) -> (ConfusionCounts, ConfusionCounts) {
    let in_group: Vec<&EvalRecord> = records
        .iter()
        .filter(|r| group.is_none_or(|g| r.group == g))
        .collect();
    let pair = |r: &&EvalRecord| (r.gold_type == target, r.pred_type == target);
    let c1 = ConfusionCounts::from_pairs(
        in_group
            .iter()
            .filter(|r| r.gold_type == target || r.gold_type == SpType::NoSp)
            .map(pair),
    );
    let c2 = ConfusionCounts::from_pairs(in_group.iter().map(pair));
    (c1, c2)
}

/// MCC1 and MCC2 with their tallies (see [`mcc_sets`]). A cell with no gold
/// `target` record is absent.
pub fn mcc1_mcc2(
    records: &[EvalRecord],
    target: SpType,
    group: Option<OrganismGroup>,
) -> (Option<(f64, ConfusionCounts)>, Option<(f64, ConfusionCounts)>) {
    let (c1, c2) = mcc_sets(records, target, group);
    let cell = |c: ConfusionCounts| (c.tp + c.fn_ > 0).then(|| (mcc(&c), c));
    (cell(c1), cell(c2))
}

/// Exact-match cleavage-site tallies for `target`; a site is credited only
/// when both the predicted and the gold type are `target`.
pub fn cs_counts(records: &[EvalRecord], target: SpType, group: Option<OrganismGroup>) -> CsCounts {
    let mut c = CsCounts::default();
    for r in records.iter().filter(|r| group.is_none_or(|g| r.group == g)) {
        let gold = r.gold_type == target && r.gold_cs.is_some();
        let pred = r.pred_type == target && r.pred_cs.is_some();
        c.gold += u64::from(gold);
        c.predicted += u64::from(pred);
        c.correct += u64::from(gold && pred && r.gold_cs == r.pred_cs);
    }
    c
}

/// `(precision, recall)`, each absent when its denominator is zero.
pub fn cs_precision_recall(c: &CsCounts) -> (Option<f64>, Option<f64>) {
    let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
    (ratio(c.correct, c.predicted), ratio(c.correct, c.gold))
}

/// `(P(target), gold == target)` pairs for drawing ROC or PR curves elsewhere.
pub fn score_label_pairs(records: &[EvalRecord], target: SpType) -> Vec<(f32, bool)> {
    records
        .iter()
        .filter_map(|r| r.type_probs.map(|p| (p[target.index()], r.gold_type == target)))
        .collect()
}

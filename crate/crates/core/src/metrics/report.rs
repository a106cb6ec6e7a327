use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    cs_counts, cs_precision_recall, kappa, mcc1_mcc2, mcc_sets, multiclass_balanced_accuracy, multiclass_mcc,
    ConfusionCounts, ConfusionMatrix, EvalRecord,
};
use crate::seqio::{OrganismGroup, SpType, NUM_TYPES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsCounts {
    /// Exact site with matching type.
    pub correct: u64,
    /// Predicted as the type, with a site.
    pub predicted: u64,
    /// Gold records of the type carrying a site.
    pub gold: u64,
}

/// Metrics of one signal type within one organism group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub group: OrganismGroup,
    pub sp_type: SpType,
    pub mcc1: Option<f64>,
    pub mcc2: Option<f64>,
    pub mcc1_counts: ConfusionCounts,
    pub mcc2_counts: ConfusionCounts,
    /// Set when a present MCC hit a zero denominator and was reported as 0.
    pub degenerate: bool,
    pub cs_precision: Option<f64>,
    pub cs_recall: Option<f64>,
    pub cs_counts: CsCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub n: u64,
    /// Multiclass `R_K` over the 6 × 6 type confusion table.
    pub mcc: f64,
    pub kappa: f64,
    pub balanced_accuracy: f64,
    /// Types absent from the gold labels, left out of balanced accuracy.
    pub excluded_from_balanced_accuracy: Vec<SpType>,
    /// Rows gold, columns predicted, in type-index order.
    pub confusion: [[u64; NUM_TYPES]; NUM_TYPES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: OverallMetrics,
    /// Groups in declaration order, then signal types in index order.
    pub cells: Vec<CellMetrics>,
}

pub fn evaluate(records: &[EvalRecord]) -> MetricsReport {
    let gold: Vec<usize> = records.iter().map(|r| r.gold_type.index()).collect();
    let pred: Vec<usize> = records.iter().map(|r| r.pred_type.index()).collect();
    let m = ConfusionMatrix::from_labels(NUM_TYPES, &gold, &pred);
    let (ba, excluded) = multiclass_balanced_accuracy(&m);
    let confusion = std::array::from_fn(|g| std::array::from_fn(|p| m.get(g, p)));
    let overall = OverallMetrics {
        n: m.total(),
        mcc: multiclass_mcc(&m),
        kappa: kappa(&m),
        balanced_accuracy: ba,
        excluded_from_balanced_accuracy: excluded
            .into_iter()
            .map(|k| SpType::from_index(k).expect("type index"))
            .collect(),
        confusion,
    };
    let mut cells = Vec::new();
    for group in OrganismGroup::ALL {
        if !records.iter().any(|r| r.group == group) {
            continue;
        }
        for sp_type in SpType::SIGNAL {
            let (m1, m2) = mcc1_mcc2(records, sp_type, Some(group));
            let (c1, c2) = mcc_sets(records, sp_type, Some(group));
            let degenerate = [&m1, &m2].iter().any(|c| c.is_some_and(|(_, cc)| cc.is_degenerate()));
            let cs = cs_counts(records, sp_type, Some(group));
            let (cs_precision, cs_recall) = cs_precision_recall(&cs);
            cells.push(CellMetrics {
                group,
                sp_type,
                mcc1: m1.map(|x| x.0),
                mcc2: m2.map(|x| x.0),
                mcc1_counts: c1,
                mcc2_counts: c2,
                degenerate,
                cs_precision,
                cs_recall,
                cs_counts: cs,
            });
        }
    }
    MetricsReport { overall, cells }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    pub fn cell(&self, group: OrganismGroup, sp_type: SpType) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| c.group == group && c.sp_type == sp_type)
    }

    /// One row per cell; absent values print as `NA`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(
            "group\ttype\tn_gold\tmcc1\tmcc2\tcs_precision\tcs_recall\tcs_correct\tcs_predicted\tcs_gold\tdegenerate\n",
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.group,
                c.sp_type.name(),
                c.mcc2_counts.tp + c.mcc2_counts.fn_,
                fmt_opt(c.mcc1),
                fmt_opt(c.mcc2),
                fmt_opt(c.cs_precision),
                fmt_opt(c.cs_recall),
                c.cs_counts.correct,
                c.cs_counts.predicted,
                c.cs_counts.gold,
                c.degenerate
            );
        }
        s
    }

    /// `group<TAB>type<TAB>metric<TAB>value`, overall figures under `ALL ALL`.
    pub fn to_metric_lines(&self) -> String {
        let mut s = String::new();
        let o = &self.overall;
        for (k, v) in [
            ("n", o.n as f64),
            ("mcc", o.mcc),
            ("kappa", o.kappa),
            ("balanced_accuracy", o.balanced_accuracy),
        ] {
            let _ = writeln!(
                s,
                "ALL\tALL\t{k}\t{}",
                if k == "n" { format!("{v}") } else { format!("{v:.6}") }
            );
        }
        for c in &self.cells {
            for (k, v) in [
                ("mcc1", c.mcc1),
                ("mcc2", c.mcc2),
                ("cs_precision", c.cs_precision),
                ("cs_recall", c.cs_recall),
            ] {
                let _ = writeln!(s, "{}\t{}\t{k}\t{}", c.group, c.sp_type.name(), fmt_opt(v));
            }
        }
        s
    }
}

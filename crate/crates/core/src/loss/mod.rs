//! Class-imbalance-aware objectives: LDAM margins, class-balanced weights,
//! the cross-entropy and focal baselines, and the joint type + cleavage-site
//! loss, both as 64-bit reference functions and as graph nodes.

mod graph;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::seqio::{ClassCounts, RegionLabel, SpType, Targets, NUM_REGIONS, NUM_TYPES};

pub use graph::{
    attach_joint_loss, bind_loss_inputs, LossNodes, INPUT_REGION_ONEHOT, INPUT_TYPE_MARGIN, INPUT_TYPE_ONEHOT,
    INPUT_TYPE_WEIGHT,
};

/// Largest margin produced when `c` is left unset.
pub const DEFAULT_MAX_MARGIN: f64 = 0.5;

/// Added to the gold-region probability before the log so a saturated
/// softmax cannot produce `−∞`.
pub const CS_LOG_FLOOR: f64 = 1e-30;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("class {0} has no training examples")]
    ZeroCountClass(&'static str),
    #[error("CE_REWEIGHTED needs manual_weights")]
    MissingManualWeights,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Schedule {
    #[default]
    CbFromStart,
    /// Uniform weights until `deferred_fraction` of the epoch budget, then CB weights.
    DeferredRw,
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Baseline {
    #[default]
    CbLdam,
    Ce,
    CeReweighted,
    Focal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Margin constant; `None` picks the value giving a largest margin of
    /// [`DEFAULT_MAX_MARGIN`].
    pub c: Option<f64>,
    /// Logits are divided by `s`.
    pub s: f64,
    pub beta: f64,
    pub tau: f64,
    pub schedule: Schedule,
    pub deferred_fraction: f64,
    pub baseline: Baseline,
    pub gamma_focal: f64,
    pub manual_weights: Option<[f64; NUM_TYPES]>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            c: None,
            s: 0.0625,
            beta: 0.9999,
            tau: 1.0,
            schedule: Schedule::CbFromStart,
            deferred_fraction: 0.6,
            baseline: Baseline::CbLdam,
            gamma_focal: 2.0,
            manual_weights: None,
        }
    }
}

impl LossConfig {
    pub fn with_baseline(baseline: Baseline) -> Self {
        Self {
            baseline,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |m: &str| Err(LossError::InvalidConfig(m.to_string()));
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return bad("c must be positive");
            }
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return bad("s must be positive");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1)");
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad("tau must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.deferred_fraction) {
            return bad("deferred_fraction must lie in [0, 1]");
        }
        if !(self.gamma_focal >= 0.0 && self.gamma_focal.is_finite()) {
            return bad("gamma_focal must be non-negative");
        }
        match (self.baseline, &self.manual_weights) {
            (Baseline::CeReweighted, None) => return Err(LossError::MissingManualWeights),
            (_, Some(w)) if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) => {
                return bad("manual_weights must be finite and non-negative")
            }
            _ => {}
        }
        Ok(())
    }

    /// Margins in force for this baseline: LDAM margins for `CB_LDAM`, zero otherwise.
    pub fn margins(&self, counts: &ClassCounts) -> Result<MarginTable, LossError> {
        match self.baseline {
            Baseline::CbLdam => {
                let c = match self.c {
                    Some(c) => c,
                    None => auto_margin_constant(counts, DEFAULT_MAX_MARGIN)?,
                };
                ldam_margins(counts, c)
            }
            _ => Ok(MarginTable::zero()),
        }
    }

    /// Per-class weights for the 0-based `epoch` of a run of `max_epochs`.
    pub fn class_weights(
        &self,
        counts: &ClassCounts,
        epoch: usize,
        max_epochs: usize,
    ) -> Result<[f64; NUM_TYPES], LossError> {
        match self.baseline {
            Baseline::Ce | Baseline::Focal => Ok([1.0; NUM_TYPES]),
            Baseline::CeReweighted => self.manual_weights.ok_or(LossError::MissingManualWeights),
            Baseline::CbLdam => match self.phase(epoch, max_epochs) {
                Phase::Uniform => Ok([1.0; NUM_TYPES]),
                Phase::ClassBalanced => cb_weights(counts, self.beta),
            },
        }
    }

    pub fn phase(&self, epoch: usize, max_epochs: usize) -> Phase {
        match (self.baseline, self.schedule) {
            (Baseline::CbLdam, Schedule::CbFromStart) => Phase::ClassBalanced,
            (Baseline::CbLdam, Schedule::DeferredRw) if epoch >= self.switch_epoch(max_epochs) => Phase::ClassBalanced,
            _ => Phase::Uniform,
        }
    }

    /// First epoch run with class-balanced weights under `DEFERRED_RW`.
    pub fn switch_epoch(&self, max_epochs: usize) -> usize {
        (self.deferred_fraction * max_epochs as f64).floor() as usize
    }

    /// Focal exponent in force; zero unless the baseline is `FOCAL`.
    pub fn focal_gamma(&self) -> f64 {
        if self.baseline == Baseline::Focal {
            self.gamma_focal
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Uniform,
    ClassBalanced,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Uniform => "uniform",
            Phase::ClassBalanced => "class_balanced",
        }
    }
}

/// Per-class margins, indexed by [`SpType::index`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginTable(pub [f64; NUM_TYPES]);

impl MarginTable {
    pub fn zero() -> Self {
        Self([0.0; NUM_TYPES])
    }

    pub fn get(&self, t: SpType) -> f64 {
        self.0[t.index()]
    }
}

fn check_counts(counts: &ClassCounts) -> Result<(), LossError> {
    match SpType::ALL.iter().find(|t| counts.get(**t) == 0) {
        Some(t) => Err(LossError::ZeroCountClass(t.name())),
        None => Ok(()),
    }
}

/// `Δⱼ = C · nⱼ^(−1/4)`.
pub fn ldam_margins(counts: &ClassCounts, c: f64) -> Result<MarginTable, LossError> {
    check_counts(counts)?;
    let mut d = [0.0; NUM_TYPES];
    for (dj, &n) in d.iter_mut().zip(counts.as_slice()) {
        *dj = c / (n as f64).powf(0.25);
    }
    Ok(MarginTable(d))
}

/// The `C` whose largest margin (the rarest class) equals `max_margin`.
pub fn auto_margin_constant(counts: &ClassCounts, max_margin: f64) -> Result<f64, LossError> {
    check_counts(counts)?;
    let n_min = counts.as_slice().iter().copied().min().expect("six classes");
    Ok(max_margin * (n_min as f64).powf(0.25))
}

/// `wⱼ ∝ (1 − β) / (1 − β^nⱼ)`, rescaled to mean 1.
pub fn cb_weights(counts: &ClassCounts, beta: f64) -> Result<[f64; NUM_TYPES], LossError> {
    check_counts(counts)?;
    let mut w = [0.0; NUM_TYPES];
    for (wj, &n) in w.iter_mut().zip(counts.as_slice()) {
        *wj = (1.0 - beta) / (1.0 - beta.powf(n as f64));
    }
    let mean = w.iter().sum::<f64>() / NUM_TYPES as f64;
    for wj in &mut w {
        *wj /= mean;
    }
    Ok(w)
}

/// `−log softmax(x)_y` with max-subtraction.
fn neg_log_softmax(x: &[f64], y: usize) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = x.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    lse - x[y]
}

/// Weighted LDAM loss of one example: the gold logit is lowered by its
/// margin, every logit divided by `s`, then `w_y · (−log softmax)`.
pub fn ldam_loss(logits: &[f64], label: usize, margins: &MarginTable, s: f64, weights: &[f64]) -> f64 {
    let mut z: Vec<f64> = logits.iter().map(|v| v / s).collect();
    z[label] -= margins.0[label] / s;
    weights[label] * neg_log_softmax(&z, label)
}

/// One-example loss of a non-LDAM baseline, logits divided by `config.s`.
/// `CB_LDAM` is accepted and evaluated with zero margins and unit weight.
pub fn baseline_loss(logits: &[f64], label: usize, config: &LossConfig) -> Result<f64, LossError> {
    let z: Vec<f64> = logits.iter().map(|v| v / config.s).collect();
    let ce = neg_log_softmax(&z, label);
    Ok(match config.baseline {
        Baseline::Ce | Baseline::CbLdam => ce,
        Baseline::CeReweighted => config.manual_weights.ok_or(LossError::MissingManualWeights)?[label] * ce,
        Baseline::Focal => {
            let p = (-ce).exp();
            (1.0 - p).powf(config.gamma_focal) * ce
        }
    })
}

/// Per-example type loss for any baseline, with explicit margins and weights.
pub fn type_loss_one(
    logits: &[f64],
    label: usize,
    config: &LossConfig,
    margins: &MarginTable,
    weights: &[f64; NUM_TYPES],
) -> f64 {
    let mut z: Vec<f64> = logits.iter().map(|v| v / config.s).collect();
    z[label] -= margins.0[label] / config.s;
    let ce = neg_log_softmax(&z, label);
    let gamma = config.focal_gamma();
    let focal = if gamma == 0.0 {
        1.0
    } else {
        (1.0 - (-ce).exp()).powf(gamma)
    };
    weights[label] * focal * ce
}

/// `L_s + τ·L_c`, where `L_s` averages the per-example type losses over the
/// batch and `L_c` averages the per-position region cross-entropy over every
/// position of every sequence, padding included.
pub fn joint_loss(
    type_logits: &[[f64; NUM_TYPES]],
    region_probs: &[Vec<[f64; NUM_REGIONS]>],
    targets: &[&Targets],
    config: &LossConfig,
    margins: &MarginTable,
    weights: &[f64; NUM_TYPES],
) -> Result<JointLoss, LossError> {
    let n = targets.len();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    assert!(
        type_logits.len() == n && region_probs.len() == n,
        "one prediction per target"
    );
    let mut ls = 0.0;
    for (z, t) in type_logits.iter().zip(targets) {
        ls += type_loss_one(z, t.sp_type.index(), config, margins, weights);
    }
    ls /= n as f64;
    let mut lc = 0.0;
    let mut positions = 0usize;
    for (probs, t) in region_probs.iter().zip(targets) {
        for (row, r) in probs.iter().zip(&t.regions) {
            lc -= (row[r.index()] + CS_LOG_FLOOR).ln();
            positions += 1;
        }
    }
    lc /= positions as f64;
    Ok(JointLoss {
        type_loss: ls,
        cs_loss: lc,
        total: ls + config.tau * lc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLoss {
    pub type_loss: f64,
    pub cs_loss: f64,
    pub total: f64,
}

/// Gold region index per position.
pub(crate) fn region_indices(t: &Targets) -> impl Iterator<Item = usize> + '_ {
    t.regions.iter().map(|r: &RegionLabel| r.index())
}

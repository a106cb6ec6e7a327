use std::collections::HashMap;

use super::{region_indices, LossConfig, MarginTable, CS_LOG_FLOOR};
use crate::autodiff::{Graph, GraphError, NodeId, Scalar, Tensor};
use crate::model::Heads;
use crate::seqio::{Targets, NUM_REGIONS, NUM_TYPES};

/// `[B, 6]` one-hot gold type.
pub const INPUT_TYPE_ONEHOT: &str = "loss.type_onehot";
/// `[B, 6]`, `−Δ_y` at the gold column and zero elsewhere.
pub const INPUT_TYPE_MARGIN: &str = "loss.type_margin";
/// `[B, 1]`, `−w_y / B`: folds the sign, the class weight and the batch mean.
pub const INPUT_TYPE_WEIGHT: &str = "loss.type_weight";
/// `[L·B, 11]` one-hot gold region, time-major like the model rows.
pub const INPUT_REGION_ONEHOT: &str = "loss.region_onehot";

#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub type_loss: NodeId,
    pub cs_loss: NodeId,
    pub total: NodeId,
}

/// Appends the joint objective to a network graph built for `batch`
/// sequences of `seq_len` positions. Margins and class weights are graph
/// inputs (see [`bind_loss_inputs`]) so a schedule can change them without
/// rebuilding.
pub fn attach_joint_loss(
    g: &mut Graph,
    heads: &Heads,
    batch: usize,
    seq_len: usize,
    config: &LossConfig,
) -> Result<LossNodes, GraphError> {
    let onehot = g.input(INPUT_TYPE_ONEHOT, [batch, NUM_TYPES])?;
    let margin = g.input(INPUT_TYPE_MARGIN, [batch, NUM_TYPES])?;
    let weight = g.input(INPUT_TYPE_WEIGHT, [batch, 1])?;
    let regions = g.input(INPUT_REGION_ONEHOT, [seq_len * batch, NUM_REGIONS])?;

    let z = g.add(heads.type_logits, margin)?;
    let z = g.scale(z, 1.0 / config.s)?;
    let p = g.softmax_rows(z)?;
    let gold = g.mul(p, onehot)?;
    let p_y = g.sum_axis(gold, 1)?;
    let mut per_example = g.log(p_y);
    let gamma = config.focal_gamma();
    if gamma != 0.0 {
        let neg = g.scale(p_y, -1.0)?;
        let one = g.fill([1], 1.0);
        let miss = g.add(neg, one)?;
        let focal = g.power(miss, gamma);
        per_example = g.mul(per_example, focal)?;
    }
    let weighted = g.mul(per_example, weight)?;
    let type_loss = g.sum(weighted);
    g.label(type_loss, "loss.type");

    let gold_r = g.mul(heads.region_probs, regions)?;
    let q = g.sum_axis(gold_r, 1)?;
    let floor = g.fill([1], CS_LOG_FLOOR);
    let q = g.add(q, floor)?;
    let lq = g.log(q);
    let lc = g.sum(lq);
    let cs_loss = g.scale(lc, -1.0 / (batch * seq_len) as f64)?;
    g.label(cs_loss, "loss.cs");

    let tc = g.scale(cs_loss, config.tau)?;
    let total = g.add(type_loss, tc)?;
    g.label(total, "loss.total");
    g.set_output("loss.type", type_loss);
    g.set_output("loss.cs", cs_loss);
    g.set_output("loss.total", total);
    Ok(LossNodes {
        type_loss,
        cs_loss,
        total,
    })
}

/// Tensors for the four loss inputs of [`attach_joint_loss`].
pub fn bind_loss_inputs<T: Scalar>(
    targets: &[&Targets],
    margins: &MarginTable,
    weights: &[f64; NUM_TYPES],
) -> HashMap<String, Tensor<T>> {
    let batch = targets.len();
    let seq_len = targets.first().map_or(0, |t| t.regions.len());
    let mut onehot = vec![T::zero(); batch * NUM_TYPES];
    let mut margin = vec![T::zero(); batch * NUM_TYPES];
    let mut weight = vec![T::zero(); batch];
    let mut regions = vec![T::zero(); seq_len * batch * NUM_REGIONS];
    for (b, t) in targets.iter().enumerate() {
        assert_eq!(t.regions.len(), seq_len, "targets must share one length");
        let y = t.sp_type.index();
        onehot[b * NUM_TYPES + y] = T::one();
        margin[b * NUM_TYPES + y] = T::lit(-margins.0[y]);
        weight[b] = T::lit(-weights[y] / batch as f64);
        for (pos, r) in region_indices(t).enumerate() {
            regions[(pos * batch + b) * NUM_REGIONS + r] = T::one();
        }
    }
    let t = |shape: Vec<usize>, data| Tensor::new(shape, data).expect("sizes computed above");
    HashMap::from([
        (INPUT_TYPE_ONEHOT.to_string(), t(vec![batch, NUM_TYPES], onehot)),
        (INPUT_TYPE_MARGIN.to_string(), t(vec![batch, NUM_TYPES], margin)),
        (INPUT_TYPE_WEIGHT.to_string(), t(vec![batch, 1], weight)),
        (
            INPUT_REGION_ONEHOT.to_string(),
            t(vec![seq_len * batch, NUM_REGIONS], regions),
        ),
    ])
}

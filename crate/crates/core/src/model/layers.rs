//! Graph builders for the recurrent and attention blocks.
//!
//! Batched activations are time-major: row `t * batch + b` holds position `t`
//! of sequence `b`, so one time step is a contiguous block of `batch` rows.

use crate::autodiff::{Graph, GraphError, NodeId};

/// One LSTM direction over precomputed input projections `xp` (`L·B × 4H`,
/// gate order input, forget, candidate, output). Returns the hidden state of
/// every step, indexed by position.
fn lstm_direction(
    g: &mut Graph,
    xp: NodeId,
    w_hh: NodeId,
    hidden: usize,
    seq_len: usize,
    batch: usize,
    reverse: bool,
) -> Result<Vec<NodeId>, GraphError> {
    let mut hs = vec![None; seq_len];
    let mut state: Option<(NodeId, NodeId)> = None;
    let order: Vec<usize> = if reverse {
        (0..seq_len).rev().collect()
    } else {
        (0..seq_len).collect()
    };
    for t in order {
        let x_t = g.slice(xp, 0, t * batch, batch)?;
        let pre = match state {
            Some((h, _)) => {
                let rec = g.matmul(h, w_hh)?;
                g.add(x_t, rec)?
            }
            None => x_t,
        };
        let act = g.sigmoid(pre);
        let i = g.slice(act, 1, 0, hidden)?;
        let o = g.slice(act, 1, 3 * hidden, hidden)?;
        let cand = g.slice(pre, 1, 2 * hidden, hidden)?;
        let cand = g.tanh(cand);
        let ic = g.mul(i, cand)?;
        let c = match state {
            Some((_, c_prev)) => {
                let f = g.slice(act, 1, hidden, hidden)?;
                let fc = g.mul(f, c_prev)?;
                g.add(fc, ic)?
            }
            None => ic,
        };
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        hs[t] = Some(h);
        state = Some((h, c));
    }
    Ok(hs.into_iter().map(|h| h.expect("every step visited")).collect())
}

/// Bidirectional LSTM: `L·B × in_dim` to `L·B × 2H`, forward state in the
/// first `H` columns. Parameters `{prefix}.{fwd,bwd}.{w_ih,w_hh,b}`.
pub fn bilstm(
    g: &mut Graph,
    x: NodeId,
    prefix: &str,
    in_dim: usize,
    hidden: usize,
    seq_len: usize,
    batch: usize,
) -> Result<NodeId, GraphError> {
    let mut halves = Vec::with_capacity(2);
    for (dir, reverse) in [("fwd", false), ("bwd", true)] {
        let w_ih = g.param(&format!("{prefix}.{dir}.w_ih"), [in_dim, 4 * hidden])?;
        let w_hh = g.param(&format!("{prefix}.{dir}.w_hh"), [hidden, 4 * hidden])?;
        let b = g.param(&format!("{prefix}.{dir}.b"), [4 * hidden])?;
        let xw = g.matmul(x, w_ih)?;
        let xp = g.add(xw, b)?;
        let hs = lstm_direction(g, xp, w_hh, hidden, seq_len, batch, reverse)?;
        halves.push(g.concat(&hs, 0)?);
    }
    g.concat(&halves, 1)
}

/// `softmax(Q Kᵀ / √d_k) V` for one sequence. Key columns where `key_mask`
/// is zero are overwritten with `fill` before the softmax.
pub fn scaled_dot_attention(
    g: &mut Graph,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    key_mask: Option<NodeId>,
    fill: f64,
) -> Result<NodeId, GraphError> {
    let d_k = g.shape(q)[1];
    let scores = g.matmul_ext(q, k, false, true, 1.0 / (d_k as f64).sqrt())?;
    let scores = match key_mask {
        Some(m) => g.masked_fill(scores, m, fill)?,
        None => scores,
    };
    let attn = g.softmax_rows(scores)?;
    g.matmul(attn, v)
}

/// Shapes shared by the attention builder.
#[derive(Clone, Copy, Debug)]
pub struct AttentionDims {
    pub heads: usize,
    pub d_k: usize,
    pub d_out: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub fill: f64,
}

/// Multi-head attention with queries from `q_src` and keys/values from
/// `kv_src`, both time-major. Each sequence attends only within itself.
/// Parameters `{prefix}.{q,k,v}.{head}` and `{prefix}.o` (no biases).
pub fn multi_head_attention(
    g: &mut Graph,
    q_src: NodeId,
    kv_src: NodeId,
    key_masks: &[NodeId],
    prefix: &str,
    dims: AttentionDims,
) -> Result<NodeId, GraphError> {
    let AttentionDims {
        heads,
        d_k,
        d_out,
        seq_len,
        batch,
        fill,
    } = dims;
    assert_eq!(key_masks.len(), batch, "one key mask per sequence");
    let dq = g.shape(q_src)[1];
    let dkv = g.shape(kv_src)[1];
    // Per head, projections laid out as L × (B·d_k) so each sequence is a column block.
    let mut projected = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut per = Vec::with_capacity(3);
        for (name, src, width) in [("q", q_src, dq), ("k", kv_src, dkv), ("v", kv_src, dkv)] {
            let w = g.param(&format!("{prefix}.{name}.{h}"), [width, d_k])?;
            let p = g.matmul(src, w)?;
            per.push(g.reshape(p, [seq_len, batch * d_k])?);
        }
        projected.push(per);
    }
    let mut per_seq = Vec::with_capacity(batch);
    for (b, &mask) in key_masks.iter().enumerate() {
        let mut head_out = Vec::with_capacity(heads);
        for per in &projected {
            let q = g.slice(per[0], 1, b * d_k, d_k)?;
            let k = g.slice(per[1], 1, b * d_k, d_k)?;
            let v = g.slice(per[2], 1, b * d_k, d_k)?;
            head_out.push(scaled_dot_attention(g, q, k, v, Some(mask), fill)?);
        }
        per_seq.push(g.concat(&head_out, 1)?);
    }
    let wide = g.concat(&per_seq, 1)?;
    let stacked = g.reshape(wide, [seq_len * batch, heads * d_k])?;
    let w_o = g.param(&format!("{prefix}.o"), [heads * d_k, d_out])?;
    g.matmul(stacked, w_o)
}

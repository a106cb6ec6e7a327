use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::layers::{bilstm, multi_head_attention, AttentionDims};
use super::ModelError;
use crate::autodiff::{Bindings, Graph, GraphError, NodeId, Tensor};
use crate::seqio::EncodedExample;

pub const INPUT_RESIDUES: &str = "residues";
pub const INPUT_GROUPS: &str = "groups";
pub const INPUT_EMBEDDING: &str = "embedding";
pub const MASK_ENCODER: &str = "mask.encoder";
pub const MASK_TRUNK: &str = "mask.trunk";
pub const MASK_LSTM2: &str = "mask.lstm2";
pub const KEY_MASK_PREFIX: &str = "key_mask.";

/// Output nodes of the forward graph.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    /// `B × 6` cosine similarities.
    pub type_logits: NodeId,
    /// `B × 6`, `softmax(type_logits / s)`.
    pub type_probs: NodeId,
    /// `L·B × 11`, time-major.
    pub region_probs: NodeId,
}

/// The forward graph for a fixed batch size.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    pub batch: usize,
    pub graph: Graph,
    pub heads: Heads,
}

fn relu_linear(g: &mut Graph, x: NodeId, prefix: &str, i: usize, o: usize) -> Result<NodeId, GraphError> {
    let y = g.linear(x, prefix, i, o)?;
    Ok(g.relu(y))
}

impl Network {
    pub fn build(config: &ModelConfig, batch: usize) -> Result<Self, ModelError> {
        config.validate()?;
        assert!(batch > 0, "batch size must be positive");
        let c = config;
        let (l, lb) = (c.seq_len, c.seq_len * batch);
        let mut g = Graph::new();

        let residues = g.input(INPUT_RESIDUES, [lb, c.residue_dim])?;
        g.label(residues, "input");
        let groups = g.input(INPUT_GROUPS, [lb, c.group_dim])?;
        let mask_enc = g.input(MASK_ENCODER, [lb, c.d_model()])?;
        let mask_trunk = g.input(MASK_TRUNK, [lb, c.trunk_width()])?;
        let mask_l2 = g.input(MASK_LSTM2, [lb, 2 * c.lstm2_hidden])?;
        let key_masks = (0..batch)
            .map(|b| g.input(&format!("{KEY_MASK_PREFIX}{b}"), [l, l]))
            .collect::<Result<Vec<_>, _>>()?;
        let embedding = g.input(INPUT_EMBEDDING, [batch, c.embedding_dim])?;

        let fc1 = relu_linear(&mut g, residues, "fc1", c.residue_dim, c.fc1_units)?;
        g.label(fc1, "fc1");
        let enc = g.concat(&[fc1, groups], 1)?;
        let enc = g.masked_fill(enc, mask_enc, 0.0)?;
        g.label(enc, "encoder");

        let mut cnn = g.slice(enc, 1, 0, c.fc1_units)?;
        let mut width = c.fc1_units;
        for (i, (&out, &k)) in c.cnn_channels.iter().zip(&c.cnn_kernels).enumerate() {
            let w = g.param(&format!("cnn{}.w", i + 1), [k * width, out])?;
            let b = g.param(&format!("cnn{}.b", i + 1), [out])?;
            let y = g.conv1d_same(cnn, w, batch)?;
            let y = g.add(y, b)?;
            cnn = g.relu(y);
            width = out;
        }
        g.label(cnn, "cnn");

        let lstm1 = bilstm(&mut g, enc, "lstm1", c.d_model(), c.lstm1_hidden, l, batch)?;
        g.label(lstm1, "lstm1");
        let dims = AttentionDims {
            heads: c.heads,
            d_k: c.d_k,
            d_out: c.d_model(),
            seq_len: l,
            batch,
            fill: c.attention_mask_fill,
        };
        let att = multi_head_attention(&mut g, lstm1, enc, &key_masks, "mha", dims)?;
        g.label(att, "attention");
        let cat = g.concat(&[att, lstm1], 1)?;
        g.label(cat, "attention_concat");
        let trunk = g.add(cat, cnn)?;
        let trunk = g.masked_fill(trunk, mask_trunk, 0.0)?;
        g.label(trunk, "trunk");

        let w2 = 2 * c.lstm2_hidden;
        let lstm2 = bilstm(&mut g, trunk, "lstm2", c.trunk_width(), c.lstm2_hidden, l, batch)?;
        let lstm2 = g.masked_fill(lstm2, mask_l2, 0.0)?;
        g.label(lstm2, "lstm2");

        let [h1, h2] = c.cs_head_widths;
        let cs = relu_linear(&mut g, lstm2, "cs.fc1", w2, h1)?;
        let cs = relu_linear(&mut g, cs, "cs.fc2", h1, h2)?;
        let region_logits = g.linear(cs, "cs.fc3", h2, c.num_regions())?;
        let region_probs = g.softmax_rows(region_logits)?;
        g.label(region_probs, "region_probs");

        // Per-sequence flatten: row b holds positions 0..L of sequence b, position-major.
        let wide = g.reshape(lstm2, [l, batch * w2])?;
        let rows = (0..batch)
            .map(|b| {
                let s = g.slice(wide, 1, b * w2, w2)?;
                g.reshape(s, [1, l * w2])
            })
            .collect::<Result<Vec<_>, _>>()?;
        let flat = g.concat(&rows, 0)?;
        g.label(flat, "flatten");
        let reduce = relu_linear(&mut g, flat, "type.reduce", c.flatten_width(), c.type_reduce)?;
        g.label(reduce, "type_reduce");
        let [e1, e2] = c.embed_adapter;
        let emb = relu_linear(&mut g, embedding, "embed.fc1", c.embedding_dim, e1)?;
        let emb = relu_linear(&mut g, emb, "embed.fc2", e1, e2)?;
        g.label(emb, "embed_adapter");
        let fused = g.concat(&[reduce, emb], 1)?;
        g.label(fused, "fuse_input");
        let fused = g.linear(fused, "fuse", c.type_reduce + e2, c.fuse_units)?;
        g.label(fused, "fuse");
        let feat = g.l2_normalize_rows(fused)?;
        let agents = g.param("head.agents", [c.num_types(), c.fuse_units])?;
        let agents = g.l2_normalize_rows(agents)?;
        let type_logits = g.matmul_ext(feat, agents, false, true, 1.0)?;
        g.label(type_logits, "type_logits");
        let scaled = g.scale(type_logits, 1.0 / c.logit_scale)?;
        let type_probs = g.softmax_rows(scaled)?;
        g.label(type_probs, "type_probs");

        g.set_output("type_logits", type_logits);
        g.set_output("type_probs", type_probs);
        g.set_output("region_probs", region_probs);
        Ok(Self {
            config: c.clone(),
            batch,
            graph: g,
            heads: Heads {
                type_logits,
                type_probs,
                region_probs,
            },
        })
    }

    /// Labeled stages with their shapes, in evaluation order.
    pub fn shape_ledger(&self) -> Vec<(String, Vec<usize>)> {
        self.graph
            .labeled()
            .into_iter()
            .map(|(l, s)| (l.to_string(), s.to_vec()))
            .collect()
    }

    /// Binds the per-batch inputs. `embeddings[b] = None` is the zero vector.
    pub fn bind_inputs(
        &self,
        examples: &[&EncodedExample],
        embeddings: &[Option<&[f32]>],
    ) -> Result<HashMap<String, Tensor<f32>>, ModelError> {
        let c = &self.config;
        let (l, bsz) = (c.seq_len, self.batch);
        if examples.len() != bsz || embeddings.len() != bsz {
            return Err(ModelError::BatchSize {
                expected: bsz,
                found: examples.len(),
            });
        }
        let mut residues = vec![0.0f32; l * bsz * c.residue_dim];
        let mut groups = vec![0.0f32; l * bsz * c.group_dim];
        let mut row_mask = vec![0.0f32; l * bsz];
        let mut out = HashMap::new();
        for (b, ex) in examples.iter().enumerate() {
            if ex.seq_len != l {
                return Err(ModelError::SeqLen {
                    expected: l,
                    found: ex.seq_len,
                });
            }
            for t in 0..l {
                let r = t * bsz + b;
                residues[r * c.residue_dim..(r + 1) * c.residue_dim].copy_from_slice(ex.residue_row(t));
                groups[r * c.group_dim..(r + 1) * c.group_dim].copy_from_slice(ex.group_row(t));
                row_mask[r] = ex.mask[t];
            }
            let keys: Vec<f32> = (0..l).flat_map(|_| ex.mask.iter().copied()).collect();
            out.insert(format!("{KEY_MASK_PREFIX}{b}"), Tensor::new(vec![l, l], keys)?);
        }
        let widen = |w: usize| -> Result<Tensor<f32>, GraphError> {
            Tensor::new(
                vec![l * bsz, w],
                row_mask.iter().flat_map(|&m| std::iter::repeat_n(m, w)).collect(),
            )
        };
        out.insert(MASK_ENCODER.into(), widen(c.d_model())?);
        out.insert(MASK_TRUNK.into(), widen(c.trunk_width())?);
        out.insert(MASK_LSTM2.into(), widen(2 * c.lstm2_hidden)?);
        out.insert(
            INPUT_RESIDUES.into(),
            Tensor::new(vec![l * bsz, c.residue_dim], residues)?,
        );
        out.insert(INPUT_GROUPS.into(), Tensor::new(vec![l * bsz, c.group_dim], groups)?);
        let mut emb = vec![0.0f32; bsz * c.embedding_dim];
        for (b, e) in embeddings.iter().enumerate() {
            if let Some(e) = e {
                if e.len() != c.embedding_dim {
                    return Err(ModelError::EmbeddingDim {
                        expected: c.embedding_dim,
                        found: e.len(),
                    });
                }
                emb[b * c.embedding_dim..(b + 1) * c.embedding_dim].copy_from_slice(e);
            }
        }
        out.insert(INPUT_EMBEDDING.into(), Tensor::new(vec![bsz, c.embedding_dim], emb)?);
        Ok(out)
    }
}

/// Named model parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl Bindings<f32> for ParameterStore {
    fn lookup(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.get(name)
    }
}

impl ParameterStore {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.insert(name.into(), t);
    }

    /// Sorted by name.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f32>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn to_f64(&self) -> BTreeMap<String, Tensor<f64>> {
        self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect()
    }

    /// Every declared parameter of `config` present with its declared shape.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let net = Network::build(config, 1)?;
        let shapes = net.graph.param_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in shapes {
            match self.tensors.get(name) {
                Some(t) if t.shape() == shape => {}
                Some(t) => {
                    return Err(ModelError::ParamMismatch(format!(
                        "{name}: stored {:?}, config needs {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(ModelError::ParamMismatch(format!("{name} missing"))),
            }
        }
        Ok(())
    }
}

/// Per-tensor stream so one tensor's draws never depend on another's.
fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Weights `U(−√(1/fan_in), √(1/fan_in))`, biases zero, LSTM forget-gate
/// bias one.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParameterStore, ModelError> {
    let net = Network::build(config, 1)?;
    let mut store = ParameterStore::default();
    for (name, shape) in net.graph.param_shapes() {
        let n: usize = shape.iter().product();
        let data = if shape.len() == 1 {
            let mut b = vec![0.0f32; n];
            if name.starts_with("lstm") {
                let h = n / 4;
                b[h..2 * h].fill(1.0);
            }
            b
        } else {
            // Agent rows are compared against features, so their fan-in is the row width.
            let fan_in = if name == "head.agents" { shape[1] } else { shape[0] };
            let bound = (1.0 / fan_in as f64).sqrt() as f32;
            let mut rng = param_rng(seed, name);
            (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
        };
        store.insert(name, Tensor::new(shape.to_vec(), data)?);
    }
    Ok(store)
}

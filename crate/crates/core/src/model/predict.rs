use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::config::ModelConfig;
use super::network::{Network, ParameterStore};
use super::ModelError;
use crate::autodiff::Chain;
use crate::seqio::{EncodedExample, RegionLabel, SpType, NUM_REGIONS, NUM_TYPES};

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Cosine similarities to the class agents, in `[-1, 1]`.
    pub type_logits: [f32; NUM_TYPES],
    pub type_probs: [f32; NUM_TYPES],
    /// One row per position (`seq_len` rows, padding included).
    pub region_probs: Vec<[f32; NUM_REGIONS]>,
    pub predicted_type: SpType,
    /// 1-based last signal residue; present iff the type is not `NO_SP`.
    pub predicted_cs: Option<usize>,
}

impl Prediction {
    pub fn type_prob(&self) -> f32 {
        self.type_probs[self.predicted_type.index()]
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Type by argmax; the cleavage site closes the run of signal or cleavage
/// argmax tags starting at position 1, within the first `length` positions.
/// A signal type with an empty run falls back to the position with the
/// largest cleavage posterior.
pub fn decode(type_probs: &[f32], region_probs: &[[f32; NUM_REGIONS]], length: usize) -> (SpType, Option<usize>) {
    let sp_type = SpType::from_index(argmax(type_probs)).expect("six type scores");
    if sp_type == SpType::NoSp {
        return (sp_type, None);
    }
    let length = length.min(region_probs.len()).max(1);
    let block = region_probs[..length]
        .iter()
        .take_while(|row| RegionLabel::ALL[argmax(&row[..])].in_signal_block())
        .count();
    if block > 0 {
        return (sp_type, Some(block));
    }
    let cleavage: Vec<f32> = region_probs[..length]
        .iter()
        .map(|r| r[RegionLabel::Cleavage.index()])
        .collect();
    (sp_type, Some(argmax(&cleavage) + 1))
}

/// Batched inference over frozen parameters.
pub struct Predictor {
    config: ModelConfig,
    params: ParameterStore,
    graphs: Mutex<HashMap<usize, Arc<Network>>>,
}

impl Predictor {
    pub fn new(config: ModelConfig, params: ParameterStore) -> Result<Self, ModelError> {
        params.check_shapes(&config)?;
        Ok(Self {
            config,
            params,
            graphs: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    /// For in-place updates; shapes must stay as declared by the config.
    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterStore {
        self.params
    }

    fn network(&self, batch: usize) -> Result<Arc<Network>, ModelError> {
        let mut cache = self.graphs.lock().expect("graph cache poisoned");
        if let Some(n) = cache.get(&batch) {
            return Ok(n.clone());
        }
        let n = Arc::new(Network::build(&self.config, batch)?);
        cache.insert(batch, n.clone());
        Ok(n)
    }

    pub fn predict_one(&self, example: &EncodedExample, embedding: Option<&[f32]>) -> Result<Prediction, ModelError> {
        Ok(self.predict(&[example], &[embedding])?.remove(0))
    }

    /// One prediction per example, in order.
    pub fn predict(
        &self,
        examples: &[&EncodedExample],
        embeddings: &[Option<&[f32]>],
    ) -> Result<Vec<Prediction>, ModelError> {
        if examples.is_empty() {
            return Ok(Vec::new());
        }
        let net = self.network(examples.len())?;
        let inputs = net.bind_inputs(examples, embeddings)?;
        let bindings = Chain(&inputs, &self.params);
        let session = net.graph.evaluate(&bindings)?;
        let logits = session.value(net.heads.type_logits).expect("evaluated");
        let probs = session.value(net.heads.type_probs).expect("evaluated");
        let regions = session.value(net.heads.region_probs).expect("evaluated");
        let bsz = examples.len();
        Ok(examples
            .iter()
            .enumerate()
            .map(|(b, ex)| {
                let mut type_logits = [0.0f32; NUM_TYPES];
                let mut type_probs = [0.0f32; NUM_TYPES];
                for k in 0..NUM_TYPES {
                    // Rounding can push a unit-vector dot product a hair past 1.
                    type_logits[k] = logits.at(b, k).clamp(-1.0, 1.0);
                    type_probs[k] = probs.at(b, k);
                }
                let region_probs: Vec<[f32; NUM_REGIONS]> = (0..ex.seq_len)
                    .map(|t| regions.row(t * bsz + b).try_into().expect("11 region scores"))
                    .collect();
                let (predicted_type, predicted_cs) = decode(&type_probs, &region_probs, ex.length);
                Prediction {
                    type_logits,
                    type_probs,
                    region_probs,
                    predicted_type,
                    predicted_cs,
                }
            })
            .collect())
    }
}

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, clip_global_norm, AdamState};
use super::split::{stratified_split, Split};
use super::{TrainConfig, TrainError};
use crate::autodiff::{Chain, Tensor};
use crate::embeddings::EmbeddingSource;
use crate::loss::{attach_joint_loss, bind_loss_inputs, LossConfig, LossNodes, MarginTable, Phase};
use crate::metrics::{evaluate, EvalRecord, MetricsReport};
use crate::model::{init_params, ModelError, Network, ParameterStore, Predictor};
use crate::seqio::{encode_record, AnnotatedRecord, ClassCounts, EncodedExample, OrganismGroup, SpType, NUM_TYPES};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean joint loss over the epoch's training examples.
    pub train_loss: f64,
    pub val_mcc: f64,
    pub lr: f64,
    pub phase: Phase,
    pub class_weights: [f64; NUM_TYPES],
    /// Joint loss of each batch, in visiting order.
    pub batch_losses: Vec<f64>,
}

impl EpochLog {
    pub const TSV_HEADER: &'static str = "epoch\ttrain_loss\tval_mcc\tlr\tschedule_phase";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{}\t{}",
            self.epoch,
            self.train_loss,
            self.val_mcc,
            self.lr,
            self.phase.name()
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_params: ParameterStore,
    /// 1-based epoch whose parameters are `best_params`.
    pub best_epoch: usize,
    pub best_val_mcc: f64,
    pub log: Vec<EpochLog>,
    pub split_hash: String,
}

impl TrainOutcome {
    pub fn log_tsv(&self) -> String {
        let mut s = format!("{}\n", EpochLog::TSV_HEADER);
        for e in &self.log {
            let _ = writeln!(s, "{}", e.tsv_row());
        }
        s
    }
}

struct Example {
    encoded: EncodedExample,
    embedding: Option<Vec<f32>>,
    group: OrganismGroup,
    sp_type: SpType,
}

/// Epoch-at-a-time training over a fixed split.
pub struct Trainer {
    config: TrainConfig,
    examples: Vec<Example>,
    split: Split,
    counts: ClassCounts,
    margins: MarginTable,
    predictor: Predictor,
    adam: AdamState,
    nets: HashMap<usize, (Network, LossNodes)>,
    shuffle_rng: ChaCha8Rng,
    log: Vec<EpochLog>,
    best: Option<(f64, usize, ParameterStore)>,
    /// Best MCC that reset patience (improved by at least `min_delta`).
    patience_ref: f64,
    since_improvement: usize,
    stopped: bool,
}

impl Trainer {
    /// Stratified validation split drawn from `config.seed`.
    pub fn new(
        records: &[AnnotatedRecord],
        embeddings: &EmbeddingSource,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        let types: Vec<SpType> = records.iter().map(|r| r.sp_type).collect();
        let split = stratified_split(&types, config.validation_fraction, config.seed);
        Self::with_split(records, embeddings, config, split)
    }

    /// Explicit partition; `train` and `val` may overlap.
    pub fn with_split(
        records: &[AnnotatedRecord],
        embeddings: &EmbeddingSource,
        mut config: TrainConfig,
        split: Split,
    ) -> Result<Self, TrainError> {
        config.model.logit_scale = config.loss.s;
        config.validate()?;
        if split.train.is_empty() {
            return Err(TrainError::EmptyTrainingSet);
        }
        if let Some(&i) = split.train.iter().chain(&split.val).find(|&&i| i >= records.len()) {
            return Err(TrainError::Config(format!("split index {i} out of range")));
        }
        if let Some(d) = embeddings.dim() {
            if d != config.model.embedding_dim {
                return Err(ModelError::EmbeddingDim {
                    expected: config.model.embedding_dim,
                    found: d,
                }
                .into());
            }
        }
        let seq_len = config.model.seq_len;
        let examples = records
            .iter()
            .map(|r| {
                let group = if config.use_groups {
                    r.group
                } else {
                    OrganismGroup::Unknown
                };
                Example {
                    encoded: encode_record(r, group, seq_len),
                    embedding: embeddings.lookup(&r.id),
                    group: r.group,
                    sp_type: r.sp_type,
                }
            })
            .collect::<Vec<_>>();
        let mut n = [0u64; NUM_TYPES];
        for &i in &split.train {
            n[examples[i].sp_type.index()] += 1;
        }
        for (k, c) in n.iter_mut().enumerate() {
            if *c == 0 {
                log::warn!(
                    "no training records of {}; its margin and weight use count 1",
                    SpType::ALL[k]
                );
                *c = 1;
            }
        }
        let counts = ClassCounts(n);
        let margins = config.loss.margins(&counts)?;
        let params = init_params(&config.model, config.seed)?;
        let predictor = Predictor::new(config.model.clone(), params)?;
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(1);
        Ok(Self {
            config,
            examples,
            split,
            counts,
            margins,
            predictor,
            adam: AdamState::default(),
            nets: HashMap::new(),
            shuffle_rng,
            log: Vec::new(),
            best: None,
            patience_ref: f64::NEG_INFINITY,
            since_improvement: 0,
            stopped: false,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// Training-split class counts, zeros raised to 1.
    pub fn counts(&self) -> &ClassCounts {
        &self.counts
    }

    pub fn params(&self) -> &ParameterStore {
        self.predictor.params()
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    /// True once early stopping fired or `max_epochs` ran.
    pub fn is_finished(&self) -> bool {
        self.stopped || self.log.len() >= self.config.max_epochs
    }

    fn network(&mut self, batch: usize) -> Result<(), TrainError> {
        if !self.nets.contains_key(&batch) {
            let mut net = Network::build(&self.config.model, batch)?;
            let nodes = attach_joint_loss(
                &mut net.graph,
                &net.heads,
                batch,
                self.config.model.seq_len,
                &self.config.loss,
            )?;
            self.nets.insert(batch, (net, nodes));
        }
        Ok(())
    }

    /// Forward and backward over one batch; returns the joint loss and gradients.
    fn batch_gradients(
        &mut self,
        idx: &[usize],
        weights: &[f64; NUM_TYPES],
    ) -> Result<(f64, std::collections::BTreeMap<String, Tensor<f32>>), TrainError> {
        self.network(idx.len())?;
        let (net, nodes) = &self.nets[&idx.len()];
        let exs: Vec<&EncodedExample> = idx.iter().map(|&i| &self.examples[i].encoded).collect();
        let embs: Vec<Option<&[f32]>> = idx.iter().map(|&i| self.examples[i].embedding.as_deref()).collect();
        let targets: Vec<_> = exs
            .iter()
            .map(|e| e.targets.as_ref().expect("encoded from annotated records"))
            .collect();
        let mut inputs = net.bind_inputs(&exs, &embs)?;
        inputs.extend(bind_loss_inputs::<f32>(&targets, &self.margins, weights));
        let bindings = Chain(&inputs, self.predictor.params());
        let session = net.graph.evaluate(&bindings)?;
        let loss = f64::from(session.scalar(nodes.total).expect("scalar loss"));
        let grads = session.backward_scalar(nodes.total)?;
        Ok((loss, grads.by_name))
    }

    /// One optimization step on the given training indices.
    pub fn step(&mut self, idx: &[usize], weights: &[f64; NUM_TYPES]) -> Result<f64, TrainError> {
        let (loss, mut grads) = self.batch_gradients(idx, weights)?;
        if let Some(c) = self.config.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        let (lr, wd) = (self.config.lr, self.config.weight_decay);
        adam_step(self.predictor.params_mut(), &grads, &mut self.adam, lr, wd)?;
        Ok(loss)
    }

    /// Predictions with the current parameters, one per index.
    pub fn eval_records(&self, idx: &[usize]) -> Result<Vec<EvalRecord>, TrainError> {
        eval_with(&self.predictor, &self.examples, idx, self.config.batch_size.max(1))
    }

    pub fn run_epoch(&mut self) -> Result<&EpochLog, TrainError> {
        let epoch = self.log.len();
        let loss_cfg = &self.config.loss;
        let phase = loss_cfg.phase(epoch, self.config.max_epochs);
        let weights = loss_cfg.class_weights(&self.counts, epoch, self.config.max_epochs)?;
        let mut order = self.split.train.clone();
        order.shuffle(&mut self.shuffle_rng);
        let mut batch_losses = Vec::new();
        let mut total = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let l = self.step(chunk, &weights)?;
            total += l * chunk.len() as f64;
            batch_losses.push(l);
        }
        let monitored = !self.split.val.is_empty();
        let val_mcc = if monitored {
            evaluate(&self.eval_records(&self.split.val)?).overall.mcc
        } else {
            0.0
        };
        let e = epoch + 1;
        // Without validation records the latest parameters are the best ones.
        if !monitored || self.best.as_ref().is_none_or(|b| val_mcc > b.0) {
            self.best = Some((val_mcc, e, self.predictor.params().clone()));
        }
        if monitored {
            if val_mcc > self.patience_ref + self.config.min_delta {
                self.patience_ref = val_mcc;
                self.since_improvement = 0;
            } else {
                self.since_improvement += 1;
                self.stopped = self.since_improvement >= self.config.patience;
            }
        }
        self.log.push(EpochLog {
            epoch: e,
            train_loss: total / order.len() as f64,
            val_mcc,
            lr: self.config.lr,
            phase,
            class_weights: weights,
            batch_losses,
        });
        Ok(self.log.last().expect("just pushed"))
    }

    /// Epochs until early stopping or `max_epochs`.
    pub fn train(mut self) -> Result<TrainOutcome, TrainError> {
        while !self.is_finished() {
            let e = self.run_epoch()?;
            log::info!("{}", e.tsv_row());
        }
        Ok(self.finish())
    }

    /// Best-by-validation parameters and the log so far.
    pub fn finish(self) -> TrainOutcome {
        let split_hash = self.split.hash();
        let (best_val_mcc, best_epoch, best_params) = match self.best {
            Some(b) => b,
            None => (f64::NAN, 0, self.predictor.into_params()),
        };
        TrainOutcome {
            best_params,
            best_epoch,
            best_val_mcc,
            log: self.log,
            split_hash,
        }
    }
}

fn eval_with(
    predictor: &Predictor,
    examples: &[Example],
    idx: &[usize],
    batch: usize,
) -> Result<Vec<EvalRecord>, TrainError> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch) {
        let exs: Vec<&EncodedExample> = chunk.iter().map(|&i| &examples[i].encoded).collect();
        let embs: Vec<Option<&[f32]>> = chunk.iter().map(|&i| examples[i].embedding.as_deref()).collect();
        for (p, &i) in predictor.predict(&exs, &embs)?.into_iter().zip(chunk) {
            let ex = &examples[i];
            let t = ex.encoded.targets.as_ref().expect("encoded from annotated records");
            out.push(EvalRecord {
                group: ex.group,
                gold_type: ex.sp_type,
                gold_cs: t.cs_position,
                pred_type: p.predicted_type,
                pred_cs: p.predicted_cs,
                type_probs: Some(p.type_probs),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub loss: LossConfig,
    pub split_hash: String,
    /// Best checkpoint scored on the validation split.
    pub report: MetricsReport,
    pub records: Vec<EvalRecord>,
    pub outcome: TrainOutcome,
}

/// Trains one model per loss config on the same split and seed, and scores
/// each best checkpoint on the validation records.
pub fn ablation_run(
    records: &[AnnotatedRecord],
    embeddings: &EmbeddingSource,
    base: &TrainConfig,
    losses: &[LossConfig],
) -> Result<Vec<AblationResult>, TrainError> {
    if losses.len() < 2 {
        return Err(TrainError::Config("an ablation needs at least two loss configs".into()));
    }
    let mut out = Vec::with_capacity(losses.len());
    for loss in losses {
        let config = TrainConfig {
            loss: loss.clone(),
            ..base.clone()
        };
        let mut trainer = Trainer::new(records, embeddings, config)?;
        while !trainer.is_finished() {
            trainer.run_epoch()?;
        }
        let val = trainer.split().val.clone();
        let recs = trainer.eval_params(trainer.best_params().expect("at least one epoch ran"), &val)?;
        let outcome = trainer.finish();
        out.push(AblationResult {
            loss: loss.clone(),
            split_hash: outcome.split_hash.clone(),
            report: evaluate(&recs),
            records: recs,
            outcome,
        });
    }
    Ok(out)
}

impl Trainer {
    /// Parameters of the best validation epoch so far.
    pub fn best_params(&self) -> Option<&ParameterStore> {
        self.best.as_ref().map(|b| &b.2)
    }

    /// Scores arbitrary parameters on the given indices.
    pub fn eval_params(&self, params: &ParameterStore, idx: &[usize]) -> Result<Vec<EvalRecord>, TrainError> {
        let predictor = Predictor::new(self.config.model.clone(), params.clone())?;
        eval_with(&predictor, &self.examples, idx, self.config.batch_size.max(1))
    }
}

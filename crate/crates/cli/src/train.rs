use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigpep_core::model::checkpoint_bytes;
use sigpep_core::seqio::{parse_annotated_fasta, AnnotatedRecord};
use sigpep_core::trainer::{TrainConfig, Trainer};

use crate::args::TrainArgs;
use crate::error::{input_error, CliResult, OrExit};
use crate::inputs::{self, EmbeddingSpec};

pub const SEED_ENV: &str = "SIGPEP_SEED";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "train_log.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to repeat a training run and check it was repeated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 of the resolved config JSON below.
    pub config_hash: String,
    pub config: TrainConfig,
    pub data: InputDigest,
    pub embeddings: EmbeddingSpec,
    /// Present for table embeddings.
    pub embeddings_sha256: Option<String>,
    pub split_hash: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mcc: f64,
    pub checkpoint_sha256: String,
}

pub fn config_hash(config: &TrainConfig) -> String {
    inputs::sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

fn read_config(path: &Path) -> CliResult<TrainConfig> {
    let reader = inputs::open(path)?;
    serde_json::from_reader(reader).or_input(format!("malformed config {}", path.display()))
}

/// `SIGPEP_SEED`, if set, replaces the config seed.
fn seed_override() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .or_input(format!("{SEED_ENV}={v} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).or_input(format!("cannot read {SEED_ENV}")),
    }
}

fn read_records(path: &Path) -> CliResult<Vec<AnnotatedRecord>> {
    parse_annotated_fasta(inputs::open(path)?).or_input(format!("malformed annotated data {}", path.display()))
}

fn embeddings_digest(spec: &EmbeddingSpec) -> CliResult<Option<String>> {
    match spec {
        EmbeddingSpec::Table { path } => inputs::file_sha256(path).map(Some),
        _ => Ok(None),
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub manifest: Manifest,
    pub checkpoint: PathBuf,
}

pub fn run(args: &TrainArgs) -> CliResult<TrainRun> {
    let (mut config, data, spec, expected) = match &args.from_manifest {
        Some(m) => {
            let manifest: Manifest =
                serde_json::from_reader(inputs::open(m)?).or_input(format!("malformed manifest {}", m.display()))?;
            let expected = Some((manifest.data.sha256.clone(), manifest.embeddings_sha256.clone()));
            (manifest.config, manifest.data.path, manifest.embeddings, expected)
        }
        None => {
            let config = read_config(args.config.as_deref().expect("required by clap"))?;
            let data = args.data.clone().expect("required by clap");
            (config, data, args.embeddings.spec(), None)
        }
    };
    if let Some(seed) = seed_override()? {
        config.seed = seed;
    }
    let data_sha = inputs::file_sha256(&data)?;
    let emb_sha = embeddings_digest(&spec)?;
    if let Some((want_data, want_emb)) = expected {
        if want_data != data_sha {
            return Err(input_error(format!(
                "{} changed since the manifest was written",
                data.display()
            )));
        }
        if want_emb != emb_sha {
            return Err(input_error("embedding table changed since the manifest was written"));
        }
    }
    let records = read_records(&data)?;
    let embeddings = spec.load(&config.model)?;
    inputs::create_dir(&args.out)?;

    let trainer = Trainer::new(&records, &embeddings, config).or_input("invalid training setup")?;
    let resolved = trainer.config().clone();
    log::info!(
        "training on {} records, validating on {}",
        trainer.split().train.len(),
        trainer.split().val.len()
    );
    let outcome = trainer.train().or_abort("training aborted")?;

    let ckpt = checkpoint_bytes(&resolved.model, &outcome.best_params);
    let checkpoint = args.out.join(CHECKPOINT_FILE);
    inputs::write_file(&checkpoint, &ckpt)?;
    inputs::write_file(&args.out.join(LOG_FILE), outcome.log_tsv().as_bytes())?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: resolved.seed,
        config_hash: config_hash(&resolved),
        config: resolved,
        data: InputDigest {
            path: data,
            sha256: data_sha,
        },
        embeddings: spec,
        embeddings_sha256: emb_sha,
        split_hash: outcome.split_hash.clone(),
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_val_mcc: outcome.best_val_mcc,
        checkpoint_sha256: inputs::sha256_hex(&ckpt),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    inputs::write_file(&args.out.join(MANIFEST_FILE), json.as_bytes())?;
    log::info!(
        "best epoch {} (validation MCC {:.4}) of {}",
        outcome.best_epoch,
        outcome.best_val_mcc,
        outcome.log.len()
    );
    Ok(TrainRun { manifest, checkpoint })
}

use std::io::{BufRead, Write};

use sigpep_core::embeddings::EmbeddingSource;
use sigpep_core::model::Predictor;
use sigpep_core::seqio::{FastaReader, ParseError};

use crate::args::PredictArgs;
use crate::batch::{predict_queries, prediction_line, Query};
use crate::error::{input_error, CliResult, OrExit};
use crate::inputs::{self, GroupMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PredictSummary {
    pub written: usize,
    /// Records skipped for a per-sequence problem.
    pub skipped: usize,
}

/// Streams `reader` through the model, writing one line per sequence.
pub fn predict_stream<R: BufRead, W: Write>(
    reader: R,
    mut out: W,
    predictor: &Predictor,
    embeddings: &EmbeddingSource,
    mode: GroupMode,
    batch_size: usize,
) -> CliResult<PredictSummary> {
    if batch_size == 0 {
        return Err(input_error("batch size must be positive"));
    }
    let mut summary = PredictSummary::default();
    let mut batch: Vec<Query> = Vec::with_capacity(batch_size);
    let mut flush = |batch: &mut Vec<Query>, summary: &mut PredictSummary| -> CliResult<()> {
        let preds = predict_queries(predictor, embeddings, batch).or_abort("prediction failed")?;
        for (q, p) in batch.iter().zip(&preds) {
            writeln!(out, "{}", prediction_line(&q.id, p)).or_input("cannot write predictions")?;
        }
        summary.written += batch.len();
        batch.clear();
        Ok(())
    };
    for item in FastaReader::new(reader) {
        match item {
            Ok(rec) => batch.push(Query::from_fasta(rec, mode)),
            Err(e @ (ParseError::EmptySequence { .. } | ParseError::IllegalCharacter { .. })) => {
                log::warn!("skipping record: {e}");
                summary.skipped += 1;
            }
            Err(e) => return Err(e).or_input("cannot parse FASTA input"),
        }
        if batch.len() == batch_size {
            flush(&mut batch, &mut summary)?;
        }
    }
    if !batch.is_empty() {
        flush(&mut batch, &mut summary)?;
    }
    Ok(summary)
}

pub fn run(args: &PredictArgs) -> CliResult<PredictSummary> {
    let predictor = inputs::load_predictor(&args.checkpoint)?;
    let embeddings = args.embeddings.spec().load(predictor.config())?;
    let reader = inputs::open(&args.fasta)?;
    let mode = args.groups.mode();
    let summary = match &args.out {
        Some(path) => {
            let mut w = inputs::create(path)?;
            let s = predict_stream(reader, &mut w, &predictor, &embeddings, mode, args.batch_size)?;
            w.flush().or_input(format!("cannot write {}", path.display()))?;
            s
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = std::io::BufWriter::new(stdout.lock());
            let s = predict_stream(reader, &mut w, &predictor, &embeddings, mode, args.batch_size)?;
            w.flush().or_input("cannot write to standard output")?;
            s
        }
    };
    log::info!(
        "{} predictions written, {} records skipped",
        summary.written,
        summary.skipped
    );
    Ok(summary)
}

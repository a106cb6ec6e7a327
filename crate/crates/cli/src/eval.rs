use std::fmt::Write as _;

use sigpep_core::metrics::{evaluate, score_label_pairs, EvalRecord, MetricsReport};
use sigpep_core::seqio::{encode_record, parse_annotated_fasta, EncodedExample, OrganismGroup, SpType};

use crate::args::EvalArgs;
use crate::error::{input_error, CliResult, OrExit};
use crate::inputs;

pub const METRICS_FILE: &str = "metrics.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const SCORES_FILE: &str = "scores.tsv";

/// `type, id, score, label`: the probability of each signal type and
/// whether it is the gold type, for external curve plotting.
fn scores_tsv(ids: &[String], records: &[EvalRecord]) -> String {
    let mut s = String::from("type\tid\tscore\tlabel\n");
    for t in SpType::ALL {
        for (id, (score, label)) in ids.iter().zip(score_label_pairs(records, t)) {
            let _ = writeln!(s, "{}\t{id}\t{score}\t{}", t.name(), u8::from(label));
        }
    }
    s
}

pub fn run(args: &EvalArgs) -> CliResult<MetricsReport> {
    if args.batch_size == 0 {
        return Err(input_error("batch size must be positive"));
    }
    let predictor = inputs::load_predictor(&args.checkpoint)?;
    let embeddings = args.embeddings.spec().load(predictor.config())?;
    let records = parse_annotated_fasta(inputs::open(&args.data)?)
        .or_input(format!("malformed annotated data {}", args.data.display()))?;
    let seq_len = predictor.config().seq_len;
    let mut evals = Vec::with_capacity(records.len());
    for chunk in records.chunks(args.batch_size) {
        let encoded: Vec<EncodedExample> = chunk
            .iter()
            .map(|r| {
                let g = if args.no_group { OrganismGroup::Unknown } else { r.group };
                encode_record(r, g, seq_len)
            })
            .collect();
        let vectors: Vec<Option<Vec<f32>>> = chunk.iter().map(|r| embeddings.lookup(&r.id)).collect();
        let exs: Vec<&EncodedExample> = encoded.iter().collect();
        let embs: Vec<Option<&[f32]>> = vectors.iter().map(Option::as_deref).collect();
        let preds = predictor.predict(&exs, &embs).or_abort("prediction failed")?;
        for ((r, ex), p) in chunk.iter().zip(&encoded).zip(preds) {
            evals.push(EvalRecord {
                group: r.group,
                gold_type: r.sp_type,
                gold_cs: ex.targets.as_ref().and_then(|t| t.cs_position),
                pred_type: p.predicted_type,
                pred_cs: p.predicted_cs,
                type_probs: Some(p.type_probs),
            });
        }
    }
    let report = evaluate(&evals);
    inputs::create_dir(&args.out)?;
    inputs::write_file(&args.out.join(METRICS_FILE), report.to_tsv().as_bytes())?;
    inputs::write_file(&args.out.join(SUMMARY_FILE), report.to_metric_lines().as_bytes())?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    inputs::write_file(&args.out.join(SCORES_FILE), scores_tsv(&ids, &evals).as_bytes())?;
    let o = &report.overall;
    log::info!(
        "{} records: MCC {:.4}, kappa {:.4}, balanced accuracy {:.4}",
        o.n,
        o.mcc,
        o.kappa,
        o.balanced_accuracy
    );
    Ok(report)
}

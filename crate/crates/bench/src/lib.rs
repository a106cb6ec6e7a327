//! Shared inputs for the benchmarks.

use sigpep_core::embeddings::stub_embedding;
use sigpep_core::seqio::{encode_record, EncodedExample};
use sigpep_core::synth::motif_dataset;
use sigpep_core::SpType;

/// Encoded motif proteins of mixed types and their stub embeddings.
pub fn encoded_batch(n: usize, seq_len: usize, dim: usize) -> (Vec<EncodedExample>, Vec<Vec<f32>>) {
    let per_type = n.div_ceil(SpType::SIGNAL.len() + 1);
    let mut spec = vec![(SpType::NoSp, per_type)];
    spec.extend(SpType::SIGNAL.iter().map(|&t| (t, per_type)));
    let records = motif_dataset(&spec, 17);
    let records = &records[..n];
    let encoded = records.iter().map(|r| encode_record(r, r.group, seq_len)).collect();
    let embeddings = records.iter().map(|r| stub_embedding(&r.id, dim, 17)).collect();
    (encoded, embeddings)
}

//! Batched inference over plain sequences.

use std::fmt::Write as _;

use sigpep_core::embeddings::EmbeddingSource;
use sigpep_core::model::{ModelError, Prediction, Predictor};
use sigpep_core::seqio::{encode_sequence, EncodedExample, FastaRecord, OrganismGroup, SpType};

use crate::inputs::{split_header_id, GroupMode};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    /// Group named in the header, if any.
    pub header_group: Option<OrganismGroup>,
    /// Group fed to the model.
    pub group: OrganismGroup,
    pub sequence: String,
}

impl Query {
    pub fn from_fasta(record: FastaRecord, mode: GroupMode) -> Self {
        let (id, header_group) = split_header_id(&record.id);
        Query {
            id: id.to_string(),
            header_group,
            group: mode.resolve(header_group),
            sequence: record.sequence,
        }
    }
}

/// Predictions for `queries`, in order.
pub fn predict_queries(
    predictor: &Predictor,
    embeddings: &EmbeddingSource,
    queries: &[Query],
) -> Result<Vec<Prediction>, ModelError> {
    let seq_len = predictor.config().seq_len;
    let encoded: Vec<EncodedExample> = queries
        .iter()
        .map(|q| encode_sequence(&q.sequence, q.group, seq_len))
        .collect();
    let vectors: Vec<Option<Vec<f32>>> = queries.iter().map(|q| embeddings.lookup(&q.id)).collect();
    let exs: Vec<&EncodedExample> = encoded.iter().collect();
    let embs: Vec<Option<&[f32]>> = vectors.iter().map(Option::as_deref).collect();
    predictor.predict(&exs, &embs)
}

/// `id, type, cs, p(type), p(NO_SP) … p(TAT_SPII)`; `cs` is `-` without a
/// signal peptide.
pub fn prediction_line(id: &str, p: &Prediction) -> String {
    let mut s = format!(
        "{id}\t{}\t{}\t{}",
        p.predicted_type.name(),
        p.predicted_cs.map_or_else(|| "-".to_string(), |c| c.to_string()),
        p.type_prob()
    );
    for q in p.type_probs {
        let _ = write!(s, "\t{q}");
    }
    s
}

/// Column names of [`prediction_line`].
pub fn prediction_columns() -> String {
    let mut s = String::from("id\ttype\tcs\tp_type");
    for t in SpType::ALL {
        let _ = write!(s, "\tp_{}", t.name());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_sp_line_has_dash_for_cs() {
        let mut type_probs = [0.0f32; 6];
        type_probs[0] = 0.75;
        type_probs[1] = 0.25;
        let p = Prediction {
            type_logits: [0.0; 6],
            type_probs,
            region_probs: vec![],
            predicted_type: SpType::NoSp,
            predicted_cs: None,
        };
        assert_eq!(prediction_line("q", &p), "q\tNO_SP\t-\t0.75\t0.75\t0.25\t0\t0\t0\t0");
        assert_eq!(
            prediction_columns().split('\t').count(),
            prediction_line("q", &p).split('\t').count()
        );
    }

    #[test]
    fn header_groups() {
        assert_eq!(split_header_id("P1|ARCHAEA"), ("P1", Some(OrganismGroup::Archaea)));
        assert_eq!(
            split_header_id("P1|ARCHAEA|SEC_SPI|0"),
            ("P1", Some(OrganismGroup::Archaea))
        );
        assert_eq!(split_header_id("sp|P12345|NAME_HUMAN"), ("sp|P12345|NAME_HUMAN", None));
        assert_eq!(split_header_id("plain"), ("plain", None));
    }
}

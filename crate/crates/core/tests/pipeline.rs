//! Generate, serialize, train, checkpoint, reload, predict and score.

use sigpep_core::embeddings::{stub_embedding, EmbeddingSource};
use sigpep_core::metrics::{evaluate, EvalRecord};
use sigpep_core::model::{load_checkpoint, save_checkpoint};
use sigpep_core::seqio::{encode_sequence, parse_annotated_fasta, write_annotated_fasta};
use sigpep_core::synth::{motif_dataset, OVERFIT_SPEC};
use sigpep_core::{ModelConfig, Predictor, SpType, TrainConfig, Trainer};

fn small_model() -> ModelConfig {
    ModelConfig {
        fc1_units: 12,
        cnn_channels: [16, 32],
        lstm1_hidden: 8,
        heads: 2,
        d_k: 8,
        lstm2_hidden: 8,
        cs_head_widths: [16, 16],
        type_reduce: 16,
        embed_adapter: [8, 4],
        fuse_units: 8,
        embedding_dim: 16,
        ..ModelConfig::default()
    }
}

#[test]
fn trained_checkpoint_reloads_and_scores_consistently() {
    let mut text = Vec::new();
    write_annotated_fasta(&mut text, &motif_dataset(&OVERFIT_SPEC, 5)).unwrap();
    let records = parse_annotated_fasta(&text[..]).unwrap();
    let config = TrainConfig {
        max_epochs: 3,
        batch_size: 8,
        seed: 5,
        model: small_model(),
        ..TrainConfig::default()
    };
    let embeddings = EmbeddingSource::Stub { dim: 16, seed: 5 };
    let outcome = Trainer::new(&records, &embeddings, config.clone())
        .unwrap()
        .train()
        .unwrap();
    assert_eq!(outcome.log.len(), 3);
    assert!(outcome.log.iter().all(|e| e.train_loss.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let mut model = config.model.clone();
    model.logit_scale = config.loss.s;
    save_checkpoint(&path, &model, &outcome.best_params).unwrap();
    let (loaded_config, loaded_params) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded_config, model);
    let predictor = Predictor::new(loaded_config, loaded_params).unwrap();

    let evals: Vec<EvalRecord> = records
        .iter()
        .map(|r| {
            let ex = encode_sequence(&r.sequence, r.group, model.seq_len);
            let emb = stub_embedding(&r.id, 16, 5);
            let p = predictor.predict_one(&ex, Some(&emb)).unwrap();
            assert!((p.type_probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            assert_eq!(p.predicted_cs.is_some(), p.predicted_type != SpType::NoSp);
            EvalRecord {
                group: r.group,
                gold_type: r.sp_type,
                gold_cs: r.cs_position,
                pred_type: p.predicted_type,
                pred_cs: p.predicted_cs,
                type_probs: Some(p.type_probs),
            }
        })
        .collect();
    let report = evaluate(&evals);
    assert_eq!(report.overall.n, records.len() as u64);
    assert!((-1.0..=1.0).contains(&report.overall.mcc));
}

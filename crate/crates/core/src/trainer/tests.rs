use std::collections::BTreeMap;

use super::*;
use crate::autodiff::Tensor;
use crate::embeddings::EmbeddingSource;
use crate::loss::{Baseline, Schedule};
use crate::model::ParameterStore;
use crate::seqio::SpType;
use crate::synth::{motif_dataset, OVERFIT_SPEC};

pub(crate) fn small_model() -> ModelConfig {
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

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 5,
        batch_size: 16,
        seed,
        validation_fraction: 0.25,
        model: small_model(),
        ..TrainConfig::default()
    }
}

fn scalar_store(v: f32) -> ParameterStore {
    let mut p = ParameterStore::default();
    p.insert("theta", Tensor::new(vec![1], vec![v]).unwrap());
    p
}

fn grads(g: f32) -> BTreeMap<String, Tensor<f32>> {
    BTreeMap::from([("theta".to_string(), Tensor::new(vec![1], vec![g]).unwrap())])
}

fn theta(p: &ParameterStore) -> f32 {
    p.get("theta").unwrap().data()[0]
}

#[test]
fn adam_fixed_point_and_decay() {
    let mut p = scalar_store(0.7);
    let mut s = AdamState::default();
    adam_step(&mut p, &grads(0.0), &mut s, 2e-3, 0.0).unwrap();
    assert_eq!(theta(&p), 0.7);

    let mut p = scalar_store(0.7);
    adam_step(&mut p, &grads(0.0), &mut AdamState::default(), 2e-3, 1e-3).unwrap();
    assert_eq!(theta(&p), 0.7 * (1.0 - 2e-3 * 1e-3) as f32);

    // lr = 0 freezes parameters whatever the gradient.
    let mut p = scalar_store(0.7);
    adam_step(&mut p, &grads(3.0), &mut AdamState::default(), 0.0, 1e-3).unwrap();
    assert_eq!(theta(&p), 0.7);
}

#[test]
fn adam_first_step_closed_form() {
    let mut p = scalar_store(1.0);
    let mut s = AdamState::default();
    adam_step(&mut p, &grads(1.0), &mut s, 2e-3, 0.0).unwrap();
    // m = 0.1, v = 0.001; bias correction gives m̂ = v̂ = 1.
    let want = 1.0 - 2e-3 * 1.0 / (1.0 + 1e-8);
    assert!((f64::from(theta(&p)) - want).abs() < 1e-7);
    assert_eq!(s.step, 1);
    assert!((s.m["theta"][0] - 0.1).abs() < 1e-7);
    // f32 moments: 1 − β₂ rounds to 0.00100004673.
    assert!((s.v["theta"][0] - 0.001).abs() < 1e-7);
}

#[test]
fn adam_descends_a_quadratic() {
    // f(θ) = Σ (θ − c)², gradient 2(θ − c).
    let c = [1.5f32, -0.3, 0.8];
    let mut p = ParameterStore::default();
    p.insert("theta", Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap());
    let f = |p: &ParameterStore| -> f32 {
        p.get("theta")
            .unwrap()
            .data()
            .iter()
            .zip(&c)
            .map(|(x, c)| (x - c).powi(2))
            .sum()
    };
    let mut s = AdamState::default();
    let mut prev = f(&p);
    for _ in 0..20 {
        let g: Vec<f32> = p
            .get("theta")
            .unwrap()
            .data()
            .iter()
            .zip(&c)
            .map(|(x, c)| 2.0 * (x - c))
            .collect();
        let g = BTreeMap::from([("theta".to_string(), Tensor::new(vec![3], g).unwrap())]);
        adam_step(&mut p, &g, &mut s, 0.05, 0.0).unwrap();
        let now = f(&p);
        assert!(now < prev);
        prev = now;
    }
}

#[test]
fn adam_rejects_non_finite_without_touching_state() {
    let mut p = scalar_store(0.5);
    let mut s = AdamState::default();
    let err = adam_step(&mut p, &grads(f32::NAN), &mut s, 1e-3, 1e-3).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteGradient { ref param, step: 1 } if param == "theta"));
    assert_eq!(theta(&p), 0.5);
    assert_eq!(s, AdamState::default());
}

#[test]
fn clipping_bounds_the_global_norm() {
    let mut g = BTreeMap::from([
        ("a".to_string(), Tensor::new(vec![2], vec![3.0f32, 0.0]).unwrap()),
        ("b".to_string(), Tensor::new(vec![1], vec![4.0f32]).unwrap()),
    ]);
    assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
    assert_eq!(g["b"].data(), &[4.0]);
    assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
    assert!((g["a"].data()[0] - 0.6).abs() < 1e-7 && (g["b"].data()[0] - 0.8).abs() < 1e-7);
}

#[test]
fn split_is_stratified_and_deterministic() {
    let types: Vec<SpType> = (0..200)
        .map(|i| match i % 20 {
            0 => SpType::TatSpi,
            1..=5 => SpType::SecSpi,
            _ => SpType::NoSp,
        })
        .collect();
    let a = stratified_split(&types, 0.1, 7);
    assert_eq!(a, stratified_split(&types, 0.1, 7));
    assert_eq!(a.hash(), stratified_split(&types, 0.1, 7).hash());
    assert_ne!(a.hash(), stratified_split(&types, 0.1, 8).hash());
    assert_eq!(a.val.len(), 1 + 5 + 14);
    let count = |idx: &[usize], t: SpType| idx.iter().filter(|&&i| types[i] == t).count();
    assert_eq!(count(&a.val, SpType::TatSpi), 1);
    assert_eq!(count(&a.val, SpType::SecSpi), 5);
    let mut all: Vec<usize> = a.train.iter().chain(&a.val).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..200).collect::<Vec<_>>());
    // A singleton class stays in training.
    let s = stratified_split(&[SpType::NoSp, SpType::NoSp, SpType::TatSpii], 0.5, 1);
    assert_eq!(s.train.iter().filter(|&&i| i == 2).count(), 1);
}

#[test]
fn config_json_and_validation() {
    let c: TrainConfig = serde_json::from_str(r#"{"batch_size": 8, "loss": {"baseline": "FOCAL"}}"#).unwrap();
    assert_eq!(c.batch_size, 8);
    assert_eq!(c.lr, 2e-3);
    assert_eq!(c.loss.baseline, Baseline::Focal);
    c.validate().unwrap();
    for bad in [
        TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
    }
}

fn toy() -> Vec<crate::seqio::AnnotatedRecord> {
    motif_dataset(&OVERFIT_SPEC, 1)
}

fn stub() -> EmbeddingSource {
    EmbeddingSource::Stub { dim: 16, seed: 5 }
}

#[test]
fn toy_training_loss_decreases_over_first_five_epochs() {
    let recs = toy();
    let config = TrainConfig {
        batch_size: 32,
        ..small_config(1)
    };
    let all: Vec<usize> = (0..recs.len()).collect();
    let split = Split {
        train: all.clone(),
        val: all,
    };
    let mut t = Trainer::with_split(&recs, &stub(), config, split).unwrap();
    let mut losses = vec![];
    for _ in 0..5 {
        losses.push(t.run_epoch().unwrap().train_loss);
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn training_is_reproducible() {
    let recs = toy();
    let run = || {
        Trainer::new(
            &recs,
            &stub(),
            TrainConfig {
                max_epochs: 3,
                ..small_config(11)
            },
        )
        .unwrap()
        .train()
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(a.best_params, b.best_params);
    assert_eq!(a.log_tsv(), b.log_tsv());
    assert!(a
        .log_tsv()
        .starts_with("epoch\ttrain_loss\tval_mcc\tlr\tschedule_phase\n1\t"));
    let c = Trainer::new(
        &recs,
        &stub(),
        TrainConfig {
            max_epochs: 3,
            ..small_config(12)
        },
    )
    .unwrap()
    .train()
    .unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn patience_one_without_improvement_stops_after_two_epochs() {
    let recs = toy();
    let config = TrainConfig {
        lr: 1e-30,
        weight_decay: 0.0,
        patience: 1,
        max_epochs: 50,
        ..small_config(2)
    };
    let out = Trainer::new(&recs, &stub(), config).unwrap().train().unwrap();
    assert_eq!(out.log.len(), 2);
    assert_eq!(out.log[0].val_mcc, out.log[1].val_mcc);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn best_checkpoint_is_never_worse_than_an_earlier_epoch() {
    let recs = toy();
    let out = Trainer::new(
        &recs,
        &stub(),
        TrainConfig {
            max_epochs: 6,
            ..small_config(4)
        },
    )
    .unwrap()
    .train()
    .unwrap();
    let max = out.log.iter().map(|e| e.val_mcc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_val_mcc, max);
    assert_eq!(out.log[out.best_epoch - 1].val_mcc, max);
}

#[test]
fn ablations_share_splits_and_reduce_as_expected() {
    let recs = motif_dataset(&[(SpType::NoSp, 12), (SpType::SecSpi, 8), (SpType::TatSpi, 4)], 2);
    let base = TrainConfig {
        max_epochs: 2,
        ..small_config(6)
    };
    let ce = LossConfig::with_baseline(Baseline::Ce);
    let focal0 = LossConfig {
        gamma_focal: 0.0,
        ..LossConfig::with_baseline(Baseline::Focal)
    };
    let res = ablation_run(&recs, &stub(), &base, &[ce.clone(), LossConfig::default(), focal0]).unwrap();
    assert_eq!(res.len(), 3);
    assert!(res.iter().all(|r| r.split_hash == res[0].split_hash));
    let (ce_log, f_log) = (&res[0].outcome.log, &res[2].outcome.log);
    for (a, b) in ce_log.iter().zip(f_log) {
        for (x, y) in a.batch_losses.iter().zip(&b.batch_losses) {
            assert!((x - y).abs() < 1e-6);
        }
    }
    assert!(ablation_run(&recs, &stub(), &base, &[ce]).is_err());
}

#[test]
fn deferred_schedule_diverges_only_after_the_switch() {
    let recs = motif_dataset(&[(SpType::NoSp, 12), (SpType::SecSpi, 8), (SpType::TatSpi, 4)], 2);
    let base = TrainConfig {
        max_epochs: 5,
        patience: 10,
        ..small_config(8)
    };
    let none = LossConfig {
        schedule: Schedule::None,
        ..LossConfig::default()
    };
    let deferred = LossConfig {
        schedule: Schedule::DeferredRw,
        ..LossConfig::default()
    };
    let res = ablation_run(&recs, &stub(), &base, &[none, deferred.clone()]).unwrap();
    let switch = deferred.switch_epoch(5);
    assert_eq!(switch, 3);
    let (a, b) = (&res[0].outcome.log, &res[1].outcome.log);
    for e in 0..5 {
        if e < switch {
            assert_eq!(a[e], b[e], "epoch {e}");
        } else {
            assert_ne!(a[e].class_weights, b[e].class_weights);
            assert_eq!(b[e].phase.name(), "class_balanced");
        }
    }
    assert_ne!(a[switch].train_loss, b[switch].train_loss);
}

#[test]
fn without_validation_the_latest_epoch_is_kept_and_never_stops_early() {
    let recs = toy();
    let config = TrainConfig {
        max_epochs: 4,
        patience: 1,
        ..small_config(3)
    };
    let split = Split {
        train: (0..recs.len()).collect(),
        val: vec![],
    };
    let mut t = Trainer::with_split(&recs, &stub(), config, split).unwrap();
    while !t.is_finished() {
        t.run_epoch().unwrap();
    }
    assert_eq!(t.best_params().unwrap(), t.params());
    let out = t.finish();
    assert_eq!((out.log.len(), out.best_epoch), (4, 4));
}

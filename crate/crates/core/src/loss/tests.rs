use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradcheck::DEFAULT_STEP;
use crate::autodiff::{finite_difference_gradient, max_relative_error, Chain, Graph, Tensor};
use crate::model::tests::tiny_config;
use crate::model::{Heads, Network};
use crate::seqio::reference::training_counts;
use crate::seqio::{encode_sequence, OrganismGroup, RegionLabel, SpType};

const LN6: f64 = 1.791_759_469_228_055;

fn counts(n: [u64; 6]) -> ClassCounts {
    ClassCounts(n)
}

#[test]
fn margin_examples() {
    let m = ldam_margins(&counts([16; 6]), 1.0).unwrap();
    assert_eq!(m.0, [0.5; 6]);
    let m = ldam_margins(&counts([1; 6]), 0.3).unwrap();
    assert_eq!(m.0, [0.3; 6]);
}

#[test]
fn rarest_training_class_gets_largest_margin() {
    let n = training_counts();
    let m = ldam_margins(&n, 1.0).unwrap();
    let largest = (0..6).max_by(|&a, &b| m.0[a].total_cmp(&m.0[b])).unwrap();
    assert_eq!(SpType::ALL[largest], SpType::TatSpii);
    for j in 0..6 {
        let direct = 1.0 / (n.0[j] as f64).sqrt().sqrt();
        assert!((m.0[j] - direct).abs() < 1e-12);
    }
}

#[test]
fn auto_constant_caps_the_largest_margin() {
    let n = training_counts();
    let c = auto_margin_constant(&n, 0.5).unwrap();
    let m = ldam_margins(&n, c).unwrap();
    let max = m.0.iter().copied().fold(0.0, f64::max);
    assert!((max - 0.5).abs() < 1e-12);
    let via_config = LossConfig::default().margins(&n).unwrap();
    assert_eq!(via_config, m);
}

#[test]
fn zero_count_is_rejected() {
    assert_eq!(
        ldam_margins(&counts([5, 0, 1, 1, 1, 1]), 1.0),
        Err(LossError::ZeroCountClass("SEC_SPI"))
    );
    assert!(cb_weights(&counts([5, 1, 1, 1, 1, 0]), 0.9).is_err());
}

#[test]
fn cb_weight_examples() {
    assert_eq!(cb_weights(&counts([1000, 10, 3, 7, 1, 2]), 0.0).unwrap(), [1.0; 6]);
    for beta in [0.0, 0.5, 0.9999] {
        let w = cb_weights(&counts([42; 6]), beta).unwrap();
        for x in w {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }
    let w = cb_weights(&counts([1000, 10, 10, 10, 10, 10]), 0.999).unwrap();
    // (1-β)/(1-β^n) evaluated directly.
    let raw = |n: f64| 0.001 / (1.0 - 0.999f64.powf(n));
    assert!(raw(10.0) > raw(1000.0));
    assert!(w[1] > w[0]);
    assert!((w[1] / w[0] - raw(10.0) / raw(1000.0)).abs() < 1e-9);
    let mean = w.iter().sum::<f64>() / 6.0;
    assert!((mean - 1.0).abs() < 1e-12);
}

#[test]
fn symmetric_logits_give_ln6() {
    let margins = MarginTable([0.1, 0.2, 0.3, 0.05, 0.4, 0.25]);
    let y = 2;
    let mut z = [0.3; 6];
    z[y] = 0.3 + margins.0[y];
    let v = ldam_loss(&z, y, &margins, 0.0625, &[1.0; 6]);
    assert!((v - LN6).abs() < 1e-9, "{v}");
}

#[test]
fn straight_line_ldam_value() {
    let z = [0.9, -0.5, 0.1, 0.3, -0.2, 0.7];
    let (y, d, s) = (0, 0.2, 0.0625);
    let margins = MarginTable([d, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let num = ((0.9 - d) / s).exp();
    let rest: f64 = [-0.5f64, 0.1, 0.3, -0.2, 0.7].iter().map(|v| (v / s).exp()).sum();
    let oracle = -(num / (num + rest)).ln();
    let v = ldam_loss(&z, y, &margins, s, &[1.0; 6]);
    assert!((v - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{v} vs {oracle}");
}

#[test]
fn baseline_examples() {
    let ce = LossConfig {
        s: 1.0,
        ..LossConfig::with_baseline(Baseline::Ce)
    };
    assert!((baseline_loss(&[0.2; 6], 4, &ce).unwrap() - LN6).abs() < 1e-12);

    let z = [-1.0, 0.4, 0.9, 0.0, 0.3, -0.6];
    let focal0 = LossConfig {
        gamma_focal: 0.0,
        ..LossConfig::with_baseline(Baseline::Focal)
    };
    let ce_default = LossConfig::with_baseline(Baseline::Ce);
    assert_eq!(
        baseline_loss(&z, 1, &focal0).unwrap(),
        baseline_loss(&z, 1, &ce_default).unwrap()
    );

    // p_y = 0.9 exactly: gold logit ln 0.9, five others ln 0.02.
    let mut zp = [0.02f64.ln(); 6];
    zp[3] = 0.9f64.ln();
    let focal2 = LossConfig {
        s: 1.0,
        gamma_focal: 2.0,
        ..LossConfig::with_baseline(Baseline::Focal)
    };
    let want = 0.01 * -(0.9f64.ln());
    assert!((baseline_loss(&zp, 3, &focal2).unwrap() - want).abs() < 1e-12);

    let rw = LossConfig::with_baseline(Baseline::CeReweighted);
    assert_eq!(baseline_loss(&z, 0, &rw), Err(LossError::MissingManualWeights));
    assert_eq!(rw.validate(), Err(LossError::MissingManualWeights));
    let rw = LossConfig {
        manual_weights: Some([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        ..rw
    };
    let plain = baseline_loss(&z, 2, &ce_default).unwrap();
    assert!((baseline_loss(&z, 2, &rw).unwrap() - 3.0 * plain).abs() < 1e-12);
}

#[test]
fn schedules_pick_weights() {
    let n = counts([1000, 50, 40, 30, 20, 10]);
    let cb = cb_weights(&n, 0.9999).unwrap();
    let from_start = LossConfig::default();
    assert_eq!(from_start.class_weights(&n, 0, 100).unwrap(), cb);
    let deferred = LossConfig {
        schedule: Schedule::DeferredRw,
        ..LossConfig::default()
    };
    assert_eq!(deferred.switch_epoch(100), 60);
    assert_eq!(deferred.class_weights(&n, 59, 100).unwrap(), [1.0; 6]);
    assert_eq!(deferred.phase(59, 100), Phase::Uniform);
    assert_eq!(deferred.class_weights(&n, 60, 100).unwrap(), cb);
    assert_eq!(deferred.phase(60, 100), Phase::ClassBalanced);
    let none = LossConfig {
        schedule: Schedule::None,
        ..LossConfig::default()
    };
    assert_eq!(none.class_weights(&n, 99, 100).unwrap(), [1.0; 6]);
    // Margins stay on under every schedule; only baselines drop them.
    assert_ne!(none.margins(&n).unwrap(), MarginTable::zero());
    assert_eq!(
        LossConfig::with_baseline(Baseline::Focal).margins(&n).unwrap(),
        MarginTable::zero()
    );
}

#[test]
fn config_validation_and_json_names() {
    LossConfig::default().validate().unwrap();
    for bad in [
        LossConfig {
            c: Some(0.0),
            ..LossConfig::default()
        },
        LossConfig {
            s: -1.0,
            ..LossConfig::default()
        },
        LossConfig {
            beta: 1.0,
            ..LossConfig::default()
        },
        LossConfig {
            tau: -0.1,
            ..LossConfig::default()
        },
    ] {
        assert!(matches!(bad.validate(), Err(LossError::InvalidConfig(_))), "{bad:?}");
    }
    let json = r#"{"schedule": "DEFERRED_RW", "baseline": "CE_REWEIGHTED", "manual_weights": [1,1,1,1,1,2], "c": 0.3}"#;
    let cfg: LossConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg.schedule, Schedule::DeferredRw);
    assert_eq!(cfg.baseline, Baseline::CeReweighted);
    assert_eq!(cfg.c, Some(0.3));
    assert_eq!(cfg.s, 0.0625);
    let back: LossConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert!(serde_json::from_str::<LossConfig>(r#"{"gamma": 1}"#).is_err());
}

fn targets(sp: SpType, tags: &[RegionLabel]) -> Targets {
    Targets {
        sp_type: sp,
        regions: tags.to_vec(),
        cs_position: None,
    }
}

#[test]
fn joint_loss_is_the_sum_of_its_terms() {
    use RegionLabel::*;
    let t = [
        targets(SpType::SecSpi, &[SigSpi, SigSpi, Cleavage, Extra, Pad]),
        targets(SpType::NoSp, &[Globular, Globular, Globular, Pad, Pad]),
    ];
    let refs: Vec<&Targets> = t.iter().collect();
    let z = [[0.1, 0.8, -0.3, 0.0, 0.2, -0.9], [0.5, -0.1, 0.2, 0.0, 0.3, 0.1]];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probs: Vec<Vec<[f64; 11]>> = (0..2)
        .map(|_| {
            (0..5)
                .map(|_| {
                    let mut r = [0.0; 11];
                    r.iter_mut().for_each(|v| *v = rng.gen_range(0.01..1.0));
                    let s: f64 = r.iter().sum();
                    r.map(|v| v / s)
                })
                .collect()
        })
        .collect();
    let cfg = LossConfig::default();
    let n = counts([100, 30, 20, 10, 5, 2]);
    let (m, w) = (cfg.margins(&n).unwrap(), cfg.class_weights(&n, 0, 10).unwrap());
    let j = joint_loss(&z, &probs, &refs, &cfg, &m, &w).unwrap();

    let ls = (ldam_loss(&z[0], 1, &m, cfg.s, &w) + ldam_loss(&z[1], 0, &m, cfg.s, &w)) / 2.0;
    let mut lc = 0.0;
    for b in 0..2 {
        for p in 0..5 {
            lc -= probs[b][p][t[b].regions[p].index()].ln();
        }
    }
    lc /= 10.0;
    assert!((j.type_loss - ls).abs() < 1e-12);
    assert!((j.cs_loss - lc).abs() < 1e-12);
    assert!((j.total - (ls + lc)).abs() < 1e-12);

    let tau0 = LossConfig {
        tau: 0.0,
        ..cfg.clone()
    };
    assert_eq!(joint_loss(&z, &probs, &refs, &tau0, &m, &w).unwrap().total, j.type_loss);
    assert_eq!(joint_loss(&[], &[], &[], &cfg, &m, &w), Err(LossError::EmptyBatch));
}

/// Loss graph over free parameters standing in for the two heads.
fn head_graph(batch: usize, seq_len: usize, cfg: &LossConfig) -> (Graph, LossNodes) {
    let mut g = Graph::new();
    let raw = g.param("z", [batch, 6]).unwrap();
    // tanh keeps the stand-in logits inside [-1, 1] like real cosines.
    let type_logits = g.tanh(raw);
    let type_probs = g.softmax_rows(type_logits).unwrap();
    let r = g.param("r", [seq_len * batch, 11]).unwrap();
    let region_probs = g.softmax_rows(r).unwrap();
    let heads = Heads {
        type_logits,
        type_probs,
        region_probs,
    };
    let nodes = attach_joint_loss(&mut g, &heads, batch, seq_len, cfg).unwrap();
    (g, nodes)
}

fn random_targets(rng: &mut ChaCha8Rng, batch: usize, seq_len: usize) -> Vec<Targets> {
    (0..batch)
        .map(|_| Targets {
            sp_type: SpType::ALL[rng.gen_range(0..6)],
            regions: (0..seq_len).map(|_| RegionLabel::ALL[rng.gen_range(0..11)]).collect(),
            cs_position: None,
        })
        .collect()
}

fn all_baselines() -> Vec<LossConfig> {
    vec![
        LossConfig::default(),
        LossConfig {
            tau: 0.7,
            ..LossConfig::with_baseline(Baseline::Ce)
        },
        LossConfig {
            manual_weights: Some([0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
            ..LossConfig::with_baseline(Baseline::CeReweighted)
        },
        LossConfig {
            gamma_focal: 2.0,
            ..LossConfig::with_baseline(Baseline::Focal)
        },
        LossConfig {
            gamma_focal: 1.5,
            s: 0.5,
            ..LossConfig::with_baseline(Baseline::Focal)
        },
    ]
}

#[test]
fn graph_matches_scalar_reference_for_every_baseline() {
    let (batch, seq_len) = (3, 4);
    let n = counts([200, 40, 30, 12, 9, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for cfg in all_baselines() {
        let (g, nodes) = head_graph(batch, seq_len, &cfg);
        let t = random_targets(&mut rng, batch, seq_len);
        let refs: Vec<&Targets> = t.iter().collect();
        let (m, w) = (cfg.margins(&n).unwrap(), cfg.class_weights(&n, 0, 1).unwrap());
        let mut b: HashMap<String, Tensor<f64>> = bind_loss_inputs(&refs, &m, &w);
        let z: Vec<f64> = (0..batch * 6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let r: Vec<f64> = (0..seq_len * batch * 11).map(|_| rng.gen_range(-3.0..3.0)).collect();
        b.insert("z".into(), Tensor::new(vec![batch, 6], z.clone()).unwrap());
        b.insert("r".into(), Tensor::new(vec![seq_len * batch, 11], r.clone()).unwrap());
        let s = g.evaluate(&b).unwrap();

        let logits: Vec<[f64; 6]> = (0..batch)
            .map(|i| std::array::from_fn(|k| z[i * 6 + k].tanh()))
            .collect();
        let probs: Vec<Vec<[f64; 11]>> = (0..batch)
            .map(|i| {
                (0..seq_len)
                    .map(|p| {
                        let row = &r[(p * batch + i) * 11..][..11];
                        let m = row.iter().copied().fold(f64::MIN, f64::max);
                        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                        let sum: f64 = e.iter().sum();
                        std::array::from_fn(|k| e[k] / sum)
                    })
                    .collect()
            })
            .collect();
        let want = joint_loss(&logits, &probs, &refs, &cfg, &m, &w).unwrap();
        for (node, v) in [
            (nodes.type_loss, want.type_loss),
            (nodes.cs_loss, want.cs_loss),
            (nodes.total, want.total),
        ] {
            let got = s.scalar(node).unwrap();
            assert!(
                (got - v).abs() < 1e-10 * v.abs().max(1.0),
                "{:?}: {got} vs {v}",
                cfg.baseline
            );
        }
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let (batch, seq_len) = (2, 3);
    let n = counts([200, 40, 30, 12, 9, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for cfg in all_baselines() {
        for _ in 0..4 {
            let (g, nodes) = head_graph(batch, seq_len, &cfg);
            let t = random_targets(&mut rng, batch, seq_len);
            let refs: Vec<&Targets> = t.iter().collect();
            let (m, w) = (cfg.margins(&n).unwrap(), cfg.class_weights(&n, 0, 1).unwrap());
            let mut b: HashMap<String, Tensor<f64>> = bind_loss_inputs(&refs, &m, &w);
            b.insert(
                "z".into(),
                Tensor::new(
                    vec![batch, 6],
                    (0..batch * 6).map(|_| rng.gen_range(-1.5..1.5)).collect(),
                )
                .unwrap(),
            );
            b.insert(
                "r".into(),
                Tensor::new(
                    vec![seq_len * batch, 11],
                    (0..seq_len * batch * 11).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                )
                .unwrap(),
            );
            let grads = g.evaluate(&b).unwrap().backward_scalar(nodes.total).unwrap();
            for name in ["z", "r"] {
                let fd = finite_difference_gradient(&g, nodes.total, &b, name, DEFAULT_STEP, None).unwrap();
                let err = max_relative_error(grads.get(name).unwrap().data(), fd.data());
                assert!(err <= 1e-4, "{:?} {name}: {err}", cfg.baseline);
            }
        }
    }
}

#[test]
fn full_network_loss_gradients_match_finite_differences() {
    let c = tiny_config();
    let batch = 2;
    let cfg = LossConfig {
        s: c.logit_scale,
        ..LossConfig::default()
    };
    let mut net = Network::build(&c, batch).unwrap();
    let nodes = attach_joint_loss(&mut net.graph, &net.heads, batch, c.seq_len, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params: HashMap<String, Tensor<f64>> = net
        .graph
        .param_shapes()
        .into_iter()
        .map(|(name, s)| {
            let len = s.iter().product();
            (
                name.to_string(),
                Tensor::new(s.to_vec(), (0..len).map(|_| rng.gen_range(-0.6..0.6)).collect()).unwrap(),
            )
        })
        .collect();
    let exs = [
        encode_sequence("MKKLA", OrganismGroup::GramNegative, c.seq_len),
        encode_sequence("MAV", OrganismGroup::Eukarya, c.seq_len),
    ];
    let t = random_targets(&mut rng, batch, c.seq_len);
    let refs: Vec<&Targets> = t.iter().collect();
    let n = counts([50, 20, 10, 5, 3, 2]);
    let emb = [0.3f32, -0.2, 0.9];
    let mut inputs: HashMap<String, Tensor<f64>> = net
        .bind_inputs(&exs.iter().collect::<Vec<_>>(), &[Some(&emb), None])
        .unwrap()
        .into_iter()
        .map(|(k, v)| (k, v.cast()))
        .collect();
    inputs.extend(bind_loss_inputs::<f64>(
        &refs,
        &cfg.margins(&n).unwrap(),
        &cfg.class_weights(&n, 0, 1).unwrap(),
    ));
    let b = Chain(&inputs, &params);
    let grads = net.graph.evaluate(&b).unwrap().backward_scalar(nodes.total).unwrap();
    for (name, _) in net.graph.param_shapes() {
        let fd = finite_difference_gradient(&net.graph, nodes.total, &b, name, DEFAULT_STEP, None).unwrap();
        let err = max_relative_error(grads.get(name).unwrap().data(), fd.data());
        assert!(err <= 1e-4, "{name}: {err}");
    }
}

fn logits6() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(-1.0f64..1.0)
}

proptest! {
    #[test]
    fn margins_decrease_with_count(n in prop::array::uniform6(1u64..100_000), c in 0.01f64..2.0) {
        let m = ldam_margins(&ClassCounts(n), c).unwrap();
        for i in 0..6 {
            prop_assert!(m.0[i] > 0.0);
            for j in 0..6 {
                if n[i] < n[j] {
                    prop_assert!(m.0[i] > m.0[j]);
                }
            }
        }
    }

    #[test]
    fn ldam_monotone_in_gold_logit_and_margin(
        z in logits6(), y in 0usize..6, d in 0.0f64..0.5, step in 0.01f64..0.3, s in 0.05f64..1.0,
    ) {
        let mut margins = MarginTable::zero();
        margins.0[y] = d;
        let base = ldam_loss(&z, y, &margins, s, &[1.0; 6]);
        let mut up = z;
        up[y] += step;
        prop_assert!(ldam_loss(&up, y, &margins, s, &[1.0; 6]) < base);
        let mut wider = margins;
        wider.0[y] += step;
        prop_assert!(ldam_loss(&z, y, &wider, s, &[1.0; 6]) > base);
    }

    #[test]
    fn ldam_scaling_identity(z in logits6(), y in 0usize..6, d in prop::array::uniform6(0.0f64..0.5), s in 0.05f64..2.0) {
        let m = MarginTable(d);
        let scaled_z = z.map(|v| v / s);
        let scaled_m = MarginTable(d.map(|v| v / s));
        let a = ldam_loss(&z, y, &m, s, &[1.0; 6]);
        let b = ldam_loss(&scaled_z, y, &scaled_m, 1.0, &[1.0; 6]);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn ldam_without_margin_is_cross_entropy(z in prop::array::uniform6(-5.0f64..5.0), y in 0usize..6) {
        let ldam = ldam_loss(&z, y, &MarginTable::zero(), 1.0, &[1.0; 6]);
        let ce = -(z[y].exp() / z.iter().map(|v| v.exp()).sum::<f64>()).ln();
        prop_assert!((ldam - ce).abs() < 1e-9);
    }
}

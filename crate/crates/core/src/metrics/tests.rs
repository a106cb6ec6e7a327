use proptest::prelude::*;

use super::*;
use crate::seqio::{OrganismGroup, SpType};

fn cc(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionCounts {
    ConfusionCounts { tp, tn, fp, fn_ }
}

fn rec(group: OrganismGroup, gold: SpType, pred: SpType) -> EvalRecord {
    EvalRecord {
        group,
        gold_type: gold,
        gold_cs: gold.is_signal().then_some(20),
        pred_type: pred,
        pred_cs: pred.is_signal().then_some(20),
        type_probs: None,
    }
}

#[test]
fn mcc_examples() {
    assert_eq!(mcc(&cc(1, 1, 0, 0)), 1.0);
    assert_eq!(mcc(&cc(0, 0, 1, 1)), -1.0);
    let want = (3.0 * 5.0 - 2.0 * 1.0) / ((5.0f64) * 4.0 * 7.0 * 6.0).sqrt();
    assert!((mcc(&cc(3, 5, 2, 1)) - want).abs() < 1e-15);
    assert_eq!(mcc(&cc(4, 0, 3, 0)), 0.0);
    assert!(cc(4, 0, 3, 0).is_degenerate());
}

#[test]
fn balanced_accuracy_examples() {
    assert_eq!(balanced_accuracy(&cc(3, 4, 0, 0)), Some(1.0));
    assert_eq!(balanced_accuracy(&cc(3, 0, 4, 0)), Some(0.5));
    assert_eq!(balanced_accuracy(&cc(3, 0, 0, 1)), None);
}

#[test]
fn mcc1_mcc2_cells() {
    use OrganismGroup::*;
    use SpType::*;
    let all_neg: Vec<EvalRecord> = (0..5).map(|_| rec(Eukarya, NoSp, NoSp)).collect();
    assert_eq!(mcc1_mcc2(&all_neg, SecSpi, Some(Eukarya)), (None, None));

    let mixed = vec![
        rec(Archaea, SecSpi, SecSpi),
        rec(Archaea, NoSp, NoSp),
        rec(Archaea, TatSpi, TatSpi),
    ];
    let (a, b) = mcc1_mcc2(&mixed, SecSpi, Some(Archaea));
    assert_eq!((a.unwrap().0, b.unwrap().0), (1.0, 1.0));

    // 3 SPI hits, 5 true negatives, one TAT_SPI called SPI, one TAT_SPI right.
    let mut ten: Vec<EvalRecord> = (0..3).map(|_| rec(GramNegative, SecSpi, SecSpi)).collect();
    ten.extend((0..5).map(|_| rec(GramNegative, NoSp, NoSp)));
    ten.push(rec(GramNegative, TatSpi, SecSpi));
    ten.push(rec(GramNegative, TatSpi, TatSpi));
    let (m1, m2) = mcc1_mcc2(&ten, SecSpi, Some(GramNegative));
    let (m1, m2) = (m1.unwrap(), m2.unwrap());
    assert_eq!(m1.1, cc(3, 5, 0, 0));
    assert_eq!(m2.1, cc(3, 6, 1, 0));
    assert_eq!(m1.0, 1.0);
    let hand = 18.0 / (4.0f64 * 3.0 * 7.0 * 6.0).sqrt();
    assert!((m2.0 - hand).abs() < 1e-15);
    assert!(m2.0 < m1.0);
}

#[test]
fn kappa_examples() {
    let g = [0, 1, 2, 3, 4, 5, 0, 1];
    assert_eq!(kappa(&ConfusionMatrix::from_labels(6, &g, &g)), 1.0);
    let gold = [0, 1, 0, 1, 0, 1];
    let pred = [0; 6];
    assert_eq!(kappa(&ConfusionMatrix::from_labels(6, &gold, &pred)), 0.0);
    let one_class = [2; 4];
    assert_eq!(kappa(&ConfusionMatrix::from_labels(6, &one_class, &one_class)), 0.0);
}

#[test]
fn cs_examples() {
    use OrganismGroup::*;
    use SpType::*;
    let mut r = vec![];
    for (g, p) in [
        (Some(18), Some(18)),
        (Some(22), Some(22)),
        (Some(30), Some(30)),
        (Some(18), Some(17)),
        (Some(25), None),
    ] {
        r.push(EvalRecord {
            group: Eukarya,
            gold_type: SecSpi,
            gold_cs: g,
            pred_type: if p.is_some() { SecSpi } else { NoSp },
            pred_cs: p,
            type_probs: None,
        });
    }
    let c = cs_counts(&r, SecSpi, None);
    assert_eq!(
        c,
        CsCounts {
            correct: 3,
            predicted: 4,
            gold: 5
        }
    );
    assert_eq!(cs_precision_recall(&c), (Some(0.75), Some(0.6)));

    // Right position, wrong type: no credit.
    r[0].pred_type = TatSpi;
    assert_eq!(cs_counts(&r, SecSpi, None).correct, 2);
    assert_eq!(cs_precision_recall(&CsCounts::default()), (None, None));
}

#[test]
fn report_layout() {
    use OrganismGroup::*;
    use SpType::*;
    let mut r = vec![
        rec(Eukarya, SecSpi, SecSpi),
        rec(Eukarya, NoSp, NoSp),
        rec(Archaea, TatSpii, NoSp),
        rec(Archaea, NoSp, NoSp),
    ];
    r[0].type_probs = Some([0.1, 0.9, 0.0, 0.0, 0.0, 0.0]);
    let report = evaluate(&r);
    assert_eq!(report.cells.len(), 10);
    assert_eq!(report.cells[0].group, Eukarya);
    let e = report.cell(Eukarya, SecSpi).unwrap();
    assert_eq!((e.mcc1, e.mcc2), (Some(1.0), Some(1.0)));
    assert_eq!(report.cell(Eukarya, TatSpi).unwrap().mcc1, None);
    let a = report.cell(Archaea, TatSpii).unwrap();
    assert_eq!(a.mcc2, Some(0.0));
    assert!(a.degenerate);
    assert_eq!(report.overall.n, 4);
    assert_eq!(
        report.overall.excluded_from_balanced_accuracy,
        vec![SecSpii, SecSpiii, TatSpi]
    );
    let tsv = report.to_tsv();
    assert_eq!(tsv.lines().count(), 11);
    assert!(tsv.starts_with("group\ttype\tn_gold\tmcc1"));
    assert!(tsv.contains("EUKARYA\tSEC_SPI\t1\t1.000000\t1.000000\t1.000000\t1.000000\t1\t1\t1\tfalse"));
    assert!(tsv.contains("EUKARYA\tTAT_SPI\t0\tNA\tNA\tNA\tNA\t0\t0\t0\tfalse"));
    let lines = report.to_metric_lines();
    assert!(lines.starts_with("ALL\tALL\tn\t4\nALL\tALL\tmcc\t"));
    assert!(lines.contains("ARCHAEA\tTAT_SPII\tmcc2\t0.000000"));
    assert_eq!(score_label_pairs(&r, SecSpi), vec![(0.9, true)]);
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// `R_K` as the correlation of the flattened one-hot gold and prediction matrices.
fn rk_oracle(k: usize, gold: &[usize], pred: &[usize]) -> f64 {
    let n = gold.len() as f64;
    let mut cov_xy = 0.0;
    let mut cov_xx = 0.0;
    let mut cov_yy = 0.0;
    for c in 0..k {
        let x: Vec<f64> = gold.iter().map(|&g| f64::from(u8::from(g == c))).collect();
        let y: Vec<f64> = pred.iter().map(|&p| f64::from(u8::from(p == c))).collect();
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        for i in 0..gold.len() {
            cov_xy += (x[i] - mx) * (y[i] - my);
            cov_xx += (x[i] - mx).powi(2);
            cov_yy += (y[i] - my).powi(2);
        }
    }
    if cov_xx * cov_yy == 0.0 {
        return 0.0;
    }
    cov_xy / (cov_xx * cov_yy).sqrt()
}

fn labels(max_len: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..max_len).prop_flat_map(|n| (prop::collection::vec(0usize..6, n), prop::collection::vec(0usize..6, n)))
}

fn records() -> impl Strategy<Value = Vec<EvalRecord>> {
    let one = (0usize..5, 0usize..6, 0usize..6, 1usize..40, 1usize..40).prop_map(|(g, t, p, gc, pc)| {
        let gold_type = SpType::ALL[t];
        let pred_type = SpType::ALL[p];
        EvalRecord {
            group: OrganismGroup::ALL[g],
            gold_type,
            gold_cs: gold_type.is_signal().then_some(gc % 4 + 15),
            pred_type,
            pred_cs: pred_type.is_signal().then_some(pc % 4 + 15),
            type_probs: None,
        }
    });
    prop::collection::vec(one, 1..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mcc_is_pearson_of_binary_labels(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 2..60)) {
        let c = ConfusionCounts::from_pairs(pairs.iter().copied());
        prop_assert_eq!(c.total(), pairs.len() as u64);
        let x: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.0))).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
        let v = mcc(&c);
        if c.is_degenerate() {
            prop_assert_eq!(v, 0.0);
        } else {
            prop_assert!((v - pearson(&x, &y)).abs() < 1e-12);
        }
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn multiclass_metrics_match_brute_force((gold, pred) in labels(60)) {
        let m = ConfusionMatrix::from_labels(6, &gold, &pred);
        let n = gold.len() as f64;

        let rk = multiclass_mcc(&m);
        prop_assert!((rk - rk_oracle(6, &gold, &pred)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&rk));

        let po = gold.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / n;
        let mut pe = 0.0;
        for c in 0..6 {
            let g = gold.iter().filter(|&&x| x == c).count() as f64;
            let p = pred.iter().filter(|&&x| x == c).count() as f64;
            pe += g * p / (n * n);
        }
        let want = if pe >= 1.0 { 0.0 } else { (po - pe) / (1.0 - pe) };
        let k = kappa(&m);
        prop_assert!((k - want).abs() < 1e-12);
        // A single shared class has p_e = 1, where kappa is defined as 0.
        if pe < 1.0 {
            prop_assert_eq!(k == 1.0, gold == pred);
        }

        let mut recalls = vec![];
        for c in 0..6 {
            let support = gold.iter().filter(|&&x| x == c).count();
            if support > 0 {
                let hit = gold.iter().zip(&pred).filter(|(&g, &p)| g == c && p == c).count();
                recalls.push(hit as f64 / support as f64);
            }
        }
        let (ba, excluded) = multiclass_balanced_accuracy(&m);
        prop_assert!((ba - recalls.iter().sum::<f64>() / recalls.len() as f64).abs() < 1e-12);
        prop_assert_eq!(excluded.len(), 6 - recalls.len());
    }

    #[test]
    fn report_is_order_free_and_counts_reconcile(recs in records(), seed in any::<u64>()) {
        let report = evaluate(&recs);
        let mut shuffled = recs.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);
        prop_assert_eq!(&evaluate(&shuffled), &report);

        for cell in &report.cells {
            let in_group = recs.iter().filter(|r| r.group == cell.group).count() as u64;
            prop_assert_eq!(cell.mcc2_counts.total(), in_group);
            prop_assert!(cell.mcc1_counts.total() <= cell.mcc2_counts.total());
            prop_assert!(cell.mcc1_counts.tp == cell.mcc2_counts.tp && cell.mcc1_counts.fn_ == cell.mcc2_counts.fn_);
            for v in [cell.mcc1, cell.mcc2].into_iter().flatten() {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
            for v in [cell.cs_precision, cell.cs_recall].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            // Brute-force enumeration of the cell.
            let members: Vec<&EvalRecord> = recs.iter().filter(|r| r.group == cell.group).collect();
            let mut tp = 0; let mut fp = 0; let mut fn_ = 0; let mut tn = 0;
            for r in &members {
                let g = r.gold_type == cell.sp_type;
                let p = r.pred_type == cell.sp_type;
                if g && p { tp += 1 } else if g { fn_ += 1 } else if p { fp += 1 } else { tn += 1 }
            }
            prop_assert_eq!(cell.mcc2_counts, cc(tp, tn, fp, fn_));
            prop_assert_eq!(cell.mcc2.is_some(), tp + fn_ > 0);
            let correct = members.iter().filter(|r| {
                r.gold_type == cell.sp_type && r.pred_type == cell.sp_type && r.gold_cs == r.pred_cs
            }).count() as u64;
            prop_assert_eq!(cell.cs_counts.correct, correct);
        }
    }
}

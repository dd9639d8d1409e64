use prognosis::evaluation::{
    binary_weighted_report, calibration_curve, decision_curve, fisher_exact, metrics, roc_auc, threshold_grid,
    wilcoxon_rank_sum, ConfusionMatrix,
};
use proptest::prelude::*;

fn concordance(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Hypergeometric enumeration with exact integer weights.
fn fisher_by_enumeration(t: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = t;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    // Pascal's triangle up to n
    let mut pascal = vec![vec![1u128]];
    for m in 1..=n as usize {
        let prev = &pascal[m - 1];
        let mut row = vec![1u128; m + 1];
        for k in 1..m {
            row[k] = prev[k - 1] + prev[k];
        }
        pascal.push(row);
    }
    let c = |m: u64, k: u64| pascal[m as usize][k as usize];
    let w = |x: u64| c(r1, x) * c(r2, c1 - x);
    let observed = w(a);
    let lo = c1.saturating_sub(r2);
    let hi = c1.min(r1);
    let tail: u128 = (lo..=hi).map(w).filter(|&v| v <= observed).sum();
    tail as f64 / c(n, c1) as f64
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=200).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(0u8..6).prop_map(|k| k as f64 / 5.0), 0.0f64..1.0], n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(s, mut l)| {
                l[0] = true;
                l[1] = false;
                (s, l)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_equals_pairwise_concordance((scores, labels) in scored_labels()) {
        let roc = roc_auc(&scores, &labels).unwrap();
        prop_assert!((roc.auc - concordance(&scores, &labels)).abs() <= 1e-9);

        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn fisher_matches_enumeration(a in 0u64..=30, b in 0u64..=30, c in 0u64..=30, d in 0u64..=30) {
        let t = [[a, b], [c, d]];
        prop_assert_eq!(fisher_exact(t).p_value, fisher_by_enumeration(t));
    }

    #[test]
    fn metric_identities(tp in 0u64..1000, fn_ in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000) {
        prop_assume!(tp + fn_ + fp + tn > 0);
        let cm = ConfusionMatrix::new(tp, fn_, fp, tn);
        let m = metrics(&cm);
        let f = |x: u64| x as f64;
        let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        prop_assert_eq!(m.accuracy.value, (f(tp) + f(tn)) / (f(tp) + f(tn) + f(fp) + f(fn_)));
        prop_assert_eq!(m.recall.value, ratio(f(tp), f(tp) + f(fn_)));
        prop_assert_eq!(m.precision.value, ratio(f(tp), f(tp) + f(fp)));
        prop_assert_eq!(m.specificity.value, ratio(f(tn), f(tn) + f(fp)));
        let (p, r) = (m.precision.value, m.recall.value);
        let harmonic = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        prop_assert!((m.f1.value - harmonic).abs() <= 1e-12);
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.specificity] {
            prop_assert!((0.0..=1.0).contains(&v.value));
            prop_assert!(v.ci >= 0.0);
        }
        prop_assert_eq!(cm.total(), tp + fn_ + fp + tn);

        let w = binary_weighted_report(&cm);
        for v in [w.accuracy, w.precision, w.recall, w.f1, w.specificity] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v.value));
        }
    }

    #[test]
    fn calibration_bins_partition_the_unit_interval((scores, labels) in scored_labels(), bins in 1usize..20) {
        let cal = calibration_curve(&scores, &labels, bins).unwrap();
        // only occupied cells of the equal-width grid are reported
        let width = 1.0 / bins as f64;
        for b in &cal.bins {
            let k = (b.lower / width).round();
            prop_assert!((b.lower - k * width).abs() < 1e-12 && (b.upper - (k + 1.0) * width).abs() < 1e-12);
            prop_assert!(b.count > 0);
        }
        for w in cal.bins.windows(2) {
            prop_assert!(w[0].upper <= w[1].lower + 1e-12);
        }
        for &s in &scores {
            let owners = cal
                .bins
                .iter()
                .filter(|b| s >= b.lower && (s < b.upper || (b.upper >= 1.0 - 1e-12 && s <= 1.0)))
                .count();
            prop_assert_eq!(owners, 1, "score {} in {} bins", s, owners);
        }
        prop_assert_eq!(cal.bins.iter().map(|b| b.count).sum::<usize>(), scores.len());
    }

    #[test]
    fn decision_curve_bounded_by_perfect_model((scores, labels) in scored_labels()) {
        let grid = threshold_grid(49);
        let model = decision_curve(&scores, &labels, &grid).unwrap();
        let truth: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let perfect = decision_curve(&truth, &labels, &grid).unwrap();
        for (m, p) in model.points.iter().zip(&perfect.points) {
            prop_assert!(m.model <= p.model + 1e-12, "pt {}: {} > {}", m.threshold, m.model, p.model);
            prop_assert_eq!(m.treat_none, 0.0);
        }
    }

    #[test]
    fn rank_sum_is_antisymmetric(a in prop::collection::vec(0.0f64..10.0, 1..30), b in prop::collection::vec(0.0f64..10.0, 1..30)) {
        let ab = wilcoxon_rank_sum(&a, &b).unwrap();
        let ba = wilcoxon_rank_sum(&b, &a).unwrap();
        prop_assert!((ab.statistic + ba.statistic).abs() < 1e-9);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}

#[test]
fn fisher_on_every_table_with_a_small_total() {
    // every table of each small total, exhaustively
    for n in 1..=14u64 {
        for a in 0..=n {
            for b in 0..=n - a {
                for c in 0..=n - a - b {
                    let t = [[a, b], [c, n - a - b - c]];
                    assert_eq!(fisher_exact(t).p_value, fisher_by_enumeration(t), "{t:?}");
                }
            }
        }
    }
}

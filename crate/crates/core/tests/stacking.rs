use prognosis::dataset::{stratified_folds, BalancePlan, LabelKind};
use prognosis::evaluation::roc_auc;
use prognosis::feature_select::{rank_features, ImportanceMethod};
use prognosis::learners::{Algorithm, BoostingParams, ForestParams, KnnParams, LearnerSpec};
use prognosis::pipeline::{crossval_run, Modality, PipelineConfig};
use prognosis::stacking::{fit_stacking, StackingModel};
use prognosis::synth::{generate, write_synth, SynthSpec};
use prognosis::{rng, Matrix};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn data(n: usize, d: usize, seed: u64) -> (Matrix, Vec<bool>) {
    let mut r = rng::seeded(seed);
    let mut x = Matrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..d {
            x.set(i, j, r.sample(StandardNormal));
        }
        let lp = 1.5 * x.get(i, 0) - x.get(i, 1) + 0.5 * r.sample::<f64, _>(StandardNormal);
        y.push(lp > 0.0);
    }
    (x, y)
}

fn light_specs(seed: u64) -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new("knn", Algorithm::Knn(KnnParams { k: 7 }), seed).unwrap(),
        LearnerSpec::new("forest", Algorithm::RandomForest(ForestParams { trees: 30, ..ForestParams::default() }), seed).unwrap(),
        LearnerSpec::new("boost", Algorithm::GradientBoosting(BoostingParams { rounds: 30, ..BoostingParams::default() }), seed)
            .unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stacking_audit_holds_and_base_order_does_not_matter(seed in 0u64..1000, k in 2usize..6) {
        let (x, y) = data(90, 4, seed);
        let folds = stratified_folds(&y, k, seed).unwrap();
        let specs = light_specs(seed);
        let a = fit_stacking(&specs, &x, &y, &folds, BalancePlan::RISK).unwrap();
        a.audit.verify().unwrap();
        prop_assert_eq!(a.audit.records.len(), specs.len() * k);

        let order = [2usize, 0, 1];
        let permuted: Vec<LearnerSpec> = order.iter().map(|&i| specs[i].clone()).collect();
        let b = fit_stacking(&permuted, &x, &y, &folds, BalancePlan::RISK).unwrap();
        b.audit.verify().unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert!((b.meta.weights[pos] - a.meta.weights[i]).abs() < 1e-9);
        }
        let (pa, pb) = (a.predict_stacking(&x).unwrap(), b.predict_stacking(&x).unwrap());
        for (p, q) in pa.iter().zip(&pb) {
            prop_assert!((p - q).abs() <= 1e-12, "{} vs {}", p, q);
        }
    }
}

#[test]
fn serialized_stacking_predicts_identically() {
    let (x, y) = data(80, 3, 4);
    let folds = stratified_folds(&y, 5, 4).unwrap();
    let model = fit_stacking(&light_specs(4), &x, &y, &folds, BalancePlan::IDENTITY).unwrap();
    model.audit.verify().unwrap();
    let json = serde_json::to_string(&model).unwrap();
    let back: StackingModel = serde_json::from_str(&json).unwrap();
    assert_eq!(back, model);
    let (a, b) = (model.predict_stacking(&x).unwrap(), back.predict_stacking(&x).unwrap());
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(serde_json::to_string(&back).unwrap(), json);
}

fn ranking_data(seed: u64) -> (Matrix, Vec<bool>, Vec<String>) {
    let (x, y) = data(150, 6, seed);
    let names = ["signal_a", "signal_b", "noise_c", "noise_d", "noise_e", "noise_f"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    (x, y, names)
}

#[test]
fn ranking_ignores_feature_order() {
    for method in [ImportanceMethod::Gini, ImportanceMethod::Permutation] {
        let (x, y, names) = ranking_data(8);
        let forest = ForestParams { trees: 60, ..ForestParams::default() };
        let a = rank_features(&x, &y, &names, forest, method, 3).unwrap();
        let perm = [4usize, 1, 5, 0, 3, 2];
        let xp = x.select_cols(&perm);
        let np: Vec<String> = perm.iter().map(|&j| names[j].clone()).collect();
        let b = rank_features(&xp, &y, &np, forest, method, 3).unwrap();
        assert_eq!(a.features, b.features, "{method:?}");

        let total: f64 = a.features.iter().map(|f| f.1).sum();
        assert!((total - 1.0).abs() < 1e-9, "{method:?} scores sum to {total}");
        assert!(a.features.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}

#[test]
fn duplicated_top_feature_stays_above_noise() {
    for seed in 0..5 {
        let (x, y, mut names) = ranking_data(20 + seed);
        let forest = ForestParams { trees: 60, ..ForestParams::default() };
        let base = rank_features(&x, &y, &names, forest, ImportanceMethod::Gini, seed).unwrap();
        let top = base.features[0].0.clone();
        let j = names.iter().position(|n| *n == top).unwrap();
        let mut rows = Vec::new();
        for r in x.iter_rows() {
            let mut v = r.to_vec();
            v.push(r[j]);
            rows.push(v);
        }
        names.push(format!("{top}_copy"));
        let with_copy = rank_features(&Matrix::from_rows(&rows).unwrap(), &y, &names, forest, ImportanceMethod::Gini, seed).unwrap();
        let pos = with_copy.position(&top).unwrap();
        let last_noise = ["noise_c", "noise_d", "noise_e", "noise_f"]
            .iter()
            .map(|n| with_copy.position(n).unwrap())
            .max()
            .unwrap();
        assert!(pos < last_noise, "seed {seed}: {top} at {pos}, demoted below every noise feature");
    }
}

#[test]
fn synthetic_cohorts_are_reproducible_bytes() {
    let spec = SynthSpec { feature_length: 16, ..SynthSpec::with_total(120, 33) };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (cohort, truth) = generate(&spec).unwrap();
        write_synth(d.path(), &cohort, &truth).unwrap();
    }
    for file in ["clinical.csv", "image_features.csv", "ground_truth.json"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file}");
    }
    let other = generate(&SynthSpec { seed: 34, ..spec.clone() }).unwrap().0;
    assert_ne!(other, generate(&spec).unwrap().0);
}

#[test]
fn bayes_posterior_is_the_auc_ceiling() {
    let spec = SynthSpec { feature_length: 32, ..SynthSpec::with_total(600, 12) };
    let (cohort, truth) = generate(&spec).unwrap();
    let mut config = PipelineConfig::new(12);
    config.pca.components = 8;
    let y = cohort.labels(LabelKind::Risk).unwrap();
    let ceiling = roc_auc(&truth.rows.iter().map(|r| r.risk.fused).collect::<Vec<_>>(), &y).unwrap().auc;
    for m in Modality::ALL {
        let cv = crossval_run(&cohort, &config, m, LabelKind::Risk).unwrap();
        cv.oof.audit.verify().unwrap();
        cv.audit.verify().unwrap();
        for c in cv.candidates.iter().chain([&cv.stacking]) {
            let auc = c.evaluation.report.auc.unwrap();
            assert!(auc <= ceiling, "{} on {}: {auc} > Bayes {ceiling}", c.name, m.as_str());
        }
        let view = truth
            .rows
            .iter()
            .map(|r| match m {
                Modality::Clinical => r.risk.clinical,
                Modality::Image => r.risk.image,
                Modality::Fused => r.risk.fused,
            })
            .collect::<Vec<_>>();
        let view_auc = roc_auc(&view, &y).unwrap().auc;
        assert!(cv.stacking.evaluation.report.auc.unwrap() <= view_auc + 0.02, "{}", m.as_str());
    }
}

use prognosis::preprocess::{gamma_correct, GammaMap, GrayImage, ImputationModel, ImputeMode, MiceConfig, Normalizer, PcaConfig, PcaModel};
use prognosis::{rng, Matrix};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Rows of a linear latent-factor model: every column is a noisy mix of two
/// shared factors.
fn linear_table(n: usize, d: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    let load: Vec<f64> = (0..2 * d).map(|_| r.random_range(-2.0..2.0)).collect();
    let mut m = Matrix::zeros(n, d);
    for i in 0..n {
        let f: [f64; 2] = [r.sample(StandardNormal), r.sample(StandardNormal)];
        for j in 0..d {
            let e: f64 = r.sample(StandardNormal);
            m.set(i, j, 10.0 + f[0] * load[j] + f[1] * load[d + j] + 0.3 * e);
        }
    }
    m
}

fn mask(full: &Matrix, rate: f64, seed: u64) -> Vec<Vec<Option<f64>>> {
    let mut r = rng::seeded(seed);
    full.iter_rows()
        .map(|row| row.iter().map(|&v| if r.random_bool(rate) { None } else { Some(v) }).collect())
        .collect()
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("c{j}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mice_keeps_observed_cells_and_fills_the_rest(
        seed in 0u64..10_000,
        rate in 0.0f64..0.5,
        d in 2usize..6,
        gaussian in any::<bool>(),
    ) {
        let full = linear_table(60, d, seed);
        let rows = mask(&full, rate, seed + 1);
        let config = MiceConfig {
            mode: if gaussian { ImputeMode::GaussianResidual } else { ImputeMode::Deterministic },
            seed,
            ..MiceConfig::default()
        };
        let Ok((model, completed)) = ImputationModel::fit_transform(&names(d), &rows, config) else {
            // a column may be masked out entirely at high rates
            prop_assert!((0..d).any(|j| rows.iter().all(|r| r[j].is_none())));
            return Ok(());
        };
        let applied = model.apply(&rows).unwrap();
        for (i, row) in rows.iter().enumerate() {
            for j in 0..d {
                prop_assert!(completed.get(i, j).is_finite());
                prop_assert!(applied.get(i, j).is_finite());
                if let Some(v) = row[j] {
                    prop_assert_eq!(completed.get(i, j), v);
                    prop_assert_eq!(applied.get(i, j), v);
                }
            }
        }
    }

    #[test]
    fn gamma_above_one_never_darkens(gamma in 1.0f64..8.0, level in 0u8..=255) {
        let map = GammaMap::constant(gamma).unwrap();
        prop_assert!(map.correct_level(level) >= level as f64 - 1e-9);
    }

    #[test]
    fn pca_components_orthonormal_and_spectrum_sorted(seed in 0u64..10_000, n in 8usize..40, d in 2usize..30, whiten in any::<bool>()) {
        let x = linear_table(n, d, seed);
        let p = (n - 1).min(d).min(6);
        let pca = PcaModel::fit(&x, PcaConfig { components: p, whiten, eigen_floor: 1e-10 }).unwrap();
        for a in 0..p {
            for b in 0..p {
                let dot: f64 = pca.components.row(a).iter().zip(pca.components.row(b)).map(|(u, v)| u * v).sum();
                prop_assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-8, "<{a},{b}> = {dot}");
            }
        }
        for w in pca.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(pca.eigenvalues.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn normalizer_standardises_training_columns(seed in 0u64..10_000) {
        let x = linear_table(30, 4, seed);
        let z = Normalizer::fit(&x).apply(&x).unwrap();
        for j in 0..4 {
            let col = z.column(j);
            let m = col.iter().sum::<f64>() / 30.0;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 30.0;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn whitened_training_covariance_is_identity() {
    // both the covariance route (n > d) and the Gram route (n <= d)
    for (n, d, p) in [(200, 12, 8), (40, 90, 20), (400, 300, 16)] {
        let x = linear_table(n, d, n as u64);
        let mut r = rng::seeded(d as u64);
        let mut noisy = x.clone();
        for i in 0..n {
            for j in 0..d {
                noisy.set(i, j, x.get(i, j) + r.sample::<f64, _>(StandardNormal));
            }
        }
        let pca = PcaModel::fit(&noisy, PcaConfig { components: p, whiten: true, eigen_floor: 1e-10 }).unwrap();
        let t = pca.transform(&noisy).unwrap();
        for a in 0..p {
            for b in 0..p {
                let (ca, cb) = (t.column(a), t.column(b));
                let cov: f64 = ca.iter().zip(&cb).map(|(u, v)| u * v).sum::<f64>() / (n - 1) as f64;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((cov - want).abs() < 1e-6, "{n}x{d}: cov[{a},{b}] = {cov}");
            }
        }
    }
}

#[test]
fn mice_beats_mean_imputation_on_linear_data() {
    let mut wins = 0;
    for seed in 0..8u64 {
        let full = linear_table(300, 5, 100 + seed);
        let rows = mask(&full, 0.2, 200 + seed);
        let (_, mice) = ImputationModel::fit_transform(&names(5), &rows, MiceConfig::default()).unwrap();
        let means: Vec<f64> = (0..5)
            .map(|j| {
                let obs: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
                obs.iter().sum::<f64>() / obs.len() as f64
            })
            .collect();
        let (mut a, mut b) = (0.0, 0.0);
        for (i, row) in rows.iter().enumerate() {
            for j in 0..5 {
                if row[j].is_none() {
                    a += (mice.get(i, j) - full.get(i, j)).powi(2);
                    b += (means[j] - full.get(i, j)).powi(2);
                }
            }
        }
        if a <= b {
            wins += 1;
        }
    }
    assert_eq!(wins, 8);
}

#[test]
fn image_pixels_become_features_after_correction() {
    let image = GrayImage {
        width: 3,
        height: 2,
        pixels: vec![0, 64, 128, 192, 255, 10],
    };
    let out = gamma_correct(&image, &GammaMap::constant(2.0).unwrap()).unwrap();
    assert_eq!(out.len(), 6);
    assert_eq!(out[0], 0.0);
    assert!((out[4] - 255.0).abs() < 1e-12);
    assert!((out[1] - 255.0 * (64.0f64 / 255.0).sqrt()).abs() < 1e-9);
}

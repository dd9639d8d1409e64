//! Seeded multimodal cohorts with known Bayes posteriors.
//!
//! Patients fall into three groups: low risk, high risk who survive, and
//! high risk who die. Clinical values are independent Gaussians whose means
//! shift by group. Image vectors embed a few class-separated latent factors
//! through a random orthonormal map plus isotropic noise, so the two
//! modalities carry conditionally independent evidence and the exact
//! posterior of every label can be written down.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_clinical_csv, write_image_csv, Cohort, Gender, Outcome, PatientRecord, RiskLabel, AGE};
use crate::error::{Error, Result};
use crate::rng;

/// One clinical variable. Shifts are in units of `sd` and are multiplied by
/// the spec-level separations; `direction` is +1 or −1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSignal {
    pub name: String,
    pub unit: String,
    pub mean: f64,
    pub sd: f64,
    pub direction: f64,
}

impl ClinicalSignal {
    fn new(name: &str, unit: &str, mean: f64, sd: f64, direction: f64) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            mean,
            sd,
            direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSignal {
    /// Latent factors that separate low from high risk.
    pub risk_dims: usize,
    /// Latent factors that separate survivors from deaths.
    pub outcome_dims: usize,
    /// Per-factor mean shift in latent standard deviations.
    pub risk_shift: f64,
    pub outcome_shift: f64,
    /// Standard deviation of the isotropic noise added in feature space.
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_low: usize,
    pub n_survived: usize,
    pub n_death: usize,
    pub feature_length: usize,
    /// Informative variables; `age` is stored in the demographic field.
    pub clinical: Vec<ClinicalSignal>,
    /// Low→high shift of every informative variable, in sd units.
    pub clinical_risk_shift: f64,
    /// Additional survived→death shift, in sd units.
    pub clinical_outcome_shift: f64,
    /// Uninformative biomarkers appended after the informative ones.
    pub noise_biomarkers: usize,
    pub image: ImageSignal,
    /// Probability of male gender for low-risk and high-risk patients.
    pub male_rate: (f64, f64),
    /// MCAR probability for every clinical cell including age.
    pub missing_rate: f64,
    /// Probability that each observed label is flipped.
    pub label_noise: f64,
    pub seed: u64,
}

const NOISE_NAMES: [(&str, &str, f64, f64); 7] = [
    ("temperature", "C", 37.6, 0.9),
    ("rbc", "10^12/L", 4.6, 0.7),
    ("glucose", "mg/dL", 124.0, 56.0),
    ("fibrinogen", "mg/dL", 610.0, 160.0),
    ("platelets", "10^9/L", 220.0, 80.0),
    ("d_dimer", "ng/mL", 900.0, 400.0),
    ("ferritin", "ng/mL", 500.0, 250.0),
];

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_low: 396,
            n_survived: 398,
            n_death: 136,
            feature_length: crate::dataset::DEFAULT_FEATURE_LENGTH,
            clinical: vec![
                ClinicalSignal::new("ldh", "U/L", 280.0, 100.0, 1.0),
                ClinicalSignal::new("o2", "%", 95.0, 3.0, -1.0),
                ClinicalSignal::new("wbc", "10^9/L", 6.5, 2.5, 1.0),
                ClinicalSignal::new(AGE, "years", 60.0, 14.0, 1.0),
                ClinicalSignal::new("crp", "mg/dL", 40.0, 15.0, 1.0),
            ],
            clinical_risk_shift: 0.5,
            clinical_outcome_shift: 0.6,
            noise_biomarkers: 3,
            image: ImageSignal {
                risk_dims: 2,
                outcome_dims: 2,
                risk_shift: 0.8,
                outcome_shift: 0.9,
                noise_sd: 0.05,
            },
            male_rate: (0.5, 0.5),
            missing_rate: 0.05,
            label_noise: 0.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Low,
    Survived,
    Death,
}

/// Posterior of one label under each view of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub clinical: f64,
    pub image: f64,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: String,
    pub group: Group,
    /// P(observed risk label = high | features).
    pub risk: Posterior,
    /// P(observed outcome = death | features, observed risk = high);
    /// present only for records labelled high risk.
    pub death: Option<Posterior>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub informative_features: Vec<String>,
    pub rows: Vec<TruthRow>,
}

impl SynthSpec {
    /// Same proportions as the default at a different total size.
    pub fn with_total(total: usize, seed: u64) -> Self {
        let d = Self::default();
        let all = (d.n_low + d.n_survived + d.n_death) as f64;
        let n_low = (total as f64 * d.n_low as f64 / all).round() as usize;
        let n_death = (total as f64 * d.n_death as f64 / all).round() as usize;
        Self {
            n_low,
            n_death,
            n_survived: total - n_low - n_death,
            seed,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    name: name.into(),
                    value: v,
                    lo: 0.0,
                    hi: 1.0,
                })
            }
        };
        rate("missing_rate", self.missing_rate)?;
        rate("label_noise", self.label_noise)?;
        rate("male_rate.low", self.male_rate.0)?;
        rate("male_rate.high", self.male_rate.1)?;
        if self.clinical.iter().any(|c| !(c.sd > 0.0)) || !(self.image.noise_sd >= 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be positive".into()));
        }
        let latent = self.image.risk_dims + self.image.outcome_dims;
        if self.feature_length > 0 && latent > self.feature_length {
            return Err(Error::InvalidParameter(format!(
                "{latent} latent factors do not fit in {} image features",
                self.feature_length
            )));
        }
        if self.n_low + self.n_survived + self.n_death == 0 {
            return Err(Error::InvalidParameter("empty cohort".into()));
        }
        Ok(())
    }

    pub fn biomarker_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.clinical.iter().filter(|c| c.name != AGE).map(|c| c.name.clone()).collect();
        for k in 0..self.noise_biomarkers {
            names.push(match NOISE_NAMES.get(k) {
                Some(n) => n.0.to_string(),
                None => format!("marker_{k}"),
            });
        }
        names
    }

    fn noise_signal(k: usize) -> ClinicalSignal {
        match NOISE_NAMES.get(k) {
            Some(&(n, u, m, s)) => ClinicalSignal::new(n, u, m, s, 0.0),
            None => ClinicalSignal::new(&format!("marker_{k}"), "", 0.0, 1.0, 0.0),
        }
    }

    /// Mean of an informative variable in a group, in its own units.
    fn clinical_mean(&self, c: &ClinicalSignal, g: Group) -> f64 {
        let shift = match g {
            Group::Low => 0.0,
            Group::Survived => self.clinical_risk_shift,
            Group::Death => self.clinical_risk_shift + self.clinical_outcome_shift,
        };
        c.mean + c.direction * shift * c.sd
    }

    /// Latent mean vector of a group.
    fn latent_mean(&self, g: Group) -> Vec<f64> {
        let im = self.image;
        let mut m = vec![0.0; im.risk_dims + im.outcome_dims];
        if g != Group::Low {
            m[..im.risk_dims].fill(im.risk_shift);
        }
        if g == Group::Death {
            m[im.risk_dims..].fill(im.outcome_shift);
        }
        m
    }
}

const GROUPS: [Group; 3] = [Group::Low, Group::Survived, Group::Death];

fn log_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln()
}

fn softmax3(l: [f64; 3]) -> [f64; 3] {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = l.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Observed-label posteriors from group posteriors under symmetric label
/// noise `eta`. A low-risk patient relabelled high carries a survived label
/// before outcome noise is applied.
fn observed_posteriors(pg: [f64; 3], eta: f64) -> (f64, f64) {
    let high = [eta, 1.0 - eta, 1.0 - eta];
    let death_given_high = [eta, eta, 1.0 - eta];
    let p_high: f64 = (0..3).map(|g| pg[g] * high[g]).sum();
    let p_high_death: f64 = (0..3).map(|g| pg[g] * high[g] * death_given_high[g]).sum();
    let death = if p_high > 0.0 { p_high_death / p_high } else { 0.0 };
    (p_high, death)
}

/// Generates the cohort and its ground truth.
pub fn generate(spec: &SynthSpec) -> Result<(Cohort, GroundTruth)> {
    spec.validate()?;
    let mut groups: Vec<Group> = Vec::new();
    groups.extend(std::iter::repeat_n(Group::Low, spec.n_low));
    groups.extend(std::iter::repeat_n(Group::Survived, spec.n_survived));
    groups.extend(std::iter::repeat_n(Group::Death, spec.n_death));
    groups.shuffle(&mut rng::substream(spec.seed, 0));

    let n_total = groups.len() as f64;
    let prior = [spec.n_low as f64 / n_total, spec.n_survived as f64 / n_total, spec.n_death as f64 / n_total];
    let latent_dims = spec.image.risk_dims + spec.image.outcome_dims;
    let basis = if spec.feature_length > 0 && latent_dims > 0 {
        let mut r = rng::substream(spec.seed, 1);
        let g = DMatrix::<f64>::from_fn(spec.feature_length, latent_dims, |_, _| r.sample(StandardNormal));
        Some(g.qr().q())
    } else {
        None
    };
    let latent_sd = (1.0 + spec.image.noise_sd * spec.image.noise_sd).sqrt();
    let noise: Vec<ClinicalSignal> = (0..spec.noise_biomarkers).map(SynthSpec::noise_signal).collect();
    let latent_means: Vec<Vec<f64>> = GROUPS.iter().map(|&g| spec.latent_mean(g)).collect();

    let mut r = rng::substream(spec.seed, 2);
    let width = format!("{}", groups.len()).len();
    let mut records = Vec::with_capacity(groups.len());
    let mut truth = Vec::with_capacity(groups.len());
    for (i, &g) in groups.iter().enumerate() {
        let id = format!("P{:0width$}", i + 1);
        let high = g != Group::Low;
        let male_p = if high { spec.male_rate.1 } else { spec.male_rate.0 };
        let gender = if r.random::<f64>() < male_p { Gender::Male } else { Gender::Female };

        let mut age = None;
        let mut biomarkers = Vec::new();
        let mut clin_ll = [0.0; 3];
        for c in &spec.clinical {
            let z: f64 = r.sample(StandardNormal);
            let mut v = spec.clinical_mean(c, g) + c.sd * z;
            if c.name == AGE {
                v = v.max(0.0);
            }
            let missing = r.random::<f64>() < spec.missing_rate;
            let value = (!missing).then_some(v);
            if let Some(v) = value {
                for (k, &h) in GROUPS.iter().enumerate() {
                    clin_ll[k] += log_normal(v, spec.clinical_mean(c, h), c.sd);
                }
            }
            if c.name == AGE {
                age = value;
            } else {
                biomarkers.push(value);
            }
        }
        for c in &noise {
            let z: f64 = r.sample(StandardNormal);
            let v = c.mean + c.sd * z;
            let missing = r.random::<f64>() < spec.missing_rate;
            biomarkers.push((!missing).then_some(v));
        }

        let mut img_ll = [0.0; 3];
        let image_features = basis.as_ref().map(|q| {
            let zl: Vec<f64> = latent_means[GROUPS.iter().position(|&h| h == g).unwrap()]
                .iter()
                .map(|m| m + r.sample::<f64, _>(StandardNormal))
                .collect();
            let f: Vec<f64> = (0..spec.feature_length)
                .map(|row| {
                    let s: f64 = (0..latent_dims).map(|k| q[(row, k)] * zl[k]).sum();
                    s + spec.image.noise_sd * r.sample::<f64, _>(StandardNormal)
                })
                .collect();
            // the projection onto the basis is sufficient for the group
            for k in 0..latent_dims {
                let u: f64 = (0..spec.feature_length).map(|row| q[(row, k)] * f[row]).sum();
                for (h, m) in latent_means.iter().enumerate() {
                    img_ll[h] += log_normal(u, m[k], latent_sd);
                }
            }
            f
        });

        let gender_ll = GROUPS.map(|h| {
            let p = if h == Group::Low { spec.male_rate.0 } else { spec.male_rate.1 };
            let q = if gender == Gender::Male { p } else { 1.0 - p };
            q.max(f64::MIN_POSITIVE).ln()
        });
        let post = |parts: &[[f64; 3]]| {
            let mut l = [0.0; 3];
            for k in 0..3 {
                l[k] = prior[k].max(f64::MIN_POSITIVE).ln() + parts.iter().map(|p| p[k]).sum::<f64>();
            }
            observed_posteriors(softmax3(l), spec.label_noise)
        };
        let (rc, dc) = post(&[clin_ll, gender_ll]);
        let (ri, di) = post(&[img_ll]);
        let (rf, df) = post(&[clin_ll, img_ll, gender_ll]);

        let flip = |b: bool, r: &mut rng::Rng| if r.random::<f64>() < spec.label_noise { !b } else { b };
        let obs_high = flip(high, &mut r);
        let outcome = if obs_high {
            let death = flip(g == Group::Death, &mut r);
            Some(if death { Outcome::Death } else { Outcome::Survived })
        } else {
            None
        };
        records.push(PatientRecord {
            id: id.clone(),
            gender,
            age,
            biomarkers,
            image_features,
            risk: Some(if obs_high { RiskLabel::High } else { RiskLabel::Low }),
            outcome,
        });
        truth.push(TruthRow {
            id,
            group: g,
            risk: Posterior {
                clinical: rc,
                image: ri,
                fused: rf,
            },
            death: obs_high.then_some(Posterior {
                clinical: dc,
                image: di,
                fused: df,
            }),
        });
    }
    let cohort = Cohort::new(spec.biomarker_names(), spec.feature_length, records)?;
    Ok((
        cohort,
        GroundTruth {
            spec: spec.clone(),
            informative_features: spec.clinical.iter().map(|c| c.name.clone()).collect(),
            rows: truth,
        },
    ))
}

/// File names written by [`write_synth`].
pub const CLINICAL_FILE: &str = "clinical.csv";
pub const IMAGE_FILE: &str = "image_features.csv";
pub const TRUTH_FILE: &str = "ground_truth.json";

/// Writes the clinical CSV, the image-feature CSV and the ground-truth JSON
/// into `dir`.
pub fn write_synth(dir: impl AsRef<Path>, cohort: &Cohort, truth: &GroundTruth) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        std::fs::File::create(&p).map(std::io::BufWriter::new).map_err(|e| Error::io(p, e))
    };
    write_clinical_csv(cohort, create(CLINICAL_FILE)?)?;
    if cohort.feature_length() > 0 {
        write_image_csv(cohort, create(IMAGE_FILE)?)?;
    }
    let json = serde_json::to_vec_pretty(truth)?;
    let p = dir.join(TRUTH_FILE);
    std::fs::write(&p, json).map_err(|e| Error::io(p, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            feature_length: 16,
            ..SynthSpec::with_total(120, seed)
        }
    }

    #[test]
    fn counts_and_schema() {
        let (c, t) = generate(&small(1)).unwrap();
        assert_eq!(c.len(), 120);
        assert_eq!(t.rows.len(), 120);
        assert_eq!(c.biomarker_names(), &["ldh", "o2", "wbc", "crp", "temperature", "rbc", "glucose"]);
        let [low, high] = c.class_counts(crate::dataset::LabelKind::Risk);
        assert_eq!(low + high, 120);
        assert!(c.records().iter().all(|r| r.image_features.as_ref().unwrap().len() == 16));
    }

    #[test]
    fn same_seed_same_cohort() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a, b);
        let c = generate(&small(4)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn zero_missing_rate_means_complete() {
        let spec = SynthSpec {
            missing_rate: 0.0,
            ..small(5)
        };
        let (c, _) = generate(&spec).unwrap();
        assert!(c.records().iter().all(|r| r.age.is_some() && r.biomarkers.iter().all(Option::is_some)));
    }

    #[test]
    fn posteriors_are_probabilities_and_gated() {
        let (c, t) = generate(&small(6)).unwrap();
        for (r, row) in c.records().iter().zip(&t.rows) {
            for p in [row.risk.clinical, row.risk.image, row.risk.fused] {
                assert!((0.0..=1.0).contains(&p));
            }
            assert_eq!(row.death.is_some(), r.risk == Some(RiskLabel::High));
        }
    }

    #[test]
    fn observed_posterior_without_noise_is_group_posterior() {
        let (h, d) = observed_posteriors([0.2, 0.5, 0.3], 0.0);
        assert!((h - 0.8).abs() < 1e-15);
        assert!((d - 0.3 / 0.8).abs() < 1e-15);
    }

    #[test]
    fn invalid_rates_rejected() {
        let spec = SynthSpec {
            missing_rate: 1.5,
            ..small(0)
        };
        assert!(generate(&spec).is_err());
    }
}

//! Trained model bundle: one canonical JSON document.
//!
//! Keys are emitted in sorted order and numbers in shortest round-trip form,
//! so loading and re-saving a bundle reproduces it byte for byte and the
//! SHA-256 of the bytes is a stable fingerprint.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{write_clinical_csv, write_image_csv, Cohort, LabelKind, AGE, GENDER};
use crate::error::{Error, Result};
use crate::learners::{train, LearnerSpec, LogisticModel};
use crate::matrix::Matrix;
use crate::nomogram::{FitConfig, NomogramModel};
use crate::pipeline::{train_outcome, train_stage, CrossValidation, Modality, ModalityInputs, PipelineConfig, Preprocessor, TrainedStage};
use crate::preprocess::{GammaMap, ImputationModel, MiceConfig, Normalizer};
use crate::stacking::{LeakageAudit, StackingModel, STACKING_SCHEMA_VERSION};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
}

/// Display unit of a known clinical variable.
pub fn unit_for(name: &str) -> &'static str {
    match name {
        AGE => "years",
        GENDER => "male=1",
        "ldh" => "U/L",
        "o2" => "%",
        "wbc" => "10^9/L",
        "crp" => "mg/dL",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub modality: Modality,
    /// Clinical inputs in model order.
    pub clinical: Vec<FeatureSpec>,
    /// Image-feature vector length; 0 when the modality has no image input.
    pub image_length: usize,
}

impl FeatureSchema {
    pub fn names(&self) -> Vec<String> {
        self.clinical.iter().map(|f| f.name.clone()).collect()
    }
}

/// Headline cross-validated numbers of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub label: LabelKind,
    pub stacking: String,
    pub f1: f64,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub rows: usize,
}

impl StageSummary {
    pub fn from_cv(cv: &CrossValidation) -> Self {
        let r = &cv.stacking.evaluation.report;
        Self {
            label: cv.label,
            stacking: cv.stacking_name(),
            f1: r.f1.value,
            accuracy: r.accuracy.value,
            auc: r.auc,
            rows: cv.folds.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    /// SHA-256 of the training cohort's clinical and image CSV encodings.
    pub dataset_fingerprint: String,
    /// Supplied by the caller; never read from the clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
    #[serde(default)]
    pub stages: Vec<StageSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub feature_schema: FeatureSchema,
    pub gamma: GammaMap,
    pub risk: TrainedStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TrainedStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nomogram: Option<NomogramModel>,
    pub metadata: TrainingMetadata,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Canonical JSON encoding of any serialisable value.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_vec(&v)?)
}

/// Hex SHA-256 of a value's canonical JSON.
pub fn canonical_sha256<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&canonical_json(value)?))
}

/// Fingerprint of a cohort's CSV encodings.
pub fn dataset_fingerprint(cohort: &Cohort) -> Result<String> {
    let mut bytes = Vec::new();
    write_clinical_csv(cohort, &mut bytes)?;
    if cohort.feature_length() > 0 {
        write_image_csv(cohort, &mut bytes)?;
    }
    Ok(sha256_hex(&bytes))
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        canonical_json(self)
    }

    pub fn fingerprint(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_json()?))
    }

    /// Parses a bundle, refusing other schema versions before decoding the
    /// rest of the document.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_slice(bytes)?;
        let found = v
            .get("schema_version")
            .and_then(|s| s.as_u64())
            .ok_or_else(|| Error::InvalidParameter("bundle has no schema_version".into()))?;
        if found != BUNDLE_SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: found as u32,
                expected: BUNDLE_SCHEMA_VERSION,
            });
        }
        let bundle: ModelBundle = serde_json::from_value(v)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    /// Structural consistency between the schema, stages and nomogram.
    pub fn validate(&self) -> Result<()> {
        self.gamma.validate()?;
        for stage in std::iter::once(&self.risk).chain(&self.outcome) {
            if stage.model.schema_version != STACKING_SCHEMA_VERSION {
                return Err(Error::SchemaVersion {
                    found: stage.model.schema_version,
                    expected: STACKING_SCHEMA_VERSION,
                });
            }
            if stage.preprocessor.clinical_features != self.feature_schema.names() {
                return Err(Error::Shape("stage clinical features differ from the feature schema".into()));
            }
            if stage.preprocessor.image_length().unwrap_or(0) != self.feature_schema.image_length {
                return Err(Error::Shape("stage image length differs from the feature schema".into()));
            }
        }
        if let (Some(stage), Some(nomogram)) = (&self.outcome, &self.nomogram) {
            nomogram.validate()?;
            if nomogram.predictors != stage.base_names() {
                return Err(Error::Shape(format!(
                    "nomogram predictors {:?} differ from outcome bases {:?}",
                    nomogram.predictors,
                    stage.base_names()
                )));
            }
        }
        Ok(())
    }

    /// Small bundle whose learners are constants: stage 1 scores `risk`,
    /// stage 2 bases score 0.9, 0.8 and 0.7, and the nomogram is the
    /// reference model.
    pub fn fixture(risk: f64) -> Result<Self> {
        let features: Vec<String> = crate::pipeline::DEFAULT_CLINICAL_FEATURES.iter().map(|s| s.to_string()).collect();
        let table: Vec<Vec<Option<f64>>> = (0..8)
            .map(|i| {
                let t = i as f64;
                vec![
                    Some(250.0 + 20.0 * t),
                    Some(97.0 - 0.5 * t),
                    Some(6.0 + 0.3 * (t * 1.7).sin()),
                    Some(55.0 + 2.0 * t + (t * 0.9).cos()),
                    Some(30.0 + 4.0 * t + 2.0 * (t * 2.3).sin()),
                ]
            })
            .collect();
        let (imputer, filled) = ImputationModel::fit_transform(&features, &table, MiceConfig::default())?;
        let preprocessor = Preprocessor {
            modality: Modality::Clinical,
            clinical_features: features.clone(),
            imputer: Some(imputer),
            normalizer: Some(Normalizer::fit(&filled)),
            pca: None,
        };
        let x = Matrix::zeros(2, features.len());
        let y = [false, true];
        let stage = |label: LabelKind, bases: &[(&str, f64)], meta: LogisticModel| -> Result<TrainedStage> {
            let mut specs = Vec::new();
            let mut base = Vec::new();
            for &(name, p) in bases {
                let mut spec = LearnerSpec::constant(p)?;
                spec.name = name.to_string();
                base.push(train(&spec, &x, &y)?);
                specs.push(spec);
            }
            Ok(TrainedStage {
                label,
                preprocessor: preprocessor.clone(),
                model: StackingModel {
                    schema_version: STACKING_SCHEMA_VERSION,
                    specs,
                    base,
                    meta,
                    balance: crate::dataset::BalancePlan::for_label(label),
                    folds: Vec::new(),
                    selection: None,
                    audit: LeakageAudit::default(),
                },
            })
        };
        if !(0.0..=1.0).contains(&risk) {
            return Err(Error::OutOfRange {
                name: "risk".into(),
                value: risk,
                lo: 0.0,
                hi: 1.0,
            });
        }
        // the meta-learner ignores its input and returns the stage-1 score
        let risk_meta = LogisticModel {
            intercept: (risk / (1.0 - risk)).ln(),
            weights: vec![0.0],
            iterations: 0,
            converged: true,
        };
        let risk_stage = stage(LabelKind::Risk, &[("constant", risk)], risk_meta)?;
        let nomogram = NomogramModel::reference();
        let outcome_meta = LogisticModel {
            intercept: 0.0,
            weights: vec![0.0; 3],
            iterations: 0,
            converged: true,
        };
        let bases: Vec<(&str, f64)> = nomogram.predictors.iter().map(String::as_str).zip([0.9, 0.8, 0.7]).collect();
        let outcome_stage = stage(LabelKind::Outcome, &bases, outcome_meta)?;
        let bundle = ModelBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            feature_schema: FeatureSchema {
                modality: Modality::Clinical,
                clinical: features
                    .iter()
                    .map(|n| FeatureSpec {
                        name: n.clone(),
                        unit: unit_for(n).into(),
                    })
                    .collect(),
                image_length: 0,
            },
            gamma: GammaMap::default(),
            risk: risk_stage,
            outcome: Some(outcome_stage),
            nomogram: Some(nomogram),
            metadata: TrainingMetadata {
                seed: 0,
                dataset_fingerprint: String::new(),
                created_at: None,
                config: None,
                stages: Vec::new(),
            },
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub pipeline: PipelineConfig,
    pub modality: Modality,
    pub nomogram: FitConfig,
    pub gamma: GammaMap,
    #[serde(default)]
    pub created_at: Option<String>,
}

impl BundleConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            pipeline: PipelineConfig::new(seed),
            modality: Modality::Fused,
            nomogram: FitConfig {
                seed,
                ..FitConfig::default()
            },
            gamma: GammaMap::default(),
            created_at: None,
        }
    }
}

/// Cross-validation results gathered while training a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub risk: CrossValidation,
    pub outcome: CrossValidation,
}

/// Trains stage 1 on the whole cohort and stage 2 plus the nomogram on its
/// high-risk patients.
pub fn train_bundle(cohort: &Cohort, config: &BundleConfig) -> Result<(ModelBundle, TrainingReport)> {
    let (risk, risk_cv) = train_stage(cohort, &config.pipeline, config.modality, LabelKind::Risk)?;
    let (outcome, nomogram, outcome_cv) = train_outcome(cohort, &config.pipeline, config.modality, &config.nomogram)?;
    let stages = vec![StageSummary::from_cv(&risk_cv), StageSummary::from_cv(&outcome_cv)];
    let bundle = ModelBundle::assemble(cohort, config, risk, outcome, nomogram, stages)?;
    Ok((
        bundle,
        TrainingReport {
            risk: risk_cv,
            outcome: outcome_cv,
        },
    ))
}

impl ModelBundle {
    /// Combines separately trained stages into a validated bundle.
    pub fn assemble(
        cohort: &Cohort,
        config: &BundleConfig,
        risk: TrainedStage,
        outcome: TrainedStage,
        nomogram: NomogramModel,
        stages: Vec<StageSummary>,
    ) -> Result<Self> {
        let names = if config.modality.uses_clinical() {
            config.pipeline.clinical_features.clone()
        } else {
            Vec::new()
        };
        let bundle = ModelBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            feature_schema: FeatureSchema {
                modality: config.modality,
                clinical: names
                    .iter()
                    .map(|n| FeatureSpec {
                        name: n.clone(),
                        unit: unit_for(n).into(),
                    })
                    .collect(),
                image_length: if config.modality.uses_image() {
                    cohort.feature_length()
                } else {
                    0
                },
            },
            gamma: config.gamma.clone(),
            risk,
            outcome: Some(outcome),
            nomogram: Some(nomogram),
            metadata: TrainingMetadata {
                seed: config.pipeline.seed,
                dataset_fingerprint: dataset_fingerprint(cohort)?,
                created_at: config.created_at.clone(),
                config: Some(config.pipeline.clone()),
                stages,
            },
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Inputs for the bundle's stages from a cohort, in schema order.
pub fn cohort_inputs(bundle: &ModelBundle, cohort: &Cohort) -> Result<ModalityInputs> {
    ModalityInputs::from_cohort(cohort, &bundle.feature_schema.names(), bundle.feature_schema.modality)
}

//! Single-patient prediction against a model bundle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::dataset::{Gender, Outcome, RiskLabel, AGE, GENDER};
use crate::error::{Error, Result};
use crate::evaluation::CUTOFF;
use crate::matrix::Matrix;
use crate::pipeline::ModalityInputs;
use crate::preprocess::{gamma_correct, GrayImage};

/// How requests with missing clinical values are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Reject, naming every missing field.
    Strict,
    /// Fill with the bundle's chained-equation imputer.
    #[default]
    Impute,
}

impl MissingPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Some(Self::Strict),
            "impute" => Some(Self::Impute),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    /// Named biomarker values; `null` or absent means missing.
    #[serde(default)]
    pub biomarkers: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_features: Option<Vec<f64>>,
    /// Raw grey image whose gamma-corrected pixels serve as the feature
    /// vector; the pixel count must equal the bundle's image length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<GrayImage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub class: RiskLabel,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorPoints {
    pub predictor: String,
    pub score: f64,
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathAssessment {
    pub probability: f64,
    pub linear_prediction: f64,
    pub predictors: Vec<PredictorPoints>,
    pub total_points: f64,
    pub classification: Outcome,
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub risk: RiskAssessment,
    /// Present exactly when the risk class is high.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<DeathAssessment>,
    /// Clinical inputs that were missing and imputed.
    #[serde(default)]
    pub imputed: Vec<String>,
}

fn invalid(fields: Vec<String>, message: &str) -> Error {
    Error::Request {
        fields,
        message: message.into(),
    }
}

/// Validates a request against the bundle schema and builds model inputs.
/// Returns the inputs and the names of missing clinical fields.
pub fn request_inputs(bundle: &ModelBundle, request: &PredictRequest, policy: MissingPolicy) -> Result<(ModalityInputs, Vec<String>)> {
    let schema = &bundle.feature_schema;
    let names = schema.names();
    let unknown: Vec<String> = request
        .biomarkers
        .keys()
        .filter(|k| k.as_str() == AGE || k.as_str() == GENDER || !names.contains(k))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(invalid(unknown, "unknown biomarker"));
    }
    let gender = match &request.gender {
        Some(g) => Some(Gender::parse(g).ok_or_else(|| invalid(vec![GENDER.into()], "expected male, female or unknown"))?),
        None => None,
    };
    let mut bad = Vec::new();
    if request.age.is_some_and(|a| !(a >= 0.0) || !a.is_finite()) {
        bad.push(AGE.to_string());
    }
    for (k, v) in &request.biomarkers {
        if v.is_some_and(|v| !v.is_finite()) {
            bad.push(k.clone());
        }
    }
    if !bad.is_empty() {
        return Err(invalid(bad, "value out of range"));
    }
    let row: Vec<Option<f64>> = names
        .iter()
        .map(|n| match n.as_str() {
            AGE => request.age,
            GENDER => gender.and_then(Gender::encode),
            other => request.biomarkers.get(other).copied().flatten(),
        })
        .collect();
    let missing: Vec<String> = names.iter().zip(&row).filter(|(_, v)| v.is_none()).map(|(n, _)| n.clone()).collect();
    if policy == MissingPolicy::Strict && !missing.is_empty() {
        return Err(invalid(missing, "required in strict mode"));
    }
    let image = if schema.modality.uses_image() {
        let d = schema.image_length;
        let features = match (&request.image_features, &request.image) {
            (Some(_), Some(_)) => {
                return Err(invalid(vec!["image_features".into(), "image".into()], "give one image input, not both"))
            }
            (Some(f), None) => f.clone(),
            (None, Some(img)) => {
                if img.pixels.len() != img.width as usize * img.height as usize {
                    return Err(invalid(vec!["image".into()], "pixel count does not match width x height"));
                }
                gamma_correct(img, &bundle.gamma)?
            }
            (None, None) => return Err(invalid(vec!["image_features".into()], "required by this model")),
        };
        if features.len() != d {
            let field = if request.image.is_some() { "image" } else { "image_features" };
            return Err(invalid(
                vec![field.into()],
                &format!("expected {d} values, got {}", features.len()),
            ));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(invalid(vec!["image_features".into()], "values must be finite"));
        }
        Some(Matrix::from_vec(1, d, features)?)
    } else {
        None
    };
    Ok((
        ModalityInputs {
            clinical: vec![if schema.modality.uses_clinical() { row } else { Vec::new() }],
            image,
        },
        missing,
    ))
}

/// Stage 1, then stage 2 and the nomogram for high-risk patients.
pub fn predict(bundle: &ModelBundle, request: &PredictRequest, policy: MissingPolicy) -> Result<PredictResponse> {
    let (inputs, missing) = request_inputs(bundle, request, policy)?;
    let p = bundle.risk.predict(&inputs)?[0];
    let class = if p >= CUTOFF { RiskLabel::High } else { RiskLabel::Low };
    let death = if class == RiskLabel::High {
        let stage = bundle.outcome.as_ref().ok_or_else(|| Error::MissingStage("outcome stage".into()))?;
        let nomogram = bundle.nomogram.as_ref().ok_or_else(|| Error::MissingStage("nomogram".into()))?;
        let scores = stage.base_scores(&inputs)?;
        let row = scores.row(0);
        let s = nomogram.score(row)?;
        Some(DeathAssessment {
            probability: s.probability,
            linear_prediction: s.linear_prediction,
            predictors: nomogram
                .predictors
                .iter()
                .zip(row)
                .zip(&s.points)
                .map(|((n, &score), &points)| PredictorPoints {
                    predictor: n.clone(),
                    score,
                    points,
                })
                .collect(),
            total_points: s.total_points,
            classification: s.classification,
            cutoff: nomogram.cutoff,
        })
    } else {
        None
    };
    Ok(PredictResponse {
        risk: RiskAssessment { class, probability: p },
        death,
        imputed: missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> PredictRequest {
        PredictRequest {
            gender: Some("female".into()),
            age: Some(64.0),
            biomarkers: [("ldh", 310.0), ("o2", 93.0), ("wbc", 7.1), ("crp", 52.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), Some(v)))
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn fixture_reproduces_reference_death_probability() {
        let b = ModelBundle::fixture(0.9).unwrap();
        let r = predict(&b, &request(), MissingPolicy::Strict).unwrap();
        assert_eq!(r.risk.class, RiskLabel::High);
        assert!((r.risk.probability - 0.9).abs() < 1e-12);
        let d = r.death.unwrap();
        let exact = 1.0 / (1.0 + 7.40335f64.exp());
        assert!((d.probability - exact).abs() < 1e-12);
        assert!((d.probability - 6.09e-4).abs() < 5e-6);
        assert_eq!(d.classification, Outcome::Survived);
        let sum: f64 = d.predictors.iter().map(|p| p.points).sum();
        assert!((sum - d.total_points).abs() < 1e-9);
    }

    #[test]
    fn low_risk_has_no_death_fields() {
        let b = ModelBundle::fixture(0.1).unwrap();
        let r = predict(&b, &request(), MissingPolicy::Strict).unwrap();
        assert_eq!(r.risk.class, RiskLabel::Low);
        assert!(r.death.is_none());
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("death"));
    }

    #[test]
    fn strict_mode_names_every_missing_field() {
        let b = ModelBundle::fixture(0.9).unwrap();
        let req = PredictRequest {
            gender: Some("male".into()),
            ..Default::default()
        };
        match predict(&b, &req, MissingPolicy::Strict).unwrap_err() {
            Error::Request { fields, .. } => assert_eq!(fields, ["ldh", "o2", "wbc", "age", "crp"]),
            e => panic!("{e}"),
        }
        let r = predict(&b, &req, MissingPolicy::Impute).unwrap();
        assert_eq!(r.imputed.len(), 5);
    }

    #[test]
    fn schema_violations_name_the_field() {
        let b = ModelBundle::fixture(0.9).unwrap();
        let mut req = request();
        req.biomarkers.insert("lactate".into(), Some(1.0));
        match predict(&b, &req, MissingPolicy::Impute).unwrap_err() {
            Error::Request { fields, .. } => assert_eq!(fields, ["lactate"]),
            e => panic!("{e}"),
        }
        let req = PredictRequest {
            age: Some(-3.0),
            ..request()
        };
        assert!(matches!(predict(&b, &req, MissingPolicy::Impute), Err(Error::Request { .. })));
        assert!(serde_json::from_str::<PredictRequest>(r#"{"agee": 3}"#).is_err());
    }

    #[test]
    fn missing_outcome_stage_is_a_configuration_error() {
        let mut b = ModelBundle::fixture(0.9).unwrap();
        b.outcome = None;
        assert!(matches!(predict(&b, &request(), MissingPolicy::Impute), Err(Error::MissingStage(_))));
    }
}

//! TOML configuration shared by every subcommand.
//!
//! ```toml
//! seed = 7
//! folds = 5
//! modality = "fused"          # clinical | image | fused
//!
//! [data]
//! clinical = "data/clinical.csv"
//! images = "data/image_features.csv"
//!
//! [pipeline]
//! clinical_features = ["ldh", "o2", "wbc", "age", "crp"]
//! pca_components = 64
//! whiten = true
//! mice_iterations = 10
//! gamma = 1.0
//! nomogram_bootstrap = 1000
//!
//! [synth]
//! n = 930
//! feature_length = 1024
//! missing_rate = 0.05
//! label_noise = 0.0
//!
//! [sweep]
//! k_max = 10
//! importance = "gini"         # gini | permutation
//!
//! [serve]
//! host = "127.0.0.1"
//! port = 8080                 # the PORT environment variable overrides this
//! bundle = "bundle.json"
//! history = "history.jsonl"
//! policy = "impute"           # impute | strict
//! ```
//!
//! Every key is optional; command-line flags take precedence.

use std::path::{Path, PathBuf};

use prognosis::bundle::BundleConfig;
use prognosis::nomogram::FitConfig;
use prognosis::pipeline::{Modality, PipelineConfig, DEFAULT_CLINICAL_FEATURES};
use prognosis::preprocess::GammaMap;
use prognosis::synth::SynthSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub folds: usize,
    pub modality: String,
    pub data: DataSection,
    pub pipeline: PipelineSection,
    pub synth: SynthSection,
    pub sweep: SweepSection,
    pub serve: ServeSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            folds: 5,
            modality: "fused".into(),
            data: DataSection::default(),
            pipeline: PipelineSection::default(),
            synth: SynthSection::default(),
            sweep: SweepSection::default(),
            serve: ServeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub clinical: Option<PathBuf>,
    pub images: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub clinical_features: Vec<String>,
    pub pca_components: usize,
    pub whiten: bool,
    pub mice_iterations: usize,
    pub gamma: f64,
    pub nomogram_bootstrap: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            clinical_features: DEFAULT_CLINICAL_FEATURES.iter().map(|s| s.to_string()).collect(),
            pca_components: 64,
            whiten: true,
            mice_iterations: 10,
            gamma: 1.0,
            nomogram_bootstrap: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n: usize,
    pub feature_length: usize,
    pub missing_rate: f64,
    pub label_noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthSpec::default();
        Self {
            n: d.n_low + d.n_survived + d.n_death,
            feature_length: d.feature_length,
            missing_rate: d.missing_rate,
            label_noise: d.label_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub k_max: usize,
    pub importance: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k_max: 10,
            importance: "gini".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    pub bundle: Option<PathBuf>,
    pub history: PathBuf,
    pub policy: String,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            bundle: None,
            history: PathBuf::from("history.jsonl"),
            policy: "impute".into(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn modality(&self) -> Result<Modality, String> {
        Modality::parse(&self.modality).ok_or_else(|| format!("unknown modality `{}`", self.modality))
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut c = PipelineConfig::new(self.seed);
        c.folds = self.folds;
        c.clinical_features = self.pipeline.clinical_features.clone();
        c.pca.components = self.pipeline.pca_components;
        c.pca.whiten = self.pipeline.whiten;
        c.mice.iterations = self.pipeline.mice_iterations;
        c
    }

    pub fn bundle_config(&self) -> Result<BundleConfig, String> {
        Ok(BundleConfig {
            pipeline: self.pipeline_config(),
            modality: self.modality()?,
            nomogram: FitConfig {
                bootstrap: self.pipeline.nomogram_bootstrap,
                seed: self.seed,
                ..FitConfig::default()
            },
            gamma: GammaMap::constant(self.pipeline.gamma).map_err(|e| e.to_string())?,
            created_at: None,
        })
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            feature_length: self.synth.feature_length,
            missing_rate: self.synth.missing_rate,
            label_noise: self.synth.label_noise,
            ..SynthSpec::with_total(self.synth.n, self.seed)
        }
    }

    /// Port from `PORT` when set, else the configured one.
    pub fn port(&self) -> Result<u16, String> {
        match std::env::var("PORT") {
            Ok(p) => p.trim().parse().map_err(|_| format!("PORT `{p}` is not a port number")),
            Err(_) => Ok(self.serve.port),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.modality().unwrap(), Modality::Fused);
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let c: Config = toml::from_str(&doc).unwrap();
        assert_eq!(c.synth.n, 930);
        assert_eq!(c.serve.policy, "impute");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("sed = 3").is_err());
    }
}

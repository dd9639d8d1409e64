//! End-to-end training of one stage on one modality.
//!
//! Every fold fits its own imputer, normaliser and PCA on the training rows
//! only, so no preprocessing statistic sees a test row. Candidates are
//! scored out of fold, the best three are stacked, and the stacked score is
//! itself cross-fitted so every reported probability is out of sample.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_folds, BalancePlan, Cohort, LabelKind, AGE, GENDER};
use crate::error::{Error, Result};
use crate::evaluation::{binary_weighted_report, evaluate_scores, ConfusionMatrix, MetricReport, ReportRow, ScoreEvaluation, CUTOFF};
use crate::feature_select::{rank_features, FeatureRanking, ImportanceMethod};
use crate::learners::{candidate_pool, ForestParams, LearnerSpec};
use crate::matrix::Matrix;
use crate::nomogram::{fit_nomogram, FitConfig, NomogramModel};
use crate::preprocess::{ImputationModel, MiceConfig, Normalizer, PcaConfig, PcaModel};
use crate::stacking::{crossfit_meta, fit_stacking_from_oof, generate_oof_with, rank_columns, LeakageAudit, OofPredictions, Selection, StackingModel};

/// The five clinical predictors used by default.
pub const DEFAULT_CLINICAL_FEATURES: [&str; 5] = ["ldh", "o2", "wbc", AGE, "crp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Clinical,
    Image,
    Fused,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Clinical, Modality::Image, Modality::Fused];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Clinical => "clinical",
            Modality::Image => "image",
            Modality::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
    }

    pub fn uses_clinical(self) -> bool {
        self != Modality::Image
    }

    pub fn uses_image(self) -> bool {
        self != Modality::Clinical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub clinical_features: Vec<String>,
    pub mice: MiceConfig,
    pub pca: PcaConfig,
    pub candidates: Vec<LearnerSpec>,
    pub folds: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            clinical_features: DEFAULT_CLINICAL_FEATURES.iter().map(|s| s.to_string()).collect(),
            mice: MiceConfig::default(),
            pca: PcaConfig::default(),
            candidates: candidate_pool(seed),
            folds: 5,
            seed,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new(7)
    }
}

/// Raw model inputs: clinical cells with missing markers and, when the
/// modality needs it, the image-feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityInputs {
    pub clinical: Vec<Vec<Option<f64>>>,
    pub image: Option<Matrix>,
}

impl ModalityInputs {
    pub fn from_cohort(cohort: &Cohort, clinical_features: &[String], modality: Modality) -> Result<Self> {
        let clinical = if modality.uses_clinical() {
            cohort.clinical_rows(clinical_features)?
        } else {
            vec![Vec::new(); cohort.len()]
        };
        let image = if modality.uses_image() {
            Some(cohort.image_matrix()?)
        } else {
            None
        };
        Ok(Self { clinical, image })
    }

    pub fn len(&self) -> usize {
        self.clinical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clinical.is_empty()
    }
}

/// Fitted preprocessing for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub modality: Modality,
    pub clinical_features: Vec<String>,
    pub imputer: Option<ImputationModel>,
    pub normalizer: Option<Normalizer>,
    pub pca: Option<PcaModel>,
}

impl Preprocessor {
    /// Fits on the given rows of `inputs`.
    pub fn fit(inputs: &ModalityInputs, rows: &[usize], modality: Modality, config: &PipelineConfig) -> Result<Self> {
        let (mut imputer, mut normalizer, mut pca) = (None, None, None);
        if modality.uses_clinical() {
            let table: Vec<Vec<Option<f64>>> = rows.iter().map(|&i| inputs.clinical[i].clone()).collect();
            let (model, filled) = ImputationModel::fit_transform(&config.clinical_features, &table, config.mice)?;
            normalizer = Some(Normalizer::fit(&filled));
            imputer = Some(model);
        }
        if modality.uses_image() {
            let image = inputs
                .image
                .as_ref()
                .ok_or_else(|| Error::Cohort("image features required for this modality".into()))?;
            pca = Some(PcaModel::fit(&image.select_rows(rows), config.pca)?);
        }
        Ok(Self {
            modality,
            clinical_features: if modality.uses_clinical() {
                config.clinical_features.clone()
            } else {
                Vec::new()
            },
            imputer,
            normalizer,
            pca,
        })
    }

    /// Image vector length expected, if any.
    pub fn image_length(&self) -> Option<usize> {
        self.pca.as_ref().map(|p| p.input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.clinical_features.len() + self.pca.as_ref().map_or(0, |p| p.n_components())
    }

    pub fn transform(&self, inputs: &ModalityInputs) -> Result<Matrix> {
        let clinical = match (&self.imputer, &self.normalizer) {
            (Some(imp), Some(norm)) => Some(norm.apply(&imp.apply(&inputs.clinical)?)?),
            _ => None,
        };
        let image = match &self.pca {
            Some(pca) => {
                let m = inputs
                    .image
                    .as_ref()
                    .ok_or_else(|| Error::Cohort("image features required for this modality".into()))?;
                Some(pca.transform(m)?)
            }
            None => None,
        };
        match (clinical, image) {
            (Some(c), Some(i)) => c.hstack(&i),
            (Some(c), None) => Ok(c),
            (None, Some(i)) => Ok(i),
            (None, None) => Err(Error::InvalidParameter("preprocessor has no inputs".into())),
        }
    }
}

/// Across-fold spread of the per-fold weighted metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldSpread {
    pub f1_mean: f64,
    pub f1_sd: f64,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn fold_spread(scores: &[f64], y: &[bool], folds: &[usize]) -> Result<FoldSpread> {
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    let mut f1 = Vec::with_capacity(k);
    let mut acc = Vec::with_capacity(k);
    for f in 0..k {
        let (s, l): (Vec<f64>, Vec<bool>) = (0..y.len()).filter(|&i| folds[i] == f).map(|i| (scores[i], y[i])).unzip();
        let r = binary_weighted_report(&ConfusionMatrix::from_scores(&s, &l, CUTOFF)?);
        f1.push(r.f1.value);
        acc.push(r.accuracy.value);
    }
    let (f1_mean, f1_sd) = mean_sd(&f1);
    let (accuracy_mean, accuracy_sd) = mean_sd(&acc);
    Ok(FoldSpread {
        f1_mean,
        f1_sd,
        accuracy_mean,
        accuracy_sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    pub name: String,
    pub evaluation: ScoreEvaluation,
    pub folds: FoldSpread,
}

impl ClassifierResult {
    fn new(name: String, scores: &[f64], y: &[bool], folds: &[usize]) -> Result<Self> {
        Ok(Self {
            name,
            evaluation: evaluate_scores(scores, y)?,
            folds: fold_spread(scores, y, folds)?,
        })
    }
}

/// Pooled out-of-fold results of every candidate and of the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub modality: Modality,
    pub label: LabelKind,
    pub folds: Vec<usize>,
    pub candidates: Vec<ClassifierResult>,
    pub selection: Selection,
    pub stacking: ClassifierResult,
    /// One column per candidate.
    pub oof: OofPredictions,
    pub stacking_scores: Vec<f64>,
    /// Producers of the stacked scores: the chosen bases and the meta-learners.
    pub audit: LeakageAudit,
}

impl CrossValidation {
    pub fn chosen_specs(&self, candidates: &[LearnerSpec]) -> Vec<LearnerSpec> {
        self.selection.chosen.iter().map(|&j| candidates[j].clone()).collect()
    }

    pub fn stacking_name(&self) -> String {
        let names: Vec<&str> = self
            .selection
            .chosen
            .iter()
            .map(|&j| self.candidates[j].name.as_str())
            .collect();
        format!("stacking({})", names.join("+"))
    }

    /// Candidate rows then the stacked row, blocked by modality.
    pub fn report_rows(&self) -> Vec<ReportRow> {
        let block = self.modality.as_str().to_string();
        let mut rows: Vec<ReportRow> = self
            .candidates
            .iter()
            .map(|c| ReportRow {
                block: block.clone(),
                classifier: c.name.clone(),
                report: c.evaluation.report.clone(),
            })
            .collect();
        rows.push(ReportRow {
            block,
            classifier: self.stacking_name(),
            report: self.stacking.evaluation.report.clone(),
        });
        rows
    }

    fn all_results(&self) -> impl Iterator<Item = (String, &ClassifierResult)> {
        self.candidates
            .iter()
            .map(|c| (c.name.clone(), c))
            .chain(std::iter::once((self.stacking_name(), &self.stacking)))
    }
}

/// Per-fold mean and standard deviation of F1 and accuracy for each run.
pub fn write_fold_csv<W: Write>(runs: &[CrossValidation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["block", "classifier", "f1_mean", "f1_sd", "accuracy_mean", "accuracy_sd"])?;
    for run in runs {
        for (name, r) in run.all_results() {
            w.write_record([
                run.modality.as_str().to_string(),
                name,
                format!("{:.6}", r.folds.f1_mean),
                format!("{:.6}", r.folds.f1_sd),
                format!("{:.6}", r.folds.accuracy_mean),
                format!("{:.6}", r.folds.accuracy_sd),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Cross-validates every candidate and the stack of the best three.
pub fn crossval_run(cohort: &Cohort, config: &PipelineConfig, modality: Modality, label: LabelKind) -> Result<CrossValidation> {
    let y = cohort.labels(label)?;
    let folds = stratified_folds(&y, config.folds, config.seed)?;
    let inputs = ModalityInputs::from_cohort(cohort, &config.clinical_features, modality)?;
    crossval_inputs(&inputs, &y, &folds, modality, label, config)
}

/// As [`crossval_run`] on prepared inputs and a given fold assignment.
pub fn crossval_inputs(
    inputs: &ModalityInputs,
    y: &[bool],
    folds: &[usize],
    modality: Modality,
    label: LabelKind,
    config: &PipelineConfig,
) -> Result<CrossValidation> {
    if inputs.len() != y.len() {
        return Err(Error::Shape(format!("{} input rows for {} labels", inputs.len(), y.len())));
    }
    if config.candidates.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "{} candidates given; at least three are required",
            config.candidates.len()
        )));
    }
    let balance = BalancePlan::for_label(label);
    let oof = generate_oof_with(&config.candidates, y, folds, balance, |train| {
        let pre = Preprocessor::fit(inputs, train, modality, config)?;
        let all = pre.transform(inputs)?;
        Ok((all.select_rows(train), all))
    })?;
    let names: Vec<String> = config.candidates.iter().map(|c| c.name.clone()).collect();
    let candidates = names
        .iter()
        .enumerate()
        .map(|(j, n)| ClassifierResult::new(n.clone(), &oof.scores.column(j), y, folds))
        .collect::<Result<Vec<_>>>()?;
    let selection = rank_columns(&names, &oof.scores, y, 3)?;
    let chosen = oof.select(&selection.chosen);
    let (stacking_scores, audit) = crossfit_meta(&chosen, y, balance)?;
    let stacking = ClassifierResult::new("stacking".into(), &stacking_scores, y, folds)?;
    Ok(CrossValidation {
        modality,
        label,
        folds: folds.to_vec(),
        candidates,
        selection,
        stacking,
        oof,
        stacking_scores,
        audit,
    })
}

/// Preprocessing plus stacked classifier for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedStage {
    pub label: LabelKind,
    pub preprocessor: Preprocessor,
    pub model: StackingModel,
}

impl TrainedStage {
    pub fn base_scores(&self, inputs: &ModalityInputs) -> Result<Matrix> {
        self.model.base_scores(&self.preprocessor.transform(inputs)?)
    }

    pub fn predict(&self, inputs: &ModalityInputs) -> Result<Vec<f64>> {
        let s = self.base_scores(inputs)?;
        Ok(s.iter_rows().map(|r| self.model.combine(r)).collect())
    }

    pub fn base_names(&self) -> Vec<String> {
        self.model.specs.iter().map(|s| s.name.clone()).collect()
    }
}

/// Cross-validates, then fits the chosen stack on every row. The meta-learner
/// is fitted on the cross-validated base scores.
pub fn train_stage(
    cohort: &Cohort,
    config: &PipelineConfig,
    modality: Modality,
    label: LabelKind,
) -> Result<(TrainedStage, CrossValidation)> {
    let y = cohort.labels(label)?;
    let folds = stratified_folds(&y, config.folds, config.seed)?;
    let inputs = ModalityInputs::from_cohort(cohort, &config.clinical_features, modality)?;
    let cv = crossval_inputs(&inputs, &y, &folds, modality, label, config)?;
    let specs = cv.chosen_specs(&config.candidates);
    let all: Vec<usize> = (0..y.len()).collect();
    let preprocessor = Preprocessor::fit(&inputs, &all, modality, config)?;
    let x = preprocessor.transform(&inputs)?;
    let mut model = fit_stacking_from_oof(
        &specs,
        &x,
        &y,
        &folds,
        BalancePlan::for_label(label),
        cv.oof.select(&cv.selection.chosen),
    )?;
    model.selection = Some(cv.selection.clone());
    Ok((
        TrainedStage {
            label,
            preprocessor,
            model,
        },
        cv,
    ))
}

/// Second stage on the high-risk patients, with the nomogram fitted on the
/// chosen bases' out-of-fold scores.
pub fn train_outcome(
    cohort: &Cohort,
    config: &PipelineConfig,
    modality: Modality,
    nomogram: &FitConfig,
) -> Result<(TrainedStage, NomogramModel, CrossValidation)> {
    let high = cohort.high_risk();
    let (stage, cv) = train_stage(&high, config, modality, LabelKind::Outcome)?;
    let y = high.labels(LabelKind::Outcome)?;
    let scores = cv.oof.scores.select_cols(&cv.selection.chosen);
    let model = fit_nomogram(&scores, &y, &stage.base_names(), nomogram)?;
    Ok((stage, model, cv))
}

/// Every clinical variable of a cohort: age, gender, then the biomarkers.
pub fn clinical_variables(cohort: &Cohort) -> Vec<String> {
    let mut v = vec![AGE.to_string(), GENDER.to_string()];
    v.extend(cohort.biomarker_names().iter().cloned());
    v
}

/// Ranks clinical variables by forest importance after imputing the whole
/// table.
pub fn rank_clinical(
    cohort: &Cohort,
    label: LabelKind,
    variables: &[String],
    forest: ForestParams,
    method: ImportanceMethod,
    seed: u64,
) -> Result<FeatureRanking> {
    let y = cohort.labels(label)?;
    let rows = cohort.clinical_rows(variables)?;
    let (_, filled) = ImputationModel::fit_transform(variables, &rows, MiceConfig::default())?;
    rank_features(&filled, &y, variables, forest, method, seed)
}

/// Cross-validated report of one learner on a subset of clinical variables,
/// for use with the top-k sweep.
pub fn clinical_cv_report(
    cohort: &Cohort,
    label: LabelKind,
    features: &[String],
    spec: &LearnerSpec,
    folds: usize,
    seed: u64,
) -> Result<MetricReport> {
    let y = cohort.labels(label)?;
    let fold_ids = stratified_folds(&y, folds, seed)?;
    let config = PipelineConfig {
        clinical_features: features.to_vec(),
        candidates: vec![spec.clone()],
        folds,
        seed,
        ..PipelineConfig::new(seed)
    };
    let inputs = ModalityInputs::from_cohort(cohort, features, Modality::Clinical)?;
    let oof = generate_oof_with(&config.candidates, &y, &fold_ids, BalancePlan::for_label(label), |train| {
        let pre = Preprocessor::fit(&inputs, train, Modality::Clinical, &config)?;
        let all = pre.transform(&inputs)?;
        Ok((all.select_rows(train), all))
    })?;
    Ok(evaluate_scores(&oof.scores.column(0), &y)?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn small_config(seed: u64) -> PipelineConfig {
        let mut c = PipelineConfig::new(seed);
        c.pca.components = 6;
        c.candidates = vec![
            LearnerSpec::logistic_regression(seed),
            LearnerSpec::lda(seed),
            LearnerSpec::knn(seed),
            LearnerSpec::constant(0.5).unwrap(),
        ];
        c
    }

    fn cohort(seed: u64) -> Cohort {
        let spec = SynthSpec {
            feature_length: 24,
            ..SynthSpec::with_total(150, seed)
        };
        generate(&spec).unwrap().0
    }

    #[test]
    fn modality_names_round_trip() {
        for m in Modality::ALL {
            assert_eq!(Modality::parse(m.as_str()), Some(m));
        }
        assert_eq!(Modality::parse("FUSED"), Some(Modality::Fused));
        assert_eq!(Modality::parse("x"), None);
    }

    #[test]
    fn preprocessor_dimensions() {
        let c = cohort(1);
        let config = small_config(1);
        for (m, d) in [(Modality::Clinical, 5), (Modality::Image, 6), (Modality::Fused, 11)] {
            let inputs = ModalityInputs::from_cohort(&c, &config.clinical_features, m).unwrap();
            let rows: Vec<usize> = (0..100).collect();
            let p = Preprocessor::fit(&inputs, &rows, m, &config).unwrap();
            assert_eq!(p.output_dim(), d);
            let x = p.transform(&inputs).unwrap();
            assert_eq!((x.rows(), x.cols()), (150, d));
            assert!(x.as_slice().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn crossval_shapes_and_audit() {
        let c = cohort(2);
        let cv = crossval_run(&c, &small_config(2), Modality::Fused, LabelKind::Risk).unwrap();
        assert_eq!(cv.candidates.len(), 4);
        assert_eq!(cv.report_rows().len(), 5);
        assert_eq!(cv.selection.chosen.len(), 3);
        assert!(!cv.selection.chosen.contains(&3), "constant learner should rank last");
        cv.audit.verify().unwrap();
        cv.oof.audit.verify().unwrap();
        // three bases and one meta-learner per fold
        assert_eq!(cv.audit.records.len(), 4 * 5);
    }

    #[test]
    fn crossval_is_deterministic() {
        let c = cohort(3);
        let a = crossval_run(&c, &small_config(3), Modality::Clinical, LabelKind::Risk).unwrap();
        let b = crossval_run(&c, &small_config(3), Modality::Clinical, LabelKind::Risk).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trained_stage_predicts_probabilities() {
        let c = cohort(4);
        let (stage, cv) = train_stage(&c, &small_config(4), Modality::Fused, LabelKind::Risk).unwrap();
        assert_eq!(stage.model.specs.len(), 3);
        let inputs = ModalityInputs::from_cohort(&c, &stage.preprocessor.clinical_features, Modality::Fused).unwrap();
        let p = stage.predict(&inputs).unwrap();
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(cv.stacking.evaluation.report.f1.value > 0.5);
    }
}

//! Patient records, cohort CSV ingestion, stratified fold planning and
//! replication-based class balancing.
//!
//! Clinical CSV layout: `id,gender,age,<biomarker columns...>,risk,outcome`.
//! Empty cells are missing values. Image features live in a second CSV keyed by
//! id with columns `id,f0..f{L-1}`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Default CNN feature-vector length.
pub const DEFAULT_FEATURE_LENGTH: usize = 1024;

/// Column names reserved for demographics in feature lists.
pub const AGE: &str = "age";
pub const GENDER: &str = "gender";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    /// Case-insensitive parse. Empty strings map to `Unknown`.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Some(Gender::Male),
            "female" | "f" => Some(Gender::Female),
            "" | "unknown" | "u" => Some(Gender::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    /// Numeric encoding used when gender enters a feature matrix.
    pub fn encode(self) -> Option<f64> {
        match self {
            Gender::Male => Some(1.0),
            Gender::Female => Some(0.0),
            Gender::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLabel {
    Low,
    High,
}

impl RiskLabel {
    pub fn parse(s: &str) -> Option<Option<Self>> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" => Some(None),
            "low" => Some(Some(RiskLabel::Low)),
            "high" => Some(Some(RiskLabel::High)),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::Low => "low",
            RiskLabel::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Survived,
    Death,
}

impl Outcome {
    pub fn parse(s: &str) -> Option<Option<Self>> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" => Some(None),
            "survived" => Some(Some(Outcome::Survived)),
            "death" => Some(Some(Outcome::Death)),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Survived => "survived",
            Outcome::Death => "death",
        }
    }
}

/// Which label a fold plan or experiment works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    /// Stage 1: low (negative) vs high (positive) risk.
    Risk,
    /// Stage 2: survived (negative) vs death (positive), high-risk patients only.
    Outcome,
}

impl LabelKind {
    pub fn class_names(self) -> [&'static str; 2] {
        match self {
            LabelKind::Risk => ["low", "high"],
            LabelKind::Outcome => ["survived", "death"],
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelKind::Risk => "risk",
            LabelKind::Outcome => "outcome",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub gender: Gender,
    pub age: Option<f64>,
    /// Values aligned with the owning cohort's `biomarker_names`; `None` is missing.
    pub biomarkers: Vec<Option<f64>>,
    pub image_features: Option<Vec<f64>>,
    pub risk: Option<RiskLabel>,
    pub outcome: Option<Outcome>,
}

impl PatientRecord {
    pub fn label(&self, kind: LabelKind) -> Option<bool> {
        match kind {
            LabelKind::Risk => self.risk.map(|r| r == RiskLabel::High),
            LabelKind::Outcome => self.outcome.map(|o| o == Outcome::Death),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    records: Vec<PatientRecord>,
    feature_length: usize,
    biomarker_names: Vec<String>,
}

impl Cohort {
    /// Validates every cohort and record invariant.
    pub fn new(
        biomarker_names: Vec<String>,
        feature_length: usize,
        records: Vec<PatientRecord>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut names = HashSet::new();
        for n in &biomarker_names {
            if n == AGE || n == GENDER || !names.insert(n.as_str()) {
                return Err(Error::Cohort(format!("invalid or repeated biomarker name `{n}`")));
            }
        }
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            if r.biomarkers.len() != biomarker_names.len() {
                return Err(Error::Cohort(format!(
                    "record `{}` has {} biomarkers, schema has {}",
                    r.id,
                    r.biomarkers.len(),
                    biomarker_names.len()
                )));
            }
            if let Some(f) = &r.image_features {
                if f.len() != feature_length {
                    return Err(Error::Cohort(format!(
                        "record `{}` has {} image features, cohort declares {feature_length}",
                        r.id,
                        f.len()
                    )));
                }
            }
            if r.outcome.is_some() && r.risk != Some(RiskLabel::High) {
                return Err(Error::Cohort(format!(
                    "record `{}` has an outcome label but is not high-risk",
                    r.id
                )));
            }
            if r.age.is_some_and(|a| !(a >= 0.0) || !a.is_finite()) {
                return Err(Error::Cohort(format!("record `{}` has a negative age", r.id)));
            }
        }
        Ok(Self {
            records,
            feature_length,
            biomarker_names,
        })
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_length(&self) -> usize {
        self.feature_length
    }

    pub fn biomarker_names(&self) -> &[String] {
        &self.biomarker_names
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn biomarker_index(&self, name: &str) -> Option<usize> {
        self.biomarker_names.iter().position(|n| n == name)
    }

    /// Binary labels, positive = high risk / death.
    pub fn labels(&self, kind: LabelKind) -> Result<Vec<bool>> {
        self.records
            .iter()
            .map(|r| r.label(kind).ok_or_else(|| Error::MissingLabel(r.id.clone())))
            .collect()
    }

    pub fn class_counts(&self, kind: LabelKind) -> [usize; 2] {
        let mut c = [0, 0];
        for r in &self.records {
            if let Some(l) = r.label(kind) {
                c[l as usize] += 1;
            }
        }
        c
    }

    /// Records matching a predicate, keeping the schema.
    pub fn filter(&self, keep: impl Fn(&PatientRecord) -> bool) -> Cohort {
        Cohort {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            feature_length: self.feature_length,
            biomarker_names: self.biomarker_names.clone(),
        }
    }

    /// The stage-2 population.
    pub fn high_risk(&self) -> Cohort {
        self.filter(|r| r.risk == Some(RiskLabel::High))
    }

    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            feature_length: self.feature_length,
            biomarker_names: self.biomarker_names.clone(),
        }
    }

    /// Resolves a clinical feature name: `age`, `gender`, or a biomarker.
    pub fn feature_value(&self, record: &PatientRecord, name: &str) -> Result<Option<f64>> {
        match name {
            AGE => Ok(record.age),
            GENDER => Ok(record.gender.encode()),
            _ => {
                let j = self
                    .biomarker_index(name)
                    .ok_or_else(|| Error::Cohort(format!("unknown clinical feature `{name}`")))?;
                Ok(record.biomarkers[j])
            }
        }
    }

    /// Clinical table with missing cells, one row per record.
    pub fn clinical_rows(&self, names: &[String]) -> Result<Vec<Vec<Option<f64>>>> {
        self.records
            .iter()
            .map(|r| names.iter().map(|n| self.feature_value(r, n)).collect())
            .collect()
    }

    /// Image-feature matrix; every record must carry a vector.
    pub fn image_matrix(&self) -> Result<Matrix> {
        let mut data = Vec::with_capacity(self.records.len() * self.feature_length);
        for r in &self.records {
            let f = r.image_features.as_ref().ok_or_else(|| {
                Error::Cohort(format!("record `{}` has no image features", r.id))
            })?;
            data.extend_from_slice(f);
        }
        Matrix::from_vec(self.records.len(), self.feature_length, data)
    }

    /// Attaches image vectors read from an id-keyed CSV.
    pub fn with_image_features(mut self, table: ImageFeatureTable) -> Result<Cohort> {
        let index: HashMap<&str, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let mut pending = Vec::with_capacity(table.rows.len());
        for (id, v) in table.rows {
            let i = *index.get(id.as_str()).ok_or_else(|| Error::UnknownId(id.clone()))?;
            pending.push((i, v));
        }
        for (i, v) in pending {
            self.records[i].image_features = Some(v);
        }
        self.feature_length = table.feature_length;
        Cohort::new(self.biomarker_names, self.feature_length, self.records)
    }
}

fn header(schema: &[String]) -> Vec<String> {
    let mut h = vec!["id".to_string(), GENDER.to_string(), AGE.to_string()];
    h.extend(schema.iter().cloned());
    h.push("risk".into());
    h.push("outcome".into());
    h
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let t = cell.trim();
    if t.is_empty() {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Malformed {
            row,
            column: column.to_string(),
            message: format!("`{t}` is not a finite number"),
        }),
    }
}

/// Reads the clinical table. Rows are numbered by file line (header = 1).
pub fn read_clinical_csv<R: Read>(reader: R, schema: &[String]) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let expected = header(schema);
    let found: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if found != expected {
        return Err(Error::Malformed {
            row: 1,
            column: "header".into(),
            message: format!("expected `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::Malformed {
                row,
                column: "*".into(),
                message: format!("{} cells, expected {}", rec.len(), expected.len()),
            });
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Malformed {
                row,
                column: "id".into(),
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let gender = Gender::parse(&rec[1]).ok_or_else(|| Error::Malformed {
            row,
            column: GENDER.into(),
            message: format!("unrecognized gender `{}`", &rec[1]),
        })?;
        let age = parse_cell(&rec[2], row, AGE)?;
        let biomarkers = schema
            .iter()
            .enumerate()
            .map(|(j, name)| parse_cell(&rec[3 + j], row, name))
            .collect::<Result<Vec<_>>>()?;
        let n = schema.len();
        let risk = RiskLabel::parse(&rec[3 + n]).ok_or_else(|| Error::Malformed {
            row,
            column: "risk".into(),
            message: format!("unrecognized risk label `{}`", &rec[3 + n]),
        })?;
        let outcome = Outcome::parse(&rec[4 + n]).ok_or_else(|| Error::Malformed {
            row,
            column: "outcome".into(),
            message: format!("unrecognized outcome label `{}`", &rec[4 + n]),
        })?;
        records.push(PatientRecord {
            id,
            gender,
            age,
            biomarkers,
            image_features: None,
            risk,
            outcome,
        });
    }
    Cohort::new(schema.to_vec(), 0, records)
}

pub fn load_clinical_csv(path: impl AsRef<Path>, schema: &[String]) -> Result<Cohort> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_clinical_csv(file, schema)
}

/// Reads the header of a clinical CSV and returns its biomarker columns.
pub fn sniff_schema(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let h: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if h.len() < 5 || h[0] != "id" || h[1] != GENDER || h[2] != AGE {
        return Err(Error::Malformed {
            row: 1,
            column: "header".into(),
            message: "expected id,gender,age,...,risk,outcome".into(),
        });
    }
    Ok(h[3..h.len() - 2].to_vec())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_clinical_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(&cohort.biomarker_names))?;
    for r in &cohort.records {
        let mut row = vec![r.id.clone(), r.gender.as_str().to_string(), fmt_opt(r.age)];
        row.extend(r.biomarkers.iter().map(|&v| fmt_opt(v)));
        row.push(r.risk.map(|l| l.as_str()).unwrap_or_default().to_string());
        row.push(r.outcome.map(|l| l.as_str()).unwrap_or_default().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Id-keyed image feature vectors as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatureTable {
    pub feature_length: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn read_image_csv<R: Read>(reader: R) -> Result<ImageFeatureTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let h = rdr.headers()?.clone();
    if h.is_empty() || h[0].trim() != "id" {
        return Err(Error::Malformed {
            row: 1,
            column: "header".into(),
            message: "first column must be `id`".into(),
        });
    }
    let feature_length = h.len() - 1;
    let names: Vec<String> = h.iter().skip(1).map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let mut v = Vec::with_capacity(feature_length);
        for (j, name) in names.iter().enumerate() {
            let cell = parse_cell(&rec[j + 1], row, name)?.ok_or_else(|| Error::Malformed {
                row,
                column: name.clone(),
                message: "image features cannot be missing".into(),
            })?;
            v.push(cell);
        }
        rows.push((id, v));
    }
    Ok(ImageFeatureTable {
        feature_length,
        rows,
    })
}

pub fn load_image_csv(path: impl AsRef<Path>) -> Result<ImageFeatureTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_image_csv(file)
}

/// Writes every record that has an image vector.
pub fn write_image_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut h = vec!["id".to_string()];
    h.extend((0..cohort.feature_length).map(|j| format!("f{j}")));
    w.write_record(&h)?;
    for r in &cohort.records {
        if let Some(f) = &r.image_features {
            let mut row = vec![r.id.clone()];
            row.extend(f.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Assignment of every record to one of `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratify_on: LabelKind,
    /// Record ids in cohort order.
    pub ids: Vec<String>,
    /// Fold index per record, aligned with `ids`.
    pub folds: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id).map(|i| self.folds[i])
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        fold_members(&self.folds, fold)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        fold_complement(&self.folds, fold)
    }
}

pub fn fold_members(folds: &[usize], fold: usize) -> Vec<usize> {
    (0..folds.len()).filter(|&i| folds[i] == fold).collect()
}

pub fn fold_complement(folds: &[usize], fold: usize) -> Vec<usize> {
    (0..folds.len()).filter(|&i| folds[i] != fold).collect()
}

/// Stratified fold indices for binary labels.
///
/// Each class is shuffled with the seeded generator, then dealt round-robin.
/// The dealing position carries over from one class to the next so that fold
/// sizes stay within one record of each other overall.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    let mut folds = vec![0usize; labels.len()];
    let mut rng = rng::seeded(seed);
    let mut next = 0usize;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class: if class { "positive" } else { "negative" }.into(),
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

pub fn plan_folds(cohort: &Cohort, k: usize, label: LabelKind, seed: u64) -> Result<FoldPlan> {
    let labels = cohort.labels(label)?;
    let folds = stratified_folds(&labels, k, seed).map_err(|e| match e {
        Error::ClassTooSmall { class, count, k } => Error::ClassTooSmall {
            class: label.class_names()[(class == "positive") as usize].to_string(),
            count,
            k,
        },
        other => other,
    })?;
    Ok(FoldPlan {
        k,
        seed,
        stratify_on: label,
        ids: cohort.ids(),
        folds,
    })
}

/// Whole-record replication factors for the training partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub negative: usize,
    pub positive: usize,
}

impl BalancePlan {
    /// Low-risk x4, high-risk x3.
    pub const RISK: BalancePlan = BalancePlan {
        negative: 4,
        positive: 3,
    };
    /// Survived x4, death x9.
    pub const OUTCOME: BalancePlan = BalancePlan {
        negative: 4,
        positive: 9,
    };
    pub const IDENTITY: BalancePlan = BalancePlan {
        negative: 1,
        positive: 1,
    };

    pub fn new(negative: usize, positive: usize) -> Result<Self> {
        if negative == 0 || positive == 0 {
            return Err(Error::InvalidParameter(
                "replication factors must be at least 1".into(),
            ));
        }
        Ok(Self { negative, positive })
    }

    pub fn for_label(kind: LabelKind) -> Self {
        match kind {
            LabelKind::Risk => Self::RISK,
            LabelKind::Outcome => Self::OUTCOME,
        }
    }

    pub fn factor(&self, positive: bool) -> usize {
        if positive {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Repeats each item `factor(label)` times, repeats adjacent, original order kept.
pub fn balance_by_replication<T: Clone>(items: &[T], labels: &[bool], plan: BalancePlan) -> Vec<T> {
    assert_eq!(items.len(), labels.len(), "one label per item");
    let mut out = Vec::with_capacity(items.len() * plan.negative.max(plan.positive));
    for (item, &l) in items.iter().zip(labels) {
        for _ in 0..plan.factor(l).max(1) {
            out.push(item.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Vec<String> {
        vec!["ldh".into(), "crp".into()]
    }

    fn record(id: &str, risk: RiskLabel) -> PatientRecord {
        PatientRecord {
            id: id.into(),
            gender: Gender::Female,
            age: Some(50.0),
            biomarkers: vec![Some(1.0), None],
            image_features: None,
            risk: Some(risk),
            outcome: None,
        }
    }

    #[test]
    fn empty_file_with_header_gives_empty_cohort() {
        let csv = "id,gender,age,ldh,crp,risk,outcome\n";
        let c = read_clinical_csv(csv.as_bytes(), &schema()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn empty_cell_is_missing_not_zero() {
        let csv = "id,gender,age,ldh,crp,risk,outcome\np1,MALE,61,,0,high,death\n";
        let c = read_clinical_csv(csv.as_bytes(), &schema()).unwrap();
        let r = &c.records()[0];
        assert_eq!(r.biomarkers, vec![None, Some(0.0)]);
        assert_eq!(r.gender, Gender::Male);
        assert_eq!(r.outcome, Some(Outcome::Death));
    }

    #[test]
    fn malformed_cell_names_row_and_column() {
        let csv = "id,gender,age,ldh,crp,risk,outcome\np1,f,61,1,2,low,\np2,f,61,abc,2,low,\n";
        match read_clinical_csv(csv.as_bytes(), &schema()) {
            Err(Error::Malformed { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "ldh");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let csv = "id,gender,age,ldh,crp,risk,outcome\np1,f,61,1,2,low,\np1,m,40,1,2,low,\n";
        assert!(matches!(
            read_clinical_csv(csv.as_bytes(), &schema()),
            Err(Error::DuplicateId(id)) if id == "p1"
        ));
    }

    #[test]
    fn outcome_requires_high_risk() {
        let mut r = record("a", RiskLabel::Low);
        r.outcome = Some(Outcome::Survived);
        assert!(Cohort::new(schema(), 0, vec![r]).is_err());
    }

    #[test]
    fn image_length_is_checked() {
        let mut r = record("a", RiskLabel::Low);
        r.image_features = Some(vec![0.0; 3]);
        assert!(Cohort::new(schema(), 4, vec![r.clone()]).is_err());
        assert!(Cohort::new(schema(), 3, vec![r]).is_ok());
    }

    #[test]
    fn five_folds_of_a_930_patient_cohort() {
        let labels: Vec<bool> = (0..930).map(|i| i >= 396).collect();
        let folds = stratified_folds(&labels, 5, 42).unwrap();
        for f in 0..5 {
            let low = (0..930).filter(|&i| folds[i] == f && !labels[i]).count();
            let high = (0..930).filter(|&i| folds[i] == f && labels[i]).count();
            assert!((79..=80).contains(&low), "fold {f}: {low} low");
            assert!((106..=107).contains(&high), "fold {f}: {high} high");
        }
    }

    #[test]
    fn even_split_of_ten() {
        let labels = vec![true; 10];
        let mut both = labels.clone();
        both.extend(vec![false; 10]);
        let folds = stratified_folds(&both, 5, 1).unwrap();
        for f in 0..5 {
            assert_eq!((0..10).filter(|&i| folds[i] == f).count(), 2);
        }
    }

    #[test]
    fn small_class_is_an_error() {
        let labels = vec![true, true, true, false, false];
        assert!(matches!(
            stratified_folds(&labels, 3, 0),
            Err(Error::ClassTooSmall { count: 2, k: 3, .. })
        ));
    }

    #[test]
    fn fold_plan_is_deterministic() {
        let recs: Vec<_> = (0..20)
            .map(|i| record(&format!("p{i}"), if i % 2 == 0 { RiskLabel::Low } else { RiskLabel::High }))
            .collect();
        let c = Cohort::new(schema(), 0, recs).unwrap();
        let a = plan_folds(&c, 5, LabelKind::Risk, 9).unwrap();
        let b = plan_folds(&c, 5, LabelKind::Risk, 9).unwrap();
        assert_eq!(a, b);
        assert!(plan_folds(&c, 5, LabelKind::Outcome, 9).is_err());
    }

    #[test]
    fn replication_counts_for_both_plans() {
        let cases = [(317, false, 4, 1268), (427, true, 3, 1281)];
        for (n, label, _, expected) in cases {
            let ids: Vec<usize> = (0..n).collect();
            let out = balance_by_replication(&ids, &vec![label; n], BalancePlan::RISK);
            assert_eq!(out.len(), expected);
        }
        let ids: Vec<usize> = (0..427).collect();
        let labels: Vec<bool> = (0..427).map(|i| i >= 291).collect();
        let out = balance_by_replication(&ids, &labels, BalancePlan::OUTCOME);
        assert_eq!(out.iter().filter(|&&i| i < 291).count(), 1164);
        assert_eq!(out.iter().filter(|&&i| i >= 291).count(), 1224);
    }

    #[test]
    fn replication_identity_and_adjacency() {
        let ids = vec!["a", "b", "c"];
        let labels = vec![true, false, true];
        assert_eq!(balance_by_replication(&ids, &labels, BalancePlan::IDENTITY), ids);
        let out = balance_by_replication(&ids, &labels, BalancePlan::new(1, 2).unwrap());
        assert_eq!(out, vec!["a", "a", "b", "c", "c"]);
        assert!(BalancePlan::new(0, 1).is_err());
    }
}

//! Per-class cohort summary: chi-square on gender, rank-sum tests elsewhere.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::stats::{chi_square, wilcoxon_rank_sum, StatTestResult};
use crate::dataset::{Cohort, Gender, LabelKind, AGE, GENDER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    /// Gender; `positives` counts males.
    Categorical,
    /// Values observed only in {0, 1}; `positives` counts ones.
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub observed: usize,
    pub missing: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1).
    pub sd: Option<f64>,
    pub positives: Option<usize>,
}

impl GroupSummary {
    fn of(values: &[Option<f64>], binary: bool) -> Self {
        let obs: Vec<f64> = values.iter().flatten().copied().collect();
        let n = obs.len();
        let mean = (n > 0).then(|| obs.iter().sum::<f64>() / n as f64);
        let sd = mean.filter(|_| n > 1).map(|m| {
            (obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self {
            observed: n,
            missing: values.len() - n,
            mean,
            sd,
            positives: binary.then(|| obs.iter().filter(|&&v| v == 1.0).count()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub variable: String,
    pub kind: VariableKind,
    /// Negative class, positive class, everyone.
    pub groups: [GroupSummary; 3],
    /// Absent when a class has no observed values.
    pub test: Option<StatTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortProfile {
    pub label: LabelKind,
    pub class_counts: [usize; 2],
    pub rows: Vec<ProfileRow>,
}

/// Summarises gender, age and every biomarker by class of `label`.
/// Records without that label are skipped.
pub fn profile(cohort: &Cohort, label: LabelKind) -> Result<CohortProfile> {
    let labelled: Vec<_> = cohort
        .records()
        .iter()
        .filter_map(|r| r.label(label).map(|l| (r, l)))
        .collect();
    if labelled.is_empty() {
        return Err(Error::Cohort(format!("no records carry a {label} label")));
    }
    let mut class_counts = [0, 0];
    for (_, l) in &labelled {
        class_counts[*l as usize] += 1;
    }
    let mut rows = Vec::new();

    let mut gender = [[0u64; 2]; 2];
    let mut gender_values: [Vec<Option<f64>>; 2] = Default::default();
    for (r, l) in &labelled {
        let v = r.gender.encode();
        gender_values[*l as usize].push(v);
        match r.gender {
            Gender::Male => gender[0][*l as usize] += 1,
            Gender::Female => gender[1][*l as usize] += 1,
            Gender::Unknown => {}
        }
    }
    let all: Vec<Option<f64>> = gender_values.iter().flatten().copied().collect();
    rows.push(ProfileRow {
        variable: GENDER.into(),
        kind: VariableKind::Categorical,
        groups: [
            GroupSummary::of(&gender_values[0], true),
            GroupSummary::of(&gender_values[1], true),
            GroupSummary::of(&all, true),
        ],
        test: chi_square(gender).ok(),
    });

    let mut names = vec![AGE.to_string()];
    names.extend(cohort.biomarker_names().iter().cloned());
    for name in names {
        let mut by_class: [Vec<Option<f64>>; 2] = Default::default();
        for (r, l) in &labelled {
            by_class[*l as usize].push(cohort.feature_value(r, &name)?);
        }
        let all: Vec<Option<f64>> = by_class.iter().flatten().copied().collect();
        let binary = all.iter().flatten().all(|&v| v == 0.0 || v == 1.0) && all.iter().any(Option::is_some);
        let a: Vec<f64> = by_class[0].iter().flatten().copied().collect();
        let b: Vec<f64> = by_class[1].iter().flatten().copied().collect();
        rows.push(ProfileRow {
            variable: name,
            kind: if binary { VariableKind::Binary } else { VariableKind::Continuous },
            groups: [
                GroupSummary::of(&by_class[0], binary),
                GroupSummary::of(&by_class[1], binary),
                GroupSummary::of(&all, binary),
            ],
            test: wilcoxon_rank_sum(&a, &b).ok(),
        });
    }
    Ok(CohortProfile {
        label,
        class_counts,
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CohortProfile {
    /// One row per variable; group columns are prefixed with the class name
    /// and `total`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let [neg, pos] = self.label.class_names();
        let mut header = vec!["variable".to_string(), "kind".to_string()];
        for g in [neg, pos, "total"] {
            for f in ["n", "missing", "mean", "sd", "positive"] {
                header.push(format!("{g}_{f}"));
            }
        }
        header.extend(["test", "statistic", "p_value"].map(String::from));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.variable.clone(),
                match row.kind {
                    VariableKind::Categorical => "categorical",
                    VariableKind::Binary => "binary",
                    VariableKind::Continuous => "continuous",
                }
                .to_string(),
            ];
            for g in &row.groups {
                rec.push(g.observed.to_string());
                rec.push(g.missing.to_string());
                rec.push(opt(g.mean));
                rec.push(opt(g.sd));
                rec.push(g.positives.map(|p| p.to_string()).unwrap_or_default());
            }
            match &row.test {
                Some(t) => {
                    rec.push(t.test.as_str().into());
                    rec.push(t.statistic.to_string());
                    rec.push(t.p_value.to_string());
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

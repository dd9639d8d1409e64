use std::collections::HashSet;

use prognosis::dataset::{
    balance_by_replication, plan_folds, read_clinical_csv, read_image_csv, write_clinical_csv, write_image_csv,
    BalancePlan, Cohort, Gender, LabelKind, Outcome, PatientRecord, RiskLabel,
};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        1 => Just(None),
        4 => (-1e6f64..1e6).prop_map(Some),
    ]
}

fn record(markers: usize, features: usize) -> impl Strategy<Value = PatientRecord> {
    (
        prop_oneof![Just(Gender::Male), Just(Gender::Female)],
        prop_oneof![1 => Just(None), 4 => (0.0f64..110.0).prop_map(Some)],
        prop::collection::vec(value(), markers),
        prop::option::of(prop::collection::vec(-50.0f64..50.0, features)),
        0u8..5,
    )
        .prop_map(|(gender, age, biomarkers, image_features, labels)| {
            let (risk, outcome) = match labels {
                0 => (None, None),
                1 => (Some(RiskLabel::Low), None),
                2 => (Some(RiskLabel::High), None),
                3 => (Some(RiskLabel::High), Some(Outcome::Survived)),
                _ => (Some(RiskLabel::High), Some(Outcome::Death)),
            };
            PatientRecord {
                id: String::new(),
                gender,
                age,
                biomarkers,
                image_features,
                risk,
                outcome,
            }
        })
}

fn cohort() -> impl Strategy<Value = Cohort> {
    (0usize..4, 1usize..6).prop_flat_map(|(markers, features)| {
        prop::collection::vec(record(markers, features), 0..25).prop_map(move |mut recs| {
            for (i, r) in recs.iter_mut().enumerate() {
                r.id = format!("p{i:03}");
            }
            let names = (0..markers).map(|j| format!("m{j}")).collect();
            Cohort::new(names, features, recs).unwrap()
        })
    })
}

fn labels_with_both(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_reproduces_cohort(c in cohort()) {
        let mut clinical = Vec::new();
        write_clinical_csv(&c, &mut clinical).unwrap();
        let back = read_clinical_csv(clinical.as_slice(), c.biomarker_names()).unwrap();

        let mut images = Vec::new();
        write_image_csv(&c, &mut images).unwrap();
        let table = read_image_csv(images.as_slice()).unwrap();
        let back = if c.records().iter().any(|r| r.image_features.is_some()) {
            back.with_image_features(table).unwrap()
        } else {
            back
        };
        // records without a feature row stay without one
        let stripped: Vec<PatientRecord> = c.records().to_vec();
        prop_assert_eq!(back.records(), stripped.as_slice());
    }

    #[test]
    fn folds_partition_and_stratify(
        labels in (20usize..200).prop_flat_map(labels_with_both),
        k in 2usize..8,
        seed in any::<u64>(),
    ) {
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos >= k && labels.len() - pos >= k);
        let recs: Vec<PatientRecord> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| PatientRecord {
                id: format!("r{i}"),
                gender: Gender::Female,
                age: None,
                biomarkers: vec![],
                image_features: None,
                risk: Some(if l { RiskLabel::High } else { RiskLabel::Low }),
                outcome: None,
            })
            .collect();
        let c = Cohort::new(vec![], 4, recs).unwrap();
        let plan = plan_folds(&c, k, LabelKind::Risk, seed).unwrap();
        prop_assert_eq!(&plan, &plan_folds(&c, k, LabelKind::Risk, seed).unwrap());

        let mut seen = HashSet::new();
        for f in 0..k {
            for i in plan.test_indices(f) {
                prop_assert!(seen.insert(i), "row {} in two folds", i);
            }
            let train: HashSet<usize> = plan.train_indices(f).into_iter().collect();
            prop_assert!(plan.test_indices(f).iter().all(|i| !train.contains(i)));
        }
        prop_assert_eq!(seen.len(), labels.len());

        let rate = pos as f64 / labels.len() as f64;
        for f in 0..k {
            let test = plan.test_indices(f);
            let p = test.iter().filter(|&&i| labels[i]).count() as f64;
            prop_assert!((p - rate * test.len() as f64).abs() <= 1.0 + 1e-9, "fold {}: {} of {}", f, p, test.len());
        }
    }

    #[test]
    fn replication_only_repeats_existing_items(
        labels in prop::collection::vec(any::<bool>(), 0..60),
        neg in 1usize..10,
        pos in 1usize..10,
    ) {
        let ids: Vec<usize> = (0..labels.len()).collect();
        let plan = BalancePlan::new(neg, pos).unwrap();
        let out = balance_by_replication(&ids, &labels, plan);
        let present: HashSet<usize> = ids.iter().copied().collect();
        prop_assert!(out.iter().all(|i| present.contains(i)));
        for &i in &ids {
            let copies = out.iter().filter(|&&x| x == i).count();
            prop_assert_eq!(copies, plan.factor(labels[i]));
        }
    }
}

use fgray::data::{read_csv, standardize, write_csv, ConstantColumns};
use fgray::{CompetingRisksData, CsvSchema, FgError};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = CompetingRisksData> {
    (2usize..15, 1usize..5).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(1e-6f64..1e3, n),
            proptest::collection::vec(0u8..3, n),
            proptest::collection::vec(-1e6f64..1e6, n * p),
            Just((n, p)),
        )
            .prop_map(|(t, s, z, (n, p))| {
                CompetingRisksData::new(Array1::from(t), s, Array2::from_shape_vec((n, p), z).unwrap(), None)
                    .unwrap()
            })
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(d in dataset()) {
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn csv_round_trip_keeps_ids(d in dataset()) {
        let ids: Vec<String> = (0..d.n()).map(|i| format!("s{i}")).collect();
        let d = d.with_ids(ids).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let schema = CsvSchema { id_col: Some("id".into()), ..CsvSchema::default() };
        prop_assert_eq!(read_csv(buf.as_slice(), &schema).unwrap(), d);
    }

    #[test]
    fn standardization_is_idempotent(d in dataset()) {
        let Ok((once, s1)) = standardize(&d, ConstantColumns::Drop) else { return Ok(()) };
        let (twice, s2) = standardize(&once, ConstantColumns::Reject).unwrap();
        for (a, b) in once.covariates().iter().zip(twice.covariates()) {
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
        prop_assert!(s2.means.iter().all(|m| m.abs() < 1e-9));
        prop_assert!(s2.scales.iter().all(|s| (s - 1.0).abs() < 1e-9));
        let beta = Array1::from_shape_fn(s1.kept.len(), |j| j as f64 - 1.0);
        let back = s1.to_standardized(s1.to_original(beta.view()).view());
        for (kept, &j) in s1.kept.iter().enumerate() {
            prop_assert!((back[j] - beta[kept]).abs() < 1e-9 * beta[kept].abs().max(1.0));
        }
    }

    #[test]
    fn standardized_columns_have_unit_sd(d in dataset()) {
        let Ok((s, _)) = standardize(&d, ConstantColumns::Drop) else { return Ok(()) };
        let n = s.n() as f64;
        for col in s.covariates().columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn invalid_status_names_the_row() {
    let csv = "time,status,z1\n1.0,1,0.5\n2.0,5,0.1\n";
    match read_csv(csv.as_bytes(), &CsvSchema::default()) {
        Err(FgError::Csv { row, column, .. }) => {
            assert_eq!(row, 2);
            assert_eq!(column, "status");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn horizon_censors_late_subjects() {
    let csv = "time,status,z1\n1.0,1,0.5\n3.0,2,0.1\n5.0,1,0.2\n";
    let schema = CsvSchema { horizon: Some(4.0), ..CsvSchema::default() };
    let d = read_csv(csv.as_bytes(), &schema).unwrap();
    assert_eq!(d.times().to_vec(), vec![1.0, 3.0, 4.0]);
    assert_eq!(d.status_codes(), &[1, 2, 0]);
}

#[test]
fn constant_column_is_rejected_or_dropped() {
    let z = Array2::from_shape_vec((3, 2), vec![1.0, 0.3, 1.0, 0.1, 1.0, 0.9]).unwrap();
    let d = CompetingRisksData::new(Array1::from(vec![1.0, 2.0, 3.0]), vec![1, 0, 2], z, None).unwrap();
    assert!(matches!(standardize(&d, ConstantColumns::Reject), Err(FgError::ConstantColumn(0))));
    let (s, info) = standardize(&d, ConstantColumns::Drop).unwrap();
    assert_eq!(s.p(), 1);
    assert_eq!(info.dropped, vec![0]);
    assert_eq!(s.names(), &["z2".to_string()]);
}

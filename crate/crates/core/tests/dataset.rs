use acqsim::dataset::{
    generate_synthetic, generate_synthetic_with_model, load_csv, read_csv, save_csv, split, write_csv, CsvSchema,
    Dataset, GroupId, Point, SyntheticParams,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..4, 1usize..4).prop_flat_map(|(d, g)| {
        proptest::collection::vec((0..g, proptest::collection::vec(-1e6f64..1e6, d), 1e-6f64..1e4), 1..30)
            .prop_map(move |rows| {
                // group indices follow first appearance, as the reader assigns them
                let mut seen: Vec<usize> = Vec::new();
                let points: Vec<Point> = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (raw, features, consumption))| {
                        if !seen.contains(&raw) {
                            seen.push(raw);
                        }
                        let group = seen.iter().position(|&s| s == raw).unwrap();
                        Point { id: i as u64 * 7 + 3, group, features, consumption }
                    })
                    .collect();
                // commas and spaces in labels exercise CSV quoting
                let groups = seen
                    .iter()
                    .enumerate()
                    .map(|(index, raw)| GroupId { label: format!("region {raw}, west"), index })
                    .collect();
                Dataset::new(points, (0..d).map(|j| format!("f{j}")).collect(), groups).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn csv_round_trip_is_exact(ds in arb_dataset()) {
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        prop_assert_eq!(back, ds);
    }
}

#[test]
fn file_round_trip() {
    let ds = generate_synthetic(SyntheticParams { n: 30, d: 3, n_groups: 2, noise_sd: 0.4, seed: 9 }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    save_csv(&ds, &path).unwrap();
    assert_eq!(load_csv(&path, &CsvSchema::default()).unwrap(), ds);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("id,group,consumption,f0,f1,f2\n"));
}

/// Least squares on `[x | one-hot(group)]` recovers the generating model exactly
/// when there is no noise.
#[test]
fn noiseless_generator_is_recovered_by_least_squares() {
    let params = SyntheticParams { n: 300, d: 6, n_groups: 3, noise_sd: 0.0, seed: 21 };
    let (ds, model) = generate_synthetic_with_model(params).unwrap();
    let (n, d, g) = (ds.len(), ds.dimensionality(), ds.groups().len());
    let design = DMatrix::from_fn(n, d + g, |i, j| {
        let p = &ds.points()[i];
        if j < d {
            p.features[j]
        } else if p.group == j - d {
            1.0
        } else {
            0.0
        }
    });
    let target = DVector::from_iterator(n, ds.points().iter().map(|p| p.consumption.ln()));
    let beta = design.svd(true, true).solve(&target, 1e-12).unwrap();
    for j in 0..d {
        assert!((beta[j] - model.coefficients[j]).abs() < 1e-6, "coef {j}: {} vs {}", beta[j], model.coefficients[j]);
    }
    for k in 0..g {
        let want = model.intercept + model.group_offsets[k];
        assert!((beta[d + k] - want).abs() < 1e-6);
    }
}

#[test]
fn full_scale_generation_and_split() {
    let ds = generate_synthetic(SyntheticParams { n: 4595, d: 850, n_groups: 5, noise_sd: 0.5, seed: 7 }).unwrap();
    assert_eq!(ds.len(), 4595);
    assert_eq!(ds.dimensionality(), 850);
    assert_eq!(ds.groups().len(), 5);
    let s = split(&ds, 0.75, 0).unwrap();
    assert_eq!(s.pool_ids.len(), 3446);
    assert_eq!(s.holdout_ids.len(), 1149);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let p = SyntheticParams { n: 200, d: 5, n_groups: 4, noise_sd: 0.3, seed: 123 };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_csv(&generate_synthetic(p).unwrap(), &mut a).unwrap();
    write_csv(&generate_synthetic(p).unwrap(), &mut b).unwrap();
    assert_eq!(a, b);
    let mut c = Vec::new();
    write_csv(&generate_synthetic(SyntheticParams { seed: 124, ..p }).unwrap(), &mut c).unwrap();
    assert_ne!(a, c);
}

/// Over many seeds each id lands in the holdout with frequency 1 - fraction,
/// within three binomial standard deviations.
#[test]
fn holdout_frequency_is_binomial() {
    let ds = generate_synthetic(SyntheticParams { n: 20, d: 1, n_groups: 2, noise_sd: 0.1, seed: 0 }).unwrap();
    let trials = 10_000u64;
    let mut counts = [0u64; 20];
    for seed in 0..trials {
        for id in split(&ds, 0.75, seed).unwrap().holdout_ids {
            counts[id as usize] += 1;
        }
    }
    let p = 0.25;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    for (id, &c) in counts.iter().enumerate() {
        let freq = c as f64 / trials as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "id {id}: frequency {freq}");
    }
}

#![allow(clippy::needless_range_loop)]

use acqsim::models::{
    fit_forest, fit_logistic, fit_logistic_traced, fit_pca, ForestParams, LogisticConfig, LogisticObjective, Matrix,
    TrainingSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Greedy tree that tries every feature and every threshold between
/// consecutive distinct values; returns its training predictions.
fn exhaustive_tree_predictions(x: &[Vec<f64>], y: &[f64], max_depth: usize, min_leaf: usize) -> Vec<f64> {
    fn sse(idx: &[usize], y: &[f64]) -> f64 {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum()
    }
    fn grow(x: &[Vec<f64>], y: &[f64], idx: Vec<usize>, depth: usize, max_depth: usize, min_leaf: usize, out: &mut [f64]) {
        let parent = sse(&idx, y);
        let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
        if depth < max_depth && parent > 0.0 {
            for f in 0..x[0].len() {
                let mut vals: Vec<f64> = idx.iter().map(|&i| x[i][f]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                for w in vals.windows(2) {
                    let t = (w[0] + w[1]) / 2.0;
                    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= t);
                    if l.len() < min_leaf || r.len() < min_leaf {
                        continue;
                    }
                    let s = sse(&l, y) + sse(&r, y);
                    if s < parent && best.as_ref().is_none_or(|b| s < b.0) {
                        best = Some((s, l, r));
                    }
                }
            }
        }
        match best {
            Some((_, l, r)) => {
                grow(x, y, l, depth + 1, max_depth, min_leaf, out);
                grow(x, y, r, depth + 1, max_depth, min_leaf, out);
            }
            None => {
                let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
                for &i in &idx {
                    out[i] = m;
                }
            }
        }
    }
    let mut out = vec![0.0; y.len()];
    grow(x, y, (0..y.len()).collect(), 0, max_depth, min_leaf, &mut out);
    out
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
}

#[test]
fn step_function_forest_matches_exhaustive_tree() {
    // ten points on each side of a wide gap
    let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { i as f64 } else { 100.0 + i as f64 }]).collect();
    let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.5 } else { 2.0 }).collect();
    let oracle = exhaustive_tree_predictions(&xs, &y, 2, 1);
    let oracle_mse = mse(&oracle, &y);
    assert_eq!(oracle_mse, 0.0);

    let ts = TrainingSet::new((0..20).collect(), Matrix::from_rows(&xs), y.clone());
    let params = ForestParams { n_trees: 50, max_depth: 2, min_leaf: 1, ..Default::default() };
    let forest = fit_forest(&ts, &params, 17).unwrap();
    let pred = forest.predict(ts.x()).unwrap();
    assert!(mse(&pred, &y) < oracle_mse + 1e-9, "forest mse {}", mse(&pred, &y));
}

fn random_set(n: usize, d: usize, seed: u64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
    let y = rows.iter().map(|r| r[0].sin() + 0.5 * r[d - 1] + 0.1 * rng.random::<f64>()).collect();
    TrainingSet::new((0..n as u64).map(|i| i * 3 + 1).collect(), Matrix::from_rows(&rows), y)
}

#[test]
fn per_tree_matrix_matches_tree_by_tree_loop() {
    let ts = random_set(120, 4, 1);
    let forest = fit_forest(&ts, &ForestParams { n_trees: 12, ..Default::default() }, 2).unwrap();
    let probe = random_set(25, 4, 99);
    let batch = forest.per_tree_predictions(probe.x()).unwrap();
    assert_eq!(batch.rows(), 12);
    assert_eq!(batch.cols(), 25);
    for (t, tree) in forest.trees().iter().enumerate() {
        for i in 0..25 {
            assert_eq!(batch.get(t, i), tree.predict_row(probe.x().row(i)));
        }
    }
    let mean = forest.predict(probe.x()).unwrap();
    for i in 0..25 {
        let col_mean = (0..12).map(|t| batch.get(t, i)).sum::<f64>() / 12.0;
        assert!((mean[i] - col_mean).abs() < 1e-12);
    }
}

#[test]
fn forest_is_invariant_to_input_order() {
    let ts = random_set(80, 3, 5);
    let mut order: Vec<usize> = (0..80).collect();
    order.reverse();
    order.swap(3, 40);
    let shuffled = TrainingSet::new(
        order.iter().map(|&i| ts.ids()[i]).collect(),
        ts.x().select_rows(&order),
        order.iter().map(|&i| ts.y()[i]).collect(),
    );
    let p = ForestParams { n_trees: 10, ..Default::default() };
    assert_eq!(fit_forest(&ts, &p, 8).unwrap(), fit_forest(&shuffled, &p, 8).unwrap());
}

fn logistic_data(seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<[f64; 3]> = (0..150)
        .map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>() - 0.5, rng.random::<f64>() * 0.2])
        .collect();
    // noisy labels so the optimum is finite
    let labels = rows.iter().map(|r| 0.3 * r[0] - 1.5 + 2.0 * r[1] + (rng.random::<f64>() - 0.5) * 3.0 > 0.0).collect();
    (Matrix::from_rows(&rows), labels)
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let (x, y) = logistic_data(3);
    let cfg = LogisticConfig::default();
    let model = fit_logistic(&x, &y, &cfg).unwrap();
    let obj = LogisticObjective::for_model(&model, &x, &y, cfg.l2).unwrap();
    let params = model.params();
    let g = obj.gradient(&params);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..obj.dim() {
        let mut up = params.clone();
        let mut dn = params.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = (obj.loss(&up) - obj.loss(&dn)) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs());
    }
    assert!(worst < 1e-4, "max |fd - grad| = {worst}");
}

#[test]
fn logistic_loss_is_monotone_on_random_problems() {
    for seed in 0..5 {
        let (x, y) = logistic_data(seed);
        let (_, trace) = fit_logistic_traced(&x, &y, &LogisticConfig::default()).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors (as columns of the returned row-major array).
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn cloud(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // anisotropic scales keep eigenvalues well separated
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|j| (rng.random::<f64>() - 0.5) * (d - j) as f64).collect();
            (0..d).map(|j| z[j] + 0.3 * z[(j + 1) % d]).collect()
        })
        .collect();
    Matrix::from_rows(&rows)
}

#[test]
fn pca_scores_match_jacobi_oracle() {
    let (n, d, k) = (60, 5, 3);
    let x = cloud(n, d, 4);
    let means: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| (0..n).map(|i| (x.get(i, a) - means[a]) * (x.get(i, b) - means[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    let (vals, vecs) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));

    let pca = fit_pca(&x, k).unwrap();
    let scores = pca.transform(&x).unwrap();
    for (c, &e) in order.iter().take(k).enumerate() {
        let mut axis: Vec<f64> = (0..d).map(|r| vecs[r][e]).collect();
        let lead = (0..d).fold(0, |b, j| if axis[j].abs() > axis[b].abs() { j } else { b });
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        assert!((pca.eigenvalues()[c] - vals[e]).abs() < 1e-8);
        for i in 0..n {
            let want: f64 = (0..d).map(|j| (x.get(i, j) - means[j]) * axis[j]).sum();
            assert!((scores.get(i, c) - want).abs() < 1e-8, "component {c}, row {i}");
        }
    }
}

#[test]
fn collinear_points_have_all_variance_on_first_component() {
    let rows: Vec<[f64; 2]> = (0..25).map(|i| {
        let t = i as f64 * 0.37 - 3.0;
        [1.0 + 2.0 * t, -0.5 + 0.75 * t]
    }).collect();
    let x = Matrix::from_rows(&rows);
    let pca = fit_pca(&x, 1).unwrap();
    let z = pca.transform(&x).unwrap();
    let projected: f64 = (0..25).map(|i| z.get(i, 0).powi(2)).sum();
    let m0 = rows.iter().map(|r| r[0]).sum::<f64>() / 25.0;
    let m1 = rows.iter().map(|r| r[1]).sum::<f64>() / 25.0;
    let total: f64 = rows.iter().map(|r| (r[0] - m0).powi(2) + (r[1] - m1).powi(2)).sum();
    assert!((projected / total - 1.0).abs() < 1e-9);
}

#[test]
fn full_rank_pca_preserves_distances() {
    let x = cloud(30, 4, 8);
    let pca = fit_pca(&x, 4).unwrap();
    let z = pca.transform(&x).unwrap();
    let dist = |m: &Matrix, a: usize, b: usize| -> f64 {
        m.row(a).iter().zip(m.row(b)).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    };
    for a in 0..30 {
        for b in a + 1..30 {
            assert!((dist(&x, a, b) - dist(&z, a, b)).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn projected_variance_is_non_increasing(seed in any::<u64>(), d in 2usize..6) {
        let x = cloud(40, d, seed);
        let pca = fit_pca(&x, d).unwrap();
        let z = pca.transform(&x).unwrap();
        let var: Vec<f64> = (0..d).map(|c| (0..40).map(|i| z.get(i, c).powi(2)).sum::<f64>() / 39.0).collect();
        for w in var.windows(2) {
            prop_assert!(w[0] + 1e-9 >= w[1]);
        }
        let c = pca.components();
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = c.row(a).iter().zip(c.row(b)).map(|(p, q)| p * q).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-8);
            }
        }
    }
}

mod common;

use common::{gaussian_matrix, loop_sq_dist, max_abs_diff, random_rank};
use proptest::prelude::*;
use refactor_core::estimators::{
    estimate_refactor, estimate_star, estimate_tsvd, jl_statistics, refactor_plus_statistics,
    refactor_statistics, select_columns,
};
use refactor_core::matcore::svd;
use refactor_core::synth::{make_signal, observe, NoiseSpec, SignalSpec};
use refactor_core::theory::mse;
use refactor_core::{denoise, DenseMatrix, EstimatorConfig, StarStatistic, Variant};

#[test]
fn jl_statistic_decomposes_over_all_triplets() {
    for seed in 0..20 {
        let y = gaussian_matrix(30, 40, seed);
        let f = svd(&y).unwrap();
        let t = jl_statistics(&y);
        for (j, tj) in t.iter().enumerate() {
            let expansion: f64 = (0..f.len())
                .map(|i| f.singular_values()[i].powi(2) * f.right(i)[j].powi(2))
                .sum();
            assert!((tj - expansion).abs() < 1e-8, "seed {seed} column {j}");
        }
        let total: f64 = t.iter().sum();
        assert!((total - y.frobenius_sq()).abs() < 1e-10 * y.frobenius_sq().max(1.0));
    }
}

#[test]
fn refactor_statistic_equals_signal_part_for_exact_rank() {
    for (seed, r) in [(1u64, 1usize), (2, 2), (3, 4)] {
        let y = random_rank(25, 18, r, seed);
        let f = svd(&y).unwrap();
        let c = refactor_statistics(&y, &f.truncate(r).unwrap()).unwrap();
        for (j, cj) in c.iter().enumerate() {
            let signal: f64 = (0..r)
                .map(|i| f.singular_values()[i].powi(2) * f.right(i)[j].powi(2))
                .sum();
            assert!((cj - signal).abs() < 1e-10, "rank {r} column {j}: {cj} vs {signal}");
        }
    }
}

#[test]
fn refactor_statistic_matches_loop() {
    let y = gaussian_matrix(11, 9, 5);
    let xhat = gaussian_matrix(11, 9, 6);
    let c = refactor_statistics(&y, &xhat).unwrap();
    for (j, cj) in c.iter().enumerate() {
        let mut acc = 0.0;
        for i in 0..11 {
            acc += y.get(i, j) * xhat.get(i, j);
        }
        assert!((cj - acc).abs() < 1e-12);
    }
    let zero = DenseMatrix::zeros(11, 9);
    assert!(refactor_statistics(&y, &zero).unwrap().iter().all(|&v| v == 0.0));
    assert!(refactor_statistics(&y, &DenseMatrix::zeros(9, 11)).is_err());
}

#[test]
fn correlation_statistic_bounds_and_homogeneity() {
    for seed in 0..5 {
        let y = gaussian_matrix(15, 12, seed);
        let xhat = estimate_tsvd(&y, 2).unwrap().estimate;
        let c = refactor_plus_statistics(&y, &xhat).unwrap();
        for (j, cj) in c.iter().enumerate() {
            let (mut inner, mut ny, mut nx) = (0.0, 0.0, 0.0);
            for i in 0..15 {
                inner += y.get(i, j) * xhat.get(i, j);
                ny += y.get(i, j).powi(2);
                nx += xhat.get(i, j).powi(2);
            }
            assert!((cj - inner / (ny.sqrt() * nx.sqrt())).abs() < 1e-12);
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(cj));
        }

        // Scaling column 3 of both arguments leaves c+_3 alone.
        let alpha = 7.5;
        let scale_col = |a: &DenseMatrix| {
            DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| if j == 3 { alpha * a.get(i, j) } else { a.get(i, j) })
        };
        let c2 = refactor_plus_statistics(&scale_col(&y), &scale_col(&xhat)).unwrap();
        assert!((c2[3] - c[3]).abs() < 1e-12);
    }

    let col = vec![1.0, -2.0, 0.5];
    let y = DenseMatrix::from_columns(&[col.clone(), vec![0.0; 3]]).unwrap();
    let xhat = DenseMatrix::from_columns(&[col.iter().map(|v| 3.0 * v).collect(), vec![1.0; 3]]).unwrap();
    let c = refactor_plus_statistics(&y, &xhat).unwrap();
    assert!((c[0] - 1.0).abs() < 1e-15);
    assert_eq!(c[1], 0.0);
}

#[test]
fn selection_examples() {
    let s = select_columns(&[1.0, -3.0, 2.0], 2).unwrap();
    assert_eq!(s.retained_sorted(), vec![1, 2]);
    assert_eq!(s.permutation(), &[1, 2, 0]);
    assert!(select_columns(&[1.0, 2.0], 0).unwrap().retained().is_empty());
    assert!(select_columns(&[1.0, 2.0], 3).is_err());
    // Ties resolve to the lower index.
    let s = select_columns(&[2.0, -2.0, 2.0, 1.0], 2).unwrap();
    assert_eq!(s.retained(), &[0, 1]);
}

/// Subset of size `t` maximizing the summed |statistic|, by enumeration.
fn brute_force_best(stat: &[f64], t: usize) -> Vec<usize> {
    let n = stat.len();
    let mut best = (f64::NEG_INFINITY, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != t {
            continue;
        }
        let total: f64 = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| stat[j].abs()).sum();
        if total > best.0 {
            best = (total, mask);
        }
    }
    (0..n).filter(|j| best.1 >> j & 1 == 1).collect()
}

#[test]
fn selection_matches_brute_force_subsets() {
    for n in 1..=8usize {
        for rep in 0..5u64 {
            let stat: Vec<f64> = gaussian_matrix(1, n, 100 * n as u64 + rep).row(0).to_vec();
            for t in 0..=n {
                let s = select_columns(&stat, t).unwrap();
                assert_eq!(s.retained_sorted(), brute_force_best(&stat, t), "n {n} t {t}");
            }
        }
    }
}

#[test]
fn full_width_selection_reduces_to_tsvd() {
    for seed in 0..4u64 {
        let y = gaussian_matrix(14, 10, seed);
        for r in [1, 3] {
            let tsvd = estimate_tsvd(&y, r).unwrap().estimate;
            for v in [Variant::Refactor, Variant::RefactorPlus, Variant::Jl] {
                let est = estimate_refactor(&y, r, 10, v).unwrap().estimate;
                assert_eq!(est, tsvd, "{v} should be bit-identical");
            }
            for v in [Variant::RefactorStar, Variant::JlStar] {
                let est = estimate_star(&y, r, 10, v).unwrap().estimate;
                assert!(max_abs_diff(&est, &tsvd) < 1e-8, "{v}");
            }
        }
    }
}

#[test]
fn noiseless_column_sparse_recovery() {
    let spec = SignalSpec::uniform(30, 40, 2, 6, 5.0);
    let model = make_signal(&spec, 9).unwrap();
    let x = model.signal_matrix();
    for v in Variant::ALL {
        let res = denoise(&x, &EstimatorConfig::new(v, 2, 6)).unwrap();
        assert!(mse(&res.estimate, &x).unwrap() <= 1e-16, "{v}");
        if let Some(sel) = &res.selection {
            assert_eq!(sel.retained_sorted(), (0..6).collect::<Vec<_>>(), "{v}");
        }
    }
}

#[test]
fn crafted_rank_one_example() {
    // X = 5 a b^T with b supported on the first two columns.
    let a = [0.6, 0.8];
    let b = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0, 0.0];
    let y = DenseMatrix::from_fn(2, 4, |i, j| 5.0 * a[i] * b[j]);
    let res = estimate_refactor(&y, 1, 2, Variant::Refactor).unwrap();
    assert_eq!(res.selection.unwrap().retained_sorted(), vec![0, 1]);
    assert!(max_abs_diff(&res.estimate, &y) < 1e-12);
    assert!(max_abs_diff(&estimate_tsvd(&y, 1).unwrap().estimate, &y) < 1e-8);
    assert!(max_abs_diff(&estimate_tsvd(&y, 2).unwrap().estimate, &y) < 1e-8);
}

#[test]
fn estimates_are_column_sparse_and_low_rank() {
    let y = gaussian_matrix(20, 16, 77);
    for v in Variant::ALL {
        let res = denoise(&y, &EstimatorConfig::new(v, 2, 5)).unwrap();
        if let Some(sel) = &res.selection {
            let keep = sel.retained_mask();
            for j in 0..16 {
                if !keep[j] {
                    assert!((0..20).all(|i| res.estimate.get(i, j) == 0.0), "{v} column {j}");
                }
            }
            assert_eq!(sel.retained().len(), 5);
        }
        let s = svd(&res.estimate).unwrap();
        assert!(s.singular_values()[2] <= 1e-10 * s.singular_values()[0].max(1.0), "{v}");
    }
}

#[test]
fn star_rejects_empty_selection() {
    let y = gaussian_matrix(5, 5, 1);
    assert!(estimate_star(&y, 1, 0, Variant::RefactorStar).is_err());
    assert!(estimate_star(&y, 1, 0, Variant::JlStar).is_err());
    assert!(estimate_star(&y, 1, 2, Variant::Refactor).is_err());
    assert!(estimate_refactor(&y, 1, 2, Variant::RefactorStar).is_err());
    assert!(estimate_tsvd(&y, 0).is_err());
    assert!(estimate_tsvd(&y, 6).is_err());
}

#[test]
fn star_statistic_flag_changes_the_first_pass() {
    let y = gaussian_matrix(20, 30, 4);
    let inner = denoise(&y, &EstimatorConfig::new(Variant::RefactorStar, 1, 5)).unwrap();
    let corr = denoise(
        &y,
        &EstimatorConfig::new(Variant::RefactorStar, 1, 5).with_star_statistic(StarStatistic::Correlation),
    )
    .unwrap();
    let xhat = estimate_tsvd(&y, 1).unwrap().estimate;
    let expect_inner = select_columns(&refactor_statistics(&y, &xhat).unwrap(), 5).unwrap();
    let expect_corr = select_columns(&refactor_plus_statistics(&y, &xhat).unwrap(), 5).unwrap();
    assert_eq!(inner.selection.unwrap().retained(), expect_inner.retained());
    assert_eq!(corr.selection.unwrap().retained(), expect_corr.retained());
}

#[test]
fn permuting_columns_permutes_everything() {
    let spec = SignalSpec::uniform(30, 24, 2, 8, 3.0);
    let model = make_signal(&spec, 12).unwrap();
    let obs = observe(&model, &NoiseSpec::gaussian(1.0), 12).unwrap();
    let perm: Vec<usize> = (0..24).map(|j| (7 * j + 3) % 24).collect();
    let yp = obs.y.permute_columns(&perm).unwrap();
    let xp = obs.x.permute_columns(&perm).unwrap();
    for v in Variant::ALL {
        let config = EstimatorConfig::new(v, 2, 8);
        let a = denoise(&obs.y, &config).unwrap();
        let b = denoise(&yp, &config).unwrap();
        let (ma, mb) = (mse(&a.estimate, &obs.x).unwrap(), mse(&b.estimate, &xp).unwrap());
        assert!((ma - mb).abs() < 1e-10, "{v}: {ma} vs {mb}");
        if let (Some(sa), Some(sb)) = (&a.selection, &b.selection) {
            let mut mapped: Vec<usize> = sb.retained().iter().map(|&j| perm[j]).collect();
            mapped.sort_unstable();
            assert_eq!(mapped, sa.retained_sorted(), "{v}");
        }
    }
}

/// Rank-`r` truncation by subspace iteration on `Y^T Y`, written out
/// without the library's SVD.
fn subspace_tsvd(y: &DenseMatrix, r: usize, iterations: usize) -> DenseMatrix {
    let (m, n) = y.shape();
    let mut v: Vec<Vec<f64>> = (0..r)
        .map(|k| (0..n).map(|j| if j % r == k { 1.0 } else { 0.1 * ((j * 31 + k * 7) % 13) as f64 }).collect())
        .collect();
    for _ in 0..iterations {
        // w = Y^T (Y v)
        let mut next = Vec::with_capacity(r);
        for vk in &v {
            let yv: Vec<f64> = (0..m).map(|i| (0..n).map(|j| y.get(i, j) * vk[j]).sum()).collect();
            let w: Vec<f64> = (0..n).map(|j| (0..m).map(|i| y.get(i, j) * yv[i]).sum()).collect();
            next.push(w);
        }
        // Modified Gram-Schmidt.
        for k in 0..r {
            for p in 0..k {
                let proj: f64 = (0..n).map(|j| next[k][j] * next[p][j]).sum();
                for j in 0..n {
                    next[k][j] -= proj * next[p][j];
                }
            }
            let nrm = next[k].iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut next[k] {
                *x /= nrm;
            }
        }
        v = next;
    }
    // X_hat = Y V V^T
    let yv: Vec<Vec<f64>> = v
        .iter()
        .map(|vk| (0..m).map(|i| (0..n).map(|j| y.get(i, j) * vk[j]).sum()).collect())
        .collect();
    DenseMatrix::from_fn(m, n, |i, j| (0..r).map(|k| yv[k][i] * v[k][j]).sum())
}

#[test]
fn tsvd_matches_independent_subspace_iteration() {
    let spec = SignalSpec::uniform(200, 200, 5, 100, 4.0);
    let model = make_signal(&spec, 31).unwrap();
    let obs = observe(&model, &NoiseSpec::gaussian(1.0), 31).unwrap();
    let lib = estimate_tsvd(&obs.y, 5).unwrap().estimate;
    let oracle = subspace_tsvd(&obs.y, 5, 60);
    assert!(max_abs_diff(&lib, &oracle) < 1e-8);
    let (a, b) = (mse(&lib, &obs.x).unwrap(), loop_sq_dist(&oracle, &obs.x));
    assert!((a - b).abs() < 1e-8 * b);
}

#[test]
fn refactor_beats_tsvd_on_a_fixed_rank_one_instance() {
    let spec = SignalSpec::uniform(200, 200, 1, 50, 4.0);
    let model = make_signal(&spec, 2718).unwrap();
    let obs = observe(&model, &NoiseSpec::gaussian(1.0), 2718).unwrap();
    let rf = estimate_refactor(&obs.y, 1, 50, Variant::Refactor).unwrap();
    let ts = estimate_tsvd(&obs.y, 1).unwrap();
    assert!(mse(&rf.estimate, &obs.x).unwrap() <= mse(&ts.estimate, &obs.x).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn selection_is_a_sorted_bijection(
        stat in prop::collection::vec(-1e6f64..1e6, 1..40),
        frac in 0.0f64..=1.0,
    ) {
        let t = ((stat.len() as f64) * frac).floor() as usize;
        let s = select_columns(&stat, t).unwrap();
        let mut seen = s.permutation().to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..stat.len()).collect::<Vec<_>>());
        for w in s.permutation().windows(2) {
            let (a, b) = (stat[w[0]].abs(), stat[w[1]].abs());
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
        prop_assert_eq!(s.retained().len(), t);
    }
}

#[test]
fn star_refit_on_a_mostly_zero_matrix() {
    // Replicate whose masked refit once broke the QR sweeps.
    let spec = refactor_core::experiment::ExperimentSpec {
        rank: 1,
        estimators: vec![Variant::RefactorStar, Variant::Tsvd],
        ..Default::default()
    };
    let mse = refactor_core::experiment::run_replicate(&spec, 0, 19).unwrap();
    assert!(mse.iter().all(|v| v.is_finite()));
    assert!(mse[0] < mse[1]);
}

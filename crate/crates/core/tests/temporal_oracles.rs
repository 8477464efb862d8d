use lpme::lpme::{normalized_inverse_weights, temporal_smooth};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TIMES: [f64; 6] = [0.0, 0.25, 0.6, 1.0, 1.7, 2.0];

fn random_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn random_tau(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.01..0.5)).collect()
}

#[test]
fn zero_gamma_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let b = random_rows(&mut rng, TIMES.len(), 7);
        let tau = random_tau(&mut rng, TIMES.len());
        let g = temporal_smooth(&b, &TIMES, &tau, 0.0).unwrap();
        for (t, row) in TIMES.iter().zip(&b) {
            let v = g.eval(*t);
            let scale = row.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
            for (a, e) in v.iter().zip(row) {
                assert!((a - e).abs() <= 1e-5 * scale, "{a} vs {e}");
            }
        }
    }
}

#[test]
fn linear_rows_are_penalty_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let slope: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let icpt: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<Vec<f64>> = TIMES
        .iter()
        .map(|t| slope.iter().zip(&icpt).map(|(s, c)| c + s * t).collect())
        .collect();
    let tau = random_tau(&mut rng, TIMES.len());
    for g in (-10..=10).map(|k| (k as f64).exp()).chain([0.0, 1e9]) {
        let sp = temporal_smooth(&b, &TIMES, &tau, g).unwrap();
        for (t, row) in TIMES.iter().zip(&b) {
            for (a, e) in sp.eval(*t).iter().zip(row) {
                assert!((a - e).abs() < 1e-6, "gamma {g}");
            }
        }
    }
}

#[test]
fn huge_gamma_approaches_weighted_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let b = random_rows(&mut rng, TIMES.len(), 4);
    let tau = random_tau(&mut rng, TIMES.len());
    let w = normalized_inverse_weights(&tau).unwrap();
    let sp = temporal_smooth(&b, &TIMES, &tau, 1e9).unwrap();
    // closed-form weighted simple regression per column
    let sw: f64 = w.iter().sum();
    let tbar = TIMES.iter().zip(&w).map(|(t, w)| w * t).sum::<f64>() / sw;
    for col in 0..4 {
        let ybar = b.iter().zip(&w).map(|(r, w)| w * r[col]).sum::<f64>() / sw;
        let sxy: f64 = TIMES
            .iter()
            .zip(&b)
            .zip(&w)
            .map(|((t, r), w)| w * (t - tbar) * (r[col] - ybar))
            .sum();
        let sxx: f64 = TIMES
            .iter()
            .zip(&w)
            .map(|(t, w)| w * (t - tbar) * (t - tbar))
            .sum();
        let slope = sxy / sxx;
        let range = b.iter().map(|r| r[col]).fold(f64::NEG_INFINITY, f64::max)
            - b.iter().map(|r| r[col]).fold(f64::INFINITY, f64::min);
        for t in TIMES {
            let line = ybar + slope * (t - tbar);
            assert!((sp.eval(t)[col] - line).abs() < 1e-3 * range);
        }
    }
}

#[test]
fn roughness_non_increasing_in_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let b = random_rows(&mut rng, TIMES.len(), 6);
        let tau = random_tau(&mut rng, TIMES.len());
        let mut prev = f64::INFINITY;
        for k in -10..=10 {
            let sp = temporal_smooth(&b, &TIMES, &tau, (k as f64).exp()).unwrap();
            let r = sp.roughness();
            assert!(r <= prev * (1.0 + 1e-9) + 1e-12, "k={k}: {r} > {prev}");
            assert!(sp.side_condition_residual() < 1e-8);
            prev = r;
        }
    }
}

#[test]
fn block_system_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let b = random_rows(&mut rng, TIMES.len(), 3);
    let tau = random_tau(&mut rng, TIMES.len());
    let sp = temporal_smooth(&b, &TIMES, &tau, 0.3).unwrap();
    let bm = DMatrix::from_fn(TIMES.len(), 3, |i, j| b[i][j]);
    let (k, rhs) = lpme::lpme::temporal::temporal_system(&TIMES, &sp.weights, &bm, 0.3);
    let n = TIMES.len();
    // multipliers are not stored; recover them from the first block row
    let mut x = DMatrix::zeros(n + 4, 3);
    x.rows_mut(0, n).copy_from(&sp.delta);
    x.rows_mut(n, 2).copy_from(&sp.nu);
    let partial = &k * &x;
    let t = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { TIMES[i] });
    let m = (t.transpose() * &t).try_inverse().unwrap()
        * t.transpose()
        * (rhs.rows(0, n) - partial.rows(0, n));
    x.rows_mut(n + 2, 2).copy_from(&m);
    let res = (&k * &x - &rhs).amax() / (k.amax() * x.amax() + rhs.amax());
    assert!(res < 1e-8, "{res}");
}

#[test]
fn two_time_points_allowed_duplicates_not() {
    let b = vec![vec![0.0, 1.0], vec![1.0, 3.0]];
    assert!(temporal_smooth(&b, &[0.0, 1.0], &[0.1, 0.2], 0.5).is_ok());
    let b3 = vec![vec![0.0]; 3];
    assert!(temporal_smooth(&b3, &[0.0, 0.5, 0.5], &[0.1; 3], 0.5).is_err());
    assert!(temporal_smooth(&b3, &[0.0, 0.5, 1.0], &[0.1; 3], -1.0).is_err());
}

proptest! {
    #[test]
    fn weight_law(tau in proptest::collection::vec(1e-6f64..10.0, 2..12), c in 1e-3f64..1e3) {
        let w = normalized_inverse_weights(&tau).unwrap();
        let inv: f64 = tau.iter().map(|t| 1.0 / t).sum();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (wi, ti) in w.iter().zip(&tau) {
            prop_assert!(*wi > 0.0);
            prop_assert!((wi - 1.0 / (ti * inv)).abs() < 1e-12);
        }
        for i in 0..tau.len() {
            for j in 0..tau.len() {
                if tau[i] < tau[j] {
                    prop_assert!(w[i] > w[j]);
                }
            }
        }
        let scaled: Vec<f64> = tau.iter().map(|t| t * c).collect();
        let ws = normalized_inverse_weights(&scaled).unwrap();
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_is_linear_in_rows(seed in 0u64..1000, gamma in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_rows(&mut rng, TIMES.len(), 3);
        let tau = random_tau(&mut rng, TIMES.len());
        let b2: Vec<Vec<f64>> = b.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        let s1 = temporal_smooth(&b, &TIMES, &tau, gamma).unwrap();
        let s2 = temporal_smooth(&b2, &TIMES, &tau, gamma).unwrap();
        let t = rng.random_range(-0.5..2.5);
        for (a, b) in s1.eval(t).iter().zip(s2.eval(t)) {
            prop_assert!((2.0 * a - b).abs() < 1e-8 * (1.0 + b.abs()));
        }
    }
}

use lpme::pme::{
    fit_pme, msd, penalized_rhs, penalized_system, project, solve_penalized_spline, PmeSettings,
    ProjectOptions,
};
use lpme::SplineModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(
    rng: &mut ChaCha8Rng,
    d: usize,
    n: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let params: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let targets: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            let s: f64 = p.iter().sum();
            vec![s, s.sin() + rng.random_range(-0.1..0.1), p[0] * p[0]]
        })
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    (params, targets, weights)
}

fn grid_oracle(model: &SplineModel, x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    // dense lattice search, 10^4 samples
    let d = lo.len();
    let per = if d == 1 { 10_000 } else { 100 };
    let mut best = f64::INFINITY;
    let total = if d == 1 { per } else { per * per };
    for idx in 0..total {
        let r: Vec<f64> = if d == 1 {
            vec![lo[0] + (hi[0] - lo[0]) * idx as f64 / (per - 1) as f64]
        } else {
            let (i, j) = (idx / per, idx % per);
            vec![
                lo[0] + (hi[0] - lo[0]) * i as f64 / (per - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (per - 1) as f64,
            ]
        };
        let f = model.eval(&r);
        let o: f64 = x.iter().zip(f.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        best = best.min(o);
    }
    best
}

#[test]
fn zero_penalty_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..=2 {
        let (params, targets, _) = random_instance(&mut rng, d, 25);
        let ones = vec![1.0; 25];
        let m = solve_penalized_spline(&params, &targets, &ones, 0.0).unwrap();
        for (p, y) in params.iter().zip(&targets) {
            let f = m.eval(p);
            for l in 0..3 {
                assert!((f[l] - y[l]).abs() < 1e-6);
            }
        }
        assert!(m.orthogonality_residual() < 1e-8);
    }
}

#[test]
fn huge_penalty_gives_weighted_least_squares_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (params, targets, weights) = random_instance(&mut rng, 1, 30);
    let m = solve_penalized_spline(&params, &targets, &weights, 1e12).unwrap();
    let sw: f64 = weights.iter().sum();
    let xbar: f64 = params
        .iter()
        .zip(&weights)
        .map(|(p, w)| w * p[0])
        .sum::<f64>()
        / sw;
    for l in 0..3 {
        let ybar: f64 = targets
            .iter()
            .zip(&weights)
            .map(|(y, w)| w * y[l])
            .sum::<f64>()
            / sw;
        let sxy: f64 = params
            .iter()
            .zip(&targets)
            .zip(&weights)
            .map(|((p, y), w)| w * (p[0] - xbar) * (y[l] - ybar))
            .sum();
        let sxx: f64 = params
            .iter()
            .zip(&weights)
            .map(|(p, w)| w * (p[0] - xbar).powi(2))
            .sum();
        let slope = sxy / sxx;
        let range = targets
            .iter()
            .map(|y| y[l])
            .fold(f64::NEG_INFINITY, f64::max)
            - targets.iter().map(|y| y[l]).fold(f64::INFINITY, f64::min);
        for p in &params {
            let line = ybar + slope * (p[0] - xbar);
            assert!((m.eval(p)[l] - line).abs() < 1e-3 * range);
        }
    }
}

#[test]
fn block_system_residual_is_tiny() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 1..=2 {
        let (params, targets, weights) = random_instance(&mut rng, d, 40);
        let lambda = (-3.0f64).exp();
        let m = solve_penalized_spline(&params, &targets, &weights, lambda).unwrap();
        let knots = DMatrix::from_fn(40, d, |i, k| params[i][k]);
        let a = penalized_system(&knots, &weights, lambda);
        let b = penalized_rhs(&targets, d);
        let mut x = DMatrix::zeros(40 + d + 1, 3);
        x.rows_mut(0, 40).copy_from(m.kernel_coefficients());
        x.rows_mut(40, d + 1).copy_from(m.poly_coefficients());
        let r = &a * &x - &b;
        let rel = r.amax() / (a.amax() * x.amax() + b.amax());
        assert!(rel < 1e-8, "residual {rel}");
    }
}

#[test]
fn collinear_minimal_knots_are_degenerate() {
    let params = vec![
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![2.0, 2.0],
        vec![3.0, 3.0],
    ];
    let targets = vec![vec![0.0, 1.0, 2.0]; 4];
    let err = solve_penalized_spline(&params, &targets, &[1.0; 4], 0.0).unwrap_err();
    assert!(err.to_string().contains("degenerate knot configuration"));
}

#[test]
fn roughness_non_increasing_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in 1..=2 {
        let (params, targets, weights) = random_instance(&mut rng, d, 30);
        let mut prev = f64::INFINITY;
        for g in -15..=5 {
            let m = solve_penalized_spline(&params, &targets, &weights, (g as f64).exp()).unwrap();
            let rough = m.roughness();
            assert!(rough >= -1e-9, "conditional positivity violated: {rough}");
            assert!(
                rough <= prev * (1.0 + 1e-9) + 1e-12,
                "g={g}: {rough} > {prev}"
            );
            prev = rough;
        }
    }
}

fn line_model() -> SplineModel {
    // f(r) = (1 + 2r, -1 + r), knots along [-1, 1]
    let knots = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.0]);
    let alpha = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 2.0, 1.0]);
    SplineModel::new(knots, DMatrix::zeros(3, 2), alpha).unwrap()
}

#[test]
fn projection_onto_line_matches_closed_form() {
    let m = line_model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let x = vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        // r* = <x - a0, a1> / |a1|^2
        let r_star = ((x[0] - 1.0) * 2.0 + (x[1] + 1.0) * 1.0) / 5.0;
        let p = project(&m, &x, &[], &ProjectOptions::default());
        assert!((p.param[0] - r_star).abs() < 1e-6);
    }
}

#[test]
fn projection_of_manifold_point_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (params, targets, weights) = random_instance(&mut rng, 2, 20);
    let m = solve_penalized_spline(&params, &targets, &weights, 0.1).unwrap();
    for j in 0..20 {
        let x = m.eval(&params[j]);
        let p = project(&m, x.as_slice(), &[], &ProjectOptions::default());
        assert!(p.objective <= 1e-10);
    }
}

#[test]
fn projection_beats_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let d = 1 + trial % 2;
        let (params, targets, weights) = random_instance(&mut rng, d, 15);
        let m = solve_penalized_spline(&params, &targets, &weights, 0.05).unwrap();
        let x = vec![
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(0.0..4.0),
        ];
        let p = project(&m, &x, &[], &ProjectOptions::default());
        let oracle = grid_oracle(&m, &x, &vec![-2.0; d], &vec![2.0; d]);
        assert!(
            p.objective <= oracle + 1e-6,
            "trial {trial}: {} > {oracle}",
            p.objective
        );
    }
}

#[test]
fn msd_examples() {
    let m = line_model();
    let on_line: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            let r = i as f64 * 0.3 - 1.0;
            vec![1.0 + 2.0 * r, -1.0 + r]
        })
        .collect();
    assert!(msd(&m, &on_line, &[], &ProjectOptions::default()) < 1e-9);
    // unit normal of the line is (1, -2)/sqrt(5)
    let n = [1.0 / 5f64.sqrt(), -2.0 / 5f64.sqrt()];
    let x = vec![1.0 + 2.0 * n[0], -1.0 + 2.0 * n[1]];
    assert!((msd(&m, &[x], &[], &ProjectOptions::default()) - 4.0).abs() < 1e-6);
}

#[test]
fn straight_line_centers_fit_exactly() {
    let centers: Vec<Vec<f64>> = (0..15)
        .map(|i| {
            let r = i as f64 / 14.0;
            vec![2.0 * r, 1.0 - r, 0.5 * r]
        })
        .collect();
    let weights = vec![1.0 / 15.0; 15];
    // perturbed initial parameters
    let init: Vec<Vec<f64>> = (0..15)
        .map(|i| vec![i as f64 / 14.0 * 3.0 + 0.01 * (i % 3) as f64])
        .collect();
    let data = centers.clone();
    let fit = fit_pme(&centers, &weights, &init, &data, &PmeSettings::default()).unwrap();
    assert!(fit.tau < 1e-6, "tau {}", fit.tau);
    assert!(PmeSettings::default()
        .lambda_grid
        .contains(&fit.lambda_star));
}

#[test]
fn center_objective_descends() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let centers: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            let r = -3.0 + 6.0 * i as f64 / 29.0;
            vec![
                r + rng.random_range(-0.05..0.05),
                (r + std::f64::consts::FRAC_PI_2).sin() + rng.random_range(-0.1..0.1),
            ]
        })
        .collect();
    let weights = vec![1.0 / 30.0; 30];
    let init: Vec<Vec<f64>> = centers.iter().map(|c| vec![c[0]]).collect();
    let settings = PmeSettings {
        lambda_grid: vec![(-6.0f64).exp(), (-1.0f64).exp(), 1.0],
        eps: 1e-9,
        max_iter: 15,
        project: ProjectOptions::default(),
    };
    let fit = fit_pme(&centers, &weights, &init, &centers, &settings).unwrap();
    for tr in &fit.per_lambda {
        for w in tr.objective.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "lambda {}: {} -> {}",
                tr.lambda,
                w[0],
                w[1]
            );
        }
    }
    let best = fit
        .per_lambda
        .iter()
        .map(|t| t.tau)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(fit.tau, best);
}

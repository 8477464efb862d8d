//! Simulation cases, the factorial benchmark and scoring against truth.
//!
//! Every visit draws fresh shape perturbations `alpha, beta ~ N(1, sd)` and a
//! translation magnitude `zeta ~ N(0, sd_zeta)`; the translation direction `u`
//! is drawn once per run and scaled by `zeta h(t)` for the change model `h`.
//! Every point gets independent noise `iota ~ N(0, sd_iota^2 I)`. The truth
//! at a visit is the same formula at the same parameters with
//! `alpha = beta = 1` and no translation or noise.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{LongitudinalCloud, Point};
use crate::error::{Error, Result};
use crate::lpme::{fit_lpme_detailed, LpmeSettings};
use crate::pme::Projector;

pub const N_CASES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeModel {
    Constant,
    Linear,
    Quadratic,
    Sinusoidal,
}

impl ChangeModel {
    pub const ALL: [ChangeModel; 4] = [
        ChangeModel::Constant,
        ChangeModel::Linear,
        ChangeModel::Quadratic,
        ChangeModel::Sinusoidal,
    ];

    pub fn h(self, t: f64) -> f64 {
        match self {
            ChangeModel::Constant => 1.0,
            ChangeModel::Linear => t,
            ChangeModel::Quadratic => t * t,
            ChangeModel::Sinusoidal => t.sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChangeModel::Constant => "constant",
            ChangeModel::Linear => "linear",
            ChangeModel::Quadratic => "quadratic",
            ChangeModel::Sinusoidal => "sinusoidal",
        }
    }
}

impl std::str::FromStr for ChangeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChangeModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown change model '{s}'")))
    }
}

/// Intrinsic and ambient dimension of a case.
pub fn case_dims(case: usize) -> Result<(usize, usize)> {
    match case {
        1..=3 => Ok((1, 2)),
        4 | 5 => Ok((1, 3)),
        6..=8 => Ok((2, 3)),
        _ => Err(Error::UnknownCase(case)),
    }
}

/// Parameter box of a case, one `(lo, hi)` per intrinsic dimension.
pub fn case_domain(case: usize) -> Result<Vec<(f64, f64)>> {
    Ok(match case {
        1 => vec![(-3.0, 3.0)],
        2 => vec![(-3.0 * PI, 3.0 * PI)],
        3 => vec![(-4.0 * PI / 5.0, FRAC_PI_2)],
        4 => vec![(-1.0, 1.0)],
        5 => vec![(0.0, 3.0 * PI)],
        6 => vec![(-1.0, 1.0), (-1.0, 1.0)],
        7 => vec![(0.0, 3.0 * PI), (-1.0, 1.0)],
        8 => vec![(0.0, PI), (0.0, 2.0 * PI)],
        _ => return Err(Error::UnknownCase(case)),
    })
}

/// The case embedding at shape perturbations `a`, `b`.
pub fn case_embedding(case: usize, r: &[f64], a: [f64; 2], b: [f64; 2]) -> Result<Point> {
    let r1 = r[0];
    Ok(match case {
        1 => vec![r1, a[0] * (b[0] * r1 + FRAC_PI_2).sin()],
        2 => vec![r1, a[0] * (b[0] * r1).sin()],
        3 => vec![a[0] * (b[0] * r1).cos(), a[1] * (b[1] * r1).sin()],
        4 => vec![r1, (a[0] * r1 + b[0]).powi(2), (a[1] * r1 + b[1]).powi(3)],
        5 => vec![r1, a[0] * (b[0] * r1).cos(), a[1] * (b[1] * r1).sin()],
        6 => {
            let (u, v) = (b[0] * r1, b[1] * r[1]);
            vec![u, v, a[0] * a[1] * (u * u + v * v)]
        }
        7 => vec![
            a[0] * b[0] * r1 * (a[0] * r1).cos(),
            a[1] * b[1] * r1 * (a[1] * r1).sin(),
            r[1],
        ],
        8 => {
            let (th, ph) = (b[0] * r1, b[1] * r[1]);
            vec![
                a[0] * th.sin() * ph.cos(),
                a[0] * th.sin() * ph.sin(),
                a[0] * th.cos(),
            ]
        }
        _ => return Err(Error::UnknownCase(case)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub case: usize,
    pub sd_alpha: f64,
    pub sd_beta: f64,
    pub sd_zeta: f64,
    pub duration: f64,
    pub interval: f64,
    pub change_model: ChangeModel,
    pub n_per_time: usize,
    pub sd_iota: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            case: 1,
            sd_alpha: 0.0,
            sd_beta: 0.0,
            sd_zeta: 0.0,
            duration: 1.0,
            interval: 0.25,
            change_model: ChangeModel::Constant,
            n_per_time: 300,
            sd_iota: 0.05,
            seed: 0,
        }
    }
}

impl SimSpec {
    /// Number of visits `duration / interval + 1`.
    pub fn n_visits(&self) -> Result<usize> {
        if !(self.duration > 0.0) || !(self.interval > 0.0) {
            return Err(Error::invalid("duration and interval must be positive"));
        }
        let q = self.duration / self.interval;
        if (q - q.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "duration {} is not a whole number of intervals {}",
                self.duration, self.interval
            )));
        }
        Ok(q.round() as usize + 1)
    }

    pub fn validate(&self) -> Result<()> {
        case_dims(self.case)?;
        self.n_visits()?;
        for (name, v) in [
            ("sd_alpha", self.sd_alpha),
            ("sd_beta", self.sd_beta),
            ("sd_zeta", self.sd_zeta),
            ("sd_iota", self.sd_iota),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.n_per_time == 0 {
            return Err(Error::invalid("n_per_time must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub observed: LongitudinalCloud,
    /// Noise-free points at the same parameters as `observed`.
    pub truth: LongitudinalCloud,
    pub truth_params: Vec<Vec<Point>>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let (d, big_d) = case_dims(spec.case)?;
    let domain = case_domain(spec.case)?;
    let visits = spec.n_visits()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u: Vec<f64> = (0..big_d).map(|_| normal(&mut rng)).collect();
    let times: Vec<f64> = (0..visits).map(|k| k as f64 * spec.interval).collect();
    let mut observed = Vec::with_capacity(visits);
    let mut truth = Vec::with_capacity(visits);
    let mut params = Vec::with_capacity(visits);
    for &t in &times {
        let a = [
            1.0 + spec.sd_alpha * normal(&mut rng),
            1.0 + spec.sd_alpha * normal(&mut rng),
        ];
        let b = [
            1.0 + spec.sd_beta * normal(&mut rng),
            1.0 + spec.sd_beta * normal(&mut rng),
        ];
        let zeta = spec.sd_zeta * normal(&mut rng);
        let shift: Vec<f64> = u
            .iter()
            .map(|ui| zeta * spec.change_model.h(t) * ui)
            .collect();
        let mut obs_t = Vec::with_capacity(spec.n_per_time);
        let mut truth_t = Vec::with_capacity(spec.n_per_time);
        let mut par_t = Vec::with_capacity(spec.n_per_time);
        for _ in 0..spec.n_per_time {
            let r: Point = domain
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect();
            let mut x = case_embedding(spec.case, &r, a, b)?;
            for (xl, sl) in x.iter_mut().zip(&shift) {
                *xl += sl + spec.sd_iota * normal(&mut rng);
            }
            truth_t.push(case_embedding(spec.case, &r, [1.0; 2], [1.0; 2])?);
            obs_t.push(x);
            par_t.push(r);
        }
        observed.push(obs_t);
        truth.push(truth_t);
        params.push(par_t);
    }
    Ok(SimOutput {
        observed: LongitudinalCloud::new(times.clone(), observed, d)?,
        truth: LongitudinalCloud::new(times, truth, d)?,
        truth_params: params,
    })
}

/// Anything that can report the squared distance from a point to itself.
pub trait Manifold {
    fn squared_distance(&self, x: &[f64]) -> f64;
}

impl Manifold for Projector<'_> {
    fn squared_distance(&self, x: &[f64]) -> f64 {
        self.project(x).objective
    }
}

/// Mean squared distance from the truth samples to `fitted`.
pub fn msd_to_truth(fitted: &(impl Manifold + Sync), truth: &[Point]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    // collect first so the sum order, and hence the bits, never depend on scheduling
    let d: Vec<f64> = truth
        .par_iter()
        .map(|x| fitted.squared_distance(x))
        .collect();
    d.iter().sum::<f64>() / truth.len() as f64
}

/// Mean squared paired distance between observations and their truth.
pub fn paired_msd(observed: &[Point], truth: &[Point]) -> f64 {
    if observed.is_empty() {
        return 0.0;
    }
    observed
        .iter()
        .zip(truth)
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / observed.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// The raw observations, scored by their paired distance to truth.
    Data,
    Lpme,
    /// Independent per-time principal manifold fits.
    Pme,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Data => "data",
            Estimator::Lpme => "lpme",
            Estimator::Pme => "pme",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorSets {
    pub sd_alpha: Vec<f64>,
    pub sd_beta: Vec<f64>,
    pub sd_zeta: Vec<f64>,
    pub duration: Vec<f64>,
    pub interval: Vec<f64>,
    pub change_model: Vec<ChangeModel>,
}

impl FactorSets {
    /// The full design: 6 x 6 x 6 x 3 x 3 x 4 combinations.
    pub fn full() -> Self {
        let levels = vec![0.0, 0.05, 0.1, 0.25, 0.5, 1.0];
        Self {
            sd_alpha: levels.clone(),
            sd_beta: levels.clone(),
            sd_zeta: levels,
            duration: vec![1.0, 2.0, 5.0],
            interval: vec![0.1, 0.25, 0.5],
            change_model: ChangeModel::ALL.to_vec(),
        }
    }

    /// Reduced design that runs in minutes.
    pub fn desk() -> Self {
        let levels = vec![0.0, 0.25, 1.0];
        Self {
            sd_alpha: levels.clone(),
            sd_beta: levels.clone(),
            sd_zeta: levels,
            duration: vec![1.0],
            interval: vec![0.25],
            change_model: ChangeModel::ALL.to_vec(),
        }
    }

    pub fn n_combinations(&self) -> usize {
        self.sd_alpha.len()
            * self.sd_beta.len()
            * self.sd_zeta.len()
            * self.duration.len()
            * self.interval.len()
            * self.change_model.len()
    }

    /// Combination `index` in row-major order over the factor lists.
    pub fn combination(&self, index: usize) -> Combination {
        let mut i = index;
        let mut pick = |n: usize| {
            let k = i % n;
            i /= n;
            k
        };
        let cm = pick(self.change_model.len());
        let iv = pick(self.interval.len());
        let du = pick(self.duration.len());
        let sz = pick(self.sd_zeta.len());
        let sb = pick(self.sd_beta.len());
        let sa = pick(self.sd_alpha.len());
        Combination {
            index,
            sd_alpha: self.sd_alpha[sa],
            sd_beta: self.sd_beta[sb],
            sd_zeta: self.sd_zeta[sz],
            duration: self.duration[du],
            interval: self.interval[iv],
            change_model: self.change_model[cm],
        }
    }
}

impl Default for FactorSets {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combination {
    pub index: usize,
    pub sd_alpha: f64,
    pub sd_beta: f64,
    pub sd_zeta: f64,
    pub duration: f64,
    pub interval: f64,
    pub change_model: ChangeModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorialConfig {
    pub cases: Vec<usize>,
    pub factors: FactorSets,
    pub n_per_time: usize,
    pub sd_iota: f64,
    /// Independent replicates per combination.
    pub replicates: usize,
    pub estimators: Vec<Estimator>,
    pub lpme: LpmeSettings,
    /// Smoothing value used when a combination has too few visits for
    /// cross validation. `None` records those cells as missing.
    pub fallback_gamma: Option<f64>,
}

impl Default for FactorialConfig {
    fn default() -> Self {
        Self {
            cases: vec![1, 5, 8],
            factors: FactorSets::desk(),
            n_per_time: 300,
            sd_iota: 0.05,
            replicates: 1,
            estimators: vec![Estimator::Data, Estimator::Lpme, Estimator::Pme],
            lpme: LpmeSettings::default(),
            fallback_gamma: None,
        }
    }
}

/// Score of one estimator in one row: mean over visits of the per-visit
/// MSD to truth, or the reason it is missing.
pub type Cell = std::result::Result<f64, String>;

#[derive(Debug, Clone)]
pub struct FactorialRow {
    pub case: usize,
    pub combination: Combination,
    pub replicate: usize,
    pub seed: u64,
    pub scores: Vec<(Estimator, Cell)>,
}

impl FactorialRow {
    pub fn score(&self, e: Estimator) -> Option<f64> {
        self.scores
            .iter()
            .find(|(x, _)| *x == e)
            .and_then(|(_, c)| c.as_ref().ok().copied())
    }
}

/// Seed of `(case, combination, replicate)` under `master`, independent of
/// the estimators in play.
pub fn derive_seed(master: u64, case: usize, combination: usize, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((case as u64) << 48) ^ ((replicate as u64) << 32) ^ combination as u64);
    rng.random()
}

/// Score each requested estimator on one simulated data set.
pub fn score_estimators(
    sim: &SimOutput,
    estimators: &[Estimator],
    lpme: &LpmeSettings,
    fallback_gamma: Option<f64>,
) -> Vec<(Estimator, Cell)> {
    let times = sim.observed.times();
    let needs_fit = estimators
        .iter()
        .any(|e| matches!(e, Estimator::Lpme | Estimator::Pme));
    let mut settings = lpme.clone();
    if settings.gamma.is_none() && times.len() < 4 {
        settings.gamma = fallback_gamma;
    }
    let run = if needs_fit {
        Some(fit_lpme_detailed(&sim.observed, &settings).map_err(|e| e.to_string()))
    } else {
        None
    };
    let opts = lpme.pme.project;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    estimators
        .iter()
        .map(|&e| {
            let cell = match e {
                Estimator::Data => Ok(mean(
                    (0..times.len())
                        .map(|t| paired_msd(sim.observed.cloud(t), sim.truth.cloud(t)))
                        .collect(),
                )),
                Estimator::Lpme => run
                    .as_ref()
                    .expect("fit ran")
                    .as_ref()
                    .map_err(Clone::clone)
                    .map(|r| {
                        mean(
                            times
                                .iter()
                                .enumerate()
                                .map(|(i, &t)| {
                                    let model = r.model.model_at(t);
                                    msd_to_truth(
                                        &Projector::new(&model, &r.model.grid, &opts),
                                        sim.truth.cloud(i),
                                    )
                                })
                                .collect(),
                        )
                    }),
                Estimator::Pme => run
                    .as_ref()
                    .expect("fit ran")
                    .as_ref()
                    .map_err(Clone::clone)
                    .map(|r| {
                        mean(
                            r.per_time
                                .iter()
                                .enumerate()
                                .map(|(i, f)| {
                                    msd_to_truth(
                                        &Projector::new(&f.model, &[], &opts),
                                        sim.truth.cloud(i),
                                    )
                                })
                                .collect(),
                        )
                    }),
            };
            (e, cell)
        })
        .collect()
}

/// Run every case and factor combination. Rows come back in
/// `(case, combination, replicate)` order.
pub fn run_factorial(config: &FactorialConfig, seed: u64) -> Result<Vec<FactorialRow>> {
    if config.factors.n_combinations() == 0 || config.cases.is_empty() || config.replicates == 0 {
        return Err(Error::invalid("empty factorial design"));
    }
    for &c in &config.cases {
        case_dims(c)?;
    }
    let n = config.factors.n_combinations();
    let jobs: Vec<(usize, usize, usize)> = config
        .cases
        .iter()
        .flat_map(|&c| (0..n).flat_map(move |i| (0..config.replicates).map(move |r| (c, i, r))))
        .collect();
    jobs.par_iter()
        .map(|&(case, index, replicate)| {
            let combination = config.factors.combination(index);
            let seed = derive_seed(seed, case, index, replicate);
            let spec = SimSpec {
                case,
                sd_alpha: combination.sd_alpha,
                sd_beta: combination.sd_beta,
                sd_zeta: combination.sd_zeta,
                duration: combination.duration,
                interval: combination.interval,
                change_model: combination.change_model,
                n_per_time: config.n_per_time,
                sd_iota: config.sd_iota,
                seed,
            };
            let scores = match generate(&spec) {
                Ok(sim) => {
                    let mut lpme = config.lpme.clone();
                    lpme.seed = seed;
                    score_estimators(&sim, &config.estimators, &lpme, config.fallback_gamma)
                }
                Err(e) => config
                    .estimators
                    .iter()
                    .map(|&x| (x, Err(e.to_string())))
                    .collect(),
            };
            Ok(FactorialRow {
                case,
                combination,
                replicate,
                seed,
                scores,
            })
        })
        .collect()
}

/// Summary statistics of one estimator within one case.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub case: usize,
    pub estimator: Estimator,
    pub n: usize,
    pub missing: usize,
    pub median: f64,
    pub iqr: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Linear-interpolation quantile of sorted data (`p` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(rows: &[FactorialRow], estimators: &[Estimator]) -> Vec<Summary> {
    let mut cases: Vec<usize> = rows.iter().map(|r| r.case).collect();
    cases.dedup();
    cases.sort_unstable();
    cases.dedup();
    let mut out = Vec::new();
    for case in cases {
        for &e in estimators {
            let cells: Vec<Option<f64>> = rows
                .iter()
                .filter(|r| r.case == case)
                .map(|r| r.score(e))
                .collect();
            let mut v: Vec<f64> = cells.iter().flatten().copied().collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            out.push(Summary {
                case,
                estimator: e,
                n,
                missing: cells.len() - n,
                median: quantile_sorted(&v, 0.5),
                iqr: quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25),
                mean,
                sd,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_design_size() {
        assert_eq!(FactorSets::full().n_combinations(), 7776);
        assert_eq!(FactorSets::desk().n_combinations(), 108);
    }

    #[test]
    fn combinations_are_distinct() {
        let f = FactorSets::desk();
        let all: Vec<Combination> = (0..f.n_combinations()).map(|i| f.combination(i)).collect();
        for i in 0..all.len() {
            for j in 0..i {
                let (a, b) = (all[i], all[j]);
                assert!(
                    (a.sd_alpha, a.sd_beta, a.sd_zeta, a.change_model)
                        != (b.sd_alpha, b.sd_beta, b.sd_zeta, b.change_model)
                );
            }
        }
    }

    #[test]
    fn visits_must_divide() {
        let s = SimSpec {
            duration: 1.0,
            interval: 0.3,
            ..SimSpec::default()
        };
        assert!(s.n_visits().is_err());
        let s = SimSpec {
            duration: 1.0,
            interval: 0.1,
            ..SimSpec::default()
        };
        assert_eq!(s.n_visits().unwrap(), 11);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
    }
}

use crate::args::{EvaluateArgs, FitArgs, LiftArgs, SimulateArgs, VolumeArgs};
use crate::config::{LiftSection, Mode, Preset, RunConfig};
use crate::error::CliError;
use crate::io::{cloud_text, num, read_cloud, write_file, CloudRow, Provenance, Table};
use crate::model_file::{Fitted, Lift, ModelFile, TimeFit};
use lpme::augment::LiftMode;
use lpme::augment::{drop, lift, LiftSpec};
use lpme::cloud::Point;
use lpme::isomap::isomap_embed;
use lpme::lpme::{estimate_volume, estimate_volume_spherical, fit_lpme_detailed, VolumeOptions};
use lpme::pme::fit_pme;
use lpme::reduce::reduce_longitudinal;
use lpme::sim::{case_dims, generate, run_factorial, summarize, FactorSets, FactorialConfig};
use lpme::{Error, LongitudinalCloud};
use std::path::{Path, PathBuf};

pub fn simulate(
    line: &str,
    seed: Option<u64>,
    config: &RunConfig,
    a: &SimulateArgs,
) -> Result<(), CliError> {
    let mut spec = config.sim.clone();
    let factorial = a.factorial.or(config.factorial.preset);
    let single_flags = [
        a.case.is_some(),
        a.sd_alpha.is_some(),
        a.sd_beta.is_some(),
        a.sd_zeta.is_some(),
    ]
    .into_iter()
    .chain([
        a.duration.is_some(),
        a.interval.is_some(),
        a.change_model.is_some(),
    ]);
    if factorial.is_some() && single_flags.clone().any(|f| f) {
        return Err(CliError::usage(
            "--case and the factor flags describe one simulation; use --cases or the [factorial] config with --factorial",
        ));
    }
    if factorial.is_none() && (a.cases.is_some() || a.replicates.is_some() || a.summary.is_some()) {
        return Err(CliError::usage(
            "--cases, --replicates and --summary need --factorial",
        ));
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { spec.$f = v; })* };
    }
    set!(
        case,
        sd_alpha,
        sd_beta,
        sd_zeta,
        duration,
        interval,
        change_model,
        n_per_time,
        sd_iota
    );
    spec.seed = seed.unwrap_or(spec.seed);
    let prov = Provenance {
        command_line: line.to_string(),
        seed: Some(spec.seed),
    };
    let Some(preset) = factorial else {
        let (d, big_d) = case_dims(spec.case)?;
        let sim = generate(&spec)?;
        let mut rows = Vec::with_capacity(2 * sim.observed.n_points());
        for (truth, cloud) in [(false, &sim.observed), (true, &sim.truth)] {
            for (t, pts) in cloud.times().iter().zip(cloud.clouds()) {
                rows.extend(pts.iter().map(|x| CloudRow {
                    t: *t,
                    x: x.clone(),
                    truth,
                }));
            }
        }
        let header = prov.header(&[
            ("case", spec.case.to_string()),
            ("intrinsic_dim", d.to_string()),
        ]);
        return write_file(&a.out, &cloud_text(header, big_d, &rows, true));
    };
    let fs = &config.factorial;
    let fc = FactorialConfig {
        cases: a
            .cases
            .clone()
            .or_else(|| fs.cases.clone())
            .unwrap_or_else(|| vec![1, 5, 8]),
        factors: fs.factors.clone().unwrap_or_else(|| match preset {
            Preset::Desk => FactorSets::desk(),
            Preset::Full => FactorSets::full(),
        }),
        n_per_time: spec.n_per_time,
        sd_iota: spec.sd_iota,
        replicates: a.replicates.or(fs.replicates).unwrap_or(1),
        estimators: a
            .estimators
            .clone()
            .or_else(|| fs.estimators.clone())
            .unwrap_or_else(|| FactorialConfig::default().estimators),
        lpme: config.lpme.clone(),
        fallback_gamma: a.fallback_gamma.or(fs.fallback_gamma),
    };
    let rows = run_factorial(&fc, spec.seed)?;
    let mut cols: Vec<String> = [
        "case",
        "combination",
        "replicate",
        "seed",
        "sd_alpha",
        "sd_beta",
        "sd_zeta",
        "duration",
        "interval",
        "change_model",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for e in &fc.estimators {
        cols.push(e.name().to_string());
        cols.push(format!("{}_error", e.name()));
    }
    let header = prov.header(&[(
        "design",
        format!(
            "{} combinations x {} cases x {} replicates",
            fc.factors.n_combinations(),
            fc.cases.len(),
            fc.replicates
        ),
    )]);
    let mut table = Table::new(header, &cols);
    for r in &rows {
        let c = &r.combination;
        let mut f = vec![
            r.case.to_string(),
            c.index.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            num(c.sd_alpha),
            num(c.sd_beta),
            num(c.sd_zeta),
            num(c.duration),
            num(c.interval),
            c.change_model.name().to_string(),
        ];
        for (_, cell) in &r.scores {
            match cell {
                Ok(v) => f.extend([num(*v), String::new()]),
                Err(msg) => f.extend([String::new(), msg.clone()]),
            }
        }
        table.row(f);
    }
    table.save(&a.out)?;
    if let Some(path) = &a.summary {
        let cols: Vec<String> = [
            "case",
            "estimator",
            "n",
            "missing",
            "median",
            "iqr",
            "mean",
            "sd",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut t = Table::new(prov.header(&[]), &cols);
        for s in summarize(&rows, &fc.estimators) {
            t.row([
                s.case.to_string(),
                s.estimator.name().to_string(),
                s.n.to_string(),
                s.missing.to_string(),
                num(s.median),
                num(s.iqr),
                num(s.mean),
                num(s.sd),
            ]);
        }
        t.save(path)?;
    }
    Ok(())
}

fn lift_section(a: &FitArgs, config: &RunConfig) -> Option<LiftSection> {
    match a.lift {
        Some(mode) => Some(LiftSection {
            mode,
            scale: a.lift_scale,
            center: a.lift_center.clone(),
        }),
        None => config.fit.lift.clone().map(|mut l| {
            l.scale = a.lift_scale.or(l.scale);
            l.center = a.lift_center.clone().or(l.center);
            l
        }),
    }
}

/// Pin the lift center (centroid of every point by default).
fn pinned(spec: LiftSpec, points: &[Point]) -> LiftSpec {
    let center = spec.resolve_center(points);
    spec.with_center(center)
}

pub fn fit(line: &str, seed: Option<u64>, config: &RunConfig, a: &FitArgs) -> Result<(), CliError> {
    let cloud = read_cloud(&a.input)?;
    let d = a
        .dim
        .or(config.fit.dim)
        .or(cloud.intrinsic_dim_hint())
        .unwrap_or(1);
    let mode = a.mode.or(config.fit.mode).unwrap_or(Mode::Lpme);
    if cloud.count(true) > 0 {
        log::warn!(
            "ignoring {} truth rows of {} while fitting",
            cloud.count(true),
            a.input.display()
        );
    }
    let (times, mut clouds) = cloud.groups(false);
    if times.is_empty() {
        return Err(CliError::usage(format!(
            "{}: no observation rows",
            a.input.display()
        )));
    }
    if a.lift.is_none()
        && (a.lift_scale.is_some() || a.lift_center.is_some())
        && config.fit.lift.is_none()
    {
        return Err(CliError::usage(
            "--lift-scale and --lift-center need --lift",
        ));
    }
    let lift_rec = match lift_section(a, config) {
        Some(sec) => {
            if cloud.ambient_dim != sec.mode.base_dim() {
                return Err(CliError::usage(format!(
                    "{:?} lift needs {}-dimensional clouds, got {}",
                    sec.mode,
                    sec.mode.base_dim(),
                    cloud.ambient_dim
                )));
            }
            let all: Vec<Point> = clouds.iter().flatten().cloned().collect();
            let spec = pinned(sec.spec(), &all);
            clouds = clouds
                .iter()
                .map(|c| lift(c, &spec))
                .collect::<Result<_, _>>()?;
            Some(Lift {
                spec,
                original_dim: cloud.ambient_dim,
            })
        }
        None => None,
    };
    let mut settings = config.lpme.clone();
    settings.gamma = a.gamma.or(settings.gamma);
    settings.seed = seed.unwrap_or(settings.seed);
    let data = LongitudinalCloud::new(times.clone(), clouds, d)?;
    let prov = Provenance {
        command_line: line.to_string(),
        seed: Some(settings.seed),
    };
    let fitted = match mode {
        Mode::Lpme => {
            let run = fit_lpme_detailed(&data, &settings)?;
            for w in &run.warnings {
                log::warn!("{w}");
            }
            Fitted::Lpme(run.model)
        }
        Mode::Pme => {
            let reduced = reduce_longitudinal(&data, &settings.reduce, settings.seed)?;
            let fits = reduced
                .per_time
                .iter()
                .zip(data.clouds())
                .zip(&times)
                .map(|((red, pts), &t)| {
                    let init = isomap_embed(&red.centers, d, settings.isomap_neighbors)?;
                    let f = fit_pme(&red.centers, &red.weights, &init, pts, &settings.pme)?;
                    Ok(TimeFit {
                        time: t,
                        model: f.model,
                        lambda_star: f.lambda_star,
                        tau: f.tau,
                        iterations: f.iterations,
                        converged: f.converged,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            Fitted::Pme(fits)
        }
    };
    let model = ModelFile {
        intrinsic_dim: d,
        ambient_dim: data.ambient_dim(),
        lift: lift_rec,
        project: settings.pme.project,
        fitted,
    };
    write_file(&a.out, model.to_text(&prov.header(&[])).as_bytes())?;

    let mut cols: Vec<String> = ["t", "n", "tau", "lambda_star", "msd"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Fitted::Lpme(_) = model.fitted {
        cols.extend(["weight".to_string(), "gamma_star".to_string()]);
    }
    let mut report = Table::new(prov.header(&[]), &cols);
    for (i, (&t, pts)) in times.iter().zip(data.clouds()).enumerate() {
        let msd = model.msd(t, pts)?;
        let mut row = vec![t, pts.len() as f64];
        match &model.fitted {
            Fitted::Lpme(m) => {
                row.extend([m.tau[i], m.lambda_star[i], msd, m.weights[i], m.gamma_star])
            }
            Fitted::Pme(f) => row.extend([f[i].tau, f[i].lambda_star, msd]),
        }
        let mut fields: Vec<String> = row.iter().map(|v| num(*v)).collect();
        fields[1] = pts.len().to_string();
        report.row(fields);
    }
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| suffixed(&a.out, ".report.csv"));
    report.save(&report_path)?;

    if let Some(path) = &a.cv_table {
        let Fitted::Lpme(m) = &model.fitted else {
            return Err(CliError::usage("--cv-table needs --mode lpme"));
        };
        let mut cols = vec!["gamma".to_string(), "msd".to_string()];
        cols.extend(times.iter().map(|t| format!("heldout_{}", num(*t))));
        let mut t = Table::new(prov.header(&[]), &cols);
        for g in &m.msd_table {
            let mut f = vec![num(g.gamma), g.msd.map(num).unwrap_or_default()];
            f.extend(g.per_time.iter().map(|v| num(*v)));
            t.row(f);
        }
        t.save(path)?;
    }
    Ok(())
}

fn suffixed(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn evaluate(line: &str, config: &RunConfig, a: &EvaluateArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    let cloud = read_cloud(&a.input)?;
    if cloud.ambient_dim != model.input_dim() {
        return Err(CliError::usage(format!(
            "{} has {} coordinates, model expects {}",
            a.input.display(),
            cloud.ambient_dim,
            model.input_dim()
        )));
    }
    let (times, clouds) = cloud.groups(false);
    let (truth_times, truth_clouds) = match &a.truth {
        Some(path) => {
            let tc = read_cloud(path)?;
            if tc.ambient_dim != model.input_dim() {
                return Err(CliError::usage(format!(
                    "{} has {} coordinates, model expects {}",
                    path.display(),
                    tc.ambient_dim,
                    model.input_dim()
                )));
            }
            // every row of a dedicated truth file is a truth sample
            let mut all = tc.clone();
            all.rows.iter_mut().for_each(|r| r.truth = true);
            if all.rows.is_empty() {
                log::warn!("{} has no rows; omitting msd_truth", path.display());
            }
            all.groups(true)
        }
        None => cloud.groups(true),
    };
    let has_truth = !truth_times.is_empty();
    let mut all_times: Vec<f64> = times.iter().chain(&truth_times).copied().collect();
    all_times.sort_by(f64::total_cmp);
    all_times.dedup();
    let model_times = model.times();
    if let (Fitted::Lpme(_), Some((lo, hi))) =
        (&model.fitted, model_times.first().zip(model_times.last()))
    {
        if all_times.iter().any(|t| t < lo || t > hi) {
            log::warn!("evaluating outside the fitted time span [{lo}, {hi}] extrapolates");
        }
    }

    let mut cols: Vec<String> = ["t", "n", "msd"].iter().map(|s| s.to_string()).collect();
    if has_truth {
        cols.extend(["n_truth".to_string(), "msd_truth".to_string()]);
    }
    let prov = Provenance {
        command_line: line.to_string(),
        seed: None,
    };
    let mut table = Table::new(prov.header(&[]), &cols);
    let (mut sum, mut n_all, mut tsum, mut tn_all) = (0.0, 0usize, 0.0, 0usize);
    for &t in &all_times {
        let mut f = vec![num(t)];
        match times.iter().position(|x| *x == t) {
            Some(i) => {
                let m = model.msd(t, &model.prepare(&clouds[i])?)?;
                sum += m * clouds[i].len() as f64;
                n_all += clouds[i].len();
                f.extend([clouds[i].len().to_string(), num(m)]);
            }
            None => f.extend(["0".to_string(), String::new()]),
        }
        if has_truth {
            match truth_times.iter().position(|x| *x == t) {
                Some(i) => {
                    let m = model.msd(t, &model.prepare(&truth_clouds[i])?)?;
                    tsum += m * truth_clouds[i].len() as f64;
                    tn_all += truth_clouds[i].len();
                    f.extend([truth_clouds[i].len().to_string(), num(m)]);
                }
                None => f.extend(["0".to_string(), String::new()]),
            }
        }
        table.row(f);
    }
    let mut f = vec![
        "all".to_string(),
        n_all.to_string(),
        if n_all > 0 {
            num(sum / n_all as f64)
        } else {
            String::new()
        },
    ];
    if has_truth {
        f.extend([tn_all.to_string(), num(tsum / tn_all as f64)]);
    }
    table.row(f);
    table.save(&a.out)?;

    if let Some(path) = &a.export_sections {
        export_sections(&model, &prov, config, path)?;
    }
    Ok(())
}

/// Bounding box of the parameters a model was fitted over at time `t`.
fn param_box(model: &ModelFile, t: f64) -> Result<Vec<(f64, f64)>, CliError> {
    let pts: Vec<Point> = match &model.fitted {
        Fitted::Lpme(m) => m.grid.clone(),
        Fitted::Pme(_) => {
            let (spline, _) = model.spline_at(t)?;
            (0..spline.n_knots()).map(|j| spline.knot(j)).collect()
        }
    };
    Ok((0..model.intrinsic_dim)
        .map(|k| {
            pts.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[k]), hi.max(p[k]))
                })
        })
        .collect())
}

fn export_sections(
    model: &ModelFile,
    prov: &Provenance,
    config: &RunConfig,
    path: &Path,
) -> Result<(), CliError> {
    let (levels, samples) = (
        config.evaluate.section_levels.max(1),
        config.evaluate.section_samples.max(2),
    );
    let d = model.intrinsic_dim;
    let mut cols: Vec<String> = ["t", "section", "fixed_axis", "fixed_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=d).map(|k| format!("r{k}")));
    cols.extend((1..=model.input_dim()).map(|l| format!("x{l}")));
    let mut table = Table::new(prov.header(&[]), &cols);
    let lerp = |(lo, hi): (f64, f64), i: usize, n: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    for t in model.times() {
        let (spline, _) = model.spline_at(t)?;
        let bbox = param_box(model, t)?;
        // d = 1 has one free polyline; surfaces get `levels` slices per axis
        let slices: Vec<Option<(usize, f64)>> = if d == 1 {
            vec![None]
        } else {
            (0..d)
                .flat_map(|axis| (0..levels).map(move |i| (axis, i)))
                .map(|(axis, i)| Some((axis, lerp(bbox[axis], i, levels))))
                .collect()
        };
        for (section, slice) in slices.iter().enumerate() {
            let free = match slice {
                None => 0,
                Some((axis, _)) => (axis + 1) % d,
            };
            for s in 0..samples {
                let mut r: Vec<f64> = bbox.iter().map(|b| 0.5 * (b.0 + b.1)).collect();
                if let Some((axis, v)) = slice {
                    r[*axis] = *v;
                }
                r[free] = lerp(bbox[free], s, samples);
                let x = spline.eval(&r);
                let mut f = vec![num(t), section.to_string()];
                match slice {
                    None => f.extend([String::new(), String::new()]),
                    Some((axis, v)) => f.extend([format!("r{}", axis + 1), num(*v)]),
                }
                f.extend(r.iter().map(|v| num(*v)));
                f.extend(x.iter().take(model.input_dim()).map(|v| num(*v)));
                table.row(f);
            }
        }
    }
    table.save(path)
}

pub fn volume(line: &str, config: &RunConfig, a: &VolumeArgs) -> Result<(), CliError> {
    let model = ModelFile::load(&a.model)?;
    let Fitted::Lpme(m) = &model.fitted else {
        return Err(CliError::usage("volume needs an lpme model"));
    };
    if m.intrinsic_dim != 2 || model.input_dim() != 3 {
        return Err(CliError::usage(format!(
            "volume needs a surface (d = 2) in 3 dimensions, model has d = {}, D = {}",
            m.intrinsic_dim,
            model.input_dim()
        )));
    }
    let opts = VolumeOptions {
        voxel: a.voxel,
        resolution: a.resolution.unwrap_or(config.volume.resolution),
    };
    if !(opts.voxel > 0.0) || !opts.voxel.is_finite() {
        return Err(CliError::usage("--voxel must be positive"));
    }
    let times = a.times.clone().unwrap_or_else(|| m.times.clone());
    // a spherical lift knows how the surface closes up
    let spherical = model
        .lift
        .as_ref()
        .filter(|l| l.spec.mode == LiftMode::Spherical)
        .map(|l| [l.spec.scales[0], l.spec.scales[1]]);
    let prov = Provenance {
        command_line: line.to_string(),
        seed: None,
    };
    let cols: Vec<String> = ["t", "volume", "watertight", "note"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut table = Table::new(
        prov.header(&[
            ("voxel", num(opts.voxel)),
            ("resolution", opts.resolution.to_string()),
            (
                "lattice",
                if spherical.is_some() {
                    "angles"
                } else {
                    "parameter box"
                }
                .into(),
            ),
        ]),
        &cols,
    );
    for t in times {
        let note = if m.temporal.extrapolates(t) {
            "extrapolated"
        } else {
            ""
        };
        let result = match spherical {
            Some(scales) => estimate_volume_spherical(m, t, &opts, scales),
            None => estimate_volume(m, t, &opts),
        };
        match result {
            Ok(v) => table.row([num(t), num(v), "true".into(), note.to_string()]),
            Err(e) => match e.root() {
                Error::NotWatertight { .. } => {
                    table.row([num(t), String::new(), "false".into(), e.to_string()])
                }
                _ => return Err(e.into()),
            },
        }
    }
    table.save(&a.out)
}

pub fn lift_cmd(line: &str, a: &LiftArgs) -> Result<(), CliError> {
    let cloud = read_cloud(&a.input)?;
    let prov = Provenance {
        command_line: line.to_string(),
        seed: None,
    };
    let xs: Vec<Point> = cloud.rows.iter().map(|r| r.x.clone()).collect();
    let (out, extra) = match (a.drop, a.mode) {
        (Some(dim), _) => (drop(&xs, dim)?, vec![]),
        (None, Some(mode)) => {
            let mut spec = LiftSpec::new(mode);
            if let Some(c) = a.scale {
                spec = spec.with_scale(c);
            }
            if let Some(c) = &a.center {
                spec = spec.with_center(c.clone());
            }
            if cloud.ambient_dim != mode.base_dim() {
                return Err(CliError::usage(format!(
                    "{mode:?} lift needs {}-dimensional clouds, got {}",
                    mode.base_dim(),
                    cloud.ambient_dim
                )));
            }
            let observed: Vec<Point> = cloud
                .rows
                .iter()
                .filter(|r| !r.truth)
                .map(|r| r.x.clone())
                .collect();
            let spec = pinned(spec, if observed.is_empty() { &xs } else { &observed });
            let center = spec.center.clone().unwrap_or_default();
            let fmt = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
            (
                lift(&xs, &spec)?,
                vec![
                    ("lift_center", fmt(&center)),
                    ("lift_scales", fmt(&spec.scales)),
                ],
            )
        }
        (None, None) => return Err(CliError::usage("lift needs --mode or --drop")),
    };
    let mut extra = extra;
    for key in ["case", "intrinsic_dim"] {
        if let Some(v) = cloud.meta.get(key) {
            extra.push((key, v.clone()));
        }
    }
    let rows: Vec<CloudRow> = cloud
        .rows
        .iter()
        .zip(out)
        .map(|(r, x)| CloudRow {
            t: r.t,
            x,
            truth: r.truth,
        })
        .collect();
    let dim = rows.first().map_or(cloud.ambient_dim, |r| r.x.len());
    write_file(
        &a.out,
        &cloud_text(prov.header(&extra), dim, &rows, cloud.has_truth_column),
    )
}

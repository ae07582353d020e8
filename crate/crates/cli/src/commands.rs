use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use patsnake_core::amplitude::{
    ansatz_reconstruct, coefficient_sweep, gl_front_solve, hexagon_amplitude, hexagon_fold, hot_bistable_window,
    maxwell_point, stripe_amplitude, write_coefficients_csv, write_energy_csv, write_fixed_points_csv, AmplitudeState,
    AnsatzOrder, EnergyVariant, FrontKind, LandauCoeffs, MaxwellKind,
};
use patsnake_core::continuation::{
    branch_switch, run_branch_observed, start_point, write_branch_csv, write_events_csv, Branch, BranchPoint,
    EventKind, Norms, StopCriteria,
};
use patsnake_core::grid::{build_laplacian, read_snapshot, write_ppm, write_snapshot, Field, NeumannLaplacian};
use patsnake_core::model::{critical_values, critical_wavenumber, dispersion, homogeneous_state, ModelParams};
use patsnake_core::continuation::newton_correct;
use patsnake_core::timestep::{integrate_observed, TraceWriter};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{linspace, RunConfig, StartKind, SweepParameter, TintStart};
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Creates the output directory and stores the exact configuration used.
pub fn prepare_output(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    write_json(&cfg.output_dir.join("config.json"), cfg)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.10}")).unwrap_or_else(|| "nan".into())
}

#[derive(Serialize)]
struct DispSummary {
    d: f64,
    lambda: f64,
    lambda_c: f64,
    k_c: f64,
    max_mu_plus: f64,
    k_at_max: f64,
    stable: bool,
}

pub fn disp(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.params()?;
    let o = &cfg.disp;
    let mut w = create(&cfg.output_dir.join("dispersion.csv"))?;
    writeln!(w, "k,mu_plus,mu_minus,is_complex")?;
    let (mut best, mut k_best) = (f64::NEG_INFINITY, 0.0);
    for k in linspace(o.k_min, o.k_max, o.k_points) {
        let r = dispersion(&p, k);
        writeln!(w, "{:.10e},{:.15e},{:.15e},{}", k, r.mu_plus, r.mu_minus, r.is_complex as u8)?;
        if r.mu_plus > best {
            best = r.mu_plus;
            k_best = k;
        }
    }
    w.flush()?;
    let (lambda_c, k_c) = critical_values(p.d);
    let s = DispSummary { d: p.d, lambda: p.lambda, lambda_c, k_c, max_mu_plus: best, k_at_max: k_best, stable: best < 0.0 };
    write_json(&cfg.output_dir.join("summary.json"), &s)?;
    println!("lambda_c = {lambda_c:.10}  k_c = {k_c:.10}  (d = {})", p.d);
    println!("lambda = {}: max mu_plus = {best:.6e} at k = {k_best:.6}", p.lambda);
    Ok(())
}

pub fn landau(cfg: &RunConfig) -> Result<(), CliError> {
    let base = cfg.params()?;
    let o = &cfg.landau;
    let params: Vec<ModelParams> = linspace(o.from, o.to, o.points)
        .into_iter()
        .map(|x| match o.sweep {
            SweepParameter::Lambda => ModelParams { lambda: x, ..base },
            SweepParameter::Sigma => ModelParams { sigma: x, ..base },
        })
        .collect();
    let results: Vec<_> = params.par_iter().map(|p| coefficient_sweep([*p]).pop().unwrap()).collect();
    let mut rows: Vec<LandauCoeffs> = Vec::with_capacity(results.len());
    for (p, r) in params.iter().zip(results) {
        match r {
            Ok(c) => rows.push(c),
            Err(e) => log::warn!("skipping lambda={} sigma={}: {e}", p.lambda, p.sigma),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Numerical("no coefficient evaluation succeeded".into()));
    }
    let dir = &cfg.output_dir;
    let mut w = create(&dir.join("coefficients.csv"))?;
    write_coefficients_csv(&rows, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("energies.csv"))?;
    write_energy_csv(&rows, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("fixed_points.csv"))?;
    write_fixed_points_csv(&rows, &mut w)?;
    w.flush()?;
    println!("{} coefficient rows written to {}", rows.len(), dir.display());
    let x = |c: &LandauCoeffs| match o.sweep {
        SweepParameter::Lambda => c.lambda,
        SweepParameter::Sigma => c.sigma,
    };
    let mut crossings = Vec::new();
    for (name, g) in [
        ("c1", (|c: &LandauCoeffs| c.c1) as fn(&LandauCoeffs) -> f64),
        ("c3", |c: &LandauCoeffs| c.c3),
        ("c3+2c4", |c: &LandauCoeffs| c.c3 + 2.0 * c.c4),
    ] {
        for pair in rows.windows(2) {
            let (ga, gb) = (g(&pair[0]), g(&pair[1]));
            if ga * gb < 0.0 {
                let at = x(&pair[0]) + (x(&pair[1]) - x(&pair[0])) * ga / (ga - gb);
                println!("{name} changes sign near {at:.5}");
                crossings.push(serde_json::json!({ "quantity": name, "at": at }));
            }
        }
    }
    write_json(&dir.join("sign_changes.json"), &crossings)
}

#[derive(Serialize)]
struct MaxwellRow {
    sigma: f64,
    hot: Option<f64>,
    cold: Option<f64>,
    homogeneous: Option<f64>,
    mixed_hot: Option<f64>,
    mixed_variational: Option<f64>,
    hexagon_fold: Option<f64>,
    subcriticality: Option<f64>,
    window_lo: Option<f64>,
    window_hi: Option<f64>,
}

pub fn maxwell(cfg: &RunConfig) -> Result<(), CliError> {
    let d = cfg.model.d;
    let o = &cfg.maxwell;
    let (lambda_c, _) = critical_values(d);
    let sigmas = linspace(o.sigma_from, o.sigma_to, o.sigma_points);
    let rows: Vec<MaxwellRow> = sigmas
        .par_iter()
        .map(|&sigma| {
            let m = |k| maxwell_point(k, sigma, d).ok();
            let fold = hexagon_fold(sigma, d).ok();
            let window = hot_bistable_window(sigma, d).ok();
            MaxwellRow {
                sigma,
                hot: m(MaxwellKind::Hot),
                cold: m(MaxwellKind::Cold),
                homogeneous: m(MaxwellKind::Homogeneous),
                mixed_hot: m(MaxwellKind::MixedHot),
                mixed_variational: m(MaxwellKind::MixedVariational),
                hexagon_fold: fold,
                subcriticality: fold.map(|f| f - lambda_c),
                window_lo: window.map(|w| w.0),
                window_hi: window.map(|w| w.1),
            }
        })
        .collect();
    let mut w = create(&cfg.output_dir.join("maxwell.csv"))?;
    writeln!(w, "sigma,hot,cold,homogeneous,mixed_hot,mixed_variational,hexagon_fold,subcriticality,window_lo,window_hi")?;
    for r in &rows {
        writeln!(
            w,
            "{:.10},{},{},{},{},{},{},{},{},{}",
            r.sigma,
            fmt_opt(r.hot),
            fmt_opt(r.cold),
            fmt_opt(r.homogeneous),
            fmt_opt(r.mixed_hot),
            fmt_opt(r.mixed_variational),
            fmt_opt(r.hexagon_fold),
            fmt_opt(r.subcriticality),
            fmt_opt(r.window_lo),
            fmt_opt(r.window_hi)
        )?;
        println!(
            "sigma = {:.4}: hot {}  cold {}  homogeneous {}  mixed_hot {}  mixed_variational {}",
            r.sigma,
            fmt_opt(r.hot),
            fmt_opt(r.cold),
            fmt_opt(r.homogeneous),
            fmt_opt(r.mixed_hot),
            fmt_opt(r.mixed_variational)
        );
    }
    w.flush()?;
    if rows.iter().all(|r| r.hot.is_none() && r.cold.is_none() && r.homogeneous.is_none()) {
        return Err(CliError::Numerical("no Maxwell point found for any sigma".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct FrontSummary {
    kind: FrontKind,
    variant: EnergyVariant,
    lambda_requested: f64,
    lambda: f64,
    half_length: f64,
    n: usize,
    residual: f64,
    energy_drift: f64,
    endpoint_error: f64,
    max_slope: f64,
    newton_iterations: usize,
}

pub fn glfront(cfg: &RunConfig) -> Result<(), CliError> {
    let base = cfg.params()?;
    let o = &cfg.glfront;
    let lambda = match o.lambda {
        Some(l) => l,
        None => {
            let kind = match (o.kind, o.variant) {
                (FrontKind::Hot, EnergyVariant::Standard) => MaxwellKind::Hot,
                (FrontKind::Cold, _) => MaxwellKind::Cold,
                (FrontKind::Hot, EnergyVariant::Mixed) => MaxwellKind::MixedVariational,
            };
            maxwell_point(kind, base.sigma, base.d)?
        }
    };
    let p = ModelParams::new(lambda, base.d, base.sigma)?;
    let half_length = o.half_length_wavelengths * 2.0 * std::f64::consts::PI / critical_wavenumber();
    let (front, c) = gl_front_solve(&p, o.kind, half_length, o.n, o.variant)?;
    let mut w = create(&cfg.output_dir.join("front.csv"))?;
    front.write_csv(&c, &mut w)?;
    w.flush()?;
    let s = FrontSummary {
        kind: o.kind,
        variant: o.variant,
        lambda_requested: lambda,
        lambda: front.lambda,
        half_length,
        n: o.n,
        residual: front.residual,
        energy_drift: front.energy_drift(&c)?,
        endpoint_error: front.endpoint_error(),
        max_slope: front.max_slope(),
        newton_iterations: front.newton_iterations,
    };
    println!(
        "front at lambda = {:.8}: residual {:.2e}, energy drift {:.2e}, endpoint error {:.2e}, max slope {:.5}",
        s.lambda, s.residual, s.energy_drift, s.endpoint_error, s.max_slope
    );
    write_json(&cfg.output_dir.join("summary.json"), &s)
}

fn start_field(cfg: &RunConfig, p: &ModelParams) -> Result<(Field, f64), CliError> {
    let b = &cfg.branch;
    let spec = cfg.spec()?;
    let missing = |what: &str| CliError::Validation(format!("no {what} state exists at lambda = {}", p.lambda));
    let state = match b.start {
        StartKind::Homogeneous => {
            let w = homogeneous_state(p);
            return Ok((Field::constant(spec, w.u, w.v), p.lambda));
        }
        StartKind::Snapshot => {
            let (f, meta) = read_snapshot(b.snapshot.as_ref().unwrap())?;
            return Ok((f, meta.lambda));
        }
        StartKind::Stripes | StartKind::HotHexagons | StartKind::ColdHexagons => {
            let c = patsnake_core::amplitude::landau_coefficients(p)?;
            match b.start {
                StartKind::Stripes => AmplitudeState::stripe(stripe_amplitude(c.c1, c.c3, 1.0).ok_or_else(|| missing("stripe"))?),
                StartKind::HotHexagons => AmplitudeState::hexagon(
                    hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, 1.0).ok_or_else(|| missing("hot hexagon"))?,
                ),
                _ => AmplitudeState::hexagon(
                    hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, -1.0).ok_or_else(|| missing("cold hexagon"))?,
                ),
            }
        }
    };
    Ok((ansatz_reconstruct(p, &state, spec, AnsatzOrder::Full)?, p.lambda))
}

fn follow(
    cfg: &RunConfig,
    label: &str,
    start: BranchPoint,
    p: &ModelParams,
    lap: &NeumannLaplacian,
) -> Result<Branch, CliError> {
    let b = &cfg.branch;
    let stop = StopCriteria { lambda_min: b.lambda_min, lambda_max: b.lambda_max, max_points: b.max_points };
    let snap_dir = cfg.output_dir.join("snapshots");
    let every = cfg.snapshot_every;
    let branch = run_branch_observed(label, start, p, lap, &cfg.cont, &stop, |i, pt| {
        if every > 0 && i % every == 0 {
            fs::create_dir_all(&snap_dir)?;
            write_snapshot(&snap_dir.join(format!("{label}_{i:05}.txt")), &pt.state, pt.lambda, p.sigma, label)?;
        }
        Ok(())
    })?;
    write_branch_files(&cfg.output_dir, &branch)?;
    Ok(branch)
}

fn write_branch_files(dir: &Path, branch: &Branch) -> Result<(), CliError> {
    let mut w = create(&dir.join(format!("{}.csv", branch.label)))?;
    write_branch_csv(branch, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join(format!("{}_events.csv", branch.label)))?;
    write_events_csv(branch, &mut w)?;
    w.flush()?;
    let last = branch.points.last().map(|p| p.lambda).unwrap_or(f64::NAN);
    println!(
        "{}: {} points, lambda {:.5} -> {:.5}, {} folds, {} bifurcations{}",
        branch.label,
        branch.points.len(),
        branch.points[0].lambda,
        last,
        branch.events_of(EventKind::Fold).count(),
        branch.events_of(EventKind::Bifurcation).count(),
        branch.termination.as_ref().map(|t| format!(" (stopped: {t})")).unwrap_or_default()
    );
    for e in &branch.events {
        println!("  {} at lambda = {:.6} (point {}, delta {})", e.kind.label(), e.lambda, e.index, e.delta);
    }
    Ok(())
}

pub fn cont(cfg: &RunConfig) -> Result<(), CliError> {
    let b = &cfg.branch;
    let base = cfg.params()?;
    let (guess, lambda) = start_field(cfg, &base)?;
    let p = ModelParams::new(lambda, base.d, base.sigma)?;
    let lap = build_laplacian(&guess.spec);
    if b.both_directions {
        let run = |dir: f64, suffix: &str| -> Result<Branch, CliError> {
            let start = start_point(&guess, &p, &lap, &cfg.cont, dir)?;
            follow(cfg, &format!("{}_{suffix}", b.label), start, &p, &lap)
        };
        let (up, down) = rayon::join(|| run(1.0, "up"), || run(-1.0, "down"));
        up?;
        down?;
        return Ok(());
    }
    let start = start_point(&guess, &p, &lap, &cfg.cont, b.direction)?;
    let mut current = follow(cfg, &b.label, start, &p, &lap)?;
    for (k, sw) in b.switches.iter().enumerate() {
        let bifs: Vec<_> = current.events_of(EventKind::Bifurcation).collect();
        let Some(event) = bifs.get(sw.event) else {
            let listing: Vec<String> =
                bifs.iter().enumerate().map(|(i, e)| format!("{i}: lambda={:.6}", e.lambda)).collect();
            return Err(CliError::Validation(format!(
                "switch {k}: event {} not on branch '{}'; available bifurcations: [{}]",
                sw.event,
                current.label,
                listing.join(", ")
            )));
        };
        let label = sw.label.clone().unwrap_or_else(|| format!("{}_s{}", b.label, k + 1));
        let (first, kernel) = branch_switch(event, sw.direction, sw.perturbation, &p, &lap, &cfg.cont)?;
        write_snapshot(&cfg.output_dir.join(format!("{label}_kernel.txt")), &kernel, event.lambda, p.sigma, &label)?;
        current = follow(cfg, &label, first, &p, &lap)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TintSummary {
    lambda: f64,
    steps: usize,
    time: f64,
    final_dt: f64,
    residual: f64,
    reached: bool,
    polished: Option<bool>,
    newton_iterations: Option<usize>,
    newton_message: Option<String>,
    norms: Norms,
}

pub fn tint(cfg: &RunConfig) -> Result<(), CliError> {
    let base = cfg.params()?;
    let o = &cfg.tint;
    let (start, lambda) = match o.start {
        TintStart::Guess => {
            let l = o.lambda.unwrap_or(base.lambda);
            (patsnake_core::grid::make_initial_guess(cfg.spec()?, l, o.a, o.b, o.l), l)
        }
        TintStart::Snapshot => {
            let (f, meta) = read_snapshot(o.snapshot.as_ref().unwrap())?;
            (f, o.lambda.unwrap_or(meta.lambda))
        }
    };
    let p = ModelParams::new(lambda, base.d, base.sigma)?;
    let lap = build_laplacian(&start.spec);
    let dir = &cfg.output_dir;
    let snap_dir = dir.join("snapshots");
    let every = cfg.snapshot_every;
    let mut trace = TraceWriter::new(create(&dir.join("trace.csv"))?, &start)?;
    let out = integrate_observed(&start, &p, &lap, &cfg.timestep, |step, t, f, res| {
        trace.record(step, t, f, res)?;
        if every > 0 && step % every == 0 {
            fs::create_dir_all(&snap_dir)?;
            write_snapshot(&snap_dir.join(format!("tint_{step:06}.txt")), f, lambda, p.sigma, "tint")?;
        }
        Ok(())
    })?;
    trace.into_inner().flush()?;
    write_snapshot(&dir.join("final.txt"), &out.field, lambda, p.sigma, "tint")?;
    let mut summary = TintSummary {
        lambda,
        steps: out.steps,
        time: out.time,
        final_dt: out.dt,
        residual: out.residual,
        reached: out.reached,
        polished: None,
        newton_iterations: None,
        newton_message: None,
        norms: Norms::of(&out.field),
    };
    if o.polish {
        match newton_correct(&out.field, &p, &lap, cfg.cont.newton_tol, cfg.cont.max_newton.max(20)) {
            Ok((f, it)) => {
                write_snapshot(&dir.join("polished.txt"), &f, lambda, p.sigma, "polished")?;
                summary.polished = Some(true);
                summary.newton_iterations = Some(it);
                summary.norms = Norms::of(&f);
            }
            Err(e) => {
                summary.polished = Some(false);
                summary.newton_message = Some(e.to_string());
            }
        }
    }
    println!(
        "integrated {} steps to t = {:.3}: residual {:.3e}{}",
        out.steps,
        out.time,
        out.residual,
        match summary.polished {
            Some(true) => ", Newton polish converged",
            Some(false) => ", Newton polish failed",
            None => "",
        }
    );
    write_json(&dir.join("summary.json"), &summary)
}

pub fn render(snapshot: &Path, out: &Path) -> Result<(), CliError> {
    let (f, _) = read_snapshot(snapshot)?;
    let target: PathBuf = if out.extension().is_some_and(|e| e == "ppm") {
        out.to_path_buf()
    } else {
        fs::create_dir_all(out)?;
        let stem = snapshot.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "snapshot".into());
        out.join(format!("{stem}.ppm"))
    };
    write_ppm(&target, &f)?;
    println!("wrote {}", target.display());
    Ok(())
}

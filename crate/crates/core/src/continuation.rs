//! Pseudo-arclength continuation of stationary states in `(U, λ)`.
//!
//! Arclength is measured in the weighted inner product
//! `⟨(x, a), (y, b)⟩ = Σ x_k y_k / N + a b` with `N = nx·ny`, so step sizes do
//! not depend on grid resolution. Stability is the number of Jacobian
//! eigenvalues with positive real part among the `n_eigs` nearest a small
//! positive shift.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lp_norm, Component, Field, NeumannLaplacian};
use crate::linalg::{bordered_solve, eigenvalues_near_shift, near_kernel_vector, norm_inf, EigenSettings, TripletMatrix};
use crate::model::{reaction_jacobian, ModelParams, PointState};
use crate::timestep::rhs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContSettings {
    pub ds0: f64,
    pub dsmin: f64,
    pub dsmax: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub n_eigs: usize,
    pub bif_loc_tol: f64,
    pub eig_shift: f64,
    pub stability: bool,
}

impl Default for ContSettings {
    fn default() -> Self {
        Self {
            ds0: 0.01,
            dsmin: 1e-6,
            dsmax: 0.05,
            newton_tol: 1e-8,
            max_newton: 10,
            n_eigs: 12,
            bif_loc_tol: 1e-4,
            eig_shift: 0.01,
            stability: true,
        }
    }
}

impl ContSettings {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.dsmin && self.dsmin <= self.ds0 && self.ds0 <= self.dsmax) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dsmin ≤ ds0 ≤ dsmax, got {} / {} / {}",
                self.dsmin, self.ds0, self.dsmax
            )));
        }
        if !(self.newton_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::InvalidParameter("newton_tol and max_newton must be positive".into()));
        }
        if self.n_eigs == 0 || !(self.bif_loc_tol > 0.0) {
            return Err(Error::InvalidParameter("n_eigs and bif_loc_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn eigen(&self) -> EigenSettings {
        EigenSettings { nev: self.n_eigs, shift: self.eig_shift, ..EigenSettings::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub l8: f64,
    pub min: f64,
    pub max: f64,
    pub u00: f64,
}

impl Norms {
    pub fn of(f: &Field) -> Self {
        let (min, max) = f.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        Self {
            l2: lp_norm(f, Component::U, 2.0),
            l8: lp_norm(f, Component::U, 8.0),
            min,
            max,
            u00: f.u_center(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub s: f64,
    pub lambda: f64,
    pub state: Field,
    /// Unit tangent `(dU, dλ)` in the weighted norm, interleaved state part first.
    pub tangent: Vec<f64>,
    pub n_unstable: Option<usize>,
    /// Real part of the eigenvalue closest to the imaginary axis.
    pub critical_re: Option<f64>,
    pub norms: Norms,
    pub residual: f64,
    pub ds: f64,
    pub newton_iterations: usize,
}

impl BranchPoint {
    pub fn tangent_lambda(&self) -> f64 {
        *self.tangent.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Fold,
    Bifurcation,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Fold => "fold",
            EventKind::Bifurcation => "bifurcation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    /// Index of the first branch point past the event.
    pub index: usize,
    pub kind: EventKind,
    pub lambda: f64,
    /// Change of the unstable count across the event.
    pub delta: i64,
    pub point: BranchPoint,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub label: String,
    pub points: Vec<BranchPoint>,
    pub events: Vec<Event>,
    /// Why the run ended early, if it did.
    pub termination: Option<String>,
}

impl Branch {
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_points: usize,
}

fn weight(f: &Field) -> f64 {
    1.0 / f.spec.n_nodes() as f64
}

fn weighted_dot(theta: f64, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() - 1;
    theta * crate::linalg::dot(&a[..n], &b[..n]) + a[n] * b[n]
}

/// `D·Lap + blockdiag(∂N/∂U)` on interleaved unknowns.
pub fn assemble_jacobian(f: &Field, p: &ModelParams, lap: &NeumannLaplacian) -> Result<TripletMatrix> {
    let n = f.u.len();
    let mut m = TripletMatrix::new(2 * n);
    m.entries.reserve(2 * lap.val.len() + 4 * n);
    for (r, c, v) in lap.triplets() {
        m.push(2 * r, 2 * c, v);
        m.push(2 * r + 1, 2 * c + 1, p.d * v);
    }
    for k in 0..n {
        let j = reaction_jacobian(p, PointState::new(f.u[k], f.v[k]))?;
        for a in 0..2 {
            for b in 0..2 {
                m.push(2 * k + a, 2 * k + b, j[(a, b)]);
            }
        }
    }
    Ok(m)
}

/// `∂R/∂λ`: λ enters only the v-equation, linearly.
fn lambda_column(n_nodes: usize) -> Vec<f64> {
    (0..2 * n_nodes).map(|i| (i % 2) as f64).collect()
}

/// Newton's method for `R(U) = 0` at fixed λ. Returns the state and the
/// number of iterations.
pub fn newton_correct(
    guess: &Field,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, usize)> {
    let mut f = guess.clone();
    let mut r = rhs(&f, p, lap)?;
    let mut res = norm_inf(&r);
    let mut it = 0;
    while res > tol {
        if it == max_iter || !res.is_finite() {
            return Err(Error::NoConvergence(format!(
                "Newton: residual {res:.3e} after {it} iterations"
            )));
        }
        let dz = assemble_jacobian(&f, p, lap)?.factor()?.solve(&r)?;
        let mut z = f.to_interleaved();
        z.iter_mut().zip(&dz).for_each(|(a, b)| *a -= b);
        f = Field::from_interleaved(f.spec, &z)?;
        r = match rhs(&f, p, lap) {
            Ok(r) => r,
            Err(Error::Domain(m)) => return Err(Error::NoConvergence(format!("Newton left the domain: {m}"))),
            Err(e) => return Err(e),
        };
        res = norm_inf(&r);
        it += 1;
    }
    Ok((f, it))
}

/// Unit tangent at `(f, λ)` oriented along `prev` (or along `+λ` scaled by
/// `dir` when there is no previous tangent).
fn tangent_at(
    f: &Field,
    jac: &TripletMatrix,
    prev: Option<&[f64]>,
    dir: f64,
) -> Result<Vec<f64>> {
    let n = jac.n;
    let theta = weight(f);
    let b = lambda_column(f.u.len());
    let lu = jac.factor()?;
    let mut t = match prev {
        Some(tp) => {
            let c: Vec<f64> = tp[..n].iter().map(|x| theta * x).collect();
            let (x, y) = bordered_solve(jac, &lu, &b, &c, tp[n], &vec![0.0; n], 1.0)?;
            let mut t = x;
            t.push(y);
            t
        }
        None => {
            let x = lu.solve(&b)?;
            let mut t: Vec<f64> = x.iter().map(|v| -v).collect();
            t.push(1.0);
            t.iter_mut().for_each(|v| *v *= dir.signum());
            t
        }
    };
    let nrm = weighted_dot(theta, &t, &t).sqrt();
    t.iter_mut().for_each(|v| *v /= nrm);
    Ok(t)
}

struct Stepper<'a> {
    p: ModelParams,
    lap: &'a NeumannLaplacian,
    settings: &'a ContSettings,
}

impl Stepper<'_> {
    fn finish_point(
        &self,
        state: Field,
        lambda: f64,
        prev_tangent: Option<&[f64]>,
        dir: f64,
        s: f64,
        ds: f64,
        iters: usize,
    ) -> Result<BranchPoint> {
        let p = self.p.with_lambda(lambda);
        let jac = assemble_jacobian(&state, &p, self.lap)?;
        let tangent = tangent_at(&state, &jac, prev_tangent, dir)?;
        let (n_unstable, critical_re) = if self.settings.stability {
            let est = eigenvalues_near_shift(&jac, &self.settings.eigen())?;
            if est.saturated {
                log::warn!("all {} tracked eigenvalues unstable at lambda={lambda}", est.values.len());
            }
            (Some(est.n_unstable()), Some(est.critical_real_part()))
        } else {
            (None, None)
        };
        let residual = norm_inf(&rhs(&state, &p, self.lap)?);
        Ok(BranchPoint {
            s,
            lambda,
            norms: Norms::of(&state),
            state,
            tangent,
            n_unstable,
            critical_re,
            residual,
            ds,
            newton_iterations: iters,
        })
    }

    /// Solves `R = 0`, `⟨z − z_pred, τ⟩ = 0` from `z_pred`.
    fn extended_newton(&self, pred: &[f64], tau: &[f64], spec: crate::grid::DomainSpec) -> Result<(Field, f64, usize)> {
        let n = pred.len() - 1;
        let theta = 1.0 / spec.n_nodes() as f64;
        let mut z = pred.to_vec();
        let b = lambda_column(n / 2);
        let c: Vec<f64> = tau[..n].iter().map(|x| theta * x).collect();
        let mut it = 0;
        loop {
            let f = Field::from_interleaved(spec, &z[..n])?;
            let p = self.p.with_lambda(z[n]);
            let r = match rhs(&f, &p, self.lap) {
                Ok(r) => r,
                Err(Error::Domain(m)) => return Err(Error::NoConvergence(format!("corrector left the domain: {m}"))),
                Err(e) => return Err(e),
            };
            let res = norm_inf(&r);
            let dz: Vec<f64> = z.iter().zip(pred).map(|(a, b)| a - b).collect();
            let g = weighted_dot(theta, &dz, tau);
            if res <= self.settings.newton_tol && g.abs() <= self.settings.newton_tol {
                return Ok((f, z[n], it));
            }
            if it == self.settings.max_newton || !res.is_finite() {
                return Err(Error::NoConvergence(format!("corrector residual {res:.3e} after {it} iterations")));
            }
            let jac = assemble_jacobian(&f, &p, self.lap)?;
            let lu = jac.factor()?;
            let (dx, dl) = bordered_solve(&jac, &lu, &b, &c, tau[n], &r, g)?;
            z[..n].iter_mut().zip(&dx).for_each(|(a, d)| *a -= d);
            z[n] -= dl;
            it += 1;
        }
    }

    fn step(&self, prev: &BranchPoint, ds: f64) -> Result<BranchPoint> {
        let mut pred = prev.state.to_interleaved();
        pred.push(prev.lambda);
        pred.iter_mut().zip(&prev.tangent).for_each(|(a, t)| *a += ds * t);
        let (state, lambda, iters) = self.extended_newton(&pred, &prev.tangent, prev.state.spec)?;
        self.finish_point(state, lambda, Some(&prev.tangent), 1.0, prev.s + ds, ds, iters)
    }
}

/// Newton-corrects `guess` at `p.lambda` and attaches a tangent pointing
/// toward increasing λ when `direction > 0`, decreasing otherwise.
pub fn start_point(
    guess: &Field,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &ContSettings,
    direction: f64,
) -> Result<BranchPoint> {
    settings.validate()?;
    let (state, iters) = newton_correct(guess, p, lap, settings.newton_tol, settings.max_newton.max(20))?;
    let st = Stepper { p: *p, lap, settings };
    st.finish_point(state, p.lambda, None, direction, 0.0, 0.0, iters)
}

/// One pseudo-arclength step of length `ds` from `prev`.
pub fn extended_newton(
    prev: &BranchPoint,
    ds: f64,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &ContSettings,
) -> Result<BranchPoint> {
    Stepper { p: *p, lap, settings }.step(prev, ds)
}

pub fn stability_count(point: &BranchPoint, p: &ModelParams, lap: &NeumannLaplacian, n_eigs: usize) -> Result<usize> {
    let p = p.with_lambda(point.lambda);
    let jac = assemble_jacobian(&point.state, &p, lap)?;
    let s = EigenSettings { nev: n_eigs, ..EigenSettings::default() };
    Ok(eigenvalues_near_shift(&jac, &s)?.n_unstable())
}

/// Events between consecutive points `prev → next` (step `ds`).
///
/// A sign change of the tangent's λ-component is a fold. Changes of the
/// unstable count not explained by a fold are bifurcations; each is
/// localized by bisection in arclength to `bif_loc_tol`, splitting the step
/// when several eigenvalues cross inside it.
pub fn detect_events(
    prev: &BranchPoint,
    next: &BranchPoint,
    index: usize,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &ContSettings,
) -> Result<Vec<Event>> {
    let st = Stepper { p: *p, lap, settings };
    let mut events = Vec::new();
    let fold = prev.tangent_lambda() * next.tangent_lambda() < 0.0;
    if fold {
        let (mut lo, mut hi) = (0.0, next.ds);
        let mut located = next.clone();
        while hi - lo > settings.bif_loc_tol {
            let mid = 0.5 * (lo + hi);
            let pt = st.step(prev, mid)?;
            if pt.tangent_lambda() * prev.tangent_lambda() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            located = pt;
        }
        events.push(Event {
            index,
            kind: EventKind::Fold,
            lambda: located.lambda,
            delta: count_delta(prev, next),
            point: located,
        });
    }
    let (Some(n0), Some(n1)) = (prev.n_unstable, next.n_unstable) else {
        return Ok(events);
    };
    if n0 == n1 || (fold && n0.abs_diff(n1) <= 1) {
        return Ok(events);
    }
    let mut stack = vec![(0.0, n0, next.ds, n1, next.clone())];
    let mut found = Vec::new();
    while let Some((a, na, b, nb, pb)) = stack.pop() {
        if na == nb {
            continue;
        }
        if b - a <= settings.bif_loc_tol {
            found.push(Event {
                index,
                kind: EventKind::Bifurcation,
                lambda: pb.lambda,
                delta: nb as i64 - na as i64,
                point: pb,
            });
            continue;
        }
        let mid = 0.5 * (a + b);
        let pm = st.step(prev, mid)?;
        let nm = pm.n_unstable.unwrap_or(na);
        stack.push((mid, nm, b, nb, pb));
        stack.push((a, na, mid, nm, pm));
    }
    found.sort_by(|x, y| x.point.s.partial_cmp(&y.point.s).unwrap());
    events.extend(found);
    Ok(events)
}

fn count_delta(a: &BranchPoint, b: &BranchPoint) -> i64 {
    match (a.n_unstable, b.n_unstable) {
        (Some(x), Some(y)) => y as i64 - x as i64,
        _ => 0,
    }
}

/// Follows a branch from `start` with adaptive steps: halve on corrector
/// failure, grow by 1.3 after quick convergence. Failures end the branch
/// cleanly with a diagnostic in [`Branch::termination`].
pub fn run_branch(
    label: &str,
    start: BranchPoint,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &ContSettings,
    stop: &StopCriteria,
) -> Result<Branch> {
    run_branch_observed(label, start, p, lap, settings, stop, |_, _| Ok(()))
}

/// As [`run_branch`], calling `observe(index, point)` for every accepted point.
pub fn run_branch_observed(
    label: &str,
    start: BranchPoint,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &ContSettings,
    stop: &StopCriteria,
    mut observe: impl FnMut(usize, &BranchPoint) -> Result<()>,
) -> Result<Branch> {
    settings.validate()?;
    let st = Stepper { p: *p, lap, settings };
    let mut branch = Branch { label: label.to_string(), points: vec![start], events: Vec::new(), termination: None };
    observe(0, &branch.points[0])?;
    let mut ds = settings.ds0;
    while branch.points.len() < stop.max_points {
        let prev = branch.points.last().unwrap();
        let theta = weight(&prev.state);
        let next = match st.step(prev, ds) {
            Ok(pt) if weighted_dot(theta, &pt.tangent, &prev.tangent) > 0.5 => pt,
            outcome => {
                let why = match outcome {
                    Err(e) => e.to_string(),
                    Ok(_) => "tangent turned too sharply".into(),
                };
                ds *= 0.5;
                log::debug!("{label}: step rejected ({why}), ds -> {ds:e}");
                if ds < settings.dsmin {
                    branch.termination = Some(format!("step size below dsmin at lambda={}: {why}", prev.lambda));
                    break;
                }
                continue;
            }
        };
        let index = branch.points.len();
        match detect_events(prev, &next, index, p, lap, settings) {
            Ok(ev) => {
                for e in &ev {
                    log::info!("{label}: {} at lambda={:.6}", e.kind.label(), e.lambda);
                }
                branch.events.extend(ev);
            }
            Err(e) => log::warn!("{label}: event localization failed near lambda={}: {e}", next.lambda),
        }
        if next.newton_iterations <= 3 {
            ds = (ds * 1.3).min(settings.dsmax);
        }
        let outside = next.lambda < stop.lambda_min || next.lambda > stop.lambda_max;
        observe(index, &next)?;
        branch.points.push(next);
        if outside {
            break;
        }
    }
    Ok(branch)
}

/// First point on the branch crossing `event`.
///
/// The near-kernel vector `φ` of the Jacobian at the located point is
/// oriented so that `u(0,0)` increases along it; the new branch is entered
/// at `z_b + direction·perturbation·φ̂` (weighted-unit `φ̂`) and corrected
/// on the hyperplane orthogonal to `φ̂`. Returns the point and `φ`.
pub fn branch_switch(
    event: &Event,
    direction: f64,
    perturbation: f64,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &ContSettings,
) -> Result<(BranchPoint, Field)> {
    if event.kind != EventKind::Bifurcation {
        return Err(Error::InvalidParameter("branch switching needs a bifurcation event".into()));
    }
    let base = &event.point;
    let pl = p.with_lambda(base.lambda);
    let jac = assemble_jacobian(&base.state, &pl, lap)?;
    let (mut phi, _) = near_kernel_vector(&jac, 0.0, 8)?;
    let spec = base.state.spec;
    let c = spec.center_node();
    let lead = if phi[2 * c].abs() > 1e-8 * norm_inf(&phi) {
        phi[2 * c]
    } else {
        // u(0,0) does not move: fall back to the largest u-entry
        *phi.iter().step_by(2).max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap()).unwrap()
    };
    if lead < 0.0 {
        phi.iter_mut().for_each(|x| *x = -*x);
    }
    let theta = weight(&base.state);
    let scale = (theta * crate::linalg::dot(&phi, &phi)).sqrt();
    let mut tau: Vec<f64> = phi.iter().map(|x| x / scale).collect();
    tau.push(0.0);
    let kernel = Field::from_interleaved(spec, &phi)?;
    let st = Stepper { p: *p, lap, settings };
    let mut z0 = base.state.to_interleaved();
    z0.push(base.lambda);
    let mut last_err = None;
    for k in 0..3 {
        let amp = direction.signum() * perturbation * 2f64.powi(k);
        let pred: Vec<f64> = z0.iter().zip(&tau).map(|(a, t)| a + amp * t).collect();
        match st.extended_newton(&pred, &tau, spec) {
            Ok((state, lambda, iters)) => {
                let mut secant: Vec<f64> = state.to_interleaved();
                secant.push(lambda);
                secant.iter_mut().zip(&z0).for_each(|(a, b)| *a -= b);
                let dist = weighted_dot(theta, &secant, &secant).sqrt();
                secant.iter_mut().for_each(|v| *v /= dist);
                let pt = st.finish_point(state, lambda, Some(&secant), 1.0, 0.0, dist, iters)?;
                return Ok((pt, kernel));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::NoConvergence(format!(
        "branch switch at lambda={} failed: {}",
        base.lambda,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

pub fn write_branch_csv(branch: &Branch, w: &mut impl Write) -> Result<()> {
    writeln!(w, "s,lambda,L2_u,L8_u,min_u,max_u,u00,n_unstable,ds,event_flag")?;
    for (i, pt) in branch.points.iter().enumerate() {
        let flag = branch.events.iter().filter(|e| e.index == i).fold(0u8, |f, e| {
            f | match e.kind {
                EventKind::Fold => 1,
                EventKind::Bifurcation => 2,
            }
        });
        let nu = pt.n_unstable.map(|n| n.to_string()).unwrap_or_else(|| "-1".into());
        writeln!(
            w,
            "{:.10e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.6e},{}",
            pt.s, pt.lambda, pt.norms.l2, pt.norms.l8, pt.norms.min, pt.norms.max, pt.norms.u00, nu, pt.ds, flag
        )?;
    }
    Ok(())
}

pub fn write_events_csv(branch: &Branch, w: &mut impl Write) -> Result<()> {
    writeln!(w, "index,kind,located_lambda")?;
    for e in &branch.events {
        writeln!(w, "{},{},{:.12e}", e.index, e.kind.label(), e.lambda)?;
    }
    Ok(())
}

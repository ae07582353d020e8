//! First-order IMEX Euler: implicit diffusion, explicit reaction.
//!
//! `(I − dt·D·Lap) U_{n+1} = U_n + dt·N(U_n)` with `D = diag(1, d)`. The two
//! diffusion blocks are factored once per `dt` and reused.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, NeumannLaplacian};
use crate::linalg::{norm_inf, SparseLu, TripletMatrix};
use crate::model::{reaction, ModelParams, PointState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimestepSettings {
    pub dt: f64,
    pub max_steps: usize,
    pub residual_target: f64,
}

impl Default for TimestepSettings {
    fn default() -> Self {
        Self { dt: 0.1, max_steps: 20_000, residual_target: 1e-4 }
    }
}

impl TimestepSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.residual_target > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "residual_target must be positive, got {}",
                self.residual_target
            )));
        }
        Ok(())
    }
}

/// Factorizations of `I − dt·Lap` and `I − dt·d·Lap`.
pub struct ImexStepper {
    dt: f64,
    lu_u: SparseLu,
    lu_v: SparseLu,
}

fn diffusion_block(lap: &NeumannLaplacian, coef: f64) -> TripletMatrix {
    let mut m = TripletMatrix::new(lap.n);
    for i in 0..lap.n {
        m.push(i, i, 1.0);
    }
    for (r, c, v) in lap.triplets() {
        m.push(r, c, -coef * v);
    }
    m
}

impl ImexStepper {
    pub fn new(lap: &NeumannLaplacian, d: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            dt,
            lu_u: diffusion_block(lap, dt).factor()?,
            lu_v: diffusion_block(lap, dt * d).factor()?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, f: &Field, p: &ModelParams) -> Result<Field> {
        let n = f.u.len();
        let mut bu = Vec::with_capacity(n);
        let mut bv = Vec::with_capacity(n);
        for k in 0..n {
            let (nu, nv) = reaction(p, PointState::new(f.u[k], f.v[k]))?;
            bu.push(f.u[k] + self.dt * nu);
            bv.push(f.v[k] + self.dt * nv);
        }
        Ok(Field { spec: f.spec, u: self.lu_u.solve(&bu)?, v: self.lu_v.solve(&bv)? })
    }
}

pub fn imex_step(f: &Field, p: &ModelParams, lap: &NeumannLaplacian, dt: f64) -> Result<Field> {
    ImexStepper::new(lap, p.d, dt)?.step(f, p)
}

/// `D·Lap·U + N(U)`, interleaved.
pub fn rhs(f: &Field, p: &ModelParams, lap: &NeumannLaplacian) -> Result<Vec<f64>> {
    let lu = lap.apply(&f.u);
    let lv = lap.apply(&f.v);
    let mut r = Vec::with_capacity(2 * f.u.len());
    for k in 0..f.u.len() {
        let (nu, nv) = reaction(p, PointState::new(f.u[k], f.v[k]))?;
        r.push(lu[k] + nu);
        r.push(p.d * lv[k] + nv);
    }
    Ok(r)
}

/// `‖∂_t U‖_∞`.
pub fn residual_inf(f: &Field, p: &ModelParams, lap: &NeumannLaplacian) -> Result<f64> {
    Ok(norm_inf(&rhs(f, p, lap)?))
}

#[derive(Debug, Clone)]
pub struct Integration {
    pub field: Field,
    pub steps: usize,
    pub reached: bool,
    pub residual: f64,
    pub time: f64,
    pub dt: f64,
}

/// Steps until the residual drops to the target or `max_steps` is used.
pub fn integrate_to_residual(
    f: &Field,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &TimestepSettings,
) -> Result<Integration> {
    integrate_observed(f, p, lap, settings, |_, _, _, _| Ok(()))
}

/// As [`integrate_to_residual`], calling `observe(step, time, field, residual)`
/// after every accepted step and once for the initial state (step 0).
///
/// A step that raises the residual more than tenfold is rejected and `dt`
/// halved; `dt` never drops below `1e-6` of its initial value.
pub fn integrate_observed(
    f: &Field,
    p: &ModelParams,
    lap: &NeumannLaplacian,
    settings: &TimestepSettings,
    mut observe: impl FnMut(usize, f64, &Field, f64) -> Result<()>,
) -> Result<Integration> {
    settings.validate()?;
    let mut field = f.clone();
    let mut res = residual_inf(&field, p, lap)?;
    let mut time = 0.0;
    let mut steps = 0;
    observe(0, time, &field, res)?;
    let dt_min = 1e-6 * settings.dt;
    let mut stepper = ImexStepper::new(lap, p.d, settings.dt)?;
    while res > settings.residual_target && steps < settings.max_steps {
        let trial = stepper.step(&field, p)?;
        let tres = if trial.is_finite() { residual_inf(&trial, p, lap).unwrap_or(f64::INFINITY) } else { f64::INFINITY };
        if tres > 10.0 * res || !tres.is_finite() {
            let dt = 0.5 * stepper.dt();
            if dt < dt_min {
                return Err(Error::NoConvergence(format!("time step fell below {dt_min:e}")));
            }
            log::debug!("step {steps}: residual {res:.3e} -> {tres:.3e}, dt -> {dt}");
            stepper = ImexStepper::new(lap, p.d, dt)?;
            continue;
        }
        time += stepper.dt();
        steps += 1;
        field = trial;
        res = tres;
        observe(steps, time, &field, res)?;
    }
    Ok(Integration {
        field,
        steps,
        reached: res <= settings.residual_target,
        residual: res,
        time,
        dt: stepper.dt(),
    })
}

/// Space–time trace of `u` along the bottom edge `y = −ly`.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, f: &Field) -> Result<Self> {
        write!(out, "step,t,residual")?;
        for i in 0..f.spec.nx {
            write!(out, ",u_{i}")?;
        }
        writeln!(out)?;
        Ok(Self { out })
    }

    pub fn record(&mut self, step: usize, t: f64, f: &Field, residual: f64) -> Result<()> {
        write!(self.out, "{step},{t:.10e},{residual:.10e}")?;
        for u in &f.u[..f.spec.nx] {
            write!(self.out, ",{u:.10e}")?;
        }
        writeln!(self.out)?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, build_laplacian, make_initial_guess};
    use crate::model::{dispersion_matrix, homogeneous_state};
    use nalgebra::Vector2;
    use std::f64::consts::PI;

    fn params(lambda: f64) -> ModelParams {
        ModelParams::new(lambda, 60.0, 0.0).unwrap()
    }

    #[test]
    fn equilibrium_is_fixed() {
        let spec = build_domain(2.0, 2.0, 33, 25, false).unwrap();
        let lap = build_laplacian(&spec);
        for sigma in [0.0, -0.3] {
            let p = ModelParams::new(3.1, 60.0, sigma).unwrap();
            let w = homogeneous_state(&p);
            let f = Field::constant(spec, w.u, w.v);
            assert!(residual_inf(&f, &p, &lap).unwrap() < 1e-13);
            let g = imex_step(&f, &p, &lap, 0.1).unwrap();
            let diff = f.u.iter().zip(&g.u).chain(f.v.iter().zip(&g.v)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "{diff}");
        }
    }

    #[test]
    fn starting_at_equilibrium_takes_no_steps() {
        let spec = build_domain(1.0, 1.0, 9, 9, false).unwrap();
        let lap = build_laplacian(&spec);
        let p = params(3.0);
        let w = homogeneous_state(&p);
        let out = integrate_to_residual(&Field::constant(spec, w.u, w.v), &p, &lap, &TimestepSettings::default()).unwrap();
        assert_eq!(out.steps, 0);
        assert!(out.reached);
    }

    // One Fourier mode on a strip: compare against exp(T·L̂(κ)) where κ is
    // the discrete Laplacian eigenvalue of that mode.
    fn mode_error(dt: f64) -> f64 {
        let spec = build_domain(2.0, 0.5, 65, 2, true).unwrap();
        let lap = build_laplacian(&spec);
        let p = params(3.3);
        let w = homogeneous_state(&p);
        let j = 6.0;
        let eps = 1e-7;
        let a0 = Vector2::new(1.0, -0.5);
        let lx = spec.lx();
        let mode = |x: f64| (PI * j * (x + lx) / (2.0 * lx)).cos();
        let f0 = Field::from_fn(spec, |x, _| (w.u + eps * a0[0] * mode(x), w.v + eps * a0[1] * mode(x)));
        let t_end = 1.0;
        let nsteps = (t_end / dt).round() as usize;
        let st = ImexStepper::new(&lap, p.d, dt).unwrap();
        let mut f = f0;
        for _ in 0..nsteps {
            f = st.step(&f, &p).unwrap();
        }
        let kappa = (2.0 - 2.0 * (PI * j / (spec.nx - 1) as f64).cos()) / spec.hx().powi(2);
        let l = dispersion_matrix(&p, kappa.sqrt());
        let exact = (l * t_end).exp() * a0;
        let i0 = 0;
        let got = Vector2::new((f.u[i0] - w.u) / eps, (f.v[i0] - w.v) / eps);
        (got - exact).norm() / exact.norm()
    }

    #[test]
    fn linear_mode_first_order_in_dt() {
        let e1 = mode_error(0.01);
        let e2 = mode_error(0.005);
        assert!(e1 < 0.05, "{e1}");
        let ratio = e1 / e2;
        assert!((1.7..2.3).contains(&ratio), "{e1} {e2} {ratio}");
    }

    #[test]
    fn step_is_identity_plus_dt_rhs() {
        let spec = build_domain(1.0, 1.0, 17, 13, false).unwrap();
        let lap = build_laplacian(&spec);
        let p = params(2.9);
        let f = make_initial_guess(spec, p.lambda, 0.3, 0.15, 12.0);
        let r = rhs(&f, &p, &lap).unwrap();
        let z0 = f.to_interleaved();
        let defect = |dt: f64| {
            let z = imex_step(&f, &p, &lap, dt).unwrap().to_interleaved();
            (0..z.len()).map(|i| (z[i] - z0[i] - dt * r[i]).abs()).fold(0.0, f64::max)
        };
        let (a, b, c) = (defect(1e-3), defect(5e-4), defect(2.5e-4));
        assert!((3.5..4.5).contains(&(a / b)), "{}", a / b);
        assert!((3.5..4.5).contains(&(b / c)), "{}", b / c);
    }

    #[test]
    fn residual_decreases_from_localized_guess() {
        let spec = build_domain(8.0, 2.0, 129, 33, false).unwrap();
        let lap = build_laplacian(&spec);
        let p = params(2.7);
        let f = make_initial_guess(spec, p.lambda, 0.3, 0.15, 12.0);
        let r0 = residual_inf(&f, &p, &lap).unwrap();
        assert!(r0 > 0.0);
        let settings = TimestepSettings { dt: 0.1, max_steps: 200, residual_target: 1e-12 };
        let out = integrate_to_residual(&f, &p, &lap, &settings).unwrap();
        assert!(out.residual < 0.5 * r0, "{r0} -> {}", out.residual);
    }

    #[test]
    fn trace_rows_hold_bottom_edge() {
        let spec = build_domain(1.0, 1.0, 5, 4, false).unwrap();
        let f = Field::from_fn(spec, |x, y| (x + 10.0 * y, 0.0));
        let mut t = TraceWriter::new(Vec::new(), &f).unwrap();
        t.record(3, 0.3, &f, 1.0).unwrap();
        let text = String::from_utf8(t.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,t,residual,u_0,u_1,u_2,u_3,u_4");
        let vals: Vec<f64> = lines[1].split(',').skip(3).map(|s| s.parse().unwrap()).collect();
        for (i, v) in vals.iter().enumerate() {
            assert!((v - (spec.x(i) - 10.0 * spec.ly())).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_settings_rejected() {
        assert!(TimestepSettings { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(TimestepSettings { residual_target: -1.0, ..Default::default() }.validate().is_err());
    }
}

//! Weakly nonlinear reduction at the Turing point: critical modes, quadratic
//! correctors, Landau coefficients, fixed points, potential energies,
//! Maxwell points and stationary Ginzburg–Landau fronts.
//!
//! Amplitudes are restricted to real values. With wave vectors
//! `k₁ = k_c(1, 0)`, `k₂ = k_c(−1, √3)/2`, `k₃ = k_c(−1, −√3)/2` the Landau
//! system reads
//!
//! ```text
//! f₁ = c₁A₁ + c₂A₂A₃ + c₃A₁³ + c₄A₁(A₂² + A₃²)
//! ```
//!
//! and cyclically for `f₂`, `f₃`. It is the gradient of
//!
//! ```text
//! E = Σ (c₁/2 A_i² + c₃/4 A_i⁴) + c₂A₁A₂A₃ + c₄/2 (A₁²A₂² + A₁²A₃² + A₂²A₃²).
//! ```

use std::io::Write;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainSpec, Field};
use crate::linalg::{norm_inf, TripletMatrix};
use crate::model::{
    bilinear_b, critical_values, critical_wavenumber, dispersion_matrix, homogeneous_state,
    mu_plus, trilinear_c, ModelParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalModes {
    pub mu: f64,
    /// Unit Euclidean norm, first component positive.
    pub phi: Vector2<f64>,
    /// Scaled so that `⟨Φ, Φ*⟩ = 1`.
    pub phi_star: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correctors {
    pub phi0: Vector2<f64>,
    pub phi1: Vector2<f64>,
    pub phi2: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandauCoeffs {
    pub lambda: f64,
    pub sigma: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c31: f64,
    pub c41: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeState {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl AmplitudeState {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Self {
        Self { a1, a2, a3 }
    }

    pub fn stripe(a: f64) -> Self {
        Self::new(a, 0.0, 0.0)
    }

    pub fn hexagon(b: f64) -> Self {
        Self::new(b, b, b)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.a1, self.a2, self.a3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointKind {
    Zero,
    StripePlus,
    StripeMinus,
    HexagonPlus,
    HexagonMinus,
    Mixed,
}

impl FixedPointKind {
    pub fn label(&self) -> &'static str {
        match self {
            FixedPointKind::Zero => "zero",
            FixedPointKind::StripePlus => "stripe+",
            FixedPointKind::StripeMinus => "stripe-",
            FixedPointKind::HexagonPlus => "hexagon+",
            FixedPointKind::HexagonMinus => "hexagon-",
            FixedPointKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyVariant {
    Standard,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxwellKind {
    /// Hot stripes `T₊` against hot hexagons `P₊`.
    Hot,
    /// Cold stripes `T₋` against cold hexagons `P₋`.
    Cold,
    /// Cold hexagons against the homogeneous state.
    Homogeneous,
    /// Stripes with the full coefficients against hexagons with the
    /// first-order coefficients `c₃₁, c₄₁`.
    MixedHot,
    /// Energy crossing of the blended (mixed) potential between `S` and `H`.
    MixedVariational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontKind {
    Hot,
    Cold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzOrder {
    First,
    Full,
}

pub fn critical_modes(p: &ModelParams) -> Result<CriticalModes> {
    let kc = critical_wavenumber();
    let m = dispersion_matrix(p, kc);
    let d = dispersion(p, kc)?;
    let (mu, mu_minus) = d;
    let phi = eigvec(&m, mu)?;
    let phi_star_raw = eigvec(&m.transpose(), mu)?;
    let s = phi.dot(&phi_star_raw);
    if s.abs() < 1e-14 {
        return Err(Error::Singular("adjoint eigenvector orthogonal to Phi".into()));
    }
    let _ = mu_minus;
    Ok(CriticalModes { mu, phi, phi_star: phi_star_raw / s })
}

fn dispersion(p: &ModelParams, k: f64) -> Result<(f64, f64)> {
    let r = crate::model::dispersion(p, k);
    if r.is_complex || (r.mu_plus - r.mu_minus).abs() < 1e-12 {
        return Err(Error::Domain(format!(
            "no simple real eigenvalue of the dispersion matrix at k={k}, lambda={}",
            p.lambda
        )));
    }
    Ok((r.mu_plus, r.mu_minus))
}

/// Unit eigenvector of a 2×2 matrix for a simple real eigenvalue, first
/// component nonnegative.
fn eigvec(m: &Matrix2<f64>, mu: f64) -> Result<Vector2<f64>> {
    let a = m - Matrix2::identity() * mu;
    // null vector from the row of larger norm
    let r0 = Vector2::new(a[(0, 0)], a[(0, 1)]);
    let r1 = Vector2::new(a[(1, 0)], a[(1, 1)]);
    let r = if r0.norm() >= r1.norm() { r0 } else { r1 };
    if r.norm() == 0.0 {
        return Err(Error::Singular("zero matrix in eigenvector computation".into()));
    }
    let mut v = Vector2::new(-r[1], r[0]).normalize();
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = -v;
    }
    Ok(v)
}

fn solve2(m: &Matrix2<f64>, b: Vector2<f64>, k: f64) -> Result<Vector2<f64>> {
    let det = m.determinant();
    if det.abs() < 1e-14 * (1.0 + m.norm_squared()) {
        return Err(Error::Singular(format!("dispersion matrix singular at k={k}")));
    }
    let x = Vector2::new(m[(1, 1)] * b[0] - m[(0, 1)] * b[1], -m[(1, 0)] * b[0] + m[(0, 0)] * b[1]) / det;
    // one refinement step
    let r = b - m * x;
    let dx = Vector2::new(m[(1, 1)] * r[0] - m[(0, 1)] * r[1], -m[(1, 0)] * r[0] + m[(0, 0)] * r[1]) / det;
    Ok(x + dx)
}

/// Quadratic correctors at wavenumbers `0`, `2k_c` and `√3 k_c`.
pub fn correctors(p: &ModelParams, modes: &CriticalModes) -> Result<Correctors> {
    let kc = critical_wavenumber();
    let bpp = bilinear_b(p, modes.phi, modes.phi);
    let k2 = 2.0 * kc;
    let k3 = 3f64.sqrt() * kc;
    Ok(Correctors {
        phi0: -solve2(&dispersion_matrix(p, 0.0), bpp * 2.0, 0.0)?,
        phi1: -solve2(&dispersion_matrix(p, k2), bpp, k2)?,
        phi2: -solve2(&dispersion_matrix(p, k3), bpp * 2.0, k3)?,
    })
}

/// `c₀ = −½ ∂²μ₊/∂k²` at `k_c` by central differences with one Richardson step.
fn c0_fd(p: &ModelParams) -> f64 {
    let kc = critical_wavenumber();
    let d2 = |h: f64| (mu_plus(p, kc + h) - 2.0 * mu_plus(p, kc) + mu_plus(p, kc - h)) / (h * h);
    let h = 1e-3 * kc;
    let r = (4.0 * d2(0.5 * h) - d2(h)) / 3.0;
    -0.5 * r
}

pub fn landau_coefficients(p: &ModelParams) -> Result<LandauCoeffs> {
    let modes = critical_modes(p)?;
    let cor = correctors(p, &modes)?;
    let (phi, ps) = (modes.phi, modes.phi_star);
    let bpp = bilinear_b(p, phi, phi);
    let cppp = trilinear_c(p, phi, phi, phi);
    let b1 = bilinear_b(p, phi, cor.phi1);
    let b0 = bilinear_b(p, phi, cor.phi0);
    let b2 = bilinear_b(p, phi, cor.phi2);
    Ok(LandauCoeffs {
        lambda: p.lambda,
        sigma: p.sigma,
        c0: c0_fd(p),
        c1: modes.mu,
        c2: 2.0 * bpp.dot(&ps),
        c3: (cppp * 3.0 + b1 * 2.0 + b0 * 2.0).dot(&ps),
        c4: (cppp * 6.0 + b2 * 2.0 + b0 * 2.0).dot(&ps),
        c31: 3.0 * cppp.dot(&ps),
        c41: 6.0 * cppp.dot(&ps),
    })
}

/// Quartic self-interaction of the Landau system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quartic {
    /// `c₃ a³` in `f`.
    Constant(f64),
    /// `(c₃ (a − H)/(S − H) + c₃₁ (a − S)/(H − S)) a³` in `f`.
    Blend { c3: f64, c31: f64, s: f64, h: f64 },
}

/// Real three-amplitude Landau system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandauSystem {
    pub c1: f64,
    pub c2: f64,
    pub cross: f64,
    pub quartic: Quartic,
}

impl LandauSystem {
    pub fn standard(c: &LandauCoeffs) -> Self {
        Self { c1: c.c1, c2: c.c2, cross: c.c4, quartic: Quartic::Constant(c.c3) }
    }

    pub fn first_order(c: &LandauCoeffs) -> Self {
        Self { c1: c.c1, c2: c.c2, cross: c.c41, quartic: Quartic::Constant(c.c31) }
    }

    /// Blended system with `S = T₊(c₁, c₃)` and `H = P₊(c₁, c₂, c₃₁, c₄₁)`.
    pub fn mixed(c: &LandauCoeffs) -> Result<Self> {
        let s = stripe_amplitude(c.c1, c.c3, 1.0)
            .ok_or_else(|| Error::Domain("no real stripe amplitude S".into()))?;
        let h = hexagon_amplitude(c.c1, c.c2, c.c31, c.c41, 1.0)
            .ok_or_else(|| Error::Domain("no real hexagon amplitude H".into()))?;
        if (s - h).abs() < 1e-12 {
            return Err(Error::Domain("S = H, blended system undefined".into()));
        }
        Ok(Self {
            c1: c.c1,
            c2: c.c2,
            cross: c.c41,
            quartic: Quartic::Blend { c3: c.c3, c31: c.c31, s, h },
        })
    }

    /// `q(a) a³` and its derivative.
    fn self_term(&self, a: f64) -> (f64, f64) {
        match self.quartic {
            Quartic::Constant(c3) => (c3 * a.powi(3), 3.0 * c3 * a * a),
            Quartic::Blend { c3, c31, s, h } => {
                let q = c3 * (a - h) / (s - h) + c31 * (a - s) / (h - s);
                let dq = (c3 - c31) / (s - h);
                (q * a.powi(3), dq * a.powi(3) + 3.0 * q * a * a)
            }
        }
    }

    fn self_energy(&self, a: f64) -> f64 {
        match self.quartic {
            Quartic::Constant(c3) => 0.25 * c3 * a.powi(4),
            Quartic::Blend { c3, c31, s, h } => {
                a.powi(4) * (c3 * (a / 5.0 - h / 4.0) / (s - h) + c31 * (a / 5.0 - s / 4.0) / (h - s))
            }
        }
    }

    pub fn f(&self, st: &AmplitudeState) -> Vector3<f64> {
        let a = st.as_vector();
        Vector3::from_fn(|i, _| {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            self.c1 * a[i]
                + self.c2 * a[j] * a[k]
                + self.self_term(a[i]).0
                + self.cross * a[i] * (a[j] * a[j] + a[k] * a[k])
        })
    }

    pub fn jacobian(&self, st: &AmplitudeState) -> Matrix3<f64> {
        let a = st.as_vector();
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            m[(i, i)] = self.c1 + self.self_term(a[i]).1 + self.cross * (a[j] * a[j] + a[k] * a[k]);
            m[(i, j)] = self.c2 * a[k] + 2.0 * self.cross * a[i] * a[j];
            m[(i, k)] = self.c2 * a[j] + 2.0 * self.cross * a[i] * a[k];
        }
        m
    }

    pub fn energy(&self, st: &AmplitudeState) -> f64 {
        let a = st.as_vector();
        let quad: f64 = (0..3).map(|i| 0.5 * self.c1 * a[i] * a[i] + self.self_energy(a[i])).sum();
        quad + self.c2 * a[0] * a[1] * a[2]
            + 0.5 * self.cross * (a[0] * a[0] * a[1] * a[1] + a[0] * a[0] * a[2] * a[2] + a[1] * a[1] * a[2] * a[2])
    }

    /// Restriction to `A₂ = A₃ = B`: `(f₁, f₂)` and its Jacobian in `(A, B)`.
    pub fn reduced(&self, a: f64, b: f64) -> (Vector2<f64>, Matrix2<f64>) {
        let st = AmplitudeState::new(a, b, b);
        let f = self.f(&st);
        let j = self.jacobian(&st);
        (
            Vector2::new(f[0], f[1]),
            Matrix2::new(j[(0, 0)], j[(0, 1)] + j[(0, 2)], j[(1, 0)], j[(1, 1)] + j[(1, 2)]),
        )
    }
}

/// `T± = ±√(−c₁/c₃)`.
pub fn stripe_amplitude(c1: f64, c3: f64, sign: f64) -> Option<f64> {
    let r = -c1 / c3;
    (r >= 0.0 && r.is_finite()).then(|| sign * r.sqrt())
}

/// `P± = −c₂/(2q) ± √(c₂²/(4q²) − c₁/q)` with `q = c₃ + 2c₄`.
pub fn hexagon_amplitude(c1: f64, c2: f64, c3: f64, c4: f64, sign: f64) -> Option<f64> {
    let q = c3 + 2.0 * c4;
    let disc = c2 * c2 - 4.0 * q * c1;
    if !(disc >= 0.0 && disc.is_finite()) || q == 0.0 {
        return None;
    }
    // roots of c₁ + c₂B + qB² without cancellation
    let t = -0.5 * (c2 + c2.signum() * disc.sqrt());
    let r1 = t / q;
    let r2 = if t != 0.0 { c1 / t } else { r1 };
    Some(if sign > 0.0 { r1.max(r2) } else { r1.min(r2) })
}

/// Newton polish of a real fixed point in the `(A, B, B)` subspace.
fn polish(sys: &LandauSystem, mut a: f64, mut b: f64) -> (f64, f64) {
    for _ in 0..50 {
        let (f, j) = sys.reduced(a, b);
        if f.amax() < 1e-15 {
            break;
        }
        match j.try_inverse() {
            Some(ji) => {
                let d = ji * f;
                a -= d[0];
                b -= d[1];
                if d.amax() < 1e-16 * (1.0 + a.abs() + b.abs()) {
                    break;
                }
            }
            None => break,
        }
    }
    (a, b)
}

/// All real fixed points of the standard system in the `(A, B, B)` subspace
/// (mixed modes are listed with `B > 0`).
pub fn landau_fixed_points(c: &LandauCoeffs) -> Vec<(AmplitudeState, FixedPointKind)> {
    let sys = LandauSystem::standard(c);
    let mut out = vec![(AmplitudeState::new(0.0, 0.0, 0.0), FixedPointKind::Zero)];
    for (sign, kind) in [(1.0, FixedPointKind::StripePlus), (-1.0, FixedPointKind::StripeMinus)] {
        if let Some(t) = stripe_amplitude(c.c1, c.c3, sign) {
            if t != 0.0 {
                let (a, _) = polish(&sys, t, 0.0);
                out.push((AmplitudeState::stripe(a), kind));
            }
        }
    }
    for (sign, kind) in [(1.0, FixedPointKind::HexagonPlus), (-1.0, FixedPointKind::HexagonMinus)] {
        if let Some(p) = hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, sign) {
            if p != 0.0 {
                let (a, b) = polish(&sys, p, p);
                out.push((AmplitudeState::new(a, b, b), kind));
            }
        }
    }
    for (a, b) in mixed_modes(c) {
        out.push((AmplitudeState::new(a, b, b), FixedPointKind::Mixed));
    }
    out
}

/// Mixed modes `A ≠ ±B ≠ 0`: with `B² = −(c₁ + c₂A + c₄A²)/(c₃ + c₄)` the
/// first equation becomes a scalar equation in `A`, scanned for sign changes.
fn mixed_modes(c: &LandauCoeffs) -> Vec<(f64, f64)> {
    let sys = LandauSystem::standard(c);
    let den = c.c3 + c.c4;
    if den.abs() < 1e-14 {
        return Vec::new();
    }
    let b2 = |a: f64| -(c.c1 + c.c2 * a + c.c4 * a * a) / den;
    let g = |a: f64| c.c1 * a + (c.c2 + 2.0 * c.c4 * a) * b2(a) + c.c3 * a.powi(3);
    let scale = [
        stripe_amplitude(c.c1, c.c3, 1.0),
        hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, 1.0),
        hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, -1.0),
    ]
    .iter()
    .flatten()
    .fold(1.0f64, |m, x| m.max(x.abs()));
    let amax = 3.0 * scale;
    const N: usize = 10_000;
    let xs: Vec<f64> = (0..=N).map(|i| -amax + 2.0 * amax * i as f64 / N as f64).collect();
    let mut roots: Vec<(f64, f64)> = Vec::new();
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let (g0, g1) = (g(x0), g(x1));
        if g0 == 0.0 || g0 * g1 < 0.0 {
            let mut lo = x0;
            let mut hi = x1;
            let mut glo = g0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == (glo < 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            let a = 0.5 * (lo + hi);
            let bb = b2(a);
            if bb <= 1e-14 {
                continue;
            }
            let (a, b) = polish(&sys, a, bb.sqrt());
            let b = b.abs();
            let tol = 1e-8 * (1.0 + a.abs());
            if b < tol || (a.abs() - b).abs() < tol {
                continue;
            }
            if sys.reduced(a, b).0.amax() > 1e-10 {
                continue;
            }
            if !roots.iter().any(|(ra, rb)| (ra - a).abs() < tol && (rb - b).abs() < tol) {
                roots.push((a, b));
            }
        }
    }
    roots
}

/// Number of positive eigenvalues of the 3×3 real Jacobian at `state`.
pub fn landau_stability(c: &LandauCoeffs, state: &AmplitudeState) -> usize {
    system_stability(&LandauSystem::standard(c), state)
}

pub fn system_stability(sys: &LandauSystem, state: &AmplitudeState) -> usize {
    let j = sys.jacobian(state);
    let sym = (j + j.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().filter(|&&e| e > 1e-12).count()
}

pub fn potential_energy(c: &LandauCoeffs, state: &AmplitudeState, variant: EnergyVariant) -> Result<f64> {
    Ok(match variant {
        EnergyVariant::Standard => LandauSystem::standard(c).energy(state),
        EnergyVariant::Mixed => LandauSystem::mixed(c)?.energy(state),
    })
}

pub fn fold_criterion(c: &LandauCoeffs) -> Result<f64> {
    let q = c.c3 + 2.0 * c.c4;
    if q.abs() < 1e-14 {
        return Err(Error::Singular("c3 + 2 c4 vanishes".into()));
    }
    Ok(c.c2 * c.c2 / (4.0 * q))
}

fn coeffs_at(lambda: f64, sigma: f64, d: f64) -> Result<LandauCoeffs> {
    landau_coefficients(&ModelParams::new(lambda, d, sigma)?)
}

/// Energy difference whose zero defines the Maxwell point; `None` where one of
/// the states does not exist.
pub fn maxwell_function(kind: MaxwellKind, lambda: f64, sigma: f64, d: f64) -> Option<f64> {
    let c = coeffs_at(lambda, sigma, d).ok()?;
    let std = LandauSystem::standard(&c);
    match kind {
        MaxwellKind::Hot | MaxwellKind::Cold => {
            let sign = if kind == MaxwellKind::Hot { 1.0 } else { -1.0 };
            let t = stripe_amplitude(c.c1, c.c3, sign)?;
            let p = hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, sign)?;
            Some(std.energy(&AmplitudeState::stripe(t)) - std.energy(&AmplitudeState::hexagon(p)))
        }
        MaxwellKind::Homogeneous => {
            let p = hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, -1.0)?;
            Some(std.energy(&AmplitudeState::hexagon(p)))
        }
        MaxwellKind::MixedHot => {
            let t = stripe_amplitude(c.c1, c.c3, 1.0)?;
            let h = hexagon_amplitude(c.c1, c.c2, c.c31, c.c41, 1.0)?;
            let fo = LandauSystem::first_order(&c);
            Some(std.energy(&AmplitudeState::stripe(t)) - fo.energy(&AmplitudeState::hexagon(h)))
        }
        MaxwellKind::MixedVariational => {
            let m = LandauSystem::mixed(&c).ok()?;
            let Quartic::Blend { s, h, .. } = m.quartic else { unreachable!() };
            Some(m.energy(&AmplitudeState::stripe(s)) - m.energy(&AmplitudeState::hexagon(h)))
        }
    }
}

/// Scan interval for each kind at diffusion ratio `d`.
fn maxwell_bracket(kind: MaxwellKind, d: f64) -> (f64, f64) {
    let lc = critical_values(d).0;
    match kind {
        MaxwellKind::Hot | MaxwellKind::MixedHot | MaxwellKind::MixedVariational => (0.75 * lc, lc),
        MaxwellKind::Cold => (0.8 * lc, lc),
        MaxwellKind::Homogeneous => (lc, 1.05 * lc),
    }
}

/// Bisection to `tol` on a sign change of `f` in `[lo, hi]`.
pub fn bisect(mut f: impl FnMut(f64) -> Option<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo).ok_or_else(|| Error::NoRoot(format!("undefined at {lo}")))?;
    let fhi = f(hi).ok_or_else(|| Error::NoRoot(format!("undefined at {hi}")))?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if (flo < 0.0) == (fhi < 0.0) {
        return Err(Error::NoRoot(format!("no sign change in [{lo}, {hi}]")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid).ok_or_else(|| Error::NoRoot(format!("undefined at {mid}")))?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scans `[lo, hi]` on `n` points and bisects the first sign change where `f`
/// is defined on both sides. Scans from `hi` downwards when `from_top`.
/// Sign changes across poles are skipped.
pub fn scan_root(
    f: impl Fn(f64) -> Option<f64>,
    lo: f64,
    hi: f64,
    n: usize,
    from_top: bool,
    tol: f64,
) -> Result<f64> {
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let vals: Vec<Option<f64>> = xs.iter().map(|&x| f(x)).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    if from_top {
        idx.reverse();
    }
    for i in idx {
        if let (Some(a), Some(b)) = (vals[i], vals[i + 1]) {
            if a == 0.0 {
                return Ok(xs[i]);
            }
            if (a < 0.0) != (b < 0.0) {
                let r = bisect(&f, xs[i], xs[i + 1], tol)?;
                if f(r).is_some_and(|v| v.abs() <= a.abs().max(b.abs())) {
                    return Ok(r);
                }
            }
        }
    }
    Err(Error::NoRoot(format!("no sign change of the energy difference in [{lo}, {hi}]")))
}

pub fn maxwell_point(kind: MaxwellKind, sigma: f64, d: f64) -> Result<f64> {
    let (lo, hi) = maxwell_bracket(kind, d);
    let from_top = matches!(kind, MaxwellKind::Cold | MaxwellKind::Homogeneous);
    scan_root(|l| maxwell_function(kind, l, sigma, d), lo, hi, 200, from_top, 1e-12)
}

/// λ at which the hexagon branches fold (`P±` merge): `c₁ = c_f`.
pub fn hexagon_fold(sigma: f64, d: f64) -> Result<f64> {
    let lc = critical_values(d).0;
    let g = |l: f64| {
        let c = coeffs_at(l, sigma, d).ok()?;
        Some(c.c1 - fold_criterion(&c).ok()?)
    };
    scan_root(g, 0.9 * lc, 1.1 * lc, 200, false, 1e-12)
}

/// Root in σ of a coefficient combination at `λ = λ_c(d)`.
pub fn sigma_root(f: impl Fn(&LandauCoeffs) -> f64, lo: f64, hi: f64, d: f64) -> Result<f64> {
    let lc = critical_values(d).0;
    scan_root(|s| coeffs_at(lc, s, d).ok().map(|c| f(&c)), lo, hi, 100, true, 1e-12)
}

/// Hot bistable window `(λ_s^e, λ_hh^b)` of the Landau system: stripes `T₊`
/// stable above the lower end, hexagons `P₊` stable below the upper end.
pub fn hot_bistable_window(sigma: f64, d: f64) -> Result<(f64, f64)> {
    let lc = critical_values(d).0;
    let stripe_unstable = |l: f64| {
        let c = coeffs_at(l, sigma, d).ok()?;
        let t = stripe_amplitude(c.c1, c.c3, 1.0)?;
        Some(landau_stability(&c, &AmplitudeState::stripe(t)) as f64 - 0.5)
    };
    let hex_unstable = |l: f64| {
        let c = coeffs_at(l, sigma, d).ok()?;
        let p = hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, 1.0)?;
        Some(landau_stability(&c, &AmplitudeState::hexagon(p)) as f64 - 0.5)
    };
    let lo = scan_root(stripe_unstable, 0.6 * lc, lc - 1e-6, 400, false, 1e-10)?;
    let hi = scan_root(hex_unstable, 0.6 * lc, lc - 1e-6, 400, false, 1e-10)?;
    Ok((lo, hi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GLFrontProfile {
    pub lambda: f64,
    pub kind: FrontKind,
    pub variant: EnergyVariant,
    pub x: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// Fixed point approached at `x = −L` (stripes).
    pub left: (f64, f64),
    /// Fixed point approached at `x = +L` (hexagons).
    pub right: (f64, f64),
    pub residual: f64,
    pub newton_iterations: usize,
    pub c0: f64,
}

impl GLFrontProfile {
    fn system(&self, c: &LandauCoeffs) -> Result<LandauSystem> {
        match self.variant {
            EnergyVariant::Standard => Ok(LandauSystem::standard(c)),
            EnergyVariant::Mixed => LandauSystem::mixed(c),
        }
    }

    /// `E_kin + E_pot` at each node, with centred differences for `A'`.
    pub fn local_energy(&self, c: &LandauCoeffs) -> Result<Vec<f64>> {
        let sys = self.system(c)?;
        let n = self.x.len();
        let h = self.x[1] - self.x[0];
        Ok((0..n)
            .map(|i| {
                let (da, db) = if i == 0 || i + 1 == n {
                    (0.0, 0.0)
                } else {
                    (
                        (self.a1[i + 1] - self.a1[i - 1]) / (2.0 * h),
                        (self.a2[i + 1] - self.a2[i - 1]) / (2.0 * h),
                    )
                };
                let ekin = 0.5 * self.c0 * (da * da + 0.5 * db * db);
                ekin + sys.energy(&AmplitudeState::new(self.a1[i], self.a2[i], self.a2[i]))
            })
            .collect())
    }

    /// `(max − min)` of the local total energy relative to the potential scale.
    pub fn energy_drift(&self, c: &LandauCoeffs) -> Result<f64> {
        let e = self.local_energy(c)?;
        let sys = self.system(c)?;
        let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let scale = self
            .a1
            .iter()
            .zip(&self.a2)
            .map(|(a, b)| sys.energy(&AmplitudeState::new(*a, *b, *b)).abs())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        Ok((hi - lo) / scale)
    }

    pub fn endpoint_error(&self) -> f64 {
        let n = self.x.len();
        [
            (self.a1[0] - self.left.0).abs(),
            (self.a2[0] - self.left.1).abs(),
            (self.a1[n - 1] - self.right.0).abs(),
            (self.a2[n - 1] - self.right.1).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn max_slope(&self) -> f64 {
        let h = self.x[1] - self.x[0];
        self.a1
            .windows(2)
            .zip(self.a2.windows(2))
            .map(|(a, b)| ((a[1] - a[0]) / h).abs().max(((b[1] - b[0]) / h).abs()))
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, c: &LandauCoeffs, w: &mut impl Write) -> Result<()> {
        let e = self.local_energy(c)?;
        let sys = self.system(c)?;
        let scale = self
            .a1
            .iter()
            .zip(&self.a2)
            .map(|(a, b)| sys.energy(&AmplitudeState::new(*a, *b, *b)).abs())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        writeln!(w, "x,A1,A2,E_total,rel_drift")?;
        for i in 0..self.x.len() {
            writeln!(
                w,
                "{:.10e},{:.15e},{:.15e},{:.15e},{:.6e}",
                self.x[i],
                self.a1[i],
                self.a2[i],
                e[i],
                (e[i] - mean).abs() / scale
            )?;
        }
        Ok(())
    }
}

/// Front end states `(stripe, hexagon)` for a kind and variant.
pub fn front_endpoints(c: &LandauCoeffs, kind: FrontKind, variant: EnergyVariant) -> Result<((f64, f64), (f64, f64))> {
    let sign = if kind == FrontKind::Hot { 1.0 } else { -1.0 };
    let missing = || Error::Domain(format!("front end states do not exist at lambda={}", c.lambda));
    match variant {
        EnergyVariant::Standard => {
            let t = stripe_amplitude(c.c1, c.c3, sign).ok_or_else(missing)?;
            let p = hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, sign).ok_or_else(missing)?;
            Ok(((t, 0.0), (p, p)))
        }
        EnergyVariant::Mixed => {
            if kind != FrontKind::Hot {
                return Err(Error::InvalidParameter("the blended system is defined for hot fronts only".into()));
            }
            let m = LandauSystem::mixed(c)?;
            let Quartic::Blend { s, h, .. } = m.quartic else { unreachable!() };
            Ok(((s, 0.0), (h, h)))
        }
    }
}

fn front_system(p: &ModelParams, variant: EnergyVariant) -> Result<(LandauSystem, LandauCoeffs)> {
    let c = landau_coefficients(p)?;
    let sys = match variant {
        EnergyVariant::Standard => LandauSystem::standard(&c),
        EnergyVariant::Mixed => LandauSystem::mixed(&c)?,
    };
    Ok((sys, c))
}

fn front_residual(sys: &LandauSystem, c0: f64, h: f64, z: &[f64]) -> Vec<f64> {
    let n = z.len() / 2;
    let diff = [c0, 0.25 * c0];
    let mut r = vec![0.0; 2 * n];
    for i in 0..n {
        let (f, _) = sys.reduced(z[2 * i], z[2 * i + 1]);
        for comp in 0..2 {
            let at = |k: usize| z[2 * k + comp];
            let lap = if i == 0 {
                2.0 * (at(1) - at(0))
            } else if i + 1 == n {
                2.0 * (at(n - 2) - at(n - 1))
            } else {
                at(i - 1) - 2.0 * at(i) + at(i + 1)
            } / (h * h);
            r[2 * i + comp] = diff[comp] * lap + f[comp];
        }
    }
    r
}

fn front_jacobian(sys: &LandauSystem, c0: f64, h: f64, z: &[f64]) -> TripletMatrix {
    let n = z.len() / 2;
    let diff = [c0, 0.25 * c0];
    let mut jm = TripletMatrix::new(2 * n);
    for i in 0..n {
        let (_, j) = sys.reduced(z[2 * i], z[2 * i + 1]);
        for a in 0..2 {
            let row = 2 * i + a;
            for b in 0..2 {
                jm.push(row, 2 * i + b, j[(a, b)]);
            }
            let dc = diff[a] / (h * h);
            jm.push(row, row, -2.0 * dc);
            if i == 0 {
                jm.push(row, 2 + a, 2.0 * dc);
            } else if i + 1 == n {
                jm.push(row, 2 * (n - 2) + a, 2.0 * dc);
            } else {
                jm.push(row, 2 * (i - 1) + a, dc);
                jm.push(row, 2 * (i + 1) + a, dc);
            }
        }
    }
    jm
}

/// Stationary front of `c₀A₁'' + f₁ = 0`, `(c₀/4)A₂'' + f₂ = 0` on `[−L, L]`
/// with Neumann ends, by damped Newton from a tanh blend of the end states.
///
/// On a bounded interval a stationary front only exists for λ within an
/// exponentially small distance of the Maxwell point, so λ is corrected
/// together with the profile while `A₁(0)` is pinned to the mean of the end
/// states. The returned profile records the corrected λ.
pub fn gl_front_solve(
    p: &ModelParams,
    kind: FrontKind,
    half_length: f64,
    n: usize,
    variant: EnergyVariant,
) -> Result<(GLFrontProfile, LandauCoeffs)> {
    if n < 5 || n % 2 == 0 || !(half_length > 0.0) {
        return Err(Error::InvalidParameter("front grid needs odd n ≥ 5 and L > 0".into()));
    }
    let (_, c_init) = front_system(p, variant)?;
    let (left, right) = front_endpoints(&c_init, kind, variant)?;
    let width = match kind {
        FrontKind::Hot => 5.0,
        FrontKind::Cold => 15.0,
    };
    let h = 2.0 * half_length / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| -half_length + i as f64 * h).collect();
    let mut z = vec![0.0; 2 * n];
    for (i, xi) in x.iter().enumerate() {
        let t = (xi / width).tanh();
        z[2 * i] = 0.5 * (left.0 + right.0) + 0.5 * (right.0 - left.0) * t;
        z[2 * i + 1] = 0.5 * (left.1 + right.1) + 0.5 * (right.1 - left.1) * t;
    }
    let mid = n / 2;
    let pin = 0.5 * (left.0 + right.0);
    let c0 = c_init.c0;
    let mut lambda = p.lambda;
    let eval = |z: &[f64], lambda: f64| -> Result<(Vec<f64>, f64)> {
        let (sys, _) = front_system(&p.with_lambda(lambda), variant)?;
        let r = front_residual(&sys, c0, h, z);
        let g = z[2 * mid] - pin;
        let res = norm_inf(&r).max(g.abs());
        Ok((r, res))
    };
    let (mut r, mut res) = eval(&z, lambda)?;
    let mut iters = 0;
    while res > 1e-12 && iters < 100 {
        iters += 1;
        let (sys, _) = front_system(&p.with_lambda(lambda), variant)?;
        let jm = front_jacobian(&sys, c0, h, &z);
        let dl = 1e-7;
        let (sys_p, _) = front_system(&p.with_lambda(lambda + dl), variant)?;
        let rp = front_residual(&sys_p, c0, h, &z);
        let col: Vec<f64> = rp.iter().zip(&r).map(|(a, b)| (a - b) / dl).collect();
        let mut row = vec![0.0; 2 * n];
        row[2 * mid] = 1.0;
        let lu = jm.factor()?;
        let (dz, dlam) = crate::linalg::bordered_solve(&jm, &lu, &col, &row, 0.0, &r, z[2 * mid] - pin)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a - step * b).collect();
            let tl = lambda - step * dlam;
            match eval(&trial, tl) {
                Ok((rt, rn)) if rn < res || step < 1e-4 => {
                    z = trial;
                    lambda = tl;
                    r = rt;
                    res = rn;
                    break;
                }
                _ if step < 1e-4 => {
                    return Err(Error::NoConvergence("front Newton left the existence range".into()))
                }
                _ => step *= 0.5,
            }
        }
    }
    if !(res <= 1e-10) {
        return Err(Error::NoConvergence(format!("front Newton stalled at residual {res:.3e}")));
    }
    let (_, c) = front_system(&p.with_lambda(lambda), variant)?;
    let (left, right) = front_endpoints(&c, kind, variant)?;
    let profile = GLFrontProfile {
        lambda,
        kind,
        variant,
        a1: z.iter().step_by(2).copied().collect(),
        a2: z.iter().skip(1).step_by(2).copied().collect(),
        x,
        left,
        right,
        residual: res,
        newton_iterations: iters,
        c0,
    };
    let span = (left.0 - right.0).abs().max((left.1 - right.1).abs());
    let a_min = profile.a1.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_max = profile.a1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if a_max - a_min < 0.1 * span {
        return Err(Error::NoConvergence(format!(
            "no front at lambda={}: profile collapsed to a constant state",
            p.lambda
        )));
    }
    Ok((profile, c))
}

/// `w* + 2ΣA_i cos θ_i Φ + ΣA_i² φ₀ + 2ΣA_i² cos 2θ_i φ₁ + 2Σ_{i<j} A_iA_j cos(θ_i − θ_j) φ₂`
/// with `θ₁ = k_c x`, `θ₂,₃ = k_c(−x ± √3 y)/2`; the first-order ansatz keeps only the `Φ` term.
pub fn ansatz_reconstruct(
    p: &ModelParams,
    state: &AmplitudeState,
    spec: DomainSpec,
    order: AnsatzOrder,
) -> Result<Field> {
    let modes = critical_modes(p)?;
    let cor = match order {
        AnsatzOrder::Full => Some(correctors(p, &modes)?),
        AnsatzOrder::First => None,
    };
    let ws = homogeneous_state(p);
    let kc = critical_wavenumber();
    let s3 = 3f64.sqrt();
    let a = state.as_vector();
    Ok(Field::from_fn(spec, |x, y| {
        let th = [kc * x, 0.5 * kc * (-x + s3 * y), 0.5 * kc * (-x - s3 * y)];
        let mut w = modes.phi * (2.0 * (0..3).map(|i| a[i] * th[i].cos()).sum::<f64>());
        if let Some(cr) = &cor {
            w += cr.phi0 * (0..3).map(|i| a[i] * a[i]).sum::<f64>();
            w += cr.phi1 * (2.0 * (0..3).map(|i| a[i] * a[i] * (2.0 * th[i]).cos()).sum::<f64>());
            let mut s = 0.0;
            for i in 0..3 {
                for j in i + 1..3 {
                    s += a[i] * a[j] * (th[i] - th[j]).cos();
                }
            }
            w += cr.phi2 * (2.0 * s);
        }
        (ws.u + w[0], ws.v + w[1])
    }))
}

/// Coefficients on a parameter grid (λ or σ varying).
pub fn coefficient_sweep(params: impl IntoIterator<Item = ModelParams>) -> Vec<Result<LandauCoeffs>> {
    params.into_iter().map(|p| landau_coefficients(&p)).collect()
}

pub fn write_coefficients_csv(rows: &[LandauCoeffs], w: &mut impl Write) -> Result<()> {
    writeln!(w, "lambda,sigma,c0,c1,c2,c3,c4,c31,c41")?;
    for c in rows {
        writeln!(
            w,
            "{:.10},{:.10},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            c.lambda, c.sigma, c.c0, c.c1, c.c2, c.c3, c.c4, c.c31, c.c41
        )?;
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_else(|| "nan".into())
}

/// Columns `lambda, E(T+), E(T-), E(P+), E(P-)` (standard energy).
pub fn write_energy_csv(rows: &[LandauCoeffs], w: &mut impl Write) -> Result<()> {
    writeln!(w, "lambda,E_Tplus,E_Tminus,E_Pplus,E_Pminus")?;
    for c in rows {
        let sys = LandauSystem::standard(c);
        let t = |s| stripe_amplitude(c.c1, c.c3, s).map(|a| sys.energy(&AmplitudeState::stripe(a)));
        let h = |s| hexagon_amplitude(c.c1, c.c2, c.c3, c.c4, s).map(|a| sys.energy(&AmplitudeState::hexagon(a)));
        writeln!(w, "{:.10},{},{},{},{}", c.lambda, opt(t(1.0)), opt(t(-1.0)), opt(h(1.0)), opt(h(-1.0)))?;
    }
    Ok(())
}

/// Columns `lambda, A, B, type, n_unstable`.
pub fn write_fixed_points_csv(rows: &[LandauCoeffs], w: &mut impl Write) -> Result<()> {
    writeln!(w, "lambda,A,B,type,n_unstable")?;
    for c in rows {
        for (st, kind) in landau_fixed_points(c) {
            writeln!(
                w,
                "{:.10},{:.12e},{:.12e},{},{}",
                c.lambda,
                st.a1,
                st.a2,
                kind.label(),
                landau_stability(c, &st)
            )?;
        }
    }
    Ok(())
}

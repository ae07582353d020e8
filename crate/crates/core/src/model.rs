//! Selkov–Schnakenberg kinetics with the optional `σ (u − 1/v)²` modification.
//!
//! The reaction term is
//!
//! ```text
//! N(u, v; λ) = (−u + u²v, λ − u²v) + σ (u − 1/v)² (1, −1)
//! ```
//!
//! with diffusion matrix `diag(1, d)`. The homogeneous state `w* = (λ, 1/λ)`
//! and the linearization around it do not depend on `σ`; only the quadratic
//! and cubic parts of the expansion do.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default diffusion ratio `d`.
pub const DEFAULT_D: f64 = 60.0;

/// Critical wavenumber `k_c = sqrt(sqrt(2) − 1)`; independent of `d`.
pub fn critical_wavenumber() -> f64 {
    (2f64.sqrt() - 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub d: f64,
    pub sigma: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda: critical_values(DEFAULT_D).0,
            d: DEFAULT_D,
            sigma: 0.0,
        }
    }
}

impl ModelParams {
    pub fn new(lambda: f64, d: f64, sigma: f64) -> Result<Self> {
        let p = Self { lambda, d, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "d must be positive, got {}",
                self.d
            )));
        }
        if !self.sigma.is_finite() {
            return Err(Error::InvalidParameter("sigma must be finite".into()));
        }
        Ok(())
    }
}

/// Concentrations at a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    pub u: f64,
    pub v: f64,
}

impl PointState {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionResult {
    pub k: f64,
    /// Real part of the larger eigenvalue.
    pub mu_plus: f64,
    pub mu_minus: f64,
    /// True when the pair is complex conjugate; then `mu_plus == mu_minus`
    /// holds the common real part.
    pub is_complex: bool,
}

pub fn homogeneous_state(p: &ModelParams) -> PointState {
    PointState::new(p.lambda, 1.0 / p.lambda)
}

/// `N(U, λ) + σ (u − 1/v)² (1, −1)`.
pub fn reaction(p: &ModelParams, s: PointState) -> Result<(f64, f64)> {
    let u2v = s.u * s.u * s.v;
    let mut f = -s.u + u2v;
    let mut g = p.lambda - u2v;
    if p.sigma != 0.0 {
        if s.v == 0.0 {
            return Err(Error::Domain("v = 0 in the sigma term".into()));
        }
        let m = s.u - 1.0 / s.v;
        f += p.sigma * m * m;
        g -= p.sigma * m * m;
    }
    Ok((f, g))
}

/// Exact Jacobian of [`reaction`] with respect to `(u, v)`.
pub fn reaction_jacobian(p: &ModelParams, s: PointState) -> Result<Matrix2<f64>> {
    let (u, v) = (s.u, s.v);
    let mut j = Matrix2::new(-1.0 + 2.0 * u * v, u * u, -2.0 * u * v, -u * u);
    if p.sigma != 0.0 {
        if v == 0.0 {
            return Err(Error::Domain("v = 0 in the sigma term".into()));
        }
        let m = u - 1.0 / v;
        let du = 2.0 * p.sigma * m;
        let dv = 2.0 * p.sigma * m / (v * v);
        j[(0, 0)] += du;
        j[(0, 1)] += dv;
        j[(1, 0)] -= du;
        j[(1, 1)] -= dv;
    }
    Ok(j)
}

/// Jacobian at `w*`; the σ-term and its gradient vanish there.
pub fn jacobian_at_equilibrium(p: &ModelParams) -> Matrix2<f64> {
    let l2 = p.lambda * p.lambda;
    Matrix2::new(1.0, l2, -2.0, -l2)
}

/// Symmetric bilinear part `B(a, b) = ½ D²G(0)[a, b]` of the expansion of
/// `G(w) = N(w* + w) − J w` about the homogeneous state.
pub fn bilinear_b(p: &ModelParams, a: Vector2<f64>, b: Vector2<f64>) -> Vector2<f64> {
    let l = p.lambda;
    // u²v contributes w1²/λ + 2λ w1 w2; the σ-term (w1 + λ² w2)².
    let mut q = a[0] * b[0] / l + l * (a[0] * b[1] + a[1] * b[0]);
    if p.sigma != 0.0 {
        q += p.sigma * (a[0] + l * l * a[1]) * (b[0] + l * l * b[1]);
    }
    Vector2::new(q, -q)
}

/// Symmetric trilinear part `C(a, b, c) = (1/6) D³G(0)[a, b, c]`.
pub fn trilinear_c(
    p: &ModelParams,
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
) -> Vector2<f64> {
    let l = p.lambda;
    // u²v contributes w1² w2.
    let mut q = (a[0] * b[0] * c[1] + a[0] * c[0] * b[1] + b[0] * c[0] * a[1]) / 3.0;
    if p.sigma != 0.0 {
        // −2λ³ w2² (w1 + λ² w2)
        let w1w2w2 = (a[0] * b[1] * c[1] + b[0] * a[1] * c[1] + c[0] * a[1] * b[1]) / 3.0;
        let w2w2w2 = a[1] * b[1] * c[1];
        q -= 2.0 * p.sigma * l.powi(3) * (w1w2w2 + l * l * w2w2w2);
    }
    Vector2::new(q, -q)
}

/// `G(w) = N(w* + w) − J w`, the full nonlinear remainder.
pub fn nonlinear_remainder(p: &ModelParams, w: Vector2<f64>) -> Result<Vector2<f64>> {
    let s = homogeneous_state(p);
    let (f, g) = reaction(p, PointState::new(s.u + w[0], s.v + w[1]))?;
    Ok(Vector2::new(f, g) - jacobian_at_equilibrium(p) * w)
}

/// `L̂(k, λ) = J(λ) − diag(1, d) k²`.
pub fn dispersion_matrix(p: &ModelParams, k: f64) -> Matrix2<f64> {
    let k2 = k * k;
    let mut m = jacobian_at_equilibrium(p);
    m[(0, 0)] -= k2;
    m[(1, 1)] -= p.d * k2;
    m
}

pub fn dispersion(p: &ModelParams, k: f64) -> DispersionResult {
    let m = dispersion_matrix(p, k);
    let half_tr = 0.5 * m.trace();
    let disc = half_tr * half_tr - m.determinant();
    if disc >= 0.0 {
        // the root of larger modulus directly, the other from the product
        let r = disc.sqrt();
        let det = m.determinant();
        let (mu_plus, mu_minus) = if half_tr < 0.0 {
            let lo = half_tr - r;
            (det / lo, lo)
        } else if half_tr > 0.0 {
            let hi = half_tr + r;
            (hi, det / hi)
        } else {
            (r, -r)
        };
        DispersionResult {
            k,
            mu_plus,
            mu_minus,
            is_complex: false,
        }
    } else {
        DispersionResult {
            k,
            mu_plus: half_tr,
            mu_minus: half_tr,
            is_complex: true,
        }
    }
}

/// Real part of the larger eigenvalue of `L̂(k, λ)`.
pub fn mu_plus(p: &ModelParams, k: f64) -> f64 {
    dispersion(p, k).mu_plus
}

/// Closed-form Turing threshold `(λ_c, k_c)` for diffusion ratio `d`.
pub fn critical_values(d: f64) -> (f64, f64) {
    let lambda_c = d.sqrt() * (3.0 - 8f64.sqrt()).sqrt();
    (lambda_c, critical_wavenumber())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(lambda: f64, sigma: f64) -> ModelParams {
        ModelParams::new(lambda, DEFAULT_D, sigma).unwrap()
    }

    #[test]
    fn homogeneous_state_examples() {
        let s = homogeneous_state(&params(3.2085, 0.0));
        assert_eq!(s.u, 3.2085);
        assert_relative_eq!(s.v, 0.311_672_12, epsilon = 1e-8);
        let s = homogeneous_state(&params(1.0, 0.0));
        assert_eq!((s.u, s.v), (1.0, 1.0));
        let s = homogeneous_state(&params(2.5, -0.6));
        assert_eq!((s.u, s.v), (2.5, 0.4));
    }

    #[test]
    fn reaction_examples() {
        let p = params(3.0, 0.0);
        let (f, g) = reaction(&p, PointState::new(3.0, 1.0 / 3.0)).unwrap();
        assert!(f.abs() < 1e-15 && g.abs() < 1e-15);
        let p = params(3.0, -0.3);
        let (f, g) = reaction(&p, PointState::new(3.0, 1.0 / 3.0)).unwrap();
        assert!(f.abs() < 1e-15 && g.abs() < 1e-15);
        let p = params(2.0, 0.0);
        assert_eq!(reaction(&p, PointState::new(1.0, 1.0)).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn sigma_term_needs_nonzero_v() {
        let p = params(2.0, -0.3);
        assert!(matches!(
            reaction(&p, PointState::new(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(reaction_jacobian(&p, PointState::new(1.0, 0.0)).is_err());
        // without the σ-term v = 0 is fine
        assert!(reaction(&params(2.0, 0.0), PointState::new(1.0, 0.0)).is_ok());
    }

    #[test]
    fn jacobian_at_equilibrium_example() {
        let p = params(3.0, 0.0);
        let j = reaction_jacobian(&p, homogeneous_state(&p)).unwrap();
        assert_relative_eq!(j, Matrix2::new(1.0, 9.0, -2.0, -9.0), epsilon = 1e-14);
        let js = reaction_jacobian(&params(3.0, -0.5), homogeneous_state(&p)).unwrap();
        assert_eq!(j, js);
        assert_eq!(j, jacobian_at_equilibrium(&p));
    }

    #[test]
    fn bilinear_example() {
        let p = params(2.7, 0.0);
        let e1 = Vector2::new(1.0, 0.0);
        let b = bilinear_b(&p, e1, e1);
        assert_relative_eq!(b, Vector2::new(1.0 / 2.7, -1.0 / 2.7), epsilon = 1e-15);
        assert_eq!(trilinear_c(&p, e1, e1, e1), Vector2::zeros());
    }

    #[test]
    fn homogeneous_state_is_an_equilibrium_for_all_parameters() {
        for &l in &[0.3, 1.0, 2.5, 3.2085, 7.0] {
            for &s in &[-0.9, -0.369, 0.0, 0.2] {
                let p = params(l, s);
                // 1/(1/λ) need not round back to λ, so allow a few ulps
                let (f, g) = reaction(&p, homogeneous_state(&p)).unwrap();
                assert!(f.abs() <= 4.0 * f64::EPSILON * l && g.abs() <= 4.0 * f64::EPSILON * l);
                let js = reaction_jacobian(&p, homogeneous_state(&p)).unwrap();
                let j0 = reaction_jacobian(&params(l, 0.0), homogeneous_state(&p)).unwrap();
                assert!((js - j0).abs().max() <= 16.0 * f64::EPSILON * l * l);
            }
        }
    }

    #[test]
    fn dispersion_matrix_structure() {
        let p = params(3.0, 0.0);
        assert_eq!(dispersion_matrix(&p, 0.0), jacobian_at_equilibrium(&p));
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let k = i as f64 * 0.05;
            let tr = dispersion_matrix(&p, k).trace();
            assert_relative_eq!(tr, jacobian_at_equilibrium(&p).trace() - (1.0 + p.d) * k * k, epsilon = 1e-12);
            assert!(tr < prev);
            prev = tr;
        }
    }

    #[test]
    fn critical_values_closed_form() {
        let (lc, kc) = critical_values(60.0);
        assert_relative_eq!(lc, 3.2085, epsilon = 1e-4);
        assert_relative_eq!(kc, 0.6436, epsilon = 1e-4);
        let (lc1, kc1) = critical_values(1.0);
        assert_relative_eq!(lc1, 0.414_213_562_373_095, epsilon = 1e-12);
        assert_eq!(kc1, kc);
    }

    #[test]
    fn mu_plus_at_threshold() {
        for &d in &[20.0, 60.0, 100.0] {
            let (lc, kc) = critical_values(d);
            let p = ModelParams::new(lc, d, 0.0).unwrap();
            assert!(mu_plus(&p, kc).abs() < 1e-9, "d={d}");
        }
        let (lc, kc) = critical_values(60.0);
        let p = params(lc, 0.0);
        assert!(mu_plus(&p, 0.0) < 0.0);
        assert!(mu_plus(&params(3.0, 0.0), kc) > 0.0);
        for i in 1..=3000 {
            let k = i as f64 * 1e-3;
            if (k - kc).abs() > 1e-3 {
                assert!(mu_plus(&p, k) < 0.0, "k={k}");
            }
        }
    }

    #[test]
    fn dispersion_ordering() {
        let p = params(2.9, 0.0);
        for i in 0..100 {
            let r = dispersion(&p, i as f64 * 0.03);
            assert!(r.mu_plus >= r.mu_minus);
        }
    }

    fn fd_jacobian(p: &ModelParams, s: PointState) -> Matrix2<f64> {
        let mut j = Matrix2::zeros();
        for c in 0..2 {
            let h = 1e-6 * (1.0 + if c == 0 { s.u.abs() } else { s.v.abs() });
            let (mut sp, mut sm) = (s, s);
            if c == 0 {
                sp.u += h;
                sm.u -= h;
            } else {
                sp.v += h;
                sm.v -= h;
            }
            let (fp, gp) = reaction(p, sp).unwrap();
            let (fm, gm) = reaction(p, sm).unwrap();
            j[(0, c)] = (fp - fm) / (2.0 * h);
            j[(1, c)] = (gp - gm) / (2.0 * h);
        }
        j
    }

    proptest! {
        #[test]
        fn jacobian_matches_central_differences(
            l in 0.5f64..4.0, sigma in -0.9f64..0.3, u in 0.2f64..5.0, v in 0.1f64..2.0,
        ) {
            let p = params(l, sigma);
            let s = PointState::new(u, v);
            let exact = reaction_jacobian(&p, s).unwrap();
            let fd = fd_jacobian(&p, s);
            let scale = exact.abs().max().max(1.0);
            prop_assert!((exact - fd).abs().max() / scale < 1e-6);
        }

        #[test]
        fn b_and_c_are_symmetric(
            l in 0.5f64..4.0, sigma in -0.9f64..0.3,
            a in proptest::array::uniform2(-1.0f64..1.0),
            b in proptest::array::uniform2(-1.0f64..1.0),
            c in proptest::array::uniform2(-1.0f64..1.0),
        ) {
            let p = params(l, sigma);
            let (a, b, c) = (Vector2::from(a), Vector2::from(b), Vector2::from(c));
            let bab = bilinear_b(&p, a, b);
            prop_assert!((bab - bilinear_b(&p, b, a)).norm() <= 1e-13 * (1.0 + bab.norm()));
            let r = trilinear_c(&p, a, b, c);
            for q in [
                trilinear_c(&p, a, c, b), trilinear_c(&p, b, a, c), trilinear_c(&p, b, c, a),
                trilinear_c(&p, c, a, b), trilinear_c(&p, c, b, a),
            ] {
                prop_assert!((r - q).norm() <= 1e-13 * (1.0 + r.norm()));
            }
        }
    }

    /// Third-order finite differences of G along w: for G(t w) = t²q2 + t³q3 + O(t⁴)
    /// the combination (G(2h) − 2G(h) + 2G(−h) − G(−2h)) / (12 h³) isolates q3 up to O(h²),
    /// and one Richardson step removes that.
    #[test]
    fn trilinear_matches_third_order_differences() {
        for &(l, sigma) in &[(3.2, 0.0), (2.6, -0.3), (3.0, -0.8), (1.7, 0.2)] {
            let p = params(l, sigma);
            for &w in &[Vector2::new(0.7, -0.2), Vector2::new(-0.3, 0.05), Vector2::new(0.1, 0.4)] {
                let g = |t: f64| nonlinear_remainder(&p, w * t).unwrap();
                let d3h = |h: f64| (g(2.0 * h) - g(h) * 2.0 + g(-h) * 2.0 - g(-2.0 * h)) / (12.0 * h.powi(3));
                let h = 4e-3;
                // Richardson step removes the O(h²) term
                let d3 = (d3h(h / 2.0) * 4.0 - d3h(h)) / 3.0;
                let c = trilinear_c(&p, w, w, w);
                assert!((d3 - c).norm() < 1e-5 * (1.0 + c.norm()), "l={l} s={sigma}: {d3:?} vs {c:?}");
                let d2 = (g(h) + g(-h)) / (2.0 * h * h);
                let b = bilinear_b(&p, w, w);
                assert!((d2 - b).norm() < 1e-3 * (1.0 + b.norm()));
            }
        }
    }

    #[test]
    fn taylor_remainder_is_fourth_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut next = || rng.gen_range(-1.0f64..1.0);
        for _ in 0..20 {
            let p = params(1.0 + 3.0 * next().abs(), 0.5 * next() - 0.4);
            let w = Vector2::new(next(), next()).normalize();
            let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
                .iter()
                .map(|&t| {
                    let g = nonlinear_remainder(&p, w * t).unwrap();
                    let r = g - bilinear_b(&p, w, w) * t * t - trilinear_c(&p, w, w, w) * t.powi(3);
                    r.norm() / t.powi(4)
                })
                .collect();
            // bounded: the t = 1e-3 ratio is dominated by rounding, allow slack
            assert!(ratios[1] < 10.0 * ratios[0] + 1.0, "{ratios:?}");
            assert!(ratios[2] < 10.0 * ratios[0] + 50.0, "{ratios:?}");
        }
    }
}

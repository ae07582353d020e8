//! Sparse LU, bordered solves and shift-invert eigenvalue estimates.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// Square sparse matrix in triplet form (duplicates are summed).
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c, v));
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// `A − s I`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut m = self.clone();
        if s != 0.0 {
            for i in 0..self.n {
                m.push(i, i, -s);
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            d[(r, c)] += v;
        }
        d
    }

    pub fn factor(&self) -> Result<SparseLu> {
        SparseLu::new(self)
    }
}

pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(m: &TripletMatrix) -> Result<Self> {
        let t: Vec<Triplet<usize, usize, f64>> =
            m.entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(m.n, m.n, &t)
            .map_err(|e| Error::InvalidParameter(format!("sparse assembly: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU: {e:?}")))?;
        Ok(Self { n: m.n, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Singular("non-finite solution".into()))
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves the bordered system
///
/// ```text
/// [ A   b ] [x]   [f]
/// [ cᵀ  d ] [y] = [g]
/// ```
///
/// by block elimination using a factorization of `A`, followed by one step
/// of iterative refinement.
pub fn bordered_solve(
    a: &TripletMatrix,
    lu: &SparseLu,
    b: &[f64],
    c: &[f64],
    d: f64,
    f: &[f64],
    g: f64,
) -> Result<(Vec<f64>, f64)> {
    let x2 = lu.solve(b)?;
    let denom = d - dot(c, &x2);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Singular("bordered Schur complement vanishes".into()));
    }
    let solve_once = |f: &[f64], g: f64| -> Result<(Vec<f64>, f64)> {
        let x1 = lu.solve(f)?;
        let y = (g - dot(c, &x1)) / denom;
        let x: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| p - y * q).collect();
        Ok((x, y))
    };
    let (mut x, mut y) = solve_once(f, g)?;
    let ax = a.matvec(&x);
    let rf: Vec<f64> = (0..f.len()).map(|i| f[i] - ax[i] - b[i] * y).collect();
    let rg = g - dot(c, &x) - d * y;
    let (dx, dy) = solve_once(&rf, rg)?;
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    y += dy;
    Ok((x, y))
}

#[derive(Debug, Clone)]
pub struct EigenEstimate {
    /// Eigenvalues nearest the shift, sorted by decreasing real part.
    pub values: Vec<Complex<f64>>,
    /// True when every returned value has positive real part, so the true
    /// unstable count may be larger.
    pub saturated: bool,
}

impl EigenEstimate {
    pub fn n_unstable(&self) -> usize {
        self.values.iter().filter(|z| z.re > 0.0).count()
    }

    /// Real part of the eigenvalue with the smallest `|Re|`.
    pub fn critical_real_part(&self) -> f64 {
        self.values
            .iter()
            .map(|z| z.re)
            .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenSettings {
    pub nev: usize,
    pub shift: f64,
    pub max_krylov: usize,
    pub tol: f64,
    pub dense_below: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { nev: 20, shift: 0.01, max_krylov: 300, tol: 1e-7, dense_below: 400 }
    }
}

fn finish(mut vals: Vec<Complex<f64>>, nev: usize, shift: f64) -> EigenEstimate {
    vals.sort_by(|a, b| {
        let da = (a - shift).norm();
        let db = (b - shift).norm();
        da.partial_cmp(&db).unwrap()
    });
    vals.truncate(nev);
    vals.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    let saturated = !vals.is_empty() && vals.iter().all(|z| z.re > 0.0);
    EigenEstimate { values: vals, saturated }
}

fn eigenvalues_of(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let ev = f
        .eigenvalues()
        .map_err(|e| Error::NoConvergence(format!("dense eigenvalues: {e:?}")))?;
    Ok(ev.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

pub fn dense_eigenvalues(a: &TripletMatrix, nev: usize, shift: f64) -> Result<EigenEstimate> {
    Ok(finish(eigenvalues_of(&a.to_dense())?, nev, shift))
}

/// Eigenvalues of `a` nearest `shift` by Arnoldi on `(A − shift I)⁻¹`.
pub fn eigenvalues_near_shift(a: &TripletMatrix, s: &EigenSettings) -> Result<EigenEstimate> {
    let n = a.n;
    if n < s.dense_below {
        return dense_eigenvalues(a, s.nev, s.shift);
    }
    let lu = a.shifted(s.shift).factor()?;
    arnoldi_shift_invert(n, |x| lu.solve(x), s)
}

fn ritz(h: &DMatrix<f64>, m: usize) -> Result<Vec<Complex<f64>>> {
    eigenvalues_of(&h.view((0, 0), (m, m)).clone_owned())
}

/// Arnoldi on an inverse operator `op ≈ (A − σI)⁻¹`; returns `σ + 1/θ` for
/// the largest Ritz values `θ` once they stop moving between checkpoints.
pub fn arnoldi_shift_invert(
    n: usize,
    op: impl Fn(&[f64]) -> Result<Vec<f64>>,
    s: &EigenSettings,
) -> Result<EigenEstimate> {
    let mmax = s.max_krylov.min(n);
    let nev = s.nev.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(mmax + 1);
    // deterministic, non-symmetric start vector
    let mut v0: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64) * 0.618_033_988_75).fract()).collect();
    let nv = norm2(&v0);
    v0.iter_mut().for_each(|x| *x /= nv);
    basis.push(v0);
    let mut h = DMatrix::<f64>::zeros(mmax + 1, mmax);
    let mut prev: Option<Vec<Complex<f64>>> = None;
    let check_every = (2 * nev).max(10);
    let mut m = 0;
    while m < mmax {
        let mut w = op(&basis[m])?;
        // two passes of classical Gram–Schmidt
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                h[(i, m)] += c;
                for (wk, qk) in w.iter_mut().zip(q) {
                    *wk -= c * qk;
                }
            }
        }
        let beta = norm2(&w);
        h[(m + 1, m)] = beta;
        m += 1;
        let breakdown = beta < 1e-13 * h.view((0, 0), (m, m)).norm();
        if breakdown || m == mmax || (m >= 2 * nev && m % check_every == 0) {
            let mut theta = ritz(&h, m)?;
            theta.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
            theta.truncate(nev);
            let converged = match &prev {
                Some(p) if p.len() == theta.len() => theta
                    .iter()
                    .zip(p)
                    .all(|(a, b)| (a - b).norm() <= s.tol * a.norm().max(1e-300)),
                _ => false,
            };
            if converged || breakdown || m == mmax {
                let vals: Vec<Complex<f64>> = theta
                    .iter()
                    .filter(|t| t.norm() > 0.0)
                    .map(|t| Complex::new(s.shift, 0.0) + Complex::new(1.0, 0.0) / t)
                    .collect();
                if !converged && !breakdown {
                    log::warn!("Arnoldi: Ritz values not settled after {m} vectors");
                }
                return Ok(finish(vals, nev, s.shift));
            }
            prev = Some(theta);
        }
        if breakdown {
            break;
        }
        basis.push(w.into_iter().map(|x| x / beta).collect());
    }
    Err(Error::NoConvergence("Arnoldi iteration".into()))
}

/// Approximate null vector of `a` by inverse iteration with a tiny shift,
/// normalised to unit Euclidean norm.
pub fn near_kernel_vector(a: &TripletMatrix, shift: f64, iters: usize) -> Result<(Vec<f64>, f64)> {
    let lu = a.shifted(shift).factor()?;
    let n = a.n;
    let mut x: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.754_877_666).fract() - 0.5).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut mu = 0.0;
    for _ in 0..iters {
        let y = lu.solve(&x)?;
        let ny = norm2(&y);
        let z: Vec<f64> = y.iter().map(|v| v / ny).collect();
        let az = a.matvec(&z);
        mu = dot(&z, &az);
        x = z;
    }
    Ok((x, mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, lo: f64, di: f64, up: f64) -> TripletMatrix {
        let mut m = TripletMatrix::new(n);
        for i in 0..n {
            m.push(i, i, di);
            if i > 0 {
                m.push(i, i - 1, lo);
            }
            if i + 1 < n {
                m.push(i, i + 1, up);
            }
        }
        m
    }

    #[test]
    fn lu_sums_duplicates_and_solves() {
        let mut m = tridiag(50, -1.0, 2.0, -1.3);
        m.push(3, 3, 1.0);
        m.push(3, 3, 0.5);
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let b = m.matvec(&x);
        let y = m.factor().unwrap().solve(&b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn bordered_matches_dense() {
        let n = 40;
        let a = tridiag(n, -1.0, 2.5, -0.7);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let c: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let f: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let (d, g) = (0.3, -1.2);
        let lu = a.factor().unwrap();
        let (x, y) = bordered_solve(&a, &lu, &b, &c, d, &f, g).unwrap();
        let mut big = DMatrix::zeros(n + 1, n + 1);
        big.view_mut((0, 0), (n, n)).copy_from(&a.to_dense());
        for i in 0..n {
            big[(i, n)] = b[i];
            big[(n, i)] = c[i];
        }
        big[(n, n)] = d;
        let mut rhs = nalgebra::DVector::from_vec(f.clone());
        rhs = rhs.push(g);
        let sol = big.lu().solve(&rhs).unwrap();
        for i in 0..n {
            assert!((sol[i] - x[i]).abs() < 1e-12);
        }
        assert!((sol[n] - y).abs() < 1e-12);
    }

    #[test]
    fn arnoldi_matches_dense_spectrum() {
        let n = 600;
        let mut a = TripletMatrix::new(n);
        for i in 0..n {
            a.push(i, i, -1.0 + 1.5 * i as f64 / n as f64);
            if i > 0 {
                a.push(i, i - 1, 0.3);
            }
            if i + 1 < n {
                a.push(i, i + 1, 0.3);
            }
        }
        // skew coupling far from the shift gives a complex pair
        a.push(0, 1, 0.5);
        a.push(1, 0, -0.5);
        for i in (5..n).step_by(37) {
            a.push(i, (i * 7 + 3) % n, 0.02);
        }
        // shift halfway between the two dense eigenvalues nearest 0.01
        let near = dense_eigenvalues(&a, 2, 0.01).unwrap().values;
        let shift = 0.5 * (near[0].re + near[1].re);
        let s = EigenSettings { nev: 8, shift, dense_below: 0, ..Default::default() };
        let est = eigenvalues_near_shift(&a, &s).unwrap();
        let dense = dense_eigenvalues(&a, 8, shift).unwrap();
        assert_eq!(est.values.len(), 8);
        for (p, q) in est.values.iter().zip(&dense.values) {
            assert!((p - q).norm() < 1e-8, "{p} vs {q}");
        }
        assert_eq!(est.n_unstable(), dense.n_unstable());
        assert!(est.n_unstable() > 0);
    }

    #[test]
    fn kernel_vector_of_singular_matrix() {
        // 1D Neumann Laplacian has the constant vector in its kernel
        let n = 30;
        let mut a = tridiag(n, 1.0, -2.0, 1.0);
        a.push(0, 0, 1.0);
        a.push(n - 1, n - 1, 1.0);
        let (x, mu) = near_kernel_vector(&a, 1e-6, 3).unwrap();
        assert!(mu.abs() < 1e-10);
        let c = x[0];
        assert!(x.iter().all(|v| (v - c).abs() < 1e-8));
    }
}

//! Uniform node-centred grids on `(−lx, lx) × (−ly, ly)` with homogeneous
//! Neumann boundary conditions.
//!
//! Unknowns of a two-component field are stored interleaved, `(u_k, v_k)` at
//! positions `2k, 2k + 1`, with nodes numbered row-major `k = j·nx + i`.

use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::critical_wavenumber;

/// Half-width of the thin strip used for quasi-one-dimensional runs.
pub const QUASI1D_HALF_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub l1: f64,
    pub l2: f64,
    pub nx: usize,
    pub ny: usize,
    pub quasi1d: bool,
}

impl DomainSpec {
    pub fn lx(&self) -> f64 {
        2.0 * self.l1 * PI / critical_wavenumber()
    }

    pub fn ly(&self) -> f64 {
        if self.quasi1d {
            QUASI1D_HALF_WIDTH
        } else {
            2.0 * self.l2 * PI / (3f64.sqrt() * critical_wavenumber())
        }
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.lx() / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        2.0 * self.ly() / (self.ny - 1) as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.lx() + i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        -self.ly() + j as f64 * self.hy()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Node closest to the origin (exact for odd counts).
    pub fn center_node(&self) -> usize {
        self.node(self.nx / 2, self.ny / 2)
    }

    /// Trapezoid quadrature weights normalised so that interior nodes have weight 1.
    pub fn weights(&self) -> Vec<f64> {
        let wx = |i: usize| if i == 0 || i + 1 == self.nx { 0.5 } else { 1.0 };
        let wy = |j: usize| if j == 0 || j + 1 == self.ny { 0.5 } else { 1.0 };
        let mut w = Vec::with_capacity(self.n_nodes());
        for j in 0..self.ny {
            for i in 0..self.nx {
                w.push(wx(i) * wy(j));
            }
        }
        w
    }

    /// Mirror index under `x → −x`.
    pub fn mirror_x(&self, k: usize) -> usize {
        let (i, j) = (k % self.nx, k / self.nx);
        self.node(self.nx - 1 - i, j)
    }

    /// Mirror index under `y → −y`.
    pub fn mirror_y(&self, k: usize) -> usize {
        let (i, j) = (k % self.nx, k / self.nx);
        self.node(i, self.ny - 1 - j)
    }
}

pub fn build_domain(l1: f64, l2: f64, nx: usize, ny: usize, quasi1d: bool) -> Result<DomainSpec> {
    if !(l1 > 0.0 && l1.is_finite()) || (!quasi1d && !(l2 > 0.0 && l2.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "domain sizes must be positive, got l1={l1}, l2={l2}"
        )));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 points per direction, got {nx}×{ny}"
        )));
    }
    if quasi1d && ny != 2 {
        return Err(Error::InvalidParameter(
            "quasi-1D strips use ny = 2".into(),
        ));
    }
    Ok(DomainSpec { l1, l2, nx, ny, quasi1d })
}

/// `l1` giving half-length `lx`.
pub fn l1_for_half_length(lx: f64) -> f64 {
    lx * critical_wavenumber() / (2.0 * PI)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub spec: DomainSpec,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

impl Field {
    pub fn constant(spec: DomainSpec, u: f64, v: f64) -> Self {
        let n = spec.n_nodes();
        Self { spec, u: vec![u; n], v: vec![v; n] }
    }

    pub fn from_fn(spec: DomainSpec, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let n = spec.n_nodes();
        let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (a, b) = f(spec.x(i), spec.y(j));
                u.push(a);
                v.push(b);
            }
        }
        Self { spec, u, v }
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * self.u.len());
        for (a, b) in self.u.iter().zip(&self.v) {
            z.push(*a);
            z.push(*b);
        }
        z
    }

    pub fn from_interleaved(spec: DomainSpec, z: &[f64]) -> Result<Self> {
        let n = spec.n_nodes();
        if z.len() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, got: z.len() });
        }
        Ok(Self {
            spec,
            u: z.iter().step_by(2).copied().collect(),
            v: z.iter().skip(1).step_by(2).copied().collect(),
        })
    }

    pub fn component(&self, c: Component) -> &[f64] {
        match c {
            Component::U => &self.u,
            Component::V => &self.v,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn u_center(&self) -> f64 {
        self.u[self.spec.center_node()]
    }
}

/// Compressed-row 5-point Neumann Laplacian with mirrored ghost nodes.
///
/// The operator is self-adjoint with respect to the trapezoid-weighted
/// inner product `Σ w_k f_k g_k` (see [`DomainSpec::weights`]).
#[derive(Debug, Clone)]
pub struct NeumannLaplacian {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl NeumannLaplacian {
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|e| self.val[e] * f[self.col[e]])
                    .sum()
            })
            .collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |e| (r, self.col[e], self.val[e]))
        })
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.val[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum()
    }
}

pub fn build_laplacian(spec: &DomainSpec) -> NeumannLaplacian {
    let (nx, ny) = (spec.nx, spec.ny);
    let (cx, cy) = (1.0 / spec.hx().powi(2), 1.0 / spec.hy().powi(2));
    let n = spec.n_nodes();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::with_capacity(5 * n);
    let mut val = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    // Off-diagonal weights per direction; a missing neighbour doubles the other one.
    let neighbours = |idx: usize, len: usize| -> [(isize, f64); 2] {
        if idx == 0 {
            [(1, 2.0), (0, 0.0)]
        } else if idx + 1 == len {
            [(-1, 2.0), (0, 0.0)]
        } else {
            [(-1, 1.0), (1, 1.0)]
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
            entries.push((spec.node(i, j), -2.0 * cx - 2.0 * cy));
            for (d, w) in neighbours(i, nx) {
                if w != 0.0 {
                    entries.push((spec.node((i as isize + d) as usize, j), w * cx));
                }
            }
            for (d, w) in neighbours(j, ny) {
                if w != 0.0 {
                    entries.push((spec.node(i, (j as isize + d) as usize), w * cy));
                }
            }
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                col.push(c);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
    }
    NeumannLaplacian { n, row_ptr, col, val }
}

/// Domain-averaged `L^p` norm `(1/|Ω| ∫ |f|^p)^{1/p}` by trapezoid quadrature.
pub fn lp_norm(f: &Field, component: Component, p: f64) -> f64 {
    let w = f.spec.weights();
    let data = f.component(component);
    let total: f64 = w.iter().sum();
    let max = data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return 0.0;
    }
    // scale by the maximum to keep |f|^p representable for large p
    let s: f64 = w.iter().zip(data).map(|(wi, x)| wi * (x.abs() / max).powf(p)).sum();
    max * (s / total).powf(1.0 / p)
}

/// Localised hexagons-over-stripes initial guess:
///
/// ```text
/// g  = A cos(k_c x) + sech(x/L) [2B cos(k_c x/2) cos(√3 k_c y/2) − 0.1 cos(k_c x)]
/// U0 = (λ (1 + g), (1 − g/2)/λ)
/// ```
pub fn make_initial_guess(spec: DomainSpec, lambda: f64, a: f64, b: f64, l: f64) -> Field {
    let kc = critical_wavenumber();
    let s3 = 3f64.sqrt();
    let localized = a != 0.0 || b != 0.0;
    Field::from_fn(spec, |x, y| {
        let g = if localized {
            a * (kc * x).cos()
                + (1.0 / (x / l).cosh())
                    * (2.0 * b * (0.5 * kc * x).cos() * (0.5 * s3 * kc * y).cos()
                        - 0.1 * (kc * x).cos())
        } else {
            0.0
        };
        (lambda * (1.0 + g), (1.0 - 0.5 * g) / lambda)
    })
}

/// `Σ|U_num − U| / Σ|U_num|` over all nodes and both components.
pub fn relative_l1_error(numeric: &Field, ansatz: &Field) -> Result<f64> {
    if numeric.spec != ansatz.spec {
        return Err(Error::InvalidParameter("fields live on different grids".into()));
    }
    let diff: f64 = numeric
        .u
        .iter()
        .zip(&ansatz.u)
        .chain(numeric.v.iter().zip(&ansatz.v))
        .map(|(a, b)| (a - b).abs())
        .sum();
    let norm: f64 = numeric.u.iter().chain(&numeric.v).map(|a| a.abs()).sum();
    Ok(diff / norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub spec: DomainSpec,
    pub lx: f64,
    pub ly: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub label: String,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes `path` (plain text) and `path.json` (metadata).
pub fn write_snapshot(path: &Path, f: &Field, lambda: f64, sigma: f64, label: &str) -> Result<()> {
    let s = &f.spec;
    let mut out = String::with_capacity(24 * 2 * s.n_nodes() + 256);
    out.push_str(&format!(
        "nx {}\nny {}\nlx {:.17e}\nly {:.17e}\nlambda {:.17e}\nsigma {:.17e}\nlabel {}\nl1 {:.17e}\nl2 {:.17e}\nquasi1d {}\n",
        s.nx, s.ny, s.lx(), s.ly(), lambda, sigma, label, s.l1, s.l2, s.quasi1d as u8
    ));
    out.push_str("data\n");
    for x in f.u.iter().chain(&f.v) {
        out.push_str(&format!("{x:.17e}\n"));
    }
    fs::write(path, out)?;
    let meta = SnapshotMeta {
        spec: *s,
        lx: s.lx(),
        ly: s.ly(),
        lambda,
        sigma,
        label: label.to_string(),
    };
    let mut mf = fs::File::create(meta_path(path))?;
    serde_json::to_writer_pretty(&mut mf, &meta)?;
    mf.write_all(b"\n")?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(Field, SnapshotMeta)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut kv = std::collections::HashMap::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "data" {
            break;
        }
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| Error::Parse(format!("bad header line '{line}'")))?;
        kv.insert(k.to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<&String> {
        kv.get(k).ok_or_else(|| Error::Parse(format!("missing header field '{k}'")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?.parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")))
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?.parse::<usize>().map_err(|e| Error::Parse(format!("{k}: {e}")))
    };
    let nx = int("nx")?;
    let ny = int("ny")?;
    let kc = critical_wavenumber();
    let l1 = num("l1").unwrap_or_else(|_| num("lx").unwrap_or(0.0) * kc / (2.0 * PI));
    let quasi1d = get("quasi1d").map(|s| s == "1").unwrap_or(false);
    let l2 = num("l2")
        .unwrap_or_else(|_| num("ly").unwrap_or(0.0) * 3f64.sqrt() * kc / (2.0 * PI));
    let spec = build_domain(l1, l2, nx, ny, quasi1d)?;
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
        .collect::<Result<_>>()?;
    let n = spec.n_nodes();
    if values.len() != 2 * n {
        return Err(Error::DimensionMismatch { expected: 2 * n, got: values.len() });
    }
    let field = Field { spec, u: values[..n].to_vec(), v: values[n..].to_vec() };
    let meta = SnapshotMeta {
        spec,
        lx: spec.lx(),
        ly: spec.ly(),
        lambda: num("lambda")?,
        sigma: num("sigma")?,
        label: get("label").cloned().unwrap_or_default(),
    };
    Ok((field, meta))
}

fn colormap(t: f64) -> [u8; 3] {
    // blue → cyan → yellow → red
    const STOPS: [[f64; 3]; 4] = [
        [0.0, 0.0, 160.0],
        [0.0, 200.0, 255.0],
        [255.0, 230.0, 0.0],
        [200.0, 0.0, 0.0],
    ];
    let t = t.clamp(0.0, 1.0) * 3.0;
    let i = (t.floor() as usize).min(2);
    let s = t - i as f64;
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = (STOPS[i][k] + s * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    }
    c
}

/// Binary PPM heatmap of `u`, one pixel per node, `y` increasing upwards.
pub fn render_ppm(f: &Field) -> Vec<u8> {
    let s = &f.spec;
    let (lo, hi) = f
        .u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut out = format!("P6\n{} {}\n255\n", s.nx, s.ny).into_bytes();
    for j in (0..s.ny).rev() {
        for i in 0..s.nx {
            let x = f.u[s.node(i, j)];
            let t = if hi > lo { (x - lo) / (hi - lo) } else { 0.5 };
            out.extend_from_slice(&colormap(t));
        }
    }
    out
}

pub fn write_ppm(path: &Path, f: &Field) -> Result<()> {
    fs::write(path, render_ppm(f))?;
    Ok(())
}

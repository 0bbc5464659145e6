//! Finite realizations of H₀ = Δ^r on Z^d and H = H₀ + W(Q): the Fourier-diagonal torus and
//! the kernel-compressed box.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::TorusFft;
use crate::kernel::{kernel_table, KernelTable, QuadSpec};
use crate::linalg::{sym_eigen, Eigen};
use crate::symbol::{axis_term, EnergyWindow, Extended, FractionalOrder};

pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyGrid {
    /// θ_k = 2πk/N
    Plain,
    /// θ_k = 2π(k + ½)/N
    HalfInteger,
    /// Plain grid with the polar modes removed (acts as 0 there).
    ZeroModeProjected,
}

/// ⟨x⟩ = (1 + x²)^{1/2}
#[inline]
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Λ(n) = Σ_j ⟨n_j⟩
pub fn lambda_weight(n: &[i64]) -> f64 {
    n.iter().map(|&x| japanese(x as f64)).sum()
}

/// Row-major enumeration of a hypercube of side `side` (last axis fastest).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub side: usize,
    pub d: usize,
    /// Centered coordinate of index 0 along each axis.
    pub offset: i64,
}

impl Geometry {
    pub fn len(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, mut idx: usize) -> Vec<i64> {
        let mut c = vec![0i64; self.d];
        for j in (0..self.d).rev() {
            c[j] = (idx % self.side) as i64 + self.offset;
            idx /= self.side;
        }
        c
    }

    pub fn index(&self, c: &[i64]) -> Option<usize> {
        if c.len() != self.d {
            return None;
        }
        let mut idx = 0usize;
        for &x in c {
            let i = x - self.offset;
            if i < 0 || i as usize >= self.side {
                return None;
            }
            idx = idx * self.side + i as usize;
        }
        Some(idx)
    }

    /// Indicator of max_j |n_j| ≤ radius per site.
    pub fn bulk_mask(&self, radius: f64) -> Vec<bool> {
        (0..self.len()).map(|i| self.coords(i).iter().all(|&x| (x as f64).abs() <= radius)).collect()
    }
}

/// Real potential W on a finite set of sites, with declared (H1) constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub d: usize,
    pub values: BTreeMap<Vec<i64>, f64>,
    pub decl_c: f64,
    pub decl_delta: f64,
}

impl Potential {
    pub fn zero(d: usize) -> Self {
        Potential { d, values: BTreeMap::new(), decl_c: 1.0, decl_delta: 1.0 }
    }

    pub fn delta(site: Vec<i64>, strength: f64) -> Self {
        let d = site.len();
        let mut values = BTreeMap::new();
        if strength != 0.0 {
            values.insert(site, strength);
        }
        Potential { d, values, decl_c: 1.0, decl_delta: 1.0 }
    }

    /// Samples `f` on every site of [−L, L]^d.
    pub fn from_fn(d: usize, l: usize, f: impl Fn(&[i64]) -> f64) -> Self {
        let g = Geometry { side: 2 * l + 1, d, offset: -(l as i64) };
        let mut values = BTreeMap::new();
        for i in 0..g.len() {
            let c = g.coords(i);
            let v = f(&c);
            if v != 0.0 {
                values.insert(c, v);
            }
        }
        Potential { d, values, decl_c: 1.0, decl_delta: 1.0 }
    }

    pub fn with_constants(mut self, c: f64, delta: f64) -> Self {
        self.decl_c = c;
        self.decl_delta = delta;
        self
    }

    pub fn get(&self, n: &[i64]) -> f64 {
        self.values.get(n).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> f64 {
        self.values.values().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialCertificate {
    pub h0: bool,
    pub h1: bool,
    /// Site (and axis) attaining the largest ratio |W(n+e_j) − W(n)| / (Λ(n)^{−δ}⟨n_j⟩^{−1}).
    pub worst_site: Option<Vec<i64>>,
    pub worst_axis: Option<usize>,
    /// Smallest C for which (H1) holds on the window.
    pub min_constant: f64,
    /// Maxima of |W| on the shells max_j |n_j| = k, k = 0..=L.
    pub shell_maxima: Vec<f64>,
}

/// Checks (H1) with the declared (C, δ) at every site/axis of [−L, L]^d and the shell-decay
/// proxy for (H0).
pub fn validate_potential(w: &Potential, l: usize) -> PotentialCertificate {
    let d = w.d;
    let g = Geometry { side: 2 * l + 1, d, offset: -(l as i64) };
    let mut worst = 0.0f64;
    let mut worst_site = None;
    let mut worst_axis = None;
    let mut shells = vec![0.0f64; l + 1];
    for i in 0..g.len() {
        let n = g.coords(i);
        let wn = w.get(&n);
        let shell = n.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
        shells[shell] = shells[shell].max(wn.abs());
        let lam = lambda_weight(&n);
        for j in 0..d {
            if n[j] == l as i64 {
                continue;
            }
            let mut m = n.clone();
            m[j] += 1;
            let lhs = (w.get(&m) - wn).abs();
            if lhs == 0.0 {
                continue;
            }
            let unit = lam.powf(-w.decl_delta) / japanese(n[j] as f64);
            let ratio = lhs / unit;
            if ratio > worst {
                worst = ratio;
                worst_site = Some(n.clone());
                worst_axis = Some(j);
            }
        }
    }
    let half = l.div_ceil(2);
    let outer = &shells[half..];
    let non_increasing = outer.windows(2).all(|p| p[1] <= p[0]);
    let decays = shells[l] <= 0.5 * shells[half] || shells[half] == 0.0;
    PotentialCertificate {
        h0: non_increasing && decays,
        h1: worst <= w.decl_c * (1.0 + 1e-12),
        worst_site,
        worst_axis,
        min_constant: worst,
        shell_maxima: shells,
    }
}

/// Exact Fourier-diagonal model on the torus (Z/NZ)^d.
#[derive(Clone, Debug)]
pub struct TorusModel {
    pub order: FractionalOrder,
    pub n: usize,
    pub grid: FrequencyGrid,
    /// Symbol samples per axis and frequency index.
    axis_symbols: Vec<Vec<Extended>>,
    /// (site index, W) pairs.
    potential: Vec<(usize, f64)>,
}

impl TorusModel {
    pub fn new(order: FractionalOrder, n: usize, grid: FrequencyGrid) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!("torus size N = {n} must be even and >= 4")));
        }
        let shift = if grid == FrequencyGrid::HalfInteger { 0.5 } else { 0.0 };
        let axis_symbols = order
            .components()
            .iter()
            .map(|&r| {
                (0..n)
                    .map(|k| {
                        let mut t = 2.0 * PI * (k as f64 + shift) / n as f64;
                        if t > PI {
                            t -= 2.0 * PI;
                        }
                        axis_term(r, t)
                    })
                    .collect()
            })
            .collect();
        Ok(TorusModel { order, n, grid, axis_symbols, potential: Vec::new() })
    }

    pub fn d(&self) -> usize {
        self.order.dim()
    }

    pub fn geometry(&self) -> Geometry {
        Geometry { side: self.n, d: self.d(), offset: -(self.n as i64 / 2) }
    }

    pub fn sites(&self) -> usize {
        self.geometry().len()
    }

    /// Frequency θ_k of axis index k, in (−π, π].
    pub fn theta(&self, k: usize) -> f64 {
        let shift = if self.grid == FrequencyGrid::HalfInteger { 0.5 } else { 0.0 };
        let t = 2.0 * PI * (k as f64 + shift) / self.n as f64;
        if t > PI {
            t - 2.0 * PI
        } else {
            t
        }
    }

    pub fn has_potential(&self) -> bool {
        !self.potential.is_empty()
    }

    /// Site index for a centered coordinate in [−N/2, N/2)^d (stored modulo N).
    fn site_index(&self, c: &[i64]) -> Option<usize> {
        let half = self.n as i64 / 2;
        if c.iter().any(|&x| x < -half || x >= half) {
            return None;
        }
        let mut idx = 0usize;
        for &x in c {
            idx = idx * self.n + x.rem_euclid(self.n as i64) as usize;
        }
        Some(idx)
    }

    /// Centered coordinate of a storage index.
    pub fn site_coords(&self, mut idx: usize) -> Vec<i64> {
        let mut c = vec![0i64; self.d()];
        let half = self.n as i64 / 2;
        for j in (0..self.d()).rev() {
            let m = (idx % self.n) as i64;
            c[j] = if m >= half { m - self.n as i64 } else { m };
            idx /= self.n;
        }
        c
    }

    pub fn with_potential(&self, w: &Potential) -> Result<TorusModel> {
        if w.d != self.d() && !w.is_zero() {
            return Err(Error::invalid("potential dimension does not match the model"));
        }
        let mut out = self.clone();
        out.potential.clear();
        for (site, &v) in &w.values {
            let idx = self.site_index(site).ok_or_else(|| Error::SupportOverflow(site.clone()))?;
            out.potential.push((idx, v));
        }
        Ok(out)
    }

    /// Free multiplier per mode in storage order; `None` for a projected polar mode.
    pub fn multipliers(&self) -> Result<Vec<Option<f64>>> {
        let g = Geometry { side: self.n, d: self.d(), offset: 0 };
        let mut out = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let k = g.coords(i);
            let mut v = Extended::Finite(0.0);
            for (j, &kj) in k.iter().enumerate() {
                v = match (v, self.axis_symbols[j][kj as usize]) {
                    (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
                    _ => Extended::PosInfinity,
                };
            }
            match v {
                Extended::Finite(x) => out.push(Some(x)),
                Extended::PosInfinity => match self.grid {
                    FrequencyGrid::ZeroModeProjected => out.push(None),
                    _ => return Err(Error::PolarZeroMode),
                },
            }
        }
        Ok(out)
    }

    /// Sorted eigenvalues; exact symbol samples when W = 0, dense eigensolve otherwise.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if self.has_potential() {
            return Ok(sym_eigen(self.dense_matrix(DEFAULT_DENSE_CAP)?, false).values);
        }
        let mut v: Vec<f64> = self.multipliers()?.into_iter().flatten().collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    fn fft(&self) -> TorusFft {
        let half = self.grid == FrequencyGrid::HalfInteger;
        TorusFft::new(self.n, self.d(), half)
    }

    /// Transform plan and multipliers, for repeated application of functions of H₀.
    pub fn spectral(&self) -> Result<TorusSpectral> {
        Ok(TorusSpectral { fft: self.fft(), mult: self.multipliers()? })
    }

    /// g(H₀) f by forward transform, multiplier, inverse transform.
    pub fn apply_fn(&self, f: &[Complex64], g: impl Fn(f64) -> Complex64) -> Result<Vec<Complex64>> {
        self.spectral()?.apply_fn(f, g)
    }

    pub fn apply_free(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_fn(f, |x| Complex64::new(x, 0.0))
    }

    /// H f = H₀ f + W f.
    pub fn apply(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = self.apply_free(f)?;
        for &(i, w) in &self.potential {
            out[i] += w * f[i];
        }
        Ok(out)
    }

    pub fn potential_entries(&self) -> &[(usize, f64)] {
        &self.potential
    }

    /// One-axis position-space kernel c_j(m) = (1/N) Σ_k ϑ_j(θ_k) e^{iθ_k m}, m = 0..N.
    fn axis_kernel(&self, j: usize) -> Result<Vec<f64>> {
        let mut buf: Vec<Complex64> = self.axis_symbols[j]
            .iter()
            .map(|v| match v {
                Extended::Finite(x) => Ok(Complex64::new(*x, 0.0)),
                Extended::PosInfinity => match self.grid {
                    FrequencyGrid::ZeroModeProjected => Ok(Complex64::new(0.0, 0.0)),
                    _ => Err(Error::PolarZeroMode),
                },
            })
            .collect::<Result<_>>()?;
        let fft = TorusFft::new(self.n, 1, self.grid == FrequencyGrid::HalfInteger);
        fft.inverse(&mut buf);
        Ok(buf.iter().map(|c| c.re).collect())
    }

    /// Dense real symmetric matrix of H in position (storage) order.
    pub fn dense_matrix(&self, cap: usize) -> Result<DMatrix<f64>> {
        let size = self.sites();
        if size > cap {
            return Err(Error::SizeCap { size, cap });
        }
        if self.grid == FrequencyGrid::ZeroModeProjected && self.d() > 1 && self.order.has_negative() {
            return Err(Error::invalid("dense projected torus is only supported in d = 1"));
        }
        let n = self.n;
        let d = self.d();
        let mut m = DMatrix::<f64>::zeros(size, size);
        for j in 0..d {
            let c = self.axis_kernel(j)?;
            // symmetrised entry for lag (a − b) mod N
            let entry = |a: usize, b: usize| -> f64 {
                let k = (a + n - b) % n;
                let k2 = (b + n - a) % n;
                let (x, y) = (c[k], c[k2]);
                if self.grid == FrequencyGrid::HalfInteger {
                    // antiperiodic wrap: lag a − b < 0 maps to k − N with a sign flip
                    let s1 = if a >= b { x } else { -x };
                    let s2 = if b >= a { y } else { -y };
                    0.5 * (s1 + s2)
                } else {
                    0.5 * (x + y)
                }
            };
            let stride = n.pow((d - 1 - j) as u32);
            for row in 0..size {
                let a = (row / stride) % n;
                let base = row - a * stride;
                for b in 0..n {
                    m[(row, base + b * stride)] += entry(a, b);
                }
            }
        }
        for &(i, w) in &self.potential {
            m[(i, i)] += w;
        }
        Ok(m)
    }
}

/// Cached diagonalisation of a free torus operator.
pub struct TorusSpectral {
    fft: TorusFft,
    pub mult: Vec<Option<f64>>,
}

impl TorusSpectral {
    pub fn len(&self) -> usize {
        self.mult.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mult.is_empty()
    }

    pub fn apply_fn(&self, f: &[Complex64], g: impl Fn(f64) -> Complex64) -> Result<Vec<Complex64>> {
        let coeffs = self.analyze(f)?;
        Ok(self.synthesize(&coeffs, g))
    }

    /// Mode coefficients f̂ in storage order.
    pub fn analyze(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        if f.len() != self.mult.len() {
            return Err(Error::invalid("vector length does not match the torus"));
        }
        let mut buf = f.to_vec();
        self.fft.forward(&mut buf);
        Ok(buf)
    }

    /// Inverse transform of g(ϑ_k) f̂_k; projected modes map to zero.
    pub fn synthesize(&self, coeffs: &[Complex64], g: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.mult)
            .map(|(c, m)| match m {
                Some(x) => c * g(*x),
                None => Complex64::new(0.0, 0.0),
            })
            .collect();
        self.fft.inverse(&mut buf);
        buf
    }
}

/// Construction used for one axis block of a box model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisConstruction {
    Kernel,
    /// Functional calculus of the Dirichlet box Laplacian, used for r ≤ −1/2.
    DirichletPower,
    Identity,
}

/// Dense compression of Δ^r (+W) to the box {|n_j| ≤ L}.
#[derive(Clone, Debug)]
pub struct BoxModel {
    pub order: FractionalOrder,
    pub l: usize,
    pub matrix: DMatrix<f64>,
    /// Σ_{|k|>2L} |a_{r_j}(k)| per axis; `None` when not defined for the construction.
    pub tail_bound: Vec<Option<f64>>,
    pub construction: Vec<AxisConstruction>,
    potential: BTreeMap<Vec<i64>, f64>,
}

fn dirichlet_power(r: f64, side: usize) -> DMatrix<f64> {
    let m = side + 1;
    let norm = (2.0 / m as f64).sqrt();
    let mut v = DMatrix::<f64>::zeros(side, side);
    let mut mu = Vec::with_capacity(side);
    for k in 1..=side {
        let a = PI * k as f64 / m as f64;
        mu.push((2.0 - 2.0 * a.cos()).powf(r));
        for i in 0..side {
            v[(i, k - 1)] = norm * (a * (i + 1) as f64).sin();
        }
    }
    let mut scaled = v.clone();
    for (k, s) in mu.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*s);
    }
    let b = &scaled * v.transpose();
    // exact symmetry
    (&b + b.transpose()) * 0.5
}

impl BoxModel {
    /// Builds the box from per-axis kernel tables (looked up by order); axes with r ≤ −1/2 use
    /// the Dirichlet power construction and need no table.
    pub fn from_tables(order: FractionalOrder, l: usize, tables: &[KernelTable], cap: usize) -> Result<Self> {
        let d = order.dim();
        let side = 2 * l + 1;
        let size = side.checked_pow(d as u32).unwrap_or(usize::MAX);
        if size > cap {
            return Err(Error::SizeCap { size, cap });
        }
        let mut blocks = Vec::with_capacity(d);
        let mut tails = Vec::with_capacity(d);
        let mut kinds = Vec::with_capacity(d);
        for &r in order.components() {
            if r == 0.0 {
                blocks.push(DMatrix::identity(side, side));
                tails.push(Some(0.0));
                kinds.push(AxisConstruction::Identity);
            } else if r <= -0.5 {
                blocks.push(dirichlet_power(r, side));
                tails.push(None);
                kinds.push(AxisConstruction::DirichletPower);
            } else {
                let t = tables
                    .iter()
                    .find(|t| t.r == r)
                    .ok_or(Error::MissingTableRange { have: 0, need: 2 * l })?;
                if t.k_max < 2 * l {
                    return Err(Error::MissingTableRange { have: t.k_max, need: 2 * l });
                }
                let b = DMatrix::from_fn(side, side, |i, j| t.values[i.abs_diff(j)]);
                let tail = t.tail_bound();
                blocks.push(b);
                tails.push(tail.is_finite().then_some(tail));
                kinds.push(AxisConstruction::Kernel);
            }
        }
        let geo = Geometry { side, d, offset: -(l as i64) };
        let mut matrix = DMatrix::<f64>::zeros(size, size);
        for (j, b) in blocks.iter().enumerate() {
            let stride = side.pow((d - 1 - j) as u32);
            for row in 0..size {
                let a = (row / stride) % side;
                let base = row - a * stride;
                for c in 0..side {
                    matrix[(row, base + c * stride)] += b[(a, c)];
                }
            }
        }
        let _ = geo;
        Ok(BoxModel { order, l, matrix, tail_bound: tails, construction: kinds, potential: BTreeMap::new() })
    }

    /// Builds the needed kernel tables (K = 2L) and assembles the box.
    pub fn build(order: FractionalOrder, l: usize, quad: &QuadSpec) -> Result<Self> {
        let mut tables: Vec<KernelTable> = Vec::new();
        for &r in order.components() {
            if r > -0.5 && r != 0.0 && !tables.iter().any(|t| t.r == r) {
                tables.push(kernel_table(r, 2 * l, quad)?);
            }
        }
        Self::from_tables(order, l, &tables, DEFAULT_DENSE_CAP)
    }

    pub fn d(&self) -> usize {
        self.order.dim()
    }

    pub fn geometry(&self) -> Geometry {
        Geometry { side: 2 * self.l + 1, d: self.d(), offset: -(self.l as i64) }
    }

    pub fn sites(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn potential(&self) -> &BTreeMap<Vec<i64>, f64> {
        &self.potential
    }

    /// H₀ + diag(W); replaces any potential already present.
    pub fn with_potential(&self, w: &Potential) -> Result<BoxModel> {
        if w.d != self.d() && !w.is_zero() {
            return Err(Error::invalid("potential dimension does not match the model"));
        }
        let g = self.geometry();
        let mut out = self.clone();
        for (site, &v) in &self.potential {
            let i = g.index(site).expect("stored site lies in the box");
            out.matrix[(i, i)] -= v;
        }
        out.potential.clear();
        for (site, &v) in &w.values {
            let i = g.index(site).ok_or_else(|| Error::SupportOverflow(site.clone()))?;
            out.matrix[(i, i)] += v;
            out.potential.insert(site.clone(), v);
        }
        Ok(out)
    }

    /// Spectrum interval inflated by the compression tail (∞ when no tail is available).
    pub fn tail_slack(&self) -> f64 {
        self.tail_bound.iter().map(|t| t.unwrap_or(f64::INFINITY)).sum()
    }
}

/// Either finite model.
#[derive(Clone, Debug)]
pub enum LatticeModel {
    Torus(TorusModel),
    Box(BoxModel),
}

impl LatticeModel {
    pub fn sites(&self) -> usize {
        match self {
            LatticeModel::Torus(t) => t.sites(),
            LatticeModel::Box(b) => b.sites(),
        }
    }

    /// Centered coordinates of storage index `i`.
    pub fn coords(&self, i: usize) -> Vec<i64> {
        match self {
            LatticeModel::Torus(t) => t.site_coords(i),
            LatticeModel::Box(b) => b.geometry().coords(i),
        }
    }

    pub fn order(&self) -> &FractionalOrder {
        match self {
            LatticeModel::Torus(t) => &t.order,
            LatticeModel::Box(b) => &b.order,
        }
    }

    pub fn dense_matrix(&self, cap: usize) -> Result<DMatrix<f64>> {
        match self {
            LatticeModel::Torus(t) => t.dense_matrix(cap),
            LatticeModel::Box(b) => {
                if b.sites() > cap {
                    return Err(Error::SizeCap { size: b.sites(), cap });
                }
                Ok(b.matrix.clone())
            }
        }
    }

    pub fn with_potential(&self, w: &Potential) -> Result<LatticeModel> {
        Ok(match self {
            LatticeModel::Torus(t) => LatticeModel::Torus(t.with_potential(w)?),
            LatticeModel::Box(b) => LatticeModel::Box(b.with_potential(w)?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigOptions {
    pub cap: usize,
    pub vectors: bool,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions { cap: DEFAULT_DENSE_CAP, vectors: false }
    }
}

pub fn eig_all(model: &LatticeModel, opts: &EigOptions) -> Result<Eigen> {
    if model.sites() > opts.cap {
        return Err(Error::SizeCap { size: model.sites(), cap: opts.cap });
    }
    if let LatticeModel::Torus(t) = model {
        if !opts.vectors && !t.has_potential() {
            return Ok(Eigen { values: t.eigenvalues()?, vectors: None });
        }
    }
    Ok(sym_eigen(model.dense_matrix(opts.cap)?, opts.vectors))
}

/// Largest residual ‖Hv − λv‖ over the eigenpairs.
pub fn eig_residual(m: &DMatrix<f64>, e: &Eigen) -> Result<f64> {
    let v = e.vectors()?;
    let hv = m * v;
    let mut worst = 0.0f64;
    for (j, &l) in e.values.iter().enumerate() {
        let r = (hv.column(j) - v.column(j) * l).norm();
        worst = worst.max(r);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddedCount {
    pub l: usize,
    pub count: usize,
    pub eigenvalues: Vec<f64>,
}

/// For each L, the eigenvalues of the box H in I whose eigenvectors keep ≥ 1 − 10^{−6} of their
/// mass inside |n_j| ≤ L/2 (states that persist as L grows).
pub fn embedded_eigenvalue_count(
    order: &FractionalOrder,
    w: &Potential,
    ls: &[usize],
    window: &EnergyWindow,
    quad: &QuadSpec,
) -> Result<Vec<EmbeddedCount>> {
    if crate::symbol::threshold_set(order).window_margin(window) <= 0.0 {
        return Err(Error::invalid("window must have positive threshold margin"));
    }
    let mut out = Vec::with_capacity(ls.len());
    for &l in ls {
        let h = BoxModel::build(order.clone(), l, quad)?.with_potential(w)?;
        let mask = h.geometry().bulk_mask(l as f64 / 2.0);
        let e = sym_eigen(h.matrix.clone(), true);
        let v = e.vectors()?;
        let mut found = Vec::new();
        for i in e.indices_in(window.lo, window.hi) {
            let col = v.column(i);
            let bulk: f64 = col.iter().zip(&mask).filter(|(_, &m)| m).map(|(x, _)| x * x).sum();
            if bulk >= 1.0 - 1e-6 {
                found.push(e.values[i]);
            }
        }
        out.push(EmbeddedCount { l, count: found.len(), eigenvalues: found });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ord(r: &[f64]) -> FractionalOrder {
        FractionalOrder::new(r.to_vec()).unwrap()
    }

    #[test]
    fn torus_eigs_r1() {
        let t = TorusModel::new(ord(&[1.0]), 8, FrequencyGrid::Plain).unwrap();
        let mut exact: Vec<f64> = (0..8).map(|k| 2.0 - 2.0 * (2.0 * PI * k as f64 / 8.0).cos()).collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in t.eigenvalues().unwrap().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_order_needs_regularised_grid() {
        let t = TorusModel::new(ord(&[-1.0]), 8, FrequencyGrid::Plain).unwrap();
        assert!(matches!(t.eigenvalues(), Err(Error::PolarZeroMode)));
        let f = vec![Complex64::new(1.0, 0.0); 8];
        assert!(t.apply_free(&f).is_err());
        let t = TorusModel::new(ord(&[-1.0]), 8, FrequencyGrid::HalfInteger).unwrap();
        let e = t.eigenvalues().unwrap();
        // the half grid frequency nearest the pole carries the largest value
        let top = 1.0 / (2.0 - 2.0 * (PI / 8.0).cos());
        assert!((e[7] - top).abs() < 1e-12);
        assert!((e[0] - 1.0 / (2.0 - 2.0 * (7.0 * PI / 8.0).cos())).abs() < 1e-12);
        assert!(e.iter().all(|x| x.is_finite()));
        let p = TorusModel::new(ord(&[-1.0]), 8, FrequencyGrid::ZeroModeProjected).unwrap();
        assert_eq!(p.eigenvalues().unwrap().len(), 7);
    }

    #[test]
    fn torus_2d_sums() {
        let t = TorusModel::new(ord(&[1.0, 1.0]), 4, FrequencyGrid::Plain).unwrap();
        let axis = [0.0, 2.0, 4.0, 2.0];
        let mut exact: Vec<f64> = axis.iter().flat_map(|a| axis.iter().map(move |b| a + b)).collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in t.eigenvalues().unwrap().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn torus_dense_matches_multiplier() {
        for grid in [FrequencyGrid::Plain, FrequencyGrid::HalfInteger] {
            let t = TorusModel::new(ord(&[0.7, 1.3]), 6, grid).unwrap();
            let m = t.dense_matrix(4096).unwrap();
            assert_eq!((&m - m.transpose()).amax(), 0.0);
            let f: Vec<Complex64> = (0..36).map(|i| Complex64::new((i as f64).sin(), 0.0)).collect();
            let a = t.apply_free(&f).unwrap();
            for i in 0..36 {
                let s: f64 = (0..36).map(|j| m[(i, j)] * f[j].re).sum();
                assert!((s - a[i].re).abs() < 1e-12 && a[i].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn box_examples() {
        let b = BoxModel::build(ord(&[1.0]), 2, &QuadSpec::default()).unwrap();
        let h = b.with_potential(&Potential::delta(vec![0], 3.0)).unwrap();
        let diag: Vec<f64> = (0..5).map(|i| h.matrix[(i, i)]).collect();
        assert_eq!(diag, vec![2.0, 2.0, 5.0, 2.0, 2.0]);
        assert_eq!(h.matrix[(0, 1)], -1.0);
        assert_eq!(h.matrix[(0, 2)], 0.0);
        let b = BoxModel::build(ord(&[1.0, 1.0]), 1, &QuadSpec::default()).unwrap();
        assert_eq!(b.sites(), 9);
        let nnz = b.matrix.iter().filter(|&&x| x != 0.0).count();
        assert_eq!(nnz, 9 + 2 * 12);
        assert!(matches!(
            b.with_potential(&Potential::delta(vec![2, 0], 1.0)),
            Err(Error::SupportOverflow(_))
        ));
    }

    #[test]
    fn box_negative_order_uses_dirichlet_power() {
        let b = BoxModel::build(ord(&[-1.0]), 5, &QuadSpec::default()).unwrap();
        assert_eq!(b.construction, vec![AxisConstruction::DirichletPower]);
        let lap = DMatrix::from_fn(11, 11, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        });
        let id = &lap * &b.matrix;
        assert!((id - DMatrix::<f64>::identity(11, 11)).amax() < 1e-12);
    }

    #[test]
    fn certificates() {
        let w = Potential::from_fn(1, 200, |n| 1.0 / (1.0 + (n[0] * n[0]) as f64)).with_constants(8.0, 1.0);
        let c = validate_potential(&w, 200);
        assert!(c.h0 && c.h1);
        let w = Potential::delta(vec![0], 1.0).with_constants(1.0, 1.0);
        let c = validate_potential(&w, 20);
        assert!(c.h0);
        assert!(!c.h1);
        assert!((c.min_constant - 2f64.sqrt().powi(2)).abs() < 1e-12);
        let c = validate_potential(&w.clone().with_constants(2.0, 1.0), 20);
        assert!(c.h1);
        let w = Potential::from_fn(1, 30, |_| 1.0);
        assert!(!validate_potential(&w, 30).h0);
    }

    #[test]
    fn bound_state_count() {
        let b = BoxModel::build(ord(&[1.0]), 40, &QuadSpec::default()).unwrap();
        let h = b.with_potential(&Potential::delta(vec![0], -2.0)).unwrap();
        let e = eig_all(&LatticeModel::Box(h), &EigOptions::default()).unwrap();
        assert_eq!(e.values.iter().filter(|&&x| x < 0.0).count(), 1);
    }
}

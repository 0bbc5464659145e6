//! Convolution kernel a_r(k) of the 1-D fractional Laplacian, its binomial series, and
//! convolution with finitely supported sequences.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quadrature::{graded_breakpoints, GaussRule};
use crate::symbol::base;

/// Quadrature layout for kernel coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSpec {
    /// Gauss–Legendre points per panel.
    pub gl_order: usize,
    /// Gauss–Jacobi points on the singular cell [0, ε].
    pub jacobi_order: usize,
    /// Maximum phase k·h swept by one panel.
    pub panel_phase: f64,
    /// Order reduction used for the error estimate.
    pub estimate_drop: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { gl_order: 24, jacobi_order: 24, panel_phase: 3.0, estimate_drop: 8 }
    }
}

impl QuadSpec {
    fn reduced(&self) -> QuadSpec {
        QuadSpec {
            gl_order: self.gl_order.saturating_sub(self.estimate_drop).max(4),
            jacobi_order: self.jacobi_order.saturating_sub(self.estimate_drop).max(4),
            ..self.clone()
        }
    }

    pub fn digest(&self) -> String {
        format!("gl{}-gj{}-ph{:e}-dr{}", self.gl_order, self.jacobi_order, self.panel_phase, self.estimate_drop)
    }
}

/// Nodes θ_i and weights s_i with a_r(k) ≈ (1/π) Σ s_i cos(kθ_i).
struct Layout {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Layout {
    fn build(r: f64, kmax: usize, spec: &QuadSpec) -> Result<Self> {
        let kk = kmax.max(1) as f64;
        let eps = (1.0 / kk).min(0.5);
        let max_width = (spec.panel_phase / kk).min(0.5);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();

        // singular cell: ∫_0^ε θ^{2r} g(θ) dθ with g = (sin(θ/2)/(θ/2))^{2r}
        let gj = GaussRule::jacobi(spec.jacobi_order, 0.0, 2.0 * r)?;
        let half = 0.5 * eps;
        let scale = half.powf(1.0 + 2.0 * r);
        for (&x, &w) in gj.nodes.iter().zip(&gj.weights) {
            let t = half * (1.0 + x);
            let s = (0.5 * t).sin() / (0.5 * t);
            nodes.push(t);
            weights.push(w * scale * s.powf(2.0 * r));
        }

        let gl = GaussRule::legendre(spec.gl_order);
        let pts = graded_breakpoints(eps, PI, eps, max_width);
        for p in pts.windows(2) {
            for (t, w) in gl.mapped(p[0], p[1]) {
                nodes.push(t);
                weights.push(w * base(t).powf(r));
            }
        }
        Ok(Layout { nodes, weights })
    }

    fn coeff(&self, k: usize) -> f64 {
        let kf = k as f64;
        let s: f64 = self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * (kf * t).cos()).sum();
        s / PI
    }
}

fn integer_order(r: f64) -> Option<i64> {
    if r.fract() == 0.0 && r.abs() < 1e6 {
        Some(r as i64)
    } else {
        None
    }
}

/// a(k) = (−1)^k C(2n, n−|k|) for the integer order n ≥ 0.
fn integer_coeff(n: i64, k: i64) -> f64 {
    let k = k.abs();
    if k > n {
        return 0.0;
    }
    let (top, bot) = (2 * n, n - k);
    let mut c = 1.0f64;
    for i in 0..bot {
        c = c * (top - i) as f64 / (i + 1) as f64;
    }
    if k % 2 == 1 {
        -c.round()
    } else {
        c.round()
    }
}

fn check_order(r: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::invalid("order must be finite"));
    }
    if r <= -0.5 {
        return Err(Error::DistributionalKernel(r));
    }
    Ok(())
}

/// (a_r(k), error estimate).
pub fn kernel_coeff(r: f64, k: i64, quad: &QuadSpec) -> Result<(f64, f64)> {
    check_order(r)?;
    if let Some(n) = integer_order(r) {
        return Ok((integer_coeff(n, k), 0.0));
    }
    let ka = k.unsigned_abs() as usize;
    let hi = Layout::build(r, ka, quad)?;
    let lo = Layout::build(r, ka, &quad.reduced())?;
    let v = hi.coeff(ka);
    Ok((v, (v - lo.coeff(ka)).abs()))
}

/// Truncated kernel {a_r(k) : |k| ≤ K}, stored once per |k|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub r: f64,
    pub k_max: usize,
    /// a_r(k) for k = 0..=K.
    pub values: Vec<f64>,
    pub quad_error: Vec<f64>,
}

impl KernelTable {
    pub fn coeff(&self, k: i64) -> Option<f64> {
        self.values.get(k.unsigned_abs() as usize).copied()
    }

    pub fn error(&self, k: i64) -> Option<f64> {
        self.quad_error.get(k.unsigned_abs() as usize).copied()
    }

    pub fn is_integer_order(&self) -> bool {
        integer_order(self.r).is_some()
    }

    /// Σ_{|k| ≤ K} a_r(k).
    pub fn truncated_sum(&self) -> f64 {
        self.values[0] + 2.0 * self.values[1..].iter().sum::<f64>()
    }

    /// Σ_{|k| ≤ K} a_r(k)².
    pub fn truncated_square_sum(&self) -> f64 {
        self.values[0].powi(2) + 2.0 * self.values[1..].iter().map(|x| x * x).sum::<f64>()
    }

    /// Estimate of Σ_{|k|>K} |a_r(k)|: 0 for integer orders, ∞ when the kernel is not summable.
    pub fn tail_bound(&self) -> f64 {
        self.tail(true)
    }

    /// Estimate of the signed tail Σ_{|k|>K} a_r(k).
    pub fn signed_tail(&self) -> f64 {
        self.tail(false)
    }

    fn tail(&self, absolute: bool) -> f64 {
        if self.is_integer_order() {
            return if (self.r as usize) <= self.k_max { 0.0 } else { f64::INFINITY };
        }
        if self.r <= 0.0 || self.k_max < 8 {
            return f64::INFINITY;
        }
        match decay_fit(self, self.k_max / 2, self.k_max) {
            Ok(fit) => {
                let p = -fit.slope;
                if p <= 1.0 {
                    return f64::INFINITY;
                }
                let c = if absolute { fit.constant.abs() } else { fit.constant };
                2.0 * c * crate::special::hurwitz_zeta(p, self.k_max as f64 + 1.0)
            }
            Err(_) => f64::INFINITY,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k_sites,a_r_dimensionless,quad_error_abs")?;
        for k in 0..=self.k_max {
            writeln!(w, "{},{},{}", k, crate::fmt::f17(self.values[k]), crate::fmt::f17(self.quad_error[k]))?;
        }
        Ok(())
    }
}

pub fn kernel_table(r: f64, k_max: usize, quad: &QuadSpec) -> Result<KernelTable> {
    check_order(r)?;
    if let Some(n) = integer_order(r) {
        let values = (0..=k_max as i64).map(|k| integer_coeff(n, k)).collect();
        return Ok(KernelTable { r, k_max, values, quad_error: vec![0.0; k_max + 1] });
    }
    let hi = Layout::build(r, k_max, quad)?;
    let lo = Layout::build(r, k_max, &quad.reduced())?;
    let pairs: Vec<(f64, f64)> = (0..=k_max)
        .into_par_iter()
        .map(|k| {
            let v = hi.coeff(k);
            (v, (v - lo.coeff(k)).abs())
        })
        .collect();
    Ok(KernelTable {
        r,
        k_max,
        values: pairs.iter().map(|p| p.0).collect(),
        quad_error: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Binary cache of kernel tables keyed by a hash of (r, K, quadrature spec).
pub struct KernelCache {
    dir: PathBuf,
}

const CACHE_MAGIC: &[u8; 4] = b"FLKT";
const CACHE_VERSION: u32 = 1;

impl KernelCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(KernelCache { dir: dir.as_ref().to_path_buf() })
    }

    pub fn key(r: f64, k_max: usize, quad: &QuadSpec) -> String {
        let mut h = Sha256::new();
        h.update(r.to_bits().to_le_bytes());
        h.update((k_max as u64).to_le_bytes());
        h.update(quad.digest().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path(&self, r: f64, k_max: usize, quad: &QuadSpec) -> PathBuf {
        self.dir.join(format!("{}.flkt", Self::key(r, k_max, quad)))
    }

    pub fn load_or_build(&self, r: f64, k_max: usize, quad: &QuadSpec) -> Result<KernelTable> {
        let path = self.path(r, k_max, quad);
        if let Ok(t) = read_table(&path) {
            if t.r.to_bits() == r.to_bits() && t.k_max == k_max {
                return Ok(t);
            }
        }
        let t = kernel_table(r, k_max, quad)?;
        let tmp = path.with_extension("tmp");
        write_table(&tmp, &t)?;
        std::fs::rename(&tmp, &path)?;
        Ok(t)
    }
}

fn write_table(path: &Path, t: &KernelTable) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 16 * (t.k_max + 1));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&t.r.to_le_bytes());
    buf.extend_from_slice(&(t.k_max as u64).to_le_bytes());
    for (v, e) in t.values.iter().zip(&t.quad_error) {
        buf.extend_from_slice(&v.to_le_bytes());
        buf.extend_from_slice(&e.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

fn read_table(path: &Path) -> Result<KernelTable> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = || Error::invalid(format!("corrupt kernel cache file {}", path.display()));
    if buf.len() < 24 || &buf[..4] != CACHE_MAGIC {
        return Err(bad());
    }
    let word = |i: usize| -> [u8; 8] { buf[i..i + 8].try_into().unwrap() };
    if u32::from_le_bytes(buf[4..8].try_into().unwrap()) != CACHE_VERSION {
        return Err(bad());
    }
    let r = f64::from_le_bytes(word(8));
    let k_max = u64::from_le_bytes(word(16)) as usize;
    if buf.len() != 24 + 16 * (k_max + 1) {
        return Err(bad());
    }
    let mut values = Vec::with_capacity(k_max + 1);
    let mut quad_error = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        values.push(f64::from_le_bytes(word(24 + 16 * k)));
        quad_error.push(f64::from_le_bytes(word(32 + 16 * k)));
    }
    Ok(KernelTable { r, k_max, values, quad_error })
}

/// Generalized binomial coefficient C(r, h) by the product recurrence.
pub fn binomial_coeff(r: f64, h: u64) -> f64 {
    let mut c = 1.0;
    for i in 1..=h {
        c *= (r - i as f64 + 1.0) / i as f64;
    }
    c
}

fn binomial_row(r: f64, h_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h_max + 1);
    let mut c = 1.0;
    out.push(c);
    for i in 1..=h_max {
        c *= (r - i as f64 + 1.0) / i as f64;
        out.push(c);
    }
    out
}

/// Coefficients of the truncated series Σ_{h≤H} (−1)^h 2^{r−h} C(r,h) (2 − U − U*)-expansion,
/// aggregated by net shift m = h − 2k.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesCoeffs {
    pub r: f64,
    pub h_max: usize,
    /// Coefficient of U^m for m = −H..=H, stored at index m + H.
    pub shifts: Vec<f64>,
}

impl SeriesCoeffs {
    pub fn coeff(&self, m: i64) -> f64 {
        let idx = m + self.h_max as i64;
        if idx < 0 || idx as usize >= self.shifts.len() {
            0.0
        } else {
            self.shifts[idx as usize]
        }
    }
}

/// Runs the recurrence in h for the fixed shift m ≥ 0 and calls `visit(h, partial_sum)` after
/// every included term.
fn series_shift_walk(r: f64, m: usize, h_max: usize, binom: &[f64], mut visit: impl FnMut(usize, f64)) {
    if m > h_max {
        return;
    }
    let two_r = 2f64.powf(r);
    // b_h(m) = 2^{−h} C(h, (h−m)/2)
    let mut b = 0.5f64.powi(m as i32);
    let mut h = m;
    let mut sum = 0.0;
    loop {
        let sign = if h.is_multiple_of(2) { 1.0 } else { -1.0 };
        sum += sign * two_r * binom[h] * b;
        visit(h, sum);
        if h + 2 > h_max {
            break;
        }
        let hf = h as f64;
        let mf = m as f64;
        b *= (hf + 1.0) * (hf + 2.0) / ((hf + 2.0 - mf) * (hf + 2.0 + mf));
        h += 2;
    }
}

pub fn series_coeffs(r: f64, h_max: usize) -> SeriesCoeffs {
    let binom = binomial_row(r, h_max);
    let mut shifts = vec![0.0; 2 * h_max + 1];
    for m in 0..=h_max {
        let mut last = 0.0;
        series_shift_walk(r, m, h_max, &binom, |_, s| last = s);
        shifts[h_max + m] = last;
        shifts[h_max - m] = last;
    }
    SeriesCoeffs { r, h_max, shifts }
}

/// Number of doublings used by [`series_limit`].
pub const SERIES_LIMIT_LEVELS: usize = 6;

/// Limit H → ∞ of the series coefficients for shifts m = 0..=k_max, extrapolated from partial
/// sums at H·2^j, j = 0..=6, with the tail model Σ_i d_i (H_j)^{−(1/2+r)−i}.
pub fn series_limit(r: f64, h_base: usize, k_max: usize) -> Result<Vec<f64>> {
    if r <= 0.0 {
        return Err(Error::invalid("series extrapolation needs r > 0"));
    }
    if h_base < 2 * k_max.max(1) {
        return Err(Error::invalid("base truncation must exceed twice the largest shift"));
    }
    let levels = SERIES_LIMIT_LEVELS;
    let h_top = h_base << levels;
    let binom = binomial_row(r, h_top);
    let hs: Vec<usize> = (0..=levels).map(|j| h_base << j).collect();
    let n = levels + 1;
    let mut design = DMatrix::<f64>::zeros(n, n);
    for (j, &h) in hs.iter().enumerate() {
        let x = h as f64 / h_base as f64;
        design[(j, 0)] = 1.0;
        for i in 1..n {
            design[(j, i)] = x.powf(-(0.5 + r) - (i - 1) as f64);
        }
    }
    let lu = design.lu();
    let mut out = Vec::with_capacity(k_max + 1);
    for m in 0..=k_max {
        let mut partial = vec![0.0; n];
        series_shift_walk(r, m, h_top, &binom, |h, s| {
            for (j, &hj) in hs.iter().enumerate() {
                if h <= hj {
                    partial[j] = s;
                }
            }
        });
        let sol = lu
            .solve(&DVector::from_vec(partial))
            .ok_or_else(|| Error::NoConvergence("series extrapolation system is singular".into()))?;
        out.push(sol[0]);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    /// c in a_r(k) ≈ c k^{slope}, with the sign of the tail entries.
    pub constant: f64,
    pub k_lo: usize,
    pub k_hi: usize,
    pub rms_residual: f64,
}

/// Log–log least-squares fit of |a_r(k)| on k ∈ [k_lo, k_hi].
pub fn decay_fit(table: &KernelTable, k_lo: usize, k_hi: usize) -> Result<DecayFit> {
    if let Some(n) = integer_order(table.r) {
        return Err(Error::FiniteSupport(n));
    }
    if k_lo == 0 || k_hi > table.k_max || k_hi < k_lo + 2 {
        return Err(Error::DegenerateFit(format!("fit range [{k_lo}, {k_hi}] is not usable")));
    }
    let sign = table.values[k_hi].signum();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in k_lo..=k_hi {
        let v = table.values[k];
        if v == 0.0 || v.signum() != sign {
            return Err(Error::DegenerateFit(format!("entry at k = {k} breaks the sign pattern")));
        }
        xs.push((k as f64).ln());
        ys.push(v.abs().ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { slope, constant: sign * intercept.exp(), k_lo, k_hi, rms_residual: rms })
}

/// Finitely supported sequence on Z starting at index `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub start: i64,
    pub values: Vec<f64>,
}

impl Sequence {
    pub fn delta(at: i64) -> Self {
        Sequence { start: at, values: vec![1.0] }
    }

    pub fn get(&self, n: i64) -> f64 {
        let i = n - self.start;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Convolution {
    pub result: Sequence,
    /// Estimated Σ_{|k|>K} |a_r(k)|.
    pub tail_bound: f64,
}

/// Truncated convolution (a_r * f)(n) = Σ_{|k|≤K} a_r(k) f(n − k).
pub fn convolve(table: &KernelTable, f: &Sequence) -> Convolution {
    let kk = table.k_max as i64;
    let start = f.start - kk;
    let len = f.values.len() + 2 * table.k_max;
    let mut out = vec![0.0; len];
    for (i, &fv) in f.values.iter().enumerate() {
        if fv == 0.0 {
            continue;
        }
        let m = f.start + i as i64;
        for k in -kk..=kk {
            let n = m + k;
            out[(n - start) as usize] += table.values[k.unsigned_abs() as usize] * fv;
        }
    }
    Convolution { result: Sequence { start, values: out }, tail_bound: table.tail_bound() }
}

/// max-norm of (Δ^r Δ^s − Δ^{r+s}) f on a plain-grid torus (half-integer grid if an order is
/// negative); exact functional calculus.
pub fn semigroup_residual_torus(r: f64, s: f64, n: usize, probe: &[f64]) -> Result<f64> {
    use crate::model::{FrequencyGrid, TorusModel};
    use crate::symbol::FractionalOrder;
    use num_complex::Complex64;
    if probe.len() != n {
        return Err(Error::invalid("probe length must equal the torus size"));
    }
    let grid = if r < 0.0 || s < 0.0 || r + s < 0.0 { FrequencyGrid::HalfInteger } else { FrequencyGrid::Plain };
    let model = |q: f64| -> Result<TorusModel> {
        if q == 0.0 {
            // Δ^0 is the identity; any nonzero order gives the same grid geometry
            TorusModel::new(FractionalOrder::scalar(1.0)?, n, grid)
        } else {
            TorusModel::new(FractionalOrder::scalar(q)?, n, grid)
        }
    };
    let f: Vec<Complex64> = probe.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let apply = |q: f64, v: &[Complex64]| -> Result<Vec<Complex64>> {
        if q == 0.0 {
            Ok(v.to_vec())
        } else {
            model(q)?.apply_free(v)
        }
    };
    let lhs = apply(r, &apply(s, &f)?)?;
    let rhs = apply(r + s, &f)?;
    Ok(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// max-norm of (c_r * c_s − c_{r+s}) * f with series coefficients truncated at H.
pub fn semigroup_residual_series(r: f64, s: f64, h_max: usize, probe: &Sequence) -> f64 {
    let cr = series_coeffs(r, h_max);
    let cs = series_coeffs(s, h_max);
    let crs = series_coeffs(r + s, h_max);
    let conv = |c: &SeriesCoeffs, f: &Sequence| -> Sequence {
        let hh = c.h_max as i64;
        let start = f.start - hh;
        let mut out = vec![0.0; f.values.len() + 2 * c.h_max];
        for (i, &fv) in f.values.iter().enumerate() {
            if fv == 0.0 {
                continue;
            }
            let m = f.start + i as i64;
            for k in -hh..=hh {
                out[(m + k - start) as usize] += c.coeff(k) * fv;
            }
        }
        Sequence { start, values: out }
    };
    let lhs = conv(&cr, &conv(&cs, probe));
    let rhs = conv(&crs, probe);
    (lhs.start..lhs.end()).map(|n| (lhs.get(n) - rhs.get(n)).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_kernels_exact() {
        let q = QuadSpec::default();
        let t = kernel_table(1.0, 5, &q).unwrap();
        assert_eq!(t.values, vec![2.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let t = kernel_table(2.0, 4, &q).unwrap();
        assert_eq!(t.values, vec![6.0, -4.0, 1.0, 0.0, 0.0]);
        let t = kernel_table(0.0, 3, &q).unwrap();
        assert_eq!(t.values, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_order_closed_form() {
        // a_{1/2}(k) = −4/(π(4k² − 1))
        let t = kernel_table(0.5, 60, &QuadSpec::default()).unwrap();
        for k in 0..=60 {
            let exact = -4.0 / (PI * (4.0 * (k * k) as f64 - 1.0));
            assert!((t.values[k] - exact).abs() < 1e-14, "k={k}");
        }
        assert!(t.values[0] > 0.0 && t.values[1..].iter().all(|&v| v < 0.0));
    }

    #[test]
    fn negative_order_singular_cell() {
        // a_r(0) = Γ(2r+1)/Γ(r+1)² for r > −1/2
        for r in [-0.25, -0.4, 0.3] {
            let (v, err) = kernel_coeff(r, 0, &QuadSpec::default()).unwrap();
            let exact = (crate::special::ln_gamma(2.0 * r + 1.0) - 2.0 * crate::special::ln_gamma(r + 1.0)).exp();
            assert!((v - exact).abs() < 1e-12, "r={r}: {v} vs {exact}");
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn rejects_distributional_regime() {
        assert!(matches!(kernel_coeff(-0.5, 0, &QuadSpec::default()), Err(Error::DistributionalKernel(_))));
        assert!(kernel_table(-1.0, 3, &QuadSpec::default()).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial_coeff(3.0, 2), 3.0);
        assert_eq!(binomial_coeff(0.5, 2), -0.125);
        assert_eq!(binomial_coeff(-1.0, 3), -1.0);
    }

    #[test]
    fn series_exact_for_integers() {
        let s = series_coeffs(1.0, 1);
        assert_eq!(s.shifts, vec![-1.0, 2.0, -1.0]);
        let s = series_coeffs(2.0, 2);
        for (m, v) in [(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)] {
            assert!((s.coeff(m) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn series_limit_matches_quadrature() {
        let lim = series_limit(0.5, 200, 5).unwrap();
        for (k, v) in lim.iter().enumerate() {
            let exact = -4.0 / (PI * (4.0 * (k * k) as f64 - 1.0));
            assert!((v - exact).abs() < 1e-10, "k={k}: {v} vs {exact}");
        }
    }

    #[test]
    fn decay_fit_errors_for_integer_order() {
        let t = kernel_table(1.0, 100, &QuadSpec::default()).unwrap();
        assert!(matches!(decay_fit(&t, 50, 100), Err(Error::FiniteSupport(1))));
    }

    #[test]
    fn convolution_examples() {
        let t = kernel_table(2.0, 2, &QuadSpec::default()).unwrap();
        let c = convolve(&t, &Sequence::delta(0));
        assert_eq!(c.result.start, -2);
        assert_eq!(c.result.values, vec![1.0, -4.0, 6.0, -4.0, 1.0]);
        assert_eq!(c.tail_bound, 0.0);
        let t = kernel_table(0.5, 12, &QuadSpec::default()).unwrap();
        let c = convolve(&t, &Sequence::delta(0));
        for k in -12..=12 {
            assert_eq!(c.result.get(k), t.coeff(k).unwrap());
        }
        assert!(c.tail_bound > 0.0 && c.tail_bound.is_finite());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = KernelCache::new(dir.path()).unwrap();
        let q = QuadSpec::default();
        let a = cache.load_or_build(0.3, 20, &q).unwrap();
        assert!(cache.path(0.3, 20, &q).exists());
        let b = cache.load_or_build(0.3, 20, &q).unwrap();
        assert_eq!(a, b);
        assert_ne!(KernelCache::key(0.3, 20, &q), KernelCache::key(0.3, 21, &q));
    }

    #[test]
    fn csv_rows() {
        let t = kernel_table(0.5, 50, &QuadSpec::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 52);
    }
}

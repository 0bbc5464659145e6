//! One-dimensional stationary scattering for H = Δ^r + W with finitely supported W.
//!
//! Sign convention: every boundary value is taken with Im G(λ + i0; 0) ≥ 0, and
//! T(z) = W(1 + R₀(z)W)^{-1} = W − W R(z) W.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrequencyGrid, Potential, TorusModel};
use crate::resolvent::{green_1d, green_1d_extrapolated, Eta, GreenOptions};
use crate::special::{bump, bump_derivative, logistic_cdf};
use crate::symbol::{axis_derivative, shell_root, EnergyWindow, FractionalOrder};
use crate::quadrature::GaussRule;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Energy shell {±θ*} of a scalar order with the boundary-trace weight.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShellData {
    pub r: f64,
    pub lambda: f64,
    /// Positive root θ* ∈ (0, π); the shell is {θ*, −θ*}.
    pub theta: f64,
    /// |ϑ′(θ*)|
    pub slope: f64,
    /// w = (2π |ϑ′(θ*)|)^{−1/2}
    pub weight: f64,
    /// |2w² − (1/π) Im G(λ + i0; 0)| with G from the η-extrapolation.
    pub stone_residual: f64,
}

impl ShellData {
    pub fn roots(&self) -> [f64; 2] {
        [self.theta, -self.theta]
    }

    /// (Γ₀*Γ₀)_{nm} = w² Σ_± e^{±iθ*(n−m)} on the given sites.
    pub fn trace_form(&self, sites: &[i64]) -> DMatrix<Complex64> {
        let k = sites.len();
        DMatrix::from_fn(k, k, |a, b| {
            let lag = (sites[a] - sites[b]) as f64;
            Complex64::new(2.0 * self.weight * self.weight * (self.theta * lag).cos(), 0.0)
        })
    }
}

pub fn shell_data(r: f64, lambda: f64, opts: &GreenOptions) -> Result<ShellData> {
    if r == 0.0 {
        return Err(Error::ZeroOrder);
    }
    // threshold guard and interior check share the Green-function path
    let g = green_1d(r, lambda, Eta::PlusZero, 0, &GreenOptions { cross_check: false, ..*opts })?;
    let theta = shell_root(r, lambda)?;
    let slope = axis_derivative(r, theta).ok_or_else(|| Error::invalid("shell root on the polar set"))?.abs();
    let weight = (2.0 * PI * slope).powf(-0.5);
    debug_assert!(g.value.im >= 0.0);
    let im = if opts.cross_check { green_1d_extrapolated(r, lambda, 0)?.im } else { g.value.im };
    let stone_residual = (2.0 * weight * weight - im / PI).abs();
    if stone_residual > 1e-6 {
        return Err(Error::NoConvergence(format!("Stone check failed at λ = {lambda}: residual {stone_residual:e}")));
    }
    Ok(ShellData { r, lambda, theta, slope, weight, stone_residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// λ + i0
    Plus,
    /// λ − i0
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterOptions {
    pub green: GreenOptions,
    /// |det(1 + G₀W)| below this marks an exceptional energy.
    pub fredholm_tol: f64,
}

impl Default for ScatterOptions {
    fn default() -> Self {
        ScatterOptions { green: GreenOptions::default(), fredholm_tol: 1e-8 }
    }
}

/// Support sites and values of a one-dimensional potential.
fn support(w: &Potential) -> Result<(Vec<i64>, Vec<f64>)> {
    if w.is_zero() {
        return Ok((Vec::new(), Vec::new()));
    }
    if w.d != 1 {
        return Err(Error::invalid("scattering is implemented for d = 1"));
    }
    let (sites, vals) = w.values.iter().filter(|(_, &v)| v != 0.0).map(|(k, &v)| (k[0], v)).unzip();
    Ok((sites, vals))
}

/// G₀(λ ± i0; n − m) on the given sites.
pub fn free_green_matrix(r: f64, lambda: f64, sites: &[i64], side: Side, opts: &GreenOptions) -> Result<DMatrix<Complex64>> {
    let mut cache: BTreeMap<u64, Complex64> = BTreeMap::new();
    for &a in sites {
        for &b in sites {
            let lag = a.abs_diff(b);
            if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(lag) {
                let g = green_1d(r, lambda, Eta::PlusZero, lag as i64, opts)?;
                if g.flagged {
                    return Err(Error::NoConvergence(format!(
                        "boundary value routes disagree at λ = {lambda}, lag {lag}: {:e}",
                        g.cross_check.unwrap_or(f64::NAN)
                    )));
                }
                e.insert(g.value);
            }
        }
    }
    let k = sites.len();
    Ok(DMatrix::from_fn(k, k, |a, b| {
        let v = cache[&sites[a].abs_diff(sites[b])];
        match side {
            Side::Plus => v,
            Side::Minus => v.conj(),
        }
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TMatrix {
    pub lambda: f64,
    pub side: Side,
    pub sites: Vec<i64>,
    /// W(1 + G₀W)^{-1}
    pub t: DMatrix<Complex64>,
    /// max |W(1 + G₀W)^{-1} − (W − W R_FF W)|, R_FF = (G₀^{-1} + W)^{-1}
    pub route_difference: f64,
    pub fredholm_det: Complex64,
}

pub fn t_matrix(r: f64, lambda: f64, w: &Potential, side: Side, opts: &ScatterOptions) -> Result<TMatrix> {
    let (sites, vals) = support(w)?;
    let k = sites.len();
    if k == 0 {
        return Ok(TMatrix {
            lambda,
            side,
            sites,
            t: DMatrix::zeros(0, 0),
            route_difference: 0.0,
            fredholm_det: Complex64::new(1.0, 0.0),
        });
    }
    let g = free_green_matrix(r, lambda, &sites, side, &opts.green)?;
    let wm = DMatrix::from_diagonal(&DVector::from_iterator(k, vals.iter().map(|&v| Complex64::new(v, 0.0))));
    let m = DMatrix::<Complex64>::identity(k, k) + &g * &wm;
    let fredholm_det = m.determinant();
    if fredholm_det.norm() < opts.fredholm_tol {
        return Err(Error::ExceptionalEnergy(lambda));
    }
    let t1 = &wm * m.try_inverse().ok_or(Error::ExceptionalEnergy(lambda))?;
    let ginv = g.try_inverse().ok_or(Error::Singular(0.0))?;
    let rff = (ginv + &wm).try_inverse().ok_or(Error::ExceptionalEnergy(lambda))?;
    let t2 = &wm - &wm * rff * &wm;
    let route_difference = (&t1 - &t2).iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(TMatrix { lambda, side, sites, t: t1, route_difference, fredholm_det })
}

/// S_ab = δ_ab − 2πi w² Σ_{n,m} e^{−iθ_a n} T_nm e^{iθ_b m}, channels (θ*, −θ*).
pub fn s_matrix(shell: &ShellData, t: &TMatrix) -> [[Complex64; 2]; 2] {
    let roots = shell.roots();
    let w2 = shell.weight * shell.weight;
    let mut s = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (a, &ta) in roots.iter().enumerate() {
        for (b, &tb) in roots.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &n) in t.sites.iter().enumerate() {
                for (j, &m) in t.sites.iter().enumerate() {
                    acc += Complex64::from_polar(1.0, -ta * n as f64) * t.t[(i, j)] * Complex64::from_polar(1.0, tb * m as f64);
                }
            }
            s[a][b] = if a == b { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) } - 2.0 * PI * I * w2 * acc;
        }
    }
    s
}

pub fn unitarity_residual(s: &[[Complex64; 2]; 2]) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in s {
                acc += c[a].conj() * c[b];
            }
            if a == b {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

/// |S_{++} − S_{−−}|: reciprocity S·X = (S·X)ᵀ in the channel basis.
pub fn reciprocity_residual(s: &[[Complex64; 2]; 2]) -> f64 {
    (s[0][0] - s[1][1]).norm()
}

pub fn det2(s: &[[Complex64; 2]; 2]) -> Complex64 {
    s[0][0] * s[1][1] - s[0][1] * s[1][0]
}

/// max |T(λ−i0) − T(λ+i0) − 2πi T(λ−i0) Γ₀*Γ₀ T(λ+i0)| on the support.
pub fn optical_residual(shell: &ShellData, t_minus: &TMatrix, t_plus: &TMatrix) -> f64 {
    if t_plus.sites.is_empty() {
        return 0.0;
    }
    let gg = shell.trace_form(&t_plus.sites);
    let lhs = &t_minus.t - &t_plus.t;
    let rhs = (&t_minus.t * gg * &t_plus.t) * (2.0 * PI * I);
    (lhs - rhs).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatteringRecord {
    pub lambda: f64,
    pub theta: f64,
    pub weight: f64,
    pub sites: Vec<i64>,
    /// T(λ + i0), row-major.
    pub t_plus: Vec<Vec<Complex64>>,
    pub s: [[Complex64; 2]; 2],
    pub unitarity_residual: f64,
    pub optical_residual: f64,
    pub route_difference: f64,
    pub reciprocity_residual: f64,
    pub stone_residual: f64,
    pub det_s: Complex64,
    pub ssf: Option<f64>,
    pub bk_residual: Option<f64>,
}

pub fn scatter(r: f64, lambda: f64, w: &Potential, opts: &ScatterOptions) -> Result<ScatteringRecord> {
    let shell = shell_data(r, lambda, &opts.green)?;
    let tp = t_matrix(r, lambda, w, Side::Plus, opts)?;
    let tm = t_matrix(r, lambda, w, Side::Minus, opts)?;
    let s = s_matrix(&shell, &tp);
    let k = tp.sites.len();
    Ok(ScatteringRecord {
        lambda,
        theta: shell.theta,
        weight: shell.weight,
        sites: tp.sites.clone(),
        t_plus: (0..k).map(|i| (0..k).map(|j| tp.t[(i, j)]).collect()).collect(),
        s,
        unitarity_residual: unitarity_residual(&s),
        optical_residual: optical_residual(&shell, &tm, &tp),
        route_difference: tp.route_difference.max(tm.route_difference),
        reciprocity_residual: reciprocity_residual(&s),
        stone_residual: shell.stone_residual,
        det_s: det2(&s),
        ssf: None,
        bk_residual: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatterSweep {
    pub records: Vec<ScatteringRecord>,
    /// Exceptional energies that were skipped.
    pub skipped: Vec<f64>,
    /// Largest |Δ arg det S| between adjacent records.
    pub max_phase_jump: f64,
}

/// Scattering records on an energy grid; exceptional energies are replaced by the two points
/// a quarter step on either side.
pub fn scatter_sweep(r: f64, lambdas: &[f64], w: &Potential, opts: &ScatterOptions) -> Result<ScatterSweep> {
    let step = if lambdas.len() > 1 { (lambdas[1] - lambdas[0]).abs() } else { 1e-3 };
    let results: Vec<(f64, Result<ScatteringRecord>)> =
        lambdas.par_iter().map(|&l| (l, scatter(r, l, w, opts))).collect();
    let mut records = Vec::with_capacity(lambdas.len());
    let mut skipped = Vec::new();
    for (l, res) in results {
        match res {
            Ok(rec) => records.push(rec),
            Err(Error::ExceptionalEnergy(_)) => {
                skipped.push(l);
                for nl in [l - 0.25 * step, l + 0.25 * step] {
                    if let Ok(rec) = scatter(r, nl, w, opts) {
                        records.push(rec);
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    records.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let max_phase_jump = records
        .windows(2)
        .map(|p| (p[1].det_s / p[0].det_s).arg().abs())
        .fold(0.0, f64::max);
    Ok(ScatterSweep { records, skipped, max_phase_jump })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsfOptions {
    /// Smoothing width σ = sigma_factor · N^{−1/2}.
    pub sigma_factor: f64,
    /// Eigenvalues closer than this to λ count as a collision.
    pub collision: f64,
    /// Shift used to report both sides of a collision.
    pub shift: f64,
    pub cap: usize,
}

impl Default for SsfOptions {
    fn default() -> Self {
        SsfOptions { sigma_factor: 0.5, collision: 1e-9, shift: 1e-6, cap: crate::model::DEFAULT_DENSE_CAP }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SsfPoint {
    pub n: usize,
    /// #{eig H₀ ≤ λ} − #{eig H ≤ λ}
    pub raw: i64,
    /// Σ Φ_σ(λ − e₀) − Σ Φ_σ(λ − e) with a logistic Φ.
    pub smoothed: f64,
    pub sigma: f64,
    /// Raw counts at λ ∓ shift when an eigenvalue sits within the collision distance.
    pub collision: Option<[i64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SsfReport {
    pub lambda: f64,
    pub points: Vec<SsfPoint>,
    /// Most frequent raw count over the last three sizes, when one repeats.
    pub stabilized_raw: Option<i64>,
    /// Smoothed value at the largest size.
    pub smoothed: f64,
}

struct SpectraPair {
    n: usize,
    free: Vec<f64>,
    full: Vec<f64>,
}

fn torus_grid(r: f64) -> FrequencyGrid {
    if r < 0.0 {
        FrequencyGrid::HalfInteger
    } else {
        FrequencyGrid::Plain
    }
}

fn spectra(r: f64, w: &Potential, n: usize, cap: usize) -> Result<SpectraPair> {
    let t = TorusModel::new(FractionalOrder::scalar(r)?, n, torus_grid(r))?;
    let free = t.eigenvalues()?;
    let full = if w.is_zero() {
        free.clone()
    } else {
        let tw = t.with_potential(w)?;
        if tw.sites() > cap {
            return Err(Error::SizeCap { size: tw.sites(), cap });
        }
        crate::linalg::sym_eigen(tw.dense_matrix(cap)?, false).values
    };
    Ok(SpectraPair { n, free, full })
}

fn count_le(sorted: &[f64], x: f64) -> i64 {
    sorted.partition_point(|&e| e <= x) as i64
}

fn ssf_point(p: &SpectraPair, lambda: f64, opts: &SsfOptions) -> SsfPoint {
    let sigma = opts.sigma_factor / (p.n as f64).sqrt();
    let raw = count_le(&p.free, lambda) - count_le(&p.full, lambda);
    let smooth = |v: &[f64]| v.iter().map(|&e| logistic_cdf(lambda - e, sigma)).sum::<f64>();
    let smoothed = smooth(&p.free) - smooth(&p.full);
    let near = p.free.iter().chain(&p.full).any(|&e| (e - lambda).abs() < opts.collision);
    let collision = near.then(|| {
        let at = |x: f64| count_le(&p.free, x) - count_le(&p.full, x);
        [at(lambda - opts.shift), at(lambda + opts.shift)]
    });
    SsfPoint { n: p.n, raw, smoothed, sigma, collision }
}

fn mode_of_last_three(points: &[SsfPoint]) -> Option<i64> {
    let tail: Vec<i64> = points.iter().rev().take(3).map(|p| p.raw).collect();
    let mut best: Option<(usize, i64)> = None;
    for &v in &tail {
        let c = tail.iter().filter(|&&x| x == v).count();
        if c >= 2 && best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, v));
        }
    }
    best.map(|b| b.1)
}

/// Spectral shift by eigenvalue counting on tori of the given sizes, for several energies at once.
pub fn ssf_counting_grid(r: f64, lambdas: &[f64], w: &Potential, ns: &[usize], opts: &SsfOptions) -> Result<Vec<SsfReport>> {
    if ns.is_empty() {
        return Err(Error::invalid("torus size grid is empty"));
    }
    support(w)?;
    let pairs: Vec<SpectraPair> = ns.iter().map(|&n| spectra(r, w, n, opts.cap)).collect::<Result<_>>()?;
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let points: Vec<SsfPoint> = pairs.iter().map(|p| ssf_point(p, lambda, opts)).collect();
            let smoothed = points.last().map(|p| p.smoothed).unwrap_or(0.0);
            SsfReport { lambda, stabilized_raw: mode_of_last_three(&points), smoothed, points }
        })
        .collect())
}

pub fn ssf_counting(r: f64, lambda: f64, w: &Potential, ns: &[usize], opts: &SsfOptions) -> Result<SsfReport> {
    Ok(ssf_counting_grid(r, &[lambda], w, ns, opts)?.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BkPoint {
    pub n: usize,
    pub xi: f64,
    /// |det S(λ) − e^{−2πiξ}|
    pub phase_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BkReport {
    pub lambda: f64,
    pub det_s: Complex64,
    pub points: Vec<BkPoint>,
    /// Phase distance at the largest size.
    pub residual: f64,
    pub decreasing: bool,
}

/// Birman–Krein check det S(λ) = e^{−2πiξ(λ)} with ξ from smoothed torus counting.
pub fn birman_krein(
    r: f64,
    lambdas: &[f64],
    w: &Potential,
    ns: &[usize],
    scatter_opts: &ScatterOptions,
    ssf_opts: &SsfOptions,
) -> Result<Vec<BkReport>> {
    let ssf = ssf_counting_grid(r, lambdas, w, ns, ssf_opts)?;
    lambdas
        .iter()
        .zip(ssf)
        .map(|(&lambda, rep)| {
            if let [.., a, b] = rep.points.as_slice() {
                if (a.smoothed - b.smoothed).abs() > 0.5 {
                    return Err(Error::NotStabilized(format!(
                        "smoothed counts {} and {} at λ = {lambda}",
                        a.smoothed, b.smoothed
                    )));
                }
            }
            let det_s = det2(&scatter(r, lambda, w, scatter_opts)?.s);
            let points: Vec<BkPoint> = rep
                .points
                .iter()
                .map(|p| BkPoint {
                    n: p.n,
                    xi: p.smoothed,
                    phase_distance: (det_s - Complex64::from_polar(1.0, -2.0 * PI * p.smoothed)).norm(),
                })
                .collect();
            let decreasing = points.windows(2).all(|q| q[1].phase_distance <= q[0].phase_distance);
            let residual = points.last().map(|p| p.phase_distance).unwrap_or(0.0);
            Ok(BkReport { lambda, det_s, points, residual, decreasing })
        })
        .collect()
}

pub fn birman_krein_residual(
    r: f64,
    lambda: f64,
    w: &Potential,
    ns: &[usize],
    scatter_opts: &ScatterOptions,
    ssf_opts: &SsfOptions,
) -> Result<BkReport> {
    Ok(birman_krein(r, &[lambda], w, ns, scatter_opts, ssf_opts)?.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KreinTraceCheck {
    pub window: EnergyWindow,
    pub n: usize,
    /// Tr(φ(H) − φ(H₀)) on the torus.
    pub trace: f64,
    /// ∫ φ′(λ) ξ(λ) dλ with ξ = −arg det S / 2π, unwrapped along the window.
    pub integral: f64,
    pub residual: f64,
}

/// Trace formula Tr(φ(H) − φ(H₀)) = ∫ φ′ ξ with a bump φ on the window.
pub fn krein_trace_check(
    r: f64,
    w: &Potential,
    window: &EnergyWindow,
    n: usize,
    panels: usize,
    opts: &ScatterOptions,
) -> Result<KreinTraceCheck> {
    let p = spectra(r, w, n, usize::MAX)?;
    let phi = |e: f64| bump(e, window.lo, window.hi);
    let trace = p.full.iter().map(|&e| phi(e)).sum::<f64>() - p.free.iter().map(|&e| phi(e)).sum::<f64>();
    let rule = GaussRule::legendre(24);
    let panels = panels.max(1);
    let h = window.width() / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|i| rule.mapped(window.lo + h * i as f64, window.lo + h * (i + 1) as f64).collect::<Vec<_>>())
        .collect();
    let opts = ScatterOptions { green: GreenOptions { cross_check: false, ..opts.green }, ..*opts };
    let dets: Vec<Complex64> =
        nodes.par_iter().map(|&(x, _)| scatter(r, x, w, &opts).map(|s| s.det_s)).collect::<Result<_>>()?;
    let mut phase = dets[0].arg();
    let mut integral = 0.0;
    for (i, (&(x, wt), d)) in nodes.iter().zip(&dets).enumerate() {
        if i > 0 {
            phase += (d / dets[i - 1]).arg();
        }
        integral += wt * bump_derivative(x, window.lo, window.hi) * (-phase / (2.0 * PI));
    }
    Ok(KreinTraceCheck { window: *window, n, trace, integral, residual: (trace - integral).abs() })
}

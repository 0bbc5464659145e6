//! Time evolution e^{−itH}, weighted local decay, overlap decay, time-averaged escape from
//! |A| ≤ vt, and finite-time wave-operator probes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::ConjugateOperator;
use crate::error::{Error, Result};
use crate::linalg::{norm, sym_eigen};
use crate::model::{lambda_weight, BoxModel, LatticeModel, TorusSpectral, DEFAULT_DENSE_CAP};
use crate::special::bessel_j_sequence;
use crate::symbol::EnergyWindow;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateVector {
    pub t: f64,
    pub values: Vec<Complex64>,
    pub norm: f64,
}

impl StateVector {
    pub fn new(t: f64, values: Vec<Complex64>) -> Self {
        let norm = norm(&values);
        StateVector { t, values, norm }
    }
}

enum Kind {
    Torus(TorusSpectral),
    Dense { values: Vec<f64>, vectors: DMatrix<f64> },
}

/// Spectral coefficients of a state with respect to a [`Propagator`].
#[derive(Clone, Debug)]
pub struct Coefficients(Vec<Complex64>);

/// Diagonalised H for functional calculus: Fourier modes on a free torus, dense eigenpairs
/// otherwise.
pub struct Propagator {
    kind: Kind,
    n: usize,
}

fn real_times_complex(m: &DMatrix<f64>, c: &[Complex64], transpose: bool) -> Vec<Complex64> {
    let re = DVector::from_iterator(c.len(), c.iter().map(|v| v.re));
    let im = DVector::from_iterator(c.len(), c.iter().map(|v| v.im));
    let (a, b) = if transpose { (m.tr_mul(&re), m.tr_mul(&im)) } else { (m * re, m * im) };
    a.iter().zip(b.iter()).map(|(&x, &y)| Complex64::new(x, y)).collect()
}

impl Propagator {
    pub fn new(model: &LatticeModel, cap: usize) -> Result<Self> {
        let n = model.sites();
        if let LatticeModel::Torus(t) = model {
            if !t.has_potential() {
                return Ok(Propagator { kind: Kind::Torus(t.spectral()?), n });
            }
        }
        let e = sym_eigen(model.dense_matrix(cap)?, true);
        let vectors = e.vectors.expect("eigenvectors requested");
        Ok(Propagator { kind: Kind::Dense { values: e.values, vectors }, n })
    }

    pub fn from_box(b: &BoxModel) -> Self {
        let e = sym_eigen(b.matrix.clone(), true);
        Propagator { kind: Kind::Dense { values: e.values, vectors: e.vectors.expect("eigenvectors requested") }, n: b.sites() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Largest |eigenvalue|.
    pub fn norm_bound(&self) -> f64 {
        let vals: Box<dyn Iterator<Item = f64> + '_> = match &self.kind {
            Kind::Torus(s) => Box::new(s.mult.iter().flatten().copied()),
            Kind::Dense { values, .. } => Box::new(values.iter().copied()),
        };
        vals.map(f64::abs).fold(0.0, f64::max)
    }

    pub fn analyze(&self, f: &[Complex64]) -> Result<Coefficients> {
        if f.len() != self.n {
            return Err(Error::invalid("vector length does not match the model"));
        }
        Ok(Coefficients(match &self.kind {
            Kind::Torus(s) => s.analyze(f)?,
            Kind::Dense { vectors, .. } => real_times_complex(vectors, f, true),
        }))
    }

    /// g(H) applied to the state with coefficients `c`.
    pub fn synthesize(&self, c: &Coefficients, g: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        match &self.kind {
            Kind::Torus(s) => s.synthesize(&c.0, g),
            Kind::Dense { values, vectors } => {
                let scaled: Vec<Complex64> = c.0.iter().zip(values).map(|(x, &l)| x * g(l)).collect();
                real_times_complex(vectors, &scaled, false)
            }
        }
    }

    /// Multiply coefficients by g(λ) in place (no transform back).
    pub fn scale(&self, c: &Coefficients, g: impl Fn(f64) -> Complex64) -> Coefficients {
        match &self.kind {
            Kind::Torus(s) => Coefficients(
                c.0.iter().zip(&s.mult).map(|(x, m)| m.map_or(ZERO, |l| x * g(l))).collect(),
            ),
            Kind::Dense { values, .. } => Coefficients(c.0.iter().zip(values).map(|(x, &l)| x * g(l)).collect()),
        }
    }

    pub fn apply_fn(&self, f: &[Complex64], g: impl Fn(f64) -> Complex64) -> Result<Vec<Complex64>> {
        Ok(self.synthesize(&self.analyze(f)?, g))
    }

    pub fn evolve(&self, f: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        self.apply_fn(f, |x| Complex64::from_polar(1.0, -t * x))
    }
}

/// e^{−itH} f.
pub fn evolve(model: &LatticeModel, f: &[Complex64], t: f64) -> Result<StateVector> {
    let p = Propagator::new(model, DEFAULT_DENSE_CAP)?;
    Ok(StateVector::new(t, p.evolve(f, t)?))
}

/// Gershgorin enclosure [a, b] of a symmetric matrix.
fn gershgorin(m: &DMatrix<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m.nrows() {
        let rad: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        lo = lo.min(m[(i, i)] - rad);
        hi = hi.max(m[(i, i)] + rad);
    }
    (lo, hi)
}

/// Chebyshev expansion e^{−itH} f ≈ e^{−itc} Σ_{k≤M} (2 − δ_{k0}) (−i)^k J_k(th) T_k((H − c)/h) f.
pub fn chebyshev_evolve(b: &BoxModel, f: &[Complex64], t: f64, order: usize) -> Result<StateVector> {
    if b.order.components().iter().any(|&r| r <= 0.0) {
        return Err(Error::invalid("Chebyshev propagation needs every order component > 0 (bounded H)"));
    }
    let n = b.sites();
    if f.len() != n {
        return Err(Error::invalid("vector length does not match the model"));
    }
    let (lo, hi) = gershgorin(&b.matrix);
    let c = 0.5 * (lo + hi);
    let h = (0.5 * (hi - lo)).max(f64::MIN_POSITIVE);
    let scaled = (&b.matrix - DMatrix::identity(n, n) * c) / h;
    let apply = |v: &[Complex64]| real_times_complex(&scaled, v, false);
    let jk = bessel_j_sequence(t * h, order);
    let mut prev = f.to_vec();
    let mut acc: Vec<Complex64> = prev.iter().map(|x| x * jk[0]).collect();
    if order >= 1 {
        let mut cur = apply(&prev);
        let mut phase = Complex64::new(0.0, -1.0);
        for k in 1..=order {
            let coef = 2.0 * jk[k] * phase;
            for (a, x) in acc.iter_mut().zip(&cur) {
                *a += coef * x;
            }
            if k == order {
                break;
            }
            let hc = apply(&cur);
            let next: Vec<Complex64> = hc.iter().zip(&prev).map(|(x, p)| 2.0 * x - p).collect();
            prev = cur;
            cur = next;
            phase *= Complex64::new(0.0, -1.0);
        }
    }
    let global = Complex64::from_polar(1.0, -t * c);
    Ok(StateVector::new(t, acc.into_iter().map(|x| x * global).collect()))
}

fn position_weights(model: &LatticeModel, s: f64) -> Vec<f64> {
    (0..model.sites()).map(|i| lambda_weight(&model.coords(i)).powf(-s)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayOptions {
    /// Time step; defaults to 0.1/‖H‖.
    pub dt: Option<f64>,
    /// Number of recorded (t, cumulative integral) pairs.
    pub checkpoints: usize,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions { dt: None, checkpoints: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub s: f64,
    pub window: EnergyWindow,
    pub horizon: f64,
    pub dt: f64,
    /// ∫₀^T ‖⟨Λ(Q)⟩^{−s} e^{−itH} φ(H) ⟨Λ(Q)⟩^{−s} f‖² dt
    pub value: f64,
    /// Slope of log(integral) against log t over the last decade.
    pub tail_slope: f64,
    pub cumulative: Vec<(f64, f64)>,
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Time grid 0 = t_0 < … < t_K = T with spacing at most dt.
fn time_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let k = (horizon / dt).ceil().max(1.0) as usize;
    (0..=k).map(|i| horizon * i as f64 / k as f64).collect()
}

pub fn local_decay_integral(
    model: &LatticeModel,
    f: &[Complex64],
    window: &EnergyWindow,
    s: f64,
    horizon: f64,
    opts: &DecayOptions,
) -> Result<DecayReport> {
    if !(horizon > 0.0) || !(s >= 0.0) {
        return Err(Error::invalid("horizon must be positive and s >= 0"));
    }
    let p = Propagator::new(model, DEFAULT_DENSE_CAP)?;
    let w = position_weights(model, s);
    let g: Vec<Complex64> = f.iter().zip(&w).map(|(x, a)| x * a).collect();
    let c = p.analyze(&g)?;
    let c = p.scale(&c, |x| Complex64::new(window.bump(x), 0.0));
    let dt = opts.dt.unwrap_or(0.1 / p.norm_bound().max(1e-12));
    let ts = time_grid(horizon, dt);
    let samples: Vec<f64> = ts
        .par_iter()
        .map(|&t| {
            let psi = p.synthesize(&c, |x| Complex64::from_polar(1.0, -t * x));
            psi.iter().zip(&w).map(|(x, a)| (x * a).norm_sqr()).sum()
        })
        .collect();
    let step = ts[1] - ts[0];
    let every = (ts.len() / opts.checkpoints.max(1)).max(1);
    let mut cum = 0.0;
    let mut cumulative = Vec::new();
    for i in 1..ts.len() {
        cum += 0.5 * step * (samples[i - 1] + samples[i]);
        if i % every == 0 || i == ts.len() - 1 {
            cumulative.push((ts[i], cum));
        }
    }
    let tail: Vec<(f64, f64)> = cumulative.iter().copied().filter(|p| p.0 >= 0.1 * horizon).collect();
    Ok(DecayReport { s, window: *window, horizon, dt: step, value: cum, tail_slope: loglog_slope(&tail), cumulative })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RageReport {
    pub times: Vec<f64>,
    pub overlaps: Vec<f64>,
    /// Exponent of a power-law fit to the upper envelope.
    pub envelope_exponent: f64,
    /// Set when the overlap shows no decay.
    pub flagged: bool,
}

/// |⟨g, e^{−itH} φ(H) f⟩| on a time grid.
pub fn rage_overlap(
    model: &LatticeModel,
    g: &[Complex64],
    f: &[Complex64],
    window: &EnergyWindow,
    times: &[f64],
) -> Result<RageReport> {
    let p = Propagator::new(model, DEFAULT_DENSE_CAP)?;
    if g.len() != p.len() {
        return Err(Error::invalid("vector length does not match the model"));
    }
    let c = p.scale(&p.analyze(f)?, |x| Complex64::new(window.bump(x), 0.0));
    let overlaps: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let psi = p.synthesize(&c, |x| Complex64::from_polar(1.0, -t * x));
            g.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm()
        })
        .collect();
    let mut env = overlaps.clone();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let pts: Vec<(f64, f64)> = times.iter().copied().zip(env).collect();
    let envelope_exponent = loglog_slope(&pts);
    Ok(RageReport { times: times.to_vec(), overlaps, envelope_exponent, flagged: envelope_exponent > -0.05 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallisticReport {
    pub v: f64,
    pub window: EnergyWindow,
    pub dt: f64,
    pub horizons: Vec<f64>,
    /// (1/T) ∫₀^T ‖1_{|A|≤vt} e^{−itH} χ(H) f‖² dt for normalised χ(H) f.
    pub averages: Vec<f64>,
    /// Smallest C with averages ≤ C/log(1+T) on all but the last horizon.
    pub envelope_c: f64,
    pub final_below_envelope: bool,
    pub non_increasing: bool,
}

pub fn ballistic_average(
    b: &BoxModel,
    f: &[Complex64],
    window: &EnergyWindow,
    v: f64,
    horizons: &[f64],
    dt: Option<f64>,
) -> Result<BallisticReport> {
    if horizons.is_empty() || horizons.iter().any(|&t| !(t > 0.0)) || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("horizons must be positive and increasing"));
    }
    if !(v > 0.0) {
        return Err(Error::invalid("velocity must be positive"));
    }
    let n = b.sites();
    if f.len() != n {
        return Err(Error::invalid("vector length does not match the model"));
    }
    let eh = sym_eigen(b.matrix.clone(), true);
    let vh = eh.vectors()?;
    let a = ConjugateOperator::for_box(b);
    let ea = a.eigen();
    let ua = ea.vectors()?;
    let d = a.phases();
    // H-eigenvectors inside supp χ, with χ(λ) ⟨v_j, f⟩
    let keep: Vec<usize> = (0..n).filter(|&j| window.bump(eh.values[j]) > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::invalid("no eigenvalues of H inside the window"));
    }
    let proj = real_times_complex(vh, f, true);
    let mut c: Vec<Complex64> = keep.iter().map(|&j| proj[j] * window.bump(eh.values[j])).collect();
    let total = norm(&c);
    if total == 0.0 {
        return Err(Error::invalid("chi(H) f vanishes"));
    }
    for x in c.iter_mut() {
        *x /= total;
    }
    let lam: Vec<f64> = keep.iter().map(|&j| eh.values[j]).collect();
    // rows: A-eigenvectors ordered by |a|; M = U_Aᵀ D* V_H restricted to kept columns
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&x, &y| ea.values[x].abs().total_cmp(&ea.values[y].abs()));
    let abs_a: Vec<f64> = rows.iter().map(|&k| ea.values[k].abs()).collect();
    let t_max = *horizons.last().unwrap();
    let needed = abs_a.partition_point(|&x| x <= v * t_max);
    let dv: DMatrix<Complex64> = DMatrix::from_fn(n, keep.len(), |i, j| d[i].conj() * vh[(i, keep[j])]);
    let m: DMatrix<Complex64> = DMatrix::from_fn(needed, keep.len(), |r, j| {
        let k = rows[r];
        (0..n).map(|i| ua[(i, k)] * dv[(i, j)]).sum()
    });
    let lam_max = lam.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let dt = dt.unwrap_or(0.1 / lam_max.max(1e-12));
    let ts = time_grid(t_max, dt);
    let samples: Vec<f64> = ts
        .par_iter()
        .map(|&t| {
            let p = abs_a.partition_point(|&x| x <= v * t).min(needed);
            if p == 0 {
                return 0.0;
            }
            let x: Vec<Complex64> = c.iter().zip(&lam).map(|(ci, &l)| ci * Complex64::from_polar(1.0, -t * l)).collect();
            (0..p)
                .map(|r| {
                    let mut acc = ZERO;
                    for (j, xj) in x.iter().enumerate() {
                        acc += m[(r, j)] * xj;
                    }
                    acc.norm_sqr()
                })
                .sum()
        })
        .collect();
    let step = ts[1] - ts[0];
    let mut averages = Vec::with_capacity(horizons.len());
    let mut cum = 0.0;
    let mut next = 0;
    for i in 1..ts.len() {
        cum += 0.5 * step * (samples[i - 1] + samples[i]);
        while next < horizons.len() && ts[i] >= horizons[next] - 1e-9 * t_max {
            averages.push(cum / ts[i]);
            next += 1;
        }
    }
    while averages.len() < horizons.len() {
        averages.push(cum / t_max);
    }
    let k = averages.len();
    let envelope_c = if k > 1 {
        (0..k - 1).map(|i| averages[i] * (1.0 + horizons[i]).ln()).fold(0.0, f64::max)
    } else {
        averages[0] * (1.0 + horizons[0]).ln()
    };
    let final_below_envelope = averages[k - 1] <= envelope_c / (1.0 + horizons[k - 1]).ln();
    let non_increasing = averages.windows(2).all(|w| w[1] <= w[0]);
    Ok(BallisticReport {
        v,
        window: *window,
        dt: step,
        horizons: horizons.to_vec(),
        averages,
        envelope_c,
        final_below_envelope,
        non_increasing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveReport {
    pub times: Vec<f64>,
    /// ‖Ω(t_{k+1}) f − Ω(t_k) f‖
    pub increments: Vec<f64>,
    /// Fraction of ‖Ω(t_last) f‖² in the H-spectral window.
    pub final_window_mass: f64,
    /// First grid time whose increment is below the tolerance.
    pub converged_at: Option<f64>,
    /// Mass of e^{−itH₀} χ(H₀) f in the outer tenth of the box at `converged_at` (or the last time).
    pub edge_mass: f64,
    pub left_bulk: bool,
}

/// Ω(t) f = e^{itH} χ(H₀) e^{−itH₀} f on a time grid.
pub fn wave_operator_probe(
    h: &BoxModel,
    h0: &BoxModel,
    window: &EnergyWindow,
    f: &[Complex64],
    times: &[f64],
    tol: f64,
) -> Result<WaveReport> {
    let n = h.sites();
    if h0.sites() != n || h.geometry() != h0.geometry() {
        return Err(Error::invalid("H and H0 must live on the same box"));
    }
    if f.len() != n {
        return Err(Error::invalid("vector length does not match the model"));
    }
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("need at least two increasing times"));
    }
    let e0 = sym_eigen(h0.matrix.clone(), true);
    let eh = sym_eigen(h.matrix.clone(), true);
    let v0 = e0.vectors()?;
    let vh = eh.vectors()?;
    let k = vh.tr_mul(v0);
    let c0: Vec<Complex64> =
        real_times_complex(v0, f, true).into_iter().zip(&e0.values).map(|(c, &l)| c * window.bump(l)).collect();
    let omega = |t: f64| -> Vec<Complex64> {
        let x: Vec<Complex64> = c0.iter().zip(&e0.values).map(|(c, &l)| c * Complex64::from_polar(1.0, -t * l)).collect();
        let y = real_times_complex(&k, &x, false);
        y.into_iter().zip(&eh.values).map(|(c, &l)| c * Complex64::from_polar(1.0, t * l)).collect()
    };
    // coefficients in the H eigenbasis; increments are basis independent
    let states: Vec<Vec<Complex64>> = times.par_iter().map(|&t| omega(t)).collect();
    let increments: Vec<f64> = states
        .windows(2)
        .map(|p| p[0].iter().zip(&p[1]).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let last = states.last().unwrap();
    let total: f64 = last.iter().map(|c| c.norm_sqr()).sum();
    let inside: f64 = last.iter().zip(&eh.values).filter(|(_, &l)| window.contains(l)).map(|(c, _)| c.norm_sqr()).sum();
    let converged_at = increments.iter().position(|&x| x < tol).map(|i| times[i + 1]);
    let t_edge = converged_at.unwrap_or(*times.last().unwrap());
    let free: Vec<Complex64> = c0.iter().zip(&e0.values).map(|(c, &l)| c * Complex64::from_polar(1.0, -t_edge * l)).collect();
    let psi = real_times_complex(v0, &free, false);
    let geo = h0.geometry();
    let cut = 0.9 * h0.l as f64;
    let edge_mass: f64 = (0..n)
        .filter(|&i| geo.coords(i).iter().any(|&x| (x as f64).abs() > cut))
        .map(|i| psi[i].norm_sqr())
        .sum();
    Ok(WaveReport {
        times: times.to_vec(),
        increments,
        final_window_mass: if total > 0.0 { inside / total } else { 0.0 },
        converged_at,
        edge_mass,
        left_bulk: edge_mass > 1e-8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::QuadSpec;
    use crate::model::{FrequencyGrid, Potential, TorusModel};
    use crate::symbol::FractionalOrder;

    fn ord(r: f64) -> FractionalOrder {
        FractionalOrder::scalar(r).unwrap()
    }

    fn delta(n: usize, at: usize) -> Vec<Complex64> {
        let mut v = vec![ZERO; n];
        v[at] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn evolve_identity_and_unitarity() {
        let t = LatticeModel::Torus(TorusModel::new(ord(1.0), 64, FrequencyGrid::Plain).unwrap());
        let f = delta(64, 0);
        let s0 = evolve(&t, &f, 0.0).unwrap();
        assert!(s0.values.iter().zip(&f).all(|(a, b)| (a - b).norm() < 1e-15));
        let s = evolve(&t, &f, 7.3).unwrap();
        assert!((s.norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composition_dense() {
        let b = BoxModel::build(ord(0.6), 20, &QuadSpec::default()).unwrap();
        let w = Potential::delta(vec![0], 0.4);
        let m = LatticeModel::Box(b.with_potential(&w).unwrap());
        let p = Propagator::new(&m, 4096).unwrap();
        let f: Vec<Complex64> = (0..41).map(|i| Complex64::new((-(i as f64 - 20.0).powi(2) / 8.0).exp(), 0.0)).collect();
        let a = p.evolve(&p.evolve(&f, 1.3).unwrap(), 2.1).unwrap();
        let c = p.evolve(&f, 3.4).unwrap();
        assert!(a.iter().zip(&c).all(|(x, y)| (x - y).norm() < 1e-11));
    }

    #[test]
    fn box_matches_torus_in_bulk() {
        let f: Vec<Complex64> = (0..201).map(|i| Complex64::new((-(i as f64 - 100.0).powi(2) / 4.0).exp(), 0.0)).collect();
        let b = LatticeModel::Box(BoxModel::build(ord(1.0), 100, &QuadSpec::default()).unwrap());
        let t = LatticeModel::Torus(TorusModel::new(ord(1.0), 256, FrequencyGrid::Plain).unwrap());
        let mut ft = vec![ZERO; 256];
        for (i, v) in f.iter().enumerate() {
            ft[(i as i64 - 100).rem_euclid(256) as usize] = *v;
        }
        let sb = evolve(&b, &f, 5.0).unwrap();
        let st = evolve(&t, &ft, 5.0).unwrap();
        let diff: f64 = (0..201)
            .map(|i| (sb.values[i] - st.values[(i as i64 - 100).rem_euclid(256) as usize]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn chebyshev_converges() {
        let b = BoxModel::build(ord(1.0), 30, &QuadSpec::default()).unwrap();
        let f = delta(61, 30);
        let exact = Propagator::from_box(&b).evolve(&f, 4.0).unwrap();
        let err = |m: usize| {
            let c = chebyshev_evolve(&b, &f, 4.0, m).unwrap();
            c.values.iter().zip(&exact).map(|(a, x)| (a - x).norm_sqr()).sum::<f64>().sqrt()
        };
        assert!(err(0) > 0.1);
        assert!(err(60) < 1e-10);
        assert!(err(12) < err(8) && err(16) < err(12));
        let neg = BoxModel::build(ord(-1.0), 10, &QuadSpec::default()).unwrap();
        assert!(chebyshev_evolve(&neg, &delta(21, 10), 1.0, 10).is_err());
    }

    #[test]
    fn local_decay_outside_window_is_zero() {
        let t = LatticeModel::Torus(TorusModel::new(ord(1.0), 256, FrequencyGrid::Plain).unwrap());
        // plane wave at θ = π/8 has energy 2 − 2cos(π/8) ≈ 0.152, outside [1, 3]
        let f: Vec<Complex64> =
            (0..256).map(|i| Complex64::from_polar(1.0 / 16.0, std::f64::consts::PI / 8.0 * i as f64)).collect();
        let w = EnergyWindow::new(1.0, 3.0).unwrap();
        let r = local_decay_integral(&t, &f, &w, 0.0, 10.0, &DecayOptions::default()).unwrap();
        assert!(r.value < 1e-20);
    }

    #[test]
    fn ballistic_limits() {
        let b = BoxModel::build(ord(1.0), 60, &QuadSpec::default()).unwrap();
        let f = delta(121, 60);
        let w = EnergyWindow::new(1.0, 3.0).unwrap();
        let big = ballistic_average(&b, &f, &w, 1e3, &[5.0, 10.0], None).unwrap();
        assert!(big.averages[1] > 0.9);
        let small = ballistic_average(&b, &f, &w, 1e-4, &[5.0, 10.0], None).unwrap();
        assert!(small.averages[1] < 0.05);
    }

    #[test]
    fn wave_operator_free_is_static() {
        let b = BoxModel::build(ord(1.0), 40, &QuadSpec::default()).unwrap();
        let w = EnergyWindow::new(1.0, 3.0).unwrap();
        let rep = wave_operator_probe(&b, &b, &w, &delta(81, 40), &[0.0, 5.0, 10.0], 1e-4).unwrap();
        assert!(rep.increments.iter().all(|&x| x < 1e-12));
    }
}

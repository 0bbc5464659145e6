//! The Fourier symbol ϑ_r(θ) = Σ_j (2 − 2cos θ_j)^{r_j}, spectra, thresholds and poles.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector r ∈ R^d \ {0}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FractionalOrder {
    r: Vec<f64>,
}

impl TryFrom<Vec<f64>> for FractionalOrder {
    type Error = Error;
    fn try_from(r: Vec<f64>) -> Result<Self> {
        FractionalOrder::new(r)
    }
}

impl From<FractionalOrder> for Vec<f64> {
    fn from(o: FractionalOrder) -> Self {
        o.r
    }
}

impl FractionalOrder {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() {
            return Err(Error::invalid("order must have dimension d >= 1"));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("order components must be finite"));
        }
        if r.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroOrder);
        }
        Ok(FractionalOrder { r })
    }

    pub fn scalar(r: f64) -> Result<Self> {
        Self::new(vec![r])
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.r
    }

    pub fn positive_axes(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.r[j] > 0.0).collect()
    }

    pub fn negative_axes(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.r[j] < 0.0).collect()
    }

    pub fn zero_axes(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.r[j] == 0.0).collect()
    }

    pub fn has_negative(&self) -> bool {
        self.r.iter().any(|&x| x < 0.0)
    }
}

/// Extended real: finite or +∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(f64),
    PosInfinity,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(x) => Some(x),
            Extended::PosInfinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::PosInfinity)
    }

    fn add(self, other: Extended) -> Extended {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::PosInfinity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolValue {
    pub value: Extended,
    /// `None` on the polar set.
    pub gradient: Option<Vec<f64>>,
}

/// 2 − 2cos θ, evaluated as 4 sin²(θ/2) to keep accuracy near θ = 0.
#[inline]
pub fn base(theta: f64) -> f64 {
    let s = (0.5 * theta).sin();
    4.0 * s * s
}

/// One axis term (2 − 2cos θ)^r with the 0^0 = 1 convention.
#[inline]
pub fn axis_term(r: f64, theta: f64) -> Extended {
    if r == 0.0 {
        return Extended::Finite(1.0);
    }
    let b = base(theta);
    if b == 0.0 {
        if r > 0.0 {
            Extended::Finite(0.0)
        } else {
            Extended::PosInfinity
        }
    } else {
        Extended::Finite(b.powf(r))
    }
}

/// d/dθ (2 − 2cos θ)^r = 2 r sin θ (2 − 2cos θ)^{r−1}; zero where sin θ vanishes.
#[inline]
pub fn axis_derivative(r: f64, theta: f64) -> Option<f64> {
    if r == 0.0 {
        return Some(0.0);
    }
    let b = base(theta);
    if b == 0.0 {
        return if r > 0.0 { Some(0.0) } else { None };
    }
    let s = theta.sin();
    Some(2.0 * r * s * b.powf(r - 1.0))
}

pub fn eval_symbol(order: &FractionalOrder, theta: &[f64]) -> Result<SymbolValue> {
    if theta.len() != order.dim() {
        return Err(Error::invalid(format!(
            "theta has {} components, order has {}",
            theta.len(),
            order.dim()
        )));
    }
    if theta.iter().any(|t| !(-PI..=PI).contains(t)) {
        return Err(Error::invalid("theta components must lie in [-pi, pi]"));
    }
    let mut value = Extended::Finite(0.0);
    for (&r, &t) in order.r.iter().zip(theta) {
        value = value.add(axis_term(r, t));
    }
    let gradient = if value.is_infinite() {
        None
    } else {
        order
            .r
            .iter()
            .zip(theta)
            .map(|(&r, &t)| axis_derivative(r, t))
            .collect::<Option<Vec<f64>>>()
    };
    Ok(SymbolValue { value, gradient })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralInterval {
    pub lo: f64,
    /// `None` for an unbounded half-line.
    pub hi: Option<f64>,
}

impl SpectralInterval {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && self.hi.is_none_or(|h| x <= h)
    }

    /// Containment after inflating both ends by `slack`.
    pub fn contains_with(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && self.hi.is_none_or(|h| x <= h + slack)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    pub axes: Vec<SpectralInterval>,
    pub total: SpectralInterval,
}

pub fn axis_interval(r: f64) -> SpectralInterval {
    if r > 0.0 {
        SpectralInterval { lo: 0.0, hi: Some(4f64.powf(r)) }
    } else if r < 0.0 {
        SpectralInterval { lo: 4f64.powf(r), hi: None }
    } else {
        SpectralInterval { lo: 1.0, hi: Some(1.0) }
    }
}

pub fn spectrum_interval(order: &FractionalOrder) -> Spectrum {
    let axes: Vec<SpectralInterval> = order.r.iter().map(|&r| axis_interval(r)).collect();
    let lo = axes.iter().map(|a| a.lo).sum();
    let hi = axes.iter().map(|a| a.hi).sum::<Option<f64>>();
    Spectrum { axes, total: SpectralInterval { lo, hi } }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdSet {
    pub values: Vec<f64>,
}

impl ThresholdSet {
    /// Distance from the window [lo, hi] to the nearest threshold (0 if one lies inside).
    pub fn window_margin(&self, window: &EnergyWindow) -> f64 {
        self.values
            .iter()
            .map(|&t| {
                if t < window.lo {
                    window.lo - t
                } else if t > window.hi {
                    t - window.hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn distance(&self, x: f64) -> f64 {
        self.values.iter().map(|t| (t - x).abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn nearest(&self, x: f64) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
    }
}

pub fn threshold_set(order: &FractionalOrder) -> ThresholdSet {
    let base: f64 = order.negative_axes().iter().map(|&j| 4f64.powf(order.r[j])).sum::<f64>()
        + order.zero_axes().len() as f64;
    let p = order.positive_axes();
    let mut values = Vec::with_capacity(1 << p.len().min(20));
    for mask in 0u64..(1u64 << p.len()) {
        let mut v = base;
        for (bit, &j) in p.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                v += 4f64.powf(order.r[j]);
            }
        }
        values.push(v);
    }
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    ThresholdSet { values }
}

/// Compact energy interval I = [lo, hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("window [{lo}, {hi}] must satisfy lo < hi")));
        }
        Ok(EnergyWindow { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn bump(&self, x: f64) -> f64 {
        crate::special::bump(x, self.lo, self.hi)
    }

    /// Uniform grid of `n` points including both ends.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (self.lo + self.hi)];
        }
        (0..n).map(|i| self.lo + self.width() * i as f64 / (n - 1) as f64).collect()
    }

    /// Interior of the spectrum with positive distance to every finite threshold.
    pub fn is_interior(&self, order: &FractionalOrder) -> bool {
        let spec = spectrum_interval(order).total;
        let inside = self.lo > spec.lo && spec.hi.is_none_or(|h| self.hi < h);
        inside && threshold_set(order).window_margin(self) > 0.0
    }

    pub fn require_interior(&self, order: &FractionalOrder) -> Result<()> {
        let thr = threshold_set(order);
        if thr.window_margin(self) <= 0.0 {
            let mid = 0.5 * (self.lo + self.hi);
            let t = thr.nearest(mid).unwrap_or(mid);
            return Err(Error::ThresholdGuard { energy: t, threshold: t, guard: 0.0 });
        }
        if !self.is_interior(order) {
            return Err(Error::invalid(format!(
                "window [{}, {}] is not inside the spectrum interior",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub theta: Vec<f64>,
    pub value: Extended,
    /// Largest gradient component magnitude (0 on the polar set, where it is undefined).
    pub gradient_norm: f64,
}

pub fn critical_points(order: &FractionalOrder) -> Result<Vec<CriticalPoint>> {
    let d = order.dim();
    if d > 20 {
        return Err(Error::GridTooLarge(1 << d.min(60)));
    }
    let mut out = Vec::with_capacity(1 << d);
    for mask in 0u64..(1u64 << d) {
        let theta: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { PI } else { 0.0 }).collect();
        let v = eval_symbol(order, &theta)?;
        let gradient_norm = v
            .gradient
            .as_ref()
            .map(|g| g.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .unwrap_or(0.0);
        out.push(CriticalPoint { theta, value: v.value, gradient_norm });
    }
    Ok(out)
}

/// Pole orders α_j = −2 r_j for the negative axes, keyed by 0-based axis index.
pub fn pole_orders(order: &FractionalOrder) -> BTreeMap<usize, f64> {
    order.negative_axes().into_iter().map(|j| (j, -2.0 * order.r[j])).collect()
}

/// max over the grid of |(2−2cos θ)^{r_j} / |θ|^{2r_j} − 1| / θ².
pub fn pole_asymptotic_check(order: &FractionalOrder, axis: usize, thetas: &[f64]) -> Result<f64> {
    let r = *order
        .r
        .get(axis)
        .ok_or_else(|| Error::invalid(format!("axis {axis} out of range")))?;
    if r >= 0.0 {
        return Err(Error::invalid(format!("axis {axis} does not have negative order")));
    }
    let mut worst = 0.0f64;
    for &t in thetas {
        if t == 0.0 {
            return Err(Error::invalid("grid touches theta = 0"));
        }
        let ratio = (base(t) / (t * t)).powf(r);
        worst = worst.max((ratio - 1.0).abs() / (t * t));
    }
    Ok(worst)
}

/// Symbol samples on a tensor grid, row-major with the last axis fastest.
pub fn symbol_grid(order: &FractionalOrder, thetas: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, SymbolValue)>> {
    if thetas.len() != order.dim() {
        return Err(Error::invalid("one theta list per axis is required"));
    }
    let total = thetas.iter().try_fold(1usize, |acc, t| acc.checked_mul(t.len()));
    match total {
        Some(n) if n <= 100_000_000 => {}
        Some(n) => return Err(Error::GridTooLarge(n)),
        None => return Err(Error::GridTooLarge(usize::MAX)),
    }
    let n = total.unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; thetas.len()];
    for _ in 0..n {
        let theta: Vec<f64> = idx.iter().zip(thetas).map(|(&i, t)| t[i]).collect();
        let v = eval_symbol(order, &theta)?;
        out.push((theta, v));
        for j in (0..idx.len()).rev() {
            idx[j] += 1;
            if idx[j] < thetas[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(out)
}

/// Positive shell root θ* ∈ (0, π) of (2 − 2cos θ)^r = λ for a scalar order, refined by Newton.
pub fn shell_root(r: f64, lambda: f64) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::invalid("order 0 has no energy shell"));
    }
    let mu = lambda.powf(1.0 / r);
    if !(lambda > 0.0 && mu > 0.0 && mu < 4.0) {
        return Err(Error::invalid(format!("energy {lambda} is not interior to the axis spectrum")));
    }
    let mut t = (1.0 - 0.5 * mu).acos();
    for _ in 0..8 {
        let f = base(t).powf(r) - lambda;
        let df = match axis_derivative(r, t) {
            Some(d) if d != 0.0 => d,
            _ => break,
        };
        let step = f / df;
        t -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ord(r: &[f64]) -> FractionalOrder {
        FractionalOrder::new(r.to_vec()).unwrap()
    }

    #[test]
    fn rejects_zero_order() {
        assert!(matches!(FractionalOrder::new(vec![0.0, 0.0]), Err(Error::ZeroOrder)));
    }

    #[test]
    fn symbol_examples() {
        assert_eq!(eval_symbol(&ord(&[1.0]), &[0.0]).unwrap().value, Extended::Finite(0.0));
        let v = eval_symbol(&ord(&[1.0, 1.0]), &[PI, PI]).unwrap().value.finite().unwrap();
        assert!((v - 8.0).abs() < 1e-14);
        let v = eval_symbol(&ord(&[-1.0]), &[PI]).unwrap().value.finite().unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let v = eval_symbol(&ord(&[0.5]), &[PI / 2.0]).unwrap().value.finite().unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn polar_set_flagged() {
        let v = eval_symbol(&ord(&[1.0, -0.5]), &[0.3, 0.0]).unwrap();
        assert!(v.value.is_infinite());
        assert!(v.gradient.is_none());
    }

    #[test]
    fn zero_axis_contributes_one() {
        let v = eval_symbol(&ord(&[1.0, 0.0]), &[0.0, 0.0]).unwrap();
        assert_eq!(v.value, Extended::Finite(1.0));
    }

    #[test]
    fn spectra() {
        let s = spectrum_interval(&ord(&[1.0]));
        assert_eq!(s.total, SpectralInterval { lo: 0.0, hi: Some(4.0) });
        let s = spectrum_interval(&ord(&[2.0, 2.0]));
        assert_eq!(s.total, SpectralInterval { lo: 0.0, hi: Some(32.0) });
        let s = spectrum_interval(&ord(&[-1.0]));
        assert_eq!(s.total, SpectralInterval { lo: 0.25, hi: None });
    }

    #[test]
    fn thresholds() {
        assert_eq!(threshold_set(&ord(&[1.0, 1.0])).values, vec![0.0, 4.0, 8.0]);
        assert_eq!(threshold_set(&ord(&[1.0, -1.0])).values, vec![0.25, 4.25]);
        assert_eq!(threshold_set(&ord(&[0.5])).values, vec![0.0, 2.0]);
    }

    #[test]
    fn corners() {
        let c = critical_points(&ord(&[1.0])).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].value, Extended::Finite(0.0));
        assert!((c[1].value.finite().unwrap() - 4.0).abs() < 1e-15);
        let c = critical_points(&ord(&[-1.0])).unwrap();
        assert!(c[0].value.is_infinite());
        assert!((c[1].value.finite().unwrap() - 0.25).abs() < 1e-15);
        let mut v: Vec<f64> = critical_points(&ord(&[1.0, 1.0]))
            .unwrap()
            .iter()
            .map(|c| c.value.finite().unwrap())
            .collect();
        v.sort_by(f64::total_cmp);
        for (a, b) in v.iter().zip([0.0, 4.0, 4.0, 8.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        for c in critical_points(&ord(&[0.7, 1.3])).unwrap() {
            assert!(c.gradient_norm < 1e-12);
        }
    }

    #[test]
    fn poles() {
        assert_eq!(pole_orders(&ord(&[-1.0])), BTreeMap::from([(0, 2.0)]));
        assert!(pole_orders(&ord(&[2.0, 3.0])).is_empty());
        assert_eq!(pole_orders(&ord(&[0.5, -0.25])), BTreeMap::from([(1, 0.5)]));
    }

    #[test]
    fn pole_asymptotics() {
        // (θ²(1 − θ²/12))^{-1} / θ^{-2} − 1 ≈ θ²/12
        let res = pole_asymptotic_check(&ord(&[-1.0]), 0, &[1e-3]).unwrap();
        assert!((res - 1.0 / 12.0).abs() < 1e-6);
        let grid: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
        let res = pole_asymptotic_check(&ord(&[-0.5]), 0, &grid[..4]).unwrap();
        assert!((res - 1.0 / 24.0).abs() < 1e-3);
        assert!(pole_asymptotic_check(&ord(&[-1.0]), 0, &[PI / 2.0]).unwrap().is_finite());
        assert!(pole_asymptotic_check(&ord(&[-1.0]), 0, &[0.0]).is_err());
    }

    #[test]
    fn window_margin_and_interior() {
        let o = ord(&[1.0]);
        let w = EnergyWindow::new(1.0, 3.0).unwrap();
        assert_eq!(threshold_set(&o).window_margin(&w), 1.0);
        assert!(w.is_interior(&o));
        assert!(!EnergyWindow::new(3.9, 4.0).unwrap().is_interior(&o));
    }

    #[test]
    fn shell_roots() {
        assert!((shell_root(1.0, 2.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((shell_root(0.5, 1.0).unwrap() - PI / 3.0).abs() < 1e-14);
        let t = shell_root(-1.0, 0.5).unwrap();
        assert!((base(t).powf(-1.0) - 0.5).abs() < 1e-13);
    }
}

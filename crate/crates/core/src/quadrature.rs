//! Gauss–Legendre and Gauss–Jacobi rules on [−1, 1] and composite panel helpers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::special::ln_gamma;

#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// n-point Gauss–Legendre rule by Newton iteration on P_n.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_eval(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_eval(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// n-point Gauss–Jacobi rule for the weight (1 − x)^α (1 + x)^β, via Golub–Welsch.
    pub fn jacobi(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        if n == 0 || alpha <= -1.0 || beta <= -1.0 {
            return Err(Error::invalid(format!(
                "Gauss-Jacobi needs n >= 1 and alpha, beta > -1 (got {n}, {alpha}, {beta})"
            )));
        }
        let ab = alpha + beta;
        let mut t = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let diag = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            t[(k, k)] = diag;
            if k + 1 < n {
                let j = kf + 1.0;
                let num = 4.0 * j * (j + alpha) * (j + beta) * (j + ab);
                let den = (2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0);
                let off = (num / den).sqrt();
                t[(k, k + 1)] = off;
                t[(k + 1, k)] = off;
            }
        }
        let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
        let eig = t.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(GaussRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Breakpoints of panels on [a, b] geometrically graded toward `a` down to width `min_width`,
/// then uniform panels of width at most `max_width`.
pub fn graded_breakpoints(a: f64, b: f64, min_width: f64, max_width: f64) -> Vec<f64> {
    let mut pts = vec![a];
    let mut w = min_width.min(max_width).max(f64::MIN_POSITIVE);
    let mut x = a;
    while w < max_width && x + w < b {
        x += w;
        pts.push(x);
        w *= 2.0;
    }
    let rest = b - x;
    if rest > 0.0 {
        let m = (rest / max_width).ceil().max(1.0) as usize;
        for i in 1..=m {
            pts.push(x + rest * i as f64 / m as f64);
        }
    }
    *pts.last_mut().unwrap() = b;
    pts
}

/// Same grading but toward the right endpoint `b`.
pub fn graded_breakpoints_right(a: f64, b: f64, min_width: f64, max_width: f64) -> Vec<f64> {
    let left = graded_breakpoints(0.0, b - a, min_width, max_width);
    let mut pts: Vec<f64> = left.iter().rev().map(|x| b - x).collect();
    pts[0] = a;
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_exact_for_polynomials() {
        let g = GaussRule::legendre(10);
        let v = g.integrate(0.0, 2.0, |x| x.powi(19));
        assert!((v - 2f64.powi(20) / 20.0).abs() < 1e-9 * v);
        assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_moments() {
        // ∫_{-1}^{1} (1+x)^β x^2 dx against closed form
        let beta = -0.4;
        let g = GaussRule::jacobi(12, 0.0, beta).unwrap();
        let v: f64 = g.nodes.iter().zip(&g.weights).map(|(x, w)| w * x * x).sum();
        // substitute y = 1 + x: ∫_0^2 y^β (y−1)^2 dy
        let m = |p: f64| 2f64.powf(p + 1.0) / (p + 1.0);
        let exact = m(beta + 2.0) - 2.0 * m(beta + 1.0) + m(beta);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn jacobi_reduces_to_legendre() {
        let j = GaussRule::jacobi(8, 0.0, 0.0).unwrap();
        let l = GaussRule::legendre(8);
        for (a, b) in j.nodes.iter().zip(&l.nodes) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in j.weights.iter().zip(&l.weights) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn grading_covers_interval() {
        let p = graded_breakpoints(0.0, 3.0, 1e-6, 0.25);
        assert_eq!(p[0], 0.0);
        assert_eq!(*p.last().unwrap(), 3.0);
        assert!(p.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.25 + 1e-12));
        let q = graded_breakpoints_right(1.0, 3.0, 1e-6, 0.25);
        assert_eq!(q[0], 1.0);
        assert_eq!(*q.last().unwrap(), 3.0);
        assert!(q.windows(2).all(|w| w[1] > w[0]));
    }
}

//! Multi-dimensional DFT on an N^d torus with optional half-integer frequency shift.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct TorusFft {
    n: usize,
    d: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// e^{−iπ m/N} per coordinate for the half-integer grid.
    twist: Option<Vec<Complex64>>,
}

impl TorusFft {
    pub fn new(n: usize, d: usize, half_integer: bool) -> Self {
        let mut planner = FftPlanner::new();
        let twist = half_integer.then(|| (0..n).map(|m| Complex64::from_polar(1.0, -PI * m as f64 / n as f64)).collect());
        TorusFft { n, d, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n), twist }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply_twist(&self, buf: &mut [Complex64], conj: bool) {
        let Some(tw) = &self.twist else { return };
        for (idx, v) in buf.iter_mut().enumerate() {
            let mut rest = idx;
            let mut f = Complex64::new(1.0, 0.0);
            for _ in 0..self.d {
                f *= tw[rest % self.n];
                rest /= self.n;
            }
            *v *= if conj { f.conj() } else { f };
        }
    }

    fn along_axes(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        if self.d == 1 {
            plan.process(buf);
            return;
        }
        let n = self.n;
        let total = buf.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.d {
            let stride = n.pow((self.d - 1 - axis) as u32);
            for base in 0..total {
                if !(base / stride).is_multiple_of(n) {
                    continue;
                }
                for (i, l) in line.iter_mut().enumerate() {
                    *l = buf[base + i * stride];
                }
                plan.process(&mut line);
                for (i, l) in line.iter().enumerate() {
                    buf[base + i * stride] = *l;
                }
            }
        }
    }

    /// f̂(θ_k) = Σ_m f(m) e^{−iθ_k·m}.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.apply_twist(buf, false);
        self.along_axes(buf, &self.fwd);
    }

    /// Inverse of [`forward`], including the 1/N^d normalisation.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.along_axes(buf, &self.inv);
        let s = 1.0 / buf.len() as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
        self.apply_twist(buf, true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d_half() {
        let f = TorusFft::new(6, 2, true);
        let orig: Vec<Complex64> = (0..36).map(|i| Complex64::new(i as f64, (i * i % 7) as f64)).collect();
        let mut b = orig.clone();
        f.forward(&mut b);
        f.inverse(&mut b);
        for (a, c) in orig.iter().zip(&b) {
            assert!((a - c).norm() < 1e-12);
        }
    }

    #[test]
    fn half_grid_frequencies() {
        let n = 8;
        let f = TorusFft::new(n, 1, true);
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        b[1] = Complex64::new(1.0, 0.0);
        f.forward(&mut b);
        for (k, v) in b.iter().enumerate() {
            let th = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            assert!((v - Complex64::from_polar(1.0, -th)).norm() < 1e-14);
        }
    }
}

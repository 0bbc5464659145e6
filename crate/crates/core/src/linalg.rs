//! Dense eigensolves and power-iteration norms.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Ascending eigenvalues and (optionally) the matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

impl Eigen {
    pub fn vectors(&self) -> Result<&DMatrix<f64>> {
        self.vectors.as_ref().ok_or_else(|| Error::invalid("eigenvectors were not requested"))
    }

    /// Indices of eigenvalues inside [lo, hi].
    pub fn indices_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] >= lo && self.values[i] <= hi).collect()
    }

    /// V diag(g(λ)) Vᵀ.
    pub fn function(&self, g: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        let v = self.vectors()?;
        let mut scaled = v.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let s = g(l);
            scaled.column_mut(j).scale_mut(s);
        }
        Ok(&scaled * v.transpose())
    }
}

pub fn sym_eigen(m: DMatrix<f64>, vectors: bool) -> Eigen {
    if !vectors {
        let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        return Eigen { values, vectors: None };
    }
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    Eigen { values, vectors: Some(vecs) }
}

/// Largest singular value of M by power iteration on M*M, from `start` or a fixed vector with
/// components on every site.
pub fn power_norm<F, G>(
    n: usize,
    apply: F,
    apply_adj: G,
    start: Option<&[Complex64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
    G: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let mut x: Vec<Complex64> = match start {
        Some(s) if s.len() == n && norm(s) > 0.0 => s.to_vec(),
        Some(_) => return Err(Error::invalid("power iteration start vector is empty or has the wrong length")),
        None => (0..n)
            .map(|i| {
                let t = i as f64 * 0.618_033_988_749_894_9;
                Complex64::new(1.0 + 0.5 * (t * std::f64::consts::TAU).sin(), 0.25 * (t * 3.7).cos())
            })
            .collect(),
    };
    normalize(&mut x);
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let y = apply(&x)?;
        let z = apply_adj(&y)?;
        let s2 = norm(&z);
        if s2 == 0.0 {
            return Ok(0.0);
        }
        let next = s2.sqrt();
        x = z;
        normalize(&mut x);
        if (next - sigma).abs() <= rel_tol * next {
            return Ok(next);
        }
        sigma = next;
    }
    Ok(sigma)
}

/// Spectral norm of a real symmetric matrix by power iteration on M².
pub fn sym_norm(m: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.3 * ((i as f64) * 0.754_877_666).sin());
    x /= x.norm();
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let z = m * (m * &x);
        let s2 = z.norm();
        if s2 == 0.0 {
            return 0.0;
        }
        let next = s2.sqrt();
        x = z / s2;
        if (next - sigma).abs() <= rel_tol * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalize(x: &mut [Complex64]) {
    let n = norm(x);
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_orthonormal() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = sym_eigen(m.clone(), true);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let v = e.vectors.unwrap();
        let id = v.transpose() * &v;
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert!((e.values[0] - (2.0 - 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn power_norm_diagonal() {
        let d = [1.0, 3.0, 2.0];
        let apply = |x: &[Complex64]| Ok(x.iter().zip(&d).map(|(v, s)| v * s).collect());
        let n = power_norm(3, apply, apply, None, 1e-12, 500).unwrap();
        assert!((n - 3.0).abs() < 1e-9);
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-4.0, 1.0]));
        assert!((sym_norm(&m, 1e-12, 500) - 4.0).abs() < 1e-9);
    }
}

//! Conjugate operator A on the box, commutator forms and identities, Mourre constants.
//!
//! A = (i/2) Σ_j sign(r_j) (U_j(Q_j + ½) − (Q_j + ½)U_j*) with (U_j f)(n) = f(n − e_j). A is stored
//! through the real antisymmetric G with A = iG, so that i[H, A] = GH − HG is real symmetric.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, sym_norm, Eigen};
use crate::model::{BoxModel, Geometry};
use crate::symbol::{threshold_set, EnergyWindow, FractionalOrder};

#[derive(Clone, Debug)]
pub struct ConjugateOperator {
    pub signs: Vec<f64>,
    pub geometry: Geometry,
    /// Real antisymmetric G with A = iG.
    pub generator: DMatrix<f64>,
}

pub fn build_conjugate(order: &FractionalOrder, geometry: Geometry) -> ConjugateOperator {
    let signs: Vec<f64> = order.components().iter().map(|&r| r.signum() * (r != 0.0) as u8 as f64).collect();
    let size = geometry.len();
    let mut g = DMatrix::<f64>::zeros(size, size);
    for idx in 0..size {
        let n = geometry.coords(idx);
        for (j, &s) in signs.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let mut m = n.clone();
            m[j] -= 1;
            if let Some(jdx) = geometry.index(&m) {
                // (U(Q+½)f)(n) = (n_j − ½) f(n − e_j), and its negative transpose
                let v = 0.5 * s * (n[j] as f64 - 0.5);
                g[(idx, jdx)] += v;
                g[(jdx, idx)] -= v;
            }
        }
    }
    ConjugateOperator { signs, geometry, generator: g }
}

impl ConjugateOperator {
    pub fn for_box(h: &BoxModel) -> Self {
        build_conjugate(&h.order, h.geometry())
    }

    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = f.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, fj) in f.iter().enumerate() {
                let gij = self.generator[(i, j)];
                if gij != 0.0 {
                    acc += gij * fj;
                }
            }
            out[i] = Complex64::new(0.0, 1.0) * acc;
        }
        out
    }

    /// Complex Hermitian matrix of A.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        self.generator.map(|x| Complex64::new(0.0, x))
    }

    /// max |A − A*| entrywise (A = iG is Hermitian iff G is antisymmetric).
    pub fn hermiticity_residual(&self) -> f64 {
        (&self.generator + self.generator.transpose()).amax()
    }

    /// i[H, A] = GH − HG.
    pub fn commutator(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        &self.generator * h - h * &self.generator
    }

    /// Real symmetric J unitarily equivalent to A: A = D J D* with D = diag(i^{Σ_j n_j}).
    pub fn real_form(&self) -> DMatrix<f64> {
        let n = self.geometry.len();
        let parity: Vec<i64> = (0..n).map(|i| self.geometry.coords(i).iter().sum()).collect();
        DMatrix::from_fn(n, n, |a, b| {
            let g = self.generator[(a, b)];
            if g == 0.0 {
                0.0
            } else if parity[a] > parity[b] {
                // (D*AD)_{ab} = i^{−p_a} i G_{ab} i^{p_b} with p_b = p_a − 1
                g
            } else {
                -g
            }
        })
    }

    /// Phases i^{Σ_j n_j} of the diagonal similarity D.
    pub fn phases(&self) -> Vec<Complex64> {
        (0..self.geometry.len())
            .map(|i| {
                let p: i64 = self.geometry.coords(i).iter().sum();
                match p.rem_euclid(4) {
                    0 => Complex64::new(1.0, 0.0),
                    1 => Complex64::new(0.0, 1.0),
                    2 => Complex64::new(-1.0, 0.0),
                    _ => Complex64::new(0.0, -1.0),
                }
            })
            .collect()
    }

    /// Eigen-decomposition of A through the real form: A-eigenvectors are D u.
    pub fn eigen(&self) -> Eigen {
        sym_eigen(self.real_form(), true)
    }
}

/// ⟨f, [B, iA] g⟩ = ⟨f, (GB − BG) g⟩.
pub fn commutator_form(b: &DMatrix<f64>, a: &ConjugateOperator, f: &[Complex64], g: &[Complex64]) -> Complex64 {
    let mv = |m: &DMatrix<f64>, v: &[Complex64]| -> Vec<Complex64> {
        (0..m.nrows())
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, vj) in v.iter().enumerate() {
                    let x = m[(i, j)];
                    if x != 0.0 {
                        acc += x * vj;
                    }
                }
                acc
            })
            .collect()
    };
    let gbg = mv(&a.generator, &mv(b, g));
    let bgg = mv(b, &mv(&a.generator, g));
    f.iter().zip(gbg.iter().zip(&bgg)).map(|(fi, (x, y))| fi.conj() * (x - y)).sum()
}

/// F(λ) = (|r|/2) λ (4 − λ^{1/r}): the function of H₀ equal to i[Δ^r, A] in d = 1.
pub fn first_commutator_symbol(r: f64, lambda: f64) -> f64 {
    0.5 * r.abs() * lambda * (4.0 - lambda.powf(1.0 / r))
}

/// |r| (4 − μ) μ^{r−1}, μ = λ^{1/r}: the published form, kept as a diagnostic.
pub fn first_commutator_symbol_literal(r: f64, lambda: f64) -> f64 {
    let mu = lambda.powf(1.0 / r);
    r.abs() * (4.0 - mu) * mu.powf(r - 1.0)
}

/// g̃(λ) = ¼ r(r−1) λ (4−μ)² + ½ r λ (2−μ)(4−μ), μ = λ^{1/r}.
pub fn second_commutator_symbol(r: f64, lambda: f64) -> f64 {
    let mu = lambda.powf(1.0 / r);
    0.25 * r * (r - 1.0) * lambda * (4.0 - mu).powi(2) + 0.5 * r * lambda * (2.0 - mu) * (4.0 - mu)
}

/// g_r(μ) = r(r−1) μ^{r−2}(4−μ)² − r μ^{r−1}(4−μ): the published form, kept as a diagnostic.
pub fn second_commutator_symbol_literal(r: f64, lambda: f64) -> f64 {
    let mu = lambda.powf(1.0 / r);
    r * (r - 1.0) * mu.powf(r - 2.0) * (4.0 - mu).powi(2) - r * mu.powf(r - 1.0) * (4.0 - mu)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutatorOptions {
    /// Spatial cutoff χ is a bump on |n| < cutoff·L.
    pub cutoff: f64,
    /// Mass threshold outside which a report is marked edge-contaminated.
    pub bulk_threshold: f64,
    /// C in tol(L) = C·(tail_bound + boundary mass).
    pub tol_factor: f64,
}

impl Default for CommutatorOptions {
    fn default() -> Self {
        CommutatorOptions { cutoff: 0.75, bulk_threshold: 1e-6, tol_factor: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub window: EnergyWindow,
    pub l: usize,
    /// ‖χ φ(H)(C − F(H))φ(H) χ‖ against the verified identity.
    pub identity_residual: f64,
    /// Same quantity against the published formula.
    pub literal_residual: f64,
    /// Frobenius-mass fraction of φ(H)χ in the outer eighth of the box.
    pub boundary_mass: f64,
    pub edge_contaminated: bool,
    pub tolerance: f64,
}

fn scalar_order(order: &FractionalOrder) -> Result<f64> {
    if order.dim() != 1 {
        return Err(Error::invalid("commutator identities are checked for d = 1"));
    }
    Ok(order.components()[0])
}

fn check_window(r: f64, window: &EnergyWindow) -> Result<()> {
    let order = FractionalOrder::scalar(r)?;
    let thr = threshold_set(&order);
    if thr.window_margin(window) <= 0.0 {
        let t = thr.nearest(0.5 * (window.lo + window.hi)).unwrap_or(window.lo);
        return Err(Error::ThresholdGuard { energy: t, threshold: t, guard: 0.0 });
    }
    if !window.is_interior(&order) {
        return Err(Error::invalid("window must lie inside the spectrum interior"));
    }
    Ok(())
}

fn localized_residual(
    h: &BoxModel,
    eig: &Eigen,
    comm: &DMatrix<f64>,
    window: &EnergyWindow,
    targets: &[&dyn Fn(f64) -> f64],
    opts: &CommutatorOptions,
) -> Result<(Vec<f64>, f64)> {
    let v = eig.vectors()?;
    let g = h.geometry();
    let n = g.len();
    let l = h.l as f64;
    let chi: Vec<f64> = (0..n)
        .map(|i| {
            let c = g.coords(i);
            c.iter().map(|&x| crate::special::bump(x as f64, -opts.cutoff * l, opts.cutoff * l)).product()
        })
        .collect();
    let phi: Vec<f64> = eig.values.iter().map(|&x| window.bump(x)).collect();
    let active: Vec<usize> = (0..phi.len()).filter(|&i| phi[i] != 0.0).collect();
    // columns of V restricted to the window support, scaled by φ
    let mut vp = DMatrix::<f64>::zeros(n, active.len());
    for (c, &i) in active.iter().enumerate() {
        vp.set_column(c, &(v.column(i) * phi[i]));
    }
    let vsub = DMatrix::from_fn(n, active.len(), |r, c| v[(r, active[c])]);
    // P C P = V_φ (V_φᵀ C V_φ) V_φᵀ
    let inner = vp.transpose() * comm * &vp;
    let mut out = Vec::with_capacity(targets.len());
    for f in targets {
        let mut diff = inner.clone();
        for (c, &i) in active.iter().enumerate() {
            diff[(c, c)] -= phi[i] * phi[i] * f(eig.values[i]);
        }
        // ‖X V_sub diff V_subᵀ X‖ = ‖(XV_sub) diff (XV_sub)ᵀ‖
        let mut xv = vsub.clone();
        for r in 0..n {
            xv.row_mut(r).scale_mut(chi[r]);
        }
        let m = &xv * diff * xv.transpose();
        out.push(sym_norm(&((&m + m.transpose()) * 0.5), 1e-10, 2000));
    }
    // boundary mass of φ(H)χ
    let mut pchi = &vp * vsub.transpose();
    for c in 0..n {
        pchi.column_mut(c).scale_mut(chi[c]);
    }
    let edge = l - l / 8.0;
    let mut total = 0.0;
    let mut outside = 0.0;
    for r in 0..n {
        let far = g.coords(r).iter().any(|&x| (x as f64).abs() > edge);
        let s: f64 = pchi.row(r).iter().map(|x| x * x).sum();
        total += s;
        if far {
            outside += s;
        }
    }
    Ok((out, if total > 0.0 { outside / total } else { 0.0 }))
}

/// ‖χ φ_I(H₀)(i[Δ^r, A] − F(H₀)) φ_I(H₀) χ‖ on the box (d = 1).
pub fn first_commutator_residual(h0: &BoxModel, window: &EnergyWindow, opts: &CommutatorOptions) -> Result<CommutatorReport> {
    let r = scalar_order(&h0.order)?;
    check_window(r, window)?;
    let a = ConjugateOperator::for_box(h0);
    let comm = a.commutator(&h0.matrix);
    let eig = sym_eigen(h0.matrix.clone(), true);
    let f = move |x: f64| first_commutator_symbol(r, x);
    let fl = move |x: f64| first_commutator_symbol_literal(r, x);
    let (res, boundary) = localized_residual(h0, &eig, &comm, window, &[&f, &fl], opts)?;
    Ok(report(h0, window, res, boundary, opts))
}

/// Same with the double commutator [[Δ^r, iA], iA] against g̃(H₀).
pub fn second_commutator_residual(h0: &BoxModel, window: &EnergyWindow, opts: &CommutatorOptions) -> Result<CommutatorReport> {
    let r = scalar_order(&h0.order)?;
    check_window(r, window)?;
    let a = ConjugateOperator::for_box(h0);
    let c1 = a.commutator(&h0.matrix);
    let c2 = a.commutator(&c1);
    let eig = sym_eigen(h0.matrix.clone(), true);
    let f = move |x: f64| second_commutator_symbol(r, x);
    let fl = move |x: f64| second_commutator_symbol_literal(r, x);
    let (res, boundary) = localized_residual(h0, &eig, &c2, window, &[&f, &fl], opts)?;
    Ok(report(h0, window, res, boundary, opts))
}

fn report(h0: &BoxModel, window: &EnergyWindow, res: Vec<f64>, boundary: f64, opts: &CommutatorOptions) -> CommutatorReport {
    let tail = h0.tail_bound.iter().map(|t| t.unwrap_or(0.0)).sum::<f64>();
    CommutatorReport {
        window: *window,
        l: h0.l,
        identity_residual: res[0],
        literal_residual: res[1],
        boundary_mass: boundary,
        edge_contaminated: boundary > opts.bulk_threshold,
        tolerance: opts.tol_factor * (tail + boundary),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MourreReport {
    pub window: EnergyWindow,
    pub l: usize,
    pub c_observed: f64,
    /// min_{λ∈I} F(λ) for d = 1.
    pub c_predicted: Option<f64>,
    pub spectral_dim: usize,
    pub kept: usize,
    pub discarded: usize,
    /// Negative eigenvalues of the compressed commutator (compact defect).
    pub defect_rank: usize,
    pub defect_norm: f64,
    pub compressed_spectrum: Vec<f64>,
}

/// Smallest eigenvalue of i[H, A] compressed to the bulk-concentrated subspace of Ran E_I(H).
pub fn mourre_constant(h: &BoxModel, window: &EnergyWindow, bulk_threshold: f64) -> Result<MourreReport> {
    let a = ConjugateOperator::for_box(h);
    let comm = a.commutator(&h.matrix);
    let eig = sym_eigen(h.matrix.clone(), true);
    let v = eig.vectors()?;
    let idx = eig.indices_in(window.lo, window.hi);
    let n = h.sites();
    let e = DMatrix::from_fn(n, idx.len(), |r, c| v[(r, idx[c])]);
    let mask = h.geometry().bulk_mask(h.l as f64 / 2.0);
    let mut me = e.clone();
    for r in 0..n {
        if !mask[r] {
            me.row_mut(r).fill(0.0);
        }
    }
    let conc = sym_eigen(e.transpose() * &me, true);
    let keep: Vec<usize> = (0..conc.values.len()).filter(|&i| conc.values[i] >= 1.0 - bulk_threshold).collect();
    if keep.is_empty() {
        return Err(Error::EmptyBulkSubspace(window.lo, window.hi));
    }
    let u = conc.vectors()?;
    let uk = DMatrix::from_fn(idx.len(), keep.len(), |r, c| u[(r, keep[c])]);
    let y = &e * uk;
    let k = y.transpose() * &comm * &y;
    let k = (&k + k.transpose()) * 0.5;
    let ks = sym_eigen(k, false).values;
    let negatives: Vec<f64> = ks.iter().copied().filter(|&x| x < 0.0).collect();
    let c_predicted = if h.d() == 1 {
        let r = h.order.components()[0];
        let grid = window.grid(2001);
        Some(grid.iter().map(|&x| first_commutator_symbol(r, x)).fold(f64::INFINITY, f64::min))
    } else {
        None
    };
    Ok(MourreReport {
        window: *window,
        l: h.l,
        c_observed: ks[0],
        c_predicted,
        spectral_dim: idx.len(),
        kept: keep.len(),
        discarded: idx.len() - keep.len(),
        defect_rank: negatives.len(),
        defect_norm: negatives.iter().fold(0.0f64, |m, x| m.max(-x)),
        compressed_spectrum: ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::QuadSpec;

    fn box1(r: f64, l: usize) -> BoxModel {
        BoxModel::build(FractionalOrder::scalar(r).unwrap(), l, &QuadSpec::default()).unwrap()
    }

    #[test]
    fn generator_structure() {
        let h = box1(1.0, 5);
        let a = ConjugateOperator::for_box(&h);
        assert_eq!(a.hermiticity_residual(), 0.0);
        let mut d0 = vec![Complex64::new(0.0, 0.0); 11];
        d0[5] = Complex64::new(1.0, 0.0);
        let ad = a.apply(&d0);
        let nz: Vec<usize> = (0..11).filter(|&i| ad[i].norm() > 0.0).collect();
        assert_eq!(nz, vec![4, 6]);
        assert!((ad[6] - Complex64::new(0.0, 0.25)).norm() < 1e-15);
        assert!((ad[4] - Complex64::new(0.0, 0.25)).norm() < 1e-15);
        let neg = ConjugateOperator::for_box(&box1(-1.0, 5));
        assert_eq!((&neg.generator + &a.generator).amax(), 0.0);
    }

    #[test]
    fn a_grows_on_constants() {
        let h = box1(1.0, 20);
        let a = ConjugateOperator::for_box(&h);
        let ones = vec![Complex64::new(1.0, 0.0); 41];
        let af = a.apply(&ones);
        assert!((af[20] - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((af[0].norm() - 9.75).abs() < 1e-12);
        assert!((af[40].norm() - 9.75).abs() < 1e-12);
    }

    #[test]
    fn real_form_is_equivalent() {
        let h = box1(1.0, 4);
        let a = ConjugateOperator::for_box(&h);
        let j = a.real_form();
        assert_eq!((&j - j.transpose()).amax(), 0.0);
        let d = a.phases();
        let am = a.matrix();
        for r in 0..9 {
            for c in 0..9 {
                let back = d[r] * j[(r, c)] * d[c].conj();
                assert!((back - am[(r, c)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn form_identity_and_locality() {
        let h = box1(1.0, 60);
        let a = ConjugateOperator::for_box(&h);
        let n = h.sites();
        let f: Vec<Complex64> = (0..n).map(|i| {
            let x = i as f64 - 60.0;
            Complex64::new((-x * x / 50.0).exp(), 0.0)
        }).collect();
        let id = DMatrix::<f64>::identity(n, n);
        assert!(commutator_form(&id, &a, &f, &f).norm() < 1e-14);
        // ⟨f, ½Δ(4 − Δ) f⟩
        let d = &h.matrix;
        let target = d * (DMatrix::<f64>::identity(n, n) * 4.0 - d) * 0.5;
        let q = commutator_form(d, &a, &f, &f);
        let exact = commutator_form(&DMatrix::zeros(n, n), &a, &f, &f)
            + f.iter().enumerate().map(|(i, fi)| fi.conj() * (0..n).map(|j| target[(i, j)] * f[j]).sum::<Complex64>()).sum::<Complex64>();
        assert!((q - exact).norm() < 1e-12, "{q} vs {exact}");
        let g: Vec<Complex64> = (0..n).map(|i| Complex64::new(((i * 7) % 5) as f64, (i % 3) as f64)).collect();
        let qfg = commutator_form(d, &a, &f, &g);
        let qgf = commutator_form(d, &a, &g, &f);
        assert!((qfg - qgf.conj()).norm() < 1e-10);
        // far apart supports
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        let mut w = u.clone();
        u[10] = Complex64::new(1.0, 0.0);
        w[100] = Complex64::new(1.0, 0.0);
        assert_eq!(commutator_form(d, &a, &u, &w).norm(), 0.0);
    }

    #[test]
    fn identity_exact_at_r1_interior() {
        let h = box1(1.0, 40);
        let rep = first_commutator_residual(&h, &EnergyWindow::new(1.0, 3.0).unwrap(), &CommutatorOptions::default()).unwrap();
        assert!(rep.identity_residual < 0.05);
        assert!(rep.literal_residual > 0.1);
    }

    #[test]
    fn window_at_threshold_rejected() {
        let h = box1(1.0, 10);
        let w = EnergyWindow::new(3.5, 4.0).unwrap();
        assert!(first_commutator_residual(&h, &w, &CommutatorOptions::default()).is_err());
    }

    #[test]
    fn mourre_r1() {
        let h = box1(1.0, 60);
        let rep = mourre_constant(&h, &EnergyWindow::new(1.0, 3.0).unwrap(), 1e-6).unwrap();
        assert!(rep.c_observed > 0.9);
        assert!((rep.c_predicted.unwrap() - 1.5).abs() < 1e-6);
        assert_eq!(rep.defect_rank, 0);
    }
}

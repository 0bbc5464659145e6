use fraclap::dynamics::Propagator;
use fraclap::kernel::{kernel_coeff, QuadSpec};
use fraclap::linalg::{norm, sym_eigen};
use fraclap::model::*;
use fraclap::resolvent::*;
use fraclap::symbol::{eval_symbol, EnergyWindow, FractionalOrder};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn cvec(re: &[f64], im: &[f64]) -> Vec<Complex64> {
    re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect()
}

fn dense_apply(m: &DMatrix<f64>, f: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f[j] * m[(i, j)]).sum()).collect()
}

fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn order() -> impl Strategy<Value = f64> {
    prop_oneof![-2.0..-0.1f64, 0.1..2.5f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symbol_is_even(r1 in order(), r2 in order(), t1 in 0.05..3.1f64, t2 in 0.05..3.1f64) {
        let o = FractionalOrder::new(vec![r1, r2]).unwrap();
        let a = eval_symbol(&o, &[t1, t2]).unwrap().value.finite().unwrap();
        let b = eval_symbol(&o, &[-t1, t2]).unwrap().value.finite().unwrap();
        let c = eval_symbol(&o, &[t1, -t2]).unwrap().value.finite().unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_difference_quotient(r in order(), t in 0.1..3.0f64) {
        let o = FractionalOrder::scalar(r).unwrap();
        let g = eval_symbol(&o, &[t]).unwrap().gradient.unwrap()[0];
        let h = 1e-6;
        let f = |x: f64| eval_symbol(&o, &[x]).unwrap().value.finite().unwrap();
        let fd = (f(t + h) - f(t - h)) / (2.0 * h);
        prop_assert!((g - fd).abs() <= 1e-5 * g.abs().max(1.0), "{} vs {}", g, fd);
    }

    #[test]
    fn kernel_is_even(r in 0.1..1.9f64, k in 1i64..60) {
        let q = QuadSpec::default();
        let (a, _) = kernel_coeff(r, k, &q).unwrap();
        let (b, _) = kernel_coeff(r, -k, &q).unwrap();
        prop_assert!((a - b).abs() <= 1e-14);
    }

    #[test]
    fn torus_evolution_is_unitary(r in order(), t in -50.0..50.0f64,
                                  re in prop::collection::vec(-1.0..1.0f64, 64),
                                  im in prop::collection::vec(-1.0..1.0f64, 64)) {
        let m = LatticeModel::Torus(TorusModel::new(FractionalOrder::scalar(r).unwrap(), 64, FrequencyGrid::HalfInteger).unwrap());
        let f = cvec(&re, &im);
        let p = Propagator::new(&m, 4096).unwrap();
        let g = p.evolve(&f, t).unwrap();
        prop_assert!((norm(&g) - norm(&f)).abs() <= 1e-12 * norm(&f));
        let back = p.evolve(&g, -t).unwrap();
        prop_assert!(dist(&back, &f) <= 1e-11 * norm(&f));
    }

    #[test]
    fn box_evolution_conserves_energy_and_spectral_mass(r in 0.2..2.0f64, w0 in -1.0..1.0f64, t in 0.0..30.0f64,
                                  re in prop::collection::vec(-1.0..1.0f64, 41),
                                  im in prop::collection::vec(-1.0..1.0f64, 41)) {
        let b = BoxModel::build(FractionalOrder::scalar(r).unwrap(), 20, &QuadSpec::default()).unwrap();
        let b = b.with_potential(&Potential::delta(vec![0], w0)).unwrap();
        let f = cvec(&re, &im);
        let p = Propagator::from_box(&b);
        let g = p.evolve(&f, t).unwrap();
        let energy = |v: &[Complex64]| -> f64 {
            let hv = dense_apply(&b.matrix, v);
            v.iter().zip(&hv).map(|(a, x)| (a.conj() * x).re).sum()
        };
        prop_assert!((energy(&g) - energy(&f)).abs() <= 1e-10 * energy(&f).abs().max(1.0));
        let e = sym_eigen(b.matrix.clone(), true);
        let v = e.vectors().unwrap();
        let mass = |x: &[Complex64]| -> f64 {
            e.indices_in(1.0, 3.0).iter().map(|&j| (0..41).map(|i| x[i] * v[(i, j)]).sum::<Complex64>().norm_sqr()).sum()
        };
        prop_assert!((mass(&g) - mass(&f)).abs() <= 1e-10 * norm(&f).powi(2));
    }

    #[test]
    fn first_resolvent_identity(r in 0.2..2.0f64, w0 in -1.0..1.0f64,
                                x1 in -1.0..5.0f64, y1 in 0.1..2.0f64, x2 in -1.0..5.0f64, y2 in -2.0..-0.1f64,
                                re in prop::collection::vec(-1.0..1.0f64, 41),
                                im in prop::collection::vec(-1.0..1.0f64, 41)) {
        let o = FractionalOrder::scalar(r).unwrap();
        let w = Potential::delta(vec![0], w0);
        let z1 = Complex64::new(x1, y1);
        let z2 = Complex64::new(x2, y2);
        let torus = LatticeModel::Torus(TorusModel::new(o.clone(), 64, FrequencyGrid::Plain).unwrap()).with_potential(&w).unwrap();
        let bx = LatticeModel::Box(BoxModel::build(o, 20, &QuadSpec::default()).unwrap()).with_potential(&w).unwrap();
        for (m, n) in [(torus, 64usize), (bx, 41)] {
            let f = cvec(&re[..n.min(41)], &im[..n.min(41)]);
            let mut f = f;
            f.resize(n, Complex64::new(0.0, 0.0));
            let a = resolvent_apply(&m, z1, &f).unwrap();
            let b = resolvent_apply(&m, z2, &f).unwrap();
            let rhs = resolvent_apply(&m, z1, &b).unwrap();
            let lhs: Vec<Complex64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
            let rhs: Vec<Complex64> = rhs.iter().map(|v| v * (z1 - z2)).collect();
            prop_assert!(dist(&lhs, &rhs) <= 1e-9 * norm(&f));
        }
    }

    #[test]
    fn green_function_hermitian_symmetry(r in prop_oneof![0.3..0.9f64, 1.1..2.0f64], lam in 0.3..3.5f64, eta in 1e-3..1.0f64, lag in -20i64..20) {
        let opts = GreenOptions { cross_check: false, ..GreenOptions::default() };
        let up = green_1d(r, lam, Eta::Finite(eta), lag, &opts).unwrap().value;
        let down = green_1d(r, lam, Eta::Finite(-eta), lag, &opts).unwrap().value;
        let mirror = green_1d(r, lam, Eta::Finite(eta), -lag, &opts).unwrap().value;
        prop_assert!((up - down.conj()).norm() <= 1e-12 * up.norm().max(1.0));
        prop_assert!((up - mirror).norm() <= 1e-12 * up.norm().max(1.0));
        let diag = green_1d(r, lam, Eta::Finite(eta), 0, &opts).unwrap().value;
        prop_assert!(diag.im > 0.0);
    }
}

#[test]
fn lap_sup_is_monotone_in_weight_exponent() {
    let m = LatticeModel::Torus(TorusModel::new(FractionalOrder::scalar(1.0).unwrap(), 512, FrequencyGrid::Plain).unwrap());
    let win = EnergyWindow::new(1.0, 3.0).unwrap();
    let opts = LapOptions { lambda_points: 5, ..LapOptions::default() };
    let etas = [1e-1, 1e-2, 1e-3];
    let sups: Vec<Vec<f64>> = [0.0, 0.5, 1.0, 2.0].iter().map(|&s| lap_scan(&m, &win, s, &etas, &opts).unwrap().sup_norm).collect();
    for w in sups.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            assert!(b <= &(a * (1.0 + 1e-6)), "{sups:?}");
        }
    }
}

//! Scalar special functions used by the quadrature and dynamics code.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// ln of the probability 2^{-h} C(h, k).
pub fn ln_binomial_half(h: u64, k: u64) -> f64 {
    let (h, k) = (h as f64, k as f64);
    ln_gamma(h + 1.0) - ln_gamma(k + 1.0) - ln_gamma(h - k + 1.0) - h * std::f64::consts::LN_2
}

/// Bessel functions J_0(x), ..., J_m(x) by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    // start well beyond both m and |x|
    let start = (m.max(ax as usize) + 20 + (10.0 * ax.sqrt()) as usize + 20) | 1;
    let mut next = 0.0;
    let mut cur = 1e-300;
    let mut vals = vec![0.0; start + 2];
    vals[start] = cur;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        vals[k - 1] = cur;
        if cur.abs() > 1e250 {
            for v in vals.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    // normalise with J_0 + 2 Σ J_{2k} = 1
    let mut norm = vals[0];
    let mut k = 2;
    while k <= start {
        norm += 2.0 * vals[k];
        k += 2;
    }
    for k in 0..=m {
        let mut v = vals[k] / norm;
        if x < 0.0 && k % 2 == 1 {
            v = -v;
        }
        out[k] = v;
    }
    out
}

/// Hurwitz zeta ζ(p, a) = Σ_{n≥0} (n+a)^{-p} for p > 1, a > 0 (Euler–Maclaurin).
pub fn hurwitz_zeta(p: f64, a: f64) -> f64 {
    const N: usize = 16;
    let mut s = 0.0;
    for n in 0..N {
        s += (n as f64 + a).powf(-p);
    }
    let x = N as f64 + a;
    s += x.powf(1.0 - p) / (p - 1.0) + 0.5 * x.powf(-p);
    // Bernoulli corrections B_{2j}/(2j)! * (p)_{2j-1} x^{-p-2j+1}
    let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut rising = p;
    let mut fact = 2.0;
    let mut xp = x.powf(-p - 1.0);
    for (j, bj) in b.iter().enumerate() {
        s += bj / fact * rising * xp;
        let k = 2 * j as u32 + 2;
        rising *= (p + k as f64 - 1.0) * (p + k as f64);
        fact *= (k as f64 + 1.0) * (k as f64 + 2.0);
        xp /= x * x;
    }
    s
}

/// Logistic CDF with scale σ.
pub fn logistic_cdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// C^∞ bump exp(1 − 1/(1−y²)) on (lo, hi), mapped so the peak value 1 sits at the midpoint.
pub fn bump(x: f64, lo: f64, hi: f64) -> f64 {
    let y = (2.0 * x - lo - hi) / (hi - lo);
    if y.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - y * y)).exp()
    }
}

/// d/dx of [`bump`].
pub fn bump_derivative(x: f64, lo: f64, hi: f64) -> f64 {
    let y = (2.0 * x - lo - hi) / (hi - lo);
    if y.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - y * y;
    (1.0 - 1.0 / q).exp() * (-2.0 * y / (q * q)) * 2.0 / (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivative_matches_difference() {
        for x in [0.3, 0.9, 1.4, 1.95] {
            let h = 1e-6;
            let fd = (bump(x + h, 0.2, 2.0) - bump(x - h, 0.2, 2.0)) / (2.0 * h);
            assert!((fd - bump_derivative(x, 0.2, 2.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn gamma_values() {
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(101.0) - 363.739_375_555_563_47).abs() < 1e-10);
    }

    #[test]
    fn bessel_reference() {
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((j[3] - 0.019_563_353_982_668_4).abs() < 1e-15);
        let j = bessel_j_sequence(30.0, 40);
        assert!((j[0] - (-0.086_367_983_581_040_2)).abs() < 1e-14);
    }

    #[test]
    fn hurwitz_matches_zeta2() {
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-13);
        let direct: f64 = (0..200000).map(|n| (n as f64 + 3.5).powf(-3.0)).sum();
        assert!((hurwitz_zeta(3.0, 3.5) - direct).abs() < 1e-10);
    }

    #[test]
    fn bump_shape() {
        assert_eq!(bump(0.0, 0.0, 2.0), 0.0);
        assert!((bump(1.0, 0.0, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(bump(2.5, 0.0, 2.0), 0.0);
    }
}

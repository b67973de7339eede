//! Fresnel integrals and the UTD transition function.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

/// Normalized Fresnel integrals `(C(x), S(x))` with
/// `C(x) = ∫₀ˣ cos(πt²/2) dt`, `S(x) = ∫₀ˣ sin(πt²/2) dt`.
///
/// Power series below `|x| = 1.5`, modified-Lentz continued fraction above.
pub fn fresnel_cs(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;
    const MAXIT: usize = 200;
    const XMIN: f64 = 1.5;

    let ax = x.abs();
    let (c, s) = if ax < FPMIN.sqrt() {
        (ax, 0.0)
    } else if ax <= XMIN {
        let fact = FRAC_PI_2 * ax * ax;
        let mut odd = true;
        let mut term = ax;
        let mut n = 3.0;
        let mut sum = 0.0;
        let mut sums = 0.0;
        let mut sumc = ax;
        let mut sign = 1.0;
        for k in 1..=MAXIT {
            term *= fact / k as f64;
            sum += sign * term / n;
            let test = sum.abs() * EPS;
            if odd {
                sign = -sign;
                sums = sum;
                sum = sumc;
            } else {
                sumc = sum;
                sum = sums;
            }
            if term < test {
                break;
            }
            odd = !odd;
            n += 2.0;
        }
        (sumc, sums)
    } else {
        let pix2 = PI * ax * ax;
        let mut b = Complex64::new(1.0, -pix2);
        let mut cc = Complex64::new(1.0 / FPMIN, 0.0);
        let mut d = b.inv();
        let mut h = d;
        let mut n = -1.0;
        for _ in 2..=MAXIT {
            n += 2.0;
            let a = -n * (n + 1.0);
            b += Complex64::new(4.0, 0.0);
            d = (d * a + b).inv();
            cc = b + cc.inv() * a;
            let del = cc * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < EPS {
                break;
            }
        }
        h *= Complex64::new(ax, -ax);
        let cs = Complex64::new(0.5, 0.5) * (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, 0.5 * pix2) * h);
        (cs.re, cs.im)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

/// `∫_v^∞ e^{-jτ²} dτ` for real `v`.
pub fn fresnel_tail(v: f64) -> Complex64 {
    let scale = (2.0 / PI).sqrt();
    let (c, s) = fresnel_cs(v * scale);
    let k = (PI / 2.0).sqrt();
    Complex64::new(k * (0.5 - c), -k * (0.5 - s))
}

/// Kouyoumjian–Pathak transition function
/// `F(X) = 2j√X e^{jX} ∫_{√X}^∞ e^{-jτ²} dτ`, `X ≥ 0`.
pub fn transition_function(x: f64) -> Complex64 {
    if x <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if x > 1e6 {
        // Large-argument asymptote; the integral form loses digits here.
        return Complex64::new(1.0, 0.0) + Complex64::new(0.0, 0.5 / x) - Complex64::new(0.75 / (x * x), 0.0);
    }
    let sx = x.sqrt();
    Complex64::new(0.0, 2.0 * sx) * Complex64::from_polar(1.0, x) * fresnel_tail(sx)
}

/// Phase factor `e^{jπ/4}`.
pub fn e_j_pi_4() -> Complex64 {
    Complex64::from_polar(1.0, FRAC_PI_4)
}

use num_complex::Complex64;

use super::material::ComplexPermittivity;

/// Fresnel reflection coefficients `(Γ_TE, Γ_TM)` for a plane wave in vacuum
/// hitting a homogeneous half-space, `theta_i` measured from the normal.
///
/// The TM coefficient uses the convention in which both coefficients agree
/// at normal incidence: the reflected TM reference vector is `k_r × ŝ` when
/// the incident one is `ŝ × k_i`.
pub fn fresnel_reflection(eps: ComplexPermittivity, theta_i: f64) -> (Complex64, Complex64) {
    let eps = eps.as_complex();
    let cos_t = theta_i.cos();
    let sin2 = theta_i.sin().powi(2);
    let root = (eps - sin2).sqrt();
    let te = (cos_t - root) / (cos_t + root);
    let tm = (root - eps * cos_t) / (root + eps * cos_t);
    (te, tm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn lossless(re: f64) -> ComplexPermittivity {
        ComplexPermittivity { re, im: 0.0 }
    }

    #[test]
    fn normal_incidence_closed_form() {
        let (te, tm) = fresnel_reflection(lossless(4.0), 0.0);
        assert!((te - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!((tm - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn brewster_null() {
        let (_, tm) = fresnel_reflection(lossless(4.0), 2f64.atan());
        assert!(tm.norm() < 1e-10, "{}", tm.norm());
    }

    #[test]
    fn grazing_limit() {
        let (te, tm) = fresnel_reflection(ComplexPermittivity { re: 5.24, im: -0.63 }, (89.9f64).to_radians());
        assert!(te.norm() > 0.99 && tm.norm() > 0.97);
        let (te, tm) = fresnel_reflection(lossless(4.0), FRAC_PI_2 - 1e-9);
        assert!(te.norm() > 0.999_999 && tm.norm() > 0.999_999);
    }

    #[test]
    fn near_pec_tends_to_minus_one() {
        let (te, tm) = fresnel_reflection(ComplexPermittivity { re: 1.0, im: -5e7 }, 0.7);
        assert!((te + 1.0).norm() < 1e-3);
        assert!((tm + 1.0).norm() < 1e-3);
    }
}

//! Uniform theory of diffraction for a straight wedge edge.
//!
//! Kouyoumjian–Pathak coefficient with the Luebbers heuristic for
//! finitely-conducting faces. Angles follow the usual wedge convention:
//! `φ` and `φ'` are measured from the 0-face through the exterior region,
//! which spans `[0, nπ]`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fresnel::fresnel_reflection;
use super::material::ComplexPermittivity;
use super::special::{e_j_pi_4, transition_function};
use crate::error::{Error, Result};
use crate::tracer::SPEED_OF_LIGHT;

/// Keller-cone tolerance on `|β₀ − β₀'|`.
pub const KELLER_TOLERANCE_RAD: f64 = 1e-6;

/// Below this distance from a shadow/reflection boundary the cotangent ×
/// transition-function product is replaced by its analytic limit.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceMaterial {
    Pec,
    Dielectric(ComplexPermittivity),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wedge {
    /// Interior (solid) angle in radians, in `[0, π)`.
    pub interior_angle: f64,
    pub face0: FaceMaterial,
    pub face_n: FaceMaterial,
}

impl Wedge {
    pub fn pec(interior_angle: f64) -> Self {
        Self {
            interior_angle,
            face0: FaceMaterial::Pec,
            face_n: FaceMaterial::Pec,
        }
    }

    /// Exterior angle divided by π.
    pub fn n(&self) -> f64 {
        (2.0 * PI - self.interior_angle) / PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffractionGeometry {
    /// Source direction angle `φ'` from the 0-face.
    pub phi_in: f64,
    /// Observer direction angle `φ` from the 0-face.
    pub phi_out: f64,
    /// Angle between incident ray and edge.
    pub beta0_in: f64,
    /// Angle between diffracted ray and edge.
    pub beta0_out: f64,
    /// Source-to-edge distance `s'` (use `f64::INFINITY` for a plane wave).
    pub s_in: f64,
    /// Edge-to-observer distance `s`.
    pub s_out: f64,
}

impl DiffractionGeometry {
    /// Distance parameter `L` for the incident wave type.
    pub fn distance_parameter(&self) -> f64 {
        let sin2 = self.beta0_in.sin().powi(2);
        if self.s_in.is_infinite() {
            self.s_out * sin2
        } else {
            self.s_in * self.s_out * sin2 / (self.s_in + self.s_out)
        }
    }
}

/// Soft: E parallel to the edge-fixed plane of incidence (`β̂` component).
/// Hard: the `φ̂` component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgePolarization {
    Soft,
    Hard,
}

fn face_coefficient(face: FaceMaterial, grazing: f64, pol: EdgePolarization) -> Complex64 {
    match face {
        FaceMaterial::Pec => match pol {
            EdgePolarization::Soft => Complex64::new(-1.0, 0.0),
            EdgePolarization::Hard => Complex64::new(1.0, 0.0),
        },
        FaceMaterial::Dielectric(eps) => {
            // angle from the face normal; unlit faces saturate at grazing
            let theta = (0.5 * PI - grazing).abs().min(0.5 * PI - 1e-9);
            let (te, tm) = fresnel_reflection(eps, theta);
            match pol {
                EdgePolarization::Soft => te,
                // The hard term needs the TM sign convention in which a PEC
                // face gives +1, opposite to `fresnel_reflection`'s.
                EdgePolarization::Hard => -tm,
            }
        }
    }
}

/// One `cot((π ± β)/2n) · F(kL a±(β))` term, with its analytic limit near
/// the associated shadow or reflection boundary.
fn cot_f_term(n: f64, sign: f64, beta: f64, kl: f64) -> Complex64 {
    let big_n = ((beta + sign * PI) / (2.0 * PI * n)).round();
    let eps = PI + sign * beta - 2.0 * PI * n * sign * big_n;
    if eps.abs() < BOUNDARY_EPS {
        let sgn = if eps >= 0.0 { 1.0 } else { -1.0 };
        let inner = Complex64::new((2.0 * PI * kl).sqrt() * sgn, 0.0) - e_j_pi_4() * (2.0 * kl * eps);
        return inner * e_j_pi_4() * n;
    }
    let a = 2.0 * ((2.0 * PI * n * big_n - beta) / 2.0).cos().powi(2);
    let cot = 1.0 / ((PI + sign * beta) / (2.0 * n)).tan();
    transition_function(kl * a) * cot
}

/// UTD diffraction coefficient (units of √m).
pub fn utd_diffraction_coefficient(
    wedge: &Wedge,
    geometry: &DiffractionGeometry,
    f_hz: f64,
    pol: EdgePolarization,
) -> Result<Complex64> {
    let cone_error = (geometry.beta0_in - geometry.beta0_out).abs();
    if cone_error > KELLER_TOLERANCE_RAD {
        return Err(Error::KellerCone(cone_error));
    }
    let n = wedge.n();
    let k = 2.0 * PI * f_hz / SPEED_OF_LIGHT;
    let kl = k * geometry.distance_parameter();
    let (phi, phi_p) = (geometry.phi_out, geometry.phi_in);
    let sin_b0 = geometry.beta0_in.sin();

    let prefactor = -Complex64::from_polar(1.0, -PI / 4.0) / (2.0 * n * (2.0 * PI * k).sqrt() * sin_b0);

    // Luebbers with R0 at min(φ, φ') and Rn at nπ − max(φ, φ'), reciprocal in φ ↔ φ'.
    let r0 = face_coefficient(wedge.face0, phi.min(phi_p), pol);
    let rn = face_coefficient(wedge.face_n, n * PI - phi.max(phi_p), pol);

    let d1 = cot_f_term(n, 1.0, phi - phi_p, kl);
    let d2 = cot_f_term(n, -1.0, phi - phi_p, kl);
    let d3 = cot_f_term(n, 1.0, phi + phi_p, kl);
    let d4 = cot_f_term(n, -1.0, phi + phi_p, kl);

    Ok(prefactor * (d1 + d2 + rn * d3 + r0 * d4))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(phi_in: f64, phi_out: f64, s_in: f64, s_out: f64) -> DiffractionGeometry {
        DiffractionGeometry {
            phi_in,
            phi_out,
            beta0_in: PI / 2.0,
            beta0_out: PI / 2.0,
            s_in,
            s_out,
        }
    }

    #[test]
    fn reciprocity_under_leg_swap() {
        let eps = ComplexPermittivity { re: 5.24, im: -0.63 };
        let wedge = Wedge {
            interior_angle: PI / 2.0,
            face0: FaceMaterial::Dielectric(eps),
            face_n: FaceMaterial::Dielectric(ComplexPermittivity { re: 3.9, im: -0.15 }),
        };
        for pol in [EdgePolarization::Soft, EdgePolarization::Hard] {
            for (pi, po) in [(0.7, 3.9), (0.2, 1.1), (2.5, 4.6), (1.0, 1.0 + PI)] {
                let a = utd_diffraction_coefficient(&wedge, &geom(pi, po, 40.0, 75.0), 3.5e9, pol).unwrap();
                let b = utd_diffraction_coefficient(&wedge, &geom(po, pi, 75.0, 40.0), 3.5e9, pol).unwrap();
                assert!((a.norm() - b.norm()).abs() <= 1e-9 * a.norm(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn symmetric_swap_is_invariant() {
        let w = Wedge::pec(0.0);
        for pol in [EdgePolarization::Soft, EdgePolarization::Hard] {
            let a = utd_diffraction_coefficient(&w, &geom(1.0, 2.5, 10.0, 10.0), 1e9, pol).unwrap();
            let b = utd_diffraction_coefficient(&w, &geom(2.5, 1.0, 10.0, 10.0), 1e9, pol).unwrap();
            assert!((a - b).norm() < 1e-12 * a.norm());
        }
    }

    #[test]
    fn finite_on_boundaries() {
        let w = Wedge::pec(PI / 2.0);
        let phi_p = 0.6;
        for phi in [PI + phi_p, PI - phi_p] {
            for pol in [EdgePolarization::Soft, EdgePolarization::Hard] {
                let d = utd_diffraction_coefficient(&w, &geom(phi_p, phi, 20.0, 30.0), 3.5e9, pol).unwrap();
                assert!(d.norm().is_finite() && d.norm() > 0.0);
            }
        }
    }

    #[test]
    fn limit_matches_direct_evaluation_near_boundary() {
        let (n, kl) = (1.5, 500.0);
        // '−' term of β = φ + φ' is singular at β = π
        let inside = cot_f_term(n, -1.0, PI - 0.5e-9, kl);
        let outside = cot_f_term(n, -1.0, PI - 1e-6, kl);
        assert!((inside - outside).norm() < 1e-3 * outside.norm());
        let inside = cot_f_term(n, -1.0, PI + 0.5e-9, kl);
        let outside = cot_f_term(n, -1.0, PI + 1e-6, kl);
        assert!((inside - outside).norm() < 1e-3 * outside.norm());
    }

    #[test]
    fn off_cone_is_rejected() {
        let mut g = geom(1.0, 2.0, 1.0, 1.0);
        g.beta0_out += 1e-5;
        assert!(matches!(
            utd_diffraction_coefficient(&Wedge::pec(0.0), &g, 1e9, EdgePolarization::Soft),
            Err(Error::KellerCone(_))
        ));
    }
}

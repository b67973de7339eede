//! Complex field vectors and per-interaction polarization bookkeeping.

use num_complex::Complex64;

use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CVec3 {
    pub x: Complex64,
    pub y: Complex64,
    pub z: Complex64,
}

impl CVec3 {
    pub fn from_real(v: Vec3) -> Self {
        Self {
            x: v.x.into(),
            y: v.y.into(),
            z: v.z.into(),
        }
    }

    /// Unconjugated projection onto a real direction.
    pub fn dot(&self, v: Vec3) -> Complex64 {
        self.x * v.x + self.y * v.y + self.z * v.z
    }

    /// `a · u + b · v`.
    pub fn combine(a: Complex64, u: Vec3, b: Complex64, v: Vec3) -> Self {
        Self {
            x: a * u.x + b * v.x,
            y: a * u.y + b * v.y,
            z: a * u.z + b * v.z,
        }
    }
}

/// Polar unit vector `θ̂` of a vertical dipole for propagation direction `d`.
pub(crate) fn theta_hat(d: Vec3) -> Vec3 {
    let v = d * d.z - Vec3::Z;
    if v.norm() < 1e-12 {
        // straight up or down: no preferred polar direction
        Vec3::X
    } else {
        v.normalized()
    }
}

/// Azimuthal unit vector `φ̂` of a horizontal loop for propagation direction `d`.
pub(crate) fn phi_hat(d: Vec3) -> Vec3 {
    let v = Vec3::Z.cross(d);
    if v.norm() < 1e-12 {
        Vec3::Y
    } else {
        v.normalized()
    }
}

/// Unit vector perpendicular to the plane of incidence.
pub(crate) fn incidence_normal(k_in: Vec3, normal: Vec3) -> Vec3 {
    let s = k_in.cross(normal);
    if s.norm() < 1e-12 {
        normal.any_perpendicular()
    } else {
        s.normalized()
    }
}

//! Material model, Fresnel reflection and UTD wedge diffraction.

mod fresnel;
mod material;
pub mod special;
mod utd;

pub use fresnel::fresnel_reflection;
pub use material::{complex_permittivity, ComplexPermittivity, ItuLaw, Material, MaterialTable, EPS0};
pub use utd::{
    utd_diffraction_coefficient, DiffractionGeometry, EdgePolarization, FaceMaterial, Wedge, KELLER_TOLERANCE_RAD,
};

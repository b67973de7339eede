//! Geometry-perturbation ray tracing for urban radio channels.
//!
//! The pipeline: footprints and terrain ([`geodata`]) are extruded into a
//! triangle scene ([`scene`]), traced between transmitter and receiver
//! ([`tracer`], with [`emwave`] supplying reflection and diffraction
//! coefficients), reduced to link statistics ([`metrics`]), and repeated over
//! seeded scene perturbations ([`perturb`]) on a receiver grid ([`sweep`]).

pub mod emwave;
pub mod error;
pub mod exec;
pub mod geodata;
pub mod geom;
pub mod metrics;
pub mod perturb;
pub mod scene;
pub mod sweep;
pub mod synth;
pub mod tracer;

pub use error::{Error, Result};

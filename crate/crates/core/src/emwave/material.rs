use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permittivity in F/m.
pub const EPS0: f64 = 8.8541878128e-12;

const BUILTIN_TABLE: &str = include_str!("../../data/itu_materials.toml");

/// Power-law frequency dependence `eps_r = a·f^b`, `sigma = c·f^d` (f in GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItuLaw {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ItuLaw {
    pub fn eval(&self, f_hz: f64) -> (f64, f64) {
        let f_ghz = f_hz * 1e-9;
        (self.a * f_ghz.powf(self.b), self.c * f_ghz.powf(self.d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub eps_r: f64,
    pub sigma_s_per_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub itu_params: Option<ItuLaw>,
}

impl Material {
    pub fn new(name: impl Into<String>, eps_r: f64, sigma_s_per_m: f64) -> Result<Self> {
        let m = Self {
            name: name.into(),
            eps_r,
            sigma_s_per_m,
            itu_params: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r >= 1.0) || !(self.sigma_s_per_m >= 0.0) {
            return Err(Error::Invalid(format!(
                "material {} out of range: eps_r={}, sigma={}",
                self.name, self.eps_r, self.sigma_s_per_m
            )));
        }
        Ok(())
    }

    /// `(eps_r, sigma)` at `f_hz`, applying the frequency law when present.
    pub fn params_at(&self, f_hz: f64) -> (f64, f64) {
        match &self.itu_params {
            Some(law) => law.eval(f_hz),
            None => (self.eps_r, self.sigma_s_per_m),
        }
    }

    /// Copy with the frequency law evaluated at `f_hz` and dropped, so the
    /// static values are the ones that take effect.
    pub fn frozen_at(&self, f_hz: f64) -> Material {
        let (eps_r, sigma) = self.params_at(f_hz);
        Material {
            name: self.name.clone(),
            eps_r: eps_r.max(1.0),
            sigma_s_per_m: sigma.max(0.0),
            itu_params: None,
        }
    }
}

/// Relative complex permittivity under the `e^{+jωt}` convention (`im ≤ 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexPermittivity {
    pub re: f64,
    pub im: f64,
}

impl ComplexPermittivity {
    pub fn as_complex(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re, self.im)
    }
}

pub fn complex_permittivity(m: &Material, f_hz: f64) -> ComplexPermittivity {
    let (eps_r, sigma) = m.params_at(f_hz);
    ComplexPermittivity {
        re: eps_r,
        im: -sigma / (2.0 * PI * f_hz * EPS0),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    #[allow(dead_code)]
    version: u32,
    materials: BTreeMap<String, TableEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    a: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
    d: Option<f64>,
    #[allow(dead_code)]
    valid_ghz: Option<[f64; 2]>,
    eps_r: f64,
    sigma: f64,
}

/// Named materials loaded from a table file.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    materials: BTreeMap<String, Material>,
}

impl MaterialTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE).expect("bundled material table is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: TableFile = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let mut materials = BTreeMap::new();
        for (name, e) in file.materials {
            let itu_params = match (e.a, e.b, e.c, e.d) {
                (Some(a), Some(b), Some(c), Some(d)) => Some(ItuLaw { a, b, c, d }),
                (None, None, None, None) => None,
                _ => {
                    return Err(Error::Invalid(format!(
                        "material {name}: frequency law needs all of a, b, c, d"
                    )))
                }
            };
            let m = Material {
                name: name.clone(),
                eps_r: e.eps_r,
                sigma_s_per_m: e.sigma,
                itu_params,
            };
            m.validate()?;
            materials.insert(name, m);
        }
        Ok(Self { materials })
    }

    pub fn get(&self, name: &str) -> Result<&Material> {
        self.materials
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("unknown material {name}")))
    }

    /// Adds or replaces a material under its own name.
    pub fn insert(&mut self, m: Material) {
        self.materials.insert(m.name.clone(), m);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }
}

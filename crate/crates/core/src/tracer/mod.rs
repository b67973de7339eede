//! Deterministic path finder: line of sight, specular reflections by the image
//! method over planar facets, and single edge diffraction on building edges.

pub mod accel;
mod facets;
mod field;
mod images;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::emwave::{
    complex_permittivity, fresnel_reflection, utd_diffraction_coefficient, ComplexPermittivity, DiffractionGeometry,
    EdgePolarization, FaceMaterial, Wedge,
};
use crate::error::{Error, Result};
use crate::geom::{point_in_triangle, Vec3};
use crate::scene::Scene;

pub use accel::{Bvh, Hit, Tri};
pub use facets::{DiffractionEdge, Facet, NORMAL_AGREEMENT};
pub use images::ImageTree;

use field::{incidence_normal, phi_hat, theta_hat, CVec3};
use images::FRONT_EPS;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const MAX_REFLECTION_ORDER: u8 = 7;
/// Segment ends are pulled in by this much before occlusion tests.
pub const VISIBILITY_EPS_M: f64 = 1e-6;
/// Barycentric slack when testing whether a reflection point lies on a facet.
pub const IN_FACET_EPS: f64 = 1e-9;
/// Minimum angular clearance from either wedge face for a diffraction path.
const WEDGE_ANGLE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    #[default]
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    pub max_reflection_order: u8,
    pub diffraction_enabled: bool,
    pub frequency_hz: f64,
    pub polarization: Polarization,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            max_reflection_order: 5,
            diffraction_enabled: true,
            frequency_hz: 3.5e9,
            polarization: Polarization::Vertical,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_reflection_order > MAX_REFLECTION_ORDER {
            return Err(Error::Invalid(format!(
                "max_reflection_order {} exceeds {MAX_REFLECTION_ORDER}",
                self.max_reflection_order
            )));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::Invalid(format!("frequency_hz must be positive, got {}", self.frequency_hz)));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    fn pol_vector(&self, d: Vec3) -> Vec3 {
        match self.polarization {
            Polarization::Vertical => theta_hat(d),
            Polarization::Horizontal => phi_hat(d),
        }
    }
}

/// Ray-query structure plus the facet and edge decomposition of a scene.
#[derive(Debug, Clone)]
pub struct AccelStructure {
    pub bvh: Bvh,
    pub facets: Vec<Facet>,
    pub edges: Vec<DiffractionEdge>,
}

impl AccelStructure {
    /// Object owning global triangle `triangle`.
    pub fn object_of(&self, triangle: usize) -> u32 {
        self.bvh.tris[triangle].object_id
    }

    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<Hit> {
        self.bvh.intersect(origin, dir, 0.0, f64::INFINITY)
    }

    pub fn occluded(&self, a: Vec3, b: Vec3, ignore_facets: &[u32]) -> bool {
        self.bvh.occluded(a, b, ignore_facets, VISIBILITY_EPS_M)
    }

    fn in_facet(&self, facet: u32, p: Vec3) -> bool {
        let f = &self.facets[facet as usize];
        if f.convex {
            return f.hull_contains(p, IN_FACET_EPS);
        }
        f.triangles.iter().any(|&ti| {
            let [a, b, c] = self.bvh.tris[ti].vertices();
            point_in_triangle(p, a, b, c, IN_FACET_EPS)
        })
    }
}

pub fn build_accel(scene: &Scene) -> AccelStructure {
    let mut bvh = Bvh::from_scene(scene);
    let (facets, edges) = facets::build_facets(scene, &mut bvh.tris);
    AccelStructure { bvh, facets, edges }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PathKind {
    Los,
    Reflection { order: u8 },
    Diffraction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Interaction {
    Reflection {
        object_id: u32,
        facet: u32,
        normal: Vec3,
        incidence_angle_rad: f64,
    },
    Diffraction {
        object_id: u32,
        edge_index: u32,
        #[serde(skip)]
        edge: Box<DiffractionEdge>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub kind: PathKind,
    pub vertices: Vec<Vec3>,
    pub interactions: Vec<Interaction>,
    pub delay_s: f64,
    #[serde(serialize_with = "serialize_complex")]
    pub amplitude: Complex64,
}

fn serialize_complex<S: serde::Serializer>(c: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [c.re, c.im].serialize(s)
}

impl Path {
    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Interaction identifiers (facets or edge), for duplicate detection.
    pub fn interaction_ids(&self) -> Vec<u32> {
        self.interactions
            .iter()
            .map(|i| match i {
                Interaction::Reflection { facet, .. } => *facet,
                Interaction::Diffraction { edge_index, .. } => *edge_index,
            })
            .collect()
    }

    pub fn power(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSet {
    pub tx: Vec3,
    pub rx: Vec3,
    pub paths: Vec<Path>,
    pub max_reflection_order: u8,
    pub diffraction_enabled: bool,
}

#[derive(Debug, Clone, Copy)]
struct EdgeSide {
    /// Projection onto the edge axis from `start`.
    t: f64,
    /// Distance from the edge line.
    rho: f64,
}

fn edge_side(edge: &DiffractionEdge, p: Vec3) -> Option<EdgeSide> {
    let r = p - edge.start;
    let t = r.dot(edge.direction);
    let perp = r - edge.direction * t;
    let rho = perp.norm();
    if rho < 1e-9 {
        return None;
    }
    let phi = edge.angle_of(perp);
    (phi > WEDGE_ANGLE_EPS && phi < edge.n() * PI - WEDGE_ANGLE_EPS).then_some(EdgeSide { t, rho })
}

/// Per-transmitter state reused across receivers: the image tree and the
/// transmitter's position relative to every diffraction edge.
pub struct TxContext<'a> {
    accel: &'a AccelStructure,
    tx: Vec3,
    cfg: TraceConfig,
    tree: ImageTree,
    edge_sides: Vec<Option<EdgeSide>>,
}

impl<'a> TxContext<'a> {
    pub fn new(accel: &'a AccelStructure, tx: Vec3, cfg: &TraceConfig) -> Self {
        let tree = ImageTree::build(&accel.facets, tx, cfg.max_reflection_order.min(MAX_REFLECTION_ORDER));
        let edge_sides = if cfg.diffraction_enabled {
            accel.edges.iter().map(|e| edge_side(e, tx)).collect()
        } else {
            Vec::new()
        };
        Self {
            accel,
            tx,
            cfg: cfg.clone(),
            tree,
            edge_sides,
        }
    }

    pub fn image_count(&self) -> usize {
        self.tree.len()
    }

    /// Geometric path search; amplitudes are left at zero.
    pub fn find_geometry(&self, rx: Vec3) -> Vec<Path> {
        let accel = self.accel;
        let tx = self.tx;
        let mut paths = Vec::new();
        if !accel.occluded(tx, rx, &[]) {
            paths.push(Path {
                kind: PathKind::Los,
                vertices: vec![tx, rx],
                interactions: Vec::new(),
                delay_s: 0.0,
                amplitude: Complex64::new(0.0, 0.0),
            });
        }
        for node in 0..self.tree.len() {
            if !self.tree.beam_contains(node, &accel.facets, rx) {
                continue;
            }
            if let Some(p) = self.reflection_path(node, rx) {
                paths.push(p);
            }
        }
        for (ei, side) in self.edge_sides.iter().enumerate() {
            let Some(src) = side else { continue };
            if let Some(p) = self.diffraction_path(ei, *src, rx) {
                paths.push(p);
            }
        }
        paths
    }

    fn reflection_path(&self, node: usize, rx: Vec3) -> Option<Path> {
        let accel = self.accel;
        let chain = self.tree.chain(node);
        let d = chain.len();
        let mut points = vec![Vec3::ZERO; d];
        let mut target = rx;
        for (k, &ni) in chain.iter().enumerate().rev() {
            let n = &self.tree.nodes[ni];
            let plane = &accel.facets[n.facet as usize].plane;
            let sd_t = plane.signed_distance(target);
            if sd_t <= FRONT_EPS {
                return None;
            }
            let sd_i = plane.signed_distance(n.image);
            let r = n.image + (target - n.image) * (sd_i / (sd_i - sd_t));
            if !accel.in_facet(n.facet, r) {
                return None;
            }
            points[k] = r;
            target = r;
        }
        let facets: Vec<u32> = chain.iter().map(|&ni| self.tree.nodes[ni].facet).collect();
        let mut vertices = Vec::with_capacity(d + 2);
        vertices.push(self.tx);
        vertices.extend_from_slice(&points);
        vertices.push(rx);
        for (i, w) in vertices.windows(2).enumerate() {
            if w[0].distance(w[1]) <= 2.0 * VISIBILITY_EPS_M {
                return None;
            }
            let mut ignore = [u32::MAX; 2];
            if i > 0 {
                ignore[0] = facets[i - 1];
            }
            if i < d {
                ignore[1] = facets[i];
            }
            if accel.occluded(w[0], w[1], &ignore) {
                return None;
            }
        }
        let interactions = facets
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                let facet = &accel.facets[f as usize];
                let k_in = (vertices[k + 1] - vertices[k]).normalized();
                Interaction::Reflection {
                    object_id: facet.object_id,
                    facet: f,
                    normal: facet.plane.normal,
                    incidence_angle_rad: (-k_in.dot(facet.plane.normal)).clamp(-1.0, 1.0).acos(),
                }
            })
            .collect();
        Some(Path {
            kind: PathKind::Reflection { order: d as u8 },
            vertices,
            interactions,
            delay_s: 0.0,
            amplitude: Complex64::new(0.0, 0.0),
        })
    }

    fn diffraction_path(&self, ei: usize, src: EdgeSide, rx: Vec3) -> Option<Path> {
        let edge = &self.accel.edges[ei];
        let obs = edge_side(edge, rx)?;
        let t = src.t + (obs.t - src.t) * src.rho / (src.rho + obs.rho);
        if t <= VISIBILITY_EPS_M || t >= edge.length() - VISIBILITY_EPS_M {
            return None;
        }
        let q = edge.start + edge.direction * t;
        if self.accel.occluded(q, rx, &edge.facets) || self.accel.occluded(self.tx, q, &edge.facets) {
            return None;
        }
        Some(Path {
            kind: PathKind::Diffraction,
            vertices: vec![self.tx, q, rx],
            interactions: vec![Interaction::Diffraction {
                object_id: edge.object_id,
                edge_index: ei as u32,
                edge: Box::new(edge.clone()),
            }],
            delay_s: 0.0,
            amplitude: Complex64::new(0.0, 0.0),
        })
    }

    /// Full path search with delays and amplitudes.
    pub fn trace(&self, scene: &Scene, rx: Vec3) -> Result<PathSet> {
        let mut paths = self.find_geometry(rx);
        for p in &mut paths {
            let (delay, amp) = evaluate_path(p, scene, &self.cfg)?;
            p.delay_s = delay;
            p.amplitude = amp;
        }
        Ok(PathSet {
            tx: self.tx,
            rx,
            paths,
            max_reflection_order: self.cfg.max_reflection_order,
            diffraction_enabled: self.cfg.diffraction_enabled,
        })
    }
}

/// All paths between `tx` and `rx`, evaluated.
pub fn find_paths(scene: &Scene, accel: &AccelStructure, tx: Vec3, rx: Vec3, cfg: &TraceConfig) -> Result<PathSet> {
    cfg.validate()?;
    TxContext::new(accel, tx, cfg).trace(scene, rx)
}

fn object_permittivity(scene: &Scene, object_id: u32, f_hz: f64) -> Result<ComplexPermittivity> {
    scene
        .materials
        .get(&object_id)
        .map(|m| complex_permittivity(m, f_hz))
        .ok_or_else(|| Error::Invalid(format!("object {object_id} has no material")))
}

/// Delay and complex amplitude of a geometrically valid path.
pub fn evaluate_path(path: &Path, scene: &Scene, cfg: &TraceConfig) -> Result<(f64, Complex64)> {
    let v = &path.vertices;
    let length = path.length();
    let delay = length / SPEED_OF_LIGHT;
    let lambda = cfg.wavelength();
    let k = 2.0 * PI / lambda;
    match path.kind {
        PathKind::Los | PathKind::Reflection { .. } => {
            let mut e = CVec3::from_real(cfg.pol_vector((v[1] - v[0]).normalized()));
            for (i, inter) in path.interactions.iter().enumerate() {
                let Interaction::Reflection { object_id, normal, .. } = inter else {
                    return Err(Error::Invalid("reflection path holds a non-reflection interaction".into()));
                };
                let k_in = (v[i + 1] - v[i]).normalized();
                let k_out = (v[i + 2] - v[i + 1]).normalized();
                let eps = object_permittivity(scene, *object_id, cfg.frequency_hz)?;
                let theta = (-k_in.dot(*normal)).clamp(-1.0, 1.0).acos();
                let (te, tm) = fresnel_reflection(eps, theta);
                let s = incidence_normal(k_in, *normal);
                let p_in = s.cross(k_in);
                let p_out = k_out.cross(s);
                e = CVec3::combine(te * e.dot(s), s, tm * e.dot(p_in), p_out);
            }
            let last = (v[v.len() - 1] - v[v.len() - 2]).normalized();
            let scalar = e.dot(cfg.pol_vector(last));
            let amp = Complex64::from_polar(lambda / (4.0 * PI * length), -k * length) * scalar;
            Ok((delay, amp))
        }
        PathKind::Diffraction => {
            let Some(Interaction::Diffraction { object_id, edge, .. }) = path.interactions.first() else {
                return Err(Error::Invalid("diffraction path without an edge".into()));
            };
            let (tx, q, rx) = (v[0], v[1], v[2]);
            let (s_in, s_out) = (tx.distance(q), q.distance(rx));
            let k_in = (q - tx) / s_in;
            let k_out = (rx - q) / s_out;
            let eps = object_permittivity(scene, *object_id, cfg.frequency_hz)?;
            let face = FaceMaterial::Dielectric(eps);
            let wedge = Wedge {
                interior_angle: edge.interior_angle,
                face0: face,
                face_n: face,
            };
            let e_dir = edge.direction;
            let geometry = DiffractionGeometry {
                phi_in: edge.angle_of(tx - q),
                phi_out: edge.angle_of(rx - q),
                beta0_in: k_in.dot(e_dir).clamp(-1.0, 1.0).acos(),
                beta0_out: k_out.dot(e_dir).clamp(-1.0, 1.0).acos(),
                s_in,
                s_out,
            };
            let ds = utd_diffraction_coefficient(&wedge, &geometry, cfg.frequency_hz, EdgePolarization::Soft)?;
            let dh = utd_diffraction_coefficient(&wedge, &geometry, cfg.frequency_hz, EdgePolarization::Hard)?;
            let e = CVec3::from_real(cfg.pol_vector(k_in));
            let phi_in = e_dir.cross(k_in).normalized();
            let beta_in = k_in.cross(phi_in);
            let phi_out = e_dir.cross(k_out).normalized();
            let beta_out = k_out.cross(phi_out);
            let e_out = CVec3::combine(ds * e.dot(beta_in), beta_out, dh * e.dot(phi_in), phi_out);
            let scalar = e_out.dot(cfg.pol_vector(k_out));
            let spread = (s_in * s_out * (s_in + s_out)).sqrt();
            let amp = Complex64::from_polar(lambda / (4.0 * PI * spread), -k * (s_in + s_out)) * scalar;
            Ok((delay, amp))
        }
    }
}

//! Seeded Gaussian perturbations of building heights, positions and
//! materials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::{ObjectKind, Scene};

/// Perturbed building heights never drop below this.
pub const MIN_BUILDING_HEIGHT_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Material,
    Position,
    Height,
    HeightPosition,
    All,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::Material,
        PerturbationKind::Position,
        PerturbationKind::Height,
        PerturbationKind::HeightPosition,
        PerturbationKind::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Material => "material",
            PerturbationKind::Position => "position",
            PerturbationKind::Height => "height",
            PerturbationKind::HeightPosition => "height_position",
            PerturbationKind::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn perturbs_height(self) -> bool {
        matches!(self, Self::Height | Self::HeightPosition | Self::All)
    }

    pub fn perturbs_position(self) -> bool {
        matches!(self, Self::Position | Self::HeightPosition | Self::All)
    }

    pub fn perturbs_material(self) -> bool {
        matches!(self, Self::Material | Self::All)
    }
}

impl std::fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    #[serde(default = "defaults::sigma_height")]
    pub sigma_height_m: f64,
    #[serde(default = "defaults::sigma_pos")]
    pub sigma_pos_m: f64,
    #[serde(default = "defaults::material_rel")]
    pub material_rel_sigma: f64,
    #[serde(default = "defaults::count")]
    pub count: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Draw an independent offset for every footprint vertex instead of one
    /// rigid offset per building.
    #[serde(default)]
    pub per_vertex_position: bool,
}

mod defaults {
    pub fn sigma_height() -> f64 {
        1.0
    }
    pub fn sigma_pos() -> f64 {
        0.4
    }
    pub fn material_rel() -> f64 {
        0.10
    }
    pub fn count() -> usize {
        50
    }
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, master_seed: u64) -> Self {
        Self {
            kind,
            sigma_height_m: defaults::sigma_height(),
            sigma_pos_m: defaults::sigma_pos(),
            material_rel_sigma: defaults::material_rel(),
            count: defaults::count(),
            master_seed,
            per_vertex_position: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_height_m", self.sigma_height_m),
            ("sigma_pos_m", self.sigma_pos_m),
            ("material_rel_sigma", self.material_rel_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if self.count < 1 {
            return Err(Error::Invalid("perturbation count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Height,
    PosX,
    PosY,
    Eps,
    Sigma,
}

impl Channel {
    fn tag(self) -> u8 {
        match self {
            Channel::Height => 0,
            Channel::PosX => 1,
            Channel::PosY => 2,
            Channel::Eps => 3,
            Channel::Sigma => 4,
        }
    }
}

/// Independent generator for one `(seed, tx, index, building, channel)` tuple.
pub fn derive_rng(master_seed: u64, tx_id: u64, index: u64, building_id: u64, channel: Channel) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"gert/perturb/v1");
    h.update(master_seed.to_le_bytes());
    h.update(tx_id.to_le_bytes());
    h.update(index.to_le_bytes());
    h.update(building_id.to_le_bytes());
    h.update([channel.tag()]);
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw(spec: &PerturbationSpec, tx_id: u64, index: u64, building: u32, channel: Channel) -> f64 {
    standard_normal(&mut derive_rng(spec.master_seed, tx_id, index, building as u64, channel))
}

#[derive(Debug, Clone)]
pub struct Perturbed {
    pub scene: Scene,
    /// Buildings whose perturbed height hit the minimum-height clamp.
    pub clamped: usize,
}

/// Deep copy of `scene` with realization `index` of `spec` applied for
/// transmitter `tx_id`. The terrain is never touched.
pub fn apply_perturbation(scene: &Scene, spec: &PerturbationSpec, tx_id: u64, index: usize) -> Result<Perturbed> {
    spec.validate()?;
    if index >= spec.count {
        return Err(Error::Invalid(format!("perturbation index {index} >= count {}", spec.count)));
    }
    let idx = index as u64;
    let mut out = scene.clone();
    let mut clamped = 0;
    let kind = spec.kind;
    for mesh in out.meshes.iter_mut().filter(|m| m.object_kind == ObjectKind::Building) {
        let id = mesh.object_id;
        let Some(info) = out.buildings.get_mut(&id) else { continue };

        if kind.perturbs_height() {
            let dh = spec.sigma_height_m * draw(spec, tx_id, idx, id, Channel::Height);
            let mut h = info.height_m + dh;
            if h < MIN_BUILDING_HEIGHT_M {
                h = MIN_BUILDING_HEIGHT_M;
                clamped += 1;
            }
            let roof = info.base_elevation_m + h;
            for v in mesh.vertices.iter_mut().filter(|v| v.z > info.base_elevation_m + 1e-9) {
                v.z = roof;
            }
            info.height_m = h;
        }

        if kind.perturbs_position() {
            let ring = &mut info.footprint.outer_ring;
            let n = ring.len();
            let offsets: Vec<(f64, f64)> = if spec.per_vertex_position {
                let mut rx = derive_rng(spec.master_seed, tx_id, idx, id as u64, Channel::PosX);
                let mut ry = derive_rng(spec.master_seed, tx_id, idx, id as u64, Channel::PosY);
                (0..n)
                    .map(|_| (spec.sigma_pos_m * standard_normal(&mut rx), spec.sigma_pos_m * standard_normal(&mut ry)))
                    .collect()
            } else {
                let d = (
                    spec.sigma_pos_m * draw(spec, tx_id, idx, id, Channel::PosX),
                    spec.sigma_pos_m * draw(spec, tx_id, idx, id, Channel::PosY),
                );
                vec![d; n]
            };
            for (p, d) in ring.iter_mut().zip(&offsets) {
                p[0] += d.0;
                p[1] += d.1;
            }
            if spec.per_vertex_position {
                // extruded layout: vertex i and i + n share footprint corner i
                for (i, v) in mesh.vertices.iter_mut().enumerate() {
                    let d = offsets[i % n];
                    v.x += d.0;
                    v.y += d.1;
                }
            } else {
                let d = offsets[0];
                for v in mesh.vertices.iter_mut() {
                    v.x += d.0;
                    v.y += d.1;
                }
            }
        }

        if kind.perturbs_material() {
            if let Some(m) = out.materials.get_mut(&id) {
                let rel = spec.material_rel_sigma;
                let e = draw(spec, tx_id, idx, id, Channel::Eps);
                let s = draw(spec, tx_id, idx, id, Channel::Sigma);
                m.eps_r = (m.eps_r + rel * m.eps_r * e).max(1.0);
                m.sigma_s_per_m = (m.sigma_s_per_m + rel * m.sigma_s_per_m * s).max(0.0);
            }
        }
    }
    if kind.perturbs_position() && spec.per_vertex_position {
        for mesh in out.meshes.iter().filter(|m| m.object_kind == ObjectKind::Building) {
            mesh.validate()?;
        }
    }
    Ok(Perturbed { scene: out, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::export_scene;
    use crate::synth::ManhattanLayout;

    fn scene() -> Scene {
        ManhattanLayout {
            blocks: 3,
            ..ManhattanLayout::default()
        }
        .scene(3.5e9)
        .unwrap()
    }

    fn vertices(s: &Scene) -> Vec<crate::geom::Vec3> {
        s.meshes.iter().flat_map(|m| m.vertices.clone()).collect()
    }

    #[test]
    fn same_tuple_same_stream_distinct_building_differs() {
        use rand::Rng;
        let mut a = derive_rng(7, 1, 2, 3, Channel::Height);
        let mut b = derive_rng(7, 1, 2, 3, Channel::Height);
        let mut c = derive_rng(7, 1, 2, 4, Channel::Height);
        let xa: Vec<u64> = (0..100).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..100).map(|_| b.random()).collect();
        let xc: Vec<u64> = (0..100).map(|_| c.random()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn normal_draws_have_unit_moments() {
        let mut rng = derive_rng(1, 0, 0, 0, Channel::Eps);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.005);
        assert!((var.sqrt() - 1.0).abs() < 0.005);
    }

    #[test]
    fn material_kind_keeps_geometry() {
        let s = scene();
        let p = apply_perturbation(&s, &PerturbationSpec::new(PerturbationKind::Material, 3), 0, 0).unwrap();
        assert_eq!(vertices(&s), vertices(&p.scene));
        assert_ne!(s.materials, p.scene.materials);
        assert_eq!(s.materials[&0], p.scene.materials[&0]);
    }

    #[test]
    fn height_kind_shifts_roofs_rigidly() {
        let s = scene();
        let p = apply_perturbation(&s, &PerturbationSpec::new(PerturbationKind::Height, 3), 0, 1).unwrap();
        assert_eq!(s.materials, p.scene.materials);
        for (a, b) in s.meshes.iter().zip(&p.scene.meshes) {
            if a.object_kind == ObjectKind::Terrain {
                assert_eq!(a, b);
                continue;
            }
            let shifts: Vec<f64> = a.vertices.iter().zip(&b.vertices).filter(|(u, _)| u.z > 0.0).map(|(u, v)| v.z - u.z).collect();
            assert!(shifts.iter().all(|d| (d - shifts[0]).abs() < 1e-12));
            assert!(a.vertices.iter().zip(&b.vertices).all(|(u, v)| u.x == v.x && u.y == v.y));
        }
    }

    #[test]
    fn position_kind_translates_rigidly() {
        let s = scene();
        let p = apply_perturbation(&s, &PerturbationSpec::new(PerturbationKind::Position, 3), 2, 4).unwrap();
        assert_eq!(s.materials, p.scene.materials);
        for (a, b) in s.meshes.iter().zip(&p.scene.meshes).skip(1) {
            let d = b.vertices[0] - a.vertices[0];
            assert!(d.z == 0.0 && d.norm() > 0.0);
            for (u, v) in a.vertices.iter().zip(&b.vertices) {
                assert!(((*v - *u) - d).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pure_and_serialization_stable() {
        let s = scene();
        let spec = PerturbationSpec::new(PerturbationKind::All, 11);
        let a = apply_perturbation(&s, &spec, 1, 5).unwrap().scene;
        let b = apply_perturbation(&s, &spec, 1, 5).unwrap().scene;
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        export_scene(&a, da.path()).unwrap();
        export_scene(&b, db.path()).unwrap();
        for entry in std::fs::read_dir(da.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(std::fs::read(da.path().join(&name)).unwrap(), std::fs::read(db.path().join(&name)).unwrap());
        }
    }

    #[test]
    fn clamp_holds_minimum_height() {
        let s = scene();
        let mut spec = PerturbationSpec::new(PerturbationKind::Height, 0);
        spec.sigma_height_m = 1000.0;
        let p = apply_perturbation(&s, &spec, 0, 0).unwrap();
        assert!(p.clamped > 0);
        assert!(p.scene.buildings.values().all(|b| b.height_m >= MIN_BUILDING_HEIGHT_M));
    }

    #[test]
    fn per_vertex_mode_moves_corners_independently() {
        let s = scene();
        let mut spec = PerturbationSpec::new(PerturbationKind::Position, 9);
        spec.per_vertex_position = true;
        spec.sigma_pos_m = 0.05;
        let p = apply_perturbation(&s, &spec, 0, 0).unwrap();
        let (a, b) = (&s.meshes[1], &p.scene.meshes[1]);
        let d0 = b.vertices[0] - a.vertices[0];
        let d1 = b.vertices[1] - a.vertices[1];
        assert!((d0 - d1).norm() > 0.0);
        let n = a.vertices.len() / 2;
        assert_eq!(b.vertices[n] - a.vertices[n], d0);
    }
}

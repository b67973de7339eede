//! Triangle-mesh scene built from footprints and a terrain grid.

mod io;
mod triangulate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::emwave::{Material, MaterialTable};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::geodata::{BuildingFootprint, TerrainGrid};
use crate::geom::{triangle_area, Aabb, Vec3};

pub use io::{export_scene, import_scene, MANIFEST_FILE};
pub use triangulate::triangulate_ring;

/// Triangles smaller than this are rejected.
pub const MIN_TRIANGLE_AREA_M2: f64 = 1e-6;

/// Object id reserved for the terrain mesh; buildings get `1..`.
pub const TERRAIN_OBJECT_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Building,
    Terrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub object_id: u32,
    pub object_kind: ObjectKind,
}

impl TriangleMesh {
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len() as u32;
        for (ti, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= nv) {
                return Err(Error::Geometry(format!(
                    "object {}: triangle {ti} indexes past {nv} vertices",
                    self.object_id
                )));
            }
            let [a, b, c] = t.map(|i| self.vertices[i as usize]);
            if triangle_area(a, b, c) < MIN_TRIANGLE_AREA_M2 {
                return Err(Error::Geometry(format!(
                    "object {}: triangle {ti} has near-zero area",
                    self.object_id
                )));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for v in &self.vertices {
            b.grow(*v);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingInfo {
    pub base_elevation_m: f64,
    pub height_m: f64,
    pub footprint: BuildingFootprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub meshes: Vec<TriangleMesh>,
    pub materials: BTreeMap<u32, Material>,
    pub buildings: BTreeMap<u32, BuildingInfo>,
    pub origin: (f64, f64),
    pub frequency_hz: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) {
            return Err(Error::Invalid("scene frequency must be positive".into()));
        }
        let terrains = self.meshes.iter().filter(|m| m.object_kind == ObjectKind::Terrain).count();
        if terrains != 1 {
            return Err(Error::Invalid(format!("scene must hold exactly one terrain mesh, found {terrains}")));
        }
        for m in &self.meshes {
            m.validate()?;
            if !self.materials.contains_key(&m.object_id) {
                return Err(Error::Invalid(format!("object {} has no material", m.object_id)));
            }
        }
        Ok(())
    }

    pub fn terrain(&self) -> &TriangleMesh {
        self.meshes
            .iter()
            .find(|m| m.object_kind == ObjectKind::Terrain)
            .expect("scene has a terrain mesh")
    }

    pub fn mesh(&self, object_id: u32) -> Option<&TriangleMesh> {
        self.meshes.iter().find(|m| m.object_id == object_id)
    }

    pub fn mesh_mut(&mut self, object_id: u32) -> Option<&mut TriangleMesh> {
        self.meshes.iter_mut().find(|m| m.object_id == object_id)
    }

    pub fn triangle_count(&self) -> usize {
        self.meshes.iter().map(|m| m.triangles.len()).sum()
    }

    pub fn bounds(&self) -> Aabb {
        self.meshes.iter().fold(Aabb::EMPTY, |b, m| b.union(&m.bounds()))
    }

    /// Ground elevation under `(x, y)`, from the terrain mesh.
    pub fn ground_height(&self, x: f64, y: f64) -> Option<f64> {
        let t = self.terrain();
        let p = Vec3::new(x, y, 0.0);
        t.triangles.iter().find_map(|tri| {
            let [a, b, c] = tri.map(|k| t.vertices[k as usize]);
            let n = crate::geom::triangle_normal(a, b, c);
            if n.z.abs() < 1e-12 {
                return None;
            }
            let a2 = Vec3::new(a.x, a.y, 0.0);
            let b2 = Vec3::new(b.x, b.y, 0.0);
            let c2 = Vec3::new(c.x, c.y, 0.0);
            if !crate::geom::point_in_triangle(p, a2, b2, c2, 1e-12) {
                return None;
            }
            Some(a.z - (n.x * (x - a.x) + n.y * (y - a.y)) / n.z)
        })
    }
}

/// Walls and flat roof of one building. Vertices `0..n` are the base ring,
/// `n..2n` the roof ring.
pub fn extrude_building(fp: &BuildingFootprint, terrain: &TerrainGrid, object_id: u32) -> Result<TriangleMesh> {
    let base = base_elevation(fp, terrain);
    extrude_at(fp, base, fp.height_m, object_id)
}

pub fn base_elevation(fp: &BuildingFootprint, terrain: &TerrainGrid) -> f64 {
    fp.outer_ring
        .iter()
        .map(|p| terrain.sample(p[0], p[1]))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn extrude_at(fp: &BuildingFootprint, base: f64, height: f64, object_id: u32) -> Result<TriangleMesh> {
    if !(height > 0.0) {
        return Err(Error::Geometry(format!("building {} has non-positive height {height}", fp.id)));
    }
    let ring = &fp.outer_ring;
    let n = ring.len();
    let roof_z = base + height;
    let mut vertices = Vec::with_capacity(2 * n);
    vertices.extend(ring.iter().map(|p| Vec3::new(p[0], p[1], base)));
    vertices.extend(ring.iter().map(|p| Vec3::new(p[0], p[1], roof_z)));
    let mut triangles = Vec::with_capacity(2 * n + n - 2);
    for i in 0..n {
        let j = (i + 1) % n;
        let (bi, bj, ti, tj) = (i as u32, j as u32, (n + i) as u32, (n + j) as u32);
        triangles.push([bi, bj, tj]);
        triangles.push([bi, tj, ti]);
    }
    for [a, b, c] in triangulate_ring(ring)? {
        triangles.push([(n + a) as u32, (n + b) as u32, (n + c) as u32]);
    }
    let mesh = TriangleMesh {
        vertices,
        triangles,
        object_id,
        object_kind: ObjectKind::Building,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Two triangles per grid cell, counter-clockwise seen from above.
pub fn build_terrain_mesh(terrain: &TerrainGrid) -> TriangleMesh {
    let (nc, nr) = (terrain.ncols, terrain.nrows);
    let cs = terrain.cell_size_m;
    let mut vertices = Vec::with_capacity(nc * nr);
    for r in 0..nr {
        for c in 0..nc {
            vertices.push(Vec3::new(
                terrain.x0 + c as f64 * cs,
                terrain.y0 + r as f64 * cs,
                terrain.at(r, c),
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nc - 1) * (nr - 1));
    let id = |r: usize, c: usize| (r * nc + c) as u32;
    for r in 0..nr - 1 {
        for c in 0..nc - 1 {
            triangles.push([id(r, c), id(r, c + 1), id(r + 1, c + 1)]);
            triangles.push([id(r, c), id(r + 1, c + 1), id(r + 1, c)]);
        }
    }
    TriangleMesh {
        vertices,
        triangles,
        object_id: TERRAIN_OBJECT_ID,
        object_kind: ObjectKind::Terrain,
    }
}

/// Material names per object class, with per-footprint overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialPolicy {
    pub building: String,
    pub terrain: String,
    /// Footprint id → material name.
    pub overrides: BTreeMap<u32, String>,
}

impl Default for MaterialPolicy {
    fn default() -> Self {
        Self {
            building: "itu_concrete".into(),
            terrain: "itu_medium_dry_ground".into(),
            overrides: BTreeMap::new(),
        }
    }
}

/// Extrudes every footprint and tags materials. Materials are frozen at
/// `frequency_hz`, so the stored `eps_r`/`sigma` are the values in effect.
pub fn assemble_scene(
    footprints: &[BuildingFootprint],
    terrain: &TerrainGrid,
    policy: &MaterialPolicy,
    table: &MaterialTable,
    frequency_hz: f64,
    origin: (f64, f64),
) -> Result<Scene> {
    if !(frequency_hz > 0.0) {
        return Err(Error::Invalid("frequency must be positive".into()));
    }
    let built: Vec<Result<(TriangleMesh, BuildingInfo)>> = par_map(
        &footprints.iter().enumerate().collect::<Vec<_>>(),
        |&(i, fp)| {
            let object_id = i as u32 + 1;
            let base = base_elevation(fp, terrain);
            let mesh = extrude_at(fp, base, fp.height_m, object_id)?;
            Ok((
                mesh,
                BuildingInfo {
                    base_elevation_m: base,
                    height_m: fp.height_m,
                    footprint: fp.clone(),
                },
            ))
        },
    );
    let mut meshes = vec![build_terrain_mesh(terrain)];
    let mut materials = BTreeMap::new();
    let mut buildings = BTreeMap::new();
    materials.insert(TERRAIN_OBJECT_ID, table.get(&policy.terrain)?.frozen_at(frequency_hz));
    for item in built {
        let (mesh, info) = item?;
        let name = policy.overrides.get(&info.footprint.id).unwrap_or(&policy.building);
        materials.insert(mesh.object_id, table.get(name)?.frozen_at(frequency_hz));
        buildings.insert(mesh.object_id, info);
        meshes.push(mesh);
    }
    let scene = Scene {
        meshes,
        materials,
        buildings,
        origin,
        frequency_hz,
    };
    scene.validate()?;
    Ok(scene)
}

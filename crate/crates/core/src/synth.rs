//! Synthetic scenes: flat ground, a closed box, and a Manhattan grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::emwave::{Material, MaterialTable};
use crate::error::Result;
use crate::geodata::{BuildingFootprint, HeightSource, TerrainGrid};
use crate::geom::Vec3;
use crate::scene::{assemble_scene, MaterialPolicy, ObjectKind, Scene, TriangleMesh, TERRAIN_OBJECT_ID};

/// Terrain-only scene over `[x0, x1] × [y0, y1]` at elevation zero.
pub fn flat_scene(x0: f64, y0: f64, x1: f64, y1: f64, ground: Material, frequency_hz: f64) -> Result<Scene> {
    let cell = ((x1 - x0).max(y1 - y0) / 4.0).max(1.0);
    let terrain = TerrainGrid::flat(x0, y0, x1, y1, cell, 0.0)?;
    let mut table = MaterialTable::builtin();
    table.insert(ground.clone());
    let policy = MaterialPolicy {
        terrain: ground.name,
        ..MaterialPolicy::default()
    };
    assemble_scene(&[], &terrain, &policy, &table, frequency_hz, (0.0, 0.0))
}

/// Closed axis-aligned box `[0, dims]` with inward-facing walls, standing in
/// as the scene's only (ground) object. Twelve triangles.
pub fn box_scene(dims: Vec3) -> Scene {
    let (a, b, c) = (dims.x, dims.y, dims.z);
    let vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(a, 0.0, 0.0),
        Vec3::new(a, b, 0.0),
        Vec3::new(0.0, b, 0.0),
        Vec3::new(0.0, 0.0, c),
        Vec3::new(a, 0.0, c),
        Vec3::new(a, b, c),
        Vec3::new(0.0, b, c),
    ];
    // quads listed counter-clockwise as seen from inside
    let quads = [[0, 1, 2, 3], [4, 7, 6, 5], [0, 4, 5, 1], [1, 5, 6, 2], [2, 6, 7, 3], [3, 7, 4, 0]];
    let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    let mut materials = BTreeMap::new();
    materials.insert(
        TERRAIN_OBJECT_ID,
        MaterialTable::builtin().get("itu_concrete").expect("builtin material").frozen_at(3.5e9),
    );
    Scene {
        meshes: vec![TriangleMesh {
            vertices,
            triangles,
            object_id: TERRAIN_OBJECT_ID,
            object_kind: ObjectKind::Terrain,
        }],
        materials,
        buildings: BTreeMap::new(),
        origin: (0.0, 0.0),
        frequency_hz: 3.5e9,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManhattanLayout {
    pub blocks: usize,
    pub block_m: f64,
    pub street_m: f64,
    pub height_m: f64,
}

impl Default for ManhattanLayout {
    fn default() -> Self {
        Self {
            blocks: 8,
            block_m: 20.0,
            street_m: 30.0,
            height_m: 20.0,
        }
    }
}

impl ManhattanLayout {
    /// Side of the square scene: a street on every side of every block.
    pub fn extent(&self) -> f64 {
        self.blocks as f64 * (self.block_m + self.street_m) + self.street_m
    }

    /// One square footprint per block, row-major from the south-west corner.
    pub fn footprints(&self) -> Vec<BuildingFootprint> {
        let pitch = self.block_m + self.street_m;
        let mut out = Vec::with_capacity(self.blocks * self.blocks);
        for j in 0..self.blocks {
            for i in 0..self.blocks {
                let x = self.street_m + i as f64 * pitch;
                let y = self.street_m + j as f64 * pitch;
                let ring = vec![[x, y], [x + self.block_m, y], [x + self.block_m, y + self.block_m], [x, y + self.block_m]];
                out.push(
                    BuildingFootprint::new(out.len() as u32, ring, self.height_m, HeightSource::Explicit)
                        .expect("square footprint is valid"),
                );
            }
        }
        out
    }

    /// Flat ground at zero elevation with concrete buildings.
    pub fn scene(&self, frequency_hz: f64) -> Result<Scene> {
        let w = self.extent();
        let terrain = TerrainGrid::flat(0.0, 0.0, w, w, w / 4.0, 0.0)?;
        assemble_scene(
            &self.footprints(),
            &terrain,
            &MaterialPolicy::default(),
            &MaterialTable::builtin(),
            frequency_hz,
            (0.0, 0.0),
        )
    }
}

//! Scene directory format: a `scene.toml` manifest plus one binary
//! little-endian PLY per mesh (`double` x/y/z, `int` face indices).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BuildingInfo, ObjectKind, Scene, TriangleMesh};
use crate::emwave::Material;
use crate::error::{Error, Result};
use crate::geodata::{BuildingFootprint, HeightSource};
use crate::geom::Vec3;

pub const MANIFEST_FILE: &str = "scene.toml";
const FORMAT_TAG: &str = "gert-scene";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    origin_lat: f64,
    origin_lon: f64,
    frequency_hz: f64,
    #[serde(rename = "object", default)]
    objects: Vec<ObjectEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectEntry {
    id: u32,
    kind: ObjectKind,
    mesh_file: String,
    material: String,
    eps_r: f64,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    building: Option<BuildingEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildingEntry {
    footprint_id: u32,
    base_elevation_m: f64,
    height_m: f64,
    height_source: HeightSource,
    footprint: Vec<[f64; 2]>,
}

pub fn export_scene(scene: &Scene, dir: &Path) -> Result<()> {
    scene.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e.to_string()))?;
    let mut objects = Vec::with_capacity(scene.meshes.len());
    for mesh in &scene.meshes {
        let mesh_file = match mesh.object_kind {
            ObjectKind::Terrain => "terrain.ply".to_string(),
            ObjectKind::Building => format!("building_{:05}.ply", mesh.object_id),
        };
        let path = dir.join(&mesh_file);
        write_ply(mesh, &path)?;
        let material = &scene.materials[&mesh.object_id];
        let building = scene.buildings.get(&mesh.object_id).map(|b| BuildingEntry {
            footprint_id: b.footprint.id,
            base_elevation_m: b.base_elevation_m,
            height_m: b.height_m,
            height_source: b.footprint.height_source,
            footprint: b.footprint.outer_ring.clone(),
        });
        objects.push(ObjectEntry {
            id: mesh.object_id,
            kind: mesh.object_kind,
            mesh_file,
            material: material.name.clone(),
            eps_r: material.eps_r,
            sigma: material.sigma_s_per_m,
            building,
        });
    }
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        origin_lat: scene.origin.0,
        origin_lon: scene.origin.1,
        frequency_hz: scene.frequency_hz,
        objects,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::file(&path, e.to_string()))?;
    Ok(())
}

pub fn import_scene(dir: &Path) -> Result<Scene> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e.to_string()))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::file(&path, e.to_string()))?;
    if manifest.format != FORMAT_TAG || manifest.version != FORMAT_VERSION {
        return Err(Error::file(
            &path,
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    let mut meshes = Vec::new();
    let mut materials = BTreeMap::new();
    let mut buildings = BTreeMap::new();
    for obj in manifest.objects {
        let mesh_path = dir.join(&obj.mesh_file);
        if !mesh_path.is_file() {
            return Err(Error::MeshNotFound(mesh_path));
        }
        let (vertices, triangles) = read_ply(&mesh_path)?;
        let mesh = TriangleMesh {
            vertices,
            triangles,
            object_id: obj.id,
            object_kind: obj.kind,
        };
        mesh.validate().map_err(|e| Error::file(&mesh_path, e.to_string()))?;
        let material = Material {
            name: obj.material,
            eps_r: obj.eps_r,
            sigma_s_per_m: obj.sigma,
            itu_params: None,
        };
        material.validate()?;
        materials.insert(obj.id, material);
        match (obj.kind, obj.building) {
            (ObjectKind::Building, Some(b)) => {
                buildings.insert(
                    obj.id,
                    BuildingInfo {
                        base_elevation_m: b.base_elevation_m,
                        height_m: b.height_m,
                        footprint: BuildingFootprint {
                            id: b.footprint_id,
                            outer_ring: b.footprint,
                            height_m: b.height_m,
                            height_source: b.height_source,
                        },
                    },
                );
            }
            (ObjectKind::Building, None) => {
                return Err(Error::file(&path, format!("building object {} lacks footprint data", obj.id)))
            }
            (ObjectKind::Terrain, Some(_)) => {
                return Err(Error::file(&path, format!("terrain object {} carries building data", obj.id)))
            }
            (ObjectKind::Terrain, None) => {}
        }
        meshes.push(mesh);
    }
    let scene = Scene {
        meshes,
        materials,
        buildings,
        origin: (manifest.origin_lat, manifest.origin_lon),
        frequency_hz: manifest.frequency_hz,
    };
    scene.validate().map_err(|e| Error::file(&path, e.to_string()))?;
    Ok(scene)
}

pub(crate) fn write_ply(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(256 + mesh.vertices.len() * 24 + mesh.triangles.len() * 13);
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\ncomment object {}\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.object_id,
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for v in &mesh.vertices {
        buf.extend_from_slice(&v.x.to_le_bytes());
        buf.extend_from_slice(&v.y.to_le_bytes());
        buf.extend_from_slice(&v.z.to_le_bytes());
    }
    for t in &mesh.triangles {
        buf.push(3);
        for &i in t {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::file(path, e.to_string()))
}

pub(crate) fn read_ply(path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let bad = |msg: String| Error::file(path, msg);
    let file = fs::File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut n_vertices = None;
    let mut n_faces = None;
    let mut first = true;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| bad(e.to_string()))? == 0 {
            return Err(bad("PLY header not terminated".into()));
        }
        let l = line.trim_end();
        if first {
            if l != "ply" {
                return Err(bad("not a PLY file".into()));
            }
            first = false;
            continue;
        }
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("format") => {
                if parts.next() != Some("binary_little_endian") {
                    return Err(bad("only binary_little_endian PLY is supported".into()));
                }
            }
            Some("element") => {
                let name = parts.next();
                let count: usize = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad(format!("bad element line: {l}")))?;
                match name {
                    Some("vertex") => n_vertices = Some(count),
                    Some("face") => n_faces = Some(count),
                    other => return Err(bad(format!("unexpected element {other:?}"))),
                }
            }
            Some("property") => {
                let ok = matches!(
                    l,
                    "property double x"
                        | "property double y"
                        | "property double z"
                        | "property list uchar int vertex_indices"
                );
                if !ok {
                    return Err(bad(format!("unsupported property: {l}")));
                }
            }
            Some("comment") | Some("obj_info") => {}
            Some("end_header") => break,
            _ => return Err(bad(format!("unexpected header line: {l}"))),
        }
    }
    let nv = n_vertices.ok_or_else(|| bad("missing vertex element".into()))?;
    let nf = n_faces.ok_or_else(|| bad("missing face element".into()))?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body).map_err(|e| bad(e.to_string()))?;
    let expected = nv * 24 + nf * 13;
    if body.len() != expected {
        return Err(bad(format!("PLY body has {} bytes, expected {expected}", body.len())));
    }
    let f64_at = |o: usize| f64::from_le_bytes(body[o..o + 8].try_into().unwrap());
    let vertices = (0..nv)
        .map(|i| Vec3::new(f64_at(i * 24), f64_at(i * 24 + 8), f64_at(i * 24 + 16)))
        .collect();
    let mut triangles = Vec::with_capacity(nf);
    let base = nv * 24;
    for f in 0..nf {
        let o = base + f * 13;
        if body[o] != 3 {
            return Err(bad(format!("face {f} is not a triangle")));
        }
        let mut tri = [0u32; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let s = o + 1 + 4 * k;
            let idx = i32::from_le_bytes(body[s..s + 4].try_into().unwrap());
            if idx < 0 || idx as usize >= nv {
                return Err(bad(format!("face {f} references vertex {idx} out of range (0..{nv})")));
            }
            *slot = idx as u32;
        }
        triangles.push(tri);
    }
    Ok((vertices, triangles))
}

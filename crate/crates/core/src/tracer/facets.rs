//! Planar facets (coplanar, edge-connected triangles of one object) and the
//! convex building edges used for diffraction.

use std::collections::BTreeMap;

use crate::geom::{Plane, Vec3};
use crate::scene::{ObjectKind, Scene};

use super::accel::Tri;

/// Two unit triangle normals closer than this are treated as coplanar.
pub const NORMAL_AGREEMENT: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Facet {
    pub object_id: u32,
    /// Front-side plane; only the front side reflects.
    pub plane: Plane,
    /// Global triangle indices.
    pub triangles: Vec<usize>,
    /// Convex hull of the facet's vertices, counter-clockwise about the normal.
    pub hull: Vec<Vec3>,
    /// The triangles exactly tile the hull.
    pub convex: bool,
}

impl Facet {
    /// Inclusion test for a point on a convex facet's plane, with edge
    /// tolerance `eps` relative to edge length squared.
    pub fn hull_contains(&self, p: Vec3, eps: f64) -> bool {
        let n = self.plane.normal;
        (0..self.hull.len()).all(|i| {
            let (a, b) = (self.hull[i], self.hull[(i + 1) % self.hull.len()]);
            let e = b - a;
            e.cross(p - a).dot(n) >= -eps * e.norm_sq()
        })
    }
}

/// A convex wedge edge shared by two facets of the same building.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionEdge {
    pub object_id: u32,
    pub start: Vec3,
    pub end: Vec3,
    /// Unit edge direction, `face0_tangent × face0_normal`.
    pub direction: Vec3,
    pub face0_normal: Vec3,
    /// In-face unit vector of the 0-face, perpendicular to the edge and
    /// pointing away from it.
    pub face0_tangent: Vec3,
    pub face_n_normal: Vec3,
    pub interior_angle: f64,
    pub facets: [u32; 2],
}

impl DiffractionEdge {
    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    /// Angle of `d` (a vector perpendicular-ish to the edge) from the 0-face,
    /// in `[0, 2π)`.
    pub fn angle_of(&self, d: Vec3) -> f64 {
        let a = d.dot(self.face0_normal).atan2(d.dot(self.face0_tangent));
        if a < 0.0 {
            a + 2.0 * std::f64::consts::PI
        } else {
            a
        }
    }

    /// Exterior angle divided by π.
    pub fn n(&self) -> f64 {
        (2.0 * std::f64::consts::PI - self.interior_angle) / std::f64::consts::PI
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Groups triangles into facets and extracts diffraction edges. `tris` must be
/// in scene mesh order; each triangle's `facet` field is filled in.
pub fn build_facets(scene: &Scene, tris: &mut [Tri]) -> (Vec<Facet>, Vec<DiffractionEdge>) {
    let mut facets = Vec::new();
    let mut edges = Vec::new();
    let mut offset = 0;
    for mesh in &scene.meshes {
        let nt = mesh.triangles.len();
        let normals: Vec<Vec3> = (0..nt)
            .map(|i| {
                let [a, b, c] = mesh.triangle(i);
                (b - a).cross(c - a).normalized()
            })
            .collect();
        let mut edge_map: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for (ti, t) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (p, q) = (t[k], t[(k + 1) % 3]);
                edge_map.entry((p.min(q), p.max(q))).or_default().push(ti);
            }
        }
        let mut uf = UnionFind((0..nt).collect());
        for owners in edge_map.values() {
            if let [a, b] = owners[..] {
                if (normals[a] - normals[b]).norm() <= NORMAL_AGREEMENT {
                    uf.union(a, b);
                }
            }
        }
        let mut facet_of_root: BTreeMap<usize, u32> = BTreeMap::new();
        let mut local_facet = vec![0u32; nt];
        for ti in 0..nt {
            let root = uf.find(ti);
            let fid = *facet_of_root.entry(root).or_insert_with(|| {
                let [a, ..] = mesh.triangle(ti);
                facets.push(Facet {
                    object_id: mesh.object_id,
                    plane: Plane::from_point_normal(a, normals[root]),
                    triangles: Vec::new(),
                    hull: Vec::new(),
                    convex: false,
                });
                (facets.len() - 1) as u32
            });
            facets[fid as usize].triangles.push(offset + ti);
            tris[offset + ti].facet = fid;
            local_facet[ti] = fid;
        }
        for &fid in facet_of_root.values() {
            let f = &mut facets[fid as usize];
            let pts: Vec<Vec3> = f.triangles.iter().flat_map(|&g| tris[g].vertices()).collect();
            f.hull = planar_hull(&pts, f.plane.normal);
            let tri_area: f64 = f.triangles.iter().map(|&g| 0.5 * tris[g].e1.cross(tris[g].e2).norm()).sum();
            let hull_area: f64 = (0..f.hull.len())
                .map(|i| 0.5 * f.hull[i].cross(f.hull[(i + 1) % f.hull.len()]).dot(f.plane.normal))
                .sum();
            f.convex = f.hull.len() >= 3 && (tri_area - hull_area).abs() <= 1e-9 * hull_area;
        }

        if mesh.object_kind == ObjectKind::Building {
            for (&(p, q), owners) in &edge_map {
                let [a, b] = owners[..] else { continue };
                if local_facet[a] == local_facet[b] {
                    continue;
                }
                let (p0, p1) = (mesh.vertices[p as usize], mesh.vertices[q as usize]);
                let opposite = |ti: usize| {
                    let t = mesh.triangles[ti];
                    let k = t.iter().position(|&v| v != p && v != q).expect("triangle has a third vertex");
                    mesh.vertices[t[k] as usize]
                };
                let axis = (p1 - p0).normalized();
                let in_face = |w: Vec3| {
                    let r = w - p0;
                    (r - axis * r.dot(axis)).normalized()
                };
                let (ta, tb) = (in_face(opposite(a)), in_face(opposite(b)));
                let (na, nb) = (normals[a], normals[b]);
                // convex only: face b lies behind face a
                if tb.dot(na) >= -1e-9 {
                    continue;
                }
                let interior = ta.dot(tb).clamp(-1.0, 1.0).acos();
                if interior >= std::f64::consts::PI - 1e-6 {
                    continue;
                }
                let direction = ta.cross(na).normalized();
                let (start, end) = if direction.dot(p1 - p0) >= 0.0 { (p0, p1) } else { (p1, p0) };
                edges.push(DiffractionEdge {
                    object_id: mesh.object_id,
                    start,
                    end,
                    direction,
                    face0_normal: na,
                    face0_tangent: ta,
                    face_n_normal: nb,
                    interior_angle: interior,
                    facets: [local_facet[a], local_facet[b]],
                });
            }
        }
        offset += nt;
    }
    (facets, edges)
}

/// Convex hull of coplanar points, counter-clockwise about `normal`.
fn planar_hull(pts: &[Vec3], normal: Vec3) -> Vec<Vec3> {
    let u = normal.any_perpendicular().normalized();
    let v = normal.cross(u);
    let mut p2: Vec<([f64; 2], Vec3)> = pts.iter().map(|&p| ([p.dot(u), p.dot(v)], p)).collect();
    p2.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    p2.dedup_by(|a, b| (a.0[0] - b.0[0]).abs() < 1e-12 && (a.0[1] - b.0[1]).abs() < 1e-12);
    if p2.len() < 3 {
        return p2.into_iter().map(|x| x.1).collect();
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<([f64; 2], Vec3)> = Vec::with_capacity(2 * p2.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &([f64; 2], Vec3)>> =
            if pass == 0 { Box::new(p2.iter()) } else { Box::new(p2.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2].0, hull[hull.len() - 1].0, p.0) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.into_iter().map(|x| x.1).collect()
}

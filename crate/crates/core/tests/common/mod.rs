//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use gert_core::geom::Vec3;
use gert_core::scene::Scene;

#[derive(Debug, Clone)]
pub struct OracleTri {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
    pub plane: usize,
}

#[derive(Debug, Clone)]
pub struct OraclePlane {
    pub normal: Vec3,
    pub offset: f64,
}

impl OraclePlane {
    pub fn sd(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Triangles grouped by supporting plane (one group per distinct plane and
/// object), without any adjacency reasoning.
pub fn planes_of(scene: &Scene) -> (Vec<OracleTri>, Vec<OraclePlane>) {
    let mut tris = Vec::new();
    let mut planes: Vec<(u32, OraclePlane)> = Vec::new();
    for m in &scene.meshes {
        for t in &m.triangles {
            let [a, b, c] = t.map(|i| m.vertices[i as usize]);
            let n = (b - a).cross(c - a).normalized();
            let off = n.dot(a);
            let idx = planes
                .iter()
                .position(|(o, p)| *o == m.object_id && (p.normal - n).norm() < 1e-9 && (p.offset - off).abs() < 1e-9)
                .unwrap_or_else(|| {
                    planes.push((m.object_id, OraclePlane { normal: n, offset: off }));
                    planes.len() - 1
                });
            tris.push(OracleTri { a, b, c, plane: idx });
        }
    }
    (tris, planes.into_iter().map(|p| p.1).collect())
}

fn ray_hits(t: &OracleTri, o: Vec3, d: Vec3, t0: f64, t1: f64) -> bool {
    let e1 = t.b - t.a;
    let e2 = t.c - t.a;
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-300 {
        return false;
    }
    let s = o - t.a;
    let u = s.dot(p) / det;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(e1);
    let v = d.dot(q) / det;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let h = e2.dot(q) / det;
    h > t0 && h < t1
}

pub fn blocked(tris: &[OracleTri], a: Vec3, b: Vec3, skip: &[usize]) -> bool {
    let len = a.distance(b);
    let d = (b - a) / len;
    tris.iter()
        .any(|t| !skip.contains(&t.plane) && ray_hits(t, a, d, 1e-6, len - 1e-6))
}

fn in_plane_group(tris: &[OracleTri], plane: usize, p: Vec3) -> bool {
    tris.iter().filter(|t| t.plane == plane).any(|t| {
        let (v0, v1, v2) = (t.c - t.a, t.b - t.a, p - t.a);
        let (d00, d01, d02, d11, d12) = (v0.dot(v0), v0.dot(v1), v0.dot(v2), v1.dot(v1), v1.dot(v2));
        let den = d00 * d11 - d01 * d01;
        let u = (d11 * d02 - d01 * d12) / den;
        let v = (d00 * d12 - d01 * d02) / den;
        u >= -1e-9 && v >= -1e-9 && u + v <= 1.0 + 1e-9
    })
}

/// Exhaustive specular enumeration over every plane sequence of length
/// `1..=max_order`. Returns (plane sequence, vertices Tx → … → Rx).
pub fn brute_force_reflections(scene: &Scene, tx: Vec3, rx: Vec3, max_order: usize) -> Vec<(Vec<usize>, Vec<Vec3>)> {
    let (tris, planes) = planes_of(scene);
    let np = planes.len();
    let mut out = Vec::new();
    let mut seq = Vec::new();
    fn rec(
        depth: usize,
        max: usize,
        np: usize,
        seq: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if depth > 0 {
            f(seq);
        }
        if depth == max {
            return;
        }
        for p in 0..np {
            if seq.last() == Some(&p) {
                continue;
            }
            seq.push(p);
            rec(depth + 1, max, np, seq, f);
            seq.pop();
        }
    }
    rec(0, max_order, np, &mut seq, &mut |s: &[usize]| {
        let mut images = vec![tx];
        for &p in s {
            let pl = &planes[p];
            let prev = *images.last().unwrap();
            images.push(prev - pl.normal * (2.0 * pl.sd(prev)));
        }
        let mut pts = vec![Vec3::ZERO; s.len()];
        let mut target = rx;
        for k in (0..s.len()).rev() {
            let pl = &planes[s[k]];
            let src = images[k];
            let img = images[k + 1];
            if pl.sd(src) <= 0.0 || pl.sd(target) <= 0.0 {
                return;
            }
            let (di, dt) = (pl.sd(img), pl.sd(target));
            let r = img + (target - img) * (di / (di - dt));
            if !in_plane_group(&tris, s[k], r) {
                return;
            }
            pts[k] = r;
            target = r;
        }
        let mut verts = vec![tx];
        verts.extend(pts);
        verts.push(rx);
        for i in 0..verts.len() - 1 {
            let mut skip = Vec::new();
            if i > 0 {
                skip.push(s[i - 1]);
            }
            if i < s.len() {
                skip.push(s[i]);
            }
            if blocked(&tris, verts[i], verts[i + 1], &skip) {
                return;
            }
        }
        out.push((s.to_vec(), verts));
    });
    out
}

/// Plane index (oracle numbering) of a point lying on a scene surface.
pub fn plane_of_point(planes: &[OraclePlane], p: Vec3, normal: Vec3) -> usize {
    planes
        .iter()
        .position(|pl| (pl.normal - normal).norm() < 1e-6 && pl.sd(p).abs() < 1e-6)
        .expect("point lies on a known plane")
}

/// Fresnel integral tail `∫_v^∞ e^{−jt²} dt` by composite Simpson on a
/// truncated range plus the leading asymptotic remainder.
pub fn fresnel_tail_quadrature(v: f64) -> (f64, f64) {
    // ∫_v^T e^{-jt²} dt + remainder at T, remainder ≈ e^{-jT²}/(2jT)·(1 + 1/(2jT²))
    let t_end: f64 = 60.0;
    let n = 2_000_000usize;
    let h = (t_end - v) / n as f64;
    let f = |t: f64| ((t * t).cos(), -(t * t).sin());
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..=n {
        let t = v + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let (a, b) = f(t);
        re += w * a;
        im += w * b;
    }
    re *= h / 3.0;
    im *= h / 3.0;
    // remainder: e^{-jT²}/(2jT) = -j e^{-jT²}/(2T)
    let (c, s) = ((t_end * t_end).cos(), -(t_end * t_end).sin());
    let (rr, ri) = (s / (2.0 * t_end), -c / (2.0 * t_end));
    (re + rr, im + ri)
}

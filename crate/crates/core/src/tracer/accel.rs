//! Bounding-volume hierarchy over every scene triangle.

use crate::geom::{Aabb, Vec3};
use crate::scene::Scene;

/// A scene triangle in edge form, with its owning object and facet.
#[derive(Debug, Clone, Copy)]
pub struct Tri {
    pub v0: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub object_id: u32,
    pub facet: u32,
}

impl Tri {
    pub fn new(a: Vec3, b: Vec3, c: Vec3, object_id: u32) -> Self {
        Self {
            v0: a,
            e1: b - a,
            e2: c - a,
            object_id,
            facet: u32::MAX,
        }
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.v0, self.v0 + self.e1, self.v0 + self.e2]
    }

    fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for v in self.vertices() {
            b.grow(v);
        }
        b
    }

    /// Möller–Trumbore; returns the ray parameter of a hit in `(t_min, t_max)`.
    #[inline]
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let p = dir.cross(self.e2);
        let det = self.e1.dot(p);
        if det.abs() < 1e-300 {
            return None;
        }
        let inv = 1.0 / det;
        let s = origin - self.v0;
        let u = s.dot(p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(self.e1);
        let v = dir.dot(q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = self.e2.dot(q) * inv;
        (t > t_min && t < t_max).then_some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
    pub object_id: u32,
    pub point: Vec3,
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle slot; interior: index of the right child (left
    /// child is the next node).
    start_or_right: u32,
    /// Number of triangles for leaves, 0 for interior nodes.
    count: u32,
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct Bvh {
    pub tris: Vec<Tri>,
    nodes: Vec<Node>,
    /// Leaf slot → triangle index.
    order: Vec<u32>,
}

impl Bvh {
    pub fn from_scene(scene: &Scene) -> Self {
        let mut tris = Vec::with_capacity(scene.triangle_count());
        for mesh in &scene.meshes {
            for i in 0..mesh.triangles.len() {
                let [a, b, c] = mesh.triangle(i);
                tris.push(Tri::new(a, b, c, mesh.object_id));
            }
        }
        Self::build(tris)
    }

    pub fn build(tris: Vec<Tri>) -> Self {
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let bounds: Vec<Aabb> = tris.iter().map(Tri::bounds).collect();
        let centroids: Vec<Vec3> = bounds.iter().map(Aabb::centroid).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        if !tris.is_empty() {
            build_recursive(&mut nodes, &mut order, &bounds, &centroids, 0, tris.len());
        }
        Self { tris, nodes, order }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Nearest hit with `t` in `(t_min, t_max)`; ties go to the lower
    /// triangle index.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(f64, usize)> = None;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let ni = stack[sp] as usize;
            let node = &self.nodes[ni];
            let limit = best.map_or(t_max, |(t, _)| t);
            if node.bounds.hit(origin, inv, limit * (1.0 + 1e-12) + 1e-12).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start_or_right as usize;
                for &ti in &self.order[s..s + node.count as usize] {
                    let ti = ti as usize;
                    if let Some(t) = self.tris[ti].intersect(origin, dir, t_min, t_max) {
                        let better = match best {
                            None => true,
                            Some((bt, bi)) => t < bt || (t == bt && ti < bi),
                        };
                        if better {
                            best = Some((t, ti));
                        }
                    }
                }
            } else {
                stack[sp] = node.start_or_right;
                stack[sp + 1] = ni as u32 + 1;
                sp += 2;
            }
        }
        best.map(|(t, ti)| Hit {
            t,
            triangle: ti,
            object_id: self.tris[ti].object_id,
            point: origin + dir * t,
        })
    }

    /// True when any triangle not in `ignore_facets` blocks the open segment
    /// `a → b`, excluding `eps` meters at each end.
    pub fn occluded(&self, a: Vec3, b: Vec3, ignore_facets: &[u32], eps: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let d = b - a;
        let len = d.norm();
        if len <= 2.0 * eps {
            return false;
        }
        let dir = d / len;
        let (t_min, t_max) = (eps, len - eps);
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let ni = stack[sp] as usize;
            let node = &self.nodes[ni];
            if node.bounds.hit(a, inv, t_max * (1.0 + 1e-12) + 1e-12).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start_or_right as usize;
                for &ti in &self.order[s..s + node.count as usize] {
                    let tri = &self.tris[ti as usize];
                    if ignore_facets.contains(&tri.facet) {
                        continue;
                    }
                    if tri.intersect(a, dir, t_min, t_max).is_some() {
                        return true;
                    }
                }
            } else {
                stack[sp] = node.start_or_right;
                stack[sp + 1] = ni as u32 + 1;
                sp += 2;
            }
        }
        false
    }
}

fn build_recursive(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    bounds: &[Aabb],
    centroids: &[Vec3],
    start: usize,
    end: usize,
) -> usize {
    let idx = nodes.len();
    let mut b = Aabb::EMPTY;
    let mut cb = Aabb::EMPTY;
    for &i in &order[start..end] {
        b = b.union(&bounds[i as usize]);
        cb.grow(centroids[i as usize]);
    }
    nodes.push(Node {
        bounds: b,
        start_or_right: start as u32,
        count: (end - start) as u32,
    });
    if end - start <= LEAF_SIZE {
        return idx;
    }
    let ext = cb.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    if ext[axis] <= 0.0 {
        return idx;
    }
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&p, &q| {
        centroids[p as usize][axis]
            .total_cmp(&centroids[q as usize][axis])
            .then(p.cmp(&q))
    });
    build_recursive(nodes, order, bounds, centroids, start, mid);
    let right = build_recursive(nodes, order, bounds, centroids, mid, end);
    nodes[idx].start_or_right = right as u32;
    nodes[idx].count = 0;
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(tris: &[Tri], o: Vec3, d: Vec3, t_max: f64) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, t) in tris.iter().enumerate() {
            if let Some(h) = t.intersect(o, d, 0.0, t_max) {
                if best.is_none_or(|(bt, _)| h < bt) {
                    best = Some((h, i));
                }
            }
        }
        best
    }

    fn random_tris(rng: &mut ChaCha8Rng, n: usize) -> Vec<Tri> {
        (0..n)
            .map(|i| {
                let c = Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
                let mut v = || c + Vec3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                let (a, b, cc) = (v(), v(), v());
                let mut t = Tri::new(a, b, cc, i as u32);
                t.facet = i as u32;
                t
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_rays() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tris = random_tris(&mut rng, 50);
        let bvh = Bvh::build(tris.clone());
        for _ in 0..1000 {
            let o = Vec3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalized();
            let got = bvh.intersect(o, d, 0.0, 1e9).map(|h| (h.t, h.triangle));
            assert_eq!(got, brute_force(&tris, o, d, 1e9));
            let occl = bvh.occluded(o, o + d * 25.0, &[], 1e-6);
            let brute = tris.iter().any(|t| t.intersect(o, d, 1e-6, 25.0 - 1e-6).is_some());
            assert_eq!(occl, brute);
        }
    }

    #[test]
    fn empty_structure_misses() {
        let bvh = Bvh::build(Vec::new());
        assert!(bvh.intersect(Vec3::ZERO, Vec3::X, 0.0, 1e9).is_none());
        assert!(!bvh.occluded(Vec3::ZERO, Vec3::X, &[], 1e-6));
    }

    #[test]
    fn axis_aligned_hit_point() {
        let t = Tri::new(Vec3::new(0.0, 0.0, 5.0), Vec3::new(10.0, 0.0, 5.0), Vec3::new(0.0, 10.0, 5.0), 1);
        let bvh = Bvh::build(vec![t]);
        let h = bvh.intersect(Vec3::new(1.25, 2.5, 0.0), Vec3::Z, 0.0, 1e9).unwrap();
        assert!(h.point.distance(Vec3::new(1.25, 2.5, 5.0)) < 1e-9);
        assert_eq!(h.object_id, 1);
    }
}

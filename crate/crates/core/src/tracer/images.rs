//! Source-image tree for specular reflections.
//!
//! Each node mirrors its parent's image across one facet. A child is kept
//! only if its facet can intersect the parent's reflection beam: the cone
//! from the image through the convex hull of the parent facet, beyond that
//! facet's plane. The test is conservative; every candidate path is later
//! rebuilt from the receiver and validated exactly.

use crate::geom::{Plane, Vec3};

use super::facets::Facet;

/// Points closer than this to a facet plane count as on the back side.
pub(crate) const FRONT_EPS: f64 = 1e-9;
/// Slack for the beam side-plane tests, in meters.
const BEAM_TOL: f64 = 1e-7;

const ROOT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct ImageNode {
    pub facet: u32,
    pub parent: u32,
    pub depth: u8,
    pub image: Vec3,
    planes_start: u32,
    planes_len: u32,
}

#[derive(Debug, Clone)]
pub struct ImageTree {
    pub(crate) nodes: Vec<ImageNode>,
    planes: Vec<Plane>,
}

impl ImageTree {
    pub fn build(facets: &[Facet], source: Vec3, max_order: u8) -> Self {
        let mut tree = ImageTree {
            nodes: Vec::new(),
            planes: Vec::new(),
        };
        if max_order == 0 {
            return tree;
        }
        for (g, facet) in facets.iter().enumerate() {
            if facet.plane.signed_distance(source) > FRONT_EPS {
                tree.push(facets, g as u32, ROOT, 1, facet.plane.mirror(source));
            }
        }
        let mut level = 0..tree.nodes.len();
        for depth in 2..=max_order {
            let start = tree.nodes.len();
            for ni in level.clone() {
                let (parent_facet, image) = (tree.nodes[ni].facet, tree.nodes[ni].image);
                for (g, facet) in facets.iter().enumerate() {
                    if g as u32 == parent_facet || facet.plane.signed_distance(image) <= FRONT_EPS {
                        continue;
                    }
                    if tree.beam_may_reach(ni, &facets[parent_facet as usize], facet) {
                        tree.push(facets, g as u32, ni as u32, depth, facet.plane.mirror(image));
                    }
                }
            }
            level = start..tree.nodes.len();
            if level.is_empty() {
                break;
            }
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, facets: &[Facet], facet: u32, parent: u32, depth: u8, image: Vec3) {
        let hull = &facets[facet as usize].hull;
        let planes_start = self.planes.len() as u32;
        let centroid = hull.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / hull.len() as f64;
        for i in 0..hull.len() {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            let n = (a - image).cross(b - image);
            if n.norm() < 1e-12 {
                continue;
            }
            let mut plane = Plane::from_point_normal(image, n);
            if plane.signed_distance(centroid) > 0.0 {
                plane = Plane {
                    normal: -plane.normal,
                    offset: -plane.offset,
                };
            }
            self.planes.push(plane);
        }
        self.nodes.push(ImageNode {
            facet,
            parent,
            depth,
            image,
            planes_start,
            planes_len: self.planes.len() as u32 - planes_start,
        });
    }

    fn side_planes(&self, node: usize) -> &[Plane] {
        let n = &self.nodes[node];
        &self.planes[n.planes_start as usize..(n.planes_start + n.planes_len) as usize]
    }

    fn beam_may_reach(&self, node: usize, aperture: &Facet, target: &Facet) -> bool {
        if !target.hull.iter().any(|&v| aperture.plane.signed_distance(v) > FRONT_EPS) {
            return false;
        }
        self.side_planes(node)
            .iter()
            .all(|p| target.hull.iter().any(|&v| p.signed_distance(v) <= BEAM_TOL))
    }

    /// Whether `p` can lie in the beam leaving `node`'s facet.
    #[inline]
    pub(crate) fn beam_contains(&self, node: usize, facets: &[Facet], p: Vec3) -> bool {
        let f = &facets[self.nodes[node].facet as usize];
        f.plane.signed_distance(p) > FRONT_EPS && self.side_planes(node).iter().all(|pl| pl.signed_distance(p) <= BEAM_TOL)
    }

    /// Facet sequence from the first bounce to `node`.
    pub(crate) fn chain(&self, mut node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[node].depth as usize);
        loop {
            out.push(node);
            let p = self.nodes[node].parent;
            if p == ROOT {
                break;
            }
            node = p as usize;
        }
        out.reverse();
        out
    }
}

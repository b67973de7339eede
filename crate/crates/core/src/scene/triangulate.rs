use crate::error::{Error, Result};
use crate::geom::{is_simple, orient2d, signed_area, Point2};

fn inside_or_on(p: Point2, a: Point2, b: Point2, c: Point2) -> bool {
    orient2d(a, b, p) >= 0.0 && orient2d(b, c, p) >= 0.0 && orient2d(c, a, p) >= 0.0
}

/// Ear-clipping triangulation of a simple ring. Returns `n − 2` index
/// triples, each counter-clockwise. A clockwise ring is handled by walking it
/// in reverse.
pub fn triangulate_ring(ring: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let n = ring.len();
    if n < 3 {
        return Err(Error::Geometry(format!("ring has {n} vertices")));
    }
    if !is_simple(ring) {
        return Err(Error::Geometry("ring is self-intersecting".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if signed_area(ring) < 0.0 {
        idx.reverse();
    }
    let mut out = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let (ip, ic, inx) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            let (a, b, c) = (ring[ip], ring[ic], ring[inx]);
            if orient2d(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx
                .iter()
                .filter(|&&j| j != ip && j != ic && j != inx)
                .any(|&j| inside_or_on(ring[j], a, b, c));
            if blocked {
                continue;
            }
            out.push([ip, ic, inx]);
            idx.remove(i);
            clipped = true;
            break;
        }
        if !clipped {
            return Err(Error::Geometry("ear clipping found no ear (degenerate ring)".into()));
        }
    }
    out.push([idx[0], idx[1], idx[2]]);
    Ok(out)
}

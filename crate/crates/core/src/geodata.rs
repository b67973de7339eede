//! Building footprints, terrain grids and the local metric frame.
//!
//! Geographic input (WGS84 degrees) is projected with an equirectangular
//! projection anchored at the region origin. Terrain grids are Esri ASCII
//! rasters already expressed in that local frame (meters east/north of the
//! origin), which is what the fetch layer produces.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::{is_simple, signed_area, Point2};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Footprints below this area are dropped rather than repaired.
pub const MIN_FOOTPRINT_AREA_M2: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoRegion {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl GeoRegion {
    /// Region with the projection origin at its centroid.
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        Self::with_origin(
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            0.5 * (lat_min + lat_max),
            0.5 * (lon_min + lon_max),
        )
    }

    pub fn with_origin(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
        origin_lat: f64,
        origin_lon: f64,
    ) -> Result<Self> {
        let r = Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            origin_lat,
            origin_lon,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat_min < self.lat_max) || !(self.lon_min < self.lon_max) {
            return Err(Error::Invalid(format!("degenerate region {self:?}")));
        }
        if self.lat_min.abs() >= 89.0 || self.lat_max.abs() >= 89.0 {
            return Err(Error::Invalid("region latitude must stay within ±89°".into()));
        }
        let inside = (self.lat_min..=self.lat_max).contains(&self.origin_lat)
            && (self.lon_min..=self.lon_max).contains(&self.origin_lon);
        if !inside {
            return Err(Error::Invalid("projection origin lies outside the region".into()));
        }
        Ok(())
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_lat, self.origin_lon)
    }

    /// Region corners in the local frame: `(x_min, y_min, x_max, y_max)`.
    pub fn local_bounds(&self) -> (f64, f64, f64, f64) {
        let (x0, y0) = latlon_to_local(self.lat_min, self.lon_min, self.origin());
        let (x1, y1) = latlon_to_local(self.lat_max, self.lon_max, self.origin());
        (x0, y0, x1, y1)
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

/// Equirectangular projection to meters east (`x`) and north (`y`) of `origin`.
pub fn latlon_to_local(lat: f64, lon: f64, origin: (f64, f64)) -> (f64, f64) {
    let (lat0, lon0) = origin;
    let y = EARTH_RADIUS_M * (lat - lat0).to_radians();
    let x = EARTH_RADIUS_M * (lon - lon0).to_radians() * lat0.to_radians().cos();
    (x, y)
}

/// Exact inverse of [`latlon_to_local`].
pub fn local_to_latlon(x: f64, y: f64, origin: (f64, f64)) -> (f64, f64) {
    let (lat0, lon0) = origin;
    let lat = lat0 + (y / EARTH_RADIUS_M).to_degrees();
    let lon = lon0 + (x / (EARTH_RADIUS_M * lat0.to_radians().cos())).to_degrees();
    (lat, lon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightSource {
    Explicit,
    LevelsRule,
    DefaultRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingFootprint {
    pub id: u32,
    /// Counter-clockwise ring in the local frame, implicitly closed.
    pub outer_ring: Vec<Point2>,
    pub height_m: f64,
    pub height_source: HeightSource,
}

impl BuildingFootprint {
    /// Builds a footprint from any simple ring, fixing orientation to CCW.
    pub fn new(id: u32, ring: Vec<Point2>, height_m: f64, height_source: HeightSource) -> Result<Self> {
        let ring = normalize_ring(ring);
        if ring.len() < 3 {
            return Err(Error::Geometry(format!("footprint {id} has fewer than 3 distinct vertices")));
        }
        if !is_simple(&ring) {
            return Err(Error::Geometry(format!("footprint {id} is self-intersecting")));
        }
        let mut ring = ring;
        if signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        Ok(Self {
            id,
            outer_ring: ring,
            height_m,
            height_source,
        })
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.outer_ring)
    }
}

/// Height assignment when footprints lack an explicit height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeightRules {
    pub default_height_m: f64,
    pub storey_height_m: f64,
}

impl Default for HeightRules {
    fn default() -> Self {
        Self {
            default_height_m: 6.0,
            storey_height_m: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedFootprints {
    pub footprints: Vec<BuildingFootprint>,
    /// Polygons dropped because they were degenerate or self-intersecting.
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Parses a GeoJSON FeatureCollection of Polygon/MultiPolygon buildings.
pub fn parse_footprints(bytes: &[u8], region: &GeoRegion) -> Result<ParsedFootprints> {
    parse_footprints_with(bytes, region, &HeightRules::default())
}

pub fn parse_footprints_with(bytes: &[u8], region: &GeoRegion, rules: &HeightRules) -> Result<ParsedFootprints> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let bad = |msg: &str| Error::Parse {
        line: 0,
        message: msg.to_string(),
    };
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("document is not a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("FeatureCollection lacks a features array"))?;

    let (bx0, by0, bx1, by1) = region.local_bounds();
    let mut out = ParsedFootprints::default();
    let mut next_id = 0u32;
    for (fi, feature) in features.iter().enumerate() {
        let Some(geometry) = feature.get("geometry").filter(|g| !g.is_null()) else {
            out.warnings.push(format!("feature {fi}: no geometry"));
            continue;
        };
        let props = feature.get("properties");
        let (height_m, height_source) = resolve_height(props, rules);
        let polygons: Vec<&Value> = match geometry.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![geometry.get("coordinates").ok_or_else(|| bad("Polygon lacks coordinates"))?],
            Some("MultiPolygon") => geometry
                .get("coordinates")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("MultiPolygon lacks coordinates"))?
                .iter()
                .collect(),
            other => {
                out.warnings.push(format!("feature {fi}: unsupported geometry {other:?}"));
                continue;
            }
        };
        for poly in polygons {
            let outer = poly
                .as_array()
                .and_then(|rings| rings.first())
                .ok_or_else(|| bad("polygon without rings"))?;
            let ring = parse_ring(outer).ok_or_else(|| bad(&format!("feature {fi}: malformed coordinates")))?;
            let local: Vec<Point2> = ring
                .iter()
                .map(|&[lon, lat]| {
                    let (x, y) = latlon_to_local(lat, lon, region.origin());
                    [x, y]
                })
                .collect();
            let clipped = clip_ring_to_box(&local, bx0, by0, bx1, by1);
            if clipped.is_empty() {
                continue;
            }
            let id = next_id;
            next_id += 1;
            let clipped = normalize_ring(clipped);
            if clipped.len() < 3 || signed_area(&clipped).abs() < MIN_FOOTPRINT_AREA_M2 {
                out.dropped += 1;
                out.warnings.push(format!("feature {fi}: degenerate polygon dropped"));
                continue;
            }
            match BuildingFootprint::new(id, clipped, height_m, height_source) {
                Ok(fp) => out.footprints.push(fp),
                Err(e) => {
                    out.dropped += 1;
                    out.warnings.push(format!("feature {fi}: {e}"));
                }
            }
        }
    }
    Ok(out)
}

fn numeric_property(props: Option<&Value>, keys: &[&str]) -> Option<f64> {
    let props = props?;
    keys.iter().find_map(|k| match props.get(*k)? {
        Value::Number(n) => n.as_f64(),
        // OSM tags arrive as strings such as "12" or "12 m".
        Value::String(s) => s.trim().trim_end_matches('m').trim().parse().ok(),
        _ => None,
    })
}

fn resolve_height(props: Option<&Value>, rules: &HeightRules) -> (f64, HeightSource) {
    if let Some(h) = numeric_property(props, &["height"]).filter(|h| *h > 0.0) {
        return (h, HeightSource::Explicit);
    }
    if let Some(l) = numeric_property(props, &["levels", "building:levels"]).filter(|l| *l > 0.0) {
        return (l * rules.storey_height_m, HeightSource::LevelsRule);
    }
    (rules.default_height_m, HeightSource::DefaultRule)
}

fn parse_ring(v: &Value) -> Option<Vec<Point2>> {
    v.as_array()?
        .iter()
        .map(|p| {
            let p = p.as_array()?;
            Some([p.first()?.as_f64()?, p.get(1)?.as_f64()?])
        })
        .collect()
}

/// Drops the closing vertex, consecutive duplicates and collinear vertices.
fn normalize_ring(mut ring: Vec<Point2>) -> Vec<Point2> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    loop {
        let n = ring.len();
        if n < 3 {
            return ring;
        }
        let scale = ring
            .iter()
            .fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()))
            .max(1.0);
        let idx = (0..n).find(|&i| {
            let a = ring[(i + n - 1) % n];
            let b = ring[i];
            let c = ring[(i + 1) % n];
            crate::geom::orient2d(a, b, c).abs() <= 1e-12 * scale * scale
        });
        match idx {
            Some(i) => {
                ring.remove(i);
            }
            None => return ring,
        }
    }
}

/// Sutherland–Hodgman clip of a ring against an axis-aligned box.
pub fn clip_ring_to_box(ring: &[Point2], x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    let mut poly: Vec<Point2> = ring.to_vec();
    if poly.len() > 1 && poly.first() == poly.last() {
        poly.pop();
    }
    // (axis, bound, keep_greater)
    let planes = [(0, x0, true), (0, x1, false), (1, y0, true), (1, y1, false)];
    for (axis, bound, keep_greater) in planes {
        if poly.is_empty() {
            break;
        }
        let inside = |p: &Point2| if keep_greater { p[axis] >= bound } else { p[axis] <= bound };
        let mut out = Vec::with_capacity(poly.len() + 4);
        for i in 0..poly.len() {
            let cur = poly[i];
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut p = [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])];
                p[axis] = bound;
                out.push(p);
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
    }
    poly
}

/// Regular elevation lattice in the local frame. Sample `(row, col)` sits at
/// `(x0 + col·cell, y0 + row·cell)`; row 0 is the southernmost row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub cell_size_m: f64,
    pub x0: f64,
    pub y0: f64,
    pub elevation: Vec<f64>,
}

impl TerrainGrid {
    pub fn new(ncols: usize, nrows: usize, cell_size_m: f64, x0: f64, y0: f64, elevation: Vec<f64>) -> Result<Self> {
        if ncols < 2 || nrows < 2 {
            return Err(Error::Invalid(format!("terrain grid must be at least 2x2, got {ncols}x{nrows}")));
        }
        if !(cell_size_m > 0.0) {
            return Err(Error::Invalid("terrain cell size must be positive".into()));
        }
        if elevation.len() != ncols * nrows {
            return Err(Error::Invalid(format!(
                "terrain body has {} values, expected {}",
                elevation.len(),
                ncols * nrows
            )));
        }
        Ok(Self {
            ncols,
            nrows,
            cell_size_m,
            x0,
            y0,
            elevation,
        })
    }

    /// Flat grid covering `[x0, x1] × [y0, y1]`.
    pub fn flat(x0: f64, y0: f64, x1: f64, y1: f64, cell_size_m: f64, z: f64) -> Result<Self> {
        let ncols = (((x1 - x0) / cell_size_m).ceil() as usize + 1).max(2);
        let nrows = (((y1 - y0) / cell_size_m).ceil() as usize + 1).max(2);
        Self::new(ncols, nrows, cell_size_m, x0, y0, vec![z; ncols * nrows])
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.elevation[row * self.ncols + col]
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.ncols - 1) as f64 * self.cell_size_m
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + (self.nrows - 1) as f64 * self.cell_size_m
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x_max() && y >= self.y0 && y <= self.y_max()
    }

    /// Bilinear interpolation, clamped to the grid extent.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.x0) / self.cell_size_m).clamp(0.0, (self.ncols - 1) as f64);
        let fy = ((y - self.y0) / self.cell_size_m).clamp(0.0, (self.nrows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.ncols - 2);
        let r0 = (fy.floor() as usize).min(self.nrows - 2);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let z00 = self.at(r0, c0);
        let z01 = self.at(r0, c0 + 1);
        let z10 = self.at(r0 + 1, c0);
        let z11 = self.at(r0 + 1, c0 + 1);
        let south = z00 + (z01 - z00) * tx;
        let north = z10 + (z11 - z10) * tx;
        south + (north - south) * ty
    }
}

#[derive(Debug, Clone)]
pub struct ParsedDem {
    pub grid: TerrainGrid,
    pub nodata_filled: usize,
}

/// Parses an Esri ASCII grid whose coordinates are in the local frame.
///
/// Only rows and columns whose samples fall within the region (grown by one
/// cell) are kept; NODATA cells are replaced by their nearest valid neighbor
/// with ties going to the first candidate in file scan order.
pub fn parse_dem(bytes: &[u8], region: &GeoRegion) -> Result<ParsedDem> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("grid is not UTF-8: {e}"),
    })?;
    let mut header: Vec<(String, f64)> = Vec::new();
    let mut body: Vec<f64> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace().peekable();
        let Some(first) = tokens.peek().copied() else { continue };
        if body.is_empty() && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let key = first.to_ascii_lowercase();
            tokens.next();
            let value = tokens
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    line: ln + 1,
                    message: format!("header key {key} lacks a numeric value"),
                })?;
            header.push((key, value));
            continue;
        }
        for tok in tokens {
            body.push(tok.parse::<f64>().map_err(|_| Error::Parse {
                line: ln + 1,
                message: format!("invalid elevation value {tok:?}"),
            })?);
        }
    }
    let get = |key: &str| header.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
    let need = |key: &str| get(key).ok_or_else(|| Error::MissingHeaderKey(key.to_string()));
    let ncols = need("ncols")? as usize;
    let nrows = need("nrows")? as usize;
    let cell = need("cellsize")?;
    let (xc, yc) = match (get("xllcorner"), get("yllcorner"), get("xllcenter"), get("yllcenter")) {
        (Some(x), Some(y), _, _) => (x + 0.5 * cell, y + 0.5 * cell),
        (_, _, Some(x), Some(y)) => (x, y),
        (None, _, None, _) => return Err(Error::MissingHeaderKey("xllcorner".into())),
        _ => return Err(Error::MissingHeaderKey("yllcorner".into())),
    };
    let nodata = get("nodata_value");
    if body.len() != ncols * nrows {
        return Err(Error::Invalid(format!(
            "grid body has {} values, header declares {}x{} = {}",
            body.len(),
            ncols,
            nrows,
            ncols * nrows
        )));
    }

    let is_nodata = |v: f64| nodata.is_some_and(|nd| v == nd) || !v.is_finite();
    let filled = fill_nodata(&mut body, ncols, nrows, is_nodata)?;

    // File rows run north to south; store south first.
    let mut elevation = Vec::with_capacity(body.len());
    for r in (0..nrows).rev() {
        elevation.extend_from_slice(&body[r * ncols..(r + 1) * ncols]);
    }
    let grid = TerrainGrid::new(ncols, nrows, cell, xc, yc, elevation)?;
    let grid = crop_to_region(grid, region);
    Ok(ParsedDem {
        grid,
        nodata_filled: filled,
    })
}

fn fill_nodata(body: &mut [f64], ncols: usize, nrows: usize, is_nodata: impl Fn(f64) -> bool) -> Result<usize> {
    let holes: Vec<usize> = (0..body.len()).filter(|&i| is_nodata(body[i])).collect();
    if holes.is_empty() {
        return Ok(0);
    }
    if holes.len() == body.len() {
        return Err(Error::Invalid("grid contains only NODATA values".into()));
    }
    let valid: Vec<bool> = body.iter().map(|v| !is_nodata(*v)).collect();
    let source = body.to_vec();
    let max_r = ncols.max(nrows) as isize;
    for &h in &holes {
        let (hr, hc) = ((h / ncols) as isize, (h % ncols) as isize);
        let mut best: Option<(isize, usize)> = None;
        let mut ring = 1isize;
        while ring <= max_r {
            // Cells at Chebyshev radius r can be as close as r, so stop once
            // the best squared distance cannot improve.
            if let Some((d2, _)) = best {
                if ring * ring > d2 {
                    break;
                }
            }
            for r in (hr - ring).max(0)..=(hr + ring).min(nrows as isize - 1) {
                for c in (hc - ring).max(0)..=(hc + ring).min(ncols as isize - 1) {
                    if (r - hr).abs() != ring && (c - hc).abs() != ring {
                        continue;
                    }
                    let idx = r as usize * ncols + c as usize;
                    if !valid[idx] {
                        continue;
                    }
                    let d2 = (r - hr).pow(2) + (c - hc).pow(2);
                    let better = match best {
                        None => true,
                        Some((bd, bi)) => d2 < bd || (d2 == bd && idx < bi),
                    };
                    if better {
                        best = Some((d2, idx));
                    }
                }
            }
            ring += 1;
        }
        let (_, idx) = best.expect("at least one valid cell exists");
        body[h] = source[idx];
    }
    Ok(holes.len())
}

fn crop_to_region(grid: TerrainGrid, region: &GeoRegion) -> TerrainGrid {
    let (bx0, by0, bx1, by1) = region.local_bounds();
    let cs = grid.cell_size_m;
    let col = |x: f64| ((x - grid.x0) / cs).floor();
    let row = |y: f64| ((y - grid.y0) / cs).floor();
    let c0 = col(bx0 - cs).clamp(0.0, (grid.ncols - 1) as f64) as usize;
    let c1 = (col(bx1 + cs) + 1.0).clamp(0.0, (grid.ncols - 1) as f64) as usize;
    let r0 = row(by0 - cs).clamp(0.0, (grid.nrows - 1) as f64) as usize;
    let r1 = (row(by1 + cs) + 1.0).clamp(0.0, (grid.nrows - 1) as f64) as usize;
    if c1 < c0 + 1 || r1 < r0 + 1 || (c0 == 0 && r0 == 0 && c1 == grid.ncols - 1 && r1 == grid.nrows - 1) {
        return grid;
    }
    let ncols = c1 - c0 + 1;
    let nrows = r1 - r0 + 1;
    let mut elevation = Vec::with_capacity(ncols * nrows);
    for r in r0..=r1 {
        elevation.extend_from_slice(&grid.elevation[r * grid.ncols + c0..=r * grid.ncols + c1]);
    }
    TerrainGrid {
        ncols,
        nrows,
        cell_size_m: cs,
        x0: grid.x0 + c0 as f64 * cs,
        y0: grid.y0 + r0 as f64 * cs,
        elevation,
    }
}

/// Serializes a grid back to Esri ASCII (north row first, cell-center origin).
pub fn write_dem(grid: &TerrainGrid) -> String {
    let mut s = format!(
        "ncols {}\nnrows {}\nxllcenter {}\nyllcenter {}\ncellsize {}\nNODATA_value -9999\n",
        grid.ncols, grid.nrows, grid.x0, grid.y0, grid.cell_size_m
    );
    for r in (0..grid.nrows).rev() {
        let row: Vec<String> = (0..grid.ncols).map(|c| format!("{}", grid.at(r, c))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

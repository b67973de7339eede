//! Global ML Building Footprints: a CSV index maps zoom-9 quadkeys to
//! gzipped line-delimited GeoJSON tiles.

use std::f64::consts::PI;
use std::io::Read;

use flate2::read::GzDecoder;
use gert_core::geodata::GeoRegion;
use serde_json::{json, Value};

use crate::{FetchError, Result};

pub const INDEX_ZOOM: u32 = 9;

fn malformed(message: impl Into<String>) -> FetchError {
    FetchError::Malformed {
        source_name: "ms_footprints",
        message: message.into(),
    }
}

/// Web-Mercator tile containing `(lat, lon)` at `zoom`.
pub fn tile_of(lat: f64, lon: f64, zoom: u32) -> (u32, u32) {
    let n = f64::from(1u32 << zoom);
    let lat = lat.clamp(-85.051_128_78, 85.051_128_78).to_radians();
    let x = ((lon + 180.0) / 360.0 * n).floor();
    let y = ((1.0 - (lat.tan() + 1.0 / lat.cos()).ln() / PI) / 2.0 * n).floor();
    (x.clamp(0.0, n - 1.0) as u32, y.clamp(0.0, n - 1.0) as u32)
}

pub fn quadkey(x: u32, y: u32, zoom: u32) -> String {
    (1..=zoom)
        .rev()
        .map(|i| {
            let mask = 1 << (i - 1);
            let d = u8::from(x & mask != 0) + 2 * u8::from(y & mask != 0);
            char::from(b'0' + d)
        })
        .collect()
}

fn covering_quadkeys(region: &GeoRegion) -> Vec<String> {
    let (x0, y0) = tile_of(region.lat_max, region.lon_min, INDEX_ZOOM);
    let (x1, y1) = tile_of(region.lat_min, region.lon_max, INDEX_ZOOM);
    let mut keys = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            keys.push(quadkey(x, y, INDEX_ZOOM));
        }
    }
    keys
}

fn bbox_overlaps(geometry: &Value, region: &GeoRegion) -> bool {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    fn walk(v: &Value, lo: &mut [f64; 2], hi: &mut [f64; 2]) {
        if let Some(a) = v.as_array() {
            if let (Some(x), Some(y)) = (a.first().and_then(Value::as_f64), a.get(1).and_then(Value::as_f64)) {
                lo[0] = lo[0].min(x);
                lo[1] = lo[1].min(y);
                hi[0] = hi[0].max(x);
                hi[1] = hi[1].max(y);
            } else {
                a.iter().for_each(|c| walk(c, lo, hi));
            }
        }
    }
    walk(geometry.get("coordinates").unwrap_or(&Value::Null), &mut lo, &mut hi);
    lo[0] <= region.lon_max && hi[0] >= region.lon_min && lo[1] <= region.lat_max && hi[1] >= region.lat_min
}

/// Features of one gzipped tile that overlap the region. Unknown heights
/// (reported as negative values) are removed.
pub(crate) fn tile_features(gz: &[u8], region: &GeoRegion) -> Result<Vec<Value>> {
    let mut text = String::new();
    GzDecoder::new(gz)
        .read_to_string(&mut text)
        .map_err(|e| malformed(format!("tile decompression: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut f: Value = serde_json::from_str(line).map_err(|e| malformed(format!("tile line {}: {e}", i + 1)))?;
        let Some(geometry) = f.get("geometry") else { continue };
        if !bbox_overlaps(geometry, region) {
            continue;
        }
        if let Some(props) = f.get_mut("properties").and_then(Value::as_object_mut) {
            if props.get("height").and_then(Value::as_f64).is_some_and(|h| h <= 0.0) {
                props.remove("height");
            }
        }
        out.push(f);
    }
    Ok(out)
}

pub(crate) fn fetch(region: &GeoRegion, index_url: &str, mut get: impl FnMut(&str) -> Result<Vec<u8>>) -> Result<Vec<u8>> {
    let index = parse_index(&get(index_url)?)?;
    let wanted = covering_quadkeys(region);
    let mut features = Vec::new();
    for (qk, url) in index.iter().filter(|(qk, _)| wanted.contains(qk)) {
        let gz = get(url)?;
        features.extend(tile_features(&gz, region).map_err(|e| malformed(format!("tile {qk}: {e}")))?);
    }
    serde_json::to_vec(&json!({"type": "FeatureCollection", "features": features})).map_err(|e| malformed(e.to_string()))
}

fn parse_index(bytes: &[u8]) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| malformed(format!("index lacks a {name} column")))
    };
    let (qk, url) = (col("QuadKey")?, col("Url")?);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        if let (Some(q), Some(u)) = (rec.get(qk), rec.get(url)) {
            out.push((format!("{q:0>width$}", width = INDEX_ZOOM as usize), u.to_string()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadkey_reference() {
        // Bing Maps tile system documentation example
        assert_eq!(quadkey(3, 5, 3), "213");
        assert_eq!(tile_of(0.0, 0.0, 1), (1, 1));
        assert_eq!(tile_of(85.0, -180.0, 9), (0, 0));
    }
}

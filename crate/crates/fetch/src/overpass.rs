use std::collections::HashMap;

use gert_core::geodata::GeoRegion;
use serde_json::{json, Map, Value};

use crate::{FetchError, Result};

/// Overpass QL template; `{south}`, `{west}`, `{north}`, `{east}` and
/// `{timeout}` are substituted.
pub const QUERY_TEMPLATE: &str = include_str!("../queries/buildings.overpassql");

pub fn overpass_query(region: &GeoRegion, timeout_s: u64) -> String {
    QUERY_TEMPLATE
        .replace("{south}", &region.lat_min.to_string())
        .replace("{west}", &region.lon_min.to_string())
        .replace("{north}", &region.lat_max.to_string())
        .replace("{east}", &region.lon_max.to_string())
        .replace("{timeout}", &timeout_s.to_string())
}

fn malformed(message: impl Into<String>) -> FetchError {
    FetchError::Malformed {
        source_name: "osm_overpass",
        message: message.into(),
    }
}

/// Leading number of a tag value such as `"12.5 m"` or `"4;5"`.
fn tag_number(v: &str) -> Option<f64> {
    let s = v.trim();
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.' || *c == '-'))
        .map_or(s.len(), |(i, _)| i);
    s[..end].parse().ok()
}

fn properties(tags: &Map<String, Value>) -> Value {
    let mut p = Map::new();
    if let Some(b) = tags.get("building") {
        p.insert("building".into(), b.clone());
    }
    if let Some(h) = tags.get("height").and_then(Value::as_str).and_then(tag_number) {
        p.insert("height".into(), json!(h));
    }
    if let Some(l) = tags.get("building:levels").and_then(Value::as_str).and_then(tag_number) {
        p.insert("building:levels".into(), json!(l));
    }
    Value::Object(p)
}

/// Converts an Overpass JSON response into a GeoJSON FeatureCollection of
/// Polygon and MultiPolygon buildings. Inner rings are dropped.
pub fn overpass_to_geojson(bytes: &[u8]) -> Result<Vec<u8>> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
    let elements = doc
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("response lacks an elements array"))?;

    let mut nodes: HashMap<i64, [f64; 2]> = HashMap::new();
    let mut ways: HashMap<i64, &Vec<Value>> = HashMap::new();
    for e in elements {
        let id = e.get("id").and_then(Value::as_i64);
        match (e.get("type").and_then(Value::as_str), id) {
            (Some("node"), Some(id)) => {
                let lat = e.get("lat").and_then(Value::as_f64);
                let lon = e.get("lon").and_then(Value::as_f64);
                if let (Some(lat), Some(lon)) = (lat, lon) {
                    nodes.insert(id, [lon, lat]);
                }
            }
            (Some("way"), Some(id)) => {
                if let Some(refs) = e.get("nodes").and_then(Value::as_array) {
                    ways.insert(id, refs);
                }
            }
            _ => {}
        }
    }
    let ring_of = |refs: &Vec<Value>| -> Option<Vec<[f64; 2]>> {
        let ring: Option<Vec<[f64; 2]>> = refs.iter().map(|r| r.as_i64().and_then(|id| nodes.get(&id).copied())).collect();
        ring.filter(|r| r.len() >= 4 && r.first() == r.last())
    };

    let empty = Map::new();
    let mut features = Vec::new();
    for e in elements {
        let tags = e.get("tags").and_then(Value::as_object).unwrap_or(&empty);
        if !tags.contains_key("building") {
            continue;
        }
        let id = e.get("id").and_then(Value::as_i64).unwrap_or_default();
        let geometry = match e.get("type").and_then(Value::as_str) {
            Some("way") => match ways.get(&id).and_then(|r| ring_of(r)) {
                Some(ring) => json!({"type": "Polygon", "coordinates": [ring]}),
                None => continue,
            },
            Some("relation") => {
                let outers: Vec<Vec<Vec<[f64; 2]>>> = e
                    .get("members")
                    .and_then(Value::as_array)
                    .into_iter()
                    .flatten()
                    .filter(|m| m.get("type").and_then(Value::as_str) == Some("way"))
                    .filter(|m| m.get("role").and_then(Value::as_str).is_none_or(|r| r == "outer" || r.is_empty()))
                    .filter_map(|m| m.get("ref").and_then(Value::as_i64))
                    .filter_map(|r| ways.get(&r).and_then(|refs| ring_of(refs)))
                    .map(|ring| vec![ring])
                    .collect();
                if outers.is_empty() {
                    continue;
                }
                json!({"type": "MultiPolygon", "coordinates": outers})
            }
            _ => continue,
        };
        features.push(json!({
            "type": "Feature",
            "id": format!("{}/{id}", e.get("type").and_then(Value::as_str).unwrap_or("")),
            "properties": properties(tags),
            "geometry": geometry,
        }));
    }
    let fc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_vec(&fc).map_err(|e| malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_numbers() {
        assert_eq!(tag_number("12.5 m"), Some(12.5));
        assert_eq!(tag_number("4;5"), Some(4.0));
        assert_eq!(tag_number("tall"), None);
    }

    #[test]
    fn query_substitutes_bbox() {
        let r = GeoRegion::new(48.1, 48.2, 11.5, 11.6).unwrap();
        let q = overpass_query(&r, 90);
        assert!(q.contains("(48.1,11.5,48.2,11.6)"));
        assert!(q.contains("[timeout:90]"));
        assert!(!q.contains('{'));
    }
}

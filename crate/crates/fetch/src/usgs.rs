//! 3DEP elevation through the ImageServer `exportImage` endpoint, resampled
//! onto a metric grid in the region's local frame.

use std::io::Cursor;

use gert_core::geodata::{local_to_latlon, GeoRegion};
use tiff::decoder::{Decoder, DecodingResult};

use crate::{FetchError, Result};

pub const DEFAULT_DEM_RESOLUTION_M: f64 = 1.0;
const NODATA: f64 = -9999.0;
const MAX_EXPORT_PIXELS: usize = 4000;

// (lat_min, lat_max, lon_min, lon_max): contiguous US, Alaska, Hawaii,
// Puerto Rico and the US Virgin Islands
const COVERAGE: [(f64, f64, f64, f64); 4] = [
    (24.0, 50.0, -125.0, -66.0),
    (51.0, 72.0, -180.0, -129.0),
    (18.5, 22.5, -161.0, -154.5),
    (17.5, 18.6, -68.0, -64.5),
];

/// Whether the whole region lies inside one of the covered areas.
pub fn in_coverage(region: &GeoRegion) -> bool {
    COVERAGE.iter().any(|&(la0, la1, lo0, lo1)| {
        region.lat_min >= la0 && region.lat_max <= la1 && region.lon_min >= lo0 && region.lon_max <= lo1
    })
}

fn malformed(message: impl Into<String>) -> FetchError {
    FetchError::Malformed {
        source_name: "usgs_dem",
        message: message.into(),
    }
}

fn grid_shape(region: &GeoRegion, resolution_m: f64) -> (usize, usize) {
    let (x0, y0, x1, y1) = region.local_bounds();
    let n = |span: f64| (((span / resolution_m).ceil() as usize) + 1).clamp(2, MAX_EXPORT_PIXELS);
    (n(x1 - x0), n(y1 - y0))
}

/// Export URL and the requested raster size.
pub(crate) fn export_url(endpoint: &str, region: &GeoRegion, resolution_m: f64) -> (String, usize, usize) {
    let (cols, rows) = grid_shape(region, resolution_m);
    let url = format!(
        "{}/exportImage?bbox={},{},{},{}&bboxSR=4326&imageSR=4326&size={cols},{rows}&format=tiff&pixelType=F32\
         &noData={NODATA}&interpolation=RSP_BilinearInterpolation&f=image",
        endpoint.trim_end_matches('/'),
        region.lon_min,
        region.lat_min,
        region.lon_max,
        region.lat_max,
    );
    (url, cols, rows)
}

fn decode(tiff: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut dec = Decoder::new(Cursor::new(tiff)).map_err(|e| malformed(format!("tiff: {e}")))?;
    let (w, h) = dec.dimensions().map_err(|e| malformed(format!("tiff: {e}")))?;
    let values: Vec<f64> = match dec.read_image().map_err(|e| malformed(format!("tiff: {e}")))? {
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        _ => return Err(malformed("unsupported tiff sample type")),
    };
    let (w, h) = (w as usize, h as usize);
    if values.len() != w * h {
        return Err(malformed(format!("tiff has {} samples for {w}x{h} pixels; expected one band", values.len())));
    }
    Ok((w, h, values))
}

fn valid(v: f64) -> bool {
    v.is_finite() && v > -1000.0
}

/// Converts an exported raster covering the region's lat/lon box into an
/// Esri ASCII grid with cell centres on the local metric lattice.
pub fn raster_to_ascii_grid(
    tiff: &[u8],
    cols: usize,
    rows: usize,
    region: &GeoRegion,
    resolution_m: f64,
) -> Result<(Vec<u8>, Vec<String>)> {
    let (w, h, raster) = decode(tiff)?;
    let mut warnings = Vec::new();
    if (w, h) != (cols, rows) {
        warnings.push(format!("requested {cols}x{rows} pixels, received {w}x{h}"));
    }
    if !raster.iter().copied().any(valid) {
        return Err(FetchError::coverage(region));
    }
    let (x0, y0, x1, y1) = region.local_bounds();
    let (ncols, nrows) = grid_shape(region, resolution_m);
    let cell = ((x1 - x0) / (ncols - 1) as f64).max((y1 - y0) / (nrows - 1) as f64);
    let origin = region.origin();
    let sample = |lat: f64, lon: f64| -> f64 {
        let u = (lon - region.lon_min) / (region.lon_max - region.lon_min) * w as f64 - 0.5;
        let v = (region.lat_max - lat) / (region.lat_max - region.lat_min) * h as f64 - 0.5;
        let u = u.clamp(0.0, (w - 1) as f64);
        let v = v.clamp(0.0, (h - 1) as f64);
        let (c0, r0) = (u.floor() as usize, v.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(w - 1), (r0 + 1).min(h - 1));
        let (fu, fv) = (u - c0 as f64, v - r0 as f64);
        let corners = [
            (raster[r0 * w + c0], (1.0 - fu) * (1.0 - fv)),
            (raster[r0 * w + c1], fu * (1.0 - fv)),
            (raster[r1 * w + c0], (1.0 - fu) * fv),
            (raster[r1 * w + c1], fu * fv),
        ];
        let (sum, wsum) = corners
            .iter()
            .filter(|(z, _)| valid(*z))
            .fold((0.0, 0.0), |(s, ws), (z, wt)| (s + z * wt, ws + wt));
        if wsum > 0.0 {
            sum / wsum
        } else {
            NODATA
        }
    };
    let mut out = format!(
        "ncols {ncols}\nnrows {nrows}\nxllcenter {x0}\nyllcenter {y0}\ncellsize {cell}\nNODATA_value {NODATA}\n"
    );
    let mut missing = 0usize;
    for r in (0..nrows).rev() {
        let y = y0 + r as f64 * cell;
        let row: Vec<String> = (0..ncols)
            .map(|c| {
                let (lat, lon) = local_to_latlon(x0 + c as f64 * cell, y, origin);
                let z = sample(lat, lon);
                if z == NODATA {
                    missing += 1;
                }
                format!("{:.3}", z)
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    if missing > 0 {
        warnings.push(format!("{missing} cells without elevation data"));
    }
    Ok((out.into_bytes(), warnings))
}

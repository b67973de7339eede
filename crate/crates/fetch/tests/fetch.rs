use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use flate2::write::GzEncoder;
use gert_core::geodata::{parse_dem, parse_footprints, GeoRegion};
use gert_fetch::{quadkey, tile_of, Cache, FetchError, FetchSource, Fetcher, SourceKind, Transport, TransportError, MAX_RETRIES};

/// Replays canned responses by URL prefix and counts requests.
struct Replay {
    routes: Vec<(String, Result<Vec<u8>, TransportError>)>,
    calls: AtomicUsize,
    seen: Mutex<Vec<String>>,
}

impl Replay {
    fn new(routes: Vec<(&str, Result<Vec<u8>, TransportError>)>) -> Self {
        Self {
            routes: routes.into_iter().map(|(u, r)| (u.to_string(), r)).collect(),
            calls: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    fn respond(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().unwrap().push(url.to_string());
        self.routes
            .iter()
            .find(|(prefix, _)| url.starts_with(prefix.as_str()))
            .map(|(_, r)| r.clone())
            .unwrap_or_else(|| Err(TransportError::status(404)))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for Replay {
    fn get(&self, url: &str, _: Duration) -> Result<Vec<u8>, TransportError> {
        self.respond(url)
    }

    fn post_form(&self, url: &str, form: &[(&str, &str)], _: Duration) -> Result<Vec<u8>, TransportError> {
        assert!(form.iter().any(|(k, v)| *k == "data" && v.contains("building")));
        self.respond(url)
    }
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

fn munich() -> GeoRegion {
    GeoRegion::new(48.1365, 48.1385, 11.5735, 11.5775).unwrap()
}

fn source(kind: SourceKind, endpoint: &str) -> FetchSource {
    FetchSource {
        endpoint: endpoint.to_string(),
        backoff_ms: 0,
        ..FetchSource::new(kind)
    }
}

#[test]
fn overpass_fixture_yields_three_footprints_then_hits_cache() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(
        Replay::new(vec![("http://overpass.test/", Ok(fixture("overpass_three_buildings.json")))]),
        Cache::new(dir.path()),
    );
    let src = source(SourceKind::OsmOverpass, "http://overpass.test/api/interpreter");
    let first = f.fetch_footprints(&src, &munich()).unwrap();
    assert!(!first.from_cache);
    assert!(first.warnings.is_empty());
    let parsed = parse_footprints(&first.bytes, &munich()).unwrap();
    assert_eq!(parsed.footprints.len(), 3);
    let heights: Vec<f64> = parsed.footprints.iter().map(|b| b.height_m).collect();
    assert!(heights.contains(&18.0));
    assert_eq!(f.transport().calls(), 1);

    let second = f.fetch_footprints(&src, &munich()).unwrap();
    assert!(second.from_cache);
    assert_eq!(second.bytes, first.bytes);
    assert_eq!(f.transport().calls(), 1);
}

#[test]
fn empty_overpass_result_warns() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(
        Replay::new(vec![("http://overpass.test/", Ok(fixture("overpass_empty.json")))]),
        Cache::new(dir.path()),
    );
    let out = f.fetch_footprints(&source(SourceKind::OsmOverpass, "http://overpass.test/i"), &munich()).unwrap();
    assert_eq!(out.warnings.len(), 1);
    assert!(parse_footprints(&out.bytes, &munich()).unwrap().footprints.is_empty());
}

#[test]
fn unreachable_endpoint_exhausts_retries() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(
        Replay::new(vec![("http://down.test/", Err(TransportError::network("connection refused")))]),
        Cache::new(dir.path()),
    );
    let mut src = source(SourceKind::OsmOverpass, "http://down.test/api");
    src.retry_count = 2;
    match f.fetch_footprints(&src, &munich()) {
        Err(FetchError::Transport { attempts, last, .. }) => {
            assert_eq!(attempts, 3);
            assert_eq!(last.status, None);
        }
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(f.transport().calls(), 3);
    assert!(std::fs::read_dir(dir.path()).map(|d| d.count()).unwrap_or(0) == 0);
}

#[test]
fn client_errors_are_not_retried() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(Replay::new(vec![]), Cache::new(dir.path()));
    let err = f.fetch_footprints(&source(SourceKind::OsmOverpass, "http://missing.test/"), &munich()).unwrap_err();
    assert!(matches!(err, FetchError::Transport { attempts: 1, .. }));
    assert!(err.to_string().contains("404"));
}

#[test]
fn retry_budget_is_capped() {
    let mut src = FetchSource::new(SourceKind::OsmOverpass);
    src.retry_count = MAX_RETRIES + 1;
    assert!(matches!(src.validate(), Err(FetchError::Invalid(_))));
}

fn gzip(text: &str) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(text.as_bytes()).unwrap();
    enc.finish().unwrap()
}

fn ms_feature(lat: f64, lon: f64, height: f64) -> String {
    let d = 0.0002;
    format!(
        r#"{{"type":"Feature","properties":{{"height":{height},"confidence":-1.0}},"geometry":{{"type":"Polygon","coordinates":[[[{lon},{lat}],[{},{lat}],[{},{}],[{lon},{}],[{lon},{lat}]]]}}}}"#,
        lon + d,
        lon + d,
        lat + d,
        lat + d
    )
}

#[test]
fn ms_tiles_are_selected_by_quadkey() {
    let region = munich();
    let (x, y) = tile_of(region.lat_min, region.lon_min, 9);
    let qk = quadkey(x, y, 9);
    let index = format!(
        "Location,QuadKey,Url,Size,UploadDate\nGermany,{qk},http://tiles.test/a.csv.gz,1KB,2024-01-01\n\
         Germany,{},http://tiles.test/other.csv.gz,1KB,2024-01-01\n",
        quadkey(x + 1, y, 9)
    );
    let tile = [
        ms_feature(48.1370, 11.5750, 12.0),
        ms_feature(48.1375, 11.5760, -1.0),
        ms_feature(48.2000, 11.7000, 9.0),
    ]
    .join("\n");
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(
        Replay::new(vec![
            ("http://index.test/", Ok(index.into_bytes())),
            ("http://tiles.test/a.csv.gz", Ok(gzip(&tile))),
        ]),
        Cache::new(dir.path()),
    );
    let out = f
        .fetch_footprints(&source(SourceKind::MsFootprints, "http://index.test/dataset-links.csv"), &region)
        .unwrap();
    assert_eq!(f.transport().calls(), 2);
    assert!(!f.transport().seen.lock().unwrap().iter().any(|u| u.contains("other")));
    let parsed = parse_footprints(&out.bytes, &region).unwrap();
    assert_eq!(parsed.footprints.len(), 2);
}

fn boulder() -> GeoRegion {
    GeoRegion::new(40.0150, 40.0170, -105.2800, -105.2770).unwrap()
}

/// Float raster of `z = 1600 + 1000 * (lon - lon_min)` over the export box.
fn plane_tiff(w: u32, h: u32, region: &GeoRegion, nodata: bool) -> Vec<u8> {
    let mut data = Vec::with_capacity((w * h) as usize);
    for _ in 0..h {
        for c in 0..w {
            let lon = region.lon_min + (c as f64 + 0.5) / w as f64 * (region.lon_max - region.lon_min);
            data.push(if nodata { -9999.0 } else { (1600.0 + 1000.0 * (lon - region.lon_min)) as f32 });
        }
    }
    let mut buf = std::io::Cursor::new(Vec::new());
    tiff::encoder::TiffEncoder::new(&mut buf)
        .unwrap()
        .write_image::<tiff::encoder::colortype::Gray32Float>(w, h, &data)
        .unwrap();
    buf.into_inner()
}

fn size_from(url: &str) -> (u32, u32) {
    let s = url.split("size=").nth(1).unwrap().split('&').next().unwrap();
    let mut it = s.split(',').map(|v| v.parse().unwrap());
    (it.next().unwrap(), it.next().unwrap())
}

struct Dem {
    region: GeoRegion,
    nodata: bool,
    calls: AtomicUsize,
}

impl Transport for Dem {
    fn get(&self, url: &str, _: Duration) -> Result<Vec<u8>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        assert!(url.contains("/exportImage?") && url.contains("format=tiff"));
        let (w, h) = size_from(url);
        Ok(plane_tiff(w, h, &self.region, self.nodata))
    }

    fn post_form(&self, _: &str, _: &[(&str, &str)], _: Duration) -> Result<Vec<u8>, TransportError> {
        Err(TransportError::status(405))
    }
}

#[test]
fn dem_fixture_becomes_local_grid() {
    let region = boulder();
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(
        Dem {
            region,
            nodata: false,
            calls: AtomicUsize::new(0),
        },
        Cache::new(dir.path()),
    );
    let src = source(SourceKind::UsgsDem, "http://dem.test/ImageServer");
    let out = f.fetch_dem(&src, &region, 10.0).unwrap();
    let (x0, y0, x1, y1) = region.local_bounds();
    let expect_cols = ((x1 - x0) / 10.0).ceil() as usize + 1;
    let expect_rows = ((y1 - y0) / 10.0).ceil() as usize + 1;
    let dem = parse_dem(&out.bytes, &region).unwrap();
    assert_eq!((dem.grid.ncols, dem.grid.nrows), (expect_cols, expect_rows));
    assert_eq!(dem.nodata_filled, 0);
    let east = dem.grid.at(0, dem.grid.ncols - 1);
    let west = dem.grid.at(0, 0);
    assert!(west > 1600.0 && east > west && east < 1603.0);

    let again = f.fetch_dem(&src, &region, 10.0).unwrap();
    assert!(again.from_cache);
    assert_eq!(again.bytes, out.bytes);
    assert_eq!(f.transport().calls.load(Ordering::SeqCst), 1);
}

#[test]
fn dem_outside_coverage_is_rejected_without_requests() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(
        Dem {
            region: munich(),
            nodata: false,
            calls: AtomicUsize::new(0),
        },
        Cache::new(dir.path()),
    );
    let err = f.fetch_dem(&source(SourceKind::UsgsDem, "http://dem.test/"), &munich(), 1.0).unwrap_err();
    assert!(matches!(err, FetchError::Coverage { .. }));
    assert!(err.to_string().contains("48.1365"));
    assert_eq!(f.transport().calls.load(Ordering::SeqCst), 0);
}

#[test]
fn all_nodata_raster_is_a_coverage_gap() {
    let region = boulder();
    let dir = tempfile::tempdir().unwrap();
    let f = Fetcher::new(
        Dem {
            region,
            nodata: true,
            calls: AtomicUsize::new(0),
        },
        Cache::new(dir.path()),
    );
    let err = f.fetch_dem(&source(SourceKind::UsgsDem, "http://dem.test/"), &region, 20.0).unwrap_err();
    assert!(matches!(err, FetchError::Coverage { .. }));
}

//! Optional download clients for building footprints and terrain.
//!
//! Every payload is cached on disk, keyed by source and region, so a region
//! is only ever downloaded once. The rest of the toolchain reads plain files
//! and never needs this crate.

mod cache;
mod msfoot;
mod overpass;
mod transport;
mod usgs;

use std::sync::Mutex;
use std::time::Duration;

use gert_core::geodata::GeoRegion;
use serde::{Deserialize, Serialize};

pub use cache::Cache;
pub use msfoot::{quadkey, tile_of};
pub use overpass::{overpass_query, overpass_to_geojson, QUERY_TEMPLATE};
pub use transport::{HttpTransport, Transport, TransportError};
pub use usgs::{in_coverage, raster_to_ascii_grid, DEFAULT_DEM_RESOLUTION_M};

pub const MAX_RETRIES: u32 = 5;
pub const EMPTY_COLLECTION: &str = r#"{"type":"FeatureCollection","features":[]}"#;

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("{url}: giving up after {attempts} attempt(s): {last}")]
    Transport { url: String, attempts: u32, last: TransportError },

    #[error("no elevation coverage for region lat [{lat_min}, {lat_max}], lon [{lon_min}, {lon_max}]")]
    Coverage {
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
    },

    #[error("{source_name}: malformed response: {message}")]
    Malformed { source_name: &'static str, message: String },

    #[error("invalid fetch source: {0}")]
    Invalid(String),

    #[error("cache {path}: {message}")]
    Cache { path: String, message: String },

    #[error(transparent)]
    Core(#[from] gert_core::Error),
}

impl FetchError {
    pub(crate) fn coverage(r: &GeoRegion) -> Self {
        FetchError::Coverage {
            lat_min: r.lat_min,
            lat_max: r.lat_max,
            lon_min: r.lon_min,
            lon_max: r.lon_max,
        }
    }
}

pub type Result<T> = std::result::Result<T, FetchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    OsmOverpass,
    MsFootprints,
    UsgsDem,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::OsmOverpass => "osm_overpass",
            SourceKind::MsFootprints => "ms_footprints",
            SourceKind::UsgsDem => "usgs_dem",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn default_endpoint(self) -> &'static str {
        match self {
            SourceKind::OsmOverpass => "https://overpass-api.de/api/interpreter",
            SourceKind::MsFootprints => "https://minedbuildings.z5.web.core.windows.net/global-buildings/dataset-links.csv",
            SourceKind::UsgsDem => "https://elevation.nationalmap.gov/arcgis/rest/services/3DEPElevation/ImageServer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchSource {
    pub kind: SourceKind,
    pub endpoint: String,
    pub timeout_s: u64,
    pub retry_count: u32,
    /// Delay before the first retry; doubles on each further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_backoff() -> u64 {
    500
}

impl FetchSource {
    pub fn new(kind: SourceKind) -> Self {
        Self {
            kind,
            endpoint: kind.default_endpoint().to_string(),
            timeout_s: 120,
            retry_count: 3,
            backoff_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.retry_count > MAX_RETRIES {
            return Err(FetchError::Invalid(format!("retry_count {} exceeds {MAX_RETRIES}", self.retry_count)));
        }
        if self.timeout_s == 0 {
            return Err(FetchError::Invalid("timeout_s must be positive".into()));
        }
        if self.endpoint.is_empty() {
            return Err(FetchError::Invalid("endpoint is empty".into()));
        }
        Ok(())
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fetched {
    pub bytes: Vec<u8>,
    pub from_cache: bool,
    pub warnings: Vec<String>,
}

// one request in flight per source
static SOURCE_LOCKS: [Mutex<()>; 3] = [Mutex::new(()), Mutex::new(()), Mutex::new(())];

pub struct Fetcher<T: Transport = HttpTransport> {
    transport: T,
    cache: Cache,
}

impl Fetcher<HttpTransport> {
    /// HTTP transport with the cache from `GERT_CACHE_DIR` or the default
    /// location.
    pub fn from_env() -> Self {
        Self::new(HttpTransport::default(), Cache::from_env())
    }
}

impl<T: Transport> Fetcher<T> {
    pub fn new(transport: T, cache: Cache) -> Self {
        Self { transport, cache }
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Building footprints as a GeoJSON FeatureCollection.
    pub fn fetch_footprints(&self, source: &FetchSource, region: &GeoRegion) -> Result<Fetched> {
        source.validate()?;
        region.validate()?;
        let key = cache::key(source, region, "");
        let _guard = SOURCE_LOCKS[source.kind.index()].lock().unwrap_or_else(|e| e.into_inner());
        let (bytes, from_cache) = match self.cache.get(source.kind, &key, "geojson")? {
            Some(b) => (b, true),
            None => {
                let bytes = match source.kind {
                    SourceKind::OsmOverpass => {
                        let query = overpass_query(region, source.timeout_s);
                        let raw = self.request(source, &source.endpoint, Some(&query))?;
                        overpass_to_geojson(&raw)?
                    }
                    SourceKind::MsFootprints => msfoot::fetch(region, &source.endpoint, |url| self.request(source, url, None))?,
                    SourceKind::UsgsDem => {
                        return Err(FetchError::Invalid("usgs_dem is an elevation source, not a footprint source".into()))
                    }
                };
                self.cache.put(source.kind, &key, "geojson", &bytes)?;
                (bytes, false)
            }
        };
        let mut warnings = Vec::new();
        if is_empty_collection(&bytes) {
            warnings.push(format!("{}: no buildings in region", source.kind.name()));
        }
        Ok(Fetched {
            bytes,
            from_cache,
            warnings,
        })
    }

    /// Terrain as an Esri ASCII grid in the region's local frame.
    pub fn fetch_dem(&self, source: &FetchSource, region: &GeoRegion, resolution_m: f64) -> Result<Fetched> {
        source.validate()?;
        region.validate()?;
        if source.kind != SourceKind::UsgsDem {
            return Err(FetchError::Invalid(format!("{} is not an elevation source", source.kind.name())));
        }
        if !(resolution_m > 0.0 && resolution_m.is_finite()) {
            return Err(FetchError::Invalid(format!("resolution must be positive, got {resolution_m}")));
        }
        if !in_coverage(region) {
            return Err(FetchError::coverage(region));
        }
        let key = cache::key(source, region, &format!("res={resolution_m}"));
        let _guard = SOURCE_LOCKS[source.kind.index()].lock().unwrap_or_else(|e| e.into_inner());
        if let Some(bytes) = self.cache.get(source.kind, &key, "asc")? {
            return Ok(Fetched {
                bytes,
                from_cache: true,
                warnings: Vec::new(),
            });
        }
        let (url, cols, rows) = usgs::export_url(&source.endpoint, region, resolution_m);
        let tiff = self.request(source, &url, None)?;
        let (bytes, warnings) = raster_to_ascii_grid(&tiff, cols, rows, region, resolution_m)?;
        self.cache.put(source.kind, &key, "asc", &bytes)?;
        Ok(Fetched {
            bytes,
            from_cache: false,
            warnings,
        })
    }

    fn request(&self, source: &FetchSource, url: &str, form_query: Option<&str>) -> Result<Vec<u8>> {
        let attempts = source.retry_count + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 && source.backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(source.backoff_ms << (attempt - 1)));
            }
            let out = match form_query {
                Some(q) => self.transport.post_form(url, &[("data", q)], source.timeout()),
                None => self.transport.get(url, source.timeout()),
            };
            match out {
                Ok(bytes) => return Ok(bytes),
                Err(e) if e.is_retryable() => last = Some(e),
                Err(e) => {
                    return Err(FetchError::Transport {
                        url: url.to_string(),
                        attempts: attempt + 1,
                        last: e,
                    })
                }
            }
        }
        Err(FetchError::Transport {
            url: url.to_string(),
            attempts,
            last: last.expect("at least one attempt"),
        })
    }
}

fn is_empty_collection(bytes: &[u8]) -> bool {
    serde_json::from_slice::<serde_json::Value>(bytes)
        .ok()
        .and_then(|v| v.get("features").and_then(|f| f.as_array()).map(|a| a.is_empty()))
        .unwrap_or(false)
}

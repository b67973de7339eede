use std::fs;
use std::path::{Path, PathBuf};

use gert_core::geodata::GeoRegion;
use sha2::{Digest, Sha256};

use crate::{FetchError, FetchSource, Result, SourceKind};

pub const CACHE_ENV: &str = "GERT_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$GERT_CACHE_DIR`, else `$XDG_CACHE_HOME/gert`, else `~/.cache/gert`.
    pub fn from_env() -> Self {
        let root = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("XDG_CACHE_HOME").map(|d| PathBuf::from(d).join("gert")))
            .or_else(|| std::env::var_os("HOME").map(|d| PathBuf::from(d).join(".cache").join("gert")))
            .unwrap_or_else(|| PathBuf::from(".gert-cache"));
        Self { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, kind: SourceKind, key: &str, ext: &str) -> PathBuf {
        self.root.join(kind.name()).join(format!("{key}.{ext}"))
    }

    pub fn get(&self, kind: SourceKind, key: &str, ext: &str) -> Result<Option<Vec<u8>>> {
        let path = self.path(kind, key, ext);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(err(&path, e)),
        }
    }

    pub fn put(&self, kind: SourceKind, key: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(kind, key, ext);
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
        let tmp = path.with_extension(format!("{ext}.part"));
        fs::write(&tmp, bytes).map_err(|e| err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| err(&path, e))?;
        Ok(path)
    }
}

fn err(path: &Path, e: std::io::Error) -> FetchError {
    FetchError::Cache {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Hex digest over the source identity and the exact region bounds.
pub(crate) fn key(source: &FetchSource, region: &GeoRegion, extra: &str) -> String {
    let mut h = Sha256::new();
    h.update(source.kind.name().as_bytes());
    h.update([0]);
    h.update(source.endpoint.as_bytes());
    h.update([0]);
    for v in [region.lat_min, region.lat_max, region.lon_min, region.lon_max, region.origin_lat, region.origin_lon] {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(extra.as_bytes());
    h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
}

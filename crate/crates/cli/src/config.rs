//! Run configuration file.

use std::path::{Path, PathBuf};

use gert_core::geodata::{latlon_to_local, GeoRegion, HeightRules};
use gert_core::geom::Vec3;
use gert_core::metrics::{Combine, DEFAULT_PG_THRESHOLD_DB};
use gert_core::perturb::{PerturbationKind, PerturbationSpec};
use gert_core::scene::{MaterialPolicy, Scene};
use gert_core::sweep::{GridSpec, SweepOptions};
use gert_core::synth::ManhattanLayout;
use gert_core::tracer::TraceConfig;
use gert_fetch::SourceKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker count; results do not depend on it, so it is not echoed.
    #[serde(default = "one", skip_serializing)]
    pub threads: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub scene: SceneInput,
    #[serde(default)]
    pub materials: MaterialPolicy,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub sweep: SweepSettings,
    #[serde(default)]
    pub fetch: FetchConfig,
    #[serde(default)]
    pub tx: Vec<TxSpec>,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("gert-out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_lon: Option<f64>,
}

impl RegionConfig {
    pub fn region(&self) -> gert_core::Result<GeoRegion> {
        match (self.origin_lat, self.origin_lon) {
            (Some(la), Some(lo)) => GeoRegion::with_origin(self.lat_min, self.lat_max, self.lon_min, self.lon_max, la, lo),
            (None, None) => GeoRegion::new(self.lat_min, self.lat_max, self.lon_min, self.lon_max),
            _ => Err(gert_core::Error::Invalid("origin_lat and origin_lon must be given together".into())),
        }
    }
}

/// Where the scene comes from: a prebuilt scene directory, a synthetic
/// layout, or footprint and terrain files (fetched when absent).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manhattan: Option<ManhattanLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprints: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dem: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub materials_file: Option<PathBuf>,
    #[serde(default)]
    pub heights: HeightRules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub kinds: Vec<PerturbationKind>,
    pub count: usize,
    pub sigma_height_m: f64,
    pub sigma_pos_m: f64,
    pub material_rel_sigma: f64,
    pub per_vertex_position: bool,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        let d = PerturbationSpec::new(PerturbationKind::Material, 0);
        Self {
            kinds: PerturbationKind::ALL.to_vec(),
            count: d.count,
            sigma_height_m: d.sigma_height_m,
            sigma_pos_m: d.sigma_pos_m,
            material_rel_sigma: d.material_rel_sigma,
            per_vertex_position: d.per_vertex_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub scene_name: String,
    pub min_samples: usize,
    pub pg_threshold_db: f64,
    pub combine: Combine,
    pub bin_width_m: f64,
    pub raw_samples: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            scene_name: "scene".into(),
            min_samples: 2,
            pg_threshold_db: DEFAULT_PG_THRESHOLD_DB,
            combine: Combine::Incoherent,
            bin_width_m: 25.0,
            raw_samples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FetchConfig {
    pub footprints: SourceKind,
    pub footprints_endpoint: Option<String>,
    pub dem_endpoint: Option<String>,
    pub dem: bool,
    pub dem_resolution_m: f64,
    pub timeout_s: u64,
    pub retry_count: u32,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            footprints: SourceKind::OsmOverpass,
            footprints_endpoint: None,
            dem_endpoint: None,
            dem: true,
            dem_resolution_m: gert_fetch::DEFAULT_DEM_RESOLUTION_M,
            timeout_s: 120,
            retry_count: 3,
        }
    }
}

impl FetchConfig {
    pub fn source(&self, kind: SourceKind) -> gert_fetch::FetchSource {
        let endpoint = match kind {
            SourceKind::UsgsDem => self.dem_endpoint.clone(),
            _ => self.footprints_endpoint.clone(),
        };
        let mut s = gert_fetch::FetchSource::new(kind);
        if let Some(e) = endpoint {
            s.endpoint = e;
        }
        s.timeout_s = self.timeout_s;
        s.retry_count = self.retry_count;
        s
    }
}

/// A transmitter in local metres (`x`, `y`, `z`) or geographic
/// coordinates with a height above ground (`lat`, `lon`, `height_m`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_m: Option<f64>,
}

impl TxSpec {
    pub fn position(&self, scene: &Scene) -> Result<Vec3, String> {
        match *self {
            TxSpec {
                x: Some(x),
                y: Some(y),
                z: Some(z),
                lat: None,
                lon: None,
                height_m: None,
            } => Ok(Vec3::new(x, y, z)),
            TxSpec {
                x: None,
                y: None,
                z: None,
                lat: Some(lat),
                lon: Some(lon),
                height_m: Some(h),
            } => {
                let (x, y) = latlon_to_local(lat, lon, scene.origin);
                let g = scene
                    .ground_height(x, y)
                    .ok_or_else(|| format!("transmitter at ({lat}, {lon}) lies outside the terrain"))?;
                Ok(Vec3::new(x, y, g + h))
            }
            _ => Err("a transmitter needs either x, y, z or lat, lon, height_m".into()),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.trace.validate().map_err(|e| format!("[trace] {e}"))?;
        for spec in self.specs() {
            spec.validate().map_err(|e| format!("[perturbation] {e}"))?;
        }
        if self.perturbation.kinds.is_empty() {
            return Err("[perturbation] kinds is empty".into());
        }
        let s = &self.scene;
        let sources = usize::from(s.dir.is_some()) + usize::from(s.manhattan.is_some()) + usize::from(s.region.is_some());
        if sources > 1 {
            return Err("[scene] give only one of dir, manhattan or region".into());
        }
        if (s.footprints.is_some() || s.dem.is_some()) && s.region.is_none() {
            return Err("[scene] footprints and dem files need a region".into());
        }
        if let Some(r) = &s.region {
            r.region().map_err(|e| format!("[scene.region] {e}"))?;
        }
        if self.threads == 0 {
            return Err("threads must be at least 1".into());
        }
        if self.sweep.min_samples < 2 {
            return Err("[sweep] min_samples must be at least 2".into());
        }
        if !(self.sweep.bin_width_m > 0.0) {
            return Err("[sweep] bin_width_m must be positive".into());
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<PerturbationSpec> {
        let p = &self.perturbation;
        p.kinds
            .iter()
            .map(|&kind| PerturbationSpec {
                kind,
                sigma_height_m: p.sigma_height_m,
                sigma_pos_m: p.sigma_pos_m,
                material_rel_sigma: p.material_rel_sigma,
                count: p.count,
                master_seed: self.seed,
                per_vertex_position: p.per_vertex_position,
            })
            .collect()
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let s = &self.sweep;
        SweepOptions {
            scene_name: s.scene_name.clone(),
            threads: self.threads,
            min_samples: s.min_samples,
            pg_threshold_db: s.pg_threshold_db,
            combine: s.combine,
            bin_width_m: s.bin_width_m,
        }
    }

    /// The configuration as it is echoed next to the results.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

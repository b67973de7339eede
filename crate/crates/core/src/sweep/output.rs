//! On-disk products of a sweep: per-cell CSVs, distance profiles,
//! dispersion, outage histograms, the summary table and PGM heatmaps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellSample, CellStats, RxGrid, StdMetric, SweepOptions, SweepResult, DISPERSION_VARIABLES};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::metrics::{Connected, KFactor, LinkMetrics};
use crate::perturb::PerturbationSpec;
use crate::tracer::TraceConfig;

pub const SWEEP_FILE: &str = "sweep.json";
pub const RAW_SAMPLES_FILE: &str = "raw_samples.csv";
pub const HEATMAP_INDEX_FILE: &str = "heatmaps.csv";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepManifest {
    grid: RxGrid,
    txs: Vec<Vec3>,
    specs: Vec<PerturbationSpec>,
    trace: TraceConfig,
    options: SweepOptions,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Csv {
    path: std::path::PathBuf,
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let path = dir.join(name);
        w.write_record(header).map_err(|e| Error::file(&path, e.to_string()))?;
        Ok(Self { path, w })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.w.write_record(&fields).map_err(|e| Error::file(&self.path, e.to_string()))
    }

    fn finish(self) -> Result<()> {
        let bytes = self.w.into_inner().map_err(|e| Error::file(&self.path, e.to_string()))?;
        fs::write(&self.path, bytes).map_err(|e| Error::file(&self.path, e.to_string()))
    }
}

/// Writes every product into `dir`. With `raw_samples` the per-perturbation
/// metrics are kept too, so `load_sweep` can rebuild the result.
pub fn write_outputs(result: &SweepResult, dir: &Path, raw_samples: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e.to_string()))?;
    let manifest = SweepManifest {
        grid: result.grid.clone(),
        txs: result.txs.clone(),
        specs: result.specs.clone(),
        trace: result.trace.clone(),
        options: result.options.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    let path = dir.join(SWEEP_FILE);
    fs::write(&path, json + "\n").map_err(|e| Error::file(&path, e.to_string()))?;

    write_cells(result, dir)?;
    write_profiles(result, dir)?;
    write_dispersion(result, dir)?;
    write_histograms(result, dir)?;
    write_summary(result, dir)?;
    write_heatmaps(result, dir)?;
    if raw_samples {
        write_raw(result, dir)?;
    }
    Ok(())
}

fn write_cells(result: &SweepResult, dir: &Path) -> Result<()> {
    for g in &result.groups {
        let header = [
            "x", "y", "distance_m", "pg_std_db", "med_std_ns", "ds_std_ns", "k_std_db", "outage_freq", "alive_count",
        ];
        let mut csv = Csv::new(dir, &format!("cells_{}_{}.csv", g.tx, g.kind), &header)?;
        let distances = result.grid.distances(result.txs[g.tx]);
        for ((cell, stats), d) in result.grid.cells.iter().zip(&g.cells).zip(distances) {
            csv.row([
                cell.position.x.to_string(),
                cell.position.y.to_string(),
                d.to_string(),
                opt(stats.pg_std_db),
                opt(stats.med_std_ns),
                opt(stats.ds_std_ns),
                opt(stats.k_std_db),
                stats.outage_frequency().to_string(),
                stats.alive_count.to_string(),
            ])?;
        }
        csv.finish()?;
    }
    Ok(())
}

fn write_profiles(result: &SweepResult, dir: &Path) -> Result<()> {
    for spec in &result.specs {
        let mut header = vec!["tx", "bin_start_m", "bin_end_m", "cells"];
        header.extend(StdMetric::ALL.iter().map(|m| m.column()));
        header.extend(["n_pg", "n_med", "n_ds", "n_k", "low_confidence"]);
        let mut csv = Csv::new(dir, &format!("profile_{}.csv", spec.kind), &header)?;
        for g in result.groups.iter().filter(|g| g.kind == spec.kind) {
            for b in &g.profile {
                let mut row = vec![g.tx.to_string(), b.start_m.to_string(), b.end_m.to_string(), b.cells.to_string()];
                row.extend(b.means.iter().map(|m| opt(*m)));
                row.extend(b.counts.iter().map(|n| n.to_string()));
                row.push(b.low_confidence().to_string());
                csv.row(row)?;
            }
        }
        csv.finish()?;
    }
    Ok(())
}

fn write_dispersion(result: &SweepResult, dir: &Path) -> Result<()> {
    let header = [
        "kind", "x", "y", "n", "pearson_r", "mean_x", "mean_y", "semi_major", "semi_minor", "angle_rad",
    ];
    let mut csv = Csv::new(dir, "dispersion.csv", &header)?;
    for p in &result.dispersion {
        csv.row([
            p.kind.map_or("pooled".to_string(), |k| k.to_string()),
            p.x.to_string(),
            p.y.to_string(),
            p.n.to_string(),
            opt(p.r),
            opt(p.mean.map(|m| m.0)),
            opt(p.mean.map(|m| m.1)),
            opt(p.ellipse.map(|e| e.semi_major)),
            opt(p.ellipse.map(|e| e.semi_minor)),
            opt(p.ellipse.map(|e| e.angle_rad)),
        ])?;
    }
    csv.finish()
}

fn write_histograms(result: &SweepResult, dir: &Path) -> Result<()> {
    for spec in &result.specs {
        let mut csv = Csv::new(dir, &format!("outage_hist_{}.csv", spec.kind), &["tx", "outage_count", "cells"])?;
        let per_tx = result.groups.iter().filter(|g| g.kind == spec.kind).map(|g| &g.histogram);
        let pooled = result.pooled_histograms.iter().filter(|h| h.kind == spec.kind);
        for h in per_tx.chain(pooled) {
            let tx = h.tx.map_or("pooled".to_string(), |t| t.to_string());
            for (n, count) in h.counts.iter().enumerate() {
                csv.row([tx.clone(), n.to_string(), count.to_string()])?;
            }
            csv.row([tx, "always_dead".to_string(), h.always_dead.to_string()])?;
        }
        csv.finish()?;
    }
    Ok(())
}

fn write_summary(result: &SweepResult, dir: &Path) -> Result<()> {
    let mut header = vec!["scene".to_string(), "kind".to_string()];
    for m in StdMetric::ALL {
        let unit = m.column().rsplit('_').next().expect("unit suffix");
        for stat in ["avg", "min", "max"] {
            header.push(format!("{}_{stat}_{unit}", m.short()));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(dir, "summary.csv", &header)?;
    for row in &result.summary {
        let mut fields = vec![row.scene.clone(), row.kind.to_string()];
        for m in &row.metrics {
            fields.push(opt(m.map(|s| s.avg)));
            fields.push(opt(m.map(|s| s.min)));
            fields.push(opt(m.map(|s| s.max)));
        }
        csv.row(fields)?;
    }
    csv.finish()
}

fn heatmap_value(c: &CellStats, var: usize) -> Option<f64> {
    match var {
        4 => Some(c.outage_frequency()),
        _ => c.std(StdMetric::ALL[var]),
    }
}

/// 8-bit binary PGM, north up. Gray 0 marks cells without a value; values
/// map linearly onto 1..=255.
fn write_heatmaps(result: &SweepResult, dir: &Path) -> Result<()> {
    let grid = &result.grid;
    let mut index = Csv::new(dir, HEATMAP_INDEX_FILE, &["file", "min", "max", "nodata_gray"])?;
    for g in &result.groups {
        for (var, name) in DISPERSION_VARIABLES.iter().enumerate() {
            let values: Vec<Option<f64>> = g.cells.iter().map(|c| heatmap_value(c, var)).collect();
            let lo = values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut pixels = vec![0u8; grid.ncols * grid.nrows];
            for (cell, v) in grid.cells.iter().zip(&values) {
                let Some(v) = v else { continue };
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                let gray = 1.0 + (t * 254.0).round();
                pixels[(grid.nrows - 1 - cell.row) * grid.ncols + cell.col] = gray as u8;
            }
            let file = format!("heatmap_{}_{}_{}.pgm", g.tx, g.kind, name);
            let mut bytes = format!("P5\n{} {}\n255\n", grid.ncols, grid.nrows).into_bytes();
            bytes.extend_from_slice(&pixels);
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| Error::file(&path, e.to_string()))?;
            let (lo, hi) = if lo <= hi { (Some(lo), Some(hi)) } else { (None, None) };
            index.row([file, opt(lo), opt(hi), "0".to_string()])?;
        }
    }
    index.finish()
}

const RAW_HEADER: [&str; 10] = ["tx", "kind", "index", "cell", "paths", "state", "pg_db", "med_ns", "ds_ns", "k_db"];

fn write_raw(result: &SweepResult, dir: &Path) -> Result<()> {
    let mut csv = Csv::new(dir, RAW_SAMPLES_FILE, &RAW_HEADER)?;
    for g in &result.groups {
        for (k, row) in g.samples.iter().enumerate() {
            for (c, s) in row.iter().enumerate() {
                let mut fields = vec![g.tx.to_string(), g.kind.to_string(), k.to_string(), c.to_string(), s.paths.to_string()];
                match s.metrics {
                    LinkMetrics::Outage => fields.extend(["outage", "", "", "", ""].map(String::from)),
                    LinkMetrics::Connected(m) => fields.extend([
                        "connected".to_string(),
                        m.path_gain_db.to_string(),
                        m.mean_excess_delay_ns.to_string(),
                        m.delay_spread_ns.to_string(),
                        m.k_factor.finite().map_or("inf".to_string(), |v| v.to_string()),
                    ]),
                }
                csv.row(fields)?;
            }
        }
    }
    csv.finish()
}

/// Rebuilds a sweep result from a directory written with raw samples.
pub fn load_sweep(dir: &Path) -> Result<SweepResult> {
    let path = dir.join(SWEEP_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e.to_string()))?;
    let m: SweepManifest = serde_json::from_str(&text).map_err(|e| Error::file(&path, e.to_string()))?;

    let path = dir.join(RAW_SAMPLES_FILE);
    if !path.is_file() {
        return Err(Error::file(&path, "raw samples missing; rerun the sweep with raw sample retention"));
    }
    let mut samples: Vec<Vec<Vec<Vec<Option<CellSample>>>>> = m
        .txs
        .iter()
        .map(|_| m.specs.iter().map(|s| vec![vec![None; m.grid.len()]; s.count]).collect())
        .collect();
    let mut reader = csv::Reader::from_path(&path).map_err(|e| Error::file(&path, e.to_string()))?;
    for (line, rec) in reader.records().enumerate() {
        let bad = |msg: String| Error::Parse { line: line + 2, message: msg };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != RAW_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", RAW_HEADER.len(), rec.len())));
        }
        let int = |i: usize| rec[i].parse::<usize>().map_err(|e| bad(format!("{}: {e}", RAW_HEADER[i])));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", RAW_HEADER[i])));
        let (t, k, c, paths) = (int(0)?, int(2)?, int(3)?, int(4)?);
        let s = m
            .specs
            .iter()
            .position(|s| s.kind.name() == &rec[1])
            .ok_or_else(|| bad(format!("unknown kind {}", &rec[1])))?;
        let metrics = match &rec[5] {
            "outage" => LinkMetrics::Outage,
            "connected" => LinkMetrics::Connected(Connected {
                path_gain_db: num(6)?,
                mean_excess_delay_ns: num(7)?,
                delay_spread_ns: num(8)?,
                k_factor: match num(9)? {
                    v if v.is_infinite() => KFactor::Infinite,
                    v => KFactor::Db(v),
                },
            }),
            other => return Err(bad(format!("unknown state {other}"))),
        };
        let slot = samples
            .get_mut(t)
            .and_then(|x| x.get_mut(s))
            .and_then(|x| x.get_mut(k))
            .and_then(|x| x.get_mut(c))
            .ok_or_else(|| bad(format!("sample ({t}, {}, {k}, {c}) outside the sweep", &rec[1])))?;
        *slot = Some(CellSample {
            metrics,
            paths: paths as u32,
        });
    }
    let samples = samples
        .into_iter()
        .map(|a| {
            a.into_iter()
                .map(|b| b.into_iter().map(|row| row.into_iter().collect::<Option<Vec<_>>>()).collect::<Option<Vec<_>>>())
                .collect::<Option<Vec<_>>>()
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::file(&path, "raw samples are incomplete"))?;
    SweepResult::from_samples(m.grid, m.txs, m.specs, m.trace, m.options, samples)
}

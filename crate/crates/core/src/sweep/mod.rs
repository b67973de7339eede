//! Monte Carlo sweep: perturb the scene, trace a receiver grid for every
//! transmitter, and aggregate per-cell variability.

mod analysis;
mod output;

use serde::{Deserialize, Serialize};

pub use analysis::{
    dispersion_pairs, distance_profile, outage_histogram, summary_table, DispersionPair, Ellipse, MetricSummary,
    OutageHistogram, ProfileBin, SummaryRow, DISPERSION_VARIABLES, LOW_CONFIDENCE_CELLS,
};
pub use output::{load_sweep, write_outputs, RAW_SAMPLES_FILE, SWEEP_FILE};

use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{point_in_polygon, Vec3};
use crate::metrics::{compute_metrics, Combine, LinkMetrics, DEFAULT_PG_THRESHOLD_DB};
use crate::perturb::{apply_perturbation, PerturbationKind, PerturbationSpec};
use crate::scene::Scene;
use crate::tracer::{build_accel, TraceConfig, TxContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub spacing_m: f64,
    pub height_m: f64,
    /// Drop cells inside building footprints of the unperturbed scene.
    pub skip_indoor: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            spacing_m: 5.0,
            height_m: 1.5,
            skip_indoor: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxCell {
    pub col: usize,
    pub row: usize,
    pub position: Vec3,
}

/// Receiver cell centres on a uniform lattice over the terrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxGrid {
    pub spec: GridSpec,
    pub x0: f64,
    pub y0: f64,
    pub ncols: usize,
    pub nrows: usize,
    pub cells: Vec<RxCell>,
}

impl RxGrid {
    pub fn new(scene: &Scene, spec: GridSpec) -> Result<Self> {
        if !(spec.spacing_m > 0.0 && spec.spacing_m.is_finite()) {
            return Err(Error::Invalid(format!("grid spacing must be positive, got {}", spec.spacing_m)));
        }
        if !(spec.height_m > 0.0 && spec.height_m.is_finite()) {
            return Err(Error::Invalid(format!("receiver height must be positive, got {}", spec.height_m)));
        }
        let b = scene.terrain().bounds();
        let (w, h) = (b.max.x - b.min.x, b.max.y - b.min.y);
        let ncols = (w / spec.spacing_m).floor() as usize;
        let nrows = (h / spec.spacing_m).floor() as usize;
        if ncols == 0 || nrows == 0 {
            return Err(Error::Invalid("grid spacing exceeds the scene extent".into()));
        }
        let x0 = b.min.x + 0.5 * (w - ncols as f64 * spec.spacing_m);
        let y0 = b.min.y + 0.5 * (h - nrows as f64 * spec.spacing_m);
        let mut cells = Vec::with_capacity(ncols * nrows);
        for row in 0..nrows {
            for col in 0..ncols {
                let x = x0 + (col as f64 + 0.5) * spec.spacing_m;
                let y = y0 + (row as f64 + 0.5) * spec.spacing_m;
                if spec.skip_indoor && scene.buildings.values().any(|bi| point_in_polygon([x, y], &bi.footprint.outer_ring)) {
                    continue;
                }
                let Some(g) = scene.ground_height(x, y) else { continue };
                cells.push(RxCell {
                    col,
                    row,
                    position: Vec3::new(x, y, g + spec.height_m),
                });
            }
        }
        Ok(Self {
            spec,
            x0,
            y0,
            ncols,
            nrows,
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Horizontal distance of every cell from `tx`.
    pub fn distances(&self, tx: Vec3) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| (c.position.x - tx.x).hypot(c.position.y - tx.y))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSample {
    pub metrics: LinkMetrics,
    pub paths: u32,
}

/// Variability of one cell over K perturbations. Std fields are `None` when
/// fewer than `min_samples` values are available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub pg_std_db: Option<f64>,
    pub med_std_ns: Option<f64>,
    pub ds_std_ns: Option<f64>,
    pub k_std_db: Option<f64>,
    pub outage_count: usize,
    pub alive_count: usize,
    /// Perturbations in which the cell received no path at all.
    pub pathless_count: usize,
}

impl CellStats {
    pub fn total(&self) -> usize {
        self.outage_count + self.alive_count
    }

    pub fn outage_frequency(&self) -> f64 {
        self.outage_count as f64 / self.total() as f64
    }

    pub fn always_dead(&self) -> bool {
        self.pathless_count == self.total()
    }

    pub fn std(&self, m: StdMetric) -> Option<f64> {
        match m {
            StdMetric::PathGain => self.pg_std_db,
            StdMetric::MeanExcessDelay => self.med_std_ns,
            StdMetric::DelaySpread => self.ds_std_ns,
            StdMetric::KFactor => self.k_std_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMetric {
    PathGain,
    MeanExcessDelay,
    DelaySpread,
    KFactor,
}

impl StdMetric {
    pub const ALL: [StdMetric; 4] = [
        StdMetric::PathGain,
        StdMetric::MeanExcessDelay,
        StdMetric::DelaySpread,
        StdMetric::KFactor,
    ];

    /// Column stem including the unit, e.g. `pg_std_db`.
    pub fn column(self) -> &'static str {
        match self {
            StdMetric::PathGain => "pg_std_db",
            StdMetric::MeanExcessDelay => "med_std_ns",
            StdMetric::DelaySpread => "ds_std_ns",
            StdMetric::KFactor => "k_std_db",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            StdMetric::PathGain => "pg",
            StdMetric::MeanExcessDelay => "med",
            StdMetric::DelaySpread => "ds",
            StdMetric::KFactor => "k",
        }
    }
}

/// Sample standard deviation (n − 1) of `values`, or `None` below
/// `min_samples`. Values are sorted first so the result does not depend on
/// their order.
pub fn sample_std(values: &mut [f64], min_samples: usize) -> Option<f64> {
    let n = values.len();
    if n < min_samples.max(2) {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

pub fn aggregate_cells(samples: &[CellSample], min_samples: usize) -> CellStats {
    let mut pg = Vec::new();
    let mut med = Vec::new();
    let mut ds = Vec::new();
    let mut k = Vec::new();
    let mut outage_count = 0;
    let mut pathless_count = 0;
    for s in samples {
        if s.paths == 0 {
            pathless_count += 1;
        }
        match s.metrics {
            LinkMetrics::Outage => outage_count += 1,
            LinkMetrics::Connected(c) => {
                pg.push(c.path_gain_db);
                med.push(c.mean_excess_delay_ns);
                ds.push(c.delay_spread_ns);
                if let Some(v) = c.k_factor.finite() {
                    k.push(v);
                }
            }
        }
    }
    CellStats {
        alive_count: pg.len(),
        pg_std_db: sample_std(&mut pg, min_samples),
        med_std_ns: sample_std(&mut med, min_samples),
        ds_std_ns: sample_std(&mut ds, min_samples),
        k_std_db: sample_std(&mut k, min_samples),
        outage_count,
        pathless_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub scene_name: String,
    /// Worker count; not serialized.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub min_samples: usize,
    pub pg_threshold_db: f64,
    pub combine: Combine,
    pub bin_width_m: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            scene_name: "scene".into(),
            threads: 1,
            min_samples: 2,
            pg_threshold_db: DEFAULT_PG_THRESHOLD_DB,
            combine: Combine::Incoherent,
            bin_width_m: 25.0,
        }
    }
}

/// Samples and per-cell statistics of one (transmitter, kind) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub tx: usize,
    pub kind: PerturbationKind,
    /// `samples[k][cell]`.
    pub samples: Vec<Vec<CellSample>>,
    pub cells: Vec<CellStats>,
    pub profile: Vec<ProfileBin>,
    pub histogram: OutageHistogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: RxGrid,
    pub txs: Vec<Vec3>,
    pub specs: Vec<PerturbationSpec>,
    pub trace: TraceConfig,
    pub options: SweepOptions,
    pub groups: Vec<GroupResult>,
    pub pooled_histograms: Vec<OutageHistogram>,
    pub dispersion: Vec<DispersionPair>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    /// Aggregates and analysis products from raw samples, ordered
    /// `samples[tx][spec][k][cell]`.
    pub fn from_samples(
        grid: RxGrid,
        txs: Vec<Vec3>,
        specs: Vec<PerturbationSpec>,
        trace: TraceConfig,
        options: SweepOptions,
        samples: Vec<Vec<Vec<Vec<CellSample>>>>,
    ) -> Result<Self> {
        let mut groups = Vec::with_capacity(txs.len() * specs.len());
        for (t, per_spec) in samples.into_iter().enumerate() {
            let distances = grid.distances(txs[t]);
            for (s, per_k) in per_spec.into_iter().enumerate() {
                let spec = &specs[s];
                if per_k.len() != spec.count || per_k.iter().any(|row| row.len() != grid.len()) {
                    return Err(Error::Invalid(format!("sample block for tx {t}, kind {} is incomplete", spec.kind)));
                }
                let cells: Vec<CellStats> = (0..grid.len())
                    .map(|c| {
                        let column: Vec<CellSample> = per_k.iter().map(|row| row[c]).collect();
                        aggregate_cells(&column, options.min_samples)
                    })
                    .collect();
                groups.push(GroupResult {
                    tx: t,
                    kind: spec.kind,
                    profile: distance_profile(&cells, &distances, options.bin_width_m),
                    histogram: outage_histogram(Some(t), spec.kind, spec.count, &[&cells]),
                    samples: per_k,
                    cells,
                });
            }
        }
        let mut pooled_histograms = Vec::new();
        let mut summary = Vec::new();
        for spec in &specs {
            let of_kind: Vec<&GroupResult> = groups.iter().filter(|g| g.kind == spec.kind).collect();
            let cells: Vec<&[CellStats]> = of_kind.iter().map(|g| g.cells.as_slice()).collect();
            pooled_histograms.push(outage_histogram(None, spec.kind, spec.count, &cells));
            summary.push(summary_table(&options.scene_name, spec.kind, &cells));
        }
        let dispersion = dispersion_pairs(&groups);
        Ok(Self {
            grid,
            txs,
            specs,
            trace,
            options,
            groups,
            pooled_histograms,
            dispersion,
            summary,
        })
    }

    pub fn group(&self, tx: usize, kind: PerturbationKind) -> Option<&GroupResult> {
        self.groups.iter().find(|g| g.tx == tx && g.kind == kind)
    }

    pub fn summary_for(&self, kind: PerturbationKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.kind == kind)
    }
}

fn validate_inputs(scene: &Scene, txs: &[Vec3], specs: &[PerturbationSpec], grid: &RxGrid, opts: &SweepOptions) -> Result<()> {
    if txs.is_empty() {
        return Err(Error::Invalid("at least one transmitter is required".into()));
    }
    for (i, tx) in txs.iter().enumerate() {
        match scene.ground_height(tx.x, tx.y) {
            Some(g) if tx.z > g => {}
            _ => return Err(Error::Invalid(format!("transmitter {i} at {tx:?} is not above the terrain"))),
        }
    }
    if specs.is_empty() {
        return Err(Error::Invalid("at least one perturbation kind is required".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        s.validate()?;
        if specs[..i].iter().any(|o| o.kind == s.kind) {
            return Err(Error::Invalid(format!("perturbation kind {} listed twice", s.kind)));
        }
    }
    if grid.is_empty() {
        return Err(Error::Invalid("receiver grid has no cells".into()));
    }
    if opts.min_samples < 2 {
        return Err(Error::Invalid("min_samples must be at least 2".into()));
    }
    if !(opts.bin_width_m > 0.0) {
        return Err(Error::Invalid("bin_width_m must be positive".into()));
    }
    Ok(())
}

/// Traces every `(tx, kind, k)` realization over the grid. The result does
/// not depend on `options.threads`.
pub fn run_sweep(
    scene: &Scene,
    txs: &[Vec3],
    specs: &[PerturbationSpec],
    grid: &RxGrid,
    trace: &TraceConfig,
    options: &SweepOptions,
) -> Result<SweepResult> {
    trace.validate()?;
    validate_inputs(scene, txs, specs, grid, options)?;
    let mut tasks = Vec::new();
    for t in 0..txs.len() {
        for (s, spec) in specs.iter().enumerate() {
            tasks.extend((0..spec.count).map(|k| (t, s, k)));
        }
    }
    let run_task = |&(t, s, k): &(usize, usize, usize)| -> Result<Vec<CellSample>> {
        let spec = &specs[s];
        let fail = |cell: usize, e: Error| Error::Sweep {
            tx: t,
            kind: spec.kind.to_string(),
            index: k,
            cell,
            source: Box::new(e),
        };
        let perturbed = apply_perturbation(scene, spec, t as u64, k).map_err(|e| fail(0, e))?.scene;
        let accel = build_accel(&perturbed);
        let ctx = TxContext::new(&accel, txs[t], trace);
        grid.cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let ps = ctx.trace(&perturbed, cell.position).map_err(|e| fail(c, e))?;
                Ok(CellSample {
                    metrics: compute_metrics(&ps, options.pg_threshold_db, options.combine),
                    paths: ps.paths.len() as u32,
                })
            })
            .collect()
    };
    let outcomes = exec::with_threads(options.threads, || exec::par_map(&tasks, run_task));

    let mut samples: Vec<Vec<Vec<Vec<CellSample>>>> =
        (0..txs.len()).map(|_| specs.iter().map(|s| Vec::with_capacity(s.count)).collect()).collect();
    for (&(t, s, _), out) in tasks.iter().zip(outcomes) {
        samples[t][s].push(out?);
    }
    SweepResult::from_samples(grid.clone(), txs.to_vec(), specs.to_vec(), trace.clone(), options.clone(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emwave::MaterialTable;
    use crate::metrics::{Connected, KFactor};
    use crate::synth::flat_scene;

    fn alive(pg: f64) -> CellSample {
        CellSample {
            metrics: LinkMetrics::Connected(Connected {
                path_gain_db: pg,
                mean_excess_delay_ns: 0.0,
                delay_spread_ns: 0.0,
                k_factor: KFactor::Infinite,
            }),
            paths: 1,
        }
    }

    const DEAD: CellSample = CellSample {
        metrics: LinkMetrics::Outage,
        paths: 0,
    };

    #[test]
    fn std_of_three_pg_samples() {
        let s = aggregate_cells(&[alive(-80.0), alive(-82.0), alive(-84.0)], 2);
        assert!((s.pg_std_db.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(s.k_std_db, None);
    }

    #[test]
    fn outage_frequency_and_censoring() {
        let mut v = vec![alive(-90.0); 40];
        v.extend(vec![DEAD; 10]);
        assert_eq!(aggregate_cells(&v, 2).outage_frequency(), 0.2);

        let mut v = vec![DEAD; 49];
        v.push(alive(-90.0));
        let s = aggregate_cells(&v, 2);
        assert_eq!(s.pg_std_db, None);
        assert_eq!(s.outage_frequency(), 0.98);
        assert!(!s.always_dead());
        assert!(aggregate_cells(&[DEAD; 5], 2).always_dead());
    }

    #[test]
    fn grid_sits_above_terrain() {
        let scene = flat_scene(0.0, 0.0, 100.0, 50.0, MaterialTable::builtin().get("itu_concrete").unwrap().clone(), 3.5e9).unwrap();
        let g = RxGrid::new(&scene, GridSpec::default()).unwrap();
        assert_eq!((g.ncols, g.nrows, g.len()), (20, 10, 200));
        assert!(g.cells.iter().all(|c| c.position.z == 1.5));
        assert_eq!(g.cells[0].position, Vec3::new(2.5, 2.5, 1.5));
    }

    #[test]
    fn empty_scene_material_sweep_has_zero_spread() {
        let scene = flat_scene(0.0, 0.0, 100.0, 100.0, MaterialTable::builtin().get("itu_concrete").unwrap().clone(), 3.5e9).unwrap();
        let grid = RxGrid::new(
            &scene,
            GridSpec {
                spacing_m: 25.0,
                ..GridSpec::default()
            },
        )
        .unwrap();
        let mut spec = PerturbationSpec::new(PerturbationKind::Material, 1);
        spec.count = 2;
        let cfg = TraceConfig {
            max_reflection_order: 1,
            ..TraceConfig::default()
        };
        let r = run_sweep(&scene, &[Vec3::new(50.0, 50.0, 10.0)], &[spec.clone()], &grid, &cfg, &SweepOptions::default()).unwrap();
        assert!(r.groups[0].cells.iter().all(|c| c.pg_std_db == Some(0.0)));

        spec.count = 1;
        let r = run_sweep(&scene, &[Vec3::new(50.0, 50.0, 10.0)], &[spec], &grid, &cfg, &SweepOptions::default()).unwrap();
        assert!(r.groups[0].cells.iter().all(|c| StdMetric::ALL.iter().all(|&m| c.std(m).is_none())));
    }
}

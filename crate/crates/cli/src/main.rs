mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use gert_core::emwave::MaterialTable;
use gert_core::geodata::{parse_dem, parse_footprints_with, TerrainGrid};
use gert_core::geom::Vec3;
use gert_core::metrics::{compute_metrics, Combine, LinkMetrics, DEFAULT_PG_THRESHOLD_DB};
use gert_core::scene::{assemble_scene, export_scene, import_scene, Scene};
use gert_core::sweep::{load_sweep, run_sweep, write_outputs, RxGrid};
use gert_core::tracer::{build_accel, PathKind, TraceConfig, TxContext};
use gert_fetch::{Fetcher, SourceKind};
use serde_json::json;

use config::RunConfig;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const METADATA_FILE: &str = "run_metadata.json";
const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Parser)]
#[command(name = "gert", version, about = "Urban ray tracing and geometry sensitivity sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download footprints and terrain for the configured region into the cache.
    Fetch(ConfigArg),
    /// Build the scene described by a run configuration and export it.
    Build {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory (defaults to `<out>/scene` from the configuration).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace one link and print its paths and metrics.
    Trace(TraceArgs),
    /// Run a perturbation sweep.
    Sweep(SweepArgs),
    /// Regenerate the analysis products of a finished sweep.
    Report {
        /// Directory of a sweep run with raw samples retained.
        #[arg(long)]
        run: PathBuf,
        /// Where to write products (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    /// Scene directory produced by `gert build`.
    #[arg(long)]
    scene: PathBuf,
    /// Transmitter position as x,y,z in metres.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    tx: Vec3,
    /// Receiver position as x,y,z in metres.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    rx: Vec3,
    #[arg(long, default_value_t = TraceConfig::default().max_reflection_order)]
    max_order: u8,
    #[arg(long)]
    no_diffraction: bool,
    /// Carrier frequency in Hz.
    #[arg(long, default_value_t = TraceConfig::default().frequency_hz)]
    frequency: f64,
    /// Sum path amplitudes instead of powers.
    #[arg(long)]
    coherent: bool,
    /// Print the path set as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected x,y,z, got {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<gert_core::Error> for Failure {
    fn from(e: gert_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<gert_fetch::FetchError> for Failure {
    fn from(e: gert_fetch::FetchError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Fetch(c) => fetch(&c.config),
        Command::Build { config, out } => build(&config.config, out),
        Command::Trace(args) => trace(&args),
        Command::Sweep(args) => sweep(&args),
        Command::Report { run, out } => report(&run, out),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(Failure::Usage)
}

/// Relative paths in a configuration are taken from its directory.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn fetch(path: &Path) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    let Some(rc) = cfg.scene.region else {
        return Err(Failure::Usage("fetch needs [scene.region]".into()));
    };
    let region = rc.region()?;
    let fetcher = Fetcher::from_env();
    let fp = fetcher.fetch_footprints(&cfg.fetch.source(cfg.fetch.footprints), &region)?;
    report_fetch("footprints", &fp);
    if cfg.fetch.dem {
        let dem = fetcher.fetch_dem(&cfg.fetch.source(SourceKind::UsgsDem), &region, cfg.fetch.dem_resolution_m)?;
        report_fetch("terrain", &dem);
    }
    println!("cache: {}", fetcher.cache().root().display());
    Ok(())
}

fn report_fetch(what: &str, f: &gert_fetch::Fetched) {
    let origin = if f.from_cache { "cached" } else { "downloaded" };
    println!("{what}: {} bytes ({origin})", f.bytes.len());
    for w in &f.warnings {
        eprintln!("warning: {w}");
    }
}

fn material_table(cfg: &RunConfig, base: &Path) -> Result<MaterialTable, Failure> {
    match &cfg.scene.materials_file {
        None => Ok(MaterialTable::builtin()),
        Some(p) => {
            let p = resolve(base, p);
            let text = std::fs::read_to_string(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            MaterialTable::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        }
    }
}

fn load_scene(cfg: &RunConfig, base: &Path) -> Result<Scene, Failure> {
    let s = &cfg.scene;
    let f = cfg.trace.frequency_hz;
    if let Some(dir) = &s.dir {
        return Ok(import_scene(&resolve(base, dir))?);
    }
    let table = material_table(cfg, base)?;
    if let Some(layout) = &s.manhattan {
        let w = layout.extent();
        let terrain = TerrainGrid::flat(0.0, 0.0, w, w, w / 4.0, 0.0)?;
        return Ok(assemble_scene(&layout.footprints(), &terrain, &cfg.materials, &table, f, (0.0, 0.0))?);
    }
    let Some(rc) = &s.region else {
        return Err(Failure::Usage("[scene] needs dir, manhattan or region".into()));
    };
    let region = rc.region()?;
    let fetcher = || Fetcher::from_env();
    let fp_bytes = match &s.footprints {
        Some(p) => read(&resolve(base, p))?,
        None => {
            let got = fetcher().fetch_footprints(&cfg.fetch.source(cfg.fetch.footprints), &region)?;
            got.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            got.bytes
        }
    };
    let parsed = parse_footprints_with(&fp_bytes, &region, &s.heights)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let terrain = match &s.dem {
        Some(p) => Some(read(&resolve(base, p))?),
        None if cfg.fetch.dem => {
            let got = fetcher().fetch_dem(&cfg.fetch.source(SourceKind::UsgsDem), &region, cfg.fetch.dem_resolution_m)?;
            got.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            Some(got.bytes)
        }
        None => None,
    };
    let terrain = match terrain {
        Some(bytes) => {
            let dem = parse_dem(&bytes, &region)?;
            if dem.nodata_filled > 0 {
                eprintln!("warning: {} terrain cells without data were filled", dem.nodata_filled);
            }
            dem.grid
        }
        None => {
            let (x0, y0, x1, y1) = region.local_bounds();
            TerrainGrid::flat(x0, y0, x1, y1, 10.0, 0.0)?
        }
    };
    Ok(assemble_scene(&parsed.footprints, &terrain, &cfg.materials, &table, f, region.origin())?)
}

fn read(p: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

fn build(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    let base = base_dir(path);
    let scene = load_scene(&cfg, &base)?;
    let dir = out.unwrap_or_else(|| resolve(&base, &cfg.out).join("scene"));
    export_scene(&scene, &dir)?;
    println!(
        "scene: {} objects, {} triangles -> {}",
        scene.meshes.len(),
        scene.triangle_count(),
        dir.display()
    );
    Ok(())
}

fn trace(a: &TraceArgs) -> Result<(), Failure> {
    let cfg = TraceConfig {
        max_reflection_order: a.max_order,
        diffraction_enabled: !a.no_diffraction,
        frequency_hz: a.frequency,
        ..TraceConfig::default()
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let scene = import_scene(&a.scene)?;
    let accel = build_accel(&scene);
    let set = TxContext::new(&accel, a.tx, &cfg).trace(&scene, a.rx)?;
    let combine = if a.coherent { Combine::Coherent } else { Combine::Incoherent };
    let metrics = compute_metrics(&set, DEFAULT_PG_THRESHOLD_DB, combine);
    if a.json {
        let doc = json!({ "paths": set, "metrics": metrics });
        println!("{}", serde_json::to_string_pretty(&doc).expect("path set serializes"));
        return Ok(());
    }
    println!("{} path(s)", set.paths.len());
    for (i, p) in set.paths.iter().enumerate() {
        let kind = match p.kind {
            PathKind::Los => "los".to_string(),
            PathKind::Reflection { order } => format!("reflection/{order}"),
            PathKind::Diffraction => "diffraction".to_string(),
        };
        println!(
            "{i:>3}  {kind:<14} length {:>10.3} m  delay {:>10.3} ns  gain {:>8.2} dB",
            p.length(),
            p.delay_s * 1e9,
            10.0 * p.power().log10()
        );
    }
    match metrics {
        LinkMetrics::Outage => println!("outage"),
        LinkMetrics::Connected(c) => {
            println!("path gain {:.2} dB", c.path_gain_db);
            println!("mean excess delay {:.3} ns", c.mean_excess_delay_ns);
            println!("delay spread {:.3} ns", c.delay_spread_ns);
            match c.k_factor.finite() {
                Some(k) => println!("K-factor {k:.2} dB"),
                None => println!("K-factor inf"),
            }
        }
    }
    if let Some(los) = set.paths.iter().find(|p| p.kind == PathKind::Los) {
        println!("direct distance {:.3} m, c-delay {:.3} ns", los.length(), los.length() / SPEED_OF_LIGHT * 1e9);
    }
    Ok(())
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let path = &a.config.config;
    let mut cfg = load_config(path)?;
    let base = base_dir(path);
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    let out = match &a.out {
        Some(o) => o.clone(),
        None => resolve(&base, &cfg.out),
    };
    cfg.validate().map_err(Failure::Usage)?;
    if cfg.tx.is_empty() {
        return Err(Failure::Usage("no [[tx]] entries".into()));
    }

    let started = unix_now();
    let clock = Instant::now();
    let scene = load_scene(&cfg, &base)?;
    let txs: Vec<Vec3> = cfg
        .tx
        .iter()
        .map(|t| t.position(&scene))
        .collect::<Result<_, _>>()
        .map_err(Failure::Usage)?;
    let grid = RxGrid::new(&scene, cfg.grid)?;
    eprintln!(
        "sweep: {} tx, {} cells, {} kinds x {} perturbations, {} thread(s)",
        txs.len(),
        grid.len(),
        cfg.perturbation.kinds.len(),
        cfg.perturbation.count,
        cfg.threads
    );
    let result = run_sweep(&scene, &txs, &cfg.specs(), &grid, &cfg.trace, &cfg.sweep_options())?;
    write_outputs(&result, &out, cfg.sweep.raw_samples)?;
    write_file(&out.join(CONFIG_ECHO_FILE), cfg.to_toml().as_bytes())?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": started,
        "finished_unix_s": unix_now(),
        "duration_s": clock.elapsed().as_secs_f64(),
        "threads": cfg.threads,
        "parallel": gert_core::exec::parallel_enabled(),
        "config": path.display().to_string(),
    });
    write_file(&out.join(METADATA_FILE), serde_json::to_string_pretty(&meta).expect("json").as_bytes())?;
    for row in &result.summary {
        let cols: Vec<String> = row
            .metrics
            .iter()
            .map(|m| m.map(|s| format!("{:.3}", s.avg)).unwrap_or_else(|| "-".into()))
            .collect();
        println!("{:<14} {}", row.kind.name(), cols.join(" "));
    }
    println!("results -> {}", out.display());
    Ok(())
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(p, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))
}

fn report(run: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let result = load_sweep(run)?;
    let out = out.unwrap_or_else(|| run.to_path_buf());
    write_outputs(&result, &out, true)?;
    println!("report -> {}", out.display());
    Ok(())
}

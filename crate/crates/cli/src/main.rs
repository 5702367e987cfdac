//! `roomtree`: solve, synthesize, evaluate and render floor-plan scenes.

mod config;
mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use roomtree::eval::{evaluate_with, Counts, MetricsReport, DEFAULT_MATCH_GATE};
use roomtree::pipeline::solve;
use roomtree::raster::compose_indexed;
use roomtree::scene::{
    load_density, load_gt, load_plan, load_scene_from, save_plan, save_scene, generate_synthetic_scene,
    ScenePaths, SyntheticSceneSpec, DENSITY_FILE, DENSITY_META_FILE, GT_FILE, SCHEMA_VERSION,
};
use roomtree::{Error, GridDims, Polygon};
use serde::Serialize;

use crate::config::{Emit, FileConfig, RunConfig};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

pub const PLAN_FILE: &str = "plan.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const METRICS_TABLE_FILE: &str = "metrics.txt";
pub const OVERLAY_FILE: &str = "overlay.svg";
pub const ROOMS_PGM_FILE: &str = "rooms.pgm";

#[derive(Parser)]
#[command(name = "roomtree", version, about = "Floor-plan reconstruction by tree search over room proposals")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a floor plan from a scene directory.
    Solve(SolveArgs),
    /// Write a synthetic scene (or a corpus of them).
    Synth(SynthArgs),
    /// Score a plan against ground truth.
    Eval(EvalArgs),
    /// Render a density map and/or a plan to SVG or PGM.
    Render(RenderArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Flat TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene directory holding density.pgm, density.json, segments.json and optionally gt.json.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Segments file replacing the scene's segments.json (JSON or label PGM/PNG).
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Ground-truth plan replacing the scene's gt.json.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// oracle | density-coverage
    #[arg(long)]
    scorer: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    refine_steps: Option<usize>,
    #[arg(long)]
    final_steps: Option<usize>,
    #[arg(long = "lambda-f")]
    lambda_f: Option<f64>,
    #[arg(long = "lambda-ang")]
    lambda_ang: Option<f64>,
    #[arg(long = "lambda-glob")]
    lambda_glob: Option<f64>,
    #[arg(long = "lambda-0")]
    lambda_0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of svg,pgm,json,trace.
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<String>>,
}

impl SolveArgs {
    fn flags(&self) -> FileConfig {
        FileConfig {
            scene: self.scene.clone(),
            segments: self.segments.clone(),
            gt: self.gt.clone(),
            out: self.out.clone(),
            scorer: self.scorer.clone(),
            iterations: self.iterations,
            seed: self.seed,
            refine_steps: self.refine_steps,
            final_steps: self.final_steps,
            lambda_f: self.lambda_f,
            lambda_ang: self.lambda_ang,
            lambda_glob: self.lambda_glob,
            lambda_0: self.lambda_0,
            emit: self.emit.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Exact room count; overrides --min-rooms/--max-rooms.
    #[arg(long)]
    rooms: Option<usize>,
    #[arg(long, default_value_t = 3)]
    min_rooms: usize,
    #[arg(long, default_value_t = 6)]
    max_rooms: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of scenes; above 1 they go to <out>/scene_NNN with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Start from the noisy preset (jitter 2 px, morph noise, 30% false positives, 20% splits).
    #[arg(long)]
    noisy: bool,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    false_positive_prob: Option<f64>,
    #[arg(long)]
    split_prob: Option<f64>,
    #[arg(long)]
    l_shape_prob: Option<f64>,
    #[arg(long)]
    non_manhattan_prob: Option<f64>,
    /// Free space between neighbouring rooms, in px.
    #[arg(long)]
    wall_gap: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with = "corpus", requires = "gt")]
    plan: Option<PathBuf>,
    #[arg(long, conflicts_with = "corpus")]
    gt: Option<PathBuf>,
    /// Directory of scene directories, each holding gt.json and a plan.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Plan file name inside each corpus scene directory.
    #[arg(long, default_value = PLAN_FILE)]
    plan_name: String,
    /// Raster extent used for matching; defaults to the plans' bounding box.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Directory for metrics.json and metrics.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene directory; its density map becomes the underlay.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Density PGM, if not using --scene.
    #[arg(long, conflicts_with = "scene")]
    density: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Output file; the extension (.svg or .pgm) picks the format.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Solve(a) => cmd_solve(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Render(a) => cmd_render(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Library errors map by kind; anything raised by the front end itself is
/// a configuration or input problem.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                _ if err.is_input_error() => EXIT_INPUT,
                Error::EmptyScene | Error::EmptyMask | Error::DegenerateContour(_) => EXIT_DEGENERATE,
                _ => EXIT_INTERNAL,
            };
        }
    }
    EXIT_INPUT
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("{}: cannot write", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    schema_version: u64,
    report: &'a MetricsReport,
    room: Counts,
    corner: Counts,
    angle: Counts,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u64,
    tool_version: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    wall_time_s: f64,
    search_time_s: f64,
    segments: usize,
    iterations_run: usize,
    distinct_leaves: usize,
    choices: &'a [Option<usize>],
    score: f64,
    leaf_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_trace: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf_trace: Option<&'a [f64]>,
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let t0 = Instant::now();
    let file = match &a.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(file.overlay(a.flags()))?;

    let mut paths = ScenePaths::in_dir(&cfg.scene);
    if let Some(s) = &cfg.segments {
        paths.segments = s.clone();
    }
    let explicit_gt = cfg.gt.clone();
    if let Some(g) = &explicit_gt {
        paths.gt = g.clone();
    }
    let mut scene = load_scene_from(&paths)?;
    if let Some(g) = &explicit_gt {
        if scene.gt.is_none() {
            scene.gt = Some(load_gt(g)?);
        }
    }
    log::info!("loaded {} segments from {}", scene.segments.len(), cfg.scene.display());

    let out = solve(&scene, &cfg.pipeline())?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("{}: cannot create", cfg.out.display()))?;
    save_plan(&out.rooms, &cfg.out.join(PLAN_FILE))?;

    let dims = scene.density.dims();
    if cfg.emits(Emit::Svg) {
        let svg = render::svg(dims, Some(scene.density.grid()), &out.rooms)?;
        write(&cfg.out.join(OVERLAY_FILE), svg)?;
    }
    if cfg.emits(Emit::Pgm) {
        let mut buf = Vec::new();
        compose_indexed(&out.rooms, dims).write_pgm8(&mut buf)?;
        write(&cfg.out.join(ROOMS_PGM_FILE), buf)?;
    }
    if cfg.emits(Emit::Json) {
        if let Some(gt) = &scene.gt {
            let ev = evaluate_with(&gt.rooms, &out.rooms, dims, DEFAULT_MATCH_GATE);
            write_metrics(&cfg.out, &ev.report, ev.room, ev.corner, ev.angle)?;
            println!("{}", ev.report);
        }
    }
    let trace = cfg.emits(Emit::Trace);
    let r = &out.result;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.search.seed,
        config_hash: cfg.hash(),
        config: &cfg,
        wall_time_s: t0.elapsed().as_secs_f64(),
        search_time_s: r.wall_time.as_secs_f64(),
        segments: scene.segments.len(),
        iterations_run: r.iterations_run,
        distinct_leaves: r.distinct_leaves,
        choices: &r.choices,
        score: r.score,
        leaf_score: r.leaf_score,
        best_trace: trace.then_some(&r.best_trace[..]),
        leaf_trace: trace.then_some(&r.refinement_trace[..]),
    };
    write(&cfg.out.join(MANIFEST_FILE), to_json(&manifest))?;
    log::info!("{} rooms, score {:.4}, {:.1}s", out.rooms.len(), r.score, t0.elapsed().as_secs_f64());
    Ok(())
}

fn write_metrics(dir: &Path, report: &MetricsReport, room: Counts, corner: Counts, angle: Counts) -> Result<()> {
    let doc = MetricsDoc {
        schema_version: SCHEMA_VERSION,
        report,
        room,
        corner,
        angle,
    };
    write(&dir.join(METRICS_FILE), to_json(&doc))?;
    write(&dir.join(METRICS_TABLE_FILE), format!("{report}\n"))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if a.count == 0 {
        return Err(Error::Spec("count must be at least 1".into()).into());
    }
    let (lo, hi) = match a.rooms {
        Some(n) => (n, n),
        None => (a.min_rooms, a.max_rooms),
    };
    let mut base = if a.noisy {
        SyntheticSceneSpec::noisy(lo, hi, a.seed)
    } else {
        SyntheticSceneSpec::noiseless(lo, hi, a.seed)
    };
    base.width = a.width;
    base.height = a.height;
    if let Some(v) = a.jitter {
        base.jitter_sigma = v;
    }
    if let Some(v) = a.false_positive_prob {
        base.false_positive_prob = v;
    }
    if let Some(v) = a.split_prob {
        base.split_prob = v;
    }
    if let Some(v) = a.l_shape_prob {
        base.l_shape_prob = v;
    }
    if let Some(v) = a.non_manhattan_prob {
        base.non_manhattan_prob = v;
    }
    if let Some(v) = a.wall_gap {
        base.wall_gap = v;
    }
    base.validate()?;
    for k in 0..a.count {
        let spec = SyntheticSceneSpec {
            seed: a.seed + k as u64,
            ..base.clone()
        };
        let dir = if a.count == 1 { a.out.clone() } else { a.out.join(format!("scene_{k:03}")) };
        let scene = generate_synthetic_scene(&spec)?;
        save_scene(&scene, &dir)?;
        write(&dir.join("synth.json"), to_json(&spec))?;
    }
    Ok(())
}

/// Smallest grid holding every vertex of both plans.
fn plan_extent(a: &[Polygon], b: &[Polygon]) -> GridDims {
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for v in a.iter().chain(b).flat_map(|p| p.vertices()) {
        w = w.max(v.x.ceil() + 1.0);
        h = h.max(v.y.ceil() + 1.0);
    }
    GridDims::new(w as usize, h as usize)
}

#[derive(Serialize)]
struct CorpusRow {
    scene: String,
    report: MetricsReport,
}

#[derive(Serialize)]
struct CorpusDoc {
    schema_version: u64,
    scenes: Vec<CorpusRow>,
    mean: MetricsReport,
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let dims_for = |gt: &[Polygon], plan: &[Polygon]| {
        let e = plan_extent(gt, plan);
        GridDims::new(a.width.unwrap_or(e.width), a.height.unwrap_or(e.height))
    };
    if let Some(root) = &a.corpus {
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)
            .with_context(|| format!("{}: cannot list corpus", root.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(GT_FILE).is_file())
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            bail!("{}: no scene directories with {GT_FILE}", root.display());
        }
        let mut rows = Vec::new();
        for d in &dirs {
            let gt = load_gt(&d.join(GT_FILE))?;
            let plan = load_plan(&d.join(&a.plan_name))?;
            let ev = evaluate_with(&gt.rooms, &plan, dims_for(&gt.rooms, &plan), DEFAULT_MATCH_GATE);
            let name = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            rows.push(CorpusRow {
                scene: name,
                report: ev.report,
            });
        }
        let reports: Vec<MetricsReport> = rows.iter().map(|r| r.report).collect();
        let mean = MetricsReport::mean(&reports);
        let mut table = MetricsReport::table_header();
        for r in &rows {
            table.push('\n');
            table.push_str(&r.report.table_row(&r.scene));
        }
        table.push('\n');
        table.push_str(&mean.table_row("mean"));
        println!("{table}");
        if let Some(out) = &a.out {
            fs::create_dir_all(out).with_context(|| format!("{}: cannot create", out.display()))?;
            let doc = CorpusDoc {
                schema_version: SCHEMA_VERSION,
                scenes: rows,
                mean,
            };
            write(&out.join(METRICS_FILE), to_json(&doc))?;
            write(&out.join(METRICS_TABLE_FILE), table + "\n")?;
        }
        return Ok(());
    }
    let (Some(plan_path), Some(gt_path)) = (&a.plan, &a.gt) else {
        bail!("eval needs --plan and --gt, or --corpus");
    };
    let plan = load_plan(plan_path)?;
    let gt = load_gt(gt_path)?;
    let ev = evaluate_with(&gt.rooms, &plan, dims_for(&gt.rooms, &plan), DEFAULT_MATCH_GATE);
    println!("{}", ev.report);
    if let Some(out) = &a.out {
        fs::create_dir_all(out).with_context(|| format!("{}: cannot create", out.display()))?;
        write_metrics(out, &ev.report, ev.room, ev.corner, ev.angle)?;
    }
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let density = match (&a.scene, &a.density) {
        (Some(dir), _) => Some(load_density(&dir.join(DENSITY_FILE), Some(&dir.join(DENSITY_META_FILE)))?),
        (None, Some(p)) => Some(load_density(p, None)?),
        (None, None) => None,
    };
    let plan = a.plan.as_deref().map(load_plan).transpose()?;
    let ext = a.out.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pgm" => {
            let grid = match (&density, &plan) {
                (Some(d), None) => d.grid().clone(),
                (Some(d), Some(p)) => compose_indexed(p, d.dims()),
                (None, Some(p)) => compose_indexed(p, plan_extent(p, &[])),
                (None, None) => bail!("render needs a density map or a plan"),
            };
            let mut buf = Vec::new();
            grid.write_pgm8(&mut buf)?;
            write(&a.out, buf)
        }
        "svg" => {
            let rooms = plan.unwrap_or_default();
            let dims = match &density {
                Some(d) => d.dims(),
                None if !rooms.is_empty() => plan_extent(&rooms, &[]),
                None => bail!("render needs a density map or a plan"),
            };
            write(&a.out, render::svg(dims, density.as_ref().map(|d| d.grid()), &rooms)?)
        }
        _ => bail!("{}: output extension must be .svg or .pgm", a.out.display()),
    }
}

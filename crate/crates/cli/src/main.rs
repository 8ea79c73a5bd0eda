//! Command-line front end: world generation, single missions, batches.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad flags, 3 mission failure
//! (outputs are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tscmpc::planner::{run_mission, trace_to_csv, PlannerConfig};
use tscmpc::sim::{compute_metrics, run_batch, BatchReport, MissionResult};
use tscmpc::world::{generate_world, World, WorldConfig};
use tscmpc::{PlannerConfig64, Vec3d, World64};

pub const CONFIG_SCHEMA: &str = "config/v1";
pub const RESULT_SCHEMA: &str = "result/v1";

/// Full run configuration; serializes to the `config/v1` file format and
/// round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunConfig {
    schema: String,
    seeds: Vec<u64>,
    world: WorldConfig,
    planner: PlannerConfig64,
    start: [f64; 3],
    goal: [f64; 3],
    output_dir: String,
    jobs: usize,
    dump_corridors: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA.to_string(),
            seeds: vec![13, 19, 33, 40, 62],
            world: WorldConfig::default(),
            planner: PlannerConfig::default(),
            start: [1.0, 6.0, 6.0],
            goal: [49.0, 6.0, 6.0],
            output_dir: ".".to_string(),
            jobs: 1,
            dump_corridors: false,
        }
    }
}

#[derive(Parser)]
#[command(name = "tscmpc", version, about = "Trajectory planning in dynamic voxel worlds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a randomized world and write it as a world/v1 JSON file.
    GenerateWorld(GenerateArgs),
    /// Run a single mission and write its trace and result files.
    Run(RunArgs),
    /// Run one mission per seed and write a report/v1 summary.
    Batch(BatchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (config/v1 JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of static obstacles.
    #[arg(long = "static")]
    static_count: Option<usize>,
    /// Number of dynamic obstacles.
    #[arg(long = "dynamic")]
    dynamic_count: Option<usize>,
    /// MPC horizon length.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Planning time step (s).
    #[arg(long)]
    h: Option<f64>,
    /// Maximum agent speed used for reachable-space sizing (m/s).
    #[arg(long)]
    vmax: Option<f64>,
    /// Reference sampling speed along the global path (m/s).
    #[arg(long)]
    vsamp: Option<f64>,
    /// Reference-window advance threshold (m).
    #[arg(long = "thresh-dist")]
    thresh_dist: Option<f64>,
    /// Clearance the global path is pushed away from obstacles (m).
    #[arg(long)]
    clearance: Option<f64>,
    /// Maximum polyhedra per safe corridor.
    #[arg(long = "max-polyhedra")]
    max_polyhedra: Option<usize>,
    /// Mission start position "x,y,z" (m).
    #[arg(long)]
    start: Option<String>,
    /// Mission goal position "x,y,z" (m).
    #[arg(long)]
    goal: Option<String>,
    /// Worker threads for batch missions.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (or file for generate-world).
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    /// Write each iteration's safe corridor as tsc/v1 JSON.
    #[arg(long = "dump-corridors")]
    dump_corridors: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// World seed.
    #[arg(long, required = true)]
    seed: u64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Seed to generate the mission world from.
    #[arg(long)]
    seed: Option<u64>,
    /// Existing world/v1 file to run in (instead of --seed).
    #[arg(long)]
    world: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BatchArgs {
    /// Comma-separated list of world seeds.
    #[arg(long, required = true)]
    seeds: String,
    #[command(flatten)]
    common: CommonArgs,
}

/// Failures mapped to exit codes: usage errors exit 2, I/O errors exit 1.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) => m,
        }
    }
}

fn io_err(context: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{context}: {e}"))
}

fn parse_triple(s: &str) -> Result<[f64; 3], Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Failure::Usage(format!("expected x,y,z but got {s:?}")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .trim()
            .parse()
            .map_err(|e| Failure::Usage(format!("bad coordinate {p:?}: {e}")))?;
    }
    Ok(out)
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>, Failure> {
    let seeds: Vec<u64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| Failure::Usage(format!("bad seed {p:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err(Failure::Usage("need at least one seed".into()));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Failure::Usage("duplicate seeds rejected".into()));
    }
    Ok(seeds)
}

/// Loads the config file (or defaults) and applies flag overrides.
fn resolve_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("config parse: {e}")))?;
            if cfg.schema != CONFIG_SCHEMA {
                return Err(Failure::Usage(format!("unsupported schema {:?}", cfg.schema)));
            }
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(v) = common.static_count {
        cfg.world.n_static = v;
    }
    if let Some(v) = common.dynamic_count {
        cfg.world.n_dynamic = v;
    }
    if let Some(v) = common.n {
        if v == 0 {
            return Err(Failure::Usage("--N must be >= 1".into()));
        }
        cfg.planner.n = v;
        cfg.planner.max_failure_offset = v;
    }
    if let Some(v) = common.h {
        if v <= 0.0 {
            return Err(Failure::Usage("--h must be > 0".into()));
        }
        cfg.planner.h = v;
    }
    if let Some(v) = common.vmax {
        cfg.planner.limits.v_max = v;
    }
    if let Some(v) = common.vsamp {
        cfg.planner.v_samp = v;
    }
    if let Some(v) = common.thresh_dist {
        cfg.planner.thresh_dist = v;
    }
    if let Some(v) = common.clearance {
        cfg.planner.clearance = v;
    }
    if let Some(v) = common.max_polyhedra {
        if v == 0 {
            return Err(Failure::Usage("--max-polyhedra must be >= 1".into()));
        }
        cfg.planner.max_polyhedra = v;
    }
    if let Some(s) = &common.start {
        cfg.start = parse_triple(s)?;
    }
    if let Some(s) = &common.goal {
        cfg.goal = parse_triple(s)?;
    }
    if let Some(v) = common.jobs {
        if v == 0 {
            return Err(Failure::Usage("--jobs must be >= 1".into()));
        }
        cfg.jobs = v;
    }
    if let Some(o) = &common.output {
        cfg.output_dir = o.display().to_string();
    }
    if common.dump_corridors {
        cfg.dump_corridors = true;
        cfg.planner.collect_corridors = true;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| io_err(&format!("creating {}", parent.display()), e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn cmd_generate_world(args: &GenerateArgs) -> Result<u8, Failure> {
    let cfg = resolve_config(&args.common)?;
    let world: World64 = generate_world(args.seed, &cfg.world)
        .map_err(|e| Failure::Usage(format!("world config: {e}")))?;
    let out_path = match &args.common.output {
        Some(p) => p.clone(),
        None => PathBuf::from(format!("world_seed{}.json", args.seed)),
    };
    write_file(&out_path, &world.to_json())?;
    println!("wrote {} (seed {})", out_path.display(), args.seed);
    Ok(0)
}

/// Per-mission result file payload (`result/v1`).
#[derive(Debug, Serialize, Deserialize)]
struct ResultFile {
    schema: String,
    result: MissionResult<f64>,
    planner_config: PlannerConfig64,
    start: [f64; 3],
    goal: [f64; 3],
}

fn mission_outputs(
    tag: &str,
    out_dir: &Path,
    cfg: &RunConfig,
    world: &World64,
) -> Result<(bool, PathBuf, PathBuf), Failure> {
    let start = Vec3d::new(cfg.start[0], cfg.start[1], cfg.start[2]);
    let goal = Vec3d::new(cfg.goal[0], cfg.goal[1], cfg.goal[2]);
    let record = run_mission(world, start, goal, cfg.planner.clone());
    let trace_path = out_dir.join(format!("trace_{tag}.csv"));
    write_file(&trace_path, &trace_to_csv(&record.rows))?;

    let seed = world.seed;
    let result = match compute_metrics(&record, cfg.planner.h, seed) {
        Ok(r) => r,
        Err(_) => MissionResult {
            seed,
            success: false,
            flight_distance: 0.0,
            flight_time: 0.0,
            mean_velocity: 0.0,
            max_velocity: 0.0,
            jerk_cost: 0.0,
            comp_time_mean_ms: 0.0,
            comp_time_max_ms: 0.0,
            comp_time_std_ms: 0.0,
            state_collisions: record.state_collisions,
            midpoint_flags: record.midpoint_flags,
            failure_reason: record.failure_reason.clone(),
        },
    };
    let success = result.success;
    let result_file = ResultFile {
        schema: RESULT_SCHEMA.to_string(),
        result,
        planner_config: cfg.planner.clone(),
        start: cfg.start,
        goal: cfg.goal,
    };
    let result_path = out_dir.join(format!("result_{tag}.json"));
    write_file(
        &result_path,
        &serde_json::to_string_pretty(&result_file).expect("result serialization"),
    )?;

    if cfg.dump_corridors {
        let dir = out_dir.join(format!("corridors_{tag}"));
        for (i, tsc) in record.corridors.iter().enumerate() {
            write_file(&dir.join(format!("iter{i:05}.json")), &tsc.to_json())?;
        }
    }
    Ok((success, trace_path, result_path))
}

fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let cfg = resolve_config(&args.common)?;
    let (world, tag): (World64, String) = match (&args.seed, &args.world) {
        (Some(seed), None) => {
            let world = generate_world(*seed, &cfg.world)
                .map_err(|e| Failure::Usage(format!("world config: {e}")))?;
            (world, format!("seed{seed}"))
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
            let world = World::<f64>::from_json(&text)
                .map_err(|e| io_err(&format!("parsing {}", path.display()), e))?;
            let tag = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "world".to_string());
            (world, tag)
        }
        _ => {
            return Err(Failure::Usage(
                "exactly one of --seed or --world is required".into(),
            ))
        }
    };
    let out_dir = PathBuf::from(&cfg.output_dir);
    let (success, trace_path, result_path) = mission_outputs(&tag, &out_dir, &cfg, &world)?;
    println!("wrote {} and {}", trace_path.display(), result_path.display());
    println!("mission {}", if success { "succeeded" } else { "failed" });
    Ok(if success { 0 } else { 3 })
}

fn print_summary(report: &BatchReport<f64>) {
    println!(
        "{:<8}{:>9}{:>16}{:>16}{:>14}{:>16}{:>14}",
        "seed", "success", "distance_m", "velocity_mps", "time_s", "comp_ms", "jerk_cost"
    );
    for r in &report.results {
        println!(
            "{:<8}{:>9}{:>16.2}{:>16.2}{:>14.2}{:>16.2}{:>14.1}",
            r.seed,
            if r.success { "yes" } else { "no" },
            r.flight_distance,
            r.mean_velocity,
            r.flight_time,
            r.comp_time_mean_ms,
            r.jerk_cost,
        );
    }
    let a = &report.aggregate;
    println!(
        "{:<8}{:>6}/{:<3}{:>15}{:>16}{:>14}{:>16}{:>20}",
        "all",
        a.successes,
        a.total,
        fmt_agg(&a.flight_distance),
        fmt_agg(&a.flight_velocity),
        fmt_agg(&a.flight_time),
        fmt_agg(&a.computation_ms),
        fmt_agg(&a.jerk_cost),
    );
}

fn fmt_agg(m: &tscmpc::sim::MetricAggregate) -> String {
    format!("{:.1}/{:.1}/{:.1}", m.mean, m.max, m.std)
}

fn cmd_batch(args: &BatchArgs) -> Result<u8, Failure> {
    let cfg = resolve_config(&args.common)?;
    let seeds = parse_seed_list(&args.seeds)?;
    let start = Vec3d::new(cfg.start[0], cfg.start[1], cfg.start[2]);
    let goal = Vec3d::new(cfg.goal[0], cfg.goal[1], cfg.goal[2]);
    let (outcomes, report) =
        run_batch(&seeds, &cfg.world, &cfg.planner, start, goal, cfg.jobs);

    let out_dir = PathBuf::from(&cfg.output_dir);
    for (seed, (_, record)) in seeds.iter().zip(&outcomes) {
        let trace_path = out_dir.join(format!("trace_seed{seed}.csv"));
        write_file(&trace_path, &trace_to_csv(&record.rows))?;
        if cfg.dump_corridors {
            let dir = out_dir.join(format!("corridors_seed{seed}"));
            for (i, tsc) in record.corridors.iter().enumerate() {
                write_file(&dir.join(format!("iter{i:05}.json")), &tsc.to_json())?;
            }
        }
    }
    let report_path = out_dir.join("report.json");
    write_file(
        &report_path,
        &serde_json::to_string_pretty(&report).expect("report serialization"),
    )?;
    print_summary(&report);
    println!("wrote {}", report_path.display());
    Ok(if report.aggregate.successes == report.aggregate.total { 0 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::GenerateWorld(args) => cmd_generate_world(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Batch(args) => cmd_batch(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

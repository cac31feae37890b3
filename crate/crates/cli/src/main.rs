//! `covertime`: generate instances, plan, partition and benchmark from the shell.

mod bench;
mod commands;
mod input;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::input::Failure;

/// Gridworld noise temperature used by `gen grid` and the gridworld bench.
const GRID_NOISE: f64 = 0.35;

#[derive(Parser)]
#[command(name = "covertime", version, about = "Minimum expected cover time planning on finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance and write it as JSON.
    Gen(GenArgs),
    /// Plan a single-agent mission.
    Plan(PlanArgs),
    /// Split the targets among several agents.
    Partition(PartitionArgs),
    /// Regenerate the desk-scale benchmark tables as CSV.
    Bench(BenchArgs),
    /// Convert a rollout record into per-step CSV for plotting.
    PathDump(PathDumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Graph,
    Mdp,
    Grid,
    Clustered,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphShape {
    Random,
    Path,
    Cycle,
    Complete,
}

#[derive(Clone, Copy, ValueEnum)]
enum RowModeArg {
    Simplex,
    Literal,
}

#[derive(Args)]
struct GenArgs {
    kind: GenKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of states (graph, mdp) or targets per cluster (clustered).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value_t = GraphShape::Random)]
    shape: GraphShape,
    /// Edge density of random graphs, between 0 (tree) and 1 (complete).
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, default_value_t = 4)]
    actions: usize,
    #[arg(long, value_enum, default_value_t = RowModeArg::Simplex)]
    mode: RowModeArg,
    #[arg(long, default_value_t = 6)]
    w: usize,
    #[arg(long, default_value_t = 6)]
    h: usize,
    /// Gridworld noise temperature; 0 gives deterministic moves.
    #[arg(long, default_value_t = GRID_NOISE)]
    noise: f64,
    /// Number of clusters.
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Largest hitting time allowed inside a cluster.
    #[arg(long, default_value_t = 1.0)]
    wc: f64,
    /// Smallest hitting time required between clusters.
    #[arg(long, default_value_t = 26.0)]
    wl: f64,
    #[arg(long)]
    require_optimal: bool,
    #[arg(long)]
    require_recoverable: bool,
    /// Also draw this many random targets (graph, mdp, grid) and report them.
    #[arg(long)]
    targets: Option<usize>,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated target state indices.
    #[arg(
        long,
        required_unless_present_any = ["targets_xy", "targets_file"],
        conflicts_with_all = ["targets_xy", "targets_file"]
    )]
    targets: Option<String>,
    /// Gridworld targets as `x,y` pairs separated by `;`.
    #[arg(long, conflicts_with = "targets_file")]
    targets_xy: Option<String>,
    /// File holding a JSON array of indices, a JSON object with a `targets`
    /// field (and optionally `start`), or indices separated by commas/whitespace.
    #[arg(long)]
    targets_file: Option<PathBuf>,
    #[arg(long, conflicts_with = "start_xy")]
    start: Option<usize>,
    /// Gridworld start as `x,y`.
    #[arg(long)]
    start_xy: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanAlgo {
    Optimal,
    Heur,
    Nn,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Random,
    Lowest,
}

#[derive(Args)]
struct PlanArgs {
    algo: PlanAlgo,
    #[command(flatten)]
    instance: InstanceArgs,
    /// Discount factor; defaults to 0.4 on gridworlds and 0.01 otherwise.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = covertime::heuristic::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = TieBreakArg::Random)]
    tie_break: TieBreakArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run a batch of this many rollouts (seeds `seed + i`) and print a CSV row.
    #[arg(long)]
    runs: Option<usize>,
    /// Write the single rollout as JSON lines.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Policy/value JSON (optimal) or batch CSV (heur, nn).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionAlgo {
    Heur,
    Brute,
}

#[derive(Args)]
struct PartitionArgs {
    algo: PartitionAlgo,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    agents: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchTable {
    /// Random connected graphs: optimum, heuristic, nearest neighbor.
    #[value(name = "tableI")]
    TableI,
    /// Random MDPs: optimum and heuristic.
    #[value(name = "tableIII")]
    TableIii,
    /// Random MDPs with several agents: exhaustive vs heuristic partitions.
    #[value(name = "tableIV")]
    TableIv,
    /// Stochastic gridworld; `--width 20 --height 20 --targets 10` is the long run.
    Gridworld,
}

#[derive(Args)]
struct BenchArgs {
    table: BenchTable,
    /// Instance seeds: `a-b` (inclusive) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Actions per state of the random MDPs.
    #[arg(long, default_value_t = 4)]
    actions: usize,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long, default_value_t = 6)]
    width: usize,
    #[arg(long, default_value_t = 6)]
    height: usize,
    #[arg(long, default_value_t = 5)]
    targets: usize,
}

#[derive(Args)]
struct PathDumpArgs {
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gridworld instance, to add `x,y` columns.
    #[arg(long)]
    instance: Option<PathBuf>,
}

/// Everything a command produces, flushed once at the end.
#[derive(Default)]
struct Output {
    stdout: String,
    files: Vec<(PathBuf, String)>,
}

impl Output {
    fn emit(self) -> Result<(), Failure> {
        for (path, body) in &self.files {
            std::fs::write(path, body).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        }
        let mut out = std::io::stdout().lock();
        out.write_all(self.stdout.as_bytes())
            .and_then(|()| out.flush())
            .map_err(|e| Failure::io(e.to_string()))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("COVERTIME_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("COVERTIME_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let output = match cli.command {
        Command::Gen(a) => commands::gen(&a)?,
        Command::Plan(a) => commands::plan(&a)?,
        Command::Partition(a) => commands::partition(&a)?,
        Command::Bench(a) => bench::bench(&a)?,
        Command::PathDump(a) => commands::path_dump(&a)?,
    };
    output.emit()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let failure = Failure::usage(e.render().to_string().trim().to_string());
            eprintln!("{}", failure.to_json());
            return ExitCode::from(failure.code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.code)
        }
    }
}

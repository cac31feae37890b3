//! Desk-scale regenerations of the benchmark tables.

use std::time::Instant;

use covertime::baselines::brute_force_cover_time_graph;
use covertime::environments::{
    ocean_gridworld, random_connected_graph, random_mdp, random_targets, GridConfig, RowMode,
};
use covertime::heuristic::{HeuristicConfig, GRAPH_GAMMA, GRID_GAMMA, MULTI_AGENT_GRID_GAMMA};
use covertime::model_graph::build_model_graph_for;
use covertime::partition::{
    brute_force_optimal_partition, greedy_m_center_init, partition_transfers_swaps, Partition,
    BRUTE_FORCE_TARGET_CAP,
};
use covertime::product::ProductSolver;
use covertime::sim::{run_batch, run_multi_agent_batch, BatchStats, Planner, CSV_HEADER};
use covertime::{Mdp, TargetSet};

use crate::input::{parse_seeds, Failure};
use crate::{BenchArgs, BenchTable, Output, GRID_NOISE};

const TABLE_I_DENSITY: f64 = 0.1;
const TARGET_SALT: u64 = 0xabc;

struct Rows {
    lines: Vec<String>,
    runs: usize,
}

impl Rows {
    fn push(&mut self, stats: &BatchStats, id: &str, algorithm: &str, mdp: &Mdp, k: usize, m: usize) {
        self.lines.push(stats.csv_row(id, algorithm, mdp.n_states(), k, m));
    }
}

/// A single exactly computed value in the batch-statistics layout.
fn exact(value: f64, clock: Instant) -> BatchStats {
    BatchStats {
        runs: 1,
        mean_cover: value,
        var_cover: 0.0,
        mean_runtime_sec: clock.elapsed().as_secs_f64(),
        records: None,
    }
}

/// Draws `k` targets and a distinct start.
fn mission(n: usize, k: usize, seed: u64) -> Result<(TargetSet, usize), Failure> {
    let picks = random_targets(n, k + 1, &[], seed ^ TARGET_SALT);
    Ok((TargetSet::new(picks[..k].to_vec(), n)?, picks[k]))
}

fn table_i(seed: u64, rows: &mut Rows) -> Result<(), Failure> {
    let n = if seed % 2 == 0 { 50 } else { 100 };
    let k = if seed / 2 % 2 == 0 { 8 } else { 10 };
    let mdp = random_connected_graph(n, TABLE_I_DENSITY, seed);
    let (targets, start) = mission(n, k, seed)?;
    let id = format!("graph-{seed}");
    let clock = Instant::now();
    let (_, length) = brute_force_cover_time_graph(&mdp, &targets, start)?;
    rows.push(&exact(length as f64, clock), &id, "optimal", &mdp, k, 1);
    for planner in [Planner::Heuristic(HeuristicConfig::new(GRAPH_GAMMA)), Planner::NearestNeighbor] {
        let stats = run_batch(&planner, &mdp, &targets, start, rows.runs, seed, false)?;
        rows.push(&stats, &id, planner.name(), &mdp, k, 1);
    }
    Ok(())
}

fn table_iii(seed: u64, actions: usize, rows: &mut Rows) -> Result<(), Failure> {
    let n = 30 + 10 * (seed % 8) as usize;
    let k = 5 + (seed % 4) as usize;
    let mdp = random_mdp(n, actions, seed, RowMode::Simplex);
    let (targets, start) = mission(n, k, seed)?;
    let id = format!("mdp-{seed}");
    let clock = Instant::now();
    let optimum = ProductSolver::default().solve(&mdp, &targets, start)?.expected_cover_time(&targets);
    rows.push(&exact(optimum, clock), &id, "optimal", &mdp, k, 1);
    let planner = Planner::Heuristic(HeuristicConfig::new(GRAPH_GAMMA));
    let stats = run_batch(&planner, &mdp, &targets, start, rows.runs, seed, false)?;
    rows.push(&stats, &id, planner.name(), &mdp, k, 1);
    Ok(())
}

/// Largest optimal expected cover time among the parts.
fn team_optimum(mdp: &Mdp, partition: &Partition, start: usize) -> Result<f64, Failure> {
    let mut worst = 0.0f64;
    for part in partition.parts.iter().filter(|p| !p.is_empty()) {
        let targets = TargetSet::new(part.clone(), mdp.n_states())?;
        worst = worst.max(ProductSolver::default().solve(mdp, &targets, start)?.expected_cover_time(&targets));
    }
    Ok(worst)
}

/// Exhaustive and heuristic partitions, each scored exactly and by heuristic rollouts.
#[allow(clippy::too_many_arguments)]
fn compare_partitions(
    id: &str,
    mdp: &Mdp,
    targets: &TargetSet,
    start: usize,
    m: usize,
    planner: &Planner,
    seed: u64,
    rows: &mut Rows,
) -> Result<(), Failure> {
    let k = targets.len();
    let clock = Instant::now();
    let graph = build_model_graph_for(mdp, start, targets.members())?;
    let init = greedy_m_center_init(&graph, targets.members(), m, start)?;
    let (heuristic, _) = partition_transfers_swaps(&graph, targets.members(), start, &init)?;
    let heuristic_time = clock.elapsed().as_secs_f64();
    let mut value = exact(team_optimum(mdp, &heuristic, start)?, clock);
    value.mean_runtime_sec = heuristic_time;
    rows.push(&value, id, "heuristic_partition_optimal", mdp, k, m);
    let stats = run_multi_agent_batch(&heuristic, planner, mdp, start, rows.runs, seed)?;
    rows.push(&stats, id, "heuristic_partition_heuristic", mdp, k, m);
    if k <= BRUTE_FORCE_TARGET_CAP {
        let clock = Instant::now();
        let (best, cover) = brute_force_optimal_partition(mdp, targets, m, start)?;
        rows.push(&exact(cover, clock), id, "exhaustive_partition_optimal", mdp, k, m);
        let stats = run_multi_agent_batch(&best, planner, mdp, start, rows.runs, seed)?;
        rows.push(&stats, id, "exhaustive_partition_heuristic", mdp, k, m);
    }
    Ok(())
}

fn table_iv(seed: u64, actions: usize, m: usize, rows: &mut Rows) -> Result<(), Failure> {
    let n = 20 + 5 * (seed % 3) as usize;
    let k = 6 + (seed % 3) as usize;
    let mdp = random_mdp(n, actions, seed, RowMode::Simplex);
    let (targets, start) = mission(n, k, seed)?;
    let planner = Planner::Heuristic(HeuristicConfig::new(GRAPH_GAMMA));
    compare_partitions(&format!("mdp-{seed}"), &mdp, &targets, start, m, &planner, seed, rows)
}

fn gridworld(seed: u64, a: &BenchArgs, rows: &mut Rows) -> Result<(), Failure> {
    let mdp = ocean_gridworld(&GridConfig::new(a.width, a.height, seed, GRID_NOISE))?;
    let n = mdp.n_states();
    if a.targets == 0 || a.targets >= n {
        return Err(Failure::usage(format!("--targets must lie in 1..{n}")));
    }
    let start = 0;
    let targets = TargetSet::new(random_targets(n, a.targets, &[start], seed), n)?;
    let id = format!("grid{}x{}-{seed}", a.width, a.height);
    let m = a.agents.unwrap_or(1);
    if m > 1 {
        let planner = Planner::Heuristic(HeuristicConfig::new(MULTI_AGENT_GRID_GAMMA));
        return compare_partitions(&id, &mdp, &targets, start, m, &planner, seed, rows);
    }
    let clock = Instant::now();
    let optimum = ProductSolver::default().solve(&mdp, &targets, start)?.expected_cover_time(&targets);
    rows.push(&exact(optimum, clock), &id, "optimal", &mdp, a.targets, 1);
    let planner = Planner::Heuristic(HeuristicConfig::new(GRID_GAMMA));
    let stats = run_batch(&planner, &mdp, &targets, start, rows.runs, seed, false)?;
    rows.push(&stats, &id, planner.name(), &mdp, a.targets, 1);
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Result<Output, Failure> {
    if a.runs == 0 {
        return Err(Failure::usage("--runs must be positive"));
    }
    if a.actions == 0 {
        return Err(Failure::usage("--actions must be positive"));
    }
    let default_seeds = match a.table {
        BenchTable::TableI => "1-20",
        BenchTable::TableIii => "1-10",
        BenchTable::TableIv => "1-5",
        BenchTable::Gridworld => "7",
    };
    let seeds = parse_seeds(a.seeds.as_deref().unwrap_or(default_seeds))?;
    let mut rows = Rows {
        lines: vec![CSV_HEADER.to_string()],
        runs: a.runs,
    };
    for seed in seeds {
        match a.table {
            BenchTable::TableI => table_i(seed, &mut rows)?,
            BenchTable::TableIii => table_iii(seed, a.actions, &mut rows)?,
            BenchTable::TableIv => table_iv(seed, a.actions, a.agents.unwrap_or(3), &mut rows)?,
            BenchTable::Gridworld => gridworld(seed, a, &mut rows)?,
        }
    }
    let csv = rows.lines.join("\n") + "\n";
    let mut out = Output::default();
    match &a.out {
        Some(path) => out.files.push((path.clone(), csv)),
        None => out.stdout = csv,
    }
    Ok(out)
}

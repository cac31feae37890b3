//! `gen`, `plan`, `partition` and `path-dump`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;

use covertime::environments::{
    clustered_instance, complete_graph, cycle_graph, ocean_gridworld, path_graph, random_connected_graph, random_mdp,
    random_targets, ClusterConfig, ClusterRequirements, GridConfig, RowMode,
};
use covertime::heuristic::{HeuristicConfig, TieBreak, GRAPH_GAMMA, GRID_GAMMA};
use covertime::model_graph::build_model_graph_for;
use covertime::partition::{
    avg_hamiltonian_length, brute_force_optimal_partition, greedy_m_center_init, partition_transfers_swaps,
};
use covertime::product::ProductSolver;
use covertime::sim::{run_batch, Planner, RolloutRecord, CSV_HEADER};
use serde_json::{json, Value};

use crate::input::{load_mission, read_instance, Failure, Mission};
use crate::{GenArgs, GenKind, GraphShape, Output, PartitionAlgo, PartitionArgs, PathDumpArgs, PlanAlgo, PlanArgs,
    RowModeArg, TieBreakArg};

const TARGET_SALT: u64 = 0x7a72;

pub fn gen(a: &GenArgs) -> Result<Output, Failure> {
    let mut summary = json!({ "schema": 1, "kind": kind_name(a.kind), "seed": a.seed });
    let mdp = match a.kind {
        GenKind::Graph => {
            let n = a.n.unwrap_or(20);
            let min = if matches!(a.shape, GraphShape::Cycle) { 3 } else { 1 };
            if n < min {
                return Err(Failure::usage(format!("--n must be at least {min}")));
            }
            match a.shape {
                GraphShape::Random => {
                    if !(0.0..=1.0).contains(&a.density) {
                        return Err(Failure::usage("--density must lie in [0, 1]"));
                    }
                    random_connected_graph(n, a.density, a.seed)
                }
                GraphShape::Path => path_graph(n),
                GraphShape::Cycle => cycle_graph(n),
                GraphShape::Complete => complete_graph(n),
            }
        }
        GenKind::Mdp => {
            let n = a.n.unwrap_or(20);
            if n == 0 || a.actions == 0 {
                return Err(Failure::usage("--n and --actions must be positive"));
            }
            let mode = match a.mode {
                RowModeArg::Simplex => RowMode::Simplex,
                RowModeArg::Literal => RowMode::Literal,
            };
            random_mdp(n, a.actions, a.seed, mode)
        }
        GenKind::Grid => {
            if !(a.noise >= 0.0) {
                return Err(Failure::usage("--noise must be nonnegative"));
            }
            ocean_gridworld(&GridConfig::new(a.w, a.h, a.seed, a.noise))?
        }
        GenKind::Clustered => {
            let mut cfg = ClusterConfig::new(a.m, a.n.unwrap_or(3), a.wc, a.wl, a.seed);
            cfg.require = ClusterRequirements {
                optimal: a.require_optimal,
                recoverable: a.require_recoverable,
            };
            let inst = clustered_instance(&cfg)?;
            summary["start"] = json!(inst.start);
            summary["targets"] = json!(inst.targets.members());
            summary["clusters"] = json!(inst.clusters);
            summary["bands"] = serde_json::to_value(inst.spec).expect("bands serialize");
            inst.mdp
        }
    };
    if let Some(k) = a.targets {
        if matches!(a.kind, GenKind::Clustered) {
            return Err(Failure::usage("clustered instances choose their own targets"));
        }
        if k >= mdp.n_states() {
            return Err(Failure::usage(format!(
                "--targets {k} needs more than {k} states besides the start"
            )));
        }
        summary["start"] = json!(0);
        summary["targets"] = json!(random_targets(mdp.n_states(), k, &[0], a.seed ^ TARGET_SALT));
    }
    summary["n_states"] = json!(mdp.n_states());
    summary["n_actions"] = json!(mdp.n_actions());
    Ok(Output {
        stdout: format!("{summary}\n"),
        files: vec![(a.out.clone(), mdp.to_json() + "\n")],
    })
}

fn kind_name(kind: GenKind) -> &'static str {
    match kind {
        GenKind::Graph => "graph",
        GenKind::Mdp => "mdp",
        GenKind::Grid => "grid",
        GenKind::Clustered => "clustered",
    }
}

pub fn plan(a: &PlanArgs) -> Result<Output, Failure> {
    let Mission {
        mdp,
        targets,
        start,
        instance_id,
    } = load_mission(&a.instance)?;
    let mut out = Output::default();
    let planner = match a.algo {
        PlanAlgo::Optimal => {
            let solution = ProductSolver::default().solve(&mdp, &targets, start)?;
            let value = solution.expected_cover_time(&targets);
            out.stdout = format!("{value}\n");
            if let Some(path) = &a.out {
                let policy: Value = serde_json::from_str(&solution.policy.to_json(&targets)).expect("valid JSON");
                let values: Value = serde_json::from_str(&solution.table.to_json(&targets)).expect("valid JSON");
                let doc = json!({
                    "schema": 1,
                    "start": start,
                    "targets": targets.members(),
                    "expected_cover_time": value,
                    "iterations": solution.iterations,
                    "policy": policy["policy"],
                    "values": values["values"],
                });
                out.files.push((path.clone(), format!("{doc}\n")));
            }
            return Ok(out);
        }
        PlanAlgo::Heur => {
            let gamma = a
                .gamma
                .unwrap_or(if mdp.grid().is_some() { GRID_GAMMA } else { GRAPH_GAMMA });
            let tie_break = match a.tie_break {
                TieBreakArg::Random => TieBreak::Random,
                TieBreakArg::Lowest => TieBreak::LowestIndex,
            };
            Planner::Heuristic(HeuristicConfig::new(gamma).with_epsilon(a.epsilon).with_tie_break(tie_break))
        }
        PlanAlgo::Nn => Planner::NearestNeighbor,
    };
    match a.runs {
        Some(0) => return Err(Failure::usage("--runs must be positive")),
        Some(_) if a.record.is_some() => return Err(Failure::usage("--record applies to a single rollout")),
        Some(runs) => {
            let stats = run_batch(&planner, &mdp, &targets, start, runs, a.seed, false)?;
            let row = stats.csv_row(&instance_id, planner.name(), mdp.n_states(), targets.len(), 1);
            let csv = format!("{CSV_HEADER}\n{row}\n");
            match &a.out {
                Some(path) => out.files.push((path.clone(), csv)),
                None => out.stdout = csv,
            }
        }
        None => {
            let record = planner.rollout(&mdp, &targets, start, a.seed)?;
            out.stdout = format!("{}\n", record.cover_time);
            if let Some(path) = &a.record {
                let mut buf = Vec::new();
                record.write_jsonl(&mut buf)?;
                out.files.push((path.clone(), String::from_utf8(buf).expect("JSON is UTF-8")));
            }
        }
    }
    Ok(out)
}

pub fn partition(a: &PartitionArgs) -> Result<Output, Failure> {
    let Mission {
        mdp, targets, start, ..
    } = load_mission(&a.instance)?;
    let doc = match a.algo {
        PartitionAlgo::Heur => {
            let graph = build_model_graph_for(&mdp, start, targets.members())?;
            let init = greedy_m_center_init(&graph, targets.members(), a.agents, start)?;
            let (found, report) = partition_transfers_swaps(&graph, targets.members(), start, &init)?;
            found.to_json(report.m_a(), report.passes)
        }
        PartitionAlgo::Brute => {
            let (best, cover) = brute_force_optimal_partition(&mdp, &targets, a.agents, start)?;
            let graph = build_model_graph_for(&mdp, start, targets.members())?;
            let mut m_a = 0.0f64;
            for part in best.parts.iter().filter(|p| !p.is_empty()) {
                m_a = m_a.max(avg_hamiltonian_length(&graph, part, start)?);
            }
            let mut doc: Value = serde_json::from_str(&best.to_json(m_a, 0)).expect("valid JSON");
            doc["expected_cover_time"] = json!(cover);
            doc.to_string()
        }
    };
    let mut out = Output::default();
    match &a.out {
        Some(path) => out.files.push((path.clone(), doc + "\n")),
        None => out.stdout = doc + "\n",
    }
    Ok(out)
}

pub fn path_dump(a: &PathDumpArgs) -> Result<Output, Failure> {
    let file = File::open(&a.record).map_err(|e| Failure::io(format!("{}: {e}", a.record.display())))?;
    let record = RolloutRecord::read_jsonl(BufReader::new(file))?;
    let grid = match &a.instance {
        Some(path) => Some(
            read_instance(path)?
                .grid()
                .ok_or_else(|| Failure::usage("--instance is not a gridworld"))?,
        ),
        None => None,
    };
    let mut csv = String::from(if grid.is_some() { "t,state,x,y\n" } else { "t,state\n" });
    for step in &record.trajectory {
        match grid {
            Some(g) => {
                let (x, y) = g.coords(step.state);
                writeln!(csv, "{},{},{x},{y}", step.t, step.state)
            }
            None => writeln!(csv, "{},{}", step.t, step.state),
        }
        .expect("writing to a String");
    }
    let mut out = Output::default();
    match &a.out {
        Some(path) => out.files.push((path.clone(), csv)),
        None => out.stdout = csv,
    }
    Ok(out)
}

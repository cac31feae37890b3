//! WebAssembly bindings for the browser demo.
//!
//! Each operation takes a gridworld description plus a mission and returns a
//! JSON document for the page to draw. The plain functions are usable (and
//! tested) natively; the `#[wasm_bindgen]` wrappers only convert errors.

use covertime::environments::{ocean_gridworld, GridConfig};
use covertime::heuristic::{greedy_action_lowest, phase_value_iteration, HeuristicConfig, DEFAULT_EPSILON};
use covertime::model_graph::build_model_graph;
use covertime::partition::{greedy_m_center_init, partition_transfers_swaps};
use covertime::product::ProductSolver;
use covertime::sim::{Planner, RolloutRecord};
use covertime::{GridShape, Mdp, TargetSet};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest product space (states times target subsets) solved exactly in the page.
pub const EXACT_PRODUCT_LIMIT: usize = 1 << 17;
pub const MAX_SIDE: usize = 24;

/// Gridworld and mission shared by every operation.
#[derive(Debug, Clone)]
pub struct Scene {
    mdp: Mdp,
    grid: GridShape,
    targets: TargetSet,
    start: usize,
}

/// Builds the scene; `targets` is `x,y` pairs separated by `;` and `start` one `x,y` pair.
pub fn scene(width: usize, height: usize, seed: u64, noise: f64, targets: &str, start: &str) -> Result<Scene, String> {
    if !(2..=MAX_SIDE).contains(&width) || !(2..=MAX_SIDE).contains(&height) {
        return Err(format!("grid sides must lie in 2..={MAX_SIDE}"));
    }
    if !(noise >= 0.0) {
        return Err("noise must be nonnegative".into());
    }
    let mdp = ocean_gridworld(&GridConfig::new(width, height, seed, noise)).map_err(|e| e.to_string())?;
    let grid = GridShape { width, height };
    let cell = |token: &str| -> Result<usize, String> {
        let (x, y) = token
            .trim()
            .split_once(',')
            .ok_or_else(|| format!("expected x,y but got {token:?}"))?;
        let x: usize = x.trim().parse().map_err(|_| format!("bad x in {token:?}"))?;
        let y: usize = y.trim().parse().map_err(|_| format!("bad y in {token:?}"))?;
        if x >= width || y >= height {
            return Err(format!("cell ({x},{y}) is off the grid"));
        }
        Ok(grid.state(x, y))
    };
    let members = targets
        .split(';')
        .filter(|t| !t.trim().is_empty())
        .map(cell)
        .collect::<Result<Vec<_>, _>>()?;
    if members.is_empty() {
        return Err("pick at least one target".into());
    }
    let targets = TargetSet::new(members, mdp.n_states()).map_err(|e| e.to_string())?;
    Ok(Scene {
        start: cell(start)?,
        mdp,
        grid,
        targets,
    })
}

impl Scene {
    fn xy(&self, state: usize) -> Value {
        let (x, y) = self.grid.coords(state);
        json!([x, y])
    }
}

/// One heuristic rollout, plus the exact optimum when the product space is small.
pub fn rollout(scene: &Scene, gamma: f64, seed: u64) -> Result<Value, String> {
    let planner = Planner::Heuristic(HeuristicConfig::new(gamma));
    let record: RolloutRecord = planner
        .rollout(&scene.mdp, &scene.targets, scene.start, seed)
        .map_err(|e| e.to_string())?;
    let product_size = scene.mdp.n_states() << scene.targets.len();
    let optimum = if product_size <= EXACT_PRODUCT_LIMIT {
        let solution = ProductSolver::default()
            .solve(&scene.mdp, &scene.targets, scene.start)
            .map_err(|e| e.to_string())?;
        Some(solution.expected_cover_time(&scene.targets))
    } else {
        None
    };
    let hits: Vec<Value> = record
        .hit_times
        .iter()
        .map(|(&s, &t)| json!({ "cell": scene.xy(s), "t": t }))
        .collect();
    Ok(json!({
        "schema": 1,
        "cover_time": record.cover_time,
        "phases": record.phases,
        "path": record.states().map(|s| scene.xy(s)).collect::<Vec<_>>(),
        "hits": hits,
        "optimal_expected": optimum,
    }))
}

/// Value function of the first planning phase and the greedy move in every cell.
pub fn phase_values(scene: &Scene, gamma: f64) -> Result<Value, String> {
    let remaining: Vec<usize> = scene
        .targets
        .members()
        .iter()
        .copied()
        .filter(|&t| t != scene.start)
        .collect();
    if remaining.is_empty() {
        return Err("the start already covers every target".into());
    }
    let phase = phase_value_iteration(&scene.mdp, &remaining, gamma, DEFAULT_EPSILON).map_err(|e| e.to_string())?;
    let moves: Vec<usize> = (0..scene.mdp.n_states())
        .map(|s| greedy_action_lowest(&scene.mdp, &phase, s))
        .collect();
    let lo = phase.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phase.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(json!({
        "schema": 1,
        "values": phase.values,
        "moves": moves,
        "min": lo,
        "max": hi,
        "sweeps": phase.sweeps,
    }))
}

/// Splits the targets among `agents` by m-center seeding and transfer/swap search.
pub fn partition(scene: &Scene, agents: usize) -> Result<Value, String> {
    let graph = build_model_graph(&scene.mdp).map_err(|e| e.to_string())?;
    let members = scene.targets.members();
    let init = greedy_m_center_init(&graph, members, agents, scene.start).map_err(|e| e.to_string())?;
    let (found, report) =
        partition_transfers_swaps(&graph, members, scene.start, &init).map_err(|e| e.to_string())?;
    let parts: Vec<Vec<Value>> = found
        .parts
        .iter()
        .map(|p| p.iter().map(|&s| scene.xy(s)).collect())
        .collect();
    Ok(json!({
        "schema": 1,
        "parts": parts,
        "M_a": report.m_a(),
        "passes": report.passes,
    }))
}

fn to_js(result: Result<Value, String>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = runRollout)]
pub fn run_rollout(
    width: usize,
    height: usize,
    field_seed: u64,
    noise: f64,
    targets: &str,
    start: &str,
    gamma: f64,
    seed: u64,
) -> Result<String, JsError> {
    to_js(scene(width, height, field_seed, noise, targets, start).and_then(|s| rollout(&s, gamma, seed)))
}

#[wasm_bindgen(js_name = phaseValues)]
pub fn phase_values_js(
    width: usize,
    height: usize,
    field_seed: u64,
    noise: f64,
    targets: &str,
    start: &str,
    gamma: f64,
) -> Result<String, JsError> {
    to_js(scene(width, height, field_seed, noise, targets, start).and_then(|s| phase_values(&s, gamma)))
}

#[wasm_bindgen(js_name = partitionTargets)]
pub fn partition_targets(
    width: usize,
    height: usize,
    field_seed: u64,
    noise: f64,
    targets: &str,
    start: &str,
    agents: usize,
) -> Result<String, JsError> {
    to_js(scene(width, height, field_seed, noise, targets, start).and_then(|s| partition(&s, agents)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_scene() -> Scene {
        scene(6, 6, 7, 0.35, "5,0; 0,5; 5,5; 3,2", "0,0").unwrap()
    }

    #[test]
    fn scene_parsing() {
        let s = demo_scene();
        assert_eq!(s.targets.members().len(), 4);
        assert_eq!(s.start, 0);
        assert!(scene(6, 6, 7, 0.35, "6,0", "0,0").is_err());
        assert!(scene(6, 6, 7, 0.35, "", "0,0").is_err());
        assert!(scene(1, 6, 7, 0.35, "0,0", "0,0").is_err());
        assert!(scene(6, 6, 7, 0.35, "1;2", "0,0").is_err());
    }

    #[test]
    fn rollout_reaches_every_target() {
        let s = demo_scene();
        let doc = rollout(&s, 0.4, 3).unwrap();
        let cover = doc["cover_time"].as_u64().unwrap();
        let path = doc["path"].as_array().unwrap();
        assert_eq!(path.len() as u64, cover + 1);
        assert_eq!(path[0], json!([0, 0]));
        assert_eq!(doc["hits"].as_array().unwrap().len(), 4);
        let optimum = doc["optimal_expected"].as_f64().unwrap();
        assert!(optimum > 0.0 && optimum.is_finite());
        assert_eq!(rollout(&s, 0.4, 3).unwrap(), doc);
    }

    #[test]
    fn values_within_reward_bounds() {
        let s = demo_scene();
        let doc = phase_values(&s, 0.4).unwrap();
        let values: Vec<f64> = serde_json::from_value(doc["values"].clone()).unwrap();
        assert_eq!(values.len(), 36);
        let k = 4.0;
        for v in values {
            assert!(v >= -k / 0.6 - 1e-9 && v <= (1.0 - k) / 0.6 + 1e-9, "{v}");
        }
        assert!(doc["min"].as_f64() < doc["max"].as_f64());
        assert_eq!(doc["moves"].as_array().unwrap().len(), 36);
    }

    #[test]
    fn partition_covers_targets_once() {
        let s = demo_scene();
        let doc = partition(&s, 2).unwrap();
        let parts = doc["parts"].as_array().unwrap();
        assert_eq!(parts.len(), 2);
        let total: usize = parts.iter().map(|p| p.as_array().unwrap().len()).sum();
        assert_eq!(total, 4);
        assert!(partition(&s, 5).is_err());
    }
}

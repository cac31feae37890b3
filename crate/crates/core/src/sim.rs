//! Seeded rollouts and Monte-Carlo batches.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::nearest_neighbor_rollout;
use crate::environments::rng_from;
use crate::error::{Error, Result};
use crate::heuristic::{plan_and_execute, HeuristicConfig};
use crate::mdp::{Mdp, Row, TargetSet};
use crate::partition::Partition;
use crate::product::{ProductPolicy, ProductState};

pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

/// One executed step; `action` is `None` on the final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub t: u64,
    pub state: usize,
    pub action: Option<usize>,
    /// Targets still unvisited after arriving at `state`.
    pub remaining_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub seed: u64,
    pub trajectory: Vec<Step>,
    /// First-visit time of every target.
    pub hit_times: BTreeMap<usize, u64>,
    pub cover_time: u64,
    /// Number of times a plan was (re)computed.
    pub phases: usize,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    schema: u32,
    seed: u64,
    cover_time: u64,
    phases: usize,
    hit_times: BTreeMap<usize, u64>,
}

impl RolloutRecord {
    /// One JSON object per step, then a summary line.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e: std::io::Error| Error::Json(e.to_string());
        for step in &self.trajectory {
            serde_json::to_writer(&mut *out, step)?;
            out.write_all(b"\n").map_err(io)?;
        }
        let summary = Summary {
            schema: 1,
            seed: self.seed,
            cover_time: self.cover_time,
            phases: self.phases,
            hit_times: self.hit_times.clone(),
        };
        serde_json::to_writer(&mut *out, &summary)?;
        out.write_all(b"\n").map_err(io)?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut trajectory = Vec::new();
        let mut summary: Option<Summary> = None;
        for line in input.lines() {
            let line = line.map_err(|e| Error::Json(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(Error::Json("lines after the summary record".into()));
            }
            let value: serde_json::Value = serde_json::from_str(&line)?;
            if value.get("cover_time").is_some() {
                summary = Some(serde_json::from_value(value)?);
            } else {
                trajectory.push(serde_json::from_value(value)?);
            }
        }
        let s = summary.ok_or_else(|| Error::Json("missing summary record".into()))?;
        Ok(RolloutRecord {
            seed: s.seed,
            trajectory,
            hit_times: s.hit_times,
            cover_time: s.cover_time,
            phases: s.phases,
        })
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.trajectory.iter().map(|s| s.state)
    }
}

/// Bookkeeping shared by every rollout driver.
pub(crate) struct Recorder {
    seed: u64,
    targets: Vec<usize>,
    remaining: Vec<bool>,
    remaining_count: usize,
    t: u64,
    step_cap: u64,
    state: usize,
    trajectory: Vec<Step>,
    hit_times: BTreeMap<usize, u64>,
    pub(crate) phases: usize,
}

impl Recorder {
    pub(crate) fn new(targets: &TargetSet, start: usize, seed: u64, step_cap: u64) -> Self {
        let mut remaining = vec![false; targets.n_states()];
        for &t in targets.members() {
            remaining[t] = true;
        }
        let mut rec = Recorder {
            seed,
            targets: targets.members().to_vec(),
            remaining,
            remaining_count: targets.len(),
            t: 0,
            step_cap,
            state: start,
            trajectory: Vec::new(),
            hit_times: BTreeMap::new(),
            phases: 0,
        };
        rec.arrive(start);
        rec
    }

    fn arrive(&mut self, state: usize) -> bool {
        self.state = state;
        let hit = self.remaining[state];
        if hit {
            self.remaining[state] = false;
            self.remaining_count -= 1;
            self.hit_times.insert(state, self.t);
        }
        self.trajectory.push(Step {
            t: self.t,
            state,
            action: None,
            remaining_count: self.remaining_count,
        });
        hit
    }

    pub(crate) fn state(&self) -> usize {
        self.state
    }

    pub(crate) fn done(&self) -> bool {
        self.remaining_count == 0
    }

    pub(crate) fn is_remaining(&self, s: usize) -> bool {
        self.remaining[s]
    }

    pub(crate) fn remaining_states(&self) -> Vec<usize> {
        self.targets.iter().copied().filter(|&t| self.remaining[t]).collect()
    }

    /// Records `action`, samples the successor and reports whether a new
    /// target was reached.
    pub(crate) fn step<R: Rng>(&mut self, mdp: &Mdp, action: usize, rng: &mut R) -> Result<bool> {
        if self.t >= self.step_cap {
            return Err(Error::StepCapExceeded { steps: self.t });
        }
        let next = sample(mdp.row(self.state, action), rng);
        self.trajectory.last_mut().expect("start recorded").action = Some(action);
        self.t += 1;
        Ok(self.arrive(next))
    }

    pub(crate) fn finish(self) -> RolloutRecord {
        let cover_time = self.hit_times.values().copied().max().unwrap_or(0);
        debug_assert_eq!(cover_time, self.t);
        RolloutRecord {
            seed: self.seed,
            trajectory: self.trajectory,
            hit_times: self.hit_times,
            cover_time,
            phases: self.phases,
        }
    }
}

pub(crate) fn sample<R: Rng>(row: &Row, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(to, p) in row {
        acc += p;
        if u < acc {
            return to;
        }
    }
    row.last().expect("rows are nonempty").0
}

/// Executes a fixed product policy until every target is visited.
pub fn policy_rollout(
    mdp: &Mdp,
    targets: &TargetSet,
    policy: &ProductPolicy,
    start: usize,
    seed: u64,
    step_cap: u64,
) -> Result<RolloutRecord> {
    let mut rng = rng_from(seed);
    let mut rec = Recorder::new(targets, start, seed, step_cap);
    rec.phases = 1;
    while !rec.done() {
        let remaining = targets.mask_of(&rec.remaining_states())?;
        let a = policy.action(targets, ProductState::new(rec.state(), remaining));
        rec.step(mdp, a, &mut rng)?;
    }
    Ok(rec.finish())
}

#[derive(Debug, Clone)]
pub enum Planner {
    Heuristic(HeuristicConfig),
    NearestNeighbor,
    /// A solved product policy for the instance's full target set.
    Policy(ProductPolicy),
}

impl Planner {
    pub fn name(&self) -> &'static str {
        match self {
            Planner::Heuristic(_) => "heuristic",
            Planner::NearestNeighbor => "nearest_neighbor",
            Planner::Policy(_) => "optimal_policy",
        }
    }

    pub fn rollout(&self, mdp: &Mdp, targets: &TargetSet, start: usize, seed: u64) -> Result<RolloutRecord> {
        match self {
            Planner::Heuristic(cfg) => plan_and_execute(mdp, targets, start, cfg, seed),
            Planner::NearestNeighbor => nearest_neighbor_rollout(mdp, targets, start, seed),
            Planner::Policy(p) => policy_rollout(mdp, targets, p, start, seed, DEFAULT_STEP_CAP),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchStats {
    pub runs: usize,
    pub mean_cover: f64,
    /// Unbiased sample variance; zero for a single run.
    pub var_cover: f64,
    pub mean_runtime_sec: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<RolloutRecord>>,
}

pub const CSV_HEADER: &str =
    "instance_id,algorithm,n_states,n_targets,m,runs,mean_cover,var_cover,mean_runtime_sec";

impl BatchStats {
    pub fn from_cover_times(covers: &[u64], runtimes: &[f64]) -> Self {
        let runs = covers.len();
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, &c) in covers.iter().enumerate() {
            let x = c as f64;
            let d = x - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (x - mean);
        }
        BatchStats {
            runs,
            mean_cover: mean,
            var_cover: if runs > 1 { m2 / (runs - 1) as f64 } else { 0.0 },
            mean_runtime_sec: runtimes.iter().sum::<f64>() / runtimes.len().max(1) as f64,
            records: None,
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.var_cover / self.runs as f64).sqrt()
    }

    pub fn csv_row(&self, instance_id: &str, algorithm: &str, n_states: usize, n_targets: usize, m: usize) -> String {
        format!(
            "{instance_id},{algorithm},{n_states},{n_targets},{m},{},{},{},{}",
            self.runs, self.mean_cover, self.var_cover, self.mean_runtime_sec
        )
    }
}

/// `n_runs` rollouts with seeds `base_seed + i`, run in parallel and reduced in index order.
pub fn run_batch(
    planner: &Planner,
    mdp: &Mdp,
    targets: &TargetSet,
    start: usize,
    n_runs: usize,
    base_seed: u64,
    keep_records: bool,
) -> Result<BatchStats> {
    let results: Vec<(RolloutRecord, f64)> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let clock = Instant::now();
            let mut rec = planner.rollout(mdp, targets, start, base_seed.wrapping_add(i as u64))?;
            if !keep_records {
                rec.trajectory = Vec::new();
            }
            Ok((rec, clock.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let covers: Vec<u64> = results.iter().map(|(r, _)| r.cover_time).collect();
    let runtimes: Vec<f64> = results.iter().map(|(_, t)| *t).collect();
    let mut stats = BatchStats::from_cover_times(&covers, &runtimes);
    if keep_records {
        stats.records = Some(results.into_iter().map(|(r, _)| r).collect());
    }
    Ok(stats)
}

/// Independent per-agent seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Every agent covers its own part from `start`; the team's cover time is the
/// largest individual one.
pub fn multi_agent_cover(
    partition: &Partition,
    planner: &Planner,
    mdp: &Mdp,
    start: usize,
    seed: u64,
) -> Result<u64> {
    if matches!(planner, Planner::Policy(_)) {
        return Err(Error::InvalidParameter(
            "a product policy is tied to one target set; solve each part separately".into(),
        ));
    }
    let mut worst = 0;
    for (i, part) in partition.parts.iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        let targets = TargetSet::new(part.clone(), mdp.n_states())?;
        let rec = planner.rollout(mdp, &targets, start, derive_seed(seed, i as u64))?;
        worst = worst.max(rec.cover_time);
    }
    Ok(worst)
}

/// `n_runs` team rollouts with seeds `base_seed + i`, reduced in index order.
pub fn run_multi_agent_batch(
    partition: &Partition,
    planner: &Planner,
    mdp: &Mdp,
    start: usize,
    n_runs: usize,
    base_seed: u64,
) -> Result<BatchStats> {
    let results: Vec<(u64, f64)> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let clock = Instant::now();
            let cover = multi_agent_cover(partition, planner, mdp, start, base_seed.wrapping_add(i as u64))?;
            Ok((cover, clock.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let covers: Vec<u64> = results.iter().map(|r| r.0).collect();
    let runtimes: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(BatchStats::from_cover_times(&covers, &runtimes))
}

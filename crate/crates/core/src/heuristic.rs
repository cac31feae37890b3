//! Per-phase discounted value iteration with a target-seeking reward.
//!
//! While `k` targets remain, every state pays `-k` per step and a remaining
//! target pays `-k + 1`. The discounted values of that reward are recomputed
//! only when a target is visited; between visits the agent acts greedily.

use rand::Rng;
use serde::Serialize;

use crate::environments::rng_from;
use crate::error::{Error, Result};
use crate::mdp::{Mdp, TargetSet};
use crate::sim::{Recorder, RolloutRecord, DEFAULT_STEP_CAP};

pub const DEFAULT_EPSILON: f64 = 1e-20;
pub const SWEEP_CAP: usize = 1_000_000;
/// Discount used for random graphs and random MDPs.
pub const GRAPH_GAMMA: f64 = 0.01;
/// Discount used for single-agent gridworlds.
pub const GRID_GAMMA: f64 = 0.4;
/// Discount used for multi-agent gridworld execution.
pub const MULTI_AGENT_GRID_GAMMA: f64 = 0.7;
/// Action values within this many ulps of the best are tied.
const TIE_ULPS: f64 = 64.0;
/// A sweep whose largest change is at most this many ulps of the largest
/// value cannot make further progress in floating point.
const STALL_ULPS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TieBreak {
    /// Uniform among maximizers, drawn from the rollout's generator.
    Random,
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub tie_break: TieBreak,
    pub step_cap: u64,
    pub sweep_cap: usize,
}

impl HeuristicConfig {
    pub fn new(gamma: f64) -> Self {
        HeuristicConfig {
            gamma,
            epsilon: DEFAULT_EPSILON,
            tie_break: TieBreak::Random,
            step_cap: DEFAULT_STEP_CAP,
            sweep_cap: SWEEP_CAP,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }
}

/// Converged values for one remaining-target set.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseValue {
    pub values: Vec<f64>,
    in_remaining: Vec<bool>,
    pub remaining: Vec<usize>,
    pub gamma: f64,
    pub epsilon: f64,
    pub sweeps: usize,
}

impl PhaseValue {
    pub fn reward(&self, s: usize) -> f64 {
        let k = self.remaining.len() as f64;
        if self.in_remaining[s] {
            -k + 1.0
        } else {
            -k
        }
    }

    pub fn q(&self, mdp: &Mdp, s: usize, a: usize) -> f64 {
        mdp.row(s, a)
            .iter()
            .map(|&(t, p)| p * (self.reward(t) + self.gamma * self.values[t]))
            .sum()
    }

    pub fn is_remaining(&self, s: usize) -> bool {
        self.in_remaining[s]
    }
}

pub fn phase_value_iteration(mdp: &Mdp, remaining: &[usize], gamma: f64, epsilon: f64) -> Result<PhaseValue> {
    phase_value_iteration_capped(mdp, remaining, gamma, epsilon, SWEEP_CAP)
}

pub fn phase_value_iteration_capped(
    mdp: &Mdp,
    remaining: &[usize],
    gamma: f64,
    epsilon: f64,
    sweep_cap: usize,
) -> Result<PhaseValue> {
    if remaining.is_empty() {
        return Err(Error::InvalidTargets("no remaining targets".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} is outside [0, 1)")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    let n = mdp.n_states();
    let mut in_remaining = vec![false; n];
    for &t in remaining {
        if t >= n {
            return Err(Error::InvalidTargets(format!("state {t} out of range")));
        }
        in_remaining[t] = true;
    }
    let k = remaining.len() as f64;
    // pessimistic start: every state paying the larger cost forever
    let mut phase = PhaseValue {
        values: vec![-k / (1.0 - gamma); n],
        in_remaining,
        remaining: remaining.to_vec(),
        gamma,
        epsilon,
        sweeps: 0,
    };
    while phase.sweeps < sweep_cap {
        phase.sweeps += 1;
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for s in 0..n {
            let best = (0..mdp.n_actions())
                .map(|a| phase.q(mdp, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - phase.values[s]).abs());
            scale = scale.max(best.abs());
            phase.values[s] = best;
        }
        if delta < epsilon || delta <= STALL_ULPS * f64::EPSILON * scale {
            return Ok(phase);
        }
    }
    Err(Error::NonConvergence { sweeps: sweep_cap })
}

/// Every action whose value is tied with the best, in increasing order.
pub fn maximizing_actions(mdp: &Mdp, phase: &PhaseValue, state: usize) -> Vec<usize> {
    let q: Vec<f64> = (0..mdp.n_actions()).map(|a| phase.q(mdp, state, a)).collect();
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_ULPS * f64::EPSILON * best.abs().max(1.0);
    (0..q.len()).filter(|&a| q[a] >= best - tol).collect()
}

/// Greedy action with ties broken uniformly at random.
pub fn greedy_action<R: Rng>(mdp: &Mdp, phase: &PhaseValue, state: usize, rng: &mut R) -> usize {
    let best = maximizing_actions(mdp, phase, state);
    best[rng.random_range(0..best.len())]
}

pub fn greedy_action_lowest(mdp: &Mdp, phase: &PhaseValue, state: usize) -> usize {
    maximizing_actions(mdp, phase, state)[0]
}

/// Runs the planner from `start` until every target has been visited.
pub fn plan_and_execute(
    mdp: &Mdp,
    targets: &TargetSet,
    start: usize,
    cfg: &HeuristicConfig,
    seed: u64,
) -> Result<RolloutRecord> {
    targets.check(mdp)?;
    if start >= mdp.n_states() {
        return Err(Error::InvalidTargets(format!("start {start} out of range")));
    }
    let mut rng = rng_from(seed);
    let mut rec = Recorder::new(targets, start, seed, cfg.step_cap);
    while !rec.done() {
        let phase =
            phase_value_iteration_capped(mdp, &rec.remaining_states(), cfg.gamma, cfg.epsilon, cfg.sweep_cap)?;
        rec.phases += 1;
        loop {
            let a = match cfg.tie_break {
                TieBreak::Random => greedy_action(mdp, &phase, rec.state(), &mut rng),
                TieBreak::LowestIndex => greedy_action_lowest(mdp, &phase, rec.state()),
            };
            if rec.step(mdp, a, &mut rng)? {
                break;
            }
        }
    }
    Ok(rec.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{complete_graph, cycle_graph, graph_mdp, path_graph};

    #[test]
    fn reward_has_two_levels() {
        let m = path_graph(4);
        let p = phase_value_iteration(&m, &[1, 3], 0.5, 1e-12).unwrap();
        assert_eq!(p.reward(0), -2.0);
        assert_eq!(p.reward(1), -1.0);
        assert_eq!(p.reward(3), -1.0);
    }

    #[test]
    fn three_path_closed_form() {
        // V(2) = 0.5 V(2) via the self-loop, V(1) = 0 + 0.5 V(2), V(0) = -1 + 0.5 V(1)
        let m = path_graph(3);
        let p = phase_value_iteration(&m, &[2], 0.5, 1e-12).unwrap();
        assert!((p.values[2] - 0.0).abs() < 1e-12);
        assert!((p.values[1] - 0.0).abs() < 1e-12);
        assert!((p.values[0] + 1.0).abs() < 1e-12);
        assert!(p.values[1] - p.values[0] > 0.0);
    }

    #[test]
    fn complete_graph_prefers_the_target() {
        let m = complete_graph(3);
        let p = phase_value_iteration(&m, &[2], 0.5, 1e-12).unwrap();
        // from 0, action 1 leads to 2 (neighbors of 0 are [1, 2])
        assert_eq!(maximizing_actions(&m, &p, 0), vec![1]);
        assert_eq!(maximizing_actions(&m, &p, 1), vec![1]);
        let q_target = p.q(&m, 0, 1);
        let q_other = p.q(&m, 0, 0);
        assert!((q_target - q_other - 1.0 - 0.5 * (p.values[2] - p.values[1])).abs() < 1e-12);
    }

    #[test]
    fn monotone_toward_single_target() {
        let m = path_graph(7);
        for gamma in [0.1, 0.5, 0.9] {
            let p = phase_value_iteration(&m, &[6], gamma, 1e-12).unwrap();
            for s in 0..5 {
                assert!(p.values[s] < p.values[s + 1], "gamma {gamma}, state {s}");
            }
        }
    }

    #[test]
    fn identical_actions_tie_reproducibly() {
        let m = graph_mdp(3, &[(0, 1), (1, 2)]).unwrap();
        let same = crate::mdp::Mdp::new(2, 2, vec![vec![(1, 1.0)]; 4]).unwrap();
        let p = phase_value_iteration(&same, &[1], 0.3, 1e-12).unwrap();
        assert_eq!(maximizing_actions(&same, &p, 0), vec![0, 1]);
        let a = greedy_action(&same, &p, 0, &mut rng_from(3));
        assert_eq!(a, greedy_action(&same, &p, 0, &mut rng_from(3)));
        let p = phase_value_iteration(&m, &[1], 0.3, 1e-12).unwrap();
        assert_eq!(greedy_action_lowest(&m, &p, 2), 0);
    }

    #[test]
    fn constant_shift_does_not_change_argmax() {
        let m = cycle_graph(6);
        let p = phase_value_iteration(&m, &(0..6).collect::<Vec<_>>(), 0.5, 1e-12).unwrap();
        for s in 0..6 {
            assert_eq!(maximizing_actions(&m, &p, s), vec![0, 1]);
        }
    }

    #[test]
    fn zero_discount_is_nearest_neighbor() {
        // on regular graphs the tied action set is "adjacent targets, else all neighbors"
        for m in [cycle_graph(7), complete_graph(5)] {
            let n = m.n_states();
            for mask in 1u32..(1 << n) {
                let remaining: Vec<usize> = (0..n).filter(|&s| mask >> s & 1 == 1).collect();
                let p = phase_value_iteration(&m, &remaining, 0.0, 1e-12).unwrap();
                for s in 0..n {
                    let to_target: Vec<usize> = (0..m.n_actions())
                        .filter(|&a| p.is_remaining(m.row(s, a)[0].0))
                        .collect();
                    let want = if to_target.is_empty() {
                        (0..m.n_actions()).collect()
                    } else {
                        to_target
                    };
                    assert_eq!(maximizing_actions(&m, &p, s), want);
                }
            }
        }
    }

    #[test]
    fn parameter_errors() {
        let m = path_graph(3);
        assert!(matches!(phase_value_iteration(&m, &[], 0.5, 1e-9), Err(Error::InvalidTargets(_))));
        assert!(matches!(phase_value_iteration(&m, &[1], 1.0, 1e-9), Err(Error::InvalidParameter(_))));
        assert!(matches!(phase_value_iteration(&m, &[1], 0.5, 0.0), Err(Error::InvalidParameter(_))));
        assert_eq!(
            phase_value_iteration_capped(&m, &[2], 0.9, 1e-12, 2),
            Err(Error::NonConvergence { sweeps: 2 })
        );
    }

    #[test]
    fn tiny_epsilon_terminates() {
        let m = crate::environments::random_mdp(30, 3, 4, crate::environments::RowMode::Simplex);
        for gamma in [0.01, 0.4, 0.7, 0.9] {
            let p = phase_value_iteration(&m, &[3, 17, 29], gamma, DEFAULT_EPSILON).unwrap();
            assert!(p.values.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn rollouts_on_simple_graphs() {
        let cfg = HeuristicConfig::new(0.5);
        let path = path_graph(6);
        let rec = plan_and_execute(&path, &TargetSet::all(6), 0, &cfg, 1).unwrap();
        assert_eq!(rec.cover_time, 5);
        assert_eq!(rec.phases, 5);
        let cyc = cycle_graph(6);
        for start in 0..6 {
            let rec = plan_and_execute(&cyc, &TargetSet::all(6), start, &cfg, start as u64).unwrap();
            assert_eq!(rec.cover_time, 5);
        }
    }

    #[test]
    fn step_cap() {
        let m = path_graph(9);
        let cfg = HeuristicConfig {
            step_cap: 3,
            ..HeuristicConfig::new(0.5)
        };
        assert_eq!(
            plan_and_execute(&m, &TargetSet::new(vec![8], 9).unwrap(), 0, &cfg, 0),
            Err(Error::StepCapExceeded { steps: 3 })
        );
    }
}

//! Nearest-neighbor rollouts and exact cover times on deterministic graphs.

use std::collections::VecDeque;

use rand::Rng;

use crate::environments::rng_from;
use crate::error::{Error, Result};
use crate::mdp::{Mdp, TargetSet};
use crate::sim::{Recorder, RolloutRecord, DEFAULT_STEP_CAP};

pub const BRUTE_FORCE_CAP: usize = 10;
/// Above this many targets the search switches from permutations to a subset DP.
pub const PERMUTATION_LIMIT: usize = 8;

/// Steps to an adjacent unvisited target when there is one (uniformly among
/// several), otherwise to a uniformly random distinct neighbor.
pub fn nearest_neighbor_rollout(mdp: &Mdp, targets: &TargetSet, start: usize, seed: u64) -> Result<RolloutRecord> {
    if !mdp.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    targets.check(mdp)?;
    if start >= mdp.n_states() {
        return Err(Error::InvalidTargets(format!("start {start} out of range")));
    }
    // (neighbor, lowest action reaching it) per state, self-loops excluded
    let moves: Vec<Vec<(usize, usize)>> = (0..mdp.n_states())
        .map(|s| {
            let mut out: Vec<(usize, usize)> = Vec::new();
            for a in 0..mdp.n_actions() {
                let to = mdp.row(s, a)[0].0;
                if to != s && !out.iter().any(|&(t, _)| t == to) {
                    out.push((to, a));
                }
            }
            out.sort_unstable();
            out
        })
        .collect();
    let mut rng = rng_from(seed);
    let mut rec = Recorder::new(targets, start, seed, DEFAULT_STEP_CAP);
    rec.phases = 1;
    while !rec.done() {
        let here = &moves[rec.state()];
        if here.is_empty() {
            return Err(Error::AssumptionViolated);
        }
        let toward: Vec<&(usize, usize)> = here.iter().filter(|(t, _)| rec.is_remaining(*t)).collect();
        let &(_, a) = if toward.is_empty() {
            &here[rng.random_range(0..here.len())]
        } else {
            toward[rng.random_range(0..toward.len())]
        };
        rec.step(mdp, a, &mut rng)?;
    }
    Ok(rec.finish())
}

fn bfs(mdp: &Mdp, from: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; mdp.n_states()];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(s) = queue.pop_front() {
        let d = dist[s].expect("queued states have a distance");
        for t in mdp.successors(s) {
            if dist[t].is_none() {
                dist[t] = Some(d + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

/// Shortest walk from `start` visiting every target: the visiting order and its length.
///
/// A target equal to `start` is covered at time zero and left out of the order.
pub fn brute_force_cover_time_graph(mdp: &Mdp, targets: &TargetSet, start: usize) -> Result<(Vec<usize>, usize)> {
    brute_force_cover_time_graph_capped(mdp, targets, start, BRUTE_FORCE_CAP)
}

pub fn brute_force_cover_time_graph_capped(
    mdp: &Mdp,
    targets: &TargetSet,
    start: usize,
    cap: usize,
) -> Result<(Vec<usize>, usize)> {
    if !mdp.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    targets.check(mdp)?;
    if targets.len() > cap {
        return Err(Error::CapExceeded {
            what: "target count",
            size: targets.len(),
            cap,
        });
    }
    let goals: Vec<usize> = targets.members().iter().copied().filter(|&t| t != start).collect();
    let k = goals.len();
    if k == 0 {
        return Ok((Vec::new(), 0));
    }
    let lookup = |dist: Vec<Option<usize>>| -> Result<Vec<usize>> {
        goals
            .iter()
            .map(|&g| dist[g].ok_or(Error::AssumptionViolated))
            .collect()
    };
    let from_start = lookup(bfs(mdp, start))?;
    let between = goals
        .iter()
        .map(|&g| lookup(bfs(mdp, g)))
        .collect::<Result<Vec<_>>>()?;
    let (order, length) = if k <= PERMUTATION_LIMIT {
        by_permutations(&from_start, &between)
    } else {
        by_subset_dp(&from_start, &between)
    };
    Ok((order.into_iter().map(|i| goals[i]).collect(), length))
}

/// Tries every visiting order; the first minimal one in lexicographic order wins.
fn by_permutations(from_start: &[usize], between: &[Vec<usize>]) -> (Vec<usize>, usize) {
    fn extend(
        path: &mut Vec<usize>,
        used: &mut [bool],
        length: usize,
        from_start: &[usize],
        between: &[Vec<usize>],
        best: &mut (Vec<usize>, usize),
    ) {
        if length >= best.1 {
            return;
        }
        if path.len() == used.len() {
            *best = (path.clone(), length);
            return;
        }
        for i in 0..used.len() {
            if used[i] {
                continue;
            }
            let leg = path.last().map_or(from_start[i], |&p| between[p][i]);
            used[i] = true;
            path.push(i);
            extend(path, used, length + leg, from_start, between, best);
            path.pop();
            used[i] = false;
        }
    }
    let mut best = (Vec::new(), usize::MAX);
    extend(
        &mut Vec::new(),
        &mut vec![false; from_start.len()],
        0,
        from_start,
        between,
        &mut best,
    );
    best
}

/// Held-Karp over (visited subset, last target).
fn by_subset_dp(from_start: &[usize], between: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let k = from_start.len();
    let full = (1usize << k) - 1;
    let mut cost = vec![usize::MAX; (1 << k) * k];
    let mut parent = vec![usize::MAX; (1 << k) * k];
    for i in 0..k {
        cost[(1 << i) * k + i] = from_start[i];
    }
    for mask in 1..=full {
        for last in 0..k {
            let c = cost[mask * k + last];
            if c == usize::MAX {
                continue;
            }
            for next in 0..k {
                if mask >> next & 1 == 1 {
                    continue;
                }
                let m2 = mask | 1 << next;
                let c2 = c + between[last][next];
                if c2 < cost[m2 * k + next] {
                    cost[m2 * k + next] = c2;
                    parent[m2 * k + next] = last;
                }
            }
        }
    }
    let last = (0..k)
        .min_by_key(|&i| cost[full * k + i])
        .expect("at least one target");
    let length = cost[full * k + last];
    let mut order = vec![last];
    let (mut mask, mut cur) = (full, last);
    while parent[mask * k + cur] != usize::MAX {
        let prev = parent[mask * k + cur];
        mask &= !(1 << cur);
        cur = prev;
        order.push(cur);
    }
    order.reverse();
    (order, length)
}

//! Splitting targets among `m` agents that share a start state.
//!
//! The surrogate for an agent's optimal cover time is the average length of a
//! Hamiltonian path through its part of the model graph,
//! `L_a = (sum of in-part weights + sum of start-to-part weights) / n_i`.
//! [`partition_transfers_swaps`] lowers `M_a = max_i L_a` by moving single
//! targets between parts (transfers) and exchanging pairs (swaps), keeping each
//! part's weight sum up to date with the incremental formulas below.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, TargetSet};
use crate::model_graph::ModelGraph;
use crate::product::{ProductSolver, ProductState};

pub const PASS_CAP: usize = 10_000;
pub const BRUTE_FORCE_TARGET_CAP: usize = 10;
/// Relative margin a move must beat to count as a strict improvement.
const IMPROVEMENT_MARGIN: f64 = 1e-12;

/// Assignment of target states to agents; `parts[i]` belongs to agent `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub m: usize,
    pub parts: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(mut parts: Vec<Vec<usize>>) -> Self {
        for p in &mut parts {
            p.sort_unstable();
        }
        Partition {
            m: parts.len(),
            parts,
        }
    }

    /// Union equals the target set and parts are pairwise disjoint.
    pub fn check(&self, targets: &[usize]) -> Result<()> {
        let mut all: Vec<usize> = self.parts.iter().flatten().copied().collect();
        all.sort_unstable();
        let before = all.len();
        all.dedup();
        if all.len() != before {
            return Err(Error::InvalidPartition("parts overlap".into()));
        }
        let mut want = targets.to_vec();
        want.sort_unstable();
        if all != want {
            return Err(Error::InvalidPartition("parts do not cover the target set".into()));
        }
        Ok(())
    }

    /// Parts as a set of sets, for order-insensitive comparison.
    pub fn canonical(&self) -> Vec<Vec<usize>> {
        let mut parts: Vec<Vec<usize>> = self
            .parts
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| {
                let mut p = p.clone();
                p.sort_unstable();
                p
            })
            .collect();
        parts.sort();
        parts
    }

    pub fn same_sets(&self, other: &Partition) -> bool {
        self.canonical() == other.canonical()
    }

    /// `{"schema":1,"m","parts","M_a","passes"}`.
    pub fn to_json(&self, m_a: f64, passes: usize) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema: u32,
            m: usize,
            parts: &'a [Vec<usize>],
            #[serde(rename = "M_a")]
            m_a: f64,
            passes: usize,
        }
        serde_json::to_string(&Doc {
            schema: 1,
            m: self.m,
            parts: &self.parts,
            m_a,
            passes,
        })
        .expect("partition serializes")
    }
}

/// `W = sum_{s1,s2 in part} w(s1,s2) + sum_{s in part} w(s0,s)`.
pub fn weight_sum(graph: &ModelGraph, part: &[usize], s0: usize) -> f64 {
    part.iter()
        .map(|&a| part.iter().map(|&b| graph.weight(a, b)).sum::<f64>() + graph.weight(s0, a))
        .sum()
}

/// Average Hamiltonian path length of `part` from `s0`.
pub fn avg_hamiltonian_length(graph: &ModelGraph, part: &[usize], s0: usize) -> Result<f64> {
    if part.is_empty() {
        return Err(Error::EmptyPart);
    }
    Ok(weight_sum(graph, part, s0) / part.len() as f64)
}

/// Contribution of `s` to the weight sum of `part` (self-terms are zero).
pub fn contribution(graph: &ModelGraph, part: &[usize], s: usize, s0: usize) -> f64 {
    part.iter()
        .map(|&t| graph.weight(t, s) + graph.weight(s, t))
        .sum::<f64>()
        + graph.weight(s0, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubgraphStats {
    pub n: usize,
    pub w: f64,
    pub l_a: f64,
}

/// A part together with its incrementally maintained weight sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub members: Vec<usize>,
    pub w: f64,
}

impl Subgraph {
    pub fn new(graph: &ModelGraph, members: Vec<usize>, s0: usize) -> Self {
        let w = weight_sum(graph, &members, s0);
        Subgraph { members, w }
    }

    pub fn stats(&self) -> SubgraphStats {
        let n = self.members.len();
        SubgraphStats {
            n,
            w: self.w,
            l_a: if n == 0 { 0.0 } else { self.w / n as f64 },
        }
    }

    pub fn l_a(&self) -> f64 {
        self.stats().l_a
    }
}

/// New `(L_a(from'), L_a(to'))` after moving `s` from `from` to `to`.
pub fn transfer_delta(
    from: &Subgraph,
    to: &Subgraph,
    graph: &ModelGraph,
    s: usize,
    s0: usize,
) -> Result<(f64, f64)> {
    let n_from = from.members.len();
    if n_from < 2 {
        return Err(Error::SingletonTransfer);
    }
    let w_from = from.w - contribution(graph, &from.members, s, s0);
    let w_to = to.w + contribution(graph, &to.members, s, s0);
    Ok((
        w_from / (n_from - 1) as f64,
        w_to / (to.members.len() + 1) as f64,
    ))
}

/// New `(W(a'), W(b'))` after exchanging `s_a in a` with `s_b in b`.
pub fn swap_delta(
    a: &Subgraph,
    b: &Subgraph,
    graph: &ModelGraph,
    s_a: usize,
    s_b: usize,
    s0: usize,
) -> (f64, f64) {
    let cross = graph.weight(s_a, s_b) + graph.weight(s_b, s_a);
    let w_a = a.w - contribution(graph, &a.members, s_a, s0) + contribution(graph, &a.members, s_b, s0)
        - cross;
    let w_b = b.w - contribution(graph, &b.members, s_b, s0) + contribution(graph, &b.members, s_a, s0)
        - cross;
    (w_a, w_b)
}

/// Parts with incrementally maintained weight sums.
#[derive(Debug, Clone)]
pub struct PartitionState<'g> {
    graph: &'g ModelGraph,
    s0: usize,
    parts: Vec<Subgraph>,
}

impl<'g> PartitionState<'g> {
    pub fn new(graph: &'g ModelGraph, partition: &Partition, s0: usize) -> Self {
        PartitionState {
            graph,
            s0,
            parts: partition
                .parts
                .iter()
                .map(|p| Subgraph::new(graph, p.clone(), s0))
                .collect(),
        }
    }

    pub fn parts(&self) -> &[Subgraph] {
        &self.parts
    }

    pub fn m_a(&self) -> f64 {
        self.parts.iter().map(Subgraph::l_a).fold(0.0, f64::max)
    }

    pub fn partition(&self) -> Partition {
        Partition::new(self.parts.iter().map(|p| p.members.clone()).collect())
    }

    pub fn apply_transfer(&mut self, from: usize, to: usize, s: usize) -> Result<()> {
        let pos = self.position(from, s)?;
        if self.parts[from].members.len() < 2 {
            return Err(Error::SingletonTransfer);
        }
        let (graph, s0) = (self.graph, self.s0);
        let removed = self.parts[from].members.swap_remove(pos);
        self.parts[from].w -= contribution(graph, &self.parts[from].members, removed, s0);
        self.parts[to].w += contribution(graph, &self.parts[to].members, s, s0);
        self.parts[to].members.push(s);
        Ok(())
    }

    pub fn apply_swap(&mut self, i: usize, k: usize, s_i: usize, s_k: usize) -> Result<()> {
        let pi = self.position(i, s_i)?;
        let pk = self.position(k, s_k)?;
        let (w_i, w_k) = swap_delta(&self.parts[i], &self.parts[k], self.graph, s_i, s_k, self.s0);
        self.parts[i].members[pi] = s_k;
        self.parts[k].members[pk] = s_i;
        self.parts[i].w = w_i;
        self.parts[k].w = w_k;
        Ok(())
    }

    /// Weight sums recomputed from scratch, for checking the incremental ones.
    pub fn recomputed(&self) -> Vec<f64> {
        self.parts
            .iter()
            .map(|p| weight_sum(self.graph, &p.members, self.s0))
            .collect()
    }

    fn position(&self, part: usize, s: usize) -> Result<usize> {
        self.parts[part]
            .members
            .iter()
            .position(|&t| t == s)
            .ok_or_else(|| Error::InvalidPartition(format!("state {s} is not in part {part}")))
    }

    fn best_swap(&self, i: usize, k: usize) -> Option<(f64, usize, usize)> {
        let (a, b) = (&self.parts[i], &self.parts[k]);
        let (n_a, n_b) = (a.members.len() as f64, b.members.len() as f64);
        let mut best: Option<(f64, usize, usize)> = None;
        for &s_a in &a.members {
            for &s_b in &b.members {
                let (w_a, w_b) = swap_delta(a, b, self.graph, s_a, s_b, self.s0);
                let score = (w_a / n_a).max(w_b / n_b);
                if best.is_none_or(|(v, _, _)| score < v) {
                    best = Some((score, s_a, s_b));
                }
            }
        }
        best
    }

    /// Best transfer in either direction: `(score, from, to, state)`.
    fn best_transfer(&self, i: usize, k: usize) -> Option<(f64, usize, usize, usize)> {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (from, to) in [(i, k), (k, i)] {
            let src = &self.parts[from];
            if src.members.len() < 2 {
                continue;
            }
            for &s in &src.members {
                let (l_from, l_to) = transfer_delta(src, &self.parts[to], self.graph, s, self.s0)
                    .expect("source has at least two members");
                let score = l_from.max(l_to);
                if best.is_none_or(|(v, ..)| score < v) {
                    best = Some((score, from, to, s));
                }
            }
        }
        best
    }
}

fn improves(candidate: f64, current: f64) -> bool {
    candidate < current - IMPROVEMENT_MARGIN * current.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub passes: usize,
    pub swaps: usize,
    pub transfers: usize,
    /// `M_a` after each pass, starting with the initial partition.
    pub m_a_trace: Vec<f64>,
}

impl SearchReport {
    pub fn m_a(&self) -> f64 {
        *self.m_a_trace.last().expect("trace starts with the initial value")
    }
}

/// Local search by best swaps and best transfers between pairs of parts.
///
/// Each pass visits every pair `(i, k)`, `i < k`, in lexicographic order. A
/// pair that has no strictly improving swap is marked swap-checked (likewise
/// for transfers) until one of its parts changes. The search stops once a
/// pass fails to lower `M_a`.
pub fn partition_transfers_swaps(
    graph: &ModelGraph,
    targets: &[usize],
    s0: usize,
    init: &Partition,
) -> Result<(Partition, SearchReport)> {
    init.check(targets)?;
    let m = init.parts.len();
    let mut state = PartitionState::new(graph, init, s0);
    let mut swap_checked = vec![vec![false; m]; m];
    let mut transfer_checked = vec![vec![false; m]; m];
    let mut report = SearchReport {
        passes: 0,
        swaps: 0,
        transfers: 0,
        m_a_trace: vec![state.m_a()],
    };
    let clear = |checked: &mut Vec<Vec<bool>>, a: usize, b: usize| {
        for row in checked.iter_mut() {
            row[a] = false;
            row[b] = false;
        }
        checked[a].iter_mut().for_each(|c| *c = false);
        checked[b].iter_mut().for_each(|c| *c = false);
    };

    loop {
        if report.passes >= PASS_CAP {
            return Err(Error::NonConvergence {
                sweeps: report.passes,
            });
        }
        report.passes += 1;
        let before = state.m_a();
        for i in 0..m {
            for k in i + 1..m {
                if !swap_checked[i][k] {
                    let current = state.parts[i].l_a().max(state.parts[k].l_a());
                    match state.best_swap(i, k) {
                        Some((score, s_i, s_k)) if improves(score, current) => {
                            state.apply_swap(i, k, s_i, s_k)?;
                            report.swaps += 1;
                            clear(&mut swap_checked, i, k);
                            clear(&mut transfer_checked, i, k);
                        }
                        _ => swap_checked[i][k] = true,
                    }
                }
                if !transfer_checked[i][k] {
                    let current = state.parts[i].l_a().max(state.parts[k].l_a());
                    match state.best_transfer(i, k) {
                        Some((score, from, to, s)) if improves(score, current) => {
                            state.apply_transfer(from, to, s)?;
                            report.transfers += 1;
                            clear(&mut swap_checked, i, k);
                            clear(&mut transfer_checked, i, k);
                        }
                        _ => transfer_checked[i][k] = true,
                    }
                }
            }
        }
        let after = state.m_a();
        report.m_a_trace.push(after);
        if !improves(after, before) {
            break;
        }
    }
    Ok((state.partition(), report))
}

/// Greedy vertex m-center seeding followed by nearest-center assignment under
/// the symmetrized distance `(w(a,b) + w(b,a)) / 2`.
pub fn greedy_m_center_init(
    graph: &ModelGraph,
    targets: &[usize],
    m: usize,
    s0: usize,
) -> Result<Partition> {
    if m == 0 || m > targets.len() {
        return Err(Error::TooManyAgents {
            agents: m,
            targets: targets.len(),
        });
    }
    let mut sorted = targets.to_vec();
    sorted.sort_unstable();
    let dist = |a: usize, b: usize| 0.5 * (graph.weight(a, b) + graph.weight(b, a));
    let argmax = |score: &dyn Fn(usize) -> f64, skip: &[usize]| -> usize {
        let mut best: Option<(f64, usize)> = None;
        for &t in sorted.iter().filter(|t| !skip.contains(t)) {
            let v = score(t);
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, t));
            }
        }
        best.expect("a candidate remains").1
    };
    let mut centers = vec![argmax(&|t| graph.weight(s0, t), &[])];
    while centers.len() < m {
        let chosen = centers.clone();
        let next = argmax(
            &|t| chosen.iter().map(|&c| dist(c, t)).fold(f64::INFINITY, f64::min),
            &chosen,
        );
        centers.push(next);
    }
    let mut parts = vec![Vec::new(); m];
    for &t in &sorted {
        let mut best = (f64::INFINITY, 0);
        for (i, &c) in centers.iter().enumerate() {
            let d = if c == t { -1.0 } else { dist(c, t) };
            if d < best.0 {
                best = (d, i);
            }
        }
        parts[best.1].push(t);
    }
    Ok(Partition::new(parts))
}

/// Exhaustive search over partitions into `m` labeled-up-to-permutation parts,
/// scored by the largest optimal expected cover time among the parts.
pub fn brute_force_optimal_partition(
    mdp: &Mdp,
    targets: &TargetSet,
    m: usize,
    s0: usize,
) -> Result<(Partition, f64)> {
    brute_force_optimal_partition_capped(mdp, targets, m, s0, BRUTE_FORCE_TARGET_CAP)
}

pub fn brute_force_optimal_partition_capped(
    mdp: &Mdp,
    targets: &TargetSet,
    m: usize,
    s0: usize,
    cap: usize,
) -> Result<(Partition, f64)> {
    let k = targets.len();
    if k > cap {
        return Err(Error::CapExceeded {
            what: "target count",
            size: k,
            cap,
        });
    }
    if m == 0 {
        return Err(Error::TooManyAgents { agents: 0, targets: k });
    }
    let solver = ProductSolver {
        target_cap: cap,
        ..ProductSolver::default()
    };
    let solution = solver.solve(mdp, targets, s0)?;
    let cost = |mask: u64| solution.table.value(targets, ProductState::new(s0, mask));

    let blocks = m.min(k);
    let mut labels = vec![0usize; k];
    let mut best: Option<(f64, Vec<usize>)> = None;
    enumerate_set_partitions(&mut labels, 1, 1, blocks, &mut |labels| {
        let mut masks = vec![0u64; blocks];
        for (i, &l) in labels.iter().enumerate() {
            masks[l] |= 1 << i;
        }
        let value = masks.iter().map(|&mk| cost(mk)).fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(b, _)| improves(value, *b)) {
            best = Some((value, labels.to_vec()));
        }
    });
    let (value, labels) = best.expect("at least one partition exists");
    let mut parts = vec![Vec::new(); m];
    for (i, &l) in labels.iter().enumerate() {
        parts[l].push(targets.members()[i]);
    }
    Ok((Partition::new(parts), value))
}

/// Restricted growth strings with exactly `blocks` distinct labels.
fn enumerate_set_partitions(
    labels: &mut [usize],
    pos: usize,
    used: usize,
    blocks: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    let k = labels.len();
    if pos == k {
        if used == blocks {
            visit(labels);
        }
        return;
    }
    // not enough positions left to open the missing blocks
    if blocks - used.min(blocks) > k - pos {
        return;
    }
    for l in 0..=used.min(blocks - 1) {
        labels[pos] = l;
        let next_used = if l == used { used + 1 } else { used };
        enumerate_set_partitions(labels, pos + 1, next_used, blocks, visit);
    }
}

/// Measured hitting-time bands of a clustered target layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterSpec {
    pub m: usize,
    /// Targets per cluster.
    pub n: usize,
    /// Smallest and largest hitting time between distinct targets of one cluster.
    pub w_c_low: f64,
    pub w_c: f64,
    /// Smallest and largest hitting time between targets of different clusters.
    pub w_l: f64,
    pub w_l_high: f64,
    /// Range of hitting times from the start state to the targets.
    pub w_1: f64,
    pub w_2: f64,
}

impl ClusterSpec {
    /// Bands read off the model graph; empty comparisons give `0` for the
    /// in-cluster band and `+inf` for the cross-cluster band.
    pub fn measure(graph: &ModelGraph, s0: usize, clusters: &[Vec<usize>]) -> Self {
        let (mut c_lo, mut c_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut l_lo, mut l_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, ci) in clusters.iter().enumerate() {
            for (j, cj) in clusters.iter().enumerate() {
                for &a in ci {
                    for &b in cj {
                        if a == b {
                            continue;
                        }
                        let w = graph.weight(a, b);
                        if i == j {
                            c_lo = c_lo.min(w);
                            c_hi = c_hi.max(w);
                        } else {
                            l_lo = l_lo.min(w);
                            l_hi = l_hi.max(w);
                        }
                    }
                }
            }
        }
        if c_hi < c_lo {
            (c_lo, c_hi) = (0.0, 0.0);
        }
        if l_hi < l_lo {
            (l_lo, l_hi) = (f64::INFINITY, f64::INFINITY);
        }
        let from_start: Vec<f64> = clusters.iter().flatten().map(|&t| graph.weight(s0, t)).collect();
        ClusterSpec {
            m: clusters.len(),
            n: clusters.first().map_or(0, Vec::len),
            w_c_low: c_lo,
            w_c: c_hi,
            w_l: l_lo,
            w_l_high: l_hi,
            w_1: from_start.iter().copied().fold(f64::INFINITY, f64::min),
            w_2: from_start.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `w_l > (n - 1) w_c + (w_2 - w_1)`: the clustered partition is optimal.
    pub fn optimality_condition(&self) -> bool {
        self.w_l > (self.n as f64 - 1.0) * self.w_c + (self.w_2 - self.w_1)
    }

    /// `w_l > 3 n w_c + w_c' + (w_2 - w_1) / 2`: transfer/swap search recovers
    /// the clustered partition from any equal-size start.
    pub fn recovery_condition(&self) -> bool {
        self.w_l > 3.0 * self.n as f64 * self.w_c + self.w_c_low + 0.5 * (self.w_2 - self.w_1)
    }
}

//! Exact minimum expected cover time on the product space `S x 2^V`.
//!
//! A product state pairs the agent's location with the bit set of targets still
//! to be visited. Entering a target clears its bit, so the remaining set never
//! grows and the product space splits into levels, one per remaining set, that
//! only depend on smaller sets. Each level is a linear system over the states,
//! solved directly in order of increasing subset size.
//!
//! States are stored in canonical form: a state that is itself a target never
//! carries its own bit, since being there means it has been visited.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_fixed_point, SparseSystem};
use crate::mdp::{Mdp, Row, TargetSet};

pub const DEFAULT_TARGET_CAP: usize = 14;
/// Relative tolerance under which two action values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductState {
    pub state: usize,
    pub remaining: u64,
}

impl ProductState {
    pub fn new(state: usize, remaining: u64) -> Self {
        ProductState { state, remaining }
    }

    /// Start of a mission from `state`: every target except `state` itself.
    pub fn start(targets: &TargetSet, state: usize) -> Self {
        ProductState {
            state,
            remaining: targets.initial_mask(state),
        }
    }

    /// Drops the bit of the current state if it is a target.
    pub fn canonical(self, targets: &TargetSet) -> Self {
        match targets.index_of(self.state) {
            Some(i) => ProductState {
                state: self.state,
                remaining: self.remaining & !(1 << i),
            },
            None => self,
        }
    }

    pub fn is_covered(&self) -> bool {
        self.remaining == 0
    }
}

/// Successor distribution of `from` under `action`.
pub fn product_transition(
    mdp: &Mdp,
    targets: &TargetSet,
    from: ProductState,
    action: usize,
) -> Vec<(ProductState, f64)> {
    mdp.row(from.state, action)
        .iter()
        .map(|&(to, p)| (ProductState::new(to, from.remaining).canonical(targets), p))
        .collect()
}

/// Layout shared by value tables and policies: `index = mask * n_states + state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    n_states: usize,
    n_targets: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.n_states << self.n_targets
    }

    fn index(&self, ps: ProductState) -> usize {
        debug_assert!(ps.state < self.n_states);
        debug_assert!(ps.remaining >> self.n_targets == 0);
        (ps.remaining as usize) * self.n_states + ps.state
    }

    fn masks_by_size(&self) -> Vec<Vec<u64>> {
        let mut levels = vec![Vec::new(); self.n_targets + 1];
        for mask in 0..(1u64 << self.n_targets) {
            levels[mask.count_ones() as usize].push(mask);
        }
        levels
    }
}

/// Expected remaining cover time of every canonical product state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverValueTable {
    layout: Layout,
    values: Vec<f64>,
}

impl CoverValueTable {
    pub fn n_states(&self) -> usize {
        self.layout.n_states
    }

    pub fn n_targets(&self) -> usize {
        self.layout.n_targets
    }

    /// Value at `ps`; non-canonical states are looked up through their canonical form.
    pub fn value(&self, targets: &TargetSet, ps: ProductState) -> f64 {
        self.values[self.layout.index(ps.canonical(targets))]
    }

    /// Optimal (or policy) expected cover time of the mission starting at `state`.
    pub fn cover_time_from(&self, targets: &TargetSet, state: usize) -> f64 {
        self.value(targets, ProductState::start(targets, state))
    }

    fn raw(&self, ps: ProductState) -> f64 {
        self.values[self.layout.index(ps)]
    }

    /// Canonical entries `(state, remaining, value)` in mask-major order.
    pub fn entries<'a>(
        &'a self,
        targets: &'a TargetSet,
    ) -> impl Iterator<Item = (ProductState, f64)> + 'a {
        canonical_states(self.layout, targets).map(move |ps| (ps, self.raw(ps)))
    }

    /// `{"schema":1,"values":[{"state","remaining","value"}]}`; infinite values are `null`.
    pub fn to_json(&self, targets: &TargetSet) -> String {
        #[derive(Serialize)]
        struct Entry {
            state: usize,
            remaining: u64,
            value: Option<f64>,
        }
        #[derive(Serialize)]
        struct Doc {
            schema: u32,
            values: Vec<Entry>,
        }
        let values = self
            .entries(targets)
            .map(|(ps, v)| Entry {
                state: ps.state,
                remaining: ps.remaining,
                value: v.is_finite().then_some(v),
            })
            .collect();
        serde_json::to_string(&Doc { schema: 1, values }).expect("table serializes")
    }
}

/// Deterministic policy over canonical product states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductPolicy {
    layout: Layout,
    actions: Vec<usize>,
}

impl ProductPolicy {
    pub fn action(&self, targets: &TargetSet, ps: ProductState) -> usize {
        self.actions[self.layout.index(ps.canonical(targets))]
    }

    /// Builds a policy from a closure over canonical product states.
    pub fn from_fn(
        mdp: &Mdp,
        targets: &TargetSet,
        mut f: impl FnMut(ProductState) -> usize,
    ) -> Result<Self> {
        let layout = layout_for(mdp, targets, usize::MAX)?;
        let mut actions = vec![0; layout.len()];
        for ps in canonical_states(layout, targets) {
            let a = f(ps);
            if a >= mdp.n_actions() {
                return Err(Error::InvalidPolicy {
                    state: ps.state,
                    action: a,
                    n_actions: mdp.n_actions(),
                });
            }
            actions[layout.index(ps)] = a;
        }
        Ok(ProductPolicy { layout, actions })
    }

    /// Lifts a stationary policy on `S` to the product space.
    pub fn from_stationary(
        mdp: &Mdp,
        targets: &TargetSet,
        policy: &crate::mdp::StationaryPolicy,
    ) -> Result<Self> {
        policy.check(mdp)?;
        Self::from_fn(mdp, targets, |ps| policy.action(ps.state))
    }

    /// `{"schema":1,"policy":[{"state","remaining","action"}]}` over states with targets left.
    pub fn to_json(&self, targets: &TargetSet) -> String {
        #[derive(Serialize)]
        struct Entry {
            state: usize,
            remaining: u64,
            action: usize,
        }
        #[derive(Serialize)]
        struct Doc {
            schema: u32,
            policy: Vec<Entry>,
        }
        let policy = canonical_states(self.layout, targets)
            .filter(|ps| ps.remaining != 0)
            .map(|ps| Entry {
                state: ps.state,
                remaining: ps.remaining,
                action: self.actions[self.layout.index(ps)],
            })
            .collect();
        serde_json::to_string(&Doc { schema: 1, policy }).expect("policy serializes")
    }

    fn same_decisions(&self, other: &ProductPolicy, targets: &TargetSet) -> bool {
        canonical_states(self.layout, targets)
            .filter(|ps| ps.remaining != 0)
            .all(|ps| {
                let i = self.layout.index(ps);
                self.actions[i] == other.actions[i]
            })
    }

    fn decision_key(&self, targets: &TargetSet) -> Vec<usize> {
        canonical_states(self.layout, targets)
            .filter(|ps| ps.remaining != 0)
            .map(|ps| self.actions[self.layout.index(ps)])
            .collect()
    }
}

fn canonical_states(layout: Layout, targets: &TargetSet) -> impl Iterator<Item = ProductState> + '_ {
    (0..(1u64 << layout.n_targets)).flat_map(move |mask| {
        (0..layout.n_states)
            .filter(move |&s| targets.index_of(s).is_none_or(|i| mask >> i & 1 == 0))
            .map(move |s| ProductState::new(s, mask))
    })
}

fn layout_for(mdp: &Mdp, targets: &TargetSet, cap: usize) -> Result<Layout> {
    targets.check(mdp)?;
    if targets.len() > cap.min(62) {
        return Err(Error::CapExceeded {
            what: "target count",
            size: targets.len(),
            cap: cap.min(62),
        });
    }
    Ok(Layout {
        n_states: mdp.n_states(),
        n_targets: targets.len(),
    })
}

/// Solves one remaining-set level given all smaller levels.
fn solve_level<'r>(
    targets: &TargetSet,
    layout: Layout,
    values: &[f64],
    mask: u64,
    row_of: &(dyn Fn(usize, u64) -> &'r Row + Sync),
) -> Result<Vec<f64>> {
    let n = layout.n_states;
    let mut out = vec![f64::NAN; n];
    if mask == 0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return Ok(out);
    }
    let in_level = |s: usize| targets.index_of(s).is_none_or(|i| mask >> i & 1 == 0);
    let lower = |t: usize| -> Option<f64> {
        let i = targets.index_of(t)?;
        (mask >> i & 1 == 1).then(|| values[((mask & !(1 << i)) as usize) * n + t])
    };

    // exits: transitions into an unvisited target, valued by the smaller level
    let mut known = vec![0.0; n];
    let mut bad = vec![false; n];
    let mut exits = vec![false; n];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in (0..n).filter(|&s| in_level(s)) {
        for &(t, p) in row_of(s, mask) {
            match lower(t) {
                Some(v) if v.is_finite() => {
                    known[s] += p * v;
                    exits[s] = true;
                }
                Some(_) => bad[s] = true,
                None => pred[t].push(s),
            }
        }
    }
    // finite iff some exit is reachable and no infinite state is
    let mut can_exit = exits.clone();
    let mut stack: Vec<usize> = (0..n).filter(|&s| exits[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !can_exit[s] {
                can_exit[s] = true;
                stack.push(s);
            }
        }
    }
    let mut infinite: Vec<bool> = (0..n).map(|s| in_level(s) && (bad[s] || !can_exit[s])).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&s| infinite[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !infinite[s] {
                infinite[s] = true;
                stack.push(s);
            }
        }
    }

    let active: Vec<usize> = (0..n).filter(|&s| in_level(s) && !infinite[s]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in active.iter().enumerate() {
        local[s] = i;
    }
    let mut system = SparseSystem::with_capacity(active.len());
    for &s in &active {
        let coeffs = row_of(s, mask)
            .iter()
            .filter(|&&(t, _)| in_level(t))
            .map(|&(t, p)| (local[t], p))
            .collect();
        system.push(coeffs, 1.0 + known[s]);
    }
    let solved = solve_fixed_point(&system)?;
    for s in (0..n).filter(|&s| in_level(s)) {
        out[s] = if infinite[s] { f64::INFINITY } else { solved[local[s]] };
    }
    Ok(out)
}

fn evaluate_rows<'r>(
    targets: &TargetSet,
    layout: Layout,
    row_of: &(dyn Fn(usize, u64) -> &'r Row + Sync),
) -> Result<CoverValueTable> {
    let n = layout.n_states;
    let mut values = vec![f64::NAN; layout.len()];
    for level in layout.masks_by_size() {
        let solved: Vec<(u64, Vec<f64>)> = level
            .par_iter()
            .map(|&mask| solve_level(targets, layout, &values, mask, row_of).map(|v| (mask, v)))
            .collect::<Result<_>>()?;
        for (mask, v) in solved {
            values[(mask as usize) * n..(mask as usize + 1) * n].copy_from_slice(&v);
        }
    }
    Ok(CoverValueTable { layout, values })
}

/// Expected cover time of every canonical product state under `policy`.
/// Fails with `InfiniteCoverTime` when the mission from `start` never completes.
pub fn evaluate_policy(
    mdp: &Mdp,
    targets: &TargetSet,
    policy: &ProductPolicy,
    start: ProductState,
) -> Result<CoverValueTable> {
    let layout = layout_for(mdp, targets, usize::MAX)?;
    if policy.layout != layout {
        return Err(Error::Malformed("policy built for a different product space".into()));
    }
    let table = evaluate_deterministic(mdp, targets, policy)?;
    let start = start.canonical(targets);
    if !table.raw(start).is_finite() {
        return Err(Error::InfiniteCoverTime {
            state: start.state,
            remaining: start.remaining,
        });
    }
    Ok(table)
}

fn evaluate_deterministic(
    mdp: &Mdp,
    targets: &TargetSet,
    policy: &ProductPolicy,
) -> Result<CoverValueTable> {
    let layout = policy.layout;
    let row_of = |s: usize, mask: u64| -> &Row {
        mdp.row(s, policy.actions[layout.index(ProductState::new(s, mask))])
    };
    evaluate_rows(targets, layout, &row_of)
}

fn evaluate_uniform(mdp: &Mdp, targets: &TargetSet, layout: Layout) -> Result<CoverValueTable> {
    let mixed: Vec<Vec<(usize, f64)>> = (0..mdp.n_states()).map(|s| mdp.uniform_mixture_row(s)).collect();
    let row_of = |s: usize, _mask: u64| -> &Row { &mixed[s] };
    evaluate_rows(targets, layout, &row_of)
}

/// Greedy policy with respect to `table`: minimizes `1 + sum_s' T E[C](s')`,
/// lowest action index among ties.
pub fn greedy_improve(mdp: &Mdp, targets: &TargetSet, table: &CoverValueTable) -> ProductPolicy {
    let layout = table.layout;
    let n = layout.n_states;
    let mut actions = vec![0usize; layout.len()];
    actions
        .par_chunks_mut(n)
        .enumerate()
        .filter(|(mask, _)| *mask != 0)
        .for_each(|(mask, chunk)| {
            let mask = mask as u64;
            for (s, slot) in chunk.iter_mut().enumerate() {
                if targets.index_of(s).is_some_and(|i| mask >> i & 1 == 1) {
                    continue;
                }
                let q: Vec<f64> = (0..mdp.n_actions())
                    .map(|a| {
                        1.0 + mdp
                            .row(s, a)
                            .iter()
                            .map(|&(t, p)| p * table.value(targets, ProductState::new(t, mask)))
                            .sum::<f64>()
                    })
                    .collect();
                *slot = lowest_near_min(&q);
            }
        });
    ProductPolicy { layout, actions }
}

/// Index of the first entry within tolerance of the minimum.
pub(crate) fn lowest_near_min(q: &[f64]) -> usize {
    let best = q.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return 0;
    }
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    q.iter().position(|&v| v <= best + tol).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct ProductSolver {
    pub target_cap: usize,
    pub max_iterations: usize,
    /// Keep every evaluated table (the uniform-random one first).
    pub record_history: bool,
}

impl Default for ProductSolver {
    fn default() -> Self {
        ProductSolver {
            target_cap: DEFAULT_TARGET_CAP,
            max_iterations: 10_000,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProductSolution {
    pub policy: ProductPolicy,
    pub table: CoverValueTable,
    pub start: ProductState,
    /// Number of deterministic policies evaluated.
    pub iterations: usize,
    pub history: Vec<CoverValueTable>,
}

impl ProductSolution {
    pub fn expected_cover_time(&self, targets: &TargetSet) -> f64 {
        self.table.value(targets, self.start)
    }
}

impl ProductSolver {
    /// Policy iteration from the uniform-random proper policy.
    pub fn solve(&self, mdp: &Mdp, targets: &TargetSet, start: usize) -> Result<ProductSolution> {
        let layout = layout_for(mdp, targets, self.target_cap)?;
        if start >= mdp.n_states() {
            return Err(Error::InvalidTargets(format!("start {start} out of range")));
        }
        if !mdp.exists_irreducible_policy() {
            return Err(Error::AssumptionViolated);
        }
        let mut history = Vec::new();
        let mut table = evaluate_uniform(mdp, targets, layout)?;
        if table.values.iter().any(|v| v.is_infinite()) {
            return Err(Error::AssumptionViolated);
        }
        let mut policy = greedy_improve(mdp, targets, &table);
        if self.record_history {
            history.push(table.clone());
        }
        let mut seen = HashSet::new();
        seen.insert(policy.decision_key(targets));
        let mut iterations = 0;
        loop {
            if iterations >= self.max_iterations {
                return Err(Error::NonConvergence { sweeps: iterations });
            }
            table = evaluate_deterministic(mdp, targets, &policy)?;
            iterations += 1;
            if self.record_history {
                history.push(table.clone());
            }
            let next = greedy_improve(mdp, targets, &table);
            if next.same_decisions(&policy, targets) {
                break;
            }
            if !seen.insert(next.decision_key(targets)) {
                // a repeat means ties are flip-flopping at round-off level
                return Err(Error::NonConvergence { sweeps: iterations });
            }
            policy = next;
        }
        Ok(ProductSolution {
            policy,
            table,
            start: ProductState::start(targets, start),
            iterations,
            history,
        })
    }
}

/// Optimal product policy and its value table, with default settings.
pub fn optimal_policy_iteration(
    mdp: &Mdp,
    targets: &TargetSet,
    start: usize,
) -> Result<(ProductPolicy, CoverValueTable)> {
    let sol = ProductSolver::default().solve(mdp, targets, start)?;
    Ok((sol.policy, sol.table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{complete_graph, path_graph};
    use crate::mdp::StationaryPolicy;

    fn go_right(n: usize) -> (Mdp, StationaryPolicy) {
        let g = path_graph(n);
        // neighbor order is sorted, so the right neighbor is the last action that moves
        let actions = (0..n)
            .map(|s| {
                (0..g.n_actions())
                    .find(|&a| g.row(s, a)[0].0 == (s + 1).min(n - 1))
                    .unwrap()
            })
            .collect();
        (g, StationaryPolicy::new(actions))
    }

    #[test]
    fn transition_examples() {
        let m = Mdp::new(
            3,
            1,
            vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap();
        let t = TargetSet::new(vec![1, 2], 3).unwrap();
        let out = product_transition(&m, &t, ProductState::new(0, 0b11), 0);
        assert_eq!(out, vec![(ProductState::new(1, 0b10), 1.0)]);
        let out = product_transition(&m, &t, ProductState::new(0, 0), 0);
        assert!(out.iter().all(|(ps, _)| ps.remaining == 0));

        let split = Mdp::new(
            3,
            1,
            vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]],
        )
        .unwrap();
        let out = product_transition(&split, &t, ProductState::new(0, 0b10), 0);
        assert_eq!(
            out,
            vec![
                (ProductState::new(1, 0b10), 0.5),
                (ProductState::new(2, 0), 0.5)
            ]
        );
    }

    #[test]
    fn evaluate_examples() {
        let (g, pol) = go_right(3);
        let t = TargetSet::new(vec![1, 2], 3).unwrap();
        let p = ProductPolicy::from_stationary(&g, &t, &pol).unwrap();
        let start = ProductState::start(&t, 0);
        let table = evaluate_policy(&g, &t, &p, start).unwrap();
        assert_eq!(table.value(&t, start), 2.0);
        assert_eq!(table.value(&t, ProductState::new(1, 0)), 0.0);

        let coin = Mdp::new(2, 1, vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]]).unwrap();
        let t1 = TargetSet::new(vec![1], 2).unwrap();
        let p = ProductPolicy::from_fn(&coin, &t1, |_| 0).unwrap();
        let table = evaluate_policy(&coin, &t1, &p, ProductState::start(&t1, 0)).unwrap();
        assert!((table.cover_time_from(&t1, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn base_cases_are_zero() {
        let g = complete_graph(4);
        let t = TargetSet::new(vec![1, 3], 4).unwrap();
        let (_, table) = optimal_policy_iteration(&g, &t, 0).unwrap();
        for s in 0..4 {
            assert_eq!(table.value(&t, ProductState::new(s, 0)), 0.0);
        }
        assert_eq!(table.value(&t, ProductState::new(3, 0b10)), 0.0);
        assert_eq!(table.value(&t, ProductState::new(1, 0b01)), 0.0);
    }

    #[test]
    fn infinite_cover_time_detected() {
        let (g, right) = go_right(3);
        let t = TargetSet::new(vec![0], 3).unwrap();
        let p = ProductPolicy::from_stationary(&g, &t, &right).unwrap();
        assert!(matches!(
            evaluate_policy(&g, &t, &p, ProductState::start(&t, 2)),
            Err(Error::InfiniteCoverTime { state: 2, .. })
        ));
    }

    #[test]
    fn path_from_terminal_is_walk_length() {
        let g = path_graph(3);
        let t = TargetSet::all(3);
        let (_, table) = optimal_policy_iteration(&g, &t, 0).unwrap();
        assert_eq!(table.cover_time_from(&t, 0), 2.0);
    }

    #[test]
    fn greedy_picks_sure_target_and_breaks_ties_low() {
        // action 0 reaches the target surely, action 1 only half the time
        let m = Mdp::new(
            2,
            2,
            vec![
                vec![(1, 1.0)],
                vec![(0, 0.5), (1, 0.5)],
                vec![(0, 1.0)],
                vec![(0, 1.0)],
            ],
        )
        .unwrap();
        let t = TargetSet::new(vec![1], 2).unwrap();
        let (policy, _) = optimal_policy_iteration(&m, &t, 0).unwrap();
        assert_eq!(policy.action(&t, ProductState::new(0, 1)), 0);

        // both actions identical: lowest index wins
        let twin = Mdp::new(
            2,
            2,
            vec![vec![(1, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap();
        let (policy, _) = optimal_policy_iteration(&twin, &t, 0).unwrap();
        assert_eq!(policy.action(&t, ProductState::new(0, 1)), 0);
    }

    #[test]
    fn converged_table_is_fixed_point() {
        let g = crate::environments::random_mdp(5, 2, 11, crate::environments::RowMode::Simplex);
        let t = TargetSet::new(vec![1, 3, 4], 5).unwrap();
        let (policy, table) = optimal_policy_iteration(&g, &t, 0).unwrap();
        assert_eq!(greedy_improve(&g, &t, &table), policy);
    }

    #[test]
    fn cap_and_assumption_errors() {
        let g = complete_graph(16);
        let t = TargetSet::all(16);
        assert!(matches!(
            optimal_policy_iteration(&g, &t, 0),
            Err(Error::CapExceeded { .. })
        ));
        let trap = Mdp::new(2, 1, vec![vec![(1, 1.0)], vec![(1, 1.0)]]).unwrap();
        let t = TargetSet::new(vec![1], 2).unwrap();
        assert_eq!(
            optimal_policy_iteration(&trap, &t, 0).unwrap_err(),
            Error::AssumptionViolated
        );
    }

    #[test]
    fn json_emits_schema_and_null_for_infinity() {
        let g = path_graph(3);
        let t = TargetSet::new(vec![2], 3).unwrap();
        let (policy, table) = optimal_policy_iteration(&g, &t, 0).unwrap();
        let text = table.to_json(&t);
        assert!(text.starts_with("{\"schema\":1,\"values\":["));
        assert!(text.contains("{\"state\":0,\"remaining\":1,\"value\":2.0}"));
        let text = policy.to_json(&t);
        assert!(text.starts_with("{\"schema\":1,\"policy\":["));
    }
}

//! Finite MDP model, stationary policies, target sets, and fixed-policy
//! analysis of the induced Markov chain.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_fixed_point, SparseSystem};

/// Absolute tolerance on transition row sums. Rows are never renormalized.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Sparse transition row: `(successor, probability)` pairs sorted by successor.
pub type Row = [(usize, f64)];

/// Grid dimensions carried by gridworld instances, row-major `state = y * width + x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
}

impl GridShape {
    pub fn coords(&self, state: usize) -> (usize, usize) {
        (state % self.width, state / self.width)
    }

    pub fn state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// A finite MDP `(S, A, T)` with sparse transition rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<(usize, f64)>>,
    labels: Option<Vec<String>>,
    grid: Option<GridShape>,
}

impl Mdp {
    /// Builds a validated MDP. `rows[s * n_actions + a]` is the transition row of
    /// `(s, a)`. Duplicate successors are merged and zero entries dropped.
    pub fn new(n_states: usize, n_actions: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Malformed(format!(
                "need at least one state and one action, got {n_states} x {n_actions}"
            )));
        }
        if rows.len() != n_states * n_actions {
            return Err(Error::Malformed(format!(
                "expected {} transition rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        let rows = rows.into_iter().map(normalize_row).collect();
        let mdp = Mdp {
            n_states,
            n_actions,
            rows,
            labels: None,
            grid: None,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_states {
            return Err(Error::Malformed(format!(
                "{} labels for {} states",
                labels.len(),
                self.n_states
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_grid(mut self, grid: GridShape) -> Result<Self> {
        if grid.width * grid.height != self.n_states {
            return Err(Error::Malformed(format!(
                "grid {}x{} does not match {} states",
                grid.width, grid.height, self.n_states
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    /// Checks that every row is a probability distribution over valid states.
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut sum = 0.0;
                for &(to, p) in self.row(s, a) {
                    if to >= self.n_states {
                        return Err(Error::Index {
                            state: s,
                            action: a,
                            index: to,
                            n_states: self.n_states,
                        });
                    }
                    if !p.is_finite() || !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(&p) {
                        return Err(Error::Probability {
                            state: s,
                            action: a,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::RowSum {
                        state: s,
                        action: a,
                        sum,
                        excess: sum - 1.0,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize, action: usize) -> &Row {
        &self.rows[state * self.n_actions + action]
    }

    pub fn prob(&self, state: usize, action: usize, to: usize) -> f64 {
        let row = self.row(state, action);
        row.binary_search_by_key(&to, |&(s, _)| s)
            .map(|i| row[i].1)
            .unwrap_or(0.0)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn grid(&self) -> Option<GridShape> {
        self.grid
    }

    /// True when every transition probability is 0 or 1 (a graph).
    pub fn is_deterministic(&self) -> bool {
        self.rows
            .iter()
            .all(|row| row.len() == 1 && (row[0].1 - 1.0).abs() <= ROW_SUM_TOLERANCE)
    }

    /// Row of the chain induced by choosing every action uniformly at random.
    pub fn uniform_mixture_row(&self, state: usize) -> Vec<(usize, f64)> {
        let w = 1.0 / self.n_actions as f64;
        let mut acc = Vec::new();
        for a in 0..self.n_actions {
            acc.extend(self.row(state, a).iter().map(|&(to, p)| (to, p * w)));
        }
        normalize_row(acc)
    }

    /// Successor support of `state` over all actions, sorted and deduplicated.
    pub fn successors(&self, state: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.n_actions)
            .flat_map(|a| self.row(state, a).iter().map(|&(to, _)| to))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Row of the chain induced by `policy`.
    pub fn induced_chain(&self, policy: &StationaryPolicy) -> Result<DMatrix<f64>> {
        policy.check(self)?;
        let mut m = DMatrix::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for &(to, p) in self.row(s, policy.action(s)) {
                m[(s, to)] = p;
            }
        }
        Ok(m)
    }

    /// Whether some stationary policy induces an irreducible chain, decided by
    /// strong connectivity of the union support graph over all actions.
    pub fn exists_irreducible_policy(&self) -> bool {
        let forward: Vec<Vec<usize>> = (0..self.n_states).map(|s| self.successors(s)).collect();
        let mut backward = vec![Vec::new(); self.n_states];
        for (s, succ) in forward.iter().enumerate() {
            for &t in succ {
                backward[t].push(s);
            }
        }
        reaches_all(&forward, 0) && reaches_all(&backward, 0)
    }

    /// Expected hitting times of `goal` under a fixed policy. States from which
    /// the goal is unreachable in the induced chain get `f64::INFINITY`.
    pub fn expected_hitting_times_for_policy(
        &self,
        policy: &StationaryPolicy,
        goal: usize,
    ) -> Result<Vec<f64>> {
        policy.check(self)?;
        if goal >= self.n_states {
            return Err(Error::InvalidTargets(format!("goal {goal} out of range")));
        }
        let rows: Vec<&Row> = (0..self.n_states)
            .map(|s| self.row(s, policy.action(s)))
            .collect();
        hitting_times_on_chain(&rows, goal)
    }
}

/// Expected hitting times of `goal` on a chain given by sparse rows.
pub(crate) fn hitting_times_on_chain(rows: &[&Row], goal: usize) -> Result<Vec<f64>> {
    let n = rows.len();
    // states that can reach the goal with positive probability
    let mut pred = vec![Vec::new(); n];
    for (s, row) in rows.iter().enumerate() {
        for &(to, p) in row.iter() {
            if p > 0.0 {
                pred[to].push(s);
            }
        }
    }
    let can_reach = reachable_from(&pred, goal);
    // a state is finite iff it cannot wander into a state that never reaches the goal
    let mut bad: Vec<bool> = can_reach.iter().map(|&r| !r).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| bad[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &pred[t] {
            if !bad[s] && s != goal {
                bad[s] = true;
                queue.push_back(s);
            }
        }
    }
    let active: Vec<usize> = (0..n).filter(|&s| s != goal && !bad[s]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in active.iter().enumerate() {
        local[s] = i;
    }
    let mut system = SparseSystem::with_capacity(active.len());
    for &s in &active {
        let coeffs = rows[s]
            .iter()
            .filter(|&&(to, _)| to != goal)
            .map(|&(to, p)| (local[to], p))
            .collect();
        system.push(coeffs, 1.0);
    }
    let solved = solve_fixed_point(&system)?;
    let mut h = vec![f64::INFINITY; n];
    h[goal] = 0.0;
    for (i, &s) in active.iter().enumerate() {
        h[s] = solved[i];
    }
    Ok(h)
}

fn reachable_from(adj: &[Vec<usize>], root: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(s) = queue.pop_front() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

fn reaches_all(adj: &[Vec<usize>], root: usize) -> bool {
    reachable_from(adj, root).into_iter().all(|x| x)
}

fn normalize_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.retain(|&(_, p)| p != 0.0);
    row.sort_by_key(|&(to, _)| to);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (to, p) in row {
        match out.last_mut() {
            Some(last) if last.0 == to => last.1 += p,
            _ => out.push((to, p)),
        }
    }
    out
}

/// Deterministic stationary policy `S -> A`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    action_of: Vec<usize>,
}

impl StationaryPolicy {
    pub fn new(action_of: Vec<usize>) -> Self {
        StationaryPolicy { action_of }
    }

    pub fn constant(n_states: usize, action: usize) -> Self {
        StationaryPolicy {
            action_of: vec![action; n_states],
        }
    }

    pub fn action(&self, state: usize) -> usize {
        self.action_of[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.action_of
    }

    pub fn check(&self, mdp: &Mdp) -> Result<()> {
        if self.action_of.len() != mdp.n_states() {
            return Err(Error::Malformed(format!(
                "policy covers {} states, model has {}",
                self.action_of.len(),
                mdp.n_states()
            )));
        }
        for (s, &a) in self.action_of.iter().enumerate() {
            if a >= mdp.n_actions() {
                return Err(Error::InvalidPolicy {
                    state: s,
                    action: a,
                    n_actions: mdp.n_actions(),
                });
            }
        }
        Ok(())
    }
}

/// Ordered set of target states; position `i` is bit `i` of a remaining-set mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    members: Vec<usize>,
    index_of: Vec<Option<usize>>,
}

impl TargetSet {
    pub fn new(members: Vec<usize>, n_states: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidTargets("target set is empty".into()));
        }
        let mut index_of = vec![None; n_states];
        for (i, &s) in members.iter().enumerate() {
            if s >= n_states {
                return Err(Error::InvalidTargets(format!(
                    "target {s} out of range for {n_states} states"
                )));
            }
            if index_of[s].is_some() {
                return Err(Error::InvalidTargets(format!("target {s} listed twice")));
            }
            index_of[s] = Some(i);
        }
        Ok(TargetSet { members, index_of })
    }

    pub fn all(n_states: usize) -> Self {
        TargetSet {
            members: (0..n_states).collect(),
            index_of: (0..n_states).map(Some).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.index_of.len()
    }

    pub fn index_of(&self, state: usize) -> Option<usize> {
        self.index_of.get(state).copied().flatten()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.index_of(state).is_some()
    }

    /// Mask with every target bit set.
    pub fn full_mask(&self) -> u64 {
        if self.members.len() >= 64 {
            u64::MAX
        } else {
            (1u64 << self.members.len()) - 1
        }
    }

    /// Mask of the given states (each must be a target).
    pub fn mask_of(&self, states: &[usize]) -> Result<u64> {
        states.iter().try_fold(0u64, |acc, &s| {
            self.index_of(s)
                .map(|i| acc | (1 << i))
                .ok_or_else(|| Error::InvalidTargets(format!("state {s} is not a target")))
        })
    }

    /// Target states whose bits are set in `mask`.
    pub fn states_in(&self, mask: u64) -> Vec<usize> {
        self.members
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask >> i & 1 == 1)
            .map(|(_, &s)| s)
            .collect()
    }

    /// Remaining set at the start of a mission: all targets except the start state.
    pub fn initial_mask(&self, start: usize) -> u64 {
        match self.index_of(start) {
            Some(i) => self.full_mask() & !(1 << i),
            None => self.full_mask(),
        }
    }

    pub fn check(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states() != mdp.n_states() {
            return Err(Error::InvalidTargets(format!(
                "target set built for {} states, model has {}",
                self.n_states(),
                mdp.n_states()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TransitionDoc {
    s: usize,
    a: usize,
    to: Vec<usize>,
    p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MdpDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<u32>,
    n_states: usize,
    n_actions: usize,
    transitions: Vec<TransitionDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
}

impl Mdp {
    pub fn to_json(&self) -> String {
        let transitions = (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| {
                let row = self.row(s, a);
                TransitionDoc {
                    s,
                    a,
                    to: row.iter().map(|&(t, _)| t).collect(),
                    p: row.iter().map(|&(_, p)| p).collect(),
                }
            })
            .collect();
        let doc = MdpDoc {
            schema: Some(1),
            n_states: self.n_states,
            n_actions: self.n_actions,
            transitions,
            labels: self.labels.clone(),
            width: self.grid.map(|g| g.width),
            height: self.grid.map(|g| g.height),
        };
        serde_json::to_string(&doc).expect("model serializes")
    }

    /// Parses the instance format; every `(s, a)` pair must appear exactly once.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDoc = serde_json::from_str(text)?;
        if doc.n_states == 0 || doc.n_actions == 0 {
            return Err(Error::Malformed("empty state or action space".into()));
        }
        let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; doc.n_states * doc.n_actions];
        for t in doc.transitions {
            if t.s >= doc.n_states || t.a >= doc.n_actions {
                return Err(Error::Malformed(format!(
                    "transition for (s={}, a={}) outside the model",
                    t.s, t.a
                )));
            }
            if t.to.len() != t.p.len() {
                return Err(Error::Malformed(format!(
                    "row (s={}, a={}) has {} successors and {} probabilities",
                    t.s,
                    t.a,
                    t.to.len(),
                    t.p.len()
                )));
            }
            let slot = &mut rows[t.s * doc.n_actions + t.a];
            if slot.is_some() {
                return Err(Error::Malformed(format!("row (s={}, a={}) given twice", t.s, t.a)));
            }
            *slot = Some(t.to.into_iter().zip(t.p).collect());
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| {
                    Error::Malformed(format!(
                        "missing row (s={}, a={})",
                        i / doc.n_actions,
                        i % doc.n_actions
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut mdp = Mdp::new(doc.n_states, doc.n_actions, rows)?;
        if let Some(labels) = doc.labels {
            mdp = mdp.with_labels(labels)?;
        }
        match (doc.width, doc.height) {
            (Some(width), Some(height)) => mdp.with_grid(GridShape { width, height }),
            (None, None) => Ok(mdp),
            _ => Err(Error::Malformed("width and height must be given together".into())),
        }
    }
}

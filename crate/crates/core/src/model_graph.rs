//! Complete weighted digraph of optimal expected hitting times.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::Mdp;

pub const VALUE_ITERATION_TOLERANCE: f64 = 1e-10;
pub const VALUE_ITERATION_SWEEP_CAP: usize = 1_000_000;
/// Above this many states only the columns needed for partitioning are built.
pub const DENSE_STATE_LIMIT: usize = 4_096;

/// `w(s1, s2)`: minimum over policies of the expected time to reach `s2` from `s1`.
///
/// Stored column-wise: one column per goal state that was solved. Dense graphs
/// have a column for every state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    n_states: usize,
    column_of: Vec<Option<usize>>,
    columns: Vec<Vec<f64>>,
}

impl ModelGraph {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn is_dense(&self) -> bool {
        self.columns.len() == self.n_states
    }

    /// Panics if `to` was not among the solved goals.
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        let col = self.column_of[to].unwrap_or_else(|| panic!("no column for goal state {to}"));
        self.columns[col][from]
    }

    pub fn has_goal(&self, to: usize) -> bool {
        self.column_of.get(to).is_some_and(|c| c.is_some())
    }

    /// Builds a graph from explicit weights (row-major), for tests and fixtures.
    pub fn from_dense(n_states: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != n_states * n_states {
            return Err(Error::Malformed(format!(
                "{} weights for {n_states} states",
                weights.len()
            )));
        }
        let columns = (0..n_states)
            .map(|to| (0..n_states).map(|from| weights[from * n_states + to]).collect())
            .collect();
        Ok(ModelGraph {
            n_states,
            column_of: (0..n_states).map(Some).collect(),
            columns,
        })
    }

    /// Row-major CSV with a header of state labels (or indices).
    pub fn write_csv<W: Write>(&self, out: &mut W, labels: Option<&[String]>) -> std::io::Result<()> {
        let goals: Vec<usize> = (0..self.n_states).filter(|&s| self.has_goal(s)).collect();
        let name = |s: usize| labels.map_or_else(|| s.to_string(), |l| l[s].clone());
        let header: Vec<String> = std::iter::once("from".to_string())
            .chain(goals.iter().map(|&g| name(g)))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for from in 0..self.n_states {
            let mut line = name(from);
            for &g in &goals {
                line.push(',');
                line.push_str(&self.weight(from, g).to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Full model graph; falls back to goals `{s0} ∪ targets` above [`DENSE_STATE_LIMIT`]
/// only through [`build_model_graph_for`].
pub fn build_model_graph(mdp: &Mdp) -> Result<ModelGraph> {
    let goals: Vec<usize> = (0..mdp.n_states()).collect();
    build_columns(mdp, &goals)
}

/// Model graph restricted to what partitioning needs when the model is large.
pub fn build_model_graph_for(mdp: &Mdp, start: usize, targets: &[usize]) -> Result<ModelGraph> {
    if mdp.n_states() <= DENSE_STATE_LIMIT {
        return build_model_graph(mdp);
    }
    let mut goals: Vec<usize> = std::iter::once(start).chain(targets.iter().copied()).collect();
    goals.sort_unstable();
    goals.dedup();
    build_columns(mdp, &goals)
}

fn build_columns(mdp: &Mdp, goals: &[usize]) -> Result<ModelGraph> {
    if !mdp.exists_irreducible_policy() {
        return Err(Error::AssumptionViolated);
    }
    let columns = goals
        .par_iter()
        .map(|&g| optimal_hitting_times(mdp, g))
        .collect::<Result<Vec<_>>>()?;
    let mut column_of = vec![None; mdp.n_states()];
    for (i, &g) in goals.iter().enumerate() {
        column_of[g] = Some(i);
    }
    Ok(ModelGraph {
        n_states: mdp.n_states(),
        column_of,
        columns,
    })
}

/// Single-goal stochastic shortest path by Gauss-Seidel value iteration from zero.
pub fn optimal_hitting_times(mdp: &Mdp, goal: usize) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let mut h = vec![0.0; n];
    for _ in 0..VALUE_ITERATION_SWEEP_CAP {
        let mut delta: f64 = 0.0;
        for s in (0..n).filter(|&s| s != goal) {
            let best = (0..mdp.n_actions())
                .map(|a| {
                    1.0 + mdp
                        .row(s, a)
                        .iter()
                        .map(|&(t, p)| p * h[t])
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            delta = delta.max((best - h[s]).abs());
            h[s] = best;
        }
        if delta < VALUE_ITERATION_TOLERANCE {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence {
        sweeps: VALUE_ITERATION_SWEEP_CAP,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{complete_graph, path_graph};

    #[test]
    fn complete_graph_weights_are_one() {
        let g = build_model_graph(&complete_graph(5)).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                assert_eq!(g.weight(a, b), if a == b { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn path_weights_are_distances() {
        let g = build_model_graph(&path_graph(3)).unwrap();
        assert_eq!(g.weight(0, 2), 2.0);
        assert_eq!(g.weight(2, 0), 2.0);
        assert_eq!(g.weight(0, 1), 1.0);
    }

    #[test]
    fn geometric_switch_time() {
        // action 0 switches w.p. 0.25, action 1 w.p. 0.1
        let m = Mdp::new(
            2,
            2,
            vec![
                vec![(0, 0.75), (1, 0.25)],
                vec![(0, 0.9), (1, 0.1)],
                vec![(0, 0.25), (1, 0.75)],
                vec![(0, 0.1), (1, 0.9)],
            ],
        )
        .unwrap();
        let g = build_model_graph(&m).unwrap();
        assert!((g.weight(0, 1) - 4.0).abs() < 1e-8);
        assert!((g.weight(1, 0) - 4.0).abs() < 1e-8);
    }

    #[test]
    fn csv_export() {
        let g = build_model_graph(&path_graph(3)).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "from,0,1,2\n0,0,1,2\n1,1,0,1\n2,2,1,0\n");
    }

    #[test]
    fn reducible_model_rejected() {
        let trap = Mdp::new(2, 1, vec![vec![(1, 1.0)], vec![(1, 1.0)]]).unwrap();
        assert_eq!(build_model_graph(&trap).unwrap_err(), Error::AssumptionViolated);
    }
}

//! Seeded instance generators: graphs, random MDPs, stochastic gridworlds and
//! clustered target layouts.
//!
//! Graphs become deterministic MDPs: action `k` at a vertex moves to its `k`-th
//! neighbor in sorted order, and vertices with fewer neighbors than the maximum
//! degree pad the remaining actions with self-loops.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{GridShape, Mdp, TargetSet};
use crate::model_graph::build_model_graph;
use crate::partition::ClusterSpec;

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Undirected graph as a deterministic MDP.
pub fn graph_mdp(n: usize, edges: &[(usize, usize)]) -> Result<Mdp> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Malformed(format!("edge ({a}, {b}) outside {n} vertices")));
        }
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let n_actions = adj.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let rows = adj
        .iter()
        .enumerate()
        .flat_map(|(s, list)| {
            (0..n_actions).map(move |k| vec![(list.get(k).copied().unwrap_or(s), 1.0)])
        })
        .collect();
    Mdp::new(n, n_actions, rows)
}

pub fn path_graph(n: usize) -> Mdp {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    graph_mdp(n, &edges).expect("path graph is valid")
}

pub fn cycle_graph(n: usize) -> Mdp {
    let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    if n > 2 {
        edges.push((n - 1, 0));
    }
    graph_mdp(n, &edges).expect("cycle graph is valid")
}

pub fn complete_graph(n: usize) -> Mdp {
    let edges: Vec<_> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    graph_mdp(n, &edges).expect("complete graph is valid")
}

/// Edges of a random connected graph: a random spanning tree plus a
/// `edge_density` fraction of the remaining vertex pairs.
pub fn random_connected_edges(n: usize, edge_density: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges: Vec<(usize, usize)> = (1..n)
        .map(|i| {
            let j = rng.random_range(0..i);
            let (a, b) = (order[i], order[j]);
            (a.min(b), a.max(b))
        })
        .collect();
    let mut in_tree = vec![false; n * n];
    for &(a, b) in &edges {
        in_tree[a * n + b] = true;
    }
    let mut spare: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| !in_tree[a * n + b])
        .collect();
    spare.shuffle(&mut rng);
    let extra = (edge_density.clamp(0.0, 1.0) * spare.len() as f64).round() as usize;
    edges.extend(spare.into_iter().take(extra));
    edges.sort_unstable();
    edges
}

pub fn random_connected_graph(n: usize, edge_density: f64, seed: u64) -> Mdp {
    graph_mdp(n, &random_connected_edges(n, edge_density, seed)).expect("generated graph is valid")
}

/// How rows of [`random_mdp`] are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowMode {
    /// Uniform on the probability simplex (Dirichlet(1)), full support.
    Simplex,
    /// Every successor gets exactly `1 / n_states`.
    Literal,
}

pub fn random_mdp(n_states: usize, n_actions: usize, seed: u64, mode: RowMode) -> Mdp {
    let mut rng = rng_from(seed);
    let uniform = 1.0 / n_states as f64;
    let rows = (0..n_states * n_actions)
        .map(|_| match mode {
            RowMode::Literal => (0..n_states).map(|t| (t, uniform)).collect(),
            RowMode::Simplex => {
                let draws: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                draws
                    .into_iter()
                    .enumerate()
                    .map(|(t, x)| (t, x / total))
                    .collect()
            }
        })
        .collect();
    Mdp::new(n_states, n_actions, rows).expect("random rows are distributions")
}

/// Stochastic gridworld with four compass actions pushed around by a smooth
/// random current field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Temperature on the intended-move bonus; 0 gives deterministic moves.
    pub noise_scale: f64,
    /// RMS strength of each current component, in logit units.
    pub drift_scale: f64,
}

impl GridConfig {
    pub fn new(width: usize, height: usize, seed: u64, noise_scale: f64) -> Self {
        GridConfig {
            width,
            height,
            seed,
            noise_scale,
            drift_scale: 0.5,
        }
    }
}

/// Action order: north, west, south, east. North decreases `y`.
pub const GRID_MOVES: [(isize, isize); 4] = [(0, -1), (-1, 0), (0, 1), (1, 0)];

pub fn ocean_gridworld(cfg: &GridConfig) -> Result<Mdp> {
    let (w, h) = (cfg.width, cfg.height);
    if w < 2 || h < 2 {
        return Err(Error::Malformed(format!("grid {w}x{h} is smaller than 2x2")));
    }
    let field = current_field(cfg);
    let shape = GridShape { width: w, height: h };
    let mut rows = Vec::with_capacity(w * h * 4);
    for s in 0..w * h {
        let (x, y) = shape.coords(s);
        let moves: Vec<(usize, usize)> = GRID_MOVES
            .iter()
            .enumerate()
            .filter_map(|(j, &(dx, dy))| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
                    .then(|| (j, shape.state(nx as usize, ny as usize)))
            })
            .collect();
        let (cx, cy) = field[s];
        for a in 0..4 {
            let drift: Vec<f64> = moves
                .iter()
                .map(|&(j, _)| {
                    let (dx, dy) = GRID_MOVES[j];
                    cx * dx as f64 + cy * dy as f64
                })
                .collect();
            let intended = moves.iter().position(|&(j, _)| j == a);
            let probs = move_distribution(&drift, intended, cfg.noise_scale);
            rows.push(moves.iter().zip(probs).map(|(&(_, t), p)| (t, p)).collect());
        }
    }
    Mdp::new(w * h, 4, rows)?.with_grid(shape)
}

/// Softmax over `drift + bonus / temperature`, the bonus going to the intended
/// move. At zero temperature the intended move is certain; off-grid intended
/// moves fall back to the strongest current.
fn move_distribution(drift: &[f64], intended: Option<usize>, temperature: f64) -> Vec<f64> {
    if temperature <= 0.0 {
        let pick = intended.unwrap_or_else(|| {
            (0..drift.len())
                .max_by(|&a, &b| drift[a].total_cmp(&drift[b]).then(b.cmp(&a)))
                .expect("every cell has a neighbor")
        });
        return (0..drift.len()).map(|j| if j == pick { 1.0 } else { 0.0 }).collect();
    }
    let logits: Vec<f64> = drift
        .iter()
        .enumerate()
        .map(|(j, &d)| d + if Some(j) == intended { 1.0 / temperature } else { 0.0 })
        .collect();
    let best = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - best).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Per-cell current `(cx, cy)`: isotropic Gaussian noise smoothed by a 3x3 box
/// filter, rescaled so each component has RMS `drift_scale`.
fn current_field(cfg: &GridConfig) -> Vec<(f64, f64)> {
    let (w, h) = (cfg.width, cfg.height);
    let mut rng = rng_from(cfg.seed);
    let raw: Vec<(f64, f64)> = (0..w * h)
        .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    let mut smooth = vec![(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut sx, mut sy, mut k) = (0.0, 0.0, 0.0);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let (a, b) = raw[ny * w + nx];
                    sx += a;
                    sy += b;
                    k += 1.0;
                }
            }
            smooth[y * w + x] = (sx / k, sy / k);
        }
    }
    let rms = (smooth.iter().map(|(a, b)| a * a + b * b).sum::<f64>() / (2 * w * h) as f64).sqrt();
    let scale = if rms > 0.0 { cfg.drift_scale / rms } else { 0.0 };
    smooth.into_iter().map(|(a, b)| (a * scale, b * scale)).collect()
}

/// `count` distinct random states, excluding `exclude`.
pub fn random_targets(n_states: usize, count: usize, exclude: &[usize], seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    let mut pool: Vec<usize> = (0..n_states).filter(|s| !exclude.contains(s)).collect();
    pool.shuffle(&mut rng);
    pool.truncate(count);
    pool
}

/// Which separation inequalities a clustered instance must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClusterRequirements {
    /// Clustered partition is the optimal partition.
    pub optimal: bool,
    /// Transfer/swap search recovers the clustered partition from equal-size starts.
    pub recoverable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Number of clusters (agents).
    pub m: usize,
    /// Targets per cluster.
    pub n: usize,
    /// Largest allowed hitting time between targets of one cluster (1 builds cliques).
    pub w_c_target: f64,
    /// Smallest required hitting time between targets of different clusters.
    pub w_l_target: f64,
    pub seed: u64,
    /// Each spoke is lengthened by a random 0..=jitter extra edges.
    pub length_jitter: usize,
    pub require: ClusterRequirements,
}

impl ClusterConfig {
    pub fn new(m: usize, n: usize, w_c_target: f64, w_l_target: f64, seed: u64) -> Self {
        ClusterConfig {
            m,
            n,
            w_c_target,
            w_l_target,
            seed,
            length_jitter: 2,
            require: ClusterRequirements::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteredInstance {
    pub mdp: Mdp,
    pub targets: TargetSet,
    /// Hub state all agents start from.
    pub start: usize,
    /// Target states of each cluster, sorted.
    pub clusters: Vec<Vec<usize>>,
    pub spec: ClusterSpec,
}

/// Hub-and-spoke graph: each cluster hangs off the hub at the end of a path,
/// with its targets all adjacent to a gate vertex (and to each other when
/// `w_c_target < 2`). Bands are measured on the model graph, not assumed.
pub fn clustered_instance(cfg: &ClusterConfig) -> Result<ClusteredInstance> {
    if cfg.m == 0 || cfg.n == 0 {
        return Err(Error::ConstructionFailed("need m, n >= 1".into()));
    }
    if cfg.n > 1 && cfg.w_c_target < 1.0 {
        return Err(Error::ConstructionFailed(format!(
            "intra-cluster bound {} is below one step",
            cfg.w_c_target
        )));
    }
    let clique = cfg.w_c_target < 2.0;
    let mut rng = rng_from(cfg.seed);
    let base = (((cfg.w_l_target - 2.0) / 2.0).ceil().max(1.0)) as usize;

    let mut edges = Vec::new();
    let mut next = 1usize;
    let mut clusters = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let len = base + rng.random_range(0..=cfg.length_jitter);
        let mut prev = 0usize;
        for _ in 0..len {
            edges.push((prev, next));
            prev = next;
            next += 1;
        }
        let gate = prev;
        let members: Vec<usize> = (next..next + cfg.n).collect();
        next += cfg.n;
        for &t in &members {
            edges.push((gate, t));
        }
        if clique {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    edges.push((a, b));
                }
            }
        }
        clusters.push(members);
    }
    let mdp = graph_mdp(next, &edges)?;
    let graph = build_model_graph(&mdp)?;
    let spec = ClusterSpec::measure(&graph, 0, &clusters);

    if spec.w_c > cfg.w_c_target || spec.w_l < cfg.w_l_target {
        return Err(Error::ConstructionFailed(format!(
            "realized bands w_c = {}, w_l = {} miss the targets {} / {}",
            spec.w_c, spec.w_l, cfg.w_c_target, cfg.w_l_target
        )));
    }
    if cfg.require.optimal && !spec.optimality_condition() {
        return Err(Error::ConstructionFailed(
            "clustered partition is not guaranteed optimal for these bands".into(),
        ));
    }
    if cfg.require.recoverable && !spec.recovery_condition() {
        return Err(Error::ConstructionFailed(
            "bands too tight for transfer/swap recovery".into(),
        ));
    }
    let mut order: Vec<usize> = clusters.iter().flatten().copied().collect();
    order.shuffle(&mut rng);
    let targets = TargetSet::new(order, mdp.n_states())?;
    Ok(ClusteredInstance {
        mdp,
        targets,
        start: 0,
        clusters,
        spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_families() {
        let p = path_graph(4);
        assert_eq!(p.n_actions(), 2);
        assert_eq!(p.row(0, 0), &[(1, 1.0)]);
        assert_eq!(p.row(0, 1), &[(0, 1.0)]); // padding self-loop
        let c = cycle_graph(5);
        assert_eq!(c.successors(0), vec![1, 4]);
        let k = complete_graph(4);
        assert_eq!(k.n_actions(), 3);
        assert!(p.is_deterministic() && c.is_deterministic() && k.is_deterministic());
        assert!(p.exists_irreducible_policy());
    }

    #[test]
    fn density_extremes() {
        let tree = random_connected_edges(12, 0.0, 3);
        assert_eq!(tree.len(), 11);
        let full = random_connected_edges(7, 1.0, 3);
        assert_eq!(full.len(), 21);
        assert!(random_connected_graph(12, 0.0, 3).exists_irreducible_policy());
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(random_connected_edges(30, 0.2, 9), random_connected_edges(30, 0.2, 9));
        assert_ne!(random_connected_edges(30, 0.2, 9), random_connected_edges(30, 0.2, 10));
        let a = random_mdp(6, 2, 4, RowMode::Simplex).to_json();
        assert_eq!(a, random_mdp(6, 2, 4, RowMode::Simplex).to_json());
        let g = GridConfig::new(5, 4, 2, 0.3);
        assert_eq!(ocean_gridworld(&g).unwrap().to_json(), ocean_gridworld(&g).unwrap().to_json());
    }

    #[test]
    fn random_mdp_rows_sum_to_one() {
        for mode in [RowMode::Simplex, RowMode::Literal] {
            let m = random_mdp(9, 3, 1, mode);
            for s in 0..9 {
                for a in 0..3 {
                    let sum: f64 = m.row(s, a).iter().map(|&(_, p)| p).sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
            assert!(m.exists_irreducible_policy());
        }
    }

    #[test]
    fn gridworld_rows_and_limits() {
        let m = ocean_gridworld(&GridConfig::new(4, 3, 5, 0.4)).unwrap();
        assert_eq!(m.n_actions(), 4);
        assert_eq!(m.grid(), Some(GridShape { width: 4, height: 3 }));
        // corner (0,0): only east and south exist
        assert_eq!(m.successors(0), vec![1, 4]);
        let det = ocean_gridworld(&GridConfig::new(4, 3, 5, 0.0)).unwrap();
        // interior cell, intended moves win in the zero-temperature limit
        let s = 5;
        assert_eq!(det.row(s, 0), &[(1, 1.0)]);
        assert_eq!(det.row(s, 1), &[(4, 1.0)]);
        assert_eq!(det.row(s, 2), &[(9, 1.0)]);
        assert_eq!(det.row(s, 3), &[(6, 1.0)]);
        assert!(ocean_gridworld(&GridConfig::new(1, 5, 0, 0.1)).is_err());
    }

    #[test]
    fn intended_move_dominates_at_moderate_noise() {
        let m = ocean_gridworld(&GridConfig::new(6, 6, 7, 0.3)).unwrap();
        let s = 14; // interior
        let east = m.prob(s, 3, s + 1);
        assert!(east > 0.5, "intended move probability {east}");
    }

    #[test]
    fn clustered_single_cluster_is_vacuous() {
        let inst = clustered_instance(&ClusterConfig::new(1, 3, 2.0, 10.0, 0)).unwrap();
        assert_eq!(inst.clusters.len(), 1);
        assert!(inst.spec.optimality_condition());
        assert!(inst.spec.recovery_condition());
    }

    #[test]
    fn impossible_bands_fail() {
        let mut cfg = ClusterConfig::new(3, 4, 2.0, 6.0, 1);
        cfg.require.recoverable = true;
        assert!(matches!(clustered_instance(&cfg), Err(Error::ConstructionFailed(_))));
    }
}

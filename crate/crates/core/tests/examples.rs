//! End-to-end worked examples across modules, each checked against an
//! independent oracle or a known value.

use covertime::baselines::brute_force_cover_time_graph;
use covertime::environments::{
    clustered_instance, ocean_gridworld, random_connected_graph, random_targets, ClusterConfig, GridConfig,
};
use covertime::heuristic::{HeuristicConfig, GRAPH_GAMMA, MULTI_AGENT_GRID_GAMMA};
use covertime::model_graph::build_model_graph;
use covertime::partition::{
    brute_force_optimal_partition, greedy_m_center_init, partition_transfers_swaps, ClusterSpec, Partition,
};
use covertime::product::ProductSolver;
use covertime::sim::{run_batch, run_multi_agent_batch, Planner};
use covertime::{GridShape, Mdp, TargetSet};

/// Bellman value iteration on (state, remaining-targets) pairs from zero.
fn product_value_iteration(mdp: &Mdp, targets: &[usize], start: usize) -> f64 {
    let n = mdp.n_states();
    let k = targets.len();
    let bit = |s: usize| targets.iter().position(|&t| t == s);
    let mut v = vec![vec![0.0f64; n]; 1 << k];
    loop {
        let mut delta = 0.0f64;
        for mask in 1..1usize << k {
            for s in 0..n {
                let mut best = f64::INFINITY;
                for a in 0..mdp.n_actions() {
                    let q: f64 = mdp
                        .row(s, a)
                        .iter()
                        .map(|&(to, p)| {
                            let m2 = bit(to).map_or(mask, |b| mask & !(1 << b));
                            p * v[m2][to]
                        })
                        .sum();
                    best = best.min(1.0 + q);
                }
                delta = delta.max((best - v[mask][s]).abs());
                v[mask][s] = best;
            }
        }
        if delta < 1e-12 {
            break;
        }
    }
    let mut init = (1usize << k) - 1;
    if let Some(b) = bit(start) {
        init &= !(1 << b);
    }
    v[init][start]
}

fn team_optimum(mdp: &Mdp, partition: &Partition, start: usize) -> f64 {
    partition
        .parts
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| {
            let t = TargetSet::new(p.clone(), mdp.n_states()).unwrap();
            ProductSolver::default().solve(mdp, &t, start).unwrap().expected_cover_time(&t)
        })
        .fold(0.0, f64::max)
}

#[test]
fn product_solver_matches_walk_search_on_graphs() {
    for seed in 0..5 {
        let g = random_connected_graph(8, 0.3, seed);
        let t = TargetSet::all(8);
        let walk = brute_force_cover_time_graph(&g, &t, 0).unwrap().1 as f64;
        let solved = ProductSolver::default().solve(&g, &t, 0).unwrap().expected_cover_time(&t);
        assert!((walk - solved).abs() < 1e-9, "seed {seed}: {walk} vs {solved}");
    }
    let g = random_connected_graph(50, 0.1, 1001);
    let picks = random_targets(50, 11, &[], 1001 ^ 0xabc);
    let t = TargetSet::new(picks[..10].to_vec(), 50).unwrap();
    let walk = brute_force_cover_time_graph(&g, &t, picks[10]).unwrap().1 as f64;
    let solved = ProductSolver::default().solve(&g, &t, picks[10]).unwrap().expected_cover_time(&t);
    assert!((walk - solved).abs() < 1e-9, "{walk} vs {solved}");
}

#[test]
fn gridworld_optimum_matches_value_iteration() {
    let grid = ocean_gridworld(&GridConfig::new(6, 6, 7, 0.35)).unwrap();
    let members = random_targets(36, 5, &[0], 7);
    let t = TargetSet::new(members.clone(), 36).unwrap();
    let solved = ProductSolver::default().solve(&grid, &t, 0).unwrap().expected_cover_time(&t);
    let oracle = product_value_iteration(&grid, &members, 0);
    assert!((solved - oracle).abs() < 1e-8, "{solved} vs {oracle}");
}

#[test]
fn noiseless_gridworld_optimum_is_the_shortest_tour() {
    let grid = ocean_gridworld(&GridConfig::new(5, 4, 3, 0.0)).unwrap();
    let shape = GridShape { width: 5, height: 4 };
    let members = vec![shape.state(4, 0), shape.state(0, 3), shape.state(4, 3)];
    let t = TargetSet::new(members, 20).unwrap();
    let solved = ProductSolver::default().solve(&grid, &t, 0).unwrap().expected_cover_time(&t);
    // (0,0) -> (0,3) -> (4,3) -> (4,0)
    assert!((solved - 10.0).abs() < 1e-9, "{solved}");
}

#[test]
fn clustered_instance_bands_are_measured() {
    let inst = clustered_instance(&ClusterConfig::new(3, 4, 2.0, 26.0, 1)).unwrap();
    let graph = build_model_graph(&inst.mdp).unwrap();
    let measured = ClusterSpec::measure(&graph, inst.start, &inst.clusters);
    assert_eq!(measured, inst.spec);
    assert_eq!(inst.spec.w_c, 2.0);
    assert!(inst.spec.w_l >= 26.0, "{:?}", inst.spec);
}

#[test]
fn separated_clusters_are_split_by_both_stages() {
    let inst = clustered_instance(&ClusterConfig::new(2, 3, 1.0, 30.0, 4)).unwrap();
    let graph = build_model_graph(&inst.mdp).unwrap();
    let clusters = Partition::new(inst.clusters.clone());
    let init = greedy_m_center_init(&graph, inst.targets.members(), 2, inst.start).unwrap();
    assert!(init.same_sets(&clusters), "{:?}", init.parts);
    let mixed = Partition::new(vec![
        vec![inst.clusters[0][0], inst.clusters[1][0], inst.clusters[1][1]],
        vec![inst.clusters[0][1], inst.clusters[0][2], inst.clusters[1][2]],
    ]);
    let (found, _) = partition_transfers_swaps(&graph, inst.targets.members(), inst.start, &mixed).unwrap();
    assert!(found.same_sets(&clusters), "{:?}", found.parts);
}

#[test]
fn gridworld_corner_clusters_go_to_different_agents() {
    let grid = ocean_gridworld(&GridConfig::new(12, 3, 5, 0.0)).unwrap();
    let shape = GridShape { width: 12, height: 3 };
    let left = vec![shape.state(0, 0), shape.state(1, 0), shape.state(0, 1)];
    let right = vec![shape.state(11, 2), shape.state(10, 2), shape.state(11, 1)];
    let members: Vec<usize> = left.iter().chain(&right).copied().collect();
    let start = shape.state(6, 1);
    let graph = build_model_graph(&grid).unwrap();
    let init = Partition::new(vec![
        vec![left[0], right[0], right[1]],
        vec![left[1], left[2], right[2]],
    ]);
    let (found, _) = partition_transfers_swaps(&graph, &members, start, &init).unwrap();
    assert!(found.same_sets(&Partition::new(vec![left, right])), "{:?}", found.parts);
}

#[test]
fn small_graph_heuristic_partition_matches_exhaustive_optimum() {
    let g = random_connected_graph(6, 0.3, 2);
    let members: Vec<usize> = (1..6).collect();
    let t = TargetSet::new(members.clone(), 6).unwrap();
    let graph = build_model_graph(&g).unwrap();
    let init = greedy_m_center_init(&graph, &members, 2, 0).unwrap();
    let (found, _) = partition_transfers_swaps(&graph, &members, 0, &init).unwrap();
    let (_, best) = brute_force_optimal_partition(&g, &t, 2, 0).unwrap();
    let ours = team_optimum(&g, &found, 0);
    assert!((ours - best).abs() < 1e-9, "{ours} vs {best}");
}

#[test]
fn nearest_neighbor_is_slower_and_noisier_on_random_graphs() {
    let g = random_connected_graph(50, 0.1, 1000);
    let picks = random_targets(50, 11, &[], 1000 ^ 0xabc);
    let t = TargetSet::new(picks[..10].to_vec(), 50).unwrap();
    let heur = run_batch(&Planner::Heuristic(HeuristicConfig::new(GRAPH_GAMMA)), &g, &t, picks[10], 1000, 1, false)
        .unwrap();
    let nn = run_batch(&Planner::NearestNeighbor, &g, &t, picks[10], 1000, 1, false).unwrap();
    assert!(nn.mean_cover > heur.mean_cover, "{} vs {}", nn.mean_cover, heur.mean_cover);
    assert!(nn.var_cover > 0.0);
}

#[test]
fn three_agent_gridworld_mean_within_band() {
    let grid = ocean_gridworld(&GridConfig::new(8, 8, 11, 0.35)).unwrap();
    let members = random_targets(64, 6, &[0], 11);
    let t = TargetSet::new(members.clone(), 64).unwrap();
    let (best, optimum) = brute_force_optimal_partition(&grid, &t, 3, 0).unwrap();
    let graph = build_model_graph(&grid).unwrap();
    let init = greedy_m_center_init(&graph, &members, 3, 0).unwrap();
    let (found, _) = partition_transfers_swaps(&graph, &members, 0, &init).unwrap();
    let planner = Planner::Heuristic(HeuristicConfig::new(MULTI_AGENT_GRID_GAMMA));
    let stats = run_multi_agent_batch(&found, &planner, &grid, 0, 1000, 5).unwrap();
    let ratio = stats.mean_cover / optimum;
    assert!((1.0..=1.3).contains(&ratio), "ratio {ratio}, exhaustive parts {:?}", best.parts);
}

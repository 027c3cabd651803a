#![allow(dead_code)]

use std::collections::BTreeSet;

use dualarm_core::kinematics::JointConfig;
use dualarm_core::roadmap::{LatentGraph, Node, NodeSource};
use dualarm_core::vae::LatentLabel;
use rand::Rng;

/// Random latent graph: `n` nodes uniform in the unit square, each colliding
/// with probability `p_colliding`, every safe pair joined with probability
/// `p_edge`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p_edge: f64, p_colliding: f64) -> LatentGraph {
    let nodes: Vec<Node> = (0..n)
        .map(|id| Node {
            id,
            z: [rng.gen(), rng.gen()],
            label: if rng.gen_bool(p_colliding) {
                LatentLabel::Colliding
            } else {
                LatentLabel::Safe
            },
            theta_b: JointConfig::ZERO,
            source: NodeSource::Dataset,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if nodes[i].is_safe() && nodes[j].is_safe() && rng.gen_bool(p_edge) {
                edges.push((i, j));
            }
        }
    }
    LatentGraph::with_edges(nodes, edges).expect("valid random graph")
}

/// Bellman-Ford over the edge list with blacklisted and colliding nodes
/// removed. Relaxations add one edge at a time from the start, the same
/// left-to-right order in which a path weight is accumulated, so the result is
/// comparable bit for bit.
pub fn oracle_distance(g: &LatentGraph, start: usize, goal: usize, blacklist: &BTreeSet<usize>) -> Option<f64> {
    let usable = |i: usize| g.nodes[i].is_safe() && !blacklist.contains(&i);
    let mut dist = vec![f64::INFINITY; g.len()];
    dist[start] = 0.0;
    let edges = g.edges();
    for _ in 0..g.len() {
        let mut changed = false;
        for &(i, j, w) in &edges {
            if !usable(i) || !usable(j) {
                continue;
            }
            for (a, b) in [(i, j), (j, i)] {
                if dist[a] + w < dist[b] {
                    dist[b] = dist[a] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist[goal].is_finite().then_some(dist[goal])
}

/// Checks that `nodes` is a walk over existing edges avoiding `blacklist`
/// and returns its weight summed left to right.
pub fn path_weight(g: &LatentGraph, nodes: &[usize], blacklist: &BTreeSet<usize>) -> f64 {
    for &n in nodes {
        assert!(g.nodes[n].is_safe(), "path visits colliding node {n}");
        assert!(!blacklist.contains(&n), "path visits blacklisted node {n}");
    }
    nodes
        .windows(2)
        .map(|w| g.edge_weight(w[0], w[1]).unwrap_or_else(|| panic!("no edge {}-{}", w[0], w[1])))
        .fold(0.0, |acc, w| acc + w)
}

//! Roadmap over the latent plane.
//!
//! Nodes are embedded dataset samples (true labels) plus uniformly sampled
//! synthetic points labelled by the decoder. Only safe nodes carry edges;
//! edge weights are latent Euclidean distances. Blacklists are per-query
//! overlays and never mutate the graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::path::Path;

use kiddo::{KdTree, SquaredEuclidean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kinematics::{JointConfig, KinematicChain};
use crate::vae::{label_from_flag, LatentLabel, PoseVector, VaeModel, FLAG_INDEX};

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_N_SYNTHETIC: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeSource {
    Dataset,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub z: [f64; 2],
    pub label: LatentLabel,
    /// Decoded arm-2 configuration.
    pub theta_b: JointConfig,
    pub source: NodeSource,
}

impl Node {
    pub fn is_safe(&self) -> bool {
        self.label == LatentLabel::Safe
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGraph {
    pub nodes: Vec<Node>,
    adjacency: Vec<BTreeMap<usize, f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub nodes: Vec<usize>,
    pub weight: f64,
}

fn latent_distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn squared(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Undirected edges `(i, j)`, `i < j`, where `j` is among the `k` nearest of
/// `i` or vice versa. Ties at equal distance go to the smaller id.
pub fn knn_edges(nodes: &[Node], members: &[usize], k: usize) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    if members.len() < 2 || k == 0 {
        return edges;
    }
    let mut tree: KdTree<f64, 2> = KdTree::new();
    for &id in members {
        tree.add(&nodes[id].z, id as u64);
    }
    let want = k.min(members.len() - 1);
    for &i in members {
        let zi = nodes[i].z;
        let probe = tree.nearest_n::<SquaredEuclidean>(&zi, want + 1);
        let far = probe.iter().map(|n| n.distance).fold(0.0f64, f64::max);
        // `within` is strict; widen by one ulp-ish step and re-filter exactly.
        let mut cands: Vec<(f64, usize)> = tree
            .within::<SquaredEuclidean>(&zi, far.next_up() * (1.0 + 1e-12))
            .into_iter()
            .map(|n| n.item as usize)
            .filter(|&j| j != i)
            .map(|j| (squared(&zi, &nodes[j].z), j))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in cands.iter().take(want) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    id: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed for a min-heap on (dist, id).
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl LatentGraph {
    /// Graph with KNN edges (either direction) among the safe nodes.
    pub fn from_nodes(nodes: Vec<Node>, k: usize) -> Result<Self> {
        let safe: Vec<usize> = nodes.iter().filter(|n| n.is_safe()).map(|n| n.id).collect();
        let edges = knn_edges(&nodes, &safe, k);
        Self::with_edges(nodes, edges)
    }

    /// Graph with the given undirected edges; weights are latent distances.
    pub fn with_edges(nodes: Vec<Node>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::InvalidArgument(format!("node at position {i} has id {}", n.id)));
            }
            if !(n.z[0].is_finite() && n.z[1].is_finite() && n.theta_b.is_finite()) {
                return Err(Error::NonFinite("graph node"));
            }
        }
        let mut adjacency = vec![BTreeMap::new(); nodes.len()];
        for (i, j) in edges {
            if i >= nodes.len() || j >= nodes.len() {
                return Err(Error::UnknownNode(i.max(j)));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
            }
            if !nodes[i].is_safe() || !nodes[j].is_safe() {
                return Err(Error::InvalidArgument(format!("edge {i}-{j} touches a colliding node")));
            }
            let w = latent_distance(&nodes[i].z, &nodes[j].z);
            adjacency[i].insert(j, w);
            adjacency[j].insert(i, w);
        }
        Ok(LatentGraph { nodes, adjacency })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, id: usize) -> &BTreeMap<usize, f64> {
        &self.adjacency[id]
    }

    pub fn edge_weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency.get(i)?.get(&j).copied()
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.range(i + 1..).map(move |(&j, &w)| (i, j, w)))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn safe_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter(|n| n.is_safe()).map(|n| n.id)
    }

    fn node(&self, id: usize) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    fn check_endpoint(&self, id: usize, blacklist: &BTreeSet<usize>) -> Result<()> {
        if !self.node(id)?.is_safe() || blacklist.contains(&id) {
            return Err(Error::NodeNotPlannable(id));
        }
        Ok(())
    }

    /// Size of the component containing `id` once `blacklist` is removed.
    fn component_size(&self, id: usize, blacklist: &BTreeSet<usize>) -> usize {
        self.bfs(id, blacklist).len()
    }

    fn bfs(&self, start: usize, blacklist: &BTreeSet<usize>) -> Vec<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for &v in self.adjacency[u].keys() {
                if !blacklist.contains(&v) && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        out
    }

    /// Dijkstra avoiding `blacklist`. Equal tentative distances settle the
    /// smaller id first, and an equal-cost alternative predecessor replaces
    /// a larger one.
    pub fn shortest_path(&self, start: usize, goal: usize, blacklist: &BTreeSet<usize>) -> Result<PathResult> {
        self.check_endpoint(start, blacklist)?;
        self.check_endpoint(goal, blacklist)?;
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[start] = 0.0;
        heap.push(Entry { dist: 0.0, id: start });
        while let Some(Entry { dist: d, id: u }) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            if u == goal {
                break;
            }
            for (&v, &w) in &self.adjacency[u] {
                if settled[v] || blacklist.contains(&v) {
                    continue;
                }
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = u;
                    heap.push(Entry { dist: nd, id: v });
                } else if nd == dist[v] && u < pred[v] {
                    pred[v] = u;
                }
            }
        }
        if !settled[goal] {
            return Err(Error::NoPath {
                start,
                goal,
                start_component: self.component_size(start, blacklist),
                goal_component: self.component_size(goal, blacklist),
            });
        }
        let mut nodes = vec![goal];
        while let Some(&last) = nodes.last() {
            if last == start {
                break;
            }
            nodes.push(pred[last]);
        }
        nodes.reverse();
        Ok(PathResult { nodes, weight: dist[goal] })
    }

    /// Shortest path from `current` under `blacklist ∪ additions`.
    pub fn replan(
        &self,
        current: usize,
        goal: usize,
        blacklist: &BTreeSet<usize>,
        additions: &[usize],
    ) -> Result<PathResult> {
        let mut merged = blacklist.clone();
        merged.extend(additions.iter().copied());
        self.shortest_path(current, goal, &merged)
    }

    /// Safe node closest to `z`; ties go to the smaller id.
    pub fn nearest_safe_node(&self, z: &[f64; 2]) -> Result<usize> {
        let mut best: Option<(f64, usize)> = None;
        for id in self.safe_ids() {
            let d = squared(&self.nodes[id].z, z);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        best.map(|(_, id)| id).ok_or(Error::NoSafeNodes)
    }

    /// Component label per node (`None` for colliding nodes), numbered in
    /// order of each component's smallest id.
    pub fn components(&self) -> Vec<Option<usize>> {
        let mut comp = vec![None; self.nodes.len()];
        let none = BTreeSet::new();
        let mut next = 0;
        for id in self.safe_ids().collect::<Vec<_>>() {
            if comp[id].is_some() {
                continue;
            }
            for u in self.bfs(id, &none) {
                comp[u] = Some(next);
            }
            next += 1;
        }
        comp
    }

    /// Largest connected set of safe nodes; ties go to the component holding
    /// the smallest id.
    pub fn largest_component(&self) -> BTreeSet<usize> {
        let comp = self.components();
        let mut sizes: Vec<usize> = Vec::new();
        for c in comp.iter().flatten() {
            if *c >= sizes.len() {
                sizes.resize(c + 1, 0);
            }
            sizes[*c] += 1;
        }
        let Some(best) = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))) else {
            return BTreeSet::new();
        };
        comp.iter()
            .enumerate()
            .filter(|(_, c)| **c == Some(best))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            nodes: self.nodes.clone(),
            edges: self.edges().into_iter().map(|(i, j, w)| (i, j, w)).collect(),
        };
        Ok(serde_json::to_string(&file)? + "\n")
    }

    /// Parses `graph.json`, checking ids, endpoint labels and that stored
    /// weights equal latent distances within 1e-9.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        let pairs: Vec<(usize, usize)> = file.edges.iter().map(|&(i, j, _)| (i, j)).collect();
        let graph = Self::with_edges(file.nodes, pairs)?;
        for (i, j, w) in file.edges {
            let expect = graph.edge_weight(i, j).expect("edge inserted");
            if !((w - expect).abs() <= 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "edge {i}-{j} weight {w} differs from latent distance {expect}"
                )));
            }
        }
        Ok(graph)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize, f64)>,
}

/// Dataset nodes first (true labels, ids `0..n`), then `n_synthetic` points
/// uniform over the bounding box of the embeddings, labelled by the decoder.
/// `theta_b` is decoded for every node so neighbouring nodes carry nearby
/// arm-2 configurations.
///
/// Edges are the KNN edges among the safe dataset nodes united with the KNN
/// edges among all safe nodes, so densification only ever adds edges.
pub fn build_graph(
    model: &VaeModel,
    dataset: &Dataset,
    chain_b: &KinematicChain,
    k: usize,
    n_synthetic: usize,
    seed: u64,
) -> Result<LatentGraph> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let poses: Vec<PoseVector> = dataset.samples.iter().map(PoseVector::from_sample).collect();
    let mut zs = model.encode_means(&poses);
    let mut labels: Vec<LatentLabel> = dataset
        .samples
        .iter()
        .map(|s| if s.is_safe() { LatentLabel::Safe } else { LatentLabel::Colliding })
        .collect();
    let n_data = zs.len();

    let (lo, hi) = bounding_box(&zs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_synthetic {
        zs.push([uniform(&mut rng, lo[0], hi[0]), uniform(&mut rng, lo[1], hi[1])]);
    }
    let decoded = model.decode_many(&zs);
    labels.extend(decoded[n_data..].iter().map(|out| label_from_flag(out[FLAG_INDEX])));

    let nodes: Vec<Node> = zs
        .iter()
        .zip(&decoded)
        .zip(&labels)
        .enumerate()
        .map(|(id, ((z, out), label))| Node {
            id,
            z: *z,
            label: *label,
            theta_b: model.theta_b_from_output(out, chain_b),
            source: if id < n_data { NodeSource::Dataset } else { NodeSource::Synthetic },
        })
        .collect();
    if !nodes.iter().any(Node::is_safe) {
        return Err(Error::NoSafeNodes);
    }
    let safe_data: Vec<usize> = nodes[..n_data].iter().filter(|n| n.is_safe()).map(|n| n.id).collect();
    let safe_all: Vec<usize> = nodes.iter().filter(|n| n.is_safe()).map(|n| n.id).collect();
    let mut edges = knn_edges(&nodes, &safe_data, k);
    if n_synthetic > 0 {
        edges.extend(knn_edges(&nodes, &safe_all, k));
    }
    LatentGraph::with_edges(nodes, edges)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn bounding_box(zs: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for z in zs {
        for k in 0..2 {
            lo[k] = lo[k].min(z[k]);
            hi[k] = hi[k].max(z[k]);
        }
    }
    (lo, hi)
}

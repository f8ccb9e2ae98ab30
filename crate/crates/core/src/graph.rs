//! Undirected topologies and the Metropolis-Hastings random-walk scheduler.
//!
//! The scheduled node proposes a uniformly chosen neighbour `j` and hands over
//! with probability min(1, deg(current)/deg(j)); otherwise it keeps the token.
//! The resulting chain is stationary-uniform over the nodes.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    /// Hub at node 0, leaves 1..K.
    Star,
    /// 0 – 1 – … – (K−1) – 0.
    Ring,
    Complete,
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(TopologyKind::Star),
            "ring" => Ok(TopologyKind::Ring),
            "complete" | "full" | "fully-connected" => Ok(TopologyKind::Complete),
            other => Err(Error::Config(format!("unknown topology kind '{other}'"))),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Star => "star",
            TopologyKind::Ring => "ring",
            TopologyKind::Complete => "complete",
        })
    }
}

/// Connected simple undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: Vec<Vec<bool>>,
    neighbors: Vec<Vec<NodeId>>,
}

impl Topology {
    pub fn build(kind: TopologyKind, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidTopology("need at least one node".into()));
        }
        let edges: Vec<(NodeId, NodeId)> = match kind {
            TopologyKind::Star => (1..k).map(|leaf| (0, leaf)).collect(),
            TopologyKind::Ring => match k {
                1 => vec![],
                2 => vec![(0, 1)],
                _ => (0..k).map(|i| (i, (i + 1) % k)).collect(),
            },
            TopologyKind::Complete => (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect(),
        };
        Self::from_edges(k, &edges)
    }

    /// Builds a graph on `k` nodes. Duplicate edges (in either orientation)
    /// are merged.
    pub fn from_edges(k: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidTopology("need at least one node".into()));
        }
        let mut adjacency = vec![vec![false; k]; k];
        for &(u, v) in edges {
            if u == v || u >= k || v >= k {
                return Err(Error::InvalidEdge(u, v));
            }
            adjacency[u][v] = true;
            adjacency[v][u] = true;
        }
        let neighbors: Vec<Vec<NodeId>> = adjacency
            .iter()
            .map(|row| row.iter().enumerate().filter_map(|(j, &on)| on.then_some(j)).collect())
            .collect();
        let topology = Topology { adjacency, neighbors };
        if !topology.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        Ok(topology)
    }

    /// Parses a whitespace-separated edge list; `#` lines are comments and
    /// the node count is the largest index plus one.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::InvalidTopology(format!(
                    "line {}: expected two node indices, got '{line}'",
                    lineno + 1
                )));
            }
            let parse = |s: &str| {
                s.parse::<NodeId>()
                    .map_err(|_| Error::InvalidTopology(format!("line {}: bad node index '{s}'", lineno + 1)))
            };
            edges.push((parse(fields[0])?, parse(fields[1])?));
        }
        let k = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        if k == 0 {
            return Err(Error::InvalidTopology("edge list is empty".into()));
        }
        Self::from_edges(k, &edges)
    }

    pub fn from_edge_list_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse_edge_list(&text)
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbors[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node]
    }

    pub fn is_adjacent(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u][v]
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        (0..self.node_count())
            .flat_map(|u| self.neighbors[u].iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    fn is_connected(&self) -> bool {
        let k = self.node_count();
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == k
    }

    /// Uniform initial placement.
    pub fn initial_node<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        rng.random_range(0..self.node_count())
    }

    /// One Metropolis-Hastings scheduling step from `current`.
    pub fn mh_step<R: Rng + ?Sized>(&self, current: NodeId, rng: &mut R) -> NodeId {
        let nbrs = &self.neighbors[current];
        if nbrs.is_empty() {
            return current;
        }
        let proposal = nbrs[rng.random_range(0..nbrs.len())];
        let ratio = nbrs.len() as f64 / self.degree(proposal) as f64;
        if ratio >= 1.0 || rng.random::<f64>() < ratio {
            proposal
        } else {
            current
        }
    }

    /// Exact one-step transition probabilities out of `current`.
    pub fn transition_probabilities(&self, current: NodeId) -> Vec<f64> {
        let k = self.node_count();
        let mut p = vec![0.0; k];
        let deg = self.degree(current) as f64;
        for &j in &self.neighbors[current] {
            p[j] = (deg / self.degree(j) as f64).min(1.0) / deg;
        }
        p[current] = 1.0 - p.iter().sum::<f64>();
        p
    }
}

/// Scheduled nodes k⁽¹⁾, k⁽²⁾, … of one walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkTrace {
    pub nodes: Vec<NodeId>,
}

impl WalkTrace {
    /// Consecutive entries are equal or adjacent.
    pub fn is_valid_for(&self, t: &Topology) -> bool {
        self.nodes.windows(2).all(|w| w[0] == w[1] || t.is_adjacent(w[0], w[1]))
    }
}

pub fn walk<R: Rng + ?Sized>(t: &Topology, length: usize, rng: &mut R) -> WalkTrace {
    let mut nodes = Vec::with_capacity(length);
    if length > 0 {
        let mut current = t.initial_node(rng);
        nodes.push(current);
        for _ in 1..length {
            current = t.mh_step(current, rng);
            nodes.push(current);
        }
    }
    WalkTrace { nodes }
}

/// Monte-Carlo mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci: (f64, f64),
    pub trials: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_err = (var / n as f64).sqrt();
        McEstimate {
            mean,
            std_err,
            ci: (mean - 1.96 * std_err, mean + 1.96 * std_err),
            trials: n,
        }
    }

    /// Shifts the estimate by a constant.
    pub fn offset(self, delta: f64) -> Self {
        McEstimate {
            mean: self.mean + delta,
            ci: (self.ci.0 + delta, self.ci.1 + delta),
            ..self
        }
    }
}

/// Slots until every node has been scheduled, the initial placement being
/// slot 1.
pub fn cover_slots<R: Rng + ?Sized>(t: &Topology, rng: &mut R) -> usize {
    let k = t.node_count();
    let mut seen = vec![false; k];
    let mut current = t.initial_node(rng);
    seen[current] = true;
    let mut remaining = k - 1;
    let mut slots = 1;
    while remaining > 0 {
        current = t.mh_step(current, rng);
        slots += 1;
        if !seen[current] {
            seen[current] = true;
            remaining -= 1;
        }
    }
    slots
}

/// Slots until every node in `targets` has been scheduled, starting from a
/// uniform placement (slot 1).
pub fn cover_subset_slots<R: Rng + ?Sized>(t: &Topology, targets: &BTreeSet<NodeId>, rng: &mut R) -> usize {
    let mut pending = targets.clone();
    let mut current = t.initial_node(rng);
    pending.remove(&current);
    let mut slots = 1;
    while !pending.is_empty() {
        current = t.mh_step(current, rng);
        slots += 1;
        pending.remove(&current);
    }
    slots
}

/// Slots until `target` is first scheduled; the initial placement is slot 1.
pub fn hitting_slots<R: Rng + ?Sized>(t: &Topology, target: NodeId, rng: &mut R) -> usize {
    let mut current = t.initial_node(rng);
    let mut slots = 1;
    while current != target {
        current = t.mh_step(current, rng);
        slots += 1;
    }
    slots
}

/// Monte-Carlo cover time in slots (initial placement counts as slot 1).
/// Subtract one for the number of additional steps.
pub fn cover_time_mc<R: Rng + ?Sized>(t: &Topology, trials: usize, rng: &mut R) -> McEstimate {
    let samples: Vec<f64> = (0..trials.max(1)).map(|_| cover_slots(t, rng) as f64).collect();
    McEstimate::from_samples(&samples)
}

pub fn hitting_time_mc<R: Rng + ?Sized>(t: &Topology, target: NodeId, trials: usize, rng: &mut R) -> McEstimate {
    let samples: Vec<f64> = (0..trials.max(1)).map(|_| hitting_slots(t, target, rng) as f64).collect();
    McEstimate::from_samples(&samples)
}

/// Expected additional steps to cover a complete graph on `k` nodes:
/// Σ_{i=1}^{k−1} (k−1)/(k−i).
pub fn complete_cover_steps(k: usize) -> f64 {
    (1..k).map(|i| (k - 1) as f64 / (k - i) as f64).sum()
}

/// Expected slots to first schedule a given node on a complete graph:
/// 1/k + k − 1.
pub fn complete_hitting_slots(k: usize) -> f64 {
    1.0 / k as f64 + k as f64 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn standard_degrees() {
        assert_eq!(Topology::build(TopologyKind::Star, 5).unwrap().degrees(), vec![4, 1, 1, 1, 1]);
        assert_eq!(Topology::build(TopologyKind::Ring, 5).unwrap().degrees(), vec![2; 5]);
        assert_eq!(Topology::build(TopologyKind::Complete, 5).unwrap().degrees(), vec![4; 5]);
        assert_eq!(Topology::build(TopologyKind::Ring, 2).unwrap().degrees(), vec![1, 1]);
        let ring = Topology::build(TopologyKind::Ring, 6).unwrap();
        assert!(ring.is_adjacent(5, 0) && ring.is_adjacent(2, 3) && !ring.is_adjacent(0, 2));
    }

    #[test]
    fn invalid_graphs() {
        assert_eq!(Topology::from_edges(3, &[(0, 1)]), Err(Error::DisconnectedGraph));
        assert_eq!(Topology::from_edges(3, &[(0, 0), (1, 2)]), Err(Error::InvalidEdge(0, 0)));
        assert_eq!(Topology::from_edges(3, &[(0, 3)]), Err(Error::InvalidEdge(0, 3)));
        assert!(Topology::build(TopologyKind::Star, 0).is_err());
    }

    #[test]
    fn edge_list_parsing() {
        let t = Topology::parse_edge_list("# a path\n0 1\n1\t2\n\n2 1\n").unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.degrees(), vec![1, 2, 1]);
        assert_eq!(t.edges(), vec![(0, 1), (1, 2)]);
        assert!(Topology::parse_edge_list("0 1 2\n").is_err());
        assert!(Topology::parse_edge_list("0 x\n").is_err());
        assert!(Topology::parse_edge_list("# nothing\n").is_err());
        assert_eq!(Topology::parse_edge_list("0 1\n2 3\n"), Err(Error::DisconnectedGraph));
    }

    #[test]
    fn star_transition_probabilities() {
        let t = Topology::build(TopologyKind::Star, 5).unwrap();
        let leaf = t.transition_probabilities(3);
        assert!((leaf[0] - 0.25).abs() < 1e-15 && (leaf[3] - 0.75).abs() < 1e-15);
        let hub = t.transition_probabilities(0);
        assert_eq!(hub[0], 0.0);
        assert!(hub[1..].iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let c = Topology::build(TopologyKind::Complete, 6).unwrap().transition_probabilities(2);
        assert_eq!(c[2], 0.0);
        assert!((c[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn walk_respects_adjacency() {
        for kind in [TopologyKind::Star, TopologyKind::Ring, TopologyKind::Complete] {
            let t = Topology::build(kind, 7).unwrap();
            let trace = walk(&t, 5000, &mut rng(1));
            assert_eq!(trace.nodes.len(), 5000);
            assert!(trace.is_valid_for(&t));
        }
        let t = Topology::build(TopologyKind::Complete, 4).unwrap();
        let trace = walk(&t, 5000, &mut rng(2));
        assert!(trace.nodes.windows(2).all(|w| w[0] != w[1]));
        assert_eq!(walk(&t, 100, &mut rng(9)), walk(&t, 100, &mut rng(9)));
    }

    #[test]
    fn single_node_graph_stays_put() {
        let t = Topology::build(TopologyKind::Complete, 1).unwrap();
        assert_eq!(t.mh_step(0, &mut rng(0)), 0);
        assert_eq!(cover_slots(&t, &mut rng(0)), 1);
    }

    #[test]
    fn stationary_distribution_is_uniform() {
        let t = Topology::parse_edge_list("0 1\n1 2\n1 3\n3 4\n4 5\n2 5\n0 4\n").unwrap();
        let k = t.node_count();
        let steps = 1_000_000;
        let trace = walk(&t, steps, &mut rng(3));
        let mut counts = vec![0usize; k];
        for &n in &trace.nodes {
            counts[n] += 1;
        }
        for c in counts {
            let freq = c as f64 / steps as f64;
            assert!((freq - 1.0 / k as f64).abs() < 0.01, "{freq}");
        }
    }

    #[test]
    fn two_node_exact_values() {
        let t = Topology::build(TopologyKind::Complete, 2).unwrap();
        let mut r = rng(4);
        for _ in 0..100 {
            assert_eq!(cover_slots(&t, &mut r), 2);
        }
        let est = hitting_time_mc(&t, 1, 100_000, &mut r);
        assert!((est.mean - 1.5).abs() < 3.0 * est.std_err + 1e-12);
        assert_eq!(complete_cover_steps(2), 1.0);
        assert_eq!(complete_hitting_slots(2), 1.5);
    }

    #[test]
    fn mc_is_reproducible() {
        let t = Topology::build(TopologyKind::Ring, 8).unwrap();
        let a = cover_time_mc(&t, 500, &mut rng(5));
        let b = cover_time_mc(&t, 500, &mut rng(5));
        assert_eq!(a, b);
        let a = hitting_time_mc(&t, 3, 500, &mut rng(6));
        let b = hitting_time_mc(&t, 3, 500, &mut rng(6));
        assert_eq!(a, b);
    }

    #[test]
    fn harmonic_cover_formula() {
        let h9: f64 = (1..=9).map(|i| 1.0 / i as f64).sum();
        assert!((complete_cover_steps(10) - 9.0 * h9).abs() < 1e-12);
        assert!((complete_cover_steps(10) - 25.46).abs() < 0.01);
        assert!((complete_hitting_slots(10) - 9.1).abs() < 1e-12);
    }
}

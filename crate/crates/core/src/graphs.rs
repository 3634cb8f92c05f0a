//! Oracle dependency graphs.
//!
//! Nodes are single stochastic-oracle accesses; an edge means the source's
//! query/answer pair is available when forming the target's query. Ancestor
//! sets are stored explicitly as transitively closed bitsets, so the executor
//! never has to recompute reachability. Depth counts *nodes* on the longest
//! directed path, so a path of T nodes has depth T.

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Topology tag carried by a built graph, with the parameters it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphLabel {
    Path { t: usize },
    Layer { t: usize, m: usize },
    Delay { t: usize, tau: Vec<usize> },
    Intermittent { t: usize, k: usize, m: usize },
    Custom,
}

#[derive(Debug, Clone)]
pub struct OracleGraph {
    ancestors: Vec<FixedBitSet>,
    depths: Vec<usize>,
    depth: usize,
    topo: Vec<NodeId>,
    label: GraphLabel,
}

fn require_positive(value: usize, name: &str) -> Result<()> {
    if value == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be >= 1")));
    }
    Ok(())
}

impl OracleGraph {
    /// Number of nodes N.
    pub fn size(&self) -> usize {
        self.ancestors.len()
    }

    /// Nodes on the longest directed path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Depth of a single node: nodes on the longest chain ending at it.
    pub fn node_depth(&self, node: NodeId) -> Result<usize> {
        self.check_index(node)?;
        Ok(self.depths[node])
    }

    /// Transitively closed ancestor set of `node`.
    pub fn ancestors(&self, node: NodeId) -> Result<&FixedBitSet> {
        self.check_index(node)?;
        Ok(&self.ancestors[node])
    }

    pub fn is_ancestor(&self, ancestor: NodeId, node: NodeId) -> bool {
        node < self.size() && ancestor < self.size() && self.ancestors[node].contains(ancestor)
    }

    /// A topological order of the node ids (builders emit identity order).
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn label(&self) -> &GraphLabel {
        &self.label
    }

    fn check_index(&self, node: NodeId) -> Result<()> {
        if node >= self.size() {
            return Err(Error::InvalidArgument(format!(
                "node index {node} out of range for graph of size {}",
                self.size()
            )));
        }
        Ok(())
    }

    /// FNV-1a hash of one node's ancestor set; recorded in traces.
    pub fn ancestor_hash(&self, node: NodeId) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for word in self.ancestors[node].as_slice() {
            for b in word.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Finds one longest directed path, as node ids in chain order.
    pub fn longest_path(&self) -> Vec<NodeId> {
        let n = self.size();
        let mut best_end = 0;
        for v in 0..n {
            if self.depths[v] > self.depths[best_end] {
                best_end = v;
            }
        }
        let mut chain = vec![best_end];
        let mut cur = best_end;
        while self.depths[cur] > 1 {
            // Any ancestor one level up extends the chain; take the smallest id.
            let prev = self.ancestors[cur]
                .ones()
                .find(|&a| self.depths[a] == self.depths[cur] - 1)
                .expect("depth accounting guarantees a predecessor");
            chain.push(prev);
            cur = prev;
        }
        chain.reverse();
        chain
    }

    fn from_closed_sets(ancestors: Vec<FixedBitSet>, label: GraphLabel) -> Self {
        let n = ancestors.len();
        let topo: Vec<NodeId> = (0..n).collect();
        let (depths, depth) = compute_depths(&ancestors, &topo);
        OracleGraph {
            ancestors,
            depths,
            depth,
            topo,
            label,
        }
    }
}

fn compute_depths(ancestors: &[FixedBitSet], topo: &[NodeId]) -> (Vec<usize>, usize) {
    let mut depths = vec![0usize; ancestors.len()];
    let mut max_depth = if ancestors.is_empty() { 0 } else { 1 };
    for &v in topo {
        let d = 1 + ancestors[v].ones().map(|a| depths[a]).max().unwrap_or(0);
        depths[v] = d;
        max_depth = max_depth.max(d);
    }
    (depths, max_depth)
}

/// Transitive closure over a direct-parent relation, walking a topological order.
fn close_over_parents(n: usize, parents: &[Vec<NodeId>], topo: &[NodeId]) -> Vec<FixedBitSet> {
    let mut closed = vec![FixedBitSet::with_capacity(n); n];
    for &v in topo {
        // anc(v) = union over direct parents p of anc(p) + {p}
        let mut set = FixedBitSet::with_capacity(n);
        for &p in &parents[v] {
            set.union_with(&closed[p]);
            set.insert(p);
        }
        closed[v] = set;
    }
    closed
}

/// Sequential computation: node t depends on every earlier node.
pub fn build_path(t: usize) -> Result<OracleGraph> {
    require_positive(t, "T")?;
    let ancestors = (0..t)
        .map(|v| {
            let mut s = FixedBitSet::with_capacity(t);
            s.insert_range(0..v);
            s
        })
        .collect();
    Ok(OracleGraph::from_closed_sets(
        ancestors,
        GraphLabel::Path { t },
    ))
}

/// Synchronous parallelism: T layers of M nodes; a node sees all earlier layers.
///
/// Node (round r, slot i) has id `r * m + i`.
pub fn build_layer(t: usize, m: usize) -> Result<OracleGraph> {
    require_positive(t, "T")?;
    require_positive(m, "M")?;
    let n = t * m;
    let ancestors = (0..n)
        .map(|v| {
            let round = v / m;
            let mut s = FixedBitSet::with_capacity(n);
            s.insert_range(0..round * m);
            s
        })
        .collect();
    Ok(OracleGraph::from_closed_sets(
        ancestors,
        GraphLabel::Layer { t, m },
    ))
}

/// Delayed responses: the answer queried at node s becomes available at
/// node s + tau_s, so (0-based) ancestors(t) = { s : s + tau[s] <= t }.
///
/// These sets are downward closed for any schedule (if s' is an ancestor of s
/// and s of t, then s' + tau[s'] <= s < t); the closure pass below keeps the
/// builder uniform rather than relying on that argument.
pub fn build_delay(t: usize, tau: &[usize]) -> Result<OracleGraph> {
    require_positive(t, "T")?;
    if tau.len() != t {
        return Err(Error::InvalidParameter(format!(
            "delay schedule length {} does not match T = {t}",
            tau.len()
        )));
    }
    if let Some(bad) = tau.iter().position(|&d| d == 0) {
        return Err(Error::InvalidParameter(format!(
            "delay tau[{bad}] must be >= 1"
        )));
    }
    let topo: Vec<NodeId> = (0..t).collect();
    let parents: Vec<Vec<NodeId>> = (0..t)
        .map(|v| (0..v).filter(|&s| s + tau[s] <= v).collect())
        .collect();
    let ancestors = close_over_parents(t, &parents, &topo);
    Ok(OracleGraph::from_closed_sets(
        ancestors,
        GraphLabel::Delay {
            t,
            tau: tau.to_vec(),
        },
    ))
}

/// Constant-delay convenience wrapper.
pub fn build_delay_const(t: usize, tau: usize) -> Result<OracleGraph> {
    require_positive(tau, "tau")?;
    build_delay(t, &vec![tau; t])
}

/// Intermittent communication: M chains of K local steps per round, fully
/// synchronized at round boundaries.
///
/// Node (round r, machine m, step k) has id `(r * K + k) * M + m`, so ids are
/// sorted by depth and the identity order is topological.
pub fn build_intermittent(t: usize, k: usize, m: usize) -> Result<OracleGraph> {
    require_positive(t, "T")?;
    require_positive(k, "K")?;
    require_positive(m, "M")?;
    let n = t * k * m;
    let id = |round: usize, machine: usize, step: usize| (round * k + step) * m + machine;
    let mut parents: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for round in 0..t {
        for machine in 0..m {
            for step in 0..k {
                let v = id(round, machine, step);
                if step > 0 {
                    parents[v].push(id(round, machine, step - 1));
                } else if round > 0 {
                    for other in 0..m {
                        parents[v].push(id(round - 1, other, k - 1));
                    }
                }
            }
        }
    }
    let topo: Vec<NodeId> = (0..n).collect();
    let ancestors = close_over_parents(n, &parents, &topo);
    Ok(OracleGraph::from_closed_sets(
        ancestors,
        GraphLabel::Intermittent { t, k, m },
    ))
}

/// Arbitrary DAG from an edge list; rejects cycles.
pub fn build_custom(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<OracleGraph> {
    require_positive(node_count, "node count")?;
    let mut parents: Vec<Vec<NodeId>> = vec![Vec::new(); node_count];
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); node_count];
    let mut indegree = vec![0usize; node_count];
    for &(a, b) in edges {
        if a >= node_count || b >= node_count {
            return Err(Error::InvalidParameter(format!(
                "edge ({a}, {b}) out of range for {node_count} nodes"
            )));
        }
        if a == b {
            return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
        }
        parents[b].push(a);
        children[a].push(b);
        indegree[b] += 1;
    }
    // Kahn's algorithm; smallest-id-first for a deterministic order.
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<NodeId>> = (0..node_count)
        .filter(|&v| indegree[v] == 0)
        .map(std::cmp::Reverse)
        .collect();
    let mut topo = Vec::with_capacity(node_count);
    while let Some(std::cmp::Reverse(v)) = ready.pop() {
        topo.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(std::cmp::Reverse(c));
            }
        }
    }
    if topo.len() != node_count {
        return Err(Error::InvalidParameter(
            "edge list contains a cycle".to_string(),
        ));
    }
    let ancestors = close_over_parents(node_count, &parents, &topo);
    let (depths, depth) = compute_depths(&ancestors, &topo);
    Ok(OracleGraph {
        ancestors,
        depths,
        depth,
        topo,
        label: GraphLabel::Custom,
    })
}

/// Ids of the nodes in round `round` for round-structured topologies.
///
/// Path graphs count each node as its own round; layer and intermittent
/// graphs group by synchronization round.
pub fn round_nodes(graph: &OracleGraph, round: usize) -> Result<Vec<NodeId>> {
    match *graph.label() {
        GraphLabel::Path { t } => {
            if round >= t {
                return Err(Error::InvalidArgument(format!(
                    "round {round} out of range"
                )));
            }
            Ok(vec![round])
        }
        GraphLabel::Layer { t, m } => {
            if round >= t {
                return Err(Error::InvalidArgument(format!(
                    "round {round} out of range"
                )));
            }
            Ok((round * m..(round + 1) * m).collect())
        }
        GraphLabel::Intermittent { t, k, m } => {
            if round >= t {
                return Err(Error::InvalidArgument(format!(
                    "round {round} out of range"
                )));
            }
            Ok((round * k * m..(round + 1) * k * m).collect())
        }
        _ => Err(Error::Scheduling(
            "graph topology has no round structure".to_string(),
        )),
    }
}

/// Number of synchronization rounds for round-structured topologies.
pub fn round_count(graph: &OracleGraph) -> Result<usize> {
    match *graph.label() {
        GraphLabel::Path { t }
        | GraphLabel::Layer { t, .. }
        | GraphLabel::Intermittent { t, .. } => Ok(t),
        _ => Err(Error::Scheduling(
            "graph topology has no round structure".to_string(),
        )),
    }
}

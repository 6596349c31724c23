//! Directed acyclic graph skeleton for probabilistic models.
//!
//! A [`Dag`] stores named nodes, each marked [`NodeKind::Observable`] or
//! [`NodeKind::Parameter`], together with directed edges. It answers the
//! structural queries (parents, children, ancestors, descendants) that the
//! rest of the crate builds on.
//!
//! Set-valued queries follow the exclusion convention: the query set is never
//! part of its own answer. `parents(B)` contains only nodes *outside* `B`
//! with an edge into `B`, and `ancestors(B)` contains only nodes outside `B`
//! from which some member of `B` is reachable. This matters when `B` holds
//! several nodes of one chain: `ancestors({b, c})` of `a -> b -> c` is `{a}`,
//! not `{a, b}`.
//!
//! All node storage is ordered by name, so iteration, derived sets, and
//! serialized artifacts are reproducible across runs and platforms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a node, unique within a [`Dag`].
///
/// `NodeId` is an ordinary string under the hood and serializes as one.
/// Emptiness is rejected when the node enters a graph, not at construction,
/// so ids can be built freely from user input before validation.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    /// Wraps a name.
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    /// The underlying name.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for NodeId {
    fn from(name: &str) -> Self {
        NodeId(name.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(name: String) -> Self {
        NodeId(name)
    }
}

impl From<&NodeId> for NodeId {
    fn from(id: &NodeId) -> Self {
        id.clone()
    }
}

/// Role of a node in the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Data: the node carries an observed value at inference time.
    Observable,
    /// Unknown: the node is a target of inference.
    Parameter,
}

/// A set of node names, ordered by name.
pub type NodeSet = std::collections::BTreeSet<NodeId>;

/// Builds a [`NodeSet`] from anything name-like.
///
/// ```
/// use cutgraph::dag::node_set;
/// let s = node_set(["b", "a", "b"]);
/// assert_eq!(s.len(), 2);
/// ```
pub fn node_set<I>(names: I) -> NodeSet
where
    I: IntoIterator,
    I::Item: Into<NodeId>,
{
    names.into_iter().map(Into::into).collect()
}

/// One conditional block `p(head | conditioners)` of a factorized density.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    /// Nodes whose joint conditional this factor describes.
    pub head: NodeSet,
    /// Nodes appearing to the right of the bar.
    pub conditioners: NodeSet,
}

impl Factor {
    /// Convenience constructor.
    pub fn new(head: NodeSet, conditioners: NodeSet) -> Self {
        Factor { head, conditioners }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &NodeSet| {
            s.iter()
                .map(NodeId::as_str)
                .collect::<Vec<_>>()
                .join(", ")
        };
        if self.conditioners.is_empty() {
            write!(f, "p({})", join(&self.head))
        } else {
            write!(f, "p({} | {})", join(&self.head), join(&self.conditioners))
        }
    }
}

/// Ordered factors whose product is a joint or conditional density.
pub type FactorList = Vec<Factor>;

/// Errors raised while building or querying a [`Dag`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    /// The same name was declared twice.
    #[error("duplicate node `{0}`")]
    DuplicateNode(NodeId),
    /// A node name was empty.
    #[error("node names must be non-empty")]
    EmptyNodeName,
    /// An edge endpoint names no declared node.
    #[error("edge endpoint `{0}` is not a declared node")]
    UnknownEndpoint(NodeId),
    /// An edge leads from a node to itself.
    #[error("self-loop on node `{0}`")]
    SelfLoop(NodeId),
    /// The edges contain a directed cycle.
    #[error("cycle detected through node `{0}`")]
    CycleDetected(NodeId),
    /// A query mentioned a node outside the graph.
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
}

/// A directed acyclic graph over named, kind-tagged nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    kinds: BTreeMap<NodeId, NodeKind>,
    parent_map: BTreeMap<NodeId, NodeSet>,
    child_map: BTreeMap<NodeId, NodeSet>,
    edge_count: usize,
}

/// Validates nodes and edges and assembles a [`Dag`].
///
/// Rejects duplicate or empty names, edges with undeclared endpoints,
/// self-loops, and directed cycles. Parallel edges collapse to one.
///
/// ```
/// use cutgraph::dag::{build_dag, NodeKind};
/// let dag = build_dag(
///     [("theta", NodeKind::Parameter), ("y", NodeKind::Observable)],
///     [("theta", "y")],
/// )
/// .unwrap();
/// assert_eq!(dag.node_count(), 2);
/// assert_eq!(dag.edge_count(), 1);
/// ```
pub fn build_dag<N, E, S, T>(nodes: N, edges: E) -> Result<Dag, DagError>
where
    N: IntoIterator<Item = (S, NodeKind)>,
    E: IntoIterator<Item = (T, T)>,
    S: Into<NodeId>,
    T: Into<NodeId>,
{
    let mut kinds = BTreeMap::new();
    for (name, kind) in nodes {
        let id: NodeId = name.into();
        if id.as_str().is_empty() {
            return Err(DagError::EmptyNodeName);
        }
        if kinds.insert(id.clone(), kind).is_some() {
            return Err(DagError::DuplicateNode(id));
        }
    }

    let mut parent_map: BTreeMap<NodeId, NodeSet> = kinds
        .keys()
        .map(|id| (id.clone(), NodeSet::new()))
        .collect();
    let mut child_map = parent_map.clone();
    let mut edge_count = 0usize;
    for (from, to) in edges {
        let from: NodeId = from.into();
        let to: NodeId = to.into();
        if !kinds.contains_key(&from) {
            return Err(DagError::UnknownEndpoint(from));
        }
        if !kinds.contains_key(&to) {
            return Err(DagError::UnknownEndpoint(to));
        }
        if from == to {
            return Err(DagError::SelfLoop(from));
        }
        if child_map.get_mut(&from).unwrap().insert(to.clone()) {
            parent_map.get_mut(&to).unwrap().insert(from);
            edge_count += 1;
        }
    }

    let dag = Dag {
        kinds,
        parent_map,
        child_map,
        edge_count,
    };
    dag.check_acyclic()?;
    Ok(dag)
}

impl Dag {
    fn check_acyclic(&self) -> Result<(), DagError> {
        // Kahn's algorithm; whatever it cannot consume sits on a cycle.
        let mut indegree: BTreeMap<&NodeId, usize> = self
            .kinds
            .keys()
            .map(|id| (id, self.parent_map[id].len()))
            .collect();
        let mut queue: Vec<&NodeId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut seen = 0usize;
        while let Some(id) = queue.pop() {
            seen += 1;
            for child in &self.child_map[id] {
                let d = indegree.get_mut(child).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(child);
                }
            }
        }
        if seen == self.kinds.len() {
            Ok(())
        } else {
            let on_cycle = indegree
                .iter()
                .filter(|(_, d)| **d > 0)
                .map(|(id, _)| (*id).clone())
                .next()
                .expect("unconsumed node");
            Err(DagError::CycleDetected(on_cycle))
        }
    }

    /// Number of nodes.
    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    /// Number of distinct edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Whether `id` names a node of this graph.
    pub fn contains(&self, id: &NodeId) -> bool {
        self.kinds.contains_key(id)
    }

    /// Kind of a single node.
    pub fn kind(&self, id: &NodeId) -> Result<NodeKind, DagError> {
        self.kinds
            .get(id)
            .copied()
            .ok_or_else(|| DagError::UnknownNode(id.clone()))
    }

    /// All nodes with their kinds, in name order.
    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, NodeKind)> {
        self.kinds.iter().map(|(id, kind)| (id, *kind))
    }

    /// All node names.
    pub fn all_nodes(&self) -> NodeSet {
        self.kinds.keys().cloned().collect()
    }

    /// Names of all [`NodeKind::Observable`] nodes.
    pub fn observables(&self) -> NodeSet {
        self.of_kind(NodeKind::Observable)
    }

    /// Names of all [`NodeKind::Parameter`] nodes.
    pub fn parameters(&self) -> NodeSet {
        self.of_kind(NodeKind::Parameter)
    }

    fn of_kind(&self, want: NodeKind) -> NodeSet {
        self.kinds
            .iter()
            .filter(|(_, kind)| **kind == want)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// All edges as `(from, to)` pairs, ordered by source then target name.
    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> {
        self.child_map
            .iter()
            .flat_map(|(from, tos)| tos.iter().map(move |to| (from, to)))
    }

    /// Direct parents of one node.
    pub fn parents_of(&self, id: &NodeId) -> Result<&NodeSet, DagError> {
        self.parent_map
            .get(id)
            .ok_or_else(|| DagError::UnknownNode(id.clone()))
    }

    /// Direct children of one node.
    pub fn children_of(&self, id: &NodeId) -> Result<&NodeSet, DagError> {
        self.child_map
            .get(id)
            .ok_or_else(|| DagError::UnknownNode(id.clone()))
    }

    /// Checks that every member of `set` is a node of this graph.
    pub fn check_nodes(&self, set: &NodeSet) -> Result<(), DagError> {
        match set.iter().find(|id| !self.contains(id)) {
            None => Ok(()),
            Some(id) => Err(DagError::UnknownNode(id.clone())),
        }
    }

    /// Nodes outside `b` with an edge into `b`.
    pub fn parents(&self, b: &NodeSet) -> Result<NodeSet, DagError> {
        self.neighbourhood(b, &self.parent_map)
    }

    /// Nodes outside `b` with an edge from `b`.
    pub fn children(&self, b: &NodeSet) -> Result<NodeSet, DagError> {
        self.neighbourhood(b, &self.child_map)
    }

    fn neighbourhood(
        &self,
        b: &NodeSet,
        step: &BTreeMap<NodeId, NodeSet>,
    ) -> Result<NodeSet, DagError> {
        self.check_nodes(b)?;
        let mut out = NodeSet::new();
        for id in b {
            for n in &step[id] {
                if !b.contains(n) {
                    out.insert(n.clone());
                }
            }
        }
        Ok(out)
    }

    /// Nodes outside `b` from which some member of `b` is reachable.
    pub fn ancestors(&self, b: &NodeSet) -> Result<NodeSet, DagError> {
        self.closure(b, &self.parent_map)
    }

    /// Nodes outside `b` reachable from some member of `b`.
    pub fn descendants(&self, b: &NodeSet) -> Result<NodeSet, DagError> {
        self.closure(b, &self.child_map)
    }

    fn closure(
        &self,
        b: &NodeSet,
        step: &BTreeMap<NodeId, NodeSet>,
    ) -> Result<NodeSet, DagError> {
        self.check_nodes(b)?;
        let mut out = NodeSet::new();
        let mut stack: Vec<&NodeId> = b.iter().collect();
        while let Some(id) = stack.pop() {
            for n in &step[id] {
                if !out.contains(n) {
                    out.insert(n.clone());
                    stack.push(n);
                }
            }
        }
        Ok(out.difference(b).cloned().collect())
    }

    /// The Markov factorization of the joint density: one factor
    /// `p(v | parents(v))` per node, in name order.
    pub fn full_factorization(&self) -> FactorList {
        self.kinds
            .keys()
            .map(|id| {
                Factor::new(node_set([id.clone()]), self.parent_map[id].clone())
            })
            .collect()
    }

    /// Renders the graph in Graphviz DOT syntax. Observables draw as boxes,
    /// parameters as ellipses.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph model {\n");
        for (id, kind) in self.nodes() {
            let shape = match kind {
                NodeKind::Observable => "box",
                NodeKind::Parameter => "ellipse",
            };
            out.push_str(&format!("  \"{}\" [shape={}];\n", id, shape));
        }
        for (from, to) in self.edges() {
            out.push_str(&format!("  \"{}\" -> \"{}\";\n", from, to));
        }
        out.push_str("}\n");
        out
    }
}

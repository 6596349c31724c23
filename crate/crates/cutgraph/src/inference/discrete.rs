//! Exact inference on finite discrete models by enumeration.
//!
//! A [`DiscreteModel`] attaches a conditional probability table to every
//! node of a [`Dag`]. Everything here works by summing over the full joint
//! state space, so it is limited to small models and serves as the exact
//! oracle that faster or approximate machinery is tested against.

use std::collections::BTreeMap;

use rand::Rng;

use super::InferenceError;
use crate::dag::{Dag, NodeId, NodeSet};
use crate::separation::{SeparationError, SeparationQuery};

/// Largest joint state space [`enumerate_posterior`] will sum over.
pub const STATE_SPACE_LIMIT: u128 = 1 << 16;

/// A full or partial assignment of states to nodes.
pub type Assignment = BTreeMap<NodeId, usize>;

/// A DAG model in which every node takes finitely many states.
///
/// Each node `v` carries a flat table of `p(v = s | parents)` values. Rows
/// are indexed by the parent configuration: parents are ordered by name,
/// and the first parent varies slowest. Every row must sum to one.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    dag: Dag,
    cards: BTreeMap<NodeId, usize>,
    tables: BTreeMap<NodeId, Vec<f64>>,
}

/// How far a table row may drift from summing to exactly one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

impl DiscreteModel {
    /// Builds a model from `(node, cardinality, flat table)` triples.
    ///
    /// The table for a node with parents `p1 < p2 < …` lists the rows for
    /// parent configurations `(0,0,…), (0,0,…,1), …` in lexicographic
    /// order; each row has one entry per state of the node.
    ///
    /// ```
    /// use cutgraph::dag::{build_dag, NodeKind};
    /// use cutgraph::inference::discrete::DiscreteModel;
    /// let dag = build_dag(
    ///     [("a", NodeKind::Parameter), ("b", NodeKind::Observable)],
    ///     [("a", "b")],
    /// )
    /// .unwrap();
    /// let model = DiscreteModel::new(
    ///     dag,
    ///     [
    ///         ("a", 2, vec![0.4, 0.6]),
    ///         ("b", 2, vec![0.9, 0.1, 0.2, 0.8]),
    ///     ],
    /// )
    /// .unwrap();
    /// assert_eq!(model.cardinality(&"b".into()).unwrap(), 2);
    /// ```
    pub fn new<I, S>(dag: Dag, tables: I) -> Result<Self, InferenceError>
    where
        I: IntoIterator<Item = (S, usize, Vec<f64>)>,
        S: Into<NodeId>,
    {
        let mut cards = BTreeMap::new();
        let mut stored = BTreeMap::new();
        for (node, card, table) in tables {
            let node: NodeId = node.into();
            if !dag.contains(&node) {
                return Err(InferenceError::TableMismatch(node));
            }
            if card == 0 {
                return Err(InferenceError::InvalidTable {
                    node,
                    reason: "cardinality must be at least 1".into(),
                });
            }
            if stored.contains_key(&node) {
                return Err(InferenceError::TableMismatch(node));
            }
            cards.insert(node.clone(), card);
            stored.insert(node, table);
        }
        for node in dag.all_nodes() {
            if !stored.contains_key(&node) {
                return Err(InferenceError::TableMismatch(node));
            }
        }

        let model = DiscreteModel {
            dag,
            cards,
            tables: stored,
        };
        model.validate_tables()?;
        Ok(model)
    }

    fn validate_tables(&self) -> Result<(), InferenceError> {
        for (node, table) in &self.tables {
            let card = self.cards[node];
            let rows: usize = self.dag.parents_of(node).expect("node exists").iter()
                .map(|p| self.cards[p])
                .product();
            let expected = rows * card;
            if table.len() != expected {
                return Err(InferenceError::InvalidTable {
                    node: node.clone(),
                    reason: format!("expected {expected} entries, got {}", table.len()),
                });
            }
            for row in table.chunks(card) {
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(InferenceError::InvalidTable {
                        node: node.clone(),
                        reason: "entries must be finite and non-negative".into(),
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(InferenceError::InvalidTable {
                        node: node.clone(),
                        reason: format!("row sums to {sum}, not 1"),
                    });
                }
            }
        }
        Ok(())
    }

    /// The underlying graph.
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    /// Number of states of a node.
    pub fn cardinality(&self, node: &NodeId) -> Result<usize, InferenceError> {
        self.cards
            .get(node)
            .copied()
            .ok_or_else(|| InferenceError::TableMismatch(node.clone()))
    }

    /// Product of all node cardinalities.
    pub fn state_space_size(&self) -> u128 {
        self.cards.values().map(|c| *c as u128).product()
    }

    /// Probability of one full joint assignment.
    ///
    /// Every node must be assigned a state inside its support.
    pub fn joint_probability(&self, assignment: &Assignment) -> Result<f64, InferenceError> {
        let mut p = 1.0;
        for (node, card) in &self.cards {
            let state = *assignment.get(node).ok_or_else(|| InferenceError::BadAssignment {
                node: node.clone(),
                reason: "missing from assignment".into(),
            })?;
            if state >= *card {
                return Err(InferenceError::BadAssignment {
                    node: node.clone(),
                    reason: format!("state {state} outside support of size {card}"),
                });
            }
            let row_start = self.row_offset(node, assignment)?;
            p *= self.tables[node][row_start + state];
        }
        Ok(p)
    }

    /// Probability of one node's assigned state given its parents'
    /// assigned states. The assignment may be partial as long as it
    /// covers the node and its parents.
    pub fn node_probability(
        &self,
        node: &NodeId,
        assignment: &Assignment,
    ) -> Result<f64, InferenceError> {
        let card = self.cardinality(node)?;
        let state = *assignment.get(node).ok_or_else(|| InferenceError::BadAssignment {
            node: node.clone(),
            reason: "missing from assignment".into(),
        })?;
        if state >= card {
            return Err(InferenceError::BadAssignment {
                node: node.clone(),
                reason: format!("state {state} outside support of size {card}"),
            });
        }
        let row_start = self.row_offset(node, assignment)?;
        Ok(self.tables[node][row_start + state])
    }

    fn row_offset(&self, node: &NodeId, assignment: &Assignment) -> Result<usize, InferenceError> {
        let mut idx = 0usize;
        for parent in self.dag.parents_of(node).expect("node exists") {
            let state = *assignment.get(parent).ok_or_else(|| InferenceError::BadAssignment {
                node: parent.clone(),
                reason: "missing from assignment".into(),
            })?;
            idx = idx * self.cards[parent] + state;
        }
        Ok(idx * self.cards[node])
    }

    /// Iterates over every full joint assignment with its probability.
    pub fn joint_enumeration(&self) -> JointIter<'_> {
        JointIter {
            model: self,
            nodes: self.cards.keys().cloned().collect(),
            current: None,
            done: false,
        }
    }

    fn check_budget(&self) -> Result<(), InferenceError> {
        let size = self.state_space_size();
        if size > STATE_SPACE_LIMIT {
            return Err(InferenceError::StateSpaceTooLarge {
                size,
                limit: STATE_SPACE_LIMIT,
            });
        }
        Ok(())
    }
}

/// Iterator over all joint assignments of a [`DiscreteModel`].
pub struct JointIter<'a> {
    model: &'a DiscreteModel,
    nodes: Vec<NodeId>,
    current: Option<Assignment>,
    done: bool,
}

impl Iterator for JointIter<'_> {
    type Item = (Assignment, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match &mut self.current {
            None => {
                let first: Assignment =
                    self.nodes.iter().map(|n| (n.clone(), 0usize)).collect();
                self.current = Some(first);
            }
            Some(assignment) => {
                // Mixed-radix increment, last node fastest.
                let mut carried = true;
                for node in self.nodes.iter().rev() {
                    let state = assignment.get_mut(node).expect("node present");
                    *state += 1;
                    if *state < self.model.cards[node] {
                        carried = false;
                        break;
                    }
                    *state = 0;
                }
                if carried {
                    self.done = true;
                    return None;
                }
            }
        }
        let assignment = self.current.as_ref().expect("just set").clone();
        let p = self
            .model
            .joint_probability(&assignment)
            .expect("enumeration stays in support");
        Some((assignment, p))
    }
}

/// An exact distribution over the joint states of some target nodes.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ProbabilityTable {
    /// Target nodes in name order; the first varies slowest in `probs`.
    pub targets: Vec<NodeId>,
    /// State counts matching `targets`.
    pub cards: Vec<usize>,
    /// Probabilities in lexicographic order of target states; sums to one.
    pub probs: Vec<f64>,
}

impl ProbabilityTable {
    /// Index of one joint target state.
    pub fn index_of(&self, assignment: &Assignment) -> Result<usize, InferenceError> {
        let mut idx = 0usize;
        for (node, card) in self.targets.iter().zip(&self.cards) {
            let state = *assignment.get(node).ok_or_else(|| InferenceError::BadAssignment {
                node: node.clone(),
                reason: "missing from assignment".into(),
            })?;
            if state >= *card {
                return Err(InferenceError::BadAssignment {
                    node: node.clone(),
                    reason: format!("state {state} outside support of size {card}"),
                });
            }
            idx = idx * card + state;
        }
        Ok(idx)
    }

    /// Probability of one joint target state.
    pub fn prob(&self, assignment: &Assignment) -> Result<f64, InferenceError> {
        Ok(self.probs[self.index_of(assignment)?])
    }

    /// Iterates `(assignment, probability)` in index order.
    pub fn entries(&self) -> impl Iterator<Item = (Assignment, f64)> + '_ {
        (0..self.probs.len()).map(move |idx| {
            let mut rem = idx;
            let mut assignment = Assignment::new();
            for (node, card) in self.targets.iter().zip(&self.cards).rev() {
                assignment.insert(node.clone(), rem % card);
                rem /= card;
            }
            (assignment, self.probs[idx])
        })
    }

    /// Total variation distance to another table over the same targets.
    pub fn total_variation(&self, other: &ProbabilityTable) -> Result<f64, InferenceError> {
        if self.targets != other.targets || self.cards != other.cards {
            return Err(InferenceError::DimensionMismatch(
                "tables cover different targets".into(),
            ));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// Exact conditional distribution of `targets` given a partial assignment.
///
/// Sums the joint over all completions. The assignment may mention any
/// nodes outside `targets`; unmentioned nodes are marginalized out.
pub fn enumerate_posterior(
    model: &DiscreteModel,
    targets: &NodeSet,
    given: &Assignment,
) -> Result<ProbabilityTable, InferenceError> {
    model.check_budget()?;
    model.dag.check_nodes(targets).map_err(|_| {
        InferenceError::TableMismatch(
            targets
                .iter()
                .find(|t| !model.dag.contains(t))
                .expect("some target unknown")
                .clone(),
        )
    })?;
    for (node, state) in given {
        if targets.contains(node) {
            return Err(InferenceError::BadAssignment {
                node: node.clone(),
                reason: "conditioned node cannot also be a target".into(),
            });
        }
        let card = model.cardinality(node)?;
        if *state >= card {
            return Err(InferenceError::BadAssignment {
                node: node.clone(),
                reason: format!("state {state} outside support of size {card}"),
            });
        }
    }

    let target_list: Vec<NodeId> = targets.iter().cloned().collect();
    let cards: Vec<usize> = target_list.iter().map(|t| model.cards[t]).collect();
    let mut probs = vec![0.0f64; cards.iter().product::<usize>().max(1)];

    for (assignment, p) in model.joint_enumeration() {
        if given.iter().any(|(node, state)| assignment[node] != *state) {
            continue;
        }
        let mut idx = 0usize;
        for (node, card) in target_list.iter().zip(&cards) {
            idx = idx * card + assignment[node];
        }
        probs[idx] += p;
    }

    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(InferenceError::ZeroProbabilityConditioning);
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(ProbabilityTable {
        targets: target_list,
        cards,
        probs,
    })
}

/// Checks a conditional independence statement by exact enumeration.
///
/// Returns true when, for every conditioning state `z` with positive
/// probability, `|p(a, b | z) − p(a | z) p(b | z)| ≤ tol` holds for all
/// joint states of the query sets. This is the probabilistic ground truth
/// that [`crate::separation::is_d_separated`] is sound against.
pub fn brute_force_ci(
    model: &DiscreteModel,
    q: &SeparationQuery,
    tol: f64,
) -> Result<bool, InferenceError> {
    // Reuse the separation-side validation so both checkers reject the
    // same queries.
    match crate::separation::is_d_separated(model.dag(), q) {
        Ok(_) => {}
        Err(SeparationError::OverlappingSets(node)) => {
            return Err(InferenceError::BadAssignment {
                node,
                reason: "query sets overlap".into(),
            })
        }
        Err(SeparationError::UnknownNode(node)) => {
            return Err(InferenceError::TableMismatch(node));
        }
    }
    model.check_budget()?;

    let a_nodes: Vec<NodeId> = q.a.iter().cloned().collect();
    let b_nodes: Vec<NodeId> = q.b.iter().cloned().collect();
    let z_nodes: Vec<NodeId> = q.z.iter().cloned().collect();
    let size = |nodes: &[NodeId]| -> usize {
        nodes.iter().map(|n| model.cards[n]).product::<usize>().max(1)
    };
    let (na, nb, nz) = (size(&a_nodes), size(&b_nodes), size(&z_nodes));
    let index = |nodes: &[NodeId], assignment: &Assignment| -> usize {
        let mut idx = 0usize;
        for n in nodes {
            idx = idx * model.cards[n] + assignment[n];
        }
        idx
    };

    let mut p_z = vec![0.0f64; nz];
    let mut p_az = vec![0.0f64; na * nz];
    let mut p_bz = vec![0.0f64; nb * nz];
    let mut p_abz = vec![0.0f64; na * nb * nz];
    for (assignment, p) in model.joint_enumeration() {
        let (ia, ib, iz) = (
            index(&a_nodes, &assignment),
            index(&b_nodes, &assignment),
            index(&z_nodes, &assignment),
        );
        p_z[iz] += p;
        p_az[ia * nz + iz] += p;
        p_bz[ib * nz + iz] += p;
        p_abz[(ia * nb + ib) * nz + iz] += p;
    }

    for iz in 0..nz {
        if p_z[iz] <= 0.0 {
            continue;
        }
        for ia in 0..na {
            for ib in 0..nb {
                let joint = p_abz[(ia * nb + ib) * nz + iz] / p_z[iz];
                let split = (p_az[ia * nz + iz] / p_z[iz]) * (p_bz[ib * nz + iz] / p_z[iz]);
                if (joint - split).abs() > tol {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Fills a DAG with random strictly positive conditional tables.
///
/// Cardinalities are drawn uniformly from `2..=max_card`. Row entries are
/// drawn uniformly and normalized, so no state has probability zero and
/// conditioning events are always well defined.
pub fn random_discrete_model<R: Rng>(dag: &Dag, max_card: usize, rng: &mut R) -> DiscreteModel {
    assert!(max_card >= 2, "need at least binary nodes");
    let cards: BTreeMap<NodeId, usize> = dag
        .all_nodes()
        .into_iter()
        .map(|n| (n, rng.random_range(2..=max_card)))
        .collect();
    let tables: Vec<(NodeId, usize, Vec<f64>)> = cards
        .iter()
        .map(|(node, card)| {
            let rows: usize = dag
                .parents_of(node)
                .expect("node exists")
                .iter()
                .map(|p| cards[p])
                .product();
            let mut table = Vec::with_capacity(rows * card);
            for _ in 0..rows {
                let mut row: Vec<f64> =
                    (0..*card).map(|_| rng.random_range(0.05..1.0)).collect();
                let sum: f64 = row.iter().sum();
                for p in &mut row {
                    *p /= sum;
                }
                table.extend(row);
            }
            (node.clone(), *card, table)
        })
        .collect();
    DiscreteModel::new(dag.clone(), tables).expect("generated tables are valid")
}

//! Conditional independence queries on DAGs via d-separation.
//!
//! [`is_d_separated`] answers whether every undirected path between two node
//! sets is blocked by a conditioning set, using a linear-time reachability
//! sweep over `(node, direction)` states. [`is_d_separated_by_paths`] answers
//! the same question by enumerating every simple path and applying the
//! blocking conditions literally; it is exponential and exists as an
//! independent reference to test the fast algorithm against on small graphs.
//!
//! Both directions of the graphical criterion matter to this crate:
//! separation statements justify dropping variables from conditioning sets,
//! and the test suite checks them against exact probabilistic independence
//! on small discrete models.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::dag::{Dag, DagError, NodeId, NodeSet};

/// A conditional independence question: are `a` and `b` d-separated by `z`?
///
/// The three sets must be pairwise disjoint. Either of `a` and `b` may be
/// empty, in which case the answer is trivially yes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeparationQuery {
    pub a: NodeSet,
    pub b: NodeSet,
    pub z: NodeSet,
}

impl SeparationQuery {
    /// Convenience constructor.
    pub fn new(a: NodeSet, b: NodeSet, z: NodeSet) -> Self {
        SeparationQuery { a, b, z }
    }
}

/// Errors raised by separation queries.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeparationError {
    /// The query sets are not pairwise disjoint.
    #[error("query sets overlap at `{0}`")]
    OverlappingSets(NodeId),
    /// A query set mentions a node outside the graph.
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
}

fn validate(dag: &Dag, q: &SeparationQuery) -> Result<(), SeparationError> {
    for set in [&q.a, &q.b, &q.z] {
        if let Err(DagError::UnknownNode(id)) = dag.check_nodes(set) {
            return Err(SeparationError::UnknownNode(id));
        }
    }
    for id in &q.a {
        if q.b.contains(id) || q.z.contains(id) {
            return Err(SeparationError::OverlappingSets(id.clone()));
        }
    }
    for id in &q.b {
        if q.z.contains(id) {
            return Err(SeparationError::OverlappingSets(id.clone()));
        }
    }
    Ok(())
}

/// Travel direction of the reachability sweep when it enters a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Arrival {
    /// Entered against an edge (from a child).
    FromChild,
    /// Entered along an edge (from a parent).
    FromParent,
}

/// Decides d-separation by reachability.
///
/// A node counts as reachable if some active trail from `q.a` ends there;
/// the sets are d-separated exactly when nothing in `q.b` is reachable.
/// The sweep explores each `(node, direction)` state at most once, so it
/// runs in time linear in the number of edges.
pub fn is_d_separated(dag: &Dag, q: &SeparationQuery) -> Result<bool, SeparationError> {
    validate(dag, q)?;

    // Colliders pass the trail on exactly when they or a descendant are
    // conditioned on, so precompute z together with its ancestors.
    let mut an_z = dag.ancestors(&q.z).expect("validated");
    an_z.extend(q.z.iter().cloned());

    let mut to_visit: Vec<(NodeId, Arrival)> = q
        .a
        .iter()
        .map(|id| (id.clone(), Arrival::FromChild))
        .collect();
    let mut visited: BTreeSet<(NodeId, Arrival)> = BTreeSet::new();

    while let Some((v, dir)) = to_visit.pop() {
        if !visited.insert((v.clone(), dir)) {
            continue;
        }
        if !q.z.contains(&v) && q.b.contains(&v) {
            return Ok(false);
        }
        let parents = dag.parents_of(&v).expect("validated");
        let children = dag.children_of(&v).expect("validated");
        match dir {
            Arrival::FromChild => {
                if !q.z.contains(&v) {
                    for p in parents {
                        to_visit.push((p.clone(), Arrival::FromChild));
                    }
                    for c in children {
                        to_visit.push((c.clone(), Arrival::FromParent));
                    }
                }
            }
            Arrival::FromParent => {
                if !q.z.contains(&v) {
                    for c in children {
                        to_visit.push((c.clone(), Arrival::FromParent));
                    }
                }
                if an_z.contains(&v) {
                    for p in parents {
                        to_visit.push((p.clone(), Arrival::FromChild));
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Decides d-separation by enumerating every simple path.
///
/// A path is blocked by `z` when some interior node is either a non-collider
/// inside `z`, or a collider that is outside `z` and has no descendant in
/// `z`. The sets are d-separated exactly when every path between every pair
/// of endpoints is blocked.
///
/// Runtime grows with the number of simple paths, which can be exponential;
/// use [`is_d_separated`] outside of tests.
pub fn is_d_separated_by_paths(
    dag: &Dag,
    q: &SeparationQuery,
) -> Result<bool, SeparationError> {
    validate(dag, q)?;
    for a in &q.a {
        for b in &q.b {
            if has_active_path(dag, a, b, &q.z) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn has_active_path(dag: &Dag, a: &NodeId, b: &NodeId, z: &NodeSet) -> bool {
    let mut path = vec![a.clone()];
    let mut on_path = NodeSet::from([a.clone()]);
    search(dag, b, z, &mut path, &mut on_path)
}

fn search(
    dag: &Dag,
    target: &NodeId,
    z: &NodeSet,
    path: &mut Vec<NodeId>,
    on_path: &mut NodeSet,
) -> bool {
    let tail = path.last().expect("path is never empty").clone();
    if tail == *target {
        return !is_blocked(dag, path, z);
    }
    let mut neighbours = dag.parents_of(&tail).expect("validated").clone();
    neighbours.extend(dag.children_of(&tail).expect("validated").iter().cloned());
    for n in neighbours {
        if on_path.contains(&n) {
            continue;
        }
        path.push(n.clone());
        on_path.insert(n.clone());
        if search(dag, target, z, path, on_path) {
            return true;
        }
        path.pop();
        on_path.remove(&n);
    }
    false
}

fn is_blocked(dag: &Dag, path: &[NodeId], z: &NodeSet) -> bool {
    for j in 1..path.len().saturating_sub(1) {
        let v = &path[j];
        let parents = dag.parents_of(v).expect("validated");
        let collider = parents.contains(&path[j - 1]) && parents.contains(&path[j + 1]);
        if collider {
            if !z.contains(v) {
                let below = dag
                    .descendants(&NodeSet::from([v.clone()]))
                    .expect("validated");
                if below.intersection(z).next().is_none() {
                    return true;
                }
            }
        } else if z.contains(v) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{build_dag, node_set, NodeKind};
    use crate::testutil::figure1_dag;

    fn q(a: &[&str], b: &[&str], z: &[&str]) -> SeparationQuery {
        SeparationQuery::new(node_set(a.to_vec()), node_set(b.to_vec()), node_set(z.to_vec()))
    }

    fn chain() -> Dag {
        build_dag(
            [
                ("a", NodeKind::Parameter),
                ("b", NodeKind::Parameter),
                ("c", NodeKind::Observable),
            ],
            [("a", "b"), ("b", "c")],
        )
        .unwrap()
    }

    fn collider() -> Dag {
        build_dag(
            [
                ("a", NodeKind::Parameter),
                ("b", NodeKind::Parameter),
                ("c", NodeKind::Observable),
                ("d", NodeKind::Observable),
            ],
            [("a", "c"), ("b", "c"), ("c", "d")],
        )
        .unwrap()
    }

    #[test]
    fn chain_blocks_through_middle() {
        let dag = chain();
        assert!(!is_d_separated(&dag, &q(&["a"], &["c"], &[])).unwrap());
        assert!(is_d_separated(&dag, &q(&["a"], &["c"], &["b"])).unwrap());
    }

    #[test]
    fn collider_opens_when_conditioned() {
        let dag = collider();
        assert!(is_d_separated(&dag, &q(&["a"], &["b"], &[])).unwrap());
        assert!(!is_d_separated(&dag, &q(&["a"], &["b"], &["c"])).unwrap());
        // Conditioning on a descendant of the collider also opens it.
        assert!(!is_d_separated(&dag, &q(&["a"], &["b"], &["d"])).unwrap());
    }

    #[test]
    fn fork_blocks_at_root() {
        let dag = build_dag(
            [
                ("a", NodeKind::Observable),
                ("b", NodeKind::Observable),
                ("r", NodeKind::Parameter),
            ],
            [("r", "a"), ("r", "b")],
        )
        .unwrap();
        assert!(!is_d_separated(&dag, &q(&["a"], &["b"], &[])).unwrap());
        assert!(is_d_separated(&dag, &q(&["a"], &["b"], &["r"])).unwrap());
    }

    #[test]
    fn adjacent_nodes_never_separate() {
        let dag = chain();
        assert!(!is_d_separated(&dag, &q(&["a"], &["b"], &["c"])).unwrap());
        assert!(!is_d_separated_by_paths(&dag, &q(&["a"], &["b"], &["c"])).unwrap());
    }

    #[test]
    fn empty_sets_separate_trivially() {
        let dag = chain();
        assert!(is_d_separated(&dag, &q(&[], &["c"], &[])).unwrap());
        assert!(is_d_separated(&dag, &q(&["a"], &[], &[])).unwrap());
        assert!(is_d_separated_by_paths(&dag, &q(&[], &["c"], &[])).unwrap());
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let dag = chain();
        let err = is_d_separated(&dag, &q(&["a"], &["a"], &[])).unwrap_err();
        assert_eq!(err, SeparationError::OverlappingSets("a".into()));
        let err = is_d_separated(&dag, &q(&["a"], &["b"], &["b"])).unwrap_err();
        assert_eq!(err, SeparationError::OverlappingSets("b".into()));
    }

    #[test]
    fn unknown_nodes_are_rejected() {
        let dag = chain();
        let err = is_d_separated(&dag, &q(&["zz"], &["b"], &[])).unwrap_err();
        assert_eq!(err, SeparationError::UnknownNode("zz".into()));
    }

    #[test]
    fn both_algorithms_agree_on_fixtures() {
        for dag in [chain(), collider(), figure1_dag(2, 3)] {
            let nodes: Vec<_> = dag.all_nodes().into_iter().collect();
            for a in &nodes {
                for b in &nodes {
                    if a == b {
                        continue;
                    }
                    for z in &nodes {
                        if z == a || z == b {
                            continue;
                        }
                        let query = SeparationQuery::new(
                            node_set([a.clone()]),
                            node_set([b.clone()]),
                            node_set([z.clone()]),
                        );
                        assert_eq!(
                            is_d_separated(&dag, &query).unwrap(),
                            is_d_separated_by_paths(&dag, &query).unwrap(),
                            "disagreement on {query:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn surrogate_outcome_separation_in_regression_example() {
        // In the measurement-error model, the outcome model parameter beta
        // carries no information about the validation data once the main
        // study is set aside.
        let dag = figure1_dag(2, 3);
        let query = q(&["beta"], &["W_3", "C_3", "Z_3"], &[]);
        assert!(is_d_separated(&dag, &query).unwrap());
        // Conditioning on the main-study outcome opens the trail.
        let query = q(&["beta"], &["W_3", "C_3", "Z_3"], &["Y_1"]);
        assert!(!is_d_separated(&dag, &query).unwrap());
    }
}

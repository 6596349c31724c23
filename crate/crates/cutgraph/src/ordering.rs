//! Parent-child ordering between modules.
//!
//! Information is allowed to flow from a parent module to its children but
//! never back. The direction is read off the DAG: an edge from a variable
//! both modules share into a variable only one of them owns means the
//! *receiving* module uses shared quantities the other module also infers,
//! making the receiver the child. [`order_two`] applies this to a pair,
//! [`order_three`] to a freshly split pair under a known prior relation,
//! and [`update_after_split`] rewires an existing [`OrderingGraph`] when
//! one of its modules is split in two. [`sequential_split`] drives the
//! whole pipeline from a partition of the observables down to a fully
//! ordered module list.
//!
//! Where the graph admits several orderings the tie is broken by an
//! explicit [`ReliabilityOrder`]: the analyst ranks the observable groups,
//! and the less reliable side becomes the child (configurable through
//! [`TieBreak`]).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::dag::{Dag, NodeSet};
use crate::modules::{construct_module, ModuleSet, ModulesError};

/// Errors raised by ordering operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderingError {
    /// A label does not name a module of the ordering graph.
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    /// A label is already taken.
    #[error("module label `{0}` already in use")]
    LabelClash(String),
    /// The split handed in does not reassemble into the module it claims
    /// to split, or the DAG admits none of the rule's outcomes.
    #[error("inconsistent split: {0}")]
    InconsistentSplit(String),
    /// An operation needed a resolved parent-child relation but got an
    /// ambiguous one.
    #[error("order between {0} must be resolved first")]
    UnresolvedOrder(String),
    /// An ordering edge between modules sharing no variables.
    #[error("modules `{0}` and `{1}` share no variables, cannot be ordered")]
    EdgeWithoutSharedVariables(String, String),
    /// The module ordering developed a cycle.
    #[error("module ordering contains a cycle through `{0}`")]
    CyclicModuleOrder(String),
    /// Module construction or partition validation failed.
    #[error(transparent)]
    Modules(#[from] ModulesError),
}

/// Relation between two modules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OrderRelation {
    /// Only A can be the parent.
    AtoB,
    /// Only B can be the parent.
    BtoA,
    /// Either could be the parent; the analyst must choose.
    Both,
    /// The modules share nothing; neither constrains the other.
    Unordered,
}

/// Analyst-declared ranking of partition blocks, most reliable first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReliabilityOrder {
    order: Vec<String>,
}

impl ReliabilityOrder {
    /// Builds a ranking; labels must be distinct.
    pub fn new<I, S>(labels: I) -> Result<Self, OrderingError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut order = Vec::new();
        let mut seen = BTreeSet::new();
        for label in labels {
            let label = label.into();
            if !seen.insert(label.clone()) {
                return Err(OrderingError::LabelClash(label));
            }
            order.push(label);
        }
        Ok(ReliabilityOrder { order })
    }

    /// The labels, most reliable first.
    pub fn labels(&self) -> &[String] {
        &self.order
    }

    /// Position in the ranking; `None` for unranked labels, which count
    /// as less reliable than every ranked one.
    pub fn rank(&self, label: &str) -> Option<usize> {
        self.order.iter().position(|l| l == label)
    }

    /// Whether `a` is strictly more reliable than `b`. Unranked labels
    /// lose to ranked ones; two unranked labels fall back to name order
    /// so the answer is still deterministic.
    pub fn more_reliable(&self, a: &str, b: &str) -> bool {
        match (self.rank(a), self.rank(b)) {
            (Some(ra), Some(rb)) => ra < rb,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => a < b,
        }
    }
}

/// How to resolve a tie when either module could be the parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieBreak {
    /// The less reliable module becomes the child (the usual choice:
    /// suspect information should not feed trusted inference).
    LessReliableChild,
    /// The more reliable module becomes the child.
    MoreReliableChild,
}

impl TieBreak {
    /// Given a free choice, should `a` be the parent of `b`?
    fn a_parent(self, a: &str, b: &str, reliability: &ReliabilityOrder) -> bool {
        match self {
            TieBreak::LessReliableChild => reliability.more_reliable(a, b),
            TieBreak::MoreReliableChild => !reliability.more_reliable(a, b),
        }
    }
}

/// A DAG over modules: an edge points from a parent module to a child
/// whose inference conditions on the parent's shared variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderingGraph {
    modules: BTreeMap<String, ModuleSet>,
    edges: BTreeSet<(String, String)>,
}

impl Default for OrderingGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl OrderingGraph {
    /// An empty graph.
    pub fn new() -> Self {
        OrderingGraph {
            modules: BTreeMap::new(),
            edges: BTreeSet::new(),
        }
    }

    /// Adds a module under its own label.
    pub fn add_module(&mut self, module: ModuleSet) -> Result<(), OrderingError> {
        if self.modules.contains_key(&module.label) {
            return Err(OrderingError::LabelClash(module.label.clone()));
        }
        self.modules.insert(module.label.clone(), module);
        Ok(())
    }

    /// Adds a parent → child edge. Both modules must exist, share at
    /// least one variable, and the edge must not create a cycle.
    pub fn add_edge(&mut self, parent: &str, child: &str) -> Result<(), OrderingError> {
        let p = self
            .modules
            .get(parent)
            .ok_or_else(|| OrderingError::UnknownModule(parent.to_string()))?;
        let c = self
            .modules
            .get(child)
            .ok_or_else(|| OrderingError::UnknownModule(child.to_string()))?;
        if p.psi().intersection(&c.psi()).next().is_none() {
            return Err(OrderingError::EdgeWithoutSharedVariables(
                parent.to_string(),
                child.to_string(),
            ));
        }
        self.edges.insert((parent.to_string(), child.to_string()));
        if let Some(label) = self.find_cycle() {
            self.edges.remove(&(parent.to_string(), child.to_string()));
            return Err(OrderingError::CyclicModuleOrder(label));
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<String> {
        let mut indegree: BTreeMap<&str, usize> =
            self.modules.keys().map(|l| (l.as_str(), 0)).collect();
        for (_, child) in &self.edges {
            *indegree.get_mut(child.as_str()).expect("known") += 1;
        }
        let mut queue: Vec<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(l, _)| *l)
            .collect();
        let mut seen = 0;
        while let Some(l) = queue.pop() {
            seen += 1;
            for (p, c) in &self.edges {
                if p == l {
                    let d = indegree.get_mut(c.as_str()).expect("known");
                    *d -= 1;
                    if *d == 0 {
                        queue.push(c);
                    }
                }
            }
        }
        if seen == self.modules.len() {
            None
        } else {
            indegree
                .into_iter()
                .find(|(_, d)| *d > 0)
                .map(|(l, _)| l.to_string())
        }
    }

    /// Labels in name order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.modules.keys().map(String::as_str)
    }

    /// Number of modules.
    pub fn len(&self) -> usize {
        self.modules.len()
    }

    /// Whether the graph holds no modules.
    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    /// Looks up a module.
    pub fn module(&self, label: &str) -> Result<&ModuleSet, OrderingError> {
        self.modules
            .get(label)
            .ok_or_else(|| OrderingError::UnknownModule(label.to_string()))
    }

    /// All parent → child pairs in name order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(p, c)| (p.as_str(), c.as_str()))
    }

    /// Direct parents of a module.
    pub fn parents_of(&self, label: &str) -> Result<BTreeSet<String>, OrderingError> {
        self.module(label)?;
        Ok(self
            .edges
            .iter()
            .filter(|(_, c)| c == label)
            .map(|(p, _)| p.clone())
            .collect())
    }

    /// Direct children of a module.
    pub fn children_of(&self, label: &str) -> Result<BTreeSet<String>, OrderingError> {
        self.module(label)?;
        Ok(self
            .edges
            .iter()
            .filter(|(p, _)| p == label)
            .map(|(_, c)| c.clone())
            .collect())
    }

    /// All modules with a directed path to `label`.
    pub fn ancestors_of(&self, label: &str) -> Result<BTreeSet<String>, OrderingError> {
        self.reach(label, |edge| (edge.1.as_str(), edge.0.as_str()))
    }

    /// All modules reachable from `label`.
    pub fn descendants_of(&self, label: &str) -> Result<BTreeSet<String>, OrderingError> {
        self.reach(label, |edge| (edge.0.as_str(), edge.1.as_str()))
    }

    fn reach(
        &self,
        label: &str,
        orient: impl Fn(&(String, String)) -> (&str, &str),
    ) -> Result<BTreeSet<String>, OrderingError> {
        self.module(label)?;
        let mut out: BTreeSet<String> = BTreeSet::new();
        let mut stack = vec![label.to_string()];
        while let Some(l) = stack.pop() {
            for edge in &self.edges {
                let (from, to) = orient(edge);
                if from == l && to != label && out.insert(to.to_string()) {
                    stack.push(to.to_string());
                }
            }
        }
        Ok(out)
    }

    /// Renders the module ordering in Graphviz DOT syntax.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph module_order {\n");
        for label in self.modules.keys() {
            out.push_str(&format!("  \"{label}\" [shape=box];\n"));
        }
        for (p, c) in &self.edges {
            out.push_str(&format!("  \"{p}\" -> \"{c}\";\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Decides the relation between two modules built from an observable
/// bipartition.
///
/// An edge from a shared variable into a region only module B owns makes
/// A a candidate parent, and symmetrically; both kinds of edge present
/// mean the analyst chooses; no shared variables mean no constraint.
pub fn order_two(dag: &Dag, mod_a: &ModuleSet, mod_b: &ModuleSet) -> Result<OrderRelation, OrderingError> {
    let part = crate::modules::two_module_partition(dag, mod_a, mod_b)?;
    let a_candidate = edge_between(dag, &part.shared, &part.b_only);
    let b_candidate = edge_between(dag, &part.shared, &part.a_only);
    Ok(match (a_candidate, b_candidate) {
        (true, true) => OrderRelation::Both,
        (true, false) => OrderRelation::AtoB,
        (false, true) => OrderRelation::BtoA,
        (false, false) => OrderRelation::Unordered,
    })
}

fn edge_between(dag: &Dag, from: &NodeSet, to: &NodeSet) -> bool {
    from.iter().any(|f| {
        dag.children_of(f)
            .expect("known node")
            .iter()
            .any(|c| to.contains(c))
    })
}

/// One admissible outcome of the three-module rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderingChoice {
    /// Rendering such as `"A -> B -> C"` using the real module labels.
    pub description: String,
    /// Parent → child pairs among the three labels.
    pub module_edges: Vec<(String, String)>,
    /// Relation between the two halves of the split implied by this
    /// outcome. [`OrderRelation::AtoB`] means B is the parent of C.
    pub bc: OrderRelation,
}

/// Result of the three-module ordering rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ThreeModuleOrdering {
    /// Every outcome the DAG admits.
    pub admissible: Vec<OrderingChoice>,
    /// Index into `admissible` of the selected outcome.
    pub chosen: usize,
    /// The selected outcome materialized with the three modules.
    pub graph: OrderingGraph,
    /// Explanations of ambiguities and how they were resolved.
    pub notes: Vec<String>,
}

impl ThreeModuleOrdering {
    /// The selected outcome.
    pub fn choice(&self) -> &OrderingChoice {
        &self.admissible[self.chosen]
    }
}

/// Decides the order of three modules where `mod_b` and `mod_c` arise
/// from splitting a previous module T, and the relation between `mod_a`
/// and T is already known (`prior`: [`OrderRelation::AtoB`] means A was
/// the parent of T; it must not be [`OrderRelation::Both`]).
///
/// Returns every admissible outcome; when several are admissible the
/// reliability ranking picks one, preferring the more reliable half of
/// the split as the parent (per `tie_break`).
pub fn order_three(
    dag: &Dag,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
    mod_c: &ModuleSet,
    prior: OrderRelation,
    reliability: &ReliabilityOrder,
    tie_break: TieBreak,
) -> Result<ThreeModuleOrdering, OrderingError> {
    check_split(dag, None, mod_b, mod_c)?;

    let (psi_a, psi_b, psi_c) = (mod_a.psi(), mod_b.psi(), mod_c.psi());
    let ab: NodeSet = psi_a.intersection(&psi_b).cloned().collect();
    let ac: NodeSet = psi_a.intersection(&psi_c).cloned().collect();
    let full_bc: NodeSet = psi_b.intersection(&psi_c).cloned().collect();
    let bc_ul: NodeSet = full_bc.difference(&psi_a).cloned().collect();
    let minus = |s: &NodeSet, t: &NodeSet, u: &NodeSet| -> NodeSet {
        s.iter()
            .filter(|id| !t.contains(*id) && !u.contains(*id))
            .cloned()
            .collect()
    };
    let b_ul = minus(&psi_b, &psi_a, &psi_c);
    let c_ul = minus(&psi_c, &psi_a, &psi_b);
    let b_target: NodeSet = b_ul.union(&mod_b.xstar).cloned().collect();
    let c_target: NodeSet = c_ul.union(&mod_c.xstar).cloned().collect();

    let (a, b, c) = (
        mod_a.label.as_str(),
        mod_b.label.as_str(),
        mod_c.label.as_str(),
    );
    let mut admissible: Vec<OrderingChoice> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let push = |desc: String, edges: Vec<(&str, &str)>, bc_rel: OrderRelation,
                    admissible: &mut Vec<OrderingChoice>| {
        admissible.push(OrderingChoice {
            description: desc,
            module_edges: edges
                .into_iter()
                .map(|(p, q)| (p.to_string(), q.to_string()))
                .collect(),
            bc: bc_rel,
        });
    };

    match prior {
        OrderRelation::Both => {
            return Err(OrderingError::UnresolvedOrder(format!("{a} and the split module")));
        }
        OrderRelation::AtoB => {
            // A was the parent of the split module.
            match (!ab.is_empty(), !ac.is_empty()) {
                (true, true) => {
                    if bc_ul.is_empty() {
                        push(
                            format!("{a} -> ({b}, {c})"),
                            vec![(a, b), (a, c)],
                            OrderRelation::Unordered,
                            &mut admissible,
                        );
                    } else {
                        if edge_between(dag, &bc_ul, &c_target) {
                            push(
                                format!("{a} -> {b} -> {c}"),
                                vec![(a, b), (b, c)],
                                OrderRelation::AtoB,
                                &mut admissible,
                            );
                        }
                        if edge_between(dag, &bc_ul, &b_target) {
                            push(
                                format!("{a} -> {c} -> {b}"),
                                vec![(a, c), (c, b)],
                                OrderRelation::BtoA,
                                &mut admissible,
                            );
                        }
                    }
                }
                (true, false) | (false, true) => {
                    // Only one half shares variables with A; call it p.
                    let (p, q, p_target, q_target, p_is_b) = if ac.is_empty() {
                        (b, c, &b_target, &c_target, true)
                    } else {
                        (c, b, &c_target, &b_target, false)
                    };
                    let rel = |p_parent: bool| match (p_is_b, p_parent) {
                        (true, true) | (false, false) => OrderRelation::AtoB,
                        _ => OrderRelation::BtoA,
                    };
                    if bc_ul.is_empty() {
                        push(
                            format!("({q}, {a} -> {p})"),
                            vec![(a, p)],
                            OrderRelation::Unordered,
                            &mut admissible,
                        );
                    } else {
                        if edge_between(dag, &bc_ul, q_target) {
                            push(
                                format!("{a} -> {p} -> {q}"),
                                vec![(a, p), (p, q)],
                                rel(true),
                                &mut admissible,
                            );
                        }
                        if edge_between(dag, &bc_ul, p_target) {
                            push(
                                format!("({a}, {q}) -> {p}"),
                                vec![(a, p), (q, p)],
                                rel(false),
                                &mut admissible,
                            );
                        }
                    }
                }
                (false, false) => {
                    return Err(OrderingError::InconsistentSplit(format!(
                        "prior order says {a} is a parent, but it shares nothing with either half"
                    )));
                }
            }
        }
        OrderRelation::BtoA => {
            // The split module was the parent of A.
            match (!ab.is_empty(), !ac.is_empty()) {
                (true, true) => {
                    if full_bc.is_empty() {
                        push(
                            format!("({b}, {c}) -> {a}"),
                            vec![(b, a), (c, a)],
                            OrderRelation::Unordered,
                            &mut admissible,
                        );
                    } else {
                        let b_excl: NodeSet = psi_b.difference(&psi_c).cloned().collect();
                        let c_excl: NodeSet = psi_c.difference(&psi_b).cloned().collect();
                        if edge_between(dag, &full_bc, &c_excl) {
                            push(
                                format!("{b} -> {c} -> {a}"),
                                vec![(b, c), (c, a)],
                                OrderRelation::AtoB,
                                &mut admissible,
                            );
                        }
                        if edge_between(dag, &full_bc, &b_excl) {
                            push(
                                format!("{c} -> {b} -> {a}"),
                                vec![(c, b), (b, a)],
                                OrderRelation::BtoA,
                                &mut admissible,
                            );
                        }
                    }
                }
                (true, false) | (false, true) => {
                    let (p, q, p_target, q_target, p_is_b) = if ac.is_empty() {
                        (b, c, &b_target, &c_target, true)
                    } else {
                        (c, b, &c_target, &b_target, false)
                    };
                    let rel = |p_parent: bool| match (p_is_b, p_parent) {
                        (true, true) | (false, false) => OrderRelation::AtoB,
                        _ => OrderRelation::BtoA,
                    };
                    if bc_ul.is_empty() {
                        push(
                            format!("({q}, {p} -> {a})"),
                            vec![(p, a)],
                            OrderRelation::Unordered,
                            &mut admissible,
                        );
                    } else {
                        if edge_between(dag, &bc_ul, q_target) {
                            push(
                                format!("{p} -> ({a}, {q})"),
                                vec![(p, a), (p, q)],
                                rel(true),
                                &mut admissible,
                            );
                        }
                        if edge_between(dag, &bc_ul, p_target) {
                            push(
                                format!("{q} -> {p} -> {a}"),
                                vec![(q, p), (p, a)],
                                rel(false),
                                &mut admissible,
                            );
                        }
                    }
                }
                (false, false) => {
                    return Err(OrderingError::InconsistentSplit(format!(
                        "prior order says {a} is a child, but it shares nothing with either half"
                    )));
                }
            }
        }
        OrderRelation::Unordered => {
            if !ab.is_empty() || !ac.is_empty() {
                return Err(OrderingError::InconsistentSplit(format!(
                    "prior order says {a} is unordered with the split module, yet they share variables"
                )));
            }
            if bc_ul.is_empty() {
                push(
                    format!("({a}, {b}, {c})"),
                    vec![],
                    OrderRelation::Unordered,
                    &mut admissible,
                );
            } else {
                if edge_between(dag, &bc_ul, &c_target) {
                    push(
                        format!("({a}, {b} -> {c})"),
                        vec![(b, c)],
                        OrderRelation::AtoB,
                        &mut admissible,
                    );
                }
                if edge_between(dag, &bc_ul, &b_target) {
                    push(
                        format!("({a}, {c} -> {b})"),
                        vec![(c, b)],
                        OrderRelation::BtoA,
                        &mut admissible,
                    );
                }
            }
        }
    }

    if admissible.is_empty() {
        return Err(OrderingError::InconsistentSplit(
            "the halves share variables but no edge selects an order".to_string(),
        ));
    }

    let chosen = if admissible.len() == 1 {
        0
    } else {
        let want_b_parent = tie_break.a_parent(b, c, reliability);
        let idx = admissible
            .iter()
            .position(|o| match o.bc {
                OrderRelation::AtoB => want_b_parent,
                OrderRelation::BtoA => !want_b_parent,
                _ => false,
            })
            .unwrap_or(0);
        notes.push(format!(
            "{} orderings admissible; chose `{}` by reliability tie-break",
            admissible.len(),
            admissible[idx].description
        ));
        idx
    };

    let mut graph = OrderingGraph::new();
    graph.add_module(mod_a.clone())?;
    graph.add_module(mod_b.clone())?;
    graph.add_module(mod_c.clone())?;
    for (p, q) in &admissible[chosen].module_edges {
        graph.add_edge(p, q)?;
    }

    Ok(ThreeModuleOrdering {
        admissible,
        chosen,
        graph,
        notes,
    })
}

fn check_split(
    dag: &Dag,
    expected: Option<&ModuleSet>,
    mod_b: &ModuleSet,
    mod_c: &ModuleSet,
) -> Result<(), OrderingError> {
    let joint_xstar: NodeSet = mod_b.xstar.union(&mod_c.xstar).cloned().collect();
    let t = construct_module(dag, "T", &joint_xstar)?;
    let union: NodeSet = mod_b.psi().union(&mod_c.psi()).cloned().collect();
    if union != t.psi() {
        return Err(OrderingError::InconsistentSplit(format!(
            "variables of `{}` and `{}` do not reassemble the module over their joint observables",
            mod_b.label, mod_c.label
        )));
    }
    if let Some(expected) = expected {
        if t.psi() != expected.psi() {
            return Err(OrderingError::InconsistentSplit(format!(
                "`{}` and `{}` do not split `{}`",
                mod_b.label, mod_c.label, expected.label
            )));
        }
    }
    Ok(())
}

/// The module groups around a split target: ancestors feed it,
/// descendants consume it, and the rest are unrelated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupedOrderingGraph {
    /// The module being examined or split.
    pub target: String,
    /// Modules with a path into the target.
    pub ancestors: BTreeSet<String>,
    /// Modules the target has a path into.
    pub descendants: BTreeSet<String>,
    /// Modules with no path either way.
    pub others: BTreeSet<String>,
}

/// Groups the modules of `j` by their relation to `target`.
pub fn group_modules(j: &OrderingGraph, target: &str) -> Result<GroupedOrderingGraph, OrderingError> {
    let ancestors = j.ancestors_of(target)?;
    let descendants = j.descendants_of(target)?;
    let others = j
        .labels()
        .filter(|l| *l != target && !ancestors.contains(*l) && !descendants.contains(*l))
        .map(str::to_string)
        .collect();
    Ok(GroupedOrderingGraph {
        target: target.to_string(),
        ancestors,
        descendants,
        others,
    })
}

/// Replaces module `target` of `j` by the two halves of its split and
/// rewires the neighbourhood.
///
/// `order_bc` is the relation between the halves ([`OrderRelation::AtoB`]
/// means `mod_b` is the parent); it must be resolved. Former parents of
/// the target attach to the half they share variables with, trying the
/// pair's parent half first; former children symmetrically, trying the
/// pair's child half first. Modules without a direct edge to the target
/// keep their distance.
pub fn update_after_split(
    j: &OrderingGraph,
    target: &str,
    mod_b: &ModuleSet,
    mod_c: &ModuleSet,
    order_bc: OrderRelation,
    dag: &Dag,
) -> Result<OrderingGraph, OrderingError> {
    let old = j.module(target)?;
    check_split(dag, Some(old), mod_b, mod_c)?;
    if order_bc == OrderRelation::Both {
        return Err(OrderingError::UnresolvedOrder(format!(
            "{} and {}",
            mod_b.label, mod_c.label
        )));
    }
    for half in [&mod_b.label, &mod_c.label] {
        if *half != target && j.modules.contains_key(half) {
            return Err(OrderingError::LabelClash(half.clone()));
        }
    }

    let mut new = OrderingGraph::new();
    for (label, module) in &j.modules {
        if label != target {
            new.add_module(module.clone())?;
        }
    }
    new.add_module(mod_b.clone())?;
    new.add_module(mod_c.clone())?;

    for (p, c) in &j.edges {
        if p != target && c != target {
            new.add_edge(p, c)?;
        }
    }
    match order_bc {
        OrderRelation::AtoB => new.add_edge(&mod_b.label, &mod_c.label)?,
        OrderRelation::BtoA => new.add_edge(&mod_c.label, &mod_b.label)?,
        _ => {}
    }

    let psi_b = mod_b.psi();
    let psi_c = mod_c.psi();
    let shares = |m: &ModuleSet, region: &NodeSet| -> bool {
        m.psi().intersection(region).next().is_some()
    };

    // Priority among the halves: former parents try the pair's parent
    // half first, former children the pair's child half first. For an
    // unordered pair both halves are tried independently.
    let halves_parent_first: Vec<(&str, &NodeSet)> = match order_bc {
        OrderRelation::BtoA => vec![(&mod_c.label, &psi_c), (&mod_b.label, &psi_b)],
        _ => vec![(&mod_b.label, &psi_b), (&mod_c.label, &psi_c)],
    };

    for (neighbour_label, module) in &j.modules {
        if neighbour_label == target {
            continue;
        }
        if j.edges.contains(&(neighbour_label.clone(), target.to_string())) {
            if order_bc == OrderRelation::Unordered {
                for (half, psi) in &halves_parent_first {
                    if shares(module, psi) {
                        new.add_edge(neighbour_label, half)?;
                    }
                }
            } else if let Some((half, _)) = halves_parent_first
                .iter()
                .find(|(_, psi)| shares(module, psi))
            {
                new.add_edge(neighbour_label, half)?;
            }
        }
        if j.edges.contains(&(target.to_string(), neighbour_label.clone())) {
            if order_bc == OrderRelation::Unordered {
                for (half, psi) in &halves_parent_first {
                    if shares(module, psi) {
                        new.add_edge(half, neighbour_label)?;
                    }
                }
            } else if let Some((half, _)) = halves_parent_first
                .iter()
                .rev()
                .find(|(_, psi)| shares(module, psi))
            {
                new.add_edge(half, neighbour_label)?;
            }
        }
    }

    Ok(new)
}

/// Runs the sequential splitting pipeline on a labelled partition of the
/// observables.
///
/// Blocks are processed most reliable first: the current most reliable
/// block is split off as its own module, ordered against the module over
/// all remaining observables, and the ordering graph updated, until every
/// block stands alone. Returns the modules (one per block, in reliability
/// order) and the final ordering graph.
pub fn sequential_split(
    dag: &Dag,
    blocks: &[(String, NodeSet)],
    reliability: &ReliabilityOrder,
    tie_break: TieBreak,
) -> Result<(Vec<ModuleSet>, OrderingGraph), OrderingError> {
    if blocks.is_empty() {
        return Err(OrderingError::InconsistentSplit(
            "no partition blocks given".to_string(),
        ));
    }
    let block_labels: BTreeSet<&str> = blocks.iter().map(|(l, _)| l.as_str()).collect();
    if block_labels.len() != blocks.len() {
        return Err(OrderingError::LabelClash(
            "duplicate partition block label".to_string(),
        ));
    }
    let ranked: BTreeSet<&str> = reliability.labels().iter().map(String::as_str).collect();
    if ranked != block_labels {
        return Err(OrderingError::InconsistentSplit(
            "reliability order must rank exactly the partition blocks".to_string(),
        ));
    }
    crate::modules::check_observable_split(dag, blocks)?;

    // Process blocks most reliable first.
    let mut ordered_blocks: Vec<&(String, NodeSet)> = blocks.iter().collect();
    ordered_blocks.sort_by_key(|(l, _)| reliability.rank(l).expect("validated"));
    let s = ordered_blocks.len();

    let tail_xstar = |from: usize| -> NodeSet {
        ordered_blocks[from..]
            .iter()
            .flat_map(|(_, xs)| xs.iter().cloned())
            .collect()
    };
    let tail_label = |from: usize| -> String {
        if from == s - 1 {
            ordered_blocks[from].0.clone()
        } else {
            format!("rest_{}", from + 1)
        }
    };

    let mut j = OrderingGraph::new();
    let first = construct_module(dag, ordered_blocks[0].0.clone(), &ordered_blocks[0].1)?;
    j.add_module(first.clone())?;

    if s == 1 {
        return Ok((vec![first], j));
    }

    let rest = construct_module(dag, tail_label(1), &tail_xstar(1))?;
    let relation = order_two(dag, &first, &rest)?;
    let resolved = match relation {
        OrderRelation::Both => {
            if tie_break.a_parent(&first.label, &rest.label, reliability) {
                OrderRelation::AtoB
            } else {
                OrderRelation::BtoA
            }
        }
        other => other,
    };
    j.add_module(rest.clone())?;
    match resolved {
        OrderRelation::AtoB => j.add_edge(&first.label, &rest.label)?,
        OrderRelation::BtoA => j.add_edge(&rest.label, &first.label)?,
        _ => {}
    }

    // Split the tail one block at a time.
    let mut tail = rest;
    for r in 1..s - 1 {
        let head = construct_module(dag, ordered_blocks[r].0.clone(), &ordered_blocks[r].1)?;
        let new_tail = construct_module(dag, tail_label(r + 1), &tail_xstar(r + 1))?;

        let groups = group_modules(&j, &tail.label)?;
        let context = if !groups.ancestors.is_empty() {
            union_module(&j, &groups.ancestors, "ancestors")?
        } else if !groups.descendants.is_empty() {
            union_module(&j, &groups.descendants, "descendants")?
        } else {
            ModuleSet {
                label: "unrelated".to_string(),
                xstar: NodeSet::new(),
                x: NodeSet::new(),
                theta: NodeSet::new(),
            }
        };
        let context_prior = if !groups.ancestors.is_empty() {
            OrderRelation::AtoB
        } else if !groups.descendants.is_empty() {
            OrderRelation::BtoA
        } else {
            OrderRelation::Unordered
        };

        let three = order_three(
            dag,
            &context,
            &head,
            &new_tail,
            context_prior,
            reliability,
            tie_break,
        )?;
        j = update_after_split(&j, &tail.label, &head, &new_tail, three.choice().bc, dag)?;
        tail = new_tail;
    }

    let modules: Vec<ModuleSet> = ordered_blocks
        .iter()
        .map(|(l, _)| j.module(l).expect("all blocks placed").clone())
        .collect();
    Ok((modules, j))
}

fn union_module(
    j: &OrderingGraph,
    labels: &BTreeSet<String>,
    name: &str,
) -> Result<ModuleSet, OrderingError> {
    let mut m = ModuleSet {
        label: name.to_string(),
        xstar: NodeSet::new(),
        x: NodeSet::new(),
        theta: NodeSet::new(),
    };
    for l in labels {
        let part = j.module(l)?;
        m.xstar.extend(part.xstar.iter().cloned());
        m.x.extend(part.x.iter().cloned());
        m.theta.extend(part.theta.iter().cloned());
    }
    Ok(m)
}

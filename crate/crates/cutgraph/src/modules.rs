//! Self-contained Bayesian modules built from groups of observables.
//!
//! An analyst partitions the observable nodes into groups they trust
//! differently. Each group `X*` is then enlarged into a *module*: the
//! smallest variable set whose parameters can be inferred without touching
//! anything exclusive to other groups. [`construct_module`] performs that
//! enlargement; [`associated_parameters`] and [`associated_observables`]
//! compute the dependence-based variable sets the enlargement is designed
//! around; [`two_module_partition`] and [`three_module_partition`] carve
//! the variable universe into the disjoint regions that the ordering and
//! factorization machinery reasons about; and [`check_structure`] verifies
//! the structural guarantees those constructions are supposed to satisfy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{node_set, Dag, DagError, NodeId, NodeKind, NodeSet};
use crate::separation::{is_d_separated, SeparationQuery};

/// Errors raised while building modules or partitions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModulesError {
    /// A focal set contained a parameter node.
    #[error("node `{0}` is not an observable")]
    NotObservable(NodeId),
    /// The focal sets of the given modules do not partition the
    /// observables of the graph.
    #[error("module focal sets do not partition the observables: {0}")]
    NotAPartition(String),
    /// An underlying graph query failed.
    #[error(transparent)]
    Graph(#[from] DagError),
}

/// A self-contained module: focal observables `xstar`, the full observable
/// set `x` it needs, and the parameters `theta` it infers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSet {
    /// Display name, e.g. `"A"`.
    pub label: String,
    /// The observables this module was grown from.
    pub xstar: NodeSet,
    /// All observables of the module; always contains `xstar`.
    pub x: NodeSet,
    /// All parameters of the module.
    pub theta: NodeSet,
}

impl ModuleSet {
    /// Every variable of the module.
    pub fn psi(&self) -> NodeSet {
        self.x.union(&self.theta).cloned().collect()
    }

    /// Whether the module contains the node.
    pub fn contains(&self, id: &NodeId) -> bool {
        self.x.contains(id) || self.theta.contains(id)
    }
}

fn require_observables(dag: &Dag, xstar: &NodeSet) -> Result<(), ModulesError> {
    dag.check_nodes(xstar)?;
    for id in xstar {
        if dag.kind(id)? != NodeKind::Observable {
            return Err(ModulesError::NotObservable(id.clone()));
        }
    }
    Ok(())
}

/// Observable ancestors of the focal set (ancestors intersected with the
/// observables; focal nodes themselves are excluded).
pub fn observable_ancestors(dag: &Dag, xstar: &NodeSet) -> Result<NodeSet, ModulesError> {
    require_observables(dag, xstar)?;
    let mut anc = dag.ancestors(xstar)?;
    anc.retain(|id| dag.kind(id).expect("known node") == NodeKind::Observable);
    Ok(anc)
}

/// Parameters whose inference the focal observables genuinely inform: the
/// ancestor parameters of `xstar` that remain dependent on `xstar` after
/// conditioning on the observable ancestors.
///
/// Dependence is judged graphically by d-separation.
pub fn associated_parameters(dag: &Dag, xstar: &NodeSet) -> Result<NodeSet, ModulesError> {
    require_observables(dag, xstar)?;
    let anx = observable_ancestors(dag, xstar)?;
    let mut out = NodeSet::new();
    for theta in dag.ancestors(xstar)? {
        if dag.kind(&theta)? != NodeKind::Parameter {
            continue;
        }
        let q = SeparationQuery::new(node_set([theta.clone()]), xstar.clone(), anx.clone());
        if !is_d_separated(dag, &q).expect("sets are disjoint by construction") {
            out.insert(theta);
        }
    }
    Ok(out)
}

/// Observable ancestors that carry information about the focal set: those
/// `x` that remain dependent on `xstar` after conditioning on the other
/// observable ancestors.
pub fn associated_observables(dag: &Dag, xstar: &NodeSet) -> Result<NodeSet, ModulesError> {
    require_observables(dag, xstar)?;
    let anx = observable_ancestors(dag, xstar)?;
    let mut out = NodeSet::new();
    for x in &anx {
        let mut rest = anx.clone();
        rest.remove(x);
        let q = SeparationQuery::new(node_set([x.clone()]), xstar.clone(), rest);
        if !is_d_separated(dag, &q).expect("sets are disjoint by construction") {
            out.insert(x.clone());
        }
    }
    Ok(out)
}

/// Grows the focal observables into a self-contained module.
///
/// Walks ancestor paths backwards from `xstar`. The walk passes through
/// parameters and through focal observables, and stops at (but includes)
/// any other observable: such a boundary observable screens everything
/// above it off from the focal set, so nothing beyond it is needed.
/// Parameters reached this way become `theta`; boundary observables join
/// `xstar` in `x`.
pub fn construct_module(
    dag: &Dag,
    label: impl Into<String>,
    xstar: &NodeSet,
) -> Result<ModuleSet, ModulesError> {
    require_observables(dag, xstar)?;
    let mut x = xstar.clone();
    let mut theta = NodeSet::new();
    let mut stack: Vec<NodeId> = xstar.iter().cloned().collect();
    while let Some(v) = stack.pop() {
        for p in dag.parents_of(&v)? {
            match dag.kind(p)? {
                NodeKind::Observable => {
                    if !xstar.contains(p) {
                        x.insert(p.clone());
                    }
                }
                NodeKind::Parameter => {
                    if theta.insert(p.clone()) {
                        stack.push(p.clone());
                    }
                }
            }
        }
    }
    Ok(ModuleSet {
        label: label.into(),
        xstar: xstar.clone(),
        x,
        theta,
    })
}

/// The four disjoint variable regions induced by two modules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoModulePartition {
    /// Variables only in module A.
    pub a_only: NodeSet,
    /// Variables only in module B.
    pub b_only: NodeSet,
    /// Variables in both modules.
    pub shared: NodeSet,
    /// Variables in neither module.
    pub complement: NodeSet,
}

impl TwoModulePartition {
    /// Splits a region by node kind.
    pub fn split_kinds(&self, dag: &Dag, region: &NodeSet) -> (NodeSet, NodeSet) {
        split_kinds(dag, region)
    }
}

fn split_kinds(dag: &Dag, region: &NodeSet) -> (NodeSet, NodeSet) {
    let mut x = NodeSet::new();
    let mut theta = NodeSet::new();
    for id in region {
        match dag.kind(id).expect("known node") {
            NodeKind::Observable => x.insert(id.clone()),
            NodeKind::Parameter => theta.insert(id.clone()),
        };
    }
    (x, theta)
}

/// Validates that labelled blocks partition the observables of the graph:
/// every block holds only observables, no observable appears twice, and
/// none is left out.
pub fn check_observable_split(dag: &Dag, blocks: &[(String, NodeSet)]) -> Result<(), ModulesError> {
    for (_, xstar) in blocks {
        for id in xstar {
            if dag.kind(id)? != NodeKind::Observable {
                return Err(ModulesError::NotObservable(id.clone()));
            }
        }
    }
    let refs: Vec<&NodeSet> = blocks.iter().map(|(_, x)| x).collect();
    check_observable_partition(dag, &refs)
}

fn check_observable_partition(dag: &Dag, xstars: &[&NodeSet]) -> Result<(), ModulesError> {
    let mut seen = NodeSet::new();
    for xstar in xstars {
        for id in *xstar {
            if !seen.insert(id.clone()) {
                return Err(ModulesError::NotAPartition(format!(
                    "observable `{id}` appears in more than one focal set"
                )));
            }
        }
    }
    let all = dag.observables();
    if seen != all {
        let missing: Vec<String> = all.difference(&seen).map(|id| id.to_string()).collect();
        return Err(ModulesError::NotAPartition(format!(
            "observables not covered: {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

/// Partitions the variable universe by membership in two modules.
///
/// The modules' focal sets must partition the observables of the graph.
pub fn two_module_partition(
    dag: &Dag,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
) -> Result<TwoModulePartition, ModulesError> {
    check_observable_partition(dag, &[&mod_a.xstar, &mod_b.xstar])?;
    let psi_a = mod_a.psi();
    let psi_b = mod_b.psi();
    let mut a_only = NodeSet::new();
    let mut b_only = NodeSet::new();
    let mut shared = NodeSet::new();
    let mut complement = NodeSet::new();
    for id in dag.all_nodes() {
        match (psi_a.contains(&id), psi_b.contains(&id)) {
            (true, true) => shared.insert(id),
            (true, false) => a_only.insert(id),
            (false, true) => b_only.insert(id),
            (false, false) => complement.insert(id),
        };
    }
    Ok(TwoModulePartition {
        a_only,
        b_only,
        shared,
        complement,
    })
}

/// The eight disjoint variable regions induced by three modules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SevenWayPartition {
    /// Only in A.
    pub a_only: NodeSet,
    /// Only in B.
    pub b_only: NodeSet,
    /// Only in C.
    pub c_only: NodeSet,
    /// In A and B but not C.
    pub ab: NodeSet,
    /// In A and C but not B.
    pub ac: NodeSet,
    /// In B and C but not A.
    pub bc: NodeSet,
    /// In all three.
    pub abc: NodeSet,
    /// In none of the modules.
    pub complement: NodeSet,
}

/// Partitions the variable universe by membership in three modules.
///
/// The modules' focal sets must partition the observables of the graph.
pub fn three_module_partition(
    dag: &Dag,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
    mod_c: &ModuleSet,
) -> Result<SevenWayPartition, ModulesError> {
    check_observable_partition(dag, &[&mod_a.xstar, &mod_b.xstar, &mod_c.xstar])?;
    let (psi_a, psi_b, psi_c) = (mod_a.psi(), mod_b.psi(), mod_c.psi());
    let mut part = SevenWayPartition {
        a_only: NodeSet::new(),
        b_only: NodeSet::new(),
        c_only: NodeSet::new(),
        ab: NodeSet::new(),
        ac: NodeSet::new(),
        bc: NodeSet::new(),
        abc: NodeSet::new(),
        complement: NodeSet::new(),
    };
    for id in dag.all_nodes() {
        let key = (
            psi_a.contains(&id),
            psi_b.contains(&id),
            psi_c.contains(&id),
        );
        let bucket = match key {
            (true, false, false) => &mut part.a_only,
            (false, true, false) => &mut part.b_only,
            (false, false, true) => &mut part.c_only,
            (true, true, false) => &mut part.ab,
            (true, false, true) => &mut part.ac,
            (false, true, true) => &mut part.bc,
            (true, true, true) => &mut part.abc,
            (false, false, false) => &mut part.complement,
        };
        bucket.insert(id);
    }
    Ok(part)
}

/// One verified structural statement in a [`StructureReport`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    /// Short identifier of the property checked.
    pub name: String,
    /// Whether the property held.
    pub passed: bool,
    /// Nodes witnessing a violation; empty when passed.
    pub offending: NodeSet,
}

/// Outcome of the structural checks on a two-module partition.
///
/// Violations indicate that the partition was not produced by the module
/// construction rule (or that there is an implementation bug); the checks
/// themselves never fail to run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StructureReport {
    pub checks: Vec<CheckResult>,
}

impl StructureReport {
    /// True when every check passed.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The failed checks.
    pub fn violations(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Verifies the structural guarantees of a two-module partition:
///
/// 1. the complement region contains only parameters, and they have no
///    children;
/// 2. each exclusive region touches the rest of the graph only through the
///    shared region (parents inside shared; children inside shared or the
///    complement);
/// 3. no collider has one parent in each exclusive region with the
///    collision node shared;
/// 4. shared parameters have only shared-observable parents, and shared
///    observables have no parents in the complement.
pub fn check_structure(dag: &Dag, part: &TwoModulePartition) -> StructureReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, offending: NodeSet| {
        checks.push(CheckResult {
            name: name.to_string(),
            passed: offending.is_empty(),
            offending,
        });
    };

    let (complement_x, _) = split_kinds(dag, &part.complement);
    push("complement-parameters-only", complement_x);

    let complement_children = dag
        .children(&part.complement)
        .expect("partition nodes are known");
    push("complement-childless", complement_children);

    for (name, region) in [("a-only", &part.a_only), ("b-only", &part.b_only)] {
        let parents = dag.parents(region).expect("known");
        let bad_parents: NodeSet = parents
            .difference(&part.shared)
            .cloned()
            .collect();
        push(&format!("{name}-parents-shared"), bad_parents);

        let children = dag.children(region).expect("known");
        let bad_children: NodeSet = children
            .iter()
            .filter(|c| !part.shared.contains(c) && !part.complement.contains(c))
            .cloned()
            .collect();
        push(&format!("{name}-children-shared-or-complement"), bad_children);
    }

    let mut v_structures = NodeSet::new();
    for mid in &part.shared {
        let parents = dag.parents_of(mid).expect("known");
        let from_a = parents.iter().any(|p| part.a_only.contains(p));
        let from_b = parents.iter().any(|p| part.b_only.contains(p));
        if from_a && from_b {
            v_structures.insert(mid.clone());
        }
    }
    push("no-exclusive-collision-in-shared", v_structures);

    let (shared_x, shared_theta) = split_kinds(dag, &part.shared);
    let theta_parents = dag.parents(&shared_theta).expect("known");
    let bad: NodeSet = theta_parents.difference(&shared_x).cloned().collect();
    push("shared-parameter-parents-are-shared-observables", bad);

    let x_parents = dag.parents(&shared_x).expect("known");
    let bad: NodeSet = x_parents
        .iter()
        .filter(|p| part.complement.contains(p))
        .cloned()
        .collect();
    push("shared-observable-parents-outside-complement", bad);

    StructureReport { checks }
}

/// Whether a module's posterior is computable from its own variables: the
/// parents of its parameters and focal observables all lie inside the
/// module.
pub fn is_self_contained(dag: &Dag, module: &ModuleSet) -> bool {
    let mut heads = module.theta.clone();
    heads.extend(module.xstar.iter().cloned());
    match dag.parents(&heads) {
        Ok(parents) => parents.iter().all(|p| module.contains(p)),
        Err(_) => false,
    }
}

/// Draws a random DAG for property tests: between `n_min` and `n_max`
/// nodes, each ordered pair `(i, j)` with `i < j` receiving an edge with
/// probability `2/n`, and each node observable with probability one half
/// (at least one observable is forced).
pub fn random_dag_sized(seed: u64, n_min: usize, n_max: usize) -> Dag {
    assert!(n_min >= 2 && n_min <= n_max);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = rng.random_range(n_min..=n_max);
    let mut kinds: Vec<NodeKind> = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                NodeKind::Observable
            } else {
                NodeKind::Parameter
            }
        })
        .collect();
    if kinds.iter().all(|k| *k == NodeKind::Parameter) {
        let i = rng.random_range(0..n);
        kinds[i] = NodeKind::Observable;
    }
    let name = |i: usize| format!("v{i:02}");
    let nodes: Vec<(String, NodeKind)> =
        kinds.iter().enumerate().map(|(i, k)| (name(i), *k)).collect();
    let p_edge = 2.0 / n as f64;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p_edge) {
                edges.push((name(i), name(j)));
            }
        }
    }
    crate::dag::build_dag(nodes, edges).expect("triangular edges cannot cycle")
}

/// Standard-size random DAG (4 to 30 nodes) for the property suites.
pub fn random_dag(seed: u64) -> Dag {
    random_dag_sized(seed, 4, 30)
}

/// Splits the observables of a graph uniformly at random into `blocks`
/// focal sets. Blocks may come out empty when observables are scarce.
pub fn random_observable_split(dag: &Dag, blocks: usize, seed: u64) -> Vec<NodeSet> {
    assert!(blocks >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = vec![NodeSet::new(); blocks];
    for x in dag.observables() {
        let b = rng.random_range(0..blocks);
        out[b].insert(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::build_dag;
    use crate::testutil::figure1_dag;

    fn dashed_figure1(m: usize) -> Dag {
        // Only the outcome-model part: beta, pi, W_i, C_i, Y_i.
        let mut nodes = vec![
            ("beta".to_string(), NodeKind::Parameter),
            ("pi".to_string(), NodeKind::Parameter),
        ];
        let mut edges = Vec::new();
        for i in 1..=m {
            let (w, c, y) = (format!("W_{i}"), format!("C_{i}"), format!("Y_{i}"));
            nodes.push((w.clone(), NodeKind::Parameter));
            nodes.push((c.clone(), NodeKind::Observable));
            nodes.push((y.clone(), NodeKind::Observable));
            edges.push(("pi".to_string(), w.clone()));
            edges.push((c.clone(), w.clone()));
            edges.push(("beta".to_string(), y.clone()));
            edges.push((w, y.clone()));
            edges.push((c, y));
        }
        build_dag(nodes, edges).unwrap()
    }

    fn appendix_b_dag() -> Dag {
        build_dag(
            [
                ("phi", NodeKind::Parameter),
                ("theta", NodeKind::Parameter),
                ("Y", NodeKind::Observable),
                ("Z", NodeKind::Observable),
            ],
            [("phi", "Z"), ("phi", "Y"), ("theta", "Y")],
        )
        .unwrap()
    }

    #[test]
    fn dashed_example_associated_sets() {
        let dag = dashed_figure1(2);
        let xstar = node_set(["Y_1", "Y_2"]);
        assert_eq!(
            associated_parameters(&dag, &xstar).unwrap(),
            node_set(["W_1", "W_2", "beta", "pi"])
        );
        assert_eq!(
            associated_observables(&dag, &xstar).unwrap(),
            node_set(["C_1", "C_2"])
        );
    }

    #[test]
    fn screened_ancestor_parameter_is_excluded() {
        // theta -> x1 -> x2: conditioning on x1 separates theta from x2.
        let dag = build_dag(
            [
                ("theta", NodeKind::Parameter),
                ("x1", NodeKind::Observable),
                ("x2", NodeKind::Observable),
            ],
            [("theta", "x1"), ("x1", "x2")],
        )
        .unwrap();
        let xstar = node_set(["x2"]);
        assert!(associated_parameters(&dag, &xstar).unwrap().is_empty());
        assert_eq!(
            associated_observables(&dag, &xstar).unwrap(),
            node_set(["x1"])
        );
    }

    #[test]
    fn observable_chain_screens_distant_ancestors() {
        let dag = build_dag(
            [
                ("x1", NodeKind::Observable),
                ("x2", NodeKind::Observable),
                ("x3", NodeKind::Observable),
            ],
            [("x1", "x2"), ("x2", "x3")],
        )
        .unwrap();
        let xstar = node_set(["x3"]);
        assert!(associated_parameters(&dag, &xstar).unwrap().is_empty());
        assert_eq!(
            associated_observables(&dag, &xstar).unwrap(),
            node_set(["x2"])
        );
    }

    #[test]
    fn rejects_parameters_in_focal_set() {
        let dag = dashed_figure1(1);
        let err = construct_module(&dag, "A", &node_set(["beta"])).unwrap_err();
        assert_eq!(err, ModulesError::NotObservable("beta".into()));
    }

    #[test]
    fn regression_example_modules() {
        let dag = figure1_dag(2, 3);
        let xstar_a = node_set(["Y_1", "Y_2", "Z_1", "Z_2", "C_1", "C_2"]);
        let xstar_b = node_set(["Z_3", "W_3", "C_3"]);
        let mod_a = construct_module(&dag, "A", &xstar_a).unwrap();
        let mod_b = construct_module(&dag, "B", &xstar_b).unwrap();

        assert_eq!(mod_a.theta, node_set(["W_1", "W_2", "beta", "lambda", "pi"]));
        assert_eq!(mod_a.x, xstar_a);
        assert_eq!(mod_b.theta, node_set(["lambda", "pi"]));
        assert_eq!(mod_b.x, xstar_b);

        let part = two_module_partition(&dag, &mod_a, &mod_b).unwrap();
        assert_eq!(part.shared, node_set(["lambda", "pi"]));
        assert!(part.complement.is_empty());
        assert!(check_structure(&dag, &part).all_passed());
        assert!(is_self_contained(&dag, &mod_a));
        assert!(is_self_contained(&dag, &mod_b));
    }

    #[test]
    fn surrogate_example_modules() {
        let dag = appendix_b_dag();
        let mod_a = construct_module(&dag, "A", &node_set(["Z"])).unwrap();
        let mod_b = construct_module(&dag, "B", &node_set(["Y"])).unwrap();
        assert_eq!(mod_a.psi(), node_set(["Z", "phi"]));
        assert_eq!(mod_b.psi(), node_set(["Y", "phi", "theta"]));

        let part = two_module_partition(&dag, &mod_a, &mod_b).unwrap();
        assert_eq!(part.shared, node_set(["phi"]));
        assert_eq!(part.a_only, node_set(["Z"]));
        assert_eq!(part.b_only, node_set(["Y", "theta"]));
        assert!(part.complement.is_empty());
        assert!(check_structure(&dag, &part).all_passed());
    }

    #[test]
    fn boundary_observables_stop_the_walk() {
        // theta2 -> xb -> y and theta1 -> y: the walk includes xb but not
        // its ancestors.
        let dag = build_dag(
            [
                ("theta1", NodeKind::Parameter),
                ("theta2", NodeKind::Parameter),
                ("xb", NodeKind::Observable),
                ("y", NodeKind::Observable),
            ],
            [("theta2", "xb"), ("xb", "y"), ("theta1", "y")],
        )
        .unwrap();
        let m = construct_module(&dag, "A", &node_set(["y"])).unwrap();
        assert_eq!(m.x, node_set(["xb", "y"]));
        assert_eq!(m.theta, node_set(["theta1"]));
    }

    #[test]
    fn partition_validation_catches_overlap_and_gaps() {
        let dag = appendix_b_dag();
        let mod_a = construct_module(&dag, "A", &node_set(["Z"])).unwrap();
        let mod_b = construct_module(&dag, "B", &node_set(["Z", "Y"])).unwrap();
        assert!(matches!(
            two_module_partition(&dag, &mod_a, &mod_b),
            Err(ModulesError::NotAPartition(_))
        ));
        let mod_small = construct_module(&dag, "B", &node_set([] as [&str; 0])).unwrap();
        assert!(matches!(
            two_module_partition(&dag, &mod_a, &mod_small),
            Err(ModulesError::NotAPartition(_))
        ));
    }

    #[test]
    fn structure_report_flags_hand_built_violation() {
        // Declare theta1's variables as belonging to nobody: the
        // complement then has a child, violating the terminal property.
        let dag = appendix_b_dag();
        let part = TwoModulePartition {
            a_only: node_set(["Z", "phi"]),
            b_only: node_set(["Y"]),
            shared: NodeSet::new(),
            complement: node_set(["theta"]),
        };
        let report = check_structure(&dag, &part);
        assert!(!report.all_passed());
        let names: Vec<&str> = report.violations().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"complement-childless"));
    }

    #[test]
    fn missing_shared_parameter_breaks_self_containment() {
        let dag = figure1_dag(2, 3);
        let xstar_b = node_set(["Z_3", "W_3", "C_3"]);
        let mut mod_b = construct_module(&dag, "B", &xstar_b).unwrap();
        mod_b.theta.remove(&"pi".into());
        assert!(!is_self_contained(&dag, &mod_b));
    }

    #[test]
    fn construction_is_idempotent_on_its_focal_set() {
        let dag = figure1_dag(3, 5);
        let split = random_observable_split(&dag, 2, 7);
        for xstar in &split {
            let m = construct_module(&dag, "M", xstar).unwrap();
            let again = construct_module(&dag, "M", &m.xstar).unwrap();
            assert_eq!(m, again);
        }
    }

    #[test]
    fn generator_is_reproducible_and_in_bounds() {
        for seed in 0..20 {
            let d1 = random_dag(seed);
            let d2 = random_dag(seed);
            assert_eq!(d1, d2);
            assert!((4..=30).contains(&d1.node_count()));
            assert!(!d1.observables().is_empty());
        }
        let split = random_observable_split(&random_dag(3), 2, 9);
        assert_eq!(split.len(), 2);
    }
}

//! Cut-distribution factorizations.
//!
//! A cut distribution replaces the standard posterior by a product of
//! per-module factors in which each parent module is inferred from its
//! own observables alone, and each child conditions on whatever its
//! ancestors already inferred. This module builds those factorizations
//! symbolically: every factor is a (target set, conditioning set) pair
//! tagged with its source module, and density evaluation is left to the
//! numerical engines.
//!
//! Conditioning sets are reduced to their graphically sufficient core by
//! dropping conditioners that are d-separated from the target given the
//! rest; the unreduced set is kept on the factor for debugging.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dag::{build_dag, Dag, DagError, NodeId, NodeKind, NodeSet};
use crate::modules::{two_module_partition, ModuleSet, ModulesError};
use crate::ordering::{OrderRelation, OrderingError, OrderingGraph};
use crate::separation::{is_d_separated, SeparationError, SeparationQuery};

/// Errors raised while building cut factorizations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CutError {
    /// An ambiguous pair order was passed where a resolved one is needed.
    #[error("module order is ambiguous; resolve the tie before cutting")]
    UnresolvedTie,
    /// The ordering graph could not be sorted topologically.
    #[error("module ordering contains a cycle through `{0}`")]
    CyclicOrdering(String),
    /// A prior-only parameter does not sit in the named module's block.
    #[error("parameter `{0}` is not in the named module's factor")]
    ParamNotInModule(NodeId),
    /// The module list disagrees with the ordering graph.
    #[error("modules and ordering graph disagree: {0}")]
    ModuleMismatch(String),
    /// Graph lookup failure.
    #[error(transparent)]
    Graph(#[from] DagError),
    /// Module construction or partition failure.
    #[error(transparent)]
    Modules(#[from] ModulesError),
    /// Ordering graph failure.
    #[error(transparent)]
    Ordering(#[from] OrderingError),
    /// Separation query failure while reducing a conditioning set.
    #[error(transparent)]
    Separation(#[from] SeparationError),
}

/// What a factor represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// Parameters given observables only: `p(Θ_M | X_M)`.
    ModulePosterior,
    /// Parameters given observables and previously inferred parameters.
    ConditionalPosterior,
    /// Parameters drawn from their prior, shielded from all observables
    /// except those entering through parent nodes.
    PriorOnly,
    /// The terminal factor for parameters outside every module.
    ComplementConditional,
}

/// One factor of a cut (or standard) factorization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CutFactor {
    /// The block of parameters this factor draws.
    pub target: NodeSet,
    /// Variables conditioned on, after graphical reduction.
    pub conditioning: NodeSet,
    /// Conditioning set before reduction, kept for debugging.
    pub unreduced_conditioning: NodeSet,
    /// Label of the module the factor came from.
    pub source_module: String,
    /// Shape of the factor.
    pub kind: FactorKind,
}

impl fmt::Display for CutFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |s: &NodeSet| -> String {
            s.iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        if self.conditioning.is_empty() {
            write!(f, "p({})", list(&self.target))
        } else {
            write!(f, "p({} | {})", list(&self.target), list(&self.conditioning))
        }
    }
}

/// An ordered product of factors. Earlier factors are sampled first;
/// each factor conditions only on observables and on targets of earlier
/// factors, so drawing them in order yields a joint sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CutFactorization {
    pub factors: Vec<CutFactor>,
}

impl fmt::Display for CutFactorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl CutFactorization {
    /// All parameters drawn by the factorization.
    pub fn targets(&self) -> NodeSet {
        self.factors
            .iter()
            .flat_map(|f| f.target.iter().cloned())
            .collect()
    }

    /// A multi-line human-readable report.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (i, f) in self.factors.iter().enumerate() {
            let kind = match f.kind {
                FactorKind::ModulePosterior => "module posterior",
                FactorKind::ConditionalPosterior => "conditional posterior",
                FactorKind::PriorOnly => "prior only",
                FactorKind::ComplementConditional => "complement conditional",
            };
            out.push_str(&format!(
                "{}. [{}] from `{}`: {}\n",
                i + 1,
                kind,
                f.source_module,
                f
            ));
        }
        out
    }

    /// Checks that targets are disjoint and cover every parameter, and
    /// that each factor conditions only on observables and on targets of
    /// earlier factors.
    pub fn validate(&self, dag: &Dag) -> Result<(), CutError> {
        let mut drawn = NodeSet::new();
        let observables = dag.observables();
        for f in &self.factors {
            for t in &f.target {
                if !drawn.insert(t.clone()) {
                    return Err(CutError::ModuleMismatch(format!(
                        "parameter `{t}` is drawn twice"
                    )));
                }
            }
            for c in &f.conditioning {
                let ok = observables.contains(c) || (drawn.contains(c) && !f.target.contains(c));
                if !ok {
                    return Err(CutError::ModuleMismatch(format!(
                        "factor for {:?} conditions on `{c}` before it is drawn",
                        f.source_module
                    )));
                }
            }
        }
        if drawn != dag.parameters() {
            return Err(CutError::ModuleMismatch(
                "factor targets do not cover all parameters".to_string(),
            ));
        }
        Ok(())
    }
}

/// Removes every edge entering `psi0` from outside it, leaving the node
/// set unchanged.
pub fn cut_subgraph(dag: &Dag, psi0: &NodeSet) -> Result<Dag, CutError> {
    dag.check_nodes(psi0)?;
    let nodes: Vec<(String, NodeKind)> = dag
        .all_nodes()
        .iter()
        .map(|id| (id.to_string(), dag.kind(id).expect("known node")))
        .collect();
    let edges: Vec<(String, String)> = dag
        .edges()
        .filter(|(a, b)| !psi0.contains(b) || psi0.contains(a))
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    Ok(build_dag(nodes, edges).expect("subgraph of an acyclic graph"))
}

fn params_of(dag: &Dag, set: &NodeSet) -> NodeSet {
    set.iter()
        .filter(|id| dag.kind(id) == Ok(NodeKind::Parameter))
        .cloned()
        .collect()
}

fn obs_of(dag: &Dag, set: &NodeSet) -> NodeSet {
    set.iter()
        .filter(|id| dag.kind(id) == Ok(NodeKind::Observable))
        .cloned()
        .collect()
}

/// Drops conditioners that are d-separated from the target given the
/// remaining ones. The loop reruns until no more can go, so the result
/// does not depend on discovery order.
fn reduce_conditioning(dag: &Dag, target: &NodeSet, conditioning: &NodeSet) -> Result<NodeSet, CutError> {
    let mut keep = conditioning.clone();
    loop {
        let mut dropped = false;
        for c in keep.clone() {
            let mut rest = keep.clone();
            rest.remove(&c);
            let single: NodeSet = [c.clone()].into_iter().collect();
            let q = SeparationQuery::new(target.clone(), single, rest.clone());
            if is_d_separated(dag, &q)? {
                keep = rest;
                dropped = true;
            }
        }
        if !dropped {
            return Ok(keep);
        }
    }
}

fn make_factor(
    dag: &Dag,
    target: NodeSet,
    conditioning: NodeSet,
    source: &str,
    kind: FactorKind,
) -> Result<CutFactor, CutError> {
    let reduced = reduce_conditioning(dag, &target, &conditioning)?;
    Ok(CutFactor {
        target,
        conditioning: reduced,
        unreduced_conditioning: conditioning,
        source_module: source.to_string(),
        kind,
    })
}

fn complement_factor(dag: &Dag, drawn: &NodeSet) -> Result<Option<CutFactor>, CutError> {
    let complement: NodeSet = dag
        .parameters()
        .difference(drawn)
        .cloned()
        .collect();
    if complement.is_empty() {
        return Ok(None);
    }
    let pa = dag.parents(&complement)?;
    Ok(Some(make_factor(
        dag,
        complement,
        pa,
        "complement",
        FactorKind::ComplementConditional,
    )?))
}

/// The standard posterior written in module blocks: the parent block
/// conditions on all observables (feedback is present), the child block
/// on the shared parameters and its own data, and parameters outside
/// both modules on their graph parents.
pub fn standard_factorization(
    dag: &Dag,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
) -> Result<CutFactorization, CutError> {
    let part = two_module_partition(dag, mod_a, mod_b)?;
    let mut factors = Vec::new();

    let theta_a = params_of(dag, &mod_a.psi());
    if !theta_a.is_empty() {
        factors.push(make_factor(
            dag,
            theta_a.clone(),
            dag.observables(),
            &mod_a.label,
            FactorKind::ModulePosterior,
        )?);
    }

    let theta_b_only = params_of(dag, &part.b_only);
    if !theta_b_only.is_empty() {
        let mut conditioning = params_of(dag, &part.shared);
        conditioning.extend(obs_of(dag, &part.b_only));
        conditioning.extend(obs_of(dag, &part.shared));
        factors.push(make_factor(
            dag,
            theta_b_only,
            conditioning,
            &mod_b.label,
            FactorKind::ConditionalPosterior,
        )?);
    }

    let mut drawn = theta_a;
    drawn.extend(params_of(dag, &part.b_only));
    if let Some(f) = complement_factor(dag, &drawn)? {
        factors.push(f);
    }
    Ok(CutFactorization { factors })
}

/// The two-module cut distribution for a resolved order.
///
/// With A the parent, the parent block is inferred from its own
/// observables only, the child block conditions on the shared parameters
/// and the child data, and the complement factor closes the product.
/// Unordered modules each keep their own posterior.
pub fn cut_two(
    dag: &Dag,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
    order: OrderRelation,
) -> Result<CutFactorization, CutError> {
    let (parent, child) = match order {
        OrderRelation::AtoB => (mod_a, mod_b),
        OrderRelation::BtoA => (mod_b, mod_a),
        OrderRelation::Both => return Err(CutError::UnresolvedTie),
        OrderRelation::Unordered => {
            let part = two_module_partition(dag, mod_a, mod_b)?;
            let mut factors = Vec::new();
            let theta_a = params_of(dag, &mod_a.psi());
            if !theta_a.is_empty() {
                factors.push(make_factor(
                    dag,
                    theta_a.clone(),
                    obs_of(dag, &mod_a.psi()),
                    &mod_a.label,
                    FactorKind::ModulePosterior,
                )?);
            }
            let theta_b_only = params_of(dag, &part.b_only);
            if !theta_b_only.is_empty() {
                factors.push(make_factor(
                    dag,
                    theta_b_only.clone(),
                    obs_of(dag, &mod_b.psi()),
                    &mod_b.label,
                    FactorKind::ModulePosterior,
                )?);
            }
            let mut drawn = theta_a;
            drawn.extend(theta_b_only);
            if let Some(f) = complement_factor(dag, &drawn)? {
                factors.push(f);
            }
            return Ok(CutFactorization { factors });
        }
    };

    // Validates that the modules' focal sets partition the observables.
    two_module_partition(dag, parent, child)?;

    let mut factors = Vec::new();
    let psi_parent = parent.psi();
    let theta_parent = params_of(dag, &psi_parent);
    if !theta_parent.is_empty() {
        factors.push(make_factor(
            dag,
            theta_parent.clone(),
            obs_of(dag, &psi_parent),
            &parent.label,
            FactorKind::ModulePosterior,
        )?);
    }

    let theta_child_only: NodeSet = params_of(dag, &child.psi())
        .difference(&psi_parent)
        .cloned()
        .collect();
    if !theta_child_only.is_empty() {
        let mut conditioning: NodeSet = params_of(dag, &child.psi())
            .intersection(&psi_parent)
            .cloned()
            .collect();
        conditioning.extend(obs_of(dag, &child.psi()));
        factors.push(make_factor(
            dag,
            theta_child_only.clone(),
            conditioning,
            &child.label,
            FactorKind::ConditionalPosterior,
        )?);
    }

    let mut drawn = theta_parent;
    drawn.extend(theta_child_only);
    if let Some(f) = complement_factor(dag, &drawn)? {
        factors.push(f);
    }
    Ok(CutFactorization { factors })
}

/// The cut distribution for an arbitrary ordering graph.
///
/// Modules are visited in topological order; each contributes the factor
/// for its parameters not already covered by an ancestor, conditioning
/// on its own observables and on its parameters the ancestors share.
/// Parameters outside every module get the terminal complement factor.
pub fn cut_general(
    dag: &Dag,
    modules: &[ModuleSet],
    j: &OrderingGraph,
) -> Result<CutFactorization, CutError> {
    let by_label: BTreeMap<&str, &ModuleSet> =
        modules.iter().map(|m| (m.label.as_str(), m)).collect();
    if by_label.len() != modules.len() {
        return Err(CutError::ModuleMismatch(
            "duplicate module label in list".to_string(),
        ));
    }
    let graph_labels: Vec<&str> = j.labels().collect();
    if graph_labels.len() != by_label.len()
        || !graph_labels.iter().all(|l| by_label.contains_key(l))
    {
        return Err(CutError::ModuleMismatch(
            "module list and ordering graph name different modules".to_string(),
        ));
    }
    for (label, m) in &by_label {
        if j.module(label)? != *m {
            return Err(CutError::ModuleMismatch(format!(
                "module `{label}` differs between list and ordering graph"
            )));
        }
    }

    let order = topological_order(j)?;
    let mut factors = Vec::new();
    let mut drawn = NodeSet::new();
    for label in &order {
        let m = by_label[label.as_str()];
        let mut psi_an = NodeSet::new();
        for anc in j.ancestors_of(label)? {
            psi_an.extend(j.module(&anc)?.psi());
        }
        let target: NodeSet = m.theta.difference(&psi_an).cloned().collect();
        if target.is_empty() {
            continue;
        }
        let inherited: NodeSet = m.theta.intersection(&psi_an).cloned().collect();
        let kind = if inherited.is_empty() {
            FactorKind::ModulePosterior
        } else {
            FactorKind::ConditionalPosterior
        };
        let mut conditioning = inherited;
        conditioning.extend(m.x.iter().cloned());
        drawn.extend(target.iter().cloned());
        factors.push(make_factor(dag, target, conditioning, label, kind)?);
    }
    if let Some(f) = complement_factor(dag, &drawn)? {
        drawn.extend(f.target.iter().cloned());
        factors.push(f);
    }

    if drawn != dag.parameters() {
        return Err(CutError::ModuleMismatch(
            "factor targets do not cover all parameters".to_string(),
        ));
    }
    Ok(CutFactorization { factors })
}

fn topological_order(j: &OrderingGraph) -> Result<Vec<String>, CutError> {
    let mut indegree: BTreeMap<String, usize> =
        j.labels().map(|l| (l.to_string(), 0)).collect();
    for (_, child) in j.edges() {
        *indegree.get_mut(child).expect("known label") += 1;
    }
    let mut order = Vec::new();
    while order.len() < indegree.len() {
        let next = indegree
            .iter()
            .find(|(l, d)| **d == 0 && !order.contains(*l))
            .map(|(l, _)| l.clone());
        let Some(next) = next else {
            let stuck = indegree
                .iter()
                .find(|(l, _)| !order.contains(*l))
                .map(|(l, _)| l.clone())
                .unwrap_or_default();
            return Err(CutError::CyclicOrdering(stuck));
        };
        for (p, c) in j.edges() {
            if p == next {
                *indegree.get_mut(c).expect("known label") -= 1;
            }
        }
        order.push(next);
    }
    Ok(order)
}

/// Request to infer some of a module's parameters from their prior alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WithinModuleCutSpec {
    /// Label of the module whose factor is split.
    pub module: String,
    /// Parameters to shield from the module's observables.
    pub prior_only_params: NodeSet,
}

/// Splits one factor of a factorization so the named parameters are
/// drawn from their prior instead of the module posterior.
///
/// The prior block is closed upwards: parameter ancestors of the named
/// set that sit in the same factor join it, so the block's distribution
/// is a pure prior `p(block | pa(block))`. The remaining parameters of
/// the factor then condition on the block as well.
pub fn apply_within_cut(
    cf: &CutFactorization,
    spec: &WithinModuleCutSpec,
    dag: &Dag,
) -> Result<CutFactorization, CutError> {
    if spec.prior_only_params.is_empty() {
        return Ok(cf.clone());
    }
    dag.check_nodes(&spec.prior_only_params)?;

    let position = cf.factors.iter().position(|f| {
        f.source_module == spec.module
            && matches!(
                f.kind,
                FactorKind::ModulePosterior | FactorKind::ConditionalPosterior
            )
    });
    let Some(position) = position else {
        let offender = spec.prior_only_params.iter().next().expect("nonempty");
        return Err(CutError::ParamNotInModule(offender.clone()));
    };
    let affected = &cf.factors[position];
    if let Some(outside) = spec
        .prior_only_params
        .iter()
        .find(|p| !affected.target.contains(*p))
    {
        return Err(CutError::ParamNotInModule(outside.clone()));
    }

    // Close the prior block under parameter ancestry within the factor.
    let ancestors = dag.ancestors(&spec.prior_only_params)?;
    let mut block = spec.prior_only_params.clone();
    block.extend(ancestors.intersection(&affected.target).cloned());

    let prior = make_factor(
        dag,
        block.clone(),
        dag.parents(&block)?,
        &spec.module,
        FactorKind::PriorOnly,
    )?;

    let unfix_target: NodeSet = affected.target.difference(&block).cloned().collect();
    let mut factors = cf.factors.clone();
    if unfix_target.is_empty() {
        factors.splice(position..=position, [prior]);
    } else {
        let mut conditioning = affected.unreduced_conditioning.clone();
        conditioning.extend(block.iter().cloned());
        let unfix = make_factor(
            dag,
            unfix_target,
            conditioning,
            &spec.module,
            FactorKind::ConditionalPosterior,
        )?;
        factors.splice(position..=position, [prior, unfix]);
    }
    Ok(CutFactorization { factors })
}

//! The cut factor as a divergence minimizer.
//!
//! For modules A and B with A treated as the parent, consider
//! approximating the joint posterior by a product that frees the
//! child-only parameters from feedback:
//!
//! ```text
//! p_f(Theta) = p(complement | parents) * f(Theta_{B\A} | Theta_{A+B}) * p(Theta_A | X_A),
//! ```
//!
//! where `Theta_{A+B}` are the shared parameters and `f` ranges over
//! conditional kernels. Minimizing `KL(p_f || p(X, .))` splits into an
//! independent problem per shared state `s`, each with the classical
//! variational solution
//!
//! ```text
//! f*(v | s)  proportional to  exp E[ ln g(X, u, v) | s ],
//! ```
//!
//! the expectation taken over module-A posterior draws `u` compatible
//! with `s`, and `g` the product of the conditional densities of every
//! node inside the two modules (all other factors either cancel or are
//! constant in `v`). [`kl_cut_oracle`] evaluates that formula directly
//! by enumeration. It never consults the emitted cut factorization, so
//! it serves as an independent oracle: the minimizer should equal the
//! conditional `p(Theta_{B\A} | shared, X_B)` that the cut emits.
//! [`kl_objective`] evaluates the divergence itself for grid
//! cross-checks.

use std::collections::BTreeMap;

use crate::dag::{NodeId, NodeSet};
use crate::inference::discrete::{
    enumerate_posterior, Assignment, DiscreteModel, ProbabilityTable,
};
use crate::inference::InferenceError;
use crate::modules::ModuleSet;

/// Conditioning states whose module-A posterior mass is at or below
/// this threshold are skipped: the divergence does not constrain the
/// kernel there.
pub const NEGLIGIBLE_CONDITIONING_MASS: f64 = 1e-12;

/// The divergence-minimizing conditional kernel, one exact table per
/// shared-parameter state.
#[derive(Debug, Clone)]
pub struct KlOracle {
    /// Child-only parameters in name order.
    pub targets: Vec<NodeId>,
    /// State counts matching `targets`.
    pub target_cards: Vec<usize>,
    /// Shared parameters in name order.
    pub conditioning: Vec<NodeId>,
    /// Minimizing distribution for each retained conditioning state.
    pub tables: BTreeMap<Vec<usize>, ProbabilityTable>,
    /// Conditioning states with negligible or zero mass.
    pub skipped: Vec<Vec<usize>>,
}

impl KlOracle {
    fn state_key(&self, assignment: &Assignment) -> Result<Vec<usize>, InferenceError> {
        self.conditioning
            .iter()
            .map(|node| {
                assignment
                    .get(node)
                    .copied()
                    .ok_or_else(|| InferenceError::BadAssignment {
                        node: node.clone(),
                        reason: "missing from assignment".into(),
                    })
            })
            .collect()
    }

    /// Kernel probability of child-only state `v` given the shared
    /// state embedded in `assignment`; uniform over skipped states.
    pub fn prob(&self, assignment: &Assignment) -> Result<f64, InferenceError> {
        let key = self.state_key(assignment)?;
        match self.tables.get(&key) {
            Some(table) => table.prob(assignment),
            None => {
                let states: usize = self.target_cards.iter().product::<usize>().max(1);
                Ok(1.0 / states as f64)
            }
        }
    }
}

fn restrict(assignment: &Assignment, keep: &NodeSet) -> Assignment {
    assignment
        .iter()
        .filter(|(node, _)| keep.contains(*node))
        .map(|(node, state)| (node.clone(), *state))
        .collect()
}

fn mixed_radix_states(cards: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = cards.iter().product::<usize>().max(1);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut state = vec![0usize; cards.len()];
        for pos in (0..cards.len()).rev() {
            state[pos] = idx % cards[pos];
            idx /= cards[pos];
        }
        out.push(state);
    }
    out
}

fn check_two_module_cover(
    model: &DiscreteModel,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
    data: &Assignment,
) -> Result<(), InferenceError> {
    let dag = model.dag();
    for set in [&mod_a.x, &mod_a.theta, &mod_b.x, &mod_b.theta] {
        dag.check_nodes(set)
            .map_err(|_| InferenceError::DimensionMismatch(
                "module names a node outside the model".into(),
            ))?;
    }
    for x in dag.observables() {
        if !mod_a.x.contains(&x) && !mod_b.x.contains(&x) {
            return Err(InferenceError::DimensionMismatch(format!(
                "observable `{x}` belongs to neither module"
            )));
        }
        if !data.contains_key(&x) {
            return Err(InferenceError::BadAssignment {
                node: x.clone(),
                reason: "observable missing from data".into(),
            });
        }
    }
    Ok(())
}

/// Computes the divergence-minimizing kernel over the child-only
/// parameters by direct enumeration of the closed-form solution.
///
/// `data` must assign a state to every observable, and together the two
/// modules must cover the observables.
pub fn kl_cut_oracle(
    model: &DiscreteModel,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
    data: &Assignment,
) -> Result<KlOracle, InferenceError> {
    check_two_module_cover(model, mod_a, mod_b, data)?;
    let shared: Vec<NodeId> = mod_a.theta.intersection(&mod_b.theta).cloned().collect();
    let targets: Vec<NodeId> = mod_b.theta.difference(&mod_a.theta).cloned().collect();
    let target_cards: Vec<usize> = targets
        .iter()
        .map(|node| model.cardinality(node))
        .collect::<Result<_, _>>()?;
    let target_states = mixed_radix_states(&target_cards);

    let given_a = restrict(data, &mod_a.x);
    let q_a = enumerate_posterior(model, &mod_a.theta, &given_a)?;

    let mut inside: NodeSet = mod_a.psi();
    inside.extend(mod_b.psi());

    // Accumulate, per shared state, the module-A mass and the weighted
    // sum of ln g over it.
    let mut mass: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut weighted: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    for (u, w) in q_a.entries() {
        let key: Vec<usize> = shared.iter().map(|node| u[node]).collect();
        *mass.entry(key.clone()).or_insert(0.0) += w;
        if w <= 0.0 {
            continue;
        }
        let sums = weighted
            .entry(key)
            .or_insert_with(|| vec![0.0; target_states.len()]);
        let mut full = data.clone();
        full.extend(u.iter().map(|(n, s)| (n.clone(), *s)));
        for (vidx, v) in target_states.iter().enumerate() {
            for (node, state) in targets.iter().zip(v) {
                full.insert(node.clone(), *state);
            }
            let mut ln_g = 0.0;
            for node in &inside {
                ln_g += model.node_probability(node, &full)?.ln();
            }
            sums[vidx] += w * ln_g;
        }
    }

    let mut tables = BTreeMap::new();
    let mut skipped = Vec::new();
    for (key, total) in &mass {
        let sums = weighted.get(key);
        if *total <= NEGLIGIBLE_CONDITIONING_MASS || sums.is_none() {
            skipped.push(key.clone());
            continue;
        }
        let sums = sums.expect("checked above");
        // Conditional expectation, then a softmax.
        let peak = sums
            .iter()
            .map(|h| h / total)
            .fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            skipped.push(key.clone());
            continue;
        }
        let mut probs: Vec<f64> = sums.iter().map(|h| (h / total - peak).exp()).collect();
        let norm: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= norm;
        }
        tables.insert(
            key.clone(),
            ProbabilityTable {
                targets: targets.clone(),
                cards: target_cards.clone(),
                probs,
            },
        );
    }
    Ok(KlOracle {
        targets,
        target_cards,
        conditioning: shared,
        tables,
        skipped,
    })
}

/// Evaluates `KL(p_f || p(X, .))` for a candidate kernel by summing
/// over every joint parameter state. The reference measure is the
/// unnormalized joint at the observed data, so only differences between
/// objectives are meaningful.
pub fn kl_objective(
    model: &DiscreteModel,
    mod_a: &ModuleSet,
    mod_b: &ModuleSet,
    data: &Assignment,
    kernel: &KlOracle,
) -> Result<f64, InferenceError> {
    check_two_module_cover(model, mod_a, mod_b, data)?;
    let dag = model.dag();
    let params: Vec<NodeId> = dag.parameters().into_iter().collect();
    let cards: Vec<usize> = params
        .iter()
        .map(|node| model.cardinality(node))
        .collect::<Result<_, _>>()?;
    let complement: Vec<NodeId> = params
        .iter()
        .filter(|p| !mod_a.theta.contains(*p) && !mod_b.theta.contains(*p))
        .cloned()
        .collect();

    let given_a = restrict(data, &mod_a.x);
    let q_a = enumerate_posterior(model, &mod_a.theta, &given_a)?;

    let mut kl = 0.0;
    for state in mixed_radix_states(&cards) {
        let mut full = data.clone();
        for (node, s) in params.iter().zip(&state) {
            full.insert(node.clone(), *s);
        }
        let mut p_f = q_a.prob(&restrict(&full, &mod_a.theta))?;
        p_f *= kernel.prob(&full)?;
        for node in &complement {
            p_f *= model.node_probability(node, &full)?;
        }
        if p_f <= 0.0 {
            continue;
        }
        let joint = model.joint_probability(&full)?;
        kl += p_f * (p_f.ln() - joint.ln());
    }
    Ok(kl)
}

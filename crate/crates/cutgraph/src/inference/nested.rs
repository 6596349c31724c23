//! Two-stage sampling of cut distributions.
//!
//! A cut factorization is an ordered list of conditional factors, and
//! that order is load bearing: parent modules must not hear back from
//! their children. A single joint Markov chain over all parameters
//! therefore does not target the cut distribution. The sampler here
//! follows the multiple-imputation scheme instead: it walks the factors
//! in order, draws each factor's target given the states already drawn,
//! and only then moves on, so feedback has no path to flow backwards.
//! Each retained row is one complete joint draw tagged with its outer
//! draw index.
//!
//! Two model families are executable. Discrete models sample every
//! factor by exact enumeration, with the per-factor tables cached by
//! conditioning state. The longitudinal chain samples each stage from
//! its conjugate Gaussian step. Both are exact stage samplers, so the
//! [`ConditionalEngine::MetropolisHastings`] engine, kept on the
//! configuration for model families that would need an inner chain, is
//! rejected with [`InferenceError::EngineUnsupported`] here.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::cut::CutFactorization;
use crate::dag::NodeId;
use crate::inference::discrete::{
    enumerate_posterior, Assignment, DiscreteModel, ProbabilityTable,
};
use crate::inference::gaussian::LinGaussModel;
use crate::inference::samples::SampleSet;
use crate::inference::InferenceError;
use crate::seed::child_seed;

/// How child factors are drawn given their conditioners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalEngine {
    /// Exact per-factor sampling: enumeration for discrete factors,
    /// conjugate steps for the longitudinal chain.
    Exact,
    /// An inner Metropolis-Hastings chain per outer draw, for factor
    /// families with no exact sampler. No executable family currently
    /// needs it.
    MetropolisHastings,
}

/// Settings for [`nested_cut_sample`].
#[derive(Debug, Clone)]
pub struct NestedConfig {
    /// Joint draws to produce.
    pub outer_draws: usize,
    pub engine: ConditionalEngine,
    /// Inner chain length per outer draw (chain engine only).
    pub inner_iters: usize,
    /// Fraction of each inner chain discarded (chain engine only).
    pub inner_burn_in: f64,
    /// Proposal scale of inner chains (chain engine only).
    pub proposal_scale: f64,
}

impl NestedConfig {
    pub fn new(outer_draws: usize) -> Self {
        NestedConfig {
            outer_draws,
            engine: ConditionalEngine::Exact,
            inner_iters: 200,
            inner_burn_in: 0.2,
            proposal_scale: 1.0,
        }
    }
}

/// The model a factorization is sampled under.
#[derive(Clone, Copy)]
pub enum NestedModel<'a> {
    /// A finite model together with the observed data the factors
    /// condition on.
    Discrete(&'a DiscreteModel, &'a Assignment),
    /// The longitudinal model, whose factorization is the timepoint
    /// chain; data live on the model itself.
    LongitudinalChain(&'a LinGaussModel),
}

/// Name of the provenance column recording the outer draw index.
pub const OUTER_DRAW_COLUMN: &str = "outer_draw";

/// Draws from the cut distribution described by `cf`, one stage at a
/// time in factor order.
pub fn nested_cut_sample(
    model: NestedModel<'_>,
    cf: &CutFactorization,
    config: &NestedConfig,
    seed: u64,
) -> Result<SampleSet, InferenceError> {
    if config.engine == ConditionalEngine::MetropolisHastings {
        let label = cf
            .factors
            .first()
            .map(|f| f.source_module.clone())
            .unwrap_or_default();
        return Err(InferenceError::EngineUnsupported(format!(
            "{label}: every executable factor family has an exact stage sampler; \
             use the exact engine"
        )));
    }
    match model {
        NestedModel::Discrete(model, data) => sample_discrete(model, data, cf, config, seed),
        NestedModel::LongitudinalChain(model) => sample_chain(model, cf, config, seed),
    }
}

fn draw_from_table<R: Rng>(table: &ProbabilityTable, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, p) in table.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    table.probs.len() - 1
}

fn sample_discrete(
    model: &DiscreteModel,
    data: &Assignment,
    cf: &CutFactorization,
    config: &NestedConfig,
    seed: u64,
) -> Result<SampleSet, InferenceError> {
    let mut names: Vec<String> = Vec::new();
    let mut drawn_order: Vec<Vec<NodeId>> = Vec::new();
    for factor in &cf.factors {
        let order: Vec<NodeId> = factor.target.iter().cloned().collect();
        names.extend(order.iter().map(|n| n.to_string()));
        drawn_order.push(order);
    }
    names.push(OUTER_DRAW_COLUMN.to_string());

    let mut rng = ChaCha12Rng::seed_from_u64(child_seed(seed, "nested-cut"));
    let mut set = SampleSet::new(names, seed);
    let mut cache: BTreeMap<(usize, Vec<usize>), ProbabilityTable> = BTreeMap::new();
    let mut row: Vec<f64> = Vec::new();
    for outer in 0..config.outer_draws {
        let mut state = data.clone();
        row.clear();
        for (fidx, factor) in cf.factors.iter().enumerate() {
            let mut key = Vec::with_capacity(factor.conditioning.len());
            let mut given = Assignment::new();
            for c in &factor.conditioning {
                let value = *state.get(c).ok_or_else(|| InferenceError::BadAssignment {
                    node: c.clone(),
                    reason: "conditioner has no value; factor order broken or data missing"
                        .into(),
                })?;
                key.push(value);
                given.insert(c.clone(), value);
            }
            let table = match cache.get(&(fidx, key.clone())) {
                Some(t) => t,
                None => {
                    let t = enumerate_posterior(model, &factor.target, &given)?;
                    cache.entry((fidx, key)).or_insert(t)
                }
            };
            let idx = draw_from_table(table, &mut rng);
            // Unpack the flat index into per-node states.
            let mut rem = idx;
            let mut states = vec![0usize; table.cards.len()];
            for pos in (0..table.cards.len()).rev() {
                states[pos] = rem % table.cards[pos];
                rem /= table.cards[pos];
            }
            for (node, s) in drawn_order[fidx].iter().zip(&states) {
                state.insert(node.clone(), *s);
                row.push(*s as f64);
            }
        }
        row.push(outer as f64);
        set.push_row(&row)?;
    }
    Ok(set)
}

/// Maps a chain factor to its timepoint by the `theta_t` it introduces.
fn chain_stage(
    factor: &crate::cut::CutFactor,
    t_len: usize,
) -> Result<usize, InferenceError> {
    let mut found = None;
    for node in &factor.target {
        if let Some(rest) = node.as_str().strip_prefix("theta_") {
            if let Ok(t) = rest.parse::<usize>() {
                found = Some(t);
            }
        }
    }
    let t = found.ok_or_else(|| {
        InferenceError::EngineUnsupported(format!(
            "{}: factor target names no time effect",
            factor.source_module
        ))
    })?;
    if t == 0 || t > t_len {
        return Err(InferenceError::EngineUnsupported(format!(
            "{}: stage {t} outside the model's {t_len} timepoints",
            factor.source_module
        )));
    }
    let expected = [format!("a_{t}"), format!("theta_{t}")];
    if factor.target.len() != 2 || !expected.iter().all(|n| factor.target.contains(&NodeId::from(n.as_str()))) {
        return Err(InferenceError::EngineUnsupported(format!(
            "{}: chain stages draw exactly one intercept and one effect",
            factor.source_module
        )));
    }
    Ok(t)
}

fn sample_chain(
    model: &LinGaussModel,
    cf: &CutFactorization,
    config: &NestedConfig,
    seed: u64,
) -> Result<SampleSet, InferenceError> {
    let t_len = model.t_len();
    let stages: Vec<usize> = cf
        .factors
        .iter()
        .map(|f| chain_stage(f, t_len))
        .collect::<Result<_, _>>()?;
    let mut names = Vec::with_capacity(2 * stages.len() + 1);
    for t in &stages {
        names.push(format!("a_{t}"));
        names.push(format!("theta_{t}"));
    }
    names.push(OUTER_DRAW_COLUMN.to_string());

    let mut rng = ChaCha12Rng::seed_from_u64(child_seed(seed, "nested-cut"));
    let mut set = SampleSet::new(names, seed);
    let mut thetas = vec![0.0; t_len + 1];
    let mut row: Vec<f64> = Vec::with_capacity(2 * stages.len() + 1);
    for outer in 0..config.outer_draws {
        row.clear();
        for t in &stages {
            let step = model.cut_chain_step(*t, thetas[*t - 1])?;
            let nu = step.sample(&mut rng);
            thetas[*t] = nu[1];
            row.push(nu[0]);
            row.push(nu[1]);
        }
        row.push(outer as f64);
        set.push_row(&row)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cut::{cut_general, cut_two};
    use crate::dag::{build_dag, node_set, NodeKind};
    use crate::inference::gaussian::{conjugate_cut_marginals, longitudinal_dag};
    use crate::modules::construct_module;
    use crate::ordering::{OrderRelation, OrderingGraph};
    use crate::testutil::surrogate_model;

    fn empirical_binary_mean(set: &SampleSet, name: &str) -> f64 {
        let j = set.column_index(name).unwrap();
        set.mean(j)
    }

    #[test]
    fn cut_draws_follow_the_parent_posterior_not_the_full_one() {
        let model = surrogate_model();
        let mod_a = construct_module(model.dag(), "A", &node_set(["Z"])).unwrap();
        let mod_b = construct_module(model.dag(), "B", &node_set(["Y"])).unwrap();
        let cf = cut_two(model.dag(), &mod_a, &mod_b, OrderRelation::AtoB).unwrap();
        let data = Assignment::from([("Z".into(), 0usize), ("Y".into(), 1usize)]);
        let config = NestedConfig::new(50_000);
        let set =
            nested_cut_sample(NestedModel::Discrete(&model, &data), &cf, &config, 4).unwrap();

        // Exact targets: module posterior 0.1, full posterior 0.5.
        let phi_hat = empirical_binary_mean(&set, "phi");
        assert!((phi_hat - 0.1).abs() < 0.02, "phi mean {phi_hat}");
        assert!((phi_hat - 0.5).abs() > 0.1);

        // Child factor follows its conditional given each drawn state.
        for phi in 0..2usize {
            let mut given = data.clone();
            given.insert("phi".into(), phi);
            let exact =
                enumerate_posterior(&model, &node_set(["theta"]), &given).unwrap();
            let jt = set.column_index("theta").unwrap();
            let jp = set.column_index("phi").unwrap();
            let rows: Vec<usize> = (0..set.len())
                .filter(|i| set.row(*i)[jp] as usize == phi)
                .collect();
            let hits = rows
                .iter()
                .filter(|i| set.row(**i)[jt] as usize == 1)
                .count();
            let p_hat = hits as f64 / rows.len() as f64;
            assert!(
                (p_hat - exact.probs[1]).abs() < 0.03,
                "phi={phi}: {p_hat} vs {}",
                exact.probs[1]
            );
        }
        assert_eq!(set.names().last().unwrap(), OUTER_DRAW_COLUMN);
        let jo = set.column_index(OUTER_DRAW_COLUMN).unwrap();
        assert_eq!(set.row(17)[jo], 17.0);
    }

    #[test]
    fn unordered_modules_sample_independent_posteriors() {
        let dag = build_dag(
            [
                ("phi", NodeKind::Parameter),
                ("theta", NodeKind::Parameter),
                ("Z", NodeKind::Observable),
                ("Y", NodeKind::Observable),
            ],
            [("phi", "Z"), ("theta", "Y")],
        )
        .unwrap();
        let model = DiscreteModel::new(
            dag,
            [
                ("phi", 2, vec![0.3, 0.7]),
                ("theta", 2, vec![0.6, 0.4]),
                ("Z", 2, vec![0.9, 0.1, 0.2, 0.8]),
                ("Y", 2, vec![0.5, 0.5, 0.1, 0.9]),
            ],
        )
        .unwrap();
        let mod_a = construct_module(model.dag(), "A", &node_set(["Z"])).unwrap();
        let mod_b = construct_module(model.dag(), "B", &node_set(["Y"])).unwrap();
        let cf = cut_two(model.dag(), &mod_a, &mod_b, OrderRelation::Unordered).unwrap();
        let data = Assignment::from([("Z".into(), 1usize), ("Y".into(), 1usize)]);
        let config = NestedConfig::new(40_000);
        let set =
            nested_cut_sample(NestedModel::Discrete(&model, &data), &cf, &config, 9).unwrap();

        let pa = enumerate_posterior(&model, &node_set(["phi"]), &data).unwrap();
        let pb = enumerate_posterior(&model, &node_set(["theta"]), &data).unwrap();
        assert!((empirical_binary_mean(&set, "phi") - pa.probs[1]).abs() < 0.02);
        assert!((empirical_binary_mean(&set, "theta") - pb.probs[1]).abs() < 0.02);

        // Joint factorizes: empirical p(1,1) against the product.
        let jp = set.column_index("phi").unwrap();
        let jt = set.column_index("theta").unwrap();
        let p11 = (0..set.len())
            .filter(|i| set.row(*i)[jp] == 1.0 && set.row(*i)[jt] == 1.0)
            .count() as f64
            / set.len() as f64;
        assert!((p11 - pa.probs[1] * pb.probs[1]).abs() < 0.02);
    }

    #[test]
    fn chain_stages_match_the_conjugate_marginals() {
        let model = LinGaussModel::simulate(3, 8, 31).unwrap().with_delta(1.0);
        let dag = longitudinal_dag(3);
        let mut j = OrderingGraph::new();
        let mut labels = Vec::new();
        for t in 1..=3 {
            let m = construct_module(&dag, format!("t{t}"), &node_set([format!("X_{t}").as_str()]))
                .unwrap();
            labels.push(m.label.clone());
            j.add_module(m).unwrap();
        }
        j.add_edge(&labels[0], &labels[1]).unwrap();
        j.add_edge(&labels[1], &labels[2]).unwrap();
        let modules: Vec<_> = (1..=3)
            .map(|t| {
                construct_module(&dag, format!("t{t}"), &node_set([format!("X_{t}").as_str()]))
                    .unwrap()
            })
            .collect();
        let cf = cut_general(&dag, &modules, &j).unwrap();

        let config = NestedConfig::new(15_000);
        let set =
            nested_cut_sample(NestedModel::LongitudinalChain(&model), &cf, &config, 77)
                .unwrap();
        let marginals = conjugate_cut_marginals(&model).unwrap();
        for t in 1..=3usize {
            for (name, coord) in [(format!("a_{t}"), 0usize), (format!("theta_{t}"), 1)] {
                let jcol = set.column_index(&name).unwrap();
                let exact = marginals[t - 1].mean()[coord];
                assert!(
                    (set.mean(jcol) - exact).abs() < 4.0 * set.mcse(jcol).max(1e-6),
                    "{name}: {} vs {exact}",
                    set.mean(jcol)
                );
                let v = marginals[t - 1].cov()[(coord, coord)];
                assert!((set.variance(jcol) - v).abs() < 0.2 * v + 5e-3);
            }
        }
    }

    #[test]
    fn chain_engine_is_refused_where_exact_stages_exist() {
        let model = surrogate_model();
        let mod_a = construct_module(model.dag(), "A", &node_set(["Z"])).unwrap();
        let mod_b = construct_module(model.dag(), "B", &node_set(["Y"])).unwrap();
        let cf = cut_two(model.dag(), &mod_a, &mod_b, OrderRelation::AtoB).unwrap();
        let data = Assignment::from([("Z".into(), 0usize), ("Y".into(), 1usize)]);
        let mut config = NestedConfig::new(10);
        config.engine = ConditionalEngine::MetropolisHastings;
        assert!(matches!(
            nested_cut_sample(NestedModel::Discrete(&model, &data), &cf, &config, 1),
            Err(InferenceError::EngineUnsupported(_))
        ));
    }

    #[test]
    fn missing_data_is_reported_not_marginalized() {
        let model = surrogate_model();
        let mod_a = construct_module(model.dag(), "A", &node_set(["Z"])).unwrap();
        let mod_b = construct_module(model.dag(), "B", &node_set(["Y"])).unwrap();
        let cf = cut_two(model.dag(), &mod_a, &mod_b, OrderRelation::AtoB).unwrap();
        let data = Assignment::from([("Z".into(), 0usize)]);
        let config = NestedConfig::new(10);
        assert!(matches!(
            nested_cut_sample(NestedModel::Discrete(&model, &data), &cf, &config, 1),
            Err(InferenceError::BadAssignment { .. })
        ));
    }

    #[test]
    fn draws_are_reproducible_by_seed() {
        let model = surrogate_model();
        let mod_a = construct_module(model.dag(), "A", &node_set(["Z"])).unwrap();
        let mod_b = construct_module(model.dag(), "B", &node_set(["Y"])).unwrap();
        let cf = cut_two(model.dag(), &mod_a, &mod_b, OrderRelation::AtoB).unwrap();
        let data = Assignment::from([("Z".into(), 0usize), ("Y".into(), 1usize)]);
        let config = NestedConfig::new(200);
        let a = nested_cut_sample(NestedModel::Discrete(&model, &data), &cf, &config, 3)
            .unwrap();
        let b = nested_cut_sample(NestedModel::Discrete(&model, &data), &cf, &config, 3)
            .unwrap();
        let c = nested_cut_sample(NestedModel::Discrete(&model, &data), &cf, &config, 4)
            .unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_ne!(a.to_csv_string(), c.to_csv_string());
    }
}

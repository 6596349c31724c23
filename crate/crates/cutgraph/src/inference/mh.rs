//! Random-walk Metropolis sampling.
//!
//! The sampler only needs an unnormalized log density, so it covers the
//! posteriors that have no conjugate solution; where a closed form does
//! exist the chain is checked against it in tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::inference::samples::SampleSet;
use crate::inference::InferenceError;
use crate::seed::child_seed;

/// How proposals are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalStyle {
    /// Perturb every coordinate at once with isotropic normal noise.
    Spherical,
    /// Sweep the coordinates in order, proposing and accepting one at a
    /// time. One iteration is one full sweep, which mixes far better
    /// than spherical proposals in high dimension.
    CoordinateScan,
}

/// Chain settings for [`mh_sample`].
#[derive(Debug, Clone)]
pub struct MhConfig {
    /// Standard deviation of the proposal noise.
    pub proposal_scale: f64,
    /// Iterations to run; for [`ProposalStyle::CoordinateScan`] each
    /// iteration is a full sweep.
    pub iters: usize,
    /// Iterations dropped from the front. `None` drops 20 percent.
    pub burn_in: Option<usize>,
    pub style: ProposalStyle,
}

impl MhConfig {
    pub fn new(proposal_scale: f64, iters: usize) -> Self {
        MhConfig {
            proposal_scale,
            iters,
            burn_in: None,
            style: ProposalStyle::Spherical,
        }
    }

    pub fn with_style(mut self, style: ProposalStyle) -> Self {
        self.style = style;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    fn burn(&self) -> usize {
        self.burn_in.unwrap_or(self.iters / 5)
    }
}

/// Runs a random-walk Metropolis chain on an unnormalized log density.
///
/// The density may return negative infinity to mark zero-probability
/// regions (such proposals are rejected); NaN or positive infinity is
/// an error, as is a non-finite density at the start point. The
/// acceptance rate is recorded on the returned set, which holds the
/// post-burn-in states.
pub fn mh_sample(
    names: &[String],
    logdensity: impl Fn(&[f64]) -> f64,
    init: &[f64],
    config: &MhConfig,
    seed: u64,
) -> Result<SampleSet, InferenceError> {
    if names.len() != init.len() {
        return Err(InferenceError::DimensionMismatch(format!(
            "{} names for {} coordinates",
            names.len(),
            init.len()
        )));
    }
    let check = |value: f64, at: &[f64]| -> Result<f64, InferenceError> {
        if value.is_nan() || value == f64::INFINITY {
            Err(InferenceError::NonFiniteDensity(format!("{at:?}")))
        } else {
            Ok(value)
        }
    };
    let mut current = init.to_vec();
    let mut current_ld = check(logdensity(&current), &current)?;
    if current_ld == f64::NEG_INFINITY {
        return Err(InferenceError::NonFiniteDensity(format!(
            "zero density at start point {current:?}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(child_seed(seed, "mh"));
    let burn = config.burn();
    let mut set = SampleSet::new(names.to_vec(), seed);
    set.set_chain_info(burn, 1);
    let mut proposed = 0u64;
    let mut accepted = 0u64;
    let mut scratch = current.clone();
    for iter in 0..config.iters {
        match config.style {
            ProposalStyle::Spherical => {
                for (s, c) in scratch.iter_mut().zip(current.iter()) {
                    *s = c + config.proposal_scale * rng.sample::<f64, _>(StandardNormal);
                }
                let ld = check(logdensity(&scratch), &scratch)?;
                proposed += 1;
                if ld - current_ld >= rng.random::<f64>().ln() {
                    current.copy_from_slice(&scratch);
                    current_ld = ld;
                    accepted += 1;
                }
            }
            ProposalStyle::CoordinateScan => {
                for j in 0..current.len() {
                    scratch.copy_from_slice(&current);
                    scratch[j] += config.proposal_scale * rng.sample::<f64, _>(StandardNormal);
                    let ld = check(logdensity(&scratch), &scratch)?;
                    proposed += 1;
                    if ld - current_ld >= rng.random::<f64>().ln() {
                        current[j] = scratch[j];
                        current_ld = ld;
                        accepted += 1;
                    }
                }
            }
        }
        if iter >= burn {
            set.push_row(&current)?;
        }
    }
    if proposed > 0 {
        set.set_acceptance_rate(accepted as f64 / proposed as f64);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn standard_normal_target_is_recovered() {
        let config = MhConfig::new(2.4, 50_000);
        let set = mh_sample(&names(1), |x| -0.5 * x[0] * x[0], &[0.0], &config, 11).unwrap();
        assert_eq!(set.len(), 40_000);
        assert!(set.mean(0).abs() < 3.0 * set.mcse(0));
        assert!((set.variance(0) - 1.0).abs() < 0.1);
        let rate = set.acceptance_rate().unwrap();
        assert!(rate > 0.2 && rate < 0.8, "acceptance {rate}");
    }

    #[test]
    fn coordinate_scan_matches_a_correlated_gaussian() {
        // Precision [[2, 1], [1, 2]]: covariance [[2/3, -1/3], [-1/3, 2/3]].
        let ld = |x: &[f64]| -> f64 {
            -0.5 * (2.0 * x[0] * x[0] + 2.0 * x[1] * x[1] + 2.0 * x[0] * x[1])
                + x[0]
                + x[1]
        };
        // Mean solves precision * m = (1, 1): m = (1/3, 1/3).
        let config = MhConfig::new(1.2, 120_000).with_style(ProposalStyle::CoordinateScan);
        let set = mh_sample(&names(2), ld, &[0.0, 0.0], &config, 19).unwrap();
        for j in 0..2 {
            assert!(
                (set.mean(j) - 1.0 / 3.0).abs() < 4.0 * set.mcse(j),
                "mean {} vs 1/3 at mcse {}",
                set.mean(j),
                set.mcse(j)
            );
            assert!((set.variance(j) - 2.0 / 3.0).abs() < 0.05);
        }
    }

    #[test]
    fn negative_infinity_is_a_rejection_not_an_error() {
        // Exponential target through a log barrier at zero.
        let ld = |x: &[f64]| if x[0] < 0.0 { f64::NEG_INFINITY } else { -x[0] };
        let config = MhConfig::new(1.5, 40_000);
        let set = mh_sample(&names(1), ld, &[1.0], &config, 23).unwrap();
        assert!(set.column(0).all(|v| v >= 0.0));
        assert!((set.mean(0) - 1.0).abs() < 0.1);
    }

    #[test]
    fn collapsed_acceptance_is_reported() {
        // Near-point-mass target against a huge proposal: almost every
        // move is rejected, and the rate says so.
        let ld = |x: &[f64]| -0.5 * x[0] * x[0] / 1e-12;
        let config = MhConfig::new(1.0, 2_000);
        let set = mh_sample(&names(1), ld, &[0.0], &config, 29).unwrap();
        assert!(set.acceptance_rate().unwrap() < 0.01);
    }

    #[test]
    fn bad_densities_are_errors() {
        let config = MhConfig::new(1.0, 10);
        assert!(matches!(
            mh_sample(&names(1), |_| f64::NAN, &[0.0], &config, 1),
            Err(InferenceError::NonFiniteDensity(_))
        ));
        assert!(matches!(
            mh_sample(&names(1), |_| f64::NEG_INFINITY, &[0.0], &config, 1),
            Err(InferenceError::NonFiniteDensity(_))
        ));
        assert!(matches!(
            mh_sample(&names(2), |x| -x[0] * x[0], &[0.0], &config, 1),
            Err(InferenceError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn chains_are_reproducible_by_seed() {
        let config = MhConfig::new(2.0, 500).with_burn_in(100);
        let ld = |x: &[f64]| -0.5 * x[0] * x[0];
        let a = mh_sample(&names(1), ld, &[0.3], &config, 7).unwrap();
        let b = mh_sample(&names(1), ld, &[0.3], &config, 7).unwrap();
        let c = mh_sample(&names(1), ld, &[0.3], &config, 8).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_ne!(a.to_csv_string(), c.to_csv_string());
        assert_eq!(a.burn_in(), 100);
        assert_eq!(a.len(), 400);
    }
}

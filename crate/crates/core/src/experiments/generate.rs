//! Seeded random problem generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_fa::FeatureSystem;
use crate::mdp::Mdp;

pub const MAX_GENERATION_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// i.i.d. `N(0, feature_scale^2)` entries.
    #[default]
    Gaussian,
    /// `Phi = I`; requires `dim == num_states`.
    Identity,
}

fn default_concentration() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub discount: f64,
    /// Symmetric Dirichlet parameter of every transition row.
    #[serde(default = "default_concentration")]
    pub concentration: f64,
    #[serde(default)]
    pub features: FeatureKind,
    #[serde(default = "default_scale")]
    pub feature_scale: f64,
    pub seed: u64,
}

impl RandomMdpParams {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        discount: f64,
        seed: u64,
    ) -> Self {
        RandomMdpParams {
            num_states,
            num_actions,
            dim,
            discount,
            concentration: default_concentration(),
            features: FeatureKind::Gaussian,
            feature_scale: default_scale(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 || self.dim == 0 {
            return Err(Error::Config(
                "num_states, num_actions and dim must be positive".into(),
            ));
        }
        if self.dim > self.num_states {
            return Err(Error::Config(format!(
                "dim {} exceeds num_states {}",
                self.dim, self.num_states
            )));
        }
        if self.features == FeatureKind::Identity && self.dim != self.num_states {
            return Err(Error::Config(
                "identity features need dim == num_states".into(),
            ));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::Config("concentration must be positive".into()));
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return Err(Error::Config("feature_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Draws a model and feature matrix. Attempt `i` uses ChaCha8 stream `i` of
/// `seed`, so a rank-deficient draw is replaced by a fresh, still deterministic one.
pub fn generate_random_mdp(params: &RandomMdpParams) -> Result<(Mdp, FeatureSystem)> {
    params.validate()?;
    let mut last_err = None;
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(attempt);
        match draw(params, &mut rng) {
            Ok(pair) => return Ok(pair),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Numerical(format!(
        "no valid draw after {MAX_GENERATION_ATTEMPTS} attempts: {}",
        last_err.map_or_else(String::new, |e| e.to_string())
    )))
}

fn draw(params: &RandomMdpParams, rng: &mut ChaCha8Rng) -> Result<(Mdp, FeatureSystem)> {
    let (ns, na) = (params.num_states, params.num_actions);
    let gamma = Gamma::new(params.concentration, 1.0)
        .map_err(|e| Error::Config(format!("concentration: {e}")))?;
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let mut row: Vec<f64> = (0..ns).map(|_| gamma.sample(rng)).collect();
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numerical("degenerate transition draw".into()));
        }
        row.iter_mut().for_each(|p| *p /= total);
        // Absorb rounding so the row sums to 1 within the model's tolerance.
        let drift = 1.0 - row.iter().sum::<f64>();
        let last = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        row[last] += drift;
        transition.extend(row);
    }
    let reward: Vec<f64> = (0..ns * na).map(|_| rng.random::<f64>()).collect();
    let mdp = Mdp::new(ns, na, transition, reward, params.discount)?;
    let fs = match params.features {
        FeatureKind::Identity => FeatureSystem::identity(ns),
        FeatureKind::Gaussian => {
            let normal = Normal::new(0.0, params.feature_scale)
                .map_err(|e| Error::Config(format!("feature_scale: {e}")))?;
            let rows: Vec<f64> = (0..ns * params.dim).map(|_| normal.sample(rng)).collect();
            FeatureSystem::new(ns, params.dim, rows)?
        }
    };
    Ok((mdp, fs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_fa::{compute_delta_fv, SampleSet};

    #[test]
    fn same_seed_same_problem() {
        let p = RandomMdpParams::new(7, 3, 3, 0.9, 11);
        let (a, fa) = generate_random_mdp(&p).unwrap();
        let (b, fb) = generate_random_mdp(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        let (c, _) = generate_random_mdp(&RandomMdpParams { seed: 12, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_rows_are_distributions() {
        let (mdp, _) = generate_random_mdp(&RandomMdpParams::new(9, 2, 2, 0.8, 3)).unwrap();
        for s in 0..9 {
            for a in 0..2 {
                let sum: f64 = mdp.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
        assert!(mdp.rewards().iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn identity_features_have_unit_delta_fv() {
        let mut p = RandomMdpParams::new(5, 2, 5, 0.9, 1);
        p.features = FeatureKind::Identity;
        let (_, fs) = generate_random_mdp(&p).unwrap();
        let d = compute_delta_fv(&fs, &[SampleSet::all(&fs).unwrap()]).unwrap();
        assert!((d.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_params_rejected() {
        assert!(generate_random_mdp(&RandomMdpParams::new(3, 2, 4, 0.9, 0)).is_err());
        let mut p = RandomMdpParams::new(3, 2, 2, 0.9, 0);
        p.features = FeatureKind::Identity;
        assert!(generate_random_mdp(&p).is_err());
    }
}

//! Approximate policy iteration with H-step lookahead, m-step rollout and a
//! linear value-function fit, in three flavors:
//!
//! * least squares: targets `T_mu^m T^{H-1} J_k`, exact normal-equation fit;
//! * gradient descent: same targets, `eta` warm-started gradient steps;
//! * modified least squares: targets `T_mu^m J_k`, exact fit.
//!
//! Inexact lookahead is injected as one-sided noise in `[-eps_la, 0]` on the root
//! action values, which keeps `||T^H J - T_mu T^{H-1} J|| <= eps_la` by
//! construction. Rollout error is i.i.d. uniform noise in `[-eps_pe, eps_pe]` on
//! each sampled target.
//!
//! Randomness comes from three ChaCha8 streams of one per-run seed: stream 0
//! drives lookahead noise, stream 1 rollout noise, stream 2 sample-set draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_fa::{FeatureSystem, Projection, SampleSet, SelectionMode, WeightVec};
use crate::mdp::{Mdp, Policy, ValueVec, DEFAULT_OPTIMAL_TOL};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e8;

const LOOKAHEAD_STREAM: u64 = 0;
const ROLLOUT_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Which outer loop to run. Gradient-descent parameters exist only for that variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    LeastSquares,
    GradientDescent { gamma: f64, eta: usize },
    ModifiedLs,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::LeastSquares => "least_squares",
            Variant::GradientDescent { .. } => "gradient_descent",
            Variant::ModifiedLs => "modified_ls",
        }
    }
}

/// How `D_k` is produced at each iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SampleSpec {
    All,
    Fixed { indices: Vec<usize> },
    Resample { size: usize },
}

impl SampleSpec {
    /// The sets `D_0, ..., D_{count-1}` a run with this seed would use.
    pub fn schedule(&self, fs: &FeatureSystem, seed: u64, count: usize) -> Result<Vec<SampleSet>> {
        let mut sampler = SetSampler::new(fs, self, seed)?;
        (0..count).map(|_| sampler.next_set()).collect()
    }
}

struct SetSampler<'a> {
    fs: &'a FeatureSystem,
    fixed: Option<SampleSet>,
    size: usize,
    rng: ChaCha8Rng,
}

impl<'a> SetSampler<'a> {
    fn new(fs: &'a FeatureSystem, spec: &SampleSpec, seed: u64) -> Result<Self> {
        let fixed = match spec {
            SampleSpec::All => Some(SampleSet::all(fs)?),
            SampleSpec::Fixed { indices } => {
                Some(SampleSet::new(fs, indices.clone(), SelectionMode::Fixed)?)
            }
            SampleSpec::Resample { .. } => None,
        };
        let size = match spec {
            SampleSpec::Resample { size } => *size,
            _ => 0,
        };
        Ok(SetSampler {
            fs,
            fixed,
            size,
            rng: stream(seed, SAMPLE_STREAM),
        })
    }

    fn next_set(&mut self) -> Result<SampleSet> {
        match &self.fixed {
            Some(set) => Ok(set.clone()),
            None => SampleSet::draw(self.fs, self.size, &mut self.rng),
        }
    }
}

/// Full parameterization of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub samples: SampleSpec,
    /// Lookahead depth `H >= 1`.
    pub lookahead: usize,
    /// Rollout depth `m >= 1`.
    pub rollout: usize,
    pub eps_la: f64,
    pub eps_pe: f64,
    pub theta0: WeightVec,
    pub num_iterations: usize,
    pub seed: u64,
    pub divergence_threshold: f64,
}

impl RunConfig {
    /// Zero noise, `theta0 = 0`, all states sampled, default divergence threshold.
    pub fn new(
        variant: Variant,
        dim: usize,
        lookahead: usize,
        rollout: usize,
        num_iterations: usize,
    ) -> Self {
        RunConfig {
            variant,
            samples: SampleSpec::All,
            lookahead,
            rollout,
            eps_la: 0.0,
            eps_pe: 0.0,
            theta0: WeightVec::zeros(dim),
            num_iterations,
            seed: 0,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }

    pub fn validate(&self, mdp: &Mdp, fs: &FeatureSystem) -> Result<()> {
        if self.lookahead == 0 || self.rollout == 0 {
            return Err(Error::Config(format!(
                "lookahead H = {} and rollout m = {} must both be at least 1",
                self.lookahead, self.rollout
            )));
        }
        if !(self.eps_la >= 0.0 && self.eps_la.is_finite())
            || !(self.eps_pe >= 0.0 && self.eps_pe.is_finite())
        {
            return Err(Error::Config(
                "noise bounds must be finite and nonnegative".into(),
            ));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Config(
                "divergence threshold must be positive".into(),
            ));
        }
        if let Variant::GradientDescent { gamma, eta } = self.variant {
            if !(gamma > 0.0 && gamma.is_finite()) || eta == 0 {
                return Err(Error::Config(format!(
                    "gradient descent needs gamma > 0 and eta >= 1 (got {gamma}, {eta})"
                )));
            }
        }
        if fs.num_states() != mdp.num_states() {
            return Err(Error::Config(format!(
                "feature system has {} states, MDP has {}",
                fs.num_states(),
                mdp.num_states()
            )));
        }
        if self.theta0.len() != fs.dim() || !self.theta0.is_finite() {
            return Err(Error::Config(format!(
                "theta0 must be a finite vector of length d = {}",
                fs.dim()
            )));
        }
        Ok(())
    }
}

/// Result of the lookahead policy-selection step.
#[derive(Debug, Clone)]
pub struct LookaheadChoice {
    pub policy: Policy,
    /// `||T^H J - T_mu T^{H-1} J||_inf`, measured after selection.
    pub gap: f64,
    /// `T^{H-1} J`.
    pub base: ValueVec,
}

/// Picks `mu` with `||T^H J - T_mu T^{H-1} J||_inf <= eps_la`.
///
/// One uniform draw per `(s, a)` is consumed from `rng` regardless of `eps_la`.
pub fn select_lookahead_policy<R: Rng + ?Sized>(
    mdp: &Mdp,
    j: &ValueVec,
    h: usize,
    eps_la: f64,
    rng: &mut R,
) -> Result<LookaheadChoice> {
    if h == 0 {
        return Err(Error::InvalidInput(
            "lookahead depth must be at least 1".into(),
        ));
    }
    let base = mdp.lookahead(j, h - 1)?;
    let q = mdp.q_values(&base)?;
    let na = mdp.num_actions();
    let mut actions = Vec::with_capacity(mdp.num_states());
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for row in q.chunks_exact(na) {
        let mut pick = 0;
        let mut pick_value = f64::NEG_INFINITY;
        for (a, &value) in row.iter().enumerate() {
            let perturbed = value - eps_la * rng.random::<f64>();
            if perturbed > pick_value {
                pick = a;
                pick_value = perturbed;
            }
        }
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        gap = gap.max(best - row[pick]);
        scale = scale.max(best.abs());
        actions.push(pick);
    }
    if gap > eps_la + 8.0 * f64::EPSILON * (scale + eps_la) {
        return Err(Error::Internal(format!(
            "lookahead gap {gap} exceeds eps_la = {eps_la}"
        )));
    }
    Ok(LookaheadChoice {
        policy: Policy::new(actions),
        gap,
        base,
    })
}

/// Per-iteration inner-loop diagnostics for the gradient-descent variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerContraction {
    /// `||theta_start - theta_ls||_2`.
    pub start_distance: f64,
    /// `||theta_out - theta_ls||_2`.
    pub final_distance: f64,
}

/// Everything recorded about iterate `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub theta: WeightVec,
    /// `J_k = Phi theta_k`.
    pub values: ValueVec,
    /// `mu_k`; at `k = 0` the greedy policy on `J_0`.
    pub policy: Policy,
    /// `D_{k-1}`, absent at `k = 0`.
    pub sample_set: Option<Vec<usize>>,
    /// `||J^{mu_k} - J*||_inf`.
    pub policy_error: f64,
    /// `delta_k = ||J_k - J^{mu_k}||_inf`.
    pub evaluation_error: f64,
    /// `||J_k - J*||_inf`.
    pub iterate_error: f64,
    pub lookahead_gap: f64,
    /// `||w_k||_inf`.
    pub rollout_noise: f64,
    pub inner: Option<InnerContraction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { iteration: usize },
}

impl RunStatus {
    pub fn is_diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    /// `J*` used for every error column.
    pub optimal_values: ValueVec,
    /// `D_0, D_1, ...` in the order used.
    pub sample_sets: Vec<SampleSet>,
}

impl IterationTrace {
    pub fn thetas(&self) -> impl Iterator<Item = &WeightVec> {
        self.records.iter().map(|r| &r.theta)
    }

    pub fn policies(&self) -> Vec<Policy> {
        self.records.iter().map(|r| r.policy.clone()).collect()
    }
}

#[derive(Clone, Copy)]
enum TargetBase {
    Lookahead,
    Iterate,
}

fn record(
    mdp: &Mdp,
    fs: &FeatureSystem,
    optimal: &ValueVec,
    k: usize,
    theta: WeightVec,
    policy: Policy,
) -> Result<IterationRecord> {
    let values = fs.values(&theta);
    let policy_values = mdp.evaluate_policy(&policy)?;
    let finite = values.is_finite();
    let or_inf = |x: f64| if finite { x } else { f64::INFINITY };
    Ok(IterationRecord {
        k,
        policy_error: policy_values.sup_distance(optimal),
        evaluation_error: or_inf(values.sup_distance(&policy_values)),
        iterate_error: or_inf(values.sup_distance(optimal)),
        theta,
        values,
        policy,
        sample_set: None,
        lookahead_gap: 0.0,
        rollout_noise: 0.0,
        inner: None,
    })
}

fn run_impl(mdp: &Mdp, fs: &FeatureSystem, config: &RunConfig) -> Result<IterationTrace> {
    config.validate(mdp, fs)?;
    let base_mode = match config.variant {
        Variant::ModifiedLs => TargetBase::Iterate,
        _ => TargetBase::Lookahead,
    };
    let optimal = mdp.solve_optimal(DEFAULT_OPTIMAL_TOL)?.values;
    let mut lookahead_rng = stream(config.seed, LOOKAHEAD_STREAM);
    let mut rollout_rng = stream(config.seed, ROLLOUT_STREAM);
    let mut sampler = SetSampler::new(fs, &config.samples, config.seed)?;
    let fixed_projection = match &sampler.fixed {
        Some(set) => Some(Projection::new(fs, set)?),
        None => None,
    };

    let theta = config.theta0.clone();
    let initial_policy = mdp.greedy_policy(&fs.values(&theta))?;
    let mut records = vec![record(mdp, fs, &optimal, 0, theta, initial_policy)?];
    let mut sample_sets = Vec::new();
    let mut status = RunStatus::Completed;

    for k in 0..config.num_iterations {
        let current = records.last().expect("trace starts with k = 0");
        let choice = select_lookahead_policy(
            mdp,
            &current.values,
            config.lookahead,
            config.eps_la,
            &mut lookahead_rng,
        )?;
        let base = match base_mode {
            TargetBase::Lookahead => &choice.base,
            TargetBase::Iterate => &current.values,
        };
        let rollout = mdp.rollout_return(&choice.policy, base, config.rollout)?;

        let set = sampler.next_set()?;
        let mut targets = rollout.into_inner();
        let mut noise_norm: f64 = 0.0;
        for &i in set.indices() {
            let w = config.eps_pe * (2.0 * rollout_rng.random::<f64>() - 1.0);
            targets[i] += w;
            noise_norm = noise_norm.max(w.abs());
        }
        let targets = ValueVec::new(targets);

        let resampled;
        let projection = match &fixed_projection {
            Some(p) => p,
            None => {
                resampled = Projection::new(fs, &set)?;
                &resampled
            }
        };
        let (theta, inner) = match config.variant {
            Variant::GradientDescent { gamma, eta } => {
                let exact = projection.fit(&targets)?;
                let out = projection.gradient_descent(&targets, &current.theta, gamma, eta)?;
                let inner = InnerContraction {
                    start_distance: current.theta.l2_distance(&exact),
                    final_distance: out.l2_distance(&exact),
                };
                (out, Some(inner))
            }
            Variant::LeastSquares | Variant::ModifiedLs => (projection.fit(&targets)?, None),
        };

        let diverged = !theta.is_finite() || theta.sup_norm() > config.divergence_threshold;
        let mut next = record(mdp, fs, &optimal, k + 1, theta, choice.policy)?;
        next.sample_set = Some(set.indices().to_vec());
        next.lookahead_gap = choice.gap;
        next.rollout_noise = noise_norm;
        next.inner = inner;
        records.push(next);
        sample_sets.push(set);
        if diverged {
            status = RunStatus::Diverged { iteration: k + 1 };
            break;
        }
    }

    Ok(IterationTrace {
        records,
        status,
        optimal_values: optimal,
        sample_sets,
    })
}

fn expect_variant(config: &RunConfig, ok: bool, name: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} called with variant {}",
            config.variant.name()
        )))
    }
}

/// Least-squares approximate policy iteration with lookahead.
pub fn run_ls_api(mdp: &Mdp, fs: &FeatureSystem, config: &RunConfig) -> Result<IterationTrace> {
    expect_variant(
        config,
        config.variant == Variant::LeastSquares,
        "run_ls_api",
    )?;
    run_impl(mdp, fs, config)
}

/// Gradient-descent variant, warm-started at `theta_k` every outer iteration.
pub fn run_gd_api(mdp: &Mdp, fs: &FeatureSystem, config: &RunConfig) -> Result<IterationTrace> {
    expect_variant(
        config,
        matches!(config.variant, Variant::GradientDescent { .. }),
        "run_gd_api",
    )?;
    run_impl(mdp, fs, config)
}

/// Least squares with rollout targets `T_mu^m J_k` instead of `T_mu^m T^{H-1} J_k`.
pub fn run_modified_ls_api(
    mdp: &Mdp,
    fs: &FeatureSystem,
    config: &RunConfig,
) -> Result<IterationTrace> {
    expect_variant(
        config,
        config.variant == Variant::ModifiedLs,
        "run_modified_ls_api",
    )?;
    run_impl(mdp, fs, config)
}

/// Dispatches on `config.variant`.
pub fn run(mdp: &Mdp, fs: &FeatureSystem, config: &RunConfig) -> Result<IterationTrace> {
    run_impl(mdp, fs, config)
}

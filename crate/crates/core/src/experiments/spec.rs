//! Experiment definition files (TOML) and their expansion into sweep cells.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"            # relative to the spec file
//! num_iterations = 100
//!
//! [problem]
//! kind = "random"               # or "files" / "counterexample"
//! num_states = 10
//! num_actions = 3
//! dim = 3
//! discount = 0.9
//! seed = 1
//!
//! [[runs]]
//! variant = "least_squares"     # "gradient_descent", "modified_ls"
//! lookahead = 2
//! rollout = 3
//! [runs.sweep]
//! lookahead = [1, 2]
//! rollout = [1, 3]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{RunConfig, SampleSpec, Variant, DEFAULT_DIVERGENCE_THRESHOLD};
use crate::bounds::{AuditOptions, DeltaAppChoice, FiniteTimeForm};
use crate::counterexample::{
    build_counterexample_mdp, counterexample_features, CounterexampleSpec,
};
use crate::error::{Error, Result};
use crate::experiments::files::{load_features, load_mdp};
use crate::experiments::generate::{generate_random_mdp, RandomMdpParams};
use crate::linear_fa::{stepsize_threshold, FeatureSystem, WeightVec, DEFAULT_ENUMERATION_CAP};
use crate::mdp::Mdp;

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_iterations() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_iterations")]
    pub num_iterations: usize,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    pub runs: Vec<RunBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Random(RandomMdpParams),
    Files {
        mdp: PathBuf,
        /// Tabular features when absent.
        #[serde(default)]
        features: Option<PathBuf>,
    },
    Counterexample {
        #[serde(default = "one")]
        r1: f64,
        #[serde(default)]
        r2: f64,
        #[serde(default = "point_nine")]
        alpha: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn point_nine() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default)]
    pub delta_app: DeltaAppChoice,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
    #[serde(default)]
    pub form: FiniteTimeForm,
}

fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            delta_app: DeltaAppChoice::Auto,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            form: FiniteTimeForm::Tight,
        }
    }
}

impl From<AuditSpec> for AuditOptions {
    fn from(a: AuditSpec) -> Self {
        AuditOptions {
            delta_app: a.delta_app,
            enumeration_cap: a.enumeration_cap,
            form: a.form,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    LeastSquares,
    GradientDescent,
    ModifiedLs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    All,
    Fixed,
    Resample,
}

fn default_depth() -> usize {
    1
}

/// One run definition. Every scalar listed under `sweep` overrides the
/// corresponding field cell by cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default)]
    pub name: Option<String>,
    pub variant: VariantName,
    #[serde(default = "default_depth")]
    pub lookahead: usize,
    #[serde(default = "default_depth")]
    pub rollout: usize,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Stepsize as a fraction of `1 / (d inf_k ||G_k||_inf^2)`.
    #[serde(default)]
    pub gamma_fraction: Option<f64>,
    #[serde(default)]
    pub eta: Option<usize>,
    #[serde(default)]
    pub eps_la: f64,
    #[serde(default)]
    pub eps_pe: f64,
    #[serde(default)]
    pub samples: SampleMode,
    #[serde(default)]
    pub sample_indices: Option<Vec<usize>>,
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub num_iterations: Option<usize>,
    #[serde(default)]
    pub divergence_threshold: Option<f64>,
    #[serde(default)]
    pub sweep: SweepGrid,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub lookahead: Option<Vec<usize>>,
    #[serde(default)]
    pub rollout: Option<Vec<usize>>,
    #[serde(default)]
    pub eta: Option<Vec<usize>>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_fraction: Option<Vec<f64>>,
    #[serde(default)]
    pub eps_la: Option<Vec<f64>>,
    #[serde(default)]
    pub eps_pe: Option<Vec<f64>>,
    #[serde(default)]
    pub sample_size: Option<Vec<usize>>,
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if spec.runs.is_empty() {
        return Err(Error::Config("spec defines no [[runs]]".into()));
    }
    Ok(spec)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec(&text)
}

/// The model and features a spec's cells share.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mdp: Mdp,
    pub features: FeatureSystem,
}

impl ProblemSpec {
    /// Relative file paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Problem> {
        let (mdp, features) = match self {
            ProblemSpec::Random(params) => generate_random_mdp(params)?,
            ProblemSpec::Files { mdp, features } => {
                let mdp = load_mdp(&base_dir.join(mdp))?;
                let fs = match features {
                    Some(path) => load_features(&base_dir.join(path))?,
                    None => FeatureSystem::identity(mdp.num_states()),
                };
                (mdp, fs)
            }
            ProblemSpec::Counterexample { r1, r2, alpha } => {
                let spec = CounterexampleSpec {
                    r1: *r1,
                    r2: *r2,
                    alpha: *alpha,
                    ..Default::default()
                };
                (build_counterexample_mdp(&spec)?, counterexample_features())
            }
        };
        if features.num_states() != mdp.num_states() {
            return Err(Error::Config(format!(
                "features cover {} states, model has {}",
                features.num_states(),
                mdp.num_states()
            )));
        }
        Ok(Problem { mdp, features })
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(spec_seed) ^ index)`.
pub fn cell_seed(spec_seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(spec_seed) ^ index as u64)
}

/// One expanded point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub run: String,
    pub seed: u64,
    pub variant: VariantName,
    pub lookahead: usize,
    pub rollout: usize,
    pub gamma: Option<f64>,
    pub gamma_fraction: Option<f64>,
    pub eta: Option<usize>,
    pub eps_la: f64,
    pub eps_pe: f64,
    pub samples: SampleMode,
    pub sample_indices: Option<Vec<usize>>,
    pub sample_size: Option<usize>,
    pub theta0: Option<Vec<f64>>,
    pub num_iterations: usize,
    pub divergence_threshold: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        let mut s = format!("{} H={} m={}", self.run, self.lookahead, self.rollout);
        if self.variant == VariantName::GradientDescent {
            if let Some(eta) = self.eta {
                s.push_str(&format!(" eta={eta}"));
            }
            match (self.gamma, self.gamma_fraction) {
                (Some(g), _) => s.push_str(&format!(" gamma={g}")),
                (None, Some(f)) => s.push_str(&format!(" gamma_fraction={f}")),
                _ => {}
            }
        }
        if self.eps_la > 0.0 || self.eps_pe > 0.0 {
            s.push_str(&format!(" eps_la={} eps_pe={}", self.eps_la, self.eps_pe));
        }
        if let Some(n) = self.sample_size {
            s.push_str(&format!(" |D|={n}"));
        }
        s
    }

    fn sample_spec(&self) -> Result<SampleSpec> {
        match self.samples {
            SampleMode::All => Ok(SampleSpec::All),
            SampleMode::Fixed => self
                .sample_indices
                .clone()
                .map(|indices| SampleSpec::Fixed { indices })
                .ok_or_else(|| Error::Config("samples = \"fixed\" needs sample_indices".into())),
            SampleMode::Resample => self
                .sample_size
                .map(|size| SampleSpec::Resample { size })
                .ok_or_else(|| Error::Config("samples = \"resample\" needs sample_size".into())),
        }
    }

    /// Resolves the cell into a validated run configuration on `problem`.
    pub fn run_config(&self, problem: &Problem) -> Result<RunConfig> {
        let fs = &problem.features;
        let samples = self.sample_spec()?;
        let variant = match self.variant {
            VariantName::LeastSquares => Variant::LeastSquares,
            VariantName::ModifiedLs => Variant::ModifiedLs,
            VariantName::GradientDescent => {
                let eta = self
                    .eta
                    .ok_or_else(|| Error::Config("gradient_descent needs eta".into()))?;
                let gamma = match (self.gamma, self.gamma_fraction) {
                    (Some(g), None) => g,
                    (None, Some(f)) => {
                        let sets = samples.schedule(fs, self.seed, self.num_iterations.max(1))?;
                        f * stepsize_threshold(fs, &sets)?
                    }
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "give gamma or gamma_fraction, not both".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(Error::Config(
                            "gradient_descent needs gamma or gamma_fraction".into(),
                        ))
                    }
                };
                Variant::GradientDescent { gamma, eta }
            }
        };
        let mut config = RunConfig::new(
            variant,
            fs.dim(),
            self.lookahead,
            self.rollout,
            self.num_iterations,
        );
        config.samples = samples;
        config.eps_la = self.eps_la;
        config.eps_pe = self.eps_pe;
        config.seed = self.seed;
        config.divergence_threshold = self.divergence_threshold;
        if let Some(theta) = &self.theta0 {
            config.theta0 = WeightVec::new(theta.clone());
        }
        config.validate(&problem.mdp, fs)?;
        Ok(config)
    }
}

fn axis<T: Clone>(values: &Option<Vec<T>>, base: T) -> Result<Vec<T>> {
    match values {
        Some(v) if v.is_empty() => Err(Error::Config("sweep axis with no values".into())),
        Some(v) => Ok(v.clone()),
        None => Ok(vec![base]),
    }
}

impl ExperimentSpec {
    /// Cartesian product of every run's sweep grid, in run order and then
    /// `lookahead, rollout, eta, gamma, gamma_fraction, eps_la, eps_pe, sample_size`
    /// order with the last axis varying fastest.
    pub fn expand(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for (run_idx, run) in self.runs.iter().enumerate() {
            let g = &run.sweep;
            let name = run.name.clone().unwrap_or_else(|| format!("run{run_idx}"));
            let lookaheads = axis(&g.lookahead, run.lookahead)?;
            let rollouts = axis(&g.rollout, run.rollout)?;
            let etas = axis(
                &g.eta.as_ref().map(|v| v.iter().map(|x| Some(*x)).collect()),
                run.eta,
            )?;
            let gammas = axis(
                &g.gamma
                    .as_ref()
                    .map(|v| v.iter().map(|x| Some(*x)).collect()),
                run.gamma,
            )?;
            let fractions = axis(
                &g.gamma_fraction
                    .as_ref()
                    .map(|v| v.iter().map(|x| Some(*x)).collect()),
                run.gamma_fraction,
            )?;
            let eps_las = axis(&g.eps_la, run.eps_la)?;
            let eps_pes = axis(&g.eps_pe, run.eps_pe)?;
            let sizes = axis(
                &g.sample_size
                    .as_ref()
                    .map(|v| v.iter().map(|x| Some(*x)).collect()),
                run.sample_size,
            )?;
            for &lookahead in &lookaheads {
                for &rollout in &rollouts {
                    for eta in &etas {
                        for gamma in &gammas {
                            for fraction in &fractions {
                                for &eps_la in &eps_las {
                                    for &eps_pe in &eps_pes {
                                        for size in &sizes {
                                            let index = cells.len();
                                            cells.push(Cell {
                                                index,
                                                run: name.clone(),
                                                seed: cell_seed(self.seed, index),
                                                variant: run.variant,
                                                lookahead,
                                                rollout,
                                                gamma: *gamma,
                                                gamma_fraction: *fraction,
                                                eta: *eta,
                                                eps_la,
                                                eps_pe,
                                                samples: run.samples,
                                                sample_indices: run.sample_indices.clone(),
                                                sample_size: *size,
                                                theta0: run.theta0.clone(),
                                                num_iterations: run
                                                    .num_iterations
                                                    .unwrap_or(self.num_iterations),
                                                divergence_threshold: run
                                                    .divergence_threshold
                                                    .unwrap_or(DEFAULT_DIVERGENCE_THRESHOLD),
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

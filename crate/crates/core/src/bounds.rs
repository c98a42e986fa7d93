//! Closed-form bound parameters, bound curves and assumption checks, plus an
//! auditor that lines a run's measured errors up against them.
//!
//! The three variants share the recursion `delta_k <= beta delta_{k-1} + tau`
//! on `delta_k = ||J_k - J^{mu_k}||_inf`; they differ only in `beta` and `tau`.
//! All comparisons against measured quantities use an additive slack of
//! [`AUDIT_SLACK`].

use serde::{Deserialize, Serialize};

use crate::algorithms::{IterationTrace, RunConfig, Variant};
use crate::error::{Error, Result};
use crate::linear_fa::{
    alpha_gd_sup, compute_delta_app, compute_delta_fv, stepsize_threshold, DeltaApp, DeltaAppKind,
    DeltaAppMode, DeltaFv, FeatureSystem, Projection, SampleSet, RANK_TOL,
};
use crate::mdp::Mdp;

pub const AUDIT_SLACK: f64 = 1e-8;

/// Fraction of a run treated as the tail when checking limsup bounds.
pub const TAIL_FRACTION: f64 = 0.25;

/// Which maximum appears in the finite-time component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteTimeForm {
    /// `max(alpha^H, beta)`.
    #[default]
    Tight,
    /// `max(alpha^{H-1}, beta)`.
    Loose,
}

/// Measured problem constants the bound formulas consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub alpha: f64,
    pub num_states: usize,
    pub delta_fv: DeltaFv,
    pub delta_app: DeltaApp,
    /// `||J^{mu_0} - J_0||_inf`.
    pub delta0: f64,
    pub phi_inf_norm: f64,
    pub sigma_min_phi: f64,
    pub unit_rewards: bool,
}

impl ProblemConstants {
    pub fn measure(
        mdp: &Mdp,
        fs: &FeatureSystem,
        sets: &[SampleSet],
        delta_app_mode: DeltaAppMode<'_>,
        delta0: f64,
    ) -> Result<Self> {
        Ok(ProblemConstants {
            alpha: mdp.discount(),
            num_states: mdp.num_states(),
            delta_fv: compute_delta_fv(fs, sets)?,
            delta_app: compute_delta_app(mdp, fs, sets, delta_app_mode)?,
            delta0,
            phi_inf_norm: fs.inf_norm(),
            sigma_min_phi: fs.sigma_min()?,
            unit_rewards: mdp.has_unit_rewards(),
        })
    }

    /// `sqrt(|S|) ||Phi||_inf / sigma_min(Phi)`.
    pub fn gd_amplification(&self) -> f64 {
        (self.num_states as f64).sqrt() * self.phi_inf_norm / self.sigma_min_phi
    }

    fn require_unit_rewards(&self) -> Result<()> {
        if self.unit_rewards {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "bound formulas assume rewards in [0, 1]; refusing on an arbitrary-reward model"
                    .into(),
            ))
        }
    }
}

/// Parameters of `delta_k <= beta^k delta_0 + mu_asym` for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub variant: String,
    pub alpha: f64,
    pub m: usize,
    pub h: usize,
    pub delta_fv: f64,
    pub delta_app: f64,
    pub beta: f64,
    pub tau: f64,
    /// `tau / (1 - beta)`; `None` when `beta >= 1` and the bound is vacuous.
    pub mu_asym: Option<f64>,
    pub delta0: f64,
    pub alpha_gd: Option<f64>,
    pub sigma_min_phi: Option<f64>,
    pub sqrt_s_norm_phi: Option<f64>,
    pub eta: Option<usize>,
    pub eps_la: f64,
    pub eps_pe: f64,
}

impl BoundParams {
    pub fn precondition_holds(&self) -> bool {
        self.mu_asym.is_some()
    }

    fn finish(mut self) -> Self {
        self.mu_asym = (self.beta < 1.0).then(|| self.tau / (1.0 - self.beta));
        self
    }
}

fn check_depths(m: usize, h: usize) -> Result<()> {
    if m == 0 || h == 0 {
        return Err(Error::InvalidInput("m and H must be at least 1".into()));
    }
    Ok(())
}

/// `beta = alpha^{m+H-1} delta_FV`,
/// `tau = (alpha^m + alpha^{m+H-1}) / (1 - alpha) delta_FV + delta_app + delta_FV eps_PE`.
pub fn params_ls(
    c: &ProblemConstants,
    m: usize,
    h: usize,
    eps_la: f64,
    eps_pe: f64,
) -> Result<BoundParams> {
    check_depths(m, h)?;
    c.require_unit_rewards()?;
    let a = c.alpha;
    let dfv = c.delta_fv.value;
    let amh = a.powi((m + h - 1) as i32);
    let beta = amh * dfv;
    let tau = (a.powi(m as i32) + amh) / (1.0 - a) * dfv + c.delta_app.value + dfv * eps_pe;
    Ok(BoundParams {
        variant: "least_squares".into(),
        alpha: a,
        m,
        h,
        delta_fv: dfv,
        delta_app: c.delta_app.value,
        beta,
        tau,
        mu_asym: None,
        delta0: c.delta0,
        alpha_gd: None,
        sigma_min_phi: None,
        sqrt_s_norm_phi: None,
        eta: None,
        eps_la,
        eps_pe,
    }
    .finish())
}

/// Gradient-descent parameters: with `K = sqrt(|S|) ||Phi||_inf / sigma_min` and
/// `g = alpha_GD^eta`,
/// `beta = beta_LS + K g (beta_LS + 1)` and `tau = (1 + K g) tau_LS + K g / (1 - alpha)`.
pub fn params_gd(
    c: &ProblemConstants,
    m: usize,
    h: usize,
    eps_la: f64,
    eps_pe: f64,
    alpha_gd: f64,
    eta: usize,
) -> Result<BoundParams> {
    if eta == 0 {
        return Err(Error::InvalidInput("eta must be at least 1".into()));
    }
    let ls = params_ls(c, m, h, eps_la, eps_pe)?;
    let k = c.gd_amplification();
    let g = alpha_gd.powf(eta as f64);
    let beta = ls.beta + k * g * (ls.beta + 1.0);
    let tau = (1.0 + k * g) * ls.tau + k / (1.0 - c.alpha) * g;
    Ok(BoundParams {
        variant: "gradient_descent".into(),
        beta,
        tau,
        alpha_gd: Some(alpha_gd),
        sigma_min_phi: Some(c.sigma_min_phi),
        sqrt_s_norm_phi: Some(k),
        eta: Some(eta),
        ..ls
    }
    .finish())
}

/// Modified least squares: `beta = alpha^m delta_FV`,
/// `tau = alpha^m delta_FV / (1 - alpha) + delta_app + delta_FV eps_PE`.
///
/// `beta` is the contraction coefficient of the recursion; the lookahead depth
/// enters only through the finite-time and asymptotic components.
pub fn params_modified_ls(
    c: &ProblemConstants,
    m: usize,
    h: usize,
    eps_la: f64,
    eps_pe: f64,
) -> Result<BoundParams> {
    check_depths(m, h)?;
    c.require_unit_rewards()?;
    let a = c.alpha;
    let dfv = c.delta_fv.value;
    let am = a.powi(m as i32);
    Ok(BoundParams {
        variant: "modified_ls".into(),
        alpha: a,
        m,
        h,
        delta_fv: dfv,
        delta_app: c.delta_app.value,
        beta: am * dfv,
        tau: am * dfv / (1.0 - a) + c.delta_app.value + dfv * eps_pe,
        mu_asym: None,
        delta0: c.delta0,
        alpha_gd: None,
        sigma_min_phi: None,
        sqrt_s_norm_phi: None,
        eta: None,
        eps_la,
        eps_pe,
    }
    .finish())
}

/// Parameters matching a run configuration's variant.
pub fn params_for(
    c: &ProblemConstants,
    config: &RunConfig,
    alpha_gd: Option<f64>,
) -> Result<BoundParams> {
    let (m, h) = (config.rollout, config.lookahead);
    match config.variant {
        Variant::LeastSquares => params_ls(c, m, h, config.eps_la, config.eps_pe),
        Variant::ModifiedLs => params_modified_ls(c, m, h, config.eps_la, config.eps_pe),
        Variant::GradientDescent { eta, .. } => {
            let alpha_gd = alpha_gd.ok_or_else(|| {
                Error::InvalidInput("gradient-descent bound needs alpha_GD".into())
            })?;
            params_gd(c, m, h, config.eps_la, config.eps_pe, alpha_gd, eta)
        }
    }
}

/// A bound `total(k) = finite_time(k) + asymptotic` on `||J^{mu_k} - J*||_inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub finite_time: Vec<f64>,
    pub asymptotic: f64,
    pub form: FiniteTimeForm,
}

impl BoundCurve {
    pub fn total(&self, k: usize) -> f64 {
        self.finite_time[k] + self.asymptotic
    }

    pub fn totals(&self) -> Vec<f64> {
        self.finite_time
            .iter()
            .map(|f| f + self.asymptotic)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.finite_time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.finite_time.is_empty()
    }
}

/// `(2 alpha^H mu_asym + eps_LA) / ((1 - alpha)(1 - alpha^H))`.
pub fn asymptotic_component(params: &BoundParams) -> Result<f64> {
    let mu = params.mu_asym.ok_or_else(|| precondition_error(params))?;
    let a = params.alpha;
    let ah = a.powi(params.h as i32);
    Ok((2.0 * ah * mu + params.eps_la) / ((1.0 - a) * (1.0 - ah)))
}

fn precondition_error(params: &BoundParams) -> Error {
    Error::PreconditionViolated(format!("beta = {} is not below 1", params.beta))
}

/// Evaluates the bound for `k = 0..=num_iterations`.
///
/// `finite_time(k) = alpha^{kH} / (1 - alpha) + 2 alpha^H / (1 - alpha) k r^{k-1} delta_0`
/// with `r = max(alpha^H, beta)` or `max(alpha^{H-1}, beta)` depending on `form`.
pub fn bound_curve(
    params: &BoundParams,
    num_iterations: usize,
    form: FiniteTimeForm,
) -> Result<BoundCurve> {
    let asymptotic = asymptotic_component(params)?;
    let a = params.alpha;
    let h = params.h as i32;
    let ah = a.powi(h);
    let ratio = match form {
        FiniteTimeForm::Tight => ah.max(params.beta),
        FiniteTimeForm::Loose => a.powi(h - 1).max(params.beta),
    };
    let finite_time = (0..=num_iterations)
        .map(|k| {
            let head = a.powi(k as i32 * h) / (1.0 - a);
            let transient = if k == 0 {
                0.0
            } else {
                2.0 * ah / (1.0 - a) * k as f64 * ratio.powi(k as i32 - 1) * params.delta0
            };
            head + transient
        })
        .collect();
    Ok(BoundCurve {
        finite_time,
        asymptotic,
        form,
    })
}

/// Limsup bound on `||J_k - J*||_inf` for the least-squares variant:
/// `[(1 + delta_FV alpha^m) A + delta_app + delta_FV eps_LA] / (1 - delta_FV alpha^{m+H-1})`
/// where `A` is the asymptotic component.
pub fn iterate_limsup_bound(params: &BoundParams) -> Result<f64> {
    let a = params.alpha;
    let denom = 1.0 - params.delta_fv * a.powi((params.m + params.h - 1) as i32);
    if !(denom > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "delta_FV alpha^(m+H-1) = {} is not below 1",
            1.0 - denom
        )));
    }
    let asym = asymptotic_component(params)?;
    let numer = (1.0 + params.delta_fv * a.powi(params.m as i32)) * asym
        + params.delta_app
        + params.delta_fv * params.eps_la;
    Ok(numer / denom)
}

/// One line of an assumption report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub lhs: f64,
    pub relation: String,
    pub rhs: f64,
    pub pass: bool,
}

impl AssumptionCheck {
    fn new(name: &str, lhs: f64, relation: &str, rhs: f64, pass: bool) -> Self {
        AssumptionCheck {
            name: name.into(),
            lhs,
            relation: relation.into(),
            rhs,
            pass,
        }
    }

    fn greater(name: &str, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, ">", rhs, lhs > rhs)
    }

    fn less(name: &str, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, "<", rhs, lhs < rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_RANK: &str = "Assumption 1 (rank)";
pub const CHECK_REWARDS: &str = "Reward range [0, 1]";
pub const CHECK_DEPTH: &str = "Depth condition (m+H-1)";
pub const CHECK_MODIFIED: &str = "Modified LS (m)";
pub const CHECK_STEPSIZE: &str = "Assumption 2 (stepsize)";
pub const CHECK_GD_DEPTH: &str = "Assumption 2 (m+H-1)";
pub const CHECK_INNER_STEPS: &str = "Assumption 2 (inner steps)";
pub const CHECK_GD_CONTRACTION: &str = "GD contraction (alpha_GD < 1)";

fn log_ratio(x: f64, alpha: f64) -> f64 {
    x.ln() / (1.0 / alpha).ln()
}

/// Evaluates every precondition relevant to `config` over the given sample sets.
pub fn check_assumptions(
    mdp: &Mdp,
    fs: &FeatureSystem,
    sets: &[SampleSet],
    config: &RunConfig,
) -> Result<AssumptionReport> {
    let alpha = mdp.discount();
    let mut checks = Vec::new();

    let mut worst_ratio = f64::INFINITY;
    for set in sets {
        let phi_d = fs.phi().select_rows(set.indices());
        let sv = phi_d.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let ratio = if max > 0.0 && set.len() >= fs.dim() {
            min / max
        } else {
            0.0
        };
        worst_ratio = worst_ratio.min(ratio);
    }
    checks.push(AssumptionCheck::greater(CHECK_RANK, worst_ratio, RANK_TOL));
    checks.push(AssumptionCheck::new(
        CHECK_REWARDS,
        if mdp.has_unit_rewards() { 1.0 } else { 0.0 },
        "==",
        1.0,
        mdp.has_unit_rewards(),
    ));

    let dfv = compute_delta_fv(fs, sets)?.value;
    let depth = (config.rollout + config.lookahead) as f64 - 1.0;
    match config.variant {
        Variant::LeastSquares => {
            checks.push(AssumptionCheck::greater(
                CHECK_DEPTH,
                depth,
                log_ratio(dfv, alpha),
            ));
        }
        Variant::ModifiedLs => {
            checks.push(AssumptionCheck::greater(
                CHECK_MODIFIED,
                config.rollout as f64,
                log_ratio(dfv, alpha),
            ));
        }
        Variant::GradientDescent { gamma, eta } => {
            checks.push(AssumptionCheck::less(
                CHECK_STEPSIZE,
                gamma,
                stepsize_threshold(fs, sets)?,
            ));
            checks.push(AssumptionCheck::greater(
                CHECK_GD_DEPTH,
                depth,
                log_ratio(2.0 * dfv, alpha),
            ));
            let agd = alpha_gd_sup(fs, sets, gamma)?;
            let amplification =
                (mdp.num_states() as f64).sqrt() * fs.inf_norm() / fs.sigma_min()?;
            let needed = if agd >= 1.0 {
                f64::INFINITY
            } else {
                (3.0 * amplification).ln() / (1.0 / agd).ln()
            };
            checks.push(AssumptionCheck::greater(
                CHECK_INNER_STEPS,
                eta as f64,
                needed,
            ));
            checks.push(AssumptionCheck::less(CHECK_GD_CONTRACTION, agd, 1.0));
        }
    }
    Ok(AssumptionReport { checks })
}

/// Outcome of comparing measured errors with a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Held, but `delta_app` was only a lower estimate.
    AdvisoryPass,
    AdvisoryFail,
    PreconditionViolated,
    NotApplicable,
}

impl Verdict {
    fn compare(holds: bool, advisory: bool) -> Self {
        match (holds, advisory) {
            (true, false) => Verdict::Pass,
            (false, false) => Verdict::Fail,
            (true, true) => Verdict::AdvisoryPass,
            (false, true) => Verdict::AdvisoryFail,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::AdvisoryPass => "advisory-pass",
            Verdict::AdvisoryFail => "advisory-fail",
            Verdict::PreconditionViolated => "precondition-violated",
            Verdict::NotApplicable => "not-applicable",
        }
    }
}

/// How `delta_app` is chosen for an audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaAppChoice {
    /// Exhaustive when `|A|^|S|` is within the cap, encountered otherwise.
    #[default]
    Auto,
    Exhaustive,
    Encountered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub delta_app: DeltaAppChoice,
    pub enumeration_cap: u64,
    pub form: FiniteTimeForm,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            delta_app: DeltaAppChoice::Auto,
            enumeration_cap: crate::linear_fa::DEFAULT_ENUMERATION_CAP,
            form: FiniteTimeForm::Tight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationAudit {
    pub k: usize,
    /// `||J^{mu_k} - J*||_inf`.
    pub measured: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub variant: String,
    pub status: String,
    pub assumptions: AssumptionReport,
    pub constants: ProblemConstants,
    pub params: BoundParams,
    pub form: FiniteTimeForm,
    pub per_iteration: Vec<IterationAudit>,
    pub bound_verdict: Verdict,
    /// Largest `measured - bound` over the run (negative when the bound holds).
    pub worst_margin: Option<f64>,
    pub iterate_bound: Option<f64>,
    pub iterate_tail_max: Option<f64>,
    pub iterate_verdict: Verdict,
    /// `delta_k <= beta delta_{k-1} + tau + slack` at every step.
    pub recursion_holds: bool,
    /// Every recorded lookahead gap and rollout noise within its bound.
    pub noise_within_bounds: bool,
    pub notes: Vec<String>,
}

/// Computes constants, parameters and bound curves for a finished run and
/// compares them against its measured errors.
pub fn audit_trace(
    mdp: &Mdp,
    fs: &FeatureSystem,
    config: &RunConfig,
    trace: &IterationTrace,
    options: &AuditOptions,
) -> Result<AuditReport> {
    let sets: Vec<SampleSet> = if trace.sample_sets.is_empty() {
        config.samples.schedule(fs, config.seed, 1)?
    } else {
        trace.sample_sets.clone()
    };
    let assumptions = check_assumptions(mdp, fs, &sets, config)?;
    let policies = trace.policies();
    let exhaustive_ok = mdp
        .policy_count()
        .is_some_and(|n| n <= options.enumeration_cap);
    let mode = match options.delta_app {
        DeltaAppChoice::Exhaustive => DeltaAppMode::Exhaustive {
            cap: options.enumeration_cap,
        },
        DeltaAppChoice::Auto if exhaustive_ok => DeltaAppMode::Exhaustive {
            cap: options.enumeration_cap,
        },
        _ => DeltaAppMode::Encountered(&policies),
    };
    let delta0 = trace.records[0].evaluation_error;
    let constants = ProblemConstants::measure(mdp, fs, &sets, mode, delta0)?;
    let alpha_gd = match config.variant {
        Variant::GradientDescent { gamma, .. } => Some(alpha_gd_sup(fs, &sets, gamma)?),
        _ => None,
    };
    let params = params_for(&constants, config, alpha_gd)?;
    let advisory = constants.delta_app.kind == DeltaAppKind::LowerEstimate;

    let mut notes = Vec::new();
    if constants.delta_fv.empirical {
        notes.push("delta_FV is the sup over realized resampled sets only".to_string());
    }
    if advisory {
        notes.push("delta_app is a lower estimate over encountered policies".to_string());
    }
    if config.variant == Variant::ModifiedLs {
        notes.push(
            "modified LS: beta = alpha^m delta_FV is the contraction coefficient, \
             tau = alpha^m delta_FV / (1 - alpha) + delta_app + delta_FV eps_PE the additive term"
                .to_string(),
        );
    }
    if options.form == FiniteTimeForm::Loose {
        notes.push("finite-time component uses max(alpha^(H-1), beta)".to_string());
    }

    let curve = bound_curve(&params, trace.records.len().saturating_sub(1), options.form).ok();
    let per_iteration: Vec<IterationAudit> = trace
        .records
        .iter()
        .map(|r| IterationAudit {
            k: r.k,
            measured: r.policy_error,
            bound: curve.as_ref().map(|c| c.total(r.k)),
        })
        .collect();
    let (bound_verdict, worst_margin) = match &curve {
        None => (Verdict::PreconditionViolated, None),
        Some(_) => {
            let margin = per_iteration
                .iter()
                .map(|it| it.measured - it.bound.unwrap_or(f64::INFINITY))
                .fold(f64::NEG_INFINITY, f64::max);
            (
                Verdict::compare(margin <= AUDIT_SLACK, advisory),
                Some(margin),
            )
        }
    };

    let (iterate_bound, iterate_tail_max, iterate_verdict) = match config.variant {
        Variant::LeastSquares => match iterate_limsup_bound(&params) {
            Ok(bound) => {
                let tail = tail_max(trace);
                let holds = tail <= bound + AUDIT_SLACK;
                (Some(bound), Some(tail), Verdict::compare(holds, advisory))
            }
            Err(_) => (None, Some(tail_max(trace)), Verdict::PreconditionViolated),
        },
        _ => (None, None, Verdict::NotApplicable),
    };

    let recursion_holds = trace.records.windows(2).all(|w| {
        w[1].evaluation_error <= params.beta * w[0].evaluation_error + params.tau + AUDIT_SLACK
    });
    let noise_within_bounds = trace.records.iter().all(|r| {
        r.lookahead_gap <= config.eps_la + AUDIT_SLACK && r.rollout_noise <= config.eps_pe
    });

    Ok(AuditReport {
        variant: config.variant.name().to_string(),
        status: trace.status.label().to_string(),
        assumptions,
        constants,
        params,
        form: options.form,
        per_iteration,
        bound_verdict,
        worst_margin,
        iterate_bound,
        iterate_tail_max,
        iterate_verdict,
        recursion_holds,
        noise_within_bounds,
        notes,
    })
}

/// Max of `||J_k - J*||_inf` over the last quarter of the run.
fn tail_max(trace: &IterationTrace) -> f64 {
    let n = trace.records.len();
    let start = n - ((n as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, n);
    trace.records[start..]
        .iter()
        .map(|r| r.iterate_error)
        .fold(0.0, f64::max)
}

/// `1 / (d inf_k ||Phi_{D_k}^T Phi_{D_k}||_inf^2)`, re-exported for convenience.
pub fn gd_stepsize_threshold(fs: &FeatureSystem, sets: &[SampleSet]) -> Result<f64> {
    stepsize_threshold(fs, sets)
}

/// `||M_k||_inf` for each set, in order.
pub fn projector_norms(fs: &FeatureSystem, sets: &[SampleSet]) -> Result<Vec<f64>> {
    sets.iter()
        .map(|s| Ok(Projection::new(fs, s)?.inf_norm()))
        .collect()
}

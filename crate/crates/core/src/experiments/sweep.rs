//! Executes expanded cells, persists traces and audits, and assembles the manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::Variant;
use crate::algorithms::{run, IterationTrace, RunConfig};
use crate::bounds::{
    audit_trace, check_assumptions, params_for, AssumptionReport, AuditOptions, AuditReport,
    BoundParams, DeltaAppChoice, ProblemConstants, Verdict,
};
use crate::error::{Error, Result};
use crate::experiments::spec::{Cell, ExperimentSpec, Problem};
use crate::linear_fa::{alpha_gd_sup, DeltaAppMode};
use crate::mdp::{Mdp, Policy, ValueVec, DEFAULT_OPTIMAL_TOL};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Fixed trace column order after the weight columns.
pub const TRACE_TAIL_COLUMNS: [&str; 7] = [
    "err_policy",
    "err_iterate",
    "delta_k",
    "bound_total_k",
    "lookahead_gap",
    "rollout_noise_norm",
    "status",
];

pub fn trace_header(dim: usize) -> Vec<String> {
    std::iter::once("k".to_string())
        .chain((0..dim).map(|i| format!("theta_{i}")))
        .chain(TRACE_TAIL_COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

/// Writes the trace CSV. `bounds[k]` fills `bound_total_k` when present.
pub fn write_trace_csv(path: &Path, trace: &IterationTrace, bounds: &[Option<f64>]) -> Result<()> {
    let dim = trace.records.first().map_or(0, |r| r.theta.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(trace_header(dim))
        .map_err(|e| csv_error(path, e))?;
    let last = trace.records.len().saturating_sub(1);
    for (i, r) in trace.records.iter().enumerate() {
        let mut row = vec![r.k.to_string()];
        row.extend(r.theta.iter().map(|t| t.to_string()));
        row.push(r.policy_error.to_string());
        row.push(r.iterate_error.to_string());
        row.push(r.evaluation_error.to_string());
        row.push(
            bounds
                .get(i)
                .copied()
                .flatten()
                .map_or_else(String::new, |b| b.to_string()),
        );
        row.push(r.lookahead_gap.to_string());
        row.push(r.rollout_noise.to_string());
        row.push(
            if i == last {
                trace.status.label()
            } else {
                "running"
            }
            .to_string(),
        );
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Internal(format!("csv write to {}: {other:?}", path.display())),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One manifest line per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub index: usize,
    pub label: String,
    pub seed: u64,
    pub cell: Cell,
    /// `completed`, `diverged` or `error`.
    pub status: String,
    pub iterations: usize,
    pub assumptions_pass: Option<bool>,
    pub bound_verdict: Option<Verdict>,
    pub iterate_verdict: Option<Verdict>,
    pub beta: Option<f64>,
    pub trace_file: Option<String>,
    pub audit_file: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub tool_version: String,
    pub num_cells: usize,
    pub cells: Vec<CellOutcome>,
}

impl Manifest {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Cell artifacts relative to the output directory.
pub fn cell_file_names(index: usize) -> (String, String) {
    (
        format!("cell_{index:04}_trace.csv"),
        format!("cell_{index:04}_audit.json"),
    )
}

struct CellRun {
    config: RunConfig,
    trace: IterationTrace,
    audit: Option<AuditReport>,
    audit_error: Option<String>,
}

fn execute(problem: &Problem, cell: &Cell, options: &AuditOptions) -> Result<CellRun> {
    let config = cell.run_config(problem)?;
    let trace = run(&problem.mdp, &problem.features, &config)?;
    let (audit, audit_error) =
        match audit_trace(&problem.mdp, &problem.features, &config, &trace, options) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        };
    Ok(CellRun {
        config,
        trace,
        audit,
        audit_error,
    })
}

fn run_cell(problem: &Problem, cell: &Cell, options: &AuditOptions, out_dir: &Path) -> CellOutcome {
    let mut outcome = CellOutcome {
        index: cell.index,
        label: cell.label(),
        seed: cell.seed,
        cell: cell.clone(),
        status: "error".into(),
        iterations: 0,
        assumptions_pass: None,
        bound_verdict: None,
        iterate_verdict: None,
        beta: None,
        trace_file: None,
        audit_file: None,
        error: None,
    };
    let result = execute(problem, cell, options).and_then(|r| {
        let (trace_name, audit_name) = cell_file_names(cell.index);
        let bounds: Vec<Option<f64>> = match &r.audit {
            Some(a) => a.per_iteration.iter().map(|it| it.bound).collect(),
            None => vec![None; r.trace.records.len()],
        };
        write_trace_csv(&out_dir.join(&trace_name), &r.trace, &bounds)?;
        let doc = CellAudit {
            cell: cell.clone(),
            config: r.config.clone(),
            audit: r.audit.clone(),
            audit_error: r.audit_error.clone(),
        };
        write_json(&out_dir.join(&audit_name), &doc)?;
        Ok((r, trace_name, audit_name))
    });
    match result {
        Ok((r, trace_name, audit_name)) => {
            outcome.status = r.trace.status.label().into();
            outcome.iterations = r.trace.records.len().saturating_sub(1);
            if let Some(a) = &r.audit {
                outcome.assumptions_pass = Some(a.assumptions.all_pass());
                outcome.bound_verdict = Some(a.bound_verdict);
                outcome.iterate_verdict = Some(a.iterate_verdict);
                outcome.beta = Some(a.params.beta);
            }
            outcome.error = r.audit_error;
            outcome.trace_file = Some(trace_name);
            outcome.audit_file = Some(audit_name);
        }
        Err(e) => outcome.error = Some(e.to_string()),
    }
    outcome
}

/// Audit file contents: the cell, its resolved configuration and the audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellAudit {
    pub cell: Cell,
    pub config: RunConfig,
    pub audit: Option<AuditReport>,
    pub audit_error: Option<String>,
}

/// Runs every cell of `spec` and writes artifacts under `base_dir/output_dir`.
///
/// Cells run on up to `jobs` threads; per-cell failures are recorded in the
/// manifest and do not stop the sweep. Errors are returned only when the
/// problem itself cannot be built or the output directory cannot be written.
pub fn run_experiment(
    spec: &ExperimentSpec,
    base_dir: &Path,
    jobs: usize,
) -> Result<(Manifest, PathBuf)> {
    let problem = spec.problem.build(base_dir)?;
    let cells = spec.expand()?;
    let out_dir = base_dir.join(&spec.output_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let options: AuditOptions = spec.audit.into();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(&problem, cell, &options, &out_dir))
            .collect()
    });
    let manifest = Manifest {
        seed: spec.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        num_cells: outcomes.len(),
        cells: outcomes,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok((manifest, out_dir))
}

/// Assumptions and bound parameters for one cell, computed without running it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellCheck {
    pub index: usize,
    pub label: String,
    pub assumptions: Option<AssumptionReport>,
    pub params: Option<BoundParams>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

fn check_cell(problem: &Problem, cell: &Cell, options: &AuditOptions) -> Result<CellCheck> {
    let (mdp, fs) = (&problem.mdp, &problem.features);
    let config = cell.run_config(problem)?;
    let sets = config
        .samples
        .schedule(fs, config.seed, config.num_iterations.max(1))?;
    let assumptions = check_assumptions(mdp, fs, &sets, &config)?;
    let mut notes = Vec::new();

    let j0 = fs.values(&config.theta0);
    let mu0 = mdp.greedy_policy(&j0)?;
    let delta0 = mdp.evaluate_policy(&mu0)?.sup_distance(&j0);
    let exhaustive_ok = mdp
        .policy_count()
        .is_some_and(|n| n <= options.enumeration_cap);
    let encountered = [mu0];
    let mode = match options.delta_app {
        DeltaAppChoice::Exhaustive => DeltaAppMode::Exhaustive {
            cap: options.enumeration_cap,
        },
        DeltaAppChoice::Auto if exhaustive_ok => DeltaAppMode::Exhaustive {
            cap: options.enumeration_cap,
        },
        _ => {
            notes.push(
                "delta_app evaluated on the initial greedy policy only (lower estimate)".into(),
            );
            DeltaAppMode::Encountered(&encountered)
        }
    };
    if !mdp.has_unit_rewards() {
        notes.push("arbitrary rewards: bound parameters are not defined".into());
        return Ok(CellCheck {
            index: cell.index,
            label: cell.label(),
            assumptions: Some(assumptions),
            params: None,
            notes,
            error: None,
        });
    }
    let constants = ProblemConstants::measure(mdp, fs, &sets, mode, delta0)?;
    let alpha_gd = match config.variant {
        Variant::GradientDescent { gamma, .. } => Some(alpha_gd_sup(fs, &sets, gamma)?),
        _ => None,
    };
    let params = params_for(&constants, &config, alpha_gd)?;
    if !params.precondition_holds() {
        notes.push(format!(
            "beta = {} >= 1: bounds are vacuous (precondition-violated)",
            params.beta
        ));
    }
    Ok(CellCheck {
        index: cell.index,
        label: cell.label(),
        assumptions: Some(assumptions),
        params: Some(params),
        notes,
        error: None,
    })
}

pub fn check_experiment(spec: &ExperimentSpec, base_dir: &Path) -> Result<Vec<CellCheck>> {
    let problem = spec.problem.build(base_dir)?;
    let options: AuditOptions = spec.audit.into();
    Ok(spec
        .expand()?
        .iter()
        .map(|cell| {
            check_cell(&problem, cell, &options).unwrap_or_else(|e| CellCheck {
                index: cell.index,
                label: cell.label(),
                assumptions: None,
                params: None,
                notes: Vec::new(),
                error: Some(e.to_string()),
            })
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BruteForce {
    pub policies: u64,
    /// Componentwise max of `J^mu` over all deterministic policies.
    pub values: ValueVec,
    pub max_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub values: ValueVec,
    pub policy: Policy,
    pub sweeps: usize,
    pub brute_force: Option<BruteForce>,
}

/// Exhaustive `max_mu J^mu`, refused above `cap` policies.
pub fn brute_force_optimal(mdp: &Mdp, cap: u64) -> Result<ValueVec> {
    match mdp.policy_count() {
        Some(n) if n <= cap => {}
        other => {
            return Err(Error::EnumerationCap {
                needed: other.map_or_else(
                    || format!("{}^{}", mdp.num_actions(), mdp.num_states()),
                    |n| n.to_string(),
                ),
                cap,
            })
        }
    }
    let mut best = vec![f64::NEG_INFINITY; mdp.num_states()];
    for policy in mdp.policies() {
        let j = mdp.evaluate_policy(&policy)?;
        for (b, v) in best.iter_mut().zip(j.iter()) {
            *b = b.max(*v);
        }
    }
    Ok(ValueVec::new(best))
}

pub fn oracle_report(mdp: &Mdp, cap: u64) -> Result<OracleReport> {
    let sol = mdp.solve_optimal(DEFAULT_OPTIMAL_TOL)?;
    let brute_force = match brute_force_optimal(mdp, cap) {
        Ok(values) => Some(BruteForce {
            policies: mdp.policy_count().unwrap_or(0),
            max_gap: values.sup_distance(&sol.values),
            values,
        }),
        Err(Error::EnumerationCap { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(OracleReport {
        values: sol.values,
        policy: sol.policy,
        sweeps: sol.sweeps,
        brute_force,
    })
}

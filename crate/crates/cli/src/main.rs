use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lapi_core::bounds::Verdict;
use lapi_core::counterexample::{verify_dichotomy, CounterexampleSpec, Regime};
use lapi_core::experiments::{
    check_experiment, load_mdp, load_spec, oracle_report, run_experiment,
};
use lapi_core::linear_fa::DEFAULT_ENUMERATION_CAP;
use lapi_core::Error;

#[derive(Parser)]
#[command(
    name = "lapi",
    version,
    about = "Approximate policy iteration with lookahead and linear value functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment spec and write traces, audits and a manifest.
    Run {
        spec: PathBuf,
        /// Maximum number of cells run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run the two-state divergence example.
    Counterexample {
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long = "H", default_value_t = 1)]
        h: usize,
        #[arg(long, default_value_t = 1.0)]
        r1: f64,
        #[arg(long, default_value_t = 0.0)]
        r2: f64,
        #[arg(long, default_value_t = 1.0)]
        theta0: f64,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long)]
        json: bool,
    },
    /// Report assumptions and bound parameters for each cell without running it.
    Check {
        spec: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Solve a model file exactly and cross-check by enumeration when feasible.
    Oracle {
        mdp: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

/// Prints a line to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

struct Style {
    color: bool,
}

impl Style {
    fn detect() -> Self {
        Style {
            color: std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal(),
        }
    }

    fn paint(&self, text: &str, good: bool) -> String {
        if !self.color {
            return text.to_string();
        }
        let code = if good { "32" } else { "31" };
        format!("\x1b[{code}m{text}\x1b[0m")
    }

    fn pass_fail(&self, pass: bool) -> String {
        self.paint(if pass { "PASS" } else { "FAIL" }, pass)
    }
}

/// Up to six decimals with trailing zeros removed.
fn short(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x != 0.0 && x.abs() < 1e-4 {
        return format!("{x:e}");
    }
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    say!("{text}");
    Ok(())
}

fn spec_dir(path: &Path) -> &Path {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

fn verdict_text(v: Option<Verdict>) -> &'static str {
    v.map_or("-", |v| v.label())
}

fn cmd_run(spec_path: &Path, jobs: usize, json: bool, style: &Style) -> Result<(), Error> {
    let spec = load_spec(spec_path)?;
    let (manifest, out_dir) = run_experiment(&spec, spec_dir(spec_path), jobs)?;
    if json {
        return print_json(&manifest);
    }
    for c in &manifest.cells {
        let ok = c.error.is_none() && c.status != "diverged";
        say!(
            "cell {:>4}  {:<40} {:<10} bound={:<22} iterate={}",
            c.index,
            c.label,
            style.paint(&c.status, ok),
            verdict_text(c.bound_verdict),
            verdict_text(c.iterate_verdict),
        );
        if let Some(e) = &c.error {
            say!("           error: {e}");
        }
    }
    say!(
        "{} cells, {} with errors; outputs in {}",
        manifest.num_cells,
        manifest.failures(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_counterexample(
    spec: CounterexampleSpec,
    iters: usize,
    json: bool,
    style: &Style,
) -> Result<(), Error> {
    let report = verify_dichotomy(&spec, iters)?;
    if json {
        return print_json(&report);
    }
    let beta = short(report.expansion_factor);
    let verdict = match report.predicted {
        Regime::Diverges => style.paint(&format!("DIVERGES (β = {beta})"), false),
        Regime::Converges => style.paint(&format!("CONVERGES (β = {beta})"), true),
        Regime::Critical => format!("CRITICAL (β = {beta})"),
    };
    say!("{verdict}");
    say!(
        "delta_FV * alpha^(m+H-1) = 1.2 * {}^{} = {}",
        spec.alpha,
        spec.m + spec.h - 1,
        short(report.expansion_factor)
    );
    say!(
        "run status: {}; depth threshold m+H-1 > {} is {}",
        report.status.label(),
        short(report.depth_threshold),
        if report.depth_threshold_met {
            "met"
        } else {
            "not met"
        }
    );
    if let Some(agree) = report.agrees_with_closed_form {
        say!(
            "closed-form agreement: {} (max relative gap {:e})",
            style.pass_fail(agree),
            report.max_relative_gap
        );
    }
    for note in &report.notes {
        say!("note: {note}");
    }
    say!("k,theta");
    for (k, theta) in report.thetas.iter().enumerate() {
        say!("{k},{theta}");
    }
    Ok(())
}

fn cmd_check(spec_path: &Path, json: bool, style: &Style) -> Result<(), Error> {
    let spec = load_spec(spec_path)?;
    let checks = check_experiment(&spec, spec_dir(spec_path))?;
    if json {
        return print_json(&checks);
    }
    for c in &checks {
        say!("cell {}: {}", c.index, c.label);
        if let Some(e) = &c.error {
            say!("  error: {e}");
            continue;
        }
        if let Some(report) = &c.assumptions {
            for a in &report.checks {
                say!(
                    "  {}: {} ({} {} {})",
                    a.name,
                    style.pass_fail(a.pass),
                    short(a.lhs),
                    a.relation,
                    short(a.rhs)
                );
            }
        }
        if let Some(p) = &c.params {
            let asym = p.mu_asym.map_or_else(|| "undefined".to_string(), short);
            say!(
                "  delta_FV = {}  delta_app = {}  beta = {}  tau = {}  mu_asym = {}",
                short(p.delta_fv),
                short(p.delta_app),
                short(p.beta),
                short(p.tau),
                asym
            );
        }
        for note in &c.notes {
            say!("  note: {note}");
        }
    }
    Ok(())
}

fn cmd_oracle(path: &Path, json: bool) -> Result<(), Error> {
    let mdp = load_mdp(path)?;
    let report = oracle_report(&mdp, DEFAULT_ENUMERATION_CAP)?;
    if json {
        return print_json(&report);
    }
    say!(
        "J* = [{}]",
        report
            .values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    say!(
        "optimal policy = [{}]",
        report
            .policy
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    match &report.brute_force {
        Some(bf) => say!(
            "enumeration over {} policies: max gap {:e}",
            bf.policies,
            bf.max_gap
        ),
        None => say!("enumeration skipped: more than {DEFAULT_ENUMERATION_CAP} policies"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let style = Style::detect();
    let result = match cli.command {
        Command::Run { spec, jobs, json } => cmd_run(&spec, jobs, json, &style),
        Command::Counterexample {
            alpha,
            m,
            h,
            r1,
            r2,
            theta0,
            iters,
            json,
        } => {
            let spec = CounterexampleSpec {
                r1,
                r2,
                alpha,
                m,
                h,
                theta0,
            };
            cmd_counterexample(spec, iters, json, &style)
        }
        Command::Check { spec, json } => cmd_check(&spec, json, &style),
        Command::Oracle { mdp, json } => cmd_oracle(&mdp, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { 1 } else { 2 })
        }
    }
}

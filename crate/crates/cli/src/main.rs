use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use demi_core::asymptotics::{clt_diagnose, complete_convergence_diagnose, ks_critical_1pct};
use demi_core::bounds;
use demi_core::experiment::{
    dump_paths, fmt_num, round_json, run, run_suite, verdict_exit_code, write_atomic, ExperimentConfig, ModeKind,
    ToolConfig, ERROR_EXIT_CODE,
};
use demi_core::generators::{generate, to_chain};
use demi_core::monotone::{certify_indicator_monotonicity, IndicatorTarget, Monotonicity};
use demi_core::oracle;
use demi_core::registry::{verify, Instance, Settings};
use demi_core::stopping::apply_stop;
use demi_core::{Error, Result, VerificationReport};

const DEFAULT_GEN_PATHS: u64 = 10;
const STOP_PROBES_PER_PATH: usize = 16;

#[derive(Parser, Debug)]
#[command(name = "demi", version, about = "Demimartingale inequality harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config file
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config path count (and selects Monte Carlo)
    #[arg(long)]
    paths: Option<u64>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample paths as CSV `path_id,step,value`
    Gen(Common),
    /// Run the defining inequality over a test-function battery
    CheckDemi {
        #[command(flatten)]
        common: Common,
        /// Nonnegative battery (demisubmartingale variant)
        #[arg(long)]
        sub: bool,
    },
    /// Stopping-time summary and monotonicity certificates
    Stop(Common),
    /// Evaluate a closed-form bound
    Bound {
        #[command(subcommand)]
        bound: BoundCmd,
    },
    /// Run one experiment config and emit its JSON report
    Verify {
        #[command(flatten)]
        common: Common,
        /// Also write the paths as CSV next to the report
        #[arg(long)]
        dump_paths: bool,
    },
    /// CLT diagnostics per horizon as CSV
    Clt(Common),
    /// Complete-convergence tails per horizon as CSV
    Slln(Common),
    /// Exact enumeration summary; `--out` writes the outcome table as CSV
    Oracle(Common),
    /// Run every config in a directory
    Suite {
        dir: PathBuf,
        /// Directory for per-experiment reports and summary.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum BoundCmd {
    Phi { u: f64 },
    PhiBound { u: f64 },
    MgfLog { lambda: f64, c: f64, ex2: f64 },
    H1 { u: f64 },
    H1Lower { u: f64 },
    PsiSup { t: f64, v_n: f64, c: f64 },
    Bernstein {
        t: f64,
        v_n: f64,
        c: f64,
        n: usize,
        #[arg(long)]
        two_sided: bool,
    },
    Doob { es1: f64, lambda: f64 },
    LpMax { p: f64, m: f64, es1: f64 },
    Moment { p: f64, v_n: f64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_EXIT_CODE as u8)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

fn emit_json(out: Option<&Path>, value: Value) -> Result<()> {
    let text = serde_json::to_string_pretty(&round_json(value)).expect("json serializes");
    emit(out, &(text + "\n"))
}

fn tool_config(common: &Common) -> Result<ToolConfig> {
    let mut config = ToolConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    if let Some(paths) = common.paths {
        config.paths = Some(paths);
        config.mode = ModeKind::MonteCarlo;
    }
    Ok(config)
}

fn report_json(report: &VerificationReport) -> Value {
    json!({
        "theorem_id": report.theorem_id,
        "verdict": report.verdict,
        "z_margin": report.z_margin,
        "exact": report.exact,
        "checks": report.checks,
        "notes": report.notes,
    })
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Gen(common) => {
            let config = tool_config(&common)?;
            let spec = config.generator()?;
            let paths = config.paths.unwrap_or(DEFAULT_GEN_PATHS);
            let ensemble = generate(spec, paths as usize, config.seed()?)?;
            let mut csv = String::from("path_id,step,value\n");
            for (id, path) in ensemble.paths().iter().enumerate() {
                for (k, v) in path.values().iter().enumerate() {
                    csv.push_str(&format!("{id},{},{}\n", k + 1, fmt_num(*v)));
                }
            }
            emit(common.out.as_deref(), &csv)?;
            Ok(0)
        }
        Command::CheckDemi { common, sub } => {
            let config = tool_config(&common)?;
            let id = if sub { "D1.2-demisub" } else { "D1.2-demi" };
            let instance = Instance::new(config.generator()?.clone());
            let settings = Settings {
                seed: config.seed()?,
                ..Settings::default()
            };
            let report = verify(id, &instance, &config.params, &config.run_mode()?, &settings)?;
            emit_json(common.out.as_deref(), report_json(&report))?;
            Ok(verdict_exit_code(report.verdict))
        }
        Command::Stop(common) => {
            let config = tool_config(&common)?;
            let rule = config.stopping()?;
            rule.validate()?;
            let seed = config.seed()?;
            let paths = config.paths.ok_or_else(|| Error::config("paths", "required"))?;
            let ensemble = generate(config.generator()?, paths as usize, seed)?;
            let views: Vec<_> = ensemble.paths().iter().map(|p| apply_stop(p, rule)).collect();
            let stopped: Vec<(usize, f64)> = views.iter().filter_map(|v| Some((v.tau?, v.s_tau?))).collect();
            let k = stopped.len().max(1) as f64;
            let certificate = |dir| {
                let c = certify_indicator_monotonicity(
                    rule,
                    dir,
                    IndicatorTarget::AtMost,
                    &ensemble,
                    STOP_PROBES_PER_PATH,
                    seed,
                );
                serde_json::to_value(c).expect("certificate serializes")
            };
            let value = json!({
                "paths": paths,
                "stopped_fraction": stopped.len() as f64 / paths as f64,
                "mean_tau_given_stopped": stopped.iter().map(|s| s.0 as f64).sum::<f64>() / k,
                "mean_s_tau_given_stopped": stopped.iter().map(|s| s.1).sum::<f64>() / k,
                "certificates": {
                    "nondecreasing": certificate(Monotonicity::Nondecreasing),
                    "nonincreasing": certificate(Monotonicity::Nonincreasing),
                },
            });
            emit_json(common.out.as_deref(), value)?;
            Ok(0)
        }
        Command::Bound { bound } => {
            let (name, inputs, value) = evaluate_bound(bound)?;
            emit_json(None, json!({ "bound": name, "inputs": inputs, "value": value }))?;
            Ok(0)
        }
        Command::Verify { common, dump_paths: dump } => {
            let mut config = ExperimentConfig::load(&common.config)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if let Some(paths) = common.paths {
                config.paths = Some(paths);
                config.mode = ModeKind::MonteCarlo;
            }
            let (report, full) = run(&config)?;
            emit(common.out.as_deref(), &(report.to_json() + "\n"))?;
            if dump {
                let path = match &common.out {
                    Some(out) => out.with_extension("paths.csv"),
                    None => PathBuf::from(format!("{}.paths.csv", config.experiment_id)),
                };
                let mut buf = Vec::new();
                dump_paths(&config, &mut buf)?;
                write_atomic(&path, &buf)?;
            }
            eprintln!("{}: {} (z_margin {})", full.theorem_id, full.verdict, fmt_num(full.z_margin));
            for note in &full.notes {
                eprintln!("  note: {note}");
            }
            for check in full.failed_checks() {
                eprintln!("  failed: {} (lhs {}, rhs {})", check.label, fmt_num(check.lhs.mean()), fmt_num(check.rhs));
            }
            Ok(verdict_exit_code(report.verdict))
        }
        Command::Clt(common) => {
            let config = tool_config(&common)?;
            let n_grid = config.params.horizons("n_grid")?;
            let paths = config.paths.ok_or_else(|| Error::config("paths", "required"))?;
            let rows = clt_diagnose(config.generator()?, &n_grid, paths, config.seed()?)?;
            let mut csv = String::from("n,sigma_n,v_n,ratio_cubed,ks_distance,ecf_distance,ks_critical\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.n,
                    fmt_num(r.sigma_n),
                    fmt_num(r.v_n),
                    fmt_num(r.ratio_cubed),
                    fmt_num(r.ks_distance),
                    fmt_num(r.ecf_distance),
                    fmt_num(ks_critical_1pct(paths as usize))
                ));
            }
            emit(common.out.as_deref(), &csv)?;
            Ok(0)
        }
        Command::Slln(common) => {
            let config = tool_config(&common)?;
            let r = config.params.positive("r")?;
            let epsilon = config.params.positive("epsilon")?;
            let n_grid = config.params.horizons("n_grid")?;
            let d = complete_convergence_diagnose(config.generator()?, r, epsilon, &n_grid, &config.run_mode()?)?;
            let mut csv = String::from("n,tail,stderr,envelope,v_over_nr,partial_sum\n");
            for (row, sum) in d.rows.iter().zip(&d.partial_sum) {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.n,
                    fmt_num(row.tail.mean()),
                    fmt_num(row.tail.stderr()),
                    fmt_num(row.envelope),
                    fmt_num(row.v_over_nr),
                    fmt_num(*sum)
                ));
            }
            emit(common.out.as_deref(), &csv)?;
            Ok(0)
        }
        Command::Oracle(common) => {
            let config = tool_config(&common)?;
            let table = oracle::enumerate(&to_chain(config.generator()?)?)?;
            let n = table.horizon();
            let mean = oracle::exact_expectation(&table, |p| p.values()[n - 1]);
            let second = oracle::exact_expectation(&table, |p| p.values()[n - 1].powi(2));
            let summary = json!({
                "outcomes": table.len(),
                "horizon": n,
                "total_probability": table.total_probability,
                "mean_s_n": mean,
                "second_moment_s_n": second,
            });
            emit_json(None, summary)?;
            if let Some(out) = &common.out {
                let mut csv = String::from("outcome_id,probability,step,value\n");
                for (id, (path, p)) in table.outcomes.iter().enumerate() {
                    for (k, v) in path.values().iter().enumerate() {
                        csv.push_str(&format!("{id},{},{},{}\n", fmt_num(*p), k + 1, fmt_num(*v)));
                    }
                }
                write_atomic(out, csv.as_bytes())?;
            }
            Ok(0)
        }
        Command::Suite { dir, out } => {
            let summary = run_suite(&dir, out.as_deref())?;
            print!("{}", summary.table());
            for row in &summary.rows {
                if let Some(e) = &row.error {
                    eprintln!("{}: {e}", row.file);
                }
            }
            Ok(summary.exit_code)
        }
    }
}

fn evaluate_bound(cmd: BoundCmd) -> Result<(&'static str, Value, f64)> {
    Ok(match cmd {
        BoundCmd::Phi { u } => ("phi", json!({ "u": u }), bounds::phi(u)),
        BoundCmd::PhiBound { u } => ("phi_bound", json!({ "u": u }), bounds::phi_bound(u)?),
        BoundCmd::MgfLog { lambda, c, ex2 } => (
            "mgf_log_bound",
            json!({ "lambda": lambda, "c": c, "ex2": ex2 }),
            bounds::mgf_log_bound(lambda, c, ex2)?,
        ),
        BoundCmd::H1 { u } => ("h1", json!({ "u": u }), bounds::h1(u)?),
        BoundCmd::H1Lower { u } => ("h1_lower", json!({ "u": u }), bounds::h1_lower(u)?),
        BoundCmd::PsiSup { t, v_n, c } => {
            ("psi_sup", json!({ "t": t, "v_n": v_n, "c": c }), bounds::psi_sup(t, v_n, c)?)
        }
        BoundCmd::Bernstein { t, v_n, c, n, two_sided } => {
            let input = bounds::BernsteinInput::new(t, v_n, c, n)?;
            let inputs = json!({ "t": t, "v_n": v_n, "c": c, "n": n, "two_sided": two_sided });
            if two_sided {
                ("bernstein_tail_two_sided", inputs, bounds::bernstein_tail_two_sided(&input))
            } else {
                ("bernstein_tail", inputs, bounds::bernstein_tail(&input))
            }
        }
        BoundCmd::Doob { es1, lambda } => {
            ("doob_max_bound", json!({ "es1": es1, "lambda": lambda }), bounds::doob_max_bound(es1, lambda)?)
        }
        BoundCmd::LpMax { p, m, es1 } => {
            ("lp_max_bound", json!({ "p": p, "m": m, "es1": es1 }), bounds::lp_max_bound(p, m, es1)?)
        }
        BoundCmd::Moment { p, v_n } => (
            "moment_bound",
            json!({ "p": p, "v_n": v_n, "asymptotic": true }),
            bounds::moment_bound(p, v_n)?,
        ),
    })
}

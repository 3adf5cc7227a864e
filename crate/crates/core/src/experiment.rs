//! Config-driven experiments: one TOML file per experiment, one JSON report
//! per run, and a directory runner.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::expect::Mode;
use crate::generators::{generate, to_chain, GeneratorSpec};
use crate::oracle;
use crate::registry::{verify, Instance, Params, Settings, TheoremId};
use crate::report::{Direction, Tolerance, Verdict, VerificationReport};
use crate::stopping::StoppingRule;

pub const DEFAULT_TOLERANCE_Z: f64 = 3.0;

/// Rounds to 12 significant digits. Non-finite values pass through and
/// negative zero becomes zero.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x.is_finite() {
        format!("{x:.11e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

/// Decimal text with at most 12 significant digits, in exponent form for
/// very small or very large magnitudes.
pub fn fmt_num(x: f64) -> String {
    let r = sig12(x);
    if r != 0.0 && (r.abs() < 1e-5 || r.abs() >= 1e16) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn ser_num<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(sig12(*x))
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Exact,
    #[default]
    MonteCarlo,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment_id: Option<String>,
    theorem_id: Option<String>,
    seed: Option<u64>,
    tolerance_z: Option<f64>,
    #[serde(default)]
    mode: ModeKind,
    paths: Option<u64>,
    generator: Option<GeneratorSpec>,
    stopping: Option<StoppingRule>,
    stopping2: Option<StoppingRule>,
    #[serde(default)]
    params: Params,
}

/// One experiment, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub theorem_id: String,
    pub instance: Instance,
    pub params: Params,
    pub mode: ModeKind,
    pub paths: Option<u64>,
    pub seed: u64,
    pub tolerance_z: f64,
}

impl ExperimentConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| Error::config("config", e.message().to_string()))?;
        let experiment_id = raw.experiment_id.ok_or_else(|| Error::config("experiment_id", "required"))?;
        if experiment_id.is_empty() {
            return Err(Error::config("experiment_id", "must not be empty"));
        }
        let theorem_id = raw.theorem_id.ok_or_else(|| Error::config("theorem_id", "required"))?;
        let seed = raw.seed.ok_or_else(|| Error::config("seed", "required"))?;
        let tolerance_z = raw.tolerance_z.unwrap_or(DEFAULT_TOLERANCE_Z);
        if !(tolerance_z > 0.0 && tolerance_z.is_finite()) {
            return Err(Error::config("tolerance_z", "must be positive"));
        }
        let id = TheoremId::parse(&theorem_id)?;
        raw.params.validate_for(id)?;
        if let Some(g) = &raw.generator {
            g.validate()?;
        }
        let config = Self {
            experiment_id,
            theorem_id,
            instance: Instance {
                generator: raw.generator,
                stopping: raw.stopping,
                stopping2: raw.stopping2,
            },
            params: raw.params,
            mode: raw.mode,
            paths: raw.paths,
            seed,
            tolerance_z,
        };
        config.run_mode()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&src)
    }

    pub fn run_mode(&self) -> Result<Mode> {
        match self.mode {
            ModeKind::Exact => Ok(Mode::Exact),
            ModeKind::MonteCarlo => match self.paths {
                None => Err(Error::config("paths", "required")),
                Some(0) => Err(Error::config("paths", "must be positive")),
                Some(paths) => Ok(Mode::MonteCarlo { paths, seed: self.seed }),
            },
        }
    }

    pub fn settings(&self) -> Settings {
        Settings {
            tolerance: Tolerance {
                z: self.tolerance_z,
                ..Tolerance::default()
            },
            seed: self.seed,
        }
    }
}

/// The parts of a config read by the single-purpose tools. Other keys are
/// ignored, so experiment configs double as tool configs.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ToolConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: ModeKind,
    pub paths: Option<u64>,
    pub generator: Option<GeneratorSpec>,
    pub stopping: Option<StoppingRule>,
    #[serde(default)]
    pub params: Params,
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let config: Self = toml::from_str(&src).map_err(|e| Error::config("config", e.message().to_string()))?;
        if let Some(g) = &config.generator {
            g.validate()?;
        }
        Ok(config)
    }

    pub fn generator(&self) -> Result<&GeneratorSpec> {
        self.generator.as_ref().ok_or_else(|| Error::config("generator", "required"))
    }

    pub fn stopping(&self) -> Result<&StoppingRule> {
        self.stopping.as_ref().ok_or_else(|| Error::config("stopping", "required"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::config("seed", "required"))
    }

    pub fn run_mode(&self) -> Result<Mode> {
        match self.mode {
            ModeKind::Exact => Ok(Mode::Exact),
            ModeKind::MonteCarlo => match self.paths {
                None => Err(Error::config("paths", "required")),
                Some(0) => Err(Error::config("paths", "must be positive")),
                Some(paths) => Ok(Mode::MonteCarlo { paths, seed: self.seed()? }),
            },
        }
    }
}

/// Rounds every float in a JSON tree to 12 significant digits.
pub fn round_json(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(sig12(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSummary {
    pub kind: ModeKind,
    pub paths: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LhsSummary {
    #[serde(serialize_with = "ser_num")]
    pub mean: f64,
    #[serde(serialize_with = "ser_num")]
    pub stderr: f64,
}

/// The JSON report. Field order is part of the format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub theorem_id: String,
    pub generator: Option<GeneratorSpec>,
    pub params: Params,
    pub mode: ModeSummary,
    pub seed: u64,
    pub lhs: LhsSummary,
    #[serde(serialize_with = "ser_num")]
    pub rhs: f64,
    pub direction: Direction,
    #[serde(serialize_with = "ser_num")]
    pub z_margin: f64,
    pub verdict: Verdict,
    pub exact: bool,
    pub runtime_ms: u64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs one experiment. Also returns the full verification report (every
/// check and note), which the JSON report summarizes.
pub fn run(config: &ExperimentConfig) -> Result<(ExperimentReport, VerificationReport)> {
    let start = Instant::now();
    let mode = config.run_mode()?;
    let full = verify(&config.theorem_id, &config.instance, &config.params, &mode, &config.settings())?;
    let report = ExperimentReport {
        experiment_id: config.experiment_id.clone(),
        theorem_id: full.theorem_id.clone(),
        generator: config.instance.generator.clone(),
        params: config.params.clone(),
        mode: ModeSummary {
            kind: config.mode,
            paths: match mode {
                Mode::Exact => None,
                Mode::MonteCarlo { paths, .. } => Some(paths),
            },
        },
        seed: config.seed,
        lhs: LhsSummary {
            mean: full.lhs.mean(),
            stderr: full.lhs.stderr(),
        },
        rhs: full.rhs,
        direction: full.direction,
        z_margin: full.z_margin,
        verdict: full.verdict,
        exact: full.exact,
        runtime_ms: start.elapsed().as_millis() as u64,
    };
    Ok((report, full))
}

pub fn verdict_exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}

pub const ERROR_EXIT_CODE: i32 = 3;

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(contents).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

/// CSV `path_id,step,value`. Monte-Carlo configs dump the sampled paths;
/// exact configs dump the enumerated outcomes in oracle order.
pub fn dump_paths<W: Write>(config: &ExperimentConfig, out: &mut W) -> Result<()> {
    let spec = config
        .instance
        .generator
        .as_ref()
        .ok_or_else(|| Error::config("generator", "required"))?;
    let io = |e: std::io::Error| Error::Io(e.to_string());
    writeln!(out, "path_id,step,value").map_err(io)?;
    let write_path = |out: &mut W, id: usize, values: &[f64]| -> Result<()> {
        for (k, v) in values.iter().enumerate() {
            writeln!(out, "{id},{},{}", k + 1, fmt_num(*v)).map_err(io)?;
        }
        Ok(())
    };
    match config.run_mode()? {
        Mode::Exact => {
            let table = oracle::enumerate(&to_chain(spec)?)?;
            for (id, (path, _)) in table.outcomes.iter().enumerate() {
                write_path(out, id, path.values())?;
            }
        }
        Mode::MonteCarlo { paths, seed } => {
            let ensemble = generate(spec, paths as usize, seed)?;
            for (id, path) in ensemble.paths().iter().enumerate() {
                write_path(out, id, path.values())?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SuiteStatus {
    Pass,
    Inconclusive,
    Error,
    Fail,
}

impl SuiteStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            SuiteStatus::Pass => 0,
            SuiteStatus::Fail => 1,
            SuiteStatus::Inconclusive => 2,
            SuiteStatus::Error => ERROR_EXIT_CODE,
        }
    }
}

impl From<Verdict> for SuiteStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => SuiteStatus::Pass,
            Verdict::Inconclusive => SuiteStatus::Inconclusive,
            Verdict::Fail => SuiteStatus::Fail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub file: String,
    pub experiment_id: Option<String>,
    pub theorem_id: Option<String>,
    pub status: SuiteStatus,
    #[serde(serialize_with = "ser_opt_num")]
    pub z_margin: Option<f64>,
    pub runtime_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn ser_opt_num<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_num(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub rows: Vec<SuiteRow>,
    pub status: SuiteStatus,
    pub exit_code: i32,
}

impl SuiteSummary {
    /// Fixed-width text table, one row per experiment.
    pub fn table(&self) -> String {
        let mut s = format!("{:<32} {:<24} {:<13} {:>14} {:>10}\n", "experiment_id", "theorem_id", "verdict", "z_margin", "ms");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<32} {:<24} {:<13} {:>14} {:>10}\n",
                r.experiment_id.as_deref().unwrap_or(&r.file),
                r.theorem_id.as_deref().unwrap_or("-"),
                serde_json::to_value(r.status).expect("status serializes").as_str().unwrap_or("?"),
                r.z_margin.map_or("-".to_string(), fmt_num),
                r.runtime_ms
            ));
        }
        s
    }
}

/// Runs every `*.toml` in `dir` (sorted by file name). Reports go to
/// `out_dir/<experiment_id>.json` and the aggregate to `out_dir/summary.json`.
/// A config error only affects its own row.
pub fn run_suite(dir: &Path, out_dir: Option<&Path>) -> Result<SuiteSummary> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let mut seen = BTreeMap::new();
    let configs: Vec<(String, Result<ExperimentConfig>)> = files
        .iter()
        .map(|f| {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let config = ExperimentConfig::load(f).and_then(|c| match seen.insert(c.experiment_id.clone(), name.clone()) {
                Some(first) => Err(Error::config("experiment_id", format!("duplicate of {first}"))),
                None => Ok(c),
            });
            (name, config)
        })
        .collect();
    if let Some(out) = out_dir {
        fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    }
    let rows: Vec<SuiteRow> = configs
        .into_par_iter()
        .map(|(file, config)| {
            let start = Instant::now();
            let config = match config {
                Ok(c) => c,
                Err(e) => return error_row(file, None, None, e, start),
            };
            let (id, theorem) = (Some(config.experiment_id.clone()), Some(config.theorem_id.clone()));
            match run(&config) {
                Ok((report, _)) => {
                    if let Some(out) = out_dir {
                        let path = out.join(format!("{}.json", config.experiment_id));
                        if let Err(e) = write_atomic(&path, report.to_json().as_bytes()) {
                            return error_row(file, id, theorem, e, start);
                        }
                    }
                    SuiteRow {
                        file,
                        experiment_id: id,
                        theorem_id: Some(report.theorem_id),
                        status: report.verdict.into(),
                        z_margin: Some(report.z_margin),
                        runtime_ms: report.runtime_ms,
                        error: None,
                    }
                }
                Err(e) => error_row(file, id, theorem, e, start),
            }
        })
        .collect();
    let status = rows.iter().map(|r| r.status).max().unwrap_or(SuiteStatus::Pass);
    let summary = SuiteSummary {
        rows,
        status,
        exit_code: status.exit_code(),
    };
    if let Some(out) = out_dir {
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_atomic(&out.join("summary.json"), json.as_bytes())?;
    }
    Ok(summary)
}

fn error_row(file: String, id: Option<String>, theorem: Option<String>, e: Error, start: Instant) -> SuiteRow {
    SuiteRow {
        file,
        experiment_id: id,
        theorem_id: theorem,
        status: SuiteStatus::Error,
        z_margin: None,
        runtime_ms: start.elapsed().as_millis() as u64,
        error: Some(e.to_string()),
    }
}

//! Run configurations, artifact layout and manifests for the command-line
//! pipelines.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::choquard::{
    is_trivial, lambda_bound_check, selfdual_minimize, selfdual_value, BoundReport, ChoquardProblem,
    SelfdualParams,
};
use crate::error::{Error, Result};
use crate::grid::{GridField, TorusGrid};
use crate::io::{read_field, write_field};
use crate::noise::{mollify, sample_white_noise, NoiseSample, RNG_ALGORITHM};
use crate::operator::AndersonOperator;
use crate::spectral::{
    eigendecompose, form_bound_constant, kato_modulus_heat, kato_modulus_log, resolvent_sup_norm,
    Potential, Spectrum,
};
use crate::variational::{
    fountain_solve, mountain_pass_solve, ps_diagnostics, FountainParams, MountainPassParams,
    Nonlinearity, Problem, PsReport, ResultSummary, SolveResult, TraceEntry,
};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "ANDERSON_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SampleNoise,
    Spectrum,
    KatoCheck,
    DiagnoseHeat,
    SolveMp,
    SolveFountain,
    SolveChoquard,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SampleNoise => "sample-noise",
            Command::Spectrum => "spectrum",
            Command::KatoCheck => "kato-check",
            Command::DiagnoseHeat => "diagnose-heat",
            Command::SolveMp => "solve-mp",
            Command::SolveFountain => "solve-fountain",
            Command::SolveChoquard => "solve-choquard",
        }
    }

    /// Solver commands write into a directory; the others write one file.
    pub fn writes_directory(self) -> bool {
        matches!(self, Command::SolveMp | Command::SolveFountain | Command::SolveChoquard)
    }

    /// Default output path under `root`.
    pub fn default_output(self, root: &Path, n: usize, seed: u64) -> PathBuf {
        let stem = format!("{}-n{n}-s{seed}", self.name());
        match self {
            Command::SampleNoise => root.join(format!("{stem}.f64")),
            c if c.writes_directory() => root.join(stem),
            _ => root.join(format!("{stem}.json")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoquardSpec {
    /// Interaction kernel: `builtin:negconst:<v>` or a field file.
    #[serde(default = "default_kernel")]
    pub w: String,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    /// `zero`, `const:<v>`, `random:<seed>` or a field file.
    #[serde(default = "default_init")]
    pub init: String,
}

fn default_kernel() -> String {
    "builtin:negconst:1".into()
}
fn default_p() -> f64 {
    2.0
}
fn default_q() -> f64 {
    3.0
}
fn default_init() -> String {
    "zero".into()
}

impl Default for ChoquardSpec {
    fn default() -> Self {
        ChoquardSpec {
            w: default_kernel(),
            p: default_p(),
            q: default_q(),
            init: default_init(),
        }
    }
}

/// Parameter sweeps for `kato-check`; empty lists fall back to defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default, rename = "T")]
    pub t: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
}

impl Sweep {
    /// Parses `r=0.5,0.25,T=1,0.5,lambda=1,10`: a token with `=` starts a
    /// new key, bare tokens extend the current one.
    pub fn parse(text: &str) -> Result<Sweep> {
        let mut sweep = Sweep::default();
        let mut current: Option<String> = None;
        for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let value = match token.split_once('=') {
                Some((key, value)) => {
                    current = Some(key.trim().to_string());
                    value
                }
                None => token,
            };
            let key = current
                .clone()
                .ok_or_else(|| Error::config("sweep", format!("value `{token}` before any key")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("sweep.{key}"), format!("not a number: `{value}`")))?;
            match key.as_str() {
                "r" => sweep.r.push(v),
                "T" | "t" => sweep.t.push(v),
                "lambda" => sweep.lambda.push(v),
                "eta" => sweep.eta.push(v),
                other => return Err(Error::config("sweep", format!("unknown sweep key `{other}`"))),
            }
        }
        Ok(sweep)
    }
}

/// Everything a run depends on. Serializes to JSON and back unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    /// Subtract `(1/2π) ln n` from the noise.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub renormalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choquard: Option<ChoquardSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub out: PathBuf,
}

fn parse_value(value: serde_json::Value) -> Result<RunConfig> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })
}

impl RunConfig {
    pub fn new(command: Command, n: usize, seed: u64, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            n,
            seed,
            cutoff: None,
            renormalize: false,
            potential: None,
            nonlinearity: None,
            choquard: None,
            tol: None,
            max_iter: None,
            count: None,
            times: None,
            sweep: None,
            out: out.into(),
        }
    }

    /// Parses and validates an already decoded JSON object.
    pub fn from_value(value: serde_json::Value) -> Result<RunConfig> {
        let config = parse_value(value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        let config = parse_value(value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Keys present in the JSON object `overlay` replace those of `self`.
    pub fn overlay_json(&self, overlay: &str) -> Result<RunConfig> {
        let over: serde_json::Value =
            serde_json::from_str(overlay).map_err(|e| Error::config("<root>", e.to_string()))?;
        let serde_json::Value::Object(over) = over else {
            return Err(Error::config("<root>", "configuration must be a JSON object"));
        };
        let mut base = serde_json::to_value(self).expect("config serializes");
        let serde_json::Value::Object(fields) = &mut base else {
            unreachable!("config serializes to an object")
        };
        for (k, v) in over {
            fields.insert(k, v);
        }
        let config = parse_value(base)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::config("n", format!("grid size must be even and at least 4, got {}", self.n)));
        }
        if let Some(k) = self.cutoff {
            if k == 0 {
                return Err(Error::config("cutoff", "cutoff must be positive"));
            }
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::config("tol", format!("tolerance must be positive, got {tol}")));
            }
        }
        if self.count == Some(0) {
            return Err(Error::config("count", "count must be at least 1"));
        }
        if let Some(times) = &self.times {
            if times.is_empty() {
                return Err(Error::config("times", "need at least one time"));
            }
            if let Some(i) = times.iter().position(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(Error::config(format!("times[{i}]"), "times must be positive"));
            }
        }
        if let Some(ch) = &self.choquard {
            if !(ch.p >= 1.0) {
                return Err(Error::config("choquard.p", format!("need p >= 1, got {}", ch.p)));
            }
            if !(ch.q > 1.0) {
                return Err(Error::config("choquard.q", format!("need q > 1, got {}", ch.q)));
            }
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::config("out", "output path is empty"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub operation: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    /// CSV header, for series files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub rng: String,
    /// Seconds since the Unix epoch at start.
    pub started_at: f64,
    pub wall_seconds: f64,
    pub timings: Vec<Timing>,
    pub files: Vec<FileEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunManifest {
    /// Checksums of the emitted files, keyed by relative path.
    pub fn checksums(&self) -> Vec<(String, String)> {
        self.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
    }
}

/// Where `run` writes the manifest for `config`.
pub fn manifest_path(config: &RunConfig) -> PathBuf {
    if config.command.writes_directory() {
        config.out.join("manifest.json")
    } else {
        let mut name = config.out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        config.out.with_file_name(name)
    }
}

/// Re-reads a manifest and checks every listed file against its checksum.
pub fn verify_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for entry in &manifest.files {
        let file = dir.join(&entry.path);
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Inconsistency(format!("checksum mismatch for {}", file.display())));
        }
    }
    Ok(manifest)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A table of numbers for plotting. A column named `iter` prints as an
/// integer; everything else with 17 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotSeries {
    pub fn new(columns: &[&str], rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::Shape(format!(
                "row {bad} has {} values for {} columns",
                rows[bad].len(),
                columns.len()
            )));
        }
        Ok(PlotSeries {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        })
    }

    /// `iter,<value_name>,grad_norm` from a solver trace.
    pub fn from_trace(trace: &[TraceEntry], value_name: &str) -> Self {
        PlotSeries {
            columns: vec!["iter".into(), value_name.into(), "grad_norm".into()],
            rows: trace
                .iter()
                .enumerate()
                .map(|(i, e)| vec![i as f64, e.phi, e.grad_norm])
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&self.columns)
                .map(|(v, c)| if c == "iter" { format!("{}", *v as u64) } else { format!("{v:.16e}") })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes `series` as CSV; refuses empty series without touching `path`.
pub fn emit_plotdata(series: &PlotSeries, path: &Path) -> Result<()> {
    if series.rows.is_empty() {
        return Err(Error::Domain(format!("refusing to write empty series to {}", path.display())));
    }
    fs::write(path, series.to_csv()).map_err(|e| Error::io(path, e))
}

struct Recorder {
    /// Directory the manifest lives in.
    root: PathBuf,
    files: Vec<FileEntry>,
    timings: Vec<Timing>,
    warnings: Vec<String>,
}

impl Recorder {
    fn time<T>(&mut self, operation: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push(Timing {
            operation: operation.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn record(&mut self, path: &Path, columns: Option<Vec<String>>) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        self.files.push(FileEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
            columns,
        });
        Ok(())
    }

    fn json(&mut self, path: &Path, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
        self.record(path, None)
    }

    fn field(&mut self, path: &Path, field: &GridField) -> Result<()> {
        write_field(path, field)?;
        self.record(path, None)
    }

    fn series(&mut self, path: &Path, series: &PlotSeries) -> Result<()> {
        emit_plotdata(series, path)?;
        self.record(path, Some(series.columns.clone()))
    }
}

/// Executes the pipeline named in `config`, writes its artifacts and the
/// manifest, and returns the manifest.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let wall = Instant::now();
    let root = if config.command.writes_directory() {
        fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
        config.out.clone()
    } else {
        let parent = config.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        parent.to_path_buf()
    };
    let mut rec = Recorder {
        root,
        files: Vec::new(),
        timings: Vec::new(),
        warnings: Vec::new(),
    };
    let grid = TorusGrid::new(config.n).map_err(|e| Error::config("n", e.to_string()))?;
    let xi = rec.time("sample_noise", || noise_for(config, &grid))?;

    match config.command {
        Command::SampleNoise => rec.field(&config.out, &xi.field)?,
        Command::Spectrum => {
            let op = rec.time("build_operator", || operator_for(config, xi))?;
            let a = potential_for(&grid, config.potential.as_deref(), "builtin:const:0", "potential")?;
            let count = config.count.unwrap_or(6);
            let spectrum = rec.time("eigendecompose", || eigendecompose(&op, &a, count))?;
            rec.json(&config.out, &spectrum.summary())?;
        }
        Command::KatoCheck => {
            let op = rec.time("build_operator", || operator_for(config, xi))?;
            let a = potential_for(&grid, config.potential.as_deref(), "builtin:const:1", "potential")?;
            kato_check(config, &op, &a, &mut rec)?;
        }
        Command::DiagnoseHeat => {
            let op = rec.time("build_operator", || operator_for(config, xi))?;
            let times = config.times.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.5]);
            let report = rec.time("heat_kernel_diagnostics", || op.heat_kernel_diagnostics(&times))?;
            rec.json(&config.out, &report)?;
        }
        Command::SolveMp | Command::SolveFountain => {
            let op = rec.time("build_operator", || operator_for(config, xi))?;
            let a = potential_for(&grid, config.potential.as_deref(), "builtin:spike", "potential")?;
            let nl_spec = config.nonlinearity.as_deref().unwrap_or("pow3");
            let nl = Nonlinearity::builtin(nl_spec).map_err(|e| Error::config("nonlinearity", e.to_string()))?;
            let solutions = if config.command == Command::SolveFountain { config.count.unwrap_or(3) } else { 1 };
            let after_m = if config.command == Command::SolveFountain { 4 * solutions + 4 } else { 2 };
            let spectrum = rec.time("eigendecompose", || spectrum_for_search(&op, &a, after_m))?;
            let problem = Problem::new(op, a, nl)?;
            rec.json(&config.out.join("spectrum.json"), &spectrum.summary())?;
            let tol = config.tol.unwrap_or(1e-6);
            let found = if config.command == Command::SolveMp {
                let params = MountainPassParams {
                    tol,
                    max_iter: config.max_iter.unwrap_or(5000),
                    seed: config.seed,
                    ..MountainPassParams::default()
                };
                vec![rec.time("mountain_pass_solve", || mountain_pass_solve(&problem, &spectrum, &params))?]
            } else {
                let params = FountainParams {
                    tol,
                    ..FountainParams::default()
                };
                let outcome = rec.time("fountain_solve", || fountain_solve(&problem, &spectrum, solutions, &params))?;
                if !outcome.complete {
                    rec.warnings.push(format!(
                        "found {} of {solutions} requested solutions",
                        outcome.solutions.len()
                    ));
                }
                rec.json(
                    &config.out.join("fountain.json"),
                    &FountainReport {
                        requested: solutions,
                        found: outcome.solutions.len(),
                        complete: outcome.complete,
                        levels: outcome.solutions.iter().map(|s| s.phi).collect(),
                        history: outcome.history.clone(),
                    },
                )?;
                outcome.solutions
            };
            for (i, sol) in found.iter().enumerate() {
                write_solution(&mut rec, &config.out, i, sol)?;
            }
        }
        Command::SolveChoquard => {
            let op = rec.time("build_operator", || operator_for(config, xi))?;
            let a = potential_for(&grid, config.potential.as_deref(), "builtin:const:1", "potential")?;
            let spec = config.choquard.clone().unwrap_or_default();
            let w = potential_for(&grid, Some(&spec.w), "builtin:negconst:1", "choquard.w")?;
            let init = init_field(&grid, &spec.init)?;
            let prob = ChoquardProblem::new(op, a, w.field().clone(), spec.p, spec.q)
                .map_err(|e| Error::config("choquard", e.to_string()))?;
            let params = SelfdualParams {
                tol: config.tol.unwrap_or(1e-6),
                max_iter: config.max_iter.unwrap_or(5000),
            };
            let sol = rec.time("selfdual_minimize", || selfdual_minimize(&prob, &init, &params))?;
            let value = selfdual_value(&prob, &sol.u)?;
            let bound = lambda_bound_check(&prob, &sol.u, &sol.u)?;
            rec.field(&config.out.join("solution_0.f64"), &sol.u)?;
            rec.json(
                &config.out.join("result_0.json"),
                &ChoquardReport {
                    selfdual_value: value,
                    residual_l2: sol.residual_l2,
                    trivial: is_trivial(&sol.u),
                    u_norm_l2: sol.u.l2(),
                    iterations: sol.iterations,
                    method: sol.method.clone(),
                    p: spec.p,
                    q: spec.q,
                    bound,
                },
            )?;
            rec.series(
                &config.out.join("trace_0.csv"),
                &PlotSeries::from_trace(&sol.trace, "selfdual_value"),
            )?;
        }
    }

    let manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        rng: RNG_ALGORITHM.into(),
        started_at,
        wall_seconds: wall.elapsed().as_secs_f64(),
        timings: rec.timings,
        files: rec.files,
        warnings: rec.warnings,
    };
    let path = manifest_path(config);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[derive(Serialize)]
struct SolutionReport<'a> {
    #[serde(flatten)]
    summary: ResultSummary,
    ps: &'a PsReport,
}

#[derive(Serialize)]
struct FountainReport {
    requested: usize,
    found: usize,
    complete: bool,
    levels: Vec<f64>,
    history: Vec<String>,
}

#[derive(Serialize)]
struct ChoquardReport {
    selfdual_value: f64,
    residual_l2: f64,
    trivial: bool,
    u_norm_l2: f64,
    iterations: usize,
    method: String,
    p: f64,
    q: f64,
    bound: BoundReport,
}

fn write_solution(rec: &mut Recorder, dir: &Path, i: usize, sol: &SolveResult) -> Result<()> {
    rec.field(&dir.join(format!("solution_{i}.f64")), &sol.u)?;
    let ps = ps_diagnostics(&sol.trace);
    rec.json(
        &dir.join(format!("result_{i}.json")),
        &SolutionReport {
            summary: sol.summary(),
            ps: &ps,
        },
    )?;
    rec.series(&dir.join(format!("trace_{i}.csv")), &PlotSeries::from_trace(&sol.trace, "phi"))
}

#[derive(Serialize)]
struct KatoReport {
    potential: String,
    declared_p: f64,
    log_modulus: Vec<(f64, f64)>,
    heat_modulus: Vec<(f64, f64)>,
    resolvent_sup_norm: Vec<(f64, f64)>,
    form_bound: Vec<(f64, f64)>,
    log_decreasing: bool,
    heat_decreasing: bool,
    resolvent_decreasing: bool,
}

/// Whether the values decrease as the sweep parameter moves towards its
/// limit (`r`, `T` → 0; `λ` → ∞); ties within round-off count as decrease.
fn decreasing_towards_limit(pairs: &[(f64, f64)], towards_zero: bool) -> bool {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if towards_zero {
        sorted.reverse();
    }
    sorted.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12) + 1e-15)
}

fn kato_check(config: &RunConfig, op: &AndersonOperator, a: &Potential, rec: &mut Recorder) -> Result<()> {
    let sweep = config.sweep.clone().unwrap_or_default();
    let h = op.grid().h();
    let r = if sweep.r.is_empty() {
        [0.9, 0.7, 0.5, 0.35, 0.25].into_iter().filter(|&r| r > 2.0 * h).collect()
    } else {
        sweep.r.clone()
    };
    let t = if sweep.t.is_empty() { vec![1.0, 0.5, 0.25, 0.125, 0.0625] } else { sweep.t.clone() };
    let lambda = if sweep.lambda.is_empty() { vec![1.0, 10.0, 100.0, 1000.0] } else { sweep.lambda.clone() };
    let eta = if sweep.eta.is_empty() { vec![1.0, 0.5, 0.25] } else { sweep.eta.clone() };

    let log_modulus = rec.time("kato_modulus_log", || {
        r.iter().map(|&r| Ok((r, kato_modulus_log(a, r)?))).collect::<Result<Vec<_>>>()
    })?;
    let heat_modulus = rec.time("kato_modulus_heat", || {
        t.iter().map(|&t| Ok((t, kato_modulus_heat(op, a, t)?))).collect::<Result<Vec<_>>>()
    })?;
    let resolvent = rec.time("resolvent_sup_norm", || {
        lambda.iter().map(|&l| Ok((l, resolvent_sup_norm(op, a, l)?))).collect::<Result<Vec<_>>>()
    })?;
    let form_bound = rec.time("form_bound_constant", || {
        eta.iter().map(|&e| Ok((e, form_bound_constant(op, a, e)?))).collect::<Result<Vec<_>>>()
    })?;

    let report = KatoReport {
        potential: config.potential.clone().unwrap_or_else(|| "builtin:const:1".into()),
        declared_p: a.declared_p(),
        log_decreasing: decreasing_towards_limit(&log_modulus, true),
        heat_decreasing: decreasing_towards_limit(&heat_modulus, true),
        resolvent_decreasing: decreasing_towards_limit(&resolvent, false),
        log_modulus,
        heat_modulus,
        resolvent_sup_norm: resolvent,
        form_bound,
    };
    rec.json(&config.out, &report)?;
    let stem = config.out.with_extension("");
    let stem = stem.to_string_lossy();
    let pairs = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| vec![x, y]).collect::<Vec<_>>();
    for (suffix, columns, values) in [
        ("r", ["r", "modulus"], &report.log_modulus),
        ("T", ["T", "modulus"], &report.heat_modulus),
        ("lambda", ["lambda", "sup_norm"], &report.resolvent_sup_norm),
        ("eta", ["eta", "m_eta"], &report.form_bound),
    ] {
        let series = PlotSeries::new(&columns, pairs(values))?;
        rec.series(Path::new(&format!("{stem}_{suffix}.csv")), &series)?;
    }
    Ok(())
}

fn noise_for(config: &RunConfig, grid: &TorusGrid) -> Result<NoiseSample> {
    let xi = sample_white_noise(grid, config.seed);
    match config.cutoff {
        Some(k) => mollify(&xi, k).map_err(|e| Error::config("cutoff", e.to_string())),
        None => Ok(xi),
    }
}

fn operator_for(config: &RunConfig, xi: NoiseSample) -> Result<AndersonOperator> {
    if config.renormalize {
        AndersonOperator::renormalized(xi)
    } else {
        AndersonOperator::new(xi)
    }
}

/// `builtin:<spec>` (or a bare builtin spec), else a field file read as a
/// bounded potential.
fn potential_for(grid: &TorusGrid, spec: Option<&str>, default: &str, key: &str) -> Result<Potential> {
    let spec = spec.unwrap_or(default);
    if spec.starts_with("builtin:") || !Path::new(spec).exists() {
        return Potential::builtin(grid, spec).map_err(|e| Error::config(key, e.to_string()));
    }
    let field = read_field(Path::new(spec))?;
    if field.grid() != grid {
        return Err(Error::config(key, format!("field in {spec} is not on the {0}×{0} grid", grid.n())));
    }
    Potential::new(field, f64::INFINITY).map_err(|e| Error::config(key, e.to_string()))
}

fn init_field(grid: &TorusGrid, spec: &str) -> Result<GridField> {
    let bad = |msg: String| Error::config("choquard.init", msg);
    if spec == "zero" {
        return Ok(GridField::zeros(grid));
    }
    if let Some(v) = spec.strip_prefix("const:") {
        let v: f64 = v.parse().map_err(|_| bad(format!("bad constant in `{spec}`")))?;
        return Ok(GridField::constant(grid, v));
    }
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed: u64 = seed.parse().map_err(|_| bad(format!("bad seed in `{spec}`")))?;
        return Ok(Potential::smooth_random(grid, seed, 1.0).field().clone());
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(bad(format!("`{spec}` is neither zero, const:<v>, random:<seed> nor a file")));
    }
    let field = read_field(path)?;
    if field.grid() != grid {
        return Err(bad(format!("field in {spec} is not on the {0}×{0} grid", grid.n())));
    }
    Ok(field)
}

/// Enough eigenpairs to hold `m` plus `after_m` more.
fn spectrum_for_search(op: &AndersonOperator, a: &Potential, after_m: usize) -> Result<Spectrum> {
    let dim = op.grid().len();
    let mut count = (after_m + 4).min(dim);
    loop {
        match eigendecompose(op, a, count) {
            Ok(s) if (s.m + 1) as usize + after_m <= s.eigenfields.len() || count == dim => return Ok(s),
            Ok(s) => count = ((s.m + 1) as usize + after_m).min(dim),
            Err(Error::Domain(_)) if count < dim => count = (2 * count).min(dim),
            Err(e) => return Err(e),
        }
    }
}

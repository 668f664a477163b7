//! `anderson`: runs the toolkit pipelines and writes their artifacts.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anderson_core::{manifest_path, run, Command, Error, RunConfig, Sweep, OUTPUT_ROOT_ENV};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "anderson", version, about = "Anderson operator on the 2-torus: spectra, Kato checks, critical points")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Sample white noise on the grid and write it as a field file.
    SampleNoise {
        #[command(flatten)]
        common: Common,
    },
    /// Lowest eigenpairs of -H_c + a, the index m and the gap delta.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        potential: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Kato moduli, resolvent norms and form-bound constants over sweeps.
    KatoCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        potential: Option<String>,
        /// e.g. `r=0.9,0.5,T=1,0.5,lambda=1,10,eta=0.5`
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Gaussian heat-kernel fit, decay rate and Green-function comparison.
    DiagnoseHeat {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Mountain-pass / linking search for one nontrivial solution.
    SolveMp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: Solver,
    },
    /// Deflated multi-solution search.
    SolveFountain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: Solver,
    },
    /// Self-dual minimization for the Choquard-Pekar equation.
    SolveChoquard {
        #[command(flatten)]
        common: Common,
        /// Potential a.
        #[arg(long)]
        a: Option<String>,
        /// Interaction kernel w.
        #[arg(long)]
        w: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        /// zero | const:<v> | random:<seed> | field file
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Run a complete JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only wavenumbers with |k|_inf <= cutoff.
    #[arg(long)]
    cutoff: Option<usize>,
    /// Subtract (1/2pi) ln n from the noise.
    #[arg(long)]
    renormalize: bool,
    /// Output path; defaults to a name under $ANDERSON_OUTPUT_ROOT (or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON configuration whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Solver {
    #[arg(long)]
    potential: Option<String>,
    /// pow3 | pow:<ell>
    #[arg(long)]
    nonlinearity: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
}

fn put<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.into(), v.into());
    }
}

fn common_fields(command: Command, common: &Common) -> Map<String, Value> {
    let mut map = Map::new();
    map.insert("command".into(), json!(command));
    put(&mut map, "n", common.n);
    put(&mut map, "seed", common.seed);
    put(&mut map, "cutoff", common.cutoff);
    if common.renormalize {
        map.insert("renormalize".into(), json!(true));
    }
    put(&mut map, "out", common.out.as_ref().map(|p| p.display().to_string()));
    map
}

fn solver_fields(map: &mut Map<String, Value>, s: &Solver) {
    put(map, "potential", s.potential.clone());
    put(map, "nonlinearity", s.nonlinearity.clone());
    put(map, "tol", s.tol);
    put(map, "max_iter", s.max_iter);
    put(map, "count", s.count);
}

fn read_object(path: &PathBuf) -> Result<Map<String, Value>, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::config("<root>", "configuration must be a JSON object")),
        Err(e) => Err(Error::config("<root>", e.to_string())),
    }
}

/// Flags first, then the keys of `--config`, then the default output path.
fn build_config(sub: Sub) -> Result<RunConfig, Error> {
    let (command, common, mut map) = match sub {
        Sub::Run { config } => {
            let map = read_object(&config)?;
            return finish(map, None);
        }
        Sub::SampleNoise { common } => (Command::SampleNoise, common, Map::new()),
        Sub::Spectrum { common, potential, count } => {
            let mut m = Map::new();
            put(&mut m, "potential", potential);
            put(&mut m, "count", count);
            (Command::Spectrum, common, m)
        }
        Sub::KatoCheck { common, potential, sweep } => {
            let mut m = Map::new();
            put(&mut m, "potential", potential);
            if let Some(s) = sweep {
                m.insert("sweep".into(), json!(Sweep::parse(&s)?));
            }
            (Command::KatoCheck, common, m)
        }
        Sub::DiagnoseHeat { common, times } => {
            let mut m = Map::new();
            put(&mut m, "times", times);
            (Command::DiagnoseHeat, common, m)
        }
        Sub::SolveMp { common, solver } => {
            let mut m = Map::new();
            solver_fields(&mut m, &solver);
            (Command::SolveMp, common, m)
        }
        Sub::SolveFountain { common, solver } => {
            let mut m = Map::new();
            solver_fields(&mut m, &solver);
            (Command::SolveFountain, common, m)
        }
        Sub::SolveChoquard { common, a, w, p, q, init, tol, max_iter } => {
            let mut m = Map::new();
            put(&mut m, "potential", a);
            put(&mut m, "tol", tol);
            put(&mut m, "max_iter", max_iter);
            let mut ch = Map::new();
            put(&mut ch, "w", w);
            put(&mut ch, "p", p);
            put(&mut ch, "q", q);
            put(&mut ch, "init", init);
            m.insert("choquard".into(), Value::Object(ch));
            (Command::SolveChoquard, common, m)
        }
    };
    map.extend(common_fields(command, &common));
    if let Some(path) = &common.config {
        for (k, v) in read_object(path)? {
            if k == "choquard" {
                // Merge one level down so a file may set only some fields.
                if let (Some(Value::Object(base)), Value::Object(over)) = (map.get_mut("choquard"), &v) {
                    base.extend(over.clone());
                    continue;
                }
            }
            map.insert(k, v);
        }
    }
    finish(map, Some(command))
}

fn finish(mut map: Map<String, Value>, expected: Option<Command>) -> Result<RunConfig, Error> {
    if !map.contains_key("out") {
        let command: Command = serde_json::from_value(map.get("command").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::config("command", e.to_string()))?;
        let n = map.get("n").and_then(Value::as_u64).unwrap_or(0) as usize;
        let seed = map.get("seed").and_then(Value::as_u64).unwrap_or(0);
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        map.insert("out".into(), json!(command.default_output(&root, n, seed)));
    }
    let config = RunConfig::from_value(Value::Object(map))?;
    if let Some(cmd) = expected {
        if config.command != cmd {
            return Err(Error::config(
                "command",
                format!("configuration is for `{}`, not `{}`", config.command.name(), cmd.name()),
            ));
        }
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(cli.command).and_then(|config| {
        let manifest = run(&config)?;
        Ok((config, manifest))
    });
    match result {
        Ok((config, manifest)) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", manifest_path(&config).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

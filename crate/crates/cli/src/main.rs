//! `gfrag`: certificate pipeline and finite-chain oracle from the command line.
//!
//! Exit codes: 0 success or expected negative, 1 gate failure, 2 config error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gfrag_core::pipeline::{
    dual_elements, evolution_grid, initial_bump, CertificateMode, GrowthSpec, KernelName, RateSpec,
};
use gfrag_core::{
    finite_chain_oracle, oracle_suite, run_until, Error, EvolutionConfig, Evolver, FlowMap, OracleParams, PipelineRun,
    RunConfig, Stage,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gfrag", version, about = "Growth-fragmentation spectral-gap certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized checks; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model hypotheses and the weight constraint.
    CheckHypotheses,
    /// Perron eigenelements: closed-form or dual λ, φ and the direct profile N.
    Eigen {
        /// Stopping distance of the direct solve.
        #[arg(long)]
        tol: Option<f64>,
        /// Writes N as a grid CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evolve the rescaled density from the first configured bump.
    Evolve {
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 50)]
        snapshots: usize,
        /// Writes (t, x0, X_t(x0)) for the grid nodes at each snapshot.
        #[arg(long)]
        dump_flow: Option<PathBuf>,
    },
    /// Foster-Lyapunov drift constants and their check on evolved states.
    Drift {
        #[arg(long = "k", allow_negative_numbers = true)]
        k: Option<f64>,
        #[arg(long = "K")]
        big_k: Option<f64>,
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Small-set minorisation constants.
    Minorise {
        #[arg(long)]
        t0: Option<f64>,
        /// Small-set level, or `auto` for 4 K_d / (1 − γ). Only the simulated chain uses a value.
        #[arg(long = "R", default_value = "auto")]
        r: String,
    },
    /// Harris constants from drift and minorisation.
    Certify {
        #[arg(long, value_enum, default_value_t = Chain::Config)]
        pipeline: Chain,
        /// Fragmentation exponent of the self-similar model g = x, B = x^b.
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Empirical decay rate against the certificate.
    Rate {
        #[arg(long = "T")]
        t_end: Option<f64>,
        /// Directory for the (t, d) curves.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Every stage in order, with one summary.
    Pipeline {
        /// Directory for the eigen profile and rate curves.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Randomized finite-chain check of the Doeblin and Harris bounds.
    Oracle {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Random measure pairs per chain.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, value_enum, default_value_t = OracleChain::Random)]
        chain: OracleChain,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Chain {
    /// Closed-form constants for g = x, B = x^b, uniform kernel.
    Selfsim,
    /// Whatever the config selects.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleChain {
    Random,
    /// The identity chain, which admits no Doeblin minorisation.
    Identity,
}

/// A failed command with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Constraint(_) | Error::InvalidCoefficients(_) | Error::InvalidGrid(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 1, message: format!("{}: {e}", path.display()) }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GF_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::CheckHypotheses => staged(cli, load(cli)?, Stage::Hypotheses, None),
        Command::Eigen { tol, csv } => {
            let mut cfg = load(cli)?;
            if let Some(tol) = tol {
                cfg.evolution.eigen_tol = *tol;
            }
            staged(cli, cfg, Stage::Eigen, csv.as_deref())
        }
        Command::Evolve { t_end, snapshots, dump_flow } => evolve(cli, *t_end, *snapshots, dump_flow.as_deref()),
        Command::Drift { k, big_k, t0 } => {
            let mut cfg = load(cli)?;
            cfg.certificate.k = k.or(cfg.certificate.k);
            cfg.certificate.big_k = big_k.or(cfg.certificate.big_k);
            cfg.certificate.t0 = t0.unwrap_or(cfg.certificate.t0);
            staged(cli, cfg, Stage::Drift, None)
        }
        Command::Minorise { t0, r } => {
            let mut cfg = load(cli)?;
            cfg.certificate.t0 = t0.unwrap_or(cfg.certificate.t0);
            if r != "auto" {
                let v: f64 = r
                    .parse()
                    .map_err(|_| Failure { code: 2, message: format!("--R must be a number or auto, got {r}") })?;
                cfg.certificate.r = Some(v);
            }
            staged(cli, cfg, Stage::Minorise, None)
        }
        Command::Certify { pipeline, b, t0 } => {
            let mut cfg = match (pipeline, b) {
                (Chain::Selfsim, Some(b)) => selfsim_config(*b)?,
                (Chain::Config, Some(_)) => {
                    return Err(Failure { code: 2, message: "--b needs --pipeline selfsim".into() });
                }
                _ => load(cli)?,
            };
            if let Chain::Selfsim = pipeline {
                cfg.certificate.mode = CertificateMode::ClosedForm;
            }
            cfg.certificate.t0 = t0.unwrap_or(cfg.certificate.t0);
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            staged(cli, cfg, Stage::Certify, None)
        }
        Command::Rate { t_end, curves } => {
            let mut cfg = load(cli)?;
            cfg.rate.t_end = t_end.unwrap_or(cfg.rate.t_end);
            staged(cli, cfg, Stage::Rate, curves.as_deref())
        }
        Command::Pipeline { curves } => staged(cli, load(cli)?, Stage::Rate, curves.as_deref()),
        Command::Oracle { n, trials, pairs, chain } => oracle(cli, *n, *trials, *pairs, *chain),
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli.config.as_ref().ok_or(Failure { code: 2, message: "--config is required".into() })?;
    let mut cfg = RunConfig::from_path(path).map_err(|e| Failure { code: 2, message: e.to_string() })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    log::info!("loaded {}", path.display());
    Ok(cfg)
}

fn selfsim_config(b: f64) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::from_json(
        &json!({
            "g": GrowthSpec::Power { a: 1.0, g0: 1.0 },
            "B": RateSpec::Power { b, b0: 1.0 },
            "kernel": KernelName::Uniform,
        })
        .to_string(),
    )?;
    Ok(cfg)
}

/// Runs the pipeline to `last` and writes its summary; curves go to `csv`
/// (a file for `eigen`, a directory otherwise) or the configured directory.
fn staged(cli: &Cli, cfg: RunConfig, last: Stage, csv: Option<&Path>) -> Outcome {
    let run = run_until(&cfg, last)?;
    let s = &run.summary;
    for e in &s.errors {
        log::error!("{} stage: {}", e.stage, e.message);
    }
    for g in s.gates.iter().filter(|g| !g.passed) {
        log::warn!("gate failed: {}", g.name);
    }
    log::info!("verdict: {}", s.verdict);
    let out = cli.out.clone().or_else(|| cfg.output.summary.as_ref().map(PathBuf::from));
    write_json(out.as_deref(), &serde_json::to_value(s).expect("summary serializes"))?;
    match (last, csv) {
        (Stage::Eigen, Some(path)) => write_profile(&run, path)?,
        (Stage::Eigen, None) => {}
        (_, dir) => {
            if let Some(dir) = dir.map(PathBuf::from).or_else(|| cfg.output.curves.as_ref().map(PathBuf::from)) {
                write_curves(&run, &dir)?;
            }
        }
    }
    Ok(s.exit_code as u8)
}

fn write_profile(run: &PipelineRun, path: &Path) -> Result<(), Failure> {
    if let Some(data) = &run.eigen {
        let w = create(path)?;
        data.triple.n.write_csv(w)?;
    }
    Ok(())
}

fn write_curves(run: &PipelineRun, dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    write_profile(run, &dir.join("eigen_profile.csv"))?;
    for (i, m) in run.rate_curves.iter().enumerate() {
        m.write_csv(create(&dir.join(format!("rate_{i}.csv")))?)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_json(path: Option<&Path>, v: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("json value serializes") + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn evolve(cli: &Cli, t_end: Option<f64>, snapshots: usize, dump_flow: Option<&Path>) -> Outcome {
    let cfg = load(cli)?;
    let model = cfg.model()?;
    let t_end = t_end.unwrap_or(cfg.evolution.t_end);
    if t_end.is_nan() || t_end <= 0.0 || snapshots == 0 {
        return Err(Failure { code: 2, message: "--T and --snapshots must be positive".into() });
    }
    let (lambda, phi, _) = dual_elements(&model)?;
    let (grid, dt) = evolution_grid(&cfg, &model, lambda, &phi)?;
    let ev = Evolver::new(
        &grid,
        &model.coeffs,
        model.kernel,
        EvolutionConfig::scaled(dt, lambda).with_splitting(cfg.evolution.splitting),
    )?;
    let steps = ev.steps_for(t_end);
    let stride = match cfg.evolution.sample_dt {
        Some(s) => (s / dt).round().max(1.0) as usize,
        None => steps.div_ceil(snapshots).max(1),
    };
    let n0 = initial_bump(&grid, cfg.rate.bumps[0], cfg.rate.width);
    log::info!("{} cells, dt {dt:.4e}, {steps} steps, lambda {lambda}", grid.len());
    let traj = ev.evolve(&n0, t_end, stride)?;

    let mut w: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout())),
    };
    let io = |e: std::io::Error| Failure { code: 1, message: e.to_string() };
    writeln!(w, "t,x_center,mass,density").map_err(io)?;
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (i, (&x, &m)) in grid.nodes().iter().zip(&snap.mass).enumerate() {
            writeln!(w, "{t:.17e},{x:.17e},{m:.17e},{:.17e}", m / grid.width(i)).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    if let Some(path) = dump_flow {
        let flow = FlowMap::new(&model.coeffs)?;
        let mut w = create(path)?;
        writeln!(w, "t,x0,X_t").map_err(io)?;
        for &t in &traj.times {
            for &x0 in grid.nodes() {
                // Sizes that blow up or leave the domain are skipped.
                if let Ok(x) = flow.flow(t, x0) {
                    writeln!(w, "{t:.17e},{x0:.17e},{x:.17e}").map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)?;
    }
    let positive = traj.snapshots.iter().all(|s| s.is_nonnegative());
    if !positive {
        log::error!("negative mass in the trajectory");
    }
    Ok(if positive { 0 } else { 1 })
}

/// Wraps every number in `v` as `{value, source}`.
fn tag_numbers(v: Value, source: &str) -> Value {
    match v {
        Value::Number(_) => json!({"value": v, "source": source}),
        Value::Array(a) => Value::Array(a.into_iter().map(|x| tag_numbers(x, source)).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, x)| (k, tag_numbers(x, source))).collect()),
        other => other,
    }
}

fn oracle(cli: &Cli, n: usize, trials: usize, pairs: usize, chain: OracleChain) -> Outcome {
    let seed = cli.seed.unwrap_or(0);
    let params = json!({"n": n, "trials": trials, "pairs": pairs, "seed": seed});
    let (report, violations, verdict) = match chain {
        OracleChain::Random => {
            let suite = oracle_suite(n, trials, pairs, seed)?;
            let violations = suite.doeblin_violations + suite.harris_violations;
            let v = serde_json::to_value(&suite).expect("suite serializes");
            let verdict = if violations == 0 { "no bound violations" } else { "bound violations" };
            (v, violations, verdict.to_string())
        }
        OracleChain::Identity => {
            if n == 0 || n > 12 {
                return Err(Failure { code: 2, message: format!("need 1 <= n <= 12 states, got {n}") });
            }
            let p: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            let r = finite_chain_oracle(&p, None, OracleParams { pairs: trials, max_power: 10, seed })?;
            let verdict = if r.doeblin_failure {
                "doeblin failure: no common minorising mass (alpha* = 0)".to_string()
            } else {
                format!("alpha* = {}", r.alpha_star)
            };
            (serde_json::to_value(&r).expect("report serializes"), r.violations(), verdict)
        }
    };
    let mut report = report;
    if let Value::Object(o) = &mut report {
        // Inputs are listed under params.
        for k in ["n", "trials", "seed"] {
            o.remove(k);
        }
    }
    let doc = json!({
        "params": params,
        "report": tag_numbers(report, "simulated"),
        "verdict": verdict,
    });
    write_json(cli.out.as_deref(), &doc)?;
    Ok(if violations == 0 { 0 } else { 1 })
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use secalloc_core::ensemble_file;
use secalloc_core::experiment::{run_on_ensemble, sidecar_path, write_outputs};
use secalloc_core::{
    check_feasibility, secrecy_rate_upper_bound, solve_fsa, solve_optimal, solve_suboptimal,
    BoundMethod, BoundOptions, ChannelEnsemble, DualState, EvaluationReport, ExperimentSpec,
    FsaScheme, ProblemConfig, RunConfig, SolveResult, SuboptimalState,
};

/// `println!` that stops quietly when stdout is closed (e.g. piped to `head`).
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "secalloc",
    version,
    about = "Secure OFDMA power and subcarrier allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Input {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Channel ensemble written by `generate`; drawn from the config when absent.
    #[arg(long, short)]
    ensemble: Option<PathBuf>,
    /// Also write per-realization decisions as JSON here.
    #[arg(long)]
    decisions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Fsa1,
    Fsa2,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Quadrature,
    MonteCarlo,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a channel ensemble and save it.
    Generate {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Overrides `realizations` from the config.
        #[arg(long)]
        realizations: Option<usize>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dual-decomposition allocation, power constraint per `mode`.
    SolveOptimal(Input),
    /// Two-phase threshold allocation (average power).
    SolveSuboptimal(Input),
    /// Fixed-subcarrier-assignment baseline.
    Baseline {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        scheme: Scheme,
    },
    /// Infinite-power ceiling on the average secrecy rate.
    FeasibilityBound {
        /// Takes N, K, rho and the targets from here.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, short = 'n', default_value_t = 64)]
        subcarriers: usize,
        #[arg(long, short = 'k', default_value_t = 8)]
        users: usize,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, value_enum, default_value_t = Method::Quadrature)]
        method: Method,
        #[arg(long, default_value_t = 10_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter sweep to CSV plus a JSON sidecar.
    Experiment {
        #[arg(long, short)]
        spec: PathBuf,
        /// Overrides `output` from the spec.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Use this ensemble instead of drawing one.
        #[arg(long, short)]
        ensemble: Option<PathBuf>,
    },
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_input(input: &Input) -> Result<(RunConfig, ProblemConfig, ChannelEnsemble)> {
    let run: RunConfig = read_toml(&input.config)?;
    let problem = run.problem()?;
    let ens = match &input.ensemble {
        Some(p) => ensemble_file::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => run.ensemble()?,
    };
    ens.check_against(&problem)?;
    Ok((run, problem, ens))
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    solver: &'a str,
    converged: bool,
    infeasible: bool,
    iterations: usize,
    diagnostics: Option<&'a str>,
    report: &'a EvaluationReport,
    duals: &'a DualState,
    dual_objective: Option<f64>,
    thresholds: Option<&'a SuboptimalState>,
    ensemble_hash: String,
    seconds: f64,
}

fn emit(
    solver: &str,
    res: &SolveResult,
    ens: &ChannelEnsemble,
    started: Instant,
    decisions: Option<&Path>,
) -> Result<()> {
    let summary = SolveSummary {
        solver,
        converged: res.converged,
        infeasible: res.infeasible,
        iterations: res.iterations,
        diagnostics: res.diagnostics.as_deref(),
        report: &res.report,
        duals: &res.duals,
        dual_objective: res.dual_objective,
        thresholds: res.thresholds.as_ref(),
        ensemble_hash: ens.fingerprint(),
        seconds: started.elapsed().as_secs_f64(),
    };
    outln!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(path) = decisions {
        let owners: Vec<_> = res
            .decisions
            .iter()
            .map(|d| serde_json::json!({ "owner": d.owner, "power": d.power }))
            .collect();
        std::fs::write(path, serde_json::to_vec(&owners)?)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            config,
            out,
            realizations,
            seed,
        } => {
            let mut run: RunConfig = read_toml(&config)?;
            if let Some(m) = realizations {
                run.realizations = m;
            }
            if let Some(s) = seed {
                run.seed = s;
            }
            let ens = run.ensemble()?;
            ensemble_file::save(&ens, &out)?;
            outln!(
                "wrote {} realizations ({}x{}) to {} sha256={}",
                ens.len(),
                run.k,
                run.n,
                out.display(),
                ens.fingerprint()
            );
        }
        Command::SolveOptimal(input) => {
            let (run, problem, ens) = load_input(&input)?;
            let t = Instant::now();
            let res = solve_optimal(&ens, &problem, &run.options())?;
            emit("optimal", &res, &ens, t, input.decisions.as_deref())?;
        }
        Command::SolveSuboptimal(input) => {
            let (run, problem, ens) = load_input(&input)?;
            let t = Instant::now();
            let res = solve_suboptimal(&ens, &problem, run.epsilon)?;
            emit("suboptimal", &res, &ens, t, input.decisions.as_deref())?;
        }
        Command::Baseline { input, scheme } => {
            let (run, problem, ens) = load_input(&input)?;
            let scheme = match scheme {
                Scheme::Fsa1 => FsaScheme::Fsa1,
                Scheme::Fsa2 => FsaScheme::Fsa2,
            };
            let t = Instant::now();
            let res = solve_fsa(&ens, &problem, scheme, run.epsilon)?;
            emit(
                &scheme.to_string(),
                &res,
                &ens,
                t,
                input.decisions.as_deref(),
            )?;
        }
        Command::FeasibilityBound {
            config,
            subcarriers,
            users,
            rho,
            method,
            samples,
            seed,
        } => {
            let t = Instant::now();
            if let Some(path) = config {
                let run: RunConfig = read_toml(&path)?;
                let check = check_feasibility(&run.problem()?)?;
                outln!(
                    "bound {:.6} nat/OFDM symbol (N={}, K={}, rho={})",
                    check.bound,
                    run.n,
                    run.k,
                    run.rho
                );
                for v in &check.verdicts {
                    let verdict = match (v.feasible_hint, v.near_boundary) {
                        (false, _) => "infeasible",
                        (true, true) => "feasible (near boundary)",
                        (true, false) => "feasible",
                    };
                    outln!("SU {} target {:.4}: {verdict}", v.user, v.target);
                }
                outln!("hint only: the bound assumes unlimited power");
            } else {
                let opts = BoundOptions {
                    method: match method {
                        Method::Quadrature => BoundMethod::Quadrature,
                        Method::MonteCarlo => BoundMethod::MonteCarlo { samples, seed },
                    },
                    ..Default::default()
                };
                let b = secrecy_rate_upper_bound(subcarriers, users, rho, &opts)?;
                outln!("bound {b:.6} nat/OFDM symbol (N={subcarriers}, K={users}, rho={rho})");
            }
            eprintln!("elapsed {:.3}s", t.elapsed().as_secs_f64());
        }
        Command::Experiment {
            spec,
            out,
            ensemble,
        } => {
            let spec: ExperimentSpec = read_toml(&spec)?;
            let Some(csv) = out.or_else(|| spec.output.clone()) else {
                bail!("no output path: pass --out or set `output` in the spec");
            };
            spec.validate()?;
            let base = spec.config.problem()?;
            let ens = match ensemble {
                Some(p) => ensemble_file::load(&p)?,
                None => spec.config.ensemble()?,
            };
            let table = run_on_ensemble(&spec, &base, &ens)?;
            write_outputs(&spec, &table, &csv)?;
            outln!(
                "wrote {} rows to {} and {}",
                table.rows.len(),
                csv.display(),
                sidecar_path(&csv).display()
            );
        }
    }
    Ok(())
}

//! Run configuration, parameter sweeps and result files.
//!
//! An experiment draws one ensemble, then runs every solver at every sweep
//! point on it, so rows at the same point are paired comparisons. Results
//! go to a CSV with the columns in [`COLUMNS`] and a JSON sidecar next to it
//! (same stem, `.json`) holding the configuration, seed, solver options,
//! ensemble fingerprint and the SHA-256 of the CSV bytes. Nothing
//! time-dependent is written, so a rerun reproduces both files byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{solve_fsa, FsaScheme};
use crate::channel::{generate_ensemble, ChannelEnsemble};
use crate::config::{PowerMode, ProblemConfig};
use crate::error::{invalid, Error, Result};
use crate::optimal::solve_optimal;
use crate::solution::{SolveResult, SolverOptions};
use crate::suboptimal::solve_suboptimal;

/// A number or a list, for per-user fields that are usually uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, len: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; len]),
            ScalarOrList::List(v) if v.len() == len => Ok(v.clone()),
            ScalarOrList::List(v) => {
                invalid(format!("{what} has {} entries, expected {len}", v.len()))
            }
        }
    }
}

fn default_rho() -> f64 {
    1.0
}
fn default_realizations() -> usize {
    2000
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_targets() -> ScalarOrList {
    ScalarOrList::Scalar(0.0)
}
fn default_weights() -> ScalarOrList {
    ScalarOrList::Scalar(1.0)
}

/// Everything a single solve needs, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "K1")]
    pub k1: usize,
    /// Secrecy targets, nat per OFDM symbol.
    #[serde(rename = "C", default = "default_targets")]
    pub c: ScalarOrList,
    /// NU weights.
    #[serde(default = "default_weights")]
    pub omega: ScalarOrList,
    /// Total transmit SNR, `10 log10 P` with unit noise.
    pub snr_db: f64,
    #[serde(default)]
    pub mode: PowerMode,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl RunConfig {
    pub fn problem(&self) -> Result<ProblemConfig> {
        let mut cfg = ProblemConfig::uniform(self.n, self.k, self.k1, 0.0, self.snr_db)?;
        cfg.secrecy_targets = self.c.expand(self.k1, "C")?;
        cfg.weights = self.omega.expand(self.k.saturating_sub(self.k1), "omega")?;
        cfg.mode = self.mode;
        cfg.rho = self.rho;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Solver options with the top-level `epsilon` applied.
    pub fn options(&self) -> SolverOptions {
        self.solver.clone().with_epsilon(self.epsilon)
    }

    pub fn ensemble(&self) -> Result<ChannelEnsemble> {
        generate_ensemble(&self.problem()?, self.realizations, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Dual-decomposition optimum, average power constraint.
    Optimal,
    /// Dual-decomposition optimum, per-realization power constraint.
    OptimalPeak,
    Suboptimal,
    Fsa1,
    Fsa2,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Optimal => "optimal",
            SolverKind::OptimalPeak => "optimal_peak",
            SolverKind::Suboptimal => "suboptimal",
            SolverKind::Fsa1 => "fsa1",
            SolverKind::Fsa2 => "fsa2",
        }
    }
}

/// Runs one solver; the two optimal kinds override the config's power mode.
pub fn run_solver(
    kind: SolverKind,
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    match kind {
        SolverKind::Optimal => {
            solve_optimal(ens, &config.clone().with_mode(PowerMode::Average), opts)
        }
        SolverKind::OptimalPeak => {
            solve_optimal(ens, &config.clone().with_mode(PowerMode::Peak), opts)
        }
        SolverKind::Suboptimal => solve_suboptimal(ens, config, opts.epsilon),
        SolverKind::Fsa1 => solve_fsa(ens, config, FsaScheme::Fsa1, opts.epsilon),
        SolverKind::Fsa2 => solve_fsa(ens, config, FsaScheme::Fsa2, opts.epsilon),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Common secrecy target of every SU.
    C,
    SnrDb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub config: RunConfig,
    pub sweep: Sweep,
    pub solvers: Vec<SolverKind>,
    /// CSV path; the sidecar goes next to it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return invalid("experiment needs at least one solver");
        }
        let v = &self.sweep.values;
        if v.is_empty() {
            return invalid("sweep grid is empty");
        }
        if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("sweep grid must be finite and strictly increasing");
        }
        self.config.problem()?;
        Ok(())
    }

    fn point_config(&self, base: &ProblemConfig, value: f64) -> ProblemConfig {
        match self.sweep.variable {
            SweepVariable::C => base.clone().with_targets(value),
            SweepVariable::SnrDb => base.clone().with_snr_db(value),
        }
    }
}

/// One (sweep point, solver) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub solver: SolverKind,
    pub snr_db: f64,
    pub c_mean: f64,
    pub result: Option<SolveResult>,
    pub error: Option<String>,
    pub ensemble_hash: String,
}

/// CSV column order.
pub const COLUMNS: [&str; 17] = [
    "sweep_variable",
    "sweep_value",
    "solver",
    "snr_db",
    "c_mean",
    "r_nu_total",
    "r_su_min",
    "r_su_mean",
    "r_su",
    "avg_power",
    "su_power",
    "su_subcarriers",
    "realizations_used",
    "converged",
    "infeasible",
    "iterations",
    "ensemble_hash",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub variable: SweepVariable,
    pub rows: Vec<ResultRow>,
}

impl ResultRow {
    fn feasible(&self) -> bool {
        self.result.as_ref().is_some_and(|r| !r.infeasible)
    }
}

impl ExperimentTable {
    /// Rows of one solver in sweep order.
    pub fn solver_rows(&self, kind: SolverKind) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.solver == kind)
    }

    /// Largest sweep value at which `kind` was feasible.
    pub fn last_feasible(&self, kind: SolverKind) -> Option<f64> {
        self.solver_rows(kind)
            .filter(|r| r.feasible())
            .map(|r| r.sweep_value)
            .last()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        let var = match self.variable {
            SweepVariable::C => "c",
            SweepVariable::SnrDb => "snr_db",
        };
        for row in &self.rows {
            let mut rec = vec![
                var.to_string(),
                row.sweep_value.to_string(),
                row.solver.name().to_string(),
                row.snr_db.to_string(),
                row.c_mean.to_string(),
            ];
            match &row.result {
                Some(r) => {
                    let rep = &r.report;
                    let su: Vec<String> = rep.r_su.iter().map(f64::to_string).collect();
                    rec.extend([
                        rep.r_nu_total.to_string(),
                        rep.min_su_rate().to_string(),
                        rep.mean_su_rate().to_string(),
                        su.join(";"),
                        rep.avg_power.to_string(),
                        rep.su_power.to_string(),
                        rep.su_subcarriers.to_string(),
                        rep.realizations_used.to_string(),
                        r.converged.to_string(),
                        r.infeasible.to_string(),
                        r.iterations.to_string(),
                    ]);
                }
                None => {
                    rec.extend(std::iter::repeat(String::new()).take(8));
                    rec.extend(["false".into(), "true".into(), "0".into()]);
                }
            }
            rec.push(row.ensemble_hash.clone());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Runs every solver at every sweep point on one shared ensemble. Solver
/// errors are kept in the row and the sweep continues.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable> {
    spec.validate()?;
    let base = spec.config.problem()?;
    let ens = spec.config.ensemble()?;
    run_on_ensemble(spec, &base, &ens)
}

/// As [`run_experiment`] with a caller-supplied ensemble.
pub fn run_on_ensemble(
    spec: &ExperimentSpec,
    base: &ProblemConfig,
    ens: &ChannelEnsemble,
) -> Result<ExperimentTable> {
    spec.validate()?;
    ens.check_against(base)?;
    let opts = spec.config.options();
    let hash = ens.fingerprint();
    let mut rows = Vec::new();
    for &value in &spec.sweep.values {
        let cfg = spec.point_config(base, value);
        let c_mean = cfg.secrecy_targets.iter().sum::<f64>() / cfg.k1.max(1) as f64;
        for &kind in &spec.solvers {
            let (result, error) = match run_solver(kind, ens, &cfg, &opts) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(ResultRow {
                sweep_value: value,
                solver: kind,
                snr_db: cfg.snr_db(),
                c_mean,
                result,
                error,
                ensemble_hash: hash.clone(),
            });
        }
    }
    Ok(ExperimentTable {
        variable: spec.sweep.variable,
        rows,
    })
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    config: &'a RunConfig,
    seed: u64,
    options: SolverOptions,
    sweep: &'a Sweep,
    solvers: &'a [SolverKind],
    columns: &'a [&'a str],
    ensemble_hash: &'a str,
    /// Per-row diagnostics and errors, in row order.
    notes: Vec<Option<String>>,
    csv_sha256: String,
}

/// Path of the sidecar for a CSV path.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes the CSV and its sidecar; returns the sidecar path.
pub fn write_outputs(
    spec: &ExperimentSpec,
    table: &ExperimentTable,
    csv_path: &Path,
) -> Result<PathBuf> {
    let csv = table.to_csv()?;
    let digest = Sha256::digest(&csv);
    let hash = table
        .rows
        .first()
        .map(|r| r.ensemble_hash.as_str())
        .unwrap_or("");
    let notes = table
        .rows
        .iter()
        .map(|r| {
            r.error
                .clone()
                .or_else(|| r.result.as_ref().and_then(|s| s.diagnostics.clone()))
        })
        .collect();
    let side = Sidecar {
        config: &spec.config,
        seed: spec.config.seed,
        options: spec.config.options(),
        sweep: &spec.sweep,
        solvers: &spec.solvers,
        columns: &COLUMNS,
        ensemble_hash: hash,
        notes,
        csv_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    };
    let mut json = serde_json::to_vec_pretty(&side).map_err(|e| Error::Format(e.to_string()))?;
    json.push(b'\n');
    std::fs::write(csv_path, &csv)?;
    let side_path = sidecar_path(csv_path);
    std::fs::write(&side_path, json)?;
    Ok(side_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(solvers: Vec<SolverKind>, values: Vec<f64>) -> ExperimentSpec {
        ExperimentSpec {
            config: RunConfig {
                n: 8,
                k: 4,
                k1: 2,
                c: ScalarOrList::Scalar(0.0),
                omega: ScalarOrList::Scalar(1.0),
                snr_db: 15.0,
                mode: PowerMode::Average,
                rho: 1.0,
                realizations: 30,
                seed: 11,
                epsilon: 0.01,
                solver: SolverOptions::default(),
            },
            sweep: Sweep {
                variable: SweepVariable::C,
                values,
            },
            solvers,
            output: None,
        }
    }

    #[test]
    fn empty_solver_list_rejected() {
        assert!(run_experiment(&spec(vec![], vec![0.1])).is_err());
    }

    #[test]
    fn grid_must_increase() {
        assert!(spec(vec![SolverKind::Suboptimal], vec![0.2, 0.2])
            .validate()
            .is_err());
        assert!(spec(vec![SolverKind::Suboptimal], vec![])
            .validate()
            .is_err());
    }

    #[test]
    fn vector_targets_checked() {
        let mut s = spec(vec![SolverKind::Suboptimal], vec![0.1]);
        s.config.c = ScalarOrList::List(vec![0.1, 0.2, 0.3]);
        assert!(s.config.problem().is_err());
        s.config.c = ScalarOrList::List(vec![0.1, 0.2]);
        assert_eq!(s.config.problem().unwrap().secrecy_targets, vec![0.1, 0.2]);
    }

    #[test]
    fn rows_share_one_ensemble_and_errors_are_kept() {
        // fsa1 rejects K not dividing N; the row keeps the message.
        let mut s = spec(
            vec![SolverKind::Suboptimal, SolverKind::Fsa1],
            vec![0.1, 0.3],
        );
        s.config.n = 6;
        let t = run_experiment(&s).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t
            .rows
            .windows(2)
            .all(|w| w[0].ensemble_hash == w[1].ensemble_hash));
        assert!(t.rows[1].error.as_deref().unwrap().contains("divisible"));
        assert!(t.rows[0].result.is_some());
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().next().unwrap(), COLUMNS.join(","));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let s = spec(
            vec![SolverKind::Suboptimal, SolverKind::Optimal],
            vec![0.1, 0.2],
        );
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_outputs(&s, &run_experiment(&s).unwrap(), &a).unwrap();
        write_outputs(&s, &run_experiment(&s).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(
            std::fs::read(sidecar_path(&a)).unwrap(),
            std::fs::read(sidecar_path(&b)).unwrap()
        );
        let side: serde_json::Value =
            serde_json::from_slice(&std::fs::read(sidecar_path(&a)).unwrap()).unwrap();
        assert_eq!(side["seed"], 11);
        assert_eq!(side["config"]["N"], 8);
    }
}

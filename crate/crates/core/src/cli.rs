//! Command-line front end. Every subcommand produces a [`Report`] that is
//! written as JSON to stdout or `--output`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::hjm::{self, CovarianceMatrix, ForwardCurve, HjmConfig, MaturityGrid, VolatilityFactorSet};
use crate::linalg::{self, eigh, HermitianMatrix};
use crate::qpca::{self, QpcaConfig};
use crate::qsim::{NoiseModel, StateVector};

pub const SCHEMA_VERSION: &str = "1.0";
pub const SEED_ENV: &str = "QPCA_HJM_SEED";

#[derive(Debug, Parser)]
#[command(name = "qpca-hjm", version, about = "Quantum PCA of rate covariances and HJM Monte Carlo")]
pub struct Cli {
    /// Master seed for every stochastic step.
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,

    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigendecomposition and PCA factors of a covariance matrix.
    Decompose(DecomposeArgs),
    /// Run the quantum PCA pipeline on a matrix.
    Qpca(QpcaArgs),
    /// Simulate HJM forward curves and check the martingale property.
    Hjm(HjmArgs),
    /// Validate a rate-history CSV and summarise its covariance.
    IngestCheck(IngestArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Built-in fixture (sigma2, sigma3, rho2, rho4, identityN) or matrix file.
    pub source: String,
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// Comma-separated tenors in years for a matrix file.
    #[arg(long, value_delimiter = ',')]
    pub tenors: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct QpcaArgs {
    pub source: String,
    #[arg(long, default_value_t = 2)]
    pub bits: usize,
    #[arg(long, default_value_t = 8192)]
    pub shots: u64,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    /// Depolarizing probability per entangling gate.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub trajectories: usize,
    /// Eigenvalue bitstring to project on; calibrated when omitted.
    #[arg(long)]
    pub target: Option<String>,
    /// Readout bits for the refinement pass (default: bits + 1).
    #[arg(long)]
    pub qpe_bits: Option<usize>,
    #[arg(long)]
    pub no_ambiguity_check: bool,
}

#[derive(Debug, Args)]
pub struct HjmArgs {
    /// Rate-history CSV to estimate the covariance from.
    #[arg(long, conflicts_with = "factors_from")]
    pub history: Option<PathBuf>,
    /// Covariance matrix (fixture name or file) to extract factors from.
    #[arg(long)]
    pub factors_from: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub tenors: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// Replace the factors by one flat factor of this size.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Extract the leading factor with quantum PCA using this many bits.
    #[arg(long)]
    pub quantum_bits: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = hjm::DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.5)]
    pub horizon: f64,
    /// Flat initial forward rate (ignored with --history, which starts from the last curve).
    #[arg(long, default_value_t = 0.03)]
    pub rate: f64,
    /// Bond maturities for the martingale check (default: quarters up to the horizon).
    #[arg(long, value_delimiter = ',')]
    pub maturities: Option<Vec<f64>>,
    #[arg(long, default_value_t = hjm::DEFAULT_ANNUALIZATION)]
    pub annualization: f64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub csv: PathBuf,
    #[arg(long, default_value_t = hjm::DEFAULT_ANNUALIZATION)]
    pub annualization: f64,
    #[arg(long)]
    pub r: Option<usize>,
}

/// Stochastic inputs behind a report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub noise_p: Option<f64>,
    pub trajectories: Option<usize>,
    pub n_paths: Option<usize>,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub command: String,
    pub config: Value,
    pub results: Value,
    pub provenance: Provenance,
}

impl Report {
    fn new(command: &str, config: Value, results: Value, provenance: Provenance) -> Report {
        Report {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.to_string(),
            config,
            results,
            provenance: Provenance { version: env!("CARGO_PKG_VERSION").to_string(), ..provenance },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::validation(format!("a seed is required: pass --seed or set {SEED_ENV}")))
}

/// A matrix with optional tenors, from a fixture name or a file holding a
/// JSON array of rows, a JSON object `{"matrix": .., "tenors": ..}`, or
/// comma/whitespace separated text rows.
pub struct MatrixSource {
    pub label: String,
    pub matrix: HermitianMatrix,
    pub tenors: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixFile {
    Rows(Vec<Vec<f64>>),
    Tagged { matrix: Vec<Vec<f64>>, tenors: Option<Vec<f64>> },
}

pub fn load_matrix(source: &str) -> Result<MatrixSource> {
    if let Ok(matrix) = fixtures::by_name(source) {
        return Ok(MatrixSource { label: source.to_string(), matrix, tenors: fixtures::tenors_for(source) });
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(Error::validation(format!(
            "'{source}' is neither a file nor a built-in ({} or identityN)",
            fixtures::FIXTURE_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let (rows, tenors) = match serde_json::from_str::<MatrixFile>(&text) {
        Ok(MatrixFile::Rows(rows)) => (rows, None),
        Ok(MatrixFile::Tagged { matrix, tenors }) => (matrix, tenors),
        Err(_) => (parse_text_rows(&text)?, None),
    };
    Ok(MatrixSource { label: source.to_string(), matrix: HermitianMatrix::from_real_rows(&rows)?, tenors })
}

fn parse_text_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad matrix entry '{s}'"))))
                .collect()
        })
        .collect()
}

fn default_tenors(m: usize) -> Vec<f64> {
    (1..=m).map(|j| j as f64 / 12.0).collect()
}

fn covariance(src: &MatrixSource, tenors: Option<Vec<f64>>) -> Result<CovarianceMatrix> {
    let tenors = tenors.or_else(|| src.tenors.clone()).unwrap_or_else(|| default_tenors(src.matrix.dim()));
    CovarianceMatrix::new(MaturityGrid::new(tenors)?, src.matrix.clone())
}

fn real_parts(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|z| z.re).collect()
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<Report> {
    let src = load_matrix(&args.source)?;
    let c = covariance(&src, args.tenors.clone())?;
    let spec = eigh(c.matrix())?;
    let factors = hjm::extract_factors(&c, args.r)?;
    let trace = c.matrix().trace();
    let results = json!({
        "dim": c.dim(),
        "trace": trace,
        "eigenvalues": spec.eigenvalues,
        "eigenvalue_fractions": spec.eigenvalues.iter().map(|l| l / trace).collect::<Vec<_>>(),
        "eigenvectors": spec.eigenvectors.iter().map(|v| real_parts(v)).collect::<Vec<_>>(),
        "explained_variance": factors.explained_variance(),
        "factors": to_value(&factors),
    });
    let config = json!({ "source": src.label, "r": args.r, "tenors": c.grid().tenors() });
    Ok(Report::new("decompose", config, results, Provenance::default()))
}

fn qpca_config(args: &QpcaArgs, seed: u64) -> Result<QpcaConfig> {
    let noise = match args.noise {
        Some(p) if !(0.0..=1.0).contains(&p) => {
            return Err(Error::validation(format!("noise probability {p} outside [0, 1]")));
        }
        Some(p) if p > 0.0 => Some(NoiseModel::new(p, seed)?),
        _ => None,
    };
    let cfg = QpcaConfig {
        n_bits: args.bits,
        max_iterations: args.iterations,
        shots: args.shots,
        convergence_tol: args.tol,
        target_bitstring: args.target.clone(),
        noise,
        seed,
        trajectories: args.trajectories,
        ambiguity_check: !args.no_ambiguity_check,
        ..QpcaConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Trace-normalized and zero-padded to a power-of-two dimension.
fn density_of(m: &HermitianMatrix) -> Result<linalg::DensityMatrix> {
    let size = m.dim().next_power_of_two().max(2);
    linalg::normalize_to_density(&m.zero_pad(size)?)
}

pub fn cmd_qpca(args: &QpcaArgs, seed: Option<u64>) -> Result<Report> {
    let seed = require_seed(seed)?;
    let cfg = qpca_config(args, seed)?;
    let src = load_matrix(&args.source)?;
    let rho = density_of(&src.matrix)?;
    let n_qubits = rho.dim().trailing_zeros() as usize;

    let result = qpca::run_qpca(&rho, &StateVector::uniform(n_qubits), &cfg).map_err(|e| hint(e, cfg.n_bits))?;
    let mut fixed = cfg.clone();
    fixed.target_bitstring = Some(result.eigenvalue_bitstring.clone());
    let ambiguity = if cfg.ambiguity_check {
        Some(qpca::check_ambiguity(&rho, &fixed, seed.wrapping_add(1), seed.wrapping_add(2))?)
    } else {
        None
    };

    let qpe_bits = args.qpe_bits.unwrap_or(cfg.n_bits + 1);
    let qpe_cfg = QpcaConfig { n_bits: qpe_bits, target_bitstring: None, ..cfg.clone() };
    qpe_cfg.validate()?;
    let estimate = StateVector::normalized(result.eigenvector.clone())?;
    let qpe = qpca::qpe_refine(&rho, &estimate, &qpe_cfg)?;

    let spec = eigh(rho.hermitian())?;
    let oracle = json!({
        "eigenvalues": spec.eigenvalues,
        "leading_eigenvector": spec.eigenvectors[0],
        "eigenvector_fidelity": linalg::fidelity(&result.eigenvector, &spec.eigenvectors[0]),
        "nearest_bitstring": qpca::nearest_bitstring(spec.eigenvalues[0], cfg.n_bits),
    });
    let mut histograms = serde_json::Map::new();
    histograms.insert("calibration".into(), to_value(&result.trace.calibration.as_ref().map(|c| &c.histogram)));
    for (k, h) in &result.phases.histograms {
        histograms.insert(k.clone(), to_value(h));
    }
    let results = json!({
        "dim": src.matrix.dim(),
        "padded_dim": rho.dim(),
        "eigenvalue_bitstring": result.eigenvalue_bitstring,
        "eigenvalue": result.eigenvalue,
        "eigenvector": result.eigenvector,
        "eigenvector_magnitudes": result.eigenvector.iter().map(|z| z.norm()).collect::<Vec<_>>(),
        "uncertainty": result.uncertainty,
        "phases_resolved": result.phases.resolved,
        "converged": result.converged,
        "iterations": result.iterations,
        "trace": to_value(&result.trace.records),
        "histograms": Value::Object(histograms),
        "ambiguity": to_value(&ambiguity),
        "qpe": to_value(&qpe),
        "oracle": oracle,
    });
    let mut config = to_value(&cfg);
    config["source"] = json!(src.label);
    config["qpe_bits"] = json!(qpe_bits);
    let provenance = Provenance {
        seed: Some(seed),
        shots: Some(cfg.shots),
        noise_p: cfg.noise.map(|n| n.two_qubit_depolarizing_p),
        trajectories: cfg.noise.map(|_| cfg.trajectories),
        ..Provenance::default()
    };
    Ok(Report::new("qpca", config, results, provenance))
}

fn hint(e: Error, n_bits: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} (try increasing --bits beyond {n_bits})")),
        other => other,
    }
}

fn default_maturities(horizon: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (1..).map(|q| q as f64 * 0.25).take_while(|&t| t < horizon - 1e-12).collect();
    out.push(horizon);
    out
}

pub fn cmd_hjm(args: &HjmArgs, seed: Option<u64>) -> Result<Report> {
    let seed = require_seed(seed)?;
    let mut config = json!({
        "dt": args.dt,
        "horizon": args.horizon,
        "paths": args.paths,
        "r": args.r,
        "annualization": args.annualization,
    });

    let (covariance, curve) = if let Some(path) = &args.history {
        let history = hjm::read_history(path)?;
        config["history"] = json!(path.display().to_string());
        let c = hjm::estimate_covariance(&history.curves, args.annualization)?;
        let last = history.curves.last().expect("estimate_covariance needs rows");
        let curve = ForwardCurve::new(last.grid().clone(), last.rates().to_vec(), 0.0)?;
        (Some(c), curve)
    } else if let Some(name) = &args.factors_from {
        let src = load_matrix(name)?;
        config["factors_from"] = json!(src.label);
        let c = covariance(&src, args.tenors.clone())?;
        let curve = ForwardCurve::flat(c.grid().clone(), args.rate)?;
        (Some(c), curve)
    } else {
        let tenors = args.tenors.clone().unwrap_or_else(|| vec![1.0 / 12.0, 0.25, 0.5, 1.0]);
        (None, ForwardCurve::flat(MaturityGrid::new(tenors)?, args.rate)?)
    };
    config["initial_curve"] = to_value(&curve);

    let factors = match (args.sigma, &covariance) {
        (Some(s), _) => {
            config["sigma"] = json!(s);
            VolatilityFactorSet::flat(curve.grid().clone(), &vec![s; args.r])?
        }
        (None, Some(c)) => match args.quantum_bits {
            Some(bits) => {
                config["quantum_bits"] = json!(bits);
                let cfg = QpcaConfig { n_bits: bits, seed, ..QpcaConfig::default() };
                hjm::quantum_extract_factors(c, args.r, &cfg)?
            }
            None => hjm::extract_factors(c, args.r)?,
        },
        (None, None) => return Err(Error::validation("give --history, --factors-from or --sigma")),
    };

    let cfg = HjmConfig {
        dt: args.dt,
        horizon: args.horizon,
        n_paths: args.paths,
        n_factors: args.r,
        seed,
        initial_curve: curve.clone(),
    };
    cfg.validate()?;
    let (steps, dt_used) = cfg.steps();
    let maturities = args.maturities.clone().unwrap_or_else(|| default_maturities(args.horizon));
    config["maturities"] = json!(maturities);

    let bond_prices = maturities
        .iter()
        .map(|&t| Ok(json!({ "maturity": t, "price": hjm::bond_price(&curve, t)? })))
        .collect::<Result<Vec<_>>>()?;
    let martingale = hjm::martingale_check(&cfg, &factors, &maturities)?;
    let stats = hjm::path_statistics(&cfg, &factors, curve.grid().tenors())?;
    let covariance_values = covariance.as_ref().map(|c| c.values());
    let results = json!({
        "steps": steps,
        "dt_used": dt_used,
        "covariance": covariance_values,
        "factors": to_value(&factors),
        "bond_prices": bond_prices,
        "martingale": to_value(&martingale),
        "martingale_passed": martingale.passed(),
        "path_statistics": to_value(&stats),
    });
    let provenance = Provenance { seed: Some(seed), n_paths: Some(args.paths), ..Provenance::default() };
    Ok(Report::new("hjm", config, results, provenance))
}

pub fn cmd_ingest_check(args: &IngestArgs) -> Result<Report> {
    let history = hjm::read_history(&args.csv)?;
    let c = hjm::estimate_covariance(&history.curves, args.annualization)?;
    let r = args.r.unwrap_or(c.dim());
    let factors = hjm::extract_factors(&c, r)?;
    let results = json!({
        "rows": history.curves.len(),
        "first_date": history.dates.first(),
        "last_date": history.dates.last(),
        "tenors": history.grid.tenors(),
        "covariance": c.values(),
        "eigenvalues": factors.eigenvalues(),
        "explained_variance": factors.explained_variance(),
        "factors": to_value(&factors),
    });
    let config = json!({
        "csv": args.csv.display().to_string(),
        "annualization": args.annualization,
        "r": r,
    });
    Ok(Report::new("ingest-check", config, results, Provenance::default()))
}

pub fn execute(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Qpca(a) => cmd_qpca(a, cli.seed),
        Command::Hjm(a) => cmd_hjm(a, cli.seed),
        Command::IngestCheck(a) => cmd_ingest_check(a),
    }
}

/// Runs the parsed command and writes the report; returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = execute(&cli).and_then(|report| {
        let text = report.to_json()?;
        match &cli.output {
            Some(path) => std::fs::write(path, text + "\n")?,
            None => println!("{text}"),
        }
        Ok(())
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

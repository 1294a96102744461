//! Multi-factor Heath-Jarrow-Morton engine: covariance of forward-rate
//! changes, PCA volatility factors, the no-arbitrage drift, Euler-Maruyama
//! evolution on a fixed absolute-maturity grid and zero-coupon bond pricing.

use std::io::Read;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, eigh, HermitianMatrix};
use crate::qpca::{self, derive_seed, QpcaConfig, Verdict};
use crate::qsim::StateVector;

/// Trading days per year used to annualize daily rate changes.
pub const DEFAULT_ANNUALIZATION: f64 = 252.0;
pub const DEFAULT_DT: f64 = 1.0 / 252.0;
/// Eigenvalues of a covariance matrix may dip this far below zero.
pub const PSD_TOL: f64 = 1e-12;
/// Slack when snapping times onto the step grid.
const GRID_EPS: f64 = 1e-9;

const TAG_AMBIGUITY_B: u64 = 11 << 40;
const TAG_AMBIGUITY_C: u64 = 12 << 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaturityGrid {
    tenors: Vec<f64>,
}

impl MaturityGrid {
    pub fn new(tenors: Vec<f64>) -> Result<Self> {
        if tenors.is_empty() {
            return Err(Error::validation("maturity grid is empty"));
        }
        if tenors.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("maturity grid has non-finite tenors"));
        }
        if tenors[0] <= 0.0 {
            return Err(Error::validation(format!("shortest tenor {} must be positive", tenors[0])));
        }
        if tenors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("tenors must be strictly increasing"));
        }
        Ok(MaturityGrid { tenors })
    }

    pub fn tenors(&self) -> &[f64] {
        &self.tenors
    }

    pub fn len(&self) -> usize {
        self.tenors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tenors.is_empty()
    }

    pub fn max_tenor(&self) -> f64 {
        self.tenors[self.tenors.len() - 1]
    }

    fn covers(&self, tau: f64) -> bool {
        tau >= 0.0 && tau <= self.max_tenor() * (1.0 + GRID_EPS)
    }
}

/// Piecewise-linear interpolant through the knots. Below the first knot the
/// first segment is continued (`extend_first`) or held flat.
fn interpolate(xs: &[f64], ys: &[f64], x: f64, extend_first: bool) -> f64 {
    if xs.len() == 1 || (x <= xs[0] && !extend_first) {
        return ys[0];
    }
    let i = xs.partition_point(|&t| t < x).clamp(1, xs.len() - 1);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Exact integral of the interpolant over `[0, x]`.
fn integrate(xs: &[f64], ys: &[f64], x: f64, extend_first: bool) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut prev = (0.0, interpolate(xs, ys, 0.0, extend_first));
    let mut acc = 0.0;
    let inner = xs.iter().zip(ys).filter(|(&t, _)| t > 0.0 && t < x).map(|(&t, &y)| (t, y));
    for next in inner.chain(std::iter::once((x, interpolate(xs, ys, x, extend_first)))) {
        acc += 0.5 * (prev.1 + next.1) * (next.0 - prev.0);
        prev = next;
    }
    acc
}

/// Forward rates `f(t, t + τⱼ)` observed at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForwardCurve {
    grid: MaturityGrid,
    rates: Vec<f64>,
    time: f64,
}

impl ForwardCurve {
    pub fn new(grid: MaturityGrid, rates: Vec<f64>, time: f64) -> Result<Self> {
        if rates.len() != grid.len() {
            return Err(Error::validation(format!("{} rates for {} tenors", rates.len(), grid.len())));
        }
        if rates.iter().any(|r| !r.is_finite()) || !time.is_finite() {
            return Err(Error::validation("forward curve has non-finite values"));
        }
        Ok(ForwardCurve { grid, rates, time })
    }

    pub fn flat(grid: MaturityGrid, rate: f64) -> Result<Self> {
        let rates = vec![rate; grid.len()];
        Self::new(grid, rates, 0.0)
    }

    pub fn grid(&self) -> &MaturityGrid {
        &self.grid
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `f(t, t + τ)`; the first segment is extended linearly down to `τ = 0`.
    pub fn rate_at(&self, tau: f64) -> Result<f64> {
        if !self.grid.covers(tau) {
            return Err(Error::validation(format!(
                "tenor {tau} outside [0, {}]",
                self.grid.max_tenor()
            )));
        }
        Ok(interpolate(&self.grid.tenors, &self.rates, tau, true))
    }
}

/// `P(t, T) = exp(-∫ₜᵀ f(t, s) ds)` with the integral taken exactly on the
/// piecewise-linear interpolant.
pub fn bond_price(curve: &ForwardCurve, maturity: f64) -> Result<f64> {
    let tau = maturity - curve.time;
    if !maturity.is_finite() || tau < -GRID_EPS || !curve.grid.covers(tau.max(0.0)) {
        return Err(Error::validation(format!(
            "maturity {maturity} outside [{}, {}]",
            curve.time,
            curve.time + curve.grid.max_tenor()
        )));
    }
    if tau <= 0.0 {
        return Ok(1.0);
    }
    Ok((-integrate(&curve.grid.tenors, &curve.rates, tau, true)).exp())
}

/// Annualized covariance of forward-rate changes on a maturity grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceMatrix {
    grid: MaturityGrid,
    matrix: HermitianMatrix,
}

impl CovarianceMatrix {
    pub fn new(grid: MaturityGrid, matrix: HermitianMatrix) -> Result<Self> {
        let m = matrix.matrix();
        if m.dim() != grid.len() {
            return Err(Error::validation(format!("{}x{} covariance on {} tenors", m.dim(), m.dim(), grid.len())));
        }
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                if m[(i, j)].im != 0.0 {
                    return Err(Error::validation("covariance matrix must be real"));
                }
            }
            if m[(i, i)].re < 0.0 {
                return Err(Error::validation(format!("negative variance at tenor {i}")));
            }
        }
        let min = eigh(&matrix)?.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::validation(format!("covariance has eigenvalue {min:.3e} < 0")));
        }
        Ok(CovarianceMatrix { grid, matrix })
    }

    pub fn from_rows(grid: MaturityGrid, rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(grid, HermitianMatrix::from_real_rows(rows)?)
    }

    pub fn grid(&self) -> &MaturityGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.matrix.matrix().rows().iter().map(|r| r.iter().map(|z| z.re).collect()).collect()
    }
}

/// Sample covariance (`n - 1` denominator) of successive changes, scaled by
/// `annualization`.
pub fn estimate_covariance(history: &[ForwardCurve], annualization: f64) -> Result<CovarianceMatrix> {
    if !(annualization > 0.0) || !annualization.is_finite() {
        return Err(Error::validation(format!("annualization {annualization} must be positive")));
    }
    if history.len() < 3 {
        return Err(Error::validation(format!(
            "{} observations give {} changes; the unbiased estimator needs at least 2",
            history.len(),
            history.len().saturating_sub(1)
        )));
    }
    let grid = history[0].grid.clone();
    if history.iter().any(|c| c.grid != grid) {
        return Err(Error::validation("history curves are on different grids"));
    }
    let m = grid.len();
    let changes: Vec<Vec<f64>> = history
        .windows(2)
        .map(|w| w[1].rates.iter().zip(&w[0].rates).map(|(b, a)| b - a).collect())
        .collect();
    let n = changes.len() as f64;
    let mean: Vec<f64> = (0..m).map(|j| changes.iter().map(|d| d[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; m]; m];
    for j in 0..m {
        for k in j..m {
            let s: f64 = changes.iter().map(|d| (d[j] - mean[j]) * (d[k] - mean[k])).sum();
            cov[j][k] = s / (n - 1.0) * annualization;
            cov[k][j] = cov[j][k];
        }
    }
    CovarianceMatrix::from_rows(grid, &cov)
}

/// Where a factor set came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorSource {
    Classical,
    /// Supplied directly, e.g. flat factors for testing.
    Specified,
    Quantum {
        bitstring: String,
        n_bits: usize,
        /// Per-coefficient uncertainty of the recovered direction.
        uncertainty: Vec<f64>,
        /// Fidelity of the recovered direction to the leading eigenvector.
        oracle_fidelity: f64,
        iterations: usize,
        converged: bool,
    },
}

/// Volatility factors `σ̄ᵢ(τⱼ)` on a maturity grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolatilityFactorSet {
    grid: MaturityGrid,
    factors: Vec<Vec<f64>>,
    /// Eigenvalues behind the factors, descending.
    eigenvalues: Vec<f64>,
    explained_variance: f64,
    source: FactorSource,
}

impl VolatilityFactorSet {
    pub fn new(
        grid: MaturityGrid,
        factors: Vec<Vec<f64>>,
        eigenvalues: Vec<f64>,
        explained_variance: f64,
        source: FactorSource,
    ) -> Result<Self> {
        if factors.iter().any(|f| f.len() != grid.len()) {
            return Err(Error::validation("factor length does not match the grid"));
        }
        if factors.len() > grid.len() {
            return Err(Error::validation(format!("{} factors on {} tenors", factors.len(), grid.len())));
        }
        if factors.iter().flatten().chain(&eigenvalues).any(|x| !x.is_finite()) {
            return Err(Error::validation("factor set has non-finite values"));
        }
        Ok(VolatilityFactorSet { grid, factors, eigenvalues, explained_variance, source })
    }

    /// Factors constant in `τ`, one per entry of `sigmas`.
    pub fn flat(grid: MaturityGrid, sigmas: &[f64]) -> Result<Self> {
        let m = grid.len();
        let factors = sigmas.iter().map(|&s| vec![s; m]).collect();
        let eigenvalues = sigmas.iter().map(|s| s * s * m as f64).collect();
        Self::new(grid, factors, eigenvalues, 1.0, FactorSource::Specified)
    }

    pub fn grid(&self) -> &MaturityGrid {
        &self.grid
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn explained_variance(&self) -> f64 {
        self.explained_variance
    }

    pub fn source(&self) -> &FactorSource {
        &self.source
    }

    /// The first `r` factors.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r > self.factors.len() {
            return Err(Error::validation(format!("asked for {r} of {} factors", self.factors.len())));
        }
        let mut out = self.clone();
        out.factors.truncate(r);
        Ok(out)
    }

    /// `σ̄ᵢ(τ)`, piecewise linear and flat below the shortest tenor.
    pub fn sigma(&self, i: usize, tau: f64) -> f64 {
        interpolate(&self.grid.tenors, &self.factors[i], tau, false)
    }

    /// `∫₀^τ σ̄ᵢ(s) ds`.
    pub fn sigma_integral(&self, i: usize, tau: f64) -> f64 {
        integrate(&self.grid.tenors, &self.factors[i], tau, false)
    }

    /// `Σᵢ σ̄ᵢ(τⱼ) σ̄ᵢ(τₖ)`.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let m = self.grid.len();
        (0..m)
            .map(|j| (0..m).map(|k| self.factors.iter().map(|f| f[j] * f[k]).sum()).collect())
            .collect()
    }
}

fn orient(v: &mut [f64]) {
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-`r` principal components: factor `i` is `√λᵢ vᵢ`.
pub fn extract_factors(c: &CovarianceMatrix, r: usize) -> Result<VolatilityFactorSet> {
    if r == 0 || r > c.dim() {
        return Err(Error::validation(format!("r = {r} must lie in 1..={}", c.dim())));
    }
    let spec = eigh(&c.matrix)?;
    if let Some(&bad) = spec.eigenvalues.iter().find(|&&l| l < -PSD_TOL) {
        return Err(Error::validation(format!("covariance has eigenvalue {bad:.3e} < 0")));
    }
    let eigenvalues: Vec<f64> = spec.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::validation("covariance matrix is zero"));
    }
    let factors = (0..r)
        .map(|i| {
            let mut v: Vec<f64> = spec.eigenvectors[i].iter().map(|z| z.re).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            orient(&mut v);
            let scale = eigenvalues[i].sqrt() / norm;
            v.iter().map(|x| x * scale).collect()
        })
        .collect();
    let explained = eigenvalues[..r].iter().sum::<f64>() / total;
    VolatilityFactorSet::new(c.grid.clone(), factors, eigenvalues, explained, FactorSource::Classical)
}

/// Leading factor from the qPCA pipeline: `λ̂` is the eigenvalue bitstring
/// times `tr(C)` and the direction is the recovered eigenvector, truncated to
/// the grid and made real.
pub fn quantum_extract_factors(c: &CovarianceMatrix, r: usize, cfg: &QpcaConfig) -> Result<VolatilityFactorSet> {
    if r != 1 {
        return Err(Error::validation(format!("the quantum path extracts one factor, not {r}")));
    }
    let m = c.dim();
    let size = m.next_power_of_two().max(2);
    let rho = linalg::normalize_to_density(&c.matrix.zero_pad(size)?)?;
    if cfg.ambiguity_check {
        let report = qpca::check_ambiguity(
            &rho,
            cfg,
            derive_seed(cfg.seed, TAG_AMBIGUITY_B),
            derive_seed(cfg.seed, TAG_AMBIGUITY_C),
        )?;
        if report.verdict == Verdict::Multiple {
            return Err(Error::Ambiguity { cross_fidelity: report.cross_fidelity });
        }
    }
    let b0 = StateVector::uniform(size.trailing_zeros() as usize);
    let result = qpca::run_qpca(&rho, &b0, cfg)?;

    let head = &result.eigenvector[..m];
    let pivot = head.iter().cloned().fold(Complex64::new(0.0, 0.0), |a, z| if z.norm() > a.norm() { z } else { a });
    if pivot.norm() == 0.0 {
        return Err(Error::numerical("recovered eigenvector vanishes on the covariance grid"));
    }
    let unphase = pivot.conj() / pivot.norm();
    let mut v: Vec<f64> = head.iter().map(|z| (z * unphase).re).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    orient(&mut v);

    let trace = c.matrix.trace();
    let lambda = result.eigenvalue * trace;
    let oracle = eigh(&c.matrix)?.eigenvectors[0].clone();
    let vc: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let source = FactorSource::Quantum {
        bitstring: result.eigenvalue_bitstring.clone(),
        n_bits: cfg.n_bits,
        uncertainty: result.uncertainty[..m].iter().map(|u| u / norm).collect(),
        oracle_fidelity: linalg::fidelity(&vc, &oracle),
        iterations: result.iterations,
        converged: result.converged,
    };
    let factor = v.iter().map(|x| x * lambda.sqrt()).collect();
    VolatilityFactorSet::new(c.grid.clone(), vec![factor], vec![lambda], result.eigenvalue, source)
}

/// No-arbitrage drift `α(τ) = Σᵢ σ̄ᵢ(τ) ∫₀^τ σ̄ᵢ(s) ds`.
pub fn drift(factors: &VolatilityFactorSet, tau: f64) -> Result<f64> {
    if !factors.grid.covers(tau) {
        return Err(Error::validation(format!("tenor {tau} outside [0, {}]", factors.grid.max_tenor())));
    }
    Ok((0..factors.n_factors()).map(|i| factors.sigma(i, tau) * factors.sigma_integral(i, tau)).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HjmConfig {
    /// Requested step; shortened so that a whole number of steps ends on the horizon.
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// Number of leading factors driving the simulation.
    pub n_factors: usize,
    pub seed: u64,
    pub initial_curve: ForwardCurve,
}

impl HjmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(Error::validation(format!("horizon {} must be at least dt = {}", self.horizon, self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::validation("n_paths must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps and the step actually used.
    pub fn steps(&self) -> (usize, f64) {
        let k = ((self.horizon / self.dt) - GRID_EPS).ceil().max(1.0) as usize;
        (k, self.horizon / k as f64)
    }
}

/// One simulated path. `curves[k]` holds `f(tₖ, tₖ + τ)` on the maturities
/// not yet reached, with `τ` a multiple of the step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathResult {
    pub times: Vec<f64>,
    pub curves: Vec<ForwardCurve>,
    pub short_rates: Vec<f64>,
    pub money_market: Vec<f64>,
}

/// Precomputed per-lag drift and volatility increments.
struct Engine {
    dt: f64,
    steps: usize,
    /// `f(0, Tⱼ)` for `Tⱼ = j·dt`, `j = 0..=J`.
    f0: Vec<f64>,
    /// `α(ℓ·dt)·dt` indexed by lag `ℓ`.
    alpha_dt: Vec<f64>,
    /// `σ̄ᵢ(ℓ·dt)·√dt` indexed by factor then lag.
    vol: Vec<Vec<f64>>,
    seed: u64,
}

impl Engine {
    /// `beyond` asks for at least one maturity past the horizon.
    fn new(cfg: &HjmConfig, factors: &VolatilityFactorSet, beyond: bool) -> Result<Self> {
        cfg.validate()?;
        let factors = factors.truncated(cfg.n_factors)?;
        let (steps, dt) = cfg.steps();
        let limit = cfg.initial_curve.grid.max_tenor().min(factors.grid.max_tenor());
        let last = (limit / dt + GRID_EPS).floor() as usize;
        let needed = steps + usize::from(beyond);
        if last < needed {
            return Err(Error::validation(format!(
                "maturity grid exhausted before horizon: {} steps of {dt:.6} need maturities to {:.6}, grid ends at {limit}",
                steps,
                needed as f64 * dt
            )));
        }
        let tau = |l: usize| (l as f64 * dt).min(limit);
        let f0 = (0..=last).map(|j| cfg.initial_curve.rate_at(tau(j))).collect::<Result<Vec<_>>>()?;
        let alpha_dt = (0..=last).map(|l| drift(&factors, tau(l)).map(|a| a * dt)).collect::<Result<Vec<_>>>()?;
        let vol = (0..factors.n_factors())
            .map(|i| (0..=last).map(|l| factors.sigma(i, tau(l)) * dt.sqrt()).collect())
            .collect();
        Ok(Engine { dt, steps, f0, alpha_dt, vol, seed: cfg.seed })
    }

    fn last(&self) -> usize {
        self.f0.len() - 1
    }

    /// Simulates path `index` on maturities `0..=last`, calling `observe`
    /// after every step with the full maturity vector. Returns short rates.
    fn run(&self, index: usize, last: usize, mut observe: impl FnMut(usize, &[f64])) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut f = self.f0[..=last].to_vec();
        let mut z = vec![0.0; self.vol.len()];
        let mut rates = Vec::with_capacity(self.steps + 1);
        rates.push(f[0]);
        observe(0, &f);
        for k in 0..self.steps {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let live = &mut f[k + 1..=last];
            let n = live.len();
            for (fj, a) in live.iter_mut().zip(&self.alpha_dt[1..=n]) {
                *fj += a;
            }
            for (vol, zi) in self.vol.iter().zip(&z) {
                for (fj, s) in live.iter_mut().zip(&vol[1..=n]) {
                    *fj += s * zi;
                }
            }
            rates.push(f[k + 1]);
            observe(k + 1, &f);
        }
        rates
    }

    /// Trapezoid integral of the short rate up to `t`, interpolating
    /// linearly inside a step.
    fn integrate_rates(&self, rates: &[f64], t: f64) -> f64 {
        let x = t / self.dt;
        let k = ((x + GRID_EPS).floor() as usize).min(rates.len() - 1);
        let mut acc = 0.0;
        for l in 0..k {
            acc += 0.5 * (rates[l] + rates[l + 1]) * self.dt;
        }
        let rem = t - k as f64 * self.dt;
        if rem > GRID_EPS * self.dt && k + 1 < rates.len() {
            let r_t = rates[k] + (rates[k + 1] - rates[k]) * rem / self.dt;
            acc += 0.5 * (rates[k] + r_t) * rem;
        }
        acc
    }

    fn money_market(&self, rates: &[f64]) -> Vec<f64> {
        let mut log_b = 0.0;
        let mut out = Vec::with_capacity(rates.len());
        out.push(1.0);
        for w in rates.windows(2) {
            log_b += 0.5 * (w[0] + w[1]) * self.dt;
            out.push(log_b.exp());
        }
        out
    }
}

/// Euler-Maruyama paths with every intermediate curve kept. Memory grows as
/// paths × steps × maturities; use [`martingale_check`] or
/// [`path_statistics`] for large runs.
pub fn evolve(cfg: &HjmConfig, factors: &VolatilityFactorSet) -> Result<Vec<PathResult>> {
    let engine = Engine::new(cfg, factors, true)?;
    let last = engine.last();
    let dt = engine.dt;
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut curves = Vec::with_capacity(engine.steps + 1);
            let mut failure = None;
            let rates = engine.run(p, last, |k, f| {
                let tenors: Vec<f64> = (1..=last - k).map(|l| l as f64 * dt).collect();
                let curve = MaturityGrid::new(tenors)
                    .and_then(|g| ForwardCurve::new(g, f[k + 1..=last].to_vec(), k as f64 * dt));
                match curve {
                    Ok(c) => curves.push(c),
                    Err(e) => failure = Some(e),
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(PathResult {
                times: (0..=engine.steps).map(|k| k as f64 * dt).collect(),
                curves,
                money_market: engine.money_market(&rates),
                short_rates: rates,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

impl Moments {
    /// Sequential reduction, so results do not depend on the thread count.
    pub fn of(xs: &[f64]) -> Moments {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Moments { mean, std_dev: var.sqrt(), std_error: (var / n).sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleRow {
    pub maturity: f64,
    /// Monte Carlo mean of `exp(-∫₀ᵀ r)`.
    pub mc_estimate: f64,
    pub std_error: f64,
    /// `P(0, T)` from the initial curve.
    pub bond_price: f64,
    pub abs_error: f64,
    /// `abs_error ≤ 3·std_error`, with a 1e-10 floor for deterministic runs.
    pub within_3se: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub n_paths: usize,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    pub rows: Vec<MartingaleRow>,
}

impl MartingaleReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.within_3se)
    }
}

/// Compares `E[exp(-∫₀ᵀ r)]` with the initial-curve bond price for every
/// maturity (each at most the horizon).
pub fn martingale_check(cfg: &HjmConfig, factors: &VolatilityFactorSet, maturities: &[f64]) -> Result<MartingaleReport> {
    let engine = Engine::new(cfg, factors, false)?;
    for &t in maturities {
        if !(t > 0.0) || t > cfg.horizon * (1.0 + GRID_EPS) {
            return Err(Error::validation(format!("maturity {t} outside (0, {}]", cfg.horizon)));
        }
    }
    let last = engine.steps;
    let per_path: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let rates = engine.run(p, last, |_, _| {});
            maturities.iter().map(|&t| (-engine.integrate_rates(&rates, t)).exp()).collect()
        })
        .collect();
    let rows = maturities
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let column: Vec<f64> = per_path.iter().map(|d| d[i]).collect();
            let m = Moments::of(&column);
            let p = bond_price(&cfg.initial_curve, cfg.initial_curve.time + t)?;
            let abs_error = (m.mean - p).abs();
            Ok(MartingaleRow {
                maturity: t,
                mc_estimate: m.mean,
                std_error: m.std_error,
                bond_price: p,
                abs_error,
                within_3se: abs_error <= 3.0 * m.std_error + 1e-10,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MartingaleReport { n_paths: cfg.n_paths, seed: cfg.seed, steps: engine.steps, dt: engine.dt, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TenorStatistics {
    pub tenor: f64,
    #[serde(flatten)]
    pub moments: Moments,
}

/// Cross-path moments at the horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathStatistics {
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// `f(t, t + τ)` at the horizon for each requested tenor still on the grid.
    pub forward: Vec<TenorStatistics>,
    pub short_rate: Moments,
    pub money_market: Moments,
}

/// Streams paths and summarises the horizon curve at `tenors`; tenors that
/// run past the simulated maturities are dropped.
pub fn path_statistics(cfg: &HjmConfig, factors: &VolatilityFactorSet, tenors: &[f64]) -> Result<PathStatistics> {
    let engine = Engine::new(cfg, factors, false)?;
    let last = engine.last();
    let k = engine.steps;
    let dt = engine.dt;
    let reachable: Vec<f64> = tenors
        .iter()
        .cloned()
        .filter(|&tau| tau >= 0.0 && (k as f64 + tau / dt) <= last as f64 + GRID_EPS)
        .collect();
    let per_path: Vec<(Vec<f64>, f64, f64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut at_horizon = Vec::new();
            let rates = engine.run(p, last, |step, f| {
                if step == k {
                    at_horizon = reachable
                        .iter()
                        .map(|&tau| {
                            let x = k as f64 + tau / dt;
                            let j = ((x + GRID_EPS).floor() as usize).min(last);
                            let w = (x - j as f64).max(0.0);
                            if w <= GRID_EPS || j == last { f[j] } else { f[j] + (f[j + 1] - f[j]) * w }
                        })
                        .collect();
                }
            });
            let log_b = engine.integrate_rates(&rates, cfg.horizon);
            (at_horizon, rates[k], log_b.exp())
        })
        .collect();
    let forward = reachable
        .iter()
        .enumerate()
        .map(|(i, &tenor)| {
            let column: Vec<f64> = per_path.iter().map(|p| p.0[i]).collect();
            TenorStatistics { tenor, moments: Moments::of(&column) }
        })
        .collect();
    let short: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let bank: Vec<f64> = per_path.iter().map(|p| p.2).collect();
    Ok(PathStatistics {
        horizon: k as f64 * dt,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        forward,
        short_rate: Moments::of(&short),
        money_market: Moments::of(&bank),
    })
}

/// Forward-curve observations read from CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateHistory {
    pub dates: Vec<String>,
    pub grid: MaturityGrid,
    /// Curve `i` is stamped with time `i / 252`.
    pub curves: Vec<ForwardCurve>,
}

/// Years encoded in a column header such as `tenor_3m`, `tenor_2y`,
/// `tenor_10d` or `tenor_1w`.
pub fn parse_tenor_label(label: &str) -> Result<f64> {
    let body = label
        .trim()
        .strip_prefix("tenor_")
        .ok_or_else(|| Error::Parse(format!("column '{label}' is not of the form tenor_<n><d|w|m|y>")))?;
    let (num, unit) = body.split_at(body.len().saturating_sub(1));
    let n: f64 = num.parse().map_err(|_| Error::Parse(format!("bad tenor count in '{label}'")))?;
    let per_year = match unit {
        "d" => 365.0,
        "w" => 52.0,
        "m" => 12.0,
        "y" => 1.0,
        _ => return Err(Error::Parse(format!("bad tenor unit in '{label}'"))),
    };
    Ok(n / per_year)
}

/// Parses `date,tenor_1m,tenor_3m,...` with decimal per-annum rates.
pub fn parse_history<R: Read>(reader: R) -> Result<RateHistory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.get(0) != Some("date") {
        return Err(Error::Parse("first column must be 'date'".into()));
    }
    let tenors = headers.iter().skip(1).map(parse_tenor_label).collect::<Result<Vec<_>>>()?;
    let grid = MaturityGrid::new(tenors)?;
    let mut dates = Vec::new();
    let mut curves = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?;
        let rates = row
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad rate '{s}'", i + 2))))
            .collect::<Result<Vec<_>>>()?;
        dates.push(row.get(0).unwrap_or_default().to_string());
        curves.push(ForwardCurve::new(grid.clone(), rates, i as f64 / DEFAULT_ANNUALIZATION)?);
    }
    Ok(RateHistory { dates, grid, curves })
}

pub fn read_history(path: &Path) -> Result<RateHistory> {
    parse_history(std::fs::File::open(path)?)
}

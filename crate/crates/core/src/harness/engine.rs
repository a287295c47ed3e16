//! Trials, cells and sweeps.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Cell, ExperimentConfig};
use super::parallel_map;
use crate::analytic::{average_sos_variance, efficiency, mm_error_covariance, optimal_omega, predict_subspace_mse};
use crate::error::{Error, Result};
use crate::estimators::{
    mm_semiblind, subspace_semiblind, training_estimate_with, training_only, weight_w, Diagnostics, Method, MmOptions,
    OmegaRule, SemiblindEstimate,
};
use crate::model::{
    sample_channel, sample_codes, sample_symbols, sample_taps, synthesize_received, Constellation, SystemParams,
};
use crate::sos::{build_moment_vector, build_normal_equations, estimate_sos, hermitianize, SolveMode};

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable key of a cell from the bit patterns of its coordinates, so adding
/// or reordering cells never changes another cell's random streams.
pub fn cell_key(cell: &Cell) -> u64 {
    [cell.beta.to_bits(), cell.sigma_n2.to_bits(), cell.order as u64, cell.alpha.to_bits()]
        .into_iter()
        .fold(0x5EED_CE11_u64, |h, x| mix(h ^ x))
}

/// Seed of one trial: `mix(mix(master ^ key(cell)) ^ trial)`.
pub fn trial_seed(master: u64, cell: &Cell, trial: usize) -> u64 {
    mix(mix(master ^ cell_key(cell)) ^ trial as u64)
}

/// Seed of analytic channel draw `draw`. It ignores the cell, so every cell
/// averages over the same underlying normals: a `P`-tap draw is the first
/// `P` taps of the longer draws, rescaled. Predicted surfaces are then smooth
/// in every grid direction, including `P`.
pub fn analytic_seed(master: u64, draw: usize) -> u64 {
    mix(mix(master ^ 0xA11A_171C_0000_0000) ^ draw as u64)
}

/// Outcome of one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub params: SystemParams,
    /// Per-user `||g_hat_k - g_k||^2`.
    pub errors: BTreeMap<Method, Vec<f64>>,
    pub diagnostics: BTreeMap<Method, Vec<Diagnostics>>,
    /// Per-user SOS errors `d_hat_k - vec(g_k g_k^H)`, when retained.
    pub sos_errors: Option<Vec<DVector<Complex64>>>,
}

impl TrialResult {
    /// `M * mean_k ||dg_k||^2 / P`.
    pub fn scaled_error(&self, method: Method) -> Option<f64> {
        let e = self.errors.get(&method)?;
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        Some(self.params.block_len as f64 * mean / self.params.channel_order as f64)
    }
}

fn tag(cell: &Cell, trial: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Trial {
        cell: cell.to_string(),
        trial,
        source: Box::new(e),
    }
}

/// One trial: fresh channel, codes, symbols and noise, then every configured
/// estimator. Deterministic in `(config.seed, cell, trial)`.
pub fn run_trial(config: &ExperimentConfig, cell: &Cell, trial: usize) -> Result<TrialResult> {
    run_trial_detailed(config, cell, trial, false)
}

/// [`run_trial`], optionally keeping the SOS error vectors.
pub fn run_trial_detailed(config: &ExperimentConfig, cell: &Cell, trial: usize, retain_sos: bool) -> Result<TrialResult> {
    trial_inner(config, cell, trial, retain_sos).map_err(tag(cell, trial))
}

fn trial_inner(config: &ExperimentConfig, cell: &Cell, trial: usize, retain_sos: bool) -> Result<TrialResult> {
    let params = config.params(cell)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, cell, trial));
    let channel = sample_channel(&params, &mut rng);
    let codes = sample_codes(&params, &mut rng);
    let symbols = sample_symbols(&params, Constellation::Qpsk, &mut rng);
    let received = synthesize_received(&params, &channel, &codes, &symbols, config.synthesis, &mut rng)?;
    let training = training_estimate_with(&received, &codes, &symbols, &params, config.training)?;

    let methods = config.estimator.methods();
    let needs_sos = retain_sos || methods.iter().any(|m| *m != Method::Training);
    let sos = if needs_sos {
        let range = params.training_len..params.block_len;
        let system = match config.sos_mode {
            SolveMode::Identity => build_moment_vector(&codes, &received, range, params.noise_var)?,
            _ => build_normal_equations(&codes, &received, range, params.noise_var)?,
        };
        Some(hermitianize(&estimate_sos(&system, config.sos_mode)?))
    } else {
        None
    };

    let mut errors = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    for method in methods {
        let mut errs = Vec::with_capacity(params.users);
        let mut diags = Vec::with_capacity(params.users);
        for (k, g) in channel.taps.iter().enumerate() {
            let g_bar = &training.g_bar[k];
            let est = estimate_user(config, &params, method, g, g_bar, sos.as_ref().map(|s| &s.per_user[k]))?;
            errs.push((&est.g_hat - g).norm_squared());
            diags.push(est.diagnostics);
        }
        errors.insert(method, errs);
        diagnostics.insert(method, diags);
    }

    let sos_errors = if retain_sos {
        sos.map(|s| s.per_user.iter().zip(&channel.sos).map(|(d, t)| d - t).collect())
    } else {
        None
    };
    Ok(TrialResult {
        trial,
        params,
        errors,
        diagnostics,
        sos_errors,
    })
}

fn estimate_user(
    config: &ExperimentConfig,
    params: &SystemParams,
    method: Method,
    g: &DVector<Complex64>,
    g_bar: &DVector<Complex64>,
    d_hat: Option<&DVector<Complex64>>,
) -> Result<SemiblindEstimate> {
    let d = || d_hat.ok_or_else(|| Error::Degenerate("SOS estimate missing".into()));
    match method {
        Method::Training => Ok(training_only(g_bar)),
        Method::Mm => {
            let sigma_d2 = average_sos_variance(params.beta(), params.noise_var, params.channel_order);
            let w = weight_w(params.alpha(), params.noise_var, sigma_d2)?;
            mm_semiblind(g_bar, d()?, w, &MmOptions::default())
        }
        Method::Subspace => {
            let omega = config.omega.resolve(Some(g), g_bar, params)?;
            let mut est = subspace_semiblind(g_bar, d()?, omega)?;
            est.diagnostics.omega_rule = Some(config.omega);
            Ok(est)
        }
    }
}

/// All trials of one cell, in trial order.
pub fn run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<Vec<TrialResult>> {
    let jobs: Vec<usize> = (0..config.trials).collect();
    parallel_map(config.workers, &jobs, |&t| run_trial(config, cell, t))?
        .into_iter()
        .collect()
}

/// Analytic prediction for one (cell, estimator).
#[derive(Debug, Clone, PartialEq)]
pub struct CellPrediction {
    pub cell: Cell,
    pub method: Method,
    /// Mean of `sigma_g^2` over the channel draws.
    pub sigma_g2: f64,
    pub sigma_g2_sd: f64,
    /// Efficiency of the mean `sigma_g^2`.
    pub eta: f64,
    /// Mean and standard deviation of the per-draw efficiencies.
    pub eta_draw_mean: f64,
    pub eta_draw_sd: f64,
    pub draws: usize,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-draw analytic `sigma_g^2` of one estimator at one channel.
pub fn analytic_sigma_g2(
    method: Method,
    g: &DVector<Complex64>,
    params: &SystemParams,
    omega: OmegaRule,
) -> Result<f64> {
    match method {
        Method::Training => Ok(params.noise_var / params.alpha()),
        Method::Mm => Ok(mm_error_covariance(g, params)?.sigma_g2),
        Method::Subspace => {
            let w = match omega {
                OmegaRule::Fixed(w) => w,
                OmegaRule::Oracle | OmegaRule::PlugIn => optimal_omega(g, params)?,
            };
            predict_subspace_mse(g, params, w)
        }
    }
}

/// Analytic predictions for every configured estimator at one cell,
/// averaged over `config.analytic_draws` channel draws.
pub fn predict_cell(config: &ExperimentConfig, cell: &Cell) -> Result<Vec<CellPrediction>> {
    let params = config.params(cell)?;
    let channels: Vec<_> = (0..config.analytic_draws)
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(analytic_seed(config.seed, d));
            sample_taps(params.channel_order, &mut rng)
        })
        .collect();
    let alpha = params.alpha();
    config
        .estimator
        .methods()
        .into_iter()
        .map(|method| {
            let values = channels
                .iter()
                .map(|g| analytic_sigma_g2(method, g, &params, config.omega))
                .collect::<Result<Vec<_>>>()?;
            let etas = values
                .iter()
                .map(|&s| efficiency(s, params.noise_var, alpha))
                .collect::<Result<Vec<_>>>()?;
            let (sigma_g2, sigma_g2_sd) = mean_sd(&values);
            let (eta_draw_mean, eta_draw_sd) = mean_sd(&etas);
            Ok(CellPrediction {
                cell: *cell,
                method,
                sigma_g2,
                sigma_g2_sd,
                eta: efficiency(sigma_g2, params.noise_var, alpha)?,
                eta_draw_mean,
                eta_draw_sd,
                draws: values.len(),
            })
        })
        .collect()
}

/// One output row: a (cell, estimator) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub beta: f64,
    pub sigma_n2: f64,
    pub order: usize,
    pub alpha: f64,
    pub estimator: Method,
    /// Monte Carlo trials behind the empirical columns (0 for analytic-only).
    pub trials: usize,
    pub sigma_g2_emp: f64,
    /// Standard error of `sigma_g2_emp`; NaN below two trials.
    pub sigma_g2_se: f64,
    pub sigma_g2_ana: f64,
    pub eta_emp: f64,
    pub eta_ana: f64,
}

impl SweepRecord {
    pub fn cell(&self) -> Cell {
        Cell {
            beta: self.beta,
            sigma_n2: self.sigma_n2,
            order: self.order,
            alpha: self.alpha,
        }
    }

    /// Bitwise equality, treating equal NaN payloads as equal.
    pub fn same_bits(&self, other: &SweepRecord) -> bool {
        let f = |a: f64, b: f64| a.to_bits() == b.to_bits();
        f(self.beta, other.beta)
            && f(self.sigma_n2, other.sigma_n2)
            && self.order == other.order
            && f(self.alpha, other.alpha)
            && self.estimator == other.estimator
            && self.trials == other.trials
            && f(self.sigma_g2_emp, other.sigma_g2_emp)
            && f(self.sigma_g2_se, other.sigma_g2_se)
            && f(self.sigma_g2_ana, other.sigma_g2_ana)
            && f(self.eta_emp, other.eta_emp)
            && f(self.eta_ana, other.eta_ana)
    }
}

/// Empirical mean and standard error of `M ||dg||^2 / P` per estimator.
pub fn empirical_sigma_g2(results: &[TrialResult], method: Method) -> Option<(f64, f64)> {
    let values: Vec<f64> = results.iter().filter_map(|r| r.scaled_error(method)).collect();
    if values.is_empty() {
        return None;
    }
    let (mean, sd) = mean_sd(&values);
    Some((mean, sd / (values.len() as f64).sqrt()))
}

/// Combine trials and predictions of one cell into records.
pub fn aggregate(
    cell: &Cell,
    params: &SystemParams,
    results: &[TrialResult],
    predictions: &[CellPrediction],
    methods: &[Method],
) -> Vec<SweepRecord> {
    methods
        .iter()
        .map(|&method| {
            let (emp, se) = empirical_sigma_g2(results, method).unwrap_or((f64::NAN, f64::NAN));
            let ana = predictions
                .iter()
                .find(|p| p.method == method)
                .map_or(f64::NAN, |p| p.sigma_g2);
            let eta = |s: f64| {
                if s.is_finite() {
                    efficiency(s, params.noise_var, params.alpha()).unwrap_or(f64::NAN)
                } else {
                    f64::NAN
                }
            };
            SweepRecord {
                beta: cell.beta,
                sigma_n2: cell.sigma_n2,
                order: cell.order,
                alpha: cell.alpha,
                estimator: method,
                trials: results.len(),
                sigma_g2_emp: emp,
                sigma_g2_se: se,
                sigma_g2_ana: ana,
                eta_emp: eta(emp),
                eta_ana: eta(ana),
            }
        })
        .collect()
}

/// A cell that could not be (fully) evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell: Cell,
    pub error: Error,
}

/// Records of every cell that succeeded plus the failures.
#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<CellFailure>,
    pub predictions: Vec<CellPrediction>,
}

enum Job {
    Trial(usize, usize),
    Predict(usize),
}

enum JobResult {
    Trial(Result<TrialResult>),
    Predict(Result<Vec<CellPrediction>>),
}

/// Simulate and predict every grid cell. Per-cell failures are collected
/// and the sweep continues; results do not depend on the worker count.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    run_grid(config, true)
}

/// Analytic predictions only.
pub fn predict(config: &ExperimentConfig) -> Result<SweepOutcome> {
    run_grid(config, false)
}

fn run_grid(config: &ExperimentConfig, simulate: bool) -> Result<SweepOutcome> {
    if config.trials == 0 || config.analytic_draws == 0 {
        return Err(Error::Config("trials and analytic_draws must be at least 1".into()));
    }
    let cells = config.grid.cells();
    let mut outcome = SweepOutcome::default();
    let mut valid = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        match config.params(cell) {
            Ok(p) => valid.push((i, p)),
            Err(error) => outcome.failures.push(CellFailure { cell: *cell, error }),
        }
    }

    let mut jobs = Vec::new();
    for &(i, _) in &valid {
        jobs.push(Job::Predict(i));
        if simulate {
            jobs.extend((0..config.trials).map(|t| Job::Trial(i, t)));
        }
    }
    let results = parallel_map(config.workers, &jobs, |job| match *job {
        Job::Trial(i, t) => JobResult::Trial(run_trial(config, &cells[i], t)),
        Job::Predict(i) => JobResult::Predict(predict_cell(config, &cells[i])),
    })?;

    let methods = config.estimator.methods();
    let mut it = results.into_iter();
    for (i, params) in valid {
        let cell = cells[i];
        let predictions = match it.next() {
            Some(JobResult::Predict(Ok(p))) => p,
            Some(JobResult::Predict(Err(error))) => {
                outcome.failures.push(CellFailure { cell, error });
                Vec::new()
            }
            _ => unreachable!("job order"),
        };
        let mut trials = Vec::new();
        let mut failed = None;
        if simulate {
            for _ in 0..config.trials {
                match it.next() {
                    Some(JobResult::Trial(Ok(r))) => trials.push(r),
                    Some(JobResult::Trial(Err(e))) => {
                        failed.get_or_insert(e);
                    }
                    _ => unreachable!("job order"),
                }
            }
        }
        if let Some(error) = failed {
            outcome.failures.push(CellFailure { cell, error });
            outcome.predictions.extend(predictions);
            continue;
        }
        outcome.records.extend(aggregate(&cell, &params, &trials, &predictions, &methods));
        outcome.predictions.extend(predictions);
    }
    Ok(outcome)
}

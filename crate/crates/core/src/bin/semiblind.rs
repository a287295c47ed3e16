use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semiblind::estimators::{Method, TrainingMethod};
use semiblind::harness::config::parse_omega;
use semiblind::harness::{
    aggregate, predict, predict_cell, run_cell, run_sweep, write_records, CellFailure, EstimatorChoice,
    ExperimentConfig, Format, SweepOutcome,
};
use semiblind::model::SynthesisMode;
use semiblind::sos::SolveMode;
use semiblind::{Error, Result};

#[derive(Parser)]
#[command(name = "semiblind", version, about = "SOS-based semi-blind channel estimation for long-code DS-CDMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic efficiency predictions over the grid (no simulation).
    Predict(Common),
    /// Monte Carlo run of a single cell with solver diagnostics.
    Simulate(Common),
    /// Monte Carlo plus analytic predictions over the full grid.
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "INT")]
    trials: Option<usize>,
    #[arg(long, value_name = "INT")]
    workers: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long, value_parser = ["training", "mm", "subspace", "all"])]
    estimator: Option<String>,
    #[arg(long = "sos-mode", value_parser = ["identity", "solve", "iterative"])]
    sos_mode: Option<String>,
    #[arg(long, value_parser = ["isi-free", "full-stream"])]
    synthesis: Option<String>,
    /// Training estimator.
    #[arg(long, value_parser = ["decorrelating", "correlator"])]
    training: Option<String>,
    /// Subspace weight: oracle, plug-in, or a number in [0, 1].
    #[arg(long)]
    omega: Option<String>,
    /// Channel draws behind each analytic prediction.
    #[arg(long, value_name = "INT")]
    draws: Option<usize>,
    /// Grid overrides (comma-separated lists).
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    #[arg(long = "sigma-n2", value_delimiter = ',')]
    sigma_n2: Option<Vec<f64>>,
    #[arg(short = 'P', long = "order", value_delimiter = ',')]
    order: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Spreading gain N.
    #[arg(long, value_name = "INT")]
    gain: Option<usize>,
    /// Block length M.
    #[arg(long = "block-len", value_name = "INT")]
    block_len: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = &self.format {
            cfg.format = v.parse::<Format>()?;
        }
        if let Some(v) = &self.estimator {
            cfg.estimator = v.parse::<EstimatorChoice>()?;
        }
        if let Some(v) = &self.sos_mode {
            cfg.sos_mode = v.parse::<SolveMode>()?;
        }
        if let Some(v) = &self.synthesis {
            cfg.synthesis = v.parse::<SynthesisMode>()?;
        }
        if let Some(v) = &self.training {
            cfg.training = v.parse::<TrainingMethod>()?;
        }
        if let Some(v) = &self.omega {
            cfg.omega = parse_omega(v)?;
        }
        if let Some(v) = self.draws {
            cfg.analytic_draws = v;
        }
        if let Some(v) = &self.beta {
            cfg.grid.beta = v.clone();
        }
        if let Some(v) = &self.sigma_n2 {
            cfg.grid.sigma_n2 = v.clone();
        }
        if let Some(v) = &self.order {
            cfg.grid.order = v.clone();
        }
        if let Some(v) = &self.alpha {
            cfg.grid.alpha = v.clone();
        }
        if let Some(v) = self.gain {
            cfg.spreading_gain = v;
        }
        if let Some(v) = self.block_len {
            cfg.block_len = v;
        }
        Ok(cfg)
    }
}

fn report_failures(failures: &[CellFailure], cells: usize) -> ExitCode {
    if failures.is_empty() {
        return ExitCode::SUCCESS;
    }
    eprintln!("error: {} of {cells} cells failed", failures.len());
    for f in failures {
        eprintln!("  {}: {}", f.cell, f.error);
    }
    ExitCode::FAILURE
}

fn print_predictions(outcome: &SweepOutcome) {
    for p in &outcome.predictions {
        eprintln!(
            "{} {:>8}: sigma_g2 = {:.4} (sd {:.4}, {} draws), eta = {:.4} (per-draw mean {:.4}, sd {:.4})",
            p.cell, p.method, p.sigma_g2, p.sigma_g2_sd, p.draws, p.eta, p.eta_draw_mean, p.eta_draw_sd
        );
    }
}

fn grid_command(cfg: &ExperimentConfig, simulate: bool) -> Result<ExitCode> {
    cfg.validate_settings()?;
    for note in cfg.rounding_notes() {
        eprintln!("note: {note}");
    }
    let outcome = if simulate { run_sweep(cfg)? } else { predict(cfg)? };
    print_predictions(&outcome);
    write_records(&outcome.records, cfg.format, cfg.out.as_deref())?;
    Ok(report_failures(&outcome.failures, cfg.grid.len()))
}

fn simulate_command(cfg: &ExperimentConfig) -> Result<ExitCode> {
    cfg.validate_settings()?;
    let cells = cfg.grid.cells();
    let [cell] = cells.as_slice() else {
        return Err(Error::Config(format!(
            "simulate runs a single cell; the grid has {} (use sweep)",
            cells.len()
        )));
    };
    let params = cfg.params(cell)?;
    for note in cfg.rounding_notes() {
        eprintln!("note: {note}");
    }
    eprintln!(
        "cell {cell}: K = {}, N = {}, P = {}, M = {}, M_t = {}, trials = {}, seed = {}",
        params.users, params.spreading_gain, params.channel_order, params.block_len, params.training_len, cfg.trials, cfg.seed
    );
    let results = match run_cell(cfg, cell) {
        Ok(r) => r,
        Err(error) => return Ok(report_failures(&[CellFailure { cell: *cell, error }], 1)),
    };
    let predictions = match predict_cell(cfg, cell) {
        Ok(p) => p,
        Err(error) => {
            eprintln!("warning: analytic prediction failed: {error}");
            Vec::new()
        }
    };
    let methods = cfg.estimator.methods();
    let records = aggregate(cell, &params, &results, &predictions, &methods);
    for rec in &records {
        eprintln!(
            "{:>8}: sigma_g2 emp {:.4} +- {:.4}, ana {:.4}; eta emp {:.4}, ana {:.4}",
            rec.estimator, rec.sigma_g2_emp, rec.sigma_g2_se, rec.sigma_g2_ana, rec.eta_emp, rec.eta_ana
        );
        let diags: Vec<_> = results.iter().flat_map(|r| r.diagnostics[&rec.estimator].iter()).collect();
        match rec.estimator {
            Method::Mm => {
                let n = diags.len() as f64;
                let iters = diags.iter().map(|d| d.iterations as f64).sum::<f64>() / n;
                let stuck = diags.iter().filter(|d| !d.converged).count();
                let cost = diags.iter().map(|d| d.final_cost).sum::<f64>() / n;
                let w = diags.first().and_then(|d| d.weight).unwrap_or(f64::NAN);
                eprintln!(
                    "          w = {w:.4}, mean iterations {iters:.2}, mean final cost {cost:.4e}, not converged {stuck}/{}",
                    diags.len()
                );
            }
            Method::Subspace => {
                let omegas: Vec<f64> = diags.iter().filter_map(|d| d.omega).collect();
                let mean = omegas.iter().sum::<f64>() / omegas.len() as f64;
                let rule = diags.first().and_then(|d| d.omega_rule);
                eprintln!("          omega rule {rule:?}, mean omega {mean:.4}");
            }
            Method::Training => {}
        }
    }
    write_records(&records, cfg.format, cfg.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Predict(c) => c.resolve().and_then(|cfg| grid_command(&cfg, false)),
        Command::Sweep(c) => c.resolve().and_then(|cfg| grid_command(&cfg, true)),
        Command::Simulate(c) => c.resolve().and_then(|cfg| simulate_command(&cfg)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

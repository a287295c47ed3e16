//! Experiment configuration: a flat TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimators::{Method, OmegaRule, TrainingMethod};
use crate::model::{SynthesisMode, SystemParams};
use crate::sos::SolveMode;

/// Which estimators a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorChoice {
    Training,
    Mm,
    Subspace,
    #[default]
    All,
}

impl EstimatorChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            EstimatorChoice::Training => vec![Method::Training],
            EstimatorChoice::Mm => vec![Method::Mm],
            EstimatorChoice::Subspace => vec![Method::Subspace],
            EstimatorChoice::All => Method::ALL.to_vec(),
        }
    }
}

impl FromStr for EstimatorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(EstimatorChoice::Training),
            "mm" => Ok(EstimatorChoice::Mm),
            "subspace" => Ok(EstimatorChoice::Subspace),
            "all" => Ok(EstimatorChoice::All),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Output format of sweep records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

/// Parse `oracle`, `plug-in` or a fixed weight in `[0, 1]`.
pub fn parse_omega(s: &str) -> Result<OmegaRule> {
    match s {
        "oracle" => Ok(OmegaRule::Oracle),
        "plug-in" | "plugin" => Ok(OmegaRule::PlugIn),
        other => {
            let w: f64 = other
                .parse()
                .map_err(|_| Error::Config(format!("omega must be 'oracle', 'plug-in' or a number, got '{other}'")))?;
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!("fixed omega {w} outside [0, 1]")));
            }
            Ok(OmegaRule::Fixed(w))
        }
    }
}

/// One grid point. `beta` and `alpha` are the requested values; the
/// simulated `K` and `M_t` are rounded from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub beta: f64,
    pub sigma_n2: f64,
    pub order: usize,
    pub alpha: f64,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "beta={} sigma_n2={} P={} alpha={}",
            self.beta, self.sigma_n2, self.order, self.alpha
        )
    }
}

/// Sweep values; every combination is one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub beta: Vec<f64>,
    pub sigma_n2: Vec<f64>,
    pub order: Vec<usize>,
    pub alpha: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            beta: vec![0.5],
            sigma_n2: vec![0.5],
            order: vec![3],
            alpha: vec![0.2],
        }
    }
}

impl Grid {
    /// Cells in row-major order over (beta, sigma_n2, P, alpha).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.len());
        for &beta in &self.beta {
            for &sigma_n2 in &self.sigma_n2 {
                for &order in &self.order {
                    for &alpha in &self.alpha {
                        out.push(Cell {
                            beta,
                            sigma_n2,
                            order,
                            alpha,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.beta.len() * self.sigma_n2.len() * self.order.len() * self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spreading_gain: usize,
    pub block_len: usize,
    pub grid: Grid,
    pub trials: usize,
    pub seed: u64,
    pub estimator: EstimatorChoice,
    pub sos_mode: SolveMode,
    pub synthesis: SynthesisMode,
    pub training: TrainingMethod,
    pub omega: OmegaRule,
    /// Channel draws averaged by the analytic predictions.
    pub analytic_draws: usize,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spreading_gain: 64,
            block_len: 400,
            grid: Grid::default(),
            trials: 100,
            seed: 0,
            estimator: EstimatorChoice::All,
            sos_mode: SolveMode::Identity,
            synthesis: SynthesisMode::IsiFree,
            training: TrainingMethod::Decorrelating,
            omega: OmegaRule::Oracle,
            analytic_draws: 200,
            workers: 1,
            out: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OmegaValue {
    Number(f64),
    Name(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    spreading_gain: Option<usize>,
    block_len: Option<usize>,
    beta: Option<OneOrMany<f64>>,
    sigma_n2: Option<OneOrMany<f64>>,
    #[serde(alias = "P")]
    channel_order: Option<OneOrMany<usize>>,
    alpha: Option<OneOrMany<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
    estimator: Option<String>,
    sos_mode: Option<String>,
    synthesis: Option<String>,
    training: Option<String>,
    omega: Option<OmegaValue>,
    analytic_draws: Option<usize>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
}

impl ExperimentConfig {
    /// Parse a TOML document; missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        if let Some(v) = file.spreading_gain {
            cfg.spreading_gain = v;
        }
        if let Some(v) = file.block_len {
            cfg.block_len = v;
        }
        if let Some(v) = file.beta {
            cfg.grid.beta = v.into_vec();
        }
        if let Some(v) = file.sigma_n2 {
            cfg.grid.sigma_n2 = v.into_vec();
        }
        if let Some(v) = file.channel_order {
            cfg.grid.order = v.into_vec();
        }
        if let Some(v) = file.alpha {
            cfg.grid.alpha = v.into_vec();
        }
        if let Some(v) = file.trials {
            cfg.trials = v;
        }
        if let Some(v) = file.seed {
            cfg.seed = v;
        }
        if let Some(v) = file.estimator {
            cfg.estimator = v.parse()?;
        }
        if let Some(v) = file.sos_mode {
            cfg.sos_mode = v.parse()?;
        }
        if let Some(v) = file.synthesis {
            cfg.synthesis = v.parse()?;
        }
        if let Some(v) = file.training {
            cfg.training = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        }
        if let Some(v) = file.omega {
            cfg.omega = match v {
                OmegaValue::Number(w) => parse_omega(&w.to_string())?,
                OmegaValue::Name(s) => parse_omega(&s)?,
            };
        }
        if let Some(v) = file.analytic_draws {
            cfg.analytic_draws = v;
        }
        if let Some(v) = file.workers {
            cfg.workers = v;
        }
        if let Some(v) = file.out {
            cfg.out = Some(v);
        }
        if let Some(v) = file.format {
            cfg.format = v.parse()?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Check the grid and run settings, including every cell's parameters.
    pub fn validate(&self) -> Result<()> {
        self.validate_settings()?;
        for cell in self.grid.cells() {
            self.params(&cell).map_err(|e| Error::Config(format!("cell {cell}: {e}")))?;
        }
        Ok(())
    }

    /// Check the run settings and grid values without building cells; cells
    /// that cannot be simulated are reported per cell by the sweep.
    pub fn validate_settings(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.analytic_draws == 0 {
            return Err(Error::Config("analytic_draws must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            match v.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                Some(x) => Err(Error::Config(format!("{name} value {x} must be positive"))),
                None => Ok(()),
            }
        };
        positive("beta", &self.grid.beta)?;
        positive("sigma_n2", &self.grid.sigma_n2)?;
        positive("alpha", &self.grid.alpha)?;
        if let Some(a) = self.grid.alpha.iter().find(|a| **a >= 1.0) {
            return Err(Error::Config(format!("alpha value {a} must be below 1")));
        }
        if self.grid.order.contains(&0) {
            return Err(Error::Config("channel order must be at least 1".into()));
        }
        Ok(())
    }

    /// System parameters of a cell with `K = round(beta N)` and
    /// `M_t = round(alpha M)`.
    pub fn params(&self, cell: &Cell) -> Result<SystemParams> {
        let users = (cell.beta * self.spreading_gain as f64).round() as usize;
        let training = (cell.alpha * self.block_len as f64).round() as usize;
        if users == 0 {
            return Err(Error::InvalidParams(format!("beta = {} rounds to zero users", cell.beta)));
        }
        if training == 0 || training >= self.block_len {
            return Err(Error::InvalidParams(format!(
                "alpha = {} rounds to M_t = {training} of M = {}",
                cell.alpha, self.block_len
            )));
        }
        SystemParams::new(users, self.spreading_gain, cell.order, self.block_len, training, cell.sigma_n2)
    }

    /// Human-readable notes for cells whose `K` or `M_t` had to be rounded.
    pub fn rounding_notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        for cell in self.grid.cells() {
            let k = cell.beta * self.spreading_gain as f64;
            let mt = cell.alpha * self.block_len as f64;
            if (k - k.round()).abs() > 1e-9 {
                notes.push(format!("cell {cell}: K = {k} rounded to {}", k.round()));
            }
            if (mt - mt.round()).abs() > 1e-9 {
                notes.push(format!("cell {cell}: M_t = {mt} rounded to {}", mt.round()));
            }
        }
        notes
    }
}

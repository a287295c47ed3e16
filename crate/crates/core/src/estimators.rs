//! Training-only, moment-matching and subspace channel estimators.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::optimal_omega;
use crate::error::{Error, Result};
use crate::linalg::{from_real, hermitian_condition, to_real, unvec};
use crate::model::{correlate_window, CodeBook, ReceivedBlock, SymbolFrame, SystemParams};
use crate::moments::MatchingCost;
use crate::sos::{free_vars, hermitianize_vec, stacked_codes};

/// Which estimator produced a channel estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Training,
    Mm,
    Subspace,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Training, Method::Mm, Method::Subspace];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Training => "training",
            Method::Mm => "mm",
            Method::Subspace => "subspace",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Method::Training),
            "mm" => Ok(Method::Mm),
            "subspace" => Ok(Method::Subspace),
            other => Err(Error::InvalidParams(format!("unknown estimator `{other}`"))),
        }
    }
}

/// How the training estimate is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMethod {
    /// Joint least squares over all users (removes the known-symbol MAI).
    #[default]
    Decorrelating,
    /// Symbol-conjugated despreading correlator, one user at a time.
    Correlator,
}

impl FromStr for TrainingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decorrelating" => Ok(TrainingMethod::Decorrelating),
            "correlator" => Ok(TrainingMethod::Correlator),
            other => Err(Error::InvalidParams(format!("unknown training method `{other}`"))),
        }
    }
}

/// Per-user training estimates `g_bar_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingEstimate {
    pub g_bar: Vec<DVector<Complex64>>,
    /// `sigma_n^2 / M_t`.
    pub effective_noise: f64,
}

/// Training estimate with the default (decorrelating) method.
pub fn training_estimate(
    received: &ReceivedBlock,
    codes: &CodeBook,
    symbols: &SymbolFrame,
    params: &SystemParams,
) -> Result<TrainingEstimate> {
    training_estimate_with(received, codes, symbols, params, TrainingMethod::default())
}

pub fn training_estimate_with(
    received: &ReceivedBlock,
    codes: &CodeBook,
    symbols: &SymbolFrame,
    params: &SystemParams,
    method: TrainingMethod,
) -> Result<TrainingEstimate> {
    let mt = params.training_len;
    if mt == 0 {
        return Err(Error::Degenerate("no training symbols (M_t = 0)".into()));
    }
    if received.symbols() < mt || codes.symbols() < mt || symbols.symbols() < mt {
        return Err(Error::DimensionMismatch("block shorter than the training segment".into()));
    }
    if received.window_len() != params.window_len() || codes.users() != params.users {
        return Err(Error::DimensionMismatch("received block and parameters disagree".into()));
    }
    let g_bar = match method {
        TrainingMethod::Correlator => correlator(received, codes, symbols, params),
        TrainingMethod::Decorrelating => decorrelator(received, codes, symbols, params)?,
    };
    Ok(TrainingEstimate {
        g_bar,
        effective_noise: params.noise_var / mt as f64,
    })
}

fn correlator(
    received: &ReceivedBlock,
    codes: &CodeBook,
    symbols: &SymbolFrame,
    params: &SystemParams,
) -> Vec<DVector<Complex64>> {
    let order = params.channel_order;
    let mt = params.training_len;
    let mut a = vec![Complex64::new(0.0, 0.0); order];
    (0..params.users)
        .map(|k| {
            let mut acc = DVector::<Complex64>::zeros(order);
            for m in 0..mt {
                correlate_window(codes.code(k, m), received.window(m), &mut a);
                let x = symbols.get(k, m).conj();
                for p in 0..order {
                    acc[p] += x * a[p];
                }
            }
            acc / Complex64::new(mt as f64, 0.0)
        })
        .collect()
}

fn decorrelator(
    received: &ReceivedBlock,
    codes: &CodeBook,
    symbols: &SymbolFrame,
    params: &SystemParams,
) -> Result<Vec<DVector<Complex64>>> {
    let order = params.channel_order;
    let users = params.users;
    let dim = users * order;
    let mut gram = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    for m in 0..params.training_len {
        let s = stacked_codes(codes, m, order);
        let g = &s * s.transpose();
        let r = received.window(m);
        let x = symbols.symbol(m);
        for i in 0..users {
            let xi = x[i].conj();
            for p in 0..order {
                let row = s.row(i * order + p);
                let corr: Complex64 = row.iter().zip(r).map(|(c, z)| z * *c).sum();
                rhs[i * order + p] += xi * corr;
            }
            for j in 0..users {
                let xij = xi * x[j];
                for q in 0..order {
                    for p in 0..order {
                        gram[(i * order + p, j * order + q)] += xij * g[(i * order + p, j * order + q)];
                    }
                }
            }
        }
    }
    let chol = Cholesky::new(gram.clone()).ok_or_else(|| Error::SingularGram {
        condition: hermitian_condition(&gram),
    })?;
    let sol = chol.solve(&rhs);
    Ok((0..users).map(|k| sol.rows(k * order, order).into_owned()).collect())
}

/// Moment-matching weight
/// `w = (1 - alpha) sigma^2 / ((1 - alpha) sigma^2 + alpha sigma_d^2)`.
pub fn weight_w(alpha: f64, noise_var: f64, sigma_d2: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if sigma_d2.is_infinite() {
        return Ok(0.0);
    }
    let num = (1.0 - alpha) * noise_var;
    let den = num + alpha * sigma_d2;
    if den == 0.0 {
        return Err(Error::InvalidParams("weight undefined with zero noise and zero SOS variance".into()));
    }
    Ok(num / den)
}

/// How the subspace combining weight was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum OmegaRule {
    /// `omega_opt` from the true channel.
    #[default]
    Oracle,
    /// `omega_opt` with `g_bar` in place of the true channel.
    PlugIn,
    Fixed(f64),
}

impl OmegaRule {
    /// Resolve to a weight. `truth` is required by [`OmegaRule::Oracle`].
    pub fn resolve(
        self,
        truth: Option<&DVector<Complex64>>,
        g_bar: &DVector<Complex64>,
        params: &SystemParams,
    ) -> Result<f64> {
        match self {
            OmegaRule::Fixed(w) => Ok(w),
            OmegaRule::Oracle => {
                let g = truth.ok_or_else(|| Error::InvalidParams("oracle omega needs the true channel".into()))?;
                optimal_omega(g, params)
            }
            OmegaRule::PlugIn => {
                if g_bar.norm_squared() == 0.0 {
                    return Ok(0.0);
                }
                optimal_omega(g_bar, params)
            }
        }
    }
}

/// Solver and combining diagnostics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// False when the iteration cap was hit.
    pub converged: bool,
    pub weight: Option<f64>,
    pub omega: Option<f64>,
    pub omega_rule: Option<OmegaRule>,
}

/// One user's channel estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiblindEstimate {
    pub g_hat: DVector<Complex64>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

/// Damped Gauss-Newton settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmOptions {
    pub max_iter: usize,
    /// Stop when the relative cost decrease falls below this.
    pub rel_tol: f64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Smallest step fraction tried before giving up on a direction.
    pub step_floor: f64,
}

impl Default for MmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-10,
            grad_tol: 1e-8,
            step_floor: 1e-8,
        }
    }
}

/// Wrap a training estimate as a [`SemiblindEstimate`].
pub fn training_only(g_bar: &DVector<Complex64>) -> SemiblindEstimate {
    SemiblindEstimate {
        g_hat: g_bar.clone(),
        method: Method::Training,
        diagnostics: Diagnostics {
            converged: true,
            ..Diagnostics::default()
        },
    }
}

/// Minimize `w ||vec(g g^H) - d||^2 + (1 - w) ||g - g_bar||^2` from `g_bar`.
pub fn mm_semiblind(
    g_bar: &DVector<Complex64>,
    d_hat: &DVector<Complex64>,
    weight: f64,
    opts: &MmOptions,
) -> Result<SemiblindEstimate> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::InvalidParams(format!("weight {weight} outside [0, 1]")));
    }
    let order = g_bar.len();
    if d_hat.len() != order * order {
        return Err(Error::DimensionMismatch(format!(
            "SOS vector of length {} for channel order {order}",
            d_hat.len()
        )));
    }
    let cost = MatchingCost::new(weight, to_real(g_bar), free_vars(&hermitianize_vec(d_hat))?);
    let (theta, diagnostics) = gauss_newton(&cost, to_real(g_bar), opts);
    Ok(SemiblindEstimate {
        g_hat: from_real(&theta),
        method: Method::Mm,
        diagnostics: Diagnostics {
            weight: Some(weight),
            ..diagnostics
        },
    })
}

fn gauss_newton(cost: &MatchingCost, mut theta: DVector<f64>, opts: &MmOptions) -> (DVector<f64>, Diagnostics) {
    let n = theta.len();
    let mut rho = cost.residuals(&theta);
    let mut current = rho.norm_squared();
    let mut history = vec![current];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let jac = cost.residual_jacobian(&theta);
        let grad = jac.transpose() * &rho * 2.0;
        if grad.norm() < opts.grad_tol {
            converged = true;
            break;
        }
        let mut normal = jac.transpose() * &jac;
        // Tiny ridge: at w = 1 the global phase is a null direction.
        let ridge = 1e-12 * normal.diagonal().amax().max(1.0);
        for i in 0..n {
            normal[(i, i)] += ridge;
        }
        let Some(chol) = Cholesky::new(normal) else {
            break;
        };
        let step = chol.solve(&(jac.transpose() * &rho)) * -1.0;
        iterations += 1;

        let mut t = 1.0;
        let mut accepted = None;
        while t >= opts.step_floor {
            let trial = &theta + &step * t;
            let r = cost.residuals(&trial);
            let c = r.norm_squared();
            if c <= current {
                accepted = Some((trial, r, c));
                break;
            }
            t *= 0.5;
        }
        let Some((next, r, c)) = accepted else {
            // No decrease along a descent direction: stationary to precision.
            converged = true;
            break;
        };
        let decrease = current - c;
        theta = next;
        rho = r;
        current = c;
        history.push(c);
        if current == 0.0 || decrease <= opts.rel_tol * history[history.len() - 2] {
            converged = true;
            break;
        }
    }
    debug_assert!(history.windows(2).all(|w| w[1] <= w[0]));
    (
        theta,
        Diagnostics {
            iterations,
            final_cost: current,
            cost_history: history,
            converged,
            ..Diagnostics::default()
        },
    )
}

/// Unit eigenvector of the largest eigenvalue of `vec^{-1}(d_hat)`, with the
/// first non-negligible entry made real positive.
pub fn principal_eigvec(d_hat: &DVector<Complex64>) -> DVector<Complex64> {
    let order = (d_hat.len() as f64).sqrt().round() as usize;
    let m = unvec(&hermitianize_vec(d_hat), order);
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.max();
    let tol = 1e-12 * top.abs().max(1.0);
    let mut best: Option<DVector<Complex64>> = None;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < top - tol {
            continue;
        }
        let u = normalize_phase(eig.eigenvectors.column(i).into_owned());
        best = match best {
            Some(b) if lex_cmp(&b, &u).is_ge() => Some(b),
            _ => Some(u),
        };
    }
    best.expect("eigendecomposition of a non-empty matrix")
}

fn normalize_phase(u: DVector<Complex64>) -> DVector<Complex64> {
    let u = u.normalize();
    match u.iter().find(|z| z.norm() > 1e-12) {
        Some(z) => {
            let phase = z.conj() / z.norm();
            u * phase
        }
        None => u,
    }
}

fn lex_cmp(a: &DVector<Complex64>, b: &DVector<Complex64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// `g_hat = omega (u^H g_bar) u + (1 - omega) g_bar`.
pub fn subspace_semiblind(
    g_bar: &DVector<Complex64>,
    d_hat: &DVector<Complex64>,
    omega: f64,
) -> Result<SemiblindEstimate> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidParams(format!("omega {omega} outside [0, 1]")));
    }
    if d_hat.len() != g_bar.len() * g_bar.len() {
        return Err(Error::DimensionMismatch("SOS vector does not match the channel order".into()));
    }
    let u = principal_eigvec(d_hat);
    Ok(SemiblindEstimate {
        g_hat: combine(g_bar, &u, omega),
        method: Method::Subspace,
        diagnostics: Diagnostics {
            converged: true,
            omega: Some(omega),
            ..Diagnostics::default()
        },
    })
}

fn combine(g_bar: &DVector<Complex64>, u: &DVector<Complex64>, omega: f64) -> DVector<Complex64> {
    let proj = u.dotc(g_bar);
    u * (proj * omega) + g_bar * Complex64::new(1.0 - omega, 0.0)
}

//! Large-system error predictions.
//!
//! All covariances here are scaled by the block length `M` unless noted, so
//! they are the limits of `M * E{...}`. Channel-dependent predictions take
//! the realized `g` rather than its expectation.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimators::weight_w;
use crate::linalg::{block_diag, sym_condition, to_real, vec_position};
use crate::model::SystemParams;
use crate::moments::{moment_jacobian, MatchingCost};
use crate::sos::{free_layout, FreeVar};

pub use crate::moments::moment_jacobian as observation_jacobian;

/// Predicted covariance of one user's SOS estimation error.
#[derive(Debug, Clone, PartialEq)]
pub struct SosErrorModel {
    /// `M E{dd dd^H}`, `P^2 x P^2`.
    pub sigma_dd: DMatrix<Complex64>,
    /// Channel-dependent part multiplying the noise variance.
    pub omega: DMatrix<Complex64>,
    /// Average per-entry variance over users and channel draws.
    pub sigma_d2: f64,
}

/// Real covariance of the stacked observation `z = (g_bar, d_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealErrorModel {
    /// `E{dz dz^T}` (not `M`-scaled): training block `sigma^2 / (2 M_t) I`,
    /// SOS block `Sigma_df / (M - M_t)`.
    pub sigma_zz: DMatrix<f64>,
    /// `M`-scaled real covariance of the free SOS variables.
    pub sigma_df: DMatrix<f64>,
}

/// Error covariance of the moment-matching estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MmCovariance {
    /// `M E{dg dg^T}` over `(Re g, Im g)`.
    pub sigma_dg: DMatrix<f64>,
    /// `trace(sigma_dg) / P`.
    pub sigma_g2: f64,
    /// Weight used in the cost.
    pub weight: f64,
}

fn nonzero(g: &DVector<Complex64>) -> Result<()> {
    if g.is_empty() || g.norm_squared() == 0.0 {
        Err(Error::ZeroChannel)
    } else {
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// Constant part of the SOS error covariance:
/// `2 beta sigma^2 + sigma^4 + beta^2 + 2 beta / P`.
pub fn sos_floor(beta: f64, noise_var: f64, order: usize) -> f64 {
    2.0 * beta * noise_var + noise_var * noise_var + beta * beta + 2.0 * beta / order as f64
}

/// The channel-dependent matrix `Omega_k`.
pub fn omega_matrix(g: &DVector<Complex64>) -> DMatrix<Complex64> {
    let order = g.len();
    let n = order * order;
    DMatrix::from_fn(n, n, |i, j| {
        let (ri, ci) = vec_position(i, order);
        let (rj, cj) = vec_position(j, order);
        if i == j {
            Complex64::new(g[ci].norm_sqr() + g[ri].norm_sqr(), 0.0)
        } else if ri == rj {
            g[ci].conj() * g[cj]
        } else if ci == cj {
            g[ri] * g[rj].conj()
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Predicted `M E{dd_k dd_k^H}` for one user.
pub fn predict_sos_covariance(g: &DVector<Complex64>, params: &SystemParams) -> Result<SosErrorModel> {
    nonzero(g)?;
    let order = g.len();
    let omega = omega_matrix(g);
    let floor = sos_floor(params.beta(), params.noise_var, order);
    let n = order * order;
    let sigma_dd = DMatrix::<Complex64>::identity(n, n) * Complex64::new(floor, 0.0)
        + &omega * Complex64::new(params.noise_var, 0.0);
    Ok(SosErrorModel {
        sigma_dd,
        omega,
        sigma_d2: average_sos_variance(params.beta(), params.noise_var, order),
    })
}

/// `sigma_d^2 = 2 beta sigma^2 + sigma^4 + beta^2 + 2 (beta + sigma^2) / P`.
pub fn average_sos_variance(beta: f64, noise_var: f64, order: usize) -> f64 {
    2.0 * beta * noise_var + noise_var * noise_var + beta * beta + 2.0 * (beta + noise_var) / order as f64
}

/// Pseudo-covariance `M E{dd dd^T}`: column `j` is column `pi(j)` of the
/// covariance, `pi` mapping a vec position to its transposed position.
pub fn sos_pseudo_covariance(sigma_dd: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = sigma_dd.nrows();
    let order = (n as f64).sqrt().round() as usize;
    DMatrix::from_fn(n, n, |i, j| {
        let (r, c) = vec_position(j, order);
        sigma_dd[(i, c + r * order)]
    })
}

/// Complex weight `w_u` with `free var u = Re(w_u . dd)`.
fn free_weights(order: usize) -> DMatrix<Complex64> {
    let layout = free_layout(order);
    let mut w = DMatrix::zeros(layout.len(), order * order);
    for (u, v) in layout.iter().enumerate() {
        w[(u, v.vec_index(order))] = match v {
            FreeVar::Im(..) => Complex64::new(0.0, -1.0),
            _ => Complex64::new(1.0, 0.0),
        };
    }
    w
}

/// Real covariance of the free variables from the complex covariance and
/// pseudo-covariance: `E{f_u f_v} = Re(w_u^T C w_v^* + w_u^T P w_v) / 2`.
pub fn free_covariance(sigma_dd: &DMatrix<Complex64>, pseudo: &DMatrix<Complex64>) -> DMatrix<f64> {
    let order = (sigma_dd.nrows() as f64).sqrt().round() as usize;
    let w = free_weights(order);
    let a = &w * sigma_dd * w.adjoint();
    let b = &w * pseudo * w.transpose();
    (a + b).map(|z| 0.5 * z.re)
}

/// Assemble the real covariance of `z = (g_bar, d_f)`.
pub fn real_covariance(
    sigma_dd: &DMatrix<Complex64>,
    pseudo: &DMatrix<Complex64>,
    params: &SystemParams,
) -> Result<RealErrorModel> {
    if params.training_len == 0 {
        return Err(Error::Degenerate("no training symbols (M_t = 0)".into()));
    }
    if params.training_len >= params.block_len {
        return Err(Error::Degenerate("no information symbols (M_t = M)".into()));
    }
    if sigma_dd.shape() != pseudo.shape() {
        return Err(Error::DimensionMismatch("covariance and pseudo-covariance shapes differ".into()));
    }
    let order = (sigma_dd.nrows() as f64).sqrt().round() as usize;
    let sigma_df = free_covariance(sigma_dd, pseudo);
    let train = DMatrix::identity(2 * order, 2 * order) * (params.noise_var / (2.0 * params.training_len as f64));
    let sos = &sigma_df / params.info_len() as f64;
    Ok(RealErrorModel {
        sigma_zz: block_diag(&train, &sos),
        sigma_df,
    })
}

/// `M E{sin^2 theta}` between `g` and the principal eigenvector of the SOS
/// estimate.
pub fn predict_subspace_angle(g: &DVector<Complex64>, params: &SystemParams) -> Result<f64> {
    nonzero(g)?;
    let order = g.len() as f64;
    let n2 = g.norm_squared();
    let beta = params.beta();
    let s = params.noise_var;
    Ok((order - 1.0) * ((2.0 * beta + n2) * s + s * s + beta * beta + 2.0 * beta / order) / (n2 * n2))
}

struct SubspaceTerms {
    /// Coefficient of `omega^2`.
    penalty: f64,
    /// Coefficient of `(1 - omega)^2`.
    residual: f64,
    floor: f64,
}

impl SubspaceTerms {
    fn new(norm2: f64, theta2: f64, order: usize, noise_var: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let p = order as f64;
        Ok(Self {
            penalty: norm2 * (1.0 + 1.0 / p) * theta2 / ((1.0 - alpha) * p),
            residual: (p - 1.0) * noise_var / (p * alpha),
            floor: noise_var / (p * alpha),
        })
    }

    fn mse(&self, omega: f64) -> f64 {
        omega * omega * self.penalty + (1.0 - omega) * (1.0 - omega) * self.residual + self.floor
    }

    fn argmin(&self, order: usize) -> f64 {
        let den = self.penalty + self.residual;
        if den == 0.0 {
            // P = 1, or a perfect subspace without noise: the weight is immaterial.
            return if order == 1 { 0.0 } else { 1.0 };
        }
        (self.residual / den).clamp(0.0, 1.0)
    }
}

fn subspace_terms(g: &DVector<Complex64>, params: &SystemParams) -> Result<SubspaceTerms> {
    check_alpha(params.alpha())?;
    let theta2 = predict_subspace_angle(g, params)?;
    SubspaceTerms::new(g.norm_squared(), theta2, g.len(), params.noise_var, params.alpha())
}

/// Subspace MSE with the angle variance `theta2 = M E{sin^2 theta}` given
/// explicitly (`theta2 = 0` is a perfect subspace).
pub fn subspace_mse_given_angle(
    norm2: f64,
    theta2: f64,
    order: usize,
    noise_var: f64,
    alpha: f64,
    omega: f64,
) -> Result<f64> {
    Ok(SubspaceTerms::new(norm2, theta2, order, noise_var, alpha)?.mse(omega))
}

/// [`optimal_omega`] with the angle variance given explicitly.
pub fn optimal_omega_given_angle(norm2: f64, theta2: f64, order: usize, noise_var: f64, alpha: f64) -> Result<f64> {
    Ok(SubspaceTerms::new(norm2, theta2, order, noise_var, alpha)?.argmin(order))
}

/// Per-coefficient `M`-scaled MSE of the subspace estimator at weight `omega`.
pub fn predict_subspace_mse(g: &DVector<Complex64>, params: &SystemParams, omega: f64) -> Result<f64> {
    Ok(subspace_terms(g, params)?.mse(omega))
}

/// Minimizer of [`predict_subspace_mse`] over `omega`, clamped to `[0, 1]`.
pub fn optimal_omega(g: &DVector<Complex64>, params: &SystemParams) -> Result<f64> {
    Ok(subspace_terms(g, params)?.argmin(g.len()))
}

/// Shared linearization of the moment-matching estimator at the truth.
fn mm_linearization(g: &DVector<Complex64>, weight: f64) -> Result<DMatrix<f64>> {
    let theta = to_real(g);
    let cost = MatchingCost::new(weight, theta.clone(), crate::moments::free_moments(&theta));
    let hess = cost.hessian(&theta);
    let dfdz = cost.observation_jacobian(&theta);
    let chol = Cholesky::new(hess.clone()).ok_or_else(|| Error::SingularHessian {
        condition: sym_condition(&hess),
    })?;
    // dPsi/dz = -H^{-1} dF/dz
    Ok(-chol.solve(&dfdz))
}

/// Moment-matching error covariance with an explicit cost weight `w`.
pub fn mm_error_covariance_with_weight(
    g: &DVector<Complex64>,
    params: &SystemParams,
    weight: f64,
) -> Result<MmCovariance> {
    nonzero(g)?;
    let model = predict_sos_covariance(g, params)?;
    let pseudo = sos_pseudo_covariance(&model.sigma_dd);
    let real = real_covariance(&model.sigma_dd, &pseudo, params)?;
    let psi = mm_linearization(g, weight)?;
    let sigma_dg = &psi * (&real.sigma_zz * params.block_len as f64) * psi.transpose();
    let sigma_dg = (&sigma_dg + sigma_dg.transpose()) * 0.5;
    let sigma_g2 = sigma_dg.trace() / g.len() as f64;
    Ok(MmCovariance {
        sigma_dg,
        sigma_g2,
        weight,
    })
}

/// Moment-matching error covariance with the standard weight
/// `w = (1 - alpha) sigma^2 / ((1 - alpha) sigma^2 + alpha sigma_d^2)`.
pub fn mm_error_covariance(g: &DVector<Complex64>, params: &SystemParams) -> Result<MmCovariance> {
    let sigma_d2 = average_sos_variance(params.beta(), params.noise_var, g.len());
    let w = weight_w(params.alpha(), params.noise_var, sigma_d2)?;
    mm_error_covariance_with_weight(g, params, w)
}

/// `M`-scaled covariance bound of the asymptotically optimal moment
/// estimator, `(A^T Sigma_z^{-1} A)^{-1}` with `A = dz/dg`.
pub fn mm_lower_bound(g: &DVector<Complex64>, params: &SystemParams) -> Result<DMatrix<f64>> {
    let order = g.len();
    let n = 2 * order;
    let s = params.noise_var;
    if params.training_len == params.block_len {
        // Only the first moment carries information.
        if s == 0.0 {
            return Err(Error::SingularCovariance);
        }
        return Ok(DMatrix::identity(n, n) * (s / (2.0 * params.alpha())));
    }
    nonzero(g)?;
    let model = predict_sos_covariance(g, params)?;
    let pseudo = sos_pseudo_covariance(&model.sigma_dd);
    let sigma_df = free_covariance(&model.sigma_dd, &pseudo);
    let alpha = params.alpha();
    let chol_df = Cholesky::new(sigma_df).ok_or(Error::SingularCovariance)?;
    let a = moment_jacobian(g);
    let lower = a.rows(n, order * order).into_owned();
    // info = (2 alpha / sigma^2) I + (1 - alpha) A_d^T Sigma_df^{-1} A_d
    let mut info = lower.transpose() * chol_df.solve(&lower) * (1.0 - alpha);
    if params.training_len > 0 {
        if s == 0.0 {
            return Err(Error::SingularCovariance);
        }
        info += DMatrix::identity(n, n) * (2.0 * alpha / s);
    }
    let info = (&info + info.transpose()) * 0.5;
    let chol = Cholesky::new(info).ok_or(Error::SingularInformation)?;
    let bound = chol.inverse();
    Ok((&bound + bound.transpose()) * 0.5)
}

/// Blind estimation efficiency `(sigma^2 / sigma_g^2 - alpha) / (1 - alpha)`.
pub fn efficiency(sigma_g2: f64, noise_var: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(sigma_g2 > 0.0) {
        return Err(Error::InvalidParams(format!("sigma_g^2 = {sigma_g2} must be positive")));
    }
    Ok((noise_var / sigma_g2 - alpha) / (1.0 - alpha))
}

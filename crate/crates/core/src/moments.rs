//! Real parametrization of the channel and of its second-order moments.
//!
//! A channel `g in C^P` is handled as `theta = (Re g, Im g) in R^(2P)`. Its
//! second-order statistics enter through the `P^2` free real variables of
//! `vec(g g^H)` in the [`free_layout`](crate::sos::free_layout) order. The
//! moment-matching cost
//!
//! ```text
//! J(g) = w ||vec(g g^H) - d||^2 + (1 - w) ||g - g_bar||^2
//! ```
//!
//! is a nonlinear least-squares objective in `theta`, where off-diagonal
//! free variables count twice because each appears in two matrix entries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::linalg::to_real;
use crate::sos::{free_layout, FreeVar};

/// Free variables of `vec(g g^H)` as a function of `theta = (Re g, Im g)`.
pub fn free_moments(theta: &DVector<f64>) -> DVector<f64> {
    let order = theta.len() / 2;
    let (a, b) = (theta.rows(0, order), theta.rows(order, order));
    let layout = free_layout(order);
    DVector::from_iterator(
        layout.len(),
        layout.iter().map(|v| match *v {
            FreeVar::Diag(p) => a[p] * a[p] + b[p] * b[p],
            FreeVar::Re(i, j) => a[i] * a[j] + b[i] * b[j],
            FreeVar::Im(i, j) => b[i] * a[j] - a[i] * b[j],
        }),
    )
}

/// `d(free moments) / d theta`, `P^2 x 2P`.
pub fn free_moment_jacobian(theta: &DVector<f64>) -> DMatrix<f64> {
    let order = theta.len() / 2;
    let (a, b) = (theta.rows(0, order), theta.rows(order, order));
    let layout = free_layout(order);
    let mut jac = DMatrix::zeros(layout.len(), 2 * order);
    for (u, v) in layout.iter().enumerate() {
        match *v {
            FreeVar::Diag(p) => {
                jac[(u, p)] = 2.0 * a[p];
                jac[(u, order + p)] = 2.0 * b[p];
            }
            FreeVar::Re(i, j) => {
                jac[(u, i)] = a[j];
                jac[(u, j)] = a[i];
                jac[(u, order + i)] = b[j];
                jac[(u, order + j)] = b[i];
            }
            FreeVar::Im(i, j) => {
                jac[(u, i)] = -b[j];
                jac[(u, j)] = b[i];
                jac[(u, order + i)] = a[j];
                jac[(u, order + j)] = -a[i];
            }
        }
    }
    jac
}

/// Hessian of one free moment with respect to theta (constant, the moments
/// are quadratic).
pub fn free_moment_hessian(var: FreeVar, order: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2 * order, 2 * order);
    let mut set = |r: usize, c: usize, v: f64| {
        h[(r, c)] += v;
        if r != c {
            h[(c, r)] += v;
        }
    };
    match var {
        FreeVar::Diag(p) => {
            set(p, p, 2.0);
            set(order + p, order + p, 2.0);
        }
        FreeVar::Re(i, j) => {
            set(i, j, 1.0);
            set(order + i, order + j, 1.0);
        }
        FreeVar::Im(i, j) => {
            set(order + i, j, 1.0);
            set(i, order + j, -1.0);
        }
    }
    h
}

/// Jacobian of the stacked observation `z = (theta, free moments)` with
/// respect to theta: identity on top, the moment Jacobian below.
pub fn moment_jacobian(g: &DVector<Complex64>) -> DMatrix<f64> {
    let theta = to_real(g);
    let order = g.len();
    let lower = free_moment_jacobian(&theta);
    let mut out = DMatrix::zeros(2 * order + order * order, 2 * order);
    out.view_mut((0, 0), (2 * order, 2 * order))
        .copy_from(&DMatrix::identity(2 * order, 2 * order));
    out.view_mut((2 * order, 0), (order * order, 2 * order)).copy_from(&lower);
    out
}

/// The moment-matching objective for one user.
#[derive(Debug, Clone)]
pub struct MatchingCost {
    weight: f64,
    order: usize,
    /// `(Re g_bar, Im g_bar)`.
    training: DVector<f64>,
    /// Free variables of the (Hermitian) SOS estimate.
    moments: DVector<f64>,
    multiplicity: DVector<f64>,
}

impl MatchingCost {
    /// `training` is the real-stacked training estimate, `moments` the free
    /// variables of the SOS estimate.
    pub fn new(weight: f64, training: DVector<f64>, moments: DVector<f64>) -> Self {
        let order = training.len() / 2;
        assert_eq!(moments.len(), order * order, "moment vector does not match the channel order");
        let multiplicity = DVector::from_iterator(
            order * order,
            free_layout(order).iter().map(|v| v.multiplicity()),
        );
        Self {
            weight,
            order,
            training,
            moments,
            multiplicity,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn training(&self) -> &DVector<f64> {
        &self.training
    }

    /// Observation vector `z = (g_bar, d_f)`.
    pub fn observation(&self) -> DVector<f64> {
        let n = 2 * self.order;
        DVector::from_fn(n + self.moments.len(), |i, _| {
            if i < n {
                self.training[i]
            } else {
                self.moments[i - n]
            }
        })
    }

    /// Same cost with the observation replaced.
    pub fn with_observation(&self, z: &DVector<f64>) -> Self {
        let n = 2 * self.order;
        Self {
            training: z.rows(0, n).into_owned(),
            moments: z.rows(n, z.len() - n).into_owned(),
            ..self.clone()
        }
    }

    /// Weighted residual vector `rho` with `J = ||rho||^2`.
    pub fn residuals(&self, theta: &DVector<f64>) -> DVector<f64> {
        let f = free_moments(theta);
        let m = f.len();
        let n = 2 * self.order;
        let sw = self.weight.sqrt();
        let st = (1.0 - self.weight).sqrt();
        DVector::from_fn(m + n, |i, _| {
            if i < m {
                sw * self.multiplicity[i].sqrt() * (f[i] - self.moments[i])
            } else {
                st * (theta[i - m] - self.training[i - m])
            }
        })
    }

    /// Jacobian of [`residuals`](Self::residuals).
    pub fn residual_jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let jf = free_moment_jacobian(theta);
        let m = jf.nrows();
        let n = 2 * self.order;
        let sw = self.weight.sqrt();
        let st = (1.0 - self.weight).sqrt();
        let mut jac = DMatrix::zeros(m + n, n);
        for u in 0..m {
            let s = sw * self.multiplicity[u].sqrt();
            for c in 0..n {
                jac[(u, c)] = s * jf[(u, c)];
            }
        }
        for i in 0..n {
            jac[(m + i, i)] = st;
        }
        jac
    }

    pub fn cost(&self, theta: &DVector<f64>) -> f64 {
        self.residuals(theta).norm_squared()
    }

    /// `F = dJ / d theta`.
    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let f = free_moments(theta);
        let jf = free_moment_jacobian(theta);
        let e = (&f - &self.moments).component_mul(&self.multiplicity);
        (jf.transpose() * e) * (2.0 * self.weight) + (theta - &self.training) * (2.0 * (1.0 - self.weight))
    }

    /// `dF / d theta`, including the second-order moment terms.
    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = 2 * self.order;
        let f = free_moments(theta);
        let jf = free_moment_jacobian(theta);
        let w_jf = DMatrix::from_fn(jf.nrows(), n, |u, c| self.multiplicity[u] * jf[(u, c)]);
        let mut h = jf.transpose() * w_jf;
        for (u, v) in free_layout(self.order).into_iter().enumerate() {
            let coef = self.multiplicity[u] * (f[u] - self.moments[u]);
            if coef != 0.0 {
                h += free_moment_hessian(v, self.order) * coef;
            }
        }
        h * (2.0 * self.weight) + DMatrix::identity(n, n) * (2.0 * (1.0 - self.weight))
    }

    /// `dF / dz` with `z = (g_bar, d_f)`, `2P x (2P + P^2)`.
    pub fn observation_jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = 2 * self.order;
        let jf = free_moment_jacobian(theta);
        let m = jf.nrows();
        let mut out = DMatrix::zeros(n, n + m);
        for i in 0..n {
            out[(i, i)] = -2.0 * (1.0 - self.weight);
        }
        for u in 0..m {
            let s = -2.0 * self.weight * self.multiplicity[u];
            for c in 0..n {
                out[(c, n + u)] = s * jf[(u, c)];
            }
        }
        out
    }
}

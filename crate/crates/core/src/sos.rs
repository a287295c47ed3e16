//! Moment-matching estimation of the per-user second-order statistics
//! `d_k = vec(g_k g_k^H)` from information-symbol windows.
//!
//! The normal equations are `T d = y` with
//!
//! ```text
//! T = (1/M) sum_m Q(m)^T Q(m),   Q_k(m) = C_k ⊗ C_k
//! y = (1/M) sum_m Q(m)^T [vec(r r^H) - sigma^2 vec(I)]
//! ```
//!
//! `Q(m)` is never formed. Block `(i, j)` of `Q^T Q` is `G_ij ⊗ G_ij` with
//! `G_ij = C_i^T C_j`, block `k` of `Q^T vec(r r^H)` is `vec(a_k a_k^H)` with
//! `a_k = C_k^T r`, and block `k` of `Q^T vec(I)` is `vec(G_kk)`.

use std::ops::Range;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, sym_condition, unvec, vec_of};
use crate::model::{convolve_window, correlate_window, ChannelRealization, CodeBook, ReceivedBlock};

/// Relative ridge added when the Cholesky factorization of `T` fails.
pub const RIDGE: f64 = 1e-8;
/// Relative residual target of the iterative solver.
pub const CG_TOLERANCE: f64 = 1e-8;
/// Iteration cap of the iterative solver.
pub const CG_MAX_ITER: usize = 500;

/// Assembled normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct SosSystem {
    pub users: usize,
    pub order: usize,
    /// Number of symbols averaged.
    pub symbols: usize,
    /// `T`, `P^2 K x P^2 K`; `None` when only `y` was assembled.
    pub gram: Option<DMatrix<f64>>,
    /// `y`, `P^2 K`.
    pub rhs: DVector<Complex64>,
}

impl SosSystem {
    /// 2-norm condition number of `T`.
    pub fn condition(&self) -> Result<f64> {
        self.gram.as_ref().map(sym_condition).ok_or(Error::MissingGram)
    }

    /// Block `k` of `y`.
    pub fn rhs_block(&self, user: usize) -> DVector<Complex64> {
        let b = self.order * self.order;
        self.rhs.rows(user * b, b).into_owned()
    }
}

fn check_inputs(codes: &CodeBook, received: &ReceivedBlock, range: &Range<usize>) -> Result<usize> {
    if range.is_empty() {
        return Err(Error::EmptyRange);
    }
    if range.end > codes.symbols() || range.end > received.symbols() {
        return Err(Error::DimensionMismatch(format!(
            "symbol range {range:?} exceeds the block ({} coded, {} received)",
            codes.symbols(),
            received.symbols()
        )));
    }
    let len = received.window_len();
    if len == 0 || len > codes.gain() {
        return Err(Error::DimensionMismatch("window length does not fit the code".into()));
    }
    Ok(codes.gain() - len + 1)
}

/// `C^T C` for one code word (`P x P`).
fn code_gram(code: &[f64], order: usize) -> DMatrix<f64> {
    let len = code.len() - order + 1;
    DMatrix::from_fn(order, order, |p, q| {
        let a = &code[order - 1 - p..order - 1 - p + len];
        let b = &code[order - 1 - q..order - 1 - q + len];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    })
}

/// Shifted-code matrix of one symbol: row `k*P + p` holds column `p` of
/// `C_k`, so `S S^T` stacks all `C_i^T C_j` and `S r` stacks all `C_k^T r`.
pub(crate) fn stacked_codes(codes: &CodeBook, symbol: usize, order: usize) -> DMatrix<f64> {
    let users = codes.users();
    let len = codes.gain() - order + 1;
    let mut s = DMatrix::zeros(users * order, len);
    for k in 0..users {
        let code = codes.code(k, symbol);
        for p in 0..order {
            let shifted = &code[order - 1 - p..order - 1 - p + len];
            for (i, &v) in shifted.iter().enumerate() {
                s[(k * order + p, i)] = v;
            }
        }
    }
    s
}

fn accumulate_rhs(
    rhs: &mut DVector<Complex64>,
    block: usize,
    a: &[Complex64],
    gram: &DMatrix<f64>,
    noise_var: f64,
) {
    let order = a.len();
    for c in 0..order {
        for r in 0..order {
            rhs[block + r + c * order] += a[r] * a[c].conj() - noise_var * gram[(r, c)];
        }
    }
}

/// Assemble `y` only (enough for the identity-T solver).
pub fn build_moment_vector(
    codes: &CodeBook,
    received: &ReceivedBlock,
    range: Range<usize>,
    noise_var: f64,
) -> Result<SosSystem> {
    let order = check_inputs(codes, received, &range)?;
    let users = codes.users();
    let b = order * order;
    let mut rhs = DVector::zeros(users * b);
    let mut a = vec![Complex64::new(0.0, 0.0); order];
    for m in range.clone() {
        let r = received.window(m);
        for k in 0..users {
            let code = codes.code(k, m);
            correlate_window(code, r, &mut a);
            accumulate_rhs(&mut rhs, k * b, &a, &code_gram(code, order), noise_var);
        }
    }
    let count = range.len();
    rhs /= Complex64::new(count as f64, 0.0);
    Ok(SosSystem {
        users,
        order,
        symbols: count,
        gram: None,
        rhs,
    })
}

/// Assemble both `T` and `y`.
pub fn build_normal_equations(
    codes: &CodeBook,
    received: &ReceivedBlock,
    range: Range<usize>,
    noise_var: f64,
) -> Result<SosSystem> {
    let order = check_inputs(codes, received, &range)?;
    let users = codes.users();
    let b = order * order;
    let dim = users * b;
    let mut t = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    let mut a = vec![Complex64::new(0.0, 0.0); order];

    for m in range.clone() {
        let s = stacked_codes(codes, m, order);
        let g = &s * s.transpose();
        let r = received.window(m);
        for k in 0..users {
            correlate_window(codes.code(k, m), r, &mut a);
            let gkk = g.view((k * order, k * order), (order, order)).into_owned();
            accumulate_rhs(&mut rhs, k * b, &a, &gkk, noise_var);
        }
        // Upper block triangle; mirrored below.
        for i in 0..users {
            for j in i..users {
                for b1 in 0..order {
                    for b2 in 0..order {
                        let col = j * b + b1 * order + b2;
                        for a1 in 0..order {
                            let g1 = g[(i * order + a1, j * order + b1)];
                            for a2 in 0..order {
                                let row = i * b + a1 * order + a2;
                                t[(row, col)] += g1 * g[(i * order + a2, j * order + b2)];
                            }
                        }
                    }
                }
            }
        }
    }

    for i in 0..users {
        for j in (i + 1)..users {
            for c in 0..b {
                for r in 0..b {
                    t[(j * b + c, i * b + r)] = t[(i * b + r, j * b + c)];
                }
            }
        }
    }
    let count = range.len() as f64;
    t /= count;
    rhs /= Complex64::new(count, 0.0);
    Ok(SosSystem {
        users,
        order,
        symbols: range.len(),
        gram: Some(t),
        rhs,
    })
}

/// `E{y | channel, codes}`, i.e. block `k` of `T d`, computed as
/// `(1/M) sum_m sum_j vec(b_kj b_kj^H)` with `b_kj = C_k^T C_j g_j`.
///
/// Symbol and noise averages are exact here; only the codes and the channel
/// are held fixed.
pub fn conditional_moment(
    codes: &CodeBook,
    channel: &ChannelRealization,
    range: Range<usize>,
) -> Result<Vec<DVector<Complex64>>> {
    if range.is_empty() {
        return Err(Error::EmptyRange);
    }
    let users = codes.users();
    let order = channel.order();
    if channel.users() != users || range.end > codes.symbols() || order == 0 || order >= codes.gain() {
        return Err(Error::DimensionMismatch("channel and codes disagree".into()));
    }
    let len = codes.gain() - order + 1;
    let b = order * order;
    let mut out = vec![DVector::<Complex64>::zeros(b); users];
    let mut h = vec![Complex64::new(0.0, 0.0); len];
    let mut h_re = DMatrix::<f64>::zeros(len, users);
    let mut h_im = DMatrix::<f64>::zeros(len, users);
    for m in range.clone() {
        for j in 0..users {
            convolve_window(codes.code(j, m), channel.taps[j].as_slice(), &mut h);
            for (i, z) in h.iter().enumerate() {
                h_re[(i, j)] = z.re;
                h_im[(i, j)] = z.im;
            }
        }
        let s = stacked_codes(codes, m, order);
        let br = &s * &h_re;
        let bi = &s * &h_im;
        for (k, acc) in out.iter_mut().enumerate() {
            for j in 0..users {
                for c in 0..order {
                    let bc = Complex64::new(br[(k * order + c, j)], bi[(k * order + c, j)]);
                    for r in 0..order {
                        let br_ = Complex64::new(br[(k * order + r, j)], bi[(k * order + r, j)]);
                        acc[r + c * order] += br_ * bc.conj();
                    }
                }
            }
        }
    }
    let scale = Complex64::new(range.len() as f64, 0.0);
    for v in &mut out {
        *v /= scale;
    }
    Ok(out)
}

/// How `T d = y` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// `d = y`, the large-system approximation `T = I`.
    #[default]
    Identity,
    /// Cholesky solve, with a small ridge on failure.
    Solve,
    /// Conjugate gradients started from `y`.
    Iterative,
}

impl FromStr for SolveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "solve" => Ok(Self::Solve),
            "iterative" => Ok(Self::Iterative),
            other => Err(Error::Config(format!("unknown SOS mode '{other}'"))),
        }
    }
}

/// Estimated SOS vectors, one `P^2` vector per user.
#[derive(Debug, Clone, PartialEq)]
pub struct SosEstimate {
    pub per_user: Vec<DVector<Complex64>>,
    pub mode: SolveMode,
    /// Whether the ridge fallback was needed (direct solve).
    pub ridged: bool,
    /// Conjugate-gradient iterations (iterative mode).
    pub iterations: usize,
}

impl SosEstimate {
    pub fn order(&self) -> usize {
        self.per_user.first().map_or(0, |d| (d.len() as f64).sqrt().round() as usize)
    }
}

fn split_blocks(v: &DVector<Complex64>, users: usize, order: usize) -> Vec<DVector<Complex64>> {
    let b = order * order;
    (0..users).map(|k| v.rows(k * b, b).into_owned()).collect()
}

fn real_part(v: &DVector<Complex64>) -> DVector<f64> {
    v.map(|z| z.re)
}

fn imag_part(v: &DVector<Complex64>) -> DVector<f64> {
    v.map(|z| z.im)
}

fn join(re: &DVector<f64>, im: &DVector<f64>) -> DVector<Complex64> {
    DVector::from_fn(re.len(), |i, _| Complex64::new(re[i], im[i]))
}

/// Conjugate gradients for a symmetric positive definite system.
fn conjugate_gradient(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize)> {
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok((DVector::zeros(b.len()), 0));
    }
    let mut x = x0;
    let mut r = b - a * &x;
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for it in 0..=max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        if it == max_iter {
            break;
        }
        let ap = a * &p;
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            break;
        }
        let step = rr / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

/// Solve the normal equations for all users at once.
pub fn estimate_sos(system: &SosSystem, mode: SolveMode) -> Result<SosEstimate> {
    let (users, order) = (system.users, system.order);
    match mode {
        SolveMode::Identity => Ok(SosEstimate {
            per_user: split_blocks(&system.rhs, users, order),
            mode,
            ridged: false,
            iterations: 0,
        }),
        SolveMode::Solve => {
            let t = system.gram.as_ref().ok_or(Error::MissingGram)?;
            let (chol, ridged) = match Cholesky::new(t.clone()) {
                Some(c) => (c, false),
                None => {
                    let scale = t.diagonal().amax().max(f64::MIN_POSITIVE);
                    let mut ridged = t.clone();
                    for i in 0..ridged.nrows() {
                        ridged[(i, i)] += RIDGE * scale;
                    }
                    match Cholesky::new(ridged) {
                        Some(c) => (c, true),
                        None => {
                            return Err(Error::SingularGram {
                                condition: sym_condition(t),
                            })
                        }
                    }
                }
            };
            let re = chol.solve(&real_part(&system.rhs));
            let im = chol.solve(&imag_part(&system.rhs));
            let d = join(&re, &im);
            if d.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::SingularGram {
                    condition: sym_condition(t),
                });
            }
            Ok(SosEstimate {
                per_user: split_blocks(&d, users, order),
                mode,
                ridged,
                iterations: 0,
            })
        }
        SolveMode::Iterative => {
            let t = system.gram.as_ref().ok_or(Error::MissingGram)?;
            let yr = real_part(&system.rhs);
            let yi = imag_part(&system.rhs);
            let (re, n1) = conjugate_gradient(t, &yr, yr.clone(), CG_TOLERANCE, CG_MAX_ITER)?;
            let (im, n2) = conjugate_gradient(t, &yi, yi.clone(), CG_TOLERANCE, CG_MAX_ITER)?;
            Ok(SosEstimate {
                per_user: split_blocks(&join(&re, &im), users, order),
                mode,
                ridged: false,
                iterations: n1.max(n2),
            })
        }
    }
}

/// Project one SOS vector onto the Hermitian constraint: `(A + A^H) / 2`.
pub fn hermitianize_vec(d: &DVector<Complex64>) -> DVector<Complex64> {
    let order = (d.len() as f64).sqrt().round() as usize;
    let a = unvec(d, order);
    vec_of(&((&a + a.adjoint()) * Complex64::new(0.5, 0.0)))
}

/// [`hermitianize_vec`] applied to every user.
pub fn hermitianize(est: &SosEstimate) -> SosEstimate {
    SosEstimate {
        per_user: est.per_user.iter().map(hermitianize_vec).collect(),
        ..est.clone()
    }
}

/// One real free variable of a Hermitian `P x P` matrix (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeVar {
    /// Real diagonal entry `(p, p)`.
    Diag(usize),
    /// Real part of the upper-triangle entry `(i, j)`, `i < j`.
    Re(usize, usize),
    /// Imaginary part of the upper-triangle entry `(i, j)`, `i < j`.
    Im(usize, usize),
}

impl FreeVar {
    /// Position of the referenced entry in `vec` order.
    pub fn vec_index(self, order: usize) -> usize {
        match self {
            FreeVar::Diag(p) => p + p * order,
            FreeVar::Re(i, j) | FreeVar::Im(i, j) => i + j * order,
        }
    }

    /// Multiplicity of the variable in a Frobenius norm of the full matrix.
    pub fn multiplicity(self) -> f64 {
        match self {
            FreeVar::Diag(_) => 1.0,
            _ => 2.0,
        }
    }
}

/// Canonical ordering: the `P` diagonal entries, then `(Re, Im)` pairs of the
/// upper triangle in row-major order.
pub fn free_layout(order: usize) -> Vec<FreeVar> {
    let mut out: Vec<FreeVar> = (0..order).map(FreeVar::Diag).collect();
    for i in 0..order {
        for j in (i + 1)..order {
            out.push(FreeVar::Re(i, j));
            out.push(FreeVar::Im(i, j));
        }
    }
    out
}

fn order_of(len: usize) -> Result<usize> {
    let order = (len as f64).sqrt().round() as usize;
    if order == 0 || order * order != len {
        return Err(Error::DimensionMismatch(format!("{len} is not a positive square")));
    }
    Ok(order)
}

/// Free real variables of a Hermitian SOS vector.
pub fn free_vars(d: &DVector<Complex64>) -> Result<DVector<f64>> {
    let order = order_of(d.len())?;
    let a = unvec(d, order);
    let defect = hermitian_defect(&a);
    if defect > 1e-10 * a.iter().fold(1.0f64, |m, z| m.max(z.norm())) {
        return Err(Error::NotHermitian { asymmetry: defect });
    }
    let layout = free_layout(order);
    Ok(DVector::from_iterator(
        layout.len(),
        layout.iter().map(|v| {
            let z = d[v.vec_index(order)];
            match v {
                FreeVar::Im(..) => z.im,
                _ => z.re,
            }
        }),
    ))
}

/// Rebuild the full Hermitian SOS vector from its free variables.
pub fn from_free_vars(f: &DVector<f64>) -> Result<DVector<Complex64>> {
    let order = order_of(f.len())?;
    let mut a = DMatrix::<Complex64>::zeros(order, order);
    for (v, &x) in free_layout(order).iter().zip(f.iter()) {
        match *v {
            FreeVar::Diag(p) => a[(p, p)] = Complex64::new(x, 0.0),
            FreeVar::Re(i, j) => {
                a[(i, j)].re = x;
                a[(j, i)].re = x;
            }
            FreeVar::Im(i, j) => {
                a[(i, j)].im = x;
                a[(j, i)].im = -x;
            }
        }
    }
    Ok(vec_of(&a))
}

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p semiblind --test acceptance -- 3 7`.
//! A failed criterion is reported but only turns into a nonzero exit status
//! when `ACCEPTANCE_STRICT=1` is set; panics always fail the run.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semiblind::analytic::{
    average_sos_variance, mm_error_covariance, mm_lower_bound, predict_sos_covariance,
    predict_subspace_angle, predict_subspace_mse, subspace_mse_given_angle,
};
use semiblind::estimators::{mm_semiblind, principal_eigvec, subspace_semiblind, MmOptions, OmegaRule};
use semiblind::harness::{predict, run_sweep, EstimatorChoice, ExperimentConfig, Grid, SweepRecord};
use semiblind::linalg::{min_eigenvalue, outer_vec, to_real};
use semiblind::model::{
    complex_gaussian, sample_channel, sample_codes, sample_symbols, sample_taps, synthesize_received,
    ChannelRealization, CodeBook, Constellation, ReceivedBlock, SynthesisMode, SystemParams,
};
use semiblind::moments::{free_moments, moment_jacobian, MatchingCost};
use semiblind::sos::{
    build_moment_vector, build_normal_equations, conditional_moment, estimate_sos, free_vars, from_free_vars,
    hermitianize, hermitianize_vec, SolveMode,
};

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Check {
    Check { pass, detail }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// One block with fresh channels, codes, symbols and noise; user 0's
/// channel is replaced by `fixed` when given.
fn draw_block(
    params: &SystemParams,
    seed: u64,
    fixed: Option<&DVector<Complex64>>,
) -> (ChannelRealization, CodeBook, ReceivedBlock) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channel = sample_channel(params, &mut rng);
    if let Some(g) = fixed {
        let mut taps = channel.taps.clone();
        taps[0] = g.clone();
        channel = ChannelRealization::from_taps(taps);
    }
    let codes = sample_codes(params, &mut rng);
    let symbols = sample_symbols(params, Constellation::Qpsk, &mut rng);
    let rx = synthesize_received(params, &channel, &codes, &symbols, SynthesisMode::IsiFree, &mut rng).unwrap();
    (channel, codes, rx)
}

/// Fixed unit-energy channel used by the conditional criteria.
fn fixed_channel(order: usize) -> DVector<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = sample_taps(order, &mut rng);
    let n = g.norm();
    g / c(n, 0.0)
}

const MC_TRIALS: u64 = 500;

fn criterion_1() -> Check {
    let closed = average_sos_variance(0.5, 0.5, 3);
    let exact = (closed - 5.0 / 3.0).abs() <= f64::EPSILON * 2.0;

    // Deviation of the identity-T SOS estimate from its mean given the codes
    // and channels; channels, codes, symbols and noise are redrawn per trial.
    let params = SystemParams::new(32, 64, 3, 400, 0, 0.5).unwrap();
    let m = params.block_len;
    let mut acc = 0.0;
    for t in 0..MC_TRIALS {
        let (channel, codes, rx) = draw_block(&params, 10_000 + t, None);
        let y = build_moment_vector(&codes, &rx, 0..m, params.noise_var).unwrap();
        let mean = conditional_moment(&codes, &channel, 0..m).unwrap();
        for (k, mk) in mean.iter().enumerate() {
            acc += (y.rhs_block(k) - mk).norm_squared();
        }
    }
    let emp = m as f64 * acc / (MC_TRIALS as f64 * params.users as f64 * 9.0);
    let ratio = emp / (5.0 / 3.0);
    check(
        exact && (ratio - 1.0).abs() <= 0.15,
        format!("closed form {closed:.17} (exact: {exact}); empirical {emp:.4} = {ratio:.3} x 5/3 (tolerance 15%)"),
    )
}

fn criterion_2() -> Check {
    let params = SystemParams::new(32, 64, 3, 400, 0, 0.5).unwrap();
    let m = params.block_len;
    let g = fixed_channel(3);
    let mut acc = DMatrix::<Complex64>::zeros(9, 9);
    for t in 0..MC_TRIALS {
        let (channel, codes, rx) = draw_block(&params, 20_000 + t, Some(&g));
        let y = build_moment_vector(&codes, &rx, 0..m, params.noise_var).unwrap();
        let mean = conditional_moment(&codes, &channel, 0..m).unwrap();
        let d = y.rhs_block(0) - &mean[0];
        acc += &d * d.adjoint();
    }
    let emp = acc * c(m as f64 / MC_TRIALS as f64, 0.0);
    let model = predict_sos_covariance(&g, &params).unwrap();
    let pred = &model.sigma_dd;

    let mut worst_diag: f64 = 0.0;
    for i in 0..9 {
        worst_diag = worst_diag.max((emp[(i, i)].re / pred[(i, i)].re - 1.0).abs());
    }
    let mut worst_off: f64 = 0.0;
    let mut sign_ok = true;
    let mut count = 0;
    for i in 0..9 {
        for j in 0..9 {
            if i == j || model.omega[(i, j)].norm() == 0.0 {
                continue;
            }
            count += 1;
            let (e, p) = (emp[(i, j)], pred[(i, j)]);
            // Same sign: the empirical entry points within 90 degrees of the
            // predicted one.
            sign_ok &= (e * p.conj()).re > 0.0;
            worst_off = worst_off.max((e.norm() / p.norm() - 1.0).abs());
        }
    }
    check(
        worst_diag <= 0.15 && sign_ok && worst_off <= 0.30,
        format!(
            "max diagonal deviation {:.1}% (tolerance 15%); {count} structured off-diagonal entries: signs agree {sign_ok}, max magnitude deviation {:.1}% (tolerance 30%)",
            100.0 * worst_diag,
            100.0 * worst_off
        ),
    )
}

fn criterion_3() -> Check {
    let sizes = [(32usize, 100usize), (64, 400), (128, 1600)];
    let seeds = 20;
    let mut means = Vec::new();
    for (n, m) in sizes {
        let k = n / 4;
        let params = SystemParams::new(k, n, 3, m, 0, 0.5).unwrap();
        let mut acc = 0.0;
        for s in 0..seeds {
            let (_, codes, rx) = draw_block(&params, 30_000 + s, None);
            let t = build_normal_equations(&codes, &rx, 0..m, 0.5).unwrap().gram.unwrap();
            let dev = (t - DMatrix::identity(k * 9, k * 9)).amax();
            acc += dev;
        }
        means.push(acc / seeds as f64);
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing,
        format!(
            "mean max|T - I| over {seeds} seeds: {:.4} (32,100) > {:.4} (64,400) > {:.4} (128,1600): {decreasing}",
            means[0], means[1], means[2]
        ),
    )
}

fn criterion_4() -> Check {
    let params = SystemParams::new(16, 64, 3, 400, 0, 0.5).unwrap();
    let seeds = 50;
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for s in 0..seeds {
        let (_, codes, rx) = draw_block(&params, 40_000 + s, None);
        let cond = build_normal_equations(&codes, &rx, 0..400, 0.5).unwrap().condition().unwrap();
        worst = worst.max(cond);
        if cond.is_finite() && cond < 100.0 {
            good += 1;
        }
    }
    let frac = good as f64 / seeds as f64;
    check(
        frac >= 0.95,
        format!("{good}/{seeds} seeds nonsingular with condition < 100 (need 95%); worst condition {worst:.2}"),
    )
}

fn criterion_5() -> Check {
    let (s, alpha) = (0.5, 0.2);
    let params = SystemParams::new(16, 64, 3, 400, 80, s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let g = sample_taps(3, &mut rng);
        let v = predict_subspace_mse(&g, &params, 0.0).unwrap();
        worst_rel = worst_rel.max((v - s / alpha).abs() / (s / alpha));
    }
    let baseline_exact = worst_rel <= 4.0 * f64::EPSILON;
    let perfect = (1..=8).all(|p| subspace_mse_given_angle(1.0, 0.0, p, s, alpha, 1.0).unwrap() == s / (alpha * p as f64));

    let cfg = ExperimentConfig {
        grid: Grid {
            beta: vec![0.25],
            sigma_n2: vec![s],
            order: vec![3],
            alpha: vec![alpha],
        },
        trials: MC_TRIALS as usize,
        seed: 5,
        estimator: EstimatorChoice::Subspace,
        omega: OmegaRule::Fixed(0.0),
        analytic_draws: 50,
        ..ExperimentConfig::default()
    };
    let out = run_sweep(&cfg).unwrap();
    let rec = &out.records[0];
    let ratio = rec.sigma_g2_emp / (s / alpha);
    check(
        baseline_exact && perfect && rec.sigma_g2_ana == s / alpha && (ratio - 1.0).abs() <= 0.10,
        format!(
            "omega=0 analytic = sigma^2/alpha to {worst_rel:.1e} (harness {}); perfect subspace omega=1 gives sigma^2/(alpha P) exactly: {perfect}; empirical omega=0 {:.4} +- {:.4} = {ratio:.3} x {} (tolerance 10%)",
            rec.sigma_g2_ana,
            rec.sigma_g2_emp,
            rec.sigma_g2_se,
            s / alpha
        ),
    )
}

fn grid_config(estimator: EstimatorChoice, grid: Grid) -> ExperimentConfig {
    ExperimentConfig {
        grid,
        estimator,
        seed: 1,
        ..ExperimentConfig::default()
    }
}

fn eta_of(records: &[SweepRecord], beta: f64, s: f64, order: usize, alpha: f64) -> f64 {
    records
        .iter()
        .find(|r| r.beta == beta && r.sigma_n2 == s && r.order == order && r.alpha == alpha)
        .map(|r| r.eta_ana)
        .expect("record present")
}

const NOISE: [f64; 6] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0];
const LOADS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

fn criterion_6() -> Check {
    let cfg = grid_config(
        EstimatorChoice::Mm,
        Grid {
            beta: LOADS.to_vec(),
            sigma_n2: NOISE.to_vec(),
            order: vec![3],
            alpha: vec![0.2],
        },
    );
    let out = predict(&cfg).unwrap();
    if !out.failures.is_empty() {
        return check(false, format!("{} cells failed: {:?}", out.failures.len(), out.failures));
    }
    let r = &out.records;
    let row: Vec<f64> = NOISE.iter().map(|&s| eta_of(r, 0.25, s, 3, 0.2)).collect();
    let (imax, peak) = row
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let interior = imax > 0 && imax < NOISE.len() - 1;
    let at = NOISE[imax];
    let mut violations = 0;
    for &s in &NOISE {
        for w in LOADS.windows(2) {
            if eta_of(r, w[1], s, 3, 0.2) > eta_of(r, w[0], s, 3, 0.2) {
                violations += 1;
            }
        }
    }
    check(
        interior && (0.5..=2.0).contains(&at) && (0.15..=0.45).contains(&peak) && violations <= 1,
        format!(
            "beta=0.25 row {:?}: interior max {interior} at sigma^2={at} with eta={peak:.4}; beta-monotonicity violations {violations} (max 1)",
            row.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

fn criterion_7() -> Check {
    let cfg = grid_config(
        EstimatorChoice::Mm,
        Grid {
            beta: vec![0.5],
            sigma_n2: vec![0.5],
            order: vec![2, 8],
            alpha: vec![0.1, 0.6],
        },
    );
    let out = predict(&cfg).unwrap();
    let corner = eta_of(&out.records, 0.5, 0.5, 8, 0.6);
    let small = eta_of(&out.records, 0.5, 0.5, 2, 0.1);
    check(
        out.failures.is_empty() && corner < 0.0 && small > 0.0,
        format!("eta(alpha=0.6, P=8) = {corner:.4} (< 0), eta(alpha=0.1, P=2) = {small:.4} (> 0)"),
    )
}

fn criterion_8() -> Check {
    let by_noise = predict(&grid_config(
        EstimatorChoice::Subspace,
        Grid {
            beta: LOADS.to_vec(),
            sigma_n2: NOISE.to_vec(),
            order: vec![3],
            alpha: vec![0.1],
        },
    ))
    .unwrap();
    let alphas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let orders: Vec<usize> = (2..=8).collect();
    let by_order = predict(&grid_config(
        EstimatorChoice::Subspace,
        Grid {
            beta: vec![0.5],
            sigma_n2: vec![0.5],
            order: orders.clone(),
            alpha: alphas.to_vec(),
        },
    ))
    .unwrap();
    let min_noise = by_noise.records.iter().map(|r| r.eta_ana).fold(f64::INFINITY, f64::min);
    let min_order = by_order.records.iter().map(|r| r.eta_ana).fold(f64::INFINITY, f64::min);
    let interior = LOADS.iter().all(|&b| {
        let row: Vec<f64> = NOISE.iter().map(|&s| eta_of(&by_noise.records, b, s, 3, 0.1)).collect();
        let imax = (0..row.len()).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
        imax > 0 && imax < row.len() - 1
    });
    let e4 = |p: usize, a: f64| eta_of(&by_order.records, 0.5, 0.5, p, a);
    let in_alpha = orders.iter().all(|&p| alphas.windows(2).all(|w| e4(p, w[1]) > e4(p, w[0])));
    let in_order = alphas.iter().all(|&a| orders.windows(2).all(|w| e4(w[1], a) > e4(w[0], a)));
    check(
        by_noise.failures.is_empty() && by_order.failures.is_empty() && min_noise > 0.0 && min_order > 0.0 && interior && in_alpha && in_order,
        format!(
            "min eta over the noise-load grid {min_noise:.4}, over the alpha-order grid {min_order:.4}; increasing in alpha {in_alpha}, in P {in_order}; interior max in sigma^2 on every load row {interior}"
        ),
    )
}

fn criterion_9() -> Check {
    // The exact normal-equation solve; the identity approximation adds an
    // O(M/N) bias to the scaled angle.
    let params = SystemParams::new(32, 64, 3, 400, 0, 0.5).unwrap();
    let m = params.block_len;
    let g = fixed_channel(3);
    let norm2 = g.norm_squared();
    let mut acc = 0.0;
    for t in 0..MC_TRIALS {
        let (_, codes, rx) = draw_block(&params, 90_000 + t, Some(&g));
        let system = build_normal_equations(&codes, &rx, 0..m, params.noise_var).unwrap();
        let est = hermitianize(&estimate_sos(&system, SolveMode::Solve).unwrap());
        let u = principal_eigvec(&est.per_user[0]);
        acc += 1.0 - u.dotc(&g).norm_sqr() / norm2;
    }
    let emp = m as f64 * acc / MC_TRIALS as f64;
    let pred = predict_subspace_angle(&g, &params).unwrap();
    let ratio = emp / pred;
    check(
        (0.8..=1.2).contains(&norm2) && (ratio - 1.0).abs() <= 0.25,
        format!("||g||^2 = {norm2:.3}; M E(sin^2) empirical {emp:.4} vs closed form {pred:.4}: ratio {ratio:.3} (tolerance 25%)"),
    )
}

fn criterion_10() -> Check {
    let points = [(16usize, 1.0, 80usize), (32, 0.5, 40), (64, 0.1, 200)];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = f64::INFINITY;
    for (k, s, mt) in points {
        let params = SystemParams::new(k, 64, 3, 400, mt, s).unwrap();
        for _ in 0..50 {
            let g = sample_taps(3, &mut rng);
            let bound = mm_lower_bound(&g, &params).unwrap();
            let cov = mm_error_covariance(&g, &params).unwrap();
            worst = worst.min(min_eigenvalue(&(&cov.sigma_dg - &bound)));
        }
    }
    check(
        worst >= -1e-8,
        format!("min eigenvalue of (Sigma_dg - bound) over 150 channels at 3 grid points: {worst:.3e} (>= -1e-8)"),
    )
}

fn central_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let h = 1e-5;
    let m = f(x).len();
    let mut out = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        out.set_column(j, &col);
    }
    out
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Brute-force `C^T` of one user and symbol from the chip definition.
fn sylvester_t(code: &[f64], order: usize) -> DMatrix<f64> {
    let n = code.len();
    let rows = n - order + 1;
    DMatrix::from_fn(order, rows, |p, i| code[order - 1 + i - p])
}

fn criterion_11() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut notes = Vec::new();
    let mut ok = true;

    // Jacobians and Hessians against central differences.
    let mut worst_fd: f64 = 0.0;
    for order in 1..=3 {
        for _ in 0..10 {
            let g = sample_taps(order, &mut rng);
            let theta = to_real(&g);
            let z_moments = free_moments(&to_real(&sample_taps(order, &mut rng)));
            let w = rng.random_range(0.05..0.95);
            let cost = MatchingCost::new(w, to_real(&sample_taps(order, &mut rng)), z_moments);

            let full = |t: &DVector<f64>| {
                let f = free_moments(t);
                DVector::from_iterator(t.len() + f.len(), t.iter().copied().chain(f.iter().copied()))
            };
            worst_fd = worst_fd.max(rel_err(&moment_jacobian(&g), &central_jacobian(full, &theta)));
            worst_fd = worst_fd.max(rel_err(&cost.residual_jacobian(&theta), &central_jacobian(|t| cost.residuals(t), &theta)));
            worst_fd = worst_fd.max(rel_err(&cost.hessian(&theta), &central_jacobian(|t| cost.gradient(t), &theta)));
            let z = cost.observation();
            let dz = central_jacobian(|z| cost.with_observation(z).gradient(&theta), &z);
            worst_fd = worst_fd.max(rel_err(&cost.observation_jacobian(&theta), &dz));
        }
    }
    ok &= worst_fd <= 1e-6;
    notes.push(format!("FD max rel {worst_fd:.1e}"));

    // Hermitianization and free variables.
    let mut idem = true;
    let mut round = true;
    for order in 1..=5 {
        for _ in 0..20 {
            let d = DVector::from_fn(order * order, |_, _| complex_gaussian(&mut rng, 1.0));
            let h = hermitianize_vec(&d);
            idem &= hermitianize_vec(&h) == h;
            let f = free_vars(&h).unwrap();
            round &= from_free_vars(&f).unwrap() == h;
            round &= free_vars(&from_free_vars(&f).unwrap()).unwrap() == f;
        }
    }
    ok &= idem && round;
    notes.push(format!("hermitianize idempotent {idem}, free-variable round trip exact {round}"));

    // Structured normal equations against the explicit Kronecker form.
    let mut worst_t: f64 = 0.0;
    for n in [4usize, 7, 10] {
        for order in 1..=3.min(n - 1) {
            for k in 1..=3 {
                let params = SystemParams::new(k, n, order, 6, 0, 0.3).unwrap();
                let (_, codes, rx) = draw_block(&params, (n * 100 + order * 10 + k) as u64, None);
                let sys = build_normal_equations(&codes, &rx, 0..6, 0.3).unwrap();
                let b = order * order;
                let mut t = DMatrix::<f64>::zeros(k * b, k * b);
                let mut y = DVector::<Complex64>::zeros(k * b);
                for m in 0..6 {
                    let cts: Vec<_> = (0..k).map(|u| sylvester_t(codes.code(u, m), order)).collect();
                    let r = DVector::from_column_slice(rx.window(m));
                    for i in 0..k {
                        for j in 0..k {
                            let gij = &cts[i] * cts[j].transpose();
                            let q = gij.kronecker(&gij);
                            let mut blk = t.view_mut((i * b, j * b), (b, b));
                            blk += q;
                        }
                        let a = cts[i].map(|v| c(v, 0.0)) * &r;
                        let gram = &cts[i] * cts[i].transpose();
                        let outer = &a * a.adjoint() - gram.map(|v| c(0.3 * v, 0.0));
                        let mut yb = y.rows_mut(i * b, b);
                        yb += DVector::from_column_slice(outer.as_slice());
                    }
                }
                t /= 6.0;
                y /= c(6.0, 0.0);
                let gram = sys.gram.unwrap();
                worst_t = worst_t.max((&gram - &t).amax() / t.amax());
                worst_t = worst_t.max((&sys.rhs - &y).camax() / y.camax());
            }
        }
    }
    ok &= worst_t <= 1e-12;
    notes.push(format!("normal equations vs Kronecker max rel {worst_t:.1e}"));

    // Subspace phase invariance.
    let mut worst_phase: f64 = 0.0;
    for _ in 0..50 {
        let g = sample_taps(4, &mut rng);
        let g_bar = &g + DVector::from_fn(4, |_, _| complex_gaussian(&mut rng, 0.1));
        let d = outer_vec(&g) + DVector::from_fn(16, |_, _| complex_gaussian(&mut rng, 0.05));
        let omega = rng.random_range(0.0..1.0);
        let est = subspace_semiblind(&g_bar, &d, omega).unwrap().g_hat;
        let u = principal_eigvec(&d) * Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let rotated = &u * (u.dotc(&g_bar) * omega) + &g_bar * c(1.0 - omega, 0.0);
        worst_phase = worst_phase.max((est - rotated).norm() / g_bar.norm());
    }
    ok &= worst_phase <= 1e-14;
    notes.push(format!("phase invariance max rel {worst_phase:.1e}"));

    // Monotone moment-matching cost.
    let mut monotone = true;
    let mut runs = 0;
    for _ in 0..200 {
        let order = rng.random_range(1..=4);
        let g = sample_taps(order, &mut rng);
        let g_bar = &g + DVector::from_fn(order, |_, _| complex_gaussian(&mut rng, 0.3));
        let d = outer_vec(&g) + DVector::from_fn(order * order, |_, _| complex_gaussian(&mut rng, 0.3));
        let w = rng.random_range(0.0..=1.0);
        let est = mm_semiblind(&g_bar, &d, w, &MmOptions::default()).unwrap();
        monotone &= est.diagnostics.cost_history.windows(2).all(|p| p[1] <= p[0]);
        runs += 1;
    }
    ok &= monotone;
    notes.push(format!("MM cost monotone over {runs} runs {monotone}"));

    // Sweep reproducibility, including across worker counts.
    let cfg = ExperimentConfig {
        spreading_gain: 32,
        block_len: 60,
        grid: Grid {
            beta: vec![0.25, 0.5],
            sigma_n2: vec![0.5],
            order: vec![2, 3],
            alpha: vec![0.2],
        },
        trials: 6,
        seed: 2024,
        analytic_draws: 20,
        ..ExperimentConfig::default()
    };
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    let par = run_sweep(&ExperimentConfig { workers: 3, ..cfg.clone() }).unwrap();
    let same = |x: &[SweepRecord], y: &[SweepRecord]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.same_bits(q));
    let reproducible = a.records.len() == 12 && same(&a.records, &b.records) && same(&a.records, &par.records);
    ok &= reproducible;
    notes.push(format!("sweep reproducible {reproducible}"));

    check(ok, notes.join("; "))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 11] = [
        (1, "average SOS variance", criterion_1),
        (2, "SOS covariance structure", criterion_2),
        (3, "T approaches I", criterion_3),
        (4, "T well conditioned at low load", criterion_4),
        (5, "subspace baseline identities", criterion_5),
        (6, "MM efficiency vs noise and load", criterion_6),
        (7, "MM efficiency sign reversal", criterion_7),
        (8, "subspace efficiency surfaces", criterion_8),
        (9, "subspace angle", criterion_9),
        (10, "bound ordering", criterion_10),
        (11, "numerical hygiene", criterion_11),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    // Write through the raw handle so the lines are visible under cargo test.
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        ran += 1;
        let status = if result.pass { "PASS" } else { "FAIL" };
        writeln!(
            out,
            "criterion {id:>2} {status} {name}: {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        )
        .unwrap();
        out.flush().unwrap();
        if !result.pass {
            failed.push(id);
        }
    }
    writeln!(out, "acceptance: {}/{ran} criteria passed; failed: {failed:?}", ran - failed.len()).unwrap();
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}

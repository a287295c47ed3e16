//! System model: random channels, long spreading codes, QPSK symbols and the
//! received ISI-free windows
//!
//! ```text
//! r(m) = sum_k C_k^(m) g_k x_k(m) + n(m),      r(m) in C^(N-P+1)
//! ```
//!
//! where `C_k^(m)` is the truncated Sylvester (convolution) matrix of the
//! code word of user `k` in symbol period `m`. With 1-based chip indices,
//! row `i` of `C` is `(s(P+i-1), s(P+i-2), ..., s(i))`; the window keeps
//! chips `P..=N` of each symbol, the ones untouched by the previous symbol.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::outer_vec;

/// Scalar model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Number of users `K`.
    pub users: usize,
    /// Spreading gain `N` (chips per symbol).
    pub spreading_gain: usize,
    /// Channel order `P` (delay spread in chips).
    pub channel_order: usize,
    /// Coherence block length `M` in symbols.
    pub block_len: usize,
    /// Training symbols `M_t` at the start of each block.
    pub training_len: usize,
    /// Complex noise variance (inverse SNR).
    pub noise_var: f64,
}

impl SystemParams {
    pub fn new(
        users: usize,
        spreading_gain: usize,
        channel_order: usize,
        block_len: usize,
        training_len: usize,
        noise_var: f64,
    ) -> Result<Self> {
        let p = Self {
            users,
            spreading_gain,
            channel_order,
            block_len,
            training_len,
            noise_var,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.spreading_gain == 0 || self.channel_order == 0 || self.block_len == 0 {
            return Err(Error::InvalidParams(
                "K, N, P and M must all be at least 1".into(),
            ));
        }
        if self.channel_order >= self.spreading_gain {
            return Err(Error::ChannelTooLong {
                order: self.channel_order,
                gain: self.spreading_gain,
            });
        }
        if self.training_len > self.block_len {
            return Err(Error::InvalidParams(format!(
                "M_t = {} exceeds M = {}",
                self.training_len, self.block_len
            )));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(Error::InvalidParams(format!(
                "noise variance {} must be finite and nonnegative",
                self.noise_var
            )));
        }
        Ok(())
    }

    /// System load `K / N`.
    pub fn beta(&self) -> f64 {
        self.users as f64 / self.spreading_gain as f64
    }

    /// Training fraction `M_t / M`.
    pub fn alpha(&self) -> f64 {
        self.training_len as f64 / self.block_len as f64
    }

    /// Length of each ISI-free window, `N - P + 1`.
    pub fn window_len(&self) -> usize {
        self.spreading_gain - self.channel_order + 1
    }

    /// Number of information (non-training) symbols per block.
    pub fn info_len(&self) -> usize {
        self.block_len - self.training_len
    }
}

/// Per-user channel taps and their second-order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `g_k`, `P` taps per user.
    pub taps: Vec<DVector<Complex64>>,
    /// `d_k = vec(g_k g_k^H)`.
    pub sos: Vec<DVector<Complex64>>,
}

impl ChannelRealization {
    pub fn from_taps(taps: Vec<DVector<Complex64>>) -> Self {
        let sos = taps.iter().map(outer_vec).collect();
        Self { taps, sos }
    }

    pub fn users(&self) -> usize {
        self.taps.len()
    }

    pub fn order(&self) -> usize {
        self.taps.first().map_or(0, |g| g.len())
    }
}

/// Draw one circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draw one user's channel: `P` i.i.d. CN(0, 1/P) taps.
pub fn sample_taps<R: Rng + ?Sized>(order: usize, rng: &mut R) -> DVector<Complex64> {
    let var = 1.0 / order as f64;
    DVector::from_fn(order, |_, _| complex_gaussian(rng, var))
}

/// Rayleigh block-fading channel for all users.
pub fn sample_channel<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> ChannelRealization {
    let taps = (0..params.users)
        .map(|_| sample_taps(params.channel_order, rng))
        .collect();
    ChannelRealization::from_taps(taps)
}

/// Long spreading codes: one fresh code word per user and symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook {
    users: usize,
    symbols: usize,
    gain: usize,
    /// Symbol-major storage: `chips[(m * K + k) * N + l]`.
    chips: Vec<f64>,
}

impl CodeBook {
    /// Wrap explicit chips laid out as `chips[(m * K + k) * N + l]`.
    pub fn from_chips(users: usize, symbols: usize, gain: usize, chips: Vec<f64>) -> Result<Self> {
        if chips.len() != users * symbols * gain {
            return Err(Error::DimensionMismatch(format!(
                "expected {} chips, got {}",
                users * symbols * gain,
                chips.len()
            )));
        }
        Ok(Self {
            users,
            symbols,
            gain,
            chips,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn gain(&self) -> usize {
        self.gain
    }

    /// Code word `s_k^(m)` (0-based `k`, `m`).
    pub fn code(&self, user: usize, symbol: usize) -> &[f64] {
        let start = (symbol * self.users + user) * self.gain;
        &self.chips[start..start + self.gain]
    }

    /// All code words of symbol `m`, user-major.
    pub fn symbol_codes(&self, symbol: usize) -> &[f64] {
        let start = symbol * self.users * self.gain;
        &self.chips[start..start + self.users * self.gain]
    }

    pub fn chips(&self) -> &[f64] {
        &self.chips
    }
}

/// Rademacher chips scaled by `1/sqrt(N)`.
pub fn sample_codes<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> CodeBook {
    let n = params.spreading_gain;
    let amp = 1.0 / (n as f64).sqrt();
    let total = params.users * params.block_len * n;
    let chips = (0..total)
        .map(|_| if rng.random::<bool>() { amp } else { -amp })
        .collect();
    CodeBook {
        users: params.users,
        symbols: params.block_len,
        gain: n,
        chips,
    }
}

/// Symbol alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    #[default]
    Qpsk,
}

impl Constellation {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Complex64 {
        match self {
            Constellation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                let re = if rng.random::<bool>() { a } else { -a };
                let im = if rng.random::<bool>() { a } else { -a };
                Complex64::new(re, im)
            }
        }
    }
}

/// Channel symbols of one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    users: usize,
    symbols: usize,
    /// `x[m * K + k]`.
    values: Vec<Complex64>,
    training_len: usize,
}

impl SymbolFrame {
    pub fn from_values(
        users: usize,
        symbols: usize,
        training_len: usize,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != users * symbols || training_len > symbols {
            return Err(Error::DimensionMismatch(format!(
                "symbol frame {users}x{symbols} with {} values, M_t = {training_len}",
                values.len()
            )));
        }
        Ok(Self {
            users,
            symbols,
            values,
            training_len,
        })
    }

    /// `x_k(m)` (0-based).
    #[inline]
    pub fn get(&self, user: usize, symbol: usize) -> Complex64 {
        self.values[symbol * self.users + user]
    }

    pub fn symbol(&self, symbol: usize) -> &[Complex64] {
        &self.values[symbol * self.users..(symbol + 1) * self.users]
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn training_len(&self) -> usize {
        self.training_len
    }

    /// The first `M_t` symbols of every block are training.
    pub fn is_training(&self, symbol: usize) -> bool {
        symbol < self.training_len
    }
}

pub fn sample_symbols<R: Rng + ?Sized>(
    params: &SystemParams,
    constellation: Constellation,
    rng: &mut R,
) -> SymbolFrame {
    let values = (0..params.users * params.block_len)
        .map(|_| constellation.sample(rng))
        .collect();
    SymbolFrame {
        users: params.users,
        symbols: params.block_len,
        values,
        training_len: params.training_len,
    }
}

/// Truncated Sylvester matrix `(N-P+1) x P`: entry `(i, j)` (0-based) is
/// `s[P - 1 + i - j]`.
pub fn sylvester(code: &[f64], order: usize) -> Result<DMatrix<f64>> {
    let n = code.len();
    if order == 0 || order >= n {
        return Err(Error::ChannelTooLong { order, gain: n });
    }
    let rows = n - order + 1;
    Ok(DMatrix::from_fn(rows, order, |i, j| code[order - 1 + i - j]))
}

/// `C g` without forming `C`: the code/channel convolution on the retained chips.
pub fn convolve_window(code: &[f64], taps: &[Complex64], out: &mut [Complex64]) {
    let p = taps.len();
    debug_assert_eq!(out.len(), code.len() - p + 1);
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &g) in taps.iter().enumerate() {
            acc += g * code[p - 1 + i - j];
        }
        *o = acc;
    }
}

/// `C^T r` without forming `C`: despreading correlator at `P` lags.
pub fn correlate_window(code: &[f64], window: &[Complex64], out: &mut [Complex64]) {
    let p = out.len();
    debug_assert_eq!(window.len(), code.len() - p + 1);
    for (j, o) in out.iter_mut().enumerate() {
        let shifted = &code[p - 1 - j..p - 1 - j + window.len()];
        let mut acc = Complex64::new(0.0, 0.0);
        for (&s, &r) in shifted.iter().zip(window) {
            acc += r * s;
        }
        *o = acc;
    }
}

/// How the received windows are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMode {
    /// Evaluate the vector model directly per symbol.
    #[default]
    IsiFree,
    /// Convolve the whole chip stream (with inter-symbol leakage) and cut out
    /// the retained chips of each symbol.
    FullStream,
}

impl std::str::FromStr for SynthesisMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isi-free" => Ok(Self::IsiFree),
            "full-stream" => Ok(Self::FullStream),
            other => Err(Error::Config(format!("unknown synthesis mode '{other}'"))),
        }
    }
}

/// Received ISI-free windows of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBlock {
    window_len: usize,
    /// `r[m * (N-P+1) + i]`.
    samples: Vec<Complex64>,
    noise: Option<Vec<Complex64>>,
}

impl ReceivedBlock {
    pub fn from_windows(windows: &[Vec<Complex64>]) -> Result<Self> {
        let window_len = windows.first().map_or(0, Vec::len);
        if windows.iter().any(|w| w.len() != window_len) {
            return Err(Error::DimensionMismatch("ragged received windows".into()));
        }
        Ok(Self {
            window_len,
            samples: windows.concat(),
            noise: None,
        })
    }

    /// Window `r(m)` (0-based).
    pub fn window(&self, symbol: usize) -> &[Complex64] {
        &self.samples[symbol * self.window_len..(symbol + 1) * self.window_len]
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn symbols(&self) -> usize {
        self.samples.len().checked_div(self.window_len).unwrap_or(0)
    }

    /// Noise samples, when retained.
    pub fn noise(&self, symbol: usize) -> Option<&[Complex64]> {
        self.noise
            .as_ref()
            .map(|n| &n[symbol * self.window_len..(symbol + 1) * self.window_len])
    }

    pub fn drop_noise(&mut self) {
        self.noise = None;
    }
}

fn check_consistent(
    params: &SystemParams,
    channel: &ChannelRealization,
    codes: &CodeBook,
    symbols: &SymbolFrame,
) -> Result<()> {
    let k = params.users;
    let ok = channel.users() == k
        && channel.taps.iter().all(|g| g.len() == params.channel_order)
        && codes.users() == k
        && codes.gain() == params.spreading_gain
        && codes.symbols() == params.block_len
        && symbols.users() == k
        && symbols.symbols() == params.block_len;
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(
            "channel, codes and symbols disagree with the system parameters".into(),
        ))
    }
}

/// Synthesize the received windows of one block. Noise samples are drawn in
/// window order, so both modes consume the random source identically; the
/// noise record is retained.
pub fn synthesize_received<R: Rng + ?Sized>(
    params: &SystemParams,
    channel: &ChannelRealization,
    codes: &CodeBook,
    symbols: &SymbolFrame,
    mode: SynthesisMode,
    rng: &mut R,
) -> Result<ReceivedBlock> {
    params.validate()?;
    check_consistent(params, channel, codes, symbols)?;
    let n = params.spreading_gain;
    let p = params.channel_order;
    let len = params.window_len();
    let blocks = params.block_len;

    let mut samples = vec![Complex64::new(0.0, 0.0); blocks * len];
    match mode {
        SynthesisMode::IsiFree => {
            let mut h = vec![Complex64::new(0.0, 0.0); len];
            for m in 0..blocks {
                let out = &mut samples[m * len..(m + 1) * len];
                for k in 0..params.users {
                    convolve_window(codes.code(k, m), channel.taps[k].as_slice(), &mut h);
                    let x = symbols.get(k, m);
                    for (o, &hv) in out.iter_mut().zip(&h) {
                        *o += hv * x;
                    }
                }
            }
        }
        SynthesisMode::FullStream => {
            let total = blocks * n;
            for k in 0..params.users {
                let mut stream = vec![Complex64::new(0.0, 0.0); total];
                for m in 0..blocks {
                    let x = symbols.get(k, m);
                    for (l, &s) in codes.code(k, m).iter().enumerate() {
                        stream[m * n + l] = x * s;
                    }
                }
                let g = channel.taps[k].as_slice();
                for m in 0..blocks {
                    // Retained chips P..=N (1-based) are stream positions m*N+P-1 ..= m*N+N-1.
                    for i in 0..len {
                        let t = m * n + p - 1 + i;
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (q, &gq) in g.iter().enumerate() {
                            if t >= q {
                                acc += gq * stream[t - q];
                            }
                        }
                        samples[m * len + i] += acc;
                    }
                }
            }
        }
    }

    let noise: Vec<Complex64> = (0..blocks * len)
        .map(|_| complex_gaussian(rng, params.noise_var))
        .collect();
    for (s, &w) in samples.iter_mut().zip(&noise) {
        *s += w;
    }
    Ok(ReceivedBlock {
        window_len: len,
        samples,
        noise: Some(noise),
    })
}

//! Pseudo-spectral numerics on the 2π-torus.
//!
//! Convention: `u(x) = Σ_n û(n) e^{inx}` for `n ∈ [−N/2, N/2)`, amplitudes
//! stored in FFT order (non-negative wavenumbers first). Integrals are
//! `∫ f = 2π · mean of f over a uniform grid`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{hamiltonian_density, DensityExpr, DensityMonomial};

/// Relative tolerance for the imaginary part of a real-valued expression.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("mode count {0} must be a power of two and at least 4")]
    BadModeCount(usize),
    #[error("quadrature grid of {grid} points cannot integrate {factors} factors of {n_modes} modes exactly (need {needed})")]
    InsufficientPadding { grid: usize, factors: usize, n_modes: usize, needed: usize },
    #[error("non-finite amplitude at t = {t} (mode {mode})")]
    NonFinite { t: f64, mode: i64 },
    #[error("imaginary residue {imag:e} exceeds tolerance for real part {real:e} (scale {scale:e})")]
    ImaginaryResidue { real: f64, imag: f64, scale: f64 },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

fn wavenumber(idx: usize, len: usize) -> i64 {
    if idx < len / 2 {
        idx as i64
    } else {
        idx as i64 - len as i64
    }
}

fn slot(n: i64, len: usize) -> usize {
    n.rem_euclid(len as i64) as usize
}

/// Band-limited state with `N` Fourier modes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    modes: Vec<Complex64>,
    pub t: f64,
}

impl SpectralState {
    pub fn zero(n_modes: usize) -> Result<Self, NumericError> {
        if n_modes < 4 || !n_modes.is_power_of_two() {
            return Err(NumericError::BadModeCount(n_modes));
        }
        Ok(SpectralState { modes: vec![Complex64::new(0.0, 0.0); n_modes], t: 0.0 })
    }

    /// State from amplitudes in FFT order.
    pub fn from_modes(modes: Vec<Complex64>) -> Result<Self, NumericError> {
        let mut s = Self::zero(modes.len())?;
        s.modes = modes;
        Ok(s)
    }

    /// `amplitude · e^{i n x}`.
    pub fn plane_wave(n_modes: usize, amplitude: Complex64, n: i64) -> Result<Self, NumericError> {
        let mut s = Self::zero(n_modes)?;
        s.set_mode(n, amplitude);
        Ok(s)
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Amplitudes in FFT order.
    pub fn modes(&self) -> &[Complex64] {
        &self.modes
    }

    /// Wavenumbers matching [`modes`](Self::modes).
    pub fn wavenumbers(&self) -> impl Iterator<Item = i64> + '_ {
        let len = self.modes.len();
        (0..len).map(move |i| wavenumber(i, len))
    }

    /// `û(n)`, zero outside the band.
    pub fn mode(&self, n: i64) -> Complex64 {
        let half = (self.modes.len() / 2) as i64;
        if n < -half || n >= half {
            return Complex64::new(0.0, 0.0);
        }
        self.modes[slot(n, self.modes.len())]
    }

    /// Panics if `n` is outside `[−N/2, N/2)`.
    pub fn set_mode(&mut self, n: i64, value: Complex64) {
        let half = (self.modes.len() / 2) as i64;
        assert!(n >= -half && n < half, "wavenumber {n} outside band");
        let len = self.modes.len();
        self.modes[slot(n, len)] = value;
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        SpectralState { modes: self.modes.iter().map(|z| z * lambda).collect(), t: self.t }
    }

    /// `∂^order u` on a uniform grid of `len ≥ N` points.
    pub fn derivative_on_grid(&self, order: u32, len: usize) -> Vec<Complex64> {
        let n = self.modes.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (idx, &a) in self.modes.iter().enumerate() {
            let k = wavenumber(idx, n);
            buf[slot(k, len)] = a * ik_pow(k, order);
        }
        let (_, inv) = plans(len);
        inv.process(&mut buf);
        buf
    }

    /// Samples on the grid `x_j = 2πj/len`.
    pub fn to_grid(&self, len: usize) -> Vec<Complex64> {
        self.derivative_on_grid(0, len)
    }

    /// Projects grid samples back onto the `N`-mode band.
    fn set_from_grid(&mut self, mut buf: Vec<Complex64>) {
        let len = buf.len();
        let (fwd, _) = plans(len);
        fwd.process(&mut buf);
        let scale = 1.0 / len as f64;
        let n = self.modes.len();
        for idx in 0..n {
            self.modes[idx] = buf[slot(wavenumber(idx, n), len)] * scale;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.modes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_finite(&self) -> Result<(), NumericError> {
        match self.modes.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            None => Ok(()),
            Some(idx) => Err(NumericError::NonFinite { t: self.t, mode: wavenumber(idx, self.modes.len()) }),
        }
    }

    /// `‖u‖²_{L²} = 2π Σ|û(n)|²`.
    pub fn mass(&self) -> f64 {
        2.0 * PI * self.modes.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// `Σ n |û(n)|²`.
    pub fn momentum(&self) -> f64 {
        self.wavenumbers().zip(&self.modes).map(|(n, z)| n as f64 * z.norm_sqr()).sum()
    }
}

/// `(in)^order`.
fn ik_pow(n: i64, order: u32) -> Complex64 {
    let mag = (n as f64).powi(order as i32);
    match order % 4 {
        0 => Complex64::new(mag, 0.0),
        1 => Complex64::new(0.0, mag),
        2 => Complex64::new(-mag, 0.0),
        _ => Complex64::new(0.0, -mag),
    }
}

/// `‖u‖_{H^k} = (‖u‖²_{L²} + ‖∂^k u‖²_{L²})^{1/2}`; `k = 0` gives `‖u‖_{L²}`.
pub fn sobolev_norm(state: &SpectralState, k: u32) -> f64 {
    if k == 0 {
        return state.mass().sqrt();
    }
    let s: f64 =
        state.wavenumbers().zip(state.modes()).map(|(n, z)| (1.0 + (n as f64).powi(2 * k as i32)) * z.norm_sqr()).sum();
    (2.0 * PI * s).sqrt()
}

/// Smallest exact quadrature grid for products of `factors` band-limited
/// functions with `n_modes` modes.
pub fn quadrature_grid(factors: usize, n_modes: usize) -> usize {
    (factors.max(1) * n_modes).next_power_of_two()
}

/// Evaluates densities on one state, caching derivative grids.
pub struct Evaluator<'a> {
    state: &'a SpectralState,
    grid: usize,
    cache: RefCell<HashMap<u32, Vec<Complex64>>>,
}

impl<'a> Evaluator<'a> {
    /// Evaluator exact for up to `max_factors` factors.
    pub fn new(state: &'a SpectralState, max_factors: usize) -> Self {
        Self::with_grid(state, quadrature_grid(max_factors, state.n_modes())).expect("grid is large enough")
    }

    pub fn with_grid(state: &'a SpectralState, grid: usize) -> Result<Self, NumericError> {
        if grid < state.n_modes() {
            return Err(NumericError::InsufficientPadding {
                grid,
                factors: 1,
                n_modes: state.n_modes(),
                needed: state.n_modes(),
            });
        }
        Ok(Evaluator { state, grid, cache: RefCell::new(HashMap::new()) })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    fn check(&self, factors: usize) -> Result<(), NumericError> {
        let needed = factors.max(1) * self.state.n_modes();
        if self.grid < needed {
            return Err(NumericError::InsufficientPadding {
                grid: self.grid,
                factors,
                n_modes: self.state.n_modes(),
                needed,
            });
        }
        Ok(())
    }

    /// `∫ ∏∂^{i}u ∏∂^{j}ū`.
    pub fn monomial(&self, m: &DensityMonomial) -> Result<Complex64, NumericError> {
        self.check(m.factor_count())?;
        {
            let mut cache = self.cache.borrow_mut();
            for f in m.factors() {
                cache.entry(f.order).or_insert_with(|| self.state.derivative_on_grid(f.order, self.grid));
            }
        }
        let cache = self.cache.borrow();
        let u: Vec<&[Complex64]> = m.u_orders().iter().map(|o| cache[o].as_slice()).collect();
        let ubar: Vec<&[Complex64]> = m.ubar_orders().iter().map(|o| cache[o].as_slice()).collect();
        let mut acc = CompensatedSum::default();
        for j in 0..self.grid {
            let mut prod = Complex64::new(1.0, 0.0);
            for f in &u {
                prod *= f[j];
            }
            for f in &ubar {
                prod *= f[j].conj();
            }
            acc.add(prod);
        }
        Ok(acc.value() * (2.0 * PI / self.grid as f64))
    }

    /// `Σ c · J` together with the scale `Σ |c|·|J|`.
    pub fn expr_complex(&self, e: &DensityExpr) -> Result<(Complex64, f64), NumericError> {
        let mut total = CompensatedSum::default();
        let mut scale = 0.0;
        for (m, c) in e.terms() {
            let (re, im) = c.to_f64_pair();
            let term = Complex64::new(re, im) * self.monomial(m)?;
            scale += term.norm();
            total.add(term);
        }
        Ok((total.value(), scale))
    }

    /// Value of a real-valued expression.
    pub fn expr(&self, e: &DensityExpr) -> Result<f64, NumericError> {
        let (z, scale) = self.expr_complex(e)?;
        if z.im.abs() > IMAGINARY_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(NumericError::ImaginaryResidue { real: z.re, imag: z.im, scale });
        }
        Ok(z.re)
    }
}

/// Neumaier summation, componentwise.
#[derive(Default)]
struct CompensatedSum {
    sum: Complex64,
    carry: Complex64,
}

fn two_sum(acc: &mut f64, carry: &mut f64, x: f64) {
    let t = *acc + x;
    if acc.abs() >= x.abs() {
        *carry += (*acc - t) + x;
    } else {
        *carry += (x - t) + *acc;
    }
    *acc = t;
}

impl CompensatedSum {
    fn add(&mut self, z: Complex64) {
        two_sum(&mut self.sum.re, &mut self.carry.re, z.re);
        two_sum(&mut self.sum.im, &mut self.carry.im, z.im);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

fn max_factors(e: &DensityExpr) -> usize {
    e.monomials().map(|m| m.factor_count()).max().unwrap_or(1)
}

pub fn evaluate_monomial(m: &DensityMonomial, state: &SpectralState) -> Result<Complex64, NumericError> {
    Evaluator::new(state, m.factor_count()).monomial(m)
}

/// Real value of a conjugation-fixed expression; errors if the imaginary
/// residue exceeds [`IMAGINARY_TOLERANCE`] relative to `Σ|c·J|`.
pub fn evaluate_expr(e: &DensityExpr, state: &SpectralState) -> Result<f64, NumericError> {
    Evaluator::new(state, max_factors(e)).expr(e)
}

/// `∫|∂u|² + (1/(p+1))∫|u|^{2p+2}`.
pub fn hamiltonian(state: &SpectralState, p: usize) -> f64 {
    evaluate_expr(&hamiltonian_density(p), state).expect("hamiltonian density is real")
}

/// Time-stepping parameters for [`step`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    /// Grid enlargement for the nonlinear substep; at least `p + 1`.
    pub padding_factor: usize,
    pub t_end: f64,
    /// Steps between recorded samples.
    pub record_stride: usize,
    /// Diagnostic switch: `false` drops the nonlinear substep.
    #[serde(default = "default_true")]
    pub nonlinear: bool,
    /// Sign of the nonlinearity; only `1` (defocusing) is supported.
    #[serde(default = "default_sign")]
    pub sign: i32,
    #[serde(default)]
    pub scheme: Scheme,
}

/// Time-stepping composition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Second-order Strang splitting.
    #[default]
    Strang,
    /// Fourth-order triple-jump composition of Strang steps.
    Yoshida4,
}

fn default_true() -> bool {
    true
}

fn default_sign() -> i32 {
    1
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64, p: usize) -> Self {
        SolverConfig {
            dt,
            padding_factor: p + 1,
            t_end,
            record_stride: 1,
            nonlinear: true,
            sign: 1,
            scheme: Scheme::Strang,
        }
    }

    pub fn validate(&self, p: usize) -> Result<(), NumericError> {
        let bad = |m: String| Err(NumericError::BadConfig(m));
        if self.sign != 1 {
            return bad("only the defocusing nonlinearity (sign = 1) is supported".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive and finite, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end must be non-negative and finite, got {}", self.t_end));
        }
        if self.padding_factor < p + 1 {
            return bad(format!("padding_factor {} is below p + 1 = {}", self.padding_factor, p + 1));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be positive".into());
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`, rounding to the nearest step.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

fn linear_half(state: &mut SpectralState, dt: f64) {
    let n = state.modes.len();
    for (idx, a) in state.modes.iter_mut().enumerate() {
        let k = wavenumber(idx, n) as f64;
        *a *= Complex64::from_polar(1.0, -k * k * dt / 2.0);
    }
}

/// One step of size `dt` with the configured scheme; negative `dt` runs
/// backwards.
pub fn step_by(state: &mut SpectralState, dt: f64, config: &SolverConfig, p: usize) -> Result<(), NumericError> {
    match config.scheme {
        Scheme::Strang => strang_step(state, dt, config, p),
        Scheme::Yoshida4 => {
            let cbrt2 = 2f64.cbrt();
            let outer = 1.0 / (2.0 - cbrt2);
            let inner = -cbrt2 / (2.0 - cbrt2);
            strang_step(state, outer * dt, config, p)?;
            strang_step(state, inner * dt, config, p)?;
            strang_step(state, outer * dt, config, p)
        }
    }
}

/// One Strang step: half linear, full nonlinear phase on the padded grid,
/// half linear.
pub fn strang_step(state: &mut SpectralState, dt: f64, config: &SolverConfig, p: usize) -> Result<(), NumericError> {
    linear_half(state, dt);
    if config.nonlinear {
        let len = config.padding_factor * state.n_modes();
        let mut grid = state.to_grid(len);
        for z in grid.iter_mut() {
            let rho = z.norm_sqr().powi(p as i32);
            *z *= Complex64::from_polar(1.0, -rho * dt);
        }
        state.set_from_grid(grid);
    }
    linear_half(state, dt);
    state.t += dt;
    state.check_finite()
}

pub fn step(state: &SpectralState, config: &SolverConfig, p: usize) -> Result<SpectralState, NumericError> {
    let mut next = state.clone();
    step_by(&mut next, config.dt, config, p)?;
    Ok(next)
}

/// Advances by `steps` steps in place.
pub fn advance(
    state: &mut SpectralState,
    steps: usize,
    dt: f64,
    config: &SolverConfig,
    p: usize,
) -> Result<(), NumericError> {
    for _ in 0..steps {
        step_by(state, dt, config, p)?;
    }
    Ok(())
}

/// `û(n) = (1+|n|)^{−s} e^{iφ_n}` on `|n| ≤ N/4`, phases from a ChaCha
/// stream seeded with `seed`, rescaled to `‖u‖_{H¹} = r_h1`.
pub fn random_state(seed: u64, n_modes: usize, decay: f64, r_h1: f64) -> Result<SpectralState, NumericError> {
    if !(r_h1.is_finite() && r_h1 > 0.0) {
        return Err(NumericError::BadConfig(format!("H^1 radius must be positive, got {r_h1}")));
    }
    if !decay.is_finite() {
        return Err(NumericError::BadConfig(format!("decay must be finite, got {decay}")));
    }
    let mut s = SpectralState::zero(n_modes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = (n_modes / 4) as i64;
    for n in -band..=band {
        let phase = rng.gen::<f64>() * 2.0 * PI;
        let amp = (1.0 + n.unsigned_abs() as f64).powf(-decay);
        s.set_mode(n, Complex64::from_polar(amp, phase));
    }
    let norm = sobolev_norm(&s, 1);
    Ok(s.scaled(r_h1 / norm))
}

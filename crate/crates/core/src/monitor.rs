//! Numerical cross-checks of a solved energy along solver trajectories, and
//! the per-run report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::DensityExpr;
use crate::energy::EnergyDefinition;
use crate::spectral::{advance, sobolev_norm, step_by, Evaluator, NumericError, Scheme, SolverConfig, SpectralState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("energy was built for p = {energy}, run requested p = {run}")]
    ExponentMismatch { energy: usize, run: usize },
    #[error("non-finite value in column `{column}` at t = {t}")]
    NonFinite { column: &'static str, t: f64 },
}

/// Central-difference stencil for `dℰ_k/dt`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// `(E(δ) − E(−δ)) / 2δ`.
    Second,
    /// `(−E(2δ) + 8E(δ) − 8E(−δ) + E(−2δ)) / 12δ`.
    Fourth,
}

/// Central-difference parameters for `dℰ_k/dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub delta: f64,
    /// Step used for the short side trajectories.
    pub dt: f64,
    pub stencil: Stencil,
    /// Integrator for the side trajectories.
    pub scheme: Scheme,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { delta: 1e-4, dt: 1e-5, stencil: Stencil::Fourth, scheme: Scheme::Yoshida4 }
    }
}

fn factor_bound(e: &DensityExpr) -> usize {
    e.monomials().map(|m| m.factor_count()).max().unwrap_or(1)
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Precomputed expressions for repeated evaluation of one energy.
pub struct EnergyProbe<'a> {
    pub energy: &'a EnergyDefinition,
    energy_expr: DensityExpr,
    decomposition: DensityExpr,
    cubic: DensityExpr,
    max_factors: usize,
}

impl<'a> EnergyProbe<'a> {
    pub fn new(energy: &'a EnergyDefinition) -> Self {
        let energy_expr = energy.energy_expr();
        let decomposition = energy.decomposition();
        let cubic = energy.cubic_expr();
        let max_factors =
            [factor_bound(&energy_expr), factor_bound(&energy.exact_derivative), factor_bound(&decomposition)]
                .into_iter()
                .max()
                .unwrap_or(1);
        EnergyProbe { energy, energy_expr, decomposition, cubic, max_factors }
    }

    pub fn evaluator<'s>(&self, state: &'s SpectralState) -> Evaluator<'s> {
        Evaluator::new(state, self.max_factors)
    }

    pub fn energy_value(&self, state: &SpectralState) -> Result<f64, NumericError> {
        Evaluator::new(state, factor_bound(&self.energy_expr)).expr(&self.energy_expr)
    }

    /// `c · Im∫(∂^{2m}u)³u^{p−2}ū^{p+1}`; zero when `c = 0`.
    pub fn cubic_value(&self, state: &SpectralState) -> Result<f64, NumericError> {
        use num_traits::{ToPrimitive, Zero};
        if self.energy.cubic_coeff.is_zero() {
            return Ok(0.0);
        }
        let c = self.energy.cubic_coeff.to_f64().unwrap_or(f64::NAN);
        Ok(c * Evaluator::new(state, factor_bound(&self.cubic)).expr(&self.cubic)?)
    }

    /// Central difference of `ℰ_k` from side trajectories started at `state`.
    pub fn finite_difference(
        &self,
        state: &SpectralState,
        solver: &SolverConfig,
        fd: &FdConfig,
    ) -> Result<f64, NumericError> {
        let steps = (fd.delta / fd.dt).round().max(1.0) as usize;
        let h = fd.delta / steps as f64;
        let p = self.energy.p;
        let solver = &SolverConfig { scheme: fd.scheme, ..solver.clone() };
        let reach = match fd.stencil {
            Stencil::Second => 1,
            Stencil::Fourth => 2,
        };
        let mut plus = Vec::with_capacity(reach);
        let mut minus = Vec::with_capacity(reach);
        let (mut fwd, mut back) = (state.clone(), state.clone());
        for _ in 0..reach {
            advance(&mut fwd, steps, h, solver, p)?;
            advance(&mut back, steps, -h, solver, p)?;
            plus.push(self.energy_value(&fwd)?);
            minus.push(self.energy_value(&back)?);
        }
        Ok(match fd.stencil {
            Stencil::Second => (plus[0] - minus[0]) / (2.0 * fd.delta),
            Stencil::Fourth => (-plus[1] + 8.0 * plus[0] - 8.0 * minus[0] + minus[1]) / (12.0 * fd.delta),
        })
    }
}

/// One comparison of the three routes to `dℰ_k/dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckEntry {
    pub t: f64,
    pub exact: f64,
    pub decomposition: f64,
    pub finite_difference: f64,
    /// `exact` against `decomposition`.
    pub decomposition_rel_err: f64,
    /// `exact` against `finite_difference`.
    pub fd_rel_err: f64,
}

impl CrosscheckEntry {
    pub fn passes(&self, decomposition_tol: f64, fd_tol: f64) -> bool {
        self.decomposition_rel_err < decomposition_tol && self.fd_rel_err < fd_tol
    }
}

/// Compares `exact_derivative` with the residual decomposition (pure
/// quadrature) and with a central difference of `ℰ_k` along the solver.
pub fn derivative_crosscheck(
    energy: &EnergyDefinition,
    state: &SpectralState,
    solver: &SolverConfig,
    fd: &FdConfig,
) -> Result<CrosscheckEntry, MonitorError> {
    solver.validate(energy.p)?;
    let probe = EnergyProbe::new(energy);
    let ev = probe.evaluator(state);
    let exact = ev.expr(&energy.exact_derivative)?;
    let decomposition = ev.expr(&probe.decomposition)?;
    let finite_difference = probe.finite_difference(state, solver, fd)?;
    Ok(CrosscheckEntry {
        t: state.t,
        exact,
        decomposition,
        finite_difference,
        decomposition_rel_err: relative_error(exact, decomposition),
        fd_rel_err: relative_error(exact, finite_difference),
    })
}

/// `(2k − 4)/(k − 1)`.
pub fn bound_exponent(k: u32) -> f64 {
    (2.0 * k as f64 - 4.0) / (k as f64 - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub t: f64,
    /// `|ℱ_k(u)| / ‖u‖_{H^k}^{(2k−4)/(k−1)}`.
    pub ratio: f64,
    /// The same ratio for each term of `ℱ_k`, in term order.
    pub density_ratios: Vec<f64>,
}

/// Labels for [`BoundEntry::density_ratios`].
pub fn density_labels(energy: &EnergyDefinition) -> Vec<String> {
    energy.f_k.terms().map(|(m, c)| format!("{c} * {m}")).collect()
}

pub fn bound_entry(energy: &EnergyDefinition, state: &SpectralState) -> Result<BoundEntry, MonitorError> {
    let ev = Evaluator::new(state, factor_bound(&energy.f_k));
    let denom = sobolev_norm(state, energy.k).powf(bound_exponent(energy.k));
    let mut density_ratios = Vec::with_capacity(energy.f_k.len());
    for (m, c) in energy.f_k.terms() {
        let (re, im) = c.to_f64_pair();
        let v = num_complex::Complex64::new(re, im) * ev.monomial(m)?;
        density_ratios.push(v.norm() / denom);
    }
    let f = ev.expr(&energy.f_k)?;
    Ok(BoundEntry { t: state.t, ratio: f.abs() / denom, density_ratios })
}

/// Bound ratios along a recorded trajectory.
pub fn bound_monitor(energy: &EnergyDefinition, trajectory: &[SpectralState]) -> Result<Vec<BoundEntry>, MonitorError> {
    trajectory.iter().map(|s| bound_entry(energy, s)).collect()
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub hk: f64,
    pub hamiltonian: f64,
    pub e_k: f64,
    pub f_k: f64,
    pub dek_fd: f64,
    pub dek_exact: f64,
    /// `∫₀ᵗ c·Im∫(∂^{2m}u)³u^{p−2}ū^{p+1} ds` (trapezoid over solver steps).
    pub cubic_remainder: f64,
    pub bound_ratio: f64,
}

pub const CSV_HEADER: &str = "t,l2,h1,hk,hamiltonian,E_k,F_k,dEk_fd,dEk_exact,cubic_remainder,bound_ratio";

impl ReportRow {
    fn values(&self) -> [(&'static str, f64); 11] {
        [
            ("t", self.t),
            ("l2", self.l2),
            ("h1", self.h1),
            ("hk", self.hk),
            ("hamiltonian", self.hamiltonian),
            ("E_k", self.e_k),
            ("F_k", self.f_k),
            ("dEk_fd", self.dek_fd),
            ("dEk_exact", self.dek_exact),
            ("cubic_remainder", self.cubic_remainder),
            ("bound_ratio", self.bound_ratio),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub k: u32,
    pub p: usize,
    pub n_modes: usize,
    pub dt: f64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
    pub density_labels: Vec<String>,
    /// One row per recorded time, aligned with [`density_labels`](Self::density_labels).
    pub density_ratios: Vec<Vec<f64>>,
}

impl ExperimentReport {
    /// Header plus one line per row, floats in shortest round-trip form.
    pub fn to_csv(&self) -> Result<String, MonitorError> {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let vals = row.values();
            for (i, (name, v)) in vals.iter().enumerate() {
                if !v.is_finite() {
                    return Err(MonitorError::NonFinite { column: name, t: row.t });
                }
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Per-density bound ratios as CSV: `t` then one column per term of `ℱ_k`.
    pub fn densities_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 0..self.density_labels.len() {
            write!(out, ",d{i}").unwrap();
        }
        out.push('\n');
        for (row, ratios) in self.rows.iter().zip(&self.density_ratios) {
            write!(out, "{}", row.t).unwrap();
            for r in ratios {
                write!(out, ",{r}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Integrates from `initial` to `solver.t_end`, recording every
/// `record_stride` steps (and the final state).
pub fn run_experiment(
    energy: &EnergyDefinition,
    initial: &SpectralState,
    solver: &SolverConfig,
    fd: &FdConfig,
    seed: Option<u64>,
) -> Result<ExperimentReport, MonitorError> {
    let p = energy.p;
    solver.validate(p)?;
    let probe = EnergyProbe::new(energy);
    let labels = density_labels(energy);
    let steps = solver.steps();
    let mut state = initial.clone();
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    let mut cubic_integral = 0.0;
    let mut cubic_prev = probe.cubic_value(&state)?;
    let mut record = |state: &SpectralState, cubic_integral: f64| -> Result<(), MonitorError> {
        let ev = probe.evaluator(state);
        let bound = bound_entry(energy, state)?;
        let row = ReportRow {
            t: state.t,
            l2: sobolev_norm(state, 0),
            h1: sobolev_norm(state, 1),
            hk: sobolev_norm(state, energy.k),
            hamiltonian: ev.expr(&crate::density::hamiltonian_density(p))?,
            e_k: probe.energy_value(state)?,
            f_k: ev.expr(&energy.f_k)?,
            dek_fd: probe.finite_difference(state, solver, fd)?,
            dek_exact: ev.expr(&energy.exact_derivative)?,
            cubic_remainder: cubic_integral,
            bound_ratio: bound.ratio,
        };
        if let Some((name, _)) = row.values().iter().find(|(_, v)| !v.is_finite()) {
            return Err(MonitorError::NonFinite { column: name, t: state.t });
        }
        rows.push(row);
        ratios.push(bound.density_ratios);
        Ok(())
    };
    record(&state, cubic_integral)?;
    for i in 1..=steps {
        step_by(&mut state, solver.dt, solver, p)?;
        let cubic_now = probe.cubic_value(&state)?;
        cubic_integral += 0.5 * solver.dt * (cubic_prev + cubic_now);
        cubic_prev = cubic_now;
        if i % solver.record_stride == 0 || i == steps {
            record(&state, cubic_integral)?;
        }
    }
    Ok(ExperimentReport {
        metadata: ReportMetadata { k: energy.k, p, n_modes: initial.n_modes(), dt: solver.dt, seed },
        rows,
        density_labels: labels,
        density_ratios: ratios,
    })
}

/// Sampled trajectory: the initial state and every `record_stride`-th step.
pub fn trajectory(
    initial: &SpectralState,
    solver: &SolverConfig,
    p: usize,
) -> Result<Vec<SpectralState>, MonitorError> {
    solver.validate(p)?;
    let mut state = initial.clone();
    let mut out = vec![state.clone()];
    let steps = solver.steps();
    for i in 1..=steps {
        step_by(&mut state, solver.dt, solver, p)?;
        if i % solver.record_stride == 0 || i == steps {
            out.push(state.clone());
        }
    }
    Ok(out)
}

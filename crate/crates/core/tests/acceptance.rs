//! Acceptance suite: one pass/fail line per criterion, then a single assert.
//!
//! Run with `cargo test -p nlsmod-core --test acceptance -- --nocapture` to
//! see the report.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use nlsmod::density::{classify, enumerate_monomials, hamiltonian_density, ibp_generators, mass_density, DensityClass};
use nlsmod::energy::{
    basic_density, cancellation_matrix, correction_density, cubic_density, solve_energy, verify_lemmas, DensityKind,
    EnergyDefinition, EnergyError, LemmaCheck, StarQuotient,
};
use nlsmod::monitor::{bound_entry, bound_exponent, derivative_crosscheck, FdConfig};
use nlsmod::reduce::reduce_modulo;
use nlsmod::spectral::{advance, evaluate_expr, random_state, step_by, SolverConfig, SpectralState};
use nlsmod::{DensityExpr, DensityMonomial, Rational, Signature};

use DensityKind::{I, K, V, W};

const K_RANGE: std::ops::RangeInclusive<u32> = 2..=8;
const P_VALUES: [usize; 2] = [2, 3];
const SEEDS: std::ops::Range<u64> = 0..10;
const N_MODES: usize = 64;
const DECAY: f64 = 3.0;
const R_H1: f64 = 1.0;

/// Per-k ceilings on `max_t |ℱ_k(u(t))| / ‖u(t)‖_{H^k}^{(2k−4)/(k−1)}` over
/// the ten-seed ensemble on `t ∈ [0, 10]`, frozen from a recorded run
/// (measured maxima rounded up by about 10%).
/// Recorded maxima: 1.0888e-2, 2.6453e-2, 4.2189e-2, 7.7426e-2, 1.2257e-1.
const BOUND_GOLDENS: [(u32, f64); 5] = [(2, 0.012), (3, 0.030), (4, 0.047), (5, 0.086), (6, 0.135)];

struct Cell {
    k: u32,
    p: usize,
    solve: Result<EnergyDefinition, EnergyError>,
    solve_time: Duration,
    lemmas: Result<Vec<LemmaCheck>, EnergyError>,
    lemma_time: Duration,
}

fn run_cells() -> Vec<Cell> {
    let pairs: Vec<(u32, usize)> = K_RANGE.flat_map(|k| P_VALUES.map(|p| (k, p))).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|&(k, p)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let solve = solve_energy(k, p);
                    let solve_time = t.elapsed();
                    let t = Instant::now();
                    let lemmas = verify_lemmas(k, p);
                    Cell { k, p, solve, solve_time, lemmas, lemma_time: t.elapsed() }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("cell thread")).collect()
    })
}

/// Reduces every sector of `e` modulo integration by parts, with `allowed`
/// deciding which monomials may remain.
fn reduces_to_allowed(e: &DensityExpr, allowed: impl Fn(&DensityMonomial) -> bool) -> bool {
    e.signatures().into_iter().all(|sig| {
        let part = e.sector(sig);
        let keep: Vec<DensityMonomial> =
            enumerate_monomials(sig, sig.total_derivs).into_iter().filter(|m| allowed(m)).collect();
        let gens = ibp_generators(sig, sig.total_derivs);
        reduce_modulo(&part, &gens, &keep).map(|r| r.residual.is_zero()).unwrap_or(false)
    })
}

type Verdict = (bool, String);

fn criterion_1(cells: &[Cell]) -> Verdict {
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    for c in cells {
        slowest = slowest.max(c.solve_time);
        let e = match &c.solve {
            Ok(e) => e,
            Err(err) => {
                failures.push(format!("k={} p={}: {err}", c.k, c.p));
                continue;
            }
        };
        let (k, p) = (c.k, c.p);
        let cubic: Vec<DensityMonomial> =
            if k % 3 == 0 { cubic_density(k, p).monomials().cloned().collect() } else { vec![] };
        // The solver's stored residuals are not used here: the derivative is
        // reduced from scratch.
        let star_sector = Signature::new(p + 1, p + 1, 2 * k);
        let theta_sector = Signature::new(2 * p + 1, 2 * p + 1, 2 * k - 2);
        let d = &e.exact_derivative;
        let star_ok = reduces_to_allowed(&d.sector(star_sector), |m| {
            classify(m, k, p) == DensityClass::Omega || cubic.contains(m)
        });
        let theta_ok = reduces_to_allowed(&d.sector(theta_sector), |m| classify(m, k, p) == DensityClass::Theta);
        let rest = d.filter(|m| m.signature() != star_sector && m.signature() != theta_sector);
        let rest_ok = reduces_to_allowed(&rest, |_| false);
        if !(star_ok && theta_ok && rest_ok) {
            failures.push(format!("k={k} p={p}: star {star_ok}, starstar {theta_ok}, other sectors {rest_ok}"));
        }
        if c.solve_time > Duration::from_secs(300) {
            failures.push(format!("k={k} p={p}: solve took {:?}", c.solve_time));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} cells solved and reduced exactly; slowest solve {:.2?}", cells.len(), slowest)
    } else {
        failures.join("; ")
    };
    (failures.is_empty(), detail)
}

fn criterion_2(cells: &[Cell]) -> Verdict {
    let mut total = 0;
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    for c in cells {
        slowest = slowest.max(c.lemma_time);
        match &c.lemmas {
            Ok(checks) => {
                total += checks.len();
                failures.extend(checks.iter().filter(|x| !x.passed).map(|x| x.to_string()));
            }
            Err(e) => failures.push(format!("k={} p={}: {e}", c.k, c.p)),
        }
    }
    let detail = if failures.is_empty() {
        format!("{total} identities verified with zero residual; slowest cell {slowest:.2?}")
    } else {
        failures.join("; ")
    };
    (failures.is_empty(), detail)
}

fn r(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

fn k2_matrix_ok(p: usize) -> bool {
    let basis = [basic_density(I, 2, p, 0).unwrap(), basic_density(V, 2, p, 0).unwrap()];
    let unknowns = [correction_density(I, 2, p, 1).unwrap(), correction_density(V, 2, p, 1).unwrap()];
    let same = correction_density(I, 2, p, 1) == correction_density(W, 2, p, 1);
    same && cancellation_matrix(2, p, &unknowns, &basis) == Some(vec![vec![r(2), r(0)], vec![r(0), r(4 * p as i64)]])
}

fn k3_matrix_ok(p: usize) -> bool {
    let q = StarQuotient::new(3, p);
    let unknowns = [(I, 1), (V, 1), (W, 1), (V, 2), (K, 2)];
    let rows = [(I, 0), (V, 0), (V, 1), (W, 0), (K, 1)];
    let four_p = 4 * p as i64;
    let matrix = [[2, 0, 0, 0, 0], [0, four_p, 2, 0, 0], [0, 0, -2, 2, 0], [0, 0, -2, 0, 0], [0, 0, 0, 0, 2]];
    let cubic_row = [-2 * (p as i64 - 1), 0, 0, 0, 0];
    let columns_ok = unknowns.iter().enumerate().all(|(j, &(kind, h))| {
        let mut gap = correction_density(kind, 3, p, h).unwrap().star();
        for (i, &(bk, bh)) in rows.iter().enumerate() {
            gap = gap.sub(&basic_density(bk, 3, p, bh).unwrap().scaled_rat(&r(matrix[i][j])));
        }
        gap = gap.sub(&basic_density(I, 3, p, 1).unwrap().scaled_rat(&r(cubic_row[j])));
        q.normal_form(&gap).is_zero()
    });
    let mut m: Vec<Vec<Rational>> = matrix.iter().map(|row| row.map(r).to_vec()).collect();
    let (pivots, _) = nlsmod::linalg::rref(&mut m, 5);
    columns_ok && pivots.len() == 5
}

fn criterion_3(cells: &[Cell]) -> Verdict {
    let mut failures = Vec::new();
    for p in 2..=4 {
        if !k2_matrix_ok(p) {
            failures.push(format!("k=2 matrix differs at p={p}"));
        }
    }
    for p in P_VALUES {
        if !k3_matrix_ok(p) {
            failures.push(format!("k=3 pinned matrix differs at p={p}"));
        }
    }
    let mut nonzero = Vec::new();
    for c in cells {
        let Ok(e) = &c.solve else { continue };
        let zero = e.cubic_coeff == r(0);
        if c.k % 3 != 0 && !zero {
            failures.push(format!("k={} p={}: cubic coefficient {} should vanish", c.k, c.p, e.cubic_coeff));
        }
        if (c.k == 3 || c.k == 6) && zero {
            failures.push(format!("k={} p={}: cubic coefficient vanishes", c.k, c.p));
        }
        if c.k % 3 == 0 {
            nonzero.push(format!("c(k={},p={})={}", c.k, c.p, e.cubic_coeff));
        }
    }
    let detail = if failures.is_empty() {
        format!("k=2 and k=3 matrices reproduced; {}", nonzero.join(", "))
    } else {
        failures.join("; ")
    };
    (failures.is_empty(), detail)
}

fn criterion_4() -> Verdict {
    let p = 2;
    // Plane wave.
    let (a, n) = (0.5, 1);
    let mut s = SpectralState::plane_wave(32, Complex64::new(a, 0.0), n).unwrap();
    let cfg = SolverConfig::new(1e-4, 1.0, p);
    advance(&mut s, cfg.steps(), cfg.dt, &cfg, p).unwrap();
    let omega = (n * n) as f64 + a.powi(2 * p as i32);
    let exact = Complex64::from_polar(a, -omega * s.t);
    let pw_err = s
        .wavenumbers()
        .zip(s.modes())
        .map(|(m, z)| if m == n { (z - exact).norm() } else { z.norm() })
        .fold(0.0, f64::max);
    // Mass drift per unit time and Hamiltonian convergence on one random state.
    let s0 = random_state(0, N_MODES, DECAY, R_H1).unwrap();
    let h0 = evaluate_expr(&hamiltonian_density(p), &s0).unwrap();
    let mut drifts = Vec::new();
    let mut mass_drift: f64 = 0.0;
    for dt in [1e-3, 5e-4] {
        let mut s = s0.clone();
        let cfg = SolverConfig::new(dt, 1.0, p);
        advance(&mut s, cfg.steps(), dt, &cfg, p).unwrap();
        mass_drift = mass_drift.max((s.mass() - s0.mass()).abs() / s0.mass() / s.t);
        drifts.push((evaluate_expr(&hamiltonian_density(p), &s).unwrap() - h0).abs());
    }
    let ratio = drifts[0] / drifts[1];
    let pass = pw_err < 1e-8 && mass_drift < 1e-12 && (2.5..=6.0).contains(&ratio);
    (
        pass,
        format!(
            "plane-wave error {pw_err:.2e}; mass drift {mass_drift:.2e}/unit time; Hamiltonian drift {:.2e} -> {:.2e}, ratio {ratio:.2}",
            drifts[0], drifts[1]
        ),
    )
}

fn criterion_5() -> Verdict {
    let solver = SolverConfig::new(1e-3, 1.0, 2);
    let energies: Vec<EnergyDefinition> = (2..=6).map(|k| solve_energy(k, 2).unwrap()).collect();
    let results: Vec<(u32, u64, f64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = SEEDS
            .map(|seed| {
                let energies = &energies;
                let solver = &solver;
                s.spawn(move || {
                    let state = random_state(seed, N_MODES, DECAY, R_H1).unwrap();
                    energies
                        .iter()
                        .map(|e| {
                            let c = derivative_crosscheck(e, &state, solver, &FdConfig::default()).unwrap();
                            (e.k, seed, c.decomposition_rel_err, c.fd_rel_err)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("seed thread")).collect()
    });
    let worst_dec = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let worst_fd = results.iter().map(|r| r.3).fold(0.0, f64::max);
    let bad: Vec<String> = results
        .iter()
        .filter(|r| !(r.2 < 1e-9 && r.3 < 1e-4))
        .map(|r| format!("k={} seed={}: {:.2e}/{:.2e}", r.0, r.1, r.2, r.3))
        .collect();
    let detail = format!(
        "{} (k, seed) cells; worst decomposition {worst_dec:.2e} (tol 1e-9), worst finite difference {worst_fd:.2e} (tol 1e-4){}",
        results.len(),
        if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
    );
    (bad.is_empty(), detail)
}

fn criterion_6() -> Verdict {
    let mut ok = reduces_to_allowed(&mass_density().time_derivative(2), |_| false);
    for p in 2..=4 {
        let d = hamiltonian_density(p).time_derivative(p);
        ok &= !d.is_zero() && reduces_to_allowed(&d, |_| false);
    }
    (ok, "d/dt mass and d/dt Hamiltonian (p=2..4) reduce to 0 modulo integration by parts alone".into())
}

/// Bound ratios for every `k` along one seed's trajectory, sampled every 0.1
/// on `[0, 10]`.
fn bound_run(seed: u64, energies: &[EnergyDefinition]) -> Vec<Vec<f64>> {
    let p = 2;
    let cfg = SolverConfig::new(1e-3, 10.0, p);
    let mut s = random_state(seed, N_MODES, DECAY, R_H1).unwrap();
    let mut out = vec![Vec::new(); energies.len()];
    let stride = 100;
    for i in 0..=cfg.steps() {
        if i > 0 {
            step_by(&mut s, cfg.dt, &cfg, p).unwrap();
        }
        if i % stride == 0 {
            for (slot, e) in out.iter_mut().zip(energies) {
                slot.push(bound_entry(e, &s).unwrap().ratio);
            }
        }
    }
    out
}

fn criterion_7() -> Verdict {
    let energies: Vec<EnergyDefinition> = BOUND_GOLDENS.iter().map(|&(k, _)| solve_energy(k, 2).unwrap()).collect();
    let runs: Vec<Vec<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = SEEDS
            .map(|seed| {
                let energies = &energies;
                s.spawn(move || bound_run(seed, energies))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread")).collect()
    });
    let reproducible = bound_run(0, &energies) == runs[0];
    let mut pass = reproducible && bound_exponent(2) == 0.0;
    let mut parts = Vec::new();
    for (i, &(k, golden)) in BOUND_GOLDENS.iter().enumerate() {
        let max = runs.iter().flat_map(|r| r[i].iter().copied()).fold(0.0, f64::max);
        let finite = runs.iter().all(|r| r[i].iter().all(|v| v.is_finite()));
        pass &= finite && max <= golden;
        parts.push(format!("k={k} max {max:.4e} (golden {golden:.3e})"));
    }
    (pass, format!("{}; reproducible {reproducible}", parts.join(", ")))
}

#[test]
fn acceptance_criteria() {
    let cells = run_cells();
    let verdicts = [
        ("1 symbolic cancellation suite", criterion_1(&cells)),
        ("2 lemma regression suite", criterion_2(&cells)),
        ("3 hand-matrix oracles and cubic coefficient", criterion_3(&cells)),
        ("4 solver exactness", criterion_4()),
        ("5 symbolic-numeric bridge", criterion_5()),
        ("6 conservation witness", criterion_6()),
        ("7 bound monitors", criterion_7()),
    ];
    for (name, (ok, detail)) in &verdicts {
        println!("criterion {name}: {} | {detail}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed: Vec<&str> = verdicts.iter().filter(|(_, (ok, _))| !ok).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

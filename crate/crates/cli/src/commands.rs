use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;
use serde_json::json;
use sha2::{Digest, Sha256};

use nlsmod::coeff::format_rational;
use nlsmod::document::{export_energy_json, import_energy_json, peek_header};
use nlsmod::energy::{
    build_catalogue, solve_energy, solve_energy_with, verify_lemmas_for, EnergyDefinition, LemmaCheck, SolveOptions,
};
use nlsmod::monitor::{derivative_crosscheck, run_experiment, trajectory, CrosscheckEntry, ExperimentReport, FdConfig};
use nlsmod::spectral::{advance, random_state, SolverConfig, SpectralState};

use crate::config::{check_kp, parse_range, ConfigFile, Defaults, Preset, RunConfig, MAX_K, MAX_P};
use crate::{CliError, Command, RunArgs};

/// Tolerance for exact derivative against its residual decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-9;
/// Tolerance for exact derivative against the finite difference.
pub const FD_TOL: f64 = 1e-4;

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Build { k, p, out } => cmd_build(k, p, out.as_deref()),
        Command::Verify { k, p, corrupt_catalogue } => cmd_verify(&k, &p, corrupt_catalogue),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Crosscheck(a) => cmd_crosscheck(&a),
        Command::Monitor(a) => cmd_monitor(&a),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Writes through a temporary sibling and renames into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_build(k: u32, p: usize, out: Option<&Path>) -> Result<(), CliError> {
    check_kp(k, p)?;
    let energy = solve_energy(k, p)?;
    let json = export_energy_json(&energy);
    match out {
        Some(path) => {
            write_atomic(path, &json)?;
            print!("{energy}");
            println!("wrote {}", path.display());
        }
        None => {
            eprint!("{energy}");
            print!("{json}");
        }
    }
    Ok(())
}

struct CellReport {
    k: u32,
    p: usize,
    lemmas: Result<Vec<LemmaCheck>, String>,
    solve: Result<String, String>,
}

impl CellReport {
    fn passed(&self) -> bool {
        self.solve.is_ok() && self.lemmas.as_ref().is_ok_and(|l| l.iter().all(|c| c.passed))
    }
}

fn verify_cell(k: u32, p: usize, corrupt: bool) -> CellReport {
    let lemmas = build_catalogue(k, p).map_err(|e| e.to_string()).and_then(|mut cat| {
        if corrupt {
            cat.corrupt_for_testing();
        }
        verify_lemmas_for(&cat).map_err(|e| e.to_string())
    });
    let solve = solve_energy(k, p).map_err(|e| e.to_string()).and_then(|e| {
        if !k.is_multiple_of(3) {
            return Ok(format!("solved, {} free", e.free_unknowns.len()));
        }
        let n = build_catalogue(k, p).map_err(|e| e.to_string())?.len();
        let reversed = SolveOptions { pivot_order: Some((0..n).rev().collect()) };
        let other = solve_energy_with(k, p, &reversed).map_err(|e| e.to_string())?;
        if other.cubic_coeff != e.cubic_coeff {
            return Err(format!(
                "cubic coefficient depends on the tie-break: {} vs {}",
                format_rational(&e.cubic_coeff),
                format_rational(&other.cubic_coeff)
            ));
        }
        Ok(format!(
            "solved, {} free, c = {} under both pivot orders",
            e.free_unknowns.len(),
            format_rational(&e.cubic_coeff)
        ))
    });
    CellReport { k, p, lemmas, solve }
}

fn cmd_verify(k: &str, p: &str, corrupt: bool) -> Result<(), CliError> {
    let ks = parse_range(k, 2, MAX_K as u64)?;
    let ps = parse_range(p, 2, MAX_P as u64)?;
    let cells: Vec<(u32, usize)> = ks.iter().flat_map(|&k| ps.iter().map(move |&p| (k as u32, p as usize))).collect();
    let results: Mutex<Vec<Option<CellReport>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(k, p)) = cells.get(i) else { break };
                let r = verify_cell(k, p, corrupt);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("no worker panicked");
    let mut failures = 0;
    for r in results.into_iter().flatten() {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        match &r.lemmas {
            Ok(checks) => {
                let bad = checks.iter().filter(|c| !c.passed).count();
                println!(
                    "{status} k={} p={}: {} identities, {} failed; {}",
                    r.k,
                    r.p,
                    checks.len(),
                    bad,
                    r.solve.as_ref().unwrap_or_else(|e| e)
                );
                for c in checks.iter().filter(|c| !c.passed) {
                    println!("    {c}");
                }
            }
            Err(e) => println!("{status} k={} p={}: identities not checked: {e}", r.k, r.p),
        }
        if !r.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Verification(format!("{failures} (k, p) cell(s) failed")));
    }
    Ok(())
}

/// Energy plus where it came from.
struct LoadedEnergy {
    energy: EnergyDefinition,
    sha256: String,
    source: String,
}

fn resolve_run(args: &RunArgs, defaults: &Defaults) -> Result<(RunConfig, LoadedEnergy), CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            ConfigFile::parse(&text)?
        }
        None => ConfigFile::default(),
    };
    let merged = args.as_config().or(file);
    let Some(path) = merged.energy.clone() else {
        let cfg = RunConfig::resolve(merged, defaults, None, None)?;
        let energy = solve_energy(cfg.k, cfg.p)?;
        let sha256 = sha256_hex(export_energy_json(&energy).as_bytes());
        return Ok((cfg, LoadedEnergy { energy, sha256, source: "solved".into() }));
    };
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("energy document {}: {e}", path.display())))?;
    let (k_doc, p_doc) =
        peek_header(&text).map_err(|e| CliError::Usage(format!("energy document {}: {e}", path.display())))?;
    if let Some(p) = merged.p.filter(|&p| p != p_doc) {
        return Err(CliError::Usage(format!(
            "energy document {} was built for p = {p_doc}, not p = {p}",
            path.display()
        )));
    }
    if let Some(k) = merged.k.filter(|&k| k != k_doc) {
        return Err(CliError::Usage(format!(
            "energy document {} was built for k = {k_doc}, not k = {k}",
            path.display()
        )));
    }
    let cfg = RunConfig::resolve(merged, defaults, Some(k_doc), Some(p_doc))?;
    let energy =
        import_energy_json(&text).map_err(|e| CliError::Usage(format!("energy document {}: {e}", path.display())))?;
    Ok((cfg, LoadedEnergy { energy, sha256: sha256_hex(text.as_bytes()), source: path.display().to_string() }))
}

fn initial_state(cfg: &RunConfig) -> Result<SpectralState, CliError> {
    Ok(match cfg.preset {
        Preset::Random => random_state(cfg.seed, cfg.n_modes, cfg.decay, cfg.r_h1)?,
        Preset::Planewave => {
            SpectralState::plane_wave(cfg.n_modes, Complex64::new(cfg.amplitude, 0.0), cfg.wavenumber)?
        }
    })
}

fn solver_config(cfg: &RunConfig) -> SolverConfig {
    SolverConfig {
        padding_factor: cfg.padding_factor,
        record_stride: cfg.record_stride,
        ..SolverConfig::new(cfg.dt, cfg.t_end, cfg.p)
    }
}

fn fd_config(cfg: &RunConfig) -> FdConfig {
    FdConfig { delta: cfg.fd_delta, dt: cfg.fd_dt, ..FdConfig::default() }
}

/// Largest mode-wise deviation from `A e^{i(nx − ωt)}`, `ω = n² + |A|^{2p}`.
fn planewave_error(cfg: &RunConfig, state: &SpectralState) -> f64 {
    let n = cfg.wavenumber;
    let a = cfg.amplitude;
    let omega = (n * n) as f64 + a.abs().powi(2 * cfg.p as i32);
    let exact = Complex64::from_polar(a, -omega * state.t);
    state
        .wavenumbers()
        .zip(state.modes())
        .map(|(m, z)| if m == n { (z - exact).norm() } else { z.norm() })
        .fold(0.0, f64::max)
}

fn metadata(command: &str, cfg: &RunConfig, energy: &LoadedEnergy, summary: serde_json::Value) -> String {
    let doc = json!({
        "tool": "nlsmod",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg,
        "energy": { "source": energy.source, "sha256": energy.sha256 },
        "summary": summary,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("metadata serializes");
    s.push('\n');
    s
}

/// Writes `csv` to `cfg.out` (plus sidecars) or to stdout.
fn emit(cfg: &RunConfig, csv: &str, meta: &str, extra: &[(&str, String)]) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => {
            write_atomic(path, csv)?;
            write_atomic(&with_suffix(path, ".meta.json"), meta)?;
            for (suffix, contents) in extra {
                write_atomic(&with_suffix(path, suffix), contents)?;
            }
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(csv.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn run_report(cfg: &RunConfig, loaded: &LoadedEnergy) -> Result<ExperimentReport, CliError> {
    let init = initial_state(cfg)?;
    Ok(run_experiment(&loaded.energy, &init, &solver_config(cfg), &fd_config(cfg), Some(cfg.seed))?)
}

fn cmd_simulate(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, loaded) = resolve_run(args, &Defaults { t_end: 1.0, dt: 1e-3, record_every: 0.1 })?;
    let report = run_report(&cfg, &loaded)?;
    let csv = report.to_csv()?;
    let mut summary = json!({ "rows": report.rows.len() });
    if cfg.preset == Preset::Planewave {
        let solver = solver_config(&cfg);
        let mut last = initial_state(&cfg)?;
        advance(&mut last, solver.steps(), solver.dt, &solver, cfg.p)?;
        let err = planewave_error(&cfg, &last);
        summary["planewave_error"] = json!(err);
        eprintln!("plane-wave error at t = {}: {err:e}", last.t);
    }
    emit(&cfg, &csv, &metadata("simulate", &cfg, &loaded, summary), &[])
}

fn crosscheck_csv(entries: &[CrosscheckEntry]) -> String {
    let mut s = String::from("t,exact,decomposition,finite_difference,decomposition_rel_err,fd_rel_err\n");
    for e in entries {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.t, e.exact, e.decomposition, e.finite_difference, e.decomposition_rel_err, e.fd_rel_err
        ));
    }
    s
}

fn cmd_crosscheck(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, loaded) = resolve_run(args, &Defaults { t_end: 0.05, dt: 1e-4, record_every: 0.025 })?;
    let init = initial_state(&cfg)?;
    let solver = solver_config(&cfg);
    let states = trajectory(&init, &solver, cfg.p)?;
    let mut entries = Vec::with_capacity(states.len());
    for s in &states {
        let e = derivative_crosscheck(&loaded.energy, s, &solver, &fd_config(&cfg))?;
        let status = if e.passes(DECOMPOSITION_TOL, FD_TOL) { "pass" } else { "FAIL" };
        println!(
            "{status} t={:<8} exact={:<24e} decomposition rel err={:.3e} finite difference rel err={:.3e}",
            e.t, e.exact, e.decomposition_rel_err, e.fd_rel_err
        );
        entries.push(e);
    }
    let worst_dec = entries.iter().map(|e| e.decomposition_rel_err).fold(0.0, f64::max);
    let worst_fd = entries.iter().map(|e| e.fd_rel_err).fold(0.0, f64::max);
    let summary = json!({
        "samples": entries.len(),
        "max_decomposition_rel_err": worst_dec,
        "max_fd_rel_err": worst_fd,
        "decomposition_tol": DECOMPOSITION_TOL,
        "fd_tol": FD_TOL,
    });
    if let Some(path) = &cfg.out {
        write_atomic(path, &crosscheck_csv(&entries))?;
        write_atomic(&with_suffix(path, ".meta.json"), &metadata("crosscheck", &cfg, &loaded, summary))?;
    }
    if !entries.iter().all(|e| e.passes(DECOMPOSITION_TOL, FD_TOL)) {
        return Err(CliError::Verification(format!(
            "cross-check tolerance violated (worst decomposition {worst_dec:e}, worst finite difference {worst_fd:e})"
        )));
    }
    Ok(())
}

fn cmd_monitor(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, loaded) = resolve_run(args, &Defaults { t_end: 10.0, dt: 1e-3, record_every: 0.1 })?;
    let report = run_report(&cfg, &loaded)?;
    let csv = report.to_csv()?;
    let max_ratio = report.rows.iter().map(|r| r.bound_ratio).fold(0.0, f64::max);
    let final_cubic = report.rows.last().map_or(0.0, |r| r.cubic_remainder);
    println!("max bound ratio: {max_ratio}");
    println!("final cubic remainder: {final_cubic}");
    let summary = json!({
        "rows": report.rows.len(),
        "max_bound_ratio": max_ratio,
        "final_cubic_remainder": final_cubic,
        "density_labels": report.density_labels,
    });
    let densities = report.densities_csv();
    emit(&cfg, &csv, &metadata("monitor", &cfg, &loaded, summary), &[(".densities.csv", densities)])
}

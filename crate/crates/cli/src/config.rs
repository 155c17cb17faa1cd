//! Run configuration: flags, the optional JSON config document, and ranges.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest `k` accepted anywhere on the command line.
pub const MAX_K: u32 = 16;
/// Largest `p` accepted anywhere on the command line.
pub const MAX_P: usize = 8;
/// Largest accepted mode count.
pub const MAX_MODES: usize = 1 << 14;

/// Initial-data family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Planewave,
    Random,
}

/// Values read from `--config`; keys mirror the long flag names.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub k: Option<u32>,
    pub p: Option<usize>,
    pub n_modes: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub r_h1: Option<f64>,
    pub decay: Option<f64>,
    pub energy: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub record_stride: Option<usize>,
    pub padding_factor: Option<usize>,
    pub amplitude: Option<f64>,
    pub wavenumber: Option<i64>,
    pub fd_delta: Option<f64>,
    pub fd_dt: Option<f64>,
}

impl ConfigFile {
    pub fn parse(json: &str) -> Result<Self, CliError> {
        serde_json::from_str(json).map_err(|e| CliError::Usage(format!("config document: {e}")))
    }

    /// Fills every unset field of `self` from `base`.
    pub fn or(self, base: ConfigFile) -> ConfigFile {
        ConfigFile {
            k: self.k.or(base.k),
            p: self.p.or(base.p),
            n_modes: self.n_modes.or(base.n_modes),
            dt: self.dt.or(base.dt),
            t_end: self.t_end.or(base.t_end),
            seed: self.seed.or(base.seed),
            r_h1: self.r_h1.or(base.r_h1),
            decay: self.decay.or(base.decay),
            energy: self.energy.or(base.energy),
            out: self.out.or(base.out),
            preset: self.preset.or(base.preset),
            record_stride: self.record_stride.or(base.record_stride),
            padding_factor: self.padding_factor.or(base.padding_factor),
            amplitude: self.amplitude.or(base.amplitude),
            wavenumber: self.wavenumber.or(base.wavenumber),
            fd_delta: self.fd_delta.or(base.fd_delta),
            fd_dt: self.fd_dt.or(base.fd_dt),
        }
    }
}

/// Fully resolved parameters of a simulation-type command. Serialized into
/// every report's metadata; feeding it back through `--config` reproduces
/// the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub k: u32,
    pub p: usize,
    pub n_modes: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub r_h1: f64,
    pub decay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub preset: Preset,
    pub record_stride: usize,
    pub padding_factor: usize,
    pub amplitude: f64,
    pub wavenumber: i64,
    pub fd_delta: f64,
    pub fd_dt: f64,
}

/// Per-command defaults for fields that have no global default.
pub struct Defaults {
    pub t_end: f64,
    pub dt: f64,
    pub record_every: f64,
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Resolves a merged config, validating every field. `p_hint` is used
    /// when neither flags nor config set `p` (e.g. taken from an energy
    /// document).
    pub fn resolve(c: ConfigFile, d: &Defaults, k_hint: Option<u32>, p_hint: Option<usize>) -> Result<Self, CliError> {
        let k = c.k.or(k_hint).ok_or_else(|| CliError::Usage("--k is required".into()))?;
        let p = c.p.or(p_hint).ok_or_else(|| CliError::Usage("--p is required".into()))?;
        check_kp(k, p)?;
        let n_modes = c.n_modes.unwrap_or(64);
        if !(4..=MAX_MODES).contains(&n_modes) || !n_modes.is_power_of_two() {
            return Err(CliError::Usage(format!(
                "--n-modes must be a power of two in [4, {MAX_MODES}], got {n_modes}"
            )));
        }
        let dt = positive("dt", c.dt.unwrap_or(d.dt))?;
        let t_end = c.t_end.unwrap_or(d.t_end);
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(CliError::Usage(format!("--t-end must be non-negative and finite, got {t_end}")));
        }
        let record_stride = c.record_stride.unwrap_or_else(|| ((d.record_every / dt).round() as usize).max(1));
        if record_stride == 0 {
            return Err(CliError::Usage("--record-stride must be positive".into()));
        }
        let padding_factor = c.padding_factor.unwrap_or(p + 1);
        if padding_factor < p + 1 || padding_factor > 64 {
            return Err(CliError::Usage(format!("--padding-factor must be in [p+1, 64], got {padding_factor}")));
        }
        let wavenumber = c.wavenumber.unwrap_or(1);
        let half = (n_modes / 2) as i64;
        if wavenumber < -half || wavenumber >= half {
            return Err(CliError::Usage(format!("--wavenumber {wavenumber} is outside the {n_modes}-mode band")));
        }
        let decay = c.decay.unwrap_or(3.0);
        if !decay.is_finite() {
            return Err(CliError::Usage(format!("--decay must be finite, got {decay}")));
        }
        let amplitude = c.amplitude.unwrap_or(0.5);
        if !amplitude.is_finite() {
            return Err(CliError::Usage(format!("--amplitude must be finite, got {amplitude}")));
        }
        Ok(RunConfig {
            k,
            p,
            n_modes,
            dt,
            t_end,
            seed: c.seed.unwrap_or(0),
            r_h1: positive("r-h1", c.r_h1.unwrap_or(1.0))?,
            decay,
            energy: c.energy,
            out: c.out,
            preset: c.preset.unwrap_or(Preset::Random),
            record_stride,
            padding_factor,
            amplitude,
            wavenumber,
            fd_delta: positive("fd-delta", c.fd_delta.unwrap_or(1e-4))?,
            fd_dt: positive("fd-dt", c.fd_dt.unwrap_or(1e-5))?,
        })
    }
}

pub fn check_kp(k: u32, p: usize) -> Result<(), CliError> {
    if !(2..=MAX_K).contains(&k) {
        return Err(CliError::Usage(format!("--k must be in [2, {MAX_K}], got {k}")));
    }
    if !(2..=MAX_P).contains(&p) {
        return Err(CliError::Usage(format!("--p must be in [2, {MAX_P}], got {p}")));
    }
    Ok(())
}

/// Parses `"a..b"` (inclusive), `"a"`, or comma-separated lists of either,
/// returning the sorted distinct values within `[lo, hi]`.
pub fn parse_range(s: &str, lo: u64, hi: u64) -> Result<Vec<u64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("invalid range `{s}`: {why}"));
    let num = |t: &str| -> Result<u64, CliError> {
        let t = t.trim();
        if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("expected a non-negative integer"));
        }
        let v: u64 = t.parse().map_err(|_| bad("number too large"))?;
        if v < lo || v > hi {
            return Err(bad(&format!("values must lie in [{lo}, {hi}]")));
        }
        Ok(v)
    };
    let mut out = Vec::new();
    for part in s.split(',') {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(bad("empty range"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..5", 2, 16).unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_range("3", 2, 16).unwrap(), vec![3]);
        assert_eq!(parse_range("7,2..3,3", 2, 16).unwrap(), vec![2, 3, 7]);
        assert!(parse_range("1..3", 2, 16).is_err());
        assert!(parse_range("5..3", 2, 16).is_err());
        assert!(parse_range("", 2, 16).is_err());
        assert!(parse_range("2..", 2, 16).is_err());
        assert!(parse_range("99999999999999999999999", 2, 16).is_err());
    }

    #[test]
    fn flags_override_config() {
        let file = ConfigFile::parse(r#"{"k": 4, "p": 3, "dt": 0.01}"#).unwrap();
        let flags = ConfigFile { k: Some(5), ..Default::default() };
        let d = Defaults { t_end: 1.0, dt: 1e-3, record_every: 0.1 };
        let c = RunConfig::resolve(flags.or(file), &d, None, None).unwrap();
        assert_eq!((c.k, c.p, c.dt, c.record_stride), (5, 3, 0.01, 10));
        assert!(ConfigFile::parse(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let d = Defaults { t_end: 1.0, dt: 1e-3, record_every: 0.1 };
        let c =
            RunConfig::resolve(ConfigFile { k: Some(3), p: Some(2), ..Default::default() }, &d, None, None).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let again = RunConfig::resolve(ConfigFile::parse(&json).unwrap(), &d, None, None).unwrap();
        assert_eq!(c, again);
    }
}

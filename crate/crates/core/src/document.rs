//! Versioned JSON form of an [`EnergyDefinition`].
//!
//! Rationals are strings `"a/b"` (or `"a"`), expressions are arrays of term
//! lines in the text format of [`crate::text`]. Import re-checks everything
//! that export guarantees.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff::{format_rational, parse_rational, Rational};
use crate::density::{classify, DensityClass, DensityExpr};
use crate::energy::{build_catalogue, check_params, gamma_sector, EnergyDefinition, EnergyError};
use crate::reduce::reduce_modulo;
use crate::text::{expr_from_lines, expr_to_lines, ParseExprError};

pub const SCHEMA_NAME: &str = "nlsmod.energy";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyDocument {
    pub schema: String,
    pub version: u32,
    pub k: u32,
    pub p: usize,
    pub coefficients: BTreeMap<String, String>,
    #[serde(default)]
    pub free_unknowns: Vec<String>,
    #[serde(rename = "F_k")]
    pub f_k: Vec<String>,
    pub residual_omega: Vec<String>,
    pub residual_theta: Vec<String>,
    pub cubic_coeff: String,
    pub exact_derivative: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed energy document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("document schema `{found}` is not `{SCHEMA_NAME}`")]
    WrongSchema { found: String },
    #[error("document version {found} is not supported (expected {SCHEMA_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("field `{field}`: {source}")]
    Expression {
        field: &'static str,
        #[source]
        source: ParseExprError,
    },
    #[error("field `{field}`: `{value}` is not a rational number")]
    Rational { field: String, value: String },
    #[error("coefficient `{0}` does not belong to the catalogue")]
    UnknownCoefficient(String),
    #[error("coefficient `{0}` is missing")]
    MissingCoefficient(String),
    #[error("F_k is not equal to the correction determined by the coefficients")]
    CorrectionMismatch,
    #[error("invariant violated: {0}")]
    Invariant(#[from] EnergyError),
}

pub fn export_energy(energy: &EnergyDefinition) -> EnergyDocument {
    EnergyDocument {
        schema: SCHEMA_NAME.to_string(),
        version: SCHEMA_VERSION,
        k: energy.k,
        p: energy.p,
        coefficients: energy.coefficients.iter().map(|(n, c)| (n.clone(), format_rational(c))).collect(),
        free_unknowns: energy.free_unknowns.clone(),
        f_k: expr_to_lines(&energy.f_k),
        residual_omega: expr_to_lines(&energy.residual_omega),
        residual_theta: expr_to_lines(&energy.residual_theta),
        cubic_coeff: format_rational(&energy.cubic_coeff),
        exact_derivative: expr_to_lines(&energy.exact_derivative),
    }
}

pub fn export_energy_json(energy: &EnergyDefinition) -> String {
    let mut s = serde_json::to_string_pretty(&export_energy(energy)).expect("document serializes");
    s.push('\n');
    s
}

fn rational(field: &str, value: &str) -> Result<Rational, DocumentError> {
    parse_rational(value).ok_or_else(|| DocumentError::Rational { field: field.to_string(), value: value.to_string() })
}

fn expr(field: &'static str, lines: &[String]) -> Result<DensityExpr, DocumentError> {
    expr_from_lines(lines).map_err(|source| DocumentError::Expression { field, source })
}

/// Reads only the header fields, for cheap compatibility checks.
pub fn peek_header(json: &str) -> Result<(u32, usize), DocumentError> {
    #[derive(Deserialize)]
    struct Header {
        schema: String,
        version: u32,
        k: u32,
        p: usize,
    }
    let h: Header = serde_json::from_str(json)?;
    if h.schema != SCHEMA_NAME {
        return Err(DocumentError::WrongSchema { found: h.schema });
    }
    if h.version != SCHEMA_VERSION {
        return Err(DocumentError::VersionMismatch { found: h.version });
    }
    Ok((h.k, h.p))
}

pub fn import_energy_json(json: &str) -> Result<EnergyDefinition, DocumentError> {
    peek_header(json)?;
    let doc: EnergyDocument = serde_json::from_str(json)?;
    import_energy(&doc)
}

/// Parses and fully re-validates a document: catalogue membership of the
/// coefficients, `F_k` against the coefficients (modulo integration by parts),
/// class membership, and the derivative decomposition.
pub fn import_energy(doc: &EnergyDocument) -> Result<EnergyDefinition, DocumentError> {
    if doc.schema != SCHEMA_NAME {
        return Err(DocumentError::WrongSchema { found: doc.schema.clone() });
    }
    if doc.version != SCHEMA_VERSION {
        return Err(DocumentError::VersionMismatch { found: doc.version });
    }
    check_params(doc.k, doc.p)?;
    let (k, p) = (doc.k, doc.p);
    let cat = build_catalogue(k, p)?;
    for name in doc.coefficients.keys() {
        if !cat.entries.iter().any(|e| &e.unknown == name) {
            return Err(DocumentError::UnknownCoefficient(name.clone()));
        }
    }
    for name in &doc.free_unknowns {
        if !cat.entries.iter().any(|e| &e.unknown == name) {
            return Err(DocumentError::UnknownCoefficient(name.clone()));
        }
    }
    let mut coefficients = Vec::with_capacity(cat.len());
    for e in &cat.entries {
        let v = doc.coefficients.get(&e.unknown).ok_or_else(|| DocumentError::MissingCoefficient(e.unknown.clone()))?;
        coefficients.push((e.unknown.clone(), rational(&e.unknown, v)?));
    }
    let free_unknowns =
        cat.entries.iter().map(|e| e.unknown.clone()).filter(|n| doc.free_unknowns.contains(n)).collect();
    let f_k = expr("F_k", &doc.f_k)?;
    let energy = EnergyDefinition {
        k,
        p,
        coefficients,
        free_unknowns,
        f_k,
        residual_omega: expr("residual_omega", &doc.residual_omega)?,
        residual_theta: expr("residual_theta", &doc.residual_theta)?,
        cubic_coeff: rational("cubic_coeff", &doc.cubic_coeff)?,
        exact_derivative: expr("exact_derivative", &doc.exact_derivative)?,
    };
    if let Some(m) = energy.f_k.monomials().find(|m| classify(m, k, p) != DensityClass::Gamma) {
        return Err(EnergyError::Inconsistent(format!("F_k contains {m}, which is not of class Gamma")).into());
    }
    let gap = energy.f_k.sub(&energy.raw_correction()?);
    if !gap.is_zero() {
        let sig = gamma_sector(k, p);
        if gap.signatures() != vec![sig] {
            return Err(DocumentError::CorrectionMismatch);
        }
        let gens = crate::density::ibp_generators(sig, sig.total_derivs);
        let r = reduce_modulo(&gap, &gens, &[]).map_err(|e| EnergyError::Inconsistent(e.to_string()))?;
        if !r.residual.is_zero() {
            return Err(DocumentError::CorrectionMismatch);
        }
    }
    energy.check_invariants()?;
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::solve_energy;

    #[test]
    fn round_trip_is_identity() {
        let e = solve_energy(3, 2).unwrap();
        let json = export_energy_json(&e);
        assert_eq!(import_energy_json(&json).unwrap(), e);
    }

    #[test]
    fn version_and_schema_checked() {
        let e = solve_energy(2, 2).unwrap();
        let mut doc = export_energy(&e);
        doc.version = 2;
        assert!(matches!(import_energy(&doc), Err(DocumentError::VersionMismatch { found: 2 })));
        let mut doc = export_energy(&e);
        doc.schema = "other".into();
        assert!(matches!(import_energy(&doc), Err(DocumentError::WrongSchema { .. })));
        assert!(matches!(import_energy_json("{"), Err(DocumentError::Malformed(_))));
    }

    #[test]
    fn unknown_coefficient_rejected() {
        let e = solve_energy(2, 2).unwrap();
        let mut doc = export_energy(&e);
        doc.coefficients.insert("delta_9".into(), "1".into());
        assert!(matches!(import_energy(&doc), Err(DocumentError::UnknownCoefficient(_))));
    }
}

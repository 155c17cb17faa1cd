//! Line-oriented text form of [`DensityExpr`].
//!
//! One term per line, `coeff * d^i1[u] d^i2[u] ... d^j1[conj(u)] ...`, in the
//! expression's canonical term order. The zero expression is the single line
//! `0`. Golden files depend on this layout.

use std::fmt::Write as _;

use thiserror::Error;

use crate::coeff::Coeff;
use crate::density::{DensityExpr, DensityMonomial};

/// Longest accepted derivative order; keeps hostile input from allocating.
pub const MAX_PARSED_ORDER: u32 = 1 << 16;
/// Most factors accepted in one parsed monomial.
pub const MAX_PARSED_FACTORS: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseExprError {
    #[error("line {line}: missing ` * ` between coefficient and factors")]
    MissingSeparator { line: usize },
    #[error("line {line}: {source}")]
    Coefficient {
        line: usize,
        #[source]
        source: crate::coeff::CoeffParseError,
    },
    #[error("line {line}: malformed factor `{token}`")]
    Factor { line: usize, token: String },
    #[error("line {line}: too many factors")]
    TooManyFactors { line: usize },
}

pub fn format_expr(e: &DensityExpr) -> String {
    if e.is_zero() {
        return "0\n".to_string();
    }
    let mut out = String::new();
    for (m, c) in e.terms() {
        writeln!(out, "{} * {}", c, m).unwrap();
    }
    out
}

/// Term strings without the trailing newline, for embedding in documents.
pub fn expr_to_lines(e: &DensityExpr) -> Vec<String> {
    e.terms().map(|(m, c)| format!("{} * {}", c, m)).collect()
}

pub fn expr_from_lines<S: AsRef<str>>(lines: &[S]) -> Result<DensityExpr, ParseExprError> {
    let mut e = DensityExpr::zero();
    for (n, line) in lines.iter().enumerate() {
        let line = line.as_ref().trim();
        if line.is_empty() || line == "0" {
            continue;
        }
        let (m, c) = parse_term(line, n + 1)?;
        e.add_term(m, &c);
    }
    Ok(e)
}

pub fn parse_expr(s: &str) -> Result<DensityExpr, ParseExprError> {
    let lines: Vec<&str> = s.lines().collect();
    expr_from_lines(&lines)
}

fn parse_term(line: &str, n: usize) -> Result<(DensityMonomial, Coeff), ParseExprError> {
    let (coeff, factors) = line.split_once(" * ").ok_or(ParseExprError::MissingSeparator { line: n })?;
    let c: Coeff = coeff.parse().map_err(|source| ParseExprError::Coefficient { line: n, source })?;
    let (mut u, mut ubar) = (Vec::new(), Vec::new());
    let factors = factors.trim();
    if factors != "1" {
        for tok in factors.split_whitespace() {
            if u.len() + ubar.len() >= MAX_PARSED_FACTORS {
                return Err(ParseExprError::TooManyFactors { line: n });
            }
            let bad = || ParseExprError::Factor { line: n, token: tok.to_string() };
            let rest = tok.strip_prefix("d^").ok_or_else(bad)?;
            let open = rest.find('[').ok_or_else(bad)?;
            let digits = &rest[..open];
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let order: u32 = digits.parse().map_err(|_| bad())?;
            if order > MAX_PARSED_ORDER {
                return Err(bad());
            }
            match &rest[open..] {
                "[u]" => u.push(order),
                "[conj(u)]" => ubar.push(order),
                _ => return Err(bad()),
            }
        }
    }
    Ok((DensityMonomial::new(u, ubar), c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{ratio, Rational};

    #[test]
    fn golden_layout() {
        let mut e = DensityExpr::zero();
        e.add_term(DensityMonomial::new(vec![0, 2], vec![1]), &Coeff::new(ratio(1, 2), ratio(-3, 4)));
        e.add_term(DensityMonomial::new(vec![1], vec![1]), &Coeff::from_int(2));
        assert_eq!(format_expr(&e), "2 * d^1[u] d^1[conj(u)]\n1/2-3/4*i * d^2[u] d^0[u] d^1[conj(u)]\n");
        assert_eq!(parse_expr(&format_expr(&e)).unwrap(), e);
        assert_eq!(format_expr(&DensityExpr::zero()), "0\n");
        assert!(parse_expr("0\n").unwrap().is_zero());
    }

    #[test]
    fn parse_merges_and_canonicalizes() {
        let e = parse_expr("1 * d^0[u] d^2[u]\n-1 * d^2[u] d^0[u]\n").unwrap();
        assert!(e.is_zero());
        let e = parse_expr("1*i * d^0[conj(u)] d^3[conj(u)]").unwrap();
        assert_eq!(
            e.coeff(&DensityMonomial::new(vec![], vec![3, 0])),
            Coeff::new(Rational::from_integer(0.into()), ratio(1, 1))
        );
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_expr("1 d^0[u]"), Err(ParseExprError::MissingSeparator { .. })));
        assert!(matches!(parse_expr("x * d^0[u]"), Err(ParseExprError::Coefficient { .. })));
        assert!(matches!(parse_expr("1 * d^[u]"), Err(ParseExprError::Factor { .. })));
        assert!(matches!(parse_expr("1 * d^1[v]"), Err(ParseExprError::Factor { .. })));
        assert!(matches!(parse_expr("1 * d^99999999999[u]"), Err(ParseExprError::Factor { .. })));
    }
}

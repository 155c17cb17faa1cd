//! Exact span-membership tests over Gaussian rationals.
//!
//! Vectors live on a finite set of monomials. Each monomial gets a column
//! index whose magnitude is its elimination priority: the echelon basis uses
//! the highest-index monomial of each row as pivot, and reduction walks
//! columns from high to low. The reduced form of a vector is therefore the
//! unique representative of its coset that contains no pivot monomial, which
//! makes residuals independent of generator order.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::coeff::Coeff;
use crate::density::{DensityExpr, DensityMonomial, Signature};

type SparseVec = BTreeMap<u32, Coeff>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReduceError {
    #[error("inputs mix signature sectors {first} and {second}")]
    MixedSignatures { first: Signature, second: Signature },
}

/// Column indexing of a monomial set. Higher tier means eliminated first;
/// ties are broken by the canonical monomial order.
#[derive(Clone, Debug)]
pub struct Columns {
    monos: Vec<DensityMonomial>,
    index: HashMap<DensityMonomial, u32>,
}

impl Columns {
    pub fn new<F: Fn(&DensityMonomial) -> u8>(mut monos: Vec<DensityMonomial>, tier: F) -> Self {
        monos.sort();
        monos.dedup();
        monos.sort_by(|a, b| tier(a).cmp(&tier(b)).then_with(|| a.cmp(b)));
        let index = monos.iter().enumerate().map(|(i, m)| (m.clone(), i as u32)).collect();
        Columns { monos, index }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn monomial(&self, col: u32) -> &DensityMonomial {
        &self.monos[col as usize]
    }

    pub fn column(&self, m: &DensityMonomial) -> Option<u32> {
        self.index.get(m).copied()
    }

    /// Sparse image of `e`; monomials outside the column set are returned
    /// separately.
    fn split(&self, e: &DensityExpr) -> (SparseVec, DensityExpr) {
        let mut v = SparseVec::new();
        let mut outside = DensityExpr::zero();
        for (m, c) in e.terms() {
            match self.index.get(m) {
                Some(&col) => {
                    v.insert(col, c.clone());
                }
                None => outside.add_term(m.clone(), c),
            }
        }
        (v, outside)
    }

    fn to_expr(&self, v: &SparseVec) -> DensityExpr {
        DensityExpr::from_terms(v.iter().map(|(&col, c)| (self.monos[col as usize].clone(), c.clone())))
    }
}

struct Row {
    vec: SparseVec,
    /// Combination of the original generators producing `vec`.
    cert: Option<BTreeMap<usize, Coeff>>,
}

/// Row-echelon basis of a span of generators, built incrementally.
pub struct Reducer {
    cols: Columns,
    rows: HashMap<u32, Row>,
    track: bool,
    n_generators: usize,
}

fn axpy(target: &mut SparseVec, factor: &Coeff, src: &SparseVec) {
    for (&col, c) in src {
        let delta = factor * c;
        match target.entry(col) {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += &delta;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                if !delta.is_zero() {
                    v.insert(delta);
                }
            }
        }
    }
}

fn axpy_cert(target: &mut BTreeMap<usize, Coeff>, factor: &Coeff, src: &BTreeMap<usize, Coeff>) {
    for (&g, c) in src {
        let delta = factor * c;
        let slot = target.entry(g).or_insert_with(Coeff::zero);
        *slot += &delta;
        if slot.is_zero() {
            target.remove(&g);
        }
    }
}

impl Reducer {
    /// Empty span over `cols`. With `track_certificates`, every row remembers
    /// which generators produced it.
    pub fn new(cols: Columns, track_certificates: bool) -> Self {
        Reducer { cols, rows: HashMap::new(), track: track_certificates, n_generators: 0 }
    }

    pub fn columns(&self) -> &Columns {
        &self.cols
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn generator_count(&self) -> usize {
        self.n_generators
    }

    /// Adds a generator. Monomials outside the column set are dropped, i.e.
    /// the span is taken modulo them. Returns whether the rank grew.
    pub fn add_generator(&mut self, g: &DensityExpr) -> bool {
        let id = self.n_generators;
        self.n_generators += 1;
        let (v, _) = self.cols.split(g);
        let cert = self.track.then(|| BTreeMap::from([(id, Coeff::one())]));
        let (v, cert) = self.reduce_vec(v, cert);
        let Some((&lead, lead_c)) = v.iter().next_back() else {
            return false;
        };
        let inv = lead_c.inv().expect("nonzero pivot");
        let vec: SparseVec = v.iter().map(|(&c, x)| (c, x * &inv)).collect();
        let cert = cert.map(|cm| cm.into_iter().map(|(g, x)| (g, &x * &inv)).collect());
        self.rows.insert(lead, Row { vec, cert });
        true
    }

    fn reduce_vec(
        &self,
        mut v: SparseVec,
        mut cert: Option<BTreeMap<usize, Coeff>>,
    ) -> (SparseVec, Option<BTreeMap<usize, Coeff>>) {
        let mut cursor = u32::MAX;
        while let Some((&col, c)) = v.range(..cursor).next_back() {
            cursor = col;
            if let Some(row) = self.rows.get(&col) {
                let factor = -c.clone();
                axpy(&mut v, &factor, &row.vec);
                debug_assert!(!v.contains_key(&col));
                if let (Some(cm), Some(rc)) = (cert.as_mut(), row.cert.as_ref()) {
                    // The certificate records what was subtracted from the input.
                    axpy_cert(cm, &factor, rc);
                }
            }
        }
        (v, cert)
    }

    /// Canonical representative of `e` modulo the span (and modulo monomials
    /// outside the column set, which are discarded).
    pub fn normal_form(&self, e: &DensityExpr) -> DensityExpr {
        let (v, _) = self.cols.split(e);
        let (v, _) = self.reduce_vec(v, None);
        self.cols.to_expr(&v)
    }

    /// Normal form plus the generator combination that was subtracted:
    /// `e − Σ cert[g]·generator[g] − (dropped part) = normal form`.
    pub fn normal_form_with_certificate(&self, e: &DensityExpr) -> (DensityExpr, Vec<Coeff>) {
        let (v, _) = self.cols.split(e);
        let (v, cert) = self.reduce_vec(v, Some(BTreeMap::new()));
        let mut out = vec![Coeff::zero(); self.n_generators];
        // reduce_vec accumulated `−subtracted`; flip the sign.
        for (g, c) in cert.unwrap_or_default() {
            out[g] = -c;
        }
        (self.cols.to_expr(&v), out)
    }

    pub fn contains(&self, e: &DensityExpr) -> bool {
        self.normal_form(e).is_zero()
    }
}

/// Outcome of [`reduce_modulo`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub residual: DensityExpr,
    /// One coefficient per generator, in input order.
    pub generator_coeffs: Vec<Coeff>,
    /// Combination of allowed monomials that was discarded.
    pub allowed_part: DensityExpr,
}

impl Reduction {
    /// Number of generators with a nonzero coefficient.
    pub fn certificate_size(&self) -> usize {
        self.generator_coeffs.iter().filter(|c| !c.is_zero()).count()
    }

    /// Re-expands the certificate: `expr = residual + Σ c_g g + allowed_part`.
    pub fn reproduces(&self, expr: &DensityExpr, generators: &[DensityExpr]) -> bool {
        let mut rebuilt = self.residual.plus(&self.allowed_part);
        for (g, c) in generators.iter().zip(&self.generator_coeffs) {
            rebuilt.add_scaled(g, c);
        }
        rebuilt == *expr
    }
}

fn common_signature<'a, I>(items: I) -> Result<Option<Signature>, ReduceError>
where
    I: IntoIterator<Item = &'a DensityMonomial>,
{
    let mut sig: Option<Signature> = None;
    for m in items {
        let s = m.signature();
        match sig {
            None => sig = Some(s),
            Some(first) if first != s => {
                return Err(ReduceError::MixedSignatures { first, second: s });
            }
            _ => {}
        }
    }
    Ok(sig)
}

/// Reduces `expr` modulo the span of `generators` and the coordinate span of
/// `allowed`. The residual is zero iff `expr` lies in that span. All inputs
/// must share one signature sector.
pub fn reduce_modulo(
    expr: &DensityExpr,
    generators: &[DensityExpr],
    allowed: &[DensityMonomial],
) -> Result<Reduction, ReduceError> {
    common_signature(expr.monomials().chain(generators.iter().flat_map(|g| g.monomials())).chain(allowed.iter()))?;
    let allowed_set: std::collections::HashSet<&DensityMonomial> = allowed.iter().collect();
    let mut monos: Vec<DensityMonomial> = expr
        .monomials()
        .chain(generators.iter().flat_map(|g| g.monomials()))
        .filter(|m| !allowed_set.contains(m))
        .cloned()
        .collect();
    monos.sort();
    monos.dedup();
    let mut reducer = Reducer::new(Columns::new(monos, |_| 0), true);
    for g in generators {
        reducer.add_generator(g);
    }
    let (residual, generator_coeffs) = reducer.normal_form_with_certificate(expr);
    let mut allowed_part = expr.sub(&residual);
    for (g, c) in generators.iter().zip(&generator_coeffs) {
        allowed_part.add_scaled(g, &-c.clone());
    }
    debug_assert!(allowed_part.monomials().all(|m| allowed_set.contains(m)));
    Ok(Reduction { residual, generator_coeffs, allowed_part })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{ibp_generators, mass_density};

    fn mono(u: &[u32], ub: &[u32]) -> DensityMonomial {
        DensityMonomial::new(u.to_vec(), ub.to_vec())
    }

    #[test]
    fn single_ibp_identity() {
        // ∫∂u∂ū + ∫u∂²ū = ∫∂(u∂ū)
        let mut e = DensityExpr::monomial(mono(&[1], &[1]));
        e.add_term(mono(&[0], &[2]), &Coeff::one());
        let gens = ibp_generators(Signature::new(1, 1, 2), 2);
        let r = reduce_modulo(&e, &gens, &[]).unwrap();
        assert!(r.residual.is_zero());
        assert!(r.reproduces(&e, &gens));
    }

    #[test]
    fn star_of_mass_is_total_derivative() {
        let s = mass_density().star();
        let gens = ibp_generators(Signature::new(1, 1, 2), 2);
        assert!(reduce_modulo(&s, &gens, &[]).unwrap().residual.is_zero());
    }

    #[test]
    fn non_member_keeps_residual() {
        // ∫u∂²ū is not a total derivative on its own.
        let e = DensityExpr::monomial(mono(&[1, 0], &[1, 0]));
        let gens = ibp_generators(Signature::new(2, 2, 2), 2);
        let r = reduce_modulo(&e, &gens, &[]).unwrap();
        assert!(!r.residual.is_zero());
        assert!(r.reproduces(&e, &gens));
        // Allowing the monomial removes it.
        let r = reduce_modulo(&e, &gens, &[mono(&[1, 0], &[1, 0])]).unwrap();
        assert!(r.residual.is_zero());
        assert!(r.reproduces(&e, &gens));
    }

    #[test]
    fn mixed_signatures_rejected() {
        let e = DensityExpr::monomial(mono(&[1], &[1]));
        let gens = ibp_generators(Signature::new(1, 1, 1), 1);
        assert!(matches!(reduce_modulo(&e, &gens, &[]), Err(ReduceError::MixedSignatures { .. })));
    }
}

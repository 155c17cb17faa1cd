//! Density functionals `∫ ∂^{i1}u ⋯ ∂^{in}u ∂^{j1}ū ⋯ ∂^{jm}ū` on the torus and
//! finite linear combinations of them with Gaussian-rational coefficients.
//!
//! A monomial is stored canonically as two descending order lists, one for the
//! factors of `u` and one for the factors of `ū`. Expressions keep their terms
//! in a `BTreeMap`, so iteration order (and therefore every derived output) is
//! deterministic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};

use crate::coeff::{rat, Coeff, Rational};

/// A single factor `∂^order u` (or `∂^order ū` when `conjugated`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Factor {
    pub order: u32,
    pub conjugated: bool,
}

impl Factor {
    pub fn u(order: u32) -> Self {
        Factor { order, conjugated: false }
    }

    pub fn ubar(order: u32) -> Self {
        Factor { order, conjugated: true }
    }
}

/// Factor counts and total number of derivatives. Integration by parts
/// preserves it; linear-flow substitution adds two derivatives; the
/// nonlinear substitution adds `p` factors of each kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    pub n_u: usize,
    pub n_ubar: usize,
    pub total_derivs: u32,
}

impl Signature {
    pub fn new(n_u: usize, n_ubar: usize, total_derivs: u32) -> Self {
        Signature { n_u, n_ubar, total_derivs }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.n_u, self.n_ubar, self.total_derivs)
    }
}

/// Canonical monomial: both order lists sorted descending.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DensityMonomial {
    u: Vec<u32>,
    ubar: Vec<u32>,
}

impl DensityMonomial {
    /// Builds the canonical monomial from unsorted order lists.
    pub fn new(mut u: Vec<u32>, mut ubar: Vec<u32>) -> Self {
        u.sort_unstable_by(|a, b| b.cmp(a));
        ubar.sort_unstable_by(|a, b| b.cmp(a));
        DensityMonomial { u, ubar }
    }

    pub fn from_factors<I: IntoIterator<Item = Factor>>(factors: I) -> Self {
        let (mut u, mut ubar) = (Vec::new(), Vec::new());
        for f in factors {
            if f.conjugated {
                ubar.push(f.order);
            } else {
                u.push(f.order);
            }
        }
        DensityMonomial::new(u, ubar)
    }

    pub fn u_orders(&self) -> &[u32] {
        &self.u
    }

    pub fn ubar_orders(&self) -> &[u32] {
        &self.ubar
    }

    pub fn factors(&self) -> impl Iterator<Item = Factor> + '_ {
        self.u.iter().map(|&o| Factor::u(o)).chain(self.ubar.iter().map(|&o| Factor::ubar(o)))
    }

    pub fn factor_count(&self) -> usize {
        self.u.len() + self.ubar.len()
    }

    pub fn signature(&self) -> Signature {
        Signature { n_u: self.u.len(), n_ubar: self.ubar.len(), total_derivs: self.u.iter().chain(&self.ubar).sum() }
    }

    /// Largest derivative order over all factors (0 for an empty monomial).
    pub fn max_order(&self) -> u32 {
        self.u.first().copied().unwrap_or(0).max(self.ubar.first().copied().unwrap_or(0))
    }

    /// Number of factors carrying at least one derivative.
    pub fn derivative_bearing(&self) -> usize {
        self.u.iter().chain(&self.ubar).filter(|&&o| o > 0).count()
    }

    pub fn conjugate(&self) -> Self {
        DensityMonomial { u: self.ubar.clone(), ubar: self.u.clone() }
    }

    /// Copy with the factor at position `idx` (u block first, then ū block)
    /// raised by `by` derivatives.
    pub fn raise(&self, idx: usize, by: u32) -> Self {
        let (mut u, mut ubar) = (self.u.clone(), self.ubar.clone());
        if idx < u.len() {
            u[idx] += by;
        } else {
            ubar[idx - u.len()] += by;
        }
        DensityMonomial::new(u, ubar)
    }

    /// Product of two monomials.
    pub fn mul(&self, other: &DensityMonomial) -> Self {
        let mut u = self.u.clone();
        u.extend_from_slice(&other.u);
        let mut ubar = self.ubar.clone();
        ubar.extend_from_slice(&other.ubar);
        DensityMonomial::new(u, ubar)
    }
}

/// Order: signature, then highest derivative order, then the `u` list and the
/// `ū` list lexicographically. Within one signature sector the maximum of a
/// set of monomials is therefore one with the largest derivative order.
impl Ord for DensityMonomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.signature()
            .cmp(&other.signature())
            .then_with(|| self.max_order().cmp(&other.max_order()))
            .then_with(|| self.u.cmp(&other.u))
            .then_with(|| self.ubar.cmp(&other.ubar))
    }
}

impl PartialOrd for DensityMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DensityMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for fac in self.factors() {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            if fac.conjugated {
                write!(f, "d^{}[conj(u)]", fac.order)?;
            } else {
                write!(f, "d^{}[u]", fac.order)?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

/// Finite linear combination of canonical monomials. Zero coefficients are
/// never stored.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DensityExpr {
    terms: BTreeMap<DensityMonomial, Coeff>,
}

impl DensityExpr {
    pub fn zero() -> Self {
        DensityExpr::default()
    }

    pub fn monomial(m: DensityMonomial) -> Self {
        DensityExpr::term(Coeff::one(), m)
    }

    pub fn term(c: Coeff, m: DensityMonomial) -> Self {
        let mut e = DensityExpr::zero();
        e.add_term(m, &c);
        e
    }

    pub fn from_terms<I: IntoIterator<Item = (DensityMonomial, Coeff)>>(terms: I) -> Self {
        let mut e = DensityExpr::zero();
        for (m, c) in terms {
            e.add_term(m, &c);
        }
        e
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&DensityMonomial, &Coeff)> {
        self.terms.iter()
    }

    pub fn monomials(&self) -> impl Iterator<Item = &DensityMonomial> {
        self.terms.keys()
    }

    pub fn coeff(&self, m: &DensityMonomial) -> Coeff {
        self.terms.get(m).cloned().unwrap_or_else(Coeff::zero)
    }

    pub fn add_term(&mut self, m: DensityMonomial, c: &Coeff) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c.clone());
            }
        }
    }

    pub fn add_scaled(&mut self, other: &DensityExpr, c: &Coeff) {
        if c.is_zero() {
            return;
        }
        for (m, d) in &other.terms {
            self.add_term(m.clone(), &(d * c));
        }
    }

    pub fn scaled(&self, c: &Coeff) -> DensityExpr {
        let mut e = DensityExpr::zero();
        e.add_scaled(self, c);
        e
    }

    pub fn scaled_rat(&self, r: &Rational) -> DensityExpr {
        self.scaled(&Coeff::real(r.clone()))
    }

    pub fn neg(&self) -> DensityExpr {
        self.scaled(&Coeff::from_int(-1))
    }

    pub fn sub(&self, other: &DensityExpr) -> DensityExpr {
        let mut e = self.clone();
        e.add_scaled(other, &Coeff::from_int(-1));
        e
    }

    pub fn plus(&self, other: &DensityExpr) -> DensityExpr {
        let mut e = self.clone();
        e.add_scaled(other, &Coeff::one());
        e
    }

    /// Complex conjugation: every factor flips, every coefficient is conjugated.
    pub fn conjugate(&self) -> DensityExpr {
        DensityExpr::from_terms(self.terms.iter().map(|(m, c)| (m.conjugate(), c.conj())))
    }

    /// `(e + conj(e)) / 2`.
    pub fn re_part(&self) -> DensityExpr {
        self.plus(&self.conjugate()).scaled_rat(&Rational::new(1.into(), 2.into()))
    }

    /// `(e − conj(e)) / (2i)`.
    pub fn im_part(&self) -> DensityExpr {
        let half_over_i = Coeff::new(Rational::zero(), Rational::new((-1).into(), 2.into()));
        self.sub(&self.conjugate()).scaled(&half_over_i)
    }

    /// True iff the functional is real valued, i.e. fixed by conjugation.
    pub fn is_real_valued(&self) -> bool {
        self.conjugate() == *self
    }

    pub fn max_order(&self) -> u32 {
        self.terms.keys().map(|m| m.max_order()).max().unwrap_or(0)
    }

    /// Distinct signatures present, ascending.
    pub fn signatures(&self) -> Vec<Signature> {
        let mut s: Vec<_> = self.terms.keys().map(|m| m.signature()).collect();
        s.dedup();
        s.sort();
        s.dedup();
        s
    }

    /// Part of the expression living in the given sector.
    pub fn sector(&self, sig: Signature) -> DensityExpr {
        DensityExpr {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.signature() == sig)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn filter<F: Fn(&DensityMonomial) -> bool>(&self, keep: F) -> DensityExpr {
        DensityExpr { terms: self.terms.iter().filter(|(m, _)| keep(m)).map(|(m, c)| (m.clone(), c.clone())).collect() }
    }

    /// Contribution of the linear flow `∂_t u = i∂²u` to the time derivative.
    pub fn star(&self) -> DensityExpr {
        let mut out = DensityExpr::zero();
        let i = Coeff::i();
        let minus_i = -Coeff::i();
        for (m, c) in &self.terms {
            let nu = m.u.len();
            for idx in 0..m.factor_count() {
                let unit = if idx < nu { &i } else { &minus_i };
                out.add_term(m.raise(idx, 2), &(c * unit));
            }
        }
        out
    }

    /// Contribution of the nonlinear flow `∂_t u = −i|u|^{2p}u` to the time
    /// derivative, each factor expanded by the multinomial Leibniz rule.
    pub fn starstar(&self, p: usize) -> DensityExpr {
        let mut out = DensityExpr::zero();
        let mut cache: BTreeMap<(u32, bool), DensityExpr> = BTreeMap::new();
        for (m, c) in &self.terms {
            let nu = m.u.len();
            for idx in 0..m.factor_count() {
                let (order, conj) = if idx < nu { (m.u[idx], false) } else { (m.ubar[idx - nu], true) };
                let replacement = cache.entry((order, conj)).or_insert_with(|| nonlinear_replacement(order, conj, p));
                let mut rest_u = m.u.clone();
                let mut rest_ubar = m.ubar.clone();
                if idx < nu {
                    rest_u.remove(idx);
                } else {
                    rest_ubar.remove(idx - nu);
                }
                let rest = DensityMonomial { u: rest_u, ubar: rest_ubar };
                for (r, rc) in replacement.terms() {
                    out.add_term(rest.mul(r), &(c * rc));
                }
            }
        }
        out
    }

    /// `star + starstar`: the formal time derivative along the flow.
    pub fn time_derivative(&self, p: usize) -> DensityExpr {
        self.star().plus(&self.starstar(p))
    }
}

/// `∓i·∂^a(u^{p+1}ū^p)` (or its conjugate), expanded as a sum of products.
fn nonlinear_replacement(a: u32, conj: bool, p: usize) -> DensityExpr {
    let (n_same, n_other) = (p + 1, p);
    let mut out = DensityExpr::zero();
    let unit = if conj { Coeff::i() } else { -Coeff::i() };
    let slots = n_same + n_other;
    let mut parts = vec![0u32; slots];
    let fact: Vec<Rational> = factorials(a);
    leibniz_distribute(a, 0, &mut parts, &mut |parts| {
        let mut weight = fact[a as usize].clone();
        for &q in parts.iter() {
            weight /= &fact[q as usize];
        }
        let (same, other) = parts.split_at(n_same);
        let m = if conj {
            DensityMonomial::new(other.to_vec(), same.to_vec())
        } else {
            DensityMonomial::new(same.to_vec(), other.to_vec())
        };
        out.add_term(m, &unit.scale(&weight));
    });
    out
}

fn factorials(n: u32) -> Vec<Rational> {
    let mut f = vec![Rational::one()];
    for i in 1..=n {
        let next = f[i as usize - 1].clone() * rat(i as i64);
        f.push(next);
    }
    f
}

/// Visits every composition of `remaining` into `parts[slot..]`.
fn leibniz_distribute(remaining: u32, slot: usize, parts: &mut [u32], visit: &mut dyn FnMut(&[u32])) {
    if slot + 1 == parts.len() {
        parts[slot] = remaining;
        visit(parts);
        return;
    }
    for q in 0..=remaining {
        parts[slot] = q;
        leibniz_distribute(remaining - q, slot + 1, parts, visit);
    }
}

/// Descending partitions of `total` into exactly `len` nonnegative parts, each
/// at most `cap`. Output in lexicographic order.
fn partitions(total: u32, len: usize, cap: u32) -> Vec<Vec<u32>> {
    fn go(total: u32, len: usize, cap: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if len == 0 {
            if total == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        // Largest part must be at least ceil(total/len).
        let hi = cap.min(total);
        for first in (0..=hi).rev() {
            if (first as u64) * (len as u64) < total as u64 {
                break;
            }
            prefix.push(first);
            go(total - first, len - 1, first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(total, len, cap, &mut Vec::with_capacity(len), &mut out);
    out
}

/// All canonical monomials with signature `sig` and every order ≤ `max_order`,
/// sorted ascending.
pub fn enumerate_monomials(sig: Signature, max_order: u32) -> Vec<DensityMonomial> {
    let mut out = Vec::new();
    for a in 0..=sig.total_derivs {
        let us = partitions(a, sig.n_u, max_order);
        if us.is_empty() {
            continue;
        }
        let bs = partitions(sig.total_derivs - a, sig.n_ubar, max_order);
        for u in &us {
            for b in &bs {
                out.push(DensityMonomial { u: u.clone(), ubar: b.clone() });
            }
        }
    }
    out.sort();
    out
}

/// Integration-by-parts identities `∫∂_x(integrand of m) = 0`, one per
/// monomial `m` of signature `(n_u, n_ubar, total_derivs − 1)` with orders
/// ≤ `max_order − 1`.
pub fn ibp_generators(sig: Signature, max_order: u32) -> Vec<DensityExpr> {
    if sig.total_derivs == 0 || max_order == 0 {
        return Vec::new();
    }
    let lower = Signature { total_derivs: sig.total_derivs - 1, ..sig };
    enumerate_monomials(lower, max_order - 1).into_iter().map(|m| total_derivative(&m)).collect()
}

/// `∫∂_x(integrand of m)` expanded by the Leibniz rule.
pub fn total_derivative(m: &DensityMonomial) -> DensityExpr {
    let mut e = DensityExpr::zero();
    let one = Coeff::one();
    for idx in 0..m.factor_count() {
        e.add_term(m.raise(idx, 1), &one);
    }
    e
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DensityClass {
    Omega,
    Theta,
    Gamma,
    Other,
}

/// Membership of a monomial in the controllable classes for given `k`, `p`.
pub fn classify(m: &DensityMonomial, k: u32, p: usize) -> DensityClass {
    let sig = m.signature();
    let top_ok = m.max_order() < k;
    if sig == Signature::new(p + 1, p + 1, 2 * k) && m.derivative_bearing() >= 4 {
        DensityClass::Omega
    } else if sig == Signature::new(2 * p + 1, 2 * p + 1, 2 * k - 2) && top_ok {
        DensityClass::Theta
    } else if sig == Signature::new(p + 1, p + 1, 2 * k - 2) && top_ok {
        DensityClass::Gamma
    } else {
        DensityClass::Other
    }
}

/// Shorthand: `u^a` as an order list of zeros.
pub(crate) fn zeros(n: usize) -> Vec<u32> {
    vec![0; n]
}

/// `∫∂^k u ∂^k ū`.
pub fn hk_density(k: u32) -> DensityExpr {
    DensityExpr::monomial(DensityMonomial::new(vec![k], vec![k]))
}

/// `∫uū`.
pub fn mass_density() -> DensityExpr {
    DensityExpr::monomial(DensityMonomial::new(vec![0], vec![0]))
}

/// `∫|∂u|² + (1/(p+1))∫|u|^{2p+2}`.
pub fn hamiltonian_density(p: usize) -> DensityExpr {
    let mut h = DensityExpr::monomial(DensityMonomial::new(vec![1], vec![1]));
    h.add_term(
        DensityMonomial::new(zeros(p + 1), zeros(p + 1)),
        &Coeff::real(Rational::new(1.into(), ((p + 1) as i64).into())),
    );
    h
}

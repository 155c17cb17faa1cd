//! Construction of the modified energies `ℰ_k = ‖u‖²_{H^k} + ℱ_k`.
//!
//! The cancellation system is never written out by hand: the time derivative
//! of `‖∂^k u‖²` and the linear-flow derivatives of every correction density
//! are reduced to normal form in the quotient of the `(p+1, p+1, 2k)` sector
//! by integration by parts and by the four-derivative class, and the real
//! correction coefficients are obtained from one exact linear solve.

use std::collections::HashSet;
use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::coeff::{format_rational, Coeff, Rational};
use crate::density::{
    classify, enumerate_monomials, hk_density, ibp_generators, mass_density, zeros, DensityClass, DensityExpr,
    DensityMonomial, Signature,
};
use crate::linalg::{real_rank, solve_real};
use crate::reduce::{reduce_modulo, Columns, Reducer};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnergyError {
    #[error("invalid parameters k={k}, p={p}: need k >= 2 and p >= 2")]
    InvalidParameters { k: u32, p: usize },
    #[error("cancellation system for k={k}, p={p} is infeasible; irreducible residual:\n{residual}")]
    Infeasible { k: u32, p: usize, residual: String },
    #[error("no representative of F_{k} with derivative orders <= {bound} exists (offending residual:\n{residual})")]
    NoGammaRepresentative { k: u32, bound: u32, residual: String },
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
}

pub fn check_params(k: u32, p: usize) -> Result<(), EnergyError> {
    if k < 2 || p < 2 {
        return Err(EnergyError::InvalidParameters { k, p });
    }
    Ok(())
}

/// `k = 3m + r`: returns `m`.
pub fn block_count(k: u32) -> u32 {
    k / 3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DensityKind {
    I,
    K,
    V,
    W,
}

impl DensityKind {
    pub fn letter(self) -> char {
        match self {
            DensityKind::I => 'I',
            DensityKind::K => 'K',
            DensityKind::V => 'V',
            DensityKind::W => 'W',
        }
    }
}

fn with_zeros(mut head: Vec<u32>, n: usize) -> Vec<u32> {
    head.extend(zeros(n));
    head
}

fn checked(v: i64) -> Option<u32> {
    u32::try_from(v).ok()
}

/// Imaginary-part densities `I_{k,h}`, `K_{k,h}`, `V_{k,h}`, `W_{k,h}`.
/// `None` when a derivative order would be negative.
pub fn basic_density(kind: DensityKind, k: u32, p: usize, h: u32) -> Option<DensityExpr> {
    let (k, h) = (k as i64, h as i64);
    let top = checked(k - h)?;
    let m = match kind {
        DensityKind::I => DensityMonomial::new(with_zeros(vec![top, top, checked(2 * h)?], p - 2), zeros(p + 1)),
        DensityKind::K => DensityMonomial::new(with_zeros(vec![top, top], p - 1), with_zeros(vec![checked(2 * h)?], p)),
        DensityKind::V => DensityMonomial::new(
            with_zeros(vec![top, checked(2 * h + 1)?], p - 1),
            with_zeros(vec![checked(k - h - 1)?], p),
        ),
        DensityKind::W => DensityMonomial::new(
            with_zeros(vec![top], p),
            with_zeros(vec![checked(k - h - 1)?, checked(2 * h + 1)?], p - 1),
        ),
    };
    Some(DensityExpr::monomial(m).im_part())
}

/// Real-part correction densities `Ĩ_{k,h}`, `K̃_{k,h}`, `Ṽ_{k,h}`, `W̃_{k,h}`.
/// `None` when a derivative order would be negative.
pub fn correction_density(kind: DensityKind, k: u32, p: usize, h: u32) -> Option<DensityExpr> {
    let (k, h) = (k as i64, h as i64);
    let top = checked(k - h)?;
    let low = checked(2 * h - 2)?;
    let m = match kind {
        DensityKind::I => DensityMonomial::new(with_zeros(vec![top, top, low], p - 2), zeros(p + 1)),
        DensityKind::K => DensityMonomial::new(with_zeros(vec![top, top], p - 1), with_zeros(vec![low], p)),
        DensityKind::V => DensityMonomial::new(with_zeros(vec![top, low], p - 1), with_zeros(vec![top], p)),
        DensityKind::W => DensityMonomial::new(
            with_zeros(vec![top, checked(2 * h - 1)?], p - 1),
            with_zeros(vec![checked(k - h - 1)?], p),
        ),
    };
    Some(DensityExpr::monomial(m).re_part())
}

/// The density `Im∫(∂^{2m}u)³u^{p−2}ū^{p+1}` that survives when `k = 3m`.
pub fn cubic_density(k: u32, p: usize) -> DensityExpr {
    let m = block_count(k);
    DensityExpr::monomial(DensityMonomial::new(with_zeros(vec![2 * m; 3], p - 2), zeros(p + 1))).im_part()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogueEntry {
    pub kind: DensityKind,
    pub h: u32,
    /// Name of the real unknown multiplying this entry, e.g. `alpha_0`.
    pub unknown: String,
    pub expr: DensityExpr,
}

impl CatalogueEntry {
    pub fn label(&self) -> String {
        format!("{}~[k,{}]", self.kind.letter(), self.h)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionCatalogue {
    pub k: u32,
    pub p: usize,
    pub entries: Vec<CatalogueEntry>,
}

impl CorrectionCatalogue {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: DensityKind, h: u32) -> Option<&CatalogueEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.h == h)
    }

    /// Test hook: shifts one derivative in the first entry so that the
    /// catalogue no longer matches the densities the identities talk about.
    pub fn corrupt_for_testing(&mut self) {
        if let Some(e) = self.entries.first_mut() {
            let m = e.expr.monomials().next().cloned().expect("nonempty entry");
            let mut u = m.u_orders().to_vec();
            let mut ub = m.ubar_orders().to_vec();
            if let Some(last) = u.last_mut() {
                *last += 1;
            }
            if let Some(first) = ub.first_mut() {
                *first = first.saturating_sub(1);
            }
            e.expr = DensityExpr::monomial(DensityMonomial::new(u, ub)).re_part();
        }
    }
}

/// Correction densities with the index ranges of the energy: `Ĩ`, `Ṽ`, `W̃`
/// for `h = 1..=m+1` and `K̃` for `h = 2..=m+1`. Order: by `h`, then
/// `Ĩ, Ṽ, W̃, K̃`; this order fixes the tie-break for free unknowns.
pub fn build_catalogue(k: u32, p: usize) -> Result<CorrectionCatalogue, EnergyError> {
    check_params(k, p)?;
    let m = block_count(k);
    let mut entries = Vec::new();
    for h in 1..=m + 1 {
        let mut kinds = vec![(DensityKind::I, "alpha"), (DensityKind::V, "beta"), (DensityKind::W, "gamma")];
        if h >= 2 {
            kinds.push((DensityKind::K, "delta"));
        }
        for (kind, greek) in kinds {
            let Some(expr) = correction_density(kind, k, p, h) else {
                continue;
            };
            entries.push(CatalogueEntry { kind, h, unknown: format!("{}_{}", greek, h - 1), expr });
        }
    }
    Ok(CorrectionCatalogue { k, p, entries })
}

pub fn star_sector(k: u32, p: usize) -> Signature {
    Signature::new(p + 1, p + 1, 2 * k)
}

pub fn theta_sector(k: u32, p: usize) -> Signature {
    Signature::new(2 * p + 1, 2 * p + 1, 2 * k - 2)
}

pub fn gamma_sector(k: u32, p: usize) -> Signature {
    Signature::new(p + 1, p + 1, 2 * k - 2)
}

/// Quotient of the `(p+1, p+1, 2k)` sector by integration by parts and by
/// the four-derivative monomials.
pub struct StarQuotient {
    pub k: u32,
    pub p: usize,
    reducer: Reducer,
}

impl StarQuotient {
    pub fn new(k: u32, p: usize) -> Self {
        let sig = star_sector(k, p);
        let kept: Vec<DensityMonomial> =
            enumerate_monomials(sig, 2 * k).into_iter().filter(|m| classify(m, k, p) != DensityClass::Omega).collect();
        let kept_set: HashSet<DensityMonomial> = kept.iter().cloned().collect();
        let mut reducer = Reducer::new(Columns::new(kept, |_| 0), false);
        for g in ibp_generators(sig, 2 * k) {
            if g.monomials().any(|m| kept_set.contains(m)) {
                reducer.add_generator(&g);
            }
        }
        StarQuotient { k, p, reducer }
    }

    pub fn normal_form(&self, e: &DensityExpr) -> DensityExpr {
        self.reducer.normal_form(&e.sector(star_sector(self.k, self.p)))
    }

    /// Dimension of the quotient (number of non-pivot columns).
    pub fn dimension(&self) -> usize {
        self.reducer.columns().len() - self.reducer.rank()
    }

    /// Coordinates of each of `vectors` in terms of `basis`, in the quotient.
    /// `None` if some vector is outside the span or the basis is dependent.
    pub fn coordinates(&self, vectors: &[DensityExpr], basis: &[DensityExpr]) -> Option<Vec<Vec<Rational>>> {
        let nb: Vec<DensityExpr> = basis.iter().map(|b| self.normal_form(b)).collect();
        if real_rank(&nb) != nb.len() {
            return None;
        }
        let order: Vec<usize> = (0..nb.len()).collect();
        vectors.iter().map(|v| solve_real(&nb, &self.normal_form(v), &order).map(|s| s.values)).collect()
    }
}

/// `d/dt ∫|∂^k u|²` along the flow, expanded and canonicalized.
pub fn hk_derivative(k: u32, p: usize) -> DensityExpr {
    hk_density(k).time_derivative(p)
}

/// Solved energy together with the exact decomposition of its derivative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnergyDefinition {
    pub k: u32,
    pub p: usize,
    /// Correction coefficients in catalogue order.
    pub coefficients: Vec<(String, Rational)>,
    /// Unknowns that were free and pinned to zero.
    pub free_unknowns: Vec<String>,
    /// `ℱ_k`, all orders ≤ k − 1.
    pub f_k: DensityExpr,
    pub residual_omega: DensityExpr,
    pub residual_theta: DensityExpr,
    pub cubic_coeff: Rational,
    /// `star + starstar` of `‖u‖²_{H^k} + ℱ_k`, unreduced.
    pub exact_derivative: DensityExpr,
}

impl EnergyDefinition {
    /// `∫uū + ∫|∂^k u|² + ℱ_k`.
    pub fn energy_expr(&self) -> DensityExpr {
        energy_expr(self.k, &self.f_k)
    }

    pub fn cubic_expr(&self) -> DensityExpr {
        cubic_density(self.k, self.p)
    }

    pub fn coefficient(&self, unknown: &str) -> Option<&Rational> {
        self.coefficients.iter().find(|(n, _)| n == unknown).map(|(_, c)| c)
    }

    /// `ℱ_k` before the Γ reduction: `Σ coeff · catalogue entry`.
    pub fn raw_correction(&self) -> Result<DensityExpr, EnergyError> {
        let cat = build_catalogue(self.k, self.p)?;
        let mut f = DensityExpr::zero();
        for (name, c) in &self.coefficients {
            let entry = cat
                .entries
                .iter()
                .find(|e| &e.unknown == name)
                .ok_or_else(|| EnergyError::Inconsistent(format!("unknown coefficient `{name}`")))?;
            f.add_scaled(&entry.expr, &Coeff::real(c.clone()));
        }
        Ok(f)
    }

    /// `residual_omega + residual_theta + c · cubic`.
    pub fn decomposition(&self) -> DensityExpr {
        let mut d = self.residual_omega.plus(&self.residual_theta);
        d.add_scaled(&self.cubic_expr(), &Coeff::real(self.cubic_coeff.clone()));
        d
    }

    /// Checks every structural invariant: class membership of `ℱ_k` and of
    /// both residuals, reality, and that `exact_derivative` is the formal
    /// derivative of the energy and differs from the decomposition by
    /// integration by parts only.
    pub fn check_invariants(&self) -> Result<(), EnergyError> {
        check_params(self.k, self.p)?;
        let (k, p) = (self.k, self.p);
        let fail = |msg: String| Err(EnergyError::Inconsistent(msg));
        for (what, expr, class) in [
            ("F_k", &self.f_k, DensityClass::Gamma),
            ("residual_omega", &self.residual_omega, DensityClass::Omega),
            ("residual_theta", &self.residual_theta, DensityClass::Theta),
        ] {
            if let Some(m) = expr.monomials().find(|m| classify(m, k, p) != class) {
                return fail(format!("{what} contains {m}, which is not of class {class:?}"));
            }
            if !expr.is_real_valued() {
                return fail(format!("{what} is not real valued"));
            }
        }
        if k % 3 != 0 && !self.cubic_coeff.is_zero() {
            return fail(format!("cubic coefficient must vanish for k={k}"));
        }
        if self.energy_expr().time_derivative(p) != self.exact_derivative {
            return fail("exact_derivative is not the formal derivative of the energy".into());
        }
        let diff = self.exact_derivative.sub(&self.decomposition());
        for sig in diff.signatures() {
            let part = diff.sector(sig);
            let gens = ibp_generators(sig, sig.total_derivs);
            let r = reduce_modulo(&part, &gens, &[]).map_err(|e| EnergyError::Inconsistent(e.to_string()))?;
            if !r.residual.is_zero() {
                return fail(format!("derivative decomposition leaves a non-IBP residual in sector {sig}"));
            }
        }
        Ok(())
    }
}

pub fn energy_expr(k: u32, f_k: &DensityExpr) -> DensityExpr {
    mass_density().plus(&hk_density(k)).plus(f_k)
}

impl fmt::Display for EnergyDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k = {}, p = {}", self.k, self.p)?;
        for (name, c) in &self.coefficients {
            let mark = if self.free_unknowns.contains(name) { " (free)" } else { "" };
            writeln!(f, "  {:<10} {}{}", name, format_rational(c), mark)?;
        }
        writeln!(f, "  cubic_coeff {}", format_rational(&self.cubic_coeff))
    }
}

/// Options for [`solve_energy_with`].
#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    /// Pivot order over catalogue indices; defaults to catalogue order.
    pub pivot_order: Option<Vec<usize>>,
}

pub fn solve_energy(k: u32, p: usize) -> Result<EnergyDefinition, EnergyError> {
    solve_energy_with(k, p, &SolveOptions::default())
}

pub fn solve_energy_with(k: u32, p: usize, opts: &SolveOptions) -> Result<EnergyDefinition, EnergyError> {
    check_params(k, p)?;
    let cat = build_catalogue(k, p)?;
    let quotient = StarQuotient::new(k, p);
    let n = cat.len();
    let target = hk_density(k).starstar(p);
    let mut columns: Vec<DensityExpr> = cat.entries.iter().map(|e| quotient.normal_form(&e.expr.star())).collect();
    let with_cubic = k.is_multiple_of(3);
    if with_cubic {
        // Unknown −c: Σ x star(C) − c · cubic ≡ −target.
        columns.push(quotient.normal_form(&cubic_density(k, p)).neg());
    }
    let rhs = quotient.normal_form(&target).neg();
    let mut order: Vec<usize> = opts.pivot_order.clone().unwrap_or_else(|| (0..n).collect());
    if order.len() != n || (0..n).any(|i| !order.contains(&i)) {
        return Err(EnergyError::Inconsistent("pivot order is not a permutation of the catalogue".into()));
    }
    if with_cubic {
        order.push(n);
    }
    let sol = solve_real(&columns, &rhs, &order).ok_or_else(|| EnergyError::Infeasible {
        k,
        p,
        residual: crate::text::format_expr(&rhs),
    })?;
    let cubic_coeff = if with_cubic { sol.values[n].clone() } else { Rational::zero() };
    let coefficients: Vec<(String, Rational)> =
        cat.entries.iter().zip(&sol.values).map(|(e, v)| (e.unknown.clone(), v.clone())).collect();
    let free_unknowns = sol.free.iter().filter(|&&i| i < n).map(|&i| cat.entries[i].unknown.clone()).collect();
    let mut raw = DensityExpr::zero();
    for (e, v) in cat.entries.iter().zip(&sol.values) {
        raw.add_scaled(&e.expr, &Coeff::real(v.clone()));
    }
    let f_k = reduce_to_gamma_expr(k, p, &raw)?;
    finish_energy(k, p, coefficients, free_unknowns, f_k, cubic_coeff)
}

/// Fills in the derivative, both residuals, and checks the result.
fn finish_energy(
    k: u32,
    p: usize,
    coefficients: Vec<(String, Rational)>,
    free_unknowns: Vec<String>,
    f_k: DensityExpr,
    cubic_coeff: Rational,
) -> Result<EnergyDefinition, EnergyError> {
    let exact_derivative = energy_expr(k, &f_k).time_derivative(p);
    let residual_theta = exact_derivative.sector(theta_sector(k, p));
    if let Some(m) = residual_theta.monomials().find(|m| classify(m, k, p) != DensityClass::Theta) {
        return Err(EnergyError::Inconsistent(format!("nonlinear part contains {m} outside the Theta class")));
    }
    let mut star_part = exact_derivative.sector(star_sector(k, p));
    star_part.add_scaled(&cubic_density(k, p), &Coeff::real(-cubic_coeff.clone()));
    let residual_omega = omega_representative(k, p, &star_part)?;
    let def = EnergyDefinition {
        k,
        p,
        coefficients,
        free_unknowns,
        f_k,
        residual_omega,
        residual_theta,
        cubic_coeff,
        exact_derivative,
    };
    def.check_invariants()?;
    Ok(def)
}

/// An explicit four-derivative combination equal to `e` modulo integration
/// by parts. Elimination order puts every non-Ω monomial ahead of the Ω ones.
fn omega_representative(k: u32, p: usize, e: &DensityExpr) -> Result<DensityExpr, EnergyError> {
    let sig = star_sector(k, p);
    let is_omega = |m: &DensityMonomial| classify(m, k, p) == DensityClass::Omega;
    let cols = Columns::new(enumerate_monomials(sig, 2 * k), |m| u8::from(!is_omega(m)));
    let mut reducer = Reducer::new(cols, false);
    for g in ibp_generators(sig, 2 * k) {
        reducer.add_generator(&g);
    }
    let nf = reducer.normal_form(e);
    if let Some(m) = nf.monomials().find(|m| !is_omega(m)) {
        return Err(EnergyError::Infeasible {
            k,
            p,
            residual: format!("{m} survives after removing the four-derivative class"),
        });
    }
    Ok(nf.re_part())
}

/// Rewrites a correction in the `(p+1, p+1, 2k−2)` sector, by integration by
/// parts, into an equal functional whose derivative orders are all ≤ k − 1.
pub fn reduce_to_gamma_expr(k: u32, p: usize, f: &DensityExpr) -> Result<DensityExpr, EnergyError> {
    let bound = k - 1;
    if f.max_order() <= bound {
        return Ok(f.clone());
    }
    let sig = gamma_sector(k, p);
    let cols = Columns::new(enumerate_monomials(sig, 2 * k - 2), |m| u8::from(m.max_order() > bound));
    let mut reducer = Reducer::new(cols, false);
    for g in ibp_generators(sig, 2 * k - 2) {
        reducer.add_generator(&g);
    }
    let nf = reducer.normal_form(f);
    if nf.max_order() > bound {
        return Err(EnergyError::NoGammaRepresentative { k, bound, residual: crate::text::format_expr(&nf) });
    }
    Ok(nf.re_part())
}

/// Replaces `ℱ_k` of a solved energy by its Γ representative.
pub fn reduce_to_gamma(energy: &EnergyDefinition) -> Result<EnergyDefinition, EnergyError> {
    let f_k = reduce_to_gamma_expr(energy.k, energy.p, &energy.f_k)?;
    if f_k == energy.f_k {
        return Ok(energy.clone());
    }
    finish_energy(
        energy.k,
        energy.p,
        energy.coefficients.clone(),
        energy.free_unknowns.clone(),
        f_k,
        energy.cubic_coeff.clone(),
    )
}

/// One checked identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaCheck {
    pub name: String,
    pub k: u32,
    pub p: usize,
    pub passed: bool,
    pub certificate_size: usize,
}

impl fmt::Display for LemmaCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k={} p={} {:<44} {} (certificate: {} generators)",
            self.k,
            self.p,
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.certificate_size
        )
    }
}

/// Relation kind: equivalence in the `(p+1,p+1,2k)` sector modulo IBP and Ω,
/// equality modulo IBP alone, or literal equality of canonical forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Relation {
    ModuloControlled,
    ModuloIbp,
    Literal,
}

struct Identity {
    name: String,
    lhs: DensityExpr,
    rhs: DensityExpr,
    relation: Relation,
}

fn lin(terms: &[(i64, Option<DensityExpr>)]) -> Option<DensityExpr> {
    let mut e = DensityExpr::zero();
    for (c, d) in terms {
        e.add_scaled(d.as_ref()?, &Coeff::from_int(*c));
    }
    Some(e)
}

fn identities(k: u32, p: usize, cat: &CorrectionCatalogue) -> Vec<Identity> {
    use DensityKind::*;
    let m = block_count(k);
    let b = |kind, h| basic_density(kind, k, p, h);
    let tilde = |kind: DensityKind, h: u32| cat.get(kind, h).map(|e| e.expr.clone());
    let star = |kind, h| tilde(kind, h).map(|e| e.star());
    let pi = p as i64;
    let mut out = Vec::new();
    let mut push = |name: String, lhs: Option<DensityExpr>, rhs: Option<DensityExpr>, relation| {
        if let (Some(lhs), Some(rhs)) = (lhs, rhs) {
            out.push(Identity { name, lhs, rhs, relation });
        }
    };
    use Relation::*;
    push(
        "I~*[k,1] = 2I[k,0] - 2(p-1)I[k,1]".into(),
        star(I, 1),
        lin(&[(2, b(I, 0)), (-2 * (pi - 1), b(I, 1))]),
        ModuloControlled,
    );
    push("V~*[k,1] = 4p V[k,0]".into(), star(V, 1), lin(&[(4 * pi, b(V, 0))]), ModuloControlled);
    if k > 2 {
        push(
            "W~*[k,1] = 2V[k,0] - 2W[k,0] - 2V[k,1]".into(),
            star(W, 1),
            lin(&[(2, b(V, 0)), (-2, b(W, 0)), (-2, b(V, 1))]),
            ModuloControlled,
        );
        for h in 1..m {
            push(
                format!("I~*[k,{}] = 2I[k,{h}] - 2I[k,{}]", h + 1, h + 1),
                star(I, h + 1),
                lin(&[(2, b(I, h)), (-2, b(I, h + 1))]),
                ModuloControlled,
            );
            push(format!("K~*[k,{}] = 2K[k,{h}]", h + 1), star(K, h + 1), lin(&[(2, b(K, h))]), ModuloControlled);
            push(format!("V~*[k,{}] = 2V[k,{h}]", h + 1), star(V, h + 1), lin(&[(2, b(V, h))]), ModuloControlled);
            push(
                format!("W~*[k,{}] = 2V[k,{h}] - 2W[k,{h}] - 2V[k,{}]", h + 1, h + 1),
                star(W, h + 1),
                lin(&[(2, b(V, h)), (-2, b(W, h)), (-2, b(V, h + 1))]),
                ModuloControlled,
            );
        }
        if !k.is_multiple_of(3) {
            // The same W identity at h = m, used inside the top-index proofs.
            push(
                format!("W~*[k,{}] = 2V[k,{m}] - 2W[k,{m}] - 2V[k,{}]", m + 1, m + 1),
                star(W, m + 1),
                lin(&[(2, b(V, m)), (-2, b(W, m)), (-2, b(V, m + 1))]),
                ModuloControlled,
            );
        }
        push(format!("K~*[k,{}] = 2K[k,{m}]", m + 1), star(K, m + 1), lin(&[(2, b(K, m))]), ModuloControlled);
        push(format!("V~*[k,{}] = 2V[k,{m}]", m + 1), star(V, m + 1), lin(&[(2, b(V, m))]), ModuloControlled);
        match k % 3 {
            0 => {
                push(format!("I~*[k,{}] = 0", m + 1), star(I, m + 1), Some(DensityExpr::zero()), ModuloControlled);
                if m > 1 {
                    push(
                        format!(
                            "W~*[k,{}] = 2V[k,{m}] - 2W[k,{m}] - 2W[k,{}] - 2K[k,{}] + 4K[k,{m}]",
                            m + 1,
                            m - 1,
                            m - 1
                        ),
                        star(W, m + 1),
                        lin(&[(2, b(V, m)), (-2, b(W, m)), (-2, b(W, m - 1)), (-2, b(K, m - 1)), (4, b(K, m))]),
                        ModuloControlled,
                    );
                }
            }
            1 => {
                push(format!("I~*[k,{}] = 6I[k,{m}]", m + 1), star(I, m + 1), lin(&[(6, b(I, m))]), ModuloControlled);
                if m >= 1 {
                    push(format!("V[k,{m}] = K[k,{m}]"), b(V, m), b(K, m), Literal);
                    push(
                        format!("W[k,{m}] = -W[k,{}] + V[k,{}]", m - 1, m - 1),
                        b(W, m),
                        lin(&[(-1, b(W, m - 1)), (1, b(V, m - 1))]),
                        ModuloControlled,
                    );
                }
            }
            _ => {
                push(format!("I~*[k,{}] = 2I[k,{m}]", m + 1), star(I, m + 1), lin(&[(2, b(I, m))]), ModuloControlled);
                push(
                    format!("W~*[k,{}] = 2V[k,{m}] - W[k,{m}] + 2K[k,{m}]", m + 1),
                    star(W, m + 1),
                    lin(&[(2, b(V, m)), (-1, b(W, m)), (2, b(K, m))]),
                    ModuloControlled,
                );
            }
        }
    }
    if k == 2 {
        push("I~[2,1] = W~[2,1]".into(), tilde(I, 1), tilde(W, 1), Literal);
        push("W[2,0] = 2V[2,0]".into(), b(W, 0), lin(&[(2, b(V, 0))]), ModuloControlled);
        push("I[2,1] = 0".into(), b(I, 1), Some(DensityExpr::zero()), ModuloControlled);
    }
    if k == 3 {
        // The product rule also hits the p − 1 undifferentiated u factors.
        let cubic_slope =
            DensityExpr::monomial(DensityMonomial::new(with_zeros(vec![2, 1, 1], p - 2), zeros(p + 1))).re_part();
        push(
            "W~[3,2] = -I~[3,1] - (p+1)W~[3,1] - (p-1)Re[(du)^2 d^2u u^(p-2) ubar^(p+1)]".into(),
            tilde(W, 2),
            lin(&[(-1, tilde(I, 1)), (-(pi + 1), tilde(W, 1)), (-(pi - 1), Some(cubic_slope))]),
            ModuloIbp,
        );
        push("W[3,1] = -V[3,0]".into(), b(W, 1), lin(&[(-1, b(V, 0))]), Literal);
    }
    // The nonlinear-flow derivative of every correction is controlled outright.
    for e in &cat.entries {
        let Ok(rep) = reduce_to_gamma_expr(k, p, &e.expr) else {
            out.push(Identity {
                name: format!("{}~[k,{}] has a Gamma representative", e.kind.letter(), e.h),
                lhs: e.expr.clone(),
                rhs: DensityExpr::zero(),
                relation: Literal,
            });
            continue;
        };
        let ss = rep.starstar(p);
        let ok = ss.monomials().all(|mm| classify(mm, k, p) == DensityClass::Theta);
        out.push(Identity {
            name: format!("{}~**[k,{}] in Theta", e.kind.letter(), e.h),
            lhs: if ok { DensityExpr::zero() } else { ss },
            rhs: DensityExpr::zero(),
            relation: Literal,
        });
    }
    out
}

/// Checks the linear-flow identities for the correction densities, the
/// auxiliary identities used in the low-`k` cases, and that the nonlinear
/// derivative of every correction is controlled.
pub fn verify_lemmas(k: u32, p: usize) -> Result<Vec<LemmaCheck>, EnergyError> {
    let cat = build_catalogue(k, p)?;
    verify_lemmas_for(&cat)
}

/// [`verify_lemmas`] against an explicit (possibly altered) catalogue.
pub fn verify_lemmas_for(cat: &CorrectionCatalogue) -> Result<Vec<LemmaCheck>, EnergyError> {
    let (k, p) = (cat.k, cat.p);
    check_params(k, p)?;
    let sig = star_sector(k, p);
    let omega: Vec<DensityMonomial> =
        enumerate_monomials(sig, 2 * k).into_iter().filter(|m| classify(m, k, p) == DensityClass::Omega).collect();
    let omega_set: HashSet<&DensityMonomial> = omega.iter().collect();
    let controlled_gens: Vec<DensityExpr> =
        ibp_generators(sig, 2 * k).into_iter().filter(|g| g.monomials().any(|m| !omega_set.contains(m))).collect();
    let mut out = Vec::new();
    for id in identities(k, p, cat) {
        let diff = id.lhs.sub(&id.rhs);
        let (passed, size) = match id.relation {
            Relation::Literal => (diff.is_zero(), 0),
            Relation::ModuloControlled | Relation::ModuloIbp => {
                let dsig = diff.signatures();
                if diff.is_zero() {
                    (true, 0)
                } else if id.relation == Relation::ModuloControlled && dsig == vec![sig] {
                    let r = reduce_modulo(&diff, &controlled_gens, &omega)
                        .map_err(|e| EnergyError::Inconsistent(e.to_string()))?;
                    (r.residual.is_zero(), r.certificate_size())
                } else if dsig.len() == 1 {
                    let s = dsig[0];
                    let gens = ibp_generators(s, s.total_derivs);
                    let allowed: Vec<DensityMonomial> = if id.relation == Relation::ModuloControlled {
                        enumerate_monomials(s, s.total_derivs)
                            .into_iter()
                            .filter(|m| matches!(classify(m, k, p), DensityClass::Omega | DensityClass::Theta))
                            .collect()
                    } else {
                        Vec::new()
                    };
                    let r =
                        reduce_modulo(&diff, &gens, &allowed).map_err(|e| EnergyError::Inconsistent(e.to_string()))?;
                    (r.residual.is_zero(), r.certificate_size())
                } else {
                    (false, 0)
                }
            }
        };
        out.push(LemmaCheck { name: id.name, k, p, passed, certificate_size: size });
    }
    Ok(out)
}

/// Reduced cancellation matrix: column `j` holds the quotient coordinates of
/// `star(unknowns[j])` in `basis`.
pub fn cancellation_matrix(
    k: u32,
    p: usize,
    unknowns: &[DensityExpr],
    basis: &[DensityExpr],
) -> Option<Vec<Vec<Rational>>> {
    let q = StarQuotient::new(k, p);
    let stars: Vec<DensityExpr> = unknowns.iter().map(|u| u.star()).collect();
    let cols = q.coordinates(&stars, basis)?;
    // Transpose to row-major (basis × unknowns).
    Some((0..basis.len()).map(|r| cols.iter().map(|c| c[r].clone()).collect()).collect())
}

/// Coefficients of `d/dt‖∂^k u‖²` on the basic densities, in the order
/// `I_{k,0..=m}, V_{k,0..=m}, W_{k,0..=m}, K_{k,1..=m}`, modulo the
/// controlled classes and integration by parts. Redundant densities are
/// resolved by pinning later ones to zero.
pub fn hk_basic_coordinates(k: u32, p: usize) -> Result<Vec<(String, Rational)>, EnergyError> {
    check_params(k, p)?;
    let m = block_count(k);
    let q = StarQuotient::new(k, p);
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for (kind, range) in
        [(DensityKind::I, 0..=m), (DensityKind::V, 0..=m), (DensityKind::W, 0..=m), (DensityKind::K, 1..=m)]
    {
        for h in range {
            if let Some(d) = basic_density(kind, k, p, h) {
                names.push(format!("{}[{k},{h}]", kind.letter()));
                cols.push(q.normal_form(&d));
            }
        }
    }
    let rhs = q.normal_form(&hk_derivative(k, p));
    let order: Vec<usize> = (0..cols.len()).collect();
    let sol = solve_real(&cols, &rhs, &order).ok_or_else(|| EnergyError::Infeasible {
        k,
        p,
        residual: crate::text::format_expr(&rhs),
    })?;
    Ok(names.into_iter().zip(sol.values).collect())
}

//! Symbolic checks of the density algebra and the energy construction against
//! independent oracles (brute-force expansions, hand-derived matrices, frozen
//! regression values).

use std::collections::{BTreeMap, HashSet};

use nlsmod::coeff::{format_rational, ratio};
use nlsmod::density::{
    enumerate_monomials, hamiltonian_density, hk_density, ibp_generators, mass_density, DensityClass,
};
use nlsmod::energy::{
    basic_density, build_catalogue, cancellation_matrix, correction_density, hk_derivative, solve_energy,
    solve_energy_with, verify_lemmas, DensityKind, SolveOptions, StarQuotient,
};
use nlsmod::reduce::reduce_modulo;
use nlsmod::{Coeff, DensityExpr, DensityMonomial, Rational, Signature};

use DensityKind::{I, K, V, W};

/// Term map keyed by (sorted u orders, sorted ubar orders), Gaussian-integer
/// coefficients.
type Terms = BTreeMap<(Vec<u32>, Vec<u32>), (i64, i64)>;

fn key(mut u: Vec<u32>, mut ubar: Vec<u32>) -> (Vec<u32>, Vec<u32>) {
    u.sort_unstable_by(|a, b| b.cmp(a));
    ubar.sort_unstable_by(|a, b| b.cmp(a));
    (u, ubar)
}

fn add(t: &mut Terms, k: (Vec<u32>, Vec<u32>), c: (i64, i64)) {
    let e = t.entry(k).or_insert((0, 0));
    e.0 += c.0;
    e.1 += c.1;
}

fn cmul(a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// `∂^a` of a product of factors `(order, conjugated)`, one derivative at a
/// time by the two-factor product rule.
fn differentiate(factors: Vec<(u32, bool)>, a: u32) -> BTreeMap<Vec<(u32, bool)>, i64> {
    let mut cur: BTreeMap<Vec<(u32, bool)>, i64> = BTreeMap::new();
    cur.insert(factors, 1);
    for _ in 0..a {
        let mut next = BTreeMap::new();
        for (f, c) in cur {
            for i in 0..f.len() {
                let mut g = f.clone();
                g[i].0 += 1;
                g.sort_unstable();
                *next.entry(g).or_insert(0) += c;
            }
        }
        cur = next;
    }
    cur
}

/// `d/dt ∫∂^k u ∂^k ū` with `∂_t u = i∂²u − i|u|^{2p}u`, expanded from scratch.
fn brute_hk_derivative(k: u32, p: usize) -> Terms {
    let mut t = Terms::new();
    add(&mut t, key(vec![k + 2], vec![k]), (0, 1));
    add(&mut t, key(vec![k], vec![k + 2]), (0, -1));
    let mut nl: Vec<(u32, bool)> = vec![(0, false); p + 1];
    nl.extend(vec![(0, true); p]);
    for (f, c) in differentiate(nl, k) {
        let u: Vec<u32> = f.iter().filter(|x| !x.1).map(|x| x.0).collect();
        let ub: Vec<u32> = f.iter().filter(|x| x.1).map(|x| x.0).collect();
        // −i ∂^k(u^{p+1}ū^p) · ∂^k ū
        let mut ub1 = ub.clone();
        ub1.push(k);
        add(&mut t, key(u.clone(), ub1), cmul((0, -1), (c, 0)));
        // conjugate factor: +i ∂^k u · ∂^k(ū^{p+1}u^p)
        let mut u2 = ub;
        u2.push(k);
        add(&mut t, key(u2, u), cmul((0, 1), (c, 0)));
    }
    t.retain(|_, c| *c != (0, 0));
    t
}

fn to_terms(e: &DensityExpr) -> Terms {
    let mut t = Terms::new();
    for (m, c) in e.terms() {
        assert!(c.re.is_integer() && c.im.is_integer(), "non-integer coefficient {c}");
        let re = c.re.to_integer().try_into().unwrap();
        let im = c.im.to_integer().try_into().unwrap();
        add(&mut t, key(m.u_orders().to_vec(), m.ubar_orders().to_vec()), (re, im));
    }
    t
}

#[test]
fn hk_derivative_matches_brute_force_leibniz() {
    for k in 2..=6 {
        for p in 2..=3 {
            assert_eq!(to_terms(&hk_derivative(k, p)), brute_hk_derivative(k, p), "k={k} p={p}");
        }
    }
}

#[test]
fn enumeration_matches_pair_of_partitions_count() {
    let sig = Signature::new(3, 3, 8);
    let mut brute = HashSet::new();
    for code in 0..9u32.pow(6) {
        let digits: Vec<u32> = (0..6).map(|i| code / 9u32.pow(i) % 9).collect();
        if digits.iter().sum::<u32>() == 8 {
            brute.insert(key(digits[..3].to_vec(), digits[3..].to_vec()));
        }
    }
    let listed = enumerate_monomials(sig, 8);
    let distinct: HashSet<_> = listed.iter().collect();
    assert_eq!(distinct.len(), listed.len(), "duplicates in enumeration");
    assert_eq!(listed.len(), brute.len());
    for m in &listed {
        assert!(brute.contains(&(m.u_orders().to_vec(), m.ubar_orders().to_vec())));
    }
}

fn in_ibp_span(e: &DensityExpr) -> bool {
    e.signatures().into_iter().all(|sig| {
        let part = e.sector(sig);
        let gens = ibp_generators(sig, sig.total_derivs);
        reduce_modulo(&part, &gens, &[]).unwrap().residual.is_zero()
    })
}

#[test]
fn mass_and_hamiltonian_are_conserved_modulo_ibp() {
    assert!(in_ibp_span(&mass_density().star()));
    for p in 2..=5 {
        assert!(mass_density().starstar(p).is_zero());
        let d = hamiltonian_density(p).time_derivative(p);
        assert!(!d.is_zero());
        assert!(in_ibp_span(&d), "p={p}");
    }
    // Higher Sobolev densities are not conserved.
    assert!(!in_ibp_span(&hk_density(2).time_derivative(2)));
}

fn coeffs(k: u32, p: usize) -> Vec<(String, String)> {
    let e = solve_energy(k, p).unwrap();
    e.coefficients.iter().map(|(n, c)| (n.clone(), format_rational(c))).collect()
}

fn expect(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

#[test]
fn frozen_coefficients_k4_p2() {
    let e = solve_energy(4, 2).unwrap();
    assert_eq!(
        coeffs(4, 2),
        expect(&[
            ("alpha_0", "2"),
            ("beta_0", "12"),
            ("gamma_0", "-24"),
            ("alpha_1", "-14/3"),
            ("beta_1", "-72"),
            ("gamma_1", "0"),
            ("delta_1", "0"),
        ])
    );
    assert_eq!(e.free_unknowns, vec!["gamma_1", "delta_1"]);
    assert_eq!(e.cubic_coeff, Rational::from_integer(0.into()));
}

#[test]
fn frozen_coefficients_other_cells() {
    assert_eq!(coeffs(2, 2), expect(&[("alpha_0", "2"), ("beta_0", "6"), ("gamma_0", "0")]));
    assert_eq!(
        coeffs(5, 3),
        expect(&[
            ("alpha_0", "3"),
            ("beta_0", "20"),
            ("gamma_0", "-60"),
            ("alpha_1", "-69"),
            ("beta_1", "-540"),
            ("gamma_1", "-150"),
            ("delta_1", "0"),
        ])
    );
    let six = coeffs(6, 2);
    assert_eq!(
        six[..7],
        expect(&[
            ("alpha_0", "2"),
            ("beta_0", "18"),
            ("gamma_0", "-36"),
            ("alpha_1", "-34"),
            ("beta_1", "-456"),
            ("gamma_1", "210"),
            ("delta_1", "-108"),
        ])[..]
    );
    assert!(six[7..].iter().all(|(_, v)| v == "0"));
}

#[test]
fn cubic_coefficient_pattern() {
    for (k, p, c) in [(3, 2, 2), (3, 3, 6), (3, 4, 12), (6, 2, -2), (6, 3, -6)] {
        assert_eq!(solve_energy(k, p).unwrap().cubic_coeff, Rational::from_integer(c.into()), "k={k} p={p}");
    }
    for k in [2, 4, 5, 7] {
        assert_eq!(solve_energy(k, 2).unwrap().cubic_coeff, Rational::from_integer(0.into()));
    }
}

#[test]
fn k6_residual_keeps_the_cubic_class() {
    let e = solve_energy(6, 2).unwrap();
    let cubic = DensityMonomial::new(vec![4, 4, 4], vec![0, 0, 0]);
    assert!(e.cubic_expr().monomials().any(|m| *m == cubic));
    assert_ne!(e.cubic_coeff, r(0));
    assert!(e.decomposition().monomials().any(|m| *m == cubic));
}

#[test]
fn cubic_coefficient_independent_of_pivot_order() {
    for (k, p) in [(3, 2), (3, 3), (6, 2)] {
        let n = build_catalogue(k, p).unwrap().len();
        let a = solve_energy(k, p).unwrap();
        let b = solve_energy_with(k, p, &SolveOptions { pivot_order: Some((0..n).rev().collect()) }).unwrap();
        assert_eq!(a.cubic_coeff, b.cubic_coeff);
        b.check_invariants().unwrap();
    }
}

fn r(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

#[test]
fn k2_reduced_matrix() {
    for p in 2..=4 {
        let ci = correction_density(I, 2, p, 1).unwrap();
        assert_eq!(ci, correction_density(W, 2, p, 1).unwrap());
        let basis = [basic_density(I, 2, p, 0).unwrap(), basic_density(V, 2, p, 0).unwrap()];
        let unknowns = [ci, correction_density(V, 2, p, 1).unwrap()];
        let m = cancellation_matrix(2, p, &unknowns, &basis).unwrap();
        let four_p = 4 * p as i64;
        assert_eq!(m, vec![vec![r(2), r(0)], vec![r(0), r(four_p)]]);
        // W_{2,0} ≡ 2 V_{2,0} and I_{2,1} ≡ 0.
        let q = StarQuotient::new(2, p);
        let w = q.normal_form(&basic_density(W, 2, p, 0).unwrap());
        let v = q.normal_form(&basic_density(V, 2, p, 0).unwrap());
        assert_eq!(w, v.scaled_rat(&r(2)));
        assert!(q.normal_form(&basic_density(I, 2, p, 1).unwrap()).is_zero());
    }
}

/// The hand-derived 5×5 system for `k = 3` with `γ̃₁ = 0`. The basic densities
/// are linearly dependent modulo integration by parts and the
/// four-derivative class, so the matrix is one valid representation rather
/// than unique coordinates: each column, combined with the basis (plus the
/// cubic term carried by `Ĩ_{3,1}`), must reproduce that unknown's star.
#[test]
fn k3_pinned_matrix() {
    for p in 2..=3 {
        let q = StarQuotient::new(3, p);
        let unknowns = [(I, 1), (V, 1), (W, 1), (V, 2), (K, 2)];
        let rows = [(I, 0), (V, 0), (V, 1), (W, 0), (K, 1)];
        let four_p = 4 * p as i64;
        let matrix = [[2, 0, 0, 0, 0], [0, four_p, 2, 0, 0], [0, 0, -2, 2, 0], [0, 0, -2, 0, 0], [0, 0, 0, 0, 2]];
        let cubic_row = [-2 * (p as i64 - 1), 0, 0, 0, 0];
        for (j, &(kind, h)) in unknowns.iter().enumerate() {
            let mut gap = correction_density(kind, 3, p, h).unwrap().star();
            for (i, &(bk, bh)) in rows.iter().enumerate() {
                gap = gap.sub(&basic_density(bk, 3, p, bh).unwrap().scaled_rat(&r(matrix[i][j])));
            }
            gap = gap.sub(&basic_density(I, 3, p, 1).unwrap().scaled_rat(&r(cubic_row[j])));
            assert!(q.normal_form(&gap).is_zero(), "p={p}, column {j}");
        }
        let mut m: Vec<Vec<Rational>> = matrix.iter().map(|row| row.map(r).to_vec()).collect();
        let (pivots, _) = nlsmod::linalg::rref(&mut m, 5);
        assert_eq!(pivots.len(), 5, "matrix is invertible");
        assert!(q.normal_form(&correction_density(I, 3, p, 2).unwrap().star()).is_zero());
    }
    // W_{3,1} = −V_{3,0} exactly.
    assert_eq!(basic_density(W, 3, 2, 1).unwrap(), basic_density(V, 3, 2, 0).unwrap().neg());
}

#[test]
fn lemma_identities_hold_on_small_grid() {
    for k in 2..=5 {
        for p in 2..=3 {
            for c in verify_lemmas(k, p).unwrap() {
                assert!(c.passed, "{c}");
            }
        }
    }
}

#[test]
fn corrupted_catalogue_is_detected() {
    let mut cat = build_catalogue(4, 2).unwrap();
    cat.corrupt_for_testing();
    let checks = nlsmod::energy::verify_lemmas_for(&cat).unwrap();
    assert!(checks.iter().any(|c| !c.passed));
}

#[test]
fn solved_energies_satisfy_invariants() {
    for k in 2..=6 {
        let e = solve_energy(k, 2).unwrap();
        e.check_invariants().unwrap();
        assert!(e.f_k.monomials().all(|m| m.max_order() < k));
        assert!(e.f_k.monomials().all(|m| nlsmod::density::classify(m, k, 2) == DensityClass::Gamma));
    }
}

#[test]
fn tampered_energy_fails_invariants() {
    let mut e = solve_energy(4, 2).unwrap();
    let m = e.f_k.monomials().next().unwrap().clone();
    e.f_k.add_term(m, &Coeff::real(ratio(1, 7)));
    assert!(e.check_invariants().is_err());
}

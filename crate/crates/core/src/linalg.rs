//! Small dense exact solver for real unknowns against Gaussian-rational data.

use std::collections::BTreeSet;

use num_traits::{One, Zero};

use crate::coeff::Rational;
use crate::density::{DensityExpr, DensityMonomial};

/// Solution of `Σ x_j · columns[j] = rhs` over real rationals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealSolution {
    pub values: Vec<Rational>,
    /// Column indices that were free and pinned to zero.
    pub free: Vec<usize>,
}

/// Solves for real `x` with `Σ x_j columns[j] = rhs`, splitting every complex
/// equation into its real and imaginary parts. Pivots are taken column by
/// column in `order`; free columns are set to zero. Returns `None` when the
/// system is inconsistent.
pub fn solve_real(columns: &[DensityExpr], rhs: &DensityExpr, order: &[usize]) -> Option<RealSolution> {
    let n = columns.len();
    debug_assert_eq!(order.len(), n);
    let monos: BTreeSet<&DensityMonomial> = columns.iter().flat_map(|c| c.monomials()).chain(rhs.monomials()).collect();
    let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(2 * monos.len());
    for m in &monos {
        let mut re = Vec::with_capacity(n + 1);
        let mut im = Vec::with_capacity(n + 1);
        for &j in order {
            let c = columns[j].coeff(m);
            re.push(c.re);
            im.push(c.im);
        }
        let r = rhs.coeff(m);
        re.push(r.re);
        im.push(r.im);
        rows.push(re);
        rows.push(im);
    }
    let (pivots, consistent) = rref(&mut rows, n);
    if !consistent {
        return None;
    }
    let mut values = vec![Rational::zero(); n];
    let mut pivot_cols = vec![false; n];
    for (r, &pc) in pivots.iter().enumerate() {
        values[order[pc]] = rows[r][n].clone();
        pivot_cols[pc] = true;
    }
    let free = (0..n).filter(|&pc| !pivot_cols[pc]).map(|pc| order[pc]).collect();
    Some(RealSolution { values, free })
}

/// In-place reduced row echelon form on the first `ncols` columns of an
/// augmented matrix. Returns the pivot column of each leading row and
/// whether the augmented column is consistent.
pub fn rref(rows: &mut [Vec<Rational>], ncols: usize) -> (Vec<usize>, bool) {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(sel) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, sel);
        let inv = Rational::one() / rows[r][c].clone();
        for x in rows[r].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                *x -= &f * y;
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    let consistent = rows[r..].iter().all(|row| row.get(ncols).is_none_or(|x| x.is_zero()));
    (pivots, consistent)
}

/// Rank of a set of expressions viewed as real vectors.
pub fn real_rank(vectors: &[DensityExpr]) -> usize {
    let order: Vec<usize> = (0..vectors.len()).collect();
    let monos: BTreeSet<&DensityMonomial> = vectors.iter().flat_map(|c| c.monomials()).collect();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    for m in &monos {
        let mut re = Vec::new();
        let mut im = Vec::new();
        for &j in &order {
            let c = vectors[j].coeff(m);
            re.push(c.re);
            im.push(c.im);
        }
        re.push(Rational::zero());
        im.push(Rational::zero());
        rows.push(re);
        rows.push(im);
    }
    if rows.is_empty() {
        return 0;
    }
    rref(&mut rows, vectors.len()).0.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{rat, Coeff};

    fn m(u: u32) -> DensityMonomial {
        DensityMonomial::new(vec![u], vec![0])
    }

    #[test]
    fn solves_with_free_column_pinned() {
        let a = DensityExpr::term(Coeff::from_int(2), m(1));
        let b = DensityExpr::term(Coeff::from_int(4), m(1));
        let c = DensityExpr::term(Coeff::i(), m(2));
        let rhs = DensityExpr::from_terms([(m(1), Coeff::from_int(6)), (m(2), Coeff::i().scale(&rat(3)))]);
        let s = solve_real(&[a.clone(), b.clone(), c.clone()], &rhs, &[0, 1, 2]).unwrap();
        assert_eq!(s.values, vec![rat(3), rat(0), rat(3)]);
        assert_eq!(s.free, vec![1]);
        let s = solve_real(&[a, b, c], &rhs, &[1, 0, 2]).unwrap();
        assert_eq!(s.values[1], crate::coeff::ratio(3, 2));
        assert_eq!(s.free, vec![0]);
    }

    #[test]
    fn real_unknowns_cannot_absorb_phase() {
        let a = DensityExpr::term(Coeff::from_int(1), m(1));
        let rhs = DensityExpr::term(Coeff::i(), m(1));
        assert!(solve_real(&[a], &rhs, &[0]).is_none());
    }

    #[test]
    fn rank_counts_real_independence() {
        let a = DensityExpr::term(Coeff::from_int(1), m(1));
        let b = DensityExpr::term(Coeff::i(), m(1));
        assert_eq!(real_rank(&[a.clone(), b, a]), 2);
    }
}

//! Thin wrapper over faer's supernodal sparse Cholesky for symmetric positive
//! definite systems whose sparsity pattern is fixed across many refactorizations.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LltRef, SymbolicCholesky,
};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Conj, MatMut, Par, Side};

use crate::error::{Error, Result};

/// A fixed lower-triangular sparsity pattern with its symbolic factorization.
///
/// Entries are given as `(row, col)` pairs with `row >= col`; duplicates are
/// summed, which is how element contributions are scattered.
pub(crate) struct SpdPattern {
    n: usize,
    entries: Vec<(usize, usize)>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    cholesky: SymbolicCholesky<usize>,
}

impl SpdPattern {
    pub fn new(n: usize, entries: Vec<(usize, usize)>) -> Result<Self> {
        debug_assert!(entries.iter().all(|&(r, c)| r >= c && r < n));
        let pairs: Vec<Pair<usize, usize>> = entries
            .iter()
            .map(|&(row, col)| Pair { row, col })
            .collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| Error::Solver(format!("sparsity pattern: {e:?}")))?;
        let cholesky = factorize_symbolic_cholesky(
            symbolic.as_ref(),
            Side::Lower,
            Default::default(),
            Default::default(),
        )
        .map_err(|e| Error::Solver(format!("symbolic factorization: {e:?}")))?;
        Ok(Self {
            n,
            entries,
            symbolic,
            argsort,
            cholesky,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    /// Numeric factorization for values aligned with the entry list.
    pub fn factorize(&self, values: &[f64]) -> Result<SpdFactor> {
        Error::check_len("matrix values", self.entries.len(), values.len())?;
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, values)
            .map_err(|e| Error::Solver(format!("matrix assembly: {e:?}")))?;
        let mut factor = vec![0.0; self.cholesky.len_val()];
        let mut mem = MemBuffer::new(
            self.cholesky
                .factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()),
        );
        self.cholesky
            .factorize_numeric_llt::<f64>(
                &mut factor,
                mat.as_ref(),
                Side::Lower,
                Default::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| {
                Error::Solver(format!("matrix is not positive definite ({e:?})"))
            })?;
        Ok(SpdFactor {
            factor,
            values: values.to_vec(),
        })
    }

    /// `y = A x` for the symmetric matrix whose lower triangle is `values`.
    pub fn symmetric_matvec(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (&(r, c), &v) in self.entries.iter().zip(values) {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }
}

pub(crate) struct RefinedSolve {
    pub x: Vec<f64>,
    /// `||b - A x|| / ||b||`.
    pub relative_residual: f64,
    /// `||b - A x|| / || |A| |x| + |b| ||`, the normwise backward error.
    pub backward_error: f64,
}

/// `b - A x` accumulated in double-double arithmetic so that the result is
/// accurate even when it is far below `eps |A| |x|`.
fn accurate_residual(pattern: &SpdPattern, values: &[f64], x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut hi = b.to_vec();
    let mut lo = vec![0.0; b.len()];
    let mut add = |row: usize, v: f64, xv: f64| {
        let p = -v * xv;
        let e = (-v).mul_add(xv, -p);
        let (s, t) = two_sum(hi[row], p);
        hi[row] = s;
        lo[row] += t + e;
    };
    for (&(r, c), &v) in pattern.entries.iter().zip(values) {
        add(r, v, x[c]);
        if r != c {
            add(c, v, x[r]);
        }
    }
    hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Numeric factor of one matrix on an [`SpdPattern`]; solves go through the
/// pattern that produced it.
pub(crate) struct SpdFactor {
    factor: Vec<f64>,
    values: Vec<f64>,
}

impl SpdPattern {
    /// Overwrites `rhs` with `A^{-1} rhs`.
    pub fn solve_in_place(&self, factor: &SpdFactor, rhs: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(rhs.len(), n);
        let llt = LltRef::<'_, usize, f64>::new(&self.cholesky, &factor.factor);
        let mut mem = MemBuffer::new(self.cholesky.solve_in_place_scratch::<f64>(1, Par::Seq));
        let rhs_mat = MatMut::from_column_major_slice_mut(rhs, n, 1);
        llt.solve_in_place_with_conj(Conj::No, rhs_mat, Par::Seq, MemStack::new(&mut mem));
    }

    /// Solve followed by iterative refinement until the residual stops
    /// improving.
    pub fn solve_refined(&self, factor: &SpdFactor, rhs: &[f64]) -> RefinedSolve {
        let b_norm = norm(rhs);
        let mut x = rhs.to_vec();
        self.solve_in_place(factor, &mut x);
        if b_norm == 0.0 {
            return RefinedSolve {
                x,
                relative_residual: 0.0,
                backward_error: 0.0,
            };
        }
        let residual = |x: &[f64]| accurate_residual(self, &factor.values, x, rhs);
        let mut r = residual(&x);
        let mut rel = norm(&r) / b_norm;
        for _ in 0..MAX_REFINEMENTS {
            if rel <= REFINEMENT_TARGET {
                break;
            }
            self.solve_in_place(factor, &mut r);
            let candidate: Vec<f64> = x.iter().zip(&r).map(|(a, d)| a + d).collect();
            let r2 = residual(&candidate);
            let rel2 = norm(&r2) / b_norm;
            if rel2 >= rel {
                break;
            }
            let stalled = rel2 > 0.999 * rel;
            x = candidate;
            r = r2;
            rel = rel2;
            if stalled {
                break;
            }
        }
        let abs_values: Vec<f64> = factor.values.iter().map(|v| v.abs()).collect();
        let abs_x: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let mut scale = vec![0.0; self.n];
        self.symmetric_matvec(&abs_values, &abs_x, &mut scale);
        scale.iter_mut().zip(rhs).for_each(|(s, b)| *s += b.abs());
        RefinedSolve {
            backward_error: rel * b_norm / norm(&scale),
            x,
            relative_residual: rel,
        }
    }
}

const MAX_REFINEMENTS: usize = 60;
/// Refinement goes on below the acceptance bounds so that compliance
/// differences stay accurate enough for finite-difference checks.
const REFINEMENT_TARGET: f64 = 1e-14;

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

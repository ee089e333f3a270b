//! Top-d symmetric eigenpairs.
//!
//! Small problems go straight to a dense symmetric eigendecomposition. Larger
//! ones use a block Krylov subspace with full reorthogonalisation and an
//! explicit Rayleigh-Ritz step, which only needs products with the operator
//! and resolves eigenvalue multiplicities up to the block width.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Problems up to this size use the dense solver.
pub const DENSE_CUTOFF: usize = 160;

const BLOCK_OVERSAMPLE: usize = 6;
const RITZ_RESIDUAL_TOL: f64 = 1e-11;
const DEGENERATE_GAP: f64 = 1e-10;
const KRYLOV_SEED: u64 = 0x5eed_0f_e16e;

/// Which end(s) of the spectrum count as "top".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Largest eigenvalues, descending.
    Algebraic,
    /// Largest absolute values, descending; ties favour the positive value.
    Magnitude,
}

/// Symmetric linear operator applied to a block of column vectors.
pub trait SymmetricOperator<T: Scalar> {
    fn dim(&self) -> usize;
    fn apply(&self, block: &DMatrix<T>) -> DMatrix<T>;
    /// Dense copy, used when the problem is small enough for a direct solve.
    fn to_dense(&self) -> DMatrix<T>;
}

impl<T: Scalar> SymmetricOperator<T> for DMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, block: &DMatrix<T>) -> DMatrix<T> {
        self * block
    }

    fn to_dense(&self) -> DMatrix<T> {
        self.clone()
    }
}

/// Compressed sparse rows for a symmetric matrix with both triangles stored.
#[derive(Debug, Clone)]
pub struct SparseSymmetric<T: Scalar> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseSymmetric<T> {
    /// `rows[i]` lists `(j, value)` pairs; the caller guarantees symmetry.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                cols.push(j);
                values.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            values,
        }
    }
}

impl<T: Scalar> SymmetricOperator<T> for SparseSymmetric<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, block: &DMatrix<T>) -> DMatrix<T> {
        let k = block.ncols();
        let mut out = DMatrix::zeros(self.n, k);
        for c in 0..k {
            let x = block.column(c);
            let mut y = out.column_mut(c);
            for i in 0..self.n {
                let mut acc = T::zero();
                for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[idx] * x[self.cols[idx]];
                }
                y[i] = acc;
            }
        }
        out
    }

    fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[idx])] = self.values[idx];
            }
        }
        m
    }
}

/// Top-d eigenpairs with orthonormal, sign-normalised eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Scalar> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
    pub ordering: Ordering,
    /// Set when the d-th and (d+1)-th eigenvalues are numerically tied, so the
    /// returned basis is one of many valid choices.
    pub degenerate: bool,
}

/// Flip `v` so that its first largest-magnitude entry is positive.
pub(crate) fn fix_sign<T: Scalar>(v: &mut DVector<T>) {
    let max = v.amax();
    if max == T::zero() {
        return;
    }
    // Near-ties resolve to the lowest index so the choice is stable under
    // rounding noise.
    let cut = max * (T::one() - T::tol(1e-8));
    if let Some(&lead) = v.iter().find(|x| x.abs() >= cut) {
        if lead < T::zero() {
            v.neg_mut();
        }
    }
}

fn select<T: Scalar>(values: &[T], ordering: Ordering, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    match ordering {
        Ordering::Algebraic => {
            idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)))
        }
        Ordering::Magnitude => idx.sort_by(|&a, &b| {
            values[b]
                .abs()
                .partial_cmp(&values[a].abs())
                .unwrap()
                .then(values[b].partial_cmp(&values[a]).unwrap())
                .then(a.cmp(&b))
        }),
    }
    if ordering == Ordering::Magnitude {
        // Magnitudes equal up to rounding count as a tie, settled in favour
        // of the positive value.
        let scale = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tie = T::tol(DEGENERATE_GAP) * scale;
        let mut swapped = true;
        while swapped {
            swapped = false;
            for k in 1..idx.len() {
                let (a, b) = (values[idx[k - 1]], values[idx[k]]);
                if a < T::zero() && b > T::zero() && a.abs() - b.abs() <= tie {
                    idx.swap(k - 1, k);
                    swapped = true;
                }
            }
        }
    }
    idx.truncate(count);
    idx
}

/// Top-d eigenpairs of a dense symmetric matrix.
pub fn top_d_eigen<T: Scalar>(
    m: &DMatrix<T>,
    d: usize,
    ordering: Ordering,
) -> Result<SpectralDecomposition<T>> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym > T::tol(1e-12) * m.amax().max(T::one()) {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    top_d_eigen_operator(m, d, ordering)
}

/// Top-d eigenpairs of an operator; dense below [`DENSE_CUTOFF`].
pub fn top_d_eigen_operator<T: Scalar, O: SymmetricOperator<T> + ?Sized>(
    op: &O,
    d: usize,
    ordering: Ordering,
) -> Result<SpectralDecomposition<T>> {
    let n = op.dim();
    if d == 0 || d > n {
        return Err(Error::InvalidRank { requested: d, n });
    }
    if n <= DENSE_CUTOFF {
        dense(&op.to_dense(), d, ordering)
    } else {
        block_krylov(op, d, ordering)
    }
}

fn finish<T: Scalar>(
    all_values: &[T],
    basis_vectors: impl Fn(usize) -> DVector<T>,
    d: usize,
    n: usize,
    ordering: Ordering,
) -> SpectralDecomposition<T> {
    let sel = select(all_values, ordering, (d + 1).min(all_values.len()));
    let mut values = DVector::zeros(d);
    let mut vectors = DMatrix::zeros(n, d);
    for (c, &i) in sel.iter().take(d).enumerate() {
        values[c] = all_values[i];
        let mut v = basis_vectors(i);
        fix_sign(&mut v);
        vectors.set_column(c, &v);
    }
    let degenerate = sel.len() > d && {
        let scale = all_values.iter().fold(T::one(), |s, v| s.max(v.abs()));
        (all_values[sel[d - 1]] - all_values[sel[d]]).abs() < T::tol(DEGENERATE_GAP) * scale
    };
    if degenerate {
        log::warn!(
            "degenerate spectrum: eigenvalues {} and {} are tied; eigenvector basis is not unique",
            d,
            d + 1
        );
    }
    SpectralDecomposition {
        values,
        vectors,
        ordering,
        degenerate,
    }
}

fn dense<T: Scalar>(m: &DMatrix<T>, d: usize, ordering: Ordering) -> Result<SpectralDecomposition<T>> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::ConvergenceFailure("dense symmetric eigensolver".into()))?;
    let vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    Ok(finish(
        &vals,
        |i| eig.eigenvectors.column(i).clone_owned(),
        d,
        n,
        ordering,
    ))
}

/// Orthogonalise the columns of `v` against `q` (twice) and among
/// themselves, dropping columns that collapse to numerical zero.
fn orthonormal_extension<T: Scalar>(q: &DMatrix<T>, v: DMatrix<T>) -> DMatrix<T> {
    let mut v = v;
    if q.ncols() > 0 {
        for _ in 0..2 {
            let coeffs = q.tr_mul(&v);
            v -= q * coeffs;
        }
    }
    let mut kept: Vec<DVector<T>> = Vec::with_capacity(v.ncols());
    for c in 0..v.ncols() {
        let mut col = v.column(c).clone_owned();
        let before = col.norm();
        for _ in 0..2 {
            for k in &kept {
                let proj = k.dot(&col);
                col.axpy(-proj, k, T::one());
            }
            if q.ncols() > 0 {
                let coeffs = q.tr_mul(&col);
                col -= q * coeffs;
            }
        }
        let after = col.norm();
        if after > T::zero() && after > T::tol(1e-10) * before {
            kept.push(col / after);
        }
    }
    let n = v.nrows();
    let mut out = DMatrix::zeros(n, kept.len());
    for (c, col) in kept.iter().enumerate() {
        out.set_column(c, col);
    }
    out
}

fn random_block<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<T> {
    DMatrix::from_fn(n, k, |_, _| T::lit(rng.random::<f64>() - 0.5))
}

fn hcat<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn block_krylov<T: Scalar, O: SymmetricOperator<T> + ?Sized>(
    op: &O,
    d: usize,
    ordering: Ordering,
) -> Result<SpectralDecomposition<T>> {
    let n = op.dim();
    let width = (d + BLOCK_OVERSAMPLE).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(KRYLOV_SEED);
    let mut basis = DMatrix::<T>::zeros(n, 0);
    let mut image = DMatrix::<T>::zeros(n, 0);
    let mut next = random_block::<T>(&mut rng, n, width);

    loop {
        let mut fresh = orthonormal_extension(&basis, next);
        if fresh.ncols() == 0 {
            // Krylov space became invariant; keep exploring its complement.
            fresh = orthonormal_extension(&basis, random_block(&mut rng, n, width));
            if fresh.ncols() == 0 {
                return Err(Error::ConvergenceFailure(
                    "could not extend Krylov basis".into(),
                ));
            }
        }
        let product = op.apply(&fresh);
        basis = hcat(&basis, &fresh);
        image = hcat(&image, &product);
        next = product;

        let m = basis.ncols();
        if m < width {
            continue;
        }
        let mut h = basis.tr_mul(&image);
        h = (&h + h.transpose()) * T::lit(0.5);
        let eig = SymmetricEigen::try_new(h, T::default_epsilon(), 10_000)
            .ok_or_else(|| Error::ConvergenceFailure("Rayleigh-Ritz step".into()))?;
        let ritz: Vec<T> = eig.eigenvalues.iter().copied().collect();
        let scale = ritz.iter().fold(T::zero(), |s, v| s.max(v.abs()));

        let exhausted = m >= n;
        let wanted = select(&ritz, ordering, d);
        let converged = exhausted
            || wanted.iter().all(|&i| {
                let s = eig.eigenvectors.column(i);
                let r = &image * s - &basis * s * ritz[i];
                r.norm() <= T::tol(RITZ_RESIDUAL_TOL) * scale
            });
        if converged {
            return Ok(finish(
                &ritz,
                |i| {
                    let mut v = &basis * eig.eigenvectors.column(i);
                    let nv = v.norm();
                    if nv > T::zero() {
                        v /= nv;
                    }
                    v
                },
                d,
                n,
                ordering,
            ));
        }
    }
}

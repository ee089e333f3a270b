//! Orthogonal alignment of point configurations.
//!
//! Embeddings of a random dot product graph are identified only up to an
//! orthogonal transformation, so comparisons against ground truth go
//! through one of these alignments. Reflections are allowed.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalAlignment<T: Scalar> {
    pub q: DMatrix<T>,
    pub residual: T,
}

fn polar_factor<T: Scalar>(m: DMatrix<T>) -> Result<DMatrix<T>> {
    let svd = SVD::try_new(m, true, true, T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::ConvergenceFailure("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    Ok(u * v_t)
}

/// `Q` minimising `||source Q - target||_F` over orthogonal matrices.
pub fn procrustes<T: Scalar>(
    source: &DMatrix<T>,
    target: &DMatrix<T>,
) -> Result<OrthogonalAlignment<T>> {
    if source.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "procrustes source is {:?}, target is {:?}",
            source.shape(),
            target.shape()
        )));
    }
    let q = polar_factor(source.tr_mul(target))?;
    let residual = (source * &q - target).norm();
    Ok(OrthogonalAlignment { q, residual })
}

/// `Q = V_1 V_2^T` from the SVD `V_1 Λ V_2^T` of `U_pop^T U_hat`. The residual
/// is `||U_pop^T U_hat - Q||_F`, which is small when the two bases span
/// nearly the same subspace.
pub fn subspace_alignment<T: Scalar>(
    u_pop: &DMatrix<T>,
    u_hat: &DMatrix<T>,
) -> Result<OrthogonalAlignment<T>> {
    if u_pop.shape() != u_hat.shape() {
        return Err(Error::ShapeMismatch(format!(
            "bases are {:?} and {:?}",
            u_pop.shape(),
            u_hat.shape()
        )));
    }
    let cross = u_pop.tr_mul(u_hat);
    let q = polar_factor(cross.clone())?;
    let residual = (cross - &q).norm();
    Ok(OrthogonalAlignment { q, residual })
}

/// Largest Euclidean row norm.
pub fn two_to_infty<T: Scalar>(m: &DMatrix<T>) -> T {
    m.row_iter().map(|r| r.norm()).fold(T::zero(), |a, b| a.max(b))
}

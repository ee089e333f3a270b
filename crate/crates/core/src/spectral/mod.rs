//! Adjacency and Laplacian spectral embeddings.

pub mod eigen;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdjacencyMatrix, LatentPositions};
use crate::scalar::Scalar;

pub use eigen::{
    top_d_eigen, top_d_eigen_operator, Ordering, SparseSymmetric, SpectralDecomposition,
    SymmetricOperator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Ase,
    Lse,
}

impl std::fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Ase => "ase",
            EmbeddingKind::Lse => "lse",
        })
    }
}

/// Estimated positions `U S^{1/2}` together with the retained eigenvalues.
///
/// The columns of `positions` are orthogonal with squared norms equal to
/// `eigenvalues`, which the least-squares extensions rely on. Laplacian
/// embeddings also carry the in-sample degree vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T: Scalar> {
    kind: EmbeddingKind,
    positions: DMatrix<T>,
    eigenvalues: DVector<T>,
    degrees: Option<Vec<T>>,
}

impl<T: Scalar> Embedding<T> {
    /// Assemble an embedding from stored parts, checking that
    /// `positions^T positions = diag(eigenvalues)`.
    pub fn from_parts(
        kind: EmbeddingKind,
        positions: DMatrix<T>,
        eigenvalues: DVector<T>,
        degrees: Option<Vec<T>>,
    ) -> Result<Self> {
        let d = eigenvalues.len();
        if positions.ncols() != d || d == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} position columns for {d} eigenvalues",
                positions.ncols()
            )));
        }
        if let Some((i, v)) = eigenvalues.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(Error::NonPositiveEigenvalue {
                index: i,
                value: v.as_f64(),
            });
        }
        match (&degrees, kind) {
            (Some(deg), _) if deg.len() != positions.nrows() => {
                return Err(Error::ShapeMismatch(format!(
                    "{} degrees for {} vertices",
                    deg.len(),
                    positions.nrows()
                )))
            }
            (None, EmbeddingKind::Lse) => {
                return Err(Error::InconsistentEmbedding(
                    "Laplacian embedding without degree vector".into(),
                ))
            }
            _ => {}
        }
        let gram = positions.tr_mul(&positions);
        let scale = eigenvalues.amax().max(T::one());
        let expected = DMatrix::from_diagonal(&eigenvalues);
        let gap = (gram - expected).amax();
        if gap > T::tol(1e-8) * scale {
            return Err(Error::InconsistentEmbedding(format!(
                "positions^T positions differs from diag(eigenvalues) by {gap}"
            )));
        }
        Ok(Self {
            kind,
            positions,
            eigenvalues,
            degrees,
        })
    }

    fn from_decomposition(
        kind: EmbeddingKind,
        dec: SpectralDecomposition<T>,
        degrees: Option<Vec<T>>,
    ) -> Result<Self> {
        if let Some((i, v)) = dec.values.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(Error::NonPositiveEigenvalue {
                index: i,
                value: v.as_f64(),
            });
        }
        let scale = dec.values.map(|v| v.sqrt());
        let positions = dec.vectors * DMatrix::from_diagonal(&scale);
        Ok(Self {
            kind,
            positions,
            eigenvalues: dec.values,
            degrees,
        })
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn positions(&self) -> &DMatrix<T> {
        &self.positions
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn degrees(&self) -> Option<&[T]> {
        self.degrees.as_deref()
    }
}

fn adjacency_operator<T: Scalar>(a: &AdjacencyMatrix) -> SparseSymmetric<T> {
    SparseSymmetric::from_rows(
        (0..a.n())
            .map(|i| a.neighbors(i).iter().map(|&j| (j, T::one())).collect())
            .collect(),
    )
}

fn inv_sqrt_or_zero<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one() / x.sqrt()
    } else {
        T::zero()
    }
}

fn laplacian_operator<T: Scalar>(a: &AdjacencyMatrix) -> SparseSymmetric<T> {
    let scale: Vec<T> = a
        .degrees()
        .into_iter()
        .map(|d| inv_sqrt_or_zero(T::lit(d as f64)))
        .collect();
    SparseSymmetric::from_rows(
        (0..a.n())
            .map(|i| {
                a.neighbors(i)
                    .iter()
                    .map(|&j| (j, scale[i] * scale[j]))
                    .collect()
            })
            .collect(),
    )
}

/// `D^{-1/2} A D^{-1/2}`, with `0^{-1/2} = 0` for isolated vertices.
pub fn normalized_laplacian<T: Scalar>(a: &AdjacencyMatrix) -> DMatrix<T> {
    laplacian_operator(a).to_dense()
}

/// Normalised Laplacian of a weighted symmetric matrix, using row sums as
/// degrees. Returns the matrix and the degree vector.
pub fn normalized_laplacian_weighted<T: Scalar>(m: &DMatrix<T>) -> (DMatrix<T>, Vec<T>) {
    let degrees: Vec<T> = m.row_iter().map(|r| r.sum()).collect();
    let scale: Vec<T> = degrees.iter().map(|&d| inv_sqrt_or_zero(d)).collect();
    let l = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * scale[i] * scale[j]);
    (l, degrees)
}

/// Adjacency spectral embedding from the top-d algebraic eigenpairs.
pub fn ase<T: Scalar>(a: &AdjacencyMatrix, d: usize) -> Result<Embedding<T>> {
    let dec = top_d_eigen_operator(&adjacency_operator::<T>(a), d, Ordering::Algebraic)?;
    Embedding::from_decomposition(EmbeddingKind::Ase, dec, None)
}

/// Adjacency spectral embedding of an arbitrary symmetric matrix, such as the
/// noise-free `P = X X^T`.
pub fn ase_matrix<T: Scalar>(m: &DMatrix<T>, d: usize) -> Result<Embedding<T>> {
    let dec = top_d_eigen(m, d, Ordering::Algebraic)?;
    Embedding::from_decomposition(EmbeddingKind::Ase, dec, None)
}

/// Laplacian spectral embedding from the top-d magnitude eigenpairs of
/// `D^{-1/2} A D^{-1/2}`.
pub fn lse<T: Scalar>(a: &AdjacencyMatrix, d: usize) -> Result<Embedding<T>> {
    let dec = top_d_eigen_operator(&laplacian_operator::<T>(a), d, Ordering::Magnitude)?;
    let degrees = a.degrees().into_iter().map(|k| T::lit(k as f64)).collect();
    Embedding::from_decomposition(EmbeddingKind::Lse, dec, Some(degrees))
}

/// Laplacian spectral embedding of a weighted symmetric matrix.
pub fn lse_matrix<T: Scalar>(m: &DMatrix<T>, d: usize) -> Result<Embedding<T>> {
    let (l, degrees) = normalized_laplacian_weighted(m);
    let dec = top_d_eigen(&l, d, Ordering::Magnitude)?;
    Embedding::from_decomposition(EmbeddingKind::Lse, dec, Some(degrees))
}

/// Noise-free counterparts of the embedding inputs for known latent positions.
#[derive(Debug, Clone)]
pub struct PopulationDecomposition<T: Scalar> {
    /// `P = X X^T`.
    pub p: DMatrix<T>,
    /// Top-d eigenvectors of `P`.
    pub u: DMatrix<T>,
    /// Top-d eigenvalues of `P`.
    pub s: DVector<T>,
    /// Expected degrees `t_i = sum_j X_j^T X_i`.
    pub t: DVector<T>,
    /// `T^{-1/2} X`.
    pub x_tilde: DMatrix<T>,
    /// Expected out-of-sample degree `sum_j X_j^T w_bar`.
    pub t_v: Option<T>,
}

/// Expected degrees `t_i = X_i^T sum_j X_j`, computed in O(nd).
pub fn expected_degrees<T: Scalar>(x: &LatentPositions<T>) -> DVector<T> {
    let column_sums = x.matrix().row_sum().transpose();
    x.matrix() * column_sums
}

/// `T^{-1/2} X`, the population Laplacian embedding.
pub fn laplacian_positions<T: Scalar>(x: &LatentPositions<T>) -> Result<DMatrix<T>> {
    let t = expected_degrees(x);
    let mut out = x.matrix().clone();
    for (i, &ti) in t.iter().enumerate() {
        if !(ti > T::zero()) {
            return Err(Error::ZeroExpectedDegree(i));
        }
        let s = T::one() / ti.sqrt();
        out.row_mut(i).scale_mut(s);
    }
    Ok(out)
}

pub fn population_quantities<T: Scalar>(
    x: &LatentPositions<T>,
    w_bar: Option<&DVector<T>>,
) -> Result<PopulationDecomposition<T>> {
    let p = x.matrix() * x.matrix().transpose();
    let dec = top_d_eigen(&p, x.dim(), Ordering::Algebraic)?;
    let t = expected_degrees(x);
    let x_tilde = laplacian_positions(x)?;
    let t_v = match w_bar {
        Some(w) => {
            if w.len() != x.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "w_bar has length {}, expected {}",
                    w.len(),
                    x.dim()
                )));
            }
            Some((x.matrix() * w).sum())
        }
        None => None,
    };
    Ok(PopulationDecomposition {
        p,
        u: dec.vectors,
        s: dec.values,
        t,
        x_tilde,
        t_v,
    })
}

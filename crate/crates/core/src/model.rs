//! Latent-position distributions and random dot product graph sampling.
//!
//! A distribution is a finite mixture of point masses in `R^d` whose atoms
//! have pairwise inner products in `[0, 1]`. Graphs are drawn by connecting
//! each pair `i < j` independently with probability `X_i^T X_j`.
//!
//! All sampling is a pure function of `(inputs, seed)`. Edge draws for row
//! `i` come from ChaCha stream `i` of the adjacency seed, so the graph does
//! not depend on the order in which rows are visited.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slack allowed when checking that a probability lies in `[0, 1]`.
const PROBABILITY_SLACK: f64 = 1e-12;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Derive an independent child seed from `parent` and an index.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(parent);
    rng.set_stream(index);
    rng.next_u64()
}

/// Finite mixture of point masses with valid pairwise inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductDistribution<T: Scalar> {
    dim: usize,
    atoms: Vec<DVector<T>>,
    weights: Vec<f64>,
    eta_margin: T,
}

/// Outcome of a successful distribution check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T: Scalar> {
    /// `min` over ordered atom pairs of `min(x^T y, 1 - x^T y)`.
    pub eta_margin: T,
    /// Gram matrix of the atoms.
    pub inner_products: DMatrix<T>,
}

/// Check atoms and weights against the inner-product-distribution rules.
pub fn validate_distribution<T: Scalar>(
    atoms: &[DVector<T>],
    weights: &[f64],
) -> Result<ValidationReport<T>> {
    if atoms.is_empty() {
        return Err(Error::InvalidDistribution("no atoms".into()));
    }
    let dim = atoms[0].len();
    if dim == 0 {
        return Err(Error::InvalidDistribution("atoms have dimension 0".into()));
    }
    if let Some((k, a)) = atoms.iter().enumerate().find(|(_, a)| a.len() != dim) {
        return Err(Error::InvalidDistribution(format!(
            "atom {k} has dimension {}, expected {dim}",
            a.len()
        )));
    }
    if weights.len() != atoms.len() {
        return Err(Error::InvalidDistribution(format!(
            "{} weights for {} atoms",
            weights.len(),
            atoms.len()
        )));
    }
    if let Some((k, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::InvalidDistribution(format!(
            "weight {k} is {w}; weights must be positive"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    if atoms.iter().any(|a| a.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidDistribution("non-finite atom coordinate".into()));
    }

    let k = atoms.len();
    let gram = DMatrix::from_fn(k, k, |i, j| atoms[i].dot(&atoms[j]));
    let slack = T::tol(PROBABILITY_SLACK);
    let mut eta = T::one();
    for i in 0..k {
        for j in 0..k {
            let v = gram[(i, j)];
            if v < -slack || v > T::one() + slack {
                return Err(Error::InnerProductOutOfRange {
                    first: i,
                    second: j,
                    value: v.as_f64(),
                });
            }
            eta = eta.min(v.min(T::one() - v));
        }
    }
    Ok(ValidationReport {
        eta_margin: eta.max(T::zero()),
        inner_products: gram,
    })
}

impl<T: Scalar> InnerProductDistribution<T> {
    pub fn new(atoms: Vec<DVector<T>>, weights: Vec<f64>) -> Result<Self> {
        let report = validate_distribution(&atoms, &weights)?;
        Ok(Self {
            dim: atoms[0].len(),
            atoms,
            weights,
            eta_margin: report.eta_margin,
        })
    }

    /// Convenience constructor from nested slices.
    pub fn from_rows(atoms: &[&[f64]], weights: &[f64]) -> Result<Self> {
        let atoms = atoms
            .iter()
            .map(|a| DVector::from_iterator(a.len(), a.iter().map(|&x| T::lit(x))))
            .collect();
        Self::new(atoms, weights.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[DVector<T>] {
        &self.atoms
    }

    pub fn atom(&self, k: usize) -> &DVector<T> {
        &self.atoms[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn eta_margin(&self) -> T {
        self.eta_margin
    }

    pub fn validate(&self) -> ValidationReport<T> {
        validate_distribution(&self.atoms, &self.weights)
            .expect("distribution was validated on construction")
    }

    /// Draw an atom index according to the mixture weights.
    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        WeightedIndex::new(&self.weights)
            .expect("weights validated")
            .sample(rng)
    }
}

/// Atoms are rows of `V Λ^{1/2}` over the strictly positive eigenvalues of
/// the block matrix, so their Gram matrix reproduces it.
pub fn distribution_from_sbm<T: Scalar>(
    block_matrix: &DMatrix<T>,
    block_priors: &[f64],
) -> Result<InnerProductDistribution<T>> {
    let k = block_matrix.nrows();
    if block_matrix.ncols() != k || k == 0 {
        return Err(Error::ShapeMismatch(format!(
            "block matrix is {}x{}",
            block_matrix.nrows(),
            block_matrix.ncols()
        )));
    }
    if block_priors.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} priors for {k} blocks",
            block_priors.len()
        )));
    }
    let asym = (block_matrix - block_matrix.transpose()).amax();
    if asym > T::tol(1e-12) {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    let eig = SymmetricEigen::new(block_matrix.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let min = eig.eigenvalues.min();
    if min < -T::tol(PSD_TOL) {
        return Err(Error::NotPsd {
            eigenvalue: min.as_f64(),
        });
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > T::tol(PSD_TOL))
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidDistribution("block matrix is zero".into()));
    }
    let mut factor = DMatrix::<T>::zeros(k, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).clone_owned();
        crate::spectral::eigen::fix_sign(&mut col);
        factor.set_column(c, &(col * eig.eigenvalues[i].sqrt()));
    }
    let atoms = (0..k).map(|r| factor.row(r).transpose()).collect();
    InnerProductDistribution::new(atoms, block_priors.to_vec())
}

/// Latent positions as rows of an `n x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPositions<T: Scalar> {
    positions: DMatrix<T>,
    atom_labels: Option<Vec<usize>>,
}

impl<T: Scalar> LatentPositions<T> {
    /// Wrap arbitrary positions, checking that all pairwise dot products are
    /// valid probabilities.
    pub fn new(positions: DMatrix<T>) -> Result<Self> {
        let gram = &positions * positions.transpose();
        let slack = T::tol(PROBABILITY_SLACK);
        for j in 0..gram.ncols() {
            for i in 0..gram.nrows() {
                let v = gram[(i, j)];
                if !(v >= -slack && v <= T::one() + slack) {
                    return Err(Error::ProbabilityOutOfRange {
                        row: i,
                        col: j,
                        value: v.as_f64(),
                    });
                }
            }
        }
        Ok(Self {
            positions,
            atom_labels: None,
        })
    }

    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.positions
    }

    pub fn row(&self, i: usize) -> DVector<T> {
        self.positions.row(i).transpose()
    }

    /// Mixture component of each row, when sampled from a distribution.
    pub fn atom_labels(&self) -> Option<&[usize]> {
        self.atom_labels.as_deref()
    }
}

/// Draw `n` latent positions i.i.d. from the mixture.
pub fn sample_latent<T: Scalar>(
    dist: &InnerProductDistribution<T>,
    n: usize,
    seed: u64,
) -> LatentPositions<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picker = WeightedIndex::new(dist.weights()).expect("weights validated");
    let labels: Vec<usize> = (0..n).map(|_| picker.sample(&mut rng)).collect();
    let positions = DMatrix::from_fn(n, dist.dim(), |i, c| dist.atom(labels[i])[c]);
    LatentPositions {
        positions,
        atom_labels: Some(labels),
    }
}

/// Symmetric, hollow, binary adjacency matrix stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Build from an undirected edge list. Self-loops, out-of-range indices and
    /// duplicate edges are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::ShapeMismatch(format!(
                    "edge ({i}, {j}) out of range for {n} vertices"
                )));
            }
            if i == j {
                return Err(Error::ShapeMismatch(format!("self-loop at vertex {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::ShapeMismatch(format!(
                    "duplicate edge at vertex {i}"
                )));
            }
        }
        Ok(Self { neighbors })
    }

    /// Build from a dense 0/1 matrix, checking symmetry and the zero diagonal.
    pub fn from_dense<T: Scalar>(m: &DMatrix<T>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::ShapeMismatch("adjacency matrix must be square".into()));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            if m[(i, i)] != T::zero() {
                return Err(Error::ShapeMismatch(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if a != b {
                    return Err(Error::NotSymmetric((a - b).abs().as_f64()));
                }
                if a == T::one() {
                    edges.push((i, j));
                } else if a != T::zero() {
                    return Err(Error::ShapeMismatch(format!(
                        "entry ({i}, {j}) is {a}, expected 0 or 1"
                    )));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn to_dense<T: Scalar>(&self) -> DMatrix<T> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                m[(i, j)] = T::one();
            }
        }
        m
    }
}

fn checked_probability<T: Scalar>(p: T, row: usize, col: usize) -> Result<f64> {
    let p = p.as_f64();
    if !(p >= -PROBABILITY_SLACK && p <= 1.0 + PROBABILITY_SLACK) {
        return Err(Error::ProbabilityOutOfRange {
            row,
            col,
            value: p,
        });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Draw `A_ij ~ Bernoulli(X_i^T X_j)` independently for `i < j`.
pub fn sample_adjacency<T: Scalar>(x: &LatentPositions<T>, seed: u64) -> Result<AdjacencyMatrix> {
    let n = x.n();
    let xm = x.matrix();
    let mut neighbors = vec![Vec::new(); n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        rng.set_stream(i as u64);
        rng.set_word_pos(0);
        let xi = xm.row(i);
        for j in (i + 1)..n {
            let p = checked_probability(xi.dot(&xm.row(j)), i, j)?;
            let u: f64 = rng.random();
            if u < p {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    // Row i receives its lower-triangular neighbours in increasing order, then
    // its upper ones, so every list is already sorted.
    Ok(AdjacencyMatrix { neighbors })
}

/// Edges between an out-of-sample vertex and the `n` in-sample vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosConnectivity {
    /// `a_i` in `{0, 1}`.
    pub a: Vec<u8>,
    /// True latent position, when known.
    #[serde(default)]
    pub w_bar: Option<Vec<f64>>,
}

impl OosConnectivity {
    pub fn new(a: Vec<u8>) -> Result<Self> {
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::ShapeMismatch(format!(
                "connectivity entry {i} is {}, expected 0 or 1",
                a[i]
            )));
        }
        Ok(Self { a, w_bar: None })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.a.iter().map(|&v| v as usize).sum()
    }

    pub fn as_vector<T: Scalar>(&self) -> DVector<T> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|&v| T::lit(v as f64)))
    }
}

/// Draw `a_i ~ Bernoulli(X_i^T w_bar)` independently.
pub fn sample_oos<T: Scalar>(
    x: &LatentPositions<T>,
    w_bar: &DVector<T>,
    seed: u64,
) -> Result<OosConnectivity> {
    if w_bar.len() != x.dim() {
        return Err(Error::ShapeMismatch(format!(
            "w_bar has length {}, latent positions have dimension {}",
            w_bar.len(),
            x.dim()
        )));
    }
    let probs = x.matrix() * w_bar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(x.n());
    for (i, &p) in probs.iter().enumerate() {
        let p = checked_probability(p, i, x.n())?;
        let u: f64 = rng.random();
        a.push(u8::from(u < p));
    }
    Ok(OosConnectivity {
        a,
        w_bar: Some(w_bar.iter().map(|v| v.as_f64()).collect()),
    })
}

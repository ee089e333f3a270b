//! Closed-form limiting quantities for the out-of-sample estimators.
//!
//! Expectations over the latent-position distribution are exact weighted
//! sums over its atoms. The second half of the module treats the scalar
//! two-point mixture `λ δ_p + (1 - λ) δ_q`, where the limiting normals give
//! a likelihood-ratio classifier whose error can be compared between an
//! out-of-sample estimate and a full in-sample embedding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::InnerProductDistribution;

const PROBABILITY_SLACK: f64 = 1e-12;
const RANK_TOL: f64 = 1e-12;
const BISECTION_TOL: f64 = 1e-12;

/// Moments of the latent-position distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSummary {
    /// `E X`.
    pub mu: DVector<f64>,
    /// `E X X^T`.
    pub delta: DMatrix<f64>,
    /// `E [X X^T / (mu^T X)]`.
    pub delta_tilde: DMatrix<f64>,
}

fn mean(dist: &InnerProductDistribution<f64>) -> DVector<f64> {
    dist.atoms()
        .iter()
        .zip(dist.weights())
        .fold(DVector::zeros(dist.dim()), |acc, (x, &w)| acc + x * w)
}

fn second_moment(dist: &InnerProductDistribution<f64>) -> DMatrix<f64> {
    dist.atoms()
        .iter()
        .zip(dist.weights())
        .fold(DMatrix::zeros(dist.dim(), dist.dim()), |acc, (x, &w)| {
            acc + x * x.transpose() * w
        })
}

fn full_rank_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if !(min > RANK_TOL * max.max(1e-300)) {
        return Err(Error::FullRankViolation(min));
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::FullRankViolation(min))
}

fn check_probability(value: f64, atom: usize) -> Result<f64> {
    if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&value) {
        return Err(Error::ProbabilityOutOfRange {
            row: atom,
            col: atom,
            value,
        });
    }
    Ok(value.clamp(0.0, 1.0))
}

fn check_dim(dist: &InnerProductDistribution<f64>, w: &DVector<f64>) -> Result<()> {
    if w.len() != dist.dim() {
        return Err(Error::ShapeMismatch(format!(
            "vector has length {}, distribution has dimension {}",
            w.len(),
            dist.dim()
        )));
    }
    Ok(())
}

pub fn moments(dist: &InnerProductDistribution<f64>) -> Result<PopulationSummary> {
    let mu = mean(dist);
    let mut delta_tilde = DMatrix::zeros(dist.dim(), dist.dim());
    for (x, &w) in dist.atoms().iter().zip(dist.weights()) {
        let m = mu.dot(x);
        if !(m > 0.0) {
            return Err(Error::NonpositiveMeanInnerProduct { value: m });
        }
        delta_tilde += x * x.transpose() * (w / m);
    }
    Ok(PopulationSummary {
        delta: second_moment(dist),
        mu,
        delta_tilde,
    })
}

/// Limiting covariance of `sqrt(n) (Q w_LS - w)` for the least-squares ASE
/// extension: `Δ^{-1} E[X^T w (1 - X^T w) X X^T] Δ^{-1}`.
pub fn sigma_ase(dist: &InnerProductDistribution<f64>, w: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim(dist, w)?;
    let delta_inv = full_rank_inverse(&second_moment(dist))?;
    let mut middle = DMatrix::zeros(dist.dim(), dist.dim());
    for (k, (x, &weight)) in dist.atoms().iter().zip(dist.weights()).enumerate() {
        let p = check_probability(x.dot(w), k)?;
        middle += x * x.transpose() * (weight * p * (1.0 - p));
    }
    let s = &delta_inv * middle * &delta_inv;
    Ok((&s + s.transpose()) * 0.5)
}

/// Limiting covariance of `n (Q w_LSE - w_tilde)` for the least-squares LSE
/// extension.
pub fn sigma_lse(dist: &InnerProductDistribution<f64>, w_bar: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim(dist, w_bar)?;
    let eta = dist.eta_margin();
    if !(eta > 0.0) {
        return Err(Error::EtaViolation(eta));
    }
    let summary = moments(dist)?;
    let dt_inv = full_rank_inverse(&summary.delta_tilde)?;
    let mu_w = summary.mu.dot(w_bar);
    if !(mu_w > 0.0) {
        return Err(Error::NonpositiveMeanInnerProduct { value: mu_w });
    }
    let shift = w_bar / (2.0 * mu_w);
    let mut s = DMatrix::zeros(dist.dim(), dist.dim());
    for (k, (x, &weight)) in dist.atoms().iter().zip(dist.weights()).enumerate() {
        let p = check_probability(x.dot(w_bar), k)?;
        let v = &dt_inv * x / x.dot(&summary.mu) - &shift;
        s += &v * v.transpose() * (weight * p * (1.0 - p) / mu_w);
    }
    Ok((&s + s.transpose()) * 0.5)
}

/// Population Laplacian embedding of an out-of-sample vertex,
/// `w_bar / sqrt(n mu^T w_bar)`.
pub fn lse_target(
    dist: &InnerProductDistribution<f64>,
    w_bar: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    check_dim(dist, w_bar)?;
    let mu_w = mean(dist).dot(w_bar);
    if !(mu_w > 0.0) {
        return Err(Error::NonpositiveMeanInnerProduct { value: mu_w });
    }
    Ok(w_bar / (n as f64 * mu_w).sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Scalar two-point mixture `λ δ_p + (1 - λ) δ_q` with `0 < p < q < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarMixture {
    lambda: f64,
    p: f64,
    q: f64,
}

impl ScalarMixture {
    pub fn new(lambda: f64, p: f64, q: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "mixing weight {lambda} outside (0, 1)"
            )));
        }
        if !(0.0 < p && p < q && q < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "need 0 < p < q < 1, got p = {p}, q = {q}"
            )));
        }
        Ok(Self { lambda, p, q })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// The mixture as a one-dimensional inner product distribution.
    pub fn as_distribution(&self) -> InnerProductDistribution<f64> {
        InnerProductDistribution::from_rows(&[&[self.p], &[self.q]], &[self.lambda, 1.0 - self.lambda])
            .expect("p, q in (0, 1) give valid inner products")
    }

    /// Limiting normals of the least-squares extension at each atom.
    pub fn normal_pair(&self) -> NormalPair {
        let v = scalar_mixture_variances(self);
        NormalPair {
            lambda: self.lambda,
            p: self.p,
            q: self.q,
            sigma_p: v.sigma2_p.sqrt(),
            sigma_q: v.sigma2_q.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureVariances {
    pub sigma2_p: f64,
    pub sigma2_q: f64,
    pub delta: f64,
}

fn mixture_variances(lambda: f64, p: f64, q: f64) -> MixtureVariances {
    let delta = lambda * p * p + (1.0 - lambda) * q * q;
    let pq = p * q;
    let sigma2_p =
        (lambda * p * p * (1.0 - p * p) * p * p + (1.0 - lambda) * pq * (1.0 - pq) * q * q)
            / (delta * delta);
    let sigma2_q =
        (lambda * pq * (1.0 - pq) * p * p + (1.0 - lambda) * q * q * (1.0 - q * q) * q * q)
            / (delta * delta);
    MixtureVariances {
        sigma2_p,
        sigma2_q,
        delta,
    }
}

pub fn scalar_mixture_variances(mix: &ScalarMixture) -> MixtureVariances {
    mixture_variances(mix.lambda, mix.p, mix.q)
}

/// Two-class model: with prior `lambda` an observation is
/// `N(p, sigma_p^2 / n)`, otherwise `N(q, sigma_q^2 / n)`, with `p < q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPair {
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    pub sigma_p: f64,
    pub sigma_q: f64,
}

impl NormalPair {
    /// Log ratio of the weighted class densities at `x`.
    fn log_ratio(&self, n: f64, x: f64) -> f64 {
        let zp = (x - self.p) / self.sigma_p;
        let zq = (x - self.q) / self.sigma_q;
        self.lambda.ln() - self.sigma_p.ln() - 0.5 * n * zp * zp - (1.0 - self.lambda).ln()
            + self.sigma_q.ln()
            + 0.5 * n * zq * zq
    }

    /// Point where the two weighted densities cross.
    ///
    /// Searches `[p - 1, q + 1]`. The log ratio is quadratic in `x`, so the
    /// bracket is split at its vertex into monotone pieces; among the roots
    /// found the one nearest `(p + q) / 2` is returned.
    pub fn threshold(&self, n: usize) -> Result<f64> {
        if self.p == self.q {
            return Err(Error::InvalidDistribution("threshold needs p != q".into()));
        }
        let n = n as f64;
        let (lo, hi) = (self.p.min(self.q) - 1.0, self.p.max(self.q) + 1.0);
        let g = |x: f64| self.log_ratio(n, x);

        let a = 1.0 / (self.sigma_q * self.sigma_q) - 1.0 / (self.sigma_p * self.sigma_p);
        let mut cuts = vec![lo];
        if a != 0.0 {
            let vertex =
                (self.q / (self.sigma_q * self.sigma_q) - self.p / (self.sigma_p * self.sigma_p)) / a;
            if vertex > lo && vertex < hi {
                cuts.push(vertex);
            }
        }
        cuts.push(hi);

        let mid = 0.5 * (self.p + self.q);
        let root = cuts
            .windows(2)
            .filter_map(|w| bisect(&g, w[0], w[1]))
            .min_by(|a, b| (a - mid).abs().partial_cmp(&(b - mid).abs()).unwrap());
        root.ok_or(Error::NoRootInBracket { lo, hi })
    }

    /// Error of the rule "class p iff x < threshold" at sample size `n`.
    pub fn error(&self, n: usize) -> Result<f64> {
        let x = self.threshold(n)?;
        let rn = (n as f64).sqrt();
        Ok(self.lambda * (1.0 - normal_cdf(rn * (x - self.p) / self.sigma_p))
            + (1.0 - self.lambda) * normal_cdf(rn * (x - self.q) / self.sigma_q))
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (mut glo, ghi) = (g(lo), g(hi));
    if glo == 0.0 {
        return Some(lo);
    }
    if ghi == 0.0 {
        return Some(hi);
    }
    if glo.signum() == ghi.signum() {
        return None;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Some(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Likelihood-ratio threshold between the two limiting normals at size `n`.
pub fn lr_threshold(n: usize, mix: &ScalarMixture) -> Result<f64> {
    mix.normal_pair().threshold(n)
}

/// Approximate error of classifying one vertex from an estimate whose
/// limiting normals have variance `sigma^2 / n`.
pub fn classification_error(n: usize, mix: &ScalarMixture) -> Result<f64> {
    mix.normal_pair().error(n)
}

/// Error of a full in-sample embedding of `n + m` vertices divided by the
/// out-of-sample error with `n` in-sample vertices.
pub fn tradeoff_ratio(n: usize, m: usize, mix: &ScalarMixture) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("tradeoff needs n >= 1 and m >= 1".into()));
    }
    let pair = mix.normal_pair();
    Ok(pair.error(n + m)? / pair.error(n + 1)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    pub eta_in: f64,
    pub eta_oos: f64,
    pub ratio: f64,
}

pub fn tradeoff_sweep(ns: &[usize], ms: &[usize], mix: &ScalarMixture) -> Result<Vec<TradeoffRow>> {
    let pair = mix.normal_pair();
    let mut rows = Vec::with_capacity(ns.len() * ms.len());
    for &n in ns {
        if n == 0 {
            return Err(Error::InvalidConfig("tradeoff needs n >= 1".into()));
        }
        let eta_oos = pair.error(n + 1)?;
        for &m in ms {
            if m == 0 {
                return Err(Error::InvalidConfig("tradeoff needs m >= 1".into()));
            }
            let eta_in = pair.error(n + m)?;
            rows.push(TradeoffRow {
                n,
                m,
                lambda: mix.lambda,
                p: mix.p,
                q: mix.q,
                eta_in,
                eta_oos,
                ratio: eta_in / eta_oos,
            });
        }
    }
    Ok(rows)
}

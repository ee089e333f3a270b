//! Out-of-sample extensions: embed a new vertex from its edge vector and an
//! existing embedding, without recomputing any eigendecomposition.
//!
//! * [`oos_ase_lls`] regresses the edge vector on the ASE positions.
//! * [`oos_ase_ml`] maximises the plug-in Bernoulli likelihood over the
//!   polytope `{w : eps <= X_i^T w <= 1 - eps}`.
//! * [`oos_lse_lls`] regresses the degree-normalised edge vector on the LSE
//!   positions.
//!
//! Because embedding columns are orthogonal with squared norms equal to the
//! eigenvalues, both least-squares solutions reduce to `S^{-1} X^T y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OosConnectivity;
use crate::scalar::Scalar;
use crate::spectral::{Embedding, EmbeddingKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OosMethod {
    #[serde(rename = "lls-ase")]
    LlsAse,
    #[serde(rename = "ml-ase")]
    MlAse,
    #[serde(rename = "lls-lse")]
    LlsLse,
}

impl OosMethod {
    pub const ALL: [OosMethod; 3] = [OosMethod::LlsAse, OosMethod::MlAse, OosMethod::LlsLse];

    pub fn name(self) -> &'static str {
        match self {
            OosMethod::LlsAse => "lls-ase",
            OosMethod::MlAse => "ml-ase",
            OosMethod::LlsLse => "lls-lse",
        }
    }

    /// Embedding the method extends.
    pub fn embedding_kind(self) -> EmbeddingKind {
        match self {
            OosMethod::LlsAse | OosMethod::MlAse => EmbeddingKind::Ase,
            OosMethod::LlsLse => EmbeddingKind::Lse,
        }
    }
}

impl std::fmt::Display for OosMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OosMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        OosMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}; expected lls-ase, ml-ase or lls-lse"))
    }
}

/// Solver bookkeeping; all zero for the closed-form methods.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub final_projected_gradient_norm: f64,
    pub active_constraints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OosEstimate<T: Scalar> {
    pub w: DVector<T>,
    pub method: OosMethod,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlSolverOptions {
    /// Half-width of the excluded band at each end of `[0, 1]`.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once `||P(w + grad) - w|| <= gradient_tolerance`.
    pub gradient_tolerance: f64,
    /// Backtracking step multiplier.
    pub shrink: f64,
    /// Armijo constant.
    pub sufficient_decrease: f64,
}

impl Default for MlSolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iterations: 5000,
            gradient_tolerance: 1e-8,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

impl MlSolverOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.epsilon < 0.5
            && self.gradient_tolerance > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.sufficient_decrease > 0.0
            && self.sufficient_decrease < 1.0
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad solver options {self:?}")))
        }
    }
}

fn require_kind<T: Scalar>(emb: &Embedding<T>, method: OosMethod) -> Result<()> {
    let expected = method.embedding_kind();
    if emb.kind() != expected {
        return Err(Error::MethodMismatch {
            method: method.name().into(),
            expected: expected.to_string(),
            found: emb.kind().to_string(),
        });
    }
    Ok(())
}

fn require_len<T: Scalar>(emb: &Embedding<T>, a: &OosConnectivity) -> Result<()> {
    if a.len() != emb.n() {
        return Err(Error::ShapeMismatch(format!(
            "connectivity has {} entries, embedding has {} vertices",
            a.len(),
            emb.n()
        )));
    }
    Ok(())
}

/// `S^{-1} X^T y`, the least-squares fit of `y` on the embedding positions.
fn least_squares<T: Scalar>(emb: &Embedding<T>, y: &DVector<T>) -> Result<DVector<T>> {
    let vals = emb.eigenvalues();
    if vals.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let mut w = emb.positions().tr_mul(y);
    w.component_div_assign(vals);
    Ok(w)
}

pub fn oos_ase_lls<T: Scalar>(emb: &Embedding<T>, a: &OosConnectivity) -> Result<OosEstimate<T>> {
    require_kind(emb, OosMethod::LlsAse)?;
    require_len(emb, a)?;
    Ok(OosEstimate {
        w: least_squares(emb, &a.as_vector())?,
        method: OosMethod::LlsAse,
        diagnostics: SolverDiagnostics::default(),
    })
}

pub fn oos_lse_lls<T: Scalar>(emb: &Embedding<T>, a: &OosConnectivity) -> Result<OosEstimate<T>> {
    require_kind(emb, OosMethod::LlsLse)?;
    require_len(emb, a)?;
    let degrees = emb.degrees().ok_or_else(|| {
        Error::InconsistentEmbedding("Laplacian embedding without degree vector".into())
    })?;
    let d_v = a.degree();
    if d_v == 0 {
        return Err(Error::IsolatedOosVertex);
    }
    let d_v = T::lit(d_v as f64);
    let mut b = DVector::zeros(a.len());
    for (i, &ai) in a.a.iter().enumerate() {
        if ai == 1 {
            let d_i = degrees[i];
            if !(d_i > T::zero()) {
                return Err(Error::ZeroDegreeNeighbor(i));
            }
            b[i] = T::one() / (d_v * d_i).sqrt();
        }
    }
    Ok(OosEstimate {
        w: least_squares(emb, &b)?,
        method: OosMethod::LlsLse,
        diagnostics: SolverDiagnostics::default(),
    })
}

/// Value, gradient and Hessian of the plug-in log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood<T: Scalar> {
    pub value: T,
    pub gradient: DVector<T>,
    pub hessian: DMatrix<T>,
}

fn probabilities<T: Scalar>(x: &DMatrix<T>, w: &DVector<T>) -> Result<DVector<T>> {
    let p = x * w;
    if let Some((i, v)) = p
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > T::zero() && **v < T::one()))
    {
        return Err(Error::DomainViolation {
            index: i,
            value: v.as_f64(),
        });
    }
    Ok(p)
}

fn loglik_value<T: Scalar>(p: &DVector<T>, a: &[u8]) -> T {
    p.iter().zip(a).fold(T::zero(), |acc, (&pi, &ai)| {
        acc + if ai == 1 { pi.ln() } else { (T::one() - pi).ln() }
    })
}

fn loglik_gradient<T: Scalar>(x: &DMatrix<T>, p: &DVector<T>, a: &[u8]) -> DVector<T> {
    let weights = DVector::from_iterator(
        p.len(),
        p.iter().zip(a).map(|(&pi, &ai)| {
            let ai = if ai == 1 { T::one() } else { T::zero() };
            (ai - pi) / (pi * (T::one() - pi))
        }),
    );
    x.tr_mul(&weights)
}

pub fn loglik<T: Scalar>(
    emb: &Embedding<T>,
    a: &OosConnectivity,
    w: &DVector<T>,
) -> Result<LogLikelihood<T>> {
    require_kind(emb, OosMethod::MlAse)?;
    require_len(emb, a)?;
    let x = emb.positions();
    if w.len() != x.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "w has length {}, embedding dimension is {}",
            w.len(),
            x.ncols()
        )));
    }
    let p = probabilities(x, w)?;
    let curvature = DVector::from_iterator(
        p.len(),
        p.iter().zip(&a.a).map(|(&pi, &ai)| {
            if ai == 1 {
                T::one() / (pi * pi)
            } else {
                T::one() / ((T::one() - pi) * (T::one() - pi))
            }
        }),
    );
    let mut weighted = x.clone();
    for (i, c) in curvature.iter().enumerate() {
        weighted.row_mut(i).scale_mut(*c);
    }
    Ok(LogLikelihood {
        value: loglik_value(&p, &a.a),
        gradient: loglik_gradient(x, &p, &a.a),
        hessian: -(x.tr_mul(&weighted)),
    })
}

/// The slab polytope `{w : lo <= x_i^T w <= hi}` written as `2n` half-spaces
/// `c_k^T w <= b_k`: index `i < n` is the lower bound of row `i`, index
/// `n + i` its upper bound.
struct Slabs<'a, T: Scalar> {
    x: &'a DMatrix<T>,
    lo: T,
    hi: T,
}

impl<'a, T: Scalar> Slabs<'a, T> {
    fn n(&self) -> usize {
        self.x.nrows()
    }

    fn normal(&self, k: usize) -> DVector<T> {
        let n = self.n();
        if k < n {
            -self.x.row(k).transpose()
        } else {
            self.x.row(k - n).transpose()
        }
    }

    /// `b_k - c_k^T w` for every constraint, given `x w`.
    fn slack_from_products(&self, xw: &DVector<T>, k: usize) -> T {
        let n = self.n();
        if k < n {
            xw[k] - self.lo
        } else {
            self.hi - xw[k - n]
        }
    }

    fn max_violation(&self, w: &DVector<T>) -> T {
        let xw = self.x * w;
        xw.iter().fold(T::zero(), |m, &v| m.max(self.lo - v).max(v - self.hi))
    }

    fn active_count(&self, w: &DVector<T>, tol: T) -> usize {
        let xw = self.x * w;
        xw.iter()
            .filter(|&&v| (v - self.lo).abs() <= tol || (self.hi - v).abs() <= tol)
            .count()
    }

    /// Largest `theta` in `[0, 1]` with `from + theta * dir` feasible, and the
    /// constraint that stops it.
    fn ratio_test(
        &self,
        xw: &DVector<T>,
        xd: &DVector<T>,
        skip: &[usize],
    ) -> (T, Option<usize>) {
        let n = self.n();
        let mut theta = T::one();
        let mut blocking = None;
        for k in 0..2 * n {
            if skip.contains(&k) {
                continue;
            }
            // Rate at which c_k^T w grows along the direction.
            let rate = if k < n { -xd[k] } else { xd[k - n] };
            if rate > T::zero() {
                let slack = self.slack_from_products(xw, k).max(T::zero());
                let t = slack / rate;
                if t < theta {
                    theta = t;
                    blocking = Some(k);
                }
            }
        }
        (theta, blocking)
    }

    /// Euclidean projection of `target` onto the polytope by a primal
    /// active-set method started from the feasible point `start`.
    fn project(&self, target: &DVector<T>, start: &DVector<T>) -> DVector<T> {
        let d = self.x.ncols();
        let mut z = start.clone();
        let mut working: Vec<usize> = Vec::new();
        let tiny = T::tol(1e-14) * (T::one() + target.norm());
        for _ in 0..(10 * (d + 2) + 2 * self.n()) {
            let r = target - &z;
            let (step, multipliers) = if working.is_empty() {
                (r.clone(), Vec::new())
            } else {
                let c = DMatrix::from_columns(
                    &working.iter().map(|&k| self.normal(k)).collect::<Vec<_>>(),
                );
                let gram = c.tr_mul(&c);
                let Some(chol) = gram.cholesky() else {
                    // Dependent working set; drop the newest constraint.
                    working.pop();
                    continue;
                };
                let lambda = chol.solve(&c.tr_mul(&r));
                (&r - &c * &lambda, lambda.iter().copied().collect())
            };
            if step.norm() <= tiny {
                let worst = multipliers
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap());
                match worst {
                    Some((idx, &m)) if m < -tiny => {
                        working.remove(idx);
                        continue;
                    }
                    _ => return z,
                }
            }
            let xw = self.x * &z;
            let xd = self.x * &step;
            let (theta, blocking) = self.ratio_test(&xw, &xd, &working);
            z.axpy(theta, &step, T::one());
            match blocking {
                Some(k) if working.len() < d => working.push(k),
                Some(_) => {}
                None => {
                    if working.is_empty() {
                        return z;
                    }
                }
            }
        }
        z
    }
}

/// Feasible starting point: the least-squares solution, pulled back along the
/// segment toward a strictly feasible multiple of the mean embedded position
/// if it leaves the polytope.
pub fn ml_initializer<T: Scalar>(
    emb: &Embedding<T>,
    a: &OosConnectivity,
    epsilon: f64,
) -> Result<DVector<T>> {
    let lls = oos_ase_lls(emb, a)?.w;
    let x = emb.positions();
    let eps = T::lit(epsilon);
    let slabs = Slabs {
        x,
        lo: eps,
        hi: T::one() - eps,
    };
    if slabs.max_violation(&lls) <= T::zero() {
        return Ok(lls);
    }

    let mean = x.row_mean().transpose();
    let c = x * &mean;
    let infeasible = || Error::InfeasibleConstraintSet { epsilon };
    let (mut lo, mut hi) = (T::lit(f64::NEG_INFINITY), T::lit(f64::INFINITY));
    for &ci in c.iter() {
        if ci > T::zero() {
            lo = lo.max(eps / ci);
            hi = hi.min((T::one() - eps) / ci);
        } else if ci < T::zero() {
            lo = lo.max((T::one() - eps) / ci);
            hi = hi.min(eps / ci);
        } else {
            return Err(infeasible());
        }
    }
    if !(lo < hi) {
        return Err(infeasible());
    }
    let anchor = mean * ((lo + hi) * T::lit(0.5));
    let dir = &lls - &anchor;
    let (theta, _) = slabs.ratio_test(&(x * &anchor), &(x * &dir), &[]);
    Ok(anchor + dir * theta)
}

/// Maximum-likelihood extension over the slab polytope.
pub fn oos_ase_ml<T: Scalar>(
    emb: &Embedding<T>,
    a: &OosConnectivity,
    opts: &MlSolverOptions,
) -> Result<OosEstimate<T>> {
    require_kind(emb, OosMethod::MlAse)?;
    require_len(emb, a)?;
    opts.validate()?;
    let x = emb.positions();
    let eps = T::lit(opts.epsilon);
    let slabs = Slabs {
        x,
        lo: eps,
        hi: T::one() - eps,
    };
    let shrink = T::lit(opts.shrink);
    let armijo = T::lit(opts.sufficient_decrease);

    let mut w = ml_initializer(emb, a, opts.epsilon)?;
    let mut p = probabilities(x, &w)?;
    let mut value = loglik_value(&p, &a.a);
    let mut grad = loglik_gradient(x, &p, &a.a);
    let tol = T::lit(opts.gradient_tolerance)
        .max(T::lit(1e2 * T::EPSILON_F64) * grad.norm().max(T::one()));

    let mut step = T::one() / grad.amax().max(T::one());
    let mut pg_norm = (slabs.project(&(&w + &grad), &w) - &w).norm();
    let mut iterations = 0;
    while pg_norm > tol {
        if iterations >= opts.max_iterations {
            return Err(Error::MaxIterationsExceeded {
                iterations,
                projected_gradient_norm: pg_norm.as_f64(),
                best_w: w.iter().map(|v| v.as_f64()).collect(),
            });
        }
        iterations += 1;

        let mut s = step;
        let accepted = loop {
            let cand = slabs.project(&(&w + &grad * s), &w);
            let delta = &cand - &w;
            if delta.norm() <= T::default_epsilon() * (T::one() + w.norm()) {
                break None;
            }
            if let Ok(cp) = probabilities(x, &cand) {
                let cv = loglik_value(&cp, &a.a);
                let ascent = grad.dot(&delta);
                if cv >= value + armijo * ascent {
                    break Some((cand, cp, cv));
                }
                // Near the optimum the change in value drowns in rounding;
                // judge the step by the trapezoid estimate of the ascent.
                if (cv - value).abs() <= T::tol(1e-12) * (T::one() + value.abs()) {
                    let cg = loglik_gradient(x, &cp, &a.a);
                    if (ascent + cg.dot(&delta)) * T::lit(0.5) >= armijo * ascent {
                        break Some((cand, cp, cv));
                    }
                }
            }
            s *= shrink;
        };
        let Some((cand, cp, cv)) = accepted else {
            // No representable ascent step remains.
            return Err(Error::MaxIterationsExceeded {
                iterations,
                projected_gradient_norm: pg_norm.as_f64(),
                best_w: w.iter().map(|v| v.as_f64()).collect(),
            });
        };
        let new_grad = loglik_gradient(x, &cp, &a.a);
        // Barzilai-Borwein guess for the next trial step.
        let sw = &cand - &w;
        let sg = &new_grad - &grad;
        let curv = -sw.dot(&sg);
        step = if curv > T::zero() {
            (sw.norm_squared() / curv).min(T::lit(1e12))
        } else {
            s / shrink
        };
        w = cand;
        p = cp;
        value = cv;
        grad = new_grad;
        pg_norm = (slabs.project(&(&w + &grad), &w) - &w).norm();
    }
    let _ = p;
    Ok(OosEstimate {
        diagnostics: SolverDiagnostics {
            iterations,
            final_projected_gradient_norm: pg_norm.as_f64(),
            active_constraints: slabs.active_count(&w, T::tol(1e-9)),
        },
        w,
        method: OosMethod::MlAse,
    })
}

/// Run one extension method. `opts` is only used by [`OosMethod::MlAse`].
pub fn extend<T: Scalar>(
    method: OosMethod,
    emb: &Embedding<T>,
    a: &OosConnectivity,
    opts: &MlSolverOptions,
) -> Result<OosEstimate<T>> {
    match method {
        OosMethod::LlsAse => oos_ase_lls(emb, a),
        OosMethod::MlAse => oos_ase_ml(emb, a, opts),
        OosMethod::LlsLse => oos_lse_lls(emb, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn column_embedding(values: &[f64]) -> Embedding<f64> {
        let pos = DMatrix::from_column_slice(values.len(), 1, values);
        let ev = DVector::from_element(1, values.iter().map(|v| v * v).sum());
        Embedding::from_parts(EmbeddingKind::Ase, pos, ev, None).unwrap()
    }

    fn connectivity(ones: usize, n: usize) -> OosConnectivity {
        OosConnectivity::new((0..n).map(|i| u8::from(i < ones)).collect()).unwrap()
    }

    #[test]
    fn lls_identity_design() {
        let emb = Embedding::from_parts(
            EmbeddingKind::Ase,
            DMatrix::<f64>::identity(3, 3),
            DVector::from_element(3, 1.0),
            None,
        )
        .unwrap();
        let w = oos_ase_lls(&emb, &connectivity(1, 3)).unwrap().w;
        assert_eq!(w, DVector::from_vec(vec![1.0, 0.0, 0.0]));
    }

    #[test]
    fn lls_mean_of_responses() {
        let w = oos_ase_lls(&column_embedding(&[1.0, 1.0]), &connectivity(1, 2)).unwrap().w;
        assert_relative_eq!(w[0], 0.5);
    }

    #[test]
    fn method_mismatch_and_shape() {
        let emb = column_embedding(&[1.0, 1.0]);
        assert!(matches!(
            oos_lse_lls(&emb, &connectivity(1, 2)),
            Err(Error::MethodMismatch { .. })
        ));
        assert!(matches!(
            oos_ase_lls(&emb, &connectivity(1, 3)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn toy_stationary_point() {
        let emb = column_embedding(&[0.5; 10]);
        let a = connectivity(4, 10);
        let ll = loglik(&emb, &a, &DVector::from_element(1, 0.8)).unwrap();
        assert!(ll.gradient[0].abs() < 1e-12);
        assert!(ll.hessian[(0, 0)] < 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let emb = column_embedding(&[0.3, 0.5, 0.7, 0.4, 0.6]);
        let a = OosConnectivity::new(vec![1, 0, 1, 1, 0]).unwrap();
        for &w0 in &[0.4, 0.9, 1.2] {
            let w = DVector::from_element(1, w0);
            let ll = loglik(&emb, &a, &w).unwrap();
            let h = 1e-6;
            let f = |v: f64| loglik(&emb, &a, &DVector::from_element(1, v)).unwrap().value;
            let fd = (f(w0 + h) - f(w0 - h)) / (2.0 * h);
            assert_relative_eq!(ll.gradient[0], fd, max_relative = 1e-4);
            let fd2 = (ll_grad(&emb, &a, w0 + h) - ll_grad(&emb, &a, w0 - h)) / (2.0 * h);
            assert_relative_eq!(ll.hessian[(0, 0)], fd2, max_relative = 1e-4);
        }
    }

    fn ll_grad(emb: &Embedding<f64>, a: &OosConnectivity, v: f64) -> f64 {
        loglik(emb, a, &DVector::from_element(1, v)).unwrap().gradient[0]
    }

    #[test]
    fn boundary_is_a_domain_violation() {
        let emb = column_embedding(&[0.5; 4]);
        let a = connectivity(2, 4);
        for w in [0.0, 2.0] {
            assert!(matches!(
                loglik(&emb, &a, &DVector::from_element(1, w)),
                Err(Error::DomainViolation { index: 0, .. })
            ));
        }
    }

    #[test]
    fn ml_interior_optimum() {
        let emb = column_embedding(&[0.5; 10]);
        let est = oos_ase_ml(&emb, &connectivity(4, 10), &MlSolverOptions::default()).unwrap();
        assert!((est.w[0] - 0.8).abs() < 1e-6);
        assert_eq!(est.diagnostics.active_constraints, 0);
        assert!(est.diagnostics.final_projected_gradient_norm <= 1e-8);
    }

    #[test]
    fn ml_boundary_optimum() {
        let emb = column_embedding(&[0.5; 10]);
        let est = oos_ase_ml(&emb, &connectivity(0, 10), &MlSolverOptions::default()).unwrap();
        assert!((est.w[0] - 0.1).abs() < 1e-9);
        assert_eq!(est.diagnostics.active_constraints, 10);
    }

    #[test]
    fn ml_detects_infeasible_polytope() {
        // Rows 0.1 and 1.0 need 0.4 <= 0.1 w and 1.0 w <= 0.6: impossible.
        let emb = column_embedding(&[0.1, 1.0]);
        let opts = MlSolverOptions {
            epsilon: 0.4,
            ..Default::default()
        };
        assert!(matches!(
            oos_ase_ml(&emb, &connectivity(1, 2), &opts),
            Err(Error::InfeasibleConstraintSet { .. })
        ));
    }

    #[test]
    fn projection_onto_slabs_two_dimensional() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let slabs = Slabs {
            x: &x,
            lo: 0.1,
            hi: 0.9,
        };
        let start = DVector::from_vec(vec![0.3, 0.3]);
        // Far corner: x <= 0.9, y <= 0.9 but x + y <= 0.9 binds.
        let z = slabs.project(&DVector::from_vec(vec![2.0, 2.0]), &start);
        assert!((z - DVector::from_vec(vec![0.45, 0.45])).amax() < 1e-12);
        // Interior targets are returned unchanged.
        let inside = DVector::from_vec(vec![0.2, 0.25]);
        assert!((slabs.project(&inside, &start) - &inside).amax() < 1e-15);
        // Vertex: x >= 0.1 and x + y <= 0.9 meet at (0.1, 0.8).
        let z = slabs.project(&DVector::from_vec(vec![-1.0, 3.0]), &start);
        assert!((z - DVector::from_vec(vec![0.1, 0.8])).amax() < 1e-12);
    }

    #[test]
    fn lse_k4_case() {
        let emb = Embedding::from_parts(
            EmbeddingKind::Lse,
            DMatrix::from_element(4, 1, 0.5),
            DVector::from_element(1, 1.0),
            Some(vec![3.0; 4]),
        )
        .unwrap();
        let w = oos_lse_lls(&emb, &connectivity(4, 4)).unwrap().w;
        assert_relative_eq!(w[0], 1.0 / 3f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn lse_error_paths() {
        let emb = Embedding::from_parts(
            EmbeddingKind::Lse,
            DMatrix::from_element(4, 1, 0.5),
            DVector::from_element(1, 1.0),
            Some(vec![3.0, 3.0, 0.0, 3.0]),
        )
        .unwrap();
        assert!(matches!(oos_lse_lls(&emb, &connectivity(0, 4)), Err(Error::IsolatedOosVertex)));
        assert!(matches!(
            oos_lse_lls(&emb, &connectivity(3, 4)),
            Err(Error::ZeroDegreeNeighbor(2))
        ));
    }

    #[test]
    fn single_precision_paths() {
        let pos = DMatrix::<f32>::from_element(10, 1, 0.5);
        let emb = Embedding::from_parts(EmbeddingKind::Ase, pos, DVector::from_element(1, 2.5), None)
            .unwrap();
        let a = connectivity(4, 10);
        assert!((oos_ase_lls(&emb, &a).unwrap().w[0] - 0.8).abs() < 1e-6);
        let est = oos_ase_ml(&emb, &a, &MlSolverOptions::default()).unwrap();
        assert!((est.w[0] - 0.8).abs() < 1e-3);
    }

    #[test]
    fn method_names_round_trip() {
        for m in OosMethod::ALL {
            assert_eq!(m.name().parse::<OosMethod>().unwrap(), m);
        }
        assert!("ml".parse::<OosMethod>().is_err());
    }
}

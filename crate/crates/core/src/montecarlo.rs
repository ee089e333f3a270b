//! Seeded, parallel simulation experiments.
//!
//! Each trial samples a graph, embeds it, extends one or more out-of-sample
//! vertices with each requested method and aligns the result to the truth.
//! A trial depends only on its child seed, so the record list is the same for
//! any worker count.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::align::procrustes;
use crate::error::{Error, Result};
use crate::limit_theory::{lse_target, sigma_ase, sigma_lse};
use crate::model::{
    child_seed, sample_adjacency, sample_latent, sample_oos, InnerProductDistribution,
    LatentPositions,
};
use crate::oos::{extend, MlSolverOptions, OosMethod, SolverDiagnostics};
use crate::spectral::{ase, laplacian_positions, lse, Embedding, EmbeddingKind};

/// Environment variable that overrides the default worker count.
pub const WORKERS_ENV: &str = "RDPG_OOS_WORKERS";

/// How out-of-sample vertices are chosen in each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OosAtoms {
    /// One extra vertex whose atom is drawn from the mixture.
    #[default]
    Random,
    /// One extra vertex per atom, all attached to the same in-sample graph.
    EachAtom,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dist: InnerProductDistribution<f64>,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<OosMethod>,
    pub master_seed: u64,
    pub ml_options: MlSolverOptions,
    pub oos_atoms: OosAtoms,
}

impl ExperimentConfig {
    pub fn new(dist: InnerProductDistribution<f64>, n_values: Vec<usize>, trials: usize) -> Self {
        Self {
            dist,
            n_values,
            trials,
            methods: vec![OosMethod::LlsAse],
            master_seed: 0,
            ml_options: MlSolverOptions::default(),
            oos_atoms: OosAtoms::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.n_values.is_empty() {
            return Err(Error::InvalidConfig("n_values is empty".into()));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("n_values must be strictly ascending".into()));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < self.dist.dim()) {
            return Err(Error::InvalidConfig(format!(
                "n = {n} is smaller than the dimension {}",
                self.dist.dim()
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort_by_key(|m| m.name());
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::InvalidConfig("methods are repeated".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub n: usize,
    pub method: OosMethod,
    pub atom: usize,
    /// Aligned estimate; `None` when the trial failed for this method.
    pub estimate: Option<Vec<f64>>,
    /// `w_bar` for the adjacency methods, `w_tilde` for the Laplacian one.
    pub target: Vec<f64>,
    pub error: Option<f64>,
    pub diagnostics: Option<SolverDiagnostics>,
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.estimate.is_none()
    }

    fn key(&self) -> (usize, OosMethod, usize) {
        (self.n, self.method, self.atom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub n: usize,
    pub method: OosMethod,
    pub atom: usize,
    pub trials: usize,
    pub failures: usize,
    pub target: Vec<f64>,
    pub mean: Vec<f64>,
    /// Scale applied to `estimate - target`: `sqrt(n)` or `n`.
    pub scale: f64,
    pub empirical_covariance: Vec<Vec<f64>>,
    pub predicted_covariance: Option<Vec<Vec<f64>>>,
    pub relative_frobenius: Option<f64>,
    pub coverage: Option<Coverage>,
    pub median_error: f64,
    pub q90_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub master_seed: u64,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: ExperimentSummary,
}

/// Fractions of scaled deviations inside Mahalanobis balls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    /// Radius 1.
    pub coverage_1sigma: f64,
    /// Radius 2.
    pub coverage_2sigma: f64,
    /// Normal mass inside radius 1 and 2 in this dimension.
    pub expected_1sigma: f64,
    pub expected_2sigma: f64,
    /// Inside the ellipses holding 68% and 95% of the normal mass.
    pub coverage_68: f64,
    pub coverage_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub method: OosMethod,
    pub trials: usize,
    pub failures: usize,
    pub median_error: f64,
    pub q90_error: f64,
}

/// Worker count: explicit value, then the environment override, then the
/// machine's available parallelism.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    if let Some(w) = explicit {
        return if w == 0 {
            Err(Error::InvalidConfig("worker count must be positive".into()))
        } else {
            Ok(w)
        };
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(Error::InvalidConfig(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Scale that makes the deviation of `method` converge in law.
pub fn clt_scale(method: OosMethod, n: usize) -> f64 {
    match method.embedding_kind() {
        EmbeddingKind::Ase => (n as f64).sqrt(),
        EmbeddingKind::Lse => n as f64,
    }
}

fn trial_seed(master: u64, n: usize, trial: usize) -> u64 {
    child_seed(child_seed(master, n as u64), trial as u64)
}

struct Aligned {
    emb: Embedding<f64>,
    q: DMatrix<f64>,
}

fn embed_and_align(
    kind: EmbeddingKind,
    a: &crate::model::AdjacencyMatrix,
    x: &LatentPositions<f64>,
) -> Result<Aligned> {
    let d = x.dim();
    let (emb, truth) = match kind {
        EmbeddingKind::Ase => (ase::<f64>(a, d)?, x.matrix().clone()),
        EmbeddingKind::Lse => (lse::<f64>(a, d)?, laplacian_positions(x)?),
    };
    let q = procrustes(emb.positions(), &truth)?.q;
    Ok(Aligned { emb, q })
}

fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> Vec<TrialRecord> {
    let seed = trial_seed(cfg.master_seed, n, trial);
    let dist = &cfg.dist;
    let d = dist.dim();

    // In-sample positions plus the out-of-sample truths with their atoms.
    let (x, oos_truths): (LatentPositions<f64>, Vec<(usize, DVector<f64>)>) = match cfg.oos_atoms {
        OosAtoms::Random => {
            let all = sample_latent(dist, n + 1, child_seed(seed, 0));
            let labels = all.atom_labels().expect("sampled positions carry labels");
            let atom = labels[n];
            let x = LatentPositions::new(all.matrix().rows(0, n).into_owned())
                .expect("rows of a valid sample");
            (x, vec![(atom, dist.atom(atom).clone())])
        }
        OosAtoms::EachAtom => {
            let x = sample_latent(dist, n, child_seed(seed, 0));
            (x, (0..dist.len()).map(|k| (k, dist.atom(k).clone())).collect())
        }
    };

    let mut records = Vec::with_capacity(cfg.methods.len() * oos_truths.len());
    let fail = |method: OosMethod, atom: usize, target: Vec<f64>, e: &Error| TrialRecord {
        trial,
        n,
        method,
        atom,
        estimate: None,
        target,
        error: None,
        diagnostics: None,
        failure: Some(e.to_string()),
    };

    let targets = |method: OosMethod, w_bar: &DVector<f64>| -> Vec<f64> {
        match method.embedding_kind() {
            EmbeddingKind::Ase => w_bar.iter().copied().collect(),
            EmbeddingKind::Lse => lse_target(dist, w_bar, n)
                .map(|t| t.iter().copied().collect())
                .unwrap_or_else(|_| vec![f64::NAN; d]),
        }
    };

    let adjacency = sample_adjacency(&x, child_seed(seed, 1));
    let needs = |kind: EmbeddingKind| cfg.methods.iter().any(|m| m.embedding_kind() == kind);
    let embed = |kind: EmbeddingKind| -> Option<Result<Aligned>> {
        needs(kind).then(|| {
            adjacency
                .as_ref()
                .map_err(clone_error)
                .and_then(|a| embed_and_align(kind, a, &x))
        })
    };
    let ase_aligned = embed(EmbeddingKind::Ase);
    let lse_aligned = embed(EmbeddingKind::Lse);

    for (slot, (atom, w_bar)) in oos_truths.iter().enumerate() {
        let conn = sample_oos(&x, w_bar, child_seed(seed, 2 + slot as u64));
        for &method in &cfg.methods {
            let target = targets(method, w_bar);
            let aligned = match method.embedding_kind() {
                EmbeddingKind::Ase => ase_aligned.as_ref(),
                EmbeddingKind::Lse => lse_aligned.as_ref(),
            }
            .expect("embedding computed for every requested kind");
            let outcome = aligned.as_ref().map_err(clone_error).and_then(|al| {
                let c = conn.as_ref().map_err(clone_error)?;
                let est = extend(method, &al.emb, c, &cfg.ml_options)?;
                Ok((al.q.tr_mul(&est.w), est.diagnostics))
            });
            records.push(match outcome {
                Ok((w, diagnostics)) => {
                    let estimate: Vec<f64> = w.iter().copied().collect();
                    let error = euclidean(&estimate, &target);
                    TrialRecord {
                        trial,
                        n,
                        method,
                        atom: *atom,
                        estimate: Some(estimate),
                        target,
                        error: Some(error),
                        diagnostics: Some(diagnostics),
                        failure: None,
                    }
                }
                Err(e) => fail(method, *atom, target, &e),
            });
        }
    }
    records
}

// Errors hold an io::Error in one variant and are not Clone; trial failures
// only need the message and the kind of failure.
fn clone_error(e: &Error) -> Error {
    Error::InvalidConfig(e.to_string())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn run_trials(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let jobs: Vec<(usize, usize)> = cfg
        .n_values
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();
    let per_trial: Vec<Vec<TrialRecord>> =
        pool.install(|| jobs.par_iter().map(|&(n, t)| run_trial(cfg, n, t)).collect());
    let mut records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.n, r.trial, OosMethod::ALL.iter().position(|m| *m == r.method), r.atom));
    Ok(records)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn predicted_covariance(
    dist: &InnerProductDistribution<f64>,
    method: OosMethod,
    atom: usize,
) -> Result<DMatrix<f64>> {
    match method.embedding_kind() {
        EmbeddingKind::Ase => sigma_ase(dist, dist.atom(atom)),
        EmbeddingKind::Lse => sigma_lse(dist, dist.atom(atom)),
    }
}

/// Group records by `(n, method, atom)` and summarise each group.
pub fn summarize(
    dist: &InnerProductDistribution<f64>,
    master_seed: u64,
    records: &[TrialRecord],
) -> Result<ExperimentSummary> {
    let mut keys: Vec<_> = records.iter().map(TrialRecord::key).collect();
    keys.sort_by_key(|&(n, m, a)| (n, OosMethod::ALL.iter().position(|x| *x == m), a));
    keys.dedup();
    let mut groups = Vec::with_capacity(keys.len());
    for key in keys {
        let group: Vec<TrialRecord> = records.iter().filter(|r| r.key() == key).cloned().collect();
        let (n, method, atom) = key;
        let ok: Vec<&TrialRecord> = group.iter().filter(|r| !r.failed()).collect();
        let d = group[0].target.len();
        let scale = clt_scale(method, n);
        let target = group[0].target.clone();

        let mut mean = vec![f64::NAN; d];
        if !ok.is_empty() {
            mean = (0..d)
                .map(|c| ok.iter().map(|r| r.estimate.as_ref().unwrap()[c]).sum::<f64>() / ok.len() as f64)
                .collect();
        }
        let empirical = empirical_covariance(&group, scale).ok();
        let predicted = predicted_covariance(dist, method, atom).ok();
        let relative_frobenius = match (&empirical, &predicted) {
            (Some(e), Some(p)) if p.norm() > 0.0 => Some((e - p).norm() / p.norm()),
            _ => None,
        };
        let coverage = predicted.as_ref().and_then(|p| {
            coverage_check(&group, p, &DVector::from_vec(target.clone()), scale).ok()
        });
        let mut errors: Vec<f64> = ok.iter().map(|r| r.error.unwrap()).collect();
        errors.sort_by(|a, b| a.total_cmp(b));
        groups.push(GroupSummary {
            n,
            method,
            atom,
            trials: group.len(),
            failures: group.len() - ok.len(),
            target,
            mean,
            scale,
            empirical_covariance: empirical
                .as_ref()
                .map(matrix_rows)
                .unwrap_or_else(|| vec![vec![f64::NAN; d]; d]),
            predicted_covariance: predicted.as_ref().map(matrix_rows),
            relative_frobenius,
            coverage,
            median_error: quantile(&errors, 0.5),
            q90_error: quantile(&errors, 0.9),
        });
    }
    Ok(ExperimentSummary {
        master_seed,
        groups,
    })
}

/// Linear-interpolation quantile of sorted data; NaN when empty.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = prob.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn run_clt_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let records = run_trials(cfg, workers)?;
    let summary = summarize(&cfg.dist, cfg.master_seed, &records)?;
    Ok(ExperimentOutput { records, summary })
}

/// Median and 90th-percentile aligned error per `(n, method)`.
pub fn run_rate_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<(Vec<TrialRecord>, Vec<RateRow>)> {
    if cfg.n_values.len() < 2 {
        return Err(Error::InsufficientGrid);
    }
    let records = run_trials(cfg, workers)?;
    let rows = rate_table(&records);
    Ok((records, rows))
}

pub fn rate_table(records: &[TrialRecord]) -> Vec<RateRow> {
    let mut keys: Vec<(usize, OosMethod)> = records.iter().map(|r| (r.n, r.method)).collect();
    keys.sort_by_key(|&(n, m)| (n, OosMethod::ALL.iter().position(|x| *x == m)));
    keys.dedup();
    keys.into_iter()
        .map(|(n, method)| {
            let group: Vec<&TrialRecord> =
                records.iter().filter(|r| r.n == n && r.method == method).collect();
            let mut errors: Vec<f64> = group.iter().filter_map(|r| r.error).collect();
            errors.sort_by(|a, b| a.total_cmp(b));
            RateRow {
                n,
                method,
                trials: group.len(),
                failures: group.len() - errors.len(),
                median_error: quantile(&errors, 0.5),
                q90_error: quantile(&errors, 0.9),
            }
        })
        .collect()
}

fn scaled_deviations<'a>(
    records: &'a [TrialRecord],
    scale: f64,
) -> Result<impl Iterator<Item = DVector<f64>> + 'a> {
    if let Some(first) = records.first() {
        if records.iter().any(|r| r.key() != first.key()) {
            return Err(Error::MixedRecordGroups);
        }
    }
    Ok(records.iter().filter_map(move |r| {
        r.estimate.as_ref().map(|e| {
            DVector::from_iterator(e.len(), e.iter().zip(&r.target).map(|(a, b)| scale * (a - b)))
        })
    }))
}

/// Sample covariance (denominator `k - 1`) of `scale * (estimate - target)`
/// over the successful records of one `(n, method, atom)` group.
pub fn empirical_covariance(records: &[TrialRecord], scale: f64) -> Result<DMatrix<f64>> {
    let devs: Vec<DVector<f64>> = scaled_deviations(records, scale)?.collect();
    if devs.len() < 2 {
        return Err(Error::InsufficientRecords(devs.len()));
    }
    let d = devs[0].len();
    let k = devs.len() as f64;
    let mean = devs.iter().fold(DVector::zeros(d), |acc, v| acc + v) / k;
    let mut cov = DMatrix::zeros(d, d);
    for v in &devs {
        let c = v - &mean;
        cov += &c * c.transpose();
    }
    cov /= k - 1.0;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Fractions of successful records whose scaled deviation from `center`
/// lies inside Mahalanobis radius 1 and 2 of `predicted`, and inside its
/// 68% and 95% mass ellipses.
pub fn coverage_check(
    records: &[TrialRecord],
    predicted: &DMatrix<f64>,
    center: &DVector<f64>,
    scale: f64,
) -> Result<Coverage> {
    let d = predicted.nrows();
    if center.len() != d || !predicted.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "covariance is {:?}, center has length {}",
            predicted.shape(),
            center.len()
        )));
    }
    let chol = nalgebra::Cholesky::new(predicted.clone()).ok_or(Error::SingularCovariance)?;
    if chol.l().diagonal().iter().any(|&v| !(v > 1e-300)) {
        return Err(Error::SingularCovariance);
    }
    let chi2 = ChiSquared::new(d as f64).expect("positive degrees of freedom");
    let r68 = chi2.inverse_cdf(0.68);
    let r95 = chi2.inverse_cdf(0.95);

    let recentred: Vec<TrialRecord> = records
        .iter()
        .map(|r| TrialRecord {
            target: center.iter().copied().collect(),
            ..r.clone()
        })
        .collect();
    let dists: Vec<f64> = scaled_deviations(&recentred, scale)?
        .map(|z| {
            let y = chol.l().solve_lower_triangular(&z).expect("nonsingular factor");
            y.norm_squared()
        })
        .collect();
    let k = dists.len() as f64;
    let frac = |limit: f64| {
        if dists.is_empty() {
            f64::NAN
        } else {
            dists.iter().filter(|&&m| m <= limit).count() as f64 / k
        }
    };
    Ok(Coverage {
        coverage_1sigma: frac(1.0),
        coverage_2sigma: frac(4.0),
        expected_1sigma: chi2.cdf(1.0),
        expected_2sigma: chi2.cdf(4.0),
        coverage_68: frac(r68),
        coverage_95: frac(r95),
    })
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Write records as CSV with columns
/// `trial,n,method,atom,est_1..est_d,target_1..target_d,error,failed`.
pub fn write_records_csv<W: Write>(records: &[TrialRecord], dim: usize, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidConfig(format!("writing records: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trial".to_string(), "n".into(), "method".into(), "atom".into()];
    header.extend((1..=dim).map(|i| format!("est_{i}")));
    header.extend((1..=dim).map(|i| format!("target_{i}")));
    header.push("error".into());
    header.push("failed".into());
    w.write_record(&header).map_err(io)?;
    for r in records {
        let mut row = vec![
            r.trial.to_string(),
            r.n.to_string(),
            r.method.name().to_string(),
            r.atom.to_string(),
        ];
        match &r.estimate {
            Some(e) => row.extend(e.iter().map(|&v| fmt_f64(v))),
            None => row.extend(std::iter::repeat_n(String::new(), dim)),
        }
        row.extend(r.target.iter().map(|&v| fmt_f64(v)));
        row.push(r.error.map(fmt_f64).unwrap_or_default());
        row.push(u8::from(r.failed()).to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidConfig(format!("writing records: {e}")))?;
    Ok(())
}

/// Write the rate table as CSV.
pub fn write_rates_csv<W: Write>(rows: &[RateRow], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidConfig(format!("writing rates: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "method", "trials", "failures", "median_error", "q90_error"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.method.name().to_string(),
            r.trials.to_string(),
            r.failures.to_string(),
            fmt_f64(r.median_error),
            fmt_f64(r.q90_error),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidConfig(format!("writing rates: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn record(est: &[f64], target: &[f64]) -> TrialRecord {
        TrialRecord {
            trial: 0,
            n: 10,
            method: OosMethod::LlsAse,
            atom: 0,
            estimate: Some(est.to_vec()),
            target: target.to_vec(),
            error: Some(euclidean(est, target)),
            diagnostics: None,
            failure: None,
        }
    }

    fn gaussian_records(cov: &DMatrix<f64>, k: usize, seed: u64) -> Vec<TrialRecord> {
        let l = nalgebra::Cholesky::new(cov.clone()).unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| {
                let z = DVector::from_fn(cov.nrows(), |_, _| StandardNormal.sample(&mut rng));
                let x = &l * z;
                record(x.as_slice(), &[0.0, 0.0])
            })
            .collect()
    }

    fn section4() -> InnerProductDistribution<f64> {
        InnerProductDistribution::from_rows(&[&[0.2, 0.7], &[0.65, 0.3]], &[0.4, 0.6]).unwrap()
    }

    #[test]
    fn identical_records_have_zero_covariance() {
        let recs = vec![record(&[0.3, 0.4], &[0.2, 0.7]); 5];
        assert_eq!(empirical_covariance(&recs, 3.0).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn three_point_covariance() {
        let recs = vec![
            record(&[1.0, 0.0], &[0.0, 0.0]),
            record(&[-1.0, 0.0], &[0.0, 0.0]),
            record(&[0.0, 3.0], &[0.0, 0.0]),
        ];
        // Mean (0, 1); deviations (1,-1), (-1,-1), (0,2); divide by 2.
        let c = empirical_covariance(&recs, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        assert!((c - expected).amax() < 1e-15);
        let c2 = empirical_covariance(&recs, 2.0).unwrap();
        assert!((c2 - DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 12.0])).amax() < 1e-14);
    }

    #[test]
    fn covariance_needs_two_successes() {
        let mut recs = vec![record(&[0.0, 0.0], &[0.0, 0.0]); 2];
        recs[1].estimate = None;
        assert!(matches!(empirical_covariance(&recs, 1.0), Err(Error::InsufficientRecords(1))));
    }

    #[test]
    fn mixed_groups_rejected() {
        let mut recs = vec![record(&[0.0, 0.0], &[0.0, 0.0]); 3];
        recs[2].atom = 1;
        assert!(matches!(empirical_covariance(&recs, 1.0), Err(Error::MixedRecordGroups)));
    }

    #[test]
    fn covariance_of_synthetic_normal() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.3]);
        let recs = gaussian_records(&cov, 10_000, 11);
        let est = empirical_covariance(&recs, 1.0).unwrap();
        assert!((est - &cov).norm() / cov.norm() < 0.05);
    }

    #[test]
    fn coverage_at_center_is_one() {
        let recs = vec![record(&[0.2, 0.7], &[0.2, 0.7]); 4];
        let c = coverage_check(&recs, &DMatrix::identity(2, 2), &DVector::from_vec(vec![0.2, 0.7]), 5.0)
            .unwrap();
        assert_eq!((c.coverage_1sigma, c.coverage_2sigma), (1.0, 1.0));
        assert_eq!((c.coverage_68, c.coverage_95), (1.0, 1.0));
    }

    #[test]
    fn coverage_of_synthetic_normal() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.3]);
        let recs = gaussian_records(&cov, 100_000, 12);
        let c = coverage_check(&recs, &cov, &DVector::zeros(2), 1.0).unwrap();
        assert!((c.coverage_1sigma - 0.3935).abs() < 0.01, "{c:?}");
        assert!((c.coverage_2sigma - 0.8647).abs() < 0.01, "{c:?}");
        assert!((c.coverage_68 - 0.68).abs() < 0.01, "{c:?}");
        assert!((c.coverage_95 - 0.95).abs() < 0.01, "{c:?}");
        assert!((c.expected_1sigma - (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        assert!((c.expected_2sigma - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn singular_covariance_rejected() {
        let recs = vec![record(&[0.0, 0.0], &[0.0, 0.0])];
        assert!(matches!(
            coverage_check(&recs, &DMatrix::zeros(2, 2), &DVector::zeros(2), 1.0),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[5.0], 0.9), 5.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn rate_experiment_needs_grid() {
        let cfg = ExperimentConfig::new(section4(), vec![100], 2);
        assert!(matches!(run_rate_experiment(&cfg, 1), Err(Error::InsufficientGrid)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new(section4(), vec![100, 50], 2);
        assert!(cfg.validate().is_err());
        cfg.n_values = vec![50, 100];
        assert!(cfg.validate().is_ok());
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn records_are_deterministic_and_schedule_free() {
        let mut cfg = ExperimentConfig::new(section4(), vec![60, 80], 3);
        cfg.methods = OosMethod::ALL.to_vec();
        cfg.master_seed = 99;
        let a = run_trials(&cfg, 1).unwrap();
        let b = run_trials(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 3 * 3);

        // Dropping trials leaves the remaining ones unchanged.
        cfg.trials = 2;
        let c = run_trials(&cfg, 2).unwrap();
        let kept: Vec<_> = a.iter().filter(|r| r.trial < 2).cloned().collect();
        assert_eq!(c, kept);
    }

    #[test]
    fn each_atom_mode_covers_all_atoms() {
        let mut cfg = ExperimentConfig::new(section4(), vec![80], 2);
        cfg.oos_atoms = OosAtoms::EachAtom;
        let recs = run_trials(&cfg, 1).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs.iter().map(|r| r.atom).collect::<Vec<_>>(), vec![0, 1, 0, 1]);
        for r in &recs {
            let e = r.estimate.as_ref().unwrap();
            assert!((euclidean(e, &r.target) - r.error.unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_layout() {
        let mut recs = vec![record(&[0.25, 0.5], &[0.2, 0.7])];
        let mut failed = record(&[0.0, 0.0], &[0.2, 0.7]);
        failed.estimate = None;
        failed.error = None;
        recs.push(failed);
        let mut buf = Vec::new();
        write_records_csv(&recs, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,n,method,atom,est_1,est_2,target_1,target_2,error,failed");
        assert!(lines[1].starts_with("0,10,lls-ase,0,0.25,0.5,0.2,0.7,"));
        assert!(lines[1].ends_with(",0"));
        assert_eq!(lines[2], "0,10,lls-ase,0,,,0.2,0.7,,1");
    }
}

//! Flat-file formats: edge lists, JSON documents and CSV tables.
//!
//! Numbers are written in the shortest form that parses back to the same
//! `f64`. Readers report the file and line of the first problem.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_theory::TradeoffRow;
use crate::model::{AdjacencyMatrix, InnerProductDistribution, LatentPositions, OosConnectivity};
use crate::montecarlo::{ExperimentConfig, OosAtoms};
use crate::oos::{MlSolverOptions, OosEstimate, OosMethod, SolverDiagnostics};
use crate::spectral::{Embedding, EmbeddingKind};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Write `value` as pretty-printed JSON followed by a newline.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Create `path` and hand a buffered writer to `body`.
pub fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| io_err(path, e))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_to_matrix(path: &Path, rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(parse_err(
            path,
            0,
            format!("{what} row {i} has {} entries, expected {cols}", r.len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionFile {
    pub dim: usize,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DistributionFile {
    fn into_distribution(self, path: &Path) -> Result<InnerProductDistribution<f64>> {
        if self.dim == 0 {
            return Err(parse_err(path, 0, "\"dim\" must be positive"));
        }
        let m = rows_to_matrix(path, &self.atoms, self.dim, "atom")?;
        let atoms = m.row_iter().map(|r| r.transpose()).collect();
        InnerProductDistribution::new(atoms, self.weights)
    }

    pub fn from_distribution(dist: &InnerProductDistribution<f64>) -> Self {
        Self {
            dim: dist.dim(),
            atoms: dist.atoms().iter().map(|a| a.iter().copied().collect()).collect(),
            weights: dist.weights().to_vec(),
        }
    }
}

pub fn read_distribution(path: &Path) -> Result<InnerProductDistribution<f64>> {
    read_json::<DistributionFile>(path)?.into_distribution(path)
}

pub fn write_distribution(path: &Path, dist: &InnerProductDistribution<f64>) -> Result<()> {
    write_json(path, &DistributionFile::from_distribution(dist))
}

/// Parse the edge-list format: a header `n <count>` followed by one `i j`
/// line per edge with `0 <= i < j < n`. Blank lines and lines starting with
/// `#` are ignored.
pub fn parse_edge_list(path: &Path, text: &str) -> Result<AdjacencyMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file; expected header \"n <count>\""))?;
    let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["n", count] => count.parse::<usize>().map_err(|_| {
            parse_err(path, header_line, format!("expected a vertex count, found {count:?}"))
        })?,
        _ => {
            return Err(parse_err(
                path,
                header_line,
                format!("expected header \"n <count>\", found {header:?}"),
            ))
        }
    };
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (line, content) in lines {
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [i, j] = fields.as_slice() else {
            return Err(parse_err(
                path,
                line,
                format!("expected two vertex indices \"i j\", found {content:?}"),
            ));
        };
        let index = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, line, format!("expected a vertex index, found {s:?}")))
        };
        let (i, j) = (index(i)?, index(j)?);
        if i >= j {
            return Err(parse_err(path, line, format!("expected i < j, found {i} {j}")));
        }
        if j >= n {
            return Err(parse_err(
                path,
                line,
                format!("vertex {j} out of range for n = {n}"),
            ));
        }
        if !seen.insert((i, j)) {
            return Err(parse_err(path, line, format!("duplicate edge {i} {j}")));
        }
        edges.push((i, j));
    }
    AdjacencyMatrix::from_edges(n, &edges)
}

pub fn read_edge_list(path: &Path) -> Result<AdjacencyMatrix> {
    parse_edge_list(path, &read_text(path)?)
}

pub fn write_edge_list(path: &Path, a: &AdjacencyMatrix) -> Result<()> {
    write_with(path, |w| {
        let e = |err| io_err(path, err);
        writeln!(w, "n {}", a.n()).map_err(e)?;
        for (i, j) in a.edges() {
            writeln!(w, "{i} {j}").map_err(e)?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentFile {
    pub positions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom_labels: Option<Vec<usize>>,
}

pub fn write_latent(path: &Path, x: &LatentPositions<f64>) -> Result<()> {
    write_json(
        path,
        &LatentFile {
            positions: matrix_rows(x.matrix()),
            atom_labels: x.atom_labels().map(<[usize]>::to_vec),
        },
    )
}

pub fn read_latent(path: &Path) -> Result<LatentPositions<f64>> {
    let file: LatentFile = read_json(path)?;
    let cols = file.positions.first().map_or(0, Vec::len);
    LatentPositions::new(rows_to_matrix(path, &file.positions, cols, "position")?)
}

pub fn read_connectivity(path: &Path) -> Result<OosConnectivity> {
    let c: OosConnectivity = read_json(path)?;
    if let Some(i) = c.a.iter().position(|&v| v > 1) {
        return Err(parse_err(path, 0, format!("entry {i} of \"a\" is {}, expected 0 or 1", c.a[i])));
    }
    Ok(c)
}

pub fn write_connectivity(path: &Path, c: &OosConnectivity) -> Result<()> {
    write_json(path, c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingFile {
    pub kind: EmbeddingKind,
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degrees: Option<Vec<f64>>,
}

impl EmbeddingFile {
    pub fn from_embedding(e: &Embedding<f64>) -> Self {
        Self {
            kind: e.kind(),
            d: e.dim(),
            eigenvalues: e.eigenvalues().iter().copied().collect(),
            positions: matrix_rows(e.positions()),
            degrees: e.degrees().map(<[f64]>::to_vec),
        }
    }
}

pub fn write_embedding(path: &Path, e: &Embedding<f64>) -> Result<()> {
    write_json(path, &EmbeddingFile::from_embedding(e))
}

pub fn read_embedding(path: &Path) -> Result<Embedding<f64>> {
    let f: EmbeddingFile = read_json(path)?;
    if f.eigenvalues.len() != f.d {
        return Err(parse_err(
            path,
            0,
            format!("\"eigenvalues\" has {} entries, expected d = {}", f.eigenvalues.len(), f.d),
        ));
    }
    let x = rows_to_matrix(path, &f.positions, f.d, "position")?;
    Embedding::from_parts(f.kind, x, DVector::from_vec(f.eigenvalues), f.degrees)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OosResultFile {
    pub method: OosMethod,
    pub w: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

pub fn write_oos_result(path: &Path, est: &OosEstimate<f64>) -> Result<()> {
    write_json(
        path,
        &OosResultFile {
            method: est.method,
            w: est.w.iter().copied().collect(),
            diagnostics: est.diagnostics,
        },
    )
}

/// Experiment configuration file. `master_seed` may be omitted when the
/// caller supplies a seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub distribution: DistributionFile,
    pub n_values: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<OosMethod>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub ml_options: MlSolverOptions,
    #[serde(default)]
    pub oos_atoms: OosAtoms,
}

fn default_methods() -> Vec<OosMethod> {
    vec![OosMethod::LlsAse]
}

/// Read an experiment configuration. A seed given here takes precedence
/// over the file's `master_seed`.
pub fn read_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let f: ConfigFile = read_json(path)?;
    let dist = f.distribution.into_distribution(path)?;
    let cfg = ExperimentConfig {
        dist,
        n_values: f.n_values,
        trials: f.trials,
        methods: f.methods,
        master_seed: seed.or(f.master_seed).unwrap_or(0),
        ml_options: f.ml_options,
        oos_atoms: f.oos_atoms,
    };
    cfg.validate().map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(cfg)
}

pub fn write_tradeoff_csv<W: Write>(rows: &[TradeoffRow], out: W) -> Result<()> {
    let err = |e: csv::Error| Error::InvalidConfig(format!("writing tradeoff table: {e}"));
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidConfig(format!("writing tradeoff table: {e}")))?;
    Ok(())
}

/// Attach a path to errors raised while streaming into a file.
pub fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::InvalidConfig(msg) => Error::Io {
            path: PathBuf::from(path),
            source: std::io::Error::other(msg),
        },
        other => other,
    }
}

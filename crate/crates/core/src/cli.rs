//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when the computation or an input file is
//! rejected, 2 when the invocation itself is malformed.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::io;
use crate::limit_theory::{tradeoff_sweep, ScalarMixture};
use crate::model::{child_seed, sample_adjacency, sample_latent, sample_oos};
use crate::montecarlo::{
    resolve_workers, run_clt_experiment, run_rate_experiment, write_rates_csv, write_records_csv,
};
use crate::oos::{extend, MlSolverOptions, OosMethod};
use crate::spectral::{ase, lse};

#[derive(Debug, Parser)]
#[command(name = "rdpg-oos", version, about = "Spectral embeddings of random dot product graphs and out-of-sample extensions")]
pub struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for experiments (default: RDPG_OOS_WORKERS, then all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedMethod {
    Ase,
    Lse,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample latent positions and a graph from a distribution file.
    Generate {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        n: usize,
        /// Output edge list.
        #[arg(long)]
        graph: PathBuf,
        /// Output latent positions (JSON).
        #[arg(long)]
        latent: PathBuf,
        /// Also write the edges of one out-of-sample vertex (JSON).
        #[arg(long)]
        oos: Option<PathBuf>,
        /// Atom of the out-of-sample vertex; drawn from the mixture if omitted.
        #[arg(long, requires = "oos")]
        oos_atom: Option<usize>,
    },
    /// Embed a graph.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum)]
        method: EmbedMethod,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extend an embedding to an out-of-sample vertex.
    Oos {
        #[arg(long)]
        embedding: PathBuf,
        /// Connectivity JSON with field "a".
        #[arg(long)]
        connectivity: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: OosMethod,
        #[arg(long, default_value_t = MlSolverOptions::default().epsilon)]
        epsilon: f64,
        #[arg(long, default_value_t = MlSolverOptions::default().max_iterations)]
        max_iterations: usize,
        #[arg(long, default_value_t = MlSolverOptions::default().gradient_tolerance)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a central limit experiment.
    Clt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        summary: PathBuf,
    },
    /// Run an error-rate experiment over several graph sizes.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Tabulate the in-sample versus out-of-sample classification error ratio.
    Tradeoff {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        /// Comma-separated in-sample sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Comma-separated numbers of additional vertices.
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<OosMethod, String> {
    s.parse()
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Domain(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

type CliResult = std::result::Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> CliResult {
    let seed = cli.seed;
    match cli.command {
        Command::Generate {
            dist,
            n,
            graph,
            latent,
            oos,
            oos_atom,
        } => generate(&dist, n, seed.unwrap_or(0), &graph, &latent, oos.as_deref(), oos_atom),
        Command::Embed { graph, method, d, out } => embed(&graph, method, d, &out),
        Command::Oos {
            embedding,
            connectivity,
            method,
            epsilon,
            max_iterations,
            tolerance,
            out,
        } => {
            let opts = MlSolverOptions {
                epsilon,
                max_iterations,
                gradient_tolerance: tolerance,
                ..MlSolverOptions::default()
            };
            if !(epsilon > 0.0 && epsilon < 0.5) {
                return Err(usage(format!("--epsilon must lie in (0, 0.5), got {epsilon}")));
            }
            if !(tolerance > 0.0) || max_iterations == 0 {
                return Err(usage("--tolerance and --max-iterations must be positive"));
            }
            let emb = io::read_embedding(&embedding)?;
            let conn = io::read_connectivity(&connectivity)?;
            let est = extend(method, &emb, &conn, &opts)?;
            io::write_oos_result(&out, &est)?;
            Ok(())
        }
        Command::Clt {
            config,
            records,
            summary,
        } => {
            let workers = workers(cli.workers)?;
            let cfg = io::read_config(&config, seed)?;
            let result = run_clt_experiment(&cfg, workers)?;
            io::write_with(&records, |w| {
                write_records_csv(&result.records, cfg.dist.dim(), w).map_err(|e| io::with_path(&records, e))
            })?;
            io::write_json(&summary, &result.summary)?;
            Ok(())
        }
        Command::Rates { config, out, records } => {
            let workers = workers(cli.workers)?;
            let cfg = io::read_config(&config, seed)?;
            if cfg.n_values.len() < 2 {
                return Err(Error::InsufficientGrid.into());
            }
            let (recs, rows) = run_rate_experiment(&cfg, workers)?;
            io::write_with(&out, |w| write_rates_csv(&rows, w).map_err(|e| io::with_path(&out, e)))?;
            if let Some(path) = records {
                io::write_with(&path, |w| {
                    write_records_csv(&recs, cfg.dist.dim(), w).map_err(|e| io::with_path(&path, e))
                })?;
            }
            Ok(())
        }
        Command::Tradeoff {
            lambda,
            p,
            q,
            n,
            m,
            out,
        } => {
            if n.contains(&0) || m.contains(&0) {
                return Err(usage("--n and --m values must be positive"));
            }
            let mix = ScalarMixture::new(lambda, p, q)?;
            let rows = tradeoff_sweep(&n, &m, &mix)?;
            io::write_with(&out, |w| io::write_tradeoff_csv(&rows, w).map_err(|e| io::with_path(&out, e)))?;
            Ok(())
        }
    }
}

fn workers(flag: Option<usize>) -> std::result::Result<usize, CliError> {
    if flag == Some(0) {
        return Err(usage("--workers must be positive"));
    }
    Ok(resolve_workers(flag)?)
}

fn generate(
    dist_path: &Path,
    n: usize,
    seed: u64,
    graph: &Path,
    latent: &Path,
    oos: Option<&Path>,
    oos_atom: Option<usize>,
) -> CliResult {
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    let dist = io::read_distribution(dist_path)?;
    if let Some(k) = oos_atom {
        if k >= dist.len() {
            return Err(usage(format!(
                "--oos-atom {k} out of range; the distribution has {} atoms",
                dist.len()
            )));
        }
    }
    let x = sample_latent(&dist, n, child_seed(seed, 0));
    let a = sample_adjacency(&x, child_seed(seed, 1))?;
    io::write_edge_list(graph, &a)?;
    io::write_latent(latent, &x)?;
    if let Some(path) = oos {
        let atom = oos_atom.unwrap_or_else(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 2));
            dist.sample_atom(&mut rng)
        });
        let w: DVector<f64> = dist.atom(atom).clone();
        let conn = sample_oos(&x, &w, child_seed(seed, 3))?;
        io::write_connectivity(path, &conn)?;
    }
    Ok(())
}

fn embed(graph: &Path, method: EmbedMethod, d: usize, out: &Path) -> CliResult {
    let a = io::read_edge_list(graph)?;
    if d == 0 || d > a.n() {
        return Err(usage(format!("--d must lie in 1..={}, got {d}", a.n())));
    }
    let e = match method {
        EmbedMethod::Ase => ase::<f64>(&a, d)?,
        EmbedMethod::Lse => lse::<f64>(&a, d)?,
    };
    io::write_embedding(out, &e)?;
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use tsvd_msc::io::{self, Manifest, Preset, SynthConfig};
use tsvd_msc::pipeline::{self, Method, PipelineOptions};
use tsvd_msc::solver::SolverConfig;
use tsvd_msc::spectral::DEFAULT_RESTARTS;
use tsvd_msc::tsvd::{self, MULTIRANK_TOL};
use tsvd_msc::{metrics, Error, Result};

/// Multi-view subspace clustering with t-SVD tensor multi-rank minimization.
#[derive(Parser, Debug)]
#[command(name = "tsvd-msc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster a multi-view dataset with the tensor method.
    Cluster {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Use the unrotated N x N x V coefficient tensor.
        #[arg(long)]
        unrotated: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a comparison method.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        manifest: PathBuf,
        /// 1-based view for single-view methods; all views when omitted.
        #[arg(long)]
        view: Option<usize>,
        /// Kernel width for `spc`; median pairwise distance when omitted.
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a synthetic union-of-subspaces dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        views: usize,
        #[arg(long)]
        clusters: usize,
        #[arg(long)]
        per_cluster: usize,
        /// Ambient dimension per view; a single value applies to every view.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        noise: f64,
        /// 1-based view to corrupt.
        #[arg(long, requires = "corrupt_frac")]
        corrupt_view: Option<usize>,
        #[arg(long, requires = "corrupt_view")]
        corrupt_frac: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect the t-SVD of a tensor debug file.
    Tsvd {
        #[arg(long)]
        tensor: PathBuf,
        /// Apply tubal shrinkage at this threshold.
        #[arg(long)]
        tau: Option<f64>,
        /// Where to write the shrunk tensor.
        #[arg(long, requires = "tau")]
        shrunk_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineMethod {
    Lrr,
    Naive,
    Spc,
    Utsvd,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Error weight; falls back to the preset's value.
    #[arg(long)]
    lambda: Option<f64>,
    /// Known dataset whose tuned lambda to use (overrides the manifest's).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    rho_max: Option<f64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write predicted labels, one per line.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

impl SolverArgs {
    fn config(&self, manifest: &Manifest) -> Result<SolverConfig> {
        let preset = match &self.preset {
            Some(p) => Some(p.parse::<Preset>()?),
            None => manifest.preset()?,
        };
        let lambda = self.lambda.or(preset.map(Preset::lambda)).ok_or_else(|| {
            Error::InvalidArgument("no lambda: pass --lambda or --preset, or set a preset in the manifest".into())
        })?;
        let mut c = SolverConfig::new(lambda);
        c.max_iters = self.max_iters.unwrap_or(c.max_iters);
        c.epsilon = self.epsilon.unwrap_or(c.epsilon);
        c.mu0 = self.mu0.unwrap_or(c.mu0);
        c.rho0 = self.rho0.unwrap_or(c.rho0);
        c.eta = self.eta.unwrap_or(c.eta);
        c.mu_max = self.mu_max.unwrap_or(c.mu_max);
        c.rho_max = self.rho_max.unwrap_or(c.rho_max);
        c.validate()?;
        Ok(c)
    }
}

fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn one_based(v: Option<usize>, what: &str) -> Result<Option<usize>> {
    match v {
        Some(0) => Err(Error::InvalidArgument(format!("{what} is 1-based"))),
        Some(v) => Ok(Some(v - 1)),
        None => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster {
            manifest,
            solver,
            unrotated,
            run,
        } => {
            let m = Manifest::read(&manifest)?;
            let mut config = solver.config(&m)?;
            config.rotated = !unrotated;
            let data = io::load_dataset(&manifest)?;
            let opts = PipelineOptions {
                config,
                restarts: run.restarts,
                seed: run.seed,
            };
            let report = pipeline::cluster(&data, &opts)?;
            if let Some(p) = &run.labels_out {
                io::write_labels(p, &report.labels0())?;
            }
            emit(&report, run.out.as_deref())
        }
        Command::Baseline {
            method,
            manifest,
            view,
            sigma,
            solver,
            run,
        } => {
            let m = Manifest::read(&manifest)?;
            let method = match method {
                BaselineMethod::Lrr => Method::Lrr,
                BaselineMethod::Naive => Method::Naive,
                BaselineMethod::Spc => Method::Spc,
                BaselineMethod::Utsvd => Method::UtSvdMsc,
            };
            // spc needs no lambda
            let config = match (method, solver.config(&m)) {
                (Method::Spc, Err(Error::InvalidArgument(_))) => SolverConfig::new(0.0),
                (_, c) => c?,
            };
            let data = io::load_dataset(&manifest)?;
            let opts = PipelineOptions {
                config,
                restarts: run.restarts,
                seed: run.seed,
            };
            let report = pipeline::baseline(&data, method, one_based(view, "--view")?, sigma, &opts)?;
            if let (Some(p), [only]) = (&run.labels_out, report.runs.as_slice()) {
                io::write_labels(p, &only.labels0())?;
            } else if run.labels_out.is_some() {
                return Err(Error::InvalidArgument("--labels-out needs a single run; pass --view".into()));
            }
            emit(&report, run.out.as_deref())
        }
        Command::Synth {
            out,
            views,
            clusters,
            per_cluster,
            dims,
            rank,
            noise,
            corrupt_view,
            corrupt_frac,
            seed,
        } => {
            let dims = match dims.as_slice() {
                [d] => vec![*d; views],
                _ if dims.len() == views => dims,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "--dims lists {} values for {views} views",
                        dims.len()
                    )))
                }
            };
            let cfg = SynthConfig {
                corrupt_view: one_based(corrupt_view, "--corrupt-view")?,
                corrupt_frac: corrupt_frac.unwrap_or(0.0),
                ..SynthConfig::new(clusters, per_cluster, dims, rank, noise, seed)
            };
            let data = io::synth(&cfg)?;
            let path = io::save_dataset(&data, &out, None)?;
            emit(&json!({ "manifest": path, "synth": cfg }), None)
        }
        Command::Eval { pred, truth, out } => {
            let p = io::read_labels(&pred, None)?;
            let t = io::read_labels(&truth, None)?;
            emit(&metrics::evaluate(&p, &t)?, out.as_deref())
        }
        Command::Tsvd {
            tensor,
            tau,
            shrunk_out,
            out,
        } => {
            let t = io::read_tensor_csv(&tensor)?;
            let f = tsvd::tsvd(&t)?;
            let mut report = json!({
                "dims": t.dims(),
                "factors": { "u": f.u.dims(), "s": f.s.dims(), "v": f.v.dims() },
                "multirank": tsvd::multirank(&t, MULTIRANK_TOL)?.0,
                "ttnn": tsvd::ttnn(&t)?,
            });
            if let Some(tau) = tau {
                let g = tsvd::tubal_shrink(&t, tau)?;
                report["tubal_shrink"] = json!({
                    "tau": tau,
                    "multirank": tsvd::multirank(&g, MULTIRANK_TOL)?.0,
                    "ttnn": tsvd::ttnn(&g)?,
                });
                if let Some(p) = &shrunk_out {
                    io::write_tensor_csv(p, &g)?;
                }
            }
            emit(&report, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

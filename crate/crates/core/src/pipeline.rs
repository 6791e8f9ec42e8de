//! End-to-end runs: solve, fuse the affinity, cluster, evaluate, and collect
//! everything into a serializable report.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{lrr_with, naive_multiview, spc_affinity, LrrOutput};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::solver::{self, ConvergenceTrace, MultiViewDataset, SolverConfig};
use crate::spectral::{fuse_affinity, spectral_cluster, AffinityMatrix, DEFAULT_RESTARTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TSvdMsc,
    UtSvdMsc,
    Lrr,
    Naive,
    Spc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub config: SolverConfig,
    pub restarts: usize,
    pub seed: u64,
}

impl PipelineOptions {
    pub fn new(config: SolverConfig) -> Self {
        Self {
            config,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub n_views: usize,
    pub view_dims: Vec<usize>,
    pub clusters: usize,
}

impl DatasetSummary {
    pub fn of(data: &MultiViewDataset) -> Self {
        Self {
            n_samples: data.n_samples(),
            n_views: data.n_views(),
            view_dims: data.view_dims(),
            clusters: data.clusters(),
        }
    }
}

/// Wall-clock seconds per phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub solve: f64,
    pub affinity: f64,
    pub spectral: f64,
    pub evaluate: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub method: Method,
    /// 1-based view index for single-view runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view: Option<usize>,
    pub dataset: DatasetSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<SolverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<ConvergenceTrace>,
    /// Predicted cluster per sample, 1-based.
    pub labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub timings: Timings,
}

impl ClusteringReport {
    /// Predicted labels, 0-based.
    pub fn labels0(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l - 1).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub method: Method,
    pub runs: Vec<ClusteringReport>,
}

struct Clustered {
    labels: Vec<usize>,
    metrics: Option<MetricsReport>,
    spectral: f64,
    evaluate: f64,
}

fn cluster_affinity(a: &AffinityMatrix, data: &MultiViewDataset, opts: &PipelineOptions) -> Result<Clustered> {
    let t = Instant::now();
    let labels = spectral_cluster(a, data.clusters(), opts.seed, opts.restarts)?;
    let spectral = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let metrics = data.labels().map(|truth| evaluate(&labels, truth)).transpose()?;
    Ok(Clustered {
        labels: labels.into_iter().map(|l| l + 1).collect(),
        metrics,
        spectral,
        evaluate: t.elapsed().as_secs_f64(),
    })
}

fn report(
    method: Method,
    data: &MultiViewDataset,
    opts: &PipelineOptions,
    config: Option<SolverConfig>,
    c: Clustered,
    solve: f64,
    affinity: f64,
) -> ClusteringReport {
    ClusteringReport {
        method,
        view: None,
        dataset: DatasetSummary::of(data),
        config,
        sigma: None,
        seed: opts.seed,
        restarts: opts.restarts,
        iterations: None,
        converged: None,
        trace: None,
        labels: c.labels,
        metrics: c.metrics,
        timings: Timings {
            solve,
            affinity,
            spectral: c.spectral,
            evaluate: c.evaluate,
            total: solve + affinity + c.spectral + c.evaluate,
        },
    }
}

/// The tensor method, rotated or not according to `opts.config.rotated`.
pub fn cluster(data: &MultiViewDataset, opts: &PipelineOptions) -> Result<ClusteringReport> {
    let t = Instant::now();
    let out = solver::run(data, &opts.config)?;
    let solve = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let a = fuse_affinity(out.z())?;
    let affinity = t.elapsed().as_secs_f64();
    let c = cluster_affinity(&a, data, opts)?;
    let method = if opts.config.rotated {
        Method::TSvdMsc
    } else {
        Method::UtSvdMsc
    };
    let mut r = report(method, data, opts, Some(opts.config.clone()), c, solve, affinity);
    r.iterations = Some(out.trace.iterations());
    r.converged = Some(out.trace.converged);
    r.trace = Some(out.trace);
    Ok(r)
}

fn lrr_report(
    data: &MultiViewDataset,
    opts: &PipelineOptions,
    method: Method,
    outputs: &[LrrOutput],
    solve: f64,
) -> Result<ClusteringReport> {
    let t = Instant::now();
    let z: Vec<_> = outputs.iter().map(|o| o.z.clone()).collect();
    let a = fuse_affinity(&z)?;
    let affinity = t.elapsed().as_secs_f64();
    let c = cluster_affinity(&a, data, opts)?;
    let mut r = report(method, data, opts, Some(opts.config.clone()), c, solve, affinity);
    r.iterations = outputs.iter().map(|o| o.iterations).max();
    r.converged = Some(outputs.iter().all(|o| o.converged));
    Ok(r)
}

fn views_to_run(data: &MultiViewDataset, view: Option<usize>) -> Result<Vec<usize>> {
    match view {
        Some(v) if v < data.n_views() => Ok(vec![v]),
        Some(v) => Err(Error::InvalidArgument(format!(
            "view {} out of range 1..={}",
            v + 1,
            data.n_views()
        ))),
        None => Ok((0..data.n_views()).collect()),
    }
}

/// Runs a comparison method. Single-view methods (`lrr`, `spc`) run on the
/// given 0-based view, or on every view in turn when `view` is `None`.
pub fn baseline(
    data: &MultiViewDataset,
    method: Method,
    view: Option<usize>,
    sigma: Option<f64>,
    opts: &PipelineOptions,
) -> Result<BaselineReport> {
    let mut runs = Vec::new();
    match method {
        Method::TSvdMsc | Method::UtSvdMsc => {
            let config = SolverConfig {
                rotated: method == Method::TSvdMsc,
                ..opts.config.clone()
            };
            runs.push(cluster(data, &PipelineOptions { config, ..opts.clone() })?);
        }
        Method::Naive => {
            let t = Instant::now();
            let lambdas = vec![opts.config.lambda; data.n_views()];
            let outputs = naive_multiview(data, &lambdas, &opts.config)?;
            let solve = t.elapsed().as_secs_f64();
            runs.push(lrr_report(data, opts, method, &outputs, solve)?);
        }
        Method::Lrr => {
            for v in views_to_run(data, view)? {
                let single = data.single_view(v)?;
                let t = Instant::now();
                let out = lrr_with(single.view(0), &opts.config)?;
                let solve = t.elapsed().as_secs_f64();
                let mut r = lrr_report(&single, opts, method, &[out], solve)?;
                r.view = Some(v + 1);
                runs.push(r);
            }
        }
        Method::Spc => {
            for v in views_to_run(data, view)? {
                let single = data.single_view(v)?;
                let t = Instant::now();
                let a = spc_affinity(single.view(0), sigma)?;
                let affinity = t.elapsed().as_secs_f64();
                let c = cluster_affinity(&a, &single, opts)?;
                let mut r = report(method, &single, opts, None, c, 0.0, affinity);
                r.view = Some(v + 1);
                r.sigma = Some(sigma.unwrap_or_else(|| crate::baselines::median_distance(single.view(0))));
                runs.push(r);
            }
        }
    }
    Ok(BaselineReport { method, runs })
}

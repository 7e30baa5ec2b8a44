//! Reproducible simulation runs behind the command-line subcommands.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{solve, AdmmConfig, SolveResult};
use crate::datagen::{
    choose_known_hubs, export_truth, generate_truth, replication_seed, sample_gaussian, NetworkSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{score, write_metrics_csv, GroundTruth, MetricsRow};
use crate::linalg::{empirical_covariance, load_matrix, save_matrix, SymmetricMatrix};
use crate::penalty::PenaltyConfig;
use crate::selection::{grid_select, BicConfig, GridSpec};
use crate::workflows::{
    algorithm1_with_fit, algorithm2_with_fit, default_lambda_path, extract_hubs, fit_gl, fit_hgl,
    DiscriminationGrid, HglFit, HubExtractionConfig, Provenance, ScreeningConfig, WorkflowSettings,
};

/// Share of failed runs above which an experiment counts as failed.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gl,
    Hgl,
    Dhgl,
    Algorithm1,
    Algorithm2,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gl,
        Method::Hgl,
        Method::Dhgl,
        Method::Algorithm1,
        Method::Algorithm2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gl => "gl",
            Method::Hgl => "hgl",
            Method::Dhgl => "dhgl",
            Method::Algorithm1 => "algorithm1",
            Method::Algorithm2 => "algorithm2",
        }
    }

    fn needs_hgl(self) -> bool {
        self != Method::Gl
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method {s:?}")))
    }
}

fn default_hgl_grid() -> GridSpec {
    GridSpec::new(vec![0.4], vec![0.4], vec![1.0], None, None).expect("valid default grid")
}

/// Estimation settings shared by `estimate` and `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    /// Candidates for the undiscriminated fit; one point means fixed values.
    pub hgl: GridSpec,
    /// Penalty for `dhgl` runs given explicitly (used by `estimate`).
    pub penalty: Option<PenaltyConfig>,
    /// Graphical lasso penalty; chosen by BIC along the default path if unset.
    pub gl_lambda: Option<f64>,
    pub known_hub_grid: DiscriminationGrid,
    pub screening_grid: DiscriminationGrid,
    pub screening: ScreeningConfig,
    pub extraction: HubExtractionConfig,
    pub admm: AdmmConfig,
    pub hgl_bic: BicConfig,
    pub known_hub_bic: BicConfig,
    pub screening_bic: BicConfig,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            hgl: default_hgl_grid(),
            penalty: None,
            gl_lambda: None,
            known_hub_grid: DiscriminationGrid::known_hubs(),
            screening_grid: DiscriminationGrid::screened(),
            screening: ScreeningConfig::default(),
            extraction: HubExtractionConfig::default(),
            admm: AdmmConfig::default(),
            hgl_bic: BicConfig::default(),
            known_hub_bic: BicConfig::default(),
            screening_bic: BicConfig::with_c(0.1),
        }
    }
}

impl MethodConfig {
    fn settings(&self, dhgl_bic: BicConfig) -> WorkflowSettings {
        WorkflowSettings {
            admm: self.admm,
            extraction: self.extraction,
            hgl_bic: self.hgl_bic,
            dhgl_bic,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.admm.validate()?;
        self.extraction.validate(p)?;
        self.screening.validate()?;
        self.known_hub_grid.validate()?;
        self.screening_grid.validate()?;
        for b in [&self.hgl_bic, &self.known_hub_bic, &self.screening_bic] {
            b.validate()?;
        }
        if let Some(l) = self.gl_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config("gl_lambda", "must be finite and >= 0"));
            }
        }
        if let Some(pen) = &self.penalty {
            pen.validate_dim(p)?;
        }
        Ok(())
    }
}

/// Result of one method on one covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub result: SolveResult,
    pub hubs: BTreeSet<usize>,
    pub discriminated: BTreeSet<usize>,
    pub provenance: Option<Provenance>,
    pub penalty: Option<PenaltyConfig>,
    pub gl_lambda: Option<f64>,
    /// Iterations summed over every solve the method needed.
    pub total_iterations: usize,
}

fn hgl_estimate(fit: &HglFit) -> Estimate {
    Estimate {
        method: Method::Hgl,
        result: fit.result.clone(),
        hubs: fit.hubs.clone(),
        discriminated: BTreeSet::new(),
        provenance: Some(Provenance::HglOnly),
        penalty: Some(fit.penalty.clone()),
        gl_lambda: None,
        total_iterations: fit.result.iterations,
    }
}

/// Runs `method`; `fit` must be the undiscriminated fit for every method but
/// `gl`. `known` is the set of hubs known in advance.
pub fn run_method(
    method: Method,
    s: &SymmetricMatrix,
    n: usize,
    known: &BTreeSet<usize>,
    fit: Option<&HglFit>,
    cfg: &MethodConfig,
) -> Result<Estimate> {
    let need_fit = || {
        fit.cloned()
            .ok_or_else(|| Error::config("hgl", "fit missing"))
    };
    match method {
        Method::Gl => {
            let (lambda, result) = match cfg.gl_lambda {
                Some(l) => (l, crate::workflows::run_gl(s, l, &cfg.admm)?),
                None => fit_gl(s, n, &default_lambda_path(s, 20), &cfg.admm, &cfg.hgl_bic)?,
            };
            Ok(Estimate {
                method,
                hubs: extract_hubs(&result.theta_hat, &cfg.extraction),
                total_iterations: result.iterations,
                result,
                discriminated: BTreeSet::new(),
                provenance: None,
                penalty: None,
                gl_lambda: Some(lambda),
            })
        }
        Method::Hgl => Ok(hgl_estimate(&need_fit()?)),
        Method::Dhgl => {
            let fit = need_fit()?;
            if let Some(pen) = &cfg.penalty {
                let result = solve(s, pen, &cfg.admm)?;
                return Ok(Estimate {
                    method,
                    hubs: extract_hubs(&result.theta_hat, &cfg.extraction),
                    total_iterations: result.iterations,
                    result,
                    discriminated: pen.discriminated().clone(),
                    provenance: Some(Provenance::Dhgl),
                    penalty: Some(pen.clone()),
                    gl_lambda: None,
                });
            }
            if known.is_empty() {
                return Ok(Estimate {
                    method,
                    ..hgl_estimate(&fit)
                });
            }
            let grid = cfg.known_hub_grid.grid(&fit.penalty, known)?;
            let sel = grid_select(s, n, &grid, &cfg.admm, &cfg.known_hub_bic)?;
            Ok(Estimate {
                method,
                hubs: extract_hubs(&sel.result.theta_hat, &cfg.extraction),
                total_iterations: fit.result.iterations + sel.result.iterations,
                result: sel.result,
                discriminated: known.clone(),
                provenance: Some(Provenance::Dhgl),
                penalty: Some(sel.penalty),
                gl_lambda: None,
            })
        }
        Method::Algorithm1 | Method::Algorithm2 => {
            let fit = need_fit()?;
            let hgl_iterations = fit.result.iterations;
            let w = if method == Method::Algorithm1 {
                let settings = cfg.settings(cfg.known_hub_bic);
                algorithm1_with_fit(s, n, known, fit, &cfg.known_hub_grid, &settings)?
            } else {
                let settings = cfg.settings(cfg.screening_bic);
                algorithm2_with_fit(s, n, fit, &cfg.screening, &cfg.screening_grid, &settings)?
            };
            let extra = match w.provenance {
                Provenance::Dhgl => w.estimate.iterations,
                Provenance::HglOnly => 0,
            };
            Ok(Estimate {
                method,
                total_iterations: hgl_iterations + extra,
                result: w.estimate,
                hubs: w.hubs,
                discriminated: w.discriminated,
                provenance: Some(w.provenance),
                penalty: Some(w.penalty),
                gl_lambda: w.screening_lambda,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub network: NetworkSpec,
    pub n: usize,
    pub replications: usize,
    pub methods: Vec<Method>,
    /// Number of true hubs revealed to the methods per replication. When
    /// positive every row is scored with those hubs excluded.
    pub known_hubs: usize,
    #[serde(flatten)]
    pub estimation: MethodConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Draw a fresh network per replication instead of sharing one.
    pub resample_truth: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "default".to_string(),
            network: NetworkSpec::default(),
            n: 50,
            replications: 1,
            methods: vec![Method::Hgl],
            known_hubs: 0,
            estimation: MethodConfig::default(),
            seed: 0,
            output_dir: None,
            resample_truth: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "must be >= 2"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "list is empty"));
        }
        if self.known_hubs > self.network.hub_count {
            return Err(Error::config("known_hubs", "exceeds network.hub_count"));
        }
        self.network.validate()?;
        self.estimation.validate(self.network.p)
    }

    fn truth_seed(&self, replication: usize) -> u64 {
        if self.resample_truth {
            replication_seed(self.seed, replication)
        } else {
            self.seed
        }
    }

    fn truth(&self, replication: usize) -> Result<GroundTruth> {
        generate_truth(&NetworkSpec {
            seed: self.truth_seed(replication),
            ..self.network.clone()
        })
    }
}

/// Timing and solver diagnostics for one (replication, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replication: usize,
    pub method: String,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub total_iterations: Option<usize>,
    pub converged: Option<bool>,
    pub provenance: Option<String>,
    /// Space-separated discriminated nodes.
    pub discriminated: String,
    /// How many discriminated nodes are true hubs.
    pub discriminated_true_hubs: usize,
    /// Space-separated hubs reported by the method.
    pub hubs: String,
    /// Space-separated hubs of the undiscriminated fit.
    pub hgl_hubs: String,
    pub wall_seconds: f64,
    pub seconds_per_iteration: Option<f64>,
    pub error: Option<String>,
}

/// Everything one replication produced, in method order.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub metrics: Vec<MetricsRow>,
    pub runs: Vec<RunRecord>,
}

fn join_indices(set: &BTreeSet<usize>) -> String {
    set.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn run_replication(cfg: &ExperimentConfig, replication: usize) -> ReplicationOutcome {
    let seed = replication_seed(cfg.seed, replication);
    let effective = cfg.known_hubs > 0;
    let fail_all = |err: &Error| {
        let metrics = cfg
            .methods
            .iter()
            .map(|m| MetricsRow::failed(replication, m.name(), seed, effective))
            .collect();
        let runs = cfg
            .methods
            .iter()
            .map(|m| RunRecord {
                replication,
                method: m.name().to_string(),
                seed,
                iterations: None,
                total_iterations: None,
                converged: None,
                provenance: None,
                discriminated: String::new(),
                discriminated_true_hubs: 0,
                hubs: String::new(),
                hgl_hubs: String::new(),
                wall_seconds: 0.0,
                seconds_per_iteration: None,
                error: Some(err.to_string()),
            })
            .collect();
        ReplicationOutcome { metrics, runs }
    };

    let prepared = cfg.truth(replication).and_then(|truth| {
        let sample = sample_gaussian(&truth, cfg.n, seed)?;
        let s = empirical_covariance(&sample.x)?;
        let known = choose_known_hubs(&truth, cfg.known_hubs, seed)?;
        Ok((truth, s, known))
    });
    let (truth, s, known) = match prepared {
        Ok(v) => v,
        Err(e) => {
            log::warn!("replication {replication}: {e}");
            return fail_all(&e);
        }
    };

    let est = &cfg.estimation;
    let started = Instant::now();
    let fit = if cfg.methods.iter().any(|m| m.needs_hgl()) {
        Some(fit_hgl(&s, cfg.n, &est.hgl, &est.settings(est.hgl_bic)))
    } else {
        None
    };
    let hgl_seconds = started.elapsed().as_secs_f64();

    let mut metrics = Vec::new();
    let mut runs = Vec::new();
    for &method in &cfg.methods {
        let started = Instant::now();
        let outcome = match &fit {
            Some(Err(e)) if method.needs_hgl() => Err(Error::config("hgl", e.to_string())),
            Some(Ok(f)) => run_method(method, &s, cfg.n, &known, Some(f), est),
            _ => run_method(method, &s, cfg.n, &known, None, est),
        }
        .and_then(|e| {
            let m = score(&e.result.theta_hat, &truth, &est.extraction, &known)?;
            Ok((e, m))
        });
        let mut wall = started.elapsed().as_secs_f64();
        if method.needs_hgl() {
            wall += hgl_seconds;
        }
        match outcome {
            Ok((e, m)) => {
                metrics.push(MetricsRow::scored(replication, method.name(), seed, &m));
                runs.push(RunRecord {
                    replication,
                    method: method.name().to_string(),
                    seed,
                    iterations: Some(e.result.iterations),
                    total_iterations: Some(e.total_iterations),
                    converged: Some(e.result.converged),
                    provenance: e.provenance.map(|p| provenance_name(p).to_string()),
                    discriminated: join_indices(&e.discriminated),
                    discriminated_true_hubs: e.discriminated.intersection(&truth.hubs).count(),
                    hubs: join_indices(&e.hubs),
                    hgl_hubs: match &fit {
                        Some(Ok(f)) => join_indices(&f.hubs),
                        _ => String::new(),
                    },
                    wall_seconds: wall,
                    seconds_per_iteration: (e.total_iterations > 0)
                        .then(|| wall / e.total_iterations as f64),
                    error: None,
                });
            }
            Err(err) => {
                log::warn!("replication {replication}, {method}: {err}");
                metrics.push(MetricsRow::failed(
                    replication,
                    method.name(),
                    seed,
                    effective,
                ));
                runs.push(RunRecord {
                    replication,
                    method: method.name().to_string(),
                    seed,
                    iterations: None,
                    total_iterations: None,
                    converged: None,
                    provenance: None,
                    discriminated: String::new(),
                    discriminated_true_hubs: 0,
                    hubs: String::new(),
                    hgl_hubs: String::new(),
                    wall_seconds: wall,
                    seconds_per_iteration: None,
                    error: Some(err.to_string()),
                });
            }
        }
    }
    ReplicationOutcome { metrics, runs }
}

fn provenance_name(p: Provenance) -> &'static str {
    match p {
        Provenance::HglOnly => "hgl_only",
        Provenance::Dhgl => "dhgl",
    }
}

/// Mean of each measure over the successful runs of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub correct_edges: Option<f64>,
    pub hub_edge_prop: Option<f64>,
    pub hub_node_prop: Option<f64>,
    pub sse: Option<f64>,
    pub hub_accuracy: Option<f64>,
}

/// Paired comparison of a method against the undiscriminated fit over the
/// replications where both succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: String,
    pub baseline: String,
    pub paired_replications: usize,
    /// `method - baseline`, averaged.
    pub correct_edges_diff: Option<f64>,
    pub hub_edge_prop_diff: Option<f64>,
    pub hub_node_prop_diff: Option<f64>,
    pub sse_diff: Option<f64>,
    pub hub_accuracy_diff: Option<f64>,
    /// Share of replications where the method's SSE is no larger.
    pub sse_not_worse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub replications: usize,
    pub failure_rate: f64,
    pub methods: Vec<MethodSummary>,
    pub comparisons: Vec<Comparison>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

type Measure = fn(&MetricsRow) -> Option<f64>;

const MEASURES: [Measure; 5] = [
    |r| r.correct_edges.map(|x| x as f64),
    |r| r.hub_edge_prop,
    |r| r.hub_node_prop,
    |r| r.sse,
    |r| r.hub_accuracy,
];

pub fn summarize(cfg: &ExperimentConfig, rows: &[MetricsRow]) -> Summary {
    let methods: Vec<MethodSummary> = cfg
        .methods
        .iter()
        .map(|m| {
            let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == m.name()).collect();
            let ok: Vec<&MetricsRow> = mine.iter().copied().filter(|r| !r.is_failure()).collect();
            let avg = |f: Measure| mean(ok.iter().filter_map(|r| f(r)));
            MethodSummary {
                method: m.name().to_string(),
                runs_ok: ok.len(),
                runs_failed: mine.len() - ok.len(),
                correct_edges: avg(MEASURES[0]),
                hub_edge_prop: avg(MEASURES[1]),
                hub_node_prop: avg(MEASURES[2]),
                sse: avg(MEASURES[3]),
                hub_accuracy: avg(MEASURES[4]),
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    if cfg.methods.contains(&Method::Hgl) {
        for m in cfg
            .methods
            .iter()
            .filter(|m| matches!(m, Method::Dhgl | Method::Algorithm1 | Method::Algorithm2))
        {
            let pairs: Vec<(&MetricsRow, &MetricsRow)> = rows
                .iter()
                .filter(|r| r.method == m.name() && !r.is_failure())
                .filter_map(|r| {
                    rows.iter()
                        .find(|b| {
                            b.method == "hgl" && b.replication == r.replication && !b.is_failure()
                        })
                        .map(|b| (r, b))
                })
                .collect();
            let diff = |f: Measure| mean(pairs.iter().filter_map(|(r, b)| Some(f(r)? - f(b)?)));
            comparisons.push(Comparison {
                method: m.name().to_string(),
                baseline: "hgl".to_string(),
                paired_replications: pairs.len(),
                correct_edges_diff: diff(MEASURES[0]),
                hub_edge_prop_diff: diff(MEASURES[1]),
                hub_node_prop_diff: diff(MEASURES[2]),
                sse_diff: diff(MEASURES[3]),
                hub_accuracy_diff: diff(MEASURES[4]),
                sse_not_worse: mean(
                    pairs
                        .iter()
                        .map(|(r, b)| if r.sse <= b.sse { 1.0 } else { 0.0 }),
                ),
            });
        }
    }

    let failed = rows.iter().filter(|r| r.is_failure()).count();
    Summary {
        scenario: cfg.scenario.clone(),
        replications: cfg.replications,
        failure_rate: if rows.is_empty() {
            0.0
        } else {
            failed as f64 / rows.len() as f64
        },
        methods,
        comparisons,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentArtifact {
    pub metrics: Vec<MetricsRow>,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

impl ExperimentArtifact {
    pub fn failure_rate_breached(&self) -> bool {
        self.summary.failure_rate > MAX_FAILURE_RATE
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))
}

/// Runs every replication (in parallel up to `jobs`) and collects rows in
/// replication order.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentArtifact> {
    cfg.validate()?;
    let outcomes: Vec<ReplicationOutcome> = thread_pool(jobs)?.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| run_replication(cfg, i))
            .collect()
    });
    let mut metrics = Vec::new();
    let mut runs = Vec::new();
    for o in outcomes {
        metrics.extend(o.metrics);
        runs.extend(o.runs);
    }
    let summary = summarize(cfg, &metrics);
    Ok(ExperimentArtifact {
        metrics,
        runs,
        summary,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes `metrics.csv`, `summary.json`, `aggregates.csv` (all free of
/// timings, so reruns are byte-identical) and `runs.csv`.
pub fn cmd_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    jobs: Option<usize>,
) -> Result<ExperimentArtifact> {
    let artifact = run_experiment(cfg, jobs)?;
    fs::create_dir_all(out)?;
    write_metrics_csv(
        fs::File::create(out.join("metrics.csv"))?,
        &artifact.metrics,
    )?;
    write_csv(&out.join("runs.csv"), &artifact.runs)?;
    write_csv(&out.join("aggregates.csv"), &artifact.summary.methods)?;
    write_json(&out.join("summary.json"), &artifact.summary)?;
    Ok(artifact)
}

/// Writes the truth matrix with its sidecar and one sample file per
/// replication. Returns the paths written.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let export = |stem: &str, truth: &GroundTruth, seed: u64, written: &mut Vec<PathBuf>| {
        let spec = NetworkSpec {
            seed,
            ..cfg.network.clone()
        };
        export_truth(out, stem, truth, &spec)?;
        written.push(out.join(format!("{stem}.csv")));
        written.push(out.join(format!("{stem}.json")));
        Ok::<_, Error>(())
    };
    let shared = if cfg.resample_truth {
        None
    } else {
        let truth = cfg.truth(0)?;
        export("truth", &truth, cfg.truth_seed(0), &mut written)?;
        Some(truth)
    };
    for i in 0..cfg.replications {
        let truth = match &shared {
            Some(t) => t.clone(),
            None => {
                let t = cfg.truth(i)?;
                export(
                    &format!("truth_{i:03}"),
                    &t,
                    cfg.truth_seed(i),
                    &mut written,
                )?;
                t
            }
        };
        let sample = sample_gaussian(&truth, cfg.n, replication_seed(cfg.seed, i))?;
        let path = out.join(format!("sample_{i:03}.csv"));
        save_matrix(&path, &sample.x)?;
        written.push(path);
    }
    Ok(written)
}

/// Input of `estimate`: a data matrix or a covariance with its sample size.
#[derive(Debug, Clone)]
pub enum EstimateInput {
    Data(PathBuf),
    Covariance { path: PathBuf, n: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    #[serde(flatten)]
    pub estimation: MethodConfig,
    /// Hubs known in advance (0-based), for `dhgl` and `algorithm1`.
    pub known_hubs: BTreeSet<usize>,
}

/// Estimates with one method and writes `result.json` and `hubs.json`.
pub fn cmd_estimate(
    method: Method,
    input: &EstimateInput,
    cfg: &EstimateConfig,
    out: &Path,
) -> Result<Estimate> {
    let (s, n) = match input {
        EstimateInput::Data(path) => {
            let x = load_matrix(path)?;
            (empirical_covariance(&x)?, x.nrows())
        }
        EstimateInput::Covariance { path, n } => {
            let m = load_matrix(path)?;
            let s = SymmetricMatrix::new(m)
                .map_err(|e| Error::MalformedMatrix(format!("{}: {e}", path.display())))?;
            (s, *n)
        }
    };
    let p = s.dim();
    cfg.estimation.validate(p)?;
    if let Some(&k) = cfg.known_hubs.iter().find(|&&k| k >= p) {
        return Err(Error::config(
            "known_hubs",
            format!("index {k} out of range for p = {p}"),
        ));
    }
    let est = &cfg.estimation;
    let fit = if method.needs_hgl() && !(method == Method::Dhgl && est.penalty.is_some()) {
        Some(fit_hgl(&s, n, &est.hgl, &est.settings(est.hgl_bic))?)
    } else {
        None
    };
    let estimate = match (method, &fit) {
        (Method::Dhgl, None) => {
            let pen = est.penalty.clone().expect("checked above");
            let result = solve(&s, &pen, &est.admm)?;
            Estimate {
                method,
                hubs: extract_hubs(&result.theta_hat, &est.extraction),
                total_iterations: result.iterations,
                result,
                discriminated: pen.discriminated().clone(),
                provenance: Some(Provenance::Dhgl),
                penalty: Some(pen),
                gl_lambda: None,
            }
        }
        _ => run_method(method, &s, n, &cfg.known_hubs, fit.as_ref(), est)?,
    };
    fs::create_dir_all(out)?;
    write_json(&out.join("result.json"), &estimate)?;
    write_json(&out.join("hubs.json"), &estimate.hubs)?;
    Ok(estimate)
}

/// How the other problem dimensions follow `p` in a timing run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `n`, `r` and the hub count stay at their base values.
    #[default]
    Fixed,
    /// `n`, `r` and the hub count grow in proportion to `p / base_p`.
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub scaling: Scaling,
    pub base_p: usize,
    pub n: usize,
    pub r: usize,
    pub hub_count: usize,
    pub known_hubs: usize,
    pub replications: usize,
    /// Undiscriminated penalties.
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Discriminated penalties.
    pub lambda4: f64,
    pub lambda5: f64,
    pub network: NetworkSpec,
    pub admm: AdmmConfig,
    pub edge_tolerance: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![75, 150, 300],
            scaling: Scaling::Fixed,
            base_p: 150,
            n: 50,
            r: 30,
            hub_count: 5,
            known_hubs: 2,
            replications: 5,
            lambda1: 0.4,
            lambda2: 0.4,
            lambda3: 1.0,
            lambda4: 0.2,
            lambda5: 0.1,
            network: NetworkSpec::default(),
            admm: AdmmConfig::default(),
            edge_tolerance: 0.005,
            seed: 0,
        }
    }
}

/// One line of the timing table: averages over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub p: usize,
    pub n: usize,
    pub r: usize,
    pub hubs: usize,
    pub method: String,
    pub run_time: Option<f64>,
    pub iterations: Option<f64>,
    pub time_per_iteration: Option<f64>,
    /// Number of replications in which the method ran.
    pub runs: usize,
}

impl BenchConfig {
    fn dims(&self, p: usize) -> (usize, usize, usize) {
        match self.scaling {
            Scaling::Fixed => (self.n, self.r, self.hub_count),
            Scaling::Proportional => {
                let scale = |x: usize| ((x * p) as f64 / self.base_p as f64).round() as usize;
                (
                    scale(self.n).max(2),
                    scale(self.r).max(1),
                    scale(self.hub_count),
                )
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::config("sizes", "list is empty"));
        }
        if self.replications < 1 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        self.admm.validate()?;
        PenaltyConfig::new(
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            [],
        )?;
        for &p in &self.sizes {
            let (n, r, hubs) = self.dims(p);
            if n < 2 || hubs >= p || r + 1 > p || self.known_hubs > hubs {
                return Err(Error::config(
                    "sizes",
                    format!("p = {p} gives an invalid (n, r, hubs) = ({n}, {r}, {hubs})"),
                ));
            }
        }
        Ok(())
    }
}

/// Times the undiscriminated and discriminated solves for each size,
/// serially. The discriminated solve runs only when a known hub was missed.
pub fn cmd_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &p in &cfg.sizes {
        let (n, r, hub_count) = cfg.dims(p);
        let extraction = HubExtractionConfig {
            t: cfg.edge_tolerance,
            r,
        };
        let hgl = PenaltyConfig::hgl(cfg.lambda1, cfg.lambda2, cfg.lambda3)?;
        let mut hgl_runs: Vec<(f64, usize)> = Vec::new();
        let mut dhgl_runs: Vec<(f64, usize)> = Vec::new();
        for rep in 0..cfg.replications {
            let seed = replication_seed(cfg.seed ^ p as u64, rep);
            let truth = generate_truth(&NetworkSpec {
                p,
                hub_count,
                seed,
                ..cfg.network.clone()
            })?;
            let sample = sample_gaussian(&truth, n, seed)?;
            let s = empirical_covariance(&sample.x)?;

            let started = Instant::now();
            let fit = solve(&s, &hgl, &cfg.admm)?;
            hgl_runs.push((started.elapsed().as_secs_f64(), fit.iterations));

            let known = choose_known_hubs(&truth, cfg.known_hubs, seed)?;
            let found = extract_hubs(&fit.theta_hat, &extraction);
            let discriminated: BTreeSet<usize> = known.difference(&found).copied().collect();
            if discriminated.is_empty() {
                continue;
            }
            let pen = PenaltyConfig::new(
                cfg.lambda1,
                cfg.lambda2,
                cfg.lambda3,
                cfg.lambda4,
                cfg.lambda5,
                discriminated,
            )?;
            let started = Instant::now();
            let fit = solve(&s, &pen, &cfg.admm)?;
            dhgl_runs.push((started.elapsed().as_secs_f64(), fit.iterations));
        }
        for (method, runs) in [("hgl", &hgl_runs), ("dhgl", &dhgl_runs)] {
            let time = mean(runs.iter().map(|r| r.0));
            let iterations = mean(runs.iter().map(|r| r.1 as f64));
            rows.push(BenchRow {
                p,
                n,
                r,
                hubs: hub_count,
                method: method.to_string(),
                run_time: time,
                iterations,
                time_per_iteration: mean(runs.iter().map(|r| r.0 / r.1.max(1) as f64)),
                runs: runs.len(),
            });
        }
    }
    Ok(rows)
}

/// Renders the timing table as aligned text.
pub fn format_bench_table(rows: &[BenchRow]) -> String {
    let fmt_opt = |x: Option<f64>, prec: usize| match x {
        Some(v) => format!("{v:.prec$}"),
        None => "-".to_string(),
    };
    let mut out = format!(
        "{:>5} {:>5} {:>4} {:>4} {:>6} {:>10} {:>10} {:>12} {:>5}\n",
        "p", "n", "r", "hubs", "method", "run_time", "iterations", "time/iter", "runs"
    );
    for r in rows {
        out += &format!(
            "{:>5} {:>5} {:>4} {:>4} {:>6} {:>10} {:>10} {:>12} {:>5}\n",
            r.p,
            r.n,
            r.r,
            r.hubs,
            r.method,
            fmt_opt(r.run_time, 3),
            fmt_opt(r.iterations, 1),
            fmt_opt(r.time_per_iteration, 6),
            r.runs
        );
    }
    out
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    write_csv(path, rows)
}

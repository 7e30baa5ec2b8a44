//! Edge and hub recovery measures against a known precision matrix.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::workflows::{extract_hubs, HubExtractionConfig};

pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub theta: SymmetricMatrix,
    pub hubs: BTreeSet<usize>,
}

impl GroundTruth {
    pub fn new(theta: SymmetricMatrix, hubs: impl IntoIterator<Item = usize>) -> Result<Self> {
        let hubs: BTreeSet<usize> = hubs.into_iter().collect();
        let p = theta.dim();
        if let Some(&h) = hubs.iter().find(|&&h| h >= p) {
            return Err(Error::config(
                "hubs",
                format!("index {h} out of range for p = {p}"),
            ));
        }
        Ok(GroundTruth { theta, hubs })
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }
}

/// Unordered pairs `(i, j)`, `i < j`, with an exactly nonzero entry.
pub fn true_edges(truth: &GroundTruth) -> BTreeSet<Edge> {
    edges_where(&truth.theta, |x| x != 0.0)
}

/// True edges touching a true hub.
pub fn true_hub_edges(truth: &GroundTruth) -> BTreeSet<Edge> {
    true_edges(truth)
        .into_iter()
        .filter(|e| is_hub_edge(e, &truth.hubs))
        .collect()
}

/// Unordered pairs with `|entry| > t`.
pub fn estimated_edges(theta_hat: &SymmetricMatrix, t: f64) -> BTreeSet<Edge> {
    edges_where(theta_hat, |x| x.abs() > t)
}

fn edges_where(m: &SymmetricMatrix, keep: impl Fn(f64) -> bool) -> BTreeSet<Edge> {
    let p = m.dim();
    let mut out = BTreeSet::new();
    for j in 0..p {
        for i in 0..j {
            if keep(m[(i, j)]) {
                out.insert((i, j));
            }
        }
    }
    out
}

fn is_hub_edge(e: &Edge, hubs: &BTreeSet<usize>) -> bool {
    hubs.contains(&e.0) || hubs.contains(&e.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub correct_edges: usize,
    pub hub_edge_proportion: f64,
    pub hub_node_proportion: f64,
    pub sse: f64,
    pub hub_accuracy: f64,
    /// Hub-node measures exclude `excluded` (the known hubs).
    pub effective: bool,
    pub excluded: BTreeSet<usize>,
    /// Set when a proportion had an empty denominator and was reported as 1.
    pub vacuous: VacuousFlags,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VacuousFlags {
    pub hub_edges: bool,
    pub hub_nodes: bool,
    pub accuracy: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Scores an estimate. Nodes in `exclude` are dropped from the hub-node
/// proportion and the accuracy; edge measures and SSE always use every node.
pub fn score(
    theta_hat: &SymmetricMatrix,
    truth: &GroundTruth,
    extraction: &HubExtractionConfig,
    exclude: &BTreeSet<usize>,
) -> Result<MetricsRecord> {
    let p = truth.dim();
    if theta_hat.dim() != p {
        return Err(Error::dims(p, theta_hat.dim()));
    }
    if let Some(&k) = exclude.iter().find(|&&k| k >= p) {
        return Err(Error::config(
            "exclude",
            format!("index {k} out of range for p = {p}"),
        ));
    }

    let truth_e = true_edges(truth);
    let est_e = estimated_edges(theta_hat, extraction.t);
    let correct_edges = est_e.intersection(&truth_e).count();

    let truth_hub_e: BTreeSet<Edge> = truth_e
        .iter()
        .filter(|e| is_hub_edge(e, &truth.hubs))
        .copied()
        .collect();
    let hub_hits = est_e.intersection(&truth_hub_e).count();
    let (hub_edge_proportion, vac_edges) = ratio(hub_hits, truth_hub_e.len());

    let est_hubs = extract_hubs(theta_hat, extraction);
    let counted = |j: &usize| !exclude.contains(j);
    let true_hubs_counted = truth.hubs.iter().filter(|j| counted(j)).count();
    let hubs_found = truth
        .hubs
        .iter()
        .filter(|j| counted(j) && est_hubs.contains(j))
        .count();
    let (hub_node_proportion, vac_nodes) = ratio(hubs_found, true_hubs_counted);

    let population: Vec<usize> = (0..p).filter(counted).collect();
    let correct_class = population
        .iter()
        .filter(|j| truth.hubs.contains(j) == est_hubs.contains(j))
        .count();
    let (hub_accuracy, vac_acc) = ratio(correct_class, population.len());

    let sse = (theta_hat.as_matrix() - truth.theta.as_matrix()).norm_squared();

    Ok(MetricsRecord {
        correct_edges,
        hub_edge_proportion,
        hub_node_proportion,
        sse,
        hub_accuracy,
        effective: !exclude.is_empty(),
        excluded: exclude.clone(),
        vacuous: VacuousFlags {
            hub_edges: vac_edges,
            hub_nodes: vac_nodes,
            accuracy: vac_acc,
        },
    })
}

/// One line of the metrics CSV. Measure columns are empty on failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub replication: usize,
    pub method: String,
    pub correct_edges: Option<usize>,
    pub hub_edge_prop: Option<f64>,
    pub hub_node_prop: Option<f64>,
    pub sse: Option<f64>,
    pub hub_accuracy: Option<f64>,
    pub effective: bool,
    pub seed: u64,
}

impl MetricsRow {
    pub fn scored(replication: usize, method: &str, seed: u64, m: &MetricsRecord) -> Self {
        MetricsRow {
            replication,
            method: method.to_string(),
            correct_edges: Some(m.correct_edges),
            hub_edge_prop: Some(m.hub_edge_proportion),
            hub_node_prop: Some(m.hub_node_proportion),
            sse: Some(m.sse),
            hub_accuracy: Some(m.hub_accuracy),
            effective: m.effective,
            seed,
        }
    }

    pub fn failed(replication: usize, method: &str, seed: u64, effective: bool) -> Self {
        MetricsRow {
            replication,
            method: method.to_string(),
            correct_edges: None,
            hub_edge_prop: None,
            hub_node_prop: None,
            sse: None,
            hub_accuracy: None,
            effective,
            seed,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.sse.is_none()
    }
}

pub fn write_metrics_csv<W: std::io::Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

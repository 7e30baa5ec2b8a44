//! Synthetic hub networks and Gaussian samples.
//!
//! The defaults reconstruct the usual "set-up I" hub simulation: sparse
//! background edges, dense hub rows, magnitudes uniform on
//! `[-0.75, -0.25] U [0.25, 0.75]`, and a diagonal shift making the smallest
//! eigenvalue equal to the boost. They are configuration, not a contract.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::GroundTruth;
use crate::linalg::{cholesky, save_matrix, sym_eigen, GeneralMatrix, SymmetricMatrix};

const TRUTH_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const KNOWN_HUB_STREAM: u64 = 2;
const REPLICATION_STREAM_BASE: u64 = 3;
const MAX_BOOST_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    pub p: usize,
    pub hub_count: usize,
    pub background_edge_prob: f64,
    pub hub_edge_prob: f64,
    pub edge_magnitude_range: (f64, f64),
    pub diagonal_boost: f64,
    pub seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            p: 150,
            hub_count: 5,
            background_edge_prob: 0.02,
            hub_edge_prob: 0.7,
            edge_magnitude_range: (0.25, 0.75),
            diagonal_boost: 0.1,
            seed: 0,
        }
    }
}

impl NetworkSpec {
    pub fn new(p: usize, hub_count: usize, seed: u64) -> Self {
        NetworkSpec {
            p,
            hub_count,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::config("network.p", "must be positive"));
        }
        if self.hub_count >= self.p {
            return Err(Error::config("network.hub_count", "must be smaller than p"));
        }
        for (name, prob) in [
            ("network.background_edge_prob", self.background_edge_prob),
            ("network.hub_edge_prob", self.hub_edge_prob),
        ] {
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        let (low, high) = self.edge_magnitude_range;
        if !(low > 0.0 && low <= high && high.is_finite()) {
            return Err(Error::config(
                "network.edge_magnitude_range",
                "need 0 < low <= high < inf",
            ));
        }
        if !(self.diagonal_boost > 0.0 && self.diagonal_boost.is_finite()) {
            return Err(Error::config("network.diagonal_boost", "must be positive"));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replication `index` under `root`; distinct indices use distinct
/// ChaCha streams so parallel replications never share randomness.
pub fn replication_seed(root: u64, index: usize) -> u64 {
    stream_rng(root, REPLICATION_STREAM_BASE + index as u64).next_u64()
}

/// Draws a hub network and its positive definite precision matrix.
pub fn generate_truth(spec: &NetworkSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let p = spec.p;
    let mut rng = stream_rng(spec.seed, TRUTH_STREAM);

    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let hubs: BTreeSet<usize> = order[..spec.hub_count].iter().copied().collect();

    // adjacency per unordered pair, magnitudes per ordered pair, then averaged
    let (low, high) = spec.edge_magnitude_range;
    let mut e = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        for i in 0..j {
            let prob = if hubs.contains(&i) || hubs.contains(&j) {
                spec.hub_edge_prob
            } else {
                spec.background_edge_prob
            };
            if rng.random_bool(prob) {
                for (a, b) in [(i, j), (j, i)] {
                    let magnitude = rng.random_range(low..=high);
                    e[(a, b)] = if rng.random_bool(0.5) {
                        magnitude
                    } else {
                        -magnitude
                    };
                }
            }
        }
    }
    let e_bar = SymmetricMatrix::symmetrize_square(&e);

    let shift = (-sym_eigen(&e_bar)?.min_value()).max(0.0);
    let mut boost = spec.diagonal_boost;
    for attempt in 0..=MAX_BOOST_RETRIES {
        let mut theta = e_bar.clone().into_inner();
        for j in 0..p {
            theta[(j, j)] = shift + boost;
        }
        let theta = SymmetricMatrix::assume_symmetric(theta);
        match cholesky(&theta) {
            Ok(_) => return GroundTruth::new(theta, hubs),
            Err(err) if attempt == MAX_BOOST_RETRIES => return Err(err),
            Err(_) => {
                log::debug!("diagonal boost {boost} not enough, doubling");
                boost *= 2.0;
            }
        }
    }
    unreachable!("loop returns on its last attempt")
}

/// `count` true hubs drawn without replacement, as when a few hubs are known
/// in advance.
pub fn choose_known_hubs(truth: &GroundTruth, count: usize, seed: u64) -> Result<BTreeSet<usize>> {
    if count > truth.hubs.len() {
        return Err(Error::config(
            "known_hubs",
            format!(
                "asked for {count} but the network has {} hubs",
                truth.hubs.len()
            ),
        ));
    }
    let mut rng = stream_rng(seed, KNOWN_HUB_STREAM);
    Ok(truth
        .hubs
        .iter()
        .copied()
        .choose_multiple(&mut rng, count)
        .into_iter()
        .collect())
}

/// `n` draws from `N(0, theta^{-1})` together with the truth that produced them.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: GeneralMatrix,
    pub truth: GroundTruth,
    pub seed: u64,
}

/// Rows are `L^{-T} z` with `L L^T = theta` and `z` standard normal.
pub fn sample_gaussian(truth: &GroundTruth, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::config("n", "need at least one observation"));
    }
    let p = truth.dim();
    let l = cholesky(&truth.theta)?;
    let mut rng = stream_rng(seed, NOISE_STREAM);
    // column k of z is observation k
    let z = DMatrix::<f64>::from_fn(p, n, |_, _| rng.sample(StandardNormal));
    let solved = l
        .tr_solve_lower_triangular(&z)
        .ok_or(Error::NotPositiveDefinite {
            pivot: 0,
            value: 0.0,
        })?;
    Ok(Sample {
        x: solved.transpose(),
        truth: truth.clone(),
        seed,
    })
}

/// JSON written next to an exported truth matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub hubs: Vec<usize>,
    pub spec: NetworkSpec,
    pub seed: u64,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn export_truth(dir: &Path, stem: &str, truth: &GroundTruth, spec: &NetworkSpec) -> Result<()> {
    save_matrix(&dir.join(format!("{stem}.csv")), truth.theta.as_matrix())?;
    let sidecar = TruthSidecar {
        hubs: truth.hubs.iter().copied().collect(),
        spec: spec.clone(),
        seed: spec.seed,
    };
    let text = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(dir.join(format!("{stem}.json")), text + "\n")?;
    Ok(())
}

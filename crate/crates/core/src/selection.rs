//! BIC-type model selection over a grid of tuning parameters.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{solve, AdmmConfig, SolveResult};
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::penalty::{classify_lambda_region, gaussian_loss, PenaltyConfig, Region};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BicConfig {
    /// Discount on within-hub edges, in `(0, 1)`.
    pub c: f64,
    /// Entries with magnitude at or below this count as zero.
    pub count_tolerance: f64,
}

impl Default for BicConfig {
    fn default() -> Self {
        BicConfig {
            c: 0.2,
            count_tolerance: 1e-6,
        }
    }
}

impl BicConfig {
    pub fn with_c(c: f64) -> Self {
        BicConfig {
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::config(
                "bic.c",
                format!("must lie in (0, 1), got {}", self.c),
            ));
        }
        if !(self.count_tolerance >= 0.0) {
            return Err(Error::config("bic.count_tolerance", "must be >= 0"));
        }
        Ok(())
    }
}

/// Nonzero counts entering the complexity terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportCounts {
    /// Upper-triangle off-diagonal nonzeros of `Z`.
    pub z_edges: usize,
    /// Off-diagonal nonzeros of `V` (all of them; `V` is not symmetric).
    pub v_entries: usize,
    /// Columns of `V` with more than one nonzero, diagonal included.
    pub hubs: usize,
}

pub fn support_counts(result: &SolveResult, tolerance: f64) -> SupportCounts {
    let p = result.dim();
    let nz = |x: f64| x.abs() > tolerance;
    let mut z_edges = 0;
    let mut v_entries = 0;
    let mut hubs = 0;
    for j in 0..p {
        let mut column_nnz = 0;
        for i in 0..p {
            let v = result.v_hat[(i, j)];
            if nz(v) {
                column_nnz += 1;
                if i != j {
                    v_entries += 1;
                }
            }
            if i < j && nz(result.z_hat[(i, j)]) {
                z_edges += 1;
            }
        }
        if column_nnz > 1 {
            hubs += 1;
        }
    }
    SupportCounts {
        z_edges,
        v_entries,
        hubs,
    }
}

/// `-n log det Theta + n trace(S Theta) + log(n) |Z| + log(n) (nu + c (|V| - nu))`.
pub fn bic(result: &SolveResult, s: &SymmetricMatrix, n: usize, cfg: &BicConfig) -> Result<f64> {
    if n < 2 {
        return Err(Error::DegenerateSample { n });
    }
    if s.dim() != result.dim() {
        return Err(Error::dims(result.dim(), s.dim()));
    }
    let counts = support_counts(result, cfg.count_tolerance);
    Ok(bic_from_parts(
        gaussian_loss(s, &result.theta_hat)?,
        counts,
        n,
        cfg.c,
    ))
}

fn bic_from_parts(loss: f64, counts: SupportCounts, n: usize, c: f64) -> f64 {
    let nf = n as f64;
    let log_n = nf.ln();
    let nu = counts.hubs as f64;
    nf * loss + log_n * counts.z_edges as f64 + log_n * (nu + c * (counts.v_entries as f64 - nu))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl From<OneOrMany> for Vec<f64> {
    fn from(v: OneOrMany) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Ok(OneOrMany::deserialize(d)?.into())
}

fn opt_one_or_many<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<Vec<f64>>, D::Error> {
    Ok(Option::<OneOrMany>::deserialize(d)?.map(Into::into))
}

/// What to do with grid points outside the region where both `V` and `Z`
/// can be non-diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionPolicy {
    #[default]
    Warn,
    Reject,
}

/// Candidate values per tuning parameter.
///
/// `lambda4` / `lambda5` left unset track `lambda2` / `lambda3` at every
/// grid point. In JSON every list may also be written as a bare number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec")]
pub struct GridSpec {
    lambda1: Vec<f64>,
    lambda2: Vec<f64>,
    lambda3: Vec<f64>,
    lambda4: Option<Vec<f64>>,
    lambda5: Option<Vec<f64>>,
    discriminated: BTreeSet<usize>,
    region_policy: RegionPolicy,
}

#[derive(Deserialize)]
struct RawGridSpec {
    #[serde(deserialize_with = "one_or_many")]
    lambda1: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    lambda2: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    lambda3: Vec<f64>,
    #[serde(default, deserialize_with = "opt_one_or_many")]
    lambda4: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "opt_one_or_many")]
    lambda5: Option<Vec<f64>>,
    #[serde(default)]
    discriminated: BTreeSet<usize>,
    #[serde(default)]
    region_policy: RegionPolicy,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;

    fn try_from(r: RawGridSpec) -> Result<Self> {
        GridSpec::new(r.lambda1, r.lambda2, r.lambda3, r.lambda4, r.lambda5).map(|g| {
            g.with_discriminated(r.discriminated)
                .with_region_policy(r.region_policy)
        })
    }
}

impl GridSpec {
    pub fn new(
        lambda1: Vec<f64>,
        lambda2: Vec<f64>,
        lambda3: Vec<f64>,
        lambda4: Option<Vec<f64>>,
        lambda5: Option<Vec<f64>>,
    ) -> Result<Self> {
        for (name, list) in [
            ("lambda1", Some(&lambda1)),
            ("lambda2", Some(&lambda2)),
            ("lambda3", Some(&lambda3)),
            ("lambda4", lambda4.as_ref()),
            ("lambda5", lambda5.as_ref()),
        ] {
            if list.is_some_and(|l| l.is_empty()) {
                return Err(Error::config(
                    format!("grid.{name}"),
                    "candidate list is empty",
                ));
            }
        }
        let grid = GridSpec {
            lambda1,
            lambda2,
            lambda3,
            lambda4,
            lambda5,
            discriminated: BTreeSet::new(),
            region_policy: RegionPolicy::Warn,
        };
        // every combination must be a valid penalty
        grid.points()?;
        Ok(grid)
    }

    /// A single grid point.
    pub fn fixed(cfg: &PenaltyConfig) -> Self {
        GridSpec {
            lambda1: vec![cfg.lambda1()],
            lambda2: vec![cfg.lambda2()],
            lambda3: vec![cfg.lambda3()],
            lambda4: Some(vec![cfg.lambda4()]),
            lambda5: Some(vec![cfg.lambda5()]),
            discriminated: cfg.discriminated().clone(),
            region_policy: RegionPolicy::Warn,
        }
    }

    /// `lambda1..lambda3` from `base`, `lambda4` and `lambda5` from the lists.
    pub fn over_lambda45(
        base: &PenaltyConfig,
        lambda4: Vec<f64>,
        lambda5: Vec<f64>,
    ) -> Result<Self> {
        GridSpec::new(
            vec![base.lambda1()],
            vec![base.lambda2()],
            vec![base.lambda3()],
            Some(lambda4),
            Some(lambda5),
        )
    }

    pub fn with_discriminated(mut self, discriminated: impl IntoIterator<Item = usize>) -> Self {
        self.discriminated = discriminated.into_iter().collect();
        self
    }

    pub fn with_region_policy(mut self, policy: RegionPolicy) -> Self {
        self.region_policy = policy;
        self
    }

    pub fn discriminated(&self) -> &BTreeSet<usize> {
        &self.discriminated
    }

    /// Cartesian product of the candidate lists, `lambda1` varying slowest.
    pub fn points(&self) -> Result<Vec<PenaltyConfig>> {
        let mut out = Vec::new();
        for &l1 in &self.lambda1 {
            for &l2 in &self.lambda2 {
                for &l3 in &self.lambda3 {
                    let l4s = self.lambda4.clone().unwrap_or_else(|| vec![l2]);
                    let l5s = self.lambda5.clone().unwrap_or_else(|| vec![l3]);
                    for &l4 in &l4s {
                        for &l5 in &l5s {
                            out.push(PenaltyConfig::new(
                                l1,
                                l2,
                                l3,
                                l4,
                                l5,
                                self.discriminated.iter().copied(),
                            )?);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Chosen grid point with every evaluated `(point, bic)` pair.
#[derive(Debug, Clone)]
pub struct GridSelection {
    pub penalty: PenaltyConfig,
    pub result: SolveResult,
    pub bic: f64,
    pub evaluated: Vec<(PenaltyConfig, f64)>,
}

/// `Less` when `a` should win a BIC tie: larger total penalty first, then
/// the lexicographically larger `(lambda1, .., lambda5)`.
fn tie_order(a: &PenaltyConfig, b: &PenaltyConfig) -> Ordering {
    let sum = |c: &PenaltyConfig| c.lambdas().iter().sum::<f64>();
    sum(b).total_cmp(&sum(a)).then_with(|| {
        b.lambdas()
            .iter()
            .zip(a.lambdas().iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Solves every grid point independently and keeps the smallest BIC.
///
/// Points whose solve fails are skipped with a warning; an error is returned
/// only if none succeeds.
pub fn grid_select(
    s: &SymmetricMatrix,
    n: usize,
    grid: &GridSpec,
    admm: &AdmmConfig,
    bic_cfg: &BicConfig,
) -> Result<GridSelection> {
    bic_cfg.validate()?;
    admm.validate()?;
    let p = s.dim();
    let mut points = grid.points()?;
    if p >= 2 {
        let mut kept = Vec::with_capacity(points.len());
        for cfg in points {
            let verdict = classify_lambda_region(&cfg, p)?;
            if verdict.classification != Region::Interior {
                match grid.region_policy {
                    RegionPolicy::Warn => log::warn!(
                        "grid point {:?} lies in region {:?} (bounds {:.4}..{:.4})",
                        cfg.lambdas(),
                        verdict.classification,
                        verdict.lower_bound,
                        verdict.upper_bound
                    ),
                    RegionPolicy::Reject => continue,
                }
            }
            kept.push(cfg);
        }
        points = kept;
    }

    let outcomes: Vec<Option<(PenaltyConfig, SolveResult, f64)>> = points
        .into_par_iter()
        .map(|cfg| {
            let scored = solve(s, &cfg, admm).and_then(|r| {
                let b = bic(&r, s, n, bic_cfg)?;
                Ok((r, b))
            });
            match scored {
                Ok((r, b)) => Some((cfg, r, b)),
                Err(e) => {
                    log::warn!("grid point {:?} skipped: {e}", cfg.lambdas());
                    None
                }
            }
        })
        .collect();

    let evaluated: Vec<(PenaltyConfig, f64)> = outcomes
        .iter()
        .flatten()
        .map(|(c, _, b)| (c.clone(), *b))
        .collect();
    let (penalty, result, bic) = outcomes
        .into_iter()
        .flatten()
        .min_by(|a, b| a.2.total_cmp(&b.2).then_with(|| tie_order(&a.0, &b.0)))
        .ok_or(Error::NoFeasibleGridPoint)?;
    Ok(GridSelection {
        penalty,
        result,
        bic,
        evaluated,
    })
}

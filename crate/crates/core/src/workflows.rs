//! Hub extraction, the graphical lasso baseline, and the two estimation
//! procedures built on the discriminated penalty: one for known hubs and one
//! that screens for candidate hubs along a graphical lasso path.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::admm::{solve_graphical_lasso, AdmmConfig, SolveResult};
use crate::error::{Error, Result};
use crate::linalg::{empirical_covariance, GeneralMatrix, SymmetricMatrix};
use crate::penalty::PenaltyConfig;
use crate::selection::{bic, grid_select, BicConfig, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HubExtractionConfig {
    /// An entry counts as an edge when `|entry| > t`.
    pub t: f64,
    /// Minimum degree of an estimated hub.
    pub r: usize,
}

impl Default for HubExtractionConfig {
    fn default() -> Self {
        HubExtractionConfig { t: 0.005, r: 30 }
    }
}

impl HubExtractionConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::config("extraction.t", "must be positive"));
        }
        if self.r < 1 || self.r + 1 > p.max(2) {
            return Err(Error::config(
                "extraction.r",
                format!("must lie in 1..={} for p = {p}", p.saturating_sub(1)),
            ));
        }
        Ok(())
    }
}

/// Nodes with at least `r` entries `|theta_jk| > t`, `k != j`.
pub fn extract_hubs(theta: &SymmetricMatrix, cfg: &HubExtractionConfig) -> BTreeSet<usize> {
    let p = theta.dim();
    (0..p)
        .filter(|&j| {
            let degree = (0..p)
                .filter(|&k| k != j && theta[(k, j)].abs() > cfg.t)
                .count();
            degree >= cfg.r
        })
        .collect()
}

/// Graphical lasso through the dedicated two-block ADMM.
pub fn run_gl(s: &SymmetricMatrix, lambda: f64, admm: &AdmmConfig) -> Result<SolveResult> {
    solve_graphical_lasso(s, lambda, admm)
}

/// Graphical lasso with the penalty chosen by BIC among `lambdas`; ties go to
/// the larger penalty.
pub fn fit_gl(
    s: &SymmetricMatrix,
    n: usize,
    lambdas: &[f64],
    admm: &AdmmConfig,
    bic_cfg: &BicConfig,
) -> Result<(f64, SolveResult)> {
    let mut best: Option<(f64, SolveResult, f64)> = None;
    for &lambda in lambdas {
        let fit = match run_gl(s, lambda, admm) {
            Ok(fit) => fit,
            Err(e) => {
                log::warn!("graphical lasso at {lambda} skipped: {e}");
                continue;
            }
        };
        let score = bic(&fit, s, n, bic_cfg)?;
        let better = match &best {
            None => true,
            Some((l, _, b)) => score < *b || (score == *b && lambda > *l),
        };
        if better {
            best = Some((lambda, fit, score));
        }
    }
    best.map(|(l, fit, _)| (l, fit))
        .ok_or(Error::NoFeasibleGridPoint)
}

/// `count` log-spaced values from the largest off-diagonal `|S_ij|` down to
/// `0.01` of it. Empty when `S` is diagonal.
pub fn default_lambda_path(s: &SymmetricMatrix, count: usize) -> Vec<f64> {
    let p = s.dim();
    let mut top = 0.0f64;
    for j in 0..p {
        for i in 0..j {
            top = top.max(s[(i, j)].abs());
        }
    }
    if top == 0.0 || count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![top];
    }
    let (hi, lo) = (top.ln(), (0.01 * top).ln());
    (0..count)
        .map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    /// Additive slack on the number of hubs after screening.
    pub a: usize,
    /// Multiplicative slack on the number of hubs after screening.
    pub b: f64,
    /// Descending graphical lasso penalties; `None` uses [`default_lambda_path`].
    pub lambda_path: Option<Vec<f64>>,
    /// Length of the default path.
    pub path_length: usize,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            a: 2,
            b: 1.1,
            lambda_path: None,
            path_length: 20,
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a < 1 {
            return Err(Error::config("screening.a", "must be >= 1"));
        }
        if !(self.b > 1.0) {
            return Err(Error::config("screening.b", "must be > 1"));
        }
        if let Some(path) = &self.lambda_path {
            if path.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::config(
                    "screening.lambda_path",
                    "values must be finite and >= 0",
                ));
            }
            if path.windows(2).any(|w| !(w[0] > w[1])) {
                return Err(Error::config(
                    "screening.lambda_path",
                    "must be strictly descending",
                ));
            }
        }
        Ok(())
    }

    /// Largest hub set size the screening step accepts.
    pub fn cap(&self, hgl_hubs: usize) -> usize {
        let scaled = (self.b * hgl_hubs as f64).floor() as usize;
        (hgl_hubs + self.a).max(scaled)
    }

    fn path(&self, s: &SymmetricMatrix) -> Vec<f64> {
        self.lambda_path
            .clone()
            .unwrap_or_else(|| default_lambda_path(s, self.path_length))
    }
}

/// Candidate `(lambda4, lambda5)` values for the discriminated columns, as
/// fractions of the selected `lambda2` and `lambda3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationGrid {
    pub lambda4_scale: Vec<f64>,
    pub lambda5_scale: Vec<f64>,
}

impl DiscriminationGrid {
    /// Default grid for known hubs.
    pub fn known_hubs() -> Self {
        DiscriminationGrid {
            lambda4_scale: vec![0.25, 0.5, 0.75],
            lambda5_scale: vec![0.1, 0.25, 0.5],
        }
    }

    /// Default grid for screened hubs: `lambda4 = lambda2`, six `lambda5`
    /// values from half of `lambda3` up to `lambda3`.
    pub fn screened() -> Self {
        DiscriminationGrid {
            lambda4_scale: vec![1.0],
            lambda5_scale: (0..6).map(|k| 0.5 + 0.1 * k as f64).collect(),
        }
    }

    pub fn fixed(lambda4_scale: f64, lambda5_scale: f64) -> Self {
        DiscriminationGrid {
            lambda4_scale: vec![lambda4_scale],
            lambda5_scale: vec![lambda5_scale],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("lambda4_scale", &self.lambda4_scale),
            ("lambda5_scale", &self.lambda5_scale),
        ] {
            if list.is_empty() {
                return Err(Error::config(name, "candidate list is empty"));
            }
            if list.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::config(name, "fractions must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn grid(&self, base: &PenaltyConfig, discriminated: &BTreeSet<usize>) -> Result<GridSpec> {
        self.validate()?;
        let scaled = |scales: &[f64], of: f64| -> Vec<f64> {
            // clamp guards against 1.0 * x rounding above x
            scales.iter().map(|f| (f * of).min(of)).collect()
        };
        Ok(GridSpec::over_lambda45(
            base,
            scaled(&self.lambda4_scale, base.lambda2()),
            scaled(&self.lambda5_scale, base.lambda3()),
        )?
        .with_discriminated(discriminated.iter().copied()))
    }
}

/// Configuration shared by both procedures.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowSettings {
    pub admm: AdmmConfig,
    pub extraction: HubExtractionConfig,
    /// Used when the undiscriminated fit is tuned over more than one point.
    pub hgl_bic: BicConfig,
    /// Used when choosing the discriminated penalties.
    pub dhgl_bic: BicConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    HglOnly,
    Dhgl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkflowResult {
    pub estimate: SolveResult,
    pub hubs: BTreeSet<usize>,
    pub discriminated: BTreeSet<usize>,
    pub provenance: Provenance,
    pub penalty: PenaltyConfig,
    pub hgl_penalty: PenaltyConfig,
    pub hgl_hubs: BTreeSet<usize>,
    /// Graphical lasso penalty at which screening stopped.
    pub screening_lambda: Option<f64>,
}

/// Undiscriminated fit shared by both procedures.
#[derive(Debug, Clone)]
pub struct HglFit {
    pub penalty: PenaltyConfig,
    pub result: SolveResult,
    pub hubs: BTreeSet<usize>,
}

/// Fits the undiscriminated model, choosing among `hgl` points by BIC.
pub fn fit_hgl(
    s: &SymmetricMatrix,
    n: usize,
    hgl: &GridSpec,
    settings: &WorkflowSettings,
) -> Result<HglFit> {
    if !hgl.discriminated().is_empty() {
        return Err(Error::config("hgl.discriminated", "must be empty"));
    }
    settings.extraction.validate(s.dim())?;
    let sel = grid_select(s, n, hgl, &settings.admm, &settings.hgl_bic)?;
    let hubs = extract_hubs(&sel.result.theta_hat, &settings.extraction);
    Ok(HglFit {
        penalty: sel.penalty,
        result: sel.result,
        hubs,
    })
}

fn hgl_only(fit: HglFit) -> WorkflowResult {
    WorkflowResult {
        estimate: fit.result,
        hubs: fit.hubs.clone(),
        discriminated: BTreeSet::new(),
        provenance: Provenance::HglOnly,
        penalty: fit.penalty.clone(),
        hgl_penalty: fit.penalty,
        hgl_hubs: fit.hubs,
        screening_lambda: None,
    }
}

/// Known-hub procedure: discriminate the known hubs the plain fit missed and
/// report the union of both hub sets.
pub fn algorithm1_known_hubs(
    s: &SymmetricMatrix,
    n: usize,
    known: &BTreeSet<usize>,
    hgl: &GridSpec,
    grid45: &DiscriminationGrid,
    settings: &WorkflowSettings,
) -> Result<WorkflowResult> {
    let fit = fit_hgl(s, n, hgl, settings)?;
    algorithm1_with_fit(s, n, known, fit, grid45, settings)
}

/// [`algorithm1_known_hubs`] starting from an existing undiscriminated fit.
pub fn algorithm1_with_fit(
    s: &SymmetricMatrix,
    n: usize,
    known: &BTreeSet<usize>,
    fit: HglFit,
    grid45: &DiscriminationGrid,
    settings: &WorkflowSettings,
) -> Result<WorkflowResult> {
    let p = s.dim();
    if let Some(&k) = known.iter().find(|&&k| k >= p) {
        return Err(Error::config(
            "known_hubs",
            format!("index {k} out of range for p = {p}"),
        ));
    }
    let discriminated: BTreeSet<usize> = known.difference(&fit.hubs).copied().collect();
    if discriminated.is_empty() {
        return Ok(hgl_only(fit));
    }

    let grid = grid45.grid(&fit.penalty, &discriminated)?;
    let sel = grid_select(s, n, &grid, &settings.admm, &settings.dhgl_bic)?;
    let dhgl_hubs = extract_hubs(&sel.result.theta_hat, &settings.extraction);
    Ok(WorkflowResult {
        estimate: sel.result,
        hubs: fit.hubs.union(&dhgl_hubs).copied().collect(),
        discriminated,
        provenance: Provenance::Dhgl,
        penalty: sel.penalty,
        hgl_penalty: fit.penalty,
        hgl_hubs: fit.hubs,
        screening_lambda: None,
    })
}

/// Outcome of walking the graphical lasso path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningOutcome {
    pub lambda: f64,
    pub gl_hubs: BTreeSet<usize>,
    pub discriminated: BTreeSet<usize>,
}

/// Whether the hubs found at one path point qualify as new prior information.
pub fn screening_accepts(
    gl_hubs: &BTreeSet<usize>,
    hgl_hubs: &BTreeSet<usize>,
    screening: &ScreeningConfig,
) -> bool {
    let new = gl_hubs.difference(hgl_hubs).count();
    let union = gl_hubs.union(hgl_hubs).count();
    new > 0 && union <= screening.cap(hgl_hubs.len())
}

/// Walks the path from large to small penalties and stops at the first point
/// that adds hubs without exceeding the cap.
pub fn screen_hubs(
    s: &SymmetricMatrix,
    hgl_hubs: &BTreeSet<usize>,
    screening: &ScreeningConfig,
    settings: &WorkflowSettings,
) -> Result<Option<ScreeningOutcome>> {
    screening.validate()?;
    let path = screening.path(s);
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    for lambda in path {
        let gl = run_gl(s, lambda, &settings.admm)?;
        let gl_hubs = extract_hubs(&gl.theta_hat, &settings.extraction);
        if screening_accepts(&gl_hubs, hgl_hubs, screening) {
            let discriminated = gl_hubs.difference(hgl_hubs).copied().collect();
            return Ok(Some(ScreeningOutcome {
                lambda,
                gl_hubs,
                discriminated,
            }));
        }
    }
    Ok(None)
}

/// Screening procedure: hubs the graphical lasso finds beyond the plain fit
/// are discriminated with `lambda4 = lambda2` and `lambda5` chosen by BIC.
pub fn algorithm2_screening(
    s: &SymmetricMatrix,
    n: usize,
    hgl: &GridSpec,
    screening: &ScreeningConfig,
    grid5: &DiscriminationGrid,
    settings: &WorkflowSettings,
) -> Result<WorkflowResult> {
    screening.validate()?;
    let fit = fit_hgl(s, n, hgl, settings)?;
    algorithm2_with_fit(s, n, fit, screening, grid5, settings)
}

/// [`algorithm2_screening`] starting from an existing undiscriminated fit.
pub fn algorithm2_with_fit(
    s: &SymmetricMatrix,
    n: usize,
    fit: HglFit,
    screening: &ScreeningConfig,
    grid5: &DiscriminationGrid,
    settings: &WorkflowSettings,
) -> Result<WorkflowResult> {
    let Some(outcome) = screen_hubs(s, &fit.hubs, screening, settings)? else {
        log::info!("screening found no admissible hubs; keeping the undiscriminated fit");
        return Ok(hgl_only(fit));
    };

    let grid = grid5.grid(&fit.penalty, &outcome.discriminated)?;
    let sel = grid_select(s, n, &grid, &settings.admm, &settings.dhgl_bic)?;
    let hubs = extract_hubs(&sel.result.theta_hat, &settings.extraction);
    Ok(WorkflowResult {
        estimate: sel.result,
        hubs,
        discriminated: outcome.discriminated,
        provenance: Provenance::Dhgl,
        penalty: sel.penalty,
        hgl_penalty: fit.penalty,
        hgl_hubs: fit.hubs,
        screening_lambda: Some(outcome.lambda),
    })
}

/// Covariance and sample size of an `n x p` data matrix.
pub fn covariance_input(x: &GeneralMatrix) -> Result<(SymmetricMatrix, usize)> {
    Ok((empirical_covariance(x)?, x.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn star4(weight: f64) -> SymmetricMatrix {
        let mut m = DMatrix::identity(4, 4);
        for j in 1..4 {
            m[(0, j)] = weight;
            m[(j, 0)] = weight;
        }
        SymmetricMatrix::new(m).unwrap()
    }

    #[test]
    fn extract_hubs_examples() {
        let cfg = HubExtractionConfig { t: 0.005, r: 3 };
        assert!(extract_hubs(&SymmetricMatrix::identity(4), &cfg).is_empty());
        assert_eq!(extract_hubs(&star4(0.1), &cfg), BTreeSet::from([0]));
        let strict = HubExtractionConfig { t: 0.2, r: 3 };
        assert!(extract_hubs(&star4(0.1), &strict).is_empty());
    }

    #[test]
    fn screening_cap_example() {
        let cfg = ScreeningConfig::default();
        let hgl = BTreeSet::from([1, 2]);
        assert_eq!(cfg.cap(2), 4);
        assert!(screening_accepts(&BTreeSet::from([1, 3]), &hgl, &cfg));
        assert!(!screening_accepts(&BTreeSet::from([1, 2]), &hgl, &cfg));
        assert!(!screening_accepts(
            &BTreeSet::from([1, 3, 4, 5]),
            &hgl,
            &cfg
        ));
        assert!(screening_accepts(&BTreeSet::from([3, 4]), &hgl, &cfg));
        // the multiplicative slack takes over for large hub sets
        assert_eq!(cfg.cap(30), 33);
    }

    #[test]
    fn screening_config_validation() {
        let bad = ScreeningConfig {
            lambda_path: Some(vec![0.5, 0.5]),
            ..ScreeningConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad_b = ScreeningConfig {
            b: 1.0,
            ..ScreeningConfig::default()
        };
        assert!(bad_b.validate().is_err());
    }

    #[test]
    fn default_path_shape() {
        let s = SymmetricMatrix::new(nalgebra::dmatrix![1.0, 0.4; 0.4, 1.0]).unwrap();
        let path = default_lambda_path(&s, 20);
        assert_eq!(path.len(), 20);
        assert!((path[0] - 0.4).abs() < 1e-12);
        assert!((path[19] - 0.004).abs() < 1e-12);
        assert!(path.windows(2).all(|w| w[0] > w[1]));
        assert!(default_lambda_path(&SymmetricMatrix::identity(3), 20).is_empty());
    }

    #[test]
    fn empty_path_is_an_error() {
        let s = SymmetricMatrix::identity(3);
        let settings = WorkflowSettings {
            extraction: HubExtractionConfig { t: 0.005, r: 1 },
            ..WorkflowSettings::default()
        };
        let err = screen_hubs(&s, &BTreeSet::new(), &ScreeningConfig::default(), &settings);
        assert!(matches!(err, Err(Error::EmptyPath)));
    }

    #[test]
    fn discrimination_grids() {
        let base = PenaltyConfig::hgl(0.4, 0.2, 1.0).unwrap();
        let pts = DiscriminationGrid::screened()
            .grid(&base, &BTreeSet::from([3]))
            .unwrap()
            .points()
            .unwrap();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|c| c.lambda4() == 0.2));
        assert_eq!(pts.last().unwrap().lambda5(), 1.0);
        assert!(pts.iter().all(|c| c.is_discriminated(3)));
        assert_eq!(
            DiscriminationGrid::known_hubs()
                .grid(&base, &BTreeSet::from([1]))
                .unwrap()
                .points()
                .unwrap()
                .len(),
            9
        );
        assert!(DiscriminationGrid::fixed(1.5, 0.1).validate().is_err());
    }
}

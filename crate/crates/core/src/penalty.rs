//! The discriminated hub penalty, the penalized Gaussian objective and the
//! tuning-parameter region classifier.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    column_l1_offdiag, column_l2_offdiag, frobenius, l1_offdiag, log_det_pd, SymmetricMatrix,
};

/// Exponent of the column group norm. Only the l2 group norm is supported,
/// so the dual exponent in the region bounds is also 2.
pub const GROUP_NORM_Q: f64 = 2.0;

/// Tuning parameters of the discriminated hub penalty.
///
/// Columns in `discriminated` are penalized with `(lambda4, lambda5)` instead
/// of `(lambda2, lambda3)`. Construction enforces `lambda4 <= lambda2` and
/// `lambda5 <= lambda3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPenaltyConfig", into = "RawPenaltyConfig")]
pub struct PenaltyConfig {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    lambda4: f64,
    lambda5: f64,
    discriminated: BTreeSet<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawPenaltyConfig {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    #[serde(default)]
    lambda4: Option<f64>,
    #[serde(default)]
    lambda5: Option<f64>,
    #[serde(default)]
    discriminated: BTreeSet<usize>,
    #[serde(default = "default_q")]
    q: f64,
}

fn default_q() -> f64 {
    GROUP_NORM_Q
}

impl TryFrom<RawPenaltyConfig> for PenaltyConfig {
    type Error = Error;

    fn try_from(raw: RawPenaltyConfig) -> Result<Self> {
        if raw.q != GROUP_NORM_Q {
            return Err(Error::config(
                "q",
                format!("only q = 2 is supported, got {}", raw.q),
            ));
        }
        PenaltyConfig::new(
            raw.lambda1,
            raw.lambda2,
            raw.lambda3,
            raw.lambda4.unwrap_or(raw.lambda2),
            raw.lambda5.unwrap_or(raw.lambda3),
            raw.discriminated,
        )
    }
}

impl From<PenaltyConfig> for RawPenaltyConfig {
    fn from(c: PenaltyConfig) -> Self {
        RawPenaltyConfig {
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            lambda3: c.lambda3,
            lambda4: Some(c.lambda4),
            lambda5: Some(c.lambda5),
            discriminated: c.discriminated,
            q: GROUP_NORM_Q,
        }
    }
}

impl PenaltyConfig {
    pub fn new(
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        lambda4: f64,
        lambda5: f64,
        discriminated: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        for (name, v) in [
            ("lambda1", lambda1),
            ("lambda2", lambda2),
            ("lambda3", lambda3),
            ("lambda4", lambda4),
            ("lambda5", lambda5),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if lambda4 > lambda2 {
            return Err(Error::config(
                "lambda4",
                format!("must not exceed lambda2 ({lambda4} > {lambda2})"),
            ));
        }
        if lambda5 > lambda3 {
            return Err(Error::config(
                "lambda5",
                format!("must not exceed lambda3 ({lambda5} > {lambda3})"),
            ));
        }
        Ok(PenaltyConfig {
            lambda1,
            lambda2,
            lambda3,
            lambda4,
            lambda5,
            discriminated: discriminated.into_iter().collect(),
        })
    }

    /// Hub graphical lasso: no discriminated columns.
    pub fn hgl(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        Self::new(lambda1, lambda2, lambda3, lambda2, lambda3, [])
    }

    /// Same `lambda1..lambda3`, new discriminated set and `(lambda4, lambda5)`.
    pub fn discriminate(
        &self,
        discriminated: impl IntoIterator<Item = usize>,
        lambda4: f64,
        lambda5: f64,
    ) -> Result<Self> {
        Self::new(
            self.lambda1,
            self.lambda2,
            self.lambda3,
            lambda4,
            lambda5,
            discriminated,
        )
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
    pub fn lambda3(&self) -> f64 {
        self.lambda3
    }
    pub fn lambda4(&self) -> f64 {
        self.lambda4
    }
    pub fn lambda5(&self) -> f64 {
        self.lambda5
    }

    pub fn lambdas(&self) -> [f64; 5] {
        [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
        ]
    }

    pub fn discriminated(&self) -> &BTreeSet<usize> {
        &self.discriminated
    }

    pub fn is_discriminated(&self, j: usize) -> bool {
        self.discriminated.contains(&j)
    }

    /// `(l1 weight, l2 weight)` applied to column `j` of `V`.
    pub fn column_weights(&self, j: usize) -> (f64, f64) {
        if self.is_discriminated(j) {
            (self.lambda4, self.lambda5)
        } else {
            (self.lambda2, self.lambda3)
        }
    }

    /// Checks that every discriminated index is a valid node of a `p`-node
    /// graph.
    pub fn validate_dim(&self, p: usize) -> Result<()> {
        match self.discriminated.iter().next_back() {
            Some(&j) if j >= p => Err(Error::config(
                "discriminated",
                format!("index {j} out of range for p = {p}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Value of the discriminated hub penalty at `(V, Z)`. Diagonals are not
/// penalized.
pub fn penalty_value(v: &DMatrix<f64>, z: &SymmetricMatrix, cfg: &PenaltyConfig) -> Result<f64> {
    let p = z.dim();
    if v.nrows() != p || v.ncols() != p {
        return Err(Error::dims(
            format!("{p}x{p}"),
            format!("{}x{}", v.nrows(), v.ncols()),
        ));
    }
    cfg.validate_dim(p)?;
    let mut total = cfg.lambda1 * l1_offdiag(z);
    for j in 0..p {
        let (w1, w2) = cfg.column_weights(j);
        total += w1 * column_l1_offdiag(v, j) + w2 * column_l2_offdiag(v, j);
    }
    Ok(total)
}

/// `-log det(theta) + trace(S theta) + P(V, Z)`.
///
/// `theta` is expected to equal `V + V^T + Z`; a gap larger than `1e-6` in
/// Frobenius norm is logged but tolerated since ADMM iterates only satisfy
/// the constraint in the limit.
pub fn objective(
    s: &SymmetricMatrix,
    theta: &SymmetricMatrix,
    v: &DMatrix<f64>,
    z: &SymmetricMatrix,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let p = s.dim();
    if theta.dim() != p || z.dim() != p {
        return Err(Error::dims(
            format!("{p}x{p}"),
            format!("theta {}x{0}, z {}x{1}", theta.dim(), z.dim()),
        ));
    }
    let pen = penalty_value(v, z, cfg)?;
    let gap = frobenius(&(theta.as_matrix() - v - v.transpose() - z.as_matrix()));
    if gap > 1e-6 {
        log::warn!("objective evaluated with decomposition gap {gap:.3e}");
    }
    Ok(gaussian_loss(s, theta)? + pen)
}

/// `-log det(theta) + trace(S theta)`.
pub fn gaussian_loss(s: &SymmetricMatrix, theta: &SymmetricMatrix) -> Result<f64> {
    let log_det = log_det_pd(theta)?;
    Ok(-log_det + trace_product(s, theta))
}

/// `trace(A B)` for symmetric `A`, `B` without forming the product.
pub fn trace_product(a: &SymmetricMatrix, b: &SymmetricMatrix) -> f64 {
    a.component_mul(b.as_matrix()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `lambda1` below the lower bound: off-diagonal `V` vanishes outside
    /// the discriminated set.
    ZeroVOutsideD,
    /// `lambda1` above the upper bound: `Z` is diagonal.
    DiagonalZ,
    /// Both `V` and `Z` may be non-diagonal.
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub classification: Region,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Places `lambda1` relative to
/// `lambda2/2 + lambda3 / (2 sqrt(p-1))` and `(lambda2 + lambda3)/2`.
/// Equality with either bound counts as `Interior`.
pub fn classify_lambda_region(cfg: &PenaltyConfig, p: usize) -> Result<RegionVerdict> {
    if p < 2 {
        return Err(Error::config("p", "region bounds need p >= 2"));
    }
    // s = q / (q - 1) = 2
    let s = GROUP_NORM_Q / (GROUP_NORM_Q - 1.0);
    let lower_bound = cfg.lambda2 / 2.0 + cfg.lambda3 / (2.0 * ((p - 1) as f64).powf(1.0 / s));
    let upper_bound = (cfg.lambda2 + cfg.lambda3) / 2.0;
    let classification = if cfg.lambda1 < lower_bound {
        Region::ZeroVOutsideD
    } else if cfg.lambda1 > upper_bound {
        Region::DiagonalZ
    } else {
        Region::Interior
    };
    Ok(RegionVerdict {
        classification,
        lower_bound,
        upper_bound,
    })
}

//! ADMM for the discriminated hub graphical lasso.
//!
//! The problem is split as `f(B) + g(B~)` subject to `B = B~` where
//! `B = (Theta, V, Z)` carries the loss and the penalty and `g` is the
//! indicator of `Theta~ = V~ + V~^T + Z~`. One iteration runs the primal
//! block update, the projection onto the constraint and a scaled dual step,
//! in that fixed order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{serde_rows, soft_threshold, sym_eigen, SymmetricMatrix};
use crate::penalty::{gaussian_loss, penalty_value, PenaltyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    /// Augmented Lagrangian weight.
    pub rho: f64,
    /// Relative tolerance on `||Theta_t - Theta_{t-1}||_F^2 / ||Theta_{t-1}||_F^2`.
    pub tau: f64,
    pub max_iterations: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 2.5,
            tau: 1e-7,
            max_iterations: 1000,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::config("admm.rho", "must be finite and > 0"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config("admm.tau", "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("admm.max_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// One `(Theta, V, Z)` triple: either the primal block or its consensus copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub theta: SymmetricMatrix,
    pub v: DMatrix<f64>,
    pub z: SymmetricMatrix,
}

impl Block {
    pub fn identity(p: usize) -> Self {
        Block {
            theta: SymmetricMatrix::identity(p),
            v: DMatrix::identity(p, p),
            z: SymmetricMatrix::identity(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    fn distance_squared(&self, other: &Block) -> f64 {
        (self.theta.as_matrix() - other.theta.as_matrix()).norm_squared()
            + (&self.v - &other.v).norm_squared()
            + (self.z.as_matrix() - other.z.as_matrix()).norm_squared()
    }
}

/// Scaled dual variables `(W1, W2, W3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    pub w1: SymmetricMatrix,
    pub w2: DMatrix<f64>,
    pub w3: SymmetricMatrix,
}

impl Duals {
    pub fn zeros(p: usize) -> Self {
        Duals {
            w1: SymmetricMatrix::zeros(p),
            w2: DMatrix::zeros(p, p),
            w3: SymmetricMatrix::zeros(p),
        }
    }
}

/// Minimizer of `-log det Theta + trace(S Theta) + (rho/2)||Theta - A||_F^2`
/// with `A = Theta~ - W1`.
///
/// With `Theta~ - W1 - S/rho = U D U^T` the solution is
/// `U diag((d + sqrt(d^2 + 4/rho)) / 2) U^T`, positive definite for any `d`.
pub fn theta_update(
    theta_tilde: &SymmetricMatrix,
    w1: &SymmetricMatrix,
    s: &SymmetricMatrix,
    rho: f64,
) -> Result<SymmetricMatrix> {
    let a = SymmetricMatrix::assume_symmetric(
        theta_tilde.as_matrix() - w1.as_matrix() - s.as_matrix() / rho,
    );
    let eig = sym_eigen(&a)?;
    let theta = eig.reconstruct_with(|d| theta_eigenvalue(d, rho));
    debug_assert!(eig.values.iter().all(|&d| theta_eigenvalue(d, rho) > 0.0));
    Ok(SymmetricMatrix::symmetrize_square(&theta))
}

/// Positive root of `rho t^2 - rho d t - 1 = 0`.
#[inline]
pub fn theta_eigenvalue(d: f64, rho: f64) -> f64 {
    let root = (d * d + 4.0 / rho).sqrt();
    if d >= 0.0 {
        0.5 * (d + root)
    } else {
        // same value, without the cancellation in d + root
        2.0 / (rho * (root - d))
    }
}

/// Soft-thresholds the off-diagonal of `m` at `b`, copying the diagonal.
fn soft_threshold_offdiag(m: &DMatrix<f64>, b: f64) -> DMatrix<f64> {
    let mut out = m.map(|a| soft_threshold(a, b));
    out.set_diagonal(&m.diagonal());
    out
}

/// `Z = S(Z~ - W3, lambda1/rho)` off the diagonal; `diag(Z) = diag(Z~ - W3)`.
pub fn z_update(
    z_tilde: &SymmetricMatrix,
    w3: &SymmetricMatrix,
    lambda1: f64,
    rho: f64,
) -> SymmetricMatrix {
    let diff = z_tilde.as_matrix() - w3.as_matrix();
    SymmetricMatrix::assume_symmetric(soft_threshold_offdiag(&diff, lambda1 / rho))
}

/// Proximal map of `(l1/rho)||v||_1 + (l2/rho)||v||_2`: elementwise soft
/// threshold followed by group shrinkage of the whole column.
pub fn v_column_update(c: &[f64], lambda_l1: f64, lambda_l2: f64, rho: f64) -> Vec<f64> {
    let mut out: Vec<f64> = c
        .iter()
        .map(|&x| soft_threshold(x, lambda_l1 / rho))
        .collect();
    group_shrink(&mut out, lambda_l2 / rho);
    out
}

fn group_shrink(col: &mut [f64], b: f64) {
    let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    let factor = if norm > b { 1.0 - b / norm } else { 0.0 };
    for x in col.iter_mut() {
        *x *= factor;
    }
}

/// Column-wise update of `V` from `C = (V~ - W2)` with its diagonal removed;
/// the diagonal of `V` is copied from `V~ - W2`.
pub fn v_update(
    v_tilde: &DMatrix<f64>,
    w2: &DMatrix<f64>,
    penalty: &PenaltyConfig,
    rho: f64,
) -> DMatrix<f64> {
    let diff = v_tilde - w2;
    let mut v = diff.clone();
    for (j, mut col) in v.column_iter_mut().enumerate() {
        let (l1, l2) = penalty.column_weights(j);
        col[j] = 0.0;
        let threshold = l1 / rho;
        for x in col.iter_mut() {
            *x = soft_threshold(*x, threshold);
        }
        group_shrink(col.as_mut_slice(), l2 / rho);
        col[j] = diff[(j, j)];
    }
    v
}

/// Euclidean projection of `B + W` onto `{Theta = V + V^T + Z}`.
pub fn consensus_update(primal: &Block, duals: &Duals, rho: f64) -> Block {
    let theta_w = primal.theta.as_matrix() + duals.w1.as_matrix();
    let v_w = &primal.v + &duals.w2;
    let z_w = primal.z.as_matrix() + duals.w3.as_matrix();
    // Gamma is symmetric in exact arithmetic; rounding is averaged away so the
    // Theta and Z blocks stay exactly symmetric
    let raw = (&theta_w - &v_w - v_w.transpose() - &z_w) * (rho / 6.0);
    let gamma = SymmetricMatrix::symmetrize_square(&raw).into_inner();
    let theta = SymmetricMatrix::assume_symmetric(&theta_w - &gamma / rho);
    let v = (&gamma + gamma.transpose()) / rho + &v_w;
    let z = SymmetricMatrix::assume_symmetric(&gamma / rho + &z_w);
    Block { theta, v, z }
}

/// `W <- W + B - B~`.
pub fn dual_update(duals: &Duals, primal: &Block, consensus: &Block) -> Duals {
    Duals {
        w1: SymmetricMatrix::assume_symmetric(
            duals.w1.as_matrix() + primal.theta.as_matrix() - consensus.theta.as_matrix(),
        ),
        w2: &duals.w2 + &primal.v - &consensus.v,
        w3: SymmetricMatrix::assume_symmetric(
            duals.w3.as_matrix() + primal.z.as_matrix() - consensus.z.as_matrix(),
        ),
    }
}

/// Diagnostics recorded after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationResiduals {
    /// The stopping statistic `||dTheta||_F^2 / ||Theta_{t-1}||_F^2`.
    pub relative_change: f64,
    /// `||B - B~||_F`.
    pub primal: f64,
    /// `rho ||B~_t - B~_{t-1}||_F`.
    pub dual: f64,
}

/// Full ADMM state between iterations.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub primal: Block,
    pub consensus: Block,
    pub duals: Duals,
    pub iteration: usize,
}

impl AdmmState {
    /// Primal and consensus blocks at the identity, duals at zero.
    pub fn initial(p: usize) -> Self {
        AdmmState {
            primal: Block::identity(p),
            consensus: Block::identity(p),
            duals: Duals::zeros(p),
            iteration: 0,
        }
    }

    /// Runs one full iteration and returns its residuals.
    pub fn step(
        &mut self,
        s: &SymmetricMatrix,
        penalty: &PenaltyConfig,
        rho: f64,
    ) -> Result<IterationResiduals> {
        let iteration = self.iteration + 1;
        let previous_theta = self.primal.theta.clone();

        let theta =
            theta_update(&self.consensus.theta, &self.duals.w1, s, rho).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteIterate {
                    iteration,
                    variable: "theta",
                },
                other => other,
            })?;
        let z = z_update(&self.consensus.z, &self.duals.w3, penalty.lambda1(), rho);
        let v = v_update(&self.consensus.v, &self.duals.w2, penalty, rho);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteIterate {
                iteration,
                variable: "V",
            });
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteIterate {
                iteration,
                variable: "Z",
            });
        }
        self.primal = Block { theta, v, z };

        let consensus = consensus_update(&self.primal, &self.duals, rho);
        let dual = rho * consensus.distance_squared(&self.consensus).sqrt();
        self.consensus = consensus;
        self.duals = dual_update(&self.duals, &self.primal, &self.consensus);
        self.iteration = iteration;

        Ok(IterationResiduals {
            relative_change: relative_change(&previous_theta, &self.primal.theta),
            primal: self.primal.distance_squared(&self.consensus).sqrt(),
            dual,
        })
    }
}

fn relative_change(previous: &SymmetricMatrix, current: &SymmetricMatrix) -> f64 {
    let change = (current.as_matrix() - previous.as_matrix()).norm_squared();
    let base = previous.norm_squared();
    if base > 0.0 {
        change / base
    } else {
        change
    }
}

/// Outcome of one ADMM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub theta_hat: SymmetricMatrix,
    #[serde(with = "serde_rows")]
    pub v_hat: DMatrix<f64>,
    pub z_hat: SymmetricMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub residual_history: Vec<IterationResiduals>,
}

impl SolveResult {
    pub fn dim(&self) -> usize {
        self.theta_hat.dim()
    }

    /// `||Theta - V - V^T - Z||_F`.
    pub fn decomposition_gap(&self) -> f64 {
        (self.theta_hat.as_matrix() - &self.v_hat - self.v_hat.transpose() - self.z_hat.as_matrix())
            .norm()
    }
}

fn check_inputs(s: &SymmetricMatrix, admm: &AdmmConfig) -> Result<()> {
    admm.validate()?;
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    Ok(())
}

/// Solves the discriminated hub graphical lasso for covariance `s`.
///
/// Stops when the relative squared change of `Theta` falls to `tau` or after
/// `max_iterations`; hitting the cap is reported through `converged = false`.
pub fn solve(
    s: &SymmetricMatrix,
    penalty: &PenaltyConfig,
    admm: &AdmmConfig,
) -> Result<SolveResult> {
    check_inputs(s, admm)?;
    let p = s.dim();
    penalty.validate_dim(p)?;

    let mut state = AdmmState::initial(p);
    let mut history = Vec::new();
    let mut converged = false;
    while state.iteration < admm.max_iterations {
        let residuals = state.step(s, penalty, admm.rho)?;
        history.push(residuals);
        if residuals.relative_change <= admm.tau {
            converged = true;
            break;
        }
    }

    let Block { theta, v, z } = state.primal;
    let objective = gaussian_loss(s, &theta)? + penalty_value(&v, &z, penalty)?;
    Ok(SolveResult {
        theta_hat: theta,
        v_hat: v,
        z_hat: z,
        iterations: state.iteration,
        converged,
        objective,
        residual_history: history,
    })
}

/// Graphical lasso with the same kernels: consensus `Theta = Z`, `V = 0`.
///
/// `theta_hat` is the positive-definite `Theta` iterate; `z_hat` is its
/// soft-thresholded copy.
pub fn solve_graphical_lasso(
    s: &SymmetricMatrix,
    lambda: f64,
    admm: &AdmmConfig,
) -> Result<SolveResult> {
    check_inputs(s, admm)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config("lambda", "must be finite and >= 0"));
    }
    let p = s.dim();
    let rho = admm.rho;
    let mut theta = SymmetricMatrix::identity(p);
    let mut z = SymmetricMatrix::identity(p);
    let mut w = SymmetricMatrix::zeros(p);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    while iteration < admm.max_iterations {
        iteration += 1;
        let previous = theta;
        theta = theta_update(&z, &w, s, rho).map_err(|_| Error::NonFiniteIterate {
            iteration,
            variable: "theta",
        })?;
        let z_next = SymmetricMatrix::assume_symmetric(soft_threshold_offdiag(
            &(theta.as_matrix() + w.as_matrix()),
            lambda / rho,
        ));
        let dual = rho * (z_next.as_matrix() - z.as_matrix()).norm();
        z = z_next;
        w = SymmetricMatrix::assume_symmetric(w.as_matrix() + theta.as_matrix() - z.as_matrix());
        let residuals = IterationResiduals {
            relative_change: relative_change(&previous, &theta),
            primal: (theta.as_matrix() - z.as_matrix()).norm(),
            dual,
        };
        history.push(residuals);
        if residuals.relative_change <= admm.tau {
            converged = true;
            break;
        }
    }

    let v = DMatrix::zeros(p, p);
    let gl_penalty = PenaltyConfig::hgl(lambda, 0.0, 0.0)?;
    let objective = gaussian_loss(s, &theta)? + penalty_value(&v, &z, &gl_penalty)?;
    Ok(SolveResult {
        theta_hat: theta,
        v_hat: v,
        z_hat: z,
        iterations: iteration,
        converged,
        objective,
        residual_history: history,
    })
}

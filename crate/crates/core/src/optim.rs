//! First-order fitting: adaptive-moment updates with bias correction,
//! followed by projection onto per-coordinate bounds after every step.
//! Also hosts the central finite-difference oracle the gradient tests
//! check analytic gradients against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence is declared when the loss changes by less than `rel_tol`
/// (relatively) across this many iterations.
const PLATEAU_WINDOW: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub step_size: f64,
    pub moment_decay_1: f64,
    pub moment_decay_2: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Relative loss-change threshold over the plateau window.
    pub rel_tol: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            moment_decay_1: 0.9,
            moment_decay_2: 0.999,
            epsilon: 1e-8,
            max_iters: 1000,
            rel_tol: 1e-6,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step_size > 0.0
            && self.step_size.is_finite()
            && (0.0..1.0).contains(&self.moment_decay_1)
            && (0.0..1.0).contains(&self.moment_decay_2)
            && self.epsilon > 0.0
            && self.max_iters >= 1
            && self.rel_tol >= 0.0;
        if !ok {
            return Err(Error::InvalidArgument {
                what: "optimizer config",
                why: format!("{self:?}"),
            });
        }
        Ok(())
    }
}

/// Why a fit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// Loss history of one fit. `losses[i]` is the loss evaluated at the
/// i-th iterate, before that iterate's update was applied; the returned
/// parameters correspond to the last entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTrace {
    pub losses: Vec<f64>,
    pub final_loss: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Minimize `grad_fn` starting from `init`, projecting every iterate onto
/// `bounds`. `grad_fn` must be deterministic; the whole fit then is.
pub fn fit<F>(
    init: &[f64],
    bounds: &[(f64, f64)],
    mut grad_fn: F,
    cfg: &OptimConfig,
) -> Result<(Vec<f64>, FitTrace)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    assert_eq!(init.len(), bounds.len(), "one bound pair per coordinate");
    let n = init.len();
    let mut theta: Vec<f64> = init
        .iter()
        .zip(bounds.iter())
        .map(|(&v, &(lo, hi))| v.clamp(lo, hi))
        .collect();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut b1_pow = 1.0;
    let mut b2_pow = 1.0;
    let mut losses = Vec::new();

    for iteration in 0..cfg.max_iters {
        let (loss, grad) = grad_fn(&theta)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteFit { iteration, what: "loss" });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteFit { iteration, what: "gradient" });
        }
        losses.push(loss);

        if iteration >= PLATEAU_WINDOW {
            let past = losses[iteration - PLATEAU_WINDOW];
            if (past - loss).abs() <= cfg.rel_tol * past.abs().max(1e-12) {
                return Ok((
                    theta,
                    FitTrace {
                        final_loss: loss,
                        iterations: iteration + 1,
                        stop: StopReason::Converged,
                        losses,
                    },
                ));
            }
        }

        b1_pow *= cfg.moment_decay_1;
        b2_pow *= cfg.moment_decay_2;
        for k in 0..n {
            m[k] = cfg.moment_decay_1 * m[k] + (1.0 - cfg.moment_decay_1) * grad[k];
            v[k] = cfg.moment_decay_2 * v[k] + (1.0 - cfg.moment_decay_2) * grad[k] * grad[k];
            let m_hat = m[k] / (1.0 - b1_pow);
            let v_hat = v[k] / (1.0 - b2_pow);
            theta[k] -= cfg.step_size * m_hat / (v_hat.sqrt() + cfg.epsilon);
            theta[k] = theta[k].clamp(bounds[k].0, bounds[k].1);
        }
    }

    let final_loss = *losses.last().expect("max_iters >= 1");
    Ok((
        theta,
        FitTrace {
            final_loss,
            iterations: losses.len(),
            stop: StopReason::MaxIters,
            losses,
        },
    ))
}

/// Central finite differences, one coordinate at a time:
/// `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn finite_difference_gradient<F>(mut loss_fn: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert!(h > 0.0, "step must be positive");
    let mut grads = Vec::with_capacity(params.len());
    let mut probe = params.to_vec();
    for k in 0..params.len() {
        probe[k] = params[k] + h;
        let plus = loss_fn(&probe)?;
        probe[k] = params[k] - h;
        let minus = loss_fn(&probe)?;
        probe[k] = params[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteFit {
                iteration: k,
                what: "finite-difference probe",
            });
        }
        grads.push((plus - minus) / (2.0 * h));
    }
    Ok(grads)
}

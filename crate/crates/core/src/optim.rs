//! Adam, learning-rate and temperature schedules, and a central-difference
//! gradient checker.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LikaError, Result};
use crate::losses::TemperaturePair;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayLaw {
    Exponential,
}

/// Exponential decay from `t0` at epoch 0 to `t_end` at `total_epochs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TemperatureSchedule {
    pub t0: f64,
    pub t_end: f64,
    pub total_epochs: usize,
    pub law: DecayLaw,
}

impl TemperatureSchedule {
    pub const DEFAULT_T0: f64 = 100.0;
    pub const DEFAULT_T_END: f64 = 1e-3;

    pub fn new(t0: f64, t_end: f64, total_epochs: usize) -> Result<Self> {
        if !(t0 > t_end && t_end > 0.0 && t0.is_finite()) {
            return Err(LikaError::Usage(format!(
                "temperature schedule needs t0 > t_end > 0, got t0={t0}, t_end={t_end}"
            )));
        }
        if total_epochs == 0 {
            return Err(LikaError::Usage("temperature schedule needs total_epochs >= 1".into()));
        }
        Ok(TemperatureSchedule {
            t0,
            t_end,
            total_epochs,
            law: DecayLaw::Exponential,
        })
    }

    pub fn with_defaults(total_epochs: usize) -> Result<Self> {
        Self::new(Self::DEFAULT_T0, Self::DEFAULT_T_END, total_epochs)
    }

    /// Per-epoch decay factor γ = (t_end / t0)^(1 / total_epochs).
    pub fn gamma(&self) -> f64 {
        (self.t_end / self.t0).powf(1.0 / self.total_epochs as f64)
    }

    pub fn value_at(&self, epoch: usize) -> Result<f64> {
        if epoch > self.total_epochs {
            return Err(LikaError::Usage(format!(
                "epoch {epoch} outside schedule range 0..={}",
                self.total_epochs
            )));
        }
        if epoch == 0 {
            return Ok(self.t0);
        }
        let frac = epoch as f64 / self.total_epochs as f64;
        Ok(match self.law {
            DecayLaw::Exponential => self.t0 * (self.t_end / self.t0).powf(frac),
        })
    }
}

/// Both temperatures following the same schedule.
pub fn temperature_at(epoch: usize, sched: &TemperatureSchedule) -> Result<TemperaturePair> {
    Ok(TemperaturePair::splat(sched.value_at(epoch)?))
}

/// How one of the two temperatures evolves over training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemperatureCurve {
    /// Follows the shared exponential schedule.
    Annealed,
    /// Held constant; `Fixed(0.0)` switches the term off.
    Fixed(f64),
}

impl TemperatureCurve {
    pub fn value_at(&self, epoch: usize, sched: &TemperatureSchedule) -> Result<f64> {
        match *self {
            TemperatureCurve::Annealed => sched.value_at(epoch),
            TemperatureCurve::Fixed(v) => {
                if epoch > sched.total_epochs {
                    return Err(LikaError::Usage(format!("epoch {epoch} out of range")));
                }
                Ok(v)
            }
        }
    }
}

/// Cosine decay from `lr0` at epoch 0 to `lr_min` at `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64, lr_min: f64) -> Result<f64> {
    if total_epochs == 0 || epoch > total_epochs {
        return Err(LikaError::Usage(format!(
            "epoch {epoch} outside cosine schedule range 0..={total_epochs}"
        )));
    }
    if !(lr0 >= lr_min && lr_min >= 0.0) {
        return Err(LikaError::Usage(format!(
            "cosine schedule needs lr0 >= lr_min >= 0, got {lr0}, {lr_min}"
        )));
    }
    let phase = PI * epoch as f64 / total_epochs as f64;
    Ok(lr_min + 0.5 * (lr0 - lr_min) * (1.0 + phase.cos()))
}

/// Adam moments and step counter for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(LikaError::Usage(format!(
                "adam: state has {} slots, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(LikaError::numeric(format!("non-finite gradient at index {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    params: &[f64],
    grads: &[f64],
    lr: f64,
) -> Result<(AdamState, Vec<f64>)> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.step(&mut p, grads, lr)?;
    Ok((next, p))
}

/// Rescales `grads` so its L2 norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Relative discrepancies below this gradient magnitude are measured
/// against the floor instead, so tiny gradients dominated by rounding do not
/// count as failures.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error <= rel_tol
    }
}

/// Central differences with `h = 1e-5·max(1, |pᵢ|)` per coordinate.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut loss: F, params: &[f64]) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            let h = 1e-5 * orig.abs().max(1.0);
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Compares an analytic gradient against central differences of `loss` and
/// returns the worst relative discrepancy. NaN anywhere yields a NaN error.
pub fn grad_check<F: FnMut(&[f64]) -> f64>(loss: F, params: &[f64], analytic: &[f64]) -> GradCheck {
    let numeric = numeric_gradient(loss, params);
    let mut worst = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let denom = a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR);
        let err = (a - n).abs() / denom;
        if err.is_nan() {
            return GradCheck {
                max_rel_error: f64::NAN,
                worst_index: i,
                numeric,
            };
        }
        if err > worst {
            worst = err;
            worst_index = i;
        }
    }
    GradCheck {
        max_rel_error: worst,
        worst_index,
        numeric,
    }
}

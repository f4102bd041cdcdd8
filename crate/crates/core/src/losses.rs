//! Per-sample objectives over a residual `u = ŷ − y` and a predicted standard
//! deviation `σ̂`, each returning its value together with the analytic partial
//! derivatives with respect to `ŷ` and `σ̂`.
//!
//! Additive constants of the Gaussian negative log-likelihood are dropped
//! everywhere except in [`exact_norm_nll`], which is a true normalized density.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{LikaError, Result};

/// Smallest admissible predicted standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Loss value plus its derivatives with respect to the mean and σ outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub d_mean: f64,
    pub d_sigma: f64,
}

impl std::ops::Add for LossEval {
    type Output = LossEval;

    fn add(self, rhs: LossEval) -> LossEval {
        LossEval {
            value: self.value + rhs.value,
            d_mean: self.d_mean + rhs.d_mean,
            d_sigma: self.d_sigma + rhs.d_sigma,
        }
    }
}

/// Weights of the residual term (`t2`) and the calibration term (`t3`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePair {
    pub t2: f64,
    pub t3: f64,
}

impl TemperaturePair {
    pub const ZERO: TemperaturePair = TemperaturePair { t2: 0.0, t3: 0.0 };

    pub fn new(t2: f64, t3: f64) -> Result<Self> {
        if !(t2 >= 0.0 && t3 >= 0.0 && t2.is_finite() && t3.is_finite()) {
            return Err(LikaError::Usage(format!(
                "temperatures must be finite and non-negative, got ({t2}, {t3})"
            )));
        }
        Ok(TemperaturePair { t2, t3 })
    }

    pub fn splat(t: f64) -> Self {
        TemperaturePair { t2: t, t3: t }
    }
}

/// Training objective selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Nll,
    Lika,
    LikaNorm,
    LikaExact,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Nll,
        Objective::Lika,
        Objective::LikaNorm,
        Objective::LikaExact,
    ];

    /// Evaluates the objective. `Nll` ignores the temperatures.
    pub fn eval(self, y_hat: f64, y: f64, sigma: f64, temps: TemperaturePair) -> Result<LossEval> {
        match self {
            Objective::Nll => gaussian_nll(y_hat, y, sigma),
            Objective::Lika => lika_loss(y_hat, y, sigma, temps),
            Objective::LikaNorm => lika_norm_loss(y_hat, y, sigma, temps),
            Objective::LikaExact => exact_norm_nll(y_hat, y, sigma, temps),
        }
    }

    pub fn uses_temperatures(self) -> bool {
        !matches!(self, Objective::Nll)
    }
}

fn check_inputs(y_hat: f64, y: f64, sigma: f64, temps: TemperaturePair) -> Result<()> {
    if !(y_hat.is_finite() && y.is_finite() && sigma.is_finite()) {
        return Err(LikaError::numeric(format!(
            "non-finite loss input (y_hat={y_hat}, y={y}, sigma={sigma})"
        )));
    }
    if !(temps.t2.is_finite() && temps.t3.is_finite()) {
        return Err(LikaError::numeric("non-finite temperature"));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma < SIGMA_FLOOR {
        return Err(LikaError::Usage(format!(
            "sigma {sigma} is below the floor {SIGMA_FLOOR}"
        )));
    }
    Ok(())
}

// sign with sgn(0) = 0, the subgradient choice for |u| at u = 0.
fn sgn(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Heteroscedastic Gaussian NLL without the constant: `ln σ + u²/(2σ²)`.
pub fn gaussian_nll(y_hat: f64, y: f64, sigma: f64) -> Result<LossEval> {
    check_inputs(y_hat, y, sigma, TemperaturePair::ZERO)?;
    check_sigma(sigma)?;
    let u = y_hat - y;
    let var = sigma * sigma;
    Ok(LossEval {
        value: 0.5 * var.ln() + u * u / (2.0 * var),
        d_mean: u / var,
        d_sigma: 1.0 / sigma - u * u / (var * sigma),
    })
}

/// Temperature-weighted regularizer `T₂u² + T₃(σ̂ − |u|)²`. Accepts σ̂ = 0.
pub fn lika_reg(y_hat: f64, y: f64, sigma: f64, temps: TemperaturePair) -> Result<LossEval> {
    check_inputs(y_hat, y, sigma, temps)?;
    let u = y_hat - y;
    let gap = sigma - u.abs();
    Ok(LossEval {
        value: temps.t2 * u * u + temps.t3 * gap * gap,
        d_mean: 2.0 * temps.t2 * u - 2.0 * temps.t3 * gap * sgn(u),
        d_sigma: 2.0 * temps.t3 * gap,
    })
}

/// The annealed objective: Gaussian NLL plus [`lika_reg`].
pub fn lika_loss(y_hat: f64, y: f64, sigma: f64, temps: TemperaturePair) -> Result<LossEval> {
    Ok(gaussian_nll(y_hat, y, sigma)? + lika_reg(y_hat, y, sigma, temps)?)
}

/// Same objective as [`lika_loss`], written with the two-branch calibration
/// term `|ŷ − (y ± σ̂)|²` selected by the sign of the residual.
pub fn lika_loss_piecewise(
    y_hat: f64,
    y: f64,
    sigma: f64,
    temps: TemperaturePair,
) -> Result<LossEval> {
    let nll = gaussian_nll(y_hat, y, sigma)?;
    check_inputs(y_hat, y, sigma, temps)?;
    let u = y_hat - y;
    // d/dσ of (ŷ − y ∓ σ)² is ∓2(ŷ − y ∓ σ)
    let (branch, d_mean_branch, d_sigma_branch) = if y_hat >= y {
        let r = y_hat - (y + sigma);
        (r * r, 2.0 * r, -2.0 * r)
    } else {
        let r = y_hat - (y - sigma);
        (r * r, 2.0 * r, 2.0 * r)
    };
    Ok(nll
        + LossEval {
            value: temps.t2 * u * u + temps.t3 * branch,
            d_mean: 2.0 * temps.t2 * u + temps.t3 * d_mean_branch,
            d_sigma: temps.t3 * d_sigma_branch,
        })
}

/// Pieces of the closed-form normalizer, all as functions of σ with their
/// σ-derivatives. Naming follows the closed form
/// `Z = 2√π σ · exp(−E) · (1 + erf w) / R`.
struct NormTerms {
    /// `E = σ²T₃(2σ²T₂ + 1) / (2σ²(T₂+T₃) + 1)`
    expo: f64,
    d_expo: f64,
    /// `ln(1 + erf w)` with `w = 2σ²T₃ / R`
    log_erfc_part: f64,
    d_log_erfc_part: f64,
    /// `ln R` with `R = √(4σ²(T₂+T₃) + 2)`
    log_r: f64,
    d_log_r: f64,
}

fn norm_terms(sigma: f64, temps: TemperaturePair) -> NormTerms {
    let TemperaturePair { t2, t3 } = temps;
    let s = sigma * sigma;
    let ds = 2.0 * sigma;

    let num = s * t3 * (2.0 * s * t2 + 1.0);
    let d_num = t3 * (4.0 * s * t2 + 1.0);
    let den = 2.0 * s * (t2 + t3) + 1.0;
    let d_den = 2.0 * (t2 + t3);
    let expo = num / den;
    let d_expo = (d_num * den - num * d_den) / (den * den) * ds;

    // R² = 2·den
    let r = (2.0 * den).sqrt();
    let log_r = 0.5 * (2.0 * den).ln();
    let d_log_r = d_den / (2.0 * den) * ds;

    let w = 2.0 * s * t3 / r;
    let dw = (2.0 * t3 / r - w * d_den / (2.0 * den)) * ds;
    let one_plus_erf = 1.0 + erf(w);
    let log_erfc_part = one_plus_erf.ln();
    let d_log_erfc_part = 2.0 / PI.sqrt() * (-w * w).exp() / one_plus_erf * dw;

    NormTerms {
        expo,
        d_expo,
        log_erfc_part,
        d_log_erfc_part,
        log_r,
        d_log_r,
    }
}

/// `ln Z(σ, T₂, T₃)` and its σ-derivative, evaluated entirely in log space.
pub fn log_norm_constant(sigma: f64, temps: TemperaturePair) -> Result<(f64, f64)> {
    check_inputs(0.0, 0.0, sigma, temps)?;
    check_sigma(sigma)?;
    let t = norm_terms(sigma, temps);
    let value = 2f64.ln() + 0.5 * PI.ln() + sigma.ln() - t.expo + t.log_erfc_part - t.log_r;
    let deriv = 1.0 / sigma - t.d_expo + t.d_log_erfc_part - t.d_log_r;
    Ok((value, deriv))
}

/// Closed-form normalizing constant `Z(σ, T₂, T₃)`, equal to the integral
/// over `u` of `exp(−(1/(2σ²) + T₂)u² − T₃(|u| − σ)²)`.
pub fn norm_constant(sigma: f64, temps: TemperaturePair) -> Result<f64> {
    Ok(log_norm_constant(sigma, temps)?.0.exp())
}

/// The normalized-likelihood objective term for term as it is usually quoted,
/// including its `−½ ln σ̂²` term. This is not the negative log of a
/// normalized density; see [`exact_norm_nll`] for that.
pub fn lika_norm_loss(
    y_hat: f64,
    y: f64,
    sigma: f64,
    temps: TemperaturePair,
) -> Result<LossEval> {
    check_inputs(y_hat, y, sigma, temps)?;
    check_sigma(sigma)?;
    let u = y_hat - y;
    let var = sigma * sigma;
    let t = norm_terms(sigma, temps);
    let reg = lika_reg(y_hat, y, sigma, temps)?;
    Ok(LossEval {
        value: -t.expo + t.log_erfc_part - 0.5 * var.ln() + u * u / (2.0 * var) + reg.value,
        d_mean: u / var + reg.d_mean,
        d_sigma: -t.d_expo + t.d_log_erfc_part - 1.0 / sigma - u * u / (var * sigma) + reg.d_sigma,
    })
}

/// Negative log of the temperature-dependent density normalized to unit
/// mass over the residual: `ln Z + (1/(2σ²) + T₂)u² + T₃(|u| − σ)²`.
pub fn exact_norm_nll(
    y_hat: f64,
    y: f64,
    sigma: f64,
    temps: TemperaturePair,
) -> Result<LossEval> {
    check_inputs(y_hat, y, sigma, temps)?;
    let (log_z, d_log_z) = log_norm_constant(sigma, temps)?;
    let u = y_hat - y;
    let var = sigma * sigma;
    let reg = lika_reg(y_hat, y, sigma, temps)?;
    Ok(LossEval {
        value: log_z + u * u / (2.0 * var) + reg.value,
        d_mean: u / var + reg.d_mean,
        d_sigma: d_log_z - u * u / (var * sigma) + reg.d_sigma,
    })
}

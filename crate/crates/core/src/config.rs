//! Run configuration shared by the trainer and the experiment harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LikaError, Result};
use crate::losses::{Objective, TemperaturePair};
use crate::models::Activation;
use crate::optim::{TemperatureCurve, TemperatureSchedule};

/// Training method: an objective plus an optional predictive wrapper.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nll,
    Lika,
    LikaNorm,
    LikaExact,
    DoNll,
    DoLika,
    EnsNll,
    EnsLika,
    Ttda,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Nll,
        Method::Lika,
        Method::LikaNorm,
        Method::LikaExact,
        Method::DoNll,
        Method::DoLika,
        Method::EnsNll,
        Method::EnsLika,
        Method::Ttda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nll => "nll",
            Method::Lika => "lika",
            Method::LikaNorm => "lika-norm",
            Method::LikaExact => "lika-exact",
            Method::DoNll => "do-nll",
            Method::DoLika => "do-lika",
            Method::EnsNll => "ens-nll",
            Method::EnsLika => "ens-lika",
            Method::Ttda => "ttda",
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            Method::Nll | Method::DoNll | Method::EnsNll | Method::Ttda => Objective::Nll,
            Method::Lika | Method::DoLika | Method::EnsLika => Objective::Lika,
            Method::LikaNorm => Objective::LikaNorm,
            Method::LikaExact => Objective::LikaExact,
        }
    }

    pub fn is_dropout(self) -> bool {
        matches!(self, Method::DoNll | Method::DoLika)
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Method::EnsNll | Method::EnsLika)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = LikaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let allowed: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                LikaError::Usage(format!(
                    "unknown method {s:?}; allowed: {}",
                    allowed.join(", ")
                ))
            })
    }
}

/// Weight prior, added to the batch loss as a penalty on all parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prior {
    #[default]
    Uniform,
    /// λ·Σθ²
    Gaussian,
    /// λ·Σ|θ|
    Laplace,
}

impl FromStr for Prior {
    type Err = LikaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Prior::Uniform),
            "gaussian" => Ok(Prior::Gaussian),
            "laplace" => Ok(Prior::Laplace),
            other => Err(LikaError::Usage(format!(
                "unknown prior {other:?}; allowed: uniform, gaussian, laplace"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    /// Initial temperature of the shared exponential schedule.
    pub t0: f64,
    /// Temperature reached at the final epoch boundary.
    pub t_end: f64,
    pub t2: TemperatureCurve,
    pub t3: TemperatureCurve,
    pub seed: u64,
    pub ensemble_size: usize,
    /// Defaults to 0.1 for dropout methods, 0 otherwise.
    pub dropout_rate: Option<f64>,
    pub prior: Prior,
    pub prior_lambda: f64,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    /// Global gradient-norm clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub bins: usize,
    pub mc_passes: usize,
    pub ttda_n_aug: usize,
    /// Test-time augmentation noise as a fraction of each feature's train std.
    pub ttda_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Lika,
            epochs: 2000,
            batch_size: 64,
            lr0: 2e-4,
            lr_min: 0.0,
            t0: TemperatureSchedule::DEFAULT_T0,
            t_end: TemperatureSchedule::DEFAULT_T_END,
            t2: TemperatureCurve::Annealed,
            t3: TemperatureCurve::Annealed,
            seed: 0,
            ensemble_size: 5,
            dropout_rate: None,
            prior: Prior::Uniform,
            prior_lambda: 1e-5,
            hidden_layers: vec![64, 64],
            activation: Activation::Tanh,
            grad_clip: None,
            bins: 10,
            mc_passes: 100,
            ttda_n_aug: 32,
            ttda_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn with_method(method: Method) -> Self {
        TrainConfig {
            method,
            ..TrainConfig::default()
        }
    }

    pub fn effective_dropout(&self) -> f64 {
        match self.dropout_rate {
            Some(p) => p,
            None if self.method.is_dropout() => 0.1,
            None => 0.0,
        }
    }

    pub fn schedule(&self) -> Result<TemperatureSchedule> {
        TemperatureSchedule::new(self.t0, self.t_end, self.epochs)
    }

    /// Temperatures used during the epoch that starts at boundary `epoch`
    /// (0-based). Objectives without temperatures always get zero.
    pub fn temperatures_at(&self, epoch: usize) -> Result<TemperaturePair> {
        if !self.method.objective().uses_temperatures() {
            return Ok(TemperaturePair::ZERO);
        }
        let sched = self.schedule()?;
        TemperaturePair::new(
            self.t2.value_at(epoch, &sched)?,
            self.t3.value_at(epoch, &sched)?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(LikaError::Usage(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch-size must be >= 1".into());
        }
        if !(self.lr0 >= self.lr_min && self.lr_min >= 0.0 && self.lr0.is_finite()) {
            return fail(format!("need lr0 >= lr-min >= 0, got {} and {}", self.lr0, self.lr_min));
        }
        if self.method.objective().uses_temperatures() {
            self.schedule()?;
            for c in [self.t2, self.t3] {
                if let TemperatureCurve::Fixed(v) = c {
                    if !(v >= 0.0 && v.is_finite()) {
                        return fail(format!("fixed temperature must be >= 0, got {v}"));
                    }
                }
            }
        }
        if self.method.is_ensemble() && self.ensemble_size < 2 {
            return fail(format!(
                "{} requires ensemble-size >= 2, got {}",
                self.method, self.ensemble_size
            ));
        }
        let p = self.effective_dropout();
        if !(0.0..1.0).contains(&p) {
            return fail(format!("dropout-rate must be in [0, 1), got {p}"));
        }
        if self.method.is_dropout() && p == 0.0 {
            return fail(format!("{} requires dropout-rate > 0", self.method));
        }
        if self.prior_lambda.is_nan() || self.prior_lambda < 0.0 {
            return fail("prior-lambda must be >= 0".into());
        }
        if self.hidden_layers.contains(&0) {
            return fail("hidden layer widths must be >= 1".into());
        }
        if self.bins == 0 {
            return fail("bins must be >= 1".into());
        }
        if self.mc_passes == 0 {
            return fail("mc-passes must be >= 1".into());
        }
        if self.method == Method::Ttda && self.ttda_n_aug < 2 {
            return fail("ttda needs at least 2 augmented copies".into());
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return fail("grad-clip must be > 0".into());
            }
        }
        Ok(())
    }
}

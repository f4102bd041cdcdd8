//! Regression and calibration metrics over Gaussian predictive distributions.
//!
//! Every metric treats each output coordinate of each sample as one item.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf_inv;

use crate::error::{LikaError, Result};
use crate::models::PredictiveDistribution;

pub const DEFAULT_UCE_BINS: usize = 10;
pub const PSNR_CAP_DB: f64 = 100.0;

/// Nominal coverage levels {0.05, 0.15, …, 0.95}.
pub fn default_ece_levels() -> Vec<f64> {
    (0..10).map(|i| 0.05 + 0.1 * i as f64).collect()
}

/// Predicted means and standard deviations against targets, all `N × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalBatch {
    pub mean: Array2<f64>,
    pub sigma: Array2<f64>,
    pub target: Array2<f64>,
}

impl EvalBatch {
    pub fn new(mean: Array2<f64>, sigma: Array2<f64>, target: Array2<f64>) -> Result<Self> {
        if mean.dim() != sigma.dim() || mean.dim() != target.dim() {
            return Err(LikaError::Usage(format!(
                "eval batch shape mismatch: mean {:?}, sigma {:?}, target {:?}",
                mean.dim(),
                sigma.dim(),
                target.dim()
            )));
        }
        if mean.iter().chain(sigma.iter()).chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(LikaError::numeric("eval batch contains non-finite values"));
        }
        Ok(EvalBatch { mean, sigma, target })
    }

    pub fn from_predictions(preds: &[PredictiveDistribution], target: Array2<f64>) -> Result<Self> {
        if preds.len() != target.nrows() {
            return Err(LikaError::Usage(format!(
                "{} predictions for {} targets",
                preds.len(),
                target.nrows()
            )));
        }
        let n = target.ncols();
        let mut mean = Array2::zeros(target.dim());
        let mut sigma = Array2::zeros(target.dim());
        for (i, p) in preds.iter().enumerate() {
            if p.mean.len() != n || p.sigma.len() != n {
                return Err(LikaError::Usage("prediction width differs from target".into()));
            }
            for j in 0..n {
                mean[[i, j]] = p.mean[j];
                sigma[[i, j]] = p.sigma[j];
            }
        }
        Self::new(mean, sigma, target)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Same predictions with every σ̂ multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> EvalBatch {
        EvalBatch {
            mean: self.mean.clone(),
            sigma: self.sigma.mapv(|v| v * s),
            target: self.target.clone(),
        }
    }

    fn sq_errors(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        Zip::from(&self.mean).and(&self.target).for_each(|m, t| out.push((m - t) * (m - t)));
        out
    }

    fn variances(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    fn non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(LikaError::Usage("metric on an empty batch".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
    pub psnr: f64,
}

/// MAE, MSE and PSNR with the peak taken as the target range of the batch.
pub fn regression_metrics(batch: &EvalBatch) -> Result<RegressionMetrics> {
    batch.non_empty()?;
    let n = batch.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    Zip::from(&batch.mean).and(&batch.target).for_each(|m, t| {
        abs += (m - t).abs();
        sq += (m - t) * (m - t);
    });
    let (mae, mse) = (abs / n, sq / n);
    let lo = batch.target.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = batch.target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // a constant target has no dynamic range; fall back to unit peak
    let range = if hi > lo { hi - lo } else { 1.0 };
    let psnr = if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (range * range / mse).log10()).min(PSNR_CAP_DB)
    };
    Ok(RegressionMetrics { mae, mse, psnr })
}

/// Occupancy and mean error / mean variance of one σ̂² bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub count: usize,
    pub err: f64,
    pub uncer: f64,
}

/// UCE over raw (squared error, predicted variance) pairs with `m_bins`
/// equal-width bins spanning the observed variance range.
pub fn uce_from_pairs(sq_err: &[f64], var: &[f64], m_bins: usize) -> Result<(f64, Vec<BinStats>)> {
    if m_bins == 0 {
        return Err(LikaError::Usage("uce needs at least one bin".into()));
    }
    if sq_err.len() != var.len() {
        return Err(LikaError::Usage("uce: length mismatch".into()));
    }
    let n = var.len();
    let mut bins = vec![
        BinStats {
            count: 0,
            err: 0.0,
            uncer: 0.0
        };
        m_bins
    ];
    if n == 0 {
        return Ok((0.0, bins));
    }
    let lo = var.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = var.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / m_bins as f64;
    for (&e, &v) in sq_err.iter().zip(var) {
        let b = if width > 0.0 {
            (((v - lo) / width) as usize).min(m_bins - 1)
        } else {
            0
        };
        bins[b].count += 1;
        bins[b].err += e;
        bins[b].uncer += v;
    }
    let mut total = 0.0;
    for b in bins.iter_mut().filter(|b| b.count > 0) {
        b.err /= b.count as f64;
        b.uncer /= b.count as f64;
        total += b.count as f64 / n as f64 * (b.err - b.uncer).abs();
    }
    Ok((total, bins))
}

/// Uncertainty calibration error: bin-weighted |mean squared error − mean σ̂²|.
pub fn uce(batch: &EvalBatch, m_bins: usize) -> Result<(f64, Vec<BinStats>)> {
    uce_from_pairs(&batch.sq_errors(), &batch.variances(), m_bins)
}

/// 100 × mean over `levels` of |empirical − nominal| coverage of the central
/// intervals of N(ŷ, σ̂²).
pub fn ece(batch: &EvalBatch, levels: &[f64]) -> Result<f64> {
    batch.non_empty()?;
    if levels.is_empty() || levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(LikaError::Usage("ece levels must lie in (0, 1)".into()));
    }
    // |y − ŷ| / σ̂, computed once
    let mut z = Vec::with_capacity(batch.len());
    Zip::from(&batch.mean)
        .and(&batch.sigma)
        .and(&batch.target)
        .for_each(|m, s, t| z.push((t - m).abs() / s));
    let n = z.len() as f64;
    let gap: f64 = levels
        .iter()
        .map(|&p| {
            let half_width = std::f64::consts::SQRT_2 * erf_inv(p);
            let covered = z.iter().filter(|&&v| v <= half_width).count() as f64;
            (covered / n - p).abs()
        })
        .sum();
    Ok(100.0 * gap / levels.len() as f64)
}

/// Mean predicted σ̂ (target units; lower is sharper).
pub fn sharpness(batch: &EvalBatch) -> Result<f64> {
    batch.non_empty()?;
    Ok(batch.sigma.mean().expect("non-empty"))
}

/// Pearson correlation between σ̂² and squared error. Returns `(0, true)` if
/// either series is constant.
pub fn corr_coeff(batch: &EvalBatch) -> Result<(f64, bool)> {
    if batch.len() < 2 {
        return Err(LikaError::Usage("correlation needs at least two items".into()));
    }
    Ok(pearson(&batch.variances(), &batch.sq_errors()))
}

/// Pearson correlation with the zero-variance convention of [`corr_coeff`].
pub fn pearson(a: &[f64], b: &[f64]) -> (f64, bool) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return (0.0, true);
    }
    ((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0), false)
}

/// Mean Gaussian log-density of the targets, constants included.
pub fn log_likelihood(batch: &EvalBatch) -> Result<f64> {
    batch.non_empty()?;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    Zip::from(&batch.mean)
        .and(&batch.sigma)
        .and(&batch.target)
        .for_each(|m, s, t| {
            let u = t - m;
            total += -0.5 * (ln_2pi + (s * s).ln()) - u * u / (2.0 * s * s);
        });
    Ok(total / batch.len() as f64)
}

/// Optimal σ-scaling factor `s* = √(mean(u²/σ̂²))`, the minimizer of
/// `N ln s + Σ u²/(2 s² σ̂²)`.
pub fn sigma_scale(calibration: &EvalBatch) -> Result<f64> {
    calibration.non_empty()?;
    let mut acc = 0.0;
    Zip::from(&calibration.mean)
        .and(&calibration.sigma)
        .and(&calibration.target)
        .for_each(|m, s, t| acc += (m - t) * (m - t) / (s * s));
    Ok((acc / calibration.len() as f64).sqrt())
}

/// The objective minimized by [`sigma_scale`], for external checking.
pub fn sigma_scale_objective(calibration: &EvalBatch, s: f64) -> f64 {
    let mut acc = 0.0;
    Zip::from(&calibration.mean)
        .and(&calibration.sigma)
        .and(&calibration.target)
        .for_each(|m, sg, t| acc += (m - t) * (m - t) / (sg * sg));
    calibration.len() as f64 * s.ln() + acc / (2.0 * s * s)
}

/// UCE after replacing σ̂² by s*²σ̂².
pub fn recalibrated_uce(test: &EvalBatch, s_star: f64, m_bins: usize) -> Result<f64> {
    Ok(uce(&test.rescaled(s_star), m_bins)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub psnr: f64,
    pub corr_coeff: f64,
    pub uce: f64,
    pub r_uce: f64,
    pub ece: f64,
    pub sharpness: f64,
    pub log_likelihood: f64,
}

impl MetricsReport {
    pub const FIELDS: [&'static str; 9] = [
        "mae",
        "mse",
        "psnr",
        "corr_coeff",
        "uce",
        "r_uce",
        "ece",
        "sharpness",
        "log_likelihood",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.mae,
            self.mse,
            self.psnr,
            self.corr_coeff,
            self.uce,
            self.r_uce,
            self.ece,
            self.sharpness,
            self.log_likelihood,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Full metric suite on `test`, with σ-scaling fit on `calibration`.
pub fn evaluate(test: &EvalBatch, calibration: &EvalBatch, m_bins: usize) -> Result<MetricsReport> {
    let reg = regression_metrics(test)?;
    let s_star = sigma_scale(calibration)?;
    let corr = if test.len() >= 2 { corr_coeff(test)?.0 } else { 0.0 };
    Ok(MetricsReport {
        mae: reg.mae,
        mse: reg.mse,
        psnr: reg.psnr,
        corr_coeff: corr,
        uce: uce(test, m_bins)?.0,
        r_uce: recalibrated_uce(test, s_star, m_bins)?,
        ece: ece(test, &default_ece_levels())?,
        sharpness: sharpness(test)?,
        log_likelihood: log_likelihood(test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn col(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    fn batch(mean: &[f64], sigma: &[f64], target: &[f64]) -> EvalBatch {
        EvalBatch::new(col(mean), col(sigma), col(target)).unwrap()
    }

    #[test]
    fn regression_examples() {
        let b = batch(&[0.0, 1.0, 2.0], &[1.0; 3], &[0.0, 1.0, 2.0]);
        let r = regression_metrics(&b).unwrap();
        assert_eq!((r.mae, r.mse, r.psnr), (0.0, 0.0, 100.0));
        let b = batch(&[1.0, 2.0, 3.0], &[1.0; 3], &[0.0, 1.0, 2.0]);
        let r = regression_metrics(&b).unwrap();
        assert_eq!((r.mae, r.mse), (1.0, 1.0));
        // range 1, squared errors averaging 0.01
        let b = batch(&[0.1, 0.9], &[1.0; 2], &[0.0, 1.0]);
        assert!((regression_metrics(&b).unwrap().psnr - 20.0).abs() < 1e-9);
        let empty = EvalBatch::new(Array2::zeros((0, 1)), Array2::zeros((0, 1)), Array2::zeros((0, 1))).unwrap();
        assert!(regression_metrics(&empty).is_err());
    }

    #[test]
    fn uce_examples() {
        let b = batch(&[1.0, -2.0, 0.5], &[1.0, 2.0, 0.5], &[0.0, 0.0, 0.0]);
        assert_eq!(uce(&b, 10).unwrap().0, 0.0);
        let (v, bins) = uce_from_pairs(&[0.2, 0.4], &[0.5, 0.5], 1).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
        assert_eq!(bins[0].count, 2);
        let (v, bins) = uce_from_pairs(&[0.2, 0.2, 0.2, 1.5], &[0.1, 0.1, 0.1, 1.0], 2).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![3, 1]);
    }

    #[test]
    fn single_bin_uce_identity() {
        let e = [0.3, 1.7, 0.01, 4.0];
        let v = [0.9, 0.2, 2.5, 0.4];
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let expected = (mean(&e) - mean(&v)).abs();
        assert!((uce_from_pairs(&e, &v, 1).unwrap().0 - expected).abs() < 1e-15);
    }

    #[test]
    fn ece_degenerate_cases() {
        let levels = default_ece_levels();
        let b = batch(&[1.0, -1.0, 2.0], &[1e-6; 3], &[0.0; 3]);
        assert!((ece(&b, &levels).unwrap() - 50.0).abs() < 1e-9);
        let b = batch(&[1.0, -1.0, 2.0], &[1e6, 1e6, 2e6], &[0.0; 3]);
        assert!((ece(&b, &levels).unwrap() - 50.0).abs() < 1e-9);
        assert!(ece(&b, &[1.0]).is_err());
    }

    #[test]
    fn sharpness_examples() {
        assert_eq!(sharpness(&batch(&[0.0; 2], &[2.0, 2.0], &[0.0; 2])).unwrap(), 2.0);
        assert_eq!(sharpness(&batch(&[0.0; 2], &[1.0, 3.0], &[0.0; 2])).unwrap(), 2.0);
    }

    #[test]
    fn corr_examples() {
        let b = batch(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[0.0; 3]);
        let (r, deg) = corr_coeff(&b).unwrap();
        assert!((r - 1.0).abs() < 1e-12 && !deg);
        let b = batch(&[1.0, 2.0, 3.0], &[1.0; 3], &[0.0; 3]);
        assert_eq!(corr_coeff(&b).unwrap(), (0.0, true));
        // σ̂² = 10 − u²
        let u = [1.0, 2.0, 3.0];
        let s: Vec<f64> = u.iter().map(|x: &f64| (10.0 - x * x).sqrt()).collect();
        let b = batch(&u, &s, &[0.0; 3]);
        assert!((corr_coeff(&b).unwrap().0 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_examples() {
        let ll0 = log_likelihood(&batch(&[0.0], &[1.0], &[0.0])).unwrap();
        assert!((ll0 + 0.918_938_533).abs() < 1e-8);
        let ll1 = log_likelihood(&batch(&[1.0], &[1.0], &[0.0])).unwrap();
        assert!((ll1 + 1.418_938_533).abs() < 1e-8);
        let shifted = log_likelihood(&batch(&[101.0], &[1.0], &[100.0])).unwrap();
        assert!((shifted - ll1).abs() < 1e-12);
    }

    #[test]
    fn sigma_scale_examples() {
        let b = batch(&[2.0, -2.0], &[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(sigma_scale(&b).unwrap(), 2.0);
        assert_eq!(recalibrated_uce(&b, 2.0, 10).unwrap(), 0.0);
        let b = batch(&[0.5, -3.0, 1.5], &[0.5, 3.0, 1.5], &[0.0; 3]);
        assert!((sigma_scale(&b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(recalibrated_uce(&b, 1.0, 10).unwrap(), uce(&b, 10).unwrap().0);
    }

    #[test]
    fn recalibration_removes_constant_miscalibration() {
        let u = [0.3, -1.2, 2.0, 0.7, -0.1];
        let c = 2.5;
        let s: Vec<f64> = u.iter().map(|x: &f64| c * x.abs()).collect();
        let b = batch(&u, &s, &[0.0; 5]);
        let s_star = sigma_scale(&b).unwrap();
        assert!((s_star - 1.0 / c).abs() < 1e-12);
        assert!(recalibrated_uce(&b, s_star, 10).unwrap() < 1e-12);
    }

    #[test]
    fn from_predictions_roundtrip() {
        let preds = vec![
            PredictiveDistribution { mean: vec![1.0, 2.0], sigma: vec![0.5, 0.6] },
            PredictiveDistribution { mean: vec![3.0, 4.0], sigma: vec![0.7, 0.8] },
        ];
        let b = EvalBatch::from_predictions(&preds, array![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(b.mean, array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(b.sigma[[1, 1]], 0.8);
        assert!(EvalBatch::from_predictions(&preds, array![[0.0, 0.0]]).is_err());
    }
}

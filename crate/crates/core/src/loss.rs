//! Structure-similarity reconstruction objective: trend, seasonality and shape
//! components, their weighted combination, and the MSE baseline.
//!
//! Every `*_grad` function returns the gradient with respect to the
//! reconstruction, laid out row-major like [`Window::data`]. All L1 kinks use
//! the zero subgradient, so a perfect reconstruction is a stationary point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, SpectralNorm};
use crate::timeseries::Window;

/// Trend weight that performed best in the original hyperparameter sweep.
pub const DEFAULT_LAMBDA1: f64 = 1.5;
/// Seasonality weight that performed best in the original hyperparameter sweep.
pub const DEFAULT_LAMBDA2: f64 = 10.0;
pub const DEFAULT_LAMBDA3: f64 = 1.0;
/// Stability constant inside the trend logarithm.
pub const DEFAULT_EPSILON: f64 = 1e-7;

/// Which form of the trend term to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVariant {
    /// `-ln(D + eps)`, exactly as originally written. Decreases as the slope
    /// discrepancy `D` grows.
    Paper,
    /// `ln(D + eps) - ln(eps)`: zero at `D = 0` and increasing in `D`.
    #[default]
    Monotone,
}

/// Component weights and trend constants of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub epsilon: f64,
    pub trend_variant: TrendVariant,
    pub spectral_norm: SpectralNorm,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            lambda3: DEFAULT_LAMBDA3,
            epsilon: DEFAULT_EPSILON,
            trend_variant: TrendVariant::Monotone,
            spectral_norm: SpectralNorm::Modulus,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda1, self.lambda2, self.lambda3];
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "lambdas must be finite and non-negative, got {lambdas:?}"
            )));
        }
        if lambdas.iter().all(|&l| l == 0.0) {
            return Err(Error::InvalidWeights("all lambdas are zero".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidWeights(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-component values and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub trend: f64,
    pub seasonality: f64,
    pub shape: f64,
    pub total: f64,
}

fn check_shapes(x: &Window, x_rec: &Window) -> Result<()> {
    if x.shape() != x_rec.shape() {
        return Err(Error::ShapeMismatch {
            left: x.shape(),
            right: x_rec.shape(),
        });
    }
    Ok(())
}

/// Normalized time axis `tau_j = -1 + 2j/(t-1)` on `[-1, 1]`.
pub fn time_axis(t: usize) -> Vec<f64> {
    debug_assert!(t >= 2);
    let denom = (t - 1) as f64;
    (0..t).map(|j| -1.0 + 2.0 * j as f64 / denom).collect()
}

/// Least-squares slope of each channel against [`time_axis`].
///
/// The axis is centered, so the slope is `sum(tau x) / sum(tau^2)` and does
/// not depend on the intercept.
pub fn trend_fit(w: &Window) -> Result<Vec<f64>> {
    let t = w.len();
    if t < 2 {
        return Err(Error::WindowTooShort(t));
    }
    let tau = time_axis(t);
    let norm: f64 = tau.iter().map(|v| v * v).sum();
    let d = w.channels();
    let mut slopes = vec![0.0; d];
    for (row, tj) in w.data().chunks_exact(d).zip(&tau) {
        for (s, v) in slopes.iter_mut().zip(row) {
            *s += tj * v;
        }
    }
    slopes.iter_mut().for_each(|s| *s /= norm);
    Ok(slopes)
}

/// Summed L1 distance between the fitted linear trends (intercepts excluded).
fn trend_discrepancy(x: &Window, x_rec: &Window) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_shapes(x, x_rec)?;
    let a = trend_fit(x)?;
    let b = trend_fit(x_rec)?;
    let abs_tau: f64 = time_axis(x.len()).iter().map(|v| v.abs()).sum();
    let d = a.iter().zip(&b).map(|(a, b)| (a - b).abs()).sum::<f64>() * abs_tau;
    Ok((d, a, b))
}

fn trend_value(d: f64, epsilon: f64, variant: TrendVariant) -> f64 {
    match variant {
        TrendVariant::Paper => -(d + epsilon).ln(),
        TrendVariant::Monotone => (d + epsilon).ln() - epsilon.ln(),
    }
}

pub fn trend_loss(x: &Window, x_rec: &Window, epsilon: f64, variant: TrendVariant) -> Result<f64> {
    let (d, _, _) = trend_discrepancy(x, x_rec)?;
    Ok(trend_value(d, epsilon, variant))
}

pub fn trend_loss_grad(
    x: &Window,
    x_rec: &Window,
    epsilon: f64,
    variant: TrendVariant,
) -> Result<Vec<f64>> {
    let (d, a, b) = trend_discrepancy(x, x_rec)?;
    let t = x.len();
    let channels = x.channels();
    let tau = time_axis(t);
    let tau_sq: f64 = tau.iter().map(|v| v * v).sum();
    let abs_tau: f64 = tau.iter().map(|v| v.abs()).sum();
    let outer = match variant {
        TrendVariant::Paper => -1.0 / (d + epsilon),
        TrendVariant::Monotone => 1.0 / (d + epsilon),
    };
    // dD/db_c = abs_tau * sign(b_c - a_c); db_c/dx_rec[j, c] = tau_j / tau_sq
    let per_channel: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(a, b)| {
            let diff = b - a;
            let s = if diff == 0.0 { 0.0 } else { diff.signum() };
            outer * abs_tau * s / tau_sq
        })
        .collect();
    let mut grad = Vec::with_capacity(t * channels);
    for tj in &tau {
        grad.extend(per_channel.iter().map(|c| c * tj));
    }
    Ok(grad)
}

/// Spectral L1 distance summed over channels.
pub fn seasonality_loss(x: &Window, x_rec: &Window) -> Result<f64> {
    seasonality_loss_with(x, x_rec, SpectralNorm::Modulus)
}

pub fn seasonality_loss_with(x: &Window, x_rec: &Window, norm: SpectralNorm) -> Result<f64> {
    check_shapes(x, x_rec)?;
    (0..x.channels())
        .map(|c| spectral::spectral_l1_with(&x.channel(c), &x_rec.channel(c), norm))
        .sum()
}

pub fn seasonality_loss_grad(x: &Window, x_rec: &Window) -> Result<Vec<f64>> {
    seasonality_loss_grad_with(x, x_rec, SpectralNorm::Modulus)
}

pub fn seasonality_loss_grad_with(
    x: &Window,
    x_rec: &Window,
    norm: SpectralNorm,
) -> Result<Vec<f64>> {
    check_shapes(x, x_rec)?;
    let d = x.channels();
    let mut grad = vec![0.0; x.data().len()];
    for c in 0..d {
        let g = spectral::spectral_l1_grad_with(&x.channel(c), &x_rec.channel(c), norm)?;
        for (j, v) in g.into_iter().enumerate() {
            grad[j * d + c] = v;
        }
    }
    Ok(grad)
}

/// Pointwise absolute error summed over all entries.
pub fn shape_loss(x: &Window, x_rec: &Window) -> Result<f64> {
    check_shapes(x, x_rec)?;
    Ok(x.data()
        .iter()
        .zip(x_rec.data())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

pub fn shape_loss_grad(x: &Window, x_rec: &Window) -> Result<Vec<f64>> {
    check_shapes(x, x_rec)?;
    Ok(x.data()
        .iter()
        .zip(x_rec.data())
        .map(|(a, b)| {
            let diff = b - a;
            if diff == 0.0 {
                0.0
            } else {
                diff.signum()
            }
        })
        .collect())
}

/// Evaluates all three components and the weighted total.
pub fn strad_loss(x: &Window, x_rec: &Window, w: &LossWeights) -> Result<LossBreakdown> {
    w.validate()?;
    check_shapes(x, x_rec)?;
    let trend = trend_loss(x, x_rec, w.epsilon, w.trend_variant)?;
    let seasonality = seasonality_loss_with(x, x_rec, w.spectral_norm)?;
    let shape = shape_loss(x, x_rec)?;
    Ok(LossBreakdown {
        trend,
        seasonality,
        shape,
        total: w.lambda1 * trend + w.lambda2 * seasonality + w.lambda3 * shape,
    })
}

/// Gradient of the weighted total. Components whose weight is zero are skipped.
pub fn strad_grad(x: &Window, x_rec: &Window, w: &LossWeights) -> Result<Vec<f64>> {
    w.validate()?;
    check_shapes(x, x_rec)?;
    let mut grad = vec![0.0; x.data().len()];
    let mut add = |lambda: f64, g: Vec<f64>| {
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += lambda * v;
        }
    };
    if w.lambda1 != 0.0 {
        add(
            w.lambda1,
            trend_loss_grad(x, x_rec, w.epsilon, w.trend_variant)?,
        );
    }
    if w.lambda2 != 0.0 {
        add(
            w.lambda2,
            seasonality_loss_grad_with(x, x_rec, w.spectral_norm)?,
        );
    }
    if w.lambda3 != 0.0 {
        add(w.lambda3, shape_loss_grad(x, x_rec)?);
    }
    Ok(grad)
}

/// Mean squared error over all entries.
pub fn mse_loss(x: &Window, x_rec: &Window) -> Result<f64> {
    check_shapes(x, x_rec)?;
    let n = x.data().len() as f64;
    Ok(x.data()
        .iter()
        .zip(x_rec.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

pub fn mse_loss_grad(x: &Window, x_rec: &Window) -> Result<Vec<f64>> {
    check_shapes(x, x_rec)?;
    let n = x.data().len() as f64;
    Ok(x.data()
        .iter()
        .zip(x_rec.data())
        .map(|(a, b)| 2.0 * (b - a) / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(v: &[f64]) -> Window {
        Window::from_univariate(v.to_vec()).unwrap()
    }

    #[test]
    fn slope_examples() {
        let tau = time_axis(4);
        assert!((tau[1] + 1.0 / 3.0).abs() < 1e-15);
        let s = trend_fit(&uni(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        assert!((s[0] - 1.5).abs() < 1e-12);
        assert_eq!(trend_fit(&uni(&[4.0; 6])).unwrap(), vec![0.0]);
        let fwd = trend_fit(&uni(&[0.2, -1.0, 3.0, 0.5, 2.0])).unwrap()[0];
        let rev = trend_fit(&uni(&[2.0, 0.5, 3.0, -1.0, 0.2])).unwrap()[0];
        assert!((fwd + rev).abs() < 1e-12);
        assert!(matches!(
            trend_fit(&uni(&[1.0])),
            Err(Error::WindowTooShort(1))
        ));
    }

    #[test]
    fn trend_identity_values() {
        let x = uni(&[0.5, 1.0, -2.0, 3.0]);
        let paper = trend_loss(&x, &x, 1e-7, TrendVariant::Paper).unwrap();
        assert!((paper - 16.1181).abs() < 1e-3);
        assert_eq!(
            trend_loss(&x, &x, 0.3, TrendVariant::Monotone).unwrap(),
            0.0
        );
        assert!(trend_loss_grad(&x, &x, 1e-7, TrendVariant::Paper)
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn trend_worked_discrepancy() {
        // slopes 1.5 and 0.5 on t = 4, sum |tau| = 8/3
        let x = uni(&[0.0, 1.0, 2.0, 3.0]);
        let y = uni(&[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!((trend_fit(&y).unwrap()[0] - 0.5).abs() < 1e-12);
        let v = trend_loss(&x, &y, 1e-7, TrendVariant::Paper).unwrap();
        assert!((v + (8.0f64 / 3.0 + 1e-7).ln()).abs() < 1e-12);
    }

    #[test]
    fn trend_ignores_offsets() {
        let x = uni(&[0.1, 0.9, 0.3, 1.2, -0.4]);
        let y = uni(&[1.0, 0.2, 0.4, 0.0, 0.8]);
        let g = trend_loss_grad(&x, &y, 1e-7, TrendVariant::Monotone).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        let shifted = uni(&y.data().iter().map(|v| v + 3.0).collect::<Vec<_>>());
        let a = trend_loss(&x, &y, 1e-7, TrendVariant::Monotone).unwrap();
        let b = trend_loss(&x, &shifted, 1e-7, TrendVariant::Monotone).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn shape_and_mse_examples() {
        let x = uni(&[1.0, 2.0]);
        let z = uni(&[0.0, 0.0]);
        assert_eq!(shape_loss(&x, &z).unwrap(), 3.0);
        assert_eq!(shape_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(mse_loss(&x, &z).unwrap(), 2.5);
        assert_eq!(mse_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(shape_loss_grad(&x, &z).unwrap(), vec![-1.0, -1.0]);
        assert_eq!(mse_loss_grad(&x, &z).unwrap(), vec![-1.0, -2.0]);
    }

    #[test]
    fn seasonality_delegates_per_channel() {
        let x = Window::new(vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0], 4, 2, 0).unwrap();
        let z = Window::new(vec![0.0; 8], 4, 2, 0).unwrap();
        let total = seasonality_loss(&x, &z).unwrap();
        let c0 = spectral::spectral_l1(&x.channel(0), &z.channel(0)).unwrap();
        let c1 = spectral::spectral_l1(&x.channel(1), &z.channel(1)).unwrap();
        assert_eq!(total, c0 + c1);
        assert_eq!(seasonality_loss(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = uni(&[1.0, 2.0, 3.0]);
        let b = uni(&[1.0, 2.0]);
        assert!(matches!(
            shape_loss(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            mse_loss_grad(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            strad_loss(&a, &b, &LossWeights::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn weights_validation() {
        let mut w = LossWeights::default();
        assert!(w.validate().is_ok());
        w.epsilon = 0.0;
        assert!(w.validate().is_err());
        let w = LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
        let w = LossWeights {
            lambda2: -1.0,
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn defaults_match_reported_hyperparameters() {
        let w = LossWeights::default();
        assert_eq!(
            (w.lambda1, w.lambda2, w.lambda3, w.epsilon),
            (1.5, 10.0, 1.0, 1e-7)
        );
        assert_eq!(w.trend_variant, TrendVariant::Monotone);
    }

    #[test]
    fn identity_breakdown_is_zero_for_monotone() {
        let x = Window::new(vec![0.3, -0.2, 1.0, 0.4, 0.9, 0.0], 3, 2, 0).unwrap();
        let b = strad_loss(&x, &x, &LossWeights::default()).unwrap();
        assert_eq!(b, LossBreakdown::default());
        assert!(strad_grad(&x, &x, &LossWeights::default())
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }
}

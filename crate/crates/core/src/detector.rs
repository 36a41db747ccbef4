//! Training loop, per-point anomaly scores and threshold selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AdamConfig, AdamState, DenseAutoencoder};
use crate::error::{Error, Result};
use crate::loss::{self, LossBreakdown, LossWeights, TrendVariant};
use crate::metrics::{self, Metric};
use crate::timeseries::{sliding_windows, TimeSeries, Window, WindowSet};

/// Reconstruction objective used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Strad,
    /// `mix * MSE + (1 - mix) * StrAD`
    MsePlusStrad,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Strad => "strad",
            LossKind::MsePlusStrad => "mse_plus_strad",
        }
    }

    /// Whether training reports a component breakdown.
    pub fn has_breakdown(self) -> bool {
        !matches!(self, LossKind::Mse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub weights: LossWeights,
    pub mix: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            seed: 0,
            loss: LossKind::Strad,
            weights: LossWeights::default(),
            mix: 0.5,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidTrainConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(Error::InvalidTrainConfig(format!(
                "mix {} outside [0, 1]",
                self.mix
            )));
        }
        if self.loss != LossKind::Mse {
            self.weights.validate()?;
        }
        Ok(())
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    /// Mean StrAD components, for objectives that include them.
    pub breakdown: Option<LossBreakdown>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DenseAutoencoder,
    pub history: Vec<EpochRecord>,
    pub steps: u64,
}

/// Loss value, optional StrAD breakdown, and gradient on the reconstruction.
pub fn objective(
    kind: LossKind,
    weights: &LossWeights,
    mix: f64,
    x: &Window,
    rec: &Window,
) -> Result<(f64, Option<LossBreakdown>, Vec<f64>)> {
    match kind {
        LossKind::Mse => Ok((loss::mse_loss(x, rec)?, None, loss::mse_loss_grad(x, rec)?)),
        LossKind::Strad => {
            let b = loss::strad_loss(x, rec, weights)?;
            Ok((b.total, Some(b), loss::strad_grad(x, rec, weights)?))
        }
        LossKind::MsePlusStrad => {
            let mse = loss::mse_loss(x, rec)?;
            let b = loss::strad_loss(x, rec, weights)?;
            let g_mse = loss::mse_loss_grad(x, rec)?;
            let g_strad = loss::strad_grad(x, rec, weights)?;
            let grad = g_mse
                .iter()
                .zip(&g_strad)
                .map(|(a, b)| mix * a + (1.0 - mix) * b)
                .collect();
            Ok((mix * mse + (1.0 - mix) * b.total, Some(b), grad))
        }
    }
}

/// Trains `model` on `windows`: each epoch visits a seeded permutation in
/// batches and takes one Adam step on the batch-mean gradient.
pub fn train(
    model: DenseAutoencoder,
    windows: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let mut model = model;
    let mut adam = AdamState::new(&model, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let track = cfg.loss.has_breakdown();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut parts = LossBreakdown::default();
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = model.zeroed();
            for &i in batch {
                let x = &windows.windows()[i];
                let mut value = 0.0;
                let mut breakdown = None;
                model.accumulate_gradients(
                    x,
                    |rec| {
                        let (v, b, g) = objective(cfg.loss, &cfg.weights, cfg.mix, x, rec)?;
                        value = v;
                        breakdown = b;
                        Ok(g)
                    },
                    &mut acc,
                )?;
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        what: format!("loss at epoch {epoch}, window {}", x.start()),
                    });
                }
                total += value;
                if let Some(b) = breakdown {
                    parts.trend += b.trend;
                    parts.seasonality += b.seasonality;
                    parts.shape += b.shape;
                    parts.total += b.total;
                }
            }
            acc.scale(1.0 / batch.len() as f64);
            adam.step(&mut model, &acc)?;
        }
        let n = windows.len() as f64;
        history.push(EpochRecord {
            epoch,
            total: total / n,
            breakdown: track.then(|| LossBreakdown {
                trend: parts.trend / n,
                seasonality: parts.seasonality / n,
                shape: parts.shape / n,
                total: parts.total / n,
            }),
        });
    }
    Ok(TrainOutcome {
        model,
        history,
        steps: adam.step,
    })
}

/// How window reconstructions become point scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// `lambda3 * sum_c |x - x'|` per point.
    ShapeOnly,
    /// Shape term plus `(lambda1 * trend + lambda2 * seasonality) / t`
    /// spread over every point of the window.
    #[default]
    StradBroadcast,
}

/// One anomaly score per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    /// Number of windows covering each point.
    pub coverage: Vec<usize>,
}

/// Scores every point of `series` by averaging the contributions of all
/// windows that cover it. Uncovered points get score 0.
///
/// The trend term always uses the monotone variant so that scores grow with
/// trend discrepancy.
pub fn score(
    model: &DenseAutoencoder,
    series: &TimeSeries,
    length: usize,
    stride: usize,
    weights: &LossWeights,
    mode: ScoreMode,
) -> Result<ScoreSeries> {
    let windows = sliding_windows(series, length, stride)?;
    let weights = LossWeights {
        trend_variant: TrendVariant::Monotone,
        ..*weights
    };
    if mode == ScoreMode::StradBroadcast {
        weights.validate()?;
    }
    let m = series.len();
    let d = series.channels();
    let mut sums = vec![0.0; m];
    let mut coverage = vec![0usize; m];
    for w in &windows {
        let rec = model.forward(w)?;
        let spread = match mode {
            ScoreMode::ShapeOnly => 0.0,
            ScoreMode::StradBroadcast => {
                let mut window_level = 0.0;
                if weights.lambda1 != 0.0 && length >= 2 {
                    window_level += weights.lambda1
                        * loss::trend_loss(w, &rec, weights.epsilon, TrendVariant::Monotone)?;
                }
                if weights.lambda2 != 0.0 {
                    window_level += weights.lambda2
                        * loss::seasonality_loss_with(w, &rec, weights.spectral_norm)?;
                }
                window_level / length as f64
            }
        };
        for (j, (xr, rr)) in w
            .data()
            .chunks_exact(d)
            .zip(rec.data().chunks_exact(d))
            .enumerate()
        {
            let shape: f64 = xr.iter().zip(rr).map(|(a, b)| (a - b).abs()).sum();
            let p = w.start() + j;
            sums[p] += weights.lambda3 * shape + spread;
            coverage[p] += 1;
        }
    }
    let scores: Vec<f64> = sums
        .iter()
        .zip(&coverage)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            what: "anomaly score".into(),
        });
    }
    Ok(ScoreSeries { scores, coverage })
}

/// A point is flagged when its score is positive and reaches the threshold.
pub fn is_anomalous(score: f64, threshold: f64) -> bool {
    score > 0.0 && score >= threshold
}

pub fn predict(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores
        .iter()
        .map(|&s| u8::from(is_anomalous(s, threshold)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
}

/// Sweeps every distinct score (plus `+inf`) and keeps the threshold with the
/// best F1 under `metric`, preferring the higher threshold on ties.
pub fn threshold_best_f1(scores: &[f64], labels: &[u8], metric: Metric) -> Result<ThresholdChoice> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let mut candidates = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.push(f64::INFINITY);
    let mut best = ThresholdChoice {
        threshold: f64::INFINITY,
        f1: f64::NEG_INFINITY,
    };
    for thr in candidates {
        let f1 = metrics::counts(&predict(scores, thr), labels, metric)?.f1();
        if f1 >= best.f1 {
            best = ThresholdChoice { threshold: thr, f1 };
        }
    }
    Ok(best)
}

/// Linear-interpolation quantile of training scores.
pub fn threshold_quantile(train_scores: &[f64], q: f64) -> Result<f64> {
    if train_scores.is_empty() {
        return Err(Error::Empty("no training scores".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile {q} outside (0, 1]"
        )));
    }
    let mut sorted = train_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

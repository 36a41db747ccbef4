//! Data preparation, training, scoring and thresholding shared by the
//! commands.

use strad::autoencoder::DenseAutoencoder;
use strad::detector::{self, LossKind, TrainOutcome};
use strad::metrics::{self, ConfusionCounts, Metric};
use strad::synth;
use strad::timeseries::{self, segments_from_labels, TimeSeries};

use crate::config::{DatasetConfig, ExperimentConfig, ThresholdMode};
use crate::error::{CliError, Result};

/// Train and test splits of one dataset, normalized with train statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub train: TimeSeries,
    pub test: TimeSeries,
}

impl Prepared {
    pub fn test_labels(&self) -> Result<&[u8]> {
        self.test
            .labels()
            .ok_or_else(|| strad::Error::NoLabels(self.name.clone()).into())
    }

    pub fn segment_count(&self) -> Result<usize> {
        Ok(segments_from_labels(self.test_labels()?).len())
    }
}

pub fn prepare(cfg: &ExperimentConfig, ds: &DatasetConfig) -> Result<Prepared> {
    let (train, test) = match (&ds.synth, &ds.csv) {
        (Some(s), _) => {
            let b = synth::make_benchmark(&s.generator(cfg.seed), &s.anomaly, s.train_fraction)?;
            (b.train, b.test)
        }
        (None, Some(c)) => {
            let cols: Vec<&str> = c.value_columns.iter().map(String::as_str).collect();
            let train = timeseries::load_csv(&c.train, &cols, None)?;
            let test = timeseries::load_csv(&c.test, &cols, Some(&c.label_column))?;
            (train, test)
        }
        (None, None) => unreachable!("validated config"),
    };
    let (train, test) = if cfg.normalize {
        let stats = timeseries::fit_normalization(&train);
        (
            timeseries::apply_normalization(&train, &stats)?,
            timeseries::apply_normalization(&test, &stats)?,
        )
    } else {
        (train, test)
    };
    Ok(Prepared {
        name: ds.name.clone(),
        train,
        test,
    })
}

pub fn train_model(
    cfg: &ExperimentConfig,
    train: &TimeSeries,
    loss: LossKind,
    seed: u64,
) -> Result<TrainOutcome> {
    let t = cfg.window.length;
    let windows = timeseries::sliding_windows(train, t, cfg.window.train_stride())?;
    let model = DenseAutoencoder::init(&cfg.layer_sizes(t * train.channels()), seed)?;
    let train_cfg = cfg.train_config(loss, cfg.loss, seed);
    Ok(detector::train(model, &windows, &train_cfg)?)
}

/// Errors unless `model` maps `t x d` windows of `series` to themselves.
pub fn check_compatible(
    cfg: &ExperimentConfig,
    model: &DenseAutoencoder,
    series: &TimeSeries,
) -> Result<()> {
    let want = cfg.window.length * series.channels();
    if model.input_size() != want || model.output_size() != want {
        return Err(strad::Error::Checkpoint(format!(
            "model maps {} -> {} values but the config needs {want} (t={}, d={})",
            model.input_size(),
            model.output_size(),
            cfg.window.length,
            series.channels()
        ))
        .into());
    }
    Ok(())
}

pub fn score_series(
    cfg: &ExperimentConfig,
    model: &DenseAutoencoder,
    series: &TimeSeries,
) -> Result<Vec<f64>> {
    check_compatible(cfg, model, series)?;
    let s = detector::score(
        model,
        series,
        cfg.window.length,
        cfg.window.score_stride,
        &cfg.score_weights(),
        cfg.score.mode,
    )?;
    Ok(s.scores)
}

/// Threshold fixed by the config without looking at test labels, if any.
pub fn label_free_threshold(
    cfg: &ExperimentConfig,
    model: &DenseAutoencoder,
    data: &Prepared,
) -> Result<Option<f64>> {
    match cfg.threshold.mode {
        ThresholdMode::BestF1 => Ok(None),
        ThresholdMode::Quantile => {
            let train_scores = score_series(cfg, model, &data.train)?;
            Ok(Some(detector::threshold_quantile(
                &train_scores,
                cfg.threshold.quantile,
            )?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult {
    pub metric: Metric,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub f1: f64,
}

/// F1 per metric at `threshold`, or at the best-F1 threshold of each metric.
pub fn evaluate(
    scores: &[f64],
    labels: &[u8],
    metrics_list: &[Metric],
    threshold: Option<f64>,
) -> Result<Vec<MetricResult>> {
    metrics_list
        .iter()
        .map(|&metric| {
            let thr = match threshold {
                Some(t) => t,
                None => detector::threshold_best_f1(scores, labels, metric)?.threshold,
            };
            let counts = metrics::counts(&detector::predict(scores, thr), labels, metric)?;
            Ok(MetricResult {
                metric,
                threshold: thr,
                counts,
                f1: counts.f1(),
            })
        })
        .collect()
}

/// Outcome of one train-score-evaluate job.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub segments: usize,
    pub results: Vec<MetricResult>,
}

impl RunResult {
    pub fn f1(&self, metric: Metric) -> f64 {
        self.results
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| r.f1)
            .unwrap_or(f64::NAN)
    }
}

pub fn run_job(
    cfg: &ExperimentConfig,
    data: &Prepared,
    loss: LossKind,
    seed: u64,
) -> Result<RunResult> {
    let labels = data.test_labels()?;
    let outcome = train_model(cfg, &data.train, loss, seed)?;
    let scores = score_series(cfg, &outcome.model, &data.test)?;
    let threshold = label_free_threshold(cfg, &outcome.model, data)?;
    Ok(RunResult {
        segments: segments_from_labels(labels).len(),
        results: evaluate(&scores, labels, &cfg.eval.metrics, threshold)?,
    })
}

/// Runs `f` over `items` on `jobs` threads, keeping input order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

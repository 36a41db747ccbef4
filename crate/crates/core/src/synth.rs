//! Synthetic series built from a periodic shapelet plus a linear trend, and
//! labeled point- and pattern-wise anomaly injection.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Seed offset separating the test generation from the training one.
pub const TEST_SEED_OFFSET: u64 = 0x9E37_79B9;

/// Half-width of the neighbourhood used by contextual point anomalies.
pub const CONTEXT_RADIUS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shapelet {
    Sine,
    Square,
    Sawtooth,
}

impl Shapelet {
    /// Evaluates the unit-amplitude shapelet at phase angle `theta` (radians).
    pub fn eval(self, theta: f64) -> f64 {
        match self {
            Shapelet::Sine => theta.sin(),
            Shapelet::Square => {
                if cycle_position(theta) < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            Shapelet::Sawtooth => 2.0 * cycle_position(theta) - 1.0,
        }
    }

    /// The shapelet substituted in by a shapelet-pattern anomaly.
    pub fn alternate(self) -> Shapelet {
        match self {
            Shapelet::Sine => Shapelet::Square,
            Shapelet::Square => Shapelet::Sawtooth,
            Shapelet::Sawtooth => Shapelet::Sine,
        }
    }
}

fn cycle_position(theta: f64) -> f64 {
    (theta / (2.0 * PI)).rem_euclid(1.0)
}

/// Structure of one generated channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Cycles per sample, strictly between 0 and 0.5.
    pub frequency: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    /// Trend slope in units per sample.
    #[serde(default)]
    pub slope: f64,
    #[serde(default = "sine")]
    pub shapelet: Shapelet,
}

fn one() -> f64 {
    1.0
}

fn sine() -> Shapelet {
    Shapelet::Sine
}

impl ChannelConfig {
    fn angle(&self, j: f64) -> f64 {
        2.0 * PI * self.frequency * j + self.phase
    }

    fn periodic(&self, j: usize) -> f64 {
        self.amplitude * self.shapelet.eval(self.angle(j as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub length: usize,
    #[serde(rename = "channel")]
    pub channels: Vec<ChannelConfig>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidGenerator("length must be positive".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::InvalidGenerator(
                "at least one channel required".into(),
            ));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            if !(ch.frequency > 0.0 && ch.frequency < 0.5) {
                return Err(Error::InvalidGenerator(format!(
                    "channel {c}: frequency {} outside (0, 0.5)",
                    ch.frequency
                )));
            }
            if ![ch.amplitude, ch.phase, ch.slope]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::InvalidGenerator(format!(
                    "channel {c}: non-finite parameter"
                )));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidGenerator(format!(
                "noise_sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Generates `amplitude * shapelet(2 pi w j + phase) + slope * j + noise` per
/// channel, unlabeled.
pub fn generate_base(cfg: &GeneratorConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let d = cfg.channels.len();
    let mut values = Vec::with_capacity(cfg.length * d);
    for j in 0..cfg.length {
        for ch in &cfg.channels {
            values.push(ch.periodic(j) + ch.slope * j as f64);
        }
    }
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| Error::InvalidGenerator(e.to_string()))?;
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    TimeSeries::new("synthetic", values, d, Some(vec![0; cfg.length]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Adds `magnitude` channel standard deviations at one point.
    GlobalPoint,
    /// Replaces a point by its neighbourhood mean plus `magnitude` local
    /// standard deviations.
    ContextualPoint,
    /// Swaps the periodic shapelet for [`Shapelet::alternate`] scaled by
    /// `magnitude`.
    ShapeletPattern,
    /// Multiplies the frequency by `magnitude`, phase-continuous at the start.
    SeasonalPattern,
    /// Adds a ramp of slope `magnitude` per sample.
    TrendPattern,
}

impl AnomalyKind {
    pub fn is_point(self) -> bool {
        matches!(
            self,
            AnomalyKind::GlobalPoint | AnomalyKind::ContextualPoint
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub start: usize,
    #[serde(default = "unit_length")]
    pub length: usize,
    pub magnitude: f64,
    /// Affected channels; `None` means all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<usize>>,
}

fn unit_length() -> usize {
    1
}

impl AnomalySpec {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    fn invalid(&self, index: usize, reason: impl Into<String>) -> Error {
        Error::InvalidAnomaly {
            index,
            start: self.start,
            end: self.start.saturating_add(self.length),
            reason: reason.into(),
        }
    }

    fn validate(&self, index: usize, len: usize, channels: usize) -> Result<()> {
        if self.kind.is_point() && self.length != 1 {
            return Err(self.invalid(index, "point anomalies have length 1"));
        }
        if !self.kind.is_point() && self.length < 2 {
            return Err(self.invalid(index, "pattern anomalies need length >= 2"));
        }
        if self.start.checked_add(self.length).is_none_or(|e| e > len) {
            return Err(self.invalid(index, format!("range exceeds series length {len}")));
        }
        if !self.magnitude.is_finite() {
            return Err(self.invalid(index, "magnitude must be finite"));
        }
        if let Some(chs) = &self.channels {
            if chs.is_empty() || chs.iter().any(|&c| c >= channels) {
                return Err(self.invalid(index, format!("channel selector {chs:?} invalid")));
            }
        }
        Ok(())
    }

    fn selected(&self, channels: usize) -> Vec<usize> {
        self.channels
            .clone()
            .unwrap_or_else(|| (0..channels).collect())
    }
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Applies one anomaly to `series`, which must have been generated from
/// `cfg` (pattern kinds re-evaluate the channel's periodic component).
/// Labels are set to 1 exactly on the injected range; every other value is
/// left bit-identical.
pub fn inject(
    series: &TimeSeries,
    spec: &AnomalySpec,
    cfg: &GeneratorConfig,
) -> Result<TimeSeries> {
    inject_indexed(series, spec, cfg, 0)
}

fn inject_indexed(
    series: &TimeSeries,
    spec: &AnomalySpec,
    cfg: &GeneratorConfig,
    index: usize,
) -> Result<TimeSeries> {
    let (len, d) = (series.len(), series.channels());
    if cfg.channels.len() != d {
        return Err(Error::ChannelMismatch {
            expected: cfg.channels.len(),
            found: d,
        });
    }
    spec.validate(index, len, d)?;
    let mut values = series.values().to_vec();
    let range = spec.start..spec.end();
    for c in spec.selected(d) {
        let ch = &cfg.channels[c];
        let at = |j: usize| j * d + c;
        match spec.kind {
            AnomalyKind::GlobalPoint => {
                let std = population_std(&series.channel(c));
                values[at(spec.start)] += spec.magnitude * std;
            }
            AnomalyKind::ContextualPoint => {
                let lo = spec.start.saturating_sub(CONTEXT_RADIUS);
                let hi = (spec.start + CONTEXT_RADIUS).min(len - 1);
                let neighbours: Vec<f64> = (lo..=hi)
                    .filter(|&j| j != spec.start)
                    .map(|j| series.value(j, c))
                    .collect();
                if neighbours.is_empty() {
                    values[at(spec.start)] += spec.magnitude;
                } else {
                    let mean = neighbours.iter().sum::<f64>() / neighbours.len() as f64;
                    values[at(spec.start)] = mean + spec.magnitude * population_std(&neighbours);
                }
            }
            AnomalyKind::ShapeletPattern => {
                let other = ch.shapelet.alternate();
                for j in range.clone() {
                    let theta = ch.angle(j as f64);
                    values[at(j)] +=
                        spec.magnitude * ch.amplitude * other.eval(theta) - ch.periodic(j);
                }
            }
            AnomalyKind::SeasonalPattern => {
                // magnitude 1 keeps the original frequency: values stay as they are
                if spec.magnitude != 1.0 {
                    let theta0 = ch.angle(spec.start as f64);
                    for j in range.clone() {
                        let theta = theta0
                            + 2.0 * PI * ch.frequency * spec.magnitude * (j - spec.start) as f64;
                        values[at(j)] += ch.amplitude * ch.shapelet.eval(theta) - ch.periodic(j);
                    }
                }
            }
            AnomalyKind::TrendPattern => {
                for j in range.clone() {
                    values[at(j)] += spec.magnitude * (j - spec.start) as f64;
                }
            }
        }
    }
    let mut labels = series
        .labels()
        .map(<[u8]>::to_vec)
        .unwrap_or_else(|| vec![0; len]);
    labels[range].iter_mut().for_each(|l| *l = 1);
    TimeSeries::new(series.name(), values, d, Some(labels))
}

/// Clean training split and anomalous test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: TimeSeries,
    pub test: TimeSeries,
}

/// Number of leading time steps that form the training split.
pub fn train_length(length: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidGenerator(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = (length as f64 * train_fraction).floor() as usize;
    if n == 0 || n >= length {
        return Err(Error::InvalidGenerator(format!(
            "train_fraction {train_fraction} leaves an empty split of length {length}"
        )));
    }
    Ok(n)
}

/// Builds a benchmark on a shared timeline `[0, length)`.
///
/// The training split is `[0, n)` of a clean generation with `cfg.seed`. The
/// test split is `[n, length)` of a second generation seeded with
/// `cfg.seed + TEST_SEED_OFFSET`, after applying `specs`. Spec positions are
/// timeline indices and must lie inside the test region.
pub fn make_benchmark(
    cfg: &GeneratorConfig,
    specs: &[AnomalySpec],
    train_fraction: f64,
) -> Result<Benchmark> {
    cfg.validate()?;
    let n = train_length(cfg.length, train_fraction)?;
    for (i, s) in specs.iter().enumerate() {
        if s.start < n || s.start.saturating_add(s.length) > cfg.length {
            return Err(s.invalid(i, format!("outside the test region [{n}, {})", cfg.length)));
        }
    }
    let train = generate_base(cfg)?.slice(0, n)?.with_name("train");
    let test_cfg = GeneratorConfig {
        seed: cfg.seed.wrapping_add(TEST_SEED_OFFSET),
        ..cfg.clone()
    };
    let mut test = generate_base(&test_cfg)?;
    for (i, s) in specs.iter().enumerate() {
        test = inject_indexed(&test, s, cfg, i)?;
    }
    let test = test.slice(n, cfg.length)?.with_name("test");
    Ok(Benchmark { train, test })
}

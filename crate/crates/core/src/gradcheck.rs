//! Central finite-difference verification of every analytic gradient.
//!
//! Relative error for one coordinate is `|g - fd| / max(|g|, |fd|, 1e-3 s)`
//! where `s` is the largest analytic gradient magnitude in the same sample,
//! which keeps round-off on near-zero coordinates from dominating.
//! Coordinates whose perturbation could cross an L1 kink (an absolute
//! difference, a slope difference, or a spectral difference bin closer than
//! [`KINK_MARGIN`] to zero) are skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::DenseAutoencoder;
use crate::error::Result;
use crate::loss::{self, LossWeights, TrendVariant};
use crate::spectral::{self, SpectralNorm};
use crate::timeseries::Window;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-4;
pub const LOSS_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
pub const MODEL_MSE_TOLERANCE: f64 = 1e-4;

/// Names of every suite, in report order.
pub const SUITES: [&str; 10] = [
    "trend_paper",
    "trend_monotone",
    "seasonality",
    "seasonality_parts",
    "shape",
    "strad_monotone",
    "strad_paper",
    "mse",
    "model_mse",
    "model_strad",
];

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Random windows per loss suite.
    pub samples: usize,
    /// Random (model, window) pairs per model suite.
    pub model_samples: usize,
    pub step: f64,
    /// Window lengths drawn for loss suites.
    pub lengths: Vec<usize>,
    /// Channel counts drawn for loss suites.
    pub channels: Vec<usize>,
    /// Test hook: corrupt the analytic gradient of the named suite.
    pub perturb: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 100,
            model_samples: 20,
            step: DEFAULT_STEP,
            lengths: vec![8, 16, 32],
            channels: vec![1, 3],
            perturb: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.tolerance
    }
}

/// Relative error with a scale-aware floor.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

type LossFn = dyn Fn(&Window, &Window) -> Result<f64>;
type GradFn = dyn Fn(&Window, &Window) -> Result<Vec<f64>>;

struct LossSuite {
    name: &'static str,
    value: Box<LossFn>,
    grad: Box<GradFn>,
    /// Which kinds of kink to guard against.
    shape_kinks: bool,
    trend_kinks: bool,
    spectral_kinks: bool,
}

fn loss_suites() -> Vec<LossSuite> {
    let mono = LossWeights::default();
    let paper = LossWeights {
        trend_variant: TrendVariant::Paper,
        ..mono
    };
    let eps = mono.epsilon;
    let parts = SpectralNorm::Parts;
    vec![
        LossSuite {
            name: "trend_paper",
            value: Box::new(move |x, y| loss::trend_loss(x, y, eps, TrendVariant::Paper)),
            grad: Box::new(move |x, y| loss::trend_loss_grad(x, y, eps, TrendVariant::Paper)),
            shape_kinks: false,
            trend_kinks: true,
            spectral_kinks: false,
        },
        LossSuite {
            name: "trend_monotone",
            value: Box::new(move |x, y| loss::trend_loss(x, y, eps, TrendVariant::Monotone)),
            grad: Box::new(move |x, y| loss::trend_loss_grad(x, y, eps, TrendVariant::Monotone)),
            shape_kinks: false,
            trend_kinks: true,
            spectral_kinks: false,
        },
        LossSuite {
            name: "seasonality",
            value: Box::new(loss::seasonality_loss),
            grad: Box::new(loss::seasonality_loss_grad),
            shape_kinks: false,
            trend_kinks: false,
            spectral_kinks: true,
        },
        LossSuite {
            name: "seasonality_parts",
            value: Box::new(move |x, y| loss::seasonality_loss_with(x, y, parts)),
            grad: Box::new(move |x, y| loss::seasonality_loss_grad_with(x, y, parts)),
            shape_kinks: false,
            trend_kinks: false,
            spectral_kinks: true,
        },
        LossSuite {
            name: "shape",
            value: Box::new(loss::shape_loss),
            grad: Box::new(loss::shape_loss_grad),
            shape_kinks: true,
            trend_kinks: false,
            spectral_kinks: false,
        },
        LossSuite {
            name: "strad_monotone",
            value: Box::new(move |x, y| loss::strad_loss(x, y, &mono).map(|b| b.total)),
            grad: Box::new(move |x, y| loss::strad_grad(x, y, &mono)),
            shape_kinks: true,
            trend_kinks: true,
            spectral_kinks: true,
        },
        LossSuite {
            name: "strad_paper",
            value: Box::new(move |x, y| loss::strad_loss(x, y, &paper).map(|b| b.total)),
            grad: Box::new(move |x, y| loss::strad_grad(x, y, &paper)),
            shape_kinks: true,
            trend_kinks: true,
            spectral_kinks: true,
        },
        LossSuite {
            name: "mse",
            value: Box::new(loss::mse_loss),
            grad: Box::new(loss::mse_loss_grad),
            shape_kinks: false,
            trend_kinks: false,
            spectral_kinks: false,
        },
    ]
}

fn random_window(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Window {
    let data = (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    Window::new(data, t, d, 0).expect("valid shape")
}

/// Per-coordinate flags: `true` where a perturbation may cross a kink.
fn kink_mask(
    x: &Window,
    y: &Window,
    suite_shape: bool,
    suite_trend: bool,
    suite_spec: bool,
) -> Result<Vec<bool>> {
    let d = x.channels();
    let mut mask = vec![false; x.data().len()];
    if suite_shape {
        for (i, (a, b)) in x.data().iter().zip(y.data()).enumerate() {
            if (a - b).abs() < KINK_MARGIN {
                mask[i] = true;
            }
        }
    }
    if suite_trend && x.len() >= 2 {
        let a = loss::trend_fit(x)?;
        let b = loss::trend_fit(y)?;
        for c in 0..d {
            if (a[c] - b[c]).abs() < KINK_MARGIN {
                (0..x.len()).for_each(|j| mask[j * d + c] = true);
            }
        }
    }
    if suite_spec {
        for c in 0..d {
            let diff: Vec<f64> = y
                .channel(c)
                .iter()
                .zip(x.channel(c))
                .map(|(p, q)| p - q)
                .collect();
            let s = spectral::fft_forward(&diff);
            if (0..s.len()).any(|k| s.modulus(k) < KINK_MARGIN) {
                (0..x.len()).for_each(|j| mask[j * d + c] = true);
            }
        }
    }
    Ok(mask)
}

fn parts_kink(x: &Window, y: &Window) -> Vec<bool> {
    let d = x.channels();
    let n = x.len();
    let mut mask = vec![false; x.data().len()];
    for c in 0..d {
        let diff: Vec<f64> = y
            .channel(c)
            .iter()
            .zip(x.channel(c))
            .map(|(p, q)| p - q)
            .collect();
        let s = spectral::fft_forward(&diff);
        let structural_zero = |k: usize| k == 0 || (n.is_multiple_of(2) && k == n / 2);
        // imaginary parts of bin 0 and the Nyquist bin are identically zero
        let near = (0..n).any(|k| {
            s.re[k].abs() < KINK_MARGIN || (!structural_zero(k) && s.im[k].abs() < KINK_MARGIN)
        });
        if near {
            (0..n).for_each(|j| mask[j * d + c] = true);
        }
    }
    mask
}

fn run_loss_suite(
    suite: &LossSuite,
    opts: &GradcheckOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SuiteResult> {
    let h = opts.step;
    let mut result = SuiteResult {
        name: suite.name.to_string(),
        max_rel_error: 0.0,
        tolerance: LOSS_TOLERANCE,
        checked: 0,
        skipped: 0,
    };
    for _ in 0..opts.samples {
        let t = opts.lengths[rng.random_range(0..opts.lengths.len())];
        let d = opts.channels[rng.random_range(0..opts.channels.len())];
        let x = random_window(rng, t, d);
        let y = random_window(rng, t, d);
        let mut grad = (suite.grad)(&x, &y)?;
        if opts.perturb.as_deref() == Some(suite.name) {
            grad.iter_mut().for_each(|g| *g += 0.1 * (1.0 + g.abs()));
        }
        let mut mask = kink_mask(
            &x,
            &y,
            suite.shape_kinks,
            suite.trend_kinks,
            suite.spectral_kinks,
        )?;
        if suite.name == "seasonality_parts" {
            for (m, p) in mask.iter_mut().zip(parts_kink(&x, &y)) {
                *m |= p;
            }
        }
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for i in 0..grad.len() {
            if mask[i] {
                result.skipped += 1;
                continue;
            }
            let mut plus = y.data().to_vec();
            plus[i] += h;
            let mut minus = y.data().to_vec();
            minus[i] -= h;
            let fd = ((suite.value)(&x, &y.with_data(plus)?)?
                - (suite.value)(&x, &y.with_data(minus)?)?)
                / (2.0 * h);
            let err = relative_error(grad[i], fd, scale);
            result.max_rel_error = result.max_rel_error.max(err);
            result.checked += 1;
        }
    }
    Ok(result)
}

/// Smallest distance of the reconstruction from any kink of the StrAD terms.
fn strad_kink_margin(x: &Window, rec: &Window) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for (a, b) in x.data().iter().zip(rec.data()) {
        margin = margin.min((a - b).abs());
    }
    if x.len() >= 2 {
        let a = loss::trend_fit(x)?;
        let b = loss::trend_fit(rec)?;
        for (p, q) in a.iter().zip(&b) {
            margin = margin.min((p - q).abs());
        }
    }
    for c in 0..x.channels() {
        let diff: Vec<f64> = rec
            .channel(c)
            .iter()
            .zip(x.channel(c))
            .map(|(p, q)| p - q)
            .collect();
        let s = spectral::fft_forward(&diff);
        for k in 0..s.len() {
            margin = margin.min(s.modulus(k));
        }
    }
    Ok(margin)
}

fn run_model_suite(
    name: &str,
    opts: &GradcheckOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SuiteResult> {
    let h = opts.step;
    let strad = name == "model_strad";
    let weights = LossWeights::default();
    let mut result = SuiteResult {
        name: name.to_string(),
        max_rel_error: 0.0,
        tolerance: if strad {
            MODEL_TOLERANCE
        } else {
            MODEL_MSE_TOLERANCE
        },
        checked: 0,
        skipped: 0,
    };
    let value = |x: &Window, rec: &Window| -> Result<f64> {
        if strad {
            Ok(loss::strad_loss(x, rec, &weights)?.total)
        } else {
            loss::mse_loss(x, rec)
        }
    };
    // (t, d) shapes keeping every model at or below 48 parameters
    let shapes = [(4usize, 1usize), (2, 2)];
    let mut drawn = 0;
    while drawn < opts.model_samples {
        let (t, d) = shapes[drawn % shapes.len()];
        let n = t * d;
        let model = DenseAutoencoder::init(&[n, 3, 2, 3, n], rng.random())?;
        let mut model = model;
        // nonzero biases so every parameter is exercised
        for layer in model.layers_mut() {
            layer
                .biases
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x = random_window(rng, t, d);
        let rec = model.forward(&x)?;
        if strad && strad_kink_margin(&x, &rec)? < 10.0 * KINK_MARGIN {
            result.skipped += model.parameter_count();
            continue;
        }
        drawn += 1;
        let (_, grads) = model.forward_backward(&x, |rec| {
            if strad {
                loss::strad_grad(&x, rec, &weights)
            } else {
                loss::mse_loss_grad(&x, rec)
            }
        })?;
        let mut analytic: Vec<f64> = grads.parameters().copied().collect();
        if opts.perturb.as_deref() == Some(name) {
            analytic
                .iter_mut()
                .for_each(|g| *g += 0.1 * (1.0 + g.abs()));
        }
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            if let Some(p) = plus.parameters_mut().nth(i) {
                *p += h;
            }
            let mut minus = model.clone();
            if let Some(p) = minus.parameters_mut().nth(i) {
                *p -= h;
            }
            let fd = (value(&x, &plus.forward(&x)?)? - value(&x, &minus.forward(&x)?)?) / (2.0 * h);
            result.max_rel_error = result.max_rel_error.max(relative_error(a, fd, scale));
            result.checked += 1;
        }
    }
    Ok(result)
}

/// Runs every suite in [`SUITES`] order.
pub fn run(opts: &GradcheckOptions) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::with_capacity(SUITES.len());
    for (i, suite) in loss_suites().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
        out.push(run_loss_suite(suite, opts, &mut rng)?);
    }
    for (i, name) in ["model_mse", "model_strad"].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(100 + i as u64));
        out.push(run_model_suite(name, opts, &mut rng)?);
    }
    Ok(out)
}

//! Structure-aware reconstruction objectives for time-series anomaly
//! detection.
//!
//! The combined objective compares a window and its reconstruction on three
//! structural axes: the fitted linear trend ([`loss::trend_loss`]), the
//! frequency content ([`loss::seasonality_loss`]) and the pointwise shape
//! ([`loss::shape_loss`]). Each term has an analytic gradient, so the
//! objective can drive the small dense autoencoder in [`autoencoder`], and
//! [`gradcheck`] verifies every gradient against finite differences.
//!
//! Evaluation follows the segment-level conventions in [`metrics`]: revised
//! point adjustment (RPA), point adjustment (PA), segment-weighted F1 across
//! sub-datasets, and improvement statistics relative to an MSE baseline.

pub mod autoencoder;
pub mod checkpoint;
pub mod detector;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod spectral;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use loss::{LossBreakdown, LossWeights, TrendVariant};
pub use timeseries::{Segment, TimeSeries, Window, WindowSet};

//! Multichannel series, CSV ingestion, z-score normalization, sliding windows
//! and label segment algebra.
//!
//! Values are stored row-major: the sample at time `j` on channel `c` lives at
//! `values[j * channels + c]`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to fitted per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// A real-valued multichannel series with optional per-point anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    values: Vec<f64>,
    len: usize,
    channels: usize,
    labels: Option<Vec<u8>>,
}

impl TimeSeries {
    /// Builds a series from row-major values.
    pub fn new(
        name: impl Into<String>,
        values: Vec<f64>,
        channels: usize,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let name = name.into();
        if channels == 0 {
            return Err(Error::InvalidSeries(
                "series needs at least one channel".into(),
            ));
        }
        if values.is_empty() || !values.len().is_multiple_of(channels) {
            return Err(Error::InvalidSeries(format!(
                "{} values cannot be split into {} channels",
                values.len(),
                channels
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value at row {}, channel {}",
                i / channels,
                i % channels
            )));
        }
        let len = values.len() / channels;
        if let Some(labels) = &labels {
            if labels.len() != len {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: labels.len(),
                });
            }
            if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
                return Err(Error::InvalidSeries(format!("label {bad} is not binary")));
            }
        }
        Ok(Self {
            name,
            values,
            len,
            channels,
            labels,
        })
    }

    /// Single-channel convenience constructor.
    pub fn univariate(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(name, values, 1, None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn value(&self, time: usize, channel: usize) -> f64 {
        self.values[time * self.channels + channel]
    }

    /// Copies one channel out as a contiguous vector.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Replaces the labels, validating length and binarity.
    pub fn with_labels(self, labels: Option<Vec<u8>>) -> Result<Self> {
        Self::new(self.name, self.values, self.channels, labels)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Returns the sub-series covering time indices `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} out of range for length {}",
                self.len
            )));
        }
        let values = self.values[start * self.channels..end * self.channels].to_vec();
        let labels = self.labels.as_ref().map(|l| l[start..end].to_vec());
        Self::new(self.name.clone(), values, self.channels, labels)
    }
}

/// A fixed-length multichannel excerpt, the unit of reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    data: Vec<f64>,
    len: usize,
    channels: usize,
    start: usize,
}

impl Window {
    pub fn new(data: Vec<f64>, len: usize, channels: usize, start: usize) -> Result<Self> {
        if len == 0 || channels == 0 || data.len() != len * channels {
            return Err(Error::InvalidArgument(format!(
                "window data of {} values does not match {len} x {channels}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            len,
            channels,
            start,
        })
    }

    /// Single-channel window starting at offset 0.
    pub fn from_univariate(data: Vec<f64>) -> Result<Self> {
        let len = data.len();
        Self::new(data, len, 1, 0)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Number of time steps `t`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.len, self.channels)
    }

    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Same shape and offset, different contents.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(data, self.len, self.channels, self.start)
    }
}

/// Ordered sliding windows over one series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    windows: Vec<Window>,
    window_length: usize,
    stride: usize,
}

impl WindowSet {
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Window> {
        self.windows.iter()
    }
}

impl<'a> IntoIterator for &'a WindowSet {
    type Item = &'a Window;
    type IntoIter = std::slice::Iter<'a, Window>;

    fn into_iter(self) -> Self::IntoIter {
        self.windows.iter()
    }
}

/// Cuts `series` into windows of `length` points every `stride` points.
///
/// Window `k` covers `[k * stride, k * stride + length)`; trailing points that
/// do not fill a whole window are not covered.
pub fn sliding_windows(series: &TimeSeries, length: usize, stride: usize) -> Result<WindowSet> {
    if stride == 0 {
        return Err(Error::InvalidStride(stride));
    }
    if length == 0 || length > series.len() {
        return Err(Error::WindowTooLong {
            window: length,
            series: series.len(),
        });
    }
    let d = series.channels();
    let count = (series.len() - length) / stride + 1;
    let windows = (0..count)
        .map(|k| {
            let start = k * stride;
            let data = series.values()[start * d..(start + length) * d].to_vec();
            Window {
                data,
                len: length,
                channels: d,
                start,
            }
        })
        .collect();
    Ok(WindowSet {
        windows,
        window_length: length,
        stride,
    })
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits per-channel mean and population standard deviation, with the standard
/// deviation floored at [`STD_FLOOR`].
pub fn fit_normalization(series: &TimeSeries) -> NormalizationStats {
    let d = series.channels();
    let m = series.len() as f64;
    let mut mean = vec![0.0; d];
    for row in series.values().chunks_exact(d) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; d];
    for row in series.values().chunks_exact(d) {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var
        .into_iter()
        .map(|v| (v / m).sqrt().max(STD_FLOOR))
        .collect();
    NormalizationStats { mean, std }
}

/// Applies `(x - mean) / std` per channel. Labels pass through unchanged.
pub fn apply_normalization(series: &TimeSeries, stats: &NormalizationStats) -> Result<TimeSeries> {
    let d = series.channels();
    if stats.mean.len() != d || stats.std.len() != d {
        return Err(Error::ChannelMismatch {
            expected: stats.mean.len(),
            found: d,
        });
    }
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - stats.mean[i % d]) / stats.std[i % d])
        .collect();
    TimeSeries::new(
        series.name(),
        values,
        d,
        series.labels().map(<[u8]>::to_vec),
    )
}

/// Inverse of [`apply_normalization`].
pub fn invert_normalization(series: &TimeSeries, stats: &NormalizationStats) -> Result<TimeSeries> {
    let d = series.channels();
    if stats.mean.len() != d || stats.std.len() != d {
        return Err(Error::ChannelMismatch {
            expected: stats.mean.len(),
            found: d,
        });
    }
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * stats.std[i % d] + stats.mean[i % d])
        .collect();
    TimeSeries::new(
        series.name(),
        values,
        d,
        series.labels().map(<[u8]>::to_vec),
    )
}

/// Inclusive range of time indices `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }

    pub fn overlaps(&self, other: &Segment) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Maximal runs of nonzero entries, as sorted inclusive segments.
pub fn segments_from_labels(labels: &[u8]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l != 0, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                out.push(Segment::new(s, i - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push(Segment::new(s, labels.len() - 1));
    }
    out
}

/// Expands segments back into a binary mask of length `len`.
pub fn labels_from_segments(segments: &[Segment], len: usize) -> Result<Vec<u8>> {
    let mut labels = vec![0u8; len];
    for s in segments {
        if s.end >= len || s.start > s.end {
            return Err(Error::SegmentOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
        labels[s.start..=s.end].iter_mut().for_each(|l| *l = 1);
    }
    Ok(labels)
}

/// Reads a labeled CSV file. See [`read_csv`].
pub fn load_csv(
    path: impl AsRef<Path>,
    value_columns: &[&str],
    label_column: Option<&str>,
) -> Result<TimeSeries> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    read_csv(file, &name, value_columns, label_column)
}

/// Parses CSV with a header row. Row order is time order; lines starting with
/// `#` are ignored.
///
/// Value columns are parsed as decimal floats and must be finite; the label
/// column, when given, must hold the integers `0` or `1`.
pub fn read_csv<R: Read>(
    reader: R,
    name: &str,
    value_columns: &[&str],
    label_column: Option<&str>,
) -> Result<TimeSeries> {
    if value_columns.is_empty() {
        return Err(Error::InvalidArgument("no value columns requested".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |col: &str| {
        headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::MissingColumn(col.to_string()))
    };
    let value_idx = value_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = label_column.map(find).transpose()?;

    let mut values = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::RaggedRow {
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (&idx, &col) in value_idx.iter().zip(value_columns) {
            let cell = &record[idx];
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                row,
                column: col.to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row,
                    column: col.to_string(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
        if let (Some(idx), Some(labels)) = (label_idx, labels.as_mut()) {
            let cell = &record[idx];
            let l = match cell {
                "0" => 0,
                "1" => 1,
                _ => {
                    return Err(Error::NonBinaryLabel {
                        row,
                        column: label_column.unwrap_or_default().to_string(),
                        value: cell.to_string(),
                    })
                }
            };
            labels.push(l);
        }
    }
    if values.is_empty() {
        return Err(Error::Empty(format!("no data rows in `{name}`")));
    }
    TimeSeries::new(name, values, value_columns.len(), labels)
}

/// Writes `series` as CSV with the given channel column names and, if the
/// series is labeled, a trailing `label_column`. Optional `preamble` lines are
/// emitted first as `#` comments.
pub fn write_csv<W: Write>(
    writer: W,
    series: &TimeSeries,
    value_columns: &[String],
    label_column: &str,
    preamble: &[String],
) -> Result<()> {
    if value_columns.len() != series.channels() {
        return Err(Error::ChannelMismatch {
            expected: series.channels(),
            found: value_columns.len(),
        });
    }
    let mut writer = writer;
    for line in preamble {
        writeln!(writer, "# {line}")?;
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = value_columns.iter().map(String::as_str).collect();
    if series.labels().is_some() {
        header.push(label_column);
    }
    wtr.write_record(&header)?;
    let d = series.channels();
    let mut record = Vec::with_capacity(d + 1);
    for (j, row) in series.values().chunks_exact(d).enumerate() {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        if let Some(labels) = series.labels() {
            record.push(labels[j].to_string());
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a score CSV with header `index,score`. Indices must run `0, 1, ...`
/// in order and scores must be finite. `#` lines are ignored.
pub fn read_scores<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "index" {
        return Err(Error::MissingColumn("index".into()));
    }
    if &headers[1] != "score" {
        return Err(Error::MissingColumn("score".into()));
    }
    let mut scores = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let index: usize = record[0].parse().map_err(|_| Error::NonNumericCell {
            row,
            column: "index".into(),
            value: record[0].to_string(),
        })?;
        if index != row {
            return Err(Error::InvalidArgument(format!(
                "score row {row} has index {index}"
            )));
        }
        let v: f64 = record[1].parse().map_err(|_| Error::NonNumericCell {
            row,
            column: "score".into(),
            value: record[1].to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                row,
                column: "score".into(),
                value: record[1].to_string(),
            });
        }
        scores.push(v);
    }
    if scores.is_empty() {
        return Err(Error::Empty("no score rows".into()));
    }
    Ok(scores)
}

/// Reads just the 0/1 label column of a CSV; other columns are not parsed.
pub fn read_labels<R: Read>(reader: R, label_column: &str) -> Result<Vec<u8>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        labels.push(match &record[idx] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::NonBinaryLabel {
                    row,
                    column: label_column.to_string(),
                    value: other.to_string(),
                })
            }
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("no label rows".into()));
    }
    Ok(labels)
}

/// Writes scores as `index,score` after optional `#` preamble lines. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_scores<W: Write>(mut writer: W, scores: &[f64], preamble: &[String]) -> Result<()> {
    for line in preamble {
        writeln!(writer, "# {line}")?;
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["index", "score"])?;
    for (i, s) in scores.iter().enumerate() {
        wtr.write_record([i.to_string(), s.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Default channel column names `x0, x1, ...`.
pub fn default_column_names(channels: usize) -> Vec<String> {
    (0..channels).map(|c| format!("x{c}")).collect()
}

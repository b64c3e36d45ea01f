//! Reducing a grid of per-cell scores to one number, and smoothing the result.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{contract, Error, Result, SnapshotError};
use crate::snapshot::{Decoder, Encoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AggregationKind {
    /// Mean over every cell, zeros included.
    Mean,
    /// Mean over the strictly positive cells, 0 when there are none.
    #[default]
    NonZeroMean,
}

impl AggregationKind {
    pub const ALL: [AggregationKind; 2] = [AggregationKind::Mean, AggregationKind::NonZeroMean];

    pub fn name(self) -> &'static str {
        match self {
            AggregationKind::Mean => "mean",
            AggregationKind::NonZeroMean => "nonzero_mean",
        }
    }

    pub fn apply(self, scores: &[f64]) -> Result<f64> {
        match self {
            AggregationKind::Mean => aggregate_mean(scores),
            AggregationKind::NonZeroMean => aggregate_nonzero_mean(scores),
        }
    }
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown aggregation '{s}' (expected mean or nonzero_mean)")))
    }
}

pub fn aggregate_mean(scores: &[f64]) -> Result<f64> {
    contract!(!scores.is_empty(), "cannot aggregate an empty score set");
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn aggregate_nonzero_mean(scores: &[f64]) -> Result<f64> {
    contract!(!scores.is_empty(), "cannot aggregate an empty score set");
    let (sum, n) = scores
        .iter()
        .filter(|&&x| x > 0.0)
        .fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
    Ok(if n > 0 { sum / n as f64 } else { 0.0 })
}

/// Trailing mean over at most `window` values; the first `window - 1` outputs
/// average whatever prefix is available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    let mut ma = MovingAverage::new(window)?;
    Ok(series.iter().map(|&x| ma.push(x)).collect())
}

/// Streaming form of [`moving_average`]; yields identical values.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    window: usize,
    values: VecDeque<f64>,
}

impl MovingAverage {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("smoothing window must be at least 1".into()));
        }
        Ok(Self {
            window,
            values: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(x);
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub(crate) fn encode(&self, enc: &mut Encoder) {
        enc.usize(self.window);
        enc.usize(self.values.len());
        for &v in &self.values {
            enc.f64(v);
        }
    }

    pub(crate) fn decode(dec: &mut Decoder<'_>) -> Result<Self, SnapshotError> {
        let window = dec.usize()?;
        let n = dec.len(8)?;
        if window == 0 || n > window {
            return Err(SnapshotError::Malformed("moving average window".into()));
        }
        let values = (0..n).map(|_| dec.f64()).collect::<Result<_, _>>()?;
        Ok(Self { window, values })
    }
}

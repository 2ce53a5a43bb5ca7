//! Stance detection from windowed gyro energy, plus the height-consistency
//! trigger for the ellipsoid constraint.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strapdown::ImuSample;
use crate::Foot;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Samples per window.
    pub window_len: usize,
    /// Mean squared angular rate below which a window is stationary, (rad/s)².
    pub threshold: f64,
    /// Largest stance-to-stance height change that still triggers the
    /// ellipsoid constraint, m.
    pub epsilon_h: f64,
    /// Consecutive stationary windows required before stance is declared.
    pub hold_min: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window_len: 5,
            threshold: 0.05,
            epsilon_h: 0.1,
            hold_min: 3,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::Config("detector window_len must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "detector threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if !(self.epsilon_h > 0.0 && self.epsilon_h.is_finite()) {
            return Err(Error::Config(format!("epsilon_h must be > 0, got {}", self.epsilon_h)));
        }
        if self.hold_min == 0 {
            return Err(Error::Config("hold_min must be at least 1".into()));
        }
        Ok(())
    }
}

/// A contiguous stance interval of one foot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub foot: Foot,
}

/// Windowed mean of `‖ω‖²` on raw gyro samples.
pub fn are_statistic<'a>(gyros: impl IntoIterator<Item = &'a Vector3<f64>>) -> f64 {
    let (sum, n) = gyros
        .into_iter()
        .fold((0.0, 0usize), |(s, n), w| (s + w.norm_squared(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// True when the window is stationary under `cfg`.
pub fn are_detect(window: &[ImuSample], cfg: &DetectorConfig) -> Result<bool> {
    if window.len() != cfg.window_len {
        return Err(Error::Usage(format!(
            "detector window has {} samples, expected {}",
            window.len(),
            cfg.window_len
        )));
    }
    Ok(are_statistic(window.iter().map(|s| &s.gyro)) < cfg.threshold)
}

/// Height-consistency test between two stance states.
pub fn ellipsoid_trigger(h_prev: f64, h_curr: f64, cfg: &DetectorConfig) -> bool {
    (h_prev - h_curr).abs() < cfg.epsilon_h
}

/// Per-sample stance flags for a single foot's stream.
///
/// The window is centred on each sample (truncated at the ends). Stationary
/// runs shorter than `hold_min` samples are discarded.
pub fn detect_stance(samples: &[ImuSample], cfg: &DetectorConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let n = samples.len();
    let half = cfg.window_len / 2;
    // prefix sums of ‖ω‖²
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for s in samples {
        let last = *prefix.last().unwrap_or(&0.0);
        prefix.push(last + s.gyro.norm_squared());
    }
    let mut flags: Vec<bool> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (lo + cfg.window_len).min(n);
            let lo = hi.saturating_sub(cfg.window_len);
            (prefix[hi] - prefix[lo]) / ((hi - lo) as f64) < cfg.threshold
        })
        .collect();
    let mut i = 0;
    while i < n {
        if flags[i] {
            let start = i;
            while i < n && flags[i] {
                i += 1;
            }
            if i - start < cfg.hold_min {
                flags[start..i].iter_mut().for_each(|f| *f = false);
            }
        } else {
            i += 1;
        }
    }
    Ok(flags)
}

/// Collapses per-sample flags into stance intervals.
pub fn stance_events(samples: &[ImuSample], flags: &[bool], foot: Foot) -> Vec<StanceEvent> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &f) in flags.iter().enumerate().take(samples.len()) {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(StanceEvent {
                    t_start: samples[s].t,
                    t_end: samples[i - 1].t,
                    foot,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        let last = flags.len().min(samples.len()) - 1;
        out.push(StanceEvent {
            t_start: samples[s].t,
            t_end: samples[last].t,
            foot,
        });
    }
    out
}

/// Streaming detector for one foot. Feed samples in order; the flag for a
/// sample is known once the trailing window that ends at it has filled and
/// the hold count is reached.
#[derive(Clone, Debug)]
pub struct StanceDetector {
    cfg: DetectorConfig,
    window: VecDeque<f64>,
    sum: f64,
    run: usize,
}

impl StanceDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(StanceDetector {
            cfg,
            window: VecDeque::with_capacity(cfg.window_len),
            sum: 0.0,
            run: 0,
        })
    }

    pub fn push(&mut self, sample: &ImuSample) -> bool {
        let e = sample.gyro.norm_squared();
        self.window.push_back(e);
        self.sum += e;
        if self.window.len() > self.cfg.window_len {
            self.sum -= self.window.pop_front().unwrap_or(0.0);
        }
        if self.window.len() < self.cfg.window_len {
            return false;
        }
        // recompute occasionally to bound round-off in the running sum
        let stat = if self.run % 256 == 255 {
            self.sum = self.window.iter().sum();
            self.sum
        } else {
            self.sum
        } / self.cfg.window_len as f64;
        if stat < self.cfg.threshold {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.run >= self.cfg.hold_min
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.sum = 0.0;
        self.run = 0;
    }
}

/// Precision, recall and F1 of `detected` against `truth`.
pub fn f1_score(detected: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&d, &t) in detected.iter().zip(truth) {
        match (d, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fnn == 0 {
        1.0
    } else {
        tp as f64 / (tp + fnn) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

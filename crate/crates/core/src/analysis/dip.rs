use std::f64::consts::SQRT_2;

use statrs::function::{erf::erfc_inv, gamma::gamma_ur};
use serde::{Deserialize, Serialize};

use crate::detection::Histogram;
use crate::error::{ensure_positive, Error, Result};

/// Shape of the zero-delay peak near τ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipStats {
    /// Mean counts per bin within the central window.
    pub center: f64,
    /// Highest symmetrized, smoothed level beside the centre (counts per bin).
    pub shoulder: f64,
    /// Delay of the shoulder maximum (ps, positive).
    pub shoulder_delay: f64,
    /// `1 − center/shoulder`.
    pub depth: f64,
    /// Probability of at most the observed central counts if the centre
    /// were at the shoulder level (Poisson).
    pub p_value: f64,
    /// `p_value` as a one-sided normal deviate.
    pub significance: f64,
}

impl DipStats {
    pub fn is_present(&self, min_depth: f64, min_significance: f64) -> bool {
        self.depth >= min_depth && self.significance >= min_significance
    }
}

/// Compare the counts within `±center_halfwidth` of zero delay with the
/// maximum of the peak profile between `center_halfwidth` and `search_ps`.
///
/// The profile is folded (τ and −τ averaged) and smoothed over
/// `smoothing_ps` before the maximum is taken.
pub fn zero_peak_dip(hist: &Histogram, center_halfwidth: f64, search_ps: f64, smoothing_ps: f64) -> Result<DipStats> {
    ensure_positive("center_halfwidth", center_halfwidth)?;
    ensure_positive("smoothing_ps", smoothing_ps)?;
    if search_ps <= center_halfwidth {
        return Err(Error::invalid("search_ps", "must exceed the central half-width"));
    }
    let bw = hist.bin_width;
    let zero = (-hist.origin / bw - 0.5).round();
    if zero < 0.0 || zero as usize >= hist.len() || (hist.center(zero as usize)).abs() > 0.5 * bw {
        return Err(Error::invalid("histogram", "no bin centred on zero delay"));
    }
    let zero = zero as usize;
    let reach = (search_ps / bw).ceil() as usize;
    if zero < reach || zero + reach >= hist.len() {
        return Err(Error::invalid("search_ps", "extends beyond the histogram"));
    }
    let folded: Vec<f64> = (0..=reach)
        .map(|k| 0.5 * (hist.counts[zero + k] + hist.counts[zero - k]) as f64)
        .collect();
    let c_bins = (center_halfwidth / bw).floor() as usize;
    let center_total: u64 = hist.counts[zero - c_bins..=zero + c_bins].iter().sum();
    let n_center = (2 * c_bins + 1) as f64;
    let center = center_total as f64 / n_center;

    let half = ((smoothing_ps / bw / 2.0).floor() as usize).max(1);
    let mut best = (0.0f64, 0usize);
    for k in (c_bins + 1 + half)..=reach.saturating_sub(half) {
        let window = &folded[k - half..=k + half];
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        if mean > best.0 {
            best = (mean, k);
        }
    }
    let (shoulder, k) = best;
    let depth = if shoulder > 0.0 { 1.0 - center / shoulder } else { 0.0 };
    let expected = shoulder * n_center;
    let p_value = if expected > 0.0 { gamma_ur(center_total as f64 + 1.0, expected) } else { 1.0 };
    let significance = if p_value < 0.5 { SQRT_2 * erfc_inv(2.0 * p_value) } else { 0.0 };
    Ok(DipStats {
        center,
        shoulder,
        shoulder_delay: k as f64 * bw,
        depth,
        p_value,
        significance,
    })
}

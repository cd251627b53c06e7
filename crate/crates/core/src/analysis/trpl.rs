use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::varpro::fit_separable;
use super::{residual_norm, FitOptions};
use crate::detection::{Histogram, HistogramKind};
use crate::error::{ensure_non_negative, Error, Result};
use crate::units::PS_PER_NS;

const MIN_BINS: usize = 50;

/// Fitted lifetimes beyond this multiple of the fitted time span are
/// indistinguishable from a flat background.
const MAX_LIFETIME_SPANS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrplOptions {
    pub fit: FitOptions,
    /// Fit `A·e^{−t/τ}·(1 − e^{−t/τ_rise}) + B` from the sync instead of a
    /// pure decay from the histogram maximum.
    pub rise: bool,
    /// Start the decay fit this long after the maximum (ps).
    pub skip_ps: f64,
}

impl Default for TrplOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            rise: false,
            skip_ps: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrplFit {
    /// Decay constant (ns).
    pub lifetime: f64,
    /// Decay amplitude (counts per bin) at the start of the fitted region.
    pub amplitude: f64,
    /// Counts per bin.
    pub background: f64,
    /// Rise constant (ns) when fitted.
    pub rise_time: Option<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl TrplFit {
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lifetime_ns = {}", self.lifetime);
        let _ = writeln!(s, "amplitude = {}", self.amplitude);
        let _ = writeln!(s, "background = {}", self.background);
        if let Some(r) = self.rise_time {
            let _ = writeln!(s, "rise_time_ns = {r}");
        }
        let _ = writeln!(s, "residual_norm = {}", self.residual_norm);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        s
    }
}

/// Starting point from a weighted straight-line fit of `ln(c − B₀)` over
/// the bins clearly above the tail level `B₀`.
fn log_linear_start(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = y.len();
    let tail = (n / 10).max(5);
    let b0 = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let excess: Vec<f64> = y.iter().map(|v| v - b0).collect();
    let peak = excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 10.0 * (b0 + 1.0).sqrt()) {
        return Err(Error::FitRejected("no decay above the background".into()));
    }
    let floor = (0.05 * peak).max(3.0 * (b0 + 1.0).sqrt());
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut used = 0;
    for (&ti, &e) in t.iter().zip(&excess) {
        if e <= floor {
            continue;
        }
        let ly = e.ln();
        sw += e;
        sx += e * ti;
        sy += e * ly;
        sxx += e * ti * ti;
        sxy += e * ti * ly;
        used += 1;
    }
    let det = sw * sxx - sx * sx;
    if used < 3 || det <= 0.0 {
        return Err(Error::FitRejected("too few decaying bins for an initial estimate".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    if !(slope < 0.0) {
        return Err(Error::FitRejected("histogram does not decay".into()));
    }
    Ok((-1.0 / slope, b0.max(0.0)))
}

/// Fit a single-exponential decay plus flat background to a TRPL histogram.
pub fn fit_trpl(hist: &Histogram, opts: &TrplOptions) -> Result<TrplFit> {
    if hist.kind != HistogramKind::Decay {
        return Err(Error::invalid("histogram", "expected a decay histogram"));
    }
    if hist.len() < MIN_BINS {
        return Err(Error::invalid(
            "histogram",
            format!("needs at least {MIN_BINS} bins, has {}", hist.len()),
        ));
    }
    ensure_non_negative("skip_ps", opts.skip_ps)?;
    let peak = hist
        .counts
        .iter()
        .enumerate()
        .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (start, t0) = if opts.rise {
        (0, hist.origin)
    } else {
        let skip = (opts.skip_ps / hist.bin_width).ceil() as usize;
        (peak + skip, hist.center(peak))
    };
    if hist.len().saturating_sub(start) < MIN_BINS / 2 {
        return Err(Error::FitRejected("too few bins after the maximum".into()));
    }
    let t: Vec<f64> = (start..hist.len()).map(|i| hist.center(i) - t0).collect();
    let y: Vec<f64> = hist.counts[start..].iter().map(|&c| c as f64).collect();
    let w = opts.fit.weighting.weights(&hist.counts[start..]);
    let span = t[t.len() - 1] - t[0] + hist.bin_width;

    let decay_region = if opts.rise { (peak.min(t.len() - 1), t.len()) } else { (0, t.len()) };
    let (tau0, _) = log_linear_start(&t[decay_region.0..], &y[decay_region.0..])?;
    let tau0 = tau0.clamp(hist.bin_width, MAX_LIFETIME_SPANS * span);

    let n = y.len();
    let basis = |th: &[f64]| {
        let tau = th[0].exp();
        let decay: Vec<f64> = if opts.rise {
            let rise = th[1].exp();
            t.iter()
                .map(|&x| if x > 0.0 { (-x / tau).exp() * (1.0 - (-x / rise).exp()) } else { 0.0 })
                .collect()
        } else {
            t.iter().map(|&x| (-x / tau).exp()).collect()
        };
        vec![decay, vec![1.0; n]]
    };
    let theta0 = if opts.rise {
        let rise0 = (0.5 * (hist.center(peak) - hist.origin)).max(hist.bin_width);
        vec![tau0.ln(), rise0.ln()]
    } else {
        vec![tau0.ln()]
    };
    let fit = fit_separable(&basis, &y, &w, &[false, true], &theta0, &opts.fit)?;
    let tau = fit.theta[0].exp();
    if !(tau < MAX_LIFETIME_SPANS * span) {
        return Err(Error::FitRejected(format!(
            "lifetime {:.3} ns is unbounded by the {:.3} ns window",
            tau / PS_PER_NS,
            span / PS_PER_NS
        )));
    }
    if !(fit.coef[0] > 0.0) {
        return Err(Error::FitRejected("negative decay amplitude".into()));
    }
    Ok(TrplFit {
        lifetime: tau / PS_PER_NS,
        amplitude: fit.coef[0],
        background: fit.coef[1],
        rise_time: opts.rise.then(|| fit.theta[1].exp() / PS_PER_NS),
        residual_norm: residual_norm(fit.chi2, n, theta0.len() + 2),
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(tau_ps: f64, amp: f64, bg: f64, bins: usize, bw: f64) -> Histogram {
        Histogram {
            bin_width: bw,
            origin: 0.0,
            counts: (0..bins)
                .map(|i| (amp * (-(i as f64 + 0.5) * bw / tau_ps).exp() + bg).round() as u64)
                .collect(),
            kind: HistogramKind::Decay,
        }
    }

    #[test]
    fn noiseless_decay() {
        let h = decay(2100.0, 1e5, 0.0, 500, 32.0);
        let fit = fit_trpl(&h, &TrplOptions::default()).unwrap();
        assert!((fit.lifetime - 2.1).abs() < 2.1e-3, "{fit:?}");
    }

    #[test]
    fn flat_rejected() {
        let h = Histogram {
            bin_width: 100.0,
            origin: 0.0,
            counts: vec![100; 200],
            kind: HistogramKind::Decay,
        };
        assert!(fit_trpl(&h, &TrplOptions::default()).is_err());
    }

    #[test]
    fn short_histogram_rejected() {
        let h = decay(2100.0, 1e4, 0.0, 20, 32.0);
        assert!(matches!(fit_trpl(&h, &TrplOptions::default()), Err(Error::InvalidConfig { .. })));
    }
}

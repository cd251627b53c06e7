use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::varpro::fit_separable;
use super::linear::solve_nnls;
use super::{residual_norm, FitOptions};
use crate::detection::{Histogram, HistogramKind};
use crate::error::{ensure_positive, Error, Result};
use crate::units::PS_PER_NS;

/// Side peaks required on each side of zero delay.
pub const MIN_SIDE_PEAKS: usize = 5;

/// Allowed relative mismatch between expected and observed peak spacing.
const PERIOD_TOLERANCE: f64 = 0.05;

/// Normalized autocorrelation below which a histogram is treated as having
/// no measurable periodic structure.
const PERIODICITY_FLOOR: f64 = 0.2;

/// Integration half-width used when none is given: `min(5τ, P/2 − 3·jitter)` in ps.
pub fn default_halfwidth(lifetime_ns: f64, rep_period_ps: f64, jitter_fwhm_ps: f64) -> f64 {
    (5.0 * lifetime_ns * PS_PER_NS).min(0.5 * rep_period_ps - 3.0 * jitter_fwhm_ps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratedG2 {
    pub ratio: f64,
    pub zero_counts: f64,
    pub side_mean: f64,
    /// Side peaks used on each side.
    pub side_peaks: usize,
}

/// Counts within `[center − hw, center + hw]`, bins weighted by their overlap.
fn window_sum(hist: &Histogram, center: f64, hw: f64) -> f64 {
    let (lo, hi) = (center - hw, center + hw);
    let bw = hist.bin_width;
    let first = ((lo - hist.origin) / bw).floor().max(0.0) as usize;
    let last = (((hi - hist.origin) / bw).ceil().max(0.0) as usize).min(hist.len());
    (first..last)
        .map(|i| {
            let a = hist.origin + i as f64 * bw;
            let overlap = (hi.min(a + bw) - lo.max(a)).max(0.0);
            hist.counts[i] as f64 * overlap / bw
        })
        .sum()
}

/// Number of complete side windows available on each side of zero delay.
fn side_peaks_available(hist: &Histogram, rep_period: f64, hw: f64) -> usize {
    let slack = 1e-9 * rep_period;
    let pos = ((hist.end() - hw + slack) / rep_period).floor().max(0.0) as usize;
    let neg = ((-hist.origin - hw + slack) / rep_period).floor().max(0.0) as usize;
    pos.min(neg)
}

fn require_coincidence(hist: &Histogram) -> Result<()> {
    if hist.kind != HistogramKind::Coincidence {
        return Err(Error::invalid("histogram", "expected a coincidence histogram"));
    }
    Ok(())
}

/// Zero-delay counts over mean side-peak counts, each integrated over
/// `±halfwidth` around the peak centres `k·rep_period`.
pub fn g2_integrated_detail(hist: &Histogram, rep_period_ps: f64, halfwidth_ps: f64) -> Result<IntegratedG2> {
    require_coincidence(hist)?;
    ensure_positive("rep_period_ps", rep_period_ps)?;
    ensure_positive("integration_halfwidth", halfwidth_ps)?;
    if halfwidth_ps >= 0.5 * rep_period_ps {
        return Err(Error::invalid(
            "integration_halfwidth",
            format!("{halfwidth_ps} ps must be below half the repetition period"),
        ));
    }
    let available = side_peaks_available(hist, rep_period_ps, halfwidth_ps);
    if available < MIN_SIDE_PEAKS {
        return Err(Error::InsufficientSidePeaks {
            needed: MIN_SIDE_PEAKS,
            available,
        });
    }
    let mut side_total = 0.0;
    for k in 1..=available {
        for center in [k as f64 * rep_period_ps, -(k as f64) * rep_period_ps] {
            let s = window_sum(hist, center, halfwidth_ps);
            if s <= 0.0 {
                return Err(Error::EmptySideWindow { center_ps: center });
            }
            side_total += s;
        }
    }
    let side_mean = side_total / (2 * available) as f64;
    let zero_counts = window_sum(hist, 0.0, halfwidth_ps);
    Ok(IntegratedG2 {
        ratio: zero_counts / side_mean,
        zero_counts,
        side_mean,
        side_peaks: available,
    })
}

pub fn g2_integrated(hist: &Histogram, rep_period_ps: f64, halfwidth_ps: f64) -> Result<f64> {
    g2_integrated_detail(hist, rep_period_ps, halfwidth_ps).map(|g| g.ratio)
}

/// Peak spacing estimated from the histogram's own autocorrelation,
/// searched between half and one and a half expected periods.
///
/// Returns `None` when the histogram shows no clear periodic structure.
pub fn observed_period(hist: &Histogram, expected_ps: f64) -> Option<f64> {
    let factor = ((expected_ps / 500.0) / hist.bin_width).ceil().max(1.0) as usize;
    let coarse = hist.rebin(factor).ok()?;
    let bw = coarse.bin_width;
    let c: Vec<f64> = coarse.counts.iter().map(|&v| v as f64).collect();
    let n = c.len();
    let mean = c.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = c.iter().map(|v| v - mean).collect();
    let var = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return None;
    }
    let acf = |lag: usize| -> f64 {
        if lag >= n {
            return f64::NEG_INFINITY;
        }
        let s: f64 = d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum();
        s / (n - lag) as f64 / var
    };
    let lo = ((0.5 * expected_ps / bw).floor() as usize).max(1);
    let hi = (1.5 * expected_ps / bw).ceil() as usize;
    let (best, peak) = (lo..=hi)
        .map(|l| (l, acf(l)))
        .fold((lo, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if !(peak >= PERIODICITY_FLOOR) {
        return None;
    }
    let (a, b) = (acf(best - 1), acf(best + 1));
    let denom = a - 2.0 * peak + b;
    let shift = if denom < 0.0 && a.is_finite() && b.is_finite() {
        0.5 * (a - b) / denom
    } else {
        0.0
    };
    Some((best as f64 + shift) * bw)
}

fn check_period(hist: &Histogram, rep_period_ps: f64) -> Result<()> {
    if let Some(observed) = observed_period(hist, rep_period_ps) {
        if ((observed - rep_period_ps) / rep_period_ps).abs() > PERIOD_TOLERANCE {
            return Err(Error::PeriodMismatch {
                observed_ps: observed,
                expected_ps: rep_period_ps,
            });
        }
    }
    Ok(())
}

/// Result of a g² peak-train fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    /// Zero-delay peak amplitude relative to the side peaks, with the
    /// background modelled separately rather than subtracted.
    pub g2_zero: f64,
    /// Uncorrelated background, counts per bin.
    pub background_level: f64,
    /// Side-peak amplitude, counts per bin.
    pub peak_amplitude: f64,
    /// Lifetime used for the peak shape (ns).
    pub lifetime_used: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl G2Fit {
    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "g2_zero = {}", self.g2_zero);
        let _ = writeln!(s, "background_level = {}", self.background_level);
        let _ = writeln!(s, "peak_amplitude = {}", self.peak_amplitude);
        let _ = writeln!(s, "lifetime_used_ns = {}", self.lifetime_used);
        let _ = writeln!(s, "residual_norm = {}", self.residual_norm);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        s
    }
}

/// Mean of `exp(−|s|/τ)` over `[a, b]`.
fn two_sided_mean(a: f64, b: f64, tau: f64) -> f64 {
    let span = b - a;
    let integral = if a >= 0.0 {
        tau * ((-a / tau).exp() - (-b / tau).exp())
    } else if b <= 0.0 {
        tau * ((b / tau).exp() - (a / tau).exp())
    } else {
        tau * (2.0 - (a / tau).exp() - (-b / tau).exp())
    };
    integral / span
}

/// Bin-averaged side-peak train and zero-delay peak for lifetime `tau_ps`.
fn peak_columns(hist: &Histogram, rep_period: f64, tau_ps: f64) -> (Vec<f64>, Vec<f64>) {
    let reach = 30.0 * tau_ps;
    let k_lo = ((hist.origin - reach) / rep_period).floor() as i64;
    let k_hi = ((hist.end() + reach) / rep_period).ceil() as i64;
    let bw = hist.bin_width;
    let mut side = vec![0.0; hist.len()];
    let mut zero = vec![0.0; hist.len()];
    for i in 0..hist.len() {
        let a = hist.origin + i as f64 * bw;
        for k in k_lo..=k_hi {
            let c = k as f64 * rep_period;
            let (lo, hi) = (a - c, a + bw - c);
            if lo > reach || hi < -reach {
                continue;
            }
            let v = two_sided_mean(lo, hi, tau_ps);
            if k == 0 {
                zero[i] = v;
            } else {
                side[i] += v;
            }
        }
    }
    (side, zero)
}

fn validate_peak_fit(hist: &Histogram, rep_period_ps: f64) -> Result<()> {
    require_coincidence(hist)?;
    ensure_positive("rep_period_ps", rep_period_ps)?;
    let available = side_peaks_available(hist, rep_period_ps, 0.0);
    if available < MIN_SIDE_PEAKS {
        return Err(Error::InsufficientSidePeaks {
            needed: MIN_SIDE_PEAKS,
            available,
        });
    }
    check_period(hist, rep_period_ps)
}

fn finish(coef: &[f64], chi2: f64, n: usize, params: usize, lifetime_ns: f64, iterations: usize) -> Result<G2Fit> {
    let (b, a, c0) = (coef[0], coef[1], coef[2]);
    if !(a > 0.0) {
        return Err(Error::FitRejected("side-peak amplitude is not positive".into()));
    }
    Ok(G2Fit {
        g2_zero: c0 / a,
        background_level: b,
        peak_amplitude: a,
        lifetime_used: lifetime_ns,
        residual_norm: residual_norm(chi2, n, params),
        iterations,
    })
}

/// Fit `B + A·Σ_{k≠0} e^{−|τ−kP|/τ_L} + A·g2_zero·e^{−|τ|/τ_L}` with the
/// lifetime `τ_L` held fixed.
///
/// For fixed lifetime the model is linear in `(B, A, A·g2_zero)`, so the
/// least-squares problem is solved exactly under non-negativity of all three.
pub fn fit_g2(hist: &Histogram, lifetime_ns: f64, rep_period_ps: f64, opts: &FitOptions) -> Result<G2Fit> {
    ensure_positive("lifetime_ns", lifetime_ns)?;
    validate_peak_fit(hist, rep_period_ps)?;
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let w = opts.weighting.weights(&hist.counts);
    let (side, zero) = peak_columns(hist, rep_period_ps, lifetime_ns * PS_PER_NS);
    let cols = [vec![1.0; y.len()], side, zero];
    let fit = solve_nnls(&cols, &y, &w, &[true, true, true])
        .ok_or_else(|| Error::FitRejected("degenerate design matrix".into()))?;
    finish(&fit.coef, fit.chi2, y.len(), 3, lifetime_ns, 1)
}

/// Same model as [`fit_g2`] with the lifetime floated as well.
pub fn fit_g2_floating(
    hist: &Histogram,
    lifetime_guess_ns: f64,
    rep_period_ps: f64,
    opts: &FitOptions,
) -> Result<G2Fit> {
    ensure_positive("lifetime_guess_ns", lifetime_guess_ns)?;
    validate_peak_fit(hist, rep_period_ps)?;
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let w = opts.weighting.weights(&hist.counts);
    let n = y.len();
    let basis = |th: &[f64]| {
        let (side, zero) = peak_columns(hist, rep_period_ps, th[0].exp() * PS_PER_NS);
        vec![vec![1.0; n], side, zero]
    };
    let fit = fit_separable(&basis, &y, &w, &[true, true, true], &[lifetime_guess_ns.ln()], opts)?;
    finish(&fit.coef, fit.chi2, n, 4, fit.theta[0].exp(), fit.iterations)
}

/// Fixed-lifetime fits over a list of trial lifetimes.
pub fn lifetime_profile(
    hist: &Histogram,
    lifetimes_ns: &[f64],
    rep_period_ps: f64,
    opts: &FitOptions,
) -> Result<Vec<G2Fit>> {
    lifetimes_ns
        .iter()
        .map(|&tau| fit_g2(hist, tau, rep_period_ps, opts))
        .collect()
}

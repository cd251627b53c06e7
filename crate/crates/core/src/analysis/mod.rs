//! Recovering g²(0), background and lifetimes from histograms.
//!
//! Two routes to g²(0) are provided: the model-free ratio of integrated
//! zero-delay counts to side-peak counts, and a least-squares fit of
//! two-sided exponential peaks on a flat uncorrelated background with the
//! lifetime fixed from a separate TRPL fit.

mod dip;
mod g2;
mod linear;
mod trpl;
mod varpro;

use serde::{Deserialize, Serialize};

pub use dip::{zero_peak_dip, DipStats};
pub use g2::{
    default_halfwidth, fit_g2, fit_g2_floating, g2_integrated, g2_integrated_detail, lifetime_profile,
    observed_period, G2Fit, IntegratedG2, MIN_SIDE_PEAKS,
};
pub use trpl::{fit_trpl, TrplFit, TrplOptions};

/// Per-bin weights in the least-squares objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `1 / max(counts, 1)`.
    #[default]
    Poisson,
    Uniform,
}

impl Weighting {
    pub fn weights(self, counts: &[u64]) -> Vec<f64> {
        match self {
            Weighting::Poisson => counts.iter().map(|&c| 1.0 / (c.max(1) as f64)).collect(),
            Weighting::Uniform => vec![1.0; counts.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub max_iterations: usize,
    /// Relative parameter step below which the fit is considered converged.
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Poisson,
            max_iterations: 200,
            step_tolerance: 1e-9,
        }
    }
}

/// Reduced chi (root of χ² per degree of freedom).
fn residual_norm(chi2: f64, n: usize, params: usize) -> f64 {
    (chi2 / n.saturating_sub(params).max(1) as f64).sqrt()
}

pub const FIT_CSV_HEADER: &str = "T_K,power_ratio,g2_zero,background,lifetime_ns,residual";

/// One line of a fit summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub temperature_k: f64,
    pub power_ratio: f64,
    pub g2_zero: f64,
    pub background: f64,
    pub lifetime_ns: f64,
    pub residual: f64,
}

impl FitRow {
    pub fn from_fit(temperature_k: f64, power_ratio: f64, fit: &G2Fit) -> Self {
        Self {
            temperature_k,
            power_ratio,
            g2_zero: fit.g2_zero,
            background: fit.background_level,
            lifetime_ns: fit.lifetime_used,
            residual: fit.residual_norm,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.temperature_k, self.power_ratio, self.g2_zero, self.background, self.lifetime_ns, self.residual
        )
    }
}

//! Efficiency chain from a detected count rate back to the first lens.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_fraction, ensure_positive, Error, Result};

/// How the multiphoton fraction is removed from the first-lens efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MultiphotonCorrection {
    /// `η·(1 − g²(0))`
    #[default]
    Multiplicative,
    /// `η·√(1 − g²(0))`
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetInputs {
    /// Detected count rate (Mcps).
    pub detected_rate: f64,
    /// Laser repetition rate (MHz).
    pub rep_rate: f64,
    pub detector_efficiency: f64,
    pub setup_throughput: f64,
    /// Fraction of emission in phonon sidebands, removed by the filter.
    pub sideband_fraction: f64,
    pub g2_zero: f64,
    pub mirror_reflectivity: Option<f64>,
    pub correction: MultiphotonCorrection,
}

impl Default for BudgetInputs {
    fn default() -> Self {
        Self {
            detected_rate: 1.86,
            rep_rate: 80.0,
            detector_efficiency: 0.90,
            setup_throughput: 0.10,
            sideband_fraction: 0.20,
            g2_zero: 0.021,
            mirror_reflectivity: None,
            correction: MultiphotonCorrection::Multiplicative,
        }
    }
}

impl BudgetInputs {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("budget.rep_rate", self.rep_rate)?;
        ensure_fraction("budget.detector_efficiency", self.detector_efficiency)?;
        ensure_fraction("budget.setup_throughput", self.setup_throughput)?;
        ensure_fraction("budget.sideband_fraction", self.sideband_fraction)?;
        ensure_fraction("budget.g2_zero", self.g2_zero)?;
        if self.detector_efficiency == 0.0 {
            return Err(Error::invalid("budget.detector_efficiency", "must be > 0"));
        }
        if self.setup_throughput == 0.0 {
            return Err(Error::invalid("budget.setup_throughput", "must be > 0"));
        }
        if self.sideband_fraction == 1.0 {
            return Err(Error::invalid("budget.sideband_fraction", "must be < 1"));
        }
        ensure_fraction("budget.detected_rate / rep_rate", self.detected_rate / self.rep_rate)
            .map_err(|_| {
                Error::invalid(
                    "budget.detected_rate",
                    format!("{} Mcps must lie in [0, rep_rate = {} MHz]", self.detected_rate, self.rep_rate),
                )
            })?;
        if let Some(r) = self.mirror_reflectivity {
            ensure_fraction("budget.mirror_reflectivity", r)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBudget {
    pub end_to_end_raw: f64,
    pub end_to_end_detcorr: f64,
    pub first_lens: f64,
    pub first_lens_single_photon: f64,
    pub first_lens_with_sideband: f64,
    pub mirror_projection: Option<f64>,
}

/// First-lens efficiency with a bottom mirror of reflectivity `r` (incoherent sum).
pub fn mirror_projection(first_lens: f64, r: f64) -> f64 {
    first_lens * (1.0 + r)
}

pub fn compute_budget(inputs: &BudgetInputs) -> Result<EfficiencyBudget> {
    inputs.validate()?;
    let raw = inputs.detected_rate / inputs.rep_rate;
    let detcorr = raw / inputs.detector_efficiency;
    let first_lens = detcorr / inputs.setup_throughput;
    let single = match inputs.correction {
        MultiphotonCorrection::Multiplicative => first_lens * (1.0 - inputs.g2_zero),
        MultiphotonCorrection::Sqrt => first_lens * (1.0 - inputs.g2_zero).sqrt(),
    };
    Ok(EfficiencyBudget {
        end_to_end_raw: raw,
        end_to_end_detcorr: detcorr,
        first_lens,
        first_lens_single_photon: single,
        first_lens_with_sideband: first_lens / (1.0 - inputs.sideband_fraction),
        mirror_projection: inputs.mirror_reflectivity.map(|r| mirror_projection(first_lens, r)),
    })
}

/// Round to `digits` significant figures.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(digits as i32 - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// Percentage with `digits` significant figures, as text.
pub fn percent_sig(fraction: f64, digits: u32) -> String {
    let p = round_sig(fraction * 100.0, digits);
    if p == 0.0 {
        return "0".into();
    }
    let decimals = (digits as i32 - 1 - p.abs().log10().floor() as i32).max(0) as usize;
    format!("{p:.decimals$}")
}

/// Significant figures used in the "displayed" column.
pub const DISPLAY_DIGITS: u32 = 2;

impl EfficiencyBudget {
    pub fn stages(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("end_to_end_raw", self.end_to_end_raw),
            ("end_to_end_detcorr", self.end_to_end_detcorr),
            ("first_lens", self.first_lens),
            ("first_lens_single_photon", self.first_lens_single_photon),
            ("first_lens_with_sideband", self.first_lens_with_sideband),
        ];
        if let Some(m) = self.mirror_projection {
            v.push(("mirror_projection", m));
        }
        v
    }

    /// Aligned table: stage, fraction (4 s.f.), percent (4 s.f.), displayed percent.
    pub fn table(&self) -> String {
        let mut s = format!("{:<26} {:>10} {:>10} {:>10}\n", "stage", "fraction", "percent", "displayed");
        for (name, v) in self.stages() {
            let _ = writeln!(
                s,
                "{name:<26} {:>10} {:>10} {:>10}",
                format!("{:.4}", round_sig(v, 4)),
                percent_sig(v, 4),
                percent_sig(v, DISPLAY_DIGITS)
            );
        }
        s
    }

    pub const CSV_HEADER: &'static str = "stage,fraction,percent_4sf,percent_displayed";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (name, v) in self.stages() {
            let _ = writeln!(s, "{name},{v:.12},{},{}", percent_sig(v, 4), percent_sig(v, DISPLAY_DIGITS));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_figures() {
        assert_eq!(percent_sig(0.023_25, 2), "2.3");
        assert_eq!(percent_sig(0.258_33, 2), "26");
        assert_eq!(percent_sig(0.258_33, 4), "25.83");
        assert_eq!(percent_sig(0.004_966, 3), "0.497");
        assert_eq!(round_sig(0.0, 3), 0.0);
    }

    #[test]
    fn sideband_of_one_rejected() {
        let inputs = BudgetInputs {
            sideband_fraction: 1.0,
            ..BudgetInputs::default()
        };
        assert!(matches!(compute_budget(&inputs), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn rate_above_repetition_rejected() {
        let inputs = BudgetInputs {
            detected_rate: 90.0,
            ..BudgetInputs::default()
        };
        assert!(compute_budget(&inputs).is_err());
    }
}

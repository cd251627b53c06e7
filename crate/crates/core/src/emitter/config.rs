use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

/// Boltzmann multiplicities of the exciton manifold used by the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Degeneracies {
    pub bright: f64,
    pub dark: f64,
    pub pshell: f64,
}

impl Default for Degeneracies {
    fn default() -> Self {
        Self {
            bright: 2.0,
            dark: 2.0,
            pshell: 4.0,
        }
    }
}

/// The device under test: level structure, kinetics and saturation mapping.
///
/// Rates are per ns, energies in meV. `capture_rate` and `relax_rate` accept
/// `inf` to model instantaneous capture/relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitterConfig {
    /// Exciton radiative lifetime at 4 K (ns).
    pub tau_x0: f64,
    /// Biexciton/exciton lifetime ratio, in (0, 1].
    pub tau_xx_ratio: f64,
    /// Per-pair capture rate from the carrier reservoir into the dot.
    pub capture_rate: f64,
    /// Relaxation rate of a freshly captured pair into the s-shell.
    pub relax_rate: f64,
    /// Per-pair loss rate of reservoir carriers that are never captured.
    pub escape_rate: f64,
    /// Mean injected pairs per pulse at P = P_sat.
    pub mu_sat: f64,
    pub dark_splitting: f64,
    pub sp_splitting: f64,
    /// Biexciton binding energy; positive puts XX on the high-energy side of X.
    pub xx_binding: f64,
    /// Bright/dark mixing rate (downhill direction).
    pub spin_flip_rate: f64,
    /// Enable explicit bright/dark spin-flip kinetics in the kinetic simulation.
    pub dark_states: bool,
    /// Enable thermally activated p-shell emission from relaxing pairs.
    pub pshell_emission: bool,
    pub degeneracies: Degeneracies,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        Self {
            tau_x0: 2.1,
            tau_xx_ratio: 0.5,
            capture_rate: 40.0,
            relax_rate: 4.0,
            escape_rate: 1.5,
            mu_sat: 6.0,
            dark_splitting: 0.3,
            sp_splitting: 68.0,
            xx_binding: 6.0,
            spin_flip_rate: 0.05,
            dark_states: false,
            pshell_emission: true,
            degeneracies: Degeneracies::default(),
        }
    }
}

fn ensure_rate_or_instant(key: &str, value: f64) -> Result<()> {
    if value == f64::INFINITY {
        return Ok(());
    }
    ensure_positive(key, value)
}

impl EmitterConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("emitter.tau_x0", self.tau_x0)?;
        ensure_positive("emitter.tau_xx_ratio", self.tau_xx_ratio)?;
        if self.tau_xx_ratio > 1.0 {
            return Err(Error::invalid(
                "emitter.tau_xx_ratio",
                format!("must lie in (0, 1], got {}", self.tau_xx_ratio),
            ));
        }
        ensure_rate_or_instant("emitter.capture_rate", self.capture_rate)?;
        ensure_rate_or_instant("emitter.relax_rate", self.relax_rate)?;
        ensure_non_negative("emitter.escape_rate", self.escape_rate)?;
        ensure_positive("emitter.mu_sat", self.mu_sat)?;
        ensure_non_negative("emitter.dark_splitting", self.dark_splitting)?;
        ensure_positive("emitter.sp_splitting", self.sp_splitting)?;
        crate::error::ensure_finite("emitter.xx_binding", self.xx_binding)?;
        ensure_positive("emitter.spin_flip_rate", self.spin_flip_rate)?;
        ensure_positive("emitter.degeneracies.bright", self.degeneracies.bright)?;
        ensure_positive("emitter.degeneracies.dark", self.degeneracies.dark)?;
        ensure_positive("emitter.degeneracies.pshell", self.degeneracies.pshell)?;
        Ok(())
    }

    /// A single-exciton emitter: one pair per pulse is captured and relaxes
    /// instantly, no dark states, no p-shell channel.
    pub fn ideal_single_exciton(tau_x0: f64) -> Self {
        Self {
            tau_x0,
            capture_rate: f64::INFINITY,
            relax_rate: f64::INFINITY,
            escape_rate: 0.0,
            dark_states: false,
            pshell_emission: false,
            ..Self::default()
        }
    }
}

/// How many electron-hole pairs a pulse injects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PairStatistics {
    /// Poisson with mean `saturation_map(power_ratio)`.
    #[default]
    Poisson,
    /// Exactly this many pairs per pulse (whenever `power_ratio > 0`).
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveConfig {
    /// Laser repetition rate (MHz).
    pub rep_rate: f64,
    /// P / P_sat.
    pub power_ratio: f64,
    pub n_pulses: u64,
    pub pairs: PairStatistics,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            rep_rate: 20.0,
            power_ratio: 0.1,
            n_pulses: 1_000_000,
            pairs: PairStatistics::Poisson,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("drive.rep_rate", self.rep_rate)?;
        ensure_non_negative("drive.power_ratio", self.power_ratio)?;
        if self.n_pulses == 0 {
            return Err(Error::EmptySimulation);
        }
        Ok(())
    }

    pub fn period_ns(&self) -> f64 {
        1.0e3 / self.rep_rate
    }
}

/// Mean injected pairs per pulse: linear in power, saturation emerges from
/// the Poisson statistics of the injected pairs.
pub fn saturation_map(mu_sat: f64, power_ratio: f64) -> Result<f64> {
    ensure_non_negative("power_ratio", power_ratio)?;
    ensure_positive("mu_sat", mu_sat)?;
    Ok(mu_sat * power_ratio)
}

//! Deterministic temperature dependence: emission wavelength, homogeneous
//! linewidth, thermal spreading over the exciton manifold and the radiative
//! lifetime that follows from it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::emitter::{line_center_nm, EmissionModel, EmitterConfig, Line};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::numeric::brent;
use crate::units::{energy_ev, kt_mev, uev_to_nm, wavelength_nm};
use crate::waveguide::{NanowireGeometry, SeRateCurve};

pub const MAX_TEMPERATURE_K: f64 = 350.0;

/// Linewidth multiplier per line relative to the exciton.
pub fn line_width_scale(line: Line) -> f64 {
    match line {
        Line::Exciton | Line::Biexciton => 1.0,
        Line::PShell => 3.0,
    }
}

/// p-shell emission is not resolved at or below this temperature.
pub const PSHELL_ONSET_K: f64 = 100.0;
/// Lines weaker than this fraction of the exciton are reported as zero.
pub const VISIBILITY_THRESHOLD: f64 = 1e-3;

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 && t <= MAX_TEMPERATURE_K {
        Ok(())
    } else {
        Err(Error::invalid(
            "temperature",
            format!("must lie in (0, {MAX_TEMPERATURE_K}] K, got {t}"),
        ))
    }
}

/// Band-gap shift `E(T) = E0 − αT²/(T + β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Varshni {
    pub e0_ev: f64,
    pub alpha_ev_per_k: f64,
    pub beta_k: f64,
}

impl Varshni {
    /// Fit `E0` and `α` through two (temperature K, wavelength nm) anchors.
    pub fn from_anchors(a: [f64; 2], b: [f64; 2], beta_k: f64) -> Result<Self> {
        ensure_positive("temperature.varshni_beta_k", beta_k)?;
        for [t, l] in [a, b] {
            check_temperature(t)?;
            ensure_positive("temperature.anchors", l)?;
        }
        let shape = |t: f64| t * t / (t + beta_k);
        let (sa, sb) = (shape(a[0]), shape(b[0]));
        if sa == sb {
            return Err(Error::invalid("temperature.anchors", "anchor temperatures coincide"));
        }
        let (ea, eb) = (energy_ev(a[1]), energy_ev(b[1]));
        let alpha = (ea - eb) / (sb - sa);
        Ok(Self {
            e0_ev: ea + alpha * sa,
            alpha_ev_per_k: alpha,
            beta_k,
        })
    }

    pub fn energy_ev(&self, temperature_k: f64) -> Result<f64> {
        check_temperature(temperature_k)?;
        let t = temperature_k;
        Ok(self.e0_ev - self.alpha_ev_per_k * t * t / (t + self.beta_k))
    }

    pub fn wavelength_nm(&self, temperature_k: f64) -> Result<f64> {
        Ok(wavelength_nm(self.energy_ev(temperature_k)?))
    }
}

impl Default for Varshni {
    fn default() -> Self {
        Self::from_anchors([4.0, 1301.28], [300.0, 1397.8], 600.0).expect("default anchors")
    }
}

/// `Γ(T) = Γ0 + aT + b/(exp(E_ph/kT) − 1)`, in μeV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linewidth {
    pub gamma0_uev: f64,
    pub a_uev_per_k: f64,
    pub b_uev: f64,
    pub e_ph_mev: f64,
}

fn bose(e_mev: f64, t: f64) -> f64 {
    1.0 / (e_mev / kt_mev(t)).exp_m1()
}

/// Targets for [`Linewidth::calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinewidthCalibration {
    pub gamma_4k_uev: f64,
    /// Temperature at which the X and XX lines start to overlap.
    pub merge_temperature_k: f64,
    /// Share of the broadening at the merge point carried by the linear term.
    pub linear_fraction: f64,
    pub phonon_energy_mev: f64,
}

impl Default for LinewidthCalibration {
    fn default() -> Self {
        Self {
            gamma_4k_uev: 45.0,
            merge_temperature_k: 165.0,
            linear_fraction: 0.02,
            phonon_energy_mev: 5.0,
        }
    }
}

impl Linewidth {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("linewidth.gamma0_uev", self.gamma0_uev)?;
        ensure_non_negative("linewidth.a_uev_per_k", self.a_uev_per_k)?;
        ensure_non_negative("linewidth.b_uev", self.b_uev)?;
        ensure_positive("linewidth.e_ph_mev", self.e_ph_mev)
    }

    pub fn at(&self, temperature_k: f64) -> Result<f64> {
        if !(temperature_k.is_finite() && temperature_k > 0.0) {
            return Err(Error::invalid("temperature", format!("must be > 0, got {temperature_k}")));
        }
        let t = temperature_k;
        Ok(self.gamma0_uev + self.a_uev_per_k * t + self.b_uev * bose(self.e_ph_mev, t))
    }

    /// Choose `(Γ0, a, b)` so that `Γ(4 K)` equals the floor and the X/XX
    /// overlap criterion is met exactly at the merge temperature.
    pub fn calibrate(cal: &LinewidthCalibration, separation_mev: f64) -> Result<Self> {
        ensure_positive("linewidth.gamma_4k_uev", cal.gamma_4k_uev)?;
        ensure_positive("linewidth.phonon_energy_mev", cal.phonon_energy_mev)?;
        crate::error::ensure_fraction("linewidth.linear_fraction", cal.linear_fraction)?;
        let tm = cal.merge_temperature_k;
        check_temperature(tm)?;
        if tm <= 4.0 {
            return Err(Error::invalid("linewidth.merge_temperature_k", "must exceed 4 K"));
        }
        // Overlap: separation < (Γ_X + Γ_XX)/2.
        let scale = 0.5 * (line_width_scale(Line::Exciton) + line_width_scale(Line::Biexciton));
        let target = separation_mev.abs() * 1e3 / scale;
        let excess = target - cal.gamma_4k_uev;
        if excess <= 0.0 {
            return Err(Error::invalid(
                "emitter.xx_binding",
                "lines already overlap at 4 K; nothing to calibrate",
            ));
        }
        let e = cal.phonon_energy_mev;
        let a = cal.linear_fraction * excess / (tm - 4.0);
        let b = (1.0 - cal.linear_fraction) * excess / (bose(e, tm) - bose(e, 4.0));
        let gamma0_uev = cal.gamma_4k_uev - 4.0 * a - b * bose(e, 4.0);
        if gamma0_uev <= 0.0 {
            return Err(Error::invalid(
                "linewidth.linear_fraction",
                format!("implies a non-positive zero-temperature width ({gamma0_uev:.1} μeV); lower it"),
            ));
        }
        Ok(Self {
            gamma0_uev,
            a_uev_per_k: a,
            b_uev: b,
            e_ph_mev: e,
        })
    }

    /// Lowest temperature at which the X and XX lines overlap.
    pub fn merge_temperature(&self, separation_mev: f64) -> Option<f64> {
        let scale = 0.5 * (line_width_scale(Line::Exciton) + line_width_scale(Line::Biexciton));
        let target = separation_mev.abs() * 1e3 / scale;
        let f = |t: f64| self.at(t).unwrap_or(f64::NAN) - target;
        if f(MAX_TEMPERATURE_K) <= 0.0 {
            return None;
        }
        if f(1e-3) > 0.0 {
            return Some(0.0);
        }
        brent(f, 1e-3, MAX_TEMPERATURE_K, 1e-9)
    }
}

/// One level of the thermally populated exciton manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub label: String,
    pub energy_mev: f64,
    pub multiplicity: f64,
    #[serde(default)]
    pub bright: bool,
}

impl Level {
    pub fn new(label: &str, energy_mev: f64, multiplicity: f64, bright: bool) -> Self {
        Self {
            label: label.to_string(),
            energy_mev,
            multiplicity,
            bright,
        }
    }
}

pub fn validate_manifold(levels: &[Level]) -> Result<()> {
    let bright: Vec<&Level> = levels.iter().filter(|l| l.bright).collect();
    if bright.len() != 1 {
        return Err(Error::invalid(
            "lifetime.manifold",
            format!("exactly one bright level required, found {}", bright.len()),
        ));
    }
    let e_b = bright[0].energy_mev;
    for l in levels {
        ensure_non_negative("lifetime.manifold.multiplicity", l.multiplicity)?;
        ensure_non_negative("lifetime.manifold.energy_mev", l.energy_mev - e_b)?;
    }
    ensure_positive("lifetime.manifold.multiplicity", bright[0].multiplicity)
}

/// Boltzmann occupation of the bright level.
pub fn bright_fraction(levels: &[Level], temperature_k: f64) -> f64 {
    let kt = kt_mev(temperature_k);
    let e_b = levels.iter().find(|l| l.bright).map_or(0.0, |l| l.energy_mev);
    let weight = |l: &Level| l.multiplicity * (-(l.energy_mev - e_b) / kt).exp();
    let z: f64 = levels.iter().map(weight).sum();
    levels.iter().filter(|l| l.bright).map(weight).sum::<f64>() / z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifetimeParams {
    pub tau_rad_bulk_ns: f64,
    pub manifold: Vec<Level>,
    pub geometry: NanowireGeometry,
}

impl Default for LifetimeParams {
    /// Literature-style starting point before calibration.
    fn default() -> Self {
        Self {
            tau_rad_bulk_ns: 1.0,
            manifold: vec![
                Level::new("bright", 0.0, 2.0, true),
                Level::new("dark", 0.3, 2.0, false),
                Level::new("p-shell", 68.0, 4.0, false),
            ],
            geometry: NanowireGeometry {
                diameter_nm: 290.0,
                ..NanowireGeometry::default()
            },
        }
    }
}

impl LifetimeParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("lifetime.tau_rad_bulk_ns", self.tau_rad_bulk_ns)?;
        validate_manifold(&self.manifold)?;
        self.geometry.validate()
    }
}

/// Two (temperature K, lifetime ns) targets and the manifold level whose
/// multiplicity is adjusted to match their ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifetimeCalibration {
    pub targets: [[f64; 2]; 2],
    pub level: String,
}

impl Default for LifetimeCalibration {
    fn default() -> Self {
        Self {
            targets: [[4.0, 2.1], [300.0, 10.8]],
            level: "p-shell".to_string(),
        }
    }
}

/// `τ(T) = τ_bulk / (F_rel(λ(T), D) · f_bright(T))`.
#[derive(Debug, Clone)]
pub struct LifetimeModel {
    params: LifetimeParams,
    varshni: Varshni,
    curve: SeRateCurve,
}

impl LifetimeModel {
    pub fn new(params: LifetimeParams, varshni: Varshni) -> Result<Self> {
        params.validate()?;
        let curve = SeRateCurve::new(&params.geometry)?;
        Ok(Self {
            params,
            varshni,
            curve,
        })
    }

    pub fn params(&self) -> &LifetimeParams {
        &self.params
    }

    /// Relative emission rate of the bright state at the emission wavelength.
    pub fn rate_factor(&self, temperature_k: f64) -> Result<f64> {
        let l = self.varshni.wavelength_nm(temperature_k)?;
        let f = self.curve.relative(self.params.geometry.diameter_nm, l)?;
        if !(f > 0.0) {
            return Err(Error::NonPositiveRate {
                value: f,
                wavelength_nm: l,
            });
        }
        Ok(f)
    }

    pub fn bright_fraction(&self, temperature_k: f64) -> Result<f64> {
        check_temperature(temperature_k)?;
        Ok(bright_fraction(&self.params.manifold, temperature_k))
    }

    pub fn lifetime_ns(&self, temperature_k: f64) -> Result<f64> {
        let f = self.rate_factor(temperature_k)?;
        Ok(self.params.tau_rad_bulk_ns / (f * self.bright_fraction(temperature_k)?))
    }

    /// Fit the chosen level's multiplicity to the lifetime ratio, then scale
    /// `τ_bulk` to hit the first target.
    pub fn calibrate(&self, cal: &LifetimeCalibration) -> Result<Self> {
        let [[t1, tau1], [t2, tau2]] = cal.targets;
        ensure_positive("lifetime.calibration.targets", tau1)?;
        ensure_positive("lifetime.calibration.targets", tau2)?;
        let idx = self
            .params
            .manifold
            .iter()
            .position(|l| l.label == cal.level && !l.bright)
            .ok_or_else(|| {
                Error::invalid(
                    "lifetime.calibration.level",
                    format!("no non-bright level named `{}`", cal.level),
                )
            })?;
        let (f1, f2) = (self.rate_factor(t1)?, self.rate_factor(t2)?);
        let with = |m: f64| {
            let mut levels = self.params.manifold.clone();
            levels[idx].multiplicity = m;
            levels
        };
        let ratio = |m: f64| {
            let levels = with(m);
            (f1 * bright_fraction(&levels, t1)) / (f2 * bright_fraction(&levels, t2))
        };
        let wanted = tau2 / tau1;
        let m = brent(|m| ratio(m) - wanted, 0.0, 1e6, 1e-12).ok_or_else(|| {
            Error::invalid(
                "lifetime.calibration",
                format!(
                    "ratio {wanted:.3} outside reachable range [{:.3}, {:.3}]",
                    ratio(0.0),
                    ratio(1e6)
                ),
            )
        })?;
        let manifold = with(m);
        let tau_rad_bulk_ns = tau1 * f1 * bright_fraction(&manifold, t1);
        Ok(Self {
            params: LifetimeParams {
                tau_rad_bulk_ns,
                manifold,
                geometry: self.params.geometry.clone(),
            },
            varshni: self.varshni,
            curve: self.curve.clone(),
        })
    }
}

/// Spectral line as it would appear in a PL spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumLine {
    pub label: Line,
    pub center_nm: f64,
    pub fwhm_uev: f64,
    pub relative_intensity: f64,
}

impl SpectrumLine {
    pub fn fwhm_nm(&self) -> f64 {
        uev_to_nm(self.fwhm_uev, self.center_nm)
    }
}

/// All temperature-dependent physics used by the simulator.
#[derive(Debug, Clone)]
pub struct TemperatureModel {
    pub varshni: Varshni,
    pub linewidth: Linewidth,
    pub lifetime: LifetimeModel,
}

/// Configuration of [`TemperatureModel`]. Unset overrides are calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemperatureConfig {
    pub anchors: [[f64; 2]; 2],
    pub varshni_beta_k: f64,
    pub linewidth_calibration: LinewidthCalibration,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linewidth: Option<Linewidth>,
    pub lifetime: LifetimeParams,
    pub calibrate_lifetime: bool,
    pub lifetime_calibration: LifetimeCalibration,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            anchors: [[4.0, 1301.28], [300.0, 1397.8]],
            varshni_beta_k: 600.0,
            linewidth_calibration: LinewidthCalibration::default(),
            linewidth: None,
            lifetime: LifetimeParams::default(),
            calibrate_lifetime: true,
            lifetime_calibration: LifetimeCalibration::default(),
        }
    }
}

impl TemperatureModel {
    pub fn from_config(cfg: &TemperatureConfig, emitter: &EmitterConfig) -> Result<Self> {
        let varshni = Varshni::from_anchors(cfg.anchors[0], cfg.anchors[1], cfg.varshni_beta_k)?;
        let linewidth = match cfg.linewidth {
            Some(lw) => {
                lw.validate()?;
                lw
            }
            None => Linewidth::calibrate(&cfg.linewidth_calibration, emitter.xx_binding)?,
        };
        let mut lifetime = LifetimeModel::new(cfg.lifetime.clone(), varshni)?;
        if cfg.calibrate_lifetime {
            lifetime = lifetime.calibrate(&cfg.lifetime_calibration)?;
        }
        Ok(Self {
            varshni,
            linewidth,
            lifetime,
        })
    }

    /// Calibrated model for the default emitter.
    pub fn calibrated_default() -> Result<Self> {
        Self::from_config(&TemperatureConfig::default(), &EmitterConfig::default())
    }

    pub fn line_fwhm_uev(&self, line: Line, temperature_k: f64) -> Result<f64> {
        Ok(self.linewidth.at(temperature_k)? * line_width_scale(line))
    }

    /// Lorentzian FWHM in nm of each line, indexed like [`Line::ALL`].
    pub fn line_widths_nm(&self, emitter: &EmitterConfig, temperature_k: f64) -> Result<[f64; 3]> {
        let x = self.varshni.wavelength_nm(temperature_k)?;
        let mut out = [0.0; 3];
        for (slot, line) in out.iter_mut().zip(Line::ALL) {
            let c = line_center_nm(x, line, emitter);
            *slot = uev_to_nm(self.line_fwhm_uev(line, temperature_k)?, c);
        }
        Ok(out)
    }

    /// PL line set at `temperature_k` and excitation `power_ratio` (P/P_sat).
    pub fn synth_line_set(
        &self,
        emitter: &EmitterConfig,
        temperature_k: f64,
        power_ratio: f64,
    ) -> Result<Vec<SpectrumLine>> {
        emitter.validate()?;
        ensure_non_negative("power_ratio", power_ratio)?;
        let x = self.varshni.wavelength_nm(temperature_k)?;
        let mu = emitter.mu_sat * power_ratio;
        let p_one = -(-mu).exp_m1();
        let p_two = (1.0 - (-mu).exp() * (1.0 + mu)).max(0.0);
        let pshell = if temperature_k > PSHELL_ONSET_K && emitter.pshell_emission {
            let tau = self.lifetime.lifetime_ns(temperature_k)? * emitter.tau_x0
                / self.lifetime.lifetime_ns(crate::emitter::REFERENCE_TEMPERATURE_K)?;
            let g = emitter.degeneracies;
            let k_p = (g.pshell / g.bright) * (-emitter.sp_splitting / kt_mev(temperature_k)).exp() / tau;
            let branch = if emitter.relax_rate.is_finite() {
                k_p / (k_p + emitter.relax_rate)
            } else {
                0.0
            };
            p_two * branch
        } else {
            0.0
        };
        let raw = [p_one, p_two, pshell];
        let visible = |v: f64| if v >= VISIBILITY_THRESHOLD * p_one { v } else { 0.0 };
        Line::ALL
            .iter()
            .zip(raw)
            .map(|(&line, intensity)| {
                Ok(SpectrumLine {
                    label: line,
                    center_nm: line_center_nm(x, line, emitter),
                    fwhm_uev: self.line_fwhm_uev(line, temperature_k)?,
                    relative_intensity: if line == Line::Exciton { intensity } else { visible(intensity) },
                })
            })
            .collect()
    }
}

impl EmissionModel for TemperatureModel {
    fn exciton_lifetime_ns(&self, temperature_k: f64) -> Result<f64> {
        self.lifetime.lifetime_ns(temperature_k)
    }

    fn exciton_wavelength_nm(&self, temperature_k: f64) -> Result<f64> {
        self.varshni.wavelength_nm(temperature_k)
    }
}

pub const LINE_SET_CSV_HEADER: &str = "label,center_nm,fwhm_uev,intensity";
pub const LIFETIME_CSV_HEADER: &str = "T_K,tau_ns";

pub fn line_set_csv(lines: &[SpectrumLine]) -> String {
    let mut out = format!("{LINE_SET_CSV_HEADER}\n");
    for l in lines {
        let _ = writeln!(
            out,
            "{},{:.4},{:.3},{:.6e}",
            l.label, l.center_nm, l.fwhm_uev, l.relative_intensity
        );
    }
    out
}

pub fn lifetime_csv(model: &LifetimeModel, temperatures_k: &[f64]) -> Result<String> {
    let mut out = format!("{LIFETIME_CSV_HEADER}\n");
    for &t in temperatures_k {
        let _ = writeln!(out, "{t},{:.6}", model.lifetime_ns(t)?);
    }
    Ok(out)
}

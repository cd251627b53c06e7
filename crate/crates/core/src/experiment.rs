//! Configuration-driven experiments: one simulated measurement per
//! (temperature, power) point, sweeps over such points, and the text
//! artifacts they produce.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    default_halfwidth, fit_g2, fit_trpl, g2_integrated, FitOptions, G2Fit, TrplFit, TrplOptions,
};
use crate::detection::{
    apply_loss, correlate, trpl_histogram, Bandpass, BandpassSampler, ClickMeta, ClickStream, DetectorConfig,
    Histogram, HbtDetector,
};
use crate::budget::BudgetInputs;
use crate::digest::config_digest;
use crate::emitter::{
    stream_meta, DriveConfig, EmitterConfig, Line, PhotonStream, PulseTrain,
};
use crate::error::{ensure_fraction, ensure_positive, Error, Result};
use crate::seeds::derive_seed;
use crate::temperature::{TemperatureConfig, TemperatureModel};
use crate::units::period_ps;
use crate::waveguide::NanowireGeometry;

/// Bandpass setting; without `center_nm` the filter tracks the exciton line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_nm: Option<f64>,
    pub width_nm: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            center_nm: None,
            width_nm: 0.1,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width_nm > 0.0) {
            return Err(Error::invalid("filter.width_nm", format!("must be > 0, got {}", self.width_nm)));
        }
        if let Some(c) = self.center_nm {
            ensure_positive("filter.center_nm", c)?;
        }
        Ok(())
    }

    pub fn bandpass(&self, exciton_nm: f64) -> Bandpass {
        Bandpass {
            center_nm: self.center_nm.unwrap_or(exciton_nm),
            width_nm: self.width_nm,
        }
    }
}

/// Survival of photons between the emitter and the beamsplitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsConfig {
    pub throughput: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self { throughput: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Coincidence histogram bin width (ps).
    pub bin_width_ps: i64,
    /// Coincidence window in repetition periods each side of zero.
    pub window_periods: u32,
    /// TRPL histogram bin width (ps).
    pub trpl_bin_width_ps: i64,
    /// Integration half-width for the peak-area ratio; default derived
    /// from the fitted lifetime and detector jitter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halfwidth_ps: Option<f64>,
    pub fit: FitOptions,
    pub trpl: TrplOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width_ps: 64,
            window_periods: 6,
            trpl_bin_width_ps: 32,
            halfwidth_ps: None,
            fit: FitOptions::default(),
            trpl: TrplOptions::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_width_ps <= 0 {
            return Err(Error::invalid("analysis.bin_width_ps", "must be > 0"));
        }
        if self.trpl_bin_width_ps <= 0 {
            return Err(Error::invalid("analysis.trpl_bin_width_ps", "must be > 0"));
        }
        if self.window_periods < 6 {
            return Err(Error::invalid(
                "analysis.window_periods",
                "must be at least 6 (five full side peaks per side)",
            ));
        }
        if let Some(h) = self.halfwidth_ps {
            ensure_positive("analysis.halfwidth_ps", h)?;
        }
        if self.fit.max_iterations == 0 {
            return Err(Error::invalid("analysis.fit.max_iterations", "must be >= 1"));
        }
        ensure_positive("analysis.fit.step_tolerance", self.fit.step_tolerance)
    }
}

/// Integration-time rule. A pilot block estimates the detected rate and the
/// point is extended until a side peak is expected to hold
/// `min_side_peak_counts` coincidences, capped at `max_pulses`.
/// `drive.n_pulses` is always the minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// 0 disables the extension.
    pub min_side_peak_counts: f64,
    pub max_pulses: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            min_side_peak_counts: 2000.0,
            max_pulses: 200_000_000,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        crate::error::ensure_non_negative("sampling.min_side_peak_counts", self.min_side_peak_counts)?;
        if self.max_pulses == 0 {
            return Err(Error::invalid("sampling.max_pulses", "must be >= 1"));
        }
        Ok(())
    }

    /// Pulses needed given `detected_per_pulse` photons reaching the
    /// detectors (both arms together).
    pub fn pulses_for(&self, minimum: u64, detected_per_pulse: f64) -> u64 {
        if self.min_side_peak_counts == 0.0 {
            return minimum;
        }
        let per_arm = 0.5 * detected_per_pulse;
        let wanted = if per_arm > 0.0 {
            (self.min_side_peak_counts / (per_arm * per_arm)).ceil()
        } else {
            f64::INFINITY
        };
        minimum.max(wanted.min(self.max_pulses as f64) as u64)
    }
}

/// Measurement protocol applied along a temperature sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// `[from_K, width_nm]` steps, ascending; the last step whose start is
    /// at or below T applies.
    pub filter_steps: Vec<[f64; 2]>,
    /// `[from_K, power_ratio]` steps, same convention.
    pub power_steps: Vec<[f64; 2]>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            filter_steps: vec![[0.0, 0.1], [175.0, 12.0], [300.0, 25.0]],
            power_steps: vec![[0.0, 0.5], [120.0, 0.25]],
        }
    }
}

fn step_value(steps: &[[f64; 2]], t: f64) -> f64 {
    steps
        .iter()
        .rev()
        .find(|s| s[0] <= t)
        .or(steps.first())
        .map(|s| s[1])
        .unwrap_or(f64::NAN)
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, steps) in [("protocol.filter_steps", &self.filter_steps), ("protocol.power_steps", &self.power_steps)] {
            if steps.is_empty() {
                return Err(Error::invalid(key, "needs at least one step"));
            }
            if steps.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::invalid(key, "step temperatures must increase"));
            }
            for s in steps {
                ensure_positive(key, s[1])?;
            }
        }
        Ok(())
    }

    pub fn filter_width_nm(&self, t: f64) -> f64 {
        step_value(&self.filter_steps, t)
    }

    /// `power_ratio` at temperature `t`, or `NaN` if no step applies.
    pub fn power_ratio(&self, t: f64) -> f64 {
        step_value(&self.power_steps, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub temperatures: Vec<f64>,
    pub powers: Vec<f64>,
    /// Temperature of the power sweep (K).
    pub power_temperature_k: f64,
    pub protocol: ProtocolConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            temperatures: vec![4.0, 40.0, 77.0, 100.0, 160.0, 220.0, 300.0],
            powers: vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
            power_temperature_k: 4.0,
            protocol: ProtocolConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Grid of the waveguide report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideSweepConfig {
    pub geometry: NanowireGeometry,
    pub diameters_nm: Vec<f64>,
    /// `[start, end, step]` in nm, end inclusive.
    pub wavelengths_nm: [f64; 3],
}

impl Default for WaveguideSweepConfig {
    fn default() -> Self {
        Self {
            geometry: NanowireGeometry::default(),
            diameters_nm: vec![270.0, 290.0, 310.0],
            wavelengths_nm: [1300.0, 1400.0, 5.0],
        }
    }
}

impl WaveguideSweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.diameters_nm.is_empty() {
            return Err(Error::invalid("waveguide.diameters_nm", "needs at least one diameter"));
        }
        for &d in &self.diameters_nm {
            ensure_positive("waveguide.diameters_nm", d)?;
        }
        let [start, end, step] = self.wavelengths_nm;
        ensure_positive("waveguide.wavelengths_nm", start)?;
        ensure_positive("waveguide.wavelengths_nm", step)?;
        if end < start {
            return Err(Error::invalid("waveguide.wavelengths_nm", "end must not precede start"));
        }
        Ok(())
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        let [start, end, step] = self.wavelengths_nm;
        let n = ((end - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + i as f64 * step).collect()
    }
}

/// Complete description of a simulated measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Temperature of single-point commands (K).
    pub temperature_k: f64,
    /// Pulses simulated per block of the streaming pipeline.
    pub block_pulses: u64,
    pub emitter: EmitterConfig,
    pub drive: DriveConfig,
    pub sampling: SamplingConfig,
    pub filter: FilterConfig,
    pub optics: OpticsConfig,
    pub detector: DetectorConfig,
    pub temperature: TemperatureConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
    pub budget: BudgetInputs,
    pub waveguide: WaveguideSweepConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            temperature_k: 4.0,
            block_pulses: 50_000,
            emitter: EmitterConfig::default(),
            drive: DriveConfig::default(),
            sampling: SamplingConfig::default(),
            filter: FilterConfig::default(),
            optics: OpticsConfig::default(),
            detector: DetectorConfig::default(),
            temperature: TemperatureConfig::default(),
            analysis: AnalysisConfig::default(),
            sweep: SweepConfig::default(),
            budget: BudgetInputs::default(),
            waveguide: WaveguideSweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.emitter.validate()?;
        self.drive.validate()?;
        self.sampling.validate()?;
        self.filter.validate()?;
        ensure_fraction("optics.throughput", self.optics.throughput)?;
        self.detector.validate()?;
        self.analysis.validate()?;
        self.sweep.protocol.validate()?;
        self.budget.validate()?;
        self.waveguide.validate()?;
        if !(self.temperature_k > 0.0 && self.temperature_k <= crate::temperature::MAX_TEMPERATURE_K) {
            return Err(Error::invalid("temperature_k", format!("must lie in (0, 350], got {}", self.temperature_k)));
        }
        if self.block_pulses == 0 {
            return Err(Error::invalid("block_pulses", "must be >= 1"));
        }
        for &t in &self.sweep.temperatures {
            if !(t > 0.0 && t <= crate::temperature::MAX_TEMPERATURE_K) {
                return Err(Error::invalid("sweep.temperatures", format!("{t} K outside (0, 350]")));
            }
        }
        for &p in &self.sweep.powers {
            crate::error::ensure_non_negative("sweep.powers", p)?;
        }
        Ok(())
    }

    /// Digest of every setting that affects results; the output directory is excluded.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputConfig::default();
        config_digest(&canonical)
    }

    pub fn temperature_model(&self) -> Result<TemperatureModel> {
        TemperatureModel::from_config(&self.temperature, &self.emitter)
    }
}

/// Every default, as a commented TOML document.
pub fn defaults_toml() -> String {
    format!(
        "# Default experiment configuration. Every key is optional.\n{}",
        ExperimentConfig::default().to_toml()
    )
}

/// Conditions of one simulated measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub temperature_k: f64,
    pub power_ratio: f64,
    pub filter_width_nm: f64,
}

impl PointSpec {
    pub fn label(&self) -> String {
        format!("T={}K/P={}/F={}nm", self.temperature_k, self.power_ratio, self.filter_width_nm)
    }
}

/// Per-stage seeds of one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub emitter: u64,
    pub filter: u64,
    pub optics: u64,
    pub detector: u64,
}

impl StageSeeds {
    pub fn derive(master: u64, spec: &PointSpec) -> Self {
        let label = spec.label();
        Self {
            emitter: derive_seed(master, &format!("emitter/{label}")),
            filter: derive_seed(master, &format!("filter/{label}")),
            optics: derive_seed(master, &format!("optics/{label}")),
            detector: derive_seed(master, &format!("detector/{label}")),
        }
    }
}

pub const SEED_DERIVATION: &str =
    "stage seed = derive_seed(master, \"<stage>/T=<T>K/P=<P>/F=<width>nm\"), stages emitter, filter, optics, detector";

/// Clicks of both detectors for one point, plus what produced them.
#[derive(Debug, Clone)]
pub struct DetectedPoint {
    pub spec: PointSpec,
    pub seeds: StageSeeds,
    pub exciton_nm: f64,
    pub exciton_fwhm_uev: f64,
    pub model_lifetime_ns: f64,
    pub emitted: u64,
    /// Pulses actually simulated (at least `drive.n_pulses`).
    pub pulses: u64,
    pub clicks: (ClickStream, ClickStream),
    pub duration_s: f64,
    pub rep_period_ps: f64,
}

fn drive_for(cfg: &ExperimentConfig, spec: &PointSpec) -> DriveConfig {
    DriveConfig {
        power_ratio: spec.power_ratio,
        ..cfg.drive.clone()
    }
}

/// Simulate emission, filtering, losses and HBT detection block by block.
pub fn detect_point(cfg: &ExperimentConfig, model: &TemperatureModel, spec: &PointSpec) -> Result<DetectedPoint> {
    let seeds = StageSeeds::derive(cfg.seed, spec);
    let drive = drive_for(cfg, spec);
    let t = spec.temperature_k;
    let exciton_nm = model.varshni.wavelength_nm(t)?;
    let filter = FilterConfig {
        width_nm: spec.filter_width_nm,
        ..cfg.filter
    };
    filter.validate()?;
    let widths = model.line_widths_nm(&cfg.emitter, t)?;
    let mut sampler = BandpassSampler::new(&filter.bandpass(exciton_nm), widths, seeds.filter)?;
    let mut hbt = HbtDetector::new(&cfg.detector, seeds.detector)?;
    let mut train = PulseTrain::new(&cfg.emitter, &drive, t, model, seeds.emitter)?;
    let meta = stream_meta(&cfg.emitter, &drive, t, seeds.emitter);
    let mut loss_seed = seeds.optics;
    let mut emitted = 0u64;
    let mut block = Vec::new();
    let mut pilot = true;
    while !train.is_finished() {
        block.clear();
        train.run(cfg.block_pulses, &mut block);
        emitted += block.len() as u64;
        sampler.apply(&mut block);
        if pilot && train.pulses_remaining() > 0 {
            let per_pulse = block.len() as f64 * cfg.optics.throughput * cfg.detector.efficiency / cfg.block_pulses as f64;
            let total = cfg.sampling.pulses_for(drive.n_pulses, per_pulse);
            if total != train.total_pulses() {
                train.set_total_pulses(total)?;
            }
        }
        pilot = false;
        if cfg.optics.throughput < 1.0 {
            let s = PhotonStream {
                records: std::mem::take(&mut block),
                meta: meta.clone(),
            };
            block = apply_loss(&s, cfg.optics.throughput, loss_seed)?.records;
            loss_seed = derive_seed(loss_seed, "next");
        }
        hbt.push(&block);
    }
    let duration_s = train.total_pulses() as f64 / (drive.rep_rate * 1e6);
    let clicks = hbt.finish(
        duration_s,
        ClickMeta {
            seed: seeds.detector,
            source: format!("{}/{}", meta.emitter_digest, meta.drive_digest),
        },
    )?;
    Ok(DetectedPoint {
        spec: *spec,
        seeds,
        exciton_nm,
        exciton_fwhm_uev: model.line_fwhm_uev(Line::Exciton, t)?,
        model_lifetime_ns: crate::emitter::exciton_lifetime_at(&cfg.emitter, model, t)?,
        emitted,
        clicks,
        pulses: train.total_pulses(),
        duration_s,
        rep_period_ps: period_ps(drive.rep_rate),
    })
}

/// The single point of `simulate`, `g2` and `trpl`.
pub fn single_point(cfg: &ExperimentConfig) -> PointSpec {
    PointSpec {
        temperature_k: cfg.temperature_k,
        power_ratio: cfg.drive.power_ratio,
        filter_width_nm: cfg.filter.width_nm,
    }
}

/// Emitter stream of the single point, with the seed `detect_point` would use.
pub fn simulate_emitter(cfg: &ExperimentConfig, model: &TemperatureModel) -> Result<PhotonStream> {
    let spec = single_point(cfg);
    let seeds = StageSeeds::derive(cfg.seed, &spec);
    crate::emitter::simulate_pulse_train(&cfg.emitter, &drive_for(cfg, &spec), spec.temperature_k, model, seeds.emitter)
}

/// Filter, optical loss and HBT detection applied to a stored emitter
/// stream. The filter follows `cfg.filter` at the stream's temperature.
pub fn detect_stream(cfg: &ExperimentConfig, model: &TemperatureModel, stream: &PhotonStream) -> Result<(ClickStream, ClickStream)> {
    let spec = PointSpec {
        temperature_k: stream.meta.temperature_k,
        ..single_point(cfg)
    };
    let seeds = StageSeeds::derive(cfg.seed, &spec);
    cfg.filter.validate()?;
    let exciton_nm = model.varshni.wavelength_nm(spec.temperature_k)?;
    let widths = model.line_widths_nm(&cfg.emitter, spec.temperature_k)?;
    let mut records = stream.records.clone();
    BandpassSampler::new(&cfg.filter.bandpass(exciton_nm), widths, seeds.filter)?.apply(&mut records);
    let mut passed = stream.with_records(records);
    if cfg.optics.throughput < 1.0 {
        passed = apply_loss(&passed, cfg.optics.throughput, seeds.optics)?;
    }
    let mut hbt = HbtDetector::new(&cfg.detector, seeds.detector)?;
    hbt.push(&passed.records);
    hbt.finish(
        stream.duration_s(),
        ClickMeta {
            seed: seeds.detector,
            source: format!("{}/{}", stream.meta.emitter_digest, stream.meta.drive_digest),
        },
    )
}

/// Everything derived from one point's clicks. Fit failures are kept
/// rather than propagated so that sweeps can continue.
#[derive(Debug, Clone)]
pub struct PointAnalysis {
    pub coincidences: Histogram,
    pub decay: Histogram,
    pub trpl: Result<TrplFit>,
    pub g2_integrated: Result<f64>,
    pub g2_fit: Result<G2Fit>,
}

impl PointAnalysis {
    /// First error among the fits, if any.
    pub fn error(&self) -> Option<&Error> {
        self.trpl
            .as_ref()
            .err()
            .or(self.g2_integrated.as_ref().err())
            .or(self.g2_fit.as_ref().err())
    }
}

/// Coincidence histogram of the two channels with the configured binning.
pub fn coincidence_histogram(cfg: &AnalysisConfig, a: &ClickStream, b: &ClickStream, rep_period_ps: f64) -> Result<Histogram> {
    let bw = cfg.bin_width_ps;
    let window = ((cfg.window_periods as f64 * rep_period_ps) / bw as f64).ceil() as i64 * bw;
    correlate(a, b, bw, window)
}

pub fn decay_histogram(cfg: &AnalysisConfig, a: &ClickStream, b: &ClickStream, rep_period_ps: f64) -> Result<Histogram> {
    let both = ClickStream::merged(&[a, b], 0);
    trpl_histogram(&both, rep_period_ps.round() as i64, cfg.trpl_bin_width_ps)
}

/// TRPL lifetime, then peak-area ratio and fixed-lifetime fit.
pub fn analyse_clicks(
    cfg: &AnalysisConfig,
    detector: &DetectorConfig,
    a: &ClickStream,
    b: &ClickStream,
    rep_period_ps: f64,
) -> Result<PointAnalysis> {
    let coincidences = coincidence_histogram(cfg, a, b, rep_period_ps)?;
    let decay = decay_histogram(cfg, a, b, rep_period_ps)?;
    let trpl = fit_trpl(&decay, &cfg.trpl);
    let (g2_integrated, g2_fit) = match &trpl {
        Ok(t) => {
            let hw = cfg
                .halfwidth_ps
                .unwrap_or_else(|| default_halfwidth(t.lifetime, rep_period_ps, detector.jitter_fwhm));
            (
                g2_integrated(&coincidences, rep_period_ps, hw),
                fit_g2(&coincidences, t.lifetime, rep_period_ps, &cfg.fit),
            )
        }
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    Ok(PointAnalysis {
        coincidences,
        decay,
        trpl,
        g2_integrated,
        g2_fit,
    })
}

/// One row of a sweep table.
#[derive(Debug, Clone)]
pub struct PointReport {
    pub detected: DetectedPoint,
    pub analysis: Result<PointAnalysis>,
}

impl PointReport {
    pub fn g2_zero(&self) -> Option<f64> {
        self.analysis.as_ref().ok()?.g2_fit.as_ref().ok().map(|f| f.g2_zero)
    }

    pub fn g2_integrated(&self) -> Option<f64> {
        self.analysis.as_ref().ok()?.g2_integrated.as_ref().ok().copied()
    }

    pub fn lifetime_fit_ns(&self) -> Option<f64> {
        self.analysis.as_ref().ok()?.trpl.as_ref().ok().map(|f| f.lifetime)
    }

    pub fn error(&self) -> Option<Error> {
        match &self.analysis {
            Err(e) => Some(e.clone()),
            Ok(a) => a.error().cloned(),
        }
    }

    pub fn click_rate_cps(&self) -> f64 {
        (self.detected.clicks.0.len() + self.detected.clicks.1.len()) as f64 / self.detected.duration_s
    }

    pub fn status(&self) -> String {
        match self.error() {
            None => "ok".into(),
            Some(e) => e.to_string().replace([',', '\n'], ";"),
        }
    }

    pub fn csv_row(&self) -> String {
        let d = &self.detected;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let fit = self.analysis.as_ref().ok().and_then(|a| a.g2_fit.as_ref().ok());
        format!(
            "{},{},{},{:.4},{:.3},{:.4},{},{},{},{},{},{:.1},{}",
            d.spec.temperature_k,
            d.spec.power_ratio,
            d.spec.filter_width_nm,
            d.exciton_nm,
            d.exciton_fwhm_uev,
            d.model_lifetime_ns,
            opt(self.lifetime_fit_ns()),
            opt(self.g2_zero()),
            opt(self.g2_integrated()),
            opt(fit.map(|f| f.background_level)),
            opt(fit.map(|f| f.residual_norm)),
            self.click_rate_cps(),
            self.status()
        )
    }
}

pub const POINT_CSV_HEADER: &str = "T_K,power_ratio,filter_nm,wavelength_nm,linewidth_uev,lifetime_model_ns,\
lifetime_fit_ns,g2_zero,g2_integrated,background,residual,click_rate_cps,status";

pub fn run_point(cfg: &ExperimentConfig, model: &TemperatureModel, spec: &PointSpec) -> Result<PointReport> {
    let detected = detect_point(cfg, model, spec)?;
    let analysis = analyse_clicks(
        &cfg.analysis,
        &cfg.detector,
        &detected.clicks.0,
        &detected.clicks.1,
        detected.rep_period_ps,
    );
    Ok(PointReport { detected, analysis })
}

/// Points of the temperature sweep with the protocol's filter and power.
pub fn temperature_points(cfg: &ExperimentConfig) -> Vec<PointSpec> {
    let p = &cfg.sweep.protocol;
    cfg.sweep
        .temperatures
        .iter()
        .map(|&t| PointSpec {
            temperature_k: t,
            power_ratio: p.power_ratio(t),
            filter_width_nm: p.filter_width_nm(t),
        })
        .collect()
}

pub fn power_points(cfg: &ExperimentConfig) -> Vec<PointSpec> {
    cfg.sweep
        .powers
        .iter()
        .map(|&p| PointSpec {
            temperature_k: cfg.sweep.power_temperature_k,
            power_ratio: p,
            filter_width_nm: cfg.filter.width_nm,
        })
        .collect()
}

/// Outcome of a point that could not even be simulated.
#[derive(Debug, Clone)]
pub struct FailedPoint {
    pub spec: PointSpec,
    pub error: Error,
}

pub type SweepRow = std::result::Result<PointReport, FailedPoint>;

/// Run points in parallel on at most `jobs` threads; rows come back in input order.
pub fn run_sweep(cfg: &ExperimentConfig, points: &[PointSpec], jobs: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::invalid("sweep", "no points to run"));
    }
    let model = cfg.temperature_model()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|spec| run_point(cfg, &model, spec).map_err(|error| FailedPoint { spec: *spec, error }))
            .collect()
    }))
}

pub fn sweep_csv_row(row: &SweepRow) -> String {
    match row {
        Ok(r) => r.csv_row(),
        Err(f) => format!(
            "{},{},{},,,,,,,,,,{}",
            f.spec.temperature_k,
            f.spec.power_ratio,
            f.spec.filter_width_nm,
            f.error.to_string().replace([',', '\n'], ";")
        ),
    }
}

/// `# key = value` header lines.
pub fn metadata_header(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "# {k} = {}", v.replace('\n', " "));
    }
    s
}

pub fn standard_metadata(cfg: &ExperimentConfig, command: &str) -> Vec<(&'static str, String)> {
    vec![
        ("generator", format!("nanowire-sps {}", env!("CARGO_PKG_VERSION"))),
        ("command", command.to_string()),
        ("config_digest", cfg.digest()),
        ("seed", cfg.seed.to_string()),
        ("seed_derivation", SEED_DERIVATION.to_string()),
    ]
}

pub fn sweep_csv(cfg: &ExperimentConfig, command: &str, rows: &[SweepRow]) -> String {
    let mut s = metadata_header(&standard_metadata(cfg, command));
    s.push_str(POINT_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&sweep_csv_row(r));
        s.push('\n');
    }
    s
}

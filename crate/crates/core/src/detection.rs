//! From emitted photons to detector clicks and histograms: spectral
//! filtering, losses, a 50/50 Hanbury Brown–Twiss setup with two
//! single-photon detectors, coincidence correlation and TRPL histograms.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::{Line, PhotonRecord, PhotonStream};
use crate::error::{ensure_fraction, ensure_non_negative, ensure_positive, Error, Result};
use crate::seeds::{rng_from_seed, SimRng};

/// FWHM of a Gaussian over its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Single-photon detector model, identical for both HBT arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Gaussian timing jitter per detector (ps, FWHM).
    pub jitter_fwhm: f64,
    /// Dark counts per second per detector.
    pub dark_rate: f64,
    /// Dead time after each registered click (ps).
    pub dead_time: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: 0.9,
            jitter_fwhm: 60.0,
            dark_rate: 100.0,
            dead_time: 0.0,
        }
    }
}

impl DetectorConfig {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            jitter_fwhm: 0.0,
            dark_rate: 0.0,
            dead_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_fraction("detector.efficiency", self.efficiency)?;
        ensure_non_negative("detector.jitter_fwhm", self.jitter_fwhm)?;
        ensure_non_negative("detector.dark_rate", self.dark_rate)?;
        ensure_non_negative("detector.dead_time", self.dead_time)
    }
}

/// Top-hat bandpass filter. An infinite width passes everything untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandpass {
    pub center_nm: f64,
    pub width_nm: f64,
}

impl Bandpass {
    pub fn open() -> Self {
        Self {
            center_nm: 0.0,
            width_nm: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_nm > 0.0) {
            return Err(Error::invalid("filter.width_nm", format!("must be > 0, got {}", self.width_nm)));
        }
        if self.width_nm.is_finite() {
            ensure_positive("filter.center_nm", self.center_nm)?;
        }
        Ok(())
    }

    pub fn passes(&self, wavelength_nm: f64) -> bool {
        (wavelength_nm - self.center_nm).abs() <= 0.5 * self.width_nm
    }
}

/// Analytic pass fraction of a Lorentzian line through a top-hat filter.
pub fn lorentzian_pass_fraction(line_center_nm: f64, fwhm_nm: f64, filter: &Bandpass) -> f64 {
    if filter.width_nm.is_infinite() {
        return 1.0;
    }
    let hw = 0.5 * fwhm_nm;
    let lo = filter.center_nm - 0.5 * filter.width_nm - line_center_nm;
    let hi = filter.center_nm + 0.5 * filter.width_nm - line_center_nm;
    ((hi / hw).atan() - (lo / hw).atan()) / std::f64::consts::PI
}

/// Stateful Lorentzian wavelength sampler plus top-hat passband, so that
/// long streams can be filtered block by block.
pub struct BandpassSampler {
    filter: Bandpass,
    profiles: Vec<Cauchy<f64>>,
    rng: SimRng,
}

impl BandpassSampler {
    /// `line_fwhm_nm` is indexed like [`Line::ALL`].
    pub fn new(filter: &Bandpass, line_fwhm_nm: [f64; 3], seed: u64) -> Result<Self> {
        filter.validate()?;
        let mut profiles = Vec::with_capacity(3);
        for w in line_fwhm_nm {
            ensure_positive("line_fwhm_nm", w)?;
            profiles.push(Cauchy::new(0.0, 0.5 * w).expect("positive scale"));
        }
        Ok(Self {
            filter: *filter,
            profiles,
            rng: rng_from_seed(seed),
        })
    }

    /// Keep passing photons in place, replacing line centres with realized wavelengths.
    pub fn apply(&mut self, records: &mut Vec<PhotonRecord>) {
        if self.filter.width_nm.is_infinite() {
            return;
        }
        records.retain_mut(|r| {
            r.wavelength_nm += self.profiles[line_index(r.line)].sample(&mut self.rng);
            self.filter.passes(r.wavelength_nm)
        });
    }
}

/// Draw each photon's wavelength from its line's Lorentzian (FWHM per line,
/// indexed like [`Line::ALL`]) and keep only those inside the passband.
/// Surviving records carry the realized wavelength.
pub fn apply_bandpass(
    stream: &PhotonStream,
    filter: &Bandpass,
    line_fwhm_nm: [f64; 3],
    seed: u64,
) -> Result<PhotonStream> {
    let mut sampler = BandpassSampler::new(filter, line_fwhm_nm, seed)?;
    let mut records = stream.records.clone();
    sampler.apply(&mut records);
    Ok(stream.with_records(records))
}

fn line_index(line: Line) -> usize {
    Line::ALL.iter().position(|&l| l == line).expect("line listed")
}

/// Independent Bernoulli survival of each photon.
pub fn apply_loss(stream: &PhotonStream, survival: f64, seed: u64) -> Result<PhotonStream> {
    ensure_fraction("survival", survival)?;
    let mut rng = rng_from_seed(seed);
    let records = stream
        .records
        .iter()
        .filter(|_| rng.random::<f64>() < survival)
        .copied()
        .collect();
    Ok(stream.with_records(records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickMeta {
    pub seed: u64,
    /// Digest of the photon stream or configuration the clicks came from.
    pub source: String,
}

/// Time-ordered clicks of one detector channel, integer ps.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickStream {
    pub channel: u8,
    pub times: Vec<i64>,
    pub meta: ClickMeta,
}

impl ClickStream {
    pub fn new(channel: u8, times: Vec<i64>, meta: ClickMeta) -> Result<Self> {
        let s = Self { channel, times, meta };
        if !s.is_sorted() {
            return Err(Error::Unsorted("click stream"));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.times.windows(2).all(|w| w[0] <= w[1])
    }

    /// Concatenate and re-sort clicks from several channels.
    pub fn merged(streams: &[&ClickStream], channel: u8) -> Self {
        let mut times: Vec<i64> = streams.iter().flat_map(|s| s.times.iter().copied()).collect();
        times.sort_unstable();
        Self {
            channel,
            times,
            meta: streams.first().map(|s| s.meta.clone()).unwrap_or(ClickMeta {
                seed: 0,
                source: String::new(),
            }),
        }
    }
}

pub const CLICK_CSV_HEADER: &str = "channel,time_ps";

/// Write clicks of all channels as `channel,time_ps`, merged in time order.
pub fn clicks_csv(streams: &[&ClickStream]) -> String {
    let mut rows: Vec<(i64, u8)> = streams
        .iter()
        .flat_map(|s| s.times.iter().map(move |&t| (t, s.channel)))
        .collect();
    rows.sort_unstable();
    let mut out = format!("{CLICK_CSV_HEADER}\n");
    for (t, c) in rows {
        let _ = writeln!(out, "{c},{t}");
    }
    out
}

/// Parse `channel,time_ps` rows back into channels 0 and 1.
pub fn read_clicks_csv<R: BufRead>(reader: R, meta: ClickMeta) -> Result<(ClickStream, ClickStream)> {
    let mut chans: [Vec<i64>; 2] = [Vec::new(), Vec::new()];
    let mut header_seen = false;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != CLICK_CSV_HEADER {
                return Err(Error::Parse(format!("line {}: expected `{CLICK_CSV_HEADER}`", n + 1)));
            }
            header_seen = true;
            continue;
        }
        let (c, t) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected 2 columns", n + 1)))?;
        let bad = |e: std::num::ParseIntError| Error::Parse(format!("line {}: {e}", n + 1));
        let c: usize = c.parse().map_err(bad)?;
        let t: i64 = t.parse().map_err(bad)?;
        chans
            .get_mut(c)
            .ok_or_else(|| Error::Parse(format!("line {}: channel {c} out of range", n + 1)))?
            .push(t);
    }
    let [a, b] = chans;
    Ok((
        ClickStream::new(0, a, meta.clone())?,
        ClickStream::new(1, b, meta)?,
    ))
}

/// Two-detector HBT arm fed block by block.
pub struct HbtDetector {
    det: DetectorConfig,
    jitter: Option<Normal<f64>>,
    rng: SimRng,
    chans: [Vec<i64>; 2],
}

impl HbtDetector {
    pub fn new(det: &DetectorConfig, seed: u64) -> Result<Self> {
        det.validate()?;
        let sigma = det.jitter_fwhm / FWHM_PER_SIGMA;
        Ok(Self {
            det: *det,
            jitter: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma")),
            rng: rng_from_seed(seed),
            chans: [Vec::new(), Vec::new()],
        })
    }

    /// Per photon: arm choice, survival with `efficiency`, Gaussian jitter.
    pub fn push(&mut self, records: &[PhotonRecord]) {
        for r in records {
            let arm = usize::from(self.rng.random::<bool>());
            if self.rng.random::<f64>() >= self.det.efficiency {
                continue;
            }
            let dt = match &self.jitter {
                Some(j) => j.sample(&mut self.rng),
                None => 0.0,
            };
            self.chans[arm].push((r.time_ps + dt).round() as i64);
        }
    }

    /// Add Poisson dark counts uniformly over `duration_s`, sort, then
    /// enforce the dead time on each channel.
    pub fn finish(mut self, duration_s: f64, meta: ClickMeta) -> Result<(ClickStream, ClickStream)> {
        ensure_non_negative("duration_s", duration_s)?;
        let span_ps = duration_s * 1e12;
        let mean = self.det.dark_rate * duration_s;
        for chan in &mut self.chans {
            if mean > 0.0 {
                let n = Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as u64;
                chan.extend((0..n).map(|_| (self.rng.random::<f64>() * span_ps).floor() as i64));
            }
            chan.sort_unstable();
            if self.det.dead_time > 0.0 {
                enforce_dead_time(chan, self.det.dead_time);
            }
        }
        let [a, b] = self.chans;
        Ok((
            ClickStream {
                channel: 0,
                times: a,
                meta: meta.clone(),
            },
            ClickStream {
                channel: 1,
                times: b,
                meta,
            },
        ))
    }
}

/// Route photons through a 50/50 splitter onto two detectors.
///
/// Per photon: arm choice, survival with `efficiency`, Gaussian jitter.
/// Poisson dark counts are added uniformly over `duration_s`, then dead
/// time is enforced on each channel.
pub fn hbt_detect(
    stream: &PhotonStream,
    det: &DetectorConfig,
    duration_s: f64,
    seed: u64,
) -> Result<(ClickStream, ClickStream)> {
    let mut hbt = HbtDetector::new(det, seed)?;
    hbt.push(&stream.records);
    hbt.finish(
        duration_s,
        ClickMeta {
            seed,
            source: format!("{}/{}", stream.meta.emitter_digest, stream.meta.drive_digest),
        },
    )
}

fn enforce_dead_time(times: &mut Vec<i64>, dead_time_ps: f64) {
    let mut last: Option<i64> = None;
    times.retain(|&t| match last {
        Some(l) if ((t - l) as f64) < dead_time_ps => false,
        _ => {
            last = Some(t);
            true
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramKind {
    Coincidence,
    Decay,
}

/// Fixed-width histogram. Bin `i` covers
/// `[origin + i·bin_width, origin + (i+1)·bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub origin: f64,
    pub counts: Vec<u64>,
    pub kind: HistogramKind,
}

impl Histogram {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.bin_width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Upper edge of the last bin.
    pub fn end(&self) -> f64 {
        self.origin + self.len() as f64 * self.bin_width
    }

    /// Merge groups of `factor` adjacent bins; a trailing partial group
    /// becomes one (wider-span) bin so that totals are preserved exactly.
    pub fn rebin(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("rebin factor", "must be >= 1"));
        }
        Ok(Self {
            bin_width: self.bin_width * factor as f64,
            origin: self.origin,
            counts: self.counts.chunks(factor).map(|c| c.iter().sum()).collect(),
            kind: self.kind,
        })
    }

    /// Same bins with every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            counts: self.counts.iter().map(|c| c * k).collect(),
            ..self.clone()
        }
    }

    pub fn csv_header(&self) -> &'static str {
        match self.kind {
            HistogramKind::Coincidence => "tau_ps,counts",
            HistogramKind::Decay => "t_ps,counts",
        }
    }

    /// Rows of bin centre and count.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", self.csv_header());
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{c}", self.center(i));
        }
        out
    }

    /// Parse the output of [`Histogram::to_csv`] (comment lines allowed).
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut kind = None;
        let mut centers = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if kind.is_none() {
                kind = Some(match line {
                    "tau_ps,counts" => HistogramKind::Coincidence,
                    "t_ps,counts" => HistogramKind::Decay,
                    _ => return Err(Error::Parse(format!("line {}: unknown histogram header", n + 1))),
                });
                continue;
            }
            let (x, c) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 2 columns", n + 1)))?;
            centers.push(x.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
            counts.push(c.parse::<u64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
        }
        let kind = kind.ok_or_else(|| Error::Parse("empty histogram file".into()))?;
        if centers.len() < 2 {
            return Err(Error::Parse("histogram needs at least two bins".into()));
        }
        let bin_width = centers[1] - centers[0];
        Ok(Self {
            bin_width,
            origin: centers[0] - 0.5 * bin_width,
            counts,
            kind,
        })
    }
}

fn coincidence_layout(bin_width: i64, window: i64) -> Result<(usize, i64)> {
    if bin_width <= 0 {
        return Err(Error::invalid("bin_width", "must be > 0"));
    }
    if window < 0 || window % bin_width != 0 {
        return Err(Error::invalid("window", "must be a non-negative multiple of bin_width"));
    }
    let n = (2 * window / bin_width + 1) as usize;
    Ok((n, window))
}

/// Index of delay `tau` in a histogram whose bins are centred on multiples
/// of `bw` between `−window` and `window`.
fn delay_bin(tau: i64, bw: i64, window: i64, n: usize) -> Option<usize> {
    let idx = (2 * (tau + window) + bw).div_euclid(2 * bw);
    (0..n as i64).contains(&idx).then_some(idx as usize)
}

fn empty_coincidence(bin_width: i64, window: i64, n: usize) -> Histogram {
    Histogram {
        bin_width: bin_width as f64,
        origin: -(window as f64) - 0.5 * bin_width as f64,
        counts: vec![0; n],
        kind: HistogramKind::Coincidence,
    }
}

/// All-pairs delay histogram `t_b − t_a` within `±window` (bins centred on
/// multiples of `bin_width`), computed with a sliding two-index merge.
pub fn correlate(a: &ClickStream, b: &ClickStream, bin_width: i64, window: i64) -> Result<Histogram> {
    if !a.is_sorted() {
        return Err(Error::Unsorted("stream a"));
    }
    if !b.is_sorted() {
        return Err(Error::Unsorted("stream b"));
    }
    let (n, window) = coincidence_layout(bin_width, window)?;
    let reach = window + bin_width;
    let chunk = (a.times.len() / rayon::current_num_threads().max(1) / 4).max(4096);
    let partials: Vec<Vec<u64>> = a
        .times
        .par_chunks(chunk)
        .map(|ta| {
            let mut counts = vec![0u64; n];
            let Some(&first) = ta.first() else {
                return counts;
            };
            let mut lo = b.times.partition_point(|&t| t < first - reach);
            for &t in ta {
                while lo < b.times.len() && b.times[lo] < t - reach {
                    lo += 1;
                }
                for &tb in &b.times[lo..] {
                    let tau = tb - t;
                    if tau > reach {
                        break;
                    }
                    if let Some(i) = delay_bin(tau, bin_width, window, n) {
                        counts[i] += 1;
                    }
                }
            }
            counts
        })
        .collect();
    let mut hist = empty_coincidence(bin_width, window, n);
    for p in partials {
        for (h, c) in hist.counts.iter_mut().zip(p) {
            *h += c;
        }
    }
    Ok(hist)
}

/// Delays between distinct clicks of one stream. Each unordered pair is
/// counted once, at its non-negative delay; self-pairs are excluded.
pub fn autocorrelate(a: &ClickStream, bin_width: i64, window: i64) -> Result<Histogram> {
    if !a.is_sorted() {
        return Err(Error::Unsorted("stream"));
    }
    let (n, window) = coincidence_layout(bin_width, window)?;
    let reach = window + bin_width;
    let mut hist = empty_coincidence(bin_width, window, n);
    for (i, &t) in a.times.iter().enumerate() {
        for &u in &a.times[i + 1..] {
            let tau = u - t;
            if tau > reach {
                break;
            }
            if let Some(k) = delay_bin(tau, bin_width, window, n) {
                hist.counts[k] += 1;
            }
        }
    }
    Ok(hist)
}

/// Histogram of click times modulo the laser period (pulses at `k·period`).
pub fn trpl_histogram(clicks: &ClickStream, sync_period: i64, bin_width: i64) -> Result<Histogram> {
    if sync_period <= 0 {
        return Err(Error::invalid("sync_period", "must be > 0"));
    }
    if bin_width <= 0 {
        return Err(Error::invalid("bin_width", "must be > 0"));
    }
    let n = ((sync_period + bin_width - 1) / bin_width) as usize;
    let mut counts = vec![0u64; n];
    for &t in &clicks.times {
        counts[(t.rem_euclid(sync_period) / bin_width) as usize] += 1;
    }
    Ok(Histogram {
        bin_width: bin_width as f64,
        origin: 0.0,
        counts,
        kind: HistogramKind::Decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clicks(times: Vec<i64>) -> ClickStream {
        ClickStream::new(
            0,
            times,
            ClickMeta {
                seed: 0,
                source: String::new(),
            },
        )
        .unwrap()
    }

    #[test]
    fn single_click_self_correlation() {
        let a = clicks(vec![0]);
        let h = correlate(&a, &a, 100, 1000).unwrap();
        assert_eq!(h.total(), 1);
        let zero = h.counts.len() / 2;
        assert_eq!(h.counts[zero], 1);
        assert_eq!(h.center(zero), 0.0);
    }

    #[test]
    fn unsorted_input_rejected() {
        let bad = ClickStream {
            channel: 0,
            times: vec![5, 1],
            meta: ClickMeta {
                seed: 0,
                source: String::new(),
            },
        };
        let ok = clicks(vec![0]);
        assert_eq!(correlate(&bad, &ok, 10, 100), Err(Error::Unsorted("stream a")));
        assert_eq!(correlate(&ok, &bad, 10, 100), Err(Error::Unsorted("stream b")));
    }

    #[test]
    fn window_must_be_multiple_of_bin() {
        let a = clicks(vec![0]);
        assert!(correlate(&a, &a, 30, 100).is_err());
    }

    #[test]
    fn exchange_mirrors_delay_axis() {
        let a = clicks(vec![0, 1000, 5000]);
        let b = clicks(vec![300, 1200, 9000]);
        let ab = correlate(&a, &b, 100, 10_000).unwrap();
        let ba = correlate(&b, &a, 100, 10_000).unwrap();
        let mut rev = ba.counts.clone();
        rev.reverse();
        assert_eq!(ab.counts, rev);
    }

    #[test]
    fn autocorrelation_counts_each_pair_once() {
        let a = clicks(vec![0, 10, 20]);
        let h = autocorrelate(&a, 10, 100).unwrap();
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn pulse_time_clicks_fill_first_bin() {
        let a = clicks(vec![0, 50_000, 100_000, 150_000]);
        let h = trpl_histogram(&a, 50_000, 16).unwrap();
        assert_eq!(h.counts[0], 4);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn dead_time_enforced() {
        let mut t = vec![0, 5, 9, 20, 24, 31];
        enforce_dead_time(&mut t, 10.0);
        assert_eq!(t, vec![0, 20, 31]);
    }

    #[test]
    fn csv_round_trip() {
        let h = Histogram {
            bin_width: 32.0,
            origin: -48.0,
            counts: vec![1, 2, 3],
            kind: HistogramKind::Coincidence,
        };
        let back = Histogram::from_csv(h.to_csv().as_bytes()).unwrap();
        assert_eq!(back, h);
        let a = clicks(vec![1, 7]);
        let mut b = clicks(vec![3]);
        b.channel = 1;
        let text = clicks_csv(&[&a, &b]);
        let (x, y) = read_clicks_csv(text.as_bytes(), a.meta.clone()).unwrap();
        assert_eq!(x.times, a.times);
        assert_eq!(y.times, b.times);
    }
}

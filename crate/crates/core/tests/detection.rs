mod common;

use common::synth;
use nanowire_sps::analysis::{fit_trpl, observed_period, TrplOptions};
use nanowire_sps::detection::{
    apply_bandpass, apply_loss, autocorrelate, correlate, hbt_detect, lorentzian_pass_fraction, trpl_histogram,
    Bandpass, ClickMeta, ClickStream, DetectorConfig, Histogram, HistogramKind,
};
use nanowire_sps::emitter::Line;
use nanowire_sps::units::uev_to_nm;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Exp};

fn clicks(channel: u8, times: Vec<i64>) -> ClickStream {
    ClickStream::new(
        channel,
        times,
        ClickMeta {
            seed: 0,
            source: "test".into(),
        },
    )
    .unwrap()
}

fn poisson_times(rate_per_ps: f64, span_ps: f64, seed: u64) -> Vec<i64> {
    let mut rng = synth::rng(seed);
    let n = synth::poisson(&mut rng, rate_per_ps * span_ps);
    let mut t: Vec<i64> = (0..n).map(|_| (rng.random::<f64>() * span_ps) as i64).collect();
    t.sort_unstable();
    t
}

const X_NM: f64 = 1301.28;

fn widths(x_fwhm_nm: f64) -> [f64; 3] {
    [x_fwhm_nm, x_fwhm_nm, x_fwhm_nm]
}

#[test]
fn infinite_passband_is_identity() {
    let s = synth::stream((0..1000).map(|i| i as f64 * 10.0).collect(), Line::Exciton, X_NM, synth::meta(1, 20.0));
    let out = apply_bandpass(&s, &Bandpass::open(), widths(0.06), 1).unwrap();
    assert_eq!(out, s);
}

#[test]
fn narrow_filter_passes_lorentzian_fraction() {
    let fwhm = uev_to_nm(45.0, X_NM);
    let filter = Bandpass {
        center_nm: X_NM,
        width_nm: 0.1,
    };
    let expected = (2.0 / std::f64::consts::PI) * (0.05 / (0.5 * fwhm)).atan();
    assert!((lorentzian_pass_fraction(X_NM, fwhm, &filter) - expected).abs() < 1e-12);
    let n = 200_000;
    let s = synth::stream((0..n).map(|i| i as f64).collect(), Line::Exciton, X_NM, synth::meta(1, 20.0));
    let out = apply_bandpass(&s, &filter, widths(fwhm), 2).unwrap();
    let frac = out.len() as f64 / n as f64;
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!((frac - expected).abs() < 3.0 * se, "{frac} vs {expected}");
    assert!(out.records.iter().all(|r| filter.passes(r.wavelength_nm)));
}

#[test]
fn detuned_filter_is_nearly_empty() {
    let fwhm = uev_to_nm(45.0, X_NM);
    let filter = Bandpass {
        center_nm: X_NM + 10.0 * fwhm,
        width_nm: 0.1,
    };
    assert!(lorentzian_pass_fraction(X_NM, fwhm, &filter) < 0.04);
    let n = 100_000;
    let s = synth::stream((0..n).map(|i| i as f64).collect(), Line::Exciton, X_NM, synth::meta(1, 20.0));
    let out = apply_bandpass(&s, &filter, widths(fwhm), 3).unwrap();
    assert!((out.len() as f64) < 0.04 * n as f64);
}

#[test]
fn zero_efficiency_leaves_only_dark_counts() {
    let s = synth::stream((0..50_000).map(|i| i as f64 * 1e4).collect(), Line::Exciton, X_NM, synth::meta(1, 20.0));
    let det = DetectorConfig {
        efficiency: 0.0,
        dark_rate: 1000.0,
        ..DetectorConfig::default()
    };
    let (a, b) = hbt_detect(&s, &det, 1.0, 4).unwrap();
    for ch in [&a, &b] {
        assert!((ch.len() as f64 - 1000.0).abs() < 5.0 * 1000f64.sqrt(), "{}", ch.len());
    }
    let (a, b) = hbt_detect(
        &s,
        &DetectorConfig {
            dark_rate: 0.0,
            ..det
        },
        1.0,
        4,
    )
    .unwrap();
    assert!(a.is_empty() && b.is_empty());
}

#[test]
fn ideal_detectors_split_binomially() {
    let n = 100_000usize;
    let s = synth::stream((0..n).map(|i| i as f64 * 1e3).collect(), Line::Exciton, X_NM, synth::meta(1, 20.0));
    let (a, b) = hbt_detect(&s, &DetectorConfig::ideal(), 1.0, 5).unwrap();
    assert_eq!(a.len() + b.len(), n);
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((a.len() as f64 - 0.5 * n as f64).abs() < 3.0 * sigma);
}

#[test]
fn dark_counts_are_poisson() {
    let s = synth::stream(Vec::new(), Line::Exciton, X_NM, synth::meta(1, 20.0));
    let det = DetectorConfig {
        dark_rate: 1000.0,
        ..DetectorConfig::ideal()
    };
    let (a, b) = hbt_detect(&s, &det, 10.0, 6).unwrap();
    for ch in [&a, &b] {
        assert!((ch.len() as f64 - 1e4).abs() < 3.0 * 100.0, "{}", ch.len());
        assert!(ch.times.iter().all(|&t| (0..10_000_000_000_000).contains(&t)));
    }
}

#[test]
fn losses_commute_statistically() {
    let trials = 400;
    let n = 2000;
    let s = synth::stream((0..n).map(|i| i as f64).collect(), Line::Exciton, X_NM, synth::meta(1, 20.0));
    let mut two = Vec::new();
    let mut one = Vec::new();
    for k in 0..trials {
        let staged = apply_loss(&apply_loss(&s, 0.9, 2 * k).unwrap(), 0.5, 2 * k + 1).unwrap();
        two.push(staged.len() as f64);
        one.push(apply_loss(&s, 0.45, 10_000 + k).unwrap().len() as f64);
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, var)
    };
    let (m2, v2) = stats(&two);
    let (m1, v1) = stats(&one);
    let binomial_var = n as f64 * 0.45 * 0.55;
    let se = ((v1 + v2) / trials as f64).sqrt();
    assert!((m1 - m2).abs() < 3.0 * se, "{m1} vs {m2}");
    // Sample variances of 400 draws scatter by about 7%.
    for v in [v1, v2] {
        assert!((v / binomial_var - 1.0).abs() < 0.25, "{v} vs {binomial_var}");
    }
}

#[test]
fn independent_streams_correlate_flat() {
    let span = 2e11;
    let a = clicks(0, poisson_times(1e-6, span, 7));
    let b = clicks(1, poisson_times(1e-6, span, 8));
    let h = correlate(&a, &b, 1000, 100_000).unwrap();
    let p = synth::flatness_p_value(&h.counts);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn pulsed_emitter_peaks_at_the_repetition_period() {
    let period = 50_000.0;
    let mut rng = synth::rng(9);
    let exp = Exp::new(1.0 / 2100.0).unwrap();
    let mut times = Vec::new();
    for k in 0..200_000u64 {
        if rng.random::<f64>() < 0.3 {
            times.push(k as f64 * period + exp.sample(&mut rng));
        }
    }
    let s = synth::stream(times, Line::Exciton, X_NM, synth::meta(200_000, 20.0));
    let (a, b) = hbt_detect(&s, &DetectorConfig::ideal(), 0.01, 10).unwrap();
    let h = correlate(&a, &b, 64, 6 * 64 * 782).unwrap();
    let observed = observed_period(&h, period).expect("periodic");
    assert!((observed - period).abs() < 0.01 * period, "{observed}");
}

#[test]
fn sync_aligned_clicks_fill_one_bin() {
    let c = clicks(0, (0..1000).map(|k| k * 50_000).collect());
    let h = trpl_histogram(&c, 50_000, 100).unwrap();
    assert_eq!(h.counts[0], 1000);
    assert_eq!(h.total(), 1000);
    assert_eq!(h.kind, HistogramKind::Decay);
}

#[test]
fn uniform_clicks_give_flat_decay_histogram() {
    let c = clicks(0, poisson_times(1e-5, 1e10, 11));
    let h = trpl_histogram(&c, 50_000, 500).unwrap();
    let p = synth::flatness_p_value(&h.counts);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn exponential_clicks_fit_to_their_lifetime() {
    let mut rng = synth::rng(12);
    let exp = Exp::new(1.0 / 2100.0).unwrap();
    let period = 50_000i64;
    let mut times: Vec<i64> = (0..1_000_000i64)
        .map(|k| k * period + Distribution::<f64>::sample(&exp, &mut rng).min(49_999.0) as i64)
        .collect();
    times.sort_unstable();
    let h = trpl_histogram(&clicks(0, times), period, 32).unwrap();
    let fit = fit_trpl(&h, &TrplOptions::default()).unwrap();
    assert!((fit.lifetime - 2.1).abs() < 0.02 * 2.1, "{fit:?}");
}

#[test]
fn jitter_broadens_without_shifting() {
    let n = 50_000;
    let s = synth::stream((0..n).map(|i| i as f64 * 1e6).collect(), Line::Exciton, X_NM, synth::meta(1, 1.0));
    let det = DetectorConfig {
        efficiency: 1.0,
        jitter_fwhm: 60.0,
        dark_rate: 0.0,
        dead_time: 0.0,
    };
    // Each photon lands on exactly one detector, so compare against the emission grid.
    let (a, b) = hbt_detect(&s, &det, 0.05, 13).unwrap();
    let offsets: Vec<f64> = a
        .times
        .iter()
        .chain(&b.times)
        .map(|&t| (t as f64 / 1e6).round() * 1e6 - t as f64)
        .collect();
    let m = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let sd = (offsets.iter().map(|x| (x - m).powi(2)).sum::<f64>() / offsets.len() as f64).sqrt();
    let sigma = 60.0 / 2.354_820_045;
    assert!(m.abs() < 3.0 * sigma / (offsets.len() as f64).sqrt() + 0.5, "mean {m}");
    assert!((sd - sigma).abs() < 0.05 * sigma, "sd {sd}");
}

#[test]
fn unsorted_clicks_are_rejected() {
    let meta = ClickMeta {
        seed: 0,
        source: String::new(),
    };
    assert!(ClickStream::new(0, vec![5, 3], meta).is_err());
}

#[test]
fn histogram_csv_round_trip() {
    let h = Histogram {
        bin_width: 64.0,
        origin: -96.0,
        counts: vec![1, 2, 3],
        kind: HistogramKind::Coincidence,
    };
    let text = format!("# a comment\n{}", h.to_csv());
    let back = Histogram::from_csv(text.as_bytes()).unwrap();
    assert_eq!(back, h);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rebinning_preserves_totals(counts in prop::collection::vec(0u64..1000, 1..300), k in 1usize..17) {
        let h = Histogram { bin_width: 10.0, origin: 0.0, counts, kind: HistogramKind::Decay };
        let r = h.rebin(k).unwrap();
        prop_assert_eq!(r.total(), h.total());
        prop_assert_eq!(r.bin_width, 10.0 * k as f64);
    }

    #[test]
    fn exchanging_streams_mirrors_the_delay_axis(
        a in prop::collection::vec(0i64..100_000, 0..60),
        b in prop::collection::vec(0i64..100_000, 0..60),
    ) {
        // Odd delays never sit on a bin edge, where the half-open bins break the symmetry.
        let mut a: Vec<i64> = a.iter().map(|t| 2 * t).collect(); a.sort_unstable();
        let mut b: Vec<i64> = b.iter().map(|t| 2 * t + 1).collect(); b.sort_unstable();
        let (ca, cb) = (clicks(0, a), clicks(1, b));
        let ab = correlate(&ca, &cb, 100, 5000).unwrap();
        let ba = correlate(&cb, &ca, 100, 5000).unwrap();
        let mut rev = ba.counts.clone();
        rev.reverse();
        prop_assert_eq!(ab.counts, rev);
    }

    #[test]
    fn correlation_counts_every_pair_in_window(
        a in prop::collection::vec(0i64..20_000, 0..40),
        b in prop::collection::vec(0i64..20_000, 0..40),
    ) {
        let mut a = a; a.sort_unstable();
        let mut b = b; b.sort_unstable();
        let window = 3000i64;
        let brute = a.iter().flat_map(|x| b.iter().map(move |y| y - x)).filter(|d| d.abs() <= window - 50).count() as u64;
        let edge = a.iter().flat_map(|x| b.iter().map(move |y| y - x)).filter(|d| d.abs() <= window + 50).count() as u64;
        let h = correlate(&clicks(0, a), &clicks(1, b), 100, window).unwrap();
        prop_assert!(h.total() >= brute && h.total() <= edge);
    }

    #[test]
    fn autocorrelation_counts_each_pair_once(t in prop::collection::vec(0i64..10_000, 0..50)) {
        let mut t = t; t.sort_unstable();
        let n = t.len() as u64;
        let h = autocorrelate(&clicks(0, t.clone()), 10, 20_000).unwrap();
        prop_assert_eq!(h.total(), n * n.saturating_sub(1) / 2);
    }

    #[test]
    fn dead_time_spacing_holds(seed in 0u64..500, dead in 0.0f64..5000.0) {
        let mut rng = synth::rng(seed);
        let times: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 1e6).collect();
        let s = synth::stream(times, Line::Exciton, X_NM, synth::meta(1, 1e6));
        let det = DetectorConfig { dead_time: dead, ..DetectorConfig::default() };
        let (a, b) = hbt_detect(&s, &det, 1e-6, seed).unwrap();
        for ch in [a, b] {
            prop_assert!(ch.is_sorted());
            prop_assert!(ch.times.windows(2).all(|w| (w[1] - w[0]) as f64 >= dead));
        }
    }
}

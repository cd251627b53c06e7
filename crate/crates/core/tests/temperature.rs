use nanowire_sps::emitter::{line_center_nm, EmitterConfig, Line};
use nanowire_sps::temperature::{
    bright_fraction, Level, LifetimeModel, LifetimeParams, Linewidth, LinewidthCalibration, TemperatureConfig,
    TemperatureModel, Varshni,
};
use nanowire_sps::units::energy_ev;
use proptest::prelude::*;

const HC: f64 = 1239.841_984;

fn model() -> TemperatureModel {
    TemperatureModel::calibrated_default().unwrap()
}

#[test]
fn varshni_matches_hand_solved_anchors() {
    let shape = |t: f64| t * t / (t + 600.0);
    let (ea, eb) = (HC / 1301.28, HC / 1397.8);
    let alpha = (ea - eb) / (shape(300.0) - shape(4.0));
    let e0 = ea + alpha * shape(4.0);
    let v = Varshni::default();
    for t in [4.0, 77.0, 150.0, 220.0, 300.0] {
        let expected = HC / (e0 - alpha * shape(t));
        assert!((v.wavelength_nm(t).unwrap() - expected).abs() < 1e-9, "{t} K");
    }
    // Locked reference at 150 K.
    assert!((v.wavelength_nm(150.0).unwrap() - 1328.789_398_47).abs() < 1e-6);
}

#[test]
fn emission_redshifts_with_temperature() {
    let v = Varshni::default();
    let mut prev = 0.0;
    for i in 1..=70 {
        let l = v.wavelength_nm(5.0 * i as f64).unwrap();
        assert!(l > prev);
        prev = l;
    }
}

#[test]
fn out_of_range_temperatures_are_rejected() {
    let v = Varshni::default();
    assert!(v.wavelength_nm(0.0).is_err());
    assert!(v.wavelength_nm(351.0).is_err());
    assert!(v.wavelength_nm(f64::NAN).is_err());
}

#[test]
fn linewidth_starts_at_the_floor_and_merges_on_time() {
    let m = model();
    assert!((m.line_fwhm_uev(Line::Exciton, 4.0).unwrap() - 45.0).abs() < 1e-9);
    let sep = EmitterConfig::default().xx_binding;
    let tm = m.linewidth.merge_temperature(sep).unwrap();
    assert!((tm - 150.0).abs() <= 25.0, "merge at {tm} K");
    // At the merge point the mean FWHM equals the X/XX separation.
    let mean = 0.5 * (m.line_fwhm_uev(Line::Exciton, tm).unwrap() + m.line_fwhm_uev(Line::Biexciton, tm).unwrap());
    assert!((mean - sep * 1e3).abs() < 1e-6);
}

#[test]
fn calibration_refuses_already_overlapping_lines() {
    assert!(Linewidth::calibrate(&LinewidthCalibration::default(), 0.02).is_err());
}

#[test]
fn zero_temperature_width_stays_near_the_floor() {
    let lw = model().linewidth;
    assert!(lw.gamma0_uev > 0.0 && lw.gamma0_uev <= 45.0);
    assert!(lw.at(1e-3).unwrap() > 0.8 * 45.0, "{lw:?}");
}

#[test]
fn steep_linear_share_is_rejected() {
    let cal = LinewidthCalibration {
        linear_fraction: 0.5,
        ..LinewidthCalibration::default()
    };
    assert!(Linewidth::calibrate(&cal, 6.0).is_err());
}

#[test]
fn calibrated_lifetime_hits_both_targets() {
    let m = model();
    assert!((m.lifetime.lifetime_ns(4.0).unwrap() - 2.1).abs() < 1e-6);
    assert!((m.lifetime.lifetime_ns(300.0).unwrap() - 10.8).abs() < 1e-6);
}

#[test]
fn lifetime_grows_monotonically() {
    let m = model();
    let mut prev = 0.0;
    for i in 0..=40 {
        let t = 4.0 + 296.0 * i as f64 / 40.0;
        let tau = m.lifetime.lifetime_ns(t).unwrap();
        assert!(tau >= prev, "{t} K: {tau} < {prev}");
        prev = tau;
    }
}

#[test]
fn uncalibrated_lifetime_ratio_is_moderate() {
    let raw = LifetimeModel::new(LifetimeParams::default(), Varshni::default()).unwrap();
    let ratio = raw.lifetime_ns(300.0).unwrap() / raw.lifetime_ns(4.0).unwrap();
    assert!((3.0..=8.0).contains(&ratio), "{ratio}");
}

#[test]
fn bright_only_manifold_keeps_the_waveguide_trend() {
    let params = LifetimeParams {
        manifold: vec![Level::new("bright", 0.0, 2.0, true)],
        ..LifetimeParams::default()
    };
    let m = LifetimeModel::new(params, Varshni::default()).unwrap();
    for t in [4.0, 150.0, 300.0] {
        assert_eq!(m.bright_fraction(t).unwrap(), 1.0);
        let expected = 1.0 / m.rate_factor(t).unwrap();
        assert!((m.lifetime_ns(t).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn two_level_fraction_matches_boltzmann() {
    let levels = vec![Level::new("bright", 0.0, 2.0, true), Level::new("dark", 0.3, 2.0, false)];
    for t in [4.0, 20.0, 77.0, 300.0] {
        let kt: f64 = 0.086_173_332_62 * t;
        let expected = 1.0 / (1.0 + (-0.3 / kt).exp());
        assert!((bright_fraction(&levels, t) - expected).abs() < 1e-12);
    }
}

#[test]
fn line_set_at_low_temperature_has_no_pshell() {
    let e = EmitterConfig::default();
    let lines = model().synth_line_set(&e, 4.0, 1.0).unwrap();
    let p = lines.iter().find(|l| l.label == Line::PShell).unwrap();
    let x = lines.iter().find(|l| l.label == Line::Exciton).unwrap();
    assert_eq!(p.relative_intensity, 0.0);
    let offset = (energy_ev(p.center_nm) - energy_ev(x.center_nm)) * 1e3;
    assert!((offset - 68.0).abs() < 1e-9);
    let hot = model().synth_line_set(&e, 300.0, 1.0).unwrap();
    assert!(hot.iter().find(|l| l.label == Line::PShell).unwrap().relative_intensity > 0.0);
}

#[test]
fn zero_binding_puts_xx_on_top_of_x() {
    let e = EmitterConfig {
        xx_binding: 0.0,
        ..EmitterConfig::default()
    };
    let cfg = TemperatureConfig {
        linewidth: Some(model().linewidth),
        ..TemperatureConfig::default()
    };
    let m = TemperatureModel::from_config(&cfg, &e).unwrap();
    let lines = m.synth_line_set(&e, 4.0, 1.0).unwrap();
    assert_eq!(lines[0].center_nm, lines[1].center_nm);
    assert_eq!(line_center_nm(1300.0, Line::Biexciton, &e), 1300.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linewidth_never_narrows(t1 in 1.0f64..349.0, dt in 0.0f64..100.0) {
        let m = model();
        let t2 = (t1 + dt).min(350.0);
        prop_assert!(m.linewidth.at(t2).unwrap() >= m.linewidth.at(t1).unwrap());
    }

    #[test]
    fn bright_fraction_is_a_probability(t in 0.5f64..350.0, gap in 0.0f64..100.0, g in 0.1f64..10.0) {
        let levels = vec![Level::new("b", 0.0, 2.0, true), Level::new("d", gap, g, false)];
        let f = bright_fraction(&levels, t);
        prop_assert!(f > 0.0 && f <= 1.0);
    }
}

//! Fundamental HE11 mode of a step-index cylindrical nanowire, and a
//! waveguide proxy for the relative spontaneous-emission rate of an on-axis
//! dipole.
//!
//! The exact hybrid-mode dispersion relation is solved in the variable
//! `y = ln w` (w the cladding decay parameter), so the exponentially weak
//! guidance of very thin wires is reachable without underflow in `n_eff`.

use puruspe::{Jn, Kn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::numeric::brent;

/// First zero of J0. Only the HE11 branch has roots with `u` below it.
const J01: f64 = 2.404_825_557_695_773;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Below this `w`, `K0/(w K1)` is evaluated from its small-argument series.
const SMALL_W: f64 = 1e-8;
/// Largest supported V-number; beyond it `K_n(w)` underflows.
const MAX_V: f64 = 500.0;

/// Diameter at which [`SeRateCurve`] is normalized.
pub const NORMALIZATION_DIAMETER_NM: f64 = 310.0;
/// Wavelength window over which the normalization maximum is taken.
pub const NORMALIZATION_WINDOW_NM: (f64, f64) = (1100.0, 1500.0);

/// Step-index cylinder. An optional `(wavelength_nm, n)` table overrides the
/// constant core index with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NanowireGeometry {
    pub diameter_nm: f64,
    pub n_core: f64,
    pub n_clad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub core_index_table: Option<Vec<[f64; 2]>>,
}

impl Default for NanowireGeometry {
    fn default() -> Self {
        Self {
            diameter_nm: 310.0,
            n_core: 3.2,
            n_clad: 1.0,
            core_index_table: None,
        }
    }
}

impl NanowireGeometry {
    pub fn new(diameter_nm: f64, n_core: f64, n_clad: f64) -> Self {
        Self {
            diameter_nm,
            n_core,
            n_clad,
            core_index_table: None,
        }
    }

    pub fn with_diameter(&self, diameter_nm: f64) -> Self {
        Self {
            diameter_nm,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("geometry.diameter_nm", self.diameter_nm)?;
        ensure_positive("geometry.n_core", self.n_core)?;
        if !(self.n_clad.is_finite() && self.n_clad >= 1.0) {
            return Err(Error::invalid("geometry.n_clad", "must be >= 1"));
        }
        if let Some(table) = &self.core_index_table {
            if table.len() < 2 {
                return Err(Error::invalid("geometry.core_index_table", "needs at least two rows"));
            }
            if !table.windows(2).all(|p| p[0][0] < p[1][0]) {
                return Err(Error::invalid(
                    "geometry.core_index_table",
                    "wavelengths must be strictly increasing",
                ));
            }
            if table.iter().any(|r| !(r[1].is_finite() && r[1] > self.n_clad)) {
                return Err(Error::invalid(
                    "geometry.core_index_table",
                    "every index must exceed n_clad",
                ));
            }
        } else if self.n_core <= self.n_clad {
            return Err(Error::invalid("geometry.n_core", "must exceed n_clad"));
        }
        Ok(())
    }

    /// Core index at `wavelength_nm` (clamped to the table ends).
    pub fn core_index(&self, wavelength_nm: f64) -> f64 {
        let Some(table) = &self.core_index_table else {
            return self.n_core;
        };
        let first = table[0];
        let last = table[table.len() - 1];
        if wavelength_nm <= first[0] {
            return first[1];
        }
        if wavelength_nm >= last[0] {
            return last[1];
        }
        let i = table.partition_point(|r| r[0] <= wavelength_nm);
        let (a, b) = (table[i - 1], table[i]);
        a[1] + (b[1] - a[1]) * (wavelength_nm - a[0]) / (b[0] - a[0])
    }

    pub fn v_number(&self, wavelength_nm: f64) -> f64 {
        let n1 = self.core_index(wavelength_nm);
        std::f64::consts::PI * self.diameter_nm * (n1 * n1 - self.n_clad * self.n_clad).sqrt()
            / wavelength_nm
    }
}

/// HE11 solution at one (geometry, wavelength) point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSolution {
    pub n_eff: f64,
    pub v_number: f64,
    /// Fraction of the guided power flowing inside the core.
    pub confinement: f64,
    /// Natural log of `confinement`; stays finite when `confinement` underflows.
    pub ln_confinement: f64,
    /// Normalized propagation constant `b = w²/V²`.
    pub b: f64,
    pub u: f64,
    pub ln_w: f64,
    /// Energy-weighted transverse mode area relative to the on-axis intensity.
    pub effective_area_nm2: f64,
    /// Dispersion residual at the root, in the rescaled form used for solving.
    pub residual: f64,
}

/// Dimensionless HE11 dispersion relation at fixed V and index ratio.
struct Dispersion {
    v: f64,
    /// `n_clad² / n_core²`
    delta: f64,
}

impl Dispersion {
    fn uw(&self, y: f64) -> (f64, f64) {
        let w = y.exp();
        let u = ((self.v - w) * (self.v + w)).max(0.0).sqrt();
        (u, w)
    }

    /// `K0(w) / (w K1(w))`.
    fn k_ratio(w: f64, y: f64) -> f64 {
        if w < SMALL_W {
            std::f64::consts::LN_2 - y - EULER_GAMMA
        } else {
            Kn(0, w) / (w * Kn(1, w))
        }
    }

    /// `u J1'(u) / J1(u)`.
    fn j_ratio(u: f64) -> f64 {
        u * Jn(0, u) / Jn(1, u) - 1.0
    }

    /// Exact characteristic function divided by `V² w²`.
    ///
    /// With `P = uJ1'/J1`, `Q = wK1'/K1`, the relation
    /// `(w²P + u²Q)(w²P + Δu²Q) = V²(w² + Δu²)` is rearranged so that the
    /// residual tends to `+∞` as `w → 0` and to `0⁻` as `u → 0`.
    fn residual(&self, y: f64) -> f64 {
        let (u, w) = self.uw(y);
        let p = Self::j_ratio(u);
        let q = Self::k_ratio(w, y);
        let d = self.delta;
        let alpha = 1.0 + p - u * u * q;
        let beta = p + d - d * u * u * q;
        let r = w / self.v;
        -beta - d * alpha + r * r * alpha * beta - (1.0 - d)
    }

    fn solve(&self) -> Option<f64> {
        let v = self.v;
        let u_max = v.min(J01);
        let y_of_u = |u: f64| (0.5 * ((v - u) * (v + u)).ln()).min(v.ln());
        // Start close to u = 0, where the residual approaches zero from below.
        let mut y_top = None;
        for frac in [1e-3, 1e-5, 1e-7] {
            let y = y_of_u(frac * u_max);
            if self.residual(y) < 0.0 {
                y_top = Some(y);
                break;
            }
        }
        let mut y_prev = y_top?;
        let n = 64;
        let mut bracket = None;
        for i in 1..=n {
            let u = u_max * (i as f64 / n as f64).min(1.0 - 1e-12);
            let y = y_of_u(u);
            let h = self.residual(y);
            if h.is_nan() {
                return None;
            }
            if h > 0.0 {
                bracket = Some((y, y_prev));
                break;
            }
            y_prev = y;
        }
        if bracket.is_none() {
            let mut step = 1.0;
            while y_prev > -1e7 {
                let y = y_prev - step;
                let h = self.residual(y);
                if h.is_nan() {
                    return None;
                }
                if h > 0.0 {
                    bracket = Some((y, y_prev));
                    break;
                }
                y_prev = y;
                step *= 2.0;
            }
        }
        let (lo, hi) = bracket?;
        brent(|y| self.residual(y), lo, hi, 1e-15 * hi.abs().max(1.0))
    }
}

/// Solve for the fundamental HE11 mode.
pub fn he11_neff(geom: &NanowireGeometry, wavelength_nm: f64) -> Result<ModeSolution> {
    geom.validate()?;
    ensure_positive("wavelength_nm", wavelength_nm)?;
    let n1 = geom.core_index(wavelength_nm);
    let n2 = geom.n_clad;
    let v = geom.v_number(wavelength_nm);
    let no_root = || Error::NoModeRoot {
        diameter_nm: geom.diameter_nm,
        wavelength_nm,
    };
    if !(v.is_finite() && v > 0.0 && v <= MAX_V) {
        return Err(no_root());
    }
    let disp = Dispersion {
        v,
        delta: (n2 * n2) / (n1 * n1),
    };
    let y = disp.solve().ok_or_else(no_root)?;
    let (u, w) = disp.uw(y);
    let b = (w / v) * (w / v);
    let n_eff = (n2 * n2 + b * (n1 * n1 - n2 * n2)).sqrt();
    let fields = ModeFields::new(u, w, y, v, n1, n2, n_eff);
    let a = 0.5 * geom.diameter_nm;
    Ok(ModeSolution {
        n_eff,
        v_number: v,
        confinement: fields.ln_confinement.exp(),
        ln_confinement: fields.ln_confinement,
        b,
        u,
        ln_w: y,
        effective_area_nm2: std::f64::consts::PI * a * a * fields.area_factor,
        residual: disp.residual(y),
    })
}

/// Closed-form radial integrals of the HE11 fields.
///
/// Core integrals use `∫₀ᵃ J_m(ur/a)² r dr`, cladding integrals
/// `∫ₐ^∞ K_m(wr/a)² r dr`, both scaled by `2/a²`. Cladding terms are divided
/// by `K1(w)²` and kept as Bessel ratios to survive small `w`.
struct ModeFields {
    ln_confinement: f64,
    /// Effective area in units of the core cross-section `πa²`.
    area_factor: f64,
}

impl ModeFields {
    fn new(u: f64, w: f64, y: f64, v: f64, n1: f64, n2: f64, n_eff: f64) -> Self {
        let (j0, j1, j2, j3) = (Jn(0, u), Jn(1, u), Jn(2, u), Jn(3, u));
        let ij0 = j0 * j0 + j1 * j1;
        let ij2 = j2 * j2 - j1 * j3;

        let q = Dispersion::k_ratio(w, y);
        let k01 = w * q;
        // K1K3 - K2² = K1²·(4/w² + 1 - (K0/K1)²) by the recurrence.
        let ik0 = 1.0 - k01 * k01;

        let p = Dispersion::j_ratio(u);
        let alpha = 1.0 + p - u * u * q;
        let r2 = (w / v) * (w / v);
        // 1 + s vanishes like w²; keep it in closed form.
        let one_p_s = -r2 * alpha / (1.0 - r2 * alpha);
        let s = one_p_s - 1.0;
        let one_p_s1 = 1.0 + s * (n_eff * n_eff) / (n1 * n1);
        let one_p_s2 = one_p_s + s * r2 * (n1 * n1 - n2 * n2) / (n2 * n2);
        let one_p_s_over_w2 = -alpha / (v * v * (1.0 - r2 * alpha));
        // (1+s)(1+s2)·ik2 and (1+s)²·ik2 without forming 1/w².
        let hybrid_s2 = one_p_s2 * (4.0 * one_p_s_over_w2 + one_p_s * ik0);
        let hybrid_ss = one_p_s * (4.0 * one_p_s_over_w2 + one_p_s * ik0);

        // Common factor (βa)² dropped; cladding terms carry an explicit 1/w².
        let core_power = n1 * n1 / (u * u)
            * ((1.0 - s) * (2.0 - one_p_s1) * ij0 + one_p_s * one_p_s1 * ij2);
        let clad_power_w2 = n2 * n2 * j1 * j1 * ((1.0 - s) * (2.0 - one_p_s2) * ik0 + hybrid_s2);
        // confinement = core / (core + clad_w2 / w²), evaluated in logs.
        let ln_confinement =
            core_power.ln() + 2.0 * y - (clad_power_w2 + core_power * (2.0 * y).exp()).ln();

        let core_energy = (1.0 - s).powi(2) * ij0 + one_p_s * one_p_s * ij2;
        let clad_energy = (n2 * n2) / (n1 * n1) * u * u * j1 * j1 / (w * w)
            * ((1.0 - s).powi(2) * ik0 + hybrid_ss);
        let area_factor = (core_energy + clad_energy) / (1.0 - s).powi(2);
        Self {
            ln_confinement: ln_confinement.min(0.0),
            area_factor,
        }
    }
}

/// Group index `n_eff − λ dn_eff/dλ` by central difference.
pub fn group_index(geom: &NanowireGeometry, wavelength_nm: f64) -> Result<f64> {
    let h = 1e-4 * wavelength_nm;
    let centre = he11_neff(geom, wavelength_nm)?.n_eff;
    let plus = he11_neff(geom, wavelength_nm + h)?.n_eff;
    let minus = he11_neff(geom, wavelength_nm - h)?.n_eff;
    Ok(centre - wavelength_nm * (plus - minus) / (2.0 * h))
}

/// Unnormalized emission-rate proxy for an on-axis dipole:
/// `confinement · (n_g / n_core) · (λ/n_core)² / A_eff`.
pub fn rate_proxy(geom: &NanowireGeometry, wavelength_nm: f64) -> Result<f64> {
    let mode = he11_neff(geom, wavelength_nm)?;
    let n1 = geom.core_index(wavelength_nm);
    let ng = group_index(geom, wavelength_nm)?;
    let lambda_medium = wavelength_nm / n1;
    Ok(mode.confinement * (ng / n1) * lambda_medium * lambda_medium / mode.effective_area_nm2)
}

/// Relative spontaneous-emission rate curve F_rel(λ, D) for fixed indices,
/// normalized to its maximum over [`NORMALIZATION_WINDOW_NM`] at
/// [`NORMALIZATION_DIAMETER_NM`].
#[derive(Debug, Clone)]
pub struct SeRateCurve {
    template: NanowireGeometry,
    norm: f64,
}

impl SeRateCurve {
    pub fn new(geom: &NanowireGeometry) -> Result<Self> {
        geom.validate()?;
        let reference = geom.with_diameter(NORMALIZATION_DIAMETER_NM);
        let (lo, hi) = NORMALIZATION_WINDOW_NM;
        let n = 80;
        let norm = (0..=n)
            .map(|i| rate_proxy(&reference, lo + (hi - lo) * i as f64 / n as f64))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if !(norm > 0.0) {
            return Err(Error::NonPositiveRate {
                value: norm,
                wavelength_nm: lo,
            });
        }
        Ok(Self {
            template: geom.clone(),
            norm,
        })
    }

    pub fn geometry(&self) -> &NanowireGeometry {
        &self.template
    }

    pub fn relative(&self, diameter_nm: f64, wavelength_nm: f64) -> Result<f64> {
        Ok(rate_proxy(&self.template.with_diameter(diameter_nm), wavelength_nm)? / self.norm)
    }
}

/// One-shot F_rel. Rebuilds the normalization; prefer [`SeRateCurve`] in loops.
pub fn se_rate_relative(geom: &NanowireGeometry, wavelength_nm: f64) -> Result<f64> {
    SeRateCurve::new(geom)?.relative(geom.diameter_nm, wavelength_nm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub diameter_nm: f64,
    pub wavelength_nm: f64,
    pub n_eff: f64,
    pub confinement: f64,
    pub f_rel: f64,
}

/// Evaluate a (diameter × wavelength) grid in parallel; rows come back in
/// diameter-major order.
pub fn sweep(
    geom: &NanowireGeometry,
    diameters_nm: &[f64],
    wavelengths_nm: &[f64],
) -> Result<Vec<SweepRow>> {
    let curve = SeRateCurve::new(geom)?;
    let points: Vec<(f64, f64)> = diameters_nm
        .iter()
        .flat_map(|&d| wavelengths_nm.iter().map(move |&l| (d, l)))
        .collect();
    points
        .par_iter()
        .map(|&(d, l)| {
            let mode = he11_neff(&geom.with_diameter(d), l)?;
            Ok(SweepRow {
                diameter_nm: d,
                wavelength_nm: l,
                n_eff: mode.n_eff,
                confinement: mode.confinement,
                f_rel: curve.relative(d, l)?,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "diameter_nm,wavelength_nm,n_eff,confinement,F_rel";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.10},{:.8e},{:.8e}",
            self.diameter_nm, self.wavelength_nm, self.n_eff, self.confinement, self.f_rel
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wire(d: f64) -> NanowireGeometry {
        NanowireGeometry::new(d, 3.2, 1.0)
    }

    #[test]
    fn thick_wire_approaches_core_index() {
        let m = he11_neff(&wire(2000.0), 1300.0).unwrap();
        assert!((3.2 - m.n_eff) / 3.2 < 0.02);
        assert!(m.confinement > 0.95);
    }

    #[test]
    fn residual_is_tiny() {
        for d in [50.0, 150.0, 310.0, 900.0] {
            let m = he11_neff(&wire(d), 1310.0).unwrap();
            assert!(m.residual.abs() < 1e-10, "{d}: {}", m.residual);
        }
    }

    #[test]
    fn thin_tip_is_reached_in_log_domain() {
        let m = he11_neff(&wire(20.0), 1300.0).unwrap();
        assert!(m.ln_w < -100.0);
        assert!(m.ln_confinement < -100.0);
        assert!(m.residual.abs() < 1e-10);
    }

    #[test]
    fn index_table_interpolates() {
        let g = NanowireGeometry {
            core_index_table: Some(vec![[1200.0, 3.3], [1400.0, 3.1]]),
            ..wire(310.0)
        };
        assert!((g.core_index(1300.0) - 3.2).abs() < 1e-12);
        assert_eq!(g.core_index(1000.0), 3.3);
        assert_eq!(g.core_index(1500.0), 3.1);
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(he11_neff(&NanowireGeometry::new(100.0, 1.0, 1.5), 1300.0).is_err());
        assert!(he11_neff(&wire(-1.0), 1300.0).is_err());
        assert!(he11_neff(&wire(100.0), 0.0).is_err());
    }
}

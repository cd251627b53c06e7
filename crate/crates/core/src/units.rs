//! Physical constants and unit conversions shared by the models.

/// hc in eV·nm.
pub const HC_EV_NM: f64 = 1239.841_984;

/// Boltzmann constant in meV/K.
pub const K_B_MEV_PER_K: f64 = 0.086_173_332_62;

pub const PS_PER_NS: f64 = 1000.0;

/// Photon energy (eV) at a vacuum wavelength (nm).
pub fn energy_ev(wavelength_nm: f64) -> f64 {
    HC_EV_NM / wavelength_nm
}

/// Vacuum wavelength (nm) of a photon with energy in eV.
pub fn wavelength_nm(energy_ev: f64) -> f64 {
    HC_EV_NM / energy_ev
}

/// Convert an energy width (μeV) into a wavelength width (nm) around `center_nm`.
pub fn uev_to_nm(width_uev: f64, center_nm: f64) -> f64 {
    center_nm * center_nm * width_uev * 1e-6 / HC_EV_NM
}

/// Thermal energy kT in meV.
pub fn kt_mev(temperature_k: f64) -> f64 {
    K_B_MEV_PER_K * temperature_k
}

/// Pulse period in ps for a repetition rate in MHz.
pub fn period_ps(rep_rate_mhz: f64) -> f64 {
    1.0e6 / rep_rate_mhz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_conversion_at_telecom() {
        // 45 μeV at 1301.28 nm is about 61 pm.
        let w = uev_to_nm(45.0, 1301.28);
        assert!((w - 0.061_46).abs() < 1e-4, "{w}");
    }

    #[test]
    fn periods() {
        assert_eq!(period_ps(80.0), 12_500.0);
        assert_eq!(period_ps(20.0), 50_000.0);
    }
}

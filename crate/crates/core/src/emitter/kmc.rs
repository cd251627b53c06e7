//! Exact next-event (Gillespie) simulation of the pulsed quantum-dot level
//! system.
//!
//! State: a carrier reservoir in the barrier, up to two relaxed pairs in the
//! dot (X or XX), at most one freshly captured pair still relaxing, and an
//! optional bright/dark flag on the single exciton. Each laser pulse adds
//! pairs to the reservoir. Reservoir pairs are either captured into the dot
//! (only when it has room and nothing is relaxing) or lost. Relaxed pairs
//! decay radiatively XX -> X -> 0. A relaxing pair blocks emission, so a
//! pair captured after the dot has emptied produces a second X photon only
//! after capture + relaxation + decay: the re-excitation dip at zero delay.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use super::config::{saturation_map, DriveConfig, EmitterConfig, PairStatistics};
use super::stream::{Line, PhotonRecord, PhotonStream, StreamMeta};
use crate::digest::config_digest;
use crate::error::{Error, Result};
use crate::seeds::{rng_from_seed, SimRng};
use crate::units::{energy_ev, kt_mev, wavelength_nm, PS_PER_NS};

/// Temperature at which `EmitterConfig::tau_x0` is specified.
pub const REFERENCE_TEMPERATURE_K: f64 = 4.0;

/// Supplies the temperature-dependent exciton lifetime and line position.
///
/// The simulator only uses the lifetime *ratio* τ(T)/τ(4 K); the absolute
/// scale comes from `EmitterConfig::tau_x0`.
pub trait EmissionModel: Sync {
    fn exciton_lifetime_ns(&self, temperature_k: f64) -> Result<f64>;
    fn exciton_wavelength_nm(&self, temperature_k: f64) -> Result<f64>;
}

/// Temperature-independent model, mostly for tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel {
    pub lifetime_ns: f64,
    pub wavelength_nm: f64,
}

impl EmissionModel for ConstantModel {
    fn exciton_lifetime_ns(&self, _: f64) -> Result<f64> {
        Ok(self.lifetime_ns)
    }

    fn exciton_wavelength_nm(&self, _: f64) -> Result<f64> {
        Ok(self.wavelength_nm)
    }
}

/// Line center for `line`, given the exciton center.
pub fn line_center_nm(exciton_nm: f64, line: Line, emitter: &EmitterConfig) -> f64 {
    let shift_mev = match line {
        Line::Exciton => 0.0,
        Line::Biexciton => emitter.xx_binding,
        Line::PShell => emitter.sp_splitting,
    };
    wavelength_nm(energy_ev(exciton_nm) + shift_mev * 1e-3)
}

/// Exciton lifetime the simulator uses at `temperature_k`.
pub fn exciton_lifetime_at(
    emitter: &EmitterConfig,
    model: &dyn EmissionModel,
    temperature_k: f64,
) -> Result<f64> {
    let reference = model.exciton_lifetime_ns(REFERENCE_TEMPERATURE_K)?;
    let at_t = model.exciton_lifetime_ns(temperature_k)?;
    let tau = emitter.tau_x0 * at_t / reference;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("lifetime_model", format!("non-physical lifetime {tau} ns")));
    }
    Ok(tau)
}

/// Rates (1/ns) resolved at one temperature.
#[derive(Debug, Clone, Copy)]
struct Kinetics {
    capture: f64,
    relax: f64,
    escape: f64,
    x_rad: f64,
    xx_rad: f64,
    pshell: f64,
    /// bright -> dark (uphill by `dark_splitting`)
    flip_up: f64,
    /// dark -> bright
    flip_down: f64,
    dark_states: bool,
    p_dark_on_relax: f64,
    centers: [f64; 3],
}

impl Kinetics {
    fn resolve(
        emitter: &EmitterConfig,
        temperature_k: f64,
        model: &dyn EmissionModel,
    ) -> Result<Self> {
        let tau_x = exciton_lifetime_at(emitter, model, temperature_k)?;
        let kt = kt_mev(temperature_k);
        let g = emitter.degeneracies;
        let pshell = if emitter.pshell_emission {
            (g.pshell / g.bright) * (-emitter.sp_splitting / kt).exp() / tau_x
        } else {
            0.0
        };
        let x_nm = model.exciton_wavelength_nm(temperature_k)?;
        let centers = Line::ALL.map(|l| line_center_nm(x_nm, l, emitter));
        Ok(Self {
            capture: emitter.capture_rate,
            relax: emitter.relax_rate,
            escape: emitter.escape_rate,
            x_rad: 1.0 / tau_x,
            xx_rad: 1.0 / (tau_x * emitter.tau_xx_ratio),
            pshell,
            flip_up: emitter.spin_flip_rate * (g.dark / g.bright)
                * (-emitter.dark_splitting / kt).exp(),
            flip_down: emitter.spin_flip_rate,
            dark_states: emitter.dark_states,
            p_dark_on_relax: g.dark / (g.bright + g.dark),
            centers,
        })
    }

    fn center(&self, line: Line) -> f64 {
        self.centers[line as usize]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct DotState {
    reservoir: u64,
    relaxed: u8,
    hot: bool,
    dark: bool,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Capture,
    Escape,
    Relax,
    PShellEmission,
    BiexcitonEmission,
    ExcitonEmission,
    FlipToDark,
    FlipToBright,
}

/// Incremental pulse-train simulator. State carries across calls to
/// [`PulseTrain::run`], so a long experiment can be generated block by block
/// with output identical to a single call.
pub struct PulseTrain {
    kin: Kinetics,
    rng: SimRng,
    state: DotState,
    t_ns: f64,
    period_ns: f64,
    next_pulse: u64,
    total_pulses: u64,
    injector: Injector,
}

enum Injector {
    None,
    Fixed(u64),
    Poisson(Poisson<f64>),
}

impl PulseTrain {
    pub fn new(
        emitter: &EmitterConfig,
        drive: &DriveConfig,
        temperature_k: f64,
        model: &dyn EmissionModel,
        seed: u64,
    ) -> Result<Self> {
        emitter.validate()?;
        drive.validate()?;
        if !(temperature_k > 0.0 && temperature_k <= 350.0) {
            return Err(Error::invalid(
                "temperature",
                format!("must lie in (0, 350] K, got {temperature_k}"),
            ));
        }
        let kin = Kinetics::resolve(emitter, temperature_k, model)?;
        let mu = saturation_map(emitter.mu_sat, drive.power_ratio)?;
        let injector = if drive.power_ratio == 0.0 {
            Injector::None
        } else {
            match drive.pairs {
                PairStatistics::Fixed(n) => Injector::Fixed(u64::from(n)),
                PairStatistics::Poisson => Injector::Poisson(
                    Poisson::new(mu).map_err(|e| Error::invalid("drive.power_ratio", e.to_string()))?,
                ),
            }
        };
        Ok(Self {
            kin,
            rng: rng_from_seed(seed),
            state: DotState::default(),
            t_ns: 0.0,
            period_ns: drive.period_ns(),
            next_pulse: 0,
            total_pulses: drive.n_pulses,
            injector,
        })
    }

    pub fn pulses_remaining(&self) -> u64 {
        self.total_pulses - self.next_pulse
    }

    pub fn total_pulses(&self) -> u64 {
        self.total_pulses
    }

    /// Change the number of pulses in the train. Only possible while the
    /// final block has not been run and `total` covers the pulses already fired.
    pub fn set_total_pulses(&mut self, total: u64) -> Result<()> {
        if self.next_pulse >= self.total_pulses || total <= self.next_pulse {
            return Err(Error::invalid(
                "n_pulses",
                format!("cannot resize a train after pulse {} to {total}", self.next_pulse),
            ));
        }
        self.total_pulses = total;
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.pulses_remaining() == 0 && self.total_rate() == 0.0 && !self.instant_pending()
    }

    /// Fire the next `n` pulses and evolve until the pulse after them (or,
    /// for the final block, until the dot and reservoir are empty).
    pub fn run(&mut self, n: u64, out: &mut Vec<PhotonRecord>) {
        let end_pulse = (self.next_pulse + n).min(self.total_pulses);
        let horizon = if end_pulse < self.total_pulses {
            end_pulse as f64 * self.period_ns
        } else {
            f64::INFINITY
        };
        loop {
            let next_pulse_time = if self.next_pulse < end_pulse {
                self.next_pulse as f64 * self.period_ns
            } else {
                horizon
            };
            let a0 = self.total_rate();
            let dt = if a0 > 0.0 {
                let e: f64 = Exp1.sample(&mut self.rng);
                e / a0
            } else {
                f64::INFINITY
            };
            if self.t_ns + dt >= next_pulse_time {
                if !next_pulse_time.is_finite() {
                    break;
                }
                self.t_ns = next_pulse_time;
                if self.next_pulse < end_pulse {
                    self.inject();
                    self.next_pulse += 1;
                    self.settle(out);
                    continue;
                }
                break;
            }
            self.t_ns += dt;
            let event = self.pick_event(a0);
            self.fire(event, out);
            self.settle(out);
        }
    }

    fn inject(&mut self) {
        let n = match &self.injector {
            Injector::None => 0,
            Injector::Fixed(n) => *n,
            Injector::Poisson(p) => p.sample(&mut self.rng) as u64,
        };
        self.state.reservoir += n;
    }

    fn instant_pending(&self) -> bool {
        let s = &self.state;
        (s.hot && self.kin.relax.is_infinite())
            || (!s.hot && s.relaxed < 2 && s.reservoir > 0 && self.kin.capture.is_infinite())
    }

    /// Apply instantaneous capture/relaxation until none is possible.
    fn settle(&mut self, out: &mut Vec<PhotonRecord>) {
        while self.instant_pending() {
            if self.state.hot {
                self.fire(Event::Relax, out);
            } else {
                self.fire(Event::Capture, out);
            }
        }
    }

    fn rates(&self) -> [(Event, f64); 8] {
        let s = &self.state;
        let k = &self.kin;
        let res = s.reservoir as f64;
        let idle = !s.hot;
        let finite = |r: f64| if r.is_finite() { r } else { 0.0 };
        [
            (
                Event::Capture,
                if idle && s.relaxed < 2 { res * finite(k.capture) } else { 0.0 },
            ),
            (Event::Escape, res * k.escape),
            (Event::Relax, if s.hot { finite(k.relax) } else { 0.0 }),
            (Event::PShellEmission, if s.hot { k.pshell } else { 0.0 }),
            (
                Event::BiexcitonEmission,
                if idle && s.relaxed == 2 { k.xx_rad } else { 0.0 },
            ),
            (
                Event::ExcitonEmission,
                if idle && s.relaxed == 1 && !s.dark { k.x_rad } else { 0.0 },
            ),
            (
                Event::FlipToDark,
                if idle && s.relaxed == 1 && !s.dark && k.dark_states { k.flip_up } else { 0.0 },
            ),
            (
                Event::FlipToBright,
                if idle && s.relaxed == 1 && s.dark { k.flip_down } else { 0.0 },
            ),
        ]
    }

    fn total_rate(&self) -> f64 {
        self.rates().iter().map(|(_, r)| r).sum()
    }

    fn pick_event(&mut self, a0: f64) -> Event {
        let rates = self.rates();
        let mut target = self.rng.random::<f64>() * a0;
        let mut last = rates[0].0;
        for (event, rate) in rates {
            if rate > 0.0 {
                last = event;
                if target < rate {
                    return event;
                }
                target -= rate;
            }
        }
        last
    }

    fn emit(&self, line: Line, out: &mut Vec<PhotonRecord>) {
        out.push(PhotonRecord {
            time_ps: self.t_ns * PS_PER_NS,
            line,
            wavelength_nm: self.kin.center(line),
        });
    }

    fn fire(&mut self, event: Event, out: &mut Vec<PhotonRecord>) {
        match event {
            Event::Capture => {
                self.state.reservoir -= 1;
                self.state.hot = true;
            }
            Event::Escape => self.state.reservoir -= 1,
            Event::Relax => {
                self.state.hot = false;
                self.state.relaxed += 1;
                self.state.dark = self.state.relaxed == 1
                    && self.kin.dark_states
                    && self.rng.random::<f64>() < self.kin.p_dark_on_relax;
            }
            Event::PShellEmission => {
                self.state.hot = false;
                self.emit(Line::PShell, out);
            }
            Event::BiexcitonEmission => {
                self.state.relaxed = 1;
                self.state.dark = false;
                self.emit(Line::Biexciton, out);
            }
            Event::ExcitonEmission => {
                self.state.relaxed = 0;
                self.emit(Line::Exciton, out);
            }
            Event::FlipToDark => self.state.dark = true,
            Event::FlipToBright => self.state.dark = false,
        }
    }
}

/// Simulate a complete pulse train and return the time-ordered photon stream.
pub fn simulate_pulse_train(
    emitter: &EmitterConfig,
    drive: &DriveConfig,
    temperature_k: f64,
    model: &dyn EmissionModel,
    seed: u64,
) -> Result<PhotonStream> {
    let mut train = PulseTrain::new(emitter, drive, temperature_k, model, seed)?;
    let mut records = Vec::new();
    train.run(drive.n_pulses, &mut records);
    Ok(PhotonStream {
        records,
        meta: stream_meta(emitter, drive, temperature_k, seed),
    })
}

pub fn stream_meta(
    emitter: &EmitterConfig,
    drive: &DriveConfig,
    temperature_k: f64,
    seed: u64,
) -> StreamMeta {
    StreamMeta {
        seed,
        emitter_digest: config_digest(emitter),
        drive_digest: config_digest(drive),
        temperature_k,
        rep_rate_mhz: drive.rep_rate,
        n_pulses: drive.n_pulses,
    }
}

/// Time spent bright and dark by an exciton that cannot decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinOccupancy {
    pub bright_ns: f64,
    pub dark_ns: f64,
    pub flips: u64,
}

impl SpinOccupancy {
    pub fn dark_to_bright_ratio(&self) -> f64 {
        self.dark_ns / self.bright_ns
    }
}

/// Expected dark:bright occupation ratio in thermal equilibrium.
pub fn boltzmann_dark_ratio(emitter: &EmitterConfig, temperature_k: f64) -> f64 {
    let g = emitter.degeneracies;
    (g.dark / g.bright) * (-emitter.dark_splitting / kt_mev(temperature_k)).exp()
}

/// Run the bright/dark spin-flip kinetics alone (no radiative decay) for
/// `duration_ns` and record the occupation time of each state.
pub fn spin_flip_occupancy(
    emitter: &EmitterConfig,
    temperature_k: f64,
    duration_ns: f64,
    seed: u64,
) -> Result<SpinOccupancy> {
    emitter.validate()?;
    let model = ConstantModel {
        lifetime_ns: 1.0,
        wavelength_nm: 1300.0,
    };
    let kin = Kinetics::resolve(emitter, temperature_k, &model)?;
    let mut rng = rng_from_seed(seed);
    let mut dark = rng.random::<f64>() < kin.p_dark_on_relax;
    let mut occ = SpinOccupancy {
        bright_ns: 0.0,
        dark_ns: 0.0,
        flips: 0,
    };
    let mut t = 0.0;
    while t < duration_ns {
        let rate = if dark { kin.flip_down } else { kin.flip_up };
        let e: f64 = Exp1.sample(&mut rng);
        let dwell = (e / rate).min(duration_ns - t);
        if dark {
            occ.dark_ns += dwell;
        } else {
            occ.bright_ns += dwell;
        }
        t += dwell;
        if t < duration_ns {
            dark = !dark;
            occ.flips += 1;
        }
    }
    Ok(occ)
}

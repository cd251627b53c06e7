//! Photon generation from a pulsed quantum-dot emitter.

mod config;
mod kmc;
mod stream;

pub use config::{saturation_map, Degeneracies, DriveConfig, EmitterConfig, PairStatistics};
pub use kmc::{
    boltzmann_dark_ratio, exciton_lifetime_at, line_center_nm, simulate_pulse_train,
    spin_flip_occupancy, stream_meta, ConstantModel, EmissionModel, PulseTrain, SpinOccupancy,
    REFERENCE_TEMPERATURE_K,
};
pub use stream::{Line, PhotonRecord, PhotonStream, StreamMeta};

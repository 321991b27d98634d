//! Shared fixtures for the criterion benchmarks.

use decoherence_core::wavepacket::{Envelope, WavePacketSpec};
use decoherence_core::DispersionModel;

pub fn default_model() -> DispersionModel {
    DispersionModel::quadratic_einstein()
}

/// P = 2e_z, Q = e_z, Gaussian envelope.
pub fn default_packet(epsilon: f64) -> WavePacketSpec {
    WavePacketSpec::new(Envelope::default(), vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 1.0], epsilon)
        .expect("default packet is valid")
}

//! Pumping demonstration scenarios on the reference cell.

use std::f64::consts::PI;

use crate::homogenization::{homogenize, HomogenizationError};
use crate::macro_model::{ControlWave, Expanded, InitialState, MacroCoefficients, MacroConfig, MacroError, Nonlinearity};
use crate::materials::MaterialSet;
use crate::mesh::{generate_canonical_cell, CanonicalGeometry, MeshError};
use crate::sensitivity::{state_gradients, SensitivityError};

/// Cell size of the demo. Small enough for a strong permeability modulation at 100 kV.
pub const EPS0: f64 = 7e-6;
/// Actuated electrode; electrode 1 is grounded.
pub const ELECTRODE: usize = 2;
pub const RESOLUTION: usize = 32;
/// Wave speed `omega / k`, m/s.
pub const WAVE_SPEED: f64 = 0.8;
/// `k = 10 pi`: four periods of the carrier sine per second at the wave speed above.
pub const WAVENUMBER: f64 = 10.0 * PI;
/// Amplitude of the travelling potential, V.
pub const PHI0: f64 = -1e5;
/// Pressure at `x = L` against the pumping direction, Pa.
pub const ADVERSE_PRESSURE: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Homogenization(#[from] HomogenizationError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error(transparent)]
    Macro(#[from] MacroError),
}

/// 1D coefficients with their state gradients from the reference cell at `EPS0`.
pub fn coefficients() -> Result<MacroCoefficients<f64>, DemoError> {
    let mesh = generate_canonical_cell(&CanonicalGeometry::<f64>::reference(), RESOLUTION)?;
    let mat = MaterialSet::reference(EPS0);
    let hom = homogenize(&mesh, &mat)?;
    let grads = state_gradients(&mesh, &mat, &hom)?;
    Ok(MacroCoefficients::from_cell(&hom.coeffs, &grads, ELECTRODE)?)
}

/// Travelling `|sin|` wave over one spatial period of the domain, 50 steps over 1 s.
pub fn pumping_config(mode: Nonlinearity) -> MacroConfig {
    MacroConfig {
        length: PI / WAVENUMBER,
        nodes: 201,
        dt: 0.02,
        steps: 50,
        p_left: 0.0,
        p_right: ADVERSE_PRESSURE,
        wave: ControlWave::TravellingSine { phi0: PHI0, omega: WAVE_SPEED * WAVENUMBER, k: WAVENUMBER },
        mode,
        expanded: Expanded::Permeability,
        tolerance: 1e-8,
        max_iterations: 20,
        h_sign: 1.0,
        initial: InitialState::Zero,
        output_stride: 10,
        body_force: 0.0,
        fluid_force: 0.0,
    }
}

/// Pulse train entering at `x = 0`, wavelength 6 cm, speed 0.3 m/s.
pub fn reverse_pumping_config(phi_star: f64) -> MacroConfig {
    MacroConfig {
        wave: ControlWave::CaseTable { phi_star, b1: PI / 0.03, b2: 0.0, c: 10.0 * PI, d: 0.0 },
        ..pumping_config(Nonlinearity::Semilinear)
    }
}

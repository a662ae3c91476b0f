//! Typical Rb parameter sets used as defaults by the CLI, tests and
//! benchmarks. Literature values, not fitted to any measurement.

use crate::atomic::{DecayRates, LaserParams, VaporParams};
use crate::eit::CascadeSystem;
use crate::units::{mhz_to_angular, RB87_MASS};

pub const PROBE_WAVELENGTH_NM: f64 = 780.24;
pub const COUPLING_WAVELENGTH_NM: f64 = 480.0;
/// D2 natural linewidth Γe/2π, MHz.
pub const GAMMA_E_MHZ: f64 = 6.07;

/// Room-temperature vapor cell, counter-propagating 780/480 nm beams.
pub fn hot_cell() -> CascadeSystem {
    CascadeSystem {
        probe: LaserParams::new(PROBE_WAVELENGTH_NM, 4e-6, 100e-6),
        coupling: LaserParams::new(COUPLING_WAVELENGTH_NM, 1e-3, 100e-6),
        rates: DecayRates {
            gamma_e: mhz_to_angular(GAMMA_E_MHZ),
            gamma_r: mhz_to_angular(0.01),
            gamma_transit: mhz_to_angular(0.1),
            gamma_rel_laser: 0.0,
        },
        vapor: VaporParams {
            temperature_k: 293.0,
            atomic_mass_kg: RB87_MASS,
            cell_length_m: 0.075,
            peak_optical_depth: 1.0,
        },
        omega_c: mhz_to_angular(2.0),
        counter_propagating: true,
    }
}

/// Laser-cooled cloud probed on the D2 line with a 26D-like coupling.
pub fn cold_cloud() -> CascadeSystem {
    let mut sys = hot_cell();
    sys.probe.power_w = 200e-9;
    sys.coupling.power_w = 84e-3;
    sys.vapor.temperature_k = 1e-4;
    sys.vapor.peak_optical_depth = 2.0;
    sys.rates.gamma_transit = 0.0;
    sys.rates.gamma_rel_laser = mhz_to_angular(0.28);
    sys.omega_c = mhz_to_angular(2.0);
    sys
}

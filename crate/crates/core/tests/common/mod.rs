//! Reference computations that share no code path with the library's
//! closed-form results.

#![allow(dead_code)]

use std::f64::consts::PI;

use eitlock::eit::susceptibility_single_velocity;
use eitlock::CascadeSystem;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const G: usize = 0;
const E: usize = 1;
const R: usize = 2;

fn idx(a: usize, b: usize) -> usize {
    3 * a + b
}

fn projector(a: usize, b: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(3, 3);
    m[(a, b)] = Complex64::new(1.0, 0.0);
    m
}

/// Adds `-i[H, ρ]` to the Liouvillian acting on row-major `vec(ρ)`.
fn add_hamiltonian(l: &mut DMatrix<Complex64>, h: &DMatrix<Complex64>) {
    let i = Complex64::i();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                l[(idx(a, b), idx(c, b))] -= i * h[(a, c)];
                l[(idx(a, b), idx(a, c))] += i * h[(c, b)];
            }
        }
    }
}

/// Adds the dissipator `LρL† − ½{L†L, ρ}`.
fn add_dissipator(l: &mut DMatrix<Complex64>, op: &DMatrix<Complex64>) {
    let ldl = op.adjoint() * op;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    l[(idx(a, b), idx(c, d))] += op[(a, c)] * op[(b, d)].conj();
                }
                l[(idx(a, b), idx(c, b))] -= 0.5 * ldl[(a, c)];
                l[(idx(a, b), idx(a, c))] -= 0.5 * ldl[(c, b)];
            }
        }
    }
}

/// Steady-state `ρ_eg` of the three-level ladder from the full Lindblad
/// master equation at probe Rabi frequency `omega_p`.
pub fn ladder_steady_state_coherence(
    delta_p: f64,
    delta_c: f64,
    omega_p: f64,
    omega_c: f64,
    sys: &CascadeSystem,
) -> Complex64 {
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut h = DMatrix::<Complex64>::zeros(3, 3);
    h[(E, E)] = c(-delta_p);
    h[(R, R)] = c(-(delta_p + delta_c));
    h[(G, E)] = c(omega_p / 2.0);
    h[(E, G)] = c(omega_p / 2.0);
    h[(E, R)] = c(omega_c / 2.0);
    h[(R, E)] = c(omega_c / 2.0);

    let rates = &sys.rates;
    let probe_dephasing = PI * sys.probe.residual_linewidth_hz;
    let two_photon_dephasing = rates.gamma_transit + rates.gamma_rel_laser;
    let mut l = DMatrix::<Complex64>::zeros(9, 9);
    add_hamiltonian(&mut l, &h);
    add_dissipator(&mut l, &(projector(G, E) * c(rates.gamma_e.sqrt())));
    add_dissipator(&mut l, &(projector(E, R) * c(rates.gamma_r.sqrt())));
    add_dissipator(&mut l, &(projector(E, E) * c((2.0 * probe_dephasing).sqrt())));
    add_dissipator(&mut l, &(projector(R, R) * c((2.0 * two_photon_dephasing).sqrt())));

    let mut rhs = DVector::<Complex64>::zeros(9);
    for k in 0..9 {
        l[(0, k)] = c(0.0);
    }
    for a in 0..3 {
        l[(0, idx(a, a))] = c(1.0);
    }
    rhs[0] = c(1.0);
    let rho = l.lu().solve(&rhs).expect("Liouvillian with trace row is invertible");
    rho[idx(E, G)]
}

/// Susceptibility at rest from the density matrix, normalized so the bare
/// two-level resonance gives `i`.
pub fn density_matrix_susceptibility(delta_p: f64, delta_c: f64, sys: &CascadeSystem) -> Complex64 {
    let omega_p = 1e-4 * sys.gamma_ge();
    let rho = ladder_steady_state_coherence(delta_p, delta_c, omega_p, sys.omega_c, sys);
    let reference = ladder_steady_state_coherence(0.0, 0.0, omega_p, 0.0, sys);
    Complex64::i() * rho / reference
}

/// Photocurrent Fourier coefficient at `e^{iω_m t}` for a carrier and two
/// first-order sidebands, from `n` samples of `|E(t)|²` over one period.
pub fn photocurrent_harmonic(
    t_minus: Complex64,
    t0: Complex64,
    t_plus: Complex64,
    j0: f64,
    j1: f64,
    n: usize,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        let phase = 2.0 * PI * k as f64 / n as f64;
        let rot = Complex64::from_polar(1.0, phase);
        let field = j0 * t0 + j1 * t_plus * rot - j1 * t_minus * rot.conj();
        acc += field.norm_sqr() * rot.conj();
    }
    acc / n as f64
}

/// Mixer output `gain · ⟨I(t) cos(ω_m t + θ)⟩` over one period.
#[allow(clippy::too_many_arguments)]
pub fn photocurrent_mixer(
    t_minus: Complex64,
    t0: Complex64,
    t_plus: Complex64,
    j0: f64,
    j1: f64,
    gain: f64,
    theta: f64,
    n: usize,
) -> f64 {
    let mut acc = 0.0;
    for k in 0..n {
        let phase = 2.0 * PI * k as f64 / n as f64;
        let rot = Complex64::from_polar(1.0, phase);
        let field = j0 * t0 + j1 * t_plus * rot - j1 * t_minus * rot.conj();
        acc += field.norm_sqr() * (phase + theta).cos();
    }
    gain * acc / n as f64
}

/// Maxwell-Boltzmann average of the single-velocity susceptibility by the
/// composite trapezoid rule on `[-cutoff σ, cutoff σ]`.
pub fn trapezoid_doppler(delta_p: f64, delta_c: f64, sys: &CascadeSystem, nodes: usize, cutoff: f64) -> Complex64 {
    let sigma = sys.vapor.rms_velocity();
    let h = 2.0 * cutoff / (nodes - 1) as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..nodes {
        let u = -cutoff + h * k as f64;
        let w = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
        let chi = susceptibility_single_velocity(delta_p, delta_c, u * sigma, sys).0;
        acc += chi * (w * (-0.5 * u * u).exp());
    }
    acc * (h / (2.0 * PI).sqrt())
}

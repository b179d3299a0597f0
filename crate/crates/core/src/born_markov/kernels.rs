//! Reservoir correlation functions entering the memory kernel.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::Result;
use crate::model::ReservoirSpec;
use crate::quad::integrate;
use crate::special::bessel_j0;

/// Continuum occupation `1 / (exp(beta (E(k) + mu)) - 1)` with
/// `E(k) = -J_r cos k`, evaluated without cancellation near the band bottom.
pub fn continuum_occupation(r: &ReservoirSpec, mu: f64, kappa: f64) -> f64 {
    let j = r.hopping.abs();
    let excitation = if r.hopping >= 0.0 {
        2.0 * j * (0.5 * kappa).sin().powi(2)
    } else {
        2.0 * j * (0.5 * kappa).cos().powi(2)
    };
    1.0 / libm::expm1(r.beta * (excitation + (mu - j)))
}

/// Reservoir correlation
/// `J_F(t) = (1/2pi) int dk n(k) exp(-i J_r cos(k) t)` over `k in [-pi, pi]`,
/// with `n(k)` the Bose-Einstein occupation of the ring band. `J_F(0)` is the
/// continuum density and `|J_F(t)| <= J_F(0)`.
pub fn reservoir_correlation(r: &ReservoirSpec, mu: f64, t: f64) -> Result<Complex64> {
    let pieces = 8 + (r.hopping.abs() * t.abs()).ceil() as usize;
    let density = integrate(
        |k| Complex64::new(0.0, -r.hopping * k.cos() * t).exp() * continuum_occupation(r, mu, k),
        0.0,
        PI,
        pieces,
        1e-13,
        1e-12,
    )?;
    // the integrand is even in k
    Ok(density / PI)
}

/// Memory kernel samples on a uniform lag grid `tau_j = j dt`.
///
/// Lags are stored as positive numbers; `decay_weight[j] = exp(-gamma tau_j / 2)`
/// is the weight of the past state at `t - tau_j`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub tau_grid: Vec<f64>,
    pub jf_values: Vec<Complex64>,
    pub j0_values: Vec<f64>,
    pub decay_weight: Vec<f64>,
}

impl KernelTable {
    pub fn build(r: &ReservoirSpec, mu: f64, dt: f64, tau_max: f64) -> Result<Self> {
        let n = (tau_max / dt).ceil() as usize + 1;
        let tau_grid: Vec<f64> = (0..n).map(|j| j as f64 * dt).collect();
        let jf_values = tau_grid
            .iter()
            .map(|&t| reservoir_correlation(r, mu, t))
            .collect::<Result<Vec<_>>>()?;
        let j0_values = tau_grid.iter().map(|&t| bessel_j0(r.hopping * t)).collect();
        let decay_weight = tau_grid.iter().map(|&t| (-0.5 * r.relaxation * t).exp()).collect();
        Ok(Self {
            tau_grid,
            jf_values,
            j0_values,
            decay_weight,
        })
    }

    pub fn len(&self) -> usize {
        self.tau_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_grid.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_chemical_potential, Side};

    fn ring(modes: usize, beta: f64) -> ReservoirSpec {
        ReservoirSpec {
            modes,
            hopping: 1.0,
            relaxation: 0.1,
            beta,
            density: 1.0,
            side: Side::Left,
        }
    }

    fn discrete_correlation(r: &ReservoirSpec, t: f64) -> Complex64 {
        let th = solve_chemical_potential(r).unwrap();
        let energies = crate::model::ring_energies(r);
        energies
            .iter()
            .zip(&th.occupations)
            .map(|(e, n)| Complex64::new(0.0, e * t).exp() * *n)
            .sum::<Complex64>()
            / r.modes as f64
    }

    #[test]
    fn zero_lag_is_the_density() {
        for beta in [0.1, 1.0, 10.0] {
            let r = ring(2000, beta);
            let th = solve_chemical_potential(&r).unwrap();
            let v = reservoir_correlation(&r, th.mu, 0.0).unwrap();
            assert!(v.im.abs() < 1e-14);
            assert!((v.re - 1.0).abs() < 2e-3, "beta {beta}: {}", v.re);
        }
    }

    #[test]
    fn agrees_with_discrete_ring_sum() {
        let r = ring(2000, 1.0);
        let th = solve_chemical_potential(&r).unwrap();
        for t in [0.5, 3.0, 12.0] {
            let cont = reservoir_correlation(&r, th.mu, t).unwrap();
            let disc = discrete_correlation(&r, t);
            assert!((cont - disc).norm() < 1e-3, "t = {t}: {cont} vs {disc}");
        }
    }

    #[test]
    fn condensate_oscillates_at_band_bottom() {
        let r = ring(2000, 10.0);
        let th = solve_chemical_potential(&r).unwrap();
        let t = 3.0;
        let v = reservoir_correlation(&r, th.mu, t).unwrap();
        let rotated = v * Complex64::new(0.0, r.hopping * t).exp();
        // slowly varying envelope: mostly real and positive after removing exp(-i J_r t)
        assert!(rotated.re > 0.0 && rotated.im.abs() < 0.4 * rotated.re, "{rotated}");
        let disc = discrete_correlation(&r, t);
        assert!((v - disc).norm() < 1e-2);
    }

    #[test]
    fn conjugation_reverses_time_and_is_bounded() {
        let r = ring(200, 1.0);
        let th = solve_chemical_potential(&r).unwrap();
        let zero = reservoir_correlation(&r, th.mu, 0.0).unwrap().re;
        for t in [0.7, 5.0, 20.0] {
            let fwd = reservoir_correlation(&r, th.mu, t).unwrap();
            let back = reservoir_correlation(&r, th.mu, -t).unwrap();
            assert!((fwd.conj() - back).norm() < 1e-12);
            assert!(fwd.norm() <= zero + 1e-12);
        }
    }
}

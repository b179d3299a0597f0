//! Markovian reduction: local gain and loss on the end sites with rate
//! `epsilon^2 / gamma`.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{solve_lyapunov, CMatrix, I};
use crate::model::{chain_hamiltonian, Side, SystemSpec};

/// End site, effective rate and reservoir density of each bath.
fn channels(s: &SystemSpec) -> [(usize, f64, f64); 2] {
    [
        (0, s.effective_relaxation(Side::Left), s.left.density),
        (s.chain.sites - 1, s.effective_relaxation(Side::Right), s.right.density),
    ]
}

/// Right-hand side
/// `i[H, rho] - sum_l g_l ({P_l, rho} / 2 - n_l P_l)`.
pub fn markov_rhs(s: &SystemSpec, h: &CMatrix, rho: &CMatrix) -> CMatrix {
    let hr = h.matmul(rho);
    let rh = rho.matmul(h);
    let mut out = (&hr - &rh).scale(I);
    let n = rho.rows();
    for (site, rate, density) in channels(s) {
        for k in 0..n {
            out[(site, k)] -= rho[(site, k)] * (0.5 * rate);
            out[(k, site)] -= rho[(k, site)] * (0.5 * rate);
        }
        out[(site, site)] += Complex64::new(rate * density, 0.0);
    }
    out
}

fn rk4(s: &SystemSpec, h: &CMatrix, rho: &CMatrix, dt: f64) -> CMatrix {
    let half = Complex64::new(0.5 * dt, 0.0);
    let k1 = markov_rhs(s, h, rho);
    let mut tmp = rho.clone();
    tmp.axpy(half, &k1);
    let k2 = markov_rhs(s, h, &tmp);
    let mut tmp = rho.clone();
    tmp.axpy(half, &k2);
    let k3 = markov_rhs(s, h, &tmp);
    let mut tmp = rho.clone();
    tmp.axpy(Complex64::new(dt, 0.0), &k3);
    let k4 = markov_rhs(s, h, &tmp);
    let mut out = rho.clone();
    out.axpy(Complex64::new(dt / 6.0, 0.0), &k1);
    out.axpy(Complex64::new(dt / 3.0, 0.0), &k2);
    out.axpy(Complex64::new(dt / 3.0, 0.0), &k3);
    out.axpy(Complex64::new(dt / 6.0, 0.0), &k4);
    out
}

/// Integrates the Markovian master equation from `t = 0` with RK4 and returns
/// the chain density matrix at every time in `t_grid`.
pub fn propagate_markov(s: &SystemSpec, rho0: &CMatrix, t_grid: &[f64]) -> Result<Vec<CMatrix>> {
    s.validate()?;
    assert_eq!(rho0.rows(), s.chain.sites, "state does not match the chain");
    let h = chain_hamiltonian(&s.chain);
    let rate = channels(s).iter().map(|c| c.1).fold(0.0, f64::max);
    let max_step = 0.02 / s.chain.hopping.abs().max(s.chain.gate.abs()).max(rate).max(1e-3);
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        if target < t {
            return Err(Error::InvalidParameter(format!("time grid is not ascending at t = {target}")));
        }
        let span = target - t;
        let steps = (span / max_step).ceil() as usize;
        if steps > 0 {
            let dt = span / steps as f64;
            for _ in 0..steps {
                rho = rk4(s, &h, &rho, dt);
            }
        }
        t = target;
        let drift = rho.hermiticity_error();
        if !(drift <= 1e-6 * rho.max_abs().max(1.0)) {
            return Err(Error::HermiticityDrift { t, drift });
        }
        out.push(rho.clone());
    }
    Ok(out)
}

/// Fixed point of the Markovian equation, from the Lyapunov form
/// `A rho + rho A^H + Q = 0` with `A = iH - sum_l (g_l / 2) P_l`.
pub fn markov_stationary(s: &SystemSpec) -> Result<CMatrix> {
    s.validate()?;
    let n = s.chain.sites;
    let mut a = chain_hamiltonian(&s.chain).scale(I);
    let mut q = CMatrix::zeros(n, n);
    for (site, rate, density) in channels(s) {
        a[(site, site)] -= Complex64::new(0.5 * rate, 0.0);
        q[(site, site)] += Complex64::new(rate * density, 0.0);
    }
    if channels(s).iter().any(|c| c.1 <= 0.0) {
        return Err(Error::Singular("Markov fixed point needs epsilon > 0"));
    }
    let mut rho = solve_lyapunov(&a, &q)?;
    rho.hermitize();
    Ok(rho)
}

/// Closed-form stationary current of the Markovian chain,
/// `J_s (J_s g / (J_s^2 + g^2)) (n_L - n_R) / 2` with `g = epsilon^2 / gamma`.
///
/// The formula assumes both ends relax at the same rate `g`.
pub fn analytic_current(s: &SystemSpec) -> Result<f64> {
    let gl = s.effective_relaxation(Side::Left);
    let gr = s.effective_relaxation(Side::Right);
    if (gl - gr).abs() > 1e-12 * gl.abs().max(gr.abs()) {
        return Err(Error::InvalidParameter(format!(
            "closed-form current needs equal end rates, got {gl} and {gr}"
        )));
    }
    let js = s.chain.hopping;
    let g = gl;
    if g == 0.0 && js == 0.0 {
        return Ok(0.0);
    }
    Ok(js * (js * g / (js * js + g * g)) * 0.5 * (s.left.density - s.right.density))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::current_from_spdm;

    /// System whose effective end rate is `rate` (epsilon = 1, gamma = 1/rate).
    fn markov_system(rate: f64, left: f64, right: f64) -> SystemSpec {
        SystemSpec::two_rings(1.0 / rate, 1.0, left, right, 1.0)
    }

    #[test]
    fn closed_form_reference_value() {
        let s = markov_system(1.0, 1.0, 0.1);
        assert!((analytic_current(&s).unwrap() - 0.225).abs() < 1e-15);
        let eq = markov_system(1.0, 0.7, 0.7);
        assert_eq!(analytic_current(&eq).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_vanishes_at_both_ends_and_peaks_at_hopping() {
        let j = |g: f64| analytic_current(&markov_system(g, 1.0, 0.1)).unwrap();
        assert!(j(1e-6) < 1e-6 && j(1e6) < 1e-6);
        assert!(j(1.0) > j(0.9) && j(1.0) > j(1.1));
    }

    #[test]
    fn closed_form_ignores_the_gate() {
        let mut s = markov_system(0.5, 1.0, 0.1);
        let base = analytic_current(&s).unwrap();
        s.chain.gate = -1.3;
        assert_eq!(analytic_current(&s).unwrap(), base);
    }

    #[test]
    fn unequal_rates_rejected() {
        let mut s = markov_system(0.5, 1.0, 0.1);
        s.right.relaxation *= 2.0;
        assert!(analytic_current(&s).is_err());
    }

    #[test]
    fn fixed_point_matches_closed_form() {
        for g in [0.1, 0.5, 1.0, 2.0] {
            let s = markov_system(g, 1.0, 0.1);
            let rho = markov_stationary(&s).unwrap();
            let j = current_from_spdm(&rho, &s.chain).unwrap();
            let want = analytic_current(&s).unwrap();
            assert!(((j - want) / want).abs() < 1e-10, "g = {g}: {j} vs {want}");
            assert!(markov_rhs(&s, &chain_hamiltonian(&s.chain), &rho).max_abs() < 1e-12);
        }
    }

    #[test]
    fn equal_densities_fix_a_multiple_of_identity() {
        let s = markov_system(0.7, 0.4, 0.4);
        let rho = markov_stationary(&s).unwrap();
        let want = CMatrix::identity(5).scale_real(0.4);
        assert!((&rho - &want).max_abs() < 1e-12);
    }

    #[test]
    fn propagation_reaches_the_unique_fixed_point() {
        let s = markov_system(1.0, 1.0, 0.1);
        let fixed = markov_stationary(&s).unwrap();
        let a = CMatrix::zeros(5, 5);
        let b = CMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                Complex64::new(2.0 + i as f64, 0.0)
            } else {
                Complex64::new(0.1, 0.05 * (j as f64 - i as f64))
            }
        });
        for rho0 in [a, b] {
            let out = propagate_markov(&s, &rho0, &[400.0, 800.0]).unwrap();
            assert!((&out[1] - &fixed).max_abs() < 1e-8);
        }
    }

    #[test]
    fn zero_coupling_is_unitary() {
        let mut s = markov_system(1.0, 1.0, 0.1);
        s.coupling = 0.0;
        let mut rho0 = CMatrix::zeros(5, 5);
        rho0[(0, 0)] = Complex64::new(1.0, 0.0);
        let out = propagate_markov(&s, &rho0, &[3.0]).unwrap();
        let trace = out[0].trace();
        assert!((trace.re - 1.0).abs() < 1e-10 && trace.im.abs() < 1e-12);
        assert!(markov_stationary(&s).is_err());
    }
}

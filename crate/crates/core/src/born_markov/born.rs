//! Non-Markovian Born master equation for the chain density matrix.
//!
//! With `rho[(l, m)] = <a_l^+ a_m>` and `U(tau) = exp(-i H tau)` the equation
//! reads
//!
//! ```text
//! d rho / dt = i[H, rho] + eps^2 sum_l (L_l + L_l^+)
//! L_l = P_l / 4 * int_0^t dtau e^{-gamma tau / 2} [J_F(tau) - J_0(J_r tau) rho(t - tau)] U(tau)
//! ```
//!
//! where `P_l` projects on end site `l` and each end uses its own reservoir.
//! Only row `l` of `L_l` is nonzero, so the memory integral is carried for a
//! single row per end.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

use super::kernels::{continuum_occupation, KernelTable};
use crate::error::{Error, Result};
use crate::linalg::{solve_superoperator, CMatrix, ONE, ZERO};
use crate::model::{chain_eigenmodes, current_from_spdm, solve_chemical_potential, EigenmodeSet, ReservoirSpec, Side, SystemSpec};
use crate::quad::integrate;

/// Chain density matrix together with its recent past.
///
/// `history[j]` is the state at `t - j dt`; `history[0]` equals `rho_s`.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub rho_s: CMatrix,
    pub t: f64,
    pub dt: f64,
    pub history: VecDeque<CMatrix>,
}

impl ReducedState {
    /// State at the moment the chain is connected (`t = 0`, no past needed).
    pub fn initial(rho_s: CMatrix, dt: f64) -> Self {
        let mut history = VecDeque::new();
        history.push_back(rho_s.clone());
        Self {
            rho_s,
            t: 0.0,
            dt,
            history,
        }
    }

    fn initial_at(rho_s: CMatrix, t: f64, dt: f64) -> Self {
        let mut s = Self::initial(rho_s, dt);
        s.t = t;
        s
    }

    fn elapsed_steps(&self) -> usize {
        (self.t / self.dt).round() as usize
    }
}

/// Integration controls for [`propagate_born_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BornOptions {
    /// Step size; `None` picks `min(0.02 / max(J_s, J_r), 0.1 / gamma)`.
    pub dt: Option<f64>,
    /// Memory is cut at `tau_max = memory_cutoff / gamma`.
    pub memory_cutoff: f64,
}

impl Default for BornOptions {
    fn default() -> Self {
        Self {
            dt: None,
            memory_cutoff: 40.0,
        }
    }
}

impl BornOptions {
    pub fn step_for(&self, s: &SystemSpec) -> f64 {
        self.dt.unwrap_or_else(|| {
            let rate = s
                .chain
                .hopping
                .abs()
                .max(s.left.hopping.abs())
                .max(s.right.hopping.abs())
                .max(s.chain.gate.abs());
            let gamma = s.left.relaxation.max(s.right.relaxation);
            (0.02 / rate.max(1e-3)).min(0.1 / gamma)
        })
    }
}

/// `U(tau_j) = exp(-i H tau_j)` on the lag grid, built from the eigenmodes.
fn evolution_table(modes: &EigenmodeSet, dt: f64, len: usize) -> Vec<CMatrix> {
    let n = modes.omegas.len();
    (0..len)
        .map(|j| {
            let tau = j as f64 * dt;
            let phases: Vec<Complex64> = modes.omegas.iter().map(|w| Complex64::new(0.0, -w * tau).exp()).collect();
            CMatrix::from_fn(n, n, |a, b| {
                let mut acc = ZERO;
                for (i, p) in phases.iter().enumerate() {
                    acc += p * (modes.modes[i][a] * modes.modes[i][b]);
                }
                acc
            })
        })
        .collect()
}

/// Per-end data of the memory integral.
struct Channel {
    site: usize,
    /// `e^{-gamma tau / 2} J_0(J_r tau)` per lag.
    memory_weight: Vec<f64>,
    /// Row `site` of the cumulative trapezoid `int_0^{tau_j} e^{-gamma tau/2} J_F U dtau`.
    source: Vec<Vec<Complex64>>,
}

impl Channel {
    fn build(site: usize, r: &ReservoirSpec, dt: f64, cutoff: f64, evolution: &[CMatrix]) -> Result<Self> {
        let th = solve_chemical_potential(r)?;
        let table = KernelTable::build(r, th.mu, dt, cutoff / r.relaxation)?;
        let n = evolution[0].rows();
        let memory_weight: Vec<f64> = table.j0_values.iter().zip(&table.decay_weight).map(|(j, w)| j * w).collect();
        let integrand = |j: usize| -> Vec<Complex64> {
            let c = table.jf_values[j] * table.decay_weight[j];
            evolution[j].row(site).iter().map(|u| c * u).collect()
        };
        let mut source = Vec::with_capacity(table.len());
        source.push(vec![ZERO; n]);
        let mut prev = integrand(0);
        for j in 1..table.len() {
            let cur = integrand(j);
            let last = source.last().unwrap();
            let next = (0..n).map(|k| last[k] + (prev[k] + cur[k]) * (0.5 * dt)).collect();
            source.push(next);
            prev = cur;
        }
        Ok(Self {
            site,
            memory_weight,
            source,
        })
    }

    fn lags(&self) -> usize {
        self.memory_weight.len()
    }

    /// Row of `L_l` scaled by 4, given the history and the elapsed step count.
    fn row(&self, history: &VecDeque<CMatrix>, elapsed: usize, evolution: &[CMatrix], dt: f64) -> Result<Vec<Complex64>> {
        let upper = elapsed.min(self.lags() - 1);
        if history.len() < upper + 1 {
            return Err(Error::HistoryUnderrun {
                needed: upper + 1,
                available: history.len(),
            });
        }
        let n = evolution[0].rows();
        let mut row = self.source[upper].clone();
        if upper == 0 {
            return Ok(row);
        }
        for j in 0..=upper {
            let weight = if j == 0 || j == upper { 0.5 * dt } else { dt } * self.memory_weight[j];
            let past = history[j].row(self.site);
            let u = &evolution[j];
            for (k, rk) in past.iter().enumerate() {
                let c = rk * weight;
                for (m, out) in row.iter_mut().enumerate() {
                    *out -= c * u[(k, m)];
                }
            }
        }
        debug_assert_eq!(row.len(), n);
        Ok(row)
    }
}

/// Everything fixed during one Born propagation.
struct BornGenerator {
    coupling_sq: f64,
    dt: f64,
    capacity: usize,
    evolution: Vec<CMatrix>,
    channels: Vec<Channel>,
}

impl BornGenerator {
    fn new(s: &SystemSpec, opts: &BornOptions) -> Result<Self> {
        s.validate()?;
        if s.chain.interaction != 0.0 {
            return Err(Error::InteractingNotSupported { u: s.chain.interaction });
        }
        let dt = opts.step_for(s);
        if !(dt > 0.0) || !(opts.memory_cutoff > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "Born step {dt} and memory cutoff {} must be positive",
                opts.memory_cutoff
            )));
        }
        let modes = chain_eigenmodes(&s.chain)?;
        let tau_max = opts.memory_cutoff / s.left.relaxation.min(s.right.relaxation);
        let capacity = (tau_max / dt).ceil() as usize + 1;
        let evolution = evolution_table(&modes, dt, capacity);
        let channels = vec![
            Channel::build(0, &s.left, dt, opts.memory_cutoff, &evolution)?,
            Channel::build(s.chain.sites - 1, &s.right, dt, opts.memory_cutoff, &evolution)?,
        ];
        Ok(Self {
            coupling_sq: s.coupling * s.coupling,
            dt,
            capacity,
            evolution,
            channels,
        })
    }

    /// Dissipative part `eps^2 sum_l (L_l + L_l^+)`.
    fn dissipator(&self, history: &VecDeque<CMatrix>, elapsed: usize) -> Result<CMatrix> {
        let n = history[0].rows();
        let mut out = CMatrix::zeros(n, n);
        if self.coupling_sq == 0.0 {
            return Ok(out);
        }
        let scale = 0.25 * self.coupling_sq;
        for ch in &self.channels {
            let row = ch.row(history, elapsed, &self.evolution, self.dt)?;
            for (m, v) in row.iter().enumerate() {
                out[(ch.site, m)] += v * scale;
                out[(m, ch.site)] += v.conj() * scale;
            }
        }
        Ok(out)
    }

    /// `exp(iH dt) X exp(-iH dt)`.
    fn rotate(&self, x: &CMatrix) -> CMatrix {
        let u = &self.evolution[1];
        u.adjoint_matmul(&x.matmul(u))
    }

    /// One step of the trapezoidal exponential integrator: the commutator is
    /// treated exactly, the dissipator by a Heun predictor-corrector.
    fn step(&self, state: &mut ReducedState) -> Result<()> {
        let elapsed = state.elapsed_steps();
        let d0 = self.dissipator(&state.history, elapsed)?;
        let mut pred = state.rho_s.clone();
        pred.axpy(Complex64::new(self.dt, 0.0), &d0);
        let pred = self.rotate(&pred);
        state.history.push_front(pred);
        let d1 = self.dissipator(&state.history, elapsed + 1);
        state.history.pop_front();
        let d1 = d1?;
        let mut next = state.rho_s.clone();
        next.axpy(Complex64::new(0.5 * self.dt, 0.0), &d0);
        let mut next = self.rotate(&next);
        next.axpy(Complex64::new(0.5 * self.dt, 0.0), &d1);
        state.t = (elapsed + 1) as f64 * self.dt;
        state.rho_s = next.clone();
        state.history.push_front(next);
        state.history.truncate(self.capacity);
        Ok(())
    }
}

/// [`propagate_born_with`] using default options.
pub fn propagate_born(s: &SystemSpec, rho0: &ReducedState, t_grid: &[f64]) -> Result<Vec<ReducedState>> {
    propagate_born_with(
        s,
        rho0,
        t_grid,
        &BornOptions {
            dt: Some(rho0.dt),
            ..BornOptions::default()
        },
    )
}

/// Integrates the Born master equation on a uniform step grid.
///
/// Requested times are rounded to the nearest multiple of the step; the
/// reported `t` of every output is the actual time. Intermediate outputs
/// carry only their current state as history, the final one carries the
/// full history needed to resume.
pub fn propagate_born_with(s: &SystemSpec, rho0: &ReducedState, t_grid: &[f64], opts: &BornOptions) -> Result<Vec<ReducedState>> {
    assert_eq!(rho0.rho_s.rows(), s.chain.sites, "state does not match the chain");
    let gen = BornGenerator::new(s, opts)?;
    if (gen.dt - rho0.dt).abs() > 1e-12 * gen.dt {
        return Err(Error::InvalidParameter(alloc::format!(
            "state step {} differs from integrator step {}",
            rho0.dt,
            gen.dt
        )));
    }
    let mut state = rho0.clone();
    if state.history.is_empty() {
        state.history.push_back(state.rho_s.clone());
    }
    let mut out = Vec::with_capacity(t_grid.len());
    for (idx, &target) in t_grid.iter().enumerate() {
        let steps = (target / gen.dt).round() as usize;
        if target < state.t - 0.5 * gen.dt {
            return Err(Error::InvalidParameter(alloc::format!(
                "time grid is not ascending at t = {target}"
            )));
        }
        while state.elapsed_steps() < steps {
            gen.step(&mut state)?;
        }
        let drift = state.rho_s.hermiticity_error();
        if !(drift <= 1e-6 * state.rho_s.max_abs().max(1.0)) {
            return Err(Error::HermiticityDrift { t: state.t, drift });
        }
        if idx + 1 == t_grid.len() {
            out.push(state.clone());
        } else {
            out.push(ReducedState::initial_at(state.rho_s.clone(), state.t, gen.dt));
        }
    }
    Ok(out)
}

/// Born stationary state and its current.
#[derive(Debug, Clone)]
pub struct BornStationary {
    pub rho_s: CMatrix,
    pub current: f64,
}

/// `V diag(d) V^T` for real orthonormal eigenvectors.
fn from_eigenbasis(modes: &EigenmodeSet, d: &[Complex64]) -> CMatrix {
    let n = d.len();
    CMatrix::from_fn(n, n, |a, b| {
        let mut acc = ZERO;
        for (i, di) in d.iter().enumerate() {
            acc += di * (modes.modes[i][a] * modes.modes[i][b]);
        }
        acc
    })
}

/// Laplace transform of the source kernel at `s = gamma/2 + i omega`:
/// `(1/2pi) int dk n(k) / (gamma/2 + i (omega - E(k)))`.
fn source_transform(r: &ReservoirSpec, mu: f64, omega: f64) -> Result<Complex64> {
    let half = 0.5 * r.relaxation;
    let pieces = 16 + (r.hopping.abs() / half).sqrt().ceil() as usize;
    let v = integrate(
        |k| {
            let e = -r.hopping * k.cos();
            Complex64::new(continuum_occupation(r, mu, k), 0.0) / Complex64::new(half, omega - e)
        },
        0.0,
        PI,
        pieces,
        1e-13,
        1e-11,
    )?;
    Ok(v / PI)
}

/// Laplace transform of `J_0(J_r tau)` at `s = gamma/2 + i omega`,
/// `1 / sqrt(s^2 + J_r^2)` on the principal branch.
fn memory_transform(r: &ReservoirSpec, omega: f64) -> Complex64 {
    let s = Complex64::new(0.5 * r.relaxation, omega);
    ONE / (s * s + r.hopping * r.hopping).sqrt()
}

/// Long-time limit of [`propagate_born`] without time stepping.
///
/// With the memory extended to infinity the stationary equation is linear in
/// `rho`:
/// `i[H, rho] - eps^2/4 sum_l (P_l rho W_l + W_l^+ rho P_l) = -eps^2/4 sum_l (P_l F_l + F_l^+ P_l)`,
/// where `W_l` and `F_l` are the Laplace transforms of the memory and source
/// kernels, diagonal in the chain eigenbasis.
pub fn born_stationary(s: &SystemSpec) -> Result<BornStationary> {
    s.validate()?;
    if s.chain.interaction != 0.0 {
        return Err(Error::InteractingNotSupported { u: s.chain.interaction });
    }
    if s.coupling == 0.0 {
        return Err(Error::Singular("Born fixed point needs epsilon > 0"));
    }
    let n = s.chain.sites;
    let modes = chain_eigenmodes(&s.chain)?;
    let h = crate::model::chain_hamiltonian(&s.chain);
    let mut ends = Vec::with_capacity(2);
    for (side, site) in [(Side::Left, 0), (Side::Right, n - 1)] {
        let r = s.reservoir(side);
        let th = solve_chemical_potential(r)?;
        let f: Vec<Complex64> = modes.omegas.iter().map(|w| source_transform(r, th.mu, *w)).collect::<Result<_>>()?;
        let w: Vec<Complex64> = modes.omegas.iter().map(|w| memory_transform(r, *w)).collect();
        ends.push((site, from_eigenbasis(&modes, &f), from_eigenbasis(&modes, &w)));
    }
    let scale = 0.25 * s.coupling * s.coupling;
    // W^+ x P is written out instead of conjugating P x W, since the
    // solver probes the operator with non-Hermitian basis matrices
    let op = |x: &CMatrix| {
        let mut out = (&h.matmul(x) - &x.matmul(&h)).scale(crate::linalg::I);
        for (site, _, w) in &ends {
            let wh = w.adjoint();
            for m in 0..n {
                let mut row = ZERO;
                let mut col = ZERO;
                for k in 0..n {
                    row += x[(*site, k)] * w[(k, m)];
                    col += wh[(m, k)] * x[(k, *site)];
                }
                out[(*site, m)] -= row * scale;
                out[(m, *site)] -= col * scale;
            }
        }
        out
    };
    let mut rhs = CMatrix::zeros(n, n);
    for (site, f, _) in &ends {
        for m in 0..n {
            rhs[(*site, m)] -= f[(*site, m)] * scale;
            rhs[(m, *site)] -= f[(*site, m)].conj() * scale;
        }
    }
    let mut rho = solve_superoperator(n, op, &rhs)?;
    rho.hermitize();
    let current = current_from_spdm(&rho, &s.chain)?;
    Ok(BornStationary { rho_s: rho, current })
}

/// Current of a reduced state.
pub fn reduced_current(s: &SystemSpec, state: &ReducedState) -> Result<f64> {
    current_from_spdm(&state.rho_s, &s.chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::born_markov::markov::{analytic_current, markov_stationary, propagate_markov};
    use crate::exact::stationary_report;

    fn system(gamma: f64, beta: f64, coupling: f64) -> SystemSpec {
        SystemSpec::two_rings(gamma, beta, 1.0, 0.1, coupling)
    }

    #[test]
    fn zero_coupling_is_unitary() {
        let s = system(1.0, 1.0, 0.0);
        let mut rho0 = CMatrix::zeros(5, 5);
        rho0[(0, 0)] = ONE;
        let opts = BornOptions {
            dt: Some(0.01),
            ..BornOptions::default()
        };
        let out = propagate_born_with(&s, &ReducedState::initial(rho0.clone(), 0.01), &[2.5], &opts).unwrap();
        let modes = chain_eigenmodes(&s.chain).unwrap();
        let u = evolution_table(&modes, 2.5, 2).pop().unwrap();
        let want = u.adjoint_matmul(&rho0.matmul(&u));
        assert!((&out[0].rho_s - &want).max_abs() < 1e-12);
        assert!((out[0].t - 2.5).abs() < 1e-12);
    }

    #[test]
    fn resuming_without_history_underruns() {
        let s = system(1.0, 1.0, 0.4);
        let mut st = ReducedState::initial(CMatrix::zeros(5, 5), 0.02);
        st.t = 1.0;
        let opts = BornOptions {
            dt: Some(0.02),
            ..BornOptions::default()
        };
        match propagate_born_with(&s, &st, &[1.2], &opts) {
            Err(Error::HistoryUnderrun { needed, available }) => assert!(needed > available),
            other => panic!("expected underrun, got {other:?}"),
        }
    }

    #[test]
    fn resuming_from_final_output_is_seamless() {
        let s = system(2.0, 1.0, 0.8);
        let opts = BornOptions {
            dt: Some(0.02),
            ..BornOptions::default()
        };
        let st = ReducedState::initial(CMatrix::zeros(5, 5), 0.02);
        let full = propagate_born_with(&s, &st, &[6.0], &opts).unwrap();
        let first = propagate_born_with(&s, &st, &[3.0], &opts).unwrap();
        let second = propagate_born_with(&s, &first[0], &[6.0], &opts).unwrap();
        assert!((&full[0].rho_s - &second[0].rho_s).max_abs() < 1e-13);
    }

    #[test]
    fn propagation_relaxes_to_the_direct_fixed_point() {
        let s = system(2.0, 1.0, 0.8);
        let opts = BornOptions {
            dt: Some(0.01),
            ..BornOptions::default()
        };
        let st = ReducedState::initial(CMatrix::zeros(5, 5), 0.01);
        let out = propagate_born_with(&s, &st, &[150.0, 200.0], &opts).unwrap();
        let fixed = born_stationary(&s).unwrap();
        let j = reduced_current(&s, &out[1]).unwrap();
        assert!(((j - fixed.current) / fixed.current).abs() < 2e-3, "{j} vs {}", fixed.current);
        assert!((&out[1].rho_s - &fixed.rho_s).max_abs() < 2e-3);
        assert!(out[1].rho_s.hermiticity_error() < 1e-12);
    }

    #[test]
    fn large_gamma_approaches_markov() {
        let s = system(20.0, 1.0, 2.0);
        let st = ReducedState::initial(CMatrix::zeros(5, 5), 0.005);
        let opts = BornOptions {
            dt: Some(0.005),
            ..BornOptions::default()
        };
        let born = propagate_born_with(&s, &st, &[150.0], &opts).unwrap();
        let markov = propagate_markov(&s, &CMatrix::zeros(5, 5), &[150.0]).unwrap();
        let jb = reduced_current(&s, &born[0]).unwrap();
        let jm = current_from_spdm(&markov[0], &s.chain).unwrap();
        assert!(((jb - jm) / jm).abs() < 0.02, "{jb} vs {jm}");
    }

    #[test]
    fn markov_gap_shrinks_with_gamma() {
        let mut gaps = Vec::new();
        for gamma in [1.0, 5.0, 20.0] {
            let s = system(gamma, 1.0, (0.5 * gamma).sqrt());
            let born = born_stationary(&s).unwrap().current;
            let markov = current_from_spdm(&markov_stationary(&s).unwrap(), &s.chain).unwrap();
            let analytic = analytic_current(&s).unwrap();
            assert!(((markov - analytic) / analytic).abs() < 1e-8);
            gaps.push(((born - markov) / markov).abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn born_tracks_exact_at_moderate_gamma() {
        let s = system(1.0, 0.1, 0.4);
        let born = born_stationary(&s).unwrap().current;
        let exact = stationary_report(&s).unwrap().current;
        assert!(((born - exact) / exact).abs() < 0.2, "{born} vs {exact}");
    }

    #[test]
    fn equal_reservoirs_carry_no_current() {
        let s = SystemSpec::two_rings(0.5, 1.0, 0.6, 0.6, 0.4);
        let st = born_stationary(&s).unwrap();
        assert!(st.current.abs() < 1e-12);
    }
}

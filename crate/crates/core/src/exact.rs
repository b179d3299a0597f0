//! Exact evolution of the total single-particle density matrix for
//! non-interacting bosons.
//!
//! All `2M + L` modes are kept, laid out as `[left ring | chain | right ring]`
//! with the rings in their Bloch basis. For `rho[(i, j)] = <c_i^+ c_j>` the
//! equation of motion reads
//!
//! ```text
//! d rho / dt = i (h^T rho - rho h^T) - (D rho + rho D) + Q
//! ```
//!
//! where `D` is `gamma / 2` on ring modes and `Q` is `gamma n_k` on ring
//! modes. Writing `A = i h^T - D` turns the stationary problem into the
//! Lyapunov equation `A rho + rho A^H + Q = 0`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{solve_lyapunov, CMatrix, I};
use crate::model::{current_from_spdm, ring_energies, solve_chemical_potential, ChainSpec, SystemSpec};

/// Index layout of the total mode space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeLayout {
    pub left: usize,
    pub chain: usize,
    pub right: usize,
}

impl ModeLayout {
    pub fn dim(&self) -> usize {
        self.left + self.chain + self.right
    }

    pub fn chain_start(&self) -> usize {
        self.left
    }

    pub fn right_start(&self) -> usize {
        self.left + self.chain
    }
}

/// Single-particle generator of the total system.
#[derive(Debug, Clone)]
pub struct TotalGenerator {
    /// Hermitian single-particle Hamiltonian (real symmetric here).
    pub h: CMatrix,
    /// Diagonal damping `gamma / 2` on ring modes, 0 on the chain.
    pub damping: Vec<f64>,
    /// Diagonal source `gamma n_k` on ring modes, 0 on the chain.
    pub injection: Vec<f64>,
    pub layout: ModeLayout,
    pub chain: ChainSpec,
    entries: Vec<(usize, usize, f64)>,
    max_rate: f64,
}

/// Total density matrix at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalSpdm {
    pub rho: CMatrix,
    pub t: f64,
}

/// Assembles the single-particle generator. Rejects `U != 0`.
pub fn build_total_generator(s: &SystemSpec) -> Result<TotalGenerator> {
    s.validate()?;
    if s.chain.interaction != 0.0 {
        return Err(Error::InteractingNotSupported { u: s.chain.interaction });
    }
    let layout = ModeLayout {
        left: s.left.modes,
        chain: s.chain.sites,
        right: s.right.modes,
    };
    let n = layout.dim();
    let mut h = CMatrix::zeros(n, n);
    let mut damping = vec![0.0; n];
    let mut injection = vec![0.0; n];
    let mut entries = Vec::new();
    let mut push = |h: &mut CMatrix, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            h[(i, j)] = Complex64::new(v, 0.0);
            entries.push((i, j, v));
        }
    };

    let chain_h = crate::model::chain_hamiltonian(&s.chain);
    let c0 = layout.chain_start();
    for i in 0..layout.chain {
        for j in 0..layout.chain {
            push(&mut h, c0 + i, c0 + j, chain_h[(i, j)].re);
        }
    }
    for (offset, res, site) in [(0usize, &s.left, c0), (layout.right_start(), &s.right, c0 + layout.chain - 1)] {
        let energies = ring_energies(res);
        let thermal = solve_chemical_potential(res)?;
        let g = -s.coupling / (2.0 * (res.modes as f64).sqrt());
        for (k, (e, nk)) in energies.iter().zip(&thermal.occupations).enumerate() {
            let idx = offset + k;
            push(&mut h, idx, idx, *e);
            push(&mut h, idx, site, g);
            push(&mut h, site, idx, g);
            damping[idx] = 0.5 * res.relaxation;
            injection[idx] = res.relaxation * nk;
        }
    }
    let max_rate = [
        s.chain.hopping,
        s.left.hopping.abs(),
        s.right.hopping.abs(),
        s.left.relaxation,
        s.right.relaxation,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(TotalGenerator {
        h,
        damping,
        injection,
        layout,
        chain: s.chain.clone(),
        entries,
        max_rate,
    })
}

impl TotalGenerator {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Largest step the explicit integrator takes: `0.02 / max(J_s, J_r, gamma)`.
    pub fn max_step(&self) -> f64 {
        0.02 / self.max_rate
    }

    /// Drift matrix `A = i h^T - D`.
    pub fn drift_matrix(&self) -> CMatrix {
        let n = self.dim();
        let mut a = CMatrix::from_fn(n, n, |i, j| I * self.h[(j, i)]);
        for (i, d) in self.damping.iter().enumerate() {
            a[(i, i)] -= Complex64::new(*d, 0.0);
        }
        a
    }

    /// Time derivative of `rho`.
    pub fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        // i h^T rho: row i gets i h_ji rho_j.
        for &(j, i, v) in &self.entries {
            let w = I * v;
            let (src_row, dst_row) = (&src[j * n..(j + 1) * n], &mut dst[i * n..(i + 1) * n]);
            for (o, r) in dst_row.iter_mut().zip(src_row) {
                *o += w * r;
            }
        }
        // -i rho h^T: column j gets -i rho[:, i] h_ji
        for r in 0..n {
            let src_row = &src[r * n..(r + 1) * n];
            let dst_row = &mut dst[r * n..(r + 1) * n];
            for &(j, i, v) in &self.entries {
                dst_row[j] -= I * v * src_row[i];
            }
        }
        for (i, d) in self.damping.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            for j in 0..n {
                dst[i * n + j] -= src[i * n + j] * *d;
                dst[j * n + i] -= src[j * n + i] * *d;
            }
        }
        for (i, q) in self.injection.iter().enumerate() {
            dst[i * n + i] += Complex64::new(*q, 0.0);
        }
        out
    }

    /// Rings at their thermal occupations, empty chain, `t = 0`.
    pub fn thermal_initial_state(&self) -> TotalSpdm {
        let diag: Vec<f64> = self
            .injection
            .iter()
            .zip(&self.damping)
            .map(|(q, d)| if *d > 0.0 { q / (2.0 * d) } else { 0.0 })
            .collect();
        TotalSpdm {
            rho: CMatrix::from_real_diagonal(&diag),
            t: 0.0,
        }
    }

    /// Relative residual `|A rho + rho A^H + Q| / |Q|` (Frobenius norms).
    pub fn stationary_residual(&self, rho: &CMatrix) -> f64 {
        let q_norm = self.injection.iter().map(|q| q * q).sum::<f64>().sqrt();
        self.rhs(rho).frobenius_norm() / q_norm.max(f64::MIN_POSITIVE)
    }
}

fn rk4_step(gen: &TotalGenerator, rho: &CMatrix, dt: f64) -> CMatrix {
    let k1 = gen.rhs(rho);
    let mut tmp = rho.clone();
    tmp.axpy(Complex64::new(0.5 * dt, 0.0), &k1);
    let k2 = gen.rhs(&tmp);
    let mut tmp = rho.clone();
    tmp.axpy(Complex64::new(0.5 * dt, 0.0), &k2);
    let k3 = gen.rhs(&tmp);
    let mut tmp = rho.clone();
    tmp.axpy(Complex64::new(dt, 0.0), &k3);
    let k4 = gen.rhs(&tmp);
    let mut out = rho.clone();
    out.axpy(Complex64::new(dt / 6.0, 0.0), &k1);
    out.axpy(Complex64::new(dt / 3.0, 0.0), &k2);
    out.axpy(Complex64::new(dt / 3.0, 0.0), &k3);
    out.axpy(Complex64::new(dt / 6.0, 0.0), &k4);
    out
}

/// Integrates the total density matrix with classical RK4 and returns the
/// state at every time in `t_grid`.
pub fn propagate(gen: &TotalGenerator, rho0: &TotalSpdm, t_grid: &[f64]) -> Result<Vec<TotalSpdm>> {
    propagate_with_step(gen, rho0, t_grid, gen.max_step())
}

/// [`propagate`] with an explicit upper bound on the step size.
pub fn propagate_with_step(gen: &TotalGenerator, rho0: &TotalSpdm, t_grid: &[f64], max_step: f64) -> Result<Vec<TotalSpdm>> {
    assert_eq!(rho0.rho.rows(), gen.dim(), "state does not match generator");
    let mut rho = rho0.rho.clone();
    let mut t = rho0.t;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        if target < t {
            return Err(Error::InvalidParameter(alloc::format!(
                "time grid is not ascending at t = {target}"
            )));
        }
        let span = target - t;
        let steps = (span / max_step).ceil() as usize;
        if steps > 0 {
            let dt = span / steps as f64;
            for _ in 0..steps {
                rho = rk4_step(gen, &rho, dt);
            }
        }
        t = target;
        let drift = rho.hermiticity_error();
        if drift > 1e-6 * rho.max_abs().max(1.0) || !drift.is_finite() {
            return Err(Error::HermiticityDrift { t, drift });
        }
        out.push(TotalSpdm { rho: rho.clone(), t });
    }
    Ok(out)
}

/// Stationary total density matrix from the Lyapunov equation.
///
/// Requires `epsilon > 0`: without coupling the chain block is conserved and
/// the fixed point is not unique.
pub fn stationary(gen: &TotalGenerator) -> Result<TotalSpdm> {
    if gen.damping.iter().all(|d| *d == 0.0) {
        return Err(Error::Singular("stationary state needs gamma > 0"));
    }
    let c0 = gen.layout.chain_start();
    let coupled = gen.entries.iter().any(|&(i, j, _)| {
        let in_chain = |k: usize| k >= c0 && k < c0 + gen.layout.chain;
        in_chain(i) != in_chain(j)
    });
    if !coupled {
        return Err(Error::Singular("stationary state needs epsilon > 0"));
    }
    let q = CMatrix::from_real_diagonal(&gen.injection);
    let mut rho = solve_lyapunov(&gen.drift_matrix(), &q)?;
    rho.hermitize();
    Ok(TotalSpdm { rho, t: f64::INFINITY })
}

/// Chain block `[M, M + L)` of the total density matrix.
pub fn chain_block(layout: &ModeLayout, rho: &TotalSpdm) -> CMatrix {
    rho.rho.principal_block(layout.chain_start(), layout.chain)
}

/// Stationary state reduced to what the observables need.
#[derive(Debug, Clone)]
pub struct StationaryReport {
    pub current: f64,
    pub chain_rho: CMatrix,
    pub residual: f64,
}

/// Stationary current and chain density matrix for a parameter set.
pub fn stationary_report(s: &SystemSpec) -> Result<StationaryReport> {
    let gen = build_total_generator(s)?;
    let st = stationary(&gen)?;
    let residual = gen.stationary_residual(&st.rho);
    let chain_rho = chain_block(&gen.layout, &st);
    let current = current_from_spdm(&chain_rho, &s.chain)?;
    Ok(StationaryReport {
        current,
        chain_rho,
        residual,
    })
}

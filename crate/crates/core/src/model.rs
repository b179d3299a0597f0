//! Static model objects shared by every solver: parameters, ring spectra,
//! thermal occupations, the chain Hamiltonian and its eigenmodes, and the
//! current observable.
//!
//! Energies are in units of the hopping `J`, times in `1/J`. The single
//! particle density matrix uses the convention `rho[(l, m)] = <a_l^+ a_m>`,
//! which is the ensemble average of `conj(a_l) * a_m` in the classical
//! picture. With that convention a positive current flows from site 1
//! towards site L.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_tridiagonal_eigen, CMatrix};

/// Which end of the chain a reservoir ring is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Attached to site 1.
    Left,
    /// Attached to site L.
    Right,
}

/// Parameters of the Bose-Hubbard chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    /// Number of sites `L`.
    pub sites: usize,
    /// Intra-chain hopping `J_s`.
    pub hopping: f64,
    /// Gate voltage `delta` (uniform on-site energy).
    pub gate: f64,
    /// Microscopic interaction constant `U`.
    pub interaction: f64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            sites: 5,
            hopping: 1.0,
            gate: 0.0,
            interaction: 0.0,
        }
    }
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::InvalidParameter(format!("chain.L = {} violates L >= 2", self.sites)));
        }
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(Error::InvalidParameter(format!("chain.Js = {} violates Js > 0", self.hopping)));
        }
        if !self.gate.is_finite() {
            return Err(Error::InvalidParameter(format!("chain.delta = {} is not finite", self.gate)));
        }
        if !(self.interaction >= 0.0) || !self.interaction.is_finite() {
            return Err(Error::InvalidParameter(format!("chain.U = {} violates U >= 0", self.interaction)));
        }
        Ok(())
    }
}

/// Parameters of one ring reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirSpec {
    /// Ring size `M`.
    pub modes: usize,
    /// Ring hopping `J_r`.
    pub hopping: f64,
    /// Relaxation rate `gamma`.
    pub relaxation: f64,
    /// Inverse temperature `beta`.
    pub beta: f64,
    /// Target mean particle density `n = sum_k n_k / M`.
    pub density: f64,
    pub side: Side,
}

impl ReservoirSpec {
    /// Ring with the default size of 200 modes and unit hopping.
    pub fn new(side: Side, relaxation: f64, beta: f64, density: f64) -> Self {
        Self {
            modes: 200,
            hopping: 1.0,
            relaxation,
            beta,
            density,
            side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let name = match self.side {
            Side::Left => "left",
            Side::Right => "right",
        };
        if self.modes < 2 {
            return Err(Error::InvalidParameter(format!("{name}.M = {} violates M >= 2", self.modes)));
        }
        if !self.hopping.is_finite() {
            return Err(Error::InvalidParameter(format!("{name}.Jr = {} is not finite", self.hopping)));
        }
        if !(self.relaxation > 0.0) || !self.relaxation.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name}.gamma = {} violates gamma > 0",
                self.relaxation
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("{name}.beta = {} violates beta > 0", self.beta)));
        }
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(Error::InvalidParameter(format!("{name}.nbar = {} violates nbar > 0", self.density)));
        }
        Ok(())
    }
}

/// Chain plus two reservoirs plus the chain-ring coupling `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub chain: ChainSpec,
    pub left: ReservoirSpec,
    pub right: ReservoirSpec,
    /// Chain-ring coupling `epsilon`.
    pub coupling: f64,
}

impl SystemSpec {
    /// Two identical rings (except for density) with the default chain.
    pub fn two_rings(relaxation: f64, beta: f64, left_density: f64, right_density: f64, coupling: f64) -> Self {
        Self {
            chain: ChainSpec::default(),
            left: ReservoirSpec::new(Side::Left, relaxation, beta, left_density),
            right: ReservoirSpec::new(Side::Right, relaxation, beta, right_density),
            coupling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.left.validate()?;
        self.right.validate()?;
        if self.left.side != Side::Left || self.right.side != Side::Right {
            return Err(Error::InvalidParameter("reservoir sides are swapped".into()));
        }
        if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} violates epsilon >= 0",
                self.coupling
            )));
        }
        Ok(())
    }

    pub fn reservoir(&self, side: Side) -> &ReservoirSpec {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Effective Markovian relaxation `epsilon^2 / gamma` of one end site.
    pub fn effective_relaxation(&self, side: Side) -> f64 {
        self.coupling * self.coupling / self.reservoir(side).relaxation
    }

    /// Sets `U` from the macroscopic constant `g = U * n_left`.
    pub fn set_macroscopic_interaction(&mut self, g: f64) {
        self.chain.interaction = g / self.left.density;
    }

    /// Macroscopic interaction constant `g = U * n_left`.
    pub fn macroscopic_interaction(&self) -> f64 {
        self.chain.interaction * self.left.density
    }
}

/// Bose-Einstein occupations of one ring.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalOccupations {
    /// Chemical potential, entering as `exp(beta (E_k + mu))`.
    pub mu: f64,
    /// `n_k` for `k = 1..=M`.
    pub occupations: Vec<f64>,
    /// Realized density `sum_k n_k / M`.
    pub density: f64,
}

/// Eigenfrequencies (ascending) and orthonormal eigenvectors of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenmodeSet {
    pub omegas: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

/// Bloch energies `E_k = -J_r cos(2 pi k / M)` for `k = 1..=M`.
pub fn ring_energies(r: &ReservoirSpec) -> Vec<f64> {
    let m = r.modes as f64;
    (1..=r.modes).map(|k| -r.hopping * (2.0 * PI * k as f64 / m).cos()).collect()
}

/// `E_k - E_min` computed without cancellation near the band bottom.
fn excitation_energies(r: &ReservoirSpec) -> Vec<f64> {
    let m = r.modes as f64;
    let j = r.hopping.abs();
    (1..=r.modes)
        .map(|k| {
            let half = PI * k as f64 / m;
            if r.hopping >= 0.0 {
                2.0 * j * half.sin().powi(2)
            } else {
                2.0 * j * half.cos().powi(2)
            }
        })
        .collect()
}

fn occupations_at(excitations: &[f64], beta: f64, offset: f64) -> impl Iterator<Item = f64> + '_ {
    excitations.iter().map(move |e| 1.0 / libm::expm1(beta * (e + offset)))
}

fn density_at(excitations: &[f64], beta: f64, offset: f64) -> f64 {
    occupations_at(excitations, beta, offset).sum::<f64>() / excitations.len() as f64
}

/// Chemical potential and occupations realizing the requested density.
///
/// The density is strictly decreasing in `mu` above the band bottom, so the
/// root is bracketed by doubling and then refined by bisection.
pub fn solve_chemical_potential(r: &ReservoirSpec) -> Result<ThermalOccupations> {
    r.validate()?;
    let target = r.density;
    let exc = excitation_energies(r);
    let band_bottom = r.hopping.abs();
    let bracket_err = || Error::ChemicalPotentialBracket {
        density: target,
        beta: r.beta,
    };

    // work with x = mu - J_r > 0
    let mut lo = 1e-12;
    if density_at(&exc, r.beta, lo) < target {
        return Err(bracket_err());
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while density_at(&exc, r.beta, hi) >= target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(bracket_err());
        }
    }
    for _ in 0..400 {
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if density_at(&exc, r.beta, mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    let occupations: Vec<f64> = occupations_at(&exc, r.beta, x).collect();
    let density = occupations.iter().sum::<f64>() / r.modes as f64;
    if (density - target).abs() > 1e-10 * target {
        return Err(Error::NoConvergence("chemical potential bisection"));
    }
    Ok(ThermalOccupations {
        mu: band_bottom + x,
        occupations,
        density,
    })
}

/// Chain single-particle Hamiltonian: `delta` on the diagonal and `-J_s/2`
/// on the first off-diagonals.
pub fn chain_hamiltonian(c: &ChainSpec) -> CMatrix {
    let l = c.sites;
    let mut h = CMatrix::zeros(l, l);
    for i in 0..l {
        h[(i, i)] = Complex64::new(c.gate, 0.0);
        if i + 1 < l {
            h[(i, i + 1)] = Complex64::new(-0.5 * c.hopping, 0.0);
            h[(i + 1, i)] = Complex64::new(-0.5 * c.hopping, 0.0);
        }
    }
    h
}

/// Eigenfrequencies and eigenvectors of [`chain_hamiltonian`].
pub fn chain_eigenmodes(c: &ChainSpec) -> Result<EigenmodeSet> {
    let diag = alloc::vec![0.0; c.sites];
    let off = alloc::vec![-0.5 * c.hopping; c.sites.saturating_sub(1)];
    // diagonalize without the gate so the eigenvectors do not depend on it
    let (vals, modes) = symmetric_tridiagonal_eigen(&diag, &off)?;
    Ok(EigenmodeSet {
        omegas: vals.into_iter().map(|w| w + c.gate).collect(),
        modes,
    })
}

/// Current operator `j_{l,m} = J_s (delta_{l,m+1} - delta_{l,m-1}) / 2i`.
pub fn current_operator(sites: usize, hopping: f64) -> CMatrix {
    // J_s / (2i) = -i J_s / 2
    let v = Complex64::new(0.0, -0.5 * hopping);
    let mut j = CMatrix::zeros(sites, sites);
    for l in 0..sites {
        if l >= 1 {
            j[(l, l - 1)] = v;
        }
        if l + 1 < sites {
            j[(l, l + 1)] = -v;
        }
    }
    j
}

fn check_hermitian(rho: &CMatrix) -> Result<()> {
    let deviation = rho.hermiticity_error();
    if deviation > 1e-8 * rho.max_abs().max(1.0) {
        return Err(Error::NonHermitian { deviation });
    }
    Ok(())
}

/// Current density `Tr[rho j] / (L - 1)` for a chain density matrix.
pub fn current_from_spdm(rho: &CMatrix, c: &ChainSpec) -> Result<f64> {
    assert_eq!(rho.rows(), c.sites, "density matrix does not match the chain");
    check_hermitian(rho)?;
    let j = current_operator(c.sites, c.hopping);
    let mut tr = Complex64::new(0.0, 0.0);
    for l in 0..c.sites {
        for m in 0..c.sites {
            tr += rho[(l, m)] * j[(m, l)];
        }
    }
    Ok(tr.re / (c.sites - 1) as f64)
}

/// Bond currents `J_s Im rho_{l,l+1}` for `l = 1..L-1`.
pub fn bond_currents(rho: &CMatrix, hopping: f64) -> Vec<f64> {
    (0..rho.rows() - 1).map(|l| hopping * rho[(l, l + 1)].im).collect()
}

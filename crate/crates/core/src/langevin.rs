//! Pseudoclassical (truncated Wigner) trajectories of the chain and both
//! rings.
//!
//! Each ring mode is an Ornstein-Uhlenbeck process driven by complex noise
//! and coupled to its end site through `c = eps / (2 sqrt(M))`:
//!
//! ```text
//! db_k = -i [(E_k - i gamma/2) b_k + c a_end] dt - i sqrt(gamma n_k / 2) dxi_k
//! da_l = -i [-(J_s/2)(a_{l-1} + a_{l+1}) + delta a_l + U |a_l|^2 a_l + c sum_k b_k] dt
//! ```
//!
//! with `dxi = (g1 + i g2) sqrt(dt)`, so `<dxi dxi*> = 2 dt`. The ring sum
//! only enters the end sites. Integration is stochastic Heun with the same
//! noise increment in predictor and corrector.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ZERO};
use crate::model::{ring_energies, solve_chemical_potential, SystemSpec};

/// Amplitudes above this magnitude abort the trajectory.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Noise realization and step size of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub seed: u64,
    /// Diffuse with `n_k + 1/2` instead of `n_k`; the half quantum is then
    /// subtracted from reported occupations.
    pub vacuum_half: bool,
    pub dt: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            seed: 0,
            vacuum_half: false,
            dt: 0.01,
        }
    }
}

/// Random stream of trajectory `index`: the seed fixes a base generator and
/// trajectory `index` starts `index` jumps (of `2^128` draws each) further, so
/// streams never overlap and do not depend on scheduling.
pub fn trajectory_rng(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for _ in 0..index {
        rng.jump();
    }
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub a: Vec<Complex64>,
    pub b_left: Vec<Complex64>,
    pub b_right: Vec<Complex64>,
    pub t: f64,
}

impl TrajectoryState {
    /// Normalized ring sum `chi = sum_k b_k / sqrt(M)` of the left ring.
    pub fn chi_left(&self) -> Complex64 {
        ring_sum(&self.b_left) / (self.b_left.len() as f64).sqrt()
    }

    pub fn chi_right(&self) -> Complex64 {
        ring_sum(&self.b_right) / (self.b_right.len() as f64).sqrt()
    }

    pub fn chain_norm(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn ring_sum(b: &[Complex64]) -> Complex64 {
    b.iter().sum()
}

/// Per-ring constants of the stochastic equations.
#[derive(Debug, Clone)]
struct RingTerms {
    energies: Vec<f64>,
    sigma: Vec<f64>,
    occupations: Vec<f64>,
    half_gamma: f64,
    coupling: f64,
}

impl RingTerms {
    fn new(r: &crate::model::ReservoirSpec, eps: f64, vacuum_half: bool) -> Result<Self> {
        let th = solve_chemical_potential(r)?;
        let shift = if vacuum_half { 0.5 } else { 0.0 };
        let occupations: Vec<f64> = th.occupations.iter().map(|n| n + shift).collect();
        let sigma = occupations.iter().map(|n| (0.5 * r.relaxation * n).sqrt()).collect();
        Ok(Self {
            energies: ring_energies(r),
            sigma,
            occupations,
            half_gamma: 0.5 * r.relaxation,
            coupling: eps / (2.0 * (r.modes as f64).sqrt()),
        })
    }
}

/// Parameters of one ensemble, fixed for all its trajectories.
#[derive(Debug, Clone)]
pub struct LangevinModel {
    pub system: SystemSpec,
    pub noise: NoiseModel,
    left: RingTerms,
    right: RingTerms,
}

/// Scratch space of one integrator so that steps do not allocate.
#[derive(Debug, Clone)]
pub struct Workspace {
    noise_left: Vec<Complex64>,
    noise_right: Vec<Complex64>,
    k1: TrajectoryState,
    k2: TrajectoryState,
    pred: TrajectoryState,
}

impl LangevinModel {
    pub fn new(system: &SystemSpec, noise: NoiseModel) -> Result<Self> {
        system.validate()?;
        if !(noise.dt > 0.0) || !noise.dt.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("noise.dt = {} violates dt > 0", noise.dt)));
        }
        Ok(Self {
            left: RingTerms::new(&system.left, system.coupling, noise.vacuum_half)?,
            right: RingTerms::new(&system.right, system.coupling, noise.vacuum_half)?,
            system: system.clone(),
            noise,
        })
    }

    /// Thermal rings and an empty chain: every `b_k` is an independent
    /// circular Gaussian with `<|b_k|^2>` equal to its (possibly shifted)
    /// occupation.
    pub fn sample_initial<R: RngCore>(&self, rng: &mut R) -> TrajectoryState {
        let mut draw = |occ: &[f64]| -> Vec<Complex64> {
            occ.iter()
                .map(|n| {
                    let s = (0.5 * n).sqrt();
                    let g1: f64 = StandardNormal.sample(rng);
                    let g2: f64 = StandardNormal.sample(rng);
                    Complex64::new(s * g1, s * g2)
                })
                .collect()
        };
        let b_left = draw(&self.left.occupations);
        let b_right = draw(&self.right.occupations);
        TrajectoryState {
            a: vec![ZERO; self.system.chain.sites],
            b_left,
            b_right,
            t: 0.0,
        }
    }

    pub fn workspace(&self) -> Workspace {
        let blank = TrajectoryState {
            a: vec![ZERO; self.system.chain.sites],
            b_left: vec![ZERO; self.system.left.modes],
            b_right: vec![ZERO; self.system.right.modes],
            t: 0.0,
        };
        Workspace {
            noise_left: vec![ZERO; self.system.left.modes],
            noise_right: vec![ZERO; self.system.right.modes],
            k1: blank.clone(),
            k2: blank.clone(),
            pred: blank,
        }
    }

    fn drift(&self, x: &TrajectoryState, gate: f64, out: &mut TrajectoryState) {
        let c = &self.system.chain;
        let l = c.sites;
        let half_j = 0.5 * c.hopping;
        for i in 0..l {
            let mut h = x.a[i] * (gate + c.interaction * x.a[i].norm_sqr());
            if i > 0 {
                h -= x.a[i - 1] * half_j;
            }
            if i + 1 < l {
                h -= x.a[i + 1] * half_j;
            }
            out.a[i] = h;
        }
        out.a[0] += ring_sum(&x.b_left) * self.left.coupling;
        out.a[l - 1] += ring_sum(&x.b_right) * self.right.coupling;
        for v in out.a.iter_mut() {
            *v = Complex64::new(v.im, -v.re);
        }
        ring_drift(&self.left, &x.b_left, x.a[0], &mut out.b_left);
        ring_drift(&self.right, &x.b_right, x.a[l - 1], &mut out.b_right);
    }

    /// One stochastic Heun step at gate voltage `gate`.
    pub fn step_with_gate<R: RngCore>(&self, state: &mut TrajectoryState, gate: f64, ws: &mut Workspace, rng: &mut R) {
        let dt = self.noise.dt;
        let sq = dt.sqrt();
        fill_noise(&self.left.sigma, sq, &mut ws.noise_left, rng);
        fill_noise(&self.right.sigma, sq, &mut ws.noise_right, rng);

        self.drift(state, gate, &mut ws.k1);
        let pred = &mut ws.pred;
        euler(&state.a, &ws.k1.a, None, dt, &mut pred.a);
        euler(&state.b_left, &ws.k1.b_left, Some(&ws.noise_left), dt, &mut pred.b_left);
        euler(&state.b_right, &ws.k1.b_right, Some(&ws.noise_right), dt, &mut pred.b_right);

        self.drift(&ws.pred, gate, &mut ws.k2);
        heun(&mut state.a, &ws.k1.a, &ws.k2.a, None, dt);
        heun(&mut state.b_left, &ws.k1.b_left, &ws.k2.b_left, Some(&ws.noise_left), dt);
        heun(&mut state.b_right, &ws.k1.b_right, &ws.k2.b_right, Some(&ws.noise_right), dt);
        state.t += dt;
    }

    /// One step at the configured gate voltage.
    pub fn step<R: RngCore>(&self, state: &mut TrajectoryState, ws: &mut Workspace, rng: &mut R) {
        self.step_with_gate(state, self.system.chain.gate, ws, rng)
    }

    /// Error if any chain amplitude is non-finite or above the threshold.
    pub fn check_divergence(&self, state: &TrajectoryState, trajectory: u64, gate: f64) -> Result<()> {
        for (site, z) in state.a.iter().enumerate() {
            let magnitude = z.norm();
            if !(magnitude <= DIVERGENCE_THRESHOLD) {
                return Err(Error::Divergence {
                    trajectory,
                    t: state.t,
                    site: site + 1,
                    magnitude,
                    delta: gate,
                    u: self.system.chain.interaction,
                });
            }
        }
        Ok(())
    }

    /// Current `(1/(L-1)) sum_l J_s Im(a_l* a_{l+1})` of one sample.
    pub fn instantaneous_current(&self, state: &TrajectoryState) -> f64 {
        let l = state.a.len();
        let sum: f64 = state.a.windows(2).map(|w| (w[0].conj() * w[1]).im).sum();
        self.system.chain.hopping * sum / (l - 1) as f64
    }

    /// Offset subtracted from diagonal second moments.
    pub fn ordering_offset(&self) -> f64 {
        if self.noise.vacuum_half {
            0.5
        } else {
            0.0
        }
    }

    fn steps(&self, duration: f64) -> usize {
        (duration / self.noise.dt).round() as usize
    }

    /// Runs trajectory `index` and returns its time averages over
    /// `[t_transient, t_transient + t_average]`.
    pub fn run_trajectory(&self, index: u64, t_transient: f64, t_average: f64) -> Result<TrajectorySummary> {
        let mut rng = trajectory_rng(self.noise.seed, index);
        let mut ws = self.workspace();
        let mut state = self.sample_initial(&mut rng);
        let gate = self.system.chain.gate;
        for _ in 0..self.steps(t_transient) {
            self.step(&mut state, &mut ws, &mut rng);
        }
        self.check_divergence(&state, index, gate)?;
        let n = self.steps(t_average).max(1);
        let l = state.a.len();
        let mut current = 0.0;
        let mut coherence = CMatrix::zeros(l, l);
        for step in 0..n {
            self.step(&mut state, &mut ws, &mut rng);
            if step % 256 == 255 {
                self.check_divergence(&state, index, gate)?;
            }
            current += self.instantaneous_current(&state);
            let acc = coherence.as_mut_slice();
            for i in 0..l {
                let ai = state.a[i].conj();
                for j in 0..l {
                    acc[i * l + j] += ai * state.a[j];
                }
            }
        }
        self.check_divergence(&state, index, gate)?;
        let inv = 1.0 / n as f64;
        Ok(TrajectorySummary {
            current: current * inv,
            coherence: coherence.scale_real(inv),
        })
    }

    /// Records `samples` snapshots every `stride` steps after `t_transient`.
    pub fn record(&self, index: u64, t_transient: f64, samples: usize, stride: usize) -> Result<Recording> {
        let mut rng = trajectory_rng(self.noise.seed, index);
        let mut ws = self.workspace();
        let mut state = self.sample_initial(&mut rng);
        let gate = self.system.chain.gate;
        for _ in 0..self.steps(t_transient) {
            self.step(&mut state, &mut ws, &mut rng);
        }
        let l = state.a.len();
        let mut rec = Recording {
            dt: self.noise.dt * stride.max(1) as f64,
            t: Vec::with_capacity(samples),
            sites: vec![Vec::with_capacity(samples); l],
            chi_left: Vec::with_capacity(samples),
            chi_right: Vec::with_capacity(samples),
        };
        for _ in 0..samples {
            for _ in 0..stride.max(1) {
                self.step(&mut state, &mut ws, &mut rng);
            }
            self.check_divergence(&state, index, gate)?;
            rec.t.push(state.t);
            for (site, z) in rec.sites.iter_mut().zip(&state.a) {
                site.push(*z);
            }
            rec.chi_left.push(state.chi_left());
            rec.chi_right.push(state.chi_right());
        }
        Ok(rec)
    }

    /// Runs trajectory `index` through a linear gate ramp and returns the
    /// time-averaged current in each of `sweep.bins` equal slices of the ramp.
    pub fn run_sweep_trajectory(&self, index: u64, sweep: &GateSweep) -> Result<Vec<f64>> {
        let mut rng = trajectory_rng(self.noise.seed, index);
        let mut ws = self.workspace();
        let mut state = self.sample_initial(&mut rng);
        for _ in 0..self.steps(sweep.t_transient) {
            self.step_with_gate(&mut state, sweep.delta_min, &mut ws, &mut rng);
        }
        self.check_divergence(&state, index, sweep.delta_min)?;
        let total = self.steps(sweep.duration).max(sweep.bins);
        let mut sums = vec![0.0; sweep.bins];
        let mut counts = vec![0usize; sweep.bins];
        for step in 0..total {
            let frac = (step as f64 + 0.5) / total as f64;
            let gate = sweep.delta_min + (sweep.delta_max - sweep.delta_min) * frac;
            self.step_with_gate(&mut state, gate, &mut ws, &mut rng);
            if step % 256 == 255 {
                self.check_divergence(&state, index, gate)?;
            }
            let bin = ((frac * sweep.bins as f64) as usize).min(sweep.bins - 1);
            sums[bin] += self.instantaneous_current(&state);
            counts[bin] += 1;
        }
        self.check_divergence(&state, index, sweep.delta_max)?;
        Ok(sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect())
    }
}

fn ring_drift(r: &RingTerms, b: &[Complex64], end: Complex64, out: &mut [Complex64]) {
    let ca = end * r.coupling;
    for ((o, bk), e) in out.iter_mut().zip(b).zip(&r.energies) {
        // -i [(E - i gamma/2) b + c a]
        let inner = Complex64::new(e * bk.re + r.half_gamma * bk.im + ca.re, e * bk.im - r.half_gamma * bk.re + ca.im);
        *o = Complex64::new(inner.im, -inner.re);
    }
}

/// `-i sigma_k dxi_k` for every mode.
fn fill_noise<R: RngCore>(sigma: &[f64], sqrt_dt: f64, out: &mut [Complex64], rng: &mut R) {
    for (o, s) in out.iter_mut().zip(sigma) {
        let g1: f64 = StandardNormal.sample(rng);
        let g2: f64 = StandardNormal.sample(rng);
        let k = s * sqrt_dt;
        // -i (g1 + i g2) = g2 - i g1
        *o = Complex64::new(k * g2, -k * g1);
    }
}

fn euler(x: &[Complex64], f: &[Complex64], noise: Option<&[Complex64]>, dt: f64, out: &mut [Complex64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = x[i] + f[i] * dt;
    }
    if let Some(n) = noise {
        for (o, w) in out.iter_mut().zip(n) {
            *o += w;
        }
    }
}

fn heun(x: &mut [Complex64], f1: &[Complex64], f2: &[Complex64], noise: Option<&[Complex64]>, dt: f64) {
    let h = 0.5 * dt;
    for (i, v) in x.iter_mut().enumerate() {
        *v += (f1[i] + f2[i]) * h;
    }
    if let Some(n) = noise {
        for (v, w) in x.iter_mut().zip(n) {
            *v += w;
        }
    }
}

/// Time averages of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub current: f64,
    /// `<a_l* a_m>` averaged over the window.
    pub coherence: CMatrix,
}

/// Sampled trajectory for spectral analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub dt: f64,
    pub t: Vec<f64>,
    pub sites: Vec<Vec<Complex64>>,
    pub chi_left: Vec<Complex64>,
    pub chi_right: Vec<Complex64>,
}

/// Mergeable running mean and variance (Welford, combined pairwise by
/// Chan's formula).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.count as f64 * other.count as f64) / n as f64;
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Streaming accumulation of trajectory summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    sites: usize,
    offset: f64,
    current: RunningStats,
    /// Real and imaginary parts of every coherence element.
    coherence: Vec<RunningStats>,
}

impl EnsembleAccumulator {
    pub fn new(sites: usize, offset: f64) -> Self {
        Self {
            sites,
            offset,
            current: RunningStats::default(),
            coherence: vec![RunningStats::default(); 2 * sites * sites],
        }
    }

    pub fn for_model(model: &LangevinModel) -> Self {
        Self::new(model.system.chain.sites, model.ordering_offset())
    }

    pub fn push(&mut self, s: &TrajectorySummary) {
        self.current.push(s.current);
        for (i, z) in s.coherence.as_slice().iter().enumerate() {
            self.coherence[2 * i].push(z.re);
            self.coherence[2 * i + 1].push(z.im);
        }
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        self.current.merge(&other.current);
        for (a, b) in self.coherence.iter_mut().zip(&other.coherence) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.current.count()
    }

    pub fn finish(&self) -> Result<EnsembleResult> {
        let n = self.current.count();
        if n < 2 {
            return Err(Error::InvalidParameter(alloc::format!(
                "ensemble of {n} trajectories; need at least 2"
            )));
        }
        let l = self.sites;
        let mut coherence = CMatrix::zeros(l, l);
        let mut coherence_stderr = CMatrix::zeros(l, l);
        for i in 0..l * l {
            let (re, im) = (&self.coherence[2 * i], &self.coherence[2 * i + 1]);
            coherence.as_mut_slice()[i] = Complex64::new(re.mean(), im.mean());
            coherence_stderr.as_mut_slice()[i] = Complex64::new(re.std_error(), im.std_error());
        }
        for i in 0..l {
            coherence.as_mut_slice()[i * l + i] -= Complex64::new(self.offset, 0.0);
        }
        let occupations = (0..l).map(|i| coherence[(i, i)].re).collect();
        let occupation_stderr = (0..l).map(|i| coherence_stderr[(i, i)].re).collect();
        Ok(EnsembleResult {
            mean_current: self.current.mean(),
            std_error: self.current.std_error(),
            n_realizations: n,
            occupations,
            occupation_stderr,
            coherence,
            coherence_stderr,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub mean_current: f64,
    pub std_error: f64,
    pub n_realizations: u64,
    pub occupations: Vec<f64>,
    pub occupation_stderr: Vec<f64>,
    /// Ensemble estimate of the chain density matrix.
    pub coherence: CMatrix,
    /// Standard errors of the real and imaginary parts, element-wise.
    pub coherence_stderr: CMatrix,
}

/// Stationary current from `n_traj` trajectories run one after another.
pub fn estimate_current(s: &SystemSpec, n_traj: u64, t_transient: f64, t_average: f64, noise: NoiseModel) -> Result<EnsembleResult> {
    if !(t_average > 0.0) || !(t_transient >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "averaging window [{t_transient}, +{t_average}] is empty"
        )));
    }
    let model = LangevinModel::new(s, noise)?;
    let mut acc = EnsembleAccumulator::for_model(&model);
    for index in 0..n_traj {
        acc.push(&model.run_trajectory(index, t_transient, t_average)?);
    }
    acc.finish()
}

/// Linear gate ramp from `delta_min` to `delta_max` over `duration`,
/// preceded by `t_transient` at `delta_min`, and binned into `bins` slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSweep {
    pub delta_min: f64,
    pub delta_max: f64,
    pub duration: f64,
    pub t_transient: f64,
    pub bins: usize,
}

impl GateSweep {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || self.bins == 0 || !(self.delta_max > self.delta_min) || !(self.t_transient >= 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "gate sweep {self:?} needs duration > 0, bins > 0 and delta_max > delta_min"
            )));
        }
        Ok(())
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.delta_min + (self.delta_max - self.delta_min) * (bin as f64 + 0.5) / self.bins as f64
    }
}

/// One point of a swept current curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub delta: f64,
    pub j_mean: f64,
    pub j_stderr: f64,
}

/// Bin-wise ensemble statistics of a gate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAccumulator {
    bins: Vec<RunningStats>,
}

impl SweepAccumulator {
    pub fn new(bins: usize) -> Self {
        Self {
            bins: vec![RunningStats::default(); bins],
        }
    }

    pub fn push(&mut self, values: &[f64]) {
        for (b, v) in self.bins.iter_mut().zip(values) {
            b.push(*v);
        }
    }

    pub fn merge(&mut self, other: &SweepAccumulator) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
    }

    pub fn finish(&self, sweep: &GateSweep) -> Vec<SweepPoint> {
        self.bins
            .iter()
            .enumerate()
            .map(|(i, b)| SweepPoint {
                delta: sweep.bin_center(i),
                j_mean: b.mean(),
                j_stderr: b.std_error(),
            })
            .collect()
    }
}

/// Current versus instantaneous gate voltage along a slow linear ramp.
pub fn gate_sweep(s: &SystemSpec, sweep: &GateSweep, n_traj: u64, noise: NoiseModel) -> Result<Vec<SweepPoint>> {
    sweep.validate()?;
    let model = LangevinModel::new(s, noise)?;
    let mut acc = SweepAccumulator::new(sweep.bins);
    for index in 0..n_traj {
        acc.push(&model.run_sweep_trajectory(index, sweep)?);
    }
    Ok(acc.finish(sweep))
}

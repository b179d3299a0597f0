//! Spectral densities of recorded signals and steady-state detection.
//!
//! Spectra use the Welch estimate: Hann-windowed segments with 50% overlap,
//! transformed with the phase convention `X(nu) = sum_n x_n e^{+i nu t_n}` so
//! that `e^{-i nu0 t}` peaks at `nu0`. The normalization
//! `P(nu) = dt |X(nu)|^2 / sum_n w_n^2` makes `(1/2pi) int P dnu` equal to the
//! mean of `|x|^2`, and a damped mode with `<|b|^2> = n` and decay `gamma/2`
//! shows up as `n gamma / ((nu - E)^2 + gamma^2/4)`.

use std::f64::consts::PI;

use bosechain_core::langevin::Recording;
use bosechain_core::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Two-sided power spectrum on an ascending angular-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub nu_grid: Vec<f64>,
    pub power: Vec<f64>,
    pub n_segments: usize,
    pub dt: f64,
    pub t_total: f64,
}

impl SpectrumRecord {
    /// Bin spacing `2 pi / t_segment`.
    pub fn resolution(&self) -> f64 {
        self.nu_grid.get(1).map_or(f64::NAN, |v| v - self.nu_grid[0])
    }

    /// `(1/2pi) int P dnu` by the rectangle rule on the bin grid.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution() / (2.0 * PI)
    }

    /// Index of the largest bin.
    pub fn peak_index(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }

    /// Bins that exceed both neighbours and `floor * max(P)`.
    pub fn local_maxima(&self, floor: f64) -> Vec<usize> {
        let p = &self.power;
        let cut = floor * p[self.peak_index()];
        (1..p.len().saturating_sub(1))
            .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] >= cut)
            .collect()
    }

    /// Full width at half maximum of the peak at `index`, with linear
    /// interpolation of the half-height crossings.
    pub fn fwhm(&self, index: usize) -> f64 {
        let p = &self.power;
        let half = 0.5 * p[index];
        let mut lo = index;
        while lo > 0 && p[lo] > half {
            lo -= 1;
        }
        let mut hi = index;
        while hi + 1 < p.len() && p[hi] > half {
            hi += 1;
        }
        let cross = |a: usize, b: usize| {
            let (pa, pb) = (p[a], p[b]);
            if pa == pb {
                self.nu_grid[a]
            } else {
                self.nu_grid[a] + (half - pa) / (pb - pa) * (self.nu_grid[b] - self.nu_grid[a])
            }
        };
        let left = if lo == index { self.nu_grid[index] } else { cross(lo, lo + 1) };
        let right = if hi == index { self.nu_grid[index] } else { cross(hi, hi - 1) };
        right - left
    }

    /// Fraction of the total power inside `[lo, hi]`.
    pub fn power_fraction(&self, lo: f64, hi: f64) -> f64 {
        let total: f64 = self.power.iter().sum();
        let inside: f64 = self
            .nu_grid
            .iter()
            .zip(&self.power)
            .filter(|(nu, _)| **nu >= lo && **nu <= hi)
            .map(|(_, p)| p)
            .sum();
        inside / total
    }

    /// Power interpolated at the bin nearest to `nu`.
    pub fn power_at(&self, nu: f64) -> f64 {
        let i = ((nu - self.nu_grid[0]) / self.resolution())
            .round()
            .clamp(0.0, (self.power.len() - 1) as f64) as usize;
        self.power[i]
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos())).collect()
}

/// Welch estimate of the two-sided spectrum of a complex signal sampled at
/// spacing `dt`, averaged over `n_segments` Hann-windowed half-overlapping
/// segments.
pub fn spectral_density(signal: &[Complex64], dt: f64, n_segments: usize) -> Result<SpectrumRecord> {
    if n_segments == 0 || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spectral estimate needs n_segments > 0 and dt > 0, got {n_segments} and {dt}"
        )));
    }
    let needed = 2 * n_segments.max(2);
    if signal.len() < needed {
        return Err(Error::SignalTooShort { len: signal.len(), needed });
    }
    let seg = 2 * signal.len() / (n_segments + 1);
    let hop = seg / 2;
    let window = hann(seg);
    let norm: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_inverse(seg);
    let mut acc = vec![0.0; seg];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    for s in 0..n_segments {
        let start = s * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = signal[start + i] * window[i];
        }
        // the unnormalized inverse transform carries e^{+2 pi i k n / N}
        fft.process(&mut buf);
        for (a, x) in acc.iter_mut().zip(&buf) {
            *a += x.norm_sqr();
        }
    }
    let scale = dt / (norm * n_segments as f64);
    let dnu = 2.0 * PI / (seg as f64 * dt);
    let positive = seg.div_ceil(2);
    let nu_grid: Vec<f64> = (0..seg)
        .map(|k| if k < positive { k as f64 } else { k as f64 - seg as f64 } * dnu)
        .collect();
    let power: Vec<f64> = acc.iter().map(|a| a * scale).collect();
    let order = argsort(&nu_grid);
    Ok(SpectrumRecord {
        nu_grid: order.iter().map(|&i| nu_grid[i]).collect(),
        power: order.iter().map(|&i| power[i]).collect(),
        n_segments,
        dt,
        t_total: signal.len() as f64 * dt,
    })
}

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    idx
}

/// Point-wise mean of spectra computed on the same grid.
pub fn average_spectra(records: &[SpectrumRecord]) -> Result<SpectrumRecord> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParameter("no spectra to average".into()))?;
    let mut out = first.clone();
    for r in &records[1..] {
        if r.nu_grid.len() != first.nu_grid.len() {
            return Err(Error::InvalidParameter("spectra are on different grids".into()));
        }
        for (o, p) in out.power.iter_mut().zip(&r.power) {
            *o += p;
        }
        out.n_segments += r.n_segments;
    }
    let n = records.len() as f64;
    out.power.iter_mut().for_each(|p| *p /= n);
    Ok(out)
}

/// Spectra of the chain amplitudes `a_l(t)` for 1-based `sites`.
pub fn site_spectra(rec: &Recording, sites: &[usize], n_segments: usize) -> Result<Vec<SpectrumRecord>> {
    sites
        .iter()
        .map(|&site| {
            let series = site
                .checked_sub(1)
                .and_then(|i| rec.sites.get(i))
                .ok_or_else(|| Error::InvalidParameter(format!("site {site} is outside 1..={}", rec.sites.len())))?;
            spectral_density(series, rec.dt, n_segments)
        })
        .collect()
}

/// Result of [`steady_window`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub t_transient: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Splits `series` into `n_windows` equal windows and finds the earliest one
/// from which all successive window means differ by less than
/// `rel_tol * scale`, where `scale` is the magnitude of the tail mean (or the
/// series RMS when that mean vanishes). The tail average is returned with a
/// standard error from its window means, which absorbs autocorrelation
/// shorter than a window.
pub fn steady_window(series: &[f64], dt: f64, rel_tol: f64, n_windows: usize) -> Result<SteadyState> {
    if n_windows < 3 || series.len() < n_windows {
        return Err(Error::SignalTooShort {
            len: series.len(),
            needed: n_windows.max(3),
        });
    }
    let w = series.len() / n_windows;
    let means: Vec<f64> = (0..n_windows)
        .map(|i| series[i * w..(i + 1) * w].iter().sum::<f64>() / w as f64)
        .collect();
    let rms = (series.iter().map(|x| x * x).sum::<f64>() / series.len() as f64).sqrt();
    for start in 0..=n_windows - 3 {
        let tail = &means[start..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let scale = if mean.abs() > 1e-12 * rms { mean.abs() } else { rms };
        if tail.windows(2).all(|p| (p[1] - p[0]).abs() <= rel_tol * scale) {
            let var = tail.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (tail.len() - 1) as f64;
            return Ok(SteadyState {
                t_transient: (start * w) as f64 * dt,
                mean,
                stderr: (var / tail.len() as f64).sqrt(),
            });
        }
    }
    Err(Error::NotSettled { rel_tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(nu0: f64, dt: f64, n: usize) -> Vec<Complex64> {
        (0..n).map(|i| Complex64::new(0.0, -nu0 * i as f64 * dt).exp()).collect()
    }

    #[test]
    fn grid_is_ascending_and_uniform() {
        for n in [64usize, 65, 100] {
            let rec = spectral_density(&tone(0.3, 0.5, n), 0.5, 1).unwrap();
            let d = rec.resolution();
            assert!(rec.nu_grid.windows(2).all(|w| (w[1] - w[0] - d).abs() < 1e-12));
            assert!(rec.nu_grid.contains(&0.0));
        }
    }

    #[test]
    fn single_tone_peaks_at_its_frequency() {
        let dt = 0.25;
        let rec = spectral_density(&tone(0.75, dt, 4096), dt, 4).unwrap();
        let peak = rec.nu_grid[rec.peak_index()];
        assert!((peak - 0.75).abs() <= rec.resolution(), "{peak}");
    }

    #[test]
    fn short_signal_rejected() {
        assert!(matches!(
            spectral_density(&tone(0.1, 1.0, 7), 1.0, 4),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn parseval_and_phase_invariance() {
        let dt = 0.1;
        let x: Vec<Complex64> = (0..3000)
            .map(|i| {
                let t = i as f64 * dt;
                Complex64::new(0.0, -0.4 * t).exp() * 1.5 + Complex64::new(0.0, 1.1 * t).exp() * 0.5
            })
            .collect();
        let rec = spectral_density(&x, dt, 5).unwrap();
        let mean_sq = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!((rec.total_power() / mean_sq - 1.0).abs() < 0.01);
        let rotated: Vec<Complex64> = x.iter().map(|z| z * Complex64::new(0.0, 0.8).exp()).collect();
        let rec2 = spectral_density(&rotated, dt, 5).unwrap();
        for (a, b) in rec.power.iter().zip(&rec2.power) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn steady_window_on_constant_series() {
        let s = steady_window(&[2.5; 100], 0.1, 1e-6, 10).unwrap();
        assert_eq!(s.t_transient, 0.0);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.stderr, 0.0);
    }

    #[test]
    fn steady_window_on_relaxation() {
        let dt = 0.01;
        let tau = 2.0;
        let series: Vec<f64> = (0..20_000).map(|i| 3.0 * (1.0 - (-(i as f64) * dt / tau).exp())).collect();
        let s = steady_window(&series, dt, 1e-3, 20).unwrap();
        assert!(s.t_transient >= 2.0 * tau && s.t_transient <= 10.0 * tau, "{}", s.t_transient);
        assert!((s.mean - 3.0).abs() < 3e-3);
    }

    #[test]
    fn steady_window_reports_unsettled_series() {
        let series: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert!(matches!(steady_window(&series, 1.0, 1e-3, 10), Err(Error::NotSettled { .. })));
    }
}

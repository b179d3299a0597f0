//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits 0 after reporting, so the workspace test run completes even when a
//! criterion fails; set `BOSECHAIN_ACCEPTANCE_STRICT=1` to exit 1 instead.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use bosechain::analysis::{average_spectra, site_spectra, spectral_density, SpectrumRecord};
use bosechain::config::{emit, parse_config, Config, Method, SweepAxis};
use bosechain::core::born_markov::{analytic_current, born_stationary, markov_stationary, propagate_markov};
use bosechain::core::exact::{build_total_generator, chain_block, stationary, stationary_report};
use bosechain::core::langevin::{GateSweep, LangevinModel, NoiseModel, SweepPoint};
use bosechain::core::linalg::CMatrix;
use bosechain::core::model::{bond_currents, chain_eigenmodes, current_from_spdm, ChainSpec, SystemSpec};
use bosechain::runner::{expected_peaks, langevin_point, parallel_gate_sweep};
use rayon::prelude::*;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Transport setup shared by most criteria: `L = 5`, `J_s = 1`, `M = 200`,
/// `n_L = 1`, `n_R = 0.1`.
fn transport(gamma: f64, beta: f64, eps: f64) -> SystemSpec {
    SystemSpec::two_rings(gamma, beta, 1.0, 0.1, eps)
}

fn exact_current(s: &SystemSpec) -> f64 {
    let r = stationary_report(s).expect("exact stationary state");
    assert!(r.residual < 1e-8, "exact residual {:.2e}", r.residual);
    r.current
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b) / b
}

fn markov_limit() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for rate in [0.1, 0.5, 1.0, 2.0] {
        let start = Instant::now();
        let s = transport(0.16 / rate, 0.1, 0.4);
        let want = analytic_current(&s).unwrap();
        let mut rho = CMatrix::zeros(5, 5);
        let mut prev = f64::NAN;
        let mut t = 0.0;
        let j = loop {
            t += 25.0;
            rho = propagate_markov(&s, &rho, &[25.0]).unwrap().pop().unwrap();
            let j = current_from_spdm(&rho, &s.chain).unwrap();
            if (j - prev).abs() < 1e-10 * j.abs() || t > 5000.0 {
                break j;
            }
            prev = j;
        };
        let secs = start.elapsed().as_secs_f64();
        let e = rel(j, want).abs();
        ok &= e < 1e-6 && secs < 10.0;
        parts.push(format!("rate {rate}: rel err {e:.1e} at t = {t} in {secs:.2} s"));
    }
    outcome(ok, parts.join("; "))
}

fn langevin_oracle() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut cfg = Config::default();
    cfg.plan.method = Method::Langevin;
    cfg.plan.seed = 20_240_601;
    cfg.plan.langevin.trajectories = 2000;
    cfg.plan.langevin.t_transient = 200.0;
    cfg.plan.langevin.t_average = 100.0;
    cfg.plan.langevin.dt = 0.02;
    for beta in [0.1, 10.0] {
        let s = transport(0.1, beta, 0.4);
        let exact = exact_current(&s);
        let r = langevin_point(&s, &cfg.plan).expect("langevin ensemble");
        let err = r.stderr.unwrap();
        let z = (r.current - exact) / err;
        ok &= z.abs() <= 3.0;
        parts.push(format!(
            "beta {beta}: exact {exact:.5e}, langevin {:.5e} +- {err:.1e} ({z:+.2} sigma)",
            r.current
        ));
    }
    outcome(ok, parts.join("; "))
}

fn large_gamma() -> Outcome {
    let gammas: Vec<f64> = (0..9).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.1, 10.0] {
        let currents: Vec<f64> = gammas.par_iter().map(|g| exact_current(&transport(*g, beta, 0.4))).collect();
        let at = |g: f64| currents[gammas.iter().position(|x| (x - g).abs() < 1e-9 * g).unwrap()];
        let markov = analytic_current(&transport(10.0, beta, 0.4)).unwrap();
        let high = rel(at(10.0), markov);
        let max = currents.iter().cloned().fold(f64::MIN, f64::max);
        let low = at(0.01) / max;
        ok &= high.abs() <= 0.15 && low < 0.2;
        parts.push(format!(
            "beta {beta}: j(10) vs closed form {:+.1}%, j(0.01)/max {:.1}%",
            100.0 * high,
            100.0 * low
        ));
    }
    outcome(ok, parts.join("; "))
}

fn temperature_step() -> Outcome {
    let hot = exact_current(&transport(0.1, 0.1, 0.4));
    let cold = exact_current(&transport(0.1, 10.0, 0.4));
    let ratio = hot / cold;
    outcome(
        ratio >= 5.0,
        format!("j(beta 0.1) = {hot:.4e}, j(beta 10) = {cold:.4e}, ratio {ratio:.2} (floor 5)"),
    )
}

fn local_maxima(points: &[SweepPoint]) -> Vec<f64> {
    (1..points.len() - 1)
        .filter(|&i| points[i].j_mean > points[i - 1].j_mean && points[i].j_mean >= points[i + 1].j_mean)
        .map(|i| points[i].delta)
        .collect()
}

fn resonances() -> Outcome {
    let base = transport(0.2, 10.0, 0.4);
    let n = 161;
    let points: Vec<SweepPoint> = (0..n)
        .into_par_iter()
        .map(|i| {
            let delta = -3.0 + 4.0 * i as f64 / (n - 1) as f64;
            let mut s = base.clone();
            s.chain.gate = delta;
            SweepPoint {
                delta,
                j_mean: exact_current(&s),
                j_stderr: 0.0,
            }
        })
        .collect();
    let maxima = local_maxima(&points);
    let expected = expected_peaks(&base).unwrap();
    let mut ok = maxima.len() == expected.len();
    let mut worst: f64 = 0.0;
    if ok {
        for (m, e) in maxima.iter().zip(&expected) {
            worst = worst.max((m - e).abs());
        }
        ok = worst <= 0.15;
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    outcome(
        ok,
        format!(
            "maxima [{}] vs expected [{}], worst offset {worst:.3}",
            fmt(&maxima),
            fmt(&expected)
        ),
    )
}

fn non_markovian() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let cases: Vec<(f64, f64)> = [0.1, 10.0].iter().flat_map(|b| [0.2, 1.0, 5.0].map(|g| (g, *b))).collect();
    let results: Vec<(f64, f64, f64, f64)> = cases
        .par_iter()
        .map(|&(g, b)| {
            let s = transport(g, b, 0.4);
            let exact = exact_current(&s);
            let born = born_stationary(&s).expect("Born fixed point").current;
            (g, b, exact, born)
        })
        .collect();
    for (g, b, exact, born) in results {
        let e = rel(born, exact);
        ok &= e.abs() <= 0.2;
        parts.push(format!("Born gamma {g} beta {b}: {:+.1}%", 100.0 * e));
    }
    let s = transport(0.2, 10.0, 0.4);
    let exact = exact_current(&s);
    let markov = current_from_spdm(&markov_stationary(&s).unwrap(), &s.chain).unwrap();
    let e = rel(markov, exact);
    ok &= e.abs() > 0.2;
    parts.push(format!("Markov gamma 0.2 beta 10: {:+.0}%", 100.0 * e));
    outcome(ok, parts.join("; "))
}

/// Relative total variation of the 3-bin smoothed curve and its
/// current-weighted gate centroid, both inside `[lo, hi]`.
fn ramp_shape(points: &[SweepPoint], lo: f64, hi: f64) -> (f64, f64) {
    let j: Vec<f64> = points.iter().map(|p| p.j_mean).collect();
    let smooth: Vec<f64> = (0..j.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(j.len() - 1));
            j[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
        })
        .collect();
    let inside: Vec<usize> = (0..j.len()).filter(|&i| points[i].delta >= lo && points[i].delta <= hi).collect();
    let max = inside.iter().map(|&i| smooth[i]).fold(f64::MIN, f64::max);
    let tv: f64 = inside.windows(2).map(|w| (smooth[w[1]] - smooth[w[0]]).abs()).sum();
    let weight: f64 = inside.iter().map(|&i| j[i]).sum();
    let centroid = inside.iter().map(|&i| j[i] * points[i].delta).sum::<f64>() / weight;
    (tv / max, centroid)
}

fn interaction_fading() -> Outcome {
    let sweep = GateSweep {
        delta_min: -3.0,
        delta_max: 1.0,
        duration: 3000.0,
        t_transient: 200.0,
        bins: 40,
    };
    let noise = NoiseModel {
        seed: 7,
        vacuum_half: false,
        dt: 0.02,
    };
    let base = transport(0.2, 10.0, 0.4);
    let peaks = expected_peaks(&base).unwrap();
    let (lo, hi) = (peaks[0] - 0.3, peaks[peaks.len() - 1] + 0.3);
    let mut shapes = Vec::new();
    for g in [0.0, 0.1] {
        let mut s = base.clone();
        s.set_macroscopic_interaction(g);
        let points = parallel_gate_sweep(&s, &sweep, 80, noise).expect("gate ramp");
        shapes.push(ramp_shape(&points, lo, hi));
    }
    let (c0, x0) = shapes[0];
    let (c1, x1) = shapes[1];
    outcome(
        c1 < c0 && x1 < x0,
        format!("contrast g=0 {c0:.3} vs g=0.1 {c1:.3}; centroid g=0 {x0:.3} vs g=0.1 {x1:.3}"),
    )
}

fn record_spectra(
    s: &SystemSpec,
    trajectories: u64,
    samples: usize,
    stride: usize,
    segments: usize,
    sites: &[usize],
) -> (SpectrumRecord, Vec<SpectrumRecord>, f64) {
    let model = LangevinModel::new(
        s,
        NoiseModel {
            seed: 99,
            vacuum_half: false,
            dt: 0.02,
        },
    )
    .unwrap();
    let per: Vec<(SpectrumRecord, Vec<SpectrumRecord>, f64)> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let rec = model.record(i, 200.0, samples, stride).unwrap();
            let chi = spectral_density(&rec.chi_left, rec.dt, segments).unwrap();
            let mean_sq = rec.chi_left.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples as f64;
            (chi, site_spectra(&rec, sites, segments).unwrap(), mean_sq)
        })
        .collect();
    let chi = average_spectra(&per.iter().map(|p| p.0.clone()).collect::<Vec<_>>()).unwrap();
    let site = (0..sites.len())
        .map(|k| average_spectra(&per.iter().map(|p| p.1[k].clone()).collect::<Vec<_>>()).unwrap())
        .collect();
    // Ensemble mean-square of the signal against the integrated spectrum.
    let mean_sq = per.iter().map(|p| p.2).sum::<f64>() / per.len() as f64;
    let parseval = chi.total_power() / mean_sq - 1.0;
    (chi, site, parseval)
}

fn spectra() -> Outcome {
    let gamma = 0.1;
    let mut ok = true;
    let mut parts = Vec::new();

    let (cold, _, _) = record_spectra(&transport(gamma, 10.0, 0.4), 8, 9216, 25, 8, &[]);
    let k = cold.peak_index();
    let (peak, fwhm) = (cold.nu_grid[k], cold.fwhm(k));
    let cold_ok = (peak + 1.0).abs() <= gamma && (0.5 * gamma..=4.0 * gamma).contains(&fwhm);
    ok &= cold_ok;
    parts.push(format!("chi beta 10: peak {peak:.4}, FWHM {fwhm:.4}"));

    let (hot, sites, _) = record_spectra(&transport(gamma, 0.1, 0.4), 8, 25_600, 10, 64, &[1, 5]);
    let eighths: Vec<f64> = (0..8)
        .map(|i| hot.power_fraction(-1.0 + 0.25 * i as f64, -0.75 + 0.25 * i as f64))
        .collect();
    let band = hot.power_fraction(-1.0 - 5.0 * gamma, 1.0 + 5.0 * gamma);
    let hot_ok = band >= 0.9 && eighths.iter().all(|f| *f >= 0.02);
    ok &= hot_ok;
    parts.push(format!(
        "chi beta 0.1: {:.0}% in band, smallest eighth {:.1}%",
        100.0 * band,
        100.0 * eighths.iter().cloned().fold(f64::MAX, f64::min)
    ));

    let omegas = chain_eigenmodes(&ChainSpec::default()).unwrap().omegas;
    for (site, rec) in [1, 5].iter().zip(&sites) {
        let maxima = rec.local_maxima(0.01);
        let offsets: Vec<f64> = omegas
            .iter()
            .map(|w| maxima.iter().map(|&i| (rec.nu_grid[i] - w).abs()).fold(f64::MAX, f64::min) / rec.resolution())
            .collect();
        let site_ok = offsets.iter().all(|o| *o <= 1.0);
        ok &= site_ok;
        parts.push(format!(
            "site {site}: peak offsets [{}] bins",
            offsets.iter().map(|o| format!("{o:.1}")).collect::<Vec<_>>().join(", ")
        ));
    }
    outcome(ok, parts.join("; "))
}

fn superposition() -> (bool, String) {
    let s = transport(0.5, 1.0, 0.4);
    let gen = build_total_generator(&s).unwrap();
    let right = gen.layout.right_start();
    let current = |scale_left: f64, scale_right: f64| {
        let mut g = gen.clone();
        for (i, q) in g.injection.iter_mut().enumerate() {
            *q *= if i < right { scale_left } else { scale_right };
        }
        current_from_spdm(&chain_block(&g.layout, &stationary(&g).unwrap()), &s.chain).unwrap()
    };
    let both = current(1.0, 1.0);
    let left = current(1.0, 0.0);
    let right_only = current(0.0, 1.0);
    let e = rel(left + right_only, both).abs();
    (e < 1e-8, format!("superposition {e:.1e}"))
}

fn bond_uniformity() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for (g, b) in [(0.1, 0.1), (1.0, 10.0), (5.0, 1.0)] {
        let s = transport(g, b, 0.4);
        let r = stationary_report(&s).unwrap();
        let bonds = bond_currents(&r.chain_rho, s.chain.hopping);
        let mean = bonds.iter().sum::<f64>() / bonds.len() as f64;
        worst = worst.max(bonds.iter().map(|x| ((x - mean) / mean).abs()).fold(0.0, f64::max));
    }
    (worst < 1e-8, format!("bond spread {worst:.1e}"))
}

fn eigen_closed_form() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for sites in [2, 3, 5, 10, 40] {
        for (hopping, gate) in [(1.0, 0.0), (0.7, -1.3)] {
            let c = ChainSpec {
                sites,
                hopping,
                gate,
                interaction: 0.0,
            };
            let mut got = chain_eigenmodes(&c).unwrap().omegas;
            got.sort_by(f64::total_cmp);
            let mut want: Vec<f64> = (1..=sites)
                .map(|k| gate - hopping * (PI * k as f64 / (sites + 1) as f64).cos())
                .collect();
            want.sort_by(f64::total_cmp);
            worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    (worst < 1e-10, format!("eigenvalue error {worst:.1e}"))
}

fn round_trip() -> (bool, String) {
    let texts = [
        "chain.L = 5\nleft.gamma = 0.1\nright.gamma = 0.1\nleft.beta = 0.1\nright.beta = 0.1\nepsilon = 0.4\n",
        "method = langevin\nchain.g = 0.1\nresonance.g = 0, 0.05, 0.1\nseed = 42\nlangevin.dt = 0.015\n",
        "method = born\nborn.dt = 0.01\nsweep.gamma = logspace(-2, 2, 9)\nsweep.beta = 0.1, 1, 10\noutput = grid.csv\n",
    ];
    let mut ok = true;
    for t in texts {
        let c = parse_config(t).unwrap();
        ok &= parse_config(&emit(&c)).unwrap() == c;
    }
    let mut c = Config::default();
    c.system.left.relaxation = 0.1 + 0.2;
    c.system.coupling = 1.0 / 3.0;
    c.plan.axes.push(SweepAxis {
        key: "beta".into(),
        values: vec![1e-3, PI, 1e5 / 7.0],
    });
    ok &= parse_config(&emit(&c)).unwrap() == c;
    (ok, format!("round trip {}", if ok { "exact" } else { "mismatch" }))
}

fn parseval() -> (bool, String) {
    let (_, _, err) = record_spectra(&transport(1.0, 1.0, 0.4), 16, 16_384, 10, 8, &[]);
    (err.abs() < 0.01, format!("Parseval {:+.2}%", 100.0 * err))
}

fn properties() -> Outcome {
    let checks = [superposition(), bond_uniformity(), eigen_closed_form(), parseval(), round_trip()];
    outcome(
        checks.iter().all(|c| c.0),
        checks.iter().map(|c| c.1.clone()).collect::<Vec<_>>().join("; "),
    )
}

fn main() {
    // Under a name filter that does not select this target, do nothing.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance criterion".contains(f.as_str())) {
        return;
    }

    let criteria: [Criterion; 9] = [
        ("Markov closed form", markov_limit),
        ("exact vs Langevin", langevin_oracle),
        ("large-gamma limit and vanishing at small gamma", large_gamma),
        ("temperature step", temperature_step),
        ("resonant transmission", resonances),
        ("non-Markovian validity", non_markovian),
        ("interaction fading", interaction_fading),
        ("spectral properties", spectra),
        ("property suites", properties),
    ];
    // `BOSECHAIN_ACCEPTANCE_ONLY=2,9` runs a subset.
    let only: Option<Vec<usize>> = std::env::var("BOSECHAIN_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut passed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if result.pass {
            passed += 1;
        }
        println!(
            "criterion {}: {} ({name}, {:.0} s) {}",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {passed} of {ran} criteria passed");
    let strict = std::env::var("BOSECHAIN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < ran {
        std::process::exit(1);
    }
}

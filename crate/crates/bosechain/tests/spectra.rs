use bosechain::analysis::{average_spectra, spectral_density, steady_window};
use bosechain::core::langevin::{trajectory_rng, LangevinModel, NoiseModel};
use bosechain::core::model::{ring_energies, solve_chemical_potential, SystemSpec};
use rand_distr::{Distribution, Normal};

/// Two-mode ring decoupled from the chain: `chi` is a sum of two independent
/// Ornstein-Uhlenbeck modes with Lorentzian spectra
/// `n_k gamma / ((nu - E_k)^2 + gamma^2 / 4) / M`.
#[test]
fn decoupled_ring_modes_give_lorentzians() {
    let gamma = 0.4;
    let mut s = SystemSpec::two_rings(gamma, 1.0, 1.0, 0.1, 0.0);
    s.chain.sites = 2;
    s.left.modes = 2;
    s.right.modes = 2;
    let model = LangevinModel::new(
        &s,
        NoiseModel {
            seed: 11,
            vacuum_half: false,
            dt: 0.01,
        },
    )
    .unwrap();
    let occ = solve_chemical_potential(&s.left).unwrap().occupations;
    let energies = ring_energies(&s.left);
    let segments = 15;
    let records: Vec<_> = (0..64)
        .map(|i| {
            let rec = model.record(i, 0.0, 16_000, 10).unwrap();
            spectral_density(&rec.chi_left, rec.dt, segments).unwrap()
        })
        .collect();
    let p = average_spectra(&records).unwrap();
    let theory = |nu: f64| -> f64 {
        energies
            .iter()
            .zip(&occ)
            .map(|(e, n)| n * gamma / ((nu - e).powi(2) + 0.25 * gamma * gamma))
            .sum::<f64>()
            / 2.0
    };
    for (e, n) in energies.iter().zip(&occ) {
        for offset in [-0.5 * gamma, 0.0, 0.5 * gamma] {
            let nu = e + offset;
            let rel = p.power_at(nu) / theory(nu) - 1.0;
            assert!(rel.abs() < 0.15, "nu = {nu}: {} vs {}", p.power_at(nu), theory(nu));
        }
        // Area under each peak, including the tail of the other one.
        let area = p.power_fraction(e - 0.3, e + 0.3) * p.total_power();
        let steps = 6000;
        let h = 0.6 / steps as f64;
        let want: f64 = (0..steps).map(|i| theory(e - 0.3 + (i as f64 + 0.5) * h)).sum::<f64>() * h / (2.0 * std::f64::consts::PI);
        assert!((area / want - 1.0).abs() < 0.1, "area {area} vs {want} (n = {n})");
    }
    let k = p.peak_index();
    let fwhm = p.fwhm(k);
    assert!((fwhm / gamma - 1.0).abs() < 0.15, "fwhm {fwhm}");
}

#[test]
fn steady_window_recovers_the_mean_of_noise() {
    let mut rng = trajectory_rng(5, 0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    // AR(1) noise with correlation time 10 samples around 3.0.
    let mut x = 0.0;
    let series: Vec<f64> = (0..40_000)
        .map(|_| {
            x = 0.9 * x + normal.sample(&mut rng) * (1.0f64 - 0.81).sqrt();
            3.0 + x
        })
        .collect();
    let st = steady_window(&series, 0.1, 0.1, 8).unwrap();
    assert!(st.stderr > 0.0);
    assert!((st.mean - 3.0).abs() < 3.0 * st.stderr, "{} +- {}", st.mean, st.stderr);
}

mod support;

use post_core::gates::GateSchedule;
use post_core::kernel_approx::{fit_weights, FitOptions, NodePlacement, PowerLawKernel, Strategy};
use post_core::recurrence::{energy_exact, sequential_scan, ScanInput};
use post_core::rng::trial_rng;
use post_core::spectrum::coherence;
use rand::Rng;
use support::oracles;

#[test]
fn coherence_matches_quadrature() {
    let mut rng = trial_rng(2024, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ri = (rng.random::<f64>() * 10f64.ln()).exp() * 0.1;
        let rj = (rng.random::<f64>() * 10f64.ln()).exp() * 0.1;
        let closed = coherence(ri.ln(), rj.ln());
        worst = worst.max((closed - oracles::coherence_quadrature(ri, rj)).abs());
    }
    assert!(worst < 1e-6, "max deviation {worst:e}");
}

#[test]
fn scan_matches_convolution() {
    let (len, n, d) = (257, 3, 2);
    let mut rng = trial_rng(5, 1);
    let gates: Vec<f64> = (0..len * n).map(|_| 0.9 + 0.1 * rng.random::<f64>()).collect();
    let inputs: Vec<f64> = (0..len * n * d).map(|_| rng.random::<f64>() - 0.5).collect();
    let want = oracles::convolution_final_state(&gates, &inputs, len, n, d);
    let g = GateSchedule::from_values(gates, n, 0).unwrap();
    let u = ScanInput::new(inputs, len, n, d).unwrap();
    let got = sequential_scan(&g, &u, None).unwrap().final_state().unwrap();
    for (a, b) in got.values().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn discrete_energy_matches_products() {
    for &(alpha, ell, t) in &[(0.0, 0.05, 300), (0.5, 0.05, 400), (1.0, 1.0, 250)] {
        let a = energy_exact(alpha, ell, t).unwrap();
        let b = oracles::energy_by_products(alpha, ell, t);
        assert!((a / b - 1.0).abs() < 1e-12, "alpha={alpha}: {a} vs {b}");
    }
}

#[test]
fn single_node_fit_is_near_minimax() {
    let (beta, horizon, r) = (0.5, 100.0, 0.05);
    let nodes = NodePlacement {
        strategy: Strategy::Geometric,
        rates: vec![r],
        seed: None,
        slope: None,
    };
    let kernel = PowerLawKernel::new(beta, horizon).unwrap();
    let opts = FitOptions {
        grid_points: 1024,
        ..FitOptions::default()
    };
    let fit = fit_weights(&nodes, &kernel, &opts).unwrap();
    let best = oracles::single_node_minimax(beta, horizon, r, 4096);
    assert!((fit.sup_error / best - 1.0).abs() < 0.02, "{} vs {best}", fit.sup_error);
    assert!(fit.lower_bound <= best * (1.0 + 1e-9));
}

// Values produced once by the product-form oracle.
#[test]
fn frozen_discrete_energies() {
    let frozen = [
        (0.0, 0.05, 300, 1.050833194477406e1),
        (0.5, 0.05, 400, 1.5151821993894802e2),
        (1.0, 1.0, 250, 8.400088165473869e1),
        (1.0, 1.0, 1000, 3.3400022176890803e2),
    ];
    for (alpha, ell, t, want) in frozen {
        let got = energy_exact(alpha, ell, t).unwrap();
        assert!((got / want - 1.0).abs() < 1e-12, "alpha={alpha} t={t}: {got}");
    }
}

#[test]
fn frozen_single_node_minimax() {
    let nodes = NodePlacement {
        strategy: Strategy::Geometric,
        rates: vec![0.05],
        seed: None,
        slope: None,
    };
    let kernel = PowerLawKernel::new(0.5, 100.0).unwrap();
    let opts = FitOptions {
        grid_points: 1024,
        ..FitOptions::default()
    };
    let fit = fit_weights(&nodes, &kernel, &opts).unwrap();
    assert!((fit.sup_error / 2.087673335352478e-1 - 1.0).abs() < 0.02);
}

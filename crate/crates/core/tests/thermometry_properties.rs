use magnonsim::thermometry::{
    coherence_function, invert_variance, log_partition, thermal_moments, t2star_to_variance, variance_to_t2star,
    OverhauserDistribution, ThermalState,
};
use proptest::prelude::*;

/// Z = Σ_{k=0}^{⌊N/2⌋} C(N, k)·exp(β(3N/2 − k)) summed directly with exact
/// integer binomials, N ≤ 20.
fn brute_log_z(beta: f64, n: u32) -> f64 {
    let mut z = 0.0f64;
    let mut c: u64 = 1;
    for k in 0..=(n / 2) {
        z += c as f64 * (beta * (1.5 * n as f64 - k as f64)).exp();
        c = c * (n - k) as u64 / (k + 1) as u64;
    }
    z.ln()
}

proptest! {
    #[test]
    fn log_partition_matches_direct_sum(beta in 0.51f64..20.0, n in 1u32..=20) {
        let a = log_partition(beta, n as u64).unwrap();
        let b = brute_log_z(beta, n);
        prop_assert!((a / b - 1.0).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn variance_decreases_with_beta(b1 in 1.0f64..10.0, db in 0.01f64..5.0) {
        let (_, v1) = thermal_moments(b1, 30_000).unwrap();
        let (_, v2) = thermal_moments(b1 + db, 30_000).unwrap();
        prop_assert!(v1 > v2);
    }

    #[test]
    fn invert_variance_round_trip(beta in 0.6f64..30.0) {
        let (_, v) = thermal_moments(beta, 30_000).unwrap();
        let back = invert_variance(v, 30_000).unwrap();
        let (_, v2) = thermal_moments(back, 30_000).unwrap();
        prop_assert!(back > 0.0);
        prop_assert!((v2 / v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_coherence_matches_closed_form(sigma in 2.0f64..200.0, a_c in 0.1f64..1.0) {
        let p = OverhauserDistribution::gaussian(0.0, sigma, sigma / 25.0, 6.0, a_c).unwrap();
        prop_assert!(p.iz.len() >= 201);
        let t2s = variance_to_t2star(sigma * sigma, a_c);
        let taus: Vec<f64> = (0..=40).map(|k| k as f64 * 0.075 * t2s).collect();
        let c = coherence_function(&p, &taus).unwrap();
        for (t, c) in taus.iter().zip(c) {
            let exact = (-(t / t2s).powi(2)).exp();
            prop_assert!((c - exact).abs() < 1e-8, "{t}: {c} vs {exact}");
        }
    }

    #[test]
    fn t2star_round_trip(v in 1.0f64..1e5, a_c in 0.05f64..2.0) {
        let back = t2star_to_variance(variance_to_t2star(v, a_c), a_c);
        prop_assert!((back / v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thermal_state_fraction_in_unit_interval(beta in 0.51f64..50.0) {
        let s = ThermalState::at(beta, 30_000, 21.66).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.polarization_fraction));
        prop_assert!(s.variance > 0.0);
    }
}

#[test]
fn reference_values() {
    let beta = invert_variance(100.0, 30_000).unwrap();
    assert!((5.0..6.0).contains(&beta));
    let inf = ThermalState::at(f64::INFINITY, 30_000, 21.66).unwrap();
    assert_eq!(inf.variance, 0.0);
    assert_eq!(inf.temperature, 0.0);
}

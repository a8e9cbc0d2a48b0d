//! Forward-generate data from a model, fit it back, compare parameters.

use magnonsim::analysis::{
    extract_oscillation_frequency, fit_exponential_relaxation, fit_gaussian_sum, fit_stretched_exponential,
    gaussian_sum, peaks_at, SimplexOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn five_gaussians_recovered(spacing in 18.0f64..26.0, sigma in 5.0f64..8.0, a0 in 0.2f64..0.4) {
        let truth = [
            (0.08, -2.0 * spacing, sigma),
            (0.06, -spacing, sigma),
            (a0, 0.0, sigma),
            (0.06, spacing, sigma),
            (0.08, 2.0 * spacing, sigma),
        ];
        let p: Vec<f64> = truth.iter().flat_map(|&(a, c, s)| [a, c, s]).collect();
        let x: Vec<f64> = (-70..=70).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| gaussian_sum(v, &p)).collect();
        let centers: Vec<f64> = truth.iter().map(|t| t.1).collect();
        let init = peaks_at(&x, &y, &centers, 7.0);
        let fit = fit_gaussian_sum(&x, &y, &init, &SimplexOptions::default()).unwrap();
        for (g, t) in fit.params.chunks(3).zip(&truth) {
            prop_assert!(close(g[0], t.0, 0.01));
            prop_assert!((g[1] - t.1).abs() <= 0.01 * spacing);
            prop_assert!(close(g[2], t.2, 0.01));
        }
    }

    #[test]
    fn stretched_exponential_recovered(t2 in 0.05f64..0.5, alpha in 1.2f64..2.5) {
        let x: Vec<f64> = (0..80).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|&t| (-(t / t2).powf(alpha)).exp()).collect();
        let fit = fit_stretched_exponential(&x, &y, None, &SimplexOptions::default()).unwrap();
        prop_assert!(close(fit.get("t2_star").unwrap(), t2, 0.01));
        prop_assert!(close(fit.get("alpha").unwrap(), alpha, 0.01));
    }

    #[test]
    fn relaxation_recovered(a in 0.3f64..1.0, tau in 5.0f64..60.0) {
        let x: Vec<f64> = (0..60).map(|k| k as f64 * 2.0).collect();
        let y: Vec<f64> = x.iter().map(|&t| 1.0 - a * (-t / tau).exp()).collect();
        let fit = fit_exponential_relaxation(&x, &y, &SimplexOptions::default()).unwrap();
        prop_assert!(close(fit.get("a").unwrap(), a, 0.01));
        prop_assert!(close(fit.get("tau").unwrap(), tau, 0.01));
    }

    #[test]
    fn oscillation_frequency_recovered(f in 1.0f64..6.0, decay in 0.0f64..1.0) {
        let t: Vec<f64> = (0..=600).map(|k| k as f64 * 0.005).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| 0.3 + 0.1 * t + 0.2 * (-decay * t).exp() * (2.0 * std::f64::consts::PI * f * t).cos())
            .collect();
        let got = extract_oscillation_frequency(&t, &y, Some(2.0 / 3.0)).unwrap();
        prop_assert!(close(got, f, 0.01), "{got} vs {f}");
    }
}

#[test]
fn noisy_gaussian_fit_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (-50..=50).map(|k| k as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| gaussian_sum(v, &[1.0, 3.0, 9.0]) + 0.01 * (rng.gen::<f64>() - 0.5))
        .collect();
    let init = peaks_at(&x, &y, &[0.0], 5.0);
    let a = fit_gaussian_sum(&x, &y, &init, &SimplexOptions::default()).unwrap();
    let b = fit_gaussian_sum(&x, &y, &init, &SimplexOptions::default()).unwrap();
    assert_eq!(a, b);
    assert!(close(a.get("sigma_0").unwrap(), 9.0, 0.01));
    assert!((a.get("center_0").unwrap() - 3.0).abs() < 0.05);
}

use wgloc::whitenoise::{gamma_quadrature, simulate_gamma_sde, stationary_density, SdeParams};

fn quad(omega: f64, sigma: f64) -> f64 {
    gamma_quadrature(omega, sigma).unwrap().gamma
}

#[test]
fn normalized_at_three_scales() {
    for lambda in [0.01, 1.0, 100.0] {
        let (mass, _) = stationary_density(lambda).unwrap().total_mass();
        assert!((mass - 1.0).abs() < 1e-6, "λ={lambda}: {mass}");
    }
}

#[test]
fn gamma_collapses_onto_lambda() {
    for (w1, s1, w2) in [(1.0f64, 0.3f64, 2.0f64), (0.5, 0.05, 3.0), (2.0, 4.0, 0.7)] {
        let s2 = s1 * (w2 / w1).powf(1.5);
        let expected = (s1 * s1 / (w1 * w1)) / (s2 * s2 / (w2 * w2));
        let ratio = quad(w1, s1) / quad(w2, s2);
        assert!((ratio / expected - 1.0).abs() < 1e-8, "{ratio} vs {expected}");
    }
}

#[test]
fn local_slope_crosses_over_monotonically() {
    let h = 1e-3;
    let slopes: Vec<f64> = (0..10)
        .map(|i| {
            let sigma = 10f64.powf(-2.0 + 0.5 * i as f64);
            (quad(1.0, sigma * 10f64.powf(h)).ln() - quad(1.0, sigma * 10f64.powf(-h)).ln()) / (2.0 * h * 10f64.ln())
        })
        .collect();
    assert!((slopes[0] - 2.0).abs() < 0.01, "{slopes:?}");
    assert!((slopes[9] - 2.0 / 3.0).abs() < 0.02, "{slopes:?}");
    assert!(slopes.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{slopes:?}");
}

#[test]
fn bulk_slope_at_unit_frequency() {
    let g = |s: f64| quad(1.0, s).log10();
    let slope = (g(1e-2) - g(1e-3)) / 1.0;
    assert!((slope - 2.0).abs() < 0.05, "{slope}");
}

#[test]
fn sde_matches_quadrature_at_half_noise() {
    let p = SdeParams::new(1.0, 0.5, 0.01, 2000.0).unwrap();
    let s = simulate_gamma_sde(&p, 64, 31).unwrap();
    let q = gamma_quadrature(1.0, 0.5).unwrap();
    assert!(s.z_score(&q).abs() < 3.0, "{s:?} vs {q:?}");
}

#[test]
fn vanishing_noise_does_not_localize() {
    let p = SdeParams::new(1.0, 1e-4, 0.01, 1000.0).unwrap();
    let s = simulate_gamma_sde(&p, 32, 32).unwrap();
    assert!(s.gamma.abs() < 3.0 * s.std_err + 1e-7, "{s:?}");
}

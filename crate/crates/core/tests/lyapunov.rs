use wgloc::disorder::{empirical_covariance, DisorderSpec, GaussianEnsemble, PeriodSampler};
use wgloc::lyapunov::{
    conjugation_invariance_check, gamma_from_transmission, lyapunov_mc, lyapunov_mc_source, transmission,
    PruferScaling, Window,
};
use wgloc::spectrum::{bloch_phase, canonical_reduction, scan_bands, BlochPhase};
use wgloc::waveguide::{period_transfer, LayerStack};
use wgloc::Mat2;

const POINT_A: f64 = 5.6288;

fn fig3() -> LayerStack {
    LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)]).unwrap()
}

#[test]
fn prufer_and_canonical_conjugations_leave_gamma_unchanged() {
    let spec = DisorderSpec::thickness(fig3(), 0.05).unwrap();
    let t = PruferScaling::new(9.0).unwrap().matrix();
    let c = conjugation_invariance_check(&spec, 9.0, &t, 2000, 100, 1).unwrap();
    assert!(c.within_tolerance(), "{c:?}");
    assert!(c.max_paired_diff <= c.bound);

    let nu = 5.65;
    let m = period_transfer(&fig3(), nu).unwrap();
    let BlochPhase::Band { omega } = bloch_phase(&m) else { panic!("{nu} should be in band") };
    let d = canonical_reduction(&m, omega).unwrap().d;
    let c = conjugation_invariance_check(&spec, nu, &d, 2000, 100, 2).unwrap();
    assert!(c.within_tolerance(), "{c:?}");
}

#[test]
fn identity_conjugation_is_exact() {
    let spec = DisorderSpec::thickness(fig3(), 0.05).unwrap();
    let c = conjugation_invariance_check(&spec, 9.0, &Mat2::IDENTITY, 500, 20, 3).unwrap();
    assert_eq!(c.plain.gamma, c.conjugated.gamma);
}

#[test]
fn in_gap_transmission_of_the_envelope_stack() {
    let stack = LayerStack::from_pairs(&[(2f64.sqrt(), 2.0), (6.0, 0.2)]).unwrap();
    let bs = scan_bands(&stack, 0.01, 5.0, 20_000).unwrap();
    let gap = bs.gaps.iter().max_by(|a, b| a.width().total_cmp(&b.width())).unwrap();
    let nu = 0.5 * (gap.lo + gap.hi);
    let rho = bloch_phase(&period_transfer(&stack, nu).unwrap()).log_spectral_radius();
    let spec = DisorderSpec::thickness(stack, 0.0).unwrap();
    let t = transmission(&spec, nu, 50, 1).unwrap();
    assert!((t.decay / rho - 1.0).abs() < 0.02, "{} vs {rho}", t.decay);
    let g = gamma_from_transmission(&spec, nu, 50, Window { lo: 25, hi: 50 }, 1, 1).unwrap();
    assert!((g.gamma / rho - 1.0).abs() < 0.02, "{} vs {rho}", g.gamma);
}

#[test]
fn std_err_shrinks_by_root_two() {
    let spec = DisorderSpec::thickness(fig3(), 0.05).unwrap();
    let a = lyapunov_mc(&spec, 9.0, 500, 400, 4).unwrap();
    let b = lyapunov_mc(&spec, 9.0, 500, 800, 5).unwrap();
    let ratio = a.std_err / b.std_err;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn transmission_and_products_agree_at_the_band_edge() {
    let spec = DisorderSpec::thickness(fig3(), 0.05).unwrap();
    let t = gamma_from_transmission(&spec, POINT_A, 1000, Window::default(), 400, 6).unwrap();
    // ln‖P_N‖/N carries an O(1/N) offset (≈3/N here); the window slope does not.
    let m = lyapunov_mc(&spec, POINT_A, 8000, 400, 7).unwrap();
    assert!(t.z_score(&m).abs() < 3.0, "{t:?} vs {m:?}");
}

#[test]
fn mid_band_without_disorder_does_not_decay() {
    let spec = DisorderSpec::thickness(fig3(), 0.0).unwrap();
    let g = gamma_from_transmission(&spec, 9.0, 1000, Window::default(), 4, 8).unwrap();
    // Every realization is identical, so std_err is 0; bound the slope directly.
    assert!(g.gamma.abs() < 1e-3, "{}", g.gamma);
    let m = lyapunov_mc(&spec, 9.0, 10_000, 2, 8).unwrap();
    assert!(m.gamma < 1e-3);
}

#[test]
fn mid_band_point_is_localized() {
    let spec = DisorderSpec::thickness(fig3(), 0.01).unwrap();
    let g = gamma_from_transmission(&spec, 9.0, 1000, Window::default(), 400, 9).unwrap();
    assert!(g.gamma > 3.0 * g.std_err, "{g:?}");
}

#[test]
fn exponents_are_nonnegative_within_noise() {
    for (nu, sigma) in [(9.0, 0.003), (POINT_A, 0.01), (3.0, 0.1)] {
        let spec = DisorderSpec::thickness(fig3(), sigma).unwrap();
        let g = lyapunov_mc(&spec, nu, 1000, 64, 10).unwrap();
        assert!(g.gamma >= -3.0 * g.std_err, "{nu} {sigma}: {g:?}");
    }
}

#[test]
fn independent_ensembles_give_comparable_exponents() {
    let nu = POINT_A;
    for sigma in [1e-3, 1e-2, 1e-1] {
        let spec = DisorderSpec::thickness(fig3(), sigma).unwrap();
        let direct = lyapunov_mc(&spec, nu, 2000, 100, 11).unwrap();
        let cov = empirical_covariance(&spec.with_sigma(1e-6).unwrap(), nu, 5000, 12).unwrap();
        let m0 = PeriodSampler::new(&spec, nu).unwrap().unperturbed();
        let gauss = GaussianEnsemble::new(m0, &cov, sigma).unwrap();
        let other = lyapunov_mc_source(&gauss, 2000, 100, 13).unwrap();
        let ratio = direct.gamma / other.gamma;
        assert!((0.1..=10.0).contains(&ratio), "σ={sigma}: {} vs {}", direct.gamma, other.gamma);
    }
}

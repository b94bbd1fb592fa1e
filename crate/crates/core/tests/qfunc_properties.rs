mod common;

use num_complex::Complex;
use photonfb::fock::HilbertConfig;
use photonfb::qfunc::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn grid_quadrature_matches_fock_diagonal(
        rho in common::low_lying_state(HilbertConfig::for_target(2), 7, 3),
        n_star in 0usize..4,
    ) {
        let grid = distance(&rho, n_star, DistanceMethod::GridQuadrature).unwrap();
        let diag = distance(&rho, n_star, DistanceMethod::FockDiagonal).unwrap();
        prop_assert!((grid.value - diag.value).abs() < 1e-6, "{} vs {}", grid.value, diag.value);
        prop_assert_eq!(grid.normalization_used, diag.normalization_used);
    }

    #[test]
    fn q_is_a_nonnegative_bounded_density(rho in common::low_lying_state(HilbertConfig::new(12).unwrap(), 6, 2)) {
        let grid = q_function(&rho, GridSpec::for_truncation(12).with_points(121)).unwrap();
        prop_assert!(grid.values.iter().all(|&q| (-1e-15..=1.0 / std::f64::consts::PI + 1e-12).contains(&q)));
        prop_assert!((grid.normalization() - Q_NORMALIZATION).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_lies_in_the_unit_interval(rho in common::mixed_state(12, 3), n_star in 0usize..6) {
        let d = distance(&rho, n_star, DistanceMethod::FockDiagonal).unwrap().value;
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d), "{}", d);
    }

    #[test]
    fn q_value_matches_the_coherent_overlap(re in -3.0f64..3.0, im in -3.0f64..3.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        // Q of a coherent state |g> is exp(-|alpha/2 - g|^2) / pi
        let cfg = HilbertConfig::new(40).unwrap();
        let g = Complex::new(a, b);
        let rho = photonfb::fock::coherent_state(g, cfg);
        let alpha = Complex::new(re, im);
        let expected = (-(alpha * 0.5 - g).norm_sqr()).exp() / std::f64::consts::PI;
        prop_assert!((q_value(&rho, alpha) - expected).abs() < 1e-12);
    }
}

#[test]
fn written_grids_parse_back_exactly() {
    let cfg = HilbertConfig::new(8).unwrap();
    let rho = photonfb::fock::coherent_state(Complex::new(0.7, -0.4), cfg);
    let grid = q_function(&rho, GridSpec::for_truncation(8).with_points(41)).unwrap();
    let mut buf = Vec::new();
    grid.write_text(&mut buf).unwrap();
    let parsed = QGrid::<f64>::parse_text(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(parsed, grid);
}

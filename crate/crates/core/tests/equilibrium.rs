use std::time::Instant;

use approx::assert_relative_eq;
use kuramoto_mfg::equilibrium::{df_origin, f_kappa, find_fixed_points, g_kappa, EquilibriumMap, ScanOptions};
use kuramoto_mfg::{kappa_c, DistributionKind, FrequencyDistribution, ModelParams, OrderParameters, TorusGrid};
use nalgebra::Matrix2;
use proptest::prelude::*;

fn grid() -> TorusGrid {
    TorusGrid::new(256).unwrap()
}

fn two_dirac() -> FrequencyDistribution {
    FrequencyDistribution::two_dirac(2.0).unwrap()
}

#[test]
fn figure_one_has_three_fixed_points() {
    let params = ModelParams::new(9.0, 1.0, 1.0).unwrap();
    let start = Instant::now();
    let report = find_fixed_points(&params, &two_dirac(), ScanOptions::with_points(9.0, 64), &grid()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 60.0);
    let alphas: Vec<f64> = report.fixed_points.iter().map(|p| p.alpha).collect();
    assert_eq!(alphas.len(), 3, "{alphas:?}");
    assert_eq!(alphas[0], 0.0);
    assert!(alphas.windows(2).all(|w| w[0] < w[1]));
    let map = EquilibriumMap::new(params, two_dirac(), &grid()).unwrap();
    for fp in &report.fixed_points {
        assert!(fp.residual < 1e-8);
        assert!((map.g(fp.alpha).unwrap() - fp.alpha).abs() < 1e-8);
        assert!(!fp.tangency_suspected);
    }
    assert!(report.samples.iter().all(|&(_, g)| g <= params.kappa()));
    assert!(report.failure_boundary.is_none());
}

#[test]
fn weak_coupling_has_only_the_origin() {
    let params = ModelParams::new(1.0, 1.0, 1.0).unwrap();
    let map = EquilibriumMap::new(params, two_dirac(), &grid()).unwrap();
    // fine scan oracle: G(α) < α on (0, κ]
    for i in 1..=100 {
        let a = 0.01 * i as f64;
        assert!(map.g(a).unwrap() < a, "alpha {a}");
    }
    let report = find_fixed_points(&params, &two_dirac(), ScanOptions::for_kappa(1.0), &grid()).unwrap();
    assert_eq!(report.fixed_points.len(), 1);
    assert_eq!(report.fixed_points[0].alpha, 0.0);
}

#[test]
fn supercritical_delta0_has_a_positive_fixed_point() {
    let params = ModelParams::new(3.0, 1.0, 1.0).unwrap();
    let report =
        find_fixed_points(&params, &FrequencyDistribution::delta0(), ScanOptions::for_kappa(3.0), &grid()).unwrap();
    assert!(report.fixed_points.iter().any(|p| p.alpha > 0.0 && p.residual < 1e-8));
}

#[test]
fn origin_is_always_fixed_and_symmetric_laws_keep_alpha2_zero() {
    let params = ModelParams::new(4.0, 1.0, 1.0).unwrap();
    let f0 = f_kappa(&params, &two_dirac(), OrderParameters::ZERO, &grid()).unwrap();
    assert_eq!(f0.norm(), 0.0);
    assert_eq!(g_kappa(&params, &two_dirac(), 0.0, &grid()).unwrap(), 0.0);
    let f = f_kappa(&params, &two_dirac(), OrderParameters::new(0.7, 0.0), &grid()).unwrap();
    assert!(f.alpha2.abs() < 1e-10);
    let gauss = FrequencyDistribution::centered_gaussian(1.0).unwrap();
    let f = f_kappa(&params, &gauss, OrderParameters::new(0.7, 0.0), &grid()).unwrap();
    assert!(f.alpha2.abs() < 1e-10);
}

#[test]
fn slope_at_the_origin_is_kappa_over_kappa_c() {
    let cases = [
        (ModelParams::new(9.0, 1.0, 1.0).unwrap(), two_dirac()),
        (
            ModelParams::new(10.0, 1.0, 2.0).unwrap(),
            FrequencyDistribution::centered_gaussian(1.0).unwrap(),
        ),
    ];
    for (params, dist) in cases {
        let map = EquilibriumMap::new(params, dist.clone(), &grid()).unwrap();
        let slope = map.g_slope(0.0, 1e-4).unwrap();
        let expected = params.kappa() / kappa_c(&dist, &params).unwrap();
        assert_relative_eq!(slope, expected, max_relative = 1e-4);
    }
}

#[test]
fn subcritical_delta0_origin_is_attracting() {
    let params = ModelParams::new(1.2, 1.0, 1.0).unwrap();
    let map = EquilibriumMap::new(params, FrequencyDistribution::delta0(), &grid()).unwrap();
    assert!(map.g_slope(0.0, 1e-4).unwrap().abs() < 1.0);
}

#[test]
fn derivative_at_origin_is_diagonal_for_symmetric_laws() {
    let params = ModelParams::new(3.0, 1.0, 1.5).unwrap();
    for dist in [
        two_dirac(),
        FrequencyDistribution::delta0(),
        FrequencyDistribution::centered_gaussian(0.7).unwrap(),
        FrequencyDistribution::uniform(1.3).unwrap(),
    ] {
        let d = df_origin(&params, &dist).unwrap();
        let expected = params.kappa() / kappa_c(&dist, &params).unwrap();
        assert_relative_eq!(d[(0, 0)], expected, max_relative = 1e-12);
        assert_relative_eq!(d[(1, 1)], expected, max_relative = 1e-12);
        assert!(d[(0, 1)].abs() < 1e-12 && d[(1, 0)].abs() < 1e-12);
    }
    let d = df_origin(&params, &FrequencyDistribution::delta0()).unwrap();
    let k = params.kappa() / (params.gamma() * params.sigma2());
    assert!((d - Matrix2::identity() * k).amax() < 1e-12);
}

fn assert_matches_fd(params: ModelParams, dist: FrequencyDistribution) {
    let map = EquilibriumMap::new(params, dist.clone(), &grid()).unwrap();
    let fd = map.jacobian_fd(OrderParameters::ZERO, 1e-4).unwrap();
    let exact = df_origin(&params, &dist).unwrap();
    let scale = exact.amax();
    for i in 0..2 {
        for j in 0..2 {
            let err = (fd[(i, j)] - exact[(i, j)]).abs();
            assert!(err <= 1e-3 * exact[(i, j)].abs().max(1e-3 * scale), "({i},{j}): {fd} vs {exact}");
        }
    }
}

#[test]
fn derivative_at_origin_matches_finite_differences() {
    assert_matches_fd(ModelParams::new(5.0, 1.0, 1.0).unwrap(), two_dirac());
    assert_matches_fd(
        ModelParams::new(5.0, 1.0, 2.0).unwrap(),
        FrequencyDistribution::centered_gaussian(1.0).unwrap(),
    );
    // an asymmetric law has a nonzero off-diagonal
    let shifted = FrequencyDistribution::new(DistributionKind::Dirac(vec![(1.0, 0.7), (-0.5, 0.3)]), false).unwrap();
    let params = ModelParams::new(5.0, 1.0, 1.0).unwrap();
    assert!(df_origin(&params, &shifted).unwrap()[(0, 1)].abs() > 1e-3);
    assert_matches_fd(params, shifted);
}

#[test]
fn planar_newton_converges_on_the_rotation_orbit() {
    let params = ModelParams::new(9.0, 1.0, 1.0).unwrap();
    let report = find_fixed_points(&params, &two_dirac(), ScanOptions::with_points(9.0, 64), &grid()).unwrap();
    let star = report.fixed_points.last().unwrap().alpha;
    let map = EquilibriumMap::new(params, two_dirac(), &grid()).unwrap();
    let start = OrderParameters::polar(star + 0.05, 0.8);
    let (alpha, res) = map.refine_2d(start, 1e-9, 30).unwrap();
    assert!(res < 1e-9);
    assert!((alpha.norm() - star).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn harmonics_are_bounded_by_kappa(a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, kappa in 0.5f64..6.0) {
        let params = ModelParams::new(kappa, 1.0, 1.0).unwrap();
        let grid = TorusGrid::new(64).unwrap();
        let f = f_kappa(&params, &two_dirac(), OrderParameters::new(a1, a2), &grid).unwrap();
        prop_assert!(f.alpha1.abs() <= kappa && f.alpha2.abs() <= kappa);
    }
}

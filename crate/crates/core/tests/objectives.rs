mod common;

use common::{converges_within_slack, random_geometry, tis_span, DEFAULT_PECLET, FORRESTER_F_STAR, FORRESTER_X_STAR};
use mfdgp::objectives::{
    fit_tanks_in_series, forrester_blend, forrester_family, forrester_high, geometry_to_peclet, moment_estimate,
    objective_by_name, reactor_proxy_simulate, simulate_rtd, synthetic_curve, trapezoid, Forrester,
    MultiFidelityObjective, ReactorGeometry, ReactorProxy, RtdCurve,
};
use mfdgp::Error;

#[test]
fn forrester_grid_oracle() {
    let (mut bx, mut by) = (0.0, f64::NEG_INFINITY);
    for i in 0..10_000 {
        let x = i as f64 / 9999.0;
        let y = forrester_high(x);
        if y > by {
            (bx, by) = (x, y);
        }
    }
    assert_eq!(bx, FORRESTER_X_STAR);
    assert_eq!(by, FORRESTER_F_STAR);
    let top = forrester_family(&[0.7572], 5).unwrap().value;
    assert!((top - FORRESTER_F_STAR).abs() < 1e-3);
}

#[test]
fn forrester_levels_and_costs() {
    for x in [0.0, 0.3, 0.9] {
        assert_eq!(forrester_blend(x, 1.0), forrester_high(x));
        assert_eq!(forrester_family(&[x], 5).unwrap().value, forrester_high(x));
    }
    let costs: Vec<f64> = (1..=5).map(|l| forrester_family(&[0.5], l).unwrap().cost).collect();
    assert_eq!(costs, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    assert!(forrester_family(&[0.5], 6).is_err());
    assert!(forrester_family(&[0.5, 0.1], 1).is_err());
    let f = Forrester::default();
    let (x, y) = f.known_optimum().unwrap();
    assert!(y >= FORRESTER_F_STAR && y - FORRESTER_F_STAR < 1e-6);
    assert!((x[0] - FORRESTER_X_STAR).abs() < 1e-4);
}

#[test]
fn tanks_in_series_round_trip() {
    for n in [1.0, 2.0, 5.0, 10.0, 20.0] {
        let curve = synthetic_curve(n, tis_span(n), 500).unwrap();
        let fit = fit_tanks_in_series(&curve).unwrap();
        assert!((fit.n_tanks - n).abs() < 1e-3, "N = {n}: fit {}", fit.n_tanks);
        let n0 = moment_estimate(&curve).unwrap();
        assert!((n0 - n).abs() < 2e-2, "N = {n}: moments {n0}");
    }
}

#[test]
fn exponential_and_five_tank_examples() {
    let one = synthetic_curve(1.0, 20.0, 500).unwrap();
    for (t, e) in one.theta().iter().zip(one.e_theta()) {
        assert!((e - (-t).exp()).abs() < 1e-12);
    }
    let five = synthetic_curve(5.0, 4.0, 500).unwrap();
    assert!((fit_tanks_in_series(&five).unwrap().n_tanks - 5.0).abs() < 1e-3);
    assert!((moment_estimate(&five).unwrap() - 5.0).abs() < 2e-2);
}

#[test]
fn plug_flow_limit_is_a_fit_error() {
    let theta = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    let curve = RtdCurve::new(theta, vec![0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
    assert!(matches!(fit_tanks_in_series(&curve), Err(Error::Fit(_))));
}

#[test]
fn rtd_csv_round_trip() {
    let curve = synthetic_curve(3.0, 6.0, 200).unwrap();
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    let back = RtdCurve::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back, curve);
    assert!(RtdCurve::read_csv("a,b\n0,1\n").is_err());
    assert!(RtdCurve::new(vec![0.0, 1.0], vec![5.0, 5.0]).is_err());
}

#[test]
fn peclet_map() {
    let g = ReactorGeometry::default();
    assert!((geometry_to_peclet(&g).unwrap() - DEFAULT_PECLET).abs() < 1e-9);
    let doubled = ReactorGeometry {
        coil_radius: 2.0 * g.coil_radius,
        ..g
    };
    assert!(geometry_to_peclet(&doubled).unwrap() > geometry_to_peclet(&g).unwrap());
    let inverted = ReactorGeometry {
        inversion_fraction: 1.0,
        ..g
    };
    assert_eq!(geometry_to_peclet(&inverted).unwrap(), geometry_to_peclet(&g).unwrap());
    for seed in 0..20 {
        let g = random_geometry(seed);
        let wider = ReactorGeometry {
            coil_radius: g.coil_radius * 1.01,
            ..g
        };
        let steeper = ReactorGeometry { pitch: g.pitch * 1.01, ..g };
        assert!(geometry_to_peclet(&wider).unwrap() > geometry_to_peclet(&g).unwrap());
        assert!(geometry_to_peclet(&steeper).unwrap() < geometry_to_peclet(&g).unwrap());
    }
    let bad = ReactorGeometry { tube_radius: 30.0, ..g };
    assert!(matches!(geometry_to_peclet(&bad), Err(Error::Input(_))));
}

#[test]
fn advection_dominated_peak() {
    let curve = simulate_rtd(1e4, 320, 0.01, 3.0).unwrap();
    assert!((curve.peak_theta() - 1.0).abs() < 0.05, "{}", curve.peak_theta());
    assert!((curve.area() - 1.0).abs() < 1e-3);
}

#[test]
fn proxy_convergence_and_normalization() {
    let proxy = ReactorProxy::new(0);
    for seed in 0..5 {
        let g = random_geometry(100 + seed);
        let mut ns = Vec::new();
        for level in 1..=5 {
            let (curve, _) = proxy.simulate(&g, level).unwrap();
            assert!((trapezoid(curve.theta(), curve.e_theta()) - 1.0).abs() < 1e-3);
            ns.push(fit_tanks_in_series(&curve).unwrap().n_tanks);
        }
        assert!(converges_within_slack(&ns, 0.05), "{g:?}: {ns:?}");
    }
}

#[test]
fn objective_is_the_composed_fit() {
    let proxy = ReactorProxy::new(7);
    let g = ReactorGeometry::default();
    let x = [g.coil_radius, g.tube_radius, g.pitch, g.inversion_fraction];
    let e = proxy.evaluate(&x, 5).unwrap();
    let (curve, cost) = reactor_proxy_simulate(&g, 5, 7).unwrap();
    assert_eq!(e.value, fit_tanks_in_series(&curve).unwrap().n_tanks);
    assert_eq!(e.cost, cost);
    assert_eq!(proxy.evaluate(&x, 5).unwrap(), e);
    assert_eq!(ReactorProxy::new(7).evaluate(&x, 5).unwrap(), e);
}

#[test]
fn large_coil_low_pitch_wins() {
    let proxy = ReactorProxy::new(1);
    let good = proxy.evaluate(&[18.0, 2.5, 5.0, 0.5], 5).unwrap().value;
    let bad = proxy.evaluate(&[6.0, 2.5, 14.0, 0.5], 5).unwrap().value;
    assert!(good > bad, "{good} vs {bad}");
}

#[test]
fn costs_are_seeded_and_spread() {
    let proxy = ReactorProxy::new(3);
    let x = [10.0, 2.0, 8.0, 0.3];
    let a = proxy.evaluate(&x, 2).unwrap().cost;
    assert_eq!(a, proxy.evaluate(&x, 2).unwrap().cost);
    assert!(a > 0.0);
    let other = ReactorProxy::new(4).evaluate(&x, 2).unwrap().cost;
    assert_ne!(a, other);
}

#[test]
fn registry() {
    assert_eq!(objective_by_name("forrester5", 0).unwrap().dimension(), 1);
    assert_eq!(objective_by_name("reactor-proxy", 0).unwrap().dimension(), 4);
    assert!(objective_by_name("branin", 0).is_err());
}

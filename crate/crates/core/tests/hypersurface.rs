use finsler_core::hypersurface::{
    detect_focal, equidistant, normal_curvature, normal_vector, normal_vector_on, proposition3_check, riccati_evolve,
    shape_operator, theorem3_verify, FlowOptions, ImmersedHypersurface, NormalSide, Theorem3Options, Verdict,
};
use finsler_core::jacobi::FocalOptions;
use finsler_core::ode::OdeOptions;
use finsler_core::spray::fundamental_matrix;
use finsler_core::tcurv::TCurvatureOptions;
use finsler_core::{GeometryError, MetricSpec};
use nalgebra::DVector;

#[test]
fn hyperbolic_geodesic_sphere_normal_curvature() {
    let m = MetricSpec::hyperbolic(3, 1.0).unwrap();
    let r: f64 = 0.8;
    let s = ImmersedHypersurface::from_preset(&m, &format!("geodesic-sphere:r={r}"), NormalSide::Outward, 6).unwrap();
    for u in &s.samples {
        let e = s.embed(u).unwrap();
        for a in 0..2 {
            let y = e.tangent.column(a).clone_owned();
            let k = normal_curvature(&s, u, &y).unwrap();
            assert!((k - 1.0 / r.tanh()).abs() < 1e-5, "{k}");
        }
        let sh = shape_operator(&s, u).unwrap();
        for k in sh.principal_curvatures().unwrap() {
            assert!((k - 1.0 / r.tanh()).abs() < 1e-6);
        }
    }
}

#[test]
fn minkowski_randers_normal_matches_brute_force() {
    let m = MetricSpec::from_preset("minkowski-randers:b=0.3,0", 2).unwrap();
    let s = ImmersedHypersurface::from_preset(&m, "sphere:r=1", NormalSide::Outward, 4).unwrap();
    // u = π/2 is the point (0, 1) with tangent along e₁
    let u = &s.samples[1];
    let nd = normal_vector(&s, u).unwrap();
    let inv = normal_vector_on(&s, u, NormalSide::Inward).unwrap();
    let e1 = DVector::from_vec(vec![1.0, 0.0]);
    let x = [0.0, 1.0];
    // brute force over the F-unit circle: minimize |g_v(e₁, v)| with v² > 0
    let mut best = (f64::INFINITY, DVector::zeros(2));
    for i in 0..200_000 {
        let th = 2.0 * std::f64::consts::PI * i as f64 / 200_000.0;
        let v = DVector::from_vec(vec![th.cos(), th.sin()]);
        if v[1] <= 0.0 {
            continue;
        }
        let v = &v / m.norm(&x, v.as_slice()).unwrap();
        let g = fundamental_matrix(&m, &x, v.as_slice()).unwrap();
        let r = e1.dot(&(&g * &v)).abs();
        if r < best.0 {
            best = (r, v);
        }
    }
    assert!((nd.normal.components.clone() - best.1).amax() < 1e-4);
    let g = fundamental_matrix(&m, &x, nd.normal.components.as_slice()).unwrap();
    assert!(e1.dot(&(&g * &nd.normal.components)).abs() < 1e-9);
    assert!((m.norm(&x, nd.normal.components.as_slice()).unwrap() - 1.0).abs() < 1e-10);
    assert!((inv.normal.components.clone() + nd.normal.components.clone()).amax() > 1e-2);
}

#[test]
fn euclidean_equidistants_are_spheres() {
    let m = MetricSpec::euclidean(2).unwrap();
    let s = ImmersedHypersurface::from_preset(&m, "sphere:r=0.5", NormalSide::Outward, 12).unwrap();
    let st0 = equidistant(&s, 0.0, &FlowOptions::default()).unwrap();
    for (p, u) in st0.points.iter().zip(&s.samples) {
        assert!((p - s.embed(u).unwrap().point).amax() < 1e-15);
    }
    let st = equidistant(&s, 1.5, &FlowOptions::default()).unwrap();
    for i in 0..12 {
        assert!((st.points[i].norm() - 2.0).abs() < 1e-10);
        assert!((st.kn_min[i] - 0.5).abs() < 1e-6);
        assert!((st.kt_min[i] - 0.5).abs() < 1e-6);
    }
}

#[test]
fn hyperbolic_equidistant_matches_riccati() {
    let m = MetricSpec::hyperbolic(2, 1.0).unwrap();
    let s = ImmersedHypersurface::from_preset(&m, "geodesic-sphere:r=0.5", NormalSide::Outward, 8).unwrap();
    let st = equidistant(&s, 1.0, &FlowOptions::default()).unwrap();
    let want = 1.0 / 1.5f64.tanh();
    for i in 0..8 {
        assert!((st.kn_min[i] - want).abs() < 1e-4, "{}", st.kn_min[i]);
    }
}

#[test]
fn randers_shape_operator_is_self_adjoint_and_matches_t_curvature() {
    let m = MetricSpec::hyperbolic_randers(3, 1.0, 0.3).unwrap();
    let s = ImmersedHypersurface::from_preset(&m, "geodesic-sphere:r=0.6", NormalSide::Outward, 6).unwrap();
    for u in &s.samples {
        let sh = shape_operator(&s, u).unwrap();
        assert!(sh.self_adjointness() < 1e-6, "{}", sh.self_adjointness());
        assert!(sh.normal_leak < 1e-6);
    }
    let m2 = MetricSpec::hyperbolic_randers(2, 1.0, 0.3).unwrap();
    let s2 = ImmersedHypersurface::from_preset(&m2, "perturbed-sphere:r=0.4,amp=0.1,mode=3", NormalSide::Outward, 6).unwrap();
    let res = proposition3_check(&s2, &FlowOptions::default(), &TCurvatureOptions::default()).unwrap();
    let worst = res.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let t_max = res.iter().map(|r| r.t_value.abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "residual {worst}");
    assert!(t_max > 1e-3, "T is nontrivial: {t_max}");
}

#[test]
fn focal_points_of_spheres() {
    let m = MetricSpec::euclidean(3).unwrap();
    let s = ImmersedHypersurface::from_preset(&m, "sphere:r=1", NormalSide::Outward, 4).unwrap();
    let u = &s.samples[0];
    let inward = detect_focal(&s, u, NormalSide::Inward, 1.5, &FocalOptions::default()).unwrap();
    assert_eq!(inward.focal_times.len(), 1);
    assert!((inward.focal_times[0] - 1.0).abs() < 1e-6);
    let zero = |_t: f64| Ok(0.0);
    match riccati_evolve(-1.0, &zero, 1.5, &OdeOptions::default()) {
        Err(GeometryError::BlowUp { time }) => assert!((time - inward.focal_times[0]).abs() < 1e-6),
        other => panic!("{other:?}"),
    }
    let outward = detect_focal(&s, u, NormalSide::Outward, 5.0, &FocalOptions::default()).unwrap();
    assert!(outward.focal_times.is_empty());
    let h = MetricSpec::hyperbolic(3, 1.0).unwrap();
    let hs = ImmersedHypersurface::from_preset(&h, "geodesic-sphere:r=1", NormalSide::Outward, 4).unwrap();
    let rep = detect_focal(&hs, &hs.samples[0], NormalSide::Outward, 5.0, &FocalOptions::default()).unwrap();
    assert!(rep.focal_times.is_empty());
    assert!(rep.det_trace.iter().all(|(_, d)| *d > 0.0));
    assert!(matches!(
        detect_focal(&s, u, NormalSide::Inward, 0.0, &FocalOptions::default()),
        Err(GeometryError::IntegrationFailure(_))
    ));
}

#[test]
fn theorem3_space_forms() {
    let h = MetricSpec::hyperbolic(2, 1.0).unwrap();
    let s = ImmersedHypersurface::from_preset(&h, "geodesic-sphere:r=0.5", NormalSide::Outward, 8).unwrap();
    let opts = Theorem3Options {
        t_bound_samples: 2,
        ..Default::default()
    };
    let rep = theorem3_verify(&s, 1.0, 0.0, &opts).unwrap();
    assert!(rep.passed, "{:?}", rep.failures);
    for r in &rep.reports {
        assert_eq!(r.verdict, Verdict::LocallyConvex);
        assert!((r.min_kn - 1.0 / (0.5 + r.t).tanh()).abs() < 1e-5);
    }
    let e = MetricSpec::euclidean(2).unwrap();
    let s = ImmersedHypersurface::from_preset(&e, "sphere:r=0.5", NormalSide::Outward, 8).unwrap();
    let rep = theorem3_verify(&s, 0.0, 0.0, &opts).unwrap();
    assert!(rep.passed, "{:?}", rep.failures);
    assert!(rep.riccati_error < 1e-6);
    let bad = theorem3_verify(&s, 1.0, 0.0, &opts).unwrap_err();
    assert!(matches!(bad, GeometryError::HypothesisViolated { .. }));
}

#[test]
fn ball_convexity_diagnostic() {
    use finsler_core::hypersurface::{ball_convexity, BallCondition};
    let h = MetricSpec::hyperbolic(2, 1.0).unwrap();
    let c = nalgebra::DVector::zeros(2);
    let rep = ball_convexity(&h, &c, 0.2, &[0.2, 1.0, 2.0], 1.0, 0.0, BallCondition::DeltaBelowK, 8, &FlowOptions::default()).unwrap();
    assert!(rep.hypothesis_met && rep.all_convex());
    for row in &rep.rows {
        assert!((row.min_kn - 1.0 / row.radius.tanh()).abs() < 1e-4, "{row:?}");
    }
    let above = ball_convexity(&h, &c, 0.2, &[0.5], 1.0, 0.0, BallCondition::DeltaAboveK, 8, &FlowOptions::default()).unwrap();
    assert!(!above.hypothesis_met && above.all_convex());
    let m = MetricSpec::hyperbolic_randers(2, 1.0, 0.05).unwrap();
    let rep = ball_convexity(&m, &c, 0.2, &[0.5, 1.5], 0.95, 0.015, BallCondition::DeltaBelowK, 8, &FlowOptions::default()).unwrap();
    assert!(rep.all_convex(), "{rep:?}");
}

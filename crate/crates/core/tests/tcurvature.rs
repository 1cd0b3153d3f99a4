use finsler_core::metric::{evaluate_jet, MetricSpec, Seed};
use finsler_core::spray::spray_coefficients;
use finsler_core::tcurv::{
    osculating_sectional_curvature, t_bound_check, t_curvature_with, TCurvatureEvaluator, TCurvatureOptions,
    TSample,
};
use finsler_core::spray::flag_curvature;
use finsler_core::{Flag, Point, TangentVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `2g_y(G(x,v), y) − y^m γ_{m,jk}(x,y) v^j v^k − 2C_y(v, v, G(x,y))` for unit
/// `y`, with every tensor read off an order-3 jet of `F²`.
fn closed_form_t(m: &MetricSpec, x: &[f64], y: &[f64], v: &[f64]) -> f64 {
    let n = m.dim;
    let f = m.norm(x, y).unwrap();
    let y: Vec<f64> = y.iter().map(|c| c / f).collect();
    let jet = evaluate_jet(
        m,
        &Point::from_slice(x),
        &TangentVector::from_slices(x, &y).unwrap(),
        &Seed::coordinates(n),
        3,
    )
    .unwrap();
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * jet.partial(&[n + i, n + j]));
    let dgx = |k: usize, i: usize, j: usize| 0.5 * jet.partial(&[k, n + i, n + j]);
    let cartan = |i: usize, j: usize, k: usize| 0.25 * jet.partial(&[n + i, n + j, n + k]);
    let gv = spray_coefficients(m, x, v).unwrap();
    let gy = spray_coefficients(m, x, &y).unwrap();
    let yv = DVector::from_column_slice(&y);
    let mut t = 2.0 * gv.dot(&(&g * &yv));
    for mm in 0..n {
        for j in 0..n {
            for k in 0..n {
                let gamma = 0.5 * (dgx(j, mm, k) + dgx(k, mm, j) - dgx(mm, j, k));
                t -= y[mm] * gamma * v[j] * v[k];
                t -= 2.0 * cartan(mm, j, k) * v[mm] * v[j] * gy[k];
            }
        }
    }
    t
}

fn random_sample(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius) / (dim as f64).sqrt()).collect();
    let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (x, y, v)
}

#[test]
fn stencil_t_matches_closed_form_on_hyperbolic_randers() {
    let m = MetricSpec::hyperbolic_randers(2, 1.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = TCurvatureOptions::default();
    let mut largest: f64 = 0.0;
    for _ in 0..10 {
        let (x, y, v) = random_sample(&mut rng, 2, 0.6);
        let ev = TCurvatureEvaluator::new(&m, &x, &y, &opts).unwrap();
        let t = ev.value(&DVector::from_vec(v.clone())).unwrap();
        let oracle = closed_form_t(&m, &x, &y, &v);
        largest = largest.max(oracle.abs());
        assert!((t - oracle).abs() < 1e-7, "stencil {t} vs closed form {oracle}");
    }
    assert!(largest > 1e-3, "T should not vanish for a non-Berwald metric: {largest}");
}

#[test]
fn coarser_extension_stencil_agrees() {
    let m = MetricSpec::hyperbolic_randers(2, 1.0, 0.05).unwrap();
    let x = Point::from_slice(&[0.3, -0.2]);
    let y = TangentVector::from_slices(&[0.3, -0.2], &[0.2, 0.5]).unwrap();
    let v = TangentVector::from_slices(&[0.3, -0.2], &[0.7, -0.1]).unwrap();
    let fine = t_curvature_with(&m, &x, &y, &v, &TCurvatureOptions::default()).unwrap();
    let coarse_opts = TCurvatureOptions {
        step: 3e-3,
        ..TCurvatureOptions::default()
    };
    let coarse = t_curvature_with(&m, &x, &y, &v, &coarse_opts).unwrap();
    assert!(fine.value.abs() > 1e-4);
    assert!((fine.value - coarse.value).abs() < 1e-4);
}

#[test]
fn t_vanishes_on_berwald_presets() {
    let metrics = [
        MetricSpec::euclidean(3).unwrap(),
        MetricSpec::hyperbolic(2, 1.0).unwrap(),
        MetricSpec::hyperbolic(3, 2.0).unwrap(),
        MetricSpec::minkowski_randers(DVector::from_vec(vec![0.3, 0.0])).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in &metrics {
        for _ in 0..5 {
            let (x, y, v) = random_sample(&mut rng, m.dim, 0.6);
            let ev = TCurvatureEvaluator::new(m, &x, &y, &TCurvatureOptions::default()).unwrap();
            let t = ev.value(&DVector::from_vec(v)).unwrap();
            assert!(t.abs() < 1e-7, "{} T = {t}", m.name);
        }
    }
}

#[test]
fn pole_direction_is_in_the_kernel() {
    let m = MetricSpec::hyperbolic_randers(3, 1.0, 0.05).unwrap();
    let x = [0.1, 0.2, -0.3];
    let y = [0.4, -0.2, 0.3];
    let ev = TCurvatureEvaluator::new(&m, &x, &y, &TCurvatureOptions::default()).unwrap();
    let t = ev.value(&DVector::from_vec(vec![0.8, -0.4, 0.6])).unwrap();
    assert!(t.abs() < 1e-8, "{t}");
}

#[test]
fn bound_check_finds_witness_below_measured_ratio() {
    let m = MetricSpec::hyperbolic_randers(2, 1.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<TSample> = (0..6)
        .map(|_| {
            let (x, y, u) = random_sample(&mut rng, 2, 0.5);
            TSample {
                x: DVector::from_vec(x),
                y: DVector::from_vec(y),
                u: DVector::from_vec(u),
            }
        })
        .collect();
    let opts = TCurvatureOptions::default();
    let measured = t_bound_check(&m, &samples, f64::INFINITY, &opts).unwrap();
    assert!(measured.holds && measured.max_ratio > 0.0);
    let tight = t_bound_check(&m, &samples, measured.max_ratio * 1.001, &opts).unwrap();
    assert!(tight.holds);
    let short = t_bound_check(&m, &samples, measured.max_ratio * 0.99, &opts).unwrap();
    assert!(!short.holds && short.worst.is_some());
    let riem = MetricSpec::hyperbolic(2, 1.0).unwrap();
    assert!(t_bound_check(&riem, &samples, 0.0, &opts).unwrap().holds);
}

#[test]
fn osculating_metric_reproduces_flag_curvature() {
    let m = MetricSpec::hyperbolic_randers(2, 1.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..4 {
        let (x, y, u) = random_sample(&mut rng, 2, 0.5);
        let k_hat = osculating_sectional_curvature(&m, &x, &y, &u, &TCurvatureOptions::default()).unwrap();
        let flag = Flag::new(Point::from_slice(&x), DVector::from_vec(y), DVector::from_vec(u)).unwrap();
        let k = flag_curvature(&m, &flag).unwrap();
        assert!((k - k_hat).abs() < 1e-4, "{k} vs {k_hat}");
    }
}

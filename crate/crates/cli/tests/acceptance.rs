use std::process::ExitCode;
use std::time::Instant;

use finsler_cli::{execute, Command, ScenarioConfig, Side};
use finsler_core::certificate::curvature_sweep;
use finsler_core::hypersurface::{
    detect_focal, lemma2_check, proposition3_check, random_lemma2_function, riccati_evolve, shape_operator_on,
    theorem3_verify, FlowOptions, ImmersedHypersurface, Lemma2Verdict, NormalSide, Theorem3Options, Verdict,
};
use finsler_core::jacobi::{
    comparison_check, integrate_bundle_partial, n_jacobi_diagonal, orthonormal_frame, ComparisonOptions,
    ComparisonSide, FocalOptions, IndexFormEvaluator, JacobiBundle, JacobiOrigin,
};
use finsler_core::ode::{OdeOptions, Termination};
use finsler_core::spray::{flag_curvature_from, local_geometry};
use finsler_core::tcurv::TCurvatureOptions;
use finsler_core::{GeometryError, MetricSpec, TangentVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn geo<T>(r: Result<T, GeometryError>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn unit(m: &MetricSpec, x: &[f64], y: &[f64]) -> Result<TangentVector, String> {
    let f = geo(m.norm(x, y))?;
    let y: Vec<f64> = y.iter().map(|c| c / f).collect();
    geo(TangentVector::from_slices(x, &y))
}

fn e(n: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })
}

fn space_form_curvature() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 3];
    for (slot, (m, want)) in [
        (geo(MetricSpec::hyperbolic(2, 1.0))?, -1.0),
        (geo(MetricSpec::hyperbolic(2, 2.0))?, -4.0),
        (geo(MetricSpec::euclidean(2))?, 0.0),
    ]
    .into_iter()
    .enumerate()
    {
        for x in m.sample_chart_points(100, 1 + slot as u64) {
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let g = geo(local_geometry(&m, &x, y.as_slice()))?;
            let k = geo(flag_curvature_from(&g.g, &g.curvature, &y, &u))?;
            worst[slot] = worst[slot].max((k - want).abs());
        }
    }
    ensure(
        worst[0] < 1e-6 && worst[1] < 1e-6 && worst[2] < 1e-9,
        format!("max |K + k^2|: k=1 {:.2e}, k=2 {:.2e}; euclidean |K| {:.2e}", worst[0], worst[1], worst[2]),
    )
}

fn berwald_t_vanishes() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for preset in ["euclidean", "hyperbolic:k=1", "minkowski-randers:b=0.3,0"] {
        let m = geo(MetricSpec::from_preset(preset, 2))?;
        let (cert, _) = geo(curvature_sweep(&m, 200, 2, true, &TCurvatureOptions::default()))?;
        let t = cert.max_abs_t.max(cert.max_antipodal_t);
        ok &= t < 1e-6;
        parts.push(format!("{preset} {t:.2e}"));
    }
    ensure(ok, format!("max |T| over 200 samples: {}", parts.join(", ")))
}

fn jacobi_closed_forms() -> Check {
    let ode = OdeOptions::default();
    let h = geo(MetricSpec::hyperbolic(2, 1.0))?;
    let init = unit(&h, &[0.0, 0.0], &[1.0, 0.0])?;
    let e0 = geo(orthonormal_frame(&h, &[0.0, 0.0], &[1.0, 0.0], &[]))?;
    let (hb, term) = geo(integrate_bundle_partial(
        &h,
        &init,
        &e0,
        &DMatrix::zeros(2, 1),
        &DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        3.0,
        JacobiOrigin::General,
        &ode,
    ))?;
    let eu = geo(MetricSpec::euclidean(2))?;
    let out = unit(&eu, &[1.0, 0.0], &[1.0, 0.0])?;
    let (eb, term2) = geo(n_jacobi_diagonal(&eu, &out, &[e(2, 1)], &[1.0], 3.0, &ode))?;
    if term != Termination::Completed || term2 != Termination::Completed {
        return Err("geodesic left the chart".into());
    }
    let norm = |b: &JacobiBundle, t: f64| -> Result<f64, String> {
        let x = b.position(t);
        let v = b.velocity(t);
        let (j, _) = b.chart_field(t, 0);
        let g = geo(finsler_core::spray::fundamental_matrix(&b.metric, x.as_slice(), v.as_slice()))?;
        Ok(j.dot(&(g * &j)).sqrt())
    };
    let (mut wh, mut we) = (0.0f64, 0.0f64);
    for i in 0..=300 {
        let t = 0.01 * i as f64;
        wh = wh.max((norm(&hb, t)? - t.sinh()).abs());
        we = we.max((norm(&eb, t)? - (1.0 + t)).abs());
    }
    ensure(
        wh < 1e-5 && we < 1e-5,
        format!("max error on [0,3]: sinh t {wh:.2e}, 1 + t {we:.2e}"),
    )
}

fn focal_anchor() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for dim in [2, 3] {
        let m = geo(MetricSpec::euclidean(dim))?;
        let s = geo(ImmersedHypersurface::from_preset(&m, "sphere:r=1", NormalSide::Inward, 4))?;
        let u = &s.samples[0];
        let rep = geo(detect_focal(&s, u, NormalSide::Inward, 1.5, &FocalOptions::default()))?;
        let t = *rep.focal_times.first().ok_or("no focal point found")?;
        let k0 = geo(geo(shape_operator_on(&s, u, NormalSide::Inward, &FlowOptions::default()))?.principal_curvatures())?[0];
        let zero = |_t: f64| Ok(0.0);
        let blow = match riccati_evolve(k0, &zero, 1.5, &OdeOptions::default()) {
            Err(GeometryError::BlowUp { time }) => time,
            other => return Err(format!("Riccati did not blow up: {other:?}")),
        };
        ok &= (t - 1.0).abs() <= 1e-6 && (t - blow).abs() <= 1e-6;
        parts.push(format!("dim {dim}: focal {t:.9}, blow-up {blow:.9}"));
    }
    ensure(ok, parts.join("; "))
}

/// Tangential frame perturbation `P` with `P(s) = 0`.
struct Perturbation {
    coeffs: Vec<[f64; 4]>,
    s: f64,
}

impl Perturbation {
    fn random(rng: &mut ChaCha8Rng, m: usize, s: f64) -> Self {
        Self {
            coeffs: (0..m)
                .map(|_| [0; 4].map(|_| rng.gen_range(-1.0..1.0)))
                .collect(),
            s,
        }
    }

    fn at(&self, tau: f64, n: usize) -> (DVector<f64>, DVector<f64>) {
        let mut p = DVector::zeros(n);
        let mut dp = DVector::zeros(n);
        let w = std::f64::consts::PI / self.s;
        for (i, c) in self.coeffs.iter().enumerate() {
            p[i] = c[0] * (1.0 - tau / self.s);
            dp[i] = -c[0] / self.s;
            for k in 1..4 {
                let kw = k as f64 * w;
                p[i] += c[k] * (kw * tau).sin();
                dp[i] += c[k] * kw * (kw * tau).cos();
            }
        }
        (p, dp)
    }
}

fn index_lemma() -> Check {
    let ode = OdeOptions::default();
    let hr = geo(MetricSpec::hyperbolic_randers(2, 1.0, 0.3))?;
    let h3 = geo(MetricSpec::hyperbolic(3, 1.0))?;
    let e3 = geo(MetricSpec::euclidean(3))?;
    let c = 1.0 / 0.5f64.tanh();
    let scenarios = [
        (
            "hyperbolic-randers",
            geo(n_jacobi_diagonal(&hr, &unit(&hr, &[0.1, 0.05], &[0.3, 0.2])?, &[e(2, 0)], &[0.4], 1.2, &ode))?.0,
        ),
        (
            "hyperbolic sphere",
            geo(n_jacobi_diagonal(&h3, &unit(&h3, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0])?, &[], &[c, c], 2.0, &ode))?.0,
        ),
        (
            "euclidean sphere",
            geo(n_jacobi_diagonal(&e3, &unit(&e3, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0])?, &[], &[1.0, 1.0], 2.0, &ode))?.0,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut worst_gap = f64::INFINITY;
    let mut worst_endpoint = 0.0f64;
    for (_, b) in &scenarios {
        let n = b.dim();
        let s = b.span;
        let ev = IndexFormEvaluator::new(b);
        for _ in 0..100 {
            let alpha: Vec<f64> = (0..b.fields).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jac = |tau: f64| {
                let (p, dp) = b.fields_at(tau);
                let a = DVector::from_column_slice(&alpha);
                (&p * &a, &dp * &a)
            };
            let pert = Perturbation::random(&mut rng, n - 1, s);
            let y = |tau: f64| {
                let (j, dj) = jac(tau);
                let (p, dp) = pert.at(tau, n);
                (j + p, dj + dp)
            };
            let ij = geo(ev.value(&jac, &jac, s))?.value;
            let iy = geo(ev.value(&y, &y, s))?.value;
            if iy < ij - 1e-9 {
                violations += 1;
            }
            worst_gap = worst_gap.min(iy - ij);
            let (j, dj) = jac(s);
            worst_endpoint = worst_endpoint.max((ij - j.dot(&dj)).abs());
        }
    }
    ensure(
        violations == 0 && worst_endpoint < 1e-6,
        format!(
            "300 fields on 3 scenarios: {violations} violations, min I(Y,Y) - I(J,J) {worst_gap:.2e}, endpoint identity error {worst_endpoint:.2e}"
        ),
    )
}

fn diagonal_side(m: &MetricSpec, x: &[f64], y: &[f64], spectrum: &[f64]) -> Result<ComparisonSide, String> {
    let init = unit(m, x, y)?;
    let e0 = geo(orthonormal_frame(m, x, init.components.as_slice(), &[]))?;
    Ok(ComparisonSide {
        metric: m.clone(),
        foot: init.base.coords.clone(),
        normal: init.components.clone(),
        tangent: (0..m.dim - 1).map(|a| e0.column(a).clone_owned()).collect(),
        spectrum: spectrum.to_vec(),
    })
}

fn comparison_harness() -> Check {
    let h = geo(MetricSpec::hyperbolic(2, 1.0))?;
    let eu = geo(MetricSpec::euclidean(2))?;
    let opts = ComparisonOptions::default();
    let rep = geo(comparison_check(
        &diagonal_side(&h, &[0.0, 0.0], &[1.0, 0.0], &[1.0])?,
        &diagonal_side(&eu, &[0.0, 0.0], &[1.0, 0.0], &[1.0])?,
        &opts,
    ))?;
    let mut closed = 0.0f64;
    let mut pointwise = true;
    for i in 0..rep.times.len() {
        let t = rep.times[i];
        closed = closed.max((rep.norms[i] - t.exp()).abs() / t.exp()).max((rep.norms_bar[i] - (1.0 + t)).abs());
        pointwise &= rep.norms[i] >= rep.norms_bar[i];
    }
    let hr = geo(MetricSpec::hyperbolic_randers(3, 1.0, 0.05))?;
    let hk = geo(MetricSpec::hyperbolic(3, 0.9))?;
    let rep2 = geo(comparison_check(
        &diagonal_side(&hr, &[0.05, -0.1, 0.0], &[1.0, 0.3, -0.2], &[1.5, 1.2])?,
        &diagonal_side(&hk, &[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 1.0])?,
        &opts,
    ))?;
    ensure(
        pointwise && closed < 1e-6 && rep.violations == 0 && rep2.violations == 0 && rep2.min_margin >= 0.0,
        format!(
            "e^t vs 1+t: closed-form error {closed:.2e}, pointwise {pointwise}; randers vs hyperbolic(0.9): min margin {:.3e}, curvature gap {:.3e}, {} violations",
            rep2.min_margin, rep2.curvature_gap, rep2.violations
        ),
    )
}

fn lemma2_suite() -> Check {
    let mut violations = 0;
    let mut rejected = 0;
    let mut worst = f64::NEG_INFINITY;
    for (i, lambda) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        for _ in 0..50 {
            let f = geo(random_lemma2_function(lambda, 5.0, 1000, &mut rng))?;
            match lemma2_check(lambda, &f, 5.0) {
                Lemma2Verdict::Holds { max_excess } => worst = worst.max(max_excess),
                Lemma2Verdict::Violated { .. } => violations += 1,
                Lemma2Verdict::PreconditionRejected { .. } => rejected += 1,
            }
        }
    }
    ensure(
        violations == 0 && rejected == 0,
        format!("150 functions: {violations} violations, {rejected} rejected, max (f + lambda) {worst:.3e}"),
    )
}

fn equidistant_convexity() -> Check {
    let m = geo(MetricSpec::hyperbolic_randers(2, 1.0, 0.05))?;
    let (cert, _) = geo(curvature_sweep(&m, 200, 11, true, &TCurvatureOptions::default()))?;
    let k_hat = cert.k_hat.ok_or("sampled curvature is not negative")?;
    if !cert.separates() {
        return Err(format!("certificate does not separate: delta {} k {k_hat}", cert.delta_hat));
    }
    // sampled extrema, widened by 25% toward the unsampled flags
    let (k, delta) = (k_hat / 1.25, cert.delta_hat * 1.25);
    let s = geo(ImmersedHypersurface::from_preset(&m, "geodesic-sphere:r=0.5", NormalSide::Outward, 64))?;
    let opts = Theorem3Options {
        t_max: 3.0,
        riccati_window: 3.0,
        riccati_tolerance: 1e-3,
        ..Theorem3Options::default()
    };
    let rep = geo(theorem3_verify(&s, k, delta, &opts))?;
    let convex = rep.reports.iter().all(|r| r.verdict == Verdict::LocallyConvex);
    ensure(
        rep.passed && convex && rep.base_min_kn > 2.0 * delta && rep.riccati_error <= 1e-3,
        format!(
            "delta_hat {:.4e} < k_hat {k_hat:.4}; min k_n {:.4} > 2 delta; {} of {} times locally convex; Riccati error {:.2e}; failures {:?}",
            cert.delta_hat,
            rep.base_min_kn,
            rep.reports.iter().filter(|r| r.verdict == Verdict::LocallyConvex).count(),
            rep.reports.len(),
            rep.riccati_error,
            rep.failures
        ),
    )
}

fn normal_curvature_decomposition() -> Check {
    let m = geo(MetricSpec::hyperbolic_randers(2, 1.0, 0.05))?;
    let s = geo(ImmersedHypersurface::from_preset(&m, "sphere:r=0.5", NormalSide::Outward, 20))?;
    let res = geo(proposition3_check(&s, &FlowOptions::default(), &TCurvatureOptions::default()))?;
    let worst = res.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let t_max = res.iter().map(|r| r.t_value.abs()).fold(0.0, f64::max);
    ensure(
        s.samples.len() == 20 && worst < 1e-4,
        format!("{} rows on 20 samples: max |k_n - (kt_n - T_n)| {worst:.2e} with max |T_n| {t_max:.2e}", res.len()),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenarios = [
        (
            Command::CurvatureReport,
            ScenarioConfig {
                metric: "hyperbolic-randers:k=1,eps=0.05".into(),
                samples: 24,
                seed: 9,
                ..ScenarioConfig::default()
            },
        ),
        (
            Command::Theorem3,
            ScenarioConfig {
                metric: "hyperbolic-randers:k=1,eps=0.05".into(),
                surface: "geodesic-sphere:r=0.5".into(),
                samples: 6,
                grid: 10,
                t_max: 1.0,
                k: Some(0.8),
                delta: Some(0.02),
                ..ScenarioConfig::default()
            },
        ),
        (
            Command::Focal,
            ScenarioConfig {
                surface: "sphere:r=1".into(),
                side: Side::Inward,
                samples: 4,
                t_max: 1.5,
                ..ScenarioConfig::default()
            },
        ),
        (Command::Lemma2, ScenarioConfig { samples: 10, seed: 4, ..ScenarioConfig::default() }),
    ];
    let mut names = Vec::new();
    for (cmd, cfg) in &scenarios {
        let mut texts = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{}-{run}", cmd.name()));
            let ex = execute(*cmd, cfg, &out);
            if ex.exit_code != 0 {
                return Err(format!("{} exited with {}: {:?}", cmd.name(), ex.exit_code, ex.error));
            }
            let csv = std::fs::read(out.join(format!("{}.csv", cmd.name()))).map_err(|e| e.to_string())?;
            let mut summary = ex.summary.ok_or("no summary")?;
            summary.wall_time_seconds = 0.0;
            texts.push((csv, summary.to_json()));
        }
        if texts[0] != texts[1] {
            return Err(format!("{} outputs differ between runs", cmd.name()));
        }
        names.push(cmd.name());
    }
    Ok(format!("byte-identical CSVs and summaries across two runs: {}", names.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check, Option<f64>); 10] = [
        ("space-form curvature", space_form_curvature, Some(10.0)),
        ("Berwald T-vanishing", berwald_t_vanishes, Some(60.0)),
        ("Jacobi closed forms", jacobi_closed_forms, None),
        ("focal anchor", focal_anchor, None),
        ("index lemma", index_lemma, None),
        ("Jacobi comparison harness", comparison_harness, None),
        ("scalar Riccati comparison suite", lemma2_suite, None),
        ("equidistant convexity pipeline", equidistant_convexity, Some(300.0)),
        ("normal curvature decomposition", normal_curvature_decomposition, None),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let over = budget.is_some_and(|b| secs > b);
        let (status, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; runtime over {:.0} s budget", budget.unwrap())),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} {status} {name} ({secs:.1} s): {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

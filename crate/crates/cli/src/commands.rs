use clap::ValueEnum;
use finsler_core::certificate::curvature_sweep;
use finsler_core::geodesic::integrate_geodesic_partial;
use finsler_core::hypersurface::{
    detect_focal, lemma2_check, random_lemma2_function, shape_operator_on, theorem3_verify, FlowOptions,
    ImmersedHypersurface, Lemma2Verdict, NormalSide, Theorem3Options, Verdict,
};
use finsler_core::jacobi::{
    comparison_check, integrate_bundle_partial, n_jacobi_diagonal, orthonormal_frame, ComparisonOptions,
    ComparisonSide, FocalOptions, JacobiOrigin,
};
use finsler_core::ode::{OdeOptions, Termination};
use finsler_core::tcurv::TCurvatureOptions;
use finsler_core::{GeometryError, MetricSpec, Point, TangentVector};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{BarConfig, ScenarioConfig, Side};
use crate::csv::{indexed, Table};
use crate::summary::{Assertion, RunSummary};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    CurvatureReport,
    Geodesic,
    Jacobi,
    Focal,
    Compare,
    Theorem3,
    Lemma2,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CurvatureReport => "curvature-report",
            Command::Geodesic => "geodesic",
            Command::Jacobi => "jacobi",
            Command::Focal => "focal",
            Command::Compare => "compare",
            Command::Theorem3 => "theorem3",
            Command::Lemma2 => "lemma2",
        }
    }
}

/// A finished run: the summary (without wall time) and the CSV body.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: RunSummary,
    pub csv: Table,
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        use GeometryError::*;
        match e {
            HypothesisViolated { what, witness } => CliError::Hypothesis { what, witness },
            InvalidPreset(_)
            | InvalidRanders(_)
            | InvalidMetric(_)
            | UnsupportedDimension(_)
            | DimensionMismatch { .. }
            | EvaluationOutsideDomain { .. }
            | ZeroVector
            | DegenerateImmersion(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub fn run(command: Command, cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    match command {
        Command::CurvatureReport => curvature_report(cfg),
        Command::Geodesic => geodesic(cfg),
        Command::Jacobi => jacobi(cfg),
        Command::Focal => focal(cfg),
        Command::Compare => compare(cfg),
        Command::Theorem3 => theorem3(cfg),
        Command::Lemma2 => lemma2(cfg),
    }
}

fn metric(cfg: &ScenarioConfig) -> Result<MetricSpec, CliError> {
    Ok(MetricSpec::from_preset(&cfg.metric, cfg.dim)?)
}

fn side(s: Side) -> NormalSide {
    match s {
        Side::Outward => NormalSide::Outward,
        Side::Inward => NormalSide::Inward,
    }
}

fn surface(cfg: &ScenarioConfig, m: &MetricSpec) -> Result<ImmersedHypersurface, CliError> {
    Ok(ImmersedHypersurface::from_preset(m, &cfg.surface, side(cfg.side), cfg.samples)?)
}

fn required<'a>(v: &'a Option<Vec<f64>>, name: &str, dim: usize) -> Result<&'a [f64], CliError> {
    match v {
        Some(v) if v.len() == dim => Ok(v),
        Some(v) => Err(CliError::Config(format!("{name} has {} components, expected {dim}", v.len()))),
        None => Err(CliError::Config(format!("{name} is required"))),
    }
}

/// F-unit tangent vector at `point` along `direction`.
fn unit_start(m: &MetricSpec, point: &[f64], direction: &[f64]) -> Result<TangentVector, CliError> {
    let f = m.norm(point, direction)?;
    Ok(TangentVector::new(
        Point::new(DVector::from_column_slice(point)),
        DVector::from_column_slice(direction) / f,
    )?)
}

fn grid(t_end: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|i| t_end * i as f64 / k as f64).collect()
}

fn curvature_report(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let m = metric(cfg)?;
    let n = m.dim;
    let (cert, samples) = curvature_sweep(&m, cfg.samples, cfg.seed, true, &TCurvatureOptions::default())?;
    let mut cols = indexed("x", n);
    cols.extend(indexed("y", n));
    cols.extend(indexed("v", n));
    cols.extend(["K".to_string(), "T".to_string(), "T_antipodal".to_string()]);
    let mut csv = Table::new(
        &cols,
        "y F-unit; v g_y-unit and g_y-orthogonal to y; K = g_y(R_y v v)/(g_y(y y)g_y(v v)-g_y(y v)^2); T = T_y(v); T_antipodal = T_y(-y)",
    );
    for s in &samples {
        let mut row: Vec<f64> = s.x.iter().chain(s.y.iter()).chain(s.v.iter()).copied().collect();
        row.extend([s.flag_curvature, s.t_value, s.t_antipodal]);
        csv.row(&row);
    }
    let mut sum = RunSummary::new(Command::CurvatureReport.name(), cfg);
    sum.metric("max_flag_curvature", cert.max_flag_curvature);
    sum.metric("min_flag_curvature", cert.min_flag_curvature);
    sum.metric("max_abs_t", cert.max_abs_t);
    sum.metric("delta_hat", cert.delta_hat);
    sum.metric("max_antipodal_t", cert.max_antipodal_t);
    match cert.k_hat {
        Some(k) => {
            sum.metric("k_hat", k);
            sum.notes.push(format!(
                "certificate: K <= -{k:.6e}^2 and |T| <= {:.6e} g_y(v,v) on the samples; delta_hat {} k_hat",
                cert.delta_hat,
                if cert.separates() { "<" } else { ">=" }
            ));
        }
        None => sum.notes.push("no negative curvature bound: max K is nonnegative".into()),
    }
    let tol = cfg.tolerance.unwrap_or(1e-6);
    if let Some(k) = cfg.k {
        sum.assert(Assertion::at_most("flag curvature <= -k^2", cert.max_flag_curvature, -k * k + tol));
    }
    if let Some(d) = cfg.delta {
        sum.assert(Assertion::at_most("T ratio <= delta", cert.delta_hat, d + tol));
    }
    if cfg.k.is_some() && cfg.delta.is_some() {
        sum.assert(Assertion::holds(
            "certificate separates",
            cert.separates(),
            Some(format!("delta_hat {} vs k_hat {:?}", cert.delta_hat, cert.k_hat)),
        ));
    }
    Ok(Outcome { summary: sum, csv })
}

fn geodesic(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let m = metric(cfg)?;
    let n = m.dim;
    let init = unit_start(&m, required(&cfg.point, "point", n)?, required(&cfg.direction, "direction", n)?)?;
    let (path, term) = integrate_geodesic_partial(&m, &init, cfg.t_max, &OdeOptions::default())?;
    let mut cols = indexed("x", n);
    cols.extend(indexed("v", n));
    cols.extend(["F".to_string(), "residual".to_string()]);
    let mut csv = Table::new(&cols, "geodesic equation x'' + 2G(x x') = 0; residual = |x'' + 2G|");
    let mut worst = 0.0f64;
    let mut worst_res = 0.0f64;
    let h = 1e-5;
    for t in grid(path.span, cfg.grid) {
        let (x, v) = path.state(t);
        let f = m.norm(x.as_slice(), v.as_slice())?;
        let tc = t.clamp(h, (path.span - h).max(h));
        let res = path.residual(tc, h)?;
        worst = worst.max((f - 1.0).abs());
        worst_res = worst_res.max(res);
        let mut row: Vec<f64> = x.iter().chain(v.iter()).copied().collect();
        row.extend([f, res]);
        csv.row(&row);
    }
    let mut sum = RunSummary::new(Command::Geodesic.name(), cfg);
    sum.metric("span", path.span);
    sum.metric("max_speed_error", worst);
    sum.metric("max_residual", worst_res);
    if let Termination::Exited { time } = term {
        sum.notes.push(format!("reached the chart margin at t = {time}"));
    }
    sum.assert(Assertion::at_most("unit speed", worst, cfg.tolerance.unwrap_or(1e-8)));
    Ok(Outcome { summary: sum, csv })
}

fn jacobi(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let m = metric(cfg)?;
    let n = m.dim;
    let init = unit_start(&m, required(&cfg.point, "point", n)?, required(&cfg.direction, "direction", n)?)?;
    let ode = OdeOptions::default();
    let (bundle, term) = match &cfg.spectrum {
        Some(spec) => n_jacobi_diagonal(&m, &init, &[], spec, cfg.t_max, &ode)?,
        None => {
            let e0 = orthonormal_frame(&m, init.base.coords.as_slice(), init.components.as_slice(), &[])?;
            let phi0 = DMatrix::zeros(n, n - 1);
            let dphi0 = DMatrix::from_fn(n, n - 1, |i, j| if i == j { 1.0 } else { 0.0 });
            integrate_bundle_partial(&m, &init, &e0, &phi0, &dphi0, cfg.t_max, JacobiOrigin::General, &ode)?
        }
    };
    let fields = n - 1;
    let mut cols = vec!["t".to_string()];
    cols.extend(indexed("norm_J", fields));
    cols.extend(indexed("norm_dJ", fields));
    cols.extend(["frame_drift".to_string(), "lagrange".to_string()]);
    let convention = if cfg.spectrum.is_some() {
        "N-Jacobi J(0) = E_a and J'(0) = S E_a; norms in g_c'; lagrange = g(J_0 J_1') - g(J_1 J_0')"
    } else {
        "J(0) = 0 and J'(0) = E_a; norms in g_c'; lagrange = g(J_0 J_1') - g(J_1 J_0')"
    };
    let mut csv = Table::new(&cols, convention);
    let omega = |t: f64| -> f64 {
        if fields < 2 {
            return 0.0;
        }
        let (p, dp) = bundle.fields_at(t);
        p.column(0).dot(&dp.column(1)) - p.column(1).dot(&dp.column(0))
    };
    let w0 = omega(0.0);
    let mut drift = 0.0f64;
    let mut lag = 0.0f64;
    for t in grid(bundle.span, cfg.grid) {
        let (p, dp) = bundle.fields_at(t);
        let d = bundle.frame_drift(t)?;
        let w = omega(t);
        drift = drift.max(d);
        lag = lag.max((w - w0).abs());
        let mut row = vec![t];
        row.extend((0..fields).map(|b| p.column(b).norm()));
        row.extend((0..fields).map(|b| dp.column(b).norm()));
        row.extend([d, w]);
        csv.row(&row);
    }
    let mut sum = RunSummary::new(Command::Jacobi.name(), cfg);
    sum.metric("span", bundle.span);
    sum.metric("max_frame_drift", drift);
    sum.metric("max_lagrange_drift", lag);
    if let Termination::Exited { time } = term {
        sum.notes.push(format!("reached the chart margin at t = {time}"));
    }
    let tol = cfg.tolerance.unwrap_or(1e-7);
    sum.assert(Assertion::at_most("frame stays orthonormal", drift, tol));
    sum.assert(Assertion::at_most("Lagrange identity", lag, tol));
    Ok(Outcome { summary: sum, csv })
}

fn focal(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let m = metric(cfg)?;
    let s = surface(cfg, &m)?;
    let sd = side(cfg.side);
    let fopts = FocalOptions {
        grid: cfg.grid.max(2) * 10,
        ..FocalOptions::default()
    };
    let per: Vec<(f64, _)> = s
        .samples
        .par_iter()
        .map(|u| {
            let shape = shape_operator_on(&s, u, sd, &FlowOptions::default())?;
            let kmin = shape.principal_curvatures()?[0];
            Ok((kmin, detect_focal(&s, u, sd, cfg.t_max, &fopts)?))
        })
        .collect::<Result<_, GeometryError>>()?;
    let mut csv = Table::with(&["sample", "t", "det_M"], "det M over tangential N-Jacobi frame components; focal where det M = 0");
    let mut sum = RunSummary::new(Command::Focal.name(), cfg);
    let min_kn = per.iter().map(|(k, _)| *k).fold(f64::INFINITY, f64::min);
    let mut first: Option<(usize, f64)> = None;
    for (i, (_, rep)) in per.iter().enumerate() {
        for (t, d) in &rep.det_trace {
            csv.row(&[i as f64, *t, *d]);
        }
        if let Some(&t) = rep.focal_times.first() {
            if first.is_none_or(|(_, b)| t < b) {
                first = Some((i, t));
            }
        }
    }
    let count: usize = per.iter().map(|(_, r)| r.focal_times.len()).sum();
    sum.metric("min_principal_curvature", min_kn);
    sum.metric("focal_points", count as f64);
    if let Some((i, t)) = first {
        sum.metric("first_focal_time", t);
        sum.notes.push(format!("first focal point at t = {t:.12} on sample {i}"));
    }
    let delta = cfg.delta.unwrap_or(0.0);
    if min_kn >= delta {
        sum.assert(Assertion::holds(
            "no focal points when k_n >= delta",
            count == 0,
            first.map(|(i, t)| format!("focal point at t = {t} on sample {i}")),
        ));
    } else {
        sum.notes.push(format!("hypothesis k_n >= {delta} not met (min {min_kn:.6}); no assertion"));
    }
    Ok(Outcome { summary: sum, csv })
}

fn comparison_side(
    metric_text: &str,
    dim: usize,
    surface_text: Option<&str>,
    point: &Option<Vec<f64>>,
    direction: &Option<Vec<f64>>,
    spectrum: &Option<Vec<f64>>,
    sd: NormalSide,
) -> Result<ComparisonSide, CliError> {
    let m = MetricSpec::from_preset(metric_text, dim)?;
    if let Some(spec) = spectrum {
        let init = unit_start(&m, required(point, "point", dim)?, required(direction, "direction", dim)?)?;
        let e0 = orthonormal_frame(&m, init.base.coords.as_slice(), init.components.as_slice(), &[])?;
        return Ok(ComparisonSide {
            metric: m,
            foot: init.base.coords.clone(),
            normal: init.components.clone(),
            tangent: (0..dim - 1).map(|a| e0.column(a).clone_owned()).collect(),
            spectrum: spec.clone(),
        });
    }
    let text = surface_text.ok_or_else(|| CliError::Config("a comparison side needs a surface or a spectrum".into()))?;
    let s = ImmersedHypersurface::from_preset(&m, text, sd, 1)?;
    let shape = shape_operator_on(&s, &s.samples[0], sd, &FlowOptions::default())?;
    Ok(ComparisonSide::from_shape_operator(&m, shape.foot.clone(), shape.normal.clone(), &shape.chart)?)
}

fn compare(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let bar_cfg: BarConfig = cfg
        .bar
        .clone()
        .ok_or_else(|| CliError::Config("compare needs a `bar` side".into()))?;
    let sd = side(cfg.side);
    let a = comparison_side(&cfg.metric, cfg.dim, Some(&cfg.surface), &cfg.point, &cfg.direction, &cfg.spectrum, sd)?;
    let b = comparison_side(
        &bar_cfg.metric,
        cfg.dim,
        bar_cfg.surface.as_deref(),
        &bar_cfg.point,
        &bar_cfg.direction,
        &bar_cfg.spectrum,
        sd,
    )?;
    let opts = ComparisonOptions {
        t_max: cfg.t_max,
        grid: cfg.grid,
        seed: cfg.seed,
        margin_slack: cfg.tolerance.unwrap_or(1e-9),
        ..ComparisonOptions::default()
    };
    let rep = comparison_check(&a, &b, &opts)?;
    let mut csv = Table::with(
        &["t", "norm_J", "norm_Jbar", "difference"],
        "first eigenfield; norm_J = sqrt(g(J J)) and norm_Jbar = sqrt(gbar(Jbar Jbar)); difference = norm_J - norm_Jbar",
    );
    for i in 0..rep.times.len() {
        csv.row(&[rep.times[i], rep.norms[i], rep.norms_bar[i], rep.norms[i] - rep.norms_bar[i]]);
    }
    let mut sum = RunSummary::new(Command::Compare.name(), cfg);
    sum.metric("min_margin", rep.min_margin);
    sum.metric("curvature_gap", rep.curvature_gap);
    sum.metric("bar_none_focal_up_to", rep.bar_focal.none_found_up_to);
    sum.assert(Assertion::at_most("g(J,J) >= gbar(Jbar,Jbar)", -rep.min_margin, opts.margin_slack));
    sum.assert(Assertion::holds(
        "no comparison violations",
        rep.violations == 0,
        Some(format!("{} violations", rep.violations)),
    ));
    Ok(Outcome { summary: sum, csv })
}

fn theorem3(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let m = metric(cfg)?;
    let s = surface(cfg, &m)?;
    let mut sum = RunSummary::new(Command::Theorem3.name(), cfg);
    let (k, delta) = match (cfg.k, cfg.delta) {
        (Some(k), Some(d)) => (k, d),
        (k, d) => {
            let (cert, _) = curvature_sweep(&m, cfg.certificate_samples, cfg.seed, true, &TCurvatureOptions::default())?;
            let k_hat = cert.k_hat.ok_or_else(|| CliError::Hypothesis {
                what: "negative curvature certificate".into(),
                witness: format!("sampled max K = {}", cert.max_flag_curvature),
            })?;
            sum.metric("k_hat", k_hat);
            sum.metric("delta_hat", cert.delta_hat);
            let f = 1.0 + cfg.certificate_slack;
            (k.unwrap_or(k_hat / f), d.unwrap_or(cert.delta_hat * f))
        }
    };
    if !(delta < k) {
        return Err(CliError::Hypothesis {
            what: "delta < k".into(),
            witness: format!("delta {delta} and k {k}"),
        });
    }
    let tol = cfg.tolerance.unwrap_or(1e-3);
    let opts = Theorem3Options {
        t_max: cfg.t_max,
        intervals: cfg.grid,
        riccati_window: cfg.t_max,
        riccati_tolerance: tol,
        ..Theorem3Options::default()
    };
    let rep = theorem3_verify(&s, k, delta, &opts)?;
    let mut csv = Table::with(
        &[
            "t",
            "min_kn",
            "min_kt_measured",
            "min_kt_predicted",
            "theorem3_margin",
            "proposition3_margin",
            "locally_convex",
        ],
        "k_n = -g_n(c'' + 2G(c') n) with g_n(y y) = 1; S(w) = d_w n + N(n)w; theorem3_margin = min kt_predicted - delta",
    );
    for r in &rep.reports {
        csv.row(&[
            r.t,
            r.min_kn,
            r.min_kt_measured,
            r.min_kt_predicted,
            r.theorem3_margin,
            r.proposition3_margin,
            if r.verdict == Verdict::LocallyConvex { 1.0 } else { 0.0 },
        ]);
    }
    sum.metric("k", k);
    sum.metric("delta", delta);
    sum.metric("base_min_kn", rep.base_min_kn);
    sum.metric("max_flag_curvature", rep.max_flag_curvature);
    sum.metric("t_bound_max_ratio", rep.t_bound.max_ratio);
    sum.metric("riccati_error", rep.riccati_error);
    sum.notes.extend(rep.failures.iter().cloned());
    let convex = rep.reports.iter().filter(|r| r.verdict == Verdict::LocallyConvex).count();
    let first_bad = rep.reports.iter().find(|r| r.verdict != Verdict::LocallyConvex).map(|r| format!("t = {}", r.t));
    sum.assert(Assertion::holds("every equidistant locally convex", convex == rep.reports.len(), first_bad));
    sum.assert(Assertion::at_most("Riccati prediction matches measurement", rep.riccati_error, tol));
    sum.assert(Assertion::holds("convexity pipeline", rep.passed, rep.failures.first().cloned()));
    Ok(Outcome { summary: sum, csv })
}

fn lemma2(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let mut csv = Table::with(
        &["lambda", "index", "max_excess", "verdict"],
        "verdict 1 = f <= -lambda holds; 0 = violated; -1 = input rejected; max_excess = max(f + lambda)",
    );
    let mut sum = RunSummary::new(Command::Lemma2.name(), cfg);
    let mut violations = 0usize;
    let mut rejected = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for (li, &lambda) in cfg.lambdas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(li as u64));
        for i in 0..cfg.samples {
            let f = random_lemma2_function(lambda, cfg.t_max, cfg.grid.max(2) * 20, &mut rng)?;
            let (excess, code) = match lemma2_check(lambda, &f, cfg.t_max) {
                Lemma2Verdict::Holds { max_excess } => (max_excess, 1.0),
                Lemma2Verdict::Violated { time, value } => {
                    violations += 1;
                    witness.get_or_insert(format!("lambda {lambda}, sample {i}: f({time}) = {value}"));
                    (value + lambda, 0.0)
                }
                Lemma2Verdict::PreconditionRejected { reason } => {
                    rejected += 1;
                    witness.get_or_insert(format!("lambda {lambda}, sample {i}: {reason}"));
                    (f64::NAN, -1.0)
                }
            };
            if excess.is_finite() {
                worst = worst.max(excess);
            }
            csv.row(&[lambda, i as f64, excess, code]);
        }
    }
    sum.metric("max_excess", worst);
    sum.metric("violations", violations as f64);
    sum.metric("rejected", rejected as f64);
    sum.assert(Assertion::holds("f <= -lambda", violations == 0, witness.clone()));
    sum.assert(Assertion::holds("certified inputs accepted", rejected == 0, witness));
    Ok(Outcome { summary: sum, csv })
}

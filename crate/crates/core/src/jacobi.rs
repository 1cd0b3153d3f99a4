//! Parallel frames, Jacobi fields, focal points, index forms and the
//! transplantation comparison.
//!
//! Geodesic, parallel frame and Jacobi fields are integrated as one system.
//! In a parallel `g_ċ`-orthonormal frame `E` (with `E_n = ċ/F`) a field
//! `J = φ^a E_a` satisfies `φ″ = −R̂ φ`, `R̂ = E⁻¹ R_ċ E`, and covariant
//! derivatives along `c` become plain derivatives of `φ`.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeometryError, Result};
use crate::geodesic::GeodesicPath;
use crate::metric::MetricSpec;
use crate::ode::{solve_adaptive, DenseSolution, OdeOptions, OdeSystem, Termination};
use crate::quadrature::{integrate, QuadratureOptions};
use crate::spray::{fundamental_matrix, local_geometry, spray_and_connection};
use crate::types::TangentVector;

/// Columns `E_1..E_n`, `g_v`-orthonormal with `E_n = v/F(v)`, obtained by
/// Gram–Schmidt from `seeds` and then the coordinate axes.
pub fn orthonormal_frame(metric: &MetricSpec, x: &[f64], v: &[f64], seeds: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = metric.dim;
    let g = fundamental_matrix(metric, x, v)?;
    let f = metric.norm(x, v)?;
    let en = DVector::from_column_slice(v) / f;
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let axes = (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }));
    for c in seeds.iter().cloned().chain(axes) {
        if basis.len() == n - 1 {
            break;
        }
        let scale = c.norm();
        let mut w = c;
        for e in basis.iter().chain(std::iter::once(&en)) {
            let proj = e.dot(&(&g * &w));
            w -= e * proj;
        }
        let norm = w.dot(&(&g * &w)).max(0.0).sqrt();
        if norm > 1e-8 * scale.max(1e-300) {
            basis.push(w / norm);
        }
    }
    basis.push(en);
    Ok(DMatrix::from_columns(&basis))
}

/// Geodesic + parallel frame + `fields` Jacobi fields in frame coordinates.
struct BundleSystem<'a> {
    metric: &'a MetricSpec,
    fields: usize,
}

impl BundleSystem<'_> {
    fn layout(&self) -> (usize, usize, usize, usize) {
        let n = self.metric.dim;
        let e = 2 * n;
        let phi = e + n * n;
        let dphi = phi + n * self.fields;
        (n, e, phi, dphi)
    }
}

impl OdeSystem for BundleSystem<'_> {
    fn dim(&self) -> usize {
        let n = self.metric.dim;
        2 * n + n * n + 2 * n * self.fields
    }

    fn rhs(&self, _t: f64, s: &[f64], d: &mut [f64]) -> Result<()> {
        let (n, e0, p0, dp0) = self.layout();
        let x = &s[..n];
        let v = &s[n..2 * n];
        let e = DMatrix::from_column_slice(n, n, &s[e0..p0]);
        let (g, nm, r) = if self.fields == 0 {
            let (g, nm) = spray_and_connection(self.metric, x, v)?;
            (g, nm, None)
        } else {
            let geo = local_geometry(self.metric, x, v)?;
            (geo.spray, geo.connection, Some(geo.curvature))
        };
        for i in 0..n {
            d[i] = v[i];
            d[n + i] = -2.0 * g[i];
        }
        let de = -(&nm * &e);
        d[e0..p0].copy_from_slice(de.as_slice());
        if let Some(r) = r {
            let rhat = e
                .clone()
                .lu()
                .solve(&(&r * &e))
                .ok_or(GeometryError::SingularTensor { condition: f64::INFINITY })?;
            let phi = DMatrix::from_column_slice(n, self.fields, &s[p0..dp0]);
            let ddphi = -(&rhat * &phi);
            d[p0..dp0].copy_from_slice(&s[dp0..]);
            d[dp0..].copy_from_slice(ddphi.as_slice());
        }
        Ok(())
    }

    fn admissible(&self, s: &[f64]) -> bool {
        self.metric.chart.contains_with_margin(&s[..self.metric.dim])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JacobiOrigin {
    /// Only the parallel frame was transported.
    Frame,
    /// Initial data given directly.
    General,
    /// `J′(0) = S(J(0))` for the given shape operator, in frame coordinates.
    NJacobi { shape_hat: DMatrix<f64> },
}

/// A geodesic carrying a parallel frame and Jacobi fields, continuous in `t`.
#[derive(Debug, Clone)]
pub struct JacobiBundle {
    pub metric: MetricSpec,
    pub solution: DenseSolution,
    pub fields: usize,
    pub span: f64,
    pub origin: JacobiOrigin,
}

/// Samples of Jacobi fields on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiRecord {
    pub times: Vec<f64>,
    /// `φ(t)`, one column per field.
    pub frame_values: Vec<DMatrix<f64>>,
    /// `φ′(t)`.
    pub frame_derivatives: Vec<DMatrix<f64>>,
    /// `J(t) = E(t) φ(t)` in chart coordinates.
    pub chart_values: Vec<DMatrix<f64>>,
    pub chart_derivatives: Vec<DMatrix<f64>>,
    pub origin: JacobiOrigin,
}

impl JacobiBundle {
    pub fn dim(&self) -> usize {
        self.metric.dim
    }

    fn raw(&self, t: f64) -> Vec<f64> {
        self.solution.eval(t)
    }

    pub fn position(&self, t: f64) -> DVector<f64> {
        let n = self.dim();
        DVector::from_column_slice(&self.raw(t)[..n])
    }

    pub fn velocity(&self, t: f64) -> DVector<f64> {
        let n = self.dim();
        DVector::from_column_slice(&self.raw(t)[n..2 * n])
    }

    pub fn frame(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_column_slice(n, n, &self.raw(t)[2 * n..2 * n + n * n])
    }

    /// `(φ, φ′)` at `t`, one column per field.
    pub fn fields_at(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let m = self.fields;
        let s = self.raw(t);
        let p0 = 2 * n + n * n;
        (
            DMatrix::from_column_slice(n, m, &s[p0..p0 + n * m]),
            DMatrix::from_column_slice(n, m, &s[p0 + n * m..]),
        )
    }

    /// `(J, ∇_ċ J)` of field `b` in chart coordinates.
    pub fn chart_field(&self, t: f64, b: usize) -> (DVector<f64>, DVector<f64>) {
        let e = self.frame(t);
        let (p, dp) = self.fields_at(t);
        (&e * p.column(b), &e * dp.column(b))
    }

    /// `R̂ = E⁻¹ R_ċ E` at `t`.
    pub fn curvature_hat(&self, t: f64) -> Result<DMatrix<f64>> {
        let x = self.position(t);
        let v = self.velocity(t);
        let e = self.frame(t);
        let geo = local_geometry(&self.metric, x.as_slice(), v.as_slice())?;
        e.clone()
            .lu()
            .solve(&(&geo.curvature * &e))
            .ok_or(GeometryError::SingularTensor { condition: f64::INFINITY })
    }

    /// `‖Eᵀ g_ċ E − I‖_max` at `t`.
    pub fn frame_drift(&self, t: f64) -> Result<f64> {
        let x = self.position(t);
        let v = self.velocity(t);
        let e = self.frame(t);
        let g = fundamental_matrix(&self.metric, x.as_slice(), v.as_slice())?;
        let n = self.dim();
        Ok((e.transpose() * g * e - DMatrix::identity(n, n)).amax())
    }

    pub fn shape_hat(&self) -> Option<&DMatrix<f64>> {
        match &self.origin {
            JacobiOrigin::NJacobi { shape_hat } => Some(shape_hat),
            _ => None,
        }
    }

    pub fn record(&self, times: &[f64]) -> JacobiRecord {
        let mut rec = JacobiRecord {
            times: times.to_vec(),
            frame_values: Vec::new(),
            frame_derivatives: Vec::new(),
            chart_values: Vec::new(),
            chart_derivatives: Vec::new(),
            origin: self.origin.clone(),
        };
        for &t in times {
            let e = self.frame(t);
            let (p, dp) = self.fields_at(t);
            rec.chart_values.push(&e * &p);
            rec.chart_derivatives.push(&e * &dp);
            rec.frame_values.push(p);
            rec.frame_derivatives.push(dp);
        }
        rec
    }

    /// Equally spaced grid `0, span/(k), …, span` with `k + 1` points.
    pub fn grid(&self, k: usize) -> Vec<f64> {
        (0..=k).map(|i| self.span * i as f64 / k as f64).collect()
    }
}

/// Integrates the bundle from frame data; may stop at the chart margin.
pub fn integrate_bundle_partial(
    metric: &MetricSpec,
    initial: &TangentVector,
    frame0: &DMatrix<f64>,
    phi0: &DMatrix<f64>,
    dphi0: &DMatrix<f64>,
    span: f64,
    origin: JacobiOrigin,
    opts: &OdeOptions,
) -> Result<(JacobiBundle, Termination)> {
    initial.nonzero()?;
    let n = metric.dim;
    let x0 = initial.base.coords.as_slice();
    metric.check_point(x0)?;
    if !metric.chart.contains_with_margin(x0) {
        return Err(GeometryError::DomainExit { time: 0.0 });
    }
    let m = phi0.ncols();
    if phi0.nrows() != n || dphi0.shape() != phi0.shape() || frame0.shape() != (n, n) {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            got: phi0.nrows(),
        });
    }
    let mut s0 = x0.to_vec();
    s0.extend_from_slice(initial.components.as_slice());
    s0.extend_from_slice(frame0.as_slice());
    s0.extend_from_slice(phi0.as_slice());
    s0.extend_from_slice(dphi0.as_slice());
    let sys = BundleSystem { metric, fields: m };
    let (solution, term) = solve_adaptive(&sys, 0.0, &s0, span, opts)?;
    Ok((
        JacobiBundle {
            metric: metric.clone(),
            span: solution.t_end,
            solution,
            fields: m,
            origin,
        },
        term,
    ))
}

fn finish(res: Result<(JacobiBundle, Termination)>) -> Result<JacobiBundle> {
    let (b, term) = res?;
    match term {
        Termination::Completed => Ok(b),
        Termination::Exited { time } => Err(GeometryError::DomainExit { time }),
    }
}

/// Parallel transport of an orthonormal frame along the geodesic through
/// `initial`; the frame is seeded from `seeds` and ends with `ċ/F`.
pub fn parallel_frame(
    metric: &MetricSpec,
    initial: &TangentVector,
    seeds: &[DVector<f64>],
    span: f64,
    opts: &OdeOptions,
) -> Result<JacobiBundle> {
    let x0 = initial.base.coords.as_slice();
    let e0 = orthonormal_frame(metric, x0, initial.components.as_slice(), seeds)?;
    let empty = DMatrix::zeros(metric.dim, 0);
    finish(integrate_bundle_partial(
        metric,
        initial,
        &e0,
        &empty,
        &empty,
        span,
        JacobiOrigin::Frame,
        opts,
    ))
}

fn to_frame(e0: &DMatrix<f64>, vs: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let lu = e0.clone().lu();
    let cols: Vec<DVector<f64>> = vs
        .iter()
        .map(|v| lu.solve(v).ok_or(GeometryError::SingularTensor { condition: f64::INFINITY }))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Jacobi fields along `path` with chart initial values `j0` and covariant
/// derivatives `j0p`.
pub fn integrate_jacobi(
    path: &GeodesicPath,
    j0: &[DVector<f64>],
    j0p: &[DVector<f64>],
    opts: &OdeOptions,
) -> Result<JacobiBundle> {
    let metric = &path.metric;
    let init = &path.initial;
    let e0 = orthonormal_frame(metric, init.base.coords.as_slice(), init.components.as_slice(), j0)?;
    let phi0 = to_frame(&e0, j0)?;
    let dphi0 = to_frame(&e0, j0p)?;
    finish(integrate_bundle_partial(
        metric,
        init,
        &e0,
        &phi0,
        &dphi0,
        path.span,
        JacobiOrigin::General,
        opts,
    ))
}

/// N-Jacobi fields: `J(0) = j0`, `J′(0) = S(j0)` with `S` a chart matrix.
pub fn n_jacobi(
    path: &GeodesicPath,
    shape: &DMatrix<f64>,
    j0: &[DVector<f64>],
    opts: &OdeOptions,
) -> Result<JacobiBundle> {
    let metric = &path.metric;
    let init = &path.initial;
    let e0 = orthonormal_frame(metric, init.base.coords.as_slice(), init.components.as_slice(), j0)?;
    let shape_hat = e0
        .clone()
        .lu()
        .solve(&(shape * &e0))
        .ok_or(GeometryError::SingularTensor { condition: f64::INFINITY })?;
    let phi0 = to_frame(&e0, j0)?;
    let dphi0 = &shape_hat * &phi0;
    finish(integrate_bundle_partial(
        metric,
        init,
        &e0,
        &phi0,
        &dphi0,
        path.span,
        JacobiOrigin::NJacobi { shape_hat },
        opts,
    ))
}

/// N-Jacobi bundle from a frame-diagonal shape operator: the frame starts at
/// `tangent` (made orthonormal) and `Ŝ = diag(spectrum)` on it.
pub fn n_jacobi_diagonal(
    metric: &MetricSpec,
    initial: &TangentVector,
    tangent: &[DVector<f64>],
    spectrum: &[f64],
    span: f64,
    opts: &OdeOptions,
) -> Result<(JacobiBundle, Termination)> {
    let n = metric.dim;
    if spectrum.len() != n - 1 {
        return Err(GeometryError::DimensionMismatch {
            expected: n - 1,
            got: spectrum.len(),
        });
    }
    let e0 = orthonormal_frame(metric, initial.base.coords.as_slice(), initial.components.as_slice(), tangent)?;
    let mut shape_hat = DMatrix::zeros(n, n);
    for (a, l) in spectrum.iter().enumerate() {
        shape_hat[(a, a)] = *l;
    }
    let phi0 = DMatrix::from_fn(n, n - 1, |i, j| if i == j { 1.0 } else { 0.0 });
    let dphi0 = &shape_hat * &phi0;
    integrate_bundle_partial(
        metric,
        initial,
        &e0,
        &phi0,
        &dphi0,
        span,
        JacobiOrigin::NJacobi { shape_hat },
        opts,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalOptions {
    /// Uniform scan points on the span.
    pub grid: usize,
    pub time_tolerance: f64,
    /// Zeros without a sign change are certified when `|det M| < near_zero · scale`
    /// at a refined local minimum of the smallest singular value.
    pub near_zero: f64,
}

impl Default for FocalOptions {
    fn default() -> Self {
        Self {
            grid: 400,
            time_tolerance: 1e-10,
            near_zero: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalReport {
    /// `(t, det M(t))` on the scan grid.
    pub det_trace: Vec<(f64, f64)>,
    pub focal_times: Vec<f64>,
    /// First focal time, or the end of the scanned span.
    pub none_found_up_to: f64,
}

/// `det M(t)` over the tangential frame components of the first `n−1` fields,
/// and a scale `∏ |(φ_b, φ′_b)|` for relative zero tests.
pub fn focal_determinant(bundle: &JacobiBundle, t: f64) -> (f64, f64) {
    let (m, scale, _) = focal_matrix(bundle, t);
    let det = if m.is_square() { m.determinant() } else { 0.0 };
    (det, scale.iter().product())
}

fn focal_matrix(bundle: &JacobiBundle, t: f64) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let n = bundle.dim();
    let (p, dp) = bundle.fields_at(t);
    let k = (n - 1).min(bundle.fields);
    let m = p.view((0, 0), (n - 1, k)).clone_owned();
    let scale: Vec<f64> = (0..k)
        .map(|b| (p.column(b).norm_squared() + dp.column(b).norm_squared()).sqrt())
        .collect();
    (m, scale, dp)
}

/// Smallest singular value of `M(t)` with columns normalized by their scale.
fn relative_sigma_min(bundle: &JacobiBundle, t: f64) -> f64 {
    let (mut m, scale, _) = focal_matrix(bundle, t);
    for (b, s) in scale.iter().enumerate() {
        m.column_mut(b).unscale_mut(s.max(f64::MIN_POSITIVE));
    }
    m.singular_values().min()
}

pub fn focal_scan(bundle: &JacobiBundle, opts: &FocalOptions) -> FocalReport {
    let span = bundle.span;
    let times: Vec<f64> = (0..=opts.grid).map(|i| span * i as f64 / opts.grid as f64).collect();
    let dets: Vec<f64> = times.iter().map(|&t| focal_determinant(bundle, t).0).collect();
    let sig: Vec<f64> = times.iter().map(|&t| relative_sigma_min(bundle, t)).collect();
    let det = |t: f64| focal_determinant(bundle, t).0;
    let mut focal = Vec::new();
    for i in 1..times.len() {
        let (d0, d1) = (dets[i - 1], dets[i]);
        if d0 != 0.0 && d1 != 0.0 && d0.signum() != d1.signum() {
            let (mut a, mut b) = (times[i - 1], times[i]);
            let mut fa = d0;
            while b - a > opts.time_tolerance {
                let mid = 0.5 * (a + b);
                let fm = det(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            focal.push(0.5 * (a + b));
        }
    }
    // zeros of even multiplicity
    for i in 1..times.len() {
        let left = sig[i - 1];
        let right = if i + 1 < times.len() { sig[i + 1] } else { f64::INFINITY };
        if !(sig[i] <= left && sig[i] <= right) || i == 1 && left == 0.0 {
            continue;
        }
        let (mut a, mut b) = (times[i - 1], times[(i + 1).min(times.len() - 1)]);
        while b - a > opts.time_tolerance {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if relative_sigma_min(bundle, m1) < relative_sigma_min(bundle, m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let t = 0.5 * (a + b);
        let (d, scale) = focal_determinant(bundle, t);
        if d.abs() < opts.near_zero * scale && !focal.iter().any(|f: &f64| (f - t).abs() < 1e-6) {
            focal.push(t);
        }
    }
    focal.sort_by(|a, b| a.total_cmp(b));
    focal.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    FocalReport {
        det_trace: times.iter().copied().zip(dets).collect(),
        none_found_up_to: focal.first().copied().unwrap_or(span),
        focal_times: focal,
    }
}

/// A field along the geodesic in frame coordinates: `t ↦ (X(t), X′(t))`.
pub type FrameField<'a> = &'a (dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Sync);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexFormValue {
    pub t: f64,
    pub value: f64,
}

/// Index forms along one N-Jacobi bundle, with `R̂` cached per time.
pub struct IndexFormEvaluator<'a> {
    bundle: &'a JacobiBundle,
    cache: Mutex<HashMap<u64, DMatrix<f64>>>,
    pub quadrature: QuadratureOptions,
}

impl<'a> IndexFormEvaluator<'a> {
    pub fn new(bundle: &'a JacobiBundle) -> Self {
        Self {
            bundle,
            cache: Mutex::new(HashMap::new()),
            quadrature: QuadratureOptions {
                abs_tol: 1e-12,
                rel_tol: 1e-12,
                max_intervals: 4000,
            },
        }
    }

    fn rhat(&self, t: f64) -> Result<DMatrix<f64>> {
        if let Some(r) = self.cache.lock().unwrap().get(&t.to_bits()) {
            return Ok(r.clone());
        }
        let r = self.bundle.curvature_hat(t)?;
        self.cache.lock().unwrap().insert(t.to_bits(), r.clone());
        Ok(r)
    }

    /// `I_t(X, Y) = ⟨Ŝ X(0), Y(0)⟩ + ∫₀ᵗ [X′·Y′ − Yᵀ R̂ X] ds`.
    pub fn value(&self, x: FrameField<'_>, y: FrameField<'_>, t: f64) -> Result<IndexFormValue> {
        let (x0, _) = x(0.0);
        let (y0, _) = y(0.0);
        let boundary = match self.bundle.shape_hat() {
            Some(s) => (s * &x0).dot(&y0),
            None => 0.0,
        };
        let integral = integrate(
            |s| {
                let (xv, xd) = x(s);
                let (yv, yd) = y(s);
                let r = self.rhat(s)?;
                Ok(vec![xd.dot(&yd) - yv.dot(&(r * xv))])
            },
            0.0,
            t,
            1,
            &self.quadrature,
        )?;
        Ok(IndexFormValue {
            t,
            value: boundary + integral[0],
        })
    }
}

pub fn index_form(bundle: &JacobiBundle, x: FrameField<'_>, y: FrameField<'_>, t: f64) -> Result<IndexFormValue> {
    IndexFormEvaluator::new(bundle).value(x, y, t)
}

/// A field moved between geodesics by copying frame coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TransplantedField {
    pub times: Vec<f64>,
    /// `(J, ∇J)` on the source, chart coordinates.
    pub source: Vec<(DVector<f64>, DVector<f64>)>,
    /// `(J̃, ∇̃J̃)` on the target, chart coordinates.
    pub target: Vec<(DVector<f64>, DVector<f64>)>,
}

/// `J̃(t) = φ^i(t) F_i(t)` for field `b` of `source`, where `J = φ^i E_i`.
pub fn transplant(
    source: &JacobiBundle,
    b: usize,
    target: &JacobiBundle,
    times: &[f64],
) -> Result<TransplantedField> {
    if source.dim() != target.dim() {
        return Err(GeometryError::SpanMismatch(format!(
            "dimensions {} and {}",
            source.dim(),
            target.dim()
        )));
    }
    if (source.span - target.span).abs() > 1e-12 * (1.0 + source.span.abs()) {
        return Err(GeometryError::SpanMismatch(format!(
            "spans {} and {}",
            source.span, target.span
        )));
    }
    for (name, bundle) in [("source", source), ("target", target)] {
        let x = bundle.position(0.0);
        let v = bundle.velocity(0.0);
        let f = bundle.metric.norm(x.as_slice(), v.as_slice())?;
        if (f - 1.0).abs() > 1e-9 {
            return Err(GeometryError::SpanMismatch(format!("{name} geodesic is not unit speed (F = {f})")));
        }
    }
    let mut out = TransplantedField {
        times: times.to_vec(),
        source: Vec::new(),
        target: Vec::new(),
    };
    for &t in times {
        let (p, dp) = source.fields_at(t);
        let ef = target.frame(t);
        out.source.push(source.chart_field(t, b));
        out.target.push((&ef * p.column(b), &ef * dp.column(b)));
    }
    Ok(out)
}

/// Maximum deviations in the transplantation identities: norms,
/// velocity components and derivative norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransplantCheck {
    pub norm: f64,
    pub velocity_component: f64,
    pub derivative_norm: f64,
}

pub fn transplant_check(field: &TransplantedField, source: &JacobiBundle, target: &JacobiBundle) -> Result<TransplantCheck> {
    let mut chk = TransplantCheck {
        norm: 0.0,
        velocity_component: 0.0,
        derivative_norm: 0.0,
    };
    for (k, &t) in field.times.iter().enumerate() {
        let (x, v) = (source.position(t), source.velocity(t));
        let (xb, vb) = (target.position(t), target.velocity(t));
        let g = fundamental_matrix(&source.metric, x.as_slice(), v.as_slice())?;
        let gb = fundamental_matrix(&target.metric, xb.as_slice(), vb.as_slice())?;
        let (j, dj) = &field.source[k];
        let (jt, djt) = &field.target[k];
        chk.norm = chk.norm.max((j.dot(&(&g * j)) - jt.dot(&(&gb * jt))).abs());
        chk.velocity_component = chk
            .velocity_component
            .max((j.dot(&(&g * &v)) - jt.dot(&(&gb * &vb))).abs());
        chk.derivative_norm = chk
            .derivative_norm
            .max((dj.dot(&(&g * dj)) - djt.dot(&(&gb * djt))).abs());
    }
    Ok(chk)
}

/// One side of the comparison: a unit normal geodesic with a shape operator
/// given by its spectrum on a (made orthonormal) tangent eigenbasis.
#[derive(Debug, Clone)]
pub struct ComparisonSide {
    pub metric: MetricSpec,
    pub foot: DVector<f64>,
    pub normal: DVector<f64>,
    pub tangent: Vec<DVector<f64>>,
    pub spectrum: Vec<f64>,
}

impl ComparisonSide {
    /// Diagonalizes a chart shape operator that is `g_n`-self-adjoint on the
    /// `g_n`-orthogonal complement of `normal`.
    pub fn from_shape_operator(
        metric: &MetricSpec,
        foot: DVector<f64>,
        normal: DVector<f64>,
        shape: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = metric.dim;
        let e0 = orthonormal_frame(metric, foot.as_slice(), normal.as_slice(), &[])?;
        let shat = e0
            .clone()
            .lu()
            .solve(&(shape * &e0))
            .ok_or(GeometryError::SingularTensor { condition: f64::INFINITY })?;
        let block = shat.view((0, 0), (n - 1, n - 1)).clone_owned();
        let sym = (&block + block.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let tangent = (0..n - 1)
            .map(|a| {
                let mut w = DVector::zeros(n);
                for i in 0..n - 1 {
                    w[i] = eig.eigenvectors[(i, a)];
                }
                &e0 * w
            })
            .collect();
        Ok(Self {
            metric: metric.clone(),
            foot,
            normal,
            tangent,
            spectrum: eig.eigenvalues.iter().copied().collect(),
        })
    }

    fn bundle(&self, span: f64, opts: &OdeOptions) -> Result<(JacobiBundle, Termination)> {
        let init = TangentVector::new(crate::types::Point::new(self.foot.clone()), self.normal.clone())?;
        n_jacobi_diagonal(&self.metric, &init, &self.tangent, &self.spectrum, span, opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOptions {
    pub t_max: f64,
    pub grid: usize,
    /// Random transverse directions per grid time for the curvature hypothesis.
    pub flag_directions: usize,
    /// Random initial-value combinations tested besides the eigenbasis.
    pub combinations: usize,
    pub curvature_slack: f64,
    pub margin_slack: f64,
    pub seed: u64,
    pub ode: OdeOptions,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            t_max: 3.0,
            grid: 60,
            flag_directions: 4,
            combinations: 8,
            curvature_slack: 1e-9,
            margin_slack: 1e-9,
            seed: 7,
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    /// `√g(J,J)` and `√ḡ(J̄,J̄)` for the first eigenfield.
    pub norms: Vec<f64>,
    pub norms_bar: Vec<f64>,
    /// `min_t [g(J,J) − ḡ(J̄,J̄)]` over all tested initial values.
    pub min_margin: f64,
    /// `min (K̄ − K)` over sampled transplanted flags.
    pub curvature_gap: f64,
    pub bar_focal: FocalReport,
    pub violations: usize,
}

fn violated(what: &str, witness: String) -> GeometryError {
    GeometryError::HypothesisViolated {
        what: what.into(),
        witness,
    }
}

/// Checks the hypotheses of the Jacobi comparison and then its conclusion
/// `g(J,J) ≥ ḡ(J̄,J̄)` along `[0, t_max]`.
pub fn comparison_check(side: &ComparisonSide, bar: &ComparisonSide, opts: &ComparisonOptions) -> Result<ComparisonReport> {
    let n = side.metric.dim;
    if bar.metric.dim != n {
        return Err(GeometryError::SpanMismatch(format!("dimensions {n} and {}", bar.metric.dim)));
    }
    let min_s = side.spectrum.iter().copied().fold(f64::INFINITY, f64::min);
    let max_sb = bar.spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_sb > min_s {
        return Err(violated(
            "shape operator spectra",
            format!("max eig S̄ = {max_sb} > min eig S = {min_s}"),
        ));
    }
    let (bundle, term) = side.bundle(opts.t_max, &opts.ode)?;
    if let Termination::Exited { time } = term {
        return Err(GeometryError::DomainExit { time });
    }
    let (bundle_bar, term) = bar.bundle(opts.t_max, &opts.ode)?;
    if let Termination::Exited { time } = term {
        return Err(GeometryError::DomainExit { time });
    }
    let bar_focal = focal_scan(&bundle_bar, &FocalOptions::default());
    if let Some(t) = bar_focal.focal_times.first() {
        return Err(violated("no focal point on the comparison geodesic", format!("focal time {t}")));
    }
    let times = bundle.grid(opts.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut curvature_gap = f64::INFINITY;
    for &t in &times {
        let r = bundle.curvature_hat(t)?;
        let rb = bundle_bar.curvature_hat(t)?;
        for k in 0..opts.flag_directions + n - 1 {
            let mut w = DVector::zeros(n);
            if k < n - 1 {
                w[k] = 1.0;
            } else {
                for i in 0..n - 1 {
                    w[i] = rng.gen_range(-1.0..1.0);
                }
            }
            let ww = w.norm_squared();
            if ww < 1e-12 {
                continue;
            }
            let kk = w.dot(&(&r * &w)) / ww;
            let kb = w.dot(&(&rb * &w)) / ww;
            let gap = kb - kk;
            curvature_gap = curvature_gap.min(gap);
            if gap < -opts.curvature_slack {
                return Err(violated(
                    "flag curvature K ≤ K̄ on transplanted flags",
                    format!("t = {t}, w = {:?}, K = {kk}, K̄ = {kb}", w.as_slice()),
                ));
            }
        }
    }
    let mut combos: Vec<DVector<f64>> = (0..n - 1)
        .map(|a| DVector::from_fn(n - 1, |i, _| if i == a { 1.0 } else { 0.0 }))
        .collect();
    for _ in 0..opts.combinations {
        let c = DVector::from_fn(n - 1, |_, _| rng.gen_range(-1.0..1.0));
        let norm = c.norm();
        if norm > 1e-6 {
            combos.push(c / norm);
        }
    }
    let mut report = ComparisonReport {
        times: times.clone(),
        norms: Vec::new(),
        norms_bar: Vec::new(),
        min_margin: f64::INFINITY,
        curvature_gap,
        bar_focal,
        violations: 0,
    };
    for &t in &times {
        let (p, _) = bundle.fields_at(t);
        let (pb, _) = bundle_bar.fields_at(t);
        for (k, c) in combos.iter().enumerate() {
            let j = &p * c;
            let jb = &pb * c;
            let margin = j.norm_squared() - jb.norm_squared();
            if k == 0 {
                report.norms.push(j.norm());
                report.norms_bar.push(jb.norm());
            }
            report.min_margin = report.min_margin.min(margin);
            if margin < -opts.margin_slack {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::integrate_geodesic;

    #[test]
    fn euclidean_frame_is_constant() {
        let m = MetricSpec::euclidean(3).unwrap();
        let init = TangentVector::from_slices(&[0.0, 0.0, 0.0], &[0.0, 0.6, 0.8]).unwrap();
        let b = parallel_frame(&m, &init, &[], 2.0, &OdeOptions::default()).unwrap();
        assert!((b.frame(2.0) - b.frame(0.0)).amax() < 1e-13);
        assert!((b.frame(0.0).column(2) - init.components.clone()).amax() < 1e-15);
    }

    #[test]
    fn hyperbolic_sinh_jacobi_field() {
        let m = MetricSpec::hyperbolic(2, 1.0).unwrap();
        let init = TangentVector::from_slices(&[0.0, 0.0], &[0.5, 0.0]).unwrap();
        let path = integrate_geodesic(&m, &init, 3.0, &OdeOptions::default()).unwrap();
        let j0p = DVector::from_vec(vec![0.0, 0.5]);
        let b = integrate_jacobi(&path, &[DVector::zeros(2)], &[j0p], &OdeOptions::default()).unwrap();
        for t in [0.5, 1.0, 2.0, 3.0] {
            let (p, _) = b.fields_at(t);
            assert!((p.column(0).norm() - t.sinh()).abs() < 1e-7, "t={t}");
        }
        assert!(b.frame_drift(3.0).unwrap() < 1e-8);
    }
}

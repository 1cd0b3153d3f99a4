//! T-curvature via the osculating Riemannian metric of a radial geodesic field.
//!
//! Given unit `y ∈ T_xM`, the geodesic through `(x, y)` is run backwards for
//! length `r₀` to a point `p`. The field `Y(x′)` is the unit velocity at `x′`
//! of the geodesic from `p` to `x′`, found by shooting on an equal-step flow
//! map so that `Y` is smooth in `x′`. The osculating metric `ĝ = g_Y` is then
//! differentiated on a central stencil.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, Result};
use crate::fd::central_stencil;
use crate::geodesic::{integrate_geodesic_partial, shoot, ShootingOptions, ShootingSolution};
use crate::metric::MetricSpec;
use crate::ode::{OdeOptions, Termination};
use crate::spray::{fundamental_matrix, spray_coefficients};
use crate::types::{Point, TangentVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TCurvatureOptions {
    /// Metric length of the backward leg to the congruence source.
    pub r0: f64,
    /// Stencil spacing for first derivatives of `ĝ`, in units of the chart
    /// length per unit metric length of the backward leg.
    pub step: f64,
    /// Formal accuracy of the first-derivative stencil.
    pub accuracy: usize,
    /// Stencil spacing for second derivatives of `ĝ`, scaled like `step`.
    pub curvature_step: f64,
    /// Absolute slack added to both sides of the T-bound inequality.
    pub bound_slack: f64,
    pub shooting: ShootingOptions,
    /// How many times `r₀` may be halved when the backward leg leaves the chart.
    pub max_halvings: usize,
}

impl Default for TCurvatureOptions {
    fn default() -> Self {
        Self {
            r0: 0.1,
            step: 1e-3,
            accuracy: 6,
            curvature_step: 1e-3,
            bound_slack: 1e-9,
            shooting: ShootingOptions::default(),
            max_halvings: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TCurvatureValue {
    pub base: Point,
    /// Unit pole.
    pub reference: TangentVector,
    pub direction: TangentVector,
    pub value: f64,
}

/// The unit radial geodesic field through `(x, y)`.
#[derive(Debug, Clone)]
pub struct RadialField {
    metric: MetricSpec,
    x: DVector<f64>,
    source: Vec<f64>,
    center: ShootingSolution,
    pub r0: f64,
    opts: ShootingOptions,
}

impl RadialField {
    pub fn new(metric: &MetricSpec, x: &[f64], y: &[f64], opts: &TCurvatureOptions) -> Result<Self> {
        let f = metric.norm(x, y)?;
        metric.check_vector(y)?;
        let unit: Vec<f64> = y.iter().map(|v| v / f).collect();
        let start = TangentVector::from_slices(x, &unit)?;
        let mut r0 = opts.r0;
        for _ in 0..=opts.max_halvings {
            let (path, term) = integrate_geodesic_partial(metric, &start, -r0, &OdeOptions::default())?;
            if term != Termination::Completed {
                r0 *= 0.5;
                continue;
            }
            let (p, vp) = path.state(-r0);
            let source = p.as_slice().to_vec();
            let guess = vp * r0;
            let center = shoot(metric, &source, x, &guess, &opts.shooting)?;
            return Ok(Self {
                metric: metric.clone(),
                x: DVector::from_column_slice(x),
                source,
                center,
                r0,
                opts: opts.shooting,
            });
        }
        Err(GeometryError::GeodesicExtensionFailed(format!(
            "backward leg from {x:?} leaves the chart even for r0 = {r0:.3e}"
        )))
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Chart length of the backward leg per unit metric length.
    pub fn coordinate_ratio(&self) -> f64 {
        (DVector::from_column_slice(&self.source) - &self.x).norm() / self.r0
    }

    /// `Y(x′)`, F-unit.
    pub fn at(&self, xp: &[f64]) -> Result<DVector<f64>> {
        self.metric
            .check_point(xp)
            .map_err(|_| GeometryError::GeodesicExtensionFailed(format!("{xp:?} is outside the chart")))?;
        let dx = DVector::from_column_slice(xp) - &self.x;
        let guess = match self.center.jacobian.clone().lu().solve(&dx) {
            Some(d) => &self.center.initial_velocity + d,
            None => self.center.initial_velocity.clone(),
        };
        let sol = shoot(&self.metric, &self.source, xp, &guess, &self.opts)
            .map_err(|e| GeometryError::GeodesicExtensionFailed(e.to_string()))?;
        let v = sol.final_velocity;
        let f = self.metric.norm(xp, v.as_slice())?;
        Ok(v / f)
    }

    /// `ĝ(x′) = g(x′, Y(x′))`.
    pub fn osculating_tensor(&self, xp: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.at(xp)?;
        fundamental_matrix(&self.metric, xp, y.as_slice())
    }
}

/// Value and first derivatives of `ĝ` at the field's base point.
#[derive(Debug, Clone)]
pub struct OsculatingJet {
    pub g: DMatrix<f64>,
    /// `∂ĝ/∂x^k`.
    pub dg: Vec<DMatrix<f64>>,
}

impl OsculatingJet {
    /// Christoffel symbols of the first kind `Γ̂_{m,jk}`, indexed `[m][(j, k)]`.
    pub fn christoffel_first(&self) -> Vec<DMatrix<f64>> {
        let n = self.g.nrows();
        (0..n)
            .map(|m| {
                DMatrix::from_fn(n, n, |j, k| {
                    0.5 * (self.dg[j][(m, k)] + self.dg[k][(m, j)] - self.dg[m][(j, k)])
                })
            })
            .collect()
    }
}

fn shifted(x: &DVector<f64>, moves: &[(usize, f64)]) -> Vec<f64> {
    let mut p = x.as_slice().to_vec();
    for &(k, d) in moves {
        p[k] += d;
    }
    p
}

pub fn osculating_jet(field: &RadialField, step: f64, accuracy: usize) -> Result<OsculatingJet> {
    let n = field.x.len();
    let g = field.osculating_tensor(field.x.as_slice())?;
    let st = central_stencil(1, accuracy);
    let mut dg = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = DMatrix::zeros(n, n);
        for &(o, w) in &st {
            let p = shifted(&field.x, &[(k, o as f64 * step)]);
            acc += field.osculating_tensor(&p)? * w;
        }
        dg.push(acc / step);
    }
    Ok(OsculatingJet { g, dg })
}

/// Precomputed data for evaluating `T_y(v)` at many `v` for one `(x, y)`.
#[derive(Debug, Clone)]
pub struct TCurvatureEvaluator {
    metric: MetricSpec,
    x: DVector<f64>,
    y: DVector<f64>,
    gy: DMatrix<f64>,
    christoffel: Vec<DMatrix<f64>>,
}

impl TCurvatureEvaluator {
    pub fn new(metric: &MetricSpec, x: &[f64], y: &[f64], opts: &TCurvatureOptions) -> Result<Self> {
        let field = RadialField::new(metric, x, y, opts)?;
        let jet = osculating_jet(&field, opts.step * field.coordinate_ratio(), opts.accuracy)?;
        let f = metric.norm(x, y)?;
        let yu = DVector::from_column_slice(y) / f;
        let gy = fundamental_matrix(metric, x, yu.as_slice())?;
        Ok(Self {
            metric: metric.clone(),
            x: DVector::from_column_slice(x),
            y: yu,
            gy,
            christoffel: jet.christoffel_first(),
        })
    }

    pub fn unit_pole(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn fundamental(&self) -> &DMatrix<f64> {
        &self.gy
    }

    /// `T_y(v) = g_y(2G(x, v), y) − y^m Γ̂_{m,jk} v^j v^k`.
    pub fn value(&self, v: &DVector<f64>) -> Result<f64> {
        if v.iter().all(|c| *c == 0.0) {
            return Ok(0.0);
        }
        let gv = spray_coefficients(&self.metric, self.x.as_slice(), v.as_slice())?;
        let first = 2.0 * gv.dot(&(&self.gy * &self.y));
        let mut second = 0.0;
        for (m, gam) in self.christoffel.iter().enumerate() {
            second += self.y[m] * v.dot(&(gam * v));
        }
        Ok(first - second)
    }
}

pub fn t_curvature_with(
    metric: &MetricSpec,
    x: &Point,
    y: &TangentVector,
    v: &TangentVector,
    opts: &TCurvatureOptions,
) -> Result<TCurvatureValue> {
    y.nonzero()?;
    let ev = TCurvatureEvaluator::new(metric, x.coords.as_slice(), y.components.as_slice(), opts)?;
    let value = ev.value(&v.components)?;
    Ok(TCurvatureValue {
        base: x.clone(),
        reference: TangentVector::new(x.clone(), ev.y.clone())?,
        direction: v.clone(),
        value,
    })
}

pub fn t_curvature(metric: &MetricSpec, x: &Point, y: &TangentVector, v: &TangentVector) -> Result<TCurvatureValue> {
    t_curvature_with(metric, x, y, v, &TCurvatureOptions::default())
}

/// One `(x, y, u)` sample for the T-bound sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TSample {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TBoundWitness {
    pub sample: TSample,
    pub t_value: f64,
    /// `[g_y(u,u) − g_y(u, y/F)²] F(y)`.
    pub bracket: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TBoundReport {
    pub holds: bool,
    /// Largest `|T_y(u)| / bracket` over samples with a nondegenerate bracket.
    pub max_ratio: f64,
    /// The sample realizing `max_ratio`, or the first violation.
    pub worst: Option<TBoundWitness>,
}

/// Checks `−δ·B ≤ T_y(u) ≤ δ·B` with `B = [g_y(u,u) − g_y(u, y/F)²] F(y)`.
pub fn t_bound_check(
    metric: &MetricSpec,
    samples: &[TSample],
    delta: f64,
    opts: &TCurvatureOptions,
) -> Result<TBoundReport> {
    let mut holds = true;
    let mut max_ratio = 0.0;
    let mut worst = None;
    let mut violation: Option<TBoundWitness> = None;
    for s in samples {
        let ev = TCurvatureEvaluator::new(metric, s.x.as_slice(), s.y.as_slice(), opts)?;
        let t = ev.value(&s.u)?;
        let f = metric.norm(s.x.as_slice(), s.y.as_slice())?;
        let gu = &ev.gy * &s.u;
        let bracket = (s.u.dot(&gu) - ev.y.dot(&gu).powi(2)) * f;
        let witness = TBoundWitness {
            sample: s.clone(),
            t_value: t,
            bracket,
        };
        if t.abs() > delta * bracket.max(0.0) + opts.bound_slack && violation.is_none() {
            holds = false;
            violation = Some(witness.clone());
        }
        if bracket > 1e-12 {
            let r = t.abs() / bracket;
            if r > max_ratio {
                max_ratio = r;
                worst = Some(witness);
            }
        }
    }
    Ok(TBoundReport {
        holds,
        max_ratio,
        worst: violation.or(worst),
    })
}

/// Sectional curvature of `ĝ = g_Y` on the plane `span{y, u}`.
pub fn osculating_sectional_curvature(
    metric: &MetricSpec,
    x: &[f64],
    y: &[f64],
    u: &[f64],
    opts: &TCurvatureOptions,
) -> Result<f64> {
    let field = RadialField::new(metric, x, y, opts)?;
    let n = x.len();
    let h = opts.curvature_step * field.coordinate_ratio();
    let xc = DVector::from_column_slice(x);
    let g0 = field.osculating_tensor(x)?;
    let d1 = central_stencil(1, opts.accuracy);
    let d2 = central_stencil(2, opts.accuracy);
    let mut dg = vec![DMatrix::zeros(n, n); n];
    let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
    for k in 0..n {
        for &(o, w) in &d1 {
            dg[k] += field.osculating_tensor(&shifted(&xc, &[(k, o as f64 * h)]))? * (w / h);
        }
        for &(o, w) in &d2 {
            let gk = if o == 0 {
                g0.clone()
            } else {
                field.osculating_tensor(&shifted(&xc, &[(k, o as f64 * h)]))?
            };
            ddg[k][k] += gk * (w / (h * h));
        }
        for l in k + 1..n {
            let mut acc = DMatrix::zeros(n, n);
            for &(a, wa) in &d1 {
                for &(b, wb) in &d1 {
                    let p = shifted(&xc, &[(k, a as f64 * h), (l, b as f64 * h)]);
                    acc += field.osculating_tensor(&p)? * (wa * wb / (h * h));
                }
            }
            ddg[k][l] = acc.clone();
            ddg[l][k] = acc;
        }
    }
    let ginv = g0
        .clone()
        .try_inverse()
        .ok_or(GeometryError::SingularTensor { condition: f64::INFINITY })?;
    // Γ^p_{jk}
    let gamma1: Vec<DMatrix<f64>> = (0..n)
        .map(|m| DMatrix::from_fn(n, n, |j, k| 0.5 * (dg[j][(m, k)] + dg[k][(m, j)] - dg[m][(j, k)])))
        .collect();
    let gamma2: Vec<DMatrix<f64>> = (0..n)
        .map(|p| {
            let mut acc = DMatrix::zeros(n, n);
            for m in 0..n {
                acc += &gamma1[m] * ginv[(p, m)];
            }
            acc
        })
        .collect();
    let riem = |i: usize, j: usize, k: usize, l: usize| -> f64 {
        let mut r = 0.5
            * (ddg[j][k][(i, l)] + ddg[i][l][(j, k)] - ddg[j][l][(i, k)] - ddg[i][k][(j, l)]);
        for p in 0..n {
            for q in 0..n {
                r += g0[(p, q)]
                    * (gamma2[p][(j, k)] * gamma2[q][(i, l)] - gamma2[p][(j, l)] * gamma2[q][(i, k)]);
            }
        }
        r
    };
    let yv = DVector::from_column_slice(y);
    let uv = DVector::from_column_slice(u);
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let c = yv[i] * uv[j] * yv[k] * uv[l];
                    if c != 0.0 {
                        num += riem(i, j, k, l) * c;
                    }
                }
            }
        }
    }
    let gyy = yv.dot(&(&g0 * &yv));
    let guu = uv.dot(&(&g0 * &uv));
    let gyu = yv.dot(&(&g0 * &uv));
    let den = gyy * guu - gyu * gyu;
    if den < crate::spray::DEGENERATE_FLAG {
        return Err(GeometryError::DegenerateFlag { denominator: den });
    }
    Ok(num / den)
}

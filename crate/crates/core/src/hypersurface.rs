//! Parametric hypersurfaces: normals, normal curvature, shape operators,
//! equidistant flow along normal geodesics and convexity verification.
//!
//! Sign convention: with `n` the chosen unit normal, the normal curvature is
//! `k_n(y) = −g_n(c̈ + 2G(c, ċ), n)` and `S(w) = ∇̃_w n`, so a round sphere with
//! its outward normal has `k_n = 1/r` and `S = id/r`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{GeometryError, Result};
use crate::fd::central_stencil;
use crate::geodesic::{integrate_geodesic, GeodesicSystem};
use crate::jacobi::{focal_scan, n_jacobi, FocalOptions, FocalReport};
use crate::metric::{MetricSpec, PresetSpec};
use crate::ode::{solve_adaptive, solve_fixed, DenseSolution, OdeOptions, OdeSystem, Termination};
use crate::spray::{fundamental_matrix, spray_and_connection, spray_coefficients};
use crate::tcurv::{t_bound_check, TBoundReport, TCurvatureEvaluator, TCurvatureOptions, TSample};
use crate::types::{Point, TangentVector};

/// Smallest admissible singular value of the tangent basis.
pub const IMMERSION_THRESHOLD: f64 = 1e-8;
const NEWTON_MAX_ITERATIONS: usize = 50;
const NEWTON_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceShape {
    /// Round chart sphere of radius `r`.
    Sphere { r: f64 },
    /// Sphere of intrinsic radius `r` about the origin for an isotropic metric.
    GeodesicSphere { r: f64 },
    /// Semi-axis `a` along the first coordinate and `b` along the others.
    Ellipsoid { a: f64, b: f64 },
    /// Radius `r(1 + amp·cos(mode·θ))`, `θ` the last angle.
    PerturbedSphere { r: f64, amp: f64, mode: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalSide {
    Outward,
    Inward,
}

impl NormalSide {
    pub fn opposite(self) -> Self {
        match self {
            Self::Outward => Self::Inward,
            Self::Inward => Self::Outward,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Self::Outward => 1.0,
            Self::Inward => -1.0,
        }
    }
}

/// Position and closed-form parameter derivatives at one parameter point.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub point: DVector<f64>,
    /// Columns `∂x/∂u^a`.
    pub tangent: DMatrix<f64>,
    /// `hessian[a][b] = ∂²x/∂u^a∂u^b`.
    pub hessian: Vec<Vec<DVector<f64>>>,
}

/// A star-shaped hypersurface `u ↦ c + A·ρ(u)·s(u)` with `s` the
/// hyperspherical-angle parametrization of the unit sphere.
#[derive(Debug, Clone)]
pub struct ImmersedHypersurface {
    pub metric: MetricSpec,
    pub shape: SurfaceShape,
    pub center: DVector<f64>,
    pub side: NormalSide,
    pub samples: Vec<DVector<f64>>,
    radius: f64,
    axes: DVector<f64>,
}

fn angle_factors(kind: u8, u: f64) -> [f64; 3] {
    let (s, c) = u.sin_cos();
    match kind {
        0 => [s, c, -s],
        1 => [c, -s, -c],
        _ => [1.0, 0.0, 0.0],
    }
}

/// `s(u)` on the unit sphere in `R^n` with first and second derivatives.
fn unit_sphere(u: &[f64], n: usize) -> (DVector<f64>, DMatrix<f64>, Vec<Vec<DVector<f64>>>) {
    let m = n - 1;
    let mut s = DVector::zeros(n);
    let mut ds = DMatrix::zeros(n, m);
    let mut dds = vec![vec![DVector::zeros(n); m]; m];
    for k in 0..n {
        let f: Vec<[f64; 3]> = (0..m)
            .map(|j| {
                let kind = if k == n - 1 || j < k {
                    0
                } else if j == k {
                    1
                } else {
                    2
                };
                angle_factors(kind, u[j])
            })
            .collect();
        let prod = |skip: &[usize]| -> f64 {
            (0..m)
                .filter(|j| !skip.contains(j))
                .map(|j| f[j][0])
                .product()
        };
        s[k] = prod(&[]);
        for a in 0..m {
            ds[(k, a)] = f[a][1] * prod(&[a]);
            for b in 0..m {
                dds[a][b][k] = if a == b {
                    f[a][2] * prod(&[a])
                } else {
                    f[a][1] * f[b][1] * prod(&[a, b])
                };
            }
        }
    }
    (s, ds, dds)
}

/// Deterministic parameter grid with about `count` points, away from the
/// coordinate singularities of the angle chart.
pub fn parameter_grid(dim: usize, count: usize) -> Vec<DVector<f64>> {
    let m = dim - 1;
    if m == 1 {
        return (0..count.max(1))
            .map(|i| DVector::from_element(1, 2.0 * std::f64::consts::PI * i as f64 / count.max(1) as f64))
            .collect();
    }
    let q = ((count.max(2) as f64 / 2.0).powf(1.0 / m as f64)).ceil().max(2.0) as usize;
    let mut out = vec![Vec::new()];
    for j in 0..m {
        let (len, steps, shift) = if j < m - 1 {
            (std::f64::consts::PI, q, 0.5)
        } else {
            (2.0 * std::f64::consts::PI, 2 * q, 0.25)
        };
        let mut next = Vec::new();
        for prefix in &out {
            for i in 0..steps {
                let mut p: Vec<f64> = prefix.clone();
                p.push(len * (i as f64 + shift) / steps as f64);
                next.push(p);
            }
        }
        out = next;
    }
    out.into_iter().map(DVector::from_vec).collect()
}

impl ImmersedHypersurface {
    /// Surface centered at `center` with samples from [`parameter_grid`].
    pub fn new(
        metric: &MetricSpec,
        shape: SurfaceShape,
        center: DVector<f64>,
        side: NormalSide,
        samples: usize,
    ) -> Result<Self> {
        let n = metric.dim;
        if n < 2 {
            return Err(GeometryError::UnsupportedDimension(n));
        }
        if center.len() != n {
            return Err(GeometryError::DimensionMismatch {
                expected: n,
                got: center.len(),
            });
        }
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(GeometryError::InvalidPreset(format!("{what} must be positive, got {v}")))
            }
        };
        let mut axes = DVector::from_element(n, 1.0);
        let radius = match &shape {
            SurfaceShape::Sphere { r } => positive(*r, "r")?,
            SurfaceShape::GeodesicSphere { r } => metric.isotropic_chart_radius(positive(*r, "r")?)?,
            SurfaceShape::Ellipsoid { a, b } => {
                axes.fill(positive(*b, "b")?);
                axes[0] = positive(*a, "a")?;
                1.0
            }
            SurfaceShape::PerturbedSphere { r, amp, .. } => {
                if !(amp.abs() < 1.0) {
                    return Err(GeometryError::InvalidPreset(format!("|amp| must be below 1, got {amp}")));
                }
                positive(*r, "r")?
            }
        };
        let mut surface = Self {
            metric: metric.clone(),
            shape,
            center,
            side,
            samples: Vec::new(),
            radius,
            axes,
        };
        surface.set_samples(parameter_grid(n, samples))?;
        Ok(surface)
    }

    /// Parses `sphere:r=`, `geodesic-sphere:r=`, `ellipsoid:a=,b=` or
    /// `perturbed-sphere:r=,amp=,mode=`; the center is the origin.
    pub fn from_preset(metric: &MetricSpec, text: &str, side: NormalSide, samples: usize) -> Result<Self> {
        let p = PresetSpec::parse(text)?;
        let need = |k: &str| {
            p.scalar(k)
                .ok_or_else(|| GeometryError::InvalidPreset(format!("{text}: missing {k}")))
        };
        let shape = match p.kind.as_str() {
            "sphere" => SurfaceShape::Sphere { r: need("r")? },
            "geodesic-sphere" => SurfaceShape::GeodesicSphere { r: need("r")? },
            "ellipsoid" => SurfaceShape::Ellipsoid {
                a: need("a")?,
                b: need("b")?,
            },
            "perturbed-sphere" => SurfaceShape::PerturbedSphere {
                r: need("r")?,
                amp: need("amp")?,
                mode: p.scalar("mode").unwrap_or(3.0),
            },
            _ => return Err(GeometryError::InvalidPreset(text.to_string())),
        };
        Self::new(metric, shape, DVector::zeros(metric.dim), side, samples)
    }

    pub fn dim(&self) -> usize {
        self.metric.dim
    }

    /// Replaces the sample grid after checking chart membership and immersion.
    pub fn set_samples(&mut self, samples: Vec<DVector<f64>>) -> Result<()> {
        for u in &samples {
            let e = self.embed(u)?;
            if !self.metric.chart.contains_with_margin(e.point.as_slice()) {
                return Err(GeometryError::EvaluationOutsideDomain {
                    coords: e.point.as_slice().to_vec(),
                });
            }
            let sv = e.tangent.clone().singular_values().min();
            if !(sv > IMMERSION_THRESHOLD) {
                return Err(GeometryError::DegenerateImmersion(sv));
            }
        }
        self.samples = samples;
        Ok(())
    }

    fn profile(&self, u: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = self.dim() - 1;
        let mut d = DVector::zeros(m);
        let mut dd = DMatrix::zeros(m, m);
        let rho = match &self.shape {
            SurfaceShape::PerturbedSphere { r, amp, mode } => {
                let th = u[m - 1];
                d[m - 1] = -r * amp * mode * (mode * th).sin();
                dd[(m - 1, m - 1)] = -r * amp * mode * mode * (mode * th).cos();
                r * (1.0 + amp * (mode * th).cos())
            }
            _ => self.radius,
        };
        (rho, d, dd)
    }

    pub fn embed(&self, u: &DVector<f64>) -> Result<Embedding> {
        let n = self.dim();
        let m = n - 1;
        if u.len() != m {
            return Err(GeometryError::DimensionMismatch { expected: m, got: u.len() });
        }
        let (s, ds, dds) = unit_sphere(u.as_slice(), n);
        let (rho, drho, ddrho) = self.profile(u.as_slice());
        let a = &self.axes;
        let point = &self.center + (&s * rho).component_mul(a);
        let mut tangent = DMatrix::zeros(n, m);
        for k in 0..m {
            let col = (&s * drho[k] + ds.column(k) * rho).component_mul(a);
            tangent.set_column(k, &col);
        }
        let mut hessian = vec![vec![DVector::zeros(n); m]; m];
        for p in 0..m {
            for q in 0..m {
                hessian[p][q] = (&s * ddrho[(p, q)]
                    + ds.column(q) * drho[p]
                    + ds.column(p) * drho[q]
                    + &dds[p][q] * rho)
                    .component_mul(a);
            }
        }
        Ok(Embedding { point, tangent, hessian })
    }

    /// Euclidean normal from the cofactors of the tangent basis, pointing to `side`.
    fn euclidean_normal(&self, e: &Embedding, side: NormalSide) -> DVector<f64> {
        let n = self.dim();
        let mut nu = DVector::zeros(n);
        for i in 0..n {
            let minor = e.tangent.clone().remove_row(i);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            nu[i] = sign * minor.determinant();
        }
        if nu.dot(&(&e.point - &self.center)) * side.sign() < 0.0 {
            nu = -nu;
        }
        nu
    }
}

#[derive(Debug, Clone)]
pub struct NormalData {
    pub foot: Point,
    /// Unit normal, `F(normal) = 1`.
    pub normal: TangentVector,
    /// `max(|g_n(t_a, n)|, |F(n) − 1|)` at convergence.
    pub residual: f64,
    pub iterations: usize,
}

/// Newton solve of `g_m(t_a, m) = 0`, `F(m) = 1` from `seed`.
fn solve_normal(metric: &MetricSpec, x: &[f64], tangent: &DMatrix<f64>, seed: &DVector<f64>) -> Result<(DVector<f64>, f64, usize)> {
    let n = metric.dim;
    let mut m = seed / metric.norm(x, seed.as_slice())?;
    let mut residual = f64::INFINITY;
    for it in 0..=NEWTON_MAX_ITERATIONS {
        let g = fundamental_matrix(metric, x, m.as_slice())?;
        let gm = &g * &m;
        let f = metric.norm(x, m.as_slice())?;
        let mut r = DVector::zeros(n);
        r.rows_mut(0, n - 1).copy_from(&(tangent.transpose() * &gm));
        r[n - 1] = f - 1.0;
        let prev = residual;
        residual = r.amax();
        // stop once converged and no longer improving
        if residual < 1e-15 || (residual < NEWTON_TOLERANCE && residual >= 0.5 * prev) || it == NEWTON_MAX_ITERATIONS {
            if residual > NEWTON_TOLERANCE {
                return Err(GeometryError::NewtonDivergence { residual });
            }
            return Ok((m, residual, it));
        }
        let mut jac = DMatrix::zeros(n, n);
        jac.rows_mut(0, n - 1).copy_from(&(tangent.transpose() * &g));
        jac.row_mut(n - 1).copy_from(&(gm.transpose() / f));
        let step = jac
            .lu()
            .solve(&(-r))
            .ok_or(GeometryError::NewtonDivergence { residual })?;
        m += step;
    }
    Err(GeometryError::NewtonDivergence { residual })
}

/// Unit normal on the surface's own side.
pub fn normal_vector(surface: &ImmersedHypersurface, u: &DVector<f64>) -> Result<NormalData> {
    normal_vector_on(surface, u, surface.side)
}

/// Unit normal on `side`; the two sides are solved independently.
pub fn normal_vector_on(surface: &ImmersedHypersurface, u: &DVector<f64>, side: NormalSide) -> Result<NormalData> {
    let e = surface.embed(u)?;
    let seed = surface.euclidean_normal(&e, side);
    let (m, residual, iterations) = solve_normal(&surface.metric, e.point.as_slice(), &e.tangent, &seed)?;
    Ok(NormalData {
        foot: Point::new(e.point.clone()),
        normal: TangentVector::new(Point::new(e.point), m)?,
        residual,
        iterations,
    })
}

/// Shape operator `S(w) = ∇̃_w n` at one point of a hypersurface.
#[derive(Debug, Clone)]
pub struct ShapeOperator {
    pub foot: DVector<f64>,
    pub normal: DVector<f64>,
    /// Columns `t_a`.
    pub tangent: DMatrix<f64>,
    /// `S(t_a) = Σ_b matrix[(b, a)] t_b`.
    pub matrix: DMatrix<f64>,
    /// Chart endomorphism with the same action on tangents and `S(n) = 0`.
    pub chart: DMatrix<f64>,
    /// `g_n(t_a, t_b)`.
    pub gram: DMatrix<f64>,
    /// `g_n(S t_a, t_b)`.
    pub form: DMatrix<f64>,
    /// `max_a |g_n(S t_a, n)|`.
    pub normal_leak: f64,
}

impl ShapeOperator {
    /// `max |g_n(S t_a, t_b) − g_n(t_a, S t_b)|`.
    pub fn self_adjointness(&self) -> f64 {
        (&self.form - self.form.transpose()).amax()
    }

    fn orthonormal(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let chol = self
            .gram
            .clone()
            .cholesky()
            .ok_or(GeometryError::SingularTensor { condition: f64::INFINITY })?;
        let linv = chol
            .l()
            .try_inverse()
            .ok_or(GeometryError::SingularTensor { condition: f64::INFINITY })?;
        let sym = (&self.form + self.form.transpose()) * 0.5;
        Ok((&linv * sym * linv.transpose(), linv))
    }

    /// Eigenvalues of `S` with respect to `g_n`, ascending.
    pub fn principal_curvatures(&self) -> Result<Vec<f64>> {
        let (m, _) = self.orthonormal()?;
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        Ok(ev)
    }

    /// `k̃_n(y) = g_n(S y, y) / g_n(y, y)` for a tangent `y`.
    pub fn normal_curvature(&self, y: &DVector<f64>) -> f64 {
        let w = self.coefficients(y);
        w.dot(&(&self.form.transpose() * &w)) / w.dot(&(&self.gram * &w))
    }

    /// Tangent-basis coefficients of a (tangent) chart vector.
    pub fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        let t = &self.tangent;
        (t.transpose() * t)
            .lu()
            .solve(&(t.transpose() * y))
            .unwrap_or_else(|| DVector::zeros(t.ncols()))
    }
}

/// Local data of a hypersurface patch: position, unit normal, tangent basis,
/// second parameter derivatives and the parameter derivatives of the normal.
#[derive(Debug, Clone)]
pub struct PatchGeometry {
    pub point: DVector<f64>,
    pub normal: DVector<f64>,
    pub tangent: DMatrix<f64>,
    pub hessian: Vec<Vec<DVector<f64>>>,
    pub normal_derivative: Vec<DVector<f64>>,
}

/// `−g_n(c̈ + 2G(x, y), n)` together with `F(y)²` and `g_n(y, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawNormalCurvature {
    pub value: f64,
    pub f_squared: f64,
    pub g_squared: f64,
}

impl RawNormalCurvature {
    /// Normalized by `F(y) = 1`.
    pub fn unit_f(&self) -> f64 {
        self.value / self.f_squared
    }

    /// Normalized by `g_n(y, y) = 1`.
    pub fn unit_g(&self) -> f64 {
        self.value / self.g_squared
    }
}

impl PatchGeometry {
    pub fn shape_operator(&self, metric: &MetricSpec) -> Result<ShapeOperator> {
        let x = self.point.as_slice();
        let nv = &self.normal;
        let n = metric.dim;
        let m = n - 1;
        let (_, conn) = spray_and_connection(metric, x, nv.as_slice())?;
        let g = fundamental_matrix(metric, x, nv.as_slice())?;
        let t = &self.tangent;
        let images: Vec<DVector<f64>> = (0..m)
            .map(|a| &self.normal_derivative[a] + &conn * t.column(a))
            .collect();
        let gram = t.transpose() * &g * t;
        let form = DMatrix::from_fn(m, m, |a, b| images[a].dot(&(&g * t.column(b))));
        let normal_leak = images
            .iter()
            .map(|s| s.dot(&(&g * nv)).abs())
            .fold(0.0, f64::max);
        let sing = || GeometryError::SingularTensor { condition: f64::INFINITY };
        let matrix = gram.clone().lu().solve(&form.transpose()).ok_or_else(sing)?;
        let mut basis = t.clone().insert_column(m, 0.0);
        basis.set_column(m, nv);
        let mut img = (t * &matrix).insert_column(m, 0.0);
        img.set_column(m, &DVector::zeros(n));
        let chart = img * basis.try_inverse().ok_or_else(sing)?;
        Ok(ShapeOperator {
            foot: self.point.clone(),
            normal: nv.clone(),
            tangent: t.clone(),
            matrix,
            chart,
            gram,
            form,
            normal_leak,
        })
    }

    /// Normal curvature along the parameter direction `w`.
    pub fn normal_curvature_raw(&self, metric: &MetricSpec, w: &DVector<f64>) -> Result<RawNormalCurvature> {
        let x = self.point.as_slice();
        let y = &self.tangent * w;
        let m = w.len();
        let mut acc = DVector::zeros(metric.dim);
        for a in 0..m {
            for b in 0..m {
                acc += &self.hessian[a][b] * (w[a] * w[b]);
            }
        }
        let gs = spray_coefficients(metric, x, y.as_slice())?;
        let g = fundamental_matrix(metric, x, self.normal.as_slice())?;
        let value = -(acc + gs * 2.0).dot(&(&g * &self.normal));
        let f = metric.norm(x, y.as_slice())?;
        Ok(RawNormalCurvature {
            value,
            f_squared: f * f,
            g_squared: y.dot(&(&g * &y)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Parameter-space stencil spacing.
    pub step: f64,
    pub accuracy: usize,
    /// Maximum step of the fixed-step geodesic flow.
    pub dt: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            accuracy: 6,
            dt: 1e-2,
        }
    }
}

fn axis(m: usize, a: usize) -> DVector<f64> {
    DVector::from_fn(m, |i, _| if i == a { 1.0 } else { 0.0 })
}

/// Base patch with closed-form tangents and second derivatives; the normal
/// field is differentiated by a central stencil of Newton solves.
pub fn base_patch(surface: &ImmersedHypersurface, u: &DVector<f64>, side: NormalSide, opts: &FlowOptions) -> Result<PatchGeometry> {
    let e = surface.embed(u)?;
    let nd = normal_vector_on(surface, u, side)?;
    let m = surface.dim() - 1;
    let w1 = central_stencil(1, opts.accuracy);
    let mut dn = vec![DVector::zeros(surface.dim()); m];
    for (a, d) in dn.iter_mut().enumerate() {
        for &(o, w) in &w1 {
            let up = u + axis(m, a) * (o as f64 * opts.step);
            let nn = normal_vector_on(surface, &up, side).map_err(|err| match err {
                GeometryError::EvaluationOutsideDomain { coords } => {
                    GeometryError::StencilOutsideDomain(format!("{coords:?}"))
                }
                other => other,
            })?;
            *d += nn.normal.components * (w / opts.step);
        }
    }
    Ok(PatchGeometry {
        point: e.point,
        normal: nd.normal.components,
        tangent: e.tangent,
        hessian: e.hessian,
        normal_derivative: dn,
    })
}

/// Shape operator on the surface's own side.
pub fn shape_operator(surface: &ImmersedHypersurface, u: &DVector<f64>) -> Result<ShapeOperator> {
    shape_operator_on(surface, u, surface.side, &FlowOptions::default())
}

pub fn shape_operator_on(
    surface: &ImmersedHypersurface,
    u: &DVector<f64>,
    side: NormalSide,
    opts: &FlowOptions,
) -> Result<ShapeOperator> {
    base_patch(surface, u, side, opts)?.shape_operator(&surface.metric)
}

/// Normal curvature at `u` in the tangent direction `y` (chart components),
/// normalized to `F(y) = 1`.
pub fn normal_curvature(surface: &ImmersedHypersurface, u: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let e = surface.embed(u)?;
    let nd = normal_vector(surface, u)?;
    let t = &e.tangent;
    let w = (t.transpose() * t)
        .lu()
        .solve(&(t.transpose() * y))
        .ok_or(GeometryError::DegenerateImmersion(0.0))?;
    if (t * &w - y).norm() > 1e-8 * y.norm().max(1.0) {
        return Err(GeometryError::HypothesisViolated {
            what: "direction tangent to the hypersurface".into(),
            witness: format!("{:?}", y.as_slice()),
        });
    }
    let patch = PatchGeometry {
        point: e.point,
        normal: nd.normal.components,
        tangent: e.tangent,
        hessian: e.hessian,
        normal_derivative: Vec::new(),
    };
    Ok(patch.normal_curvature_raw(&surface.metric, &w)?.unit_f())
}

/// Parameter directions over which normal curvatures are minimized.
pub fn parameter_directions(m: usize, count: usize) -> Vec<DVector<f64>> {
    match m {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count.max(4))
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count.max(4) as f64;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for a in 0..m {
                out.push(axis(m, a));
                out.push(-axis(m, a));
                for b in a + 1..m {
                    for s in [1.0, -1.0] {
                        let d = (axis(m, a) + axis(m, b) * s) / 2f64.sqrt();
                        out.push(d.clone());
                        out.push(-d);
                    }
                }
            }
            out
        }
    }
}

/// States of the fixed-step geodesic flow at `times` (ascending, from 0).
fn flow_states(metric: &MetricSpec, x: &DVector<f64>, v: &DVector<f64>, times: &[f64], dt: f64) -> Result<Vec<Vec<f64>>> {
    let n = metric.dim;
    let mut s: Vec<f64> = x.iter().chain(v.iter()).copied().collect();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let sys = GeodesicSystem { metric };
    for &tk in times {
        if tk > t {
            let steps = ((tk - t) / dt).ceil() as usize;
            let path = solve_fixed(&sys, t, &s, tk, steps)?;
            for (i, st) in path.iter().enumerate() {
                if !metric.chart.contains_with_margin(&st[..n]) {
                    return Err(GeometryError::DomainExit {
                        time: t + (tk - t) * i as f64 / steps as f64,
                    });
                }
            }
            s = path.last().unwrap().clone();
            t = tk;
        }
        out.push(s.clone());
    }
    Ok(out)
}

/// Patches of the equidistant hypersurfaces `N_t` at one sample, obtained by
/// flowing a parameter stencil along normal geodesics and differentiating
/// the flow map.
pub fn flowed_patches(
    surface: &ImmersedHypersurface,
    u: &DVector<f64>,
    side: NormalSide,
    times: &[f64],
    opts: &FlowOptions,
) -> Result<Vec<PatchGeometry>> {
    let metric = &surface.metric;
    let n = metric.dim;
    let m = n - 1;
    let h = opts.step;
    let w1 = central_stencil(1, opts.accuracy);
    let w2 = central_stencil(2, opts.accuracy);
    let half = w1.iter().chain(w2.iter()).map(|(o, _)| o.abs()).max().unwrap_or(1);
    let mut lines: Vec<DVector<f64>> = (0..m).map(|a| axis(m, a)).collect();
    for a in 0..m {
        for b in a + 1..m {
            lines.push(axis(m, a) + axis(m, b));
        }
    }
    let trajectory = |up: &DVector<f64>| -> Result<Vec<Vec<f64>>> {
        let nd = normal_vector_on(surface, up, side).map_err(|err| match err {
            GeometryError::EvaluationOutsideDomain { coords } => GeometryError::StencilOutsideDomain(format!("{coords:?}")),
            other => other,
        })?;
        flow_states(metric, &nd.foot.coords, &nd.normal.components, times, opts.dt)
    };
    let center = trajectory(u)?;
    // traj[l][o + half]
    let mut traj: Vec<Vec<Option<Vec<Vec<f64>>>>> = vec![vec![None; 2 * half as usize + 1]; lines.len()];
    for (l, dir) in lines.iter().enumerate() {
        for o in -half..=half {
            if o != 0 {
                traj[l][(o + half) as usize] = Some(trajectory(&(u + dir * (o as f64 * h)))?);
            }
        }
    }
    let state = |l: usize, o: i32, k: usize| -> &[f64] {
        if o == 0 {
            &center[k]
        } else {
            traj[l][(o + half) as usize].as_ref().unwrap()[k].as_slice()
        }
    };
    let mut out = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let mut tangent = DMatrix::zeros(n, m);
        let mut dn = vec![DVector::zeros(n); m];
        let mut second = vec![DVector::zeros(n); lines.len()];
        for (l, sec) in second.iter_mut().enumerate() {
            for &(o, w) in &w2 {
                *sec += DVector::from_column_slice(&state(l, o, k)[..n]) * (w / (h * h));
            }
            if l < m {
                for &(o, w) in &w1 {
                    let s = state(l, o, k);
                    for i in 0..n {
                        tangent[(i, l)] += s[i] * w / h;
                        dn[l][i] += s[n + i] * w / h;
                    }
                }
            }
        }
        let mut hessian = vec![vec![DVector::zeros(n); m]; m];
        for a in 0..m {
            hessian[a][a] = second[a].clone();
        }
        let mut l = m;
        for a in 0..m {
            for b in a + 1..m {
                let hab = (&second[l] - &second[a] - &second[b]) * 0.5;
                hessian[a][b] = hab.clone();
                hessian[b][a] = hab;
                l += 1;
            }
        }
        out.push(PatchGeometry {
            point: DVector::from_column_slice(&center[k][..n]),
            normal: DVector::from_column_slice(&center[k][n..]),
            tangent,
            hessian,
            normal_derivative: dn,
        });
    }
    Ok(out)
}

/// Samples of `N_t = exp_N(t n)` with per-sample curvature extrema.
#[derive(Debug, Clone)]
pub struct EquidistantState {
    pub t: f64,
    pub points: Vec<DVector<f64>>,
    pub normals: Vec<DVector<f64>>,
    /// Extrema of `k_n` (with `F(y) = 1`) over sampled directions.
    pub kn_min: Vec<f64>,
    pub kn_max: Vec<f64>,
    /// Smallest principal curvature `min k̃_n`.
    pub kt_min: Vec<f64>,
}

pub fn equidistant(surface: &ImmersedHypersurface, t: f64, opts: &FlowOptions) -> Result<EquidistantState> {
    if !(t >= 0.0) {
        return Err(GeometryError::IntegrationFailure(format!("flow time must be nonnegative, got {t}")));
    }
    let m = surface.dim() - 1;
    let dirs = parameter_directions(m, 16);
    let per: Vec<(PatchGeometry, f64, f64, f64)> = surface
        .samples
        .par_iter()
        .map(|u| {
            let patch = flowed_patches(surface, u, surface.side, &[t], opts)?.remove(0);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for w in &dirs {
                let k = patch.normal_curvature_raw(&surface.metric, w)?.unit_f();
                lo = lo.min(k);
                hi = hi.max(k);
            }
            let kt = patch.shape_operator(&surface.metric)?.principal_curvatures()?[0];
            Ok((patch, lo, hi, kt))
        })
        .collect::<Result<_>>()?;
    Ok(EquidistantState {
        t,
        points: per.iter().map(|p| p.0.point.clone()).collect(),
        normals: per.iter().map(|p| p.0.normal.clone()).collect(),
        kn_min: per.iter().map(|p| p.1).collect(),
        kn_max: per.iter().map(|p| p.2).collect(),
        kt_min: per.iter().map(|p| p.3).collect(),
    })
}

/// `k̇ = −k² − f(t)` solved through `u″ = −f u`, `k = u′/u`.
struct RiccatiSystem<'a> {
    f: &'a (dyn Fn(f64) -> Result<f64> + Sync),
}

impl OdeSystem for RiccatiSystem<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, t: f64, s: &[f64], d: &mut [f64]) -> Result<()> {
        d[0] = s[1];
        d[1] = -(self.f)(t)? * s[0];
        Ok(())
    }

    fn admissible(&self, s: &[f64]) -> bool {
        s[0] > 0.0
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub k0: f64,
    pub span: f64,
    pub solution: DenseSolution,
}

impl RiccatiSolution {
    pub fn k(&self, t: f64) -> f64 {
        let s = self.solution.eval(t);
        s[1] / s[0]
    }
}

/// Solves `k̇ = −k² − f(t)`, `k(0) = k0` on `[0, t_end]`; a blow-up to `−∞`
/// is reported with its time.
pub fn riccati_evolve(
    k0: f64,
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    t_end: f64,
    opts: &OdeOptions,
) -> Result<RiccatiSolution> {
    let (solution, term) = solve_adaptive(&RiccatiSystem { f }, 0.0, &[1.0, k0], t_end, opts)?;
    match term {
        Termination::Completed => Ok(RiccatiSolution {
            k0,
            span: t_end,
            solution,
        }),
        Termination::Exited { time } => Err(GeometryError::BlowUp { time }),
    }
}

/// A function sampled with its derivative on an increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lemma2Verdict {
    /// `f ≤ −λ` everywhere; `max_excess = max (f + λ)`.
    Holds { max_excess: f64 },
    Violated { time: f64, value: f64 },
    PreconditionRejected { reason: String },
}

pub const LEMMA2_SLACK: f64 = 1e-9;

/// Certifies `f(0) ≤ −λ` and `f′ ≤ f² − λ²` on the grid, then checks `f ≤ −λ`
/// on `[0, t_end]`.
pub fn lemma2_check(lambda: f64, f: &SampledFunction, t_end: f64) -> Lemma2Verdict {
    if !(lambda >= 0.0) {
        return Lemma2Verdict::PreconditionRejected {
            reason: format!("λ = {lambda} is negative"),
        };
    }
    if f.times.is_empty() || f.values.len() != f.times.len() || f.derivatives.len() != f.times.len() {
        return Lemma2Verdict::PreconditionRejected {
            reason: "malformed samples".into(),
        };
    }
    if f.values[0] > -lambda + LEMMA2_SLACK {
        return Lemma2Verdict::PreconditionRejected {
            reason: format!("f(0) = {} > −λ = {}", f.values[0], -lambda),
        };
    }
    for i in 0..f.times.len() {
        let (v, d) = (f.values[i], f.derivatives[i]);
        if d > v * v - lambda * lambda + LEMMA2_SLACK {
            return Lemma2Verdict::PreconditionRejected {
                reason: format!("f′ = {d} > f² − λ² = {} at t = {}", v * v - lambda * lambda, f.times[i]),
            };
        }
    }
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..f.times.len() {
        if f.times[i] > t_end {
            break;
        }
        let excess = f.values[i] + lambda;
        if excess > LEMMA2_SLACK {
            return Lemma2Verdict::Violated {
                time: f.times[i],
                value: f.values[i],
            };
        }
        max_excess = max_excess.max(excess);
    }
    Lemma2Verdict::Holds { max_excess }
}

/// Samples `f` on `grid + 1` points of `[0, t_end]` where `f′ = f² − λ² − s(t)`,
/// `f(0) = −λ − c`.
pub fn sample_riccati_function(
    lambda: f64,
    c: f64,
    s: &(dyn Fn(f64) -> f64 + Sync),
    t_end: f64,
    grid: usize,
) -> Result<SampledFunction> {
    struct Sys<'a> {
        lambda: f64,
        s: &'a (dyn Fn(f64) -> f64 + Sync),
    }
    impl OdeSystem for Sys<'_> {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[f64], d: &mut [f64]) -> Result<()> {
            d[0] = y[0] * y[0] - self.lambda * self.lambda - (self.s)(t);
            Ok(())
        }
    }
    let sys = Sys { lambda, s };
    let (sol, _) = solve_adaptive(&sys, 0.0, &[-lambda - c], t_end, &OdeOptions::default())?;
    let mut out = SampledFunction {
        times: Vec::new(),
        values: Vec::new(),
        derivatives: Vec::new(),
    };
    for i in 0..=grid {
        let t = t_end * i as f64 / grid as f64;
        let v = sol.eval(t)[0];
        let mut d = [0.0];
        sys.rhs(t, &[v], &mut d)?;
        out.times.push(t);
        out.values.push(v);
        out.derivatives.push(d[0]);
    }
    Ok(out)
}

/// A random certified input for `lemma2_check`: `s(t) = a + b sin²(ωt + φ)`.
pub fn random_lemma2_function<R: Rng>(lambda: f64, t_end: f64, grid: usize, rng: &mut R) -> Result<SampledFunction> {
    let a: f64 = rng.gen_range(0.0..1.0);
    let b: f64 = rng.gen_range(0.0..1.0);
    let om: f64 = rng.gen_range(0.5..3.0);
    let ph: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let c: f64 = rng.gen_range(0.0..1.0);
    let s = move |t: f64| a + b * (om * t + ph).sin().powi(2);
    sample_riccati_function(lambda, c, &s, t_end, grid)
}

/// Focal points along the normal geodesic from `u` on `side`.
pub fn detect_focal(
    surface: &ImmersedHypersurface,
    u: &DVector<f64>,
    side: NormalSide,
    t_max: f64,
    opts: &FocalOptions,
) -> Result<FocalReport> {
    if !(t_max > 0.0) {
        return Err(GeometryError::IntegrationFailure(format!("T_max must be positive, got {t_max}")));
    }
    let shape = shape_operator_on(surface, u, side, &FlowOptions::default())?;
    let init = TangentVector::new(Point::new(shape.foot.clone()), shape.normal.clone())?;
    let path = integrate_geodesic(&surface.metric, &init, t_max, &OdeOptions::default())?;
    let tangents: Vec<DVector<f64>> = shape.tangent.column_iter().map(|c| c.clone_owned()).collect();
    let bundle = n_jacobi(&path, &shape.chart, &tangents, &OdeOptions::default())?;
    Ok(focal_scan(&bundle, opts))
}

/// `k_n`, `k̃_n` and `T_n` for one direction, each normalized by `g_n(y, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposition3Sample {
    pub parameter: DVector<f64>,
    pub direction: DVector<f64>,
    pub kn: f64,
    pub kt: f64,
    pub t_value: f64,
    /// `k_n − (k̃_n − T_n)`.
    pub residual: f64,
}

/// Compares the normal curvature with the osculating one minus the T-curvature
/// at every sample and every parameter direction.
pub fn proposition3_check(
    surface: &ImmersedHypersurface,
    flow: &FlowOptions,
    tcurv: &TCurvatureOptions,
) -> Result<Vec<Proposition3Sample>> {
    let m = surface.dim() - 1;
    let dirs = parameter_directions(m, 8);
    let per: Vec<Vec<Proposition3Sample>> = surface
        .samples
        .par_iter()
        .map(|u| {
            let patch = base_patch(surface, u, surface.side, flow)?;
            let shape = patch.shape_operator(&surface.metric)?;
            let ev = TCurvatureEvaluator::new(&surface.metric, patch.point.as_slice(), patch.normal.as_slice(), tcurv)?;
            dirs.iter()
                .map(|w| {
                    let raw = patch.normal_curvature_raw(&surface.metric, w)?;
                    let y = &patch.tangent * w;
                    let kn = raw.unit_g();
                    let kt = shape.normal_curvature(&y);
                    let t_value = ev.value(&y)? / raw.g_squared;
                    Ok(Proposition3Sample {
                        parameter: u.clone(),
                        direction: y,
                        kn,
                        kt,
                        t_value,
                        residual: kn - (kt - t_value),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Options {
    pub t_max: f64,
    /// Number of flow intervals; reports are emitted at `intervals + 1` times.
    pub intervals: usize,
    pub flow: FlowOptions,
    pub directions: usize,
    pub curvature_slack: f64,
    /// Samples (and times per sample) used for the T-curvature bound.
    pub t_bound_samples: usize,
    pub t_bound_times: usize,
    pub convexity_tolerance: f64,
    pub proposition3_tolerance: f64,
    /// Riccati consistency is asserted for `t ≤ riccati_window`.
    pub riccati_window: f64,
    pub riccati_tolerance: f64,
    pub tcurv: TCurvatureOptions,
    pub ode: OdeOptions,
}

impl Default for Theorem3Options {
    fn default() -> Self {
        Self {
            t_max: 3.0,
            intervals: 30,
            flow: FlowOptions::default(),
            directions: 16,
            curvature_slack: 1e-9,
            t_bound_samples: 8,
            t_bound_times: 3,
            convexity_tolerance: 1e-9,
            proposition3_tolerance: 1e-6,
            riccati_window: 2.0,
            riccati_tolerance: 1e-3,
            tcurv: TCurvatureOptions::default(),
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    LocallyConvex,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub t: f64,
    /// `min k_n` over samples and directions (`g_n(y, y) = 1`).
    pub min_kn: f64,
    /// Smallest principal curvature measured on `N_t`.
    pub min_kt_measured: f64,
    /// Smallest Riccati-predicted `k̃`.
    pub min_kt_predicted: f64,
    pub verdict: Verdict,
    /// `min k̃_predicted − δ`.
    pub theorem3_margin: f64,
    /// `min [k_n − (k̃_predicted − δ)]`.
    pub proposition3_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Report {
    pub k: f64,
    pub delta: f64,
    pub base_min_kn: f64,
    /// Largest flag curvature of normal flags met along the normal geodesics.
    pub max_flag_curvature: f64,
    pub t_bound: TBoundReport,
    pub reports: Vec<ConvexityReport>,
    /// `max |k̃_predicted − k̃_measured|` (dimension 2) or the largest amount by
    /// which the prediction exceeds the measurement, for `t ≤ riccati_window`.
    pub riccati_error: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

struct SampleRun {
    base_min_kn: f64,
    max_flag: f64,
    flag_witness: Option<(f64, f64)>,
    predicted: Vec<f64>,
    measured_kt: Vec<f64>,
    min_kn: Vec<f64>,
    min_prop3: Vec<f64>,
    patches: Vec<PatchGeometry>,
}

fn run_sample(
    surface: &ImmersedHypersurface,
    u: &DVector<f64>,
    times: &[f64],
    dirs: &[DVector<f64>],
    delta: f64,
    opts: &Theorem3Options,
) -> Result<SampleRun> {
    let metric = &surface.metric;
    let n = metric.dim;
    let base = base_patch(surface, u, surface.side, &opts.flow)?;
    let shape = base.shape_operator(metric)?;
    let k0 = shape.principal_curvatures()?[0];
    let mut base_min_kn = f64::INFINITY;
    for w in dirs {
        base_min_kn = base_min_kn.min(base.normal_curvature_raw(metric, w)?.unit_g());
    }
    let init = TangentVector::new(Point::new(base.point.clone()), base.normal.clone())?;
    let path = integrate_geodesic(metric, &init, opts.t_max, &opts.ode)?;
    let tangents: Vec<DVector<f64>> = shape.tangent.column_iter().map(|c| c.clone_owned()).collect();
    let bundle = n_jacobi(&path, &shape.chart, &tangents, &opts.ode)?;
    let top = |t: f64| -> Result<f64> {
        let r = bundle.curvature_hat(t)?;
        let block = r.view((0, 0), (n - 1, n - 1)).clone_owned();
        let sym = (&block + block.transpose()) * 0.5;
        Ok(sym.symmetric_eigenvalues().max())
    };
    let mut max_flag = f64::NEG_INFINITY;
    let mut flag_witness = None;
    for &t in times {
        let k = top(t)?;
        if k > max_flag {
            max_flag = k;
            flag_witness = Some((t, k));
        }
    }
    let ric = riccati_evolve(k0, &top, opts.t_max, &opts.ode)?;
    let predicted: Vec<f64> = times.iter().map(|&t| ric.k(t)).collect();
    let patches = flowed_patches(surface, u, surface.side, times, &opts.flow)?;
    let mut measured_kt = Vec::with_capacity(times.len());
    let mut min_kn = Vec::with_capacity(times.len());
    let mut min_prop3 = Vec::with_capacity(times.len());
    for (k, p) in patches.iter().enumerate() {
        measured_kt.push(p.shape_operator(metric)?.principal_curvatures()?[0]);
        let mut lo = f64::INFINITY;
        for w in dirs {
            lo = lo.min(p.normal_curvature_raw(metric, w)?.unit_g());
        }
        min_kn.push(lo);
        min_prop3.push(lo - (predicted[k] - delta));
    }
    Ok(SampleRun {
        base_min_kn,
        max_flag,
        flag_witness,
        predicted,
        measured_kt,
        min_kn,
        min_prop3,
        patches,
    })
}

fn violated(what: &str, witness: String) -> GeometryError {
    GeometryError::HypothesisViolated {
        what: what.into(),
        witness,
    }
}

/// Verifies convexity of the outer equidistants `N_t`, `t ∈ [0, t_max]`, for a
/// metric with flag curvature `≤ −k²` and T-curvature bounded by `δ`.
pub fn theorem3_verify(surface: &ImmersedHypersurface, k: f64, delta: f64, opts: &Theorem3Options) -> Result<Theorem3Report> {
    if !(opts.t_max > 0.0) || opts.intervals == 0 {
        return Err(GeometryError::IntegrationFailure("empty time span".into()));
    }
    let n = surface.dim();
    let times: Vec<f64> = (0..=opts.intervals)
        .map(|i| opts.t_max * i as f64 / opts.intervals as f64)
        .collect();
    let dirs = parameter_directions(n - 1, opts.directions);
    let runs: Vec<SampleRun> = surface
        .samples
        .par_iter()
        .map(|u| run_sample(surface, u, &times, &dirs, delta, opts))
        .collect::<Result<_>>()?;

    let base_min_kn = runs.iter().map(|r| r.base_min_kn).fold(f64::INFINITY, f64::min);
    let max_flag_curvature = runs.iter().map(|r| r.max_flag).fold(f64::NEG_INFINITY, f64::max);
    if max_flag_curvature > -k * k + opts.curvature_slack {
        let (i, r) = runs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.max_flag.total_cmp(&b.1.max_flag))
            .unwrap();
        let (t, kk) = r.flag_witness.unwrap();
        return Err(violated(
            "flag curvature K ≤ −k² along normal geodesics",
            format!("sample {i}, t = {t}: K = {kk} > {}", -k * k),
        ));
    }
    if base_min_kn <= 2.0 * delta {
        return Err(violated(
            "normal curvatures of N exceed 2δ",
            format!("min k_n = {base_min_kn} ≤ 2δ = {}", 2.0 * delta),
        ));
    }

    // T-curvature bound on a spread of flowed points
    let stride = (runs.len() / opts.t_bound_samples.max(1)).max(1);
    let tstride = (times.len() / opts.t_bound_times.max(1)).max(1);
    let mut tsamples = Vec::new();
    for r in runs.iter().step_by(stride).take(opts.t_bound_samples) {
        for p in r.patches.iter().step_by(tstride).take(opts.t_bound_times) {
            for w in &dirs {
                tsamples.push(TSample {
                    x: p.point.clone(),
                    y: p.normal.clone(),
                    u: &p.tangent * w,
                });
            }
        }
    }
    let parts: Vec<TBoundReport> = tsamples
        .par_iter()
        .map(|s| t_bound_check(&surface.metric, std::slice::from_ref(s), delta, &opts.tcurv))
        .collect::<Result<_>>()?;
    let mut t_bound = TBoundReport {
        holds: true,
        max_ratio: 0.0,
        worst: None,
    };
    for p in parts {
        if !p.holds && t_bound.holds {
            t_bound.holds = false;
            t_bound.worst = p.worst.clone();
        }
        if p.max_ratio > t_bound.max_ratio {
            t_bound.max_ratio = p.max_ratio;
            if t_bound.holds {
                t_bound.worst = p.worst;
            }
        }
    }
    if !t_bound.holds {
        return Err(violated(
            "|T| ≤ δ bound",
            format!("{:?} (max ratio {})", t_bound.worst, t_bound.max_ratio),
        ));
    }

    let mut failures = Vec::new();
    let mut reports = Vec::with_capacity(times.len());
    let mut riccati_error: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let min_kn = runs.iter().map(|r| r.min_kn[i]).fold(f64::INFINITY, f64::min);
        let min_kt_measured = runs.iter().map(|r| r.measured_kt[i]).fold(f64::INFINITY, f64::min);
        let min_kt_predicted = runs.iter().map(|r| r.predicted[i]).fold(f64::INFINITY, f64::min);
        let proposition3_margin = runs.iter().map(|r| r.min_prop3[i]).fold(f64::INFINITY, f64::min);
        if t <= opts.riccati_window + 1e-12 {
            for r in &runs {
                let gap = r.predicted[i] - r.measured_kt[i];
                riccati_error = riccati_error.max(if n == 2 { gap.abs() } else { gap.max(0.0) });
            }
        }
        let verdict = if min_kn > opts.convexity_tolerance {
            Verdict::LocallyConvex
        } else {
            Verdict::NotCertified
        };
        let theorem3_margin = min_kt_predicted - delta;
        if verdict != Verdict::LocallyConvex {
            failures.push(format!("t = {t}: min k_n = {min_kn} not positive"));
        }
        if theorem3_margin <= 0.0 {
            failures.push(format!("t = {t}: predicted k̃ = {min_kt_predicted} ≤ δ"));
        }
        if proposition3_margin < -opts.proposition3_tolerance {
            failures.push(format!("t = {t}: k_n falls below k̃ − δ by {}", -proposition3_margin));
        }
        reports.push(ConvexityReport {
            t,
            min_kn,
            min_kt_measured,
            min_kt_predicted,
            verdict,
            theorem3_margin,
            proposition3_margin,
        });
    }
    if riccati_error > opts.riccati_tolerance {
        failures.push(format!("Riccati prediction differs from measurement by {riccati_error}"));
    }
    Ok(Theorem3Report {
        k,
        delta,
        base_min_kn,
        max_flag_curvature,
        t_bound,
        reports,
        riccati_error,
        passed: failures.is_empty(),
        failures,
    })
}

/// Which ordering of `δ` and `k` the ball-convexity hypothesis asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallCondition {
    DeltaAboveK,
    DeltaBelowK,
}

impl BallCondition {
    pub fn holds(self, k: f64, delta: f64) -> bool {
        match self {
            BallCondition::DeltaAboveK => delta > k,
            BallCondition::DeltaBelowK => delta < k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallConvexityRow {
    pub radius: f64,
    /// `min k_n` (with `F(y) = 1`) over samples and directions.
    pub min_kn: f64,
    pub convex: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallConvexityReport {
    pub condition: BallCondition,
    pub hypothesis_met: bool,
    pub rows: Vec<BallConvexityRow>,
}

impl BallConvexityReport {
    pub fn all_convex(&self) -> bool {
        self.rows.iter().all(|r| r.convex)
    }
}

/// Diagnostic: the boundaries of metric balls about `center` are realized as
/// outward equidistants of a geodesic sphere of radius `seed_radius`, and
/// their normal curvatures are reported next to whether `(k, δ)` satisfies
/// `condition`. No implication between the two is asserted.
#[allow(clippy::too_many_arguments)]
pub fn ball_convexity(
    metric: &MetricSpec,
    center: &DVector<f64>,
    seed_radius: f64,
    radii: &[f64],
    k: f64,
    delta: f64,
    condition: BallCondition,
    samples: usize,
    opts: &FlowOptions,
) -> Result<BallConvexityReport> {
    let surface = ImmersedHypersurface::new(
        metric,
        SurfaceShape::GeodesicSphere { r: seed_radius },
        center.clone(),
        NormalSide::Outward,
        samples,
    )?;
    let rows = radii
        .iter()
        .map(|&radius| {
            if radius < seed_radius {
                return Err(GeometryError::InvalidPreset(format!(
                    "radius {radius} is below the seed radius {seed_radius}"
                )));
            }
            let st = equidistant(&surface, radius - seed_radius, opts)?;
            let min_kn = st.kn_min.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(BallConvexityRow {
                radius,
                min_kn,
                convex: min_kn > 0.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BallConvexityReport {
        condition,
        hypothesis_met: condition.holds(k, delta),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sphere_derivatives_match_differences() {
        let u = [0.7, 1.9];
        let (_, ds, dds) = unit_sphere(&u, 3);
        let h = 1e-6;
        for a in 0..2 {
            let mut up = u;
            let mut um = u;
            up[a] += h;
            um[a] -= h;
            let (sp, dsp, _) = unit_sphere(&up, 3);
            let (sm, dsm, _) = unit_sphere(&um, 3);
            assert!(((sp - sm) / (2.0 * h) - ds.column(a)).amax() < 1e-8);
            for b in 0..2 {
                let fd = (dsp.column(b) - dsm.column(b)) / (2.0 * h);
                assert!((fd - &dds[b][a]).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn euclidean_sphere_normal_and_curvature() {
        let m = MetricSpec::euclidean(3).unwrap();
        let s = ImmersedHypersurface::from_preset(&m, "sphere:r=2", NormalSide::Outward, 8).unwrap();
        for u in &s.samples {
            let nd = normal_vector(&s, u).unwrap();
            let radial = &nd.foot.coords / 2.0;
            assert!((nd.normal.components.clone() - radial).amax() < 1e-12);
            let y = s.embed(u).unwrap().tangent.column(0).clone_owned();
            assert!((normal_curvature(&s, u, &y).unwrap() - 0.5).abs() < 1e-12);
            let sh = shape_operator(&s, u).unwrap();
            assert!((&sh.matrix - DMatrix::identity(2, 2) * 0.5).amax() < 1e-6);
        }
    }

    #[test]
    fn degenerate_ellipsoid_rejected() {
        let m = MetricSpec::euclidean(2).unwrap();
        let err = ImmersedHypersurface::new(
            &m,
            SurfaceShape::Ellipsoid { a: 1.0, b: 1e-12 },
            DVector::zeros(2),
            NormalSide::Outward,
            8,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateImmersion(_)));
    }

    #[test]
    fn riccati_exact_solutions() {
        let zero = |_t: f64| Ok(0.0);
        let r = riccati_evolve(0.5, &zero, 3.0, &OdeOptions::default()).unwrap();
        assert!((r.k(3.0) - 1.0 / 5.0).abs() < 1e-10);
        let minus = |_t: f64| Ok(-1.0);
        let r0: f64 = 0.5;
        let r = riccati_evolve(1.0 / r0.tanh(), &minus, 3.0, &OdeOptions::default()).unwrap();
        assert!((r.k(2.0) - 1.0 / (r0 + 2.0).tanh()).abs() < 1e-9);
        match riccati_evolve(-1.0 / 0.7, &zero, 3.0, &OdeOptions::default()) {
            Err(GeometryError::BlowUp { time }) => assert!((time - 0.7).abs() < 1e-9, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lemma2_examples() {
        let constant = SampledFunction {
            times: vec![0.0, 1.0],
            values: vec![-1.0, -1.0],
            derivatives: vec![0.0, 0.0],
        };
        assert!(matches!(lemma2_check(1.0, &constant, 1.0), Lemma2Verdict::Holds { .. }));
        let f = sample_riccati_function(1.0, 1.0, &|_t| 0.0, 5.0, 500).unwrap();
        assert!(matches!(lemma2_check(1.0, &f, 5.0), Lemma2Verdict::Holds { .. }));
        // f′ = f² − 1, f(0) = −2 has f = −coth(t + artanh(1/2))
        let t: f64 = 2.5;
        assert!((f.values[250] + 1.0 / (t + 0.5f64.atanh()).tanh()).abs() < 1e-8);
        let bad = SampledFunction {
            times: vec![0.0],
            values: vec![-0.5],
            derivatives: vec![0.0],
        };
        assert!(matches!(lemma2_check(1.0, &bad, 1.0), Lemma2Verdict::PreconditionRejected { .. }));
    }
}

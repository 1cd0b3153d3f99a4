//! Concrete Finsler metrics on a single chart.
//!
//! Every family is given in closed form and evaluated through the [`Real`]
//! trait, so the same formula feeds plain evaluation, the Taylor-jet engine
//! and the finite-difference oracle.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeometryError, Result};
use crate::jet::{Jet, JetLayout, Real, MAX_ORDER};
use crate::types::{check_dim, ChartDomain, DomainKind, Point, TangentVector};

/// Margin kept from the boundary of bounded charts by default.
pub const DEFAULT_CHART_MARGIN: f64 = 1e-3;

/// A Riemannian metric tensor field `a_ij(x)` in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixField {
    Identity,
    Constant(DMatrix<f64>),
    /// `(2 / (k (1 - |x|²)))² δ_ij` on the unit ball: curvature `-k²`.
    PoincareBall { k: f64 },
    /// `exp(2φ(x)) δ_ij` with `φ(x) = ½ xᵀ Q x + l·x`.
    Conformal {
        quad: DMatrix<f64>,
        lin: DVector<f64>,
    },
}

impl MatrixField {
    /// `a_x(y, y)`.
    pub fn quad_form<R: Real>(&self, x: &[R], y: &[R]) -> R {
        let zero = y[0].lift(0.0);
        let sq = || y.iter().fold(zero.clone(), |acc, v| acc + v.clone() * v.clone());
        match self {
            MatrixField::Identity => sq(),
            MatrixField::Constant(a) => {
                let n = y.len();
                let mut acc = zero.clone();
                for i in 0..n {
                    for j in 0..n {
                        acc = acc + y[i].clone() * y[j].clone() * a[(i, j)];
                    }
                }
                acc
            }
            MatrixField::PoincareBall { k } => {
                let r2 = x.iter().fold(zero.clone(), |acc, v| acc + v.clone() * v.clone());
                // λ = 2 / (k (1 - |x|²))
                let lambda = (-r2 + 1.0).recip() * (2.0 / k);
                lambda.clone() * lambda * sq()
            }
            MatrixField::Conformal { quad, lin } => {
                let n = x.len();
                let mut phi = zero.clone();
                for i in 0..n {
                    phi = phi + x[i].clone() * lin[i];
                    for j in 0..n {
                        phi = phi + x[i].clone() * x[j].clone() * (0.5 * quad[(i, j)]);
                    }
                }
                (phi * 2.0).exp() * sq()
            }
        }
    }

    pub fn matrix_at(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            MatrixField::Identity => DMatrix::identity(n, n),
            MatrixField::Constant(a) => a.clone(),
            MatrixField::PoincareBall { k } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let lambda = 2.0 / (k * (1.0 - r2));
                DMatrix::identity(n, n) * (lambda * lambda)
            }
            MatrixField::Conformal { quad, lin } => {
                let xv = DVector::from_column_slice(x);
                let phi = 0.5 * (xv.transpose() * quad * &xv)[(0, 0)] + lin.dot(&xv);
                DMatrix::identity(n, n) * (2.0 * phi).exp()
            }
        }
    }
}

/// A covector field `b_i(x)` in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum CovectorField {
    Zero,
    Constant(DVector<f64>),
    /// `b(x) = b0 + B x`; closed exactly when `B` is symmetric.
    Affine {
        b0: DVector<f64>,
        slope: DMatrix<f64>,
    },
}

impl CovectorField {
    /// `b_x(y)`.
    pub fn pair<R: Real>(&self, x: &[R], y: &[R]) -> R {
        let zero = y[0].lift(0.0);
        match self {
            CovectorField::Zero => zero,
            CovectorField::Constant(b) => y
                .iter()
                .zip(b.iter())
                .fold(zero, |acc, (v, bi)| acc + v.clone() * *bi),
            CovectorField::Affine { b0, slope } => {
                let n = y.len();
                let mut acc = zero;
                for i in 0..n {
                    let mut bi = x[0].lift(b0[i]);
                    for j in 0..n {
                        bi = bi + x[j].clone() * slope[(i, j)];
                    }
                    acc = acc + bi * y[i].clone();
                }
                acc
            }
        }
    }

    pub fn at(&self, x: &[f64]) -> DVector<f64> {
        let n = x.len();
        match self {
            CovectorField::Zero => DVector::zeros(n),
            CovectorField::Constant(b) => b.clone(),
            CovectorField::Affine { b0, slope } => b0 + slope * DVector::from_column_slice(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CovectorField::Zero => true,
            CovectorField::Constant(b) => b.iter().all(|v| *v == 0.0),
            CovectorField::Affine { b0, slope } => {
                b0.iter().all(|v| *v == 0.0) && slope.iter().all(|v| *v == 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricFamily {
    Euclidean,
    HyperbolicBall { k: f64 },
    RiemannianClosedForm(MatrixField),
    /// `F = |y| + b·y` with constant `b`, `|b| < 1`.
    MinkowskiRanders { b: DVector<f64> },
    /// `F = sqrt(a_x(y, y)) + b_x(y)`.
    Randers { a: MatrixField, b: CovectorField },
}

/// An evaluable Finsler metric with its chart.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub dim: usize,
    pub chart: ChartDomain,
    pub family: MetricFamily,
    pub reversible: bool,
    pub name: String,
}

/// A seed direction `(δx, δy)` for jet evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Seed {
    pub fn x_axis(dim: usize, i: usize) -> Self {
        let mut x = vec![0.0; dim];
        x[i] = 1.0;
        Self {
            x,
            y: vec![0.0; dim],
        }
    }

    pub fn y_axis(dim: usize, i: usize) -> Self {
        let mut y = vec![0.0; dim];
        y[i] = 1.0;
        Self {
            x: vec![0.0; dim],
            y,
        }
    }

    /// All `2·dim` coordinate seeds: `x¹..xⁿ` then `y¹..yⁿ`.
    pub fn coordinates(dim: usize) -> Vec<Seed> {
        (0..dim)
            .map(|i| Seed::x_axis(dim, i))
            .chain((0..dim).map(|i| Seed::y_axis(dim, i)))
            .collect()
    }
}

/// A metric-family preset string parsed into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetSpec {
    pub kind: String,
    pub params: Vec<(String, Vec<f64>)>,
}

impl PresetSpec {
    /// Parses `kind[:key=v1,v2,...,key2=...]`. Bare values after a key extend it.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || GeometryError::InvalidPreset(text.to_string());
        let (kind, rest) = match text.split_once(':') {
            Some((k, r)) => (k.trim(), r.trim()),
            None => (text.trim(), ""),
        };
        if kind.is_empty() {
            return Err(bad());
        }
        let mut params: Vec<(String, Vec<f64>)> = Vec::new();
        if !rest.is_empty() {
            for token in rest.split(',') {
                let token = token.trim();
                if let Some((key, val)) = token.split_once('=') {
                    let v: f64 = val.trim().parse().map_err(|_| bad())?;
                    params.push((key.trim().to_string(), vec![v]));
                } else {
                    let v: f64 = token.parse().map_err(|_| bad())?;
                    params.last_mut().ok_or_else(bad)?.1.push(v);
                }
            }
        }
        Ok(Self {
            kind: kind.to_string(),
            params,
        })
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| (v.len() == 1).then(|| v[0]))
    }
}

impl MetricSpec {
    /// Flat `F(x, y) = |y|` on all of `ℝⁿ`.
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            chart: ChartDomain::all_space(),
            family: MetricFamily::Euclidean,
            reversible: true,
            name: "euclidean".into(),
        })
    }

    /// Poincaré ball of constant sectional curvature `-k²`.
    pub fn hyperbolic(dim: usize, k: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(GeometryError::InvalidMetric(format!(
                "hyperbolic curvature scale must be positive, got {k}"
            )));
        }
        Ok(Self {
            dim,
            chart: ChartDomain::ball(DVector::zeros(dim), 1.0, DEFAULT_CHART_MARGIN),
            family: MetricFamily::HyperbolicBall { k },
            reversible: true,
            name: format!("hyperbolic:k={k}"),
        })
    }

    /// Constant Randers norm `|y| + b·y`: locally Minkowski, hence Berwald.
    pub fn minkowski_randers(b: DVector<f64>) -> Result<Self> {
        let dim = b.len();
        check_dim(dim)?;
        let nb = b.norm();
        if !(nb < 1.0) {
            return Err(GeometryError::InvalidRanders(format!("|b| = {nb} must be < 1")));
        }
        let reversible = nb == 0.0;
        let name = format!(
            "minkowski-randers:b={}",
            b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        );
        Ok(Self {
            dim,
            chart: ChartDomain::all_space(),
            family: MetricFamily::MinkowskiRanders { b },
            reversible,
            name,
        })
    }

    /// A Riemannian metric from a closed-form tensor field.
    pub fn riemannian(dim: usize, a: MatrixField, chart: ChartDomain) -> Result<Self> {
        check_dim(dim)?;
        let spec = Self {
            dim,
            chart,
            family: MetricFamily::RiemannianClosedForm(a),
            reversible: true,
            name: "riemannian".into(),
        };
        spec.validate_samples()?;
        Ok(spec)
    }

    /// `F = sqrt(a(y, y)) + b(y)`; rejects data with `‖b‖_a ≥ 1` on chart samples.
    pub fn randers(dim: usize, a: MatrixField, b: CovectorField, chart: ChartDomain) -> Result<Self> {
        check_dim(dim)?;
        let reversible = b.is_zero();
        let spec = Self {
            dim,
            chart,
            family: MetricFamily::Randers { a, b },
            reversible,
            name: "randers".into(),
        };
        spec.validate_samples()?;
        Ok(spec)
    }

    /// Poincaré-ball tensor of curvature `-k²` plus the closed covector `eps·dx¹`.
    pub fn hyperbolic_randers(dim: usize, k: f64, eps: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(GeometryError::InvalidMetric(format!("k must be positive, got {k}")));
        }
        let mut b = DVector::zeros(dim.max(1));
        b[0] = eps;
        let mut spec = Self::randers(
            dim,
            MatrixField::PoincareBall { k },
            CovectorField::Constant(b),
            ChartDomain::ball(DVector::zeros(dim), 1.0, DEFAULT_CHART_MARGIN),
        )?;
        spec.name = format!("hyperbolic-randers:k={k},eps={eps}");
        Ok(spec)
    }

    /// Builds a metric from a preset name such as `hyperbolic:k=1`.
    pub fn from_preset(text: &str, dim: usize) -> Result<Self> {
        let p = PresetSpec::parse(text)?;
        let bad = || GeometryError::InvalidPreset(text.to_string());
        let spec = match p.kind.as_str() {
            "euclidean" => Self::euclidean(dim)?,
            "hyperbolic" => Self::hyperbolic(dim, p.scalar("k").unwrap_or(1.0))?,
            "minkowski-randers" => {
                let b = p.get("b").ok_or_else(bad)?;
                if b.len() != dim {
                    return Err(GeometryError::DimensionMismatch {
                        expected: dim,
                        got: b.len(),
                    });
                }
                Self::minkowski_randers(DVector::from_column_slice(b))?
            }
            "hyperbolic-randers" => Self::hyperbolic_randers(
                dim,
                p.scalar("k").unwrap_or(1.0),
                p.scalar("eps").unwrap_or(0.05),
            )?,
            _ => return Err(bad()),
        };
        Ok(spec)
    }

    /// Seeded uniform samples from the chart, kept inside the margin.
    pub fn sample_chart_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let x: Vec<f64> = match &self.chart.kind {
                DomainKind::AllSpace => (0..self.dim).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                DomainKind::OpenBall { center, radius } => (0..self.dim)
                    .map(|i| center[i] + rng.gen_range(-*radius..*radius))
                    .collect(),
                DomainKind::Box { lo, hi } => (0..self.dim)
                    .map(|i| rng.gen_range(lo[i]..hi[i]))
                    .collect(),
            };
            if self.chart.contains_with_margin(&x) {
                out.push(x);
            }
        }
        out
    }

    fn validate_samples(&self) -> Result<()> {
        let (a, b) = match &self.family {
            MetricFamily::RiemannianClosedForm(a) => (a, None),
            MetricFamily::Randers { a, b } => (a, Some(b)),
            _ => return Ok(()),
        };
        for x in self.sample_chart_points(200, 0x5eed) {
            let am = a.matrix_at(&x);
            let chol = am.clone().cholesky().ok_or_else(|| {
                GeometryError::InvalidRanders(format!("a is not positive definite at {x:?}"))
            })?;
            if let Some(b) = b {
                let bx = b.at(&x);
                let norm2 = bx.dot(&chol.solve(&bx));
                if !(norm2 < 1.0) {
                    return Err(GeometryError::InvalidRanders(format!(
                        "a-norm of b is {} >= 1 at {x:?}",
                        norm2.sqrt()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_riemannian_family(&self) -> bool {
        match &self.family {
            MetricFamily::Euclidean
            | MetricFamily::HyperbolicBall { .. }
            | MetricFamily::RiemannianClosedForm(_) => true,
            MetricFamily::MinkowskiRanders { b } => b.iter().all(|v| *v == 0.0),
            MetricFamily::Randers { b, .. } => b.is_zero(),
        }
    }

    /// Chart radius of the `a`-geodesic sphere of intrinsic radius `r` about
    /// the origin, for families whose Riemannian part is isotropic there.
    pub fn isotropic_chart_radius(&self, r: f64) -> Result<f64> {
        let ball = |k: f64| (0.5 * k * r).tanh();
        match &self.family {
            MetricFamily::Euclidean | MetricFamily::MinkowskiRanders { .. } => Ok(r),
            MetricFamily::HyperbolicBall { k } => Ok(ball(*k)),
            MetricFamily::RiemannianClosedForm(a) | MetricFamily::Randers { a, .. } => match a {
                MatrixField::Identity => Ok(r),
                MatrixField::PoincareBall { k } => Ok(ball(*k)),
                _ => Err(GeometryError::InvalidMetric(
                    "geodesic spheres need an isotropic Riemannian part".into(),
                )),
            },
        }
    }

    /// `F²(x, y)` for any scalar type.
    pub fn f_squared<R: Real>(&self, x: &[R], y: &[R]) -> R {
        match &self.family {
            MetricFamily::Euclidean => MatrixField::Identity.quad_form(x, y),
            MetricFamily::HyperbolicBall { k } => MatrixField::PoincareBall { k: *k }.quad_form(x, y),
            MetricFamily::RiemannianClosedForm(a) => a.quad_form(x, y),
            MetricFamily::MinkowskiRanders { b } => {
                let alpha = MatrixField::Identity.quad_form(x, y).sqrt();
                let beta = CovectorField::Constant(b.clone()).pair(x, y);
                let f = alpha + beta;
                f.clone() * f
            }
            MetricFamily::Randers { a, b } => {
                let f = a.quad_form(x, y).sqrt() + b.pair(x, y);
                f.clone() * f
            }
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.chart.contains(x) {
            return Err(GeometryError::EvaluationOutsideDomain { coords: x.to_vec() });
        }
        Ok(())
    }

    pub fn check_vector(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: y.len(),
            });
        }
        if y.iter().all(|v| *v == 0.0) {
            return Err(GeometryError::ZeroVector);
        }
        Ok(())
    }

    /// `F(x, y)`.
    pub fn norm(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if y.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        Ok(self.f_squared(x, y).max(0.0).sqrt())
    }

    pub fn norm_of(&self, v: &TangentVector) -> Result<f64> {
        self.norm(v.base.coords.as_slice(), v.components.as_slice())
    }

    /// Taylor jet of `F²` along the coordinate seeds `(x¹..xⁿ, y¹..yⁿ)`.
    pub(crate) fn f2_coordinate_jet(&self, x: &[f64], y: &[f64], order: usize) -> Jet {
        let n = self.dim;
        let layout = JetLayout::get(2 * n, order);
        let xs: Vec<Jet> = (0..n).map(|i| Jet::variable(layout, i, x[i])).collect();
        let ys: Vec<Jet> = (0..n).map(|i| Jet::variable(layout, n + i, y[i])).collect();
        self.f_squared(&xs, &ys)
    }
}

/// `F²(x, y)` with all mixed partials along `seeds` up to `order`, exact to
/// rounding.
pub fn evaluate_jet(
    metric: &MetricSpec,
    x: &Point,
    y: &TangentVector,
    seeds: &[Seed],
    order: usize,
) -> Result<Jet> {
    if order > MAX_ORDER || order == 0 {
        return Err(GeometryError::UnsupportedOrder(order));
    }
    let xs = x.coords.as_slice();
    let ys = y.components.as_slice();
    metric.check_point(xs)?;
    metric.check_vector(ys)?;
    let layout = JetLayout::get(seeds.len(), order);
    let lift = |base: &[f64], pick: fn(&Seed) -> &Vec<f64>| -> Vec<Jet> {
        (0..metric.dim)
            .map(|i| {
                let dir: Vec<f64> = seeds.iter().map(|s| pick(s)[i]).collect();
                Jet::affine(layout, base[i], &dir)
            })
            .collect()
    };
    let xj = lift(xs, |s| &s.x);
    let yj = lift(ys, |s| &s.y);
    Ok(metric.f_squared(&xj, &yj))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_hessian_is_twice_identity() {
        let m = MetricSpec::euclidean(2).unwrap();
        let x = Point::origin(2);
        let y = TangentVector::from_slices(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let seeds = vec![Seed::y_axis(2, 0), Seed::y_axis(2, 1)];
        let jet = evaluate_jet(&m, &x, &y, &seeds, 2).unwrap();
        assert_eq!(jet.partial(&[0, 0]), 2.0);
        assert_eq!(jet.partial(&[1, 1]), 2.0);
        assert_eq!(jet.partial(&[0, 1]), 0.0);
    }

    #[test]
    fn minkowski_randers_is_not_reversible() {
        let m = MetricSpec::minkowski_randers(DVector::from_vec(vec![0.3, 0.0])).unwrap();
        assert!((m.norm(&[0.0, 0.0], &[1.0, 0.0]).unwrap() - 1.3).abs() < 1e-15);
        assert!((m.norm(&[0.0, 0.0], &[-1.0, 0.0]).unwrap() - 0.7).abs() < 1e-15);
        assert!(!m.reversible);
    }

    #[test]
    fn invalid_randers_rejected() {
        let err = MetricSpec::minkowski_randers(DVector::from_vec(vec![1.0, 0.0])).unwrap_err();
        assert!(matches!(err, GeometryError::InvalidRanders(_)));
        let err = MetricSpec::randers(
            2,
            MatrixField::Identity,
            CovectorField::Constant(DVector::from_vec(vec![0.0, 1.2])),
            ChartDomain::all_space(),
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::InvalidRanders(_)));
        // a-norm of eps dx1 under the Poincaré tensor is eps k (1-|x|²)/2
        assert!(MetricSpec::hyperbolic_randers(3, 1.0, 0.9).is_ok());
    }

    #[test]
    fn jet_errors() {
        let m = MetricSpec::hyperbolic(2, 1.0).unwrap();
        let y = TangentVector::from_slices(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let seeds = Seed::coordinates(2);
        assert_eq!(
            evaluate_jet(&m, &Point::origin(2), &y, &seeds, 5).unwrap_err(),
            GeometryError::UnsupportedOrder(5)
        );
        assert!(matches!(
            evaluate_jet(&m, &Point::from_slice(&[1.2, 0.0]), &y, &seeds, 2).unwrap_err(),
            GeometryError::EvaluationOutsideDomain { .. }
        ));
        let zero = TangentVector::from_slices(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(
            evaluate_jet(&m, &Point::origin(2), &zero, &seeds, 2).unwrap_err(),
            GeometryError::ZeroVector
        );
    }

    #[test]
    fn presets_parse() {
        let p = PresetSpec::parse("minkowski-randers:b=0.3,0").unwrap();
        assert_eq!(p.get("b").unwrap(), &[0.3, 0.0]);
        let m = MetricSpec::from_preset("hyperbolic-randers:k=1,eps=0.05", 3).unwrap();
        assert_eq!(m.dim, 3);
        assert!(!m.reversible);
        assert!(MetricSpec::from_preset("hyperbolic:k=2", 2).is_ok());
        assert!(MetricSpec::from_preset("euclidean", 2).unwrap().reversible);
        assert!(MetricSpec::from_preset("nope", 2).is_err());
        assert!(MetricSpec::from_preset("minkowski-randers:b=0.3", 2).is_err());
        assert!(PresetSpec::parse("sphere:r=abc").is_err());
    }

    #[test]
    fn poincare_chart_radius() {
        let m = MetricSpec::hyperbolic(2, 1.0).unwrap();
        assert!((m.isotropic_chart_radius(2.0).unwrap() - 1f64.tanh()).abs() < 1e-15);
    }
}

//! Fundamental tensor, spray, nonlinear connection and curvature.
//!
//! Everything is derived from Taylor jets of `F²` in the coordinate seeds
//! `(x¹..xⁿ, y¹..yⁿ)`. The spray is solved as a jet, so its `x`/`y`
//! derivatives (connection, curvature) come out exactly rather than from
//! nested finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, Result};
use crate::jet::{Jet, JetLayout};
use crate::metric::MetricSpec;
use crate::types::{Flag, Point, TangentVector};

/// Condition number above which `g_y` is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e10;
/// Flags whose `g_y` area form falls below this are rejected.
pub const DEGENERATE_FLAG: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalTensor {
    pub base: Point,
    pub reference: TangentVector,
    pub matrix: DMatrix<f64>,
}

impl FundamentalTensor {
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.matrix * v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprayData {
    pub base: Point,
    pub velocity: TangentVector,
    /// `G^i(x, y)`.
    pub coefficients: DVector<f64>,
    /// `N^i_j = ∂G^i/∂y^j`.
    pub connection: DMatrix<f64>,
}

/// The Riemann curvature `R_y = R^i_k(y)` as a linear map of `T_xM`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOperator {
    pub base: Point,
    pub reference: TangentVector,
    pub matrix: DMatrix<f64>,
}

impl CurvatureOperator {
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * u
    }
}

/// `g`, `G`, `N` and `R` at one `(x, y)`, from a single jet evaluation.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub g: DMatrix<f64>,
    pub spray: DVector<f64>,
    pub connection: DMatrix<f64>,
    pub curvature: DMatrix<f64>,
}

/// Rejects tensors that are not positive definite or are too ill-conditioned.
pub fn check_tensor(g: &DMatrix<f64>) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::SingularTensor {
            condition: f64::INFINITY,
        });
    }
    let eig = g.clone().symmetric_eigenvalues();
    let lo = eig.min();
    let hi = eig.max();
    if lo <= 0.0 {
        return Err(GeometryError::SingularTensor {
            condition: f64::INFINITY,
        });
    }
    let condition = hi / lo;
    if condition > SINGULAR_CONDITION {
        return Err(GeometryError::SingularTensor { condition });
    }
    Ok(())
}

fn check_inputs(metric: &MetricSpec, x: &[f64], y: &[f64]) -> Result<()> {
    metric.check_point(x)?;
    metric.check_vector(y)
}

/// `g_ij(x, y) = ½ ∂²F²/∂y^i∂y^j`, unchecked apart from domain and zero tests.
pub fn fundamental_matrix(metric: &MetricSpec, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    check_inputs(metric, x, y)?;
    let n = metric.dim;
    let p = metric.f2_coordinate_jet(x, y, 2);
    Ok(DMatrix::from_fn(n, n, |i, j| 0.5 * p.partial(&[n + i, n + j])))
}

pub fn fundamental_tensor(metric: &MetricSpec, x: &Point, y: &TangentVector) -> Result<FundamentalTensor> {
    let matrix = fundamental_matrix(metric, x.coords.as_slice(), y.components.as_slice())?;
    check_tensor(&matrix)?;
    Ok(FundamentalTensor {
        base: x.clone(),
        reference: y.clone(),
        matrix,
    })
}

/// Solves `A w = b` over jets by Gaussian elimination with pivoting on values.
fn solve_jets(mut a: Vec<Vec<Jet>>, mut b: Vec<Jet>) -> Vec<Jet> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| a[p][col].value().abs().total_cmp(&a[q][col].value().abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = crate::jet::Real::recip(&a[col][col]);
        for row in col + 1..n {
            let factor = &a[row][col] * &inv;
            for k in col + 1..n {
                let t = &factor * &a[col][k];
                a[row][k] = &a[row][k] - &t;
            }
            let t = &factor * &b[col];
            b[row] = &b[row] - &t;
        }
    }
    let mut w: Vec<Option<Jet>> = vec![None; n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            let t = &a[row][k] * w[k].as_ref().unwrap();
            acc = &acc - &t;
        }
        w[row] = Some(&acc / &a[row][row]);
    }
    w.into_iter().map(Option::unwrap).collect()
}

/// `G^i` as jets of order `order` in the coordinate seeds `(x, y)`.
pub fn spray_jets(metric: &MetricSpec, x: &[f64], y: &[f64], order: usize) -> Result<Vec<Jet>> {
    check_inputs(metric, x, y)?;
    if order + 2 > crate::jet::MAX_ORDER {
        return Err(GeometryError::UnsupportedOrder(order + 2));
    }
    let n = metric.dim;
    let p = metric.f2_coordinate_jet(x, y, order + 2);
    let dy: Vec<Jet> = (0..n).map(|l| p.derivative(n + l)).collect();
    let values = DMatrix::from_fn(n, n, |i, j| 0.5 * dy[i].partial(&[n + j]));
    check_tensor(&values)?;
    let g: Vec<Vec<Jet>> = (0..n)
        .map(|i| (0..n).map(|j| dy[i].derivative(n + j).scale(0.5)).collect())
        .collect();
    let layout = JetLayout::get(2 * n, order);
    let ys: Vec<Jet> = (0..n).map(|k| Jet::variable(layout, n + k, y[k])).collect();
    let h: Vec<Jet> = (0..n)
        .map(|l| {
            let mut acc = p.derivative(l).truncate(order).scale(-1.0);
            for k in 0..n {
                let t = &dy[l].derivative(k) * &ys[k];
                acc = &acc + &t;
            }
            acc.scale(0.25)
        })
        .collect();
    Ok(solve_jets(g, h))
}

/// `G^i(x, y)` alone: the geodesic right-hand side.
pub fn spray_coefficients(metric: &MetricSpec, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
    check_inputs(metric, x, y)?;
    let n = metric.dim;
    let p = metric.f2_coordinate_jet(x, y, 2);
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * p.partial(&[n + i, n + j]));
    check_tensor(&g)?;
    let h = DVector::from_fn(n, |l, _| {
        let mixed: f64 = (0..n).map(|k| p.partial(&[k, n + l]) * y[k]).sum();
        0.25 * (mixed - p.partial(&[l]))
    });
    g.cholesky()
        .map(|c| c.solve(&h))
        .ok_or(GeometryError::SingularTensor {
            condition: f64::INFINITY,
        })
}

/// `G` and `N` at `(x, y)` as plain arrays.
pub fn spray_and_connection(
    metric: &MetricSpec,
    x: &[f64],
    y: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = metric.dim;
    let jets = spray_jets(metric, x, y, 1)?;
    let gv = DVector::from_fn(n, |i, _| jets[i].value());
    let nm = DMatrix::from_fn(n, n, |i, j| jets[i].d1(n + j));
    Ok((gv, nm))
}

pub fn spray(metric: &MetricSpec, x: &Point, y: &TangentVector) -> Result<SprayData> {
    y.nonzero()?;
    let (coefficients, connection) =
        spray_and_connection(metric, x.coords.as_slice(), y.components.as_slice())?;
    Ok(SprayData {
        base: x.clone(),
        velocity: y.clone(),
        coefficients,
        connection,
    })
}

/// `R^i_k = 2∂_kG^i − y^j∂_j∂_{ẏk}G^i + 2G^j∂_{ẏj}∂_{ẏk}G^i − ∂_{ẏj}G^i ∂_{ẏk}G^j`.
fn curvature_from_jets(jets: &[Jet], y: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = y.len();
    let gv = DVector::from_fn(n, |i, _| jets[i].value());
    let nm = DMatrix::from_fn(n, n, |i, j| jets[i].d1(n + j));
    let r = DMatrix::from_fn(n, n, |i, k| {
        let mut acc = 2.0 * jets[i].d1(k);
        for j in 0..n {
            acc -= y[j] * jets[i].partial(&[j, n + k]);
            acc += 2.0 * gv[j] * jets[i].partial(&[n + j, n + k]);
            acc -= nm[(i, j)] * nm[(j, k)];
        }
        acc
    });
    (gv, nm, r)
}

pub fn local_geometry(metric: &MetricSpec, x: &[f64], y: &[f64]) -> Result<LocalGeometry> {
    check_inputs(metric, x, y)?;
    let n = metric.dim;
    let jets = spray_jets(metric, x, y, 2)?;
    let (spray, connection, curvature) = curvature_from_jets(&jets, y);
    let p = metric.f2_coordinate_jet(x, y, 2);
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * p.partial(&[n + i, n + j]));
    Ok(LocalGeometry {
        g,
        spray,
        connection,
        curvature,
    })
}

pub fn riemann_curvature(metric: &MetricSpec, x: &Point, y: &TangentVector) -> Result<CurvatureOperator> {
    y.nonzero()?;
    let geo = local_geometry(metric, x.coords.as_slice(), y.components.as_slice())?;
    Ok(CurvatureOperator {
        base: x.clone(),
        reference: y.clone(),
        matrix: geo.curvature,
    })
}

/// `K(P, y) = g_y(R_y u, u) / (g_y(y,y) g_y(u,u) − g_y(y,u)²)`.
pub fn flag_curvature(metric: &MetricSpec, flag: &Flag) -> Result<f64> {
    let x = flag.base.coords.as_slice();
    let y = flag.pole.as_slice();
    let geo = local_geometry(metric, x, y)?;
    flag_curvature_from(&geo.g, &geo.curvature, &flag.pole, &flag.transverse)
}

pub fn flag_curvature_from(
    g: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let gyy = y.dot(&(g * y));
    let guu = u.dot(&(g * u));
    let gyu = y.dot(&(g * u));
    let denominator = gyy * guu - gyu * gyu;
    if denominator < DEGENERATE_FLAG {
        return Err(GeometryError::DegenerateFlag { denominator });
    }
    Ok(u.dot(&(g * (r * u))) / denominator)
}

/// A vector field sampled along a curve, with its rate of change and the
/// reference vector used by the connection.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub point: DVector<f64>,
    pub value: DVector<f64>,
    pub rate: DVector<f64>,
    pub reference: DVector<f64>,
}

/// `(∇U)^i = dU^i/dt + U^j N^i_j(c, reference)` at each sample.
pub fn chern_derivative(metric: &MetricSpec, samples: &[FieldSample]) -> Result<Vec<DVector<f64>>> {
    samples
        .iter()
        .map(|s| {
            let (_, nm) = spray_and_connection(metric, s.point.as_slice(), s.reference.as_slice())?;
            Ok(&s.rate + nm * &s.value)
        })
        .collect()
}

/// First derivatives of `g_ij` at `(x, y)`: `(g, ∂g/∂x^k, ∂g/∂y^k)`.
pub fn tensor_derivatives(
    metric: &MetricSpec,
    x: &[f64],
    y: &[f64],
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    check_inputs(metric, x, y)?;
    let n = metric.dim;
    let p = metric.f2_coordinate_jet(x, y, 3);
    let g = DMatrix::from_fn(n, n, |i, j| 0.5 * p.partial(&[n + i, n + j]));
    let dx = (0..n)
        .map(|k| DMatrix::from_fn(n, n, |i, j| 0.5 * p.partial(&[k, n + i, n + j])))
        .collect();
    let dy = (0..n)
        .map(|k| DMatrix::from_fn(n, n, |i, j| 0.5 * p.partial(&[n + k, n + i, n + j])))
        .collect();
    Ok((g, dx, dy))
}

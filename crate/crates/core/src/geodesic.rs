//! Geodesics `ẍ + 2G(x, ẋ) = 0`, the exponential map, and two-point shooting.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, Result};
use crate::metric::MetricSpec;
use crate::ode::{solve_adaptive, solve_fixed, DenseSolution, OdeOptions, OdeSystem, Termination};
use crate::spray::{spray_coefficients, spray_jets};
use crate::types::{Point, TangentVector};

/// Geodesic flow on `TM` with state `(x, v)`.
pub struct GeodesicSystem<'a> {
    pub metric: &'a MetricSpec,
}

impl OdeSystem for GeodesicSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.metric.dim
    }

    fn rhs(&self, _t: f64, s: &[f64], d: &mut [f64]) -> Result<()> {
        let n = self.metric.dim;
        let (x, v) = s.split_at(n);
        let g = spray_coefficients(self.metric, x, v)?;
        for i in 0..n {
            d[i] = v[i];
            d[n + i] = -2.0 * g[i];
        }
        Ok(())
    }

    fn admissible(&self, s: &[f64]) -> bool {
        self.metric.chart.contains_with_margin(&s[..self.metric.dim])
    }
}

/// A geodesic with continuous output on `[0, span]` (or `[span, 0]`).
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub metric: MetricSpec,
    pub initial: TangentVector,
    pub span: f64,
    pub solution: DenseSolution,
    pub unit_speed: bool,
}

impl GeodesicPath {
    pub fn dim(&self) -> usize {
        self.metric.dim
    }

    pub fn state(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.dim();
        let s = self.solution.eval(t);
        (
            DVector::from_column_slice(&s[..n]),
            DVector::from_column_slice(&s[n..]),
        )
    }

    pub fn position(&self, t: f64) -> DVector<f64> {
        self.state(t).0
    }

    pub fn velocity(&self, t: f64) -> DVector<f64> {
        self.state(t).1
    }

    pub fn end_point(&self) -> Point {
        Point::new(self.position(self.span))
    }

    /// `|ẍ + 2G(x, ẋ)|` at `t`, with `ẍ` from a central difference of the
    /// interpolated velocity.
    pub fn residual(&self, t: f64, h: f64) -> Result<f64> {
        let (x, v) = self.state(t);
        let acc = (self.velocity(t + h) - self.velocity(t - h)) / (2.0 * h);
        let g = spray_coefficients(&self.metric, x.as_slice(), v.as_slice())?;
        Ok((acc + 2.0 * g).norm())
    }
}

/// Adaptive geodesic that may stop early at the chart margin.
pub fn integrate_geodesic_partial(
    metric: &MetricSpec,
    initial: &TangentVector,
    span: f64,
    opts: &OdeOptions,
) -> Result<(GeodesicPath, Termination)> {
    initial.nonzero()?;
    let x0 = initial.base.coords.as_slice();
    let y0 = initial.components.as_slice();
    metric.check_point(x0)?;
    metric.check_vector(y0)?;
    if !metric.chart.contains_with_margin(x0) {
        return Err(GeometryError::DomainExit { time: 0.0 });
    }
    let mut s0 = x0.to_vec();
    s0.extend_from_slice(y0);
    let sys = GeodesicSystem { metric };
    let (solution, term) = solve_adaptive(&sys, 0.0, &s0, span, opts)?;
    let speed = metric.norm(x0, y0)?;
    Ok((
        GeodesicPath {
            metric: metric.clone(),
            initial: initial.clone(),
            span: solution.t_end,
            solution,
            unit_speed: (speed - 1.0).abs() < 1e-12,
        },
        term,
    ))
}

/// Geodesic on `[0, span]`; `DomainExit` if it reaches the chart margin first.
pub fn integrate_geodesic(
    metric: &MetricSpec,
    initial: &TangentVector,
    span: f64,
    opts: &OdeOptions,
) -> Result<GeodesicPath> {
    let (path, term) = integrate_geodesic_partial(metric, initial, span, opts)?;
    match term {
        Termination::Completed => Ok(path),
        Termination::Exited { time } => Err(GeometryError::DomainExit { time }),
    }
}

pub fn exponential_map(metric: &MetricSpec, x: &Point, y: &TangentVector) -> Result<Point> {
    let v = TangentVector::new(x.clone(), y.components.clone())?;
    Ok(integrate_geodesic(metric, &v, 1.0, &OdeOptions::default())?.end_point())
}

/// Equal-step geodesic flow; smooth in the initial data.
pub fn geodesic_flow_fixed(
    metric: &MetricSpec,
    x: &[f64],
    v: &[f64],
    t: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = metric.dim;
    let mut s0 = x.to_vec();
    s0.extend_from_slice(v);
    let out = solve_fixed(&GeodesicSystem { metric }, 0.0, &s0, t, steps)?;
    let last = out.last().unwrap();
    if !metric.chart.contains(&last[..n]) {
        return Err(GeometryError::EvaluationOutsideDomain {
            coords: last[..n].to_vec(),
        });
    }
    Ok((last[..n].to_vec(), last[n..].to_vec()))
}

/// Geodesic flow together with its derivative with respect to the
/// initial velocity: state `(x, v, ∂x/∂w, ∂v/∂w)`.
struct VariationalSystem<'a> {
    metric: &'a MetricSpec,
}

impl OdeSystem for VariationalSystem<'_> {
    fn dim(&self) -> usize {
        let n = self.metric.dim;
        2 * n + 2 * n * n
    }

    fn rhs(&self, _t: f64, s: &[f64], d: &mut [f64]) -> Result<()> {
        let n = self.metric.dim;
        let (x, rest) = s.split_at(n);
        let (v, rest) = rest.split_at(n);
        let (jx, jv) = rest.split_at(n * n);
        let jets = spray_jets(self.metric, x, v, 1)?;
        for i in 0..n {
            d[i] = v[i];
            d[n + i] = -2.0 * jets[i].value();
        }
        let base = 2 * n;
        for i in 0..n {
            for c in 0..n {
                d[base + i * n + c] = jv[i * n + c];
                let mut acc = 0.0;
                for k in 0..n {
                    acc += jets[i].d1(k) * jx[k * n + c] + jets[i].d1(n + k) * jv[k * n + c];
                }
                d[base + n * n + i * n + c] = -2.0 * acc;
            }
        }
        Ok(())
    }
}

/// Result of a two-point shooting solve.
#[derive(Debug, Clone)]
pub struct ShootingSolution {
    /// Initial velocity at the start point (unit time parameter).
    pub initial_velocity: DVector<f64>,
    /// Velocity on arrival.
    pub final_velocity: DVector<f64>,
    /// `∂(endpoint)/∂(initial velocity)`.
    pub jacobian: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub steps: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            steps: 24,
            tolerance: 1e-10,
            max_iterations: 30,
        }
    }
}

fn flow_with_jacobian(
    metric: &MetricSpec,
    p: &[f64],
    w: &DVector<f64>,
    steps: usize,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = metric.dim;
    let mut s0 = p.to_vec();
    s0.extend_from_slice(w.as_slice());
    s0.extend(std::iter::repeat_n(0.0, n * n));
    for i in 0..n {
        for c in 0..n {
            s0.push(if i == c { 1.0 } else { 0.0 });
        }
    }
    let out = solve_fixed(&VariationalSystem { metric }, 0.0, &s0, 1.0, steps)?;
    let last = out.last().unwrap();
    let x = DVector::from_column_slice(&last[..n]);
    let v = DVector::from_column_slice(&last[n..2 * n]);
    let j = DMatrix::from_row_slice(n, n, &last[2 * n..2 * n + n * n]);
    Ok((x, v, j))
}

/// Finds `w` with `exp_p(w) = target` by Newton's method on the equal-step
/// flow map, starting from `guess`. Iterates until the correction stalls so
/// the solution is smooth in `target` to rounding.
pub fn shoot(
    metric: &MetricSpec,
    p: &[f64],
    target: &[f64],
    guess: &DVector<f64>,
    opts: &ShootingOptions,
) -> Result<ShootingSolution> {
    let tgt = DVector::from_column_slice(target);
    let mut w = guess.clone();
    let mut last_res = f64::INFINITY;
    for it in 0..opts.max_iterations {
        let (x, v, j) = flow_with_jacobian(metric, p, &w, opts.steps)?;
        let r = &x - &tgt;
        let res = r.norm();
        let done = res < opts.tolerance && (res < 1e-15 || res >= 0.5 * last_res);
        if done || (res < 1e-14 * (1.0 + tgt.norm())) {
            return Ok(ShootingSolution {
                initial_velocity: w,
                final_velocity: v,
                jacobian: j,
                residual: res,
                iterations: it,
            });
        }
        last_res = res;
        let dw = j
            .clone()
            .lu()
            .solve(&r)
            .ok_or(GeometryError::NewtonDivergence { residual: res })?;
        w -= dw;
    }
    let (x, v, j) = flow_with_jacobian(metric, p, &w, opts.steps)?;
    let res = (&x - &tgt).norm();
    if res < opts.tolerance {
        Ok(ShootingSolution {
            initial_velocity: w,
            final_velocity: v,
            jacobian: j,
            residual: res,
            iterations: opts.max_iterations,
        })
    } else {
        Err(GeometryError::NewtonDivergence { residual: res })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_geodesic_is_straight() {
        let m = MetricSpec::euclidean(2).unwrap();
        let v = TangentVector::from_slices(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let p = integrate_geodesic(&m, &v, 1.0, &OdeOptions::default()).unwrap();
        let e = p.end_point();
        assert!((e.coords[0] - 1.0).abs() < 1e-12 && (e.coords[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_radial_geodesic() {
        let m = MetricSpec::hyperbolic(2, 1.0).unwrap();
        // F((0,0), y) = 2|y|, so unit speed means |y| = 1/2.
        let v = TangentVector::from_slices(&[0.0, 0.0], &[0.5, 0.0]).unwrap();
        let p = integrate_geodesic(&m, &v, 2.0, &OdeOptions::default()).unwrap();
        assert!(p.unit_speed);
        let e = p.end_point();
        assert!((e.coords[0] - 1f64.tanh()).abs() < 1e-9);
        assert!(e.coords[1].abs() < 1e-14);
    }

    #[test]
    fn domain_exit_reported() {
        let m = MetricSpec::hyperbolic(2, 1.0).unwrap();
        let v = TangentVector::from_slices(&[0.0, 0.0], &[0.5, 0.0]).unwrap();
        match integrate_geodesic(&m, &v, 20.0, &OdeOptions::default()) {
            Err(GeometryError::DomainExit { time }) => {
                // chart radius 0.999 at the margin
                assert!((time - 2.0 * 0.999f64.atanh()).abs() < 1e-6, "{time}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shooting_recovers_velocity() {
        let m = MetricSpec::hyperbolic_randers(2, 1.0, 0.05).unwrap();
        let p = [0.1, -0.2];
        let w = DVector::from_vec(vec![0.15, 0.1]);
        let (x1, _) = geodesic_flow_fixed(&m, &p, w.as_slice(), 1.0, 24).unwrap();
        let guess = DVector::from_vec(vec![0.1, 0.1]);
        let sol = shoot(&m, &p, &x1, &guess, &ShootingOptions::default()).unwrap();
        assert!((sol.initial_velocity - w).norm() < 1e-12);
    }
}

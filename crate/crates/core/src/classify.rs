//! Riemannian and Berwald detection from sampled sprays.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::metric::MetricSpec;
use crate::spray::{fundamental_matrix, spray_coefficients};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Velocity directions sampled per point.
    pub directions: usize,
    pub berwald_tolerance: f64,
    pub riemannian_tolerance: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            directions: 16,
            berwald_tolerance: 1e-8,
            riemannian_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricClassification {
    pub is_riemannian: bool,
    pub is_berwald: bool,
    /// Max deviation of `G(x, ·)` from its least-squares quadratic fit, over
    /// unit directions.
    pub berwald_residual: f64,
    /// Max spread of `g_y` over directions at a point.
    pub riemannian_residual: f64,
}

/// Deterministic spread of unit directions in `ℝⁿ`.
fn directions(n: usize, count: usize) -> Vec<DVector<f64>> {
    let golden = 0.5 * (1.0 + 5f64.sqrt());
    (0..count)
        .map(|k| {
            let t = (k as f64 + 0.5) / count as f64;
            let v = match n {
                2 => {
                    let a = 2.0 * std::f64::consts::PI * t;
                    vec![a.cos(), a.sin()]
                }
                _ => {
                    // Fibonacci lattice on S², padded with a slow extra angle.
                    let z = 1.0 - 2.0 * t;
                    let r = (1.0 - z * z).sqrt();
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / golden;
                    let mut v = vec![r * phi.cos(), r * phi.sin(), z];
                    for j in 3..n {
                        let a = 1.3 * k as f64 + j as f64;
                        v.push(0.5 * a.sin());
                    }
                    v
                }
            };
            let v = DVector::from_vec(v);
            let norm = v.norm();
            v / norm
        })
        .collect()
}

/// Classifies `metric` from sampled points; at least 20 points are expected.
pub fn classify(metric: &MetricSpec, points: &[Vec<f64>], opts: &ClassifyOptions) -> Result<MetricClassification> {
    let n = metric.dim;
    let dirs = directions(n, opts.directions.max(n * (n + 1)));
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (j..n).map(move |k| (j, k))).collect();
    let design = DMatrix::from_fn(dirs.len(), pairs.len(), |r, c| {
        let (j, k) = pairs[c];
        dirs[r][j] * dirs[r][k]
    });
    let svd = design.clone().svd(true, true);
    let mut berwald_residual: f64 = 0.0;
    let mut riemannian_residual: f64 = 0.0;
    for x in points {
        let sprays: Vec<DVector<f64>> = dirs
            .iter()
            .map(|y| spray_coefficients(metric, x, y.as_slice()))
            .collect::<Result<_>>()?;
        for i in 0..n {
            let rhs = DVector::from_fn(dirs.len(), |r, _| sprays[r][i]);
            let coef = svd.solve(&rhs, 1e-14).expect("svd has both factors");
            let fit = &design * coef;
            berwald_residual = berwald_residual.max((fit - rhs).amax());
        }
        let g0 = fundamental_matrix(metric, x, dirs[0].as_slice())?;
        for y in &dirs[1..] {
            let g = fundamental_matrix(metric, x, y.as_slice())?;
            riemannian_residual = riemannian_residual.max((g - &g0).amax());
        }
    }
    let is_berwald = berwald_residual < opts.berwald_tolerance;
    let is_riemannian = is_berwald && riemannian_residual < opts.riemannian_tolerance;
    Ok(MetricClassification {
        is_riemannian,
        is_berwald,
        berwald_residual,
        riemannian_residual,
    })
}

//! Central finite differences: an independent cross-check for the jet engine
//! and the stencil machinery used by the osculating-metric constructions.

use crate::error::{GeometryError, Result};
use crate::jet::{Jet, JetLayout, MAX_ORDER};
use crate::metric::{MetricSpec, Seed};
use crate::types::{Point, TangentVector};

/// Fornberg's recursion: weights `w[k][j]` of the `k`-th derivative at `z`
/// from samples at `nodes[j]`, for `k = 0..=max_deriv`.
pub fn fornberg_weights(z: f64, nodes: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Integer offsets and weights of a central stencil for the `deriv`-th
/// derivative with formal accuracy `accuracy` (even), unit spacing.
pub fn central_stencil(deriv: usize, accuracy: usize) -> Vec<(i32, f64)> {
    if deriv == 0 {
        return vec![(0, 1.0)];
    }
    let points = 2 * deriv.div_ceil(2) - 1 + accuracy;
    let half = (points / 2) as i32;
    let nodes: Vec<f64> = (-half..=half).map(|k| k as f64).collect();
    let w = fornberg_weights(0.0, &nodes, deriv);
    (-half..=half)
        .zip(w[deriv].iter())
        .filter(|(_, w)| w.abs() > 1e-14)
        .map(|(k, w)| (k, *w))
        .collect()
}

/// Step size and formal accuracy of the oracle stencils.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub step: f64,
    pub accuracy: usize,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            accuracy: 6,
        }
    }
}

/// Same quantities as [`crate::metric::evaluate_jet`], computed by tensor
/// products of central difference stencils.
pub fn finite_difference_oracle(
    metric: &MetricSpec,
    x: &Point,
    y: &TangentVector,
    seeds: &[Seed],
    order: usize,
    opts: FdOptions,
) -> Result<Jet> {
    if order > MAX_ORDER || order == 0 {
        return Err(GeometryError::UnsupportedOrder(order));
    }
    let xs = x.coords.as_slice();
    let ys = y.components.as_slice();
    metric.check_point(xs)?;
    metric.check_vector(ys)?;
    let n = metric.dim;
    let layout = JetLayout::get(seeds.len(), order);
    let mut coeffs = Vec::with_capacity(layout.len());
    for idx in 0..layout.len() {
        let alpha = layout.monomial(idx);
        let stencils: Vec<Vec<(i32, f64)>> = alpha
            .iter()
            .map(|&d| central_stencil(d as usize, opts.accuracy))
            .collect();
        let mut total = 0.0;
        let mut cursor = vec![0usize; seeds.len()];
        loop {
            let mut weight = 1.0;
            let mut px = xs.to_vec();
            let mut py = ys.to_vec();
            for (a, st) in stencils.iter().enumerate() {
                let (k, w) = st[cursor[a]];
                weight *= w;
                if k != 0 {
                    let s = k as f64 * opts.step;
                    for i in 0..n {
                        px[i] += s * seeds[a].x[i];
                        py[i] += s * seeds[a].y[i];
                    }
                }
            }
            if !metric.chart.contains(&px) {
                return Err(GeometryError::EvaluationOutsideDomain { coords: px });
            }
            total += weight * metric.f_squared(&px, &py);
            // odometer over the tensor-product stencil
            let mut a = 0;
            loop {
                if a == seeds.len() {
                    break;
                }
                cursor[a] += 1;
                if cursor[a] < stencils[a].len() {
                    break;
                }
                cursor[a] = 0;
                a += 1;
            }
            if a == seeds.len() {
                break;
            }
        }
        let deg: u32 = alpha.iter().map(|&d| d as u32).sum();
        let fact: f64 = alpha
            .iter()
            .map(|&d| (1..=d as usize).map(|k| k as f64).product::<f64>())
            .product();
        coeffs.push(total / opts.step.powi(deg as i32) / fact);
    }
    Ok(Jet::from_coeffs(layout, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_stencils() {
        let d1 = central_stencil(1, 2);
        assert_eq!(d1.len(), 2);
        assert!((d1[1].1 - 0.5).abs() < 1e-15);
        let d2 = central_stencil(2, 4);
        let w: Vec<f64> = d2.iter().map(|p| p.1 * 12.0).collect();
        for (a, b) in w.iter().zip([-1.0, 16.0, -30.0, 16.0, -1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let d4 = central_stencil(4, 6);
        assert_eq!(d4.len(), 9);
        assert!((d4[0].1 - 7.0 / 240.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_order_five() {
        let m = MetricSpec::euclidean(2).unwrap();
        let y = TangentVector::from_slices(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let err = finite_difference_oracle(
            &m,
            &Point::origin(2),
            &y,
            &Seed::coordinates(2),
            5,
            FdOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::UnsupportedOrder(5));
    }
}

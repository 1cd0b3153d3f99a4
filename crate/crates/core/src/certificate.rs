//! Sampled bounds `K ≤ −k̂²` and `|T| ≤ δ̂` over a chart.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::metric::MetricSpec;
use crate::spray::{flag_curvature_from, local_geometry};
use crate::tcurv::{TCurvatureEvaluator, TCurvatureOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSample {
    pub x: DVector<f64>,
    /// Unit pole.
    pub y: DVector<f64>,
    /// Transverse direction, `g_y`-orthogonal to `y` and `g_y`-unit.
    pub v: DVector<f64>,
    pub flag_curvature: f64,
    pub t_value: f64,
    /// `|T_y(v)| / g_y(v, v)`, equal to `|T_y(v)|` up to rounding.
    pub t_ratio: f64,
    /// `T_y(−y)`, where the bracket of the bound vanishes.
    pub t_antipodal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureCertificate {
    pub samples: usize,
    pub max_flag_curvature: f64,
    pub min_flag_curvature: f64,
    pub max_abs_t: f64,
    /// Largest sampled T ratio over `g_y`-orthogonal directions.
    pub delta_hat: f64,
    /// `max |T_y(−y)|`; nonzero exactly when `G` is not even in `y`.
    pub max_antipodal_t: f64,
    /// `√(−max K)` when the sampled curvature is negative.
    pub k_hat: Option<f64>,
}

impl CurvatureCertificate {
    /// `δ̂ < k̂`.
    pub fn separates(&self) -> bool {
        self.k_hat.is_some_and(|k| self.delta_hat < k)
    }
}

/// Seeded sweep of flag curvature and T-curvature at `count` random flags.
pub fn curvature_sweep(
    metric: &MetricSpec,
    count: usize,
    seed: u64,
    with_t: bool,
    opts: &TCurvatureOptions,
) -> Result<(CurvatureCertificate, Vec<CertificateSample>)> {
    let n = metric.dim;
    let points = metric.sample_chart_points(count, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let dirs: Vec<(DVector<f64>, DVector<f64>)> = (0..count)
        .map(|_| {
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            (y, v)
        })
        .collect();
    let samples: Vec<CertificateSample> = points
        .par_iter()
        .zip(dirs.par_iter())
        .map(|(x, (y, v))| {
            let f = metric.norm(x, y.as_slice())?;
            let y = y / f;
            let geo = local_geometry(metric, x, y.as_slice())?;
            let v = v - &y * y.dot(&(&geo.g * v));
            let v = &v / v.dot(&(&geo.g * &v)).sqrt();
            let k = flag_curvature_from(&geo.g, &geo.curvature, &y, &v)?;
            let (t_value, t_ratio, t_antipodal) = if with_t {
                let ev = TCurvatureEvaluator::new(metric, x, y.as_slice(), opts)?;
                let t = ev.value(&v)?;
                (t, t.abs() / v.dot(&(&geo.g * &v)), ev.value(&(-&y))?)
            } else {
                (0.0, 0.0, 0.0)
            };
            Ok(CertificateSample {
                x: DVector::from_column_slice(x),
                y,
                v,
                flag_curvature: k,
                t_value,
                t_ratio,
                t_antipodal,
            })
        })
        .collect::<Result<_>>()?;
    let max_k = samples.iter().map(|s| s.flag_curvature).fold(f64::NEG_INFINITY, f64::max);
    let cert = CurvatureCertificate {
        samples: samples.len(),
        max_flag_curvature: max_k,
        min_flag_curvature: samples.iter().map(|s| s.flag_curvature).fold(f64::INFINITY, f64::min),
        max_abs_t: samples.iter().map(|s| s.t_value.abs()).fold(0.0, f64::max),
        delta_hat: samples.iter().map(|s| s.t_ratio).fold(0.0, f64::max),
        max_antipodal_t: samples.iter().map(|s| s.t_antipodal.abs()).fold(0.0, f64::max),
        k_hat: (max_k < 0.0).then(|| (-max_k).sqrt()),
    };
    Ok((cert, samples))
}

//! Adaptive Gauss–Kronrod (7, 15) quadrature for vector-valued integrands.

use crate::error::{GeometryError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            max_intervals: 2000,
        }
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let fc = f(c)?;
    for i in 0..dim {
        k[i] = WGK[7] * fc[i];
        g[i] = WG[3] * fc[i];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx)?;
        let f2 = f(c + dx)?;
        for i in 0..dim {
            let s = f1[i] + f2[i];
            k[i] += WGK[j] * s;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..dim {
        k[i] *= h;
        g[i] *= h;
        err = err.max((k[i] - g[i]).abs());
    }
    Ok((k, err))
}

/// `∫_a^b f` componentwise for an integrand returning `dim` values.
pub fn integrate<F>(mut f: F, a: f64, b: f64, dim: usize, opts: &QuadratureOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if a == b {
        return Ok(vec![0.0; dim]);
    }
    let mut intervals: Vec<(f64, f64, Vec<f64>, f64)> = Vec::new();
    let (v, e) = gk15(&mut f, a, b, dim)?;
    intervals.push((a, b, v, e));
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for (_, _, v, e) in &intervals {
            for i in 0..dim {
                total[i] += v[i];
            }
            err += e;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= opts.abs_tol.max(opts.rel_tol * scale) {
            return Ok(total);
        }
        if intervals.len() >= opts.max_intervals {
            return Err(GeometryError::QuadratureFailure(format!(
                "error estimate {err:.3e} after {} intervals",
                intervals.len()
            )));
        }
        let worst = (0..intervals.len())
            .max_by(|&p, &q| intervals[p].3.total_cmp(&intervals[q].3))
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid, dim)?;
        let (v2, e2) = gk15(&mut f, mid, hi, dim)?;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

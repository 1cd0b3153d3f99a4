//! Dormand–Prince 5(4) integration with continuous output.
//!
//! Adaptive mode controls the local error against `atol + rtol·|y|` and
//! records the quartic continuous extension of every accepted step, so the
//! solution can be evaluated anywhere on the span. Fixed mode takes equal
//! steps; its flow map is a smooth function of the initial data, which is
//! what stencil differentiation of flows needs.

use crate::error::{GeometryError, Result};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()>;
    /// States for which the solution may continue (e.g. inside a chart margin).
    fn admissible(&self, _y: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }
}

/// Continuous solution over `[t_start, t_end]` (either time direction).
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub t_start: f64,
    pub t_end: f64,
    segments: Vec<DenseSegment>,
    dim: usize,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[DenseSegment] {
        &self.segments
    }

    /// Step nodes, including both ends.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.segments.iter().map(|s| s.t0).collect();
        out.push(self.t_end);
        out
    }

    fn locate(&self, t: f64) -> &DenseSegment {
        let forward = self.t_end >= self.t_start;
        let idx = self.segments.partition_point(|s| {
            if forward {
                s.t1() < t
            } else {
                s.t1() > t
            }
        });
        &self.segments[idx.min(self.segments.len() - 1)]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.locate(t).eval_into(t, out);
    }

    pub fn final_state(&self) -> Vec<f64> {
        self.eval(self.t_end)
    }
}

/// How an adaptive run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// The state became inadmissible; `time` is located by bisection.
    Exited { time: f64 },
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }
}

/// Computes stages 2..7 given `k[0] = f(t, y)`; writes the 5th-order update to `y1`.
fn dp_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    st: &mut Stages,
    y1: &mut [f64],
) -> Result<()> {
    let n = y.len();
    let combos: [(f64, &[f64]); 5] = [
        (C2, &[A21]),
        (C3, &[A31, A32]),
        (C4, &[A41, A42, A43]),
        (C5, &[A51, A52, A53, A54]),
        (1.0, &[A61, A62, A63, A64, A65]),
    ];
    for (s, (c, a)) in combos.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, aj) in a.iter().enumerate() {
                acc += aj * st.k[j][i];
            }
            st.tmp[i] = y[i] + h * acc;
        }
        let (head, tail) = st.k.split_at_mut(s + 1);
        let _ = head;
        sys.rhs(t + c * h, &st.tmp, &mut tail[0])?;
    }
    for i in 0..n {
        y1[i] = y[i]
            + h * (A71 * st.k[0][i] + A73 * st.k[2][i] + A74 * st.k[3][i] + A75 * st.k[4][i]
                + A76 * st.k[5][i]);
    }
    sys.rhs(t + h, y1, &mut st.k[6])?;
    Ok(())
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    opts: &OdeOptions,
) -> f64 {
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = (y0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(opts.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h0 * f).collect();
    let mut f1 = vec![0.0; n];
    if sys.rhs(t0 + dir * h0, &y1, &mut f1).is_err() {
        return h0 * 0.1;
    }
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

/// Adaptive integration from `t0` to `t_end` with continuous output.
pub fn solve_adaptive<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<(DenseSolution, Termination)> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            got: y0.len(),
        });
    }
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut segments = Vec::new();
    if span == 0.0 {
        let seg = DenseSegment {
            t0,
            h: 0.0,
            rcont: [y0.to_vec(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        };
        return Ok((
            DenseSolution {
                t_start: t0,
                t_end,
                segments: vec![seg],
                dim: n,
            },
            Termination::Completed,
        ));
    }
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    sys.rhs(t, &y, &mut st.k[0])?;
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| initial_step(sys, t0, y0, &st.k[0], dir, opts))
        .min(span);
    let mut y1 = vec![0.0; n];
    let mut err_old: f64 = 1e-4;
    let mut steps = 0usize;
    let mut reject_streak = 0usize;
    loop {
        steps += 1;
        if steps > opts.max_steps {
            return Err(GeometryError::IntegrationFailure(format!(
                "exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = (t_end - t).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(GeometryError::IntegrationFailure(format!(
                "step size underflow at t = {t}"
            )));
        }
        let hs = dir * h;
        if let Err(e) = dp_step(sys, t, &y, hs, &mut st, &mut y1) {
            reject_streak += 1;
            if reject_streak > 60 {
                return Err(e);
            }
            h *= 0.25;
            continue;
        }
        let mut err = 0.0;
        for i in 0..n {
            let e = hs
                * (E1 * st.k[0][i] + E3 * st.k[2][i] + E4 * st.k[3][i] + E5 * st.k[4][i]
                    + E6 * st.k[5][i]
                    + E7 * st.k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            reject_streak += 1;
            continue;
        }
        if err <= 1.0 {
            reject_streak = 0;
            let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = hs * st.k[0][i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - hs * st.k[6][i] - bspl;
                rcont[4][i] = hs
                    * (D1 * st.k[0][i] + D3 * st.k[2][i] + D4 * st.k[3][i] + D5 * st.k[4][i]
                        + D6 * st.k[5][i]
                        + D7 * st.k[6][i]);
            }
            let seg = DenseSegment { t0: t, h: hs, rcont };
            let t_new = if last { t_end } else { t + hs };
            if !sys.admissible(&y1) {
                let exit = bisect_exit(sys, &seg, t, t_new);
                segments.push(seg);
                return Ok((
                    DenseSolution {
                        t_start: t0,
                        t_end: exit,
                        segments,
                        dim: n,
                    },
                    Termination::Exited { time: exit },
                ));
            }
            segments.push(seg);
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            let (k0, rest) = st.k.split_at_mut(1);
            k0[0].copy_from_slice(&rest[5]);
            if last {
                break;
            }
            // PI controller
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_old.powf(0.4 / 5.0);
            h = (h * fac.clamp(0.2, 5.0)).min(opts.max_step);
            err_old = err.max(1e-4);
        } else {
            let fac = 0.9 * err.powf(-0.2);
            h *= fac.clamp(0.1, 0.9);
        }
    }
    Ok((
        DenseSolution {
            t_start: t0,
            t_end,
            segments,
            dim: n,
        },
        Termination::Completed,
    ))
}

fn bisect_exit<S: OdeSystem + ?Sized>(sys: &S, seg: &DenseSegment, mut a: f64, mut b: f64) -> f64 {
    let mut buf = vec![0.0; seg.rcont[0].len()];
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        seg.eval_into(m, &mut buf);
        if sys.admissible(&buf) {
            a = m;
        } else {
            b = m;
        }
        if (b - a).abs() < 1e-14 {
            break;
        }
    }
    a
}

/// Equal-step integration; returns the state after every step
/// (`steps + 1` states including the initial one).
pub fn solve_fixed<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = sys.dim();
    let steps = steps.max(1);
    let h = (t_end - t0) / steps as f64;
    let mut st = Stages::new(n);
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; n];
    out.push(y.clone());
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        sys.rhs(t, &y, &mut st.k[0])?;
        dp_step(sys, t, &y, h, &mut st, &mut y1)?;
        std::mem::swap(&mut y, &mut y1);
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) -> Result<()> {
            d[0] = y[1];
            d[1] = -y[0];
            Ok(())
        }
    }

    struct Growth;
    impl OdeSystem for Growth {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) -> Result<()> {
            d[0] = y[0];
            Ok(())
        }
        fn admissible(&self, y: &[f64]) -> bool {
            y[0] < 10.0
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let (sol, term) = solve_adaptive(&Oscillator, 0.0, &[0.0, 1.0], 10.0, &OdeOptions::default()).unwrap();
        assert_eq!(term, Termination::Completed);
        for k in 0..=100 {
            let t = 0.1 * k as f64;
            let y = sol.eval(t);
            assert!((y[0] - t.sin()).abs() < 1e-8, "t={t} err={}", (y[0] - t.sin()).abs());
            assert!((y[1] - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_integration() {
        let (sol, _) = solve_adaptive(&Oscillator, 0.0, &[0.0, 1.0], -2.0, &OdeOptions::default()).unwrap();
        let y = sol.final_state();
        assert!((y[0] - (-2.0f64).sin()).abs() < 1e-9);
        assert!((sol.eval(-1.3)[1] - 1.3f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn exit_time_located() {
        let (sol, term) = solve_adaptive(&Growth, 0.0, &[1.0], 5.0, &OdeOptions::default()).unwrap();
        match term {
            Termination::Exited { time } => {
                assert!((time - 10f64.ln()).abs() < 1e-8);
                assert!((sol.t_end - time).abs() < 1e-15);
            }
            _ => panic!("expected exit"),
        }
    }

    #[test]
    fn fixed_steps_are_fifth_order() {
        let e = |steps| {
            let out = solve_fixed(&Oscillator, 0.0, &[0.0, 1.0], 1.0, steps).unwrap();
            (out.last().unwrap()[0] - 1f64.sin()).abs()
        };
        let ratio = e(10) / e(20);
        assert!(ratio > 25.0, "ratio {ratio}");
    }
}

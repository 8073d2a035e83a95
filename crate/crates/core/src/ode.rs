//! Explicit Runge–Kutta integrators: classical RK4 with a fixed step and
//! Dormand–Prince 5(4) with error control and cubic Hermite dense output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed,
    #[default]
    Rk45Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; for RK4 this is the step.
    pub max_step: f64,
}

/// One accepted step, with enough data to interpolate inside it.
#[derive(Debug)]
pub struct Step<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    pub f0: &'a [f64],
    pub f1: &'a [f64],
}

impl Step<'_> {
    /// Cubic Hermite interpolant at `t ∈ [t0, t1]`.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let s = if h == 0.0 { 1.0 } else { (t - self.t0) / h };
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        for (i, o) in out.iter_mut().enumerate() {
            *o = h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// `true` if the observer asked to stop before `t_end`.
    pub stopped: bool,
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`, handing every accepted step
/// to `observe`. The right-hand side may fail (it is aborted then).
pub fn integrate<F, O>(
    method: Method,
    tol: Tolerances,
    f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    observe: O,
) -> Result<Outcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(&Step<'_>) -> Result<Flow>,
{
    integrate_weighted(method, tol, |_: &[f64], w: &mut [f64]| w.fill(1.0), f, t0, y0, t_end, observe)
}

/// Like [`integrate`], with the absolute tolerance of component `i` multiplied
/// by `w[i]`, where `weights(y, w)` is evaluated at the start of every step.
#[allow(clippy::too_many_arguments)]
pub fn integrate_weighted<W, F, O>(
    method: Method,
    tol: Tolerances,
    mut weights: W,
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    mut observe: O,
) -> Result<Outcome>
where
    W: FnMut(&[f64], &mut [f64]),
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(&Step<'_>) -> Result<Flow>,
{
    if !(t_end > t0) {
        return Err(Error::InvalidInput(format!("empty time span [{t0}, {t_end}]")));
    }
    if !(tol.max_step > 0.0) {
        return Err(Error::InvalidInput(format!("max_step must be > 0, got {}", tol.max_step)));
    }
    match method {
        Method::Rk4Fixed => rk4(tol.max_step, &mut f, t0, y0, t_end, &mut observe),
        Method::Rk45Adaptive => {
            if !(tol.rtol >= 1e-13) || !(tol.atol > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerances out of range: rtol={} atol={}",
                    tol.rtol, tol.atol
                )));
            }
            dopri5(tol, &mut weights, &mut f, t0, y0, t_end, &mut observe)
        }
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn rk4<F, O>(h: f64, f: &mut F, t0: f64, y0: &[f64], t_end: f64, observe: &mut O) -> Result<Outcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(&Step<'_>) -> Result<Flow>,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut f_new = vec![0.0; n];
    let mut evals = 1;
    f(t, &y, &mut k1)?;
    let mut accepted = 0;
    let steps = ((t_end - t0) / h).ceil() as usize;
    for i in 0..steps {
        let t_next = if i + 1 == steps { t_end } else { t0 + (i + 1) as f64 * h };
        let hs = t_next - t;
        axpy(&mut tmp, &y, 0.5 * hs, &[(1.0, &k1)]);
        f(t + 0.5 * hs, &tmp, &mut k2)?;
        axpy(&mut tmp, &y, 0.5 * hs, &[(1.0, &k2)]);
        f(t + 0.5 * hs, &tmp, &mut k3)?;
        axpy(&mut tmp, &y, hs, &[(1.0, &k3)]);
        f(t_next, &tmp, &mut k4)?;
        axpy(&mut y_new, &y, hs / 6.0, &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)]);
        f(t_next, &y_new, &mut f_new)?;
        evals += 4;
        accepted += 1;
        let flow = observe(&Step {
            t0: t,
            t1: t_next,
            y0: &y,
            y1: &y_new,
            f0: &k1,
            f1: &f_new,
        })?;
        t = t_next;
        std::mem::swap(&mut y, &mut y_new);
        std::mem::swap(&mut k1, &mut f_new);
        if flow == Flow::Stop {
            return Ok(Outcome {
                t,
                y,
                accepted,
                rejected: 0,
                rhs_evals: evals,
                stopped: true,
            });
        }
    }
    Ok(Outcome {
        t,
        y,
        accepted,
        rejected: 0,
        rhs_evals: evals,
        stopped: false,
    })
}

// Dormand–Prince 5(4) tableau.
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th-order minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], w: &[f64], tol: &Tolerances) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .zip(w)
        .map(|((e, (a, b)), w)| {
            let sc = tol.atol * w + tol.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(
    f: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    w: &[f64],
    tol: &Tolerances,
    evals: &mut usize,
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let scale: Vec<f64> = y0.iter().zip(w).map(|(y, w)| tol.atol * w + tol.rtol * y.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(tol.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; y0.len()];
    f(t0 + h0, &y1, &mut f1)?;
    *evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(tol.max_step))
}

fn dopri5<W, F, O>(
    tol: Tolerances,
    weights: &mut W,
    f: &mut F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    observe: &mut O,
) -> Result<Outcome>
where
    W: FnMut(&[f64], &mut [f64]),
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(&Step<'_>) -> Result<Flow>,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut w = vec![1.0; n];
    let mut evals = 1;
    f(t, &y, &mut k1)?;
    weights(&y, &mut w);
    let mut h = initial_step(f, t, &y, &k1, &w, &tol, &mut evals)?;
    let (mut accepted, mut rejected) = (0, 0);
    let mut last_rejected = false;

    loop {
        let remaining = t_end - t;
        if remaining <= 0.0 {
            break;
        }
        let mut hs = h.min(remaining).min(tol.max_step);
        if remaining - hs < 1e-12 * remaining.abs().max(1.0) {
            hs = remaining;
        }
        if hs <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h: hs, theta: f64::NAN });
        }
        weights(&y, &mut w);

        axpy(&mut tmp, &y, hs, &[(A21, &k1)]);
        f(t + C2 * hs, &tmp, &mut k2)?;
        axpy(&mut tmp, &y, hs, &[(A31, &k1), (A32, &k2)]);
        f(t + C3 * hs, &tmp, &mut k3)?;
        axpy(&mut tmp, &y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + C4 * hs, &tmp, &mut k4)?;
        axpy(&mut tmp, &y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + C5 * hs, &tmp, &mut k5)?;
        axpy(&mut tmp, &y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        f(t + hs, &tmp, &mut k6)?;
        axpy(&mut y_new, &y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let t_new = if hs == remaining { t_end } else { t + hs };
        f(t_new, &y_new, &mut k7)?;
        evals += 6;

        for i in 0..n {
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y_new, &w, &tol);
        if !en.is_finite() {
            rejected += 1;
            last_rejected = true;
            h = hs * MIN_FACTOR;
            continue;
        }
        if en <= 1.0 {
            accepted += 1;
            let flow = observe(&Step {
                t0: t,
                t1: t_new,
                y0: &y,
                y1: &y_new,
                f0: &k1,
                f1: &k7,
            })?;
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let factor = if en == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * en.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h = if last_rejected { hs * factor.min(1.0) } else { hs * factor };
            last_rejected = false;
            if flow == Flow::Stop {
                return Ok(Outcome {
                    t,
                    y,
                    accepted,
                    rejected,
                    rhs_evals: evals,
                    stopped: true,
                });
            }
        } else {
            rejected += 1;
            last_rejected = true;
            h = hs * (SAFETY * en.powf(-0.2)).max(MIN_FACTOR);
        }
    }
    Ok(Outcome {
        t,
        y,
        accepted,
        rejected,
        rhs_evals: evals,
        stopped: false,
    })
}

//! Closed-loop simulation of `ẋ = (A0 + K + R(t,x)) x + B0 u(x)`.
//!
//! Two formulations are available. `Algebraic` re-solves `Θ(x)` at every
//! right-hand-side evaluation and is the reference. `Augmented` carries
//! `θ` as an extra state driven by
//! `θ̇ = −1 + (S y, y)/(F¹ y, y)`, `y = D(θ) x`, so `Θ` is solved only once.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CanonicalSystem, PerturbationSpec, Violation};
use crate::ode::{self, Flow, Method, Step, Tolerances};
use crate::robustness;
use crate::synthesis::SynthesisArtifacts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    #[default]
    Algebraic,
    Augmented,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rtol: f64,
    /// Absolute tolerance on the scaled state `D(θ) x` (at most this on `x` itself).
    pub atol: f64,
    pub max_step: f64,
    /// Run ends once `θ ≤ theta_stop`.
    pub theta_stop: f64,
    /// Time cap; `None` uses the guaranteed bound `Θ(x0)/γ` plus one.
    pub t_max: Option<f64>,
    /// Record on a uniform grid (dense output) instead of at every accepted step.
    pub sample_interval: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            rtol: 1e-9,
            atol: 1e-12,
            max_step: 0.1,
            theta_stop: 1e-4,
            t_max: None,
            sample_interval: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol >= 1e-13) {
            return Err(Error::InvalidInput(format!("rtol must be >= 1e-13, got {}", self.rtol)));
        }
        if !(self.atol > 0.0) {
            return Err(Error::InvalidInput(format!("atol must be > 0, got {}", self.atol)));
        }
        if !(self.theta_stop > 0.0) {
            return Err(Error::InvalidInput(format!("theta_stop must be > 0, got {}", self.theta_stop)));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidInput(format!("max_step must be > 0, got {}", self.max_step)));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return Err(Error::InvalidInput(format!("t_max must be > 0, got {t}")));
            }
        }
        if let Some(dt) = self.sample_interval {
            if !(dt > 0.0) {
                return Err(Error::InvalidInput(format!("sample_interval must be > 0, got {dt}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    ReachedOrigin,
    TMaxExceeded,
    LeftDomain,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub theta: f64,
    pub u: Vec<f64>,
    /// `−1 + (S y, y)/(F¹ y, y)` at the sample.
    pub theta_dot: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub mode: SimMode,
    pub terminal: Terminal,
    /// Time of motion, when the origin was reached.
    pub settling_time: Option<f64>,
    pub theta0: f64,
    pub gamma: f64,
    pub a0: f64,
    pub c: f64,
    pub delta: f64,
    pub theta_stop: f64,
    /// Violations found at the recorded samples (capped; see `violation_count`).
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
}

const MAX_RECORDED_VIOLATIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "T")]
    pub settling_time: Option<f64>,
    pub max_u_norm: f64,
    pub min_theta_dot: f64,
    pub max_theta_dot: f64,
    pub terminal: Terminal,
    pub theta0: f64,
    /// `Θ(x0)/γ`, the guaranteed upper bound on the time of motion.
    pub time_bound: f64,
    pub gamma: f64,
    pub a0: f64,
    pub c: f64,
    pub delta: Option<f64>,
    pub violations: usize,
    pub samples: usize,
}

impl Trajectory {
    pub fn summary(&self) -> Summary {
        let mut max_u: f64 = 0.0;
        let mut min_td = f64::INFINITY;
        let mut max_td = f64::NEG_INFINITY;
        for s in &self.samples {
            max_u = max_u.max(norm(&s.u));
            if s.theta_dot.is_finite() {
                min_td = min_td.min(s.theta_dot);
                max_td = max_td.max(s.theta_dot);
            }
        }
        Summary {
            settling_time: self.settling_time,
            max_u_norm: max_u,
            min_theta_dot: min_td,
            max_theta_dot: max_td,
            terminal: self.terminal,
            theta0: self.theta0,
            time_bound: self.theta0 / self.gamma,
            gamma: self.gamma,
            a0: self.a0,
            c: self.c,
            delta: self.delta.is_finite().then_some(self.delta),
            violations: self.violation_count,
            samples: self.samples.len(),
        }
    }

    pub fn csv_header(n: usize, r: usize) -> String {
        let mut h = String::from("t");
        for i in 1..=n {
            let _ = write!(h, ",x{i}");
        }
        h.push_str(",theta");
        for i in 1..=r {
            let _ = write!(h, ",u{i}");
        }
        h.push_str(",theta_dot");
        h
    }

    /// CSV with header `t,x1..xn,theta,u1..ur,theta_dot`; values use Rust's
    /// shortest round-trip formatting, so output is reproducible bit for bit.
    pub fn to_csv(&self) -> String {
        let (n, r) = self
            .samples
            .first()
            .map(|s| (s.x.len(), s.u.len()))
            .unwrap_or((0, 0));
        let mut out = Self::csv_header(n, r);
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{}", s.t);
            for v in &s.x {
                let _ = write!(out, ",{v}");
            }
            let _ = write!(out, ",{}", s.theta);
            for v in &s.u {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", s.theta_dot);
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Shared evaluation state for one run.
struct ClosedLoop<'a> {
    system: &'a CanonicalSystem,
    artifacts: &'a SynthesisArtifacts,
    perturbation: &'a PerturbationSpec,
    drift: DMatrix<f64>,
    r: DMatrix<f64>,
    sink: Vec<Violation>,
}

impl<'a> ClosedLoop<'a> {
    fn new(system: &'a CanonicalSystem, artifacts: &'a SynthesisArtifacts, perturbation: &'a PerturbationSpec) -> Self {
        let n = system.blocks().dim();
        Self {
            system,
            artifacts,
            perturbation,
            drift: system.a0() + system.k(),
            r: DMatrix::zeros(n, n),
            sink: Vec::new(),
        }
    }

    /// `ẋ` given `θ`; also leaves `R(t,x)` in `self.r`.
    fn xdot(&mut self, t: f64, x: &DVector<f64>, theta: f64, out: &mut [f64]) -> Result<()> {
        self.perturbation.evaluate_into(t, x.as_slice(), &mut self.r, &mut self.sink);
        self.sink.clear();
        let u = self.artifacts.control_at(x, theta)?.u;
        let dx = &self.drift * x + &self.r * x;
        out[..dx.len()].copy_from_slice(dx.as_slice());
        for (i, &row) in self.system.blocks().control_rows().iter().enumerate() {
            out[row] += u[i];
        }
        Ok(())
    }

    fn theta_dot(&self, x: &DVector<f64>, theta: f64) -> Result<f64> {
        if theta <= 0.0 || x.norm() == 0.0 {
            return Ok(-1.0);
        }
        robustness::closed_loop_theta_dot(self.artifacts, &self.r, x, theta)
    }

    fn sample(&mut self, t: f64, x: &DVector<f64>, theta: f64, violations: &mut Vec<Violation>, count: &mut usize) -> Result<Sample> {
        let mut found = Vec::new();
        self.perturbation.evaluate_into(t, x.as_slice(), &mut self.r, &mut found);
        *count += found.len();
        for v in found {
            if violations.len() < MAX_RECORDED_VIOLATIONS {
                violations.push(v);
            }
        }
        let u = self.artifacts.control_at(x, theta)?.u;
        Ok(Sample {
            t,
            x: x.as_slice().to_vec(),
            theta,
            u: u.as_slice().to_vec(),
            theta_dot: self.theta_dot(x, theta)?,
        })
    }
}

/// Integrate the closed loop from `x0` until `θ ≤ theta_stop`.
pub fn simulate(
    system: &CanonicalSystem,
    artifacts: &SynthesisArtifacts,
    perturbation: &PerturbationSpec,
    x0: &[f64],
    mode: SimMode,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let n = system.blocks().dim();
    if x0.len() != n {
        return Err(Error::InvalidInput(format!("x0 has {} entries, expected {n}", x0.len())));
    }
    if artifacts.blocks() != system.blocks() || perturbation.mask().blocks() != system.blocks() {
        return Err(Error::InvalidInput("system, synthesis and perturbation disagree on the block structure".into()));
    }
    if !artifacts.a0_admissible() {
        return Err(Error::Domain(format!(
            "a0 = {} exceeds the admissible bound {}",
            artifacts.a0(),
            artifacts.a0_max()
        )));
    }
    let x0v = DVector::from_column_slice(x0);
    let theta0 = artifacts.solve_theta(&x0v)?;
    let c = artifacts.c();
    if theta0 > c * (1.0 + 1e-12) {
        return Err(Error::OutsideDomain { theta0, c });
    }
    let gamma = artifacts.gamma();
    let stop = config.theta_stop;
    let t_max = config.t_max.unwrap_or(theta0 / gamma + 1.0);
    let leave_level = c * (1.0 + 1e-6);

    let mut lp = ClosedLoop::new(system, artifacts, perturbation);
    let mut samples = Vec::new();
    let mut violations = Vec::new();
    let mut violation_count = 0;

    let base = Trajectory {
        samples: Vec::new(),
        mode,
        terminal: Terminal::ReachedOrigin,
        settling_time: None,
        theta0,
        gamma,
        a0: artifacts.a0(),
        c,
        delta: perturbation.bound(),
        theta_stop: stop,
        violations: Vec::new(),
        violation_count: 0,
        accepted_steps: 0,
        rejected_steps: 0,
        rhs_evals: 0,
    };

    samples.push(lp.sample(0.0, &x0v, theta0, &mut violations, &mut violation_count)?);
    if theta0 <= stop {
        return Ok(Trajectory {
            samples,
            settling_time: Some(theta0),
            violations,
            violation_count,
            ..base
        });
    }

    let tol = Tolerances {
        rtol: config.rtol,
        atol: config.atol,
        max_step: config.max_step,
    };
    let dim = match mode {
        SimMode::Algebraic => n,
        SimMode::Augmented => n + 1,
    };
    let mut z0 = x0.to_vec();
    if mode == SimMode::Augmented {
        z0.push(theta0);
    }

    // Split borrows: the right-hand side and the observer each need the closed loop.
    let lp_cell = std::cell::RefCell::new(&mut lp);
    let mut xbuf = DVector::zeros(n);
    let mut last_theta = theta0;
    let mut terminal = None;
    let mut settling = None;
    let mut next_grid = config.sample_interval;
    let mut interp = vec![0.0; dim];

    let theta_of = |z: &[f64], x: &DVector<f64>| -> Result<f64> {
        match mode {
            SimMode::Algebraic => artifacts.solve_theta(x),
            SimMode::Augmented => Ok(z[n]),
        }
    };

    let rhs = |t: f64, z: &[f64], dz: &mut [f64]| -> Result<()> {
        let x = DVector::from_column_slice(&z[..n]);
        let mut lp = lp_cell.borrow_mut();
        match mode {
            SimMode::Algebraic => {
                let theta = artifacts.solve_theta(&x)?;
                lp.xdot(t, &x, theta, dz)
            }
            SimMode::Augmented => {
                let theta = z[n];
                if !(theta > 0.0) {
                    return Err(Error::Domain(format!("integrated θ left (0, ∞): {theta}")));
                }
                lp.xdot(t, &x, theta, dz)?;
                dz[n] = if x.norm() == 0.0 { -1.0 } else { lp.theta_dot(&x, theta)? };
                Ok(())
            }
        }
    };

    let observe = |step: &Step<'_>| -> Result<Flow> {
        let mut lp = lp_cell.borrow_mut();
        while let Some(tg) = next_grid {
            if tg >= step.t1 {
                break;
            }
            step.interpolate(tg, &mut interp);
            xbuf.copy_from_slice(&interp[..n]);
            let th = theta_of(&interp, &xbuf)?;
            if th <= stop {
                break;
            }
            samples.push(lp.sample(tg, &xbuf, th, &mut violations, &mut violation_count)?);
            // grid points are k·dt; recomputing avoids drift from repeated addition
            next_grid = config.sample_interval.map(|dt| samples.len() as f64 * dt);
        }
        xbuf.copy_from_slice(&step.y1[..n]);
        let th1 = theta_of(step.y1, &xbuf)?;
        if th1 <= stop {
            // First crossing inside the step, then extrapolate θ to zero along the last slope.
            let slope = (th1 - last_theta) / (step.t1 - step.t0);
            let t_cross = if last_theta > th1 {
                step.t0 + (last_theta - stop) / (last_theta - th1) * (step.t1 - step.t0)
            } else {
                step.t1
            };
            let extra = if slope < 0.0 { stop / -slope } else { 0.0 };
            settling = Some(t_cross + extra);
            samples.push(lp.sample(step.t1, &xbuf, th1, &mut violations, &mut violation_count)?);
            terminal = Some(Terminal::ReachedOrigin);
            return Ok(Flow::Stop);
        }
        if th1 > leave_level {
            samples.push(lp.sample(step.t1, &xbuf, th1, &mut violations, &mut violation_count)?);
            terminal = Some(Terminal::LeftDomain);
            return Ok(Flow::Stop);
        }
        if config.sample_interval.is_none() || step.t1 >= t_max {
            samples.push(lp.sample(step.t1, &xbuf, th1, &mut violations, &mut violation_count)?);
        }
        last_theta = th1;
        Ok(Flow::Continue)
    };

    // Near the origin the state shrinks like θ^{-h}; measuring the absolute
    // error in those units keeps the fine components resolved.
    let h = artifacts.gramians().h().clone();
    let weights = |z: &[f64], w: &mut [f64]| {
        let theta = match mode {
            SimMode::Algebraic => artifacts.solve_theta(&DVector::from_column_slice(&z[..n])).unwrap_or(1.0),
            SimMode::Augmented => z[n],
        };
        let theta = if theta > 0.0 { theta.min(1.0) } else { 1.0 };
        for (wi, hi) in w.iter_mut().zip(h.iter()) {
            *wi = theta.powf(-hi);
        }
        if mode == SimMode::Augmented {
            w[n] = theta;
        }
    };
    let outcome = ode::integrate_weighted(config.method, tol, weights, rhs, 0.0, &z0, t_max, observe);
    let (accepted, rejected, evals) = match outcome {
        Ok(o) => (o.accepted, o.rejected, o.rhs_evals),
        Err(Error::StepUnderflow { t, h, .. }) => {
            if last_theta <= 10.0 * stop {
                terminal = Some(Terminal::ReachedOrigin);
                settling = Some(t + last_theta);
                (0, 0, 0)
            } else {
                return Err(Error::StepUnderflow { t, h, theta: last_theta });
            }
        }
        Err(e) => return Err(e),
    };
    Ok(Trajectory {
        samples,
        terminal: terminal.unwrap_or(Terminal::TMaxExceeded),
        settling_time: settling,
        violations,
        violation_count,
        accepted_steps: accepted,
        rejected_steps: rejected,
        rhs_evals: evals,
        ..base
    })
}

/// One fully specified run of a sweep.
#[derive(Clone, Debug)]
pub struct SweepCase {
    pub parameter: f64,
    pub system: CanonicalSystem,
    pub artifacts: SynthesisArtifacts,
    pub perturbation: PerturbationSpec,
    pub x0: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub min_t: Option<f64>,
    pub max_t: Option<f64>,
    pub failures: usize,
}

/// Runs every case in parallel; results keep the input order and a failing
/// case is recorded without stopping the others.
pub fn sweep(cases: &[SweepCase], mode: SimMode, config: &IntegratorConfig) -> SweepReport {
    let points: Vec<SweepPoint> = cases
        .par_iter()
        .map(|case| {
            match simulate(&case.system, &case.artifacts, &case.perturbation, &case.x0, mode, config) {
                Ok(traj) => SweepPoint {
                    parameter: case.parameter,
                    summary: Some(traj.summary()),
                    error: None,
                },
                Err(e) => SweepPoint {
                    parameter: case.parameter,
                    summary: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let times: Vec<f64> = points
        .iter()
        .filter_map(|p| p.summary.as_ref().and_then(|s| s.settling_time))
        .collect();
    let failures = points
        .iter()
        .filter(|p| p.error.is_some() || p.summary.as_ref().is_some_and(|s| s.terminal != Terminal::ReachedOrigin))
        .count();
    SweepReport {
        min_t: times.iter().copied().reduce(f64::min),
        max_t: times.iter().copied().reduce(f64::max),
        points,
        failures,
    }
}

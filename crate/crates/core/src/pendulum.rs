//! Two pendulums coupled by a spring, linearized about the lower equilibrium.
//!
//! With `x = (φ1, φ̇1, φ2, φ̇2)` and one torque per pendulum,
//!
//! ```text
//! φ̈1 = −(m1 g l1 + k h²)/(m1 l1²) φ1 + k h²/(m1 l1²) φ2 + u1
//! φ̈2 =  k h²/(m2 l2²) φ1 − (m2 g l2 + k h²)/(m2 l2²) φ2 + u2
//! ```
//!
//! Two uncertainty scenarios are provided: unknown spring stiffness `k`
//! (case 1) and unknown common length `l` (case 2).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_perturbation_mask, BlockStructure, CanonicalSystem, MaskKind, PerturbationSpec, Profile, Term};
use crate::robustness;
use crate::synthesis::Gramians;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Height of the spring attachment.
    pub h: f64,
    /// Spring stiffness (case 1: its largest possible value).
    pub k: f64,
    pub g: f64,
    pub gamma: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self::case1()
    }
}

/// Initial state used by both presets.
pub const X0: [f64; 4] = [-0.3, 0.3, 0.0, 0.0];

/// Perturbation positions (zero-based) for each case.
const CASE1_SUPPORT: [(usize, usize); 4] = [(1, 0), (1, 2), (3, 0), (3, 2)];
const CASE2_SUPPORT: [(usize, usize); 2] = [(1, 0), (3, 2)];

impl PendulumParams {
    /// Unknown stiffness `0 ≤ k0 ≤ k = 4`.
    pub fn case1() -> Self {
        Self {
            m1: 1.0,
            m2: 2.0,
            l1: 60.0,
            l2: 30.0,
            h: 7.5,
            k: 4.0,
            g: 9.8,
            gamma: 0.001,
        }
    }

    /// Unknown length `l ≥ 30` with `h/l = 1/4` and `k = 1`.
    pub fn case2() -> Self {
        Self {
            m1: 1.0,
            m2: 2.0,
            l1: 30.0,
            l2: 30.0,
            h: 7.5,
            k: 1.0,
            g: 9.8,
            gamma: 0.001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("h", self.h),
            ("g", self.g),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidInput(format!("k must be finite and >= 0, got {}", self.k)));
        }
        if self.h > self.l1.min(self.l2) {
            return Err(Error::InvalidInput(format!(
                "h = {} exceeds the shorter pendulum length {}",
                self.h,
                self.l1.min(self.l2)
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        Ok(())
    }

    /// `h²/(m1 l1²)` and `h²/(m2 l2²)`: spring coupling per unit stiffness.
    pub fn coupling(&self) -> (f64, f64) {
        let h2 = self.h * self.h;
        (h2 / (self.m1 * self.l1 * self.l1), h2 / (self.m2 * self.l2 * self.l2))
    }
}

fn blocks() -> BlockStructure {
    BlockStructure::new(vec![2, 2]).expect("static partition")
}

fn constant_terms(entries: &[(usize, usize, f64)]) -> Vec<Term> {
    entries
        .iter()
        .filter(|e| e.2 != 0.0)
        .map(|&(row, col, value)| Term {
            row,
            col,
            profile: Profile::Constant { value },
        })
        .collect()
}

/// Case 1: gravity is known (`K`), the spring stiffness `k0 ∈ [0, k]` is not.
/// The returned perturbation uses the actual stiffness `k0` and declares the
/// bound `Δ = k · max{h²/(m1 l1²), h²/(m2 l2²)}`.
pub fn build_case1(params: &PendulumParams, k0: f64) -> Result<(CanonicalSystem, PerturbationSpec)> {
    params.validate()?;
    if !(k0 >= 0.0 && k0 <= params.k) {
        return Err(Error::InvalidInput(format!("k0 = {k0} must lie in [0, {}]", params.k)));
    }
    let b = blocks();
    let mut k = DMatrix::zeros(4, 4);
    k[(1, 0)] = -params.g / params.l1;
    k[(3, 2)] = -params.g / params.l2;
    let system = CanonicalSystem::new(b.clone(), k)?;
    let (a, bb) = params.coupling();
    let (r21, r41) = (k0 * a, k0 * bb);
    let delta = params.k * a.max(bb);
    let mask = build_perturbation_mask(&b, MaskKind::General).restrict(&CASE1_SUPPORT)?;
    let terms = constant_terms(&[(1, 0, -r21), (1, 2, r21), (3, 0, r41), (3, 2, -r41)]);
    Ok((system, PerturbationSpec::new(mask, delta, terms)?))
}

/// Case 2: the spring is known (`K`), the common length `l` is not.
/// The ratio `h/l` is taken from `params.h / params.l1`, `l` is the actual
/// length and the bound is `Δ = g / l_min`.
pub fn build_case2(params: &PendulumParams, l: f64, l_min: f64) -> Result<(CanonicalSystem, PerturbationSpec)> {
    params.validate()?;
    if (params.l1 - params.l2).abs() > 1e-12 * params.l1 {
        return Err(Error::InvalidInput("case 2 needs l1 = l2".into()));
    }
    if !(l_min > 0.0 && l >= l_min) {
        return Err(Error::InvalidInput(format!("need 0 < l_min <= l, got l = {l}, l_min = {l_min}")));
    }
    let ratio = params.h / params.l1;
    let b = blocks();
    let k21 = params.k * ratio * ratio / params.m1;
    let k41 = params.k * ratio * ratio / params.m2;
    let mut k = DMatrix::zeros(4, 4);
    k[(1, 0)] = -k21;
    k[(1, 2)] = k21;
    k[(3, 0)] = k41;
    k[(3, 2)] = -k41;
    let system = CanonicalSystem::new(b.clone(), k)?;
    let r = params.g / l;
    let mask = build_perturbation_mask(&b, MaskKind::General).restrict(&CASE2_SUPPORT)?;
    let terms = constant_terms(&[(1, 0, -r), (3, 2, -r)]);
    Ok((system, PerturbationSpec::new(mask, params.g / l_min, terms)?))
}

/// Largest `c` for which every stiffness up to `k_max` keeps `Θ̇ ≤ −γ`, from
/// the exact `λmax((F¹)⁻¹ S(Θ)) = (r21 + r41 + 2√(2(r21² + r41²))) Θ²/6`.
pub fn solvability_radius_case1(params: &PendulumParams, k_max: f64, gamma: f64) -> f64 {
    let (a, b) = params.coupling();
    let s = a + b + 2.0 * (2.0 * a * a + 2.0 * b * b).sqrt();
    (6.0 * (1.0 - gamma) / (k_max * s)).sqrt()
}

/// Largest `c` for lengths `l ≥ l_min`, from `λmax((F¹)⁻¹ S(Θ)) = g Θ²/(2l)`.
pub fn solvability_radius_case2(l_min: f64, gamma: f64, g: f64) -> f64 {
    (2.0 * l_min * (1.0 - gamma) / g).sqrt()
}

/// Rank of `(B0, (A0 + K + R) B0)`.
pub fn controllability_rank(system: &CanonicalSystem, r: &DMatrix<f64>) -> usize {
    let b0 = system.b0();
    let a = system.a0() + system.k() + r;
    let ab = &a * b0;
    let mut m = DMatrix::zeros(b0.nrows(), 2 * b0.ncols());
    m.columns_mut(0, b0.ncols()).copy_from(b0);
    m.columns_mut(b0.ncols(), b0.ncols()).copy_from(&ab);
    m.rank(1e-10)
}

/// Margin and solvability radius computed both through the problem-specific
/// eigenvalue formula and through the generic `G̃` route.
#[derive(Clone, Debug, Serialize)]
pub struct RadiusStudy {
    /// Problem-specific radius (exact worst-case eigenvalue).
    pub c_sharpened: f64,
    /// Radius from `max{c^{n1}, c} ≤ (1−γ)/(Δ ρ(G̃))`.
    pub c_generic: f64,
    pub delta: f64,
    pub rho_gtilde: f64,
    #[serde(serialize_with = "crate::serde_util::matrix")]
    pub gtilde: DMatrix<f64>,
}

pub fn study_case1(params: &PendulumParams) -> Result<RadiusStudy> {
    let (_, pert) = build_case1(params, params.k)?;
    radius_study(pert, solvability_radius_case1(params, params.k, params.gamma), params.gamma)
}

pub fn study_case2(params: &PendulumParams, l_min: f64) -> Result<RadiusStudy> {
    let (_, pert) = build_case2(params, l_min, l_min)?;
    radius_study(pert, solvability_radius_case2(l_min, params.gamma, params.g), params.gamma)
}

fn radius_study(pert: PerturbationSpec, c_sharpened: f64, gamma: f64) -> Result<RadiusStudy> {
    let b = blocks();
    let g = Gramians::new(&b)?;
    let gtilde = robustness::build_gtilde(g.f(), g.f1_inv(), pert.mask());
    let rho = robustness::spectral_radius(&gtilde)?.value;
    let delta = pert.bound();
    let c_generic = robustness::domain_radius(gamma, delta, rho, b.largest())?;
    Ok(RadiusStudy {
        c_sharpened,
        c_generic,
        delta,
        rho_gtilde: rho,
        gtilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case1_matrices() {
        let p = PendulumParams::case1();
        let (sys, pert) = build_case1(&p, 4.0).unwrap();
        assert!((sys.k()[(1, 0)] + 9.8 / 60.0).abs() < 1e-15);
        assert!((sys.k()[(3, 2)] + 9.8 / 30.0).abs() < 1e-15);
        let r = pert.matrix(0.0, &X0);
        assert!((r[(1, 0)] + 4.0 / 64.0).abs() < 1e-15);
        assert!((r[(1, 2)] - 4.0 / 64.0).abs() < 1e-15);
        assert!((r[(3, 0)] - 4.0 / 32.0).abs() < 1e-15);
        assert!((r[(3, 2)] + 4.0 / 32.0).abs() < 1e-15);
        assert!((pert.bound() - 0.125).abs() < 1e-15);
        let (_, none) = build_case1(&p, 0.0).unwrap();
        assert_eq!(none.matrix(1.0, &X0), DMatrix::zeros(4, 4));
        for k0 in [0.0, 1.0, 4.0] {
            let (sys, pert) = build_case1(&p, k0).unwrap();
            assert_eq!(controllability_rank(&sys, &pert.matrix(0.0, &X0)), 4);
        }
        assert!(build_case1(&p, 5.0).is_err());
    }

    #[test]
    fn case2_matrices() {
        let p = PendulumParams::case2();
        let (sys, pert) = build_case2(&p, 60.0, 30.0).unwrap();
        let k = sys.k();
        assert!((k[(1, 0)] + 1.0 / 16.0).abs() < 1e-15 && (k[(1, 2)] - 1.0 / 16.0).abs() < 1e-15);
        assert!((k[(3, 0)] - 1.0 / 32.0).abs() < 1e-15 && (k[(3, 2)] + 1.0 / 32.0).abs() < 1e-15);
        let r = pert.matrix(0.0, &X0);
        assert!((r[(1, 0)] + 9.8 / 60.0).abs() < 1e-15 && (r[(3, 2)] + 9.8 / 60.0).abs() < 1e-15);
        assert!((pert.bound() - 9.8 / 30.0).abs() < 1e-15);
        let (_, far) = build_case2(&p, 1e9, 30.0).unwrap();
        assert!(far.matrix(0.0, &X0).amax() < 1e-8);
    }

    #[test]
    fn radii() {
        let p = PendulumParams::case1();
        let c1 = solvability_radius_case1(&p, 4.0, 0.001);
        assert!((c1 - 3.2).abs() < 0.01);
        let doubled = PendulumParams { h: 15.0, ..p };
        assert!((solvability_radius_case1(&doubled, 4.0, 0.001) * 2.0 - c1).abs() < 1e-12);
        assert!(solvability_radius_case1(&p, 1e-12, 0.001) > 1e5);
        assert!((solvability_radius_case2(30.0, 0.001, 9.8) - 2.47).abs() < 0.005);
        assert!((solvability_radius_case2(60.0, 0.001, 9.8) - (120.0f64 * 0.999 / 9.8).sqrt()).abs() < 1e-12);
        assert!(solvability_radius_case2(30.0, 1.0 - 1e-12, 9.8) < 1e-5);
    }

    #[test]
    fn studies_report_both_routes() {
        let s = study_case1(&PendulumParams::case1()).unwrap();
        assert!((s.rho_gtilde - (10.0 + 112f64.sqrt()) / 6.0).abs() < 1e-12);
        assert!(s.c_generic < s.c_sharpened);
        let s2 = study_case2(&PendulumParams::case2(), 30.0).unwrap();
        assert!((s2.c_sharpened - 2.4731).abs() < 1e-4);
    }
}

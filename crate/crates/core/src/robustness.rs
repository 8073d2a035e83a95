//! Perturbation margin and the derivative of Θ along perturbed trajectories.
//!
//! Along `ẋ = (A0 + K + R) x + B0 u(x)` the controllability function obeys
//! `Θ̇ = −1 + (S y, y) / (F¹ y, y)` with `y = D(Θ) x` and
//! `S = Θ (F D R D⁻¹ + D⁻¹ Rᵀ D F)`. Bounding the Rayleigh quotient through
//! the comparison matrix `G̃ = |(F¹)⁻¹| (F R̃ + R̃ᵀ F)` yields the margin
//! `Δ` that keeps `Θ̇ ≤ −γ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{MaskKind, PerturbationMask};
use crate::synthesis::{Gramians, SynthesisArtifacts};

/// Which margin formula applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// `Δ = (1−γ)/ρ(G̃)`, valid on any level set.
    SuperdiagonalGlobal,
    /// `Δ = (1−γ)/(max{c^{n1}, c} ρ(G̃))`, valid on `Θ ≤ c`.
    GeneralLocal,
}

impl From<MaskKind> for BoundMode {
    fn from(kind: MaskKind) -> Self {
        match kind {
            MaskKind::Superdiagonal => BoundMode::SuperdiagonalGlobal,
            MaskKind::General => BoundMode::GeneralLocal,
        }
    }
}

/// `G̃ = |(F¹)⁻¹| · (F R̃ + R̃ᵀ F)` for the ones-filled mask `R̃`.
pub fn build_gtilde(f: &DMatrix<f64>, f1_inv: &DMatrix<f64>, mask: &PerturbationMask) -> DMatrix<f64> {
    let ones = mask.ones();
    linalg::abs(f1_inv) * (f * &ones + ones.transpose() * f)
}

/// Spectral radius with, for nonnegative input, an independent power-iteration
/// value that must agree to `1e-8` relative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralRadius {
    pub value: f64,
    pub power_iteration: Option<f64>,
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<SpectralRadius> {
    let value = linalg::spectral_radius(m)?;
    let power_iteration = if m.iter().all(|&v| v >= 0.0) {
        let p = linalg::perron_root(m, 1e-12, 500_000)?.radius;
        let scale = value.abs().max(p.abs());
        if scale > 0.0 && (value - p).abs() > 1e-8 * scale {
            return Err(Error::NoConvergence {
                method: "spectral radius cross-check",
                iterations: 0,
                last_change: (value - p).abs() / scale,
            });
        }
        Some(p)
    } else {
        None
    };
    Ok(SpectralRadius {
        value,
        power_iteration,
    })
}

fn growth(c: f64, n1: usize) -> f64 {
    c.powi(n1 as i32).max(c)
}

/// Perturbation margin `Δ`; `+∞` when `ρ(G̃) = 0` (nothing to perturb).
pub fn delta_margin(gamma: f64, rho: f64, mode: BoundMode, c: f64, n1: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0,1), got {gamma}")));
    }
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("spectral radius must be >= 0, got {rho}")));
    }
    if rho == 0.0 {
        return Ok(f64::INFINITY);
    }
    match mode {
        BoundMode::SuperdiagonalGlobal => Ok((1.0 - gamma) / rho),
        BoundMode::GeneralLocal => {
            if !(c > 0.0) {
                return Err(Error::Domain(format!("c must be > 0, got {c}")));
            }
            Ok((1.0 - gamma) / (growth(c, n1) * rho))
        }
    }
}

/// Largest `c` with `max{c^{n1}, c} ≤ (1−γ)/(Δ ρ)`.
pub fn domain_radius(gamma: f64, delta: f64, rho: f64, n1: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0,1), got {gamma}")));
    }
    if !(delta * rho > 0.0) {
        return Err(Error::Domain(format!("domain radius needs Δ·ρ > 0, got Δ={delta}, ρ={rho}")));
    }
    let q = (1.0 - gamma) / (delta * rho);
    Ok(if q <= 1.0 { q } else { q.powf(1.0 / n1 as f64) })
}

/// `S(Θ,t,x) = Θ (F D R D⁻¹ + D⁻¹ Rᵀ D F)` given the diagonal `d` of `D(Θ)`.
pub fn s_matrix(f: &DMatrix<f64>, d: &DVector<f64>, r: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
    let n = d.len();
    let conj = DMatrix::from_fn(n, n, |i, j| {
        let v = r[(i, j)];
        if v == 0.0 {
            0.0
        } else {
            v * d[i] / d[j]
        }
    });
    let fc = f * &conj;
    (&fc + fc.transpose()) * theta
}

/// `S0 = F R + Rᵀ F`.
pub fn s0_matrix(f: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let fr = f * r;
    &fr + fr.transpose()
}

/// `Θ̇ = −1 + (S y, y) / (F¹ y, y)`.
pub fn theta_dot(f1: &DMatrix<f64>, s: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let den = y.dot(&(f1 * y));
    if !(den > 0.0) {
        return Err(Error::Domain("Θ̇ undefined at y = 0".into()));
    }
    Ok(-1.0 + y.dot(&(s * y)) / den)
}

/// `[λmin, λmax]` of `(F¹)⁻¹ S`, from the symmetric pencil `S v = λ F¹ v`.
pub fn rayleigh_range(f1: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<(f64, f64)> {
    let eig = linalg::generalized_eigenvalues(s, f1)?;
    Ok((eig[0], *eig.last().unwrap()))
}

/// `Θ̇` of the closed loop at `(t, x)` with perturbation matrix `r` and a known `Θ`.
pub fn closed_loop_theta_dot(
    artifacts: &SynthesisArtifacts,
    r: &DMatrix<f64>,
    x: &DVector<f64>,
    theta: f64,
) -> Result<f64> {
    let g = artifacts.gramians();
    let d = g.d(theta)?;
    let y = d.component_mul(x);
    let s = s_matrix(g.f(), &d, r, theta);
    theta_dot(g.f1(), &s, &y)
}

/// The guaranteed margin for one mask.
#[derive(Clone, Debug, Serialize)]
pub struct RobustnessBound {
    #[serde(serialize_with = "crate::serde_util::matrix")]
    pub gtilde: DMatrix<f64>,
    pub rho_gtilde: f64,
    pub rho_power_iteration: Option<f64>,
    /// `+∞` for an empty mask, serialized as `null`.
    #[serde(serialize_with = "crate::serde_util::unbounded")]
    pub delta: f64,
    pub mode: BoundMode,
    /// Level of the solvability ellipsoid the margin is valid on (general mode only).
    pub c: Option<f64>,
    pub gamma: f64,
}

impl RobustnessBound {
    /// Margin `Δ` for a given `γ` (and `c`, used only in general mode).
    pub fn margin(gramians: &Gramians, mask: &PerturbationMask, gamma: f64, c: f64) -> Result<Self> {
        let gtilde = build_gtilde(gramians.f(), gramians.f1_inv(), mask);
        let rho = spectral_radius(&gtilde)?;
        let mode = BoundMode::from(mask.kind());
        let n1 = gramians.blocks().largest();
        let delta = delta_margin(gamma, rho.value, mode, c, n1)?;
        Ok(Self {
            gtilde,
            rho_gtilde: rho.value,
            rho_power_iteration: rho.power_iteration,
            delta,
            mode,
            c: (mode == BoundMode::GeneralLocal).then_some(c),
            gamma,
        })
    }

    /// Relative residual of `Δ · growth · ρ(G̃) = 1 − γ`; zero for the `ρ = 0` sentinel.
    pub fn identity_residual(&self, n1: usize) -> f64 {
        if self.rho_gtilde == 0.0 {
            return if self.delta.is_infinite() { 0.0 } else { f64::INFINITY };
        }
        let g = match self.c {
            Some(c) => growth(c, n1),
            None => 1.0,
        };
        ((self.delta * g * self.rho_gtilde) - (1.0 - self.gamma)).abs() / (1.0 - self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_perturbation_mask, BlockStructure};

    fn blocks(s: &[usize]) -> BlockStructure {
        BlockStructure::new(s.to_vec()).unwrap()
    }

    #[test]
    fn empty_mask_gives_unbounded_margin() {
        let b = blocks(&[1]);
        let g = Gramians::new(&b).unwrap();
        let mask = build_perturbation_mask(&b, MaskKind::Superdiagonal);
        let bound = RobustnessBound::margin(&g, &mask, 0.5, 1.0).unwrap();
        assert_eq!(bound.gtilde, DMatrix::zeros(1, 1));
        assert_eq!(bound.rho_gtilde, 0.0);
        assert!(bound.delta.is_infinite());
    }

    #[test]
    fn gtilde_double_integrator_by_hand() {
        // |(F¹)⁻¹| with F¹ = [[144,36],[36,12]]: det = 432, inverse = [[12,-36],[-36,144]]/432
        // R̃ = [[0,1],[0,0]]: F R̃ + R̃ᵀ F = [[0,36],[36,24]]
        let b = blocks(&[2]);
        let g = Gramians::new(&b).unwrap();
        let mask = build_perturbation_mask(&b, MaskKind::Superdiagonal);
        let gt = build_gtilde(g.f(), g.f1_inv(), &mask);
        let inv_abs = DMatrix::from_row_slice(2, 2, &[12.0, 36.0, 36.0, 144.0]) / 432.0;
        let sym = DMatrix::from_row_slice(2, 2, &[0.0, 36.0, 36.0, 24.0]);
        let expect = inv_abs * sym;
        assert!((gt - &expect).amax() < 1e-14);
        // expect = [[3, 3], [12, 11]]: ρ = (14 + √(64+144))/2
        assert!((expect[(0, 0)] - 3.0).abs() < 1e-14 && (expect[(1, 1)] - 11.0).abs() < 1e-14);
        let rho = spectral_radius(&expect).unwrap();
        assert!((rho.value - (14.0 + 208f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pendulum_mask_reproduces_displayed_gtilde() {
        let b = blocks(&[2, 2]);
        let g = Gramians::new(&b).unwrap();
        let mut mask_pos = DMatrix::zeros(4, 4);
        for &(r, c) in &[(1, 0), (1, 2), (3, 0), (3, 2)] {
            mask_pos[(r, c)] = 1.0;
        }
        let gt = linalg::abs(g.f1_inv()) * (g.f() * &mask_pos + mask_pos.transpose() * g.f());
        let a = [7.0 / 6.0, 1.0 / 6.0, 7.0 / 6.0, 1.0 / 6.0];
        let bb = [4.0, 0.5, 4.0, 0.5];
        for c in 0..4 {
            assert!((gt[(0, c)] - a[c]).abs() < 1e-13);
            assert!((gt[(2, c)] - a[c]).abs() < 1e-13);
            assert!((gt[(1, c)] - bb[c]).abs() < 1e-13);
            assert!((gt[(3, c)] - bb[c]).abs() < 1e-13);
        }
        // invariant subspace (a,b,a,b): λ² − (10/3)λ − 1/3 = 0
        let rho = spectral_radius(&gt).unwrap();
        assert!((rho.value - (10.0 + 112f64.sqrt()) / 6.0).abs() < 1e-12);
        assert!((rho.value - 3.43).abs() < 0.01);
    }

    #[test]
    fn margin_formulas() {
        let d = delta_margin(0.001, 8.4, BoundMode::SuperdiagonalGlobal, 1.0, 2).unwrap();
        assert!((d - 0.999 / 8.4).abs() < 1e-15);
        assert!((d - 0.1189).abs() < 1e-4);
        let near_one = delta_margin(1.0 - 1e-12, 2.0, BoundMode::SuperdiagonalGlobal, 1.0, 2).unwrap();
        assert!(near_one < 1e-11);
        let gen = delta_margin(0.5, 2.0, BoundMode::GeneralLocal, 2.0, 3).unwrap();
        assert!((gen - 0.5 / (8.0 * 2.0)).abs() < 1e-15);
        assert!(delta_margin(0.0, 1.0, BoundMode::SuperdiagonalGlobal, 1.0, 1).is_err());
        assert!(delta_margin(0.5, 0.0, BoundMode::GeneralLocal, 1.0, 1).unwrap().is_infinite());

        // q = 1 → c = 1 for every n1
        for n1 in 1..6 {
            let c = domain_radius(0.5, 0.25, 2.0, n1).unwrap();
            assert!((c - 1.0).abs() < 1e-15);
        }
        // round trip Δ → c → Δ
        let c = domain_radius(0.2, 0.01, 3.0, 3).unwrap();
        let back = delta_margin(0.2, 3.0, BoundMode::GeneralLocal, c, 3).unwrap();
        assert!((back - 0.01).abs() < 1e-15);
        let small = domain_radius(0.2, 1.0, 3.0, 3).unwrap();
        assert!((small - 0.8 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn s_matrix_superdiagonal_is_theta_independent() {
        let b = blocks(&[3, 2]);
        let g = Gramians::new(&b).unwrap();
        let mut r = DMatrix::zeros(5, 5);
        r[(0, 1)] = 0.3;
        r[(1, 2)] = -0.2;
        r[(3, 4)] = 0.1;
        let s_a = s_matrix(g.f(), &g.d(0.5).unwrap(), &r, 0.5);
        let s_b = s_matrix(g.f(), &g.d(2.0).unwrap(), &r, 2.0);
        let s0 = s0_matrix(g.f(), &r);
        assert!(linalg::relative_gap(&s_a, &s0) < 1e-13);
        assert!(linalg::relative_gap(&s_b, &s0) < 1e-13);
        assert_eq!(s_matrix(g.f(), &g.d(2.0).unwrap(), &DMatrix::zeros(5, 5), 2.0), DMatrix::zeros(5, 5));
    }

    #[test]
    fn theta_dot_unperturbed_is_minus_one() {
        let f1 = DMatrix::from_row_slice(2, 2, &[144.0, 36.0, 36.0, 12.0]);
        let y = DVector::from_vec(vec![0.3, -1.0]);
        assert_eq!(theta_dot(&f1, &DMatrix::zeros(2, 2), &y).unwrap(), -1.0);
        assert!(theta_dot(&f1, &DMatrix::zeros(2, 2), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn pendulum_case_two_lambda_max() {
        let b = blocks(&[2, 2]);
        let g = Gramians::new(&b).unwrap();
        for &(r21, theta) in &[(0.33, 2.4), (9.8 / 30.0, 1.0), (0.01, 0.1)] {
            let mut r = DMatrix::zeros(4, 4);
            r[(1, 0)] = -r21;
            r[(3, 2)] = -r21;
            let s = s_matrix(g.f(), &g.d(theta).unwrap(), &r, theta);
            let (_, hi) = rayleigh_range(g.f1(), &s).unwrap();
            let expect = r21 * theta * theta / 2.0;
            assert!((hi - expect).abs() <= 1e-10 * expect, "{hi} vs {expect}");
        }
    }

    #[test]
    fn pendulum_case_one_lambda_max_closed_form() {
        use rand::{Rng, SeedableRng};
        let b = blocks(&[2, 2]);
        let g = Gramians::new(&b).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r21: f64 = rng.random_range(0.01..1.0);
            let r41: f64 = rng.random_range(0.01..1.0);
            let theta: f64 = rng.random_range(0.1..5.0);
            let mut r = DMatrix::zeros(4, 4);
            r[(1, 0)] = -r21;
            r[(1, 2)] = r21;
            r[(3, 0)] = r41;
            r[(3, 2)] = -r41;
            let s = s_matrix(g.f(), &g.d(theta).unwrap(), &r, theta);
            let (_, hi) = rayleigh_range(g.f1(), &s).unwrap();
            let expect = (r21 + r41 + 2.0 * (2.0 * (r21 * r21 + r41 * r41)).sqrt()) * theta * theta / 6.0;
            assert!((hi - expect).abs() <= 1e-8 * expect, "{hi} vs {expect}");
        }
    }

    #[test]
    fn general_s_entries_are_polynomials_of_degree_at_most_n1() {
        // the (n1+1)-th forward difference on an integer grid kills degree ≤ n1
        for sizes in [&[3usize, 2][..], &[4, 1], &[2, 2, 2]] {
            let b = blocks(sizes);
            let n = b.dim();
            let n1 = b.largest();
            let g = Gramians::new(&b).unwrap();
            let mask = build_perturbation_mask(&b, MaskKind::General);
            let r = DMatrix::from_fn(n, n, |i, j| if mask.allows(i, j) { 0.3 + 0.1 * (i + 2 * j) as f64 } else { 0.0 });
            let at = |theta: f64| s_matrix(g.f(), &g.d(theta).unwrap(), &r, theta);
            let mut diff: Vec<DMatrix<f64>> = (1..=n1 + 2).map(|k| at(k as f64)).collect();
            let scale = diff.iter().map(|m| m.amax()).fold(0.0, f64::max);
            for _ in 0..=n1 {
                diff = diff.windows(2).map(|w| &w[1] - &w[0]).collect();
            }
            assert_eq!(diff.len(), 1);
            assert!(diff[0].amax() <= 1e-10 * scale, "{sizes:?}: {}", diff[0].amax());
        }
    }
}

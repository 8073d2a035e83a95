//! Controllability-function synthesis for the unperturbed canonical system.
//!
//! Given the block structure, this module builds the Gramian inverse `F⁻¹`
//! (closed form, exact rationals), its inverse `F`, the scaling exponents `H`,
//! the matrix `F¹ = F − FH − HF`, the admissible level `a0`, and then solves
//! `2 a0 Θ = (D(Θ) F D(Θ) x, x)` for the controllability function `Θ(x)`.
//! The bounded feedback is `u(x) = −(½ B0ᵀ D(Θ) F D(Θ) + B0ᵀ K) x`.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use crate::error::{Error, Result};
use crate::linalg::{self, relative_gap};
use crate::model::{BlockStructure, CanonicalSystem};
use crate::rational::RationalMatrix;

/// Largest block size accepted by the Gramian construction.
pub const MAX_BLOCK_SIZE: usize = 12;

/// States with Euclidean norm below this are treated as the origin.
pub const ZERO_STATE_NORM: f64 = 1e-14;

const THETA_MIN: f64 = 1e-30;
const THETA_MAX: f64 = 1e30;
const BISECTION_REL_WIDTH: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

fn factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Closed-form `F⁻¹ᵢ` for one chain of length `n`:
/// entry `(m, j)` (one-based) is `(−1)^{m+j} / ((n−m)! (n−j)! (2n−m−j+1)(2n−m−j+2))`.
pub fn gram_inverse_block(n: usize) -> Result<RationalMatrix> {
    if n == 0 || n > MAX_BLOCK_SIZE {
        return Err(Error::InvalidInput(format!(
            "block size {n} outside 1..={MAX_BLOCK_SIZE}"
        )));
    }
    Ok(RationalMatrix::from_fn(n, n, |r, c| {
        let (m, j) = (r + 1, c + 1);
        let k = 2 * n - m - j;
        let den = factorial(n - m) * factorial(n - j) * BigInt::from((k + 1) * (k + 2));
        let num = if (m + j) % 2 == 0 { BigInt::one() } else { -BigInt::one() };
        BigRational::new(num, den)
    }))
}

/// The exact Gramian inverse, one rational block per chain.
pub fn gram_inverse(blocks: &BlockStructure) -> Result<Vec<RationalMatrix>> {
    blocks.sizes().iter().map(|&n| gram_inverse_block(n)).collect()
}

/// Exact block-wise inversion of `F⁻¹`. Every entry of every `Fᵢ` must come
/// out strictly positive; anything else means the construction is broken.
pub fn invert_gramian(inverse_blocks: &[RationalMatrix]) -> Result<Vec<RationalMatrix>> {
    inverse_blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let f = b.inverse()?;
            if !f.all_entries_positive() {
                return Err(Error::Singular(format!(
                    "block {i}: inverse Gramian has a non-positive entry"
                )));
            }
            Ok(f)
        })
        .collect()
}

/// Assemble per-block rational matrices into a dense block-diagonal `f64` matrix.
pub fn block_diagonal(blocks: &[RationalMatrix]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((at, at), (k, k)).copy_from(&b.to_f64());
        at += k;
    }
    out
}

/// Floating-point inverse of an arbitrary symmetric positive definite matrix
/// (Cholesky). Only used for cross-checks; the synthesis uses the exact path.
pub fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Diagonal of `H`: `−(2nᵢ − 2j + 1)/2` for `j = 1..nᵢ` in each block.
pub fn build_h(blocks: &BlockStructure) -> DVector<f64> {
    DVector::from_iterator(
        blocks.dim(),
        blocks
            .sizes()
            .iter()
            .flat_map(|&n| (1..=n).map(move |j| -((2 * n - 2 * j + 1) as f64) / 2.0)),
    )
}

/// Diagonal of `D(Θ) = Θ^H`.
pub fn build_d(blocks: &BlockStructure, theta: f64) -> Result<DVector<f64>> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Domain(format!("D(Θ) requires Θ > 0, got {theta}")));
    }
    Ok(build_h(blocks).map(|h| theta.powf(h)))
}

/// `F¹` entrywise: `(2nᵢ − m − j + 2) f_mj` inside each block.
pub fn f1_entrywise(f: &DMatrix<f64>, blocks: &BlockStructure) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(f.nrows(), f.ncols());
    for i in 0..blocks.count() {
        let range = blocks.range(i);
        let n = blocks.sizes()[i];
        for r in range.clone() {
            for c in range.clone() {
                let (m, j) = (r - range.start + 1, c - range.start + 1);
                out[(r, c)] = (2 * n + 2 - m - j) as f64 * f[(r, c)];
            }
        }
    }
    out
}

/// `F¹ = F − FH − HF`, cross-checked against the entrywise formula and
/// required to be positive definite.
pub fn build_f1(f: &DMatrix<f64>, blocks: &BlockStructure) -> Result<DMatrix<f64>> {
    let h = DMatrix::from_diagonal(&build_h(blocks));
    let f1 = f - f * &h - &h * f;
    let gap = relative_gap(&f1, &f1_entrywise(f, blocks));
    if gap > 1e-12 {
        return Err(Error::Singular(format!(
            "F1 formulas disagree (relative gap {gap:e})"
        )));
    }
    if !linalg::is_positive_definite(&f1) {
        return Err(Error::Singular("F1 is not positive definite".into()));
    }
    Ok(f1)
}

/// Every matrix that depends only on the block structure.
#[derive(Clone, Debug)]
pub struct Gramians {
    blocks: BlockStructure,
    inverse_exact: Vec<RationalMatrix>,
    exact: Vec<RationalMatrix>,
    finv: DMatrix<f64>,
    f: DMatrix<f64>,
    h: DVector<f64>,
    f1: DMatrix<f64>,
    f1_inv: DMatrix<f64>,
}

impl Gramians {
    pub fn new(blocks: &BlockStructure) -> Result<Self> {
        let inverse_exact = gram_inverse(blocks)?;
        let exact = invert_gramian(&inverse_exact)?;
        let finv = block_diagonal(&inverse_exact);
        let f = block_diagonal(&exact);
        let f1 = build_f1(&f, blocks)?;
        let f1_inv_blocks = exact
            .iter()
            .map(|fb| {
                let n = fb.nrows();
                RationalMatrix::from_fn(n, n, |r, c| {
                    fb.get(r, c) * BigRational::from_integer(BigInt::from(2 * n - r - c))
                })
                .inverse()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            f1_inv: block_diagonal(&f1_inv_blocks),
            blocks: blocks.clone(),
            inverse_exact,
            exact,
            finv,
            f,
            h: build_h(blocks),
            f1,
        })
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    /// `F⁻¹` blocks as exact rationals.
    pub fn inverse_exact(&self) -> &[RationalMatrix] {
        &self.inverse_exact
    }

    /// `F` blocks as exact rationals.
    pub fn exact(&self) -> &[RationalMatrix] {
        &self.exact
    }

    pub fn finv(&self) -> &DMatrix<f64> {
        &self.finv
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Diagonal of `H`.
    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn f1(&self) -> &DMatrix<f64> {
        &self.f1
    }

    /// `(F¹)⁻¹`, inverted exactly block by block.
    pub fn f1_inv(&self) -> &DMatrix<f64> {
        &self.f1_inv
    }

    /// Diagonal of `D(Θ)`.
    pub fn d(&self, theta: f64) -> Result<DVector<f64>> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Domain(format!("D(Θ) requires Θ > 0, got {theta}")));
        }
        Ok(self.h.map(|h| theta.powf(h)))
    }
}

/// Right-hand side of the `a0` admissibility bound, with spectral norms:
/// `2 / (‖F⁻¹‖ (‖B0ᵀF‖ + 2 max{c^{n1}, c} ‖B0ᵀK‖)²)`.
pub fn a0_max(gramians: &Gramians, system: &CanonicalSystem, c: f64) -> f64 {
    let n1 = system.blocks().largest() as i32;
    let finv_norm = linalg::spectral_norm(gramians.finv());
    let bf_norm = linalg::spectral_norm(&(system.b0().transpose() * gramians.f()));
    let bk_norm = linalg::spectral_norm(&system.b0t_k());
    let growth = c.powi(n1).max(c);
    2.0 / (finv_norm * (bf_norm + 2.0 * growth * bk_norm).powi(2))
}

/// Output of [`SynthesisArtifacts::control`].
#[derive(Clone, Debug, PartialEq)]
pub struct ControlEval {
    pub u: DVector<f64>,
    pub theta: f64,
    /// `false` when `Θ(x) > c`: the norm bound is not guaranteed there.
    pub in_domain: bool,
}

/// Everything the feedback law needs, fixed for a given system, `c`, `γ` and `a0`.
#[derive(Clone, Debug)]
pub struct SynthesisArtifacts {
    gramians: Gramians,
    b0t_k: DMatrix<f64>,
    control_rows: Vec<usize>,
    a0: f64,
    a0_max: f64,
    c: f64,
    gamma: f64,
}

impl SynthesisArtifacts {
    /// `a0 = None` selects the largest admissible value `a0_max(c)`.
    pub fn new(system: &CanonicalSystem, c: f64, gamma: f64, a0: Option<f64>) -> Result<Self> {
        Self::with_gramians(Gramians::new(system.blocks())?, system, c, gamma, a0)
    }

    pub fn with_gramians(
        gramians: Gramians,
        system: &CanonicalSystem,
        c: f64,
        gamma: f64,
        a0: Option<f64>,
    ) -> Result<Self> {
        if gramians.blocks() != system.blocks() {
            return Err(Error::InvalidInput("Gramians built for a different block structure".into()));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("c must be finite and > 0, got {c}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0,1), got {gamma}")));
        }
        let a0_max = a0_max(&gramians, system, c);
        let a0 = a0.unwrap_or(a0_max);
        if !(a0 > 0.0) || !a0.is_finite() {
            return Err(Error::Domain(format!("a0 must be finite and > 0, got {a0}")));
        }
        Ok(Self {
            b0t_k: system.b0t_k(),
            control_rows: system.blocks().control_rows(),
            gramians,
            a0,
            a0_max,
            c,
            gamma,
        })
    }

    pub fn gramians(&self) -> &Gramians {
        &self.gramians
    }

    pub fn blocks(&self) -> &BlockStructure {
        self.gramians.blocks()
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a0_max(&self) -> f64 {
        self.a0_max
    }

    /// Whether `a0 ≤ a0_max(c)` (up to rounding), i.e. `‖u‖ ≤ 1` is guaranteed on `Q`.
    pub fn a0_admissible(&self) -> bool {
        self.a0 <= self.a0_max * (1.0 + 1e-12)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `(g(Θ), g'(Θ))` for `g(Θ) = 2 a0 Θ − (D(Θ) F D(Θ) x, x)`.
    /// Non-finite quadratic forms (Θ far too small) report `g = −∞`.
    pub fn theta_equation(&self, x: &DVector<f64>, theta: f64) -> (f64, f64) {
        let f = self.gramians.f();
        let h = self.gramians.h();
        let y = DVector::from_iterator(x.len(), x.iter().zip(h.iter()).map(|(xi, hi)| xi * theta.powf(*hi)));
        let fy = f * &y;
        let q = y.dot(&fy);
        if !q.is_finite() {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let hy = y.component_mul(h);
        let g = 2.0 * self.a0 * theta - q;
        let dg = 2.0 * self.a0 - 2.0 * fy.dot(&hy) / theta;
        (g, dg)
    }

    /// The controllability function `Θ(x)`: unique positive root of
    /// `2 a0 Θ = (D(Θ) F D(Θ) x, x)`, with `Θ(0) = 0`.
    pub fn solve_theta(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.blocks().dim() {
            return Err(Error::InvalidInput(format!(
                "state has dimension {}, expected {}",
                x.len(),
                self.blocks().dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("state has non-finite entries".into()));
        }
        if x.norm() < ZERO_STATE_NORM {
            return Ok(0.0);
        }
        let g = |t: f64| self.theta_equation(x, t).0;

        // g < 0 for small Θ (the most singular term is a positive square) and g > 0 for large Θ.
        let (mut lo, mut hi);
        let g1 = g(1.0);
        if g1 == 0.0 {
            return Ok(1.0);
        } else if g1 < 0.0 {
            lo = 1.0;
            hi = 2.0;
            while g(hi) <= 0.0 {
                lo = hi;
                hi *= 2.0;
                if hi > THETA_MAX {
                    return Err(Error::ThetaBracket { last_probe: hi });
                }
            }
        } else {
            hi = 1.0;
            lo = 0.5;
            while g(lo) >= 0.0 {
                hi = lo;
                lo *= 0.5;
                if lo < THETA_MIN {
                    return Err(Error::ThetaBracket { last_probe: lo });
                }
            }
        }

        while hi - lo > BISECTION_REL_WIDTH * hi {
            let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }

        let mut theta = 0.5 * (lo + hi);
        for _ in 0..4 {
            let (gv, dg) = self.theta_equation(x, theta);
            if gv == 0.0 || !(dg > 0.0) {
                break;
            }
            let next = theta - gv / dg;
            if !(next >= lo && next <= hi) {
                break;
            }
            let done = (next - theta).abs() <= 4.0 * f64::EPSILON * theta;
            theta = next;
            if done {
                break;
            }
        }

        let residual = g(theta).abs() / (2.0 * self.a0 * theta);
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::ThetaResidual { theta, residual });
        }
        Ok(theta)
    }

    /// `y = D(Θ) x`.
    pub fn scaled_state(&self, x: &DVector<f64>, theta: f64) -> Result<DVector<f64>> {
        Ok(self.gramians.d(theta)?.component_mul(x))
    }

    /// Feedback `u(x) = −(½ B0ᵀ D(Θ) F D(Θ) + B0ᵀ K) x`, with `u(0) = 0`.
    pub fn control(&self, x: &DVector<f64>) -> Result<ControlEval> {
        let theta = self.solve_theta(x)?;
        self.control_at(x, theta)
    }

    /// Feedback evaluated with a given `Θ` (e.g. an integrated `θ(t)`) instead of solving for it.
    pub fn control_at(&self, x: &DVector<f64>, theta: f64) -> Result<ControlEval> {
        let r = self.control_rows.len();
        if theta == 0.0 {
            return Ok(ControlEval {
                u: DVector::zeros(r),
                theta,
                in_domain: true,
            });
        }
        let d = self.gramians.d(theta)?;
        let y = d.component_mul(x);
        let fy = self.gramians.f() * &y;
        let kx = &self.b0t_k * x;
        let u = DVector::from_fn(r, |i, _| {
            let s = self.control_rows[i];
            -(0.5 * d[s] * fy[s] + kx[i])
        });
        Ok(ControlEval {
            u,
            theta,
            in_domain: theta <= self.c * (1.0 + 1e-12),
        })
    }
}

/// Exact closed form for a single block of size one: `Θ = |x| / √a0`.
pub fn theta_scalar(x: f64, a0: f64) -> f64 {
    x.abs() / a0.sqrt()
}

/// Check used by tests and the verifier: `F · F⁻¹ = I` exactly on the rational path.
pub fn exact_product_is_identity(g: &Gramians) -> bool {
    g.inverse_exact()
        .iter()
        .zip(g.exact())
        .all(|(a, b)| a.mul(b) == RationalMatrix::identity(a.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_b0;
    use crate::rational::ratio;

    fn blocks(s: &[usize]) -> BlockStructure {
        BlockStructure::new(s.to_vec()).unwrap()
    }

    /// Independent oracle: midpoint-rule quadrature of
    /// ∫₀¹ (1−t) e^{−A t} b bᵀ e^{−Aᵀ t} dt for a single chain, using the
    /// finite series for e^{−A t} (A nilpotent).
    fn quadrature_gram_inverse(n: usize, steps: usize) -> DMatrix<f64> {
        let a = crate::model::build_a0(&blocks(&[n]));
        let b = build_b0(&blocks(&[n]));
        let mut acc = DMatrix::zeros(n, n);
        let h = 1.0 / steps as f64;
        for k in 0..steps {
            let t = (k as f64 + 0.5) * h;
            let mut e = DMatrix::identity(n, n);
            let mut term = DMatrix::identity(n, n);
            for p in 1..n {
                term = &term * &a * (-t / p as f64);
                e += &term;
            }
            let v = &e * &b;
            acc += (&v * v.transpose()) * ((1.0 - t) * h);
        }
        acc
    }

    #[test]
    fn gram_inverse_small_blocks() {
        assert_eq!(*gram_inverse_block(1).unwrap().get(0, 0), ratio(1, 2));
        let g2 = gram_inverse_block(2).unwrap();
        assert_eq!(*g2.get(0, 0), ratio(1, 12));
        assert_eq!(*g2.get(0, 1), ratio(-1, 6));
        assert_eq!(*g2.get(1, 0), ratio(-1, 6));
        assert_eq!(*g2.get(1, 1), ratio(1, 2));
        for n in 1..=5 {
            let exact = gram_inverse_block(n).unwrap().to_f64();
            let quad = quadrature_gram_inverse(n, 20_000);
            assert!((exact - quad).amax() < 1e-8, "n = {n}");
        }
        assert!(gram_inverse_block(13).is_err());
        assert!(gram_inverse_block(0).is_err());
    }

    #[test]
    fn gramian_for_two_double_integrators() {
        let g = Gramians::new(&blocks(&[2, 2])).unwrap();
        #[rustfmt::skip]
        let expect = DMatrix::from_row_slice(4, 4, &[
            36.0, 12.0, 0.0, 0.0,
            12.0, 6.0, 0.0, 0.0,
            0.0, 0.0, 36.0, 12.0,
            0.0, 0.0, 12.0, 6.0,
        ]);
        assert_eq!(*g.f(), expect);
        assert!(exact_product_is_identity(&g));
        assert_eq!(*g.exact()[0].get(0, 0), ratio(36, 1));
        assert_eq!(g.f1().view((0, 0), (2, 2)), DMatrix::from_row_slice(2, 2, &[144.0, 36.0, 36.0, 12.0]));
    }

    #[test]
    fn scalar_gramian() {
        let g = Gramians::new(&blocks(&[1])).unwrap();
        assert_eq!(g.f()[(0, 0)], 2.0);
        assert_eq!(g.f1()[(0, 0)], 4.0);
        let f = invert_spd(&DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((f[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_blocks_are_entrywise_positive() {
        for n in 1..=MAX_BLOCK_SIZE {
            let f = invert_gramian(&[gram_inverse_block(n).unwrap()]).unwrap();
            assert!(f[0].all_entries_positive(), "n = {n}");
            assert!(f[0].is_symmetric());
        }
        // a sign-flipped block must be rejected
        let bad = RationalMatrix::from_fn(2, 2, |r, c| if r == c { ratio(1, 1) } else { ratio(1, 2) });
        assert!(invert_gramian(&[bad]).is_err());
    }

    #[test]
    fn h_and_d() {
        let h = build_h(&blocks(&[2]));
        assert_eq!(h.as_slice(), &[-1.5, -0.5]);
        let d = build_d(&blocks(&[2, 2]), 1.0).unwrap();
        assert_eq!(d, DVector::from_element(4, 1.0));
        let d = build_d(&blocks(&[2, 2]), 4.0).unwrap();
        assert_eq!(d.as_slice(), &[0.125, 0.5, 0.125, 0.5]);
        assert!(build_d(&blocks(&[2]), 0.0).is_err());
        assert!(build_d(&blocks(&[2]), -1.0).is_err());
    }

    #[test]
    fn f1_both_routes() {
        let f = DMatrix::from_row_slice(2, 2, &[36.0, 12.0, 12.0, 6.0]);
        let b = blocks(&[2]);
        let f1 = build_f1(&f, &b).unwrap();
        assert_eq!(f1, DMatrix::from_row_slice(2, 2, &[144.0, 36.0, 36.0, 12.0]));
        assert_eq!(f1_entrywise(&f, &b), f1);
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 12.0, 12.0, 1.0]);
        assert!(build_f1(&not_pd, &b).is_err());
    }

    #[test]
    fn a0_max_unforced_matches_constants() {
        let b = blocks(&[2, 2]);
        let sys = CanonicalSystem::unforced(b.clone());
        let g = Gramians::new(&b).unwrap();
        let finv_norm = linalg::spectral_norm(g.finv());
        // λmax of [[1/12,-1/6],[-1/6,1/2]] = (7/12 + sqrt(49/144 - 4/72))/2
        let lam = (7.0 / 12.0 + (49.0f64 / 144.0 - 4.0 / 72.0).sqrt()) / 2.0;
        assert!((finv_norm - lam).abs() < 1e-14);
        assert!((2.0 / finv_norm - 3.58).abs() < 0.01);
        let bf = linalg::spectral_norm(&(sys.b0().transpose() * g.f()));
        assert!((bf - 180f64.sqrt()).abs() < 1e-12);
        let a0 = a0_max(&g, &sys, 3.0);
        assert!((a0 - 2.0 / (lam * 180.0)).abs() < 1e-15);
        assert!((a0 - 0.0199).abs() < 1e-4);
    }

    #[test]
    fn theta_at_origin_and_scalar_case() {
        let sys = CanonicalSystem::unforced(blocks(&[1]));
        let art = SynthesisArtifacts::new(&sys, 1.0, 0.5, Some(0.3)).unwrap();
        assert_eq!(art.solve_theta(&DVector::from_element(1, 0.0)).unwrap(), 0.0);
        assert_eq!(art.solve_theta(&DVector::from_element(1, 1e-15)).unwrap(), 0.0);
        for &x in &[1e-9, 0.01, -0.7, 3.0, 1e6] {
            let t = art.solve_theta(&DVector::from_element(1, x)).unwrap();
            let expect = theta_scalar(x, 0.3);
            assert!((t - expect).abs() <= 1e-12 * expect, "x={x}: {t} vs {expect}");
        }
        assert!(art.solve_theta(&DVector::from_element(2, 1.0)).is_err());
    }

    #[test]
    fn double_integrator_control_formula() {
        let sys = CanonicalSystem::unforced(blocks(&[2]));
        let art = SynthesisArtifacts::new(&sys, 1.0, 0.5, None).unwrap();
        let x = DVector::from_vec(vec![0.03, -0.02]);
        let ev = art.control(&x).unwrap();
        let t = ev.theta;
        let expect = -6.0 * x[0] / (t * t) - 3.0 * x[1] / t;
        assert!((ev.u[0] - expect).abs() < 1e-12 * expect.abs().max(1.0));
        assert_eq!(art.control(&DVector::zeros(2)).unwrap().u, DVector::zeros(1));
    }

    #[test]
    fn artifact_validation() {
        let sys = CanonicalSystem::unforced(blocks(&[2]));
        assert!(SynthesisArtifacts::new(&sys, 0.0, 0.5, None).is_err());
        assert!(SynthesisArtifacts::new(&sys, 1.0, 1.0, None).is_err());
        assert!(SynthesisArtifacts::new(&sys, 1.0, 0.5, Some(-1.0)).is_err());
        let big = SynthesisArtifacts::new(&sys, 1.0, 0.5, Some(1.0)).unwrap();
        assert!(!big.a0_admissible());
    }
}

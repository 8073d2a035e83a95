//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest singular value (operator 2-norm).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Max-abs entrywise distance between `a` and `b`, relative to the larger of their max-abs entries.
pub fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax());
    if scale == 0.0 {
        return 0.0;
    }
    (a - b).amax() / scale
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    m.is_square() && relative_gap(m, &m.transpose()) <= rel_tol
}

/// Entrywise absolute value `|M|`.
pub fn abs(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(f64::abs)
}

const SCHUR_MAX_ITER: usize = 10_000;

/// `ρ(M) = max |λ|` over the spectrum, from a real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("spectral radius: non-finite entry".into()));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::NoConvergence {
            method: "real Schur (QR) iteration",
            iterations: SCHUR_MAX_ITER,
            last_change: f64::NAN,
        })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Result of a power iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEstimate {
    pub radius: f64,
    pub iterations: usize,
}

/// Perron root of an entrywise nonnegative matrix by power iteration on
/// `M + I` (primitive whenever `M` is irreducible; same dominant eigenvector).
pub fn perron_root(m: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> Result<PowerEstimate> {
    if !m.is_square() || m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "power iteration requires a square nonnegative matrix".into(),
        ));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(PowerEstimate {
            radius: 0.0,
            iterations: 0,
        });
    }
    let shifted = m + DMatrix::identity(n, n);
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = f64::INFINITY;
    let mut change = f64::INFINITY;
    let mut stable = 0;
    for it in 1..=max_iter {
        let w = &shifted * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(PowerEstimate {
                radius: 0.0,
                iterations: it,
            });
        }
        change = (norm - estimate).abs();
        estimate = norm;
        v = w / norm;
        if change <= rel_tol * 1e-2 * estimate {
            stable += 1;
            if stable >= 5 {
                return Ok(PowerEstimate {
                    radius: estimate - 1.0,
                    iterations: it,
                });
            }
        } else {
            stable = 0;
        }
    }
    Err(Error::NoConvergence {
        method: "power iteration",
        iterations: max_iter,
        last_change: change,
    })
}

/// Eigenvalues (ascending) of the symmetric-definite pencil `S v = λ P v`,
/// i.e. the spectrum of `P⁻¹ S`. `P` must be symmetric positive definite.
pub fn generalized_eigenvalues(s: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("pencil matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ S L⁻ᵀ
    let y = l
        .solve_lower_triangular(s)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let mut eig: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Whether `m` is symmetric positive definite (Cholesky succeeds).
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, 1e-12) && m.clone().cholesky().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_of_simple_matrices() {
        assert!((spectral_radius(&DMatrix::identity(5, 5)).unwrap() - 1.0).abs() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]));
        assert!((spectral_radius(&d).unwrap() - 3.0).abs() < 1e-14);
        // rotation: complex pair of modulus 1
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-14);
        assert!(spectral_radius(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).is_err());
    }

    #[test]
    fn power_iteration_agrees_with_schur() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.5, 0.0, 3.0, 1.0, 1.0, 1.0]);
        let a = spectral_radius(&m).unwrap();
        let b = perron_root(&m, 1e-12, 100_000).unwrap().radius;
        assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
        // periodic (permutation) matrix: plain power iteration would oscillate
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((perron_root(&p, 1e-12, 10_000).unwrap().radius - 1.0).abs() < 1e-12);
        assert_eq!(perron_root(&DMatrix::zeros(3, 3), 1e-12, 100).unwrap().radius, 0.0);
        assert!(perron_root(&DMatrix::from_element(2, 2, -1.0), 1e-12, 10).is_err());
    }

    #[test]
    fn pencil_matches_direct_product() {
        let p = DMatrix::from_row_slice(2, 2, &[144.0, 36.0, 36.0, 12.0]);
        let s = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, 0.5]);
        let eig = generalized_eigenvalues(&s, &p).unwrap();
        let direct = (p.clone().try_inverse().unwrap() * &s).complex_eigenvalues();
        let mut d: Vec<f64> = direct.iter().map(|z| z.re).collect();
        d.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&d) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(generalized_eigenvalues(&s, &(-p)).is_err());
    }
}

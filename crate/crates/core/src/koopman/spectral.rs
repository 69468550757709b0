//! Eigen-decomposition of a fitted Koopman matrix and the mode expansion
//! of the pose readout.
//!
//! K has rank at most the number of retained singular values of G, so its
//! spectrum is a block of exact zeros plus the eigenvalues of K restricted to
//! its range. Writing `K = U·M` with `U` an orthonormal range basis, every
//! eigenpair `(λ, ζ)` of `M·U` with `λ ≠ 0` gives `K·(Uζ) = λ·Uζ`, and the
//! matching left eigenvector is `w* = z*·M / λ` with `z*` the row of `Z⁻¹`.
//! The zero block contributes nothing to `Ψ(x)·K`, so it is reported only as
//! a count.

use nalgebra::{Complex, DMatrix, DVector};

use super::dictionary::{LIFTED_DIM, LINEAR_INDICES};
use super::model::KoopmanModel;
use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Singular values of K below this fraction of the largest span its null space.
const RANGE_TOL: f64 = 1e-12;
const SCHUR_EPS: f64 = f64::EPSILON;
const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Nonzero eigenvalues λ_n.
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors ξ_n as columns, 125 × n, unit norm.
    pub right: DMatrix<C64>,
    /// Left eigenvectors w_n* as rows, n × 125, with `w_n*·ξ_m = δ_nm`.
    pub left: DMatrix<C64>,
    /// Modes `v_n = (w_n*·B)ᵀ` as rows, n × 3, B selecting the readout.
    /// Empty unless the matrix is a 125 × 125 Koopman matrix.
    pub modes: DMatrix<C64>,
    /// Dimension of the null space of K, i.e. the count of zero eigenvalues.
    pub null_dim: usize,
}

impl SpectralDecomposition {
    /// Decomposes `model`'s K on a range of dimension at most the model's
    /// retained rank; the remaining singular values of K are roundoff from
    /// the truncated pseudoinverse.
    pub fn of(model: &KoopmanModel) -> Result<Self> {
        decompose_with_rank(model.k(), Some(model.rank()))
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `φ_n(θ) = Ψ(θ)·ξ_n` for every retained eigenpair.
    pub fn eigenfunctions(&self, model: &KoopmanModel, theta: &[f64; 3]) -> Vec<C64> {
        let psi = model.lift_input(theta);
        self.right
            .column_iter()
            .map(|xi| {
                xi.iter()
                    .zip(psi.iter())
                    .map(|(x, p)| x * *p)
                    .sum()
            })
            .collect()
    }

    /// Readout rebuilt from `Σ λ_n φ_n(θ) v_n`, unscaled like
    /// [`KoopmanModel::predict_raw`].
    pub fn reconstruct(&self, model: &KoopmanModel, theta: &[f64; 3]) -> [f64; 3] {
        let phi = self.eigenfunctions(model, theta);
        let mut scaled = [0.0; 3];
        for (d, s) in scaled.iter_mut().enumerate() {
            *s = phi
                .iter()
                .zip(self.eigenvalues.iter())
                .enumerate()
                .map(|(n, (f, l))| l * f * self.modes[(n, d)])
                .sum::<C64>()
                .re;
        }
        model.output_scaling().invert(&scaled)
    }

    /// `max_n ‖K·ξ_n − λ_n·ξ_n‖` with unit-norm ξ_n.
    pub fn max_residual(&self, k: &DMatrix<f64>) -> f64 {
        let kc = k.map(|v| C64::new(v, 0.0));
        self.right
            .column_iter()
            .zip(self.eigenvalues.iter())
            .map(|(xi, l)| (&kc * xi - xi * *l).norm())
            .fold(0.0, f64::max)
    }
}

pub fn decompose(k: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    decompose_with_rank(k, None)
}

/// As [`decompose`], keeping at most `max_rank` range directions.
pub fn decompose_with_rank(k: &DMatrix<f64>, max_rank: Option<usize>) -> Result<SpectralDecomposition> {
    let n = k.nrows();
    if n != k.ncols() || n == 0 {
        return Err(Error::EigenFailure("matrix must be square and nonempty".into()));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    let svd = k
        .clone()
        .try_svd(true, false, SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::EigenFailure("SVD did not converge".into()))?;
    let u_full = svd.u.as_ref().expect("u requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = RANGE_TOL * sigma_max;
    let mut range: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] > cutoff).collect();
    range.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    range.truncate(max_rank.unwrap_or(n));
    let r = range.len();
    if r == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            right: DMatrix::zeros(n, 0),
            left: DMatrix::zeros(0, n),
            modes: DMatrix::zeros(0, if n == LIFTED_DIM { LINEAR_INDICES.len() } else { 0 }),
            null_dim: n,
        });
    }
    let u = u_full.select_columns(&range);
    // K = U·M, since U spans the column space of K
    let m = u.transpose() * k;
    let mut reduced = &m * &u;
    // QR iteration stalls on near-scalar matrices such as an identity fit;
    // removing the mean eigenvalue avoids that and leaves eigenvectors alone.
    let shift = reduced.trace() / r as f64;
    for i in 0..r {
        reduced[(i, i)] -= shift;
    }
    let reduced = reduced.map(|v| C64::new(v, 0.0));

    let schur = reduced
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::EigenFailure("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let z = &q * triangular_eigenvectors(&t);
    let z_inv = z
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenFailure("eigenvectors are not independent".into()))?;
    let eigenvalues: Vec<C64> = (0..r).map(|i| t[(i, i)] + shift).collect();
    if eigenvalues.iter().any(|l| l.norm() <= RANGE_TOL * sigma_max) {
        return Err(Error::EigenFailure("zero eigenvalue on the range of K".into()));
    }

    let uc = u.map(|v| C64::new(v, 0.0));
    let mc = m.map(|v| C64::new(v, 0.0));
    let mut right = &uc * &z;
    let mut left = &z_inv * &mc;
    for (i, l) in eigenvalues.iter().enumerate() {
        // unit-norm ξ, with w rescaled to keep w*ξ = 1
        let norm = right.column(i).norm();
        right.column_mut(i).scale_mut(1.0 / norm);
        let factor = C64::new(norm, 0.0) / *l;
        left.row_mut(i).iter_mut().for_each(|v| *v *= factor);
    }
    let modes = if n == LIFTED_DIM {
        left.select_columns(&LINEAR_INDICES)
    } else {
        DMatrix::zeros(r, 0)
    };
    Ok(SpectralDecomposition {
        eigenvalues,
        right,
        left,
        modes,
        null_dim: n - r,
    })
}

/// Eigenvectors of an upper-triangular matrix as columns, by back
/// substitution. Near-equal diagonal entries are separated by a small shift,
/// as in LAPACK's `trevc`.
fn triangular_eigenvectors(t: &DMatrix<C64>) -> DMatrix<C64> {
    let n = t.nrows();
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * scale;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut y = DVector::<C64>::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let s: C64 = (j + 1..=k).map(|m| t[(j, m)] * y[m]).sum();
            let mut d = t[(j, j)] - lambda;
            if d.norm() < small {
                d = C64::new(small, 0.0);
            }
            y[j] = -s / d;
        }
        let norm = y.norm();
        out.set_column(k, &(y / C64::new(norm, 0.0)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_spectrum() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5, 0.0]));
        let s = decompose(&k).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.null_dim, 1);
        let mut re: Vec<f64> = s.eigenvalues.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 0.5).abs() < 1e-14 && (re[1] - 2.0).abs() < 1e-14);
        assert!(s.max_residual(&k) < 1e-14);
    }

    #[test]
    fn rotation_has_conjugate_pair() {
        let (c, sn) = (0.3f64.cos(), 0.3f64.sin());
        let k = DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]);
        let s = decompose(&k).unwrap();
        assert_eq!(s.len(), 2);
        for l in &s.eigenvalues {
            assert!((l.norm() - 1.0).abs() < 1e-14);
            assert!((l.im.abs() - 0.3f64.sin()).abs() < 1e-14);
        }
        assert!(s.max_residual(&k) < 1e-14);
    }

    #[test]
    fn left_and_right_are_biorthonormal() {
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.5, -1.0, 3.0, 0.0, 1.0, 0.25]);
        let s = decompose(&k).unwrap();
        let prod = &s.left * &s.right;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
        let kc = k.map(|v| C64::new(v, 0.0));
        for (i, l) in s.eigenvalues.iter().enumerate() {
            let w = s.left.row(i);
            assert!((&w * &kc - w * *l).norm() < 1e-12);
        }
    }

    #[test]
    fn jordan_chain_on_the_range_is_refused() {
        let k = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        // the range of K is span(e1, e3) and K·e1 = 0, so the range carries
        // a generalized eigenvector and the expansion cannot be formed
        assert!(matches!(decompose(&k), Err(Error::EigenFailure(_))));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decompose(&DMatrix::zeros(2, 3)).is_err());
        let mut k = DMatrix::identity(2, 2);
        k[(0, 1)] = f64::NAN;
        assert!(decompose(&k).is_err());
    }
}

//! Dense linear-algebra kernels: Householder QR, full-row-rank
//! pseudoinverse, kernel bases and row-space projectors.
//!
//! Everything here is deterministic: no pivoting is randomized and identical
//! inputs produce bit-identical outputs.

use nalgebra::{DMatrix, DVector};

use crate::error::NumericError;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance used for rank decisions, scaled by the input norm.
pub const RANK_TOL: f64 = 1e-10;

/// Householder QR factorization `M = Q R` with a full square `Q`.
///
/// `Q` is `rows × rows` orthogonal and `R` is `rows × cols` upper triangular.
pub fn qr_factor(m: &Matrix) -> (Matrix, Matrix) {
    let (rows, cols) = m.shape();
    let mut r = m.clone();
    let mut q = Matrix::identity(rows, rows);
    let steps = rows.saturating_sub(1).min(cols);
    for k in 0..steps {
        let mut v: Vector = r.view((k, k), (rows - k, 1)).column(0).into_owned();
        let alpha = v.norm();
        if alpha == 0.0 {
            continue;
        }
        // reflect onto -sign(x0)·‖x‖·e1 to avoid cancellation
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        let scale = 2.0 / vnorm2;
        for j in k..cols {
            let mut dot = 0.0;
            for i in 0..(rows - k) {
                dot += v[i] * r[(k + i, j)];
            }
            let f = scale * dot;
            for i in 0..(rows - k) {
                r[(k + i, j)] -= f * v[i];
            }
        }
        // accumulate Q = Q · H_k
        for i in 0..rows {
            let mut dot = 0.0;
            for l in 0..(rows - k) {
                dot += q[(i, k + l)] * v[l];
            }
            let f = scale * dot;
            for l in 0..(rows - k) {
                q[(i, k + l)] -= f * v[l];
            }
        }
        for i in (k + 1)..rows {
            r[(i, k)] = 0.0;
        }
    }
    (q, r)
}

fn check_finite(m: &Matrix) -> Result<(), NumericError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericError::NonFinite)
    }
}

/// Numerical rank of `m` from the singular values, relative to `RANK_TOL·‖m‖`.
pub fn numerical_rank(m: &Matrix) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = RANK_TOL * smax.max(1.0);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Row-rank check through the QR of `Mᵀ`: `|R_kk|` must stay above
/// `RANK_TOL·‖M‖` for every row of `M`.
fn ensure_full_row_rank(m: &Matrix) -> Result<(), NumericError> {
    let (rows, cols) = m.shape();
    if rows > cols {
        return Err(NumericError::RankDeficient { rank: cols, rows });
    }
    let norm = m.norm().max(f64::MIN_POSITIVE);
    let (_, r) = qr_factor(&m.transpose());
    let tol = RANK_TOL * norm;
    let rank = (0..rows).filter(|&k| r[(k, k)].abs() > tol).count();
    if rank < rows {
        return Err(NumericError::RankDeficient { rank, rows });
    }
    Ok(())
}

/// `M† = Mᵀ(MMᵀ)⁻¹` for a matrix with full row rank, via a Cholesky solve of
/// the Gram matrix.
pub fn pseudoinverse_full_row_rank(m: &Matrix) -> Result<Matrix, NumericError> {
    check_finite(m)?;
    ensure_full_row_rank(m)?;
    let gram = m * m.transpose();
    let chol = gram.cholesky().ok_or(NumericError::RankDeficient {
        rank: 0,
        rows: m.nrows(),
    })?;
    // (MMᵀ)⁻¹ M, then transpose
    let x = chol.solve(m);
    Ok(x.transpose())
}

/// Orthonormal basis of `ker(M)` as a `T × (T − rows)` matrix, taken from the
/// trailing columns of the full Householder `Q` of `Mᵀ`.
pub fn kernel_basis(m: &Matrix) -> Result<Matrix, NumericError> {
    check_finite(m)?;
    ensure_full_row_rank(m)?;
    let (rows, t) = m.shape();
    let (q, _) = qr_factor(&m.transpose());
    Ok(q.columns(rows, t - rows).into_owned())
}

/// Orthogonal projector `P_M = Mᵀ(MMᵀ)⁻¹M` onto the row space of `M`.
pub fn row_space_projector(m: &Matrix) -> Result<Matrix, NumericError> {
    let pinv = pseudoinverse_full_row_rank(m)?;
    let p = &pinv * m;
    // symmetrize away rounding
    Ok((&p + p.transpose()) * 0.5)
}

/// Column-major vectorization `vec(X)`.
pub fn vec_of(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    Matrix::from_column_slice(rows, cols, v)
}

/// `A ⊗ B`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Symmetric positive semidefinite square root factor: returns `S` with
/// `S Sᵀ = A` keeping only the strictly positive eigen-directions.
pub fn psd_factor(a: &Matrix) -> Matrix {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    let mut s = Matrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        for r in 0..n {
            s[(r, c)] = eig.eigenvectors[(r, i)] * scale;
        }
    }
    s
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Serde adapter storing a vector as a plain number list.
pub mod serde_vector {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Vector;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serde adapter storing a matrix as a row-major list of rows.
pub mod serde_matrix {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use super::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<f64>>()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    fn max_abs(m: &Matrix) -> f64 {
        m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn pinv_examples() {
        let p = pseudoinverse_full_row_rank(&mat(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        assert!(max_abs(&(p - mat(2, 2, &[1.0, 0.0, 0.0, 0.5]))) < 1e-14);
        let p = pseudoinverse_full_row_rank(&mat(1, 2, &[1.0, 1.0])).unwrap();
        assert!(max_abs(&(p - mat(2, 1, &[0.5, 0.5]))) < 1e-14);
        let p = pseudoinverse_full_row_rank(&Matrix::identity(3, 3)).unwrap();
        assert!(max_abs(&(p - Matrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn pinv_rejects_rank_deficiency() {
        let m = mat(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            pseudoinverse_full_row_rank(&m),
            Err(NumericError::RankDeficient { rank: 1, rows: 2 })
        ));
        let tall = mat(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(pseudoinverse_full_row_rank(&tall).is_err());
    }

    #[test]
    fn kernel_examples() {
        let k = kernel_basis(&mat(1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(k.shape(), (2, 1));
        let s = 1.0 / 2f64.sqrt();
        assert!((k[(0, 0)].abs() - s).abs() < 1e-14);
        assert!((k[(0, 0)] + k[(1, 0)]).abs() < 1e-14);

        let k = kernel_basis(&Matrix::identity(2, 2)).unwrap();
        assert_eq!(k.shape(), (2, 0));

        let m = mat(1, 3, &[1.0, 0.0, 0.0]);
        let k = kernel_basis(&m).unwrap();
        assert_eq!(k.shape(), (3, 2));
        assert!(max_abs(&(&m * &k)) < 1e-14);
        assert!(max_abs(&(k.transpose() * &k - Matrix::identity(2, 2))) < 1e-14);
        assert!(k.row(0).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn projector_examples() {
        let p = row_space_projector(&mat(1, 2, &[1.0, 0.0])).unwrap();
        assert!(max_abs(&(p - mat(2, 2, &[1.0, 0.0, 0.0, 0.0]))) < 1e-14);
        let p = row_space_projector(&mat(1, 2, &[1.0, 1.0])).unwrap();
        assert!(max_abs(&(p - mat(2, 2, &[0.5, 0.5, 0.5, 0.5]))) < 1e-14);
        let p = row_space_projector(&Matrix::identity(2, 2)).unwrap();
        assert!(max_abs(&(p - Matrix::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn qr_examples() {
        let (q, r) = qr_factor(&Matrix::identity(2, 2));
        assert!(max_abs(&(&q * &r - Matrix::identity(2, 2))) < 1e-14);
        assert!((r[(0, 0)].abs() - 1.0).abs() < 1e-14);
        let swap = mat(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (q, r) = qr_factor(&swap);
        assert!(max_abs(&(&q * &r - &swap)) < 1e-14);
        assert!((r[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((r[(1, 1)].abs() - 1.0).abs() < 1e-14);
        assert!(r[(1, 0)] == 0.0);
    }

    #[test]
    fn random_factorizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rows = rng.random_range(1..5);
            let t = rows + rng.random_range(0..6);
            let m = Matrix::from_fn(rows, t, |_, _| rng.random_range(-1.0..1.0));
            let norm = m.norm();
            let (q, r) = qr_factor(&m);
            assert!(max_abs(&(q.transpose() * &q - Matrix::identity(rows, rows))) < 1e-12);
            assert!(max_abs(&(&q * &r - &m)) < 1e-10 * norm.max(1.0));
            for i in 0..rows {
                for j in 0..i.min(t) {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }

            let pinv = pseudoinverse_full_row_rank(&m).unwrap();
            assert!(max_abs(&(&m * &pinv - Matrix::identity(rows, rows))) < 1e-8);
            let p = row_space_projector(&m).unwrap();
            assert!(max_abs(&(&p * &p - &p)) < 1e-8);
            assert!((p.trace() - rows as f64).abs() < 1e-8);
            assert!(max_abs(&(m.transpose() * pinv.transpose() - &p)) < 1e-8);

            let k = kernel_basis(&m).unwrap();
            assert_eq!(k.ncols(), t - rows);
            assert!(max_abs(&(&m * &k)) < 1e-10);
            assert!(max_abs(&(k.transpose() * &k - Matrix::identity(t - rows, t - rows))) < 1e-10);
            let mut full = Matrix::zeros(t, t);
            full.columns_mut(0, rows).copy_from(&m.transpose());
            full.columns_mut(rows, t - rows).copy_from(&k);
            assert_eq!(numerical_rank(&full), t);
        }
    }

    #[test]
    fn deterministic_bits() {
        let m = mat(2, 4, &[0.3, -1.2, 2.0, 0.7, 1.1, 0.4, -0.9, 0.25]);
        let a = kernel_basis(&m).unwrap();
        let b = kernel_basis(&m).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn vec_roundtrip_and_kron() {
        let m = mat(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = vec_of(&m);
        assert_eq!(v.as_slice(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(unvec(v.as_slice(), 2, 3), m);
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        let a = mat(2, 2, &[1.0, -1.0, 0.5, 2.0]);
        let b = mat(3, 1, &[0.2, -0.4, 1.0]);
        let lhs = vec_of(&(&a * &m * &b));
        let rhs = kron(&b.transpose(), &a) * vec_of(&m);
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let g = mat(2, 3, &[1.0, 2.0, 0.0, 0.5, -1.0, 3.0]);
        let a = &g * g.transpose();
        let s = psd_factor(&a);
        assert!(max_abs(&(&s * s.transpose() - a)) < 1e-12);
    }
}

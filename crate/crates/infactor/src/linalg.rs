//! Small dense linear algebra kernels.
//!
//! The matrices in this model are modest (p up to a few hundred, H a few
//! dozen), so an in-crate Cholesky and Jacobi eigensolver keep the whole
//! numeric core generic over the scalar type without external LAPACK
//! bindings.

use crate::error::{Error, Result};
use crate::scalar::Real;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Real>(a: &ArrayView2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky requires a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::LinearAlgebra(format!(
                "cholesky failed at pivot {j}: non-positive diagonal {d}"
            )));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Cholesky with escalating diagonal jitter on failure.
///
/// Retries with jitter 1e-10, 1e-8, 1e-6 (relative to the mean diagonal)
/// before giving up; returns the factor and the jitter that was used.
pub fn cholesky_jittered<T: Real>(a: &ArrayView2<T>) -> Result<(Array2<T>, f64)> {
    if let Ok(l) = cholesky(a) {
        return Ok((l, 0.0));
    }
    let n = a.nrows();
    let mean_diag = (0..n)
        .map(|i| a[(i, i)].abs())
        .fold(T::zero(), |x, y| x + y)
        / T::from_usize(n.max(1));
    let scale = if mean_diag > T::zero() { mean_diag } else { T::one() };
    for &jit in &[1e-10, 1e-8, 1e-6] {
        let mut b = a.to_owned();
        for i in 0..n {
            b[(i, i)] += scale * T::from_f64(jit);
        }
        if let Ok(l) = cholesky(&b.view()) {
            return Ok((l, jit));
        }
    }
    Err(Error::LinearAlgebra(
        "cholesky failed even with 1e-6 diagonal jitter".to_string(),
    ))
}

/// Solve L x = b with L lower triangular.
pub fn solve_lower<T: Real>(l: &ArrayView2<T>, b: &ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve Lᵀ x = b with L lower triangular.
pub fn solve_lower_transpose<T: Real>(l: &ArrayView2<T>, b: &ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve (L Lᵀ) x = b given the Cholesky factor L.
pub fn chol_solve<T: Real>(l: &ArrayView2<T>, b: &ArrayView1<T>) -> Array1<T> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, &y.view())
}

/// Inverse of an SPD matrix from its Cholesky factor.
pub fn chol_inverse<T: Real>(l: &ArrayView2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut inv = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<T>::zeros(n);
        e[j] = T::one();
        let col = chol_solve(l, &e.view());
        inv.column_mut(j).assign(&col);
    }
    // Exact symmetry by averaging.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (inv[(i, j)] + inv[(j, i)]) / T::from_f64(2.0);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    inv
}

/// log-determinant of an SPD matrix from its Cholesky factor.
pub fn chol_ln_det<T: Real>(l: &ArrayView2<T>) -> T {
    let two = T::from_f64(2.0);
    (0..l.nrows()).map(|i| l[(i, i)].ln()).fold(T::zero(), |a, b| a + b) * two
}

/// Draw from N(mean, P⁻¹) given the Cholesky factor L of the precision P.
///
/// Uses x = mean + L⁻ᵀ ξ with ξ standard normal.
pub fn sample_mvn_from_precision_chol<T: Real, R: Rng + ?Sized>(
    mean: &ArrayView1<T>,
    l_precision: &ArrayView2<T>,
    rng: &mut R,
) -> Array1<T> {
    let n = mean.len();
    let z = Array1::from_iter((0..n).map(|_| T::std_normal(rng)));
    let u = solve_lower_transpose(l_precision, &z.view());
    mean + &u
}

/// Quadratic form xᵀ A x.
pub fn quad_form<T: Real>(a: &ArrayView2<T>, x: &ArrayView1<T>) -> T {
    let ax = a.dot(x);
    x.dot(&ax)
}

/// Force exact symmetry by averaging with the transpose.
pub fn symmetrize<T: Real>(a: &mut Array2<T>) {
    let n = a.nrows();
    let half = T::from_f64(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a[(i, j)] + a[(j, i)]) * half;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns (eigenvalues, eigenvectors) with eigenvectors in columns,
/// eigenvalues sorted descending.
pub fn symmetric_eigen<T: Real>(a: &ArrayView2<T>, max_sweeps: usize) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<T>::eye(n);
    let tol = T::from_f64(1e-14);

    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let norm = (0..n).map(|i| m[(i, i)] * m[(i, i)]).fold(off, |x, y| x + y);
        if off <= tol * tol * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let tau = (aqq - app) / (T::from_f64(2.0) * apq);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        m[(j, j)]
            .partial_cmp(&m[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = Array1::from_iter(idx.iter().map(|&i| m[(i, i)]));
    let mut vecs = Array2::<T>::zeros((n, n));
    for (new_col, &old_col) in idx.iter().enumerate() {
        vecs.column_mut(new_col).assign(&v.column(old_col));
    }
    (vals, vecs)
}

//! Dense linear-algebra helpers shared by the geometric modules.
//!
//! Everything here works on `DMatrix<f64>` and goes through nalgebra's SVD,
//! padded whenever a full orthonormal basis is needed.

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

/// Convergence thresholds tried in turn by [`checked_svd`].
const SVD_EPS: [f64; 4] = [f64::EPSILON, 1e-15, 1e-14, 1e-13];
const SVD_MAX_ITER: usize = 10_000;
const SVD_RECONSTRUCTION_TOL: f64 = 1e-12;

/// Full SVD whose reconstruction `U Σ Vᴴ` is verified against `a`.
///
/// nalgebra's default stopping rule occasionally returns a factorization that
/// does not reproduce its input (seen on rank-one averaging projectors), so
/// several thresholds are tried and the first faithful one is kept.
pub fn checked_svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> SVD<T, Dyn, Dyn> {
    let scale = a.camax().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, SVD<T, Dyn, Dyn>)> = None;
    for eps in SVD_EPS {
        let Some(svd) = a.clone().try_svd(true, true, eps, SVD_MAX_ITER) else {
            continue;
        };
        let err = (svd.clone().recompose().expect("u and v computed") - a).camax() / scale;
        if err <= SVD_RECONSTRUCTION_TOL {
            return svd;
        }
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, svd));
        }
    }
    best.map(|(_, s)| s).unwrap_or_else(|| a.clone().svd(true, true))
}

/// Singular values (descending, padded with zeros to `max(m, n)`) and a full
/// orthonormal right basis `V` (n×n).
fn svd_full_v(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    // Padding rows leaves V unchanged and makes it square.
    let p = m.max(n);
    let mut padded = DMatrix::zeros(p, n);
    padded.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = checked_svd(&padded);
    let v = svd.v_t.expect("v requested").transpose();
    (svd.singular_values.iter().copied().collect(), v)
}

/// Singular values and a full orthonormal left basis `U` (m×m).
fn svd_full_u(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let p = m.max(n);
    let mut padded = DMatrix::zeros(m, p);
    padded.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = checked_svd(&padded);
    (svd.singular_values.iter().copied().collect(), svd.u.expect("u requested"))
}

/// Singular values (descending), length `min(m, n)`.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = checked_svd(a).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Orthonormal basis of the kernel of `a` (singular values `<= tol` count as zero).
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m == 0 {
        return DMatrix::identity(n, n);
    }
    let (sigma, v) = svd_full_v(a);
    let cols: Vec<usize> = (0..n).filter(|&j| sigma.get(j).copied().unwrap_or(0.0) <= tol).collect();
    select_columns(&v, &cols)
}

/// Orthonormal basis of the column space of `a`.
pub fn range_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(m, 0);
    }
    let (sigma, u) = svd_full_u(a);
    let cols: Vec<usize> = (0..m.min(n)).filter(|&j| sigma[j] > tol).collect();
    select_columns(&u, &cols)
}

/// Orthonormal basis for the Euclidean orthogonal complement of the column span.
pub fn orthogonal_complement(cols: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let m = cols.nrows();
    if cols.ncols() == 0 {
        return DMatrix::identity(m, m);
    }
    null_space(&cols.transpose(), tol)
}

/// Numerical rank with an absolute threshold.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    singular_values(a).into_iter().filter(|&s| s > tol).count()
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DVector::zeros(0);
    }
    if m == 0 {
        return DVector::zeros(n);
    }
    let svd = checked_svd(a);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-13 * (m.max(n) as f64);
    svd.solve(b, tol).expect("u and v computed")
}

/// Least-squares solution for several right-hand sides at once.
pub fn lstsq_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(a.ncols(), b.ncols());
    for j in 0..b.ncols() {
        x.set_column(j, &lstsq(a, &b.column(j).into_owned()));
    }
    x
}

pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.set_column(k, &a.column(j));
    }
    out
}

pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).max().unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        if b.ncols() > 0 {
            out.view_mut((0, c), (b.nrows(), b.ncols())).copy_from(*b);
        }
        c += b.ncols();
    }
    out
}

pub fn columns_to_matrix(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Max-abs entry; 0 for empty matrices.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Norm of the component of the columns of `w` orthogonal to the orthonormal columns `u`.
pub fn projection_residual(u: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    if u.ncols() == 0 {
        return w.norm();
    }
    (w - u * (u.transpose() * w)).norm()
}

/// Distance between the spans of two orthonormal column sets of equal dimension.
pub fn subspace_distance(u: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    projection_residual(u, w).max(projection_residual(w, u))
}

pub fn is_skew(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && max_abs(&(a + a.transpose())) <= tol
}

/// Matrix exponential with closed forms for 2×2 and 3×3 skew matrices and
/// for block-diagonal 2×2 skew matrices; Padé scaling-and-squaring otherwise.
pub fn exp_matrix(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if a.iter().all(|v| *v == 0.0) {
        return DMatrix::identity(n, n);
    }
    if n == 2 && is_skew(a, 1e-14) {
        let theta = a[(1, 0)];
        let (s, c) = theta.sin_cos();
        return DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    }
    if n == 3 && is_skew(a, 1e-14) {
        return rodrigues(a);
    }
    if n.is_multiple_of(2) && n > 2 && is_skew(a, 1e-14) && is_block_diag_2x2(a) {
        let blocks: Vec<DMatrix<f64>> = (0..n / 2)
            .map(|k| exp_matrix(&a.view((2 * k, 2 * k), (2, 2)).into_owned()))
            .collect();
        return block_diag(&blocks);
    }
    a.exp()
}

fn is_block_diag_2x2(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| i / 2 == j / 2 || a[(i, j)] == 0.0))
}

fn rodrigues(a: &DMatrix<f64>) -> DMatrix<f64> {
    let w = [a[(2, 1)], a[(0, 2)], a[(1, 0)]];
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let id = DMatrix::<f64>::identity(3, 3);
    let a2 = a * a;
    // Series forms below the cutoff keep full relative accuracy.
    let (s1, s2) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, 2.0 * (0.5 * theta).sin().powi(2) / (theta * theta))
    };
    id + a * s1 + a2 * s2
}

/// `exp(a) - I` without the cancellation of forming `exp(a)` first when `a` is small.
pub fn expm1_matrix(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if a.norm() > 0.5 {
        return exp_matrix(a) - DMatrix::identity(n, n);
    }
    let mut term = a.clone();
    let mut sum = a.clone();
    for k in 2..40 {
        term = &term * a / k as f64;
        if term.iter().all(|v| *v == 0.0) {
            break;
        }
        sum += &term;
        if max_abs(&term) < 1e-18 * max_abs(&sum) {
            break;
        }
    }
    sum
}

/// Directional derivative of the matrix exponential: `d/ds exp(a + s e)` at `s = 0`,
/// read off the upper-right block of `exp([[a, e], [0, a]])`.
pub fn dexp_directional(a: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((n, n), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, n)).copy_from(e);
    big.exp().view((0, n), (n, n)).into_owned()
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

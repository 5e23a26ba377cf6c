//! Dense complex block kernels shared by all solvers.
//!
//! Blocks are small and dense, so everything is expressed on
//! `nalgebra::DMatrix<Complex64>`. The wrappers here count flops
//! (see [`crate::flops`]) and turn numerical singularity into errors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::flops;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Pivot ratio below which an LU factorisation is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-15;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Matrix product with flop accounting.
pub fn mm(a: &CMat, b: &CMat) -> CMat {
    flops::add(flops::gemm(a.nrows(), a.ncols(), b.ncols()));
    a * b
}

pub fn mm3(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    mm(&mm(a, b), c)
}

#[inline]
pub fn adj(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn frob(a: &CMat) -> f64 {
    a.norm()
}

/// `||a - b||_F / ||b||_F`, falling back to the absolute error when `b` vanishes.
pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

/// Inverse through LU with partial pivoting, also returning the ratio of the
/// smallest to the largest pivot magnitude as a cheap conditioning estimate.
pub fn inv_with_pivot_ratio(a: &CMat) -> Option<(CMat, f64)> {
    let n = a.nrows();
    if n != a.ncols() {
        return None;
    }
    if n == 0 {
        return Some((zeros(0, 0), 1.0));
    }
    flops::add(flops::inverse(n));
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let p = u[(i, i)].norm();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if !(hi > 0.0) || lo / hi < SINGULAR_PIVOT_RATIO {
        return None;
    }
    let inv = lu.try_inverse()?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    Some((inv, lo / hi))
}

pub fn inv(a: &CMat, context: &'static str, step: usize) -> Result<CMat> {
    match inv_with_pivot_ratio(a) {
        Some((x, ratio)) => {
            log::trace!("{context}: step {step} pivot ratio {ratio:.3e}");
            Ok(x)
        }
        None => Err(Error::Singular { context, step }),
    }
}

/// Solves `a x = b` by LU.
pub fn solve(a: &CMat, b: &CMat, context: &'static str, step: usize) -> Result<CMat> {
    let n = a.nrows();
    flops::add(flops::lu_solve(n, b.ncols()));
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let p = u[(i, i)].norm();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if n > 0 && (!(hi > 0.0) || lo / hi < SINGULAR_PIVOT_RATIO) {
        return Err(Error::Singular { context, step });
    }
    lu.solve(b).ok_or(Error::Singular { context, step })
}

/// Singular value decomposition `a = u diag(s) v^H`, singular values descending.
pub fn svd(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (m, n) = a.shape();
    flops::add(8 * 4 * (m.max(n) as u64) * (m.min(n) as u64).pow(2));
    let mut dec = a.clone().svd(true, true);
    dec.sort_by_singular_values();
    let u = dec.u.expect("svd requested u");
    let v_t = dec.v_t.expect("svd requested v_t");
    (u, dec.singular_values.iter().copied().collect(), v_t)
}

/// Eigen-decomposition of a general complex matrix: `a v_k = lambda_k v_k`.
///
/// Eigenvalues come from the complex Schur form `a = q t q^H`; eigenvectors
/// are obtained by back substitution on the triangular factor and rotated
/// back with `q`. Columns are normalised to unit 2-norm.
pub fn eig(a: &CMat) -> (Vec<C64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (vec![], zeros(0, 0));
    }
    flops::add(8 * 10 * (n as u64).pow(3));
    let (q, t) = nalgebra::Schur::new(a.clone()).unpack();
    let lambda: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let small = scale * f64::EPSILON;
    let mut y = zeros(n, n);
    for k in 0..n {
        y[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for l in (j + 1)..=k {
                s += t[(j, l)] * y[(l, k)];
            }
            let mut d = t[(j, j)] - lambda[k];
            if d.norm() < small {
                d = C64::new(small, 0.0);
            }
            y[(j, k)] = -s / d;
        }
    }
    let mut v = &q * y;
    for k in 0..n {
        let nrm = v.column(k).norm();
        if nrm > 0.0 {
            v.column_mut(k).unscale_mut(nrm);
        }
    }
    (lambda, v)
}

/// Matrix with independent entries whose real and imaginary parts are uniform in [-1, 1].
pub fn random_cmat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        c64(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
    })
}

/// Random Hermitian matrix built from [`random_cmat`].
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let a = random_cmat(rng, n, n);
    (&a + a.adjoint()).scale(0.5)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Column-major vectorisation of `a` into an `(rows*cols) x 1` matrix.
pub fn vec_of(a: &CMat) -> CMat {
    CMat::from_column_slice(a.len(), 1, a.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &CMat, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

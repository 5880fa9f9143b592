//! Dense complex linear algebra used throughout the crate.
//!
//! Thin wrappers over `nalgebra` that fix the conventions the rest of the
//! code relies on: eigenvalues sorted ascending, unitary logarithms on the
//! principal branch, closest-unitary factors from the SVD.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Eigenphases closer than this to `pi` are assigned exactly `pi`.
const BRANCH_CUT_SNAP: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Entrywise complex conjugate (not the adjoint).
pub fn conj(a: &CMat) -> CMat {
    a.map(|z| z.conj())
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

pub fn trace(a: &CMat) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Ties keep the order returned by the solver; everything downstream only
/// depends on spectral projectors, which are insensitive to that order.
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let eig = hermitian_part(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(h)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Apply a real function to a Hermitian matrix through its spectrum.
pub fn hermitian_function(h: &CMat, f: impl Fn(f64) -> Complex64) -> CMat {
    let (vals, vecs) = hermitian_eigen(h);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &lambda) in vals.iter().enumerate() {
        let fj = f(lambda);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vecs.adjoint()
}

/// Closest unitary (or isometry, for tall inputs) in Frobenius norm: the
/// polar factor `W V^dagger` of the thin SVD `A = W S V^dagger`.
pub fn polar_unitary(a: &CMat) -> CMat {
    let svd = a.clone().svd(true, true);
    let w = svd.u.expect("svd computed with u");
    let vt = svd.v_t.expect("svd computed with v_t");
    w * vt
}

/// Smallest singular value; zero for empty input.
pub fn min_singular_value(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Schur factorization of a (numerically) normal matrix, returning the
/// unitary factor and the diagonal of the triangular factor.
fn normal_decomposition(u: &CMat) -> (CMat, Vec<Complex64>) {
    let (q, t) = nalgebra::linalg::Schur::new(u.clone()).unpack();
    let d = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    (q, d)
}

/// Eigenphases of a unitary matrix in `(-pi, pi]`, ascending.
pub fn eigenphases(u: &CMat) -> Vec<f64> {
    let (_, d) = normal_decomposition(u);
    let mut phases: Vec<f64> = d.iter().map(|z| principal_arg(*z)).collect();
    phases.sort_by(f64::total_cmp);
    phases
}

/// Argument in `(-pi, pi]`, snapping values within `BRANCH_CUT_SNAP` of the
/// cut onto `+pi` so that eigenvalues at `-1` get a deterministic branch.
pub fn principal_arg(z: Complex64) -> f64 {
    let a = z.arg();
    if (a.abs() - std::f64::consts::PI).abs() < BRANCH_CUT_SNAP {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Hermitian generator `H` with `U = exp(i H)` and spectrum in `(-pi, pi]`
/// (principal logarithm).
pub fn unitary_generator(u: &CMat) -> CMat {
    let (q, d) = normal_decomposition(u);
    let n = d.len();
    let mut diag = CMat::zeros(n, n);
    for (i, z) in d.iter().enumerate() {
        diag[(i, i)] = c(principal_arg(*z), 0.0);
    }
    hermitian_part(&(&q * diag * q.adjoint()))
}

/// `exp(i t H)` for Hermitian `H`.
pub fn expi_hermitian(h: &CMat, t: f64) -> CMat {
    hermitian_function(h, |x| Complex64::from_polar(1.0, t * x))
}

/// `U^t` along the principal-branch geodesic from the identity.
pub fn unitary_power(u: &CMat, t: f64) -> CMat {
    expi_hermitian(&unitary_generator(u), t)
}

pub fn determinant(a: &CMat) -> Complex64 {
    if a.is_empty() {
        return ONE;
    }
    a.clone().determinant()
}

/// Distance from the identity of `U^dagger U` (unitarity defect).
pub fn unitarity_defect(u: &CMat) -> f64 {
    frobenius(&(u.adjoint() * u - identity(u.ncols())))
}

/// Haar-distributed random unitary (QR of a complex Gaussian matrix with
/// the phases of `R`'s diagonal divided out).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    hermitian_part(&g)
}

/// Orthogonal projector onto the column span of an orthonormal `frame`.
pub fn projector_from_frame(frame: &CMat) -> CMat {
    frame * frame.adjoint()
}

/// Wrap an angle difference into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

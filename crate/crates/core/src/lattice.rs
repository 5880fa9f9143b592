//! Lattice geometry, Brillouin-zone grids and the symmetry-operator records
//! shared by the rest of the crate.
//!
//! Momenta are carried in reduced coordinates (coefficients in the dual
//! basis). The canonical representative of a reduced coordinate lies in
//! `[-1/2, 1/2)`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Result, TopoError};
use crate::linalg::{conj, frobenius, identity, CMat, ZERO};

/// Relative tolerance for `b_i . a_j = 2 pi delta_ij`.
pub const DUAL_TOLERANCE: f64 = 1e-12;

/// A Bravais lattice together with its dual basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    dim: usize,
    /// Columns are the primitive vectors `a_j`.
    basis: DMatrix<f64>,
    /// Columns are the dual vectors `b_j`.
    dual: DMatrix<f64>,
}

/// Columns `b_j` with `b_i . a_j = 2 pi delta_ij` for the columns `a_j` of
/// `basis`.
pub fn dual_lattice(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = basis.nrows();
    if basis.ncols() != d || d == 0 || d > 3 {
        return Err(TopoError::Dimension(format!(
            "basis must be d x d with d in 1..=3, got {} x {}",
            basis.nrows(),
            basis.ncols()
        )));
    }
    let scale = basis.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let det = basis.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 * scale.powi(d as i32) || scale == 0.0 {
        return Err(TopoError::DegenerateLattice { det });
    }
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or(TopoError::DegenerateLattice { det })?;
    // B^T A = 2 pi I  =>  B = 2 pi (A^{-1})^T
    Ok(inv.transpose() * (2.0 * PI))
}

impl Lattice {
    /// Build a lattice from its primitive vectors (each of length `d`).
    pub fn new(vectors: &[Vec<f64>]) -> Result<Self> {
        let d = vectors.len();
        if d == 0 || vectors.iter().any(|v| v.len() != d) {
            return Err(TopoError::Dimension("lattice needs d vectors of length d".into()));
        }
        let basis = DMatrix::from_fn(d, d, |i, j| vectors[j][i]);
        Self::from_basis(basis)
    }

    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        let dual = dual_lattice(&basis)?;
        Ok(Lattice {
            dim: basis.nrows(),
            basis,
            dual,
        })
    }

    /// Hypercubic lattice with unit spacing.
    pub fn cubic(dim: usize) -> Result<Self> {
        Self::from_basis(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dual(&self) -> &DMatrix<f64> {
        &self.dual
    }

    pub fn basis_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|j| self.basis.column(j).iter().cloned().collect())
            .collect()
    }

    /// Largest violation of `b_i . a_j = 2 pi delta_ij`, relative to `2 pi`.
    pub fn duality_defect(&self) -> f64 {
        let prod = self.dual.transpose() * &self.basis;
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { 2.0 * PI } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).abs() / (2.0 * PI));
            }
        }
        worst
    }

    /// Cartesian momentum `sum_j reduced_j b_j`.
    pub fn cartesian_k(&self, reduced: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.dual[(i, j)] * reduced[j]).sum())
            .collect()
    }

    /// Cartesian position `sum_j x_j a_j` of a point in lattice coordinates.
    pub fn cartesian_x(&self, coords: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.basis[(i, j)] * coords[j]).sum())
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.basis.determinant().abs()
    }
}

/// Fold a reduced coordinate into `[-1/2, 1/2)`.
pub fn fold(x: f64) -> f64 {
    let y = x - (x + 0.5).floor();
    if y >= 0.5 {
        y - 1.0
    } else {
        y
    }
}

/// A crystal momentum in reduced coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct KPoint {
    pub reduced: Vec<f64>,
}

impl KPoint {
    pub fn new(reduced: Vec<f64>) -> Self {
        KPoint { reduced }
    }

    /// Exact grid point `n_j / N_j` with the integer numerator folded first,
    /// so that every representative of the same class maps to identical
    /// floating-point coordinates.
    pub fn from_grid(numerators: &[i64], sizes: &[usize]) -> Self {
        let reduced = numerators
            .iter()
            .zip(sizes)
            .map(|(&n, &size)| fold_index(n, size) as f64 / size as f64)
            .collect();
        KPoint { reduced }
    }

    pub fn canonical(&self) -> KPoint {
        KPoint {
            reduced: self.reduced.iter().map(|&x| fold(x)).collect(),
        }
    }

    pub fn cartesian(&self, lattice: &Lattice) -> Vec<f64> {
        lattice.cartesian_k(&self.reduced)
    }
}

/// Fold an integer grid coordinate into `[-N/2, N/2)`.
fn fold_index(n: i64, size: usize) -> i64 {
    let s = size as i64;
    (n + s / 2).rem_euclid(s) - s / 2
}

/// The `2^d` time-reversal-invariant momenta, reduced coordinates in
/// `{0, 1/2}^d`, ordered with the first axis slowest.
pub fn trim_points(lattice: &Lattice) -> Vec<KPoint> {
    let d = lattice.dim();
    (0..(1usize << d))
        .map(|mask| {
            KPoint::new(
                (0..d)
                    .map(|j| if mask & (1 << (d - 1 - j)) != 0 { 0.5 } else { 0.0 })
                    .collect(),
            )
        })
        .collect()
}

/// Uniform grid `n_j / N_j`, `n_j` in `{-N_j/2, ..., N_j/2 - 1}`, closed
/// under `k -> -k` and containing every TRIM.
///
/// Points are indexed with the first axis slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrillouinGrid {
    sizes: Vec<usize>,
}

/// Validate sizes and build a grid for `lattice`.
pub fn make_grid(lattice: &Lattice, sizes: &[usize]) -> Result<BrillouinGrid> {
    if sizes.len() != lattice.dim() {
        return Err(TopoError::Dimension(format!(
            "grid has {} axes but the lattice is {}-dimensional",
            sizes.len(),
            lattice.dim()
        )));
    }
    BrillouinGrid::new(sizes)
}

impl BrillouinGrid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.len() > 3 {
            return Err(TopoError::Dimension(format!(
                "grids have 1 to 3 axes, got {}",
                sizes.len()
            )));
        }
        for (axis, &size) in sizes.iter().enumerate() {
            if size < 4 || size % 2 != 0 {
                return Err(TopoError::GridParity { axis, size });
            }
        }
        Ok(BrillouinGrid {
            sizes: sizes.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.sizes[axis] as f64
    }

    /// Integer numerators `n_j` of point `index`.
    pub fn coords(&self, index: usize) -> Vec<i64> {
        let mut rem = index;
        let mut out = vec![0i64; self.dim()];
        for axis in (0..self.dim()).rev() {
            let s = self.sizes[axis];
            out[axis] = (rem % s) as i64 - (s / 2) as i64;
            rem /= s;
        }
        out
    }

    /// Index of the grid point congruent to the numerators `n` (wrapped).
    pub fn index_of(&self, n: &[i64]) -> usize {
        let mut idx = 0usize;
        for (axis, &nj) in n.iter().enumerate() {
            let s = self.sizes[axis] as i64;
            let i = (nj + s / 2).rem_euclid(s) as usize;
            idx = idx * self.sizes[axis] + i;
        }
        idx
    }

    pub fn kpoint(&self, index: usize) -> KPoint {
        KPoint::from_grid(&self.coords(index), &self.sizes)
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        self.kpoint(index).reduced
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Neighbour `step` sites along `axis`, with the dual-lattice winding
    /// picked up when the step leaves the canonical cell: the unfolded
    /// neighbour equals the canonical one plus `wrap` along `axis`.
    pub fn neighbor(&self, index: usize, axis: usize, step: i64) -> (usize, i64) {
        let mut n = self.coords(index);
        let s = self.sizes[axis] as i64;
        let raw = n[axis] + step;
        let folded = fold_index(raw, self.sizes[axis]);
        let wrap = (raw - folded) / s;
        n[axis] = folded;
        (self.index_of(&n), wrap)
    }

    /// Permutation realizing `k -> -k` modulo the dual lattice.
    pub fn negation_permutation(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| {
                let n: Vec<i64> = self.coords(i).iter().map(|x| -x).collect();
                self.index_of(&n)
            })
            .collect()
    }

    /// Index of `k` if it is (exactly, modulo the dual lattice) a grid point.
    pub fn find(&self, k: &[f64]) -> Option<usize> {
        if k.len() != self.dim() {
            return None;
        }
        let mut n = Vec::with_capacity(k.len());
        for (axis, &x) in k.iter().enumerate() {
            let scaled = x * self.sizes[axis] as f64;
            let r = scaled.round();
            if (scaled - r).abs() > 1e-9 {
                return None;
            }
            n.push(r as i64);
        }
        Some(self.index_of(&n))
    }
}

/// Shift rule for a plane-wave basis: `(tau(lambda) phi)(G) = phi(G + lambda)`,
/// modes shifted outside the retained set are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftRule {
    modes: Vec<Vec<i64>>,
    lookup: HashMap<Vec<i64>, usize>,
}

impl ShiftRule {
    pub fn new(modes: Vec<Vec<i64>>) -> Self {
        let lookup = modes.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        ShiftRule { modes, lookup }
    }

    pub fn modes(&self) -> &[Vec<i64>] {
        &self.modes
    }

    /// Index of `G + lambda` for each retained `G`, if retained.
    pub fn shifted_index(&self, lambda: &[i64]) -> Vec<Option<usize>> {
        self.modes
            .iter()
            .map(|g| {
                let target: Vec<i64> = g.iter().zip(lambda).map(|(a, b)| a + b).collect();
                self.lookup.get(&target).copied()
            })
            .collect()
    }
}

/// Representation `lambda -> tau(lambda)` of the dual lattice on the fibre.
#[derive(Clone, Debug, PartialEq)]
pub enum TauRep {
    /// `tau(lambda) = 1` (tight-binding models in the periodic gauge).
    Trivial,
    Shift(ShiftRule),
    /// Unitary generators `tau(e_j)`; assumed to commute.
    Explicit {
        generators: Vec<CMat>,
    },
}

impl TauRep {
    pub fn is_trivial(&self) -> bool {
        matches!(self, TauRep::Trivial)
    }

    /// Matrix of `tau(lambda)` on a fibre of dimension `n`.
    pub fn matrix(&self, lambda: &[i64], n: usize) -> CMat {
        match self {
            TauRep::Trivial => identity(n),
            TauRep::Shift(rule) => {
                let mut m = CMat::zeros(n, n);
                for (row, target) in rule.shifted_index(lambda).into_iter().enumerate() {
                    if let Some(col) = target {
                        m[(row, col)] = crate::linalg::ONE;
                    }
                }
                m
            }
            TauRep::Explicit { generators } => {
                let mut m = identity(n);
                for (g, &power) in generators.iter().zip(lambda) {
                    let step = if power >= 0 { g.clone() } else { g.adjoint() };
                    for _ in 0..power.unsigned_abs() {
                        m = &m * &step;
                    }
                }
                m
            }
        }
    }

    /// `tau(lambda)` applied to each column of `frame`.
    pub fn apply(&self, lambda: &[i64], frame: &CMat) -> CMat {
        if lambda.iter().all(|&l| l == 0) {
            return frame.clone();
        }
        match self {
            TauRep::Trivial => frame.clone(),
            TauRep::Shift(rule) => {
                let mut out = CMat::from_element(frame.nrows(), frame.ncols(), ZERO);
                for (row, target) in rule.shifted_index(lambda).into_iter().enumerate() {
                    if let Some(src) = target {
                        out.set_row(row, &frame.row(src));
                    }
                }
                out
            }
            TauRep::Explicit { .. } => self.matrix(lambda, frame.nrows()) * frame,
        }
    }

    /// `tau(lambda) A tau(lambda)^dagger`.
    pub fn conjugate(&self, lambda: &[i64], a: &CMat) -> CMat {
        if self.is_trivial() {
            return a.clone();
        }
        let t = self.matrix(lambda, a.nrows());
        &t * a * t.adjoint()
    }

    /// Largest defect of `tau(l) tau(m) = tau(l + m)` and `tau(0) = 1` over
    /// the given set of lattice vectors and their pairwise sums. For shift
    /// rules the comparison is restricted to rows that survive both sides.
    pub fn group_law_residual(&self, lambdas: &[Vec<i64>], n: usize) -> f64 {
        let mut worst =
            frobenius(&(self.matrix(&vec![0; lambdas.first().map_or(0, |l| l.len())], n) - identity(n)));
        for l in lambdas {
            for m in lambdas {
                let sum: Vec<i64> = l.iter().zip(m).map(|(a, b)| a + b).collect();
                let lhs = self.matrix(l, n) * self.matrix(m, n);
                let rhs = self.matrix(&sum, n);
                let defect = match self {
                    TauRep::Shift(_) => {
                        let mut d = 0.0_f64;
                        for r in 0..n {
                            let keep_l = lhs.row(r).iter().any(|z| z.norm() > 0.0);
                            let keep_r = rhs.row(r).iter().any(|z| z.norm() > 0.0);
                            if keep_l && keep_r {
                                for c in 0..n {
                                    d += (lhs[(r, c)] - rhs[(r, c)]).norm_sqr();
                                }
                            }
                        }
                        d.sqrt()
                    }
                    _ => frobenius(&(lhs - rhs)),
                };
                worst = worst.max(defect);
            }
        }
        worst
    }
}

/// Antiunitary `Theta v = U conj(v)` with `Theta^2 = sign`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeReversal {
    unitary: CMat,
    sign: i8,
}

impl TimeReversal {
    /// Tolerance accepted on `U conj(U) = sign`.
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(unitary: CMat, sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(TopoError::InvalidParameter(format!(
                "time-reversal sign must be +1 or -1, got {sign}"
            )));
        }
        if unitary.nrows() != unitary.ncols() {
            return Err(TopoError::Shape("time-reversal unitary must be square".into()));
        }
        let tr = TimeReversal { unitary, sign };
        let r = tr.residual();
        if r > Self::TOLERANCE {
            return Err(TopoError::Symmetry(format!(
                "U conj(U) differs from {sign} by {r:e}"
            )));
        }
        Ok(tr)
    }

    /// Complex conjugation on `C^n`.
    pub fn conjugation(n: usize) -> Self {
        TimeReversal {
            unitary: identity(n),
            sign: 1,
        }
    }

    pub fn unitary(&self) -> &CMat {
        &self.unitary
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn is_fermionic(&self) -> bool {
        self.sign < 0
    }

    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }

    /// `|| U conj(U) - sign I ||_F`.
    pub fn residual(&self) -> f64 {
        let n = self.unitary.nrows();
        frobenius(
            &(&self.unitary * conj(&self.unitary) - identity(n) * crate::linalg::c(self.sign as f64, 0.0)),
        )
    }

    /// `Theta` applied to every column of `frame`.
    pub fn apply(&self, frame: &CMat) -> CMat {
        &self.unitary * conj(frame)
    }

    /// `Theta A Theta^{-1} = U conj(A) U^dagger`.
    pub fn conjugate(&self, a: &CMat) -> CMat {
        &self.unitary * conj(a) * self.unitary.adjoint()
    }

    /// `Theta' = W Theta` for a unitary `W` acting after `Theta`.
    pub fn compose_unitary(&self, w: &CMat) -> Result<Self> {
        TimeReversal::new(w * &self.unitary, self.sign)
    }
}

/// Unitary involution implementing space reflection on the fibre.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceReflection {
    unitary: CMat,
}

impl SpaceReflection {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(unitary: CMat) -> Result<Self> {
        if unitary.nrows() != unitary.ncols() {
            return Err(TopoError::Shape("reflection must be square".into()));
        }
        let sr = SpaceReflection { unitary };
        let r = sr.residual();
        if r > Self::TOLERANCE {
            return Err(TopoError::Symmetry(format!("R^2 differs from 1 by {r:e}")));
        }
        Ok(sr)
    }

    pub fn unitary(&self) -> &CMat {
        &self.unitary
    }

    pub fn residual(&self) -> f64 {
        let n = self.unitary.nrows();
        frobenius(&(&self.unitary * &self.unitary - identity(n)))
            .max(crate::linalg::unitarity_defect(&self.unitary))
    }

    pub fn conjugate(&self, a: &CMat) -> CMat {
        &self.unitary * a * self.unitary.adjoint()
    }
}

/// The matrix `epsilon` relating a frame at `-k` to the time-reversed frame
/// at `k`: the identity for bosonic `Theta`, the symplectic block
/// `[[0, 1], [-1, 0]]` for fermionic `Theta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReshuffleMatrix {
    size: usize,
    fermionic: bool,
}

impl ReshuffleMatrix {
    pub fn new(size: usize, fermionic: bool) -> Result<Self> {
        if fermionic && size % 2 != 0 {
            return Err(TopoError::OddRank(size));
        }
        Ok(ReshuffleMatrix { size, fermionic })
    }

    pub fn for_time_reversal(size: usize, theta: &TimeReversal) -> Result<Self> {
        Self::new(size, theta.is_fermionic())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_fermionic(&self) -> bool {
        self.fermionic
    }

    pub fn matrix(&self) -> CMat {
        let m = self.size;
        if !self.fermionic {
            return identity(m);
        }
        let h = m / 2;
        let mut e = CMat::zeros(m, m);
        for a in 0..h {
            e[(a, a + h)] = crate::linalg::ONE;
            e[(a + h, a)] = -crate::linalg::ONE;
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn dual_of_unit_chain_is_two_pi() {
        let l = Lattice::new(&[vec![1.0]]).unwrap();
        assert!((l.dual()[(0, 0)] - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn dual_of_scaled_square() {
        let l = Lattice::new(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let b = l.dual();
        assert!((b[(0, 0)] - PI).abs() < 1e-15 && b[(1, 0)].abs() < 1e-15);
        assert!((b[(1, 1)] - PI).abs() < 1e-15 && b[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn dual_of_hexagonal_matches_linear_solve() {
        let s3 = 3f64.sqrt();
        let l = Lattice::new(&[vec![1.0, 0.0], vec![0.5, s3 / 2.0]]).unwrap();
        // Independent route: solve [a1^T; a2^T] b_i = 2 pi e_i by Cramer's rule.
        let (a11, a12, a21, a22) = (1.0, 0.0, 0.5, s3 / 2.0);
        let det = a11 * a22 - a12 * a21;
        let b1 = [2.0 * PI * a22 / det, -2.0 * PI * a21 / det];
        let b2 = [-2.0 * PI * a12 / det, 2.0 * PI * a11 / det];
        for i in 0..2 {
            assert!((l.dual()[(i, 0)] - b1[i]).abs() < 1e-12);
            assert!((l.dual()[(i, 1)] - b2[i]).abs() < 1e-12);
        }
        assert!(l.duality_defect() < DUAL_TOLERANCE);
    }

    #[test]
    fn singular_basis_rejected() {
        let err = Lattice::new(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap_err();
        assert!(matches!(err, TopoError::DegenerateLattice { .. }));
    }

    #[test]
    fn trims_by_dimension() {
        let l1 = Lattice::cubic(1).unwrap();
        let t1: Vec<_> = trim_points(&l1).into_iter().map(|k| k.reduced).collect();
        assert_eq!(t1, vec![vec![0.0], vec![0.5]]);
        let l2 = Lattice::cubic(2).unwrap();
        let t2: Vec<_> = trim_points(&l2).into_iter().map(|k| k.reduced).collect();
        assert_eq!(
            t2,
            vec![vec![0.0, 0.0], vec![0.0, 0.5], vec![0.5, 0.0], vec![0.5, 0.5]]
        );
        let l3 = Lattice::cubic(3).unwrap();
        let t3 = trim_points(&l3);
        assert_eq!(t3.len(), 8);
        for k in &t3 {
            assert!(k.reduced.iter().all(|&x| x == 0.0 || x == 0.5));
            let neg = KPoint::new(k.reduced.iter().map(|x| -x).collect()).canonical();
            assert_eq!(neg, k.canonical());
        }
    }

    #[test]
    fn grid_of_four_points() {
        let l = Lattice::cubic(1).unwrap();
        let g = make_grid(&l, &[4]).unwrap();
        assert_eq!(g.points(), vec![vec![-0.5], vec![-0.25], vec![0.0], vec![0.25]]);
        assert_eq!(g.negation_permutation(), vec![0, 3, 2, 1]);
    }

    #[test]
    fn grid_six_by_six_contains_trims() {
        let l = Lattice::cubic(2).unwrap();
        let g = make_grid(&l, &[6, 6]).unwrap();
        assert_eq!(g.len(), 36);
        for t in trim_points(&l) {
            assert!(g.find(&t.reduced).is_some());
        }
    }

    #[test]
    fn odd_or_small_grid_rejected() {
        let l = Lattice::cubic(1).unwrap();
        assert!(matches!(
            make_grid(&l, &[5]),
            Err(TopoError::GridParity { axis: 0, size: 5 })
        ));
        assert!(make_grid(&l, &[2]).is_err());
    }

    #[test]
    fn neighbor_wraps() {
        let g = BrillouinGrid::new(&[4]).unwrap();
        // last point 1/4 -> next is 1/2 == -1/2 + 1
        let (idx, wrap) = g.neighbor(3, 0, 1);
        assert_eq!((idx, wrap), (0, 1));
        let (idx, wrap) = g.neighbor(0, 0, -1);
        assert_eq!((idx, wrap), (3, -1));
    }

    #[test]
    fn fold_half_to_minus_half() {
        assert_eq!(fold(0.5), -0.5);
        assert_eq!(fold(-0.5), -0.5);
        assert_eq!(fold(1.25), 0.25);
    }

    #[test]
    fn fermionic_reshuffle_squares_to_minus_one() {
        let e = ReshuffleMatrix::new(4, true).unwrap().matrix();
        assert!(frobenius(&(&e * &e + identity(4))) < 1e-15);
        assert!(matches!(
            ReshuffleMatrix::new(3, true),
            Err(TopoError::OddRank(3))
        ));
        assert_eq!(ReshuffleMatrix::new(3, false).unwrap().matrix(), identity(3));
    }

    #[test]
    fn spin_half_time_reversal_is_fermionic() {
        let u = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        let t = TimeReversal::new(u, -1).unwrap();
        assert!(t.residual() < 1e-12);
        assert!(TimeReversal::new(identity(2), -1).is_err());
    }

    #[test]
    fn explicit_tau_group_law() {
        let g = CMat::from_diagonal(&crate::linalg::CVec::from_vec(vec![c(0.0, 1.0), c(-1.0, 0.0)]));
        let tau = TauRep::Explicit { generators: vec![g] };
        let ls = vec![vec![1], vec![-1], vec![2], vec![3]];
        assert!(tau.group_law_residual(&ls, 2) < 1e-12);
        assert_eq!(TauRep::Trivial.group_law_residual(&ls, 3), 0.0);
    }
}

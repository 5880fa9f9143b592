//! Continuous periodic Schrodinger operators in a plane-wave basis and the
//! discrete modified Bloch-Floquet transform.
//!
//! The fibre Hamiltonian at reduced momentum `k` acts on periodic functions
//! `u(y) = sum_G u_G exp(i G.y)`:
//! `H(k)_{G G'} = |k + G|^2 / 2 delta_{G G'} + V_{G - G'}`.
//! Momenta are not folded, so `H(k + l) = tau(l) H(k) tau(l)^{-1}` with the
//! shift `(tau(l) u)_G = u_{G + l}` (exact away from the cutoff sphere).
//!
//! Sampled functions live on a supercell of `N^d` unit cells with `M^d`
//! points per cell at lattice coordinates `x = c + j / M`. The transform
//! pair is
//!
//! ```text
//! phi(k, j) = N^{-d/2} sum_c exp(-i 2 pi k.(c + j/M)) w(c, j)
//! w(c, j)   = N^{-d/2} sum_k exp(+i 2 pi k.(c + j/M)) phi(k, j)
//! ```
//!
//! over the grid `k = n / N`, which makes both maps exactly unitary on the
//! discrete inner products.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TopoError};
use crate::lattice::{BrillouinGrid, Lattice, ShiftRule, SpaceReflection, TauRep, TimeReversal};
use crate::linalg::{c, hermitian_eigenvalues, CMat, ONE, ZERO};
use crate::projectors::BlochHamiltonian;

/// Tolerance on `V(-G) = conj(V(G))`.
pub const REALITY_TOLERANCE: f64 = 1e-14;

/// Dual-lattice vectors `G = sum_j n_j b_j` with `|G| <= cutoff`, ordered by
/// length and then lexicographically by `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneWaveBasis {
    lattice: Lattice,
    cutoff: f64,
    modes: Vec<Vec<i64>>,
}

impl PlaneWaveBasis {
    pub fn new(lattice: &Lattice, cutoff: f64) -> Result<Self> {
        if !(cutoff >= 0.0) || !cutoff.is_finite() {
            return Err(TopoError::InvalidParameter(format!(
                "cutoff {cutoff} must be >= 0"
            )));
        }
        let d = lattice.dim();
        let bounds: Vec<i64> = (0..d)
            .map(|j| {
                let a = lattice.basis().column(j).norm();
                (cutoff * a / (2.0 * PI)).ceil() as i64 + 1
            })
            .collect();
        let mut modes = Vec::new();
        let mut n = bounds.iter().map(|b| -b).collect::<Vec<i64>>();
        loop {
            let g = lattice.cartesian_k(&n.iter().map(|&x| x as f64).collect::<Vec<_>>());
            let len = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len <= cutoff * (1.0 + 1e-12) {
                modes.push(n.clone());
            }
            // odometer over the box
            let mut axis = d;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                if n[axis] < bounds[axis] {
                    n[axis] += 1;
                    for m in n.iter_mut().skip(axis + 1) {
                        *m = 0;
                    }
                    for (j, m) in n.iter_mut().enumerate().skip(axis + 1) {
                        *m = -bounds[j];
                    }
                    break;
                } else if axis == 0 {
                    axis = usize::MAX;
                    break;
                }
            }
            if axis == usize::MAX {
                break;
            }
        }
        let key = |n: &Vec<i64>| {
            let g = lattice.cartesian_k(&n.iter().map(|&x| x as f64).collect::<Vec<_>>());
            (g.iter().map(|x| x * x).sum::<f64>() * 1e9).round() as i64
        };
        modes.sort_by(|a, b| key(a).cmp(&key(b)).then_with(|| a.cmp(b)));
        Ok(PlaneWaveBasis {
            lattice: lattice.clone(),
            cutoff,
            modes,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn modes(&self) -> &[Vec<i64>] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn index_of(&self, n: &[i64]) -> Option<usize> {
        self.modes.iter().position(|m| m.as_slice() == n)
    }

    /// Cartesian `k + G` for reduced `k`.
    pub fn shifted_vector(&self, k: &[f64], n: &[i64]) -> Vec<f64> {
        let coeffs: Vec<f64> = k.iter().zip(n).map(|(k, &n)| k + n as f64).collect();
        self.lattice.cartesian_k(&coeffs)
    }
}

/// Fourier coefficients `V_G` of a real periodic potential.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierPotential {
    dim: usize,
    coefficients: BTreeMap<Vec<i64>, Complex64>,
}

impl FourierPotential {
    /// Missing partners `-G` are completed by conjugation; an explicit
    /// partner violating reality by more than [`REALITY_TOLERANCE`] is an
    /// error.
    pub fn new(dim: usize, coefficients: impl IntoIterator<Item = (Vec<i64>, Complex64)>) -> Result<Self> {
        let mut map: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (g, v) in coefficients {
            if g.len() != dim {
                return Err(TopoError::Dimension(format!("G = {g:?} in dimension {dim}")));
            }
            *map.entry(g).or_insert(ZERO) += v;
        }
        let keys: Vec<Vec<i64>> = map.keys().cloned().collect();
        for g in keys {
            let minus: Vec<i64> = g.iter().map(|x| -x).collect();
            let v = map[&g];
            match map.get(&minus) {
                None => {
                    map.insert(minus, v.conj());
                }
                Some(w) => {
                    let defect = (w - v.conj()).norm();
                    if defect > REALITY_TOLERANCE {
                        return Err(TopoError::InvalidParameter(format!(
                            "potential is not real: V({minus:?}) differs from conj V({g:?}) by {defect:e}"
                        )));
                    }
                }
            }
        }
        Ok(FourierPotential {
            dim,
            coefficients: map,
        })
    }

    pub fn zero(dim: usize) -> Self {
        FourierPotential {
            dim,
            coefficients: BTreeMap::new(),
        }
    }

    /// `V(x) = 2 amplitude cos(2 pi x_axis)` in lattice coordinates.
    pub fn cosine(dim: usize, axis: usize, amplitude: f64) -> Result<Self> {
        let mut g = vec![0i64; dim];
        g[axis] = 1;
        FourierPotential::new(dim, vec![(g, c(amplitude, 0.0))])
    }

    /// Sum of two potentials.
    pub fn plus(&self, other: &FourierPotential) -> Result<Self> {
        FourierPotential::new(
            self.dim,
            self.coefficients
                .iter()
                .chain(&other.coefficients)
                .map(|(g, v)| (g.clone(), *v)),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficient(&self, g: &[i64]) -> Complex64 {
        self.coefficients.get(g).copied().unwrap_or(ZERO)
    }

    pub fn coefficients(&self) -> &BTreeMap<Vec<i64>, Complex64> {
        &self.coefficients
    }

    /// `V(x)` at lattice coordinates `x`.
    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        self.coefficients
            .iter()
            .map(|(g, v)| {
                let phase: f64 = g.iter().zip(x).map(|(&n, x)| n as f64 * x).sum();
                v * Complex64::from_polar(1.0, 2.0 * PI * phase)
            })
            .sum()
    }

    /// True when `V(-x) = V(x)`.
    pub fn is_even(&self) -> bool {
        self.coefficients.iter().all(|(g, v)| {
            let minus: Vec<i64> = g.iter().map(|x| -x).collect();
            (self.coefficient(&minus) - v).norm() <= REALITY_TOLERANCE
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientEntry {
    #[serde(rename = "G")]
    g: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PotentialFile {
    dim: usize,
    basis: Vec<Vec<f64>>,
    coefficients: Vec<CoefficientEntry>,
}

/// Read a potential file `{dim, basis, coefficients: [{G, re, im}]}`.
pub fn load_potential(path: impl AsRef<Path>) -> Result<(Lattice, FourierPotential)> {
    potential_from_json(&std::fs::read_to_string(path)?)
}

pub fn potential_from_json(text: &str) -> Result<(Lattice, FourierPotential)> {
    let file: PotentialFile = serde_json::from_str(text).map_err(|e| TopoError::Parse(e.to_string()))?;
    if file.basis.len() != file.dim {
        return Err(TopoError::Parse("basis length differs from dim".into()));
    }
    let lattice = Lattice::new(&file.basis)?;
    let v = FourierPotential::new(
        file.dim,
        file.coefficients.into_iter().map(|e| (e.g, c(e.re, e.im))),
    )?;
    Ok((lattice, v))
}

pub fn potential_to_json(lattice: &Lattice, v: &FourierPotential) -> Result<String> {
    let file = PotentialFile {
        dim: v.dim,
        basis: lattice.basis_vectors(),
        coefficients: v
            .coefficients
            .iter()
            .map(|(g, z)| CoefficientEntry {
                g: g.clone(),
                re: z.re,
                im: z.im,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// `H(k)_{G G'} = |k + G|^2 / 2 delta_{G G'} + V_{G - G'}`; coefficients
/// outside the potential's support are zero.
pub fn fibered_hamiltonian(v: &FourierPotential, basis: &PlaneWaveBasis, k: &[f64]) -> CMat {
    let n = basis.len();
    let mut h = CMat::zeros(n, n);
    for (i, gi) in basis.modes.iter().enumerate() {
        let q = basis.shifted_vector(k, gi);
        h[(i, i)] = c(0.5 * q.iter().map(|x| x * x).sum::<f64>(), 0.0);
        for (j, gj) in basis.modes.iter().enumerate() {
            let diff: Vec<i64> = gi.iter().zip(gj).map(|(a, b)| a - b).collect();
            h[(i, j)] += v.coefficient(&diff);
        }
    }
    h
}

/// The fibre symmetry operators of a real Schrodinger operator.
#[derive(Clone, Debug)]
pub struct FiberSymmetries {
    pub tau: TauRep,
    /// `(Theta u)_G = conj(u_{-G})`, bosonic.
    pub theta: TimeReversal,
    /// `(R u)_G = u_{-G}`.
    pub reflection: SpaceReflection,
}

fn negation_matrix(basis: &PlaneWaveBasis) -> CMat {
    let n = basis.len();
    let mut m = CMat::zeros(n, n);
    for (i, g) in basis.modes.iter().enumerate() {
        let minus: Vec<i64> = g.iter().map(|x| -x).collect();
        let j = basis
            .index_of(&minus)
            .expect("cutoff ball is closed under negation");
        m[(i, j)] = ONE;
    }
    m
}

pub fn fiber_symmetry_ops(basis: &PlaneWaveBasis) -> FiberSymmetries {
    let neg = negation_matrix(basis);
    FiberSymmetries {
        tau: TauRep::Shift(ShiftRule::new(basis.modes.clone())),
        theta: TimeReversal::new(neg.clone(), 1).expect("negation is an involution"),
        reflection: SpaceReflection::new(neg).expect("negation is an involution"),
    }
}

/// A plane-wave Bloch family with its fibre symmetry operators.
#[derive(Clone, Debug)]
pub struct PlaneWaveHamiltonian {
    basis: PlaneWaveBasis,
    potential: FourierPotential,
    symmetries: FiberSymmetries,
    occupied: usize,
    reflection_declared: bool,
}

impl PlaneWaveHamiltonian {
    /// Time reversal is always attached (the potential is real); the
    /// reflection only when the potential is even.
    pub fn new(basis: PlaneWaveBasis, potential: FourierPotential, occupied: usize) -> Result<Self> {
        if potential.dim() != basis.lattice().dim() {
            return Err(TopoError::Dimension(
                "potential and lattice dimensions differ".into(),
            ));
        }
        if occupied == 0 || occupied >= basis.len() {
            return Err(TopoError::InvalidParameter(format!(
                "{occupied} occupied bands with {} plane waves",
                basis.len()
            )));
        }
        let reflection_declared = potential.is_even();
        Ok(PlaneWaveHamiltonian {
            symmetries: fiber_symmetry_ops(&basis),
            basis,
            potential,
            occupied,
            reflection_declared,
        })
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn potential(&self) -> &FourierPotential {
        &self.potential
    }

    pub fn symmetries(&self) -> &FiberSymmetries {
        &self.symmetries
    }
}

impl BlochHamiltonian for PlaneWaveHamiltonian {
    fn dim(&self) -> usize {
        self.basis.lattice().dim()
    }
    fn fiber_dim(&self) -> usize {
        self.basis.len()
    }
    fn hamiltonian(&self, k: &[f64]) -> CMat {
        fibered_hamiltonian(&self.potential, &self.basis, k)
    }
    fn time_reversal(&self) -> Option<&TimeReversal> {
        Some(&self.symmetries.theta)
    }
    fn space_reflection(&self) -> Option<&SpaceReflection> {
        self.reflection_declared.then_some(&self.symmetries.reflection)
    }
    fn tau(&self) -> &TauRep {
        &self.symmetries.tau
    }
    fn default_occupied(&self) -> usize {
        self.occupied
    }
    fn lattice(&self) -> Option<&Lattice> {
        Some(self.basis.lattice())
    }
}

/// Spectral distance between the fibre Hamiltonian and the classical Bloch
/// Hamiltonian at `k`, the latter assembled in the shifted basis
/// `exp(i (k + G).x)` with its potential block computed by real-space
/// quadrature of `V`.
pub fn classical_intertwiner_check(v: &FourierPotential, basis: &PlaneWaveBasis, k: &[f64]) -> f64 {
    let h = fibered_hamiltonian(v, basis, k);
    let d = basis.lattice().dim();
    // quadrature exact for trigonometric polynomials of this degree
    let max_n = basis
        .modes
        .iter()
        .chain(v.coefficients.keys())
        .flat_map(|g| g.iter().map(|x| x.unsigned_abs()))
        .max()
        .unwrap_or(0) as usize;
    let m = 4 * max_n + 2;
    let total = m.pow(d as u32);
    let samples: Vec<(Vec<f64>, Complex64)> = (0..total)
        .map(|idx| {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|_| {
                    let j = rem % m;
                    rem /= m;
                    j as f64 / m as f64
                })
                .collect();
            let val = v.evaluate(&x);
            (x, val)
        })
        .collect();
    let n = basis.len();
    let mut h_cl = CMat::zeros(n, n);
    for (i, gi) in basis.modes.iter().enumerate() {
        let q = basis.shifted_vector(k, gi);
        h_cl[(i, i)] += c(0.5 * q.iter().map(|x| x * x).sum::<f64>(), 0.0);
        for (j, gj) in basis.modes.iter().enumerate() {
            // <e^{i(k+G_i)x} | V | e^{i(k+G_j)x}> / |cell|
            let mut acc = ZERO;
            for (x, val) in &samples {
                let phase: f64 = gi
                    .iter()
                    .zip(gj)
                    .zip(x)
                    .map(|((a, b), x)| (b - a) as f64 * x)
                    .sum();
                acc += val * Complex64::from_polar(1.0, 2.0 * PI * phase);
            }
            h_cl[(i, j)] += acc / total as f64;
        }
    }
    let a = hermitian_eigenvalues(&h);
    let b = hermitian_eigenvalues(&h_cl);
    a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Samples of a function on the supercell, `values[cell * M^d + j]`, cells
/// in the grid order of [`BrillouinGrid`] with coordinates in `[-N/2, N/2)`
/// and intra-cell points `j` flattened with the first axis slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct SupercellSamples {
    pub cells: BrillouinGrid,
    pub points_per_cell: usize,
    pub values: Vec<Complex64>,
}

/// Samples `phi(k, j)`, `values[k_index * M^d + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberSamples {
    pub grid: BrillouinGrid,
    pub points_per_cell: usize,
    pub values: Vec<Complex64>,
}

fn intra_points(d: usize, m: usize) -> Vec<Vec<f64>> {
    let total = m.pow(d as u32);
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut out = vec![0.0; d];
            for axis in (0..d).rev() {
                out[axis] = (rem % m) as f64 / m as f64;
                rem /= m;
            }
            out
        })
        .collect()
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 || !m.is_power_of_two() {
        return Err(TopoError::InvalidParameter(format!(
            "points per cell must be a power of two, got {m}"
        )));
    }
    Ok(())
}

impl SupercellSamples {
    pub fn new(cells: BrillouinGrid, points_per_cell: usize, values: Vec<Complex64>) -> Result<Self> {
        check_m(points_per_cell)?;
        let expected = cells.len() * points_per_cell.pow(cells.dim() as u32);
        if values.len() != expected {
            return Err(TopoError::Shape(format!(
                "{} supercell samples, expected {expected}",
                values.len()
            )));
        }
        Ok(SupercellSamples {
            cells,
            points_per_cell,
            values,
        })
    }

    /// Lattice coordinates `c + j / M` of sample `idx`.
    pub fn position(&self, idx: usize) -> Vec<f64> {
        let per = self.points_per_cell.pow(self.cells.dim() as u32);
        let cell = self.cells.coords(idx / per);
        let intra = &intra_points(self.cells.dim(), self.points_per_cell)[idx % per];
        cell.iter().zip(intra).map(|(&c, y)| c as f64 + y).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl FiberSamples {
    pub fn new(grid: BrillouinGrid, points_per_cell: usize, values: Vec<Complex64>) -> Result<Self> {
        check_m(points_per_cell)?;
        let expected = grid.len() * points_per_cell.pow(grid.dim() as u32);
        if values.len() != expected {
            return Err(TopoError::Shape(format!(
                "{} fibre samples, expected {expected}",
                values.len()
            )));
        }
        Ok(FiberSamples {
            grid,
            points_per_cell,
            values,
        })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn transform_point(w: &SupercellSamples, k: &[f64], intra: &[Vec<f64>]) -> Vec<Complex64> {
    let per = intra.len();
    let norm = 1.0 / (w.cells.len() as f64).sqrt();
    let mut out = vec![ZERO; per];
    for cell in 0..w.cells.len() {
        let cc = w.cells.coords(cell);
        let cell_phase: f64 = k.iter().zip(&cc).map(|(k, &c)| k * c as f64).sum();
        let block = &w.values[cell * per..(cell + 1) * per];
        for (j, y) in intra.iter().enumerate() {
            let phase: f64 = cell_phase + k.iter().zip(y).map(|(k, y)| k * y).sum::<f64>();
            out[j] += block[j] * Complex64::from_polar(norm, -2.0 * PI * phase);
        }
    }
    out
}

/// Forward transform onto the k-grid with the same sizes as the supercell.
pub fn bf_forward(w: &SupercellSamples) -> Result<FiberSamples> {
    let grid = w.cells.clone();
    let intra = intra_points(grid.dim(), w.points_per_cell);
    let mut values = Vec::with_capacity(w.values.len());
    for i in 0..grid.len() {
        values.extend(transform_point(w, &grid.point(i), &intra));
    }
    FiberSamples::new(grid, w.points_per_cell, values)
}

/// Forward transform at an arbitrary (not necessarily grid) momentum.
pub fn bf_forward_at(w: &SupercellSamples, k: &[f64]) -> Result<Vec<Complex64>> {
    if k.len() != w.cells.dim() {
        return Err(TopoError::Shape("momentum dimension".into()));
    }
    Ok(transform_point(
        w,
        k,
        &intra_points(w.cells.dim(), w.points_per_cell),
    ))
}

/// Inverse transform back to the supercell.
pub fn bf_inverse(phi: &FiberSamples) -> Result<SupercellSamples> {
    let grid = &phi.grid;
    let intra = intra_points(grid.dim(), phi.points_per_cell);
    let per = intra.len();
    let norm = 1.0 / (grid.len() as f64).sqrt();
    let points = grid.points();
    let mut values = vec![ZERO; phi.values.len()];
    for cell in 0..grid.len() {
        let cc = grid.coords(cell);
        for (ki, k) in points.iter().enumerate() {
            let cell_phase: f64 = k.iter().zip(&cc).map(|(k, &c)| k * c as f64).sum();
            let block = &phi.values[ki * per..(ki + 1) * per];
            for (j, y) in intra.iter().enumerate() {
                let phase = cell_phase + k.iter().zip(y).map(|(k, y)| k * y).sum::<f64>();
                values[cell * per + j] += block[j] * Complex64::from_polar(norm, 2.0 * PI * phase);
            }
        }
    }
    SupercellSamples::new(grid.clone(), phi.points_per_cell, values)
}

/// Periodic function `u(y) = sum_G u_G exp(i 2 pi n.y)` sampled at the
/// `M^d` intra-cell points.
pub fn fourier_to_cell_samples(basis: &PlaneWaveBasis, coeffs: &[Complex64], m: usize) -> Vec<Complex64> {
    intra_points(basis.lattice().dim(), m)
        .iter()
        .map(|y| {
            basis
                .modes
                .iter()
                .zip(coeffs)
                .map(|(g, u)| {
                    let phase: f64 = g.iter().zip(y).map(|(&n, y)| n as f64 * y).sum();
                    u * Complex64::from_polar(1.0, 2.0 * PI * phase)
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::curvature_parity;
    use crate::linalg::frobenius;
    use crate::projectors::{verify_projector_symmetries, BandSelection, ProjectorFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain() -> Lattice {
        Lattice::cubic(1).unwrap()
    }

    #[test]
    fn free_particle_diagonal() {
        let basis = PlaneWaveBasis::new(&chain(), 2.0 * PI * 1.5).unwrap();
        assert_eq!(basis.modes(), &[vec![0], vec![-1], vec![1]]);
        let h = fibered_hamiltonian(&FourierPotential::zero(1), &basis, &[0.0]);
        let two_pi2 = 2.0 * PI * PI;
        for (i, e) in [0.0, two_pi2, two_pi2].iter().enumerate() {
            assert!((h[(i, i)].re - e).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_potential_couples_neighbours() {
        let basis = PlaneWaveBasis::new(&chain(), 2.0 * PI * 4.0).unwrap();
        let v = FourierPotential::cosine(1, 0, 1.0).unwrap();
        let h = fibered_hamiltonian(&v, &basis, &[0.0]);
        for (i, gi) in basis.modes().iter().enumerate() {
            for (j, gj) in basis.modes().iter().enumerate() {
                let expect = if (gi[0] - gj[0]).abs() == 1 { 1.0 } else { 0.0 };
                if i != j {
                    assert_eq!(h[(i, j)], c(expect, 0.0));
                }
            }
        }
    }

    #[test]
    fn cutoff_convergence() {
        let v = FourierPotential::cosine(1, 0, 1.0).unwrap();
        let e = |cut: f64| {
            let basis = PlaneWaveBasis::new(&chain(), 2.0 * PI * cut).unwrap();
            hermitian_eigenvalues(&fibered_hamiltonian(&v, &basis, &[0.0]))[0]
        };
        assert!((e(8.0) - e(16.0)).abs() < 1e-8);
    }

    #[test]
    fn potential_must_be_real() {
        let bad = FourierPotential::new(1, vec![(vec![1], c(1.0, 0.0)), (vec![-1], c(0.5, 0.0))]);
        assert!(bad.is_err());
        let ok = FourierPotential::new(1, vec![(vec![1], c(1.0, 0.3))]).unwrap();
        assert_eq!(ok.coefficient(&[-1]), c(1.0, -0.3));
        assert!(ok.evaluate(&[0.123]).im.abs() < 1e-14);
    }

    #[test]
    fn intertwiner_residuals() {
        let basis = PlaneWaveBasis::new(&chain(), 2.0 * PI * 5.0).unwrap();
        assert!(classical_intertwiner_check(&FourierPotential::zero(1), &basis, &[0.3]) < 1e-12);
        let v = FourierPotential::cosine(1, 0, 1.0).unwrap();
        assert!(classical_intertwiner_check(&v, &basis, &[0.3]) < 1e-9);
        assert!(classical_intertwiner_check(&v, &basis, &[0.0]) < 1e-12);
    }

    #[test]
    fn symmetry_operators() {
        let sq = Lattice::cubic(2).unwrap();
        let basis = PlaneWaveBasis::new(&sq, 2.0 * PI * 3.0).unwrap();
        let ops = fiber_symmetry_ops(&basis);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = CMat::from_fn(basis.len(), 1, |_, _| c(rng.random(), rng.random()));
        let r = ops.reflection.unitary();
        assert_eq!(r * (r * &v), v);
        assert_eq!(ops.theta.sign(), 1);
        // Theta tau(l) = tau(l)^{-1} Theta on the retained modes
        for l in [vec![1, 0], vec![0, 1], vec![1, -1]] {
            let x = ops.theta.apply(&ops.tau.apply(&l, &v));
            let minus: Vec<i64> = l.iter().map(|a| -a).collect();
            let y = ops.tau.apply(&minus, &ops.theta.apply(&v));
            let keep = |i: usize| {
                let g = &basis.modes()[i];
                let p: Vec<i64> = g.iter().zip(&l).map(|(a, b)| a - b).collect();
                let q: Vec<i64> = g.iter().zip(&l).map(|(a, b)| a + b).collect();
                basis.index_of(&p).is_some() && basis.index_of(&q).is_some()
            };
            for i in (0..basis.len()).filter(|&i| keep(i)) {
                assert_eq!(x[(i, 0)], y[(i, 0)]);
            }
        }
    }

    fn separable_2d() -> PlaneWaveHamiltonian {
        let sq = Lattice::cubic(2).unwrap();
        let basis = PlaneWaveBasis::new(&sq, 2.0 * PI * 6.0).unwrap();
        let v = FourierPotential::cosine(2, 0, -1.0)
            .unwrap()
            .plus(&FourierPotential::cosine(2, 1, -0.7).unwrap())
            .unwrap();
        PlaneWaveHamiltonian::new(basis, v, 1).unwrap()
    }

    #[test]
    fn real_even_potential_symmetries_and_flat_curvature() {
        let h = separable_2d();
        let fam = ProjectorFamily::occupied(&h);
        let grid = BrillouinGrid::new(&[8, 8]).unwrap();
        let audit = verify_projector_symmetries(&fam, &grid).unwrap();
        assert!(audit.time_reversal.as_ref().unwrap().residual < 1e-10);
        assert!(audit.space_reflection.as_ref().unwrap().residual < 1e-10);
        assert!(audit.tau.residual < 1e-10, "tau {}", audit.tau.residual);
        let parity = curvature_parity(&fam, &grid).unwrap();
        assert!(parity.max_abs < 1e-8);
    }

    #[test]
    fn spectra_are_tau_periodic_and_even() {
        let h = separable_2d();
        let k = [0.21, -0.37];
        let e0 = hermitian_eigenvalues(&h.hamiltonian(&k));
        let e1 = hermitian_eigenvalues(&h.hamiltonian(&[k[0] + 1.0, k[1]]));
        let em = hermitian_eigenvalues(&h.hamiltonian(&[-k[0], -k[1]]));
        for n in 0..4 {
            assert!((e0[n] - e1[n]).abs() < 1e-10, "{n} {}", e0[n] - e1[n]);
            assert!((e0[n] - em[n]).abs() < 1e-10);
        }
        let sel = BandSelection::lowest(1);
        let fam = ProjectorFamily::new(&h, &sel);
        let p0 = fam.projector(&k).unwrap();
        let p1 = fam.projector(&[k[0] + 1.0, k[1]]).unwrap();
        let conj = h.tau().conjugate(&[1, 0], &p0);
        // compare only where the shifted modes are retained
        let rule = match h.tau() {
            TauRep::Shift(r) => r.clone(),
            _ => unreachable!(),
        };
        let keep: Vec<bool> = rule.shifted_index(&[1, 0]).iter().map(Option::is_some).collect();
        let mut d = CMat::zeros(p0.nrows(), p0.ncols());
        for i in 0..p0.nrows() {
            for j in 0..p0.ncols() {
                if keep[i] && keep[j] {
                    d[(i, j)] = p1[(i, j)] - conj[(i, j)];
                }
            }
        }
        assert!(frobenius(&d) < 1e-10);
    }

    fn random_supercell(n: usize, m: usize, d: usize, seed: u64) -> SupercellSamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = BrillouinGrid::new(&vec![n; d]).unwrap();
        let len = cells.len() * m.pow(d as u32);
        let values = (0..len)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        SupercellSamples::new(cells, m, values).unwrap()
    }

    #[test]
    fn transform_is_unitary_and_invertible() {
        let w = random_supercell(8, 4, 1, 1);
        let phi = bf_forward(&w).unwrap();
        assert!((phi.norm() / w.norm() - 1.0).abs() < 1e-12);
        let back = bf_inverse(&phi).unwrap();
        let err: f64 = back
            .values
            .iter()
            .zip(&w.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-12 * w.norm());
    }

    #[test]
    fn single_cell_function_has_flat_modulus() {
        let cells = BrillouinGrid::new(&[8]).unwrap();
        let m = 4;
        let mut values = vec![ZERO; 8 * m];
        let home = cells.index_of(&[0]);
        for j in 0..m {
            values[home * m + j] = c(1.0 + j as f64, -0.5);
        }
        let w = SupercellSamples::new(cells, m, values).unwrap();
        let phi = bf_forward(&w).unwrap();
        for ki in 0..8 {
            let k = phi.grid.point(ki)[0];
            for j in 0..m {
                let y = j as f64 / m as f64;
                let expect =
                    w.values[home * m + j] * Complex64::from_polar(1.0 / 8f64.sqrt(), -2.0 * PI * k * y);
                assert!((phi.values[ki * m + j] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn image_of_home_cell_function_returns_home() {
        // phi(k, y) = c exp(-i 2 pi k y) is the image of a home-cell function
        let grid = BrillouinGrid::new(&[8]).unwrap();
        let m = 4;
        let cst = c(0.7, 0.2);
        let mut values = Vec::new();
        for ki in 0..8 {
            let k = grid.point(ki)[0];
            for j in 0..m {
                values.push(cst * Complex64::from_polar(1.0, -2.0 * PI * k * j as f64 / m as f64));
            }
        }
        let phi = FiberSamples::new(grid.clone(), m, values).unwrap();
        let w = bf_inverse(&phi).unwrap();
        let home = grid.index_of(&[0]);
        for (idx, z) in w.values.iter().enumerate() {
            let expect = if idx / m == home { cst * 8f64.sqrt() } else { ZERO };
            assert!((z - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn inverse_is_linear() {
        let a = bf_forward(&random_supercell(4, 2, 2, 5)).unwrap();
        let b = bf_forward(&random_supercell(4, 2, 2, 6)).unwrap();
        let (x, y) = (c(0.3, -1.1), c(2.0, 0.4));
        let combo = FiberSamples::new(
            a.grid.clone(),
            2,
            a.values
                .iter()
                .zip(&b.values)
                .map(|(p, q)| x * p + y * q)
                .collect(),
        )
        .unwrap();
        let lhs = bf_inverse(&combo).unwrap();
        let (ia, ib) = (bf_inverse(&a).unwrap(), bf_inverse(&b).unwrap());
        for i in 0..lhs.values.len() {
            assert!((lhs.values[i] - x * ia.values[i] - y * ib.values[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn forward_is_tau_equivariant() {
        let w = random_supercell(4, 4, 1, 2);
        let k = 0.137;
        let a = bf_forward_at(&w, &[k]).unwrap();
        let b = bf_forward_at(&w, &[k + 1.0]).unwrap();
        for j in 0..4 {
            let y = j as f64 / 4.0;
            assert!((b[j] - a[j] * Complex64::from_polar(1.0, -2.0 * PI * y)).norm() < 1e-12);
        }
    }

    #[test]
    fn potential_file_round_trip() {
        let v = FourierPotential::cosine(1, 0, 0.5).unwrap();
        let text = potential_to_json(&chain(), &v).unwrap();
        let (l, back) = potential_from_json(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(l, chain());
    }
}

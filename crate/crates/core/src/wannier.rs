//! Composite Wannier functions from Bloch frames and their localization.
//!
//! For tight-binding frames on an `N^d` grid,
//! `w_a(R) = N^{-d} sum_k exp(i 2 pi k.R) phi_a(k)` over the supercell
//! `R in [-N/2, N/2)^d`; positions are cell offsets in Cartesian units.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, TopoError};
use crate::floquet::{bf_inverse, fourier_to_cell_samples, FiberSamples, PlaneWaveBasis, SupercellSamples};
use crate::frames::Frame;
use crate::lattice::{BrillouinGrid, Lattice};
use crate::linalg::CMat;

/// Largest moment order accepted by [`localization_moments`].
pub const MAX_MOMENT: u32 = 4;
/// Relative boundary amplitude above which a decay fit is flagged.
pub const BOUNDARY_RATIO: f64 = 1e-6;

/// Wannier functions on a supercell: `data[cell]` is the
/// `orbitals x m` block `w_a(R, orbital)`, cells in grid order.
#[derive(Clone, Debug, PartialEq)]
pub struct WannierSet {
    pub lattice: Lattice,
    pub cells: BrillouinGrid,
    pub data: Vec<CMat>,
}

/// One-dimensional DFT along `axis` with kernel `exp(sign i 2 pi n c / N)`,
/// both indices running over `[-N/2, N/2)`.
fn dft_axis(data: &[CMat], grid: &BrillouinGrid, axis: usize, sign: f64) -> Vec<CMat> {
    let n = grid.sizes()[axis];
    let kernel: Vec<Vec<Complex64>> = (0..n)
        .map(|a| {
            let x = a as f64 - (n / 2) as f64;
            (0..n)
                .map(|b| {
                    let y = b as f64 - (n / 2) as f64;
                    Complex64::from_polar(1.0, sign * 2.0 * PI * x * y / n as f64)
                })
                .collect()
        })
        .collect();
    let mut out = vec![CMat::zeros(data[0].nrows(), data[0].ncols()); data.len()];
    for i in 0..grid.len() {
        let coords = grid.coords(i);
        let a = (coords[axis] + (n / 2) as i64) as usize;
        let mut c = coords.clone();
        for b in 0..n {
            c[axis] = b as i64 - (n / 2) as i64;
            out[i] += &data[grid.index_of(&c)] * kernel[a][b];
        }
    }
    out
}

fn transform(data: &[CMat], grid: &BrillouinGrid, sign: f64) -> Vec<CMat> {
    let mut cur = data.to_vec();
    for axis in 0..grid.dim() {
        cur = dft_axis(&cur, grid, axis, sign);
    }
    cur
}

impl WannierSet {
    pub fn new(lattice: Lattice, cells: BrillouinGrid, data: Vec<CMat>) -> Result<Self> {
        if data.len() != cells.len() || lattice.dim() != cells.dim() {
            return Err(TopoError::Shape(format!(
                "{} Wannier blocks for {} cells",
                data.len(),
                cells.len()
            )));
        }
        Ok(WannierSet { lattice, cells, data })
    }

    pub fn count(&self) -> usize {
        self.data.first().map_or(0, |d| d.ncols())
    }

    /// Cartesian position of cell `i`.
    pub fn position(&self, i: usize) -> Vec<f64> {
        let r: Vec<f64> = self.cells.coords(i).iter().map(|&c| c as f64).collect();
        self.lattice.cartesian_x(&r)
    }

    /// `|w_a(R)|^2` summed over orbitals.
    pub fn weight(&self, i: usize, a: usize) -> f64 {
        self.data[i].column(a).norm_squared()
    }

    /// `sum_R |w_a(R)|^2`.
    pub fn norm_squared(&self, a: usize) -> f64 {
        (0..self.cells.len()).map(|i| self.weight(i, a)).sum()
    }

    /// Largest `|<w_a(. - R), w_b>_{l2} - delta_ab delta_R0|` over all `R`.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.count();
        let mut worst = 0.0_f64;
        for shift in 0..self.cells.len() {
            let s = self.cells.coords(shift);
            let mut gram = CMat::zeros(m, m);
            for i in 0..self.cells.len() {
                let c: Vec<i64> = self.cells.coords(i).iter().zip(&s).map(|(a, b)| a - b).collect();
                let j = self.cells.index_of(&c);
                gram += self.data[j].adjoint() * &self.data[i];
            }
            let at_home = s.iter().all(|&x| x == 0);
            for a in 0..m {
                for b in 0..m {
                    let expect = if at_home && a == b { 1.0 } else { 0.0 };
                    worst = worst.max((gram[(a, b)] - expect).norm());
                }
            }
        }
        worst
    }

    /// Forward transform back to the grid frame,
    /// `phi(k) = sum_R exp(-i 2 pi k.R) w(R)`.
    pub fn to_frame_columns(&self) -> Vec<CMat> {
        transform(&self.data, &self.cells, -1.0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.cells.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("R{j}")).collect();
        header.extend(["function", "orbital", "re", "im"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.cells.len() {
            let r = self.cells.coords(i);
            for a in 0..self.count() {
                for o in 0..self.data[i].nrows() {
                    let z = self.data[i][(o, a)];
                    let mut rec: Vec<String> = r.iter().map(i64::to_string).collect();
                    rec.extend([
                        a.to_string(),
                        o.to_string(),
                        format!("{}", z.re),
                        format!("{}", z.im),
                    ]);
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Inverse transform of a grid frame onto the matching supercell.
pub fn wannier_from_frame(frame: &Frame, lattice: &Lattice, supercell: &[usize]) -> Result<WannierSet> {
    let grid = frame
        .grid
        .as_ref()
        .ok_or_else(|| TopoError::Shape("Wannier functions need a frame on a grid".into()))?;
    if grid.sizes() != supercell {
        return Err(TopoError::Shape(format!(
            "frame grid {:?} does not match supercell {supercell:?}",
            grid.sizes()
        )));
    }
    if lattice.dim() != grid.dim() {
        return Err(TopoError::Dimension("lattice and frame dimensions differ".into()));
    }
    let scale = 1.0 / grid.len() as f64;
    let data = transform(&frame.columns, grid, 1.0)
        .into_iter()
        .map(|m| m.scale(scale))
        .collect();
    WannierSet::new(lattice.clone(), grid.clone(), data)
}

/// Wannier functions of a plane-wave frame sampled at `points_per_cell^d`
/// points in every supercell cell, one sample set per frame column.
pub fn plane_wave_wannier(
    frame: &Frame,
    basis: &PlaneWaveBasis,
    points_per_cell: usize,
) -> Result<Vec<SupercellSamples>> {
    let grid = frame
        .grid
        .as_ref()
        .ok_or_else(|| TopoError::Shape("Wannier functions need a frame on a grid".into()))?;
    let per = points_per_cell.pow(grid.dim() as u32);
    let norm = 1.0 / (per as f64).sqrt();
    (0..frame.rank())
        .map(|a| {
            let mut values = Vec::with_capacity(grid.len() * per);
            for phi in &frame.columns {
                let coeffs: Vec<Complex64> = phi.column(a).iter().cloned().collect();
                values.extend(
                    fourier_to_cell_samples(basis, &coeffs, points_per_cell)
                        .into_iter()
                        .map(|z| z * norm),
                );
            }
            bf_inverse(&FiberSamples::new(grid.clone(), points_per_cell, values)?)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationReport {
    /// `r -> sum_a sum_R (1 + |x|^2)^r |w_a(R)|^2`.
    pub moments: BTreeMap<u32, f64>,
    /// `sum_a sum_R |x - c_a|^2 |w_a(R)|^2` with `c_a` the centroid.
    pub spread: f64,
    pub centres: Vec<Vec<f64>>,
}

pub fn localization_moments(w: &WannierSet, r_max: u32) -> Result<LocalizationReport> {
    if r_max == 0 || r_max > MAX_MOMENT {
        return Err(TopoError::InvalidParameter(format!(
            "moment order {r_max} outside 1..={MAX_MOMENT}"
        )));
    }
    let positions: Vec<Vec<f64>> = (0..w.cells.len()).map(|i| w.position(i)).collect();
    let mut moments = BTreeMap::new();
    for r in 1..=r_max {
        let total: f64 = (0..w.cells.len())
            .map(|i| {
                let x2: f64 = positions[i].iter().map(|x| x * x).sum();
                let weight: f64 = (0..w.count()).map(|a| w.weight(i, a)).sum();
                (1.0 + x2).powi(r as i32) * weight
            })
            .sum();
        moments.insert(r, total);
    }
    let d = w.cells.dim();
    let mut spread = 0.0;
    let mut centres = Vec::with_capacity(w.count());
    for a in 0..w.count() {
        let norm = w.norm_squared(a);
        let mut c = vec![0.0; d];
        for (i, x) in positions.iter().enumerate() {
            for j in 0..d {
                c[j] += x[j] * w.weight(i, a) / norm;
            }
        }
        for (i, x) in positions.iter().enumerate() {
            let dist: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            spread += dist * w.weight(i, a);
        }
        centres.push(c);
    }
    Ok(LocalizationReport {
        moments,
        spread,
        centres,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Rate in `|w| ~ exp(-beta |x|)`.
    pub beta: f64,
    pub r_squared: f64,
    /// `beta > 0` and `r_squared > 0.99`.
    pub exponential: bool,
    /// Largest amplitude on the supercell boundary relative to the maximum.
    pub boundary_ratio: f64,
    pub boundary_contaminated: bool,
    pub shells_used: usize,
}

/// Least-squares fit of `log(shell max |w|)` against `|x|` over the radii
/// `[0.2, 0.8] N/2` (in units of the shortest lattice vector).
pub fn decay_fit(w: &WannierSet) -> Result<DecayFit> {
    let unit = (0..w.cells.dim())
        .map(|j| w.lattice.basis().column(j).norm())
        .fold(f64::INFINITY, f64::min);
    let half = w.cells.sizes().iter().cloned().min().unwrap_or(0) as f64 / 2.0;
    let amp: Vec<f64> = (0..w.cells.len())
        .map(|i| (0..w.count()).map(|a| w.weight(i, a)).sum::<f64>().sqrt())
        .collect();
    let peak = amp.iter().cloned().fold(0.0_f64, f64::max);
    if peak == 0.0 {
        return Err(TopoError::Shape("Wannier set is identically zero".into()));
    }
    let edge = (0..w.cells.len())
        .filter(|&i| {
            w.cells
                .coords(i)
                .iter()
                .zip(w.cells.sizes())
                .any(|(&c, &n)| c == -(n as i64) / 2)
        })
        .map(|i| amp[i])
        .fold(0.0_f64, f64::max);
    let boundary_ratio = edge / peak;

    let mut shells: BTreeMap<i64, f64> = BTreeMap::new();
    for (i, a) in amp.iter().enumerate() {
        let r = w.position(i).iter().map(|x| x * x).sum::<f64>().sqrt() / unit;
        let key = r.round() as i64;
        let e = shells.entry(key).or_insert(0.0);
        *e = e.max(*a);
    }
    let (lo, hi) = (0.2 * half, 0.8 * half);
    let pts: Vec<(f64, f64)> = shells
        .iter()
        .filter(|(&r, &a)| (r as f64) >= lo && (r as f64) <= hi && a > 0.0)
        .map(|(&r, &a)| (r as f64 * unit, a.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(TopoError::Shape(format!(
            "only {} radial shells in the fit window; enlarge the supercell",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 0.0 } else { sxy * sxy / (sxx * syy) };
    let beta = -slope;
    Ok(DecayFit {
        beta,
        r_squared,
        exponential: beta > 0.0 && r_squared > 0.99,
        boundary_ratio,
        boundary_contaminated: boundary_ratio >= BOUNDARY_RATIO,
        shells_used: pts.len(),
    })
}

/// Moments, spread and decay fit in one serializable record.
#[derive(Clone, Debug, Serialize)]
pub struct WannierReport {
    pub schema: u32,
    pub cells: Vec<usize>,
    pub functions: usize,
    pub orthonormality_defect: f64,
    pub localization: LocalizationReport,
    pub decay: Option<DecayFit>,
}

pub fn wannier_report(w: &WannierSet, r_max: u32) -> Result<WannierReport> {
    Ok(WannierReport {
        schema: 1,
        cells: w.cells.sizes().to_vec(),
        functions: w.count(),
        orthonormality_defect: w.orthonormality_defect(),
        localization: localization_moments(w, r_max)?,
        decay: decay_fit(w).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{randomize_gauge, smooth_periodic_frame, transport_frame};
    use crate::linalg::{c, frobenius, random_unitary};
    use crate::models::{build_builtin, params};
    use crate::projectors::ProjectorFamily;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ssh_set(tp: f64, n: usize) -> (WannierSet, Frame) {
        let ssh = build_builtin("ssh", &params(&[("t", 1.0), ("tp", tp)])).unwrap();
        let fam = ProjectorFamily::occupied(&ssh);
        let frame = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[n]).unwrap()).unwrap();
        (wannier_from_frame(&frame, ssh.lattice(), &[n]).unwrap(), frame)
    }

    #[test]
    fn constant_frame_is_home_cell() {
        let grid = BrillouinGrid::new(&[8]).unwrap();
        let col = CMat::from_column_slice(2, 1, &[c(0.6, 0.0), c(0.0, 0.8)]);
        let frame = Frame {
            points: grid.points(),
            columns: vec![col.clone(); 8],
            grid: Some(grid),
            flags: Default::default(),
            diagnostics: Default::default(),
        };
        let w = wannier_from_frame(&frame, &Lattice::cubic(1).unwrap(), &[8]).unwrap();
        for i in 0..8 {
            let expect = if w.cells.coords(i)[0] == 0 {
                col.clone()
            } else {
                CMat::zeros(2, 1)
            };
            assert!(frobenius(&(&w.data[i] - expect)) < 1e-14);
        }
        let rep = localization_moments(&w, 4).unwrap();
        for r in 1..=4 {
            assert!((rep.moments[&r] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_orthonormality_and_round_trip() {
        let (w, frame) = ssh_set(0.5, 32);
        assert!((w.norm_squared(0) - 1.0).abs() < 1e-10);
        assert!(w.orthonormality_defect() < 1e-8);
        let back = w.to_frame_columns();
        for (a, b) in back.iter().zip(&frame.columns) {
            assert!(frobenius(&(a - b)) < 1e-10);
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (_, frame) = ssh_set(0.5, 16);
        assert!(wannier_from_frame(&frame, &Lattice::cubic(1).unwrap(), &[32]).is_err());
    }

    #[test]
    fn atomic_limit() {
        let (w, _) = ssh_set(0.0, 16);
        let rep = localization_moments(&w, 2).unwrap();
        assert!(rep.spread < 1e-6, "spread {}", rep.spread);
        let support = (0..16).filter(|&i| w.weight(i, 0) > 1e-12).count();
        assert!(support <= 2);
    }

    #[test]
    fn planted_exponential_is_recovered() {
        let cells = BrillouinGrid::new(&[64]).unwrap();
        let data = (0..64)
            .map(|i| {
                let r = cells.coords(i)[0].abs() as f64;
                CMat::from_element(1, 1, c((-r).exp(), 0.0))
            })
            .collect();
        let w = WannierSet::new(Lattice::cubic(1).unwrap(), cells, data).unwrap();
        let fit = decay_fit(&w).unwrap();
        assert!((fit.beta - 1.0).abs() < 0.01);
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn smooth_versus_random_gauge() {
        let (w, frame) = ssh_set(0.6, 64);
        let fit = decay_fit(&w).unwrap();
        assert!(fit.exponential, "{fit:?}");
        let smooth = localization_moments(&w, 4).unwrap();
        let rough =
            wannier_from_frame(&randomize_gauge(&frame, 1), &Lattice::cubic(1).unwrap(), &[64]).unwrap();
        let rough_rep = localization_moments(&rough, 4).unwrap();
        assert!(rough_rep.spread > 10.0 * smooth.spread);
        assert!(!decay_fit(&rough).unwrap().exponential);
    }

    #[test]
    fn moments_are_stable_under_doubling() {
        let (a, _) = ssh_set(0.6, 64);
        let (b, _) = ssh_set(0.6, 128);
        let (ra, rb) = (
            localization_moments(&a, 4).unwrap(),
            localization_moments(&b, 4).unwrap(),
        );
        for r in 1..=4 {
            let rel = (ra.moments[&r] - rb.moments[&r]).abs() / rb.moments[&r];
            assert!(rel < 0.01, "r = {r}: {rel}");
            if r > 1 {
                assert!(ra.moments[&r] >= ra.moments[&(r - 1)]);
            }
        }
    }

    #[test]
    fn constant_unitary_mixing_preserves_moments() {
        let km = build_builtin("kane_mele", &params(&[("lv", 0.5)])).unwrap();
        let fam = ProjectorFamily::occupied(&km);
        let frame = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[16, 16]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(2, &mut rng);
        let mut mixed = frame.clone();
        for col in &mut mixed.columns {
            *col = &*col * &u;
        }
        let a = wannier_from_frame(&frame, km.lattice(), &[16, 16]).unwrap();
        let b = wannier_from_frame(&mixed, km.lattice(), &[16, 16]).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!(frobenius(&(x * &u - y)) < 1e-10);
        }
        let (ra, rb) = (
            localization_moments(&a, 4).unwrap(),
            localization_moments(&b, 4).unwrap(),
        );
        for r in 1..=4 {
            assert!((ra.moments[&r] - rb.moments[&r]).abs() < 1e-10 * ra.moments[&r]);
        }
    }

    #[test]
    fn haldane_moments_grow() {
        let h = build_builtin("haldane", &params(&[])).unwrap();
        let fam = ProjectorFamily::occupied(&h);
        let mut last = 0.0;
        for n in [16, 32] {
            let frame = transport_frame(&fam, &BrillouinGrid::new(&[n, n]).unwrap()).unwrap();
            let w = wannier_from_frame(&frame, h.lattice(), &[n, n]).unwrap();
            let m2 = localization_moments(&w, 2).unwrap().moments[&2];
            assert!(m2 > last);
            last = m2;
        }
    }
}

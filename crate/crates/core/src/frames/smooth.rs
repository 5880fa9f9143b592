//! Periodic frames on grids by successive line transport.
//!
//! The frame at the first grid point is transported along axis 0, closed up
//! with a logarithm of the end mismatch, then every point of that line is
//! transported along axis 1, and so on. Each axis stage leaves a family of
//! end mismatches `V(b)` over the already built sub-torus; the correction
//! `W(b, t)` runs from the identity to `V(b)^{-1}` and must be continuous
//! and periodic in `b`. It is assembled from a continuous determinant phase
//! (which exists exactly when the Chern numbers vanish) and a logarithm of
//! the special-unitary part centred at a reference unitary `Z` chosen away
//! from the mismatches' antipodes.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use super::{transport_step, Frame, FrameDiagnostics, FrameFlags};
use crate::error::{Result, TopoError};
use crate::geometry::chern_number_plaquette;
use crate::lattice::{BrillouinGrid, ReshuffleMatrix};
use crate::linalg::{
    determinant, eigenphases, expi_hermitian, frobenius, polar_unitary, random_unitary, unitary_generator,
    unitary_power, wrap_phase, CMat,
};
use crate::projectors::{require_gap, ProjectorFamily};

/// Below this margin from the branch cut the closing logarithm is treated as
/// discontinuous and the frame is not flagged smooth.
const MARGIN_FLOOR: f64 = 0.1;

/// Candidate reference unitaries tried besides the identity and the
/// mismatches themselves.
const RANDOM_CENTRES: usize = 16;

/// A smooth, tau-equivariant frame on `grid`. Fails with
/// [`TopoError::Obstruction`] when some coordinate Chern number is nonzero.
pub fn smooth_periodic_frame(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<Frame> {
    build(family, grid, true)
}

/// The same construction without the Chern precheck: a tau-equivariant
/// frame that is discontinuous across the wrap when the bundle is twisted.
pub fn transport_frame(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<Frame> {
    build(family, grid, false)
}

fn axis_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            out.push((a, b));
        }
    }
    out
}

struct Closure {
    theta: Vec<f64>,
    logs: Vec<CMat>,
    centre: CMat,
    margin: f64,
    windings: Vec<((usize, usize), i64)>,
}

impl Closure {
    fn correction(&self, b: usize, t: f64, m: usize) -> CMat {
        let phase = Complex64::from_polar(1.0, -t * self.theta[b] / m as f64);
        expi_hermitian(&self.logs[b], -t) * unitary_power(&self.centre, -t) * phase
    }
}

/// Offsets of the base points from the start, per already built axis.
fn base_coords(grid: &BrillouinGrid, idx: usize, axes: usize) -> Vec<usize> {
    grid.coords(idx)
        .iter()
        .take(axes)
        .enumerate()
        .map(|(j, &c)| (c + grid.sizes()[j] as i64 / 2) as usize)
        .collect()
}

fn close_family(grid: &BrillouinGrid, base: &[usize], mismatches: &[CMat], axis: usize, m: usize) -> Closure {
    let nb = base.len();
    let raw: Vec<f64> = mismatches.iter().map(|v| determinant(v).arg()).collect();
    let mut theta = vec![0.0; nb];
    let mut windings = Vec::new();
    if axis > 0 {
        // base points are ordered like the grid restricted to the first
        // `axis` axes; the predecessor decrements the last nonzero offset
        let sizes = &grid.sizes()[..axis];
        let pos = |c: &[usize]| c.iter().zip(sizes).fold(0usize, |acc, (&x, &s)| acc * s + x);
        let coords: Vec<Vec<usize>> = base.iter().map(|&i| base_coords(grid, i, axis)).collect();
        for b in 0..nb {
            let c = &coords[b];
            match (0..axis).rev().find(|&j| c[j] > 0) {
                None => theta[b] = raw[b],
                Some(j) => {
                    let mut p = c.clone();
                    p[j] -= 1;
                    let pb = pos(&p);
                    theta[b] = theta[pb] + wrap_phase(raw[b] - theta[pb]);
                }
            }
        }
        for j in 0..axis {
            let mut total = 0i64;
            let mut counted = 0usize;
            for b in 0..nb {
                let c = &coords[b];
                if c[j] + 1 != sizes[j] {
                    continue;
                }
                let mut q = c.clone();
                q[j] = 0;
                let jump = theta[pos(&q)] - theta[b];
                total += ((jump - wrap_phase(jump)) / (2.0 * PI)).round() as i64;
                counted += 1;
            }
            let w = (total as f64 / counted.max(1) as f64).round() as i64;
            if w != 0 {
                windings.push(((j, axis), -w));
            }
        }
    } else {
        theta[0] = raw[0];
    }
    let special: Vec<CMat> = mismatches
        .iter()
        .zip(&theta)
        .map(|(v, th)| v * Complex64::from_polar(1.0, -th / m as f64))
        .collect();
    let margin_of = |z: &CMat| {
        special
            .iter()
            .map(|s| {
                let worst = eigenphases(&(z.adjoint() * s))
                    .iter()
                    .fold(0.0_f64, |a, p| a.max(p.abs()));
                PI - worst
            })
            .fold(f64::INFINITY, f64::min)
    };
    let identity = crate::linalg::identity(m);
    let mut centre = identity.clone();
    let mut margin = margin_of(&identity);
    if axis > 0 && m > 1 && margin < PI / 2.0 {
        let stride = (nb / 64).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let candidates: Vec<CMat> = special
            .iter()
            .step_by(stride)
            .cloned()
            .chain((0..RANDOM_CENTRES).map(|_| random_unitary(m, &mut rng)))
            .collect();
        for z in candidates {
            let g = margin_of(&z);
            if g > margin {
                margin = g;
                centre = z;
            }
        }
    }
    let logs = special
        .iter()
        .map(|s| unitary_generator(&(centre.adjoint() * s)))
        .collect();
    Closure {
        theta,
        logs,
        centre,
        margin,
        windings,
    }
}

fn build(family: &ProjectorFamily, grid: &BrillouinGrid, strict: bool) -> Result<Frame> {
    let d = grid.dim();
    require_gap(family, grid)?;
    if strict && d >= 2 {
        let mut nonzero = Vec::new();
        for pair in axis_pairs(d) {
            let c = chern_number_plaquette(family, grid, pair)?;
            if c.value != 0 {
                nonzero.push((pair, c.value));
            }
        }
        if !nonzero.is_empty() {
            return Err(TopoError::Obstruction(nonzero));
        }
    }
    let tau = family.tau();
    let mut columns: Vec<Option<CMat>> = vec![None; grid.len()];
    columns[0] = Some(family.eigenframe(&grid.point(0))?.frame);
    let m = columns[0].as_ref().map_or(0, |c| c.ncols());
    let mut equivariance = 0.0_f64;
    let mut margin = f64::INFINITY;
    let mut windings = Vec::new();

    for axis in 0..d {
        let n = grid.sizes()[axis];
        let base: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                grid.coords(i)
                    .iter()
                    .enumerate()
                    .skip(axis)
                    .all(|(j, &c)| c == -(grid.sizes()[j] as i64) / 2)
            })
            .collect();
        let mut lambda = vec![0i64; d];
        lambda[axis] = 1;
        let mut lines: Vec<Vec<CMat>> = Vec::with_capacity(base.len());
        let mut mismatches = Vec::with_capacity(base.len());
        for &b in &base {
            let start = columns[b].clone().expect("base points are built first");
            let mut phi = start.clone();
            let mut line = vec![start.clone()];
            let mut k = grid.point(b);
            for _ in 0..n {
                k[axis] += 1.0 / n as f64;
                let p = family.projector(&k)?;
                phi = transport_step(&p, &phi);
                line.push(phi.clone());
            }
            let target = tau.apply(&lambda, &start);
            mismatches.push(polar_unitary(&(target.adjoint() * &phi)));
            lines.push(line);
        }
        let closure = close_family(grid, &base, &mismatches, axis, m);
        if axis > 0 && m > 1 {
            margin = margin.min(closure.margin);
        }
        if strict && !closure.windings.is_empty() {
            return Err(TopoError::Obstruction(closure.windings));
        }
        windings.extend(closure.windings.iter().cloned());
        for (bi, &b) in base.iter().enumerate() {
            let start_coords = grid.coords(b);
            for s in 0..=n {
                let fixed = &lines[bi][s] * closure.correction(bi, s as f64 / n as f64, m);
                if s == n {
                    let target = tau.apply(&lambda, columns[b].as_ref().expect("built"));
                    equivariance = equivariance.max(frobenius(&(fixed - target)));
                    continue;
                }
                let mut c = start_coords.clone();
                c[axis] += s as i64;
                columns[grid.index_of(&c)] = Some(fixed);
            }
        }
    }

    let columns: Vec<CMat> = columns
        .into_iter()
        .map(|c| c.expect("every grid point visited"))
        .collect();
    let mut frame = Frame {
        points: grid.points(),
        columns,
        grid: Some(grid.clone()),
        flags: FrameFlags {
            smooth: windings.is_empty() && (margin.is_infinite() || margin > MARGIN_FLOOR),
            tau_equivariant: equivariance < 1e-10,
            tr_symmetric: false,
        },
        diagnostics: FrameDiagnostics {
            equivariance_residual: equivariance,
            log_margin: margin.is_finite().then_some(margin),
            ..FrameDiagnostics::default()
        },
    };
    frame.check(family)?;
    frame.diagnostics.max_derivative = frame_derivative(&frame, family)?;
    if let Some(t) = family.time_reversal() {
        let f3 = f3_residual(&frame, family, t)?;
        frame.diagnostics.f3_residual = Some(f3);
        frame.flags.tr_symmetric = f3 < 1e-8;
    }
    Ok(frame)
}

/// Largest discrete derivative `||tau Phi(k + h e_j) - Phi(k)||_F / h` over
/// the grid and its axes.
pub fn frame_derivative(frame: &Frame, family: &ProjectorFamily) -> Result<f64> {
    let grid = frame
        .grid
        .as_ref()
        .ok_or_else(|| TopoError::Shape("frame is not defined on a grid".into()))?;
    let tau = family.tau();
    let mut worst = 0.0_f64;
    for i in 0..grid.len() {
        for axis in 0..grid.dim() {
            let (j, wrap) = grid.neighbor(i, axis, 1);
            let mut lambda = vec![0i64; grid.dim()];
            lambda[axis] = wrap;
            let next = tau.apply(&lambda, &frame.columns[j]);
            worst = worst.max(frobenius(&(next - &frame.columns[i])) / grid.spacing(axis));
        }
    }
    Ok(worst)
}

fn f3_residual(frame: &Frame, family: &ProjectorFamily, theta: &crate::lattice::TimeReversal) -> Result<f64> {
    let grid = frame.grid.as_ref().expect("grid frame");
    let m = frame.rank();
    if theta.is_fermionic() && m % 2 != 0 {
        return Ok(f64::INFINITY);
    }
    let eps = ReshuffleMatrix::for_time_reversal(m, theta)?.matrix();
    let neg = grid.negation_permutation();
    let tau = family.tau();
    let mut worst = 0.0_f64;
    for i in 0..grid.len() {
        let j = neg[i];
        let (a, b) = (grid.coords(i), grid.coords(j));
        let back: Vec<i64> = (0..grid.dim())
            .map(|ax| -((a[ax] + b[ax]) / grid.sizes()[ax] as i64))
            .collect();
        let minus = tau.apply(&back, &frame.columns[j]);
        worst = worst.max(frobenius(&(minus - theta.apply(&frame.columns[i]) * &eps)));
    }
    Ok(worst)
}

/// Right-multiply every sample by an independent Haar-random unitary.
pub fn randomize_gauge(frame: &Frame, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = frame.rank();
    let mut out = frame.clone();
    for c in &mut out.columns {
        *c = &*c * random_unitary(m, &mut rng);
    }
    out.flags.smooth = false;
    out.flags.tr_symmetric = false;
    out.diagnostics.max_derivative = f64::NAN;
    out.diagnostics.f3_residual = None;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;
    use crate::models::{build_builtin, params, random_gapped_chain};

    fn check_frame(frame: &Frame) {
        assert!(frame.diagnostics.orthonormality < 1e-10);
        assert!(frame.diagnostics.range_residual < 1e-10);
        assert!(frame.flags.tau_equivariant);
    }

    #[test]
    fn ssh_frame_is_smooth_and_stable() {
        let ssh = build_builtin("ssh", &params(&[("t", 1.0), ("tp", 0.6)])).unwrap();
        let fam = ProjectorFamily::occupied(&ssh);
        let a = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[32]).unwrap()).unwrap();
        let b = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[64]).unwrap()).unwrap();
        check_frame(&a);
        assert!(a.flags.smooth);
        let ratio = b.diagnostics.max_derivative / a.diagnostics.max_derivative;
        assert!(ratio < 1.5, "ratio {ratio}");
    }

    #[test]
    fn random_chains_admit_frames() {
        for seed in 0..5 {
            let chain = random_gapped_chain(seed).unwrap();
            let fam = ProjectorFamily::occupied(&chain);
            let f = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[32]).unwrap()).unwrap();
            check_frame(&f);
        }
    }

    #[test]
    fn haldane_topological_phase_is_obstructed() {
        let h = build_builtin("haldane", &params(&[])).unwrap();
        let fam = ProjectorFamily::occupied(&h);
        let grid = BrillouinGrid::new(&[16, 16]).unwrap();
        match smooth_periodic_frame(&fam, &grid) {
            Err(TopoError::Obstruction(v)) => assert_eq!(v[0].1.abs(), 1),
            other => panic!("expected obstruction, got {other:?}"),
        }
        let f = transport_frame(&fam, &grid).unwrap();
        check_frame(&f);
        assert!(!f.flags.smooth);
    }

    #[test]
    fn haldane_trivial_phase_frame() {
        let h = build_builtin("haldane", &params(&[("M", 2.0)])).unwrap();
        let fam = ProjectorFamily::occupied(&h);
        let f = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[16, 16]).unwrap()).unwrap();
        check_frame(&f);
        assert!(f.flags.smooth);
        let g = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[32, 32]).unwrap()).unwrap();
        assert!(g.diagnostics.max_derivative / f.diagnostics.max_derivative < 1.5);
    }

    #[test]
    fn kane_mele_frame_exists() {
        for lv in [0.1, 0.5] {
            let km = build_builtin("kane_mele", &params(&[("lv", lv)])).unwrap();
            let fam = ProjectorFamily::occupied(&km);
            let f = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[16, 16]).unwrap()).unwrap();
            check_frame(&f);
            assert!(f.flags.smooth, "lv {lv}: margin {:?}", f.diagnostics.log_margin);
            let g = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[32, 32]).unwrap()).unwrap();
            let ratio = g.diagnostics.max_derivative / f.diagnostics.max_derivative;
            assert!(ratio < 1.5, "lv {lv}: ratio {ratio}");
        }
    }

    #[test]
    fn three_dimensional_trivial_frame() {
        let wd = build_builtin("wilson_dirac_3d", &params(&[("m", -4.0)])).unwrap();
        let fam = ProjectorFamily::occupied(&wd);
        let f = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[8, 8, 8]).unwrap()).unwrap();
        check_frame(&f);
    }

    #[test]
    fn random_gauge_keeps_unitarity() {
        let ssh = build_builtin("ssh", &params(&[])).unwrap();
        let fam = ProjectorFamily::occupied(&ssh);
        let f = smooth_periodic_frame(&fam, &BrillouinGrid::new(&[16]).unwrap()).unwrap();
        let g = randomize_gauge(&f, 9);
        for c in &g.columns {
            assert!(unitarity_defect(c) < 1e-12);
        }
        assert!(frame_derivative(&g, &fam).unwrap() > 5.0 * f.diagnostics.max_derivative);
    }
}

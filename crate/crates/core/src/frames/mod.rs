//! Bloch frames: Kato-Nagy intertwiners, discrete parallel transport,
//! Kramers frames at time-reversal invariant momenta, smooth periodic
//! frames and the Z2 invariants.

mod smooth;
mod z2;

pub use smooth::{frame_derivative, randomize_gauge, smooth_periodic_frame, transport_frame};
pub use z2::{
    wilson_flow, wilson_loop_phases, z2_3d, z2_boundary_winding, z2_boundary_winding_seeded, z2_wilson_flow,
    PlaneZ2, WilsonFlow, Z2Diagnostics, Z2Method, Z2Quadruple, Z2Result,
};

use rand::Rng;
use serde::Serialize;

use crate::error::{Result, TopoError};
use crate::lattice::{BrillouinGrid, ReshuffleMatrix, TimeReversal};
use crate::linalg::{
    frobenius, hermitian_function, identity, op_norm, polar_unitary, trace, unitarity_defect, CMat, CVec,
};
use crate::projectors::ProjectorFamily;

/// Closest distance to 1 that [`kato_nagy`] accepts for `||P1 - P2||`.
pub const KATO_NAGY_MARGIN: f64 = 1e-8;

/// Orthonormal frames `Phi(k)` of `Ran P(k)` on a grid or along a path.
#[derive(Clone, Debug)]
pub struct Frame {
    /// Sample momenta (reduced coordinates, unfolded along paths).
    pub points: Vec<Vec<f64>>,
    /// `m_H x m` column blocks, one per point.
    pub columns: Vec<CMat>,
    /// Present when the samples are the points of a grid, in grid order.
    pub grid: Option<BrillouinGrid>,
    pub flags: FrameFlags,
    pub diagnostics: FrameDiagnostics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrameFlags {
    /// Discrete proxy for smoothness: no branch jumps were introduced.
    pub smooth: bool,
    pub tau_equivariant: bool,
    pub tr_symmetric: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    /// `max ||Phi^dagger Phi - I||_F`.
    pub orthonormality: f64,
    /// `max ||P Phi - Phi||_F`.
    pub range_residual: f64,
    /// Largest `||Phi(k + h e_j) - Phi(k)||_F / h` (grid frames only).
    pub max_derivative: f64,
    /// Mismatch between the closed-up line ends and `tau(e_j) Phi`.
    pub equivariance_residual: f64,
    /// `max ||Phi(-k) - Theta Phi(k) eps||_F` when time reversal is present.
    pub f3_residual: Option<f64>,
    /// Smallest distance of a closing logarithm's spectrum from the branch
    /// cut (only for multi-line constructions).
    pub log_margin: Option<f64>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.columns.first().map_or(0, |c| c.ncols())
    }

    /// Recompute the orthonormality and range diagnostics against `family`.
    pub fn check(&mut self, family: &ProjectorFamily) -> Result<()> {
        let mut ortho = 0.0_f64;
        let mut range = 0.0_f64;
        for (k, phi) in self.points.iter().zip(&self.columns) {
            ortho = ortho.max(unitarity_defect(phi));
            let p = family.projector(k)?;
            range = range.max(frobenius(&(&p * phi - phi)));
        }
        self.diagnostics.orthonormality = ortho;
        self.diagnostics.range_residual = range;
        Ok(())
    }
}

/// The Kato-Nagy unitary `W = (1 - (P2 - P1)^2)^{-1/2} (P2 P1 + (1 - P2)(1 - P1))`
/// with `W P1 W^dagger = P2`.
pub fn kato_nagy(p1: &CMat, p2: &CMat) -> Result<CMat> {
    let n = p1.nrows();
    if p1.shape() != p2.shape() || p1.ncols() != n {
        return Err(TopoError::Shape(
            "projectors must be square and of equal size".into(),
        ));
    }
    let d = p2 - p1;
    let dist = op_norm(&d);
    if dist >= 1.0 - KATO_NAGY_MARGIN {
        return Err(TopoError::TooFar(dist));
    }
    let one = identity(n);
    let inv_sqrt = hermitian_function(&(&one - &d * &d), |x| (1.0 / x.sqrt()).into());
    Ok(inv_sqrt * (p2 * p1 + (&one - p2) * (&one - p1)))
}

/// One transport step: the polar factor of `P(k_next) Phi`.
pub fn transport_step(p_next: &CMat, phi: &CMat) -> CMat {
    polar_unitary(&(p_next * phi))
}

/// Discrete parallel transport of `start` (a frame of `P(path[0])`) along
/// `path`.
pub fn parallel_transport(family: &ProjectorFamily, start: &CMat, path: &[Vec<f64>]) -> Result<Frame> {
    if path.is_empty() {
        return Err(TopoError::Shape("empty transport path".into()));
    }
    let mut prev = family.projector(&path[0])?;
    let mut phi = polar_unitary(&(&prev * start));
    let mut columns = vec![phi.clone()];
    for (j, k) in path.iter().enumerate().skip(1) {
        let p = family.projector(k)?;
        let dist = op_norm(&(&p - &prev));
        if dist >= 1.0 - KATO_NAGY_MARGIN {
            return Err(TopoError::Refinement(format!(
                "transport segment {} -> {} has projector distance {dist:.3}",
                j - 1,
                j
            )));
        }
        phi = transport_step(&p, &phi);
        columns.push(phi.clone());
        prev = p;
    }
    let mut frame = Frame {
        points: path.to_vec(),
        columns,
        grid: None,
        flags: FrameFlags {
            smooth: true,
            ..FrameFlags::default()
        },
        diagnostics: FrameDiagnostics::default(),
    };
    frame.check(family)?;
    Ok(frame)
}

fn rank_of(p: &CMat) -> usize {
    trace(p).re.round().max(0.0) as usize
}

/// A frame of `Ran P` with `Phi = Theta_eff Phi eps`, i.e. columns
/// `phi_{a + m/2} = eps_{a, a + m/2} Theta_eff phi_a`.
pub fn kramers_frame(p: &CMat, theta_eff: &TimeReversal, eps: &ReshuffleMatrix) -> Result<CMat> {
    kramers_frame_with(p, theta_eff, eps, None::<&mut rand_chacha::ChaCha8Rng>)
}

/// As [`kramers_frame`]; with `rng` the seed vectors are random instead of
/// the largest columns of the remaining projector.
pub fn kramers_frame_with<R: Rng>(
    p: &CMat,
    theta_eff: &TimeReversal,
    eps: &ReshuffleMatrix,
    mut rng: Option<&mut R>,
) -> Result<CMat> {
    let m = rank_of(p);
    if !theta_eff.is_fermionic() {
        return Err(TopoError::Symmetry(
            "Kramers frames need a fermionic time reversal".into(),
        ));
    }
    if m % 2 != 0 {
        return Err(TopoError::OddRank(m));
    }
    if eps.size() != m || !eps.is_fermionic() {
        return Err(TopoError::Shape(format!(
            "reshuffling matrix of size {} for rank {m}",
            eps.size()
        )));
    }
    let invariance = frobenius(&(theta_eff.conjugate(p) - p));
    if invariance > 1e-9 {
        return Err(TopoError::Symmetry(format!(
            "Theta_eff does not preserve Ran P (defect {invariance:e})"
        )));
    }
    let n = p.nrows();
    let e = eps.matrix();
    let h = m / 2;
    let mut rest = p.clone();
    let mut firsts: Vec<CVec> = Vec::with_capacity(h);
    let mut seconds: Vec<CVec> = Vec::with_capacity(h);
    for a in 0..h {
        let seed: CVec = match rng.as_deref_mut() {
            Some(r) => {
                let v = CVec::from_fn(n, |_, _| {
                    crate::linalg::c(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)
                });
                &rest * v
            }
            None => {
                let best = (0..n)
                    .max_by(|&i, &j| rest.column(i).norm().total_cmp(&rest.column(j).norm()))
                    .expect("nonempty");
                rest.column(best).into_owned()
            }
        };
        let norm = seed.norm();
        if norm < 1e-6 {
            return Err(TopoError::Refinement(
                "remaining Kramers subspace collapsed".into(),
            ));
        }
        let phi = seed.unscale(norm);
        let mat = CMat::from_columns(&[phi.clone()]);
        let partner = theta_eff.apply(&mat).column(0) * e[(a, a + h)];
        rest -= &phi * phi.adjoint() + &partner * partner.adjoint();
        firsts.push(phi);
        seconds.push(partner);
    }
    let cols: Vec<CVec> = firsts.into_iter().chain(seconds).collect();
    Ok(CMat::from_columns(&cols))
}

/// `||Phi - Theta_eff Phi eps||_F`.
pub fn kramers_residual(phi: &CMat, theta_eff: &TimeReversal, eps: &ReshuffleMatrix) -> f64 {
    frobenius(&(phi - theta_eff.apply(phi) * eps.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::trim_points;
    use crate::linalg::{c, projector_from_frame, random_unitary, ONE, ZERO};
    use crate::models::{build_builtin, params};
    use crate::projectors::MatrixFamily;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rank1(v: &[num_complex::Complex64]) -> CMat {
        let col = CVec::from_vec(v.to_vec());
        let col = col.unscale(col.norm());
        &col * col.adjoint()
    }

    #[test]
    fn kato_nagy_identity_and_rotation() {
        let p = rank1(&[ONE, ZERO]);
        let w = kato_nagy(&p, &p).unwrap();
        assert!(frobenius(&(w - identity(2))) < 1e-12);
        let t: f64 = 0.3;
        let q = rank1(&[c(t.cos(), 0.0), c(t.sin(), 0.0)]);
        let w = kato_nagy(&p, &q).unwrap();
        let rot = CMat::from_row_slice(
            2,
            2,
            &[
                c(t.cos(), 0.0),
                c(-t.sin(), 0.0),
                c(t.sin(), 0.0),
                c(t.cos(), 0.0),
            ],
        );
        assert!(frobenius(&(w - rot)) < 1e-12);
        let far = rank1(&[ZERO, ONE]);
        assert!(matches!(kato_nagy(&p, &far), Err(TopoError::TooFar(_))));
    }

    #[test]
    fn kato_nagy_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tested = 0;
        while tested < 1000 {
            let n = rng.random_range(2..=8);
            let m = rng.random_range(1..=4.min(n - 1));
            let u = random_unitary(n, &mut rng);
            let f1 = u.columns(0, m).into_owned();
            let p1 = projector_from_frame(&f1);
            let g = crate::linalg::random_hermitian(n, &mut rng).scale(0.2);
            let p2 = crate::linalg::expi_hermitian(&g, 1.0);
            let p2 = &p2 * &p1 * p2.adjoint();
            if op_norm(&(&p2 - &p1)) >= 0.99 {
                continue;
            }
            let w = kato_nagy(&p1, &p2).unwrap();
            assert!(unitarity_defect(&w) < 1e-10);
            assert!(frobenius(&(&w * &p1 * w.adjoint() - &p2)) < 1e-9);
            tested += 1;
        }
    }

    #[test]
    fn kato_nagy_tends_to_identity() {
        let p = rank1(&[ONE, ZERO, ZERO]);
        let mut ratios = Vec::new();
        for s in [1e-2, 1e-3, 1e-4] {
            let q = rank1(&[ONE, c(s, 0.0), c(0.0, s)]);
            let w = kato_nagy(&p, &q).unwrap();
            ratios.push(frobenius(&(w - identity(3))) / frobenius(&(&q - &p)));
        }
        assert!(ratios.iter().all(|r| *r < 2.0));
    }

    fn twisted_family(alpha: f64) -> MatrixFamily {
        // P(t) onto (cos t, exp(i alpha t) sin t), with t the first coordinate
        MatrixFamily::new(1, 2, move |k: &[f64]| {
            let t = k[0];
            let v = CVec::from_vec(vec![
                c(t.cos(), 0.0),
                num_complex::Complex64::from_polar(t.sin(), alpha * t),
            ]);
            -(&v * v.adjoint())
        })
        .with_occupied(1)
    }

    fn geodesic_error(alpha: f64, steps: usize) -> f64 {
        let fam_src = twisted_family(alpha);
        let fam = ProjectorFamily::occupied(&fam_src);
        let path: Vec<Vec<f64>> = (0..=steps)
            .map(|j| vec![PI / 2.0 * j as f64 / steps as f64])
            .collect();
        let start = CMat::from_column_slice(2, 1, &[ONE, ZERO]);
        let frame = parallel_transport(&fam, &start, &path).unwrap();
        let mut worst = 0.0_f64;
        for (k, phi) in path.iter().zip(&frame.columns) {
            let t = k[0];
            let gamma = -alpha * (t / 2.0 - (2.0 * t).sin() / 4.0);
            let exact = CVec::from_vec(vec![
                num_complex::Complex64::from_polar(t.cos(), gamma),
                num_complex::Complex64::from_polar(t.sin(), alpha * t + gamma),
            ]);
            worst = worst.max((phi.column(0) - exact).norm());
        }
        worst
    }

    #[test]
    fn real_geodesic_is_transported_exactly() {
        let e = geodesic_error(0.0, 100);
        assert!(e < 1e-12);
    }

    #[test]
    fn transport_converges_at_second_order() {
        let e1 = geodesic_error(1.3, 100);
        let e2 = geodesic_error(1.3, 200);
        assert!(e1 < 1e-3);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn transport_of_constant_family_is_identity() {
        let h = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(-1.0, 0.0),
            c(0.5, 0.0),
            c(2.0, 0.0),
        ]));
        let src = MatrixFamily::constant(1, h).with_occupied(1);
        let fam = ProjectorFamily::occupied(&src);
        let start = CMat::from_column_slice(3, 1, &[ONE, ZERO, ZERO]);
        let path: Vec<Vec<f64>> = (0..10).map(|j| vec![j as f64 / 10.0]).collect();
        let frame = parallel_transport(&fam, &start, &path).unwrap();
        for phi in &frame.columns {
            assert!(frobenius(&(phi - &start)) < 1e-14);
        }
    }

    #[test]
    fn kramers_frames() {
        let theta = TimeReversal::new(CMat::from_row_slice(2, 2, &[ZERO, ONE, -ONE, ZERO]), -1).unwrap();
        let eps = ReshuffleMatrix::new(2, true).unwrap();
        let phi = kramers_frame(&identity(2), &theta, &eps).unwrap();
        assert!(kramers_residual(&phi, &theta, &eps) < 1e-15);

        let km = build_builtin("kane_mele", &params(&[])).unwrap();
        let fam = ProjectorFamily::occupied(&km);
        let t = km.time_reversal().unwrap();
        for trim in trim_points(km.lattice()) {
            let p = fam.projector(&trim.reduced).unwrap();
            let phi = kramers_frame(&p, t, &eps).unwrap();
            assert!(kramers_residual(&phi, t, &eps) < 1e-10);
            assert!(unitarity_defect(&phi) < 1e-10);
            assert!(frobenius(&(&p * &phi - &phi)) < 1e-10);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let phi = kramers_frame_with(&p, t, &eps, Some(&mut rng)).unwrap();
            assert!(kramers_residual(&phi, t, &eps) < 1e-10);
        }
    }

    #[test]
    fn kramers_rejects_odd_rank() {
        let km = build_builtin("kane_mele", &params(&[])).unwrap();
        let t = km.time_reversal().unwrap();
        let fam = ProjectorFamily::new(
            &km,
            &crate::projectors::BandSelection::IndexWindow { start: 0, count: 3 },
        );
        let p = fam.projector(&[0.1, 0.23]).unwrap();
        let eps = ReshuffleMatrix::new(2, true).unwrap();
        assert!(matches!(kramers_frame(&p, t, &eps), Err(TopoError::OddRank(3))));
    }
}

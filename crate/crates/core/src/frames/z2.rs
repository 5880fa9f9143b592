//! Z2 invariants of fermionic time-reversal symmetric families.
//!
//! Boundary winding: on the effective cell `[0, 1/2] x [-1/2, 1/2]` a frame
//! `Psi` that extends over the whole cell is compared with a frame `Phi`
//! that obeys the time-reversal relation on the boundary; `delta` is the
//! parity of the winding of `det(Psi^dagger Phi)` around the boundary.
//!
//! Wilson flow: eigenphases of the Wilson loop along `k1` are followed from
//! `k2 = 0` to `k2 = 1/2`; `delta` is the parity of their crossings of a
//! reference line.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{kramers_frame_with, kramers_residual, transport_step};
use crate::error::{Result, TopoError};
use crate::lattice::{BrillouinGrid, ReshuffleMatrix, TimeReversal};
use crate::linalg::{
    determinant, eigenphases, frobenius, op_norm, polar_unitary, random_unitary, unitary_power, wrap_phase,
    CMat,
};
use crate::projectors::{require_gap, BandSelection, BlochHamiltonian, PlaneRestriction, ProjectorFamily};

/// Randomized gauge trials run by [`z2_boundary_winding`].
pub const GAUGE_TRIALS: usize = 10;
/// Largest accepted change of `arg det U` between boundary samples.
pub const MAX_BOUNDARY_STEP: f64 = PI / 2.0;
/// Largest accepted eigenphase motion between flow samples before the
/// `k2` step is halved.
pub const MAX_FLOW_STEP: f64 = PI / 4.0;
/// Bisection depth limit for the flow.
const MAX_FLOW_DEPTH: usize = 10;
/// Time-reversal residual accepted on the boundary samples.
const TR_TOLERANCE: f64 = 1e-8;
/// Transport steps whose projectors differ by more than this (operator
/// norm) are subdivided.
const MAX_TRANSPORT_JUMP: f64 = 0.2;
const MAX_TRANSPORT_DEPTH: usize = 12;
/// Top-edge intervals whose `arg det U` step exceeds this are bisected.
const MAX_EDGE_STEP: f64 = PI / 4.0;
const MAX_EDGE_DEPTH: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Z2Method {
    BoundaryWinding,
    WilsonFlow,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Z2Diagnostics {
    /// Largest per-sample phase change (of `det U`, or of a tracked
    /// Wilson eigenphase).
    pub max_step_phase: f64,
    /// Randomized gauge trials run and whether all reproduced `delta`.
    pub gauge_trials: usize,
    pub gauge_consistent: bool,
    /// Distance of the accumulated winding from the nearest integer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winding_defect: Option<f64>,
    /// Largest Kramers residual of the corner frames.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kramers_residual: Option<f64>,
    /// Mismatch of the two constructions of the symmetric frame at the
    /// corners where they meet.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corner_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_line: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossings: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Z2Result {
    pub method: Z2Method,
    pub delta: u8,
    /// Winding of `det U` (boundary method) or signed crossing count (flow).
    pub winding: i64,
    pub diagnostics: Z2Diagnostics,
}

impl Z2Result {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

fn parity(w: i64) -> u8 {
    w.rem_euclid(2) as u8
}

fn check_preconditions(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<TimeReversal> {
    if grid.dim() != 2 || family.dim() != 2 {
        return Err(TopoError::Dimension(
            "the Z2 invariant needs a two-dimensional family".into(),
        ));
    }
    let theta = family
        .time_reversal()
        .ok_or_else(|| TopoError::Symmetry("no time reversal attached".into()))?
        .clone();
    if !theta.is_fermionic() {
        return Err(TopoError::Symmetry(
            "the Z2 invariant needs a fermionic time reversal".into(),
        ));
    }
    // An odd index window can never be gapped under fermionic time
    // reversal; report the rank rather than the Kramers crossing.
    if let BandSelection::IndexWindow { count, .. } = family.selection() {
        if count % 2 != 0 {
            return Err(TopoError::OddRank(*count));
        }
    }
    require_gap(family, grid)?;
    let m = family.eigenframe(&grid.point(0))?.range.len();
    if m % 2 != 0 {
        return Err(TopoError::OddRank(m));
    }
    Ok(theta)
}

fn theta_at(theta: &TimeReversal, family: &ProjectorFamily, lambda: &[i64]) -> Result<TimeReversal> {
    if lambda.iter().all(|&l| l == 0) || family.tau().is_trivial() {
        return Ok(theta.clone());
    }
    theta.compose_unitary(&family.tau().matrix(lambda, family.fiber_dim()))
}

fn tr_defect(family: &ProjectorFamily, theta: &TimeReversal, k: &[f64], p: &CMat) -> Result<f64> {
    let minus: Vec<f64> = k.iter().map(|x| -x).collect();
    let pm = family.projector(&minus)?;
    Ok(frobenius(&(pm - theta.conjugate(p))))
}

/// Projectors on the comb `(k1_s, k2_r)`, `k1_s = s / N1` for
/// `s = 0..=N1/2`, `k2_r = -1/2 + r / N2` for `r = 0..=N2`.
struct Comb {
    n1: usize,
    n2: usize,
    projectors: Vec<Vec<CMat>>,
}

impl Comb {
    fn new(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<Self> {
        let (n1, n2) = (grid.sizes()[0], grid.sizes()[1]);
        let projectors = (0..=n1 / 2)
            .into_par_iter()
            .map(|s| {
                (0..=n2)
                    .map(|r| family.projector(&Self::point(n1, n2, s, r)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Comb { n1, n2, projectors })
    }

    fn point(n1: usize, n2: usize, s: usize, r: usize) -> [f64; 2] {
        [s as f64 / n1 as f64, -0.5 + r as f64 / n2 as f64]
    }

    fn k(&self, s: usize, r: usize) -> [f64; 2] {
        Self::point(self.n1, self.n2, s, r)
    }

    /// Bottom-edge transport, then vertical transport up every column.
    fn transport(&self, family: &ProjectorFamily, start: &CMat) -> Result<Vec<Vec<CMat>>> {
        let mut bottom = vec![polar_unitary(&(&self.projectors[0][0] * start))];
        for s in 1..=self.n1 / 2 {
            let next = refined_step(
                family,
                self.k(s - 1, 0),
                self.k(s, 0),
                &self.projectors[s - 1][0],
                &self.projectors[s][0],
                &bottom[s - 1],
                0,
            )?;
            bottom.push(next);
        }
        bottom
            .into_iter()
            .enumerate()
            .map(|(s, phi)| {
                let x = self.k(s, 0)[0];
                self.column(family, x, phi, |r| Ok(self.projectors[s][r].clone()))
            })
            .collect()
    }

    /// Vertical transport at `k1 = x` from the bottom frame `phi`, with
    /// `projector(r)` giving `P(x, k2_r)`.
    fn column(
        &self,
        family: &ProjectorFamily,
        x: f64,
        phi: CMat,
        projector: impl Fn(usize) -> Result<CMat>,
    ) -> Result<Vec<CMat>> {
        let mut col = vec![phi];
        let mut prev = projector(0)?;
        for r in 1..=self.n2 {
            let p = projector(r)?;
            let ka = [x, self.k(0, r - 1)[1]];
            let kb = [x, self.k(0, r)[1]];
            let next = refined_step(family, ka, kb, &prev, &p, &col[r - 1], 0)?;
            col.push(next);
            prev = p;
        }
        Ok(col)
    }
}

/// Transport `phi` from `ka` to `kb`, halving the segment while the
/// endpoint projectors are far apart.
fn refined_step(
    family: &ProjectorFamily,
    ka: [f64; 2],
    kb: [f64; 2],
    pa: &CMat,
    pb: &CMat,
    phi: &CMat,
    depth: usize,
) -> Result<CMat> {
    if depth >= MAX_TRANSPORT_DEPTH || op_norm(&(pb - pa)) <= MAX_TRANSPORT_JUMP {
        return Ok(transport_step(pb, phi));
    }
    let km = [0.5 * (ka[0] + kb[0]), 0.5 * (ka[1] + kb[1])];
    let pm = family.projector(&km)?;
    let mid = refined_step(family, ka, km, pa, &pm, phi, depth + 1)?;
    refined_step(family, km, kb, &pm, pb, &mid, depth + 1)
}

/// The closed boundary loop as comb indices, counterclockwise from
/// `(0, -1/2)` and ending there again.
fn boundary_loop(n1: usize, n2: usize) -> Vec<(usize, usize)> {
    let h1 = n1 / 2;
    let mut out = Vec::with_capacity(n1 + 2 * n2 + 1);
    out.extend((0..=h1).map(|s| (s, 0)));
    out.extend((1..=n2).map(|r| (h1, r)));
    out.extend((0..h1).rev().map(|s| (s, n2)));
    out.extend((0..n2).rev().map(|r| (0, r)));
    out
}

struct BoundaryData {
    comb: Comb,
    theta: TimeReversal,
    /// Effective time reversals at A = (0,-1/2), B = (1/2,-1/2),
    /// C = (1/2,0), D = (0,0).
    corners: [TimeReversal; 4],
    eps: ReshuffleMatrix,
    tau_e1_inv: CMat,
    tau_e2: CMat,
}

fn boundary_data(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<BoundaryData> {
    let theta = check_preconditions(family, grid)?;
    let (n1, n2) = (grid.sizes()[0], grid.sizes()[1]);
    let comb = Comb::new(family, grid)?;
    let mut tr = 0.0_f64;
    for &(s, r) in &boundary_loop(n1, n2) {
        tr = tr.max(tr_defect(family, &theta, &comb.k(s, r), &comb.projectors[s][r])?);
    }
    if tr > TR_TOLERANCE {
        return Err(TopoError::Symmetry(format!(
            "time reversal violated on the boundary (defect {tr:e})"
        )));
    }
    let corners = [
        theta_at(&theta, family, &[0, -1])?,
        theta_at(&theta, family, &[1, -1])?,
        theta_at(&theta, family, &[1, 0])?,
        theta.clone(),
    ];
    let m = family.eigenframe(&grid.point(0))?.range.len();
    let n = family.fiber_dim();
    Ok(BoundaryData {
        comb,
        eps: ReshuffleMatrix::new(m, true)?,
        tau_e1_inv: family.tau().matrix(&[-1, 0], n),
        tau_e2: family.tau().matrix(&[0, 1], n),
        theta,
        corners,
    })
}

fn winding_once(
    family: &ProjectorFamily,
    data: &BoundaryData,
    seed: Option<u64>,
) -> Result<(i64, Z2Diagnostics)> {
    let comb = &data.comb;
    let (n1, n2) = (comb.n1, comb.n2);
    let (h1, h2) = (n1 / 2, n2 / 2);
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let m = data.eps.size();

    let a0 = &comb.projectors[0][0];
    let mut start = crate::linalg::hermitian_eigen(&(-a0.clone()))
        .1
        .columns(0, m)
        .into_owned();
    if let Some(r) = rng.as_mut() {
        start = start * random_unitary(m, r);
    }
    let psi = comb.transport(family, &start)?;

    // Kramers frames at the four independent corners
    let corner_idx = [(0, 0), (h1, 0), (h1, h2), (0, h2)];
    let mut kramers = Vec::with_capacity(4);
    let mut kr = 0.0_f64;
    for (c, &(s, r)) in corner_idx.iter().enumerate() {
        let phi = kramers_frame_with(&comb.projectors[s][r], &data.corners[c], &data.eps, rng.as_mut())?;
        kr = kr.max(kramers_residual(&phi, &data.corners[c], &data.eps));
        kramers.push(phi);
    }
    let matching: Vec<CMat> = corner_idx
        .iter()
        .zip(&kramers)
        .map(|(&(s, r), k)| polar_unitary(&(psi[s][r].adjoint() * k)))
        .collect();
    let geodesic = |from: usize, to: usize, t: f64| -> CMat {
        let step = matching[from].adjoint() * &matching[to];
        &matching[from] * unitary_power(&step, t)
    };

    // symmetric frame on the lower halves, then its images
    let eps = data.eps.matrix();
    let bottom: Vec<CMat> = (0..=h1)
        .map(|s| &psi[s][0] * geodesic(0, 1, s as f64 / h1 as f64))
        .collect();
    let right_low: Vec<CMat> = (0..=h2)
        .map(|r| &psi[h1][r] * geodesic(1, 2, r as f64 / h2 as f64))
        .collect();
    let left_low: Vec<CMat> = (0..=h2)
        .map(|r| &psi[0][r] * geodesic(3, 0, (h2 - r) as f64 / h2 as f64))
        .collect();
    let phi_hat = |s: usize, r: usize| -> CMat {
        if r == 0 {
            bottom[s].clone()
        } else if r == n2 {
            &data.tau_e2 * &bottom[s]
        } else if s == h1 {
            if r <= h2 {
                right_low[r].clone()
            } else {
                data.theta.apply(&(&data.tau_e1_inv * &right_low[n2 - r])) * &eps
            }
        } else if r <= h2 {
            left_low[r].clone()
        } else {
            data.theta.apply(&left_low[n2 - r]) * &eps
        }
    };
    // the two constructions meet at the upper corners
    let corner = frobenius(&(data.theta.apply(&(&data.tau_e1_inv * &right_low[0])) * &eps - phi_hat(h1, n2)))
        .max(frobenius(
            &(data.theta.apply(&left_low[0]) * &eps - phi_hat(0, n2)),
        ));

    // arg det U on the top edge at any k1 = x, for bisection
    let top_phase = |x: f64| -> Result<f64> {
        let s_lo = ((x * n1 as f64).floor() as usize).min(h1 - 1);
        let kb = [x, -0.5];
        let pb = family.projector(&kb)?;
        let base = refined_step(
            family,
            comb.k(s_lo, 0),
            kb,
            &comb.projectors[s_lo][0],
            &pb,
            &psi[s_lo][0],
            0,
        )?;
        let col = comb.column(family, x, base.clone(), |r| {
            family.projector(&[x, -0.5 + r as f64 / n2 as f64])
        })?;
        let u = col[n2].adjoint() * &data.tau_e2 * (&base * geodesic(0, 1, 2.0 * x));
        Ok(determinant(&u).arg())
    };

    let mut total = 0.0;
    let mut max_step = 0.0_f64;
    let mut prev: Option<((usize, usize), f64)> = None;
    for (s, r) in boundary_loop(n1, n2) {
        let u = psi[s][r].adjoint() * phi_hat(s, r);
        let phase = determinant(&u).arg();
        if let Some(((ps, pr), p)) = prev {
            if pr == n2 && r == n2 {
                let (xa, xb) = (comb.k(ps, 0)[0], comb.k(s, 0)[0]);
                total += bisect_edge(&top_phase, (xa, p), (xb, phase), 0, &mut max_step)?;
            } else {
                let step = wrap_phase(phase - p);
                max_step = max_step.max(step.abs());
                total += step;
            }
        }
        prev = Some(((s, r), phase));
    }
    let w = total / (2.0 * PI);
    let winding = w.round() as i64;
    let diag = Z2Diagnostics {
        max_step_phase: max_step,
        gauge_trials: 0,
        gauge_consistent: true,
        winding_defect: Some((w - winding as f64).abs()),
        kramers_residual: Some(kr),
        corner_residual: Some(corner),
        ..Z2Diagnostics::default()
    };
    if corner > 1e-8 {
        return Err(TopoError::Symmetry(format!(
            "boundary frame inconsistent at the upper corners ({corner:e})"
        )));
    }
    if max_step > MAX_BOUNDARY_STEP {
        return Err(TopoError::Refinement(format!(
            "det U changes by {max_step:.3} between boundary samples"
        )));
    }
    Ok((winding, diag))
}

/// Phase increment of `f` from `a` to `b`, halving the interval while a
/// step exceeds [`MAX_EDGE_STEP`].
fn bisect_edge(
    f: &dyn Fn(f64) -> Result<f64>,
    a: (f64, f64),
    b: (f64, f64),
    depth: usize,
    max_step: &mut f64,
) -> Result<f64> {
    let step = wrap_phase(b.1 - a.1);
    if step.abs() <= MAX_EDGE_STEP || depth >= MAX_EDGE_DEPTH {
        *max_step = max_step.max(step.abs());
        return Ok(step);
    }
    let xm = 0.5 * (a.0 + b.0);
    let m = (xm, f(xm)?);
    Ok(bisect_edge(f, a, m, depth + 1, max_step)? + bisect_edge(f, m, b, depth + 1, max_step)?)
}

/// Z2 invariant from the winding of `det U` around the effective cell,
/// checked against [`GAUGE_TRIALS`] randomized gauges.
pub fn z2_boundary_winding(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<Z2Result> {
    let data = boundary_data(family, grid)?;
    let (winding, mut diag) = winding_once(family, &data, None)?;
    let delta = parity(winding);
    let trials: Vec<Result<i64>> = (1..=GAUGE_TRIALS as u64)
        .into_par_iter()
        .map(|seed| winding_once(family, &data, Some(seed)).map(|r| r.0))
        .collect();
    let mut consistent = true;
    for t in trials {
        consistent &= parity(t?) == delta;
    }
    diag.gauge_trials = GAUGE_TRIALS;
    diag.gauge_consistent = consistent;
    if !consistent {
        return Err(TopoError::Refinement(
            "randomized gauges disagree on the winding parity".into(),
        ));
    }
    Ok(Z2Result {
        method: Z2Method::BoundaryWinding,
        delta,
        winding,
        diagnostics: diag,
    })
}

/// One boundary-winding evaluation with the initial frame and the Kramers
/// seeds randomized by `seed`.
pub fn z2_boundary_winding_seeded(
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
    seed: u64,
) -> Result<Z2Result> {
    let data = boundary_data(family, grid)?;
    let (winding, mut diag) = winding_once(family, &data, Some(seed))?;
    diag.gauge_trials = 1;
    Ok(Z2Result {
        method: Z2Method::BoundaryWinding,
        delta: parity(winding),
        winding,
        diagnostics: diag,
    })
}

/// Eigenphases in `(-pi, pi]` of the unitarized Wilson loop along `k1` at
/// fixed `k2`, from `n1` frames. With `seed` every frame is first rotated
/// by an independent random unitary.
pub fn wilson_loop_phases(
    family: &ProjectorFamily,
    k2: f64,
    n1: usize,
    seed: Option<u64>,
) -> Result<Vec<f64>> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut frames = Vec::with_capacity(n1);
    for s in 0..n1 {
        let mut f = family.eigenframe(&[-0.5 + s as f64 / n1 as f64, k2])?.frame;
        if let Some(r) = rng.as_mut() {
            let m = f.ncols();
            f = f * random_unitary(m, r);
        }
        frames.push(f);
    }
    let last = family.tau().apply(&[1, 0], &frames[0]);
    let m = frames[0].ncols();
    let mut w = crate::linalg::identity(m);
    for s in 0..n1 {
        let next = if s + 1 == n1 { &last } else { &frames[s + 1] };
        w *= polar_unitary(&(frames[s].adjoint() * next));
    }
    Ok(eigenphases(&w))
}

/// Wannier-centre flow: Wilson-loop eigenphases for `k2` in `[0, 1/2]`,
/// each row reordered to continue the previous one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WilsonFlow {
    pub k2: Vec<f64>,
    pub phases: Vec<Vec<f64>>,
}

impl WilsonFlow {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.phases.first().map_or(0, Vec::len);
        let mut header = vec!["k2".to_string()];
        header.extend((0..m).map(|a| format!("phase_{a}")));
        w.write_record(&header)?;
        for (k, row) in self.k2.iter().zip(&self.phases) {
            let mut rec = vec![format!("{k}")];
            rec.extend(row.iter().map(|p| format!("{p}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Reorder `next` to follow `prev`; returns the order and the largest move.
fn match_phases(prev: &[f64], next: &[f64]) -> (Vec<f64>, f64) {
    let m = prev.len();
    let cost = |perm: &[usize]| {
        perm.iter()
            .enumerate()
            .map(|(a, &b)| wrap_phase(next[b] - prev[a]).abs())
            .fold(0.0_f64, f64::max)
    };
    let order: Vec<usize> = if m <= 6 {
        permutations(m)
            .into_iter()
            .min_by(|a, b| cost(a).total_cmp(&cost(b)))
            .expect("at least one permutation")
    } else {
        let mut used = vec![false; m];
        prev.iter()
            .map(|&p| {
                let b = (0..m)
                    .filter(|&b| !used[b])
                    .min_by(|&x, &y| {
                        wrap_phase(next[x] - p)
                            .abs()
                            .total_cmp(&wrap_phase(next[y] - p).abs())
                    })
                    .expect("unused phase");
                used[b] = true;
                b
            })
            .collect()
    };
    let c = cost(&order);
    (order.into_iter().map(|b| next[b]).collect(), c)
}

/// Wilson-loop eigenphases followed continuously over `k2` in `[0, 1/2]`,
/// halving steps where phases move more than [`MAX_FLOW_STEP`].
pub fn wilson_flow(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<WilsonFlow> {
    let (n1, n2) = (grid.sizes()[0], grid.sizes()[1]);
    let coarse: Vec<f64> = (0..=n2 / 2).map(|j| j as f64 / n2 as f64).collect();
    let rows: Vec<Vec<f64>> = coarse
        .par_iter()
        .map(|&k2| wilson_loop_phases(family, k2, n1, None))
        .collect::<Result<_>>()?;
    let mut k2s = vec![coarse[0]];
    let mut phases = vec![rows[0].clone()];
    for j in 1..coarse.len() {
        refine_segment(
            family,
            n1,
            (coarse[j - 1], coarse[j]),
            &rows[j],
            0,
            &mut k2s,
            &mut phases,
        )?;
    }
    Ok(WilsonFlow { k2: k2s, phases })
}

fn refine_segment(
    family: &ProjectorFamily,
    n1: usize,
    (a, b): (f64, f64),
    at_b: &[f64],
    depth: usize,
    k2s: &mut Vec<f64>,
    phases: &mut Vec<Vec<f64>>,
) -> Result<()> {
    let prev = phases.last().expect("flow starts with a row").clone();
    let (ordered, step) = match_phases(&prev, at_b);
    if step <= MAX_FLOW_STEP {
        k2s.push(b);
        phases.push(ordered);
        return Ok(());
    }
    if depth >= MAX_FLOW_DEPTH {
        return Err(TopoError::Refinement(format!(
            "Wilson eigenphases move by {step:.3} between k2 = {a} and {b}"
        )));
    }
    let mid = 0.5 * (a + b);
    let at_mid = wilson_loop_phases(family, mid, n1, None)?;
    refine_segment(family, n1, (a, mid), &at_mid, depth + 1, k2s, phases)?;
    refine_segment(family, n1, (mid, b), at_b, depth + 1, k2s, phases)
}

/// Signed crossings of the line `reference` by the tracked phases.
fn count_crossings(flow: &WilsonFlow, reference: f64) -> (i64, usize) {
    let mut signed = 0i64;
    let mut total = 0usize;
    for w in flow.phases.windows(2) {
        for (p, q) in w[0].iter().zip(&w[1]) {
            let d = wrap_phase(q - p);
            // offset of the reference ahead of p, in [0, 2 pi)
            let ahead = (reference - p).rem_euclid(2.0 * PI);
            if d > 0.0 && ahead > 0.0 && ahead <= d {
                signed += 1;
                total += 1;
            } else if d < 0.0 && (ahead == 0.0 || ahead - 2.0 * PI >= d) {
                signed -= 1;
                total += 1;
            }
        }
    }
    (signed, total)
}

/// Z2 invariant from the parity of reference-line crossings of the
/// Wannier-centre flow.
pub fn z2_wilson_flow(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<Z2Result> {
    check_preconditions(family, grid)?;
    let flow = wilson_flow(family, grid)?;
    let ends: Vec<f64> = flow
        .phases
        .first()
        .into_iter()
        .chain(flow.phases.last())
        .flatten()
        .cloned()
        .collect();
    let mut reference = PI;
    for _ in 0..20 {
        if ends.iter().all(|p| wrap_phase(p - reference).abs() > 0.05) {
            break;
        }
        reference -= 0.1;
    }
    let (signed, total) = count_crossings(&flow, reference);
    let max_step = flow
        .phases
        .windows(2)
        .flat_map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(p, q)| wrap_phase(q - p).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0_f64, f64::max);
    Ok(Z2Result {
        method: Z2Method::WilsonFlow,
        delta: parity(signed),
        winding: signed,
        diagnostics: Z2Diagnostics {
            max_step_phase: max_step,
            gauge_trials: 0,
            gauge_consistent: true,
            reference_line: Some(reference),
            k2_samples: Some(flow.k2.len()),
            crossings: Some(total),
            ..Z2Diagnostics::default()
        },
    })
}

/// Both Z2 evaluations on one coordinate plane of a 3D family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlaneZ2 {
    pub axis: usize,
    pub value: f64,
    pub boundary: Z2Result,
    pub wilson: Z2Result,
    pub agree: bool,
}

/// The four 3D indices with the six-plane consistency check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Z2Quadruple {
    pub delta_1_0: u8,
    pub delta_1_plus: u8,
    pub delta_2_plus: u8,
    pub delta_3_plus: u8,
    /// `delta_{1,0} + delta_{1,+}` mod 2.
    pub strong: u8,
    /// `delta_{j,0} + delta_{j,+}` equal for all three axes.
    pub consistent: bool,
    /// Both methods agreed on every plane.
    pub methods_agree: bool,
    pub planes: Vec<PlaneZ2>,
}

impl Z2Quadruple {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Z2 indices of the six planes `k_j in {0, 1/2}` of a 3D family.
pub fn z2_3d(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<Z2Quadruple> {
    if grid.dim() != 3 || family.dim() != 3 {
        return Err(TopoError::Dimension(
            "z2_3d needs a three-dimensional family".into(),
        ));
    }
    let selection = family.selection().clone();
    let mut planes = Vec::with_capacity(6);
    for axis in 0..3 {
        let sizes: Vec<usize> = (0..3).filter(|&j| j != axis).map(|j| grid.sizes()[j]).collect();
        let plane_grid = BrillouinGrid::new(&sizes)?;
        for value in [0.0, 0.5] {
            let restricted = PlaneRestriction::new(family.source(), axis, value)?;
            let fam = ProjectorFamily::new(&restricted as &dyn BlochHamiltonian, &selection);
            let boundary = z2_boundary_winding(&fam, &plane_grid)?;
            let wilson = z2_wilson_flow(&fam, &plane_grid)?;
            let agree = boundary.delta == wilson.delta;
            planes.push(PlaneZ2 {
                axis,
                value,
                boundary,
                wilson,
                agree,
            });
        }
    }
    let d = |axis: usize, half: bool| planes[2 * axis + usize::from(half)].wilson.delta;
    let sums: Vec<u8> = (0..3).map(|j| (d(j, false) + d(j, true)) % 2).collect();
    Ok(Z2Quadruple {
        delta_1_0: d(0, false),
        delta_1_plus: d(0, true),
        delta_2_plus: d(1, true),
        delta_3_plus: d(2, true),
        strong: sums[0],
        consistent: sums.iter().all(|&s| s == sums[0]),
        methods_agree: planes.iter().all(|p| p.agree),
        planes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, ONE, ZERO};
    use crate::models::{build_builtin, params, stack_layers};
    use crate::projectors::MatrixFamily;

    fn both(name: &str, p: &[(&str, f64)], n: usize) -> (Z2Result, Z2Result) {
        let model = build_builtin(name, &params(p)).unwrap();
        let fam = ProjectorFamily::occupied(&model);
        let grid = BrillouinGrid::new(&[n, n]).unwrap();
        (
            z2_boundary_winding(&fam, &grid).unwrap(),
            z2_wilson_flow(&fam, &grid).unwrap(),
        )
    }

    #[test]
    fn kane_mele_phases() {
        let (b, w) = both("kane_mele", &[("lv", 0.1)], 24);
        assert_eq!((b.delta, w.delta), (1, 1), "{b:?} {w:?}");
        assert!(b.diagnostics.gauge_consistent);
        let (b, w) = both("kane_mele", &[("lv", 0.5)], 24);
        assert_eq!((b.delta, w.delta), (0, 0));
    }

    #[test]
    fn bhz_band_inversion() {
        let (b, w) = both("bhz", &[("M", -0.5)], 16);
        assert_eq!((b.delta, w.delta), (1, 1));
        let (b, w) = both("bhz", &[("M", 0.5)], 16);
        assert_eq!((b.delta, w.delta), (0, 0));
    }

    #[test]
    fn flat_family_is_trivial() {
        let theta = TimeReversal::new(CMat::from_row_slice(2, 2, &[ZERO, ONE, -ONE, ZERO]), -1).unwrap();
        let mut h = CMat::zeros(4, 4);
        for (i, e) in [-1.0, -1.0, 1.0, 1.0].iter().enumerate() {
            h[(i, i)] = c(*e, 0.0);
        }
        let mut u = CMat::zeros(4, 4);
        u.view_mut((0, 0), (2, 2)).copy_from(theta.unitary());
        u.view_mut((2, 2), (2, 2)).copy_from(theta.unitary());
        let src = MatrixFamily::constant(2, h)
            .with_occupied(2)
            .with_time_reversal(TimeReversal::new(u, -1).unwrap());
        let fam = ProjectorFamily::occupied(&src);
        let grid = BrillouinGrid::new(&[8, 8]).unwrap();
        let w = z2_wilson_flow(&fam, &grid).unwrap();
        assert_eq!((w.delta, w.diagnostics.crossings), (0, Some(0)));
        assert_eq!(z2_boundary_winding(&fam, &grid).unwrap().delta, 0);
    }

    #[test]
    fn gauge_randomization_does_not_change_delta() {
        let km = build_builtin("kane_mele", &params(&[])).unwrap();
        let fam = ProjectorFamily::occupied(&km);
        let grid = BrillouinGrid::new(&[16, 16]).unwrap();
        for seed in 0..10 {
            assert_eq!(
                z2_boundary_winding_seeded(&fam, &grid, 100 + seed).unwrap().delta,
                1
            );
        }
        let plain = wilson_loop_phases(&fam, 0.2, 16, None).unwrap();
        let rand = wilson_loop_phases(&fam, 0.2, 16, Some(5)).unwrap();
        for (a, b) in plain.iter().zip(&rand) {
            assert!(wrap_phase(a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bosonic_time_reversal_is_rejected() {
        let h = build_builtin("haldane", &params(&[("phi", 0.0), ("M", 0.5)])).unwrap();
        let fam = ProjectorFamily::occupied(&h);
        let grid = BrillouinGrid::new(&[8, 8]).unwrap();
        assert!(matches!(z2_wilson_flow(&fam, &grid), Err(TopoError::Symmetry(_))));
    }

    #[test]
    fn wilson_dirac_indices() {
        let grid = BrillouinGrid::new(&[8, 8, 8]).unwrap();
        let strong = build_builtin("wilson_dirac_3d", &params(&[("m", -2.0)])).unwrap();
        let q = z2_3d(&ProjectorFamily::occupied(&strong), &grid).unwrap();
        assert_eq!(q.strong, 1);
        assert!(q.consistent && q.methods_agree);
        let trivial = build_builtin("wilson_dirac_3d", &params(&[("m", -4.0)])).unwrap();
        let q = z2_3d(&ProjectorFamily::occupied(&trivial), &grid).unwrap();
        assert_eq!(
            (q.delta_1_0, q.delta_1_plus, q.delta_2_plus, q.delta_3_plus),
            (0, 0, 0, 0)
        );
    }

    #[test]
    fn stacked_layers_are_weak() {
        let km = build_builtin("kane_mele", &params(&[])).unwrap();
        let stack = stack_layers(&km, None).unwrap();
        let q = z2_3d(
            &ProjectorFamily::occupied(&stack),
            &BrillouinGrid::new(&[16, 16, 4]).unwrap(),
        )
        .unwrap();
        let planes: Vec<u8> = q.planes.iter().map(|p| p.wilson.delta).collect();
        // planes containing the layer directions carry the 2D index
        assert_eq!((planes[4], planes[5]), (1, 1));
        assert_eq!(q.strong, 0);
        assert!(q.consistent && q.methods_agree);
    }
}

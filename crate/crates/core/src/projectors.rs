//! Spectral projector families `k -> P(k)`.
//!
//! Projectors come from a Hermitian eigensolve (default) or from the Riesz
//! contour integral `P = (1 / 2 pi i) oint (z - H)^{-1} dz` (cross-check).
//! Grid audits check the gap condition, the symmetry relations of the
//! family and a finite-difference smoothness proxy.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TopoError};
use crate::lattice::{BrillouinGrid, Lattice, SpaceReflection, TauRep, TimeReversal};
use crate::linalg::{
    c, conj, frobenius, hermitian_eigen, hermitian_eigenvalues, identity, projector_from_frame, trace, CMat,
};

/// Minimal separation between a window edge and the rest of the spectrum.
pub const SELECTION_GAP: f64 = 1e-10;
/// Minimal distance between a Riesz contour and any eigenvalue.
pub const CONTOUR_CLEARANCE: f64 = 1e-6;
/// Relative gap threshold (times the energy scale) below which a family is
/// declared gapless.
pub const GAP_THRESHOLD: f64 = 1e-8;

static TRIVIAL_TAU: TauRep = TauRep::Trivial;

/// A family of Hermitian fibre matrices over the Brillouin torus together
/// with its symmetry data. `k` is in reduced coordinates and need not be
/// canonical; implementors must satisfy `H(k + l) = tau(l) H(k) tau(l)^{-1}`.
pub trait BlochHamiltonian: Send + Sync {
    fn dim(&self) -> usize;
    fn fiber_dim(&self) -> usize;
    fn hamiltonian(&self, k: &[f64]) -> CMat;

    fn time_reversal(&self) -> Option<&TimeReversal> {
        None
    }

    fn space_reflection(&self) -> Option<&SpaceReflection> {
        None
    }

    fn tau(&self) -> &TauRep {
        &TRIVIAL_TAU
    }

    /// Number of bands selected by [`ProjectorFamily::occupied`].
    fn default_occupied(&self) -> usize {
        self.fiber_dim() / 2
    }

    fn lattice(&self) -> Option<&Lattice> {
        None
    }
}

type HamFn = dyn Fn(&[f64]) -> CMat + Send + Sync;

/// A Bloch family given by a closure.
pub struct MatrixFamily {
    dim: usize,
    fiber_dim: usize,
    occupied: usize,
    f: Box<HamFn>,
    theta: Option<TimeReversal>,
    reflection: Option<SpaceReflection>,
    tau: TauRep,
}

impl MatrixFamily {
    pub fn new(dim: usize, fiber_dim: usize, f: impl Fn(&[f64]) -> CMat + Send + Sync + 'static) -> Self {
        MatrixFamily {
            dim,
            fiber_dim,
            occupied: fiber_dim / 2,
            f: Box::new(f),
            theta: None,
            reflection: None,
            tau: TauRep::Trivial,
        }
    }

    /// `H(k) = h` for every `k`.
    pub fn constant(dim: usize, h: CMat) -> Self {
        let n = h.nrows();
        MatrixFamily::new(dim, n, move |_| h.clone())
    }

    pub fn with_occupied(mut self, m: usize) -> Self {
        self.occupied = m;
        self
    }

    pub fn with_time_reversal(mut self, theta: TimeReversal) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn with_space_reflection(mut self, r: SpaceReflection) -> Self {
        self.reflection = Some(r);
        self
    }

    pub fn with_tau(mut self, tau: TauRep) -> Self {
        self.tau = tau;
        self
    }
}

impl BlochHamiltonian for MatrixFamily {
    fn dim(&self) -> usize {
        self.dim
    }
    fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }
    fn hamiltonian(&self, k: &[f64]) -> CMat {
        (self.f)(k)
    }
    fn time_reversal(&self) -> Option<&TimeReversal> {
        self.theta.as_ref()
    }
    fn space_reflection(&self) -> Option<&SpaceReflection> {
        self.reflection.as_ref()
    }
    fn tau(&self) -> &TauRep {
        &self.tau
    }
    fn default_occupied(&self) -> usize {
        self.occupied
    }
}

/// Restriction of a family to the coordinate plane `k_axis = value`, with
/// `value` in `{0, 1/2}`. The remaining axes keep their order.
///
/// The inherited time reversal is `tau(2 value e_axis) Theta`, which maps
/// the plane to itself.
pub struct PlaneRestriction<'a> {
    inner: &'a dyn BlochHamiltonian,
    axis: usize,
    value: f64,
    theta: Option<TimeReversal>,
    tau: TauRep,
}

impl<'a> PlaneRestriction<'a> {
    pub fn new(inner: &'a dyn BlochHamiltonian, axis: usize, value: f64) -> Result<Self> {
        if axis >= inner.dim() || inner.dim() < 2 {
            return Err(TopoError::Dimension(format!(
                "cannot fix axis {axis} of a {}-dimensional family",
                inner.dim()
            )));
        }
        let doubled = 2.0 * value;
        if (doubled - doubled.round()).abs() > 1e-12 {
            return Err(TopoError::InvalidParameter(format!(
                "plane value {value} is not time-reversal invariant"
            )));
        }
        let n = inner.fiber_dim();
        let mut shift = vec![0i64; inner.dim()];
        shift[axis] = doubled.round() as i64;
        let theta = match inner.time_reversal() {
            Some(t) if shift.iter().any(|&s| s != 0) => {
                Some(t.compose_unitary(&inner.tau().matrix(&shift, n))?)
            }
            other => other.cloned(),
        };
        let tau = if inner.tau().is_trivial() {
            TauRep::Trivial
        } else {
            let generators = (0..inner.dim())
                .filter(|&j| j != axis)
                .map(|j| {
                    let mut l = vec![0i64; inner.dim()];
                    l[j] = 1;
                    inner.tau().matrix(&l, n)
                })
                .collect();
            TauRep::Explicit { generators }
        };
        Ok(PlaneRestriction {
            inner,
            axis,
            value,
            theta,
            tau,
        })
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    fn lift(&self, k: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(k.len() + 1);
        let mut it = k.iter();
        for j in 0..self.inner.dim() {
            if j == self.axis {
                full.push(self.value);
            } else {
                full.push(*it.next().expect("restricted momentum has d - 1 entries"));
            }
        }
        full
    }
}

impl BlochHamiltonian for PlaneRestriction<'_> {
    fn dim(&self) -> usize {
        self.inner.dim() - 1
    }
    fn fiber_dim(&self) -> usize {
        self.inner.fiber_dim()
    }
    fn hamiltonian(&self, k: &[f64]) -> CMat {
        self.inner.hamiltonian(&self.lift(k))
    }
    fn time_reversal(&self) -> Option<&TimeReversal> {
        self.theta.as_ref()
    }
    fn tau(&self) -> &TauRep {
        &self.tau
    }
    fn default_occupied(&self) -> usize {
        self.inner.default_occupied()
    }
}

/// Which bands make up the projector.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BandSelection {
    /// Bands `start .. start + count` in ascending order.
    IndexWindow { start: usize, count: usize },
    /// All eigenvalues in `[lo, hi]`.
    EnergyWindow { lo: f64, hi: f64 },
}

impl BandSelection {
    pub fn lowest(count: usize) -> Self {
        BandSelection::IndexWindow { start: 0, count }
    }

    /// Index range of the selected eigenvalues (ascending `values`).
    pub fn resolve(&self, values: &[f64]) -> Result<Range<usize>> {
        let n = values.len();
        let range = match *self {
            BandSelection::IndexWindow { start, count } => {
                if count == 0 || start + count > n {
                    return Err(TopoError::InvalidParameter(format!(
                        "band window {start}..{} outside 0..{n}",
                        start + count
                    )));
                }
                start..start + count
            }
            BandSelection::EnergyWindow { lo, hi } => {
                if !(lo < hi) {
                    return Err(TopoError::InvalidParameter(format!(
                        "empty energy window [{lo}, {hi}]"
                    )));
                }
                for &e in values {
                    let d = (e - lo).abs().min((e - hi).abs());
                    if d < SELECTION_GAP {
                        return Err(TopoError::AmbiguousSelection { gap: d });
                    }
                }
                let start = values.iter().position(|&e| e >= lo).unwrap_or(n);
                let end = values.iter().rposition(|&e| e <= hi).map_or(0, |i| i + 1);
                if end <= start {
                    return Err(TopoError::InvalidParameter(format!(
                        "no eigenvalue in [{lo}, {hi}]"
                    )));
                }
                start..end
            }
        };
        if range.start > 0 {
            let gap = values[range.start] - values[range.start - 1];
            if gap < SELECTION_GAP {
                return Err(TopoError::AmbiguousSelection { gap });
            }
        }
        if range.end < n {
            let gap = values[range.end] - values[range.end - 1];
            if gap < SELECTION_GAP {
                return Err(TopoError::AmbiguousSelection { gap });
            }
        }
        Ok(range)
    }
}

/// Distance from the selected eigenvalues to the rest of the spectrum
/// (infinite when the selection is the full spectrum).
pub fn window_gap(values: &[f64], range: &Range<usize>) -> f64 {
    let mut g = f64::INFINITY;
    if range.start > 0 {
        g = g.min(values[range.start] - values[range.start - 1]);
    }
    if range.end < values.len() {
        g = g.min(values[range.end] - values[range.end - 1]);
    }
    g
}

/// Eigen-decomposition restricted to a band selection.
#[derive(Clone, Debug)]
pub struct Eigenframe {
    /// All eigenvalues, ascending.
    pub values: Vec<f64>,
    pub range: Range<usize>,
    /// Orthonormal columns spanning the selected eigenspace.
    pub frame: CMat,
}

impl Eigenframe {
    pub fn projector(&self) -> CMat {
        projector_from_frame(&self.frame)
    }

    pub fn gap(&self) -> f64 {
        window_gap(&self.values, &self.range)
    }
}

pub fn spectral_decomposition(h: &CMat, selection: &BandSelection) -> Result<Eigenframe> {
    let (values, vectors) = hermitian_eigen(h);
    let range = selection.resolve(&values)?;
    let frame = vectors.columns(range.start, range.len()).into_owned();
    Ok(Eigenframe { values, range, frame })
}

/// `sum_{n in window} |u_n><u_n|`.
pub fn spectral_projector(h: &CMat, selection: &BandSelection) -> Result<CMat> {
    Ok(spectral_decomposition(h, selection)?.projector())
}

/// Ellipse `z(theta) = center + semi_x cos(theta) + i semi_y sin(theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Contour {
    pub center_re: f64,
    pub center_im: f64,
    pub semi_x: f64,
    pub semi_y: f64,
}

impl Contour {
    pub fn circle(center: f64, radius: f64) -> Self {
        Contour {
            center_re: center,
            center_im: 0.0,
            semi_x: radius,
            semi_y: radius,
        }
    }

    pub fn ellipse(center: f64, semi_x: f64, semi_y: f64) -> Self {
        Contour {
            center_re: center,
            center_im: 0.0,
            semi_x,
            semi_y,
        }
    }

    /// Ellipse centred on the selected window, crossing the real axis
    /// half-way into the neighbouring gap. The vertical semi-axis is the
    /// one maximizing the geometric convergence rate of the trapezoidal
    /// rule for this spectrum (see [`Contour::convergence_rate`]).
    pub fn around(values: &[f64], range: &Range<usize>) -> Self {
        let lo = values[range.start];
        let hi = values[range.end - 1];
        let mut gap = window_gap(values, range);
        if !gap.is_finite() {
            gap = (hi - lo).max(1.0);
        }
        let semi_x = 0.5 * (hi - lo) + 0.5 * gap;
        let center = 0.5 * (lo + hi);
        let mut best = Contour::ellipse(center, semi_x, 0.25 * gap);
        let mut best_rate = best.convergence_rate(values);
        for i in 1..100 {
            let trial = Contour::ellipse(center, semi_x, semi_x * i as f64 / 100.0);
            let rate = trial.convergence_rate(values);
            if rate > best_rate {
                best = trial;
                best_rate = rate;
            }
        }
        best
    }

    /// Asymptotic rate `r` of the trapezoidal error `~ exp(-r N)` for the
    /// resolvent of a Hermitian matrix with the given eigenvalues: the
    /// ellipse is the level set `|w| = R` of the Joukowski map
    /// `z = c + f (w + 1/w) / 2`, and each eigenvalue is a pole at `|w| = rho`.
    pub fn convergence_rate(&self, values: &[f64]) -> f64 {
        let (a, b) = (self.semi_x, self.semi_y);
        if a <= b || self.center_im != 0.0 {
            // circles and shifted ellipses: distance-based estimate
            let r = a.max(b);
            return values
                .iter()
                .map(|&x| ((x - self.center_re).abs() / r).ln().abs())
                .fold(f64::INFINITY, f64::min);
        }
        let f = (a * a - b * b).sqrt();
        let big_r = (a + b) / f;
        values
            .iter()
            .map(|&x| {
                let u = (x - self.center_re).abs() / f;
                let rho = if u <= 1.0 { 1.0 } else { u + (u * u - 1.0).sqrt() };
                (rho / big_r).ln().abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn point(&self, theta: f64) -> Complex64 {
        c(
            self.center_re + self.semi_x * theta.cos(),
            self.center_im + self.semi_y * theta.sin(),
        )
    }

    pub fn derivative(&self, theta: f64) -> Complex64 {
        c(-self.semi_x * theta.sin(), self.semi_y * theta.cos())
    }

    pub fn encloses(&self, x: f64) -> bool {
        let u = (x - self.center_re) / self.semi_x;
        let v = -self.center_im / self.semi_y;
        u * u + v * v < 1.0
    }

    /// Euclidean distance from the real point `x` to the ellipse.
    pub fn distance(&self, x: f64) -> f64 {
        let d = |t: f64| {
            let z = self.point(t);
            ((z.re - x).powi(2) + z.im.powi(2)).sqrt()
        };
        let samples = 1024;
        let step = 2.0 * std::f64::consts::PI / samples as f64;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for i in 0..samples {
            let t = i as f64 * step;
            let v = d(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        // golden-section refinement on the bracketing interval
        let (mut a, mut b) = (best_t - step, best_t + step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c1 = b - g * (b - a);
            let c2 = a + g * (b - a);
            if d(c1) < d(c2) {
                b = c2;
            } else {
                a = c1;
            }
        }
        best.min(d(0.5 * (a + b)))
    }
}

/// Riesz projector `(1 / 2 pi i) oint (z - H)^{-1} dz` on a counterclockwise
/// ellipse, trapezoidal rule with `nodes` points.
pub fn riesz_projector(h: &CMat, contour: &Contour, nodes: usize) -> Result<CMat> {
    if nodes < 2 || contour.semi_x <= 0.0 || contour.semi_y <= 0.0 {
        return Err(TopoError::InvalidParameter(
            "contour needs positive semi-axes and at least two nodes".into(),
        ));
    }
    for e in hermitian_eigenvalues(h) {
        let distance = contour.distance(e);
        if distance < CONTOUR_CLEARANCE {
            return Err(TopoError::ContourCollision {
                eigenvalue: e,
                distance,
            });
        }
    }
    let n = h.nrows();
    let mut acc = CMat::zeros(n, n);
    let id = identity(n);
    for j in 0..nodes {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / nodes as f64;
        let z = contour.point(theta);
        let resolvent = (&id * z - h)
            .lu()
            .try_inverse()
            .ok_or(TopoError::ContourCollision {
                eigenvalue: z.re,
                distance: 0.0,
            })?;
        acc += resolvent * contour.derivative(theta);
    }
    // (1 / 2 pi i) * (2 pi / nodes) = 1 / (i nodes)
    Ok(acc * c(0.0, -1.0 / nodes as f64))
}

/// `k -> P(k)` for a Bloch family and band selection.
#[derive(Clone, Copy)]
pub struct ProjectorFamily<'a> {
    source: &'a dyn BlochHamiltonian,
    selection: &'a BandSelection,
}

static LOWEST: [BandSelection; 9] = [
    BandSelection::IndexWindow { start: 0, count: 0 },
    BandSelection::IndexWindow { start: 0, count: 1 },
    BandSelection::IndexWindow { start: 0, count: 2 },
    BandSelection::IndexWindow { start: 0, count: 3 },
    BandSelection::IndexWindow { start: 0, count: 4 },
    BandSelection::IndexWindow { start: 0, count: 5 },
    BandSelection::IndexWindow { start: 0, count: 6 },
    BandSelection::IndexWindow { start: 0, count: 7 },
    BandSelection::IndexWindow { start: 0, count: 8 },
];

impl<'a> ProjectorFamily<'a> {
    pub fn new(source: &'a dyn BlochHamiltonian, selection: &'a BandSelection) -> Self {
        ProjectorFamily { source, selection }
    }

    /// The lowest `source.default_occupied()` bands (at most eight; use
    /// [`ProjectorFamily::new`] for larger windows).
    pub fn occupied(source: &'a dyn BlochHamiltonian) -> Self {
        let m = source.default_occupied().min(LOWEST.len() - 1);
        ProjectorFamily::new(source, &LOWEST[m])
    }

    pub fn source(&self) -> &'a dyn BlochHamiltonian {
        self.source
    }

    pub fn selection(&self) -> &BandSelection {
        self.selection
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.source.fiber_dim()
    }

    pub fn tau(&self) -> &TauRep {
        self.source.tau()
    }

    pub fn time_reversal(&self) -> Option<&TimeReversal> {
        self.source.time_reversal()
    }

    pub fn space_reflection(&self) -> Option<&SpaceReflection> {
        self.source.space_reflection()
    }

    pub fn hamiltonian(&self, k: &[f64]) -> CMat {
        self.source.hamiltonian(k)
    }

    pub fn eigenframe(&self, k: &[f64]) -> Result<Eigenframe> {
        spectral_decomposition(&self.source.hamiltonian(k), self.selection)
    }

    pub fn projector(&self, k: &[f64]) -> Result<CMat> {
        Ok(self.eigenframe(k)?.projector())
    }

    /// Projector through the Riesz formula on the default contour.
    pub fn riesz(&self, k: &[f64], nodes: usize) -> Result<CMat> {
        let h = self.source.hamiltonian(k);
        let values = hermitian_eigenvalues(&h);
        let range = self.selection.resolve(&values)?;
        riesz_projector(&h, &Contour::around(&values, &range), nodes)
    }

    /// Rank for index windows; energy windows need an evaluation point.
    pub fn rank_at(&self, k: &[f64]) -> Result<usize> {
        match self.selection {
            BandSelection::IndexWindow { count, .. } => Ok(*count),
            _ => Ok(self.eigenframe(k)?.range.len()),
        }
    }

    /// Eigenframes on every grid point, in grid order.
    pub fn eigenframes(&self, grid: &BrillouinGrid) -> Result<Vec<Eigenframe>> {
        (0..grid.len())
            .into_par_iter()
            .map(|i| self.eigenframe(&grid.point(i)))
            .collect()
    }

    /// Projectors on every grid point, in grid order.
    pub fn projectors(&self, grid: &BrillouinGrid) -> Result<Vec<CMat>> {
        Ok(self
            .eigenframes(grid)?
            .iter()
            .map(Eigenframe::projector)
            .collect())
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GapReport {
    pub min_gap: f64,
    pub argmin_k: Vec<f64>,
    pub gapless: bool,
    pub threshold: f64,
}

fn gap_samples(family: &ProjectorFamily, points: &[Vec<f64>]) -> Vec<(f64, f64)> {
    points
        .par_iter()
        .map(|k| {
            let values = hermitian_eigenvalues(&family.hamiltonian(k));
            let scale = values.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
            let gap = match family.selection.resolve(&values) {
                Ok(range) => window_gap(&values, &range),
                Err(TopoError::AmbiguousSelection { gap }) => gap,
                Err(_) => 0.0,
            };
            (gap, scale)
        })
        .collect()
}

fn report_from(points: &[Vec<f64>], samples: &[(f64, f64)]) -> GapReport {
    let mut best = 0usize;
    for (i, s) in samples.iter().enumerate() {
        if s.0 < samples[best].0 {
            best = i;
        }
    }
    let scale = samples.iter().fold(1.0_f64, |m, s| m.max(s.1));
    let threshold = GAP_THRESHOLD * scale;
    GapReport {
        min_gap: samples[best].0,
        argmin_k: points[best].clone(),
        gapless: samples[best].0 < threshold,
        threshold,
    }
}

/// Minimum over the grid of the distance between the selected bands and
/// the rest of the spectrum; the argmin is the first minimiser in grid order.
pub fn gap_check(family: &ProjectorFamily, grid: &BrillouinGrid) -> GapReport {
    let points = grid.points();
    let samples = gap_samples(family, &points);
    report_from(&points, &samples)
}

/// Zoom into the neighbourhood of `start` to localize a small gap: each
/// level samples a `(2 w + 1)^d` patch of half-width `radius` and shrinks
/// the radius by four around the best point.
pub fn refine_gap(family: &ProjectorFamily, start: &[f64], mut radius: f64, levels: usize) -> GapReport {
    let d = start.len();
    let w = 4i64;
    let side = (2 * w + 1) as usize;
    let mut center = start.to_vec();
    let mut report = {
        let pts = vec![center.clone()];
        report_from(&pts, &gap_samples(family, &pts))
    };
    for _ in 0..levels {
        let mut pts = Vec::with_capacity(side.pow(d as u32));
        for idx in 0..side.pow(d as u32) {
            let mut rem = idx;
            let mut k = center.clone();
            for kj in k.iter_mut() {
                let o = (rem % side) as i64 - w;
                rem /= side;
                *kj += radius * o as f64 / w as f64;
            }
            pts.push(k);
        }
        let r = report_from(&pts, &gap_samples(family, &pts));
        if r.min_gap <= report.min_gap {
            report = r;
        }
        center = report.argmin_k.clone();
        radius /= 4.0;
    }
    report
}

/// Fail with a gap error when the family is gapless on the grid.
pub fn require_gap(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<GapReport> {
    let r = gap_check(family, grid);
    if r.gapless {
        return Err(TopoError::Gapless {
            min_gap: r.min_gap,
            k: r.argmin_k,
        });
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Relation {
    pub residual: f64,
    pub pass: bool,
    pub argmax_k: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ProjectorAudit {
    pub tolerance: f64,
    pub rank: usize,
    pub idempotency: f64,
    pub hermiticity: f64,
    pub trace_defect: f64,
    /// `P(k + e_j) = tau(e_j) P(k) tau(e_j)^{-1}` on the retained subspace.
    pub tau: Relation,
    /// `P(-k) = Theta P(k) Theta^{-1}`.
    pub time_reversal: Option<Relation>,
    /// `P(-k) = R P(k) R^{-1}`.
    pub space_reflection: Option<Relation>,
    /// `Theta tau(l) = tau(l)^{-1} Theta` on the generators.
    pub compatibility: Option<f64>,
    /// `max |tr P(-k) - tr P(k)|`.
    pub trace_parity: f64,
    /// `Some(true)` when Theta is fermionic and the rank is even.
    pub even_rank: Option<bool>,
    /// Largest splitting of would-be Kramers pairs of `H` at grid TRIMs.
    pub kramers_pairing: Option<f64>,
}

impl ProjectorAudit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit serializes")
    }
}

fn relation(residuals: &[f64], grid: &BrillouinGrid, tolerance: f64) -> Relation {
    let mut arg = 0;
    for (i, r) in residuals.iter().enumerate() {
        if *r > residuals[arg] {
            arg = i;
        }
    }
    Relation {
        residual: residuals.get(arg).copied().unwrap_or(0.0),
        pass: residuals.get(arg).copied().unwrap_or(0.0) < tolerance,
        argmax_k: grid.point(arg),
    }
}

/// Rows kept by `tau(lambda)` (all rows unless modes are truncated).
fn retained_rows(tau: &TauRep, lambda: &[i64], n: usize) -> Vec<bool> {
    match tau {
        TauRep::Shift(rule) => rule.shifted_index(lambda).iter().map(Option::is_some).collect(),
        _ => vec![true; n],
    }
}

fn masked_frobenius(a: &CMat, mask: &[bool]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        if !mask[i] {
            continue;
        }
        for j in 0..a.ncols() {
            if mask[j] {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Audit the projector family on a negation-closed grid.
pub fn verify_projector_symmetries(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<ProjectorAudit> {
    audit_projectors(family, grid, 1e-10)
}

pub fn audit_projectors(
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
    tolerance: f64,
) -> Result<ProjectorAudit> {
    let n = family.fiber_dim();
    let frames = family.eigenframes(grid)?;
    let ps: Vec<CMat> = frames.iter().map(Eigenframe::projector).collect();
    let rank = frames[0].range.len();
    let neg = grid.negation_permutation();

    let mut idempotency = 0.0_f64;
    let mut hermiticity = 0.0_f64;
    let mut trace_defect = 0.0_f64;
    for p in &ps {
        idempotency = idempotency.max(frobenius(&(p * p - p)));
        hermiticity = hermiticity.max(frobenius(&(p - p.adjoint())));
        trace_defect = trace_defect.max((trace(p).re - rank as f64).abs());
    }

    let tau = family.tau();
    let mut tau_res = vec![0.0; grid.len()];
    if !tau.is_trivial() {
        let res: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mut worst = 0.0_f64;
                for axis in 0..grid.dim() {
                    let mut lambda = vec![0i64; grid.dim()];
                    lambda[axis] = 1;
                    let mut k = grid.point(i);
                    k[axis] += 1.0;
                    let shifted = family.projector(&k).unwrap_or_else(|_| ps[i].clone());
                    let mask = retained_rows(tau, &lambda, n);
                    let d = shifted - tau.conjugate(&lambda, &ps[i]);
                    worst = worst.max(masked_frobenius(&d, &mask));
                }
                worst
            })
            .collect();
        tau_res = res;
    }
    let tau_rel = relation(&tau_res, grid, tolerance);

    // P(-k) recovered from the stored canonical point -k + mu
    let minus_k = |i: usize| -> (CMat, Vec<bool>) {
        let j = neg[i];
        if tau.is_trivial() {
            return (ps[j].clone(), vec![true; n]);
        }
        let (a, b) = (grid.coords(i), grid.coords(j));
        let back: Vec<i64> = (0..grid.dim())
            .map(|ax| -((b[ax] + a[ax]) / grid.sizes()[ax] as i64))
            .collect();
        (tau.conjugate(&back, &ps[j]), retained_rows(tau, &back, n))
    };
    let time_reversal = family.time_reversal().map(|t| {
        let r: Vec<f64> = (0..grid.len())
            .map(|i| {
                let (p, mask) = minus_k(i);
                masked_frobenius(&(p - t.conjugate(&ps[i])), &mask)
            })
            .collect();
        relation(&r, grid, tolerance)
    });
    let space_reflection = family.space_reflection().map(|s| {
        let r: Vec<f64> = (0..grid.len())
            .map(|i| {
                let (p, mask) = minus_k(i);
                masked_frobenius(&(p - s.conjugate(&ps[i])), &mask)
            })
            .collect();
        relation(&r, grid, tolerance)
    });
    let compatibility = family.time_reversal().map(|t| {
        let mut worst = 0.0_f64;
        for axis in 0..grid.dim() {
            let mut lambda = vec![0i64; grid.dim()];
            lambda[axis] = 1;
            let tm = tau.matrix(&lambda, n);
            let mask = retained_rows(tau, &lambda, n);
            let d = t.unitary() * conj(&tm) - tm.adjoint() * t.unitary();
            worst = worst.max(masked_frobenius(&d, &mask));
        }
        worst
    });
    let mut trace_parity = 0.0_f64;
    for i in 0..grid.len() {
        trace_parity = trace_parity.max((trace(&ps[neg[i]]) - trace(&ps[i])).norm());
    }

    let fermionic = family.time_reversal().is_some_and(TimeReversal::is_fermionic);
    let (even_rank, kramers_pairing) = if fermionic {
        let mut worst = 0.0_f64;
        for i in 0..grid.len() {
            if neg[i] != i {
                continue;
            }
            let v = &frames[i].values;
            for pair in v.chunks(2) {
                if pair.len() == 2 {
                    worst = worst.max((pair[1] - pair[0]).abs());
                }
            }
        }
        (Some(rank % 2 == 0), Some(worst))
    } else {
        (None, None)
    };

    Ok(ProjectorAudit {
        tolerance,
        rank,
        idempotency,
        hermiticity,
        trace_defect,
        tau: tau_rel,
        time_reversal,
        space_reflection,
        compatibility,
        trace_parity,
        even_rank,
        kramers_pairing,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SmoothnessProbe {
    pub sizes: Vec<usize>,
    /// Per axis, `max_k ||P(k + h e_j) - P(k)||_F / h` on the input grid.
    pub coarse: Vec<f64>,
    /// The same on the grid refined by two.
    pub fine: Vec<f64>,
    /// `fine / coarse` per axis.
    pub ratio: Vec<f64>,
    /// True when some ratio exceeds [`SmoothnessProbe::DIVERGENCE_RATIO`].
    pub diverging: bool,
}

impl SmoothnessProbe {
    pub const DIVERGENCE_RATIO: f64 = 1.5;
}

fn difference_quotients(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<Vec<f64>> {
    let ps = family.projectors(grid)?;
    let tau = family.tau();
    Ok((0..grid.dim())
        .map(|axis| {
            let h = grid.spacing(axis);
            (0..grid.len())
                .map(|i| {
                    let (j, wrap) = grid.neighbor(i, axis, 1);
                    let mut lambda = vec![0i64; grid.dim()];
                    lambda[axis] = wrap;
                    frobenius(&(tau.conjugate(&lambda, &ps[j]) - &ps[i])) / h
                })
                .fold(0.0_f64, f64::max)
        })
        .collect())
}

/// Difference-quotient bounds at the grid resolution and at twice it.
pub fn smoothness_probe(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<SmoothnessProbe> {
    let fine_grid = BrillouinGrid::new(&grid.sizes().iter().map(|s| 2 * s).collect::<Vec<_>>())?;
    require_gap(family, grid)?;
    require_gap(family, &fine_grid)?;
    let coarse = difference_quotients(family, grid)?;
    let fine = difference_quotients(family, &fine_grid)?;
    let ratio: Vec<f64> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| {
            if *c == 0.0 {
                if *f == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                f / c
            }
        })
        .collect();
    let diverging = ratio.iter().any(|r| *r > SmoothnessProbe::DIVERGENCE_RATIO);
    Ok(SmoothnessProbe {
        sizes: grid.sizes().to_vec(),
        coarse,
        fine,
        ratio,
        diverging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_hermitian, random_unitary, CVec, ONE, ZERO};
    use crate::models::{build_builtin, params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> CMat {
        CMat::from_diagonal(&CVec::from_vec(v.iter().map(|&x| c(x, 0.0)).collect()))
    }

    #[test]
    fn projector_of_diagonal() {
        let p = spectral_projector(&diag(&[-1.0, 1.0]), &BandSelection::lowest(1)).unwrap();
        assert!(frobenius(&(p - diag(&[1.0, 0.0]))) < 1e-15);
    }

    #[test]
    fn projector_of_sigma_x() {
        let sx = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let p = spectral_projector(&sx, &BandSelection::lowest(1)).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(-0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0)]);
        assert!(frobenius(&(p - expect)) < 1e-14);
    }

    #[test]
    fn ambiguous_window_edge() {
        let h = diag(&[0.0, 1.0, 1.0]);
        let err = spectral_projector(&h, &BandSelection::lowest(2)).unwrap_err();
        assert!(matches!(err, TopoError::AmbiguousSelection { .. }));
        let ok = spectral_projector(&h, &BandSelection::IndexWindow { start: 1, count: 2 }).unwrap();
        assert!(frobenius(&(ok - diag(&[0.0, 1.0, 1.0]))) < 1e-14);
        let e = spectral_projector(&h, &BandSelection::EnergyWindow { lo: 0.5, hi: 1.0 });
        assert!(matches!(e, Err(TopoError::AmbiguousSelection { .. })));
    }

    #[test]
    fn projector_invariant_under_remixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(4, &mut rng);
        let h = &u * diag(&[-1.0, -1.0, 2.0, 3.0]) * u.adjoint();
        let p = spectral_projector(&h, &BandSelection::lowest(2)).unwrap();
        let cols = u.columns(0, 2).into_owned();
        let mix = random_unitary(2, &mut rng);
        let remixed = &cols * mix;
        assert!(frobenius(&(p - projector_from_frame(&remixed))) < 1e-12);
    }

    #[test]
    fn kane_mele_lowest_pair_is_rank_two() {
        let m = build_builtin("kane_mele", &params(&[])).unwrap();
        let sel = BandSelection::lowest(2);
        let fam = ProjectorFamily::new(&m, &sel);
        let p = fam.projector(&[0.137, -0.291]).unwrap();
        assert!((trace(&p).re - 2.0).abs() < 1e-10);
        assert!(frobenius(&(&p * &p - &p)) < 1e-10);
    }

    #[test]
    fn riesz_isolated_eigenvalue() {
        let h = diag(&[0.0, 10.0]);
        let p = riesz_projector(&h, &Contour::circle(0.0, 1.0), 32).unwrap();
        assert!(frobenius(&(p - diag(&[1.0, 0.0]))) < 1e-10);
    }

    #[test]
    fn riesz_collision_errors() {
        let h = diag(&[1.0, 10.0]);
        let e = riesz_projector(&h, &Contour::circle(0.0, 1.0), 32).unwrap_err();
        assert!(matches!(e, TopoError::ContourCollision { .. }));
    }

    #[test]
    fn riesz_matches_spectral_on_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_hermitian(6, &mut rng);
        let sel = BandSelection::IndexWindow { start: 1, count: 3 };
        let ef = spectral_decomposition(&h, &sel).unwrap();
        let contour = Contour::around(&ef.values, &ef.range);
        for e in &ef.values[ef.range.clone()] {
            assert!(contour.encloses(*e));
        }
        let p = riesz_projector(&h, &contour, 256).unwrap();
        assert!(frobenius(&(p - ef.projector())) < 1e-8);
    }

    #[test]
    fn ellipse_distance_matches_axis_crossing() {
        let e = Contour::ellipse(0.0, 2.0, 0.5);
        assert!((e.distance(3.0) - 1.0).abs() < 1e-9);
        assert!((e.distance(0.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn flat_two_level_gap() {
        let f = MatrixFamily::constant(2, diag(&[0.0, 1.0]));
        let fam = ProjectorFamily::occupied(&f);
        let g = gap_check(&fam, &BrillouinGrid::new(&[4, 4]).unwrap());
        assert_eq!(g.min_gap, 1.0);
        assert!(!g.gapless);
    }

    #[test]
    fn haldane_gap_open_and_closing() {
        let open = build_builtin("haldane", &params(&[("M", 0.0)])).unwrap();
        let g = gap_check(
            &ProjectorFamily::occupied(&open),
            &BrillouinGrid::new(&[24, 24]).unwrap(),
        );
        assert!(g.min_gap > 0.5);
        let m_c = 3.0 * 3f64.sqrt() * 0.2;
        let closing = build_builtin("haldane", &params(&[("M", m_c)])).unwrap();
        let fam = ProjectorFamily::occupied(&closing);
        let coarse = gap_check(&fam, &BrillouinGrid::new(&[20, 20]).unwrap());
        let refined = refine_gap(&fam, &coarse.argmin_k, 0.05, 6);
        assert!(refined.min_gap < 1e-2, "refined gap {}", refined.min_gap);
    }

    #[test]
    fn constant_family_probe_vanishes() {
        let f = MatrixFamily::constant(2, diag(&[0.0, 1.0]));
        let p = smoothness_probe(
            &ProjectorFamily::occupied(&f),
            &BrillouinGrid::new(&[8, 8]).unwrap(),
        )
        .unwrap();
        assert!(p.coarse.iter().all(|x| *x == 0.0));
        assert!(!p.diverging);
    }

    #[test]
    fn fermionic_audit_flags_odd_rank() {
        let iy = CMat::from_row_slice(2, 2, &[ZERO, ONE, -ONE, ZERO]);
        let theta = TimeReversal::new(identity(2).kronecker(&iy), -1).unwrap();
        let f = MatrixFamily::constant(2, diag(&[-1.0, 0.0, 1.0, 2.0]))
            .with_occupied(1)
            .with_time_reversal(theta);
        let a = verify_projector_symmetries(
            &ProjectorFamily::occupied(&f),
            &BrillouinGrid::new(&[4, 4]).unwrap(),
        )
        .unwrap();
        assert_eq!(a.even_rank, Some(false));
        assert!(a.kramers_pairing.unwrap() > 0.5);
    }

    #[test]
    fn kane_mele_audit() {
        let m = build_builtin("kane_mele", &params(&[])).unwrap();
        let a = verify_projector_symmetries(
            &ProjectorFamily::occupied(&m),
            &BrillouinGrid::new(&[12, 12]).unwrap(),
        )
        .unwrap();
        assert!(a.time_reversal.as_ref().unwrap().residual < 1e-10);
        assert!(a.kramers_pairing.unwrap() < 1e-10);
        assert_eq!(a.even_rank, Some(true));
        assert_eq!(a.tau.residual, 0.0);
        assert!(a.trace_parity < 1e-10);
    }
}

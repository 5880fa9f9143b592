//! Berry curvature and Chern numbers.
//!
//! The curvature field stores `Omega_{mu nu}(k) = Im tr(P [d_mu P, d_nu P])`
//! with derivatives in reduced coordinates (the trace itself is purely
//! imaginary). Chern numbers are `C = (1 / 2 pi) int Omega dk_mu dk_nu`;
//! with this sign the finite-difference integral agrees with the plaquette
//! sum of loop phases `arg(U_mu(k) U_nu(k + e_mu) / (U_mu(k + e_nu) U_nu(k)))`,
//! `U_mu(k) = det(Phi(k)^dagger Phi(k + e_mu))`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TopoError};
use crate::lattice::BrillouinGrid;
use crate::linalg::{c, determinant, trace, wrap_phase, CMat};
use crate::projectors::{require_gap, ProjectorFamily};

/// Residual above which a Chern integral is reported as unconverged.
pub const CHERN_TOLERANCE: f64 = 1e-3;
/// Overlap determinants below this modulus indicate frame collapse.
pub const OVERLAP_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMethod {
    FiniteDifference,
    Plaquette,
}

/// Central-difference stencil for `d_mu P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(P(k + d) - P(k - d)) / 2d`, error `O(d^2)`.
    Second,
    /// Richardson combination of the second-order stencil at `d` and `d/2`,
    /// error `O(d^4)`.
    #[default]
    Fourth,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureField {
    pub sizes: Vec<usize>,
    pub pair: (usize, usize),
    pub step: f64,
    pub stencil: Stencil,
    pub method: CurvatureMethod,
    /// One value per grid point, in grid order.
    pub values: Vec<f64>,
    /// Largest discarded real part of the trace.
    pub max_real_part: f64,
    #[serde(skip)]
    points: Vec<Vec<f64>>,
}

impl CurvatureField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// CSV with columns `k1..kd, omega` in grid order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.sizes.len()).map(|j| format!("k{j}")).collect();
        header.push("omega".into());
        w.write_record(&header)?;
        for (k, v) in self.points.iter().zip(&self.values) {
            let mut row: Vec<String> = k.iter().map(|x| format!("{x:.17e}")).collect();
            row.push(format!("{v:.17e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn check_pair(dim: usize, pair: (usize, usize)) -> Result<()> {
    if pair.0 >= dim || pair.1 >= dim || pair.0 == pair.1 {
        return Err(TopoError::Dimension(format!(
            "axis pair {pair:?} invalid in dimension {dim}"
        )));
    }
    Ok(())
}

/// Central-difference Berry curvature with the default stencil. `step`
/// defaults to half the smaller grid spacing of the pair and may not exceed
/// it.
pub fn berry_curvature(
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
    pair: (usize, usize),
    step: Option<f64>,
) -> Result<CurvatureField> {
    berry_curvature_with(family, grid, pair, step, Stencil::default())
}

pub fn berry_curvature_with(
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
    pair: (usize, usize),
    step: Option<f64>,
    stencil: Stencil,
) -> Result<CurvatureField> {
    check_pair(grid.dim(), pair)?;
    let spacing = grid.spacing(pair.0).min(grid.spacing(pair.1));
    let delta = step.unwrap_or(0.5 * spacing);
    if !(delta > 0.0) || delta > 0.5 * spacing + 1e-15 {
        return Err(TopoError::InvalidParameter(format!(
            "finite-difference step {delta} must lie in (0, {}]",
            0.5 * spacing
        )));
    }
    require_gap(family, grid)?;
    let points = grid.points();
    let results: Vec<Result<(f64, f64)>> = points
        .par_iter()
        .map(|k| {
            let p = family.projector(k)?;
            let central = |axis: usize, h: f64| -> Result<CMat> {
                let mut kp = k.clone();
                let mut km = k.clone();
                kp[axis] += h;
                km[axis] -= h;
                Ok((family.projector(&kp)? - family.projector(&km)?) * c(0.5 / h, 0.0))
            };
            let derivative = |axis: usize| -> Result<CMat> {
                match stencil {
                    Stencil::Second => central(axis, delta),
                    Stencil::Fourth => {
                        let coarse = central(axis, delta)?;
                        let fine = central(axis, 0.5 * delta)?;
                        Ok((fine * c(4.0, 0.0) - coarse) * c(1.0 / 3.0, 0.0))
                    }
                }
            };
            let dmu = derivative(pair.0)?;
            let dnu = derivative(pair.1)?;
            let comm = &dmu * &dnu - &dnu * &dmu;
            let t = trace(&(&p * comm));
            Ok((t.im, t.re.abs()))
        })
        .collect();
    let mut values = Vec::with_capacity(points.len());
    let mut max_real_part = 0.0_f64;
    for r in results {
        let (v, re) = r?;
        values.push(v);
        max_real_part = max_real_part.max(re);
    }
    Ok(CurvatureField {
        sizes: grid.sizes().to_vec(),
        pair,
        step: delta,
        stencil,
        method: CurvatureMethod::FiniteDifference,
        values,
        max_real_part,
        points,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ChernResult {
    pub value: i64,
    pub raw: f64,
    pub residual: f64,
    pub converged: bool,
    pub method: CurvatureMethod,
    /// Largest |plaquette phase| (plaquette method only).
    pub max_plaquette_phase: Option<f64>,
    /// Some plaquette phase exceeds pi/2 (plaquette method only).
    pub under_resolved: Option<bool>,
}

fn chern_from_raw(raw: f64, method: CurvatureMethod) -> ChernResult {
    let value = raw.round() as i64;
    let residual = (raw - value as f64).abs();
    ChernResult {
        value,
        raw,
        residual,
        converged: residual < CHERN_TOLERANCE,
        method,
        max_plaquette_phase: None,
        under_resolved: None,
    }
}

/// `(1 / 2 pi) sum_k Omega(k) dA`; three-dimensional fields are averaged
/// over the planes transverse to the pair.
pub fn chern_number_curvature(field: &CurvatureField) -> ChernResult {
    let total: f64 = field.values.iter().sum();
    let (mu, nu) = field.pair;
    let area = 1.0 / (field.sizes[mu] * field.sizes[nu]) as f64;
    let planes = field.values.len() as f64 * area;
    let raw = total * area / (2.0 * std::f64::consts::PI) / planes;
    chern_from_raw(raw, field.method)
}

/// Per-plaquette loop phases of the frame-overlap determinants.
#[derive(Clone, Debug, Serialize)]
pub struct PlaquettePhases {
    pub pair: (usize, usize),
    /// Indexed by the lower-left grid point.
    pub phases: Vec<f64>,
}

pub fn plaquette_phases(
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
    pair: (usize, usize),
) -> Result<PlaquettePhases> {
    check_pair(grid.dim(), pair)?;
    for axis in [pair.0, pair.1] {
        if grid.sizes()[axis] < 8 {
            return Err(TopoError::InvalidParameter(format!(
                "plaquette Chern numbers need at least 8 points per axis, axis {axis} has {}",
                grid.sizes()[axis]
            )));
        }
    }
    require_gap(family, grid)?;
    let frames: Vec<CMat> = family.eigenframes(grid)?.into_iter().map(|e| e.frame).collect();
    let tau = family.tau();
    let link = |i: usize, axis: usize| -> Result<f64> {
        let (j, wrap) = grid.neighbor(i, axis, 1);
        let mut lambda = vec![0i64; grid.dim()];
        lambda[axis] = wrap;
        let next = tau.apply(&lambda, &frames[j]);
        let det = determinant(&(frames[i].adjoint() * next));
        if det.norm() < OVERLAP_FLOOR {
            return Err(TopoError::Refinement(format!(
                "overlap determinant {:.3e} between {:?} and its neighbour along axis {axis}",
                det.norm(),
                grid.point(i)
            )));
        }
        Ok(det.arg())
    };
    let links: Vec<Result<(f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| Ok((link(i, pair.0)?, link(i, pair.1)?)))
        .collect();
    let links: Vec<(f64, f64)> = links.into_iter().collect::<Result<_>>()?;
    let phases = (0..grid.len())
        .map(|i| {
            let (i_mu, _) = grid.neighbor(i, pair.0, 1);
            let (i_nu, _) = grid.neighbor(i, pair.1, 1);
            wrap_phase(links[i].0 + links[i_mu].1 - links[i_nu].0 - links[i].1)
        })
        .collect();
    Ok(PlaquettePhases { pair, phases })
}

/// Integer Chern number from the plaquette loop phases.
pub fn chern_number_plaquette(
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
    pair: (usize, usize),
) -> Result<ChernResult> {
    let pl = plaquette_phases(family, grid, pair)?;
    let total: f64 = pl.phases.iter().sum();
    let planes = grid.len() / (grid.sizes()[pair.0] * grid.sizes()[pair.1]);
    let raw = total / (2.0 * std::f64::consts::PI) / planes as f64;
    let max_phase = pl.phases.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    let mut r = chern_from_raw(raw, CurvatureMethod::Plaquette);
    r.max_plaquette_phase = Some(max_phase);
    r.under_resolved = Some(max_phase > std::f64::consts::FRAC_PI_2);
    Ok(r)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CurvatureParity {
    /// `max_k |Omega(-k) + Omega(k)|`.
    pub odd_residual: f64,
    /// `max_k |Omega(-k) - Omega(k)|`.
    pub even_residual: f64,
    pub max_abs: f64,
}

/// Parity of the curvature under `k -> -k`, over every axis pair, from one
/// field evaluation per pair.
pub fn curvature_parity(family: &ProjectorFamily, grid: &BrillouinGrid) -> Result<CurvatureParity> {
    let neg = grid.negation_permutation();
    let mut out = CurvatureParity {
        odd_residual: 0.0,
        even_residual: 0.0,
        max_abs: 0.0,
    };
    for mu in 0..grid.dim() {
        for nu in mu + 1..grid.dim() {
            let f = berry_curvature(family, grid, (mu, nu), None)?;
            for i in 0..grid.len() {
                let (a, b) = (f.values[neg[i]], f.values[i]);
                out.odd_residual = out.odd_residual.max((a + b).abs());
                out.even_residual = out.even_residual.max((a - b).abs());
            }
            out.max_abs = out.max_abs.max(f.max_abs());
        }
    }
    Ok(out)
}

//! Command-line front end.
//!
//! Every subcommand is driven by a [`RunConfig`], built either from flags or
//! from a JSON file given with `--config` (flags override file values).
//! Structured results are JSON with a `"schema": 1` field; band structures,
//! curvature fields, Wilson flows and Wannier samples are CSV.
//!
//! Exit codes: 0 on success, 2 on physics failures (gap closing,
//! obstruction, insufficient resolution), 1 on usage errors.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::TopoError;
use crate::floquet::{load_potential, PlaneWaveBasis, PlaneWaveHamiltonian};
use crate::frames::{
    randomize_gauge, smooth_periodic_frame, transport_frame, wilson_flow, z2_3d, z2_boundary_winding,
    z2_wilson_flow, Frame,
};
use crate::geometry::{berry_curvature, chern_number_curvature, chern_number_plaquette};
use crate::lattice::{BrillouinGrid, Lattice};
use crate::linalg::hermitian_eigenvalues;
use crate::models::{
    audit_with_tolerance, build_builtin, builtin_defaults, load_model, parse_params, HoppingModel, Params,
    AUDIT_TOLERANCE,
};
use crate::projectors::{audit_projectors, gap_check, BandSelection, BlochHamiltonian, ProjectorFamily};
use crate::wannier::{wannier_from_frame, wannier_report};

pub const SCHEMA: u32 = 1;

const COMMANDS: &[&str] = &[
    "bands", "audit", "gap", "chern", "z2", "z2-3d", "wannier", "sweep",
];

/// Everything a run needs. Mirrors the command-line flags one to one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    /// Builtin model name.
    pub model: Option<String>,
    /// Tight-binding model JSON file.
    pub model_file: Option<PathBuf>,
    /// Fourier potential JSON file (plane-wave model).
    pub potential: Option<PathBuf>,
    /// Plane-wave cutoff on `|G|` (Cartesian units).
    pub cutoff: Option<f64>,
    pub params: Option<Params>,
    pub grid: Option<Vec<usize>>,
    /// Number of selected bands (counted from `band_start`).
    pub bands: Option<usize>,
    pub band_start: Option<usize>,
    /// Energy window `[lo, hi]`; replaces the index selection.
    pub window: Option<Vec<f64>>,
    /// k-path vertices in reduced coordinates (`bands`).
    pub path: Option<Vec<Vec<f64>>>,
    /// Samples per path segment (`bands`).
    pub path_points: Option<usize>,
    /// `chern`: both | plaquette | curvature. `z2`: both | boundary | wilson.
    pub method: Option<String>,
    /// Audit tolerance.
    pub tolerance: Option<f64>,
    /// `wannier`: smooth | transport | random.
    pub gauge: Option<String>,
    pub seed: Option<u64>,
    /// Highest localization moment (1 to 4).
    pub r_max: Option<u32>,
    /// Side CSV: curvature (`chern`), Wilson flow (`z2`), samples (`wannier`).
    pub export: Option<PathBuf>,
    pub vary: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub steps: Option<usize>,
    /// `sweep`: chern | z2 | z2-3d | none.
    pub invariant: Option<String>,
    /// `bands`: csv | json. Everything else is json.
    pub format: Option<String>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid `{field}`: {message}")]
    Usage { field: String, message: String },
    #[error(transparent)]
    Topo(#[from] TopoError),
}

impl CliError {
    fn usage(field: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Topo(e) if e.is_physics() => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Rendered artifact and the exit code it implies.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub exit: i32,
}

#[derive(Parser, Debug)]
#[command(
    name = "topoband",
    version,
    about = "Topology of gapped periodic band structures"
)]
#[command(args_conflicts_with_subcommands = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Band energies along a k-path (CSV).
    Bands(Flags),
    /// Symmetry residuals of the Hamiltonian and the projector family.
    Audit(Flags),
    /// Minimal direct gap around the selected bands.
    Gap(Flags),
    /// Chern numbers by plaquette phases and by curvature integration.
    Chern(Flags),
    /// Two-dimensional Z2 index by boundary winding and Wilson flow.
    Z2(Flags),
    /// The four three-dimensional Z2 indices.
    #[command(name = "z2-3d")]
    Z23d(Flags),
    /// Composite Wannier functions and their localization.
    Wannier(Flags),
    /// One parameter over a range: gap and invariant per point.
    Sweep(Flags),
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON file with the same fields as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Builtin model: ssh, haldane, kane_mele, bhz, wilson_dirac_3d.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Fourier potential JSON for a plane-wave model.
    #[arg(long)]
    pub potential: Option<PathBuf>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Comma separated `key=value` pairs.
    #[arg(long, allow_hyphen_values = true)]
    pub params: Option<String>,
    /// Grid sizes, e.g. `24,24`.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long)]
    pub band_start: Option<usize>,
    /// Energy window `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub window: Option<Vec<f64>>,
    /// k-path, e.g. `0,0;0.5,0;0.5,0.5;0,0`.
    #[arg(long, allow_hyphen_values = true)]
    pub path: Option<String>,
    #[arg(long)]
    pub path_points: Option<usize>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub gauge: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub r_max: Option<u32>,
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[arg(long)]
    pub vary: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub invariant: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_path(text: &str) -> CliResult<Vec<Vec<f64>>> {
    text.split(';')
        .map(|v| {
            v.split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| CliError::usage("path", format!("`{v}`: {e}")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("invalid type"))
                .unwrap_or("config")
                .to_string();
            CliError::Usage { field, message: msg }
        })
    }

    /// Overlay the flags that were given on top of `self`.
    pub fn merge_flags(mut self, command: Option<&str>, f: Flags) -> CliResult<Self> {
        macro_rules! take {
            ($($name:ident),*) => { $( if f.$name.is_some() { self.$name = f.$name; } )* };
        }
        if let Some(c) = command {
            self.command = Some(c.to_string());
        }
        take!(
            threads,
            model,
            model_file,
            potential,
            cutoff,
            grid,
            bands,
            band_start,
            window,
            path_points,
            method,
            tolerance,
            gauge,
            seed,
            r_max,
            export,
            vary,
            from,
            to,
            steps,
            invariant,
            format,
            output
        );
        if let Some(p) = &f.params {
            let parsed = parse_params(p).map_err(|e| CliError::usage("params", e.to_string()))?;
            self.params.get_or_insert_with(Params::new).extend(parsed);
        }
        if let Some(p) = &f.path {
            self.path = Some(parse_path(p)?);
        }
        Ok(self)
    }

    /// Field-level checks that need no model.
    pub fn validate(&self) -> CliResult<()> {
        let command = self
            .command
            .as_deref()
            .ok_or_else(|| CliError::usage("command", "missing"))?;
        if !COMMANDS.contains(&command) {
            return Err(CliError::usage(
                "command",
                format!("`{command}`; expected one of {COMMANDS:?}"),
            ));
        }
        let sources = [
            self.model.is_some(),
            self.model_file.is_some(),
            self.potential.is_some(),
        ];
        match sources.iter().filter(|s| **s).count() {
            0 => {
                return Err(CliError::usage(
                    "model",
                    "give one of model, model_file, potential",
                ))
            }
            1 => {}
            _ => {
                return Err(CliError::usage(
                    "model",
                    "model, model_file and potential are exclusive",
                ))
            }
        }
        if self.params.is_some() && self.model.is_none() {
            return Err(CliError::usage(
                "params",
                "parameters apply to builtin models only",
            ));
        }
        if self.cutoff.is_some() && self.potential.is_none() {
            return Err(CliError::usage("cutoff", "applies to plane-wave models only"));
        }
        if let Some(c) = self.cutoff {
            if !(c > 0.0 && c.is_finite()) {
                return Err(CliError::usage("cutoff", "must be positive"));
            }
        }
        if let Some(g) = &self.grid {
            if g.is_empty() {
                return Err(CliError::usage("grid", "empty"));
            }
        }
        if self.bands == Some(0) {
            return Err(CliError::usage("bands", "must be positive"));
        }
        if let Some(w) = &self.window {
            if w.len() != 2 || !(w[0] < w[1]) {
                return Err(CliError::usage("window", "expected lo,hi with lo < hi"));
            }
            if self.bands.is_some() || self.band_start.is_some() {
                return Err(CliError::usage("window", "exclusive with bands/band_start"));
            }
        }
        if let Some(p) = &self.path {
            if p.len() < 2 {
                return Err(CliError::usage("path", "needs at least two vertices"));
            }
        }
        if self.path_points == Some(0) {
            return Err(CliError::usage("path_points", "must be positive"));
        }
        if let Some(m) = self.method.as_deref() {
            let allowed: &[&str] = match command {
                "chern" => &["both", "plaquette", "curvature"],
                "z2" => &["both", "boundary", "wilson"],
                _ => &[],
            };
            if !allowed.contains(&m) {
                return Err(CliError::usage(
                    "method",
                    format!("`{m}` for `{command}`; expected {allowed:?}"),
                ));
            }
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(CliError::usage("tolerance", "must be positive"));
            }
        }
        if let Some(g) = self.gauge.as_deref() {
            if !["smooth", "transport", "random"].contains(&g) {
                return Err(CliError::usage(
                    "gauge",
                    format!("`{g}`; expected smooth, transport or random"),
                ));
            }
        }
        if let Some(r) = self.r_max {
            if !(1..=4).contains(&r) {
                return Err(CliError::usage("r_max", "must be between 1 and 4"));
            }
        }
        if let Some(f) = self.format.as_deref() {
            let ok = f == "json" || (f == "csv" && command == "bands");
            if !ok {
                return Err(CliError::usage(
                    "format",
                    format!("`{f}` is not available for `{command}`"),
                ));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::usage("threads", "must be positive"));
        }
        if command == "sweep" {
            if self.model.is_none() {
                return Err(CliError::usage("model", "sweeps need a builtin model"));
            }
            for (field, present) in [
                ("vary", self.vary.is_some()),
                ("from", self.from.is_some()),
                ("to", self.to.is_some()),
            ] {
                if !present {
                    return Err(CliError::usage(field, "required by sweep"));
                }
            }
            if self.steps.is_some_and(|s| s < 2) {
                return Err(CliError::usage("steps", "at least 2"));
            }
            if let Some(i) = self.invariant.as_deref() {
                if !["chern", "z2", "z2-3d", "none"].contains(&i) {
                    return Err(CliError::usage(
                        "invariant",
                        format!("`{i}`; expected chern, z2, z2-3d or none"),
                    ));
                }
            }
        }
        Ok(())
    }
}

enum Source {
    Tight(HoppingModel),
    Plane(PlaneWaveHamiltonian),
}

impl Source {
    fn ham(&self) -> &dyn BlochHamiltonian {
        match self {
            Source::Tight(m) => m,
            Source::Plane(p) => p,
        }
    }

    fn lattice(&self) -> &Lattice {
        match self {
            Source::Tight(m) => m.lattice(),
            Source::Plane(p) => p.basis().lattice(),
        }
    }

    fn describe(&self, cfg: &RunConfig) -> Value {
        match self {
            Source::Tight(m) => json!({
                "kind": "tight_binding",
                "name": m.name(),
                "params": cfg.params.clone().unwrap_or_default(),
            }),
            Source::Plane(p) => json!({
                "kind": "plane_wave",
                "potential": cfg.potential,
                "cutoff": p.basis().cutoff(),
                "modes": p.basis().len(),
            }),
        }
    }
}

fn model_error(field: &str, e: TopoError) -> CliError {
    match e {
        TopoError::InvalidParameter(_) | TopoError::UnknownModel(_) | TopoError::Parse(_) => {
            CliError::usage(field, e.to_string())
        }
        other => CliError::Topo(other),
    }
}

fn build_source(cfg: &RunConfig, params: &Params) -> CliResult<Source> {
    if let Some(name) = &cfg.model {
        let m = build_builtin(name, params).map_err(|e| {
            let field = if matches!(e, TopoError::UnknownModel(_)) {
                "model"
            } else {
                "params"
            };
            model_error(field, e)
        })?;
        return Ok(Source::Tight(m));
    }
    if let Some(path) = &cfg.model_file {
        return Ok(Source::Tight(
            load_model(path).map_err(|e| model_error("model_file", e))?,
        ));
    }
    let path = cfg.potential.as_ref().expect("validated");
    let (lattice, v) = load_potential(path).map_err(|e| model_error("potential", e))?;
    let cutoff = cfg.cutoff.unwrap_or_else(|| {
        let longest = lattice
            .dual()
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
        4.0 * longest
    });
    let basis = PlaneWaveBasis::new(&lattice, cutoff).map_err(|e| model_error("cutoff", e))?;
    let occupied = cfg.bands.unwrap_or(1);
    let h = PlaneWaveHamiltonian::new(basis, v, occupied).map_err(|e| model_error("potential", e))?;
    Ok(Source::Plane(h))
}

fn default_grid(dim: usize) -> Vec<usize> {
    match dim {
        1 => vec![64],
        2 => vec![24, 24],
        _ => vec![8; dim],
    }
}

fn make_grid(cfg: &RunConfig, dim: usize) -> CliResult<BrillouinGrid> {
    let sizes = cfg.grid.clone().unwrap_or_else(|| default_grid(dim));
    if sizes.len() != dim {
        return Err(CliError::usage(
            "grid",
            format!("{} sizes for a {dim}-dimensional model", sizes.len()),
        ));
    }
    BrillouinGrid::new(&sizes).map_err(|e| CliError::usage("grid", e.to_string()))
}

fn selection(cfg: &RunConfig, h: &dyn BlochHamiltonian) -> CliResult<BandSelection> {
    if let Some(w) = &cfg.window {
        return Ok(BandSelection::EnergyWindow { lo: w[0], hi: w[1] });
    }
    let start = cfg.band_start.unwrap_or(0);
    let count = cfg.bands.unwrap_or_else(|| h.default_occupied());
    if start + count > h.fiber_dim() {
        return Err(CliError::usage(
            "bands",
            format!(
                "bands {start}..{} exceed the fiber dimension {}",
                start + count,
                h.fiber_dim()
            ),
        ));
    }
    Ok(BandSelection::IndexWindow { start, count })
}

fn header(cfg: &RunConfig, source: &Source, grid: Option<&BrillouinGrid>) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema".into(), json!(SCHEMA));
    m.insert("command".into(), json!(cfg.command));
    m.insert("model".into(), source.describe(cfg));
    if let Some(g) = grid {
        m.insert("grid".into(), json!(g.sizes()));
    }
    m
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn default_path(dim: usize) -> Vec<Vec<f64>> {
    let corners: &[&[f64]] = match dim {
        1 => &[&[-0.5], &[0.5]],
        2 => &[&[0.0, 0.0], &[0.5, 0.0], &[0.5, 0.5], &[0.0, 0.0]],
        _ => &[
            &[0.0, 0.0, 0.0],
            &[0.5, 0.0, 0.0],
            &[0.5, 0.5, 0.0],
            &[0.5, 0.5, 0.5],
            &[0.0, 0.0, 0.0],
        ],
    };
    corners.iter().map(|c| c.to_vec()).collect()
}

fn run_bands(cfg: &RunConfig, source: &Source) -> CliResult<Outcome> {
    let h = source.ham();
    let dim = h.dim();
    let path = cfg.path.clone().unwrap_or_else(|| default_path(dim));
    if path.iter().any(|v| v.len() != dim) {
        return Err(CliError::usage(
            "path",
            format!("vertices must have {dim} coordinates"),
        ));
    }
    let per = cfg.path_points.unwrap_or(32);
    let mut ks = vec![path[0].clone()];
    for w in path.windows(2) {
        for s in 1..=per {
            let t = s as f64 / per as f64;
            ks.push(w[0].iter().zip(&w[1]).map(|(a, b)| a + t * (b - a)).collect());
        }
    }
    let shown = match (cfg.bands, source) {
        (Some(b), _) => cfg.band_start.unwrap_or(0) + b,
        (None, Source::Tight(_)) => h.fiber_dim(),
        (None, Source::Plane(_)) => h.fiber_dim().min(10),
    }
    .min(h.fiber_dim());
    let lattice = source.lattice();
    let mut arc = 0.0;
    let mut prev: Option<Vec<f64>> = None;
    let mut rows = Vec::with_capacity(ks.len());
    for k in &ks {
        let kc = lattice.cartesian_k(k);
        if let Some(p) = &prev {
            arc += kc.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        }
        prev = Some(kc);
        let e = hermitian_eigenvalues(&h.hamiltonian(k));
        rows.push((arc, k.clone(), e[..shown].to_vec()));
    }
    let text = if cfg.format.as_deref() == Some("json") {
        let mut m = header(cfg, source, None);
        m.insert(
            "points".into(),
            json!(rows
                .iter()
                .map(|(s, k, e)| json!({"s": s, "k": k, "energies": e}))
                .collect::<Vec<_>>()),
        );
        pretty(&Value::Object(m))
    } else {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["s".to_string()];
        head.extend((0..dim).map(|i| format!("k{i}")));
        head.extend((0..shown).map(|n| format!("E{n}")));
        w.write_record(&head).map_err(TopoError::from)?;
        for (s, k, e) in &rows {
            let mut rec = vec![s.to_string()];
            rec.extend(k.iter().map(|x| x.to_string()));
            rec.extend(e.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(TopoError::from)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| TopoError::Io(e.into_error()))?).expect("utf8")
    };
    Ok(Outcome { text, exit: 0 })
}

fn run_audit(cfg: &RunConfig, source: &Source) -> CliResult<Outcome> {
    let h = source.ham();
    let grid = make_grid(cfg, h.dim())?;
    let sel = selection(cfg, h)?;
    let family = ProjectorFamily::new(h, &sel);
    let model = audit_with_tolerance(h, &grid, cfg.tolerance.unwrap_or(AUDIT_TOLERANCE));
    let proj = audit_projectors(&family, &grid, cfg.tolerance.unwrap_or(1e-10))?;
    let mut m = header(cfg, source, Some(&grid));
    m.insert("selection".into(), to_value(&sel));
    m.insert("hamiltonian".into(), to_value(&model));
    m.insert("projectors".into(), to_value(&proj));
    Ok(Outcome {
        text: pretty(&Value::Object(m)),
        exit: 0,
    })
}

fn run_gap(cfg: &RunConfig, source: &Source) -> CliResult<Outcome> {
    let h = source.ham();
    let grid = make_grid(cfg, h.dim())?;
    let sel = selection(cfg, h)?;
    let family = ProjectorFamily::new(h, &sel);
    let report = gap_check(&family, &grid);
    let mut m = header(cfg, source, Some(&grid));
    m.insert("selection".into(), to_value(&sel));
    m.insert("gap".into(), to_value(&report));
    Ok(Outcome {
        text: pretty(&Value::Object(m)),
        exit: if report.gapless { 2 } else { 0 },
    })
}

fn axis_pairs(dim: usize) -> CliResult<Vec<(usize, usize)>> {
    match dim {
        2 => Ok(vec![(0, 1)]),
        3 => Ok(vec![(0, 1), (0, 2), (1, 2)]),
        _ => Err(CliError::usage(
            "model",
            format!("Chern numbers need dimension 2 or 3, got {dim}"),
        )),
    }
}

fn chern_values(
    cfg: &RunConfig,
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
) -> CliResult<(Value, bool, Vec<i64>)> {
    let method = cfg.method.as_deref().unwrap_or("both");
    let mut out = Vec::new();
    let mut all_agree = true;
    let mut values = Vec::new();
    for (n, pair) in axis_pairs(grid.dim())?.into_iter().enumerate() {
        let mut entry = serde_json::Map::new();
        entry.insert("pair".into(), json!([pair.0, pair.1]));
        let mut ints = Vec::new();
        if method != "curvature" {
            let r = chern_number_plaquette(family, grid, pair)?;
            ints.push(r.value);
            entry.insert("plaquette".into(), to_value(&r));
        }
        if method != "plaquette" {
            let field = berry_curvature(family, grid, pair, None)?;
            if n == 0 {
                if let Some(path) = &cfg.export {
                    field.save_csv(path)?;
                }
            }
            let r = chern_number_curvature(&field);
            ints.push(r.value);
            entry.insert("curvature".into(), to_value(&r));
        }
        let agree = ints.windows(2).all(|w| w[0] == w[1]);
        all_agree &= agree;
        values.push(ints[0]);
        if method == "both" {
            entry.insert("agree".into(), json!(agree));
        }
        entry.insert("value".into(), json!(ints[0]));
        out.push(Value::Object(entry));
    }
    Ok((Value::Array(out), all_agree, values))
}

fn run_chern(cfg: &RunConfig, source: &Source) -> CliResult<Outcome> {
    let h = source.ham();
    let grid = make_grid(cfg, h.dim())?;
    let sel = selection(cfg, h)?;
    let family = ProjectorFamily::new(h, &sel);
    let (pairs, agree, _) = chern_values(cfg, &family, &grid)?;
    let mut m = header(cfg, source, Some(&grid));
    m.insert("selection".into(), to_value(&sel));
    m.insert("chern".into(), pairs);
    m.insert("agree".into(), json!(agree));
    Ok(Outcome {
        text: pretty(&Value::Object(m)),
        exit: 0,
    })
}

fn z2_values(
    cfg: &RunConfig,
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
) -> CliResult<(serde_json::Map<String, Value>, bool, u8)> {
    if grid.dim() != 2 {
        return Err(CliError::usage(
            "command",
            "`z2` needs a two-dimensional model; use `z2-3d`",
        ));
    }
    let method = cfg.method.as_deref().unwrap_or("both");
    let mut m = serde_json::Map::new();
    let mut deltas = Vec::new();
    if method != "wilson" {
        let r = z2_boundary_winding(family, grid)?;
        deltas.push(r.delta);
        m.insert("boundary".into(), to_value(&r));
    }
    if method != "boundary" {
        let r = z2_wilson_flow(family, grid)?;
        deltas.push(r.delta);
        m.insert("wilson".into(), to_value(&r));
        if let Some(path) = &cfg.export {
            wilson_flow(family, grid)?.save_csv(path)?;
        }
    }
    let agree = deltas.windows(2).all(|w| w[0] == w[1]);
    if method == "both" {
        m.insert("agree".into(), json!(agree));
    }
    m.insert("delta".into(), json!(deltas[0]));
    Ok((m, agree, deltas[0]))
}

fn run_z2(cfg: &RunConfig, source: &Source) -> CliResult<Outcome> {
    let h = source.ham();
    let grid = make_grid(cfg, h.dim())?;
    let sel = selection(cfg, h)?;
    let family = ProjectorFamily::new(h, &sel);
    let (z2, _, _) = z2_values(cfg, &family, &grid)?;
    let mut m = header(cfg, source, Some(&grid));
    m.insert("selection".into(), to_value(&sel));
    m.extend(z2);
    Ok(Outcome {
        text: pretty(&Value::Object(m)),
        exit: 0,
    })
}

fn run_z2_3d(cfg: &RunConfig, source: &Source) -> CliResult<Outcome> {
    let h = source.ham();
    if h.dim() != 3 {
        return Err(CliError::usage(
            "command",
            "`z2-3d` needs a three-dimensional model",
        ));
    }
    let grid = make_grid(cfg, 3)?;
    let sel = selection(cfg, h)?;
    let family = ProjectorFamily::new(h, &sel);
    let q = z2_3d(&family, &grid)?;
    let mut m = header(cfg, source, Some(&grid));
    m.insert("selection".into(), to_value(&sel));
    m.insert("z2".into(), to_value(&q));
    Ok(Outcome {
        text: pretty(&Value::Object(m)),
        exit: 0,
    })
}

fn run_wannier(cfg: &RunConfig, source: &Source) -> CliResult<Outcome> {
    let h = source.ham();
    let grid = make_grid(cfg, h.dim())?;
    let sel = selection(cfg, h)?;
    let family = ProjectorFamily::new(h, &sel);
    let gauge = cfg.gauge.as_deref().unwrap_or("smooth");
    let frame: Frame = match gauge {
        "transport" => transport_frame(&family, &grid)?,
        "random" => randomize_gauge(&smooth_periodic_frame(&family, &grid)?, cfg.seed.unwrap_or(0)),
        _ => smooth_periodic_frame(&family, &grid)?,
    };
    let w = wannier_from_frame(&frame, source.lattice(), grid.sizes())?;
    if let Some(path) = &cfg.export {
        w.save_csv(path)?;
    }
    let report = wannier_report(&w, cfg.r_max.unwrap_or(2))?;
    let mut m = header(cfg, source, Some(&grid));
    m.insert("selection".into(), to_value(&sel));
    m.insert("gauge".into(), json!(gauge));
    m.insert(
        "frame".into(),
        json!({"flags": to_value(&frame.flags), "diagnostics": to_value(&frame.diagnostics)}),
    );
    m.insert("wannier".into(), to_value(&report));
    Ok(Outcome {
        text: pretty(&Value::Object(m)),
        exit: 0,
    })
}

fn default_invariant(h: &dyn BlochHamiltonian) -> &'static str {
    let fermionic = h.time_reversal().is_some_and(|t| t.is_fermionic());
    match (h.dim(), fermionic) {
        (2, true) => "z2",
        (2, false) => "chern",
        (3, true) => "z2-3d",
        _ => "none",
    }
}

/// One sweep point: invariant as a comparable integer vector plus its JSON.
fn sweep_invariant(
    cfg: &RunConfig,
    kind: &str,
    family: &ProjectorFamily,
    grid: &BrillouinGrid,
) -> CliResult<(Vec<i64>, Value, bool)> {
    let sub = RunConfig {
        export: None,
        method: None,
        ..cfg.clone()
    };
    match kind {
        "chern" => {
            let (v, agree, ints) = chern_values(&sub, family, grid)?;
            Ok((ints, v, agree))
        }
        "z2" => {
            let (m, agree, d) = z2_values(&sub, family, grid)?;
            Ok((vec![d as i64], Value::Object(m), agree))
        }
        "z2-3d" => {
            if grid.dim() != 3 {
                return Err(CliError::usage(
                    "invariant",
                    "z2-3d needs a three-dimensional model",
                ));
            }
            let q = z2_3d(family, grid)?;
            let ints = [q.delta_1_0, q.delta_1_plus, q.delta_2_plus, q.delta_3_plus]
                .map(i64::from)
                .to_vec();
            let agree = q.methods_agree;
            Ok((ints, to_value(&q), agree))
        }
        _ => Ok((vec![], Value::Null, true)),
    }
}

fn run_sweep(cfg: &RunConfig) -> CliResult<Outcome> {
    let name = cfg.model.as_deref().expect("validated");
    let vary = cfg.vary.as_deref().expect("validated");
    let defaults = builtin_defaults(name).map_err(|e| model_error("model", e))?;
    if !defaults.contains_key(vary) {
        return Err(CliError::usage(
            "vary",
            format!(
                "`{vary}` is not a parameter of `{name}` (known: {})",
                defaults.keys().cloned().collect::<Vec<_>>().join(", ")
            ),
        ));
    }
    let (from, to) = (cfg.from.expect("validated"), cfg.to.expect("validated"));
    let steps = cfg.steps.unwrap_or(11);
    let base = cfg.params.clone().unwrap_or_default();

    let probe = build_source(cfg, &base)?;
    let kind = cfg
        .invariant
        .clone()
        .unwrap_or_else(|| default_invariant(probe.ham()).to_string());
    let grid = make_grid(cfg, probe.ham().dim())?;

    let mut points = Vec::with_capacity(steps);
    let mut invariants: Vec<Option<Vec<i64>>> = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps);
    let mut all_agree = true;
    for s in 0..steps {
        let x = from + (to - from) * s as f64 / (steps - 1) as f64;
        values.push(x);
        let mut p = base.clone();
        p.insert(vary.to_string(), x);
        let source = build_source(cfg, &p)?;
        let h = source.ham();
        let sel = selection(cfg, h)?;
        let family = ProjectorFamily::new(h, &sel);
        let gap = gap_check(&family, &grid);
        let mut entry = serde_json::Map::new();
        entry.insert(vary.to_string(), json!(x));
        entry.insert("gap".into(), to_value(&gap));
        let mut inv = None;
        if !gap.gapless {
            match sweep_invariant(cfg, &kind, &family, &grid) {
                Ok((ints, v, agree)) => {
                    all_agree &= agree;
                    entry.insert("invariant".into(), v);
                    entry.insert("agree".into(), json!(agree));
                    if !ints.is_empty() {
                        entry.insert("value".into(), json!(ints));
                        inv = Some(ints);
                    }
                }
                Err(CliError::Topo(e)) if e.is_physics() => {
                    entry.insert("error".into(), json!(e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
        invariants.push(inv);
        points.push(Value::Object(entry));
    }

    // Bracket every change between consecutive resolved points.
    let mut transitions = Vec::new();
    let mut last: Option<(usize, &Vec<i64>)> = None;
    for (i, inv) in invariants.iter().enumerate() {
        if let Some(v) = inv {
            if let Some((j, prev)) = last {
                if prev != v {
                    transitions.push(json!({
                        "from": values[j],
                        "to": values[i],
                        "before": prev,
                        "after": v,
                    }));
                }
            }
            last = Some((i, v));
        }
    }

    let mut m = header(cfg, &probe, Some(&grid));
    m.insert("vary".into(), json!(vary));
    m.insert("invariant".into(), json!(kind));
    m.insert("points".into(), Value::Array(points));
    m.insert("transitions".into(), Value::Array(transitions));
    m.insert("agree".into(), json!(all_agree));
    Ok(Outcome {
        text: pretty(&Value::Object(m)),
        exit: 0,
    })
}

fn dispatch(cfg: &RunConfig) -> CliResult<Outcome> {
    let command = cfg.command.as_deref().expect("validated");
    if command == "sweep" {
        return run_sweep(cfg);
    }
    let source = build_source(cfg, &cfg.params.clone().unwrap_or_default())?;
    match command {
        "bands" => run_bands(cfg, &source),
        "audit" => run_audit(cfg, &source),
        "gap" => run_gap(cfg, &source),
        "chern" => run_chern(cfg, &source),
        "z2" => run_z2(cfg, &source),
        "z2-3d" => run_z2_3d(cfg, &source),
        "wannier" => run_wannier(cfg, &source),
        _ => unreachable!("validated"),
    }
}

/// Validate and run a configuration, honouring the thread cap. The artifact
/// is returned rather than written.
pub fn execute(cfg: &RunConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage("threads", e.to_string()))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

/// Turn parsed arguments into a configuration (reading `--config` if given).
pub fn config_from_cli(cli: Cli) -> CliResult<RunConfig> {
    let (name, flags) = match cli.command {
        Some(Command::Bands(f)) => (Some("bands"), f),
        Some(Command::Audit(f)) => (Some("audit"), f),
        Some(Command::Gap(f)) => (Some("gap"), f),
        Some(Command::Chern(f)) => (Some("chern"), f),
        Some(Command::Z2(f)) => (Some("z2"), f),
        Some(Command::Z23d(f)) => (Some("z2-3d"), f),
        Some(Command::Wannier(f)) => (Some("wannier"), f),
        Some(Command::Sweep(f)) => (Some("sweep"), f),
        None => (None, cli.flags),
    };
    let base = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage("config", format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    base.merge_flags(name, flags)
}

fn emit(cfg: &RunConfig, outcome: &Outcome) -> std::io::Result<()> {
    match &cfg.output {
        Some(path) => fs::write(path, &outcome.text),
        None => std::io::stdout().write_all(outcome.text.as_bytes()),
    }
}

/// Full front end: parse, run, write, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = config_from_cli(cli).and_then(|cfg| execute(&cfg).map(|o| (cfg, o)));
    match result {
        Ok((cfg, outcome)) => {
            if let Err(e) = emit(&cfg, &outcome) {
                eprintln!("error: {e}");
                return 1;
            }
            if outcome.exit != 0 {
                eprintln!("error: gap condition violated");
            }
            outcome.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

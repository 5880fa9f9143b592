//! Tight-binding Bloch Hamiltonians `H(k) = sum_R exp(i 2 pi k.R) H_R` in the
//! periodic gauge, a small zoo of standard models, and a JSON file format.
//!
//! `H_R` is the block `<0|H|R>` coupling the home cell to cell `R`; the
//! phase uses the cell offset only, never orbital positions, so the
//! dual-lattice representation `tau` is trivial for every model here.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TopoError};
use crate::lattice::{fold, BrillouinGrid, Lattice, SpaceReflection, TauRep, TimeReversal};
use crate::linalg::{
    c, frobenius, hermitian_eigenvalues, hermitian_part, identity, op_norm, random_hermitian, CMat, I, ONE,
    ZERO,
};
use crate::projectors::BlochHamiltonian;

/// Tolerance on `H_{-R} = H_R^dagger` accepted when loading.
pub const HERMITICITY_TOLERANCE: f64 = 1e-9;
/// Default tolerance for audit verdicts.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

pub type Params = BTreeMap<String, f64>;

/// Convenience constructor for parameter maps.
pub fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Parse `"a=1,b=-0.5"` into a parameter map.
pub fn parse_params(text: &str) -> Result<Params> {
    let mut out = Params::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| TopoError::Parse(format!("expected key=value, got `{item}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| TopoError::Parse(format!("`{v}` is not a number (key `{k}`)")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct HoppingModel {
    name: String,
    lattice: Lattice,
    fiber_dim: usize,
    hoppings: BTreeMap<Vec<i64>, CMat>,
    n_occ: usize,
    time_reversal: Option<TimeReversal>,
    space_reflection: Option<SpaceReflection>,
    tau: TauRep,
}

fn negate(r: &[i64]) -> Vec<i64> {
    r.iter().map(|x| -x).collect()
}

impl HoppingModel {
    /// Validate and store a hopping table. A missing partner `-R` is filled
    /// in with `H_R^dagger`; a partner that disagrees by more than
    /// [`HERMITICITY_TOLERANCE`] is rejected. Pairs are then made exactly
    /// Hermitian, keeping the lexicographically larger `R` as reference.
    pub fn new(
        lattice: Lattice,
        fiber_dim: usize,
        hoppings: impl IntoIterator<Item = (Vec<i64>, CMat)>,
        n_occ: usize,
    ) -> Result<Self> {
        if fiber_dim == 0 {
            return Err(TopoError::InvalidParameter("fiber_dim must be positive".into()));
        }
        if n_occ == 0 || n_occ >= fiber_dim {
            return Err(TopoError::InvalidParameter(format!(
                "n_occ = {n_occ} must satisfy 0 < n_occ < fiber_dim = {fiber_dim}"
            )));
        }
        let d = lattice.dim();
        let mut table: BTreeMap<Vec<i64>, CMat> = BTreeMap::new();
        for (r, h) in hoppings {
            if r.len() != d {
                return Err(TopoError::Dimension(format!(
                    "hopping vector {r:?} has length {} in a {d}-dimensional lattice",
                    r.len()
                )));
            }
            if h.nrows() != fiber_dim || h.ncols() != fiber_dim {
                return Err(TopoError::Shape(format!(
                    "H_R at R = {r:?} is {}x{}, expected {fiber_dim}x{fiber_dim}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(TopoError::InvalidParameter(format!(
                    "non-finite entry in H_R at R = {r:?}"
                )));
            }
            match table.get_mut(&r) {
                Some(existing) => *existing += h,
                None => {
                    table.insert(r, h);
                }
            }
        }
        let keys: Vec<Vec<i64>> = table.keys().cloned().collect();
        for r in keys {
            let minus = negate(&r);
            let h = table[&r].clone();
            if r == minus {
                let defect = frobenius(&(&h - h.adjoint()));
                if defect > HERMITICITY_TOLERANCE {
                    return Err(TopoError::Hermiticity { r, defect });
                }
                table.insert(r, hermitian_part(&h));
                continue;
            }
            match table.get(&minus).cloned() {
                None => {
                    table.insert(minus, h.adjoint());
                }
                // the pair is handled once, from its smaller member
                Some(_) if r > minus => {}
                Some(hm) => {
                    let defect = frobenius(&(&h - hm.adjoint()));
                    if defect > HERMITICITY_TOLERANCE {
                        return Err(TopoError::Hermiticity { r, defect });
                    }
                    table.insert(r, hm.adjoint());
                }
            }
        }
        Ok(HoppingModel {
            name: "custom".into(),
            lattice,
            fiber_dim,
            hoppings: table,
            n_occ,
            time_reversal: None,
            space_reflection: None,
            tau: TauRep::Trivial,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_time_reversal(mut self, theta: TimeReversal) -> Result<Self> {
        if theta.dim() != self.fiber_dim {
            return Err(TopoError::Shape("time-reversal dimension mismatch".into()));
        }
        self.time_reversal = Some(theta);
        Ok(self)
    }

    pub fn with_space_reflection(mut self, r: SpaceReflection) -> Result<Self> {
        if r.unitary().nrows() != self.fiber_dim {
            return Err(TopoError::Shape("reflection dimension mismatch".into()));
        }
        self.space_reflection = Some(r);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n_occ(&self) -> usize {
        self.n_occ
    }

    pub fn hoppings(&self) -> &BTreeMap<Vec<i64>, CMat> {
        &self.hoppings
    }

    pub fn time_reversal(&self) -> Option<&TimeReversal> {
        self.time_reversal.as_ref()
    }

    pub fn space_reflection(&self) -> Option<&SpaceReflection> {
        self.space_reflection.as_ref()
    }

    /// Largest entry magnitude among the hoppings, used as an energy scale.
    pub fn energy_scale(&self) -> f64 {
        self.hoppings
            .values()
            .map(op_norm)
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE)
    }

    /// `H(k)` with `k` in reduced coordinates, folded into the canonical cell
    /// before the phases are formed.
    pub fn bloch_hamiltonian(&self, k: &[f64]) -> CMat {
        let kf: Vec<f64> = k.iter().map(|&x| fold(x)).collect();
        let mut h = CMat::zeros(self.fiber_dim, self.fiber_dim);
        for (r, hr) in &self.hoppings {
            let phase: f64 = kf.iter().zip(r).map(|(k, &r)| k * r as f64).sum();
            let z = Complex64::from_polar(1.0, 2.0 * PI * phase);
            h += hr * z;
        }
        hermitian_part(&h)
    }
}

impl BlochHamiltonian for HoppingModel {
    fn dim(&self) -> usize {
        self.lattice.dim()
    }

    fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    fn hamiltonian(&self, k: &[f64]) -> CMat {
        self.bloch_hamiltonian(k)
    }

    fn time_reversal(&self) -> Option<&TimeReversal> {
        self.time_reversal.as_ref()
    }

    fn space_reflection(&self) -> Option<&SpaceReflection> {
        self.space_reflection.as_ref()
    }

    fn tau(&self) -> &TauRep {
        &self.tau
    }

    fn default_occupied(&self) -> usize {
        self.n_occ
    }

    fn lattice(&self) -> Option<&Lattice> {
        Some(&self.lattice)
    }
}

// ---------------------------------------------------------------------------
// Builtins

const BUILTINS: [&str; 5] = ["ssh", "haldane", "kane_mele", "bhz", "wilson_dirac_3d"];

pub fn builtin_names() -> &'static [&'static str] {
    &BUILTINS
}

/// Default parameters of a builtin, in the order they are documented.
pub fn builtin_defaults(name: &str) -> Result<Params> {
    let p = match name {
        "ssh" => params(&[("t", 1.0), ("tp", 0.5)]),
        "haldane" => params(&[("t1", 1.0), ("t2", 0.2), ("phi", PI / 2.0), ("M", 0.0)]),
        "kane_mele" => params(&[("t", 1.0), ("lso", 0.06), ("lr", 0.05), ("lv", 0.1)]),
        "bhz" => params(&[("A", 1.0), ("B", 1.0), ("C", 0.0), ("D", 0.0), ("M", -0.5)]),
        "wilson_dirac_3d" => params(&[("m", -2.0)]),
        other => return Err(TopoError::UnknownModel(other.to_string())),
    };
    Ok(p)
}

/// Construct one of the builtin models.
///
/// * `ssh`: `t` (intra-cell), `tp` (inter-cell). Gapless when `|t| = |tp|`.
/// * `haldane`: `t1`, `t2`, `phi`, `M`. Gapless when `|M| = 3 sqrt(3) |t2 sin phi|`.
/// * `kane_mele`: `t`, `lso`, `lr`, `lv`. At `lr = 0` gapless when
///   `|lv| = 3 sqrt(3) |lso|`.
/// * `bhz`: `A`, `B`, `C`, `D`, `M`. With `B > 0`, `M in (-4B, 0)` is the
///   inverted phase; gapless at `M in {0, -4B, -8B}`.
/// * `wilson_dirac_3d`: `m`. Gapless at `m in {-3, -1, 1, 3}`; strong phase for
///   `|m| in (1, 3)`.
///
/// Every builtin carries its candidate time reversal and reflection; whether
/// they hold at the given parameters is reported by [`verify_model_symmetries`].
pub fn build_builtin(name: &str, overrides: &Params) -> Result<HoppingModel> {
    let mut p = builtin_defaults(name)?;
    for (k, v) in overrides {
        if !p.contains_key(k) {
            return Err(TopoError::InvalidParameter(format!(
                "model `{name}` has no parameter `{k}` (known: {})",
                p.keys().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        if !v.is_finite() {
            return Err(TopoError::InvalidParameter(format!("`{k}` = {v} is not finite")));
        }
        p.insert(k.clone(), *v);
    }
    let g = |k: &str| p[k];
    let model = match name {
        "ssh" => ssh(g("t"), g("tp"))?,
        "haldane" => haldane(g("t1"), g("t2"), g("phi"), g("M"))?,
        "kane_mele" => kane_mele(g("t"), g("lso"), g("lr"), g("lv"))?,
        "bhz" => bhz(g("A"), g("B"), g("C"), g("D"), g("M"))?,
        "wilson_dirac_3d" => wilson_dirac_3d(g("m"))?,
        _ => unreachable!("checked by builtin_defaults"),
    };
    Ok(model.with_name(name))
}

fn pauli() -> [CMat; 4] {
    let m = |a: [Complex64; 4]| CMat::from_row_slice(2, 2, &a);
    [
        identity(2),
        m([ZERO, ONE, ONE, ZERO]),
        m([ZERO, -I, I, ZERO]),
        m([ONE, ZERO, ZERO, -ONE]),
    ]
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

fn real(x: f64) -> Complex64 {
    c(x, 0.0)
}

/// Two-site chain with intra-cell hopping `t` and inter-cell hopping `tp`.
pub fn ssh(t: f64, tp: f64) -> Result<HoppingModel> {
    let lattice = Lattice::cubic(1)?;
    let h0 = CMat::from_row_slice(2, 2, &[ZERO, real(t), real(t), ZERO]);
    // <A,0|H|B,-1> = <B,0|H|A,+1> = tp
    let mut h1 = CMat::zeros(2, 2);
    h1[(1, 0)] = real(tp);
    let sigma = pauli();
    HoppingModel::new(lattice, 2, vec![(vec![0], h0), (vec![1], h1)], 1)?
        .with_time_reversal(TimeReversal::conjugation(2))?
        .with_space_reflection(SpaceReflection::new(sigma[1].clone())?)
}

/// Geometry of the honeycomb lattice: triangular Bravais lattice with unit
/// spacing, sublattice A at the origin and B at `(1/2, sqrt(3)/6)`.
struct Honeycomb {
    lattice: Lattice,
    sites: [[f64; 2]; 2],
}

/// A directed bond from sublattice `from` in the home cell to sublattice
/// `to` in cell `r`, with the Cartesian displacement.
struct Bond {
    from: usize,
    to: usize,
    r: Vec<i64>,
    d: [f64; 2],
}

impl Honeycomb {
    fn new() -> Result<Self> {
        let s3 = 3f64.sqrt();
        Ok(Honeycomb {
            lattice: Lattice::new(&[vec![1.0, 0.0], vec![0.5, s3 / 2.0]])?,
            sites: [[0.0, 0.0], [0.5, s3 / 6.0]],
        })
    }

    fn position(&self, sub: usize, r: &[i64]) -> [f64; 2] {
        let x = self.lattice.cartesian_x(&[r[0] as f64, r[1] as f64]);
        [x[0] + self.sites[sub][0], x[1] + self.sites[sub][1]]
    }

    fn bonds(&self, length: f64) -> Vec<Bond> {
        let mut out = Vec::new();
        for from in 0..2 {
            for to in 0..2 {
                for r1 in -2..=2 {
                    for r2 in -2..=2 {
                        let r = vec![r1, r2];
                        let p = self.position(to, &r);
                        let o = self.sites[from];
                        let d = [p[0] - o[0], p[1] - o[1]];
                        if ((d[0] * d[0] + d[1] * d[1]).sqrt() - length).abs() < 1e-9 {
                            out.push(Bond { from, to, r, d });
                        }
                    }
                }
            }
        }
        out
    }

    fn nearest(&self) -> Vec<Bond> {
        self.bonds(1.0 / 3f64.sqrt())
    }

    /// Next-nearest bonds with the chirality `nu = sign(d1 x d2)` of the
    /// two-step path through the shared nearest neighbour.
    fn next_nearest(&self) -> Vec<(Bond, f64)> {
        let nn = self.nearest();
        self.bonds(1.0)
            .into_iter()
            .map(|b| {
                let start = self.sites[b.from];
                let end = self.position(b.to, &b.r);
                let via = nn
                    .iter()
                    .filter(|n| n.from == b.from)
                    .map(|n| [start[0] + n.d[0], start[1] + n.d[1]])
                    .find(|p| {
                        let e = [end[0] - p[0], end[1] - p[1]];
                        ((e[0] * e[0] + e[1] * e[1]).sqrt() - 1.0 / 3f64.sqrt()).abs() < 1e-9
                    })
                    .expect("honeycomb next-nearest pair has a common neighbour");
                let d1 = [via[0] - start[0], via[1] - start[1]];
                let d2 = [end[0] - via[0], end[1] - via[1]];
                let cross = d1[0] * d2[1] - d1[1] * d2[0];
                (b, cross.signum())
            })
            .collect()
    }
}

fn add_block(table: &mut BTreeMap<Vec<i64>, CMat>, r: &[i64], n: usize, f: impl FnOnce(&mut CMat)) {
    let entry = table.entry(r.to_vec()).or_insert_with(|| CMat::zeros(n, n));
    f(entry);
}

/// Haldane model on the honeycomb lattice.
pub fn haldane(t1: f64, t2: f64, phi: f64, mass: f64) -> Result<HoppingModel> {
    let hc = Honeycomb::new()?;
    let mut table: BTreeMap<Vec<i64>, CMat> = BTreeMap::new();
    add_block(&mut table, &[0, 0], 2, |h| {
        h[(0, 0)] += real(mass);
        h[(1, 1)] -= real(mass);
    });
    for b in hc.nearest() {
        add_block(&mut table, &b.r, 2, |h| h[(b.from, b.to)] += real(t1));
    }
    for (b, nu) in hc.next_nearest() {
        let amp = Complex64::from_polar(t2, phi * nu);
        add_block(&mut table, &b.r, 2, |h| h[(b.from, b.to)] += amp);
    }
    let sigma = pauli();
    HoppingModel::new(hc.lattice.clone(), 2, table, 1)?
        .with_time_reversal(TimeReversal::conjugation(2))?
        .with_space_reflection(SpaceReflection::new(sigma[1].clone())?)
}

/// Kane-Mele model. Orbital index is `2 * sublattice + spin`.
pub fn kane_mele(t: f64, lso: f64, lr: f64, lv: f64) -> Result<HoppingModel> {
    let hc = Honeycomb::new()?;
    let s = pauli();
    let proj = |a: usize, b: usize| {
        let mut m = CMat::zeros(2, 2);
        m[(a, b)] = ONE;
        m
    };
    let mut table: BTreeMap<Vec<i64>, CMat> = BTreeMap::new();
    add_block(&mut table, &[0, 0], 4, |h| {
        *h += kron(&proj(0, 0), &s[0]) * real(lv) - kron(&proj(1, 1), &s[0]) * real(lv);
    });
    let len = 1.0 / 3f64.sqrt();
    for b in hc.nearest() {
        let (dx, dy) = (b.d[0] / len, b.d[1] / len);
        // i lr (s x d)_z = i lr (s_x d_y - s_y d_x)
        let spin = &s[0] * real(t) + (&s[1] * real(dy) - &s[2] * real(dx)) * (I * lr);
        let block = kron(&proj(b.from, b.to), &spin);
        add_block(&mut table, &b.r, 4, |h| *h += block);
    }
    for (b, nu) in hc.next_nearest() {
        let spin = &s[3] * (I * (lso * nu));
        let block = kron(&proj(b.from, b.to), &spin);
        add_block(&mut table, &b.r, 4, |h| *h += block);
    }
    let iy = &s[2] * I;
    HoppingModel::new(hc.lattice.clone(), 4, table, 2)?
        .with_time_reversal(TimeReversal::new(kron(&identity(2), &iy), -1)?)?
        .with_space_reflection(SpaceReflection::new(kron(&s[1], &s[0]))?)
}

/// Bernevig-Hughes-Zhang model on the square lattice. The spin index is
/// outermost; the spin-down block is the time reverse of spin-up.
pub fn bhz(a: f64, b: f64, cc: f64, d: f64, m: f64) -> Result<HoppingModel> {
    let s = pauli();
    let lattice = Lattice::cubic(2)?;
    let mut up: BTreeMap<Vec<i64>, CMat> = BTreeMap::new();
    up.insert(vec![0, 0], &s[0] * real(cc - 4.0 * d) + &s[3] * real(m + 4.0 * b));
    let half_i = c(0.0, -0.5); // 1 / (2i)
    for (axis, sigma) in [(0usize, &s[1]), (1usize, &s[2])] {
        for sign in [1i64, -1] {
            let mut r = vec![0, 0];
            r[axis] = sign;
            // sin k = (e^{ik} - e^{-ik}) / 2i ; cos k = (e^{ik} + e^{-ik}) / 2
            let block = sigma * (half_i * (a * sign as f64)) - &s[3] * real(b) + &s[0] * real(d);
            up.insert(r, block);
        }
    }
    let mut table = BTreeMap::new();
    let p_up = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
    let p_dn = CMat::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]);
    for (r, h) in up {
        let down = h.map(|z| z.conj());
        table.insert(r, kron(&p_up, &h) + kron(&p_dn, &down));
    }
    let iy = &s[2] * I;
    HoppingModel::new(lattice, 4, table, 2)?
        .with_time_reversal(TimeReversal::new(kron(&iy, &identity(2)), -1)?)?
        .with_space_reflection(SpaceReflection::new(kron(&s[0], &s[3]))?)
}

/// Cubic-lattice Wilson-Dirac model
/// `H = (m + sum_i cos k_i) G0 + sum_i sin k_i Gi` with `G0 = tz x 1`,
/// `Gi = tx x s_i`.
pub fn wilson_dirac_3d(m: f64) -> Result<HoppingModel> {
    let s = pauli();
    let lattice = Lattice::cubic(3)?;
    let g0 = kron(&s[3], &s[0]);
    let mut table = BTreeMap::new();
    table.insert(vec![0, 0, 0], &g0 * real(m));
    for i in 0..3 {
        let gi = kron(&s[1], &s[i + 1]);
        for sign in [1i64, -1] {
            let mut r = vec![0; 3];
            r[i] = sign;
            table.insert(r, &g0 * real(0.5) + &gi * c(0.0, -0.5 * sign as f64));
        }
    }
    let iy = &s[2] * I;
    HoppingModel::new(lattice, 4, table, 2)?
        .with_time_reversal(TimeReversal::new(kron(&s[0], &iy), -1)?)?
        .with_space_reflection(SpaceReflection::new(g0)?)
}

/// Stack copies of a two-dimensional model along a third, orthogonal unit
/// axis, coupled by `interlayer` (an on-fibre matrix hopping to the layer
/// above; `None` leaves the layers decoupled).
pub fn stack_layers(model: &HoppingModel, interlayer: Option<&CMat>) -> Result<HoppingModel> {
    if model.lattice.dim() != 2 {
        return Err(TopoError::Dimension("only 2D models can be stacked".into()));
    }
    let b = model.lattice.basis();
    let lattice = Lattice::new(&[
        vec![b[(0, 0)], b[(1, 0)], 0.0],
        vec![b[(0, 1)], b[(1, 1)], 0.0],
        vec![0.0, 0.0, 1.0],
    ])?;
    let mut table: Vec<(Vec<i64>, CMat)> = model
        .hoppings
        .iter()
        .map(|(r, h)| (vec![r[0], r[1], 0], h.clone()))
        .collect();
    if let Some(t) = interlayer {
        table.push((vec![0, 0, 1], t.clone()));
    }
    let mut out = HoppingModel::new(lattice, model.fiber_dim, table, model.n_occ)?
        .with_name(format!("{}_stack", model.name));
    out.time_reversal = model.time_reversal.clone();
    out.space_reflection = model.space_reflection.clone();
    Ok(out)
}

/// Random gapped two-band chain: `sigma_z` on site plus Hermitian random
/// perturbations whose operator norms are bounded so that the gap at every
/// `k` exceeds `2 - 2 * (0.25 + 2 * 0.2) = 0.7`.
pub fn random_gapped_chain(seed: u64) -> Result<HoppingModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = pauli();
    let mut h0 = random_hermitian(2, &mut rng);
    h0 *= real(0.25 / op_norm(&h0));
    h0 += &s[3];
    let h1r = random_hermitian(2, &mut rng);
    let h1i = random_hermitian(2, &mut rng);
    let mut h1 = h1r + h1i * I;
    h1 *= real(0.2 / op_norm(&h1));
    Ok(
        HoppingModel::new(Lattice::cubic(1)?, 2, vec![(vec![0], h0), (vec![1], h1)], 1)?
            .with_name(format!("random_chain_{seed}")),
    )
}

// ---------------------------------------------------------------------------
// Audit

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SymmetryVerdict {
    pub residual: f64,
    pub pass: bool,
    pub argmax_k: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ModelAudit {
    pub tolerance: f64,
    /// `max_k || H(-k) - Theta H(k) Theta^{-1} ||`.
    pub time_reversal: Option<SymmetryVerdict>,
    /// `max_k || H(-k) - R H(k) R^dagger ||`.
    pub space_reflection: Option<SymmetryVerdict>,
    /// `max_k || H(k + lambda) - tau H(k) tau^{-1} ||` over the generators.
    pub tau_residual: f64,
    pub tau_pass: bool,
    /// `max || Theta tau(l) - tau(l)^{-1} Theta ||` over the generators.
    pub compatibility_residual: f64,
    /// `max_{n,k} |E_n(k) - E_n(-k)|`, present when TR or SR is declared.
    pub spectrum_parity: Option<f64>,
}

impl ModelAudit {
    pub fn tr_residual(&self) -> f64 {
        self.time_reversal.as_ref().map_or(0.0, |v| v.residual)
    }

    pub fn sr_residual(&self) -> f64 {
        self.space_reflection.as_ref().map_or(0.0, |v| v.residual)
    }

    pub fn tr_pass(&self) -> bool {
        self.time_reversal.as_ref().is_some_and(|v| v.pass)
    }

    pub fn sr_pass(&self) -> bool {
        self.space_reflection.as_ref().is_some_and(|v| v.pass)
    }
}

/// Audit the declared symmetries of any Bloch family on a grid.
pub fn verify_model_symmetries(model: &dyn BlochHamiltonian, grid: &BrillouinGrid) -> ModelAudit {
    audit_with_tolerance(model, grid, AUDIT_TOLERANCE)
}

pub fn audit_with_tolerance(
    model: &dyn BlochHamiltonian,
    grid: &BrillouinGrid,
    tolerance: f64,
) -> ModelAudit {
    let neg = grid.negation_permutation();
    let n = model.fiber_dim();
    let hams: Vec<CMat> = (0..grid.len())
        .map(|i| model.hamiltonian(&grid.point(i)))
        .collect();
    let relation = |f: &dyn Fn(&CMat) -> CMat| -> SymmetryVerdict {
        let mut worst = 0.0_f64;
        let mut arg = 0usize;
        for i in 0..grid.len() {
            let r = op_norm(&(&hams[neg[i]] - f(&hams[i])));
            if r > worst {
                worst = r;
                arg = i;
            }
        }
        SymmetryVerdict {
            residual: worst,
            pass: worst < tolerance,
            argmax_k: grid.point(arg),
        }
    };
    let time_reversal = model.time_reversal().map(|t| relation(&|h| t.conjugate(h)));
    let space_reflection = model.space_reflection().map(|r| relation(&|h| r.conjugate(h)));

    let tau = model.tau();
    let mut tau_residual = 0.0_f64;
    let mut compatibility_residual = 0.0_f64;
    if !tau.is_trivial() {
        for axis in 0..grid.dim() {
            let mut lambda = vec![0i64; grid.dim()];
            lambda[axis] = 1;
            for i in 0..grid.len() {
                let mut k = grid.point(i);
                let h = &hams[i];
                k[axis] += 1.0;
                let shifted = model.hamiltonian(&k);
                tau_residual = tau_residual.max(op_norm(&(shifted - tau.conjugate(&lambda, h))));
            }
            if let Some(t) = model.time_reversal() {
                let tm = tau.matrix(&lambda, n);
                let lhs = t.unitary() * crate::linalg::conj(&tm);
                let rhs = tm.adjoint() * t.unitary();
                compatibility_residual = compatibility_residual.max(op_norm(&(lhs - rhs)));
            }
        }
    }
    let spectrum_parity = if time_reversal.is_some() || space_reflection.is_some() {
        let spectra: Vec<Vec<f64>> = hams.iter().map(hermitian_eigenvalues).collect();
        let mut worst = 0.0_f64;
        for i in 0..grid.len() {
            for (a, b) in spectra[i].iter().zip(&spectra[neg[i]]) {
                worst = worst.max((a - b).abs());
            }
        }
        Some(worst)
    } else {
        None
    };
    ModelAudit {
        tolerance,
        time_reversal,
        space_reflection,
        tau_residual,
        tau_pass: tau_residual < tolerance,
        compatibility_residual,
        spectrum_parity,
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct HoppingEntry {
    #[serde(rename = "R")]
    r: Vec<i64>,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct TimeReversalEntry {
    unitary_re: Vec<Vec<f64>>,
    unitary_im: Vec<Vec<f64>>,
    sign: i8,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct ReflectionEntry {
    unitary_re: Vec<Vec<f64>>,
    unitary_im: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dim: usize,
    basis: Vec<Vec<f64>>,
    fiber_dim: usize,
    n_occ: Option<usize>,
    hoppings: Vec<HoppingEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_reversal: Option<TimeReversalEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    space_reflection: Option<ReflectionEntry>,
}

fn split_matrix(m: &CMat) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows = |f: fn(&Complex64) -> f64| {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
            .collect()
    };
    (rows(|z| z.re), rows(|z| z.im))
}

fn join_matrix(re: &[Vec<f64>], im: &[Vec<f64>], n: usize, what: &str) -> Result<CMat> {
    let ok = re.len() == n && im.len() == n && re.iter().chain(im).all(|row| row.len() == n);
    if !ok {
        return Err(TopoError::Parse(format!("{what}: expected {n}x{n} re/im arrays")));
    }
    Ok(CMat::from_fn(n, n, |i, j| c(re[i][j], im[i][j])))
}

impl HoppingModel {
    /// Serialize to the JSON model-file representation.
    pub fn to_json(&self) -> Result<String> {
        let basis = self.lattice.basis_vectors();
        let hoppings = self
            .hoppings
            .iter()
            .map(|(r, h)| {
                let (re, im) = split_matrix(h);
                HoppingEntry { r: r.clone(), re, im }
            })
            .collect();
        let file = ModelFile {
            name: Some(self.name.clone()),
            dim: self.lattice.dim(),
            basis,
            fiber_dim: self.fiber_dim,
            n_occ: Some(self.n_occ),
            hoppings,
            time_reversal: self.time_reversal.as_ref().map(|t| {
                let (unitary_re, unitary_im) = split_matrix(t.unitary());
                TimeReversalEntry {
                    unitary_re,
                    unitary_im,
                    sign: t.sign(),
                }
            }),
            space_reflection: self.space_reflection.as_ref().map(|r| {
                let (unitary_re, unitary_im) = split_matrix(r.unitary());
                ReflectionEntry {
                    unitary_re,
                    unitary_im,
                }
            }),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| TopoError::Parse(e.to_string()))?;
        if file.basis.len() != file.dim {
            return Err(TopoError::Parse(format!(
                "basis has {} vectors, dim is {}",
                file.basis.len(),
                file.dim
            )));
        }
        let n_occ = file
            .n_occ
            .ok_or_else(|| TopoError::Parse("missing field `n_occ`".into()))?;
        let lattice = Lattice::new(&file.basis)?;
        let n = file.fiber_dim;
        let mut table = Vec::with_capacity(file.hoppings.len());
        for e in &file.hoppings {
            table.push((
                e.r.clone(),
                join_matrix(&e.re, &e.im, n, &format!("hopping R = {:?}", e.r))?,
            ));
        }
        let mut model = HoppingModel::new(lattice, n, table, n_occ)?;
        if let Some(name) = file.name {
            model.name = name;
        }
        if let Some(t) = file.time_reversal {
            let u = join_matrix(&t.unitary_re, &t.unitary_im, n, "time_reversal")?;
            model = model.with_time_reversal(TimeReversal::new(u, t.sign)?)?;
        }
        if let Some(r) = file.space_reflection {
            let u = join_matrix(&r.unitary_re, &r.unitary_im, n, "space_reflection")?;
            model = model.with_space_reflection(SpaceReflection::new(u)?)?;
        }
        Ok(model)
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<HoppingModel> {
    HoppingModel::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_model(model: &HoppingModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, KPoint};
    use crate::linalg::hermitian_eigen;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        frobenius(&(a - b)) < tol
    }

    #[test]
    fn ssh_atomic_limit_is_flat() {
        let m = ssh(1.0, 0.0).unwrap();
        let sx = pauli()[1].clone();
        for k in [-0.5, -0.2, 0.0, 0.37] {
            assert!(close(&m.bloch_hamiltonian(&[k]), &sx, 1e-15));
        }
    }

    #[test]
    fn ssh_dimerized_matches_closed_form() {
        let m = ssh(0.0, 1.0).unwrap();
        let mut phases = Vec::new();
        for j in 0..64 {
            let k = -0.5 + j as f64 / 64.0;
            let h = m.bloch_hamiltonian(&[k]);
            let e = Complex64::from_polar(1.0, -2.0 * PI * k);
            let expect = CMat::from_row_slice(2, 2, &[ZERO, e, e.conj(), ZERO]);
            assert!(close(&h, &expect, 1e-14));
            let (vals, _) = hermitian_eigen(&h);
            assert!((vals[0] + 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
            // winding of the off-diagonal element e^{+i 2 pi k}
            phases.push(h[(1, 0)].arg());
        }
        let mut total = 0.0;
        for j in 0..64 {
            total += crate::linalg::wrap_phase(phases[(j + 1) % 64] - phases[j]);
        }
        assert!((total / (2.0 * PI) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haldane_mass_gap_at_dirac_point() {
        let m = haldane(1.0, 0.0, 0.7, 0.3).unwrap();
        for k in [[-1.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, -1.0 / 3.0]] {
            let vals = hermitian_eigenvalues(&m.bloch_hamiltonian(&k));
            assert!((vals[0] + 0.3).abs() < 1e-12 && (vals[1] - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn haldane_has_six_next_nearest_per_site_with_opposite_chirality() {
        let hc = Honeycomb::new().unwrap();
        let nnn = hc.next_nearest();
        assert_eq!(nnn.len(), 12);
        assert_eq!(hc.nearest().len(), 6);
        for (b, nu) in &nnn {
            let partner = nnn
                .iter()
                .find(|(o, _)| o.from == b.to && o.r == negate(&b.r))
                .unwrap();
            assert_eq!(*nu, -partner.1);
        }
    }

    #[test]
    fn periodic_gauge_is_bit_exact_on_grid() {
        let m = build_builtin("kane_mele", &Params::new()).unwrap();
        let sizes = [8usize, 8];
        for n1 in -4..4 {
            for n2 in -4..4 {
                let k = KPoint::from_grid(&[n1, n2], &sizes);
                let kl = KPoint::from_grid(&[n1 + 8, n2 - 16], &sizes);
                assert_eq!(m.bloch_hamiltonian(&k.reduced), m.bloch_hamiltonian(&kl.reduced));
            }
        }
    }

    #[test]
    fn builtin_audits() {
        let g2 = BrillouinGrid::new(&[12, 12]).unwrap();
        let km = build_builtin("kane_mele", &params(&[("lr", 0.0), ("lv", 0.0)])).unwrap();
        let a = verify_model_symmetries(&km, &g2);
        assert!(a.tr_residual() < 1e-10 && a.sr_residual() < 1e-10);
        assert!(a.spectrum_parity.unwrap() < 1e-10);
        assert_eq!(a.tau_residual, 0.0);

        let km = build_builtin("kane_mele", &params(&[("lr", 0.05)])).unwrap();
        let a = verify_model_symmetries(&km, &g2);
        assert!(a.tr_pass());
        assert!(!a.sr_pass());

        let h = build_builtin("haldane", &params(&[("phi", PI / 2.0)])).unwrap();
        let a = verify_model_symmetries(&h, &g2);
        assert!(!a.tr_pass());
        assert!(a.tr_residual() > 0.1);

        for phi in [0.0, PI] {
            let h = build_builtin("haldane", &params(&[("phi", phi), ("M", 0.0)])).unwrap();
            let a = verify_model_symmetries(&h, &g2);
            assert!(a.tr_residual() < 1e-10);
            assert!(a.sr_residual() < 1e-10);
        }

        let b = build_builtin("bhz", &Params::new()).unwrap();
        let a = verify_model_symmetries(&b, &g2);
        assert!(a.tr_residual() < 1e-10 && a.sr_residual() < 1e-10);
        assert!(b.time_reversal().unwrap().is_fermionic());

        let s = build_builtin("ssh", &params(&[("tp", 0.5)])).unwrap();
        let a = verify_model_symmetries(&s, &BrillouinGrid::new(&[8]).unwrap());
        assert!(a.tr_residual() < 1e-12 && a.sr_residual() < 1e-12);

        let w = build_builtin("wilson_dirac_3d", &Params::new()).unwrap();
        let a = verify_model_symmetries(&w, &BrillouinGrid::new(&[6, 6, 6]).unwrap());
        assert!(a.tr_residual() < 1e-10 && a.sr_residual() < 1e-10);
    }

    #[test]
    fn unknown_model_and_parameter() {
        assert!(matches!(
            build_builtin("graphene", &Params::new()),
            Err(TopoError::UnknownModel(_))
        ));
        assert!(matches!(
            build_builtin("ssh", &params(&[("mass", 1.0)])),
            Err(TopoError::InvalidParameter(_))
        ));
        assert!(build_builtin("ssh", &params(&[("t", f64::NAN)])).is_err());
    }

    #[test]
    fn file_round_trip_is_identical() {
        let m = build_builtin("kane_mele", &Params::new()).unwrap();
        let text = m.to_json().unwrap();
        let back = HoppingModel::from_json(&text).unwrap();
        assert_eq!(back.hoppings, m.hoppings);
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.time_reversal(), m.time_reversal());
    }

    #[test]
    fn minimal_file_loads_and_completes_partner() {
        let text = r#"{"dim":1,"basis":[[1.0]],"fiber_dim":2,"n_occ":1,
            "hoppings":[{"R":[1],"re":[[0,0],[1,0]],"im":[[0,0],[0,0]]}]}"#;
        let m = HoppingModel::from_json(text).unwrap();
        assert_eq!(m.hoppings().len(), 2);
        let again = HoppingModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(again.hoppings, m.hoppings);
    }

    #[test]
    fn hermiticity_violation_names_r() {
        let text = r#"{"dim":1,"basis":[[1.0]],"fiber_dim":2,"n_occ":1,"hoppings":[
            {"R":[1],"re":[[0,0],[1,0]],"im":[[0,0],[0,0]]},
            {"R":[-1],"re":[[0,2],[0,0]],"im":[[0,0],[0,0]]}]}"#;
        match HoppingModel::from_json(text) {
            Err(TopoError::Hermiticity { r, .. }) => assert_eq!(r, vec![-1]),
            other => panic!("expected hermiticity error, got {other:?}"),
        }
        let missing = r#"{"dim":1,"basis":[[1.0]],"fiber_dim":2,"hoppings":[]}"#;
        assert!(matches!(
            HoppingModel::from_json(missing),
            Err(TopoError::Parse(_))
        ));
    }

    #[test]
    fn random_chain_is_gapped() {
        let grid = make_grid(&Lattice::cubic(1).unwrap(), &[64]).unwrap();
        for seed in 0..5 {
            let m = random_gapped_chain(seed).unwrap();
            for k in grid.points() {
                let v = hermitian_eigenvalues(&m.bloch_hamiltonian(&k));
                assert!(v[1] - v[0] > 0.7);
            }
        }
    }

    #[test]
    fn parse_params_accepts_list() {
        let p = parse_params("t=1, lso=0.06,lv=-0.1").unwrap();
        assert_eq!(p["lv"], -0.1);
        assert!(parse_params("t").is_err());
        assert!(parse_params("t=x").is_err());
    }
}

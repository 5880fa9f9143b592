use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into usage errors (bad input, malformed files) and
/// physics errors (gap closings, topological obstructions, unresolved
/// grids); [`TopoError::is_physics`] tells them apart.
#[derive(Debug, Error)]
pub enum TopoError {
    #[error("degenerate lattice: |det(basis)| = {det:e}")]
    DegenerateLattice { det: f64 },

    #[error("grid size {size} on axis {axis} must be even and at least 4")]
    GridParity { axis: usize, size: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("hermiticity violated at R = {r:?}: defect {defect:e}")]
    Hermiticity { r: Vec<i64>, defect: f64 },

    #[error("ambiguous band selection: window edge falls inside a cluster (gap {gap:e})")]
    AmbiguousSelection { gap: f64 },

    #[error("contour passes within {distance:e} of eigenvalue {eigenvalue}")]
    ContourCollision { eigenvalue: f64, distance: f64 },

    #[error("gap condition violated: minimal gap {min_gap:e} at k = {k:?}")]
    Gapless { min_gap: f64, k: Vec<f64> },

    #[error("projectors too far apart for the Kato-Nagy intertwiner: |P1 - P2| = {0}")]
    TooFar(f64),

    #[error("refinement needed: {0}")]
    Refinement(String),

    #[error("rank {0} is odd but fermionic time reversal forces even rank")]
    OddRank(usize),

    #[error("symmetry violated: {0}")]
    Symmetry(String),

    #[error("topological obstruction: nonzero Chern numbers {0:?} (axis pair, value)")]
    Obstruction(Vec<((usize, usize), i64)>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TopoError {
    /// True for failures caused by the physics of the input (gap closing,
    /// obstruction, insufficient resolution, symmetry breaking) rather than
    /// by malformed input.
    pub fn is_physics(&self) -> bool {
        matches!(
            self,
            TopoError::Gapless { .. }
                | TopoError::Obstruction(_)
                | TopoError::Refinement(_)
                | TopoError::OddRank(_)
                | TopoError::Symmetry(_)
                | TopoError::AmbiguousSelection { .. }
                | TopoError::ContourCollision { .. }
                | TopoError::TooFar(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, TopoError>;

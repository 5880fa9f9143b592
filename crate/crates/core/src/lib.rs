//! Geometry and topology of gapped periodic quantum systems.
//!
//! The crate evaluates families of spectral projectors `k -> P(k)` built from
//! tight-binding or plane-wave Hamiltonians, and computes from them Berry
//! curvature, Chern numbers, Z2 invariants of time-reversal symmetric
//! families (in two and three dimensions), smooth Bloch frames and composite
//! Wannier functions with localization diagnostics.
//!
//! ```no_run
//! use topoband::prelude::*;
//!
//! let model = build_builtin("haldane", &params(&[("t2", 0.2), ("phi", 1.5708)])).unwrap();
//! let grid = make_grid(model.lattice(), &[24, 24]).unwrap();
//! let family = ProjectorFamily::occupied(&model);
//! let c = chern_number_plaquette(&family, &grid, (0, 1)).unwrap();
//! println!("C = {}", c.value);
//! ```

pub mod cli;
pub mod error;
pub mod floquet;
pub mod frames;
pub mod geometry;
pub mod lattice;
pub mod linalg;
pub mod models;
pub mod projectors;
pub mod wannier;

pub use error::{Result, TopoError};

pub mod prelude {
    pub use crate::error::{Result, TopoError};
    pub use crate::floquet::{
        bf_forward, bf_forward_at, bf_inverse, classical_intertwiner_check, fiber_symmetry_ops,
        fibered_hamiltonian, load_potential, FiberSamples, FourierPotential, PlaneWaveBasis,
        PlaneWaveHamiltonian, SupercellSamples,
    };
    pub use crate::frames::{
        kato_nagy, kramers_frame, parallel_transport, randomize_gauge, smooth_periodic_frame,
        transport_frame, wilson_flow, z2_3d, z2_boundary_winding, z2_wilson_flow, Frame, Z2Quadruple,
        Z2Result,
    };
    pub use crate::geometry::{
        berry_curvature, chern_number_curvature, chern_number_plaquette, curvature_parity, ChernResult,
        CurvatureField,
    };
    pub use crate::lattice::{
        dual_lattice, make_grid, trim_points, BrillouinGrid, KPoint, Lattice, ReshuffleMatrix,
        SpaceReflection, TauRep, TimeReversal,
    };
    pub use crate::linalg::{CMat, CVec};
    pub use crate::models::{
        build_builtin, load_model, params, save_model, verify_model_symmetries, HoppingModel, ModelAudit,
        Params,
    };
    pub use crate::projectors::{
        gap_check, riesz_projector, smoothness_probe, spectral_projector, verify_projector_symmetries,
        BandSelection, BlochHamiltonian, Contour, GapReport, ProjectorFamily,
    };
    pub use crate::wannier::{
        decay_fit, localization_moments, wannier_from_frame, wannier_report, WannierReport, WannierSet,
    };
}

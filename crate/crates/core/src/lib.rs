//! Geometric analysis of uniformly discrete metric spaces.
//!
//! The toolkit decides, for a family of point models (finite clouds, lattices,
//! lattices with defects, cluster sequences, wedges of rays), whether some
//! scale of the Rips graph has no finite connected components, and it produces
//! checkable witnesses either way:
//!
//! * ray decompositions of the model into uniformly Lipschitz images of the
//!   half line, with clone bookkeeping for finite hanging subtrees,
//! * per-scale Borel-Moore H0 reports for the all-ones locally finite chain,
//! * isolated finite sets with exact margins when the criterion fails,
//! * transfers of finite-component certificates across coarse equivalences,
//! * discrete nets for continuum domains,
//! * finite-dimensional operator certificates (Wannier-type isometries,
//!   frame polar corrections, and exact shift-style partial isometries).
//!
//! Distances in the structured models are exact: a length is stored as the
//! square root of a nonnegative rational, so threshold comparisons at critical
//! scales never depend on floating point rounding.

pub mod bm_homology;
pub mod coarse_transfer;
pub mod dist;
pub mod net_builder;
pub mod operator_witness;
pub mod oracles;
pub mod ray_synthesis;
pub mod rips;
pub mod space_models;
mod union_find;

pub use dist::{Dist, Extended};
pub use space_models::{PointModel, Region, Window};

/// Crate-wide error type. Variants mirror the refusal and rejection cases of
/// the individual operations; none of them are used to report mathematical
/// negatives (a failed criterion or a failed validation is report content,
/// not an error).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("window too large: {0} points exceeds the limit of {1}")]
    WindowTooLarge(usize, usize),
    #[error("empty window")]
    EmptyWindow,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("internal contract violation: {0}")]
    ContractViolation(String),
    #[error("ray synthesis refused: {0}")]
    SynthesisRefused(String),
    #[error("transfer refused: {0}")]
    TransferRefused(String),
    #[error("operator input rejected: {0}")]
    OperatorInput(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;

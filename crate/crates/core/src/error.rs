use thiserror::Error;

use crate::linear_fdm::NullSpaceReport;
use crate::model::{Entity, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("fully fixed model: no free coordinates to solve for")]
    FullyFixed,
    #[error("invalid model ({} problem(s)): {}", .0.len(), join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),

    /// A length or area fell below the degeneracy threshold where its gradient
    /// is undefined.
    #[error("degenerate geometry at {entity}: measure {measure:e} is below the threshold")]
    DegenerateGeometry { entity: Entity, measure: f64 },

    #[error("singular equilibrium matrix (rank {} of {}, nullity {})", .0.rank, .0.dimension, .0.nullity)]
    SingularSystem(Box<NullSpaceReport>),

    /// The linear method was asked to solve a model without fixed nodes,
    /// where `D·x = 0` only admits the kernel of `D`.
    #[error("no fixed nodes: D·x = 0 only admits the {}-dimensional kernel of D", .0.nullity)]
    NoFixedNodes(Box<NullSpaceReport>),

    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

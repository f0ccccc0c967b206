//! Form-finding of cable nets, tensegrities and membranes.
//!
//! The linear force density method ([`linear_fdm`]) solves `D·x = −D_f·x_f`
//! for prescribed force densities. The extended method ([`optimizer`])
//! minimizes a sum of element functionals `Σπ(L) + Σπ(S)` subject to fixed
//! strut lengths; its stationarity conditions are the equilibrium equations
//! with generalized member forces `n = dπ/dL`, membrane stresses `σ = dπ/dS`
//! and strut forces `λ`.

pub mod analysis;
pub mod error;
pub mod fixtures;
pub mod functionals;
pub mod geometry;
pub mod io;
pub mod linear_fdm;
pub mod model;
pub mod optimizer;

pub use error::{Error, ModelError, Result};
pub use functionals::{Assembly, GeneralizedForces};
pub use model::{ElementFunctional, Entity, LinearMember, MemberRole, Model, Node, Point3, TriElement};
pub use optimizer::{minimize_constrained, ConvergedState, Init, Method, SolveOptions};

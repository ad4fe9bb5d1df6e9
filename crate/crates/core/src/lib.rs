//! Magnetic geodesics on parametrized surfaces in Euclidean and Minkowski 3-space.
//!
//! A magnetic geodesic on a surface is a curve whose geodesic curvature is
//! prescribed by a function `κ(u, v)`. This crate integrates such curves on a
//! catalog of analytically parametrized surfaces, finds closed ones by a
//! shooting method on the orientation of self-intersections, and computes the
//! directions from which a curve can reach a lightlike point of a spacelike
//! graph in Minkowski space.

pub mod ambient;
pub mod cli;
pub mod closure;
pub mod dynamics;
pub mod integrate;
pub mod oracles;
pub mod par;
pub mod singular;
pub mod surfaces;

pub use ambient::{AmbientVector, Signature};
pub use dynamics::{DynamicsError, ParamState};
pub use integrate::{Assembly, IntegratorConfig, Method, StopReason, Trajectory};
pub use surfaces::{KappaField, SurfaceSpec};

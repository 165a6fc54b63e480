//! Divergence-free virtual element discretization (order 2) of the
//! temperature-coupled convective Brinkman-Forchheimer system on polygonal
//! meshes of the unit square, with the manufactured-solution machinery used
//! to measure its convergence.

#![allow(clippy::needless_range_loop)]

pub mod forms;
pub mod mesh;
pub mod polybasis;
pub mod projection;
pub mod solver;
pub mod space;
pub mod verify;

//! Independent reference solvers used to validate the simulators.

pub mod bd;
pub mod pde;

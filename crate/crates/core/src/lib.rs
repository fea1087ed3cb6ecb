//! Finite element solver for the coupled flow of a non-Newtonian fluid and
//! a poroelastic medium (Stokes-Biot), with a Lagrange multiplier enforcing
//! mass conservation across the interface.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod elements;
pub mod forms;
pub mod mesh;
pub mod problem;
pub mod solver;
pub mod sparse;
pub mod viscosity;
pub mod vtk;

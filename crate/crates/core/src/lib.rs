//! Self-expanding mean curvature flow solitons asymptotic to double cones,
//! the critical cone angle for one-sheeted expanders, and axisymmetric mean
//! curvature flow of smoothed double cones.
//!
//! * [`profile`] shoots the rotationally symmetric expander ODEs.
//! * [`critical`] maps `C ↦ α(C)` and locates its minimum.
//! * [`evolve`] evolves cone smoothings and classifies pinching versus
//!   long-time existence.
//! * [`geometry`] holds surface-of-revolution utilities.
//! * [`cli`] is the command-line front end.

pub mod cli;
pub mod critical;
pub mod evolve;
pub mod geometry;
pub mod numerics;
pub mod ode;
pub mod profile;
pub mod quadrature;
pub mod search;

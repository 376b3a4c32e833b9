//! Axisymmetric mean curvature flow of smoothed double cones.
//!
//! [`smoothing`] builds the initial profiles, [`scheme`] advances them, and
//! [`classify`] decides between pinching and long-time existence.

pub mod classify;
pub mod scheme;
pub mod smoothing;

pub use classify::{
    estimate_critical_angle_pde, evolve_and_classify, sweep, BisectionOptions, Classifier,
    ClassifyError, Decision, Evidence, FrameChoice, PdeCriticalEstimate, SolverParams, Verdict,
};
pub use scheme::{step, EvolutionState, EvolveError, Frame, Status, StepControl, Stepper};
pub use smoothing::{make_smoothing, ConeSmoothing, SmoothingFamily, SmoothingKind};

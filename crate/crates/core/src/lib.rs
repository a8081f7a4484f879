//! Formation control for networked underactuated surface vessels in which
//! agents exchange only an estimate of the fleet centroid.
//!
//! The stack has three layers:
//!
//! * [`planner`]: a distributed reference-trajectory generator written as a
//!   port-Hamiltonian system;
//! * [`vessel`] and [`tracking`]: three-degree-of-freedom hull dynamics and a
//!   passivity-based tracking law with a disturbance estimator;
//! * [`privacy`]: adversary models and an indistinguishability audit built
//!   on paired simulations.
//!
//! [`scenario`], [`sim`] and [`trace`] tie them together into reproducible
//! runs with CSV export.

// positivity checks are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod linalg;
pub mod ode;
pub mod planner;
pub mod privacy;
pub mod scenario;
pub mod sim;
pub mod topology;
pub mod trace;
pub mod tracking;
pub mod vessel;

pub use error::{Error, Result};
pub use exec::Exec;
pub use planner::{FleetPlannerState, FormationSpec, PlannerAgentState, PlannerModel, PlannerParams, Vec2};
pub use privacy::{audit_batch, AdversarySpec, AuditCase, AuditReport, ShadowMode};
pub use scenario::Scenario;
pub use sim::{integrate_closed_loop, integrate_planner, ClosedLoopRun, PlannerRun};
pub use topology::GraphTopology;
pub use trace::SimTrace;
pub use tracking::{TrackingController, TrackingGains, UubCertificate};
pub use vessel::{DisturbanceModel, Vec3, VesselParams, VesselState, Wrench};

//! Output-feedback stabilization of state-affine systems through
//! sampled control templates and a Kalman-like observer.
//!
//! The crate covers the symbolic observability test, general-position point
//! sets, template families with a numeric Gramian certificate, the observer
//! with its gain equation, and a simulator for the resulting hybrid loop.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod genpos;
pub mod hybrid;
pub mod linalg;
pub mod observer;
pub mod ode;
pub mod poly;
pub mod signal;
pub mod system;
pub mod templates;

pub use config::{parse_config, Scenario, ScenarioConfig};
pub use error::{Error, Result};
pub use genpos::{build_general_position, GeneralPositionSet};
pub use hybrid::{jump, rotation_to, saturate, simulate, FeedbackLaw, HybridTrajectory, LoopState};
pub use observer::{observer_rhs, smin_lower_bound, steady_state_gain, variation_of_constants_gain, ObserverState};
pub use poly::{MultiPoly, PolyMatrix};
pub use signal::InputSignal;
pub use system::{gramian, observable_at, transition_matrix, StateAffineSystem};
pub use templates::{certify_template, CertifyOptions, TemplateCertificate, TemplateFamily};

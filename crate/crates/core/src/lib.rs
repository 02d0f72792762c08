//! Resequencing engine for a parallel-FIFO body buffer in a mixed-model
//! assembly line, with a paint shop stand-in and the KPI pipeline used to
//! assess output sequences.

pub mod buffer;
pub mod constraints;
pub mod controller;
pub mod domain;
pub mod exec;
pub mod harness;
pub mod metrics;
pub mod paintshop;

pub use buffer::{BufferError, BufferGeometry, LaneBuffer};
pub use constraints::{Constraint, ConstraintKind, EmissionHistory, Literal, Weight};
pub use controller::{ControllerConfig, ControllerError, ControllerState, SubstitutionStrategy};
pub use domain::{BodyType, CarBody, ColorId, Day, Order, ScenarioCatalog, Timestamp};
pub use exec::Exec;

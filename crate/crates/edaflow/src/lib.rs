//! Deterministic automation engine for IC backend design flows.
//!
//! The crate automates the physical-design portion of an IC flow
//! (floorplan through signoff timing) over interchangeable EDA backends,
//! with an emphasis on reproducibility: every stochastic component is
//! seeded, and every run can be replayed bit-for-bit.
//!
//! Module map:
//!
//! - [`flow`] — shared vocabulary: designs, stages, technology nodes,
//!   job specifications and their validation, PPA metrics.
//! - [`adapter`] — script templating and tool backends, including a
//!   closed-form mock backend used for tests and desk experiments.
//! - [`predictor`] — per-stage runtime prediction with a natively
//!   implemented regression-tree ensemble.
//! - [`allocator`] — cost-optimal machine allocation under a deadline
//!   (multiple-choice knapsack over per-stage machine configurations).
//! - [`dse`] — design-space exploration of flow parameters with
//!   fault-list-driven self-correction.
//! - [`cluster`] — discrete-event simulation of a multi-node container
//!   cluster with first-fit-decreasing placement.
//! - [`orchestrator`] — planning and execution of complete runs, event
//!   streaming, and the persistent, queryable run history.

pub mod adapter;
pub mod allocator;
pub mod cluster;
pub mod dse;
pub mod flow;
pub mod orchestrator;
pub mod predictor;

pub use adapter::{MockBackend, StageResult, StageScript, ToolBackend, ToolKind};
pub use allocator::{AllocationPlan, ConfigOption, PriceList, StageOptions};
pub use cluster::{ContainerRequest, Node, ScheduleEvent, SimulationResult};
pub use dse::{DseReport, FaultRule, ParamSpace, Strategy};
pub use flow::{JobSpec, PpaMetrics, StageKind, ValidationOutcome};
pub use orchestrator::{ExecutionContext, PlanMode, RunReport, RunStore, Task, TaskStatus};
pub use predictor::{RuntimeSample, TrainedModel};

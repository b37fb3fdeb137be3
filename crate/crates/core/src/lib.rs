//! Scheduling message flushes in write-optimized dictionaries.

pub mod baseline;
pub mod batch;
pub mod conversion;
pub mod error;
pub mod fixtures;
pub mod gen;
pub mod instance;
pub mod oracle;
pub mod outtree;
pub mod packing;
pub mod pipeline;
pub mod reduction;
pub mod schedule;

pub use error::{Result, WormsError};
pub use instance::{DamParams, InstanceDoc, Message, TreeTopology, WormsInstance, MIN_CAPACITY};
pub use schedule::{
    schedule_cost, validate_schedule, Flush, Schedule, ValidationReport, Violation, ViolationKind,
};
pub use conversion::{convert, PackingMode};
pub use outtree::{OuttreeInstance, TaskSchedule};
pub use pipeline::{run_algorithm, run_pipeline, Algorithm, PipelineOptions};

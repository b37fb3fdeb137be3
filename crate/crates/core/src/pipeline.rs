//! End-to-end solvers and metrics rows.
//!
//! `pipeline` reduces to out-forest scheduling, runs MPHTF, lifts the task
//! schedule back to flushes and converts the result into a valid schedule.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{lazy_greedy, serial_per_message};
use crate::conversion::{convert_traced, Conversion, PackingMode};
use crate::error::{Result, WormsError};
use crate::instance::WormsInstance;
use crate::oracle::{brute_force_worms, SearchBudget};
use crate::outtree::{mphtf_schedule, OuttreeInstance, TaskSchedule};
use crate::reduction::{lift_task_schedule, reduce_with, ReductionMapping, ReductionOptions};
use crate::schedule::{validate_schedule, Schedule, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pipeline,
    Serial,
    Lazy,
    Brute,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Pipeline, Algorithm::Serial, Algorithm::Lazy, Algorithm::Brute];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pipeline => "pipeline",
            Algorithm::Serial => "serial",
            Algorithm::Lazy => "lazy",
            Algorithm::Brute => "brute",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PipelineOptions {
    pub packing_mode: PackingMode,
    pub prune: bool,
    pub budget: SearchBudget,
}

/// Intermediate products of the reduction pipeline.
#[derive(Debug, Clone)]
pub struct PipelineTrace {
    pub outtree: OuttreeInstance,
    pub mapping: ReductionMapping,
    pub sigma: TaskSchedule,
    pub lifted: Schedule,
    pub conversion: Conversion,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub algorithm: Algorithm,
    pub schedule: Schedule,
    pub report: ValidationReport,
    pub wall_ms: f64,
    pub trace: Option<PipelineTrace>,
}

impl RunOutput {
    pub fn cost(&self) -> u64 {
        self.report.total_cost
    }
}

/// Runs the reduction pipeline and keeps every intermediate product.
pub fn run_pipeline_traced(instance: &WormsInstance, options: &PipelineOptions) -> Result<PipelineTrace> {
    let (outtree, mapping) = reduce_with(instance, ReductionOptions { prune: options.prune });
    let sigma = mphtf_schedule(&outtree);
    let lifted = lift_task_schedule(instance, &outtree, &mapping, &sigma)?;
    let conversion = convert_traced(instance, &lifted, options.packing_mode)?;
    Ok(PipelineTrace { outtree, mapping, sigma, lifted, conversion })
}

pub fn run_pipeline(instance: &WormsInstance, options: &PipelineOptions) -> Result<Schedule> {
    Ok(run_pipeline_traced(instance, options)?.conversion.schedule)
}

/// Runs one algorithm and validates its output. An invalid output is an
/// internal error carrying the first violation.
pub fn run_algorithm(instance: &WormsInstance, algorithm: Algorithm, options: &PipelineOptions) -> Result<RunOutput> {
    let start = Instant::now();
    let mut trace = None;
    let schedule = match algorithm {
        Algorithm::Pipeline => {
            let t = run_pipeline_traced(instance, options)?;
            let s = t.conversion.schedule.clone();
            trace = Some(t);
            s
        }
        Algorithm::Serial => serial_per_message(instance),
        Algorithm::Lazy => lazy_greedy(instance),
        Algorithm::Brute => brute_force_worms(instance, &options.budget)?.0,
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1000.0;
    let report = validate_schedule(instance, &schedule);
    if !report.is_valid {
        let why = report.violations.first().map(|v| format!("step {}: {}", v.step, v.reason));
        return Err(WormsError::Internal(format!("{algorithm} produced an invalid schedule: {}", why.unwrap_or_default())));
    }
    Ok(RunOutput { algorithm, schedule, report, wall_ms, trace })
}

pub const METRICS_HEADER: &str = "instance_hash,algorithm,cost,max_completion,steps,flushes,wall_ms,opt_cost,ratio";

/// One metrics CSV row (no trailing newline). `opt` fills the last two
/// columns when an optimum is known.
pub fn metrics_row(instance_hash: &str, run: &RunOutput, opt: Option<u64>, deterministic: bool) -> String {
    let wall = if deterministic { 0.0 } else { run.wall_ms };
    let (opt_s, ratio_s) = match opt {
        Some(o) if o > 0 => (o.to_string(), format!("{:.6}", run.cost() as f64 / o as f64)),
        Some(o) => (o.to_string(), String::new()),
        None => (String::new(), String::new()),
    };
    format!(
        "{},{},{},{},{},{},{:.3},{},{}",
        instance_hash,
        run.algorithm,
        run.cost(),
        run.report.max_completion(),
        run.schedule.len(),
        run.schedule.num_flushes(),
        wall,
        opt_s,
        ratio_s
    )
}

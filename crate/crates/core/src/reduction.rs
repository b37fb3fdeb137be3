//! Reduction from flush scheduling to out-forest task scheduling, and the
//! lift of task schedules back to overfilling flush schedules.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::WormsInstance;
use crate::outtree::{check_task_schedule, OuttreeInstance, Task, TaskSchedule};
use crate::packing::{compute_oblivious_packed_sets, PackingResult};
use crate::schedule::{Flush, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskRole {
    /// `k`-th edge (0-based) of the root path of the set's packed parent.
    Chain { k: usize },
    /// Edge of the copied subtree below the packed parent.
    Subtree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOrigin {
    pub set: usize,
    pub from: usize,
    pub to: usize,
    pub role: TaskRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionMapping {
    pub packing: PackingResult,
    /// Chain task ids per packed set, root-down.
    pub chain_tasks: Vec<Vec<usize>>,
    /// Subtree edge task ids per packed set, in preorder.
    pub edge_tasks: Vec<Vec<usize>>,
    /// Origin of every task, indexed by task id.
    pub reverse: Vec<TaskOrigin>,
}

impl ReductionMapping {
    pub fn num_tasks(&self) -> usize {
        self.reverse.len()
    }

    /// One line per task: `task set role from->to`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (j, o) in self.reverse.iter().enumerate() {
            let role = match o.role {
                TaskRole::Chain { k } => format!("chain{k}"),
                TaskRole::Subtree => "edge".to_string(),
            };
            writeln!(out, "{j} set={} {role} {}->{}", o.set, o.from, o.to).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReductionOptions {
    /// Skip subtree edges that carry none of the set's messages.
    pub prune: bool,
}

pub fn reduce_worms_to_outtree(instance: &WormsInstance) -> (OuttreeInstance, ReductionMapping) {
    reduce_with(instance, ReductionOptions::default())
}

pub fn reduce_with(
    instance: &WormsInstance,
    options: ReductionOptions,
) -> (OuttreeInstance, ReductionMapping) {
    let packing = compute_oblivious_packed_sets(instance);
    let tree = instance.tree();
    let mut tasks: Vec<Task> = Vec::new();
    let mut reverse: Vec<TaskOrigin> = Vec::new();
    let mut chain_tasks = Vec::with_capacity(packing.sets.len());
    let mut edge_tasks = Vec::with_capacity(packing.sets.len());
    let mut load = vec![0u64; tree.len()];
    let mut below = vec![0u64; tree.len()];

    for set in &packing.sets {
        let v = set.parent;
        let path = tree.path_from_root(v);
        let mut chain = Vec::with_capacity(path.len().saturating_sub(1));
        let mut prev: Option<usize> = None;
        for k in 0..path.len() - 1 {
            let id = tasks.len();
            tasks.push(Task { id, weight: 0, parent: prev });
            reverse.push(TaskOrigin { set: set.id, from: path[k], to: path[k + 1], role: TaskRole::Chain { k } });
            chain.push(id);
            prev = Some(id);
        }
        let mut edges = Vec::new();
        if tree.is_leaf(v) {
            tasks[*chain.last().expect("leaf parent lies below the root")].weight = set.len() as u64;
        } else {
            let d = tree.depth(v);
            let mut firsts: Vec<usize> = set.members.iter().map(|&m| instance.path_node(m, d + 1)).collect();
            firsts.sort_unstable();
            firsts.dedup();
            for &m in &set.members {
                load[instance.target(m)] += 1;
            }
            // subtree sums of this set's messages, needed only for pruning
            if options.prune {
                for &m in &set.members {
                    for dd in d + 1..=instance.height() {
                        below[instance.path_node(m, dd)] += 1;
                    }
                }
            }
            // preorder copy; stack holds (node, parent task)
            let mut stack: Vec<(usize, Option<usize>)> = firsts.iter().rev().map(|&c| (c, prev)).collect();
            while let Some((u, parent_task)) = stack.pop() {
                if options.prune && below[u] == 0 {
                    continue;
                }
                let id = tasks.len();
                let weight = if tree.is_leaf(u) { load[u] } else { 0 };
                tasks.push(Task { id, weight, parent: parent_task });
                reverse.push(TaskOrigin {
                    set: set.id,
                    from: tree.parent(u).unwrap(),
                    to: u,
                    role: TaskRole::Subtree,
                });
                edges.push(id);
                for &c in tree.children(u).iter().rev() {
                    stack.push((c, Some(id)));
                }
            }
            for &m in &set.members {
                load[instance.target(m)] = 0;
                if options.prune {
                    for dd in d + 1..=instance.height() {
                        below[instance.path_node(m, dd)] = 0;
                    }
                }
            }
        }
        chain_tasks.push(chain);
        edge_tasks.push(edges);
    }

    let outtree = OuttreeInstance::new(tasks, instance.p()).expect("reduction builds an out-forest");
    let mapping = ReductionMapping { packing, chain_tasks, edge_tasks, reverse };
    (outtree, mapping)
}

/// Turns each processed task into a flush of its set's messages routed
/// through the task's edge. Flushes that would be empty are left out, so
/// every completion of positive weight maps to arrivals at target leaves.
pub fn lift_task_schedule(
    instance: &WormsInstance,
    outtree: &OuttreeInstance,
    mapping: &ReductionMapping,
    sigma: &TaskSchedule,
) -> Result<Schedule> {
    check_task_schedule(outtree, sigma)?;
    let tree = instance.tree();
    let mut steps = Vec::with_capacity(sigma.steps.len());
    for step in &sigma.steps {
        let mut flushes = Vec::with_capacity(step.len());
        for &j in step {
            let o = mapping.reverse[j];
            let set = mapping.packing.set(o.set);
            let messages: Vec<usize> = match o.role {
                TaskRole::Chain { .. } => set.members.clone(),
                TaskRole::Subtree => {
                    let d = tree.depth(o.to);
                    set.members.iter().copied().filter(|&m| instance.path_node(m, d) == o.to).collect()
                }
            };
            if !messages.is_empty() {
                flushes.push(Flush::new(o.from, o.to, messages));
            }
        }
        steps.push(flushes);
    }
    Ok(Schedule::new(steps))
}

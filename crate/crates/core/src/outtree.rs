//! Unit-time scheduling of out-forests on P machines to minimize weighted
//! completion time: densities, Horn's trees, Horn, PHTF and MPHTF.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WormsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: usize,
    pub weight: u64,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuttreeDoc {
    #[serde(rename = "P")]
    pub p: usize,
    pub tasks: Vec<Task>,
}

/// Out-forest of unit tasks. Task `j` sits at index `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuttreeInstance {
    tasks: Vec<Task>,
    children: Vec<Vec<usize>>,
    p: usize,
}

impl OuttreeInstance {
    /// Tasks may be listed in any order but ids must be exactly `0..n`.
    pub fn new(mut tasks: Vec<Task>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(WormsError::NoParallelism(p));
        }
        let n = tasks.len();
        tasks.sort_by_key(|t| t.id);
        for (i, t) in tasks.iter().enumerate() {
            if t.id != i {
                return Err(WormsError::InvalidOuttree(format!(
                    "task ids must be 0..{n} without gaps or repeats"
                )));
            }
            if let Some(q) = t.parent {
                if q >= n || q == i {
                    return Err(WormsError::InvalidOuttree(format!("task {i} has bad parent {q}")));
                }
            }
        }
        let mut children = vec![Vec::new(); n];
        for t in &tasks {
            if let Some(q) = t.parent {
                children[q].push(t.id);
            }
        }
        let inst = OuttreeInstance { tasks, children, p };
        if inst.topological_order().len() != n {
            return Err(WormsError::InvalidOuttree("precedence graph has a cycle".into()));
        }
        Ok(inst)
    }

    /// Convenience constructor from `(weight, parent)` pairs.
    pub fn from_pairs(pairs: &[(u64, Option<usize>)], p: usize) -> Result<Self> {
        let tasks = pairs
            .iter()
            .enumerate()
            .map(|(id, &(weight, parent))| Task { id, weight, parent })
            .collect();
        Self::new(tasks, p)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn weight(&self, j: usize) -> u64 {
        self.tasks[j].weight
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.tasks[j].parent
    }

    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    pub fn total_weight(&self) -> u64 {
        self.tasks.iter().map(|t| t.weight).sum()
    }

    /// Parents before children; roots in ascending id.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> =
            self.tasks.iter().filter(|t| t.parent.is_none()).map(|t| t.id).collect();
        let mut i = 0;
        while i < order.len() {
            let j = order[i];
            order.extend_from_slice(&self.children[j]);
            i += 1;
        }
        order
    }

    pub fn to_doc(&self) -> OuttreeDoc {
        OuttreeDoc { p: self.p, tasks: self.tasks.clone() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: OuttreeDoc = serde_json::from_str(text).map_err(|e| {
            WormsError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        Self::new(doc.tasks, doc.p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("outtree serializes")
    }
}

/// Weight over size of a task set, compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Density {
    pub weight: u64,
    pub size: u64,
}

impl Density {
    pub fn new(weight: u64, size: u64) -> Self {
        assert!(size > 0, "density of an empty set");
        Density { weight, size }
    }

    pub fn to_f64(self) -> f64 {
        self.weight as f64 / self.size as f64
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.weight), BigInt::from(self.size))
    }
}

impl Ord for Density {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.weight as u128 * other.size as u128).cmp(&(other.weight as u128 * self.size as u128))
    }
}

impl PartialOrd for Density {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Heap key: higher density first, then lower id.
type Priority = (Density, Reverse<usize>);

/// Maximum-density subtree `F_j` rooted at every task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDensities {
    density: Vec<Density>,
    absorbed: Vec<Vec<usize>>,
}

impl TaskDensities {
    pub fn density(&self, j: usize) -> Density {
        self.density[j]
    }

    /// Members of `F_j`, ascending.
    pub fn members(&self, j: usize) -> Vec<usize> {
        let mut out = vec![j];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.absorbed[out[i]]);
            i += 1;
        }
        out.sort_unstable();
        out
    }
}

/// Bottom-up absorption: `F_j` grows by the densest frontier subtree while
/// that subtree is strictly denser than `F_j` itself.
pub fn task_densities(instance: &OuttreeInstance) -> TaskDensities {
    let n = instance.len();
    let mut density: Vec<Density> = (0..n).map(|j| Density::new(instance.weight(j), 1)).collect();
    let mut absorbed = vec![Vec::new(); n];
    let mut frontier: Vec<BinaryHeap<Priority>> = vec![BinaryHeap::new(); n];
    for &j in instance.topological_order().iter().rev() {
        let mut heap = BinaryHeap::new();
        for &c in instance.children(j) {
            heap.push((density[c], Reverse(c)));
        }
        let (mut w, mut s) = (instance.weight(j), 1u64);
        while let Some(&(d, Reverse(c))) = heap.peek() {
            if d <= Density::new(w, s) {
                break;
            }
            heap.pop();
            w += d.weight;
            s += d.size;
            absorbed[j].push(c);
            let mut other = std::mem::take(&mut frontier[c]);
            if other.len() > heap.len() {
                std::mem::swap(&mut other, &mut heap);
            }
            heap.extend(other);
        }
        density[j] = Density::new(w, s);
        frontier[j] = heap;
    }
    TaskDensities { density, absorbed }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HornTree {
    pub root: usize,
    /// Ascending task ids.
    pub members: Vec<usize>,
    pub weight: u64,
    pub size: u64,
}

impl HornTree {
    pub fn density(&self) -> Density {
        Density::new(self.weight, self.size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HornForest {
    pub trees: Vec<HornTree>,
    pub tree_of: Vec<usize>,
}

/// Repeatedly peels `F_j` for the smallest-id parentless remaining task.
pub fn horns_trees(instance: &OuttreeInstance) -> HornForest {
    let dens = task_densities(instance);
    horns_trees_with(instance, &dens)
}

fn horns_trees_with(instance: &OuttreeInstance, dens: &TaskDensities) -> HornForest {
    let n = instance.len();
    let mut tree_of = vec![usize::MAX; n];
    let mut trees = Vec::new();
    let mut ready: BTreeSet<usize> =
        instance.tasks().iter().filter(|t| t.parent.is_none()).map(|t| t.id).collect();
    while let Some(j) = ready.pop_first() {
        let members = dens.members(j);
        let idx = trees.len();
        for &m in &members {
            tree_of[m] = idx;
        }
        for &m in &members {
            for &c in instance.children(m) {
                if tree_of[c] == usize::MAX {
                    ready.insert(c);
                }
            }
        }
        let d = dens.density(j);
        trees.push(HornTree { root: j, members, weight: d.weight, size: d.size });
    }
    HornForest { trees, tree_of }
}

/// Steps of task ids; `steps[0]` is time step 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSchedule {
    pub steps: Vec<Vec<usize>>,
}

impl TaskSchedule {
    pub fn new(steps: Vec<Vec<usize>>) -> Self {
        TaskSchedule { steps }
    }

    pub fn makespan(&self) -> usize {
        self.steps.len()
    }

    /// Completion step per task, `None` if never scheduled.
    pub fn completion(&self, n: usize) -> Vec<Option<usize>> {
        let mut c = vec![None; n];
        for (i, step) in self.steps.iter().enumerate() {
            for &j in step {
                if j < n {
                    c[j] = Some(i + 1);
                }
            }
        }
        c
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            WormsError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("task schedule serializes")
    }
}

/// Checks multiplicity, machine count and precedence; returns completions.
pub fn check_task_schedule(instance: &OuttreeInstance, schedule: &TaskSchedule) -> Result<Vec<usize>> {
    let n = instance.len();
    let mut c = vec![0usize; n];
    for (i, step) in schedule.steps.iter().enumerate() {
        if step.len() > instance.p() {
            return Err(WormsError::InfeasibleTaskSchedule(format!(
                "step {} runs {} tasks on {} machines",
                i + 1,
                step.len(),
                instance.p()
            )));
        }
        for &j in step {
            if j >= n {
                return Err(WormsError::InfeasibleTaskSchedule(format!("unknown task {j}")));
            }
            if c[j] != 0 {
                return Err(WormsError::InfeasibleTaskSchedule(format!("task {j} scheduled twice")));
            }
            c[j] = i + 1;
        }
    }
    for j in 0..n {
        if c[j] == 0 {
            return Err(WormsError::InfeasibleTaskSchedule(format!("task {j} never scheduled")));
        }
        if let Some(q) = instance.parent(j) {
            if c[q] >= c[j] {
                return Err(WormsError::InfeasibleTaskSchedule(format!(
                    "task {j} at step {} does not follow its parent {q} at step {}",
                    c[j], c[q]
                )));
            }
        }
    }
    Ok(c)
}

/// `sum_j c(j) * w(j)` for a feasible schedule.
pub fn weighted_completion_cost(instance: &OuttreeInstance, schedule: &TaskSchedule) -> Result<u64> {
    let c = check_task_schedule(instance, schedule)?;
    Ok(c.iter().enumerate().map(|(j, &t)| t as u64 * instance.weight(j)).sum())
}

/// `sum_t sum_i |U_i^t| / s(T_i) * w(T_i)`, which for each tree equals its
/// density times the sum of its members' completion steps.
pub fn fractional_cost(
    instance: &OuttreeInstance,
    schedule: &TaskSchedule,
    forest: &HornForest,
) -> Result<BigRational> {
    let c = check_task_schedule(instance, schedule)?;
    let mut total = BigRational::zero();
    for tree in &forest.trees {
        let done: u64 = tree.members.iter().map(|&j| c[j] as u64).sum();
        total += tree.density().to_rational() * BigInt::from(done);
    }
    Ok(total)
}

/// Highest-density-first list scheduling with P slots per step.
pub fn phtf_schedule(instance: &OuttreeInstance) -> TaskSchedule {
    let dens = task_densities(instance);
    phtf_with(instance, &dens)
}

fn phtf_with(instance: &OuttreeInstance, dens: &TaskDensities) -> TaskSchedule {
    let mut heap: BinaryHeap<Priority> = instance
        .tasks()
        .iter()
        .filter(|t| t.parent.is_none())
        .map(|t| (dens.density(t.id), Reverse(t.id)))
        .collect();
    let mut steps = Vec::new();
    while !heap.is_empty() {
        let mut step = Vec::with_capacity(instance.p());
        while step.len() < instance.p() {
            match heap.pop() {
                Some((_, Reverse(j))) => step.push(j),
                None => break,
            }
        }
        for &j in &step {
            for &c in instance.children(j) {
                heap.push((dens.density(c), Reverse(c)));
            }
        }
        steps.push(step);
    }
    TaskSchedule { steps }
}

/// Horn's single-machine algorithm.
pub fn horn_schedule(instance: &OuttreeInstance) -> Result<TaskSchedule> {
    if instance.p() != 1 {
        return Err(WormsError::RequiresSingleMachine(instance.p()));
    }
    Ok(phtf_schedule(instance))
}

/// Two MPHTF steps per PHTF step; each step a Horn's tree gets as many
/// slots as it had tasks in the matching PHTF step.
///
/// Tasks of a tree are taken in the order PHTF ran them, stopping at the
/// first one whose parent is not done yet. By induction everything PHTF has
/// finished after step t is finished here after step 2t. Empty steps are
/// dropped.
pub fn mphtf_schedule(instance: &OuttreeInstance) -> TaskSchedule {
    let dens = task_densities(instance);
    let forest = horns_trees_with(instance, &dens);
    let phtf = phtf_with(instance, &dens);
    let n = instance.len();

    let mut queue: Vec<Vec<usize>> = vec![Vec::new(); forest.trees.len()];
    for step in &phtf.steps {
        for &j in step {
            queue[forest.tree_of[j]].push(j);
        }
    }
    let mut next = vec![0usize; forest.trees.len()];
    let mut done_at = vec![0usize; n];
    let mut steps: Vec<Vec<usize>> = Vec::new();
    for hstep in &phtf.steps {
        let mut slots: Vec<(usize, usize)> = Vec::new();
        for &j in hstep {
            let t = forest.tree_of[j];
            match slots.iter_mut().find(|(tt, _)| *tt == t) {
                Some(e) => e.1 += 1,
                None => slots.push((t, 1)),
            }
        }
        for _ in 0..2 {
            let now = steps.len() + 1;
            let mut step = Vec::new();
            for &(t, k) in &slots {
                for _ in 0..k {
                    let Some(&j) = queue[t].get(next[t]) else { break };
                    let ready = instance.parent(j).is_none_or(|q| done_at[q] != 0 && done_at[q] < now);
                    if !ready {
                        break;
                    }
                    step.push(j);
                    next[t] += 1;
                }
            }
            for &j in &step {
                done_at[j] = now;
            }
            steps.push(step);
        }
    }
    steps.retain(|s| !s.is_empty());
    TaskSchedule { steps }
}

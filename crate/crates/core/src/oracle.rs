//! Exact solvers for toy instances, used as test oracles.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WormsError};
use crate::instance::WormsInstance;
use crate::outtree::{OuttreeInstance, TaskSchedule};
use crate::schedule::{Flush, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_messages: usize,
    pub max_tasks: usize,
    /// Longest schedule the WORMS search will explore.
    pub max_steps: usize,
    /// Memoized states (or enumerated schedules) before giving up.
    pub max_states: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_messages: 8, max_tasks: 16, max_steps: 64, max_states: 2_000_000 }
    }
}

/// All `k`-subsets of `items`, each in ascending order.
fn combinations(items: &[usize], k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::new(), out);
}

fn available(instance: &OuttreeInstance, done: u64) -> Vec<usize> {
    (0..instance.len())
        .filter(|&j| done & (1 << j) == 0)
        .filter(|&j| instance.parent(j).is_none_or(|q| done & (1 << q) != 0))
        .collect()
}

/// Minimum weighted completion time by DP over completed-task sets.
///
/// Each step runs exactly `min(P, available)` tasks; leaving a machine idle
/// while a task is available never helps with unit tasks.
pub fn brute_force_outtree(instance: &OuttreeInstance, budget: &SearchBudget) -> Result<(TaskSchedule, u64)> {
    let n = instance.len();
    if n > budget.max_tasks.min(63) {
        return Err(WormsError::BudgetExceeded(format!("{n} tasks exceed the limit of {}", budget.max_tasks)));
    }
    let full: u64 = if n == 0 { 0 } else { (1u64 << n) - 1 };
    let mut memo: HashMap<u64, (u64, u64)> = HashMap::new();

    fn solve(
        inst: &OuttreeInstance,
        done: u64,
        full: u64,
        memo: &mut HashMap<u64, (u64, u64)>,
        budget: &SearchBudget,
    ) -> Result<u64> {
        if done == full {
            return Ok(0);
        }
        if let Some(&(c, _)) = memo.get(&done) {
            return Ok(c);
        }
        if memo.len() >= budget.max_states {
            return Err(WormsError::BudgetExceeded(format!("more than {} states", budget.max_states)));
        }
        let undone: u64 = (0..inst.len()).filter(|&j| done & (1 << j) == 0).map(|j| inst.weight(j)).sum();
        let avail = available(inst, done);
        let mut subsets = Vec::new();
        combinations(&avail, inst.p().min(avail.len()), &mut subsets);
        let mut best = (u64::MAX, 0u64);
        for x in subsets {
            let mask = x.iter().fold(0u64, |m, &j| m | (1 << j));
            let c = solve(inst, done | mask, full, memo, budget)?;
            if c < best.0 {
                best = (c, mask);
            }
        }
        let cost = undone + best.0;
        memo.insert(done, (cost, best.1));
        Ok(cost)
    }

    let cost = solve(instance, 0, full, &mut memo, budget)?;
    let mut steps = Vec::new();
    let mut done = 0u64;
    while done != full {
        let mask = memo[&done].1;
        steps.push((0..n).filter(|&j| mask & (1 << j) != 0).collect());
        done |= mask;
    }
    Ok((TaskSchedule::new(steps), cost))
}

/// Visits every feasible schedule made of nonempty steps of at most P
/// available tasks. Fails once more than `budget.max_states` are visited.
pub fn for_each_task_schedule(
    instance: &OuttreeInstance,
    budget: &SearchBudget,
    mut visit: impl FnMut(&TaskSchedule),
) -> Result<usize> {
    let n = instance.len();
    if n > budget.max_tasks.min(63) {
        return Err(WormsError::BudgetExceeded(format!("{n} tasks exceed the limit of {}", budget.max_tasks)));
    }
    let full: u64 = if n == 0 { 0 } else { (1u64 << n) - 1 };
    let mut count = 0usize;

    fn rec(
        inst: &OuttreeInstance,
        done: u64,
        full: u64,
        cur: &mut TaskSchedule,
        count: &mut usize,
        limit: usize,
        visit: &mut dyn FnMut(&TaskSchedule),
    ) -> Result<()> {
        if done == full {
            *count += 1;
            if *count > limit {
                return Err(WormsError::BudgetExceeded(format!("more than {limit} schedules")));
            }
            visit(cur);
            return Ok(());
        }
        let avail = available(inst, done);
        for k in 1..=inst.p().min(avail.len()) {
            let mut subsets = Vec::new();
            combinations(&avail, k, &mut subsets);
            for x in subsets {
                let mask = x.iter().fold(0u64, |m, &j| m | (1 << j));
                cur.steps.push(x);
                rec(inst, done | mask, full, cur, count, limit, visit)?;
                cur.steps.pop();
            }
        }
        Ok(())
    }

    rec(instance, 0, full, &mut TaskSchedule::default(), &mut count, budget.max_states, &mut visit)?;
    Ok(count)
}

/// `(from, to, [(target, count)])` for one occupied edge.
type Edge = (usize, usize, Vec<(usize, usize)>);

/// One flush in a search transition: `take[k]` messages of class `k` move.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Move {
    from: usize,
    to: usize,
    take: Vec<(usize, usize)>,
}

struct WormsSearch<'a> {
    inst: &'a WormsInstance,
    /// Message ids grouped by target, one class per target leaf.
    classes: Vec<Vec<usize>>,
    /// Move every co-located message across an edge at once. Exact when
    /// no flush or node can ever hold more than B messages.
    grouped: bool,
    budget: SearchBudget,
    memo: HashMap<Vec<u32>, (u64, Vec<Move>)>,
}

impl WormsSearch<'_> {
    /// Positions sorted within each class.
    fn canonical(&self, pos: &mut [u32]) {
        let mut at = 0;
        for c in &self.classes {
            pos[at..at + c.len()].sort_unstable();
            at += c.len();
        }
    }

    /// Candidate edges from the current state, with per-class availability.
    fn edges(&self, pos: &[u32]) -> Vec<Edge> {
        let tree = self.inst.tree();
        let mut map: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        let mut at = 0;
        for (k, c) in self.classes.iter().enumerate() {
            let target = self.inst.target(c[0]);
            for &p in &pos[at..at + c.len()] {
                let u = p as usize;
                if u == target {
                    continue;
                }
                let next = self.inst.path_node(c[0], tree.depth(u) + 1);
                let e = map.entry((u, next)).or_default();
                match e.last_mut() {
                    Some((kk, n)) if *kk == k => *n += 1,
                    _ => e.push((k, 1)),
                }
            }
            at += c.len();
        }
        let mut out: Vec<_> = map.into_iter().map(|((u, c), v)| (u, c, v)).collect();
        out.sort_unstable();
        out
    }

    fn remaining(&self, pos: &[u32]) -> u64 {
        let mut at = 0;
        let mut r = 0;
        for c in &self.classes {
            let target = self.inst.target(c[0]) as u32;
            r += pos[at..at + c.len()].iter().filter(|&&p| p != target).count() as u64;
            at += c.len();
        }
        r
    }

    fn apply(&self, pos: &[u32], moves: &[Move]) -> Option<Vec<u32>> {
        let tree = self.inst.tree();
        let b = self.inst.b();
        let mut next = pos.to_vec();
        let mut offsets = Vec::with_capacity(self.classes.len());
        let mut at = 0;
        for c in &self.classes {
            offsets.push(at);
            at += c.len();
        }
        let mut out_of: HashMap<usize, usize> = HashMap::new();
        for mv in moves {
            for &(k, n) in &mv.take {
                let range = offsets[k]..offsets[k] + self.classes[k].len();
                let mut left = n;
                for p in &mut next[range] {
                    if left == 0 {
                        break;
                    }
                    if *p as usize == mv.from {
                        *p = mv.to as u32;
                        left -= 1;
                    }
                }
                *out_of.entry(mv.from).or_default() += n;
            }
        }
        // space requirement for the step just taken
        let mut count: HashMap<usize, usize> = HashMap::new();
        for &p in pos {
            *count.entry(p as usize).or_default() += 1;
        }
        for (&v, &c) in &count {
            if tree.is_bounded(v) && c - out_of.get(&v).copied().unwrap_or(0) > b {
                return None;
            }
        }
        self.canonical(&mut next);
        Some(next)
    }

    /// Every admissible set of flushes for one step.
    fn transitions(&self, pos: &[u32]) -> Vec<Vec<Move>> {
        let p = self.inst.p();
        let b = self.inst.b();
        let edges = self.edges(pos);
        let mut out = Vec::new();
        if self.grouped {
            let k = p.min(edges.len());
            let idx: Vec<usize> = (0..edges.len()).collect();
            let mut subsets = Vec::new();
            combinations(&idx, k, &mut subsets);
            for sub in subsets {
                out.push(
                    sub.iter()
                        .map(|&i| Move { from: edges[i].0, to: edges[i].1, take: edges[i].2.clone() })
                        .collect(),
                );
            }
            return out;
        }
        // every per-edge choice of counts per class, totalling 1..=B
        let per_edge: Vec<Vec<Move>> = edges
            .iter()
            .map(|(u, c, avail)| {
                let mut moves = Vec::new();
                let mut take = vec![0usize; avail.len()];
                loop {
                    let total: usize = take.iter().sum();
                    if total > 0 && total <= b {
                        moves.push(Move {
                            from: *u,
                            to: *c,
                            take: avail.iter().zip(&take).filter(|(_, &t)| t > 0).map(|(&(k, _), &t)| (k, t)).collect(),
                        });
                    }
                    let mut i = 0;
                    while i < take.len() && take[i] == avail[i].1 {
                        take[i] = 0;
                        i += 1;
                    }
                    if i == take.len() {
                        break;
                    }
                    take[i] += 1;
                }
                moves
            })
            .collect();
        for k in 1..=p.min(edges.len()) {
            let idx: Vec<usize> = (0..edges.len()).collect();
            let mut subsets = Vec::new();
            combinations(&idx, k, &mut subsets);
            for sub in subsets {
                let mut partial: Vec<Vec<Move>> = vec![Vec::new()];
                for &e in &sub {
                    let mut grown = Vec::new();
                    for base in &partial {
                        for mv in &per_edge[e] {
                            let mut nb = base.clone();
                            nb.push(mv.clone());
                            grown.push(nb);
                        }
                    }
                    partial = grown;
                }
                out.extend(partial);
            }
        }
        out
    }

    fn solve(&mut self, pos: Vec<u32>, depth: usize) -> Result<u64> {
        let rem = self.remaining(&pos);
        if rem == 0 {
            return Ok(0);
        }
        if let Some((c, _)) = self.memo.get(&pos) {
            return Ok(*c);
        }
        if depth >= self.budget.max_steps {
            return Err(WormsError::BudgetExceeded(format!("schedules longer than {} steps", self.budget.max_steps)));
        }
        if self.memo.len() >= self.budget.max_states {
            return Err(WormsError::BudgetExceeded(format!("more than {} states", self.budget.max_states)));
        }
        let mut best = (u64::MAX, Vec::new());
        for moves in self.transitions(&pos) {
            let Some(next) = self.apply(&pos, &moves) else { continue };
            let c = self.solve(next, depth + 1)?;
            if c < best.0 {
                best = (c, moves);
            }
        }
        if best.0 == u64::MAX {
            return Err(WormsError::Internal("no admissible step from a reachable state".into()));
        }
        let cost = rem + best.0;
        self.memo.insert(pos, (cost, best.1));
        Ok(cost)
    }
}

/// Optimal valid schedule by memoized search over message positions.
///
/// Messages sharing a target are interchangeable, so states keep only the
/// multiset of positions per target. When `|M| <= B` no space or size limit
/// can bind and each step flushes every co-located group across
/// `min(P, edges)` edges; otherwise every split is tried.
pub fn brute_force_worms(instance: &WormsInstance, budget: &SearchBudget) -> Result<(Schedule, u64)> {
    let nm = instance.num_messages();
    if nm > budget.max_messages {
        return Err(WormsError::BudgetExceeded(format!(
            "{nm} messages exceed the limit of {}",
            budget.max_messages
        )));
    }
    brute_force_worms_with(instance, budget, nm <= instance.b())
}

pub(crate) fn brute_force_worms_with(
    instance: &WormsInstance,
    budget: &SearchBudget,
    grouped: bool,
) -> Result<(Schedule, u64)> {
    let nm = instance.num_messages();
    let mut ids: Vec<usize> = (0..nm).collect();
    ids.sort_by_key(|&m| (instance.target(m), m));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for m in ids {
        match classes.last_mut() {
            Some(c) if instance.target(c[0]) == instance.target(m) => c.push(m),
            _ => classes.push(vec![m]),
        }
    }
    let mut search = WormsSearch { inst: instance, classes, grouped, budget: *budget, memo: HashMap::new() };
    let root = instance.tree().root() as u32;
    let start = vec![root; nm];
    let cost = search.solve(start.clone(), 0)?;

    // replay the chosen moves on concrete message ids, lowest ids first
    let mut real = vec![instance.tree().root(); nm];
    let mut pos = start;
    let mut steps = Vec::new();
    while search.remaining(&pos) > 0 {
        let moves = search.memo[&pos].1.clone();
        let mut step = Vec::new();
        for mv in &moves {
            let mut msgs = Vec::new();
            for &(k, n) in &mv.take {
                msgs.extend(search.classes[k].iter().copied().filter(|&m| real[m] == mv.from).take(n));
            }
            msgs.sort_unstable();
            step.push(Flush::new(mv.from, mv.to, msgs));
        }
        for f in &step {
            for &m in &f.messages {
                real[m] = f.to;
            }
        }
        steps.push(step);
        pos = search.apply(&pos, &moves).expect("memoized move is admissible");
    }
    Ok((Schedule::new(steps), cost))
}

//! Flush schedules, the step-by-step validator and schedule cost.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WormsError};
use crate::instance::WormsInstance;

/// Moves a set of messages across one parent-to-child edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flush {
    pub from: usize,
    pub to: usize,
    pub messages: Vec<usize>,
}

impl Flush {
    pub fn new(from: usize, to: usize, messages: Vec<usize>) -> Self {
        Flush { from, to, messages }
    }
}

/// Time steps of flushes. `steps[0]` is time step 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub steps: Vec<Vec<Flush>>,
}

impl Schedule {
    pub fn new(steps: Vec<Vec<Flush>>) -> Self {
        Schedule { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_flushes(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// Adds `flush` at 1-based step `t`, growing the schedule as needed.
    pub fn push_at(&mut self, t: usize, flush: Flush) {
        assert!(t >= 1, "time steps start at 1");
        if self.steps.len() < t {
            self.steps.resize_with(t, Vec::new);
        }
        self.steps[t - 1].push(flush);
    }

    /// Drops empty flushes and then empty time steps.
    ///
    /// Removing a step with no flushes never breaks validity: positions are
    /// unchanged across it, so its space constraint is implied by the
    /// neighbouring ones.
    pub fn compact(&mut self) {
        for step in &mut self.steps {
            step.retain(|f| !f.messages.is_empty());
        }
        self.steps.retain(|s| !s.is_empty());
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            WormsError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TooManyFlushes,
    InvalidEdge,
    FlushSize,
    UnknownMessage,
    DuplicateMessage,
    NotAtSource,
    SpaceExceeded,
    Incomplete,
}

impl ViolationKind {
    /// Space violations still leave a schedule overfilling.
    pub fn breaks_overfilling(self) -> bool {
        !matches!(self, ViolationKind::SpaceExceeded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub node: Option<usize>,
    pub flush: Option<usize>,
    pub kind: ViolationKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_overfilling: bool,
    pub is_valid: bool,
    /// Step at which each message reached its target leaf.
    pub completion_time: Vec<Option<usize>>,
    /// Sum of the known completion times.
    pub total_cost: u64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn all_complete(&self) -> bool {
        self.completion_time.iter().all(Option::is_some)
    }

    pub fn max_completion(&self) -> usize {
        self.completion_time.iter().flatten().copied().max().unwrap_or(0)
    }

    /// `message_id,completion_time` rows; unfinished messages print `never`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("message_id,completion_time\n");
        for (m, c) in self.completion_time.iter().enumerate() {
            match c {
                Some(t) => writeln!(out, "{m},{t}").unwrap(),
                None => writeln!(out, "{m},never").unwrap(),
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Replays `schedule` from the all-at-root state and reports flush validity,
/// completion times and space-requirement violations.
///
/// A message flushed out of a node at step `t` is not counted as being in
/// that node at step `t + 1`, so a cascade may overflow a node for one step.
pub fn validate_schedule(instance: &WormsInstance, schedule: &Schedule) -> ValidationReport {
    let tree = instance.tree();
    let n = tree.len();
    let nm = instance.num_messages();
    let b = instance.b();
    let p = instance.p();

    let mut pos = vec![tree.root(); nm];
    let mut count = vec![0usize; n];
    count[tree.root()] = nm;
    let mut completion: Vec<Option<usize>> = vec![None; nm];
    let mut violations = Vec::new();
    // bounded nodes currently holding more than B messages
    let mut crowded: BTreeSet<usize> = BTreeSet::new();
    let mut stamp = vec![0usize; nm];

    for (idx, flushes) in schedule.steps.iter().enumerate() {
        let t = idx + 1;
        if flushes.len() > p {
            violations.push(Violation {
                step: t,
                node: None,
                flush: None,
                kind: ViolationKind::TooManyFlushes,
                reason: format!("{} flushes exceed P = {p}", flushes.len()),
            });
        }
        let mut moves: Vec<(usize, usize, usize)> = Vec::new();
        let mut outflow: HashMap<usize, usize> = HashMap::new();
        for (fi, f) in flushes.iter().enumerate() {
            let edge_ok = f.from < n && f.to < n && tree.parent(f.to) == Some(f.from);
            if !edge_ok {
                violations.push(Violation {
                    step: t,
                    node: Some(f.from),
                    flush: Some(fi),
                    kind: ViolationKind::InvalidEdge,
                    reason: format!("({}, {}) is not a parent-child edge", f.from, f.to),
                });
                continue;
            }
            if f.messages.is_empty() || f.messages.len() > b {
                violations.push(Violation {
                    step: t,
                    node: Some(f.from),
                    flush: Some(fi),
                    kind: ViolationKind::FlushSize,
                    reason: format!("flush carries {} messages, allowed 1..={b}", f.messages.len()),
                });
            }
            for &m in &f.messages {
                if m >= nm {
                    violations.push(Violation {
                        step: t,
                        node: Some(f.from),
                        flush: Some(fi),
                        kind: ViolationKind::UnknownMessage,
                        reason: format!("message {m} does not exist"),
                    });
                    continue;
                }
                if stamp[m] == t {
                    violations.push(Violation {
                        step: t,
                        node: Some(f.from),
                        flush: Some(fi),
                        kind: ViolationKind::DuplicateMessage,
                        reason: format!("message {m} appears in two flushes"),
                    });
                    continue;
                }
                stamp[m] = t;
                if pos[m] != f.from {
                    violations.push(Violation {
                        step: t,
                        node: Some(f.from),
                        flush: Some(fi),
                        kind: ViolationKind::NotAtSource,
                        reason: format!("message {m} is in node {}, not {}", pos[m], f.from),
                    });
                    continue;
                }
                moves.push((m, f.from, f.to));
                *outflow.entry(f.from).or_default() += 1;
            }
        }

        for &v in &crowded {
            let stay = count[v] - outflow.get(&v).copied().unwrap_or(0);
            if stay > b {
                violations.push(Violation {
                    step: t,
                    node: Some(v),
                    flush: None,
                    kind: ViolationKind::SpaceExceeded,
                    reason: format!("{stay} messages stay in node {v} across steps {t} and {}", t + 1),
                });
            }
        }

        for (m, from, to) in moves {
            count[from] -= 1;
            count[to] += 1;
            pos[m] = to;
            if to == instance.target(m) {
                completion[m] = Some(t);
            }
            for v in [from, to] {
                if tree.is_bounded(v) {
                    if count[v] > b {
                        crowded.insert(v);
                    } else {
                        crowded.remove(&v);
                    }
                }
            }
        }
    }

    // whatever is left in a node stays there forever
    let end = schedule.len() + 1;
    for &v in &crowded {
        violations.push(Violation {
            step: end,
            node: Some(v),
            flush: None,
            kind: ViolationKind::SpaceExceeded,
            reason: format!("{} messages remain in node {v} after the schedule ends", count[v]),
        });
    }
    let unfinished = completion.iter().filter(|c| c.is_none()).count();
    if unfinished > 0 {
        violations.push(Violation {
            step: end,
            node: None,
            flush: None,
            kind: ViolationKind::Incomplete,
            reason: format!("{unfinished} messages never reach their target leaf"),
        });
    }

    let is_overfilling = !violations.iter().any(|v| v.kind.breaks_overfilling());
    let is_valid = is_overfilling && violations.is_empty();
    let total_cost = completion.iter().flatten().map(|&t| t as u64).sum();
    ValidationReport {
        is_overfilling,
        is_valid,
        completion_time: completion,
        total_cost,
        violations,
    }
}

/// Total completion time of an overfilling schedule.
pub fn schedule_cost(instance: &WormsInstance, schedule: &Schedule) -> Result<u64> {
    let report = validate_schedule(instance, schedule);
    if let Some(m) = report.completion_time.iter().position(Option::is_none) {
        return Err(WormsError::IncompleteSchedule(m));
    }
    if !report.is_overfilling {
        let first = report
            .violations
            .iter()
            .find(|v| v.kind.breaks_overfilling())
            .map(|v| format!("step {}: {}", v.step, v.reason))
            .unwrap_or_default();
        return Err(WormsError::NotOverfilling(first));
    }
    Ok(report.total_cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2(b: usize, msgs: usize) -> WormsInstance {
        WormsInstance::from_parts(&[None, Some(0), Some(1)], vec![2; msgs], 1, b).unwrap()
    }

    #[test]
    fn empty_schedule_on_empty_instance() {
        let inst = WormsInstance::from_parts(&[None, Some(0), Some(1)], vec![], 1, 12).unwrap();
        let r = validate_schedule(&inst, &Schedule::default());
        assert!(r.is_valid && r.is_overfilling);
        assert_eq!(r.total_cost, 0);
        assert_eq!(schedule_cost(&inst, &Schedule::default()).unwrap(), 0);
    }

    #[test]
    fn single_message_path() {
        let inst = path2(12, 1);
        let s = Schedule::new(vec![vec![Flush::new(0, 1, vec![0])], vec![Flush::new(1, 2, vec![0])]]);
        assert_eq!(schedule_cost(&inst, &s).unwrap(), 2);
    }

    #[test]
    fn two_siblings_grouped_then_split() {
        // root 0 -> x 1 -> leaves 2, 3
        let inst =
            WormsInstance::from_parts(&[None, Some(0), Some(1), Some(1)], vec![2, 3], 1, 12).unwrap();
        let s = Schedule::new(vec![
            vec![Flush::new(0, 1, vec![0, 1])],
            vec![Flush::new(1, 2, vec![0])],
            vec![Flush::new(1, 3, vec![1])],
        ]);
        let r = validate_schedule(&inst, &s);
        assert!(r.is_valid);
        assert_eq!(r.total_cost, 5);
    }

    #[test]
    fn cascade_overflow_is_legal() {
        // path root 0 -> v 1 -> leaf 2, plus leaf 3 under v. B = 12.
        // 12 "green" messages for leaf 3 parked in v, then 12 "red" messages
        // cascade through v to leaf 2.
        let mut targets = vec![3; 12];
        targets.extend(vec![2; 12]);
        let inst =
            WormsInstance::from_parts(&[None, Some(0), Some(1), Some(1)], targets, 1, 12).unwrap();
        let green: Vec<usize> = (0..12).collect();
        let red: Vec<usize> = (12..24).collect();
        let s = Schedule::new(vec![
            vec![Flush::new(0, 1, green.clone())],
            vec![Flush::new(0, 1, red.clone())],
            vec![Flush::new(1, 2, red)],
            vec![Flush::new(1, 3, green)],
        ]);
        let r = validate_schedule(&inst, &s);
        assert!(r.is_valid, "{:?}", r.violations);
    }

    #[test]
    fn parked_overflow_is_only_overfilling() {
        // B + 1 messages sit in v across steps 3 and 4
        let inst = path2(12, 13);
        let all: Vec<usize> = (0..13).collect();
        let s = Schedule::new(vec![
            vec![Flush::new(0, 1, all[..12].to_vec())],
            vec![Flush::new(0, 1, all[12..].to_vec())],
            vec![],
            vec![Flush::new(1, 2, all[..12].to_vec())],
            vec![Flush::new(1, 2, all[12..].to_vec())],
        ]);
        let r = validate_schedule(&inst, &s);
        assert!(r.is_overfilling);
        assert!(!r.is_valid);
        let v = r.violations.iter().find(|v| v.kind == ViolationKind::SpaceExceeded).unwrap();
        assert_eq!((v.step, v.node), (3, Some(1)));
    }

    #[test]
    fn flush_errors_are_reported() {
        let inst = path2(12, 2);
        let s = Schedule::new(vec![
            vec![Flush::new(0, 2, vec![0]), Flush::new(1, 2, vec![1])],
            vec![Flush::new(0, 1, vec![0]), Flush::new(0, 1, vec![0])],
        ]);
        let r = validate_schedule(&inst, &s);
        assert!(!r.is_overfilling);
        let kinds: Vec<_> = r.violations.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::InvalidEdge));
        assert!(kinds.contains(&ViolationKind::TooManyFlushes));
        assert!(kinds.contains(&ViolationKind::NotAtSource));
        assert!(kinds.contains(&ViolationKind::DuplicateMessage));
        assert!(kinds.contains(&ViolationKind::Incomplete));
        assert!(matches!(schedule_cost(&inst, &s), Err(WormsError::IncompleteSchedule(_))));
    }

    #[test]
    fn csv_and_json_shapes() {
        let inst = path2(12, 2);
        let s = Schedule::new(vec![vec![Flush::new(0, 1, vec![0])], vec![Flush::new(1, 2, vec![0])]]);
        let r = validate_schedule(&inst, &s);
        assert_eq!(r.to_csv(), "message_id,completion_time\n0,2\n1,never\n");
        let doc = s.to_json();
        assert_eq!(doc, r#"{"steps":[[{"from":0,"to":1,"messages":[0]}],[{"from":1,"to":2,"messages":[0]}]]}"#);
        assert_eq!(Schedule::from_json(&doc).unwrap(), s);
    }
}

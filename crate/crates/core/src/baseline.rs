//! Naive schedulers used as comparison points.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;

use crate::instance::WormsInstance;
use crate::schedule::{Flush, Schedule};

/// Every message walks to its leaf alone: `h` single-message flushes on
/// consecutive steps, each chain on the earliest free machine lane.
pub fn serial_per_message(instance: &WormsInstance) -> Schedule {
    let h = instance.height();
    let mut lanes: BinaryHeap<Reverse<(usize, usize)>> = (0..instance.p()).map(|l| Reverse((1, l))).collect();
    let mut s = Schedule::default();
    for m in 0..instance.num_messages() {
        let Reverse((start, lane)) = lanes.pop().expect("at least one lane");
        for d in 0..h {
            s.push_at(start + d, Flush::new(instance.path_node(m, d), instance.path_node(m, d + 1), vec![m]));
        }
        lanes.push(Reverse((start + h, lane)));
    }
    s
}

/// Each step, up to P nodes holding the most messages each flush their
/// largest child group.
///
/// A bounded child only takes as many messages as it has free room before
/// the step, so no node ever holds more than B and the result is valid.
pub fn lazy_greedy(instance: &WormsInstance) -> Schedule {
    let tree = instance.tree();
    let b = instance.b();
    let nm = instance.num_messages();
    // per node: child -> buffered message ids, ascending
    let mut buf: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); tree.len()];
    let mut count = vec![0usize; tree.len()];
    for m in 0..nm {
        buf[tree.root()].entry(instance.path_node(m, 1)).or_default().push(m);
    }
    count[tree.root()] = nm;
    let mut remaining = nm;
    let mut active: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
    if nm > 0 {
        active.insert(tree.root());
    }
    let mut s = Schedule::default();
    while remaining > 0 {
        // (size, child) of the best flush per node
        let mut cands: Vec<(usize, usize, usize)> = Vec::new();
        for &v in &active {
            let mut best: Option<(usize, usize)> = None;
            for (&c, msgs) in &buf[v] {
                let room = if tree.is_bounded(c) { b.saturating_sub(count[c]) } else { usize::MAX };
                let size = msgs.len().min(b).min(room);
                if size > 0 && best.is_none_or(|(bs, _)| size > bs) {
                    best = Some((size, c));
                }
            }
            if let Some((size, c)) = best {
                cands.push((v, c, size));
            }
        }
        cands.sort_by_key(|&(v, _, _)| (Reverse(count[v]), v));
        cands.truncate(instance.p());
        assert!(!cands.is_empty(), "some node can always flush");
        let mut step = Vec::with_capacity(cands.len());
        for (v, c, size) in cands {
            let group = buf[v].get_mut(&c).unwrap();
            let moved: Vec<usize> = group.drain(..size).collect();
            if group.is_empty() {
                buf[v].remove(&c);
            }
            step.push(Flush::new(v, c, moved));
        }
        for f in &step {
            count[f.from] -= f.messages.len();
            if buf[f.from].is_empty() {
                active.remove(&f.from);
            }
            let d = tree.depth(f.to);
            for &m in &f.messages {
                if instance.target(m) == f.to {
                    remaining -= 1;
                } else {
                    buf[f.to].entry(instance.path_node(m, d + 1)).or_default().push(m);
                    count[f.to] += 1;
                }
            }
            if !buf[f.to].is_empty() {
                active.insert(f.to);
            }
        }
        s.steps.push(step);
    }
    s
}

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use worms::outtree::{OuttreeInstance, TaskSchedule};
use worms::schedule::{Flush, Schedule};
use worms::WormsInstance;

/// Random out-forest with `n` tasks, weights in `0..=max_w`, shuffled ids.
pub fn random_outtree(rng: &mut StdRng, n: usize, max_w: u64, p: usize) -> OuttreeInstance {
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    let mut pairs = vec![(0u64, None); n];
    for j in 0..n {
        let parent = if j == 0 || rng.gen_bool(0.25) { None } else { Some(label[rng.gen_range(0..j)]) };
        pairs[label[j]] = (rng.gen_range(0..=max_w), parent);
    }
    OuttreeInstance::from_pairs(&pairs, p).unwrap()
}

/// Random feasible schedule: each step runs a random nonempty subset of
/// at most P ready tasks.
pub fn random_task_schedule(rng: &mut StdRng, inst: &OuttreeInstance) -> TaskSchedule {
    let n = inst.len();
    let mut done = vec![false; n];
    let mut steps = Vec::new();
    let mut left = n;
    while left > 0 {
        let mut ready: Vec<usize> =
            (0..n).filter(|&j| !done[j] && inst.parent(j).is_none_or(|q| done[q])).collect();
        ready.shuffle(rng);
        let k = rng.gen_range(1..=ready.len().min(inst.p()));
        ready.truncate(k);
        for &j in &ready {
            done[j] = true;
        }
        left -= k;
        steps.push(ready);
    }
    TaskSchedule::new(steps)
}

/// Random tree with every leaf at depth `height`, fanout `1..=max_fanout`,
/// and `msgs` messages sent to uniformly drawn leaves.
pub fn random_worms(rng: &mut StdRng, height: usize, max_fanout: usize, msgs: usize, p: usize, b: usize) -> WormsInstance {
    let mut parents = vec![None];
    let mut level = vec![0usize];
    for _ in 0..height {
        let mut next = Vec::new();
        for &v in &level {
            for _ in 0..rng.gen_range(1..=max_fanout) {
                next.push(parents.len());
                parents.push(Some(v));
            }
        }
        level = next;
    }
    let targets = (0..msgs).map(|_| level[rng.gen_range(0..level.len())]).collect();
    WormsInstance::from_parts(&parents, targets, p, b).unwrap()
}

/// Random overfilling schedule that ignores the space limit: each step
/// flushes up to P random groups, each a random prefix of at most B.
pub fn random_overfilling(rng: &mut StdRng, inst: &WormsInstance) -> Schedule {
    let tree = inst.tree();
    let mut at: Vec<usize> = vec![tree.root(); inst.num_messages()];
    let mut s = Schedule::default();
    loop {
        let mut groups: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
        for (m, &v) in at.iter().enumerate() {
            if v != inst.target(m) {
                groups.entry((v, inst.path_node(m, tree.depth(v) + 1))).or_default().push(m);
            }
        }
        if groups.is_empty() {
            break;
        }
        let mut keys: Vec<_> = groups.keys().copied().collect();
        keys.shuffle(rng);
        keys.truncate(rng.gen_range(1..=inst.p()));
        let mut step = Vec::new();
        for key in keys {
            let mut g = groups.remove(&key).unwrap();
            g.shuffle(rng);
            g.truncate(rng.gen_range(1..=g.len().min(inst.b())));
            g.sort_unstable();
            for &m in &g {
                at[m] = key.1;
            }
            step.push(Flush::new(key.0, key.1, g));
        }
        s.steps.push(step);
    }
    s
}

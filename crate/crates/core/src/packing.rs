//! Packed nodes, packed sets and starting times.
//!
//! A node is packed when at least B/6 messages below it are not already
//! claimed by a deeper packed node. Packed contents are then cut into packed
//! sets of size between B/6 and B/2, either following a reference schedule
//! or in a fixed tree order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WormsError};
use crate::instance::WormsInstance;
use crate::schedule::{validate_schedule, Schedule};

/// `6 * count >= b`, i.e. `count >= B/6` without rounding.
pub fn at_least_sixth(count: usize, b: usize) -> bool {
    6 * count >= b
}

/// Smallest integer count that is at least B/6.
pub fn sixth_ceil(b: usize) -> usize {
    b.div_ceil(6)
}

/// Smallest integer count that is at least B/12.
pub fn twelfth_ceil(b: usize) -> usize {
    b.div_ceil(12)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedNode {
    pub node: usize,
    /// Packed contents in ascending message id.
    pub contents: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PackingKind {
    ScheduleDependent,
    Oblivious,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSet {
    pub id: usize,
    /// Packed parent node id.
    pub parent: usize,
    pub members: Vec<usize>,
    /// 1-based position in the parent's set sequence.
    pub index_in_parent: usize,
    pub starting_time: Option<usize>,
}

impl PackedSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingResult {
    pub kind: PackingKind,
    /// Packed nodes in ascending node id.
    pub packed_nodes: Vec<PackedNode>,
    /// Sets grouped by packed node (ascending node id), each group in its
    /// sequence order. `sets[i].id == i`.
    pub sets: Vec<PackedSet>,
    pub set_of_message: Vec<usize>,
    pub packed_parent_of_message: Vec<usize>,
    pub is_packed: Vec<bool>,
}

impl PackingResult {
    pub fn set(&self, id: usize) -> &PackedSet {
        &self.sets[id]
    }

    /// Sets whose packed parent is `v`, in sequence order.
    pub fn sets_of(&self, v: usize) -> impl Iterator<Item = &PackedSet> + '_ {
        self.sets.iter().filter(move |s| s.parent == v)
    }

    /// Starting time of the set holding `m`, if known.
    pub fn tau(&self, m: usize) -> Option<usize> {
        self.sets[self.set_of_message[m]].starting_time
    }

    /// Human-readable listing of packed nodes, sets and starting times.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "packing {:?}", self.kind).unwrap();
        for pn in &self.packed_nodes {
            writeln!(out, "node {} contents {}", pn.node, pn.contents.len()).unwrap();
            for s in self.sets_of(pn.node) {
                let tau = s.starting_time.map_or("-".to_string(), |t| t.to_string());
                writeln!(
                    out,
                    "  set {} index {} size {} tau {} members {:?}",
                    s.id,
                    s.index_in_parent,
                    s.len(),
                    tau,
                    s.members
                )
                .unwrap();
            }
        }
        out
    }
}

/// Bottom-up packed-node computation. Depends only on message targets.
pub fn compute_packed_nodes(instance: &WormsInstance) -> Vec<PackedNode> {
    let (is_packed, owner) = packed_flags(instance);
    let tree = instance.tree();
    let mut index = vec![usize::MAX; tree.len()];
    let mut nodes = Vec::new();
    for v in 0..tree.len() {
        if is_packed[v] {
            index[v] = nodes.len();
            nodes.push(PackedNode { node: v, contents: Vec::new() });
        }
    }
    for (m, &o) in owner.iter().enumerate() {
        nodes[index[o]].contents.push(m);
    }
    nodes
}

/// Returns the packed flag per node and the packed parent per message.
fn packed_flags(instance: &WormsInstance) -> (Vec<bool>, Vec<usize>) {
    let tree = instance.tree();
    let n = tree.len();
    let b = instance.b();
    let mut load = vec![0usize; n];
    for &t in instance.targets() {
        load[t] += 1;
    }
    let order = tree.preorder();
    let mut unclaimed = vec![0usize; n];
    let mut is_packed = vec![false; n];
    for &v in order.iter().rev() {
        let below: usize = load[v] + tree.children(v).iter().map(|&c| unclaimed[c]).sum::<usize>();
        if tree.is_root(v) || (below > 0 && at_least_sixth(below, b)) {
            is_packed[v] = true;
            unclaimed[v] = 0;
        } else {
            unclaimed[v] = below;
        }
    }
    // deepest packed ancestor-or-self of every node
    let mut nearest = vec![tree.root(); n];
    for &v in &order {
        nearest[v] = if is_packed[v] { v } else { nearest[tree.parent(v).unwrap()] };
    }
    let owner = instance.targets().iter().map(|&t| nearest[t]).collect();
    (is_packed, owner)
}

/// Step at which each message leaves each node on its path.
///
/// Indexed `m * h + d`, where `d` is the depth of the node being left; the
/// entry at `d = h - 1` is the completion step. Requires an overfilling
/// schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Departures {
    h: usize,
    times: Vec<usize>,
}

impl Departures {
    pub fn from_schedule(instance: &WormsInstance, schedule: &Schedule) -> Result<Self> {
        let report = validate_schedule(instance, schedule);
        if !report.is_overfilling {
            let why = report
                .violations
                .iter()
                .find(|v| v.kind.breaks_overfilling())
                .map(|v| format!("step {}: {}", v.step, v.reason))
                .unwrap_or_default();
            return Err(WormsError::NotOverfilling(why));
        }
        let h = instance.height();
        let tree = instance.tree();
        let mut times = vec![0usize; instance.num_messages() * h];
        for (i, step) in schedule.steps.iter().enumerate() {
            for f in step {
                let d = tree.depth(f.from);
                for &m in &f.messages {
                    times[m * h + d] = i + 1;
                }
            }
        }
        Ok(Departures { h, times })
    }

    /// Step at which `m` is flushed out of its path node at depth `d`.
    pub fn leave(&self, m: usize, d: usize) -> usize {
        self.times[m * self.h + d]
    }

    /// Step at which `m` arrives at its path node at depth `d >= 1`.
    pub fn arrive(&self, m: usize, d: usize) -> usize {
        self.times[m * self.h + d - 1]
    }

    pub fn completion(&self, m: usize) -> usize {
        self.times[m * self.h + self.h - 1]
    }
}

struct Skeleton {
    nodes: Vec<PackedNode>,
    is_packed: Vec<bool>,
    owner: Vec<usize>,
}

fn skeleton(instance: &WormsInstance) -> Skeleton {
    let (is_packed, owner) = packed_flags(instance);
    let nodes = compute_packed_nodes(instance);
    Skeleton { nodes, is_packed, owner }
}

/// Greedily cuts a sequence of atoms (groups that must stay together) into
/// runs reaching B/6, folding a short tail into the previous run.
fn greedy_runs(atoms: Vec<Vec<usize>>, b: usize) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    for atom in atoms {
        cur.extend(atom);
        if at_least_sixth(cur.len(), b) {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        match runs.last_mut() {
            Some(last) => last.extend(cur),
            None => runs.push(cur),
        }
    }
    runs
}

/// Fixed chunks of ceil(B/6), the short tail folded into the last chunk.
fn sixth_chunks(ordered: Vec<usize>, b: usize) -> Vec<Vec<usize>> {
    let k = sixth_ceil(b);
    let atoms = ordered.chunks(k).map(<[usize]>::to_vec).collect();
    greedy_runs(atoms, b)
}

/// Takes chunks of floor(B/2) while at least ceil(B/6) would remain; the last
/// stretch is split so both halves stay within bounds.
fn half_chunks(ordered: Vec<usize>, b: usize) -> Vec<Vec<usize>> {
    let half = b / 2;
    let k = sixth_ceil(b);
    let mut runs = Vec::new();
    let mut rest: &[usize] = &ordered;
    while !rest.is_empty() {
        let r = rest.len();
        if r <= half {
            runs.push(rest.to_vec());
            break;
        }
        let take = if r - half >= k { half } else { r - k };
        runs.push(rest[..take].to_vec());
        rest = &rest[take..];
    }
    runs
}

fn assemble(kind: PackingKind, sk: Skeleton, per_node: Vec<Vec<Vec<usize>>>, nm: usize) -> PackingResult {
    let mut sets = Vec::new();
    let mut set_of_message = vec![usize::MAX; nm];
    for (pn, runs) in sk.nodes.iter().zip(per_node) {
        for (i, members) in runs.into_iter().enumerate() {
            let id = sets.len();
            for &m in &members {
                set_of_message[m] = id;
            }
            sets.push(PackedSet {
                id,
                parent: pn.node,
                members,
                index_in_parent: i + 1,
                starting_time: None,
            });
        }
    }
    PackingResult {
        kind,
        packed_nodes: sk.nodes,
        sets,
        set_of_message,
        packed_parent_of_message: sk.owner,
        is_packed: sk.is_packed,
    }
}

/// Packed sets following the flush order of an overfilling schedule.
///
/// At an internal packed node, messages flushed to the same child at the same
/// step form an atom; atoms are ordered by (step, child, smallest id) and
/// accumulated greedily. Leaf packed nodes are cut in completion order.
pub fn compute_packed_sets(instance: &WormsInstance, schedule: &Schedule) -> Result<PackingResult> {
    let dep = Departures::from_schedule(instance, schedule)?;
    Ok(packed_sets_from_departures(instance, &dep))
}

pub(crate) fn packed_sets_from_departures(instance: &WormsInstance, dep: &Departures) -> PackingResult {
    let sk = skeleton(instance);
    let tree = instance.tree();
    let b = instance.b();
    let per_node = sk
        .nodes
        .iter()
        .map(|pn| {
            let v = pn.node;
            let d = tree.depth(v);
            if tree.is_leaf(v) {
                let mut ordered = pn.contents.clone();
                ordered.sort_by_key(|&m| (dep.completion(m), m));
                sixth_chunks(ordered, b)
            } else {
                let mut keyed: Vec<(usize, usize, usize)> = pn
                    .contents
                    .iter()
                    .map(|&m| (dep.leave(m, d), instance.path_node(m, d + 1), m))
                    .collect();
                keyed.sort_unstable();
                let mut atoms: Vec<Vec<usize>> = Vec::new();
                let mut last_key = None;
                for (t, c, m) in keyed {
                    if last_key == Some((t, c)) {
                        atoms.last_mut().unwrap().push(m);
                    } else {
                        atoms.push(vec![m]);
                        last_key = Some((t, c));
                    }
                }
                greedy_runs(atoms, b)
            }
        })
        .collect();
    assemble(PackingKind::ScheduleDependent, sk, per_node, instance.num_messages())
}

/// Schedule-independent packed sets: child groups in ascending child id at
/// internal nodes, half-capacity chunks in message-id order at leaves.
pub fn compute_oblivious_packed_sets(instance: &WormsInstance) -> PackingResult {
    let sk = skeleton(instance);
    let tree = instance.tree();
    let b = instance.b();
    let per_node = sk
        .nodes
        .iter()
        .map(|pn| {
            let v = pn.node;
            if tree.is_leaf(v) {
                return half_chunks(pn.contents.clone(), b);
            }
            let d = tree.depth(v);
            let mut keyed: Vec<(usize, usize)> =
                pn.contents.iter().map(|&m| (instance.path_node(m, d + 1), m)).collect();
            keyed.sort_unstable();
            let mut atoms: Vec<Vec<usize>> = Vec::new();
            let mut last = None;
            for (c, m) in keyed {
                if last == Some(c) {
                    atoms.last_mut().unwrap().push(m);
                } else {
                    atoms.push(vec![m]);
                    last = Some(c);
                }
            }
            greedy_runs(atoms, b)
        })
        .collect();
    assemble(PackingKind::Oblivious, sk, per_node, instance.num_messages())
}

/// Fills in starting times against `schedule`.
///
/// Leaf parent: arrival of the ceil(B/12)-th member. Internal parent: sets
/// are taken in order of their last flush-out; a set starts at the last
/// flush-out of its predecessor, the first one at the flush-out of its k-th
/// member with k = min(ceil(B/12), ceil(|C|/2)). The second bound only
/// matters for an undersized root set. For schedule-dependent sets the
/// flush-out order is the set order; oblivious sets are reordered here.
pub fn compute_starting_times(
    instance: &WormsInstance,
    schedule: &Schedule,
    packing: &PackingResult,
) -> Result<PackingResult> {
    let dep = Departures::from_schedule(instance, schedule)?;
    Ok(starting_times_from_departures(instance, &dep, packing))
}

pub(crate) fn starting_times_from_departures(
    instance: &WormsInstance,
    dep: &Departures,
    packing: &PackingResult,
) -> PackingResult {
    let tree = instance.tree();
    let q = twelfth_ceil(instance.b());
    let mut out = packing.clone();
    let mut start = 0;
    while start < out.sets.len() {
        let v = out.sets[start].parent;
        let mut end = start;
        while end < out.sets.len() && out.sets[end].parent == v {
            end += 1;
        }
        let d = tree.depth(v);
        if tree.is_leaf(v) {
            for s in &mut out.sets[start..end] {
                let mut arrivals: Vec<usize> = s.members.iter().map(|&m| dep.arrive(m, d)).collect();
                arrivals.sort_unstable();
                s.starting_time = Some(arrivals[q.min(arrivals.len()) - 1]);
            }
        } else {
            let mut outs: Vec<(usize, Vec<usize>)> = out.sets[start..end]
                .iter()
                .map(|s| {
                    let mut o: Vec<usize> = s.members.iter().map(|&m| dep.leave(m, d)).collect();
                    o.sort_unstable();
                    (s.id, o)
                })
                .collect();
            outs.sort_by_key(|(id, o)| (*o.last().unwrap(), *id));
            let mut prev_last = None;
            for (id, o) in outs {
                let k = q.min(o.len().div_ceil(2));
                out.sets[id].starting_time = Some(prev_last.unwrap_or(o[k - 1]));
                prev_last = Some(*o.last().unwrap());
            }
        }
        start = end;
    }
    out
}

/// Schedule-dependent sets with starting times in one pass.
pub fn pack_schedule(instance: &WormsInstance, schedule: &Schedule) -> Result<PackingResult> {
    let dep = Departures::from_schedule(instance, schedule)?;
    let packing = packed_sets_from_departures(instance, &dep);
    Ok(starting_times_from_departures(instance, &dep, &packing))
}

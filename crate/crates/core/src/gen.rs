//! Seeded random instances and the 3-partition hardness gadget.
//!
//! Random draws come from `Xoshiro256PlusPlus::seed_from_u64(seed)` (the
//! seed is expanded with splitmix64). An integer in `a..=b` is
//! `a + next_u64() % (b - a + 1)`; a unit float is `(next_u64() >> 11) * 2^-53`.
//! Trees are complete with node ids in BFS order, and messages are numbered
//! leaf by leaf in ascending leaf id.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WormsError};
use crate::instance::WormsInstance;
use crate::schedule::{Flush, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum LeafLaw {
    /// Each leaf draws its count uniformly from `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
    /// Each leaf draws `k` in `1..=max` with probability proportional to `k^-s`.
    Zipf { s: f64, max: u64 },
    /// Every leaf gets exactly `c` messages.
    Constant { c: u64 },
    /// `total` messages, each sent to a uniformly drawn leaf.
    Scatter { total: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub height: usize,
    pub fanout: usize,
    pub law: LeafLaw,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "P")]
    pub p: usize,
}

fn uniform(rng: &mut Xoshiro256PlusPlus, lo: u64, hi: u64) -> u64 {
    lo + rng.next_u64() % (hi - lo + 1)
}

fn unit(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Parents of a complete tree, BFS ids. Returns the parents and the first
/// leaf id.
pub fn complete_tree(height: usize, fanout: usize) -> (Vec<Option<usize>>, usize) {
    let mut parents = vec![None];
    let mut level_start = 0;
    let mut level_len = 1;
    for _ in 0..height {
        let next_start = parents.len();
        for v in level_start..level_start + level_len {
            for _ in 0..fanout {
                parents.push(Some(v));
            }
        }
        level_start = next_start;
        level_len *= fanout;
    }
    (parents, level_start)
}

pub fn generate_random(spec: &GeneratorSpec) -> Result<WormsInstance> {
    if spec.height == 0 || spec.fanout < 2 {
        return Err(WormsError::InvalidGenerator(format!(
            "need height >= 1 and fanout >= 2, got {} and {}",
            spec.height, spec.fanout
        )));
    }
    let leaves = (spec.fanout as u128).checked_pow(spec.height as u32).unwrap_or(u128::MAX);
    if leaves > 1 << 26 {
        return Err(WormsError::InvalidGenerator(format!("{leaves} leaves is too many")));
    }
    match spec.law {
        LeafLaw::Uniform { lo, hi } if lo > hi => {
            return Err(WormsError::InvalidGenerator(format!("empty range {lo}..={hi}")))
        }
        LeafLaw::Zipf { s, max } if !(s.is_finite() && s > 0.0) || max == 0 => {
            return Err(WormsError::InvalidGenerator(format!("zipf needs s > 0 and max >= 1, got {s} and {max}")))
        }
        _ => {}
    }
    let (parents, first_leaf) = complete_tree(spec.height, spec.fanout);
    let nleaves = parents.len() - first_leaf;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let counts: Vec<u64> = match spec.law {
        LeafLaw::Uniform { lo, hi } => (0..nleaves).map(|_| uniform(&mut rng, lo, hi)).collect(),
        LeafLaw::Constant { c } => vec![c; nleaves],
        LeafLaw::Zipf { s, max } => {
            let weights: Vec<f64> = (1..=max).map(|k| (k as f64).powf(-s)).collect();
            let total: f64 = weights.iter().sum();
            let mut cdf = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in weights {
                acc += w / total;
                cdf.push(acc);
            }
            (0..nleaves)
                .map(|_| {
                    let u = unit(&mut rng);
                    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u64 + 1
                })
                .collect()
        }
        LeafLaw::Scatter { total } => {
            let mut c = vec![0u64; nleaves];
            for _ in 0..total {
                c[uniform(&mut rng, 0, nleaves as u64 - 1) as usize] += 1;
            }
            c
        }
    };
    let mut targets = Vec::new();
    for (i, &k) in counts.iter().enumerate() {
        targets.extend(std::iter::repeat_n(first_leaf + i, k as usize));
    }
    if targets.is_empty() {
        return Err(WormsError::EmptyInstance);
    }
    WormsInstance::from_parts(&parents, targets, spec.p, spec.b)
}

/// Constants of the hardness gadget for a 3-partition input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreePartitionGadget {
    pub items: Vec<u64>,
    pub k: u64,
    pub n_prime: u64,
    pub x: u64,
    pub b: u64,
    pub m1: u64,
    pub c1: u64,
    pub m2: u64,
    pub c2: u64,
}

impl ThreePartitionGadget {
    pub fn new(items: &[u64], k: u64) -> Result<Self> {
        let bad = |why: String| Err(WormsError::InvalidThreePartition(why));
        if items.is_empty() || !items.len().is_multiple_of(3) {
            return bad(format!("{} items is not a positive multiple of 3", items.len()));
        }
        let n = (items.len() / 3) as u64;
        let sum: u64 = items.iter().sum();
        if sum != n * k {
            return bad(format!("items sum to {sum}, expected n' K = {}", n * k));
        }
        if let Some(&i) = items.iter().find(|&&i| !(4 * i > k && 2 * i < k)) {
            return bad(format!("item {i} is not strictly between K/4 and K/2"));
        }
        let overflow = || WormsError::InvalidThreePartition("gadget constants overflow".into());
        let x = 12u64.checked_mul(n * n).and_then(|v| v.checked_mul(k)).ok_or_else(overflow)?;
        let b = 3 * x + k;
        let m1 = n * k + 3 * n * x;
        let c1: u64 = (1..=n).map(|i| 4 * (i - 1) * b + 9 * x + 4 * k).sum();
        let m2 = 8 * n * m1 + c1;
        // sum_{i=1}^{m2} 2i = m2 (m2 + 1)
        let c2 = c1
            .checked_add(4 * n * m2)
            .and_then(|v| v.checked_add(m2.checked_mul(m2 + 1)?))
            .ok_or_else(overflow)?;
        Ok(ThreePartitionGadget { items: items.to_vec(), k, n_prime: n, x, b, m1, c1, m2, c2 })
    }

    pub fn x_node(&self) -> usize {
        1
    }

    /// Leaf receiving the messages of item `i`.
    pub fn item_leaf(&self, i: usize) -> usize {
        2 + i
    }

    /// Root `0`, middle node `1`, item leaves `2..3n'+2`, then one path of
    /// length two per padding message. P = 1.
    pub fn instance(&self) -> Result<WormsInstance> {
        let nitems = self.items.len();
        let mut parents: Vec<Option<usize>> = vec![None, Some(0)];
        parents.extend(std::iter::repeat_n(Some(1), nitems));
        let mut targets = Vec::with_capacity((self.m1 + self.m2) as usize);
        for (i, &a) in self.items.iter().enumerate() {
            targets.extend(std::iter::repeat_n(self.item_leaf(i), (self.x + a) as usize));
        }
        for _ in 0..self.m2 {
            let mid = parents.len();
            parents.push(Some(0));
            parents.push(Some(mid));
            targets.push(mid + 1);
        }
        WormsInstance::from_parts(&parents, targets, 1, self.b as usize)
    }

    /// Messages of item `i`, by id.
    pub fn item_messages(&self, i: usize) -> std::ops::Range<usize> {
        let before: u64 = self.items[..i].iter().map(|&a| self.x + a).sum();
        before as usize..(before + self.x + self.items[i]) as usize
    }

    /// Schedule from a partition into triples: each triple goes to the
    /// middle node in one flush and then out to its three leaves; padding
    /// messages follow one at a time.
    pub fn canonical_schedule(&self, triples: &[[usize; 3]]) -> Schedule {
        let mut steps = Vec::new();
        for t in triples {
            let mut all: Vec<usize> = t.iter().flat_map(|&i| self.item_messages(i)).collect();
            all.sort_unstable();
            steps.push(vec![Flush::new(0, 1, all)]);
            for &i in t {
                steps.push(vec![Flush::new(1, self.item_leaf(i), self.item_messages(i).collect())]);
            }
        }
        let first_pad = 2 + self.items.len();
        for j in 0..self.m2 as usize {
            let m = self.m1 as usize + j;
            let mid = first_pad + 2 * j;
            steps.push(vec![Flush::new(0, mid, vec![m])]);
            steps.push(vec![Flush::new(mid, mid + 1, vec![m])]);
        }
        Schedule::new(steps)
    }
}

/// Backtracking search for a partition of `items` into triples summing to
/// `k` each; returns index triples.
pub fn find_three_partition(items: &[u64], k: u64) -> Option<Vec<[usize; 3]>> {
    if !items.len().is_multiple_of(3) {
        return None;
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(items[i]));
    let mut used = vec![false; items.len()];
    let mut out = Vec::new();

    fn rec(items: &[u64], k: u64, order: &[usize], used: &mut [bool], out: &mut Vec<[usize; 3]>) -> bool {
        let Some(pos) = order.iter().position(|&i| !used[i]) else { return true };
        let a = order[pos];
        used[a] = true;
        for (pi, &b) in order.iter().enumerate().skip(pos + 1) {
            if used[b] || items[a] + items[b] >= k {
                continue;
            }
            used[b] = true;
            for &c in &order[pi + 1..] {
                if !used[c] && items[a] + items[b] + items[c] == k {
                    used[c] = true;
                    out.push([a, b, c]);
                    if rec(items, k, order, used, out) {
                        return true;
                    }
                    out.pop();
                    used[c] = false;
                }
            }
            used[b] = false;
        }
        used[a] = false;
        false
    }

    rec(items, k, &order, &mut used, &mut out).then_some(out)
}

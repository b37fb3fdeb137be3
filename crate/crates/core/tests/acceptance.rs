//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console.

mod common;

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::process::ExitCode;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::Zero;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::*;
use worms::conversion::{convert_traced, PackingMode};
use worms::gen::{find_three_partition, generate_random, GeneratorSpec, LeafLaw, ThreePartitionGadget};
use worms::oracle::{brute_force_outtree, brute_force_worms, for_each_task_schedule, SearchBudget};
use worms::outtree::{
    fractional_cost, horn_schedule, horns_trees, mphtf_schedule, phtf_schedule, weighted_completion_cost,
    OuttreeInstance,
};
use worms::pipeline::{run_algorithm, Algorithm, PipelineOptions};
use worms::reduction::{lift_task_schedule, reduce_worms_to_outtree};
use worms::{schedule_cost, validate_schedule, WormsInstance};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

// ---- independent oracles ----

/// Minimum of `sum_j weight_j * C_j` over schedules of nonempty steps, by DP
/// over completed sets. Each step costs the weight still outstanding.
fn dp_min<W>(inst: &OuttreeInstance, weight: &[W]) -> W
where
    W: Clone + Zero + PartialOrd + for<'a> std::ops::Add<&'a W, Output = W>,
{
    let n = inst.len();
    let full = (1usize << n) - 1;
    let mut best: Vec<Option<W>> = vec![None; full + 1];
    best[full] = Some(W::zero());
    for mask in (0..full).rev() {
        let open: W = (0..n).filter(|j| mask & (1 << j) == 0).fold(W::zero(), |a, j| a + &weight[j]);
        let ready: Vec<usize> = (0..n)
            .filter(|&j| mask & (1 << j) == 0 && inst.parent(j).is_none_or(|q| mask & (1 << q) != 0))
            .collect();
        let mut m: Option<W> = None;
        for pick in 1usize..(1 << ready.len()) {
            if pick.count_ones() as usize > inst.p() {
                continue;
            }
            let next = ready.iter().enumerate().filter(|(i, _)| pick & (1 << i) != 0).fold(mask, |a, (_, &j)| a | (1 << j));
            let c = open.clone() + best[next].as_ref().unwrap();
            if m.as_ref().is_none_or(|x| c < *x) {
                m = Some(c);
            }
        }
        best[mask] = m;
    }
    best[0].clone().unwrap()
}

fn outtree_opt(inst: &OuttreeInstance) -> u64 {
    let w: Vec<u64> = (0..inst.len()).map(|j| inst.weight(j)).collect();
    dp_min(inst, &w)
}

fn fractional_opt(inst: &OuttreeInstance) -> BigRational {
    let forest = horns_trees(inst);
    let w: Vec<BigRational> =
        (0..inst.len()).map(|j| forest.trees[forest.tree_of[j]].density().to_rational()).collect();
    dp_min(inst, &w)
}

/// Exact optimum when `|M| <= B`: no limit can bind, so flushing a whole
/// co-located group is never worse than part of it, and using more edges
/// per step is never worse than fewer. Dijkstra over message positions.
fn worms_opt(inst: &WormsInstance) -> u64 {
    assert!(inst.num_messages() <= inst.b());
    let tree = inst.tree();
    let start: Vec<usize> = vec![tree.root(); inst.num_messages()];
    let mut dist: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start.clone(), 0);
    heap.push(Reverse((0u64, start)));
    while let Some(Reverse((d, at))) = heap.pop() {
        if dist.get(&at).is_some_and(|&x| x < d) {
            continue;
        }
        let open = (0..at.len()).filter(|&m| at[m] != inst.target(m)).count() as u64;
        if open == 0 {
            return d;
        }
        let mut edges: Vec<(usize, usize)> = (0..at.len())
            .filter(|&m| at[m] != inst.target(m))
            .map(|m| (at[m], inst.path_node(m, tree.depth(at[m]) + 1)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let k = edges.len().min(inst.p());
        for pick in 1usize..(1 << edges.len()) {
            if pick.count_ones() as usize != k {
                continue;
            }
            let mut next = at.clone();
            for (i, &(v, c)) in edges.iter().enumerate() {
                if pick & (1 << i) != 0 {
                    for m in 0..next.len() {
                        if at[m] == v && next[m] == v && m_heads(inst, m, v) == c {
                            next[m] = c;
                        }
                    }
                }
            }
            let nd = d + open;
            if dist.get(&next).is_none_or(|&x| nd < x) {
                dist.insert(next.clone(), nd);
                heap.push(Reverse((nd, next)));
            }
        }
    }
    unreachable!("every message can reach its leaf")
}

fn m_heads(inst: &WormsInstance, m: usize, v: usize) -> usize {
    if v == inst.target(m) {
        return usize::MAX;
    }
    inst.path_node(m, inst.tree().depth(v) + 1)
}

// ---- corpora ----

fn conversion_corpus() -> Vec<WormsInstance> {
    let mut out = Vec::new();
    let mut rng = StdRng::seed_from_u64(0x5eed_c0de);
    for i in 0..200u64 {
        let b = [12, 13, 24, 60][(i % 4) as usize];
        let p = 1 + (i % 4) as usize;
        if i % 2 == 0 {
            let law = match (i / 2) % 4 {
                0 => LeafLaw::Uniform { lo: 0, hi: 30 },
                1 => LeafLaw::Zipf { s: 1.1, max: 100 },
                2 => LeafLaw::Constant { c: 1 + i % 17 },
                _ => LeafLaw::Scatter { total: 100 + 5 * i },
            };
            let spec = GeneratorSpec { seed: i, height: 2 + (i % 3) as usize, fanout: 2 + (i % 3) as usize, law, b, p };
            out.push(generate_random(&spec).unwrap());
        } else {
            let h = rng.gen_range(1..=4);
            let msgs = rng.gen_range(1..=400);
            out.push(random_worms(&mut rng, h, 4, msgs, p, b));
        }
    }
    out
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 }
}

// ---- criteria ----

fn horn_optimality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let budget = SearchBudget::default();
    for case in 0..500 {
        let n = rng.gen_range(1..=8);
        let inst = random_outtree(&mut rng, n, 9, 1);
        let horn = weighted_completion_cost(&inst, &horn_schedule(&inst).unwrap()).unwrap();
        let opt = outtree_opt(&inst);
        let (_, brute) = brute_force_outtree(&inst, &budget).map_err(|e| e.to_string())?;
        if brute != opt {
            return Err(format!("case {case}: brute force {brute} disagrees with DP {opt}"));
        }
        if horn != opt {
            return Err(format!("case {case}: horn {horn} vs optimum {opt}"));
        }
    }
    Ok("500 instances, horn cost equals the optimum".into())
}

fn phtf_fractional_optimality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let budget = SearchBudget { max_states: 5_000_000, ..SearchBudget::default() };
    let mut enumerated = 0usize;
    for case in 0..200 {
        let n = rng.gen_range(1..=7);
        let p = rng.gen_range(1..=2);
        let inst = random_outtree(&mut rng, n, 9, p);
        let forest = horns_trees(&inst);
        let ph = fractional_cost(&inst, &phtf_schedule(&inst), &forest).unwrap();
        let dp = fractional_opt(&inst);
        if ph > dp {
            return Err(format!("case {case}: PHTF cost^f {ph} above the optimum {dp} on {}", inst.to_json()));
        }
        let mut worse: Option<BigRational> = None;
        enumerated += for_each_task_schedule(&inst, &budget, |s| {
            let f = fractional_cost(&inst, s, &forest).unwrap();
            if f < ph && worse.is_none() {
                worse = Some(f);
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(f) = worse {
            return Err(format!("case {case}: a schedule has cost^f {f} below PHTF {ph}"));
        }
    }
    Ok(format!("200 instances, {enumerated} schedules enumerated"))
}

fn fractional_dominance() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    for case in 0..100 {
        let n = rng.gen_range(1..=12);
        let p = rng.gen_range(1..=3);
        let inst = random_outtree(&mut rng, n, 9, p);
        let forest = horns_trees(&inst);
        for _ in 0..100 {
            let s = random_task_schedule(&mut rng, &inst);
            let f = fractional_cost(&inst, &s, &forest).unwrap();
            let c = weighted_completion_cost(&inst, &s).unwrap();
            if f > BigRational::from_integer(c.into()) {
                return Err(format!("case {case}: cost^f {f} > cost {c}"));
            }
        }
    }
    Ok("10000 schedules over 100 instances".into())
}

fn mphtf_approximation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for case in 0..300 {
        let n = rng.gen_range(1..=7);
        let p = rng.gen_range(1..=3);
        let inst = random_outtree(&mut rng, n, 9, p);
        let m = mphtf_schedule(&inst);
        let cost = weighted_completion_cost(&inst, &m).unwrap();
        let opt = outtree_opt(&inst);
        if cost > 4 * opt {
            return Err(format!("case {case}: mphtf {cost} > 4 x {opt}"));
        }
        let ph = phtf_schedule(&inst).makespan();
        if m.makespan() > 2 * ph {
            return Err(format!("case {case}: makespan {} > 2 x {ph}", m.makespan()));
        }
        if opt > 0 {
            worst = worst.max(cost as f64 / opt as f64);
        }
    }
    Ok(format!("300 instances, worst ratio {worst:.3}"))
}

fn reduction_cost_preservation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    for case in 0..200 {
        let h = rng.gen_range(1..=3);
        let msgs = rng.gen_range(1..=40);
        let p = rng.gen_range(1..=3);
        let b = [12, 24][rng.gen_range(0..2)];
        let inst = random_worms(&mut rng, h, 3, msgs, p, b);
        let (ot, map) = reduce_worms_to_outtree(&inst);
        for _ in 0..3 {
            let sigma = random_task_schedule(&mut rng, &ot);
            let lifted = lift_task_schedule(&inst, &ot, &map, &sigma).map_err(|e| e.to_string())?;
            let a = schedule_cost(&inst, &lifted).map_err(|e| e.to_string())?;
            let w = weighted_completion_cost(&ot, &sigma).unwrap();
            if a != w {
                return Err(format!("case {case}: lifted cost {a} vs task cost {w}"));
            }
        }
    }
    Ok("200 instances, 600 schedules".into())
}

struct Converted {
    ratio: f64,
    breaches: Vec<String>,
}

fn convert_corpus(corpus: &[WormsInstance]) -> Result<Vec<Converted>, String> {
    let per = |inst: &WormsInstance| -> Result<Converted, String> {
        let (ot, map) = reduce_worms_to_outtree(inst);
        let lifted = lift_task_schedule(inst, &ot, &map, &mphtf_schedule(&ot)).map_err(|e| e.to_string())?;
        let c = convert_traced(inst, &lifted, PackingMode::default()).map_err(|e| e.to_string())?;
        let r = validate_schedule(inst, &c.schedule);
        if !r.is_valid {
            return Err(format!("invalid output: {:?}", r.violations.first()));
        }
        let base = schedule_cost(inst, &lifted).map_err(|e| e.to_string())?;
        let mut breaches = c.audit(inst, &lifted);
        let taus: u64 = (0..inst.num_messages()).map(|m| c.packing.tau(m).unwrap() as u64).sum();
        if taus > 2 * base {
            breaches.push(format!("sum of tau {taus} > 2c = {}", 2 * base));
        }
        Ok(Converted { ratio: r.total_cost as f64 / base as f64, breaches })
    };
    worms::batch::map(corpus, per).into_iter().collect()
}

fn conversion_validity(results: &Result<Vec<Converted>, String>) -> Outcome {
    let rs = results.as_ref().map_err(Clone::clone)?;
    let mut ratios: Vec<f64> = rs.iter().map(|c| c.ratio).collect();
    if let Some(r) = ratios.iter().find(|&&r| r > 169.0) {
        return Err(format!("ratio {r} above 169"));
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(format!("{} instances valid, ratio median {:.3} max {:.3}", rs.len(), median(&mut ratios), max))
}

fn lemma_audits(results: &Result<Vec<Converted>, String>) -> Outcome {
    let rs = results.as_ref().map_err(Clone::clone)?;
    let bad: Vec<&String> = rs.iter().flat_map(|c| &c.breaches).collect();
    match bad.first() {
        Some(b) => Err(format!("{} breaches, first: {b}", bad.len())),
        None => Ok(format!("{} instances, no breaches", rs.len())),
    }
}

fn end_to_end() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let budget = SearchBudget::default();
    let mut ratios = Vec::new();
    for case in 0..50 {
        let h = rng.gen_range(1..=3);
        let msgs = rng.gen_range(1..=8);
        let p = rng.gen_range(1..=2);
        let inst = random_worms(&mut rng, h, 2, msgs, p, 12);
        let opt = worms_opt(&inst);
        let (_, brute) = brute_force_worms(&inst, &budget).map_err(|e| e.to_string())?;
        if brute != opt {
            return Err(format!("case {case}: brute force {brute} disagrees with search {opt}"));
        }
        let run = run_algorithm(&inst, Algorithm::Pipeline, &PipelineOptions::default()).map_err(|e| e.to_string())?;
        let ratio = run.cost() as f64 / opt as f64;
        if ratio > 4.0 * 169.0 * 169.0 {
            return Err(format!("case {case}: ratio {ratio}"));
        }
        ratios.push(ratio);
    }
    let med = median(&mut ratios);
    let flag = if med <= 8.0 { "" } else { " (median above 8, regression guard)" };
    Ok(format!("50 instances, ratio median {med:.3} max {:.3}{flag}", ratios.last().unwrap()))
}

fn gadget_sanity() -> Outcome {
    let items = [4u64, 4, 4];
    let k = 12u64;
    let g = ThreePartitionGadget::new(&items, k).map_err(|e| e.to_string())?;
    let n = items.len() as u64 / 3;
    let x = 12 * n * n * k;
    let b = 3 * x + k;
    let m1 = n * k + 3 * n * x;
    let c1: u64 = (1..=n).map(|i| 4 * (i - 1) * (3 * x + k) + 9 * x + 4 * k).sum();
    let m2 = 8 * n * m1 + c1;
    let c2 = c1 + 4 * n * m2 + (1..=m2).map(|i| 2 * i).sum::<u64>();
    let want = (x, b, m1, c1, m2, c2);
    let got = (g.x, g.b, g.m1, g.c1, g.m2, g.c2);
    if got != want || c1 != 1344 || c2 != 23_996_640 {
        return Err(format!("constants {got:?} vs {want:?}"));
    }
    let inst = g.instance().map_err(|e| e.to_string())?;
    let triples = find_three_partition(&items, k).ok_or("no 3-partition found")?;
    let s = g.canonical_schedule(&triples);
    let r = validate_schedule(&inst, &s);
    if !r.is_valid {
        return Err(format!("canonical schedule invalid: {:?}", r.violations.first()));
    }
    let done: Vec<u64> = (0..m1 as usize).map(|m| r.completion_time[m].unwrap_or(usize::MAX) as u64).collect();
    let max = *done.iter().max().unwrap();
    let cost: u64 = done.iter().sum();
    if max != 4 * n || cost > c1 {
        return Err(format!("M1 max completion {max}, cost {cost}"));
    }
    Ok(format!("X={x} B={b} C1={c1} |M2|={m2} C2={c2}; M1 cost {cost}"))
}

fn performance() -> Outcome {
    let time = |total: u64| -> Result<f64, String> {
        let spec = GeneratorSpec { seed: 10, height: 5, fanout: 16, law: LeafLaw::Scatter { total }, b: 60, p: 4 };
        let inst = generate_random(&spec).map_err(|e| e.to_string())?;
        let mut best = f64::MAX;
        for _ in 0..2 {
            let t = Instant::now();
            run_algorithm(&inst, Algorithm::Pipeline, &PipelineOptions::default()).map_err(|e| e.to_string())?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        Ok(best)
    };
    let a = time(100_000)?;
    let b = time(200_000)?;
    let msg = format!("1e5 messages {a:.2}s, 2e5 messages {b:.2}s, growth {:.2}x", b / a);
    if a >= 10.0 || b >= 3.0 * a {
        return Err(msg);
    }
    Ok(msg)
}

fn main() -> ExitCode {
    let corpus = conversion_corpus();
    let converted = convert_corpus(&corpus);
    let criteria: Vec<Criterion> = vec![
        ("horn optimality", Box::new(horn_optimality)),
        ("phtf fractional optimality", Box::new(phtf_fractional_optimality)),
        ("fractional dominance", Box::new(fractional_dominance)),
        ("mphtf 4-approximation", Box::new(mphtf_approximation)),
        ("reduction cost preservation", Box::new(reduction_cost_preservation)),
        ("conversion validity and bound", Box::new(|| conversion_validity(&converted))),
        ("intermediate audits", Box::new(|| lemma_audits(&converted))),
        ("end-to-end approximation", Box::new(end_to_end)),
        ("hardness gadget", Box::new(gadget_sanity)),
        ("performance envelope", Box::new(performance)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

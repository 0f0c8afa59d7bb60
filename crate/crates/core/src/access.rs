//! Bounded search for admissible paths that bring every starting
//! constraint value in `{1..K}^q` to a common state `s_o`, ending with a
//! permutation of all `p` marks.
//!
//! A path is a prefix of real marks, a run of auxiliary marks (always
//! admissible, no jump) that pads every path to the same length `m`, and a
//! suffix visiting each mark once. The suffix starting at `s'` ends at
//! `s' + Σ_i J(i)`, so a candidate `s_o` fixes `s' = s_o - Σ_i J(i)`; the
//! prefixes are then read off one reverse breadth-first search from `s'`.
//!
//! Candidates for `s_o` are tried from [`ModelSpec::free_corner`] outward
//! (by L1 distance, then lexicographically) inside the box
//! `{1, …, K + max_len·J̄}^q`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Default cap on lattice nodes visited before giving up.
pub const DEFAULT_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub start: Vec<i64>,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum AccessVerdict {
    Success {
        s_o: Vec<i64>,
        m: usize,
        witnesses: Vec<Witness>,
    },
    Failure {
        unreachable: Vec<i64>,
        reason: String,
    },
    Inconclusive {
        reason: String,
    },
}

impl AccessVerdict {
    pub fn is_success(&self) -> bool {
        matches!(self, AccessVerdict::Success { .. })
    }
}

/// Dense index over the box `{1..side}^q`.
struct Lattice {
    side: i64,
    q: usize,
    size: usize,
}

impl Lattice {
    fn contains(&self, s: &[i64]) -> bool {
        s.iter().all(|&v| v >= 1 && v <= self.side)
    }

    fn index(&self, s: &[i64]) -> usize {
        s.iter().fold(0usize, |acc, &v| acc * self.side as usize + (v - 1) as usize)
    }

    fn point(&self, mut idx: usize) -> Vec<i64> {
        let mut s = vec![0; self.q];
        for k in (0..self.q).rev() {
            s[k] = (idx % self.side as usize) as i64 + 1;
            idx /= self.side as usize;
        }
        s
    }
}

/// Every point of `{1..k}^q` in lexicographic order.
fn cube(k: i64, q: usize) -> Vec<Vec<i64>> {
    let lat = Lattice {
        side: k,
        q,
        size: (k as usize).pow(q as u32),
    };
    (0..lat.size).map(|i| lat.point(i)).collect()
}

fn add(s: &[i64], j: &[i64]) -> Vec<i64> {
    s.iter().zip(j).map(|(a, b)| a + b).collect()
}

/// Admissible ordering of all marks starting from `s`, if any.
fn permutation_suffix(spec: &ModelSpec, s: &[i64]) -> Option<Vec<usize>> {
    let p = spec.p;
    let mut dead = vec![false; 1usize << p];
    let mut path = Vec::with_capacity(p);

    fn dfs(spec: &ModelSpec, s: &[i64], mask: usize, dead: &mut [bool], path: &mut Vec<usize>) -> bool {
        if mask == (1usize << spec.p) - 1 {
            return true;
        }
        if dead[mask] {
            return false;
        }
        for j in 1..=spec.p {
            if mask & (1 << (j - 1)) != 0 || spec.is_blocked(j, s) {
                continue;
            }
            let next = add(s, &spec.jumps[j - 1]);
            if next.iter().any(|&v| v < 1) {
                continue;
            }
            path.push(j);
            if dfs(spec, &next, mask | (1 << (j - 1)), dead, path) {
                return true;
            }
            path.pop();
        }
        dead[mask] = true;
        false
    }

    dfs(spec, s, 0, &mut dead, &mut path).then_some(path)
}

/// Searches for `s_o` and witness paths of length at most `max_len`.
pub fn check_access(spec: &ModelSpec, k: i64, max_len: usize) -> Result<AccessVerdict> {
    check_access_with_budget(spec, k, max_len, DEFAULT_BUDGET)
}

pub fn check_access_with_budget(spec: &ModelSpec, k: i64, max_len: usize, budget: u64) -> Result<AccessVerdict> {
    let (p, q) = (spec.p, spec.q);
    if q == 0 {
        return Err(Error::Shape("admissible-path search needs q >= 1".into()));
    }
    if k < 1 {
        return Err(Error::Shape(format!("K must be >= 1, got {k}")));
    }
    if max_len < p + 1 {
        return Ok(AccessVerdict::Failure {
            unreachable: vec![1; q],
            reason: format!("max_len {max_len} is below the minimum path length p + 1 = {}", p + 1),
        });
    }

    let jbar = spec
        .jumps
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<i64>())
        .max()
        .unwrap_or(0);
    let side = k + max_len as i64 * jbar;
    let size = (side as u128).checked_pow(q as u32).unwrap_or(u128::MAX);
    if size > budget as u128 {
        return Ok(AccessVerdict::Inconclusive {
            reason: format!("search box {side}^{q} exceeds the budget of {budget} states"),
        });
    }
    let lat = Lattice {
        side,
        q,
        size: size as usize,
    };
    let total_jump = spec.total_jump();
    let starts = cube(k, q);
    let max_prefix = max_len - p;

    let corner = spec.free_corner();
    let mut candidates: Vec<Vec<i64>> = (0..lat.size).map(|i| lat.point(i)).collect();
    candidates.sort_by_key(|s| {
        let l1: i64 = s.iter().zip(&corner).map(|(a, b)| (a - b).abs()).sum();
        (l1, s.clone())
    });
    if !lat.contains(&corner) {
        candidates.insert(0, corner.clone());
    }

    let mut first_failure: Option<(Vec<i64>, String)> = None;
    let mut visited: u64 = 0;
    let mut dist = vec![u32::MAX; lat.size];
    let mut next_mark = vec![0usize; lat.size];
    let mut queue = VecDeque::new();

    for s_o in candidates {
        let pivot: Vec<i64> = s_o.iter().zip(&total_jump).map(|(a, b)| a - b).collect();
        if !lat.contains(&pivot) {
            first_failure.get_or_insert_with(|| (starts[0].clone(), format!("s_o = {s_o:?} needs suffix start {pivot:?} outside the search box")));
            continue;
        }
        let Some(suffix) = permutation_suffix(spec, &pivot) else {
            first_failure.get_or_insert_with(|| (starts[0].clone(), format!("no admissible ordering of all marks from {pivot:?}")));
            continue;
        };

        dist.iter_mut().for_each(|d| *d = u32::MAX);
        queue.clear();
        let root = lat.index(&pivot);
        dist[root] = 0;
        queue.push_back(pivot.clone());
        while let Some(cur) = queue.pop_front() {
            visited += 1;
            if visited > budget {
                return Ok(AccessVerdict::Inconclusive {
                    reason: format!("visited more than {budget} lattice states"),
                });
            }
            let d = dist[lat.index(&cur)];
            if d as usize >= max_prefix {
                continue;
            }
            for j in 1..=p {
                let prev: Vec<i64> = cur.iter().zip(&spec.jumps[j - 1]).map(|(a, b)| a - b).collect();
                if !lat.contains(&prev) || spec.is_blocked(j, &prev) {
                    continue;
                }
                let idx = lat.index(&prev);
                if dist[idx] == u32::MAX {
                    dist[idx] = d + 1;
                    next_mark[idx] = j;
                    queue.push_back(prev);
                }
            }
        }

        if let Some(bad) = starts.iter().find(|s| dist[lat.index(s)] == u32::MAX) {
            first_failure.get_or_insert_with(|| {
                (bad.clone(), format!("no admissible path of length <= {max_len} from {bad:?} to s_o = {s_o:?}"))
            });
            continue;
        }

        let longest = starts.iter().map(|s| dist[lat.index(s)] as usize).max().unwrap_or(0);
        let m = (longest + p).max(p + 1);
        let witnesses = starts
            .iter()
            .map(|start| {
                let mut path = Vec::with_capacity(m);
                let mut cur = start.clone();
                while cur != pivot {
                    let j = next_mark[lat.index(&cur)];
                    path.push(j);
                    cur = add(&cur, &spec.jumps[j - 1]);
                }
                path.resize(m - p, 0);
                path.extend_from_slice(&suffix);
                Witness {
                    start: start.clone(),
                    path,
                }
            })
            .collect();
        return Ok(AccessVerdict::Success { s_o, m, witnesses });
    }

    let (unreachable, reason) = first_failure.unwrap_or_else(|| (starts[0].clone(), "no candidate s_o".into()));
    Ok(AccessVerdict::Failure { unreachable, reason })
}

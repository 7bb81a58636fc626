//! Brute-force reimplementation of the sharing rules in integer arithmetic.
//!
//! Every fraction lives on the `1/Q` grid, so floors are exact integer
//! divisions and the float code in the crate has an independent check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use copss::sharing::{Grant, SbsReport};
use copss::topology::{AdjacencyMatrix, Operator};
use rand::seq::SliceRandom;
use rand::Rng;

pub type Grants = BTreeMap<usize, BTreeSet<usize>>;

#[derive(Debug, Clone)]
pub struct Case {
    pub k: usize,
    pub q: usize,
    /// Sharing factor times `q`.
    pub s: usize,
    pub ops: Vec<usize>,
    pub ids: Vec<usize>,
    /// BWU times `q`; `q` means overloaded.
    pub load: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl Case {
    pub fn random<R: Rng>(rng: &mut R, max_k: usize, max_q: usize, max_n: usize) -> Case {
        let k = rng.random_range(2..=max_k);
        let q = rng.random_range(1..=max_q);
        let n = rng.random_range(1..=max_n);
        let p_edge: f64 = rng.random();
        let p_full: f64 = rng.random();
        let mut ids: Vec<usize> = (0..3 * n).collect();
        ids.shuffle(rng);
        ids.truncate(n);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p_edge) {
                    edges.push((i, j));
                }
            }
        }
        Case {
            k,
            q,
            s: rng.random_range(0..=q),
            ops: (0..n).map(|_| rng.random_range(0..k)).collect(),
            ids,
            load: (0..n).map(|_| if rng.random_bool(p_full) { q } else { rng.random_range(0..=q) }).collect(),
            edges,
        }
    }

    pub fn n(&self) -> usize {
        self.ops.len()
    }

    pub fn operators(&self) -> Vec<Operator> {
        let s = self.s as f64 / self.q as f64;
        (0..self.k).map(|id| Operator { id, sharing_factor: s, band: id * self.q..(id + 1) * self.q }).collect()
    }

    pub fn reports(&self) -> Vec<SbsReport> {
        (0..self.n())
            .map(|i| SbsReport { sbs_id: self.ids[i], operator_id: self.ops[i], bwu: self.load[i] as f64 / self.q as f64 })
            .collect()
    }

    pub fn adjacency(&self) -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(self.n(), &self.edges)
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.edges.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
    }

    pub fn full(&self, i: usize) -> bool {
        self.load[i] == self.q
    }

    fn nbrs(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| j != i && self.adjacent(i, j)).collect()
    }

    /// Free PRBs of donor `k` given the SBSs in `scope`, times `q`.
    pub fn free(&self, k: usize, scope: &[usize]) -> usize {
        let busiest = scope.iter().filter(|&&j| self.ops[j] == k).map(|&j| self.load[j]).max();
        let w = self.q - busiest.unwrap_or(0);
        w.min(self.s)
    }

    /// The first `n` free PRBs of donor `k`, walking away from its occupied part.
    pub fn free_list(&self, k: usize, n: usize) -> Vec<usize> {
        let lo = k * self.q;
        let hi = lo + self.q;
        if k % 2 == 0 {
            (hi - n..hi).collect()
        } else {
            (lo..lo + n).rev().collect()
        }
    }

    fn slice(&self, k: usize, n: usize, offset: usize, count: usize) -> BTreeSet<usize> {
        self.free_list(k, n).into_iter().skip(offset).take(count).collect()
    }

    fn neighbourhood(&self, i: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
        let nb = self.nbrs(i);
        let over: Vec<usize> = nb.iter().copied().filter(|&j| self.full(j)).collect();
        let under: Vec<usize> = nb.iter().copied().filter(|&j| !self.full(j)).collect();
        let hat: BTreeSet<usize> = over.iter().map(|&j| self.ops[j]).collect();
        let check: Vec<usize> = (0..self.k).filter(|k| *k != self.ops[i] && !hat.contains(k)).collect();
        (over, under, hat.into_iter().collect(), check)
    }
}

/// Equal split of each donor's building-wide free part.
pub fn equal(c: &Case) -> Grants {
    let mut plus: Vec<usize> = (0..c.n()).filter(|&i| c.full(i)).collect();
    plus.sort_by_key(|&i| (c.ops[i], c.ids[i]));
    let all: Vec<usize> = (0..c.n()).collect();
    let mut out = Grants::new();
    for (rank, &i) in plus.iter().enumerate() {
        let mut g = BTreeSet::new();
        for k in (0..c.k).filter(|&k| k != c.ops[i]) {
            let n = c.free(k, &all);
            let share = n / plus.len();
            g.extend(c.slice(k, n, rank * share, share));
        }
        out.insert(i, g);
    }
    out
}

fn decentralized_one(c: &Case, i: usize) -> BTreeSet<usize> {
    let mut g = BTreeSet::new();
    if c.nbrs(i).is_empty() {
        for k in (0..c.k).filter(|&k| k != c.ops[i]) {
            g.extend(c.slice(k, c.s, 0, c.s));
        }
        return g;
    }
    let (_, under, mut claimants, check) = c.neighbourhood(i);
    if !claimants.contains(&c.ops[i]) {
        claimants.push(c.ops[i]);
        claimants.sort_unstable();
    }
    let rank = claimants.iter().position(|&k| k == c.ops[i]).unwrap();
    for k in check {
        let n = c.free(k, &under);
        let share = n / claimants.len();
        g.extend(c.slice(k, n, rank * share, share));
    }
    g
}

/// Per-vertex rule from the neighbours' reports.
pub fn decentralized(c: &Case) -> Grants {
    (0..c.n()).filter(|&i| c.full(i)).map(|i| (i, decentralized_one(c, i))).collect()
}

/// Graph rule: split among adjacent overloaded SBSs, then drop PRBs held by
/// an adjacent overloaded SBS, one vertex at a time.
pub fn centralized(c: &Case) -> Grants {
    let full: Vec<usize> = (0..c.n()).filter(|&i| c.full(i)).collect();
    if full.len() < 2 {
        return decentralized(c);
    }
    let mut out = Grants::new();
    for &i in &full {
        let (over, under, _, check) = c.neighbourhood(i);
        let rank = over.iter().filter(|&&j| (c.ops[j], c.ids[j]) < (c.ops[i], c.ids[i])).count();
        let mut g = BTreeSet::new();
        for k in check {
            let n = c.free(k, &under);
            let share = n / (over.len() + 1);
            g.extend(c.slice(k, n, rank * share, share));
        }
        out.insert(i, g);
    }
    for &i in &full {
        let taken: BTreeSet<usize> = full.iter().filter(|&&j| c.adjacent(i, j)).flat_map(|j| out[j].clone()).collect();
        let g = out.get_mut(&i).unwrap();
        g.retain(|p| !taken.contains(p));
    }
    out
}

pub fn to_map(grants: &[Grant]) -> Grants {
    grants.iter().map(|g| (g.sbs, g.prbs.iter().collect())).collect()
}

/// Building-wide conservation of the equal split: per donor, the PRBs loaned
/// out never exceed its free part.
pub fn equal_conserves(c: &Case, g: &Grants) -> bool {
    let all: Vec<usize> = (0..c.n()).collect();
    (0..c.k).all(|k| {
        let loaned: usize = g.values().map(|s| s.iter().filter(|&&p| p / c.q == k).count()).sum();
        loaned <= c.free(k, &all)
    })
}

/// Neighbourhood conservation: each vertex's slice from donor `k`, times the
/// number of claimants sharing that donor, fits in the free part it sees.
pub fn neighbourhood_conserves(c: &Case, g: &Grants, graph_rule: bool) -> bool {
    g.iter().all(|(&i, set)| {
        if c.nbrs(i).is_empty() {
            return set.len() <= (c.k - 1) * c.s;
        }
        let (over, under, hat, _) = c.neighbourhood(i);
        let claimants = if graph_rule { over.len() + 1 } else { hat.len() + usize::from(!hat.contains(&c.ops[i])) };
        (0..c.k).all(|k| {
            let n = c.free(k, &under);
            let mine: Vec<usize> = set.iter().copied().filter(|&p| p / c.q == k).collect();
            let allowed: BTreeSet<usize> = c.free_list(k, n).into_iter().collect();
            mine.len() * claimants <= n && mine.iter().all(|p| allowed.contains(p))
        })
    })
}

/// Pairs of adjacent SBSs holding a common PRB.
pub fn adjacent_collisions(c: &Case, g: &Grants) -> usize {
    let keys: Vec<usize> = g.keys().copied().collect();
    let mut hits = 0;
    for (a, &i) in keys.iter().enumerate() {
        for &j in &keys[a + 1..] {
            if c.adjacent(i, j) && !g[&i].is_disjoint(&g[&j]) {
                hits += 1;
            }
        }
    }
    hits
}

//! The four PRB sharing algorithms and the mapping from grant counts to
//! concrete PRB indices.
//!
//! A donor operator `k` lends from its free sub-band: the `⌊min(W_k, S_k)·Q⌋`
//! PRBs at the end of its band opposite its allocation anchor, listed from the
//! inner boundary outwards. Claimants of the same donor take contiguous,
//! equally sized slices of that list in claimant order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::{allocation_anchor, tail_count, Anchor, FRACTION_EPS};
use crate::topology::{AdjacencyMatrix, Operator};

/// Largest total spectrum, in PRBs, a [`PrbSet`] can describe.
pub const MAX_PRBS: usize = 128;

/// A set of global PRB indices below [`MAX_PRBS`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrbSet(u128);

impl PrbSet {
    pub const fn empty() -> Self {
        PrbSet(0)
    }

    /// `[lo, hi)`; empty if `hi <= lo`.
    pub fn range(lo: usize, hi: usize) -> Self {
        if hi <= lo {
            return PrbSet(0);
        }
        let width = hi - lo;
        let mask = if width >= 128 { u128::MAX } else { (1u128 << width) - 1 };
        PrbSet(mask << lo)
    }

    pub fn insert(&mut self, prb: usize) {
        self.0 |= 1u128 << prb;
    }

    pub fn contains(&self, prb: usize) -> bool {
        prb < MAX_PRBS && self.0 >> prb & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        PrbSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        PrbSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        PrbSet(self.0 & !other.0)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.0 & other.0 == 0
    }

    /// Ascending indices.
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl FromIterator<usize> for PrbSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = PrbSet::empty();
        for p in iter {
            s.insert(p);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    None,
    Random,
    Equal,
    Decentralized,
    CentralizedGraph,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::None, Algorithm::Random, Algorithm::Equal, Algorithm::Decentralized, Algorithm::CentralizedGraph];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::None => "none",
            Algorithm::Random => "random",
            Algorithm::Equal => "equal",
            Algorithm::Decentralized => "decentralized",
            Algorithm::CentralizedGraph => "centralized_graph",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm '{s}' (none|random|equal|decentralized|centralized_graph)")))
    }
}

/// What one SBS reports in a coordination round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbsReport {
    pub sbs_id: usize,
    pub operator_id: usize,
    pub bwu: f64,
}

impl SbsReport {
    pub fn overloaded(&self) -> bool {
        self.bwu >= 1.0 - FRACTION_EPS
    }
}

/// Snapshot of one building's reports, usable from `valid_tti` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingReport {
    pub reports: Vec<SbsReport>,
    pub adjacency: AdjacencyMatrix,
    pub snapshot_tti: u64,
    pub valid_tti: u64,
}

/// Loaned PRBs for the SBS at position `sbs` of the report list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub sbs: usize,
    pub sbs_id: usize,
    pub prbs: PrbSet,
}

impl Grant {
    pub fn count(&self) -> usize {
        self.prbs.len()
    }

    /// PRBs per donor operator.
    pub fn donor_counts(&self, operators: &[Operator]) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for p in self.prbs.iter() {
            if let Some(op) = operators.iter().find(|o| o.band.contains(&p)) {
                *m.entry(op.id).or_insert(0) += 1;
            }
        }
        m
    }
}

/// Neighbourhood partition of one vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverloadSets {
    pub neighbors: Vec<usize>,
    pub overloaded: Vec<usize>,
    pub not_overloaded: Vec<usize>,
    /// Operators with an overloaded neighbour, ascending.
    pub k_hat: Vec<usize>,
    /// Remaining operators, excluding the vertex's own, ascending.
    pub k_check: Vec<usize>,
}

pub fn overload_sets(i: usize, operators: usize, reports: &[SbsReport], adjacency: &AdjacencyMatrix) -> OverloadSets {
    let neighbors: Vec<usize> = adjacency.neighbors(i).collect();
    let (overloaded, not_overloaded): (Vec<usize>, Vec<usize>) =
        neighbors.iter().partition(|&&j| reports[j].overloaded());
    let mut k_hat: Vec<usize> = overloaded.iter().map(|&j| reports[j].operator_id).collect();
    k_hat.sort_unstable();
    k_hat.dedup();
    let own = reports[i].operator_id;
    let k_check = (0..operators).filter(|k| *k != own && !k_hat.contains(k)).collect();
    OverloadSets { neighbors, overloaded, not_overloaded, k_hat, k_check }
}

/// `W_k = 1 − max BWU` over the SBSs of operator `k` among `scope`; 1 if none.
pub fn free_fraction(k: usize, reports: &[SbsReport], scope: impl IntoIterator<Item = usize>) -> f64 {
    let max = scope
        .into_iter()
        .filter(|&j| reports[j].operator_id == k)
        .map(|j| reports[j].bwu)
        .fold(None, |m: Option<f64>, b| Some(m.map_or(b, |m| m.max(b))));
    max.map_or(1.0, |m| (1.0 - m).clamp(0.0, 1.0))
}

/// Free sub-band of a donor at free fraction `w`, inner boundary first.
pub fn free_subband(op: &Operator, w: f64) -> Vec<usize> {
    let n = tail_count(w.min(op.sharing_factor), op.band.len());
    let (start, end) = (op.band.start, op.band.end);
    match allocation_anchor(op.id) {
        Anchor::BandStart => (end - n..end).collect(),
        Anchor::BandEnd => (start..start + n).rev().collect(),
    }
}

/// Positions `[offset, offset + count)` of the donor's free sub-band.
/// Requests past the end are clamped with a warning.
pub fn donor_slice(op: &Operator, w: f64, offset: usize, count: usize) -> PrbSet {
    if count == 0 {
        return PrbSet::empty();
    }
    let n = tail_count(w.min(op.sharing_factor), op.band.len());
    let (start, end) = (op.band.start, op.band.end);
    let mut count = count;
    if offset + count > n {
        log::warn!("grant of {count} PRBs at offset {offset} exceeds free sub-band of {n} for operator {}", op.id);
        count = n.saturating_sub(offset);
    }
    match allocation_anchor(op.id) {
        Anchor::BandStart => PrbSet::range(end - n + offset, end - n + offset + count),
        Anchor::BandEnd => PrbSet::range(start + n - offset - count, start + n - offset),
    }
}

/// Partitions `free` contiguously among claimants in order; counts that
/// overrun the list are clamped with a warning.
pub fn concretize(counts: &[usize], free: &[usize]) -> Vec<Vec<usize>> {
    let mut at = 0;
    counts
        .iter()
        .map(|&c| {
            let lo = at.min(free.len());
            let hi = (at + c).min(free.len());
            if at + c > free.len() {
                log::warn!("claim of {c} PRBs at {at} clamped to a free sub-band of {}", free.len());
            }
            at += c;
            free[lo..hi].to_vec()
        })
        .collect()
}

/// `⌊x / d⌋` for PRB amounts that are nominally integral multiples.
fn share(x: f64, d: usize) -> usize {
    (x / d as f64 + FRACTION_EPS).floor().max(0.0) as usize
}

fn prbs_per_operator(operators: &[Operator]) -> usize {
    operators.first().map_or(0, |o| o.band.len())
}

/// Random sharing: one SBS is drawn uniformly; if overloaded it receives each
/// other operator's `⌊min(W_k, S_k)·Q⌋` free PRBs.
pub fn algo1_random<R: Rng + ?Sized>(operators: &[Operator], reports: &[SbsReport], rng: &mut R) -> Vec<Grant> {
    if reports.is_empty() {
        return Vec::new();
    }
    let j = rng.random_range(0..reports.len());
    if !reports[j].overloaded() {
        return Vec::new();
    }
    let q = prbs_per_operator(operators);
    let mut prbs = PrbSet::empty();
    for op in operators.iter().filter(|o| o.id != reports[j].operator_id) {
        let w = free_fraction(op.id, reports, 0..reports.len());
        prbs = prbs.union(donor_slice(op, w, 0, tail_count(w.min(op.sharing_factor), q)));
    }
    vec![Grant { sbs: j, sbs_id: reports[j].sbs_id, prbs }]
}

/// Equal sharing: every overloaded SBS gets `⌊min(W_k, S_k)·Q / |v⁺|⌋` PRBs
/// from each other operator.
pub fn algo2_equal(operators: &[Operator], reports: &[SbsReport]) -> Vec<Grant> {
    let mut plus: Vec<usize> = (0..reports.len()).filter(|&i| reports[i].overloaded()).collect();
    if plus.is_empty() {
        return Vec::new();
    }
    plus.sort_by_key(|&i| (reports[i].operator_id, reports[i].sbs_id));
    let q = prbs_per_operator(operators) as f64;
    let fractions: Vec<f64> = operators.iter().map(|o| free_fraction(o.id, reports, 0..reports.len())).collect();
    plus.iter()
        .enumerate()
        .map(|(rank, &i)| {
            let mut prbs = PrbSet::empty();
            for op in operators.iter().filter(|o| o.id != reports[i].operator_id) {
                let w = fractions[op.id];
                let c = share(w.min(op.sharing_factor) * q, plus.len());
                prbs = prbs.union(donor_slice(op, w, rank * c, c));
            }
            Grant { sbs: i, sbs_id: reports[i].sbs_id, prbs }
        })
        .collect()
}

/// An isolated overloaded SBS takes every other operator's full shareable part.
fn isolated_grant(i: usize, operators: &[Operator], reports: &[SbsReport]) -> Grant {
    let prbs = operators
        .iter()
        .filter(|o| o.id != reports[i].operator_id)
        .fold(PrbSet::empty(), |acc, op| acc.union(donor_slice(op, 1.0, 0, tail_count(op.sharing_factor, op.band.len()))));
    Grant { sbs: i, sbs_id: reports[i].sbs_id, prbs }
}

/// Per-donor share with denominator `claimants`, slot `rank`.
fn neighbourhood_grant(sets: &OverloadSets, operators: &[Operator], reports: &[SbsReport], claimants: usize, rank: usize) -> PrbSet {
    let q = prbs_per_operator(operators) as f64;
    let mut prbs = PrbSet::empty();
    for &k in &sets.k_check {
        let op = &operators[k];
        let w = free_fraction(k, reports, sets.not_overloaded.iter().copied());
        let c = share(w.min(op.sharing_factor) * q, claimants);
        prbs = prbs.union(donor_slice(op, w, rank * c, c));
    }
    prbs
}

/// Decentralized connection-based sharing, evaluated at vertex `i` from its
/// neighbours' reports. `None` unless `i` is overloaded.
pub fn algo3_decentralized(i: usize, operators: &[Operator], reports: &[SbsReport], adjacency: &AdjacencyMatrix) -> Option<Grant> {
    if !reports[i].overloaded() {
        return None;
    }
    if adjacency.degree(i) == 0 {
        return Some(isolated_grant(i, operators, reports));
    }
    let sets = overload_sets(i, operators.len(), reports, adjacency);
    let own = reports[i].operator_id;
    let mut claimants = sets.k_hat.clone();
    if let Err(pos) = claimants.binary_search(&own) {
        claimants.insert(pos, own);
    }
    let rank = claimants.binary_search(&own).expect("own operator inserted");
    let prbs = neighbourhood_grant(&sets, operators, reports, claimants.len(), rank);
    Some(Grant { sbs: i, sbs_id: reports[i].sbs_id, prbs })
}

/// Runs the decentralized rule at every vertex.
pub fn algo3_all(operators: &[Operator], reports: &[SbsReport], adjacency: &AdjacencyMatrix) -> Vec<Grant> {
    (0..reports.len()).filter_map(|i| algo3_decentralized(i, operators, reports, adjacency)).collect()
}

/// Allocation step of the centralized graph algorithm, before avoidance.
/// Claimants within a neighbourhood are ranked by `(operator, sbs id)`.
pub fn algo4_allocation(operators: &[Operator], reports: &[SbsReport], adjacency: &AdjacencyMatrix) -> Vec<(Grant, Vec<usize>)> {
    (0..reports.len())
        .filter(|&i| reports[i].overloaded())
        .map(|i| {
            let sets = overload_sets(i, operators.len(), reports, adjacency);
            let key = |j: usize| (reports[j].operator_id, reports[j].sbs_id);
            let rank = sets.overloaded.iter().filter(|&&j| key(j) < key(i)).count();
            let prbs = neighbourhood_grant(&sets, operators, reports, sets.overloaded.len() + 1, rank);
            (Grant { sbs: i, sbs_id: reports[i].sbs_id, prbs }, sets.overloaded)
        })
        .collect()
}

/// Centralized connection-based sharing with the interference-avoidance step.
pub fn algo4_centralized(operators: &[Operator], reports: &[SbsReport], adjacency: &AdjacencyMatrix) -> Vec<Grant> {
    let overloaded: Vec<usize> = (0..reports.len()).filter(|&i| reports[i].overloaded()).collect();
    match overloaded.len() {
        0 => Vec::new(),
        1 => algo3_decentralized(overloaded[0], operators, reports, adjacency).into_iter().collect(),
        _ => {
            let allocation = algo4_allocation(operators, reports, adjacency);
            let mut grants: Vec<Grant> = allocation.iter().map(|(g, _)| *g).collect();
            let slot: BTreeMap<usize, usize> = grants.iter().enumerate().map(|(s, g)| (g.sbs, s)).collect();
            for (s, (_, adjacent)) in allocation.iter().enumerate() {
                let taken = adjacent.iter().fold(PrbSet::empty(), |acc, j| acc.union(grants[slot[j]].prbs));
                grants[s].prbs = grants[s].prbs.difference(taken);
            }
            grants
        }
    }
}

/// Dispatches one coordination round.
pub fn compute_grants<R: Rng + ?Sized>(
    algorithm: Algorithm,
    operators: &[Operator],
    report: &SharingReport,
    rng: &mut R,
) -> Vec<Grant> {
    let r = &report.reports;
    match algorithm {
        Algorithm::None => Vec::new(),
        Algorithm::Random => algo1_random(operators, r, rng),
        Algorithm::Equal => algo2_equal(operators, r),
        Algorithm::Decentralized => algo3_all(operators, r, &report.adjacency),
        Algorithm::CentralizedGraph => algo4_centralized(operators, r, &report.adjacency),
    }
}

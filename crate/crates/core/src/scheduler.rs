//! Per-SBS proportional fair scheduling and bandwidth utilisation.
//!
//! Every operator fills its band from a fixed end (its anchor) so peers can
//! infer the occupied PRBs from a single BWU number: an SBS at BWU `b` uses
//! exactly the first `⌈b·Q⌉` PRBs counted from its anchor.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::channel::linear_to_db;
use crate::link::{select_mcs, McsTable};

/// Slack used when turning fractions of a band into PRB counts.
pub const FRACTION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    BandStart,
    BandEnd,
}

/// Even operators fill their band upwards, odd ones downwards.
pub fn allocation_anchor(operator_id: usize) -> Anchor {
    if operator_id % 2 == 0 {
        Anchor::BandStart
    } else {
        Anchor::BandEnd
    }
}

/// PRBs of `band` in the order an SBS with `anchor` allocates them.
pub fn anchor_order(band: &Range<usize>, anchor: Anchor) -> Vec<usize> {
    match anchor {
        Anchor::BandStart => band.clone().collect(),
        Anchor::BandEnd => band.clone().rev().collect(),
    }
}

/// `⌊fraction·Q⌋` PRBs.
pub fn tail_count(fraction: f64, q: usize) -> usize {
    ((fraction.clamp(0.0, 1.0) * q as f64 + FRACTION_EPS).floor() as usize).min(q)
}

/// `⌈bwu·Q⌉` PRBs.
pub fn occupied_count(bwu: f64, q: usize) -> usize {
    ((bwu.clamp(0.0, 1.0) * q as f64 - FRACTION_EPS).ceil().max(0.0) as usize).min(q)
}

/// Own-band PRBs in use by an SBS reporting `bwu`.
pub fn occupied_prbs(band: &Range<usize>, anchor: Anchor, bwu: f64) -> Vec<usize> {
    let mut order = anchor_order(band, anchor);
    order.truncate(occupied_count(bwu, band.len()));
    order
}

/// The `count` PRBs at the end of the band opposite the anchor, listed from
/// the inner boundary outwards.
pub fn shared_tail(band: &Range<usize>, anchor: Anchor, count: usize) -> Vec<usize> {
    let order = anchor_order(band, anchor);
    let count = count.min(order.len());
    order[order.len() - count..].to_vec()
}

/// Scheduling view of one user for a single TTI.
#[derive(Debug, Clone, Copy)]
pub struct PfUser<'a> {
    pub id: usize,
    /// Latest delivered per-PRB CQI (linear).
    pub cqi: &'a [f64],
    /// Outstanding bits; `None` for unbounded demand.
    pub demand: Option<u64>,
    /// Smoothed served throughput in bits per TTI.
    pub avg_rate: f64,
}

/// Bits one PRB carries at the MCS the CQI value supports; zero if not reported.
pub fn prb_rate(cqi: f64, table: &McsTable) -> u64 {
    if cqi <= 0.0 {
        0
    } else {
        select_mcs(linear_to_db(cqi), table).bits_per_prb()
    }
}

/// Transport block capacity of `prbs` at the MCS chosen from their mean CQI.
pub fn tb_capacity(cqi: &[f64], prbs: &[usize], table: &McsTable) -> u64 {
    if prbs.is_empty() {
        return 0;
    }
    let mean = prbs.iter().map(|&p| cqi[p]).sum::<f64>() / prbs.len() as f64;
    prb_rate(mean, table) * prbs.len() as u64
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationMap {
    pub sbs_id: usize,
    /// `(prb, user)` in allocation order.
    pub entries: Vec<(usize, usize)>,
}

impl AllocationMap {
    pub fn new(sbs_id: usize) -> Self {
        AllocationMap { sbs_id, entries: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn user_of(&self, prb: usize) -> Option<usize> {
        self.entries.iter().find(|(p, _)| *p == prb).map(|(_, u)| *u)
    }

    pub fn prbs_of(&self, user: usize) -> Vec<usize> {
        self.entries.iter().filter(|(_, u)| *u == user).map(|(p, _)| *p).collect()
    }

    pub fn users(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.entries.iter().map(|(_, u)| *u).collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    pub fn prbs(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(p, _)| *p)
    }
}

/// Greedy PF over `available` (in the given order). Each PRB goes to the user
/// maximising `rate(p) / ((1-β)·avg + β·allotted)`, ties to the lower id.
/// Users leave once the CQI-implied capacity of their PRBs covers their demand.
pub fn proportional_fair(sbs_id: usize, users: &[PfUser<'_>], available: &[usize], table: &McsTable, beta: f64) -> AllocationMap {
    let mut map = AllocationMap::new(sbs_id);
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by_key(|&i| users[i].id);
    let mut prbs: Vec<Vec<usize>> = vec![Vec::new(); users.len()];
    let mut allotted = vec![0u64; users.len()];
    let mut active: Vec<bool> = users.iter().map(|u| u.demand != Some(0)).collect();
    for &p in available {
        let mut best: Option<(usize, f64)> = None;
        for &i in &order {
            if !active[i] {
                continue;
            }
            let rate = prb_rate(users[i].cqi[p], table);
            if rate == 0 {
                continue;
            }
            let denom = (1.0 - beta) * users[i].avg_rate + beta * allotted[i] as f64;
            let metric = rate as f64 / denom.max(f64::MIN_POSITIVE);
            if best.is_none_or(|(_, m)| metric > m) {
                best = Some((i, metric));
            }
        }
        let Some((i, _)) = best else { continue };
        map.entries.push((p, users[i].id));
        prbs[i].push(p);
        allotted[i] = tb_capacity(users[i].cqi, &prbs[i], table);
        if let Some(d) = users[i].demand {
            if allotted[i] >= d {
                active[i] = false;
            }
        }
        if !active.iter().any(|a| *a) {
            break;
        }
    }
    map
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BwuReport {
    pub sbs_id: usize,
    pub bwu: f64,
    pub allocated_own: usize,
    pub sharing_factor: f64,
    pub report_tti: u64,
}

impl BwuReport {
    pub fn overloaded(&self, q: usize) -> bool {
        self.allocated_own >= q
    }
}

/// Fraction of the own band allocated; loaned PRBs do not count.
pub fn compute_bwu(allocation: &AllocationMap, own_band: &Range<usize>, sharing_factor: f64, tti: u64) -> BwuReport {
    let allocated_own = allocation.prbs().filter(|p| own_band.contains(p)).count();
    BwuReport {
        sbs_id: allocation.sbs_id,
        bwu: allocated_own as f64 / own_band.len() as f64,
        allocated_own,
        sharing_factor,
        report_tti: tti,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BETA: f64 = 0.01;

    #[test]
    fn anchors() {
        assert_eq!(allocation_anchor(0), Anchor::BandStart);
        assert_eq!(allocation_anchor(1), Anchor::BandEnd);
        assert_eq!(allocation_anchor(2), Anchor::BandStart);
        assert_eq!(allocation_anchor(1), allocation_anchor(1));
    }

    #[test]
    fn band_helpers() {
        let band = 16..32;
        assert_eq!(occupied_prbs(&band, Anchor::BandEnd, 0.25), vec![31, 30, 29, 28]);
        assert_eq!(occupied_prbs(&band, Anchor::BandStart, 0.3), vec![16, 17, 18, 19, 20]);
        assert_eq!(shared_tail(&band, Anchor::BandStart, 3), vec![29, 30, 31]);
        assert_eq!(shared_tail(&band, Anchor::BandEnd, 3), vec![18, 17, 16]);
        assert_eq!(tail_count(0.5, 16), 8);
        assert_eq!(tail_count(0.3, 10), 3);
        assert_eq!(occupied_count(0.0, 16), 0);
        assert_eq!(occupied_count(1.0, 16), 16);
    }

    #[test]
    fn single_full_buffer_takes_everything() {
        let t = McsTable::default();
        let cqi = vec![100.0; 48];
        let u = [PfUser { id: 3, cqi: &cqi, demand: None, avg_rate: 1.0 }];
        let avail: Vec<usize> = (0..16).collect();
        let map = proportional_fair(0, &u, &avail, &t, BETA);
        assert_eq!(map.len(), 16);
        assert_eq!(compute_bwu(&map, &(0..16), 0.0, 0).bwu, 1.0);
        assert!(compute_bwu(&map, &(0..16), 0.0, 0).overloaded(16));
    }

    #[test]
    fn symmetric_users_alternate() {
        let t = McsTable::default();
        let cqi = vec![100.0; 48];
        let u = [
            PfUser { id: 1, cqi: &cqi, demand: None, avg_rate: 1.0 },
            PfUser { id: 0, cqi: &cqi, demand: None, avg_rate: 1.0 },
        ];
        let avail: Vec<usize> = (0..15).collect();
        let map = proportional_fair(0, &u, &avail, &t, BETA);
        assert_eq!(map.entries[0], (0, 0));
        assert_eq!(map.entries[1], (1, 1));
        let (a, b) = (map.prbs_of(0).len(), map.prbs_of(1).len());
        assert_eq!(a + b, 15);
        assert!(a.abs_diff(b) <= 1);
    }

    #[test]
    fn satisfied_rate_user_gets_nothing() {
        let t = McsTable::default();
        let cqi = vec![100.0; 48];
        let u = [PfUser { id: 0, cqi: &cqi, demand: Some(0), avg_rate: 1.0 }];
        let map = proportional_fair(0, &u, &(0..16).collect::<Vec<_>>(), &t, BETA);
        assert!(map.is_empty());
        assert_eq!(compute_bwu(&map, &(0..16), 0.0, 0).bwu, 0.0);
        assert!(proportional_fair(0, &[], &[0, 1], &t, BETA).is_empty());
    }

    #[test]
    fn demand_bounded_and_half_bwu() {
        let t = McsTable::default();
        let cqi = vec![1000.0; 48];
        let per_prb = t.top().bits_per_prb();
        let u = [PfUser { id: 0, cqi: &cqi, demand: Some(8 * per_prb), avg_rate: 1.0 }];
        let map = proportional_fair(0, &u, &(0..16).collect::<Vec<_>>(), &t, BETA);
        assert_eq!(map.len(), 8);
        assert_eq!(compute_bwu(&map, &(0..16), 0.0, 0).bwu, 0.5);
    }

    #[test]
    fn loaned_prbs_excluded_from_bwu() {
        let t = McsTable::default();
        let cqi = vec![1000.0; 48];
        let u = [PfUser { id: 0, cqi: &cqi, demand: None, avg_rate: 1.0 }];
        let avail: Vec<usize> = (16..32).chain(40..44).collect();
        let map = proportional_fair(1, &u, &avail, &t, BETA);
        let r = compute_bwu(&map, &(16..32), 0.5, 7);
        assert_eq!(r.allocated_own, 16);
        assert_eq!(r.bwu, 1.0);
        assert_eq!(map.len(), 20);
    }

    proptest! {
        #[test]
        fn pf_invariants(
            cqis in proptest::collection::vec(proptest::collection::vec(0.05f64..1000.0, 16), 1..5),
            demands in proptest::collection::vec(proptest::option::of(0u64..20000), 5),
            avgs in proptest::collection::vec(1.0f64..5000.0, 5),
        ) {
            let t = McsTable::default();
            let users: Vec<PfUser> = cqis.iter().enumerate().map(|(i, c)| PfUser {
                id: i, cqi: c, demand: demands[i], avg_rate: avgs[i],
            }).collect();
            let avail: Vec<usize> = (0..16).collect();
            let map = proportional_fair(0, &users, &avail, &t, BETA);
            let mut seen = map.prbs().collect::<Vec<_>>();
            let n = seen.len();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), n);
            // own-band occupancy is the first ⌈bwu·Q⌉ PRBs from the anchor
            let r = compute_bwu(&map, &(0..16), 0.0, 0);
            prop_assert_eq!(seen, occupied_prbs(&(0..16), Anchor::BandStart, r.bwu));
            for u in &users {
                if let Some(d) = u.demand {
                    let mine = map.prbs_of(u.id);
                    if mine.len() > 1 {
                        let fewer = &mine[..mine.len() - 1];
                        prop_assert!(tb_capacity(u.cqi, fewer, &t) < d);
                    }
                }
            }
        }

        #[test]
        fn symmetric_pf_within_one(n_users in 2usize..5, n_prbs in 1usize..48, c in 1.0f64..1000.0) {
            let t = McsTable::default();
            let cqi = vec![c; 48];
            let users: Vec<PfUser> = (0..n_users).map(|i| PfUser { id: i, cqi: &cqi, demand: None, avg_rate: 10.0 }).collect();
            let map = proportional_fair(0, &users, &(0..n_prbs).collect::<Vec<_>>(), &t, BETA);
            let counts: Vec<usize> = (0..n_users).map(|u| map.prbs_of(u).len()).collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }
}

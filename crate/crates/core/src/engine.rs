//! The TTI loop.
//!
//! Each drop draws a fresh layout, shadowing and fading. Buildings do not
//! interfere with each other, so every (drop, building) pair is simulated on
//! its own and the results are merged in order.
//!
//! Order of work inside one TTI:
//! 1. generate CQI on period boundaries, release CQI and sharing reports due now;
//! 2. on coordination-round boundaries, snapshot last TTI's BWU and compute
//!    grants that take effect one round-trip later;
//! 3. accrue traffic;
//! 4. schedule HARQ retransmissions, then PF over own band plus grants in force;
//! 5. build the PRB occupancy;
//! 6. compute the actual SINR, decode, update HARQ;
//! 7. record delivered bits and update PF averages.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{linear_to_db, BuildingChannel, Occupancy};
use crate::config::{CqiMode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::link::{decode, effective_sinr, estimate_cqi, select_mcs, CqiContext, CqiReport, DecodeOutcome, HarqProcess, McsTable};
use crate::metrics::{MetricsStore, RunStats, ThroughputSample};
use crate::rng::{self, Stream};
use crate::scheduler::{allocation_anchor, anchor_order, compute_bwu, proportional_fair, tb_capacity, AllocationMap, PfUser};
use crate::sharing::{compute_grants, Grant, PrbSet, SbsReport, SharingReport};
use crate::topology::{compute_adjacency, AdjacencyMatrix, Scenario};
use crate::traffic::TrafficSpec;
use crate::TTI_SECONDS;

pub use crate::sharing::Algorithm;

/// Initial PF average (bits per TTI); only needs to be positive.
const PF_INITIAL_AVERAGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    pub ttis: u64,
    pub drops: u64,
    /// First drop index; drops are `first_drop..first_drop + drops`.
    pub first_drop: u64,
    pub warmup_ttis: u64,
    pub algorithm: Algorithm,
    pub cqi_mode: CqiMode,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            ttis: 2000,
            drops: 20,
            first_drop: 0,
            warmup_ttis: 50,
            algorithm: Algorithm::None,
            cqi_mode: CqiMode::Coordinated,
        }
    }
}

impl RunParams {
    pub fn validate(&self) -> Result<()> {
        if self.drops == 0 {
            return Err(Error::config("drops must be >= 1"));
        }
        if self.ttis <= self.warmup_ttis {
            return Err(Error::config("ttis must exceed warmup_ttis"));
        }
        Ok(())
    }

    pub fn measured_ttis(&self) -> u64 {
        self.ttis - self.warmup_ttis
    }
}

/// Loads the configured MCS table or the built-in default.
pub fn mcs_table(cfg: &ScenarioConfig) -> Result<McsTable> {
    match &cfg.mcs_table {
        Some(p) => McsTable::load(p),
        None => Ok(McsTable::default()),
    }
}

/// Runs every drop of `params` and merges the results in drop order.
pub fn run(cfg: &ScenarioConfig, params: &RunParams) -> Result<MetricsStore> {
    cfg.validate()?;
    params.validate()?;
    let table = mcs_table(cfg)?;
    let drops: Vec<u64> = (params.first_drop..params.first_drop + params.drops).collect();
    let scenarios = drops.iter().map(|&d| Scenario::generate(cfg, d)).collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.buildings.len()).map(move |b| (i, b)))
        .collect();
    let results: Vec<Result<MetricsStore>> = tasks
        .par_iter()
        .map(|&(i, b)| simulate_building(cfg, params, &table, &scenarios[i], b, drops[i]))
        .collect();
    let mut store = MetricsStore::new();
    for r in results {
        store.merge(r?);
    }
    Ok(store)
}

#[derive(Debug)]
struct UeState {
    traffic: TrafficSpec,
    avg_rate: f64,
    cqi: Option<Vec<f64>>,
    harq: Option<HarqProcess>,
    delivered_total: u64,
    delivered_measured: u64,
}

struct Transmission {
    ue: usize,
    prbs: Vec<usize>,
    first: bool,
}

/// Simulates one building for one drop.
pub fn simulate_building(
    cfg: &ScenarioConfig,
    params: &RunParams,
    table: &McsTable,
    scenario: &Scenario,
    building: usize,
    drop: u64,
) -> Result<MetricsStore> {
    let channel = BuildingChannel::new(scenario, building, &cfg.channel, cfg.seed, drop)?;
    let cells: Vec<_> = channel.cells.iter().map(|&id| &scenario.cells[id]).collect();
    let cell_ops: Vec<usize> = cells.iter().map(|c| c.operator_id).collect();
    let adjacency = compute_adjacency(&cells, scenario.connectivity_threshold_m);
    let ops = &scenario.operators;
    let n_cells = cells.len();
    let n_prbs = channel.num_prbs();
    let beta = 1.0 / cfg.link.pf_window_tti;
    let link = &cfg.link;

    let mut ues: Vec<UeState> = channel
        .users
        .iter()
        .map(|&id| UeState {
            traffic: TrafficSpec::new(scenario.users[id].traffic_class, &cfg.traffic),
            avg_rate: PF_INITIAL_AVERAGE,
            cqi: None,
            harq: None,
            delivered_total: 0,
            delivered_measured: 0,
        })
        .collect();
    let users_of: Vec<Vec<usize>> = (0..n_cells)
        .map(|c| (0..ues.len()).filter(|&u| channel.serving[u] == c).collect())
        .collect();
    let own_order: Vec<Vec<usize>> = cell_ops.iter().map(|&o| anchor_order(&ops[o].band, allocation_anchor(o))).collect();

    let mut harq_rng = rng::stream(cfg.seed, Stream::Harq, &[drop, building as u64]);
    let mut ctrl_rng = rng::stream(cfg.seed, Stream::Controller, &[drop, building as u64]);
    let mut stats = RunStats::default();
    let mut last_bwu = vec![0.0; n_cells];
    let mut known_bwu: Vec<Option<f64>> = vec![None; n_cells];
    let unknown_bwu: Vec<Option<f64>> = vec![None; n_cells];
    let mut grants_in_force = vec![PrbSet::empty(); n_cells];
    let mut coordination: VecDeque<(SharingReport, Vec<Grant>)> = VecDeque::new();
    let mut cqi_queue: VecDeque<(usize, CqiReport)> = VecDeque::new();

    for t in 0..params.ttis {
        // (1) CQI and coordination reports
        while coordination.front().is_some_and(|(r, _)| r.valid_tti <= t) {
            let (report, grants) = coordination.pop_front().expect("checked");
            known_bwu = report.reports.iter().map(|r| Some(r.bwu)).collect();
            grants_in_force = vec![PrbSet::empty(); n_cells];
            for g in grants {
                grants_in_force[g.sbs] = grants_in_force[g.sbs].union(g.prbs);
            }
        }
        if t % link.cqi_period_tti == 0 {
            let bwu = if params.cqi_mode == CqiMode::Coordinated { &known_bwu } else { &unknown_bwu };
            let ctx = CqiContext { operators: ops, cell_ops: &cell_ops, bwu };
            for u in 0..ues.len() {
                let report = estimate_cqi(&channel, u, params.cqi_mode, &ctx, t, link.cqi_delay_tti)?;
                cqi_queue.push_back((u, report));
            }
        }
        while cqi_queue.front().is_some_and(|(_, r)| r.deliver_tti <= t) {
            let (u, report) = cqi_queue.pop_front().expect("checked");
            ues[u].cqi = Some(report.sinr);
        }

        // (2) coordination round
        if t % link.coordination_delay_tti == 0 {
            let reports: Vec<SbsReport> = (0..n_cells)
                .map(|c| SbsReport { sbs_id: cells[c].id, operator_id: cell_ops[c], bwu: last_bwu[c] })
                .collect();
            let report = SharingReport {
                reports,
                adjacency: adjacency.clone(),
                snapshot_tti: t,
                valid_tti: t + link.coordination_delay_tti,
            };
            let grants = compute_grants(params.algorithm, ops, &report, &mut ctrl_rng);
            stats.grants_issued += grants.iter().filter(|g| !g.prbs.is_empty()).count() as u64;
            coordination.push_back((report, grants));
        }

        // (3) traffic
        for ue in ues.iter_mut() {
            ue.traffic.accrue();
        }

        // (4) scheduling
        let mut txs: Vec<Transmission> = Vec::new();
        let mut allocations: Vec<AllocationMap> = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            let own = &ops[cell_ops[c]].band;
            let mut free: Vec<usize> = own_order[c].clone();
            free.extend(grants_in_force[c].iter().filter(|p| !own.contains(p)));
            let mut map = AllocationMap::new(cells[c].id);
            for &u in &users_of[c] {
                let Some(h) = &ues[u].harq else { continue };
                let n = h.prb_count.min(free.len());
                if n == 0 {
                    continue;
                }
                let prbs: Vec<usize> = free.drain(..n).collect();
                map.entries.extend(prbs.iter().map(|&p| (p, u)));
                txs.push(Transmission { ue: u, prbs, first: false });
            }
            let pf_users: Vec<PfUser<'_>> = users_of[c]
                .iter()
                .filter(|&&u| ues[u].harq.is_none())
                .filter_map(|&u| {
                    ues[u].cqi.as_deref().map(|cqi| PfUser { id: u, cqi, demand: ues[u].traffic.demand(), avg_rate: ues[u].avg_rate })
                })
                .collect();
            let pf = proportional_fair(cells[c].id, &pf_users, &free, table, beta);
            let mut fresh = Vec::new();
            for u in pf.users() {
                let prbs = pf.prbs_of(u);
                let cqi = ues[u].cqi.as_deref().expect("scheduled users have CQI");
                let capacity = tb_capacity(cqi, &prbs, table);
                let bits = ues[u].traffic.demand().map_or(capacity, |d| d.min(capacity));
                if bits == 0 {
                    continue;
                }
                let mean = prbs.iter().map(|&p| cqi[p]).sum::<f64>() / prbs.len() as f64;
                let mcs = select_mcs(linear_to_db(mean), table);
                ues[u].traffic.take(bits);
                ues[u].harq = Some(HarqProcess::new(bits, mcs.index, prbs.len(), link.harq_max_retx));
                map.entries.extend(prbs.iter().map(|&p| (p, u)));
                fresh.push(Transmission { ue: u, prbs, first: true });
            }
            txs.extend(fresh);
            last_bwu[c] = compute_bwu(&map, own, ops[cell_ops[c]].sharing_factor, t).bwu;
            allocations.push(map);
        }

        // (5) occupancy
        let mut occupancy: Occupancy = vec![Vec::new(); n_prbs];
        for (c, map) in allocations.iter().enumerate() {
            let own = &ops[cell_ops[c]].band;
            for p in map.prbs() {
                occupancy[p].push(c);
                if !own.contains(&p) {
                    stats.loaned_prb_uses += 1;
                }
            }
        }
        stats.adjacent_grant_collisions += adjacent_grant_collisions(&occupancy, &adjacency, &grants_in_force, &cell_ops, ops);

        // (6) actual SINR, decoding, HARQ
        let mut acked = vec![0u64; ues.len()];
        for tx in &txs {
            let sinr = channel.sinr_with(tx.ue, &tx.prbs, |p| occupancy[p].as_slice(), t, true);
            let all: Vec<usize> = (0..sinr.len()).collect();
            let eff = effective_sinr(&sinr, &all).map_err(|e| contract_at(e, t))?;
            let ue = &mut ues[tx.ue];
            let harq = ue.harq.as_mut().ok_or_else(|| Error::Contract { tti: t, msg: "transmission without HARQ process".into() })?;
            if tx.first {
                stats.first_transmissions += 1;
            } else {
                stats.retransmissions += 1;
            }
            let mcs = *table.level(harq.mcs_index);
            match decode(harq, eff, &mcs, link.fer_steepness_db, &mut harq_rng) {
                DecodeOutcome::Ack { bits } => {
                    ue.harq = None;
                    acked[tx.ue] = bits;
                    stats.acked_blocks += 1;
                    stats.acked_bits += bits;
                }
                DecodeOutcome::Nack => {
                    if tx.first {
                        stats.first_failures += 1;
                    }
                }
                DecodeOutcome::Dropped { .. } => {
                    if tx.first {
                        stats.first_failures += 1;
                    }
                    ue.harq = None;
                    stats.dropped_blocks += 1;
                }
            }
        }

        // (7) metrics
        for (ue, &bits) in ues.iter_mut().zip(&acked) {
            ue.avg_rate = (1.0 - beta) * ue.avg_rate + beta * bits as f64;
            ue.delivered_total += bits;
            if t >= params.warmup_ttis {
                ue.delivered_measured += bits;
            }
        }
    }

    let seconds = params.measured_ttis() as f64 * TTI_SECONDS;
    let samples = channel
        .users
        .iter()
        .zip(&ues)
        .map(|(&id, ue)| ThroughputSample {
            user_id: id,
            drop,
            class: ue.traffic.class,
            algorithm: params.algorithm,
            sharing_factor: cfg.sharing_factor,
            cqi_mode: params.cqi_mode,
            layout: cfg.layout,
            throughput_bps: ue.delivered_measured as f64 / seconds,
        })
        .collect();
    stats.delivered_bits = ues.iter().map(|u| u.delivered_total).sum();
    Ok(MetricsStore { samples, stats })
}

fn contract_at(e: Error, tti: u64) -> Error {
    match e {
        Error::Contract { msg, .. } => Error::Contract { tti, msg },
        other => other,
    }
}

/// Pairs of graph-adjacent SBSs transmitting on the same PRB, both on loan.
fn adjacent_grant_collisions(
    occupancy: &Occupancy,
    adjacency: &AdjacencyMatrix,
    grants: &[PrbSet],
    cell_ops: &[usize],
    ops: &[crate::topology::Operator],
) -> u64 {
    let loaned = |c: usize, p: usize| grants[c].contains(p) && !ops[cell_ops[c]].band.contains(&p);
    let mut n = 0;
    for (p, tx) in occupancy.iter().enumerate() {
        for (i, &a) in tx.iter().enumerate() {
            for &b in &tx[i + 1..] {
                if adjacency.get(a, b) && loaned(a, p) && loaned(b, p) {
                    n += 1;
                }
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LayoutKind;

    fn small(layout: LayoutKind) -> ScenarioConfig {
        ScenarioConfig { layout, buildings: 2, ..Default::default() }
    }

    fn quick(algorithm: Algorithm) -> RunParams {
        RunParams { ttis: 200, drops: 2, warmup_ttis: 20, algorithm, cqi_mode: CqiMode::Coordinated, first_drop: 0 }
    }

    #[test]
    fn params_validation() {
        assert!(RunParams { drops: 0, ..Default::default() }.validate().is_err());
        assert!(RunParams { ttis: 10, warmup_ttis: 10, ..Default::default() }.validate().is_err());
        assert!(RunParams::default().validate().is_ok());
    }

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig { sharing_factor: 1.0, ..small(LayoutKind::Random) };
        let a = run(&cfg, &quick(Algorithm::Decentralized)).unwrap();
        let b = run(&cfg, &quick(Algorithm::Decentralized)).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn zero_sharing_makes_algorithms_equal() {
        let cfg = small(LayoutKind::Fixed);
        let none = run(&cfg, &quick(Algorithm::None)).unwrap();
        for alg in [Algorithm::Random, Algorithm::Equal, Algorithm::Decentralized, Algorithm::CentralizedGraph] {
            let other = run(&cfg, &quick(alg)).unwrap();
            let a: Vec<_> = none.samples.iter().map(|s| (s.user_id, s.throughput_bps)).collect();
            let b: Vec<_> = other.samples.iter().map(|s| (s.user_id, s.throughput_bps)).collect();
            assert_eq!(a, b, "{alg}");
            assert_eq!(other.stats.loaned_prb_uses, 0);
        }
    }

    #[test]
    fn accounting_and_causality() {
        let cfg = ScenarioConfig { sharing_factor: 1.0, ..small(LayoutKind::Random) };
        let m = run(&cfg, &quick(Algorithm::CentralizedGraph)).unwrap();
        assert_eq!(m.stats.acked_bits, m.stats.delivered_bits);
        assert_eq!(m.stats.adjacent_grant_collisions, 0);
        // measured bits never exceed what rate-class users were offered
        for s in m.samples.iter().filter(|s| s.class != crate::traffic::TrafficClass::FullBuffer) {
            let target = match s.class {
                crate::traffic::TrafficClass::ConstantRate => cfg.traffic.rates_mbps.constant_rate,
                _ => cfg.traffic.rates_mbps.multimedia,
            } * 1e6;
            assert!(s.throughput_bps <= target * 200.0 / 180.0 + 1e-9);
        }
    }

    #[test]
    fn no_sharing_fixed_layout_is_interference_free() {
        let cfg = small(LayoutKind::Fixed);
        let p = RunParams { cqi_mode: CqiMode::NoSharing, ..quick(Algorithm::None) };
        let m = run(&cfg, &p).unwrap();
        assert_eq!(m.stats.loaned_prb_uses, 0);
        assert!(m.stats.first_transmissions > 0);
    }
}

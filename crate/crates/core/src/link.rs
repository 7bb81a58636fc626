//! CQI estimation, MCS selection and HARQ.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{linear_to_db, BuildingChannel, Occupancy};
use crate::config::CqiMode;
use crate::error::{Error, Result};
use crate::scheduler::{allocation_anchor, occupied_prbs, shared_tail, tail_count};
use crate::topology::Operator;

/// Data resource elements per PRB per TTI after control and reference signals.
pub const DATA_RE_PER_PRB: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsLevel {
    pub index: u8,
    /// Bits per resource element.
    pub efficiency: f64,
    /// SINR giving roughly 10% FER.
    pub threshold_db: f64,
}

impl McsLevel {
    pub fn bits_per_prb(&self) -> u64 {
        (self.efficiency * DATA_RE_PER_PRB).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    #[serde(rename = "level")]
    levels: Vec<McsLevel>,
}

const DEFAULT_MCS: [(f64, f64); 15] = [
    (0.1523, -6.7),
    (0.2344, -4.7),
    (0.3770, -2.3),
    (0.6016, 0.2),
    (0.8770, 2.4),
    (1.1758, 4.3),
    (1.4766, 5.9),
    (1.9141, 8.1),
    (2.4063, 10.3),
    (2.7305, 11.7),
    (3.3223, 14.1),
    (3.9023, 16.3),
    (4.5234, 18.7),
    (5.1152, 21.0),
    (5.5547, 22.7),
];

impl Default for McsTable {
    fn default() -> Self {
        McsTable {
            levels: DEFAULT_MCS
                .iter()
                .enumerate()
                .map(|(i, &(efficiency, threshold_db))| McsLevel { index: i as u8 + 1, efficiency, threshold_db })
                .collect(),
        }
    }
}

impl McsTable {
    pub fn new(levels: Vec<McsLevel>) -> Result<Self> {
        let t = McsTable { levels };
        t.validate()?;
        Ok(t)
    }

    /// Parses `[[level]]` entries with `index`, `efficiency`, `threshold_db`.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let t: McsTable = toml::from_str(s).map_err(|e| Error::config(format!("MCS table: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("MCS table is empty"));
        }
        for (i, l) in self.levels.iter().enumerate() {
            if l.index as usize != i + 1 {
                return Err(Error::config("MCS indices must run 1, 2, 3, ..."));
            }
            if !(l.efficiency > 0.0) || !l.threshold_db.is_finite() {
                return Err(Error::config("MCS efficiency must be > 0 and thresholds finite"));
            }
        }
        for w in self.levels.windows(2) {
            if w[1].efficiency <= w[0].efficiency || w[1].threshold_db <= w[0].threshold_db {
                return Err(Error::config("MCS efficiency and threshold must strictly increase"));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> &[McsLevel] {
        &self.levels
    }

    /// Level by 1-based index.
    pub fn level(&self, index: u8) -> &McsLevel {
        &self.levels[index as usize - 1]
    }

    pub fn top(&self) -> &McsLevel {
        self.levels.last().expect("validated non-empty")
    }
}

/// Highest level whose threshold is at or below `sinr_db`; level 1 otherwise.
pub fn select_mcs(sinr_db: f64, table: &McsTable) -> &McsLevel {
    let n = table.levels.partition_point(|l| l.threshold_db <= sinr_db);
    &table.levels[n.saturating_sub(1)]
}

/// Arithmetic mean of the linear SINR over `prbs`.
pub fn effective_sinr(sinr: &[f64], prbs: &[usize]) -> Result<f64> {
    if prbs.is_empty() {
        return Err(Error::Contract { tti: 0, msg: "effective SINR of an empty allocation".into() });
    }
    Ok(prbs.iter().map(|&p| sinr[p]).sum::<f64>() / prbs.len() as f64)
}

/// Frame error rate: logistic in the dB gap, 10% at the threshold.
pub fn frame_error_rate(sinr_linear: f64, threshold_db: f64, steepness_db: f64) -> f64 {
    if sinr_linear <= 0.0 {
        return 1.0;
    }
    let gap = linear_to_db(sinr_linear) - threshold_db;
    1.0 / (1.0 + 9.0 * (gap / steepness_db).exp())
}

/// Periodic, delayed per-PRB SINR feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiReport {
    pub ue_id: usize,
    /// Linear SINR estimate for every PRB; 0 for PRBs not reported.
    pub sinr: Vec<f64>,
    pub generated_tti: u64,
    pub deliver_tti: u64,
}

/// What a UE knows about the SBSs it can detect, by building-local index.
#[derive(Debug, Clone, Copy)]
pub struct CqiContext<'a> {
    pub operators: &'a [Operator],
    pub cell_ops: &'a [usize],
    /// Latest BWU learned through coordination; `None` if unknown.
    pub bwu: &'a [Option<f64>],
}

/// Interferers the estimator assumes on each PRB for a UE served by
/// `serving`; `None` marks PRBs the UE does not report.
pub fn cqi_interferers(ctx: &CqiContext<'_>, serving: usize, mode: CqiMode) -> Vec<Option<Vec<usize>>> {
    let ops = ctx.operators;
    let own = ctx.cell_ops[serving];
    let own_op = &ops[own];
    let q = own_op.band.len();
    let total = ops.iter().map(|o| o.band.end).max().unwrap_or(0);
    let n = ctx.cell_ops.len();
    let own_peers: Vec<usize> = (0..n).filter(|&c| c != serving && ctx.cell_ops[c] == own).collect();
    let others: Vec<usize> = (0..n).filter(|&c| ctx.cell_ops[c] != own).collect();
    let bwu_or = |c: usize, missing: f64| ctx.bwu.get(c).copied().flatten().unwrap_or(missing);

    let mut out: Vec<Option<Vec<usize>>> = vec![None; total];
    for p in own_op.band.clone() {
        out[p] = Some(own_peers.clone());
    }
    match mode {
        CqiMode::NoSharing => {}
        CqiMode::Uncoordinated => {
            let anchor = allocation_anchor(own);
            for p in shared_tail(&own_op.band, anchor, tail_count(own_op.sharing_factor, q)) {
                out[p].as_mut().unwrap().extend(&others);
            }
            for (k, op) in ops.iter().enumerate().filter(|(k, _)| *k != own) {
                let owners: Vec<usize> = (0..n).filter(|&c| ctx.cell_ops[c] == k).collect();
                for p in op.band.clone() {
                    out[p] = Some(owners.clone());
                }
            }
        }
        CqiMode::Coordinated => {
            // Unknown peers are assumed idle: that maximises what this OP could loan.
            let own_max = std::iter::once(serving).chain(own_peers.iter().copied()).map(|c| bwu_or(c, 0.0)).fold(0.0, f64::max);
            let loanable = tail_count((1.0 - own_max).min(own_op.sharing_factor), q);
            let borrowers: Vec<usize> = others.iter().copied().filter(|&c| bwu_or(c, 1.0) >= 1.0 - 1e-9).collect();
            if !borrowers.is_empty() {
                for p in shared_tail(&own_op.band, allocation_anchor(own), loanable) {
                    out[p].as_mut().unwrap().extend(&borrowers);
                }
            }
            for (k, op) in ops.iter().enumerate().filter(|(k, _)| *k != own) {
                for p in op.band.clone() {
                    out[p] = Some(Vec::new());
                }
                for c in (0..n).filter(|&c| ctx.cell_ops[c] == k) {
                    let occupied = match ctx.bwu.get(c).copied().flatten() {
                        Some(b) => occupied_prbs(&op.band, allocation_anchor(k), b),
                        None => op.band.clone().collect(),
                    };
                    for p in occupied {
                        out[p].as_mut().unwrap().push(c);
                    }
                }
            }
        }
    }
    out
}

/// Number of reported PRBs the estimator believes are interference free.
pub fn interference_free_count(sets: &[Option<Vec<usize>>]) -> usize {
    sets.iter().filter(|s| matches!(s, Some(v) if v.is_empty())).count()
}

/// Builds the CQI report of local UE `ue` at `tti`.
pub fn estimate_cqi(
    channel: &BuildingChannel,
    ue: usize,
    mode: CqiMode,
    ctx: &CqiContext<'_>,
    tti: u64,
    delay: u64,
) -> Result<CqiReport> {
    if ue >= channel.num_users() {
        return Err(Error::Contract { tti, msg: format!("CQI requested for unknown UE {ue}") });
    }
    let sets = cqi_interferers(ctx, channel.serving[ue], mode);
    let reported: Vec<usize> = (0..sets.len()).filter(|&p| sets[p].is_some()).collect();
    let occupancy: Occupancy = sets.iter().map(|s| s.clone().unwrap_or_default()).collect();
    let values = channel.sinr_with(ue, &reported, |p| occupancy[p].as_slice(), tti, true);
    let mut sinr = vec![0.0; sets.len()];
    for (p, v) in reported.into_iter().zip(values) {
        sinr[p] = v;
    }
    Ok(CqiReport { ue_id: channel.users[ue], sinr, generated_tti: tti, deliver_tti: tti + delay })
}

/// Stop-and-wait HARQ process with chase combining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarqProcess {
    pub tb_bits: u64,
    pub mcs_index: u8,
    pub prb_count: usize,
    /// Sum of the linear effective SINRs of all attempts so far.
    pub accumulated_sinr: f64,
    pub retransmissions: u32,
    pub max_retransmissions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeOutcome {
    Ack { bits: u64 },
    Nack,
    /// Retransmission budget exhausted; the block is lost.
    Dropped { bits: u64 },
}

impl HarqProcess {
    pub fn new(tb_bits: u64, mcs_index: u8, prb_count: usize, max_retransmissions: u32) -> Self {
        HarqProcess { tb_bits, mcs_index, prb_count, accumulated_sinr: 0.0, retransmissions: 0, max_retransmissions }
    }
}

/// Combines this attempt's SINR and draws the decoding result.
pub fn decode<R: Rng + ?Sized>(
    harq: &mut HarqProcess,
    effective_sinr: f64,
    mcs: &McsLevel,
    steepness_db: f64,
    rng: &mut R,
) -> DecodeOutcome {
    harq.accumulated_sinr += effective_sinr.max(0.0);
    let fer = frame_error_rate(harq.accumulated_sinr, mcs.threshold_db, steepness_db);
    if rng.random::<f64>() >= fer {
        return DecodeOutcome::Ack { bits: harq.tb_bits };
    }
    if harq.retransmissions >= harq.max_retransmissions {
        return DecodeOutcome::Dropped { bits: harq.tb_bits };
    }
    harq.retransmissions += 1;
    DecodeOutcome::Nack
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn ops(k: usize, q: usize, s: f64) -> Vec<Operator> {
        (0..k).map(|id| Operator { id, sharing_factor: s, band: id * q..(id + 1) * q }).collect()
    }

    #[test]
    fn default_table_shape() {
        let t = McsTable::default();
        assert_eq!(t.levels().len(), 15);
        assert_eq!(t.top().bits_per_prb(), 666);
        // 16 PRBs at the top MCS: about 10.7 Mb/s
        let mbps = t.top().bits_per_prb() as f64 * 16.0 * 1000.0 / 1e6;
        assert!((mbps - 10.656).abs() < 1e-9);
    }

    #[test]
    fn mcs_selection_examples() {
        let t = McsTable::default();
        assert_eq!(select_mcs(40.0, &t).index, 15);
        assert_eq!(select_mcs(-30.0, &t).index, 1);
        assert_eq!(select_mcs(f64::NEG_INFINITY, &t).index, 1);
        for l in t.levels() {
            assert_eq!(select_mcs(l.threshold_db, &t).index, l.index);
        }
    }

    #[test]
    fn table_override_parses_and_validates() {
        let good = "[[level]]\nindex = 1\nefficiency = 0.5\nthreshold_db = 0.0\n\n[[level]]\nindex = 2\nefficiency = 1.0\nthreshold_db = 3.0\n";
        let t = McsTable::from_toml_str(good).unwrap();
        assert_eq!(t.levels().len(), 2);
        let bad = good.replace("threshold_db = 3.0", "threshold_db = -1.0");
        assert!(McsTable::from_toml_str(&bad).is_err());
        assert!(McsTable::from_toml_str("").is_err());
    }

    #[test]
    fn effective_sinr_examples() {
        let v = vec![100.0, 300.0, 7.0];
        assert_eq!(effective_sinr(&v, &[2]).unwrap(), 7.0);
        assert_eq!(effective_sinr(&v, &[0, 1]).unwrap(), 200.0);
        assert_eq!(effective_sinr(&v, &[1, 0]).unwrap(), 200.0);
        assert!(matches!(effective_sinr(&v, &[]), Err(Error::Contract { .. })));
    }

    #[test]
    fn fer_curve() {
        assert!((frame_error_rate(1.0, 0.0, 1.0) - 0.1).abs() < 1e-12);
        assert!(frame_error_rate(1e4, 0.0, 1.0) < 1e-15);
        assert!(frame_error_rate(1e-3, 0.0, 1.0) > 0.999);
        assert_eq!(frame_error_rate(0.0, 0.0, 1.0), 1.0);
    }

    #[test]
    fn harq_chase_combining() {
        let t = McsTable::default();
        let mut rng = stream(1, Stream::Harq, &[]);
        let top = t.top();
        let mut h = HarqProcess::new(1000, top.index, 4, 3);
        // well below threshold: nack, and combining doubles the SINR
        assert_eq!(decode(&mut h, 0.01, top, 1.0, &mut rng), DecodeOutcome::Nack);
        assert_eq!(decode(&mut h, 0.01, top, 1.0, &mut rng), DecodeOutcome::Nack);
        assert!((h.accumulated_sinr - 0.02).abs() < 1e-15);
        assert_eq!(decode(&mut h, 0.01, top, 1.0, &mut rng), DecodeOutcome::Nack);
        assert_eq!(h.retransmissions, 3);
        assert_eq!(decode(&mut h, 0.01, top, 1.0, &mut rng), DecodeOutcome::Dropped { bits: 1000 });

        let mut h = HarqProcess::new(500, 1, 1, 3);
        assert_eq!(decode(&mut h, 1e5, t.level(1), 1.0, &mut rng), DecodeOutcome::Ack { bits: 500 });
    }

    #[test]
    fn small_band_interference_free_counts() {
        // three OPs with four PRBs each, half of every band shareable
        let operators = ops(3, 4, 0.5);
        let cell_ops = [0, 1, 2];
        let bwu = [Some(0.5), Some(0.5), Some(0.75)];
        let ctx = CqiContext { operators: &operators, cell_ops: &cell_ops, bwu: &bwu };
        assert_eq!(interference_free_count(&cqi_interferers(&ctx, 0, CqiMode::Uncoordinated)), 2);
        assert_eq!(interference_free_count(&cqi_interferers(&ctx, 0, CqiMode::Coordinated)), 7);
        let even = [Some(0.5), Some(0.5), Some(0.5)];
        let ctx = CqiContext { bwu: &even, ..ctx };
        assert_eq!(interference_free_count(&cqi_interferers(&ctx, 0, CqiMode::Uncoordinated)), 2);
        assert_eq!(interference_free_count(&cqi_interferers(&ctx, 0, CqiMode::Coordinated)), 8);
    }

    #[test]
    fn zero_sharing_modes_agree_on_own_band() {
        let operators = ops(3, 16, 0.0);
        let cell_ops = [0, 1, 2, 0, 1];
        let bwu = [Some(1.0), Some(0.25), None, Some(0.5), Some(1.0)];
        let ctx = CqiContext { operators: &operators, cell_ops: &cell_ops, bwu: &bwu };
        for serving in 0..5 {
            let band = operators[cell_ops[serving]].band.clone();
            let sets: Vec<_> = CqiMode::ALL.iter().map(|m| cqi_interferers(&ctx, serving, *m)).collect();
            for p in band {
                assert_eq!(sets[0][p], sets[1][p]);
                assert_eq!(sets[0][p], sets[2][p]);
            }
        }
    }

    #[test]
    fn fully_loaded_neighbours_match_worst_case() {
        let operators = ops(3, 16, 0.5);
        let cell_ops = [0, 1, 2];
        let bwu = [Some(0.0), Some(1.0), Some(1.0)];
        let ctx = CqiContext { operators: &operators, cell_ops: &cell_ops, bwu: &bwu };
        let mut a = cqi_interferers(&ctx, 0, CqiMode::Coordinated);
        let mut b = cqi_interferers(&ctx, 0, CqiMode::Uncoordinated);
        for v in a.iter_mut().chain(b.iter_mut()).flatten() {
            v.sort();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn missing_bwu_is_worst_case() {
        let operators = ops(3, 16, 1.0);
        let cell_ops = [0, 1, 2];
        let none = [None, None, None];
        let ctx = CqiContext { operators: &operators, cell_ops: &cell_ops, bwu: &none };
        let mut a = cqi_interferers(&ctx, 0, CqiMode::Coordinated);
        let mut b = cqi_interferers(&ctx, 0, CqiMode::Uncoordinated);
        for v in a.iter_mut().chain(b.iter_mut()).flatten() {
            v.sort();
        }
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn coordinated_assumes_subset_of_worst_case(
            k in 1usize..5, q in 1usize..17, s in 0.0f64..=1.0,
            cells in proptest::collection::vec((0usize..4, proptest::option::of(0usize..17)), 1..8),
            serving_pick in 0usize..8,
        ) {
            let operators = ops(k, q, s);
            let cell_ops: Vec<usize> = cells.iter().map(|(o, _)| o % k).collect();
            let bwu: Vec<Option<f64>> = cells.iter().map(|(_, b)| b.map(|b| (b.min(q)) as f64 / q as f64)).collect();
            let serving = serving_pick % cells.len();
            let ctx = CqiContext { operators: &operators, cell_ops: &cell_ops, bwu: &bwu };
            let coord = cqi_interferers(&ctx, serving, CqiMode::Coordinated);
            let unco = cqi_interferers(&ctx, serving, CqiMode::Uncoordinated);
            let none = cqi_interferers(&ctx, serving, CqiMode::NoSharing);
            for p in 0..k * q {
                let (c, u) = (coord[p].as_ref().unwrap(), unco[p].as_ref().unwrap());
                prop_assert!(c.iter().all(|x| u.contains(x)));
                if let Some(n) = &none[p] {
                    prop_assert!(n.iter().all(|x| c.contains(x)));
                }
            }
        }

        #[test]
        fn select_mcs_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0) {
            let t = McsTable::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(select_mcs(lo, &t).index <= select_mcs(hi, &t).index);
        }

        #[test]
        fn harq_accumulation_non_decreasing(sinrs in proptest::collection::vec(0.0f64..10.0, 1..6), seed in 0u64..100) {
            let t = McsTable::default();
            let mut rng = stream(seed, Stream::Harq, &[]);
            let mut h = HarqProcess::new(10, 15, 1, 8);
            let mut prev = 0.0;
            let mut sum = 0.0;
            for s in sinrs {
                sum += s;
                match decode(&mut h, s, t.top(), 1.0, &mut rng) {
                    DecodeOutcome::Nack => {
                        prop_assert!(h.accumulated_sinr >= prev);
                        prop_assert!((h.accumulated_sinr - sum).abs() < 1e-9);
                        prop_assert!(h.retransmissions <= h.max_retransmissions);
                        prev = h.accumulated_sinr;
                    }
                    _ => break,
                }
            }
        }
    }
}

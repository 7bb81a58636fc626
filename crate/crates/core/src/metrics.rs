//! Throughput samples, empirical CDFs, percentiles and gain tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{CqiMode, LayoutKind};
use crate::error::{Error, Result};
use crate::sharing::Algorithm;
use crate::traffic::TrafficClass;

/// Mean throughput of one user over one drop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSample {
    pub user_id: usize,
    pub drop: u64,
    pub class: TrafficClass,
    pub algorithm: Algorithm,
    pub sharing_factor: f64,
    pub cqi_mode: CqiMode,
    pub layout: LayoutKind,
    pub throughput_bps: f64,
}

impl ThroughputSample {
    fn tags(&self) -> (Algorithm, u64, CqiMode, LayoutKind) {
        (self.algorithm, self.sharing_factor.to_bits(), self.cqi_mode, self.layout)
    }
}

/// Link-level counters accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub first_transmissions: u64,
    pub first_failures: u64,
    pub retransmissions: u64,
    pub acked_blocks: u64,
    pub acked_bits: u64,
    /// Bits credited to users over the whole drop, warm-up included.
    pub delivered_bits: u64,
    pub dropped_blocks: u64,
    pub grants_issued: u64,
    /// `(SBS, PRB, TTI)` triples transmitted on loaned spectrum.
    pub loaned_prb_uses: u64,
    /// `(adjacent pair, PRB, TTI)` triples where both SBSs used the PRB as a loan.
    pub adjacent_grant_collisions: u64,
}

impl RunStats {
    pub fn merge(&mut self, o: &RunStats) {
        self.first_transmissions += o.first_transmissions;
        self.first_failures += o.first_failures;
        self.retransmissions += o.retransmissions;
        self.acked_blocks += o.acked_blocks;
        self.acked_bits += o.acked_bits;
        self.delivered_bits += o.delivered_bits;
        self.dropped_blocks += o.dropped_blocks;
        self.grants_issued += o.grants_issued;
        self.loaned_prb_uses += o.loaned_prb_uses;
        self.adjacent_grant_collisions += o.adjacent_grant_collisions;
    }

    /// First-transmission frame error rate.
    pub fn first_fer(&self) -> f64 {
        if self.first_transmissions == 0 {
            0.0
        } else {
            self.first_failures as f64 / self.first_transmissions as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsStore {
    pub samples: Vec<ThroughputSample>,
    pub stats: RunStats,
}

impl MetricsStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn merge(&mut self, other: MetricsStore) {
        self.samples.extend(other.samples);
        self.stats.merge(&other.stats);
    }

    /// Throughputs, optionally restricted to one class.
    pub fn throughputs(&self, class: Option<TrafficClass>) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| class.is_none_or(|c| s.class == c))
            .map(|s| s.throughput_bps)
            .collect()
    }

    pub fn mean(&self, class: Option<TrafficClass>) -> Option<f64> {
        let v = self.throughputs(class);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean throughput per drop for one class; drops without such users are absent.
    pub fn per_drop_means(&self, class: Option<TrafficClass>) -> BTreeMap<u64, f64> {
        let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for s in self.samples.iter().filter(|s| class.is_none_or(|c| s.class == c)) {
            let e = acc.entry(s.drop).or_insert((0.0, 0));
            e.0 += s.throughput_bps;
            e.1 += 1;
        }
        acc.into_iter().map(|(d, (sum, n))| (d, sum / n as f64)).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.samples.is_empty() {
            wtr.write_record([
                "user_id", "drop", "class", "algorithm", "sharing_factor", "cqi_mode", "layout", "throughput_bps",
            ])?;
        }
        for s in &self.samples {
            wtr.serialize(s)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let samples = rdr.deserialize().collect::<std::result::Result<Vec<ThroughputSample>, _>>()?;
        Ok(MetricsStore { samples, stats: RunStats::default() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Empirical CDF: one `(value, P[X ≤ value])` point per distinct value.
pub fn cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::input("CDF of an empty sample set"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::input("CDF input contains NaN"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = p,
            _ => out.push((*x, p)),
        }
    }
    Ok(out)
}

/// Lowest sample whose empirical cumulative probability is at least `p`.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::input(format!("percentile level {p} outside (0, 1]")));
    }
    if samples.is_empty() {
        return Err(Error::input("percentile of an empty sample set"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((p * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(v[k.min(v.len()) - 1])
}

fn uniform_tags(store: &MetricsStore, what: &str) -> Result<Option<(Algorithm, u64, CqiMode, LayoutKind)>> {
    let mut tags = store.samples.iter().map(ThroughputSample::tags);
    let first = tags.next();
    if let Some(t) = first {
        if tags.any(|o| o != t) {
            return Err(Error::input(format!("{what} mixes several runs; filter it first")));
        }
    }
    Ok(first)
}

/// Per-class percentile gain of `sharing` over `baseline` at level `p`.
pub fn gain_table(baseline: &MetricsStore, sharing: &MetricsStore, p: f64) -> Result<BTreeMap<TrafficClass, f64>> {
    let a = uniform_tags(baseline, "baseline")?;
    let b = uniform_tags(sharing, "sharing store")?;
    if let (Some(a), Some(b)) = (a, b) {
        if (a.1, a.2, a.3) != (b.1, b.2, b.3) {
            return Err(Error::input("stores differ in more than the algorithm tag"));
        }
    }
    let mut out = BTreeMap::new();
    for class in TrafficClass::ALL {
        let (x, y) = (baseline.throughputs(Some(class)), sharing.throughputs(Some(class)));
        if x.is_empty() || y.is_empty() {
            continue;
        }
        out.insert(class, percentile(&y, p)? - percentile(&x, p)?);
    }
    Ok(out)
}

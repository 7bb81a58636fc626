//! Link gains and per-PRB SINR.
//!
//! Small-scale fading is a sum of `M` complex sinusoids per link and receive
//! antenna. Each path carries a Cauchy-distributed delay (in PRB units), which
//! gives an exponential frequency correlation `exp(-|Δp| / coherence)`, and a
//! Doppler shift, which makes the gain evolve smoothly over TTIs. The gain is a
//! pure function of the link's seed, the PRB and the TTI.

use std::cell::RefCell;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use crate::config::ChannelConfig;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::topology::{count_walls, Building, Point, Scenario};
use crate::TTI_SECONDS;

/// Bandwidth of one PRB in Hz.
pub const PRB_BANDWIDTH_HZ: f64 = 180e3;
const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Noise power over one PRB in mW.
pub fn noise_power_mw(cfg: &ChannelConfig) -> f64 {
    db_to_linear(THERMAL_NOISE_DBM_HZ + linear_to_db(PRB_BANDWIDTH_HZ) + cfg.noise_figure_db)
}

/// Distance-dependent path loss in dB; distances below 1 m are clamped.
pub fn pathloss_db(distance_m: f64, cfg: &ChannelConfig) -> f64 {
    let pl = &cfg.pathloss;
    pl.a * distance_m.max(1.0).log10() + pl.b + pl.c * cfg.carrier_ghz.log10()
}

/// Total link gain in dB: `-(PL(d) + shadowing + wall_loss · walls)`.
pub fn path_gain_db(tx: &Point, rx: &Point, building: &Building, shadowing_db: f64, cfg: &ChannelConfig) -> f64 {
    let walls = count_walls(tx, rx, building) as f64;
    -(pathloss_db(tx.distance(rx), cfg) + shadowing_db + building.wall_attenuation_db * walls)
}

/// Receiver EVM impairment: `1 / (1/sinr + (evm/100)²)`.
pub fn apply_evm(sinr_in: f64, evm_pct: f64) -> f64 {
    if sinr_in <= 0.0 {
        return 0.0;
    }
    let e = evm_pct / 100.0;
    1.0 / (1.0 / sinr_in + e * e)
}

/// Upper bound of `apply_evm` for the given EVM.
pub fn evm_ceiling(evm_pct: f64) -> f64 {
    let e = evm_pct / 100.0;
    if e == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (e * e)
    }
}

/// Frequency-selective, time-varying fading for one link and antenna.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    num_prbs: usize,
    phase: Vec<f64>,
    /// Doppler shift in cycles per TTI.
    doppler: Vec<f64>,
    /// `exp(-j 2π p τ_m)`, row-major `[prb][path]`.
    steering: Vec<Complex64>,
}

impl FadingProcess {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, num_prbs: usize, cfg: &ChannelConfig) -> Self {
        let m = cfg.fading_paths.max(1);
        let fd = cfg.doppler_hz * TTI_SECONDS;
        let delay = cfg.coherence_prbs.map(|c| Cauchy::new(0.0, 1.0 / (TAU * c)).expect("positive coherence"));
        let mut phase = Vec::with_capacity(m);
        let mut doppler = Vec::with_capacity(m);
        let mut delays = Vec::with_capacity(m);
        for _ in 0..m {
            phase.push(rng.random_range(0.0..TAU));
            doppler.push(fd * rng.random_range(0.0..TAU).cos());
            delays.push(delay.map_or(0.0, |d| d.sample(rng)));
        }
        let mut steering = Vec::with_capacity(num_prbs * m);
        for p in 0..num_prbs {
            for tau in &delays {
                // reduce before the trig call; Cauchy tails get large
                let turns = (p as f64 * tau).rem_euclid(1.0);
                steering.push(Complex64::from_polar(1.0, -TAU * turns));
            }
        }
        FadingProcess { num_prbs, phase, doppler, steering }
    }

    pub fn paths(&self) -> usize {
        self.phase.len()
    }

    pub fn num_prbs(&self) -> usize {
        self.num_prbs
    }

    /// Per-path rotors at `tti`, already scaled by `1/√M`.
    pub fn rotors(&self, tti: u64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.paths()];
        self.rotors_into(tti, &mut out);
        out
    }

    pub fn rotors_into(&self, tti: u64, out: &mut [Complex64]) {
        let scale = 1.0 / (self.paths() as f64).sqrt();
        for ((z, phi), nu) in out.iter_mut().zip(&self.phase).zip(&self.doppler) {
            let turns = (nu * tti as f64).rem_euclid(1.0);
            *z = Complex64::from_polar(scale, phi + TAU * turns);
        }
    }

    /// Power gain on `prb` given precomputed rotors.
    pub fn gain_with(&self, rotors: &[Complex64], prb: usize) -> f64 {
        let m = rotors.len();
        let row = &self.steering[prb * m..(prb + 1) * m];
        row.iter().zip(rotors).map(|(s, z)| s * z).sum::<Complex64>().norm_sqr()
    }

    pub fn gain(&self, prb: usize, tti: u64) -> f64 {
        self.gain_with(&self.rotors(tti), prb)
    }

    pub fn gains(&self, tti: u64) -> Vec<f64> {
        let z = self.rotors(tti);
        (0..self.num_prbs).map(|p| self.gain_with(&z, p)).collect()
    }
}

/// Large-scale and small-scale gain of one SBS → UE link.
#[derive(Debug, Clone)]
pub struct LinkGain {
    pub tx_id: usize,
    pub rx_id: usize,
    pub pathloss_db: f64,
    pub shadowing_db: f64,
    pub wall_loss_db: f64,
    /// Mean received power (mW) before fading.
    pub mean_rx_mw: f64,
    /// One process per receive antenna.
    pub fading: Vec<FadingProcess>,
}

impl LinkGain {
    /// Per-PRB fading gains (linear) on `antenna` at `tti`.
    pub fn fading_gains(&self, antenna: usize, tti: u64) -> Vec<f64> {
        self.fading[antenna].gains(tti)
    }
}

/// One linear SINR per PRB of the whole shared spectrum.
pub type SinrVector = Vec<f64>;

/// Transmitting SBSs (building-local indices) per PRB.
pub type Occupancy = Vec<Vec<usize>>;

/// All links of one building for one drop.
#[derive(Debug, Clone)]
pub struct BuildingChannel {
    cfg: ChannelConfig,
    noise_mw: f64,
    num_prbs: usize,
    /// Global SBS ids, indexed by local SBS index.
    pub cells: Vec<usize>,
    /// Global user ids, indexed by local UE index.
    pub users: Vec<usize>,
    /// Local serving SBS per local UE.
    pub serving: Vec<usize>,
    /// `links[ue][cell]`.
    links: Vec<Vec<LinkGain>>,
    rotors: RefCell<RotorCache>,
}

/// Rotors of every link at one TTI, flat `[ue][cell][antenna][path]`.
///
/// Exact trig every `ROTOR_ANCHOR` TTIs, one complex multiply per TTI in
/// between. The step count from the anchor is fixed, so values depend on
/// the TTI only, never on query history.
#[derive(Debug, Clone)]
struct RotorCache {
    tti: Option<u64>,
    paths: usize,
    rot: Vec<Complex64>,
    step: Vec<Complex64>,
}

const ROTOR_ANCHOR: u64 = 64;

impl BuildingChannel {
    pub fn new(scenario: &Scenario, building: usize, cfg: &ChannelConfig, seed: u64, drop: u64) -> Result<Self> {
        let b = scenario
            .buildings
            .get(building)
            .ok_or_else(|| Error::input(format!("unknown building {building}")))?;
        let cells = scenario.cells_in(building);
        let users = scenario.users_in(building);
        let num_prbs = scenario.total_prbs();
        let shadow = Normal::new(0.0, cfg.shadowing_sigma_db).map_err(|e| Error::config(e.to_string()))?;
        let mut serving = Vec::with_capacity(users.len());
        let mut links = Vec::with_capacity(users.len());
        for ue in &users {
            let local = cells
                .iter()
                .position(|c| c.id == ue.serving_cell_id)
                .ok_or_else(|| Error::Contract { tti: 0, msg: format!("user {} has no serving cell in its building", ue.id) })?;
            serving.push(local);
            let mut row = Vec::with_capacity(cells.len());
            for cell in &cells {
                let mut srng = rng::stream(seed, Stream::Shadowing, &[drop, cell.id as u64, ue.id as u64]);
                let shadowing_db = shadow.sample(&mut srng);
                let walls = count_walls(&cell.position, &ue.position, b) as f64;
                let pl = pathloss_db(cell.position.distance(&ue.position), cfg);
                let wall_loss_db = b.wall_attenuation_db * walls;
                let gain_db = -(pl + shadowing_db + wall_loss_db);
                let fading = (0..cfg.rx_antennas.max(1))
                    .map(|a| {
                        let mut frng = rng::stream(seed, Stream::Fading, &[drop, cell.id as u64, ue.id as u64, a as u64]);
                        FadingProcess::new(&mut frng, num_prbs, cfg)
                    })
                    .collect();
                row.push(LinkGain {
                    tx_id: cell.id,
                    rx_id: ue.id,
                    pathloss_db: pl,
                    shadowing_db,
                    wall_loss_db,
                    mean_rx_mw: db_to_linear(cell.tx_power_dbm + gain_db),
                    fading,
                });
            }
            links.push(row);
        }
        let paths = cfg.fading_paths.max(1);
        let step = links
            .iter()
            .flatten()
            .flat_map(|l: &LinkGain| &l.fading)
            .flat_map(|f| f.doppler.iter().map(|nu| Complex64::from_polar(1.0, TAU * nu.rem_euclid(1.0))))
            .collect::<Vec<_>>();
        let rotors = RefCell::new(RotorCache { tti: None, paths, rot: vec![Complex64::new(0.0, 0.0); step.len()], step });
        Ok(BuildingChannel {
            rotors,
            cfg: cfg.clone(),
            noise_mw: noise_power_mw(cfg),
            num_prbs,
            cells: cells.iter().map(|c| c.id).collect(),
            users: users.iter().map(|u| u.id).collect(),
            serving,
            links,
        })
    }

    pub fn num_prbs(&self) -> usize {
        self.num_prbs
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn noise_mw(&self) -> f64 {
        self.noise_mw
    }

    pub fn link(&self, ue: usize, cell: usize) -> &LinkGain {
        &self.links[ue][cell]
    }

    fn sync_rotors(&self, tti: u64) {
        let mut cache = self.rotors.borrow_mut();
        if cache.tti == Some(tti) {
            return;
        }
        let base = tti - tti % ROTOR_ANCHOR;
        let from = match cache.tti {
            Some(t) if t >= base && t < tti => t,
            _ => {
                let m = cache.paths;
                let mut chunks = cache.rot.chunks_mut(m);
                for f in self.links.iter().flatten().flat_map(|l| &l.fading) {
                    f.rotors_into(base, chunks.next().expect("rotor slot"));
                }
                base
            }
        };
        let RotorCache { rot, step, .. } = &mut *cache;
        for _ in from..tti {
            rot.iter_mut().zip(step.iter()).for_each(|(z, w)| *z *= w);
        }
        cache.tti = Some(tti);
    }

    /// SINR of local UE `ue` on each PRB in `prbs`, with interferers on PRB
    /// `p` given by `interferers(p)` (the serving SBS is skipped if listed).
    /// With `evm` false the receiver impairment is not applied.
    pub fn sinr_with<'a, F>(&self, ue: usize, prbs: &[usize], interferers: F, tti: u64, evm: bool) -> Vec<f64>
    where
        F: Fn(usize) -> &'a [usize],
    {
        let serving = self.serving[ue];
        let row = &self.links[ue];
        let antennas = row[serving].fading.len();
        let m = row[serving].fading[0].paths();
        self.sync_rotors(tti);
        let cache = self.rotors.borrow();
        let link_base = ue * row.len() * antennas * m;
        let rot = |c: usize, a: usize| {
            let at = link_base + (c * antennas + a) * m;
            &cache.rot[at..at + m]
        };
        let mut out = Vec::with_capacity(prbs.len());
        let mut interference = vec![0.0; antennas];
        for &p in prbs {
            interference.iter_mut().for_each(|x| *x = 0.0);
            for &c in interferers(p) {
                if c == serving {
                    continue;
                }
                for (a, acc) in interference.iter_mut().enumerate() {
                    *acc += row[c].mean_rx_mw * row[c].fading[a].gain_with(rot(c, a), p);
                }
            }
            let sinr: f64 = (0..antennas)
                .map(|a| row[serving].mean_rx_mw * row[serving].fading[a].gain_with(rot(serving, a), p) / (self.noise_mw + interference[a]))
                .sum();
            out.push(if evm { apply_evm(sinr, self.cfg.evm_pct) } else { sinr });
        }
        out
    }

    /// Full per-PRB SINR vector of local UE `ue` under `occupancy`.
    pub fn per_prb_sinr(&self, ue: usize, occupancy: &Occupancy, tti: u64) -> Result<SinrVector> {
        if ue >= self.serving.len() {
            return Err(Error::Contract { tti, msg: format!("UE {ue} has no serving cell") });
        }
        let prbs: Vec<usize> = (0..self.num_prbs).collect();
        Ok(self.sinr_with(ue, &prbs, |p| occupancy[p].as_slice(), tti, true))
    }
}

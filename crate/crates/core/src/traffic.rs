//! Downlink traffic classes and per-user demand.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrafficConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    FullBuffer,
    ConstantRate,
    Multimedia,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] =
        [TrafficClass::FullBuffer, TrafficClass::ConstantRate, TrafficClass::Multimedia];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::FullBuffer => "full_buffer",
            TrafficClass::ConstantRate => "constant_rate",
            TrafficClass::Multimedia => "multimedia",
        }
    }
}

impl std::fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrafficClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrafficClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::input(format!("unknown traffic class '{s}'")))
    }
}

/// Class probabilities, in `TrafficClass::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficMix {
    pub full_buffer: f64,
    pub constant_rate: f64,
    pub multimedia: f64,
}

impl TrafficMix {
    pub fn new(full_buffer: f64, constant_rate: f64, multimedia: f64) -> Result<Self> {
        let mix = TrafficMix { full_buffer, constant_rate, multimedia };
        let parts = [full_buffer, constant_rate, multimedia];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("traffic mix must be non-negative and sum to 1, got {parts:?}")));
        }
        Ok(mix)
    }

    pub fn from_config(cfg: &TrafficConfig) -> Result<Self> {
        TrafficMix::new(cfg.full_buffer_pct / 100.0, cfg.constant_rate_pct / 100.0, cfg.multimedia_pct / 100.0)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TrafficClass {
        let u: f64 = rng.random();
        if u < self.full_buffer {
            TrafficClass::FullBuffer
        } else if u < self.full_buffer + self.constant_rate {
            TrafficClass::ConstantRate
        } else if self.multimedia > 0.0 {
            TrafficClass::Multimedia
        } else if self.constant_rate > 0.0 {
            // only reachable through rounding at u ~ 1
            TrafficClass::ConstantRate
        } else {
            TrafficClass::FullBuffer
        }
    }
}

/// Draws one class per user, i.i.d. with the mix probabilities.
pub fn assign_mix<R: Rng + ?Sized>(users: usize, mix: &TrafficMix, rng: &mut R) -> Vec<TrafficClass> {
    (0..users).map(|_| mix.draw(rng)).collect()
}

/// Outstanding demand of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub class: TrafficClass,
    /// Target rate in bit/s; unused for full buffer.
    pub rate_bps: u64,
    /// Bits waiting for transmission; ignored for full buffer.
    pub buffer_bits: u64,
    accrued_ttis: u64,
}

impl TrafficSpec {
    pub fn new(class: TrafficClass, cfg: &TrafficConfig) -> Self {
        let mbps = match class {
            TrafficClass::FullBuffer => 0.0,
            TrafficClass::ConstantRate => cfg.rates_mbps.constant_rate,
            TrafficClass::Multimedia => cfg.rates_mbps.multimedia,
        };
        TrafficSpec { class, rate_bps: (mbps * 1e6).round() as u64, buffer_bits: 0, accrued_ttis: 0 }
    }

    pub fn is_full_buffer(&self) -> bool {
        self.class == TrafficClass::FullBuffer
    }

    /// Adds one TTI worth of demand and returns the number of bits added.
    ///
    /// Rate classes accrue `rate × 1 ms` per call. The running total is
    /// computed from the call count, so fractional per-TTI amounts never drift.
    pub fn accrue(&mut self) -> u64 {
        if self.is_full_buffer() {
            return 0;
        }
        let before = self.rate_bps * self.accrued_ttis / 1000;
        self.accrued_ttis += 1;
        let after = self.rate_bps * self.accrued_ttis / 1000;
        let added = after - before;
        self.buffer_bits += added;
        added
    }

    /// Remaining demand this TTI; `None` means unbounded.
    pub fn demand(&self) -> Option<u64> {
        if self.is_full_buffer() {
            None
        } else {
            Some(self.buffer_bits)
        }
    }

    /// Removes up to `bits` from the buffer, returning what was actually taken.
    pub fn take(&mut self, bits: u64) -> u64 {
        if self.is_full_buffer() {
            return bits;
        }
        let taken = bits.min(self.buffer_bits);
        self.buffer_bits -= taken;
        taken
    }
}

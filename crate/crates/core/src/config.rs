//! Scenario configuration: layout, channel, traffic and link-level knobs.
//!
//! Configs are TOML files. Every field has a default, so an empty file is a
//! valid fixed-layout scenario with three operators and 16 PRBs each.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// One SBS per operator, colocated at the building centre.
    Fixed,
    /// SBSs deployed at room centres with a per-operator probability.
    Random,
}

impl LayoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::Fixed => "fixed",
            LayoutKind::Random => "random",
        }
    }

    /// Default inter-SBS communication range.
    pub fn default_connectivity_m(self) -> f64 {
        match self {
            LayoutKind::Fixed => 50.0,
            // 20 m hotspot plus 5 m of coverage overlap
            LayoutKind::Random => 25.0,
        }
    }
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(LayoutKind::Fixed),
            "random" => Ok(LayoutKind::Random),
            other => Err(Error::config(format!("unknown layout '{other}'"))),
        }
    }
}

/// How a UE builds its CQI over bands it does not own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CqiMode {
    NoSharing,
    Uncoordinated,
    Coordinated,
}

impl CqiMode {
    pub const ALL: [CqiMode; 3] = [CqiMode::NoSharing, CqiMode::Uncoordinated, CqiMode::Coordinated];

    pub fn as_str(self) -> &'static str {
        match self {
            CqiMode::NoSharing => "no_sharing",
            CqiMode::Uncoordinated => "uncoordinated",
            CqiMode::Coordinated => "coordinated",
        }
    }
}

impl std::fmt::Display for CqiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CqiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CqiMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown cqi mode '{s}'")))
    }
}

/// `PL(d) = a·log10(d) + b + c·log10(f_GHz)` in dB, d in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for PathLossConfig {
    // indoor hotspot NLOS
    fn default() -> Self {
        PathLossConfig { a: 43.3, b: 11.5, c: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub pathloss: PathLossConfig,
    pub carrier_ghz: f64,
    pub shadowing_sigma_db: f64,
    pub evm_pct: f64,
    pub noise_figure_db: f64,
    /// Frequency coherence of the fast fading in PRBs; absent means flat.
    pub coherence_prbs: Option<f64>,
    pub doppler_hz: f64,
    pub fading_paths: usize,
    pub rx_antennas: usize,
    pub wall_loss_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            pathloss: PathLossConfig::default(),
            carrier_ghz: 2.0,
            shadowing_sigma_db: 4.0,
            evm_pct: 4.0,
            noise_figure_db: 9.0,
            coherence_prbs: Some(8.0),
            doppler_hz: 5.0,
            fading_paths: 8,
            rx_antennas: 2,
            wall_loss_db: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    pub constant_rate: f64,
    pub multimedia: f64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        RatesConfig { constant_rate: 1.0, multimedia: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub full_buffer_pct: f64,
    pub constant_rate_pct: f64,
    pub multimedia_pct: f64,
    pub rates_mbps: RatesConfig,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            full_buffer_pct: 10.0,
            constant_rate_pct: 50.0,
            multimedia_pct: 40.0,
            rates_mbps: RatesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub cqi_period_tti: u64,
    pub cqi_delay_tti: u64,
    pub coordination_delay_tti: u64,
    pub harq_max_retx: u32,
    pub fer_steepness_db: f64,
    pub pf_window_tti: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            cqi_period_tti: 6,
            cqi_delay_tti: 2,
            coordination_delay_tti: 5,
            harq_max_retx: 3,
            fer_steepness_db: 1.0,
            pf_window_tti: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub layout: LayoutKind,
    pub buildings: usize,
    pub operators: usize,
    pub prbs_per_operator: usize,
    /// Inclusive `[min, max]` users attached to each SBS.
    pub users_per_sbs: [usize; 2],
    pub deployment_probability: f64,
    /// Defaults to 50 m (fixed) or 25 m (random) when unset.
    pub connectivity_threshold_m: Option<f64>,
    pub hotspot_radius_m: f64,
    pub tx_power_dbm: f64,
    /// Uniform sharing factor for every operator.
    pub sharing_factor: f64,
    /// Optional per-operator override of `sharing_factor`.
    pub sharing_factors: Option<Vec<f64>>,
    pub seed: u64,
    /// Optional MCS table override file.
    pub mcs_table: Option<PathBuf>,
    pub channel: ChannelConfig,
    pub traffic: TrafficConfig,
    pub link: LinkConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            layout: LayoutKind::Fixed,
            buildings: 21,
            operators: 3,
            prbs_per_operator: 16,
            users_per_sbs: [1, 2],
            deployment_probability: 0.25,
            connectivity_threshold_m: None,
            hotspot_radius_m: 20.0,
            tx_power_dbm: 20.0,
            sharing_factor: 0.0,
            sharing_factors: None,
            seed: 1,
            mcs_table: None,
            channel: ChannelConfig::default(),
            traffic: TrafficConfig::default(),
            link: LinkConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Toml(t) => Error::config(format!("{}: {t}", path.display())),
            other => other,
        })
    }

    pub fn connectivity_threshold(&self) -> f64 {
        self.connectivity_threshold_m
            .unwrap_or_else(|| self.layout.default_connectivity_m())
    }

    /// Sharing factor of every operator, resolving the per-operator override.
    pub fn resolved_sharing_factors(&self) -> Vec<f64> {
        match &self.sharing_factors {
            Some(v) => v.clone(),
            None => vec![self.sharing_factor; self.operators],
        }
    }

    /// Total PRBs across all operator bands.
    pub fn total_prbs(&self) -> usize {
        self.operators * self.prbs_per_operator
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if self.operators < 1 {
            return fail("operators must be >= 1");
        }
        if self.buildings < 1 {
            return fail("buildings must be >= 1");
        }
        if self.prbs_per_operator < 1 {
            return fail("prbs_per_operator must be >= 1");
        }
        if self.total_prbs() > crate::sharing::MAX_PRBS {
            return fail("operators x prbs_per_operator must not exceed 128");
        }
        let [lo, hi] = self.users_per_sbs;
        if lo > hi {
            return fail("users_per_sbs must be [min, max] with min <= max");
        }
        if !(0.0..=1.0).contains(&self.deployment_probability) {
            return fail("deployment_probability must be in [0, 1]");
        }
        if let Some(t) = self.connectivity_threshold_m {
            if !(t > 0.0) {
                return fail("connectivity_threshold_m must be > 0");
            }
        }
        if !(self.hotspot_radius_m > 0.0) {
            return fail("hotspot_radius_m must be > 0");
        }
        let sf = self.resolved_sharing_factors();
        if sf.len() != self.operators {
            return fail("sharing_factors must have one entry per operator");
        }
        if sf.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return fail("sharing factors must be in [0, 1]");
        }
        let t = &self.traffic;
        let pcts = [t.full_buffer_pct, t.constant_rate_pct, t.multimedia_pct];
        if pcts.iter().any(|p| *p < 0.0) || ((pcts.iter().sum::<f64>() - 100.0).abs() > 1e-6) {
            return fail("traffic percentages must be non-negative and sum to 100");
        }
        if t.rates_mbps.constant_rate < 0.0 || t.rates_mbps.multimedia < 0.0 {
            return fail("traffic rates must be non-negative");
        }
        let c = &self.channel;
        if c.evm_pct < 0.0 || c.shadowing_sigma_db < 0.0 || c.doppler_hz < 0.0 {
            return fail("evm_pct, shadowing_sigma_db and doppler_hz must be non-negative");
        }
        if !(c.carrier_ghz > 0.0) {
            return fail("carrier_ghz must be > 0");
        }
        if c.rx_antennas < 1 || c.fading_paths < 1 {
            return fail("rx_antennas and fading_paths must be >= 1");
        }
        if let Some(b) = c.coherence_prbs {
            if !(b > 0.0) {
                return fail("coherence_prbs must be > 0 (omit it for flat fading)");
            }
        }
        let l = &self.link;
        if l.cqi_period_tti < 1 || l.coordination_delay_tti < 1 {
            return fail("cqi_period_tti and coordination_delay_tti must be >= 1");
        }
        if !(l.fer_steepness_db > 0.0) || !(l.pf_window_tti >= 1.0) {
            return fail("fer_steepness_db must be > 0 and pf_window_tti >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.connectivity_threshold(), 50.0);
    }

    #[test]
    fn random_layout_threshold_default() {
        let cfg = ScenarioConfig::from_toml_str("layout = \"random\"").unwrap();
        assert_eq!(cfg.connectivity_threshold(), 25.0);
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
            layout = "random"
            buildings = 2
            users_per_sbs = [1, 4]
            [channel]
            evm_pct = 3.0
            [channel.pathloss]
            a = 40.0
            [traffic]
            full_buffer_pct = 100
            constant_rate_pct = 0
            multimedia_pct = 0
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.users_per_sbs, [1, 4]);
        assert_eq!(cfg.channel.evm_pct, 3.0);
        assert_eq!(cfg.channel.pathloss.a, 40.0);
        assert_eq!(cfg.channel.pathloss.b, 11.5);
        assert_eq!(cfg.traffic.full_buffer_pct, 100.0);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "operators = 0",
            "buildings = 0",
            "deployment_probability = 1.5",
            "users_per_sbs = [3, 1]",
            "sharing_factor = -0.1",
            "[traffic]\nfull_buffer_pct = 50",
            "unknown_key = 1",
        ] {
            assert!(ScenarioConfig::from_toml_str(bad).is_err(), "{bad}");
        }
    }
}

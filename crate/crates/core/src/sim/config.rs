use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which listen-before-talk flavour an agent runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    /// LTE-LAA eNB: ICCA initial sensing, ECCA back-off slots, multi-sub-frame bursts.
    Lte,
    /// Wi-Fi AP: DIFS initial sensing, back-off slots, one packet per access.
    Wifi,
}

/// Channel timing constants and scenario parameters.
///
/// The defaults reproduce the two-eNB / two-AP evaluation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub lte_count: usize,
    pub wifi_count: usize,
    pub difs_us: u64,
    pub wifi_slot_us: u64,
    pub icca_us: u64,
    pub ecca_slot_us: u64,
    /// Contention windows; the action set shared by every agent.
    pub cw_set: Vec<u32>,
    /// LTE channel occupation (ms, i.e. 1 ms sub-frames) for each contention window.
    pub lte_burst_ms: BTreeMap<u32, u32>,
    pub wifi_packet_bytes: u64,
    pub rate_mbps: f64,
    pub gamma: f64,
    /// Probability that an occupying transmitter is read as idle in one 1 us sensing sample.
    pub pe: f64,
    /// Decision epochs per agent in an episode.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let lte_burst_ms = [(15, 3), (31, 6), (63, 6), (127, 8), (255, 8), (511, 10), (1023, 10)]
            .into_iter()
            .collect();
        Self {
            lte_count: 2,
            wifi_count: 2,
            difs_us: 34,
            wifi_slot_us: 9,
            icca_us: 43,
            ecca_slot_us: 9,
            cw_set: vec![15, 31, 63, 127, 255, 511, 1023],
            lte_burst_ms,
            wifi_packet_bytes: 15_000,
            rate_mbps: 30.0,
            gamma: 0.9,
            pe: 0.05,
            horizon: 50,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: SimConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.agent_count() == 0 {
            return fail("at least one agent is required".into());
        }
        if self.cw_set.is_empty() {
            return fail("cw_set is empty".into());
        }
        if self.cw_set.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("cw_set must be strictly increasing: {:?}", self.cw_set));
        }
        if self.lte_count > 0 {
            for cw in &self.cw_set {
                match self.lte_burst_ms.get(cw) {
                    Some(ms) if *ms > 0 => {}
                    _ => return fail(format!("lte_burst_ms has no positive entry for cw {cw}")),
                }
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(0.0..1.0).contains(&self.pe) {
            return fail(format!("pe {} outside [0, 1)", self.pe));
        }
        if !(self.rate_mbps > 0.0 && self.rate_mbps.is_finite()) {
            return fail(format!("rate_mbps {} must be positive", self.rate_mbps));
        }
        for (name, v) in [
            ("difs_us", self.difs_us),
            ("wifi_slot_us", self.wifi_slot_us),
            ("icca_us", self.icca_us),
            ("ecca_slot_us", self.ecca_slot_us),
            ("wifi_packet_bytes", self.wifi_packet_bytes),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        Ok(())
    }

    pub fn agent_count(&self) -> usize {
        self.lte_count + self.wifi_count
    }

    /// LTE agents take ids `0..lte_count`, Wi-Fi agents follow.
    pub fn agent_kind(&self, agent: usize) -> AgentKind {
        if agent < self.lte_count {
            AgentKind::Lte
        } else {
            AgentKind::Wifi
        }
    }

    pub fn action_index(&self, cw: u32) -> Option<usize> {
        self.cw_set.iter().position(|c| *c == cw)
    }

    pub(crate) fn initial_sensing_us(&self, kind: AgentKind) -> u64 {
        match kind {
            AgentKind::Lte => self.icca_us,
            AgentKind::Wifi => self.difs_us,
        }
    }

    pub(crate) fn slot_us(&self, kind: AgentKind) -> u64 {
        match kind {
            AgentKind::Lte => self.ecca_slot_us,
            AgentKind::Wifi => self.wifi_slot_us,
        }
    }

    /// Air time of one Wi-Fi packet, rounded up to whole microseconds.
    pub fn wifi_packet_us(&self) -> u64 {
        ((self.wifi_packet_bytes * 8) as f64 / self.rate_mbps).ceil() as u64
    }

    /// Fair per-agent throughput `rate / N` used to scale the Jain inputs.
    pub fn fair_share_mbps(&self) -> f64 {
        self.rate_mbps / self.agent_count() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.agent_count(), 4);
        assert_eq!(cfg.wifi_packet_us(), 4000);
        assert_eq!(cfg.agent_kind(1), AgentKind::Lte);
        assert_eq!(cfg.agent_kind(2), AgentKind::Wifi);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = SimConfig::default();
        let cases: Vec<Box<dyn Fn(&mut SimConfig)>> = vec![
            Box::new(|c| {
                c.lte_count = 0;
                c.wifi_count = 0
            }),
            Box::new(|c| c.cw_set = vec![31, 15]),
            Box::new(|c| c.gamma = 1.0),
            Box::new(|c| c.pe = 1.0),
            Box::new(|c| {
                c.lte_burst_ms.remove(&63);
            }),
            Box::new(|c| c.horizon = 0),
        ];
        for mutate in cases {
            let mut cfg = base.clone();
            mutate(&mut cfg);
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn json_keys_round_trip() {
        let cfg = SimConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        for key in ["lte_count", "wifi_count", "difs_us", "cw_set", "lte_burst_ms", "pe", "horizon", "seed"] {
            assert!(text.contains(key), "{key} missing");
        }
        let back: SimConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<SimConfig>(r#"{"bogus": 1}"#).is_err());
    }
}

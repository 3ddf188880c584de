//! Simulation parameters and their `key=value` file form.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::routing::Strategy;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("{key}: {msg}")]
    Value { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MaintenanceMode {
    Static,
    Incremental,
}

impl MaintenanceMode {
    pub fn name(self) -> &'static str {
        match self {
            MaintenanceMode::Static => "static",
            MaintenanceMode::Incremental => "incremental",
        }
    }
}

impl fmt::Display for MaintenanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaintenanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Self::Static),
            "incremental" => Ok(Self::Incremental),
            _ => Err(format!("expected static or incremental, got {s:?}")),
        }
    }
}

/// Who triggers scheduled maintenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateScope {
    /// Every peer at the global query counts in `update_schedule`.
    Global,
    /// Each peer after every `per_peer_update_every` of its own queries.
    PerPeer,
}

impl fmt::Display for UpdateScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateScope::Global => "global",
            UpdateScope::PerPeer => "per_peer",
        })
    }
}

impl FromStr for UpdateScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(Self::Global),
            "per_peer" => Ok(Self::PerPeer),
            _ => Err(format!("expected global or per_peer, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub ttl: u32,
    pub pmax: usize,
    /// Checked against the dataset when set.
    pub overlay_size: Option<usize>,
    /// Queries routed by flooding before B0 is built.
    pub warmup_queries: usize,
    /// Global query counts at which every knowledge base is maintained.
    pub update_schedule: Vec<usize>,
    pub strategy: Strategy,
    /// `None` means intermediate peers use `strategy`.
    pub intermediate_strategy: Option<Strategy>,
    pub maintenance_mode: MaintenanceMode,
    pub update_scope: UpdateScope,
    pub per_peer_update_every: usize,
    pub sqpc_min_overlap: usize,
    /// Pad short learned selections with random neighbours.
    pub fallback: bool,
    pub seed: u64,
    /// Queries per metrics bucket.
    pub interval: usize,
}

impl Default for SimConfig {
    /// Desk-scale defaults for a 5000-query dataset.
    fn default() -> Self {
        Self {
            ttl: 4,
            pmax: 3,
            overlay_size: None,
            warmup_queries: 1000,
            update_schedule: vec![2200, 3200],
            strategy: Strategy::LpsV2,
            intermediate_strategy: None,
            maintenance_mode: MaintenanceMode::Incremental,
            update_scope: UpdateScope::Global,
            per_peer_update_every: 10,
            sqpc_min_overlap: 1,
            fallback: true,
            seed: 1,
            interval: 500,
        }
    }
}

pub const KEYS: &[&str] = &[
    "ttl",
    "pmax",
    "overlay_size",
    "warmup_queries",
    "update_schedule",
    "strategy",
    "intermediate_strategy",
    "maintenance_mode",
    "update_scope",
    "per_peer_update_every",
    "sqpc_min_overlap",
    "fallback",
    "seed",
    "interval",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        msg: format!("{value:?}: {e}"),
    })
}

impl SimConfig {
    /// Sets one field from its textual form. Used by the file parser and by
    /// command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "ttl" => self.ttl = parse(key, value)?,
            "pmax" => self.pmax = parse(key, value)?,
            "overlay_size" => {
                self.overlay_size = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "warmup_queries" => self.warmup_queries = parse(key, value)?,
            "update_schedule" => {
                self.update_schedule = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_, _>>()?
            }
            "strategy" => self.strategy = parse(key, value)?,
            "intermediate_strategy" => {
                self.intermediate_strategy = match value {
                    "same" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "maintenance_mode" => self.maintenance_mode = parse(key, value)?,
            "update_scope" => self.update_scope = parse(key, value)?,
            "per_peer_update_every" => self.per_peer_update_every = parse(key, value)?,
            "sqpc_min_overlap" => self.sqpc_min_overlap = parse(key, value)?,
            "fallback" => self.fallback = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "interval" => self.interval = parse(key, value)?,
            _ => {
                return Err(ConfigError::Value {
                    key: key.to_string(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; unknown keys are rejected.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("expected key=value, got {trimmed:?}"),
                });
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value.trim())
                .map_err(|e| ConfigError::Syntax {
                    line,
                    msg: e.to_string(),
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ttl={}", self.ttl);
        let _ = writeln!(s, "pmax={}", self.pmax);
        match self.overlay_size {
            Some(n) => {
                let _ = writeln!(s, "overlay_size={n}");
            }
            None => {
                let _ = writeln!(s, "overlay_size=auto");
            }
        }
        let _ = writeln!(s, "warmup_queries={}", self.warmup_queries);
        let schedule: Vec<String> = self.update_schedule.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "update_schedule={}", schedule.join(","));
        let _ = writeln!(s, "strategy={}", self.strategy);
        let _ = writeln!(
            s,
            "intermediate_strategy={}",
            self.intermediate_strategy.map_or("same", Strategy::name)
        );
        let _ = writeln!(s, "maintenance_mode={}", self.maintenance_mode);
        let _ = writeln!(s, "update_scope={}", self.update_scope);
        let _ = writeln!(s, "per_peer_update_every={}", self.per_peer_update_every);
        let _ = writeln!(s, "sqpc_min_overlap={}", self.sqpc_min_overlap);
        let _ = writeln!(s, "fallback={}", self.fallback);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "interval={}", self.interval);
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.ttl == 0 {
            return bad("ttl must be positive");
        }
        if self.pmax == 0 {
            return bad("pmax must be positive");
        }
        if self.interval == 0 {
            return bad("interval must be positive");
        }
        if self.overlay_size == Some(0) {
            return bad("overlay_size must be positive");
        }
        if self.per_peer_update_every == 0 {
            return bad("per_peer_update_every must be positive");
        }
        if self.update_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("update_schedule must be strictly increasing");
        }
        if self
            .update_schedule
            .first()
            .is_some_and(|&f| f <= self.warmup_queries)
        {
            return bad("update_schedule offsets must come after warmup_queries");
        }
        Ok(())
    }

    pub fn intermediate(&self) -> Strategy {
        self.intermediate_strategy.unwrap_or(self.strategy)
    }
}

//! Engine configuration: flat `key = value` lines plus `sid:mask` host-map entries.

use std::path::PathBuf;
use std::str::FromStr;

use crate::security::{CredentialSet, PrivilegeMask, Sid};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {value}")]
    BadValue { key: String, value: String },
    #[error("host name must not be empty")]
    EmptyHost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub host: String,
    pub listen: Option<String>,
    pub seeds: Vec<String>,
    pub primary: bool,
    pub call_timeout_ms: u64,
    pub fetch_timeout_ms: u64,
    pub handshake_timeout_ms: u64,
    pub ping_interval_ms: u64,
    pub ping_misses: u32,
    pub gossip_interval_ms: u64,
    /// Replace the permissive default host map with `host_map` only.
    pub lockdown: bool,
    pub host_map: Vec<(Sid, PrivilegeMask)>,
    /// This host's own SID; generated from `seed` when absent.
    pub sid: Option<Sid>,
    pub seed: u64,
    pub stdout_capture: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            host: String::new(),
            listen: None,
            seeds: Vec::new(),
            primary: false,
            call_timeout_ms: 30_000,
            fetch_timeout_ms: 30_000,
            handshake_timeout_ms: 5_000,
            ping_interval_ms: 2_000,
            ping_misses: 3,
            gossip_interval_ms: 500,
            lockdown: false,
            host_map: Vec::new(),
            sid: None,
            seed: 0,
            stdout_capture: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue { key: key.into(), value: value.into() }),
    }
}

impl EngineConfig {
    pub fn named(host: &str) -> Self {
        EngineConfig { host: host.to_string(), ..Default::default() }
    }

    pub fn parse(text: &str) -> Result<EngineConfig, ConfigError> {
        let mut cfg = EngineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                    ConfigError::UnknownKey(k) => ConfigError::Syntax { line: i + 1, message: format!("unknown key '{k}'") },
                    other => other,
                })?;
            } else if line.contains(':') {
                let entry = CredentialSet::parse_entry(line)
                    .map_err(|e| ConfigError::Syntax { line: i + 1, message: e.to_string() })?;
                cfg.host_map.push(entry);
            } else {
                return Err(ConfigError::Syntax { line: i + 1, message: format!("expected 'key = value' or 'sid:mask', got '{line}'") });
            }
        }
        Ok(cfg)
    }

    /// Applies one setting; also used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "host" => self.host = value.to_string(),
            "listen" => self.listen = Some(value.to_string()),
            "seed_endpoint" | "peer" => self.seeds.push(value.to_string()),
            "primary" => self.primary = parse_bool(key, value)?,
            "call_timeout_ms" => self.call_timeout_ms = parse_num(key, value)?,
            "fetch_timeout_ms" => self.fetch_timeout_ms = parse_num(key, value)?,
            "handshake_timeout_ms" => self.handshake_timeout_ms = parse_num(key, value)?,
            "ping_interval_ms" => self.ping_interval_ms = parse_num(key, value)?,
            "ping_misses" => self.ping_misses = parse_num(key, value)?,
            "gossip_interval_ms" => self.gossip_interval_ms = parse_num(key, value)?,
            "lockdown" => self.lockdown = parse_bool(key, value)?,
            "grant" => {
                let e = CredentialSet::parse_entry(value).map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })?;
                self.host_map.push(e);
            }
            "sid" => self.sid = Some(value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })?),
            "seed" => self.seed = parse_num(key, value)?,
            "stdout" => self.stdout_capture = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.host.is_empty() {
            return Err(ConfigError::EmptyHost);
        }
        for ep in self.listen.iter().chain(&self.seeds) {
            if ep.rsplit_once(':').and_then(|(_, p)| p.parse::<u16>().ok()).is_none() {
                return Err(ConfigError::BadValue { key: "endpoint".into(), value: ep.clone() });
            }
        }
        Ok(())
    }

    /// The host map this configuration describes, with `own` always granted ADMIN.
    pub fn build_host_map(&self, own: Sid) -> CredentialSet {
        let mut m = if self.lockdown { CredentialSet::new() } else { CredentialSet::permissive() };
        for (s, mask) in &self.host_map {
            m.grant(*s, *mask);
        }
        m.grant(own, PrivilegeMask::ALL);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::Privilege;

    #[test]
    fn parses_keys_and_grants() {
        let text = "host = alpha\nlisten = 127.0.0.1:7000\n# comment\npeer = 127.0.0.1:7001\nlockdown = true\n\
                    0102030405060708090a0b0c0d0e0f10:CREATE|EXEC\ncall_timeout_ms = 500\n";
        let c = EngineConfig::parse(text).unwrap();
        assert_eq!(c.host, "alpha");
        assert_eq!(c.seeds, vec!["127.0.0.1:7001"]);
        assert!(c.lockdown);
        assert_eq!(c.call_timeout_ms, 500);
        assert_eq!(c.host_map.len(), 1);
        c.validate().unwrap();
        let own = Sid([0xee; 16]);
        let m = c.build_host_map(own);
        assert!(!m.grants_any(&[Sid::ANONYMOUS], Privilege::Read));
        assert!(m.grants_any(&[c.host_map[0].0], Privilege::Exec));
        assert!(!m.grants_any(&[c.host_map[0].0], Privilege::Write));
        assert!(m.grants_any(&[own], Privilege::Write));
    }

    #[test]
    fn default_map_is_permissive() {
        let c = EngineConfig::named("a");
        assert!(c.build_host_map(Sid([1; 16])).grants_any(&[Sid::ANONYMOUS], Privilege::Create));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(EngineConfig::parse("what is this"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(EngineConfig::parse("colour = red"), Err(ConfigError::Syntax { .. })));
        assert!(EngineConfig::parse("call_timeout_ms = soon").is_err());
        assert_eq!(EngineConfig::default().validate(), Err(ConfigError::EmptyHost));
        let mut c = EngineConfig::named("a");
        c.listen = Some("nowhere".into());
        assert!(c.validate().is_err());
    }
}

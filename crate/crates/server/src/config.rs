//! Server configuration: a TOML or JSON file plus `RERENDER_*` environment
//! overrides.

use std::path::{Path, PathBuf};

use rerender_core::source::SourceConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_CAPTURE_FPS: f64 = 60.0;
pub const DEFAULT_JPEG_QUALITY: u8 = 85;
pub const DEFAULT_TOKEN_TTL_SECS: u64 = 24 * 60 * 60;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("environment variable {name}={value:?} is not valid")]
    Env { name: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub data_root: PathBuf,
    #[serde(default = "default_capture_fps")]
    pub capture_fps: f64,
    #[serde(default = "default_jpeg_quality")]
    pub jpeg_quality: u8,
    #[serde(default = "default_token_ttl")]
    pub token_ttl_secs: u64,
    #[serde(default)]
    pub users: Vec<UserConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub name: String,
    /// Plain password, hashed at startup. Use `password_hash` to keep
    /// secrets out of the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password: Option<String>,
    /// An argon2 PHC string.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password_hash: Option<String>,
    #[serde(default)]
    pub sources: Vec<SourceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub source_id: String,
    #[serde(flatten)]
    pub config: SourceConfig,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_port() -> u16 {
    DEFAULT_PORT
}
fn default_capture_fps() -> f64 {
    DEFAULT_CAPTURE_FPS
}
fn default_jpeg_quality() -> u8 {
    DEFAULT_JPEG_QUALITY
}
fn default_token_ttl() -> u64 {
    DEFAULT_TOKEN_TTL_SECS
}

impl ServerConfig {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind: default_bind(),
            port: DEFAULT_PORT,
            data_root: data_root.into(),
            capture_fps: DEFAULT_CAPTURE_FPS,
            jpeg_quality: DEFAULT_JPEG_QUALITY,
            token_ttl_secs: DEFAULT_TOKEN_TTL_SECS,
            users: Vec::new(),
        }
    }

    /// Reads `path` (JSON when the extension is `.json`, TOML otherwise),
    /// applies environment overrides and validates the result.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let parse_err = |reason: String| ConfigError::Parse { path: path.into(), reason };
        let mut cfg: ServerConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides from `RERENDER_PORT`, `RERENDER_DATA_ROOT`,
    /// `RERENDER_CAPTURE_FPS` and `RERENDER_JPEG_QUALITY`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(name: &'static str, value: String) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::Env { name, value })
        }
        if let Some(v) = get("RERENDER_PORT") {
            self.port = parse("RERENDER_PORT", v)?;
        }
        if let Some(v) = get("RERENDER_DATA_ROOT") {
            self.data_root = PathBuf::from(v);
        }
        if let Some(v) = get("RERENDER_CAPTURE_FPS") {
            self.capture_fps = parse("RERENDER_CAPTURE_FPS", v)?;
        }
        if let Some(v) = get("RERENDER_JPEG_QUALITY") {
            self.jpeg_quality = parse("RERENDER_JPEG_QUALITY", v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.capture_fps.is_finite() && self.capture_fps > 0.0) {
            return bad(format!("capture_fps must be positive, got {}", self.capture_fps));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return bad(format!("jpeg_quality must be within 1..=100, got {}", self.jpeg_quality));
        }
        if self.token_ttl_secs == 0 {
            return bad("token_ttl_secs must be positive".into());
        }
        let mut seen = std::collections::HashSet::new();
        for u in &self.users {
            if !rerender_core::is_valid_user(&u.name) {
                return bad(format!("user name {:?} must be 1-64 of [A-Za-z0-9_-]", u.name));
            }
            if !seen.insert(u.name.as_str()) {
                return bad(format!("user {} is listed twice", u.name));
            }
            if u.password.is_some() == u.password_hash.is_some() {
                return bad(format!("user {} needs exactly one of password or password_hash", u.name));
            }
            let mut ids = std::collections::HashSet::new();
            for s in &u.sources {
                if !ids.insert(s.source_id.as_str()) {
                    return bad(format!("user {} lists source {} twice", u.name, s.source_id));
                }
            }
        }
        Ok(())
    }

    pub fn addr(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML_CFG: &str = r#"
data_root = "/tmp/x"
port = 9000

[[users]]
name = "alice"
password = "pw"

[[users.sources]]
source_id = "phone"
kind = "synthetic"
skin = "mobile-a"
fps = 30.0
"#;

    #[test]
    fn toml_with_flattened_sources() {
        let cfg: ServerConfig = toml::from_str(TOML_CFG).unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.jpeg_quality, 85);
        let s = &cfg.users[0].sources[0];
        assert_eq!(s.source_id, "phone");
        assert!(matches!(&s.config, SourceConfig::Synthetic { skin, .. } if skin == "mobile-a"));
        cfg.validate().unwrap();
    }

    #[test]
    fn env_overrides() {
        let mut cfg = ServerConfig::new("/data");
        let env = |k: &str| match k {
            "RERENDER_PORT" => Some("1234".to_string()),
            "RERENDER_JPEG_QUALITY" => Some("70".to_string()),
            _ => None,
        };
        cfg.apply_env(env).unwrap();
        assert_eq!((cfg.port, cfg.jpeg_quality), (1234, 70));
        let err = cfg.apply_env(|k| (k == "RERENDER_CAPTURE_FPS").then(|| "fast".to_string()));
        assert!(matches!(err, Err(ConfigError::Env { .. })));
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ServerConfig::new("/data");
        cfg.jpeg_quality = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ServerConfig::new("/data");
        cfg.users.push(UserConfig { name: "a b".into(), password: Some("x".into()), password_hash: None, sources: vec![] });
        assert!(cfg.validate().is_err());
    }
}

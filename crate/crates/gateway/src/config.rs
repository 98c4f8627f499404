//! Server configuration: a flat `key = value` TOML file with `PG_*`
//! environment overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_zone")]
    pub zone: String,
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Journal directory; absent means a volatile in-memory zone.
    pub journal_dir: Option<PathBuf>,
    pub default_resource: Option<String>,
    #[serde(default = "default_admin")]
    pub admin_user: String,
    /// Used only to bootstrap the administrator of an empty zone.
    pub admin_secret: Option<String>,
}

fn default_zone() -> String {
    "pgzone".into()
}

fn default_bind() -> String {
    "127.0.0.1:1247".into()
}

fn default_admin() -> String {
    "root".into()
}

impl Default for Config {
    fn default() -> Self {
        Config {
            zone: default_zone(),
            bind: default_bind(),
            journal_dir: None,
            default_resource: None,
            admin_user: default_admin(),
            admin_secret: None,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    /// Reads `path` (if given) and applies overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Config, GatewayError> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| GatewayError::Config(format!("{}: {e}", p.display())))?;
                Config::parse(&text)?
            }
            None => Config::default(),
        };
        for (k, v) in env {
            match k.as_str() {
                "PG_ZONE" => cfg.zone = v,
                "PG_BIND" => cfg.bind = v,
                "PG_JOURNAL_DIR" => cfg.journal_dir = Some(v.into()),
                "PG_DEFAULT_RESOURCE" => cfg.default_resource = Some(v),
                "PG_ADMIN_USER" => cfg.admin_user = v,
                "PG_ADMIN_SECRET" => cfg.admin_secret = Some(v),
                _ => {}
            }
        }
        Ok(cfg)
    }
}

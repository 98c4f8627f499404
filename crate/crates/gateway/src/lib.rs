//! Network front door for a pgzone zone: bearer-token sessions, an
//! HTTP/JSON API over the engine, and a blocking client for it.

pub mod auth;
pub mod cli;
pub mod client;
pub mod config;
pub mod server;
pub mod wire;

use std::sync::Arc;

use pgzone_core::Zone;

pub use client::{Client, ClientError};
pub use config::Config;
pub use server::{router, spawn, AppState, ServerHandle};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot bind {0}")]
    BindFailed(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("server: {0}")]
    Serve(String),
    #[error(transparent)]
    Zone(#[from] pgzone_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opens (or creates) the zone described by `cfg`. An empty zone gets its
/// administrator from `admin_user` / `admin_secret`.
pub fn open_zone(cfg: &Config) -> Result<Zone, GatewayError> {
    let zone = match &cfg.journal_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Zone::open(dir)?
        }
        None => Zone::in_memory(),
    };
    if zone.catalog().read().users.is_empty() {
        let secret = cfg
            .admin_secret
            .as_deref()
            .ok_or_else(|| GatewayError::Config("empty zone needs admin_secret to create its administrator".into()))?;
        zone.catalog().bootstrap_admin(&cfg.admin_user, secret)?;
    }
    if let Some(r) = &cfg.default_resource {
        if zone.catalog().resource(r).is_some() {
            zone.set_default_resource(r)?;
        }
    }
    Ok(zone)
}

/// Serves until SIGINT or SIGTERM, then drains requests and checkpoints.
pub fn serve(cfg: &Config) -> Result<(), GatewayError> {
    let zone = Arc::new(open_zone(cfg)?);
    let handle = spawn(zone, &cfg.bind)?;
    eprintln!("zone {} listening on {}", cfg.zone, handle.url());
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async {
        #[cfg(unix)]
        {
            use tokio::signal::unix::{signal, SignalKind};
            let mut term = signal(SignalKind::terminate())?;
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
        }
        #[cfg(not(unix))]
        tokio::signal::ctrl_c().await?;
        Ok::<_, std::io::Error>(())
    })?;
    handle.shutdown()
}

//! Live intervention service: a WebSocket endpoint that streams frames to a
//! browser and feeds human takeovers back into training.

pub mod governor;
pub mod protocol;
pub mod server;
mod source;

use std::net::SocketAddr;
use std::time::Duration;

use log::info;
use serde::{Deserialize, Serialize};

pub use governor::FrameRateGovernor;
pub use server::{Clients, Inbound, LiveServer};
pub use source::LiveSource;

use crate::harness::{scripted_oracle, HarnessError, InterventionConfig, RunConfig, RunOutput, Trainer};
use crate::oracle::OracleSpec;

/// What happens when the controlling client disconnects mid-takeover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    Pause,
    /// Keep going under the scripted oracle (or unsupervised if none).
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveConfig {
    pub host: String,
    pub port: u16,
    /// Environment steps per second while a client watches.
    pub hz: f64,
    pub fallback: Fallback,
    /// Supervises whenever no human holds control.
    pub oracle: Option<OracleSpec>,
    /// Wait for the supervisor's verdict on every proposal instead of pacing.
    pub lockstep: bool,
    pub lockstep_timeout_ms: u64,
    /// Seconds to wait for the first client before training starts; 0 starts at once.
    pub wait_for_client_s: f64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8765,
            hz: 10.0,
            fallback: Fallback::Pause,
            oracle: None,
            lockstep: false,
            lockstep_timeout_ms: 5000,
            wait_for_client_s: 0.0,
        }
    }
}

impl LiveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.hz.is_finite() && self.hz > 0.0) {
            return Err(format!("live frame rate must be positive, got {}", self.hz));
        }
        if self.lockstep && self.lockstep_timeout_ms == 0 {
            return Err("lockstep timeout must be positive".into());
        }
        if !(self.wait_for_client_s.is_finite() && self.wait_for_client_s >= 0.0) {
            return Err(format!("bad client wait {}", self.wait_for_client_s));
        }
        if let Some(o) = &self.oracle {
            o.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Runs a live session; see [`serve_with`].
pub fn serve(cfg: RunConfig) -> Result<RunOutput, HarnessError> {
    serve_with(cfg, |addr| info!("live session listening on ws://{addr}"))
}

/// Starts the WebSocket server, reports the bound address through
/// `on_ready`, and trains until the step budget is spent.
pub fn serve_with(cfg: RunConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<RunOutput, HarnessError> {
    let InterventionConfig::Live(live) = &cfg.oracle else {
        return Err(HarnessError::Config("serve needs an oracle of source \"live\"".into()));
    };
    let live = live.clone();
    live.validate().map_err(HarnessError::Config)?;
    let (server, inbound) = LiveServer::start(&live.host, live.port)?;
    let oracle = live.oracle.as_ref().map(|o| scripted_oracle(o, cfg.seed)).transpose()?;
    let mut source = LiveSource::new(&live, inbound, server.clients(), oracle).map_err(HarnessError::Config)?;
    on_ready(server.addr());
    if live.wait_for_client_s > 0.0 && !source.wait_for_client(Duration::from_secs_f64(live.wait_for_client_s)) {
        return Err(HarnessError::Live("no client connected".into()));
    }
    let out = Trainer::with_source(cfg, Box::new(source))?.run();
    drop(server);
    out
}

//! Three-party deployment: client, storage server Y, and proxy X.
//!
//! Y stores the encrypted co-occurrence matrix and drives the recommendation
//! loop. X holds the other half of the multiplicative key and answers switch
//! requests. Neither server ever sees a secret it could decrypt with.

mod client;
mod deploy;
mod proxy;
mod server;
mod transport;
pub mod wire;

use std::fmt;

pub use client::{Client, ClientConfig, RecommendOutcome, SessionFile, StageTimings};
pub use deploy::{loopback_transport, Loopback, TcpDeployment};
pub use proxy::ProxyX;
pub use server::ServerY;
pub use transport::{
    serve_tcp, spawn_tcp_service, Channel, Connector, Direction, Link, LoopbackChannel, LoopbackConnector, Service,
    TcpChannel, TcpConnector, Transcript, TranscriptFrame,
};

use crate::error::{Error, Result};
use crate::she::{MulPublicKey, ShareFile};
use wire::{Body, Envelope};

pub(crate) fn reply(session: u64, seq: u64, body: Body) -> Vec<u8> {
    Envelope::new(session, seq, body).encode()
}

pub(crate) fn abort_body(stage: &str, reason: impl Into<String>, retry: bool) -> Body {
    Body::Abort { stage: stage.into(), reason: reason.into(), retry }
}

/// Stores the receiving server's share next to its public key material.
pub(crate) fn write_share_file(
    dir: &std::path::Path,
    role: &str,
    session: u64,
    pk: &MulPublicKey,
    share: &num_bigint::BigUint,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = ShareFile {
        n: pk.n().clone(),
        g: pk.g().clone(),
        h: pk.h().clone(),
        mul_share: share.clone(),
        add_share: None,
    };
    let path = dir.join(format!("{role}_share_{session}.json"));
    std::fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Setup,
    Init,
    Recommend,
    Filter,
    Update,
    Closed,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Setup => "setup",
            Stage::Init => "init",
            Stage::Recommend => "recommend",
            Stage::Filter => "filter",
            Stage::Update => "update",
            Stage::Closed => "closed",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stage tracking for one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    stage: Stage,
    init_complete: bool,
}

impl Default for SessionState {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionState {
    pub fn new() -> Self {
        Self { stage: Stage::Setup, init_complete: false }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn init_complete(&self) -> bool {
        self.init_complete
    }

    pub fn complete_init(&mut self) {
        self.init_complete = true;
    }

    /// Whether moving to `to` is legal from here.
    pub fn allows(&self, to: Stage) -> bool {
        use Stage::*;
        match (self.stage, to) {
            (Closed, _) => false,
            (_, Closed) => true,
            (Setup, Init) | (Init, Init) => !self.init_complete,
            (Init, Recommend) | (Init, Update) => self.init_complete,
            (Recommend, Recommend) | (Recommend, Filter) => true,
            (Filter, Recommend) | (Filter, Update) => true,
            (Update, Update) | (Update, Recommend) => true,
            _ => false,
        }
    }

    /// Moves to `to`, or reports the violation and leaves the state alone.
    pub fn advance(&mut self, to: Stage) -> Result<()> {
        if !self.allows(to) {
            return Err(Error::Stage {
                stage: self.stage.name().into(),
                reason: format!("transition to {to} not allowed"),
            });
        }
        self.stage = to;
        Ok(())
    }
}

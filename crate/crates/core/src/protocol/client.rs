use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, GridCell};
use crate::protocol::transport::Channel;
use crate::protocol::wire::{Body, Envelope, MulWire, NestedWire};
use crate::protocol::{abort_body, Stage};
use crate::recommender::{
    check_score_bound, cm_delta, select_nearby, CoMatrix, PreferenceVector, Recommendation, DEFAULT_RADIUS,
    DEFAULT_RATING_MAX,
};
use crate::she::SheKeys;
use crate::switch::{pair_encode, strip_outer, NestedCiphertext};

/// Session ids stay below 2^53 so JSON readers without 64-bit integers
/// still see them exactly.
const SESSION_ID_MASK: u64 = (1 << 53) - 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientConfig {
    /// Hilbert curve order of the location grid.
    pub order: u32,
    /// Items within this many curve steps of the client are kept.
    pub radius: u64,
    pub rating_max: u32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self { order: hilbert::DEFAULT_ORDER, radius: DEFAULT_RADIUS, rating_max: DEFAULT_RATING_MAX }
    }
}

/// What a client needs to pick a session back up in a later process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFile {
    pub session: u64,
    pub seq_y: u64,
    pub seq_x: u64,
    pub size: Option<usize>,
    /// Upper bound on any aggregated matrix entry.
    pub max_weight: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageTimings {
    pub encrypt: Duration,
    pub recommend: Duration,
    pub decrypt: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommendOutcome {
    pub items: Vec<Recommendation>,
    /// Hilbert index of the client's cell.
    pub location: u64,
    pub timings: StageTimings,
}

/// The key-owning party. Talks to Y and X over two channels.
pub struct Client {
    keys: SheKeys,
    config: ClientConfig,
    rng: ChaCha20Rng,
    session: u64,
    seq_y: u64,
    seq_x: u64,
    to_y: Box<dyn Channel>,
    to_x: Box<dyn Channel>,
    size: Option<usize>,
    max_weight: u64,
}

impl Client {
    pub fn new(
        keys: SheKeys,
        to_y: Box<dyn Channel>,
        to_x: Box<dyn Channel>,
        config: ClientConfig,
        seed: Option<u64>,
    ) -> Self {
        let mut rng = match seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        let session = rng.gen::<u64>() & SESSION_ID_MASK;
        Self { keys, config, rng, session, seq_y: 0, seq_x: 0, to_y, to_x, size: None, max_weight: 0 }
    }

    pub fn resume(
        keys: SheKeys,
        to_y: Box<dyn Channel>,
        to_x: Box<dyn Channel>,
        config: ClientConfig,
        file: &SessionFile,
        seed: Option<u64>,
    ) -> Self {
        let mut client = Self::new(keys, to_y, to_x, config, seed);
        client.session = file.session;
        client.seq_y = file.seq_y;
        client.seq_x = file.seq_x;
        client.size = file.size;
        client.max_weight = file.max_weight;
        client
    }

    pub fn session_id(&self) -> u64 {
        self.session
    }

    pub fn session_file(&self) -> SessionFile {
        SessionFile {
            session: self.session,
            seq_y: self.seq_y,
            seq_x: self.seq_x,
            size: self.size,
            max_weight: self.max_weight,
        }
    }

    pub fn keys(&self) -> &SheKeys {
        &self.keys
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn exchange(channel: &mut dyn Channel, session: u64, seq: &mut u64, body: Body) -> Result<Body> {
        let sent = *seq;
        *seq += 1;
        let bytes = channel.exchange(&Envelope::new(session, sent, body).encode())?;
        let response = Envelope::decode(&bytes)?;
        if response.session != session || response.seq != sent {
            return Err(Error::ProtocolOrder(format!(
                "response for session {} seq {} does not match request seq {sent}",
                response.session, response.seq
            )));
        }
        match response.body {
            Body::Abort { stage, reason, .. } => Err(Error::Aborted { stage, reason }),
            body => Ok(body),
        }
    }

    /// Sends one message to Y and returns its reply. ABORT replies become
    /// errors; the caller decides whether to tear down.
    pub fn send_y(&mut self, body: Body) -> Result<Body> {
        Self::exchange(self.to_y.as_mut(), self.session, &mut self.seq_y, body)
    }

    pub fn send_x(&mut self, body: Body) -> Result<Body> {
        Self::exchange(self.to_x.as_mut(), self.session, &mut self.seq_x, body)
    }

    fn expect_ack(body: Body) -> Result<()> {
        match body {
            Body::Ack => Ok(()),
            other => Err(Error::Wire(format!("expected ACK, got {}", other.type_name()))),
        }
    }

    /// Best-effort ABORT to both servers.
    pub fn abort(&mut self, stage: Stage, reason: &str) {
        for to_y in [true, false] {
            let body = abort_body(stage.name(), reason, false);
            let res = if to_y { self.send_y(body) } else { self.send_x(body) };
            if let Err(e) = res {
                log::debug!("abort not delivered: {e}");
            }
        }
    }

    /// Runs `f`; on failure aborts the session on both servers.
    fn guarded<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        match f(self) {
            Ok(v) => Ok(v),
            Err(e) => {
                let reason = e.to_string();
                self.abort(stage, &reason);
                Err(match e {
                    e @ Error::Aborted { .. } => e,
                    e => Error::Aborted { stage: stage.name().into(), reason: e.to_string() },
                })
            }
        }
    }

    /// Distributes the public key and one share to each server.
    pub fn setup(&mut self) -> Result<()> {
        self.guarded(Stage::Setup, |c| {
            let pk = c.keys.mul.public.clone();
            let setup = |share: &BigUint| Body::SetupKeys {
                n: pk.n().clone(),
                g: pk.g().clone(),
                h: pk.h().clone(),
                mul_share: share.clone(),
                add_share: None,
            };
            let to_x = setup(&c.keys.shares.proxy.mul);
            let to_y = setup(&c.keys.shares.server.mul);
            Self::expect_ack(c.send_x(to_x)?)?;
            Self::expect_ack(c.send_y(to_y)?)
        })
    }

    fn strip(&self, entries: &[NestedWire]) -> Result<Vec<BigUint>> {
        let pk_add = &self.keys.add.public;
        entries
            .iter()
            .map(|e| {
                let nested = NestedCiphertext::new(pk_add.ciphertext(e.outer.clone())?, e.comp.clone())?;
                strip_outer(&self.keys.add.secret, &nested)
            })
            .collect()
    }

    /// Answers a strip request and waits for Y to confirm.
    fn serve_strip(&mut self, entries: &[NestedWire]) -> Result<()> {
        let values = self.strip(entries)?;
        Self::expect_ack(self.send_y(Body::InitStripResp { values })?)
    }

    /// Uploads the per-user matrices and lets Y build its encrypted database.
    /// With no contributions the database is all zeros.
    pub fn initialize(&mut self, size: usize, contributions: &[CoMatrix]) -> Result<()> {
        if let Some(bad) = contributions.iter().find(|cm| cm.size() != size) {
            return Err(Error::Domain(format!("contribution of size {} in a {size}-item session", bad.size())));
        }
        let max_weight: u64 = (0..size * size)
            .map(|k| contributions.iter().map(|cm| cm.entries()[k]).sum::<u64>())
            .max()
            .unwrap_or(0);
        check_score_bound(size, self.config.rating_max, max_weight, self.keys.add.public.n())?;
        self.guarded(Stage::Init, |c| {
            let pk_add = c.keys.add.public.clone();
            let count = contributions.len().max(1);
            for k in 0..count {
                let entries = match contributions.get(k) {
                    Some(cm) => cm
                        .entries()
                        .iter()
                        .map(|&v| Ok(pk_add.encrypt(&BigUint::from(v), &mut c.rng)?.value().clone()))
                        .collect::<Result<Vec<_>>>()?,
                    None => Vec::new(),
                };
                let last = k + 1 == count;
                match c.send_y(Body::CmContrib { size: size as u64, entries, last })? {
                    Body::Ack if !last => {}
                    Body::InitStripReq { entries } if last => c.serve_strip(&entries)?,
                    other => return Err(Error::Wire(format!("unexpected {} during init", other.type_name()))),
                }
            }
            c.size = Some(size);
            c.max_weight = max_weight;
            Ok(())
        })
    }

    /// Encrypted recommendation for `pv` at grid cell `cell`.
    pub fn recommend(&mut self, pv: &PreferenceVector, cell: GridCell) -> Result<RecommendOutcome> {
        let size = self.size.ok_or_else(|| Error::Stage {
            stage: Stage::Recommend.name().into(),
            reason: "session not initialized".into(),
        })?;
        if pv.len() != size {
            return Err(Error::Domain(format!("preference vector has {} entries, expected {size}", pv.len())));
        }
        if pv.ratings().iter().any(|&r| r > self.config.rating_max) {
            return Err(Error::Domain(format!("rating above {}", self.config.rating_max)));
        }
        let location = hilbert::xy_to_index(cell, self.config.order)?.d();
        check_score_bound(size, self.config.rating_max, self.max_weight, self.keys.add.public.n())?;

        self.guarded(Stage::Recommend, |c| {
            let mut timings = StageTimings::default();
            let t = Instant::now();
            let pk_mul = c.keys.mul.public.clone();
            let mut hi = Vec::with_capacity(size);
            let mut lo = Vec::with_capacity(size);
            for &r in pv.ratings() {
                let pair = pair_encode(&pk_mul, &BigUint::from(r), &mut c.rng)?;
                hi.push(MulWire { c1: pair.hi.c1().clone(), c2: pair.hi.c2().clone() });
                lo.push(MulWire { c1: pair.lo.c1().clone(), c2: pair.lo.c2().clone() });
            }
            let loc = c.keys.add.public.encrypt(&BigUint::from(location), &mut c.rng)?.value().clone();
            timings.encrypt = t.elapsed();

            let t = Instant::now();
            match c.send_y(Body::PvUpload { size: size as u64, hi, lo })? {
                Body::Ack => {}
                Body::InitStripReq { entries } => c.serve_strip(&entries)?,
                other => return Err(Error::Wire(format!("unexpected {} after PV_UPLOAD", other.type_name()))),
            }
            let (scores, offsets) = match c.send_y(Body::LocUpload { loc })? {
                Body::RlResponse { scores, offsets } => (scores, offsets),
                other => return Err(Error::Wire(format!("unexpected {} after LOC_UPLOAD", other.type_name()))),
            };
            timings.recommend = t.elapsed();

            let t = Instant::now();
            if scores.len() != size || offsets.len() != size {
                return Err(Error::Wire(format!("recommendation list has {}/{} rows", scores.len(), offsets.len())));
            }
            let items = c.decrypt_list(&scores, &offsets)?;
            timings.decrypt = t.elapsed();
            Ok(RecommendOutcome { items, location, timings })
        })
    }

    fn decrypt_list(&self, scores: &[BigUint], offsets: &[BigUint]) -> Result<Vec<Recommendation>> {
        let pk_add = &self.keys.add.public;
        let sk_add = &self.keys.add.secret;
        let decrypted = scores
            .iter()
            .zip(offsets)
            .enumerate()
            .map(|(item, (s, o))| {
                let score = sk_add.decrypt_crt(&pk_add.ciphertext(s.clone())?)?;
                let offset = sk_add.decrypt_crt(&pk_add.ciphertext(o.clone())?)?;
                Ok((item, score, offset))
            })
            .collect::<Result<Vec<_>>>()?;
        select_nearby(&decrypted, self.config.radius, pk_add.n())
    }

    /// Sends one user's matrix change. Y refreshes its pair encodings on the
    /// next recommendation.
    pub fn update(&mut self, old: &CoMatrix, new: &CoMatrix) -> Result<()> {
        let size = self.size.ok_or_else(|| Error::Stage {
            stage: Stage::Update.name().into(),
            reason: "session not initialized".into(),
        })?;
        if old.size() != size {
            return Err(Error::Domain(format!("matrix size {} in a {size}-item session", old.size())));
        }
        let growth = old.entries().iter().zip(new.entries()).map(|(&o, &n)| n.saturating_sub(o)).max().unwrap_or(0);
        let max_weight = self.max_weight + growth;
        let n = self.keys.add.public.n().clone();
        check_score_bound(size, self.config.rating_max, max_weight, &n)?;
        let delta = cm_delta(old, new, &n)?;
        self.guarded(Stage::Update, |c| {
            let pk_add = c.keys.add.public.clone();
            let entries = delta
                .iter()
                .map(|d| Ok(pk_add.encrypt(d, &mut c.rng)?.value().clone()))
                .collect::<Result<Vec<_>>>()?;
            Self::expect_ack(c.send_y(Body::CmDelta { size: size as u64, entries })?)?;
            c.max_weight = max_weight;
            Ok(())
        })
    }
}

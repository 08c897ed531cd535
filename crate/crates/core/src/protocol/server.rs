use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::protocol::transport::{Channel, Connector, Service};
use crate::protocol::wire::{Body, Envelope, MulWire, NestedWire};
use crate::protocol::{abort_body, reply, write_share_file, SessionState, Stage};
use crate::recommender::{filter_by_location, recommend_encrypted};
use crate::she::{AddCiphertext, AddPublicKey, MulPublicKey};
use crate::switch::{
    blind_to_nested_pair, unwrap_stripped, with_retries, wrap_mul, MulToAddRound2, NestedCiphertext,
    PairEncodedValue, SwitchContext, SwitchServer,
};

/// Largest item count a session may declare.
pub const MAX_ITEMS: u64 = 4096;

/// The encrypted co-occurrence matrix, in both encodings.
struct EncryptedDatabase {
    size: usize,
    cm_add: Vec<AddCiphertext>,
    cm_pairs: Vec<PairEncodedValue>,
    /// `cm_add` changed since `cm_pairs` was derived.
    dirty: bool,
}

struct YSession {
    state: SessionState,
    next_client_seq: u64,
    pk_mul: MulPublicKey,
    pk_add: AddPublicKey,
    switch: SwitchServer,
    rng: ChaCha20Rng,
    proxy: Box<dyn Channel>,
    proxy_seq: u64,
    size: Option<usize>,
    aggregate: Option<Vec<AddCiphertext>>,
    db: Option<EncryptedDatabase>,
    /// Companions of the nested ciphertexts awaiting INIT_STRIP_RESP.
    pending_strip: Option<Vec<BigUint>>,
    pv: Option<Vec<PairEncodedValue>>,
}

impl fmt::Debug for YSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("YSession")
            .field("state", &self.state)
            .field("next_client_seq", &self.next_client_seq)
            .field("pk_mul", &self.pk_mul)
            .field("switch", &self.switch)
            .field("rng", &self.rng)
            .field("proxy_seq", &self.proxy_seq)
            .field("size", &self.size)
            .field("aggregate", &self.aggregate)
            .field("cm_add", &self.db.as_ref().map(|d| &d.cm_add))
            .field("cm_pairs", &self.db.as_ref().map(|d| &d.cm_pairs))
            .field("dirty", &self.db.as_ref().map(|d| d.dirty))
            .field("pending_strip", &self.pending_strip)
            .field("pv", &self.pv)
            .finish()
    }
}

/// Server Y: stores the encrypted matrix and runs the recommendation loop,
/// calling server X for every switch.
pub struct ServerY {
    proxy: Box<dyn Connector>,
    seed: Option<u64>,
    key_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<u64, Arc<Mutex<YSession>>>>,
}

fn is_rejection(e: &Error) -> bool {
    matches!(e, Error::Stage { .. } | Error::ProtocolOrder(_) | Error::Domain(_) | Error::Wire(_) | Error::Format(_))
}

fn fatal(stage: Stage) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ Error::Aborted { .. } => e,
        e => Error::Aborted { stage: stage.name().into(), reason: e.to_string() },
    }
}

fn stage_error(stage: Stage, reason: &str) -> Error {
    Error::Stage { stage: stage.name().into(), reason: reason.into() }
}

impl ServerY {
    /// `seed` makes every session's randomness reproducible; `key_dir`
    /// receives a share file per session.
    pub fn new(proxy: Box<dyn Connector>, seed: Option<u64>, key_dir: Option<PathBuf>) -> Self {
        Self { proxy, seed, key_dir, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Debug rendering of everything Y keeps in memory.
    pub fn debug_state(&self) -> String {
        let sessions = self.sessions.lock().unwrap();
        let mut ids: Vec<_> = sessions.keys().copied().collect();
        ids.sort_unstable();
        ids.iter()
            .map(|id| format!("{id}: {:?}", sessions[id].lock().unwrap()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Stage of a live session.
    pub fn stage(&self, session: u64) -> Option<Stage> {
        let s = self.sessions.lock().unwrap().get(&session)?.clone();
        let stage = s.lock().unwrap().state.stage();
        Some(stage)
    }

    fn setup(&self, env: &Envelope) -> Result<Body> {
        let Body::SetupKeys { n, g, h, mul_share, add_share } = &env.body else { unreachable!() };
        if add_share.is_some() {
            return Err(stage_error(Stage::Setup, "servers never receive an additive share"));
        }
        if env.seq != 0 {
            return Err(Error::ProtocolOrder(format!("SETUP_KEYS must carry seq 0, got {}", env.seq)));
        }
        let pk_mul = MulPublicKey::new(n.clone(), g.clone(), h.clone())?;
        if mul_share.is_zero() || mul_share >= pk_mul.n() {
            return Err(Error::Domain("share outside [1, N)".into()));
        }
        if self.sessions.lock().unwrap().contains_key(&env.session) {
            return Err(stage_error(Stage::Setup, "session already set up"));
        }
        if let Some(dir) = &self.key_dir {
            write_share_file(dir, "server", env.session, &pk_mul, mul_share)?;
        }
        let rng = match self.seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed ^ env.session.rotate_left(29)),
            None => ChaCha20Rng::from_entropy(),
        };
        let session = YSession {
            state: SessionState::new(),
            next_client_seq: 1,
            pk_add: pk_mul.add_public(),
            switch: SwitchServer::new(pk_mul.clone(), mul_share.clone()),
            pk_mul,
            rng,
            proxy: self.proxy.connect()?,
            proxy_seq: 0,
            size: None,
            aggregate: None,
            db: None,
            pending_strip: None,
            pv: None,
        };
        self.sessions.lock().unwrap().insert(env.session, Arc::new(Mutex::new(session)));
        Ok(Body::Ack)
    }

    fn drop_session(&self, id: u64, notify_proxy: Option<(&mut YSession, &str, &str)>) {
        self.sessions.lock().unwrap().remove(&id);
        if let Some((s, stage, reason)) = notify_proxy {
            let msg = Envelope::new(id, s.proxy_seq, abort_body(stage, reason, false)).encode();
            s.proxy_seq += 1;
            if let Err(e) = s.proxy.exchange(&msg) {
                log::debug!("session {id}: proxy not told about abort: {e}");
            }
        }
    }
}

impl YSession {
    fn dispatch(&mut self, session: u64, body: &Body) -> Result<Body> {
        match body {
            Body::CmContrib { size, entries, last } => self.contribute(*size, entries, *last),
            Body::InitStripResp { values } => self.stripped(values),
            Body::PvUpload { size, hi, lo } => self.upload_pv(*size, hi, lo),
            Body::LocUpload { loc } => self.recommend(session, loc),
            Body::CmDelta { size, entries } => self.update(*size, entries),
            other => Err(stage_error(self.state.stage(), &format!("{} not accepted by server Y", other.type_name()))),
        }
    }

    fn check_size(&self, size: u64) -> Result<usize> {
        if size == 0 || size > MAX_ITEMS {
            return Err(Error::Domain(format!("item count {size} outside [1, {MAX_ITEMS}]")));
        }
        let size = size as usize;
        if let Some(known) = self.size {
            if known != size {
                return Err(Error::Domain(format!("session has {known} items, message declares {size}")));
            }
        }
        Ok(size)
    }

    fn parse_add(&self, values: &[BigUint]) -> Result<Vec<AddCiphertext>> {
        values.iter().map(|v| self.pk_add.ciphertext(v.clone())).collect()
    }

    fn no_pending_strip(&self) -> Result<()> {
        if self.pending_strip.is_some() {
            return Err(stage_error(self.state.stage(), "waiting for INIT_STRIP_RESP"));
        }
        Ok(())
    }

    /// Blinds every additive entry and hands the nested pairs to the client.
    fn strip_request(&mut self, entries: &[AddCiphertext]) -> Result<Body> {
        let mut wire = Vec::with_capacity(entries.len() * 2);
        let mut companions = Vec::with_capacity(entries.len() * 2);
        for c in entries {
            let (hi, lo) = blind_to_nested_pair(c, &self.pk_mul, &mut self.rng)?;
            for nested in [hi, lo] {
                wire.push(NestedWire { outer: nested.outer().value().clone(), comp: nested.companion().clone() });
                companions.push(nested.companion().clone());
            }
        }
        self.pending_strip = Some(companions);
        Ok(Body::InitStripReq { entries: wire })
    }

    fn contribute(&mut self, size: u64, entries: &[BigUint], last: bool) -> Result<Body> {
        if !self.state.allows(Stage::Init) {
            return Err(stage_error(self.state.stage(), "matrix contributions are closed"));
        }
        self.no_pending_strip()?;
        let size = self.check_size(size)?;
        if !entries.is_empty() && entries.len() != size * size {
            return Err(Error::Domain(format!("expected {} entries, got {}", size * size, entries.len())));
        }
        let contribution = self.parse_add(entries)?;
        self.state.advance(Stage::Init)?;
        self.size = Some(size);
        if !contribution.is_empty() {
            self.aggregate = Some(match self.aggregate.take() {
                None => contribution,
                Some(acc) => acc.iter().zip(&contribution).map(|(a, b)| a.add(b)).collect::<Result<_>>()?,
            });
        }
        if !last {
            return Ok(Body::Ack);
        }
        let aggregate = self.aggregate.take().unwrap_or_else(|| vec![self.pk_add.zero(); size * size]);
        let req = self.strip_request(&aggregate).map_err(fatal(Stage::Init))?;
        self.db = Some(EncryptedDatabase { size, cm_add: aggregate, cm_pairs: Vec::new(), dirty: true });
        Ok(req)
    }

    fn stripped(&mut self, values: &[BigUint]) -> Result<Body> {
        let Some(companions) = &self.pending_strip else {
            return Err(stage_error(self.state.stage(), "no strip request outstanding"));
        };
        if values.len() != companions.len() {
            return Err(Error::Domain(format!("expected {} stripped values, got {}", companions.len(), values.len())));
        }
        let legs = values
            .iter()
            .zip(companions)
            .map(|(v, c)| unwrap_stripped(&self.pk_mul, v.clone(), c))
            .collect::<Result<Vec<_>>>()
            .map_err(fatal(self.state.stage()))?;
        let mut legs = legs.into_iter();
        let mut pairs = Vec::with_capacity(values.len() / 2);
        while let (Some(hi), Some(lo)) = (legs.next(), legs.next()) {
            pairs.push(PairEncodedValue { hi, lo });
        }
        let db = self.db.as_mut().expect("strip requests always follow database creation");
        db.cm_pairs = pairs;
        db.dirty = false;
        self.pending_strip = None;
        if !self.state.init_complete() {
            self.state.complete_init();
        }
        Ok(Body::Ack)
    }

    fn upload_pv(&mut self, size: u64, hi: &[MulWire], lo: &[MulWire]) -> Result<Body> {
        if !self.state.allows(Stage::Recommend) {
            return Err(stage_error(self.state.stage(), "preference upload not allowed"));
        }
        self.no_pending_strip()?;
        let size = self.check_size(size)?;
        if hi.len() != size || lo.len() != size {
            return Err(Error::Domain(format!("expected {size} legs per side, got {}/{}", hi.len(), lo.len())));
        }
        let parse = |w: &MulWire| self.pk_mul.ciphertext(w.c1.clone(), w.c2.clone());
        let pv = hi
            .iter()
            .zip(lo)
            .map(|(h, l)| Ok(PairEncodedValue { hi: parse(h)?, lo: parse(l)? }))
            .collect::<Result<Vec<_>>>()?;
        self.state.advance(Stage::Recommend)?;
        self.pv = Some(pv);
        let db = self.db.as_ref().expect("init complete implies a database");
        if db.dirty {
            let entries = db.cm_add.clone();
            return self.strip_request(&entries).map_err(fatal(Stage::Recommend));
        }
        Ok(Body::Ack)
    }

    fn recommend(&mut self, session: u64, loc: &BigUint) -> Result<Body> {
        if !self.state.allows(Stage::Filter) || self.pv.is_none() {
            return Err(stage_error(self.state.stage(), "no preference vector uploaded"));
        }
        self.no_pending_strip()?;
        let loc = self.pk_add.ciphertext(loc.clone())?;
        self.state.advance(Stage::Filter)?;
        let pv = self.pv.take().unwrap();
        let db = self.db.as_ref().expect("init complete implies a database");
        debug_assert_eq!(db.size, pv.len());
        let mut ctx = RemoteSwitch {
            session,
            pk_add: &self.pk_add,
            server: &mut self.switch,
            rng: &mut self.rng,
            channel: self.proxy.as_mut(),
            seq: &mut self.proxy_seq,
        };
        let scores = recommend_encrypted(&db.cm_pairs, &pv, &mut ctx).map_err(fatal(Stage::Recommend))?;
        let candidates = filter_by_location(&scores, &loc, &self.pk_add).map_err(fatal(Stage::Filter))?;
        Ok(Body::RlResponse {
            scores: candidates.iter().map(|c| c.score.value().clone()).collect(),
            offsets: candidates.iter().map(|c| c.offset.value().clone()).collect(),
        })
    }

    fn update(&mut self, size: u64, entries: &[BigUint]) -> Result<Body> {
        if !self.state.allows(Stage::Update) {
            return Err(stage_error(self.state.stage(), "updates not allowed"));
        }
        self.no_pending_strip()?;
        let size = self.check_size(size)?;
        if entries.len() != size * size {
            return Err(Error::Domain(format!("expected {} delta entries, got {}", size * size, entries.len())));
        }
        let delta = self.parse_add(entries)?;
        let db = self.db.as_mut().expect("init complete implies a database");
        let updated = db.cm_add.iter().zip(&delta).map(|(a, d)| a.add(d)).collect::<Result<Vec<_>>>()?;
        self.state.advance(Stage::Update)?;
        db.cm_add = updated;
        db.dirty = true;
        Ok(Body::Ack)
    }
}

/// `mul_to_add` with server X on the other end of a channel.
struct RemoteSwitch<'a> {
    session: u64,
    pk_add: &'a AddPublicKey,
    server: &'a mut SwitchServer,
    rng: &'a mut ChaCha20Rng,
    channel: &'a mut dyn Channel,
    seq: &'a mut u64,
}

impl RemoteSwitch<'_> {
    fn attempt(&mut self, nested: &NestedCiphertext) -> Result<AddCiphertext> {
        let r1 = self.server.begin(nested, self.rng)?;
        let seq = *self.seq;
        *self.seq += 1;
        let request = Envelope::new(
            self.session,
            seq,
            Body::M2aRound1 {
                nested_outer: r1.nested.outer().value().clone(),
                nested_comp: r1.nested.companion().clone(),
                c_prime: r1.c_prime.clone(),
                big_r: r1.big_r.clone(),
                exchange_id: r1.exchange_id,
            },
        );
        let outcome = self.channel.exchange(&request.encode()).and_then(|bytes| {
            let response = Envelope::decode(&bytes)?;
            if response.session != self.session || response.seq != seq {
                return Err(Error::ProtocolOrder(format!(
                    "proxy answered session {} seq {} to session {} seq {seq}",
                    response.session, response.seq, self.session
                )));
            }
            match response.body {
                Body::M2aRound2 { c_dprime, r_prime, exchange_id } => {
                    if exchange_id != r1.exchange_id {
                        return Err(Error::ProtocolOrder(format!(
                            "proxy answered exchange {exchange_id}, expected {}",
                            r1.exchange_id
                        )));
                    }
                    let round2 =
                        MulToAddRound2 { exchange_id, c_double_prime: self.pk_add.ciphertext(c_dprime)?, r_prime };
                    self.server.finish(&round2)
                }
                Body::Abort { retry: true, .. } => Err(Error::Retry),
                Body::Abort { stage, reason, .. } => Err(Error::Aborted { stage, reason }),
                other => Err(Error::Wire(format!("unexpected {} from proxy", other.type_name()))),
            }
        });
        if outcome.is_err() {
            self.server.cancel(r1.exchange_id);
        }
        outcome
    }
}

impl SwitchContext for RemoteSwitch<'_> {
    fn add_key(&self) -> &AddPublicKey {
        self.pk_add
    }

    fn wrap(&mut self, c: &crate::she::MulCiphertext) -> Result<NestedCiphertext> {
        wrap_mul(c, self.pk_add, self.rng)
    }

    fn mul_to_add(&mut self, nested: &NestedCiphertext) -> Result<AddCiphertext> {
        with_retries(|| self.attempt(nested))
    }
}

impl Service for ServerY {
    fn handle(&self, request: &[u8]) -> Vec<u8> {
        let env = match Envelope::decode(request) {
            Ok(env) => env,
            Err(e) => return reply(0, 0, abort_body("wire", e.to_string(), false)),
        };
        let (id, seq) = (env.session, env.seq);
        if let Body::SetupKeys { .. } = env.body {
            return match self.setup(&env) {
                Ok(body) => reply(id, seq, body),
                Err(e) => reply(id, seq, abort_body("setup", e.to_string(), false)),
            };
        }
        let Some(session) = self.sessions.lock().unwrap().get(&id).cloned() else {
            if let Body::Abort { .. } = env.body {
                return reply(id, seq, Body::Ack);
            }
            return reply(id, seq, abort_body("setup", "unknown session", false));
        };
        let mut s = session.lock().unwrap();
        if let Body::Abort { stage, reason, .. } = &env.body {
            log::info!("session {id} aborted by client in {stage}: {reason}");
            drop(s);
            self.drop_session(id, None);
            return reply(id, seq, Body::Ack);
        }
        let stage = s.state.stage();
        if seq != s.next_client_seq {
            let reason = format!("expected seq {}, got {seq}", s.next_client_seq);
            return reply(id, seq, abort_body(stage.name(), reason, false));
        }
        s.next_client_seq += 1;
        match s.dispatch(id, &env.body) {
            Ok(body) => reply(id, seq, body),
            Err(e) if is_rejection(&e) => {
                log::warn!("session {id}: rejected {} in {stage}: {e}", env.body.type_name());
                reply(id, seq, abort_body(stage.name(), e.to_string(), false))
            }
            Err(e) => {
                let (stage, reason) = match &e {
                    Error::Aborted { stage, reason } => (stage.clone(), reason.clone()),
                    other => (stage.name().to_string(), other.to_string()),
                };
                log::warn!("session {id}: aborting in {stage}: {reason}");
                self.drop_session(id, Some((&mut s, &stage, &reason)));
                reply(id, seq, abort_body(&stage, reason, false))
            }
        }
    }
}

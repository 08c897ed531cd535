use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Mutex;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::protocol::transport::Service;
use crate::protocol::wire::{Body, Envelope};
use crate::protocol::{abort_body, reply, write_share_file};
use crate::she::{AddPublicKey, MulPublicKey};
use crate::switch::{MulToAddRound1, NestedCiphertext, SwitchProxy};

struct XSession {
    pk_add: AddPublicKey,
    proxy: SwitchProxy,
    next_client_seq: u64,
    next_server_seq: u64,
    exchanges: u64,
}

impl fmt::Debug for XSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("XSession")
            .field("pk_add", &self.pk_add)
            .field("proxy", &self.proxy)
            .field("next_client_seq", &self.next_client_seq)
            .field("next_server_seq", &self.next_server_seq)
            .field("exchanges", &self.exchanges)
            .finish()
    }
}

/// Server X: holds k0 and answers round 1 of every switch.
pub struct ProxyX {
    sessions: Mutex<HashMap<u64, XSession>>,
    key_dir: Option<PathBuf>,
}

impl Default for ProxyX {
    fn default() -> Self {
        Self::new(None)
    }
}

impl ProxyX {
    /// `key_dir`, when set, receives a share file per session.
    pub fn new(key_dir: Option<PathBuf>) -> Self {
        Self { sessions: Mutex::new(HashMap::new()), key_dir }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Debug rendering of everything X keeps in memory.
    pub fn debug_state(&self) -> String {
        format!("{:?}", self.sessions.lock().unwrap())
    }

    fn setup(&self, env: &Envelope) -> Result<Body> {
        let Body::SetupKeys { n, g, h, mul_share, add_share } = &env.body else { unreachable!() };
        if add_share.is_some() {
            return Err(Error::Stage { stage: "setup".into(), reason: "servers never receive an additive share".into() });
        }
        if env.seq != 0 {
            return Err(Error::ProtocolOrder(format!("SETUP_KEYS must carry seq 0, got {}", env.seq)));
        }
        let pk = MulPublicKey::new(n.clone(), g.clone(), h.clone())?;
        if mul_share.is_zero() || mul_share >= pk.n() {
            return Err(Error::Domain("share outside [1, N)".into()));
        }
        let mut sessions = self.sessions.lock().unwrap();
        if sessions.contains_key(&env.session) {
            return Err(Error::Stage { stage: "setup".into(), reason: "session already set up".into() });
        }
        if let Some(dir) = &self.key_dir {
            write_share_file(dir, "proxy", env.session, &pk, mul_share)?;
        }
        sessions.insert(
            env.session,
            XSession {
                pk_add: pk.add_public(),
                proxy: SwitchProxy::new(pk, mul_share.clone()),
                next_client_seq: 1,
                next_server_seq: 0,
                exchanges: 0,
            },
        );
        Ok(Body::Ack)
    }

    fn round1(&self, env: &Envelope) -> (Body, bool) {
        let Body::M2aRound1 { nested_outer, nested_comp, c_prime, big_r, exchange_id } = &env.body else {
            unreachable!()
        };
        let mut sessions = self.sessions.lock().unwrap();
        let Some(session) = sessions.get_mut(&env.session) else {
            return (abort_body("recommend", "unknown session", false), false);
        };
        if env.seq != session.next_server_seq {
            let reason = format!("expected seq {} from server, got {}", session.next_server_seq, env.seq);
            return (abort_body("recommend", reason, false), true);
        }
        session.next_server_seq += 1;
        let result = build_round1(&session.pk_add, nested_outer, nested_comp, c_prime, big_r, *exchange_id)
            .and_then(|r1| session.proxy.respond(&r1));
        match result {
            Ok(r2) => {
                session.exchanges += 1;
                let body = Body::M2aRound2 {
                    c_dprime: r2.c_double_prime.value().clone(),
                    r_prime: r2.r_prime,
                    exchange_id: r2.exchange_id,
                };
                (body, false)
            }
            Err(Error::Retry) => (abort_body("recommend", "non-invertible residue", true), false),
            Err(e) => (abort_body("recommend", e.to_string(), false), true),
        }
    }
}

fn build_round1(
    pk_add: &AddPublicKey,
    outer: &BigUint,
    comp: &BigUint,
    c_prime: &BigUint,
    big_r: &BigUint,
    exchange_id: u64,
) -> Result<MulToAddRound1> {
    let nested = NestedCiphertext::new(pk_add.ciphertext(outer.clone())?, comp.clone())?;
    Ok(MulToAddRound1 { exchange_id, nested, c_prime: c_prime.clone(), big_r: big_r.clone() })
}

impl Service for ProxyX {
    fn handle(&self, request: &[u8]) -> Vec<u8> {
        let env = match Envelope::decode(request) {
            Ok(env) => env,
            Err(e) => return reply(0, 0, abort_body("wire", e.to_string(), false)),
        };
        let (session, seq) = (env.session, env.seq);
        match &env.body {
            Body::SetupKeys { .. } => match self.setup(&env) {
                Ok(body) => reply(session, seq, body),
                Err(e) => reply(session, seq, abort_body("setup", e.to_string(), false)),
            },
            Body::M2aRound1 { .. } => {
                let (body, fatal) = self.round1(&env);
                if fatal {
                    log::warn!("session {session}: dropping after failed switch round");
                    self.sessions.lock().unwrap().remove(&session);
                }
                reply(session, seq, body)
            }
            Body::Abort { stage, reason, .. } => {
                log::info!("session {session} aborted by peer in {stage}: {reason}");
                self.sessions.lock().unwrap().remove(&session);
                reply(session, seq, Body::Ack)
            }
            other => {
                let reason = format!("{} is not handled by the proxy", other.type_name());
                reply(session, seq, abort_body("proxy", reason, false))
            }
        }
    }
}

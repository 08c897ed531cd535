//! Message schemas and framing.
//!
//! Every frame is a 4-byte big-endian length followed by a UTF-8 JSON object
//! carrying `type`, `session` and `seq`. Integers travel as lowercase hex
//! strings without leading zeros.

use std::io::{self, Read, Write};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::encoding::{hex_biguint, hex_opt, hex_vec};
use crate::error::{Error, Result};

/// Frames above this size are refused.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub session: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

/// `{"outer": hex, "comp": hex}`: a nested ciphertext awaiting stripping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedWire {
    #[serde(with = "hex_biguint")]
    pub outer: BigUint,
    #[serde(with = "hex_biguint")]
    pub comp: BigUint,
}

/// `{"c1": hex, "c2": hex}`: a multiplicative ciphertext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulWire {
    #[serde(with = "hex_biguint")]
    pub c1: BigUint,
    #[serde(with = "hex_biguint")]
    pub c2: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Body {
    /// Client → X and client → Y: public keys plus the receiver's share.
    #[serde(rename = "SETUP_KEYS")]
    SetupKeys {
        #[serde(with = "hex_biguint")]
        n: BigUint,
        #[serde(with = "hex_biguint")]
        g: BigUint,
        #[serde(with = "hex_biguint")]
        h: BigUint,
        #[serde(with = "hex_biguint")]
        mul_share: BigUint,
        #[serde(with = "hex_opt")]
        add_share: Option<BigUint>,
    },
    /// Client → Y: one user's Paillier-encrypted matrix, row-major. An empty
    /// list declares the size without contributing. `final` closes the
    /// contribution phase.
    #[serde(rename = "CM_CONTRIB")]
    CmContrib {
        size: u64,
        #[serde(with = "hex_vec")]
        entries: Vec<BigUint>,
        #[serde(rename = "final")]
        last: bool,
    },
    /// Y → client: nested ciphertexts whose Paillier layer must be stripped,
    /// two per matrix entry (blinded value, blinding).
    #[serde(rename = "INIT_STRIP_REQ")]
    InitStripReq { entries: Vec<NestedWire> },
    /// Client → Y: the stripped first components, same order.
    #[serde(rename = "INIT_STRIP_RESP")]
    InitStripResp {
        #[serde(with = "hex_vec")]
        values: Vec<BigUint>,
    },
    /// Client → Y: pair-encoded preference vector.
    #[serde(rename = "PV_UPLOAD")]
    PvUpload { size: u64, hi: Vec<MulWire>, lo: Vec<MulWire> },
    /// Client → Y: E+(location index). Triggers the recommendation.
    #[serde(rename = "LOC_UPLOAD")]
    LocUpload {
        #[serde(with = "hex_biguint")]
        loc: BigUint,
    },
    #[serde(rename = "M2A_ROUND1")]
    M2aRound1 {
        #[serde(with = "hex_biguint")]
        nested_outer: BigUint,
        #[serde(with = "hex_biguint")]
        nested_comp: BigUint,
        #[serde(with = "hex_biguint")]
        c_prime: BigUint,
        #[serde(with = "hex_biguint")]
        big_r: BigUint,
        exchange_id: u64,
    },
    #[serde(rename = "M2A_ROUND2")]
    M2aRound2 {
        #[serde(with = "hex_biguint")]
        c_dprime: BigUint,
        #[serde(with = "hex_biguint")]
        r_prime: BigUint,
        exchange_id: u64,
    },
    /// Y → client: encrypted scores and item-minus-location offsets.
    #[serde(rename = "RL_RESPONSE")]
    RlResponse {
        #[serde(with = "hex_vec")]
        scores: Vec<BigUint>,
        #[serde(with = "hex_vec")]
        offsets: Vec<BigUint>,
    },
    /// Client → Y: E+(new − old), row-major over the whole matrix.
    #[serde(rename = "CM_DELTA")]
    CmDelta {
        size: u64,
        #[serde(with = "hex_vec")]
        entries: Vec<BigUint>,
    },
    /// Rejection or teardown. `retry` marks a transient switch failure.
    #[serde(rename = "ABORT")]
    Abort { stage: String, reason: String, retry: bool },
    #[serde(rename = "ACK")]
    Ack,
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::SetupKeys { .. } => "SETUP_KEYS",
            Body::CmContrib { .. } => "CM_CONTRIB",
            Body::InitStripReq { .. } => "INIT_STRIP_REQ",
            Body::InitStripResp { .. } => "INIT_STRIP_RESP",
            Body::PvUpload { .. } => "PV_UPLOAD",
            Body::LocUpload { .. } => "LOC_UPLOAD",
            Body::M2aRound1 { .. } => "M2A_ROUND1",
            Body::M2aRound2 { .. } => "M2A_ROUND2",
            Body::RlResponse { .. } => "RL_RESPONSE",
            Body::CmDelta { .. } => "CM_DELTA",
            Body::Abort { .. } => "ABORT",
            Body::Ack => "ACK",
        }
    }
}

impl Envelope {
    pub fn new(session: u64, seq: u64, body: Body) -> Self {
        Self { session, seq, body }
    }

    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("envelope serialization is infallible")
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(payload)?)
    }

    /// Length prefix plus payload.
    pub fn to_frame(&self) -> Vec<u8> {
        frame(&self.encode())
    }
}

pub fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    if payload.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&frame(payload))?;
    w.flush()
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes refused")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

/// Splits a byte stream into frames; errors on a truncated tail.
pub fn split_frames(mut bytes: &[u8]) -> Result<Vec<&[u8]>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(Error::Wire("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let rest = &bytes[4..];
        if rest.len() < len {
            return Err(Error::Wire("truncated frame".into()));
        }
        out.push(&rest[..len]);
        bytes = &rest[len..];
    }
    Ok(out)
}

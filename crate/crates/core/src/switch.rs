//! Switching between the two schemes.
//!
//! `add_to_mul` runs locally at the server. `mul_to_add` is an interactive
//! exchange: the server (holding k1) blinds with a fresh `s`, the proxy
//! (holding k0) strips `h^(r+s)` from the message slot, and the server removes
//! the remaining `h^(-s)`. Exponent inverses are taken mod N, since the
//! message slot (1+N)^a ≡ 1 + aN (mod N²) only depends on a mod N.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::she::{random_unit, AddCiphertext, AddPublicKey, KeyShares, MulCiphertext, MulPublicKey, MulSecretKey};

/// Retries allowed after a non-invertible residue before giving up.
pub const MAX_SWITCH_RETRIES: usize = 8;

/// ⟨E+(c1), c2⟩: a multiplicative ciphertext whose first component is hidden
/// under a Paillier layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedCiphertext {
    outer: AddCiphertext,
    companion: BigUint,
}

impl NestedCiphertext {
    pub fn new(outer: AddCiphertext, companion: BigUint) -> Result<Self> {
        let n = outer.modulus().n();
        if companion.is_zero() || &companion >= n || !companion.gcd(n).is_one() {
            return Err(Error::DegenerateCiphertext("nested companion not a unit mod N"));
        }
        Ok(Self { outer, companion })
    }

    pub fn outer(&self) -> &AddCiphertext {
        &self.outer
    }

    pub fn companion(&self) -> &BigUint {
        &self.companion
    }
}

/// Turns E+(m) into ⟨E+(m)^(h^r), g^r⟩ = ⟨E+(m·h^r), g^r⟩.
pub fn add_to_mul<R: RngCore + ?Sized>(
    c: &AddCiphertext,
    pk_mul: &MulPublicKey,
    rng: &mut R,
) -> Result<NestedCiphertext> {
    if c.modulus().n() != pk_mul.n() {
        return Err(Error::ModulusMismatch);
    }
    let n = pk_mul.n();
    let r = random_unit(n, rng);
    let hr = pk_mul.h().modpow(&r, n);
    NestedCiphertext::new(c.pow(&hr), pk_mul.g().modpow(&r, n))
}

/// Wraps the first component of a multiplicative ciphertext in a fresh
/// Paillier encryption, ready for `mul_to_add`.
pub fn wrap_mul<R: RngCore + ?Sized>(
    c: &MulCiphertext,
    pk_add: &AddPublicKey,
    rng: &mut R,
) -> Result<NestedCiphertext> {
    NestedCiphertext::new(pk_add.encrypt(c.c1(), rng)?, c.c2().clone())
}

/// Server → proxy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulToAddRound1 {
    pub exchange_id: u64,
    pub nested: NestedCiphertext,
    /// (companion · g^s)^k1 mod N
    pub c_prime: BigUint,
    /// g^s mod N
    pub big_r: BigUint,
}

/// Proxy → server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulToAddRound2 {
    pub exchange_id: u64,
    /// E+(m·h^(-s))
    pub c_double_prime: AddCiphertext,
    /// R^k0 mod N
    pub r_prime: BigUint,
}

/// Marks an exchange as started by this server. Consumed by round 2, which
/// recovers h^s as (R')^k1 without keeping s itself.
#[derive(Debug)]
pub struct ServerSecret {
    exchange_id: u64,
}

impl ServerSecret {
    pub fn exchange_id(&self) -> u64 {
        self.exchange_id
    }
}

pub fn server_round1<R: RngCore + ?Sized>(
    nested: &NestedCiphertext,
    pk_mul: &MulPublicKey,
    k1: &BigUint,
    exchange_id: u64,
    rng: &mut R,
) -> Result<(MulToAddRound1, ServerSecret)> {
    if nested.outer.modulus().n() != pk_mul.n() {
        return Err(Error::ModulusMismatch);
    }
    let n = pk_mul.n();
    let s = random_unit(n, rng);
    let big_r = pk_mul.g().modpow(&s, n);
    let c_prime = (&nested.companion * &big_r % n).modpow(k1, n);
    let round1 = MulToAddRound1 { exchange_id, nested: nested.clone(), c_prime, big_r };
    Ok((round1, ServerSecret { exchange_id }))
}

/// The proxy's step. A zero `c'` is rejected outright; any other
/// non-invertible `h^(r+s)` asks the server to retry with a fresh `s`.
pub fn proxy_round(round1: &MulToAddRound1, pk_mul: &MulPublicKey, k0: &BigUint) -> Result<MulToAddRound2> {
    let n = pk_mul.n();
    if round1.nested.outer.modulus().n() != n {
        return Err(Error::ModulusMismatch);
    }
    if round1.c_prime.is_zero() {
        return Err(Error::DegenerateCiphertext("c' is zero"));
    }
    if &round1.c_prime >= n || round1.big_r.is_zero() || &round1.big_r >= n {
        return Err(Error::DegenerateCiphertext("round-1 residue outside [1, N)"));
    }
    let h_rs = round1.c_prime.modpow(k0, n);
    let t = h_rs.modinv(n).ok_or(Error::Retry)?;
    Ok(MulToAddRound2 {
        exchange_id: round1.exchange_id,
        c_double_prime: round1.nested.outer.pow(&t),
        r_prime: round1.big_r.modpow(k0, n),
    })
}

pub fn server_round2(
    round2: &MulToAddRound2,
    secret: ServerSecret,
    pk_mul: &MulPublicKey,
    k1: &BigUint,
) -> Result<AddCiphertext> {
    if round2.exchange_id != secret.exchange_id {
        return Err(Error::ProtocolOrder(format!(
            "round 2 for exchange {} answered with state of exchange {}",
            round2.exchange_id, secret.exchange_id
        )));
    }
    let n = pk_mul.n();
    if round2.r_prime.is_zero() || &round2.r_prime >= n {
        return Err(Error::DegenerateCiphertext("R' outside [1, N)"));
    }
    let h_s = round2.r_prime.modpow(k1, n);
    round2.c_double_prime.mul_scalar(&h_s)
}

/// Server role of `mul_to_add`, keeping per-exchange secrets until round 2.
#[derive(Debug)]
pub struct SwitchServer {
    pk_mul: MulPublicKey,
    share: BigUint,
    pending: HashMap<u64, ServerSecret>,
    next_id: u64,
}

impl SwitchServer {
    pub fn new(pk_mul: MulPublicKey, share: BigUint) -> Self {
        Self { pk_mul, share, pending: HashMap::new(), next_id: 0 }
    }

    pub fn begin<R: RngCore + ?Sized>(&mut self, nested: &NestedCiphertext, rng: &mut R) -> Result<MulToAddRound1> {
        let id = self.next_id;
        let (round1, secret) = server_round1(nested, &self.pk_mul, &self.share, id, rng)?;
        self.next_id += 1;
        self.pending.insert(id, secret);
        Ok(round1)
    }

    pub fn finish(&mut self, round2: &MulToAddRound2) -> Result<AddCiphertext> {
        let secret = self.pending.remove(&round2.exchange_id).ok_or_else(|| {
            Error::ProtocolOrder(format!("no pending exchange {}", round2.exchange_id))
        })?;
        server_round2(round2, secret, &self.pk_mul, &self.share)
    }

    pub fn cancel(&mut self, exchange_id: u64) {
        self.pending.remove(&exchange_id);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn public_key(&self) -> &MulPublicKey {
        &self.pk_mul
    }
}

/// Proxy role of `mul_to_add`. Stateless apart from its share.
#[derive(Debug, Clone)]
pub struct SwitchProxy {
    pk_mul: MulPublicKey,
    share: BigUint,
}

impl SwitchProxy {
    pub fn new(pk_mul: MulPublicKey, share: BigUint) -> Self {
        Self { pk_mul, share }
    }

    pub fn respond(&self, round1: &MulToAddRound1) -> Result<MulToAddRound2> {
        proxy_round(round1, &self.pk_mul, &self.share)
    }
}

/// Runs `attempt` until it stops asking for a retry.
pub fn with_retries<T>(mut attempt: impl FnMut() -> Result<T>) -> Result<T> {
    for _ in 0..=MAX_SWITCH_RETRIES {
        match attempt() {
            Err(Error::Retry) => continue,
            other => return other,
        }
    }
    Err(Error::RetryExhausted(MAX_SWITCH_RETRIES))
}

/// Access to a `mul_to_add` executor, local or remote.
pub trait SwitchContext {
    fn add_key(&self) -> &AddPublicKey;

    /// Fresh Paillier wrapping of a multiplicative ciphertext.
    fn wrap(&mut self, c: &MulCiphertext) -> Result<NestedCiphertext>;

    fn mul_to_add(&mut self, nested: &NestedCiphertext) -> Result<AddCiphertext>;

    fn switch(&mut self, c: &MulCiphertext) -> Result<AddCiphertext> {
        let nested = self.wrap(c)?;
        self.mul_to_add(&nested)
    }
}

/// Both roles in one process. Useful for tests and single-host tooling.
#[derive(Debug)]
pub struct LocalSwitch {
    pk_add: AddPublicKey,
    server: SwitchServer,
    proxy: SwitchProxy,
    rng: ChaCha20Rng,
    exchanges: u64,
}

impl LocalSwitch {
    pub fn new(pk_mul: &MulPublicKey, shares: &KeyShares, seed: u64) -> Self {
        Self {
            pk_add: pk_mul.add_public(),
            server: SwitchServer::new(pk_mul.clone(), shares.server.mul.clone()),
            proxy: SwitchProxy::new(pk_mul.clone(), shares.proxy.mul.clone()),
            rng: ChaCha20Rng::seed_from_u64(seed),
            exchanges: 0,
        }
    }

    /// Completed exchanges so far.
    pub fn exchanges(&self) -> u64 {
        self.exchanges
    }
}

impl SwitchContext for LocalSwitch {
    fn add_key(&self) -> &AddPublicKey {
        &self.pk_add
    }

    fn wrap(&mut self, c: &MulCiphertext) -> Result<NestedCiphertext> {
        wrap_mul(c, &self.pk_add, &mut self.rng)
    }

    fn mul_to_add(&mut self, nested: &NestedCiphertext) -> Result<AddCiphertext> {
        let out = with_retries(|| {
            let round1 = self.server.begin(nested, &mut self.rng)?;
            match self.proxy.respond(&round1) {
                Ok(round2) => self.server.finish(&round2),
                Err(e) => {
                    self.server.cancel(round1.exchange_id);
                    Err(e)
                }
            }
        })?;
        self.exchanges += 1;
        Ok(out)
    }
}

/// v encoded as ⟨E*(v + β), E*(β)⟩ for a random β. Neither leg ever
/// encrypts zero, whatever v is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEncodedValue {
    pub hi: MulCiphertext,
    pub lo: MulCiphertext,
}

/// Samples β ∈ Z*_N with v + β also a unit, so every product of legs stays
/// nonzero mod N.
fn blinding_for<R: RngCore + ?Sized>(v: &BigUint, n: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let beta = random_unit(n, rng);
        if ((v + &beta) % n).gcd(n).is_one() {
            return beta;
        }
    }
}

pub fn pair_encode<R: RngCore + ?Sized>(pk_mul: &MulPublicKey, v: &BigUint, rng: &mut R) -> Result<PairEncodedValue> {
    let n = pk_mul.n();
    if v >= n {
        return Err(Error::Domain("pair-encoded value must be < N".into()));
    }
    let beta = blinding_for(v, n, rng);
    let hi = pk_mul.encrypt(&((v + &beta) % n), rng)?;
    let lo = pk_mul.encrypt(&beta, rng)?;
    Ok(PairEncodedValue { hi, lo })
}

impl PairEncodedValue {
    /// (v + β) − β mod N.
    pub fn decode(&self, sk: &MulSecretKey) -> Result<BigUint> {
        let n = sk.public().n();
        let hi = sk.decrypt(&self.hi)?;
        let lo = sk.decrypt(&self.lo)?;
        Ok((hi + n - lo) % n)
    }

    /// ⟨E*(k(v+β)), E*(kβ)⟩ decodes to k·v.
    pub fn mul_scalar(&self, k: &BigUint) -> Result<PairEncodedValue> {
        Ok(PairEncodedValue { hi: self.hi.mul_scalar(k)?, lo: self.lo.mul_scalar(k)? })
    }
}

/// E+(a·b) from two pair encodings:
/// (a+α)(b+β) − (a+α)β − α(b+β) + αβ = ab, each cross product switched to
/// the additive domain separately.
pub fn pair_product_to_add(
    a: &PairEncodedValue,
    b: &PairEncodedValue,
    ctx: &mut dyn SwitchContext,
) -> Result<AddCiphertext> {
    let hh = ctx.switch(&a.hi.mul(&b.hi)?)?;
    let hl = ctx.switch(&a.hi.mul(&b.lo)?)?;
    let lh = ctx.switch(&a.lo.mul(&b.hi)?)?;
    let ll = ctx.switch(&a.lo.mul(&b.lo)?)?;
    hh.sub(&hl)?.sub(&lh)?.add(&ll)
}

/// Blinds an additive value v as E+(v + β), E+(β) and converts both legs
/// with `add_to_mul`. Stripping the outer layers yields a pair encoding of v.
pub fn blind_to_nested_pair<R: RngCore + ?Sized>(
    c: &AddCiphertext,
    pk_mul: &MulPublicKey,
    rng: &mut R,
) -> Result<(NestedCiphertext, NestedCiphertext)> {
    let pk_add = pk_mul.add_public();
    let beta = random_unit(pk_mul.n(), rng);
    let lo = pk_add.encrypt(&beta, rng)?;
    let hi = c.add(&lo)?;
    Ok((add_to_mul(&hi, pk_mul, rng)?, add_to_mul(&lo, pk_mul, rng)?))
}

/// Reassembles a multiplicative ciphertext from a stripped outer value.
pub fn unwrap_stripped(pk_mul: &MulPublicKey, stripped: BigUint, companion: &BigUint) -> Result<MulCiphertext> {
    pk_mul.ciphertext(stripped, companion.clone())
}

/// Strips the Paillier layer of a nested ciphertext. Only the key-owning
/// client can do this.
pub fn strip_outer(sk_add: &crate::she::AddSecretKey, nested: &NestedCiphertext) -> Result<BigUint> {
    sk_add.decrypt_crt(nested.outer())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::she::{keygen, keygen_from_primes, KeyGenParams, SheKeys};

    fn small() -> (SheKeys, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let keys = keygen_from_primes(&BigUint::from(11u32), &BigUint::from(13u32), &mut rng).unwrap();
        (keys, rng)
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn add_to_mul_identity_chain() {
        let (keys, mut rng) = small();
        let c = keys.add.public.encrypt(&big(1), &mut rng).unwrap();
        let nested = add_to_mul(&c, &keys.mul.public, &mut rng).unwrap();
        let inner = keys.add.secret.decrypt(nested.outer()).unwrap();
        let mul = keys.mul.public.ciphertext(inner, nested.companion().clone()).unwrap();
        assert_eq!(keys.mul.secret.decrypt(&mul).unwrap(), big(1));
    }

    #[test]
    fn proxy_output_carries_m_times_h_to_minus_s() {
        let (keys, mut rng) = small();
        let n = keys.mul.public.n().clone();
        for m in 1..143u64 {
            let c = keys.add.public.encrypt(&big(m), &mut rng).unwrap();
            let nested = add_to_mul(&c, &keys.mul.public, &mut rng).unwrap();
            let (r1, _) = server_round1(&nested, &keys.mul.public, &keys.shares.server.mul, 0, &mut rng).unwrap();
            let r2 = proxy_round(&r1, &keys.mul.public, &keys.shares.proxy.mul).unwrap();
            // h^s = (g^s)^x
            let h_s_inv = r1.big_r.modpow(keys.mul.secret.x(), &n).modinv(&n).unwrap();
            assert_eq!(keys.add.secret.decrypt(&r2.c_double_prime).unwrap(), big(m) * h_s_inv % &n);
        }
    }

    #[test]
    fn exponent_inverse_acts_on_message_slot() {
        // (1+N)^a raised to u and then to u⁻¹ mod N returns (1+N)^a.
        let (keys, _) = small();
        let n = keys.add.public.n().clone();
        let nn = keys.add.public.n_squared().clone();
        for a in [0u64, 1, 57, 142] {
            let base = (BigUint::one() + &n).modpow(&big(a), &nn);
            for u in [2u64, 7, 100, 142] {
                let u = big(u);
                let Some(u_inv) = u.modinv(&n) else { continue };
                assert_eq!(base.modpow(&u, &nn).modpow(&u_inv, &nn), base);
            }
        }
    }

    #[test]
    fn zero_c_prime_is_degenerate() {
        let (keys, mut rng) = small();
        let c = keys.add.public.encrypt(&big(5), &mut rng).unwrap();
        let nested = add_to_mul(&c, &keys.mul.public, &mut rng).unwrap();
        let (mut r1, _) = server_round1(&nested, &keys.mul.public, &keys.shares.server.mul, 0, &mut rng).unwrap();
        r1.c_prime = big(0);
        assert!(matches!(
            proxy_round(&r1, &keys.mul.public, &keys.shares.proxy.mul),
            Err(Error::DegenerateCiphertext(_))
        ));
        r1.c_prime = big(11);
        assert!(matches!(proxy_round(&r1, &keys.mul.public, &keys.shares.proxy.mul), Err(Error::Retry)));
    }

    #[test]
    fn round2_requires_matching_state() {
        let (keys, mut rng) = small();
        let mut server = SwitchServer::new(keys.mul.public.clone(), keys.shares.server.mul.clone());
        let proxy = SwitchProxy::new(keys.mul.public.clone(), keys.shares.proxy.mul.clone());
        let c = keys.add.public.encrypt(&big(9), &mut rng).unwrap();
        let nested = add_to_mul(&c, &keys.mul.public, &mut rng).unwrap();
        let r1 = server.begin(&nested, &mut rng).unwrap();
        let r2 = proxy.respond(&r1).unwrap();
        let out = server.finish(&r2).unwrap();
        assert_eq!(keys.add.secret.decrypt(&out).unwrap(), big(9));
        assert_eq!(server.pending(), 0);
        // state is single use
        assert!(matches!(server.finish(&r2), Err(Error::ProtocolOrder(_))));

        let r1 = server.begin(&nested, &mut rng).unwrap();
        let (_, other) = server_round1(&nested, &keys.mul.public, &keys.shares.server.mul, 99, &mut rng).unwrap();
        let r2 = proxy.respond(&r1).unwrap();
        assert!(matches!(
            server_round2(&r2, other, &keys.mul.public, &keys.shares.server.mul),
            Err(Error::ProtocolOrder(_))
        ));
    }

    #[test]
    fn retries_are_bounded() {
        let mut calls = 0;
        let out: Result<()> = with_retries(|| {
            calls += 1;
            Err(Error::Retry)
        });
        assert!(matches!(out, Err(Error::RetryExhausted(MAX_SWITCH_RETRIES))));
        assert_eq!(calls, MAX_SWITCH_RETRIES + 1);
        let mut calls = 0;
        let out = with_retries(|| {
            calls += 1;
            if calls < 3 { Err(Error::Retry) } else { Ok(calls) }
        });
        assert_eq!(out.unwrap(), 3);
    }

    #[test]
    fn pair_encoding_small_values() {
        let (keys, mut rng) = small();
        for v in [0u64, 5, 142] {
            let pv = pair_encode(&keys.mul.public, &big(v), &mut rng).unwrap();
            assert_eq!(pv.decode(&keys.mul.secret).unwrap(), big(v));
            assert!(!keys.mul.secret.decrypt(&pv.hi).unwrap().is_zero());
            assert!(!keys.mul.secret.decrypt(&pv.lo).unwrap().is_zero());
        }
        let pv = pair_encode(&keys.mul.public, &big(4), &mut rng).unwrap();
        assert_eq!(pv.mul_scalar(&big(3)).unwrap().decode(&keys.mul.secret).unwrap(), big(12));
        assert!(matches!(pv.mul_scalar(&big(0)), Err(Error::ZeroPlaintext)));
        assert!(pair_encode(&keys.mul.public, &big(143), &mut rng).is_err());
    }

    #[test]
    fn pair_products_through_local_switch() {
        let (keys, mut rng) = small();
        let mut ctx = LocalSwitch::new(&keys.mul.public, &keys.shares, 5);
        for (a, b) in [(0u64, 7u64), (2, 3), (11, 13), (12, 0)] {
            let ea = pair_encode(&keys.mul.public, &big(a), &mut rng).unwrap();
            let eb = pair_encode(&keys.mul.public, &big(b), &mut rng).unwrap();
            let c = pair_product_to_add(&ea, &eb, &mut ctx).unwrap();
            assert_eq!(keys.add.secret.decrypt(&c).unwrap(), big(a * b % 143));
        }
        assert_eq!(ctx.exchanges(), 16);
    }

    #[test]
    fn blinded_conversion_yields_pair_encoding() {
        let keys = keygen(&KeyGenParams::seeded(32, 4)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for v in [0u64, 1, 17] {
            let c = keys.add.public.encrypt(&big(v), &mut rng).unwrap();
            let (hi, lo) = blind_to_nested_pair(&c, &keys.mul.public, &mut rng).unwrap();
            let strip = |x: &NestedCiphertext| {
                let s = strip_outer(&keys.add.secret, x).unwrap();
                unwrap_stripped(&keys.mul.public, s, x.companion()).unwrap()
            };
            let pair = PairEncodedValue { hi: strip(&hi), lo: strip(&lo) };
            assert_eq!(pair.decode(&keys.mul.secret).unwrap(), big(v));
        }
    }
}

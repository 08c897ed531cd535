use std::sync::Arc;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{hex_biguint, hex_opt};
use crate::error::{Error, Result};

/// Fixed ElGamal generator; a square, hence of large order in Z*_N.
pub const GENERATOR: u32 = 16;

/// Smallest prime size accepted by [`keygen`]. Only useful for exhaustive tests.
pub const MIN_SECURITY_BITS: u32 = 16;
pub const MAX_SECURITY_BITS: u32 = 4096;
pub const DEFAULT_SECURITY_BITS: u32 = 512;

const PRIME_CANDIDATES: usize = 1 << 20;
const KEYGEN_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyGenParams {
    /// Bit length of each of the primes p and q.
    pub security_bits: u32,
    /// Deterministic runs draw every random value from one generator seeded here.
    pub rng_seed: Option<u64>,
}

impl Default for KeyGenParams {
    fn default() -> Self {
        Self { security_bits: DEFAULT_SECURITY_BITS, rng_seed: None }
    }
}

impl KeyGenParams {
    pub fn new(security_bits: u32) -> Self {
        Self { security_bits, rng_seed: None }
    }

    pub fn seeded(security_bits: u32, seed: u64) -> Self {
        Self { security_bits, rng_seed: Some(seed) }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        match self.rng_seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        }
    }
}

/// The public modulus shared by both schemes, with N² cached.
#[derive(Debug, PartialEq, Eq)]
pub struct Modulus {
    n: BigUint,
    n_squared: BigUint,
}

impl Modulus {
    pub fn new(n: BigUint) -> Arc<Self> {
        let n_squared = &n * &n;
        Arc::new(Self { n, n_squared })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }
}

pub(crate) fn same_modulus(a: &Arc<Modulus>, b: &Arc<Modulus>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a.n == b.n {
        Ok(())
    } else {
        Err(Error::ModulusMismatch)
    }
}

/// Paillier public key: just N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddPublicKey {
    pub(crate) modulus: Arc<Modulus>,
}

/// Paillier secret key (N, φ(N), p, q).
#[derive(Debug, Clone)]
pub struct AddSecretKey {
    pub(crate) public: AddPublicKey,
    pub(crate) phi: BigUint,
    pub(crate) p: BigUint,
    pub(crate) q: BigUint,
    pub(crate) phi_inv: BigUint,
}

#[derive(Debug, Clone)]
pub struct AddKeypair {
    pub public: AddPublicKey,
    pub secret: AddSecretKey,
}

/// ElGamal public key (N, g, h) with h = g^(x0·x1) mod N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulPublicKey {
    pub(crate) modulus: Arc<Modulus>,
    pub(crate) g: BigUint,
    pub(crate) h: BigUint,
}

/// ElGamal secret key, stored in factored form (N, g, x0, x1).
#[derive(Debug, Clone)]
pub struct MulSecretKey {
    pub(crate) public: MulPublicKey,
    pub(crate) x0: BigUint,
    pub(crate) x1: BigUint,
    pub(crate) x: BigUint,
}

#[derive(Debug, Clone)]
pub struct MulKeypair {
    pub public: MulPublicKey,
    pub secret: MulSecretKey,
}

/// One party's secret shares. The additive share is always absent: no server
/// may strip a Paillier layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShare {
    pub add: Option<BigUint>,
    pub mul: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShares {
    /// k0, held by the proxy (server X).
    pub proxy: KeyShare,
    /// k1, held by the computing server (server Y).
    pub server: KeyShare,
}

/// Everything the key-owning client holds after generation.
#[derive(Debug, Clone)]
pub struct SheKeys {
    pub add: AddKeypair,
    pub mul: MulKeypair,
    pub shares: KeyShares,
}

impl AddPublicKey {
    pub fn new(n: BigUint) -> Result<Self> {
        if n < BigUint::from(3u32) || n.is_even() {
            return Err(Error::KeyIntegrity("modulus must be odd and at least 3"));
        }
        Ok(Self { modulus: Modulus::new(n) })
    }

    pub fn n(&self) -> &BigUint {
        self.modulus.n()
    }

    pub fn n_squared(&self) -> &BigUint {
        self.modulus.n_squared()
    }

    pub fn modulus(&self) -> &Arc<Modulus> {
        &self.modulus
    }
}

impl AddSecretKey {
    pub fn public(&self) -> &AddPublicKey {
        &self.public
    }

    pub fn phi(&self) -> &BigUint {
        &self.phi
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }
}

impl MulPublicKey {
    pub fn new(n: BigUint, g: BigUint, h: BigUint) -> Result<Self> {
        Self::with_modulus(AddPublicKey::new(n)?.modulus, g, h)
    }

    pub(crate) fn with_modulus(modulus: Arc<Modulus>, g: BigUint, h: BigUint) -> Result<Self> {
        let n = modulus.n();
        if g.is_zero() || &g >= n || !g.gcd(n).is_one() {
            return Err(Error::KeyIntegrity("generator is not a unit mod N"));
        }
        if h.is_zero() || &h >= n || !h.gcd(n).is_one() {
            return Err(Error::KeyIntegrity("h is not a unit mod N"));
        }
        Ok(Self { modulus, g, h })
    }

    pub fn n(&self) -> &BigUint {
        self.modulus.n()
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn h(&self) -> &BigUint {
        &self.h
    }

    pub fn modulus(&self) -> &Arc<Modulus> {
        &self.modulus
    }

    /// The Paillier key over the same modulus.
    pub fn add_public(&self) -> AddPublicKey {
        AddPublicKey { modulus: Arc::clone(&self.modulus) }
    }
}

impl MulSecretKey {
    pub fn public(&self) -> &MulPublicKey {
        &self.public
    }

    pub fn x0(&self) -> &BigUint {
        &self.x0
    }

    pub fn x1(&self) -> &BigUint {
        &self.x1
    }

    /// x = x0·x1.
    pub fn x(&self) -> &BigUint {
        &self.x
    }
}

/// Uniform element of Z*_n.
pub fn random_unit<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> BigUint {
    let one = BigUint::one();
    loop {
        let r = rng.gen_biguint_range(&one, n);
        if r.gcd(n).is_one() {
            return r;
        }
    }
}

/// Baillie-PSW: trial division, Miller-Rabin rounds and a strong Lucas test.
pub fn is_probable_prime<R: RngCore + ?Sized>(candidate: &BigUint, rng: &mut R) -> bool {
    glass_pumpkin::prime::strong_check_with(candidate, rng)
}

fn random_prime<R: RngCore + ?Sized>(bits: u32, rng: &mut R) -> Result<BigUint> {
    for _ in 0..PRIME_CANDIDATES {
        let mut candidate = rng.gen_biguint(u64::from(bits));
        candidate.set_bit(u64::from(bits) - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return Ok(candidate);
        }
    }
    Err(Error::Generation(PRIME_CANDIDATES))
}

/// Random odd share of exactly `bits` bits, coprime to N.
fn random_share<R: RngCore + ?Sized>(bits: u64, n: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let mut x = rng.gen_biguint(bits);
        x.set_bit(bits - 1, true);
        x.set_bit(0, true);
        if x.gcd(n).is_one() {
            return x;
        }
    }
}

/// Generates both keypairs over one modulus together with the key shares.
pub fn keygen(params: &KeyGenParams) -> Result<SheKeys> {
    if !(MIN_SECURITY_BITS..=MAX_SECURITY_BITS).contains(&params.security_bits) {
        return Err(Error::Domain(format!(
            "security_bits must lie in [{MIN_SECURITY_BITS}, {MAX_SECURITY_BITS}], got {}",
            params.security_bits
        )));
    }
    let mut rng = params.rng();
    for _ in 0..KEYGEN_ATTEMPTS {
        let p = random_prime(params.security_bits, &mut rng)?;
        let q = random_prime(params.security_bits, &mut rng)?;
        match keygen_from_primes(&p, &q, &mut rng) {
            Ok(keys) => return Ok(keys),
            Err(Error::KeyIntegrity(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(KEYGEN_ATTEMPTS))
}

/// Builds the key material from caller-chosen primes. The shares x0, x1 are
/// odd and ⌊|N|/2⌋ − 1 bits long.
pub fn keygen_from_primes<R: RngCore + ?Sized>(p: &BigUint, q: &BigUint, rng: &mut R) -> Result<SheKeys> {
    if p == q {
        return Err(Error::KeyIntegrity("p and q must differ"));
    }
    if !is_probable_prime(p, rng) || !is_probable_prime(q, rng) {
        return Err(Error::KeyIntegrity("p and q must be prime"));
    }
    let n = p * q;
    let one = BigUint::one();
    let phi = (p - &one) * (q - &one);
    if !n.gcd(&phi).is_one() {
        return Err(Error::KeyIntegrity("gcd(N, phi(N)) != 1"));
    }
    let phi_inv = phi
        .modinv(&n)
        .ok_or(Error::KeyIntegrity("phi(N) not invertible mod N"))?;
    let share_bits = n.bits() / 2 - 1;
    if share_bits < 2 {
        return Err(Error::KeyIntegrity("modulus too small for odd key shares"));
    }

    let modulus = Modulus::new(n);
    let add_public = AddPublicKey { modulus: Arc::clone(&modulus) };
    let add = AddKeypair {
        public: add_public.clone(),
        secret: AddSecretKey { public: add_public, phi, p: p.clone(), q: q.clone(), phi_inv },
    };

    let g = BigUint::from(GENERATOR);
    let x0 = random_share(share_bits, modulus.n(), rng);
    let x1 = random_share(share_bits, modulus.n(), rng);
    let x = &x0 * &x1;
    let h = g.modpow(&x, modulus.n());
    let mul_public = MulPublicKey::with_modulus(modulus, g, h)?;
    let mul = MulKeypair {
        public: mul_public.clone(),
        secret: MulSecretKey { public: mul_public, x0: x0.clone(), x1: x1.clone(), x },
    };

    let shares = KeyShares {
        proxy: KeyShare { add: None, mul: x0 },
        server: KeyShare { add: None, mul: x1 },
    };
    Ok(SheKeys { add, mul, shares })
}

/// Public key file: `{"n", "g", "h"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKeyFile {
    #[serde(with = "hex_biguint")]
    pub n: BigUint,
    #[serde(with = "hex_biguint")]
    pub g: BigUint,
    #[serde(with = "hex_biguint")]
    pub h: BigUint,
}

/// Secret key file: the public fields plus phi, p, q, x0, x1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKeyFile {
    #[serde(with = "hex_biguint")]
    pub n: BigUint,
    #[serde(with = "hex_biguint")]
    pub g: BigUint,
    #[serde(with = "hex_biguint")]
    pub h: BigUint,
    #[serde(with = "hex_biguint")]
    pub phi: BigUint,
    #[serde(with = "hex_biguint")]
    pub p: BigUint,
    #[serde(with = "hex_biguint")]
    pub q: BigUint,
    #[serde(with = "hex_biguint")]
    pub x0: BigUint,
    #[serde(with = "hex_biguint")]
    pub x1: BigUint,
}

/// A server's key file: public material plus its own multiplicative share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareFile {
    #[serde(with = "hex_biguint")]
    pub n: BigUint,
    #[serde(with = "hex_biguint")]
    pub g: BigUint,
    #[serde(with = "hex_biguint")]
    pub h: BigUint,
    #[serde(with = "hex_biguint")]
    pub mul_share: BigUint,
    #[serde(with = "hex_opt")]
    pub add_share: Option<BigUint>,
}

impl SheKeys {
    pub fn public_file(&self) -> PublicKeyFile {
        let pk = &self.mul.public;
        PublicKeyFile { n: pk.n().clone(), g: pk.g.clone(), h: pk.h.clone() }
    }

    pub fn secret_file(&self) -> SecretKeyFile {
        let pk = &self.mul.public;
        let sk = &self.add.secret;
        SecretKeyFile {
            n: pk.n().clone(),
            g: pk.g.clone(),
            h: pk.h.clone(),
            phi: sk.phi.clone(),
            p: sk.p.clone(),
            q: sk.q.clone(),
            x0: self.mul.secret.x0.clone(),
            x1: self.mul.secret.x1.clone(),
        }
    }

    /// Rebuilds keys from a secret key file, checking every stored relation.
    pub fn from_secret_file(file: &SecretKeyFile) -> Result<Self> {
        let one = BigUint::one();
        if &file.p * &file.q != file.n {
            return Err(Error::KeyIntegrity("n != p*q"));
        }
        if (&file.p - &one) * (&file.q - &one) != file.phi {
            return Err(Error::KeyIntegrity("phi != (p-1)(q-1)"));
        }
        if file.g != BigUint::from(GENERATOR) {
            return Err(Error::KeyIntegrity("generator must be 16"));
        }
        if file.x0.is_even() || file.x1.is_even() {
            return Err(Error::KeyIntegrity("key shares must be odd"));
        }
        let x = &file.x0 * &file.x1;
        if file.g.modpow(&x, &file.n) != file.h {
            return Err(Error::KeyIntegrity("h != g^(x0*x1) mod N"));
        }
        let phi_inv = file
            .phi
            .modinv(&file.n)
            .ok_or(Error::KeyIntegrity("phi(N) not invertible mod N"))?;
        let modulus = Modulus::new(file.n.clone());
        let add_public = AddPublicKey { modulus: Arc::clone(&modulus) };
        let mul_public = MulPublicKey::with_modulus(modulus, file.g.clone(), file.h.clone())?;
        Ok(SheKeys {
            add: AddKeypair {
                public: add_public.clone(),
                secret: AddSecretKey {
                    public: add_public,
                    phi: file.phi.clone(),
                    p: file.p.clone(),
                    q: file.q.clone(),
                    phi_inv,
                },
            },
            mul: MulKeypair {
                public: mul_public.clone(),
                secret: MulSecretKey {
                    public: mul_public,
                    x0: file.x0.clone(),
                    x1: file.x1.clone(),
                    x,
                },
            },
            shares: KeyShares {
                proxy: KeyShare { add: None, mul: file.x0.clone() },
                server: KeyShare { add: None, mul: file.x1.clone() },
            },
        })
    }
}

impl PublicKeyFile {
    pub fn to_key(&self) -> Result<MulPublicKey> {
        MulPublicKey::new(self.n.clone(), self.g.clone(), self.h.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_keygen_is_reproducible_and_consistent() {
        let a = keygen(&KeyGenParams::seeded(16, 7)).unwrap();
        let b = keygen(&KeyGenParams::seeded(16, 7)).unwrap();
        assert_eq!(a.secret_file(), b.secret_file());

        let sk = &a.add.secret;
        assert_eq!(&sk.p * &sk.q, *a.add.public.n());
        assert_ne!(sk.p, sk.q);
        assert_eq!(sk.p.bits(), 16);
        assert_eq!(sk.q.bits(), 16);
        let x = &a.shares.proxy.mul * &a.shares.server.mul;
        assert_eq!(&x, a.mul.secret.x());
        assert_eq!(BigUint::from(16u32).modpow(&x, a.mul.public.n()), *a.mul.public.h());
        assert!(a.shares.proxy.add.is_none() && a.shares.server.add.is_none());
        let half = a.add.public.n().bits() / 2;
        assert!(a.mul.secret.x0.bits() < half && a.mul.secret.x1.bits() < half);
        assert!(a.mul.secret.x0.is_odd() && a.mul.secret.x1.is_odd());
    }

    #[test]
    fn different_seeds_differ() {
        let a = keygen(&KeyGenParams::seeded(32, 1)).unwrap();
        let b = keygen(&KeyGenParams::seeded(32, 2)).unwrap();
        assert_ne!(a.add.public.n(), b.add.public.n());
    }

    #[test]
    fn full_size_modulus_length() {
        let keys = keygen(&KeyGenParams::seeded(512, 3)).unwrap();
        assert!([1023, 1024].contains(&keys.add.public.n().bits()));
    }

    #[test]
    fn rejects_out_of_range_security() {
        assert!(matches!(keygen(&KeyGenParams::new(8)), Err(Error::Domain(_))));
    }

    #[test]
    fn fixed_small_primes() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let keys = keygen_from_primes(&BigUint::from(11u32), &BigUint::from(13u32), &mut rng).unwrap();
        assert_eq!(*keys.add.public.n(), BigUint::from(143u32));
        assert_eq!(*keys.add.secret.phi(), BigUint::from(120u32));
        // |N| = 8 bits, so both shares are 3-bit odd numbers.
        for x in [&keys.shares.proxy.mul, &keys.shares.server.mul] {
            assert!(*x == BigUint::from(5u32) || *x == BigUint::from(7u32));
        }
        assert!(keygen_from_primes(&BigUint::from(11u32), &BigUint::from(11u32), &mut rng).is_err());
        assert!(keygen_from_primes(&BigUint::from(15u32), &BigUint::from(13u32), &mut rng).is_err());
    }

    #[test]
    fn secret_file_roundtrip_checks_relations() {
        let keys = keygen(&KeyGenParams::seeded(32, 9)).unwrap();
        let file = keys.secret_file();
        let json = serde_json::to_string(&file).unwrap();
        let back: SecretKeyFile = serde_json::from_str(&json).unwrap();
        let rebuilt = SheKeys::from_secret_file(&back).unwrap();
        assert_eq!(rebuilt.secret_file(), file);

        let mut bad = file.clone();
        bad.h += 1u32;
        assert!(SheKeys::from_secret_file(&bad).is_err());
    }
}

//! Paillier encryption with generator 1 + N.

use std::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use super::keys::{random_unit, same_modulus, AddPublicKey, AddSecretKey, Modulus};
use crate::error::{Error, Result};

/// A Paillier ciphertext, tagged with the modulus it was produced under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddCiphertext {
    value: BigUint,
    modulus: Arc<Modulus>,
}

impl AddPublicKey {
    /// c = (1+N)^m · r^N mod N² with fresh r ∈ Z*_N.
    pub fn encrypt<R: RngCore + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<AddCiphertext> {
        let r = random_unit(self.n(), rng);
        self.encrypt_with_randomness(m, &r)
    }

    /// Encryption with caller-supplied randomness. `r = 1` gives the public,
    /// deterministic encoding used for known constants.
    pub fn encrypt_with_randomness(&self, m: &BigUint, r: &BigUint) -> Result<AddCiphertext> {
        let (n, nn) = (self.n(), self.n_squared());
        if m >= n {
            return Err(Error::Domain(format!("Paillier plaintext must be < N (got {} bits)", m.bits())));
        }
        if r.is_zero() || r >= n || !r.gcd(n).is_one() {
            return Err(Error::Domain("Paillier randomness must lie in Z*_N".into()));
        }
        // (1+N)^m = 1 + mN (mod N²)
        let message_part = (BigUint::one() + m * n) % nn;
        let value = if r.is_one() { message_part } else { message_part * r.modpow(n, nn) % nn };
        Ok(AddCiphertext { value, modulus: Arc::clone(&self.modulus) })
    }

    /// E+(0) with r = 1, the neutral element of ciphertext multiplication.
    pub fn zero(&self) -> AddCiphertext {
        AddCiphertext { value: BigUint::one(), modulus: Arc::clone(&self.modulus) }
    }

    /// Validates a raw value (e.g. from the wire) as a ciphertext under this key.
    pub fn ciphertext(&self, value: BigUint) -> Result<AddCiphertext> {
        AddCiphertext::from_raw(value, Arc::clone(&self.modulus))
    }
}

impl AddSecretKey {
    /// m = L(c^φ mod N²) · φ⁻¹ mod N, with L(u) = (u − 1)/N.
    pub fn decrypt(&self, c: &AddCiphertext) -> Result<BigUint> {
        same_modulus(&c.modulus, &self.public.modulus)?;
        let (n, nn) = (self.public.n(), self.public.n_squared());
        let u = c.value.modpow(&self.phi, nn);
        let (l, rem) = (u - 1u32).div_rem(n);
        if !rem.is_zero() {
            return Err(Error::KeyIntegrity("c^phi != 1 mod N; ciphertext/key mismatch"));
        }
        Ok(l * &self.phi_inv % n)
    }

    /// CRT decryption over p² and q². Bit-identical to [`decrypt`](Self::decrypt).
    pub fn decrypt_crt(&self, c: &AddCiphertext) -> Result<BigUint> {
        same_modulus(&c.modulus, &self.public.modulus)?;
        let n = self.public.n();
        let mp = self.crt_half(&c.value, &self.p)?;
        let mq = self.crt_half(&c.value, &self.q)?;
        // m = mq + q·((mp − mq)·q⁻¹ mod p)
        let q_inv = self
            .q
            .modinv(&self.p)
            .ok_or(Error::KeyIntegrity("q not invertible mod p"))?;
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        Ok((mq + &self.q * (diff * q_inv % &self.p)) % n)
    }

    fn crt_half(&self, c: &BigUint, prime: &BigUint) -> Result<BigUint> {
        let pp = prime * prime;
        let exp = prime - 1u32;
        let lift = |u: BigUint| -> Result<BigUint> {
            let (l, rem) = (u - 1u32).div_rem(prime);
            if rem.is_zero() {
                Ok(l)
            } else {
                Err(Error::KeyIntegrity("c^(p-1) != 1 mod p; ciphertext/key mismatch"))
            }
        };
        let lc = lift((c % &pp).modpow(&exp, &pp))?;
        let base = (BigUint::one() + self.public.n()) % &pp;
        let lg = lift(base.modpow(&exp, &pp))?;
        let lg_inv = lg.modinv(prime).ok_or(Error::KeyIntegrity("degenerate CRT component"))?;
        Ok(lc * lg_inv % prime)
    }
}

impl AddCiphertext {
    pub(crate) fn from_raw(value: BigUint, modulus: Arc<Modulus>) -> Result<Self> {
        if value.is_zero() || &value >= modulus.n_squared() {
            return Err(Error::DegenerateCiphertext("Paillier ciphertext outside [1, N^2)"));
        }
        if !value.gcd(modulus.n()).is_one() {
            return Err(Error::DegenerateCiphertext("Paillier ciphertext not a unit mod N^2"));
        }
        Ok(Self { value, modulus })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn modulus(&self) -> &Arc<Modulus> {
        &self.modulus
    }

    /// Homomorphic addition: E+(a)·E+(b) = E+(a + b).
    pub fn add(&self, other: &AddCiphertext) -> Result<AddCiphertext> {
        same_modulus(&self.modulus, &other.modulus)?;
        let value = &self.value * &other.value % self.modulus.n_squared();
        Ok(AddCiphertext { value, modulus: Arc::clone(&self.modulus) })
    }

    /// Homomorphic subtraction: E+(a)·E+(b)⁻¹ = E+(a − b).
    pub fn sub(&self, other: &AddCiphertext) -> Result<AddCiphertext> {
        same_modulus(&self.modulus, &other.modulus)?;
        let nn = self.modulus.n_squared();
        let inv = other
            .value
            .modinv(nn)
            .ok_or(Error::DegenerateCiphertext("subtrahend not invertible mod N^2"))?;
        Ok(AddCiphertext { value: &self.value * inv % nn, modulus: Arc::clone(&self.modulus) })
    }

    /// Scalar multiplication: E+(m)^k = E+(k·m).
    pub fn mul_scalar(&self, k: &BigUint) -> Result<AddCiphertext> {
        if k >= self.modulus.n() {
            return Err(Error::Domain("scalar must be < N".into()));
        }
        let value = self.value.modpow(k, self.modulus.n_squared());
        Ok(AddCiphertext { value, modulus: Arc::clone(&self.modulus) })
    }

    /// Raises the ciphertext to an arbitrary exponent mod N². Used by the
    /// switching protocol, where exponents act on the message slot mod N.
    pub(crate) fn pow(&self, e: &BigUint) -> AddCiphertext {
        AddCiphertext { value: self.value.modpow(e, self.modulus.n_squared()), modulus: Arc::clone(&self.modulus) }
    }
}

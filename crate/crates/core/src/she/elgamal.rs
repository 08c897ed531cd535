//! ElGamal over the composite modulus N with generator 16.

use std::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use super::keys::{random_unit, same_modulus, Modulus, MulPublicKey, MulSecretKey};
use crate::error::{Error, Result};

/// ⟨c1, c2⟩ = ⟨m·h^r, g^r⟩ mod N. Both components lie in [1, N).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulCiphertext {
    c1: BigUint,
    c2: BigUint,
    modulus: Arc<Modulus>,
}

impl MulPublicKey {
    pub fn encrypt<R: RngCore + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<MulCiphertext> {
        let n = self.n();
        if m.is_zero() {
            return Err(Error::ZeroPlaintext);
        }
        if m >= n {
            return Err(Error::Domain("ElGamal plaintext must be < N".into()));
        }
        let r = random_unit(n, rng);
        let c1 = m * self.h.modpow(&r, n) % n;
        let c2 = self.g.modpow(&r, n);
        MulCiphertext::from_raw(c1, c2, Arc::clone(&self.modulus))
    }

    pub fn ciphertext(&self, c1: BigUint, c2: BigUint) -> Result<MulCiphertext> {
        MulCiphertext::from_raw(c1, c2, Arc::clone(&self.modulus))
    }
}

impl MulSecretKey {
    /// m = c1 / c2^x mod N.
    pub fn decrypt(&self, c: &MulCiphertext) -> Result<BigUint> {
        same_modulus(&c.modulus, &self.public.modulus)?;
        let n = self.public.n();
        let mask = c.c2.modpow(&self.x, n);
        let inv = mask
            .modinv(n)
            .ok_or(Error::DegenerateCiphertext("c2 not invertible mod N"))?;
        Ok(&c.c1 * inv % n)
    }
}

impl MulCiphertext {
    pub(crate) fn from_raw(c1: BigUint, c2: BigUint, modulus: Arc<Modulus>) -> Result<Self> {
        let n = modulus.n();
        if c1.is_zero() || c2.is_zero() {
            return Err(Error::DegenerateCiphertext("zero ElGamal component"));
        }
        if &c1 >= n || &c2 >= n {
            return Err(Error::DegenerateCiphertext("ElGamal component outside [1, N)"));
        }
        if !c2.gcd(n).is_one() {
            return Err(Error::DegenerateCiphertext("c2 not invertible mod N"));
        }
        Ok(Self { c1, c2, modulus })
    }

    pub fn c1(&self) -> &BigUint {
        &self.c1
    }

    pub fn c2(&self) -> &BigUint {
        &self.c2
    }

    pub fn modulus(&self) -> &Arc<Modulus> {
        &self.modulus
    }

    /// Homomorphic multiplication, componentwise mod N.
    pub fn mul(&self, other: &MulCiphertext) -> Result<MulCiphertext> {
        same_modulus(&self.modulus, &other.modulus)?;
        let n = self.modulus.n();
        Self::from_raw(&self.c1 * &other.c1 % n, &self.c2 * &other.c2 % n, Arc::clone(&self.modulus))
    }

    /// Multiplies the plaintext by a known nonzero scalar.
    pub fn mul_scalar(&self, k: &BigUint) -> Result<MulCiphertext> {
        let n = self.modulus.n();
        if k.is_zero() {
            return Err(Error::ZeroPlaintext);
        }
        if k >= n {
            return Err(Error::Domain("scalar must be < N".into()));
        }
        Self::from_raw(&self.c1 * k % n, self.c2.clone(), Arc::clone(&self.modulus))
    }
}

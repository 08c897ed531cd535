//! Switchable homomorphic encryption primitives: Paillier (additive) and
//! ElGamal (multiplicative) sharing one modulus N = p·q.

mod elgamal;
mod keys;
mod paillier;

pub use elgamal::MulCiphertext;
pub use keys::{
    is_probable_prime, keygen, keygen_from_primes, random_unit, AddKeypair, AddPublicKey, AddSecretKey,
    KeyGenParams, KeyShare, KeyShares, Modulus, MulKeypair, MulPublicKey, MulSecretKey, PublicKeyFile,
    SecretKeyFile, ShareFile, SheKeys, DEFAULT_SECURITY_BITS, GENERATOR, MAX_SECURITY_BITS,
    MIN_SECURITY_BITS,
};
pub use paillier::AddCiphertext;

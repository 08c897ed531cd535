//! C ABI for lbrs-core.
//!
//! Every object crosses the boundary as an opaque pointer owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns an [`LbrsStatus`]; on failure, [`lbrs_last_error_message`] holds
//! a description for the calling thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_bigint::BigUint;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use lbrs::hilbert::{index_to_xy, order_for, xy_to_index, GridCell, HilbertIndex};
use lbrs::protocol::{ClientConfig, Loopback};
use lbrs::recommender::{predict_plain, CoMatrix, PreferenceVector};
use lbrs::she::{keygen, AddCiphertext, KeyGenParams, MulCiphertext, SheKeys};
use lbrs::switch::{LocalSwitch, SwitchContext};
use lbrs::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A value is outside the plaintext domain or does not fit the output.
    Domain = 3,
    /// 0 has no multiplicative encryption.
    ZeroPlaintext = 4,
    /// A ciphertext component is not a unit mod N.
    Degenerate = 5,
    /// Any other failure inside the library.
    Crypto = 6,
    /// A panic was caught at the boundary.
    Panic = 7,
}

/// Key material plus the random source used for encryption.
pub struct LbrsKeys {
    keys: SheKeys,
    rng: ChaCha20Rng,
    seed: u64,
}

/// Additively homomorphic ciphertext.
pub struct LbrsAddCiphertext(AddCiphertext);

/// Multiplicatively homomorphic ciphertext.
pub struct LbrsMulCiphertext(MulCiphertext);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

struct Failure(LbrsStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let status = match err {
            Error::Domain(_) => LbrsStatus::Domain,
            Error::ZeroPlaintext => LbrsStatus::ZeroPlaintext,
            Error::DegenerateCiphertext(_) => LbrsStatus::Degenerate,
            _ => LbrsStatus::Crypto,
        };
        Failure(status, err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LbrsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LbrsStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LbrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            LbrsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LbrsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = as_mut(out, "output pointer")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn parse_hex(s: *const c_char) -> Result<BigUint, Failure> {
    if s.is_null() {
        return Err(null("hex string"));
    }
    let text = CStr::from_ptr(s).to_str().map_err(|_| invalid("hex string is not UTF-8"))?;
    BigUint::parse_bytes(text.as_bytes(), 16).ok_or_else(|| invalid(format!("not a hex integer: {text:?}")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let slot = as_mut(out, "output pointer")?;
    *slot = CString::new(s).map_err(|_| invalid("string contains NUL"))?.into_raw();
    Ok(())
}

fn to_u64(v: &BigUint) -> Result<u64, Failure> {
    u64::try_from(v).map_err(|_| Failure(LbrsStatus::Domain, "plaintext does not fit in 64 bits".into()))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn lbrs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lbrs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates keys with primes of `security_bits` bits each. The same seed
/// always gives the same keys and the same encryption randomness.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lbrs_keys_generate(security_bits: u32, seed: u64, out: *mut *mut LbrsKeys) -> LbrsStatus {
    guard(|| {
        if security_bits < 16 {
            return Err(invalid("security_bits must be at least 16"));
        }
        let keys = keygen(&KeyGenParams::seeded(security_bits, seed))?;
        put(out, LbrsKeys { keys, rng: ChaCha20Rng::seed_from_u64(seed.rotate_left(17)), seed })
    })
}

/// # Safety
/// `keys` must come from [`lbrs_keys_generate`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lbrs_keys_free(keys: *mut LbrsKeys) {
    if !keys.is_null() {
        drop(Box::from_raw(keys));
    }
}

/// Public key as JSON `{"n", "g", "h"}` with lowercase hex values.
///
/// # Safety
/// `keys` and `out` must be valid. Free the result with [`lbrs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lbrs_keys_public_json(keys: *const LbrsKeys, out: *mut *mut c_char) -> LbrsStatus {
    guard(|| {
        let keys = as_ref(keys, "keys")?;
        put_string(out, public_json(&keys.keys))
    })
}

fn public_json(keys: &SheKeys) -> String {
    let file = keys.public_file();
    format!("{{\"n\":\"{:x}\",\"g\":\"{:x}\",\"h\":\"{:x}\"}}", file.n, file.g, file.h)
}

/// Modulus N as lowercase hex.
///
/// # Safety
/// `keys` and `out` must be valid. Free the result with [`lbrs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lbrs_keys_modulus_hex(keys: *const LbrsKeys, out: *mut *mut c_char) -> LbrsStatus {
    guard(|| {
        let keys = as_ref(keys, "keys")?;
        put_string(out, format!("{:x}", keys.keys.add.public.n()))
    })
}

// ---- additive ciphertexts ----

/// # Safety
/// `keys` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_encrypt_u64(
    keys: *mut LbrsKeys,
    m: u64,
    out: *mut *mut LbrsAddCiphertext,
) -> LbrsStatus {
    guard(|| {
        let keys = as_mut(keys, "keys")?;
        let c = keys.keys.add.public.encrypt(&BigUint::from(m), &mut keys.rng)?;
        put(out, LbrsAddCiphertext(c))
    })
}

/// # Safety
/// `keys`, `m_hex` and `out` must be valid; `m_hex` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_encrypt_hex(
    keys: *mut LbrsKeys,
    m_hex: *const c_char,
    out: *mut *mut LbrsAddCiphertext,
) -> LbrsStatus {
    guard(|| {
        let m = parse_hex(m_hex)?;
        let keys = as_mut(keys, "keys")?;
        let c = keys.keys.add.public.encrypt(&m, &mut keys.rng)?;
        put(out, LbrsAddCiphertext(c))
    })
}

/// Fails with `LBRS_STATUS_DOMAIN` when the plaintext exceeds 64 bits.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_decrypt_u64(
    keys: *const LbrsKeys,
    c: *const LbrsAddCiphertext,
    out: *mut u64,
) -> LbrsStatus {
    guard(|| {
        let keys = as_ref(keys, "keys")?;
        let c = as_ref(c, "ciphertext")?;
        let m = keys.keys.add.secret.decrypt_crt(&c.0)?;
        *as_mut(out, "output pointer")? = to_u64(&m)?;
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid. Free the result with [`lbrs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_decrypt_hex(
    keys: *const LbrsKeys,
    c: *const LbrsAddCiphertext,
    out: *mut *mut c_char,
) -> LbrsStatus {
    guard(|| {
        let keys = as_ref(keys, "keys")?;
        let c = as_ref(c, "ciphertext")?;
        let m = keys.keys.add.secret.decrypt_crt(&c.0)?;
        put_string(out, format!("{m:x}"))
    })
}

/// E+(a) · E+(b) = E+(a + b).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_add(
    a: *const LbrsAddCiphertext,
    b: *const LbrsAddCiphertext,
    out: *mut *mut LbrsAddCiphertext,
) -> LbrsStatus {
    guard(|| {
        let c = as_ref(a, "a")?.0.add(&as_ref(b, "b")?.0)?;
        put(out, LbrsAddCiphertext(c))
    })
}

/// E+(a − b mod N).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_sub(
    a: *const LbrsAddCiphertext,
    b: *const LbrsAddCiphertext,
    out: *mut *mut LbrsAddCiphertext,
) -> LbrsStatus {
    guard(|| {
        let c = as_ref(a, "a")?.0.sub(&as_ref(b, "b")?.0)?;
        put(out, LbrsAddCiphertext(c))
    })
}

/// E+(k · a).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_mul_scalar(
    a: *const LbrsAddCiphertext,
    k: u64,
    out: *mut *mut LbrsAddCiphertext,
) -> LbrsStatus {
    guard(|| {
        let c = as_ref(a, "a")?.0.mul_scalar(&BigUint::from(k))?;
        put(out, LbrsAddCiphertext(c))
    })
}

/// Ciphertext value as lowercase hex.
///
/// # Safety
/// All pointers must be valid. Free the result with [`lbrs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_to_hex(c: *const LbrsAddCiphertext, out: *mut *mut c_char) -> LbrsStatus {
    guard(|| {
        let c = as_ref(c, "ciphertext")?;
        put_string(out, format!("{:x}", c.0.value()))
    })
}

/// # Safety
/// `c` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lbrs_add_free(c: *mut LbrsAddCiphertext) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

// ---- multiplicative ciphertexts ----

/// Fails with `LBRS_STATUS_ZERO_PLAINTEXT` for m = 0.
///
/// # Safety
/// `keys` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_mul_encrypt_u64(
    keys: *mut LbrsKeys,
    m: u64,
    out: *mut *mut LbrsMulCiphertext,
) -> LbrsStatus {
    guard(|| {
        let keys = as_mut(keys, "keys")?;
        let c = keys.keys.mul.public.encrypt(&BigUint::from(m), &mut keys.rng)?;
        put(out, LbrsMulCiphertext(c))
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_mul_decrypt_u64(
    keys: *const LbrsKeys,
    c: *const LbrsMulCiphertext,
    out: *mut u64,
) -> LbrsStatus {
    guard(|| {
        let keys = as_ref(keys, "keys")?;
        let m = keys.keys.mul.secret.decrypt(&as_ref(c, "ciphertext")?.0)?;
        *as_mut(out, "output pointer")? = to_u64(&m)?;
        Ok(())
    })
}

/// E*(a) · E*(b) = E*(a · b).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_mul_mul(
    a: *const LbrsMulCiphertext,
    b: *const LbrsMulCiphertext,
    out: *mut *mut LbrsMulCiphertext,
) -> LbrsStatus {
    guard(|| {
        let c = as_ref(a, "a")?.0.mul(&as_ref(b, "b")?.0)?;
        put(out, LbrsMulCiphertext(c))
    })
}

/// E*(k · a) for 0 < k < N.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_mul_scalar(
    a: *const LbrsMulCiphertext,
    k: u64,
    out: *mut *mut LbrsMulCiphertext,
) -> LbrsStatus {
    guard(|| {
        let c = as_ref(a, "a")?.0.mul_scalar(&BigUint::from(k))?;
        put(out, LbrsMulCiphertext(c))
    })
}

/// # Safety
/// `c` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lbrs_mul_free(c: *mut LbrsMulCiphertext) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Converts E*(m) into E+(m) by running both server roles in process.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_switch_mul_to_add(
    keys: *const LbrsKeys,
    c: *const LbrsMulCiphertext,
    out: *mut *mut LbrsAddCiphertext,
) -> LbrsStatus {
    guard(|| {
        let keys = as_ref(keys, "keys")?;
        let c = as_ref(c, "ciphertext")?;
        let mut ctx = LocalSwitch::new(&keys.keys.mul.public, &keys.keys.shares, keys.seed);
        put(out, LbrsAddCiphertext(ctx.switch(&c.0)?))
    })
}

// ---- Hilbert curve ----

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_hilbert_xy_to_index(order: u32, x: u32, y: u32, out: *mut u64) -> LbrsStatus {
    guard(|| {
        let idx = xy_to_index(GridCell::new(x, y), order)?;
        *as_mut(out, "output pointer")? = idx.d();
        Ok(())
    })
}

/// # Safety
/// `x` and `y` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lbrs_hilbert_index_to_xy(order: u32, d: u64, x: *mut u32, y: *mut u32) -> LbrsStatus {
    guard(|| {
        let cell = index_to_xy(HilbertIndex::new(order, d)?);
        *as_mut(x, "x")? = cell.x;
        *as_mut(y, "y")? = cell.y;
        Ok(())
    })
}

// ---- recommendation ----

unsafe fn inputs(
    size: usize,
    cm: *const u64,
    pv: *const u32,
    rating_max: u32,
) -> Result<(CoMatrix, PreferenceVector), Failure> {
    if size == 0 {
        return Err(invalid("size must be positive"));
    }
    let cells = size.checked_mul(size).ok_or_else(|| invalid("size too large"))?;
    let cm = slice(cm, cells, "cm")?;
    let rows = cm.chunks(size).map(<[u64]>::to_vec).collect();
    let cm = CoMatrix::from_rows(rows)?;
    let pv = PreferenceVector::new(slice(pv, size, "pv")?.to_vec(), rating_max)?;
    Ok((cm, pv))
}

/// Plaintext scores: `scores[i] = Σ_j cm[i*size + j] · pv[j]`.
///
/// # Safety
/// `cm` holds size² entries, `pv` and `scores` hold size entries.
#[no_mangle]
pub unsafe extern "C" fn lbrs_predict_plain(
    size: usize,
    cm: *const u64,
    pv: *const u32,
    rating_max: u32,
    scores: *mut u64,
) -> LbrsStatus {
    guard(|| {
        let (cm, pv) = inputs(size, cm, pv, rating_max)?;
        let out = predict_plain(&cm, &pv)?;
        if scores.is_null() {
            return Err(null("scores"));
        }
        std::slice::from_raw_parts_mut(scores, size).copy_from_slice(&out);
        Ok(())
    })
}

/// Runs a full encrypted session in process: the matrix is uploaded as a
/// single contribution, then one recommendation is made for location
/// index `loc`. Matching items and their scores are written to `items` and
/// `scores` (each `capacity` long); `count` receives how many were found.
/// Fails with `LBRS_STATUS_DOMAIN` when `capacity` is too small.
///
/// # Safety
/// `cm` holds size² entries, `pv` holds size entries, `items` and `scores`
/// hold `capacity` entries, `count` is valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lbrs_recommend_local(
    keys: *const LbrsKeys,
    size: usize,
    cm: *const u64,
    pv: *const u32,
    rating_max: u32,
    loc: u64,
    radius: u64,
    items: *mut usize,
    scores: *mut u64,
    capacity: usize,
    count: *mut usize,
) -> LbrsStatus {
    guard(|| {
        let keys = as_ref(keys, "keys")?;
        let (cm, pv) = inputs(size, cm, pv, rating_max)?;
        if loc >= size as u64 {
            return Err(Failure(LbrsStatus::Domain, format!("location {loc} outside {size} items")));
        }
        let order = order_for(size as u64);
        let config = ClientConfig { order, radius, rating_max };
        let mut session = Loopback::new(keys.keys.clone(), config, keys.seed);
        session.client.setup()?;
        session.client.initialize(size, &[cm])?;
        let cell = index_to_xy(HilbertIndex::new(order, loc)?);
        let found = session.client.recommend(&pv, cell)?.items;
        *as_mut(count, "count")? = found.len();
        if found.len() > capacity {
            return Err(Failure(LbrsStatus::Domain, format!("{} results exceed capacity {capacity}", found.len())));
        }
        if !found.is_empty() && (items.is_null() || scores.is_null()) {
            return Err(null("items or scores"));
        }
        for (k, r) in found.iter().enumerate() {
            *items.add(k) = r.item;
            *scores.add(k) = r.score;
        }
        Ok(())
    })
}

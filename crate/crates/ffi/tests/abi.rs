use std::ffi::{CStr, CString};
use std::ptr;
use std::sync::OnceLock;

use lbrs_ffi::*;

struct Keys(*mut LbrsKeys);
unsafe impl Send for Keys {}
unsafe impl Sync for Keys {}

// one key pair for the whole file; generation dominates otherwise
fn keys() -> *mut LbrsKeys {
    static KEYS: OnceLock<Keys> = OnceLock::new();
    KEYS.get_or_init(|| {
        let mut k = ptr::null_mut();
        assert_eq!(unsafe { lbrs_keys_generate(128, 11, &mut k) }, LbrsStatus::Ok);
        Keys(k)
    })
    .0
}

fn last_error() -> String {
    let p = lbrs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { lbrs_string_free(p) };
    s
}

fn add_enc(m: u64) -> *mut LbrsAddCiphertext {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { lbrs_add_encrypt_u64(keys(), m, &mut c) }, LbrsStatus::Ok);
    c
}

fn add_dec(c: *const LbrsAddCiphertext) -> u64 {
    let mut m = 0;
    assert_eq!(unsafe { lbrs_add_decrypt_u64(keys(), c, &mut m) }, LbrsStatus::Ok);
    m
}

#[test]
fn additive_round_trip_and_ops() {
    let (a, b) = (add_enc(40), add_enc(2));
    assert_eq!(add_dec(a), 40);
    let mut sum = ptr::null_mut();
    let mut diff = ptr::null_mut();
    let mut scaled = ptr::null_mut();
    unsafe {
        assert_eq!(lbrs_add_add(a, b, &mut sum), LbrsStatus::Ok);
        assert_eq!(lbrs_add_sub(b, a, &mut diff), LbrsStatus::Ok);
        assert_eq!(lbrs_add_mul_scalar(a, 3, &mut scaled), LbrsStatus::Ok);
    }
    assert_eq!(add_dec(sum), 42);
    assert_eq!(add_dec(scaled), 120);

    // 2 − 40 wraps to N − 38, which does not fit in 64 bits
    let mut m = 0;
    assert_eq!(unsafe { lbrs_add_decrypt_u64(keys(), diff, &mut m) }, LbrsStatus::Domain);
    let mut hex = ptr::null_mut();
    let mut n_hex = ptr::null_mut();
    unsafe {
        assert_eq!(lbrs_add_decrypt_hex(keys(), diff, &mut hex), LbrsStatus::Ok);
        assert_eq!(lbrs_keys_modulus_hex(keys(), &mut n_hex), LbrsStatus::Ok);
    }
    let n = u128::from_str_radix(&take_string(n_hex), 16).ok();
    let got = u128::from_str_radix(&take_string(hex), 16).ok();
    if let (Some(n), Some(got)) = (n, got) {
        assert_eq!(got, n - 38);
    }

    for c in [a, b, sum, diff, scaled] {
        unsafe { lbrs_add_free(c) };
    }
}

#[test]
fn hex_encryption_accepts_big_values() {
    let text = CString::new("ffffffffffffffffff").unwrap();
    let mut c = ptr::null_mut();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(lbrs_add_encrypt_hex(keys(), text.as_ptr(), &mut c), LbrsStatus::Ok);
        assert_eq!(lbrs_add_decrypt_hex(keys(), c, &mut out), LbrsStatus::Ok);
        lbrs_add_free(c);
    }
    assert_eq!(take_string(out), "ffffffffffffffffff");

    let bad = CString::new("xyz").unwrap();
    assert_eq!(unsafe { lbrs_add_encrypt_hex(keys(), bad.as_ptr(), &mut c) }, LbrsStatus::InvalidArgument);
    assert!(last_error().contains("xyz"));
}

#[test]
fn multiplicative_ops_and_switch() {
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    let mut prod = ptr::null_mut();
    let mut scaled = ptr::null_mut();
    let mut switched = ptr::null_mut();
    let mut m = 0;
    unsafe {
        assert_eq!(lbrs_mul_encrypt_u64(keys(), 6, &mut a), LbrsStatus::Ok);
        assert_eq!(lbrs_mul_encrypt_u64(keys(), 7, &mut b), LbrsStatus::Ok);
        assert_eq!(lbrs_mul_mul(a, b, &mut prod), LbrsStatus::Ok);
        assert_eq!(lbrs_mul_decrypt_u64(keys(), prod, &mut m), LbrsStatus::Ok);
        assert_eq!(m, 42);
        assert_eq!(lbrs_mul_scalar(a, 3, &mut scaled), LbrsStatus::Ok);
        assert_eq!(lbrs_mul_decrypt_u64(keys(), scaled, &mut m), LbrsStatus::Ok);
        assert_eq!(m, 18);
        assert_eq!(lbrs_switch_mul_to_add(keys(), prod, &mut switched), LbrsStatus::Ok);
        for c in [a, b, prod, scaled] {
            lbrs_mul_free(c);
        }
    }
    assert_eq!(add_dec(switched), 42);
    unsafe { lbrs_add_free(switched) };
}

#[test]
fn zero_has_no_multiplicative_encryption() {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { lbrs_mul_encrypt_u64(keys(), 0, &mut c) }, LbrsStatus::ZeroPlaintext);
    assert!(c.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    let mut m = 0;
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(lbrs_add_decrypt_u64(keys(), ptr::null(), &mut m), LbrsStatus::NullPointer);
        assert_eq!(lbrs_add_encrypt_u64(ptr::null_mut(), 1, &mut c), LbrsStatus::NullPointer);
        assert_eq!(lbrs_add_encrypt_u64(keys(), 1, ptr::null_mut()), LbrsStatus::NullPointer);
        assert_eq!(lbrs_keys_generate(8, 1, &mut ptr::null_mut()), LbrsStatus::InvalidArgument);
        lbrs_add_free(ptr::null_mut());
        lbrs_mul_free(ptr::null_mut());
        lbrs_keys_free(ptr::null_mut());
        lbrs_string_free(ptr::null_mut());
    }
    assert!(last_error().contains("security_bits"));
    // a successful call clears the message
    let c = add_enc(1);
    assert!(lbrs_last_error_message().is_null());
    unsafe { lbrs_add_free(c) };
}

#[test]
fn public_key_json_has_hex_fields() {
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { lbrs_keys_public_json(keys(), &mut json) }, LbrsStatus::Ok);
    let json = take_string(json);
    assert!(json.starts_with("{\"n\":\"") && json.contains("\"g\":\"10\""), "{json}");
}

#[test]
fn hilbert_round_trip() {
    let (mut x, mut y, mut d) = (0u32, 0u32, 0u64);
    unsafe {
        assert_eq!(lbrs_hilbert_index_to_xy(1, 2, &mut x, &mut y), LbrsStatus::Ok);
        assert_eq!((x, y), (1, 1));
        for order in 1..=4 {
            for i in 0..(1u64 << (2 * order)) {
                assert_eq!(lbrs_hilbert_index_to_xy(order, i, &mut x, &mut y), LbrsStatus::Ok);
                assert_eq!(lbrs_hilbert_xy_to_index(order, x, y, &mut d), LbrsStatus::Ok);
                assert_eq!(d, i);
            }
        }
        assert_eq!(lbrs_hilbert_xy_to_index(2, 4, 0, &mut d), LbrsStatus::Domain);
        assert_eq!(lbrs_hilbert_index_to_xy(2, 16, &mut x, &mut y), LbrsStatus::Domain);
    }
}

const CM: [u64; 16] = [2, 1, 0, 1, 1, 3, 1, 0, 0, 1, 1, 0, 1, 0, 0, 2];
const PV: [u32; 4] = [3, 0, 5, 1];

#[test]
fn plain_prediction() {
    let mut scores = [0u64; 4];
    let status = unsafe { lbrs_predict_plain(4, CM.as_ptr(), PV.as_ptr(), 15, scores.as_mut_ptr()) };
    assert_eq!(status, LbrsStatus::Ok);
    assert_eq!(scores, [7, 8, 5, 5]);

    let too_high = [16u32, 0, 0, 0];
    let status = unsafe { lbrs_predict_plain(4, CM.as_ptr(), too_high.as_ptr(), 15, scores.as_mut_ptr()) };
    assert_eq!(status, LbrsStatus::Domain);
}

#[test]
fn local_recommendation_matches_plain_scores() {
    let mut items = [0usize; 4];
    let mut scores = [0u64; 4];
    let mut count = 0;
    let status = unsafe {
        lbrs_recommend_local(
            keys(),
            4,
            CM.as_ptr(),
            PV.as_ptr(),
            15,
            1,
            1,
            items.as_mut_ptr(),
            scores.as_mut_ptr(),
            items.len(),
            &mut count,
        )
    };
    assert_eq!(status, LbrsStatus::Ok, "{}", last_error());
    assert_eq!(count, 3);
    assert_eq!(&items[..3], &[0, 1, 2]);
    assert_eq!(&scores[..3], &[7, 8, 5]);

    let status = unsafe {
        lbrs_recommend_local(
            keys(),
            4,
            CM.as_ptr(),
            PV.as_ptr(),
            15,
            1,
            1,
            items.as_mut_ptr(),
            scores.as_mut_ptr(),
            2,
            &mut count,
        )
    };
    assert_eq!(status, LbrsStatus::Domain);
    assert_eq!(count, 3);
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lbrs.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exported: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() > 15);
    for name in exported {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for code in ["LBRS_STATUS_OK", "LBRS_STATUS_ZERO_PLAINTEXT", "LBRS_STATUS_PANIC"] {
        assert!(header.contains(code), "{code} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"lbrs.h\"\nint main(void) { LbrsKeys *k = 0; LbrsStatus s = lbrs_keys_generate(64, 1, &k); \
         lbrs_keys_free(k); return s == LBRS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}


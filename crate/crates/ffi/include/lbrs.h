#ifndef LBRS_H
#define LBRS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum LbrsStatus {
  LBRS_STATUS_OK = 0,
  LBRS_STATUS_NULL_POINTER = 1,
  LBRS_STATUS_INVALID_ARGUMENT = 2,
  // A value is outside the plaintext domain or does not fit the output.
  LBRS_STATUS_DOMAIN = 3,
  // 0 has no multiplicative encryption.
  LBRS_STATUS_ZERO_PLAINTEXT = 4,
  // A ciphertext component is not a unit mod N.
  LBRS_STATUS_DEGENERATE = 5,
  // Any other failure inside the library.
  LBRS_STATUS_CRYPTO = 6,
  // A panic was caught at the boundary.
  LBRS_STATUS_PANIC = 7,
} LbrsStatus;

// Additively homomorphic ciphertext.
typedef struct LbrsAddCiphertext LbrsAddCiphertext;

// Key material plus the random source used for encryption.
typedef struct LbrsKeys LbrsKeys;

// Multiplicatively homomorphic ciphertext.
typedef struct LbrsMulCiphertext LbrsMulCiphertext;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into the library from this thread.
const char *lbrs_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void lbrs_string_free(char *s);

// Generates keys with primes of `security_bits` bits each. The same seed
// always gives the same keys and the same encryption randomness.
//
// # Safety
// `out` must be a valid pointer.
enum LbrsStatus lbrs_keys_generate(uint32_t security_bits, uint64_t seed, struct LbrsKeys **out);

// # Safety
// `keys` must come from [`lbrs_keys_generate`] and not have been freed.
void lbrs_keys_free(struct LbrsKeys *keys);

// Public key as JSON `{"n", "g", "h"}` with lowercase hex values.
//
// # Safety
// `keys` and `out` must be valid. Free the result with [`lbrs_string_free`].
enum LbrsStatus lbrs_keys_public_json(const struct LbrsKeys *keys, char **out);

// Modulus N as lowercase hex.
//
// # Safety
// `keys` and `out` must be valid. Free the result with [`lbrs_string_free`].
enum LbrsStatus lbrs_keys_modulus_hex(const struct LbrsKeys *keys, char **out);

// # Safety
// `keys` and `out` must be valid.
enum LbrsStatus lbrs_add_encrypt_u64(struct LbrsKeys *keys,
                                     uint64_t m,
                                     struct LbrsAddCiphertext **out);

// # Safety
// `keys`, `m_hex` and `out` must be valid; `m_hex` NUL-terminated.
enum LbrsStatus lbrs_add_encrypt_hex(struct LbrsKeys *keys,
                                     const char *m_hex,
                                     struct LbrsAddCiphertext **out);

// Fails with `LBRS_STATUS_DOMAIN` when the plaintext exceeds 64 bits.
//
// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_add_decrypt_u64(const struct LbrsKeys *keys,
                                     const struct LbrsAddCiphertext *c,
                                     uint64_t *out);

// # Safety
// All pointers must be valid. Free the result with [`lbrs_string_free`].
enum LbrsStatus lbrs_add_decrypt_hex(const struct LbrsKeys *keys,
                                     const struct LbrsAddCiphertext *c,
                                     char **out);

// E+(a) · E+(b) = E+(a + b).
//
// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_add_add(const struct LbrsAddCiphertext *a,
                             const struct LbrsAddCiphertext *b,
                             struct LbrsAddCiphertext **out);

// E+(a − b mod N).
//
// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_add_sub(const struct LbrsAddCiphertext *a,
                             const struct LbrsAddCiphertext *b,
                             struct LbrsAddCiphertext **out);

// E+(k · a).
//
// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_add_mul_scalar(const struct LbrsAddCiphertext *a,
                                    uint64_t k,
                                    struct LbrsAddCiphertext **out);

// Ciphertext value as lowercase hex.
//
// # Safety
// All pointers must be valid. Free the result with [`lbrs_string_free`].
enum LbrsStatus lbrs_add_to_hex(const struct LbrsAddCiphertext *c, char **out);

// # Safety
// `c` must come from this library and not have been freed.
void lbrs_add_free(struct LbrsAddCiphertext *c);

// Fails with `LBRS_STATUS_ZERO_PLAINTEXT` for m = 0.
//
// # Safety
// `keys` and `out` must be valid.
enum LbrsStatus lbrs_mul_encrypt_u64(struct LbrsKeys *keys,
                                     uint64_t m,
                                     struct LbrsMulCiphertext **out);

// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_mul_decrypt_u64(const struct LbrsKeys *keys,
                                     const struct LbrsMulCiphertext *c,
                                     uint64_t *out);

// E*(a) · E*(b) = E*(a · b).
//
// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_mul_mul(const struct LbrsMulCiphertext *a,
                             const struct LbrsMulCiphertext *b,
                             struct LbrsMulCiphertext **out);

// E*(k · a) for 0 < k < N.
//
// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_mul_scalar(const struct LbrsMulCiphertext *a,
                                uint64_t k,
                                struct LbrsMulCiphertext **out);

// # Safety
// `c` must come from this library and not have been freed.
void lbrs_mul_free(struct LbrsMulCiphertext *c);

// Converts E*(m) into E+(m) by running both server roles in process.
//
// # Safety
// All pointers must be valid.
enum LbrsStatus lbrs_switch_mul_to_add(const struct LbrsKeys *keys,
                                       const struct LbrsMulCiphertext *c,
                                       struct LbrsAddCiphertext **out);

// # Safety
// `out` must be valid.
enum LbrsStatus lbrs_hilbert_xy_to_index(uint32_t order, uint32_t x, uint32_t y, uint64_t *out);

// # Safety
// `x` and `y` must be valid.
enum LbrsStatus lbrs_hilbert_index_to_xy(uint32_t order, uint64_t d, uint32_t *x, uint32_t *y);

// Plaintext scores: `scores[i] = Σ_j cm[i*size + j] · pv[j]`.
//
// # Safety
// `cm` holds size² entries, `pv` and `scores` hold size entries.
enum LbrsStatus lbrs_predict_plain(size_t size,
                                   const uint64_t *cm,
                                   const uint32_t *pv,
                                   uint32_t rating_max,
                                   uint64_t *scores);

// Runs a full encrypted session in process: the matrix is uploaded as a
// single contribution, then one recommendation is made for location
// index `loc`. Matching items and their scores are written to `items` and
// `scores` (each `capacity` long); `count` receives how many were found.
// Fails with `LBRS_STATUS_DOMAIN` when `capacity` is too small.
//
// # Safety
// `cm` holds size² entries, `pv` holds size entries, `items` and `scores`
// hold `capacity` entries, `count` is valid.
enum LbrsStatus lbrs_recommend_local(const struct LbrsKeys *keys,
                                     size_t size,
                                     const uint64_t *cm,
                                     const uint32_t *pv,
                                     uint32_t rating_max,
                                     uint64_t loc,
                                     uint64_t radius,
                                     size_t *items,
                                     uint64_t *scores,
                                     size_t capacity,
                                     size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LBRS_H */

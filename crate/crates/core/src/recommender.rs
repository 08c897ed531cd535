//! Item-based collaborative filtering over a co-occurrence matrix, in the
//! clear and over ciphertexts.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::she::{AddCiphertext, AddPublicKey};
use crate::switch::{pair_product_to_add, PairEncodedValue, SwitchContext};

pub const DEFAULT_RATING_MAX: u32 = 15;
pub const DEFAULT_RADIUS: u64 = 1;

/// User id → visited item indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InversionList {
    users: BTreeMap<u64, BTreeSet<usize>>,
}

impl InversionList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: u64, item: usize) {
        self.users.entry(user).or_default().insert(item);
    }

    pub fn extend(&mut self, user: u64, items: impl IntoIterator<Item = usize>) {
        let entry = self.users.entry(user).or_default();
        entry.extend(items);
    }

    pub fn users(&self) -> impl Iterator<Item = (u64, &BTreeSet<usize>)> {
        self.users.iter().map(|(u, items)| (*u, items))
    }

    pub fn items(&self, user: u64) -> Option<&BTreeSet<usize>> {
        self.users.get(&user)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// The list restricted to one user.
    pub fn single(&self, user: u64) -> InversionList {
        let mut out = InversionList::new();
        if let Some(items) = self.users.get(&user) {
            out.extend(user, items.iter().copied());
        }
        out
    }
}

/// Square item-item matrix of co-occurrence counts, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoMatrix {
    size: usize,
    entries: Vec<u64>,
}

impl CoMatrix {
    pub fn zeros(size: usize) -> Self {
        Self { size, entries: vec![0; size * size] }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Format("co-occurrence matrix must be square".into()));
        }
        Ok(Self { size, entries: rows.into_iter().flatten().collect() })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.size + j]
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn max_entry(&self) -> u64 {
        self.entries.iter().copied().max().unwrap_or(0)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Entrywise sum of two matrices of the same size.
    pub fn merged(&self, other: &CoMatrix) -> Result<CoMatrix> {
        if self.size != other.size {
            return Err(Error::Domain(format!("matrix sizes differ: {} vs {}", self.size, other.size)));
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Ok(CoMatrix { size: self.size, entries })
    }
}

/// Ratings r_uj of one user; 0 means "not visited".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceVector(Vec<u32>);

impl PreferenceVector {
    pub fn new(ratings: Vec<u32>, rating_max: u32) -> Result<Self> {
        if let Some(r) = ratings.iter().find(|&&r| r > rating_max) {
            return Err(Error::Domain(format!("rating {r} exceeds maximum {rating_max}")));
        }
        Ok(Self(ratings))
    }

    pub fn ratings(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Counts, for every user, each item once on the diagonal and every ordered
/// pair of distinct items once off the diagonal.
pub fn build_cm(lists: &InversionList, size: usize) -> Result<CoMatrix> {
    let mut cm = CoMatrix::zeros(size);
    for (user, items) in lists.users() {
        if let Some(&bad) = items.iter().find(|&&i| i >= size) {
            return Err(Error::Domain(format!("user {user} lists item {bad} outside [0, {size})")));
        }
        for &i in items {
            for &j in items {
                cm.entries[i * size + j] += 1;
            }
        }
    }
    Ok(cm)
}

/// P_i = Σ_j CM[i][j]·r_j for every item i.
pub fn predict_plain(cm: &CoMatrix, pv: &PreferenceVector) -> Result<Vec<u64>> {
    if pv.len() != cm.size() {
        return Err(Error::Domain(format!("preference vector has {} entries, matrix {}", pv.len(), cm.size())));
    }
    Ok((0..cm.size())
        .map(|i| (0..cm.size()).map(|j| cm.get(i, j) * u64::from(pv.0[j])).sum())
        .collect())
}

/// Rejects configurations where a score could wrap around mod N.
pub fn check_score_bound(size: usize, rating_max: u32, max_weight: u64, n: &BigUint) -> Result<()> {
    let bound = BigUint::from(size) * BigUint::from(rating_max) * BigUint::from(max_weight);
    if &bound >= n {
        return Err(Error::Domain(format!(
            "scores up to {bound} would wrap modulo N; use a larger modulus or smaller inputs"
        )));
    }
    Ok(())
}

/// Encrypted scores RL[i] = Σ_j CM[i][j]·PV[j], summed in the additive
/// domain. Any switch failure aborts the whole computation.
pub fn recommend_encrypted(
    cm: &[PairEncodedValue],
    pv: &[PairEncodedValue],
    ctx: &mut dyn SwitchContext,
) -> Result<Vec<AddCiphertext>> {
    let size = pv.len();
    if cm.len() != size * size {
        return Err(Error::Domain(format!("matrix has {} entries, expected {}", cm.len(), size * size)));
    }
    let zero = ctx.add_key().zero();
    let mut scores = Vec::with_capacity(size);
    for row in cm.chunks(size.max(1)).take(size) {
        let mut acc = zero.clone();
        for (w, r) in row.iter().zip(pv) {
            acc = acc.add(&pair_product_to_add(w, r, ctx)?)?;
        }
        scores.push(acc);
    }
    Ok(scores)
}

/// One row of the list sent back to the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterCandidate {
    pub item: usize,
    pub score: AddCiphertext,
    /// E+((item − loc) mod N)
    pub offset: AddCiphertext,
}

/// Attaches to every score the encrypted offset between its item index and
/// the client's location. Item encryptions use the public randomness r = 1.
pub fn filter_by_location(
    scores: &[AddCiphertext],
    loc: &AddCiphertext,
    pk_add: &AddPublicKey,
) -> Result<Vec<FilterCandidate>> {
    scores
        .iter()
        .enumerate()
        .map(|(item, score)| {
            let item_ct = pk_add.encrypt_with_randomness(&BigUint::from(item), &BigUint::from(1u32))?;
            Ok(FilterCandidate { item, score: score.clone(), offset: item_ct.sub(loc)? })
        })
        .collect()
}

/// Reads a residue mod N as a signed integer in (−N/2, N/2].
pub fn signed_residue(v: &BigUint, n: &BigUint) -> Option<i128> {
    if v > &(n >> 1) {
        (n - v).to_i128().map(|x| -x)
    } else {
        v.to_i128()
    }
}

/// A decrypted recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recommendation {
    pub item: usize,
    pub score: u64,
}

/// Client-side selection: keeps items whose decrypted offset lies within
/// `radius`. A radius of 0 keeps exactly the zero-offset entry.
pub fn select_nearby(
    decrypted: &[(usize, BigUint, BigUint)],
    radius: u64,
    n: &BigUint,
) -> Result<Vec<Recommendation>> {
    if radius as usize >= decrypted.len() && !decrypted.is_empty() {
        log::warn!("radius {radius} covers all {} items; no location filtering", decrypted.len());
    }
    let mut out = Vec::new();
    for (item, score, offset) in decrypted {
        let within = signed_residue(offset, n).is_some_and(|o| o.unsigned_abs() <= u128::from(radius));
        if within {
            let score = score
                .to_u64()
                .ok_or_else(|| Error::Domain(format!("score for item {item} exceeds u64")))?;
            out.push(Recommendation { item: *item, score });
        }
    }
    Ok(out)
}

/// The all-plaintext pipeline: scores, then items within `radius` of `loc`.
pub fn recommend_plain(cm: &CoMatrix, pv: &PreferenceVector, loc: usize, radius: u64) -> Result<Vec<Recommendation>> {
    let scores = predict_plain(cm, pv)?;
    Ok(scores
        .into_iter()
        .enumerate()
        .filter(|(item, _)| (*item as i128 - loc as i128).unsigned_abs() <= u128::from(radius))
        .map(|(item, score)| Recommendation { item, score })
        .collect())
}

/// new − old entrywise, mod N.
pub fn cm_delta(old: &CoMatrix, new: &CoMatrix, n: &BigUint) -> Result<Vec<BigUint>> {
    if old.size != new.size {
        return Err(Error::Domain(format!("matrix sizes differ: {} vs {}", old.size, new.size)));
    }
    Ok(old
        .entries
        .iter()
        .zip(&new.entries)
        .map(|(&o, &nw)| (BigUint::from(nw) + n - (BigUint::from(o) % n)) % n)
        .collect())
}

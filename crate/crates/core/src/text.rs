//! Tokenization and hashing shared by ranking, featurization and dedup.
//!
//! Every component that turns text into numbers goes through these helpers so
//! that features and digests agree bit-for-bit across runs and platforms:
//!
//! - unigrams: lowercase, drop ASCII punctuation, split on whitespace;
//! - hashing: 64-bit FNV-1a over the UTF-8 bytes of each unigram;
//! - embeddings: `hash % dim` bucket counts, then L2-normalized.

use std::collections::BTreeSet;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Lowercased, punctuation-stripped, whitespace-split tokens in text order.
pub fn unigrams(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Unique unigrams of `text`.
pub fn unigram_set(text: &str) -> BTreeSet<String> {
    unigrams(text).into_iter().collect()
}

/// Bucket-summed, L2-normalized hashed bag of tokens. An empty bag maps to
/// the zero vector.
pub fn hashed_embedding<I, S>(tokens: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = vec![0.0; dim];
    for tok in tokens {
        let bucket = (fnv1a64(tok.as_ref().as_bytes()) % dim as u64) as usize;
        out[bucket] += 1.0;
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut out {
            *v /= norm;
        }
    }
    out
}

/// Fraction of `part`'s unique tokens that also occur in `whole`; 0 when
/// `part` is empty.
pub fn coverage(part: &BTreeSet<String>, whole: &BTreeSet<String>) -> f64 {
    if part.is_empty() {
        return 0.0;
    }
    part.intersection(whole).count() as f64 / part.len() as f64
}

/// Intersection over union of two token sets; two empty sets are identical.
pub fn set_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Derives a child seed from a base seed and a list of labels.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut bytes = base.to_le_bytes().to_vec();
    for label in labels {
        bytes.push(0x1f);
        bytes.extend_from_slice(label.as_bytes());
    }
    fnv1a64(&bytes)
}

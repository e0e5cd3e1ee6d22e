//! Deterministic local embedder: signed feature hashing of character trigrams.

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::scalar::Scalar;

pub const DEFAULT_DIM: usize = 256;
pub const MIN_DIM: usize = 8;

/// Byte prepended to a trigram before hashing it for its sign.
pub const SIGN_SALT: u8 = 0x9E;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn signed_hash(trigram: &str) -> u64 {
    let mut salted = Vec::with_capacity(trigram.len() + 1);
    salted.push(SIGN_SALT);
    salted.extend_from_slice(trigram.as_bytes());
    fnv1a64(&salted)
}

/// Embed `text` into `dim` buckets.
///
/// The text is lowercased and padded as `^text$`; every character trigram
/// adds ±1 to bucket `fnv1a64(trigram) % dim`, the sign coming from the
/// lowest bit of the salted hash (0 → +1). The result is L2-normalized.
/// Empty text gives the zero vector.
///
/// # Panics
///
/// If `dim < 8`.
pub fn local_embed<S: Scalar>(text: &str, dim: usize) -> EmbeddingVector<S> {
    assert!(dim >= MIN_DIM, "local embedder needs dim >= {MIN_DIM}, got {dim}");
    let mut buckets = vec![0i64; dim];
    if !text.is_empty() {
        let padded: Vec<char> = std::iter::once('^')
            .chain(text.to_lowercase().chars())
            .chain(std::iter::once('$'))
            .collect();
        let mut trigram = String::with_capacity(12);
        for window in padded.windows(3) {
            trigram.clear();
            trigram.extend(window);
            let bucket = (fnv1a64(trigram.as_bytes()) % dim as u64) as usize;
            buckets[bucket] += if signed_hash(&trigram) & 1 == 0 { 1 } else { -1 };
        }
    }
    let components = buckets
        .into_iter()
        .map(|c| S::from_i64(c).expect("bucket count fits the scalar"))
        .collect();
    EmbeddingVector { components }.normalized()
}

/// [`local_embed`] behind the provider interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalEmbedder {
    dim: usize,
}

impl LocalEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_DIM {
            return Err(EmbedError::InvalidDim(dim));
        }
        Ok(LocalEmbedder { dim })
    }
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        LocalEmbedder { dim: DEFAULT_DIM }
    }
}

impl<S: Scalar> EmbeddingProvider<S> for LocalEmbedder {
    fn identity(&self) -> String {
        format!("local-trigram-fnv1a/dim={}", self.dim)
    }

    fn dim(&self) -> Result<usize, EmbedError> {
        Ok(self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbedError> {
        Ok(texts.iter().map(|t| local_embed(t, self.dim)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_text, EmbeddingProvider};

    fn cos(a: &EmbeddingVector<f64>, b: &EmbeddingVector<f64>) -> f64 {
        a.dot(b) / (a.norm() * b.norm())
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_zero() {
        let v: EmbeddingVector<f64> = local_embed("", 64);
        assert!(v.is_zero());
        assert_eq!(v.dim(), 64);
    }

    #[test]
    fn abc_uses_at_most_three_buckets() {
        // trigrams: ^ab, abc, bc$
        let v: EmbeddingVector<f64> = local_embed("abc", 256);
        let nonzero = v.as_slice().iter().filter(|x| **x != 0.0).count();
        assert!((1..=4).contains(&nonzero), "{nonzero}");
        let mut expected = vec![0i64; 256];
        for t in ["^ab", "abc", "bc$"] {
            let b = (fnv1a64(t.as_bytes()) % 256) as usize;
            let mut salted = vec![SIGN_SALT];
            salted.extend_from_slice(t.as_bytes());
            expected[b] += if fnv1a64(&salted) & 1 == 0 { 1 } else { -1 };
        }
        let n = (expected.iter().map(|x| x * x).sum::<i64>() as f64).sqrt();
        for (got, want) in v.as_slice().iter().zip(&expected) {
            assert_eq!(*got, *want as f64 / n);
        }
    }

    #[test]
    fn unit_norm_and_case_insensitive() {
        for t in ["gender", "Marital Status", "é", "x", "a much longer header label with spaces"] {
            let v: EmbeddingVector<f64> = local_embed(t, 256);
            assert!((v.norm() - 1.0).abs() < 1e-9, "{t}");
        }
        assert_eq!(local_embed::<f64>("GENDER", 128), local_embed::<f64>("gender", 128));
    }

    #[test]
    fn disjoint_trigrams_are_nearly_orthogonal() {
        let a = local_embed("aaaa", 256);
        let b = local_embed("zzzz", 256);
        assert!(cos(&a, &b).abs() < 0.3);
    }

    #[test]
    fn trailing_space_is_trimmed_by_embed_text() {
        let p = LocalEmbedder::default();
        let a = embed_text::<f64>("gender", &p).unwrap().vector;
        let b = embed_text::<f64>("gender ", &p).unwrap().vector;
        assert!((cos(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_dims() {
        assert!(LocalEmbedder::new(7).is_err());
        let p = LocalEmbedder::new(8).unwrap();
        assert_eq!(EmbeddingProvider::<f32>::dim(&p).unwrap(), 8);
    }

    #[test]
    fn f32_and_f64_agree() {
        let a: EmbeddingVector<f32> = local_embed("occupation", 256);
        let b: EmbeddingVector<f64> = local_embed("occupation", 256);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((f64::from(*x) - y).abs() < 1e-6);
        }
    }
}

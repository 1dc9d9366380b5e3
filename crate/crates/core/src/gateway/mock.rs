//! Offline, deterministic stand-ins for the chat and embedding models.
//!
//! Chat: the five most frequent caption tokens (ties lexicographic) are
//! rendered as `"Images of t1, t2, t3, t4, t5 in a shared setting."`.
//!
//! Embedding: a 256-bucket hashed bag of words over caption lemmas, using
//! FNV-1a 64 with the offset basis XORed with [`MOCK_HASH_SEED`], then
//! L2-normalized. Text without tokens maps to the basis vector `e0`.

use std::collections::HashMap;

use super::{BackendKind, ChatBackend, ChatRequest, EmbedBackend, EmbeddingVector, GatewayError};
use crate::dataset::text::TextPreprocessor;

pub const MOCK_DIM: usize = 256;
pub const MOCK_TOP_TOKENS: usize = 5;
pub const MOCK_HASH_SEED: u64 = 0x5eed;
pub const MOCK_CHAT_MODEL: &str = "mock-chat-v1";
pub const MOCK_EMBED_MODEL: &str = "mock-embed-v1";
pub const NO_CONTENT: &str = "Images with no dominant content.";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Bucket index for one normalized token.
pub fn mock_bucket(token: &str) -> usize {
    (fnv1a64(token.as_bytes(), MOCK_HASH_SEED) % MOCK_DIM as u64) as usize
}

pub fn mock_chat_rule(captions_block: &str) -> String {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for tok in TextPreprocessor::bundled().tokens(captions_block) {
        *counts.entry(tok).or_insert(0) += 1;
    }
    if counts.is_empty() {
        return NO_CONTENT.to_string();
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top: Vec<String> = ranked
        .into_iter()
        .take(MOCK_TOP_TOKENS)
        .map(|(t, _)| t)
        .collect();
    format!("Images of {} in a shared setting.", top.join(", "))
}

pub fn mock_embed_rule(text: &str) -> EmbeddingVector {
    let mut counts = vec![0.0; MOCK_DIM];
    for lemma in TextPreprocessor::bundled().lemmas(text) {
        counts[mock_bucket(&lemma)] += 1.0;
    }
    if counts.iter().all(|&c| c == 0.0) {
        counts[0] = 1.0;
    }
    EmbeddingVector::normalized(counts).expect("nonzero bucket counts")
}

/// Caption lines (`"- ..."`) of a rendered prompt, or the whole text when it
/// has none.
fn caption_block(user: &str) -> String {
    let lines: Vec<&str> = user.lines().filter_map(|l| l.strip_prefix("- ")).collect();
    if lines.is_empty() {
        user.to_string()
    } else {
        lines.join("\n")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockChat;

impl ChatBackend for MockChat {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        Ok(mock_chat_rule(&caption_block(&request.user)))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockEmbed;

impl EmbedBackend for MockEmbed {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn model(&self) -> &str {
        MOCK_EMBED_MODEL
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        Ok(mock_embed_rule(text).values().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
    }

    // Reference FNV-1a written out independently of `fnv1a64`.
    fn reference_bucket(token: &str) -> usize {
        let mut h: u64 = 14_695_981_039_346_656_037 ^ 0x5eed;
        for b in token.bytes() {
            h = (h ^ b as u64).wrapping_mul(1_099_511_628_211);
        }
        (h % 256) as usize
    }

    #[test]
    fn fnv_matches_published_vector() {
        // FNV-1a 64 of "a" with the standard basis.
        assert_eq!(fnv1a64(b"a", 0), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn chat_rule_examples() {
        assert_eq!(
            mock_chat_rule("crane crane truck"),
            "Images of crane, truck in a shared setting."
        );
        assert_eq!(mock_chat_rule(""), NO_CONTENT);
        assert_eq!(mock_chat_rule("the of and"), NO_CONTENT);
        assert_eq!(
            mock_chat_rule("wall beam wall beam"),
            "Images of beam, wall in a shared setting."
        );
        let five = mock_chat_rule("crane crane crane crane crane sky sky a b c d e f");
        assert!(five.starts_with("Images of crane, sky, "), "{five}");
        assert_eq!(five.matches(", ").count(), 4);
    }

    #[test]
    fn repeated_token_is_parallel() {
        let a = mock_embed_rule("crane crane");
        let b = mock_embed_rule("crane");
        assert!((dot(&a, &b) - 1.0).abs() < 1e-9);
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_buckets_are_orthogonal() {
        let left = ["crane", "truck"];
        let right = ["roof", "ladder"];
        let lb: Vec<usize> = left.iter().map(|t| reference_bucket(t)).collect();
        let rb: Vec<usize> = right.iter().map(|t| reference_bucket(t)).collect();
        assert!(
            lb.iter().all(|b| !rb.contains(b)),
            "fixture collides: {lb:?} {rb:?}"
        );
        for t in left.iter().chain(&right) {
            assert_eq!(mock_bucket(t), reference_bucket(t));
        }
        let c = dot(
            &mock_embed_rule("crane truck"),
            &mock_embed_rule("roof ladder"),
        );
        assert_eq!(c, 0.0);
    }

    #[test]
    fn one_vs_two_tokens_is_inverse_sqrt2() {
        assert_ne!(reference_bucket("crane"), reference_bucket("truck"));
        let c = dot(&mock_embed_rule("crane"), &mock_embed_rule("crane truck"));
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn no_tokens_maps_to_e0() {
        let v = mock_embed_rule("the of");
        assert_eq!(v.values()[0], 1.0);
        assert_eq!(v.values().iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn backend_uses_caption_lines_only() {
        let req = ChatRequest::new(
            "system",
            "Analyze captions analyze captions analyze\n\n- scaffolding pole\n- scaffolding plank\n\nBased on captions",
        );
        let out = MockChat.complete(&req).unwrap();
        assert_eq!(
            out,
            "Images of scaffolding, plank, pole in a shared setting."
        );
    }
}

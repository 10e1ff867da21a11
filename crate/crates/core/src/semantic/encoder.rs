use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::stream::Post;
use crate::text::{self, Token};

/// What the encoder saw when pooling a post.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeOutcome {
    Ok,
    /// Nothing left after hashtag removal; the output is the zero vector.
    EmptyText,
}

/// Trainable token-embedding table with mean pooling.
///
/// Stands in for a pre-trained transformer encoder: it maps a post to the
/// average of its word embeddings, hashtag tokens excluded so targets
/// never leak into the input. The vocabulary is fixed at construction;
/// unseen tokens share one UNK row.
#[derive(Debug, Clone)]
pub struct Encoder {
    vocab: HashMap<String, usize>,
    /// `(vocab.len() + 1) * dim`; the last row is UNK.
    table: Vec<f64>,
    dim: usize,
    pub frozen: bool,
}

impl Encoder {
    /// Builds an encoder whose vocabulary is every non-hashtag token of
    /// the corpus, with randomly initialized embeddings.
    pub fn from_corpus(posts: &[Post], dim: usize, seed: u64) -> Self {
        let mut vocab: HashMap<String, usize> = HashMap::new();
        let mut ordered: Vec<String> = Vec::new();
        for post in posts {
            for token in text::tokenize(&post.text) {
                if let Token::Word(w) = token {
                    if !vocab.contains_key(&w) {
                        vocab.insert(w.clone(), ordered.len());
                        ordered.push(w);
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = vocab.len() + 1;
        let scale = 1.0 / (dim as f64).sqrt();
        let table = (0..rows * dim)
            .map(|_| (rng.gen::<f64>() - 0.5) * scale)
            .collect();
        Encoder {
            vocab,
            table,
            dim,
            frozen: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    fn unk_row(&self) -> usize {
        self.vocab.len()
    }

    /// Row index for each input token of the post: word tokens only,
    /// hashtags dropped, unknowns mapped to UNK.
    pub fn input_rows(&self, post: &Post) -> Vec<usize> {
        text::tokenize(&post.text)
            .into_iter()
            .filter_map(|t| match t {
                Token::Word(w) => Some(self.vocab.get(&w).copied().unwrap_or(self.unk_row())),
                Token::Tag(_) => None,
            })
            .collect()
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.table[idx * self.dim..(idx + 1) * self.dim]
    }

    fn row_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.table[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Mean of the token embeddings over the post's text, hashtags
    /// excluded. Empty input yields the zero vector, flagged.
    pub fn encode(&self, post: &Post) -> (Vec<f64>, EncodeOutcome) {
        let rows = self.input_rows(post);
        let mut out = vec![0.0; self.dim];
        if rows.is_empty() {
            return (out, EncodeOutcome::EmptyText);
        }
        for &r in &rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        (out, EncodeOutcome::Ok)
    }

    /// Applies a gradient step on the pooled output: each contributing
    /// row moves by `grad * scale / n_tokens`, weighted by how often the
    /// row occurs. Panics if the encoder is frozen.
    pub fn apply_pooled_gradient(&mut self, rows: &[usize], grad: &[f64], scale: f64) {
        assert!(!self.frozen, "frozen encoder cannot be updated");
        if rows.is_empty() {
            return;
        }
        let per_token = scale / rows.len() as f64;
        for &r in rows {
            for (w, g) in self.row_mut(r).iter_mut().zip(grad) {
                *w += per_token * g;
            }
        }
    }

    /// Stable content digest, used to verify freeze contracts.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for x in &self.table {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    /// Raw parts for snapshotting: sorted (token, row) pairs plus table.
    pub fn raw(&self) -> (Vec<(String, usize)>, &[f64], usize) {
        let mut pairs: Vec<(String, usize)> = self
            .vocab
            .iter()
            .map(|(t, &i)| (t.clone(), i))
            .collect();
        pairs.sort();
        (pairs, &self.table, self.dim)
    }

    pub fn from_raw(pairs: Vec<(String, usize)>, table: Vec<f64>, dim: usize) -> Self {
        let vocab: HashMap<String, usize> = pairs.into_iter().collect();
        Encoder {
            vocab,
            table,
            dim,
            frozen: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn post(text: &str) -> Post {
        Post {
            id: "x".into(),
            timestamp: Utc.with_ymd_and_hms(2020, 8, 1, 0, 0, 0).unwrap(),
            text: text.into(),
            hashtags: crate::stream::extract_hashtags(text),
        }
    }

    fn corpus() -> Vec<Post> {
        vec![post("alpha beta gamma"), post("delta alpha #tag")]
    }

    #[test]
    fn single_known_token_returns_its_row() {
        let enc = Encoder::from_corpus(&corpus(), 8, 1);
        let (v, outcome) = enc.encode(&post("alpha"));
        assert_eq!(outcome, EncodeOutcome::Ok);
        let rows = enc.input_rows(&post("alpha"));
        assert_eq!(v, enc.row(rows[0]).to_vec());
    }

    #[test]
    fn pooling_is_order_invariant() {
        let enc = Encoder::from_corpus(&corpus(), 8, 1);
        let (a, _) = enc.encode(&post("alpha beta gamma"));
        let (b, _) = enc.encode(&post("gamma alpha beta"));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn two_tokens_give_midpoint() {
        let enc = Encoder::from_corpus(&corpus(), 8, 1);
        let (v, _) = enc.encode(&post("alpha beta"));
        let rows = enc.input_rows(&post("alpha beta"));
        for d in 0..8 {
            let mid = (enc.row(rows[0])[d] + enc.row(rows[1])[d]) / 2.0;
            assert!((v[d] - mid).abs() < 1e-15);
        }
    }

    #[test]
    fn hashtags_never_reach_the_input() {
        let enc = Encoder::from_corpus(&corpus(), 8, 1);
        let with_tag = post("alpha beta #tag");
        let without = post("alpha beta");
        assert_eq!(enc.encode(&with_tag).0, enc.encode(&without).0);
        // Only-hashtag text is empty input.
        let (v, outcome) = enc.encode(&post("#tag #another"));
        assert_eq!(outcome, EncodeOutcome::EmptyText);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unknown_tokens_share_the_unk_row() {
        let enc = Encoder::from_corpus(&corpus(), 8, 1);
        let (a, _) = enc.encode(&post("zzzunknown"));
        let (b, _) = enc.encode(&post("anotherunknown"));
        assert_eq!(a, b);
        assert_eq!(a, enc.row(enc.unk_row()).to_vec());
    }

    #[test]
    fn digest_tracks_content() {
        let enc = Encoder::from_corpus(&corpus(), 8, 1);
        let mut other = enc.clone();
        assert_eq!(enc.digest(), other.digest());
        other.frozen = false;
        other.apply_pooled_gradient(&[0], &vec![1.0; 8], 0.1);
        assert_ne!(enc.digest(), other.digest());
    }
}

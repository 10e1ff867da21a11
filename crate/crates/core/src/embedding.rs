//! Hashtag/word embedding space trained with CBOW word2vec and negative
//! sampling. Hashtags stay atomic tokens, so they land in the same latent
//! space as the surrounding words and cluster by topic; recommendation is
//! a cosine k-NN over the hashtag rows of this space.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::error::{CoreError, Result};
use crate::stream::Post;
use crate::text;

/// Word2vec training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Word2VecParams {
    /// Embedding dimensionality.
    pub dim: usize,
    /// Context window radius in tokens.
    pub window: usize,
    /// Negative samples per center word.
    pub negative: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Tokens seen fewer times than this get no vector.
    pub min_count: u64,
}

impl Default for Word2VecParams {
    fn default() -> Self {
        Word2VecParams {
            dim: 64,
            window: 5,
            negative: 5,
            epochs: 12,
            learning_rate: 0.05,
            min_count: 2,
        }
    }
}

/// Token vectors plus the mask telling which tokens are hashtags.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    hashtag_mask: Vec<bool>,
    counts: Vec<u64>,
    params: Word2VecParams,
}

impl EmbeddingSpace {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn params(&self) -> &Word2VecParams {
        &self.params
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn token_count(&self, token: &str) -> Option<u64> {
        self.index.get(token).map(|&i| self.counts[i])
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn is_hashtag(&self, token: &str) -> bool {
        self.index
            .get(token)
            .map_or(false, |&i| self.hashtag_mask[i])
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        let &i = self.index.get(token)?;
        Some(&self.vectors[i * self.params.dim..(i + 1) * self.params.dim])
    }

    /// Hashtag tokens in vocabulary order.
    pub fn hashtags(&self) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .zip(&self.hashtag_mask)
            .filter(|(_, &m)| m)
            .map(|(t, _)| t.as_str())
    }

    pub fn hashtag_count(&self) -> usize {
        self.hashtag_mask.iter().filter(|&&m| m).count()
    }

    /// Raw parts for snapshotting.
    pub fn raw(&self) -> (&[String], &[f64], &[bool], &[u64]) {
        (&self.tokens, &self.vectors, &self.hashtag_mask, &self.counts)
    }

    /// Rebuilds a space from snapshot parts.
    pub fn from_raw(
        tokens: Vec<String>,
        vectors: Vec<f64>,
        hashtag_mask: Vec<bool>,
        counts: Vec<u64>,
        params: Word2VecParams,
    ) -> Result<Self> {
        if vectors.len() != tokens.len() * params.dim
            || hashtag_mask.len() != tokens.len()
            || counts.len() != tokens.len()
        {
            return Err(CoreError::Snapshot(
                "embedding space dimensions do not line up".into(),
            ));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(EmbeddingSpace {
            tokens,
            index,
            vectors,
            hashtag_mask,
            counts,
            params,
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero if either vector has no direction.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// The `m` hashtags most cosine-similar to `v`, descending, ties broken
/// lexicographically. Only hashtag tokens are eligible.
pub fn knn_hashtags(
    space: &EmbeddingSpace,
    v: &[f64],
    m: usize,
) -> Result<Vec<(String, f64)>> {
    assert!(m >= 1, "m must be >= 1");
    if norm(v) == 0.0 {
        return Err(CoreError::ZeroVector);
    }
    let mut scored: Vec<(String, f64)> = space
        .hashtags()
        .map(|h| {
            let sim = cosine(v, space.vector(h).expect("hashtag token has a vector"));
            (h.to_string(), sim)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("similarities are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(m);
    Ok(scored)
}

/// Supervised pair: a post and the mean embedding of its in-vocabulary
/// hashtags.
#[derive(Debug)]
pub struct TargetPair<'a> {
    pub post: &'a Post,
    pub target: Vec<f64>,
}

/// Report of target construction, for diagnostics.
#[derive(Debug, Default)]
pub struct TargetStats {
    /// Posts skipped because no hashtag was in vocabulary.
    pub skipped_oov: usize,
    /// Posts dropped because their hashtag vectors cancelled to ~zero.
    pub dropped_degenerate: usize,
}

const DEGENERATE_NORM: f64 = 1e-9;

/// For each post with at least one in-vocabulary hashtag, the target is
/// the arithmetic mean of its hashtags' vectors. Posts with no usable
/// hashtag are omitted; near-zero means are dropped as degenerate.
pub fn compute_targets<'a>(
    space: &EmbeddingSpace,
    posts: impl IntoIterator<Item = &'a Post>,
) -> (Vec<TargetPair<'a>>, TargetStats) {
    let mut pairs = Vec::new();
    let mut stats = TargetStats::default();
    for post in posts {
        let vectors: Vec<&[f64]> = post
            .hashtags
            .iter()
            .filter_map(|h| space.vector(h))
            .collect();
        if vectors.is_empty() {
            stats.skipped_oov += 1;
            continue;
        }
        let mut target = vec![0.0; space.dim()];
        for v in &vectors {
            for (t, x) in target.iter_mut().zip(*v) {
                *t += x;
            }
        }
        let n = vectors.len() as f64;
        for t in &mut target {
            *t /= n;
        }
        if norm(&target) < DEGENERATE_NORM {
            stats.dropped_degenerate += 1;
            continue;
        }
        pairs.push(TargetPair { post, target });
    }
    (pairs, stats)
}

/// One training sentence: token indices into the vocabulary.
struct Sentence(Vec<usize>);

/// Tokens of a post as fed to word2vec: text tokens in order, hashtags
/// kept atomic, plus any record-level tags that never occur in the text
/// appended at the end so they still receive co-occurrence context.
pub fn training_tokens(post: &Post) -> Vec<(String, bool)> {
    let mut out: Vec<(String, bool)> = text::tokenize(&post.text)
        .into_iter()
        .map(|t| (t.text().to_string(), t.is_tag()))
        .collect();
    for tag in &post.hashtags {
        let in_text = out.iter().any(|(s, is_tag)| *is_tag && s == tag);
        if !in_text {
            out.push((tag.clone(), true));
        }
    }
    out
}

/// Trains a CBOW word2vec model with negative sampling over the posts,
/// starting every vector from random initialization.
pub fn train_word2vec(
    posts: &[Post],
    params: &Word2VecParams,
    seed: u64,
) -> Result<EmbeddingSpace> {
    train_word2vec_impl(posts, params, seed, None)
}

/// Retrains the embedding space over a new window, keeping the previous
/// vector of every token that survives into the new vocabulary. Known
/// hashtags shift smoothly instead of landing in a fresh random
/// geometry, and new hashtags train into the established one.
pub fn update_word2vec(
    previous: &EmbeddingSpace,
    posts: &[Post],
    params: &Word2VecParams,
    seed: u64,
) -> Result<EmbeddingSpace> {
    train_word2vec_impl(posts, params, seed, Some(previous))
}

fn train_word2vec_impl(
    posts: &[Post],
    params: &Word2VecParams,
    seed: u64,
    warm_start: Option<&EmbeddingSpace>,
) -> Result<EmbeddingSpace> {
    if posts.is_empty() {
        return Err(CoreError::Training("empty training corpus".into()));
    }
    if params.dim == 0 || params.window == 0 {
        return Err(CoreError::Config("dim and window must be >= 1".into()));
    }
    if let Some(prev) = warm_start {
        if prev.dim() != params.dim {
            return Err(CoreError::Config(format!(
                "cannot warm-start dim {} from a dim-{} space",
                params.dim,
                prev.dim()
            )));
        }
    }

    // Tokenize and count.
    let mut token_counts: HashMap<String, u64> = HashMap::new();
    let mut tag_seen: HashMap<String, bool> = HashMap::new();
    let mut raw_sentences: Vec<Vec<(String, bool)>> = Vec::with_capacity(posts.len());
    let mut any_hashtag = false;
    for post in posts {
        let tokens = training_tokens(post);
        for (tok, is_tag) in &tokens {
            *token_counts.entry(tok.clone()).or_insert(0) += 1;
            let e = tag_seen.entry(tok.clone()).or_insert(false);
            *e = *e || *is_tag;
            any_hashtag = any_hashtag || *is_tag;
        }
        raw_sentences.push(tokens);
    }
    if !any_hashtag {
        return Err(CoreError::Training(
            "corpus contains no hashtag occurrence".into(),
        ));
    }

    // Vocabulary: count desc, token asc; min_count applies to everything.
    let mut vocab: Vec<(String, u64)> = token_counts
        .into_iter()
        .filter(|(_, c)| *c >= params.min_count)
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if vocab.is_empty() {
        return Err(CoreError::Training(
            "no token reaches min_count; corpus too small".into(),
        ));
    }
    let tokens: Vec<String> = vocab.iter().map(|(t, _)| t.clone()).collect();
    let counts: Vec<u64> = vocab.iter().map(|(_, c)| *c).collect();
    let index: HashMap<String, usize> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let hashtag_mask: Vec<bool> = tokens
        .iter()
        .map(|t| tag_seen.get(t).copied().unwrap_or(false))
        .collect();

    let sentences: Vec<Sentence> = raw_sentences
        .iter()
        .map(|toks| {
            Sentence(
                toks.iter()
                    .filter_map(|(t, _)| index.get(t).copied())
                    .collect(),
            )
        })
        .filter(|s| s.0.len() >= 2)
        .collect();

    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input: Vec<f64> = (0..tokens.len() * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    if let Some(prev) = warm_start {
        for (i, token) in tokens.iter().enumerate() {
            if let Some(v) = prev.vector(token) {
                input[i * dim..(i + 1) * dim].copy_from_slice(v);
            }
        }
    }
    let mut output: Vec<f64> = vec![0.0; tokens.len() * dim];

    // Negative-sampling distribution: unigram^0.75.
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut hidden = vec![0.0; dim];
    let mut hidden_err = vec![0.0; dim];

    for epoch in 0..params.epochs {
        let alpha = (params.learning_rate
            * (1.0 - epoch as f64 / params.epochs as f64))
            .max(params.learning_rate * 1e-2);
        order.shuffle(&mut rng);
        for &si in &order {
            let sent = &sentences[si].0;
            for center in 0..sent.len() {
                let lo = center.saturating_sub(params.window);
                let hi = (center + params.window).min(sent.len() - 1);
                let context: Vec<usize> =
                    (lo..=hi).filter(|&p| p != center).map(|p| sent[p]).collect();
                if context.is_empty() {
                    continue;
                }
                hidden.iter_mut().for_each(|x| *x = 0.0);
                for &w in &context {
                    for (h, v) in hidden.iter_mut().zip(&input[w * dim..(w + 1) * dim]) {
                        *h += v;
                    }
                }
                let inv = 1.0 / context.len() as f64;
                hidden.iter_mut().for_each(|x| *x *= inv);
                hidden_err.iter_mut().for_each(|x| *x = 0.0);

                let target = sent[center];
                for k in 0..=params.negative {
                    let (word, label) = if k == 0 {
                        (target, 1.0)
                    } else {
                        let u: f64 = rng.gen();
                        let w = cumulative.partition_point(|&c| c < u).min(tokens.len() - 1);
                        // Small-vocabulary corpora draw co-occurring
                        // tokens as negatives often enough to swamp the
                        // positive signal; skip such false negatives.
                        if w == target || context.contains(&w) {
                            continue;
                        }
                        (w, 0.0)
                    };
                    let row = &output[word * dim..(word + 1) * dim];
                    let f = dot(&hidden, row);
                    let g = (label - sigmoid(f)) * alpha;
                    for (e, o) in hidden_err.iter_mut().zip(row) {
                        *e += g * o;
                    }
                    let row = &mut output[word * dim..(word + 1) * dim];
                    for (o, h) in row.iter_mut().zip(&hidden) {
                        *o += g * h;
                    }
                }
                for &w in &context {
                    let row = &mut input[w * dim..(w + 1) * dim];
                    for (iv, e) in row.iter_mut().zip(&hidden_err) {
                        *iv += e;
                    }
                }
            }
        }
    }

    let space = EmbeddingSpace {
        tokens,
        index,
        vectors: input,
        hashtag_mask,
        counts,
        params: params.clone(),
    };
    for h in space.hashtags() {
        let n = norm(space.vector(h).unwrap());
        if !n.is_finite() || n == 0.0 {
            return Err(CoreError::Training(format!(
                "hashtag `{h}` trained to a non-finite or zero vector"
            )));
        }
    }
    Ok(space)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

//! The semantic mapping model: a mean-pooling token encoder stacked with
//! an MLP mapper that translates post text into the hashtag embedding
//! space. Training runs in two phases: transfer learning (mapper only,
//! encoder frozen) and fine-tuning (end-to-end at a low learning rate).

mod encoder;
mod mapper;
mod snapshot;
mod train;

pub use encoder::{EncodeOutcome, Encoder};
pub use mapper::Mapper;
pub use snapshot::{load_snapshot, save_snapshot};
pub use train::{fine_tune_mapper_only, fine_tuning, transfer_learning, TrainingReport};

use crate::embedding::{knn_hashtags, EmbeddingSpace};
use crate::error::{CoreError, Result};
use crate::stream::Post;

/// Encoder + mapper stack. `version` counts completed training phases.
#[derive(Debug, Clone)]
pub struct SemanticMapper {
    pub encoder: Encoder,
    pub mapper: Mapper,
    pub version: u64,
}

impl SemanticMapper {
    pub fn stack(encoder: Encoder, mapper: Mapper) -> Result<Self> {
        if encoder.dim() != mapper.input_dim() {
            return Err(CoreError::Config(format!(
                "encoder dim {} does not match mapper input dim {}",
                encoder.dim(),
                mapper.input_dim()
            )));
        }
        Ok(SemanticMapper {
            encoder,
            mapper,
            version: 0,
        })
    }

    /// Maps a post into the hashtag embedding space.
    pub fn translate(&self, post: &Post) -> (Vec<f64>, EncodeOutcome) {
        let (sentence, outcome) = self.encoder.encode(post);
        (self.mapper.forward(&sentence), outcome)
    }
}

/// The full recommendation model: hashtag space plus semantic mapper.
/// `generation` counts completed builds (1 = bootstrap).
#[derive(Debug, Clone)]
pub struct HashetModel {
    pub space: EmbeddingSpace,
    pub sm: SemanticMapper,
    pub generation: u64,
}

impl HashetModel {
    pub fn new(space: EmbeddingSpace, sm: SemanticMapper, generation: u64) -> Result<Self> {
        if sm.mapper.output_dim() != space.dim() {
            return Err(CoreError::Config(format!(
                "mapper output dim {} does not match embedding dim {}",
                sm.mapper.output_dim(),
                space.dim()
            )));
        }
        Ok(HashetModel {
            space,
            sm,
            generation,
        })
    }
}

/// Recommends up to `k + eta` hashtags for a post, best first.
pub fn recommend(
    model: &HashetModel,
    post: &Post,
    k: usize,
    eta: usize,
) -> Result<Vec<(String, f64)>> {
    assert!(k >= 1, "k must be >= 1");
    let (v, outcome) = model.sm.translate(post);
    if outcome == EncodeOutcome::EmptyText {
        return Err(CoreError::Config(format!(
            "post `{}` has no text left after hashtag removal",
            post.id
        )));
    }
    knn_hashtags(&model.space, &v, k + eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{train_word2vec, Word2VecParams};
    use chrono::{TimeZone, Utc};

    pub(crate) fn post(id: usize, text: &str) -> Post {
        Post {
            id: id.to_string(),
            timestamp: Utc.with_ymd_and_hms(2020, 8, 1, 0, 0, 0).unwrap()
                + chrono::Duration::seconds(id as i64),
            text: text.to_string(),
            hashtags: crate::stream::extract_hashtags(text),
        }
    }

    fn toy_corpus() -> Vec<Post> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let topics = [
            (
                ["mask", "virus", "health", "doctor"],
                ["t_a1", "t_a2", "t_a3"],
            ),
            (
                ["vote", "ballot", "debate", "senate"],
                ["t_b1", "t_b2", "t_b3"],
            ),
        ];
        (0..300)
            .map(|i| {
                let (words, tags) = &topics[i % 2];
                let mut text = String::new();
                for _ in 0..8 {
                    text.push_str(words[rng.gen_range(0..words.len())]);
                    text.push(' ');
                }
                text.push('#');
                text.push_str(tags[rng.gen_range(0..tags.len())]);
                post(i, text.trim())
            })
            .collect()
    }

    #[test]
    fn recommend_prefix_property_and_topic_locality() {
        let posts = toy_corpus();
        let space = train_word2vec(&posts, &Word2VecParams::default(), 3).unwrap();
        let encoder = Encoder::from_corpus(&posts, 32, 11);
        let mapper = Mapper::new(&[32, 2 * space.dim(), space.dim()], 12);
        let mut sm = SemanticMapper::stack(encoder, mapper).unwrap();

        let (pairs, _) = crate::embedding::compute_targets(&space, &posts);
        transfer_learning(&mut sm, &pairs, 40, 0.05).unwrap();
        fine_tuning(&mut sm, &pairs, 10, 0.005, 0.05).unwrap();
        let model = HashetModel::new(space, sm, 1).unwrap();

        let probe = post(999, "mask health doctor virus mask");
        let five = recommend(&model, &probe, 5, 0).unwrap();
        let seven = recommend(&model, &probe, 5, 2).unwrap();
        assert!(five.len() <= 5);
        assert_eq!(
            five.iter().map(|(h, _)| h).collect::<Vec<_>>(),
            seven.iter().take(five.len()).map(|(h, _)| h).collect::<Vec<_>>()
        );

        let three = recommend(&model, &probe, 3, 0).unwrap();
        for (tag, _) in &three {
            assert!(
                tag.starts_with("t_a"),
                "topic-A probe pulled {tag}; got {three:?}"
            );
        }
    }

    #[test]
    fn recommend_rejects_text_empty_after_hashtag_removal() {
        let posts = toy_corpus();
        let space = train_word2vec(&posts, &Word2VecParams::default(), 3).unwrap();
        let encoder = Encoder::from_corpus(&posts, 32, 11);
        let mapper = Mapper::new(&[32, 2 * space.dim(), space.dim()], 12);
        let sm = SemanticMapper::stack(encoder, mapper).unwrap();
        let model = HashetModel::new(space, sm, 1).unwrap();

        let empty = post(1000, "#t_a1 #t_b1");
        assert!(recommend(&model, &empty, 5, 0).is_err());
    }

    #[test]
    fn stack_checks_dimensions() {
        let posts = toy_corpus();
        let encoder = Encoder::from_corpus(&posts, 32, 11);
        let mapper = Mapper::new(&[48, 64, 64], 12);
        assert!(SemanticMapper::stack(encoder, mapper).is_err());
    }
}

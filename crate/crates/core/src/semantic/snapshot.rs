use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::embedding::{EmbeddingSpace, Word2VecParams};
use crate::error::{CoreError, Result};
use crate::semantic::mapper::Layer;
use crate::semantic::{Encoder, HashetModel, Mapper, SemanticMapper};

/// Snapshot metadata, one JSON file per model directory.
#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    generation: u64,
    sm_version: u64,
    space_dim: usize,
    space_tokens: usize,
    w2v: W2vMeta,
    encoder_dim: usize,
    encoder_vocab: usize,
    mapper_dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct W2vMeta {
    dim: usize,
    window: usize,
    negative: usize,
    epochs: usize,
    learning_rate: f64,
    min_count: u64,
}

fn write_matrix(path: &Path, data: &[f64]) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    for x in data {
        file.write_all(&x.to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

fn read_matrix(path: &Path, expect_len: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != expect_len * 8 {
        return Err(CoreError::Snapshot(format!(
            "{}: expected {} f64 values, found {} bytes",
            path.display(),
            expect_len,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes a model to a directory: metadata plus flat matrices. Loading
/// the directory back reproduces recommendations exactly.
pub fn save_snapshot(model: &HashetModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let (tokens, vectors, mask, counts) = model.space.raw();
    let (enc_vocab, enc_table, enc_dim) = model.sm.encoder.raw();
    let params = model.space.params();

    let meta = Meta {
        generation: model.generation,
        sm_version: model.sm.version,
        space_dim: params.dim,
        space_tokens: tokens.len(),
        w2v: W2vMeta {
            dim: params.dim,
            window: params.window,
            negative: params.negative,
            epochs: params.epochs,
            learning_rate: params.learning_rate,
            min_count: params.min_count,
        },
        encoder_dim: enc_dim,
        encoder_vocab: enc_vocab.len(),
        mapper_dims: model.sm.mapper.dims(),
    };
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;

    let mut vocab_file = std::io::BufWriter::new(fs::File::create(dir.join("space.vocab"))?);
    for ((token, &is_tag), &count) in tokens.iter().zip(mask).zip(counts) {
        writeln!(vocab_file, "{token}\t{count}\t{}", u8::from(is_tag))?;
    }
    vocab_file.flush()?;
    write_matrix(&dir.join("space.vectors"), vectors)?;

    let mut enc_file = std::io::BufWriter::new(fs::File::create(dir.join("encoder.vocab"))?);
    for (token, row) in &enc_vocab {
        writeln!(enc_file, "{token}\t{row}")?;
    }
    enc_file.flush()?;
    write_matrix(&dir.join("encoder.table"), enc_table)?;

    let mapper_flat: Vec<f64> = model
        .sm
        .mapper
        .layers()
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect();
    write_matrix(&dir.join("mapper.layers"), &mapper_flat)?;
    Ok(())
}

/// Loads a model snapshot written by [`save_snapshot`].
pub fn load_snapshot(dir: impl AsRef<Path>) -> Result<HashetModel> {
    let dir = dir.as_ref();
    let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| CoreError::Snapshot(format!("meta.json: {e}")))?;

    let mut tokens = Vec::with_capacity(meta.space_tokens);
    let mut counts = Vec::with_capacity(meta.space_tokens);
    let mut mask = Vec::with_capacity(meta.space_tokens);
    for (lineno, line) in fs::read_to_string(dir.join("space.vocab"))?.lines().enumerate() {
        let mut parts = line.split('\t');
        let (token, count, is_tag) = (parts.next(), parts.next(), parts.next());
        match (token, count, is_tag) {
            (Some(t), Some(c), Some(m)) => {
                tokens.push(t.to_string());
                counts.push(c.parse::<u64>().map_err(|e| {
                    CoreError::Snapshot(format!("space.vocab line {}: {e}", lineno + 1))
                })?);
                mask.push(m == "1");
            }
            _ => {
                return Err(CoreError::Snapshot(format!(
                    "space.vocab line {}: expected 3 tab-separated fields",
                    lineno + 1
                )))
            }
        }
    }
    if tokens.len() != meta.space_tokens {
        return Err(CoreError::Snapshot(format!(
            "space.vocab holds {} tokens, metadata says {}",
            tokens.len(),
            meta.space_tokens
        )));
    }
    let vectors = read_matrix(&dir.join("space.vectors"), tokens.len() * meta.space_dim)?;
    let params = Word2VecParams {
        dim: meta.w2v.dim,
        window: meta.w2v.window,
        negative: meta.w2v.negative,
        epochs: meta.w2v.epochs,
        learning_rate: meta.w2v.learning_rate,
        min_count: meta.w2v.min_count,
    };
    let space = EmbeddingSpace::from_raw(tokens, vectors, mask, counts, params)?;

    let mut enc_vocab = Vec::with_capacity(meta.encoder_vocab);
    for (lineno, line) in fs::read_to_string(dir.join("encoder.vocab"))?.lines().enumerate() {
        let mut parts = line.split('\t');
        match (parts.next(), parts.next()) {
            (Some(t), Some(r)) => enc_vocab.push((
                t.to_string(),
                r.parse::<usize>().map_err(|e| {
                    CoreError::Snapshot(format!("encoder.vocab line {}: {e}", lineno + 1))
                })?,
            )),
            _ => {
                return Err(CoreError::Snapshot(format!(
                    "encoder.vocab line {}: expected 2 tab-separated fields",
                    lineno + 1
                )))
            }
        }
    }
    let enc_table = read_matrix(
        &dir.join("encoder.table"),
        (enc_vocab.len() + 1) * meta.encoder_dim,
    )?;
    let encoder = Encoder::from_raw(enc_vocab, enc_table, meta.encoder_dim);

    let mapper_len: usize = meta
        .mapper_dims
        .windows(2)
        .map(|p| p[0] * p[1] + p[1])
        .sum();
    let flat = read_matrix(&dir.join("mapper.layers"), mapper_len)?;
    let mut layers = Vec::new();
    let mut offset = 0;
    for pair in meta.mapper_dims.windows(2) {
        let (in_dim, out_dim) = (pair[0], pair[1]);
        let weights = flat[offset..offset + in_dim * out_dim].to_vec();
        offset += in_dim * out_dim;
        let biases = flat[offset..offset + out_dim].to_vec();
        offset += out_dim;
        layers.push(Layer {
            weights,
            biases,
            in_dim,
            out_dim,
        });
    }
    let mapper = Mapper::from_layers(layers);

    let mut sm = SemanticMapper::stack(encoder, mapper)?;
    sm.version = meta.sm_version;
    HashetModel::new(space, sm, meta.generation)
}

//! Query embeddings for seed-set expansion.
//!
//! Word vectors are trained with skip-gram and negative sampling; a query
//! is represented by the mean of its token vectors. Vectors trained
//! elsewhere can be loaded from a plain text file instead.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl EmbeddingModel {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("embedding dimension must be positive".into()));
        }
        let mut tokens = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        for (token, v) in entries {
            if v.len() != dim {
                return Err(Error::Domain(format!(
                    "vector for `{token}` has dimension {} (expected {dim})",
                    v.len()
                )));
            }
            if index.insert(token.clone(), tokens.len()).is_some() {
                return Err(Error::Domain(format!("duplicate token `{token}`")));
            }
            tokens.push(token);
            vectors.extend(v);
        }
        Ok(EmbeddingModel {
            dim,
            tokens,
            index,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token vector; `None` when out of vocabulary.
    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Parses `<vocab_size> <d_emb>` followed by `token v1 ... v_d` lines.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Config(format!("{source}: empty embeddings file")))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (size, dim) = match head.as_slice() {
            [a, b] => match (parse_usize(a), parse_usize(b)) {
                (Some(a), Some(b)) if b > 0 => (a, b),
                _ => return Err(Error::Config(format!("{source}:1: bad header `{header}`"))),
            },
            _ => return Err(Error::Config(format!("{source}:1: bad header `{header}`"))),
        };
        let mut entries = Vec::with_capacity(size);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap().to_owned();
            let v: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let v = v.map_err(|e| Error::Config(format!("{source}:{lineno}: {e}")))?;
            if v.len() != dim {
                return Err(Error::Config(format!(
                    "{source}:{lineno}: expected {dim} values, found {}",
                    v.len()
                )));
            }
            entries.push((token, v));
        }
        if entries.len() != size {
            return Err(Error::Config(format!(
                "{source}: header declares {size} tokens, found {}",
                entries.len()
            )));
        }
        Self::new(dim, entries).map_err(|e| Error::Config(format!("{source}: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.tokens.len(), self.dim);
        for (i, token) in self.tokens.iter().enumerate() {
            out.push_str(token);
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Mean of the token vectors; out-of-vocabulary tokens count as zero.
pub fn embed_document(normalized_text: &str, model: &EmbeddingModel) -> Vec<f64> {
    let mut acc = vec![0.0; model.dim];
    let mut n = 0usize;
    for token in normalized_text.split_whitespace() {
        n += 1;
        if let Some(v) = model.vector(token) {
            acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            dim: 50,
            window: 3,
            epochs: 10,
            min_count: 1,
            negatives: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Skip-gram with negative sampling over whitespace tokenized queries.
/// Single threaded and fully determined by `params.seed`.
pub fn train_embeddings(corpus: &[String], params: &TrainParams) -> Result<EmbeddingModel> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("embedding corpus is empty".into()));
    }
    if params.dim == 0 || params.window == 0 || params.epochs == 0 {
        return Err(Error::Domain("dim, window and epochs must be positive".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sentence in corpus {
        for tok in sentence.split_whitespace() {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= params.min_count.max(1))
        .collect();
    if vocab.is_empty() {
        return Err(Error::InsufficientData(
            "no token reaches the minimum count".into(),
        ));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();

    // Unigram^0.75 noise distribution.
    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut total = 0.0;
    for &(_, c) in &vocab {
        total += (c as f64).powf(0.75);
        cumulative.push(total);
    }

    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut w_in: Vec<f64> = (0..vocab.len() * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut w_out = vec![0.0; vocab.len() * dim];

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.split_whitespace().filter_map(|t| index.get(t).copied()).collect())
        .collect();
    let total_pairs: usize = sentences.iter().map(Vec::len).sum::<usize>() * params.epochs;
    let mut processed = 0usize;
    let mut grad = vec![0.0; dim];

    for _ in 0..params.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let progress = processed as f64 / total_pairs.max(1) as f64;
                let lr = params.learning_rate * (1.0 - progress).max(1e-4);
                processed += 1;
                let lo = pos.saturating_sub(params.window);
                let hi = (pos + params.window + 1).min(sentence.len());
                for (cpos, &context) in sentence.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let v_in = center * dim;
                    for k in 0..=params.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let u = rng.gen::<f64>() * total;
                            let t = cumulative.partition_point(|&c| c <= u).min(vocab.len() - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let v_out = target * dim;
                        let dot: f64 = (0..dim).map(|d| w_in[v_in + d] * w_out[v_out + d]).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * w_out[v_out + d];
                            w_out[v_out + d] += g * w_in[v_in + d];
                        }
                    }
                    for d in 0..dim {
                        w_in[v_in + d] += grad[d];
                    }
                }
            }
        }
    }

    let entries = vocab
        .iter()
        .enumerate()
        .map(|(i, (t, _))| ((*t).to_owned(), w_in[i * dim..(i + 1) * dim].to_vec()))
        .collect();
    EmbeddingModel::new(dim, entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub query: String,
    pub similarity: f64,
}

/// Top-`k` candidates by maximum cosine similarity to any seed query,
/// sorted by descending similarity and then by text.
pub fn expand_seed(
    seeds: &[String],
    candidates: &[String],
    model: &EmbeddingModel,
    k: usize,
) -> Result<Vec<Expansion>> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let seed_vecs: Vec<Vec<f64>> = seeds
        .iter()
        .map(|s| embed_document(s, model))
        .filter(|v| v.iter().any(|x| *x != 0.0))
        .collect();
    if seed_vecs.is_empty() {
        log::warn!("expand_seed: no seed query has an in-vocabulary token");
        return Ok(Vec::new());
    }
    let mut unique: Vec<&String> = candidates.iter().collect();
    unique.sort();
    unique.dedup();
    let mut scored: Vec<Expansion> = unique
        .into_iter()
        .filter_map(|c| {
            let v = embed_document(c, model);
            if v.iter().all(|x| *x == 0.0) {
                return None;
            }
            let similarity = seed_vecs
                .iter()
                .map(|s| cosine(s, &v))
                .fold(f64::NEG_INFINITY, f64::max);
            Some(Expansion {
                query: c.clone(),
                similarity,
            })
        })
        .collect();
    if scored.is_empty() {
        log::warn!("expand_seed: every candidate embeds to the zero vector");
        return Ok(Vec::new());
    }
    scored.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.query.cmp(&b.query))
    });
    scored.truncate(k);
    Ok(scored)
}

//! Skip-gram with negative sampling.
//!
//! For every (center, context) pair inside a randomly shrunk window the
//! context's input vector is trained to score the center word's output
//! vector high and `negatives` draws from the unigram^0.75 distribution low.
//! Frequent tokens are subsampled with threshold `subsample`, and the
//! learning rate decays linearly to 1e-4 of its initial value.

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, Ordering};

use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total_tokens: u64,
}

impl Vocabulary {
    /// Tokens seen at least `min_count` times, most frequent first (ties by
    /// token text). `total_tokens` counts only retained tokens.
    pub fn build(corpus: &[Vec<String>], min_count: u64) -> Self {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for doc in corpus {
            for t in doc {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> =
            freq.into_iter().filter(|(_, c)| *c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = entries.iter().map(|(t, _)| (*t).to_owned()).collect();
        let counts: Vec<u64> = entries.iter().map(|(_, c)| *c).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            total_tokens: counts.iter().sum(),
            tokens,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn frequency(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }
}

/// Trained input vectors, one row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors<T: Scalar = f32> {
    pub vocab: Vocabulary,
    pub vectors: Array2<T>,
}

impl<T: Scalar> WordVectors<T> {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn get(&self, token: &str) -> Option<ArrayView1<'_, T>> {
        self.vocab.get(token).map(|i| self.vectors.row(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub min_count: u64,
    pub subsample: f64,
    pub epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
    /// `None` trains single-threaded and bitwise reproducibly. `Some(n)`
    /// runs lock-free updates on up to `n` threads; results then depend on
    /// scheduling.
    pub threads: Option<usize>,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            min_count: 2,
            subsample: 1e-3,
            epochs: 5,
            learning_rate: 0.025,
            seed: 1,
            threads: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SgnsModel {
    pub words: WordVectors<f32>,
    /// Output (context) vectors.
    pub output: Array2<f32>,
    /// Mean per-pair negative log-likelihood of each epoch.
    pub epoch_losses: Vec<f64>,
}

trait Weights {
    fn get(&self, i: usize) -> f32;
    fn set(&self, i: usize, v: f32);
}

struct Cells<'a>(&'a [Cell<f32>]);

impl Weights for Cells<'_> {
    #[inline]
    fn get(&self, i: usize) -> f32 {
        self.0[i].get()
    }
    #[inline]
    fn set(&self, i: usize, v: f32) {
        self.0[i].set(v)
    }
}

struct Shared<'a>(&'a [AtomicU32]);

impl Weights for Shared<'_> {
    #[inline]
    fn get(&self, i: usize) -> f32 {
        f32::from_bits(self.0[i].load(Ordering::Relaxed))
    }
    #[inline]
    fn set(&self, i: usize, v: f32) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed)
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

struct Trainer<'a> {
    dim: usize,
    window: usize,
    negatives: usize,
    keep_prob: &'a [f64],
    noise: &'a WeightedIndex<f64>,
}

impl Trainer<'_> {
    /// One gradient step for `input` predicting `target`; returns the pair's
    /// negative log-likelihood before the step.
    fn pair<W: Weights, R: Rng>(
        &self,
        syn0: &W,
        syn1: &W,
        input: usize,
        target: usize,
        lr: f32,
        rng: &mut R,
        grad: &mut [f32],
    ) -> f64 {
        let d = self.dim;
        let l1 = input * d;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0f64;
        for k in 0..=self.negatives {
            let (out, label) = if k == 0 {
                (target, 1.0f32)
            } else {
                let n = self.noise.sample(rng);
                if n == target {
                    continue;
                }
                (n, 0.0)
            };
            let l2 = out * d;
            let mut f = 0.0f32;
            for j in 0..d {
                f += syn0.get(l1 + j) * syn1.get(l2 + j);
            }
            let p = sigmoid(f);
            let p_label = if label > 0.5 { p } else { 1.0 - p };
            loss -= (p_label as f64).max(1e-7).ln();
            let g = (label - p) * lr;
            for j in 0..d {
                grad[j] += g * syn1.get(l2 + j);
                syn1.set(l2 + j, syn1.get(l2 + j) + g * syn0.get(l1 + j));
            }
        }
        for j in 0..d {
            syn0.set(l1 + j, syn0.get(l1 + j) + grad[j]);
        }
        loss
    }

    /// Trains on one document; returns (summed loss, pair count).
    fn document<W: Weights, R: Rng>(
        &self,
        syn0: &W,
        syn1: &W,
        doc: &[usize],
        lr: f32,
        rng: &mut R,
        grad: &mut [f32],
    ) -> (f64, u64) {
        let kept: Vec<usize> = doc
            .iter()
            .copied()
            .filter(|&w| rng.gen::<f64>() < self.keep_prob[w])
            .collect();
        let mut loss = 0.0;
        let mut pairs = 0;
        for (pos, &center) in kept.iter().enumerate() {
            let reach = self.window - rng.gen_range(0..self.window);
            let lo = pos.saturating_sub(reach);
            let hi = (pos + reach).min(kept.len() - 1);
            for c in lo..=hi {
                if c == pos {
                    continue;
                }
                loss += self.pair(syn0, syn1, kept[c], center, lr, rng, grad);
                pairs += 1;
            }
        }
        (loss, pairs)
    }
}

pub fn train_sgns(corpus: &[Vec<String>], config: &SgnsConfig) -> Result<SgnsModel> {
    train_sgns_with(corpus, config, |_, _| {})
}

/// As [`train_sgns`], calling `on_epoch(epoch, &model)` after every epoch.
pub fn train_sgns_with<F>(
    corpus: &[Vec<String>],
    config: &SgnsConfig,
    mut on_epoch: F,
) -> Result<SgnsModel>
where
    F: FnMut(usize, &SgnsModel),
{
    if config.dim < 2 {
        return Err(Error::Config(format!(
            "dim must be >= 2, got {}",
            config.dim
        )));
    }
    if config.window == 0 || config.epochs == 0 {
        return Err(Error::Config("window and epochs must be positive".into()));
    }
    if corpus.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyVocabulary("corpus is empty".into()));
    }
    let vocab = Vocabulary::build(corpus, config.min_count);
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary(format!(
            "no token occurs at least {} times",
            config.min_count
        )));
    }

    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.iter().filter_map(|t| vocab.get(t)).collect())
        .collect();
    let total = vocab.total_tokens() as f64;
    let keep_prob: Vec<f64> = (0..vocab.len())
        .map(|i| {
            if config.subsample <= 0.0 {
                return 1.0;
            }
            let f = vocab.frequency(i) as f64 / total;
            let r = config.subsample / f;
            (r.sqrt() + r).min(1.0)
        })
        .collect();
    let noise =
        WeightedIndex::new((0..vocab.len()).map(|i| (vocab.frequency(i) as f64).powf(0.75)))
            .map_err(|e| Error::Config(e.to_string()))?;

    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut syn0: Vec<f32> = (0..vocab.len() * dim)
        .map(|_| (rng.gen::<f32>() - 0.5) / dim as f32)
        .collect();
    let mut syn1: Vec<f32> = vec![0.0; vocab.len() * dim];

    let trainer = Trainer {
        dim,
        window: config.window,
        negatives: config.negatives,
        keep_prob: &keep_prob,
        noise: &noise,
    };
    let words_per_epoch: u64 = docs.iter().map(|d| d.len() as u64).sum();
    let schedule_total = (words_per_epoch * config.epochs as u64).max(1) as f64;
    let lr_at = |seen: u64| {
        let frac = 1.0 - seen as f64 / (schedule_total + 1.0);
        config.learning_rate * frac.max(1e-4) as f32
    };

    let mut model = SgnsModel {
        words: WordVectors {
            vocab,
            vectors: Array2::zeros((0, dim)),
        },
        output: Array2::zeros((0, dim)),
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    let n_vocab = model.words.vocab.len();

    for epoch in 0..config.epochs {
        let seen_before = epoch as u64 * words_per_epoch;
        let (loss, pairs) = match config.threads {
            None => {
                let s0 = Cells(Cell::from_mut(syn0.as_mut_slice()).as_slice_of_cells());
                let s1 = Cells(Cell::from_mut(syn1.as_mut_slice()).as_slice_of_cells());
                let mut grad = vec![0.0f32; dim];
                let mut seen = seen_before;
                let (mut loss, mut pairs) = (0.0, 0u64);
                for doc in &docs {
                    let (l, p) = trainer.document(&s0, &s1, doc, lr_at(seen), &mut rng, &mut grad);
                    loss += l;
                    pairs += p;
                    seen += doc.len() as u64;
                }
                (loss, pairs)
            }
            Some(threads) => {
                let threads = threads.max(1);
                let a0: Vec<AtomicU32> = syn0.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
                let a1: Vec<AtomicU32> = syn1.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
                let chunk = docs.len().div_ceil(threads).max(1);
                let parts: Vec<(f64, u64)> = docs
                    .par_chunks(chunk)
                    .enumerate()
                    .map(|(ci, part)| {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                        rng.set_stream(((epoch as u64) << 32) | (ci as u64 + 1));
                        let mut grad = vec![0.0f32; dim];
                        let (s0, s1) = (Shared(&a0), Shared(&a1));
                        let mut seen = seen_before
                            + (ci * chunk) as u64 * words_per_epoch / docs.len().max(1) as u64;
                        let (mut loss, mut pairs) = (0.0, 0u64);
                        for doc in part {
                            let (l, p) =
                                trainer.document(&s0, &s1, doc, lr_at(seen), &mut rng, &mut grad);
                            loss += l;
                            pairs += p;
                            seen += doc.len() as u64;
                        }
                        (loss, pairs)
                    })
                    .collect();
                syn0 = a0
                    .into_iter()
                    .map(|a| f32::from_bits(a.into_inner()))
                    .collect();
                syn1 = a1
                    .into_iter()
                    .map(|a| f32::from_bits(a.into_inner()))
                    .collect();
                parts
                    .into_iter()
                    .fold((0.0, 0), |(l, p), (a, b)| (l + a, p + b))
            }
        };
        model
            .epoch_losses
            .push(if pairs == 0 { 0.0 } else { loss / pairs as f64 });
        model.words.vectors = Array2::from_shape_vec((n_vocab, dim), syn0.clone()).unwrap();
        model.output = Array2::from_shape_vec((n_vocab, dim), syn1.clone()).unwrap();
        on_epoch(epoch, &model);
    }
    Ok(model)
}

impl SgnsModel {
    /// Negative log-likelihood of `input` predicting `target` against the
    /// given negative samples, under the current vectors.
    pub fn pair_loss(&self, input: usize, target: usize, negatives: &[usize]) -> f64 {
        let u = self.words.vectors.row(input);
        let score = |o: usize| u.dot(&self.output.row(o)) as f64;
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut loss = -sig(score(target)).max(1e-300).ln();
        for &n in negatives {
            loss -= (1.0 - sig(score(n))).max(1e-300).ln();
        }
        loss
    }

    pub fn vector(&self, token: &str) -> Option<Array1<f32>> {
        self.words.get(token).map(|v| v.to_owned())
    }
}

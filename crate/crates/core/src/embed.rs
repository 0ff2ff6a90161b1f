//! Skip-gram with negative sampling over a walk corpus, and nearest-neighbor
//! queries on the trained input vectors.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use num_traits::Float;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::mix64;
use crate::textvec::{write_vectors, VectorStore};
use crate::walks::WalkCorpus;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no node reaches min_count = {0}")]
    EmptyVocabulary(usize),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbedError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    /// Context positions on each side of the center.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Decays linearly to `lr_initial / 100` over training.
    pub lr_initial: f64,
    pub min_count: usize,
    pub noise_exponent: f64,
    pub seed: u64,
    /// Sequential, bit-reproducible training. When off, examples are
    /// processed concurrently with racy (Hogwild-style) updates.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            window: 3,
            negatives: 5,
            epochs: 10,
            lr_initial: 0.025,
            min_count: 1,
            noise_exponent: 0.75,
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr_initial > 0.0) {
            return bad("lr_initial must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainProvenance {
    pub config: TrainConfig,
    pub corpus_fingerprint: String,
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub reproducible: bool,
}

/// Trained node vectors keyed by node key.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSpace {
    keys: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    vectors: Vec<f32>,
    pub provenance: Option<TrainProvenance>,
}

impl EmbeddingSpace {
    pub fn new(keys: Vec<String>, dim: usize, vectors: Vec<f32>) -> Self {
        assert_eq!(keys.len() * dim, vectors.len());
        let index = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        Self {
            keys,
            index,
            dim,
            vectors,
            provenance: None,
        }
    }

    /// Wraps vectors loaded from a word2vec text file, keys sorted.
    pub fn from_store(store: &VectorStore) -> Self {
        let mut keys: Vec<String> = store.keys().map(str::to_string).collect();
        keys.sort();
        let vectors = keys
            .iter()
            .flat_map(|k| store.get(k).expect("listed key").iter().map(|&x| x as f32))
            .collect();
        Self::new(keys, store.dim(), vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn vector(&self, key: &str) -> Option<&[f32]> {
        self.index.get(key).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine between two stored vectors; `None` if either key is unknown.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine_f32(self.vector(a)?, self.vector(b)?))
    }

    /// Top-`k` other nodes passing `filter`, by descending cosine, ties by key.
    pub fn nearest<F>(&self, key: &str, k: usize, filter: F) -> Result<Vec<(String, f64)>>
    where
        F: Fn(&str) -> bool,
    {
        let q = self
            .vector(key)
            .ok_or_else(|| EmbedError::UnknownNode(key.to_string()))?;
        let mut scored: Vec<(String, f64)> = self
            .keys
            .iter()
            .enumerate()
            .filter(|(_, other)| other.as_str() != key && filter(other))
            .map(|(i, other)| (other.clone(), cosine_f32(q, self.row(i))))
            .collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        scored.truncate(k);
        Ok(scored)
    }

    pub fn write_word2vec<W: Write>(&self, writer: W) -> std::io::Result<()> {
        write_vectors(
            writer,
            self.dim,
            self.keys
                .iter()
                .enumerate()
                .map(|(i, k)| (k.as_str(), self.row(i))),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_word2vec(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub fn cosine_f32(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    // Eight independent accumulators so the loop vectorizes.
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// `y += a·x`
fn axpy<T: Float>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `ln σ(x)`, stable for large |x|.
fn log_sigmoid<T: Float>(x: T) -> T {
    x.min(T::zero()) - (-x.abs()).exp().ln_1p()
}

/// Loss of one example, `−ln σ(c·o₀) − Σₜ ln σ(−c·oₜ)`, where `targets[0]` is
/// the positive context. `coefs[t]` receives ∂loss/∂(c·oₜ).
pub(crate) fn example_loss<T: Float>(center: &[T], targets: &[&[T]], coefs: &mut [T]) -> T {
    let mut loss = T::zero();
    for (t, row) in targets.iter().enumerate() {
        let s = dot(center, row);
        if t == 0 {
            loss = loss - log_sigmoid(s);
            coefs[t] = sigmoid(s) - T::one();
        } else {
            loss = loss - log_sigmoid(-s);
            coefs[t] = sigmoid(s);
        }
    }
    loss
}

struct Vocab {
    keys: Vec<String>,
    /// Corpus token id → vocabulary row.
    remap: Vec<Option<u32>>,
    counts: Vec<u64>,
}

fn build_vocab(corpus: &WalkCorpus, min_count: usize) -> Result<Vocab> {
    let mut counts = vec![0u64; corpus.vocab.len()];
    for seq in &corpus.sequences {
        for &t in seq {
            counts[t as usize] += 1;
        }
    }
    let threshold = min_count.max(1) as u64;
    let mut keys = Vec::new();
    let mut kept = Vec::new();
    let mut remap = vec![None; counts.len()];
    for (t, &c) in counts.iter().enumerate() {
        if c >= threshold {
            remap[t] = Some(keys.len() as u32);
            keys.push(corpus.vocab[t].clone());
            kept.push(c);
        }
    }
    if keys.is_empty() {
        return Err(EmbedError::EmptyVocabulary(min_count));
    }
    Ok(Vocab {
        keys,
        remap,
        counts: kept,
    })
}

/// `(center, context)` positions for one sequence, in training order.
pub fn context_pairs(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(len.saturating_sub(1));
        (lo..=hi).filter(move |&j| j != i).map(move |j| (i, j))
    })
}

fn learning_rate(cfg: &TrainConfig, progress: f64) -> f32 {
    (cfg.lr_initial * (1.0 - 0.99 * progress.clamp(0.0, 1.0))) as f32
}

/// Trains input and output vectors with SGNS.
///
/// In deterministic mode examples are visited in corpus order and the
/// negative-sample stream restarts from the same seed every epoch, so each
/// epoch replays the same steps with a smaller learning rate.
pub fn train_skipgram(corpus: &WalkCorpus, cfg: &TrainConfig) -> Result<EmbeddingSpace> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let vocab = build_vocab(corpus, cfg.min_count)?;
    let sentences: Vec<Vec<u32>> = corpus
        .sequences
        .iter()
        .map(|s| s.iter().filter_map(|&t| vocab.remap[t as usize]).collect())
        .collect();
    let noise = WeightedIndex::new(
        vocab
            .counts
            .iter()
            .map(|&c| (c as f64).powf(cfg.noise_exponent)),
    )
    .expect("positive counts");

    let dim = cfg.dim;
    let n = vocab.keys.len();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input: Vec<f32> = (0..n * dim)
        .map(|_| (init_rng.gen::<f32>() - 0.5) / dim as f32)
        .collect();
    let output = vec![0.0f32; n * dim];

    let (input, epoch_losses) = if cfg.deterministic {
        train_sequential(&sentences, &noise, cfg, input, output)
    } else {
        train_hogwild(&sentences, &noise, cfg, input, output)
    };

    let mut space = EmbeddingSpace::new(vocab.keys, dim, input);
    space.provenance = Some(TrainProvenance {
        config: cfg.clone(),
        corpus_fingerprint: corpus.fingerprint(),
        final_loss: *epoch_losses.last().expect("at least one epoch"),
        epoch_losses,
        reproducible: cfg.deterministic,
    });
    Ok(space)
}

fn negative_seed(cfg: &TrainConfig) -> u64 {
    mix64(cfg.seed ^ 0x6e65_6761_7469_7665)
}

fn train_sequential(
    sentences: &[Vec<u32>],
    noise: &WeightedIndex<f64>,
    cfg: &TrainConfig,
    mut input: Vec<f32>,
    mut output: Vec<f32>,
) -> (Vec<f32>, Vec<f64>) {
    let dim = cfg.dim;
    let total_positions = (sentences.iter().map(Vec::len).sum::<usize>() * cfg.epochs).max(1);
    let mut seen = 0usize;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut targets: Vec<u32> = Vec::with_capacity(cfg.negatives + 1);
    let mut coefs = vec![0.0f32; cfg.negatives + 1];
    let mut grad = vec![0.0f32; dim];
    for _ in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(negative_seed(cfg));
        let (mut loss_sum, mut examples) = (0.0f64, 0usize);
        for sent in sentences {
            for i in 0..sent.len() {
                let lr = learning_rate(cfg, seen as f64 / total_positions as f64);
                seen += 1;
                let center = sent[i] as usize;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(sent.len() - 1);
                for j in (lo..=hi).filter(|&j| j != i) {
                    targets.clear();
                    targets.push(sent[j]);
                    for _ in 0..cfg.negatives {
                        let neg = noise.sample(&mut rng) as u32;
                        if neg != sent[j] {
                            targets.push(neg);
                        }
                    }
                    let c_row = &input[center * dim..(center + 1) * dim];
                    let rows: Vec<&[f32]> = targets
                        .iter()
                        .map(|&t| &output[t as usize * dim..(t as usize + 1) * dim])
                        .collect();
                    let loss = example_loss(c_row, &rows, &mut coefs);
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for (row, &c) in rows.iter().zip(&coefs) {
                        axpy(c, row, &mut grad);
                    }
                    for (&t, &c) in targets.iter().zip(&coefs) {
                        let t = t as usize;
                        let (c_row, o_row) = (
                            &input[center * dim..(center + 1) * dim],
                            &mut output[t * dim..(t + 1) * dim],
                        );
                        axpy(-lr * c, c_row, o_row);
                    }
                    axpy(-lr, &grad, &mut input[center * dim..(center + 1) * dim]);
                    loss_sum += f64::from(loss);
                    examples += 1;
                }
            }
        }
        losses.push(loss_sum / examples.max(1) as f64);
    }
    (input, losses)
}

fn to_atomic(v: Vec<f32>) -> Vec<AtomicU32> {
    v.into_iter().map(|x| AtomicU32::new(x.to_bits())).collect()
}

fn load_row(m: &[AtomicU32], row: usize, dim: usize, out: &mut [f32]) {
    for (o, a) in out.iter_mut().zip(&m[row * dim..(row + 1) * dim]) {
        *o = f32::from_bits(a.load(Ordering::Relaxed));
    }
}

fn store_row(m: &[AtomicU32], row: usize, dim: usize, values: &[f32]) {
    for (a, v) in m[row * dim..(row + 1) * dim].iter().zip(values) {
        a.store(v.to_bits(), Ordering::Relaxed);
    }
}

/// Concurrent variant: sentences are processed in parallel and rows are read
/// and written without locks, so interleavings (and results) vary per run.
fn train_hogwild(
    sentences: &[Vec<u32>],
    noise: &WeightedIndex<f64>,
    cfg: &TrainConfig,
    input: Vec<f32>,
    output: Vec<f32>,
) -> (Vec<f32>, Vec<f64>) {
    let dim = cfg.dim;
    let input = to_atomic(input);
    let output = to_atomic(output);
    let total = (sentences.len() * cfg.epochs).max(1);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss_sum, examples) = sentences
            .par_iter()
            .enumerate()
            .map(|(s_idx, sent)| {
                let lr =
                    learning_rate(cfg, (epoch * sentences.len() + s_idx) as f64 / total as f64);
                let mut rng = ChaCha8Rng::seed_from_u64(negative_seed(cfg) ^ mix64(s_idx as u64));
                let mut c_row = vec![0.0f32; dim];
                let mut grad = vec![0.0f32; dim];
                let mut rows: Vec<Vec<f32>> = vec![vec![0.0; dim]; cfg.negatives + 1];
                let mut coefs = vec![0.0f32; cfg.negatives + 1];
                let mut targets: Vec<u32> = Vec::with_capacity(cfg.negatives + 1);
                let (mut loss_sum, mut examples) = (0.0f64, 0usize);
                for (i, j) in context_pairs(sent.len(), cfg.window) {
                    let center = sent[i] as usize;
                    targets.clear();
                    targets.push(sent[j]);
                    for _ in 0..cfg.negatives {
                        let neg = noise.sample(&mut rng) as u32;
                        if neg != sent[j] {
                            targets.push(neg);
                        }
                    }
                    load_row(&input, center, dim, &mut c_row);
                    for (buf, &t) in rows.iter_mut().zip(&targets) {
                        load_row(&output, t as usize, dim, buf);
                    }
                    let views: Vec<&[f32]> =
                        rows[..targets.len()].iter().map(Vec::as_slice).collect();
                    let loss = example_loss(&c_row, &views, &mut coefs);
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for (row, &c) in views.iter().zip(&coefs) {
                        axpy(c, row, &mut grad);
                    }
                    for (k, &t) in targets.iter().enumerate() {
                        axpy(-lr * coefs[k], &c_row, &mut rows[k]);
                        store_row(&output, t as usize, dim, &rows[k]);
                    }
                    axpy(-lr, &grad, &mut c_row);
                    store_row(&input, center, dim, &c_row);
                    loss_sum += f64::from(loss);
                    examples += 1;
                }
                (loss_sum, examples)
            })
            .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        losses.push(loss_sum / examples.max(1) as f64);
    }
    let input = input
        .into_iter()
        .map(|a| f32::from_bits(a.into_inner()))
        .collect();
    (input, losses)
}

/// A small SGNS problem for checking gradients in f64.
#[derive(Clone, Debug)]
pub struct GradientCheckBatch {
    pub vocab: usize,
    pub dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    /// `(center, [positive, negatives…])`
    pub examples: Vec<(usize, Vec<usize>)>,
}

impl GradientCheckBatch {
    pub fn random(
        vocab: usize,
        dim: usize,
        n_examples: usize,
        negatives: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = (0..vocab * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let output = (0..vocab * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let examples = (0..n_examples)
            .map(|_| {
                let center = rng.gen_range(0..vocab);
                let targets = (0..=negatives).map(|_| rng.gen_range(0..vocab)).collect();
                (center, targets)
            })
            .collect();
        Self {
            vocab,
            dim,
            input,
            output,
            examples,
        }
    }

    pub fn loss(&self) -> f64 {
        let mut coefs = vec![0.0; self.examples.iter().map(|e| e.1.len()).max().unwrap_or(0)];
        self.examples
            .iter()
            .map(|(c, ts)| {
                let rows: Vec<&[f64]> = ts.iter().map(|&t| self.out_row(t)).collect();
                example_loss(self.in_row(*c), &rows, &mut coefs)
            })
            .sum()
    }

    /// Analytic gradients of [`loss`](Self::loss) w.r.t. input and output matrices.
    pub fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut g_in = vec![0.0; self.input.len()];
        let mut g_out = vec![0.0; self.output.len()];
        for (c, ts) in &self.examples {
            let mut coefs = vec![0.0; ts.len()];
            let rows: Vec<&[f64]> = ts.iter().map(|&t| self.out_row(t)).collect();
            example_loss(self.in_row(*c), &rows, &mut coefs);
            for (k, &t) in ts.iter().enumerate() {
                axpy(coefs[k], rows[k], &mut g_in[c * d..(c + 1) * d]);
                axpy(coefs[k], self.in_row(*c), &mut g_out[t * d..(t + 1) * d]);
            }
        }
        (g_in, g_out)
    }

    fn in_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    fn out_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }
}

/// Largest relative error between analytic gradients and central finite
/// differences with the given step, over every parameter.
pub fn sgns_gradient_check(batch: &GradientCheckBatch, step: f64) -> f64 {
    let (g_in, g_out) = batch.gradients();
    let mut probe = batch.clone();
    let mut worst: f64 = 0.0;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    for k in 0..batch.input.len() {
        let orig = probe.input[k];
        probe.input[k] = orig + step;
        let plus = probe.loss();
        probe.input[k] = orig - step;
        let minus = probe.loss();
        probe.input[k] = orig;
        worst = worst.max(rel(g_in[k], (plus - minus) / (2.0 * step)));
    }
    for k in 0..batch.output.len() {
        let orig = probe.output[k];
        probe.output[k] = orig + step;
        let plus = probe.loss();
        probe.output[k] = orig - step;
        let minus = probe.loss();
        probe.output[k] = orig;
        worst = worst.max(rel(g_out[k], (plus - minus) / (2.0 * step)));
    }
    worst
}

//! Skip-gram and CBOW training with negative sampling.
//!
//! Parameters live in two `V x dim` row-major matrices: input (word) vectors
//! and output (context) vectors. Workers update them without locking; with a
//! single worker and a fixed seed training is reproducible bit for bit.

use std::cell::Cell;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, TrainConfig};
use crate::error::{Error, Result};
use crate::textprep::Sentence;
use crate::vocab::{keep_probability, NoiseDistribution, Vocabulary};

/// Attempts at drawing a negative different from the positive target.
pub const NEGATIVE_REDRAWS: usize = 10;

/// Number of progress buckets in the loss trace.
pub const LOSS_BUCKETS: usize = 20;

pub fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `-ln σ(x)`, stable for large |x|.
pub fn neg_log_sigmoid<F: Float>(x: F) -> F {
    // softplus(-x)
    let z = -x;
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Loss and exact gradients of one negative-sampling term set.
#[derive(Debug, Clone, PartialEq)]
pub struct NslGrads {
    pub loss: f64,
    pub center: Vec<f64>,
    pub target: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// `L = -ln σ(u_o·v_c) - Σ_k ln σ(-u_k·v_c)` with gradients with respect to
/// the center vector `v_c`, the target output vector `u_o` and every
/// negative output vector `u_k`.
pub fn nsl_loss_and_grads(
    center: &[f64],
    target: &[f64],
    negatives: &[&[f64]],
) -> Result<NslGrads> {
    let dim = center.len();
    if target.len() != dim || negatives.iter().any(|n| n.len() != dim) {
        return Err(Error::Contract(format!(
            "vector dimensions differ: center {dim}, target {}, negatives {:?}",
            target.len(),
            negatives.iter().map(|n| n.len()).collect::<Vec<_>>()
        )));
    }
    let s = dot(target, center);
    let mut loss = neg_log_sigmoid(s);
    // d/ds -ln σ(s) = σ(s) - 1
    let gp = sigmoid(s) - 1.0;
    let mut g_center: Vec<f64> = target.iter().map(|&u| gp * u).collect();
    let g_target: Vec<f64> = center.iter().map(|&v| gp * v).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let s = dot(neg, center);
        loss += neg_log_sigmoid(-s);
        // d/ds -ln σ(-s) = σ(s)
        let gn = sigmoid(s);
        for (g, &u) in g_center.iter_mut().zip(neg.iter()) {
            *g += gn * u;
        }
        g_negs.push(center.iter().map(|&v| gn * v).collect());
    }
    Ok(NslGrads {
        loss,
        center: g_center,
        target: g_target,
        negatives: g_negs,
    })
}

/// CBOW loss: the hidden state is the mean of the context vectors and the
/// gradient of each context vector is the hidden gradient divided by the
/// context size. `NslGrads::center` holds the gradient of *each* context
/// vector (they are identical).
pub fn cbow_loss_and_grads(
    contexts: &[&[f64]],
    target: &[f64],
    negatives: &[&[f64]],
) -> Result<NslGrads> {
    if contexts.is_empty() {
        return Err(Error::Contract(
            "CBOW needs at least one context vector".into(),
        ));
    }
    let dim = target.len();
    if contexts.iter().any(|c| c.len() != dim) {
        return Err(Error::Contract(
            "context vector dimension differs from target".into(),
        ));
    }
    let n = contexts.len() as f64;
    let mut hidden = vec![0.0; dim];
    for c in contexts {
        for (h, &x) in hidden.iter_mut().zip(c.iter()) {
            *h += x;
        }
    }
    hidden.iter_mut().for_each(|h| *h /= n);
    let mut g = nsl_loss_and_grads(&hidden, target, negatives)?;
    g.center.iter_mut().for_each(|x| *x /= n);
    Ok(g)
}

/// Parameter storage addressed element-wise through a shared reference.
pub trait ParamStore {
    fn load(&self, i: usize) -> f32;
    fn store(&self, i: usize, v: f32);
}

impl ParamStore for [Cell<f32>] {
    fn load(&self, i: usize) -> f32 {
        self[i].get()
    }
    fn store(&self, i: usize, v: f32) {
        self[i].set(v)
    }
}

impl ParamStore for [AtomicU32] {
    fn load(&self, i: usize) -> f32 {
        f32::from_bits(self[i].load(Ordering::Relaxed))
    }
    fn store(&self, i: usize, v: f32) {
        self[i].store(v.to_bits(), Ordering::Relaxed)
    }
}

fn read_row<S: ParamStore + ?Sized>(m: &S, row: usize, out: &mut [f32]) {
    let base = row * out.len();
    for (j, o) in out.iter_mut().enumerate() {
        *o = m.load(base + j);
    }
}

fn write_row<S: ParamStore + ?Sized>(m: &S, row: usize, src: &[f32]) {
    let base = row * src.len();
    for (j, &v) in src.iter().enumerate() {
        m.store(base + j, v);
    }
}

fn add_row<S: ParamStore + ?Sized>(m: &S, row: usize, delta: &[f32], scale: f32) {
    let base = row * delta.len();
    for (j, &d) in delta.iter().enumerate() {
        m.store(base + j, m.load(base + j) + scale * d);
    }
}

/// One binary logistic update against output row `out`. Adds `-lr * dL/dh`
/// to `hidden_step`, moves `out` by `-lr * dL/du` and returns the loss term.
pub fn ns_update<F: Float>(
    hidden: &[F],
    out: &mut [F],
    positive: bool,
    lr: F,
    hidden_step: &mut [F],
) -> F {
    let s = dot(hidden, out);
    let (label, loss) = if positive {
        (F::one(), neg_log_sigmoid(s))
    } else {
        (F::zero(), neg_log_sigmoid(-s))
    };
    let g = (label - sigmoid(s)) * lr;
    for (h, &u) in hidden_step.iter_mut().zip(out.iter()) {
        *h = *h + g * u;
    }
    for (u, &h) in out.iter_mut().zip(hidden) {
        *u = *u + g * h;
    }
    loss
}

/// Reusable per-worker buffers.
#[derive(Debug, Clone)]
pub struct Scratch {
    hidden: Vec<f32>,
    step: Vec<f32>,
    out: Vec<f32>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            hidden: vec![0.0; dim],
            step: vec![0.0; dim],
            out: vec![0.0; dim],
        }
    }
}

fn apply_targets<S: ParamStore + ?Sized>(
    w_out: &S,
    target: usize,
    negatives: &[usize],
    lr: f32,
    scratch: &mut Scratch,
) -> f64 {
    let Scratch { hidden, step, out } = scratch;
    step.iter_mut().for_each(|x| *x = 0.0);
    let mut loss = 0.0f64;
    for (row, positive) in
        std::iter::once((target, true)).chain(negatives.iter().map(|&n| (n, false)))
    {
        read_row(w_out, row, out);
        loss += ns_update(hidden, out, positive, lr, step) as f64;
        write_row(w_out, row, out);
    }
    loss
}

/// Skip-gram step: the input vector of `center` predicts output row `target`
/// against `negatives`. Returns the loss before the update.
pub fn skipgram_step<S: ParamStore + ?Sized>(
    w_in: &S,
    w_out: &S,
    center: usize,
    target: usize,
    negatives: &[usize],
    lr: f32,
    scratch: &mut Scratch,
) -> f64 {
    read_row(w_in, center, &mut scratch.hidden);
    let loss = apply_targets(w_out, target, negatives, lr, scratch);
    add_row(w_in, center, &scratch.step, 1.0);
    loss
}

/// CBOW step: the mean of the context input vectors predicts output row
/// `center`. Every context vector receives the hidden gradient divided by
/// the context size. Empty context is a no-op returning `None`.
pub fn cbow_step<S: ParamStore + ?Sized>(
    w_in: &S,
    w_out: &S,
    context: &[usize],
    center: usize,
    negatives: &[usize],
    lr: f32,
    scratch: &mut Scratch,
) -> Option<f64> {
    if context.is_empty() {
        return None;
    }
    let dim = scratch.hidden.len();
    let inv = 1.0 / context.len() as f32;
    scratch.hidden.iter_mut().for_each(|h| *h = 0.0);
    for &c in context {
        let base = c * dim;
        for (j, h) in scratch.hidden.iter_mut().enumerate() {
            *h += w_in.load(base + j);
        }
    }
    scratch.hidden.iter_mut().for_each(|h| *h *= inv);
    let loss = apply_targets(w_out, center, negatives, lr, scratch);
    for &c in context {
        add_row(w_in, c, &scratch.step, inv);
    }
    Some(loss)
}

/// Effective half-window: uniform in `1..=max_context`.
pub fn draw_window<R: Rng + ?Sized>(max_context: usize, rng: &mut R) -> usize {
    if max_context <= 1 {
        1
    } else {
        rng.gen_range(1..=max_context)
    }
}

/// Positions within distance `b` of `pos`, clipped to the sentence and
/// excluding `pos` itself.
pub fn context_positions(pos: usize, b: usize, len: usize) -> impl Iterator<Item = usize> {
    let lo = pos.saturating_sub(b);
    let hi = (pos + b + 1).min(len);
    (lo..hi).filter(move |&p| p != pos)
}

/// Draws up to `k` negatives, redrawing those equal to `target`.
pub fn draw_negatives<R: Rng + ?Sized>(
    noise: &NoiseDistribution,
    target: usize,
    k: usize,
    rng: &mut R,
    out: &mut Vec<usize>,
) {
    out.clear();
    for _ in 0..k {
        for _ in 0..NEGATIVE_REDRAWS {
            let n = noise.sample(rng);
            if n != target {
                out.push(n);
                break;
            }
        }
    }
}

/// Trained vectors with their vocabulary and settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub w_in: Vec<f32>,
    pub w_out: Vec<f32>,
    pub dim: usize,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
}

impl EmbeddingModel {
    pub fn input_row(&self, idx: usize) -> &[f32] {
        &self.w_in[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.w_in.iter().chain(&self.w_out).all(|x| x.is_finite())
    }

    /// Views the input matrix as a single-threaded parameter store.
    pub fn stores(&mut self) -> (&[Cell<f32>], &[Cell<f32>]) {
        (
            Cell::from_mut(&mut self.w_in[..]).as_slice_of_cells(),
            Cell::from_mut(&mut self.w_out[..]).as_slice_of_cells(),
        )
    }
}

/// Random input vectors uniform in `[-0.5/dim, 0.5/dim]`, zero output vectors.
pub fn init_model(vocab: &Vocabulary, config: &TrainConfig) -> Result<EmbeddingModel> {
    if vocab.is_empty() {
        return Err(Error::Config(
            "cannot initialise a model over an empty vocabulary".into(),
        ));
    }
    config.validate()?;
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 1.0 / dim as f32;
    let w_in = (0..vocab.len() * dim)
        .map(|_| (rng.gen::<f32>() - 0.5) * scale)
        .collect();
    Ok(EmbeddingModel {
        w_in,
        w_out: vec![0.0; vocab.len() * dim],
        dim,
        vocab: vocab.clone(),
        config: config.clone(),
    })
}

/// Counters and loss trace from one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// In-vocabulary tokens read, over all epochs.
    pub tokens_seen: u64,
    /// Tokens surviving subsampling, i.e. positions trained.
    pub tokens_trained: u64,
    /// Mean loss per trained token in each of [`LOSS_BUCKETS`] equal slices
    /// of training progress; `NaN` for empty slices.
    pub loss_trace: Vec<f64>,
}

impl TrainReport {
    /// Mean per-token loss over progress fraction `[from, to)`.
    pub fn mean_loss(&self, from: f64, to: f64) -> f64 {
        let n = self.loss_trace.len() as f64;
        let (a, b) = ((from * n).round() as usize, (to * n).round() as usize);
        let vals: Vec<f64> = self.loss_trace[a..b]
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Default, Clone)]
struct LossAcc {
    sum: [f64; LOSS_BUCKETS],
    n: [u64; LOSS_BUCKETS],
    trained: u64,
}

struct Shared<'a> {
    w_in: &'a [AtomicU32],
    w_out: &'a [AtomicU32],
    seen: &'a AtomicU64,
    planned: u64,
    keep: &'a [f64],
    noise: &'a NoiseDistribution,
    config: &'a TrainConfig,
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_worker(shared: &Shared<'_>, sentences: &[Vec<u32>], worker: usize) -> LossAcc {
    let cfg = shared.config;
    let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed, worker).wrapping_add(1));
    let mut scratch = Scratch::new(cfg.dim);
    let mut acc = LossAcc::default();
    let mut kept: Vec<usize> = Vec::new();
    let mut context: Vec<usize> = Vec::new();
    let mut negs: Vec<usize> = Vec::new();
    let lr0 = cfg.lr_initial;
    let floor = cfg.lr_floor();

    for _ in 0..cfg.epochs {
        for sent in sentences {
            let before = shared.seen.fetch_add(sent.len() as u64, Ordering::Relaxed);
            let progress = before as f64 / shared.planned as f64;
            let lr = (lr0 * (1.0 - progress)).max(floor) as f32;
            let bucket = ((progress * LOSS_BUCKETS as f64) as usize).min(LOSS_BUCKETS - 1);

            kept.clear();
            for &w in sent {
                let p = shared.keep[w as usize];
                if p >= 1.0 || rng.gen::<f64>() < p {
                    kept.push(w as usize);
                }
            }
            for pos in 0..kept.len() {
                let b = if cfg.fixed_window {
                    cfg.context
                } else {
                    draw_window(cfg.context, &mut rng)
                };
                let center = kept[pos];
                let mut loss = 0.0;
                match cfg.mode {
                    Mode::SkipGram => {
                        for c in context_positions(pos, b, kept.len()) {
                            let target = kept[c];
                            draw_negatives(
                                shared.noise,
                                target,
                                cfg.negatives,
                                &mut rng,
                                &mut negs,
                            );
                            loss += skipgram_step(
                                shared.w_in,
                                shared.w_out,
                                center,
                                target,
                                &negs,
                                lr,
                                &mut scratch,
                            );
                        }
                    }
                    Mode::Cbow => {
                        context.clear();
                        context.extend(context_positions(pos, b, kept.len()).map(|c| kept[c]));
                        draw_negatives(shared.noise, center, cfg.negatives, &mut rng, &mut negs);
                        loss += cbow_step(
                            shared.w_in,
                            shared.w_out,
                            &context,
                            center,
                            &negs,
                            lr,
                            &mut scratch,
                        )
                        .unwrap_or(0.0);
                    }
                }
                acc.sum[bucket] += loss;
                acc.n[bucket] += 1;
                acc.trained += 1;
            }
        }
    }
    acc
}

/// Splits `n` items into `parts` contiguous ranges of near-equal size.
fn partition(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.max(1);
    (0..parts)
        .map(|i| (i * n / parts)..((i + 1) * n / parts))
        .collect()
}

/// Trains a model over `corpus`. Out-of-vocabulary tokens are dropped
/// before subsampling and windowing.
pub fn train(
    corpus: &[Sentence],
    vocab: &Vocabulary,
    noise: &NoiseDistribution,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, TrainReport)> {
    config.validate()?;
    let encoded: Vec<Vec<u32>> = corpus
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .filter_map(|t| vocab.index_of(t).map(|i| i as u32))
                .collect::<Vec<u32>>()
        })
        .filter(|s| !s.is_empty())
        .collect();
    let retained: u64 = encoded.iter().map(|s| s.len() as u64).sum();
    if retained == 0 {
        return Err(Error::Training(
            "corpus has no tokens in the vocabulary".into(),
        ));
    }
    if noise.len() != vocab.len() {
        return Err(Error::Contract(
            "noise distribution does not match vocabulary".into(),
        ));
    }
    let model = init_model(vocab, config)?;

    let total = vocab.total_tokens().max(1);
    let keep: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&c| keep_probability(c, total, config.subsample_t))
        .collect();
    let to_atomic = |v: &[f32]| {
        v.iter()
            .map(|x| AtomicU32::new(x.to_bits()))
            .collect::<Vec<_>>()
    };
    let w_in = to_atomic(&model.w_in);
    let w_out = to_atomic(&model.w_out);
    let seen = AtomicU64::new(0);
    let shared = Shared {
        w_in: &w_in,
        w_out: &w_out,
        seen: &seen,
        planned: retained * config.epochs as u64,
        keep: &keep,
        noise,
        config,
    };

    let ranges = partition(encoded.len(), config.workers.min(encoded.len()));
    let accs: Vec<LossAcc> = if ranges.len() == 1 {
        vec![run_worker(&shared, &encoded, 0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = ranges
                .iter()
                .enumerate()
                .map(|(w, r)| {
                    let shared = &shared;
                    let part = &encoded[r.clone()];
                    s.spawn(move || run_worker(shared, part, w))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        })
    };

    let mut report = TrainReport {
        tokens_seen: seen.load(Ordering::Relaxed),
        ..Default::default()
    };
    let mut sum = [0.0; LOSS_BUCKETS];
    let mut n = [0u64; LOSS_BUCKETS];
    for a in &accs {
        report.tokens_trained += a.trained;
        for i in 0..LOSS_BUCKETS {
            sum[i] += a.sum[i];
            n[i] += a.n[i];
        }
    }
    report.loss_trace = sum
        .iter()
        .zip(&n)
        .map(|(&s, &k)| if k == 0 { f64::NAN } else { s / k as f64 })
        .collect();

    let from_atomic = |v: Vec<AtomicU32>| {
        v.into_iter()
            .map(|a| f32::from_bits(a.into_inner()))
            .collect::<Vec<f32>>()
    };
    let model = EmbeddingModel {
        w_in: from_atomic(w_in),
        w_out: from_atomic(w_out),
        ..model
    };
    if !model.is_finite() {
        return Err(Error::Training(
            "non-finite parameters after training; learning rate too high?".into(),
        ));
    }
    Ok((model, report))
}

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};

use super::{Result, W2vConfig, W2vError, WordVectors};
use crate::corpus::{build_vocabulary, Corpus, CorpusError, Vocabulary};
use crate::rng::derive_seed;

/// Flat row-major parameter table accessed element-wise, so the same kernel
/// runs over plain vectors and over shared atomics.
pub trait WeightTable<T> {
    fn get(&self, i: usize) -> T;
    fn add(&mut self, i: usize, delta: T);
}

impl<T: Float> WeightTable<T> for [T] {
    #[inline]
    fn get(&self, i: usize) -> T {
        self[i]
    }

    #[inline]
    fn add(&mut self, i: usize, delta: T) {
        self[i] = self[i] + delta;
    }
}

/// Unsynchronized shared table: relaxed load/store, so concurrent updates
/// to the same weight may be lost.
struct SharedTable<'a>(&'a [AtomicU32]);

impl WeightTable<f32> for SharedTable<'_> {
    #[inline]
    fn get(&self, i: usize) -> f32 {
        f32::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn add(&mut self, i: usize, delta: f32) {
        let v = self.get(i) + delta;
        self.0[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

/// A single CBOW prediction: the centre word `target` from the mean of the
/// `context` input vectors, against sampled `negatives`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CbowExample {
    pub context: Vec<usize>,
    pub target: usize,
    pub negatives: Vec<usize>,
}

#[inline]
fn softplus<T: Float>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One SGD step on the negative-sampling loss
/// `-log σ(out_t·h) - Σ_n log σ(-out_n·h)`, with `h` the context mean.
///
/// Every gradient is computed from pre-step values, so with distinct
/// output rows the applied update is exactly `-lr * ∇loss`. Returns the
/// loss before the step.
pub fn cbow_step<T, I, O>(
    input: &mut I,
    output: &mut O,
    dim: usize,
    ex: &CbowExample,
    lr: T,
    h: &mut [T],
    grad_h: &mut [T],
) -> T
where
    T: Float,
    I: WeightTable<T> + ?Sized,
    O: WeightTable<T> + ?Sized,
{
    debug_assert!(!ex.context.is_empty());
    let inv_c = T::one() / T::from(ex.context.len()).unwrap();
    h.iter_mut().for_each(|x| *x = T::zero());
    for &c in &ex.context {
        let base = c * dim;
        for (k, hk) in h.iter_mut().enumerate() {
            *hk = *hk + input.get(base + k);
        }
    }
    h.iter_mut().for_each(|x| *x = *x * inv_c);
    grad_h.iter_mut().for_each(|x| *x = T::zero());

    let mut loss = T::zero();
    let targets =
        std::iter::once((ex.target, T::one())).chain(ex.negatives.iter().map(|&n| (n, T::zero())));
    for (row, label) in targets {
        let base = row * dim;
        let mut score = T::zero();
        for (k, &hk) in h.iter().enumerate() {
            score = score + hk * output.get(base + k);
        }
        loss = loss
            + if label > T::zero() {
                softplus(-score)
            } else {
                softplus(score)
            };
        // descent direction scale: (label - σ(score))
        let g = (label - sigmoid(score)) * lr;
        for k in 0..dim {
            grad_h[k] = grad_h[k] + g * output.get(base + k);
            output.add(base + k, g * h[k]);
        }
    }
    for &c in &ex.context {
        let base = c * dim;
        for (k, &gk) in grad_h.iter().enumerate() {
            input.add(base + k, gk * inv_c);
        }
    }
    loss
}

/// Unigram counts raised to 0.75 and renormalized.
pub fn noise_distribution(vocab: &Vocabulary) -> Vec<f64> {
    let raw: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&c| (c as f64).powf(0.75))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Output of training: the input vectors plus the output table and the
/// mean per-window loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub vectors: WordVectors,
    pub output: Vec<f32>,
    pub epoch_losses: Vec<f64>,
}

fn encode_docs(corpus: &Corpus, vocab: &Vocabulary) -> Vec<Vec<usize>> {
    corpus
        .docs()
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .filter_map(|t| vocab.index_of(t))
                .collect::<Vec<_>>()
        })
        .filter(|ids| ids.len() >= 2)
        .collect()
}

struct Schedule {
    initial: f32,
    min: f32,
    total: usize,
}

impl Schedule {
    fn lr(&self, done: usize) -> f32 {
        let progress = (done as f32 / self.total as f32).min(1.0);
        (self.initial - (self.initial - self.min) * progress).max(self.min)
    }
}

/// Runs every window of `doc` through `cbow_step`, returning summed loss.
#[allow(clippy::too_many_arguments)]
fn train_doc<I, O>(
    input: &mut I,
    output: &mut O,
    doc: &[usize],
    cfg: &W2vConfig,
    sampler: &WeightedIndex<f64>,
    rng: &mut ChaCha8Rng,
    lr: impl Fn() -> f32,
    scratch: &mut (Vec<f32>, Vec<f32>, CbowExample),
) -> f64
where
    I: WeightTable<f32> + ?Sized,
    O: WeightTable<f32> + ?Sized,
{
    let (h, grad_h, ex) = scratch;
    let mut loss = 0.0;
    for t in 0..doc.len() {
        let lo = t.saturating_sub(cfg.window);
        let hi = (t + cfg.window + 1).min(doc.len());
        ex.context.clear();
        ex.context
            .extend((lo..hi).filter(|&j| j != t).map(|j| doc[j]));
        ex.target = doc[t];
        ex.negatives.clear();
        for _ in 0..cfg.negative_samples {
            let n = sampler.sample(rng);
            if n != ex.target {
                ex.negatives.push(n);
            }
        }
        loss += f64::from(cbow_step(input, output, cfg.dim, ex, lr(), h, grad_h));
    }
    loss
}

/// Trains CBOW vectors on the tokenized corpus.
///
/// Out-of-vocabulary tokens are removed before windowing; documents with
/// fewer than two retained tokens contribute nothing. With
/// `config.threads == 1` the result is bit-reproducible for a fixed seed.
pub fn train_cbow(corpus: &Corpus, config: &W2vConfig) -> Result<TrainedModel> {
    config.validate()?;
    let vocab = build_vocabulary(corpus, config.min_count).map_err(|e| match e {
        CorpusError::EmptyVocabulary { .. } => W2vError::EmptyVocabulary,
        other => W2vError::Config(other.to_string()),
    })?;
    let docs = encode_docs(corpus, &vocab);
    let per_epoch: usize = docs.iter().map(Vec::len).sum();
    if per_epoch == 0 {
        return Err(W2vError::NoTrainingWindows);
    }
    let dim = config.dim;
    let sampler = WeightedIndex::new(noise_distribution(&vocab)).expect("positive weights");
    let schedule = Schedule {
        initial: config.initial_lr,
        min: config.min_lr,
        total: per_epoch * config.epochs,
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let bound = 0.5 / dim as f32;
    let mut input: Vec<f32> = (0..vocab.len() * dim)
        .map(|_| init_rng.random_range(-bound..bound))
        .collect();
    let mut output = vec![0.0f32; vocab.len() * dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    if config.threads == 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
        let mut scratch = (vec![0.0; dim], vec![0.0; dim], empty_example());
        let mut done = 0usize;
        for _ in 0..config.epochs {
            let mut loss = 0.0;
            for doc in &docs {
                let start = done;
                let counter = std::cell::Cell::new(start);
                loss += train_doc(
                    input.as_mut_slice(),
                    output.as_mut_slice(),
                    doc,
                    config,
                    &sampler,
                    &mut rng,
                    || {
                        let d = counter.get();
                        counter.set(d + 1);
                        schedule.lr(d)
                    },
                    &mut scratch,
                );
                done += doc.len();
            }
            epoch_losses.push(loss / per_epoch as f64);
        }
    } else {
        let shared_in: Vec<AtomicU32> = input.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let shared_out: Vec<AtomicU32> =
            output.iter().map(|x| AtomicU32::new(x.to_bits())).collect();
        let done = AtomicUsize::new(0);
        let threads = config.threads.min(docs.len());
        for epoch in 0..config.epochs {
            let chunk = docs.len().div_ceil(threads);
            let losses: Vec<f64> = std::thread::scope(|s| {
                let handles: Vec<_> = docs
                    .chunks(chunk)
                    .enumerate()
                    .map(|(tid, part)| {
                        let (shared_in, shared_out, done) = (&shared_in, &shared_out, &done);
                        let (sampler, schedule) = (&sampler, &schedule);
                        s.spawn(move || {
                            let stream = (epoch * threads + tid) as u64 + 2;
                            let mut rng =
                                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stream));
                            let mut scratch = (vec![0.0; dim], vec![0.0; dim], empty_example());
                            let mut inp = SharedTable(shared_in);
                            let mut out = SharedTable(shared_out);
                            let mut loss = 0.0;
                            for doc in part {
                                loss += train_doc(
                                    &mut inp,
                                    &mut out,
                                    doc,
                                    config,
                                    sampler,
                                    &mut rng,
                                    || schedule.lr(done.fetch_add(1, Ordering::Relaxed)),
                                    &mut scratch,
                                );
                            }
                            loss
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            });
            epoch_losses.push(losses.iter().sum::<f64>() / per_epoch as f64);
        }
        input = shared_in
            .into_iter()
            .map(|a| f32::from_bits(a.into_inner()))
            .collect();
        output = shared_out
            .into_iter()
            .map(|a| f32::from_bits(a.into_inner()))
            .collect();
    }

    if input.iter().chain(&output).any(|x| !x.is_finite()) {
        return Err(W2vError::Diverged);
    }
    Ok(TrainedModel {
        vectors: WordVectors::new(vocab, dim, input),
        output,
        epoch_losses,
    })
}

fn empty_example() -> CbowExample {
    CbowExample {
        context: Vec::new(),
        target: 0,
        negatives: Vec::new(),
    }
}

//! Optimisation: RMSProp over mini-batch-averaged gradients, the two
//! curricula, line-concatenation augmentation and the epoch loop.

use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{stack_lines, Example, Sample};
use crate::encoder::DropoutMode;
use crate::error::{Error, Result};
use crate::metrics::levenshtein;
use crate::model::{greedy_transcribe, Head, Model, ModelConfig};
use crate::params::Parameterized;
use crate::tensor::{ParamSet, Real, Tensor};
use crate::vocab::{LabelSeq, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curriculum {
    None,
    LengthSampling,
    TargetGrowth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub bptt_window: usize,
    pub curriculum: Curriculum,
    pub target_growth_n: usize,
    /// Length threshold of the first epoch under `length_sampling`.
    pub length_l0: f64,
    /// Threshold growth per epoch.
    pub length_dl: f64,
    /// Decay length of the weight above the threshold.
    pub length_tau: f64,
    pub seed: u64,
    pub max_epochs: usize,
    pub head: Head,
    /// Epochs trained with the CTC head alone before switching to `head`.
    pub ctc_pretrain_epochs: usize,
    /// Max-norm gradient clipping; off when absent.
    pub clip_norm: Option<f64>,
    /// Attention decoding cap during validation; 0 picks twice the longest
    /// validation target plus 5.
    pub max_decode_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 8,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            bptt_window: 30,
            curriculum: Curriculum::None,
            target_growth_n: 50,
            length_l0: 60.0,
            length_dl: 60.0,
            length_tau: 30.0,
            seed: 0,
            max_epochs: 50,
            head: Head::Attention,
            ctc_pretrain_epochs: 0,
            clip_norm: None,
            max_decode_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.bptt_window == 0 {
            return bad("bptt_window must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rms_decay) {
            return bad(format!(
                "rms_decay must lie in [0, 1), got {}",
                self.rms_decay
            ));
        }
        if !(self.rms_epsilon > 0.0) {
            return bad(format!(
                "rms_epsilon must be positive, got {}",
                self.rms_epsilon
            ));
        }
        if self.target_growth_n == 0 {
            return bad("target_growth_n must be at least 1".into());
        }
        if !(self.length_tau > 0.0) {
            return bad(format!(
                "length_tau must be positive, got {}",
                self.length_tau
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }

    /// Head trained during `epoch` (1-based).
    pub fn head_at(&self, epoch: usize) -> Head {
        if epoch <= self.ctc_pretrain_epochs {
            Head::Ctc
        } else {
            self.head
        }
    }
}

/// Model and training sections of a configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

/// Running mean squares, one tensor per parameter in visiting order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub names: Vec<String>,
    pub cache: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new<P: Parameterized<T>>(params: &P) -> Self {
        let (mut names, mut cache) = (Vec::new(), Vec::new());
        params.visit(&mut |n, t| {
            names.push(n);
            cache.push(Tensor::zeros(t.shape()));
        });
        OptimizerState { names, cache }
    }

    /// Caches keyed `opt.<parameter>`.
    pub fn to_param_set(&self) -> ParamSet<T> {
        self.names
            .iter()
            .zip(&self.cache)
            .map(|(n, t)| (format!("opt.{n}"), t.clone()))
            .collect()
    }

    /// Restores caches for the layout of `params` from `opt.<name>` entries.
    pub fn from_param_set<P: Parameterized<T>>(params: &P, ps: &ParamSet<T>) -> Result<Self> {
        let mut st = Self::new(params);
        for (n, c) in st.names.iter().zip(st.cache.iter_mut()) {
            let src = ps
                .get(&format!("opt.{n}"))
                .ok_or_else(|| Error::Config(format!("optimizer state lacks opt.{n}")))?;
            if src.shape() != c.shape() {
                return Err(Error::dim("optimizer state", src.shape(), c.shape()));
            }
            *c = src.clone();
        }
        Ok(st)
    }
}

/// `cache = rho cache + (1 - rho) g^2`, then `theta -= lr g / sqrt(cache + eps)`.
/// Nothing is modified if any gradient is non-finite.
pub fn rmsprop_step<T: Real, P: Parameterized<T>>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState<T>,
    config: &TrainConfig,
) -> Result<()> {
    let mut gs: Vec<(String, &Tensor<T>)> = Vec::new();
    grads.visit(&mut |n, t| gs.push((n, t)));
    if gs.len() != state.cache.len() {
        return Err(Error::Config(format!(
            "optimizer holds {} tensors, gradients have {}",
            state.cache.len(),
            gs.len()
        )));
    }
    for ((name, g), c) in gs.iter().zip(&state.cache) {
        if g.shape() != c.shape() {
            return Err(Error::dim("rmsprop_step", g.shape(), c.shape()));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    let (rho, lr, eps) = (
        T::lit(config.rms_decay),
        T::lit(config.learning_rate),
        T::lit(config.rms_epsilon),
    );
    let one = T::one();
    let mut k = 0;
    params.visit_mut(&mut |_, theta| {
        let (g, cache) = (gs[k].1.data(), state.cache[k].data_mut());
        for ((th, &gv), cv) in theta.data_mut().iter_mut().zip(g).zip(cache.iter_mut()) {
            *cv = rho * *cv + (one - rho) * gv * gv;
            *th -= lr * gv / (*cv + eps).sqrt();
        }
        k += 1;
    });
    Ok(())
}

/// The first `min(n * epoch, |target|)` labels followed by `eos`.
pub fn curriculum_target_growth(target: &[usize], epoch: usize, n: usize, eos: usize) -> LabelSeq {
    let keep = n.saturating_mul(epoch.max(1)).min(target.len());
    let mut out = target[..keep].to_vec();
    out.push(eos);
    out
}

/// Sampling weight `exp(-max(0, len - L(epoch)) / tau)` with
/// `L(epoch) = l0 + dl (epoch - 1)`.
pub fn length_weight(len: usize, epoch: usize, config: &TrainConfig) -> f64 {
    let threshold = config.length_l0 + config.length_dl * (epoch.max(1) - 1) as f64;
    (-(len as f64 - threshold).max(0.0) / config.length_tau).exp()
}

/// `draws` dataset indices sampled with replacement by [`length_weight`].
pub fn curriculum_length_sampling(
    lengths: &[usize],
    epoch: usize,
    draws: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let weights: Vec<f64> = lengths
        .iter()
        .map(|&l| length_weight(l, epoch, config))
        .collect();
    let dist =
        WeightedIndex::new(&weights).map_err(|e| Error::Domain(format!("length sampling: {e}")))?;
    Ok((0..draws).map(|_| dist.sample(rng)).collect())
}

/// Every run of consecutive lines of one page stacked into one sample, in
/// order of start line then length; `n` lines give `n (n + 1) / 2` samples.
pub fn augment_concatenations(page: &[Sample], gap_px: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(page.len() * (page.len() + 1) / 2);
    for start in 0..page.len() {
        for end in start + 1..=page.len() {
            let mut s = stack_lines(&page[start..end], gap_px)?;
            s.meta.augmentation = format!("lines {}-{}", start + 1, end);
            out.push(s);
        }
    }
    Ok(out)
}

/// One record of the metric log, fields in this order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent when there is no validation data.
    pub val_cer: Option<f64>,
    /// Not part of the serialized log, which must be reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Everything needed to continue training after `epoch` completed epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: RunConfig,
    pub epoch: usize,
    pub model: Model<f32>,
    pub opt: OptimizerState<f32>,
}

impl TrainState {
    pub fn fresh(config: RunConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let model = Model::seeded(vocab, config.model.clone(), config.train.seed)?;
        let opt = OptimizerState::new(&model);
        Ok(TrainState {
            config,
            epoch: 0,
            model,
            opt,
        })
    }
}

struct Encoded<'a> {
    ex: &'a Example,
    labels: LabelSeq,
}

fn encode_all<'a>(vocab: &Vocab, data: &'a [Example]) -> Result<Vec<Encoded<'a>>> {
    data.iter()
        .map(|ex| {
            if ex.transcript.is_empty() {
                return Err(Error::Domain(format!(
                    "example {} has an empty transcript",
                    ex.id
                )));
            }
            Ok(Encoded {
                ex,
                labels: vocab.encode(&ex.transcript)?,
            })
        })
        .collect()
}

/// SplitMix64 finaliser, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(epoch as u64);
    r
}

/// Example order of `epoch`: a shuffle, or weighted draws under
/// `length_sampling`.
pub fn epoch_order(lengths: &[usize], epoch: usize, config: &TrainConfig) -> Result<Vec<usize>> {
    let mut rng = epoch_rng(config.seed, epoch);
    match config.curriculum {
        Curriculum::LengthSampling => {
            curriculum_length_sampling(lengths, epoch, lengths.len(), config, &mut rng)
        }
        Curriculum::None | Curriculum::TargetGrowth => {
            let mut order: Vec<usize> = (0..lengths.len()).collect();
            order.shuffle(&mut rng);
            Ok(order)
        }
    }
}

fn clip(grad: &mut Model<f32>, max_norm: f64) {
    let mut sq = 0.0f64;
    grad.visit(&mut |_, t| {
        sq += t
            .data()
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
    });
    let norm = sq.sqrt();
    if norm > max_norm {
        grad.scale_all((max_norm / norm) as f32);
    }
}

/// Greedy transcription with the decoder that `head` trains.
pub fn transcribe(
    model: &Model<f32>,
    image: &Tensor<f32>,
    head: Head,
    max_steps: usize,
) -> Result<String> {
    if head == Head::Ctc {
        model.ctc_transcribe(image)
    } else {
        Ok(greedy_transcribe(image, model, max_steps)?.0)
    }
}

/// Decoding cap for `data` when `configured` is 0.
pub fn decode_steps(configured: usize, data: &[Example]) -> usize {
    if configured > 0 {
        return configured;
    }
    2 * data
        .iter()
        .map(|e| e.transcript.chars().count())
        .max()
        .unwrap_or(0)
        + 5
}

/// Character-weighted CER of `model` on `data`.
pub fn evaluate(model: &Model<f32>, data: &[Example], head: Head, max_steps: usize) -> Result<f64> {
    let (mut edits, mut chars) = (0usize, 0usize);
    for ex in data {
        let hyp = transcribe(model, &ex.image, head, max_steps)?;
        edits += levenshtein(&hyp, &ex.transcript);
        chars += ex.transcript.chars().count();
    }
    if chars == 0 {
        return Err(Error::Domain(
            "evaluation set has no reference characters".into(),
        ));
    }
    Ok(edits as f64 / chars as f64)
}

/// Runs epoch `state.epoch + 1` through `max_epochs`, calling `on_epoch`
/// after each one.
pub fn train<F>(
    mut state: TrainState,
    train: &[Example],
    val: &[Example],
    mut on_epoch: F,
) -> Result<TrainState>
where
    F: FnMut(&TrainState, &EpochMetrics) -> Result<()>,
{
    state.config.validate()?;
    if train.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let cfg = state.config.train.clone();
    let vocab = state.model.vocab.clone();
    let data = encode_all(&vocab, train)?;
    encode_all(&vocab, val)?;
    let lengths: Vec<usize> = data.iter().map(|d| d.labels.len()).collect();
    // the CTC head only models single lines
    let single_lines: Vec<usize> = (0..data.len())
        .filter(|&i| data[i].ex.n_lines == 1)
        .collect();
    let everything: Vec<usize> = (0..data.len()).collect();
    let steps = decode_steps(cfg.max_decode_steps, val);
    let mut grad = state.model.zeros_like();
    while state.epoch < cfg.max_epochs {
        let epoch = state.epoch + 1;
        let started = Instant::now();
        let head = cfg.head_at(epoch);
        let pool = if head == Head::Ctc && !single_lines.is_empty() {
            &single_lines
        } else {
            &everything
        };
        let pool_lengths: Vec<usize> = pool.iter().map(|&i| lengths[i]).collect();
        let order: Vec<usize> = epoch_order(&pool_lengths, epoch, &cfg)?
            .into_iter()
            .map(|k| pool[k])
            .collect();
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.fill_zero();
            for (k, &i) in batch.iter().enumerate() {
                let d = &data[i];
                let pos = (b * cfg.batch_size + k) as u64;
                let mode = DropoutMode::Train {
                    seed: mix(cfg.seed
                        ^ mix(epoch as u64)
                        ^ mix(pos.wrapping_mul(0x2545_f491_4f6c_dd1d))),
                };
                let grown;
                let attn: &[usize] = if cfg.curriculum == Curriculum::TargetGrowth {
                    grown = curriculum_target_growth(
                        &d.labels,
                        epoch,
                        cfg.target_growth_n,
                        vocab.eos(),
                    );
                    &grown[..grown.len() - 1]
                } else {
                    &d.labels
                };
                let loss = state.model.loss_and_grad_targets(
                    &d.ex.image,
                    head.ctc().then_some(&d.labels[..]),
                    head.attention().then_some(attn),
                    mode,
                    cfg.bptt_window,
                    &mut grad,
                )?;
                let l = loss.total();
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss of example {} is {l}",
                        d.ex.id
                    )));
                }
                total += l;
            }
            grad.scale_all(1.0 / batch.len() as f32);
            if let Some(c) = cfg.clip_norm {
                clip(&mut grad, c);
            }
            rmsprop_step(&mut state.model, &grad, &mut state.opt, &cfg)?;
        }
        let val_cer = if val.is_empty() {
            None
        } else {
            Some(evaluate(&state.model, val, head, steps)?)
        };
        state.epoch = epoch;
        let metrics = EpochMetrics {
            epoch,
            train_loss: total / order.len() as f64,
            val_cer,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&state, &metrics)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{render_line, Jitter};
    use crate::encoder::EncoderConfig;
    use proptest::prelude::*;

    fn scalar_model<T: Real>(v: f64) -> crate::encoder::EncoderStack<T> {
        let config = EncoderConfig {
            mdlstm_units: vec![1],
            conv_features: vec![],
            feature_dim: 1,
            ..EncoderConfig::default()
        };
        let mut s =
            crate::encoder::EncoderStack::new(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        s.visit_mut(&mut |_, t| t.fill(T::lit(v)));
        s
    }

    #[test]
    fn rmsprop_zero_gradient_decays_the_cache_only() {
        let mut p = scalar_model::<f32>(0.5);
        let before = p.clone();
        let mut g = p.clone();
        g.fill_zero();
        let mut st = OptimizerState::new(&p);
        for c in &mut st.cache {
            c.fill(2.0);
        }
        rmsprop_step(&mut p, &g, &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
        assert!(st
            .cache
            .iter()
            .all(|c| c.data().iter().all(|&v| (v - 1.8).abs() < 1e-6)));
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let mut p = scalar_model::<f32>(0.0);
        let g = scalar_model::<f32>(1.0);
        let mut st = OptimizerState::new(&p);
        rmsprop_step(&mut p, &g, &mut st, &TrainConfig::default()).unwrap();
        let want = -0.001 / (0.1f64 + 1e-8).sqrt();
        assert!((want + 0.0031623).abs() < 1e-7);
        p.visit(&mut |_, t| assert!(t.data().iter().all(|&v| (v as f64 - want).abs() < 1e-9)));
    }

    #[test]
    fn rmsprop_matches_scalar_iteration() {
        let cfg = TrainConfig::default();
        let mut p = scalar_model::<f64>(0.25);
        let g = scalar_model::<f64>(0.7);
        let mut st = OptimizerState::new(&p);
        let (mut theta, mut cache) = (0.25f64, 0.0f64);
        for _ in 0..3 {
            rmsprop_step(&mut p, &g, &mut st, &cfg).unwrap();
            cache = 0.9 * cache + 0.1 * 0.7 * 0.7;
            theta -= 0.001 * 0.7 / (cache + 1e-8).sqrt();
        }
        p.visit(&mut |_, t| assert!(t.data().iter().all(|&v| (v - theta).abs() < 1e-12)));
    }

    #[test]
    fn rmsprop_rejects_non_finite_and_names_it() {
        let mut p = scalar_model::<f32>(0.0);
        let before = p.clone();
        let mut g = scalar_model::<f32>(1.0);
        g.out_b.data_mut()[0] = f32::NAN;
        let mut st = OptimizerState::new(&p);
        let err = rmsprop_step(&mut p, &g, &mut st, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("encoder.out.b"), "{err}");
        assert_eq!(p, before);
    }

    #[test]
    fn target_growth_examples() {
        let para: Vec<usize> = (0..450).map(|i| i % 10).collect();
        let t1 = curriculum_target_growth(&para, 1, 50, 99);
        assert_eq!(t1.len(), 51);
        assert_eq!(&t1[..50], &para[..50]);
        assert_eq!(t1[50], 99);
        let t2 = curriculum_target_growth(&para, 2, 50, 99);
        assert_eq!(&t2[..100], &para[..100]);
        assert_eq!(curriculum_target_growth(&para, 9, 50, 99)[..450], para[..]);
        let short: Vec<usize> = (0..80).collect();
        assert_eq!(curriculum_target_growth(&short, 2, 50, 99).len(), 81);
    }

    proptest! {
        #[test]
        fn target_growth_is_prefix_monotone(
            target in proptest::collection::vec(0usize..10, 0..400),
            epoch in 1usize..20,
            n in 1usize..80,
        ) {
            let a = curriculum_target_growth(&target, epoch, n, 10);
            let b = curriculum_target_growth(&target, epoch + 1, n, 10);
            prop_assert_eq!(*a.last().unwrap(), 10);
            prop_assert!(b.len() >= a.len());
            prop_assert_eq!(&a[..a.len() - 1], &b[..a.len() - 1]);
            prop_assert_eq!(&a[..a.len() - 1], &target[..(n * epoch).min(target.len())]);
        }
    }

    #[test]
    fn length_weights() {
        let cfg = TrainConfig::default();
        assert_eq!(length_weight(50, 1, &cfg), 1.0);
        let ratio = length_weight(450, 1, &cfg) / length_weight(50, 1, &cfg);
        assert!((ratio - (-13f64).exp()).abs() < 1e-15);
        assert!(ratio < 2.3e-6 && ratio > 2.2e-6);
        // by epoch 7 the threshold has reached 420
        assert_eq!(length_weight(420, 7, &cfg), 1.0);
    }

    #[test]
    fn short_targets_sample_uniformly() {
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws =
            curriculum_length_sampling(&[5, 10, 20, 59], 1, 40_000, &cfg, &mut rng).unwrap();
        for k in 0..4 {
            let f = draws.iter().filter(|&&d| d == k).count() as f64 / 40_000.0;
            assert!((f - 0.25).abs() < 0.01, "{k}: {f}");
        }
    }

    #[test]
    fn sampled_frequencies_follow_weights() {
        let cfg = TrainConfig::default();
        let lengths = [40, 70, 90, 100, 130];
        let w: Vec<f64> = lengths.iter().map(|&l| length_weight(l, 1, &cfg)).collect();
        let z: f64 = w.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let draws = curriculum_length_sampling(&lengths, 1, n, &cfg, &mut rng).unwrap();
        for (k, wk) in w.iter().enumerate() {
            let f = draws.iter().filter(|&&d| d == k).count() as f64 / n as f64;
            let p = wk / z;
            assert!((f - p).abs() <= 0.02 * p, "{k}: {f} vs {p}");
        }
    }

    #[test]
    fn concatenation_counts_and_order() {
        let page: Vec<Sample> = ["12", "345", "6"]
            .iter()
            .map(|t| render_line(t, 2, Jitter::OFF, 0).unwrap())
            .collect();
        let out = augment_concatenations(&page, 4).unwrap();
        let texts: Vec<&str> = out.iter().map(|s| s.transcript.as_str()).collect();
        assert_eq!(texts, ["12", "12 345", "12 345 6", "345", "345 6", "6"]);
        assert_eq!(out[2].meta.n_lines, 3);
        assert_eq!(augment_concatenations(&page[..1], 4).unwrap().len(), 1);
        let nine: Vec<Sample> = (0..9).map(|_| page[2].clone()).collect();
        assert_eq!(augment_concatenations(&nine, 4).unwrap().len(), 45);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let mut c = RunConfig::default();
        c.train.curriculum = Curriculum::TargetGrowth;
        c.train.clip_norm = Some(100.0);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
        let parsed =
            RunConfig::from_toml("[train]\nbatch_size = 4\ncurriculum = \"length_sampling\"\n")
                .unwrap();
        assert_eq!(parsed.train.batch_size, 4);
        assert_eq!(parsed.train.curriculum, Curriculum::LengthSampling);
        for bad in [
            "[train]\nbatch_size = 0\n",
            "[train]\nbptt_window = 0\n",
            "[train]\nlearning_rate = -1.0\n",
            "[train]\nbogus = 1\n",
            "[model]\nstate_units = 0\n",
        ] {
            assert!(
                matches!(RunConfig::from_toml(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn pretraining_switches_heads() {
        let cfg = TrainConfig {
            ctc_pretrain_epochs: 2,
            head: Head::Joint,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.head_at(1), Head::Ctc);
        assert_eq!(cfg.head_at(2), Head::Ctc);
        assert_eq!(cfg.head_at(3), Head::Joint);
    }

    #[test]
    fn epoch_orders_are_seeded_permutations() {
        let cfg = TrainConfig::default();
        let lengths = vec![3; 20];
        let a = epoch_order(&lengths, 1, &cfg).unwrap();
        assert_eq!(a, epoch_order(&lengths, 1, &cfg).unwrap());
        assert_ne!(a, epoch_order(&lengths, 2, &cfg).unwrap());
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }
}

//! The complete recognizer: a shared encoder feeding a collapse + CTC line
//! head and an attention decoder that emits characters until EOS.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{summarize_raw, AttentionNet, AttnImage, AttnStepCache};
use crate::ctc::{best_path_decode, ctc_loss};
use crate::decoder::{CharDecoder, DecoderOut, DecoderState, LstmCache, StateLstm};
use crate::encoder::{collapse, DropoutMode, EncoderConfig, EncoderStack};
use crate::error::{Error, Result};
use crate::kernels::{axpy, dot, gemm, MatMut, MatRef};
use crate::mdlstm::{col_sum_acc, GATES};
use crate::ops::{argmax, softmax_into};
use crate::params::Parameterized;
use crate::tensor::{Real, Tensor};
use crate::vocab::{LabelSeq, Vocab};

/// Sizes of the heads on top of the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// MDLSTM units per direction in the attention scorer.
    pub attention_units: usize,
    /// Width of the state projection appended to every scorer input.
    pub state_projection: usize,
    pub state_units: usize,
    pub decoder_hidden: usize,
    /// Weight range of the head parameters; biases start at zero.
    pub init_range: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            attention_units: 16,
            state_projection: 32,
            state_units: 128,
            decoder_hidden: 128,
            init_range: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.attention_units == 0 || self.state_units == 0 || self.decoder_hidden == 0 {
            return Err(Error::Config(
                "attention, state and decoder sizes must be positive".into(),
            ));
        }
        if !(self.init_range >= 0.0) {
            return Err(Error::Config(format!(
                "init_range must be non-negative, got {}",
                self.init_range
            )));
        }
        Ok(())
    }
}

/// Which output heads contribute to a loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Attention,
    Ctc,
    /// Sum of both losses.
    Joint,
}

impl Head {
    pub fn attention(self) -> bool {
        matches!(self, Head::Attention | Head::Joint)
    }

    pub fn ctc(self) -> bool {
        matches!(self, Head::Ctc | Head::Joint)
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Attention => "attention",
            Head::Ctc => "ctc",
            Head::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Head::Attention, Head::Ctc, Head::Joint]
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown head {s:?} (attention|ctc|joint)")))
    }
}

/// Per-head negative log-likelihoods; unused heads report zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub attention: f64,
    pub ctc: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.attention + self.ctc
    }
}

/// What one decoder step produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<T> {
    /// Distribution over characters and EOS.
    pub probs: Tensor<T>,
    /// `H' x W'` attention map.
    pub alpha: Tensor<T>,
    pub g: Tensor<T>,
    /// Argmax of `probs`.
    pub emitted: usize,
}

impl<T: Real> StepOutput<T> {
    /// Attention-weighted mean `(row, col)` in feature-map cells.
    pub fn center_of_mass(&self) -> (f64, f64) {
        let w = self.alpha.shape()[1];
        let (mut r, mut c) = (0.0, 0.0);
        for (q, &a) in self.alpha.data().iter().enumerate() {
            r += a.as_f64() * (q / w) as f64;
            c += a.as_f64() * (q % w) as f64;
        }
        (r, c)
    }
}

/// Per-step record of a decoder run.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace<T> {
    pub map_height: usize,
    pub map_width: usize,
    pub steps: Vec<StepOutput<T>>,
    /// Set when decoding stopped at the step cap without emitting EOS.
    pub truncated: bool,
}

impl<T: Real> AttentionTrace<T> {
    pub fn emitted(&self) -> LabelSeq {
        self.steps.iter().map(|s| s.emitted).collect()
    }
}

/// Encoder plus both heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub vocab: Vocab,
    pub config: ModelConfig,
    pub encoder: EncoderStack<T>,
    /// `vocab.size() x F`; column indices coincide with vocabulary labels,
    /// so the last one is the blank.
    pub ctc_w: Tensor<T>,
    pub ctc_b: Tensor<T>,
    pub attention: AttentionNet<T>,
    pub state: StateLstm<T>,
    pub decoder: CharDecoder<T>,
}

struct RunState<T> {
    s: Vec<T>,
    c: Vec<T>,
    alpha: Vec<T>,
}

impl<T: Real> RunState<T> {
    fn initial(state_units: usize, npix: usize) -> Self {
        RunState {
            s: vec![T::zero(); state_units],
            c: vec![T::zero(); state_units],
            alpha: vec![T::lit(1.0 / npix as f64); npix],
        }
    }
}

struct StepRecord<T> {
    alpha_prev: Vec<T>,
    s_prev: Vec<T>,
    c_prev: Vec<T>,
    attn: AttnStepCache<T>,
    alpha: Vec<T>,
    g: Vec<T>,
    lstm: LstmCache<T>,
    s: Vec<T>,
    out: DecoderOut<T>,
}

impl<T: Real> StepRecord<T> {
    fn next_state(&self) -> RunState<T> {
        RunState {
            s: self.s.clone(),
            c: self.lstm.c.clone(),
            alpha: self.alpha.clone(),
        }
    }

    fn output(&self, h: usize, w: usize) -> StepOutput<T> {
        StepOutput {
            probs: Tensor::from_vec(&[self.out.probs.len()], self.out.probs.clone())
                .expect("non-empty"),
            alpha: Tensor::from_vec(&[h, w], self.alpha.clone()).expect("map size"),
            g: Tensor::from_vec(&[self.g.len()], self.g.clone()).expect("non-empty"),
            emitted: argmax(&self.out.probs),
        }
    }
}

fn feature_dims<T: Real>(e: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match e.shape() {
        &[h, w, f] => Ok((h, w, f)),
        s => Err(Error::dim("decoder features", s, &[0, 0, 0])),
    }
}

impl<T: Real> Model<T> {
    pub fn new<R: Rng + ?Sized>(vocab: Vocab, config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let r = config.init_range;
        let encoder = EncoderStack::new(&config.encoder, rng)?;
        let f = encoder.feature_dim();
        let (s, pd) = (config.state_units, config.state_projection);
        Ok(Model {
            ctc_w: Tensor::uniform(&[vocab.size(), f], r, rng),
            ctc_b: Tensor::zeros(&[vocab.size()]),
            attention: AttentionNet::uniform(f, s, pd, config.attention_units, r, rng),
            state: StateLstm::uniform(f, s, r, rng),
            decoder: CharDecoder::uniform(
                s + f,
                config.decoder_hidden,
                vocab.attention_classes(),
                r,
                rng,
            ),
            encoder,
            vocab,
            config,
        })
    }

    /// Seeded construction.
    pub fn seeded(vocab: Vocab, config: ModelConfig, seed: u64) -> Result<Self> {
        Self::new(vocab, config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Same architecture with every parameter zero.
    pub fn zeros(vocab: Vocab, config: ModelConfig) -> Result<Self> {
        let mut m = Self::seeded(vocab, config, 0)?;
        m.fill_zero();
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        let mut m = self.clone();
        m.fill_zero();
        m
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut m =
            Model::<U>::zeros(self.vocab.clone(), self.config.clone()).expect("validated config");
        m.load_param_set(&self.to_param_set().cast())
            .expect("identical architecture");
        m
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim()
    }

    /// Appends EOS to a character label sequence.
    pub fn attention_target(&self, chars: &[usize]) -> LabelSeq {
        let mut t = chars.to_vec();
        t.push(self.vocab.eos());
        t
    }

    fn check_attention_target(&self, target: &[usize]) -> Result<()> {
        let eos = self.vocab.eos();
        match target.split_last() {
            None => Err(Error::Domain(
                "attention target must contain at least EOS".into(),
            )),
            Some((&last, _)) if last != eos => Err(Error::Domain(format!(
                "attention target must end with EOS ({eos}), found {last}"
            ))),
            Some((_, body)) => match body.iter().find(|&&l| l >= eos) {
                Some(&l) => Err(Error::Domain(format!(
                    "attention target label {l} is not a character"
                ))),
                None => Ok(()),
            },
        }
    }

    /// Frame logits `W' x vocab.size()` of the CTC head.
    pub fn ctc_logits(&self, e: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, w, f) = feature_dims(e)?;
        let cols = collapse(e)?;
        Ok(self.ctc_logits_from(cols.data(), w, f))
    }

    fn ctc_logits_from(&self, cols: &[T], w: usize, f: usize) -> Tensor<T> {
        let k = self.ctc_b.len();
        let mut logits = Tensor::zeros(&[w, k]);
        gemm(
            T::one(),
            MatRef::new(cols, w, f),
            MatRef::new(self.ctc_w.data(), k, f).t(),
            T::zero(),
            MatMut::new(logits.data_mut(), w, k),
        );
        crate::mdlstm::add_bias_rows(logits.data_mut(), self.ctc_b.data());
        logits
    }

    /// CTC loss of `chars` on features `e`; accumulates head gradients and
    /// the feature gradient into `d_e` when `grad` is given.
    pub(crate) fn ctc_head(
        &self,
        e: &Tensor<T>,
        chars: &[usize],
        grad: Option<(&mut Model<T>, &mut [T])>,
    ) -> Result<f64> {
        let (h, w, f) = feature_dims(e)?;
        let cols = collapse(e)?;
        let logits = self.ctc_logits_from(cols.data(), w, f);
        let (nll, d_logits) = ctc_loss(&logits, chars)?;
        if let Some((grad, d_e)) = grad {
            let k = self.ctc_b.len();
            col_sum_acc(d_logits.data(), grad.ctc_b.data_mut());
            gemm(
                T::one(),
                MatRef::new(d_logits.data(), w, k).t(),
                MatRef::new(cols.data(), w, f),
                T::one(),
                MatMut::new(grad.ctc_w.data_mut(), k, f),
            );
            let mut d_cols = vec![T::zero(); w * f];
            gemm(
                T::one(),
                MatRef::new(d_logits.data(), w, k),
                MatRef::new(self.ctc_w.data(), k, f),
                T::zero(),
                MatMut::new(&mut d_cols, w, f),
            );
            for row in d_e.chunks_exact_mut(w * f).take(h) {
                for (a, &b) in row.iter_mut().zip(&d_cols) {
                    *a += b;
                }
            }
        }
        Ok(nll.as_f64())
    }

    fn decoder_step(&self, e: &[T], img: &AttnImage<T>, st: &RunState<T>) -> StepRecord<T> {
        let (z, attn) = self.attention.step_forward(img, &st.alpha, &st.s);
        let mut alpha = vec![T::zero(); z.len()];
        softmax_into(&z, &mut alpha);
        let mut g = vec![T::zero(); self.feature_dim()];
        summarize_raw(&alpha, e, &mut g);
        let (s, lstm) = self.state.step_raw(&st.s, &st.c, &g);
        let out = self.decoder.forward_raw(&s, &g);
        StepRecord {
            alpha_prev: st.alpha.clone(),
            s_prev: st.s.clone(),
            c_prev: st.c.clone(),
            attn,
            alpha,
            g,
            lstm,
            s,
            out,
        }
    }

    fn check_features(&self, e: &Tensor<T>) -> Result<(usize, usize)> {
        let (h, w, f) = feature_dims(e)?;
        if f != self.feature_dim() {
            return Err(Error::dim(
                "decoder features",
                e.shape(),
                &[h, w, self.feature_dim()],
            ));
        }
        Ok((h, w))
    }

    /// One decoder step from an explicit state.
    pub fn step(
        &self,
        e: &Tensor<T>,
        state: &DecoderState<T>,
    ) -> Result<(DecoderState<T>, StepOutput<T>)> {
        let (h, w) = self.check_features(e)?;
        let n = self.config.state_units;
        if state.alpha_prev.shape() != [h, w] {
            return Err(Error::dim(
                "decoder step attention",
                state.alpha_prev.shape(),
                &[h, w],
            ));
        }
        if state.s.shape() != [n] || state.c_state.shape() != [n] {
            return Err(Error::dim("decoder step state", state.s.shape(), &[n]));
        }
        let img = self.attention.precompute(e.data(), h, w);
        let st = RunState {
            s: state.s.data().to_vec(),
            c: state.c_state.data().to_vec(),
            alpha: state.alpha_prev.data().to_vec(),
        };
        let rec = self.decoder_step(e.data(), &img, &st);
        let out = rec.output(h, w);
        let next = DecoderState {
            s: Tensor::vector(rec.s)?,
            c_state: Tensor::vector(rec.lstm.c)?,
            alpha_prev: out.alpha.clone(),
            t: state.t + 1,
        };
        Ok((next, out))
    }

    /// Runs the decoder for `target.len()` steps on features `e`.
    pub fn attention_nll(
        &self,
        e: &Tensor<T>,
        target: &[usize],
    ) -> Result<(f64, AttentionTrace<T>)> {
        self.check_attention_target(target)?;
        let (h, w) = self.check_features(e)?;
        let img = self.attention.precompute(e.data(), h, w);
        let mut st = RunState::initial(self.config.state_units, h * w);
        let mut loss = 0.0;
        let mut steps = Vec::with_capacity(target.len());
        for &y in target {
            let rec = self.decoder_step(e.data(), &img, &st);
            loss -= rec.out.log_probs[y].as_f64();
            steps.push(rec.output(h, w));
            st = rec.next_state();
        }
        Ok((
            loss,
            AttentionTrace {
                map_height: h,
                map_width: w,
                steps,
                truncated: false,
            },
        ))
    }

    /// Greedy decoding on features `e` until EOS or `max_steps`.
    pub fn greedy_from_features(
        &self,
        e: &Tensor<T>,
        max_steps: usize,
    ) -> Result<(String, AttentionTrace<T>)> {
        if max_steps == 0 {
            return Err(Error::Domain("max_steps must be at least 1".into()));
        }
        let (h, w) = self.check_features(e)?;
        let img = self.attention.precompute(e.data(), h, w);
        let mut st = RunState::initial(self.config.state_units, h * w);
        let mut labels = Vec::new();
        let mut steps = Vec::new();
        let eos = self.vocab.eos();
        let mut truncated = true;
        while steps.len() < max_steps {
            let rec = self.decoder_step(e.data(), &img, &st);
            let out = rec.output(h, w);
            let y = out.emitted;
            steps.push(out);
            if y == eos {
                truncated = false;
                break;
            }
            labels.push(y);
            st = rec.next_state();
        }
        Ok((
            self.vocab.decode(&labels),
            AttentionTrace {
                map_height: h,
                map_width: w,
                steps,
                truncated,
            },
        ))
    }

    /// Best-path transcription with the CTC head.
    pub fn ctc_transcribe(&self, image: &Tensor<T>) -> Result<String> {
        let (e, _) = self.encoder.forward(image, DropoutMode::Eval)?;
        let logits = self.ctc_logits(&e)?;
        let k = logits.shape()[1];
        let mut probs = Tensor::zeros(logits.shape());
        for (src, dst) in logits
            .data()
            .chunks_exact(k)
            .zip(probs.data_mut().chunks_exact_mut(k))
        {
            softmax_into(src, dst);
        }
        Ok(self.vocab.decode(&best_path_decode(&probs)?))
    }

    /// Attention loss with truncated backpropagation through the decoder
    /// recurrences. Gradients crossing a window boundary are dropped; the
    /// forward pass is unaffected.
    pub(crate) fn attention_backward(
        &self,
        e: &Tensor<T>,
        target: &[usize],
        window: usize,
        grad: &mut Model<T>,
        d_e: &mut [T],
    ) -> Result<f64> {
        self.check_attention_target(target)?;
        if window == 0 {
            return Err(Error::Config("bptt_window must be at least 1".into()));
        }
        let (h, w) = self.check_features(e)?;
        let (f, n, npix) = (self.feature_dim(), self.config.state_units, h * w);
        let ed = e.data();
        let img = self.attention.precompute(ed, h, w);
        let g_width = GATES * self.attention.units();
        let mut d_pre_e = vec![vec![T::zero(); npix * g_width]; self.attention.block.layers.len()];
        let mut st = RunState::initial(n, npix);
        let mut loss = 0.0;
        for chunk in target.chunks(window) {
            let mut recs = Vec::with_capacity(chunk.len());
            for &y in chunk {
                let rec = self.decoder_step(ed, &img, &st);
                loss -= rec.out.log_probs[y].as_f64();
                st = rec.next_state();
                recs.push(rec);
            }
            let mut ds_next = vec![T::zero(); n];
            let mut dc_next = vec![T::zero(); n];
            let mut dalpha_next = vec![T::zero(); npix];
            for (rec, &y) in recs.iter().zip(chunk).rev() {
                let mut d_logits = rec.out.probs.clone();
                d_logits[y] -= T::one();
                let mut ds = ds_next;
                let mut dg = vec![T::zero(); f];
                self.decoder.backward_raw(
                    &rec.out,
                    &rec.s,
                    &rec.g,
                    &d_logits,
                    &mut grad.decoder,
                    &mut ds,
                    &mut dg,
                );
                let mut d_s_prev = vec![T::zero(); n];
                let mut d_c_prev = vec![T::zero(); n];
                self.state.backward_raw(
                    &rec.lstm,
                    &rec.s_prev,
                    &rec.c_prev,
                    &rec.g,
                    &ds,
                    &dc_next,
                    &mut grad.state,
                    &mut d_s_prev,
                    &mut d_c_prev,
                    &mut dg,
                );
                let mut dalpha = dalpha_next;
                for (q, da) in dalpha.iter_mut().enumerate() {
                    *da += dot(&ed[q * f..(q + 1) * f], &dg);
                    axpy(rec.alpha[q], &dg, &mut d_e[q * f..(q + 1) * f]);
                }
                let m = dot(&rec.alpha, &dalpha);
                let dz: Vec<T> = rec
                    .alpha
                    .iter()
                    .zip(&dalpha)
                    .map(|(&a, &d)| a * (d - m))
                    .collect();
                let mut d_alpha_prev = vec![T::zero(); npix];
                self.attention.step_backward(
                    &rec.attn,
                    &rec.alpha_prev,
                    &rec.s_prev,
                    &dz,
                    &mut grad.attention,
                    &mut d_pre_e,
                    &mut d_alpha_prev,
                    &mut d_s_prev,
                );
                ds_next = d_s_prev;
                dc_next = d_c_prev;
                dalpha_next = d_alpha_prev;
            }
        }
        self.attention
            .finish_backward(ed, npix, &d_pre_e, &mut grad.attention, d_e);
        Ok(loss)
    }

    /// Loss of one example (`chars` without EOS) under `head`.
    pub fn loss(
        &self,
        image: &Tensor<T>,
        chars: &[usize],
        head: Head,
        mode: DropoutMode,
    ) -> Result<LossBreakdown> {
        let terms = self.loss_terms(image, chars, head, mode)?;
        let mut out = LossBreakdown::default();
        let mut it = terms.into_iter();
        if head.ctc() {
            out.ctc = it.next().expect("ctc term");
        }
        out.attention = it.sum();
        Ok(out)
    }

    /// The individual summands of [`Model::loss`]: the CTC NLL first when
    /// `head` uses it, then one `-log p(y_t)` per attention step.
    pub fn loss_terms(
        &self,
        image: &Tensor<T>,
        chars: &[usize],
        head: Head,
        mode: DropoutMode,
    ) -> Result<Vec<f64>> {
        let (e, _) = self.encoder.forward(image, mode)?;
        let mut terms = Vec::new();
        if head.ctc() {
            terms.push(self.ctc_head(&e, chars, None)?);
        }
        if head.attention() {
            terms.extend(self.attention_terms(&e, &self.attention_target(chars))?);
        }
        Ok(terms)
    }

    /// Per-step `-log p(y_t)` of `target` (ending in EOS) given features `e`.
    pub fn attention_terms(&self, e: &Tensor<T>, target: &[usize]) -> Result<Vec<f64>> {
        self.check_attention_target(target)?;
        let (h, w) = self.check_features(e)?;
        let img = self.attention.precompute(e.data(), h, w);
        let mut st = RunState::initial(self.config.state_units, h * w);
        let mut terms = Vec::with_capacity(target.len());
        for &y in target {
            let rec = self.decoder_step(e.data(), &img, &st);
            terms.push(-rec.out.log_probs[y].as_f64());
            st = rec.next_state();
        }
        Ok(terms)
    }

    /// Loss of one example with gradients accumulated into `grad`.
    pub fn loss_and_grad(
        &self,
        image: &Tensor<T>,
        chars: &[usize],
        head: Head,
        mode: DropoutMode,
        bptt_window: usize,
        grad: &mut Model<T>,
    ) -> Result<LossBreakdown> {
        let ctc = head.ctc().then_some(chars);
        let attention = head.attention().then_some(chars);
        self.loss_and_grad_targets(image, ctc, attention, mode, bptt_window, grad)
    }

    /// Like [`Model::loss_and_grad`] with a separate target per head; a head
    /// given `None` is skipped. Both targets exclude EOS.
    pub fn loss_and_grad_targets(
        &self,
        image: &Tensor<T>,
        ctc_chars: Option<&[usize]>,
        attention_chars: Option<&[usize]>,
        mode: DropoutMode,
        bptt_window: usize,
        grad: &mut Model<T>,
    ) -> Result<LossBreakdown> {
        let (e, cache) = self.encoder.forward(image, mode)?;
        let mut d_e = vec![T::zero(); e.len()];
        let mut out = LossBreakdown::default();
        if let Some(chars) = ctc_chars {
            out.ctc = self.ctc_head(&e, chars, Some((&mut *grad, &mut d_e)))?;
        }
        if let Some(chars) = attention_chars {
            let target = self.attention_target(chars);
            out.attention = self.attention_backward(&e, &target, bptt_window, grad, &mut d_e)?;
        }
        self.encoder.backward(&cache, &d_e, &mut grad.encoder);
        Ok(out)
    }
}

impl<T: Real> Parameterized<T> for Model<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.encoder.visit(f);
        f("ctc.b".into(), &self.ctc_b);
        f("ctc.w".into(), &self.ctc_w);
        self.attention.visit("attention", f);
        self.state.visit("state", f);
        self.decoder.visit("decoder", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.encoder.visit_mut(f);
        f("ctc.b".into(), &mut self.ctc_b);
        f("ctc.w".into(), &mut self.ctc_w);
        self.attention.visit_mut("attention", f);
        self.state.visit_mut("state", f);
        self.decoder.visit_mut("decoder", f);
    }
}

/// Encodes `image` once and scores `target_with_eos` with the attention head.
pub fn sequence_nll<T: Real>(
    image: &Tensor<T>,
    target_with_eos: &[usize],
    model: &Model<T>,
) -> Result<(f64, AttentionTrace<T>)> {
    model.check_attention_target(target_with_eos)?;
    let (e, _) = model.encoder.forward(image, DropoutMode::Eval)?;
    model.attention_nll(&e, target_with_eos)
}

/// Argmax decoding until EOS or `max_steps`; EOS is not part of the text.
pub fn greedy_transcribe<T: Real>(
    image: &Tensor<T>,
    model: &Model<T>,
    max_steps: usize,
) -> Result<(String, AttentionTrace<T>)> {
    if max_steps == 0 {
        return Err(Error::Domain("max_steps must be at least 1".into()));
    }
    let (e, _) = model.encoder.forward(image, DropoutMode::Eval)?;
    model.greedy_from_features(&e, max_steps)
}

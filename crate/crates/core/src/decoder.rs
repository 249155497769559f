//! Recurrent decoder state and the character classifier.
//!
//! The state LSTM consumes only the image summary `g_t`; the previous
//! character is never fed back, so training and inference run the same path.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{matvec_acc, matvec_t_acc, outer_acc};
use crate::ops::{log_softmax_into, sigmoid, softmax_into};
use crate::tensor::{Real, Tensor};

const LSTM_GATES: usize = 4;

/// One-dimensional LSTM over summaries; gate rows are ordered input,
/// forget, output, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct StateLstm<T> {
    /// `4S x F`
    pub w: Tensor<T>,
    /// `4S x S`
    pub u: Tensor<T>,
    /// `4S`
    pub b: Tensor<T>,
}

/// Recurrent state carried between decoder steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState<T> {
    pub s: Tensor<T>,
    pub c_state: Tensor<T>,
    /// `H' x W'`
    pub alpha_prev: Tensor<T>,
    pub t: usize,
}

impl<T: Real> DecoderState<T> {
    /// Zero state with a uniform previous attention map.
    pub fn initial(state_dim: usize, height: usize, width: usize) -> Self {
        DecoderState {
            s: Tensor::zeros(&[state_dim]),
            c_state: Tensor::zeros(&[state_dim]),
            alpha_prev: Tensor::filled(&[height, width], T::lit(1.0 / (height * width) as f64)),
            t: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LstmCache<T> {
    /// Activated gates.
    gates: Vec<T>,
    pub c: Vec<T>,
    tanh_c: Vec<T>,
}

impl<T: Real> StateLstm<T> {
    pub fn uniform<R: Rng + ?Sized>(input: usize, units: usize, range: f64, rng: &mut R) -> Self {
        StateLstm {
            w: Tensor::uniform(&[LSTM_GATES * units, input], range, rng),
            u: Tensor::uniform(&[LSTM_GATES * units, units], range, rng),
            b: Tensor::zeros(&[LSTM_GATES * units]),
        }
    }

    pub fn zeros(input: usize, units: usize) -> Self {
        StateLstm {
            w: Tensor::zeros(&[LSTM_GATES * units, input]),
            u: Tensor::zeros(&[LSTM_GATES * units, units]),
            b: Tensor::zeros(&[LSTM_GATES * units]),
        }
    }

    pub fn units(&self) -> usize {
        self.b.len() / LSTM_GATES
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape().get(1).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.units();
        if s == 0 || self.b.len() != LSTM_GATES * s {
            return Err(Error::dim(
                "state LSTM bias",
                self.b.shape(),
                &[LSTM_GATES * s.max(1)],
            ));
        }
        if self.u.shape() != [LSTM_GATES * s, s] {
            return Err(Error::dim(
                "state LSTM recurrent weights",
                self.u.shape(),
                &[LSTM_GATES * s, s],
            ));
        }
        if self.w.shape().len() != 2 || self.w.shape()[0] != LSTM_GATES * s {
            return Err(Error::dim(
                "state LSTM input weights",
                self.w.shape(),
                &[LSTM_GATES * s, 0],
            ));
        }
        Ok(())
    }

    /// Returns the new hidden output with the cache holding the new cell.
    pub(crate) fn step_raw(&self, s_prev: &[T], c_prev: &[T], g: &[T]) -> (Vec<T>, LstmCache<T>) {
        let n = self.units();
        let mut pre = self.b.data().to_vec();
        matvec_acc(self.w.data(), g, &mut pre);
        matvec_acc(self.u.data(), s_prev, &mut pre);
        let (ifo, cand) = pre.split_at_mut(3 * n);
        for v in ifo.iter_mut() {
            *v = sigmoid(*v);
        }
        for v in cand.iter_mut() {
            *v = v.tanh();
        }
        let mut c = vec![T::zero(); n];
        let mut tanh_c = vec![T::zero(); n];
        let mut s = vec![T::zero(); n];
        for k in 0..n {
            c[k] = pre[n + k] * c_prev[k] + pre[k] * pre[3 * n + k];
            tanh_c[k] = c[k].tanh();
            s[k] = pre[2 * n + k] * tanh_c[k];
        }
        (
            s,
            LstmCache {
                gates: pre,
                c,
                tanh_c,
            },
        )
    }

    /// Given gradients of the new output `ds` and cell `dc`, accumulates
    /// weight gradients and adds input-side gradients to `d_s_prev`,
    /// `d_c_prev`, `d_g`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_raw(
        &self,
        cache: &LstmCache<T>,
        s_prev: &[T],
        c_prev: &[T],
        g: &[T],
        ds: &[T],
        dc: &[T],
        grad: &mut StateLstm<T>,
        d_s_prev: &mut [T],
        d_c_prev: &mut [T],
        d_g: &mut [T],
    ) {
        let n = self.units();
        let one = T::one();
        let a = &cache.gates;
        let mut dpre = vec![T::zero(); LSTM_GATES * n];
        for k in 0..n {
            let (gi, gf, go, gc) = (a[k], a[n + k], a[2 * n + k], a[3 * n + k]);
            let t = cache.tanh_c[k];
            let dck = dc[k] + ds[k] * go * (one - t * t);
            dpre[k] = dck * gc * gi * (one - gi);
            dpre[n + k] = dck * c_prev[k] * gf * (one - gf);
            dpre[2 * n + k] = ds[k] * t * go * (one - go);
            dpre[3 * n + k] = dck * gi * (one - gc * gc);
            d_c_prev[k] += dck * gf;
        }
        for (b, &d) in grad.b.data_mut().iter_mut().zip(&dpre) {
            *b += d;
        }
        outer_acc(&dpre, g, grad.w.data_mut());
        outer_acc(&dpre, s_prev, grad.u.data_mut());
        matvec_t_acc(self.w.data(), &dpre, d_g);
        matvec_t_acc(self.u.data(), &dpre, d_s_prev);
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(format!("{prefix}.b"), &self.b);
        f(format!("{prefix}.u"), &self.u);
        f(format!("{prefix}.w"), &self.w);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.b"), &mut self.b);
        f(format!("{prefix}.u"), &mut self.u);
        f(format!("{prefix}.w"), &mut self.w);
    }
}

/// One LSTM step on summary `g`. The previous attention map is carried over
/// unchanged and the step counter advances.
pub fn state_update<T: Real>(
    state: &DecoderState<T>,
    g: &Tensor<T>,
    p: &StateLstm<T>,
) -> Result<DecoderState<T>> {
    p.validate()?;
    let n = p.units();
    for (op, t) in [
        ("state_update state", &state.s),
        ("state_update cell", &state.c_state),
    ] {
        if t.shape() != [n] {
            return Err(Error::dim(op, t.shape(), &[n]));
        }
    }
    if g.shape() != [p.input_dim()] {
        return Err(Error::dim(
            "state_update summary",
            g.shape(),
            &[p.input_dim()],
        ));
    }
    let (s, cache) = p.step_raw(state.s.data(), state.c_state.data(), g.data());
    Ok(DecoderState {
        s: Tensor::vector(s)?,
        c_state: Tensor::vector(cache.c)?,
        alpha_prev: state.alpha_prev.clone(),
        t: state.t + 1,
    })
}

/// One-hidden-layer tanh MLP over `[s, g]` producing character and EOS
/// logits.
#[derive(Clone, Debug, PartialEq)]
pub struct CharDecoder<T> {
    /// `hidden x (S + F)`
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    /// `K x hidden`
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderOut<T> {
    pub hidden: Vec<T>,
    pub probs: Vec<T>,
    pub log_probs: Vec<T>,
}

impl<T: Real> CharDecoder<T> {
    pub fn uniform<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        classes: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        CharDecoder {
            w1: Tensor::uniform(&[hidden, input], range, rng),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::uniform(&[classes, hidden], range, rng),
            b2: Tensor::zeros(&[classes]),
        }
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        CharDecoder {
            w1: Tensor::zeros(&[hidden, input]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[classes, hidden]),
            b2: Tensor::zeros(&[classes]),
        }
    }

    pub fn classes(&self) -> usize {
        self.b2.len()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.shape().get(1).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, k) = (self.b1.len(), self.b2.len());
        if self.w1.shape().len() != 2 || self.w1.shape()[0] != h {
            return Err(Error::dim(
                "decoder hidden weights",
                self.w1.shape(),
                &[h, 0],
            ));
        }
        if self.w2.shape() != [k, h] {
            return Err(Error::dim(
                "decoder output weights",
                self.w2.shape(),
                &[k, h],
            ));
        }
        Ok(())
    }

    pub(crate) fn forward_raw(&self, s: &[T], g: &[T]) -> DecoderOut<T> {
        let x: Vec<T> = s.iter().chain(g).copied().collect();
        let mut hidden = self.b1.data().to_vec();
        matvec_acc(self.w1.data(), &x, &mut hidden);
        for v in hidden.iter_mut() {
            *v = v.tanh();
        }
        let mut logits = self.b2.data().to_vec();
        matvec_acc(self.w2.data(), &hidden, &mut logits);
        let mut probs = vec![T::zero(); logits.len()];
        let mut log_probs = vec![T::zero(); logits.len()];
        softmax_into(&logits, &mut probs);
        log_softmax_into(&logits, &mut log_probs);
        DecoderOut {
            hidden,
            probs,
            log_probs,
        }
    }

    /// Backpropagates logit gradients into weights, `d_s` and `d_g`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_raw(
        &self,
        out: &DecoderOut<T>,
        s: &[T],
        g: &[T],
        d_logits: &[T],
        grad: &mut CharDecoder<T>,
        d_s: &mut [T],
        d_g: &mut [T],
    ) {
        let one = T::one();
        for (b, &d) in grad.b2.data_mut().iter_mut().zip(d_logits) {
            *b += d;
        }
        outer_acc(d_logits, &out.hidden, grad.w2.data_mut());
        let mut d_hidden = vec![T::zero(); out.hidden.len()];
        matvec_t_acc(self.w2.data(), d_logits, &mut d_hidden);
        for (d, &h) in d_hidden.iter_mut().zip(&out.hidden) {
            *d *= one - h * h;
        }
        for (b, &d) in grad.b1.data_mut().iter_mut().zip(&d_hidden) {
            *b += d;
        }
        let x: Vec<T> = s.iter().chain(g).copied().collect();
        outer_acc(&d_hidden, &x, grad.w1.data_mut());
        let mut dx = vec![T::zero(); x.len()];
        matvec_t_acc(self.w1.data(), &d_hidden, &mut dx);
        let (dxs, dxg) = dx.split_at(s.len());
        for (a, &b) in d_s.iter_mut().zip(dxs) {
            *a += b;
        }
        for (a, &b) in d_g.iter_mut().zip(dxg) {
            *a += b;
        }
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(format!("{prefix}.b1"), &self.b1);
        f(format!("{prefix}.b2"), &self.b2);
        f(format!("{prefix}.w1"), &self.w1);
        f(format!("{prefix}.w2"), &self.w2);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.b1"), &mut self.b1);
        f(format!("{prefix}.b2"), &mut self.b2);
        f(format!("{prefix}.w1"), &mut self.w1);
        f(format!("{prefix}.w2"), &mut self.w2);
    }
}

/// Output distribution over characters and EOS for state `s` and summary `g`.
pub fn decode_char<T: Real>(s: &Tensor<T>, g: &Tensor<T>, p: &CharDecoder<T>) -> Result<Tensor<T>> {
    p.validate()?;
    if s.shape().len() != 1 || g.shape().len() != 1 || s.len() + g.len() != p.input_dim() {
        return Err(Error::dim(
            "decode_char input",
            &[s.len() + g.len()],
            &[p.input_dim()],
        ));
    }
    Tensor::vector(p.forward_raw(s.data(), g.data()).probs)
}

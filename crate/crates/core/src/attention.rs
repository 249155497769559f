//! Attention over encoder feature maps.
//!
//! The scorer is a four-direction MDLSTM whose per-pixel input is
//! `[e_ij, alpha_prev_ij, proj(s_prev)]`, followed by a one-output linear
//! layer. Scores are normalized jointly over the whole map.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{dot, gemm, matvec_acc, matvec_t_acc, outer_acc, MatMut, MatRef};
use crate::mdlstm::{col_sum_acc, scan_backward, scan_forward, MdlstmBlock, ScanCache, GATES};
use crate::ops::softmax_into;
use crate::tensor::{Real, Tensor};

/// Parameters of the attention scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionNet<T> {
    /// Input width is `feature_dim + 1 + proj_dim`.
    pub block: MdlstmBlock<T>,
    /// `proj_dim x state_dim`.
    pub proj_w: Tensor<T>,
    pub proj_b: Tensor<T>,
    /// `1 x units`. Scores carry no bias: the softmax over the map is
    /// invariant to a constant shift.
    pub out_w: Tensor<T>,
}

/// Feature-map terms of the scorer pre-activations, shared by every step.
#[derive(Clone, Debug)]
pub(crate) struct AttnImage<T> {
    pub height: usize,
    pub width: usize,
    /// Per direction, `P x 5u` products `E W_e^T`.
    e_pre: Vec<Vec<T>>,
}

#[derive(Clone, Debug)]
pub(crate) struct AttnStepCache<T> {
    proj: Vec<T>,
    scans: Vec<ScanCache<T>>,
    /// `P x u` summed directional outputs.
    hsum: Vec<T>,
}

impl<T: Real> AttentionNet<T> {
    pub fn uniform<R: Rng + ?Sized>(
        feature_dim: usize,
        state_dim: usize,
        proj_dim: usize,
        units: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        AttentionNet {
            block: MdlstmBlock::uniform(feature_dim + 1 + proj_dim, units, range, rng),
            proj_w: Tensor::uniform(&[proj_dim, state_dim], range, rng),
            proj_b: Tensor::zeros(&[proj_dim]),
            out_w: Tensor::uniform(&[1, units], range, rng),
        }
    }

    pub fn zeros(feature_dim: usize, state_dim: usize, proj_dim: usize, units: usize) -> Self {
        AttentionNet {
            block: MdlstmBlock::zeros(feature_dim + 1 + proj_dim, units),
            proj_w: Tensor::zeros(&[proj_dim, state_dim]),
            proj_b: Tensor::zeros(&[proj_dim]),
            out_w: Tensor::zeros(&[1, units]),
        }
    }

    pub fn units(&self) -> usize {
        self.block.units()
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_b.len()
    }

    pub fn state_dim(&self) -> usize {
        self.proj_w.shape().get(1).copied().unwrap_or(0)
    }

    pub fn feature_dim(&self) -> usize {
        self.block.in_features().saturating_sub(1 + self.proj_dim())
    }

    pub fn validate(&self) -> Result<()> {
        self.block.validate()?;
        let (pd, u) = (self.proj_dim(), self.units());
        if self.proj_w.shape().len() != 2 || self.proj_w.shape()[0] != pd {
            return Err(Error::dim(
                "attention projection",
                self.proj_w.shape(),
                &[pd, 0],
            ));
        }
        if self.block.in_features() < 1 + pd {
            return Err(Error::Config(format!(
                "attention input width {} cannot hold the location channel and a {pd}-wide state projection",
                self.block.in_features()
            )));
        }
        if self.out_w.shape() != [1, u] {
            return Err(Error::dim(
                "attention output weights",
                self.out_w.shape(),
                &[1, u],
            ));
        }
        Ok(())
    }

    fn in_width(&self) -> usize {
        self.block.in_features()
    }

    pub(crate) fn precompute(&self, e: &[T], height: usize, width: usize) -> AttnImage<T> {
        let (f, n, npix) = (self.feature_dim(), self.in_width(), height * width);
        let g = GATES * self.units();
        let e_pre = self
            .block
            .layers
            .iter()
            .map(|l| {
                let mut pre = vec![T::zero(); npix * g];
                gemm(
                    T::one(),
                    MatRef::new(e, npix, f),
                    MatRef::new(l.cell.w.data(), g, n).cols(0, f).t(),
                    T::zero(),
                    MatMut::new(&mut pre, npix, g),
                );
                pre
            })
            .collect();
        AttnImage {
            height,
            width,
            e_pre,
        }
    }

    /// Raw scores for one decoder step.
    pub(crate) fn step_forward(
        &self,
        img: &AttnImage<T>,
        alpha_prev: &[T],
        s_prev: &[T],
    ) -> (Vec<T>, AttnStepCache<T>) {
        let (f, n, u) = (self.feature_dim(), self.in_width(), self.units());
        let g = GATES * u;
        let npix = img.height * img.width;
        let mut proj = self.proj_b.data().to_vec();
        matvec_acc(self.proj_w.data(), s_prev, &mut proj);

        let mut hsum = vec![T::zero(); npix * u];
        let mut scans = Vec::with_capacity(self.block.layers.len());
        for (layer, e_pre) in self.block.layers.iter().zip(&img.e_pre) {
            let w = layer.cell.w.data();
            let konst: Vec<T> = (0..g)
                .map(|k| layer.cell.b.data()[k] + dot(&w[k * n + f + 1..(k + 1) * n], &proj))
                .collect();
            let w_alpha: Vec<T> = (0..g).map(|k| w[k * n + f]).collect();
            let mut pre = e_pre.clone();
            for (row, &a) in pre.chunks_exact_mut(g).zip(alpha_prev) {
                for k in 0..g {
                    row[k] += a * w_alpha[k] + konst[k];
                }
            }
            let cache = scan_forward(pre, img.height, img.width, layer.direction, &layer.cell);
            for (s, &o) in hsum.iter_mut().zip(cache.output()) {
                *s += o;
            }
            scans.push(cache);
        }
        let z = hsum
            .chunks_exact(u)
            .map(|h| dot(h, self.out_w.data()))
            .collect();
        (z, AttnStepCache { proj, scans, hsum })
    }

    /// Backpropagates score gradients `dz` of one step. Feature-map terms are
    /// accumulated into `d_pre_e` (one buffer per direction) and resolved by
    /// [`AttentionNet::finish_backward`].
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step_backward(
        &self,
        cache: &AttnStepCache<T>,
        alpha_prev: &[T],
        s_prev: &[T],
        dz: &[T],
        grad: &mut AttentionNet<T>,
        d_pre_e: &mut [Vec<T>],
        d_alpha_prev: &mut [T],
        d_s_prev: &mut [T],
    ) {
        let (f, n, u, pd) = (
            self.feature_dim(),
            self.in_width(),
            self.units(),
            self.proj_dim(),
        );
        let g = GATES * u;
        let mut dh = vec![T::zero(); dz.len() * u];
        for ((row, h), &d) in dh
            .chunks_exact_mut(u)
            .zip(cache.hsum.chunks_exact(u))
            .zip(dz)
        {
            for k in 0..u {
                row[k] = d * self.out_w.data()[k];
            }
            for (gw, &hv) in grad.out_w.data_mut().iter_mut().zip(h) {
                *gw += d * hv;
            }
        }

        let mut d_proj = vec![T::zero(); pd];
        let mut colsum = vec![T::zero(); g];
        let mut d_walpha = vec![T::zero(); g];
        for (((layer, scan), gl), acc) in self
            .block
            .layers
            .iter()
            .zip(&cache.scans)
            .zip(&mut grad.block.layers)
            .zip(d_pre_e.iter_mut())
        {
            let dpre = scan_backward(scan, &dh, &layer.cell, &mut gl.cell);
            let w = layer.cell.w.data();
            colsum.fill(T::zero());
            col_sum_acc(&dpre, &mut colsum);
            d_walpha.fill(T::zero());
            for ((row, &a), da) in dpre
                .chunks_exact(g)
                .zip(alpha_prev)
                .zip(d_alpha_prev.iter_mut())
            {
                let mut s = T::zero();
                for k in 0..g {
                    s += row[k] * w[k * n + f];
                    d_walpha[k] += row[k] * a;
                }
                *da += s;
            }
            let gw = gl.cell.w.data_mut();
            for k in 0..g {
                gw[k * n + f] += d_walpha[k];
                for j in 0..pd {
                    gw[k * n + f + 1 + j] += colsum[k] * cache.proj[j];
                    d_proj[j] += colsum[k] * w[k * n + f + 1 + j];
                }
            }
            for (b, &c) in gl.cell.b.data_mut().iter_mut().zip(&colsum) {
                *b += c;
            }
            for (a, &v) in acc.iter_mut().zip(&dpre) {
                *a += v;
            }
        }
        outer_acc(&d_proj, s_prev, grad.proj_w.data_mut());
        for (b, &d) in grad.proj_b.data_mut().iter_mut().zip(&d_proj) {
            *b += d;
        }
        matvec_t_acc(self.proj_w.data(), &d_proj, d_s_prev);
    }

    /// Resolves the accumulated feature-map terms into weight gradients and
    /// adds the feature-map gradient into `d_e`.
    pub(crate) fn finish_backward(
        &self,
        e: &[T],
        npix: usize,
        d_pre_e: &[Vec<T>],
        grad: &mut AttentionNet<T>,
        d_e: &mut [T],
    ) {
        let (f, n) = (self.feature_dim(), self.in_width());
        let g = GATES * self.units();
        for ((layer, gl), dpre) in self
            .block
            .layers
            .iter()
            .zip(&mut grad.block.layers)
            .zip(d_pre_e)
        {
            gemm(
                T::one(),
                MatRef::new(dpre, npix, g).t(),
                MatRef::new(e, npix, f),
                T::one(),
                MatMut::new(gl.cell.w.data_mut(), g, n).cols(0, f),
            );
            gemm(
                T::one(),
                MatRef::new(dpre, npix, g),
                MatRef::new(layer.cell.w.data(), g, n).cols(0, f),
                T::one(),
                MatMut::new(d_e, npix, f),
            );
        }
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.block.visit(&format!("{prefix}.block"), f);
        f(format!("{prefix}.out.w"), &self.out_w);
        f(format!("{prefix}.proj.b"), &self.proj_b);
        f(format!("{prefix}.proj.w"), &self.proj_w);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.block.visit_mut(&format!("{prefix}.block"), f);
        f(format!("{prefix}.out.w"), &mut self.out_w);
        f(format!("{prefix}.proj.b"), &mut self.proj_b);
        f(format!("{prefix}.proj.w"), &mut self.proj_w);
    }
}

fn map_dims<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        &[h, w] => Ok((h, w)),
        s => Err(Error::dim(op, s, &[0, 0])),
    }
}

/// Unnormalized scores `H' x W'` for feature maps `e` (`H' x W' x F`).
pub fn attention_scores<T: Real>(
    e: &Tensor<T>,
    alpha_prev: &Tensor<T>,
    s_prev: &Tensor<T>,
    p: &AttentionNet<T>,
) -> Result<Tensor<T>> {
    p.validate()?;
    let (h, w) = map_dims("attention_scores alpha_prev", alpha_prev)?;
    let f = p.feature_dim();
    if e.shape() != [h, w, f] {
        return Err(Error::dim(
            "attention_scores features",
            e.shape(),
            &[h, w, f],
        ));
    }
    if s_prev.shape() != [p.state_dim()] {
        return Err(Error::dim(
            "attention_scores state",
            s_prev.shape(),
            &[p.state_dim()],
        ));
    }
    let img = p.precompute(e.data(), h, w);
    let (z, _) = p.step_forward(&img, alpha_prev.data(), s_prev.data());
    Tensor::from_vec(&[h, w], z)
}

/// Softmax over all positions of a score map jointly.
pub fn normalize_attention<T: Real>(z: &Tensor<T>) -> Result<Tensor<T>> {
    map_dims("normalize_attention", z)?;
    let mut out = Tensor::zeros(z.shape());
    softmax_into(z.data(), out.data_mut());
    Ok(out)
}

/// `g = sum_ij alpha_ij e_ij`.
pub fn summarize<T: Real>(alpha: &Tensor<T>, e: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = map_dims("summarize", alpha)?;
    match e.shape() {
        &[eh, ew, f] if eh == h && ew == w => {
            let mut g = vec![T::zero(); f];
            summarize_raw(alpha.data(), e.data(), &mut g);
            Tensor::from_vec(&[f], g)
        }
        s => Err(Error::dim("summarize", s, &[h, w, 0])),
    }
}

pub(crate) fn summarize_raw<T: Real>(alpha: &[T], e: &[T], g: &mut [T]) {
    g.fill(T::zero());
    // g = E^T alpha
    matvec_t_acc(e, alpha, g);
}

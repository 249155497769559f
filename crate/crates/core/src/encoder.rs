//! The convolutional-recurrent image encoder: MDLSTM blocks alternating with
//! non-overlapping subsampling convolutions, a per-position linear output
//! layer, and the vertical collapse used by the CTC head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gemm, MatMut, MatRef};
use crate::mdlstm::{add_bias_rows, col_sum_acc, MdlstmBlock, ScanCache};
use crate::params::Parameterized;
use crate::tensor::{Real, Tensor};

/// Encoder architecture. Defaults: 4/20/100 MDLSTM units per direction,
/// 12/32 convolution features with 2x2 kernels and strides, 80 outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub mdlstm_units: Vec<usize>,
    pub conv_features: Vec<usize>,
    pub conv_kernel: [usize; 2],
    pub feature_dim: usize,
    pub dropout: f64,
    pub init_range: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            mdlstm_units: vec![4, 20, 100],
            conv_features: vec![12, 32],
            conv_kernel: [2, 2],
            feature_dim: 80,
            dropout: 0.5,
            init_range: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mdlstm_units.is_empty() || self.mdlstm_units.len() != self.conv_features.len() + 1 {
            return Err(Error::Config(format!(
                "encoder needs one more MDLSTM block than convolutions, got {} and {}",
                self.mdlstm_units.len(),
                self.conv_features.len()
            )));
        }
        if self
            .mdlstm_units
            .iter()
            .chain(&self.conv_features)
            .any(|&u| u == 0)
            || self.feature_dim == 0
            || self.conv_kernel.contains(&0)
        {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Smallest image height and width the stack accepts.
    pub fn min_size(&self) -> (usize, usize) {
        let n = self.conv_features.len() as u32;
        (self.conv_kernel[0].pow(n), self.conv_kernel[1].pow(n))
    }

    /// Output map size for an input of `h x w`.
    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let mut s = (h, w);
        for _ in &self.conv_features {
            s = (s.0 / self.conv_kernel[0], s.1 / self.conv_kernel[1]);
        }
        s
    }
}

/// Whether dropout masks are drawn (training) or skipped (evaluation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Eval,
    /// Masks drawn from a generator seeded with `seed`.
    Train {
        seed: u64,
    },
}

/// Non-overlapping convolution followed by `tanh`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    /// `[kh, kw, C, F]`
    pub kernel: Tensor<T>,
    /// `[F]`
    pub bias: Tensor<T>,
}

impl<T: Real> Conv<T> {
    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2], s[3])
    }
}

struct ConvCache<T> {
    /// `P' x (kh kw C)`
    patches: Vec<T>,
    /// `P' x F`, post-activation.
    out: Vec<T>,
}

fn check_conv_shapes<T: Real>(
    input: &[usize],
    conv: &Conv<T>,
    stride: (usize, usize),
) -> Result<()> {
    let ks = conv.kernel.shape();
    if ks.len() != 4 || input.len() != 3 || input[2] != ks[2] {
        return Err(Error::dim("conv_subsample (input vs kernel)", input, ks));
    }
    if conv.bias.shape() != [ks[3]] {
        return Err(Error::dim(
            "conv_subsample (kernel vs bias)",
            ks,
            conv.bias.shape(),
        ));
    }
    if (ks[0], ks[1]) != stride {
        return Err(Error::Config(format!(
            "only non-overlapping subsampling is supported: kernel {}x{} vs stride {}x{}",
            ks[0], ks[1], stride.0, stride.1
        )));
    }
    if input[0] < ks[0] || input[1] < ks[1] {
        return Err(Error::Domain(format!(
            "map of {}x{} is smaller than one {}x{} window; minimum size is {}x{}",
            input[0], input[1], ks[0], ks[1], ks[0], ks[1]
        )));
    }
    Ok(())
}

fn conv_forward<T: Real>(
    x: &[T],
    h: usize,
    w: usize,
    conv: &Conv<T>,
) -> (ConvCache<T>, usize, usize) {
    let (kh, kw, c, f) = conv.dims();
    let (ho, wo) = (h / kh, w / kw);
    let plen = kh * kw * c;
    let mut patches = vec![T::zero(); ho * wo * plen];
    for oi in 0..ho {
        for oj in 0..wo {
            let dst = &mut patches[(oi * wo + oj) * plen..(oi * wo + oj + 1) * plen];
            for a in 0..kh {
                let src = ((oi * kh + a) * w + oj * kw) * c;
                dst[a * kw * c..(a + 1) * kw * c].copy_from_slice(&x[src..src + kw * c]);
            }
        }
    }
    let mut out = vec![T::zero(); ho * wo * f];
    gemm(
        T::one(),
        MatRef::new(&patches, ho * wo, plen),
        MatRef::new(conv.kernel.data(), plen, f),
        T::zero(),
        MatMut::new(&mut out, ho * wo, f),
    );
    add_bias_rows(&mut out, conv.bias.data());
    for v in &mut out {
        *v = v.tanh();
    }
    (ConvCache { patches, out }, ho, wo)
}

/// Returns the input gradient (`h x w x C`, zero in rows/columns the windows
/// do not cover) and accumulates parameter gradients.
fn conv_backward<T: Real>(
    cache: &ConvCache<T>,
    d_out: &[T],
    h: usize,
    w: usize,
    conv: &Conv<T>,
    grad: &mut Conv<T>,
) -> Vec<T> {
    let (kh, kw, c, f) = conv.dims();
    let (ho, wo) = (h / kh, w / kw);
    let plen = kh * kw * c;
    let one = T::one();
    let dpre: Vec<T> = d_out
        .iter()
        .zip(&cache.out)
        .map(|(&d, &o)| d * (one - o * o))
        .collect();
    col_sum_acc(&dpre, grad.bias.data_mut());
    gemm(
        one,
        MatRef::new(&cache.patches, ho * wo, plen).t(),
        MatRef::new(&dpre, ho * wo, f),
        one,
        MatMut::new(grad.kernel.data_mut(), plen, f),
    );
    let mut dpatch = vec![T::zero(); ho * wo * plen];
    gemm(
        one,
        MatRef::new(&dpre, ho * wo, f),
        MatRef::new(conv.kernel.data(), plen, f).t(),
        T::zero(),
        MatMut::new(&mut dpatch, ho * wo, plen),
    );
    let mut dx = vec![T::zero(); h * w * c];
    for oi in 0..ho {
        for oj in 0..wo {
            let src = &dpatch[(oi * wo + oj) * plen..(oi * wo + oj + 1) * plen];
            for a in 0..kh {
                let dst = ((oi * kh + a) * w + oj * kw) * c;
                dx[dst..dst + kw * c].copy_from_slice(&src[a * kw * c..(a + 1) * kw * c]);
            }
        }
    }
    dx
}

/// `tanh(Σ window · kernel + bias)` over non-overlapping windows. Rows and
/// columns not covered by a full window are dropped.
pub fn conv_subsample<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
) -> Result<Tensor<T>> {
    let conv = Conv {
        kernel: kernel.clone(),
        bias: bias.clone(),
    };
    check_conv_shapes(input.shape(), &conv, stride)?;
    let s = input.shape();
    let (cache, ho, wo) = conv_forward(input.data(), s[0], s[1], &conv);
    Tensor::from_vec(&[ho, wo, kernel.shape()[3]], cache.out)
}

/// Sums an `H x W x K` map over its rows, giving `W x K`.
pub fn collapse<T: Real>(maps: &Tensor<T>) -> Result<Tensor<T>> {
    let s = maps.shape();
    if s.len() != 3 {
        return Err(Error::dim("collapse", s, &[0, 0, 0]));
    }
    let row = s[1] * s[2];
    let mut out = vec![T::zero(); row];
    for r in maps.data().chunks_exact(row) {
        for (o, &v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    Tensor::from_vec(&[s[1], s[2]], out)
}

/// The full encoder stack.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStack<T> {
    pub config: EncoderConfig,
    pub blocks: Vec<MdlstmBlock<T>>,
    pub convs: Vec<Conv<T>>,
    /// `[feature_dim, last units]`
    pub out_w: Tensor<T>,
    /// `[feature_dim]`
    pub out_b: Tensor<T>,
}

/// Forward activations retained for [`EncoderStack::backward`].
pub struct EncoderCache<T> {
    /// Map size seen by each block.
    dims: Vec<(usize, usize)>,
    block_inputs: Vec<Vec<T>>,
    block_caches: Vec<Vec<ScanCache<T>>>,
    masks: Vec<Option<Vec<T>>>,
    conv_caches: Vec<ConvCache<T>>,
    final_in: Vec<T>,
}

impl<T: Real> EncoderStack<T> {
    /// Weights uniform in `[-init_range, init_range]`, zero biases.
    pub fn new<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let r = config.init_range;
        let mut blocks = Vec::new();
        let mut convs = Vec::new();
        let mut channels = 1;
        let [kh, kw] = config.conv_kernel;
        for (k, &units) in config.mdlstm_units.iter().enumerate() {
            blocks.push(MdlstmBlock::uniform(channels, units, r, rng));
            channels = units;
            if let Some(&f) = config.conv_features.get(k) {
                convs.push(Conv {
                    kernel: Tensor::uniform(&[kh, kw, channels, f], r, rng),
                    bias: Tensor::zeros(&[f]),
                });
                channels = f;
            }
        }
        Ok(EncoderStack {
            config: config.clone(),
            blocks,
            convs,
            out_w: Tensor::uniform(&[config.feature_dim, channels], r, rng),
            out_b: Tensor::zeros(&[config.feature_dim]),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.out_b.len()
    }

    fn check_input(&self, image: &Tensor<T>) -> Result<(usize, usize)> {
        let s = image.shape();
        if s.len() != 3 || s[2] != 1 {
            return Err(Error::dim(
                "encode (expects a single-channel image)",
                s,
                &[0, 0, 1],
            ));
        }
        let (mh, mw) = self.config.min_size();
        if s[0] < mh || s[1] < mw {
            return Err(Error::Domain(format!(
                "image of {}x{} is too small for the encoder; minimum size is {mh}x{mw}",
                s[0], s[1]
            )));
        }
        for b in &self.blocks {
            b.validate()?;
        }
        Ok((s[0], s[1]))
    }

    /// Encodes an `H x W x 1` image into `H' x W' x feature_dim` maps.
    pub fn forward(
        &self,
        image: &Tensor<T>,
        mode: DropoutMode,
    ) -> Result<(Tensor<T>, EncoderCache<T>)> {
        let (mut h, mut w) = self.check_input(image)?;
        let mut rng = match mode {
            DropoutMode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            DropoutMode::Eval => None,
        };
        let p_drop = self.config.dropout;
        let keep_scale = T::lit(1.0 / (1.0 - p_drop));
        let mut cache = EncoderCache {
            dims: Vec::new(),
            block_inputs: Vec::new(),
            block_caches: Vec::new(),
            masks: Vec::new(),
            conv_caches: Vec::new(),
            final_in: Vec::new(),
        };
        let mut x = image.data().to_vec();
        for (k, block) in self.blocks.iter().enumerate() {
            let (mut y, scans) = block.forward_raw(&x, h, w);
            let mask = match rng.as_mut() {
                Some(rng) if p_drop > 0.0 => {
                    let m: Vec<T> = (0..y.len())
                        .map(|_| {
                            if rng.gen::<f64>() < p_drop {
                                T::zero()
                            } else {
                                keep_scale
                            }
                        })
                        .collect();
                    for (v, &s) in y.iter_mut().zip(&m) {
                        *v *= s;
                    }
                    Some(m)
                }
                _ => None,
            };
            cache.dims.push((h, w));
            cache.block_inputs.push(std::mem::take(&mut x));
            cache.block_caches.push(scans);
            cache.masks.push(mask);
            if let Some(conv) = self.convs.get(k) {
                let s = [h, w, block.units()];
                check_conv_shapes(&s, conv, (conv.kernel.shape()[0], conv.kernel.shape()[1]))?;
                let (cc, ho, wo) = conv_forward(&y, h, w, conv);
                x = cc.out.clone();
                cache.conv_caches.push(cc);
                (h, w) = (ho, wo);
            } else {
                x = y;
            }
        }
        let units = self.blocks.last().expect("validated").units();
        let f = self.feature_dim();
        let mut out = vec![T::zero(); h * w * f];
        gemm(
            T::one(),
            MatRef::new(&x, h * w, units),
            MatRef::new(self.out_w.data(), f, units).t(),
            T::zero(),
            MatMut::new(&mut out, h * w, f),
        );
        add_bias_rows(&mut out, self.out_b.data());
        cache.final_in = x;
        Ok((Tensor::from_vec(&[h, w, f], out)?, cache))
    }

    /// Accumulates parameter gradients for `d_e` (same shape as the output).
    pub fn backward(&self, cache: &EncoderCache<T>, d_e: &[T], grad: &mut EncoderStack<T>) {
        let one = T::one();
        let units = self.blocks.last().expect("validated").units();
        let f = self.feature_dim();
        let npix = cache.final_in.len() / units;
        col_sum_acc(d_e, grad.out_b.data_mut());
        gemm(
            one,
            MatRef::new(d_e, npix, f).t(),
            MatRef::new(&cache.final_in, npix, units),
            one,
            MatMut::new(grad.out_w.data_mut(), f, units),
        );
        let mut d = vec![T::zero(); npix * units];
        gemm(
            one,
            MatRef::new(d_e, npix, f),
            MatRef::new(self.out_w.data(), f, units),
            T::zero(),
            MatMut::new(&mut d, npix, units),
        );
        for k in (0..self.blocks.len()).rev() {
            let (h, w) = cache.dims[k];
            if k < self.convs.len() {
                d = conv_backward(
                    &cache.conv_caches[k],
                    &d,
                    h,
                    w,
                    &self.convs[k],
                    &mut grad.convs[k],
                );
            }
            if let Some(m) = &cache.masks[k] {
                for (v, &s) in d.iter_mut().zip(m) {
                    *v *= s;
                }
            }
            let x = &cache.block_inputs[k];
            let mut dx = if k > 0 {
                Some(vec![T::zero(); x.len()])
            } else {
                None
            };
            self.blocks[k].backward_raw(
                x,
                &cache.block_caches[k],
                &d,
                &mut grad.blocks[k],
                dx.as_deref_mut(),
            );
            if let Some(dx) = dx {
                d = dx;
            }
        }
    }
}

impl<T: Real> Parameterized<T> for EncoderStack<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (k, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("encoder.block{k}"), f);
        }
        for (k, c) in self.convs.iter().enumerate() {
            f(format!("encoder.conv{k}.bias"), &c.bias);
            f(format!("encoder.conv{k}.kernel"), &c.kernel);
        }
        f("encoder.out.b".into(), &self.out_b);
        f("encoder.out.w".into(), &self.out_w);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (k, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("encoder.block{k}"), f);
        }
        for (k, c) in self.convs.iter_mut().enumerate() {
            f(format!("encoder.conv{k}.bias"), &mut c.bias);
            f(format!("encoder.conv{k}.kernel"), &mut c.kernel);
        }
        f("encoder.out.b".into(), &mut self.out_b);
        f("encoder.out.w".into(), &mut self.out_w);
    }
}

/// Encodes `image` with `stack`; see [`EncoderStack::forward`].
pub fn encode<T: Real>(
    image: &Tensor<T>,
    stack: &EncoderStack<T>,
    mode: DropoutMode,
) -> Result<Tensor<T>> {
    stack.forward(image, mode).map(|(e, _)| e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            mdlstm_units: vec![2, 3, 2],
            conv_features: vec![3, 4],
            conv_kernel: [2, 2],
            feature_dim: 5,
            dropout: 0.5,
            init_range: 0.5,
        }
    }

    #[test]
    fn conv_examples() {
        let x = Tensor::<f64>::zeros(&[2, 2, 1]);
        let k = Tensor::zeros(&[2, 2, 1, 1]);
        let out = conv_subsample(&x, &k, &Tensor::zeros(&[1]), (2, 2)).unwrap();
        assert_eq!((out.shape(), out.data()), (&[1usize, 1, 1][..], &[0.0][..]));

        let x = Tensor::<f64>::filled(&[4, 4, 1], 1.0);
        let k = Tensor::filled(&[2, 2, 1, 1], 0.25);
        let out = conv_subsample(&x, &k, &Tensor::zeros(&[1]), (2, 2)).unwrap();
        assert_eq!(out.shape(), [2, 2, 1]);
        assert!(out.data().iter().all(|&v| (v - 1f64.tanh()).abs() < 1e-15));
    }

    #[test]
    fn conv_matches_direct_windowed_oracle() {
        let mut r = rng(1);
        let x = Tensor::<f64>::uniform(&[5, 6, 3], 1.0, &mut r);
        let k = Tensor::uniform(&[2, 2, 3, 4], 0.7, &mut r);
        let b = Tensor::uniform(&[4], 0.3, &mut r);
        let out = conv_subsample(&x, &k, &b, (2, 2)).unwrap();
        assert_eq!(out.shape(), [2, 3, 4]);
        for oi in 0..2 {
            for oj in 0..3 {
                for f in 0..4 {
                    let mut s = b.data()[f];
                    for a in 0..2 {
                        for bb in 0..2 {
                            for c in 0..3 {
                                let kv = k.data()[((a * 2 + bb) * 3 + c) * 4 + f];
                                s += x.at3(oi * 2 + a, oj * 2 + bb, c) * kv;
                            }
                        }
                    }
                    assert!((out.at3(oi, oj, f) - s.tanh()).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::<f64>::zeros(&[1, 4, 1]);
        let k = Tensor::zeros(&[2, 2, 1, 1]);
        let err = conv_subsample(&x, &k, &Tensor::zeros(&[1]), (2, 2)).unwrap_err();
        assert!(
            matches!(err, Error::Domain(ref m) if m.contains("2x2")),
            "{err}"
        );
        let x = Tensor::<f64>::zeros(&[4, 4, 1]);
        assert!(matches!(
            conv_subsample(&x, &k, &Tensor::zeros(&[1]), (1, 1)),
            Err(Error::Config(_))
        ));
        assert!(
            conv_subsample(&Tensor::zeros(&[4, 4, 2]), &k, &Tensor::zeros(&[1]), (2, 2)).is_err()
        );
    }

    #[test]
    fn collapse_examples() {
        let mut r = rng(2);
        let row = Tensor::<f64>::uniform(&[1, 4, 2], 1.0, &mut r);
        assert_eq!(collapse(&row).unwrap().data(), row.data());

        let mut data = row.data().to_vec();
        data.extend(row.data().iter().map(|v| -v));
        let two = Tensor::from_vec(&[2, 4, 2], data).unwrap();
        assert!(collapse(&two).unwrap().data().iter().all(|&v| v == 0.0));

        let m = Tensor::<f64>::uniform(&[3, 4, 2], 1.0, &mut r);
        let c = collapse(&m).unwrap();
        for j in 0..4 {
            for k in 0..2 {
                let want = m.at3(0, j, k) + m.at3(1, j, k) + m.at3(2, j, k);
                assert_eq!(c.at2(j, k), want);
            }
        }
    }

    #[test]
    fn default_stack_shape_and_determinism() {
        let mut r = rng(3);
        let stack = EncoderStack::<f32>::new(&EncoderConfig::default(), &mut r).unwrap();
        let img = Tensor::uniform(&[16, 40, 1], 1.0, &mut r).map(|v: f32| v.abs());
        let a = encode(&img, &stack, DropoutMode::Eval).unwrap();
        assert_eq!(a.shape(), [4, 10, 80]);
        let b = encode(&img, &stack, DropoutMode::Eval).unwrap();
        assert_eq!(a, b);
        let t1 = encode(&img, &stack, DropoutMode::Train { seed: 9 }).unwrap();
        let t2 = encode(&img, &stack, DropoutMode::Train { seed: 9 }).unwrap();
        let t3 = encode(&img, &stack, DropoutMode::Train { seed: 10 }).unwrap();
        assert_eq!(t1, t2);
        assert_ne!(t1, t3);
        assert_ne!(t1, a);
    }

    #[test]
    fn too_small_images_are_rejected() {
        let mut r = rng(4);
        let stack = EncoderStack::<f64>::new(&EncoderConfig::default(), &mut r).unwrap();
        let err = encode(&Tensor::zeros(&[3, 40, 1]), &stack, DropoutMode::Eval).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(encode(&Tensor::zeros(&[8, 8, 2]), &stack, DropoutMode::Eval).is_err());
    }

    fn encoder_grad_check(mode: DropoutMode, h: usize, w: usize) -> f64 {
        let mut r = rng(5);
        let stack = EncoderStack::<f64>::new(&small_config(), &mut r).unwrap();
        let img = Tensor::uniform(&[h, w, 1], 1.0, &mut r).map(|v: f64| v.abs());
        let (e, cache) = stack.forward(&img, mode).unwrap();
        let proj = Tensor::<f64>::uniform(e.shape(), 1.0, &mut r);
        let mut grad = stack.clone();
        grad.fill_zero();
        stack.backward(&cache, proj.data(), &mut grad);
        let params = stack.to_param_set();
        let report = grad_check(
            |ps| {
                let mut s = stack.clone();
                s.load_param_set(ps)?;
                let e = encode(&img, &s, mode)?;
                Ok(e.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
            },
            &grad.to_param_set(),
            &params,
            1e-5,
        )
        .unwrap();
        report.max_rel_error
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let err = encoder_grad_check(DropoutMode::Eval, 12, 20);
        assert!(err < 1e-4, "max rel error {err}");
    }

    #[test]
    fn encoder_gradients_with_dropout_masks() {
        let err = encoder_grad_check(DropoutMode::Train { seed: 3 }, 9, 11);
        assert!(err < 1e-4, "max rel error {err}");
    }
}

//! Seeded gradient-check fixtures for each component, shared by the CLI,
//! the acceptance suite and the Python bindings.
//!
//! Losses that are sums of many terms are evaluated as `sum_t (l_t - l_t^0)`
//! with `l_t^0` the unperturbed terms. The offset is constant, so gradients
//! are unchanged, while the central difference no longer loses the low bits
//! of small per-parameter effects against a large total.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{encode, DropoutMode, EncoderConfig, EncoderStack};
use crate::error::{Error, Result};
use crate::gradcheck::{grad_check, GradCheckReport};
use crate::mdlstm::{CellParams, Direction, DirectionalLayer};
use crate::model::{Head, Model, ModelConfig};
use crate::params::Parameterized;
use crate::tensor::{ParamSet, Tensor};
use crate::vocab::Vocab;

/// Central-difference step used by every scope.
pub const CHECK_EPS: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const CHECK_THRESHOLD: f64 = 1e-4;
/// Seed whose fixtures pass every scope; the CLI default.
pub const DEFAULT_CHECK_SEED: u64 = 29;

const HEIGHT: usize = 12;
const WIDTH: usize = 40;
/// Characters of the fixture target, over the vocabulary `abc`.
const TARGET: [usize; 3] = [0, 2, 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scope {
    /// One directional MDLSTM layer.
    Cell,
    /// The full encoder stack with dropout masks active.
    Encoder,
    /// Collapse, linear head and CTC loss over a fixed feature map.
    Ctc,
    /// Scorer, state LSTM and character decoder over a fixed feature map.
    Attention,
    /// Encoder, scorer, state LSTM and decoder under the attention loss.
    Full,
}

impl Scope {
    pub const ALL: [Scope; 5] = [
        Scope::Cell,
        Scope::Encoder,
        Scope::Ctc,
        Scope::Attention,
        Scope::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scope::Cell => "cell",
            Scope::Encoder => "encoder",
            Scope::Ctc => "ctc",
            Scope::Attention => "attention",
            Scope::Full => "full",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scope::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown gradcheck scope {s:?} (cell|encoder|ctc|attention|full)"
                ))
            })
    }
}

/// A flat map of blocks four columns wide, each with a random level and a
/// random vertical ramp, clamped to `[0, 1]`.
pub fn block_image(seed: u64, height: usize, width: usize) -> Tensor<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<(f64, f64)> = (0..width.div_ceil(4))
        .map(|_| (r.gen(), r.gen::<f64>() - 0.5))
        .collect();
    let mut img = Tensor::zeros(&[height, width, 1]);
    for i in 0..height {
        for j in 0..width {
            let (level, ramp) = blocks[j / 4];
            let v = level + ramp * (i as f64 / height as f64 - 0.5);
            img.set3(i, j, 0, v.clamp(0.0, 1.0));
        }
    }
    img
}

/// Model sizes of the `attention`, `ctc` and `full` fixtures.
pub fn small_model_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            mdlstm_units: vec![2, 2, 3],
            conv_features: vec![2, 3],
            conv_kernel: [2, 2],
            feature_dim: 5,
            dropout: 0.0,
            init_range: 0.8,
        },
        attention_units: 3,
        state_projection: 3,
        state_units: 4,
        decoder_hidden: 4,
        init_range: 1.0,
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b")
        || name.ends_with(".b1")
        || name.ends_with(".b2")
        || name.ends_with(".bias")
}

/// Seeded small model with every bias drawn from `[-0.5, 0.5]`.
pub fn small_model(seed: u64) -> Result<Model<f64>> {
    let mut m = Model::<f64>::seeded(Vocab::new("abc")?, small_model_config(), seed)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    m.visit_mut(&mut |name, t| {
        if is_bias(&name) {
            *t = Tensor::uniform(t.shape(), 0.5, &mut r);
        }
    });
    Ok(m)
}

fn subset(ps: &ParamSet<f64>, keep: impl Fn(&str) -> bool) -> ParamSet<f64> {
    ps.iter()
        .filter(|(n, _)| keep(n))
        .map(|(n, t)| (n.to_owned(), t.clone()))
        .collect()
}

fn with_overrides(m: &Model<f64>, ps: &ParamSet<f64>) -> Result<Model<f64>> {
    let mut all = m.to_param_set();
    for (n, t) in ps.iter() {
        *all.get_mut(n)
            .ok_or_else(|| Error::Config(format!("unknown parameter {n}")))? = t.clone();
    }
    let mut out = m.zeros_like();
    out.load_param_set(&all)?;
    Ok(out)
}

fn offset_sum(terms: &[f64], base: &[f64]) -> f64 {
    terms.iter().zip(base).map(|(a, b)| a - b).sum()
}

/// Runs the `scope` fixture built from `seed`. With `perturb`, every
/// analytic gradient is scaled by 1.01 before comparison, which any working
/// check must reject.
pub fn scoped_grad_check(scope: Scope, seed: u64, perturb: bool) -> Result<GradCheckReport> {
    let (params, mut grads, mut loss): (
        ParamSet<f64>,
        ParamSet<f64>,
        Box<dyn FnMut(&ParamSet<f64>) -> Result<f64>>,
    ) = match scope {
        Scope::Cell => cell_fixture(seed)?,
        Scope::Encoder => encoder_fixture(seed)?,
        Scope::Ctc => ctc_fixture(seed)?,
        Scope::Attention => attention_fixture(seed)?,
        Scope::Full => full_fixture(seed)?,
    };
    if perturb {
        for (_, t) in grads.iter_mut() {
            t.scale(1.01);
        }
    }
    grad_check(&mut loss, &grads, &params, CHECK_EPS)
}

type Fixture = (
    ParamSet<f64>,
    ParamSet<f64>,
    Box<dyn FnMut(&ParamSet<f64>) -> Result<f64>>,
);

fn projection_loss(out: &[f64], proj: &[f64]) -> f64 {
    out.iter().zip(proj).map(|(a, b)| a * b).sum()
}

fn cell_fixture(seed: u64) -> Result<Fixture> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (c, u) = (2, 3);
    let mut cell = CellParams::<f64>::uniform(c, u, 0.5, &mut r);
    cell.b = Tensor::uniform(cell.b.shape(), 0.3, &mut r);
    let layer = DirectionalLayer {
        direction: Direction::ALL[(seed % 4) as usize],
        cell,
    };
    let x = Tensor::<f64>::uniform(&[HEIGHT, WIDTH, c], 1.0, &mut r);
    let proj = Tensor::<f64>::uniform(&[HEIGHT * WIDTH * u], 1.0, &mut r);
    let cache = layer.forward_raw(x.data(), HEIGHT, WIDTH);
    let mut grad = CellParams::zeros(c, u);
    layer.backward_raw(x.data(), &cache, proj.data(), &mut grad, None);
    let to_set = |p: &CellParams<f64>| {
        let mut out = Vec::new();
        p.visit("cell", &mut |n, t| out.push((n, t.clone())));
        out.into_iter().collect::<ParamSet<f64>>()
    };
    let params = to_set(&layer.cell);
    let grads = to_set(&grad);
    let loss = move |ps: &ParamSet<f64>| -> Result<f64> {
        let mut l = layer.clone();
        l.cell.visit_mut("cell", &mut |n, t| {
            *t = ps.get(&n).expect("cell parameter").clone()
        });
        Ok(projection_loss(
            l.forward_raw(x.data(), HEIGHT, WIDTH).output(),
            proj.data(),
        ))
    };
    Ok((params, grads, Box::new(loss)))
}

fn encoder_fixture(seed: u64) -> Result<Fixture> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let config = EncoderConfig {
        dropout: 0.5,
        ..small_model_config().encoder
    };
    let mut stack = EncoderStack::<f64>::new(&config, &mut r)?;
    stack.visit_mut(&mut |name, t| {
        if is_bias(&name) {
            *t = Tensor::uniform(t.shape(), 0.3, &mut r);
        }
    });
    let image = block_image(seed.wrapping_add(1), HEIGHT, WIDTH);
    let mode = DropoutMode::Train { seed };
    let (e, cache) = stack.forward(&image, mode)?;
    let proj = Tensor::<f64>::uniform(e.shape(), 1.0, &mut r);
    let mut grad = stack.clone();
    grad.fill_zero();
    stack.backward(&cache, proj.data(), &mut grad);
    let params = stack.to_param_set();
    let loss = move |ps: &ParamSet<f64>| -> Result<f64> {
        let mut s = stack.clone();
        s.load_param_set(ps)?;
        Ok(projection_loss(
            encode(&image, &s, mode)?.data(),
            proj.data(),
        ))
    };
    Ok((params, grad.to_param_set(), Box::new(loss)))
}

fn ctc_fixture(seed: u64) -> Result<Fixture> {
    let m = small_model(seed)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let e = Tensor::<f64>::uniform(&[HEIGHT, WIDTH, m.feature_dim()], 0.5, &mut r);
    let mut g = m.zeros_like();
    let mut d_e = vec![0.0; e.len()];
    m.ctc_head(&e, &TARGET, Some((&mut g, &mut d_e)))?;
    let keep = |n: &str| n.starts_with("ctc.");
    let params = subset(&m.to_param_set(), keep);
    let grads = subset(&g.to_param_set(), keep);
    let loss = move |ps: &ParamSet<f64>| -> Result<f64> {
        with_overrides(&m, ps)?.ctc_head(&e, &TARGET, None)
    };
    Ok((params, grads, Box::new(loss)))
}

fn attention_fixture(seed: u64) -> Result<Fixture> {
    let m = small_model(seed)?;
    let (h, w) = m.encoder.config.output_size(HEIGHT, WIDTH);
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let e = Tensor::<f64>::uniform(&[h, w, m.feature_dim()], 1.0, &mut r);
    let target = m.attention_target(&TARGET);
    let mut g = m.zeros_like();
    let mut d_e = vec![0.0; e.len()];
    m.attention_backward(&e, &target, usize::MAX, &mut g, &mut d_e)?;
    let keep = |n: &str| {
        n.starts_with("attention.") || n.starts_with("state.") || n.starts_with("decoder.")
    };
    let params = subset(&m.to_param_set(), keep);
    let grads = subset(&g.to_param_set(), keep);
    let base = m.attention_terms(&e, &target)?;
    let loss = move |ps: &ParamSet<f64>| -> Result<f64> {
        Ok(offset_sum(
            &with_overrides(&m, ps)?.attention_terms(&e, &target)?,
            &base,
        ))
    };
    Ok((params, grads, Box::new(loss)))
}

fn full_fixture(seed: u64) -> Result<Fixture> {
    let m = small_model(seed)?;
    let image = block_image(seed.wrapping_add(1), HEIGHT, WIDTH);
    let mode = DropoutMode::Eval;
    let mut g = m.zeros_like();
    m.loss_and_grad(&image, &TARGET, Head::Attention, mode, usize::MAX, &mut g)?;
    let base = m.loss_terms(&image, &TARGET, Head::Attention, mode)?;
    // the CTC head does not enter the attention loss
    let keep = |n: &str| !n.starts_with("ctc.");
    let params = subset(&m.to_param_set(), keep);
    let grads = subset(&g.to_param_set(), keep);
    let loss = move |ps: &ParamSet<f64>| -> Result<f64> {
        Ok(offset_sum(
            &with_overrides(&m, ps)?.loss_terms(&image, &TARGET, Head::Attention, mode)?,
            &base,
        ))
    };
    Ok((params, grads, Box::new(loss)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_names_round_trip() {
        for s in Scope::ALL {
            assert_eq!(s.name().parse::<Scope>().unwrap(), s);
        }
        assert!("mdlstm".parse::<Scope>().is_err());
    }

    #[test]
    fn cheap_scopes_pass_and_reject_planted_errors() {
        for scope in [Scope::Cell, Scope::Ctc] {
            let ok = scoped_grad_check(scope, DEFAULT_CHECK_SEED, false).unwrap();
            assert!(ok.max_rel_error < 1e-6, "{scope}: {ok:?}");
            let bad = scoped_grad_check(scope, DEFAULT_CHECK_SEED, true).unwrap();
            assert!(bad.max_rel_error > 1e-3, "{scope}: {bad:?}");
        }
    }

    #[test]
    fn block_image_is_deterministic_and_bounded() {
        let a = block_image(3, 12, 40);
        assert_eq!(a, block_image(3, 12, 40));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, block_image(4, 12, 40));
    }
}

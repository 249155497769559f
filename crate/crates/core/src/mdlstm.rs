//! Two-dimensional LSTM layers scanning an image in one of four corner-to-corner
//! orders, and the four-direction block that sums their outputs.
//!
//! Each cell has an input gate, one forget gate per predecessor axis, an
//! output gate and a candidate:
//!
//! ```text
//! c = i * g + f_h * c_h + f_v * c_v
//! h = o * tanh(c)
//! ```
//!
//! Predecessors outside the image contribute zero vectors. Evaluation runs
//! along anti-diagonals of the scan so that the recurrent products of one
//! diagonal are a single matrix product.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gemm, MatMut, MatRef};
use crate::ops::sigmoid;
use crate::tensor::{Real, Tensor};

/// Number of gate blocks in the fused weight matrices.
pub const GATES: usize = 5;
const GATE_I: usize = 0;
const GATE_FH: usize = 1;
const GATE_FV: usize = 2;
const GATE_O: usize = 3;
const GATE_G: usize = 4;

/// Scan direction, named by horizontal then vertical travel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Left to right, top to bottom.
    RightDown,
    /// Right to left, top to bottom.
    LeftDown,
    /// Left to right, bottom to top.
    RightUp,
    /// Right to left, bottom to top.
    LeftUp,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::RightDown,
        Direction::LeftDown,
        Direction::RightUp,
        Direction::LeftUp,
    ];

    pub fn rightward(self) -> bool {
        matches!(self, Direction::RightDown | Direction::RightUp)
    }

    pub fn downward(self) -> bool {
        matches!(self, Direction::RightDown | Direction::LeftDown)
    }

    /// The direction seen in a horizontally flipped image.
    pub fn mirror_horizontal(self) -> Self {
        match self {
            Direction::RightDown => Direction::LeftDown,
            Direction::LeftDown => Direction::RightDown,
            Direction::RightUp => Direction::LeftUp,
            Direction::LeftUp => Direction::RightUp,
        }
    }

    /// The direction seen in a vertically flipped image.
    pub fn mirror_vertical(self) -> Self {
        match self {
            Direction::RightDown => Direction::RightUp,
            Direction::RightUp => Direction::RightDown,
            Direction::LeftDown => Direction::LeftUp,
            Direction::LeftUp => Direction::LeftDown,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Direction::RightDown => "rd",
            Direction::LeftDown => "ld",
            Direction::RightUp => "ru",
            Direction::LeftUp => "lu",
        }
    }
}

/// Weights of one 2D LSTM cell, gates fused along the rows in the order
/// input, forget-horizontal, forget-vertical, output, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams<T> {
    /// `[5u, in]`
    pub w: Tensor<T>,
    /// `[5u, u]`, applied to the horizontal predecessor's output.
    pub u_h: Tensor<T>,
    /// `[5u, u]`, applied to the vertical predecessor's output.
    pub u_v: Tensor<T>,
    /// `[5u]`
    pub b: Tensor<T>,
}

impl<T: Real> CellParams<T> {
    pub fn zeros(in_features: usize, units: usize) -> Self {
        CellParams {
            w: Tensor::zeros(&[GATES * units, in_features]),
            u_h: Tensor::zeros(&[GATES * units, units]),
            u_v: Tensor::zeros(&[GATES * units, units]),
            b: Tensor::zeros(&[GATES * units]),
        }
    }

    /// Weights uniform in `[-range, range]`, zero biases.
    pub fn uniform<R: Rng + ?Sized>(
        in_features: usize,
        units: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        CellParams {
            w: Tensor::uniform(&[GATES * units, in_features], range, rng),
            u_h: Tensor::uniform(&[GATES * units, units], range, rng),
            u_v: Tensor::uniform(&[GATES * units, units], range, rng),
            b: Tensor::zeros(&[GATES * units]),
        }
    }

    pub fn units(&self) -> usize {
        self.b.len() / GATES
    }

    pub fn in_features(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.b.len();
        if self.b.shape().len() != 1 || g % GATES != 0 {
            return Err(Error::dim("CellParams bias", self.b.shape(), &[GATES]));
        }
        let u = g / GATES;
        if self.w.shape().len() != 2 || self.w.shape()[0] != g {
            return Err(Error::dim("CellParams input weights", self.w.shape(), &[g]));
        }
        for m in [&self.u_h, &self.u_v] {
            if m.shape() != [g, u] {
                return Err(Error::dim(
                    "CellParams recurrent weights",
                    m.shape(),
                    &[g, u],
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(format!("{prefix}.b"), &self.b);
        f(format!("{prefix}.u_h"), &self.u_h);
        f(format!("{prefix}.u_v"), &self.u_v);
        f(format!("{prefix}.w"), &self.w);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.b"), &mut self.b);
        f(format!("{prefix}.u_h"), &mut self.u_h);
        f(format!("{prefix}.u_v"), &mut self.u_v);
        f(format!("{prefix}.w"), &mut self.w);
    }
}

/// One scanning direction with its own cell weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalLayer<T> {
    pub direction: Direction,
    pub cell: CellParams<T>,
}

/// `X W^T + b` for every row of `x` (`rows x in`), giving `rows x 5u`.
pub(crate) fn input_preact<T: Real>(x: MatRef<'_, T>, cell: &CellParams<T>) -> Vec<T> {
    let g = cell.b.len();
    let rows = x.rows();
    let mut pre = vec![T::zero(); rows * g];
    let w = MatRef::new(cell.w.data(), g, cell.in_features());
    gemm(
        T::one(),
        x,
        w.t(),
        T::zero(),
        MatMut::new(&mut pre, rows, g),
    );
    add_bias_rows(&mut pre, cell.b.data());
    pre
}

pub(crate) fn add_bias_rows<T: Real>(m: &mut [T], bias: &[T]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Gate nonlinearities and state update for one position. `pre` holds the
/// summed pre-activations and is overwritten with the activated gates.
#[inline]
fn cell_update<T: Real>(
    pre: &mut [T],
    c_h: &[T],
    c_v: &[T],
    c: &mut [T],
    tc: &mut [T],
    h: &mut [T],
) {
    let u = c.len();
    let (ifo, g) = pre.split_at_mut(GATE_G * u);
    for v in ifo.iter_mut() {
        *v = sigmoid(*v);
    }
    for v in g.iter_mut() {
        *v = v.tanh();
    }
    for k in 0..u {
        let ck = ifo[GATE_I * u + k] * g[k]
            + ifo[GATE_FH * u + k] * c_h[k]
            + ifo[GATE_FV * u + k] * c_v[k];
        c[k] = ck;
        tc[k] = ck.tanh();
        h[k] = ifo[GATE_O * u + k] * tc[k];
    }
}

fn check_vec<T: Real>(op: &'static str, t: &Tensor<T>, n: usize) -> Result<()> {
    if t.shape() != [n] {
        return Err(Error::dim(op, t.shape(), &[n]));
    }
    Ok(())
}

/// A single cell evaluation given both predecessors' outputs and states.
pub fn mdlstm_cell_step<T: Real>(
    x: &Tensor<T>,
    h_h: &Tensor<T>,
    h_v: &Tensor<T>,
    c_h: &Tensor<T>,
    c_v: &Tensor<T>,
    p: &CellParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    p.validate()?;
    let u = p.units();
    check_vec("mdlstm_cell_step input", x, p.in_features())?;
    for t in [h_h, h_v, c_h, c_v] {
        check_vec("mdlstm_cell_step state", t, u)?;
    }
    let mut pre = input_preact(MatRef::new(x.data(), 1, p.in_features()), p);
    let mut rec = vec![T::zero(); GATES * u];
    recurrent_preact(h_h.data(), h_v.data(), 1, p, &mut rec);
    for (a, &b) in pre.iter_mut().zip(&rec) {
        *a += b;
    }
    let mut c = vec![T::zero(); u];
    let mut tc = vec![T::zero(); u];
    let mut h = vec![T::zero(); u];
    cell_update(&mut pre, c_h.data(), c_v.data(), &mut c, &mut tc, &mut h);
    Ok((Tensor::vector(h)?, Tensor::vector(c)?))
}

/// `out = H_h U_h^T + H_v U_v^T` for `n` stacked predecessor rows.
fn recurrent_preact<T: Real>(hh: &[T], hv: &[T], n: usize, p: &CellParams<T>, out: &mut [T]) {
    let u = p.units();
    let g = GATES * u;
    gemm(
        T::one(),
        MatRef::new(hh, n, u),
        MatRef::new(p.u_h.data(), g, u).t(),
        T::zero(),
        MatMut::new(out, n, g),
    );
    gemm(
        T::one(),
        MatRef::new(hv, n, u),
        MatRef::new(p.u_v.data(), g, u).t(),
        T::one(),
        MatMut::new(out, n, g),
    );
}

/// Visiting order of a scan: pixels grouped by anti-diagonal, each with its
/// horizontal and vertical predecessor (raster indices).
#[derive(Clone, Debug)]
pub(crate) struct ScanPlan {
    pub height: usize,
    pub width: usize,
    pub order: Vec<usize>,
    pub diag_starts: Vec<usize>,
    pub pred_h: Vec<Option<usize>>,
    pub pred_v: Vec<Option<usize>>,
}

impl ScanPlan {
    pub fn new(height: usize, width: usize, dir: Direction) -> Self {
        let n = height * width;
        let img = |si: usize, sj: usize| -> usize {
            let i = if dir.downward() { si } else { height - 1 - si };
            let j = if dir.rightward() { sj } else { width - 1 - sj };
            i * width + j
        };
        let mut order = Vec::with_capacity(n);
        let mut diag_starts = Vec::with_capacity(height + width);
        let mut pred_h = vec![None; n];
        let mut pred_v = vec![None; n];
        for d in 0..(height + width - 1) {
            diag_starts.push(order.len());
            let lo = d.saturating_sub(width - 1);
            let hi = d.min(height - 1);
            for si in lo..=hi {
                let sj = d - si;
                let p = img(si, sj);
                order.push(p);
                if sj > 0 {
                    pred_h[p] = Some(img(si, sj - 1));
                }
                if si > 0 {
                    pred_v[p] = Some(img(si - 1, sj));
                }
            }
        }
        diag_starts.push(order.len());
        ScanPlan {
            height,
            width,
            order,
            diag_starts,
            pred_h,
            pred_v,
        }
    }

    pub fn num_diagonals(&self) -> usize {
        self.diag_starts.len() - 1
    }

    pub fn diagonal(&self, d: usize) -> &[usize] {
        &self.order[self.diag_starts[d]..self.diag_starts[d + 1]]
    }
}

/// Forward activations of one directional scan, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ScanCache<T> {
    pub(crate) plan: ScanPlan,
    pub(crate) units: usize,
    /// `P x 5u` activated gates.
    pub(crate) gates: Vec<T>,
    /// `P x u` cell states.
    pub(crate) cell: Vec<T>,
    pub(crate) tanh_c: Vec<T>,
    /// `P x u` outputs.
    pub(crate) out: Vec<T>,
}

impl<T: Real> ScanCache<T> {
    pub fn output(&self) -> &[T] {
        &self.out
    }
}

fn gather_rows<T: Real>(
    src: &[T],
    idx: impl Iterator<Item = Option<usize>>,
    width: usize,
    dst: &mut [T],
) {
    for (row, p) in dst.chunks_exact_mut(width).zip(idx) {
        match p {
            Some(p) => row.copy_from_slice(&src[p * width..(p + 1) * width]),
            None => row.fill(T::zero()),
        }
    }
}

/// Runs the recurrence given per-pixel input pre-activations (`P x 5u`,
/// including the bias).
pub(crate) fn scan_forward<T: Real>(
    mut pre: Vec<T>,
    height: usize,
    width: usize,
    dir: Direction,
    p: &CellParams<T>,
) -> ScanCache<T> {
    let u = p.units();
    let g = GATES * u;
    let plan = ScanPlan::new(height, width, dir);
    let npix = height * width;
    debug_assert_eq!(pre.len(), npix * g);
    let mut cell = vec![T::zero(); npix * u];
    let mut tanh_c = vec![T::zero(); npix * u];
    let mut out = vec![T::zero(); npix * u];
    let max_n = height.min(width);
    let mut hh = vec![T::zero(); max_n * u];
    let mut hv = vec![T::zero(); max_n * u];
    let mut rec = vec![T::zero(); max_n * g];
    let mut ch = vec![T::zero(); u];
    let mut cv = vec![T::zero(); u];
    for d in 0..plan.num_diagonals() {
        let diag = plan.diagonal(d);
        let n = diag.len();
        gather_rows(
            &out,
            diag.iter().map(|&q| plan.pred_h[q]),
            u,
            &mut hh[..n * u],
        );
        gather_rows(
            &out,
            diag.iter().map(|&q| plan.pred_v[q]),
            u,
            &mut hv[..n * u],
        );
        recurrent_preact(&hh[..n * u], &hv[..n * u], n, p, &mut rec[..n * g]);
        for (k, &q) in diag.iter().enumerate() {
            let row = &mut pre[q * g..(q + 1) * g];
            for (a, &b) in row.iter_mut().zip(&rec[k * g..(k + 1) * g]) {
                *a += b;
            }
            match plan.pred_h[q] {
                Some(r) => ch.copy_from_slice(&cell[r * u..(r + 1) * u]),
                None => ch.fill(T::zero()),
            }
            match plan.pred_v[q] {
                Some(r) => cv.copy_from_slice(&cell[r * u..(r + 1) * u]),
                None => cv.fill(T::zero()),
            }
            let (c_row, tc_row, h_row) = (
                &mut cell[q * u..(q + 1) * u],
                &mut tanh_c[q * u..(q + 1) * u],
                &mut out[q * u..(q + 1) * u],
            );
            cell_update(row, &ch, &cv, c_row, tc_row, h_row);
        }
    }
    ScanCache {
        plan,
        units: u,
        gates: pre,
        cell,
        tanh_c,
        out,
    }
}

/// Backpropagates `d_out` (`P x u`) through a scan. Accumulates recurrent
/// weight gradients into `grad` and returns the gradient of the input
/// pre-activations (`P x 5u`). Bias and input weights are left to the caller.
pub(crate) fn scan_backward<T: Real>(
    cache: &ScanCache<T>,
    d_out: &[T],
    p: &CellParams<T>,
    grad: &mut CellParams<T>,
) -> Vec<T> {
    let u = cache.units;
    let g = GATES * u;
    let plan = &cache.plan;
    let npix = plan.height * plan.width;
    let mut dpre = vec![T::zero(); npix * g];
    let mut dh_rec = vec![T::zero(); npix * u];
    let mut dc_rec = vec![T::zero(); npix * u];
    let max_n = plan.height.min(plan.width);
    let mut dp_batch = vec![T::zero(); max_n * g];
    let mut dh_batch = vec![T::zero(); max_n * u];
    let one = T::one();
    for d in (0..plan.num_diagonals()).rev() {
        let diag = plan.diagonal(d);
        let n = diag.len();
        for (k, &q) in diag.iter().enumerate() {
            let gates = &cache.gates[q * g..(q + 1) * g];
            let tc = &cache.tanh_c[q * u..(q + 1) * u];
            let dp = &mut dpre[q * g..(q + 1) * g];
            let ph = plan.pred_h[q];
            let pv = plan.pred_v[q];
            for j in 0..u {
                let gi = gates[GATE_I * u + j];
                let gfh = gates[GATE_FH * u + j];
                let gfv = gates[GATE_FV * u + j];
                let go = gates[GATE_O * u + j];
                let gg = gates[GATE_G * u + j];
                let dh = d_out[q * u + j] + dh_rec[q * u + j];
                let t = tc[j];
                let dc = dc_rec[q * u + j] + dh * go * (one - t * t);
                let ch = ph.map_or(T::zero(), |r| cache.cell[r * u + j]);
                let cv = pv.map_or(T::zero(), |r| cache.cell[r * u + j]);
                dp[GATE_I * u + j] = dc * gg * gi * (one - gi);
                dp[GATE_FH * u + j] = dc * ch * gfh * (one - gfh);
                dp[GATE_FV * u + j] = dc * cv * gfv * (one - gfv);
                dp[GATE_O * u + j] = dh * t * go * (one - go);
                dp[GATE_G * u + j] = dc * gi * (one - gg * gg);
                if let Some(r) = ph {
                    dc_rec[r * u + j] += dc * gfh;
                }
                if let Some(r) = pv {
                    dc_rec[r * u + j] += dc * gfv;
                }
            }
            dp_batch[k * g..(k + 1) * g].copy_from_slice(dp);
        }
        for (weights, preds) in [(&p.u_h, &plan.pred_h), (&p.u_v, &plan.pred_v)] {
            gemm(
                one,
                MatRef::new(&dp_batch[..n * g], n, g),
                MatRef::new(weights.data(), g, u),
                T::zero(),
                MatMut::new(&mut dh_batch[..n * u], n, u),
            );
            for (k, &q) in diag.iter().enumerate() {
                if let Some(r) = preds[q] {
                    for j in 0..u {
                        dh_rec[r * u + j] += dh_batch[k * u + j];
                    }
                }
            }
        }
    }
    let mut hpred = vec![T::zero(); npix * u];
    for (target, preds) in [(&mut grad.u_h, &plan.pred_h), (&mut grad.u_v, &plan.pred_v)] {
        gather_rows(&cache.out, preds.iter().copied(), u, &mut hpred);
        gemm(
            one,
            MatRef::new(&dpre, npix, g).t(),
            MatRef::new(&hpred, npix, u),
            one,
            MatMut::new(target.data_mut(), g, u),
        );
    }
    dpre
}

/// Column sums of a row-major `rows x cols` matrix added into `acc`.
pub(crate) fn col_sum_acc<T: Real>(m: &[T], acc: &mut [T]) {
    for row in m.chunks_exact(acc.len()) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

impl<T: Real> DirectionalLayer<T> {
    /// Forward over a row-major `height x width x in` buffer.
    pub(crate) fn forward_raw(&self, x: &[T], height: usize, width: usize) -> ScanCache<T> {
        let pre = input_preact(
            MatRef::new(x, height * width, self.cell.in_features()),
            &self.cell,
        );
        scan_forward(pre, height, width, self.direction, &self.cell)
    }

    /// Accumulates parameter gradients into `grad` and, when requested, the
    /// input gradient into `d_x`.
    pub(crate) fn backward_raw(
        &self,
        x: &[T],
        cache: &ScanCache<T>,
        d_out: &[T],
        grad: &mut CellParams<T>,
        d_x: Option<&mut [T]>,
    ) {
        let dpre = scan_backward(cache, d_out, &self.cell, grad);
        let npix = cache.plan.height * cache.plan.width;
        let g = GATES * cache.units;
        let c_in = self.cell.in_features();
        col_sum_acc(&dpre, grad.b.data_mut());
        gemm(
            T::one(),
            MatRef::new(&dpre, npix, g).t(),
            MatRef::new(x, npix, c_in),
            T::one(),
            MatMut::new(grad.w.data_mut(), g, c_in),
        );
        if let Some(d_x) = d_x {
            gemm(
                T::one(),
                MatRef::new(&dpre, npix, g),
                MatRef::new(self.cell.w.data(), g, c_in),
                T::one(),
                MatMut::new(d_x, npix, c_in),
            );
        }
    }
}

fn check_image<T: Real>(
    op: &'static str,
    input: &Tensor<T>,
    channels: usize,
) -> Result<(usize, usize)> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::dim(op, s, &[0, 0, channels]));
    }
    if s[2] != channels {
        return Err(Error::dim(op, s, &[s[0], s[1], channels]));
    }
    Ok((s[0], s[1]))
}

/// One directional layer over an `H x W x C` map, returning `H x W x u`.
pub fn mdlstm_layer<T: Real>(input: &Tensor<T>, layer: &DirectionalLayer<T>) -> Result<Tensor<T>> {
    layer.cell.validate()?;
    let (h, w) = check_image("mdlstm_layer", input, layer.cell.in_features())?;
    let cache = layer.forward_raw(input.data(), h, w);
    Tensor::from_vec(&[h, w, layer.cell.units()], cache.out)
}

/// Four directional layers whose outputs are summed elementwise.
#[derive(Clone, Debug, PartialEq)]
pub struct MdlstmBlock<T> {
    pub layers: Vec<DirectionalLayer<T>>,
}

impl<T: Real> MdlstmBlock<T> {
    pub fn uniform<R: Rng + ?Sized>(
        in_features: usize,
        units: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        MdlstmBlock {
            layers: Direction::ALL
                .iter()
                .map(|&direction| DirectionalLayer {
                    direction,
                    cell: CellParams::uniform(in_features, units, range, rng),
                })
                .collect(),
        }
    }

    pub fn zeros(in_features: usize, units: usize) -> Self {
        MdlstmBlock {
            layers: Direction::ALL
                .iter()
                .map(|&direction| DirectionalLayer {
                    direction,
                    cell: CellParams::zeros(in_features, units),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != 4 {
            return Err(Error::Config(format!(
                "an MDLSTM block needs 4 directional layers, got {}",
                self.layers.len()
            )));
        }
        for d in Direction::ALL {
            if !self.layers.iter().any(|l| l.direction == d) {
                return Err(Error::Config(format!(
                    "MDLSTM block is missing direction {d:?}"
                )));
            }
        }
        let (c, u) = (
            self.layers[0].cell.in_features(),
            self.layers[0].cell.units(),
        );
        for l in &self.layers {
            l.cell.validate()?;
            if l.cell.in_features() != c || l.cell.units() != u {
                return Err(Error::Config(
                    "directional layers of a block must share input and unit counts".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn units(&self) -> usize {
        self.layers[0].cell.units()
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].cell.in_features()
    }

    pub(crate) fn forward_raw(
        &self,
        x: &[T],
        height: usize,
        width: usize,
    ) -> (Vec<T>, Vec<ScanCache<T>>) {
        let caches: Vec<_> = self
            .layers
            .iter()
            .map(|l| l.forward_raw(x, height, width))
            .collect();
        let mut sum = caches[0].out.clone();
        for c in &caches[1..] {
            for (a, &b) in sum.iter_mut().zip(&c.out) {
                *a += b;
            }
        }
        (sum, caches)
    }

    pub(crate) fn backward_raw(
        &self,
        x: &[T],
        caches: &[ScanCache<T>],
        d_out: &[T],
        grad: &mut MdlstmBlock<T>,
        mut d_x: Option<&mut [T]>,
    ) {
        for ((layer, cache), g) in self.layers.iter().zip(caches).zip(&mut grad.layers) {
            layer.backward_raw(x, cache, d_out, &mut g.cell, d_x.as_deref_mut());
        }
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for l in &self.layers {
            l.cell.visit(&format!("{prefix}.{}", l.direction.tag()), f);
        }
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for l in &mut self.layers {
            let tag = l.direction.tag();
            l.cell.visit_mut(&format!("{prefix}.{tag}"), f);
        }
    }
}

/// Elementwise sum of the four directional outputs of `block` on `input`.
pub fn directional_sum<T: Real>(input: &Tensor<T>, block: &MdlstmBlock<T>) -> Result<Tensor<T>> {
    block.validate()?;
    let (h, w) = check_image("directional_sum", input, block.in_features())?;
    let (sum, _) = block.forward_raw(input.data(), h, w);
    Tensor::from_vec(&[h, w, block.units()], sum)
}

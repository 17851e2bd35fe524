//! Forward pass, losses and backpropagation through time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{HeadKind, Layout, PolicyArchitecture, HIST_FEATURES, LSTM_LAYERS};
use super::features::{encode_input, Sample};
use super::mixture::{variance_unclamped, MixtureParams, LN_2PI};
use crate::domain::{AblationMode, ContextVector, FeatureScaler, VehicleKinState};
use crate::error::{Error, Result};

/// Trainable parameters plus the scaler and ablation mode they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub arch: PolicyArchitecture,
    pub mode: AblationMode,
    /// Scales the raw encoded input (history then context features).
    pub scaler: FeatureScaler,
    pub params: Vec<f64>,
    layout: Layout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Sum of squared errors.
    Mse,
    /// Sum of mixture negative log-likelihoods.
    Nll,
}

impl ModelWeights {
    pub fn new(
        arch: PolicyArchitecture,
        mode: AblationMode,
        scaler: FeatureScaler,
        params: Vec<f64>,
    ) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if params.len() != layout.total {
            return Err(Error::domain(format!(
                "architecture needs {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("parameters must be finite"));
        }
        if scaler.dim() != arch.input_dim() {
            return Err(Error::domain(format!(
                "scaler has {} features, architecture expects {}",
                scaler.dim(),
                arch.input_dim()
            )));
        }
        Ok(ModelWeights {
            arch,
            mode,
            scaler,
            params,
            layout,
        })
    }

    /// All parameters zero, identity scaler.
    pub fn zeros(arch: PolicyArchitecture, mode: AblationMode) -> Result<Self> {
        let n = arch.layout().total;
        let dim = arch.input_dim();
        ModelWeights::new(arch, mode, FeatureScaler::identity(dim), vec![0.0; n])
    }

    /// Uniform in `±1/sqrt(fan_in)` per section.
    pub fn init(arch: PolicyArchitecture, mode: AblationMode, scaler: FeatureScaler, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        for pair in layout.sections.chunks(2) {
            let bound = 1.0 / (pair[0].cols as f64).sqrt();
            for sec in pair {
                for p in &mut params[sec.range()] {
                    *p = rng.random_range(-bound..bound);
                }
            }
        }
        ModelWeights::new(arch, mode, scaler, params)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self.arch.head, HeadKind::Mixture { .. })
    }

    pub(crate) fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }

    /// Encodes one input into `buf` (raw features, unscaled).
    pub fn encode(
        &self,
        hist: &[VehicleKinState],
        tl_position: f64,
        ctx: &ContextVector,
        buf: &mut [f64],
    ) -> Result<()> {
        if hist.len() != self.arch.history {
            return Err(Error::domain(format!(
                "history has {} steps, model expects {}",
                hist.len(),
                self.arch.history
            )));
        }
        encode_input(self.mode, hist, tl_position, ctx, buf)
    }

    /// Raw head output for an encoded input.
    pub fn raw_output(&self, input: &[f64], tape: &mut Tape) -> Result<Vec<f64>> {
        if input.len() != self.arch.input_dim() {
            return Err(Error::domain(format!(
                "input has {} features, model expects {}",
                input.len(),
                self.arch.input_dim()
            )));
        }
        forward(self, input, tape);
        Ok(tape.out.clone())
    }
}

/// Deterministic acceleration `f_d(history, context)`.
pub fn forward_deterministic(
    w: &ModelWeights,
    hist: &[VehicleKinState],
    tl_position: f64,
    ctx: &ContextVector,
) -> Result<f64> {
    if w.is_mixture() {
        return Err(Error::domain("forward_deterministic needs a deterministic head"));
    }
    let mut input = vec![0.0; w.arch.input_dim()];
    w.encode(hist, tl_position, ctx, &mut input)?;
    let mut tape = Tape::new(&w.arch);
    forward(w, &input, &mut tape);
    Ok(tape.out[0])
}

/// Mixture parameters `f_p(history, context)`.
pub fn forward_probabilistic(
    w: &ModelWeights,
    hist: &[VehicleKinState],
    tl_position: f64,
    ctx: &ContextVector,
) -> Result<MixtureParams> {
    if !w.is_mixture() {
        return Err(Error::domain("forward_probabilistic needs a mixture head"));
    }
    let mut input = vec![0.0; w.arch.input_dim()];
    w.encode(hist, tl_position, ctx, &mut input)?;
    let mut tape = Tape::new(&w.arch);
    forward(w, &input, &mut tape);
    Ok(MixtureParams::from_raw(&tape.out))
}

/// Activations of one recurrent layer over all steps.
#[derive(Debug, Clone)]
struct LayerTape {
    n_in: usize,
    /// `[x_t; h_{t-1}]` per step.
    cat: Vec<f64>,
    /// Activated gates `i, f, g, o` per step.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Reusable forward activations of one sample.
#[derive(Debug, Clone)]
pub struct Tape {
    steps: usize,
    hidden: usize,
    scaled: Vec<f64>,
    layers: Vec<LayerTape>,
    /// Input of each dense layer, including the output layer.
    dense_in: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

impl Tape {
    pub fn new(arch: &PolicyArchitecture) -> Self {
        let (t, h) = (arch.history, arch.hidden);
        let layers = (0..LSTM_LAYERS)
            .map(|l| {
                let n_in = if l == 0 { HIST_FEATURES } else { h };
                LayerTape {
                    n_in,
                    cat: vec![0.0; t * (n_in + h)],
                    gates: vec![0.0; t * 4 * h],
                    c: vec![0.0; t * h],
                    tanh_c: vec![0.0; t * h],
                    h: vec![0.0; t * h],
                }
            })
            .collect();
        let mut widths = vec![h + super::arch::CTX_FEATURES];
        widths.extend(arch.mlp.iter().copied());
        Tape {
            steps: t,
            hidden: h,
            scaled: vec![0.0; arch.input_dim()],
            layers,
            dense_in: widths.iter().map(|&w| vec![0.0; w]).collect(),
            out: vec![0.0; arch.output_dim()],
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y = W x + b` for row-major `W` (`rows x x.len()`).
#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *yr = acc;
    }
}

pub(crate) fn forward(w: &ModelWeights, input: &[f64], tape: &mut Tape) {
    let (t_n, h) = (tape.steps, tape.hidden);
    for (j, (z, x)) in tape.scaled.iter_mut().zip(input).enumerate() {
        *z = w.scaler.scale_one(j, *x);
    }
    let p = &w.params;
    let mut z = vec![0.0; 4 * h];
    for l in 0..LSTM_LAYERS {
        let (ws, bs) = w.layout.lstm(l);
        let (wm, bv) = (&p[ws.range()], &p[bs.range()]);
        let (below, rest) = tape.layers.split_at_mut(l);
        let lt = &mut rest[0];
        let n_in = lt.n_in;
        let width = n_in + h;
        for t in 0..t_n {
            let cat = &mut lt.cat[t * width..(t + 1) * width];
            if l == 0 {
                cat[..n_in].copy_from_slice(&tape.scaled[t * HIST_FEATURES..(t + 1) * HIST_FEATURES]);
            } else {
                cat[..n_in].copy_from_slice(&below[l - 1].h[t * h..(t + 1) * h]);
            }
            if t == 0 {
                cat[n_in..].fill(0.0);
            } else {
                cat[n_in..].copy_from_slice(&lt.h[(t - 1) * h..t * h]);
            }
            affine(wm, bv, cat, &mut z);
            let g = &mut lt.gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                g[k] = sigmoid(z[k]);
                g[h + k] = sigmoid(z[h + k]);
                g[2 * h + k] = z[2 * h + k].tanh();
                g[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let c_prev = if t == 0 { 0.0 } else { lt.c[(t - 1) * h + k] };
                let c = g[h + k] * c_prev + g[k] * g[2 * h + k];
                let tc = c.tanh();
                lt.c[t * h + k] = c;
                lt.tanh_c[t * h + k] = tc;
                lt.h[t * h + k] = g[3 * h + k] * tc;
            }
        }
    }
    let top = &tape.layers[LSTM_LAYERS - 1];
    let first = &mut tape.dense_in[0];
    first[..h].copy_from_slice(&top.h[(t_n - 1) * h..t_n * h]);
    first[h..].copy_from_slice(&tape.scaled[t_n * HIST_FEATURES..]);
    for i in 0..w.arch.mlp.len() {
        let (ws, bs) = w.layout.mlp(i);
        let (lo, hi) = tape.dense_in.split_at_mut(i + 1);
        let y = &mut hi[0];
        affine(&p[ws.range()], &p[bs.range()], &lo[i], y);
        for v in y.iter_mut() {
            *v = v.tanh();
        }
    }
    let (ws, bs) = w.layout.head();
    affine(&p[ws.range()], &p[bs.range()], tape.dense_in.last().unwrap(), &mut tape.out);
}

/// Loss of one sample given the raw head output, and its gradient with
/// respect to that output.
pub(crate) fn output_loss(kind: LossKind, out: &[f64], target: f64, d_out: &mut [f64]) -> f64 {
    match kind {
        LossKind::Mse => {
            let e = out[0] - target;
            d_out[0] = 2.0 * e;
            e * e
        }
        LossKind::Nll => {
            let n = out.len() / 3;
            let z = MixtureParams::from_raw(out);
            // log pi_k from the logits directly, so tiny weights stay finite
            let lmax = out[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse_logits = lmax + out[..n].iter().map(|l| (l - lmax).exp()).sum::<f64>().ln();
            let terms: Vec<f64> = (0..n)
                .map(|k| {
                    let var = z.variances[k];
                    let r = target - z.means[k];
                    out[k] - lse_logits - 0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var
                })
                .collect();
            let tmax = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = tmax + terms.iter().map(|t| (t - tmax).exp()).sum::<f64>().ln();
            for k in 0..n {
                let gamma = (terms[k] - lse).exp();
                let var = z.variances[k];
                let r = target - z.means[k];
                d_out[k] = z.weights[k] - gamma;
                d_out[n + k] = -gamma * r / var;
                d_out[2 * n + k] = if variance_unclamped(out[2 * n + k]) {
                    0.5 * gamma * (1.0 - r * r / var)
                } else {
                    0.0
                };
            }
            -lse
        }
    }
}

/// Accumulates `d loss / d params` for one sample into `grad`, given the
/// gradient `d_out` with respect to the head output of the last forward pass.
pub(crate) fn backward(w: &ModelWeights, tape: &Tape, d_out: &[f64], grad: &mut [f64]) {
    let p = &w.params;
    let (t_n, h) = (tape.steps, tape.hidden);

    // dense layers, top down
    let (ws, bs) = w.layout.head();
    let mut delta = d_out.to_vec();
    let mut d_in = dense_backward(p, grad, ws, bs, tape.dense_in.last().unwrap(), &delta);
    for i in (0..w.arch.mlp.len()).rev() {
        let y = &tape.dense_in[i + 1];
        delta = d_in.iter().zip(y).map(|(d, y)| d * (1.0 - y * y)).collect();
        let (ws, bs) = w.layout.mlp(i);
        d_in = dense_backward(p, grad, ws, bs, &tape.dense_in[i], &delta);
    }

    // recurrent layers, top down; dh_ext holds gradient arriving from above
    let mut dh_ext = vec![0.0; t_n * h];
    dh_ext[(t_n - 1) * h..].copy_from_slice(&d_in[..h]);
    let mut dz = vec![0.0; 4 * h];
    for l in (0..LSTM_LAYERS).rev() {
        let lt = &tape.layers[l];
        let (ws, bs) = w.layout.lstm(l);
        let width = lt.n_in + h;
        let wm = &p[ws.range()];
        let mut dh_rec = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dx_below = vec![0.0; if l > 0 { t_n * h } else { 0 }];
        for t in (0..t_n).rev() {
            let g = &lt.gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                let dh = dh_ext[t * h + k] + dh_rec[k];
                let tc = lt.tanh_c[t * h + k];
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                let c_prev = if t == 0 { 0.0 } else { lt.c[(t - 1) * h + k] };
                dz[k] = dc * gg * i * (1.0 - i);
                dz[h + k] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - gg * gg);
                dz[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            let cat = &lt.cat[t * width..(t + 1) * width];
            let gw = &mut grad[ws.range()];
            for r in 0..4 * h {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[r * width..(r + 1) * width];
                for (gi, xi) in row.iter_mut().zip(cat) {
                    *gi += d * xi;
                }
            }
            for (gb, d) in grad[bs.range()].iter_mut().zip(&dz) {
                *gb += d;
            }
            // d cat = W^T dz
            dh_rec.fill(0.0);
            for r in 0..4 * h {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                let row = &wm[r * width..(r + 1) * width];
                if l > 0 {
                    let dx = &mut dx_below[t * h..(t + 1) * h];
                    for (a, wv) in dx.iter_mut().zip(&row[..lt.n_in]) {
                        *a += d * wv;
                    }
                }
                for (a, wv) in dh_rec.iter_mut().zip(&row[lt.n_in..]) {
                    *a += d * wv;
                }
            }
        }
        dh_ext = dx_below;
    }
}

/// Backward through `y = W x + b`; returns `d x`.
fn dense_backward(
    p: &[f64],
    grad: &mut [f64],
    ws: &super::arch::Section,
    bs: &super::arch::Section,
    x: &[f64],
    delta: &[f64],
) -> Vec<f64> {
    let cols = ws.cols;
    let mut dx = vec![0.0; cols];
    let wm = &p[ws.range()];
    {
        let gw = &mut grad[ws.range()];
        for (r, d) in delta.iter().enumerate() {
            for (gi, xi) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *gi += d * xi;
            }
        }
    }
    for (gb, d) in grad[bs.range()].iter_mut().zip(delta) {
        *gb += d;
    }
    for (r, d) in delta.iter().enumerate() {
        for (a, wv) in dx.iter_mut().zip(&wm[r * cols..(r + 1) * cols]) {
            *a += d * wv;
        }
    }
    dx
}

fn check_kind(w: &ModelWeights, kind: LossKind) -> Result<()> {
    match (kind, w.is_mixture()) {
        (LossKind::Mse, false) | (LossKind::Nll, true) => Ok(()),
        _ => Err(Error::domain(format!("loss {kind:?} does not match the model head"))),
    }
}

/// Summed loss over `batch` (no gradient).
pub fn batch_loss(w: &ModelWeights, batch: &[Sample], kind: LossKind) -> Result<f64> {
    check_kind(w, kind)?;
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let mut tape = Tape::new(&w.arch);
    let mut d_out = vec![0.0; w.arch.output_dim()];
    let mut total = 0.0;
    for s in batch {
        if s.input.len() != w.arch.input_dim() {
            return Err(Error::domain("sample width does not match the model"));
        }
        forward(w, &s.input, &mut tape);
        total += output_loss(kind, &tape.out, s.target, &mut d_out);
    }
    Ok(total)
}

/// `sum_t (a_t - f_d)^2` over the batch.
pub fn loss_deterministic(w: &ModelWeights, batch: &[Sample]) -> Result<f64> {
    batch_loss(w, batch, LossKind::Mse)
}

/// `sum_t -log sum_k pi_k N(a_t | mu_k, sigma²_k)` over the batch.
pub fn loss_nll(w: &ModelWeights, batch: &[Sample]) -> Result<f64> {
    batch_loss(w, batch, LossKind::Nll)
}

/// Summed loss and its exact gradient with respect to every parameter.
pub fn gradients(w: &ModelWeights, batch: &[Sample], kind: LossKind) -> Result<(f64, Vec<f64>)> {
    check_kind(w, kind)?;
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let mut grad = vec![0.0; w.params.len()];
    let mut tape = Tape::new(&w.arch);
    let loss = accumulate(w, batch, kind, &mut tape, &mut grad)?;
    Ok((loss, grad))
}

pub(crate) fn accumulate<'a>(
    w: &ModelWeights,
    batch: impl IntoIterator<Item = &'a Sample>,
    kind: LossKind,
    tape: &mut Tape,
    grad: &mut [f64],
) -> Result<f64> {
    let mut d_out = vec![0.0; w.arch.output_dim()];
    let mut total = 0.0;
    for s in batch {
        if s.input.len() != w.arch.input_dim() {
            return Err(Error::domain("sample width does not match the model"));
        }
        forward(w, &s.input, tape);
        total += output_loss(kind, &tape.out, s.target, &mut d_out);
        backward(w, tape, &d_out, grad);
    }
    Ok(total)
}

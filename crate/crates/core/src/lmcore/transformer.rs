//! A small GPT-style decoder: learned token and position embeddings, pre-norm
//! blocks of causal multi-head self-attention and a GELU MLP, a final layer
//! norm and an output projection, optionally tied to the token embedding.
//!
//! With `copy_head` the output is a gated mixture of the vocabulary softmax
//! and a pointer distribution: one more causal attention over the final
//! hidden states whose weights are summed per token id of the attended
//! positions. The model then emits log probabilities of the mixture in
//! place of logits, so softmax, cross-entropy and argmax apply unchanged.
//!
//! Forward and backward passes are written out by hand over `ndarray`
//! matrices in `f64`. Rows are sequence positions.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub vocab_size: usize,
    pub context_len: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_width: usize,
    /// Output logits reuse the token embedding instead of a separate head.
    #[serde(default)]
    pub tied_head: bool,
    /// Mix a pointer distribution over earlier tokens into the output.
    #[serde(default)]
    pub copy_head: bool,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("context_len", self.context_len),
            ("width", self.width),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ffn_width", self.ffn_width),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "width {} is not divisible by heads {}",
                self.width, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub qkv: Array2<f64>,
    pub qkv_bias: Array1<f64>,
    pub attn_out: Array2<f64>,
    pub attn_out_bias: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub fc: Array2<f64>,
    pub fc_bias: Array1<f64>,
    pub proj: Array2<f64>,
    pub proj_bias: Array1<f64>,
}

/// All parameters. Also used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub blocks: Vec<Block>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
    pub head: Array2<f64>,
    pub head_bias: Array1<f64>,
    pub copy_query: Array2<f64>,
    pub copy_key: Array2<f64>,
    pub copy_gate: Array1<f64>,
    pub copy_gate_bias: Array1<f64>,
}

impl Weights {
    pub fn zeros(shape: &ModelShape) -> Self {
        let (v, c, w, f) = (
            shape.vocab_size,
            shape.context_len,
            shape.width,
            shape.ffn_width,
        );
        let block = Block {
            ln1_gain: Array1::zeros(w),
            ln1_bias: Array1::zeros(w),
            qkv: Array2::zeros((w, 3 * w)),
            qkv_bias: Array1::zeros(3 * w),
            attn_out: Array2::zeros((w, w)),
            attn_out_bias: Array1::zeros(w),
            ln2_gain: Array1::zeros(w),
            ln2_bias: Array1::zeros(w),
            fc: Array2::zeros((w, f)),
            fc_bias: Array1::zeros(f),
            proj: Array2::zeros((f, w)),
            proj_bias: Array1::zeros(w),
        };
        Weights {
            token_embedding: Array2::zeros((v, w)),
            position_embedding: Array2::zeros((c, w)),
            blocks: vec![block; shape.layers],
            final_gain: Array1::zeros(w),
            final_bias: Array1::zeros(w),
            head: Array2::zeros((w, if shape.tied_head { 0 } else { v })),
            head_bias: Array1::zeros(v),
            copy_query: Array2::zeros((w, if shape.copy_head { w } else { 0 })),
            copy_key: Array2::zeros((w, if shape.copy_head { w } else { 0 })),
            copy_gate: Array1::zeros(if shape.copy_head { w } else { 0 }),
            copy_gate_bias: Array1::zeros(usize::from(shape.copy_head)),
        }
    }

    /// Gains at one, biases at zero, matrices normal with standard deviation
    /// `std`; the two residual projections are scaled by `1/sqrt(2 * layers)`.
    pub fn init(shape: &ModelShape, std: f64, rng: &mut impl Rng) -> Self {
        let mut w = Self::zeros(shape);
        let normal = Normal::new(0.0, std).expect("std is finite and non-negative");
        let residual = 1.0 / ((2 * shape.layers) as f64).sqrt();
        let fill = |a: &mut Array2<f64>, scale: f64, rng: &mut dyn rand::RngCore| {
            a.mapv_inplace(|_| normal.sample(rng) * scale);
        };
        fill(&mut w.token_embedding, 1.0, rng);
        fill(&mut w.position_embedding, 1.0, rng);
        for b in &mut w.blocks {
            b.ln1_gain.fill(1.0);
            b.ln2_gain.fill(1.0);
            fill(&mut b.qkv, 1.0, rng);
            fill(&mut b.attn_out, residual, rng);
            fill(&mut b.fc, 1.0, rng);
            fill(&mut b.proj, residual, rng);
        }
        w.final_gain.fill(1.0);
        fill(&mut w.head, 1.0, rng);
        fill(&mut w.copy_query, 1.0, rng);
        fill(&mut w.copy_key, 1.0, rng);
        w
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.token_embedding.as_slice().unwrap(),
            self.position_embedding.as_slice().unwrap(),
        ];
        for b in &self.blocks {
            out.extend([
                b.ln1_gain.as_slice().unwrap(),
                b.ln1_bias.as_slice().unwrap(),
                b.qkv.as_slice().unwrap(),
                b.qkv_bias.as_slice().unwrap(),
                b.attn_out.as_slice().unwrap(),
                b.attn_out_bias.as_slice().unwrap(),
                b.ln2_gain.as_slice().unwrap(),
                b.ln2_bias.as_slice().unwrap(),
                b.fc.as_slice().unwrap(),
                b.fc_bias.as_slice().unwrap(),
                b.proj.as_slice().unwrap(),
                b.proj_bias.as_slice().unwrap(),
            ]);
        }
        out.extend([
            self.final_gain.as_slice().unwrap(),
            self.final_bias.as_slice().unwrap(),
            self.head.as_slice().unwrap(),
            self.head_bias.as_slice().unwrap(),
            self.copy_query.as_slice().unwrap(),
            self.copy_key.as_slice().unwrap(),
            self.copy_gate.as_slice().unwrap(),
            self.copy_gate_bias.as_slice().unwrap(),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.token_embedding.as_slice_mut().unwrap(),
            self.position_embedding.as_slice_mut().unwrap(),
        ];
        for b in &mut self.blocks {
            out.extend([
                b.ln1_gain.as_slice_mut().unwrap(),
                b.ln1_bias.as_slice_mut().unwrap(),
                b.qkv.as_slice_mut().unwrap(),
                b.qkv_bias.as_slice_mut().unwrap(),
                b.attn_out.as_slice_mut().unwrap(),
                b.attn_out_bias.as_slice_mut().unwrap(),
                b.ln2_gain.as_slice_mut().unwrap(),
                b.ln2_bias.as_slice_mut().unwrap(),
                b.fc.as_slice_mut().unwrap(),
                b.fc_bias.as_slice_mut().unwrap(),
                b.proj.as_slice_mut().unwrap(),
                b.proj_bias.as_slice_mut().unwrap(),
            ]);
        }
        out.extend([
            self.final_gain.as_slice_mut().unwrap(),
            self.final_bias.as_slice_mut().unwrap(),
            self.head.as_slice_mut().unwrap(),
            self.head_bias.as_slice_mut().unwrap(),
            self.copy_query.as_slice_mut().unwrap(),
            self.copy_key.as_slice_mut().unwrap(),
            self.copy_gate.as_slice_mut().unwrap(),
            self.copy_gate_bias.as_slice_mut().unwrap(),
        ]);
        out
    }

    /// Per tensor in [`Weights::tensors`] order: true for weight matrices,
    /// false for gains and biases.
    pub fn matrix_mask(&self) -> Vec<bool> {
        let block = [
            false, false, true, false, true, false, false, false, true, false, true, false,
        ];
        let mut out = vec![true, true];
        for _ in &self.blocks {
            out.extend(block);
        }
        out.extend([false, false, true, false, true, true, false, false]);
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                self.len(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / n;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *r = 1.0 / (var + LN_EPS).sqrt();
        row *= *r;
    }
    let y = &xhat * gain + bias;
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dbias += &dy.sum_axis(Axis(0));
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    let mut dx = dy * gain;
    let n = dx.ncols() as f64;
    for ((mut row, xhat), &r) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(&cache.rstd)
    {
        let mean = row.sum() / n;
        let mean_dot = row.dot(&xhat) / n;
        Zip::from(&mut row)
            .and(&xhat)
            .for_each(|d, &xh| *d = r * (*d - mean - xh * mean_dot));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows_inplace(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn masked(d: &Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => d * m,
        None => d.clone(),
    }
}

fn add_row(m: &mut Array2<f64>, bias: &Array1<f64>) {
    *m += &bias.view().insert_axis(Axis(0));
}

struct BlockTrace {
    ln1: NormCache,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<Array2<f64>>,
    heads_out: Array2<f64>,
    ln2: NormCache,
    h2: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    mlp_mask: Option<Array2<f64>>,
}

struct CopyTrace {
    vocab: Array2<f64>,
    query: Array2<f64>,
    key: Array2<f64>,
    attn: Array2<f64>,
    gate: Array1<f64>,
    mixture: Array2<f64>,
}

/// Activations of one forward pass, kept for the backward pass.
pub struct Trace {
    ids: Vec<usize>,
    embed_mask: Option<Array2<f64>>,
    blocks: Vec<BlockTrace>,
    final_ln: NormCache,
    hidden: Array2<f64>,
    copy: Option<CopyTrace>,
    /// Scores of the next token; log probabilities with a copy head.
    pub logits: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn causal_softmax(scores: &mut Array2<f64>) {
    let n = scores.nrows();
    for i in 0..n {
        for j in i + 1..scores.ncols() {
            scores[[i, j]] = f64::NEG_INFINITY;
        }
    }
    softmax_rows_inplace(scores);
}

/// Backward through a row softmax: `p * (d - rowsum(p * d))`.
fn softmax_rows_backward(p: &Array2<f64>, d: &Array2<f64>) -> Array2<f64> {
    let mut out = p * d;
    for (mut row, prow) in out.rows_mut().into_iter().zip(p.rows()) {
        let total = row.sum();
        Zip::from(&mut row)
            .and(prow)
            .for_each(|o, &pv| *o -= pv * total);
    }
    out
}

#[derive(Clone, Debug)]
pub struct Transformer {
    shape: ModelShape,
    weights: Weights,
}

impl Transformer {
    pub fn new(shape: ModelShape, weights: Weights) -> Result<Self> {
        shape.validate()?;
        if weights.len() != Weights::zeros(&shape).len() {
            return Err(Error::Checkpoint(
                "weights do not match the model shape".into(),
            ));
        }
        Ok(Transformer { shape, weights })
    }

    pub fn init(shape: ModelShape, std: f64, rng: &mut impl Rng) -> Result<Self> {
        shape.validate()?;
        let weights = Weights::init(&shape, std, rng);
        Ok(Transformer { shape, weights })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights {
        &mut self.weights
    }

    /// Runs the model over `ids`; row `t` of the logits scores the token at
    /// position `t + 1`.
    ///
    /// # Panics
    /// If `ids` is empty, longer than the context, or holds an id outside
    /// the vocabulary.
    pub fn forward(&self, ids: &[usize]) -> Trace {
        self.forward_inner(ids, None)
    }

    /// Training-mode forward pass: activations entering the residual stream
    /// are zeroed with probability `rate` and the rest scaled by
    /// `1 / (1 - rate)`.
    pub fn forward_dropout(&self, ids: &[usize], rate: f64, rng: &mut impl Rng) -> Trace {
        assert!(
            (0.0..1.0).contains(&rate),
            "dropout rate {rate} out of range"
        );
        if rate == 0.0 {
            return self.forward(ids);
        }
        self.forward_inner(ids, Some((rate, rng as &mut dyn rand::RngCore)))
    }

    fn forward_inner(
        &self,
        ids: &[usize],
        mut dropout: Option<(f64, &mut dyn rand::RngCore)>,
    ) -> Trace {
        let t_len = ids.len();
        assert!(
            t_len > 0 && t_len <= self.shape.context_len,
            "sequence length {t_len} out of range"
        );
        let (w, dh) = (self.shape.width, self.shape.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let wt = &self.weights;

        let mut x = Array2::zeros((t_len, w));
        for (t, &id) in ids.iter().enumerate() {
            assert!(id < self.shape.vocab_size, "token id {id} out of range");
            let row = &wt.token_embedding.row(id) + &wt.position_embedding.row(t);
            x.row_mut(t).assign(&row);
        }
        let mut sample_mask = |shape: (usize, usize)| {
            dropout.as_mut().map(|(rate, rng)| {
                let keep = 1.0 / (1.0 - *rate);
                Array2::from_shape_simple_fn(shape, || {
                    if rng.random::<f64>() < *rate {
                        0.0
                    } else {
                        keep
                    }
                })
            })
        };
        let embed_mask = sample_mask((t_len, w));
        if let Some(m) = &embed_mask {
            x *= m;
        }

        let mut blocks = Vec::with_capacity(self.shape.layers);
        for b in &wt.blocks {
            let (h1, ln1) = layer_norm(&x, &b.ln1_gain, &b.ln1_bias);
            let mut qkv = h1.dot(&b.qkv);
            add_row(&mut qkv, &b.qkv_bias);

            let mut heads_out = Array2::zeros((t_len, w));
            let mut probs = Vec::with_capacity(self.shape.heads);
            for h in 0..self.shape.heads {
                let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![.., w + h * dh..w + (h + 1) * dh]);
                let v = qkv.slice(s![.., 2 * w + h * dh..2 * w + (h + 1) * dh]);
                let mut p = q.dot(&k.t()) * scale;
                causal_softmax(&mut p);
                heads_out
                    .slice_mut(s![.., h * dh..(h + 1) * dh])
                    .assign(&p.dot(&v));
                probs.push(p);
            }
            let mut attn = heads_out.dot(&b.attn_out);
            add_row(&mut attn, &b.attn_out_bias);
            let attn_mask = sample_mask((t_len, w));
            if let Some(m) = &attn_mask {
                attn *= m;
            }
            x += &attn;

            let (h2, ln2) = layer_norm(&x, &b.ln2_gain, &b.ln2_bias);
            let mut pre = h2.dot(&b.fc);
            add_row(&mut pre, &b.fc_bias);
            let act = pre.mapv(gelu);
            let mut mlp = act.dot(&b.proj);
            add_row(&mut mlp, &b.proj_bias);
            let mlp_mask = sample_mask((t_len, w));
            if let Some(m) = &mlp_mask {
                mlp *= m;
            }
            x += &mlp;

            blocks.push(BlockTrace {
                ln1,
                h1,
                qkv,
                probs,
                heads_out,
                ln2,
                h2,
                pre,
                act,
                attn_mask,
                mlp_mask,
            });
        }

        let (hidden, final_ln) = layer_norm(&x, &wt.final_gain, &wt.final_bias);
        let mut logits = if self.shape.tied_head {
            hidden.dot(&wt.token_embedding.t())
        } else {
            hidden.dot(&wt.head)
        };
        add_row(&mut logits, &wt.head_bias);
        let copy = self
            .shape
            .copy_head
            .then(|| self.copy_forward(ids, &hidden, &logits));
        if let Some(c) = &copy {
            logits = c.mixture.mapv(f64::ln);
        }
        Trace {
            ids: ids.to_vec(),
            embed_mask,
            blocks,
            final_ln,
            hidden,
            copy,
            logits,
        }
    }

    fn copy_forward(&self, ids: &[usize], hidden: &Array2<f64>, logits: &Array2<f64>) -> CopyTrace {
        let wt = &self.weights;
        let scale = 1.0 / (self.shape.width as f64).sqrt();
        let mut vocab = logits.clone();
        softmax_rows_inplace(&mut vocab);
        let query = hidden.dot(&wt.copy_query);
        let key = hidden.dot(&wt.copy_key);
        let mut attn = query.dot(&key.t()) * scale;
        causal_softmax(&mut attn);
        let gate = (hidden.dot(&wt.copy_gate) + wt.copy_gate_bias[0]).mapv(sigmoid);
        let mut mixture = &vocab * &gate.view().insert_axis(Axis(1));
        for t in 0..ids.len() {
            for (j, &id) in ids.iter().enumerate().take(t + 1) {
                mixture[[t, id]] += (1.0 - gate[t]) * attn[[t, j]];
            }
        }
        CopyTrace {
            vocab,
            query,
            key,
            attn,
            gate,
            mixture,
        }
    }

    /// Turns the gradient with respect to the log mixture into the gradient
    /// with respect to the vocabulary logits, accumulating the copy
    /// parameters into `g` and returning the extra hidden-state gradient.
    fn copy_backward(
        &self,
        trace: &Trace,
        c: &CopyTrace,
        dlog: &Array2<f64>,
        g: &mut Weights,
    ) -> (Array2<f64>, Array2<f64>) {
        let wt = &self.weights;
        let scale = 1.0 / (self.shape.width as f64).sqrt();
        let t_len = trace.ids.len();
        let dmix = dlog / &c.mixture;
        let mut dgate = Array1::zeros(t_len);
        let mut dattn = Array2::zeros((t_len, t_len));
        for t in 0..t_len {
            let mut from_copy = 0.0;
            for (j, &id) in trace.ids.iter().enumerate().take(t + 1) {
                from_copy += c.attn[[t, j]] * dmix[[t, id]];
                dattn[[t, j]] = (1.0 - c.gate[t]) * dmix[[t, id]];
            }
            dgate[t] = dmix.row(t).dot(&c.vocab.row(t)) - from_copy;
        }
        let dvocab = &dmix * &c.gate.view().insert_axis(Axis(1));
        let dlogits = softmax_rows_backward(&c.vocab, &dvocab);
        let dscores = softmax_rows_backward(&c.attn, &dattn) * scale;
        let dquery = dscores.dot(&c.key);
        let dkey = dscores.t().dot(&c.query);
        g.copy_query += &trace.hidden.t().dot(&dquery);
        g.copy_key += &trace.hidden.t().dot(&dkey);
        let dpre = &dgate * &c.gate.mapv(|v| v * (1.0 - v));
        g.copy_gate += &trace.hidden.t().dot(&dpre);
        g.copy_gate_bias[0] += dpre.sum();
        let mut dhidden = dquery.dot(&wt.copy_query.t()) + dkey.dot(&wt.copy_key.t());
        dhidden += &(dpre
            .view()
            .insert_axis(Axis(1))
            .dot(&wt.copy_gate.view().insert_axis(Axis(0))));
        (dlogits, dhidden)
    }

    /// Gradients of a scalar loss given its gradient with respect to the
    /// logits of `trace`.
    pub fn backward(&self, trace: &Trace, dlogits: &Array2<f64>) -> Weights {
        let (w, dh) = (self.shape.width, self.shape.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let wt = &self.weights;
        let mut g = Weights::zeros(&self.shape);

        let (dlogits, dcopy) = match &trace.copy {
            Some(c) => {
                let (dl, dh) = self.copy_backward(trace, c, dlogits, &mut g);
                (dl, Some(dh))
            }
            None => (dlogits.clone(), None),
        };
        g.head_bias += &dlogits.sum_axis(Axis(0));
        let mut dhidden = if self.shape.tied_head {
            g.token_embedding += &dlogits.t().dot(&trace.hidden);
            dlogits.dot(&wt.token_embedding)
        } else {
            g.head += &trace.hidden.t().dot(&dlogits);
            dlogits.dot(&wt.head.t())
        };
        if let Some(d) = dcopy {
            dhidden += &d;
        }
        let mut dx = layer_norm_backward(
            &dhidden,
            &trace.final_ln,
            &wt.final_gain,
            &mut g.final_gain,
            &mut g.final_bias,
        );

        for ((b, bt), gb) in wt
            .blocks
            .iter()
            .zip(&trace.blocks)
            .zip(g.blocks.iter_mut())
            .rev()
        {
            // MLP branch
            let dmlp = masked(&dx, &bt.mlp_mask);
            gb.proj += &bt.act.t().dot(&dmlp);
            gb.proj_bias += &dmlp.sum_axis(Axis(0));
            let mut dpre = dmlp.dot(&b.proj.t());
            Zip::from(&mut dpre)
                .and(&bt.pre)
                .for_each(|d, &p| *d *= gelu_grad(p));
            gb.fc += &bt.h2.t().dot(&dpre);
            gb.fc_bias += &dpre.sum_axis(Axis(0));
            let dh2 = dpre.dot(&b.fc.t());
            dx += &layer_norm_backward(
                &dh2,
                &bt.ln2,
                &b.ln2_gain,
                &mut gb.ln2_gain,
                &mut gb.ln2_bias,
            );

            // attention branch
            let dattn = masked(&dx, &bt.attn_mask);
            gb.attn_out += &bt.heads_out.t().dot(&dattn);
            gb.attn_out_bias += &dattn.sum_axis(Axis(0));
            let dheads = dattn.dot(&b.attn_out.t());
            let mut dqkv = Array2::zeros(bt.qkv.raw_dim());
            for (h, p) in bt.probs.iter().enumerate() {
                let (qs, ks, vs) = (h * dh, w + h * dh, 2 * w + h * dh);
                let q = bt.qkv.slice(s![.., qs..qs + dh]);
                let k = bt.qkv.slice(s![.., ks..ks + dh]);
                let v = bt.qkv.slice(s![.., vs..vs + dh]);
                let dout = dheads.slice(s![.., qs..qs + dh]);
                let dp = dout.dot(&v.t());
                dqkv.slice_mut(s![.., vs..vs + dh])
                    .assign(&p.t().dot(&dout));
                let ds = softmax_rows_backward(p, &dp) * scale;
                dqkv.slice_mut(s![.., qs..qs + dh]).assign(&ds.dot(&k));
                dqkv.slice_mut(s![.., ks..ks + dh]).assign(&ds.t().dot(&q));
            }
            gb.qkv += &bt.h1.t().dot(&dqkv);
            gb.qkv_bias += &dqkv.sum_axis(Axis(0));
            let dh1 = dqkv.dot(&b.qkv.t());
            dx += &layer_norm_backward(
                &dh1,
                &bt.ln1,
                &b.ln1_gain,
                &mut gb.ln1_gain,
                &mut gb.ln1_bias,
            );
        }

        let dx = masked(&dx, &trace.embed_mask);
        for (t, &id) in trace.ids.iter().enumerate() {
            let row = dx.row(t);
            let mut te = g.token_embedding.row_mut(id);
            te += &row;
            let mut pe = g.position_embedding.row_mut(t);
            pe += &row;
        }
        g
    }

    /// Summed next-token cross-entropy over labelled positions; see
    /// [`cross_entropy`].
    pub fn loss(&self, ids: &[usize], labels: &[Option<usize>]) -> f64 {
        cross_entropy(&self.forward(ids).logits, labels).sum
    }

    pub fn loss_and_gradients(
        &self,
        ids: &[usize],
        labels: &[Option<usize>],
    ) -> (CrossEntropy, Weights) {
        self.gradients_of(self.forward(ids), labels)
    }

    pub fn gradients_of(&self, trace: Trace, labels: &[Option<usize>]) -> (CrossEntropy, Weights) {
        let ce = cross_entropy(&trace.logits, labels);
        let grads = self.backward(&trace, &ce.dlogits);
        (ce, grads)
    }

    /// Index of the largest logit in the last row, lowest index on ties.
    pub fn next_token(&self, ids: &[usize]) -> usize {
        let trace = self.forward(ids);
        argmax(trace.logits.row(ids.len() - 1))
    }
}

pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub struct CrossEntropy {
    pub sum: f64,
    pub count: usize,
    /// Gradient of `sum` with respect to the logits; rows without a label
    /// are zero.
    pub dlogits: Array2<f64>,
}

/// `-sum_t log softmax(logits[t])[label[t]]` over positions with a label.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[Option<usize>]) -> CrossEntropy {
    assert_eq!(logits.nrows(), labels.len(), "one label slot per position");
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let mut sum = 0.0;
    let mut count = 0;
    for (t, label) in labels.iter().enumerate() {
        let Some(label) = *label else { continue };
        let row = logits.row(t);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        sum += lse - row[label];
        count += 1;
        let mut d = dlogits.row_mut(t);
        Zip::from(&mut d)
            .and(row)
            .for_each(|d, &v| *d = (v - lse).exp());
        d[label] -= 1.0;
    }
    CrossEntropy {
        sum,
        count,
        dlogits,
    }
}

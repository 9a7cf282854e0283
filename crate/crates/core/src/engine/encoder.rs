//! A small BERT-style transformer encoder with hand-written backpropagation.
//!
//! Post-norm blocks: `h1 = LN(h + Attn(h))`, `out = LN(h1 + W2·gelu(W1·h1))`, over the sum of
//! token, position and segment embeddings (itself layer-normalized). All parameters live in
//! one flat vector addressed through [`ParamLayout`].

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::{affine, affine_backward, dot, Matrix};
use super::tokenize::TokenizedInput;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
}

impl EncoderConfig {
    /// Desk-scale default: 2 layers, 4 heads, hidden size 64.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_positions: 384,
        }
    }

    /// BERT-base geometry: 12 layers, 12 heads, hidden size 768.
    pub fn bert_base(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden: 768,
            layers: 12,
            heads: 12,
            ffn: 3072,
            max_positions: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.hidden == 0 || self.heads == 0 || self.ffn == 0 || self.max_positions == 0 {
            return Err(Error::Config(format!("encoder dimensions must be positive: {self:?}")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub q_w: Range<usize>,
    pub q_b: Range<usize>,
    pub k_w: Range<usize>,
    pub k_b: Range<usize>,
    pub v_w: Range<usize>,
    pub v_b: Range<usize>,
    pub o_w: Range<usize>,
    pub o_b: Range<usize>,
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub ff1_w: Range<usize>,
    pub ff1_b: Range<usize>,
    pub ff2_w: Range<usize>,
    pub ff2_b: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub token: Range<usize>,
    pub position: Range<usize>,
    pub segment: Range<usize>,
    pub emb_ln_g: Range<usize>,
    pub emb_ln_b: Range<usize>,
    pub layers: Vec<LayerLayout>,
    /// `(name, shape, range)` for every tensor, in storage order.
    pub tensors: Vec<(String, Vec<usize>, Range<usize>)>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &EncoderConfig) -> Self {
        let mut tensors = Vec::new();
        let mut next = 0usize;
        let mut alloc = |name: String, shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            let r = next..next + n;
            next += n;
            tensors.push((name, shape, r.clone()));
            r
        };
        let (h, f) = (cfg.hidden, cfg.ffn);
        let token = alloc("embeddings.token".into(), vec![cfg.vocab_size, h]);
        let position = alloc("embeddings.position".into(), vec![cfg.max_positions, h]);
        let segment = alloc("embeddings.segment".into(), vec![2, h]);
        let emb_ln_g = alloc("embeddings.ln.gamma".into(), vec![h]);
        let emb_ln_b = alloc("embeddings.ln.beta".into(), vec![h]);
        let layers = (0..cfg.layers)
            .map(|l| {
                let p = |s: &str| format!("layer{l}.{s}");
                LayerLayout {
                    q_w: alloc(p("attn.query.weight"), vec![h, h]),
                    q_b: alloc(p("attn.query.bias"), vec![h]),
                    k_w: alloc(p("attn.key.weight"), vec![h, h]),
                    k_b: alloc(p("attn.key.bias"), vec![h]),
                    v_w: alloc(p("attn.value.weight"), vec![h, h]),
                    v_b: alloc(p("attn.value.bias"), vec![h]),
                    o_w: alloc(p("attn.output.weight"), vec![h, h]),
                    o_b: alloc(p("attn.output.bias"), vec![h]),
                    ln1_g: alloc(p("attn.ln.gamma"), vec![h]),
                    ln1_b: alloc(p("attn.ln.beta"), vec![h]),
                    ff1_w: alloc(p("ffn.in.weight"), vec![h, f]),
                    ff1_b: alloc(p("ffn.in.bias"), vec![f]),
                    ff2_w: alloc(p("ffn.out.weight"), vec![f, h]),
                    ff2_b: alloc(p("ffn.out.bias"), vec![h]),
                    ln2_g: alloc(p("ffn.ln.gamma"), vec![h]),
                    ln2_b: alloc(p("ffn.ln.beta"), vec![h]),
                }
            })
            .collect();
        ParamLayout {
            token,
            position,
            segment,
            emb_ln_g,
            emb_ln_b,
            layers,
            tensors,
            total: next,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<F> {
    config: EncoderConfig,
    layout: ParamLayout,
    params: Vec<F>,
}

struct LnCache<F> {
    xhat: Vec<F>,
    inv_std: Vec<F>,
}

struct LayerCache<F> {
    input: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// heads × L × L attention weights
    probs: Vec<F>,
    ctx: Vec<F>,
    ln1: LnCache<F>,
    h1: Vec<F>,
    pre_act: Vec<F>,
    act: Vec<F>,
    ln2: LnCache<F>,
}

/// Intermediate values kept by [`Encoder::forward`] for [`Encoder::backward`].
pub struct ForwardCache<F> {
    len: usize,
    token_ids: Vec<usize>,
    position_ids: Vec<usize>,
    segment_ids: Vec<usize>,
    emb_ln: LnCache<F>,
    layers: Vec<LayerCache<F>>,
}

fn layer_norm<F: Scalar>(x: &[F], rows: usize, h: usize, gamma: &[F], beta: &[F]) -> (Vec<F>, LnCache<F>) {
    let mut y = vec![F::zero(); rows * h];
    let mut xhat = vec![F::zero(); rows * h];
    let mut inv_std = vec![F::zero(); rows];
    let hf: F = c(h as f64);
    for i in 0..rows {
        let xi = &x[i * h..(i + 1) * h];
        let mean = xi.iter().copied().sum::<F>() / hf;
        let var = xi.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / hf;
        let is = F::one() / (var + c(LN_EPS)).sqrt();
        inv_std[i] = is;
        for j in 0..h {
            let xh = (xi[j] - mean) * is;
            xhat[i * h + j] = xh;
            y[i * h + j] = gamma[j] * xh + beta[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward<F: Scalar>(
    dy: &[F],
    cache: &LnCache<F>,
    rows: usize,
    h: usize,
    gamma: &[F],
    dgamma: &mut [F],
    dbeta: &mut [F],
) -> Vec<F> {
    let mut dx = vec![F::zero(); rows * h];
    let hf: F = c(h as f64);
    let mut dxhat = vec![F::zero(); h];
    for i in 0..rows {
        let dyi = &dy[i * h..(i + 1) * h];
        let xh = &cache.xhat[i * h..(i + 1) * h];
        for j in 0..h {
            dgamma[j] += dyi[j] * xh[j];
            dbeta[j] += dyi[j];
            dxhat[j] = dyi[j] * gamma[j];
        }
        let mean_d = dxhat.iter().copied().sum::<F>() / hf;
        let mean_dx = dot(&dxhat, xh) / hf;
        let is = cache.inv_std[i];
        for j in 0..h {
            dx[i * h + j] = is * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

fn gelu<F: Scalar>(x: F) -> F {
    let k: F = c((2.0 / std::f64::consts::PI).sqrt());
    let a: F = c(0.044715);
    let half: F = c(0.5);
    half * x * (F::one() + (k * (x + a * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let k: F = c((2.0 / std::f64::consts::PI).sqrt());
    let a: F = c(0.044715);
    let half: F = c(0.5);
    let t = (k * (x + a * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * k * (F::one() + c::<F>(3.0) * a * x * x)
}

impl<F: Scalar> Encoder<F> {
    /// All-zero parameters.
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let params = vec![F::zero(); layout.total];
        Ok(Encoder { config, layout, params })
    }

    /// Weights and embeddings from N(0, 0.02²), biases zero, layer-norm gains one.
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        let mut enc = Self::zeros(config)?;
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let tensors = enc.layout.tensors.clone();
        for (name, _, range) in tensors {
            if name.ends_with(".bias") || name.ends_with(".beta") {
                continue;
            }
            let fill_one = name.ends_with(".gamma");
            for p in &mut enc.params[range] {
                *p = if fill_one { F::one() } else { c(normal.sample(rng)) };
            }
        }
        Ok(enc)
    }

    pub fn from_params(config: EncoderConfig, params: Vec<F>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Config(format!(
                "expected {} encoder parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Encoder { config, layout, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    /// Contextual embeddings, one row per input token.
    pub fn encode(&self, input: &TokenizedInput) -> Result<Matrix<F>> {
        self.forward(input).map(|(out, _)| out)
    }

    fn check_input(&self, input: &TokenizedInput) -> Result<()> {
        let n = input.len();
        if input.segment_ids.len() != n || input.position_ids.len() != n {
            return Err(Error::Contract("token, segment and position lists differ in length".into()));
        }
        if n > self.config.max_positions {
            return Err(Error::Config(format!(
                "sequence of {n} tokens exceeds the encoder's {} positions",
                self.config.max_positions
            )));
        }
        if let Some(&bad) = input.token_ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Config(format!(
                "token id {bad} outside the encoder's vocabulary of {}",
                self.config.vocab_size
            )));
        }
        if let Some(&bad) = input.position_ids.iter().find(|&&p| p as usize >= self.config.max_positions) {
            return Err(Error::Config(format!("position id {bad} out of range")));
        }
        if input.segment_ids.iter().any(|&s| s > 1) {
            return Err(Error::Config("segment ids must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &TokenizedInput) -> Result<(Matrix<F>, ForwardCache<F>)> {
        self.check_input(input)?;
        let cfg = &self.config;
        let (len, h, nh) = (input.len(), cfg.hidden, cfg.heads);
        let dh = h / nh;
        let p = &self.params;
        let lay = &self.layout;
        let token_ids: Vec<usize> = input.token_ids.iter().map(|&t| t as usize).collect();
        let position_ids: Vec<usize> = input.position_ids.iter().map(|&t| t as usize).collect();
        let segment_ids: Vec<usize> = input.segment_ids.iter().map(|&t| t as usize).collect();

        let mut x = vec![F::zero(); len * h];
        for i in 0..len {
            let tok = &p[lay.token.start + token_ids[i] * h..][..h];
            let pos = &p[lay.position.start + position_ids[i] * h..][..h];
            let seg = &p[lay.segment.start + segment_ids[i] * h..][..h];
            for j in 0..h {
                x[i * h + j] = tok[j] + pos[j] + seg[j];
            }
        }
        let (mut hcur, emb_ln) = layer_norm(&x, len, h, &p[lay.emb_ln_g.clone()], &p[lay.emb_ln_b.clone()]);

        let scale: F = F::one() / c::<F>(dh as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in &lay.layers {
            let q = affine(&hcur, len, h, &p[l.q_w.clone()], &p[l.q_b.clone()], h);
            let k = affine(&hcur, len, h, &p[l.k_w.clone()], &p[l.k_b.clone()], h);
            let v = affine(&hcur, len, h, &p[l.v_w.clone()], &p[l.v_b.clone()], h);
            let mut probs = vec![F::zero(); nh * len * len];
            let mut ctx = vec![F::zero(); len * h];
            for head in 0..nh {
                let off = head * dh;
                for i in 0..len {
                    let qi = &q[i * h + off..i * h + off + dh];
                    let row = &mut probs[(head * len + i) * len..(head * len + i + 1) * len];
                    let mut max = F::neg_infinity();
                    for j in 0..len {
                        let s = dot(qi, &k[j * h + off..j * h + off + dh]) * scale;
                        row[j] = s;
                        max = max.max(s);
                    }
                    let mut sum = F::zero();
                    for r in row.iter_mut() {
                        *r = (*r - max).exp();
                        sum += *r;
                    }
                    for r in row.iter_mut() {
                        *r /= sum;
                    }
                    let ci = &mut ctx[i * h + off..i * h + off + dh];
                    for j in 0..len {
                        let pij = row[j];
                        for (cv, &vv) in ci.iter_mut().zip(&v[j * h + off..j * h + off + dh]) {
                            *cv += pij * vv;
                        }
                    }
                }
            }
            let attn_out = affine(&ctx, len, h, &p[l.o_w.clone()], &p[l.o_b.clone()], h);
            let r1: Vec<F> = hcur.iter().zip(&attn_out).map(|(&a, &b)| a + b).collect();
            let (h1, ln1) = layer_norm(&r1, len, h, &p[l.ln1_g.clone()], &p[l.ln1_b.clone()]);
            let pre_act = affine(&h1, len, h, &p[l.ff1_w.clone()], &p[l.ff1_b.clone()], cfg.ffn);
            let act: Vec<F> = pre_act.iter().map(|&u| gelu(u)).collect();
            let ff_out = affine(&act, len, cfg.ffn, &p[l.ff2_w.clone()], &p[l.ff2_b.clone()], h);
            let r2: Vec<F> = h1.iter().zip(&ff_out).map(|(&a, &b)| a + b).collect();
            let (out, ln2) = layer_norm(&r2, len, h, &p[l.ln2_g.clone()], &p[l.ln2_b.clone()]);
            layers.push(LayerCache {
                input: std::mem::replace(&mut hcur, out),
                q,
                k,
                v,
                probs,
                ctx,
                ln1,
                h1,
                pre_act,
                act,
                ln2,
            });
        }
        let cache = ForwardCache {
            len,
            token_ids,
            position_ids,
            segment_ids,
            emb_ln,
            layers,
        };
        Ok((Matrix::from_vec(len, h, hcur), cache))
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
    pub fn backward(&self, cache: &ForwardCache<F>, d_out: &Matrix<F>, grads: &mut [F]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer length");
        let cfg = &self.config;
        let (len, h, nh) = (cache.len, cfg.hidden, cfg.heads);
        let dh = h / nh;
        let p = &self.params;
        let lay = &self.layout;
        let scale: F = F::one() / c::<F>(dh as f64).sqrt();
        let mut dcur = d_out.data.clone();

        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            let dr2 = {
                let (dg, db) = two_mut(grads, l.ln2_g.clone(), l.ln2_b.clone());
                layer_norm_backward(&dcur, &lc.ln2, len, h, &p[l.ln2_g.clone()], dg, db)
            };
            // r2 = h1 + ff_out
            let dact = {
                let (dw, db) = two_mut(grads, l.ff2_w.clone(), l.ff2_b.clone());
                affine_backward(&lc.act, &dr2, len, cfg.ffn, h, &p[l.ff2_w.clone()], dw, db)
            };
            let dpre: Vec<F> = dact.iter().zip(&lc.pre_act).map(|(&g, &u)| g * gelu_grad(u)).collect();
            let dh1_ff = {
                let (dw, db) = two_mut(grads, l.ff1_w.clone(), l.ff1_b.clone());
                affine_backward(&lc.h1, &dpre, len, h, cfg.ffn, &p[l.ff1_w.clone()], dw, db)
            };
            let dh1: Vec<F> = dr2.iter().zip(&dh1_ff).map(|(&a, &b)| a + b).collect();
            let dr1 = {
                let (dg, db) = two_mut(grads, l.ln1_g.clone(), l.ln1_b.clone());
                layer_norm_backward(&dh1, &lc.ln1, len, h, &p[l.ln1_g.clone()], dg, db)
            };
            // r1 = input + attn_out
            let dctx = {
                let (dw, db) = two_mut(grads, l.o_w.clone(), l.o_b.clone());
                affine_backward(&lc.ctx, &dr1, len, h, h, &p[l.o_w.clone()], dw, db)
            };
            let mut dq = vec![F::zero(); len * h];
            let mut dk = vec![F::zero(); len * h];
            let mut dv = vec![F::zero(); len * h];
            let mut dp = vec![F::zero(); len];
            for head in 0..nh {
                let off = head * dh;
                for i in 0..len {
                    let row = &lc.probs[(head * len + i) * len..(head * len + i + 1) * len];
                    let dci = &dctx[i * h + off..i * h + off + dh];
                    for j in 0..len {
                        let vj = &lc.v[j * h + off..j * h + off + dh];
                        dp[j] = dot(dci, vj);
                        for (d, &g) in dv[j * h + off..j * h + off + dh].iter_mut().zip(dci) {
                            *d += row[j] * g;
                        }
                    }
                    let weighted = dot(&dp, row);
                    let qi = &lc.q[i * h + off..i * h + off + dh];
                    for j in 0..len {
                        let ds = row[j] * (dp[j] - weighted) * scale;
                        if ds == F::zero() {
                            continue;
                        }
                        let kj = &lc.k[j * h + off..j * h + off + dh];
                        for d in 0..dh {
                            dq[i * h + off + d] += ds * kj[d];
                            dk[j * h + off + d] += ds * qi[d];
                        }
                    }
                }
            }
            let mut dinput = dr1;
            for (dproj, w, b) in [(&dq, &l.q_w, &l.q_b), (&dk, &l.k_w, &l.k_b), (&dv, &l.v_w, &l.v_b)] {
                let (dw, db) = two_mut(grads, w.clone(), b.clone());
                let dx = affine_backward(&lc.input, dproj, len, h, h, &p[w.clone()], dw, db);
                for (a, b) in dinput.iter_mut().zip(&dx) {
                    *a += *b;
                }
            }
            dcur = dinput;
        }

        let dx = {
            let (dg, db) = two_mut(grads, lay.emb_ln_g.clone(), lay.emb_ln_b.clone());
            layer_norm_backward(&dcur, &cache.emb_ln, len, h, &p[lay.emb_ln_g.clone()], dg, db)
        };
        for i in 0..len {
            let di = &dx[i * h..(i + 1) * h];
            for (start, id) in [
                (lay.token.start, cache.token_ids[i]),
                (lay.position.start, cache.position_ids[i]),
                (lay.segment.start, cache.segment_ids[i]),
            ] {
                for (g, &d) in grads[start + id * h..start + (id + 1) * h].iter_mut().zip(di) {
                    *g += d;
                }
            }
        }
    }
}

/// Two disjoint mutable sub-slices, `a` entirely before `b`.
fn two_mut<F>(buf: &mut [F], a: Range<usize>, b: Range<usize>) -> (&mut [F], &mut [F]) {
    assert!(a.end <= b.start, "ranges must be ordered and disjoint");
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{build_vocab, tokenize_pair, Hyperparams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 40,
            hidden: 8,
            layers: 2,
            heads: 2,
            ffn: 12,
            max_positions: 32,
        }
    }

    fn input(q: &str, p: &str) -> TokenizedInput {
        let v = build_vocab(&["what is red", "apple is red sky is blue"], 40);
        tokenize_pair(q, p, &v, &Hyperparams::default())
    }

    #[test]
    fn output_shape_matches_input() {
        let enc = Encoder::<f64>::init(tiny(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let t = input("what is red", "apple is red");
        let out = enc.encode(&t).unwrap();
        assert_eq!((out.rows, out.cols), (t.len(), 8));
        assert!(out.is_finite());
    }

    #[test]
    fn zero_parameters_give_finite_output() {
        let enc = Encoder::<f64>::zeros(tiny()).unwrap();
        let out = enc.encode(&input("what", "sky is blue")).unwrap();
        assert!(out.is_finite());
    }

    #[test]
    fn output_depends_on_passage() {
        let enc = Encoder::<f64>::init(tiny(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = enc.encode(&input("what is red", "apple is red")).unwrap();
        let b = enc.encode(&input("what is red", "sky is blue")).unwrap();
        assert_ne!(a.row(0), b.row(0));
    }

    #[test]
    fn rejects_out_of_vocabulary_ids() {
        let mut cfg = tiny();
        cfg.vocab_size = 5;
        let enc = Encoder::<f64>::zeros(cfg).unwrap();
        assert!(matches!(enc.encode(&input("what is red", "apple")), Err(Error::Config(_))));
        cfg.heads = 3;
        assert!(Encoder::<f64>::zeros(cfg).is_err());
    }

    #[test]
    fn f32_and_f64_agree() {
        let e64 = Encoder::<f64>::init(tiny(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let e32 = Encoder::<f32>::from_params(tiny(), e64.params().iter().map(|&v| v as f32).collect()).unwrap();
        let t = input("what is red", "apple is red");
        let (a, b) = (e64.encode(&t).unwrap(), e32.encode(&t).unwrap());
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - *y as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let l = ParamLayout::new(&tiny());
        let mut next = 0;
        for (_, shape, r) in &l.tensors {
            assert_eq!(r.start, next);
            assert_eq!(r.len(), shape.iter().product::<usize>());
            next = r.end;
        }
        assert_eq!(next, l.total);
    }
}

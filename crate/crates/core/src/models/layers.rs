//! Neural building blocks with explicit forward caches and hand-written
//! backward passes. Every layer accumulates into its own gradient buffers;
//! the optimizer sees them through the flat parameter visitor.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::param::{GroupId, ParamMut};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// In-place row softmax with max subtraction.
pub fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn uniform_init<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

pub fn normal_init<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut R,
) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

/// Fully connected layer; weight shape (in, out), zero-initialized bias.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Dense {
            w: uniform_init(in_dim, out_dim, in_dim, rng),
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((in_dim, out_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.gw += &x.t().dot(dy);
        self.gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    pub fn collect<'a>(&'a mut self, group: GroupId, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            group,
            name: format!("{prefix}.w"),
            value: self.w.as_slice_mut().expect("standard layout"),
            grad: self.gw.as_slice_mut().expect("standard layout"),
        });
        out.push(ParamMut {
            group,
            name: format!("{prefix}.b"),
            value: self.b.as_slice_mut().expect("standard layout"),
            grad: self.gb.as_slice_mut().expect("standard layout"),
        });
    }
}

/// Per-row layer normalization over the feature dimension.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub ggamma: Array1<f64>,
    pub gbeta: Array1<f64>,
    pub eps: f64,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            ggamma: Array1::zeros(dim),
            gbeta: Array1::zeros(dim),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[i] = is;
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let d = dy.ncols() as f64;
        self.ggamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.gbeta += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let dxh = dxhat.row(i);
            let xh = cache.xhat.row(i);
            let mean_dxh = dxh.sum() / d;
            let mean_dxh_xh = dxh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
            let is = cache.inv_std[i];
            for j in 0..dy.ncols() {
                dx[[i, j]] = is * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
            }
        }
        dx
    }

    pub fn collect<'a>(&'a mut self, group: GroupId, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            group,
            name: format!("{prefix}.gamma"),
            value: self.gamma.as_slice_mut().expect("standard layout"),
            grad: self.ggamma.as_slice_mut().expect("standard layout"),
        });
        out.push(ParamMut {
            group,
            name: format!("{prefix}.beta"),
            value: self.beta.as_slice_mut().expect("standard layout"),
            grad: self.gbeta.as_slice_mut().expect("standard layout"),
        });
    }
}

/// Multi-head self-attention with an output projection.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Dense,
    pub wk: Dense,
    pub wv: Dense,
    pub wo: Dense,
    pub heads: usize,
}

pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Self {
        assert_eq!(dim % heads, 0, "dim must divide evenly into heads");
        MultiHeadAttention {
            wq: Dense::new(dim, dim, rng),
            wk: Dense::new(dim, dim, rng),
            wv: Dense::new(dim, dim, rng),
            wo: Dense::new(dim, dim, rng),
            heads,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let d = x.ncols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let mut ctx = Array2::zeros(x.raw_dim());
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(ndarray::s![.., cols.clone()]);
            let kh = k.slice(ndarray::s![.., cols.clone()]);
            let vh = v.slice(ndarray::s![.., cols.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            softmax_rows(&mut scores);
            let ctx_h = scores.dot(&vh);
            ctx.slice_mut(ndarray::s![.., cols]).assign(&ctx_h);
            attn.push(scores);
        }
        let y = self.wo.forward(&ctx);
        (
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                attn,
                ctx,
            },
        )
    }

    pub fn backward(&mut self, cache: &AttentionCache, dy: &Array2<f64>) -> Array2<f64> {
        let d = cache.x.ncols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dctx = self.wo.backward(&cache.ctx, dy);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let a = &cache.attn[h];
            let qh = cache.q.slice(ndarray::s![.., cols.clone()]);
            let kh = cache.k.slice(ndarray::s![.., cols.clone()]);
            let vh = cache.v.slice(ndarray::s![.., cols.clone()]);
            let dctx_h = dctx.slice(ndarray::s![.., cols.clone()]);
            let da = dctx_h.dot(&vh.t());
            dv.slice_mut(ndarray::s![.., cols.clone()])
                .assign(&a.t().dot(&dctx_h));
            // softmax backward row-wise: dS = A o (dA - rowsum(dA o A))
            let mut ds = &da * a;
            for i in 0..ds.nrows() {
                let row_dot = ds.row(i).sum();
                for j in 0..ds.ncols() {
                    ds[[i, j]] = a[[i, j]] * (da[[i, j]] - row_dot);
                }
            }
            ds *= scale;
            dq.slice_mut(ndarray::s![.., cols.clone()])
                .assign(&ds.dot(&kh));
            dk.slice_mut(ndarray::s![.., cols]).assign(&ds.t().dot(&qh));
        }
        let mut dx = self.wq.backward(&cache.x, &dq);
        dx += &self.wk.backward(&cache.x, &dk);
        dx += &self.wv.backward(&cache.x, &dv);
        dx
    }

    pub fn collect<'a>(&'a mut self, group: GroupId, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.wq.collect(group, &format!("{prefix}.wq"), out);
        self.wk.collect(group, &format!("{prefix}.wk"), out);
        self.wv.collect(group, &format!("{prefix}.wv"), out);
        self.wo.collect(group, &format!("{prefix}.wo"), out);
    }
}

/// Position-wise feed-forward block with a 4x hidden expansion and ReLU.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub fc1: Dense,
    pub fc2: Dense,
}

pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        FeedForward {
            fc1: Dense::new(dim, 4 * dim, rng),
            fc2: Dense::new(4 * dim, dim, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.fc1.forward(x);
        let mut hidden = pre.clone();
        relu_inplace(&mut hidden);
        let y = self.fc2.forward(&hidden);
        (
            y,
            FeedForwardCache {
                x: x.clone(),
                pre,
                hidden,
            },
        )
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, dy: &Array2<f64>) -> Array2<f64> {
        let dhidden = self.fc2.backward(&cache.hidden, dy);
        let dpre = &dhidden * &cache.pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        self.fc1.backward(&cache.x, &dpre)
    }

    pub fn collect<'a>(&'a mut self, group: GroupId, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.fc1.collect(group, &format!("{prefix}.fc1"), out);
        self.fc2.collect(group, &format!("{prefix}.fc2"), out);
    }
}

/// One post-norm transformer block: attention and feed-forward sublayers,
/// each wrapped in residual + layer norm.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ffn: FeedForward,
    pub ln2: LayerNorm,
}

pub struct BlockCache {
    attn: AttentionCache,
    ln1: LayerNormCache,
    ffn: FeedForwardCache,
    ln2: LayerNormCache,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Self {
        TransformerBlock {
            attn: MultiHeadAttention::new(dim, heads, rng),
            ln1: LayerNorm::new(dim),
            ffn: FeedForward::new(dim, rng),
            ln2: LayerNorm::new(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, BlockCache) {
        let (a, attn_cache) = self.attn.forward(x);
        let (n1, ln1_cache) = self.ln1.forward(&(x + &a));
        let (f, ffn_cache) = self.ffn.forward(&n1);
        let (y, ln2_cache) = self.ln2.forward(&(&n1 + &f));
        (
            y,
            BlockCache {
                attn: attn_cache,
                ln1: ln1_cache,
                ffn: ffn_cache,
                ln2: ln2_cache,
            },
        )
    }

    pub fn backward(&mut self, cache: &BlockCache, dy: &Array2<f64>) -> Array2<f64> {
        let dr2 = self.ln2.backward(&cache.ln2, dy);
        let dn1 = self.ffn.backward(&cache.ffn, &dr2) + &dr2;
        let dr1 = self.ln1.backward(&cache.ln1, &dn1);
        self.attn.backward(&cache.attn, &dr1) + &dr1
    }

    pub fn collect<'a>(&'a mut self, group: GroupId, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.attn.collect(group, &format!("{prefix}.attn"), out);
        self.ln1.collect(group, &format!("{prefix}.ln1"), out);
        self.ffn.collect(group, &format!("{prefix}.ffn"), out);
        self.ln2.collect(group, &format!("{prefix}.ln2"), out);
    }
}

/// 3x3 convolution stored in im2col layout: weight (C_out, C_in * 9).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

pub struct ConvCache {
    cols: Array2<f64>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        Conv2d {
            w: uniform_init(c_out, fan_in, fan_in, rng),
            b: Array1::zeros(c_out),
            gw: Array2::zeros((c_out, fan_in)),
            gb: Array1::zeros(c_out),
            c_in,
            c_out,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.pad - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (c, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let mut cols = Array2::zeros((c * self.kernel * self.kernel, oh * ow));
        for oy in 0..oh {
            for ox in 0..ow {
                let col = oy * ow + ox;
                let mut row = 0;
                for ch in 0..c {
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                cols[[row, col]] = x[[ch, iy as usize, ix as usize]];
                            }
                            row += 1;
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, shape: (usize, usize, usize)) -> Array3<f64> {
        let (c, h, w) = shape;
        let (oh, ow) = self.out_hw(h, w);
        let mut dx = Array3::zeros(shape);
        for oy in 0..oh {
            for ox in 0..ow {
                let col = oy * ow + ox;
                let mut row = 0;
                for ch in 0..c {
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                dx[[ch, iy as usize, ix as usize]] += dcols[[row, col]];
                            }
                            row += 1;
                        }
                    }
                }
            }
        }
        dx
    }

    /// Input (C_in, H, W) to output (C_out, Ho, Wo), linear (no activation).
    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, ConvCache) {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.c_in, "channel mismatch");
        let (oh, ow) = self.out_hw(h, w);
        let cols = self.im2col(x);
        let mut flat = self.w.dot(&cols);
        for (mut row, &bias) in flat.rows_mut().into_iter().zip(self.b.iter()) {
            row += bias;
        }
        let y = flat
            .into_shape_with_order((self.c_out, oh, ow))
            .expect("conv output shape");
        (
            y,
            ConvCache {
                cols,
                in_shape: (c, h, w),
                out_hw: (oh, ow),
            },
        )
    }

    pub fn backward(&mut self, cache: &ConvCache, dy: &Array3<f64>) -> Array3<f64> {
        let (oh, ow) = cache.out_hw;
        let dy_flat = dy
            .to_owned()
            .into_shape_with_order((self.c_out, oh * ow))
            .expect("conv grad shape");
        self.gw += &dy_flat.dot(&cache.cols.t());
        self.gb += &dy_flat.sum_axis(Axis(1));
        let dcols = self.w.t().dot(&dy_flat);
        self.col2im(&dcols, cache.in_shape)
    }

    pub fn collect<'a>(&'a mut self, group: GroupId, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            group,
            name: format!("{prefix}.w"),
            value: self.w.as_slice_mut().expect("standard layout"),
            grad: self.gw.as_slice_mut().expect("standard layout"),
        });
        out.push(ParamMut {
            group,
            name: format!("{prefix}.b"),
            value: self.b.as_slice_mut().expect("standard layout"),
            grad: self.gb.as_slice_mut().expect("standard layout"),
        });
    }
}

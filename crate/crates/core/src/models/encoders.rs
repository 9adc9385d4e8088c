//! The text and image encoders. Text: token + learned positional
//! embeddings with a prepended classification vector, a stack of
//! transformer blocks, and a classification-position readout. Image: three
//! strided 3x3 convolutions with ReLU and a global average pool.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;

use super::layers::{normal_init, BlockCache, Conv2d, ConvCache, TransformerBlock};
use super::param::{GroupId, ParamMut};
use super::ModelConfig;
use crate::error::{Error, Result};

/// Transformer text encoder returning the classification position's final
/// hidden state.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub embed: Array2<f64>,
    pub gembed: Array2<f64>,
    pub cls: Array1<f64>,
    pub gcls: Array1<f64>,
    pub pos: Array2<f64>,
    pub gpos: Array2<f64>,
    pub blocks: Vec<TransformerBlock>,
    pub positional: bool,
    max_tokens: usize,
}

pub struct TextCache {
    tokens: Vec<usize>,
    blocks: Vec<BlockCache>,
}

impl TextEncoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.text_dim;
        TextEncoder {
            embed: normal_init(cfg.vocab_size, d, 0.02, rng),
            gembed: Array2::zeros((cfg.vocab_size, d)),
            cls: normal_init(1, d, 0.02, rng).row(0).to_owned(),
            gcls: Array1::zeros(d),
            pos: normal_init(cfg.max_tokens + 1, d, 0.02, rng),
            gpos: Array2::zeros((cfg.max_tokens + 1, d)),
            blocks: (0..cfg.text_layers)
                .map(|_| TransformerBlock::new(d, cfg.text_heads, rng))
                .collect(),
            positional: cfg.positional,
            max_tokens: cfg.max_tokens,
        }
    }

    pub fn dim(&self) -> usize {
        self.cls.len()
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<(Array1<f64>, TextCache)> {
        if tokens.len() > self.max_tokens {
            return Err(Error::DimMismatch(format!(
                "{} tokens exceed the {}-token cap",
                tokens.len(),
                self.max_tokens
            )));
        }
        let d = self.dim();
        let vocab = self.embed.nrows();
        let mut x = Array2::zeros((tokens.len() + 1, d));
        x.row_mut(0).assign(&self.cls);
        for (i, &id) in tokens.iter().enumerate() {
            if id >= vocab {
                return Err(Error::UnknownTokenId {
                    id,
                    vocab_size: vocab,
                });
            }
            x.row_mut(i + 1).assign(&self.embed.row(id));
        }
        if self.positional {
            for i in 0..tokens.len() + 1 {
                let mut row = x.row_mut(i);
                row += &self.pos.row(i);
            }
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = x;
        for block in &self.blocks {
            let (next, cache) = block.forward(&cur);
            caches.push(cache);
            cur = next;
        }
        let out = cur.row(0).to_owned();
        Ok((
            out,
            TextCache {
                tokens: tokens.to_vec(),
                blocks: caches,
            },
        ))
    }

    /// Backpropagates a gradient at the classification output into all
    /// encoder parameters.
    pub fn backward(&mut self, cache: &TextCache, d_out: &Array1<f64>) {
        let rows = cache.tokens.len() + 1;
        let mut dy = Array2::zeros((rows, self.dim()));
        dy.row_mut(0).assign(d_out);
        for (block, block_cache) in self.blocks.iter_mut().zip(cache.blocks.iter()).rev() {
            dy = block.backward(block_cache, &dy);
        }
        if self.positional {
            for i in 0..rows {
                let mut g = self.gpos.row_mut(i);
                g += &dy.row(i);
            }
        }
        self.gcls += &dy.row(0);
        for (i, &id) in cache.tokens.iter().enumerate() {
            let mut g = self.gembed.row_mut(id);
            g += &dy.row(i + 1);
        }
    }

    pub fn collect<'a>(&'a mut self, out: &mut Vec<ParamMut<'a>>) {
        let g = GroupId::TextEncoder;
        out.push(ParamMut {
            group: g,
            name: "text_encoder.embed".into(),
            value: self.embed.as_slice_mut().expect("standard layout"),
            grad: self.gembed.as_slice_mut().expect("standard layout"),
        });
        out.push(ParamMut {
            group: g,
            name: "text_encoder.cls".into(),
            value: self.cls.as_slice_mut().expect("standard layout"),
            grad: self.gcls.as_slice_mut().expect("standard layout"),
        });
        out.push(ParamMut {
            group: g,
            name: "text_encoder.pos".into(),
            value: self.pos.as_slice_mut().expect("standard layout"),
            grad: self.gpos.as_slice_mut().expect("standard layout"),
        });
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.collect(g, &format!("text_encoder.block{i}"), out);
        }
    }
}

/// Convolutional image encoder: channels 3 -> d/4 -> d/2 -> d with strides
/// 1, 2, 2, ReLU after every convolution, then global average pooling.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub conv3: Conv2d,
}

pub struct ImageCache {
    c1: ConvCache,
    c2: ConvCache,
    c3: ConvCache,
    pre1: Array3<f64>,
    pre2: Array3<f64>,
    pre3: Array3<f64>,
    map_hw: (usize, usize),
}

impl ImageEncoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.image_dim;
        ImageEncoder {
            conv1: Conv2d::new(3, d / 4, 3, 1, 1, rng),
            conv2: Conv2d::new(d / 4, d / 2, 3, 2, 1, rng),
            conv3: Conv2d::new(d / 2, d, 3, 2, 1, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.conv3.c_out
    }

    /// Input is the preprocessing layout (H, W, 3) in [0,1].
    pub fn forward(&self, image: &Array3<f64>) -> Result<(Array1<f64>, ImageCache)> {
        let (h, w, c) = image.dim();
        if c != 3 {
            return Err(Error::DimMismatch(format!(
                "expected (H, W, 3) image, got ({h}, {w}, {c})"
            )));
        }
        let x = image.view().permuted_axes([2, 0, 1]).to_owned();
        let (pre1, c1) = self.conv1.forward(&x);
        let mut act1 = pre1.clone();
        relu3(&mut act1);
        let (pre2, c2) = self.conv2.forward(&act1);
        let mut act2 = pre2.clone();
        relu3(&mut act2);
        let (pre3, c3) = self.conv3.forward(&act2);
        let mut act3 = pre3.clone();
        relu3(&mut act3);
        let (_, mh, mw) = act3.dim();
        let pooled = act3
            .map_axis(Axis(2), |v| v.sum())
            .map_axis(Axis(1), |v| v.sum())
            / (mh * mw) as f64;
        Ok((
            pooled,
            ImageCache {
                c1,
                c2,
                c3,
                pre1,
                pre2,
                pre3,
                map_hw: (mh, mw),
            },
        ))
    }

    pub fn backward(&mut self, cache: &ImageCache, d_out: &Array1<f64>) {
        let (mh, mw) = cache.map_hw;
        let scale = 1.0 / (mh * mw) as f64;
        let mut dmap = Array3::zeros((d_out.len(), mh, mw));
        for (c, &g) in d_out.iter().enumerate() {
            dmap.index_axis_mut(Axis(0), c).fill(g * scale);
        }
        mask_relu(&mut dmap, &cache.pre3);
        let mut dact2 = self.conv3.backward(&cache.c3, &dmap);
        mask_relu(&mut dact2, &cache.pre2);
        let mut dact1 = self.conv2.backward(&cache.c2, &dact2);
        mask_relu(&mut dact1, &cache.pre1);
        let _ = self.conv1.backward(&cache.c1, &dact1);
    }

    pub fn collect<'a>(&'a mut self, out: &mut Vec<ParamMut<'a>>) {
        let g = GroupId::ImageEncoder;
        self.conv1.collect(g, "image_encoder.conv1", out);
        self.conv2.collect(g, "image_encoder.conv2", out);
        self.conv3.collect(g, "image_encoder.conv3", out);
    }
}

fn relu3(x: &mut Array3<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

fn mask_relu(grad: &mut Array3<f64>, pre: &Array3<f64>) {
    ndarray::Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

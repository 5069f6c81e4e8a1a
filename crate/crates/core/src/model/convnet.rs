use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::checkpoint::Architecture;
use super::extractor::{FeatureExtractor, FinetuneScope};
use super::params::{Param, ParamSet};
use crate::error::{Error, Result};
use crate::image::{Image, ImageShape};
use crate::rng;

/// Conv blocks (3x3 conv, ReLU, 2x2 max-pool) followed by a linear embedding layer.
///
/// Each input channel is standardized per image before the first block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvNetConfig {
    pub input: ImageShape,
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for ConvNetConfig {
    fn default() -> Self {
        Self {
            input: ImageShape::new(1, 16, 16),
            channels: vec![16, 16, 16, 16],
            embedding_dim: 64,
        }
    }
}

impl ConvNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input.is_empty() || self.embedding_dim == 0 || self.channels.contains(&0) {
            return Err(Error::Config("conv net dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Spatial size after each block.
    fn block_dims(&self) -> Vec<(usize, usize, usize, usize, usize)> {
        let (mut cin, mut h, mut w) = (self.input.channels, self.input.height, self.input.width);
        let mut dims = Vec::with_capacity(self.channels.len());
        for &cout in &self.channels {
            dims.push((cin, cout, h, w, usize::from(h >= 2 && w >= 2)));
            if h >= 2 && w >= 2 {
                h /= 2;
                w /= 2;
            }
            cin = cout;
        }
        dims
    }

    fn flat_dim(&self) -> usize {
        let (mut h, mut w) = (self.input.height, self.input.width);
        for _ in &self.channels {
            if h >= 2 && w >= 2 {
                h /= 2;
                w /= 2;
            }
        }
        self.channels.last().copied().unwrap_or(self.input.channels) * h * w
    }
}

#[derive(Debug, Clone)]
pub struct ConvNet {
    config: ConvNetConfig,
    params: ParamSet,
    blocks: Vec<BlockDims>,
    flat_dim: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockDims {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    pool: bool,
}

impl BlockDims {
    fn out_hw(&self) -> (usize, usize) {
        if self.pool {
            (self.h / 2, self.w / 2)
        } else {
            (self.h, self.w)
        }
    }
}

#[derive(Debug, Clone)]
struct BlockTape {
    /// Unrolled input patches (see `im2col`).
    col: Vec<f64>,
    pre_activation: Vec<f64>,
    /// For every output value, the index into `pre_activation` it was taken from.
    pool_source: Vec<u32>,
}

/// Activations recorded by [`ConvNet`]'s forward pass.
#[derive(Debug, Clone)]
pub struct ConvTape {
    blocks: Vec<BlockTape>,
    flat: Vec<f64>,
}

impl ConvNet {
    /// He-initialized network.
    pub fn new(config: ConvNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(seed);
        let mut params = ParamSet::default();
        for (b, d) in config.block_dims().into_iter().enumerate() {
            let (cin, cout) = (d.0, d.1);
            let std = libm::sqrt(2.0 / (cin * 9) as f64);
            let normal = Normal::new(0.0, std).map_err(|e| Error::Config(alloc::format!("{e}")))?;
            let weights = (0..cout * cin * 9).map(|_| normal.sample(&mut rng)).collect();
            params.push(Param::new(
                alloc::format!("conv{b}.weight"),
                vec![cout, cin, 3, 3],
                weights,
            )?);
            params.push(Param::zeros(alloc::format!("conv{b}.bias"), vec![cout]));
        }
        let flat = config.flat_dim();
        let std = libm::sqrt(1.0 / flat as f64);
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(alloc::format!("{e}")))?;
        let weights = (0..config.embedding_dim * flat)
            .map(|_| normal.sample(&mut rng))
            .collect();
        params.push(Param::new("fc.weight", vec![config.embedding_dim, flat], weights)?);
        params.push(Param::zeros("fc.bias", vec![config.embedding_dim]));
        Self::from_params(config, params)
    }

    /// Rebuilds a network from stored parameters, checking names and shapes.
    pub fn from_params(config: ConvNetConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let dims = config.block_dims();
        let flat_dim = config.flat_dim();
        let mut expected: Vec<(alloc::string::String, Vec<usize>)> = Vec::new();
        for (b, d) in dims.iter().enumerate() {
            expected.push((alloc::format!("conv{b}.weight"), vec![d.1, d.0, 3, 3]));
            expected.push((alloc::format!("conv{b}.bias"), vec![d.1]));
        }
        expected.push(("fc.weight".into(), vec![config.embedding_dim, flat_dim]));
        expected.push(("fc.bias".into(), vec![config.embedding_dim]));
        if params.len() != expected.len()
            || params
                .iter()
                .zip(&expected)
                .any(|(p, (name, shape))| &p.name != name || &p.shape != shape)
        {
            return Err(Error::Contract(
                "parameters do not match the conv net configuration".into(),
            ));
        }
        let blocks = dims
            .into_iter()
            .map(|(cin, cout, h, w, pool)| BlockDims {
                cin,
                cout,
                h,
                w,
                pool: pool == 1,
            })
            .collect();
        Ok(Self {
            config,
            params,
            blocks,
            flat_dim,
        })
    }

    pub fn config(&self) -> &ConvNetConfig {
        &self.config
    }

    fn fc_index(&self) -> usize {
        2 * self.blocks.len()
    }
}

/// Unrolls 3x3 zero-padded patches: row `p` holds the `cin * 9` taps feeding
/// output pixel `p`, in the same order as a filter's weights.
fn im2col(x: &[f64], d: &BlockDims) -> Vec<f64> {
    let (h, w) = (d.h, d.w);
    let k = d.cin * 9;
    let mut col = vec![0.0; h * w * k];
    for oy in 0..h {
        for ox in 0..w {
            let row = &mut col[(oy * w + ox) * k..(oy * w + ox + 1) * k];
            for ci in 0..d.cin {
                let plane = &x[ci * h * w..(ci + 1) * h * w];
                for ky in 0..3 {
                    let Some(iy) = (oy + ky).checked_sub(1).filter(|&iy| iy < h) else {
                        continue;
                    };
                    for kx in 0..3 {
                        if let Some(ix) = (ox + kx).checked_sub(1).filter(|&ix| ix < w) {
                            row[ci * 9 + ky * 3 + kx] = plane[iy * w + ix];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn conv3x3_forward(col: &[f64], d: &BlockDims, weight: &[f64], bias: &[f64], y: &mut [f64]) {
    let plane = d.h * d.w;
    let k = d.cin * 9;
    for co in 0..d.cout {
        let filter = &weight[co * k..(co + 1) * k];
        for (p, out) in y[co * plane..(co + 1) * plane].iter_mut().enumerate() {
            *out = bias[co] + dot4(filter, &col[p * k..(p + 1) * k]);
        }
    }
}

fn conv3x3_backward(
    col: &[f64],
    d: &BlockDims,
    weight: &[f64],
    gy: &[f64],
    gweight: &mut [f64],
    gbias: &mut [f64],
    gx: Option<&mut [f64]>,
) {
    let (h, w) = (d.h, d.w);
    let plane = h * w;
    let k = d.cin * 9;
    for co in 0..d.cout {
        let g = &gy[co * plane..(co + 1) * plane];
        gbias[co] += g.iter().sum::<f64>();
        let gw = &mut gweight[co * k..(co + 1) * k];
        for (p, &gv) in g.iter().enumerate() {
            if gv != 0.0 {
                for (a, c) in gw.iter_mut().zip(&col[p * k..(p + 1) * k]) {
                    *a += gv * c;
                }
            }
        }
    }
    let Some(gx) = gx else {
        return;
    };
    let mut gcol = vec![0.0; k];
    for oy in 0..h {
        for ox in 0..w {
            let p = oy * w + ox;
            gcol.fill(0.0);
            for co in 0..d.cout {
                let gv = gy[co * plane + p];
                if gv != 0.0 {
                    for (a, wv) in gcol.iter_mut().zip(&weight[co * k..(co + 1) * k]) {
                        *a += gv * wv;
                    }
                }
            }
            for ci in 0..d.cin {
                for ky in 0..3 {
                    let Some(iy) = (oy + ky).checked_sub(1).filter(|&iy| iy < h) else {
                        continue;
                    };
                    for kx in 0..3 {
                        if let Some(ix) = (ox + kx).checked_sub(1).filter(|&ix| ix < w) {
                            gx[ci * plane + iy * w + ix] += gcol[ci * 9 + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

/// ReLU followed by 2x2 max-pooling (or ReLU alone when pooling is off).
fn relu_pool_forward(y: &[f64], d: &BlockDims) -> (Vec<f64>, Vec<u32>) {
    if !d.pool {
        let out = y.iter().map(|v| v.max(0.0)).collect();
        let src = (0..y.len() as u32).collect();
        return (out, src);
    }
    let (oh, ow) = d.out_hw();
    let mut out = vec![0.0; d.cout * oh * ow];
    let mut src = vec![0u32; out.len()];
    let mut k = 0;
    for c in 0..d.cout {
        let base = c * d.h * d.w;
        for py in 0..oh {
            for px in 0..ow {
                let mut best = base + 2 * py * d.w + 2 * px;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * py + dy) * d.w + 2 * px + dx;
                    if y[idx] > y[best] {
                        best = idx;
                    }
                }
                out[k] = y[best].max(0.0);
                src[k] = best as u32;
                k += 1;
            }
        }
    }
    (out, src)
}

/// Zero mean, unit variance per channel. Constant channels map to zero.
fn standardize(data: &[f64], channels: usize) -> Vec<f64> {
    let plane = data.len() / channels.max(1);
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(plane.max(1)) {
        let n = chunk.len() as f64;
        let mean = chunk.iter().sum::<f64>() / n;
        let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = if var > 1e-12 { 1.0 / libm::sqrt(var) } else { 0.0 };
        out.extend(chunk.iter().map(|v| (v - mean) * inv));
    }
    out
}

impl FeatureExtractor for ConvNet {
    type Tape = ConvTape;

    fn input_shape(&self) -> ImageShape {
        self.config.input
    }

    fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn architecture(&self) -> Architecture {
        Architecture::ConvNet(self.config.clone())
    }

    fn forward(&self, image: &Image) -> Result<(Vec<f64>, ConvTape)> {
        if image.shape() != self.config.input {
            return Err(Error::Contract(alloc::format!(
                "extractor expects images of shape {:?}, got {:?}",
                self.config.input,
                image.shape()
            )));
        }
        let mut x = standardize(image.data(), self.config.input.channels);
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for (b, d) in self.blocks.iter().enumerate() {
            let mut y = vec![0.0; d.cout * d.h * d.w];
            let col = im2col(&x, d);
            conv3x3_forward(
                &col,
                d,
                &self.params.get(2 * b).data,
                &self.params.get(2 * b + 1).data,
                &mut y,
            );
            let (out, src) = relu_pool_forward(&y, d);
            tapes.push(BlockTape {
                col,
                pre_activation: y,
                pool_source: src,
            });
            x = out;
        }
        let fc = self.fc_index();
        let weight = &self.params.get(fc).data;
        let bias = &self.params.get(fc + 1).data;
        let embedding = (0..self.config.embedding_dim)
            .map(|i| {
                bias[i]
                    + weight[i * self.flat_dim..(i + 1) * self.flat_dim]
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        Ok((embedding, ConvTape { blocks: tapes, flat: x }))
    }

    fn backward(&self, tape: &ConvTape, grad_embedding: &[f64], grads: &mut ParamSet, trainable: &[bool]) {
        let fc = self.fc_index();
        let first_trainable = trainable.iter().position(|t| *t);
        let Some(first_trainable) = first_trainable else {
            return;
        };
        let weight = &self.params.get(fc).data;
        {
            let gw = &mut grads.get_mut(fc).data;
            for (i, g) in grad_embedding.iter().enumerate() {
                for (gv, xv) in gw[i * self.flat_dim..(i + 1) * self.flat_dim]
                    .iter_mut()
                    .zip(&tape.flat)
                {
                    *gv += g * xv;
                }
            }
        }
        for (gb, g) in grads.get_mut(fc + 1).data.iter_mut().zip(grad_embedding) {
            *gb += g;
        }
        if first_trainable >= fc {
            return;
        }
        let mut gx = vec![0.0; self.flat_dim];
        for (i, g) in grad_embedding.iter().enumerate() {
            for (gv, wv) in gx.iter_mut().zip(&weight[i * self.flat_dim..(i + 1) * self.flat_dim]) {
                *gv += g * wv;
            }
        }
        for b in (0..self.blocks.len()).rev() {
            let d = &self.blocks[b];
            let bt = &tape.blocks[b];
            let mut gy = vec![0.0; bt.pre_activation.len()];
            for (g, &src) in gx.iter().zip(&bt.pool_source) {
                if bt.pre_activation[src as usize] > 0.0 {
                    gy[src as usize] += g;
                }
            }
            let need_input_grad = first_trainable < 2 * b;
            let mut gin = if need_input_grad {
                vec![0.0; d.cin * d.h * d.w]
            } else {
                Vec::new()
            };
            let (left, right) = grads.as_mut_pair(2 * b);
            conv3x3_backward(
                &bt.col,
                d,
                &self.params.get(2 * b).data,
                &gy,
                &mut left.data,
                &mut right.data,
                if need_input_grad { Some(&mut gin) } else { None },
            );
            if !need_input_grad {
                break;
            }
            gx = gin;
        }
    }

    fn trainable_mask(&self, scope: FinetuneScope) -> Vec<bool> {
        let fc = self.fc_index();
        (0..self.params.len())
            .map(|i| match scope {
                FinetuneScope::All => true,
                FinetuneScope::Embedding => i >= fc,
                FinetuneScope::Head => false,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::extractor::embed;

    fn tiny() -> ConvNet {
        ConvNet::new(
            ConvNetConfig {
                input: ImageShape::new(1, 8, 8),
                channels: vec![4, 4],
                embedding_dim: 6,
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn empty_batch_embeds_to_nothing() {
        assert!(embed(&tiny(), &[]).unwrap().is_empty());
    }

    #[test]
    fn default_backbone_has_64_dims() {
        let net = ConvNet::new(ConvNetConfig::default(), 1).unwrap();
        let img = Image::filled(ImageShape::new(1, 16, 16), 0.3);
        assert_eq!(net.embed_one(&img).unwrap().len(), 64);
    }

    #[test]
    fn identical_images_identical_embeddings() {
        let net = tiny();
        let img = Image::filled(ImageShape::new(1, 8, 8), 0.7);
        let out = embed(&net, &[img.clone(), img]).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn wrong_shape_is_a_contract_error() {
        let img = Image::filled(ImageShape::new(3, 8, 8), 0.1);
        assert!(matches!(tiny().forward(&img), Err(Error::Contract(_))));
    }

    #[test]
    fn from_params_rejects_mismatch() {
        let net = tiny();
        let mut other = net.config().clone();
        other.embedding_dim = 7;
        assert!(ConvNet::from_params(other, net.params().clone()).is_err());
        assert!(ConvNet::from_params(net.config().clone(), net.params().clone()).is_ok());
    }
}

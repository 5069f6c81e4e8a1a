use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};

use super::extractor::FeatureExtractor;
use super::ops::{dot, l2_norm, normalize};
use super::params::{Param, ParamSet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::prob::{softmax, ProbVector};
use crate::rng;

/// A classifier layer on top of an embedding.
pub trait Head: Clone {
    type Tape;

    fn num_classes(&self) -> usize;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn forward(&self, embedding: &[f64]) -> Result<(Vec<f64>, Self::Tape)>;
    /// Accumulates parameter gradients and returns the gradient with respect to the embedding.
    fn backward(&self, tape: &Self::Tape, grad_logits: &[f64], grads: &mut ParamSet) -> Vec<f64>;
    /// Restores invariants after an optimizer step.
    fn after_step(&mut self) {}

    fn logits(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(embedding)?.0)
    }
}

/// Cosine-similarity classifier: logit `c` is `scale * cos(w_c, x)`.
///
/// Parameters are `weight` (`N x d`, rows kept at unit norm) and the positive
/// logit `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineHead {
    params: ParamSet,
    way: usize,
    dim: usize,
}

const WEIGHT: usize = 0;
const SCALE: usize = 1;
const MIN_SCALE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CosineTape {
    unit_x: Vec<f64>,
    x_norm: f64,
    unit_w: Vec<f64>,
    w_norms: Vec<f64>,
    cosines: Vec<f64>,
}

impl CosineHead {
    /// Builds a head from weight rows, normalizing each row.
    pub fn from_rows(rows: &[Vec<f64>], scale: f64) -> Result<Self> {
        let way = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if way == 0 || dim == 0 {
            return Err(Error::Contract("cosine head needs at least one non-empty row".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::Config(alloc::format!(
                "logit scale must be positive, got {scale}"
            )));
        }
        let mut weights = Vec::with_capacity(way * dim);
        for (c, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Contract(alloc::format!(
                    "row {c} has dimension {} not {dim}",
                    row.len()
                )));
            }
            weights.extend(normalize(row)?);
        }
        Self::from_params(ParamSet::new(vec![
            Param::new("head.weight", vec![way, dim], weights)?,
            Param::new("head.scale", vec![1], vec![scale])?.without_decay(),
        ]))
    }

    /// Random unit rows, used when a head is not imprinted.
    pub fn random(way: usize, dim: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let rows: Vec<Vec<f64>> = (0..way)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Self::from_rows(&rows, scale)
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let ok = params.len() == 2
            && params.get(WEIGHT).name == "head.weight"
            && params.get(WEIGHT).shape.len() == 2
            && params.get(SCALE).name == "head.scale"
            && params.get(SCALE).shape == [1];
        if !ok {
            return Err(Error::Contract("parameters do not describe a cosine head".into()));
        }
        let (way, dim) = (params.get(WEIGHT).shape[0], params.get(WEIGHT).shape[1]);
        Ok(Self { params, way, dim })
    }

    pub fn way(&self) -> usize {
        self.way
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.params.get(SCALE).data[0]
    }

    pub fn set_scale(&mut self, scale: f64) {
        self.params.get_mut(SCALE).data[0] = scale;
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.params.get(WEIGHT).data[class * self.dim..(class + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.params.get(WEIGHT).data.chunks(self.dim)
    }

    /// Rescales every weight row to unit norm; rows that collapsed are left as is.
    pub fn renormalize_rows(&mut self) {
        let dim = self.dim;
        for row in self.params.get_mut(WEIGHT).data.chunks_mut(dim) {
            let n = l2_norm(row);
            if n > super::ops::NORMALIZE_EPS {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }

    /// `scale * cos(w_c, x)` for every class.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }
}

impl Head for CosineHead {
    type Tape = CosineTape;

    fn num_classes(&self) -> usize {
        self.way
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, CosineTape)> {
        if x.len() != self.dim {
            return Err(Error::Contract(alloc::format!(
                "embedding has dimension {}, head expects {}",
                x.len(),
                self.dim
            )));
        }
        let x_norm = l2_norm(x);
        let unit_x = normalize(x)?;
        let mut unit_w = Vec::with_capacity(self.way * self.dim);
        let mut w_norms = Vec::with_capacity(self.way);
        let mut cosines = Vec::with_capacity(self.way);
        for row in self.rows() {
            let unit = normalize(row)?;
            w_norms.push(l2_norm(row));
            cosines.push(dot(&unit, &unit_x));
            unit_w.extend(unit);
        }
        let scale = self.scale();
        let logits = cosines.iter().map(|c| scale * c).collect();
        Ok((
            logits,
            CosineTape {
                unit_x,
                x_norm,
                unit_w,
                w_norms,
                cosines,
            },
        ))
    }

    fn backward(&self, tape: &CosineTape, grad_logits: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let scale = self.scale();
        let dim = self.dim;
        grads.get_mut(SCALE).data[0] += grad_logits.iter().zip(&tape.cosines).map(|(g, c)| g * c).sum::<f64>();
        let mut grad_unit_x = vec![0.0; dim];
        let gw = &mut grads.get_mut(WEIGHT).data;
        for c in 0..self.way {
            let g_cos = scale * grad_logits[c];
            if g_cos == 0.0 {
                continue;
            }
            let v = &tape.unit_w[c * dim..(c + 1) * dim];
            for (gx, vv) in grad_unit_x.iter_mut().zip(v) {
                *gx += g_cos * vv;
            }
            // d cos / d w = (u - v cos) / |w|
            let inv = 1.0 / tape.w_norms[c];
            let cos = tape.cosines[c];
            for ((g, u), vv) in gw[c * dim..(c + 1) * dim].iter_mut().zip(&tape.unit_x).zip(v) {
                *g += g_cos * (u - vv * cos) * inv;
            }
        }
        let radial = dot(&grad_unit_x, &tape.unit_x);
        grad_unit_x
            .iter()
            .zip(&tape.unit_x)
            .map(|(g, u)| (g - u * radial) / tape.x_norm)
            .collect()
    }

    fn after_step(&mut self) {
        self.renormalize_rows();
        let s = self.scale();
        if !(s >= MIN_SCALE) {
            self.set_scale(MIN_SCALE);
        }
    }
}

/// Affine classifier `W x + b`, used for base-class pre-training.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    params: ParamSet,
    classes: usize,
    dim: usize,
}

#[derive(Debug, Clone)]
pub struct LinearTape {
    input: Vec<f64>,
}

impl LinearHead {
    pub fn new(classes: usize, dim: usize, seed: u64) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(Error::Config("linear head needs classes and a dimension".into()));
        }
        let mut rng = rng::seeded(seed);
        let std = libm::sqrt(1.0 / dim as f64);
        let weights = (0..classes * dim)
            .map(|_| std * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        Self::from_params(ParamSet::new(vec![
            Param::new("head.weight", vec![classes, dim], weights)?,
            Param::zeros("head.bias", vec![classes]),
        ]))
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let ok = params.len() == 2
            && params.get(0).name == "head.weight"
            && params.get(0).shape.len() == 2
            && params.get(1).name == "head.bias"
            && params.get(1).shape == [params.get(0).shape[0]];
        if !ok {
            return Err(Error::Contract("parameters do not describe a linear head".into()));
        }
        let (classes, dim) = (params.get(0).shape[0], params.get(0).shape[1]);
        Ok(Self { params, classes, dim })
    }
}

impl Head for LinearHead {
    type Tape = LinearTape;

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, LinearTape)> {
        if x.len() != self.dim {
            return Err(Error::Contract(alloc::format!(
                "embedding has dimension {}, head expects {}",
                x.len(),
                self.dim
            )));
        }
        let w = &self.params.get(0).data;
        let b = &self.params.get(1).data;
        let logits = (0..self.classes)
            .map(|c| b[c] + dot(&w[c * self.dim..(c + 1) * self.dim], x))
            .collect();
        Ok((logits, LinearTape { input: x.to_vec() }))
    }

    fn backward(&self, tape: &LinearTape, grad_logits: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let w = &self.params.get(0).data;
        let mut gx = vec![0.0; self.dim];
        {
            let gw = &mut grads.get_mut(0).data;
            for (c, g) in grad_logits.iter().enumerate() {
                let row = c * self.dim..(c + 1) * self.dim;
                for ((gwv, xv), (gxv, wv)) in gw[row.clone()]
                    .iter_mut()
                    .zip(&tape.input)
                    .zip(gx.iter_mut().zip(&w[row]))
                {
                    *gwv += g * xv;
                    *gxv += g * wv;
                }
            }
        }
        for (gb, g) in grads.get_mut(1).data.iter_mut().zip(grad_logits) {
            *gb += g;
        }
        gx
    }
}

/// Cosine logits of `head` for embedding `x`.
pub fn cosine_scores(head: &CosineHead, x: &[f64]) -> Result<Vec<f64>> {
    head.scores(x)
}

/// Class probabilities for `image`: softmax over the cosine logits.
pub fn predict<E: FeatureExtractor>(head: &CosineHead, extractor: &E, image: &Image) -> Result<ProbVector> {
    let embedding = extractor.embed_one(image)?;
    Ok(softmax(&head.scores(&embedding)?))
}

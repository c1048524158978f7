//! Per-pixel linear-softmax classifier.
//!
//! Features per pixel: intensity, 3×3 local mean (edge-clamped), row and
//! column scaled to [-1, 1], and a constant 1.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ClassField, ImageField};

pub const FEATURES: usize = 5;
pub const CLASSES: usize = 2;

/// Flat `voxel * FEATURES + feature` matrix for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn extract(image: &ImageField) -> Self {
        let (w, h) = image.dims();
        let scale = |i: usize, n: usize| {
            if n > 1 {
                2.0 * i as f64 / (n - 1) as f64 - 1.0
            } else {
                0.0
            }
        };
        let mut data = Vec::with_capacity(w * h * FEATURES);
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        sum += image.get(sx, sy);
                    }
                }
                data.extend_from_slice(&[
                    *image.get(x, y),
                    sum / 9.0,
                    scale(y, h),
                    scale(x, w),
                    1.0,
                ]);
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    pub fn voxels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn voxel(&self, i: usize) -> &[f64] {
        &self.data[i * FEATURES..(i + 1) * FEATURES]
    }
}

/// Weights (CLASSES × FEATURES, row-major) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelModel {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient with the same layout as [`PixelModel`].
pub type ModelGrad = PixelModel;

impl PixelModel {
    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; CLASSES * FEATURES],
            bias: vec![0.0; CLASSES],
        }
    }

    pub fn random<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Self {
        if scale == 0.0 {
            return Self::zeros();
        }
        let normal = Normal::new(0.0, scale).expect("valid scale");
        Self {
            weights: (0..CLASSES * FEATURES)
                .map(|_| normal.sample(rng))
                .collect(),
            bias: (0..CLASSES).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn forward(&self, features: &Features) -> ClassField {
        let v = features.voxels();
        let mut out = ClassField::zeros(features.width, features.height, CLASSES);
        for j in 0..v {
            let f = features.voxel(j);
            let z = out.voxel_mut(j);
            for (k, zk) in z.iter_mut().enumerate() {
                let row = &self.weights[k * FEATURES..(k + 1) * FEATURES];
                *zk = self.bias[k] + row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>();
            }
        }
        out
    }

    pub fn forward_image(&self, image: &ImageField) -> ClassField {
        self.forward(&Features::extract(image))
    }

    /// Accumulates ∂L/∂θ given ∂L/∂logits into `grad`.
    pub fn backward(
        &self,
        features: &Features,
        grad_logits: &[f64],
        grad: &mut ModelGrad,
    ) -> Result<()> {
        if grad_logits.len() != features.voxels() * CLASSES {
            return Err(Error::DimensionMismatch(
                (features.voxels() * CLASSES, 1),
                (grad_logits.len(), 1),
            ));
        }
        for j in 0..features.voxels() {
            let f = features.voxel(j);
            for k in 0..CLASSES {
                let g = grad_logits[j * CLASSES + k];
                if g == 0.0 {
                    continue;
                }
                grad.bias[k] += g;
                for (w, x) in grad.weights[k * FEATURES..(k + 1) * FEATURES]
                    .iter_mut()
                    .zip(f)
                {
                    *w += g * x;
                }
            }
        }
        Ok(())
    }

    /// Plain gradient-descent update.
    pub fn step(&mut self, grad: &ModelGrad, learning_rate: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= learning_rate * g;
        }
    }
}

//! Rectangular 2D voxel fields stored row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `width × height` grid of per-voxel values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch((width, height), (data.len(), 1)));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        check_dims(self.dims(), other.dims())
    }
}

/// Binary masks and label maps.
pub type LabelField = Grid<u8>;

/// Intensity images.
pub type ImageField = Grid<f64>;

impl Grid<u8> {
    /// Number of voxels with a nonzero value.
    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Renders a binary mask as ASCII plain PGM (P2), 0/255.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.data.chunks(self.width.max(1)) {
            let line: Vec<String> = row
                .iter()
                .map(|&v| if v != 0 { "255" } else { "0" }.to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

impl Grid<f64> {
    /// Renders intensities in [0, 1] as ASCII plain PGM (P2).
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.data.chunks(self.width.max(1)) {
            let line: Vec<String> = row
                .iter()
                .map(|&v| ((v.clamp(0.0, 1.0) * 255.0).round() as u32).to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// A grid carrying a fixed-length vector per voxel (logits, probabilities,
/// evidence), stored flat as `voxel * classes + class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassField {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl ClassField {
    pub fn zeros(width: usize, height: usize, classes: usize) -> Self {
        Self {
            width,
            height,
            classes,
            data: vec![0.0; width * height * classes],
        }
    }

    pub fn from_vec(width: usize, height: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * classes {
            return Err(Error::DimensionMismatch(
                (width * height * classes, 1),
                (data.len(), 1),
            ));
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn voxels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn voxel(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    #[inline]
    pub fn voxel_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.classes;
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn iter_voxels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.classes)
    }

    /// Row-wise softmax.
    pub fn softmax(&self) -> ClassField {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.classes) {
            softmax_in_place(row);
        }
        out
    }

    /// Per-voxel argmax; ties go to the lowest class index.
    pub fn argmax(&self) -> Grid<u8> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.iter_voxels().map(|v| argmax(v) as u8).collect(),
        }
    }

    pub fn ensure_same_dims(&self, other: &ClassField) -> Result<()> {
        check_dims(self.dims(), other.dims())?;
        if self.classes != other.classes {
            return Err(Error::DimensionMismatch(
                (self.classes, 1),
                (other.classes, 1),
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(a, b));
    }
    Ok(())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
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

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

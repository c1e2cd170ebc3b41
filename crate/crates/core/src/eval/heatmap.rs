//! Grayscale heatmap levels: small distances light, large distances dark.

use alloc::vec::Vec;

use super::matrix::DistanceMatrix;
use crate::math;

/// Level used when every present value is equal, and for absent cells.
pub const MID_GRAY: u8 = 128;

/// Per-cell gray levels of a matrix under per-matrix min/max normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub levels: Vec<u8>,
}

/// `255 * (1 - (v - min) / (max - min))` before rounding.
pub fn brightness(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        255.0 * (1.0 - (v - min) / (max - min))
    } else {
        MID_GRAY as f64
    }
}

pub fn heatmap(m: &DistanceMatrix) -> Heatmap {
    let (min, max) = m.value_range().unwrap_or((0.0, 0.0));
    let levels = m
        .values
        .iter()
        .map(|v| match v {
            Some(v) => math::round(brightness(*v, min, max)).clamp(0.0, 255.0) as u8,
            None => MID_GRAY,
        })
        .collect();
    Heatmap {
        rows: m.rows(),
        cols: m.cols(),
        levels,
    }
}

impl Heatmap {
    pub fn level(&self, row: usize, col: usize) -> u8 {
        self.levels[row * self.cols + col]
    }

    /// Expands each cell to a `cell_px` square; returns `(width, height, pixels)`.
    pub fn raster(&self, cell_px: usize) -> (usize, usize, Vec<u8>) {
        let cell_px = cell_px.max(1);
        let (w, h) = (self.cols * cell_px, self.rows * cell_px);
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                out.push(self.level(y / cell_px, x / cell_px));
            }
        }
        (w, h, out)
    }
}

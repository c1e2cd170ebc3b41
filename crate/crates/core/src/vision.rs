//! Visual factor: normalized joint RGB histograms of background-removed
//! vehicle images, compared with the Bhattacharyya distance.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

pub const DEFAULT_BINS_PER_CHANNEL: usize = 8;
pub const MIN_BINS_PER_CHANNEL: usize = 2;
pub const MAX_BINS_PER_CHANNEL: usize = 64;

/// Lower clamp applied to the coefficient before taking the logarithm.
pub const COEFFICIENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VisionError {
    #[error("image dimensions must be positive")]
    ZeroDimension,
    #[error("expected {expected} {what}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("image has no foreground pixels")]
    EmptyForeground,
    #[error("bins per channel must be in 2..=64, got {0}")]
    BadBinCount(usize),
    #[error("histograms are incompatible: {0} vs {1} bins per channel")]
    IncompatibleHistograms(usize, usize),
    #[error("distributions have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }
}

/// RGB image plus foreground mask, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
    mask: Vec<bool>,
}

impl MaskedImage {
    /// `mask = None` marks every pixel as foreground.
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<Rgb>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self, VisionError> {
        if width == 0 || height == 0 {
            return Err(VisionError::ZeroDimension);
        }
        let area = width * height;
        if pixels.len() != area {
            return Err(VisionError::DimensionMismatch {
                what: "pixels",
                expected: area,
                actual: pixels.len(),
            });
        }
        let mask = mask.unwrap_or_else(|| vec![true; area]);
        if mask.len() != area {
            return Err(VisionError::DimensionMismatch {
                what: "mask entries",
                expected: area,
                actual: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(VisionError::EmptyForeground);
        }
        Ok(MaskedImage {
            width,
            height,
            pixels,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn foreground(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.pixels
            .iter()
            .zip(&self.mask)
            .filter_map(|(p, &m)| m.then_some(*p))
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Normalized joint RGB histogram with `B^3` bins.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawHistogram"))]
pub struct ColorHistogram {
    bins_per_channel: usize,
    values: Vec<f64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawHistogram {
    bins_per_channel: usize,
    values: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawHistogram> for ColorHistogram {
    type Error = VisionError;
    fn try_from(raw: RawHistogram) -> Result<Self, VisionError> {
        ColorHistogram::from_values(raw.bins_per_channel, raw.values)
    }
}

impl ColorHistogram {
    /// Wraps already-normalized bin values (`B^3` of them, summing to 1).
    pub fn from_values(bins_per_channel: usize, values: Vec<f64>) -> Result<Self, VisionError> {
        check_bins(bins_per_channel)?;
        let expected = bins_per_channel.pow(3);
        if values.len() != expected {
            return Err(VisionError::DimensionMismatch {
                what: "histogram bins",
                expected,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(VisionError::InvalidHistogram("values must be finite and non-negative"));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(VisionError::InvalidHistogram("values must sum to 1"));
        }
        Ok(ColorHistogram {
            bins_per_channel,
            values,
        })
    }

    pub fn bins_per_channel(&self) -> usize {
        self.bins_per_channel
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flattened index of the bin holding `color`.
    pub fn bin_of(&self, color: Rgb) -> usize {
        let [r, g, b] = color.0.map(|c| channel_bin(c, self.bins_per_channel));
        flatten_bin(self.bins_per_channel, r, g, b)
    }
}

fn check_bins(bins_per_channel: usize) -> Result<(), VisionError> {
    if (MIN_BINS_PER_CHANNEL..=MAX_BINS_PER_CHANNEL).contains(&bins_per_channel) {
        Ok(())
    } else {
        Err(VisionError::BadBinCount(bins_per_channel))
    }
}

/// `floor(c * B / 256)`
pub fn channel_bin(c: u8, bins_per_channel: usize) -> usize {
    c as usize * bins_per_channel / 256
}

pub fn flatten_bin(bins_per_channel: usize, r: usize, g: usize, b: usize) -> usize {
    (r * bins_per_channel + g) * bins_per_channel + b
}

pub fn unflatten_bin(bins_per_channel: usize, index: usize) -> (usize, usize, usize) {
    let b = index % bins_per_channel;
    let g = (index / bins_per_channel) % bins_per_channel;
    let r = index / (bins_per_channel * bins_per_channel);
    (r, g, b)
}

/// Histogram of the foreground pixels, normalized by the foreground count.
pub fn color_histogram(img: &MaskedImage, bins_per_channel: usize) -> Result<ColorHistogram, VisionError> {
    check_bins(bins_per_channel)?;
    let mut counts = vec![0u64; bins_per_channel.pow(3)];
    let mut total = 0u64;
    for Rgb([r, g, b]) in img.foreground() {
        let idx = flatten_bin(
            bins_per_channel,
            channel_bin(r, bins_per_channel),
            channel_bin(g, bins_per_channel),
            channel_bin(b, bins_per_channel),
        );
        counts[idx] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(VisionError::EmptyForeground);
    }
    let values = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(ColorHistogram {
        bins_per_channel,
        values,
    })
}

/// Bhattacharyya coefficient and distance over plain discrete distributions.
pub mod bhattacharyya {
    use super::{VisionError, COEFFICIENT_FLOOR};
    use crate::math;

    /// `sum_x sqrt(p(x) q(x))`, clamped into `[0, 1]`.
    pub fn coefficient(p: &[f64], q: &[f64]) -> Result<f64, VisionError> {
        if p.len() != q.len() {
            return Err(VisionError::LengthMismatch(p.len(), q.len()));
        }
        let bc: f64 = p.iter().zip(q).map(|(a, b)| math::sqrt(a * b)).sum();
        Ok(bc.clamp(0.0, 1.0))
    }

    /// `-ln(max(BC, 1e-12))`
    pub fn distance(p: &[f64], q: &[f64]) -> Result<f64, VisionError> {
        Ok(distance_from_coefficient(coefficient(p, q)?))
    }

    pub fn distance_from_coefficient(bc: f64) -> f64 {
        // -ln(1) is -0.0; normalize the sign
        -math::ln(bc.max(COEFFICIENT_FLOOR)) + 0.0
    }
}

fn check_compatible(p: &ColorHistogram, q: &ColorHistogram) -> Result<(), VisionError> {
    if p.bins_per_channel != q.bins_per_channel {
        Err(VisionError::IncompatibleHistograms(
            p.bins_per_channel,
            q.bins_per_channel,
        ))
    } else {
        Ok(())
    }
}

pub fn bhattacharyya_coefficient(p: &ColorHistogram, q: &ColorHistogram) -> Result<f64, VisionError> {
    check_compatible(p, q)?;
    bhattacharyya::coefficient(&p.values, &q.values)
}

pub fn bhattacharyya_distance(p: &ColorHistogram, q: &ColorHistogram) -> Result<f64, VisionError> {
    check_compatible(p, q)?;
    bhattacharyya::distance(&p.values, &q.values)
}

/// Largest value the distance can take, `-ln(1e-12)`.
pub fn max_distance() -> f64 {
    -math::ln(COEFFICIENT_FLOOR)
}

use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Per-pixel, per-channel score grid (logits or probabilities), stored
/// channel-major like [`HyperCube`](super::HyperCube).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ScoreMap<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            bail!(
                Shape,
                "score map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            );
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn channel(&self, channel: usize) -> &[T] {
        let plane = self.height * self.width;
        &self.data[channel * plane..(channel + 1) * plane]
    }

    /// Binarizes one channel with `score >= threshold`.
    pub fn threshold(&self, channel: usize, threshold: T) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .channel(channel)
                .iter()
                .map(|&v| v >= threshold)
                .collect(),
        }
    }
}

/// Single-layer boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            bail!(
                Shape,
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            );
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn not(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    pub fn same_extent(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }
}

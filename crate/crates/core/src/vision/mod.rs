//! Grayscale images, the built-in FAST/BRIEF front end, descriptor matching
//! and attention-mask filtering of keypoints.

mod brief;
mod external;
mod fast;
mod mask;
mod matching;
pub mod pgm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use brief::{compute_brief, BriefPattern, Descriptor, DESCRIPTOR_BITS};
pub use external::{read_external_features, write_external_features, ExternalFeatures};
pub use fast::{detect_fast, detect_fast_masked, segment_test};
pub use mask::{apply_mask, mask_reduction, BinaryMask, MaskSidecar};
pub use matching::{match_bruteforce, match_descriptors, Match, MatchConfig};

pub const MIN_IMAGE_SIDE: usize = 16;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::invalid(format!(
                "image {width}x{height} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                width * height
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn rotate180(&self) -> Image {
        let mut pixels = self.pixels.clone();
        pixels.reverse();
        Image {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Box-averages non-overlapping `factor`x`factor` cells; trailing
    /// partial cells are averaged over the pixels they contain.
    pub fn downscale(&self, factor: usize) -> Result<Image> {
        if factor <= 1 {
            return Ok(self.clone());
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut pixels = Vec::with_capacity(w * h);
        for by in 0..h {
            for bx in 0..w {
                let (mut sum, mut count) = (0u32, 0u32);
                for y in by * factor..((by + 1) * factor).min(self.height) {
                    for x in bx * factor..((bx + 1) * factor).min(self.width) {
                        sum += self.get(x, y) as u32;
                        count += 1;
                    }
                }
                pixels.push(((sum + count / 2) / count) as u8);
            }
        }
        Image::new(w, h, pixels)
    }

    pub fn read_pgm(path: &std::path::Path) -> Result<Image> {
        let (w, h, pixels) = pgm::read(path)?;
        Image::new(w, h, pixels)
    }

    pub fn write_pgm(&self, path: &std::path::Path) -> Result<()> {
        pgm::write(path, self.width, self.height, &self.pixels)
    }
}

/// Detected interest point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, score: f64) -> Self {
        Keypoint { x, y, score }
    }
}

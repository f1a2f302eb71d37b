use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{pgm, Keypoint};
use crate::error::{Error, Result};

/// Block-grid search space: a keypoint survives when its block is `true`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    block_size: usize,
    rows: usize,
    cols: usize,
    grid: Vec<bool>,
}

/// JSON sidecar written next to an exported mask PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub block_size: usize,
    pub kept_fraction: f64,
}

impl BinaryMask {
    pub fn new(block_size: usize, rows: usize, cols: usize, grid: Vec<bool>) -> Result<Self> {
        if !block_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "block size {block_size} is not a power of two"
            )));
        }
        if rows == 0 || cols == 0 || grid.len() != rows * cols {
            return Err(Error::invalid(format!(
                "mask grid of {} cells does not match {rows}x{cols}",
                grid.len()
            )));
        }
        Ok(BinaryMask {
            block_size,
            rows,
            cols,
            grid,
        })
    }

    /// Uniform mask covering a `width`x`height` image.
    pub fn for_image(width: usize, height: usize, block_size: usize, value: bool) -> Result<Self> {
        let rows = height.div_ceil(block_size);
        let cols = width.div_ceil(block_size);
        BinaryMask::new(block_size, rows, cols, vec![value; rows * cols])
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn grid(&self) -> &[bool] {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.grid[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.grid[row * self.cols + col] = value;
    }

    pub fn kept_count(&self) -> usize {
        self.grid.iter().filter(|&&b| b).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.grid.len() as f64
    }

    pub fn matches_image(&self, width: usize, height: usize) -> bool {
        self.rows == height.div_ceil(self.block_size) && self.cols == width.div_ceil(self.block_size)
    }

    pub fn check_image(&self, width: usize, height: usize) -> Result<()> {
        if self.matches_image(width, height) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{}x{} mask with {}px blocks does not cover a {width}x{height} image",
                self.rows, self.cols, self.block_size
            )))
        }
    }

    /// Writes `<stem>.pgm` at block resolution (0 excluded, 255 kept) and
    /// `<stem>.json` holding the sidecar. Returns both paths.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let pgm_path = dir.join(format!("{stem}.pgm"));
        let json_path = dir.join(format!("{stem}.json"));
        let raster: Vec<u8> = self.grid.iter().map(|&b| if b { 255 } else { 0 }).collect();
        pgm::write(&pgm_path, self.cols, self.rows, &raster)?;
        let sidecar = MaskSidecar {
            block_size: self.block_size,
            kept_fraction: self.kept_fraction(),
        };
        fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok((pgm_path, json_path))
    }

    /// Reads a mask written by [`BinaryMask::export`]; any non-zero pixel is kept.
    pub fn import(pgm_path: &Path) -> Result<Self> {
        let (cols, rows, raster) = pgm::read(pgm_path)?;
        let json_path = pgm_path.with_extension("json");
        let sidecar: MaskSidecar = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
        let mask = BinaryMask::new(
            sidecar.block_size,
            rows,
            cols,
            raster.iter().map(|&v| v != 0).collect(),
        )?;
        if (mask.kept_fraction() - sidecar.kept_fraction).abs() > 1e-12 {
            return Err(Error::Parse {
                path: json_path,
                line: 1,
                msg: "kept_fraction disagrees with the mask raster".into(),
            });
        }
        Ok(mask)
    }
}

/// Keeps keypoints whose containing block is set; order is preserved.
pub fn apply_mask(keypoints: &[Keypoint], mask: &BinaryMask) -> Result<Vec<Keypoint>> {
    let bs = mask.block_size as f64;
    let mut out = Vec::with_capacity(keypoints.len());
    for kp in keypoints {
        if !(kp.x >= 0.0 && kp.y >= 0.0) {
            return Err(Error::invalid(format!("keypoint ({}, {}) outside image", kp.x, kp.y)));
        }
        let (row, col) = ((kp.y / bs).floor() as usize, (kp.x / bs).floor() as usize);
        if row >= mask.rows || col >= mask.cols {
            return Err(Error::invalid(format!(
                "keypoint ({}, {}) outside the {}x{} mask grid",
                kp.x, kp.y, mask.rows, mask.cols
            )));
        }
        if mask.get(row, col) {
            out.push(*kp);
        }
    }
    Ok(out)
}

/// Fraction of the image excluded by the mask.
pub fn mask_reduction(mask: &BinaryMask) -> f64 {
    1.0 - mask.kept_fraction()
}

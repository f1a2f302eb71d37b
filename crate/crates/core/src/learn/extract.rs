use super::nets::{BoundNetwork, NetworkParams, FEATURE_STRIDE};
use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::vision::{BinaryMask, Image};

/// Number of blocks kept for a fraction `rho` of `total`; a small slack
/// absorbs products like `0.51 * 100` landing just above an integer.
pub fn kept_blocks(rho: f64, total: usize) -> usize {
    ((rho * total as f64 - 1e-9).ceil() as usize).clamp(1, total)
}

/// Keeps the `ceil(rho * M * N)` highest-scoring blocks of an `M x N`
/// score grid; equal scores favour the lower flat index.
pub fn extract_mask(scores: &Tensor, rho: f64, block_size: usize) -> Result<BinaryMask> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid(format!("keep fraction must be in (0, 1], got {rho}")));
    }
    let (rows, cols) = match *scores.shape() {
        [r, c] => (r, c),
        [n] => (1, n),
        ref s => return Err(Error::invalid(format!("scores must be M x N, got {s:?}"))),
    };
    let v = scores.data();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut grid = vec![false; v.len()];
    for &i in &order[..kept_blocks(rho, v.len())] {
        grid[i] = true;
    }
    BinaryMask::new(block_size, rows, cols, grid)
}

/// Attention scores of one frame pair, shaped `M x N`.
pub fn pair_scores(net: &BoundNetwork<'_>, tape: &Tape, a: &Image, b: &Image) -> Result<Tensor> {
    let input = tape.constant(super::nets::pair_tensor(a, b)?);
    let features = net.features(input)?;
    let s = features.shape();
    let (_, scores) = net.attention(features)?;
    scores.value().reshaped(&[s[1], s[2]])
}

/// One mask per frame, taken from the pair it starts (the last frame
/// reuses the final pair). Frames are downscaled by `downscale` before
/// entering the network, so blocks cover `16 * downscale` pixels.
pub fn infer_masks(params: &NetworkParams, frames: &[Image], rho: f64, downscale: usize) -> Result<Vec<BinaryMask>> {
    if frames.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: frames.len() });
    }
    let s = downscale.max(1);
    let small = frames.iter().map(|f| f.downscale(s)).collect::<Result<Vec<_>>>()?;
    let block = FEATURE_STRIDE * s;
    let mut masks = Vec::with_capacity(frames.len());
    for i in 0..frames.len() {
        let j = i.min(frames.len() - 2);
        let tape = Tape::new();
        let net = params.bind(&tape);
        let scores = pair_scores(&net, &tape, &small[j], &small[j + 1])?;
        let mask = extract_mask(&scores, rho, block)?;
        mask.check_image(frames[i].width(), frames[i].height())?;
        masks.push(mask);
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::mask_reduction;

    #[test]
    fn full_keep_and_ties() {
        let s = Tensor::full(&[4, 4], 0.25);
        assert_eq!(extract_mask(&s, 1.0, 16).unwrap().kept_count(), 16);
        let half = extract_mask(&s, 0.5, 16).unwrap();
        assert_eq!(half.grid()[..8], [true; 8]);
        assert_eq!(half.grid()[8..], [false; 8]);
    }

    #[test]
    fn default_keep_fraction_removes_49_percent() {
        let data = (0..16).map(|i| ((i * 7) % 16) as f64).collect();
        let m = extract_mask(&Tensor::new(&[4, 4], data).unwrap(), 0.51, 16).unwrap();
        assert_eq!(m.kept_count(), 9);
        assert!((mask_reduction(&m) - 0.49).abs() <= 1.0 / 16.0);
        assert_eq!(kept_blocks(0.51, 100), 51);
    }

    #[test]
    fn keeps_highest() {
        let m = extract_mask(&Tensor::new(&[1, 4], vec![0.1, 0.4, 0.3, 0.2]).unwrap(), 0.5, 16).unwrap();
        assert_eq!(m.grid(), &[false, true, true, false]);
        assert!(extract_mask(&Tensor::zeros(&[2, 2]), 0.0, 16).is_err());
        assert!(extract_mask(&Tensor::zeros(&[2, 2]), 1.5, 16).is_err());
    }
}

use std::cmp::Ordering;

use super::{BinaryMask, Image, Keypoint};
use crate::error::Result;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];
const ARC: usize = 9;
const BORDER: usize = 3;

/// FAST-9 segment test at `(x, y)`. Returns the corner score (sum of
/// absolute differences beyond the threshold over the winning polarity)
/// when at least 9 contiguous circle pixels are all brighter or all
/// darker than the center by more than `threshold`.
pub fn segment_test(img: &Image, x: usize, y: usize, threshold: u8) -> Option<f64> {
    let center = img.get(x, y) as i32;
    let t = threshold as i32;
    let mut ring = [0i32; 16];
    for (slot, (dx, dy)) in ring.iter_mut().zip(CIRCLE) {
        *slot = img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i32;
    }
    let bright = |v: i32| v > center + t;
    let dark = |v: i32| v < center - t;
    let has_arc = |pred: &dyn Fn(i32) -> bool| {
        let mut run = 0;
        for i in 0..16 + ARC - 1 {
            if pred(ring[i % 16]) {
                run += 1;
                if run >= ARC {
                    return true;
                }
            } else {
                run = 0;
            }
        }
        false
    };
    let is_bright = has_arc(&bright);
    let is_dark = has_arc(&dark);
    if !(is_bright || is_dark) {
        return None;
    }
    let bright_sum: i32 = ring.iter().filter(|&&v| bright(v)).map(|&v| v - center - t).sum();
    let dark_sum: i32 = ring.iter().filter(|&&v| dark(v)).map(|&v| center - v - t).sum();
    Some(bright_sum.max(dark_sum) as f64)
}

/// Single-scale FAST-9 with 3x3 non-maximum suppression. Keypoints whose
/// score ties a neighbor's are all retained.
pub fn detect_fast(img: &Image, threshold: u8, max_keypoints: usize) -> Vec<Keypoint> {
    detect_where(img, threshold, max_keypoints, |_, _| true)
}

/// FAST restricted to the kept blocks of `mask`: pixels in dropped blocks
/// are never tested, which is where a smaller search space saves time.
pub fn detect_fast_masked(img: &Image, threshold: u8, max_keypoints: usize, mask: &BinaryMask) -> Result<Vec<Keypoint>> {
    mask.check_image(img.width(), img.height())?;
    let bs = mask.block_size();
    Ok(detect_where(img, threshold, max_keypoints, |x, y| mask.get(y / bs, x / bs)))
}

fn detect_where(img: &Image, threshold: u8, max_keypoints: usize, keep: impl Fn(usize, usize) -> bool) -> Vec<Keypoint> {
    let threshold = threshold.clamp(1, 254);
    let (w, h) = (img.width(), img.height());
    let mut scores = vec![0.0f64; w * h];
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            if !keep(x, y) {
                continue;
            }
            if let Some(s) = segment_test(img, x, y, threshold) {
                scores[y * w + x] = s;
            }
        }
    }

    let mut keypoints = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let s = scores[y * w + x];
            if s <= 0.0 {
                continue;
            }
            let is_max = (y - 1..=y + 1)
                .flat_map(|ny| (x - 1..=x + 1).map(move |nx| (nx, ny)))
                .all(|(nx, ny)| scores[ny * w + nx] <= s);
            if is_max {
                keypoints.push(Keypoint::new(x as f64, y as f64, s));
            }
        }
    }
    keypoints.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    keypoints.truncate(max_keypoints);
    keypoints
}

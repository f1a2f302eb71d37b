use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Image, Keypoint};
use crate::error::{Error, Result};

pub const DESCRIPTOR_BITS: usize = 256;
const WORDS: usize = DESCRIPTOR_BITS / 64;
const PATCH_RADIUS: i32 = 15;
const BLUR_RADIUS: i32 = 4;
/// Keypoints closer than this to any border get no descriptor.
pub const BRIEF_BORDER: f64 = 16.0;

/// 256-bit binary descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor {
    pub bits: [u64; WORDS],
}

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        if value {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Hex encoding of the first `nbits` bits, two digits per byte,
    /// least-significant byte first.
    pub fn to_hex(&self, nbits: usize) -> String {
        let bytes: Vec<u8> = self.bits.iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes[..nbits.div_ceil(8)]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn from_hex(hex: &str, nbits: usize) -> Result<Descriptor> {
        if nbits > DESCRIPTOR_BITS {
            return Err(Error::invalid(format!(
                "descriptor length {nbits} exceeds {DESCRIPTOR_BITS} bits"
            )));
        }
        let nbytes = nbits.div_ceil(8);
        if hex.len() != 2 * nbytes {
            return Err(Error::invalid(format!(
                "expected {} hex digits for {nbits} bits, got {}",
                2 * nbytes,
                hex.len()
            )));
        }
        let mut bytes = [0u8; DESCRIPTOR_BITS / 8];
        for (i, slot) in bytes.iter_mut().take(nbytes).enumerate() {
            *slot = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::invalid(format!("bad hex digits in {hex:?}")))?;
        }
        let mut d = Descriptor::default();
        for (w, chunk) in d.bits.iter_mut().zip(bytes.chunks(8)) {
            *w = u64::from_le_bytes(chunk.try_into().unwrap());
        }
        // drop bits past nbits
        for i in nbits..DESCRIPTOR_BITS {
            d.set_bit(i, false);
        }
        Ok(d)
    }
}

/// Seeded sampling pattern of 256 point pairs inside a 31x31 patch.
#[derive(Debug, Clone)]
pub struct BriefPattern {
    pairs: Vec<[(i32, i32); 2]>,
}

impl BriefPattern {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coord = || rng.random_range(-PATCH_RADIUS..=PATCH_RADIUS);
        let pairs = (0..DESCRIPTOR_BITS)
            .map(|_| [(coord(), coord()), (coord(), coord())])
            .collect();
        BriefPattern { pairs }
    }
}

/// Integral image supporting clamped 9x9 box averages.
struct BoxFilter {
    width: usize,
    height: usize,
    sums: Vec<u64>,
}

impl BoxFilter {
    fn new(img: &Image) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut sums = vec![0u64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += img.get(x, y) as u64;
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        BoxFilter {
            width: w,
            height: h,
            sums,
        }
    }

    /// (sum, count) over the box around `(x, y)` clipped to the image.
    fn window(&self, x: i32, y: i32) -> (u64, u64) {
        let x0 = (x - BLUR_RADIUS).clamp(0, self.width as i32) as usize;
        let x1 = (x + BLUR_RADIUS + 1).clamp(0, self.width as i32) as usize;
        let y0 = (y - BLUR_RADIUS).clamp(0, self.height as i32) as usize;
        let y1 = (y + BLUR_RADIUS + 1).clamp(0, self.height as i32) as usize;
        let s = |xx: usize, yy: usize| self.sums[yy * (self.width + 1) + xx];
        let sum = s(x1, y1) + s(x0, y0) - s(x0, y1) - s(x1, y0);
        (sum, ((x1 - x0) * (y1 - y0)) as u64)
    }
}

/// Describes every keypoint at least 16 px from the border. Returns the
/// descriptors together with the index of the keypoint each one belongs to.
pub fn compute_brief(
    img: &Image,
    keypoints: &[Keypoint],
    pattern: &BriefPattern,
) -> (Vec<Descriptor>, Vec<usize>) {
    let filter = BoxFilter::new(img);
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut descriptors = Vec::with_capacity(keypoints.len());
    let mut index_map = Vec::with_capacity(keypoints.len());
    for (i, kp) in keypoints.iter().enumerate() {
        if kp.x < BRIEF_BORDER
            || kp.y < BRIEF_BORDER
            || kp.x >= w - BRIEF_BORDER
            || kp.y >= h - BRIEF_BORDER
        {
            continue;
        }
        let (cx, cy) = (kp.x.round() as i32, kp.y.round() as i32);
        let mut d = Descriptor::default();
        for (bit, [(ax, ay), (bx, by)]) in pattern.pairs.iter().enumerate() {
            let (sa, na) = filter.window(cx + ax, cy + ay);
            let (sb, nb) = filter.window(cx + bx, cy + by);
            // mean_a < mean_b without division
            d.set_bit(bit, sa * nb < sb * na);
        }
        descriptors.push(d);
        index_map.push(i);
    }
    (descriptors, index_map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(size: usize) -> Image {
        let px = (0..size * size)
            .map(|i| {
                let (x, y) = (i % size, i / size);
                ((x * 37 + y * 91 + (x * y) % 17 * 13) % 256) as u8
            })
            .collect();
        Image::new(size, size, px).unwrap()
    }

    #[test]
    fn same_keypoint_same_descriptor() {
        let img = textured(64);
        let pattern = BriefPattern::new(5);
        let kp = [Keypoint::new(30.0, 31.0, 1.0)];
        let (a, _) = compute_brief(&img, &kp, &pattern);
        let (b, _) = compute_brief(&img, &kp, &BriefPattern::new(5));
        assert_eq!(a[0].hamming(&b[0]), 0);
        assert_eq!(a, b);
    }

    #[test]
    fn flat_and_textured_differ() {
        let mut img = textured(64);
        for y in 0..40 {
            for x in 0..40 {
                img.set(x, y, 90);
            }
        }
        let kps = [Keypoint::new(20.0, 20.0, 1.0), Keypoint::new(44.0, 44.0, 1.0)];
        let (d, idx) = compute_brief(&img, &kps, &BriefPattern::new(1));
        assert_eq!(idx, vec![0, 1]);
        assert!(d[0].hamming(&d[1]) > 0);
        // a flat patch compares equal means everywhere: all bits zero
        assert_eq!(d[0], Descriptor::default());
    }

    #[test]
    fn border_keypoints_dropped_with_index_map() {
        let img = textured(64);
        let kps = [
            Keypoint::new(5.0, 30.0, 1.0),
            Keypoint::new(30.0, 30.0, 1.0),
            Keypoint::new(48.0, 30.0, 1.0),
            Keypoint::new(47.0, 16.0, 1.0),
        ];
        let (d, idx) = compute_brief(&img, &kps, &BriefPattern::new(2));
        assert_eq!(idx, vec![1, 3]);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn hex_round_trip() {
        let img = textured(64);
        let (d, _) = compute_brief(&img, &[Keypoint::new(32.0, 32.0, 0.0)], &BriefPattern::new(9));
        let hex = d[0].to_hex(256);
        assert_eq!(hex.len(), 64);
        assert_eq!(Descriptor::from_hex(&hex, 256).unwrap(), d[0]);
        assert!(Descriptor::from_hex("zz", 8).is_err());
        assert!(Descriptor::from_hex(&hex, 512).is_err());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{so3_exp, Pose, Vec3};
use crate::vision::Image;

/// Total stride of the convolution stack.
pub const FEATURE_STRIDE: usize = 16;
pub const HIDDEN_SIZE: usize = 64;
const CONV_PLAN: [usize; 3] = [8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Output channels of the last conv layer, also the token width.
    pub channels: usize,
    pub heads: usize,
    pub hidden: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            channels: 32,
            heads: 1,
            hidden: HIDDEN_SIZE,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=256).contains(&self.channels) {
            return Err(Error::invalid(format!("channels must be in 1..=256, got {}", self.channels)));
        }
        if self.heads == 0 || self.hidden == 0 {
            return Err(Error::invalid("heads and hidden size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `out x in x 3 x 3`
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNetParams {
    pub layers: Vec<ConvLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: Vec<AttentionHead>,
}

/// LSTM cell with gates packed as `[input, forget, cell, output]`, then a
/// linear head to six outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseNetParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub feature: FeatureNetParams,
    pub attention: AttentionParams,
    pub pose: PoseNetParams,
}

/// Relative motion as translation plus rotation vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6Dof {
    pub translation: [f64; 3],
    pub rotation: [f64; 3],
}

impl Pose6Dof {
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [a, b, c, d, e, f] => Ok(Pose6Dof {
                translation: [a, b, c],
                rotation: [d, e, f],
            }),
            _ => Err(Error::invalid(format!("pose vector needs 6 values, got {}", v.len()))),
        }
    }

    pub fn from_pose(pose: &Pose) -> Result<Self> {
        let r = crate::geometry::so3_log(&pose.rotation_matrix())?;
        let t = pose.translation;
        Ok(Pose6Dof {
            translation: [t.x, t.y, t.z],
            rotation: [r.x, r.y, r.z],
        })
    }

    pub fn to_pose(&self) -> Result<Pose> {
        let [x, y, z] = self.rotation;
        let [tx, ty, tz] = self.translation;
        Pose::from_rotation_matrix(&so3_exp(&Vec3::new(x, y, z)), Vec3::new(tx, ty, tz))
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [a, b, c] = self.translation;
        let [d, e, f] = self.rotation;
        [a, b, c, d, e, f]
    }
}

fn xavier(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape, data).unwrap().parameter()
}

fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape).parameter()
}

impl NetworkParams {
    /// Xavier-uniform weights and zero biases, drawn in declaration order.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut cin = 2;
        for cout in CONV_PLAN.into_iter().chain([config.channels]) {
            layers.push(ConvLayer {
                weight: xavier(&mut rng, &[cout, cin, 3, 3], cin * 9, cout * 9),
                bias: zeros(&[cout]),
            });
            cin = cout;
        }
        let d = config.channels;
        let heads = (0..config.heads)
            .map(|_| AttentionHead {
                w_q: xavier(&mut rng, &[d, d], d, d),
                w_k: xavier(&mut rng, &[d, d], d, d),
                w_v: xavier(&mut rng, &[d, d], d, d),
            })
            .collect();
        let h = config.hidden;
        let pose = PoseNetParams {
            w_ih: xavier(&mut rng, &[d, 4 * h], d, 4 * h),
            w_hh: xavier(&mut rng, &[h, 4 * h], h, 4 * h),
            bias: zeros(&[1, 4 * h]),
            head_weight: xavier(&mut rng, &[h, 6], h, 6),
            head_bias: zeros(&[1, 6]),
        };
        Ok(NetworkParams {
            config,
            feature: FeatureNetParams { layers },
            attention: AttentionParams { heads },
            pose,
        })
    }

    /// Every parameter tensor with a stable name, in declaration order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.feature.layers.iter().enumerate() {
            out.push((format!("conv{i}.weight"), &l.weight));
            out.push((format!("conv{i}.bias"), &l.bias));
        }
        for (i, h) in self.attention.heads.iter().enumerate() {
            out.push((format!("attention{i}.w_q"), &h.w_q));
            out.push((format!("attention{i}.w_k"), &h.w_k));
            out.push((format!("attention{i}.w_v"), &h.w_v));
        }
        let p = &self.pose;
        out.push(("lstm.w_ih".into(), &p.w_ih));
        out.push(("lstm.w_hh".into(), &p.w_hh));
        out.push(("lstm.bias".into(), &p.bias));
        out.push(("head.weight".into(), &p.head_weight));
        out.push(("head.bias".into(), &p.head_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.feature.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for h in &mut self.attention.heads {
            out.push(&mut h.w_q);
            out.push(&mut h.w_k);
            out.push(&mut h.w_v);
        }
        let p = &mut self.pose;
        out.extend([
            &mut p.w_ih,
            &mut p.w_hh,
            &mut p.bias,
            &mut p.head_weight,
            &mut p.head_bias,
        ]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records every parameter on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundNetwork<'t> {
        let feature = self
            .feature
            .layers
            .iter()
            .map(|l| (tape.leaf(&l.weight), tape.leaf(&l.bias)))
            .collect();
        let heads = self
            .attention
            .heads
            .iter()
            .map(|h| [tape.leaf(&h.w_q), tape.leaf(&h.w_k), tape.leaf(&h.w_v)])
            .collect();
        let p = &self.pose;
        BoundNetwork {
            feature,
            heads,
            lstm: [tape.leaf(&p.w_ih), tape.leaf(&p.w_hh), tape.leaf(&p.bias)],
            head: [tape.leaf(&p.head_weight), tape.leaf(&p.head_bias)],
            hidden: self.config.hidden,
        }
    }
}

/// Parameters recorded on a tape, mirroring [`NetworkParams`].
pub struct BoundNetwork<'t> {
    pub feature: Vec<(Var<'t>, Var<'t>)>,
    pub heads: Vec<[Var<'t>; 3]>,
    pub lstm: [Var<'t>; 3],
    pub head: [Var<'t>; 2],
    hidden: usize,
}

impl<'t> BoundNetwork<'t> {
    /// Same order as [`NetworkParams::tensors_mut`].
    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut out = Vec::new();
        for (w, b) in &self.feature {
            out.push(*w);
            out.push(*b);
        }
        for h in &self.heads {
            out.extend_from_slice(h);
        }
        out.extend_from_slice(&self.lstm);
        out.extend_from_slice(&self.head);
        out
    }

    /// Conv stack over a `2 x H x W` input.
    pub fn features(&self, input: Var<'t>) -> Result<Var<'t>> {
        let mut x = input;
        for (w, b) in &self.feature {
            x = x.conv2d(*w, *b, 2, 1)?.relu();
        }
        Ok(x)
    }

    /// Self-attention over the spatial tokens of a `C x M x N` map.
    /// Returns `(attended, scores)` shaped `T x C` and `1 x T`.
    pub fn attention(&self, features: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let s = features.shape();
        if s.len() != 3 {
            return Err(Error::invalid(format!("attention expects C x M x N, got {s:?}")));
        }
        let (c, t) = (s[0], s[1] * s[2]);
        let tokens = features.reshape(&[c, t])?.transpose()?;
        let inv_sqrt_d = 1.0 / (c as f64).sqrt();
        let inv_heads = 1.0 / self.heads.len() as f64;
        let mut attended: Option<Var<'t>> = None;
        let mut scores: Option<Var<'t>> = None;
        for [wq, wk, wv] in &self.heads {
            let q = tokens.matmul(*wq)?;
            let k = tokens.matmul(*wk)?;
            let v = tokens.matmul(*wv)?;
            let a = q.matmul(k.transpose()?)?.scale(inv_sqrt_d).softmax();
            let out = a.matmul(v)?;
            // attention received by each token, averaged over queries
            let ones = features.tape().constant(Tensor::full(&[1, t], 1.0 / t as f64));
            let sc = ones.matmul(a)?;
            attended = Some(match attended {
                Some(acc) => acc.add(out)?,
                None => out,
            });
            scores = Some(match scores {
                Some(acc) => acc.add(sc)?,
                None => sc,
            });
        }
        let (attended, scores) = (attended.unwrap(), scores.unwrap());
        if self.heads.len() == 1 {
            Ok((attended, scores))
        } else {
            Ok((attended.scale(inv_heads), scores.scale(inv_heads)))
        }
    }

    /// Score-weighted sum of the attended tokens, `1 x C`.
    pub fn pooled(&self, features: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let (attended, scores) = self.attention(features)?;
        Ok((scores.matmul(attended)?, scores))
    }

    /// Runs the recurrent cell over `1 x C` inputs from a zero state; one
    /// `1 x 6` output per step.
    pub fn pose_sequence(&self, inputs: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::invalid("pose network needs a non-empty sequence"))?;
        let h_size = self.hidden;
        let mut h = first.tape().constant(Tensor::zeros(&[1, h_size]));
        let mut c = first.tape().constant(Tensor::zeros(&[1, h_size]));
        let [w_ih, w_hh, b] = self.lstm;
        let [w_out, b_out] = self.head;
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let gates = x.matmul(w_ih)?.add(h.matmul(w_hh)?)?.add(b)?;
            let i = gates.slice_cols(0, h_size)?.sigmoid();
            let f = gates.slice_cols(h_size, h_size)?.sigmoid();
            let g = gates.slice_cols(2 * h_size, h_size)?.tanh();
            let o = gates.slice_cols(3 * h_size, h_size)?.sigmoid();
            c = f.mul(c)?.add(i.mul(g)?)?;
            h = o.mul(c.tanh())?;
            outputs.push(h.matmul(w_out)?.add(b_out)?);
        }
        Ok(outputs)
    }

    /// Full forward pass over a window of `W + 1` frames: one `1 x 6`
    /// prediction per consecutive pair, plus each pair's attention scores.
    pub fn window(&self, tape: &'t Tape, frames: &[Image]) -> Result<(Vec<Var<'t>>, Vec<Var<'t>>)> {
        if frames.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: frames.len(),
            });
        }
        let mut pooled = Vec::with_capacity(frames.len() - 1);
        let mut scores = Vec::with_capacity(frames.len() - 1);
        for pair in frames.windows(2) {
            let input = tape.constant(pair_tensor(&pair[0], &pair[1])?);
            let (p, s) = self.pooled(self.features(input)?)?;
            pooled.push(p);
            scores.push(s);
        }
        Ok((self.pose_sequence(&pooled)?, scores))
    }
}

/// Grid shape `(M, N)` produced by the conv stack for an image size.
pub fn feature_grid(width: usize, height: usize) -> (usize, usize) {
    (height.div_ceil(FEATURE_STRIDE), width.div_ceil(FEATURE_STRIDE))
}

/// Stacks a frame pair as a `2 x H' x W'` tensor in `[0, 1]`, zero-padded
/// up to multiples of the feature stride.
pub fn pair_tensor(a: &Image, b: &Image) -> Result<Tensor> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(format!(
            "image pair sizes differ: {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (m, n) = feature_grid(a.width(), a.height());
    let (h, w) = (m * FEATURE_STRIDE, n * FEATURE_STRIDE);
    let mut data = vec![0.0; 2 * h * w];
    for (ch, img) in [a, b].into_iter().enumerate() {
        for y in 0..img.height() {
            for x in 0..img.width() {
                data[(ch * h + y) * w + x] = img.get(x, y) as f64 / 255.0;
            }
        }
    }
    Tensor::new(&[2, h, w], data)
}

pub fn featurenet_forward(params: &NetworkParams, a: &Image, b: &Image) -> Result<Tensor> {
    let tape = Tape::new();
    let net = params.bind(&tape);
    let input = tape.constant(pair_tensor(a, b)?);
    Ok(net.features(input)?.value())
}

/// Returns `(attended, scores)` with scores reshaped to `M x N`.
pub fn attention_forward(params: &NetworkParams, features: &Tensor) -> Result<(Tensor, Tensor)> {
    let tape = Tape::new();
    let net = params.bind(&tape);
    let (attended, scores) = net.attention(tape.constant(features.clone()))?;
    let s = features.shape();
    Ok((attended.value(), scores.value().reshaped(&[s[1], s[2]])?))
}

/// `features` holds one pooled `C`-vector per step.
pub fn posenet_forward(params: &NetworkParams, features: &[Vec<f64>]) -> Result<Vec<Pose6Dof>> {
    let tape = Tape::new();
    let net = params.bind(&tape);
    let inputs = features
        .iter()
        .map(|f| Ok(tape.constant(Tensor::new(&[1, f.len()], f.clone())?)))
        .collect::<Result<Vec<_>>>()?;
    net.pose_sequence(&inputs)?
        .iter()
        .map(|o| Pose6Dof::from_slice(o.value().data()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NetworkParams {
        NetworkParams::init(NetworkConfig::default(), 1).unwrap()
    }

    #[test]
    fn stride_arithmetic() {
        let img = Image::filled(64, 64, 10).unwrap();
        let f = featurenet_forward(&params(), &img, &img).unwrap();
        assert_eq!(f.shape(), &[32, 4, 4]);
        let odd = Image::filled(70, 40, 10).unwrap();
        let f = featurenet_forward(&params(), &odd, &odd).unwrap();
        assert_eq!(f.shape(), &[32, 3, 5]);
    }

    #[test]
    fn zero_images_give_bias_only_activations() {
        let mut p = params();
        for (i, l) in p.feature.layers.iter_mut().enumerate() {
            l.bias.data_mut().fill(0.1 * (i + 1) as f64);
        }
        let z = Image::filled(32, 32, 0).unwrap();
        let a = featurenet_forward(&p, &z, &z).unwrap();
        let b = featurenet_forward(&p, &z, &z).unwrap();
        assert_eq!(a, b);
        // zero-input first layer output is exactly its bias
        let tape = Tape::new();
        let net = p.bind(&tape);
        let x = tape.constant(pair_tensor(&z, &z).unwrap());
        let (w, bias) = net.feature[0];
        let y = x.conv2d(w, bias, 2, 1).unwrap().relu().value();
        assert!(y.data().iter().all(|&v| v == 0.1));
    }

    #[test]
    fn mismatched_pair_rejected() {
        let a = Image::filled(32, 32, 0).unwrap();
        let b = Image::filled(48, 32, 0).unwrap();
        assert!(matches!(featurenet_forward(&params(), &a, &b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identical_tokens_give_uniform_scores() {
        let f = Tensor::full(&[32, 3, 4], 0.7);
        let (att, scores) = attention_forward(&params(), &f).unwrap();
        assert_eq!(att.shape(), &[12, 32]);
        assert_eq!(scores.shape(), &[3, 4]);
        for &s in scores.data() {
            assert!((s - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scores_form_a_distribution() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = (0..32 * 16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, scores) = attention_forward(&p, &Tensor::new(&[32, 4, 4], data).unwrap()).unwrap();
        assert!((scores.data().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(scores.data().iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn zero_sequence_gives_identity_poses() {
        let out = posenet_forward(&params(), &vec![vec![0.0; 32]; 5]).unwrap();
        assert_eq!(out.len(), 5);
        for p in out {
            assert_eq!(p.to_array(), [0.0; 6]);
        }
        assert!(posenet_forward(&params(), &[]).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = NetworkParams::init(NetworkConfig::default(), 5).unwrap();
        let b = NetworkParams::init(NetworkConfig::default(), 5).unwrap();
        let c = NetworkParams::init(NetworkConfig::default(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / (18.0 + 72.0)).sqrt();
        assert!(a.feature.layers[0].weight.data().iter().all(|v| v.abs() <= limit));
    }
}

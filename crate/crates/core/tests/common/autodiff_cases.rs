//! Gradient checks shared by the autodiff suite and the acceptance run.

use super::gradcheck::{max_relative_error, random_tensor, rng};
use attnvo::geometry::{Pose, Quaternion, Vec3};
use attnvo::learn::{consistency_loss, NetworkConfig, NetworkParams, Tape, Tensor, Var};

pub const TOL: f64 = 1e-4;

/// Worst relative error seen so far and the check that produced it.
#[derive(Debug, Default)]
pub struct Worst {
    pub error: f64,
    pub name: String,
}

impl Worst {
    pub fn check<F>(&mut self, name: &str, inputs: &[Tensor], f: F)
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
    {
        let err = max_relative_error(inputs, f, 200);
        if err >= self.error {
            self.error = err;
            self.name = name.to_string();
        }
    }
}

/// Reduces any tensor to a scalar through a fixed random weighting so every
/// output entry contributes a distinct gradient.
fn weighted<'t>(tape: &'t Tape, x: Var<'t>, seed: u64) -> Var<'t> {
    let w = random_tensor(&mut rng(seed), &x.shape(), 1.0);
    x.mul(tape.constant(w)).unwrap().mean()
}

pub const ALL: &[(&str, fn(&mut Worst))] = &[
    ("matmul_gradient", matmul_gradient),
    ("conv2d_gradient_on_two_channel_input", conv2d_gradient_on_two_channel_input),
    ("elementwise_activations", elementwise_activations),
    ("binary_ops", binary_ops),
    ("reshaping_ops", reshaping_ops),
    ("featurenet_mean_wrt_first_conv_weights", featurenet_mean_wrt_first_conv_weights),
    ("attention_block_gradient", attention_block_gradient),
    ("recurrent_step_gradient", recurrent_step_gradient),
    ("consistency_loss_gradient", consistency_loss_gradient),
    ("full_window_gradient_spot_check", full_window_gradient_spot_check),
];

pub fn matmul_gradient(w: &mut Worst) {
    let mut r = rng(1);
    let inputs = [random_tensor(&mut r, &[3, 4], 1.0), random_tensor(&mut r, &[4, 5], 1.0)];
    w.check("matmul", &inputs, |t, v| weighted(t, v[0].matmul(v[1]).unwrap(), 10));
}

pub fn conv2d_gradient_on_two_channel_input(w: &mut Worst) {
    let mut r = rng(2);
    let inputs = [
        random_tensor(&mut r, &[2, 8, 8], 1.0),
        random_tensor(&mut r, &[3, 2, 3, 3], 0.5),
        random_tensor(&mut r, &[3], 0.5),
    ];
    for stride in [1, 2] {
        w.check("conv2d", &inputs, |t, v| weighted(t, v[0].conv2d(v[1], v[2], stride, 1).unwrap(), 11));
    }
}

pub fn elementwise_activations(w: &mut Worst) {
    let mut r = rng(3);
    // keep relu inputs away from the kink so central differences are exact
    let mut x = random_tensor(&mut r, &[4, 6], 2.0);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    let inputs = [x];
    w.check("relu", &inputs, |t, v| weighted(t, v[0].relu(), 12));
    w.check("sigmoid", &inputs, |t, v| weighted(t, v[0].sigmoid(), 13));
    w.check("tanh", &inputs, |t, v| weighted(t, v[0].tanh(), 14));
    w.check("softmax", &inputs, |t, v| weighted(t, v[0].softmax(), 15));
    w.check("scale", &inputs, |t, v| weighted(t, v[0].scale(-2.5), 16));
}

pub fn binary_ops(w: &mut Worst) {
    let mut r = rng(4);
    let inputs = [
        random_tensor(&mut r, &[3, 5], 1.0),
        random_tensor(&mut r, &[3, 5], 1.0),
        random_tensor(&mut r, &[1, 5], 1.0),
    ];
    w.check("add", &inputs, |t, v| weighted(t, v[0].add(v[1]).unwrap(), 20));
    w.check("add broadcast", &inputs, |t, v| weighted(t, v[0].add(v[2]).unwrap(), 21));
    w.check("sub", &inputs, |t, v| weighted(t, v[0].sub(v[1]).unwrap(), 22));
    w.check("mul", &inputs, |t, v| weighted(t, v[0].mul(v[1]).unwrap(), 23));
    w.check("mse", &inputs, |_, v| v[0].mse(v[1]).unwrap());
    w.check("mean", &inputs, |_, v| v[0].sigmoid().mean());
}

pub fn reshaping_ops(w: &mut Worst) {
    let mut r = rng(5);
    let inputs = [random_tensor(&mut r, &[3, 4, 2], 1.0), random_tensor(&mut r, &[2, 6], 1.0)];
    w.check("global_avg_pool", &inputs, |t, v| weighted(t, v[0].global_avg_pool().unwrap(), 30));
    w.check("reshape+transpose", &inputs, |t, v| {
        weighted(t, v[0].reshape(&[3, 8]).unwrap().transpose().unwrap(), 31)
    });
    w.check("slice+concat", &inputs, |t, v| {
        let a = v[1].slice_cols(1, 3).unwrap();
        let b = v[1].slice_cols(3, 3).unwrap();
        weighted(t, Var::concat_rows(&[a, b, a]).unwrap(), 32)
    });
}

fn small_params(seed: u64) -> NetworkParams {
    NetworkParams::init(NetworkConfig { channels: 8, heads: 1, hidden: 12 }, seed).unwrap()
}

/// Replaces one parameter of a bound network by a differentiable input.
fn with_param<'t>(params: &NetworkParams, tape: &'t Tape, index: usize, replacement: Var<'t>) -> attnvo::learn::BoundNetwork<'t> {
    let mut net = params.bind(tape);
    match index {
        0 => net.feature[0].0 = replacement,
        1..=3 => net.heads[0][index - 1] = replacement,
        4 => net.lstm[0] = replacement,
        5 => net.lstm[1] = replacement,
        _ => unreachable!(),
    }
    net
}

pub fn featurenet_mean_wrt_first_conv_weights(w: &mut Worst) {
    let params = small_params(7);
    let mut r = rng(6);
    let input = {
        let mut t = random_tensor(&mut r, &[2, 32, 32], 0.5);
        t.data_mut().iter_mut().for_each(|v| *v += 0.5);
        t
    };
    let inputs = [params.feature.layers[0].weight.clone()];
    w.check("featurenet", &inputs, |t, v| {
        let net = with_param(&params, t, 0, v[0]);
        net.features(t.constant(input.clone())).unwrap().mean()
    });
}

pub fn attention_block_gradient(w: &mut Worst) {
    let params = small_params(8);
    let mut r = rng(7);
    let features = random_tensor(&mut r, &[8, 3, 3], 1.0);
    let inputs = [
        features,
        params.attention.heads[0].w_q.clone(),
        params.attention.heads[0].w_k.clone(),
        params.attention.heads[0].w_v.clone(),
    ];
    w.check("attention", &inputs, |t, v| {
        let mut net = params.bind(t);
        net.heads[0] = [v[1], v[2], v[3]];
        let (pooled, scores) = net.pooled(v[0]).unwrap();
        let a = weighted(t, pooled, 40);
        let b = weighted(t, scores, 41);
        a.add(b).unwrap()
    });
}

pub fn recurrent_step_gradient(w: &mut Worst) {
    let params = small_params(9);
    let mut r = rng(8);
    let inputs = [
        random_tensor(&mut r, &[1, 8], 1.0),
        random_tensor(&mut r, &[1, 8], 1.0),
        params.pose.w_ih.clone(),
        params.pose.w_hh.clone(),
    ];
    w.check("lstm", &inputs, |t, v| {
        let mut net = with_param(&params, t, 4, v[2]);
        net.lstm[1] = v[3];
        let out = net.pose_sequence(&[v[0], v[1]]).unwrap();
        let a = weighted(t, out[0], 50);
        a.add(weighted(t, out[1], 51)).unwrap()
    });
}

pub fn consistency_loss_gradient(w: &mut Worst) {
    let mut r = rng(10);
    let proxies = [
        Pose::new(Quaternion::exp(&Vec3::new(0.1, 0.02, -0.3)), Vec3::new(0.5, -0.1, 0.2)).unwrap(),
        Pose::new(Quaternion::exp(&Vec3::new(-0.2, 0.1, 0.0)), Vec3::new(0.0, 0.3, 1.0)).unwrap(),
    ];
    let inputs = [random_tensor(&mut r, &[1, 6], 0.5), random_tensor(&mut r, &[1, 6], 0.5)];
    w.check("consistency", &inputs, |_, v| consistency_loss(&[v[0], v[1]], &proxies).unwrap());
}

pub fn full_window_gradient_spot_check(w: &mut Worst) {
    let params = small_params(11);
    let frames: Vec<_> = (0..3)
        .map(|k| {
            let mut img = attnvo::vision::Image::filled(32, 32, 20).unwrap();
            for y in 6..12 {
                for x in 5 + 4 * k..11 + 4 * k {
                    img.set(x, y, 230);
                }
            }
            img
        })
        .collect();
    let proxies = [
        Pose::new(Quaternion::exp(&Vec3::new(0.0, 0.1, 0.0)), Vec3::new(0.2, 0.0, 0.0)).unwrap(),
        Pose::new(Quaternion::exp(&Vec3::new(0.0, 0.1, 0.0)), Vec3::new(0.2, 0.0, 0.0)).unwrap(),
    ];
    let inputs = [params.attention.heads[0].w_q.clone(), params.pose.head_weight.clone()];
    w.check("window", &inputs, |t, v| {
        let mut net = params.bind(t);
        net.heads[0][0] = v[0];
        net.head[0] = v[1];
        let (pred, _) = net.window(t, &frames).unwrap();
        consistency_loss(&pred, &proxies).unwrap()
    });
}

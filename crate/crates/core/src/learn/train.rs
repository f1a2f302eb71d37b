use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::consistency_loss;
use super::nets::{NetworkConfig, NetworkParams};
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::vision::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub window_size: usize,
    pub keep_fraction: f64,
    pub rng_seed: u64,
    /// Images are box-downscaled by this factor before entering the network.
    pub downscale: usize,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            window_size: 4,
            keep_fraction: 0.51,
            rng_seed: 0,
            downscale: 1,
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::invalid(format!("keep fraction must be in (0, 1], got {}", self.keep_fraction)));
        }
        // zero is allowed so a run can be replayed without updates
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::invalid("Adam betas must lie in [0, 1) and epsilon be positive"));
        }
        if self.window_size == 0 {
            return Err(Error::invalid("window size must be positive"));
        }
        if !self.downscale.is_power_of_two() {
            return Err(Error::invalid(format!("downscale {} is not a power of two", self.downscale)));
        }
        self.network.validate()
    }
}

/// `W + 1` frames and the `W` per-interval relative poses between them.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    pub frames: Vec<Image>,
    pub targets: Vec<Pose>,
}

impl TrainingWindow {
    pub fn new(frames: Vec<Image>, targets: Vec<Pose>) -> Result<Self> {
        if frames.len() != targets.len() + 1 || targets.is_empty() {
            return Err(Error::invalid(format!(
                "window needs W + 1 frames for W targets, got {} frames and {} targets",
                frames.len(),
                targets.len()
            )));
        }
        Ok(TrainingWindow { frames, targets })
    }

    pub fn downscaled(&self, factor: usize) -> Result<Self> {
        Ok(TrainingWindow {
            frames: self.frames.iter().map(|f| f.downscale(factor)).collect::<Result<_>>()?,
            targets: self.targets.clone(),
        })
    }
}

/// Cumulative window proxies (relative to the window's first frame) to
/// the per-interval motions between consecutive frames.
pub fn interval_targets(proxies: &[Pose]) -> Vec<Pose> {
    let mut prev = Pose::identity();
    proxies
        .iter()
        .map(|p| {
            let step = crate::geometry::relative_pose(&prev, p);
            prev = *p;
            step
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Mean window loss per epoch, measured before that epoch's updates.
    pub loss_history: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(params: &NetworkParams) -> Self {
        let sizes: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.len()).collect();
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut NetworkParams, config: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - config.beta1.powi(self.step);
        let c2 = 1.0 - config.beta2.powi(self.step);
        for (k, t) in params.tensors_mut().into_iter().enumerate() {
            let Some(g) = t.grad.take() else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in t.data_mut().iter_mut().enumerate() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                *w -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + config.epsilon);
            }
        }
    }
}

/// Forward and backward pass over one window; stores gradients on the
/// parameter tensors and returns the loss.
pub fn window_step(params: &mut NetworkParams, window: &TrainingWindow) -> Result<f64> {
    let tape = Tape::new();
    let net = params.bind(&tape);
    let (pred, _) = net.window(&tape, &window.frames)?;
    let loss = consistency_loss(&pred, &window.targets)?;
    let value = loss.value().item()?;
    let grads = tape.backward(loss)?;
    for (t, var) in params.tensors_mut().into_iter().zip(net.vars()) {
        t.grad = Some(grads.get_or_zeros(var).into_data());
    }
    Ok(value)
}

/// Adam over `config.epochs` passes; one update per window, windows in
/// the given order. Fully deterministic for a given seed and input.
pub fn train(config: &TrainConfig, windows: &[TrainingWindow]) -> Result<TrainOutcome> {
    let params = NetworkParams::init(config.network, config.rng_seed)?;
    train_from(params, config, windows)
}

pub fn train_from(mut params: NetworkParams, config: &TrainConfig, windows: &[TrainingWindow]) -> Result<TrainOutcome> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let windows: Vec<TrainingWindow> = if config.downscale > 1 {
        windows.iter().map(|w| w.downscaled(config.downscale)).collect::<Result<_>>()?
    } else {
        windows.to_vec()
    };
    let mut adam = Adam::new(&params);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for window in &windows {
            let loss = window_step(&mut params, window)?;
            let finite_grads = params
                .named_tensors()
                .iter()
                .all(|(_, t)| t.grad.as_ref().is_some_and(|g| g.iter().all(|v| v.is_finite())));
            if !loss.is_finite() || !finite_grads {
                return Err(Error::TrainingDiverged {
                    epoch,
                    last_finite_epoch: epoch.checked_sub(1),
                });
            }
            total += loss;
            adam.update(&mut params, config);
        }
        let mean = total / windows.len() as f64;
        log::info!("epoch {epoch}: loss {mean:.6e}");
        history.push(mean);
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

pub fn write_loss_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l:?}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,loss")) => {}
        _ => return Err(parse_err(1, "expected header `epoch,loss`".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (_, loss) = l.split_once(',').ok_or_else(|| parse_err(i + 1, "missing comma".into()))?;
            loss.trim().parse().map_err(|e| parse_err(i + 1, format!("{e}")))
        })
        .collect()
}

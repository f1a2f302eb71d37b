use super::nets::Pose6Dof;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Stacks the proxy poses as a `W x 6` target of translation and rotation vector.
pub fn proxy_targets(proxies: &[Pose]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(6 * proxies.len());
    for p in proxies {
        data.extend(Pose6Dof::from_pose(p)?.to_array());
    }
    Tensor::new(&[proxies.len(), 6], data)
}

/// Mean over all `6 W` components of the squared difference between the
/// predicted steps (`1 x 6` each) and the proxies.
pub fn consistency_loss<'t>(pred: &[Var<'t>], proxies: &[Pose]) -> Result<Var<'t>> {
    if pred.len() != proxies.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} proxies",
            pred.len(),
            proxies.len()
        )));
    }
    let stacked = Var::concat_rows(pred)?;
    if stacked.shape() != [pred.len(), 6] {
        return Err(Error::invalid(format!("predictions must be 1 x 6, stacked to {:?}", stacked.shape())));
    }
    let target = stacked.tape().constant(proxy_targets(proxies)?);
    stacked.mse(target)
}

/// Loss value for plain pose predictions.
pub fn consistency_loss_value(pred: &[Pose6Dof], proxies: &[Pose]) -> Result<f64> {
    let tape = Tape::new();
    let vars = pred
        .iter()
        .map(|p| Ok(tape.constant(Tensor::new(&[1, 6], p.to_array().to_vec())?)))
        .collect::<Result<Vec<_>>>()?;
    consistency_loss(&vars, proxies)?.value().item()
}

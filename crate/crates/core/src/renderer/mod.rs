//! Differentiable Gaussian splatting, its backward pass and the image loss.

mod frame;
mod io;
mod loss;
mod raster;
mod ssim;

pub use frame::{Frame, Mask};
pub use io::{dequantize, load_pgm, load_png, quantize, save_pgm, save_png};
pub use loss::{
    combined_loss, combined_loss_with_grad, pixel_averaged_loss, LossConfig, LossWithGrad,
    DEFAULT_ALPHA_SUPPORT,
};
pub use raster::{
    chain_pose_gradient, render, render_backward, render_backward_gaussians, GaussianGrad,
    PoseGradient, RenderOutput, RenderSettings, SplatCache,
};
pub use ssim::ssim;

use crate::error::Result;
use crate::geometry::{Intrinsics, Pose};
use crate::scalar::Real;
use crate::tool_model::{pose_gaussians, pose_gaussians_with_jacobians, JointVector, ToolModel};

/// Renders `model` at tool pose `pose` and configuration `q`.
pub fn render_model<T: Real>(
    model: &ToolModel<T>,
    pose: &Pose<T>,
    q: &JointVector<T>,
    k: &Intrinsics<T>,
    settings: &RenderSettings<T>,
) -> Result<RenderOutput<T>> {
    let g = pose_gaussians(model, pose, q)?;
    Ok(render(&g, k, settings))
}

/// Loss of the rendering against `target` and its gradient with respect to
/// the pose tangent and joint angles.
#[derive(Debug, Clone)]
pub struct Evaluation<T: Real> {
    pub loss: T,
    pub grad: PoseGradient<T>,
    pub render: RenderOutput<T>,
}

/// One forward/backward pass of the render-and-compare objective.
pub fn evaluate<T: Real>(
    model: &ToolModel<T>,
    pose: &Pose<T>,
    q: &JointVector<T>,
    target: &Frame<T>,
    k: &Intrinsics<T>,
    settings: &RenderSettings<T>,
    loss_cfg: &LossConfig<T>,
) -> Result<Evaluation<T>> {
    let (gaussians, jacobians) = pose_gaussians_with_jacobians(model, pose, q)?;
    let out = render(&gaussians, k, settings);
    let l = combined_loss_with_grad(&out.image, target, loss_cfg)?;
    let grad = render_backward(&out, &l.grad, &gaussians, &jacobians)?;
    Ok(Evaluation {
        loss: l.value,
        grad,
        render: out,
    })
}

/// Loss only, without the backward pass.
pub fn evaluate_loss<T: Real>(
    model: &ToolModel<T>,
    pose: &Pose<T>,
    q: &JointVector<T>,
    target: &Frame<T>,
    k: &Intrinsics<T>,
    settings: &RenderSettings<T>,
    loss_cfg: &LossConfig<T>,
) -> Result<T> {
    let out = render_model(model, pose, q, k, settings)?;
    combined_loss(&out.image, target, loss_cfg)
}

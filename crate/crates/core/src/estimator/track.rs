use super::{coarse_estimate, refine, refine_with_rates, CoarseConfig, FrameEstimate, RefinerConfig, Scene};
use crate::error::{Error, Result};
use crate::renderer::{Frame, Mask};
use crate::scalar::Real;

/// Last accepted estimate and the index of the frame it belongs to.
#[derive(Debug, Clone)]
pub struct TrackerState<T: Real> {
    pub previous: FrameEstimate<T>,
    pub frame_index: usize,
}

impl<T: Real> TrackerState<T> {
    /// Replaces the state with the estimate for a later frame.
    pub fn advance(&mut self, estimate: FrameEstimate<T>, frame_index: usize) -> Result<()> {
        if frame_index <= self.frame_index {
            return Err(Error::InvalidFrame(format!(
                "frame index {frame_index} does not follow {}",
                self.frame_index
            )));
        }
        self.previous = estimate;
        self.frame_index = frame_index;
        Ok(())
    }
}

fn at_frame(frame: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Frame {
        frame,
        source: Box::new(e),
    }
}

/// Frame 0 is initialized by the coarse search and refined with the
/// first-frame budget; every later frame is warm-started from its
/// predecessor and capped at the tracking budget. A later frame whose loss
/// turns non-finite keeps the previous estimate and is flagged `failed`.
pub fn track_sequence<T: Real>(
    frames: &[(Frame<T>, Mask)],
    scene: &Scene<T>,
    coarse: &CoarseConfig,
    refiner: &RefinerConfig,
) -> Result<Vec<FrameEstimate<T>>> {
    let Some((first, mask)) = frames.first() else {
        return Err(Error::EmptyInput);
    };
    let init = coarse_estimate(first, mask, scene, coarse, refiner).map_err(at_frame(0))?;
    let est0 = refine(
        &init.estimate.pose,
        &init.estimate.q,
        first,
        scene,
        refiner,
        refiner.max_iters_first_frame,
    )
    .map_err(at_frame(0))?;
    log::info!("frame 0: loss {} after {} iterations", est0.final_loss, est0.iters_used);
    track_from(est0, &frames[1..], scene, refiner)
}

/// Tracks `frames` starting from an accepted estimate of the frame before
/// them. Returns `initial` followed by one estimate per frame.
pub fn track_from<T: Real>(
    initial: FrameEstimate<T>,
    frames: &[(Frame<T>, Mask)],
    scene: &Scene<T>,
    refiner: &RefinerConfig,
) -> Result<Vec<FrameEstimate<T>>> {
    let mut state = TrackerState {
        previous: initial.clone(),
        frame_index: 0,
    };
    let mut out = vec![initial];
    for (i, (frame, _)) in frames.iter().enumerate() {
        let k = i + 1;
        let prev = &state.previous;
        let rates = if refiner.reset_rates_per_frame {
            refiner.rates()
        } else {
            prev.rates
        };
        let est = match refine_with_rates(&prev.pose, &prev.q, frame, scene, refiner, refiner.max_iters_tracking, rates) {
            Ok(e) => e,
            Err(Error::NonFiniteLoss { iteration, detail }) => {
                log::warn!("frame {k}: non-finite loss at iteration {iteration} ({detail}); keeping previous estimate");
                FrameEstimate {
                    final_loss: T::lit(f64::INFINITY),
                    iters_used: iteration + 1,
                    history: Vec::new(),
                    stopped_early: false,
                    failed: true,
                    ..prev.clone()
                }
            }
            Err(e) => return Err(at_frame(k)(e)),
        };
        log::debug!("frame {k}: loss {} after {} iterations", est.final_loss, est.iters_used);
        state.advance(est.clone(), k)?;
        out.push(est);
    }
    Ok(out)
}

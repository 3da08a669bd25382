//! Synthetic ground truth: multi-view datasets, smooth motion sequences and
//! canonical-model fitting from rendered views.

mod dataset;
mod fit;
mod sequence;

pub use dataset::{
    generate_dataset, load_manifest, look_at, save_manifest, DatasetManifest, DatasetSpec, GroundTruthRecord,
    LoadedRecord, MANIFEST_FILE,
};
pub use fit::{fit_canonical_model, FitConfig, FitResult, FitView};
pub use sequence::{generate_sequence, SequenceOutput, SequenceSpec, GROUND_TRUTH_FILE};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::renderer::{dequantize, quantize, Frame};

/// Largest per-value deviation between a clean rendering and its stored
/// copy: truncated noise plus half a quantization step.
pub fn noise_bound(noise_std: f64) -> f64 {
    4.0 * noise_std + 0.5 / 255.0
}

/// Adds zero-mean Gaussian noise truncated at four standard deviations,
/// clips to `[0, 1]` and quantizes to 8 bits, returning the values exactly
/// as they will read back from disk.
pub(crate) fn corrupt(frame: &Frame<f64>, noise_std: f64, rng: &mut ChaCha8Rng) -> Frame<f64> {
    let mut out = frame.clone();
    if noise_std > 0.0 {
        let n = Normal::new(0.0, noise_std).expect("positive std");
        for v in &mut out.pixels {
            let e: f64 = n.sample(rng);
            *v = (*v + e.clamp(-4.0 * noise_std, 4.0 * noise_std)).clamp(0.0, 1.0);
        }
    }
    for v in &mut out.pixels {
        *v = dequantize(quantize(*v));
    }
    out
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

//! Overfitting the smallest network to one image patch.

use cat_core::{cat_forward, init_params, ModelConfig, ParamStore, Task};
use cat_tensor::{Adam, OptimizerHyper, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::ImageF64;
use crate::resize::{bicubic_resize, Resize};

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitOptions {
    pub steps: usize,
    pub seed: u64,
    pub lr: f64,
    /// Low-resolution patch side.
    pub patch: usize,
    /// Stop once the loss has fallen by this fraction.
    pub target_reduction: f64,
}

impl Default for OverfitOptions {
    fn default() -> Self {
        Self {
            steps: 500,
            seed: 0,
            lr: 1e-3,
            patch: 16,
            target_reduction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitReport {
    /// Loss before each update.
    pub losses: Vec<f64>,
    pub initial: f64,
    pub best: f64,
}

impl OverfitReport {
    pub fn reduction(&self) -> f64 {
        1.0 - self.best / self.initial
    }
}

/// Smooth RGB pattern in `[0.1, 0.9]`, `side×side`, on the 0–255 scale.
pub fn synthetic_patch(side: usize, seed: u64) -> ImageF64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f64; 4]> = (0..9)
        .map(|_| {
            [
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.5..2.5),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.3..1.0),
            ]
        })
        .collect();
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let (u, v) = (y as f64 / side as f64, x as f64 / side as f64);
            for c in 0..3 {
                let group = &waves[c * 3..c * 3 + 3];
                let norm: f64 = group.iter().map(|w| w[3]).sum();
                let s: f64 = group
                    .iter()
                    .map(|&[fy, fx, phase, amp]| amp * (std::f64::consts::TAU * (fy * u + fx * v) + phase).sin())
                    .sum();
                data.push(255.0 * (0.5 + 0.4 * s / norm));
            }
        }
    }
    ImageF64 {
        height: side,
        width: side,
        channels: 3,
        data,
    }
}

fn to_tensor(img: &ImageF64) -> Tensor<f32> {
    let data: Vec<f64> = img.data.iter().map(|v| v / 255.0).collect();
    Tensor::from_f64(&[1, img.height, img.width, img.channels], &data).expect("image extents are positive")
}

/// Trains the small ×2 network on one bicubic-downscaled patch with L1 loss
/// and Adam. `on_step(step, loss)` sees every loss as it is computed.
pub fn overfit(opts: &OverfitOptions, mut on_step: impl FnMut(usize, f64)) -> Result<(OverfitReport, ParamStore<f32>)> {
    let cfg = ModelConfig::tiny(Task::Sr { scale: 2 });
    let hr = synthetic_patch(opts.patch * 2, opts.seed);
    let lr_img = bicubic_resize(&hr, Resize::Down(2))?;
    let (input, target) = (to_tensor(&lr_img), to_tensor(&hr));

    let mut store = init_params::<f32>(&cfg, opts.seed)?;
    let mut adam = Adam::new(OptimizerHyper::with_lr(opts.lr)?);
    let mut losses = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let pred = cat_forward(&tape, &tape.constant(input.clone()), &bound, &cfg)?;
        let loss = tape.l1_loss(&pred, &tape.constant(target.clone()))?;
        let value = loss.value().data()[0] as f64;
        losses.push(value);
        on_step(step, value);
        if 1.0 - value / losses[0] >= opts.target_reduction {
            break;
        }
        let grads = tape.backward(&loss)?;
        adam.step(store.trainable_mut(), |name| grads.by_name(name))?;
    }
    let initial = losses.first().copied().unwrap_or(0.0);
    let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((OverfitReport { losses, initial, best }, store))
}

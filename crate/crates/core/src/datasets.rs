//! Synthetic training sets for the toy denoiser.

use crate::noise::GaussianNoiseSource;
use crate::tensor::{Shape, Tensor};

/// `n` copies of a constant image.
pub fn constant_images(n: usize, shape: Shape, value: f64) -> Vec<Tensor> {
    vec![Tensor::filled(shape, value); n]
}

/// Images from two Gaussian clusters: a bright-left/dark-right gradient and its
/// mirror, each perturbed by i.i.d. pixel noise of std `0.1` and clipped to [-1, 1].
pub fn two_gaussian_images(n: usize, shape: Shape, seed: u64) -> Vec<Tensor> {
    let mut rng = GaussianNoiseSource::new(seed, 0xda7a);
    (0..n)
        .map(|_| {
            let sign = if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
            let mut img = Tensor::zeros(shape);
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        let ramp = 1.0 - 2.0 * x as f64 / (shape.width.max(2) - 1) as f64;
                        let v = 0.6 * sign * ramp + 0.1 * rng.next_normal();
                        img.set(c, y, x, v.clamp(-1.0, 1.0));
                    }
                }
            }
            img
        })
        .collect()
}

/// Light shapes on a dark background: each image holds either a filled disk or a
/// filled axis-aligned square at a random position and size.
pub fn two_shapes(n: usize, shape: Shape, seed: u64) -> Vec<Tensor> {
    let mut rng = GaussianNoiseSource::new(seed, 0x5a9e);
    let size = shape.height.min(shape.width) as f64;
    (0..n)
        .map(|_| {
            let disk = rng.uniform() < 0.5;
            let radius = size * (0.15 + 0.15 * rng.uniform());
            let cy = radius + rng.uniform() * (shape.height as f64 - 2.0 * radius);
            let cx = radius + rng.uniform() * (shape.width as f64 - 2.0 * radius);
            let level = 0.4 + 0.6 * rng.uniform();
            let mut img = Tensor::filled(shape, -0.8);
            for y in 0..shape.height {
                for x in 0..shape.width {
                    let dy = y as f64 + 0.5 - cy;
                    let dx = x as f64 + 0.5 - cx;
                    let inside = if disk {
                        dy * dy + dx * dx <= radius * radius
                    } else {
                        dy.abs() <= radius && dx.abs() <= radius
                    };
                    if inside {
                        for c in 0..shape.channels {
                            img.set(c, y, x, level);
                        }
                    }
                }
            }
            img
        })
        .collect()
}

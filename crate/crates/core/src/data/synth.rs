//! Synthetic blob segmentation task and image degradations.

use rand_distr::{Distribution, Normal};

use super::{ImageDataset, ImageExample};
use crate::rng::RngStream;

const MIN_FG: f64 = 0.05;
const MAX_FG: f64 = 0.6;
const TEXTURE: f64 = 0.12;

/// `n` images of a colored ellipse on a textured background; the mask is
/// the ellipse support. Example `i` depends only on `(seed, i)`.
pub fn synth_blob_task(n: usize, height: usize, width: usize, seed: u64) -> ImageDataset {
    let root = RngStream::new(seed);
    let examples = (0..n)
        .map(|i| blob(height, width, &mut root.split(i as u64), format!("blob{i:04}")))
        .collect();
    ImageDataset {
        height,
        width,
        examples,
    }
}

fn between(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

fn ellipse(height: usize, width: usize, rng: &mut RngStream) -> Vec<bool> {
    let (h, w) = (height as f64, width as f64);
    loop {
        let frac = between(rng, 0.08, 0.45);
        let aspect = between(rng, 0.6, 1.6);
        let ry = (frac * h * w / (std::f64::consts::PI * aspect)).sqrt();
        let rx = ry * aspect;
        let cy = between(rng, 0.25, 0.75) * h;
        let cx = between(rng, 0.25, 0.75) * w;
        let theta = between(rng, 0.0, std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        let mask: Vec<bool> = (0..height * width)
            .map(|p| {
                let dy = (p / width) as f64 + 0.5 - cy;
                let dx = (p % width) as f64 + 0.5 - cx;
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                u * u + v * v <= 1.0
            })
            .collect();
        let fg = mask.iter().filter(|&&m| m).count() as f64 / (h * w);
        if (MIN_FG..=MAX_FG).contains(&fg) {
            return mask;
        }
    }
}

fn colors(rng: &mut RngStream) -> ([f64; 3], [f64; 3]) {
    loop {
        let fg = [(); 3].map(|_| between(rng, 0.35, 1.0));
        let bg = [(); 3].map(|_| between(rng, 0.0, 0.65));
        if fg.iter().zip(&bg).any(|(a, b)| (a - b).abs() >= 0.3) {
            return (fg, bg);
        }
    }
}

fn blob(height: usize, width: usize, rng: &mut RngStream, name: String) -> ImageExample {
    let mask = ellipse(height, width, rng);
    let (fg, bg) = colors(rng);
    let mut image = Vec::with_capacity(height * width * 3);
    for &m in &mask {
        let base = if m { fg } else { bg };
        for b in base {
            image.push((b + between(rng, -TEXTURE, TEXTURE)).clamp(0.0, 1.0));
        }
    }
    ImageExample { name, image, mask }
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` and clips to `[0,1]`.
pub fn gaussian_noise(image: &[f64], sigma: f64, rng: &mut RngStream) -> Vec<f64> {
    if sigma <= 0.0 {
        return image.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    image
        .iter()
        .map(|&v| (v + normal.sample(rng)).clamp(0.0, 1.0))
        .collect()
}

/// Separable Gaussian blur with kernel radius `radius` (σ = radius / 2),
/// replicating border pixels. Radius 0 is the identity.
pub fn gaussian_blur(image: &[f64], height: usize, width: usize, channels: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return image.to_vec();
    }
    let sigma = radius as f64 / 2.0;
    let kernel: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let r = radius as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let d = k as isize - r;
                        let (yy, xx) = if horizontal {
                            (y, (x as isize + d).clamp(0, width as isize - 1) as usize)
                        } else {
                            ((y as isize + d).clamp(0, height as isize - 1) as usize, x)
                        };
                        acc += w * src[(yy * width + xx) * channels + c];
                    }
                    out[(y * width + x) * channels + c] = acc / norm;
                }
            }
        }
        out
    };
    pass(&pass(image, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let a = synth_blob_task(12, 16, 16, 5);
        assert_eq!(a, synth_blob_task(12, 16, 16, 5));
        assert_ne!(a, synth_blob_task(12, 16, 16, 6));
        for e in &a.examples {
            let fg = e.mask.iter().filter(|&&m| m).count() as f64 / 256.0;
            assert!((0.05..=0.6).contains(&fg), "{fg}");
            assert!(e.image.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn prefix_stable() {
        let a = synth_blob_task(3, 8, 8, 1);
        let b = synth_blob_task(5, 8, 8, 1);
        assert_eq!(a.examples[..], b.examples[..3]);
    }

    #[test]
    fn blur_preserves_constant_and_mean() {
        let flat = vec![0.4; 5 * 4 * 3];
        for (a, b) in gaussian_blur(&flat, 5, 4, 3, 2).iter().zip(&flat) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut spike = vec![0.0; 9 * 9];
        spike[40] = 1.0;
        let out = gaussian_blur(&spike, 9, 9, 1, 2);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out[40] < 1.0 && out[41] > 0.0);
        assert_eq!(gaussian_blur(&spike, 9, 9, 1, 0), spike);
    }

    #[test]
    fn noise_is_clipped_and_seeded() {
        let img = vec![0.5; 300];
        let a = gaussian_noise(&img, 0.3, &mut RngStream::new(2));
        assert_eq!(a, gaussian_noise(&img, 0.3, &mut RngStream::new(2)));
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, img);
        assert_eq!(gaussian_noise(&img, 0.0, &mut RngStream::new(2)), img);
    }
}

//! Deterministic procedural test images.
//!
//! The experiment drivers need image content with sharp edges, oriented
//! texture, and color variety so that defocus blur actually destroys
//! information. Every image is a pure function of its seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::Sample;
use crate::optics::BlurKernelSet;
use crate::pipeline::extract_patches;
use crate::sensor::{add_noise, blur_image, mosaic, CfaPattern, DepthMap, RgbImage};
use crate::sparse::PATCH_SIDE;
use crate::{Result, Scalar};

/// Compose a textured scene: smooth color background, solid shapes with
/// sharp edges, oriented sinusoidal gratings, and thin lines.
pub fn test_image<T: Scalar>(width: usize, height: usize, seed: u64) -> RgbImage<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15));
    let mut planes = vec![vec![0.0f64; width * height]; 3];

    // Low-frequency background, one phase per channel.
    for plane in planes.iter_mut() {
        let ax = rng.gen_range(0.2..0.5);
        let fx = rng.gen_range(0.5..2.0) * std::f64::consts::PI;
        let fy = rng.gen_range(0.5..2.0) * std::f64::consts::PI;
        let px = rng.gen_range(0.0..std::f64::consts::TAU);
        let py = rng.gen_range(0.0..std::f64::consts::TAU);
        let base = rng.gen_range(0.3..0.6);
        for r in 0..height {
            for c in 0..width {
                let u = c as f64 / width as f64;
                let v = r as f64 / height as f64;
                plane[r * width + c] =
                    base + ax * 0.5 * ((fx * u + px).cos() + (fy * v + py).cos()) * 0.5;
            }
        }
    }

    // Solid rectangles and disks.
    let shapes = rng.gen_range(6..11);
    for _ in 0..shapes {
        let color = [
            rng.gen_range(0.05..0.95),
            rng.gen_range(0.05..0.95),
            rng.gen_range(0.05..0.95),
        ];
        if rng.gen::<bool>() {
            let w = rng.gen_range(width / 10..width / 3).max(2);
            let h = rng.gen_range(height / 10..height / 3).max(2);
            let x0 = rng.gen_range(0..width.saturating_sub(w).max(1));
            let y0 = rng.gen_range(0..height.saturating_sub(h).max(1));
            for r in y0..(y0 + h).min(height) {
                for c in x0..(x0 + w).min(width) {
                    for (ch, plane) in planes.iter_mut().enumerate() {
                        plane[r * width + c] = color[ch];
                    }
                }
            }
        } else {
            let rad = rng
                .gen_range(width.min(height) / 12..width.min(height) / 4)
                .max(2);
            let cx = rng.gen_range(0..width) as isize;
            let cy = rng.gen_range(0..height) as isize;
            let rad2 = (rad * rad) as isize;
            for r in 0..height as isize {
                for c in 0..width as isize {
                    if (r - cy) * (r - cy) + (c - cx) * (c - cx) <= rad2 {
                        for (ch, plane) in planes.iter_mut().enumerate() {
                            plane[(r as usize) * width + c as usize] = color[ch];
                        }
                    }
                }
            }
        }
    }

    // Oriented gratings inside random windows; frequencies reach well into
    // the range a psi=8 blur wipes out.
    let gratings = rng.gen_range(2..5);
    for _ in 0..gratings {
        let w = rng.gen_range(width / 6..width / 2).max(4);
        let h = rng.gen_range(height / 6..height / 2).max(4);
        let x0 = rng.gen_range(0..width.saturating_sub(w).max(1));
        let y0 = rng.gen_range(0..height.saturating_sub(h).max(1));
        let freq = rng.gen_range(0.6..2.4); // radians per pixel
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let (sa, ca) = angle.sin_cos();
        let amp = rng.gen_range(0.15..0.4);
        let tint = [
            rng.gen_range(0.6..1.0),
            rng.gen_range(0.6..1.0),
            rng.gen_range(0.6..1.0),
        ];
        for r in y0..(y0 + h).min(height) {
            for c in x0..(x0 + w).min(width) {
                let phase = freq * (ca * c as f64 + sa * r as f64);
                let s = amp * phase.sin();
                for (ch, plane) in planes.iter_mut().enumerate() {
                    plane[r * width + c] += tint[ch] * s;
                }
            }
        }
    }

    // Thin bright/dark lines.
    let lines = rng.gen_range(3..7);
    for _ in 0..lines {
        let horizontal = rng.gen::<bool>();
        let value = if rng.gen::<bool>() { 0.92 } else { 0.08 };
        if horizontal {
            let r = rng.gen_range(0..height);
            for c in 0..width {
                for plane in planes.iter_mut() {
                    plane[r * width + c] = value;
                }
            }
        } else {
            let c = rng.gen_range(0..width);
            for r in 0..height {
                for plane in planes.iter_mut() {
                    plane[r * width + c] = value;
                }
            }
        }
    }

    let mut img = RgbImage::new(width, height);
    for (ch, plane) in planes.iter().enumerate() {
        for (dst, &v) in img.plane_mut(ch).iter_mut().zip(plane) {
            *dst = T::from_f64_lossy(v.clamp(0.03, 0.97));
        }
    }
    img
}

/// Four-quadrant scene for the multi-depth experiment: each quadrant gets
/// independently textured content from its own sub-seed.
pub fn quadrant_scene<T: Scalar>(width: usize, height: usize, seed: u64) -> RgbImage<T> {
    let mut img = RgbImage::new(width, height);
    let (hw, hh) = (width / 2, height / 2);
    for (q, &(x0, y0)) in [(0, 0), (hw, 0), (0, hh), (hw, hh)].iter().enumerate() {
        let tile: RgbImage<T> = test_image(hw, hh, seed.wrapping_add(1 + q as u64));
        for ch in 0..3 {
            for r in 0..hh {
                for c in 0..hw {
                    img.set(ch, y0 + r, x0 + c, tile.at(ch, r, c));
                }
            }
        }
    }
    img
}

/// Vectorize the ground-truth RGB patch at an origin as [R | G | B],
/// row-major per plane.
pub fn rgb_patch_at<T: Scalar>(img: &RgbImage<T>, row: usize, col: usize) -> Vec<T> {
    let area = PATCH_SIDE * PATCH_SIDE;
    let mut out = Vec::with_capacity(3 * area);
    for ch in 0..3 {
        for dr in 0..PATCH_SIDE {
            for dc in 0..PATCH_SIDE {
                out.push(img.at(ch, row + dr, col + dc));
            }
        }
    }
    out
}

/// Simulate captures of `images` (each blurred at its per-image psi-grid
/// index, mosaiced, optionally noised) and pair every raw patch with its
/// sharp RGB counterpart. Patches are shuffled deterministically and
/// truncated to `limit` (0 keeps all).
#[allow(clippy::too_many_arguments)]
pub fn capture_patch_pairs<T: Scalar>(
    images: &[RgbImage<T>],
    kernels: &BlurKernelSet<T>,
    psi_index_per_image: &[usize],
    pattern: CfaPattern,
    stride: usize,
    noise_sigma: T,
    limit: usize,
    seed: u64,
) -> Result<Vec<Sample<T>>> {
    let mut pairs: Vec<Sample<T>> = Vec::new();
    for (img, &psi_idx) in images.iter().zip(psi_index_per_image) {
        let blurred = blur_image(img, kernels, &DepthMap::Uniform(psi_idx))?;
        let raw = mosaic(&blurred, pattern)?;
        let raw = add_noise(&raw, noise_sigma, seed ^ (psi_idx as u64) << 17)?;
        let stream = extract_patches(&raw, stride)?;
        for (patch, &(r, c)) in stream.patches().iter().zip(stream.origins()) {
            pairs.push((patch.clone(), rgb_patch_at(img, r, c)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    if limit > 0 && pairs.len() > limit {
        pairs.truncate(limit);
    }
    Ok(pairs)
}

//! Forward imaging model: depth-dependent per-channel blur, Bayer CFA
//! sampling, and additive Gaussian sensor noise.
//!
//! All intensities are linear light in [0, 1].

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::optics::{BlurKernelSet, CHANNELS};
use crate::{Error, Result, Scalar};

/// Planar three-channel image, channel order R, G, B.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage<T> {
    width: usize,
    height: usize,
    planes: [Vec<T>; CHANNELS],
}

impl<T: Scalar> RgbImage<T> {
    pub fn new(width: usize, height: usize) -> Self {
        let plane = vec![T::zero(); width * height];
        RgbImage {
            width,
            height,
            planes: [plane.clone(), plane.clone(), plane],
        }
    }

    pub fn from_planes(width: usize, height: usize, planes: [Vec<T>; CHANNELS]) -> Result<Self> {
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::invalid("plane size must be width*height"));
        }
        if planes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image samples must be finite"));
        }
        Ok(RgbImage {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, channel: usize) -> &[T] {
        &self.planes[channel]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [T] {
        &mut self.planes[channel]
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> T {
        self.planes[channel][row * self.width + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, v: T) {
        self.planes[channel][row * self.width + col] = v;
    }

    pub fn clip01_in_place(&mut self) {
        for plane in &mut self.planes {
            for v in plane.iter_mut() {
                *v = v.max(T::zero()).min(T::one());
            }
        }
    }
}

/// Bayer color-filter-array layouts: the four 2x2 phase variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CfaPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    /// Channel captured at absolute pixel (row, col): 0=R, 1=G, 2=B.
    pub fn channel_at(self, row: usize, col: usize) -> usize {
        let (r, c) = (row % 2, col % 2);
        match self {
            CfaPattern::Rggb => [[0, 1], [1, 2]][r][c],
            CfaPattern::Bggr => [[2, 1], [1, 0]][r][c],
            CfaPattern::Grbg => [[1, 0], [2, 1]][r][c],
            CfaPattern::Gbrg => [[1, 2], [0, 1]][r][c],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            "BGGR" => Ok(CfaPattern::Bggr),
            "GRBG" => Ok(CfaPattern::Grbg),
            "GBRG" => Ok(CfaPattern::Gbrg),
            other => Err(Error::invalid(format!("unknown CFA pattern {other}"))),
        }
    }
}

/// Single-plane raw sensor frame with its CFA tag.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBayerImage<T> {
    width: usize,
    height: usize,
    samples: Vec<T>,
    pattern: CfaPattern,
}

impl<T: Scalar> RawBayerImage<T> {
    pub fn new(width: usize, height: usize, samples: Vec<T>, pattern: CfaPattern) -> Result<Self> {
        if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::invalid("raw frame dimensions must be even"));
        }
        if samples.len() != width * height {
            return Err(Error::invalid("sample count must be width*height"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("raw samples must be finite"));
        }
        Ok(RawBayerImage {
            width,
            height,
            samples,
            pattern,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn at(&self, row: usize, col: usize) -> T {
        self.samples[row * self.width + col]
    }
}

/// Per-pixel psi-grid index map, or one index for single-depth scenes.
#[derive(Debug, Clone, PartialEq)]
pub enum DepthMap {
    Uniform(usize),
    PerPixel {
        width: usize,
        height: usize,
        indices: Vec<usize>,
    },
}

impl DepthMap {
    pub fn per_pixel(width: usize, height: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != width * height {
            return Err(Error::invalid("depth map size must be width*height"));
        }
        Ok(DepthMap::PerPixel {
            width,
            height,
            indices,
        })
    }

    fn index_at(&self, row: usize, col: usize) -> usize {
        match self {
            DepthMap::Uniform(i) => *i,
            DepthMap::PerPixel { width, indices, .. } => indices[row * width + col],
        }
    }

    fn max_index(&self) -> usize {
        match self {
            DepthMap::Uniform(i) => *i,
            DepthMap::PerPixel { indices, .. } => indices.iter().copied().max().unwrap_or(0),
        }
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        match self {
            DepthMap::Uniform(_) => Ok(()),
            DepthMap::PerPixel {
                width: w,
                height: h,
                ..
            } => {
                if *w == width && *h == height {
                    Ok(())
                } else {
                    Err(Error::invalid("depth map dimensions must match the image"))
                }
            }
        }
    }
}

/// Mirror (symmetric) index extension: ..2,1,0 | 0,1,2.. | n-1,n-2..
#[inline]
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // A couple of reflections suffice for kernel radii below the image size,
    // but loop for full generality on tiny inputs.
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Convolve one plane with a kernel chosen per pixel through the depth map,
/// mirror boundary extension.
fn blur_plane<T: Scalar>(
    plane: &[T],
    width: usize,
    height: usize,
    kernels: &[&Matrix<T>],
    depth: &DepthMap,
) -> Vec<T> {
    let ksize = kernels[0].rows() as isize;
    let half = ksize / 2;
    let mut out = vec![T::zero(); width * height];
    for row in 0..height {
        for col in 0..width {
            let kernel = kernels[depth.index_at(row, col)];
            let mut acc = T::zero();
            for kr in 0..ksize {
                let src_r = mirror_index(row as isize + half - kr, height);
                for kc in 0..ksize {
                    let src_c = mirror_index(col as isize + half - kc, width);
                    acc += kernel[(kr as usize, kc as usize)] * plane[src_r * width + src_c];
                }
            }
            out[row * width + col] = acc;
        }
    }
    out
}

/// Per-channel convolution with the depth-selected kernel (Eq. 2 style
/// forward model).
pub fn blur_image<T: Scalar>(
    img: &RgbImage<T>,
    kernels: &BlurKernelSet<T>,
    depth: &DepthMap,
) -> Result<RgbImage<T>> {
    depth.check_dims(img.width, img.height)?;
    if depth.max_index() >= kernels.len() {
        return Err(Error::invalid("depth index outside the psi grid"));
    }
    let mut planes: [Vec<T>; CHANNELS] = [Vec::new(), Vec::new(), Vec::new()];
    for (c, out) in planes.iter_mut().enumerate() {
        let refs: Vec<&Matrix<T>> = (0..kernels.len()).map(|j| kernels.kernel(c, j)).collect();
        *out = blur_plane(&img.planes[c], img.width, img.height, &refs, depth);
    }
    RgbImage::from_planes(img.width, img.height, planes)
}

/// Sample the CFA: keep, at each pixel, the channel the pattern selects.
pub fn mosaic<T: Scalar>(img: &RgbImage<T>, pattern: CfaPattern) -> Result<RawBayerImage<T>> {
    if !img.width.is_multiple_of(2) || !img.height.is_multiple_of(2) {
        return Err(Error::invalid("mosaic requires even dimensions"));
    }
    let mut samples = vec![T::zero(); img.width * img.height];
    for row in 0..img.height {
        for col in 0..img.width {
            let ch = pattern.channel_at(row, col);
            samples[row * img.width + col] = img.at(ch, row, col);
        }
    }
    RawBayerImage::new(img.width, img.height, samples, pattern)
}

/// Additive white Gaussian noise, clipped to [0, 1]; deterministic in `seed`.
pub fn add_noise<T: Scalar>(
    raw: &RawBayerImage<T>,
    sigma: T,
    seed: u64,
) -> Result<RawBayerImage<T>> {
    if sigma < T::zero() {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    if sigma == T::zero() {
        return Ok(raw.clone());
    }
    // Noise is drawn in f64 regardless of T so that a seed identifies one
    // noise field across scalar types.
    let sigma64 = sigma.to_f64().expect("scalar converts to f64");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, sigma64).expect("valid sigma");
    let samples = raw
        .samples
        .iter()
        .map(|&v| {
            let noisy = v + T::from_f64_lossy(normal.sample(&mut rng));
            noisy.max(T::zero()).min(T::one())
        })
        .collect();
    RawBayerImage::new(raw.width, raw.height, samples, raw.pattern)
}

/// Odd (reflect-101) index extension: -1 -> 1, n -> n-2. Unlike the
/// symmetric mirror it preserves the 2-periodic CFA phase.
#[inline]
fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Plain bilinear demosaic; the visualization baseline for raw frames.
/// Measured samples pass through unchanged.
pub fn demosaic_bilinear<T: Scalar>(raw: &RawBayerImage<T>) -> RgbImage<T> {
    let (w, h) = (raw.width, raw.height);
    let pattern = raw.pattern;
    let mut img = RgbImage::new(w, h);
    let value = |r: isize, c: isize| raw.at(reflect101(r, h), reflect101(c, w));
    let two = T::from_f64_lossy(2.0);
    let four = T::from_f64_lossy(4.0);
    for row in 0..h {
        for col in 0..w {
            let own = pattern.channel_at(row, col);
            let (r, c) = (row as isize, col as isize);
            img.set(own, row, col, raw.at(row, col));
            for target in 0..CHANNELS {
                if target == own {
                    continue;
                }
                let horiz = pattern.channel_at(row, col + 1) == target;
                let vert = pattern.channel_at(row + 1, col) == target;
                let v = match (horiz, vert) {
                    (true, true) => {
                        (value(r, c - 1) + value(r, c + 1) + value(r - 1, c) + value(r + 1, c))
                            / four
                    }
                    (true, false) => (value(r, c - 1) + value(r, c + 1)) / two,
                    (false, true) => (value(r - 1, c) + value(r + 1, c)) / two,
                    (false, false) => {
                        (value(r - 1, c - 1)
                            + value(r - 1, c + 1)
                            + value(r + 1, c - 1)
                            + value(r + 1, c + 1))
                            / four
                    }
                };
                img.set(target, row, col, v);
            }
        }
    }
    img
}

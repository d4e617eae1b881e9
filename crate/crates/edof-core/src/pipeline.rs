//! Whole-image reconstruction: patch extraction from raw frames, per-patch
//! inference (float or fixed), color handling, overlap pooling, and quality
//! metrics.
//!
//! The raw frame is swept by an even-stride 8x8 window; every patch is
//! reconstructed independently (no depth input anywhere), and overlapping
//! reconstructions are average-pooled. The fixed path mirrors the hardware
//! order of operations: per-patch gamma on luma before pooling; the float
//! RGB path pools linear light.

use rayon::prelude::*;

use crate::fixedpoint::{fx_forward, FixedNetwork, CHROMA_FRAC};
use crate::linalg::Matrix;
use crate::network::{forward, NetworkParams, OutputSpace};
use crate::sensor::{RawBayerImage, RgbImage};
use crate::sparse::{self, ConcatDictionary, SolverConfig};
use crate::{Error, Result, Scalar};

pub const PATCH_SIDE: usize = sparse::PATCH_SIDE;

/// BT.601 full-range luma weights.
const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

/// Exact inverse coefficients derived from the luma weights (the usual
/// rounded literals would break the lossless round trip on constants).
const INV_CR_R: f64 = 2.0 * (1.0 - KR);
const INV_CB_B: f64 = 2.0 * (1.0 - KB);
const INV_CB_G: f64 = 2.0 * KB * (1.0 - KB) / KG;
const INV_CR_G: f64 = 2.0 * KR * (1.0 - KR) / KG;

/// Linear map plus offset taking a planar RGB patch (3 * area) to a 4:2:2
/// YCbCr patch (2 * area): `ycbcr = C * rgb + offset`. Luma rows come
/// first (row-major), then Cb for each horizontal pixel pair, then Cr.
pub fn ycbcr422_output_map<T: Scalar>(patch_side: usize) -> (Matrix<T>, Vec<T>) {
    assert!(
        patch_side.is_multiple_of(2),
        "4:2:2 needs an even patch side"
    );
    let area = patch_side * patch_side;
    let pairs = patch_side / 2;
    let cb = [-KR / (2.0 * (1.0 - KB)), -KG / (2.0 * (1.0 - KB)), 0.5];
    let cr = [0.5, -KG / (2.0 * (1.0 - KR)), -KB / (2.0 * (1.0 - KR))];
    let mut c = Matrix::zeros(2 * area, 3 * area);
    let mut offset = vec![T::zero(); 2 * area];
    for p in 0..area {
        c[(p, p)] = T::from_f64_lossy(KR);
        c[(p, area + p)] = T::from_f64_lossy(KG);
        c[(p, 2 * area + p)] = T::from_f64_lossy(KB);
    }
    let half = T::from_f64_lossy(0.5);
    for r in 0..patch_side {
        for j in 0..pairs {
            let p0 = r * patch_side + 2 * j;
            let p1 = p0 + 1;
            let cb_row = area + r * pairs + j;
            let cr_row = area + area / 2 + r * pairs + j;
            for (ch, (&wb, &wr)) in cb.iter().zip(&cr).enumerate() {
                let scale = T::from_f64_lossy(0.5);
                c[(cb_row, ch * area + p0)] = scale * T::from_f64_lossy(wb);
                c[(cb_row, ch * area + p1)] = scale * T::from_f64_lossy(wb);
                c[(cr_row, ch * area + p0)] = scale * T::from_f64_lossy(wr);
                c[(cr_row, ch * area + p1)] = scale * T::from_f64_lossy(wr);
            }
            offset[cb_row] = half;
            offset[cr_row] = half;
        }
    }
    (c, offset)
}

/// RGB patch (3 * area) to 4:2:2 YCbCr (2 * area), BT.601 full range with
/// horizontally pair-averaged chroma.
pub fn rgb_to_ycbcr422<T: Scalar>(patch: &[T]) -> Result<Vec<T>> {
    let area = patch.len() / 3;
    let side = (area as f64).sqrt() as usize;
    if side * side != area || patch.len() != 3 * area || !side.is_multiple_of(2) {
        return Err(Error::invalid("patch must be 3 * side^2 with even side"));
    }
    let (c, off) = ycbcr422_output_map::<T>(side);
    let mut out = c.mul_vec(patch);
    for (o, &b) in out.iter_mut().zip(&off) {
        *o += b;
    }
    Ok(out)
}

/// Inverse of [`rgb_to_ycbcr422`] up to the chroma subsampling: chroma is
/// replicated across each horizontal pair.
pub fn ycbcr422_to_rgb<T: Scalar>(patch: &[T]) -> Result<Vec<T>> {
    let area = patch.len() / 2;
    let side = (area as f64).sqrt() as usize;
    if side * side != area || patch.len() != 2 * area || !side.is_multiple_of(2) {
        return Err(Error::invalid("patch must be 2 * side^2 with even side"));
    }
    let pairs = side / 2;
    let half = T::from_f64_lossy(0.5);
    let mut rgb = vec![T::zero(); 3 * area];
    for r in 0..side {
        for col in 0..side {
            let p = r * side + col;
            let y = patch[p];
            let cb = patch[area + r * pairs + col / 2] - half;
            let cr = patch[area + area / 2 + r * pairs + col / 2] - half;
            rgb[p] = y + T::from_f64_lossy(INV_CR_R) * cr;
            rgb[area + p] = y - T::from_f64_lossy(INV_CB_G) * cb - T::from_f64_lossy(INV_CR_G) * cr;
            rgb[2 * area + p] = y + T::from_f64_lossy(INV_CB_B) * cb;
        }
    }
    Ok(rgb)
}

/// Raw patches swept from a frame on an even lattice.
#[derive(Debug, Clone)]
pub struct PatchStream<T> {
    origins: Vec<(usize, usize)>,
    patches: Vec<Vec<T>>,
    stride: usize,
    frame_w: usize,
    frame_h: usize,
}

impl<T: Scalar> PatchStream<T> {
    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn patches(&self) -> &[Vec<T>] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        (self.frame_w, self.frame_h)
    }
}

/// Origin coordinates along one axis: 0, stride, ..., with the final
/// origin clamped to `dim - 8` so the remainder stays covered. Origins
/// stay even for even strides and even dims, preserving the CFA phase.
fn axis_origins(dim: usize, stride: usize) -> Vec<usize> {
    let last = dim - PATCH_SIDE;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if *origins.last().expect("dim >= 8") != last {
        origins.push(last);
    }
    origins
}

/// Sweep the frame row-major with an 8x8 window at the given even stride.
pub fn extract_patches<T: Scalar>(raw: &RawBayerImage<T>, stride: usize) -> Result<PatchStream<T>> {
    if stride == 0 || !stride.is_multiple_of(2) {
        return Err(Error::invalid("stride must be even and positive"));
    }
    if raw.width() < PATCH_SIDE || raw.height() < PATCH_SIDE {
        return Err(Error::invalid("frame smaller than one patch"));
    }
    let rows = axis_origins(raw.height(), stride);
    let cols = axis_origins(raw.width(), stride);
    let mut origins = Vec::with_capacity(rows.len() * cols.len());
    let mut patches = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            let mut patch = Vec::with_capacity(PATCH_SIDE * PATCH_SIDE);
            for dr in 0..PATCH_SIDE {
                for dc in 0..PATCH_SIDE {
                    patch.push(raw.at(r + dr, c + dc));
                }
            }
            origins.push((r, c));
            patches.push(patch);
        }
    }
    Ok(PatchStream {
        origins,
        patches,
        stride,
        frame_w: raw.width(),
        frame_h: raw.height(),
    })
}

/// Average-pool reconstructed RGB patches into a frame; every pixel must
/// be covered. Output is clipped to [0, 1].
pub fn assemble<T: Scalar>(
    patches: &[Vec<T>],
    origins: &[(usize, usize)],
    frame_w: usize,
    frame_h: usize,
) -> Result<RgbImage<T>> {
    if patches.len() != origins.len() {
        return Err(Error::invalid("patch/origin count mismatch"));
    }
    let area = PATCH_SIDE * PATCH_SIDE;
    let mut sums = vec![[T::zero(); 3]; frame_w * frame_h];
    let mut counts = vec![0u32; frame_w * frame_h];
    for (patch, &(or, oc)) in patches.iter().zip(origins) {
        if patch.len() != 3 * area {
            return Err(Error::invalid("patch must be 3 * 64 values"));
        }
        for dr in 0..PATCH_SIDE {
            for dc in 0..PATCH_SIDE {
                let p = dr * PATCH_SIDE + dc;
                let idx = (or + dr) * frame_w + (oc + dc);
                for ch in 0..3 {
                    sums[idx][ch] += patch[ch * area + p];
                }
                counts[idx] += 1;
            }
        }
    }
    if counts.contains(&0) {
        return Err(Error::invalid("assembly left uncovered pixels"));
    }
    let mut img = RgbImage::new(frame_w, frame_h);
    for (i, (&count, cell)) in counts.iter().zip(&sums).enumerate() {
        let n = T::from_f64_lossy(count as f64);
        for (ch, &sum) in cell.iter().enumerate() {
            img.plane_mut(ch)[i] = (sum / n).max(T::zero()).min(T::one());
        }
    }
    Ok(img)
}

/// Peak signal-to-noise ratio over all three channels; identical images
/// report the 99 dB cap.
pub fn psnr<T: Scalar>(a: &RgbImage<T>, b: &RgbImage<T>, peak: T) -> Result<T> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid("image dimensions differ"));
    }
    let mut acc = T::zero();
    let n = 3 * a.width() * a.height();
    for ch in 0..3 {
        for (&x, &y) in a.plane(ch).iter().zip(b.plane(ch)) {
            let d = x - y;
            acc += d * d;
        }
    }
    let mse = acc / T::from_f64_lossy(n as f64);
    if mse == T::zero() {
        return Ok(T::from_f64_lossy(99.0));
    }
    let ten = T::from_f64_lossy(10.0);
    let db = ten * (peak * peak / mse).log10();
    Ok(db.min(T::from_f64_lossy(99.0)))
}

/// PSNR restricted to a rectangular region (used by the multi-depth
/// experiments).
pub fn psnr_region<T: Scalar>(
    a: &RgbImage<T>,
    b: &RgbImage<T>,
    peak: T,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
) -> Result<T> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid("image dimensions differ"));
    }
    if x0 + w > a.width() || y0 + h > a.height() {
        return Err(Error::invalid("region outside the image"));
    }
    let mut acc = T::zero();
    for ch in 0..3 {
        for r in y0..y0 + h {
            for c in x0..x0 + w {
                let d = a.at(ch, r, c) - b.at(ch, r, c);
                acc += d * d;
            }
        }
    }
    let mse = acc / T::from_f64_lossy((3 * w * h) as f64);
    if mse == T::zero() {
        return Ok(T::from_f64_lossy(99.0));
    }
    let ten = T::from_f64_lossy(10.0);
    Ok((ten * (peak * peak / mse).log10()).min(T::from_f64_lossy(99.0)))
}

/// Which inference engine a reconstruction job runs.
#[derive(Debug, Clone, Copy)]
pub enum Engine<'a, T> {
    Float(&'a NetworkParams<T>),
    Fixed(&'a FixedNetwork),
}

/// One whole-frame reconstruction task.
#[derive(Debug, Clone)]
pub struct ReconstructionJob<'a, T> {
    pub raw: &'a RawBayerImage<T>,
    pub engine: Engine<'a, T>,
    pub stride: usize,
    /// Ground truth for PSNR reporting.
    pub ground_truth: Option<&'a RgbImage<T>>,
}

/// Reconstruction outcome and bookkeeping.
#[derive(Debug, Clone)]
pub struct ReconReport<T> {
    pub psnr_db: Option<T>,
    pub seconds: f64,
    pub patches: usize,
    pub mode: String,
}

fn gamma_encode<T: Scalar>(v: T) -> T {
    let g = T::from_f64_lossy(1.0 / 2.2);
    v.max(T::zero()).min(T::one()).powf(g)
}

fn gamma_decode<T: Scalar>(v: T) -> T {
    let g = T::from_f64_lossy(2.2);
    v.max(T::zero()).min(T::one()).powf(g)
}

/// Pool YCbCr patches (luma already gamma-encoded) and convert the pooled
/// planes back to linear RGB. Chroma pools on the half-resolution lattice,
/// which even origins keep aligned.
fn assemble_ycbcr<T: Scalar>(
    patches: &[Vec<T>],
    origins: &[(usize, usize)],
    frame_w: usize,
    frame_h: usize,
) -> Result<RgbImage<T>> {
    let area = PATCH_SIDE * PATCH_SIDE;
    let pairs = PATCH_SIDE / 2;
    let half_w = frame_w / 2;
    let mut luma_sum = vec![T::zero(); frame_w * frame_h];
    let mut luma_count = vec![0u32; frame_w * frame_h];
    let mut cb_sum = vec![T::zero(); half_w * frame_h];
    let mut cr_sum = vec![T::zero(); half_w * frame_h];
    let mut chroma_count = vec![0u32; half_w * frame_h];
    for (patch, &(or, oc)) in patches.iter().zip(origins) {
        if patch.len() != 2 * area {
            return Err(Error::invalid("YCbCr patch must be 2 * 64 values"));
        }
        if oc % 2 != 0 {
            return Err(Error::invalid("chroma pooling needs even column origins"));
        }
        for dr in 0..PATCH_SIDE {
            for dc in 0..PATCH_SIDE {
                let idx = (or + dr) * frame_w + (oc + dc);
                luma_sum[idx] += patch[dr * PATCH_SIDE + dc];
                luma_count[idx] += 1;
            }
            for j in 0..pairs {
                let idx = (or + dr) * half_w + (oc / 2 + j);
                cb_sum[idx] += patch[area + dr * pairs + j];
                cr_sum[idx] += patch[area + area / 2 + dr * pairs + j];
                chroma_count[idx] += 1;
            }
        }
    }
    if luma_count.contains(&0) {
        return Err(Error::invalid("assembly left uncovered pixels"));
    }
    let mut img = RgbImage::new(frame_w, frame_h);
    let half = T::from_f64_lossy(0.5);
    for r in 0..frame_h {
        for c in 0..frame_w {
            let idx = r * frame_w + c;
            let cidx = r * half_w + c / 2;
            let y = gamma_decode(luma_sum[idx] / T::from_f64_lossy(luma_count[idx] as f64));
            let n = T::from_f64_lossy(chroma_count[cidx] as f64);
            let cb = cb_sum[cidx] / n - half;
            let cr = cr_sum[cidx] / n - half;
            let rr = y + T::from_f64_lossy(INV_CR_R) * cr;
            let gg = y - T::from_f64_lossy(INV_CB_G) * cb - T::from_f64_lossy(INV_CR_G) * cr;
            let bb = y + T::from_f64_lossy(INV_CB_B) * cb;
            img.set(0, r, c, rr.max(T::zero()).min(T::one()));
            img.set(1, r, c, gg.max(T::zero()).min(T::one()));
            img.set(2, r, c, bb.max(T::zero()).min(T::one()));
        }
    }
    Ok(img)
}

/// Reconstruct a frame with a network, float or fixed. Per-patch inference
/// is blind (no depth input) and runs patch-parallel with a deterministic
/// reduction.
pub fn reconstruct_image<T: Scalar>(
    job: &ReconstructionJob<'_, T>,
) -> Result<(RgbImage<T>, ReconReport<T>)> {
    let started = std::time::Instant::now();
    if !matches!(job.stride, 2 | 4 | 8) {
        return Err(Error::invalid("stride must be one of 2, 4, 8"));
    }
    let stream = extract_patches(job.raw, job.stride)?;
    let (frame_w, frame_h) = stream.frame_dims();
    let (img, mode) = match job.engine {
        Engine::Float(net) => {
            if net.input_dim() != PATCH_SIDE * PATCH_SIDE {
                return Err(Error::invalid("network input is not an 8x8 patch"));
            }
            let outs: Vec<Result<Vec<T>>> = stream
                .patches()
                .par_iter()
                .map(|y| forward(net, y).map(|(out, _)| out))
                .collect();
            let outs = outs.into_iter().collect::<Result<Vec<_>>>()?;
            match net.output_space() {
                OutputSpace::Rgb192 => (
                    assemble(&outs, stream.origins(), frame_w, frame_h)?,
                    "float-rgb".to_string(),
                ),
                OutputSpace::Ycbcr422 => {
                    // Hardware pooling order: gamma the luma per patch.
                    let area = PATCH_SIDE * PATCH_SIDE;
                    let encoded: Vec<Vec<T>> = outs
                        .into_iter()
                        .map(|mut p| {
                            for v in &mut p[..area] {
                                *v = gamma_encode(*v);
                            }
                            p
                        })
                        .collect();
                    (
                        assemble_ycbcr(&encoded, stream.origins(), frame_w, frame_h)?,
                        "float-ycbcr".to_string(),
                    )
                }
            }
        }
        Engine::Fixed(fnet) => {
            if fnet.input_dim() != PATCH_SIDE * PATCH_SIDE {
                return Err(Error::invalid("network input is not an 8x8 patch"));
            }
            let area = PATCH_SIDE * PATCH_SIDE;
            let chroma_scale = T::from_f64_lossy(f64::powi(2.0, -(CHROMA_FRAC as i32)));
            let byte_scale = T::from_f64_lossy(1.0 / 255.0);
            let outs: Vec<Result<Vec<T>>> = stream
                .patches()
                .par_iter()
                .map(|y| {
                    let q = fnet.quantize_input(y);
                    let out = fx_forward(fnet, &q)?;
                    let gamma = fnet.gamma_luma(&out.luma);
                    let mut patch = Vec::with_capacity(2 * area);
                    for &g in &gamma {
                        patch.push(T::from_f64_lossy(g as f64) * byte_scale);
                    }
                    for &ch in &out.chroma {
                        patch.push(T::from_f64_lossy(ch as f64) * chroma_scale);
                    }
                    Ok(patch)
                })
                .collect();
            let outs = outs.into_iter().collect::<Result<Vec<_>>>()?;
            (
                assemble_ycbcr(&outs, stream.origins(), frame_w, frame_h)?,
                "fixed-ycbcr".to_string(),
            )
        }
    };
    let psnr_db = match job.ground_truth {
        Some(gt) => Some(psnr(&img, gt, T::one())?),
        None => None,
    };
    let report = ReconReport {
        psnr_db,
        seconds: started.elapsed().as_secs_f64(),
        patches: stream.len(),
        mode,
    };
    Ok((img, report))
}

/// Iterative solver selection for [`reconstruct_with_solver`].
#[derive(Debug, Clone)]
pub enum SolverKind<T> {
    Ista(SolverConfig<T>),
    Omp { max_atoms: usize, residual_tol: T },
}

/// Reconstruct a frame by per-patch sparse pursuit over the concatenated
/// dictionary (the iterative reference path; the network path is
/// [`reconstruct_image`]).
pub fn reconstruct_with_solver<T: Scalar>(
    raw: &RawBayerImage<T>,
    dict: &ConcatDictionary<T>,
    solver: &SolverKind<T>,
    stride: usize,
    ground_truth: Option<&RgbImage<T>>,
) -> Result<(RgbImage<T>, ReconReport<T>)> {
    let started = std::time::Instant::now();
    let stream = extract_patches(raw, stride)?;
    let (frame_w, frame_h) = stream.frame_dims();
    let outs: Vec<Result<Vec<T>>> = stream
        .patches()
        .par_iter()
        .map(|y| {
            let z = match solver {
                SolverKind::Ista(cfg) => sparse::ista(y, dict, cfg)?.z,
                SolverKind::Omp {
                    max_atoms,
                    residual_tol,
                } => sparse::omp(y, dict, *max_atoms, *residual_tol)?.z,
            };
            sparse::reconstruct_patch(&z, dict)
        })
        .collect();
    let outs = outs.into_iter().collect::<Result<Vec<_>>>()?;
    let img = assemble(&outs, stream.origins(), frame_w, frame_h)?;
    let psnr_db = match ground_truth {
        Some(gt) => Some(psnr(&img, gt, T::one())?),
        None => None,
    };
    let mode = match solver {
        SolverKind::Ista(_) => "ista",
        SolverKind::Omp { .. } => "omp",
    };
    let report = ReconReport {
        psnr_db,
        seconds: started.elapsed().as_secs_f64(),
        patches: stream.len(),
        mode: mode.to_string(),
    };
    Ok((img, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::CfaPattern;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw_ramp(w: usize, h: usize) -> RawBayerImage<f64> {
        let samples = (0..w * h).map(|i| (i % 97) as f64 / 96.0).collect();
        RawBayerImage::new(w, h, samples, CfaPattern::Rggb).unwrap()
    }

    #[test]
    fn extraction_counts() {
        let raw = raw_ramp(16, 16);
        assert_eq!(extract_patches(&raw, 8).unwrap().len(), 4);
        assert_eq!(extract_patches(&raw, 2).unwrap().len(), 25);
        assert!(extract_patches(&raw_ramp(6, 6), 2).is_err());
        assert!(extract_patches(&raw, 3).is_err());
    }

    #[test]
    fn extraction_covers_every_pixel() {
        for (w, h) in [(8, 8), (10, 14), (18, 12), (26, 40), (64, 64)] {
            let raw = raw_ramp(w, h);
            for stride in [2usize, 4, 6, 8] {
                let stream = extract_patches(&raw, stride).unwrap();
                let mut covered = vec![false; w * h];
                for &(r, c) in stream.origins() {
                    assert!(r % 2 == 0 && c % 2 == 0, "origins stay even");
                    for dr in 0..8 {
                        for dc in 0..8 {
                            covered[(r + dr) * w + (c + dc)] = true;
                        }
                    }
                }
                assert!(
                    covered.iter().all(|&c| c),
                    "uncovered pixel at w={w} h={h} stride={stride}"
                );
            }
        }
    }

    #[test]
    fn assemble_passthrough_tiles() {
        // Stride 8: pass-through patches reassemble the frame exactly.
        let raw = raw_ramp(16, 16);
        let stream = extract_patches(&raw, 8).unwrap();
        // Build rgb patches that replicate the raw values in each channel.
        let patches: Vec<Vec<f64>> = stream
            .patches()
            .iter()
            .map(|p| {
                let mut rgb = Vec::with_capacity(192);
                for _ in 0..3 {
                    rgb.extend_from_slice(p);
                }
                rgb
            })
            .collect();
        let img = assemble(&patches, stream.origins(), 16, 16).unwrap();
        for ch in 0..3 {
            for (a, b) in img.plane(ch).iter().zip(raw.samples()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn assemble_averages_overlap() {
        // Two patches overlapping: overlapped pixels are the mean.
        let a = vec![0.2f64; 192];
        let b = vec![0.4f64; 192];
        let img: RgbImage<f64> = assemble(&[a, b], &[(0, 0), (0, 4)], 12, 8).unwrap();
        assert!((img.at(0, 0, 0) - 0.2).abs() < 1e-15);
        assert!((img.at(0, 0, 5) - 0.3).abs() < 1e-15); // overlap zone
        assert!((img.at(0, 0, 9) - 0.4).abs() < 1e-15);
        // Uncovered pixel -> error.
        assert!(assemble(&[vec![0.1f64; 192]], &[(0, 0)], 12, 8).is_err());
    }

    #[test]
    fn overlapping_identical_patches_average_exactly() {
        let raw = raw_ramp(16, 16);
        let stream = extract_patches(&raw, 2).unwrap();
        let patches: Vec<Vec<f64>> = stream
            .patches()
            .iter()
            .map(|p| {
                let mut rgb = Vec::with_capacity(192);
                for _ in 0..3 {
                    rgb.extend_from_slice(p);
                }
                rgb
            })
            .collect();
        let img = assemble(&patches, stream.origins(), 16, 16).unwrap();
        for (a, b) in img.plane(1).iter().zip(raw.samples()) {
            assert!((a - b).abs() < 1e-12, "mean of identical values drifts");
        }
    }

    #[test]
    fn ycbcr_gray_patch() {
        let patch = vec![0.35f64; 192];
        let out = rgb_to_ycbcr422(&patch).unwrap();
        for &y in &out[..64] {
            assert!((y - 0.35).abs() < 1e-12);
        }
        for &c in &out[64..] {
            assert!((c - 0.5).abs() < 1e-12, "chroma sits at midpoint");
        }
    }

    #[test]
    fn ycbcr_round_trip_on_horizontally_constant_patch() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut patch = vec![0.0; 192];
        for ch in 0..3 {
            for r in 0..8 {
                let v: f64 = rng.gen();
                for c in 0..8 {
                    patch[ch * 64 + r * 8 + c] = v;
                }
            }
        }
        let back = ycbcr422_to_rgb(&rgb_to_ycbcr422(&patch).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&patch) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ycbcr_round_trip_error_bounded_by_chroma_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let patch: Vec<f64> = (0..192).map(|_| rng.gen()).collect();
        let back = ycbcr422_to_rgb(&rgb_to_ycbcr422(&patch).unwrap()).unwrap();
        // Subsampling error per channel is bounded by the pairwise chroma
        // spread times the largest inverse-matrix coefficient (1.772).
        let (c, off) = ycbcr422_output_map::<f64>(8);
        let full = {
            let mut v = c.mul_vec(&patch);
            for (vi, &o) in v.iter_mut().zip(&off) {
                *vi += o;
            }
            v
        };
        let mut max_pair_spread = 0.0f64;
        // Reconstruct the unsubsampled chroma per pixel to measure spread.
        for r in 0..8 {
            for j in 0..4 {
                let p0 = r * 8 + 2 * j;
                let cbs: Vec<f64> = [p0, p0 + 1]
                    .iter()
                    .map(|&p| {
                        0.5 + -0.168736 * patch[p] - 0.331264 * patch[64 + p] + 0.5 * patch[128 + p]
                    })
                    .collect();
                max_pair_spread = max_pair_spread.max((cbs[0] - cbs[1]).abs());
                let crs: Vec<f64> = [p0, p0 + 1]
                    .iter()
                    .map(|&p| {
                        0.5 + 0.5 * patch[p] - 0.418688 * patch[64 + p] - 0.081312 * patch[128 + p]
                    })
                    .collect();
                max_pair_spread = max_pair_spread.max((crs[0] - crs[1]).abs());
            }
        }
        let bound = 2.0 * 1.772 * max_pair_spread + 1e-9;
        for (a, b) in back.iter().zip(&patch) {
            assert!(
                (a - b).abs() <= bound,
                "error {} bound {bound}",
                (a - b).abs()
            );
        }
        let _ = full;
    }

    #[test]
    fn psnr_reference_points() {
        let a = RgbImage::<f64>::new(4, 4);
        let b = RgbImage::<f64>::new(4, 4);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), 99.0);
        let mut c = RgbImage::<f64>::new(4, 4);
        for ch in 0..3 {
            c.plane_mut(ch).iter_mut().for_each(|v| *v = 1.0);
        }
        assert!((psnr(&a, &c, 1.0).unwrap() - 0.0).abs() < 1e-12);
        let mut d = RgbImage::<f64>::new(4, 4);
        for ch in 0..3 {
            d.plane_mut(ch).iter_mut().for_each(|v| *v = 1.0 / 255.0);
        }
        let expect = 20.0 * 255.0f64.log10();
        assert!((psnr(&a, &d, 1.0).unwrap() - expect).abs() < 1e-9);
        let e = RgbImage::<f64>::new(6, 4);
        assert!(psnr(&a, &e, 1.0).is_err());
    }
}

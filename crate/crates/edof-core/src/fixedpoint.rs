//! Bit-exact emulation of the hardware calculator arithmetic.
//!
//! The data path is 16-bit two's complement with per-boundary power-of-two
//! scales; multiply-accumulate runs in a 48-bit accumulator and is rescaled
//! once at the end of each dot product with round-half-to-even and
//! saturation. Everything here is integer arithmetic: results are
//! identical across runs, thread counts, and platforms.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::network::{forward, NetworkParams, OutputSpace, StageKind};
use crate::{Error, Result, Scalar};

/// Word widths of the data path. `word_bits` and `acc_bits` are fixed by
/// the hardware design; the struct mostly exists to carry validated
/// fractional-bit choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedSpec {
    pub word_bits: u32,
    pub acc_bits: u32,
}

impl Default for FixedSpec {
    fn default() -> Self {
        FixedSpec {
            word_bits: 16,
            acc_bits: 48,
        }
    }
}

impl FixedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.word_bits != 16 || self.acc_bits != 48 {
            return Err(Error::invalid("data path is fixed at 16/48 bits"));
        }
        Ok(())
    }
}

/// Chroma samples leave the calculator as unsigned 8-bit with 8 fractional
/// bits (value = byte / 256).
pub const CHROMA_FRAC: u32 = 8;

/// Per-stage fractional-bit assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageScale {
    pub weight_frac: u32,
    pub in_frac: u32,
    pub out_frac: u32,
}

/// Power-of-two scale exponents for every tensor boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalePlan {
    /// Fractional bits of the raw input samples.
    pub data_frac: u32,
    /// One entry per stage; the final stage's `out_frac` is the luma scale.
    pub stages: Vec<StageScale>,
}

impl ScalePlan {
    pub fn validate(&self) -> Result<()> {
        let word = FixedSpec::default().word_bits;
        if self.data_frac >= word {
            return Err(Error::invalid("data frac_bits must be below word size"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.weight_frac >= word || s.in_frac >= word || s.out_frac >= word {
                return Err(Error::invalid(format!(
                    "stage {i}: frac_bits must be below word size"
                )));
            }
        }
        Ok(())
    }

    pub fn luma_frac(&self) -> u32 {
        self.stages.last().map(|s| s.out_frac).unwrap_or(14)
    }
}

/// Round-half-to-even rescale of a 48-bit accumulator value by
/// `2^-shift` (negative shift doubles), saturated to 16 bits.
#[inline]
pub fn fx_rescale(acc: i64, shift: i32) -> i16 {
    let rounded = if shift <= 0 {
        acc.checked_shl((-shift) as u32).unwrap_or(i64::MAX)
    } else if shift >= 63 {
        0
    } else {
        let div = 1i64 << shift;
        let q = acc >> shift;
        let r = acc & (div - 1);
        let half = div >> 1;
        match r.cmp(&half) {
            std::cmp::Ordering::Less => q,
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal => q + (q & 1),
        }
    };
    rounded.clamp(i16::MIN as i64, i16::MAX as i64) as i16
}

/// 16-bit dot product with exact 48-bit accumulation and one final
/// rescale. In debug builds an accumulator excursion beyond 48 bits is a
/// hard fault; the scale-plan invariants make it unreachable.
pub fn fx_macc(weights_row: &[i16], input: &[i16], shift: i32) -> i16 {
    debug_assert_eq!(weights_row.len(), input.len());
    let mut acc: i64 = 0;
    for (&w, &x) in weights_row.iter().zip(input) {
        acc += w as i64 * x as i64;
        debug_assert!(
            (-(1i64 << 47)..(1i64 << 47)).contains(&acc),
            "48-bit accumulator overflow"
        );
    }
    fx_rescale(acc, shift)
}

/// Integer two-sided shrinkage; exact in 16 bits.
#[inline]
fn fx_shrink(b: i16, theta: i16) -> i16 {
    if b > theta {
        b - theta
    } else if b < -theta {
        b + theta
    } else {
        0
    }
}

/// Quantize one float to a 16-bit word at `frac` fractional bits,
/// round-half-to-even, saturating.
pub fn quantize_value<T: Scalar>(v: T, frac: u32) -> i16 {
    let scaled = v.to_f64().expect("scalar to f64") * f64::powi(2.0, frac as i32);
    // f64 round-half-to-even.
    let r = scaled.round_ties_even();
    r.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn dequantize_value<T: Scalar>(q: i16, frac: u32) -> T {
    T::from_f64_lossy(q as f64 * f64::powi(2.0, -(frac as i32)))
}

/// Integer matrix (row-major), the quantized stage weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i16>,
}

impl IntMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<i16>) -> Self {
        assert_eq!(data.len(), rows * cols);
        IntMatrix { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[i16] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedStage {
    pub kind: StageKind,
    pub a: IntMatrix,
    pub theta: Vec<i16>,
    pub c: Vec<i16>,
    pub scale: StageScale,
}

/// Quantized network plus its gamma lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedNetwork {
    stages: Vec<FixedStage>,
    plan: ScalePlan,
    /// 65536-entry luma table indexed by the 16-bit word pattern.
    gamma_lut: Vec<u8>,
    patch_side: usize,
}

impl FixedNetwork {
    pub fn stages(&self) -> &[FixedStage] {
        &self.stages
    }

    pub fn plan(&self) -> &ScalePlan {
        &self.plan
    }

    pub fn gamma_lut(&self) -> &[u8] {
        &self.gamma_lut
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn coeff_dim(&self) -> usize {
        self.stages[0].a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].a.cols()
    }

    pub fn from_parts(
        stages: Vec<FixedStage>,
        plan: ScalePlan,
        gamma_lut: Vec<u8>,
        patch_side: usize,
    ) -> Result<Self> {
        if stages.len() < 3 {
            return Err(Error::invalid("need at least 3 stages"));
        }
        if gamma_lut.len() != 65536 {
            return Err(Error::invalid("gamma LUT must have 65536 entries"));
        }
        plan.validate()?;
        if plan.stages.len() != stages.len() {
            return Err(Error::invalid("plan/stage count mismatch"));
        }
        Ok(FixedNetwork {
            stages,
            plan,
            gamma_lut,
            patch_side,
        })
    }

    /// Quantize the raw patch into the input representation.
    pub fn quantize_input<T: Scalar>(&self, y: &[T]) -> Vec<i16> {
        y.iter()
            .map(|&v| quantize_value(v, self.plan.data_frac))
            .collect()
    }

    /// Gamma-reduce 16-bit luma words to 8 bits through the table.
    pub fn gamma_luma(&self, luma: &[i16]) -> Vec<u8> {
        luma.iter()
            .map(|&v| self.gamma_lut[v as u16 as usize])
            .collect()
    }
}

/// Largest fractional bits keeping `v_max` at or below half the 16-bit
/// range (headroom factor 2).
fn frac_for_activation(v_max: f64) -> u32 {
    if v_max <= 0.0 {
        return 14;
    }
    let f = (14.0 - v_max.log2()).floor();
    f.clamp(0.0, 15.0) as u32
}

/// Largest fractional bits representing `w_max` exactly within 16 bits.
fn frac_for_weight(w_max: f64) -> u32 {
    if w_max <= 0.0 {
        return 14;
    }
    let f = ((32767.0 / w_max).log2()).floor();
    f.clamp(0.0, 15.0) as u32
}

/// Observe activation magnitudes over a calibration set and pick
/// per-boundary fractional bits with a headroom factor of two.
///
/// The coefficient-space boundaries between M stages share one scale (the
/// carry is added across them); the observed maximum over all of them
/// decides it.
pub fn calibrate_scales<T: Scalar>(
    net: &NetworkParams<T>,
    calib_patches: &[Vec<T>],
) -> Result<ScalePlan> {
    if calib_patches.len() < 100 {
        return Err(Error::invalid("need at least 100 calibration patches"));
    }
    if net.output_space() != OutputSpace::Ycbcr422 {
        return Err(Error::invalid(
            "calibration targets the hardware path; fold the network to YCbCr output first",
        ));
    }
    let mut max_input = 0.0f64;
    let mut max_coeff = 0.0f64;
    let mut max_luma = 0.0f64;
    let area = net.patch_side() * net.patch_side();
    for y in calib_patches {
        for v in y {
            max_input = max_input.max(v.to_f64().unwrap().abs());
        }
        let (out, trace) = forward(net, y)?;
        for b in trace.pre_activations() {
            for v in b {
                let a = v.to_f64().unwrap().abs();
                if !a.is_finite() {
                    return Err(Error::invalid(
                        "unbounded activation in a middle stage during calibration",
                    ));
                }
                max_coeff = max_coeff.max(a);
            }
        }
        for z in trace.activations() {
            for v in z {
                max_coeff = max_coeff.max(v.to_f64().unwrap().abs());
            }
        }
        for &v in &out[..area] {
            let a = v.to_f64().unwrap().abs();
            if !a.is_finite() {
                return Err(Error::invalid("unbounded luma output during calibration"));
            }
            max_luma = max_luma.max(a);
        }
    }
    if max_input == 0.0 && max_coeff == 0.0 && max_luma == 0.0 {
        // Degenerate calibration input: fall back to the default scales.
        let stages = net
            .stages()
            .iter()
            .map(|_| StageScale {
                weight_frac: 14,
                in_frac: 14,
                out_frac: 14,
            })
            .collect();
        return Ok(ScalePlan {
            data_frac: 14,
            stages,
        });
    }
    // The delta fed to M MACCs is a difference of two shrink outputs, both
    // bounded by max_coeff.
    let coeff_frac = frac_for_activation(2.0 * max_coeff);
    let data_frac = frac_for_activation(max_input);
    let luma_frac = frac_for_activation(max_luma);
    let depth = net.depth();
    let stages = net
        .stages()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let weight_frac = frac_for_weight(s.a.max_abs().to_f64().unwrap());
            let (in_frac, out_frac) = match s.kind {
                StageKind::Init => (data_frac, coeff_frac),
                StageKind::Middle => (coeff_frac, coeff_frac),
                StageKind::Final => (coeff_frac, luma_frac),
            };
            debug_assert!(i < depth);
            StageScale {
                weight_frac,
                in_frac,
                out_frac,
            }
        })
        .collect();
    let plan = ScalePlan { data_frac, stages };
    plan.validate()?;
    Ok(plan)
}

fn quantize_matrix<T: Scalar>(m: &Matrix<T>, frac: u32, what: &str) -> Result<IntMatrix> {
    let scale = f64::powi(2.0, frac as i32);
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    for &v in m.data() {
        let s = v.to_f64().unwrap() * scale;
        let r = s.round_ties_even();
        if r > i16::MAX as f64 || r < i16::MIN as f64 {
            return Err(Error::invalid(format!(
                "{what}: weight {v} exceeds the representable range at {frac} frac bits; regenerate the plan"
            )));
        }
        data.push(r as i16);
    }
    Ok(IntMatrix::from_rows(m.rows(), m.cols(), data))
}

fn quantize_vec<T: Scalar>(v: &[T], frac: u32, what: &str) -> Result<Vec<i16>> {
    let scale = f64::powi(2.0, frac as i32);
    v.iter()
        .map(|&x| {
            let s = x.to_f64().unwrap() * scale;
            let r = s.round_ties_even();
            if r > i16::MAX as f64 || r < i16::MIN as f64 {
                Err(Error::invalid(format!(
                    "{what}: value {x} exceeds the representable range at {frac} frac bits; regenerate the plan"
                )))
            } else {
                Ok(r as i16)
            }
        })
        .collect()
}

/// Display-gamma lookup table for 16-bit luma at `luma_frac` fractional
/// bits: clamp to [0, 1], apply x^(1/2.2), quantize to 8 bits.
pub fn build_gamma_lut(luma_frac: u32) -> Vec<u8> {
    let scale = f64::powi(2.0, -(luma_frac as i32));
    (0..=u16::MAX)
        .map(|bits| {
            let v = (bits as i16) as f64 * scale;
            let clamped = v.clamp(0.0, 1.0);
            (255.0 * clamped.powf(1.0 / 2.2)).round() as u8
        })
        .collect()
}

/// Quantize a YCbCr-output network under a scale plan.
pub fn quantize_network<T: Scalar>(
    net: &NetworkParams<T>,
    plan: &ScalePlan,
) -> Result<FixedNetwork> {
    net.validate()?;
    plan.validate()?;
    if net.output_space() != OutputSpace::Ycbcr422 {
        return Err(Error::invalid(
            "quantization targets the hardware path; fold the network to YCbCr output first",
        ));
    }
    if plan.stages.len() != net.depth() {
        return Err(Error::invalid("plan does not match the network depth"));
    }
    let area = net.patch_side() * net.patch_side();
    let mut stages = Vec::with_capacity(net.depth());
    for (i, (stage, scale)) in net.stages().iter().zip(&plan.stages).enumerate() {
        let what = format!("stage {i}");
        let a = quantize_matrix(&stage.a, scale.weight_frac, &what)?;
        // Thresholds compare against the incoming carry; constants subtract
        // from the outgoing one.
        let theta = quantize_vec(&stage.theta, scale.in_frac, &what)?;
        let c = match stage.kind {
            StageKind::Final => {
                // Luma rows at the luma scale, chroma rows at the chroma
                // scale.
                let mut c = quantize_vec(&stage.c[..area], scale.out_frac, &what)?;
                c.extend(quantize_vec(&stage.c[area..], CHROMA_FRAC, &what)?);
                c
            }
            _ => quantize_vec(&stage.c, scale.out_frac, &what)?,
        };
        stages.push(FixedStage {
            kind: stage.kind,
            a,
            theta,
            c,
            scale: *scale,
        });
    }
    let lut = build_gamma_lut(plan.luma_frac());
    FixedNetwork::from_parts(stages, plan.clone(), lut, net.patch_side())
}

/// Fixed-point calculator output for one patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FxPatchOutput {
    /// 16-bit luma at `plan.luma_frac()` fractional bits, pre-gamma.
    pub luma: Vec<i16>,
    /// 8-bit 4:2:2 chroma (Cb then Cr) at [`CHROMA_FRAC`] fractional bits.
    pub chroma: Vec<u8>,
}

/// Run the quantized calculator chain on one quantized raw patch.
pub fn fx_forward(fnet: &FixedNetwork, raw_patch: &[i16]) -> Result<FxPatchOutput> {
    if raw_patch.len() != fnet.input_dim() {
        return Err(Error::invalid("patch length mismatch"));
    }
    let depth = fnet.depth();
    let area = fnet.patch_side * fnet.patch_side;

    // I stage.
    let init = &fnet.stages[0];
    let shift =
        fnet.plan.data_frac as i32 + init.scale.weight_frac as i32 - init.scale.out_frac as i32;
    let mut b: Vec<i16> = (0..init.a.rows())
        .map(|r| fx_macc(init.a.row(r), raw_patch, shift).saturating_sub(init.c[r]))
        .collect();
    let mut z_prev = vec![0i16; fnet.coeff_dim()];

    // M stages.
    for (idx, stage) in fnet.stages[1..depth - 1].iter().enumerate() {
        let z: Vec<i16> = b
            .iter()
            .zip(&stage.theta)
            .map(|(&bi, &ti)| fx_shrink(bi, ti))
            .collect();
        let is_last_mid = idx == depth - 3;
        if !is_last_mid {
            let delta: Vec<i16> = z
                .iter()
                .zip(&z_prev)
                .map(|(&a, &b)| a.saturating_sub(b))
                .collect();
            let shift = stage.scale.in_frac as i32 + stage.scale.weight_frac as i32
                - stage.scale.out_frac as i32;
            // Align the carry if the plan changes scale across the stage.
            let carry_shift = stage.scale.in_frac as i32 - stage.scale.out_frac as i32;
            let next: Vec<i16> = (0..stage.a.rows())
                .map(|r| {
                    let update = fx_macc(stage.a.row(r), &delta, shift);
                    let carry = if carry_shift == 0 {
                        b[r]
                    } else {
                        fx_rescale(b[r] as i64, carry_shift)
                    };
                    carry.saturating_add(update).saturating_sub(stage.c[r])
                })
                .collect();
            b = next;
        }
        z_prev = z;
    }

    // F stage: luma rows to 16-bit, chroma rows to 8-bit.
    let fin = &fnet.stages[depth - 1];
    let acc_frac = fin.scale.in_frac as i32 + fin.scale.weight_frac as i32;
    let mut luma = Vec::with_capacity(area);
    for r in 0..area {
        let v = fx_macc(fin.a.row(r), &z_prev, acc_frac - fin.scale.out_frac as i32);
        luma.push(v.saturating_sub(fin.c[r]));
    }
    let mut chroma = Vec::with_capacity(fin.a.rows() - area);
    for r in area..fin.a.rows() {
        let v = fx_macc(fin.a.row(r), &z_prev, acc_frac - CHROMA_FRAC as i32);
        let centered = v.saturating_sub(fin.c[r]);
        chroma.push(centered.clamp(0, 255) as u8);
    }
    Ok(FxPatchOutput { luma, chroma })
}

/// Clock-cycle and throughput prediction for the calculator pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// MACC cycles for one patch through the chain, 64 + 192 (T - 2).
    pub macc_cycles_per_patch: u64,
    /// Serial per-patch latency including the ~100-cycle per-layer
    /// overheads.
    pub cycles_per_patch: u64,
    pub patches_per_frame: u64,
    /// Steady-state frame cost: patches times the bottleneck stage
    /// initiation interval, plus one pipeline fill.
    pub cycles_per_frame: u64,
    /// Bottleneck stage initiation interval in cycles.
    pub bottleneck_cycles: u64,
    pub bottleneck_stage: String,
    pub clock_hz: f64,
    /// Steady-state pipelined throughput at `clock_hz`.
    pub fps: f64,
    /// Throughput if patches were processed strictly serially.
    pub fps_serial: f64,
}

/// Per-layer control overhead in cycles.
pub const LAYER_OVERHEAD_CYCLES: u64 = 100;

/// Predict per-frame cycle counts and throughput.
///
/// MACC operations are fully pipelined (one per cycle), so a stage's
/// occupancy equals its input length: 64 for I, 192 for M and F. The
/// steady-state initiation interval is the bottleneck stage; per-layer
/// overheads add to the serial latency and to the once-per-frame pipeline
/// fill.
pub fn cycle_model(
    t_layers: usize,
    frame_w: usize,
    frame_h: usize,
    stride: usize,
    clock_hz: f64,
) -> Result<CycleReport> {
    if !(matches!(stride, 2 | 4 | 8)) {
        return Err(Error::invalid("stride must be one of 2, 4, 8"));
    }
    if t_layers < 3 {
        return Err(Error::invalid("need T >= 3 layers"));
    }
    if frame_w < 8 || frame_h < 8 {
        return Err(Error::invalid("frame must be at least 8x8"));
    }
    if !(frame_w - 8).is_multiple_of(stride) || !(frame_h - 8).is_multiple_of(stride) {
        return Err(Error::invalid(
            "frame dimensions minus the patch size must be divisible by the stride",
        ));
    }
    if clock_hz <= 0.0 {
        return Err(Error::invalid("clock must be positive"));
    }
    let t = t_layers as u64;
    let macc = 64 + 192 * (t - 2);
    let serial = macc + LAYER_OVERHEAD_CYCLES * t;
    let cols = ((frame_w - 8) / stride + 1) as u64;
    let rows = ((frame_h - 8) / stride + 1) as u64;
    let patches = cols * rows;
    let bottleneck = 192u64; // max(64, 192); M and F both stream 192 inputs
    let cycles_per_frame = patches * bottleneck + serial;
    let fps = clock_hz / cycles_per_frame as f64;
    let fps_serial = clock_hz / (patches * serial) as f64;
    Ok(CycleReport {
        macc_cycles_per_patch: macc,
        cycles_per_patch: serial,
        patches_per_frame: patches,
        cycles_per_frame,
        bottleneck_cycles: bottleneck,
        bottleneck_stage: "M".to_string(),
        clock_hz,
        fps,
        fps_serial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::macc_reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rescale_rounds_half_to_even() {
        assert_eq!(fx_rescale(3, 1), 2); // 1.5 -> 2
        assert_eq!(fx_rescale(5, 1), 2); // 2.5 -> 2
        assert_eq!(fx_rescale(7, 1), 4); // 3.5 -> 4
        assert_eq!(fx_rescale(-3, 1), -2); // -1.5 -> -2
        assert_eq!(fx_rescale(-5, 1), -2); // -2.5 -> -2
        assert_eq!(fx_rescale(1 << 20, 30), 0);
        assert_eq!(fx_rescale(40000, 0), i16::MAX); // saturation
        assert_eq!(fx_rescale(-40000, 0), i16::MIN);
        assert_eq!(fx_rescale(100, -2), 400); // negative shift doubles
    }

    #[test]
    fn macc_trivials() {
        assert_eq!(fx_macc(&[1, 2, 3], &[0, 0, 0], 0), 0);
        // One-hot input selects the (rescaled) weight.
        assert_eq!(fx_macc(&[100, 200, 300], &[0, 1 << 4, 0], 4), 200);
    }

    #[test]
    fn macc_matches_big_integer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10_000 {
            let len = rng.gen_range(1..=192);
            let w: Vec<i16> = (0..len).map(|_| rng.gen()).collect();
            let x: Vec<i16> = (0..len).map(|_| rng.gen()).collect();
            let shift = rng.gen_range(0..32);
            assert_eq!(
                fx_macc(&w, &x, shift),
                macc_reference(&w, &x, shift as u32),
                "len={len} shift={shift}"
            );
        }
    }

    #[test]
    fn quantize_round_trip_on_grid() {
        // Values already on the grid survive exactly.
        for q in [-5i16, 0, 1, 1000, -32768, 32767] {
            let v: f64 = dequantize_value(q, 12);
            assert_eq!(quantize_value(v, 12), q);
        }
    }

    #[test]
    fn quantize_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let frac = 12u32;
        let step = f64::powi(2.0, -(frac as i32));
        for _ in 0..10_000 {
            let v = 4.0 * (rng.gen::<f64>() - 0.5);
            let q = quantize_value(v, frac);
            let back: f64 = dequantize_value(q, frac);
            assert!((v - back).abs() <= step / 2.0 + 1e-15);
        }
    }

    #[test]
    fn calibration_is_deterministic_and_quantize_checks_range() {
        use crate::network::{init_compressed, CompressionInit, OutputSpace};
        use crate::optics::{build_kernel_set, OpticsSpec, PhaseMaskSpec};
        use crate::sensor::CfaPattern;
        use crate::sparse::{build_concat_dictionary, dct_dictionary, lipschitz_upper, SolverConfig};

        let spec = OpticsSpec::<f64> {
            pupil_grid_size: 64,
            kernel_size: 7,
            ..OpticsSpec::default()
        };
        let kernels =
            build_kernel_set(&spec, &PhaseMaskSpec::default_ring(), &[2.0, 6.0]).unwrap();
        let d = dct_dictionary::<f64>(8, 192).unwrap();
        let dict = build_concat_dictionary(&d, &kernels, CfaPattern::Rggb, (0, 0)).unwrap();
        let l = lipschitz_upper(dict.projected()).unwrap();
        let solver = SolverConfig::new(0.02, l, 2);
        let net = init_compressed(
            &dict,
            &solver,
            4,
            OutputSpace::Ycbcr422,
            CompressionInit::Block(1),
        )
        .unwrap();
        let calib: Vec<Vec<f64>> = (0..120)
            .map(|i| (0..64).map(|j| ((i * 64 + j) % 113) as f64 / 113.0).collect())
            .collect();
        let a = calibrate_scales(&net, &calib).unwrap();
        let b = calibrate_scales(&net, &calib).unwrap();
        assert_eq!(a, b);
        assert!(calibrate_scales(&net, &calib[..50].to_vec()).is_err());
        // A weight outside the representable range at the planned scale
        // must be rejected with a regenerate hint.
        let mut tampered = net.clone();
        tampered.stages_mut()[1].a.data_mut()[0] = 3.0;
        let mut bad = a.clone();
        bad.stages[1].weight_frac = 15;
        let err = quantize_network(&tampered, &bad).unwrap_err();
        assert!(err.to_string().contains("regenerate"));
    }

    #[test]
    fn frac_selection_rules() {
        assert_eq!(frac_for_activation(0.0), 14);
        assert!(frac_for_activation(1.0) >= 13);
        assert_eq!(frac_for_activation(1.0), 14);
        assert_eq!(frac_for_activation(2.0), 13);
        // Weight of magnitude 1.0 fits at 15 bits: 32767/1 -> floor(log2) = 14.
        assert_eq!(frac_for_weight(1.0), 14);
    }

    #[test]
    fn cycle_model_reference_numbers() {
        let r = cycle_model(4, 1920, 1080, 8, 125e6).unwrap();
        assert_eq!(r.macc_cycles_per_patch, 448);
        assert_eq!(r.cycles_per_patch, 848);
        assert_eq!(r.patches_per_frame, 32_400);
        assert_eq!(r.bottleneck_cycles, 192);
        assert!((r.fps - 20.09).abs() < 0.05, "fps={}", r.fps);
        // The alternate 100 MHz clock preset lands at ~16 fps.
        let r100 = cycle_model(4, 1920, 1080, 8, 100e6).unwrap();
        assert!((r100.fps - 16.07).abs() < 0.05, "fps={}", r100.fps);
        // fps * cycles_per_frame returns the clock.
        assert!((r.fps * r.cycles_per_frame as f64 - 125e6).abs() < 1.0);
    }

    #[test]
    fn cycle_model_stride_counts() {
        let r2 = cycle_model(4, 1920, 1080, 2, 125e6).unwrap();
        assert_eq!(r2.patches_per_frame, 957 * 537);
        let r8 = cycle_model(4, 1920, 1080, 8, 125e6).unwrap();
        assert_eq!(r8.patches_per_frame, (1920 / 8) * (1080 / 8));
        assert!(cycle_model(4, 1920, 1080, 3, 125e6).is_err());
        assert!(cycle_model(4, 1921, 1080, 2, 125e6).is_err());
        assert!(cycle_model(2, 1920, 1080, 8, 125e6).is_err());
    }

    #[test]
    fn gamma_lut_endpoints() {
        let lut = build_gamma_lut(14);
        // Zero maps to zero; one (at 14 frac bits) maps to 255; negatives
        // clamp to zero.
        assert_eq!(lut[0], 0);
        assert_eq!(lut[(1i16 << 14) as u16 as usize], 255);
        assert_eq!(lut[(-100i16) as u16 as usize], 0);
        // Above 1.0 clamps to 255.
        assert_eq!(lut[i16::MAX as u16 as usize], 255);
        assert_eq!(lut.len(), 65536);
    }
}

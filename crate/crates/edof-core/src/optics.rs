//! Defocus model and point-spread-function generation.
//!
//! Out-of-focus imaging is modeled as a quadratic wavefront error in the
//! pupil plane: the pupil carries a phase `psi * rho^2` with `rho` the
//! normalized pupil radius, and the incoherent PSF is the squared magnitude
//! of its Fourier transform. A radially symmetric phase mask adds a fixed
//! per-channel phase on annular zones of the pupil, which is what makes the
//! three color channels blur differently and encodes depth into the raw
//! image.
//!
//! Conventions: the pupil disk spans the full FFT grid (unit radius at the
//! grid edge), and one output-plane sample equals one sensor pixel.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

pub const CHANNELS: usize = 3;

/// Geometry of the idealized camera.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + serde::de::DeserializeOwned")]
pub struct OpticsSpec<T> {
    /// Aperture radius R in meters.
    pub aperture_radius: T,
    /// Per-channel wavelengths (R, G, B) in meters.
    pub wavelengths: [T; CHANNELS],
    /// Nominal in-focus object depth z_n in meters.
    pub nominal_depth: T,
    /// Focal length f in meters.
    pub focal_length: T,
    /// Sensor plane distance z_img for an object at the nominal depth.
    pub image_distance: T,
    /// Samples per side of the square pupil grid.
    pub pupil_grid_size: usize,
    /// Side of the generated blur kernels in pixels (odd).
    pub kernel_size: usize,
}

impl<T: Scalar> Default for OpticsSpec<T> {
    fn default() -> Self {
        let f = T::from_f64_lossy(0.016);
        let z_n = T::from_f64_lossy(2.0);
        OpticsSpec {
            aperture_radius: T::from_f64_lossy(2.8e-3),
            wavelengths: [
                T::from_f64_lossy(0.61e-6),
                T::from_f64_lossy(0.53e-6),
                T::from_f64_lossy(0.47e-6),
            ],
            nominal_depth: z_n,
            focal_length: f,
            image_distance: thin_lens_image_distance(f, z_n),
            pupil_grid_size: 512,
            kernel_size: 15,
        }
    }
}

/// Sensor-side conjugate distance from the thin-lens equation.
pub fn thin_lens_image_distance<T: Scalar>(focal_length: T, object_depth: T) -> T {
    T::one() / (T::one() / focal_length - T::one() / object_depth)
}

impl<T: Scalar> OpticsSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.aperture_radius <= T::zero() {
            return Err(Error::invalid("aperture radius must be positive"));
        }
        if self.wavelengths.iter().any(|&l| l <= T::zero()) {
            return Err(Error::invalid("wavelengths must be positive"));
        }
        if self.nominal_depth <= T::zero()
            || self.focal_length <= T::zero()
            || self.image_distance <= T::zero()
        {
            return Err(Error::invalid("distances must be positive"));
        }
        if self.pupil_grid_size < 64 {
            return Err(Error::invalid("pupil grid must have at least 64 samples"));
        }
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid("kernel size must be odd and >= 3"));
        }
        if self.kernel_size > self.pupil_grid_size {
            return Err(Error::invalid("kernel size exceeds the computable field"));
        }
        Ok(())
    }

    /// Ideal image plane z_i for an object at depth `z_o` (diagnostic).
    pub fn ideal_image_plane(&self, object_depth: T) -> T {
        thin_lens_image_distance(self.focal_length, object_depth)
    }

    /// Diffraction cutoff frequency 2R/(lambda z_i) for a channel, at the
    /// nominal focus (diagnostic).
    pub fn cutoff_frequency(&self, channel: usize) -> T {
        let two = T::from_f64_lossy(2.0);
        two * self.aperture_radius / (self.wavelengths[channel] * self.image_distance)
    }
}

/// One annular zone of the phase mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + serde::de::DeserializeOwned")]
pub struct MaskRing<T> {
    /// Inner radius as a fraction of the pupil radius.
    pub inner: T,
    /// Outer radius as a fraction of the pupil radius.
    pub outer: T,
    /// Phase added inside the ring, one value per color channel, radians.
    pub phase: [T; CHANNELS],
}

/// Radially symmetric per-channel phase mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + serde::de::DeserializeOwned")]
pub struct PhaseMaskSpec<T> {
    pub rings: Vec<MaskRing<T>>,
    pub enabled: bool,
}

impl<T: Scalar> PhaseMaskSpec<T> {
    /// Clear aperture: no phase anywhere.
    pub fn disabled() -> Self {
        PhaseMaskSpec {
            rings: Vec::new(),
            enabled: false,
        }
    }

    /// Single etched annulus: one physical step depth whose phase at each
    /// channel follows material dispersion, `phi_c = phi_ref * lambda_ref /
    /// lambda_c`. In-focus PSFs stay nearly channel-independent while the
    /// defocused response diverges strongly, which is the behavior the
    /// production masks are designed for.
    pub fn dispersion_ring(
        inner: T,
        outer: T,
        phase_at_reference: T,
        wavelengths: &[T; CHANNELS],
    ) -> Self {
        let lambda_ref = wavelengths[1];
        let phase = [
            phase_at_reference * lambda_ref / wavelengths[0],
            phase_at_reference,
            phase_at_reference * lambda_ref / wavelengths[2],
        ];
        PhaseMaskSpec {
            rings: vec![MaskRing {
                inner,
                outer,
                phase,
            }],
            enabled: true,
        }
    }

    /// Default mask: half-wave (at green) annulus covering the outer 30% of
    /// the pupil radius. The exact production mask geometry is not public;
    /// this ring reproduces the qualitative channel diversity and is
    /// configurable.
    pub fn default_ring() -> Self {
        let spec = OpticsSpec::<T>::default();
        Self::dispersion_ring(T::from_f64_lossy(0.7), T::one(), T::PI(), &spec.wavelengths)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_outer = T::zero();
        for (i, ring) in self.rings.iter().enumerate() {
            if ring.inner < T::zero() || ring.outer > T::one() || ring.inner >= ring.outer {
                return Err(Error::invalid(format!(
                    "ring {i}: need 0 <= inner < outer <= 1"
                )));
            }
            if ring.inner < prev_outer {
                return Err(Error::invalid(format!("ring {i} overlaps its predecessor")));
            }
            prev_outer = ring.outer;
        }
        Ok(())
    }

    /// Total ring phase at normalized radius `rho` for `channel`.
    fn phase_at(&self, rho: T, channel: usize) -> T {
        if !self.enabled {
            return T::zero();
        }
        for ring in &self.rings {
            if rho >= ring.inner && rho <= ring.outer {
                return ring.phase[channel];
            }
        }
        T::zero()
    }
}

/// Complex pupil-plane grid; the unit pupil disk spans the full grid.
#[derive(Debug, Clone)]
pub struct PupilGrid<T> {
    size: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> PupilGrid<T> {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn at(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.size + col]
    }
}

/// Normalized pupil coordinate of a grid index (unit disk spans the grid).
fn grid_coord<T: Scalar>(index: usize, size: usize) -> T {
    let half = T::from_f64_lossy(size as f64 / 2.0);
    (T::from_f64_lossy(index as f64) - half) / half
}

/// Defocus parameter `psi = pi R^2 / lambda * (1/z_o - 1/z_n)`.
///
/// Positive when the object is closer than the nominal depth.
pub fn defocus_psi<T: Scalar>(spec: &OpticsSpec<T>, object_depth: T, wavelength: T) -> Result<T> {
    spec.validate()?;
    if object_depth <= T::zero() {
        return Err(Error::invalid("object depth must be positive"));
    }
    if wavelength <= T::zero() {
        return Err(Error::invalid("wavelength must be positive"));
    }
    let r2 = spec.aperture_radius * spec.aperture_radius;
    Ok(T::PI() * r2 / wavelength * (T::one() / object_depth - T::one() / spec.nominal_depth))
}

/// Complex pupil function for one channel: unit magnitude inside the unit
/// disk with the mask's ring phases applied, zero outside.
pub fn pupil_function<T: Scalar>(
    spec: &OpticsSpec<T>,
    mask: &PhaseMaskSpec<T>,
    channel: usize,
) -> Result<PupilGrid<T>> {
    spec.validate()?;
    mask.validate()?;
    if channel >= CHANNELS {
        return Err(Error::invalid("channel index out of range"));
    }
    let n = spec.pupil_grid_size;
    let mut data = vec![Complex::new(T::zero(), T::zero()); n * n];
    for r in 0..n {
        let y: T = grid_coord(r, n);
        for c in 0..n {
            let x: T = grid_coord(c, n);
            let rho2 = x * x + y * y;
            if rho2 <= T::one() {
                let phi = mask.phase_at(rho2.sqrt(), channel);
                data[r * n + c] = Complex::new(phi.cos(), phi.sin());
            }
        }
    }
    Ok(PupilGrid { size: n, data })
}

/// In-place 2-D FFT (rows, transpose, rows, transpose back).
fn fft2d<T: Scalar>(size: usize, data: &mut [Complex<T>]) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(size) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(size, data);
    for row in data.chunks_exact_mut(size) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(size, data);
}

fn transpose_square<T: Copy>(size: usize, data: &mut [Complex<T>]) {
    for r in 0..size {
        for c in r + 1..size {
            data.swap(r * size + c, c * size + r);
        }
    }
}

/// Incoherent PSF of a pupil with a quadratic defocus phase `psi * rho^2`:
/// the centered `kernel_size` crop of |FFT(pupil)|^2, renormalized to unit
/// sum.
pub fn psf_from_pupil<T: Scalar>(
    pupil: &PupilGrid<T>,
    psi: T,
    kernel_size: usize,
) -> Result<Matrix<T>> {
    if !psi.is_finite() {
        return Err(Error::invalid("psi must be finite"));
    }
    if kernel_size.is_multiple_of(2) || kernel_size < 3 {
        return Err(Error::invalid("kernel size must be odd and >= 3"));
    }
    let n = pupil.size;
    if kernel_size > n {
        return Err(Error::invalid("kernel size exceeds the computable field"));
    }
    let mut field = pupil.data.clone();
    for r in 0..n {
        let y: T = grid_coord(r, n);
        for c in 0..n {
            let v = field[r * n + c];
            if v.re == T::zero() && v.im == T::zero() {
                continue;
            }
            let x: T = grid_coord(c, n);
            let phi = psi * (x * x + y * y);
            field[r * n + c] = v * Complex::new(phi.cos(), phi.sin());
        }
    }
    fft2d(n, &mut field);
    // The diffraction plane wraps around DC at index 0; sample a centered
    // window with modular indexing (fftshift restricted to the crop).
    let half = (kernel_size / 2) as isize;
    let ni = n as isize;
    let mut kernel = Matrix::zeros(kernel_size, kernel_size);
    let mut sum = T::zero();
    for kr in -half..=half {
        for kc in -half..=half {
            let r = ((kr + ni) % ni) as usize;
            let c = ((kc + ni) % ni) as usize;
            let v = field[r * n + c];
            let inten = v.re * v.re + v.im * v.im;
            kernel[((kr + half) as usize, (kc + half) as usize)] = inten;
            sum += inten;
        }
    }
    if sum <= T::zero() {
        return Err(Error::invalid("pupil produced an all-zero PSF"));
    }
    kernel.scale_in_place(T::one() / sum);
    Ok(kernel)
}

/// Per-channel, per-psi blur kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernelSet<T> {
    psi_grid: Vec<T>,
    kernel_size: usize,
    /// `kernels[channel][psi_index]`.
    kernels: [Vec<Matrix<T>>; CHANNELS],
}

impl<T: Scalar> BlurKernelSet<T> {
    pub fn new(psi_grid: Vec<T>, kernels: [Vec<Matrix<T>>; CHANNELS]) -> Result<Self> {
        if psi_grid.is_empty() {
            return Err(Error::invalid("psi grid must be non-empty"));
        }
        if kernels.iter().any(|k| k.len() != psi_grid.len()) {
            return Err(Error::invalid("kernel count must match psi grid"));
        }
        let size = kernels[0][0].rows();
        for ch in &kernels {
            for k in ch {
                if k.rows() != size || k.cols() != size {
                    return Err(Error::invalid("kernels must share one size"));
                }
            }
        }
        Ok(BlurKernelSet {
            psi_grid,
            kernel_size: size,
            kernels,
        })
    }

    pub fn psi_grid(&self) -> &[T] {
        &self.psi_grid
    }

    pub fn len(&self) -> usize {
        self.psi_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi_grid.is_empty()
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn kernel(&self, channel: usize, psi_index: usize) -> &Matrix<T> {
        &self.kernels[channel][psi_index]
    }

    /// Replace one kernel (used to splice identity kernels into test sets).
    pub fn set_kernel(&mut self, channel: usize, psi_index: usize, kernel: Matrix<T>) {
        assert_eq!(kernel.rows(), self.kernel_size);
        assert_eq!(kernel.cols(), self.kernel_size);
        self.kernels[channel][psi_index] = kernel;
    }

    /// Index of the grid entry closest to `psi`.
    pub fn nearest_index(&self, psi: T) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, &g) in self.psi_grid.iter().enumerate() {
            let d = (g - psi).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Discrete delta kernel (identity under convolution).
pub fn delta_kernel<T: Scalar>(kernel_size: usize) -> Matrix<T> {
    let mut k = Matrix::zeros(kernel_size, kernel_size);
    k[(kernel_size / 2, kernel_size / 2)] = T::one();
    k
}

/// Default psi grid {1, ..., 8}.
pub fn default_psi_grid<T: Scalar>() -> Vec<T> {
    (1..=8).map(|v| T::from_f64_lossy(v as f64)).collect()
}

/// Generate the full kernel family: one PSF per (channel, psi).
///
/// The grid value `psi` is defined at the reference (green) wavelength;
/// channel `c` uses the effective value `psi * lambda_ref / lambda_c`.
pub fn build_kernel_set<T: Scalar>(
    spec: &OpticsSpec<T>,
    mask: &PhaseMaskSpec<T>,
    psi_grid: &[T],
) -> Result<BlurKernelSet<T>> {
    if psi_grid.is_empty() {
        return Err(Error::invalid("psi grid must be non-empty"));
    }
    if psi_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("psi grid must be strictly ascending"));
    }
    let lambda_ref = spec.wavelengths[1];
    let mut kernels: [Vec<Matrix<T>>; CHANNELS] = [Vec::new(), Vec::new(), Vec::new()];
    for (channel, out) in kernels.iter_mut().enumerate() {
        let pupil = pupil_function(spec, mask, channel)?;
        let scale = lambda_ref / spec.wavelengths[channel];
        for &psi in psi_grid {
            out.push(psf_from_pupil(&pupil, psi * scale, spec.kernel_size)?);
        }
    }
    BlurKernelSet::new(psi_grid.to_vec(), kernels)
}

/// Radius of gyration (second moment about the center of mass), in pixels.
pub fn radius_of_gyration<T: Scalar>(kernel: &Matrix<T>) -> T {
    let mut mass = T::zero();
    let mut mr = T::zero();
    let mut mc = T::zero();
    for r in 0..kernel.rows() {
        for c in 0..kernel.cols() {
            let v = kernel[(r, c)];
            mass += v;
            mr += v * T::from_f64_lossy(r as f64);
            mc += v * T::from_f64_lossy(c as f64);
        }
    }
    let (cr, cc) = (mr / mass, mc / mass);
    let mut second = T::zero();
    for r in 0..kernel.rows() {
        for c in 0..kernel.cols() {
            let dr = T::from_f64_lossy(r as f64) - cr;
            let dc = T::from_f64_lossy(c as f64) - cc;
            second += kernel[(r, c)] * (dr * dr + dc * dc);
        }
    }
    (second / mass).sqrt()
}

/// L2 distance between two kernels of equal size.
pub fn kernel_distance<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    let mut acc = T::zero();
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = *x - *y;
        acc += d * d;
    }
    acc.sqrt()
}

/// Summed pairwise inter-channel kernel distance over the whole grid;
/// the figure of merit for how strongly the mask separates the channels.
pub fn channel_separation<T: Scalar>(set: &BlurKernelSet<T>) -> T {
    let mut total = T::zero();
    for j in 0..set.len() {
        for a in 0..CHANNELS {
            for b in a + 1..CHANNELS {
                total += kernel_distance(set.kernel(a, j), set.kernel(b, j));
            }
        }
    }
    total
}

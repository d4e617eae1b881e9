//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "edof",
    version,
    about = "Phase-coded-aperture EDOF camera emulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Optics and mask overrides applied on top of the JSON config; the dotted
/// names map one-to-one onto the spec fields.
#[derive(Args, Debug, Clone)]
pub struct OpticsArgs {
    /// JSON experiment config; defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long = "optics.aperture-radius", value_name = "METERS")]
    pub aperture_radius: Option<f64>,
    /// Comma-separated R,G,B wavelengths in meters.
    #[arg(long = "optics.wavelengths", value_name = "R,G,B")]
    pub wavelengths: Option<String>,
    #[arg(long = "optics.nominal-depth", value_name = "METERS")]
    pub nominal_depth: Option<f64>,
    #[arg(long = "optics.focal-length", value_name = "METERS")]
    pub focal_length: Option<f64>,
    #[arg(long = "optics.image-distance", value_name = "METERS")]
    pub image_distance: Option<f64>,
    #[arg(long = "optics.pupil-grid-size")]
    pub pupil_grid_size: Option<usize>,
    #[arg(long = "optics.kernel-size")]
    pub kernel_size: Option<usize>,
    /// Phase mask toggle: "on" (config rings) or "off" (clear aperture).
    #[arg(long, value_name = "on|off")]
    pub mask: Option<String>,
    /// Mask rings as inner:outer:phaseR:phaseG:phaseB[;...], radii as pupil
    /// fractions, phases in radians.
    #[arg(long = "mask.rings", value_name = "SPEC")]
    pub mask_rings: Option<String>,
    /// CFA pattern override (RGGB, BGGR, GRBG, GBRG).
    #[arg(long)]
    pub pattern: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a coded capture: blur, mosaic, and noise a ground-truth
    /// image into a raw Bayer frame.
    Simulate {
        #[command(flatten)]
        optics: OpticsArgs,
        /// Ground-truth PNG (values treated as linear light).
        #[arg(long)]
        input: PathBuf,
        /// Defocus: a single psi value, a comma list (vertical bands), or
        /// @file.json with per-pixel grid indices.
        #[arg(long)]
        psi: String,
        /// Gaussian noise sigma in intensity units.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// RNG seed for the noise field.
        #[arg(long)]
        seed: u64,
        /// Output 16-bit PGM path (a .json CFA sidecar is written next to it).
        #[arg(long)]
        out: PathBuf,
    },
    /// Build or inspect dictionary containers.
    Dict {
        #[command(subcommand)]
        action: DictAction,
    },
    /// Reconstruct a raw frame with an iterative solver (reference path).
    Solve {
        #[command(flatten)]
        optics: OpticsArgs,
        #[arg(long)]
        raw: PathBuf,
        /// Dictionary container (EDDC); built from the config when absent.
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long, value_name = "ista|omp")]
        method: String,
        /// ISTA threshold steps.
        #[arg(long, default_value_t = 100)]
        iters: usize,
        /// Regularization weight (ISTA).
        #[arg(long)]
        mu: Option<f64>,
        /// Atom budget (OMP).
        #[arg(long, default_value_t = 12)]
        max_atoms: usize,
        /// Residual tolerance (OMP).
        #[arg(long, default_value_t = 1e-3)]
        residual_tol: f64,
        #[arg(long, default_value_t = 8)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
        /// Ground truth for the PSNR report.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Train an unrolled network on simulated captures of a PNG corpus.
    Train {
        #[command(flatten)]
        optics: OpticsArgs,
        /// Output network container (EDNN).
        #[arg(long)]
        net: PathBuf,
        /// Directory of ground-truth PNGs.
        #[arg(long)]
        data: PathBuf,
        /// Defocus for the training captures: one psi value or "mixed"
        /// (round-robin over the grid).
        #[arg(long, default_value = "8")]
        psi: String,
        /// Layer count T (I + middles + F).
        #[arg(long, default_value_t = 8)]
        t_layers: usize,
        /// Coefficient width: "full" (q*k, solver-equivalent) or "block"
        /// (one dictionary, the hardware size).
        #[arg(long, default_value = "block")]
        arch: String,
        /// Which psi block seeds the block-compressed initialization.
        #[arg(long)]
        init_block: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Cap on the number of training patches (0 = all).
        #[arg(long, default_value_t = 50_000)]
        max_patches: usize,
        #[arg(long)]
        seed: u64,
        /// Resume from an existing EDNN instead of dictionary init.
        #[arg(long)]
        init_net: Option<PathBuf>,
        /// Noise sigma applied to the simulated training captures.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
    },
    /// Convert a float network to the 16-bit calculator form.
    Quantize {
        #[command(flatten)]
        optics: OpticsArgs,
        /// Input EDNN.
        #[arg(long)]
        net: PathBuf,
        /// Directory of PNGs for scale calibration captures.
        #[arg(long)]
        calib: PathBuf,
        /// Defocus for the calibration captures (value or "mixed").
        #[arg(long, default_value = "mixed")]
        psi: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reconstruct a raw frame with a float or fixed network.
    Reconstruct {
        /// Raw 16-bit PGM (with its .json CFA sidecar).
        #[arg(long)]
        raw: PathBuf,
        /// Network container, EDNN or EDFX.
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
        /// Ground truth for the PSNR report.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Run the comparison table over a corpus of ground-truth PNGs.
    Evaluate {
        #[command(flatten)]
        optics: OpticsArgs,
        #[arg(long)]
        corpus: PathBuf,
        /// Float network (adds the net-float method).
        #[arg(long)]
        net: Option<PathBuf>,
        /// Fixed network (adds the net-fixed method).
        #[arg(long)]
        fixed: Option<PathBuf>,
        /// Dictionary (adds the ista and omp methods).
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Capture defocus (grid value).
        #[arg(long, default_value_t = 8.0)]
        psi: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 8)]
        stride: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict calculator clock cycles and throughput.
    Cycles {
        #[arg(long, visible_alias = "T")]
        t_layers: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        stride: usize,
        /// Clock in Hz; 125e6 and 100e6 are the two hardware presets.
        #[arg(long, default_value_t = 125e6)]
        clock: f64,
        /// Optional JSON report path (also printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)] // flattened arg structs dominate Build
pub enum DictAction {
    /// Build the clear + blurred concatenated dictionary.
    Build {
        #[command(flatten)]
        optics: OpticsArgs,
        #[arg(long)]
        out: PathBuf,
        /// Atom count k (3 * m^2).
        #[arg(long, default_value_t = 192)]
        atoms: usize,
        #[arg(long, default_value_t = 8)]
        patch_side: usize,
        /// Load kernels from an EDKS file instead of generating them.
        #[arg(long)]
        kernels: Option<PathBuf>,
        /// Also write the kernel set to this EDKS path.
        #[arg(long)]
        save_kernels: Option<PathBuf>,
    },
    /// Print a summary of a dictionary container.
    Inspect {
        #[arg(long)]
        dict: PathBuf,
    },
}

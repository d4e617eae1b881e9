//! Subcommand implementations.

use std::path::{Path, PathBuf};

use edof_core::container;
use edof_core::fixedpoint::{calibrate_scales, cycle_model, quantize_network};
use edof_core::imageio;
use edof_core::network::{
    init_compressed, init_from_ista, sgd_train, CompressionInit, OutputSpace, TrainConfig,
};
use edof_core::optics::{build_kernel_set, BlurKernelSet, MaskRing, PhaseMaskSpec};
use edof_core::pipeline::{
    psnr, reconstruct_image, reconstruct_with_solver, Engine, ReconstructionJob, SolverKind,
};
use edof_core::sensor::{add_noise, blur_image, demosaic_bilinear, mosaic, DepthMap};
use edof_core::sparse::{
    build_concat_dictionary, dct_dictionary, lipschitz_upper, ConcatDictionary,
};
use edof_core::synth::capture_patch_pairs;
use edof_core::{Error, Result, RgbImage64};

use crate::args::{Cli, Command, DictAction, OpticsArgs};
use crate::config::{fnv1a_hex, ExperimentConfig};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            optics,
            input,
            psi,
            noise_sigma,
            seed,
            out,
        } => simulate(&optics, &input, &psi, noise_sigma, seed, &out),
        Command::Dict { action } => match action {
            DictAction::Build {
                optics,
                out,
                atoms,
                patch_side,
                kernels,
                save_kernels,
            } => dict_build(
                &optics,
                &out,
                atoms,
                patch_side,
                kernels.as_deref(),
                save_kernels.as_deref(),
            ),
            DictAction::Inspect { dict } => dict_inspect(&dict),
        },
        Command::Solve {
            optics,
            raw,
            dict,
            method,
            iters,
            mu,
            max_atoms,
            residual_tol,
            stride,
            out,
            gt,
        } => solve(
            &optics,
            &raw,
            dict.as_deref(),
            &method,
            iters,
            mu,
            max_atoms,
            residual_tol,
            stride,
            &out,
            gt.as_deref(),
        ),
        Command::Train {
            optics,
            net,
            data,
            psi,
            t_layers,
            arch,
            init_block,
            lr,
            epochs,
            batch_size,
            max_patches,
            seed,
            init_net,
            noise_sigma,
        } => train(TrainJob {
            optics,
            net,
            data,
            psi,
            t_layers,
            arch,
            init_block,
            lr,
            epochs,
            batch_size,
            max_patches,
            seed,
            init_net,
            noise_sigma,
        }),
        Command::Quantize {
            optics,
            net,
            calib,
            psi,
            out,
            seed,
        } => quantize(&optics, &net, &calib, &psi, &out, seed),
        Command::Reconstruct {
            raw,
            net,
            stride,
            out,
            gt,
        } => reconstruct(&raw, &net, stride, &out, gt.as_deref()),
        Command::Evaluate {
            optics,
            corpus,
            net,
            fixed,
            dict,
            psi,
            noise_sigma,
            stride,
            seed,
            out,
        } => evaluate(EvalJob {
            optics,
            corpus,
            net,
            fixed,
            dict,
            psi,
            noise_sigma,
            stride,
            seed,
            out,
        }),
        Command::Cycles {
            t_layers,
            width,
            height,
            stride,
            clock,
            out,
        } => cycles(t_layers, width, height, stride, clock, out.as_deref()),
    }
}

// ------------------------------------------------------------- helpers --

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "missing {what}: {}",
            path.display()
        )))
    }
}

/// Apply CLI overrides to the loaded config.
fn effective_config(args: &OpticsArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(args.config.as_deref())?;
    if let Some(v) = args.aperture_radius {
        cfg.optics.aperture_radius = v;
    }
    if let Some(spec) = &args.wavelengths {
        let parts: Vec<f64> = spec
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("wavelengths: {e}")))?;
        if parts.len() != 3 {
            return Err(Error::invalid("wavelengths needs exactly three values"));
        }
        cfg.optics.wavelengths = [parts[0], parts[1], parts[2]];
    }
    if let Some(v) = args.nominal_depth {
        cfg.optics.nominal_depth = v;
    }
    if let Some(v) = args.focal_length {
        cfg.optics.focal_length = v;
    }
    if let Some(v) = args.image_distance {
        cfg.optics.image_distance = v;
    }
    if let Some(v) = args.pupil_grid_size {
        cfg.optics.pupil_grid_size = v;
    }
    if let Some(v) = args.kernel_size {
        cfg.optics.kernel_size = v;
    }
    if let Some(rings) = &args.mask_rings {
        cfg.mask.rings = parse_rings(rings)?;
        cfg.mask.enabled = true;
    }
    match args.mask.as_deref() {
        Some("on") => cfg.mask.enabled = true,
        Some("off") => cfg.mask.enabled = false,
        Some(other) => {
            return Err(Error::invalid(format!(
                "--mask must be on|off, got {other}"
            )))
        }
        None => {}
    }
    if let Some(p) = &args.pattern {
        edof_core::sensor::CfaPattern::from_name(p)?;
        cfg.pattern = p.to_uppercase();
    }
    Ok(cfg)
}

fn parse_rings(spec: &str) -> Result<Vec<MaskRing<f64>>> {
    spec.split(';')
        .map(|ring| {
            let parts: Vec<f64> = ring
                .split(':')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("ring '{ring}': {e}")))?;
            if parts.len() != 5 {
                return Err(Error::invalid(
                    "each ring needs inner:outer:phaseR:phaseG:phaseB",
                ));
            }
            Ok(MaskRing {
                inner: parts[0],
                outer: parts[1],
                phase: [parts[2], parts[3], parts[4]],
            })
        })
        .collect()
}

fn kernels_for(cfg: &ExperimentConfig) -> Result<BlurKernelSet<f64>> {
    let mask = if cfg.mask.enabled {
        cfg.mask.clone()
    } else {
        PhaseMaskSpec::disabled()
    };
    build_kernel_set(&cfg.optics, &mask, &cfg.psi_grid)
}

fn dictionary_for(
    cfg: &ExperimentConfig,
    atoms: usize,
    patch_side: usize,
) -> Result<ConcatDictionary<f64>> {
    let kernels = kernels_for(cfg)?;
    let clear = dct_dictionary::<f64>(patch_side, atoms)?;
    build_concat_dictionary(&clear, &kernels, cfg.pattern()?, (0, 0))
}

/// Write the run manifest beside the primary output: configuration hash,
/// versions, seeds, and file lists. Deliberately no timestamps, so reruns
/// are byte-identical.
fn write_manifest(
    subcommand: &str,
    cfg: Option<&ExperimentConfig>,
    seed: Option<u64>,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let primary = outputs
        .first()
        .ok_or_else(|| Error::invalid("manifest needs at least one output"))?;
    let config_json = cfg.map(|c| c.canonical_json()).unwrap_or_default();
    let manifest = serde_json::json!({
        "subcommand": subcommand,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": fnv1a_hex(config_json.as_bytes()),
        "seed": seed,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let mut path = primary.as_os_str().to_owned();
    path.push(".manifest.json");
    std::fs::write(
        PathBuf::from(path),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(())
}

/// Grid index for a psi value given as a float (nearest entry must match
/// to 1e-9 to avoid silent misconfiguration).
fn psi_value_to_index(grid: &[f64], value: f64) -> Result<usize> {
    let (idx, best) = grid
        .iter()
        .enumerate()
        .map(|(i, &g)| (i, (g - value).abs()))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("non-empty grid");
    if best > 1e-9 {
        return Err(Error::invalid(format!(
            "psi {value} is not on the grid {grid:?}"
        )));
    }
    Ok(idx)
}

#[derive(serde::Deserialize)]
struct PsiMapFile {
    width: usize,
    height: usize,
    indices: Vec<usize>,
}

/// Parse the --psi argument: single value, comma list (vertical bands,
/// left to right), or @file.json with explicit indices.
fn parse_psi(spec: &str, grid: &[f64], width: usize, height: usize) -> Result<DepthMap> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::invalid(format!("missing psi map {path}")))?;
        let map: PsiMapFile =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("psi map: {e}")))?;
        if map.indices.iter().any(|&i| i >= grid.len()) {
            return Err(Error::invalid("psi map index outside the grid"));
        }
        return DepthMap::per_pixel(map.width, map.height, map.indices);
    }
    let values: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(format!("psi '{spec}': {e}")))?;
    if values.len() == 1 {
        return Ok(DepthMap::Uniform(psi_value_to_index(grid, values[0])?));
    }
    // Vertical bands of equal width.
    let indices: Vec<usize> = values
        .iter()
        .map(|&v| psi_value_to_index(grid, v))
        .collect::<Result<_>>()?;
    let bands = indices.len();
    let mut map = vec![0usize; width * height];
    for r in 0..height {
        for c in 0..width {
            let band = (c * bands / width).min(bands - 1);
            map[r * width + c] = indices[band];
        }
    }
    DepthMap::per_pixel(width, height, map)
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::invalid(format!(
            "missing directory: {}",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no .png files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

/// Per-image psi indices for a corpus: a fixed value or a round-robin
/// sweep over the grid ("mixed").
fn corpus_psi_indices(spec: &str, grid: &[f64], count: usize) -> Result<Vec<usize>> {
    if spec == "mixed" {
        Ok((0..count).map(|i| i % grid.len()).collect())
    } else {
        let value: f64 = spec
            .parse()
            .map_err(|e| Error::invalid(format!("psi '{spec}': {e}")))?;
        let idx = psi_value_to_index(grid, value)?;
        Ok(vec![idx; count])
    }
}

// ---------------------------------------------------------- subcommands --

fn simulate(
    args: &OpticsArgs,
    input: &Path,
    psi: &str,
    noise_sigma: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    require_file(input, "input image")?;
    let cfg = effective_config(args)?;
    let img: RgbImage64 = imageio::load_png(input)?;
    let kernels = kernels_for(&cfg)?;
    let depth = parse_psi(psi, &cfg.psi_grid, img.width(), img.height())?;
    let blurred = blur_image(&img, &kernels, &depth)?;
    let raw = mosaic(&blurred, cfg.pattern()?)?;
    let raw = add_noise(&raw, noise_sigma, seed)?;
    imageio::save_raw_pgm(&raw, out)?;
    write_manifest("simulate", Some(&cfg), Some(seed), &[input], &[out])?;
    println!(
        "{}",
        serde_json::json!({
            "out": out.display().to_string(),
            "width": raw.width(),
            "height": raw.height(),
            "pattern": raw.pattern().name(),
        })
    );
    Ok(())
}

fn dict_build(
    args: &OpticsArgs,
    out: &Path,
    atoms: usize,
    patch_side: usize,
    kernels_in: Option<&Path>,
    kernels_out: Option<&Path>,
) -> Result<()> {
    let cfg = effective_config(args)?;
    let kernels = match kernels_in {
        Some(path) => {
            require_file(path, "kernel container")?;
            container::load_kernels::<f64>(path)?
        }
        None => kernels_for(&cfg)?,
    };
    if let Some(path) = kernels_out {
        container::save_kernels(&kernels, path)?;
    }
    let clear = dct_dictionary::<f64>(patch_side, atoms)?;
    let dict = build_concat_dictionary(&clear, &kernels, cfg.pattern()?, (0, 0))?;
    container::save_dictionary(&dict, out)?;
    let mut outputs: Vec<&Path> = vec![out];
    if let Some(k) = kernels_out {
        outputs.push(k);
    }
    let inputs: Vec<&Path> = kernels_in.into_iter().collect();
    write_manifest("dict-build", Some(&cfg), None, &inputs, &outputs)?;
    println!(
        "{}",
        serde_json::json!({
            "out": out.display().to_string(),
            "atom_dim": dict.clear().atom_dim(),
            "atoms": dict.clear().atom_count(),
            "blocks": dict.block_count(),
            "psi_grid": dict.psi_grid(),
        })
    );
    Ok(())
}

fn dict_inspect(path: &Path) -> Result<()> {
    require_file(path, "dictionary container")?;
    let dict = container::load_dictionary::<f64>(path)?;
    let p = dict.projected();
    println!(
        "{}",
        serde_json::json!({
            "atom_dim": dict.clear().atom_dim(),
            "atoms": dict.clear().atom_count(),
            "blocks": dict.block_count(),
            "psi_grid": dict.psi_grid(),
            "pattern": dict.pattern().name(),
            "projected_shape": [p.rows(), p.cols()],
            "lipschitz_upper": lipschitz_upper(p)?,
        })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    args: &OpticsArgs,
    raw_path: &Path,
    dict_path: Option<&Path>,
    method: &str,
    iters: usize,
    mu: Option<f64>,
    max_atoms: usize,
    residual_tol: f64,
    stride: usize,
    out: &Path,
    gt: Option<&Path>,
) -> Result<()> {
    require_file(raw_path, "raw frame")?;
    let cfg = effective_config(args)?;
    let raw = imageio::load_raw_pgm::<f64>(raw_path)?;
    let dict = match dict_path {
        Some(p) => {
            require_file(p, "dictionary container")?;
            container::load_dictionary::<f64>(p)?
        }
        None => dictionary_for(&cfg, 192, 8)?,
    };
    let gt_img = gt.map(imageio::load_png::<f64>).transpose()?;
    let solver = match method {
        "ista" => {
            let l = lipschitz_upper(dict.projected())?;
            let mut solver_cfg = cfg.solver_config(l);
            solver_cfg.iterations = iters;
            if let Some(m) = mu {
                solver_cfg.mu = m;
            }
            SolverKind::Ista(solver_cfg)
        }
        "omp" => SolverKind::Omp {
            max_atoms,
            residual_tol,
        },
        other => return Err(Error::invalid(format!("unknown method {other}"))),
    };
    let (img, report) = reconstruct_with_solver(&raw, &dict, &solver, stride, gt_img.as_ref())?;
    imageio::save_png(&img, out)?;
    let mut inputs: Vec<&Path> = vec![raw_path];
    inputs.extend(dict_path);
    write_manifest("solve", Some(&cfg), None, &inputs, &[out])?;
    println!(
        "{}",
        serde_json::json!({
            "psnr_db": report.psnr_db,
            "seconds": report.seconds,
            "patches": report.patches,
            "mode": report.mode,
        })
    );
    Ok(())
}

struct TrainJob {
    optics: OpticsArgs,
    net: PathBuf,
    data: PathBuf,
    psi: String,
    t_layers: usize,
    arch: String,
    init_block: Option<usize>,
    lr: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    max_patches: usize,
    seed: u64,
    init_net: Option<PathBuf>,
    noise_sigma: f64,
}

fn train(job: TrainJob) -> Result<()> {
    let cfg = effective_config(&job.optics)?;
    let files = list_pngs(&job.data)?;
    let images: Vec<RgbImage64> = files
        .iter()
        .map(|p| imageio::load_png(p))
        .collect::<Result<_>>()?;
    let kernels = kernels_for(&cfg)?;
    let psi_indices = corpus_psi_indices(&job.psi, &cfg.psi_grid, images.len())?;
    let pairs = capture_patch_pairs(
        &images,
        &kernels,
        &psi_indices,
        cfg.pattern()?,
        2,
        job.noise_sigma,
        job.max_patches,
        job.seed,
    )?;
    let val_len = ((pairs.len() as f64) * cfg.train.val_fraction).round() as usize;
    let val_len = val_len.clamp(1, pairs.len() / 2);
    let (train_set, val_set) = pairs.split_at(pairs.len() - val_len);

    let dict = {
        let clear = dct_dictionary::<f64>(8, 192)?;
        build_concat_dictionary(&clear, &kernels, cfg.pattern()?, (0, 0))?
    };
    let init = match &job.init_net {
        Some(path) => {
            require_file(path, "initial network")?;
            container::load_network::<f64>(path)?
        }
        None => {
            let l = lipschitz_upper(dict.projected())?;
            let mut solver_cfg = cfg.solver_config(l);
            solver_cfg.iterations = job.t_layers.saturating_sub(2).max(1);
            match job.arch.as_str() {
                "full" => init_from_ista(&dict, &solver_cfg, job.t_layers, OutputSpace::Rgb192)?,
                "block" => {
                    let block = job.init_block.unwrap_or(dict.block_count() - 1);
                    init_compressed(
                        &dict,
                        &solver_cfg,
                        job.t_layers,
                        OutputSpace::Rgb192,
                        CompressionInit::Block(block),
                    )?
                }
                other => {
                    return Err(Error::invalid(format!(
                        "--arch must be full|block, got {other}"
                    )))
                }
            }
        }
    };
    let train_cfg = TrainConfig {
        learning_rate: job.lr.unwrap_or(cfg.train.learning_rate),
        batch_size: job.batch_size.unwrap_or(cfg.train.batch_size),
        epochs: job.epochs.unwrap_or(cfg.train.epochs),
        seed: job.seed,
        dataset_path: Some(job.data.display().to_string()),
    };
    let report = sgd_train(&init, train_set, val_set, &train_cfg)?;
    container::save_network(&report.params, &job.net)?;
    let input_refs: Vec<&Path> = files.iter().map(|p| p.as_path()).collect();
    write_manifest(
        "train",
        Some(&cfg),
        Some(job.seed),
        &input_refs,
        &[&job.net],
    )?;
    println!(
        "{}",
        serde_json::json!({
            "net": job.net.display().to_string(),
            "patches": train_set.len(),
            "initial_val_loss": report.initial_val_loss,
            "best_val_loss": report.best_val_loss,
            "epochs": report.epoch_train_losses,
        })
    );
    Ok(())
}

fn quantize(
    args: &OpticsArgs,
    net_path: &Path,
    calib_dir: &Path,
    psi: &str,
    out: &Path,
    seed: u64,
) -> Result<()> {
    require_file(net_path, "network container")?;
    let cfg = effective_config(args)?;
    let net = container::load_network::<f64>(net_path)?;
    let net = net.to_ycbcr_output()?;
    let files = list_pngs(calib_dir)?;
    let images: Vec<RgbImage64> = files
        .iter()
        .map(|p| imageio::load_png(p))
        .collect::<Result<_>>()?;
    let kernels = kernels_for(&cfg)?;
    let psi_indices = corpus_psi_indices(psi, &cfg.psi_grid, images.len())?;
    let pairs = capture_patch_pairs(
        &images,
        &kernels,
        &psi_indices,
        cfg.pattern()?,
        4,
        0.0,
        0,
        seed,
    )?;
    let calib: Vec<Vec<f64>> = pairs.into_iter().map(|(y, _)| y).collect();
    let plan = calibrate_scales(&net, &calib)?;
    let fnet = quantize_network(&net, &plan)?;
    container::save_fixed_network(&fnet, out)?;
    write_manifest("quantize", Some(&cfg), Some(seed), &[net_path], &[out])?;
    println!(
        "{}",
        serde_json::json!({
            "out": out.display().to_string(),
            "data_frac": plan.data_frac,
            "stage_fracs": plan.stages.iter().map(|s| [s.weight_frac, s.in_frac, s.out_frac]).collect::<Vec<_>>(),
            "calib_patches": calib.len(),
        })
    );
    Ok(())
}

fn reconstruct(
    raw_path: &Path,
    net_path: &Path,
    stride: usize,
    out: &Path,
    gt: Option<&Path>,
) -> Result<()> {
    require_file(raw_path, "raw frame")?;
    require_file(net_path, "network container")?;
    let raw = imageio::load_raw_pgm::<f64>(raw_path)?;
    let gt_img = gt.map(imageio::load_png::<f64>).transpose()?;
    let loaded = container::load_network_any::<f64>(net_path)?;
    let job = match &loaded {
        container::NetworkFile::Float(net) => ReconstructionJob {
            raw: &raw,
            engine: Engine::Float(net),
            stride,
            ground_truth: gt_img.as_ref(),
        },
        container::NetworkFile::Fixed(fnet) => ReconstructionJob {
            raw: &raw,
            engine: Engine::Fixed(fnet),
            stride,
            ground_truth: gt_img.as_ref(),
        },
    };
    let (img, report) = reconstruct_image(&job)?;
    imageio::save_png(&img, out)?;
    let report_json = serde_json::json!({
        "psnr_db": report.psnr_db,
        "seconds": report.seconds,
        "patches": report.patches,
        "mode": report.mode,
    });
    let mut report_path = out.as_os_str().to_owned();
    report_path.push(".report.json");
    std::fs::write(
        PathBuf::from(report_path),
        serde_json::to_string_pretty(&report_json).expect("report serializes") + "\n",
    )?;
    write_manifest("reconstruct", None, None, &[raw_path, net_path], &[out])?;
    println!("{report_json}");
    Ok(())
}

struct EvalJob {
    optics: OpticsArgs,
    corpus: PathBuf,
    net: Option<PathBuf>,
    fixed: Option<PathBuf>,
    dict: Option<PathBuf>,
    psi: f64,
    noise_sigma: f64,
    stride: usize,
    seed: u64,
    out: PathBuf,
}

fn evaluate(job: EvalJob) -> Result<()> {
    let cfg = effective_config(&job.optics)?;
    let files = list_pngs(&job.corpus)?;
    let kernels = kernels_for(&cfg)?;
    let psi_idx = psi_value_to_index(&cfg.psi_grid, job.psi)?;
    let net = job
        .net
        .as_deref()
        .map(|p| {
            require_file(p, "network container")?;
            container::load_network::<f64>(p)
        })
        .transpose()?;
    let fixed = job
        .fixed
        .as_deref()
        .map(|p| {
            require_file(p, "fixed network container")?;
            container::load_fixed_network(p)
        })
        .transpose()?;
    let dict = job
        .dict
        .as_deref()
        .map(|p| {
            require_file(p, "dictionary container")?;
            container::load_dictionary::<f64>(p)
        })
        .transpose()?;
    let solver_l = dict
        .as_ref()
        .map(|d| lipschitz_upper(d.projected()))
        .transpose()?;

    let mut csv = String::from("image,method,psnr_db,seconds\n");
    for path in &files {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let gt: RgbImage64 = imageio::load_png(path)?;
        let blurred = blur_image(&gt, &kernels, &DepthMap::Uniform(psi_idx))?;
        let raw = mosaic(&blurred, cfg.pattern()?)?;
        let raw = add_noise(&raw, job.noise_sigma, job.seed)?;

        // Baseline: plain demosaic of the blurred capture.
        let started = std::time::Instant::now();
        let baseline = demosaic_bilinear(&raw);
        let base_db = psnr(&baseline, &gt, 1.0)?;
        csv.push_str(&format!(
            "{name},blurred,{:.4},{:.6}\n",
            base_db,
            started.elapsed().as_secs_f64()
        ));

        if let (Some(d), Some(l)) = (dict.as_ref(), solver_l) {
            let solver = SolverKind::Ista(cfg.solver_config(l));
            let (_, rep) = reconstruct_with_solver(&raw, d, &solver, job.stride, Some(&gt))?;
            csv.push_str(&format!(
                "{name},ista,{:.4},{:.6}\n",
                rep.psnr_db.unwrap_or(0.0),
                rep.seconds
            ));
            let solver = SolverKind::Omp {
                max_atoms: 12,
                residual_tol: 1e-3,
            };
            let (_, rep) = reconstruct_with_solver(&raw, d, &solver, job.stride, Some(&gt))?;
            csv.push_str(&format!(
                "{name},omp,{:.4},{:.6}\n",
                rep.psnr_db.unwrap_or(0.0),
                rep.seconds
            ));
        }
        if let Some(n) = net.as_ref() {
            let job_spec = ReconstructionJob {
                raw: &raw,
                engine: Engine::Float(n),
                stride: job.stride,
                ground_truth: Some(&gt),
            };
            let (_, rep) = reconstruct_image(&job_spec)?;
            csv.push_str(&format!(
                "{name},net-float,{:.4},{:.6}\n",
                rep.psnr_db.unwrap_or(0.0),
                rep.seconds
            ));
        }
        if let Some(f) = fixed.as_ref() {
            let job_spec = ReconstructionJob {
                raw: &raw,
                engine: Engine::Fixed(f),
                stride: job.stride,
                ground_truth: Some(&gt),
            };
            let (_, rep) = reconstruct_image(&job_spec)?;
            csv.push_str(&format!(
                "{name},net-fixed,{:.4},{:.6}\n",
                rep.psnr_db.unwrap_or(0.0),
                rep.seconds
            ));
        }
    }
    std::fs::write(&job.out, &csv)?;
    let input_refs: Vec<&Path> = files.iter().map(|p| p.as_path()).collect();
    write_manifest(
        "evaluate",
        Some(&cfg),
        Some(job.seed),
        &input_refs,
        &[&job.out],
    )?;
    println!(
        "{}",
        serde_json::json!({
            "out": job.out.display().to_string(),
            "images": files.len(),
        })
    );
    Ok(())
}

fn cycles(
    t_layers: usize,
    width: usize,
    height: usize,
    stride: usize,
    clock: f64,
    out: Option<&Path>,
) -> Result<()> {
    let report = cycle_model(t_layers, width, height, stride, clock)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = out {
        std::fs::write(path, json.clone() + "\n")?;
        write_manifest("cycles", None, None, &[], &[path])?;
    }
    println!("{json}");
    Ok(())
}

//! End-to-end CLI tests: artifact round trips, error contracts, and
//! determinism of the fast subcommands.

use std::path::{Path, PathBuf};
use std::process::Command;

use edof_core::imageio;
use edof_core::synth::test_image;
use edof_core::RgbImage64;

fn edof() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edof"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("edof_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_corpus(dir: &Path, count: usize, size: usize, seed0: u64) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..count)
        .map(|i| {
            let img: RgbImage64 = test_image(size, size, seed0 + i as u64);
            let path = dir.join(format!("img{i:02}.png"));
            imageio::save_png(&img, &path).unwrap();
            path
        })
        .collect()
}

#[test]
fn cycles_reports_reference_numbers() {
    let out = edof()
        .args([
            "cycles",
            "--t-layers",
            "4",
            "--width",
            "1920",
            "--height",
            "1080",
            "--stride",
            "8",
            "--clock",
            "125e6",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["macc_cycles_per_patch"], 448);
    assert_eq!(report["patches_per_frame"], 32_400);
    let fps = report["fps"].as_f64().unwrap();
    assert!((14.0..=22.0).contains(&fps), "fps {fps}");
}

#[test]
fn missing_network_file_is_exit_2_with_json() {
    let dir = workdir("missing_net");
    let img: RgbImage64 = test_image(32, 32, 5);
    let png = dir.join("gt.png");
    imageio::save_png(&img, &png).unwrap();
    let raw = dir.join("raw.pgm");
    let sim = edof()
        .args([
            "simulate",
            "--input",
            png.to_str().unwrap(),
            "--psi",
            "8",
            "--seed",
            "1",
            "--out",
            raw.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        sim.status.success(),
        "{}",
        String::from_utf8_lossy(&sim.stderr)
    );
    let missing = dir.join("does-not-exist.ednn");
    let out = edof()
        .args([
            "reconstruct",
            "--raw",
            raw.to_str().unwrap(),
            "--net",
            missing.to_str().unwrap(),
            "--stride",
            "8",
            "--out",
            dir.join("out.png").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    let message = err["message"].as_str().unwrap();
    assert!(
        message.contains("does-not-exist.ednn"),
        "error must name the path: {message}"
    );
}

#[test]
fn unknown_flag_is_exit_2_with_json() {
    let out = edof().args(["cycles", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "usage");
}

#[test]
fn simulate_writes_pgm_with_sidecar_and_manifest() {
    let dir = workdir("simulate");
    let img: RgbImage64 = test_image(24, 20, 9);
    let png = dir.join("gt.png");
    imageio::save_png(&img, &png).unwrap();
    let raw = dir.join("capture.pgm");
    let out = edof()
        .args([
            "simulate",
            "--input",
            png.to_str().unwrap(),
            "--psi",
            "4",
            "--noise-sigma",
            "0.005",
            "--seed",
            "77",
            "--out",
            raw.to_str().unwrap(),
            "--pattern",
            "GRBG",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(raw.is_file());
    assert!(dir.join("capture.pgm.json").is_file());
    assert!(dir.join("capture.pgm.manifest.json").is_file());
    let loaded = imageio::load_raw_pgm::<f64>(&raw).unwrap();
    assert_eq!(loaded.pattern().name(), "GRBG");
    // The manifest carries no timestamps: identical reruns are
    // byte-identical.
    let first = std::fs::read(&raw).unwrap();
    let first_manifest = std::fs::read(dir.join("capture.pgm.manifest.json")).unwrap();
    let rerun = edof()
        .args([
            "simulate",
            "--input",
            png.to_str().unwrap(),
            "--psi",
            "4",
            "--noise-sigma",
            "0.005",
            "--seed",
            "77",
            "--out",
            raw.to_str().unwrap(),
            "--pattern",
            "GRBG",
        ])
        .output()
        .unwrap();
    assert!(rerun.status.success());
    assert_eq!(std::fs::read(&raw).unwrap(), first);
    assert_eq!(
        std::fs::read(dir.join("capture.pgm.manifest.json")).unwrap(),
        first_manifest
    );
}

#[test]
fn simulate_psi_bands_and_map() {
    let dir = workdir("psi_forms");
    let img: RgbImage64 = test_image(32, 16, 3);
    let png = dir.join("gt.png");
    imageio::save_png(&img, &png).unwrap();
    // Bands.
    let ok = edof()
        .args([
            "simulate",
            "--input",
            png.to_str().unwrap(),
            "--psi",
            "2,4,6,8",
            "--seed",
            "0",
            "--out",
            dir.join("bands.pgm").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    // Explicit map.
    let map = serde_json::json!({
        "width": 32,
        "height": 16,
        "indices": vec![3usize; 32 * 16],
    });
    let map_path = dir.join("depth.json");
    std::fs::write(&map_path, map.to_string()).unwrap();
    let ok = edof()
        .args([
            "simulate",
            "--input",
            png.to_str().unwrap(),
            "--psi",
            &format!("@{}", map_path.display()),
            "--seed",
            "0",
            "--out",
            dir.join("mapped.pgm").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    // Off-grid psi is refused.
    let bad = edof()
        .args([
            "simulate",
            "--input",
            png.to_str().unwrap(),
            "--psi",
            "3.7",
            "--seed",
            "0",
            "--out",
            dir.join("bad.pgm").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn full_pipeline_smoke() {
    let dir = workdir("pipeline");
    let corpus = dir.join("train");
    write_corpus(&corpus, 3, 48, 100);
    let eval_dir = dir.join("eval");
    write_corpus(&eval_dir, 2, 40, 900);

    // Dictionary with a reduced pupil grid to keep the test quick.
    let dict = dir.join("dict.eddc");
    let kernels = dir.join("kernels.edks");
    let ok = edof()
        .args([
            "dict",
            "build",
            "--out",
            dict.to_str().unwrap(),
            "--optics.pupil-grid-size",
            "128",
            "--save-kernels",
            kernels.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(dict.is_file() && kernels.is_file());

    let inspect = edof()
        .args(["dict", "inspect", "--dict", dict.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(inspect.status.success());
    let info: serde_json::Value = serde_json::from_slice(&inspect.stdout).unwrap();
    assert_eq!(info["atoms"], 192);
    assert_eq!(info["blocks"], 8);

    // Tiny training run.
    let net = dir.join("net.ednn");
    let ok = edof()
        .args([
            "train",
            "--net",
            net.to_str().unwrap(),
            "--data",
            corpus.to_str().unwrap(),
            "--optics.pupil-grid-size",
            "128",
            "--psi",
            "8",
            "--t-layers",
            "4",
            "--epochs",
            "2",
            "--max-patches",
            "800",
            "--seed",
            "11",
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(
        report["best_val_loss"].as_f64().unwrap() <= report["initial_val_loss"].as_f64().unwrap()
    );

    // Quantize against a calibration corpus.
    let fixed = dir.join("net.edfx");
    let ok = edof()
        .args([
            "quantize",
            "--net",
            net.to_str().unwrap(),
            "--calib",
            corpus.to_str().unwrap(),
            "--optics.pupil-grid-size",
            "128",
            "--out",
            fixed.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );

    // Simulate a capture of a held-out image and reconstruct both ways.
    let gt = eval_dir.join("img00.png");
    let raw = dir.join("capture.pgm");
    let ok = edof()
        .args([
            "simulate",
            "--input",
            gt.to_str().unwrap(),
            "--psi",
            "8",
            "--optics.pupil-grid-size",
            "128",
            "--seed",
            "5",
            "--out",
            raw.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );

    for (net_file, out_name) in [(&net, "float.png"), (&fixed, "fixed.png")] {
        let out_png = dir.join(out_name);
        let ok = edof()
            .args([
                "reconstruct",
                "--raw",
                raw.to_str().unwrap(),
                "--net",
                net_file.to_str().unwrap(),
                "--stride",
                "4",
                "--out",
                out_png.to_str().unwrap(),
                "--gt",
                gt.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            ok.status.success(),
            "{}",
            String::from_utf8_lossy(&ok.stderr)
        );
        let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
        assert!(report["psnr_db"].as_f64().unwrap() > 5.0);
        assert!(out_png.is_file());
        let mut report_path = out_png.as_os_str().to_owned();
        report_path.push(".report.json");
        assert!(PathBuf::from(report_path).is_file());
    }

    // Solver path.
    let ok = edof()
        .args([
            "solve",
            "--raw",
            raw.to_str().unwrap(),
            "--dict",
            dict.to_str().unwrap(),
            "--method",
            "ista",
            "--iters",
            "30",
            "--stride",
            "8",
            "--out",
            dir.join("ista.png").to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );

    // Evaluation table over the corpus.
    let csv = dir.join("results.csv");
    let ok = edof()
        .args([
            "evaluate",
            "--corpus",
            eval_dir.to_str().unwrap(),
            "--net",
            net.to_str().unwrap(),
            "--fixed",
            fixed.to_str().unwrap(),
            "--dict",
            dict.to_str().unwrap(),
            "--optics.pupil-grid-size",
            "128",
            "--stride",
            "8",
            "--out",
            csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let table = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "image,method,psnr_db,seconds");
    // 2 images x 5 methods (blurred, ista, omp, net-float, net-fixed).
    assert_eq!(lines.len(), 1 + 2 * 5);
}

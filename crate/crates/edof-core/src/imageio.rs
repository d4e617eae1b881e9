//! Image file I/O: 8-bit PNG for RGB frames, 16-bit PGM plus a JSON
//! sidecar for raw Bayer frames.
//!
//! Pixel values are linear light in [0, 1]; 8-bit files scale by 255 and
//! 16-bit raw files by 65535. The PGM sidecar `<path>.json` names the CFA
//! pattern.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sensor::{CfaPattern, RawBayerImage, RgbImage};
use crate::{Error, Result, Scalar};

fn to_byte<T: Scalar>(v: T) -> u8 {
    let x = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
    (x * 255.0).round() as u8
}

/// Write an RGB image as an 8-bit PNG.
pub fn save_png<T: Scalar>(img: &RgbImage<T>, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Format(format!("png header: {e}")))?;
    let mut data = Vec::with_capacity(3 * img.width() * img.height());
    for r in 0..img.height() {
        for c in 0..img.width() {
            for ch in 0..3 {
                data.push(to_byte(img.at(ch, r, c)));
            }
        }
    }
    writer
        .write_image_data(&data)
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    Ok(())
}

/// Load an 8-bit PNG as a linear-light RGB image (gray and alpha variants
/// are widened/dropped).
pub fn load_png<T: Scalar>(path: &Path) -> Result<RgbImage<T>> {
    let file = File::open(path)?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format("only 8-bit PNG input is supported".into()));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => {
            return Err(Error::Format(format!(
                "unsupported PNG color type {other:?}"
            )));
        }
    };
    let mut img = RgbImage::new(w, h);
    let scale = T::from_f64_lossy(1.0 / 255.0);
    for r in 0..h {
        for c in 0..w {
            let base = (r * w + c) * channels;
            let (rv, gv, bv) = match channels {
                3 | 4 => (buf[base], buf[base + 1], buf[base + 2]),
                _ => (buf[base], buf[base], buf[base]),
            };
            img.set(0, r, c, T::from_f64_lossy(rv as f64) * scale);
            img.set(1, r, c, T::from_f64_lossy(gv as f64) * scale);
            img.set(2, r, c, T::from_f64_lossy(bv as f64) * scale);
        }
    }
    Ok(img)
}

#[derive(Serialize, Deserialize)]
struct RawSidecar {
    pattern: String,
    width: usize,
    height: usize,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Write a raw frame as a 16-bit big-endian PGM (Netpbm `P5`, maxval
/// 65535) with a `<path>.json` sidecar naming the CFA pattern.
pub fn save_raw_pgm<T: Scalar>(raw: &RawBayerImage<T>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", raw.width(), raw.height())?;
    for &v in raw.samples() {
        let x = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
        let q = (x * 65535.0).round() as u16;
        out.write_all(&q.to_be_bytes())?;
    }
    out.flush()?;
    let sidecar = RawSidecar {
        pattern: raw.pattern().name().to_string(),
        width: raw.width(),
        height: raw.height(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Load a 16-bit PGM raw frame and its CFA sidecar.
pub fn load_raw_pgm<T: Scalar>(path: &Path) -> Result<RawBayerImage<T>> {
    let mut content = Vec::new();
    File::open(path)?.read_to_end(&mut content)?;
    let (w, h, maxval, offset) = parse_pgm_header(&content)?;
    if maxval != 65535 {
        return Err(Error::Format("raw PGM must use maxval 65535".into()));
    }
    let need = w * h * 2;
    if content.len() < offset + need {
        return Err(Error::Format("truncated PGM data".into()));
    }
    let scale = T::from_f64_lossy(1.0 / 65535.0);
    let samples: Vec<T> = content[offset..offset + need]
        .chunks_exact(2)
        .map(|b| T::from_f64_lossy(u16::from_be_bytes([b[0], b[1]]) as f64) * scale)
        .collect();
    let sidecar: RawSidecar =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(path)).map_err(|_| {
            Error::Format(format!("missing sidecar {}", sidecar_path(path).display()))
        })?)
        .map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    if sidecar.width != w || sidecar.height != h {
        return Err(Error::Format("sidecar dimensions disagree with PGM".into()));
    }
    let pattern = CfaPattern::from_name(&sidecar.pattern)?;
    RawBayerImage::new(w, h, samples, pattern)
}

fn parse_pgm_header(content: &[u8]) -> Result<(usize, usize, u32, usize)> {
    if content.len() < 2 || &content[..2] != b"P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            while pos < content.len() && content[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < content.len() && content[pos] == b'#' {
                while pos < content.len() && content[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < content.len() && content[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PGM header".into()));
        }
        *field = std::str::from_utf8(&content[start..pos])
            .map_err(|_| Error::Format("malformed PGM header".into()))?
            .parse()
            .map_err(|_| Error::Format("malformed PGM header".into()))?;
    }
    // Exactly one whitespace byte separates the header from the data.
    pos += 1;
    Ok((fields[0], fields[1], fields[2] as u32, pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::test_image;

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = std::env::temp_dir().join("edof_imageio_test_png");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.png");
        let img: RgbImage<f64> = test_image(20, 14, 5);
        save_png(&img, &path).unwrap();
        let back: RgbImage<f64> = load_png(&path).unwrap();
        assert_eq!(back.width(), 20);
        assert_eq!(back.height(), 14);
        for ch in 0..3 {
            for (a, b) in img.plane(ch).iter().zip(back.plane(ch)) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_round_trip_with_sidecar() {
        let dir = std::env::temp_dir().join("edof_imageio_test_pgm");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("frame.pgm");
        let img: RgbImage<f64> = test_image(16, 12, 9);
        let raw = crate::sensor::mosaic(&img, CfaPattern::Grbg).unwrap();
        save_raw_pgm(&raw, &path).unwrap();
        let back: RawBayerImage<f64> = load_raw_pgm(&path).unwrap();
        assert_eq!(back.pattern(), CfaPattern::Grbg);
        for (a, b) in raw.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_rejects_wrong_maxval() {
        let dir = std::env::temp_dir().join("edof_imageio_test_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x01\x02\x03").unwrap();
        assert!(load_raw_pgm::<f64>(&path).is_err());
    }
}

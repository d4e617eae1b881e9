//! Magic-tagged binary containers for kernels, dictionaries, and networks.
//!
//! All multi-byte integers and floats are little-endian; matrices are
//! row-major f64 (or i16 for quantized stages). Formats:
//!
//! * `EDKS` — blur kernel sets: header, psi grid, then kernels ordered
//!   channel-major.
//! * `EDDC` — concatenated dictionaries: header, psi grid, clear atoms,
//!   then one blurred block per psi. The CFA projection and pursuit matrix
//!   are rebuilt on load.
//! * `EDNN` — float networks: per-stage kind, dimensions, weights,
//!   thresholds, constants.
//! * `EDFX` — quantized networks: scale plan, 16-bit stage parameters, and
//!   the 65536-entry gamma table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::fixedpoint::{FixedNetwork, FixedStage, IntMatrix, ScalePlan, StageScale};
use crate::linalg::Matrix;
use crate::network::{NetworkParams, OutputSpace, Stage, StageKind};
use crate::optics::{BlurKernelSet, CHANNELS};
use crate::sensor::CfaPattern;
use crate::sparse::{ConcatDictionary, Dictionary};
use crate::{Error, Result, Scalar};

const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn i16(&mut self, v: i16) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64_slice<T: Scalar>(&mut self, vs: &[T]) -> Result<()> {
        for v in vs {
            self.f64(v.to_f64().expect("scalar to f64"))?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn i16(&mut self) -> Result<i16> {
        let mut b = [0u8; 2];
        self.0.read_exact(&mut b)?;
        Ok(i16::from_le_bytes(b))
    }

    fn f64_vec<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(T::from_f64_lossy(self.f64()?));
        }
        Ok(out)
    }

    fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        if &b != magic {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}, found {:?}",
                std::str::from_utf8(magic).unwrap_or("?"),
                String::from_utf8_lossy(&b)
            )));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }
}

fn pattern_code(p: CfaPattern) -> u32 {
    match p {
        CfaPattern::Rggb => 0,
        CfaPattern::Bggr => 1,
        CfaPattern::Grbg => 2,
        CfaPattern::Gbrg => 3,
    }
}

fn pattern_from_code(c: u32) -> Result<CfaPattern> {
    Ok(match c {
        0 => CfaPattern::Rggb,
        1 => CfaPattern::Bggr,
        2 => CfaPattern::Grbg,
        3 => CfaPattern::Gbrg,
        _ => return Err(Error::Format(format!("unknown CFA code {c}"))),
    })
}

// ---------------------------------------------------------------- EDKS --

pub fn save_kernels<T: Scalar>(set: &BlurKernelSet<T>, path: &Path) -> Result<()> {
    let mut w = Writer(BufWriter::new(File::create(path)?));
    w.0.write_all(b"EDKS")?;
    w.u32(VERSION)?;
    w.u32(CHANNELS as u32)?;
    w.u32(set.len() as u32)?;
    w.u32(set.kernel_size() as u32)?;
    w.f64_slice(set.psi_grid())?;
    for ch in 0..CHANNELS {
        for j in 0..set.len() {
            w.f64_slice(set.kernel(ch, j).data())?;
        }
    }
    w.0.flush()?;
    Ok(())
}

pub fn load_kernels<T: Scalar>(path: &Path) -> Result<BlurKernelSet<T>> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    r.expect_magic(b"EDKS")?;
    let channels = r.u32()? as usize;
    if channels != CHANNELS {
        return Err(Error::Format(format!(
            "expected 3 channels, found {channels}"
        )));
    }
    let count = r.u32()? as usize;
    let size = r.u32()? as usize;
    let psi_grid: Vec<T> = r.f64_vec(count)?;
    let mut kernels: [Vec<Matrix<T>>; CHANNELS] = [Vec::new(), Vec::new(), Vec::new()];
    for out in kernels.iter_mut() {
        for _ in 0..count {
            let data = r.f64_vec(size * size)?;
            out.push(Matrix::from_rows(size, size, data));
        }
    }
    BlurKernelSet::new(psi_grid, kernels)
}

// ---------------------------------------------------------------- EDDC --

pub fn save_dictionary<T: Scalar>(dict: &ConcatDictionary<T>, path: &Path) -> Result<()> {
    let mut w = Writer(BufWriter::new(File::create(path)?));
    w.0.write_all(b"EDDC")?;
    w.u32(VERSION)?;
    let clear = dict.clear();
    w.u32(clear.atom_dim() as u32)?;
    w.u32(clear.atom_count() as u32)?;
    w.u32(dict.block_count() as u32)?;
    w.u32(pattern_code(dict.pattern()))?;
    w.u32(dict.lattice_phase().0 as u32)?;
    w.u32(dict.lattice_phase().1 as u32)?;
    w.f64_slice(dict.psi_grid())?;
    w.f64_slice(clear.atoms().data())?;
    for j in 0..dict.block_count() {
        w.f64_slice(dict.blurred_block(j).data())?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn load_dictionary<T: Scalar>(path: &Path) -> Result<ConcatDictionary<T>> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    r.expect_magic(b"EDDC")?;
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    let q = r.u32()? as usize;
    let pattern = pattern_from_code(r.u32()?)?;
    let phase = (r.u32()? as usize, r.u32()? as usize);
    let psi_grid: Vec<T> = r.f64_vec(q)?;
    let side = ((n / CHANNELS) as f64).sqrt() as usize;
    if CHANNELS * side * side != n {
        return Err(Error::Format("atom dim is not 3 * side^2".into()));
    }
    let clear = Dictionary::new(Matrix::from_rows(n, k, r.f64_vec(n * k)?), side)
        .map_err(|e| Error::Format(format!("clear dictionary: {e}")))?;
    let mut blocks = Vec::with_capacity(q);
    for _ in 0..q {
        blocks.push(Matrix::from_rows(n, k, r.f64_vec(n * k)?));
    }
    ConcatDictionary::from_parts(clear, psi_grid, blocks, pattern, phase)
}

// ---------------------------------------------------------------- EDNN --

fn kind_code(k: StageKind) -> u32 {
    match k {
        StageKind::Init => 0,
        StageKind::Middle => 1,
        StageKind::Final => 2,
    }
}

fn kind_from_code(c: u32) -> Result<StageKind> {
    Ok(match c {
        0 => StageKind::Init,
        1 => StageKind::Middle,
        2 => StageKind::Final,
        _ => return Err(Error::Format(format!("unknown stage kind {c}"))),
    })
}

pub fn save_network<T: Scalar>(net: &NetworkParams<T>, path: &Path) -> Result<()> {
    let mut w = Writer(BufWriter::new(File::create(path)?));
    w.0.write_all(b"EDNN")?;
    w.u32(VERSION)?;
    w.u32(net.depth() as u32)?;
    w.u32(net.coeff_dim() as u32)?;
    w.u32(match net.output_space() {
        OutputSpace::Rgb192 => 0,
        OutputSpace::Ycbcr422 => 1,
    })?;
    w.u32(net.patch_side() as u32)?;
    for stage in net.stages() {
        w.u32(kind_code(stage.kind))?;
        w.u32(stage.a.rows() as u32)?;
        w.u32(stage.a.cols() as u32)?;
        w.f64_slice(stage.a.data())?;
        w.u32(stage.theta.len() as u32)?;
        w.f64_slice(&stage.theta)?;
        w.u32(stage.c.len() as u32)?;
        w.f64_slice(&stage.c)?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn load_network<T: Scalar>(path: &Path) -> Result<NetworkParams<T>> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    r.expect_magic(b"EDNN")?;
    read_network_body(&mut r)
}

fn read_network_body<T: Scalar, R: Read>(r: &mut Reader<R>) -> Result<NetworkParams<T>> {
    let depth = r.u32()? as usize;
    let _m = r.u32()?;
    let output_space = match r.u32()? {
        0 => OutputSpace::Rgb192,
        1 => OutputSpace::Ycbcr422,
        c => return Err(Error::Format(format!("unknown output space {c}"))),
    };
    let patch_side = r.u32()? as usize;
    let mut stages = Vec::with_capacity(depth);
    for _ in 0..depth {
        let kind = kind_from_code(r.u32()?)?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let a = Matrix::from_rows(rows, cols, r.f64_vec(rows * cols)?);
        let tl = r.u32()? as usize;
        let theta = r.f64_vec(tl)?;
        let cl = r.u32()? as usize;
        let c = r.f64_vec(cl)?;
        stages.push(Stage { kind, a, theta, c });
    }
    NetworkParams::from_stages(stages, output_space, patch_side)
        .map_err(|e| Error::Format(format!("network: {e}")))
}

// ---------------------------------------------------------------- EDFX --

pub fn save_fixed_network(fnet: &FixedNetwork, path: &Path) -> Result<()> {
    let mut w = Writer(BufWriter::new(File::create(path)?));
    w.0.write_all(b"EDFX")?;
    w.u32(VERSION)?;
    w.u32(fnet.depth() as u32)?;
    w.u32(fnet.coeff_dim() as u32)?;
    w.u32(fnet.patch_side() as u32)?;
    w.u32(fnet.plan().data_frac)?;
    for (stage, scale) in fnet.stages().iter().zip(&fnet.plan().stages) {
        w.u32(kind_code(stage.kind))?;
        w.u32(scale.weight_frac)?;
        w.u32(scale.in_frac)?;
        w.u32(scale.out_frac)?;
        w.u32(stage.a.rows() as u32)?;
        w.u32(stage.a.cols() as u32)?;
        for &v in stage.a.data() {
            w.i16(v)?;
        }
        w.u32(stage.theta.len() as u32)?;
        for &v in &stage.theta {
            w.i16(v)?;
        }
        w.u32(stage.c.len() as u32)?;
        for &v in &stage.c {
            w.i16(v)?;
        }
    }
    w.0.write_all(fnet.gamma_lut())?;
    w.0.flush()?;
    Ok(())
}

pub fn load_fixed_network(path: &Path) -> Result<FixedNetwork> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    r.expect_magic(b"EDFX")?;
    read_fixed_body(&mut r)
}

fn read_fixed_body<R: Read>(r: &mut Reader<R>) -> Result<FixedNetwork> {
    let depth = r.u32()? as usize;
    let _m = r.u32()?;
    let patch_side = r.u32()? as usize;
    let data_frac = r.u32()?;
    let mut stages = Vec::with_capacity(depth);
    let mut scales = Vec::with_capacity(depth);
    for _ in 0..depth {
        let kind = kind_from_code(r.u32()?)?;
        let scale = StageScale {
            weight_frac: r.u32()?,
            in_frac: r.u32()?,
            out_frac: r.u32()?,
        };
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.i16()?);
        }
        let a = IntMatrix::from_rows(rows, cols, data);
        let tl = r.u32()? as usize;
        let mut theta = Vec::with_capacity(tl);
        for _ in 0..tl {
            theta.push(r.i16()?);
        }
        let cl = r.u32()? as usize;
        let mut c = Vec::with_capacity(cl);
        for _ in 0..cl {
            c.push(r.i16()?);
        }
        scales.push(scale);
        stages.push(FixedStage {
            kind,
            a,
            theta,
            c,
            scale,
        });
    }
    let mut lut = vec![0u8; 65536];
    r.0.read_exact(&mut lut)?;
    let plan = ScalePlan {
        data_frac,
        stages: scales,
    };
    FixedNetwork::from_parts(stages, plan, lut, patch_side)
        .map_err(|e| Error::Format(format!("fixed network: {e}")))
}

/// A network file of either flavor, distinguished by its magic.
pub enum NetworkFile<T> {
    Float(NetworkParams<T>),
    Fixed(FixedNetwork),
}

/// Load `EDNN` or `EDFX` by sniffing the magic bytes.
pub fn load_network_any<T: Scalar>(path: &Path) -> Result<NetworkFile<T>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    let mut r = Reader(BufReader::new(file));
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    match &magic {
        b"EDNN" => Ok(NetworkFile::Float(read_network_body(&mut r)?)),
        b"EDFX" => Ok(NetworkFile::Fixed(read_fixed_body(&mut r)?)),
        other => Err(Error::Format(format!(
            "not a network container: magic {:?}",
            String::from_utf8_lossy(other)
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{calibrate_scales, quantize_network};
    use crate::network::{init_from_ista, OutputSpace};
    use crate::optics::{build_kernel_set, OpticsSpec, PhaseMaskSpec};
    use crate::sparse::{build_concat_dictionary, dct_dictionary, lipschitz_upper, SolverConfig};

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("edof_container_{name}"));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_setup() -> (BlurKernelSet<f64>, ConcatDictionary<f64>) {
        let spec = OpticsSpec::<f64> {
            pupil_grid_size: 64,
            kernel_size: 7,
            ..OpticsSpec::default()
        };
        let set = build_kernel_set(&spec, &PhaseMaskSpec::default_ring(), &[2.0, 6.0]).unwrap();
        let d = dct_dictionary::<f64>(8, 192).unwrap();
        let dict =
            build_concat_dictionary(&d, &set, crate::sensor::CfaPattern::Rggb, (0, 0)).unwrap();
        (set, dict)
    }

    #[test]
    fn kernel_set_round_trip() {
        let (set, _) = small_setup();
        let path = tmpdir("ks").join("kernels.edks");
        save_kernels(&set, &path).unwrap();
        let back: BlurKernelSet<f64> = load_kernels(&path).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn dictionary_round_trip() {
        let (_, dict) = small_setup();
        let path = tmpdir("dc").join("dict.eddc");
        save_dictionary(&dict, &path).unwrap();
        let back: ConcatDictionary<f64> = load_dictionary(&path).unwrap();
        assert_eq!(dict.clear().atoms(), back.clear().atoms());
        assert_eq!(dict.psi_grid(), back.psi_grid());
        assert_eq!(dict.projected(), back.projected());
        assert_eq!(dict.pattern(), back.pattern());
    }

    #[test]
    fn network_round_trip_both_flavors() {
        let (_, dict) = small_setup();
        let l = lipschitz_upper(dict.projected()).unwrap();
        let cfg = SolverConfig::new(0.02, l, 1);
        let net = init_from_ista(&dict, &cfg, 4, OutputSpace::Ycbcr422).unwrap();
        let dir = tmpdir("nn");
        let path = dir.join("net.ednn");
        save_network(&net, &path).unwrap();
        let back: NetworkParams<f64> = load_network(&path).unwrap();
        assert_eq!(net, back);

        let calib: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                (0..64)
                    .map(|j| ((i * 64 + j) % 101) as f64 / 101.0)
                    .collect()
            })
            .collect();
        let plan = calibrate_scales(&net, &calib).unwrap();
        let fnet = quantize_network(&net, &plan).unwrap();
        let fpath = dir.join("net.edfx");
        save_fixed_network(&fnet, &fpath).unwrap();
        let fback = load_fixed_network(&fpath).unwrap();
        assert_eq!(fnet, fback);

        // Sniffing picks the right flavor.
        assert!(matches!(
            load_network_any::<f64>(&path).unwrap(),
            NetworkFile::Float(_)
        ));
        assert!(matches!(
            load_network_any::<f64>(&fpath).unwrap(),
            NetworkFile::Fixed(_)
        ));
    }

    #[test]
    fn magic_mismatch_reports_format_error() {
        let dir = tmpdir("bad");
        let path = dir.join("junk.bin");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00rest").unwrap();
        assert!(matches!(load_kernels::<f64>(&path), Err(Error::Format(_))));
    }
}

//! Binary container for complex arrays plus JSON sidecars.
//!
//! Layout, all little-endian:
//!
//! | bytes        | content                         |
//! |--------------|---------------------------------|
//! | 4            | magic `KRCX`                    |
//! | 4 (u32)      | format version                  |
//! | 4 (u32)      | number of dimensions `d`        |
//! | 8·d (u64)    | shape, row-major                |
//! | 16·∏shape    | `(re, im)` f64 pairs            |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, LiouvillianSpectrum};
use crate::model::ModelParams;
use crate::trajectories::{EnsembleSpec, TrajectoryRecord};

pub const MAGIC: [u8; 4] = *b"KRCX";
pub const FORMAT_VERSION: u32 = 1;

/// Dense row-major complex array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexArray {
    pub shape: Vec<usize>,
    pub data: Vec<C64>,
}

impl ComplexArray {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::InvalidParameter(format!("shape {shape:?} holds {len} elements, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn from_matrix(m: &Array2<C64>) -> Self {
        Self { shape: m.shape().to_vec(), data: m.iter().copied().collect() }
    }

    pub fn to_matrix(&self) -> Result<Array2<C64>> {
        match self.shape[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), self.data.clone()).expect("shape checked")),
            _ => Err(Error::InvalidParameter(format!("expected a 2-d array, got shape {:?}", self.shape))),
        }
    }

    pub fn from_stack(ops: &[Array2<C64>]) -> Result<Self> {
        let Some(first) = ops.first() else {
            return Ok(Self { shape: vec![0, 0, 0], data: vec![] });
        };
        let (r, c) = first.dim();
        let mut data = Vec::with_capacity(ops.len() * r * c);
        for m in ops {
            if m.dim() != (r, c) {
                return Err(Error::InvalidParameter("stacked matrices differ in shape".into()));
            }
            data.extend(m.iter().copied());
        }
        Ok(Self { shape: vec![ops.len(), r, c], data })
    }

    pub fn to_stack(&self) -> Result<Array3<C64>> {
        match self.shape[..] {
            [k, r, c] => Ok(Array3::from_shape_vec((k, r, c), self.data.clone()).expect("shape checked")),
            _ => Err(Error::InvalidParameter(format!("expected a 3-d array, got shape {:?}", self.shape))),
        }
    }
}

pub fn write_container<W: Write>(mut w: W, arr: &ComplexArray) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(arr.shape.len() as u32).to_le_bytes())?;
    for &d in &arr.shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for z in &arr.data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_container<R: Read>(mut r: R) -> Result<ComplexArray> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::InvalidParameter("not a KRCX container".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::InvalidParameter(format!("unsupported container version {version}")));
    }
    let ndim = read_u32(&mut r)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        shape.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::InvalidParameter("dimension overflows usize".into()))?);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::InvalidParameter("shape overflows usize".into()))?;
    let mut data = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        data.push(C64::new(re, im));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::InvalidParameter("trailing bytes after container payload".into()));
    }
    ComplexArray::new(shape, data)
}

pub fn save_container(path: &Path, arr: &ComplexArray) -> Result<()> {
    write_container(BufWriter::new(File::create(path)?), arr)
}

pub fn load_container(path: &Path) -> Result<ComplexArray> {
    read_container(BufReader::new(File::open(path)?))
}

pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Metadata written next to a saved density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMetadata {
    pub params: ModelParams,
    pub aleph: Option<f64>,
    pub dim: usize,
    pub trace: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub tail_population: f64,
    pub residual: Option<f64>,
}

/// Writes `<stem>.krcx` and `<stem>.json`.
pub fn save_density(stem: &Path, rho: &DensityMatrix, meta: &DensityMetadata) -> Result<()> {
    save_container(&with_ext(stem, "krcx"), &ComplexArray::from_matrix(&rho.rho))?;
    save_json(&with_ext(stem, "json"), meta)
}

pub fn load_density(stem: &Path) -> Result<(Array2<C64>, DensityMetadata)> {
    let m = load_container(&with_ext(stem, "krcx"))?.to_matrix()?;
    Ok((m, load_json(&with_ext(stem, "json"))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMetadataFile {
    pub params: ModelParams,
    pub aleph: Option<f64>,
    pub dim: usize,
    pub method: String,
    pub total_modes: usize,
    pub residuals: Vec<f64>,
}

/// Eigenvalues go to `<stem>_eigenvalues.krcx`, right and left operators to
/// `<stem>_right.krcx` / `<stem>_left.krcx` (shape `[k, N, N]`).
pub fn save_spectrum(stem: &Path, spec: &LiouvillianSpectrum, params: &ModelParams, aleph: Option<f64>) -> Result<()> {
    let base = stem.as_os_str().to_string_lossy().into_owned();
    let ev = ComplexArray::new(vec![spec.eigenvalues.len()], spec.eigenvalues.clone())?;
    save_container(Path::new(&format!("{base}_eigenvalues.krcx")), &ev)?;
    save_container(Path::new(&format!("{base}_right.krcx")), &ComplexArray::from_stack(&spec.right_ops)?)?;
    save_container(Path::new(&format!("{base}_left.krcx")), &ComplexArray::from_stack(&spec.left_ops)?)?;
    let meta = SpectrumMetadataFile {
        params: *params,
        aleph,
        dim: spec.space.dim(),
        method: spec.method.clone(),
        total_modes: spec.total_modes,
        residuals: spec.residuals.clone(),
    };
    save_json(&with_ext(stem, "json"), &meta)
}

/// Per-trajectory bookkeeping stored in the batch manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub seed: u64,
    pub jump_times: Vec<f64>,
    pub final_norm_check: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub params: ModelParams,
    pub aleph: Option<f64>,
    pub n_traj: usize,
    pub t_burn: f64,
    pub t_total: f64,
    pub dt_s: f64,
    pub base_seed: u64,
    pub dim: usize,
    pub rtol: f64,
    pub atol: f64,
    pub tail_tol: f64,
    pub n_samples: usize,
    pub trajectories: Vec<TrajectoryEntry>,
}

/// Stores ⟨b⟩ samples as a `[n_traj, n_samples]` container in
/// `<stem>.krcx` with the manifest in `<stem>.json`.
pub fn save_trajectories(
    stem: &Path,
    records: &[TrajectoryRecord],
    spec: &EnsembleSpec,
    params: &ModelParams,
    aleph: Option<f64>,
) -> Result<()> {
    let n_samples = records.first().map_or(0, |r| r.times.len());
    if records.iter().any(|r| r.times.len() != n_samples) {
        return Err(Error::InvalidParameter("records have different lengths".into()));
    }
    let data: Vec<C64> = records.iter().flat_map(|r| (0..n_samples).map(|k| r.beta(k))).collect();
    save_container(&with_ext(stem, "krcx"), &ComplexArray::new(vec![records.len(), n_samples], data)?)?;
    let manifest = TrajectoryManifest {
        params: *params,
        aleph,
        n_traj: records.len(),
        t_burn: spec.t_burn,
        t_total: spec.t_total,
        dt_s: spec.dt_s,
        base_seed: spec.base_seed,
        dim: spec.space.dim(),
        rtol: spec.ode.rtol,
        atol: spec.ode.atol,
        tail_tol: spec.tail_tol,
        n_samples,
        trajectories: records
            .iter()
            .map(|r| TrajectoryEntry { seed: r.seed, jump_times: r.jump_times.clone(), final_norm_check: r.final_norm_check })
            .collect(),
    };
    save_json(&with_ext(stem, "json"), &manifest)
}

/// Rebuilds records from a saved batch. Photon-number moments are not stored.
pub fn load_trajectories(stem: &Path) -> Result<(Vec<TrajectoryRecord>, TrajectoryManifest)> {
    let arr = load_container(&with_ext(stem, "krcx"))?;
    let manifest: TrajectoryManifest = load_json(&with_ext(stem, "json"))?;
    if arr.shape != [manifest.n_traj, manifest.n_samples] || manifest.trajectories.len() != manifest.n_traj {
        return Err(Error::InvalidParameter("container shape disagrees with manifest".into()));
    }
    let times: Vec<f64> = (0..manifest.n_samples).map(|k| k as f64 * manifest.dt_s).collect();
    let records = manifest
        .trajectories
        .iter()
        .zip(arr.data.chunks(manifest.n_samples.max(1)))
        .map(|(e, row)| TrajectoryRecord {
            seed: e.seed,
            dt_s: manifest.dt_s,
            times: times.clone(),
            x: row.iter().map(|z| z.re).collect(),
            y: row.iter().map(|z| z.im).collect(),
            n: vec![],
            b2: vec![],
            jump_times: e.jump_times.clone(),
            final_norm_check: e.final_norm_check,
        })
        .collect();
    Ok((records, manifest))
}

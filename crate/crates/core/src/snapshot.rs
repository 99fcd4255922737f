//! On-disk snapshot formats.
//!
//! `QHD1` field snapshots: text header lines (`magic QHD1`, `rank D`,
//! `dims ...`, `lengths ...`, `kind {complex|real|pair}`) followed by
//! little-endian 64-bit floats in row-major order. Complex fields interleave
//! re,im; pairs store the density block then the phase block.
//!
//! `MON1` ensemble checkpoints: text header (`magic MON1`, `count`, `dim`,
//! `mu`, `seed`, `step`, `box ...`) followed by little-endian f64 positions
//! then velocities.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{QhdError, Result};
use crate::field::{MadelungPair, WaveField};
use crate::grid::LatticeGrid;
use crate::kinetics::{MonadEnsemble, PeriodicBox};

#[derive(Debug, Clone)]
pub enum SnapshotPayload {
    Complex(ArrayD<Complex64>),
    Real(ArrayD<f64>),
    Pair { rho: ArrayD<f64>, phase: ArrayD<f64> },
}

impl SnapshotPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            SnapshotPayload::Complex(_) => "complex",
            SnapshotPayload::Real(_) => "real",
            SnapshotPayload::Pair { .. } => "pair",
        }
    }
}

/// A field snapshot: axis sizes, box lengths, and the payload. The particle
/// structure (`n`, `d`) is not stored; it comes from the experiment config
/// when a snapshot is loaded back into a typed state.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub dims: Vec<usize>,
    pub lengths: Vec<f64>,
    pub payload: SnapshotPayload,
}

impl Snapshot {
    pub fn from_wavefield(psi: &WaveField) -> Self {
        Self {
            dims: psi.grid().shape().to_vec(),
            lengths: psi.grid().box_lengths().to_vec(),
            payload: SnapshotPayload::Complex(psi.values().clone()),
        }
    }

    pub fn from_pair(pair: &MadelungPair) -> Self {
        Self {
            dims: pair.grid().shape().to_vec(),
            lengths: pair.grid().box_lengths().to_vec(),
            payload: SnapshotPayload::Pair {
                rho: pair.rho().clone(),
                phase: pair.phase().clone(),
            },
        }
    }

    pub fn from_real(grid: &LatticeGrid, field: &ArrayD<f64>) -> Self {
        Self {
            dims: grid.shape().to_vec(),
            lengths: grid.box_lengths().to_vec(),
            payload: SnapshotPayload::Real(field.clone()),
        }
    }

    /// Check that the snapshot geometry matches a grid built from config.
    pub fn check_grid(&self, grid: &LatticeGrid) -> Result<()> {
        if self.dims != grid.shape() {
            return Err(QhdError::Format(format!(
                "snapshot dims {:?} do not match grid {:?}",
                self.dims,
                grid.shape()
            )));
        }
        for (a, (&sl, &gl)) in self.lengths.iter().zip(grid.box_lengths()).enumerate() {
            if (sl - gl).abs() > 1e-12 * gl.abs().max(1.0) {
                return Err(QhdError::Format(format!(
                    "snapshot length[{a}] = {sl} does not match grid length {gl}"
                )));
            }
        }
        Ok(())
    }

    pub fn into_wavefield(self, grid: &LatticeGrid, hbar: f64, mass: f64) -> Result<WaveField> {
        self.check_grid(grid)?;
        match self.payload {
            SnapshotPayload::Complex(values) => WaveField::new(grid.clone(), values, hbar, mass),
            _ => Err(QhdError::Format(format!(
                "expected a complex snapshot, found kind {}",
                self.payload.kind()
            ))),
        }
    }

    pub fn into_pair(self, grid: &LatticeGrid) -> Result<MadelungPair> {
        self.check_grid(grid)?;
        match self.payload {
            SnapshotPayload::Pair { rho, phase } => {
                // Validate but keep the stored bits: snapshots of running
                // engines carry their (tiny) normalization drift and loading
                // must not erase it.
                if rho.iter().any(|r| !r.is_finite() || *r < 0.0)
                    || phase.iter().any(|p| !p.is_finite())
                {
                    return Err(QhdError::Format(
                        "pair snapshot holds non-finite or negative values".into(),
                    ));
                }
                let mass: f64 = rho.iter().sum::<f64>() * grid.cell_volume();
                if (mass - 1.0).abs() > 1e-6 {
                    return Err(QhdError::Format(format!(
                        "pair snapshot is not normalized (total mass {mass})"
                    )));
                }
                Ok(MadelungPair::from_raw(grid.clone(), rho, phase))
            }
            _ => Err(QhdError::Format(format!(
                "expected a pair snapshot, found kind {}",
                self.payload.kind()
            ))),
        }
    }

    pub fn into_real(self, grid: &LatticeGrid) -> Result<ArrayD<f64>> {
        self.check_grid(grid)?;
        match self.payload {
            SnapshotPayload::Real(values) => Ok(values),
            _ => Err(QhdError::Format(format!(
                "expected a real snapshot, found kind {}",
                self.payload.kind()
            ))),
        }
    }
}

fn write_f64s<W: Write>(out: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "magic QHD1")?;
    writeln!(out, "rank {}", snap.dims.len())?;
    writeln!(
        out,
        "dims {}",
        snap.dims
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(
        out,
        "lengths {}",
        snap.lengths
            .iter()
            .map(|l| format!("{l}"))
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(out, "kind {}", snap.payload.kind())?;
    match &snap.payload {
        SnapshotPayload::Complex(values) => {
            write_f64s(&mut out, values.iter().flat_map(|z| [z.re, z.im]))?;
        }
        SnapshotPayload::Real(values) => {
            write_f64s(&mut out, values.iter().copied())?;
        }
        SnapshotPayload::Pair { rho, phase } => {
            write_f64s(&mut out, rho.iter().copied())?;
            write_f64s(&mut out, phase.iter().copied())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read one `key value...` header line terminated by `\n`.
fn read_header_line<R: Read>(input: &mut R) -> Result<String> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = input.read(&mut byte)?;
        if n == 0 {
            return Err(QhdError::Format("unexpected end of header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        if line.len() > 4096 {
            return Err(QhdError::Format("header line too long".into()));
        }
        line.push(byte[0]);
    }
    String::from_utf8(line).map_err(|_| QhdError::Format("header is not UTF-8".into()))
}

fn expect_key<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' ').or(Some(rest).filter(|r| r.is_empty())))
        .ok_or_else(|| QhdError::Format(format!("expected `{key} ...`, found `{line}`")))
}

fn read_exact_f64s<R: Read>(input: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    input.read_exact(&mut buf).map_err(|e| {
        QhdError::Format(format!("payload truncated: {e}"))
    })?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let file = File::open(path)?;
    let mut input = BufReader::new(file);

    let magic = read_header_line(&mut input)?;
    if magic != "magic QHD1" {
        return Err(QhdError::Format(format!("bad magic line `{magic}`")));
    }
    let rank: usize = expect_key(&read_header_line(&mut input)?, "rank")?
        .trim()
        .parse()
        .map_err(|e| QhdError::Format(format!("bad rank: {e}")))?;
    let dims_line = read_header_line(&mut input)?;
    let dims: Vec<usize> = expect_key(&dims_line, "dims")?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| QhdError::Format(format!("bad dims: {e}")))?;
    let lengths_line = read_header_line(&mut input)?;
    let lengths: Vec<f64> = expect_key(&lengths_line, "lengths")?
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| QhdError::Format(format!("bad lengths: {e}")))?;
    if dims.len() != rank || lengths.len() != rank {
        return Err(QhdError::Format(format!(
            "rank {rank} does not match {} dims / {} lengths",
            dims.len(),
            lengths.len()
        )));
    }
    let kind = expect_key(&read_header_line(&mut input)?, "kind")?.to_string();
    let total: usize = dims.iter().product();
    let payload = match kind.trim() {
        "complex" => {
            let raw = read_exact_f64s(&mut input, total * 2)?;
            let values: Vec<Complex64> = raw
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            SnapshotPayload::Complex(
                ArrayD::from_shape_vec(IxDyn(&dims), values)
                    .map_err(|e| QhdError::Format(e.to_string()))?,
            )
        }
        "real" => SnapshotPayload::Real(
            ArrayD::from_shape_vec(IxDyn(&dims), read_exact_f64s(&mut input, total)?)
                .map_err(|e| QhdError::Format(e.to_string()))?,
        ),
        "pair" => {
            let rho = ArrayD::from_shape_vec(IxDyn(&dims), read_exact_f64s(&mut input, total)?)
                .map_err(|e| QhdError::Format(e.to_string()))?;
            let phase =
                ArrayD::from_shape_vec(IxDyn(&dims), read_exact_f64s(&mut input, total)?)
                    .map_err(|e| QhdError::Format(e.to_string()))?;
            SnapshotPayload::Pair { rho, phase }
        }
        other => return Err(QhdError::Format(format!("unknown kind `{other}`"))),
    };
    Ok(Snapshot {
        dims,
        lengths,
        payload,
    })
}

pub fn write_checkpoint(path: &Path, ens: &MonadEnsemble) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "magic MON1")?;
    writeln!(out, "count {}", ens.count())?;
    writeln!(out, "dim {}", ens.dim())?;
    writeln!(out, "mu {}", ens.mu())?;
    writeln!(out, "seed {}", ens.seed())?;
    writeln!(out, "step {}", ens.step())?;
    writeln!(
        out,
        "box {}",
        ens.bounds()
            .lengths()
            .iter()
            .map(|l| format!("{l}"))
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    write_f64s(&mut out, ens.positions().iter().copied())?;
    write_f64s(&mut out, ens.velocities().iter().copied())?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<MonadEnsemble> {
    let file = File::open(path)?;
    let mut input = BufReader::new(file);
    let magic = read_header_line(&mut input)?;
    if magic != "magic MON1" {
        return Err(QhdError::Format(format!("bad magic line `{magic}`")));
    }
    let count: usize = expect_key(&read_header_line(&mut input)?, "count")?
        .trim()
        .parse()
        .map_err(|e| QhdError::Format(format!("bad count: {e}")))?;
    let dim: usize = expect_key(&read_header_line(&mut input)?, "dim")?
        .trim()
        .parse()
        .map_err(|e| QhdError::Format(format!("bad dim: {e}")))?;
    let mu: f64 = expect_key(&read_header_line(&mut input)?, "mu")?
        .trim()
        .parse()
        .map_err(|e| QhdError::Format(format!("bad mu: {e}")))?;
    let seed: u64 = expect_key(&read_header_line(&mut input)?, "seed")?
        .trim()
        .parse()
        .map_err(|e| QhdError::Format(format!("bad seed: {e}")))?;
    let step: u64 = expect_key(&read_header_line(&mut input)?, "step")?
        .trim()
        .parse()
        .map_err(|e| QhdError::Format(format!("bad step: {e}")))?;
    let box_line = read_header_line(&mut input)?;
    let lengths: Vec<f64> = expect_key(&box_line, "box")?
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| QhdError::Format(format!("bad box: {e}")))?;
    if lengths.len() != dim {
        return Err(QhdError::Format(format!(
            "box has {} lengths for dim {dim}",
            lengths.len()
        )));
    }
    let pos_raw = read_exact_f64s(&mut input, count * dim)?;
    let vel_raw = read_exact_f64s(&mut input, count * dim)?;
    let positions = Array2::from_shape_vec((count, dim), pos_raw)
        .map_err(|e| QhdError::Format(e.to_string()))?;
    let velocities = Array2::from_shape_vec((count, dim), vel_raw)
        .map_err(|e| QhdError::Format(e.to_string()))?;
    let bounds = PeriodicBox::new(lengths)?;
    MonadEnsemble::with_step(positions, velocities, mu, bounds, seed, step)
}

/// Detect the snapshot family from the magic line, for format-agnostic
/// tooling.
pub fn sniff_magic(path: &Path) -> Result<String> {
    let file = File::open(path)?;
    let mut input = BufReader::new(file);
    let line = read_header_line(&mut input)?;
    line.strip_prefix("magic ")
        .map(|m| m.to_string())
        .ok_or_else(|| QhdError::Format(format!("no magic line in `{line}`")))
}

//! Conversions between the wave-field and density/phase representations,
//! including phase unwrapping and winding handling.
//!
//! The polar decomposition `psi = rho^(1/2) exp(i S / hbar)` pins `S` only
//! modulo `2 pi hbar`. The axis-sweep unwrap continues the phase along a
//! spanning path from the origin corner, accumulating `2 pi` jumps, which
//! recovers a smooth `S` up to one global constant whenever the phase
//! gradient is resolved by the grid. Across nodes (`rho -> 0`) no continuation
//! is reliable; the sweep reports ambiguity instead of guessing.

use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{QhdError, Result};
use crate::field::{MadelungPair, WaveField};
use crate::grid::LatticeGrid;
use crate::observables::density_floor;
use crate::spectral::{flat, SpectralOps};

/// Principal jumps larger than this (in radians) between two above-floor
/// neighbours are treated as node crossings. A genuine sign change flips the
/// phase by exactly pi; smooth resolved phases stay well below this.
pub const NODE_JUMP_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseUnwrapPolicy {
    /// Sequential sweep axis by axis, accumulating 2 pi jumps.
    #[default]
    AxisSweep,
    /// Keep principal values; below-floor points are still filled from their
    /// sweep predecessor.
    None,
}

/// Result of a polar decomposition: the pair plus the flat indices of points
/// whose density fell below the floor, where the phase was filled by
/// continuation from the sweep predecessor rather than measured.
#[derive(Debug, Clone)]
pub struct MadelungDecomposition {
    pub pair: MadelungPair,
    pub flagged: Vec<usize>,
}

fn wrap_to_pi(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    } else if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Flat index of the sweep predecessor: decrement the last nonzero axis
/// index. Every point except the origin corner has one, and it precedes the
/// point in row-major order.
fn sweep_predecessor(shape: &[usize], flat_idx: usize) -> Option<usize> {
    let mut rem = flat_idx;
    let mut stride = 1;
    // Walk axes from last to first; the first nonzero index found is the
    // last nonzero axis.
    for axis in (0..shape.len()).rev() {
        let n = shape[axis];
        let j = rem % n;
        if j > 0 {
            return Some(flat_idx - stride);
        }
        rem /= n;
        stride *= n;
    }
    None
}

/// Polar decomposition `rho = |psi|^2`, `S = hbar arg(psi)` with phase
/// continuation per policy.
pub fn to_madelung(psi: &WaveField, policy: PhaseUnwrapPolicy) -> Result<MadelungDecomposition> {
    let grid = psi.grid().clone();
    let hbar = psi.hbar();
    let rho = psi.rho();
    let floor = density_floor(&rho);
    let shape = grid.shape().to_vec();

    let raw: Vec<f64> = psi.values().iter().map(|v| v.arg()).collect();
    let valid: Vec<bool> = rho.iter().map(|&r| r >= floor).collect();

    let mut phase = vec![0.0f64; raw.len()];
    let mut flagged = Vec::new();
    for idx in 0..raw.len() {
        match sweep_predecessor(&shape, idx) {
            None => {
                phase[idx] = raw[idx];
            }
            Some(pred) => {
                if !valid[idx] {
                    // Below floor: the phase is not measurable; continue the
                    // predecessor value and flag the point.
                    phase[idx] = phase[pred];
                    flagged.push(idx);
                    continue;
                }
                match policy {
                    PhaseUnwrapPolicy::AxisSweep => {
                        let jump = wrap_to_pi(raw[idx] - raw[pred]);
                        if valid[pred] && jump.abs() > NODE_JUMP_LIMIT {
                            return Err(QhdError::UnwrapAmbiguous { index: idx, jump });
                        }
                        phase[idx] = phase[pred] + jump;
                    }
                    PhaseUnwrapPolicy::None => {
                        phase[idx] = raw[idx];
                    }
                }
            }
        }
    }

    let phase = ArrayD::from_shape_vec(IxDyn(&shape), phase)
        .expect("phase buffer matches grid shape")
        .mapv(|p| p * hbar);
    let pair = MadelungPair::new(grid, rho, phase)?;
    Ok(MadelungDecomposition { pair, flagged })
}

/// Inverse transform `psi = rho^(1/2) exp(i S / hbar)`, renormalized.
pub fn to_wavefield(pair: &MadelungPair, hbar: f64, mass: f64) -> Result<WaveField> {
    let values = ArrayD::from_shape_vec(
        IxDyn(pair.grid().shape()),
        pair.rho()
            .iter()
            .zip(pair.phase().iter())
            .map(|(&r, &s)| Complex64::from_polar(r.sqrt(), s / hbar))
            .collect(),
    )
    .expect("value buffer matches grid shape");
    WaveField::new(pair.grid().clone(), values, hbar, mass)
}

/// Integer winding number of the phase field along each axis, in units of
/// `2 pi hbar` per box traversal. A plane-wave flow winds; any smooth
/// periodic phase gives zero. Estimated from the mean wrap-around jump and
/// rounded, so it is exact for resolved states.
pub fn phase_windings(grid: &LatticeGrid, phase: &ArrayD<f64>, hbar: f64) -> Vec<i64> {
    let shape = grid.shape();
    let data = flat(phase);
    let mut windings = Vec::with_capacity(grid.rank());
    for axis in 0..grid.rank() {
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut jump_sum = 0.0;
        for o in 0..outer {
            let base = o * n * inner;
            for i in 0..inner {
                let first = data[base + i];
                let last = data[base + (n - 1) * inner + i];
                jump_sum += first - last;
            }
        }
        let lanes = (outer * inner) as f64;
        let mean_jump = jump_sum / lanes;
        // A winding of w makes the first-minus-last gap -2 pi hbar w (n-1)/n.
        let w = -mean_jump / (2.0 * PI * hbar) * n as f64 / (n - 1) as f64;
        windings.push(w.round() as i64);
    }
    windings
}

/// Gradient of a phase field that may wind around the torus: the linear ramp
/// implied by the integer windings is removed, the periodic remainder is
/// differentiated spectrally, and the ramp slope is added back.
pub fn phase_gradient(
    ops: &SpectralOps,
    phase: &ArrayD<f64>,
    hbar: f64,
) -> Vec<ArrayD<f64>> {
    let grid = ops.grid();
    let windings = phase_windings(grid, phase, hbar);
    let slopes: Vec<f64> = windings
        .iter()
        .enumerate()
        .map(|(a, &w)| 2.0 * PI * hbar * w as f64 / grid.box_lengths()[a])
        .collect();
    let periodic = if windings.iter().all(|&w| w == 0) {
        phase.clone()
    } else {
        let mut x = vec![0.0; grid.rank()];
        let mut out = phase.clone();
        for (flat_idx, v) in out.iter_mut().enumerate() {
            grid.coords_into(flat_idx, &mut x);
            for a in 0..grid.rank() {
                *v -= slopes[a] * x[a];
            }
        }
        out
    };
    (0..grid.rank())
        .map(|a| {
            let mut g = ops.gradient_axis(&periodic, a);
            if slopes[a] != 0.0 {
                g.mapv_inplace(|v| v + slopes[a]);
            }
            g
        })
        .collect()
}

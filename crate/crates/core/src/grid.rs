//! Periodic Cartesian grids over the joint configuration space of `n`
//! particles in `d` spatial dimensions (total rank `D = n * d`), plus the
//! monad-scale parameter bookkeeping.

use crate::error::{QhdError, Result};

/// Hard cap on the grid rank unless explicitly overridden. The joint grid is
/// exponential in the particle number; four axes is already the desk-scale
/// ceiling.
pub const MAX_RANK: usize = 4;

/// Cap on the total number of grid points (again overridable). 2^27 complex
/// values is ~2 GiB of working set once a couple of scratch fields exist.
pub const MAX_POINTS: usize = 1 << 27;

/// Periodic grid over the `D = n * d` dimensional configuration space.
///
/// Axis `a` holds coordinates `x_j = -L_a/2 + j * L_a / N_a` for
/// `j = 0..N_a`, so the box is centered on the origin and the right edge is
/// identified with the left one.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGrid {
    n_particles: usize,
    dims_per_particle: usize,
    points_per_axis: Vec<usize>,
    box_lengths: Vec<f64>,
}

impl LatticeGrid {
    pub fn new(
        n_particles: usize,
        dims_per_particle: usize,
        points_per_axis: Vec<usize>,
        box_lengths: Vec<f64>,
    ) -> Result<Self> {
        Self::build(
            n_particles,
            dims_per_particle,
            points_per_axis,
            box_lengths,
            false,
        )
    }

    /// Same as [`LatticeGrid::new`] but with the rank / size guards lifted.
    pub fn with_rank_override(
        n_particles: usize,
        dims_per_particle: usize,
        points_per_axis: Vec<usize>,
        box_lengths: Vec<f64>,
    ) -> Result<Self> {
        Self::build(
            n_particles,
            dims_per_particle,
            points_per_axis,
            box_lengths,
            true,
        )
    }

    /// Convenience constructor: the same point count and box length on every
    /// axis.
    pub fn cubic(
        n_particles: usize,
        dims_per_particle: usize,
        points: usize,
        length: f64,
    ) -> Result<Self> {
        let rank = n_particles * dims_per_particle;
        Self::new(
            n_particles,
            dims_per_particle,
            vec![points; rank],
            vec![length; rank],
        )
    }

    fn build(
        n_particles: usize,
        dims_per_particle: usize,
        points_per_axis: Vec<usize>,
        box_lengths: Vec<f64>,
        rank_override: bool,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(QhdError::InvalidGrid("n_particles must be >= 1".into()));
        }
        if !(1..=3).contains(&dims_per_particle) {
            return Err(QhdError::InvalidGrid(format!(
                "dims_per_particle must be 1, 2 or 3, got {dims_per_particle}"
            )));
        }
        let rank = n_particles * dims_per_particle;
        if !rank_override && rank > MAX_RANK {
            return Err(QhdError::InvalidGrid(format!(
                "grid rank D = {rank} exceeds the desk-scale cap {MAX_RANK}; \
                 use with_rank_override to lift it"
            )));
        }
        if points_per_axis.len() != rank || box_lengths.len() != rank {
            return Err(QhdError::InvalidGrid(format!(
                "expected {rank} axis entries, got {} points and {} lengths",
                points_per_axis.len(),
                box_lengths.len()
            )));
        }
        for (axis, &n) in points_per_axis.iter().enumerate() {
            if n < 8 || n % 2 != 0 {
                return Err(QhdError::InvalidGrid(format!(
                    "points_per_axis[{axis}] = {n}; need even and >= 8"
                )));
            }
        }
        for (axis, &length) in box_lengths.iter().enumerate() {
            if !(length.is_finite() && length > 0.0) {
                return Err(QhdError::InvalidGrid(format!(
                    "box_lengths[{axis}] = {length}; need finite and > 0"
                )));
            }
        }
        let total: usize = points_per_axis.iter().try_fold(1usize, |acc, &n| {
            acc.checked_mul(n).ok_or_else(|| {
                QhdError::InvalidGrid("total point count overflows usize".into())
            })
        })?;
        if !rank_override && total > MAX_POINTS {
            return Err(QhdError::InvalidGrid(format!(
                "total point count {total} exceeds the desk-scale cap {MAX_POINTS}"
            )));
        }
        let grid = Self {
            n_particles,
            dims_per_particle,
            points_per_axis,
            box_lengths,
        };
        if !(grid.cell_volume().is_finite() && grid.cell_volume() > 0.0) {
            return Err(QhdError::InvalidGrid("cell volume must be positive".into()));
        }
        Ok(grid)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dims_per_particle(&self) -> usize {
        self.dims_per_particle
    }

    /// Total rank `D = n * d`.
    pub fn rank(&self) -> usize {
        self.n_particles * self.dims_per_particle
    }

    pub fn shape(&self) -> &[usize] {
        &self.points_per_axis
    }

    pub fn box_lengths(&self) -> &[f64] {
        &self.box_lengths
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points_per_axis.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.box_lengths[axis] / self.points_per_axis[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.rank()).map(|a| self.spacing(a)).product()
    }

    pub fn total_volume(&self) -> f64 {
        self.box_lengths.iter().product()
    }

    pub fn axis_coord(&self, axis: usize, index: usize) -> f64 {
        -0.5 * self.box_lengths[axis] + index as f64 * self.spacing(axis)
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points_per_axis[axis])
            .map(|j| self.axis_coord(axis, j))
            .collect()
    }

    /// FFT-ordered angular wavenumbers for one axis:
    /// `0, 1, ..., N/2-1, -N/2, ..., -1` times `2*pi/L`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points_per_axis[axis];
        let scale = 2.0 * std::f64::consts::PI / self.box_lengths[axis];
        (0..n)
            .map(|j| {
                let f = if j <= n / 2 - 1 {
                    j as isize
                } else {
                    j as isize - n as isize
                };
                scale * f as f64
            })
            .collect()
    }

    /// Axis range belonging to one particle's coordinate block.
    pub fn block_axes(&self, particle: usize) -> std::ops::Range<usize> {
        debug_assert!(particle < self.n_particles);
        let d = self.dims_per_particle;
        particle * d..(particle + 1) * d
    }

    /// Decode a flat (row-major) index into per-axis indices.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.rank()];
        let mut rem = flat;
        for axis in (0..self.rank()).rev() {
            let n = self.points_per_axis[axis];
            out[axis] = rem % n;
            rem /= n;
        }
        out
    }

    /// Coordinates of the point with the given flat index, written into `out`.
    pub fn coords_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for axis in (0..self.rank()).rev() {
            let n = self.points_per_axis[axis];
            out[axis] = self.axis_coord(axis, rem % n);
            rem /= n;
        }
    }
}

/// Scale bookkeeping between the monad layer and the quantum layer: `N`
/// monads of mass `mu` and action constant `eta` compose one particle with
/// `m = N mu` and `hbar = N eta`; an `n`-particle system has mass `M = n m`
/// and `n N` monads in total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonadScale {
    monads_per_particle: u64,
    monad_mass: f64,
    monad_action: f64,
}

impl MonadScale {
    pub fn new(monads_per_particle: u64, monad_mass: f64, monad_action: f64) -> Result<Self> {
        if monads_per_particle == 0 {
            return Err(QhdError::Validation(
                "monads_per_particle must be >= 1".into(),
            ));
        }
        if !(monad_mass.is_finite() && monad_mass > 0.0) {
            return Err(QhdError::Validation(format!(
                "monad mass must be positive, got {monad_mass}"
            )));
        }
        if !(monad_action.is_finite() && monad_action > 0.0) {
            return Err(QhdError::Validation(format!(
                "monad action constant must be positive, got {monad_action}"
            )));
        }
        Ok(Self {
            monads_per_particle,
            monad_mass,
            monad_action,
        })
    }

    pub fn monads_per_particle(&self) -> u64 {
        self.monads_per_particle
    }

    pub fn monad_mass(&self) -> f64 {
        self.monad_mass
    }

    pub fn monad_action(&self) -> f64 {
        self.monad_action
    }

    /// Particle mass `m = N mu`.
    pub fn mass(&self) -> f64 {
        self.monads_per_particle as f64 * self.monad_mass
    }

    /// Action scale `hbar = N eta`.
    pub fn hbar(&self) -> f64 {
        self.monads_per_particle as f64 * self.monad_action
    }

    /// System mass `M = n m`.
    pub fn system_mass(&self, n_particles: usize) -> f64 {
        n_particles as f64 * self.mass()
    }

    /// Total monad count `n N`.
    pub fn total_monads(&self, n_particles: usize) -> u64 {
        n_particles as u64 * self.monads_per_particle
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_or_small_axes() {
        assert!(LatticeGrid::new(1, 1, vec![7], vec![1.0]).is_err());
        assert!(LatticeGrid::new(1, 1, vec![9], vec![1.0]).is_err());
        assert!(LatticeGrid::new(1, 1, vec![4], vec![1.0]).is_err());
        assert!(LatticeGrid::new(1, 1, vec![8], vec![1.0]).is_ok());
    }

    #[test]
    fn rank_cap_and_override() {
        let points = vec![8; 5];
        let lengths = vec![1.0; 5];
        assert!(LatticeGrid::new(5, 1, points.clone(), lengths.clone()).is_err());
        assert!(LatticeGrid::with_rank_override(5, 1, points, lengths).is_ok());
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(LatticeGrid::new(1, 1, vec![8], vec![0.0]).is_err());
        assert!(LatticeGrid::new(1, 1, vec![8], vec![-2.0]).is_err());
        assert!(LatticeGrid::new(1, 1, vec![8], vec![f64::NAN]).is_err());
    }

    #[test]
    fn coords_are_centered() {
        let g = LatticeGrid::new(1, 1, vec![8], vec![4.0]).unwrap();
        assert_eq!(g.axis_coord(0, 0), -2.0);
        assert_eq!(g.axis_coord(0, 4), 0.0);
        assert!((g.spacing(0) - 0.5).abs() < 1e-15);
        assert!((g.cell_volume() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wavenumber_ordering() {
        let g = LatticeGrid::new(1, 1, vec![8], vec![2.0 * std::f64::consts::PI]).unwrap();
        let k = g.wavenumbers(0);
        assert_eq!(k.len(), 8);
        assert_eq!(k[0], 0.0);
        assert!((k[1] - 1.0).abs() < 1e-15);
        assert!((k[3] - 3.0).abs() < 1e-15);
        assert!((k[4] + 4.0).abs() < 1e-15);
        assert!((k[7] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn block_axes_split() {
        let g = LatticeGrid::new(2, 2, vec![8, 8, 8, 8], vec![1.0; 4]).unwrap();
        assert_eq!(g.block_axes(0), 0..2);
        assert_eq!(g.block_axes(1), 2..4);
    }

    #[test]
    fn multi_index_roundtrip() {
        let g = LatticeGrid::new(2, 1, vec![8, 10], vec![1.0, 1.0]).unwrap();
        let idx = g.multi_index(57);
        assert_eq!(idx, vec![5, 7]);
        let mut x = [0.0; 2];
        g.coords_into(57, &mut x);
        assert!((x[0] - g.axis_coord(0, 5)).abs() < 1e-15);
        assert!((x[1] - g.axis_coord(1, 7)).abs() < 1e-15);
    }

    #[test]
    fn monad_scale_bookkeeping() {
        let s = MonadScale::new(1000, 1e-3, 2e-4).unwrap();
        assert!((s.mass() - 1.0).abs() < 1e-12);
        assert!((s.hbar() - 0.2).abs() < 1e-12);
        assert!((s.system_mass(3) - 3.0).abs() < 1e-12);
        assert_eq!(s.total_monads(3), 3000);
        assert!(MonadScale::new(0, 1.0, 1.0).is_err());
        assert!(MonadScale::new(10, -1.0, 1.0).is_err());
    }
}

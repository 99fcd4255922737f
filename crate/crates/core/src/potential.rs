//! Potentials on the joint grid and the constitutive closure parameters.
//!
//! The total potential is `V(x) = sum_i V_ex(x_i) + sum_{i<j} V_in(|x_i - x_j|)`
//! with the pairwise part sampled through the minimum-image distance on the
//! torus, which keeps it exchange symmetric. Everything is held at the
//! normalized quantum scale (`m`, `hbar`); the monad-scale mapping lives in
//! [`crate::grid::MonadScale`].

use ndarray::{ArrayD, IxDyn};

use crate::error::{QhdError, Result};
use crate::field::all_finite_real;
use crate::grid::LatticeGrid;

/// One-particle external potential.
#[derive(Debug, Clone)]
pub enum ExternalPotential {
    None,
    /// Isotropic harmonic well `1/2 m omega^2 |x - center|^2`.
    Harmonic { omega: f64, center: Vec<f64> },
    /// Arbitrary samples on the single-particle grid (`d` axes).
    Samples(ArrayD<f64>),
}

/// Pairwise interaction as a radial table, linearly interpolated and clamped
/// at both ends.
#[derive(Debug, Clone)]
pub enum PairPotential {
    None,
    RadialSamples { r: Vec<f64>, v: Vec<f64> },
}

impl PairPotential {
    fn evaluate(&self, dist: f64) -> f64 {
        match self {
            PairPotential::None => 0.0,
            PairPotential::RadialSamples { r, v } => {
                if dist <= r[0] {
                    return v[0];
                }
                if dist >= r[r.len() - 1] {
                    return v[v.len() - 1];
                }
                let pos = r.partition_point(|&rr| rr <= dist);
                let (r0, r1) = (r[pos - 1], r[pos]);
                let (v0, v1) = (v[pos - 1], v[pos]);
                v0 + (v1 - v0) * (dist - r0) / (r1 - r0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let PairPotential::RadialSamples { r, v } = self {
            if r.len() < 2 || r.len() != v.len() {
                return Err(QhdError::Validation(
                    "radial table needs at least two (r, v) pairs of equal length".into(),
                ));
            }
            if r.windows(2).any(|w| w[1] <= w[0]) {
                return Err(QhdError::Validation(
                    "radial table abscissae must increase strictly".into(),
                ));
            }
            if r.iter().chain(v.iter()).any(|x| !x.is_finite()) {
                return Err(QhdError::Validation("radial table must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Total potential sampled on the joint grid.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    total: ArrayD<f64>,
}

impl PotentialSpec {
    /// Free system: `V = 0`.
    pub fn free(grid: &LatticeGrid) -> Self {
        Self {
            total: ArrayD::zeros(IxDyn(grid.shape())),
        }
    }

    pub fn build(
        grid: &LatticeGrid,
        mass: f64,
        external: &ExternalPotential,
        pairwise: &PairPotential,
    ) -> Result<Self> {
        let d = grid.dims_per_particle();
        match external {
            ExternalPotential::None => {}
            ExternalPotential::Harmonic { omega, center } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(QhdError::Validation(format!(
                        "harmonic omega must be positive, got {omega}"
                    )));
                }
                if center.len() != d {
                    return Err(QhdError::Validation(format!(
                        "harmonic center must have {d} entries, got {}",
                        center.len()
                    )));
                }
            }
            ExternalPotential::Samples(samples) => {
                let expected: Vec<usize> = grid.shape()[..d].to_vec();
                if samples.shape() != expected.as_slice() {
                    return Err(QhdError::Validation(format!(
                        "external samples shape {:?} does not match the single-particle grid {:?}",
                        samples.shape(),
                        expected
                    )));
                }
                if !all_finite_real(samples) {
                    return Err(QhdError::Validation(
                        "external samples must be finite".into(),
                    ));
                }
                for (axis, &len) in grid.box_lengths()[..d].iter().enumerate() {
                    for block in 1..grid.n_particles() {
                        let other = grid.box_lengths()[block * d + axis];
                        if (other - len).abs() > 1e-12 * len.abs().max(1.0) {
                            return Err(QhdError::Validation(
                                "sampled external potentials require identical per-particle boxes"
                                    .into(),
                            ));
                        }
                    }
                }
            }
        }
        pairwise.validate()?;

        let n = grid.n_particles();
        let rank = grid.rank();
        let mut x = vec![0.0; rank];
        let mut total = ArrayD::zeros(IxDyn(grid.shape()));
        let mut multi = vec![0usize; rank];
        for (flat_idx, out) in total.iter_mut().enumerate() {
            grid.coords_into(flat_idx, &mut x);
            let mut v = 0.0;
            match external {
                ExternalPotential::None => {}
                ExternalPotential::Harmonic { omega, center } => {
                    for i in 0..n {
                        let mut r2 = 0.0;
                        for a in 0..d {
                            let u = x[i * d + a] - center[a];
                            r2 += u * u;
                        }
                        v += 0.5 * mass * omega * omega * r2;
                    }
                }
                ExternalPotential::Samples(samples) => {
                    decode_multi(grid.shape(), flat_idx, &mut multi);
                    for i in 0..n {
                        v += samples[IxDyn(&multi[i * d..(i + 1) * d])];
                    }
                }
            }
            if !matches!(pairwise, PairPotential::None) {
                for i in 0..n {
                    for j in (i + 1)..n {
                        let mut r2 = 0.0;
                        for a in 0..d {
                            let length = grid.box_lengths()[i * d + a];
                            let mut du = x[i * d + a] - x[j * d + a];
                            // Minimum image on the torus.
                            du -= length * (du / length).round();
                            r2 += du * du;
                        }
                        v += pairwise.evaluate(r2.sqrt());
                    }
                }
            }
            *out = v;
        }
        if !all_finite_real(&total) {
            return Err(QhdError::Validation(
                "total potential is not finite everywhere".into(),
            ));
        }
        Ok(Self { total })
    }

    /// Wrap an already-sampled joint-grid potential.
    pub fn from_total(grid: &LatticeGrid, total: ArrayD<f64>) -> Result<Self> {
        if total.shape() != grid.shape() {
            return Err(QhdError::Validation(format!(
                "potential shape {:?} does not match grid {:?}",
                total.shape(),
                grid.shape()
            )));
        }
        if !all_finite_real(&total) {
            return Err(QhdError::Validation("potential must be finite".into()));
        }
        Ok(Self { total })
    }

    pub fn total(&self) -> &ArrayD<f64> {
        &self.total
    }
}

fn decode_multi(shape: &[usize], flat_idx: usize, out: &mut [usize]) {
    let mut rem = flat_idx;
    for axis in (0..shape.len()).rev() {
        out[axis] = rem % shape[axis];
        rem /= shape[axis];
    }
}

/// Nonlinear self-interaction `U(rho)`: only the two closed-form variants
/// plus the trivial one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NonlinearTerm {
    #[default]
    None,
    /// `U = a rho` (cubic self-interaction at the wave level).
    Cubic { a: f64 },
    /// `U = b ln rho`.
    Logarithmic { b: f64 },
}

impl NonlinearTerm {
    pub fn validate(&self) -> Result<()> {
        let coeff = match self {
            NonlinearTerm::None => return Ok(()),
            NonlinearTerm::Cubic { a } => *a,
            NonlinearTerm::Logarithmic { b } => *b,
        };
        if !coeff.is_finite() {
            return Err(QhdError::Validation(
                "nonlinear coefficient must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NonlinearTerm::None)
    }

    /// Pointwise `U(rho)`; the logarithm is evaluated on density clamped at
    /// `floor` per the global floor policy.
    pub fn potential_term(&self, rho: &ArrayD<f64>, floor: f64) -> Option<ArrayD<f64>> {
        match self {
            NonlinearTerm::None => None,
            NonlinearTerm::Cubic { a } => Some(rho.mapv(|r| a * r)),
            NonlinearTerm::Logarithmic { b } => Some(rho.mapv(|r| b * r.max(floor).ln())),
        }
    }

    /// Diagonal stress contribution `(1/rho) int rho dU/drho drho`, in closed
    /// form per variant: `a rho / 2` (cubic), `b` (logarithmic), 0 (none).
    pub fn diagonal_stress(&self, rho: &ArrayD<f64>) -> Option<ArrayD<f64>> {
        match self {
            NonlinearTerm::None => None,
            NonlinearTerm::Cubic { a } => Some(rho.mapv(|r| 0.5 * a * r)),
            NonlinearTerm::Logarithmic { b } => Some(ArrayD::from_elem(rho.raw_dim(), *b)),
        }
    }

    /// Energy density of the self-interaction, used as part of the Lyapunov
    /// functional in imaginary time: `a rho^2 / 2` (cubic),
    /// `b (rho ln rho - rho)` (logarithmic).
    pub fn energy_density(&self, rho: &ArrayD<f64>, floor: f64) -> Option<ArrayD<f64>> {
        match self {
            NonlinearTerm::None => None,
            NonlinearTerm::Cubic { a } => Some(rho.mapv(|r| 0.5 * a * r * r)),
            NonlinearTerm::Logarithmic { b } => {
                Some(rho.mapv(|r| b * (r * r.max(floor).ln() - r)))
            }
        }
    }
}

/// Closure parameters for the stress tensor and internal potential: the
/// curvature coefficient `c` (`-hbar^2 / 4m` on the quantum branch, 0 when
/// the branch is disabled) plus the nonlinear variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstitutiveParams {
    pub c: f64,
    pub nonlinear: NonlinearTerm,
}

impl ConstitutiveParams {
    pub fn new(c: f64, nonlinear: NonlinearTerm) -> Result<Self> {
        if !c.is_finite() {
            return Err(QhdError::Validation("c must be finite".into()));
        }
        // Positive c would make the internal energy negative.
        if c > 0.0 {
            return Err(QhdError::Validation(format!(
                "c must be <= 0 (got {c}); positive c makes the internal energy negative"
            )));
        }
        nonlinear.validate()?;
        Ok(Self { c, nonlinear })
    }

    /// Quantum branch: `c = -hbar^2 / 4m`.
    pub fn quantum(hbar: f64, mass: f64, nonlinear: NonlinearTerm) -> Result<Self> {
        Self::new(-hbar * hbar / (4.0 * mass), nonlinear)
    }

    /// Classical branch: `c = 0`, only the nonlinear stress remains.
    pub fn classical(nonlinear: NonlinearTerm) -> Result<Self> {
        Self::new(0.0, nonlinear)
    }

    /// The prefactor `-hbar_eff^2 / 2m_eff = 2c` of the curvature potential.
    pub fn curvature_coefficient(&self) -> f64 {
        2.0 * self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_2p(n: usize, length: f64) -> LatticeGrid {
        LatticeGrid::new(2, 1, vec![n, n], vec![length, length]).unwrap()
    }

    #[test]
    fn harmonic_total_sums_over_particles() {
        let grid = grid_2p(16, 8.0);
        let spec = PotentialSpec::build(
            &grid,
            2.0,
            &ExternalPotential::Harmonic {
                omega: 3.0,
                center: vec![0.0],
            },
            &PairPotential::None,
        )
        .unwrap();
        let x0 = grid.axis_coord(0, 2);
        let x1 = grid.axis_coord(1, 10);
        let expect = 0.5 * 2.0 * 9.0 * (x0 * x0 + x1 * x1);
        assert!((spec.total()[[2, 10]] - expect).abs() < 1e-12);
    }

    #[test]
    fn pairwise_is_exchange_symmetric() {
        let grid = grid_2p(16, 8.0);
        let spec = PotentialSpec::build(
            &grid,
            1.0,
            &ExternalPotential::None,
            &PairPotential::RadialSamples {
                r: vec![0.0, 1.0, 2.0, 4.0],
                v: vec![2.0, 1.0, 0.25, 0.0],
            },
        )
        .unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let a = spec.total()[[i, j]];
                let b = spec.total()[[j, i]];
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pairwise_uses_minimum_image() {
        let grid = grid_2p(16, 8.0);
        let spec = PotentialSpec::build(
            &grid,
            1.0,
            &ExternalPotential::None,
            &PairPotential::RadialSamples {
                r: vec![0.0, 8.0],
                v: vec![0.0, 8.0], // v(r) = r on the table range
            },
        )
        .unwrap();
        // Particles at -4 and +3.5 are 0.5 apart through the boundary.
        let v = spec.total()[[0, 15]];
        assert!((v - 0.5).abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn samples_shape_is_validated() {
        let grid = grid_2p(16, 8.0);
        let bad = ArrayD::zeros(IxDyn(&[8]));
        assert!(PotentialSpec::build(
            &grid,
            1.0,
            &ExternalPotential::Samples(bad),
            &PairPotential::None
        )
        .is_err());
    }

    #[test]
    fn radial_table_validation() {
        let bad = PairPotential::RadialSamples {
            r: vec![0.0, 0.0],
            v: vec![1.0, 2.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nonlinear_closed_forms() {
        let rho = ArrayD::from_elem(IxDyn(&[4]), 0.5);
        let cubic = NonlinearTerm::Cubic { a: 2.0 };
        let diag = cubic.diagonal_stress(&rho).unwrap();
        assert!((diag[[0]] - 0.5).abs() < 1e-15);
        let log = NonlinearTerm::Logarithmic { b: 3.0 };
        let diag = log.diagonal_stress(&rho).unwrap();
        assert!((diag[[0]] - 3.0).abs() < 1e-15);
        assert!(NonlinearTerm::None.diagonal_stress(&rho).is_none());
    }

    #[test]
    fn params_reject_positive_c() {
        assert!(ConstitutiveParams::new(0.1, NonlinearTerm::None).is_err());
        let q = ConstitutiveParams::quantum(1.0, 1.0, NonlinearTerm::None).unwrap();
        assert!((q.c + 0.25).abs() < 1e-15);
        assert!((q.curvature_coefficient() + 0.5).abs() < 1e-15);
    }
}

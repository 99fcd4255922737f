//! Field states on the joint grid: the complex wave field and the
//! density/phase pair, with constructors for the standard initial states.

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{QhdError, Result};
use crate::grid::LatticeGrid;
use crate::spectral::flat;

/// Number of periodic images summed when sampling localized envelopes. Four
/// images push the truncation error below double precision for any box at
/// least six standard deviations wide.
const PERIODIC_IMAGES: i64 = 4;

/// Riemann sum over the torus; spectrally accurate for smooth periodic
/// fields. Every quadrature in the crate goes through here so that discrete
/// identities between functionals hold exactly.
pub fn integrate(grid: &LatticeGrid, field: &ArrayD<f64>) -> f64 {
    field.iter().sum::<f64>() * grid.cell_volume()
}

/// Discrete L2 norm `sqrt(sum f^2 * cellvol)`.
pub fn l2_norm(grid: &LatticeGrid, field: &ArrayD<f64>) -> f64 {
    field
        .iter()
        .map(|&v| v * v)
        .sum::<f64>()
        .sqrt()
        * grid.cell_volume().sqrt()
}

pub(crate) fn all_finite_real(field: &ArrayD<f64>) -> bool {
    field.iter().all(|v| v.is_finite())
}

pub(crate) fn all_finite_complex(field: &ArrayD<Complex64>) -> bool {
    field.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Complex field over the joint configuration space with unit discrete L2
/// norm. Construction renormalizes, so the norm invariant holds to machine
/// precision for any finite nonzero input.
#[derive(Debug, Clone)]
pub struct WaveField {
    grid: LatticeGrid,
    pub(crate) values: ArrayD<Complex64>,
    hbar: f64,
    mass: f64,
}

impl WaveField {
    pub fn new(
        grid: LatticeGrid,
        values: ArrayD<Complex64>,
        hbar: f64,
        mass: f64,
    ) -> Result<Self> {
        if values.shape() != grid.shape() {
            return Err(QhdError::Validation(format!(
                "field shape {:?} does not match grid shape {:?}",
                values.shape(),
                grid.shape()
            )));
        }
        if !(hbar.is_finite() && hbar > 0.0 && mass.is_finite() && mass > 0.0) {
            return Err(QhdError::Validation(format!(
                "hbar and mass must be positive, got hbar = {hbar}, mass = {mass}"
            )));
        }
        if !all_finite_complex(&values) {
            return Err(QhdError::Validation(
                "wave field contains non-finite values".into(),
            ));
        }
        let mut field = Self {
            grid,
            values,
            hbar,
            mass,
        };
        let norm = field.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(QhdError::Validation(
                "wave field has zero or non-finite norm".into(),
            ));
        }
        field.scale(1.0 / norm);
        Ok(field)
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn values(&self) -> &ArrayD<Complex64> {
        &self.values
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Discrete L2 norm `sqrt(sum |psi|^2 cellvol)`.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for v in self.values.iter_mut() {
            *v *= factor;
        }
    }

    pub(crate) fn renormalize(&mut self) {
        let norm = self.norm();
        self.scale(1.0 / norm);
    }

    /// Probability density `|psi|^2`.
    pub fn rho(&self) -> ArrayD<f64> {
        self.values.mapv(|v| v.norm_sqr())
    }

    /// Plane wave `exp(i k.x) / sqrt(V)` with per-axis integer mode numbers.
    pub fn plane_wave(grid: &LatticeGrid, modes: &[i64], hbar: f64, mass: f64) -> Result<Self> {
        if modes.len() != grid.rank() {
            return Err(QhdError::Validation(format!(
                "expected {} mode numbers, got {}",
                grid.rank(),
                modes.len()
            )));
        }
        for (axis, &m) in modes.iter().enumerate() {
            let half = (grid.shape()[axis] / 2) as i64;
            if m.abs() >= half {
                return Err(QhdError::Commensurability {
                    k: 2.0 * std::f64::consts::PI * m as f64 / grid.box_lengths()[axis],
                    length: grid.box_lengths()[axis],
                });
            }
        }
        let k: Vec<f64> = modes
            .iter()
            .enumerate()
            .map(|(a, &m)| 2.0 * std::f64::consts::PI * m as f64 / grid.box_lengths()[a])
            .collect();
        let amp = 1.0 / grid.total_volume().sqrt();
        let mut x = vec![0.0; grid.rank()];
        let mut values = ArrayD::from_elem(IxDyn(grid.shape()), Complex64::default());
        for (flat_idx, v) in values.iter_mut().enumerate() {
            grid.coords_into(flat_idx, &mut x);
            let phase: f64 = k.iter().zip(&x).map(|(ka, xa)| ka * xa).sum();
            *v = Complex64::from_polar(amp, phase);
        }
        Self::new(grid.clone(), values, hbar, mass)
    }

    /// Plane wave specified by raw wavenumbers; errors unless every `k_a`
    /// sits on the reciprocal lattice of the box.
    pub fn plane_wave_k(grid: &LatticeGrid, k: &[f64], hbar: f64, mass: f64) -> Result<Self> {
        if k.len() != grid.rank() {
            return Err(QhdError::Validation(format!(
                "expected {} wavenumbers, got {}",
                grid.rank(),
                k.len()
            )));
        }
        let mut modes = Vec::with_capacity(k.len());
        for (axis, &ka) in k.iter().enumerate() {
            let length = grid.box_lengths()[axis];
            let m = ka * length / (2.0 * std::f64::consts::PI);
            if (m - m.round()).abs() > 1e-9 {
                return Err(QhdError::Commensurability { k: ka, length });
            }
            modes.push(m.round() as i64);
        }
        Self::plane_wave(grid, &modes, hbar, mass)
    }

    /// Gaussian packet with the given density standard deviation per axis and
    /// an optional plane-wave carrier (integer modes). The envelope is the
    /// periodized sum of images, so the sampled field is exactly smooth on
    /// the torus.
    pub fn gaussian(
        grid: &LatticeGrid,
        center: &[f64],
        sigma: &[f64],
        carrier_modes: &[i64],
        hbar: f64,
        mass: f64,
    ) -> Result<Self> {
        if center.len() != grid.rank() || sigma.len() != grid.rank() {
            return Err(QhdError::Validation(format!(
                "center/sigma must have {} entries",
                grid.rank()
            )));
        }
        if carrier_modes.len() != grid.rank() {
            return Err(QhdError::Validation(format!(
                "carrier_modes must have {} entries",
                grid.rank()
            )));
        }
        for (axis, &s) in sigma.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(QhdError::Validation(format!(
                    "sigma[{axis}] must be positive, got {s}"
                )));
            }
        }
        let k: Vec<f64> = carrier_modes
            .iter()
            .enumerate()
            .map(|(a, &m)| 2.0 * std::f64::consts::PI * m as f64 / grid.box_lengths()[a])
            .collect();
        let mut x = vec![0.0; grid.rank()];
        let mut values = ArrayD::from_elem(IxDyn(grid.shape()), Complex64::default());
        for (flat_idx, v) in values.iter_mut().enumerate() {
            grid.coords_into(flat_idx, &mut x);
            let mut amp = 1.0;
            let mut phase = 0.0;
            for a in 0..grid.rank() {
                // Density variance sigma^2 means amplitude width 2 sigma^2.
                amp *= periodized_gaussian(
                    x[a] - center[a],
                    grid.box_lengths()[a],
                    4.0 * sigma[a] * sigma[a],
                );
                phase += k[a] * x[a];
            }
            *v = Complex64::from_polar(amp, phase);
        }
        Self::new(grid.clone(), values, hbar, mass)
    }

    /// Constant field `1/sqrt(V)`.
    pub fn uniform(grid: &LatticeGrid, hbar: f64, mass: f64) -> Result<Self> {
        let amp = Complex64::new(1.0 / grid.total_volume().sqrt(), 0.0);
        let values = ArrayD::from_elem(IxDyn(grid.shape()), amp);
        Self::new(grid.clone(), values, hbar, mass)
    }

    /// Maximum pointwise modulus difference against another field.
    pub fn max_abs_diff(&self, other: &WaveField) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `exp(-u^2 / width)` summed over periodic images.
fn periodized_gaussian(u: f64, length: f64, width: f64) -> f64 {
    let mut total = 0.0;
    for w in -PERIODIC_IMAGES..=PERIODIC_IMAGES {
        let du = u + w as f64 * length;
        total += (-du * du / width).exp();
    }
    total
}

/// Density/phase representation: a nonnegative normalized density and a real
/// action field. Valid only away from nodes; the engines enforce the floor.
#[derive(Debug, Clone)]
pub struct MadelungPair {
    grid: LatticeGrid,
    pub(crate) rho: ArrayD<f64>,
    pub(crate) phase: ArrayD<f64>,
}

impl MadelungPair {
    pub fn new(grid: LatticeGrid, rho: ArrayD<f64>, phase: ArrayD<f64>) -> Result<Self> {
        if rho.shape() != grid.shape() || phase.shape() != grid.shape() {
            return Err(QhdError::Validation(format!(
                "rho/phase shape must match grid shape {:?}",
                grid.shape()
            )));
        }
        if !all_finite_real(&rho) || !all_finite_real(&phase) {
            return Err(QhdError::Validation(
                "density or phase contains non-finite values".into(),
            ));
        }
        if rho.iter().any(|&r| r < 0.0) {
            return Err(QhdError::Validation(
                "density must be nonnegative everywhere".into(),
            ));
        }
        let mass = integrate(&grid, &rho);
        if !(mass.is_finite() && mass > 0.0) {
            return Err(QhdError::Validation(
                "density has zero or non-finite total mass".into(),
            ));
        }
        let rho = rho.mapv(|r| r / mass);
        Ok(Self { grid, rho, phase })
    }

    /// Construction without validation or renormalization, for engine
    /// internals that must expose drift instead of correcting it.
    pub(crate) fn from_raw(grid: LatticeGrid, rho: ArrayD<f64>, phase: ArrayD<f64>) -> Self {
        Self { grid, rho, phase }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn rho(&self) -> &ArrayD<f64> {
        &self.rho
    }

    pub fn phase(&self) -> &ArrayD<f64> {
        &self.phase
    }

    /// Total mass `sum rho cellvol` (1 after construction; engines let it
    /// drift and record it).
    pub fn total_mass(&self) -> f64 {
        integrate(&self.grid, &self.rho)
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rho(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    /// Gaussian density (periodized images) with a uniform zero phase.
    pub fn gaussian(grid: &LatticeGrid, center: &[f64], sigma: &[f64]) -> Result<Self> {
        if center.len() != grid.rank() || sigma.len() != grid.rank() {
            return Err(QhdError::Validation(format!(
                "center/sigma must have {} entries",
                grid.rank()
            )));
        }
        let mut x = vec![0.0; grid.rank()];
        let mut rho = ArrayD::zeros(IxDyn(grid.shape()));
        for (flat_idx, v) in rho.iter_mut().enumerate() {
            grid.coords_into(flat_idx, &mut x);
            let mut val = 1.0;
            for a in 0..grid.rank() {
                val *= periodized_gaussian(
                    x[a] - center[a],
                    grid.box_lengths()[a],
                    2.0 * sigma[a] * sigma[a],
                );
            }
            *v = val;
        }
        let phase = ArrayD::zeros(IxDyn(grid.shape()));
        Self::new(grid.clone(), rho, phase)
    }

    /// Uniform density with zero phase.
    pub fn uniform(grid: &LatticeGrid) -> Result<Self> {
        let rho = ArrayD::from_elem(IxDyn(grid.shape()), 1.0 / grid.total_volume());
        let phase = ArrayD::zeros(IxDyn(grid.shape()));
        Self::new(grid.clone(), rho, phase)
    }

    /// L2 distance between the densities of two pairs on the same grid.
    pub fn density_distance(&self, other: &MadelungPair) -> f64 {
        let diff = &self.rho - &other.rho;
        l2_norm(&self.grid, &diff)
    }
}

/// Sample variance of the coordinate along one axis under a density field;
/// used by dispersion tests and diagnostics.
pub fn density_axis_variance(grid: &LatticeGrid, rho: &ArrayD<f64>, axis: usize) -> f64 {
    let data = flat(rho);
    let shape = grid.shape();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let vol = grid.cell_volume();
    let mut mass = 0.0;
    let mut mean = 0.0;
    let mut sq = 0.0;
    for (flat_idx, &r) in data.iter().enumerate() {
        let j = (flat_idx / inner) % n;
        let x = grid.axis_coord(axis, j);
        mass += r * vol;
        mean += r * x * vol;
        sq += r * x * x * vol;
    }
    let mean = mean / mass;
    sq / mass - mean * mean
}

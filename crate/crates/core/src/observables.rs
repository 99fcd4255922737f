//! Static functionals of the field state: quantum potential, stress tensor,
//! constitutive-constraint residual, velocity field, Fisher information and
//! the energy ledger.
//!
//! Every quadrature is the shared torus Riemann sum from [`crate::field`],
//! so decompositions that are identities under a common quadrature (Fisher
//! additivity, block splitting of the quantum potential) hold to rounding
//! rather than to discretization error.

use ndarray::{ArrayD, IxDyn};

use crate::error::{QhdError, Result};
use crate::field::{integrate, MadelungPair, WaveField};
use crate::potential::{ConstitutiveParams, PotentialSpec};
use crate::spectral::SpectralOps;
use crate::transform::phase_gradient;

/// Relative density floor: points with `rho < RHO_FLOOR_FACTOR * max(rho)`
/// are masked out of phase extraction, divisions and residual norms.
pub const RHO_FLOOR_FACTOR: f64 = 1e-12;

pub fn density_floor(rho: &ArrayD<f64>) -> f64 {
    RHO_FLOOR_FACTOR * rho.iter().copied().fold(0.0, f64::max)
}

/// A scalar field together with the validity mask left by floor masking.
/// Masked entries hold zero.
#[derive(Debug, Clone)]
pub struct MaskedField {
    pub values: ArrayD<f64>,
    pub valid: ArrayD<bool>,
    pub masked_count: usize,
}

/// Curvature potential `coeff * laplacian(sqrt(rho)) / sqrt(rho)` over the
/// given axis range, with `coeff = -hbar^2/2m` for the physical quantum
/// potential. Shared by the full, per-block and closure-parameterized
/// variants.
fn curvature_potential(
    ops: &SpectralOps,
    rho: &ArrayD<f64>,
    coeff: f64,
    axes: std::ops::Range<usize>,
) -> Result<MaskedField> {
    let floor = density_floor(rho);
    let sqrt_rho = rho.mapv(f64::sqrt);
    let lap = ops.laplacian_axes(&sqrt_rho, axes);
    let mut values = ArrayD::zeros(rho.raw_dim());
    let mut valid = ArrayD::from_elem(rho.raw_dim(), false);
    let mut masked = 0usize;
    for (((out, ok), (&r, &s)), &l) in values
        .iter_mut()
        .zip(valid.iter_mut())
        .zip(rho.iter().zip(sqrt_rho.iter()))
        .zip(lap.iter())
    {
        if r >= floor {
            *out = coeff * l / s;
            *ok = true;
        } else {
            masked += 1;
        }
    }
    if masked == rho.len() {
        return Err(QhdError::AllMasked);
    }
    Ok(MaskedField {
        values,
        valid,
        masked_count: masked,
    })
}

/// Quantum potential `W = -(hbar^2/2m) rho^(-1/2) laplacian(rho^(1/2))`.
pub fn quantum_potential(
    ops: &SpectralOps,
    rho: &ArrayD<f64>,
    hbar: f64,
    mass: f64,
) -> Result<MaskedField> {
    let coeff = -hbar * hbar / (2.0 * mass);
    curvature_potential(ops, rho, coeff, 0..ops.grid().rank())
}

/// Per-particle quantum potential `W_i`: same formula with the Laplacian
/// restricted to particle `i`'s coordinate block. The full `W` is the sum of
/// the blocks pointwise.
pub fn quantum_potential_block(
    ops: &SpectralOps,
    rho: &ArrayD<f64>,
    hbar: f64,
    mass: f64,
    particle: usize,
) -> Result<MaskedField> {
    let coeff = -hbar * hbar / (2.0 * mass);
    curvature_potential(ops, rho, coeff, ops.grid().block_axes(particle))
}

/// Symmetric rank-2 tensor field stored as the upper triangle.
#[derive(Debug, Clone)]
pub struct StressTensor {
    rank: usize,
    components: Vec<ArrayD<f64>>,
}

impl StressTensor {
    fn slot(&self, j: usize, k: usize) -> usize {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        // Upper-triangle row-major offset.
        j * self.rank - j * (j + 1) / 2 + k
    }

    pub fn component(&self, j: usize, k: usize) -> &ArrayD<f64> {
        &self.components[self.slot(j, k)]
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

fn require_above_floor(rho: &ArrayD<f64>) -> Result<f64> {
    let floor = density_floor(rho);
    let mut min_rho = f64::INFINITY;
    let mut count = 0usize;
    for &r in rho.iter() {
        min_rho = min_rho.min(r);
        if r < floor {
            count += 1;
        }
    }
    if count > 0 {
        return Err(QhdError::FloorViolation {
            count,
            min_rho,
            floor,
        });
    }
    Ok(floor)
}

/// Constitutive stress tensor
/// `sigma_jk = c d2(ln rho)/dx_j dx_k + delta_jk * diag(rho)` with the
/// nonlinear diagonal in closed form per variant.
pub fn stress_tensor(
    ops: &SpectralOps,
    rho: &ArrayD<f64>,
    params: &ConstitutiveParams,
) -> Result<StressTensor> {
    require_above_floor(rho)?;
    let rank = ops.grid().rank();
    let diag = params.nonlinear.diagonal_stress(rho);
    let mut components = Vec::with_capacity(rank * (rank + 1) / 2);
    if params.c != 0.0 {
        let xi = rho.mapv(f64::ln);
        let grads: Vec<ArrayD<f64>> = (0..rank).map(|j| ops.gradient_axis(&xi, j)).collect();
        for j in 0..rank {
            for k in j..rank {
                let mut comp = ops.gradient_axis(&grads[j], k);
                comp.mapv_inplace(|v| v * params.c);
                if j == k {
                    if let Some(d) = &diag {
                        comp += d;
                    }
                }
                components.push(comp);
            }
        }
    } else {
        let zeros = ArrayD::zeros(rho.raw_dim());
        for j in 0..rank {
            for k in j..rank {
                if j == k {
                    components.push(diag.clone().unwrap_or_else(|| zeros.clone()));
                } else {
                    components.push(zeros.clone());
                }
            }
        }
    }
    Ok(StressTensor { rank, components })
}

/// Residual of the conservativity constraint
/// `dW/dx_j - d(sigma_jk)/dx_k - sigma_jk d(ln rho)/dx_k` for the
/// implemented `(W, sigma)` closure, per component `j`.
#[derive(Debug, Clone)]
pub struct ConstitutiveResidual {
    /// Discrete L2 norm per component.
    pub l2: Vec<f64>,
    /// Max norm per component.
    pub max: Vec<f64>,
}

impl ConstitutiveResidual {
    /// Root-sum-square over components, the single number used in
    /// diagnostics rows.
    pub fn l2_total(&self) -> f64 {
        self.l2.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn constitutive_residual(
    ops: &SpectralOps,
    rho: &ArrayD<f64>,
    params: &ConstitutiveParams,
) -> Result<ConstitutiveResidual> {
    let floor = require_above_floor(rho)?;
    let grid = ops.grid();
    let rank = grid.rank();
    let vol = grid.cell_volume();

    // Internal potential of the closure: curvature part plus U(rho).
    let mut w = curvature_potential(ops, rho, params.curvature_coefficient(), 0..rank)?.values;
    if let Some(u) = params.nonlinear.potential_term(rho, floor) {
        w += &u;
    }
    let sigma = stress_tensor(ops, rho, params)?;
    let xi = rho.mapv(f64::ln);
    let xi_grad: Vec<ArrayD<f64>> = (0..rank).map(|k| ops.gradient_axis(&xi, k)).collect();

    let mut l2 = Vec::with_capacity(rank);
    let mut max = Vec::with_capacity(rank);
    for j in 0..rank {
        let mut residual = ops.gradient_axis(&w, j);
        for k in 0..rank {
            residual -= &ops.gradient_axis(sigma.component(j, k), k);
            residual -= &(sigma.component(j, k) * &xi_grad[k]);
        }
        let mut sq = 0.0;
        let mut worst: f64 = 0.0;
        for &r in residual.iter() {
            sq += r * r;
            worst = worst.max(r.abs());
        }
        l2.push((sq * vol).sqrt());
        max.push(worst);
    }
    Ok(ConstitutiveResidual { l2, max })
}

/// Flow velocity `u = (1/m) dS/dx`, winding-aware (a plane-wave flow's
/// linear phase ramp is differentiated exactly, not through its sawtooth
/// sampling).
pub fn velocity_field(
    ops: &SpectralOps,
    pair: &MadelungPair,
    hbar: f64,
    mass: f64,
) -> Vec<ArrayD<f64>> {
    phase_gradient(ops, pair.phase(), hbar)
        .into_iter()
        .map(|mut g| {
            g.mapv_inplace(|v| v / mass);
            g
        })
        .collect()
}

/// Fisher information of the density, with the per-particle block split.
/// `total` is the ordered sum of the per-axis contributions and each block
/// is a partial sum of the same terms, so `total = sum_i blocks[i]` holds to
/// rounding by construction.
#[derive(Debug, Clone)]
pub struct FisherInformation {
    pub total: f64,
    pub per_block: Vec<f64>,
    pub per_axis: Vec<f64>,
    pub masked_count: usize,
}

pub fn fisher_information(ops: &SpectralOps, rho: &ArrayD<f64>) -> FisherInformation {
    let grid = ops.grid();
    let floor = density_floor(rho);
    let vol = grid.cell_volume();
    let mut per_axis = Vec::with_capacity(grid.rank());
    let mut masked_count = 0usize;
    for axis in 0..grid.rank() {
        let g = ops.gradient_axis(rho, axis);
        let mut acc = 0.0;
        let mut masked = 0usize;
        for (&gr, &r) in g.iter().zip(rho.iter()) {
            if r >= floor {
                acc += gr * gr / r;
            } else {
                masked += 1;
            }
        }
        per_axis.push(acc * vol);
        masked_count = masked;
    }
    let per_block: Vec<f64> = (0..grid.n_particles())
        .map(|i| grid.block_axes(i).map(|a| per_axis[a]).sum())
        .collect();
    let total: f64 = per_axis.iter().sum();
    debug_assert!(
        (total - per_block.iter().sum::<f64>()).abs() <= 1e-10 * total.abs().max(1.0),
        "Fisher block sum must reproduce the total under the shared quadrature"
    );
    FisherInformation {
        total,
        per_block,
        per_axis,
        masked_count,
    }
}

/// Energy ledger: the classical part, the internal (Fisher) part, their sum,
/// and the independent wave-functional route for cross-checking.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// `int rho (1/2 m |u|^2 + V)`.
    pub h_classical: f64,
    /// Internal energy `hbar^2 I / 8m`.
    pub h_internal: f64,
    /// `h_classical + h_internal`.
    pub h_total: f64,
    /// `int (hbar^2/2m) |dpsi/dx|^2 + V |psi|^2`, no floor involved.
    pub h_eq40: f64,
    pub fisher: FisherInformation,
}

impl EnergyReport {
    /// Relative disagreement between the two total-energy routes.
    pub fn route_gap(&self) -> f64 {
        (self.h_total - self.h_eq40).abs() / self.h_eq40.abs().max(f64::MIN_POSITIVE)
    }
}

/// Energy report evaluated directly on a wave field. The flow kinetic term
/// uses `u = (hbar/m) Im(psi* dpsi)/rho`, which needs no phase unwrap and is
/// exact for winding flows.
pub fn energy_report_wave(
    ops: &SpectralOps,
    psi: &WaveField,
    potential: &PotentialSpec,
) -> EnergyReport {
    let grid = ops.grid();
    let vol = grid.cell_volume();
    let hbar = psi.hbar();
    let mass = psi.mass();
    let rho = psi.rho();
    let floor = density_floor(&rho);

    let mut kinetic_flow = 0.0;
    let mut kinetic_wave = 0.0;
    for axis in 0..grid.rank() {
        let dpsi = ops.gradient_axis_complex(psi.values(), axis);
        for ((p, d), &r) in psi.values().iter().zip(dpsi.iter()).zip(rho.iter()) {
            kinetic_wave += d.norm_sqr();
            if r >= floor {
                let j = (p.conj() * d).im * hbar / mass;
                kinetic_flow += j * j / r;
            }
        }
    }
    kinetic_flow *= 0.5 * mass * vol;
    kinetic_wave *= hbar * hbar / (2.0 * mass) * vol;

    let potential_term: f64 = rho
        .iter()
        .zip(potential.total().iter())
        .map(|(&r, &v)| r * v)
        .sum::<f64>()
        * vol;

    let fisher = fisher_information(ops, &rho);
    let h_internal = hbar * hbar * fisher.total / (8.0 * mass);
    let h_classical = kinetic_flow + potential_term;
    EnergyReport {
        h_classical,
        h_internal,
        h_total: h_classical + h_internal,
        h_eq40: kinetic_wave + potential_term,
        fisher,
    }
}

/// Energy report from a density/phase pair. The wave-functional route goes
/// through the polar reconstruction.
pub fn energy_report_pair(
    ops: &SpectralOps,
    pair: &MadelungPair,
    hbar: f64,
    mass: f64,
    potential: &PotentialSpec,
) -> Result<EnergyReport> {
    let grid = ops.grid();
    let vol = grid.cell_volume();
    let rho = pair.rho();
    let floor = density_floor(rho);

    let u = velocity_field(ops, pair, hbar, mass);
    let mut kinetic_flow = 0.0;
    for ua in &u {
        for (&v, &r) in ua.iter().zip(rho.iter()) {
            if r >= floor {
                kinetic_flow += r * v * v;
            }
        }
    }
    kinetic_flow *= 0.5 * mass * vol;

    let potential_term: f64 = rho
        .iter()
        .zip(potential.total().iter())
        .map(|(&r, &v)| r * v)
        .sum::<f64>()
        * vol;

    let psi = crate::transform::to_wavefield(pair, hbar, mass)?;
    let mut kinetic_wave = 0.0;
    for axis in 0..grid.rank() {
        let dpsi = ops.gradient_axis_complex(psi.values(), axis);
        kinetic_wave += dpsi.iter().map(|d| d.norm_sqr()).sum::<f64>();
    }
    kinetic_wave *= hbar * hbar / (2.0 * mass) * vol;

    let fisher = fisher_information(ops, rho);
    let h_internal = hbar * hbar * fisher.total / (8.0 * mass);
    let h_classical = kinetic_flow + potential_term;
    Ok(EnergyReport {
        h_classical,
        h_internal,
        h_total: h_classical + h_internal,
        h_eq40: kinetic_wave + potential_term,
        fisher,
    })
}

/// `int rho W` against `hbar^2 I / 8m`: the integration-by-parts identity
/// relating the quantum potential to the Fisher information. Returns both
/// sides; used by the verification battery (and by its mutation test, which
/// feeds a corrupted `W`).
pub fn fisher_identity_sides_with(
    ops: &SpectralOps,
    rho: &ArrayD<f64>,
    w: &MaskedField,
    hbar: f64,
    mass: f64,
) -> (f64, f64) {
    let vol = ops.grid().cell_volume();
    let lhs: f64 = rho
        .iter()
        .zip(w.values.iter().zip(w.valid.iter()))
        .map(|(&r, (&wv, &ok))| if ok { r * wv } else { 0.0 })
        .sum::<f64>()
        * vol;
    let fisher = fisher_information(ops, rho);
    let rhs = hbar * hbar * fisher.total / (8.0 * mass);
    (lhs, rhs)
}

pub fn fisher_identity_sides(
    ops: &SpectralOps,
    rho: &ArrayD<f64>,
    hbar: f64,
    mass: f64,
) -> Result<(f64, f64)> {
    let w = quantum_potential(ops, rho, hbar, mass)?;
    Ok(fisher_identity_sides_with(ops, rho, &w, hbar, mass))
}

/// Deterministic nodeless density for tests and the verification battery:
/// the exponential of a band-limited random field, normalized. Positive by
/// construction and spectrally resolved for moderate amplitudes.
pub fn random_nodeless_density(grid: &crate::grid::LatticeGrid, seed: u64) -> ArrayD<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x716d_6864); // "qhd" tag
    let rank = grid.rank();
    let modes_per_axis = 3usize;
    // (amplitude, phase) per axis per mode, plus a cross term for D > 1.
    let mut terms: Vec<(usize, usize, f64, f64)> = Vec::new();
    for axis in 0..rank {
        for m in 1..=modes_per_axis {
            let amp: f64 = rng.random_range(-0.5..0.5);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            terms.push((axis, m, amp, phase));
        }
    }
    let mut x = vec![0.0; rank];
    let mut field = ArrayD::zeros(IxDyn(grid.shape()));
    let cross: f64 = if rank > 1 {
        rng.random_range(-0.3..0.3)
    } else {
        0.0
    };
    for (flat_idx, v) in field.iter_mut().enumerate() {
        grid.coords_into(flat_idx, &mut x);
        let mut g = 0.0;
        for &(axis, m, amp, phase) in &terms {
            let k = 2.0 * std::f64::consts::PI * m as f64 / grid.box_lengths()[axis];
            g += amp * (k * x[axis] + phase).cos();
        }
        if rank > 1 {
            let k0 = 2.0 * std::f64::consts::PI / grid.box_lengths()[0];
            let k1 = 2.0 * std::f64::consts::PI / grid.box_lengths()[1];
            g += cross * (k0 * x[0]).sin() * (k1 * x[1]).cos();
        }
        *v = g.exp();
    }
    let mass = integrate(grid, &field);
    field.mapv(|v| v / mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LatticeGrid;
    use crate::potential::{ExternalPotential, NonlinearTerm, PairPotential};

    fn grid_1d(n: usize, length: f64) -> LatticeGrid {
        LatticeGrid::new(1, 1, vec![n], vec![length]).unwrap()
    }

    fn grid_2p(n: usize, length: f64) -> LatticeGrid {
        LatticeGrid::new(2, 1, vec![n, n], vec![length, length]).unwrap()
    }

    #[test]
    fn quantum_potential_of_uniform_density_vanishes() {
        let grid = grid_1d(64, 5.0);
        let ops = SpectralOps::new(&grid);
        let rho = ArrayD::from_elem(IxDyn(&[64]), 0.2);
        let w = quantum_potential(&ops, &rho, 1.0, 1.0).unwrap();
        assert_eq!(w.masked_count, 0);
        assert!(w.values.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn quantum_potential_matches_gaussian_closed_form() {
        // Oracle: differentiating rho^(1/2) = C exp(-x^2/(4 s^2)) symbolically
        // gives W(x) = (hbar^2/2m) (1/(2 s^2) - x^2/(4 s^4)).
        let (hbar, mass, s) = (1.3, 0.8, 1.0);
        let grid = grid_1d(128, 14.0);
        let ops = SpectralOps::new(&grid);
        let pair = MadelungPair::gaussian(&grid, &[0.0], &[s]).unwrap();
        let w = quantum_potential(&ops, pair.rho(), hbar, mass).unwrap();
        let xs = grid.axis_coords(0);
        let coeff = hbar * hbar / (2.0 * mass);
        for (j, &x) in xs.iter().enumerate() {
            if x.abs() > 4.0 * s {
                continue;
            }
            let expect = coeff * (0.5 / (s * s) - x * x / (4.0 * s.powi(4)));
            assert!(
                (w.values[[j]] - expect).abs() < 1e-7 * coeff,
                "x = {x}: {} vs {expect}",
                w.values[[j]]
            );
        }
    }

    #[test]
    fn harmonic_ground_state_balances_potential() {
        // For the oscillator ground state W + V is flat at hbar omega / 2.
        let (hbar, mass, omega) = (1.0, 1.0, 1.0);
        let s = f64::sqrt(hbar / (2.0 * mass * omega)); // density std dev
        let grid = grid_1d(128, 14.0);
        let ops = SpectralOps::new(&grid);
        let pair = MadelungPair::gaussian(&grid, &[0.0], &[s]).unwrap();
        let w = quantum_potential(&ops, pair.rho(), hbar, mass).unwrap();
        let potential = PotentialSpec::build(
            &grid,
            mass,
            &ExternalPotential::Harmonic {
                omega,
                center: vec![0.0],
            },
            &PairPotential::None,
        )
        .unwrap();
        let expect = 0.5 * hbar * omega;
        let max_rho = pair.max_rho();
        let xs = grid.axis_coords(0);
        for (j, _x) in xs.iter().enumerate() {
            if pair.rho()[[j]] < 1e-4 * max_rho {
                continue;
            }
            let total = w.values[[j]] + potential.total()[[j]];
            assert!(
                ((total - expect) / expect).abs() < 1e-6,
                "j = {j}: {total} vs {expect}"
            );
        }
    }

    #[test]
    fn single_particle_block_equals_full() {
        let grid = grid_1d(64, 12.0);
        let ops = SpectralOps::new(&grid);
        let rho = random_nodeless_density(&grid, 7);
        let w = quantum_potential(&ops, &rho, 1.0, 1.0).unwrap();
        let w1 = quantum_potential_block(&ops, &rho, 1.0, 1.0, 0).unwrap();
        for (a, b) in w.values.iter().zip(w1.values.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn product_density_gives_block_local_potential() {
        let grid = grid_2p(32, 12.0);
        let ops = SpectralOps::new(&grid);
        // rho(x1, x2) = rho_1(x1) rho_2(x2): W_1 must not vary along x2.
        let pair = MadelungPair::gaussian(&grid, &[0.0, 0.5], &[1.0, 1.4]).unwrap();
        let w1 = quantum_potential_block(&ops, pair.rho(), 1.0, 1.0, 0).unwrap();
        for i in 0..32 {
            let mut lane: Vec<f64> = Vec::new();
            for j in 0..32 {
                if w1.valid[[i, j]] {
                    lane.push(w1.values[[i, j]]);
                }
            }
            if lane.len() < 2 {
                continue;
            }
            let spread = lane.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - lane.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-8, "row {i} spread {spread}");
        }
    }

    #[test]
    fn blocks_sum_to_full_potential() {
        let grid = grid_2p(32, 12.0);
        let ops = SpectralOps::new(&grid);
        let rho = random_nodeless_density(&grid, 21);
        let w = quantum_potential(&ops, &rho, 1.1, 0.9).unwrap();
        let w1 = quantum_potential_block(&ops, &rho, 1.1, 0.9, 0).unwrap();
        let w2 = quantum_potential_block(&ops, &rho, 1.1, 0.9, 1).unwrap();
        let scale = w.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ((a, b), c) in w.values.iter().zip(w1.values.iter()).zip(w2.values.iter()) {
            assert!((a - (b + c)).abs() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn stress_closed_forms_match_pointwise() {
        let grid = grid_1d(64, 10.0);
        let ops = SpectralOps::new(&grid);
        let rho = random_nodeless_density(&grid, 3);
        let a = 0.7;
        let cubic = ConstitutiveParams::classical(NonlinearTerm::Cubic { a }).unwrap();
        let sigma = stress_tensor(&ops, &rho, &cubic).unwrap();
        for (s, &r) in sigma.component(0, 0).iter().zip(rho.iter()) {
            assert!((s - 0.5 * a * r).abs() < 1e-12);
        }
        let b = -0.4;
        let log = ConstitutiveParams::classical(NonlinearTerm::Logarithmic { b }).unwrap();
        let sigma = stress_tensor(&ops, &rho, &log).unwrap();
        for &s in sigma.component(0, 0).iter() {
            assert!((s - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_density_gives_zero_stress_and_residual() {
        let grid = grid_2p(16, 6.0);
        let ops = SpectralOps::new(&grid);
        let rho = ArrayD::from_elem(IxDyn(&[16, 16]), 1.0 / 36.0);
        let params = ConstitutiveParams::quantum(1.0, 1.0, NonlinearTerm::None).unwrap();
        let sigma = stress_tensor(&ops, &rho, &params).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                assert!(sigma.component(j, k).iter().all(|&v| v.abs() < 1e-13));
            }
        }
        let res = constitutive_residual(&ops, &rho, &params).unwrap();
        assert!(res.l2_total() < 1e-13);
    }

    #[test]
    fn mixed_partials_commute() {
        let grid = grid_2p(32, 9.0);
        let ops = SpectralOps::new(&grid);
        let rho = random_nodeless_density(&grid, 11);
        let xi = rho.mapv(f64::ln);
        let g0 = ops.gradient_axis(&xi, 0);
        let g1 = ops.gradient_axis(&xi, 1);
        let d01 = ops.gradient_axis(&g0, 1);
        let d10 = ops.gradient_axis(&g1, 0);
        let scale = d01.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in d01.iter().zip(d10.iter()) {
            assert!((a - b).abs() < 1e-11 * scale.max(1.0));
        }
    }

    #[test]
    fn residual_decreases_at_spectral_rate() {
        let params = [
            ConstitutiveParams::quantum(1.0, 1.0, NonlinearTerm::None).unwrap(),
            ConstitutiveParams::classical(NonlinearTerm::Cubic { a: 0.8 }).unwrap(),
            ConstitutiveParams::quantum(1.0, 1.0, NonlinearTerm::Logarithmic { b: 0.3 }).unwrap(),
        ];
        for p in &params {
            let mut norms = Vec::new();
            for &n in &[64usize, 128, 256] {
                let grid = grid_1d(n, 10.0);
                let ops = SpectralOps::new(&grid);
                let pair = MadelungPair::gaussian(&grid, &[0.0], &[1.2]).unwrap();
                let res = constitutive_residual(&ops, pair.rho(), p).unwrap();
                norms.push(res.l2_total());
            }
            assert!(
                norms[0] / norms[1] > 4.0 && norms[1] / norms[2] > 4.0,
                "params {p:?}: norms {norms:?}"
            );
        }
    }

    #[test]
    fn velocity_of_zero_phase_is_zero() {
        let grid = grid_1d(32, 5.0);
        let ops = SpectralOps::new(&grid);
        let pair = MadelungPair::uniform(&grid).unwrap();
        let u = velocity_field(&ops, &pair, 1.0, 2.0);
        assert!(u[0].iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn velocity_of_plane_wave_phase_is_constant() {
        let (hbar, mass, length) = (0.8, 1.7, 8.0);
        let grid = grid_1d(64, length);
        let ops = SpectralOps::new(&grid);
        let psi = WaveField::plane_wave(&grid, &[3], hbar, mass).unwrap();
        let dec = crate::transform::to_madelung(&psi, crate::transform::PhaseUnwrapPolicy::AxisSweep)
            .unwrap();
        let u = velocity_field(&ops, &dec.pair, hbar, mass);
        let k = 2.0 * std::f64::consts::PI * 3.0 / length;
        let expect = hbar * k / mass;
        for &v in u[0].iter() {
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn velocity_matches_finite_difference_oracle() {
        // Quadratic-bump phase; centered differences converge at O(h^2) to
        // the spectral derivative.
        let length = 10.0;
        let mass = 1.3;
        let mut gaps = Vec::new();
        for &n in &[32usize, 64, 128] {
            let grid = grid_1d(n, length);
            let ops = SpectralOps::new(&grid);
            let xs = grid.axis_coords(0);
            let phase = ArrayD::from_shape_vec(
                IxDyn(&[n]),
                xs.iter()
                    .map(|&x| (2.0 * std::f64::consts::PI * x / length).cos().powi(2))
                    .collect(),
            )
            .unwrap();
            let rho = ArrayD::from_elem(IxDyn(&[n]), 1.0 / length);
            let pair = MadelungPair::new(grid.clone(), rho, phase.clone()).unwrap();
            let u = velocity_field(&ops, &pair, 1.0, mass);
            let h = grid.spacing(0);
            let mut worst: f64 = 0.0;
            for j in 0..n {
                let fd = (phase[[(j + 1) % n]] - phase[[(j + n - 1) % n]]) / (2.0 * h * mass);
                worst = worst.max((u[0][[j]] - fd).abs());
            }
            gaps.push(worst);
        }
        assert!(gaps[0] / gaps[1] > 3.5 && gaps[1] / gaps[2] > 3.5, "{gaps:?}");
    }

    #[test]
    fn fisher_information_examples() {
        // Uniform density: zero.
        let grid = grid_1d(64, 5.0);
        let ops = SpectralOps::new(&grid);
        let uniform = ArrayD::from_elem(IxDyn(&[64]), 0.2);
        let fi = fisher_information(&ops, &uniform);
        assert!(fi.total.abs() < 1e-12);

        // 1D Gaussian with density variance s^2: I = 1/s^2 (quadrature
        // oracle on the analytic density, wrap-around negligible at L = 14s).
        let s = 0.9;
        let grid = grid_1d(128, 14.0 * s);
        let ops = SpectralOps::new(&grid);
        let pair = MadelungPair::gaussian(&grid, &[0.0], &[s]).unwrap();
        let fi = fisher_information(&ops, pair.rho());
        assert!(
            ((fi.total - 1.0 / (s * s)) / (1.0 / (s * s))).abs() < 1e-6,
            "I = {}",
            fi.total
        );
    }

    #[test]
    fn fisher_product_density_is_additive() {
        let (s1, s2) = (0.8, 1.25);
        let length = 14.0 * s2;
        let grid = grid_2p(128, length);
        let ops = SpectralOps::new(&grid);
        let pair = MadelungPair::gaussian(&grid, &[0.0, 0.0], &[s1, s2]).unwrap();
        let fi = fisher_information(&ops, pair.rho());
        let expect_total = 1.0 / (s1 * s1) + 1.0 / (s2 * s2);
        assert!(((fi.total - expect_total) / expect_total).abs() < 1e-6);
        let expect_1 = 1.0 / (s1 * s1);
        assert!(((fi.per_block[0] - expect_1) / expect_1).abs() < 1e-6);
        let block_sum: f64 = fi.per_block.iter().sum();
        assert!((fi.total - block_sum).abs() <= 1e-10 * fi.total);
    }

    #[test]
    fn energy_of_plane_wave() {
        let (hbar, mass, length) = (1.0, 1.0, 8.0);
        let grid = grid_1d(64, length);
        let ops = SpectralOps::new(&grid);
        let psi = WaveField::plane_wave(&grid, &[4], hbar, mass).unwrap();
        let report = energy_report_wave(&ops, &psi, &PotentialSpec::free(&grid));
        let k = 2.0 * std::f64::consts::PI * 4.0 / length;
        let expect = hbar * hbar * k * k / (2.0 * mass);
        assert!(((report.h_eq40 - expect) / expect).abs() < 1e-12);
        assert!(report.h_internal.abs() < 1e-12 * expect);
        assert!(report.route_gap() < 1e-10);
    }

    #[test]
    fn energy_of_static_gaussian() {
        // Static real Gaussian: H = curvature energy alone = hbar^2/(8 m s^2).
        let (hbar, mass, s) = (1.0, 1.0, 1.1);
        let grid = grid_1d(128, 14.0 * s);
        let ops = SpectralOps::new(&grid);
        let psi = WaveField::gaussian(&grid, &[0.0], &[s], &[0], hbar, mass).unwrap();
        let report = energy_report_wave(&ops, &psi, &PotentialSpec::free(&grid));
        let expect = hbar * hbar / (8.0 * mass * s * s);
        assert!(((report.h_total - expect) / expect).abs() < 1e-6);
        assert!(((report.h_eq40 - expect) / expect).abs() < 1e-6);
        assert!(report.h_classical.abs() < 1e-10 * expect);
        assert!(report.route_gap() < 1e-8);
    }

    #[test]
    fn energy_routes_agree_on_random_states() {
        let grid = grid_1d(128, 12.0);
        let ops = SpectralOps::new(&grid);
        for seed in 0..5u64 {
            let rho = random_nodeless_density(&grid, 100 + seed);
            let phase = {
                let xs = grid.axis_coords(0);
                ArrayD::from_shape_vec(
                    IxDyn(&[128]),
                    xs.iter()
                        .map(|&x| 0.4 * (2.0 * std::f64::consts::PI * x / 12.0).sin())
                        .collect(),
                )
                .unwrap()
            };
            let pair = MadelungPair::new(grid.clone(), rho, phase).unwrap();
            let report = energy_report_pair(&ops, &pair, 1.0, 1.0, &PotentialSpec::free(&grid))
                .unwrap();
            assert!(report.route_gap() < 1e-8, "seed {seed}: {}", report.route_gap());
        }
    }

    #[test]
    fn fisher_identity_holds_and_detects_sign_flip() {
        let grid = grid_1d(128, 12.0);
        let ops = SpectralOps::new(&grid);
        let rho = random_nodeless_density(&grid, 42);
        let (lhs, rhs) = fisher_identity_sides(&ops, &rho, 1.0, 1.0).unwrap();
        assert!(((lhs - rhs) / rhs).abs() < 1e-8);

        // Mutation check: a sign-flipped quantum potential makes the left
        // side negative and the identity fail loudly.
        let mut w = quantum_potential(&ops, &rho, 1.0, 1.0).unwrap();
        w.values.mapv_inplace(|v| -v);
        let (bad_lhs, good_rhs) = fisher_identity_sides_with(&ops, &rho, &w, 1.0, 1.0);
        assert!(bad_lhs < 0.0);
        assert!(((bad_lhs - good_rhs) / good_rhs).abs() > 1.0);
    }
}

//! Property tests for the structural invariants: polar-transform round
//! trips, spectral exactness on resolved modes, and collision invariants
//! under arbitrary pair velocities.

use ndarray::{ArrayD, IxDyn};
use proptest::prelude::*;

use qhd_core::kinetics::{collide, MonadEnsemble, PeriodicBox};
use qhd_core::observables::velocity_field;
use qhd_core::transform::{to_madelung, to_wavefield, PhaseUnwrapPolicy};
use qhd_core::{LatticeGrid, MadelungPair, SpectralOps, WaveField};

fn grid_1d(n: usize, length: f64) -> LatticeGrid {
    LatticeGrid::new(1, 1, vec![n], vec![length]).unwrap()
}

/// Smooth nodeless pair from a handful of low-mode coefficients.
fn smooth_pair(
    grid: &LatticeGrid,
    rho_coeffs: &[(f64, f64)],
    phase_coeffs: &[(f64, f64)],
) -> MadelungPair {
    let length = grid.box_lengths()[0];
    let xs = grid.axis_coords(0);
    let rho: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let mut g = 0.0;
            for (m, &(amp, ph)) in rho_coeffs.iter().enumerate() {
                let k = 2.0 * std::f64::consts::PI * (m + 1) as f64 / length;
                g += amp * (k * x + ph).cos();
            }
            g.exp()
        })
        .collect();
    let phase: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let mut s = 0.0;
            for (m, &(amp, ph)) in phase_coeffs.iter().enumerate() {
                let k = 2.0 * std::f64::consts::PI * (m + 1) as f64 / length;
                s += amp * (k * x + ph).sin();
            }
            s
        })
        .collect();
    MadelungPair::new(
        grid.clone(),
        ArrayD::from_shape_vec(IxDyn(&[xs.len()]), rho).unwrap(),
        ArrayD::from_shape_vec(IxDyn(&[xs.len()]), phase).unwrap(),
    )
    .unwrap()
}

fn coeff() -> impl Strategy<Value = (f64, f64)> {
    (-0.6..0.6f64, 0.0..std::f64::consts::TAU)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// Polar round trip: to_madelung(to_wavefield(pair)) reproduces the pair
    /// up to one global phase constant, and both transforms preserve the
    /// norm to machine precision.
    #[test]
    fn polar_round_trip(
        rho_coeffs in prop::collection::vec(coeff(), 1..4),
        phase_coeffs in prop::collection::vec(coeff(), 1..4),
        hbar in 0.5..2.0f64,
    ) {
        let grid = grid_1d(64, 9.0);
        let pair = smooth_pair(&grid, &rho_coeffs, &phase_coeffs);
        let psi = to_wavefield(&pair, hbar, 1.0).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        let back = to_madelung(&psi, PhaseUnwrapPolicy::AxisSweep).unwrap();
        prop_assert!((back.pair.total_mass() - 1.0).abs() < 1e-12);
        let offset = back.pair.phase()[[0]] - pair.phase()[[0]];
        for j in 0..64 {
            prop_assert!((back.pair.rho()[[j]] - pair.rho()[[j]]).abs() < 1e-12);
            prop_assert!(
                (back.pair.phase()[[j]] - pair.phase()[[j]] - offset).abs() < 1e-9,
                "phase mismatch at {}", j
            );
        }
    }

    /// Spectral differentiation is exact (to rounding) on any resolved mode.
    #[test]
    fn gradient_exact_on_resolved_modes(
        mode in 1i64..31,
        amp in 0.1..3.0f64,
        ph in 0.0..std::f64::consts::TAU,
        length in 2.0..20.0f64,
    ) {
        let n = 64;
        let grid = grid_1d(n, length);
        let ops = SpectralOps::new(&grid);
        let k = 2.0 * std::f64::consts::PI * mode as f64 / length;
        let xs = grid.axis_coords(0);
        let f = ArrayD::from_shape_vec(
            IxDyn(&[n]),
            xs.iter().map(|&x| amp * (k * x + ph).sin()).collect(),
        )
        .unwrap();
        let g = ops.gradient_axis(&f, 0);
        let scale = amp * k;
        for (j, &x) in xs.iter().enumerate() {
            let expect = amp * k * (k * x + ph).cos();
            prop_assert!((g[[j]] - expect).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    /// Winding flows: the velocity of a plane-wave state is uniform at
    /// hbar k / m for any resolved mode.
    #[test]
    fn plane_wave_velocity_is_uniform(
        mode in -20i64..20,
        hbar in 0.5..1.5f64,
        mass in 0.5..2.0f64,
    ) {
        let length = 8.0;
        let grid = grid_1d(64, length);
        let ops = SpectralOps::new(&grid);
        let psi = WaveField::plane_wave(&grid, &[mode], hbar, mass).unwrap();
        let dec = to_madelung(&psi, PhaseUnwrapPolicy::AxisSweep).unwrap();
        let u = velocity_field(&ops, &dec.pair, hbar, mass);
        let expect = hbar * 2.0 * std::f64::consts::PI * mode as f64 / (length * mass);
        for &v in u[0].iter() {
            prop_assert!((v - expect).abs() < 1e-9 * expect.abs().max(1.0));
        }
    }

    /// Collisions conserve count, momentum and kinetic energy for arbitrary
    /// velocity distributions in every dimension.
    #[test]
    fn collisions_conserve_invariants(
        d in 1usize..4,
        seed in 0u64..1000,
        rate in 0.5..8.0f64,
    ) {
        let bounds = PeriodicBox::new(vec![4.0; d]).unwrap();
        let temperature = 0.8;
        let drift = vec![0.3; d];
        let ens = MonadEnsemble::maxwellian(400, 1.3, bounds, temperature, &drift, seed).unwrap();
        let ke0 = ens.total_kinetic();
        let p0 = ens.total_momentum();
        let (out, stats) = collide(&ens, 1.0, rate, 0.1).unwrap();
        prop_assert_eq!(out.count(), 400);
        prop_assert_eq!(stats.delta_count, 0);
        prop_assert!(stats.max_event_momentum_rel < 1e-12);
        prop_assert!(stats.max_event_energy_rel < 1e-12);
        let ke1 = out.total_kinetic();
        let p1 = out.total_momentum();
        prop_assert!(((ke1 - ke0) / ke0).abs() < 1e-12);
        for a in 0..d {
            prop_assert!((p1[a] - p0[a]).abs() < 1e-12 * ke0);
        }
    }
}

//! Cell-local stochastic binary collisions. The kernel is deliberately
//! generic: accepted pairs scatter isotropically in their center-of-momentum
//! frame with the relative speed preserved, which conserves monad count,
//! total momentum and total kinetic energy exactly per event. No claim is
//! made about cross sections; the rate is a free parameter.

use rand::Rng;
use rand_distr::{Distribution, Poisson, UnitCircle, UnitSphere};

use crate::error::{QhdError, Result};
use crate::kinetics::ensemble::MonadEnsemble;
use crate::kinetics::rng::stream_rng;

/// Per-call bookkeeping of the collision pass, including the exact changes
/// of the conserved totals (for invariant checks).
#[derive(Debug, Clone, Default)]
pub struct CollisionStats {
    pub candidates: u64,
    pub events: u64,
    /// Change in monad count (zero by construction).
    pub delta_count: i64,
    /// Change in total momentum, by component.
    pub delta_momentum: [f64; 3],
    /// Change in total kinetic energy.
    pub delta_kinetic: f64,
    /// Worst per-event relative momentum defect.
    pub max_event_momentum_rel: f64,
    /// Worst per-event relative kinetic-energy defect.
    pub max_event_energy_rel: f64,
}

/// Scatter one pair: same center-of-momentum velocity, relative velocity
/// rotated to a random direction with its length preserved. In one
/// dimension the only momentum- and energy-conserving nontrivial outcome is
/// the exchange of velocities, so that is what happens there.
fn scatter<R: Rng>(v1: &mut [f64], v2: &mut [f64], rng: &mut R) {
    let d = v1.len();
    let mut com = [0.0f64; 3];
    let mut rel = [0.0f64; 3];
    for a in 0..d {
        com[a] = 0.5 * (v1[a] + v2[a]);
        rel[a] = v1[a] - v2[a];
    }
    let speed = rel[..d].iter().map(|r| r * r).sum::<f64>().sqrt();
    let mut dir = [0.0f64; 3];
    match d {
        1 => dir[0] = -rel[0].signum(),
        2 => {
            let u: [f64; 2] = UnitCircle.sample(rng);
            dir[..2].copy_from_slice(&u);
        }
        _ => {
            let u: [f64; 3] = UnitSphere.sample(rng);
            dir.copy_from_slice(&u);
        }
    }
    for a in 0..d {
        let half = 0.5 * speed * dir[a];
        v1[a] = com[a] + half;
        v2[a] = com[a] - half;
    }
}

/// Run one collision sweep. Monads are binned into cubic cells of edge
/// `cell_size` (which must tile the box); within each cell the number of
/// candidate pairs is Poisson with mean `rate * n_cell * dt / 2`, and every
/// candidate is accepted. Randomness comes from the per-(seed, step, cell)
/// streams, so the sweep is reproducible regardless of evaluation order.
/// The returned ensemble has its step counter advanced.
pub fn collide(
    ens: &MonadEnsemble,
    cell_size: f64,
    rate: f64,
    dt: f64,
) -> Result<(MonadEnsemble, CollisionStats)> {
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(QhdError::Validation("cell_size must be positive".into()));
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(QhdError::Validation("collision rate must be >= 0".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(QhdError::Validation("dt must be positive".into()));
    }
    let d = ens.dim();
    let mut cells_per_axis = Vec::with_capacity(d);
    for (axis, &length) in ens.bounds().lengths().iter().enumerate() {
        let n = length / cell_size;
        if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
            return Err(QhdError::Validation(format!(
                "cell_size {cell_size} does not tile box axis {axis} (length {length})"
            )));
        }
        cells_per_axis.push(n.round() as usize);
    }
    let n_cells: usize = cells_per_axis.iter().product();
    if n_cells as u64 > u32::MAX as u64 {
        return Err(QhdError::Validation(
            "cell count exceeds the 32-bit stream budget".into(),
        ));
    }

    // Bin monads with a counting sort into one flat index table.
    let mut cell_of = vec![0usize; ens.count()];
    let mut counts = vec![0usize; n_cells];
    for i in 0..ens.count() {
        let mut cell = 0usize;
        for a in 0..d {
            let idx = ((ens.positions()[[i, a]] / cell_size) as usize).min(cells_per_axis[a] - 1);
            cell = cell * cells_per_axis[a] + idx;
        }
        cell_of[i] = cell;
        counts[cell] += 1;
    }
    let mut offsets = vec![0usize; n_cells + 1];
    for cell in 0..n_cells {
        offsets[cell + 1] = offsets[cell] + counts[cell];
    }
    let mut members = vec![0usize; ens.count()];
    let mut cursor = offsets.clone();
    for i in 0..ens.count() {
        let cell = cell_of[i];
        members[cursor[cell]] = i;
        cursor[cell] += 1;
    }

    let mut out = ens.clone();
    let mut stats = CollisionStats::default();
    let seed = ens.seed();
    let step = ens.step();
    let mu = ens.mu();

    for cell in 0..n_cells {
        let list = &members[offsets[cell]..offsets[cell + 1]];
        let n_cell = list.len();
        if n_cell < 2 {
            continue;
        }
        let mut rng = stream_rng(seed, step, cell as u64);
        let mean_events = 0.5 * rate * n_cell as f64 * dt;
        let events = if mean_events > 0.0 {
            Poisson::new(mean_events)
                .expect("mean_events is positive and finite")
                .sample(&mut rng) as u64
        } else {
            0
        };
        stats.candidates += events;
        for _ in 0..events {
            let i = list[rng.random_range(0..n_cell)];
            let j = loop {
                let j = list[rng.random_range(0..n_cell)];
                if j != i {
                    break j;
                }
            };
            let mut v1 = [0.0f64; 3];
            let mut v2 = [0.0f64; 3];
            for a in 0..d {
                v1[a] = out.velocities()[[i, a]];
                v2[a] = out.velocities()[[j, a]];
            }
            let p_before: Vec<f64> = (0..d).map(|a| mu * (v1[a] + v2[a])).collect();
            let ke_before = 0.5
                * mu
                * (v1[..d].iter().map(|v| v * v).sum::<f64>()
                    + v2[..d].iter().map(|v| v * v).sum::<f64>());
            scatter(&mut v1[..d], &mut v2[..d], &mut rng);
            let ke_after = 0.5
                * mu
                * (v1[..d].iter().map(|v| v * v).sum::<f64>()
                    + v2[..d].iter().map(|v| v * v).sum::<f64>());
            let momentum_scale: f64 = mu
                * (v1[..d].iter().map(|v| v.abs()).sum::<f64>()
                    + v2[..d].iter().map(|v| v.abs()).sum::<f64>())
                .max(f64::MIN_POSITIVE);
            let mut momentum_defect = 0.0f64;
            for a in 0..d {
                let p_after = mu * (v1[a] + v2[a]);
                let dp = p_after - p_before[a];
                stats.delta_momentum[a] += dp;
                momentum_defect += dp * dp;
            }
            let momentum_defect = momentum_defect.sqrt();
            let energy_defect = ke_after - ke_before;
            stats.delta_kinetic += energy_defect;
            stats.max_event_momentum_rel = stats
                .max_event_momentum_rel
                .max(momentum_defect / momentum_scale);
            stats.max_event_energy_rel = stats
                .max_event_energy_rel
                .max((energy_defect / ke_before.max(f64::MIN_POSITIVE)).abs());
            for a in 0..d {
                out.velocities_mut()[[i, a]] = v1[a];
                out.velocities_mut()[[j, a]] = v2[a];
            }
            stats.events += 1;
        }
    }
    out.advance_step();
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::ensemble::PeriodicBox;
    use ndarray::Array2;
    use rand::SeedableRng;

    #[test]
    fn head_on_1d_pair_exchanges_velocities() {
        let mut v1 = [1.0];
        let mut v2 = [-1.0];
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0);
        scatter(&mut v1, &mut v2, &mut rng);
        assert_eq!(v1[0], -1.0);
        assert_eq!(v2[0], 1.0);
    }

    #[test]
    fn scatter_conserves_momentum_and_energy_3d() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let mut v1 = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let mut v2 = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let p0: Vec<f64> = (0..3).map(|a| v1[a] + v2[a]).collect();
            let ke0: f64 = v1.iter().chain(v2.iter()).map(|v| v * v).sum();
            scatter(&mut v1, &mut v2, &mut rng);
            let ke1: f64 = v1.iter().chain(v2.iter()).map(|v| v * v).sum();
            for a in 0..3 {
                assert!((v1[a] + v2[a] - p0[a]).abs() < 1e-12 * (1.0 + p0[a].abs()));
            }
            assert!(((ke1 - ke0) / ke0).abs() < 1e-12);
        }
    }

    #[test]
    fn collide_is_reproducible_and_conserving() {
        let bounds = PeriodicBox::new(vec![8.0, 8.0, 8.0]).unwrap();
        let ens =
            MonadEnsemble::maxwellian(5000, 1.0, bounds, 1.0, &[0.0, 0.0, 0.0], 31).unwrap();
        let (out1, stats1) = collide(&ens, 1.0, 2.0, 0.05).unwrap();
        let (out2, stats2) = collide(&ens, 1.0, 2.0, 0.05).unwrap();
        assert!(stats1.events > 50, "events {}", stats1.events);
        assert_eq!(stats1.events, stats2.events);
        assert_eq!(out1.velocities(), out2.velocities());
        assert_eq!(stats1.delta_count, 0);
        assert!(stats1.max_event_momentum_rel < 1e-12);
        assert!(stats1.max_event_energy_rel < 1e-12);

        let p0 = ens.total_momentum();
        let p1 = out1.total_momentum();
        let scale: f64 = ens
            .velocities()
            .iter()
            .map(|v| ens.mu() * v.abs())
            .sum::<f64>();
        for a in 0..3 {
            assert!((p1[a] - p0[a]).abs() < 1e-12 * scale);
        }
        let ke0 = ens.total_kinetic();
        let ke1 = out1.total_kinetic();
        assert!(((ke1 - ke0) / ke0).abs() < 1e-12);
    }

    #[test]
    fn cell_size_must_tile_box() {
        let bounds = PeriodicBox::new(vec![8.0]).unwrap();
        let pos = Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap();
        let vel = Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap();
        let ens = MonadEnsemble::new(pos, vel, 1.0, bounds, 1).unwrap();
        assert!(collide(&ens, 3.0, 1.0, 0.1).is_err());
        assert!(collide(&ens, 2.0, 1.0, 0.1).is_ok());
    }

    #[test]
    fn cold_anisotropic_ensemble_relaxes_to_maxwellian() {
        // Long-run statistics against the Maxwell-Boltzmann limit: component
        // variances equilibrate and the excess kurtosis of each component
        // goes to zero.
        let bounds = PeriodicBox::new(vec![4.0, 4.0, 4.0]).unwrap();
        let count = 100_000;
        let mut pos = Array2::zeros((count, 3));
        let mut vel = Array2::zeros((count, 3));
        let mut rng = crate::kinetics::tagged_rng(17, 9);
        for i in 0..count {
            for a in 0..3 {
                pos[[i, a]] = rng.random_range(0.0..4.0);
            }
            // Bimodal x velocities, cold y/z: kurtosis excess -2 on x.
            vel[[i, 0]] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let mut ens = MonadEnsemble::new(pos, vel, 1.0, bounds, 17).unwrap();
        for _ in 0..40 {
            let (next, _) = collide(&ens, 1.0, 8.0, 0.1).unwrap();
            ens = next;
        }
        let n = count as f64;
        let mut variances = [0.0f64; 3];
        for a in 0..3 {
            let col = ens.velocities().column(a);
            let mean: f64 = col.iter().sum::<f64>() / n;
            let var: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let m4: f64 = col.iter().map(|&v| (v - mean).powi(4)).sum::<f64>() / n;
            let kurtosis_excess = m4 / (var * var) - 3.0;
            variances[a] = var;
            assert!(
                kurtosis_excess.abs() < 0.05,
                "axis {a}: excess kurtosis {kurtosis_excess}"
            );
        }
        // Equipartition: each component carries 1/3 of the initial variance.
        for a in 0..3 {
            assert!(
                (variances[a] - 1.0 / 3.0).abs() < 0.01,
                "axis {a}: var {}",
                variances[a]
            );
        }
    }
}

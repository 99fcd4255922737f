//! The monad ensemble: positions and velocities in a periodic box, external
//! forces, and velocity-Verlet streaming.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{QhdError, Result};
use crate::kinetics::rng::tagged_rng;

/// Periodic simulation box `[0, L_a)` per axis, `d <= 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicBox {
    lengths: Vec<f64>,
}

impl PeriodicBox {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 3 {
            return Err(QhdError::Validation(format!(
                "box dimension must be 1..=3, got {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(QhdError::Validation(
                "box lengths must be positive and finite".into(),
            ));
        }
        Ok(Self { lengths })
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let length = self.lengths[axis];
        let wrapped = x.rem_euclid(length);
        // rem_euclid can return exactly `length` for tiny negative inputs.
        if wrapped >= length {
            0.0
        } else {
            wrapped
        }
    }
}

/// External force field acting on each monad. Analytic variants only; the
/// field-layer sampled potentials have no monad-side counterpart.
#[derive(Debug, Clone, PartialEq)]
pub enum MonadForce {
    None,
    /// `V = 1/2 mu omega^2 |x - center|^2`, acceleration `-omega^2 (x - c)`.
    Harmonic { omega: f64, center: Vec<f64> },
    /// Constant acceleration (uniform gravity).
    Uniform { accel: Vec<f64> },
}

impl MonadForce {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            MonadForce::None => Ok(()),
            MonadForce::Harmonic { omega, center } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(QhdError::Validation("harmonic omega must be > 0".into()));
                }
                if center.len() != dim {
                    return Err(QhdError::Validation(format!(
                        "harmonic center needs {dim} entries"
                    )));
                }
                Ok(())
            }
            MonadForce::Uniform { accel } => {
                if accel.len() != dim {
                    return Err(QhdError::Validation(format!(
                        "uniform acceleration needs {dim} entries"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Acceleration at position `x` (mass-independent for both variants).
    pub fn acceleration(&self, x: &[f64], out: &mut [f64]) {
        match self {
            MonadForce::None => out.fill(0.0),
            MonadForce::Harmonic { omega, center } => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o = -omega * omega * (x[a] - center[a]);
                }
            }
            MonadForce::Uniform { accel } => out.copy_from_slice(accel),
        }
    }

    /// Potential energy of one monad of mass `mu` at `x`.
    pub fn potential(&self, x: &[f64], mu: f64) -> f64 {
        match self {
            MonadForce::None => 0.0,
            MonadForce::Harmonic { omega, center } => {
                let r2: f64 = x
                    .iter()
                    .zip(center.iter())
                    .map(|(&xa, &ca)| (xa - ca) * (xa - ca))
                    .sum();
                0.5 * mu * omega * omega * r2
            }
            MonadForce::Uniform { accel } => {
                -mu * x.iter().zip(accel.iter()).map(|(&xa, &ga)| xa * ga).sum::<f64>()
            }
        }
    }
}

/// Classical ensemble: `count x d` positions and velocities, monad mass,
/// periodic box, and the seed/step pair that keys every random stream.
#[derive(Debug, Clone)]
pub struct MonadEnsemble {
    positions: Array2<f64>,
    velocities: Array2<f64>,
    mu: f64,
    bounds: PeriodicBox,
    seed: u64,
    step: u64,
}

impl MonadEnsemble {
    pub fn new(
        positions: Array2<f64>,
        velocities: Array2<f64>,
        mu: f64,
        bounds: PeriodicBox,
        seed: u64,
    ) -> Result<Self> {
        Self::with_step(positions, velocities, mu, bounds, seed, 0)
    }

    pub(crate) fn with_step(
        mut positions: Array2<f64>,
        velocities: Array2<f64>,
        mu: f64,
        bounds: PeriodicBox,
        seed: u64,
        step: u64,
    ) -> Result<Self> {
        let d = bounds.dim();
        if positions.ncols() != d || velocities.ncols() != d {
            return Err(QhdError::Validation(format!(
                "positions/velocities must have {d} columns"
            )));
        }
        if positions.nrows() != velocities.nrows() {
            return Err(QhdError::Validation(
                "positions and velocities must have the same monad count".into(),
            ));
        }
        if positions.nrows() < 2 {
            return Err(QhdError::Validation("need at least 2 monads".into()));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(QhdError::Validation("monad mass must be positive".into()));
        }
        if velocities.iter().any(|v| !v.is_finite())
            || positions.iter().any(|x| !x.is_finite())
        {
            return Err(QhdError::Validation(
                "ensemble state must be finite".into(),
            ));
        }
        for mut row in positions.rows_mut() {
            for a in 0..d {
                row[a] = bounds.wrap(a, row[a]);
            }
        }
        Ok(Self {
            positions,
            velocities,
            mu,
            bounds,
            seed,
            step,
        })
    }

    pub fn count(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn bounds(&self) -> &PeriodicBox {
        &self.bounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.positions
    }

    pub fn velocities(&self) -> &Array2<f64> {
        &self.velocities
    }

    pub(crate) fn velocities_mut(&mut self) -> &mut Array2<f64> {
        &mut self.velocities
    }

    pub(crate) fn advance_step(&mut self) {
        self.step += 1;
    }

    /// Total momentum, padded to three components.
    pub fn total_momentum(&self) -> [f64; 3] {
        let mut p = [0.0; 3];
        for row in self.velocities.rows() {
            for (a, &v) in row.iter().enumerate() {
                p[a] += self.mu * v;
            }
        }
        p
    }

    /// Total kinetic energy `sum 1/2 mu v^2`.
    pub fn total_kinetic(&self) -> f64 {
        0.5 * self.mu * self.velocities.iter().map(|&v| v * v).sum::<f64>()
    }

    /// Total potential energy under the given force field.
    pub fn total_potential(&self, force: &MonadForce) -> f64 {
        self.positions
            .rows()
            .into_iter()
            .map(|row| force.potential(row.as_slice().expect("row-major"), self.mu))
            .sum()
    }

    /// Split into even-index and odd-index halves (for noise-floor
    /// estimation). Seeds are re-tagged so the halves stay independent.
    pub fn split_halves(&self) -> (MonadEnsemble, MonadEnsemble) {
        let take = |parity: usize| -> MonadEnsemble {
            let rows: Vec<usize> = (0..self.count()).filter(|i| i % 2 == parity).collect();
            let mut pos = Array2::zeros((rows.len(), self.dim()));
            let mut vel = Array2::zeros((rows.len(), self.dim()));
            for (k, &i) in rows.iter().enumerate() {
                pos.row_mut(k).assign(&self.positions.row(i));
                vel.row_mut(k).assign(&self.velocities.row(i));
            }
            MonadEnsemble::with_step(
                pos,
                vel,
                self.mu,
                self.bounds.clone(),
                self.seed ^ (0xa5a5_a5a5 + parity as u64),
                self.step,
            )
            .expect("halves of a valid ensemble are valid")
        };
        (take(0), take(1))
    }

    /// Uniform positions, Maxwellian velocities: each component is normal
    /// with variance `temperature` around the drift, so the stress tensor is
    /// `mu T delta_ij` in expectation.
    pub fn maxwellian(
        count: usize,
        mu: f64,
        bounds: PeriodicBox,
        temperature: f64,
        drift: &[f64],
        seed: u64,
    ) -> Result<Self> {
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(QhdError::Validation(
                "temperature parameter must be >= 0".into(),
            ));
        }
        let d = bounds.dim();
        if drift.len() != d {
            return Err(QhdError::Validation(format!("drift needs {d} entries")));
        }
        let mut rng = tagged_rng(seed, 1);
        let normal = Normal::new(0.0, temperature.sqrt()).map_err(|e| {
            QhdError::Validation(format!("bad temperature parameter: {e}"))
        })?;
        let mut pos = Array2::zeros((count, d));
        let mut vel = Array2::zeros((count, d));
        for i in 0..count {
            for a in 0..d {
                pos[[i, a]] = rng.random_range(0.0..bounds.lengths()[a]);
                vel[[i, a]] = drift[a] + normal.sample(&mut rng);
            }
        }
        Self::new(pos, vel, mu, bounds, seed)
    }

    /// Maxwellian velocities with a small sinusoidal density modulation
    /// `rho(x) ~ 1 + amplitude sin(2 pi x_0 / L_0)` along the first axis
    /// (rejection sampled), for sound-wave runs.
    pub fn sinusoidal_density(
        count: usize,
        mu: f64,
        bounds: PeriodicBox,
        temperature: f64,
        amplitude: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(QhdError::Validation(
                "perturbation amplitude must be in [0, 1)".into(),
            ));
        }
        let d = bounds.dim();
        let mut rng = tagged_rng(seed, 2);
        let normal = Normal::new(0.0, temperature.sqrt()).map_err(|e| {
            QhdError::Validation(format!("bad temperature parameter: {e}"))
        })?;
        let length0 = bounds.lengths()[0];
        let mut pos = Array2::zeros((count, d));
        let mut vel = Array2::zeros((count, d));
        for i in 0..count {
            // Rejection sample the modulated axis.
            let x0 = loop {
                let x: f64 = rng.random_range(0.0..length0);
                let p = (1.0 + amplitude * (2.0 * std::f64::consts::PI * x / length0).sin())
                    / (1.0 + amplitude);
                if rng.random::<f64>() < p {
                    break x;
                }
            };
            pos[[i, 0]] = x0;
            for a in 1..d {
                pos[[i, a]] = rng.random_range(0.0..bounds.lengths()[a]);
            }
            for a in 0..d {
                vel[[i, a]] = normal.sample(&mut rng);
            }
        }
        Self::new(pos, vel, mu, bounds, seed)
    }
}

/// One velocity-Verlet step under the external force, with periodic wrap.
/// Pure: returns the advanced ensemble. The step counter is advanced by the
/// collision pass, not here, so a stream-only simulation keeps step 0
/// streams unused.
pub fn stream_and_force(ens: &MonadEnsemble, force: &MonadForce, dt: f64) -> Result<MonadEnsemble> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(QhdError::Validation("dt must be positive".into()));
    }
    force.validate(ens.dim())?;
    let d = ens.dim();
    let count = ens.count();
    let mut positions = ens.positions.clone();
    let mut velocities = ens.velocities.clone();
    {
        let pos = positions.as_slice_mut().expect("row-major layout");
        let vel = velocities.as_slice_mut().expect("row-major layout");
        let mut x = [0.0f64; 3];
        let mut acc = [0.0f64; 3];
        for i in 0..count {
            let base = i * d;
            x[..d].copy_from_slice(&pos[base..base + d]);
            force.acceleration(&x[..d], &mut acc[..d]);
            for a in 0..d {
                vel[base + a] += 0.5 * dt * acc[a];
                x[a] = ens.bounds.wrap(a, x[a] + vel[base + a] * dt);
            }
            force.acceleration(&x[..d], &mut acc[..d]);
            for a in 0..d {
                vel[base + a] += 0.5 * dt * acc[a];
                pos[base + a] = x[a];
            }
        }
    }
    MonadEnsemble::with_step(
        positions,
        velocities,
        ens.mu,
        ens.bounds.clone(),
        ens.seed,
        ens.step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_box(d: usize) -> PeriodicBox {
        PeriodicBox::new(vec![10.0; d]).unwrap()
    }

    #[test]
    fn free_streaming_is_exact() {
        let pos = Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap();
        let vel = Array2::from_shape_vec((2, 1), vec![0.5, -0.25]).unwrap();
        let ens = MonadEnsemble::new(pos, vel, 1.0, small_box(1), 1).unwrap();
        let dt = 0.125;
        let out = stream_and_force(&ens, &MonadForce::None, dt).unwrap();
        assert_eq!(out.positions()[[0, 0]], 1.0 + 0.5 * dt);
        assert_eq!(out.positions()[[1, 0]], 2.0 - 0.25 * dt);
        assert_eq!(out.velocities()[[0, 0]], 0.5);
    }

    #[test]
    fn streaming_wraps_positions() {
        let pos = Array2::from_shape_vec((2, 1), vec![9.9, 0.1]).unwrap();
        let vel = Array2::from_shape_vec((2, 1), vec![2.0, -2.0]).unwrap();
        let ens = MonadEnsemble::new(pos, vel, 1.0, small_box(1), 1).unwrap();
        let out = stream_and_force(&ens, &MonadForce::None, 0.1).unwrap();
        assert!((out.positions()[[0, 0]] - 0.1).abs() < 1e-12);
        assert!((out.positions()[[1, 0]] - 9.9).abs() < 1e-12);
    }

    #[test]
    fn uniform_gravity_matches_closed_form() {
        // x(t) = x0 + v0 t + g t^2 / 2 exactly per step for constant force.
        let g = -0.3;
        let pos = Array2::from_shape_vec((2, 1), vec![5.0, 5.0]).unwrap();
        let vel = Array2::from_shape_vec((2, 1), vec![0.2, 0.0]).unwrap();
        let mut ens = MonadEnsemble::new(pos, vel, 2.0, small_box(1), 1).unwrap();
        let force = MonadForce::Uniform { accel: vec![g] };
        let dt = 0.05;
        let steps = 40;
        for _ in 0..steps {
            ens = stream_and_force(&ens, &force, dt).unwrap();
        }
        let t = dt * steps as f64;
        let expect_x = 5.0 + 0.2 * t + 0.5 * g * t * t;
        let expect_v = 0.2 + g * t;
        assert!((ens.positions()[[0, 0]] - expect_x).abs() < 1e-10);
        assert!((ens.velocities()[[0, 0]] - expect_v).abs() < 1e-10);
    }

    #[test]
    fn harmonic_energy_drift_is_bounded_and_quadratic_in_dt() {
        // Verlet oracle: no secular growth over 10^4 steps and the drift
        // amplitude scales like dt^2.
        let force = MonadForce::Harmonic {
            omega: 1.0,
            center: vec![5.0],
        };
        let run = |dt: f64| -> f64 {
            let pos = Array2::from_shape_vec((2, 1), vec![6.0, 5.0]).unwrap();
            let vel = Array2::from_shape_vec((2, 1), vec![0.0, 0.0]).unwrap();
            let mut ens = MonadEnsemble::new(pos, vel, 1.5, small_box(1), 1).unwrap();
            let e0 = ens.total_kinetic() + ens.total_potential(&force);
            let mut worst: f64 = 0.0;
            for _ in 0..10_000 {
                ens = stream_and_force(&ens, &force, dt).unwrap();
                let e = ens.total_kinetic() + ens.total_potential(&force);
                worst = worst.max(((e - e0) / e0).abs());
            }
            worst
        };
        let coarse = run(0.02);
        let fine = run(0.01);
        assert!(coarse < 1e-3, "drift {coarse}");
        let ratio = coarse / fine;
        assert!(
            (2.5..6.0).contains(&ratio),
            "dt^2 scaling violated: {coarse} / {fine} = {ratio}"
        );
    }

    #[test]
    fn maxwellian_moments_match_generator() {
        let temperature = 0.7;
        let drift = [0.25, -0.1, 0.0];
        let ens = MonadEnsemble::maxwellian(
            200_000,
            1.0,
            small_box(3),
            temperature,
            &drift,
            99,
        )
        .unwrap();
        let n = ens.count() as f64;
        for a in 0..3 {
            let mean: f64 = ens.velocities().column(a).iter().sum::<f64>() / n;
            let var: f64 = ens
                .velocities()
                .column(a)
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n;
            let se_mean = (temperature / n).sqrt();
            assert!(
                (mean - drift[a]).abs() < 3.5 * se_mean,
                "axis {a} mean {mean}"
            );
            let se_var = temperature * (2.0 / n).sqrt();
            assert!(
                (var - temperature).abs() < 3.5 * se_var,
                "axis {a} var {var}"
            );
        }
    }

    #[test]
    fn split_halves_partition_the_ensemble() {
        let ens =
            MonadEnsemble::maxwellian(1000, 1.0, small_box(2), 1.0, &[0.0, 0.0], 5).unwrap();
        let (a, b) = ens.split_halves();
        assert_eq!(a.count() + b.count(), 1000);
        assert_eq!(a.positions()[[0, 0]], ens.positions()[[0, 0]]);
        assert_eq!(b.positions()[[0, 0]], ens.positions()[[1, 0]]);
    }

    #[test]
    fn rejects_degenerate_ensembles() {
        let pos = Array2::zeros((1, 1));
        let vel = Array2::zeros((1, 1));
        assert!(MonadEnsemble::new(pos, vel, 1.0, small_box(1), 1).is_err());
    }
}

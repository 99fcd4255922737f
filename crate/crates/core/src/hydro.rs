//! Direct evolution of the density/phase pair under the continuity and
//! quantum Hamilton-Jacobi equations, for cross-validation against the
//! split-step wave engine.
//!
//! Evolving the phase keeps the flow exactly irrotational (`u = dS/dx / m`
//! is a gradient by construction). Internally the density is carried as its
//! logarithm: the continuity equation becomes
//! `d(ln rho)/dt = -(u . d(ln rho) + div u)` and the curvature potential
//! takes its `c (lap xi + |grad xi|^2 / 2)` form with `xi = ln rho`. This
//! keeps the density positive by construction and keeps every operand O(1)
//! in the dilute tails, where the direct form amplifies grid-scale noise
//! through the `1/sqrt(rho)` division until the density crosses zero.
//! Spatial operators are spectral, time stepping is classical fourth-order
//! Runge-Kutta, quadratic products are de-aliased with the 2/3 rule by
//! default.
//!
//! The log form still breaks down at genuine nodes: when the density falls
//! below the floor the run aborts and returns its partial results rather
//! than regularizing silently.

use ndarray::ArrayD;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{QhdError, Result};
use crate::field::{all_finite_real, MadelungPair};
use crate::observables::{
    constitutive_residual, density_floor, energy_report_pair, RHO_FLOOR_FACTOR,
};
use crate::potential::{ConstitutiveParams, PotentialSpec};
use crate::schrodinger::EvolveConfig;
use crate::spectral::SpectralOps;
use crate::transform::phase_windings;

/// Engine switches. De-aliasing is on by default; the exponential filter is
/// for long runs and off by default.
#[derive(Debug, Clone, Copy)]
pub struct HydroOptions {
    pub dealias: bool,
    pub spectral_filter: bool,
}

impl Default for HydroOptions {
    fn default() -> Self {
        Self {
            dealias: true,
            spectral_filter: false,
        }
    }
}

/// How a run ended. Numerical breakdown is reported here, together with the
/// partial results, instead of discarding the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Completed,
    NodeFormation {
        step: usize,
        min_rho: f64,
        floor: f64,
    },
    NonFinite {
        step: usize,
    },
}

#[derive(Debug, Clone)]
pub struct HydroRun {
    pub pair: MadelungPair,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<MadelungPair>,
    pub outcome: RunOutcome,
}

struct HydroRhs<'a> {
    ops: &'a SpectralOps,
    potential: &'a PotentialSpec,
    params: &'a ConstitutiveParams,
    mass: f64,
    /// Constant phase-gradient offsets from the winding of the initial state.
    slopes: Vec<f64>,
    dealias: bool,
}

impl<'a> HydroRhs<'a> {
    /// Right-hand sides in the `(xi = ln rho, S_periodic)` variables:
    /// `d xi/dt = -(u . grad xi + div u)`,
    /// `dS/dt = -|grad S|^2/2m - c (lap xi + |grad xi|^2/2) - U - V`.
    fn eval(&self, xi: &ArrayD<f64>, phase: &ArrayD<f64>) -> (ArrayD<f64>, ArrayD<f64>) {
        let grid = self.ops.grid();
        let rank = grid.rank();

        let mut d_xi = ArrayD::<f64>::zeros(xi.raw_dim());
        let mut phase_kinetic = ArrayD::<f64>::zeros(xi.raw_dim());
        let mut xi_quadratic = ArrayD::<f64>::zeros(xi.raw_dim());
        for axis in 0..rank {
            let mut g = self.ops.gradient_axis(phase, axis);
            let slope = self.slopes[axis];
            if slope != 0.0 {
                g.mapv_inplace(|v| v + slope);
            }
            let dxi = self.ops.gradient_axis(xi, axis);
            let mut advection = &g * &dxi;
            if self.dealias {
                self.ops.dealias_two_thirds(&mut advection);
            }
            advection += &self.ops.second_derivative_axis(phase, axis);
            d_xi -= &advection.mapv(|v| v / self.mass);
            phase_kinetic += &(&g * &g);
            xi_quadratic += &(&dxi * &dxi);
        }
        if self.dealias {
            self.ops.dealias_two_thirds(&mut phase_kinetic);
            self.ops.dealias_two_thirds(&mut xi_quadratic);
        }

        // Curvature (quantum) potential in its log-density form:
        // W = c lap(xi) + (c/2) |grad xi|^2, with c = -hbar^2/4m on the
        // quantum branch and 0 on the classical one.
        let c = self.params.c;
        let mut d_phase = phase_kinetic.mapv(|v| -v / (2.0 * self.mass));
        if c != 0.0 {
            let lap_xi = self.ops.laplacian(xi);
            for ((dp, &l), &q) in d_phase
                .iter_mut()
                .zip(lap_xi.iter())
                .zip(xi_quadratic.iter())
            {
                *dp -= c * (l + 0.5 * q);
            }
        }
        if !self.params.nonlinear.is_none() {
            let rho = xi.mapv(f64::exp);
            if let Some(u) = self
                .params
                .nonlinear
                .potential_term(&rho, RHO_FLOOR_FACTOR * max_value(&rho))
            {
                d_phase -= &u;
            }
        }
        d_phase -= self.potential.total();
        (d_xi, d_phase)
    }
}

fn max_value(f: &ArrayD<f64>) -> f64 {
    f.iter().copied().fold(0.0, f64::max)
}

/// Instantaneous continuity defect of a pair state: the divergence-form flux
/// route (as stepped by the engine) against the pointwise product-rule
/// expansion. Zero for uniform states, aliasing-level for resolved ones.
fn continuity_defect_pair(
    ops: &SpectralOps,
    rhs: &HydroRhs<'_>,
    xi: &ArrayD<f64>,
    phase: &ArrayD<f64>,
) -> f64 {
    let grid = ops.grid();
    let rho = xi.mapv(f64::exp);
    // Route 1: the stepped law, d(rho)/dt = rho d(xi)/dt.
    let (d_xi, _) = rhs.eval(xi, phase);
    let mut residual = &d_xi * &rho;
    // Route 2: the product-rule expansion on rho itself.
    for axis in 0..grid.rank() {
        let mut u = ops.gradient_axis(phase, axis);
        let slope = rhs.slopes[axis];
        if slope != 0.0 {
            u.mapv_inplace(|v| v + slope);
        }
        u.mapv_inplace(|v| v / rhs.mass);
        let drho_a = ops.gradient_axis(&rho, axis);
        let du_a = ops.gradient_axis(&u, axis);
        for ((((r, &uv), &rv), &dr), &du) in residual
            .iter_mut()
            .zip(u.iter())
            .zip(rho.iter())
            .zip(drho_a.iter())
            .zip(du_a.iter())
        {
            *r += uv * dr + rv * du;
        }
    }
    (residual.iter().map(|r| r * r).sum::<f64>() * grid.cell_volume()).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn record_pair(
    ops: &SpectralOps,
    rhs: &HydroRhs<'_>,
    xi: &ArrayD<f64>,
    pair: &MadelungPair,
    hbar: f64,
    mass: f64,
    potential: &PotentialSpec,
    params: &ConstitutiveParams,
    step: usize,
    time: f64,
) -> DiagnosticsRecord {
    let report = energy_report_pair(ops, pair, hbar, mass, potential);
    let res_constitutive = constitutive_residual(ops, pair.rho(), params)
        .map(|r| r.l2_total())
        .unwrap_or(f64::NAN);
    let periodic = strip_ramp(ops.grid(), pair.phase(), &rhs.slopes);
    let res_continuity = continuity_defect_pair(ops, rhs, xi, &periodic);
    match report {
        Ok(rep) => DiagnosticsRecord {
            step,
            time,
            norm: pair.total_mass(),
            h_classical: rep.h_classical,
            h_internal: rep.h_internal,
            h_total: rep.h_total,
            h_eq40: rep.h_eq40,
            fisher_total: rep.fisher.total,
            fisher_blocks: rep.fisher.per_block,
            res_constitutive,
            res_continuity,
        },
        Err(_) => DiagnosticsRecord {
            step,
            time,
            norm: pair.total_mass(),
            h_classical: f64::NAN,
            h_internal: f64::NAN,
            h_total: f64::NAN,
            h_eq40: f64::NAN,
            fisher_total: f64::NAN,
            fisher_blocks: vec![f64::NAN; ops.grid().n_particles()],
            res_constitutive,
            res_continuity,
        },
    }
}

/// Evolve a density/phase pair. The phase may wind around the torus (the
/// winding is detected once and carried as a constant gradient offset; it is
/// a topological invariant of the flow). Mass renormalization drift is
/// recorded, never corrected.
#[allow(clippy::too_many_arguments)]
pub fn evolve_madelung(
    pair: &MadelungPair,
    hbar: f64,
    mass: f64,
    potential: &PotentialSpec,
    params: &ConstitutiveParams,
    cfg: &EvolveConfig,
    opts: &HydroOptions,
) -> Result<HydroRun> {
    cfg.validate()?;
    if cfg.imaginary_time {
        return Err(QhdError::Validation(
            "the density/phase engine runs in real time only".into(),
        ));
    }
    if !(hbar.is_finite() && hbar > 0.0 && mass.is_finite() && mass > 0.0) {
        return Err(QhdError::Validation(
            "hbar and mass must be positive".into(),
        ));
    }
    if params.c != 0.0 {
        let expect = -hbar * hbar / (4.0 * mass);
        if ((params.c - expect) / expect).abs() > 1e-9 {
            return Err(QhdError::Validation(format!(
                "params.c = {} is inconsistent with -hbar^2/4m = {expect}",
                params.c
            )));
        }
    }
    if !params.nonlinear.is_none() && cfg.nonlinear != params.nonlinear {
        // The closure parameters are authoritative for this engine; the
        // config copy must not disagree when set.
        if !cfg.nonlinear.is_none() {
            return Err(QhdError::Validation(
                "cfg.nonlinear disagrees with params.nonlinear".into(),
            ));
        }
    }
    let grid = pair.grid().clone();
    if potential.total().shape() != grid.shape() {
        return Err(QhdError::Validation(
            "potential is not sampled on the pair's grid".into(),
        ));
    }

    let ops = SpectralOps::new(&grid);
    let windings = phase_windings(&grid, pair.phase(), hbar);
    let slopes: Vec<f64> = windings
        .iter()
        .enumerate()
        .map(|(a, &w)| 2.0 * std::f64::consts::PI * hbar * w as f64 / grid.box_lengths()[a])
        .collect();
    let rhs = HydroRhs {
        ops: &ops,
        potential,
        params,
        mass,
        slopes: slopes.clone(),
        dealias: opts.dealias,
    };

    // The floor must hold before the log-density state can even be formed.
    {
        let floor = RHO_FLOOR_FACTOR * pair.max_rho();
        let min_rho = pair.min_rho();
        if min_rho < floor {
            return Ok(HydroRun {
                pair: pair.clone(),
                records: Vec::new(),
                snapshots: Vec::new(),
                outcome: RunOutcome::NodeFormation {
                    step: 0,
                    min_rho,
                    floor,
                },
            });
        }
    }

    // Strip the winding ramp; the engine state phase is periodic.
    let mut xi = pair.rho().mapv(f64::ln);
    let mut phase = strip_ramp(&grid, pair.phase(), &slopes);

    let make_pair = |xi: &ArrayD<f64>, phase: &ArrayD<f64>| -> MadelungPair {
        let full_phase = add_ramp(&grid, phase, &slopes);
        // Raw construction: mass drift is part of the record and must not be
        // renormalized away here.
        MadelungPair::from_raw(grid.clone(), xi.mapv(f64::exp), full_phase)
    };

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let initial = make_pair(&xi, &phase);
    records.push(record_pair(
        &ops, &rhs, &xi, &initial, hbar, mass, potential, params, 0, 0.0,
    ));
    snapshots.push(initial);

    let log_floor = RHO_FLOOR_FACTOR.ln();
    let dt = cfg.dt;
    let mut outcome = RunOutcome::Completed;
    for s in 1..=cfg.steps {
        let xi_max = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xi_min = xi.iter().copied().fold(f64::INFINITY, f64::min);
        if xi_min - xi_max < log_floor {
            outcome = RunOutcome::NodeFormation {
                step: s - 1,
                min_rho: xi_min.exp(),
                floor: RHO_FLOOR_FACTOR * xi_max.exp(),
            };
            break;
        }

        let (k1x, k1p) = rhs.eval(&xi, &phase);
        let (k2x, k2p) = rhs.eval(&axpy(&xi, 0.5 * dt, &k1x), &axpy(&phase, 0.5 * dt, &k1p));
        let (k3x, k3p) = rhs.eval(&axpy(&xi, 0.5 * dt, &k2x), &axpy(&phase, 0.5 * dt, &k2p));
        let (k4x, k4p) = rhs.eval(&axpy(&xi, dt, &k3x), &axpy(&phase, dt, &k3p));
        rk4_update(&mut xi, dt, &k1x, &k2x, &k3x, &k4x);
        rk4_update(&mut phase, dt, &k1p, &k2p, &k3p, &k4p);

        if opts.spectral_filter {
            ops.exponential_filter(&mut xi, 0.1);
            ops.exponential_filter(&mut phase, 0.1);
        }
        if !all_finite_real(&xi) || !all_finite_real(&phase) {
            outcome = RunOutcome::NonFinite { step: s };
            break;
        }
        if s % cfg.record_every == 0 || s == cfg.steps {
            let time = s as f64 * dt;
            let snap = make_pair(&xi, &phase);
            records.push(record_pair(
                &ops, &rhs, &xi, &snap, hbar, mass, potential, params, s, time,
            ));
            snapshots.push(snap);
        }
    }

    Ok(HydroRun {
        pair: make_pair(&xi, &phase),
        records,
        snapshots,
        outcome,
    })
}

fn axpy(y: &ArrayD<f64>, a: f64, x: &ArrayD<f64>) -> ArrayD<f64> {
    let mut out = y.clone();
    for (o, &xv) in out.iter_mut().zip(x.iter()) {
        *o += a * xv;
    }
    out
}

fn rk4_update(
    y: &mut ArrayD<f64>,
    dt: f64,
    k1: &ArrayD<f64>,
    k2: &ArrayD<f64>,
    k3: &ArrayD<f64>,
    k4: &ArrayD<f64>,
) {
    let w = dt / 6.0;
    for ((((v, &a), &b), &c), &d) in y
        .iter_mut()
        .zip(k1.iter())
        .zip(k2.iter())
        .zip(k3.iter())
        .zip(k4.iter())
    {
        *v += w * (a + 2.0 * (b + c) + d);
    }
}

fn strip_ramp(grid: &crate::grid::LatticeGrid, phase: &ArrayD<f64>, slopes: &[f64]) -> ArrayD<f64> {
    if slopes.iter().all(|&s| s == 0.0) {
        return phase.clone();
    }
    let mut out = phase.clone();
    let mut x = vec![0.0; grid.rank()];
    for (flat_idx, v) in out.iter_mut().enumerate() {
        grid.coords_into(flat_idx, &mut x);
        for (a, &slope) in slopes.iter().enumerate() {
            *v -= slope * x[a];
        }
    }
    out
}

fn add_ramp(grid: &crate::grid::LatticeGrid, phase: &ArrayD<f64>, slopes: &[f64]) -> ArrayD<f64> {
    if slopes.iter().all(|&s| s == 0.0) {
        return phase.clone();
    }
    let mut out = phase.clone();
    let mut x = vec![0.0; grid.rank()];
    for (flat_idx, v) in out.iter_mut().enumerate() {
        grid.coords_into(flat_idx, &mut x);
        for (a, &slope) in slopes.iter().enumerate() {
            *v += slope * x[a];
        }
    }
    out
}

/// Discrete residuals of the recorded series against the continuity and
/// scalar momentum (Hamilton-Jacobi) equations, one entry per interior
/// snapshot, using centered time differences at the record cadence.
#[derive(Debug, Clone)]
pub struct HydroResiduals {
    pub continuity: Vec<f64>,
    pub hamilton_jacobi: Vec<f64>,
}

/// Evaluate the recorded-series residuals. `dt_record` is the (uniform)
/// time between consecutive snapshots. Points below the density floor are
/// excluded from the norms; successive phase snapshots are aligned modulo
/// `2 pi hbar` before time differencing.
pub fn hydrodynamic_residuals(
    series: &[MadelungPair],
    dt_record: f64,
    hbar: f64,
    mass: f64,
    potential: &PotentialSpec,
    params: &ConstitutiveParams,
) -> Result<HydroResiduals> {
    if series.len() < 3 {
        return Err(QhdError::SeriesTooShort { len: series.len() });
    }
    if !(dt_record.is_finite() && dt_record > 0.0) {
        return Err(QhdError::Validation("dt_record must be positive".into()));
    }
    let grid = series[0].grid().clone();
    for p in series {
        if p.grid() != &grid {
            return Err(QhdError::Validation(
                "series snapshots live on different grids".into(),
            ));
        }
    }
    let ops = SpectralOps::new(&grid);
    let vol = grid.cell_volume();

    // Align the phase snapshots in time: the polar phase is defined modulo
    // 2 pi hbar per snapshot, so pin each one to its predecessor at the
    // origin corner.
    let quantum = 2.0 * std::f64::consts::PI * hbar;
    let mut offsets = vec![0.0f64; series.len()];
    for k in 1..series.len() {
        let prev = series[k - 1].phase().iter().next().copied().unwrap_or(0.0);
        let cur = series[k].phase().iter().next().copied().unwrap_or(0.0);
        offsets[k] = offsets[k - 1] + quantum * ((prev - cur) / quantum).round();
    }

    let windings = phase_windings(&grid, series[0].phase(), hbar);
    let slopes: Vec<f64> = windings
        .iter()
        .enumerate()
        .map(|(a, &w)| quantum * w as f64 / grid.box_lengths()[a])
        .collect();

    let mut continuity = Vec::new();
    let mut hamilton_jacobi = Vec::new();
    for k in 1..series.len() - 1 {
        let rho = series[k].rho();
        let phase = series[k].phase();
        let floor = density_floor(rho);

        // Continuity: centered d(rho)/dt + div(rho u).
        let mut residual: ArrayD<f64> = (series[k + 1].rho() - series[k - 1].rho())
            .mapv(|v| v / (2.0 * dt_record));
        let periodic = strip_ramp(&grid, phase, &slopes);
        for axis in 0..grid.rank() {
            let mut g = ops.gradient_axis(&periodic, axis);
            if slopes[axis] != 0.0 {
                g.mapv_inplace(|v| v + slopes[axis]);
            }
            let flux = rho
                .iter()
                .zip(g.iter())
                .map(|(&r, &gv)| r * gv / mass)
                .collect::<Vec<f64>>();
            let flux = ArrayD::from_shape_vec(rho.raw_dim(), flux).expect("shape");
            residual += &ops.gradient_axis(&flux, axis);
        }
        let mut sq = 0.0;
        for (&r, &rr) in residual.iter().zip(rho.iter()) {
            if rr >= floor {
                sq += r * r;
            }
        }
        continuity.push((sq * vol).sqrt());

        // Scalar momentum equation: centered dS/dt + |dS|^2/2m + W + U + V.
        let ds_dt = series[k + 1]
            .phase()
            .iter()
            .zip(series[k - 1].phase().iter())
            .map(|(&a, &b)| ((a + offsets[k + 1]) - (b + offsets[k - 1])) / (2.0 * dt_record))
            .collect::<Vec<f64>>();
        let mut residual = ArrayD::from_shape_vec(rho.raw_dim(), ds_dt).expect("shape");
        let mut kinetic = ArrayD::<f64>::zeros(rho.raw_dim());
        for axis in 0..grid.rank() {
            let mut g = ops.gradient_axis(&periodic, axis);
            if slopes[axis] != 0.0 {
                g.mapv_inplace(|v| v + slopes[axis]);
            }
            kinetic += &(&g * &g);
        }
        residual += &kinetic.mapv(|v| v / (2.0 * mass));
        let coeff = params.curvature_coefficient();
        if coeff != 0.0 {
            let sqrt_rho = rho.mapv(f64::sqrt);
            let lap = ops.laplacian(&sqrt_rho);
            for ((r, &l), &s) in residual.iter_mut().zip(lap.iter()).zip(sqrt_rho.iter()) {
                if s * s >= floor {
                    *r += coeff * l / s;
                }
            }
        }
        if let Some(u) = params.nonlinear.potential_term(rho, floor) {
            residual += &u;
        }
        residual += potential.total();
        let mut sq = 0.0;
        for (&r, &rr) in residual.iter().zip(rho.iter()) {
            if rr >= floor {
                sq += r * r;
            }
        }
        hamilton_jacobi.push((sq * vol).sqrt());
    }
    Ok(HydroResiduals {
        continuity,
        hamilton_jacobi,
    })
}

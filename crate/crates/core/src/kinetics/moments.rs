//! Moment projection of the ensemble onto cell-averaged hydrodynamic fields
//! and statistical residuals of the moment equations.
//!
//! Cell averages realize the velocity-space means: `u` is the mean velocity,
//! `sigma_ij = mu <dv_i dv_j>` the stress, `h_i = mu/2 <|dv|^2 dv_i>` the
//! heat flux, `eps = sigma_ii / 2` the internal energy density and
//! `E = mu u^2 / 2 + eps + V` the energy density, with the energy flux
//! `s_i = E u_i + sigma_ij u_j + h_i`. Cells holding fewer than `min_count`
//! monads are masked, not errored.
//!
//! Residuals of the continuity, momentum and energy equations are evaluated
//! with centered differences in time and space on a recorded series. The
//! Monte Carlo noise floor is estimated by evaluating the same residuals on
//! two half-ensembles: systematic discretization bias cancels in their
//! difference, leaving pure sampling noise scaled to the full ensemble.

use crate::error::{QhdError, Result};
use crate::kinetics::ensemble::{MonadEnsemble, MonadForce};

pub const DEFAULT_MIN_CELL_COUNT: usize = 20;

/// Cell-averaged moment fields on a regular grid over the periodic box.
#[derive(Debug, Clone)]
pub struct MomentFields {
    cells_per_axis: Vec<usize>,
    box_lengths: Vec<f64>,
    mu: f64,
    min_count: usize,
    pub count: Vec<usize>,
    /// Number density (count / cell volume).
    pub density: Vec<f64>,
    /// Mean velocity, padded to three components.
    pub velocity: Vec<[f64; 3]>,
    /// Stress tensor, symmetric storage (xx, yy, zz, xy, xz, yz).
    pub stress: Vec<[f64; 6]>,
    /// Heat flux vector.
    pub heat_flux: Vec<[f64; 3]>,
    /// Internal energy density `eps = sigma_ii / 2`.
    pub internal_energy: Vec<f64>,
    /// Energy density `E = mu u^2/2 + eps + V(center)`.
    pub energy: Vec<f64>,
    /// Energy flux `s_i = E u_i + sigma_ij u_j + h_i`.
    pub energy_flux: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

const SYM_INDEX: [[usize; 3]; 3] = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];

impl MomentFields {
    pub fn dim(&self) -> usize {
        self.box_lengths.len()
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.box_lengths
            .iter()
            .zip(self.cells_per_axis.iter())
            .map(|(&l, &n)| l / n as f64)
            .product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.box_lengths[axis] / self.cells_per_axis[axis] as f64
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn stress_component(&self, cell: usize, i: usize, j: usize) -> f64 {
        self.stress[cell][SYM_INDEX[i][j]]
    }

    /// Center coordinates of a cell given its flat index.
    pub fn cell_center(&self, cell: usize, out: &mut [f64]) {
        let mut rem = cell;
        for axis in (0..self.dim()).rev() {
            let n = self.cells_per_axis[axis];
            let idx = rem % n;
            rem /= n;
            out[axis] = (idx as f64 + 0.5) * self.spacing(axis);
        }
    }

    /// Flat index of the neighbour one cell over along `axis` (periodic).
    fn neighbor(&self, cell: usize, axis: usize, offset: isize) -> usize {
        let d = self.dim();
        let mut idx = vec![0usize; d];
        let mut rem = cell;
        for a in (0..d).rev() {
            idx[a] = rem % self.cells_per_axis[a];
            rem /= self.cells_per_axis[a];
        }
        let n = self.cells_per_axis[axis] as isize;
        idx[axis] = ((idx[axis] as isize + offset).rem_euclid(n)) as usize;
        let mut flat = 0usize;
        for a in 0..d {
            flat = flat * self.cells_per_axis[a] + idx[a];
        }
        flat
    }

    /// CSV export, one row per cell.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("cell");
        for a in 0..d {
            out.push_str(&format!(",x{a}"));
        }
        out.push_str(",count,density");
        for a in 0..d {
            out.push_str(&format!(",u{a}"));
        }
        for i in 0..d {
            for j in i..d {
                out.push_str(&format!(",sigma{i}{j}"));
            }
        }
        for a in 0..d {
            out.push_str(&format!(",h{a}"));
        }
        out.push_str(",eps,E");
        for a in 0..d {
            out.push_str(&format!(",s{a}"));
        }
        out.push_str(",valid\n");
        let mut center = vec![0.0; d];
        for cell in 0..self.n_cells() {
            self.cell_center(cell, &mut center);
            out.push_str(&cell.to_string());
            for &c in &center {
                out.push_str(&format!(",{c:.12e}"));
            }
            out.push_str(&format!(",{},{:.12e}", self.count[cell], self.density[cell]));
            for a in 0..d {
                out.push_str(&format!(",{:.12e}", self.velocity[cell][a]));
            }
            for i in 0..d {
                for j in i..d {
                    out.push_str(&format!(",{:.12e}", self.stress_component(cell, i, j)));
                }
            }
            for a in 0..d {
                out.push_str(&format!(",{:.12e}", self.heat_flux[cell][a]));
            }
            out.push_str(&format!(
                ",{:.12e},{:.12e}",
                self.internal_energy[cell], self.energy[cell]
            ));
            for a in 0..d {
                out.push_str(&format!(",{:.12e}", self.energy_flux[cell][a]));
            }
            out.push_str(if self.valid[cell] { ",1\n" } else { ",0\n" });
        }
        out
    }
}

/// Project the ensemble onto cell-averaged moment fields.
pub fn project_moments(
    ens: &MonadEnsemble,
    cells_per_axis: &[usize],
    min_count: usize,
    force: &MonadForce,
) -> Result<MomentFields> {
    let d = ens.dim();
    if cells_per_axis.len() != d {
        return Err(QhdError::Validation(format!(
            "cells_per_axis needs {d} entries"
        )));
    }
    if cells_per_axis.iter().any(|&n| n == 0) {
        return Err(QhdError::Validation("cell counts must be >= 1".into()));
    }
    force.validate(d)?;
    let n_cells: usize = cells_per_axis.iter().product();
    let mu = ens.mu();

    let mut membership = vec![0usize; ens.count()];
    let mut count = vec![0usize; n_cells];
    for i in 0..ens.count() {
        let mut cell = 0usize;
        for a in 0..d {
            let h = ens.bounds().lengths()[a] / cells_per_axis[a] as f64;
            let idx = ((ens.positions()[[i, a]] / h) as usize).min(cells_per_axis[a] - 1);
            cell = cell * cells_per_axis[a] + idx;
        }
        membership[i] = cell;
        count[cell] += 1;
    }

    // First pass: mean velocities.
    let mut velocity = vec![[0.0f64; 3]; n_cells];
    for i in 0..ens.count() {
        let cell = membership[i];
        for a in 0..d {
            velocity[cell][a] += ens.velocities()[[i, a]];
        }
    }
    for (cell, v) in velocity.iter_mut().enumerate() {
        if count[cell] > 0 {
            for a in 0..d {
                v[a] /= count[cell] as f64;
            }
        }
    }

    // Second pass: central moments.
    let mut stress = vec![[0.0f64; 6]; n_cells];
    let mut heat_flux = vec![[0.0f64; 3]; n_cells];
    for i in 0..ens.count() {
        let cell = membership[i];
        let mut dv = [0.0f64; 3];
        for a in 0..d {
            dv[a] = ens.velocities()[[i, a]] - velocity[cell][a];
        }
        let speed2: f64 = dv[..d].iter().map(|v| v * v).sum();
        for a in 0..d {
            for b in a..d {
                stress[cell][SYM_INDEX[a][b]] += dv[a] * dv[b];
            }
            heat_flux[cell][a] += speed2 * dv[a];
        }
    }
    let cell_volume: f64 = ens
        .bounds()
        .lengths()
        .iter()
        .zip(cells_per_axis.iter())
        .map(|(&l, &n)| l / n as f64)
        .product();

    let mut density = vec![0.0f64; n_cells];
    let mut internal_energy = vec![0.0f64; n_cells];
    let mut energy = vec![0.0f64; n_cells];
    let mut energy_flux = vec![[0.0f64; 3]; n_cells];
    let mut valid = vec![false; n_cells];
    let mut center = vec![0.0f64; d];
    let fields_probe = MomentFields {
        cells_per_axis: cells_per_axis.to_vec(),
        box_lengths: ens.bounds().lengths().to_vec(),
        mu,
        min_count,
        count: vec![],
        density: vec![],
        velocity: vec![],
        stress: vec![],
        heat_flux: vec![],
        internal_energy: vec![],
        energy: vec![],
        energy_flux: vec![],
        valid: vec![],
    };
    for cell in 0..n_cells {
        let n = count[cell];
        if n > 0 {
            for entry in stress[cell].iter_mut() {
                *entry *= mu / n as f64;
            }
            for entry in heat_flux[cell].iter_mut() {
                *entry *= 0.5 * mu / n as f64;
            }
        }
        density[cell] = n as f64 / cell_volume;
        let trace: f64 = (0..d).map(|a| stress[cell][SYM_INDEX[a][a]]).sum();
        internal_energy[cell] = 0.5 * trace;
        fields_probe.cell_center(cell, &mut center);
        let u2: f64 = velocity[cell][..d].iter().map(|v| v * v).sum();
        energy[cell] = 0.5 * mu * u2 + internal_energy[cell] + force.potential(&center, mu);
        for a in 0..d {
            let mut s = energy[cell] * velocity[cell][a] + heat_flux[cell][a];
            for b in 0..d {
                s += stress[cell][SYM_INDEX[a][b]] * velocity[cell][b];
            }
            energy_flux[cell][a] = s;
        }
        valid[cell] = n >= min_count;
    }

    Ok(MomentFields {
        cells_per_axis: cells_per_axis.to_vec(),
        box_lengths: ens.bounds().lengths().to_vec(),
        mu,
        min_count,
        count,
        density,
        velocity,
        stress,
        heat_flux,
        internal_energy,
        energy,
        energy_flux,
        valid,
    })
}

/// Residual fields of the three moment equations at one interior snapshot.
struct ResidualFields {
    continuity: Vec<f64>,
    momentum: Vec<f64>, // d components per cell, interleaved [cell * d + i]
    energy: Vec<f64>,
    valid: Vec<bool>,
}

fn residual_fields(
    series: &[MomentFields],
    k: usize,
    dt: f64,
    force: &MonadForce,
) -> ResidualFields {
    let cur = &series[k];
    let prev = &series[k - 1];
    let next = &series[k + 1];
    let d = cur.dim();
    let n_cells = cur.n_cells();
    let mu = cur.mu();

    let mut continuity = vec![0.0; n_cells];
    let mut momentum = vec![0.0; n_cells * d];
    let mut energy = vec![0.0; n_cells];
    let mut valid = vec![false; n_cells];
    let mut center = vec![0.0; d];
    let mut accel = vec![0.0; d];

    for cell in 0..n_cells {
        // The full centered stencil must be valid: the cell itself at all
        // three times and its spatial neighbours at the middle time.
        let mut ok = cur.valid[cell] && prev.valid[cell] && next.valid[cell];
        for axis in 0..d {
            let m = cur.neighbor(cell, axis, -1);
            let p = cur.neighbor(cell, axis, 1);
            ok = ok && cur.valid[m] && cur.valid[p];
        }
        valid[cell] = ok;
        if !ok {
            continue;
        }

        // Continuity: d rho / dt + div(rho u), divided by the local density.
        // The division makes the residual intensive, so the half-ensemble
        // noise floor below has the same scaling for all three equations.
        let mut r = (next.density[cell] - prev.density[cell]) / (2.0 * dt);
        for axis in 0..d {
            let m = cur.neighbor(cell, axis, -1);
            let p = cur.neighbor(cell, axis, 1);
            let h = cur.spacing(axis);
            r += (cur.density[p] * cur.velocity[p][axis]
                - cur.density[m] * cur.velocity[m][axis])
                / (2.0 * h);
        }
        continuity[cell] = r / cur.density[cell];

        // Momentum: mu Du_i/Dt - F_stress_i - F_i.
        cur.cell_center(cell, &mut center);
        force.acceleration(&center, &mut accel);
        for i in 0..d {
            let mut r = (next.velocity[cell][i] - prev.velocity[cell][i]) / (2.0 * dt);
            for axis in 0..d {
                let m = cur.neighbor(cell, axis, -1);
                let p = cur.neighbor(cell, axis, 1);
                let h = cur.spacing(axis);
                r += cur.velocity[cell][axis]
                    * (cur.velocity[p][i] - cur.velocity[m][i])
                    / (2.0 * h);
            }
            let mut stress_force = 0.0;
            for axis in 0..d {
                let m = cur.neighbor(cell, axis, -1);
                let p = cur.neighbor(cell, axis, 1);
                let h = cur.spacing(axis);
                stress_force -= (cur.density[p] * cur.stress_component(p, i, axis)
                    - cur.density[m] * cur.stress_component(m, i, axis))
                    / (2.0 * h * cur.density[cell]);
            }
            momentum[cell * d + i] = mu * r - stress_force - mu * accel[i];
        }

        // Energy: d(rho E)/dt + div(rho s), again divided by density.
        let mut r = (next.density[cell] * next.energy[cell]
            - prev.density[cell] * prev.energy[cell])
            / (2.0 * dt);
        for axis in 0..d {
            let m = cur.neighbor(cell, axis, -1);
            let p = cur.neighbor(cell, axis, 1);
            let h = cur.spacing(axis);
            r += (cur.density[p] * cur.energy_flux[p][axis]
                - cur.density[m] * cur.energy_flux[m][axis])
                / (2.0 * h);
        }
        energy[cell] = r / cur.density[cell];
    }

    ResidualFields {
        continuity,
        momentum,
        energy,
        valid,
    }
}

/// Aggregated residual norms per moment equation.
#[derive(Debug, Clone, Copy, Default)]
pub struct EquationNorms {
    pub continuity: f64,
    pub momentum: f64,
    pub energy: f64,
}

/// Residual norms per interior snapshot plus their RMS aggregate.
#[derive(Debug, Clone)]
pub struct MomentResidualReport {
    pub per_interval: Vec<EquationNorms>,
    pub rms: EquationNorms,
}

fn check_series(series: &[MomentFields], dt: f64) -> Result<()> {
    if series.len() < 3 {
        return Err(QhdError::SeriesTooShort { len: series.len() });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(QhdError::Validation("dt must be positive".into()));
    }
    let first = &series[0];
    for f in series.iter() {
        if f.cells_per_axis != first.cells_per_axis || f.box_lengths != first.box_lengths {
            return Err(QhdError::Validation(
                "moment series entries use different cell grids".into(),
            ));
        }
    }
    Ok(())
}

fn norms_of(fields: &ResidualFields, mask: &[bool], d: usize) -> EquationNorms {
    let mut n_valid = 0usize;
    let mut cont = 0.0;
    let mut mom = 0.0;
    let mut en = 0.0;
    for (cell, &ok) in mask.iter().enumerate() {
        if !ok {
            continue;
        }
        n_valid += 1;
        cont += fields.continuity[cell] * fields.continuity[cell];
        for i in 0..d {
            mom += fields.momentum[cell * d + i] * fields.momentum[cell * d + i];
        }
        en += fields.energy[cell] * fields.energy[cell];
    }
    let denom = n_valid.max(1) as f64;
    EquationNorms {
        continuity: (cont / denom).sqrt(),
        momentum: (mom / denom).sqrt(),
        energy: (en / denom).sqrt(),
    }
}

/// Residuals of a recorded moment series (uniform `dt` between snapshots).
pub fn moment_residuals(
    series: &[MomentFields],
    dt: f64,
    force: &MonadForce,
) -> Result<MomentResidualReport> {
    check_series(series, dt)?;
    let d = series[0].dim();
    let mut per_interval = Vec::new();
    for k in 1..series.len() - 1 {
        let fields = residual_fields(series, k, dt, force);
        let mask = fields.valid.clone();
        per_interval.push(norms_of(&fields, &mask, d));
    }
    Ok(MomentResidualReport {
        rms: rms_of(&per_interval),
        per_interval,
    })
}

fn rms_of(per_interval: &[EquationNorms]) -> EquationNorms {
    let n = per_interval.len().max(1) as f64;
    EquationNorms {
        continuity: (per_interval.iter().map(|e| e.continuity * e.continuity).sum::<f64>() / n)
            .sqrt(),
        momentum: (per_interval.iter().map(|e| e.momentum * e.momentum).sum::<f64>() / n).sqrt(),
        energy: (per_interval.iter().map(|e| e.energy * e.energy).sum::<f64>() / n).sqrt(),
    }
}

/// Combined residual/noise-floor report: the full-ensemble residuals, the
/// half-ensemble split floor, and their ratios, all over the common valid
/// mask so the comparison is apples to apples.
#[derive(Debug, Clone)]
pub struct ResidualSuite {
    pub residual: EquationNorms,
    pub noise_floor: EquationNorms,
}

impl ResidualSuite {
    pub fn ratios(&self) -> EquationNorms {
        EquationNorms {
            continuity: self.residual.continuity / self.noise_floor.continuity,
            momentum: self.residual.momentum / self.noise_floor.momentum,
            energy: self.residual.energy / self.noise_floor.energy,
        }
    }
}

/// Evaluate the full-ensemble residuals against the half-ensemble noise
/// floor. The floor is `||r_A - r_B|| / 2`: each half has sqrt(2) times the
/// full noise, so half their difference estimates the full-ensemble noise
/// amplitude with the shared systematic part cancelled.
pub fn residual_suite(
    full: &[MomentFields],
    half_a: &[MomentFields],
    half_b: &[MomentFields],
    dt: f64,
    force: &MonadForce,
) -> Result<ResidualSuite> {
    check_series(full, dt)?;
    check_series(half_a, dt)?;
    check_series(half_b, dt)?;
    if full.len() != half_a.len() || full.len() != half_b.len() {
        return Err(QhdError::Validation(
            "full and half series must have equal length".into(),
        ));
    }
    let d = full[0].dim();
    let mut res_acc: Vec<EquationNorms> = Vec::new();
    let mut floor_acc: Vec<EquationNorms> = Vec::new();
    for k in 1..full.len() - 1 {
        let rf = residual_fields(full, k, dt, force);
        let ra = residual_fields(half_a, k, dt, force);
        let rb = residual_fields(half_b, k, dt, force);
        let mask: Vec<bool> = (0..rf.valid.len())
            .map(|c| rf.valid[c] && ra.valid[c] && rb.valid[c])
            .collect();
        res_acc.push(norms_of(&rf, &mask, d));
        let diff = ResidualFields {
            continuity: ra
                .continuity
                .iter()
                .zip(rb.continuity.iter())
                .map(|(a, b)| 0.5 * (a - b))
                .collect(),
            momentum: ra
                .momentum
                .iter()
                .zip(rb.momentum.iter())
                .map(|(a, b)| 0.5 * (a - b))
                .collect(),
            energy: ra
                .energy
                .iter()
                .zip(rb.energy.iter())
                .map(|(a, b)| 0.5 * (a - b))
                .collect(),
            valid: mask.clone(),
        };
        floor_acc.push(norms_of(&diff, &mask, d));
    }
    Ok(ResidualSuite {
        residual: rms_of(&res_acc),
        noise_floor: rms_of(&floor_acc),
    })
}

//! Built-in verification battery: runs the identity and residual suites on
//! canned states and reports one pass/fail line per check. The CLI `check`
//! subcommand prints these; the test suites assert them.

use ndarray::{ArrayD, IxDyn};

use crate::field::MadelungPair;
use crate::grid::LatticeGrid;
use crate::kinetics::{
    collide, project_moments, residual_suite, stream_and_force, MonadEnsemble, MonadForce,
    PeriodicBox,
};
use crate::observables::{
    constitutive_residual, energy_report_pair, fisher_identity_sides, fisher_information,
    quantum_potential, quantum_potential_block, random_nodeless_density, stress_tensor,
};
use crate::potential::{ConstitutiveParams, NonlinearTerm, PotentialSpec};
use crate::spectral::SpectralOps;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn from_bound(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured.is_finite() && measured <= tolerance,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<32} measured = {:.3e}  tol = {:.1e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            self.detail
        )
    }
}

pub fn battery_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

/// Constitutive residual L2 norm of a Gaussian density at each resolution,
/// with the quantum closure and the given nonlinearity. The Gaussian width
/// is chosen wide enough that `ln rho` is analytic in a comfortable strip,
/// so the residual decays at the full spectral rate.
pub fn constitutive_refinement(resolutions: &[usize], nonlinear: NonlinearTerm) -> Vec<f64> {
    let params = ConstitutiveParams::quantum(1.0, 1.0, nonlinear).unwrap();
    resolutions
        .iter()
        .map(|&n| {
            let grid = LatticeGrid::new(1, 1, vec![n], vec![10.0]).unwrap();
            let ops = SpectralOps::new(&grid);
            let pair = MadelungPair::gaussian(&grid, &[0.0], &[1.2]).unwrap();
            constitutive_residual(&ops, pair.rho(), &params)
                .map(|r| r.l2_total())
                .unwrap_or(f64::NAN)
        })
        .collect()
}

fn check_fisher_identity() -> CheckResult {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let grid = LatticeGrid::new(1, 1, vec![128], vec![11.0]).unwrap();
        let ops = SpectralOps::new(&grid);
        let rho = random_nodeless_density(&grid, 1000 + seed);
        let (lhs, rhs) = fisher_identity_sides(&ops, &rho, 1.0, 1.0).unwrap();
        worst = worst.max(((lhs - rhs) / rhs).abs());
    }
    for seed in 0..10u64 {
        let grid = LatticeGrid::new(2, 1, vec![64, 64], vec![9.0, 10.0]).unwrap();
        let ops = SpectralOps::new(&grid);
        let rho = random_nodeless_density(&grid, 2000 + seed);
        let (lhs, rhs) = fisher_identity_sides(&ops, &rho, 0.9, 1.2).unwrap();
        worst = worst.max(((lhs - rhs) / rhs).abs());
    }
    CheckResult::from_bound(
        "fisher-identity",
        worst,
        1e-8,
        "int(rho W) vs hbar^2 I / 8m, 20 random nodeless densities (D = 1, 2)".into(),
    )
}

fn check_fisher_additivity() -> CheckResult {
    let grid = LatticeGrid::new(2, 1, vec![64, 64], vec![9.0, 9.0]).unwrap();
    let ops = SpectralOps::new(&grid);
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let rho = random_nodeless_density(&grid, 3000 + seed);
        let fi = fisher_information(&ops, &rho);
        let gap = (fi.total - fi.per_block.iter().sum::<f64>()).abs() / fi.total.max(1e-300);
        worst = worst.max(gap);
    }
    CheckResult::from_bound(
        "fisher-additivity",
        worst,
        1e-10,
        "I = sum_i I_i under the shared quadrature".into(),
    )
}

fn check_fisher_gaussian_product() -> CheckResult {
    let (s1, s2) = (0.8, 1.25);
    let grid = LatticeGrid::new(2, 1, vec![128, 128], vec![14.0 * s2, 14.0 * s2]).unwrap();
    let ops = SpectralOps::new(&grid);
    let pair = MadelungPair::gaussian(&grid, &[0.0, 0.0], &[s1, s2]).unwrap();
    let fi = fisher_information(&ops, pair.rho());
    let gap1 = ((fi.per_block[0] - 1.0 / (s1 * s1)) / (1.0 / (s1 * s1))).abs();
    let gap2 = ((fi.per_block[1] - 1.0 / (s2 * s2)) / (1.0 / (s2 * s2))).abs();
    CheckResult::from_bound(
        "fisher-gaussian-product",
        gap1.max(gap2),
        1e-6,
        format!("I_i vs 1/s_i^2 on a product Gaussian (s = {s1}, {s2})"),
    )
}

fn check_potential_decomposition() -> CheckResult {
    let grid = LatticeGrid::new(2, 1, vec![64, 64], vec![9.0, 10.0]).unwrap();
    let ops = SpectralOps::new(&grid);
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let rho = random_nodeless_density(&grid, 4000 + seed);
        let w = quantum_potential(&ops, &rho, 1.0, 1.0).unwrap();
        let w1 = quantum_potential_block(&ops, &rho, 1.0, 1.0, 0).unwrap();
        let w2 = quantum_potential_block(&ops, &rho, 1.0, 1.0, 1).unwrap();
        let scale = w
            .values
            .iter()
            .fold(1.0f64, |m, v| m.max(v.abs()));
        for ((a, b), c) in w.values.iter().zip(w1.values.iter()).zip(w2.values.iter()) {
            worst = worst.max((a - (b + c)).abs() / scale);
        }
    }
    CheckResult::from_bound(
        "potential-decomposition",
        worst,
        1e-10,
        "W = sum_i W_i pointwise (scaled)".into(),
    )
}

fn check_stress_closed_forms() -> CheckResult {
    let grid = LatticeGrid::new(1, 1, vec![128], vec![10.0]).unwrap();
    let ops = SpectralOps::new(&grid);
    let rho = random_nodeless_density(&grid, 5);
    let a = 0.8;
    let b = -0.35;
    let mut worst: f64 = 0.0;
    let cubic = ConstitutiveParams::classical(NonlinearTerm::Cubic { a }).unwrap();
    let sigma = stress_tensor(&ops, &rho, &cubic).unwrap();
    for (s, &r) in sigma.component(0, 0).iter().zip(rho.iter()) {
        worst = worst.max((s - 0.5 * a * r).abs());
    }
    let log = ConstitutiveParams::classical(NonlinearTerm::Logarithmic { b }).unwrap();
    let sigma = stress_tensor(&ops, &rho, &log).unwrap();
    for &s in sigma.component(0, 0).iter() {
        worst = worst.max((s - b).abs());
    }
    CheckResult::from_bound(
        "stress-closed-forms",
        worst,
        1e-12,
        "cubic U -> a rho / 2 and logarithmic U -> b on the diagonal".into(),
    )
}

fn check_constitutive_refinement() -> Vec<CheckResult> {
    let variants = [
        ("constitutive-none", NonlinearTerm::None),
        ("constitutive-cubic", NonlinearTerm::Cubic { a: 0.8 }),
        (
            "constitutive-logarithmic",
            NonlinearTerm::Logarithmic { b: 0.3 },
        ),
    ];
    let mut out = Vec::new();
    for (name, nl) in variants {
        let norms = constitutive_refinement(&[64, 128, 256], nl);
        let ratio_ok = norms[0] / norms[1] > 4.0 && norms[1] / norms[2] > 4.0;
        let final_norm = norms[2];
        let mut result = CheckResult::from_bound(
            name,
            final_norm,
            1e-6,
            format!(
                "L2 residual at 64/128/256 points: {:.3e} / {:.3e} / {:.3e}",
                norms[0], norms[1], norms[2]
            ),
        );
        result.passed = result.passed && ratio_ok;
        if !ratio_ok {
            result.detail.push_str("  [refinement rate below spectral]");
        }
        out.push(result);
    }
    out
}

fn check_energy_routes() -> CheckResult {
    let grid = LatticeGrid::new(1, 1, vec![128], vec![12.0]).unwrap();
    let ops = SpectralOps::new(&grid);
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let rho = random_nodeless_density(&grid, 6000 + seed);
        let xs = grid.axis_coords(0);
        let phase = ArrayD::from_shape_vec(
            IxDyn(&[128]),
            xs.iter()
                .map(|&x| 0.5 * (2.0 * std::f64::consts::PI * x / 12.0).sin())
                .collect(),
        )
        .unwrap();
        let pair = MadelungPair::new(grid.clone(), rho, phase).unwrap();
        let report =
            energy_report_pair(&ops, &pair, 1.0, 1.0, &PotentialSpec::free(&grid)).unwrap();
        worst = worst.max(report.route_gap());
    }
    CheckResult::from_bound(
        "energy-route-agreement",
        worst,
        1e-8,
        "H_cl + hbar^2 I/8m vs the wave-functional energy".into(),
    )
}

fn check_collision_invariants() -> CheckResult {
    let bounds = PeriodicBox::new(vec![6.0, 6.0, 6.0]).unwrap();
    let mut ens =
        MonadEnsemble::maxwellian(20_000, 1.0, bounds, 1.0, &[0.0, 0.0, 0.0], 314).unwrap();
    let p0 = ens.total_momentum();
    let ke0 = ens.total_kinetic();
    let mut worst_event: f64 = 0.0;
    for _ in 0..20 {
        ens = stream_and_force(&ens, &MonadForce::None, 0.02).unwrap();
        let (next, stats) = collide(&ens, 1.0, 4.0, 0.02).unwrap();
        ens = next;
        worst_event = worst_event
            .max(stats.max_event_momentum_rel)
            .max(stats.max_event_energy_rel);
    }
    let p1 = ens.total_momentum();
    let ke1 = ens.total_kinetic();
    let p_scale: f64 = ke0.max(1e-300);
    let global = ((ke1 - ke0) / ke0).abs().max(
        (0..3)
            .map(|a| (p1[a] - p0[a]).abs())
            .fold(0.0f64, f64::max)
            / p_scale,
    );
    CheckResult::from_bound(
        "collision-invariants",
        worst_event.max(global),
        1e-10,
        "per-event and global momentum/energy conservation".into(),
    )
}

fn check_moment_residuals() -> CheckResult {
    let bounds = PeriodicBox::new(vec![10.0]).unwrap();
    let ens = MonadEnsemble::maxwellian(60_000, 1.0, bounds, 1.0, &[0.0], 2718).unwrap();
    let force = MonadForce::None;
    let dt = 0.02;
    let record_every = 5;
    let cells = [10usize];
    let mut full = Vec::new();
    let mut half_a = Vec::new();
    let mut half_b = Vec::new();
    let mut state = ens;
    for step in 0..80 {
        if step % record_every == 0 {
            full.push(project_moments(&state, &cells, 20, &force).unwrap());
            let (a, b) = state.split_halves();
            half_a.push(project_moments(&a, &cells, 10, &force).unwrap());
            half_b.push(project_moments(&b, &cells, 10, &force).unwrap());
        }
        state = stream_and_force(&state, &force, dt).unwrap();
        let (next, _) = collide(&state, 1.0, 2.0, dt).unwrap();
        state = next;
    }
    let suite = residual_suite(
        &full,
        &half_a,
        &half_b,
        dt * record_every as f64,
        &force,
    )
    .unwrap();
    let ratios = suite.ratios();
    let worst = ratios.continuity.max(ratios.momentum).max(ratios.energy);
    CheckResult::from_bound(
        "moment-residuals",
        worst,
        2.0,
        format!(
            "residual/noise-floor ratios: continuity {:.2}, momentum {:.2}, energy {:.2}",
            ratios.continuity, ratios.momentum, ratios.energy
        ),
    )
}

/// Run the full battery.
pub fn run_battery() -> Vec<CheckResult> {
    let mut results = vec![
        check_fisher_identity(),
        check_fisher_additivity(),
        check_fisher_gaussian_product(),
        check_potential_decomposition(),
        check_stress_closed_forms(),
    ];
    results.extend(check_constitutive_refinement());
    results.push(check_energy_routes());
    results.push(check_collision_invariants());
    results.push(check_moment_residuals());
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_on_a_fresh_build() {
        let results = run_battery();
        for r in &results {
            println!("{}", r.line());
        }
        assert!(battery_passed(&results));
    }

    #[test]
    fn coarse_grid_residual_is_much_larger() {
        let norms = constitutive_refinement(&[16, 256], NonlinearTerm::Cubic { a: 0.8 });
        assert!(
            norms[0] / norms[1] > 50.0,
            "expected a large spectral factor, got {:?}",
            norms
        );
    }
}

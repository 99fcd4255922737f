//! Per-step diagnostics records and their CSV serialization.

use std::fmt::Write as _;

/// One recorded step of an engine run. `res_continuity` is the instantaneous
/// two-route continuity defect (see the engine docs); `res_constitutive` is
/// the closure-constraint residual of the current density. Either is NaN
/// when it could not be evaluated (for example at a node).
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    pub h_classical: f64,
    pub h_internal: f64,
    pub h_total: f64,
    pub h_eq40: f64,
    pub fisher_total: f64,
    pub fisher_blocks: Vec<f64>,
    pub res_constitutive: f64,
    pub res_continuity: f64,
}

impl DiagnosticsRecord {
    /// Header row matching [`DiagnosticsRecord::to_csv_row`].
    pub fn csv_header(n_particles: usize) -> String {
        let mut s = String::from("step,time,norm,H_cl,H_int,H_total,H_eq40,I");
        for i in 1..=n_particles {
            let _ = write!(s, ",I_{i}");
        }
        s.push_str(",res_constitutive,res_continuity");
        s
    }

    pub fn to_csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            fmt(self.time),
            fmt(self.norm),
            fmt(self.h_classical),
            fmt(self.h_internal),
            fmt(self.h_total),
            fmt(self.h_eq40),
            fmt(self.fisher_total),
        );
        for b in &self.fisher_blocks {
            let _ = write!(s, ",{}", fmt(*b));
        }
        let _ = write!(
            s,
            ",{},{}",
            fmt(self.res_constitutive),
            fmt(self.res_continuity)
        );
        s
    }
}

/// Fixed-width scientific notation: deterministic bytes, full f64 precision.
fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Assemble a complete CSV document with `# ` comment lines up front.
pub fn csv_document(comments: &[String], header: &str, rows: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

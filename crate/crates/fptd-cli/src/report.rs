//! CSV and JSON emission, plus the solver-vs-MC comparison report.
//!
//! All floating-point output is printed with 17 significant digits so runs
//! are reproducible byte for byte.

use fptd_core::{FptdEstimate, ScaleMeasure, SolveStatus};
use serde::Serialize;

/// 17 significant digits; round-trips any f64 exactly.
pub fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::Diverged => "diverged",
        SolveStatus::Heuristic => "heuristic",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveRow {
    pub q: f64,
    pub x: f64,
    pub l: f64,
    pub value: f64,
    pub k_truncation: usize,
    pub tail_bound: f64,
    pub status: String,
}

pub fn solve_csv(rows: &[SolveRow]) -> String {
    let mut out = String::from("q,x,l,value,k_truncation,tail_bound,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f(r.q),
            fmt_f(r.x),
            fmt_f(r.l),
            fmt_f(r.value),
            r.k_truncation,
            fmt_f(r.tail_bound),
            r.status
        ));
    }
    out
}

pub fn mc_csv(rows: &[FptdEstimate]) -> String {
    let mut out = String::from("q,x,l,mean,std_error,n,n_passed,n_killed,n_censored,dt,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(r.q),
            fmt_f(r.x),
            fmt_f(r.level),
            fmt_f(r.mean),
            fmt_f(r.std_error),
            r.n_paths,
            r.n_passed,
            r.n_killed,
            r.n_censored,
            fmt_f(r.dt),
            r.seed
        ));
    }
    out
}

/// Scale-measure serialization written next to the CSV: the measure record
/// (atoms, grid descriptor, flags) plus the solve metadata.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleRecord<'a> {
    pub q: f64,
    pub status: &'static str,
    pub k_truncation: usize,
    pub tail_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_halving_error: Option<f64>,
    pub measure: &'a fptd_core::Measure,
}

impl<'a> ScaleRecord<'a> {
    pub fn new(s: &'a ScaleMeasure) -> Self {
        ScaleRecord {
            q: s.q,
            status: status_str(s.status),
            k_truncation: s.k_truncation,
            tail_bound: s.tail_bound,
            step_halving_error: s.step_halving_error,
            measure: &s.measure,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CompareRow {
    pub q: f64,
    pub x: f64,
    pub l: f64,
    pub solver: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub z_threshold: f64,
    pub pass_fraction_required: f64,
    pub fraction_within: f64,
    pub verdict: String,
    /// `(q, x, l, z)` of the rows beyond the threshold.
    pub failing_rows: Vec<(f64, f64, f64, f64)>,
}

/// Join solver values and MC estimates on `(q, x, l)` and score each row.
/// Rows must match one-to-one; anything unmatched is a grid mismatch.
pub fn compare_rows(
    solver: &[SolveRow],
    mc: &[FptdEstimate],
    z_threshold: f64,
    pass_fraction: f64,
) -> Result<CompareReport, String> {
    if solver.len() != mc.len() {
        return Err(format!(
            "mismatched grids: {} solver rows vs {} MC rows",
            solver.len(),
            mc.len()
        ));
    }
    let mut rows = Vec::with_capacity(mc.len());
    for est in mc {
        let s = solver
            .iter()
            .find(|r| r.q == est.q && r.x == est.x && r.l == est.level)
            .ok_or_else(|| {
                format!(
                    "mismatched grids: no solver row for (q={}, x={}, l={})",
                    est.q, est.x, est.level
                )
            })?;
        let z = if est.std_error > 0.0 {
            (s.value - est.mean) / est.std_error
        } else if s.value == est.mean {
            0.0
        } else {
            f64::INFINITY
        };
        rows.push(CompareRow {
            q: est.q,
            x: est.x,
            l: est.level,
            solver: s.value,
            mc_mean: est.mean,
            mc_std_error: est.std_error,
            z,
        });
    }
    let within = rows.iter().filter(|r| r.z.abs() <= z_threshold).count();
    let fraction = within as f64 / rows.len().max(1) as f64;
    let failing = rows
        .iter()
        .filter(|r| r.z.abs() > z_threshold)
        .map(|r| (r.q, r.x, r.l, r.z))
        .collect();
    Ok(CompareReport {
        z_threshold,
        pass_fraction_required: pass_fraction,
        fraction_within: fraction,
        verdict: if fraction >= pass_fraction {
            "pass".into()
        } else {
            "fail".into()
        },
        failing_rows: failing,
        rows,
    })
}

pub fn compare_csv(report: &CompareReport) -> String {
    let mut out = String::from("q,x,l,solver,mc_mean,mc_std_error,z\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f(r.q),
            fmt_f(r.x),
            fmt_f(r.l),
            fmt_f(r.solver),
            fmt_f(r.mc_mean),
            fmt_f(r.mc_std_error),
            fmt_f(r.z)
        ));
    }
    out
}

//! Byte-reproducible CSV output.
//!
//! Reals are rendered with 17 significant digits, which round-trips every
//! `f64` exactly, so re-running a seeded experiment rewrites identical bytes.
//! Timestamps and hostnames stay out of these files; a sidecar metadata file
//! carries them.

use crate::error::Result;
use crate::harness::run::ReportRow;
use crate::qlab::Trajectory;
use std::io::Write;
use std::path::Path;

pub const TRAJECTORY_HEADER: &str =
    "iter,loss,grad_norm,lr,alpha_star_raw,fallback,full_evals,loss_only_evals";

pub const REPORT_HEADER: &str =
    "scheme,iters_to_threshold,final_loss,final_grad_norm,full_evals,loss_only_evals,fallbacks";

/// 17 significant digits: 1 leading + 16 fractional.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per iteration, newline-terminated final row.
pub fn write_trajectory_csv(trajectory: &Trajectory, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{TRAJECTORY_HEADER}").expect("vec write");
    for row in &trajectory.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.step,
            fmt_g17(row.loss),
            fmt_g17(row.grad_norm),
            fmt_g17(row.rate),
            fmt_g17(row.alpha_star_raw),
            u8::from(row.fallback),
            row.full_evals,
            row.loss_only_evals,
        )
        .expect("vec write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// The cross-scheme comparison table. A run that never reached the threshold
/// renders an empty `iters_to_threshold` field.
pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{REPORT_HEADER}").expect("vec write");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.label,
            row.iters_to_threshold
                .map(|v| v.to_string())
                .unwrap_or_default(),
            fmt_g17(row.final_loss),
            fmt_g17(row.final_grad_norm),
            row.full_evals,
            row.loss_only_evals,
            row.fallbacks,
        )
        .expect("vec write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlab::{RunStatus, TrajectoryRow};

    fn one_row_trajectory() -> Trajectory {
        Trajectory {
            rows: vec![TrajectoryRow {
                step: 1,
                loss: 0.5,
                grad_norm: 1.0,
                rate: 1.25,
                alpha_star_raw: f64::NAN,
                fallback: true,
                full_evals: 2,
                loss_only_evals: 5,
                detail: None,
            }],
            status: RunStatus::MaxIters,
            plr_searches: Vec::new(),
            final_params: None,
        }
    }

    #[test]
    fn one_row_trajectory_writes_exactly_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory_csv(&one_row_trajectory(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        // Fallback renders as 1, the unfit rate as NaN.
        assert!(lines[1].contains(",NaN,1,"), "{}", lines[1]);
    }

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 884.0, 1e-300, -0.0, 6.02e23] {
            let s = fmt_g17(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn rewriting_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_trajectory_csv(&one_row_trajectory(), &a).unwrap();
        write_trajectory_csv(&one_row_trajectory(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

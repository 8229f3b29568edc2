//! Deterministic CSV serialization of training metrics. Floats are written
//! with shortest-roundtrip formatting so identical runs produce identical
//! bytes.

use std::io;
use std::path::Path;

use crate::learners::MetricsRow;

pub const METRICS_HEADER: &str = "step,mean_reward,nu,eps1,eps2,eps_gap";

pub fn metrics_csv_string(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let gap = match r.eps_gap {
            Some(g) => format!("{g}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.mean_reward, r.nu, r.eps1, r.eps2, gap
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> io::Result<()> {
    std::fs::write(path, metrics_csv_string(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, gap: Option<f64>) -> MetricsRow {
        MetricsRow {
            step,
            mean_reward: -1.25,
            nu: 0.5,
            eps1: 0.4,
            eps2: 0.05,
            eps_gap: gap,
        }
    }

    #[test]
    fn csv_layout() {
        let text = metrics_csv_string(&[row(100, Some(0.07)), row(200, None)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "100,-1.25,0.5,0.4,0.05,0.07");
        assert_eq!(lines[2], "200,-1.25,0.5,0.4,0.05,");
    }

    #[test]
    fn byte_identical_for_equal_rows() {
        let rows: Vec<MetricsRow> = (0..5).map(|i| row(i * 10, Some(0.1 + i as f64))).collect();
        assert_eq!(metrics_csv_string(&rows), metrics_csv_string(&rows.clone()));
    }
}

use serde::{Deserialize, Serialize};

use super::AnalysisReport;

/// Max-norm error `E^l` of every local iterate against a reference field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    /// `errors[l][id]`; row 0 is the background.
    pub errors: Vec<Vec<f64>>,
    /// Per subdomain, the fraction of consecutive rounds in which the error
    /// did not grow.
    pub monotone_fraction: Vec<f64>,
}

impl ConvergenceTable {
    pub fn new(errors: Vec<Vec<f64>>) -> Self {
        let n = errors.first().map_or(0, Vec::len);
        let monotone_fraction = (0..n)
            .map(|id| {
                let pairs = errors.len().saturating_sub(1);
                if pairs == 0 {
                    return 1.0;
                }
                let kept = errors.windows(2).filter(|w| w[1][id] <= w[0][id]).count();
                kept as f64 / pairs as f64
            })
            .collect();
        ConvergenceTable {
            errors,
            monotone_fraction,
        }
    }

    pub fn rounds(&self) -> usize {
        self.errors.len()
    }

    /// Largest error in the last recorded round.
    pub fn final_max(&self) -> f64 {
        self.errors
            .last()
            .map_or(0.0, |r| r.iter().fold(0.0f64, |m, v| m.max(*v)))
    }

    /// Long format: `round,subdomain,error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,subdomain,error\n");
        for (l, row) in self.errors.iter().enumerate() {
            for (id, e) in row.iter().enumerate() {
                out.push_str(&format!("{l},{id},{e:e}\n"));
            }
        }
        out
    }
}

/// The per-round error table, absent when the run had no reference.
pub fn convergence_history(report: &AnalysisReport) -> Option<&ConvergenceTable> {
    report.history.as_ref()
}

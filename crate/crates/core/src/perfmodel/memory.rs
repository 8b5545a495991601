use serde::Serialize;

use crate::spacetime::NVARS;

/// Accelerator memory per subdomain, `(n_loc, MB)`, for square local grids.
pub const REFERENCE_MEMORY_MB: [(usize, f64); 8] = [
    (32, 177.0),
    (40, 286.0),
    (48, 485.0),
    (56, 812.0),
    (64, 1313.0),
    (72, 2041.0),
    (80, 3057.0),
    (88, 4427.0),
];

/// `MB(n) = c4 · n⁴ + m0`, fitted in relative least squares.
///
/// The quartic term stands for dense workspace over a local state of
/// `3 n²` values; `m0` absorbs fixed allocations. A pure quartic through the
/// origin is fitted alongside as a diagnostic: the table grows by about
/// 7.4× from `n = 32` to `64` where `n⁴` alone predicts 16×.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryFit {
    pub c4: f64,
    pub m0: f64,
    /// Coefficient of the pure `c · n⁴` fit.
    pub quartic_only: f64,
}

impl MemoryFit {
    pub fn fit(rows: &[(usize, f64)]) -> Self {
        // Weighted normal equations with weights 1/y².
        let (mut sxx, mut sx, mut s1, mut sxy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(n, y) in rows {
            let x = (n as f64).powi(4);
            let w = 1.0 / (y * y);
            sxx += w * x * x;
            sx += w * x;
            s1 += w;
            sxy += w * x * y;
            sy += w * y;
        }
        let det = sxx * s1 - sx * sx;
        MemoryFit {
            c4: (sxy * s1 - sx * sy) / det,
            m0: (sxx * sy - sx * sxy) / det,
            quartic_only: sxy / sxx,
        }
    }

    pub fn reference() -> Self {
        Self::fit(&REFERENCE_MEMORY_MB)
    }

    pub fn megabytes(&self, n_loc: usize) -> f64 {
        self.c4 * (n_loc as f64).powi(4) + self.m0
    }

    pub fn quartic_megabytes(&self, n_loc: usize) -> f64 {
        self.quartic_only * (n_loc as f64).powi(4)
    }

    /// Largest relative error of the model over `rows`.
    pub fn max_relative_error(&self, rows: &[(usize, f64)]) -> f64 {
        rows.iter()
            .map(|&(n, y)| ((self.megabytes(n) - y) / y).abs())
            .fold(0.0, f64::max)
    }
}

/// Modeled accelerator memory for an `n_loc × n_loc` subdomain, in bytes
/// (1 MB = 1e6 bytes).
pub fn memory_estimate(n_loc: usize) -> f64 {
    MemoryFit::reference().megabytes(n_loc) * 1e6
}

/// Bytes held by this crate's matrix-free local solve on an
/// `n_loc × n_loc × levels` subdomain: four trajectory-sized arrays
/// (iterate, background, linearisation, adjoint work) and eight
/// control-sized vectors for Gauss-Newton and conjugate gradients.
pub fn matrix_free_footprint(n_loc: usize, levels: usize) -> f64 {
    let control = (NVARS * n_loc * n_loc) as f64;
    8.0 * control * (4.0 * levels as f64 + 8.0)
}

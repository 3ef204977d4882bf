//! Second-order finite differences on uniform grids.
//!
//! Interior nodes use central stencils. Periodic grids wrap; reflecting grids
//! fall back to one-sided second-order stencils at the two end nodes.

use super::grid::{Boundary, Grid};

pub fn d1(f: &[f64], grid: &Grid) -> Vec<f64> {
    let n = f.len();
    debug_assert_eq!(n, grid.len());
    let h2 = 2.0 * grid.dx();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / h2;
    }
    match grid.boundary {
        Boundary::Periodic => {
            out[0] = (f[1] - f[n - 1]) / h2;
            out[n - 1] = (f[0] - f[n - 2]) / h2;
        }
        Boundary::Reflecting => {
            out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / h2;
            out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / h2;
        }
    }
    out
}

pub fn d2(f: &[f64], grid: &Grid) -> Vec<f64> {
    let n = f.len();
    debug_assert_eq!(n, grid.len());
    let hh = grid.dx() * grid.dx();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / hh;
    }
    match grid.boundary {
        Boundary::Periodic => {
            out[0] = (f[1] - 2.0 * f[0] + f[n - 1]) / hh;
            out[n - 1] = (f[0] - 2.0 * f[n - 1] + f[n - 2]) / hh;
        }
        Boundary::Reflecting => {
            out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / hh;
            out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / hh;
        }
    }
    out
}

/// Cumulative trapezoid integral starting from zero at the first node.
pub fn cumulative(f: &[f64], dx: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * dx * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

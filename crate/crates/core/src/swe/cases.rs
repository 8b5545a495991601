//! Analytic initial conditions.

use super::params::SweParams;
use super::state::SweState;
use crate::spacetime::SpaceTimeGrid;

/// Solid-body rotation in geostrophic balance: `u = u0 cos θ`, `v = 0`,
/// `g h = g h0 − (a Ω u0 + u0²/2) sin² θ`.
pub fn balanced_zonal_flow(grid: &SpaceTimeGrid, params: &SweParams, u0: f64, h0: f64) -> SweState {
    let mut s = SweState::zeros(grid);
    let nx = grid.nlon;
    for j in 0..grid.nlat {
        let th = grid.latitude(j);
        let u = u0 * th.cos();
        let h =
            h0 - (params.a * params.omega_rot * u0 + 0.5 * u0 * u0) * th.sin().powi(2) / params.g;
        for i in 0..nx {
            s.u_mut()[j * nx + i] = u;
            s.h_mut()[j * nx + i] = h;
        }
    }
    s
}

/// Add a Gaussian height anomaly centred at `(lon0, lat0)` (radians) with
/// angular radius `radius`.
pub fn add_gaussian_hill(
    state: &mut SweState,
    grid: &SpaceTimeGrid,
    lon0: f64,
    lat0: f64,
    radius: f64,
    amplitude: f64,
) {
    let nx = grid.nlon;
    for j in 0..grid.nlat {
        let th = grid.latitude(j);
        for i in 0..nx {
            let lam = i as f64 * grid.dlambda;
            let cosd = lat0.sin() * th.sin() + lat0.cos() * th.cos() * (lam - lon0).cos();
            let d = cosd.clamp(-1.0, 1.0).acos();
            state.h_mut()[j * nx + i] += amplitude * (-(d / radius).powi(2)).exp();
        }
    }
}

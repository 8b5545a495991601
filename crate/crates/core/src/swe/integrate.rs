use super::params::SweParams;
use super::state::SweState;
use super::stencil::Stencil;
use crate::error::{DdvarError, Result};
use crate::spacetime::SpaceTimeGrid;

/// States of a forward run at consecutive time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SweState>,
    pub params: SweParams,
    pub grid: SpaceTimeGrid,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &SweState {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }

    /// Stage states of every step, the data the TLM and adjoint need.
    pub fn linearize(&self) -> Linearization {
        let stencil = Stencil::new(&self.grid, &self.params);
        let stages = self
            .states
            .iter()
            .take(self.states.len().saturating_sub(1))
            .map(|z| rk4_stages(&stencil, &z.data, self.dt).0)
            .collect();
        Linearization {
            stencil,
            dt: self.dt,
            stages,
        }
    }
}

/// Courant number `dt * max(|u|, |v|, sqrt(g max h)) / (a * min(dlambda cos θ, dtheta))`,
/// with `cos θ` taken at the most poleward row.
pub fn courant_number(z: &SweState, params: &SweParams, grid: &SpaceTimeGrid, dt: f64) -> f64 {
    let umax = z.u().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let vmax = z.v().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let hmax = z.h().iter().fold(0.0f64, |m, &v| m.max(v));
    let speed = umax.max(vmax).max((params.g * hmax).sqrt());
    let cmin = (0..grid.nlat)
        .map(|j| grid.latitude(j).cos())
        .fold(f64::INFINITY, f64::min);
    let dx = params.a * (grid.dlambda * cmin).min(grid.dtheta);
    dt * speed / dx
}

/// One classical RK4 update of `z' = f(z)`, also returning the four stage
/// inputs `z, z + dt/2 k1, z + dt/2 k2, z + dt k3`.
pub fn rk4_update<F: Fn(&[f64], &mut [f64])>(
    f: F,
    z: &[f64],
    dt: f64,
) -> ([Vec<f64>; 4], Vec<f64>) {
    let n = z.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    f(z, &mut k1);
    let z2: Vec<f64> = z.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
    f(&z2, &mut k2);
    let z3: Vec<f64> = z.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
    f(&z3, &mut k3);
    let z4: Vec<f64> = z.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
    f(&z4, &mut k4);
    let next = (0..n)
        .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    ([z.to_vec(), z2, z3, z4], next)
}

fn rk4_stages(stencil: &Stencil, z: &[f64], dt: f64) -> ([Vec<f64>; 4], Vec<f64>) {
    rk4_update(|x, out| stencil.tendency(x, out), z, dt)
}

fn checked_step(
    stencil: &Stencil,
    z: &SweState,
    params: &SweParams,
    grid: &SpaceTimeGrid,
    dt: f64,
    index: usize,
) -> Result<SweState> {
    let courant = courant_number(z, params, grid, dt);
    if !(courant < params.cfl_limit) {
        return Err(DdvarError::StepSize {
            step: index,
            courant,
            limit: params.cfl_limit,
        });
    }
    let (_, next) = rk4_stages(stencil, &z.data, dt);
    let next = SweState {
        nlon: z.nlon,
        nlat: z.nlat,
        data: next,
    };
    if !next.is_finite() {
        return Err(DdvarError::Numerical(format!(
            "non-finite state after step {index}"
        )));
    }
    Ok(next)
}

/// One classical RK4 step of length `dt`.
pub fn step(z: &SweState, params: &SweParams, grid: &SpaceTimeGrid, dt: f64) -> Result<SweState> {
    let stencil = Stencil::new(grid, params);
    checked_step(&stencil, z, params, grid, dt, 0)
}

/// Integrate `nsteps` steps of `grid.dt` from `z0`.
pub fn propagate(
    z0: &SweState,
    params: &SweParams,
    grid: &SpaceTimeGrid,
    nsteps: usize,
) -> Result<Trajectory> {
    if !z0.matches(grid) {
        return Err(DdvarError::Dimension(
            "initial state does not match grid".into(),
        ));
    }
    let stencil = Stencil::new(grid, params);
    let mut states = Vec::with_capacity(nsteps + 1);
    states.push(z0.clone());
    for k in 0..nsteps {
        let next = checked_step(&stencil, &states[k], params, grid, grid.dt, k)?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        params: *params,
        grid: *grid,
        dt: grid.dt,
    })
}

/// Stage states of a trajectory, ready for tangent-linear and adjoint sweeps.
#[derive(Debug, Clone)]
pub struct Linearization {
    stencil: Stencil,
    dt: f64,
    stages: Vec<[Vec<f64>; 4]>,
}

impl Linearization {
    /// Number of steps covered.
    pub fn steps(&self) -> usize {
        self.stages.len()
    }

    /// Tangent-linear map of step `k` (level k to k+1) applied to `dz`.
    pub fn tlm_step(&self, k: usize, dz: &[f64]) -> Vec<f64> {
        let [z1, z2, z3, z4] = &self.stages[k];
        let dt = self.dt;
        let n = dz.len();
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        let mut d3 = vec![0.0; n];
        let mut d4 = vec![0.0; n];
        self.stencil.tendency_tlm(z1, dz, &mut d1);
        let y: Vec<f64> = dz.iter().zip(&d1).map(|(a, k)| a + 0.5 * dt * k).collect();
        self.stencil.tendency_tlm(z2, &y, &mut d2);
        let y: Vec<f64> = dz.iter().zip(&d2).map(|(a, k)| a + 0.5 * dt * k).collect();
        self.stencil.tendency_tlm(z3, &y, &mut d3);
        let y: Vec<f64> = dz.iter().zip(&d3).map(|(a, k)| a + dt * k).collect();
        self.stencil.tendency_tlm(z4, &y, &mut d4);
        (0..n)
            .map(|i| dz[i] + dt / 6.0 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]))
            .collect()
    }

    /// Transpose of [`Linearization::tlm_step`] applied to the costate `w`.
    pub fn adj_step(&self, k: usize, w: &[f64]) -> Vec<f64> {
        let [z1, z2, z3, z4] = &self.stages[k];
        let dt = self.dt;
        let n = w.len();
        let mut out = w.to_vec();
        let a4: Vec<f64> = w.iter().map(|x| dt / 6.0 * x).collect();
        let mut a3: Vec<f64> = w.iter().map(|x| dt / 3.0 * x).collect();
        let mut a2 = a3.clone();
        let mut a1 = a4.clone();

        let mut g = vec![0.0; n];
        self.stencil.tendency_adj(z4, &a4, &mut g);
        for i in 0..n {
            out[i] += g[i];
            a3[i] += dt * g[i];
        }
        g.iter_mut().for_each(|x| *x = 0.0);
        self.stencil.tendency_adj(z3, &a3, &mut g);
        for i in 0..n {
            out[i] += g[i];
            a2[i] += 0.5 * dt * g[i];
        }
        g.iter_mut().for_each(|x| *x = 0.0);
        self.stencil.tendency_adj(z2, &a2, &mut g);
        for i in 0..n {
            out[i] += g[i];
            a1[i] += 0.5 * dt * g[i];
        }
        g.iter_mut().for_each(|x| *x = 0.0);
        self.stencil.tendency_adj(z1, &a1, &mut g);
        for i in 0..n {
            out[i] += g[i];
        }
        out
    }

    /// Tangent-linear propagation from level `k_from` to `k_to`.
    pub fn tlm(&self, k_from: usize, k_to: usize, dz: &[f64]) -> Vec<f64> {
        let mut d = dz.to_vec();
        for k in k_from..k_to {
            d = self.tlm_step(k, &d);
        }
        d
    }

    /// Adjoint propagation from level `k_to` back to `k_from`.
    pub fn adj(&self, k_from: usize, k_to: usize, dy: &[f64]) -> Vec<f64> {
        let mut d = dy.to_vec();
        for k in (k_from..k_to).rev() {
            d = self.adj_step(k, &d);
        }
        d
    }
}

fn check_levels(traj: &Trajectory, k_from: usize, k_to: usize, len: usize) -> Result<()> {
    if k_from > k_to || k_to >= traj.states.len() {
        return Err(DdvarError::Dimension(format!(
            "levels {k_from}..{k_to} out of range for a trajectory of {} levels",
            traj.states.len()
        )));
    }
    if len != traj.grid.state_len() {
        return Err(DdvarError::Dimension(format!(
            "perturbation length {len} does not match state length {}",
            traj.grid.state_len()
        )));
    }
    Ok(())
}

/// Jacobian of the composed RK4 steps from `k_from` to `k_to`, about `traj`.
pub fn tlm_apply(traj: &Trajectory, k_from: usize, k_to: usize, dz: &[f64]) -> Result<Vec<f64>> {
    check_levels(traj, k_from, k_to, dz.len())?;
    Ok(traj.linearize().tlm(k_from, k_to, dz))
}

/// Transposed Jacobian, applied as the reversed product of per-step adjoints.
pub fn adj_apply(traj: &Trajectory, k_from: usize, k_to: usize, dy: &[f64]) -> Result<Vec<f64>> {
    check_levels(traj, k_from, k_to, dy.len())?;
    Ok(traj.linearize().adj(k_from, k_to, dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::uniform(8, 8, 5, 600.0).unwrap()
    }

    #[test]
    fn rk4_matches_scalar_amplification_factor() {
        let lam = -0.7;
        let dt = 0.3;
        let (_, next) = rk4_update(|x, out| out[0] = lam * x[0], &[2.0], dt);
        let z = lam * dt;
        let expected = 2.0 * (1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0);
        assert!((next[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_returns_initial_state() {
        let g = grid();
        let z = SweState::rest(&g, 500.0);
        let t = propagate(&z, &SweParams::default(), &g, 0).unwrap();
        assert_eq!(t.states, vec![z]);
    }

    #[test]
    fn rest_is_preserved_exactly() {
        let g = grid();
        let z = SweState::rest(&g, 500.0);
        let t = propagate(&z, &SweParams::default(), &g, 6).unwrap();
        assert!(t.states.iter().all(|s| *s == z));
    }

    #[test]
    fn cfl_violation_reports_step() {
        let mut g = grid();
        g.dt = 1.0e6;
        let z = SweState::rest(&g, 500.0);
        match propagate(&z, &SweParams::default(), &g, 3) {
            Err(DdvarError::StepSize { step, courant, .. }) => {
                assert_eq!(step, 0);
                assert!(courant > 0.8);
            }
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn identity_when_levels_coincide() {
        let g = grid();
        let mut z = SweState::rest(&g, 500.0);
        z.u_mut()[3] = 2.0;
        let t = propagate(&z, &SweParams::default(), &g, 2).unwrap();
        let d: Vec<f64> = (0..g.state_len()).map(|k| k as f64).collect();
        assert_eq!(tlm_apply(&t, 1, 1, &d).unwrap(), d);
        assert_eq!(adj_apply(&t, 2, 2, &d).unwrap(), d);
        assert!(tlm_apply(&t, 2, 1, &d).is_err());
        assert!(tlm_apply(&t, 0, 3, &d).is_err());
    }
}

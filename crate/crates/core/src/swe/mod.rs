//! Shallow water equations on the sphere: Turkel-Zwas semi-discretization,
//! RK4 time stepping, tangent-linear and adjoint models.

pub mod cases;
mod integrate;
mod params;
mod snapshot;
mod state;
mod stencil;

pub use integrate::{
    adj_apply, courant_number, propagate, rk4_update, step, tlm_apply, Linearization, Trajectory,
};
pub use params::{StencilVariant, SweParams};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use state::SweState;
pub use stencil::Stencil;

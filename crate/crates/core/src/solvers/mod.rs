//! Discrete equilibria of the regularized problems and dual flux
//! reconstruction.

mod dual;
mod membrane;
pub mod newton;
mod obstacle;
mod thermoforming;

pub use dual::{reconstruct_dual, DualFlux, FluxBoundary};
pub use membrane::{solve_membrane, MembraneState};
pub use newton::NewtonOptions;
pub use obstacle::{solve_obstacle, ObstacleState};
pub use thermoforming::{solve_thermoforming, ThermoformingState};

use crate::fem::QuadPoint;
use crate::mesh::Mesh;

/// Value of a P1 coefficient vector at a quadrature point.
#[inline]
pub(crate) fn p1_at(mesh: &Mesh, values: &[f64], q: &QuadPoint) -> f64 {
    let tri = mesh.triangle(q.triangle);
    q.bary[0] * values[tri[0]] + q.bary[1] * values[tri[1]] + q.bary[2] * values[tri[2]]
}

pub(crate) fn add_scaled(a: &mut [f64], b: &[f64], s: f64) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

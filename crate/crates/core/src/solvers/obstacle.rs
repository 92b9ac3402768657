use std::sync::Arc;

use crate::assembly::{
    assemble_load_p0, assemble_plus_residual, assemble_plus_term, assemble_stiffness, DofMap,
};
use crate::error::{Error, Result};
use crate::fem::{integrate, P0Field, S1Field, PLUS_RULE};
use crate::linalg::{solve_spd, DEFAULT_TOL};
use crate::mesh::Mesh;
use crate::sparse::{dot, norm2, SparseMatrix};

use super::newton::{self, NewtonOptions, NewtonSystem, Residual};
use super::{add_scaled, p1_at};

/// Converged discrete obstacle problem at a fixed penalty parameter.
#[derive(Clone, Debug)]
pub struct ObstacleState {
    pub mesh: Arc<Mesh>,
    pub gamma: f64,
    pub y: S1Field,
    /// Discrete obstacle (P1, negative on the boundary).
    pub psi: S1Field,
    /// Discrete load (P0).
    pub f: P0Field,
    pub newton_iterations: usize,
    pub residual: f64,
}

impl ObstacleState {
    /// Pointwise gap `psi - y`; its positive part is the constraint
    /// violation.
    pub fn gap_at(&self, q: &crate::fem::QuadPoint) -> f64 {
        p1_at(&self.mesh, &self.psi.values, q) - p1_at(&self.mesh, &self.y.values, q)
    }

    /// `||(psi - y)^+||_{L2}`
    pub fn violation(&self) -> f64 {
        integrate(&self.mesh, PLUS_RULE, |q| self.gap_at(q).max(0.0).powi(2)).sqrt()
    }

    /// `1/2 |y|_1^2 - (f, y) + gamma/2 int ((psi - y)^+)^2`
    pub fn energy(&self) -> f64 {
        obstacle_energy(&self.mesh, &self.psi, &self.f, self.gamma, &self.y.values)
    }
}

/// Regularized obstacle energy of an arbitrary P1 coefficient vector.
pub fn obstacle_energy(mesh: &Mesh, psi: &S1Field, f: &P0Field, gamma: f64, y: &[f64]) -> f64 {
    let k = assemble_stiffness(mesh, false);
    let load = assemble_load_p0(mesh, &f.values);
    let penalty = integrate(mesh, PLUS_RULE, |q| {
        let g = (p1_at(mesh, &psi.values, q) - p1_at(mesh, y, q)).max(0.0);
        g * g
    });
    0.5 * dot(y, &k.mul_vec(y)) - dot(&load, y) + 0.5 * gamma * penalty
}

struct System<'a> {
    mesh: &'a Mesh,
    dofs: DofMap,
    stiffness: SparseMatrix,
    load: Vec<f64>,
    psi: &'a S1Field,
    gamma: f64,
}

impl System<'_> {
    fn gap(&self, y: &[f64]) -> impl Fn(&crate::fem::QuadPoint) -> f64 + '_ {
        let y = y.to_vec();
        move |q| p1_at(self.mesh, &self.psi.values, q) - p1_at(self.mesh, &y, q)
    }
}

impl NewtonSystem for System<'_> {
    fn residual(&self, x: &[f64]) -> Result<Residual> {
        let y = self.dofs.extend(x);
        let pen = self
            .dofs
            .restrict_vec(&assemble_plus_residual(self.mesh, PLUS_RULE, self.gamma, self.gap(&y)));
        let kx = self.stiffness.mul_vec(x);
        let scale = 1.0 + norm2(&kx) + norm2(&self.load) + norm2(&pen);
        let mut values = kx;
        add_scaled(&mut values, &self.load, -1.0);
        add_scaled(&mut values, &pen, -1.0);
        Ok(Residual { values, scale })
    }

    fn direction(&self, x: &[f64], r: &Residual) -> Result<Vec<f64>> {
        let y = self.dofs.extend(x);
        let (_, jac) = assemble_plus_term(self.mesh, PLUS_RULE, self.gamma, self.gap(&y));
        let jac = self.stiffness.add_scaled(&self.dofs.restrict_matrix(&jac), 1.0);
        let rhs: Vec<f64> = r.values.iter().map(|v| -v).collect();
        solve_spd(&jac, &rhs, DEFAULT_TOL)
    }
}

/// Semismooth Newton for `-Delta y - gamma (psi - y)^+ = f`, `y = 0` on the
/// boundary. `warm` is an initial guess on the same mesh.
pub fn solve_obstacle(
    mesh: Arc<Mesh>,
    psi: S1Field,
    f: P0Field,
    gamma: f64,
    opts: &NewtonOptions,
    warm: Option<&S1Field>,
) -> Result<ObstacleState> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    psi.check(&mesh)?;
    f.check(&mesh)?;
    if let Some(v) = mesh.boundary_vertices().find(|&v| psi.values[v] >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "obstacle must be negative on the boundary (vertex {v})"
        )));
    }
    let dofs = DofMap::dirichlet(&mesh);
    let system = System {
        mesh: &mesh,
        stiffness: dofs.restrict_matrix(&assemble_stiffness(&mesh, false)),
        load: dofs.restrict_vec(&assemble_load_p0(&mesh, &f.values)),
        dofs,
        psi: &psi,
        gamma,
    };
    let x0 = match warm {
        Some(y) => {
            y.check(&mesh)?;
            system.dofs.restrict_vec(&y.values)
        }
        None => vec![0.0; system.dofs.len()],
    };
    let out = newton::solve(&system, x0, opts)?;
    let y = S1Field {
        values: system.dofs.extend(&out.x),
        homogeneous_dirichlet: true,
    };
    Ok(ObstacleState {
        mesh: mesh.clone(),
        gamma,
        y,
        psi,
        f,
        newton_iterations: out.iterations,
        residual: out.residual,
    })
}

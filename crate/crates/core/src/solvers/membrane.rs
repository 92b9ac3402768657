use std::sync::Arc;

use crate::assembly::{
    assemble_load, assemble_load_p0, assemble_mass, assemble_plus_residual, assemble_plus_term,
    assemble_stiffness, DofMap, Space,
};
use crate::error::{Error, Result};
use crate::fem::{integrate, QuadPoint, S1Field, PLUS_RULE};
use crate::linalg::{solve_bordered, solve_spd, DEFAULT_TOL};
use crate::mesh::Mesh;
use crate::problems::{MembraneData, MembraneForces};
use crate::sparse::{dot, norm2, SparseMatrix};

use super::newton::{self, NewtonOptions, NewtonSystem, Residual};
use super::{add_scaled, p1_at};

/// Converged two-membrane system in mean/half-difference form.
#[derive(Clone, Debug)]
pub struct MembraneState {
    pub mesh: Arc<Mesh>,
    pub gamma: f64,
    /// Mean position `(u1 + u2) / 2`.
    pub m: S1Field,
    /// Half difference `(u2 - u1) / 2`.
    pub delta: S1Field,
    /// Multiplier of the volume constraint.
    pub mu: f64,
    pub forces: MembraneForces,
    pub newton_iterations: usize,
    pub residual: f64,
}

impl MembraneState {
    /// Lower membrane.
    pub fn u1(&self) -> S1Field {
        combine(&self.m, &self.delta, -1.0)
    }

    /// Upper membrane.
    pub fn u2(&self) -> S1Field {
        combine(&self.m, &self.delta, 1.0)
    }

    pub fn delta_at(&self, q: &QuadPoint) -> f64 {
        p1_at(&self.mesh, &self.delta.values, q)
    }

    /// `||(u1 - u2)^+||_{L2} = 2 ||(-delta)^+||_{L2}`
    pub fn violation(&self) -> f64 {
        integrate(&self.mesh, PLUS_RULE, |q| (-2.0 * self.delta_at(q)).max(0.0).powi(2)).sqrt()
    }

    /// `int (delta - 1)`
    pub fn volume_defect(&self) -> f64 {
        integrate(&self.mesh, PLUS_RULE, |q| self.delta_at(q) - 1.0)
    }

    /// Energy of `(m', delta')` with the forces frozen at this state.
    pub fn energy_of(&self, m: &[f64], delta: &[f64]) -> f64 {
        let mesh = &*self.mesh;
        let k = assemble_stiffness(mesh, false);
        let work = integrate(mesh, PLUS_RULE, |q| {
            let d = self.delta_at(q);
            self.forces.f_m(q.triangle, d) * p1_at(mesh, m, q)
                + self.forces.f_delta(q.triangle, d) * p1_at(mesh, delta, q)
        });
        let penalty = integrate(mesh, PLUS_RULE, |q| (-p1_at(mesh, delta, q)).max(0.0).powi(2));
        0.5 * dot(m, &k.mul_vec(m)) + 0.5 * dot(delta, &k.mul_vec(delta)) - work
            + 0.5 * self.gamma * penalty
    }

    pub fn energy(&self) -> f64 {
        self.energy_of(&self.m.values, &self.delta.values)
    }
}

fn combine(m: &S1Field, d: &S1Field, s: f64) -> S1Field {
    S1Field {
        values: m.values.iter().zip(&d.values).map(|(a, b)| a + s * b).collect(),
        homogeneous_dirichlet: true,
    }
}

struct DeltaSystem<'a> {
    mesh: &'a Mesh,
    dofs: DofMap,
    /// `K - alpha M` on interior unknowns.
    operator: SparseMatrix,
    /// `int phi_i`
    volume: Vec<f64>,
    load: Vec<f64>,
    area: f64,
    gamma: f64,
}

impl NewtonSystem for DeltaSystem<'_> {
    fn residual(&self, x: &[f64]) -> Result<Residual> {
        let n = self.dofs.len();
        let (d, mu) = (&x[..n], x[n]);
        let full = self.dofs.extend(d);
        let pen = self.dofs.restrict_vec(&assemble_plus_residual(
            self.mesh,
            PLUS_RULE,
            self.gamma,
            |q| -p1_at(self.mesh, &full, q),
        ));
        let ad = self.operator.mul_vec(d);
        let vol = dot(&self.volume, d);
        let scale = 1.0
            + norm2(&ad)
            + norm2(&pen)
            + mu.abs() * norm2(&self.volume)
            + norm2(&self.load)
            + vol.abs()
            + self.area;
        let mut r = ad;
        add_scaled(&mut r, &pen, -1.0);
        add_scaled(&mut r, &self.volume, mu);
        add_scaled(&mut r, &self.load, -1.0);
        r.push(vol - self.area);
        Ok(Residual { values: r, scale })
    }

    fn direction(&self, x: &[f64], r: &Residual) -> Result<Vec<f64>> {
        let n = self.dofs.len();
        let full = self.dofs.extend(&x[..n]);
        let (_, jac) = assemble_plus_term(self.mesh, PLUS_RULE, self.gamma, |q| {
            -p1_at(self.mesh, &full, q)
        });
        let jac = self.operator.add_scaled(&self.dofs.restrict_matrix(&jac), 1.0);
        let rhs: Vec<f64> = r.values[..n].iter().map(|v| -v).collect();
        let (mut dx, dmu) = solve_bordered(&jac, &self.volume, &rhs, -r.values[n], DEFAULT_TOL)?;
        dx.push(dmu);
        Ok(dx)
    }
}

/// Solves the penalized half-difference problem with its volume constraint
/// by Newton steps on bordered systems, then the linear mean-position
/// problem. `warm` holds an initial `(delta, mu)` on the same mesh.
pub fn solve_membrane(
    mesh: Arc<Mesh>,
    data: &MembraneData,
    gamma: f64,
    opts: &NewtonOptions,
    warm: Option<(&S1Field, f64)>,
) -> Result<MembraneState> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let forces = MembraneForces::new(&mesh, data);
    let dofs = DofMap::dirichlet(&mesh);
    if dofs.is_empty() {
        return Err(Error::InvalidMesh("no interior vertices for the membrane problem".into()));
    }
    let k = dofs.restrict_matrix(&assemble_stiffness(&mesh, false));
    let m = dofs.restrict_matrix(&assemble_mass(&mesh, Space::S1));
    let volume = dofs.restrict_vec(&assemble_load(&mesh, PLUS_RULE, |_| 1.0));
    let system = DeltaSystem {
        mesh: &mesh,
        operator: k.add_scaled(&m, -data.alpha),
        load: dofs.restrict_vec(&assemble_load_p0(&mesh, &forces.half_diff.values)),
        area: mesh.total_area(),
        volume,
        dofs,
        gamma,
    };
    let n = system.dofs.len();
    let x0 = match warm {
        Some((d, mu)) => {
            d.check(&mesh)?;
            let mut x = system.dofs.restrict_vec(&d.values);
            x.push(mu);
            x
        }
        None => {
            let level = system.area / system.volume.iter().sum::<f64>();
            let mut x = vec![level; n];
            x.push(0.0);
            x
        }
    };
    let out = newton::solve(&system, x0, opts)?;
    let delta = &out.x[..n];
    let mu = out.x[n];

    let mut rhs = system.dofs.restrict_vec(&assemble_load_p0(&mesh, &forces.half_sum.values));
    add_scaled(&mut rhs, &m.mul_vec(delta), -data.alpha);
    let m_vals = solve_spd(&k, &rhs, DEFAULT_TOL)?;

    Ok(MembraneState {
        mesh: mesh.clone(),
        gamma,
        m: S1Field {
            values: system.dofs.extend(&m_vals),
            homogeneous_dirichlet: true,
        },
        delta: S1Field {
            values: system.dofs.extend(delta),
            homogeneous_dirichlet: true,
        },
        mu,
        forces,
        newton_iterations: out.iterations,
        residual: out.residual,
    })
}

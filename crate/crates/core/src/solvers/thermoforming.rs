use std::sync::Arc;

use crate::assembly::{
    assemble_load, assemble_mass, assemble_plus_residual, assemble_plus_term, assemble_stiffness,
    assemble_weighted_mass, DofMap, Space,
};
use crate::error::{Error, Result};
use crate::fem::{integrate, QuadPoint, S1Field, PLUS_RULE};
use crate::linalg::{solve_general, DEFAULT_TOL};
use crate::mesh::Mesh;
use crate::problems::ThermoformingData;
use crate::sparse::{dot, norm2, SparseMatrix, TripletBuilder};

use super::newton::{self, NewtonOptions, NewtonSystem, Residual};
use super::{add_scaled, p1_at};

/// Converged discrete thermoforming system: membrane `u` (clamped) and
/// temperature `temp` (insulated boundary).
#[derive(Clone, Debug)]
pub struct ThermoformingState {
    pub mesh: Arc<Mesh>,
    pub gamma: f64,
    pub u: S1Field,
    pub temp: S1Field,
    pub data: ThermoformingData,
    /// Interpolated initial mould.
    pub phi0: S1Field,
    /// Interpolated temperature-to-mould multiplier.
    pub lmult: S1Field,
    pub newton_iterations: usize,
    pub residual: f64,
}

impl ThermoformingState {
    /// `u - phi0 - L T`; positive where the membrane penetrates the mould.
    pub fn gap_at(&self, q: &QuadPoint) -> f64 {
        gap(&self.mesh, &self.u.values, &self.temp.values, &self.phi0, &self.lmult, q)
    }

    /// Mould `phi0 + L T` as a P1 field.
    pub fn mould(&self) -> S1Field {
        S1Field {
            values: (0..self.mesh.num_vertices())
                .map(|v| self.phi0.values[v] + self.lmult.values[v] * self.temp.values[v])
                .collect(),
            homogeneous_dirichlet: false,
        }
    }

    pub fn violation(&self) -> f64 {
        integrate(&self.mesh, PLUS_RULE, |q| self.gap_at(q).max(0.0).powi(2)).sqrt()
    }

    /// Energy of `(v, s)` with the feedback frozen at this state.
    pub fn energy_of(&self, v: &[f64], s: &[f64]) -> f64 {
        let mesh = &*self.mesh;
        let k = assemble_stiffness(mesh, false);
        let m = assemble_mass(mesh, Space::S1);
        let d = &self.data;
        let penalty = integrate(mesh, PLUS_RULE, |q| {
            let w = p1_at(mesh, v, q)
                - p1_at(mesh, &self.phi0.values, q)
                - p1_at(mesh, &self.lmult.values, q) * p1_at(mesh, &self.temp.values, q);
            w.max(0.0).powi(2)
        });
        let heat = integrate(mesh, PLUS_RULE, |q| d.heat.value(-self.gap_at(q)) * p1_at(mesh, s, q));
        let mass1 = integrate(mesh, PLUS_RULE, |q| p1_at(mesh, v, q));
        0.5 * dot(v, &k.mul_vec(v)) - d.f * mass1
            + 0.5 * self.gamma * penalty
            + 0.5 * d.k * dot(s, &m.mul_vec(s))
            + 0.5 * dot(s, &k.mul_vec(s))
            - heat
    }

    pub fn energy(&self) -> f64 {
        self.energy_of(&self.u.values, &self.temp.values)
    }
}

fn gap(mesh: &Mesh, u: &[f64], t: &[f64], phi0: &S1Field, lmult: &S1Field, q: &QuadPoint) -> f64 {
    p1_at(mesh, u, q) - p1_at(mesh, &phi0.values, q) - p1_at(mesh, &lmult.values, q) * p1_at(mesh, t, q)
}

struct System<'a> {
    mesh: &'a Mesh,
    dofs: DofMap,
    /// Stiffness on the clamped unknowns.
    k_d: SparseMatrix,
    /// `k M + K` on all vertices.
    heat_op: SparseMatrix,
    load: Vec<f64>,
    data: &'a ThermoformingData,
    phi0: &'a S1Field,
    lmult: &'a S1Field,
    gamma: f64,
}

impl System<'_> {
    fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nd = self.dofs.len();
        (self.dofs.extend(&x[..nd]), x[nd..].to_vec())
    }
}

impl NewtonSystem for System<'_> {
    fn residual(&self, x: &[f64]) -> Result<Residual> {
        let nd = self.dofs.len();
        let (u, t) = self.split(x);
        let w = |q: &QuadPoint| gap(self.mesh, &u, &t, self.phi0, self.lmult, q);
        let pen = self
            .dofs
            .restrict_vec(&assemble_plus_residual(self.mesh, PLUS_RULE, self.gamma, w));
        let heat = assemble_load(self.mesh, PLUS_RULE, |q| self.data.heat.value(-w(q)));
        let ku = self.k_d.mul_vec(&x[..nd]);
        let at = self.heat_op.mul_vec(&t);
        let scale =
            1.0 + norm2(&ku) + norm2(&self.load) + norm2(&pen) + norm2(&at) + norm2(&heat);
        let mut ru = ku;
        add_scaled(&mut ru, &self.load, -1.0);
        add_scaled(&mut ru, &pen, 1.0);
        let mut rt = at;
        add_scaled(&mut rt, &heat, -1.0);
        ru.extend(rt);
        Ok(Residual { values: ru, scale })
    }

    fn direction(&self, x: &[f64], r: &Residual) -> Result<Vec<f64>> {
        let nd = self.dofs.len();
        let nv = self.mesh.num_vertices();
        let (u, t) = self.split(x);
        let w = |q: &QuadPoint| gap(self.mesh, &u, &t, self.phi0, self.lmult, q);
        let l = |q: &QuadPoint| p1_at(self.mesh, &self.lmult.values, q);
        let (_, chi) = assemble_plus_term(self.mesh, PLUS_RULE, self.gamma, w);
        let chi_l = assemble_weighted_mass(self.mesh, PLUS_RULE, |q| {
            if w(q) > 0.0 {
                self.gamma * l(q)
            } else {
                0.0
            }
        });
        let dg = assemble_weighted_mass(self.mesh, PLUS_RULE, |q| self.data.heat.derivative(-w(q)));
        let dg_l = assemble_weighted_mass(self.mesh, PLUS_RULE, |q| {
            self.data.heat.derivative(-w(q)) * l(q)
        });

        let idx = self.dofs.index();
        let mut jac = TripletBuilder::new(nd + nv, nd + nv);
        for (i, j, v) in self.k_d.triplets() {
            jac.push(i, j, v);
        }
        for (i, j, v) in chi.triplets() {
            if let (Some(a), Some(b)) = (idx[i], idx[j]) {
                jac.push(a, b, v);
            }
        }
        for (i, j, v) in chi_l.triplets() {
            if let Some(a) = idx[i] {
                jac.push(a, nd + j, -v);
            }
        }
        for (i, j, v) in dg.triplets() {
            if let Some(b) = idx[j] {
                jac.push(nd + i, b, v);
            }
        }
        for (i, j, v) in self.heat_op.triplets() {
            jac.push(nd + i, nd + j, v);
        }
        for (i, j, v) in dg_l.triplets() {
            jac.push(nd + i, nd + j, -v);
        }
        let rhs: Vec<f64> = r.values.iter().map(|v| -v).collect();
        solve_general(&jac.build(false), &rhs, DEFAULT_TOL)
    }
}

/// Coupled semismooth Newton for the penalized thermoforming system. `warm`
/// holds initial `(u, T)` on the same mesh.
pub fn solve_thermoforming(
    mesh: Arc<Mesh>,
    data: &ThermoformingData,
    gamma: f64,
    opts: &NewtonOptions,
    warm: Option<(&S1Field, &S1Field)>,
) -> Result<ThermoformingState> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(data.k > 0.0) {
        return Err(Error::InvalidParameter(format!("k must be positive, got {}", data.k)));
    }
    let phi0 = data.phi0.interpolate(&mesh, false);
    let lmult = data.lmult.interpolate(&mesh, false);
    let dofs = DofMap::dirichlet(&mesh);
    let k_full = assemble_stiffness(&mesh, false);
    let heat_op = k_full.add_scaled(&assemble_mass(&mesh, Space::S1), data.k);
    let load = dofs.restrict_vec(&assemble_load(&mesh, PLUS_RULE, |_| data.f));
    let system = System {
        mesh: &mesh,
        k_d: dofs.restrict_matrix(&k_full),
        heat_op,
        load,
        dofs,
        data,
        phi0: &phi0,
        lmult: &lmult,
        gamma,
    };
    let nv = mesh.num_vertices();
    let x0 = match warm {
        Some((u, t)) => {
            u.check(&mesh)?;
            t.check(&mesh)?;
            let mut x = system.dofs.restrict_vec(&u.values);
            x.extend_from_slice(&t.values);
            x
        }
        None => vec![0.0; system.dofs.len() + nv],
    };
    let out = newton::solve(&system, x0, opts)?;
    let (u, t) = system.split(&out.x);
    Ok(ThermoformingState {
        mesh: mesh.clone(),
        gamma,
        u: S1Field {
            values: u,
            homogeneous_dirichlet: true,
        },
        temp: S1Field {
            values: t,
            homogeneous_dirichlet: false,
        },
        data: data.clone(),
        phi0,
        lmult,
        newton_iterations: out.iterations,
        residual: out.residual,
    })
}

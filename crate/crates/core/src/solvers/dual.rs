use crate::assembly::assemble_mixed_rt0;
use crate::error::{Error, Result};
use crate::fem::{rt0_divergence, P0Field, RT0Field};
use crate::linalg::{solve_saddle, DEFAULT_TOL};
use crate::mesh::Mesh;

/// Boundary condition of the reconstructed flux.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluxBoundary {
    /// No condition on the flux (the primal variable is clamped).
    Open,
    /// Zero normal flux (the primal variable has a natural boundary).
    NoFlux,
}

/// Allowed entrywise deviation of `-div p` from its right-hand side,
/// relative to `max(1, max |rhs|)` or, where larger, to the size of the
/// cancelling edge terms `sum_E |E| |p_E| / |T|`. On strongly graded
/// meshes the latter sets the floating-point floor.
pub const DIVERGENCE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DualFlux {
    pub flux: RT0Field,
    /// The right-hand side actually matched. For [`FluxBoundary::NoFlux`]
    /// this is the input minus its mean, which the flux cannot carry.
    pub rhs: P0Field,
    /// Largest relative element defect, see [`DIVERGENCE_TOL`].
    pub divergence_defect: f64,
}

/// Mixed RT0/P0 Poisson solve: returns `p` with `-div p = rhs` elementwise.
pub fn reconstruct_dual(mesh: &Mesh, rhs: &P0Field, boundary: FluxBoundary) -> Result<DualFlux> {
    rhs.check(mesh)?;
    let nt = mesh.num_triangles();
    let (m, b) = assemble_mixed_rt0(mesh);
    let (flux, rhs) = match boundary {
        FluxBoundary::Open => {
            let g: Vec<f64> = (0..nt).map(|t| -mesh.area(t) * rhs.values[t]).collect();
            let (p, _) = solve_saddle(&m, &b, &vec![0.0; m.nrows()], &g, DEFAULT_TOL)?;
            (RT0Field { values: p }, rhs.clone())
        }
        FluxBoundary::NoFlux => {
            let mean = (0..nt).map(|t| mesh.area(t) * rhs.values[t]).sum::<f64>() / mesh.total_area();
            let rhs = P0Field {
                values: rhs.values.iter().map(|v| v - mean).collect(),
            };
            // Interior edges only; the divergence rows then sum to zero, so
            // one of them is dropped.
            let mut edge_map = vec![None; mesh.num_edges()];
            let mut interior = Vec::new();
            for e in 0..mesh.num_edges() {
                if !mesh.is_boundary_edge(e) {
                    edge_map[e] = Some(interior.len());
                    interior.push(e);
                }
            }
            let ni = interior.len();
            let row_map: Vec<Option<usize>> = (0..nt).map(|t| (t + 1 < nt).then_some(t)).collect();
            let m_i = m.restrict(&edge_map, ni, &edge_map, ni);
            let b_i = b.restrict(&row_map, nt - 1, &edge_map, ni);
            let g: Vec<f64> = (0..nt - 1).map(|t| -mesh.area(t) * rhs.values[t]).collect();
            let (p_i, _) = solve_saddle(&m_i, &b_i, &vec![0.0; ni], &g, DEFAULT_TOL)?;
            let mut values = vec![0.0; mesh.num_edges()];
            for (k, &e) in interior.iter().enumerate() {
                values[e] = p_i[k];
            }
            (RT0Field { values }, rhs)
        }
    };
    let div = rt0_divergence(mesh, &flux);
    let scale = rhs.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let defect = (0..nt)
        .map(|t| {
            // magnitude of the edge terms, which cancel down to rhs
            let terms = mesh
                .triangle_edges(t)
                .iter()
                .map(|&e| mesh.edge_length(e) * flux.values[e].abs())
                .sum::<f64>()
                / mesh.area(t);
            (div.values[t] + rhs.values[t]).abs() / scale.max(terms)
        })
        .fold(0.0, f64::max);
    if !(defect <= DIVERGENCE_TOL) {
        return Err(Error::ResidualCheck {
            what: "max |div p + rhs|",
            value: defect,
            bound: DIVERGENCE_TOL,
        });
    }
    Ok(DualFlux {
        flux,
        rhs,
        divergence_defect: defect,
    })
}

//! Assembly of P1 and RT0 operators, load vectors and the penalty term.
//!
//! Matrices are assembled over all vertices; Dirichlet conditions are
//! imposed afterwards by dropping constrained rows and columns through a
//! [`DofMap`].

use crate::fem::{QuadPoint, Quadrature};
use crate::mesh::Mesh;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Numbering of the free vertex unknowns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    free: Vec<usize>,
    index: Vec<Option<usize>>,
}

impl DofMap {
    /// Interior vertices only (homogeneous Dirichlet boundary).
    pub fn dirichlet(mesh: &Mesh) -> Self {
        Self::from_predicate(mesh.num_vertices(), |v| !mesh.is_boundary_vertex(v))
    }

    /// Every vertex (natural boundary conditions).
    pub fn all(mesh: &Mesh) -> Self {
        Self::from_predicate(mesh.num_vertices(), |_| true)
    }

    pub fn from_predicate(n: usize, keep: impl Fn(usize) -> bool) -> Self {
        let mut free = Vec::new();
        let index = (0..n)
            .map(|v| {
                keep(v).then(|| {
                    free.push(v);
                    free.len() - 1
                })
            })
            .collect();
        Self { free, index }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn num_total(&self) -> usize {
        self.index.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn index(&self) -> &[Option<usize>] {
        &self.index
    }

    pub fn restrict_vec(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }

    /// Embeds free values into a full vector, zero at constrained entries.
    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.index.len()];
        for (&v, &x) in self.free.iter().zip(reduced) {
            out[v] = x;
        }
        out
    }

    pub fn restrict_matrix(&self, a: &SparseMatrix) -> SparseMatrix {
        a.restrict(&self.index, self.len(), &self.index, self.len())
    }
}

/// Space selector for [`assemble_mass`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    S1,
    P0,
}

fn assemble_local(mesh: &Mesh, symmetric: bool, local: impl Fn(usize) -> [[f64; 3]; 3]) -> SparseMatrix {
    let n = mesh.num_vertices();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let a = local(t);
        for i in 0..3 {
            for j in 0..3 {
                if a[i][j] != 0.0 {
                    b.push(tri[i], tri[j], a[i][j]);
                }
            }
        }
    }
    b.build(symmetric)
}

/// Local P1 stiffness matrix of triangle `t`.
pub fn local_stiffness(mesh: &Mesh, t: usize) -> [[f64; 3]; 3] {
    let g = mesh.barycentric_gradients(t);
    let area = mesh.area(t);
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    a
}

/// Local P1 mass matrix `|T|/12 (1 + delta_ij)`.
pub fn local_mass(mesh: &Mesh, t: usize) -> [[f64; 3]; 3] {
    let area = mesh.area(t);
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

/// P1 stiffness matrix. With `dirichlet` the boundary rows and columns
/// are eliminated and the result is indexed by [`DofMap::dirichlet`].
pub fn assemble_stiffness(mesh: &Mesh, dirichlet: bool) -> SparseMatrix {
    let full = assemble_local(mesh, true, |t| local_stiffness(mesh, t));
    if dirichlet {
        DofMap::dirichlet(mesh).restrict_matrix(&full)
    } else {
        full
    }
}

pub fn assemble_mass(mesh: &Mesh, space: Space) -> SparseMatrix {
    match space {
        Space::S1 => assemble_local(mesh, true, |t| local_mass(mesh, t)),
        Space::P0 => SparseMatrix::from_triplets(
            mesh.num_triangles(),
            mesh.num_triangles(),
            (0..mesh.num_triangles()).map(|t| (t, t, mesh.area(t))).collect(),
            true,
        ),
    }
}

/// `int w phi_i phi_j` with `w` evaluated at quadrature points.
pub fn assemble_weighted_mass(
    mesh: &Mesh,
    rule: Quadrature,
    weight: impl Fn(&QuadPoint) -> f64,
) -> SparseMatrix {
    assemble_local(mesh, true, |t| {
        let mut m = [[0.0; 3]; 3];
        for q in rule.points(mesh, t) {
            let w = weight(&q) * q.weight;
            if w == 0.0 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += w * q.bary[i] * q.bary[j];
                }
            }
        }
        m
    })
}

/// `int f phi_i` over all vertices.
pub fn assemble_load(mesh: &Mesh, rule: Quadrature, f: impl Fn(&QuadPoint) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        for q in rule.points(mesh, t) {
            let v = f(&q) * q.weight;
            for i in 0..3 {
                out[tri[i]] += v * q.bary[i];
            }
        }
    }
    out
}

/// Load vector of a P0 function (exact).
pub fn assemble_load_p0(mesh: &Mesh, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let share = values[t] * mesh.area(t) / 3.0;
        for v in mesh.triangle(t) {
            out[v] += share;
        }
    }
    out
}

/// Penalty contribution for a pointwise gap function `g`.
///
/// Returns `r_i = gamma int g^+ phi_i` and the Newton derivative
/// `J_ij = gamma int chi_{g > 0} phi_i phi_j`, both over all vertices and
/// integrated with `rule`. These are the derivatives of
/// `(gamma/2) int (g^+)^2` for a gap that grows one-to-one with the unknown.
pub fn assemble_plus_term(
    mesh: &Mesh,
    rule: Quadrature,
    gamma: f64,
    gap: impl Fn(&QuadPoint) -> f64,
) -> (Vec<f64>, SparseMatrix) {
    let n = mesh.num_vertices();
    let mut res = vec![0.0; n];
    let mut jac = TripletBuilder::new(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let mut local = [[0.0; 3]; 3];
        let mut active = false;
        for q in rule.points(mesh, t) {
            let g = gap(&q);
            if g <= 0.0 {
                continue;
            }
            active = true;
            let w = gamma * q.weight;
            for i in 0..3 {
                res[tri[i]] += w * g * q.bary[i];
                for j in 0..3 {
                    local[i][j] += w * q.bary[i] * q.bary[j];
                }
            }
        }
        if active {
            for i in 0..3 {
                for j in 0..3 {
                    jac.push(tri[i], tri[j], local[i][j]);
                }
            }
        }
    }
    (res, jac.build(true))
}

/// Residual part of [`assemble_plus_term`] alone.
pub fn assemble_plus_residual(
    mesh: &Mesh,
    rule: Quadrature,
    gamma: f64,
    gap: impl Fn(&QuadPoint) -> f64,
) -> Vec<f64> {
    assemble_load(mesh, rule, |q| gamma * gap(q).max(0.0))
}

/// RT0 mass matrix and divergence matrix `B[t, e] = int_T div psi_e`.
pub fn assemble_mixed_rt0(mesh: &Mesh) -> (SparseMatrix, SparseMatrix) {
    let ne = mesh.num_edges();
    let nt = mesh.num_triangles();
    let mut m = TripletBuilder::with_capacity(ne, ne, 9 * nt);
    let mut b = TripletBuilder::with_capacity(nt, ne, 3 * nt);
    for t in 0..nt {
        let edges = mesh.triangle_edges(t);
        let area = mesh.area(t);
        let pts = mesh.points(t);
        let scale: [f64; 3] = std::array::from_fn(|k| {
            mesh.edge_sign(t, k) * mesh.edge_length(edges[k]) / (2.0 * area)
        });
        let mut local = [[0.0; 3]; 3];
        // the integrand (x - P_i).(x - P_j) is quadratic
        for q in Quadrature::Order2.points(mesh, t) {
            let d: [[f64; 2]; 3] =
                std::array::from_fn(|k| [q.x[0] - pts[k][0], q.x[1] - pts[k][1]]);
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += q.weight * (d[i][0] * d[j][0] + d[i][1] * d[j][1]);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                m.push(edges[i], edges[j], scale[i] * scale[j] * local[i][j]);
            }
            b.push(t, edges[i], mesh.edge_sign(t, i) * mesh.edge_length(edges[i]));
        }
    }
    (m.build(true), b.build(false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{integrate, RT0Field, S1Field};
    use crate::mesh::{create_domain, DomainKind, DomainSpec};
    use crate::sparse::dot;
    use nalgebra::DMatrix;

    fn reference_triangle() -> Mesh {
        Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    fn square(refs: usize) -> Mesh {
        create_domain(&DomainSpec::new(DomainKind::UnitSquare, refs)).unwrap()
    }

    fn min_eigenvalue(a: &SparseMatrix) -> f64 {
        let n = a.nrows();
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        dense.symmetric_eigen().eigenvalues.min()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reference_stiffness() {
        let a = assemble_stiffness(&reference_triangle(), false);
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(a.get(i, j), expected[i][j], 1e-15));
            }
        }
    }

    #[test]
    fn stiffness_kernel_and_definiteness() {
        let mesh = create_domain(&DomainSpec::new(DomainKind::LShape, 2)).unwrap();
        let a = assemble_stiffness(&mesh, false);
        for i in 0..a.nrows() {
            assert!(a.row(i).map(|(_, v)| v).sum::<f64>().abs() < 1e-12);
        }
        assert!(a.asymmetry() < 1e-14);
        // The coarse square has no interior vertex; use the next two levels.
        for refs in [1, 2] {
            let k = assemble_stiffness(&square(refs), true);
            assert!(k.nrows() > 0);
            assert!(min_eigenvalue(&k) > 0.0);
        }
    }

    #[test]
    fn mass_matrices() {
        let m = assemble_mass(&reference_triangle(), Space::S1);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } * 0.5 / 12.0;
                assert!(close(m.get(i, j), e, 1e-15));
            }
        }
        let p0 = assemble_mass(&square(0), Space::P0);
        assert_eq!(p0.to_dense(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);

        let mesh = create_domain(&DomainSpec::new(DomainKind::LShape, 2)).unwrap();
        let m = assemble_mass(&mesh, Space::S1);
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(close(dot(&ones, &m.mul_vec(&ones)), 0.75, 1e-12));
    }

    #[test]
    fn divergence_matrix_of_identity_field() {
        let mesh = create_domain(&DomainSpec::new(DomainKind::Slit, 1)).unwrap();
        let (m, b) = assemble_mixed_rt0(&mesh);
        let q = RT0Field::interpolate(&mesh, |x| x);
        let div = b.mul_vec(&q.values);
        for t in 0..mesh.num_triangles() {
            assert!(close(div[t], 2.0 * mesh.area(t), 1e-14));
        }
        assert!(m.asymmetry() < 1e-14);
    }

    #[test]
    fn rt0_mass_matches_field_norm_and_is_spd() {
        let mesh = square(0);
        let (m, _) = assemble_mixed_rt0(&mesh);
        assert!(min_eigenvalue(&m) > 0.0);
        let q = RT0Field::interpolate(&mesh, |x| [1.0 + x[1], 2.0 * x[0] - 0.5]);
        let norm_sq = dot(&q.values, &m.mul_vec(&q.values));
        assert!(close(norm_sq, q.l2_norm(&mesh).powi(2), 1e-13));
    }

    #[test]
    fn saddle_with_zero_data() {
        let mesh = square(1);
        let (m, b) = assemble_mixed_rt0(&mesh);
        let (p, y) = crate::linalg::solve_saddle(
            &m,
            &b,
            &vec![0.0; m.nrows()],
            &vec![0.0; b.nrows()],
            1e-10,
        )
        .unwrap();
        assert!(p.iter().chain(&y).all(|v| *v == 0.0));
    }

    #[test]
    fn inactive_plus_term_vanishes() {
        let mesh = square(2);
        let (r, j) = assemble_plus_term(&mesh, Quadrature::Order4, 10.0, |q| -q.x[0] - 0.1);
        assert!(r.iter().all(|v| *v == 0.0));
        assert_eq!(j.nnz(), 0);
    }

    #[test]
    fn unit_gap_on_one_triangle() {
        let mesh = reference_triangle();
        let (r, j) = assemble_plus_term(&mesh, Quadrature::Order4, 1.0, |_| 1.0);
        let load = assemble_load(&mesh, Quadrature::Order1, |_| 1.0);
        let mass = assemble_mass(&mesh, Space::S1);
        for i in 0..3 {
            assert!(close(r[i], load[i], 1e-15));
            assert!(close(r[i], 0.5 / 3.0, 1e-15));
            for k in 0..3 {
                assert!(close(j.get(i, k), mass.get(i, k), 1e-15));
            }
        }
    }

    #[test]
    fn plus_term_matches_energy_derivative() {
        let mesh = square(3);
        let gamma = 50.0;
        let obstacle = |x: [f64; 2]| 0.3 - (x[0] - 0.4).powi(2) - (x[1] - 0.6).powi(2);
        let y = S1Field::interpolate(&mesh, |x| 0.2 * (3.0 * x[0]).sin() * x[1], false);
        let energy = |vals: &[f64]| {
            let f = S1Field {
                values: vals.to_vec(),
                homogeneous_dirichlet: false,
            };
            integrate(&mesh, Quadrature::Order4, |q| {
                let g = (f.eval(&mesh, q.triangle, q.bary) - obstacle(q.x)).max(0.0);
                0.5 * gamma * g * g
            })
        };
        let (r, _) = assemble_plus_term(&mesh, Quadrature::Order4, gamma, |q| {
            y.eval(&mesh, q.triangle, q.bary) - obstacle(q.x)
        });
        let h = 1e-6;
        let dir: Vec<f64> = (0..mesh.num_vertices()).map(|v| ((v * 7) % 5) as f64 - 2.0).collect();
        let plus: Vec<f64> = y.values.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
        let minus: Vec<f64> = y.values.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
        let fd = (energy(&plus) - energy(&minus)) / (2.0 * h);
        let exact = dot(&r, &dir);
        assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-8), "{fd} vs {exact}");
    }

    #[test]
    fn dof_map_round_trip() {
        let mesh = square(2);
        let map = DofMap::dirichlet(&mesh);
        assert_eq!(map.len(), mesh.num_interior_vertices());
        let full: Vec<f64> = (0..mesh.num_vertices()).map(|v| v as f64).collect();
        let back = map.extend(&map.restrict_vec(&full));
        for v in 0..mesh.num_vertices() {
            let expected = if mesh.is_boundary_vertex(v) { 0.0 } else { full[v] };
            assert_eq!(back[v], expected);
        }
    }
}

//! Discrete spaces on a [`Mesh`]: vertex-based P1 (S1), elementwise constant
//! P0 and lowest-order Raviart-Thomas (RT0), plus triangle quadrature.

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// A point of a quadrature rule, mapped onto a triangle.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub triangle: usize,
    pub bary: [f64; 3],
    pub x: [f64; 2],
    /// Physical weight (reference weight times triangle area).
    pub weight: f64,
}

/// Symmetric triangle rules with strictly positive weights. Points are
/// barycentric; weights sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    /// Centroid rule, exact for degree 1.
    Order1,
    /// Three interior points, exact for degree 2.
    Order2,
    /// Six points, exact for degree 4.
    Order4,
}

const ORDER1: [([f64; 3], f64); 1] = [([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)];

const ORDER2: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const Q4_A: f64 = 0.445_948_490_915_964_886_32;
const Q4_B: f64 = 0.091_576_213_509_770_743_46;
const Q4_WA: f64 = 0.223_381_589_678_011_465_70;
const Q4_WB: f64 = 0.109_951_743_655_321_867_64;

const ORDER4: [([f64; 3], f64); 6] = [
    ([Q4_A, Q4_A, 1.0 - 2.0 * Q4_A], Q4_WA),
    ([Q4_A, 1.0 - 2.0 * Q4_A, Q4_A], Q4_WA),
    ([1.0 - 2.0 * Q4_A, Q4_A, Q4_A], Q4_WA),
    ([Q4_B, Q4_B, 1.0 - 2.0 * Q4_B], Q4_WB),
    ([Q4_B, 1.0 - 2.0 * Q4_B, Q4_B], Q4_WB),
    ([1.0 - 2.0 * Q4_B, Q4_B, Q4_B], Q4_WB),
];

impl Quadrature {
    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Quadrature::Order1),
            2 => Ok(Quadrature::Order2),
            4 => Ok(Quadrature::Order4),
            _ => Err(Error::InvalidParameter(format!(
                "quadrature order must be 1, 2 or 4, got {order}"
            ))),
        }
    }

    pub fn rule(self) -> &'static [([f64; 3], f64)] {
        match self {
            Quadrature::Order1 => &ORDER1,
            Quadrature::Order2 => &ORDER2,
            Quadrature::Order4 => &ORDER4,
        }
    }

    /// Quadrature points of triangle `t`.
    pub fn points(self, mesh: &Mesh, t: usize) -> impl Iterator<Item = QuadPoint> + '_ {
        let area = mesh.area(t);
        self.rule().iter().map(move |&(bary, w)| QuadPoint {
            triangle: t,
            bary,
            x: mesh.map_point(t, bary),
            weight: w * area,
        })
    }
}

/// Rule used for every nonsmooth (plus-function) integrand.
pub const PLUS_RULE: Quadrature = Quadrature::Order4;

/// P1 field with one value per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct S1Field {
    pub values: Vec<f64>,
    pub homogeneous_dirichlet: bool,
}

impl S1Field {
    pub fn zeros(mesh: &Mesh, homogeneous_dirichlet: bool) -> Self {
        Self {
            values: vec![0.0; mesh.num_vertices()],
            homogeneous_dirichlet,
        }
    }

    /// Nodal interpolant. With `homogeneous_dirichlet` the boundary values
    /// are set to zero.
    pub fn interpolate(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64, homogeneous_dirichlet: bool) -> Self {
        let values = (0..mesh.num_vertices())
            .map(|v| {
                if homogeneous_dirichlet && mesh.is_boundary_vertex(v) {
                    0.0
                } else {
                    f(mesh.vertex(v))
                }
            })
            .collect();
        Self {
            values,
            homogeneous_dirichlet,
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>, homogeneous_dirichlet: bool) -> Result<Self> {
        check_len("S1 field", mesh.num_vertices(), values.len())?;
        if homogeneous_dirichlet {
            if let Some(v) = mesh.boundary_vertices().find(|&v| values[v] != 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "Dirichlet field is nonzero at boundary vertex {v}"
                )));
            }
        }
        Ok(Self {
            values,
            homogeneous_dirichlet,
        })
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        check_len("S1 field", mesh.num_vertices(), self.values.len())
    }

    #[inline]
    pub fn eval(&self, mesh: &Mesh, t: usize, bary: [f64; 3]) -> f64 {
        let tri = mesh.triangle(t);
        bary[0] * self.values[tri[0]] + bary[1] * self.values[tri[1]] + bary[2] * self.values[tri[2]]
    }

    /// Values at the three vertices of triangle `t`.
    #[inline]
    pub fn local(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        let tri = mesh.triangle(t);
        [self.values[tri[0]], self.values[tri[1]], self.values[tri[2]]]
    }

    pub fn gradient(&self, mesh: &Mesh, t: usize) -> [f64; 2] {
        let g = mesh.barycentric_gradients(t);
        let u = self.local(mesh, t);
        [
            u[0] * g[0][0] + u[1] * g[1][0] + u[2] * g[2][0],
            u[0] * g[0][1] + u[1] * g[1][1] + u[2] * g[2][1],
        ]
    }

    /// Transfers the field to a mesh obtained from `coarse` by bisection.
    /// Exact for P1 functions since the spaces are nested.
    pub fn prolongate(&self, fine: &Mesh) -> Self {
        let mut values = self.values.clone();
        values.reserve(fine.num_vertices() - values.len());
        for v in self.values.len()..fine.num_vertices() {
            let [a, b] = fine
                .vertex_parents(v)
                .expect("new vertices are edge midpoints");
            values.push(0.5 * (values[a] + values[b]));
        }
        Self {
            values,
            homogeneous_dirichlet: self.homogeneous_dirichlet,
        }
    }

    pub fn l2_norm(&self, mesh: &Mesh) -> f64 {
        integrate(mesh, Quadrature::Order2, |q| self.eval(mesh, q.triangle, q.bary).powi(2)).sqrt()
    }
}

/// Elementwise constant field.
#[derive(Clone, Debug, PartialEq)]
pub struct P0Field {
    pub values: Vec<f64>,
}

impl P0Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; mesh.num_triangles()],
        }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.num_triangles()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        check_len("P0 field", mesh.num_triangles(), values.len())?;
        Ok(Self { values })
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        check_len("P0 field", mesh.num_triangles(), self.values.len())
    }

    /// Transfers the field to the mesh produced by a single refinement step.
    pub fn prolongate(&self, fine: &Mesh) -> Self {
        Self {
            values: (0..fine.num_triangles())
                .map(|t| self.values[fine.parent(t).unwrap_or(t)])
                .collect(),
        }
    }

    pub fn l2_norm(&self, mesh: &Mesh) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(t, v)| v * v * mesh.area(t))
            .sum::<f64>()
            .sqrt()
    }
}

/// RT0 field: one normal component per global edge, measured against the
/// edge normal of [`Mesh::edge_normal`].
#[derive(Clone, Debug, PartialEq)]
pub struct RT0Field {
    pub values: Vec<f64>,
}

impl RT0Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![0.0; mesh.num_edges()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        check_len("RT0 field", mesh.num_edges(), values.len())?;
        Ok(Self { values })
    }

    /// Interpolates a vector field by its normal component at edge midpoints
    /// (exact for fields of the form `a + b x`).
    pub fn interpolate(mesh: &Mesh, q: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let values = (0..mesh.num_edges())
            .map(|e| {
                let v = q(mesh.edge_midpoint(e));
                let n = mesh.edge_normal(e);
                v[0] * n[0] + v[1] * n[1]
            })
            .collect();
        Self { values }
    }

    /// Value of the field at a point of triangle `t`.
    pub fn eval(&self, mesh: &Mesh, t: usize, x: [f64; 2]) -> [f64; 2] {
        let tri = mesh.triangle(t);
        let edges = mesh.triangle_edges(t);
        let area = mesh.area(t);
        let mut out = [0.0; 2];
        for k in 0..3 {
            let p = mesh.vertex(tri[k]);
            let scale = mesh.edge_sign(t, k) * mesh.edge_length(edges[k]) / (2.0 * area)
                * self.values[edges[k]];
            out[0] += scale * (x[0] - p[0]);
            out[1] += scale * (x[1] - p[1]);
        }
        out
    }

    pub fn l2_norm(&self, mesh: &Mesh) -> f64 {
        integrate(mesh, Quadrature::Order2, |q| {
            let v = self.eval(mesh, q.triangle, q.x);
            v[0] * v[0] + v[1] * v[1]
        })
        .sqrt()
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// Integral over the whole mesh with the given rule.
pub fn integrate(mesh: &Mesh, rule: Quadrature, f: impl Fn(&QuadPoint) -> f64) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| rule.points(mesh, t).map(|q| q.weight * f(&q)).sum::<f64>())
        .sum()
}

/// Integral of a function of position over the whole mesh.
pub fn integrate_fn(mesh: &Mesh, rule: Quadrature, f: impl Fn([f64; 2]) -> f64) -> f64 {
    integrate(mesh, rule, |q| f(q.x))
}

/// Per-triangle integrals.
pub fn integrate_elementwise(mesh: &Mesh, rule: Quadrature, f: impl Fn(&QuadPoint) -> f64) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|t| rule.points(mesh, t).map(|q| q.weight * f(&q)).sum::<f64>())
        .collect()
}

/// Elementwise mean of a P1 field (exact: the mean of the vertex values).
pub fn project_p0(mesh: &Mesh, field: &S1Field) -> P0Field {
    P0Field {
        values: (0..mesh.num_triangles())
            .map(|t| field.local(mesh, t).iter().sum::<f64>() / 3.0)
            .collect(),
    }
}

/// Elementwise mean of a pointwise integrand under the given rule.
pub fn project_p0_with(mesh: &Mesh, rule: Quadrature, f: impl Fn(&QuadPoint) -> f64) -> P0Field {
    let mut values = integrate_elementwise(mesh, rule, f);
    for (t, v) in values.iter_mut().enumerate() {
        *v /= mesh.area(t);
    }
    P0Field { values }
}

/// Exact elementwise divergence of an RT0 field.
pub fn rt0_divergence(mesh: &Mesh, field: &RT0Field) -> P0Field {
    P0Field {
        values: (0..mesh.num_triangles())
            .map(|t| {
                let edges = mesh.triangle_edges(t);
                let flux: f64 = (0..3)
                    .map(|k| mesh.edge_sign(t, k) * mesh.edge_length(edges[k]) * field.values[edges[k]])
                    .sum();
                flux / mesh.area(t)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{create_domain, refine_uniform, DomainKind, DomainSpec};

    fn square(refinements: usize) -> Mesh {
        create_domain(&DomainSpec::new(DomainKind::UnitSquare, refinements)).unwrap()
    }

    #[test]
    fn rules_have_positive_weights_summing_to_one() {
        for rule in [Quadrature::Order1, Quadrature::Order2, Quadrature::Order4] {
            let sum: f64 = rule.rule().iter().map(|(_, w)| *w).sum();
            assert!((sum - 1.0).abs() < 1e-15);
            assert!(rule.rule().iter().all(|(_, w)| *w > 0.0));
            for (b, _) in rule.rule() {
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rules_are_exact_up_to_their_degree() {
        // integrals of x^i y^j over the reference triangle: i! j! / (i + j + 2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        let mesh = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        for (rule, degree) in [(Quadrature::Order1, 1), (Quadrature::Order2, 2), (Quadrature::Order4, 4)] {
            for i in 0..=degree {
                for j in 0..=(degree - i) {
                    let exact = fact(i) * fact(j) / fact(i + j + 2);
                    let got = integrate_fn(&mesh, rule, |x| x[0].powi(i as i32) * x[1].powi(j as i32));
                    assert!((got - exact).abs() < 1e-15, "{rule:?} x^{i} y^{j}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn integrate_simple_integrands() {
        let mesh = square(0);
        assert!((integrate_fn(&mesh, Quadrature::Order1, |_| 1.0) - 1.0).abs() < 1e-15);
        assert!((integrate_fn(&mesh, Quadrature::Order1, |x| x[0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrate_kink_converges_to_closed_form() {
        // (x - 1/2)^+ integrates to 1/8 over the unit square
        let plus = |x: [f64; 2]| (x[0] - 0.5).max(0.0);
        let coarse = square(0);
        let err0 = (integrate_fn(&coarse, Quadrature::Order4, plus) - 0.125).abs();
        assert!(err0 < 1e-2, "coarse error {err0}");
        // after one uniform refinement x = 1/2 is a mesh line
        let fine = refine_uniform(&coarse);
        let err1 = (integrate_fn(&fine, Quadrature::Order4, plus) - 0.125).abs();
        assert!(err1 < 1e-15, "aligned error {err1}");
        // unaligned meshes converge as well
        let off = |x: [f64; 2]| (x[0] - 0.3).max(0.0);
        let exact = 0.5 * 0.7 * 0.7;
        let mut prev = f64::INFINITY;
        let mut mesh = coarse;
        for _ in 0..4 {
            let err = (integrate_fn(&mesh, Quadrature::Order4, off) - exact).abs();
            assert!(err <= prev + 1e-15);
            prev = err;
            mesh = refine_uniform(&mesh);
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn p0_projection_examples() {
        let mesh = square(2);
        let c = S1Field::interpolate(&mesh, |_| 3.5, false);
        assert!(project_p0(&mesh, &c).values.iter().all(|v| (v - 3.5).abs() < 1e-15));

        let single = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let hat = S1Field::from_values(&single, vec![1.0, 0.0, 0.0], false).unwrap();
        assert!((project_p0(&single, &hat).values[0] - 1.0 / 3.0).abs() < 1e-15);
        // the quadrature route agrees for P1 input
        let q = project_p0_with(&single, Quadrature::Order2, |q| hat.eval(&single, q.triangle, q.bary));
        assert!((q.values[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rt0_divergence_of_position_field_is_two() {
        let mesh = square(2);
        let q = RT0Field::interpolate(&mesh, |x| x);
        for d in rt0_divergence(&mesh, &q).values {
            assert!((d - 2.0).abs() < 1e-12);
        }
        let zero = RT0Field::zeros(&mesh);
        assert!(rt0_divergence(&mesh, &zero).values.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn rt0_interpolation_reproduces_affine_fields() {
        let mesh = square(1);
        let field = |x: [f64; 2]| [0.3 + 1.5 * x[0], -0.7 + 1.5 * x[1]];
        let q = RT0Field::interpolate(&mesh, field);
        for t in 0..mesh.num_triangles() {
            let x = mesh.map_point(t, [0.2, 0.5, 0.3]);
            let (got, want) = (q.eval(&mesh, t, x), field(x));
            assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn prolongation_is_exact_for_p1() {
        let coarse = square(1);
        let f = |x: [f64; 2]| 2.0 * x[0] - 3.0 * x[1] + 0.25;
        let u = S1Field::interpolate(&coarse, f, false);
        let fine = refine_uniform(&coarse);
        let uf = u.prolongate(&fine);
        assert_eq!(uf, S1Field::interpolate(&fine, f, false));
    }
}

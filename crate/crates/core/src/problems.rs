//! Problem data for the three benchmarks: obstacle problem, thermoforming
//! QVI and two-membrane QVI.

use crate::error::{Error, Result};
use crate::fem::{project_p0_with, P0Field, S1Field, Quadrature};
use crate::mesh::{DomainKind, DomainSpec, Mesh};

/// A region of the plane given by a point-membership test.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Everywhere,
    /// Simple polygon, vertices in order.
    Polygon(Vec<[f64; 2]>),
    /// Axis-aligned open box `(x0, x1) x (y0, y1)`.
    Box([f64; 4]),
    /// Points of `outer` that are not in `inner`.
    Difference(Box<Region>, Box<Region>),
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Region::Everywhere => true,
            Region::Polygon(v) => point_in_polygon(v, p),
            Region::Box([x0, x1, y0, y1]) => p[0] > *x0 && p[0] < *x1 && p[1] > *y0 && p[1] < *y1,
            Region::Difference(a, b) => a.contains(p) && !b.contains(p),
        }
    }
}

fn point_in_polygon(v: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A scalar function of position.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarField {
    Constant(f64),
    /// `peak - curvature |x - center|^2`
    Paraboloid {
        peak: f64,
        curvature: f64,
        center: [f64; 2],
    },
    /// `height max(0, 1 - |x - center|_inf / half_width)`
    Tent {
        height: f64,
        half_width: f64,
        center: [f64; 2],
    },
    /// `value` inside the region, zero outside.
    Indicator { value: f64, region: Region },
}

impl ScalarField {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Paraboloid {
                peak,
                curvature,
                center,
            } => peak - curvature * ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)),
            ScalarField::Tent {
                height,
                half_width,
                center,
            } => {
                let r = (x[0] - center[0]).abs().max((x[1] - center[1]).abs());
                height * (1.0 - r / half_width).max(0.0)
            }
            ScalarField::Indicator { value, region } => {
                if region.contains(x) {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    /// Nodal interpolant.
    pub fn interpolate(&self, mesh: &Mesh, homogeneous_dirichlet: bool) -> S1Field {
        S1Field::interpolate(mesh, |x| self.eval(x), homogeneous_dirichlet)
    }

    /// Elementwise mean (order-4 quadrature; exact for constants and for
    /// indicators of regions the mesh resolves).
    pub fn project(&self, mesh: &Mesh) -> P0Field {
        project_p0_with(mesh, Quadrature::Order4, |q| self.eval(q.x))
    }
}

/// Heat source `g` of the thermoforming model; must be decreasing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeatSource {
    /// `amplitude / (1 + exp(steepness r))`
    Logistic { amplitude: f64, steepness: f64 },
    Constant(f64),
}

impl HeatSource {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            HeatSource::Logistic {
                amplitude,
                steepness,
            } => amplitude * logistic(-steepness * r),
            HeatSource::Constant(c) => c,
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            HeatSource::Logistic {
                amplitude,
                steepness,
            } => {
                let s = logistic(-steepness * r);
                -amplitude * steepness * s * (1.0 - s)
            }
            HeatSource::Constant(_) => 0.0,
        }
    }
}

/// `1 / (1 + exp(-t))` without overflow.
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleData {
    pub psi: ScalarField,
    pub f: ScalarField,
}

impl Default for ObstacleData {
    /// A paraboloid obstacle pushed against by a downward load.
    fn default() -> Self {
        Self {
            psi: ScalarField::Paraboloid {
                peak: 0.1,
                curvature: 2.0,
                center: [0.5, 0.5],
            },
            f: ScalarField::Constant(-10.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermoformingData {
    pub k: f64,
    pub f: f64,
    pub heat: HeatSource,
    /// Multiplier realizing the linear map from temperature to mould shift.
    pub lmult: ScalarField,
    pub phi0: ScalarField,
}

impl Default for ThermoformingData {
    fn default() -> Self {
        Self {
            k: 1.0,
            f: 100.0,
            heat: HeatSource::Logistic {
                amplitude: 1.0,
                steepness: 5.0,
            },
            lmult: ScalarField::Constant(1.0),
            phi0: ScalarField::Tent {
                height: 1.0,
                half_width: 0.25,
                center: [0.5, 0.5],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MembraneData {
    pub alpha: f64,
    pub f_const_1: ScalarField,
    pub f_const_2: ScalarField,
}

/// Force support of the L-shape benchmark.
pub fn l_shape_support() -> Region {
    let s = 1.0 / 6.0;
    Region::Polygon(vec![
        [s, s],
        [2.0 * s, s],
        [2.0 * s, 4.0 * s],
        [5.0 * s, 4.0 * s],
        [5.0 * s, 5.0 * s],
        [s, 5.0 * s],
    ])
}

/// Force support of the slit benchmark: a square frame of width 1/4.
pub fn slit_support() -> Region {
    Region::Difference(
        Box::new(Region::Box([0.0, 1.0, 0.0, 1.0])),
        Box::new(Region::Box([0.25, 0.75, 0.25, 0.75])),
    )
}

impl MembraneData {
    pub fn l_shape() -> Self {
        Self {
            alpha: 2.0,
            f_const_1: ScalarField::Indicator {
                value: 1000.0,
                region: l_shape_support(),
            },
            f_const_2: ScalarField::Indicator {
                value: -500.0,
                region: l_shape_support(),
            },
        }
    }

    pub fn slit() -> Self {
        Self {
            alpha: 2.0,
            f_const_1: ScalarField::Indicator {
                value: 1000.0,
                region: slit_support(),
            },
            f_const_2: ScalarField::Indicator {
                value: -1000.0,
                region: slit_support(),
            },
        }
    }
}

/// Membrane forces for a given halved difference `delta`, as P1-plus-P0
/// pieces: `f_m = half_sum - alpha delta`, `f_delta = half_diff + alpha delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct MembraneForces {
    pub half_sum: P0Field,
    pub half_diff: P0Field,
    pub alpha: f64,
}

impl MembraneForces {
    pub fn new(mesh: &Mesh, data: &MembraneData) -> Self {
        let f1 = data.f_const_1.project(mesh);
        let f2 = data.f_const_2.project(mesh);
        let half_sum = f1.values.iter().zip(&f2.values).map(|(a, b)| 0.5 * (a + b)).collect();
        let half_diff = f1.values.iter().zip(&f2.values).map(|(a, b)| 0.5 * (b - a)).collect();
        Self {
            half_sum: P0Field { values: half_sum },
            half_diff: P0Field { values: half_diff },
            alpha: data.alpha,
        }
    }

    /// `f_m(delta)` at a point of triangle `t` where `delta` has value `d`.
    pub fn f_m(&self, t: usize, d: f64) -> f64 {
        self.half_sum.values[t] - self.alpha * d
    }

    /// `f_delta(delta)` at a point of triangle `t` where `delta` has value `d`.
    pub fn f_delta(&self, t: usize, d: f64) -> f64 {
        self.half_diff.values[t] + self.alpha * d
    }
}

/// One of the three benchmark families.
#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    Obstacle(ObstacleData),
    Thermoforming(ThermoformingData),
    Membrane(MembraneData),
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Obstacle(_) => "obstacle",
            Variant::Thermoforming(_) => "thermoforming",
            Variant::Membrane(_) => "membrane",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub variant: Variant,
    pub domain: DomainSpec,
}

impl ProblemSpec {
    /// Membrane benchmark on the L-shape, on a coarse grid aligned with the
    /// force support.
    pub fn membrane_l_shape(initial_refinements: usize) -> Self {
        Self {
            variant: Variant::Membrane(MembraneData::l_shape()),
            domain: DomainSpec::new(DomainKind::LShape, initial_refinements).with_cells(6),
        }
    }

    pub fn membrane_slit(initial_refinements: usize) -> Self {
        Self {
            variant: Variant::Membrane(MembraneData::slit()),
            domain: DomainSpec::new(DomainKind::Slit, initial_refinements).with_cells(4),
        }
    }

    /// Thermoforming benchmark. The coarse grid has three cells per side so
    /// that no mesh line ever follows the kinks of the mould.
    pub fn thermoforming(initial_refinements: usize) -> Self {
        Self {
            variant: Variant::Thermoforming(ThermoformingData::default()),
            domain: DomainSpec::new(DomainKind::UnitSquare, initial_refinements).with_cells(3),
        }
    }

    pub fn obstacle(initial_refinements: usize) -> Self {
        Self {
            variant: Variant::Obstacle(ObstacleData::default()),
            domain: DomainSpec::new(DomainKind::UnitSquare, initial_refinements).with_cells(2),
        }
    }

    /// Checks the data against the mesh it will be used on.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        match &self.variant {
            Variant::Obstacle(d) => {
                if let Some(v) = mesh.boundary_vertices().find(|&v| d.psi.eval(mesh.vertex(v)) >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "obstacle must be negative on the boundary, psi({:?}) >= 0",
                        mesh.vertex(v)
                    )));
                }
            }
            Variant::Thermoforming(d) => {
                if !(d.k > 0.0) {
                    return Err(Error::InvalidParameter(format!("k must be positive, got {}", d.k)));
                }
                let decreasing = (-200..=200)
                    .map(|i| d.heat.derivative(i as f64 * 0.05))
                    .all(|g| g <= 0.0);
                if !decreasing {
                    return Err(Error::InvalidParameter("heat source must be decreasing".into()));
                }
            }
            Variant::Membrane(d) => {
                let bound = friedrichs_bound(mesh);
                if !(d.alpha >= 0.0 && d.alpha < bound) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha must lie in [0, {bound:.3}) for a strongly monotone problem, got {}",
                        d.alpha
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lower bound for the first Dirichlet eigenvalue of the Laplacian on the
/// mesh domain: the eigenvalue of its bounding box (domain monotonicity).
pub fn friedrichs_bound(mesh: &Mesh) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.vertices() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let pi2 = std::f64::consts::PI.powi(2);
    pi2 / (hi[0] - lo[0]).powi(2) + pi2 / (hi[1] - lo[1]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{create_domain, refine_uniform};

    fn area_of(mesh: &Mesh, region: &Region) -> f64 {
        let ind = ScalarField::Indicator {
            value: 1.0,
            region: region.clone(),
        }
        .project(mesh);
        (0..mesh.num_triangles()).map(|t| ind.values[t] * mesh.area(t)).sum()
    }

    #[test]
    fn support_areas() {
        // shoelace on the support polygon: (1/6)(1/2) + (1/2)(1/6) - (1/6)(1/6) = 7/36
        let l = ProblemSpec::membrane_l_shape(0);
        let mesh = create_domain(&l.domain).unwrap();
        assert!((area_of(&mesh, &l_shape_support()) - 7.0 / 36.0).abs() < 1e-12);
        let s = ProblemSpec::membrane_slit(0);
        let mesh = create_domain(&s.domain).unwrap();
        assert!((area_of(&mesh, &slit_support()) - 0.75).abs() < 1e-12);
        // stays exact under refinement because the coarse grid is aligned
        let fine = refine_uniform(&refine_uniform(&mesh));
        assert!((area_of(&fine, &slit_support()) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn membrane_force_values() {
        let mesh = create_domain(&DomainSpec::new(DomainKind::UnitSquare, 1)).unwrap();
        let zero = MembraneData {
            alpha: 2.0,
            f_const_1: ScalarField::Constant(0.0),
            f_const_2: ScalarField::Constant(0.0),
        };
        let f = MembraneForces::new(&mesh, &zero);
        assert_eq!(f.f_m(0, 1.0), -2.0);
        assert_eq!(f.f_delta(0, 1.0), 2.0);

        let l = ProblemSpec::membrane_l_shape(0);
        let mesh = create_domain(&l.domain).unwrap();
        let Variant::Membrane(data) = &l.variant else { unreachable!() };
        let f = MembraneForces::new(&mesh, data);
        let inside = (0..mesh.num_triangles())
            .find(|&t| l_shape_support().contains(mesh.centroid(t)))
            .unwrap();
        assert!((f.f_m(inside, 0.0) - 250.0).abs() < 1e-9);
        assert!((f.f_delta(inside, 0.0) + 750.0).abs() < 1e-9);

        let s = ProblemSpec::membrane_slit(0);
        let mesh = create_domain(&s.domain).unwrap();
        let Variant::Membrane(data) = &s.variant else { unreachable!() };
        let f = MembraneForces::new(&mesh, data);
        let inside = (0..mesh.num_triangles())
            .find(|&t| slit_support().contains(mesh.centroid(t)))
            .unwrap();
        assert!((f.f_m(inside, 0.0) - 0.0).abs() < 1e-9);
        assert!((f.f_delta(inside, 0.0) + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn heat_source_derivative_matches_difference_quotient() {
        let g = HeatSource::Logistic {
            amplitude: 1.0,
            steepness: 5.0,
        };
        for r in [-3.0, -0.4, 0.0, 0.2, 2.5] {
            let h = 1e-6;
            let fd = (g.value(r + h) - g.value(r - h)) / (2.0 * h);
            assert!((fd - g.derivative(r)).abs() < 1e-8);
            assert!(g.derivative(r) < 0.0);
        }
        assert_eq!(g.value(0.0), 0.5);
        assert!(g.value(-1e4).is_finite() && g.value(1e4) == 0.0);
    }

    #[test]
    fn validation() {
        for spec in [
            ProblemSpec::obstacle(0),
            ProblemSpec::thermoforming(0),
            ProblemSpec::membrane_l_shape(0),
            ProblemSpec::membrane_slit(0),
        ] {
            let mesh = create_domain(&spec.domain).unwrap();
            spec.validate(&mesh).unwrap();
        }
        let mut bad = ProblemSpec::membrane_slit(0);
        if let Variant::Membrane(d) = &mut bad.variant {
            d.alpha = 25.0;
        }
        let mesh = create_domain(&bad.domain).unwrap();
        assert!(bad.validate(&mesh).is_err());
    }
}

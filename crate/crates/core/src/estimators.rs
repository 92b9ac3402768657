//! Primal-dual gap error estimators.
//!
//! Each estimator reconstructs RT0 fluxes balancing the discrete state and
//! evaluates the gap as a sum of elementwise nonnegative terms.

use crate::error::Result;
use crate::fem::{integrate, Quadrature, QuadPoint, P0Field, RT0Field, S1Field, PLUS_RULE};
use crate::mesh::Mesh;
use crate::solvers::{
    reconstruct_dual, FluxBoundary, MembraneState, ObstacleState, ThermoformingState,
};

/// Estimator value with its elementwise and termwise breakdown.
#[derive(Clone, Debug)]
pub struct Estimate {
    /// Squared estimator.
    pub total: f64,
    pub per_element: Vec<f64>,
    /// Named contributions, in a fixed order per problem.
    pub terms: Vec<(&'static str, f64)>,
    /// Proxy for the derivative of the squared estimator in the penalty
    /// parameter.
    pub dgamma: f64,
    /// Data-oscillation bounds, empty when the data are exact.
    pub oscillation: Vec<(&'static str, f64)>,
    /// Largest relative divergence defect over the reconstructed fluxes.
    pub divergence_defect: f64,
    pub fluxes: Vec<RT0Field>,
}

impl Estimate {
    pub fn eta(&self) -> f64 {
        self.total.sqrt()
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn min_indicator(&self) -> f64 {
        self.per_element.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn from_terms(
        terms: Vec<(&'static str, Vec<f64>)>,
        dgamma: f64,
        divergence_defect: f64,
        fluxes: Vec<RT0Field>,
    ) -> Self {
        let nt = terms.first().map_or(0, |(_, v)| v.len());
        let per_element: Vec<f64> = (0..nt).map(|t| terms.iter().map(|(_, v)| v[t]).sum()).collect();
        Self {
            total: per_element.iter().sum(),
            per_element,
            terms: terms.iter().map(|(n, v)| (*n, v.iter().sum())).collect(),
            dgamma,
            oscillation: Vec::new(),
            divergence_defect,
            fluxes,
        }
    }
}

/// `1/2 int_T |grad v - p|^2` for every triangle.
fn flux_gap(mesh: &Mesh, v: &S1Field, p: &RT0Field) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|t| {
            let g = v.gradient(mesh, t);
            0.5 * Quadrature::Order2
                .points(mesh, t)
                .map(|q| {
                    let pv = p.eval(mesh, t, q.x);
                    q.weight * ((g[0] - pv[0]).powi(2) + (g[1] - pv[1]).powi(2))
                })
                .sum::<f64>()
        })
        .collect()
}

/// Elementwise pieces of the penalty part for a gap function `g`:
/// the mean of `g^+`, `gamma/2 int_T (g^+ - mean)^2` and
/// `gamma int_T mean (-g)^+`.
struct PenaltyParts {
    mean: Vec<f64>,
    projection: Vec<f64>,
    cross: Vec<f64>,
}

fn penalty_parts(mesh: &Mesh, gamma: f64, gap: impl Fn(&QuadPoint) -> f64) -> PenaltyParts {
    let nt = mesh.num_triangles();
    let mut out = PenaltyParts {
        mean: Vec::with_capacity(nt),
        projection: Vec::with_capacity(nt),
        cross: Vec::with_capacity(nt),
    };
    for t in 0..nt {
        let pts: Vec<(f64, f64)> = PLUS_RULE.points(mesh, t).map(|q| (q.weight, gap(&q))).collect();
        let mean = pts.iter().map(|(w, g)| w * g.max(0.0)).sum::<f64>() / mesh.area(t);
        out.mean.push(mean);
        out.projection
            .push(0.5 * gamma * pts.iter().map(|(w, g)| w * (g.max(0.0) - mean).powi(2)).sum::<f64>());
        out.cross
            .push(gamma * mean * pts.iter().map(|(w, g)| w * (-g).max(0.0)).sum::<f64>());
    }
    out
}

/// Estimator of the obstacle problem. With `exact` data (obstacle and load
/// as functions of position) the oscillation bounds are attached.
pub fn estimate_obstacle(state: &ObstacleState, exact: Option<(&dyn Fn([f64; 2]) -> f64, &dyn Fn([f64; 2]) -> f64)>) -> Result<Estimate> {
    let mesh = &*state.mesh;
    let gamma = state.gamma;
    let parts = penalty_parts(mesh, gamma, |q| state.gap_at(q));
    let rhs = P0Field {
        values: (0..mesh.num_triangles())
            .map(|t| state.f.values[t] + gamma * parts.mean[t])
            .collect(),
    };
    let dual = reconstruct_dual(mesh, &rhs, FluxBoundary::Open)?;
    let grad = flux_gap(mesh, &state.y, &dual.flux);
    let dgamma = parts.projection.iter().sum::<f64>() / gamma;
    let mut est = Estimate::from_terms(
        vec![("grad", grad), ("projection", parts.projection), ("cross", parts.cross)],
        dgamma,
        dual.divergence_defect,
        vec![dual.flux],
    );
    if let Some((psi, f)) = exact {
        let osc = oscillation_bounds(state, &est.fluxes[0], psi, f);
        est.oscillation = vec![("primal", osc.primal()), ("dual", osc.dual())];
    }
    Ok(est)
}

/// Oscillation bounds of the obstacle estimator, split by source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Oscillation {
    /// `||f - f_T|| ||y_T||`
    pub primal_load: f64,
    /// `gamma ||(psi - y_T)^+|| ||psi - psi_T||`
    pub primal_obstacle: f64,
    /// `(||f - f_T|| + ||p_T||) ||f - f_T||`
    pub dual_load: f64,
    /// `||z_T|| ||psi - psi_T||`
    pub dual_obstacle: f64,
}

impl Oscillation {
    pub fn primal(&self) -> f64 {
        self.primal_load + self.primal_obstacle
    }

    pub fn dual(&self) -> f64 {
        self.dual_load + self.dual_obstacle
    }
}

/// Bounds on the estimator perturbation caused by replacing the exact
/// obstacle `psi` and load `f` with their discrete versions.
pub fn oscillation_bounds(
    state: &ObstacleState,
    flux: &RT0Field,
    psi: &dyn Fn([f64; 2]) -> f64,
    f: &dyn Fn([f64; 2]) -> f64,
) -> Oscillation {
    let mesh = &*state.mesh;
    let rule = Quadrature::Order4;
    let l2 = |g: &dyn Fn(&QuadPoint) -> f64| integrate(mesh, rule, |q| g(q).powi(2)).sqrt();
    let load = l2(&|q| f(q.x) - state.f.values[q.triangle]);
    let obstacle = l2(&|q| psi(q.x) - state.psi.eval(mesh, q.triangle, q.bary));
    let y = state.y.l2_norm(mesh);
    let violation = l2(&|q| (psi(q.x) - state.y.eval(mesh, q.triangle, q.bary)).max(0.0));
    let parts = penalty_parts(mesh, state.gamma, |q| state.gap_at(q));
    let z = (0..mesh.num_triangles())
        .map(|t| (state.gamma * parts.mean[t]).powi(2) * mesh.area(t))
        .sum::<f64>()
        .sqrt();
    Oscillation {
        primal_load: load * y,
        primal_obstacle: state.gamma * violation * obstacle,
        dual_load: (load + flux.l2_norm(mesh)) * load,
        dual_obstacle: z * obstacle,
    }
}

/// Estimator of the thermoforming system.
pub fn estimate_thermoforming(state: &ThermoformingState) -> Result<Estimate> {
    let mesh = &*state.mesh;
    let gamma = state.gamma;
    let k = state.data.k;
    let parts = penalty_parts(mesh, gamma, |q| state.gap_at(q));
    let nt = mesh.num_triangles();
    let rhs_p = P0Field {
        values: (0..nt).map(|t| state.data.f - gamma * parts.mean[t]).collect(),
    };
    let heat_mean = crate::fem::project_p0_with(mesh, PLUS_RULE, |q| {
        state.data.heat.value(-state.gap_at(q))
    });
    let temp_mean = crate::fem::project_p0(mesh, &state.temp);
    let rhs_q = P0Field {
        values: (0..nt).map(|t| heat_mean.values[t] - k * temp_mean.values[t]).collect(),
    };
    let p = reconstruct_dual(mesh, &rhs_p, FluxBoundary::Open)?;
    let q = reconstruct_dual(mesh, &rhs_q, FluxBoundary::NoFlux)?;
    let temp_projection: Vec<f64> = (0..nt)
        .map(|t| {
            let local = state.temp.local(mesh, t);
            let d = local.map(|v| v - temp_mean.values[t]);
            let m = crate::assembly::local_mass(mesh, t);
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += d[i] * m[i][j] * d[j];
                }
            }
            0.5 * k * s.max(0.0)
        })
        .collect();
    let dgamma = parts.projection.iter().sum::<f64>() / gamma;
    Ok(Estimate::from_terms(
        vec![
            ("grad_u", flux_gap(mesh, &state.u, &p.flux)),
            ("grad_temp", flux_gap(mesh, &state.temp, &q.flux)),
            ("temp_projection", temp_projection),
            ("projection", parts.projection),
            ("cross", parts.cross),
        ],
        dgamma,
        p.divergence_defect.max(q.divergence_defect),
        vec![p.flux, q.flux],
    ))
}

/// Estimator of the two-membrane system.
pub fn estimate_membrane(state: &MembraneState) -> Result<Estimate> {
    let mesh = &*state.mesh;
    let gamma = state.gamma;
    let nt = mesh.num_triangles();
    // gap -delta: its positive part is the (halved) interpenetration
    let parts = penalty_parts(mesh, gamma, |q| -state.delta_at(q));
    let delta_mean = crate::fem::project_p0(mesh, &state.delta);
    let forces = &state.forces;
    let rhs_m = P0Field {
        values: (0..nt)
            .map(|t| forces.half_sum.values[t] - forces.alpha * delta_mean.values[t])
            .collect(),
    };
    let rhs_d = P0Field {
        values: (0..nt)
            .map(|t| {
                forces.half_diff.values[t] + forces.alpha * delta_mean.values[t]
                    + gamma * parts.mean[t]
                    - state.mu
            })
            .collect(),
    };
    let pm = reconstruct_dual(mesh, &rhs_m, FluxBoundary::Open)?;
    let pd = reconstruct_dual(mesh, &rhs_d, FluxBoundary::Open)?;
    let dgamma = parts.projection.iter().sum::<f64>() / gamma;
    Ok(Estimate::from_terms(
        vec![
            ("grad_m", flux_gap(mesh, &state.m, &pm.flux)),
            ("grad_delta", flux_gap(mesh, &state.delta, &pd.flux)),
            ("projection", parts.projection),
            ("cross", parts.cross),
        ],
        dgamma,
        pm.divergence_defect.max(pd.divergence_defect),
        vec![pm.flux, pd.flux],
    ))
}

/// Two-variable model `f(x) + gamma pi(x) + rho(x) / gamma` with quadratic
/// `f`, `pi`, `rho`, whose minimizer is available in closed form. Used to
/// check the derivative formula `v'(gamma) = pi(x_gamma) - rho(x_gamma) / gamma^2`
/// of the optimal value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticModel {
    /// `f(x) = 1/2 x^T a x - b^T x`
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    /// `pi(x) = 1/2 x^T p x - pl^T x`
    pub p: [[f64; 2]; 2],
    pub pl: [f64; 2],
    /// `rho(x) = 1/2 x^T r x - rl^T x`
    pub r: [[f64; 2]; 2],
    pub rl: [f64; 2],
}

fn quad(m: &[[f64; 2]; 2], l: &[f64; 2], x: [f64; 2]) -> f64 {
    0.5 * (x[0] * (m[0][0] * x[0] + m[0][1] * x[1]) + x[1] * (m[1][0] * x[0] + m[1][1] * x[1]))
        - l[0] * x[0]
        - l[1] * x[1]
}

impl QuadraticModel {
    pub fn minimizer(&self, gamma: f64) -> [f64; 2] {
        let h = |i: usize, j: usize| self.a[i][j] + gamma * self.p[i][j] + self.r[i][j] / gamma;
        let g = |i: usize| self.b[i] + gamma * self.pl[i] + self.rl[i] / gamma;
        let det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
        [
            (h(1, 1) * g(0) - h(0, 1) * g(1)) / det,
            (h(0, 0) * g(1) - h(1, 0) * g(0)) / det,
        ]
    }

    pub fn value(&self, gamma: f64) -> f64 {
        let x = self.minimizer(gamma);
        quad(&self.a, &self.b, x) + gamma * quad(&self.p, &self.pl, x) + quad(&self.r, &self.rl, x) / gamma
    }

    pub fn derivative(&self, gamma: f64) -> f64 {
        let x = self.minimizer(gamma);
        quad(&self.p, &self.pl, x) - quad(&self.r, &self.rl, x) / (gamma * gamma)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mesh::{create_domain, refine_uniform, DomainKind, DomainSpec};
    use crate::problems::{HeatSource, MembraneData, ObstacleData, ScalarField, ThermoformingData};
    use crate::solvers::{solve_membrane, solve_obstacle, solve_thermoforming, NewtonOptions};

    fn square(cells: usize, refs: usize) -> Arc<Mesh> {
        Arc::new(create_domain(&DomainSpec::new(DomainKind::UnitSquare, refs).with_cells(cells)).unwrap())
    }

    fn assert_consistent(e: &Estimate) {
        for (name, v) in &e.terms {
            assert!(*v >= 0.0, "term {name} = {v}");
        }
        assert!(e.per_element.iter().all(|v| *v >= 0.0));
        let sum: f64 = e.per_element.iter().sum();
        assert!((sum - e.total).abs() <= 1e-10 * e.total.max(1.0));
        assert!(e.divergence_defect <= 1e-10);
    }

    fn obstacle_state(mesh: Arc<Mesh>, data: &ObstacleData, gamma: f64) -> ObstacleState {
        let psi = data.psi.interpolate(&mesh, false);
        let f = data.f.project(&mesh);
        solve_obstacle(mesh, psi, f, gamma, &NewtonOptions::default(), None).unwrap()
    }

    #[test]
    fn obstacle_exact_zero() {
        let data = ObstacleData {
            psi: ScalarField::Constant(-1.0),
            f: ScalarField::Constant(0.0),
        };
        let s = obstacle_state(square(2, 2), &data, 100.0);
        let e = estimate_obstacle(&s, None).unwrap();
        assert_eq!(e.total, 0.0);
        assert!(e.fluxes[0].values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn obstacle_error_bound() {
        let data = ObstacleData::default();
        let coarse = square(2, 2);
        let s = obstacle_state(coarse.clone(), &data, 1e3);
        let e = estimate_obstacle(&s, None).unwrap();
        assert_consistent(&e);
        // same-gamma reference on a finer nested mesh with the coarse data
        let mut fine = (*coarse).clone();
        let mut f = s.f.clone();
        for _ in 0..3 {
            fine = refine_uniform(&fine);
            f = f.prolongate(&fine);
        }
        let fine = Arc::new(fine);
        let reference = solve_obstacle(
            fine.clone(),
            s.psi.prolongate(&fine),
            f,
            s.gamma,
            &NewtonOptions::default(),
            None,
        )
        .unwrap();
        let diff = S1Field {
            values: s
                .y
                .prolongate(&fine)
                .values
                .iter()
                .zip(&reference.y.values)
                .map(|(a, b)| a - b)
                .collect(),
            homogeneous_dirichlet: true,
        };
        let err = 0.5
            * (0..fine.num_triangles())
                .map(|t| {
                    let g = diff.gradient(&fine, t);
                    fine.area(t) * (g[0] * g[0] + g[1] * g[1])
                })
                .sum::<f64>();
        assert!(err <= e.total, "{err} > {}", e.total);
    }

    #[test]
    fn oscillation_vanishes_for_discrete_data_and_scales_linearly() {
        let data = ObstacleData {
            psi: ScalarField::Constant(-0.2),
            f: ScalarField::Constant(-10.0),
        };
        let s = obstacle_state(square(2, 2), &data, 1e3);
        let e = estimate_obstacle(&s, None).unwrap();
        let flux = &e.fluxes[0];
        let exact = oscillation_bounds(&s, flux, &|_| -0.2, &|_| -10.0);
        assert!(exact.primal() <= 1e-13 && exact.dual() <= 1e-13);
        // the obstacle-side dual term and the load-side primal term are
        // linear in the size of a data perturbation
        let linear = |a: f64, b: f64| a > 0.0 && (b - 2.0 * a).abs() <= 1e-9 * b;
        let o1 = oscillation_bounds(&s, flux, &|_| -0.2 + 1e-3, &|_| -10.0);
        let o2 = oscillation_bounds(&s, flux, &|_| -0.2 + 2e-3, &|_| -10.0);
        assert!(linear(o1.dual_obstacle, o2.dual_obstacle));
        let o1 = oscillation_bounds(&s, flux, &|_| -0.2, &|x| -10.0 + 1e-3 * x[0]);
        let o2 = oscillation_bounds(&s, flux, &|_| -0.2, &|x| -10.0 + 2e-3 * x[0]);
        assert!(linear(o1.primal_load, o2.primal_load));
    }

    #[test]
    fn oscillation_obstacle_part_grows_with_gamma() {
        let data = ObstacleData::default();
        let psi = |x: [f64; 2]| data.psi.eval(x);
        let f = |x: [f64; 2]| data.f.eval(x);
        let mesh = square(2, 2);
        let share = |gamma: f64| {
            let s = obstacle_state(mesh.clone(), &data, gamma);
            let e = estimate_obstacle(&s, Some((&psi, &f))).unwrap();
            let o = oscillation_bounds(&s, &e.fluxes[0], &psi, &f);
            assert!(o.primal_obstacle > 0.0);
            o.primal_obstacle
        };
        assert!(share(1e4) > share(1e2));
    }

    #[test]
    fn thermoforming_terms() {
        let zero = ThermoformingData {
            f: 0.0,
            heat: HeatSource::Constant(0.0),
            ..ThermoformingData::default()
        };
        let opts = NewtonOptions::default();
        let s = solve_thermoforming(square(4, 1), &zero, 100.0, &opts, None).unwrap();
        assert_eq!(estimate_thermoforming(&s).unwrap().total, 0.0);

        let data = ThermoformingData::default();
        let mesh = square(4, 1);
        let coarse = solve_thermoforming(mesh.clone(), &data, 1e3, &opts, None).unwrap();
        let ec = estimate_thermoforming(&coarse).unwrap();
        assert_consistent(&ec);
        assert_eq!(ec.terms.len(), 5);
        let fine = Arc::new(refine_uniform(&mesh));
        let s = solve_thermoforming(fine, &data, 1e3, &opts, None).unwrap();
        let ef = estimate_thermoforming(&s).unwrap();
        assert_consistent(&ef);
        assert!(ef.total <= 1.05 * ec.total, "{} vs {}", ef.total, ec.total);
    }

    #[test]
    fn membrane_terms() {
        let opts = NewtonOptions::default();
        let mesh = Arc::new(create_domain(&DomainSpec::new(DomainKind::LShape, 2)).unwrap());
        let free = MembraneData {
            alpha: 0.0,
            f_const_1: ScalarField::Constant(0.0),
            f_const_2: ScalarField::Constant(0.0),
        };
        let s = solve_membrane(mesh.clone(), &free, 1e3, &opts, None).unwrap();
        let e = estimate_membrane(&s).unwrap();
        assert_consistent(&e);
        assert_eq!(e.term("projection"), Some(0.0));
        assert_eq!(e.term("cross"), Some(0.0));
        assert_eq!(e.term("grad_m"), Some(0.0));
        assert!((e.total - e.term("grad_delta").unwrap()).abs() <= 1e-15 * e.total.max(1.0));

        let spec = crate::problems::ProblemSpec::membrane_slit(1);
        let mesh = Arc::new(create_domain(&spec.domain).unwrap());
        let crate::problems::Variant::Membrane(data) = &spec.variant else { unreachable!() };
        let s = solve_membrane(mesh, data, 1e3, &opts, None).unwrap();
        let e = estimate_membrane(&s).unwrap();
        assert_consistent(&e);
        assert!(e.term("projection").unwrap() > 0.0);
    }

    #[test]
    fn derivative_model_matches_difference_quotient() {
        let model = QuadraticModel {
            a: [[3.0, 1.0], [1.0, 2.0]],
            b: [1.0, -2.0],
            p: [[1.0, 0.0], [0.0, 0.5]],
            pl: [0.3, 0.1],
            r: [[0.5, 0.2], [0.2, 1.0]],
            rl: [-1.0, 0.5],
        };
        for gamma in [1.0, 10.0, 100.0] {
            let h = 1e-4 * gamma;
            let fd = (model.value(gamma + h) - model.value(gamma - h)) / (2.0 * h);
            assert!((model.derivative(gamma) - fd).abs() < 1e-6);
        }
    }
}

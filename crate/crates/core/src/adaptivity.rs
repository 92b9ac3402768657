//! Dörfler marking, the penalty-parameter update and the joint
//! mesh/penalty adaptive loop.

use std::fmt;
use std::sync::Arc;

use log::{debug, info};

use crate::error::{Error, Result};
use crate::estimators::{estimate_membrane, estimate_obstacle, estimate_thermoforming, Estimate};
use crate::fem::S1Field;
use crate::mesh::{create_domain, refine, refine_uniform, Mesh};
use crate::problems::{ProblemSpec, Variant};
use crate::solvers::{
    solve_membrane, solve_obstacle, solve_thermoforming, MembraneState, NewtonOptions,
    ObstacleState, ThermoformingState,
};

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveConfig {
    pub gamma0: f64,
    pub c_gamma: f64,
    /// Required estimator reduction before the penalty is raised.
    pub c_eta: f64,
    /// Dörfler bulk fraction.
    pub theta: f64,
    pub gamma_min_update: f64,
    pub gamma_max: f64,
    pub nrdof_max: usize,
    pub newton: NewtonOptions,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            gamma0: 100.0,
            c_gamma: 0.25,
            c_eta: 0.5,
            theta: 0.1,
            gamma_min_update: 10.0,
            gamma_max: 1e12,
            nrdof_max: 50_000,
            newton: NewtonOptions::default(),
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("gamma0", self.gamma0 > 0.0),
            ("c_gamma", self.c_gamma > 0.0),
            ("c_eta", self.c_eta > 0.0 && self.c_eta < 1.0),
            ("theta", self.theta > 0.0 && self.theta < 1.0),
            ("gamma_min_update", self.gamma_min_update > 0.0),
            ("gamma_max", self.gamma_max > 0.0),
            ("tol_newton", self.newton.tol > 0.0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::InvalidParameter(format!("{name} out of range"))),
            None => Ok(()),
        }
    }
}

/// Smallest greedy set of elements carrying a `theta` fraction of the total
/// indicator mass. Elements are taken by decreasing indicator, ties by lower
/// id; the result is returned in that order.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = indicators.iter().sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let goal = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        marked.push(t);
        acc += indicators[t];
        if acc >= goal {
            break;
        }
    }
    marked
}

/// Next penalty parameter: a linearized step keeping the estimator growth
/// near `1 + c_gamma`, safeguarded from below; a geometric step when the
/// derivative proxy is not positive.
pub fn gamma_update(gamma: f64, eta_sq: f64, dgamma: f64, config: &AdaptiveConfig) -> f64 {
    if dgamma > 0.0 {
        gamma + config.gamma_min_update.max(config.c_gamma * eta_sq / dgamma)
    } else {
        (1.0 + config.c_gamma) * gamma
    }
}

/// Number of degrees of freedom used for convergence plots.
pub fn nrdof(variant: &Variant, mesh: &Mesh) -> usize {
    let interior = mesh.num_interior_vertices();
    match variant {
        Variant::Obstacle(_) => interior,
        Variant::Thermoforming(_) => interior + mesh.num_vertices(),
        Variant::Membrane(_) => 2 * interior,
    }
}

/// Discrete solution of any of the supported problems.
#[derive(Clone, Debug)]
pub enum SolverState {
    Obstacle(ObstacleState),
    Thermoforming(ThermoformingState),
    Membrane(MembraneState),
}

impl SolverState {
    /// Solves `spec` on `mesh`. A `warm` state on the same mesh or on its
    /// parent (one refinement step coarser) seeds Newton.
    pub fn solve(
        spec: &ProblemSpec,
        mesh: Arc<Mesh>,
        gamma: f64,
        opts: &NewtonOptions,
        warm: Option<&SolverState>,
    ) -> Result<Self> {
        let lift = |f: &S1Field| {
            if f.values.len() == mesh.num_vertices() {
                f.clone()
            } else {
                f.prolongate(&mesh)
            }
        };
        Ok(match (&spec.variant, warm) {
            (Variant::Obstacle(d), w) => {
                let y = match w {
                    Some(SolverState::Obstacle(s)) => Some(lift(&s.y)),
                    _ => None,
                };
                let psi = d.psi.interpolate(&mesh, false);
                let f = d.f.project(&mesh);
                SolverState::Obstacle(solve_obstacle(mesh.clone(), psi, f, gamma, opts, y.as_ref())?)
            }
            (Variant::Thermoforming(d), w) => {
                let ut = match w {
                    Some(SolverState::Thermoforming(s)) => Some((lift(&s.u), lift(&s.temp))),
                    _ => None,
                };
                let warm = ut.as_ref().map(|(u, t)| (u, t));
                SolverState::Thermoforming(solve_thermoforming(mesh.clone(), d, gamma, opts, warm)?)
            }
            (Variant::Membrane(d), w) => {
                let dm = match w {
                    Some(SolverState::Membrane(s)) => Some((lift(&s.delta), s.mu)),
                    _ => None,
                };
                let warm = dm.as_ref().map(|(d, mu)| (d, *mu));
                SolverState::Membrane(solve_membrane(mesh.clone(), d, gamma, opts, warm)?)
            }
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        match self {
            SolverState::Obstacle(s) => &s.mesh,
            SolverState::Thermoforming(s) => &s.mesh,
            SolverState::Membrane(s) => &s.mesh,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            SolverState::Obstacle(s) => s.gamma,
            SolverState::Thermoforming(s) => s.gamma,
            SolverState::Membrane(s) => s.gamma,
        }
    }

    pub fn newton_iterations(&self) -> usize {
        match self {
            SolverState::Obstacle(s) => s.newton_iterations,
            SolverState::Thermoforming(s) => s.newton_iterations,
            SolverState::Membrane(s) => s.newton_iterations,
        }
    }

    /// L2 norm of the constraint violation.
    pub fn violation(&self) -> f64 {
        match self {
            SolverState::Obstacle(s) => s.violation(),
            SolverState::Thermoforming(s) => s.violation(),
            SolverState::Membrane(s) => s.violation(),
        }
    }

    /// Error estimator; for the obstacle problem the data oscillation with
    /// respect to `spec` is attached.
    pub fn estimate(&self, spec: &ProblemSpec) -> Result<Estimate> {
        match self {
            SolverState::Obstacle(s) => match &spec.variant {
                Variant::Obstacle(d) => {
                    let psi = |x: [f64; 2]| d.psi.eval(x);
                    let f = |x: [f64; 2]| d.f.eval(x);
                    estimate_obstacle(s, Some((&psi, &f)))
                }
                _ => estimate_obstacle(s, None),
            },
            SolverState::Thermoforming(s) => estimate_thermoforming(s),
            SolverState::Membrane(s) => estimate_membrane(s),
        }
    }

    /// Named P1 fields for output.
    pub fn point_fields(&self) -> Vec<(&'static str, S1Field)> {
        match self {
            SolverState::Obstacle(s) => vec![("y", s.y.clone()), ("psi", s.psi.clone())],
            SolverState::Thermoforming(s) => vec![
                ("u", s.u.clone()),
                ("temperature", s.temp.clone()),
                ("mould", s.mould()),
            ],
            SolverState::Membrane(s) => vec![
                ("u1", s.u1()),
                ("u2", s.u2()),
                ("mean", s.m.clone()),
                ("half_difference", s.delta.clone()),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Refine,
    GammaUpdate,
    Stop,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Refine => "refine",
            Action::GammaUpdate => "gamma_update",
            Action::Stop => "stop",
        }
    }
}

/// One solve/estimate step of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    /// Penalty-parameter index.
    pub n: usize,
    /// Mesh index within the current penalty parameter.
    pub ell: usize,
    pub gamma: f64,
    pub nrdof: usize,
    pub eta_sq: f64,
    pub terms: Vec<(&'static str, f64)>,
    pub dgamma: f64,
    pub newton_iterations: usize,
    pub action: Action,
    pub min_indicator: f64,
    pub divergence_defect: f64,
    pub violation: f64,
}

impl Record {
    fn new(n: usize, ell: usize, variant: &Variant, state: &SolverState, est: &Estimate, action: Action) -> Self {
        Self {
            n,
            ell,
            gamma: state.gamma(),
            nrdof: nrdof(variant, state.mesh()),
            eta_sq: est.total,
            terms: est.terms.clone(),
            dgamma: est.dgamma,
            newton_iterations: state.newton_iterations(),
            action,
            min_indicator: est.min_indicator(),
            divergence_defect: est.divergence_defect,
            violation: state.violation(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<Record>,
}

impl RunLog {
    pub fn term_names(&self) -> Vec<&'static str> {
        self.records
            .first()
            .map(|r| r.terms.iter().map(|(n, _)| *n).collect())
            .unwrap_or_default()
    }

    /// Records grouped by penalty-parameter index, in order.
    pub fn segments(&self) -> Vec<&[Record]> {
        self.records.chunk_by(|a, b| a.n == b.n).collect()
    }
}

/// Least-squares rate of `eta ~ nrdof^(-rate)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub points: usize,
    /// Fewer than three usable points, or no spread in `nrdof`; `rate` is
    /// then zero.
    pub degenerate: bool,
}

pub fn fit_rate(records: &[Record]) -> RateFit {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.eta_sq > 0.0 && r.nrdof > 0)
        .map(|r| ((r.nrdof as f64).ln(), 0.5 * r.eta_sq.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if pts.len() < 3 || !(sxx > 1e-12) {
        return RateFit {
            rate: 0.0,
            points: pts.len(),
            degenerate: true,
        };
    }
    RateFit {
        rate: -sxy / sxx,
        points: pts.len(),
        degenerate: false,
    }
}

/// Rate over the final penalty segment.
pub fn final_segment_rate(log: &RunLog) -> RateFit {
    fit_rate(log.segments().last().copied().unwrap_or(&[]))
}

/// A run that ended with an error, keeping the records produced so far.
#[derive(Debug)]
pub struct RunFailure {
    pub log: RunLog,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} records)", self.error, self.log.records.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub log: RunLog,
    pub last: SolverState,
}

/// The joint loop: refine by Dörfler marking until the estimator has dropped
/// by `c_eta` relative to its value at the last penalty update, then raise
/// the penalty and continue on the current mesh. Stops once the penalty or
/// the number of unknowns reaches its cap; the stopping state is estimated
/// and recorded as well.
pub fn run_adaptive(spec: &ProblemSpec, config: &AdaptiveConfig) -> std::result::Result<RunOutcome, RunFailure> {
    let mut log = RunLog::default();
    let fail = |log: RunLog, error: Error| RunFailure { log, error };
    if let Err(e) = config.validate() {
        return Err(fail(log, e));
    }
    let mesh = match create_domain(&spec.domain).and_then(|m| spec.validate(&m).map(|_| m)) {
        Ok(m) => Arc::new(m),
        Err(e) => return Err(fail(log, e)),
    };
    let mut mesh = mesh;
    let mut gamma = config.gamma0;
    let (mut n, mut ell) = (0, 0);
    let mut eta_ref: Option<f64> = None;
    let mut warm: Option<SolverState> = None;
    loop {
        let step = SolverState::solve(spec, mesh.clone(), gamma, &config.newton, warm.as_ref())
            .and_then(|s| s.estimate(spec).map(|e| (s, e)));
        let (state, est) = match step {
            Ok(x) => x,
            Err(e) => return Err(fail(log, e)),
        };
        let dofs = nrdof(&spec.variant, &mesh);
        let eta = est.eta();
        if gamma >= config.gamma_max || dofs >= config.nrdof_max {
            log.records.push(Record::new(n, ell, &spec.variant, &state, &est, Action::Stop));
            info!("stop: gamma {gamma:.4e}, nrdof {dofs}, eta {eta:.4e}");
            return Ok(RunOutcome { log, last: state });
        }
        let reference = *eta_ref.get_or_insert(eta);
        if eta <= config.c_eta * reference {
            log.records.push(Record::new(n, ell, &spec.variant, &state, &est, Action::GammaUpdate));
            eta_ref = Some(eta);
            let next = gamma_update(gamma, est.total, est.dgamma, config);
            info!("gamma {gamma:.4e} -> {next:.4e} at nrdof {dofs}, eta {eta:.4e}");
            gamma = next;
            n += 1;
            ell = 0;
        } else {
            let marked = doerfler_mark(&est.per_element, config.theta);
            if marked.is_empty() {
                let e = Error::InvalidParameter("estimator vanishes but no reduction was recorded".into());
                return Err(fail(log, e));
            }
            log.records.push(Record::new(n, ell, &spec.variant, &state, &est, Action::Refine));
            debug!("refine {} of {} triangles, nrdof {dofs}, eta {eta:.4e}", marked.len(), mesh.num_triangles());
            mesh = Arc::new(refine(&mesh, &marked));
            ell += 1;
        }
        warm = Some(state);
    }
}

/// Uniform baseline: for each penalty in `gammas` (segment `n`), solve on
/// the uniform refinements of the initial mesh while the number of unknowns
/// stays at most `nrdof_max`.
pub fn run_uniform(
    spec: &ProblemSpec,
    gammas: &[f64],
    nrdof_max: usize,
    opts: &NewtonOptions,
) -> std::result::Result<RunOutcome, RunFailure> {
    let mut log = RunLog::default();
    let fail = |log: RunLog, error: Error| RunFailure { log, error };
    let mesh = match create_domain(&spec.domain).and_then(|m| spec.validate(&m).map(|_| m)) {
        Ok(m) => Arc::new(m),
        Err(e) => return Err(fail(log, e)),
    };
    let mut meshes = vec![mesh];
    loop {
        let next = refine_uniform(meshes.last().unwrap());
        if nrdof(&spec.variant, &next) > nrdof_max {
            break;
        }
        meshes.push(Arc::new(next));
    }
    let mut last = None;
    for (n, &gamma) in gammas.iter().enumerate() {
        let mut warm: Option<SolverState> = None;
        for (ell, mesh) in meshes.iter().enumerate() {
            let step = SolverState::solve(spec, mesh.clone(), gamma, opts, warm.as_ref())
                .and_then(|s| s.estimate(spec).map(|e| (s, e)));
            let (state, est) = match step {
                Ok(x) => x,
                Err(e) => return Err(fail(log, e)),
            };
            let action = match (ell + 1 == meshes.len(), n + 1 == gammas.len()) {
                (false, _) => Action::Refine,
                (true, false) => Action::GammaUpdate,
                (true, true) => Action::Stop,
            };
            log.records.push(Record::new(n, ell, &spec.variant, &state, &est, action));
            debug!("uniform gamma {gamma:.3e} level {ell}: eta^2 {:.4e}", est.total);
            warm = Some(state);
        }
        last = warm;
    }
    match last {
        Some(last) => Ok(RunOutcome { log, last }),
        None => Err(fail(log, Error::InvalidParameter("empty penalty ladder".into()))),
    }
}

/// Geometric ladder `start, start*ratio, ...` with `count` entries.
pub fn gamma_ladder(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}

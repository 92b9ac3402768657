//! Damped semismooth Newton iteration.

use log::debug;

use crate::error::{Error, Result};
use crate::sparse::norm2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Relative tolerance: stop once `||F|| <= tol * scale(F)`.
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 50,
            max_halvings: 4,
        }
    }
}

/// A residual together with the magnitude it is measured against (the sum
/// of the norms of its constituent parts, at least one).
#[derive(Clone, Debug)]
pub struct Residual {
    pub values: Vec<f64>,
    pub scale: f64,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn relative(&self) -> f64 {
        self.norm() / self.scale
    }
}

pub trait NewtonSystem {
    fn residual(&self, x: &[f64]) -> Result<Residual>;
    /// Newton direction `d` with `J(x) d = -F(x)` for a generalized
    /// Jacobian `J`.
    fn direction(&self, x: &[f64], residual: &Residual) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Runs Newton from `x0`. Steps are halved until the residual norm
/// decreases; if no trial decreases it, the full step is taken. Very short
/// steps mostly stall at large penalties, where the active set has to move
/// by whole elements, so few halvings are tried.
pub fn solve<S: NewtonSystem>(system: &S, x0: Vec<f64>, opts: &NewtonOptions) -> Result<NewtonResult> {
    let mut x = x0;
    let mut res = system.residual(&x)?;
    for iteration in 0..=opts.max_iterations {
        let rel = res.relative();
        debug!("newton {iteration}: |F| = {:.3e} (relative {rel:.3e})", res.norm());
        if rel <= opts.tol {
            return Ok(NewtonResult {
                x,
                iterations: iteration,
                residual: res.norm(),
            });
        }
        if iteration == opts.max_iterations {
            break;
        }
        let d = system.direction(&x, &res)?;
        let current = res.norm();
        let mut step = 1.0;
        let mut accepted = None;
        let mut full = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let trial_res = system.residual(&trial)?;
            let decreased = trial_res.norm() < current;
            if full.is_none() {
                full = Some((trial.clone(), trial_res.clone()));
            }
            if decreased {
                accepted = Some((trial, trial_res));
                break;
            }
            step *= 0.5;
        }
        let (nx, nres) = accepted.or(full).expect("at least one trial step");
        x = nx;
        res = nres;
    }
    Err(Error::NewtonFailed {
        iterations: opts.max_iterations,
        residual: res.relative(),
    })
}

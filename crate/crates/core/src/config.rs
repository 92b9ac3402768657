//! Experiment configuration: flat `key = value` text with `[section]`
//! headers.
//!
//! ```text
//! # general settings, optionally under [run]
//! problem = membrane          # obstacle | thermoforming | membrane
//! mode = both                 # adaptive | uniform | both
//! domain = slit
//! gamma0 = 100
//! c_gamma = 0.1
//!
//! [membrane]
//! alpha = 2
//! f_const_1 = 1000
//! f_const_2 = -1000
//! ```
//!
//! Unknown keys, repeated keys and keys of a section that does not match
//! the chosen problem are rejected with the offending line number.

use std::collections::BTreeMap;
use std::path::Path;

use crate::adaptivity::{gamma_ladder, AdaptiveConfig};
use crate::error::{Error, Result};
use crate::mesh::{DomainKind, DomainSpec};
use crate::problems::{
    l_shape_support, slit_support, HeatSource, MembraneData, ObstacleData, ProblemSpec, Region,
    ScalarField, ThermoformingData, Variant,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Adaptive,
    Uniform,
    Both,
}

impl Mode {
    pub fn adaptive(self) -> bool {
        matches!(self, Mode::Adaptive | Mode::Both)
    }

    pub fn uniform(self) -> bool {
        matches!(self, Mode::Uniform | Mode::Both)
    }
}

/// Uniform-refinement baseline: every penalty of the ladder is solved on
/// the uniform refinements of the coarse mesh refined `initial_refinements`
/// times.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformConfig {
    pub gammas: Vec<f64>,
    pub initial_refinements: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub mode: Mode,
    pub adaptive: AdaptiveConfig,
    pub uniform: UniformConfig,
    pub write_vtk: bool,
}

impl ExperimentConfig {
    /// Problem used by the uniform baseline.
    pub fn uniform_problem(&self) -> ProblemSpec {
        let mut p = self.problem.clone();
        p.domain.initial_refinements = self.uniform.initial_refinements;
        p
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Parsed entries keyed by `(section, key)`.
struct Entries {
    map: BTreeMap<(String, String), Entry>,
    last_line: usize,
}

const SECTIONS: [&str; 4] = ["run", "obstacle", "thermoforming", "membrane"];

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section = "run".to_string();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_error(line, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(config_error(line, format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_error(line, format!("expected key = value, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(config_error(line, "empty key"));
            }
            let entry = Entry {
                value: value.to_string(),
                line,
                used: false,
            };
            if let Some(prev) = map.insert((section.clone(), key.to_string()), entry) {
                return Err(config_error(line, format!("duplicate key `{key}` (first on line {})", prev.line)));
            }
        }
        Ok(Self { map, last_line })
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.map.get_mut(&(section.to_string(), key.to_string())).map(|e| {
            e.used = true;
            (e.value.as_str(), e.line)
        })
    }

    fn get<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| config_error(line, format!("invalid value `{v}` for `{key}`"))),
        }
    }

    fn get_or<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.map
            .get(&(section.to_string(), key.to_string()))
            .map_or(self.last_line, |e| e.line)
    }

    fn reject_unused(&self) -> Result<()> {
        match self.map.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line) {
            Some(((section, key), e)) => Err(config_error(e.line, format!("unknown key `{key}` in [{section}]"))),
            None => Ok(()),
        }
    }
}

fn config_error(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut e = Entries::parse(text)?;
    let problem_name: String = e
        .get("run", "problem")?
        .ok_or_else(|| config_error(e.last_line, "missing key `problem`"))?;
    let problem_line = e.line_of("run", "problem");

    let domain_name: Option<String> = e.get("run", "domain")?;
    let kind = match &domain_name {
        None => None,
        Some(d) => Some(
            DomainKind::parse(d)
                .ok_or_else(|| config_error(e.line_of("run", "domain"), format!("unknown domain `{d}`")))?,
        ),
    };

    let mut problem = match problem_name.as_str() {
        "obstacle" => ProblemSpec::obstacle(0),
        "thermoforming" => ProblemSpec::thermoforming(0),
        "membrane" => match kind {
            Some(DomainKind::Slit) => ProblemSpec::membrane_slit(0),
            _ => ProblemSpec::membrane_l_shape(0),
        },
        other => return Err(config_error(problem_line, format!("unknown problem `{other}`"))),
    };
    if let Some(kind) = kind {
        if kind != problem.domain.kind {
            problem.domain = DomainSpec::new(kind, 0);
        }
    }
    problem.domain.initial_refinements = e.get_or("run", "initial_refinements", 0)?;
    problem.domain.cells_per_side = e.get_or("run", "cells_per_side", problem.domain.cells_per_side)?;

    for s in ["obstacle", "thermoforming", "membrane"] {
        if s != problem_name {
            if let Some(((_, key), entry)) = e.map.iter().find(|((sec, _), _)| sec == s) {
                return Err(config_error(
                    entry.line,
                    format!("key `{key}` belongs to [{s}] but the problem is `{problem_name}`"),
                ));
            }
        }
    }
    problem.variant = match problem.variant {
        Variant::Obstacle(d) => Variant::Obstacle(obstacle_data(&mut e, d)?),
        Variant::Thermoforming(d) => Variant::Thermoforming(thermoforming_data(&mut e, d)?),
        Variant::Membrane(d) => Variant::Membrane(membrane_data(&mut e, d, problem.domain.kind)?),
    };

    let mode = match e.get_or("run", "mode", "adaptive".to_string())?.as_str() {
        "adaptive" => Mode::Adaptive,
        "uniform" => Mode::Uniform,
        "both" => Mode::Both,
        other => return Err(config_error(e.line_of("run", "mode"), format!("unknown mode `{other}`"))),
    };

    let d = AdaptiveConfig::default();
    let mut adaptive = AdaptiveConfig {
        gamma0: e.get_or("run", "gamma0", d.gamma0)?,
        c_gamma: e.get_or("run", "c_gamma", d.c_gamma)?,
        c_eta: e.get_or("run", "c_eta", d.c_eta)?,
        theta: e.get_or("run", "theta", d.theta)?,
        gamma_min_update: e.get_or("run", "gamma_min_update", d.gamma_min_update)?,
        gamma_max: e.get_or("run", "gamma_max", d.gamma_max)?,
        nrdof_max: e.get_or("run", "nrdof_max", d.nrdof_max)?,
        newton: d.newton,
    };
    adaptive.newton.tol = e.get_or("run", "tol_newton", d.newton.tol)?;
    adaptive.newton.max_iterations = e.get_or("run", "newton_max_iterations", d.newton.max_iterations)?;
    if let Err(Error::InvalidParameter(msg)) = adaptive.validate() {
        let key = msg.split(' ').next().unwrap_or("");
        return Err(config_error(e.line_of("run", key), msg));
    }

    let start: f64 = e.get_or("run", "uniform_gamma_start", 1e2)?;
    let ratio: f64 = e.get_or("run", "uniform_gamma_ratio", 1e2)?;
    let count: usize = e.get_or("run", "uniform_gamma_count", 3)?;
    if !(start > 0.0 && ratio >= 1.0 && count > 0) {
        return Err(config_error(
            e.line_of("run", "uniform_gamma_start"),
            "uniform ladder needs start > 0, ratio >= 1 and count > 0",
        ));
    }
    let uniform = UniformConfig {
        gammas: gamma_ladder(start, ratio, count),
        initial_refinements: e.get_or("run", "uniform_initial_refinements", 2)?,
    };
    let write_vtk = e.get_or("run", "write_vtk", true)?;
    e.reject_unused()?;
    Ok(ExperimentConfig {
        problem,
        mode,
        adaptive,
        uniform,
        write_vtk,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn obstacle_data(e: &mut Entries, d: ObstacleData) -> Result<ObstacleData> {
    let s = "obstacle";
    let psi = match e.get::<String>(s, "psi")?.as_deref() {
        None => d.psi,
        Some("constant") => ScalarField::Constant(e.get_or(s, "psi_value", -1.0)?),
        Some("paraboloid") => ScalarField::Paraboloid {
            peak: e.get_or(s, "psi_peak", 0.1)?,
            curvature: e.get_or(s, "psi_curvature", 2.0)?,
            center: [0.5, 0.5],
        },
        Some(other) => return Err(config_error(e.line_of(s, "psi"), format!("unknown obstacle `{other}`"))),
    };
    let f = match e.get::<f64>(s, "f")? {
        Some(v) => ScalarField::Constant(v),
        None => d.f,
    };
    Ok(ObstacleData { psi, f })
}

fn thermoforming_data(e: &mut Entries, d: ThermoformingData) -> Result<ThermoformingData> {
    let s = "thermoforming";
    let (amplitude, steepness) = match d.heat {
        HeatSource::Logistic { amplitude, steepness } => (amplitude, steepness),
        HeatSource::Constant(c) => (c, 0.0),
    };
    let (height, half_width) = match d.phi0 {
        ScalarField::Tent { height, half_width, .. } => (height, half_width),
        _ => (1.0, 0.25),
    };
    let lmult = match d.lmult {
        ScalarField::Constant(c) => c,
        _ => 1.0,
    };
    Ok(ThermoformingData {
        k: e.get_or(s, "k", d.k)?,
        f: e.get_or(s, "f", d.f)?,
        heat: HeatSource::Logistic {
            amplitude: e.get_or(s, "heat_amplitude", amplitude)?,
            steepness: e.get_or(s, "heat_steepness", steepness)?,
        },
        lmult: ScalarField::Constant(e.get_or(s, "lmult", lmult)?),
        phi0: ScalarField::Tent {
            height: e.get_or(s, "mould_height", height)?,
            half_width: e.get_or(s, "mould_half_width", half_width)?,
            center: [0.5, 0.5],
        },
    })
}

fn membrane_data(e: &mut Entries, d: MembraneData, kind: DomainKind) -> Result<MembraneData> {
    let s = "membrane";
    let value = |f: &ScalarField| match f {
        ScalarField::Indicator { value, .. } | ScalarField::Constant(value) => *value,
        _ => 0.0,
    };
    let default_support = match kind {
        DomainKind::Slit => "slit",
        DomainKind::LShape => "l_shape",
        DomainKind::UnitSquare => "everywhere",
    };
    let support = e.get_or(s, "support", default_support.to_string())?;
    let region = match support.as_str() {
        "l_shape" => l_shape_support(),
        "slit" => slit_support(),
        "everywhere" => Region::Everywhere,
        other => return Err(config_error(e.line_of(s, "support"), format!("unknown support `{other}`"))),
    };
    let f1 = e.get_or(s, "f_const_1", value(&d.f_const_1))?;
    let f2 = e.get_or(s, "f_const_2", value(&d.f_const_2))?;
    Ok(MembraneData {
        alpha: e.get_or(s, "alpha", d.alpha)?,
        f_const_1: ScalarField::Indicator {
            value: f1,
            region: region.clone(),
        },
        f_const_2: ScalarField::Indicator { value: f2, region },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_line(text: &str) -> usize {
        match parse_config(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn membrane_defaults_follow_domain() {
        let c = parse_config("problem = membrane\ndomain = slit\nmode = both\n").unwrap();
        assert_eq!(c.problem, ProblemSpec::membrane_slit(0));
        assert_eq!(c.mode, Mode::Both);
        assert_eq!(c.uniform.gammas, vec![1e2, 1e4, 1e6]);
        assert_eq!(c.uniform_problem().domain.initial_refinements, 2);
    }

    #[test]
    fn full_config() {
        let text = "\
# benchmark setting
[run]
problem = membrane
domain = l_shape
theta = 0.1
c_gamma = 0.1   # smaller than the default
nrdof_max = 1000
tol_newton = 1e-8

[membrane]
alpha = 1.5
f_const_1 = 10
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.adaptive.theta, 0.1);
        assert_eq!(c.adaptive.c_gamma, 0.1);
        assert_eq!(c.adaptive.nrdof_max, 1000);
        assert_eq!(c.adaptive.newton.tol, 1e-8);
        let Variant::Membrane(d) = &c.problem.variant else { panic!() };
        assert_eq!(d.alpha, 1.5);
        assert_eq!(d.f_const_1.eval([0.2, 0.2]), 10.0);
        assert_eq!(d.f_const_2.eval([0.2, 0.2]), -500.0);
    }

    #[test]
    fn obstacle_config() {
        let c = parse_config("problem = obstacle\n[obstacle]\npsi = constant\npsi_value = -1\nf = 0\n").unwrap();
        let Variant::Obstacle(d) = &c.problem.variant else { panic!() };
        assert_eq!(d.psi, ScalarField::Constant(-1.0));
        assert_eq!(d.f, ScalarField::Constant(0.0));
    }

    #[test]
    fn diagnostics_point_at_the_line() {
        assert_eq!(err_line("problem = obstacle\n\ntheta = 2\n"), 3);
        assert_eq!(err_line("problem = obstacle\ngamma0 = abc\n"), 2);
        assert_eq!(err_line("problem = obstacle\nbogus = 1\n"), 2);
        assert_eq!(err_line("problem = obstacle\n[membrane]\nalpha = 1\n"), 3);
        assert_eq!(err_line("problem = obstacle\nno equals sign\n"), 2);
        assert_eq!(err_line("problem = obstacle\ntheta = 0.1\ntheta = 0.2\n"), 3);
        assert_eq!(err_line("[nowhere]\n"), 1);
        assert_eq!(err_line("mode = adaptive\n"), 1);
        assert_eq!(err_line("problem = obstacle\ndomain = torus\n"), 2);
    }
}

//! Scenario files: a TOML description of two particles, a grid, and the
//! experiment to run on them.

use crate::minkowski::FourVector;
use crate::worldline::{SwitchingProfile, Worldline, WorldlineError};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario needs exactly 2 [[particle]] sections, got {0}")]
    ParticleCount(usize),
    #[error("unknown experiment {0:?}; see `list-experiments`")]
    UnknownExperiment(String),
    #[error("grid size k must be at least 3, got {0}")]
    GridTooSmall(usize),
    #[error("lattice steps must be at least 1")]
    NoLatticeSteps,
    #[error("particle {index}: mass must be positive, got {mass}")]
    BadMass { index: usize, mass: f64 },
    #[error("particle {index}: {field} must be positive")]
    NonPositive { index: usize, field: &'static str },
    #[error("tolerance {name} must be positive, got {value}")]
    BadTolerance { name: &'static str, value: f64 },
    #[error("worldline file {path:?} not readable: {source}")]
    FileUnreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("particle {index} worldline: {source}")]
    Worldline {
        index: usize,
        #[source]
        source: WorldlineError,
    },
}

pub const EXPERIMENTS: &[&str] = &[
    "action-eval",
    "invariance-sweep",
    "classical-orbit",
    "free-propagator",
    "gaussian-check",
    "perturbation-order",
    "proper-time-fix",
];

fn default_hbar() -> f64 {
    1.0
}

fn default_lattice_steps() -> usize {
    32
}

fn default_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub experiment: String,
    pub grid: Grid,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(rename = "particle")]
    pub particles: Vec<ParticleSpec>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub k: usize,
    #[serde(default = "default_lattice_steps")]
    pub lattice_steps: usize,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_grad")]
    pub grad: f64,
    #[serde(default = "default_rel")]
    pub rel: f64,
}

fn default_grad() -> f64 {
    1e-8
}

fn default_rel() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            grad: default_grad(),
            rel: default_rel(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub mass: f64,
    #[serde(default)]
    pub charge: ChargeSpec,
    pub worldline: WorldlineSpec,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeSpec {
    #[serde(default)]
    pub e_max: f64,
    pub s_on: Option<f64>,
    pub s_off: Option<f64>,
    #[serde(default = "default_one")]
    pub ramp: f64,
}

impl Default for ChargeSpec {
    fn default() -> Self {
        ChargeSpec {
            e_max: 0.0,
            s_on: None,
            s_off: None,
            ramp: 1.0,
        }
    }
}

impl ChargeSpec {
    pub fn profile(&self) -> SwitchingProfile {
        if self.e_max == 0.0 {
            return SwitchingProfile::off();
        }
        match (self.s_on, self.s_off) {
            (Some(on), Some(off)) => SwitchingProfile::new(self.e_max, on, off, self.ramp),
            _ => SwitchingProfile::constant(self.e_max),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorldlineSpec {
    Straight {
        start: [f64; 4],
        end: [f64; 4],
        lapse: f64,
    },
    Circular {
        radius: f64,
        omega: f64,
        t_span: f64,
        #[serde(default)]
        phase: f64,
    },
    FromFile {
        path: String,
    },
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(ScenarioError::UnknownExperiment(self.experiment.clone()));
        }
        if self.grid.k < 3 {
            return Err(ScenarioError::GridTooSmall(self.grid.k));
        }
        if self.grid.lattice_steps == 0 {
            return Err(ScenarioError::NoLatticeSteps);
        }
        for (name, value) in [
            ("grad", self.tolerances.grad),
            ("rel", self.tolerances.rel),
        ] {
            if !(value > 0.0) {
                return Err(ScenarioError::BadTolerance { name, value });
            }
        }
        if self.particles.len() != 2 {
            return Err(ScenarioError::ParticleCount(self.particles.len()));
        }
        for (index, p) in self.particles.iter().enumerate() {
            if !(p.mass > 0.0) {
                return Err(ScenarioError::BadMass {
                    index,
                    mass: p.mass,
                });
            }
            match &p.worldline {
                WorldlineSpec::Straight { lapse, .. } => {
                    if !(*lapse > 0.0) {
                        return Err(ScenarioError::NonPositive {
                            index,
                            field: "lapse",
                        });
                    }
                }
                WorldlineSpec::Circular { radius, t_span, .. } => {
                    if !(*radius > 0.0) {
                        return Err(ScenarioError::NonPositive {
                            index,
                            field: "radius",
                        });
                    }
                    if !(*t_span > 0.0) {
                        return Err(ScenarioError::NonPositive {
                            index,
                            field: "t_span",
                        });
                    }
                }
                WorldlineSpec::FromFile { path } => {
                    std::fs::metadata(path).map_err(|source| ScenarioError::FileUnreadable {
                        path: path.clone(),
                        source,
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Materialize the two worldlines on the scenario grid.
    pub fn build_worldlines(&self) -> Result<(Worldline, Worldline), ScenarioError> {
        let mut out = Vec::with_capacity(2);
        for (index, p) in self.particles.iter().enumerate() {
            let profile = p.charge.profile();
            let w = match &p.worldline {
                WorldlineSpec::Straight { start, end, lapse } => Worldline::straight(
                    FourVector(*start),
                    FourVector(*end),
                    self.grid.k,
                    *lapse,
                    p.mass,
                    profile,
                )
                .map_err(|source| ScenarioError::Worldline { index, source })?,
                WorldlineSpec::Circular {
                    radius,
                    omega,
                    t_span,
                    phase,
                } => {
                    let k = self.grid.k;
                    let pts: Vec<FourVector> = (0..k)
                        .map(|i| {
                            let t = t_span * i as f64 / (k - 1) as f64;
                            let ang = omega * t + phase;
                            FourVector::new(t, radius * ang.cos(), radius * ang.sin(), 0.0)
                        })
                        .collect();
                    let v = radius * omega;
                    let lapse = t_span * (1.0 - v * v).max(0.0).sqrt() / p.mass;
                    let mut w = Worldline::straight(
                        pts[0],
                        pts[k - 1],
                        k,
                        lapse.max(1e-12),
                        p.mass,
                        profile,
                    )
                    .map_err(|source| ScenarioError::Worldline { index, source })?;
                    w.points = pts;
                    w.refresh();
                    w
                }
                WorldlineSpec::FromFile { path } => {
                    let text =
                        std::fs::read_to_string(path).map_err(|source| {
                            ScenarioError::FileUnreadable {
                                path: path.clone(),
                                source,
                            }
                        })?;
                    Worldline::from_table(&text, p.mass, profile)
                        .map_err(|source| ScenarioError::Worldline { index, source })?
                }
            };
            out.push(w);
        }
        let w2 = out.pop().unwrap();
        let w1 = out.pop().unwrap();
        Ok((w1, w2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "action-eval"

[grid]
k = 17

[[particle]]
mass = 1.0
worldline = { kind = "straight", start = [0.0, 0.0, 0.0, 0.0], end = [3.0, 0.0, 0.0, 0.0], lapse = 3.0 }

[[particle]]
mass = 1.0
charge = { e_max = 0.2, s_on = 0.5, s_off = 2.5, ramp = 0.3 }
worldline = { kind = "straight", start = [0.0, 1.0, 0.0, 0.0], end = [3.0, 1.0, 0.0, 0.0], lapse = 3.0 }
"#;

    #[test]
    fn minimal_scenario_parses() {
        let sc = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(sc.experiment, "action-eval");
        assert_eq!(sc.grid.k, 17);
        assert_eq!(sc.hbar, 1.0);
        let (w1, w2) = sc.build_worldlines().unwrap();
        assert_eq!(w1.samples(), 17);
        assert_eq!(w2.charge_profile.e_max, 0.2);
        assert_eq!(w1.charge_profile.e_max, 0.0);
    }

    #[test]
    fn unknown_experiment_rejected() {
        let text = MINIMAL.replace("action-eval", "mystery");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::UnknownExperiment(_))
        ));
    }

    #[test]
    fn tiny_grid_rejected() {
        let text = MINIMAL.replace("k = 17", "k = 2");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::GridTooSmall(2))
        ));
    }

    #[test]
    fn missing_particle_rejected() {
        let cut = MINIMAL.find("[[particle]]").unwrap();
        let first = &MINIMAL[..MINIMAL.rfind("[[particle]]").unwrap()];
        assert!(cut < first.len());
        assert!(matches!(
            Scenario::from_toml_str(first),
            Err(ScenarioError::ParticleCount(1))
        ));
    }

    #[test]
    fn bad_toml_rejected() {
        assert!(matches!(
            Scenario::from_toml_str("experiment = ["),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn missing_file_rejected() {
        let text = MINIMAL.replace(
            r#"{ kind = "straight", start = [0.0, 0.0, 0.0, 0.0], end = [3.0, 0.0, 0.0, 0.0], lapse = 3.0 }"#,
            r#"{ kind = "from-file", path = "/nonexistent/worldline.txt" }"#,
        );
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::FileUnreadable { .. })
        ));
    }

    #[test]
    fn circular_spec_builds_orbit() {
        let text = MINIMAL.replace(
            r#"{ kind = "straight", start = [0.0, 0.0, 0.0, 0.0], end = [3.0, 0.0, 0.0, 0.0], lapse = 3.0 }"#,
            r#"{ kind = "circular", radius = 0.5, omega = 0.1, t_span = 6.0 }"#,
        );
        let sc = Scenario::from_toml_str(&text).unwrap();
        let (w1, _) = sc.build_worldlines().unwrap();
        let r0 = (w1.points[0].0[1].powi(2) + w1.points[0].0[2].powi(2)).sqrt();
        let r_mid = (w1.points[8].0[1].powi(2) + w1.points[8].0[2].powi(2)).sqrt();
        assert!((r0 - 0.5).abs() < 1e-12 && (r_mid - 0.5).abs() < 1e-12);
    }
}

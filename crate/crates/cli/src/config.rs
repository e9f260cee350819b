//! TOML run configuration.

use std::path::{Path, PathBuf};

use mvharnack::harnack::TestFunction;
use mvharnack::model::{ModelConfig, ProbeConfig, StateModulation};
use mvharnack::wellposed::LambdaRule;
use mvharnack::{EmpiricalMeasure, Error, HamiltonianModel, Result, RngPolicy, SplitState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_particles: usize,
    pub n_paths: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub output: Option<String>,
    pub validate: Option<ProbeConfig>,
    pub simulate: Option<SimulateCheck>,
    pub picard: Option<PicardCheck>,
    pub bismut: Option<BismutCheck>,
    pub harnack: Option<HarnackCheck>,
    pub metrics: Option<MetricsCheck>,
    pub study: Option<StudyCheck>,
}

/// A law given by atoms, a Gaussian sample or a measure CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Dirac {
        point: Vec<f64>,
    },
    Atoms {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    Gaussian {
        mean: Vec<f64>,
        std: f64,
        atoms: usize,
    },
    Csv {
        file: String,
    },
}

impl LawSpec {
    pub fn build(&self, m: usize, d: usize, base_dir: &Path, rng: &RngPolicy) -> Result<EmpiricalMeasure> {
        let measure = match self {
            LawSpec::Dirac { point } => {
                check_len(point, m + d, "dirac point")?;
                EmpiricalMeasure::dirac(&SplitState::from_flat(m, point))
            }
            LawSpec::Atoms { points, weights } => {
                for p in points {
                    check_len(p, m + d, "atom")?;
                }
                let coords = points.concat();
                match weights {
                    Some(w) => EmpiricalMeasure::new(m, d, coords, w.clone())?,
                    None => EmpiricalMeasure::uniform(m, d, coords)?,
                }
            }
            LawSpec::Gaussian { mean, std, atoms } => {
                check_len(mean, m + d, "gaussian mean")?;
                let law = mvharnack::InitialLaw::Gaussian {
                    mean: mean.clone(),
                    std: *std,
                };
                EmpiricalMeasure::uniform(m, d, law.sample(*atoms, rng)?)?
            }
            LawSpec::Csv { file } => {
                let path = base_dir.join(file);
                let reader = std::fs::File::open(&path)
                    .map_err(|e| Error::Config(format!("measure file {}: {e}", path.display())))?;
                let measure = EmpiricalMeasure::read_csv(std::io::BufReader::new(reader))?;
                if measure.m() != m || measure.d() != d {
                    return Err(Error::Config(format!(
                        "measure file {} has the wrong dimensions",
                        path.display()
                    )));
                }
                measure
            }
        };
        Ok(measure)
    }

    fn referenced_file(&self) -> Option<&str> {
        match self {
            LawSpec::Csv { file } => Some(file),
            _ => None,
        }
    }
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} has {} coordinates, expected {n}",
            v.len()
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCheck {
    pub initial: LawSpec,
    /// Start point of the decoupled moment report.
    pub x: Vec<f64>,
    #[serde(default = "two")]
    pub p: f64,
    /// Grid times at which path moments are reported.
    pub report_times: Vec<f64>,
    #[serde(default = "two")]
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardCheck {
    pub initial: LawSpec,
    #[serde(default = "two")]
    pub k: f64,
    pub lambda: LambdaRule,
    pub tol: f64,
    pub max_iter: usize,
    /// Multiples of the base λ at which contraction ratios are compared.
    #[serde(default = "default_sweep")]
    pub lambda_sweep: Vec<f64>,
    #[serde(default)]
    pub state_noise: Option<StateModulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientCase {
    pub f: TestFunction,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BismutCheck {
    pub initial: LawSpec,
    pub x: Vec<f64>,
    pub t: f64,
    pub cases: Vec<GradientCase>,
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackCheck {
    pub gamma: LawSpec,
    pub gamma_tilde: LawSpec,
    pub t: f64,
    pub functions: Vec<TestFunction>,
    #[serde(default = "default_powers")]
    pub powers: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_pairs")]
    pub max_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsCheck {
    pub mu: LawSpec,
    pub nu: LawSpec,
    #[serde(default = "two")]
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyCheck {
    pub gamma: LawSpec,
    pub gamma_tilde: LawSpec,
    pub times: Vec<f64>,
    /// Step of the study grid; defaults to the simulation step.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Particles per cloud; defaults to the simulation value.
    #[serde(default)]
    pub n_particles: Option<usize>,
    /// Paths per reweighted measure, at most half the transport solver cap.
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Seed offsets for the cross-seed stability of the `W₂` ratio.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_r2")]
    pub min_r_squared: f64,
    #[serde(default = "default_spread")]
    pub max_seed_spread: f64,
}

fn two() -> f64 {
    2.0
}
fn default_fd_eps() -> f64 {
    1e-3
}
fn default_sweep() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_powers() -> Vec<f64> {
    vec![1.5, 2.0, 4.0]
}
fn default_bins() -> usize {
    8
}
fn default_pairs() -> usize {
    8
}
fn default_replicates() -> usize {
    4
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_r2() -> f64 {
    0.8
}
fn default_spread() -> f64 {
    0.2
}

/// A parsed configuration with its directory, for resolving relative paths.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub model: HamiltonianModel,
}

impl LoadedConfig {
    pub fn rng(&self) -> RngPolicy {
        RngPolicy::new(self.config.simulation.seed)
    }

    pub fn law(&self, spec: &LawSpec, stream: u64) -> Result<EmpiricalMeasure> {
        spec.build(
            self.model.m,
            self.model.d,
            &self.base_dir,
            &self.rng().derive(0x1a40 + stream),
        )
    }

    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        match (override_dir, &self.config.checks.output) {
            (Some(dir), _) => dir.to_path_buf(),
            (None, Some(dir)) => self.base_dir.join(dir),
            (None, None) => self.base_dir.join("out"),
        }
    }
}

pub fn parse(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |span| text[..span.start].lines().count().max(1));
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config = parse(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    check(&config, &base_dir)?;
    let model = config.model.build(&base_dir)?;
    Ok(LoadedConfig {
        config,
        base_dir,
        model,
    })
}

fn check(config: &RunConfig, base_dir: &Path) -> Result<()> {
    let sim = &config.simulation;
    if (sim.horizon - config.model.horizon).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "simulation.T = {} differs from model.horizon = {}",
            sim.horizon, config.model.horizon
        )));
    }
    if !(sim.dt > 0.0) {
        return Err(Error::Config("simulation.dt must be positive".into()));
    }
    let steps = sim.horizon / sim.dt;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::Config(format!(
            "dt = {} does not divide T = {}",
            sim.dt, sim.horizon
        )));
    }
    if sim.n_particles < 2 || sim.n_paths < 2 {
        return Err(Error::Config("n_particles and n_paths must be at least 2".into()));
    }
    let checks = &config.checks;
    let laws = [
        checks.simulate.as_ref().map(|c| &c.initial),
        checks.picard.as_ref().map(|c| &c.initial),
        checks.bismut.as_ref().map(|c| &c.initial),
        checks.harnack.as_ref().map(|c| &c.gamma),
        checks.harnack.as_ref().map(|c| &c.gamma_tilde),
        checks.metrics.as_ref().map(|c| &c.mu),
        checks.metrics.as_ref().map(|c| &c.nu),
        checks.study.as_ref().map(|c| &c.gamma),
        checks.study.as_ref().map(|c| &c.gamma_tilde),
    ];
    for file in laws.into_iter().flatten().filter_map(LawSpec::referenced_file) {
        if !base_dir.join(file).exists() {
            return Err(Error::Config(format!("referenced file {file} does not exist")));
        }
    }
    Ok(())
}

//! Experiment configuration. Every object rejects unknown keys; payloads are
//! validated by the same constructors the library uses, before any work starts.

use std::path::PathBuf;

use conehj::cone::{DiscreteMeasure, Partition, StepPath};
use conehj::linalg::SymMatrix;
use conehj::nonlinearity::CovarianceModel;
use conehj::solvers::{
    ComposedConcave, InitialCondition, Linear, MaxAffine, Method, PiecewiseLinearMean, SeparableConvex, SlopeProfile,
    SolverOptions, Table,
};
use conehj::spin_glass::SkOneSpin;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Converge,
    FmVerify,
    Compare,
    Spinglass,
    Accept,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Converge => "converge",
            Command::FmVerify => "fm-verify",
            Command::Compare => "compare",
            Command::Spinglass => "spinglass",
            Command::Accept => "accept",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Command,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    params: serde_json::Value,
}

/// Initial conditions by name, mirroring the library families.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    Linear { h: StepPath<f64> },
    MaxAffine { pieces: Vec<(StepPath<f64>, f64)> },
    SeparableConvex { h: SlopeProfile<f64>, a: SlopeProfile<f64> },
    ComposedConcave { h: SlopeProfile<f64> },
    PiecewiseLinearMean { value0: f64, breaks: Vec<f64>, slopes: Vec<f64> },
    Table { partition: Partition<f64>, x_max: f64, steps: usize, values: Vec<f64> },
    SkOneSpin {},
}

impl PsiSpec {
    pub fn build(&self) -> conehj::Result<Box<dyn InitialCondition<f64>>> {
        Ok(match self.clone() {
            PsiSpec::Linear { h } => Box::new(Linear::new(h)?),
            PsiSpec::MaxAffine { pieces } => Box::new(MaxAffine::new(pieces)?),
            PsiSpec::SeparableConvex { h, a } => Box::new(SeparableConvex::new(h, a)?),
            PsiSpec::ComposedConcave { h } => Box::new(ComposedConcave::new(h)?),
            PsiSpec::PiecewiseLinearMean { value0, breaks, slopes } => {
                Box::new(PiecewiseLinearMean::new(value0, breaks, slopes)?)
            }
            PsiSpec::Table { partition, x_max, steps, values } => {
                Box::new(Table::new(partition, x_max, steps, values)?)
            }
            PsiSpec::SkOneSpin {} => Box::new(SkOneSpin::default()),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub psi: PsiSpec,
    pub xi: CovarianceModel<f64>,
    pub partition: Partition<f64>,
    pub times: Vec<f64>,
    /// One row of coordinates per sample, scalars when `D = 1`.
    pub samples: Vec<Vec<SymMatrix<f64>>>,
    pub method: Method,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeParams {
    pub psi: PsiSpec,
    pub xi: CovarianceModel<f64>,
    /// Dyadic chain `|j| = first, 2 first, ..., last`.
    pub first: usize,
    pub last: usize,
    pub points: usize,
    pub radius: f64,
    pub t_max: f64,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn one() -> f64 {
    1.0
}

/// Built-in grid functions `g(x)` on `C^j ∩ [0, x_max]^{|j|}` (`D = 1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridFormula {
    /// Raw lattice values, `null` for `+∞`.
    Values(Vec<Option<f64>>),
    /// `Σ_k w_k (h_k x_k + a_k x_k²)`.
    Separable { h: Vec<f64>, a: Vec<f64> },
    /// `max_i ⟨h_i, x⟩ + c_i`.
    MaxAffine { pieces: Vec<(Vec<f64>, f64)> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmParams {
    pub partition: Partition<f64>,
    pub x_max: f64,
    pub steps: usize,
    pub function: GridFormula,
    /// Defaults to `5 h (Lip g + Lip g*)`.
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareParams {
    /// A scalar datum (`D = 1`, evaluated on one cell).
    pub psi: PsiSpec,
    pub xi: CovarianceModel<f64>,
    pub dx: f64,
    pub horizon: f64,
    pub time_steps: usize,
    /// Test radius `R`; `hopf_lax` is tabulated on `[0, R + 1/2]`.
    pub r: f64,
    /// Keep every `stride`-th finite-difference node.
    #[serde(default = "stride")]
    pub stride: usize,
    /// Defaults to `10 Δx (1 + T)`.
    #[serde(default)]
    pub tol: Option<f64>,
    /// Also run the negative control `v = u - c t`.
    #[serde(default)]
    pub negative_control: Option<f64>,
}

fn stride() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub zetas: Vec<f64>,
    #[serde(rename = "M", default)]
    pub m: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinglassParams {
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    pub beta: f64,
    pub t_list: Vec<f64>,
    pub measure: DiscreteMeasure<f64>,
    /// Defaults to the ratios read off `measure`.
    #[serde(default)]
    pub cascade: Option<CascadeParams>,
    pub replicas: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Also compute `f(t, ϱ)` by Hopf-Lax and run the finite-`N` bound check.
    #[serde(default)]
    pub bound: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptParams {
    /// Criterion ids to run; all when empty.
    #[serde(default)]
    pub only: Vec<u8>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    Solve(SolveParams),
    Converge(ConvergeParams),
    FmVerify(FmParams),
    Compare(CompareParams),
    Spinglass(SpinglassParams),
    Accept(AcceptParams),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSON form.
    pub hash: String,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid config at `{pointer}`: {message} (schema: README.md, section \"{section}\")")]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
    pub section: String,
}

fn schema_section(cmd: Option<Command>) -> String {
    match cmd {
        Some(c) => format!("Config: {}", c.as_str()),
        None => "Config".into(),
    }
}

fn typed<T: for<'de> Deserialize<'de>>(cmd: Command, v: serde_json::Value) -> Result<T, ConfigError> {
    serde_json::from_value(v).map_err(|e| ConfigError {
        pointer: "/params".into(),
        message: e.to_string(),
        section: schema_section(Some(cmd)),
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            pointer: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
            section: schema_section(None),
        })?;
        let params = if raw.params.is_null() { serde_json::json!({}) } else { raw.params.clone() };
        let experiment = match raw.command {
            Command::Solve => Experiment::Solve(typed(raw.command, params)?),
            Command::Converge => Experiment::Converge(typed(raw.command, params)?),
            Command::FmVerify => Experiment::FmVerify(typed(raw.command, params)?),
            Command::Compare => Experiment::Compare(typed(raw.command, params)?),
            Command::Spinglass => Experiment::Spinglass(typed(raw.command, params)?),
            Command::Accept => Experiment::Accept(typed(raw.command, params)?),
        };
        let cfg = ExperimentConfig { experiment, out: raw.out, seed: raw.seed, hash: String::new() };
        cfg.validate()?;
        Ok(ExperimentConfig { hash: cfg.canonical_hash(), ..cfg })
    }

    pub fn command(&self) -> Command {
        match self.experiment {
            Experiment::Solve(_) => Command::Solve,
            Experiment::Converge(_) => Command::Converge,
            Experiment::FmVerify(_) => Command::FmVerify,
            Experiment::Compare(_) => Command::Compare,
            Experiment::Spinglass(_) => Command::Spinglass,
            Experiment::Accept(_) => Command::Accept,
        }
    }

    /// Hash of the parsed experiment and seed (the output path does not count).
    pub fn canonical_hash(&self) -> String {
        let v = serde_json::json!({ "experiment": &self.experiment, "seed": self.seed });
        let digest = Sha256::digest(serde_json::to_vec(&v).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let cmd = self.command();
        let bad = |pointer: &str, message: String| ConfigError {
            pointer: pointer.into(),
            message,
            section: schema_section(Some(cmd)),
        };
        match &self.experiment {
            Experiment::Solve(p) => {
                p.psi.build().map_err(|e| bad("/params/psi", e.to_string()))?;
                if p.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                    return Err(bad("/params/times", "times must be finite and nonnegative".into()));
                }
                if p.samples.is_empty() || p.samples.iter().any(|s| s.len() != p.partition.len()) {
                    return Err(bad(
                        "/params/samples",
                        format!("need one or more rows of {} coordinates", p.partition.len()),
                    ));
                }
            }
            Experiment::Converge(p) => {
                p.psi.build().map_err(|e| bad("/params/psi", e.to_string()))?;
                if p.points == 0 || !(p.radius > 0.0) || !(p.t_max > 0.0) {
                    return Err(bad("/params", "points, radius and t_max must be positive".into()));
                }
            }
            Experiment::FmVerify(p) => {
                if p.steps == 0 || !(p.x_max > 0.0) {
                    return Err(bad("/params", "steps and x_max must be positive".into()));
                }
                let n = p.partition.len();
                match &p.function {
                    GridFormula::Separable { h, a } if h.len() != n || a.len() != n => {
                        return Err(bad("/params/function/separable", format!("h and a need {n} entries")))
                    }
                    GridFormula::MaxAffine { pieces }
                        if pieces.is_empty() || pieces.iter().any(|(h, _)| h.len() != n) =>
                    {
                        return Err(bad("/params/function/max_affine", format!("need pieces with {n} slopes")))
                    }
                    _ => {}
                }
            }
            Experiment::Compare(p) => {
                p.psi.build().map_err(|e| bad("/params/psi", e.to_string()))?;
                if !(p.dx > 0.0) || !(p.horizon > 0.0) || p.time_steps == 0 || !(p.r > 0.0) || p.stride == 0 {
                    return Err(bad("/params", "dx, horizon, time_steps, r and stride must be positive".into()));
                }
            }
            Experiment::Spinglass(p) => {
                if p.n_list.is_empty() || p.t_list.is_empty() || p.replicas < 2 {
                    return Err(bad("/params", "need N_list, t_list and at least two replicas".into()));
                }
                if let Some(c) = &p.cascade {
                    if c.zetas.len() != c.k {
                        return Err(bad("/params/cascade", format!("K = {} but {} ratios given", c.k, c.zetas.len())));
                    }
                }
                if p.bound && p.measure.dim() != 1 {
                    return Err(bad("/params/bound", "the bound check is scalar".into()));
                }
            }
            Experiment::Accept(p) => {
                if let Some(id) = p.only.iter().find(|&&id| !(1..=13).contains(&id)) {
                    return Err(bad("/params/only", format!("no criterion {id}")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let top = r#"{"command": "accept", "colour": 1}"#;
        assert!(ExperimentConfig::parse(top).unwrap_err().message.contains("colour"));
        let inner = r#"{"command": "accept", "params": {"only": [1], "extra": true}}"#;
        let e = ExperimentConfig::parse(inner).unwrap_err();
        assert_eq!(e.pointer, "/params");
        assert!(e.to_string().contains("Config: accept"));
        let psi = r#"{"command": "converge", "params": {"psi": {"composed_concave": {"h": {"affine": {"a": 0, "b": 1}}, "k": 2}},
            "xi": {"D": 1, "poly": {"2": 1.0}}, "first": 4, "last": 16, "points": 2, "radius": 1, "t_max": 1}}"#;
        assert!(ExperimentConfig::parse(psi).is_err());
    }

    #[test]
    fn hash_ignores_output_path() {
        let a = ExperimentConfig::parse(r#"{"command": "accept", "out": "a"}"#).unwrap();
        let b = ExperimentConfig::parse(r#"{"command": "accept", "out": "b", "params": {}}"#).unwrap();
        let c = ExperimentConfig::parse(r#"{"command": "accept", "seed": 3}"#).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn invalid_payload_points_at_field() {
        let cfg = r#"{"command": "spinglass", "params": {"N_list": [4], "beta": 0.5, "t_list": [0.1],
            "measure": {"atoms": [0.0], "levels": [0.0, 1.0]}, "cascade": {"K": 1, "zetas": []}, "replicas": 10}}"#;
        assert_eq!(ExperimentConfig::parse(cfg).unwrap_err().pointer, "/params/cascade");
    }
}

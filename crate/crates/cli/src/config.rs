//! Declarative experiment description, validated before any computation.

use polybc::barycentric::CoordKind;
use polybc::expr::{parse, Expr};
use polybc::geometry::{Polygon, Sampling};
use polybc::loss::{ObjectiveKind, SOURCE_TERMS};
use polybc::network::{Activation, Architecture, DEFAULT_OMEGA0};
use polybc::optim::Phase;
use polybc::transfinite::BoundarySpec;
use polybc::trial::TrialKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub domain: DomainConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    pub network: Option<NetworkConfig>,
    /// Collocation points (ignored by the energy objective, which uses cubature nodes).
    pub sampling: Option<Sampling>,
    #[serde(default)]
    pub phases: Vec<Phase>,
    /// Points for `predictions.csv`; defaults to the collocation points.
    pub test: Option<Sampling>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    pub parametric: Option<ParametricConfig>,
    pub inverse: Option<InverseConfig>,
    pub export: Option<ExportConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Counterclockwise vertices.
    pub vertices: Option<Vec<[f64; 2]>>,
    /// Regular polygon with this many vertices on the unit circle.
    pub regular: Option<usize>,
}

fn default_matching_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// One expression per edge, edge `i` running from vertex `i` to `i + 1`.
    pub edges: Option<Vec<String>>,
    #[serde(default)]
    pub homogeneous: bool,
    #[serde(default)]
    pub coordinates: CoordKind,
    #[serde(default = "default_matching_tol")]
    pub matching_tol: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig { edges: None, homogeneous: false, coordinates: CoordKind::default(), matching_tol: default_matching_tol() }
    }
}

fn default_kind() -> ObjectiveKind {
    ObjectiveKind::Poisson
}

fn default_source() -> String {
    "0".into()
}

fn default_order() -> usize {
    2
}

fn default_level() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_kind")]
    pub kind: ObjectiveKind,
    /// Source `f` in `lap u + f = 0` (or `lap u - exp(u) + f = 0`).
    #[serde(default = "default_source")]
    pub source: String,
    /// Exact solution; enables the error columns.
    pub exact: Option<String>,
    /// Use the distance to the nearest edge as the exact solution.
    #[serde(default)]
    pub exact_distance: bool,
    #[serde(default)]
    pub trial: TrialKind,
    /// Cubature for the energy objective.
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_level")]
    pub refine_level: u32,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            kind: default_kind(),
            source: default_source(),
            exact: None,
            exact_distance: false,
            trial: TrialKind::default(),
            quadrature_order: default_order(),
            refine_level: default_level(),
        }
    }
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    /// Initialization seed; the run seed when absent.
    pub seed: Option<u64>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricConfig {
    /// Shape parameters used for training; each is paired with every collocation point.
    pub train_p: Vec<f64>,
    /// Shape parameters for the predictions.
    pub test_p: Vec<f64>,
}

fn default_weight() -> f64 {
    1e5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    /// CSV with header `x,y,u`; relative paths resolve against the config file.
    pub data_file: PathBuf,
    #[serde(default = "default_weight")]
    pub data_weight: f64,
    /// Starting source coefficients `a_0..a_5`.
    #[serde(default)]
    pub initial: [f64; SOURCE_TERMS],
    /// Units in which the optimizer sees the coefficients (it holds `a / coefficient_scale`).
    #[serde(default = "default_coefficient_scale")]
    pub coefficient_scale: f64,
}

fn default_coefficient_scale() -> f64 {
    1.0
}

fn default_export_file() -> String {
    "data.csv".into()
}

/// After a solve, sample the trained field at seeded random interior points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    pub points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_export_file")]
    pub file: String,
}

/// Everything derived from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub polygon: Polygon,
    pub spec: BoundarySpec,
    pub source: Expr,
    pub exact: Option<Expr>,
    pub arch: Option<Architecture>,
    pub init_seed: u64,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(inv), Some(dir)) = (cfg.inverse.as_mut(), path.parent()) {
            if inv.data_file.is_relative() {
                inv.data_file = dir.join(&inv.data_file);
            }
        }
        Ok(cfg)
    }

    pub fn polygon(&self) -> Result<Polygon, CliError> {
        let poly = match (&self.domain.vertices, self.domain.regular) {
            (Some(v), None) => Polygon::new(v.clone()),
            (None, Some(n)) => Polygon::regular(n),
            _ => return Err(bad("domain needs exactly one of `vertices` or `regular`")),
        };
        poly.map_err(|e| bad(format!("domain: {e}")))
    }

    /// Schema checks that need more than deserialization. `needs_training` adds the
    /// network, phases and sampling requirements of `solve` and `inverse`.
    pub fn resolve(&self, needs_training: bool) -> Result<Resolved, CliError> {
        let polygon = self.polygon()?;
        let n = polygon.n();
        let spec = match (&self.boundary.edges, self.boundary.homogeneous) {
            (Some(_), true) => return Err(bad("boundary: `edges` and `homogeneous = true` are exclusive")),
            (None, false) => return Err(bad("boundary: give `edges` or `homogeneous = true`")),
            (None, true) => BoundarySpec::homogeneous(&polygon),
            (Some(e), false) => {
                if e.len() != n {
                    return Err(bad(format!("boundary: {} edge expressions for {n} edges", e.len())));
                }
                BoundarySpec::parse(&polygon, e).map_err(|e| bad(format!("boundary: {e}")))?
            }
        };
        spec.require_matching(self.boundary.matching_tol).map_err(|e| bad(format!("boundary: {e}")))?;
        let source = parse(&self.problem.source).map_err(|e| bad(format!("problem.source: {e}")))?;
        let exact = match &self.problem.exact {
            Some(s) => Some(parse(s).map_err(|e| bad(format!("problem.exact: {e}")))?),
            None => None,
        };
        if exact.is_some() && self.problem.exact_distance {
            return Err(bad("problem: `exact` and `exact_distance` are exclusive"));
        }
        let kind = self.problem.kind;
        let parametric = kind == ObjectiveKind::ParametricPoisson;
        if parametric != self.parametric.is_some() {
            return Err(bad("the `parametric` section goes with kind = \"parametric_poisson\" and only with it"));
        }
        if parametric {
            if polygon != Polygon::unit_square() {
                return Err(bad("parametric_poisson works on the reference unit square"));
            }
            if !spec.is_homogeneous() {
                return Err(bad("parametric_poisson needs homogeneous boundary data"));
            }
            let p = self.parametric.as_ref().expect("checked");
            if p.train_p.is_empty() || p.test_p.is_empty() {
                return Err(bad("parametric: train_p and test_p must be nonempty"));
            }
            if p.train_p.iter().chain(&p.test_p).any(|v| !(v.is_finite() && *v > -1.0)) {
                return Err(bad("parametric: shape parameters must exceed -1"));
            }
        }
        if (kind == ObjectiveKind::InversePoisson) != self.inverse.is_some() {
            return Err(bad("the `inverse` section goes with kind = \"inverse_poisson\" and only with it"));
        }
        if let Some(inv) = &self.inverse {
            if !(inv.data_weight.is_finite() && inv.data_weight >= 0.0) {
                return Err(bad("inverse.data_weight must be finite and nonnegative"));
            }
        }
        if self.problem.trial == TrialKind::AdfSquare && polygon != Polygon::unit_square() {
            return Err(bad("trial = \"adf_square\" needs the unit square domain"));
        }
        if parametric && self.problem.trial != TrialKind::Transfinite {
            return Err(bad("parametric_poisson uses the transfinite trial"));
        }
        if self.export.as_ref().is_some_and(|e| e.points == 0) {
            return Err(bad("export.points must be positive"));
        }
        let arch = match &self.network {
            Some(net) => {
                let arch = Architecture::new(net.widths.clone(), net.activation, net.omega0).map_err(|e| bad(format!("network: {e}")))?;
                let want = n + usize::from(parametric);
                if arch.n_in() != want {
                    return Err(bad(format!("network: first width must be {want} for this domain, got {}", arch.n_in())));
                }
                Some(arch)
            }
            None => None,
        };
        if needs_training {
            if arch.is_none() {
                return Err(bad("missing [network] section"));
            }
            if self.phases.is_empty() {
                return Err(bad("missing [[phases]]"));
            }
            for (k, p) in self.phases.iter().enumerate() {
                p.validate().map_err(|e| bad(format!("phases[{k}]: {e}")))?;
            }
            if kind != ObjectiveKind::Ritz && self.sampling.is_none() {
                return Err(bad("missing [sampling] section"));
            }
            if kind == ObjectiveKind::Ritz {
                polybc::geometry::triangle_quadrature(self.problem.quadrature_order).map_err(|e| bad(format!("problem.quadrature_order: {e}")))?;
            }
        }
        let init_seed = self.network.as_ref().and_then(|n| n.seed).unwrap_or(self.seed);
        Ok(Resolved { polygon, spec, source, exact, arch, init_seed })
    }
}

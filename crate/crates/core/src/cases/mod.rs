//! Case definitions, configuration and run orchestration.
//!
//! A case pairs a geometry with a PDE, per-variable boundary rules and a
//! parameter family. [`build_case`] turns a config file into concrete
//! [`Instance`]s (mesh, metrics, enforced problem, network input), which
//! [`Trainer`] and [`evaluate`] then work on.

mod config;
mod run;

use std::path::{Path, PathBuf};

pub use config::parse_config;
pub use run::{evaluate, reference_solution, train, EvalRow, StepReport, TrainOutcome, Trainer};

use crate::bcpad::{BCSpec, BoundaryEnforcer, Condition, EdgeValues};
use crate::error::{Error, Result};
use crate::gpfield::{self, GPConfig, KLBasis};
use crate::grid::{Edge, GridField};
use crate::meshgen::{self, BoundaryCurves, CurvilinearMesh, MappingOptions, TransformMetrics};
use crate::model::{Activation, NetConfig, Wrap};
use crate::physics::{FluidParams, Pde, Problem};

/// Where the physical mesh comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    /// Boundary file (see [`BoundaryCurves::from_text`]).
    Boundary(PathBuf),
    /// Annulus centred at the origin, cut along +x, periodic in ξ.
    Annulus { r_in: f64, r_out: f64, n_xi: usize, n_eta: usize },
    /// Stenosis/aneurysm vessel whose shape is the case parameter.
    Vessel { n_xi: usize, n_eta: usize },
}

/// One edge condition as written in the config, before the parameter is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeRule {
    Dirichlet(f64),
    /// Dirichlet with the case parameter as the value.
    DirichletParam,
    Neumann(f64),
    /// Glued to the opposite edge.
    Periodic,
    Outflow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamRule {
    Fixed,
    BoundaryValue { train: Vec<f64>, test: Vec<f64> },
    Vessel { train: Vec<f64>, test: Vec<f64> },
    /// Sample `i` uses K-L coefficients drawn with seed `seed + i`; training
    /// samples are `0..n_train`, test samples follow.
    Source { n_train: usize, n_test: usize, seed: u64, gp: GPConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputChannel {
    /// Physical x and y (two channels).
    Coords,
    /// Linear blend in η between the first variable's bottom and top values.
    Interp,
    /// Poisson source divided by σ0.
    Source,
}

impl InputChannel {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "coords" => Some(Self::Coords),
            "interp" => Some(Self::Interp),
            "source" => Some(Self::Source),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            Self::Coords => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub iterations: u64,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub hidden: [usize; 3],
    pub activation: Activation,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { iterations: 1000, lr: 1e-3, batch: 1, seed: 0, hidden: [16, 32, 16], activation: Activation::Relu, checkpoint_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseDefinition {
    pub name: String,
    pub mesh: MeshSource,
    pub mapping_tol: f64,
    pub pde: Pde,
    pub fluid: Option<FluidParams>,
    pub weights: Vec<f64>,
    /// Per variable, indexed by `Edge as usize`.
    pub bc: Vec<[EdgeRule; 4]>,
    pub params: ParamRule,
    pub input: Vec<InputChannel>,
    pub train: TrainSettings,
}

impl CaseDefinition {
    pub fn read(path: &Path) -> Result<Self> {
        parse_config(&std::fs::read_to_string(path)?, path)
    }

    /// Network shape for this case on a grid with the given periodic axes.
    pub fn net_config(&self, wrap: Wrap) -> NetConfig {
        let mut cfg = NetConfig::new(self.pde.variables(), self.input.iter().map(|c| c.width()).sum());
        cfg.hidden = self.train.hidden;
        cfg.activation = self.train.activation;
        cfg.wrap = wrap;
        cfg
    }

    fn input_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for c in &self.input {
            match c {
                InputChannel::Coords => names.extend(["x".to_string(), "y".to_string()]),
                InputChannel::Interp => names.push("interp".into()),
                InputChannel::Source => names.push("source".into()),
            }
        }
        names
    }

    /// Boundary conditions of every variable at parameter value `param`.
    pub fn bc_specs(&self, param: Option<f64>) -> Result<Vec<BCSpec>> {
        self.bc
            .iter()
            .map(|rules| {
                let mut conds = Vec::with_capacity(4);
                for (e, r) in rules.iter().enumerate() {
                    conds.push(match *r {
                        EdgeRule::Dirichlet(v) => Condition::Dirichlet(EdgeValues::Uniform(v)),
                        EdgeRule::DirichletParam => {
                            let v = param.ok_or_else(|| Error::Invalid("boundary value needs a parameter".into()))?;
                            Condition::Dirichlet(EdgeValues::Uniform(v))
                        }
                        EdgeRule::Neumann(v) => Condition::Neumann(EdgeValues::Uniform(v)),
                        EdgeRule::Periodic => Condition::Periodic(Edge::ALL[e].opposite()),
                        EdgeRule::Outflow => Condition::Outflow,
                    });
                }
                let [b, r, t, l]: [Condition; 4] = conds.try_into().unwrap();
                Ok(BCSpec::new(b, r, t, l))
            })
            .collect()
    }
}

/// Stenosis (s > 0) or aneurysm (s < 0) vessel: walls at
/// x = ±(0.5 − s·cos 2πy) for y ∈ [−0.25, 0.25], flat ends at y = ±0.25.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselGeometry {
    pub s: f64,
}

impl VesselGeometry {
    /// Nominal family range; shapes outside it are still valid geometry as
    /// long as the walls do not touch.
    pub const RANGE: (f64, f64) = (-0.1, 0.1);

    pub fn new(s: f64) -> Result<Self> {
        // narrowest gap is 1 − 2|s|
        if !(s.abs() < 0.5) {
            return Err(Error::Invalid(format!("vessel parameter s = {s} makes the walls touch")));
        }
        Ok(Self { s })
    }

    pub fn left_wall(&self, y: f64) -> f64 {
        self.s * (std::f64::consts::TAU * y).cos() - 0.5
    }

    pub fn right_wall(&self, y: f64) -> f64 {
        -self.s * (std::f64::consts::TAU * y).cos() + 0.5
    }

    pub fn boundary(&self, n_xi: usize, n_eta: usize) -> BoundaryCurves {
        let y = |t: f64| -0.25 + 0.5 * t;
        BoundaryCurves::from_curves(
            n_xi,
            n_eta,
            |t| (-0.5 + t, -0.25),
            |t| (self.right_wall(y(t)), y(t)),
            |t| (-0.5 + t, 0.25),
            |t| (self.left_wall(y(t)), y(t)),
        )
    }
}

/// Parameter of one instance.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    None,
    Scalar(f64),
    Source { index: usize, omega: Vec<f64> },
}

impl ParamValue {
    pub fn label(&self) -> String {
        match self {
            ParamValue::None => "-".into(),
            ParamValue::Scalar(v) => format!("{v}"),
            ParamValue::Source { index, .. } => format!("source{index}"),
        }
    }

    fn scalar(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }
}

/// One concrete parameter point: geometry, enforced problem and network input.
#[derive(Debug)]
pub struct Instance {
    pub param: ParamValue,
    pub mesh: CurvilinearMesh,
    pub specs: Vec<BCSpec>,
    pub problem: Problem,
    pub input: GridField,
    pub source: Option<Vec<f64>>,
}

impl Instance {
    pub fn metrics(&self) -> &TransformMetrics {
        &self.problem.metrics
    }
}

/// A case with its training and test instances built.
#[derive(Debug)]
pub struct Case {
    pub def: CaseDefinition,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    /// Shared mesh for every case whose geometry does not vary.
    shared: Option<(CurvilinearMesh, TransformMetrics)>,
    basis: Option<KLBasis>,
}

/// Parse a config file and build all its instances.
pub fn build_case(path: &Path) -> Result<Case> {
    Case::new(CaseDefinition::read(path)?)
}

impl Case {
    pub fn new(def: CaseDefinition) -> Result<Self> {
        let shared = match &def.mesh {
            MeshSource::Vessel { .. } => None,
            _ => Some(make_mesh(&def, None)?),
        };
        let basis = match &def.params {
            ParamRule::Source { gp, .. } => {
                let (mesh, _) = shared.as_ref().unwrap();
                gp.validate(mesh.x.len())?;
                Some(gpfield::kl_decompose(&gpfield::build_kernel_matrix(mesh, gp), gp.k)?)
            }
            _ => None,
        };
        let mut case = Case { def, train: Vec::new(), test: Vec::new(), shared, basis };
        let (train, test) = case.parameter_sets();
        case.train = train.into_iter().map(|p| case.instance(p)).collect::<Result<_>>()?;
        case.test = test.into_iter().map(|p| case.instance(p)).collect::<Result<_>>()?;
        Ok(case)
    }

    /// Network shape; convolutions wrap along the periodic axes of the mesh.
    pub fn net_config(&self) -> NetConfig {
        let g = self.train[0].mesh.grid;
        self.def.net_config(Wrap { xi: g.periodic_xi, eta: g.periodic_eta })
    }

    pub fn basis(&self) -> Option<&KLBasis> {
        self.basis.as_ref()
    }

    /// Mesh of a fixed-geometry case, or of the vessel at `s`.
    pub fn mesh(&self, s: Option<f64>) -> Result<(CurvilinearMesh, TransformMetrics)> {
        match &self.shared {
            Some(m) => Ok(m.clone()),
            None => make_mesh(&self.def, s),
        }
    }

    fn parameter_sets(&self) -> (Vec<ParamValue>, Vec<ParamValue>) {
        let scalars = |v: &[f64]| v.iter().map(|&x| ParamValue::Scalar(x)).collect();
        match &self.def.params {
            ParamRule::Fixed => (vec![ParamValue::None], Vec::new()),
            ParamRule::BoundaryValue { train, test } | ParamRule::Vessel { train, test } => (scalars(train), scalars(test)),
            ParamRule::Source { n_train, n_test, .. } => (
                (0..*n_train).map(|i| self.source_param(i)).collect(),
                (*n_train..n_train + n_test).map(|i| self.source_param(i)).collect(),
            ),
        }
    }

    /// K-L coefficients of source sample `index`.
    pub fn source_param(&self, index: usize) -> ParamValue {
        match &self.def.params {
            ParamRule::Source { seed, gp, .. } => {
                ParamValue::Source { index, omega: gpfield::draw_omega(gp.k, seed.wrapping_add(index as u64)) }
            }
            _ => ParamValue::None,
        }
    }

    /// Parameter value from its command-line spelling: a number for scalar
    /// families, a sample index for source families.
    pub fn parse_param(&self, text: &str) -> Result<ParamValue> {
        let bad = || Error::Invalid(format!("bad parameter `{text}`"));
        match &self.def.params {
            ParamRule::Fixed => Err(Error::Invalid("this case has no parameters".into())),
            ParamRule::Source { .. } => Ok(self.source_param(text.parse().map_err(|_| bad())?)),
            _ => Ok(ParamValue::Scalar(text.parse().map_err(|_| bad())?)),
        }
    }

    pub fn instance(&self, param: ParamValue) -> Result<Instance> {
        let (mesh, metrics) = self.mesh(param.scalar())?;
        let bc_param = match self.def.params {
            ParamRule::BoundaryValue { .. } => param.scalar(),
            _ => None,
        };
        let specs = self.def.bc_specs(bc_param)?;
        let enforcers = specs.iter().map(|s| BoundaryEnforcer::new(s, &metrics)).collect::<Result<Vec<_>>>()?;
        let source = match (&param, &self.basis) {
            (ParamValue::Source { omega, .. }, Some(b)) => Some(gpfield::sample_source(b, omega)?),
            _ => None,
        };
        if self.def.pde == Pde::Poisson && source.is_none() {
            return Err(Error::Invalid("poisson case needs kind = source".into()));
        }
        let input = self.input_field(&mesh, &specs, source.as_deref())?;
        let problem = Problem::new(self.def.pde, metrics, enforcers, self.def.fluid, self.def.weights.clone())?;
        Ok(Instance { param, mesh, specs, problem, input, source })
    }

    fn input_field(&self, mesh: &CurvilinearMesh, specs: &[BCSpec], source: Option<&[f64]>) -> Result<GridField> {
        let g = mesh.grid;
        let mut values = Vec::new();
        for c in &self.def.input {
            match c {
                InputChannel::Coords => {
                    values.push(mesh.x.clone());
                    values.push(mesh.y.clone());
                }
                InputChannel::Interp => {
                    let end = |e: Edge| match specs[0].edge(e) {
                        Condition::Dirichlet(EdgeValues::Uniform(v)) => Ok(*v),
                        _ => Err(Error::Invalid(format!("interp input needs a uniform Dirichlet {} edge", e.name()))),
                    };
                    let (lo, hi) = (end(Edge::Bottom)?, end(Edge::Top)?);
                    let top = (g.n_eta - 1) as f64;
                    values.push(g.sample(|_, eta| {
                        let t = eta / (top * g.d_eta);
                        (1.0 - t) * lo + t * hi
                    }));
                }
                InputChannel::Source => {
                    let f = source.ok_or_else(|| Error::Invalid("source input without a source".into()))?;
                    let s = match &self.def.params {
                        ParamRule::Source { gp, .. } => gp.sigma0,
                        _ => 1.0,
                    };
                    values.push(f.iter().map(|v| v / s).collect());
                }
            }
        }
        let channels = self.def.input_names().into_iter().zip(values).collect();
        GridField::from_channels(g.n_xi, g.n_eta, channels)
    }
}

fn make_mesh(def: &CaseDefinition, s: Option<f64>) -> Result<(CurvilinearMesh, TransformMetrics)> {
    let curves = match &def.mesh {
        MeshSource::Boundary(p) => BoundaryCurves::read(p)?,
        &MeshSource::Annulus { r_in, r_out, n_xi, n_eta } => {
            if !(0.0 < r_in && r_in < r_out) {
                return Err(Error::Invalid(format!("annulus radii {r_in}, {r_out}")));
            }
            meshgen::annulus_boundary(n_xi, n_eta, (0.0, 0.0), r_in, r_out)
        }
        &MeshSource::Vessel { n_xi, n_eta } => {
            let s = s.ok_or_else(|| Error::Invalid("vessel mesh needs the shape parameter s".into()))?;
            VesselGeometry::new(s)?.boundary(n_xi, n_eta)
        }
    };
    let grid = curves.reference_grid()?;
    let opts = MappingOptions { tol: def.mapping_tol, ..MappingOptions::default() };
    let mesh = meshgen::generate_mapping(&curves, &grid, &opts)?;
    let metrics = meshgen::compute_metrics(&mesh)?;
    Ok((mesh, metrics))
}

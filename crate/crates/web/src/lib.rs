//! wasm-bindgen front end for the static demo page in `www/`.
//!
//! Every operation returns a [`Scene`]: mesh node coordinates plus one nodal
//! value per node, ready to be drawn as coloured quads.

use std::cell::OnceCell;

use geopinn::bcpad::{BCSpec, Condition, EdgeValues};
use geopinn::cases::VesselGeometry;
use geopinn::gpfield::{self, GPConfig, KLBasis};
use geopinn::meshgen::{self, annulus_boundary, generate_mapping, BoundaryCurves, MappingOptions};
use geopinn::oracle::{self, OracleOptions};
use geopinn::{CurvilinearMesh, Edge};
use wasm_bindgen::prelude::*;

const WAVY_SQUARE: &str = include_str!("../../core/data/case5.boundary");

#[wasm_bindgen]
pub struct Scene {
    n_xi: usize,
    n_eta: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    values: Vec<f64>,
    note: String,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(getter)]
    pub fn n_xi(&self) -> usize {
        self.n_xi
    }
    #[wasm_bindgen(getter)]
    pub fn n_eta(&self) -> usize {
        self.n_eta
    }
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }
    /// Row-major (ξ fastest) nodal values.
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn note(&self) -> String {
        self.note.clone()
    }
}

impl Scene {
    fn new(mesh: CurvilinearMesh, values: Vec<f64>, note: String) -> Self {
        let g = mesh.grid;
        Self { n_xi: g.n_xi, n_eta: g.n_eta, x: mesh.x, y: mesh.y, values, note }
    }
}

fn js(e: geopinn::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn map(bc: &BoundaryCurves) -> geopinn::Result<(CurvilinearMesh, meshgen::TransformMetrics)> {
    let grid = bc.reference_grid()?;
    let mesh = generate_mapping(bc, &grid, &MappingOptions { tol: 1e-9, ..Default::default() })?;
    let m = meshgen::compute_metrics(&mesh)?;
    Ok((mesh, m))
}

/// Elliptic mesh of the vessel with stenosis (s > 0) or aneurysm (s < 0),
/// coloured by the mapping Jacobian.
#[wasm_bindgen]
pub fn vessel_mesh(s: f64, n_xi: usize, n_eta: usize) -> Result<Scene, JsError> {
    let v = VesselGeometry::new(s).map_err(js)?;
    let (mesh, m) = map(&v.boundary(n_xi, n_eta)).map_err(js)?;
    let jmin = m.jac.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Scene::new(mesh, m.jac, format!("s = {s}, {n_xi}×{n_eta} nodes, min J = {jmin:.3e}")))
}

thread_local! {
    static WAVY: OnceCell<(CurvilinearMesh, KLBasis)> = const { OnceCell::new() };
}

fn wavy() -> geopinn::Result<(CurvilinearMesh, KLBasis)> {
    WAVY.with(|c| {
        if let Some(v) = c.get() {
            return Ok(v.clone());
        }
        let bc = BoundaryCurves::from_text(WAVY_SQUARE, "case5.boundary")?;
        let (mesh, _) = map(&bc)?;
        let cfg = GPConfig::default();
        let basis = gpfield::kl_decompose(&gpfield::build_kernel_matrix(&mesh, &cfg), cfg.k)?;
        Ok(c.get_or_init(|| (mesh, basis)).clone())
    })
}

/// One K-L source field (σ0 = 100, l = 0.5, 10 modes) on the wavy square.
#[wasm_bindgen]
pub fn source_sample(seed: u64) -> Result<Scene, JsError> {
    let (mesh, basis) = wavy().map_err(js)?;
    let f = gpfield::sample_source(&basis, &gpfield::draw_omega(basis.k(), seed)).map_err(js)?;
    Ok(Scene::new(mesh, f, format!("seed {seed}, energy captured {:.4}", basis.energy_fraction)))
}

/// Finite-difference steady heat solution in the annulus r ∈ [0.5, 1] with
/// T = t_in on the inner circle and 0 on the outer one.
#[wasm_bindgen]
pub fn annulus_heat(t_in: f64) -> Result<Scene, JsError> {
    let bc = annulus_boundary(65, 17, (0.0, 0.0), 0.5, 1.0);
    let (mesh, m) = map(&bc).map_err(js)?;
    let d = |v| Condition::Dirichlet(EdgeValues::Uniform(v));
    let spec = BCSpec::new(d(t_in), Condition::Periodic(Edge::Left), d(0.0), Condition::Periodic(Edge::Right));
    let sol = oracle::solve_heat(&mesh, &m, &spec, &OracleOptions::default()).map_err(js)?;
    let note = format!("T_in = {t_in}, {} sweeps", sol.iterations);
    Ok(Scene::new(mesh, sol.field, note))
}

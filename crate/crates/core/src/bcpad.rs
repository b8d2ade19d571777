//! Hard enforcement of boundary conditions on network outputs.
//!
//! Every forward pass overwrites boundary nodes so the conditions hold by
//! construction: Dirichlet nodes take their prescribed values, Neumann nodes
//! are solved from the interior so that the one-sided normal-derivative
//! stencil evaluates exactly to the prescribed flux, and periodic seams mirror
//! their owner column or row.
//!
//! Enforcement is affine in the raw field, so the backward pass is its
//! transpose: Dirichlet nodes pass no gradient, Neumann gradients flow to the
//! interior nodes they are computed from.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};
use crate::grid::{Edge, ReferenceGrid};
use crate::meshgen::TransformMetrics;
use crate::stencil::{derivative_row, Axis};

/// Values along an edge, either one constant or one per edge node.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeValues {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl EdgeValues {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            EdgeValues::Uniform(v) => *v,
            EdgeValues::PerNode(v) => v[k],
        }
    }

    fn check(&self, edge: Edge, grid: &ReferenceGrid) -> Result<()> {
        if let EdgeValues::PerNode(v) = self {
            if v.len() != edge.len(grid) {
                return Err(Error::Boundary(format!(
                    "{} edge: {} values for {} nodes",
                    edge.name(),
                    v.len(),
                    edge.len(grid)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Dirichlet(EdgeValues),
    /// Outward normal derivative.
    Neumann(EdgeValues),
    Periodic(Edge),
    /// Zero normal gradient.
    Outflow,
}

impl Condition {
    fn is_dirichlet(&self) -> bool {
        matches!(self, Condition::Dirichlet(_))
    }
}

/// Boundary conditions of one solution variable, indexed by `Edge as usize`.
#[derive(Debug, Clone, PartialEq)]
pub struct BCSpec {
    pub edges: [Condition; 4],
}

impl BCSpec {
    pub fn new(bottom: Condition, right: Condition, top: Condition, left: Condition) -> Self {
        Self { edges: [bottom, right, top, left] }
    }

    pub fn all_dirichlet(v: f64) -> Self {
        let d = || Condition::Dirichlet(EdgeValues::Uniform(v));
        Self::new(d(), d(), d(), d())
    }

    pub fn edge(&self, e: Edge) -> &Condition {
        &self.edges[e as usize]
    }

    pub fn validate(&self, grid: &ReferenceGrid) -> Result<()> {
        for e in Edge::ALL {
            match self.edge(e) {
                Condition::Dirichlet(v) | Condition::Neumann(v) => v.check(e, grid)?,
                Condition::Periodic(p) => {
                    if *p != e.opposite() || *self.edge(*p) != Condition::Periodic(e) {
                        return Err(Error::Boundary(format!("{} edge: periodic partner must be the opposite edge, declared on both", e.name())));
                    }
                    let axis_periodic = if e.is_eta_edge() { grid.periodic_eta } else { grid.periodic_xi };
                    if !axis_periodic {
                        return Err(Error::Boundary(format!("{} edge is periodic but the mesh is not", e.name())));
                    }
                }
                Condition::Outflow => {}
            }
            let axis_periodic = if e.is_eta_edge() { grid.periodic_eta } else { grid.periodic_xi };
            if axis_periodic && !matches!(self.edge(e), Condition::Periodic(_)) {
                return Err(Error::Boundary(format!("{} edge lies on a periodic seam and must be periodic", e.name())));
            }
        }
        Ok(())
    }
}

/// Which edge's condition governs each boundary node.
fn owning_edge(grid: &ReferenceGrid, spec: &BCSpec, i: usize, j: usize) -> Option<Edge> {
    let xi_edge = if !grid.periodic_xi && i == 0 {
        Some(Edge::Left)
    } else if !grid.periodic_xi && i == grid.n_xi - 1 {
        Some(Edge::Right)
    } else {
        None
    };
    let eta_edge = if !grid.periodic_eta && j == 0 {
        Some(Edge::Bottom)
    } else if !grid.periodic_eta && j == grid.n_eta - 1 {
        Some(Edge::Top)
    } else {
        None
    };
    match (xi_edge, eta_edge) {
        (None, e) | (e, None) => e,
        (Some(a), Some(b)) => {
            // Corner: a lone Dirichlet edge wins, otherwise the η-edge.
            if spec.edge(a).is_dirichlet() && !spec.edge(b).is_dirichlet() {
                Some(a)
            } else {
                Some(b)
            }
        }
    }
}

/// Position of node (i, j) along an edge.
fn edge_pos(e: Edge, i: usize, j: usize) -> usize {
    if e.is_eta_edge() {
        i
    } else {
        j
    }
}

/// Outward unit normal of `edge` at flat node `k`, from the inverse metrics.
fn outward_normal(m: &TransformMetrics, edge: Edge, k: usize) -> Option<(f64, f64)> {
    let (gx, gy, sign) = match edge {
        Edge::Bottom => (m.eta_x[k], m.eta_y[k], -1.0),
        Edge::Top => (m.eta_x[k], m.eta_y[k], 1.0),
        Edge::Left => (m.xi_x[k], m.xi_y[k], -1.0),
        Edge::Right => (m.xi_x[k], m.xi_y[k], 1.0),
    };
    let norm = gx.hypot(gy);
    (norm > 0.0 && norm.is_finite()).then(|| (sign * gx / norm, sign * gy / norm))
}

/// Sparse row of the physical outward-normal derivative at (i, j).
pub fn normal_derivative_row(m: &TransformMetrics, edge: Edge, i: usize, j: usize) -> Result<Vec<(usize, f64)>> {
    let grid = &m.grid;
    let k = grid.idx(i, j);
    let (nx, ny) = outward_normal(m, edge, k).ok_or(Error::DegenerateNormal { i, j })?;
    let c_xi = nx * m.xi_x[k] + ny * m.xi_y[k];
    let c_eta = nx * m.eta_x[k] + ny * m.eta_y[k];
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(8);
    for (idx, w) in derivative_row(grid, Axis::Xi, i, j) {
        row.push((idx, c_xi * w));
    }
    for (idx, w) in derivative_row(grid, Axis::Eta, i, j) {
        row.push((idx, c_eta * w));
    }
    row.sort_by_key(|e| e.0);
    row.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    Ok(row)
}

/// Jointly solved block of Neumann boundary nodes.
#[derive(Debug, Clone)]
struct NeumannBlock {
    unknowns: Vec<usize>,
    flux: Vec<f64>,
    /// Per equation, the full normal-derivative row.
    rows: Vec<Vec<(usize, f64)>>,
    /// Per equation, coefficients on nodes outside the block.
    known: Vec<Vec<(usize, f64)>>,
    matrix: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl NeumannBlock {
    fn build(m: &TransformMetrics, nodes: Vec<(usize, usize, Edge, f64)>) -> Result<Self> {
        let grid = &m.grid;
        let unknowns: Vec<usize> = nodes.iter().map(|&(i, j, _, _)| grid.idx(i, j)).collect();
        let pos: std::collections::HashMap<usize, usize> = unknowns.iter().enumerate().map(|(a, &b)| (b, a)).collect();
        let n = unknowns.len();
        let mut matrix = DMatrix::zeros(n, n);
        let mut rows = Vec::with_capacity(n);
        let mut known = Vec::with_capacity(n);
        for (r, &(i, j, e, _)) in nodes.iter().enumerate() {
            let row = normal_derivative_row(m, e, i, j)?;
            let mut kn = Vec::new();
            for &(idx, c) in &row {
                match pos.get(&idx) {
                    Some(&col) => matrix[(r, col)] += c,
                    None => kn.push((idx, c)),
                }
            }
            rows.push(row);
            known.push(kn);
        }
        let lu = matrix.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Boundary("singular Neumann system (degenerate wall normals)".into()));
        }
        let lu_t = matrix.transpose().lu();
        let flux = nodes.iter().map(|n| n.3).collect();
        Ok(Self { unknowns, flux, rows, known, matrix, lu, lu_t })
    }

    fn apply(&self, out: &mut [f64]) {
        let n = self.unknowns.len();
        let rhs = DVector::from_iterator(
            n,
            (0..n).map(|r| self.flux[r] - self.known[r].iter().map(|&(idx, c)| c * out[idx]).sum::<f64>()),
        );
        let mut sol = self.lu.solve(&rhs).expect("invertible");
        // One step of iterative refinement keeps the flux residual at rounding level.
        let resid = &rhs - &self.matrix * &sol;
        sol += self.lu.solve(&resid).expect("invertible");
        for (r, &idx) in self.unknowns.iter().enumerate() {
            out[idx] = sol[r];
        }
    }

    fn adjoint(&self, g: &mut [f64]) {
        let n = self.unknowns.len();
        let gu = DVector::from_iterator(n, self.unknowns.iter().map(|&idx| g[idx]));
        let z = self.lu_t.solve(&gu).expect("invertible");
        for &idx in &self.unknowns {
            g[idx] = 0.0;
        }
        for r in 0..n {
            for &(idx, c) in &self.known[r] {
                g[idx] -= c * z[r];
            }
        }
    }

    fn max_residual(&self, f: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.flux)
            .map(|(row, q)| (row.iter().map(|&(idx, c)| c * f[idx]).sum::<f64>() - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Precomputed enforcement of one variable's conditions on one mesh.
#[derive(Debug, Clone)]
pub struct BoundaryEnforcer {
    grid: ReferenceGrid,
    mirrors: Vec<(usize, usize)>,
    dirichlet: Vec<(usize, f64)>,
    neumann: Option<NeumannBlock>,
}

impl BoundaryEnforcer {
    pub fn new(spec: &BCSpec, metrics: &TransformMetrics) -> Result<Self> {
        let grid = metrics.grid;
        spec.validate(&grid)?;
        let mut mirrors = Vec::new();
        let mut dirichlet = Vec::new();
        let mut neumann_nodes = Vec::new();
        for j in 0..grid.n_eta {
            for i in 0..grid.n_xi {
                let k = grid.idx(i, j);
                if grid.is_mirror(i, j) {
                    let (oi, oj) = grid.owner(i, j);
                    mirrors.push((k, grid.idx(oi, oj)));
                    continue;
                }
                let Some(e) = owning_edge(&grid, spec, i, j) else { continue };
                let p = edge_pos(e, i, j);
                match spec.edge(e) {
                    Condition::Dirichlet(v) => dirichlet.push((k, v.at(p))),
                    Condition::Neumann(v) => neumann_nodes.push((i, j, e, v.at(p))),
                    Condition::Outflow => neumann_nodes.push((i, j, e, 0.0)),
                    Condition::Periodic(_) => unreachable!("periodic edges own no nodes"),
                }
            }
        }
        let neumann = if neumann_nodes.is_empty() { None } else { Some(NeumannBlock::build(metrics, neumann_nodes)?) };
        Ok(Self { grid, mirrors, dirichlet, neumann })
    }

    pub fn grid(&self) -> &ReferenceGrid {
        &self.grid
    }

    /// Enforced field from a raw network output.
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = raw.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, out: &mut [f64]) {
        for &(k, v) in &self.dirichlet {
            out[k] = v;
        }
        if let Some(nb) = &self.neumann {
            nb.apply(out);
        }
        for &(m, o) in &self.mirrors {
            out[m] = out[o];
        }
    }

    /// Gradient with respect to the raw field, given the gradient with
    /// respect to the enforced field.
    pub fn adjoint(&self, grad: &[f64]) -> Vec<f64> {
        let mut g = grad.to_vec();
        for &(m, o) in &self.mirrors {
            g[o] += g[m];
            g[m] = 0.0;
        }
        if let Some(nb) = &self.neumann {
            nb.adjoint(&mut g);
        }
        for &(k, _) in &self.dirichlet {
            g[k] = 0.0;
        }
        g
    }

    /// Dirichlet nodes and their exact values.
    pub fn dirichlet_nodes(&self) -> &[(usize, f64)] {
        &self.dirichlet
    }

    /// Max |∂f/∂n − flux| over Neumann-owned nodes (0 if there are none).
    pub fn neumann_residual(&self, f: &[f64]) -> f64 {
        self.neumann.as_ref().map_or(0.0, |nb| nb.max_residual(f))
    }

    pub fn has_neumann(&self) -> bool {
        self.neumann.is_some()
    }
}

/// Overwrite one edge with prescribed values.
pub fn apply_dirichlet(grid: &ReferenceGrid, f: &[f64], edge: Edge, values: &[f64]) -> Result<Vec<f64>> {
    grid.check_len("field", f.len())?;
    if values.len() != edge.len(grid) {
        return Err(Error::Boundary(format!(
            "{} edge: {} values for {} nodes",
            edge.name(),
            values.len(),
            edge.len(grid)
        )));
    }
    let mut out = f.to_vec();
    for (k, &v) in values.iter().enumerate() {
        let (i, j) = edge.node(grid, k);
        out[grid.idx(i, j)] = v;
    }
    Ok(out)
}

/// Set one edge so its outward normal derivative equals `flux` at every node
/// of the edge, holding all other nodes fixed.
pub fn apply_neumann(m: &TransformMetrics, f: &[f64], edge: Edge, flux: &[f64]) -> Result<Vec<f64>> {
    let grid = &m.grid;
    grid.check_len("field", f.len())?;
    if flux.len() != edge.len(grid) {
        return Err(Error::Boundary(format!("{} edge: {} flux values for {} nodes", edge.name(), flux.len(), edge.len(grid))));
    }
    let nodes: Vec<_> = (0..edge.len(grid))
        .filter_map(|k| {
            let (i, j) = edge.node(grid, k);
            (!grid.is_mirror(i, j)).then_some((i, j, edge, flux[k]))
        })
        .collect();
    let block = NeumannBlock::build(m, nodes)?;
    let mut out = f.to_vec();
    block.apply(&mut out);
    for j in 0..grid.n_eta {
        for i in 0..grid.n_xi {
            if grid.is_mirror(i, j) {
                let (oi, oj) = grid.owner(i, j);
                out[grid.idx(i, j)] = out[grid.idx(oi, oj)];
            }
        }
    }
    Ok(out)
}

/// Copy a periodic seam's owner values onto its duplicate edge.
pub fn apply_periodic(grid: &ReferenceGrid, f: &[f64], pair: (Edge, Edge)) -> Result<Vec<f64>> {
    grid.check_len("field", f.len())?;
    let (a, b) = pair;
    let axis_periodic = if a.is_eta_edge() { grid.periodic_eta } else { grid.periodic_xi };
    if a.opposite() != b || !axis_periodic {
        return Err(Error::Boundary(format!("{} and {} are not a periodic pair of this mesh", a.name(), b.name())));
    }
    let mut out = f.to_vec();
    let owner = if a.is_eta_edge() { Edge::Bottom } else { Edge::Left };
    for k in 0..owner.len(grid) {
        let (i, j) = owner.node(grid, k);
        let (mi, mj) = owner.opposite().node(grid, k);
        out[grid.idx(mi, mj)] = out[grid.idx(i, j)];
    }
    Ok(out)
}

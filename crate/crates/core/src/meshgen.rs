//! Elliptic structured-grid generation.
//!
//! The forward map from the reference rectangle to the physical domain is
//! found by solving the quasi-linear system
//!
//! ```text
//! α x_ξξ − 2β x_ξη + γ x_ηη = 0,   α = x_η² + y_η²
//! α y_ξξ − 2β y_ξη + γ y_ηη = 0,   β = x_ξ x_η + y_ξ y_η
//!                                  γ = x_ξ² + y_ξ²
//! ```
//!
//! with the boundary curves as Dirichlet data. Interior nodes start from a
//! transfinite blend of the four edges and are relaxed by point Gauss-Seidel
//! (optionally over-relaxed) with α, β, γ frozen for each sweep.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Edge, ReferenceGrid};
use crate::stencil;

pub type Point = (f64, f64);

/// How the four edges are glued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    SimplyConnected,
    /// The two (opposite) edges are the same cut line of a doubly-connected
    /// domain; the mapping wraps across them.
    PeriodicPair(Edge, Edge),
}

/// Physical boundary polylines, one per reference edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurves {
    /// Indexed by `Edge as usize`.
    pub edges: [Vec<Point>; 4],
    pub topology: Topology,
}

impl BoundaryCurves {
    pub fn new(edges: [Vec<Point>; 4]) -> Self {
        Self { edges, topology: Topology::SimplyConnected }
    }

    pub fn edge(&self, e: Edge) -> &[Point] {
        &self.edges[e as usize]
    }

    pub fn with_periodic(mut self, a: Edge, b: Edge) -> Self {
        self.topology = Topology::PeriodicPair(a, b);
        self
    }

    /// Build from four parametric curves sampled uniformly in arc length.
    /// Each curve maps t ∈ [0, 1] to a point, in increasing-reference order.
    pub fn from_curves(
        n_xi: usize,
        n_eta: usize,
        bottom: impl Fn(f64) -> Point,
        right: impl Fn(f64) -> Point,
        top: impl Fn(f64) -> Point,
        left: impl Fn(f64) -> Point,
    ) -> Self {
        let mut b = Self::new([
            sample_arclength(&bottom, n_xi),
            sample_arclength(&right, n_eta),
            sample_arclength(&top, n_xi),
            sample_arclength(&left, n_eta),
        ]);
        b.snap_corners();
        b
    }

    /// Force shared corner points to be bitwise identical (bottom/top own them).
    pub fn snap_corners(&mut self) {
        let b0 = self.edges[0][0];
        let bl = *self.edges[0].last().unwrap();
        let t0 = self.edges[2][0];
        let tl = *self.edges[2].last().unwrap();
        self.edges[3][0] = b0;
        self.edges[1][0] = bl;
        *self.edges[3].last_mut().unwrap() = t0;
        *self.edges[1].last_mut().unwrap() = tl;
    }

    /// The reference grid implied by the edge lengths and topology.
    pub fn reference_grid(&self) -> Result<ReferenceGrid> {
        let g = ReferenceGrid::new(self.edges[0].len(), self.edges[3].len())?;
        Ok(match self.topology {
            Topology::SimplyConnected => g,
            Topology::PeriodicPair(a, _) if a.is_eta_edge() => g.periodic_in_eta(true),
            Topology::PeriodicPair(..) => g.periodic_in_xi(true),
        })
    }

    pub fn validate(&self, grid: &ReferenceGrid) -> Result<()> {
        for e in Edge::ALL {
            let want = e.len(grid);
            let got = self.edge(e).len();
            if got != want {
                return Err(Error::Invalid(format!("{} edge has {got} points, expected {want}", e.name())));
            }
            if self.edge(e).iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                return Err(Error::Invalid(format!("{} edge has non-finite coordinates", e.name())));
            }
        }
        let corners = [
            (Edge::Bottom, 0, Edge::Left, 0),
            (Edge::Bottom, grid.n_xi - 1, Edge::Right, 0),
            (Edge::Top, 0, Edge::Left, grid.n_eta - 1),
            (Edge::Top, grid.n_xi - 1, Edge::Right, grid.n_eta - 1),
        ];
        for (a, ka, b, kb) in corners {
            if self.edge(a)[ka] != self.edge(b)[kb] {
                return Err(Error::Invalid(format!(
                    "corner mismatch between {} and {} edges: {:?} vs {:?}",
                    a.name(),
                    b.name(),
                    self.edge(a)[ka],
                    self.edge(b)[kb]
                )));
            }
        }
        if let Topology::PeriodicPair(a, b) = self.topology {
            if a.opposite() != b {
                return Err(Error::Invalid(format!("periodic edges {} and {} are not opposite", a.name(), b.name())));
            }
            if self.edge(a) != self.edge(b) {
                return Err(Error::Invalid(format!(
                    "periodic edges {} and {} must carry identical points",
                    a.name(),
                    b.name()
                )));
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_string(), line, msg };
        let mut edges: [Option<Vec<Point>>; 4] = Default::default();
        let mut periodic = None;
        let mut current: Option<(usize, usize, usize)> = None; // (edge, expected, header line)
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "edge" => {
                    if let Some((e, want, hl)) = current {
                        let got = edges[e].as_ref().map_or(0, |v| v.len());
                        if got != want {
                            return Err(perr(hl, format!("edge {e} declares {want} points but has {got}")));
                        }
                    }
                    if toks.len() != 3 {
                        return Err(perr(ln, "expected `edge <index> <n_points>`".into()));
                    }
                    let e: usize = toks[1].parse().map_err(|_| perr(ln, format!("bad edge index `{}`", toks[1])))?;
                    if e > 3 {
                        return Err(perr(ln, format!("edge index {e} out of range 0..=3")));
                    }
                    if edges[e].is_some() {
                        return Err(perr(ln, format!("edge {e} given twice")));
                    }
                    let n: usize = toks[2].parse().map_err(|_| perr(ln, format!("bad point count `{}`", toks[2])))?;
                    edges[e] = Some(Vec::with_capacity(n));
                    current = Some((e, n, ln));
                }
                "periodic" => {
                    if toks.len() != 3 {
                        return Err(perr(ln, "expected `periodic <i> <j>`".into()));
                    }
                    let parse_edge = |t: &str| {
                        t.parse::<usize>().ok().and_then(Edge::from_index).ok_or_else(|| perr(ln, format!("bad edge `{t}`")))
                    };
                    periodic = Some((parse_edge(toks[1])?, parse_edge(toks[2])?));
                }
                _ => {
                    let Some((e, want, _)) = current else {
                        return Err(perr(ln, "coordinates before any `edge` header".into()));
                    };
                    if toks.len() != 2 {
                        return Err(perr(ln, "expected `x y`".into()));
                    }
                    let x: f64 = toks[0].parse().map_err(|_| perr(ln, format!("bad number `{}`", toks[0])))?;
                    let y: f64 = toks[1].parse().map_err(|_| perr(ln, format!("bad number `{}`", toks[1])))?;
                    let pts = edges[e].as_mut().unwrap();
                    if pts.len() == want {
                        return Err(perr(ln, format!("edge {e} has more than {want} points")));
                    }
                    pts.push((x, y));
                }
            }
        }
        if let Some((e, want, hl)) = current {
            let got = edges[e].as_ref().map_or(0, |v| v.len());
            if got != want {
                return Err(perr(hl, format!("edge {e} declares {want} points but has {got}")));
            }
        }
        let [b, r, t, l] = edges;
        let missing = |k: usize| perr(0, format!("edge {k} missing"));
        let mut curves = BoundaryCurves::new([
            b.ok_or_else(|| missing(0))?,
            r.ok_or_else(|| missing(1))?,
            t.ok_or_else(|| missing(2))?,
            l.ok_or_else(|| missing(3))?,
        ]);
        if let Some((a, bb)) = periodic {
            curves = curves.with_periodic(a, bb);
        }
        Ok(curves)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Topology::PeriodicPair(a, b) = self.topology {
            let _ = writeln!(s, "periodic {} {}", a as usize, b as usize);
        }
        for e in Edge::ALL {
            let pts = self.edge(e);
            let _ = writeln!(s, "edge {} {}", e as usize, pts.len());
            for (x, y) in pts {
                let _ = writeln!(s, "{x} {y}");
            }
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Sample a parametric curve at `n` points equally spaced in arc length.
pub fn sample_arclength(curve: &impl Fn(f64) -> Point, n: usize) -> Vec<Point> {
    const FINE: usize = 4096;
    let fine: Vec<Point> = (0..=FINE).map(|k| curve(k as f64 / FINE as f64)).collect();
    let mut cum = vec![0.0; FINE + 1];
    for k in 1..=FINE {
        cum[k] = cum[k - 1] + (fine[k].0 - fine[k - 1].0).hypot(fine[k].1 - fine[k - 1].1);
    }
    let total = cum[FINE];
    if total == 0.0 || n < 2 {
        return vec![fine[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for m in 0..n {
        if m == 0 {
            out.push(fine[0]);
            continue;
        }
        if m == n - 1 {
            out.push(fine[FINE]);
            continue;
        }
        let target = total * m as f64 / (n - 1) as f64;
        while cum[seg + 1] < target {
            seg += 1;
        }
        // Refine inside the segment by bisection on the true curve parameter.
        let (mut lo, mut hi) = (seg as f64 / FINE as f64, (seg + 1) as f64 / FINE as f64);
        let (base, p0) = (cum[seg], fine[seg]);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let q = curve(mid);
            if base + (q.0 - p0.0).hypot(q.1 - p0.1) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(curve(0.5 * (lo + hi)));
    }
    out
}

/// Physical node coordinates on the reference lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvilinearMesh {
    pub grid: ReferenceGrid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl CurvilinearMesh {
    /// Mesh directly from a coordinate function of (ξ, η).
    pub fn from_fn(grid: ReferenceGrid, f: impl Fn(f64, f64) -> Point) -> Self {
        let pts: Vec<Point> = {
            let mut v = Vec::with_capacity(grid.len());
            for j in 0..grid.n_eta {
                for i in 0..grid.n_xi {
                    v.push(f(grid.xi(i), grid.eta(j)));
                }
            }
            v
        };
        Self { grid, x: pts.iter().map(|p| p.0).collect(), y: pts.iter().map(|p| p.1).collect() }
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        let k = self.grid.idx(i, j);
        (self.x[k], self.y[k])
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("mesh {} {}\n", self.grid.n_xi, self.grid.n_eta);
        if self.grid.periodic_xi {
            s.push_str("periodic xi\n");
        }
        if self.grid.periodic_eta {
            s.push_str("periodic eta\n");
        }
        if self.grid.d_xi != 1.0 || self.grid.d_eta != 1.0 {
            let _ = writeln!(s, "spacing {} {}", self.grid.d_xi, self.grid.d_eta);
        }
        for k in 0..self.grid.len() {
            let _ = writeln!(s, "{} {}", self.x[k], self.y[k]);
        }
        s
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_string(), line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 3 || toks[0] != "mesh" {
            return Err(perr(hl + 1, "expected `mesh <n_xi> <n_eta>`".into()));
        }
        let n_xi: usize = toks[1].parse().map_err(|_| perr(hl + 1, "bad n_xi".into()))?;
        let n_eta: usize = toks[2].parse().map_err(|_| perr(hl + 1, "bad n_eta".into()))?;
        let mut grid = ReferenceGrid::new(n_xi, n_eta)?;
        let mut x = Vec::with_capacity(grid.len());
        let mut y = Vec::with_capacity(grid.len());
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["periodic", "xi"] => grid = grid.periodic_in_xi(true),
                ["periodic", "eta"] => grid = grid.periodic_in_eta(true),
                ["spacing", a, b] => {
                    let d_xi: f64 = a.parse().map_err(|_| perr(ln + 1, "bad spacing".into()))?;
                    let d_eta: f64 = b.parse().map_err(|_| perr(ln + 1, "bad spacing".into()))?;
                    grid = ReferenceGrid { d_xi, d_eta, ..ReferenceGrid::with_spacing(n_xi, n_eta, d_xi, d_eta)? }
                        .periodic_in_xi(grid.periodic_xi)
                        .periodic_in_eta(grid.periodic_eta);
                }
                [a, b] => {
                    x.push(a.parse().map_err(|_| perr(ln + 1, format!("bad number `{a}`")))?);
                    y.push(b.parse().map_err(|_| perr(ln + 1, format!("bad number `{b}`")))?);
                }
                _ => return Err(perr(ln + 1, "expected `x y`".into())),
            }
        }
        grid.check_len("mesh nodes", x.len())?;
        Ok(Self { grid, x, y })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Mapping derivatives and their inverse-transform coefficients at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMetrics {
    pub grid: ReferenceGrid,
    pub dx_dxi: Vec<f64>,
    pub dx_deta: Vec<f64>,
    pub dy_dxi: Vec<f64>,
    pub dy_deta: Vec<f64>,
    pub jac: Vec<f64>,
    /// ∂ξ/∂x = y_η / J
    pub xi_x: Vec<f64>,
    /// ∂η/∂x = −y_ξ / J
    pub eta_x: Vec<f64>,
    /// ∂ξ/∂y = −x_η / J
    pub xi_y: Vec<f64>,
    /// ∂η/∂y = x_ξ / J
    pub eta_y: Vec<f64>,
}

/// Default J floor, relative to the median |J|.
pub const JAC_FLOOR_REL: f64 = 1e-12;

/// Metric terms of `mesh` from the reference derivative stencils.
pub fn compute_metrics(mesh: &CurvilinearMesh) -> Result<TransformMetrics> {
    let grid = mesh.grid;
    let dx_dxi = stencil::d_dxi(&grid, &mesh.x)?;
    let dx_deta = stencil::d_deta(&grid, &mesh.x)?;
    let dy_dxi = stencil::d_dxi(&grid, &mesh.y)?;
    let dy_deta = stencil::d_deta(&grid, &mesh.y)?;
    let jac: Vec<f64> = (0..grid.len()).map(|k| dx_dxi[k] * dy_deta[k] - dx_deta[k] * dy_dxi[k]).collect();

    check_jacobian(&grid, &jac)?;

    let xi_x = (0..grid.len()).map(|k| dy_deta[k] / jac[k]).collect();
    let eta_x = (0..grid.len()).map(|k| -dy_dxi[k] / jac[k]).collect();
    let xi_y = (0..grid.len()).map(|k| -dx_deta[k] / jac[k]).collect();
    let eta_y = (0..grid.len()).map(|k| dx_dxi[k] / jac[k]).collect();
    Ok(TransformMetrics { grid, dx_dxi, dx_deta, dy_dxi, dy_deta, jac, xi_x, eta_x, xi_y, eta_y })
}

fn check_jacobian(grid: &ReferenceGrid, jac: &[f64]) -> Result<()> {
    let mut mags: Vec<f64> = jac.iter().map(|j| j.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let floor = JAC_FLOOR_REL * mags[mags.len() / 2];
    let sign = jac[0].signum();
    for j in 0..grid.n_eta {
        for i in 0..grid.n_xi {
            let v = jac[grid.idx(i, j)];
            if !v.is_finite() || v.abs() <= floor {
                return Err(Error::JacobianFloor { i, j, jac: v, floor });
            }
            if v.signum() != sign {
                return Err(Error::FoldedMesh { i, j });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct MappingOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relaxation factor of the Gauss-Seidel sweep.
    pub sor: f64,
}

impl Default for MappingOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000, sor: 1.0 }
    }
}

/// Convergence report of a mapping solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingStats {
    pub iterations: usize,
    /// Max nodal residual, measured as the Jacobi correction of one node.
    pub residual: f64,
}

/// Solve the elliptic mapping for the given boundary curves.
pub fn generate_mapping(bc: &BoundaryCurves, grid: &ReferenceGrid, opts: &MappingOptions) -> Result<CurvilinearMesh> {
    generate_mapping_with_stats(bc, grid, opts).map(|(m, _)| m)
}

pub fn generate_mapping_with_stats(
    bc: &BoundaryCurves,
    grid: &ReferenceGrid,
    opts: &MappingOptions,
) -> Result<(CurvilinearMesh, MappingStats)> {
    if !(opts.tol > 0.0) {
        return Err(Error::Invalid(format!("mapping tolerance must be positive, got {}", opts.tol)));
    }
    if !(opts.sor > 0.0 && opts.sor < 2.0) {
        return Err(Error::Invalid(format!("SOR factor must lie in (0, 2), got {}", opts.sor)));
    }
    let topo_grid = bc.reference_grid()?;
    let grid = ReferenceGrid {
        periodic_xi: topo_grid.periodic_xi,
        periodic_eta: topo_grid.periodic_eta,
        ..*grid
    };
    bc.validate(&grid)?;

    let mut mesh = transfinite(bc, &grid);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let nodes = updatable_nodes(&grid);
    let mut coef = vec![(0.0, 0.0, 0.0); nodes.len()];

    while iterations <= opts.max_iter {
        for (c, &(i, j)) in coef.iter_mut().zip(&nodes) {
            *c = mapping_coefficients(&mesh, i, j);
        }
        residual = nodes
            .iter()
            .zip(&coef)
            .map(|(&(i, j), &c)| {
                let (cx, cy) = jacobi_update(&mesh, i, j, c);
                let (x, y) = mesh.point(i, j);
                (cx - x).abs().max((cy - y).abs())
            })
            .fold(0.0, f64::max);
        if residual <= opts.tol || iterations == opts.max_iter {
            break;
        }
        for (&(i, j), &c) in nodes.iter().zip(&coef) {
            let (nx, ny) = jacobi_update(&mesh, i, j, c);
            let k = grid.idx(i, j);
            mesh.x[k] += opts.sor * (nx - mesh.x[k]);
            mesh.y[k] += opts.sor * (ny - mesh.y[k]);
            sync_mirror(&mut mesh, i, j);
        }
        iterations += 1;
    }

    // Folds take precedence over slow convergence in the diagnostics.
    compute_metrics(&mesh)?;
    if residual > opts.tol {
        return Err(Error::NoConvergence { iterations, residual, tol: opts.tol });
    }
    Ok((mesh, MappingStats { iterations, residual }))
}

fn updatable_nodes(grid: &ReferenceGrid) -> Vec<(usize, usize)> {
    let (i0, i1) = if grid.periodic_xi { (0, grid.n_xi - 1) } else { (1, grid.n_xi - 1) };
    let (j0, j1) = if grid.periodic_eta { (0, grid.n_eta - 1) } else { (1, grid.n_eta - 1) };
    let mut v = Vec::new();
    for j in j0..j1 {
        for i in i0..i1 {
            v.push((i, j));
        }
    }
    v
}

fn sync_mirror(mesh: &mut CurvilinearMesh, i: usize, j: usize) {
    let g = mesh.grid;
    let k = g.idx(i, j);
    let (x, y) = (mesh.x[k], mesh.y[k]);
    if g.periodic_xi && i == 0 {
        let m = g.idx(g.n_xi - 1, j);
        mesh.x[m] = x;
        mesh.y[m] = y;
    }
    if g.periodic_eta && j == 0 {
        let m = g.idx(i, g.n_eta - 1);
        mesh.x[m] = x;
        mesh.y[m] = y;
    }
    if g.periodic_xi && g.periodic_eta && i == 0 && j == 0 {
        let m = g.idx(g.n_xi - 1, g.n_eta - 1);
        mesh.x[m] = x;
        mesh.y[m] = y;
    }
}

/// Neighbour lookup with wrap-around on periodic axes.
#[inline]
fn nb(grid: &ReferenceGrid, i: usize, j: usize, di: isize, dj: isize) -> usize {
    let wrap = |k: usize, d: isize, n: usize, periodic: bool| -> usize {
        if periodic {
            (k as isize + d).rem_euclid(n as isize - 1) as usize
        } else {
            (k as isize + d) as usize
        }
    };
    grid.idx(wrap(i, di, grid.n_xi, grid.periodic_xi), wrap(j, dj, grid.n_eta, grid.periodic_eta))
}

/// (α, β, γ) at an interior node from second-order central differences.
fn mapping_coefficients(mesh: &CurvilinearMesh, i: usize, j: usize) -> (f64, f64, f64) {
    let g = &mesh.grid;
    let (e, w, n, s) = (nb(g, i, j, 1, 0), nb(g, i, j, -1, 0), nb(g, i, j, 0, 1), nb(g, i, j, 0, -1));
    let x_xi = (mesh.x[e] - mesh.x[w]) / (2.0 * g.d_xi);
    let y_xi = (mesh.y[e] - mesh.y[w]) / (2.0 * g.d_xi);
    let x_eta = (mesh.x[n] - mesh.x[s]) / (2.0 * g.d_eta);
    let y_eta = (mesh.y[n] - mesh.y[s]) / (2.0 * g.d_eta);
    (x_eta * x_eta + y_eta * y_eta, x_xi * x_eta + y_xi * y_eta, x_xi * x_xi + y_xi * y_xi)
}

/// Value at (i, j) that zeroes the discrete equations given the neighbours.
fn jacobi_update(mesh: &CurvilinearMesh, i: usize, j: usize, (alpha, beta, gamma): (f64, f64, f64)) -> Point {
    let g = &mesh.grid;
    let ax = alpha / (g.d_xi * g.d_xi);
    let gy = gamma / (g.d_eta * g.d_eta);
    let bc = 2.0 * beta / (4.0 * g.d_xi * g.d_eta);
    let (e, w, n, s) = (nb(g, i, j, 1, 0), nb(g, i, j, -1, 0), nb(g, i, j, 0, 1), nb(g, i, j, 0, -1));
    let (ne, nw, se, sw) = (nb(g, i, j, 1, 1), nb(g, i, j, -1, 1), nb(g, i, j, 1, -1), nb(g, i, j, -1, -1));
    let diag = 2.0 * (ax + gy);
    let solve = |f: &[f64]| {
        (ax * (f[e] + f[w]) + gy * (f[n] + f[s]) - bc * (f[ne] - f[se] - f[nw] + f[sw])) / diag
    };
    (solve(&mesh.x), solve(&mesh.y))
}

/// Transfinite (bilinear Coons) blend of the four boundary curves.
pub fn transfinite(bc: &BoundaryCurves, grid: &ReferenceGrid) -> CurvilinearMesh {
    let (nx, ny) = (grid.n_xi, grid.n_eta);
    let (b, r, t, l) = (bc.edge(Edge::Bottom), bc.edge(Edge::Right), bc.edge(Edge::Top), bc.edge(Edge::Left));
    let mut x = vec![0.0; grid.len()];
    let mut y = vec![0.0; grid.len()];
    for j in 0..ny {
        let v = j as f64 / (ny - 1) as f64;
        for i in 0..nx {
            let u = i as f64 / (nx - 1) as f64;
            let k = grid.idx(i, j);
            let blend = |c: fn(&Point) -> f64| {
                (1.0 - v) * c(&b[i]) + v * c(&t[i]) + (1.0 - u) * c(&l[j]) + u * c(&r[j])
                    - (1.0 - u) * (1.0 - v) * c(&b[0])
                    - u * (1.0 - v) * c(&b[nx - 1])
                    - (1.0 - u) * v * c(&t[0])
                    - u * v * c(&t[nx - 1])
            };
            x[k] = blend(|p| p.0);
            y[k] = blend(|p| p.1);
        }
    }
    // Boundary nodes carry the input bitwise.
    for e in Edge::ALL {
        for (m, p) in bc.edge(e).iter().enumerate() {
            let (i, j) = e.node(grid, m);
            let k = grid.idx(i, j);
            x[k] = p.0;
            y[k] = p.1;
        }
    }
    CurvilinearMesh { grid: *grid, x, y }
}

/// Max nodal residual of the discretized mapping equations, normalized as a
/// Jacobi correction (length units).
pub fn mapping_residual(mesh: &CurvilinearMesh) -> f64 {
    updatable_nodes(&mesh.grid)
        .into_iter()
        .map(|(i, j)| {
            let c = mapping_coefficients(mesh, i, j);
            let (cx, cy) = jacobi_update(mesh, i, j, c);
            let (x, y) = mesh.point(i, j);
            (cx - x).abs().max((cy - y).abs())
        })
        .fold(0.0, f64::max)
}

/// RMS of ∇²ξ and ∇²η over non-boundary nodes. Both vanish for an exact
/// elliptic mapping, so their size measures the discrete inverse-map error.
pub fn verify_inverse_laplacian(_mesh: &CurvilinearMesh, metrics: &TransformMetrics) -> Result<(f64, f64)> {
    let grid = metrics.grid;
    // The first derivative of ξ (or η) is exact for every stencil: ∇ξ equals
    // the inverse metrics, which also holds across a periodic seam.
    let mut lap_xi = stencil::d_dx(metrics, &metrics.xi_x)?;
    for (a, b) in lap_xi.iter_mut().zip(stencil::d_dy(metrics, &metrics.xi_y)?) {
        *a += b;
    }
    let mut lap_eta = stencil::d_dx(metrics, &metrics.eta_x)?;
    for (a, b) in lap_eta.iter_mut().zip(stencil::d_dy(metrics, &metrics.eta_y)?) {
        *a += b;
    }
    let mask = grid.loss_mask();
    let rms = |v: &[f64]| {
        let (s, n) = v.iter().zip(&mask).filter(|(_, &m)| m).fold((0.0, 0usize), |(s, n), (x, _)| (s + x * x, n + 1));
        (s / n.max(1) as f64).sqrt()
    };
    Ok((rms(&lap_xi), rms(&lap_eta)))
}

/// Boundary curves of a straight-sided quadrilateral, uniformly sampled.
pub fn quad_boundary(n_xi: usize, n_eta: usize, corners: [Point; 4]) -> BoundaryCurves {
    // corners: bottom-left, bottom-right, top-right, top-left
    let [p00, p10, p11, p01] = corners;
    let lerp = |a: Point, b: Point, t: f64| (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
    let line = |a: Point, b: Point, n: usize| -> Vec<Point> {
        (0..n).map(|k| lerp(a, b, k as f64 / (n - 1) as f64)).collect()
    };
    BoundaryCurves::new([line(p00, p10, n_xi), line(p10, p11, n_eta), line(p01, p11, n_xi), line(p00, p01, n_eta)])
}

/// Annulus cut along the positive x axis; ξ runs counter-clockwise, η from
/// the inner to the outer circle.
pub fn annulus_boundary(n_xi: usize, n_eta: usize, center: Point, r_in: f64, r_out: f64) -> BoundaryCurves {
    let circle = |r: f64| -> Vec<Point> {
        (0..n_xi)
            .map(|k| {
                if k == n_xi - 1 {
                    (center.0 + r, center.1)
                } else {
                    let th = std::f64::consts::TAU * k as f64 / (n_xi - 1) as f64;
                    (center.0 + r * th.cos(), center.1 + r * th.sin())
                }
            })
            .collect()
    };
    let cut: Vec<Point> =
        (0..n_eta).map(|k| (center.0 + r_in + (r_out - r_in) * k as f64 / (n_eta - 1) as f64, center.1)).collect();
    let mut b = BoundaryCurves::new([circle(r_in), cut.clone(), circle(r_out), cut]).with_periodic(Edge::Left, Edge::Right);
    b.snap_corners();
    b
}

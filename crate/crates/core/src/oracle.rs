//! Independent finite-difference reference solver for heat and Poisson
//! problems on the curvilinear mesh.
//!
//! The Laplacian is written in conservative transformed form,
//!
//! ```text
//! ∇²T = (1/J) [ ∂ξ((α T_ξ − β T_η)/J) + ∂η((γ T_η − β T_ξ)/J) ]
//! ```
//!
//! and discretized with second-order face differences into a 9-point stencil.
//! Metrics are computed here from the node coordinates with second-order
//! differences; nothing is shared with the fourth-order operators used for
//! training. The linear system is solved by Gauss-Seidel with over-relaxation.
//! Only Dirichlet and periodic conditions are supported.

use crate::bcpad::{BCSpec, BoundaryEnforcer, Condition};
use crate::error::{Error, Result};
use crate::grid::{Edge, ReferenceGrid};
use crate::meshgen::{CurvilinearMesh, TransformMetrics};

pub const SCHEME: &str = "fd2-conservative-9pt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Max Gauss-Seidel correction, relative to the solution scale.
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relaxation factor; `None` picks one from the grid size.
    pub omega: Option<f64>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000, omega: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub field: Vec<f64>,
    pub iterations: usize,
    /// Max |∇²T + f| over the unknown nodes, in the discrete operator.
    pub residual: f64,
    pub scheme: &'static str,
}

/// Per-node 9-point stencil; `c[(dj + 1) * 3 + (di + 1)]`.
struct Stencil9 {
    node: usize,
    nb: [usize; 9],
    c: [f64; 9],
    jac: f64,
}

struct Wrap {
    n: usize,
    periodic: bool,
}

impl Wrap {
    fn at(&self, i: usize, d: isize) -> usize {
        let k = i as isize + d;
        if self.periodic {
            let p = (self.n - 1) as isize;
            k.rem_euclid(p) as usize
        } else {
            k as usize
        }
    }
}

fn assemble(mesh: &CurvilinearMesh) -> Result<Vec<Stencil9>> {
    let g = mesh.grid;
    let (dxi, deta) = (g.d_xi, g.d_eta);
    let wi = Wrap { n: g.n_xi, periodic: g.periodic_xi };
    let wj = Wrap { n: g.n_eta, periodic: g.periodic_eta };
    let at = |i: usize, j: usize| g.idx(i, j);
    let pt = |i: usize, j: usize| (mesh.x[at(i, j)], mesh.y[at(i, j)]);
    let mask = g.loss_mask();

    // α/J, β/J at the face between (i, j) and (i+1, j)
    let xi_face = |i: usize, j: usize| -> (f64, f64) {
        let ip = wi.at(i, 1);
        let (jm, jp) = (wj.at(j, -1), wj.at(j, 1));
        let (x0, y0) = pt(i, j);
        let (x1, y1) = pt(ip, j);
        let x_xi = (x1 - x0) / dxi;
        let y_xi = (y1 - y0) / dxi;
        let x_eta = (pt(ip, jp).0 + pt(i, jp).0 - pt(ip, jm).0 - pt(i, jm).0) / (4.0 * deta);
        let y_eta = (pt(ip, jp).1 + pt(i, jp).1 - pt(ip, jm).1 - pt(i, jm).1) / (4.0 * deta);
        let jac = x_xi * y_eta - x_eta * y_xi;
        ((x_eta * x_eta + y_eta * y_eta) / jac, (x_xi * x_eta + y_xi * y_eta) / jac)
    };
    // γ/J, β/J at the face between (i, j) and (i, j+1)
    let eta_face = |i: usize, j: usize| -> (f64, f64) {
        let jp = wj.at(j, 1);
        let (im, ip) = (wi.at(i, -1), wi.at(i, 1));
        let (x0, y0) = pt(i, j);
        let (x1, y1) = pt(i, jp);
        let x_eta = (x1 - x0) / deta;
        let y_eta = (y1 - y0) / deta;
        let x_xi = (pt(ip, jp).0 + pt(ip, j).0 - pt(im, jp).0 - pt(im, j).0) / (4.0 * dxi);
        let y_xi = (pt(ip, jp).1 + pt(ip, j).1 - pt(im, jp).1 - pt(im, j).1) / (4.0 * dxi);
        let jac = x_xi * y_eta - x_eta * y_xi;
        ((x_xi * x_xi + y_xi * y_xi) / jac, (x_xi * x_eta + y_xi * y_eta) / jac)
    };

    let mut rows = Vec::new();
    let mut sign = 0.0;
    for j in 0..g.n_eta {
        for i in 0..g.n_xi {
            if !mask[at(i, j)] {
                continue;
            }
            let (im, ip) = (wi.at(i, -1), wi.at(i, 1));
            let (jm, jp) = (wj.at(j, -1), wj.at(j, 1));
            let x_xi = (pt(ip, j).0 - pt(im, j).0) / (2.0 * dxi);
            let y_xi = (pt(ip, j).1 - pt(im, j).1) / (2.0 * dxi);
            let x_eta = (pt(i, jp).0 - pt(i, jm).0) / (2.0 * deta);
            let y_eta = (pt(i, jp).1 - pt(i, jm).1) / (2.0 * deta);
            let jac = x_xi * y_eta - x_eta * y_xi;
            if !jac.is_finite() || jac == 0.0 {
                return Err(Error::FoldedMesh { i, j });
            }
            if sign == 0.0 {
                sign = jac.signum();
            } else if jac.signum() != sign {
                return Err(Error::FoldedMesh { i, j });
            }

            let (ae, be) = xi_face(i, j);
            let (aw, bw) = xi_face(im, j);
            let (cn, bn) = eta_face(i, j);
            let (cs, bs) = eta_face(i, jm);
            let mut c = [0.0; 9];
            let k = |di: isize, dj: isize| ((dj + 1) * 3 + (di + 1)) as usize;
            let (sx, sy) = (1.0 / dxi, 1.0 / deta);
            // (F_e − F_w)/dξ
            c[k(1, 0)] += ae * sx * sx;
            c[k(0, 0)] -= ae * sx * sx;
            c[k(0, 0)] -= aw * sx * sx;
            c[k(-1, 0)] += aw * sx * sx;
            let q = sx / (4.0 * deta);
            for (di, dj, s) in [(1, 1, 1.0), (0, 1, 1.0), (1, -1, -1.0), (0, -1, -1.0)] {
                c[k(di, dj)] -= be * q * s;
            }
            for (di, dj, s) in [(0, 1, 1.0), (-1, 1, 1.0), (0, -1, -1.0), (-1, -1, -1.0)] {
                c[k(di, dj)] += bw * q * s;
            }
            // (G_n − G_s)/dη
            c[k(0, 1)] += cn * sy * sy;
            c[k(0, 0)] -= cn * sy * sy;
            c[k(0, 0)] -= cs * sy * sy;
            c[k(0, -1)] += cs * sy * sy;
            let q = sy / (4.0 * dxi);
            for (di, dj, s) in [(1, 1, 1.0), (1, 0, 1.0), (-1, 1, -1.0), (-1, 0, -1.0)] {
                c[k(di, dj)] -= bn * q * s;
            }
            for (di, dj, s) in [(1, 0, 1.0), (1, -1, 1.0), (-1, 0, -1.0), (-1, -1, -1.0)] {
                c[k(di, dj)] += bs * q * s;
            }
            let mut nb = [0; 9];
            for dj in -1..=1isize {
                for di in -1..=1isize {
                    nb[k(di, dj)] = at(wi.at(i, di), wj.at(j, dj));
                }
            }
            rows.push(Stencil9 { node: at(i, j), nb, c, jac });
        }
    }
    Ok(rows)
}

fn check_supported(bc: &BCSpec) -> Result<()> {
    for e in Edge::ALL {
        match bc.edge(e) {
            Condition::Dirichlet(_) | Condition::Periodic(_) => {}
            other => {
                return Err(Error::Invalid(format!(
                    "reference solver supports Dirichlet and periodic edges only ({} edge is {other:?})",
                    e.name()
                )))
            }
        }
    }
    Ok(())
}

fn default_omega(g: &ReferenceGrid) -> f64 {
    let n = g.n_xi.max(g.n_eta) as f64;
    2.0 / (1.0 + (std::f64::consts::PI / n).sin())
}

fn sync_mirrors(g: &ReferenceGrid, t: &mut [f64]) {
    for j in 0..g.n_eta {
        for i in 0..g.n_xi {
            if g.is_mirror(i, j) {
                let (oi, oj) = g.owner(i, j);
                t[g.idx(i, j)] = t[g.idx(oi, oj)];
            }
        }
    }
}

/// Steady heat equation ∇²T = 0.
pub fn solve_heat(
    mesh: &CurvilinearMesh,
    metrics: &TransformMetrics,
    bc: &BCSpec,
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    solve(mesh, metrics, bc, None, opts)
}

/// Poisson equation ∇²T + f = 0.
pub fn solve_poisson(
    mesh: &CurvilinearMesh,
    metrics: &TransformMetrics,
    bc: &BCSpec,
    f: &[f64],
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    mesh.grid.check_len("source", f.len())?;
    solve(mesh, metrics, bc, Some(f), opts)
}

fn solve(
    mesh: &CurvilinearMesh,
    metrics: &TransformMetrics,
    bc: &BCSpec,
    f: Option<&[f64]>,
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    let g = mesh.grid;
    if metrics.grid != g {
        return Err(Error::Shape("metrics belong to a different grid".into()));
    }
    check_supported(bc)?;
    let rows = assemble(mesh)?;
    let enforcer = BoundaryEnforcer::new(bc, metrics)?;
    let mut t = enforcer.apply(&vec![0.0; g.len()]);
    let rhs: Vec<f64> = rows.iter().map(|r| f.map_or(0.0, |f| -f[r.node] * r.jac)).collect();

    let bc_scale = enforcer.dirichlet_nodes().iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let omega = opts.omega.unwrap_or_else(|| default_omega(&g));
    const CENTER: usize = 4;
    let mut iterations = 0;
    loop {
        let mut max_corr: f64 = 0.0;
        for (r, b) in rows.iter().zip(&rhs) {
            let mut off = 0.0;
            for k in 0..9 {
                if k != CENTER {
                    off += r.c[k] * t[r.nb[k]];
                }
            }
            let target = (b - off) / r.c[CENTER];
            let corr = target - t[r.node];
            t[r.node] += omega * corr;
            max_corr = max_corr.max(corr.abs());
        }
        iterations += 1;
        if !max_corr.is_finite() {
            return Err(Error::NoConvergence { iterations, residual: max_corr, tol: opts.tol });
        }
        let scale = rows.iter().map(|r| t[r.node].abs()).fold(bc_scale, f64::max).max(f64::MIN_POSITIVE);
        if max_corr <= opts.tol * scale {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: max_corr / scale, tol: opts.tol });
        }
    }
    sync_mirrors(&g, &mut t);
    let residual = rows
        .iter()
        .map(|r| {
            let s: f64 = (0..9).map(|k| r.c[k] * t[r.nb[k]]).sum();
            (s / r.jac + f.map_or(0.0, |f| f[r.node])).abs()
        })
        .fold(0.0, f64::max);
    Ok(OracleSolution { field: t, iterations, residual, scheme: SCHEME })
}

/// The oracle's own discrete Laplacian applied to `t` (zero on boundary nodes).
pub fn discrete_laplacian(mesh: &CurvilinearMesh, t: &[f64]) -> Result<Vec<f64>> {
    mesh.grid.check_len("field", t.len())?;
    let mut out = vec![0.0; t.len()];
    for r in assemble(mesh)? {
        out[r.node] = (0..9).map(|k| r.c[k] * t[r.nb[k]]).sum::<f64>() / r.jac;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcpad::EdgeValues;
    use crate::meshgen::{annulus_boundary, compute_metrics, generate_mapping, MappingOptions};
    use std::f64::consts::PI;

    fn mesh_of(n: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> (CurvilinearMesh, TransformMetrics) {
        let mesh = CurvilinearMesh::from_fn(ReferenceGrid::unit(n, n).unwrap(), f);
        let m = compute_metrics(&mesh).unwrap();
        (mesh, m)
    }

    fn top_zero_others_one() -> BCSpec {
        let d = |v| Condition::Dirichlet(EdgeValues::Uniform(v));
        BCSpec::new(d(1.0), d(1.0), d(0.0), d(1.0))
    }

    // T = 1 − Σ_{n odd} 4/(nπ) sin(nπx) sinh(nπy)/sinh(nπ)
    fn series(x: f64, y: f64) -> f64 {
        let mut s = 0.0;
        for n in (1..4000).step_by(2) {
            let a = n as f64 * PI;
            let ratio = (a * (y - 1.0)).exp() * (1.0 - (-2.0 * a * y).exp()) / (1.0 - (-2.0 * a).exp());
            s += 4.0 / a * (a * x).sin() * ratio;
        }
        1.0 - s
    }

    #[test]
    fn constant_dirichlet_gives_constant() {
        let (mesh, m) = mesh_of(12, |a, b| (a + 0.2 * b, b + 0.1 * (3.0 * a).sin()));
        let s = solve_heat(&mesh, &m, &BCSpec::all_dirichlet(2.5), &OracleOptions::default()).unwrap();
        assert!(s.field.iter().all(|v| (v - 2.5).abs() < 1e-9));
        assert_eq!(s.scheme, SCHEME);
    }

    #[test]
    fn matches_series_solution_on_unit_square() {
        let (mesh, m) = mesh_of(64, |a, b| (a, b));
        let s = solve_heat(&mesh, &m, &top_zero_others_one(), &OracleOptions::default()).unwrap();
        let mask = mesh.grid.loss_mask();
        // the data jump at the two top corners makes the solution singular there;
        // the node next to such a corner sees the same scaled picture at every h
        let mut worst: f64 = 0.0;
        let mut near: f64 = 0.0;
        for k in 0..mesh.grid.len() {
            if mask[k] {
                let (x, y) = (mesh.x[k], mesh.y[k]);
                let e = (s.field[k] - series(x, y)).abs();
                if x.min(1.0 - x).hypot(1.0 - y) < 0.25 {
                    near = near.max(e);
                } else {
                    worst = worst.max(e);
                }
            }
        }
        assert!(worst <= 1e-3, "max error away from the corners {worst}");
        assert!(near < 1e-2, "max error near the corners {near}");
    }

    #[test]
    fn poisson_with_zero_source_equals_heat() {
        let (mesh, m) = mesh_of(15, |a, b| (a + 0.1 * b * b, b));
        let bc = top_zero_others_one();
        let h = solve_heat(&mesh, &m, &bc, &OracleOptions::default()).unwrap();
        let p = solve_poisson(&mesh, &m, &bc, &vec![0.0; mesh.grid.len()], &OracleOptions::default()).unwrap();
        assert_eq!(h.field, p.field);
    }

    fn manufactured_error(n: usize, skew: bool) -> f64 {
        let (mesh, m) = mesh_of(n, |a, b| if skew { (a + 0.1 * (PI * b).sin() * a * (1.0 - a), b + 0.05 * a * b) } else { (a, b) });
        let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin() + 0.5 * x;
        let f: Vec<f64> = mesh.x.iter().zip(&mesh.y).map(|(&x, &y)| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()).collect();
        let g = mesh.grid;
        let edge_vals = |e: Edge| {
            EdgeValues::PerNode((0..e.len(&g)).map(|k| {
                let (i, j) = e.node(&g, k);
                let p = mesh.point(i, j);
                exact(p.0, p.1)
            }).collect())
        };
        let bc = BCSpec::new(
            Condition::Dirichlet(edge_vals(Edge::Bottom)),
            Condition::Dirichlet(edge_vals(Edge::Right)),
            Condition::Dirichlet(edge_vals(Edge::Top)),
            Condition::Dirichlet(edge_vals(Edge::Left)),
        );
        let s = solve_poisson(&mesh, &m, &bc, &f, &OracleOptions::default()).unwrap();
        s.field.iter().zip(mesh.x.iter().zip(&mesh.y)).map(|(t, (&x, &y))| (t - exact(x, y)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn manufactured_poisson_on_unit_square() {
        assert!(manufactured_error(64, false) <= 1e-3);
    }

    #[test]
    fn second_order_convergence_on_skewed_mesh() {
        let e: Vec<f64> = [17, 33, 65].iter().map(|&n| manufactured_error(n, true)).collect();
        for w in e.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.8, "errors {e:?}");
        }
    }

    #[test]
    fn maximum_principle_on_annulus() {
        let bc_curves = annulus_boundary(33, 17, (0.0, 0.0), 0.5, 1.0);
        let grid = bc_curves.reference_grid().unwrap();
        let mesh = generate_mapping(&bc_curves, &grid, &MappingOptions::default()).unwrap();
        let m = compute_metrics(&mesh).unwrap();
        let d = |v| Condition::Dirichlet(EdgeValues::Uniform(v));
        let bc = BCSpec::new(d(3.0), Condition::Periodic(Edge::Left), d(0.0), Condition::Periodic(Edge::Right));
        let s = solve_heat(&mesh, &m, &bc, &OracleOptions::default()).unwrap();
        assert!(s.field.iter().all(|&v| (-1e-12..=3.0 + 1e-12).contains(&v)));
        // analytic: T = 3 ln(r_out/r)/ln(r_out/r_in)
        let worst = s
            .field
            .iter()
            .zip(mesh.x.iter().zip(&mesh.y))
            .map(|(t, (&x, &y))| (t - 3.0 * (1.0 / x.hypot(y)).ln() / 2f64.ln()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 5e-3, "{worst}");
        for i in 0..grid.n_eta {
            assert_eq!(s.field[grid.idx(0, i)], s.field[grid.idx(grid.n_xi - 1, i)]);
        }
    }

    #[test]
    fn neumann_is_rejected() {
        let (mesh, m) = mesh_of(9, |a, b| (a, b));
        let d = Condition::Dirichlet(EdgeValues::Uniform(0.0));
        let bc = BCSpec::new(d.clone(), d.clone(), Condition::Neumann(EdgeValues::Uniform(0.0)), d);
        assert!(matches!(solve_heat(&mesh, &m, &bc, &OracleOptions::default()), Err(Error::Invalid(_))));
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let (mesh, m) = mesh_of(33, |a, b| (a, b));
        let opts = OracleOptions { max_iter: 3, ..OracleOptions::default() };
        assert!(matches!(solve_heat(&mesh, &m, &top_zero_others_one(), &opts), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn residual_is_reported_small() {
        let (mesh, m) = mesh_of(20, |a, b| (a + 0.3 * b, b));
        let s = solve_heat(&mesh, &m, &top_zero_others_one(), &OracleOptions::default()).unwrap();
        assert!(s.residual < 1e-6, "{}", s.residual);
        let lap = discrete_laplacian(&mesh, &s.field).unwrap();
        assert!(lap.iter().all(|v| v.abs() < 1e-6));
    }
}

//! Finite-difference derivative operators on the reference lattice.
//!
//! First derivatives use the 5-point 4th-order central stencil in the interior
//! and 4-point 3rd-order one-sided stencils on the two node layers next to each
//! non-periodic boundary. Physical derivatives are composed from these through
//! the precomputed mapping metrics, and second derivatives are formed by
//! applying the first-derivative operators twice.
//!
//! Every operator is linear with constant coefficients, so each has an exact
//! adjoint obtained by scattering with the same weights.

use std::fmt::Write as _;

use crate::error::Result;
use crate::grid::ReferenceGrid;
use crate::meshgen::TransformMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Xi,
    Eta,
}

/// A one-dimensional first-derivative stencil, weights per unit spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil1D {
    pub coefficients: Vec<(isize, f64)>,
    pub order: u32,
    pub axis: Axis,
}

impl Stencil1D {
    pub fn central4(axis: Axis) -> Self {
        Self {
            coefficients: CENTRAL4.iter().map(|&(o, w)| (o, w / 12.0)).collect(),
            order: 4,
            axis,
        }
    }

    pub fn forward3(axis: Axis) -> Self {
        Self {
            coefficients: FORWARD3.iter().map(|&(o, w)| (o, w / 6.0)).collect(),
            order: 3,
            axis,
        }
    }

    pub fn backward3(axis: Axis) -> Self {
        Self {
            coefficients: FORWARD3.iter().map(|&(o, w)| (-o, -w / 6.0)).collect(),
            order: 3,
            axis,
        }
    }

    /// Apply to samples of a function of one variable at unit spacing.
    pub fn apply_at(&self, f: impl Fn(f64) -> f64, at: f64) -> f64 {
        self.coefficients.iter().map(|&(o, w)| w * f(at + o as f64)).sum()
    }
}

const CENTRAL4: [(isize, f64); 4] = [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)];
const FORWARD3: [(isize, f64); 4] = [(0, -11.0), (1, 18.0), (2, -9.0), (3, 2.0)];

/// Node positions and weights (already divided by the spacing) of the
/// derivative at position `k` of a line of `n` nodes.
#[inline]
pub(crate) fn line_weights(n: usize, periodic: bool, spacing: f64, k: usize) -> [(usize, f64); 4] {
    let mut out = [(0usize, 0.0f64); 4];
    if periodic {
        let p = (n - 1) as isize;
        let k = (k as isize) % p;
        for (slot, &(o, w)) in out.iter_mut().zip(CENTRAL4.iter()) {
            *slot = ((k + o).rem_euclid(p) as usize, w / (12.0 * spacing));
        }
    } else if k < 2 {
        for (slot, &(o, w)) in out.iter_mut().zip(FORWARD3.iter()) {
            *slot = ((k as isize + o) as usize, w / (6.0 * spacing));
        }
    } else if k + 2 >= n {
        for (slot, &(o, w)) in out.iter_mut().zip(FORWARD3.iter()) {
            *slot = ((k as isize - o) as usize, -w / (6.0 * spacing));
        }
    } else {
        for (slot, &(o, w)) in out.iter_mut().zip(CENTRAL4.iter()) {
            *slot = ((k as isize + o) as usize, w / (12.0 * spacing));
        }
    }
    out
}

/// Sparse row of the reference derivative along `axis` at node `(i, j)`,
/// as flat node indices and weights.
pub fn derivative_row(grid: &ReferenceGrid, axis: Axis, i: usize, j: usize) -> [(usize, f64); 4] {
    match axis {
        Axis::Xi => {
            let w = line_weights(grid.n_xi, grid.periodic_xi, grid.d_xi, i);
            let (_, jo) = grid.owner(0, j);
            w.map(|(k, c)| (grid.idx(k, jo), c))
        }
        Axis::Eta => {
            let w = line_weights(grid.n_eta, grid.periodic_eta, grid.d_eta, j);
            let (io, _) = grid.owner(i, 0);
            w.map(|(k, c)| (grid.idx(io, k), c))
        }
    }
}

fn apply_axis(grid: &ReferenceGrid, axis: Axis, f: &[f64]) -> Result<Vec<f64>> {
    grid.check_len("derivative input", f.len())?;
    let (nx, ny) = (grid.n_xi, grid.n_eta);
    let mut out = vec![0.0; f.len()];
    match axis {
        Axis::Xi => {
            for i in 0..nx {
                let w = line_weights(nx, grid.periodic_xi, grid.d_xi, i);
                for j in 0..ny {
                    let row = grid.owner(0, j).1 * nx;
                    out[j * nx + i] =
                        w[0].1 * f[row + w[0].0] + w[1].1 * f[row + w[1].0] + w[2].1 * f[row + w[2].0] + w[3].1 * f[row + w[3].0];
                }
            }
        }
        Axis::Eta => {
            for j in 0..ny {
                let w = line_weights(ny, grid.periodic_eta, grid.d_eta, j);
                for i in 0..nx {
                    let col = grid.owner(i, 0).0;
                    out[j * nx + i] = w[0].1 * f[w[0].0 * nx + col]
                        + w[1].1 * f[w[1].0 * nx + col]
                        + w[2].1 * f[w[2].0 * nx + col]
                        + w[3].1 * f[w[3].0 * nx + col];
                }
            }
        }
    }
    Ok(out)
}

fn apply_axis_adjoint(grid: &ReferenceGrid, axis: Axis, g: &[f64]) -> Result<Vec<f64>> {
    grid.check_len("derivative adjoint input", g.len())?;
    let (nx, ny) = (grid.n_xi, grid.n_eta);
    let mut out = vec![0.0; g.len()];
    match axis {
        Axis::Xi => {
            for i in 0..nx {
                let w = line_weights(nx, grid.periodic_xi, grid.d_xi, i);
                for j in 0..ny {
                    let row = grid.owner(0, j).1 * nx;
                    let gv = g[j * nx + i];
                    for &(k, c) in &w {
                        out[row + k] += c * gv;
                    }
                }
            }
        }
        Axis::Eta => {
            for j in 0..ny {
                let w = line_weights(ny, grid.periodic_eta, grid.d_eta, j);
                for i in 0..nx {
                    let col = grid.owner(i, 0).0;
                    let gv = g[j * nx + i];
                    for &(k, c) in &w {
                        out[k * nx + col] += c * gv;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// ∂f/∂ξ on the reference lattice.
pub fn d_dxi(grid: &ReferenceGrid, f: &[f64]) -> Result<Vec<f64>> {
    apply_axis(grid, Axis::Xi, f)
}

/// ∂f/∂η on the reference lattice.
pub fn d_deta(grid: &ReferenceGrid, f: &[f64]) -> Result<Vec<f64>> {
    apply_axis(grid, Axis::Eta, f)
}

pub fn d_dxi_adjoint(grid: &ReferenceGrid, g: &[f64]) -> Result<Vec<f64>> {
    apply_axis_adjoint(grid, Axis::Xi, g)
}

pub fn d_deta_adjoint(grid: &ReferenceGrid, g: &[f64]) -> Result<Vec<f64>> {
    apply_axis_adjoint(grid, Axis::Eta, g)
}

/// ∂f/∂x = (f_ξ y_η − f_η y_ξ) / J.
pub fn d_dx(m: &TransformMetrics, f: &[f64]) -> Result<Vec<f64>> {
    let fxi = d_dxi(&m.grid, f)?;
    let feta = d_deta(&m.grid, f)?;
    Ok((0..f.len()).map(|k| m.xi_x[k] * fxi[k] + m.eta_x[k] * feta[k]).collect())
}

/// ∂f/∂y = (f_η x_ξ − f_ξ x_η) / J.
pub fn d_dy(m: &TransformMetrics, f: &[f64]) -> Result<Vec<f64>> {
    let fxi = d_dxi(&m.grid, f)?;
    let feta = d_deta(&m.grid, f)?;
    Ok((0..f.len()).map(|k| m.xi_y[k] * fxi[k] + m.eta_y[k] * feta[k]).collect())
}

pub fn d_dx_adjoint(m: &TransformMetrics, g: &[f64]) -> Result<Vec<f64>> {
    let a: Vec<f64> = g.iter().zip(&m.xi_x).map(|(g, c)| g * c).collect();
    let b: Vec<f64> = g.iter().zip(&m.eta_x).map(|(g, c)| g * c).collect();
    let mut out = d_dxi_adjoint(&m.grid, &a)?;
    for (o, v) in out.iter_mut().zip(d_deta_adjoint(&m.grid, &b)?) {
        *o += v;
    }
    Ok(out)
}

pub fn d_dy_adjoint(m: &TransformMetrics, g: &[f64]) -> Result<Vec<f64>> {
    let a: Vec<f64> = g.iter().zip(&m.xi_y).map(|(g, c)| g * c).collect();
    let b: Vec<f64> = g.iter().zip(&m.eta_y).map(|(g, c)| g * c).collect();
    let mut out = d_dxi_adjoint(&m.grid, &a)?;
    for (o, v) in out.iter_mut().zip(d_deta_adjoint(&m.grid, &b)?) {
        *o += v;
    }
    Ok(out)
}

/// ∇²f as `d_dx(d_dx f) + d_dy(d_dy f)`.
pub fn laplacian(m: &TransformMetrics, f: &[f64]) -> Result<Vec<f64>> {
    let fx = d_dx(m, f)?;
    let fy = d_dy(m, f)?;
    let mut out = d_dx(m, &fx)?;
    for (o, v) in out.iter_mut().zip(d_dy(m, &fy)?) {
        *o += v;
    }
    Ok(out)
}

pub fn laplacian_adjoint(m: &TransformMetrics, g: &[f64]) -> Result<Vec<f64>> {
    let gx = d_dx_adjoint(m, g)?;
    let gy = d_dy_adjoint(m, g)?;
    let mut out = d_dx_adjoint(m, &gx)?;
    for (o, v) in out.iter_mut().zip(d_dy_adjoint(m, &gy)?) {
        *o += v;
    }
    Ok(out)
}

/// Human-readable listing of the stencil tables.
pub fn dump_tables() -> String {
    let mut s = String::new();
    for (name, st) in [
        ("central (interior)", Stencil1D::central4(Axis::Xi)),
        ("forward (first two nodes)", Stencil1D::forward3(Axis::Xi)),
        ("backward (last two nodes)", Stencil1D::backward3(Axis::Xi)),
    ] {
        let _ = writeln!(s, "# {name}, order {}", st.order);
        for (o, w) in &st.coefficients {
            let _ = writeln!(s, "{o:+} {w:.17e}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
        v.fold(0.0, |a, b| a.max(b.abs()))
    }

    #[test]
    fn stencil_weights_sum_to_zero_and_are_exact_on_cubics() {
        for st in [Stencil1D::central4(Axis::Xi), Stencil1D::forward3(Axis::Xi), Stencil1D::backward3(Axis::Xi)] {
            let sum: f64 = st.coefficients.iter().map(|c| c.1).sum();
            assert!(sum.abs() < 1e-15);
            for deg in 0..=st.order.min(3) as i32 {
                let got = st.apply_at(|x| x.powi(deg), 1.5);
                let want = if deg == 0 { 0.0 } else { deg as f64 * 1.5f64.powi(deg - 1) };
                assert!((got - want).abs() < 1e-12, "deg {deg}: {got} vs {want}");
            }
        }
        // The central stencil is also exact on quartics.
        let st = Stencil1D::central4(Axis::Eta);
        assert!((st.apply_at(|x| x.powi(4), 0.7) - 4.0 * 0.7f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn constant_field_has_zero_derivative() {
        let g = ReferenceGrid::new(11, 8).unwrap();
        let f = vec![3.25; g.len()];
        assert!(max_abs(d_dxi(&g, &f).unwrap().into_iter()) < 1e-14);
        assert!(max_abs(d_deta(&g, &f).unwrap().into_iter()) < 1e-14);
    }

    #[test]
    fn cubic_is_differentiated_exactly() {
        let g = ReferenceGrid::with_spacing(13, 9, 0.1, 0.25).unwrap();
        let f = g.sample(|xi, eta| xi.powi(3) + 2.0 * eta.powi(3) - xi * eta);
        let fx = d_dxi(&g, &f).unwrap();
        let fy = d_deta(&g, &f).unwrap();
        for j in 0..g.n_eta {
            for i in 0..g.n_xi {
                let (xi, eta) = (g.xi(i), g.eta(j));
                assert!((fx[g.idx(i, j)] - (3.0 * xi * xi - eta)).abs() < 1e-11);
                assert!((fy[g.idx(i, j)] - (6.0 * eta * eta - xi)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn periodic_axis_uses_wrapped_central_stencil() {
        let n = 33;
        let g = ReferenceGrid::with_spacing(n, 6, 1.0 / (n - 1) as f64, 1.0).unwrap().periodic_in_xi(true);
        let two_pi = std::f64::consts::TAU;
        let f = g.sample(|xi, _| (two_pi * xi).sin());
        let d = d_dxi(&g, &f).unwrap();
        let h = 1.0 / (n - 1) as f64;
        for i in [0, 1, n - 2, n - 1] {
            let exact = two_pi * (two_pi * g.xi(i)).cos();
            // 4th-order truncation: (2π)^5 h^4 / 30 bounds the error.
            assert!((d[g.idx(i, 2)] - exact).abs() < two_pi.powi(5) * h.powi(4) / 30.0 * 1.01);
        }
        assert_eq!(d[g.idx(0, 3)], d[g.idx(n - 1, 3)]);
    }

    #[test]
    fn tables_dump_lists_all_stencils() {
        let t = dump_tables();
        assert!(t.contains("central") && t.contains("forward") && t.contains("backward"));
    }

    proptest! {
        #[test]
        fn reference_operators_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let g = ReferenceGrid::new(9, 7).unwrap().periodic_in_xi(seed % 2 == 0);
            let f: Vec<f64> = (0..g.len()).map(|k| ((k as u64 * 7919 + seed) % 101) as f64 / 50.0 - 1.0).collect();
            let h: Vec<f64> = (0..g.len()).map(|k| ((k as u64 * 104729 + seed) % 97) as f64 / 48.0 - 1.0).collect();
            let comb: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
            for op in [d_dxi, d_deta] {
                let lhs = op(&g, &comb).unwrap();
                let (of, oh) = (op(&g, &f).unwrap(), op(&g, &h).unwrap());
                for k in 0..g.len() {
                    prop_assert!((lhs[k] - (a * of[k] + b * oh[k])).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn adjoint_matches_transpose(seed in 0u64..500, periodic in any::<bool>()) {
            let g = ReferenceGrid::with_spacing(10, 8, 0.3, 0.7).unwrap().periodic_in_eta(periodic);
            let f: Vec<f64> = (0..g.len()).map(|k| (((k as u64 + 3) * (seed + 11)) % 89) as f64 / 44.0 - 1.0).collect();
            let h: Vec<f64> = (0..g.len()).map(|k| (((k as u64 + 5) * (seed + 7)) % 83) as f64 / 41.0 - 1.0).collect();
            for (op, adj) in [(d_dxi as fn(&ReferenceGrid, &[f64]) -> Result<Vec<f64>>, d_dxi_adjoint as fn(&ReferenceGrid, &[f64]) -> Result<Vec<f64>>), (d_deta, d_deta_adjoint)] {
                let lhs: f64 = op(&g, &f).unwrap().iter().zip(&h).map(|(a, b)| a * b).sum();
                let rhs: f64 = f.iter().zip(adj(&g, &h).unwrap()).map(|(a, b)| a * b).sum();
                prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
            }
        }
    }
}

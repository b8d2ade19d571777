//! Reverse-mode differentiation over grid fields.
//!
//! A [`Tape`] records field-valued operations (metric derivatives, pointwise
//! arithmetic) on one mesh. After the forward values are built, `backward`
//! propagates seed gradients to every recorded node using the exact adjoint
//! of each operation.

use crate::error::Result;
use crate::meshgen::TransformMetrics;
use crate::stencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position of this node in the gradient list returned by `backward`.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Dxi(Var),
    Deta(Var),
    Dx(Var),
    Dy(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
}

#[derive(Debug)]
pub struct Tape<'m> {
    metrics: &'m TransformMetrics,
    values: Vec<Vec<f64>>,
    ops: Vec<Op>,
}

impl<'m> Tape<'m> {
    pub fn new(metrics: &'m TransformMetrics) -> Self {
        Self { metrics, values: Vec::new(), ops: Vec::new() }
    }

    pub fn metrics(&self) -> &TransformMetrics {
        self.metrics
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// A field whose gradient will be reported by `backward`.
    pub fn input(&mut self, value: Vec<f64>) -> Result<Var> {
        self.metrics.grid.check_len("tape input", value.len())?;
        Ok(self.push(value, Op::Input))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn dxi(&mut self, a: Var) -> Result<Var> {
        let v = stencil::d_dxi(&self.metrics.grid, &self.values[a.0])?;
        Ok(self.push(v, Op::Dxi(a)))
    }

    pub fn deta(&mut self, a: Var) -> Result<Var> {
        let v = stencil::d_deta(&self.metrics.grid, &self.values[a.0])?;
        Ok(self.push(v, Op::Deta(a)))
    }

    pub fn dx(&mut self, a: Var) -> Result<Var> {
        let v = stencil::d_dx(self.metrics, &self.values[a.0])?;
        Ok(self.push(v, Op::Dx(a)))
    }

    pub fn dy(&mut self, a: Var) -> Result<Var> {
        let v = stencil::d_dy(self.metrics, &self.values[a.0])?;
        Ok(self.push(v, Op::Dy(a)))
    }

    pub fn laplacian(&mut self, a: Var) -> Result<Var> {
        let ax = self.dx(a)?;
        let axx = self.dx(ax)?;
        let ay = self.dy(a)?;
        let ayy = self.dy(ay)?;
        Ok(self.add(axx, ayy))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].iter().zip(&self.values[b.0]).map(|(x, y)| x + y).collect();
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].iter().zip(&self.values[b.0]).map(|(x, y)| x - y).collect();
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].iter().zip(&self.values[b.0]).map(|(x, y)| x * y).collect();
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.values[a.0].iter().map(|x| s * x).collect();
        self.push(v, Op::Scale(a, s))
    }

    /// Propagate seed gradients back through the tape. Returns the gradient of
    /// every node (zero-filled where nothing flowed).
    pub fn backward(&self, seeds: &[(Var, &[f64])]) -> Result<Vec<Vec<f64>>> {
        let n = self.metrics.grid.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        for (v, g) in seeds {
            accumulate(&mut grads[v.0], g);
        }
        for k in (0..self.ops.len()).rev() {
            let Some(g) = grads[k].take() else { continue };
            match self.ops[k] {
                Op::Input => {
                    grads[k] = Some(g);
                }
                Op::Dxi(a) => accumulate(&mut grads[a.0], &stencil::d_dxi_adjoint(&self.metrics.grid, &g)?),
                Op::Deta(a) => accumulate(&mut grads[a.0], &stencil::d_deta_adjoint(&self.metrics.grid, &g)?),
                Op::Dx(a) => accumulate(&mut grads[a.0], &stencil::d_dx_adjoint(self.metrics, &g)?),
                Op::Dy(a) => accumulate(&mut grads[a.0], &stencil::d_dy_adjoint(self.metrics, &g)?),
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut grads[b.0], &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(&self.values[b.0]).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(&self.values[a.0]).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Scale(a, s) => {
                    let ga: Vec<f64> = g.iter().map(|x| s * x).collect();
                    accumulate(&mut grads[a.0], &ga);
                }
            }
        }
        Ok(grads.into_iter().map(|g| g.unwrap_or_else(|| vec![0.0; n])).collect())
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ReferenceGrid;
    use crate::meshgen::{compute_metrics, CurvilinearMesh};

    #[test]
    fn gradient_of_nonlinear_expression_matches_finite_differences() {
        let g = ReferenceGrid::unit(9, 8).unwrap();
        let mesh = CurvilinearMesh::from_fn(g, |a, b| (a + 0.2 * b * b, b - 0.1 * a));
        let m = compute_metrics(&mesh).unwrap();
        let u0: Vec<f64> = (0..g.len()).map(|k| ((k * 37 % 11) as f64) / 11.0).collect();
        let w: Vec<f64> = (0..g.len()).map(|k| ((k * 13 % 7) as f64) / 7.0 - 0.5).collect();

        // loss = Σ w · (u · ∂u/∂x − 0.3 ∇²u)
        let eval = |u: &[f64]| -> (f64, Vec<f64>) {
            let mut t = Tape::new(&m);
            let a = t.input(u.to_vec()).unwrap();
            let ax = t.dx(a).unwrap();
            let conv = t.mul(a, ax);
            let lap = t.laplacian(a).unwrap();
            let lap = t.scale(lap, 0.3);
            let r = t.sub(conv, lap);
            let loss: f64 = t.value(r).iter().zip(&w).map(|(x, y)| x * y).sum();
            let grads = t.backward(&[(r, &w)]).unwrap();
            (loss, grads[a.0].clone())
        };
        let (_, grad) = eval(&u0);
        for k in [0, 5, 17, 30, 44, 71] {
            let h = 1e-6;
            let mut up = u0.clone();
            up[k] += h;
            let mut dn = u0.clone();
            dn[k] -= h;
            let fd = (eval(&up).0 - eval(&dn).0) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "node {k}: {fd} vs {}", grad[k]);
        }
    }
}

//! PDE residuals on curvilinear meshes, the physics loss and the error metric.
//!
//! Residuals are assembled on a [`Tape`], so the same expression yields both
//! the residual values and their exact gradients with respect to the fields.

use crate::bcpad::BoundaryEnforcer;
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::meshgen::TransformMetrics;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pde {
    Heat,
    NavierStokes,
    Poisson,
}

impl Pde {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "heat" => Some(Self::Heat),
            "ns" => Some(Self::NavierStokes),
            "poisson" => Some(Self::Poisson),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Heat => "heat",
            Self::NavierStokes => "ns",
            Self::Poisson => "poisson",
        }
    }

    /// Solution variables, in network output order.
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            Self::Heat | Self::Poisson => &["T"],
            Self::NavierStokes => &["u", "v", "p"],
        }
    }

    pub fn residual_names(self) -> &'static [&'static str] {
        match self {
            Self::Heat => &["laplace"],
            Self::NavierStokes => &["continuity", "momentum_x", "momentum_y"],
            Self::Poisson => &["poisson"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub nu: f64,
    pub inlet: (f64, f64),
    /// Length used for the diagnostic Reynolds number.
    pub length: f64,
}

impl FluidParams {
    pub fn new(nu: f64, inlet: (f64, f64), length: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Invalid(format!("viscosity must be positive, got {nu}")));
        }
        Ok(Self { nu, inlet, length })
    }

    pub fn reynolds(&self) -> f64 {
        self.inlet.0.hypot(self.inlet.1) * self.length / self.nu
    }
}

/// Residual channels of one equation set on one mesh.
pub type PdeResidual = GridField;

/// Record the residuals of `pde` on the tape. `fields` are the (already
/// enforced) solution variables; `source` is the Poisson right-hand side.
pub fn residuals_on_tape(
    tape: &mut Tape<'_>,
    pde: Pde,
    fields: &[Var],
    source: Option<&[f64]>,
    fluid: Option<&FluidParams>,
) -> Result<Vec<Var>> {
    if fields.len() != pde.variables().len() {
        return Err(Error::Shape(format!("{} expects {} fields, got {}", pde.name(), pde.variables().len(), fields.len())));
    }
    match pde {
        Pde::Heat => Ok(vec![tape.laplacian(fields[0])?]),
        Pde::Poisson => {
            let f = source.ok_or_else(|| Error::Invalid("poisson residual needs a source field".into()))?;
            let f = tape.input(f.to_vec())?;
            let lap = tape.laplacian(fields[0])?;
            Ok(vec![tape.add(lap, f)])
        }
        Pde::NavierStokes => {
            let nu = fluid.ok_or_else(|| Error::Invalid("navier-stokes residual needs fluid parameters".into()))?.nu;
            let (u, v, p) = (fields[0], fields[1], fields[2]);
            let ux = tape.dx(u)?;
            let uy = tape.dy(u)?;
            let vx = tape.dx(v)?;
            let vy = tape.dy(v)?;
            let px = tape.dx(p)?;
            let py = tape.dy(p)?;
            let continuity = tape.add(ux, vy);

            let mut momentum = |a_x: Var, a_y: Var, grad_p: Var| -> Result<Var> {
                let conv_x = tape.mul(u, a_x);
                let conv_y = tape.mul(v, a_y);
                let conv = tape.add(conv_x, conv_y);
                let axx = tape.dx(a_x)?;
                let ayy = tape.dy(a_y)?;
                let lap = tape.add(axx, ayy);
                let visc = tape.scale(lap, nu);
                let r = tape.sub(conv, visc);
                Ok(tape.add(r, grad_p))
            };
            let mx = momentum(ux, uy, px)?;
            let my = momentum(vx, vy, py)?;
            Ok(vec![continuity, mx, my])
        }
    }
}

fn evaluate(
    pde: Pde,
    m: &TransformMetrics,
    fields: &[&[f64]],
    source: Option<&[f64]>,
    fluid: Option<&FluidParams>,
) -> Result<PdeResidual> {
    let mut tape = Tape::new(m);
    let vars = fields.iter().map(|f| tape.input(f.to_vec())).collect::<Result<Vec<_>>>()?;
    let res = residuals_on_tape(&mut tape, pde, &vars, source, fluid)?;
    let channels = pde.residual_names().iter().zip(res).map(|(n, r)| (n.to_string(), tape.value(r).to_vec())).collect();
    GridField::from_channels(m.grid.n_xi, m.grid.n_eta, channels)
}

/// Laplace residual ∇²T.
pub fn heat_residual(t: &[f64], m: &TransformMetrics) -> Result<PdeResidual> {
    evaluate(Pde::Heat, m, &[t], None, None)
}

/// Continuity and both momentum residuals of steady incompressible flow.
pub fn ns_residual(u: &[f64], v: &[f64], p: &[f64], fluid: &FluidParams, m: &TransformMetrics) -> Result<PdeResidual> {
    evaluate(Pde::NavierStokes, m, &[u, v, p], None, Some(fluid))
}

/// ∇²T + f.
pub fn poisson_residual(t: &[f64], f: &[f64], m: &TransformMetrics) -> Result<PdeResidual> {
    m.grid.check_len("source", f.len())?;
    evaluate(Pde::Poisson, m, &[t], Some(f), None)
}

/// Mean square of each channel over the masked nodes.
pub fn channel_mean_squares(r: &PdeResidual, mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != r.plane() {
        return Err(Error::Shape(format!("mask has {} entries, residual plane {}", mask.len(), r.plane())));
    }
    let n = mask.iter().filter(|&&b| b).count();
    if n == 0 {
        return Err(Error::Invalid("no loss-eligible nodes".into()));
    }
    Ok((0..r.n_channels())
        .map(|c| r.channel(c).iter().zip(mask).filter(|(_, &b)| b).map(|(x, _)| x * x).sum::<f64>() / n as f64)
        .collect())
}

/// Weighted sum over channels of masked mean squares, averaged over the batch.
pub fn physics_loss(batch: &[PdeResidual], weights: &[f64], mask: &[bool]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let mut total = 0.0;
    for r in batch {
        if weights.len() != r.n_channels() {
            return Err(Error::Shape(format!("{} weights for {} residual channels", weights.len(), r.n_channels())));
        }
        total += channel_mean_squares(r, mask)?.iter().zip(weights).map(|(ms, w)| ms * w).sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// ‖pred − ref‖ / ‖ref‖ in the L2 norm.
pub fn relative_ratio(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!("prediction has {} values, reference {}", pred.len(), reference.len())));
    }
    let den = reference.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::Invalid("reference field has zero norm".into()));
    }
    let num = pred.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Square root of the L2 norm ratio, as used for every reported error.
pub fn relative_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    relative_ratio(pred, reference).map(f64::sqrt)
}

/// One PDE on one mesh with its hard boundary conditions: maps raw network
/// outputs to the loss and the loss gradient at those outputs.
#[derive(Debug)]
pub struct Problem {
    pub pde: Pde,
    pub metrics: TransformMetrics,
    pub enforcers: Vec<BoundaryEnforcer>,
    pub fluid: Option<FluidParams>,
    pub weights: Vec<f64>,
    mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SampleLoss {
    pub loss: f64,
    /// Unweighted masked mean square per residual channel.
    pub parts: Vec<f64>,
    /// Enforced solution fields.
    pub fields: GridField,
    /// d(loss)/d(raw output), one per variable.
    pub grad: Vec<Vec<f64>>,
}

impl Problem {
    pub fn new(
        pde: Pde,
        metrics: TransformMetrics,
        enforcers: Vec<BoundaryEnforcer>,
        fluid: Option<FluidParams>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if enforcers.len() != pde.variables().len() {
            return Err(Error::Shape(format!("{} needs {} boundary enforcers", pde.name(), pde.variables().len())));
        }
        if weights.len() != pde.residual_names().len() {
            return Err(Error::Shape(format!("{} needs {} loss weights", pde.name(), pde.residual_names().len())));
        }
        if pde == Pde::NavierStokes && fluid.is_none() {
            return Err(Error::Invalid("navier-stokes problem needs fluid parameters".into()));
        }
        let mask = metrics.grid.loss_mask();
        Ok(Self { pde, metrics, enforcers, fluid, weights, mask })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn enforce(&self, raw: &GridField) -> Result<GridField> {
        if raw.n_channels() != self.enforcers.len() || !raw.matches(&self.metrics.grid) {
            return Err(Error::Shape("raw output does not match the problem".into()));
        }
        let channels = self
            .enforcers
            .iter()
            .enumerate()
            .map(|(c, e)| (raw.names[c].clone(), e.apply(raw.channel(c))))
            .collect();
        GridField::from_channels(raw.n_xi, raw.n_eta, channels)
    }

    /// Loss of one sample and its gradient at the raw outputs, scaled by
    /// `scale` (1/batch size when accumulating a batch mean).
    pub fn loss_and_gradient(&self, raw: &GridField, source: Option<&[f64]>, scale: f64) -> Result<SampleLoss> {
        let fields = self.enforce(raw)?;
        let mut tape = Tape::new(&self.metrics);
        let vars = (0..fields.n_channels()).map(|c| tape.input(fields.channel(c).to_vec())).collect::<Result<Vec<_>>>()?;
        let res = residuals_on_tape(&mut tape, self.pde, &vars, source, self.fluid.as_ref())?;
        let n = self.mask.iter().filter(|&&b| b).count() as f64;
        let mut parts = Vec::with_capacity(res.len());
        let mut seeds = Vec::with_capacity(res.len());
        for (r, w) in res.iter().zip(&self.weights) {
            let vals = tape.value(*r);
            let ms = vals.iter().zip(&self.mask).filter(|(_, &b)| b).map(|(x, _)| x * x).sum::<f64>() / n;
            parts.push(ms);
            let seed: Vec<f64> =
                vals.iter().zip(&self.mask).map(|(x, &b)| if b { scale * w * 2.0 * x / n } else { 0.0 }).collect();
            seeds.push(seed);
        }
        let loss = parts.iter().zip(&self.weights).map(|(p, w)| p * w).sum::<f64>();
        let seed_refs: Vec<(Var, &[f64])> = res.iter().copied().zip(seeds.iter().map(|s| s.as_slice())).collect();
        let grads = tape.backward(&seed_refs)?;
        let grad = vars.iter().zip(&self.enforcers).map(|(v, e)| e.adjoint(&grads[v.index()])).collect();
        Ok(SampleLoss { loss, parts, fields, grad })
    }
}

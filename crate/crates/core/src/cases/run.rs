//! Training loop and evaluation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::model::{Checkpoint, ConvNet, History, OptimizerState};
use crate::oracle::{self, OracleOptions};
use crate::physics::{self, Pde};

use super::{Case, Instance};

/// What one optimizer step saw.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Iteration count after the step.
    pub iteration: u64,
    /// Batch-mean loss before the update.
    pub loss: f64,
    /// Batch-mean unweighted residual mean squares.
    pub parts: Vec<f64>,
    /// Indices into `case.train` of the batch members.
    pub members: Vec<usize>,
    /// Enforced output fields of each member (before the update).
    pub fields: Vec<GridField>,
}

/// Adam on the batch-mean physics loss over the training instances. Batches
/// are drawn from a per-epoch shuffle seeded with the training seed.
pub struct Trainer<'c> {
    pub case: &'c Case,
    pub net: ConvNet,
    pub optimizer: OptimizerState,
    pub iteration: u64,
    pub history: History,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl<'c> Trainer<'c> {
    pub fn new(case: &'c Case, seed: u64) -> Result<Self> {
        let net = ConvNet::initialized(case.net_config(), seed)?;
        let optimizer = OptimizerState::for_net(&net, case.def.train.lr);
        Ok(Self::with_state(case, net, optimizer, 0, seed))
    }

    /// Resume from a checkpoint. The batch order restarts from a fresh epoch.
    pub fn from_checkpoint(case: &'c Case, ckpt: Checkpoint, seed: u64) -> Result<Self> {
        if ckpt.net.config != case.net_config() {
            return Err(Error::Invalid("checkpoint network does not match the case".into()));
        }
        Ok(Self::with_state(case, ckpt.net, ckpt.optimizer, ckpt.iteration, seed))
    }

    fn with_state(case: &'c Case, net: ConvNet, optimizer: OptimizerState, iteration: u64, seed: u64) -> Self {
        let columns: Vec<String> = case.def.pde.residual_names().iter().map(|s| s.to_string()).collect();
        Self {
            case,
            net,
            optimizer,
            iteration,
            history: History::new(&columns),
            // a separate stream from the weight initialisation
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5ee_d0fb_a7c4),
            order: Vec::new(),
            cursor: 0,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { net: self.net.clone(), optimizer: self.optimizer.clone(), iteration: self.iteration }
    }

    pub(super) fn next_batch(&mut self) -> Vec<usize> {
        let n = self.case.train.len();
        let b = self.case.def.train.batch.min(n);
        if b == n {
            return (0..n).collect();
        }
        if self.cursor + b > self.order.len() {
            self.order = (0..n).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + b].to_vec();
        self.cursor += b;
        batch
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let members = self.next_batch();
        let scale = 1.0 / members.len() as f64;
        let n_res = self.case.def.pde.residual_names().len();
        let mut loss = 0.0;
        let mut parts = vec![0.0; n_res];
        let mut fields = Vec::with_capacity(members.len());
        let mut grads: Option<Vec<Vec<f64>>> = None;
        for &m in &members {
            let inst = &self.case.train[m];
            let raw = self.net.forward(&inst.input)?;
            let sl = inst.problem.loss_and_gradient(&raw, inst.source.as_deref(), scale)?;
            if !sl.loss.is_finite() {
                return Err(Error::NonFiniteLoss(self.iteration as usize));
            }
            loss += scale * sl.loss;
            parts.iter_mut().zip(&sl.parts).for_each(|(a, p)| *a += scale * p);
            let g = self.net.backward(&sl.grad)?;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.iter_mut().zip(b).for_each(|(x, y)| *x += y)),
            }
            fields.push(sl.fields);
        }
        let grads = grads.expect("batch is never empty");
        self.optimizer.step_net(&mut self.net, &grads)?;
        self.iteration += 1;
        self.history.push(self.iteration, loss, parts.clone());
        Ok(StepReport { iteration: self.iteration, loss, parts, members, fields })
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: History,
}

/// Run the configured number of iterations. With `out` set, writes
/// `history.csv`, `checkpoint.bin` and the periodic `checkpoint_<it>.bin`
/// files there. A non-finite loss stops the run; the last good state is
/// still written before the error is returned.
pub fn train(
    case: &Case,
    seed: u64,
    out: Option<&Path>,
    mut observe: impl FnMut(&StepReport),
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(case, seed)?;
    let every = case.def.train.checkpoint_every;
    let write = |t: &Trainer<'_>, name: &str| -> Result<()> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            t.checkpoint().write(&dir.join(name))?;
            std::fs::write(dir.join("history.csv"), t.history.to_csv())?;
        }
        Ok(())
    };
    for _ in 0..case.def.train.iterations {
        match t.step() {
            Ok(r) => observe(&r),
            Err(e) => {
                write(&t, "checkpoint.bin")?;
                return Err(e);
            }
        }
        if every > 0 && t.iteration % every == 0 {
            write(&t, &format!("checkpoint_{}.bin", t.iteration))?;
        }
    }
    write(&t, "checkpoint.bin")?;
    Ok(TrainOutcome { checkpoint: t.checkpoint(), history: t.history })
}

/// Oracle solution of a scalar case instance; `None` for flow cases.
pub fn reference_solution(inst: &Instance) -> Result<Option<Vec<f64>>> {
    let opts = OracleOptions::default();
    let m = inst.metrics();
    match inst.problem.pde {
        Pde::Heat => Ok(Some(oracle::solve_heat(&inst.mesh, m, &inst.specs[0], &opts)?.field)),
        Pde::Poisson => {
            let f = inst.source.as_deref().ok_or_else(|| Error::Invalid("poisson instance without a source".into()))?;
            Ok(Some(oracle::solve_poisson(&inst.mesh, m, &inst.specs[0], f, &opts)?.field))
        }
        Pde::NavierStokes => Ok(None),
    }
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub label: String,
    /// Physics loss of the prediction.
    pub loss: f64,
    /// Relative error against the oracle; `None` where no oracle exists.
    pub error: Option<f64>,
    pub fields: GridField,
}

/// Forward pass and scoring for each instance.
pub fn evaluate(net: &ConvNet, instances: &[&Instance]) -> Result<Vec<EvalRow>> {
    instances
        .iter()
        .map(|inst| {
            let raw = net.predict(&inst.input)?;
            let sl = inst.problem.loss_and_gradient(&raw, inst.source.as_deref(), 1.0)?;
            let error = match reference_solution(inst)? {
                Some(r) => Some(physics::relative_error(sl.fields.channel(0), &r)?),
                None => None,
            };
            Ok(EvalRow { label: inst.param.label(), loss: sl.loss, error, fields: sl.fields })
        })
        .collect()
}

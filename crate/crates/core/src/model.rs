//! Per-variable convolutional subnets, reverse-mode gradients and Adam.
//!
//! Every layer is a 5×5 convolution with padding 2 and stride 1, computed as
//! an im2col matrix product. Activations are retained by `forward` and
//! consumed by `backward`.

use std::fmt::Write as _;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridField;

pub const KERNEL: usize = 5;
const PAD: isize = 2;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "identity" | "none" => Some(Self::Identity),
            "relu" => Some(Self::Relu),
            "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        }
    }

    fn code(self) -> u8 {
        match self {
            Self::Identity => 0,
            Self::Relu => 1,
            Self::Tanh => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        [Self::Identity, Self::Relu, Self::Tanh].into_iter().find(|a| a.code() == c)
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Relu => x.max(0.0),
            Self::Tanh => x.tanh(),
        }
    }

    // derivative expressed through the activation's output
    fn slope(self, y: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - y * y,
        }
    }
}

/// One 5×5 convolution. `weights` is laid out `(c_out, c_in, 5, 5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn zeros(c_in: usize, c_out: usize, activation: Activation) -> Self {
        Self { c_in, c_out, weights: vec![0.0; c_out * c_in * TAPS], bias: vec![0.0; c_out], activation }
    }

    fn k(&self) -> usize {
        self.c_in * TAPS
    }

    /// Returns (im2col matrix, post-activation output).
    fn forward(&self, input: &[f64], h: usize, w: usize, wrap: Wrap) -> (Vec<f64>, Vec<f64>) {
        let hw = h * w;
        let cols = im2col(input, self.c_in, h, w, wrap);
        let mut out = vec![0.0; self.c_out * hw];
        for (co, row) in out.chunks_mut(hw).enumerate() {
            row.fill(self.bias[co]);
        }
        gemm(self.c_out, self.k(), hw, &self.weights, (self.k(), 1), &cols, (hw, 1), &mut out, 1.0);
        if self.activation != Activation::Identity {
            out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        }
        (cols, out)
    }

    /// Zero-padded convolution plus activation.
    pub fn apply(&self, input: &[f64], h: usize, w: usize) -> Result<Vec<f64>> {
        if input.len() != self.c_in * h * w {
            return Err(Error::Shape(format!(
                "layer expects {} values ({} channels of {h}x{w}), got {}",
                self.c_in * h * w,
                self.c_in,
                input.len()
            )));
        }
        Ok(self.forward(input, h, w, Wrap::default()).1)
    }

    /// Gradients of weights and bias, plus the input gradient when requested.
    fn backward(
        &self,
        cols: &[f64],
        out: &[f64],
        grad_out: &[f64],
        h: usize,
        w: usize,
        wrap: Wrap,
        want_input: bool,
    ) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
        let hw = h * w;
        let k = self.k();
        let gz: Vec<f64> = if self.activation == Activation::Identity {
            grad_out.to_vec()
        } else {
            grad_out.iter().zip(out).map(|(g, y)| g * self.activation.slope(*y)).collect()
        };
        let gb: Vec<f64> = gz.chunks(hw).map(|row| row.iter().sum()).collect();
        let mut gw = vec![0.0; self.c_out * k];
        // gW = gz · colsᵀ
        gemm(self.c_out, hw, k, &gz, (hw, 1), cols, (1, hw), &mut gw, 0.0);
        let gin = want_input.then(|| {
            // gcols = Wᵀ · gz
            let mut gcols = vec![0.0; k * hw];
            gemm(k, self.c_out, hw, &self.weights, (1, k), &gz, (hw, 1), &mut gcols, 0.0);
            col2im(&gcols, self.c_in, h, w, wrap)
        });
        (gw, gb, gin)
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Which axes wrap around instead of zero padding. A wrapped axis of n nodes
/// has period n − 1: its last node duplicates the first (a cut seam).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Wrap {
    pub xi: bool,
    pub eta: bool,
}

/// Source index for position `p` on an axis of `n` nodes, `None` in the zero
/// padding.
fn source(p: isize, n: usize, wrap: bool) -> Option<usize> {
    if (0..n as isize).contains(&p) {
        Some(p as usize)
    } else if wrap {
        Some(p.rem_euclid(n as isize - 1) as usize)
    } else {
        None
    }
}

/// For each tap, the (output, input) index pairs it connects.
fn tap_pairs(h: usize, w: usize, wrap: Wrap, dy: isize, dx: isize) -> impl Iterator<Item = (usize, usize)> {
    (0..h).flat_map(move |y| {
        let sy = source(y as isize + dy, h, wrap.eta);
        (0..w).filter_map(move |x| {
            let sy = sy?;
            let sx = source(x as isize + dx, w, wrap.xi)?;
            Some((y * w + x, sy * w + sx))
        })
    })
}

fn im2col(input: &[f64], c_in: usize, h: usize, w: usize, wrap: Wrap) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; c_in * TAPS * hw];
    for ky in 0..KERNEL {
        for kx in 0..KERNEL {
            let pairs: Vec<(usize, usize)> = tap_pairs(h, w, wrap, ky as isize - PAD, kx as isize - PAD).collect();
            for ci in 0..c_in {
                let plane = &input[ci * hw..(ci + 1) * hw];
                let row = &mut cols[((ci * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                for &(o, i) in &pairs {
                    row[o] = plane[i];
                }
            }
        }
    }
    cols
}

fn col2im(gcols: &[f64], c_in: usize, h: usize, w: usize, wrap: Wrap) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; c_in * hw];
    for ky in 0..KERNEL {
        for kx in 0..KERNEL {
            let pairs: Vec<(usize, usize)> = tap_pairs(h, w, wrap, ky as isize - PAD, kx as isize - PAD).collect();
            for ci in 0..c_in {
                let plane = &mut out[ci * hw..(ci + 1) * hw];
                let row = &gcols[((ci * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                for &(o, i) in &pairs {
                    plane[i] += row[o];
                }
            }
        }
    }
    out
}

/// Three hidden layers and a linear output layer emitting one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Subnet {
    pub variable: String,
    pub layers: Vec<ConvLayer>,
}

pub const HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub variables: Vec<String>,
    pub c_in: usize,
    pub hidden: [usize; HIDDEN_LAYERS],
    pub activation: Activation,
    /// Periodic padding; match the reference grid's periodic axes.
    pub wrap: Wrap,
}

impl NetConfig {
    pub fn new(variables: &[&str], c_in: usize) -> Self {
        Self {
            variables: variables.iter().map(|s| s.to_string()).collect(),
            c_in,
            hidden: [16, 32, 16],
            activation: Activation::Relu,
            wrap: Wrap::default(),
        }
    }
}

#[derive(Debug)]
struct Retained {
    h: usize,
    w: usize,
    // per subnet, per layer: (im2col matrix, output)
    layers: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

#[derive(Debug)]
pub struct ConvNet {
    pub config: NetConfig,
    pub subnets: Vec<Subnet>,
    retained: Option<Retained>,
}

impl Clone for ConvNet {
    fn clone(&self) -> Self {
        Self { config: self.config.clone(), subnets: self.subnets.clone(), retained: None }
    }
}

impl PartialEq for ConvNet {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.subnets == other.subnets
    }
}

impl ConvNet {
    /// Zero-initialized network.
    pub fn new(config: NetConfig) -> Result<Self> {
        if config.variables.is_empty() {
            return Err(Error::Invalid("network needs at least one output variable".into()));
        }
        if config.c_in == 0 || config.hidden.contains(&0) {
            return Err(Error::Invalid("channel counts must be positive".into()));
        }
        let subnets = config
            .variables
            .iter()
            .map(|v| {
                let mut widths = vec![config.c_in];
                widths.extend_from_slice(&config.hidden);
                let mut layers: Vec<ConvLayer> =
                    widths.windows(2).map(|p| ConvLayer::zeros(p[0], p[1], config.activation)).collect();
                layers.push(ConvLayer::zeros(config.hidden[HIDDEN_LAYERS - 1], 1, Activation::Identity));
                Subnet { variable: v.clone(), layers }
            })
            .collect();
        Ok(Self { config, subnets, retained: None })
    }

    pub fn initialized(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::new(config)?;
        net.init_weights(seed);
        Ok(net)
    }

    /// Weights ~ U(±√(1/(25·c_in))) per layer, biases zero.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in self.subnets.iter_mut().flat_map(|s| s.layers.iter_mut()) {
            let bound = (1.0 / (TAPS * layer.c_in) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
            layer.weights.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
            layer.bias.fill(0.0);
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.config.variables
    }

    fn check_input(&self, input: &GridField) -> Result<()> {
        if input.n_channels() != self.config.c_in {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.c_in,
                input.n_channels()
            )));
        }
        Ok(())
    }

    fn run(&self, input: &GridField) -> Result<(GridField, Retained)> {
        self.check_input(input)?;
        // grid fields are stored with ξ fastest, so the "width" axis is ξ
        let (h, w) = (input.n_eta, input.n_xi);
        let mut all = Vec::with_capacity(self.subnets.len());
        let mut outputs = Vec::with_capacity(self.subnets.len());
        for sub in &self.subnets {
            let mut layers = Vec::with_capacity(sub.layers.len());
            let mut x = input.values.clone();
            for layer in &sub.layers {
                let (cols, out) = layer.forward(&x, h, w, self.config.wrap);
                x = out.clone();
                layers.push((cols, out));
            }
            outputs.push((sub.variable.clone(), x));
            all.push(layers);
        }
        Ok((GridField::from_channels(w, h, outputs)?, Retained { h, w, layers: all }))
    }

    /// Forward pass retaining activations for a following `backward`.
    pub fn forward(&mut self, input: &GridField) -> Result<GridField> {
        let (out, retained) = self.run(input)?;
        self.retained = Some(retained);
        Ok(out)
    }

    /// Forward pass without retention.
    pub fn predict(&self, input: &GridField) -> Result<GridField> {
        self.run(input).map(|(out, _)| out)
    }

    /// Parameter gradients for the loss gradient at the raw outputs (one
    /// slice per variable). Consumes the retained activations.
    pub fn backward(&mut self, grad_out: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let retained = self.retained.take().ok_or(Error::NoActivations)?;
        let (h, w) = (retained.h, retained.w);
        if grad_out.len() != self.subnets.len() || grad_out.iter().any(|g| g.len() != h * w) {
            return Err(Error::Shape("output gradient does not match network outputs".into()));
        }
        let mut grads = Vec::with_capacity(self.n_tensors());
        for ((sub, layers), g) in self.subnets.iter().zip(&retained.layers).zip(grad_out) {
            let mut per_layer = Vec::with_capacity(sub.layers.len());
            let mut g = g.clone();
            for (l, layer) in sub.layers.iter().enumerate().rev() {
                let (cols, out) = &layers[l];
                let (gw, gb, gin) = layer.backward(cols, out, &g, h, w, self.config.wrap, l > 0);
                per_layer.push((gw, gb));
                if let Some(gin) = gin {
                    g = gin;
                }
            }
            for (gw, gb) in per_layer.into_iter().rev() {
                grads.push(gw);
                grads.push(gb);
            }
        }
        Ok(grads)
    }

    fn n_tensors(&self) -> usize {
        self.subnets.iter().map(|s| 2 * s.layers.len()).sum()
    }

    /// Parameter tensors in canonical order: per subnet, per layer, weights then bias.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut v = Vec::with_capacity(self.n_tensors());
        for layer in self.subnets.iter().flat_map(|s| &s.layers) {
            v.push(layer.weights.as_slice());
            v.push(layer.bias.as_slice());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(self.n_tensors());
        for layer in self.subnets.iter_mut().flat_map(|s| s.layers.iter_mut()) {
            v.push(layer.weights.as_mut_slice());
            v.push(layer.bias.as_mut_slice());
        }
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::with_capacity(self.n_tensors());
        for sub in &self.subnets {
            for l in 0..sub.layers.len() {
                v.push(format!("{}.layer{l}.weight", sub.variable));
                v.push(format!("{}.layer{l}.bias", sub.variable));
            }
        }
        v
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(shapes: &[usize], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_net(net: &ConvNet, lr: f64) -> Self {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        Self::new(&shapes, lr)
    }

    /// One bias-corrected Adam update. Nothing is modified when any gradient
    /// entry is non-finite.
    pub fn adam_step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>], names: &[String]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer has {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (t, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[t].len() || g.len() != self.m[t].len() {
                return Err(Error::Shape(format!("tensor {t} length mismatch")));
            }
            if let Some(k) = g.iter().position(|x| !x.is_finite()) {
                let name = names.get(t).cloned().unwrap_or_else(|| format!("tensor{t}"));
                return Err(Error::NonFiniteGradient(format!("{name}[{k}]")));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut ConvNet, grads: &[Vec<f64>]) -> Result<()> {
        let names = net.param_names();
        let mut params = net.params_mut();
        self.adam_step(&mut params, grads, &names)
    }
}

const MAGIC: &[u8; 8] = b"GPNNCKPT";
const VERSION: u32 = 1;

/// Network weights, optimizer state and iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: ConvNet,
    pub optimizer: OptimizerState,
    pub iteration: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        put_u32(&mut b, VERSION);
        put_u64(&mut b, self.iteration);
        let cfg = &self.net.config;
        put_u32(&mut b, cfg.c_in as u32);
        put_u32(&mut b, cfg.variables.len() as u32);
        for v in &cfg.variables {
            put_u32(&mut b, v.len() as u32);
            b.extend_from_slice(v.as_bytes());
        }
        for &h in &cfg.hidden {
            put_u32(&mut b, h as u32);
        }
        b.push(cfg.activation.code());
        b.push(cfg.wrap.xi as u8 | (cfg.wrap.eta as u8) << 1);
        let o = &self.optimizer;
        for x in [o.lr, o.beta1, o.beta2, o.eps] {
            put_f64(&mut b, x);
        }
        put_u64(&mut b, o.step);
        for group in [self.net.params(), o.m.iter().map(|v| v.as_slice()).collect(), o.v.iter().map(|v| v.as_slice()).collect()] {
            for t in group {
                put_u64(&mut b, t.len() as u64);
                t.iter().for_each(|&x| put_f64(&mut b, x));
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let mut r = Reader { b: bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.err("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(&format!("unsupported checkpoint version {version}")));
        }
        let iteration = r.u64()?;
        let c_in = r.u32()? as usize;
        let n_vars = r.u32()? as usize;
        let mut variables = Vec::with_capacity(n_vars);
        for _ in 0..n_vars {
            let len = r.u32()? as usize;
            let raw = r.take(len)?.to_vec();
            variables.push(String::from_utf8(raw).map_err(|_| r.err("variable name is not UTF-8"))?);
        }
        let mut hidden = [0usize; HIDDEN_LAYERS];
        for h in &mut hidden {
            *h = r.u32()? as usize;
        }
        let activation = Activation::from_code(r.take(1)?[0]).ok_or_else(|| r.err("unknown activation"))?;
        let flags = r.take(1)?[0];
        if flags > 3 {
            return Err(r.err("unknown padding flags"));
        }
        let wrap = Wrap { xi: flags & 1 != 0, eta: flags & 2 != 0 };
        let mut net = ConvNet::new(NetConfig { variables, c_in, hidden, activation, wrap })?;
        let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let step = r.u64()?;
        let read_group = |r: &mut Reader, shapes: &[usize]| -> Result<Vec<Vec<f64>>> {
            shapes
                .iter()
                .map(|&n| {
                    let len = r.u64()? as usize;
                    if len != n {
                        return Err(r.err(&format!("tensor length {len}, expected {n}")));
                    }
                    (0..n).map(|_| r.f64()).collect()
                })
                .collect()
        };
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let params = read_group(&mut r, &shapes)?;
        let m = read_group(&mut r, &shapes)?;
        let v = read_group(&mut r, &shapes)?;
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes"));
        }
        for (dst, src) in net.params_mut().into_iter().zip(&params) {
            dst.copy_from_slice(src);
        }
        Ok(Self { net, optimizer: OptimizerState { lr, beta1, beta2, eps, step, m, v }, iteration })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

fn put_u32(b: &mut Vec<u8>, x: u32) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, x: u64) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, x: f64) {
    b.extend_from_slice(&x.to_le_bytes());
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl Reader<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { path: self.path.to_string(), line: 0, msg: format!("byte {}: {msg}", self.pos) }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.b.len() {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// CSV training history: `iteration,loss,<channel names>`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub columns: Vec<String>,
    pub rows: Vec<(u64, f64, Vec<f64>)>,
}

impl History {
    pub fn new(columns: &[String]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, iteration: u64, loss: f64, parts: Vec<f64>) {
        self.rows.push((iteration, loss, parts));
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (it, loss, parts) in &self.rows {
            let _ = write!(s, "{it},{loss:e}");
            for p in parts {
                let _ = write!(s, ",{p:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn field(c: usize, nx: usize, ny: usize, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Uniform::new(-1.0, 1.0).unwrap();
        let names: Vec<String> = (0..c).map(|k| format!("c{k}")).collect();
        let channels = names.into_iter().map(|n| (n, (0..nx * ny).map(|_| d.sample(&mut rng)).collect())).collect();
        GridField::from_channels(nx, ny, channels).unwrap()
    }

    fn small(c_in: usize, vars: &[&str], act: Activation) -> NetConfig {
        NetConfig {
            variables: vars.iter().map(|s| s.to_string()).collect(),
            c_in,
            hidden: [3, 4, 2],
            activation: act,
            wrap: Wrap::default(),
        }
    }

    #[test]
    fn init_bounds_and_determinism() {
        let a = ConvNet::initialized(NetConfig::new(&["T"], 1), 7).unwrap();
        let b = ConvNet::initialized(NetConfig::new(&["T"], 1), 7).unwrap();
        assert_eq!(a, b);
        let first = &a.subnets[0].layers[0];
        assert!(first.weights.iter().all(|w| w.abs() <= 0.2));
        assert!(first.weights.iter().any(|w| w.abs() > 0.15));
        let l4 = ConvNet::initialized(NetConfig::new(&["T"], 4), 3).unwrap();
        let w = &l4.subnets[0].layers[0].weights;
        assert!(w.iter().all(|x| x.abs() <= 0.1));
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!(a.subnets.iter().flat_map(|s| &s.layers).all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = ConvNet::new(NetConfig::new(&["u", "v"], 2)).unwrap();
        let out = net.predict(&field(2, 9, 7, 1)).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
        assert_eq!(out.names, vec!["u", "v"]);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut layer = ConvLayer::zeros(1, 1, Activation::Identity);
        layer.weights[12] = 1.0;
        let input = field(1, 8, 6, 2);
        let out = layer.apply(&input.values, 6, 8).unwrap();
        assert_eq!(out, input.values);
    }

    #[test]
    fn shifted_kernel_zero_pads() {
        let mut layer = ConvLayer::zeros(1, 1, Activation::Identity);
        // tap (ky=2, kx=3) reads the right-hand neighbour
        layer.weights[2 * KERNEL + 3] = 1.0;
        let input: Vec<f64> = (0..12).map(|k| k as f64).collect();
        let out = layer.apply(&input, 3, 4).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0, 0.0, 5.0, 6.0, 7.0, 0.0, 9.0, 10.0, 11.0, 0.0]);
    }

    #[test]
    fn output_shape_follows_input() {
        let net = ConvNet::initialized(NetConfig::new(&["T"], 2), 1).unwrap();
        for (nx, ny) in [(16, 16), (31, 47), (64, 64)] {
            let out = net.predict(&field(2, nx, ny, 3)).unwrap();
            assert_eq!((out.n_xi, out.n_eta, out.n_channels()), (nx, ny, 1));
        }
    }

    #[test]
    fn wrong_channel_count_rejected() {
        let net = ConvNet::new(NetConfig::new(&["T"], 2)).unwrap();
        assert!(matches!(net.predict(&field(3, 8, 8, 0)), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut net = ConvNet::new(NetConfig::new(&["T"], 1)).unwrap();
        assert!(matches!(net.backward(&[vec![0.0; 64]]), Err(Error::NoActivations)));
        net.forward(&field(1, 8, 8, 0)).unwrap();
        net.backward(&[vec![1.0; 64]]).unwrap();
        assert!(matches!(net.backward(&[vec![1.0; 64]]), Err(Error::NoActivations)));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut net = ConvNet::initialized(small(2, &["a", "b"], Activation::Relu), 5).unwrap();
        net.forward(&field(2, 7, 6, 4)).unwrap();
        let g = net.backward(&[vec![0.0; 42], vec![0.0; 42]]).unwrap();
        assert!(g.iter().flatten().all(|&x| x == 0.0));
    }

    // loss = Σ_c Σ_n w_cn · out_cn², checked against central differences
    fn check_gradients(act: Activation, wrap: Wrap) {
        let input = field(2, 7, 6, 11);
        let mut net = ConvNet::initialized(NetConfig { wrap, ..small(2, &["a", "b"], act) }, 9).unwrap();
        for (k, b) in net.subnets.iter_mut().flat_map(|s| s.layers.iter_mut()).flat_map(|l| l.bias.iter_mut()).enumerate() {
            *b = 0.05 * (k % 3) as f64 - 0.03;
        }
        let w = field(2, 7, 6, 12).values;
        let loss = |n: &ConvNet| -> f64 {
            n.predict(&input).unwrap().values.iter().zip(&w).map(|(o, w)| w * o * o).sum()
        };
        let out = net.forward(&input).unwrap();
        let gout: Vec<Vec<f64>> = (0..2)
            .map(|c| out.channel(c).iter().zip(&w[c * 42..(c + 1) * 42]).map(|(o, w)| 2.0 * w * o).collect())
            .collect();
        let grads = net.backward(&gout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n_tensors = grads.len();
        for _ in 0..30 {
            let t = rand::Rng::random_range(&mut rng, 0..n_tensors);
            let k = rand::Rng::random_range(&mut rng, 0..grads[t].len());
            let h = 1e-5;
            let mut p = net.clone();
            p.params_mut()[t][k] += h;
            let mut m = net.clone();
            m.params_mut()[t][k] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            let an = grads[t][k];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "tensor {t} entry {k}: fd {fd} analytic {an}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_tanh() {
        check_gradients(Activation::Tanh, Wrap::default());
    }

    #[test]
    fn gradients_match_finite_differences_relu() {
        check_gradients(Activation::Relu, Wrap::default());
    }

    #[test]
    fn gradients_match_finite_differences_wrapped() {
        check_gradients(Activation::Tanh, Wrap { xi: true, eta: false });
        check_gradients(Activation::Relu, Wrap { xi: true, eta: true });
    }

    #[test]
    fn wrapped_shift_crosses_the_seam() {
        let mut layer = ConvLayer::zeros(1, 1, Activation::Identity);
        // right-hand neighbour two columns over
        layer.weights[2 * KERNEL + 4] = 1.0;
        // 5 columns, the last duplicating the first: period 4
        let input: Vec<f64> = vec![0.0, 1.0, 2.0, 3.0, 0.0];
        let (_, out) = layer.forward(&input, 1, 5, Wrap { xi: true, eta: false });
        assert_eq!(out, vec![2.0, 3.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn wrapped_network_keeps_the_seam_duplicate() {
        let cfg = NetConfig { wrap: Wrap { xi: true, eta: false }, ..NetConfig::new(&["T"], 1) };
        let net = ConvNet::initialized(cfg, 4).unwrap();
        let mut input = field(1, 9, 7, 5);
        for j in 0..7 {
            input.values[j * 9 + 8] = input.values[j * 9];
        }
        let out = net.predict(&input).unwrap();
        for j in 0..7 {
            assert_eq!(out.values[j * 9 + 8], out.values[j * 9]);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut st = OptimizerState::new(&[2], 1e-3);
        for _ in 0..5 {
            st.adam_step(&mut [&mut p[..]], &[vec![0.0, 0.0]], &[]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_constant_gradient_moves_by_lr() {
        let mut p = vec![0.0, 0.0];
        let mut st = OptimizerState::new(&[2], 1e-3);
        let mut prev = p.clone();
        for _ in 0..200 {
            st.adam_step(&mut [&mut p[..]], &[vec![3.0, -0.5]], &[]).unwrap();
            assert!(p[0] < prev[0] && p[1] > prev[1]);
            assert_relative_eq!(prev[0] - p[0], 1e-3, max_relative = 1e-4);
            prev = p.clone();
        }
    }

    #[test]
    fn adam_quadratic_bowl_decreases() {
        let mut p = vec![0.8, -0.3, 0.5];
        let scale = [1.0, 4.0, 0.25];
        let f = |p: &[f64]| p.iter().zip(scale).map(|(x, s)| s * x * x).sum::<f64>();
        let mut st = OptimizerState::new(&[3], 1e-3);
        let mut last = f(&p);
        for it in 0..1000 {
            let g: Vec<f64> = p.iter().zip(scale).map(|(x, s)| 2.0 * s * x).collect();
            st.adam_step(&mut [&mut p[..]], &[g], &[]).unwrap();
            let now = f(&p);
            if it > 10 {
                assert!(now < last, "iteration {it}: {now} >= {last}");
            }
            last = now;
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradient_by_name() {
        let mut p = vec![1.0];
        let mut st = OptimizerState::new(&[1], 1e-3);
        let err = st.adam_step(&mut [&mut p[..]], &[vec![f64::NAN]], &["T.layer0.weight".into()]).unwrap_err();
        assert!(err.to_string().contains("T.layer0.weight[0]"));
        assert_eq!(p, vec![1.0]);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let cfg = NetConfig { wrap: Wrap { xi: false, eta: true }, ..small(3, &["u", "v", "p"], Activation::Tanh) };
        let mut net = ConvNet::initialized(cfg, 21).unwrap();
        let mut opt = OptimizerState::for_net(&net, 1e-3);
        net.forward(&field(3, 6, 6, 0)).unwrap();
        let g = net.backward(&[vec![0.1; 36], vec![-0.2; 36], vec![0.3; 36]]).unwrap();
        opt.step_net(&mut net, &g).unwrap();
        let ck = Checkpoint { net, optimizer: opt, iteration: 1 };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "mem").is_err());
        assert!(Checkpoint::from_bytes(b"nonsense", "mem").is_err());
    }

    #[test]
    fn history_csv_layout() {
        let mut h = History::new(&["continuity".into(), "momentum_x".into()]);
        h.push(0, 1.5, vec![1.0, 0.5]);
        h.push(1, 0.25, vec![0.125, 0.125]);
        assert_eq!(h.to_csv(), "iteration,loss,continuity,momentum_x\n0,1.5e0,1e0,5e-1\n1,2.5e-1,1.25e-1,1.25e-1\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn gradient_scales_linearly(c in -3.0f64..3.0, seed in 0u64..100) {
            let mut net = ConvNet::initialized(small(1, &["T"], Activation::Relu), seed).unwrap();
            let input = field(1, 6, 5, seed);
            let g0 = field(1, 6, 5, seed + 1).values;
            net.forward(&input).unwrap();
            let a = net.backward(std::slice::from_ref(&g0)).unwrap();
            net.forward(&input).unwrap();
            let b = net.backward(&[g0.iter().map(|x| c * x).collect()]).unwrap();
            for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
                prop_assert!((c * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}

//! Uniform reference lattice and fields sampled on it.
//!
//! Fields are stored row-major with η as the slow axis: node `(i, j)` lives at
//! `j * n_xi + i`, where `i` walks along ξ and `j` along η.

use crate::error::{Error, Result};

/// Minimum node count per axis; the 5-point central stencil needs it.
pub const MIN_NODES: usize = 5;

/// The uniform rectangular computational lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceGrid {
    pub n_xi: usize,
    pub n_eta: usize,
    pub d_xi: f64,
    pub d_eta: f64,
    /// ξ wraps around: column `n_xi - 1` duplicates column 0 (a cut seam).
    pub periodic_xi: bool,
    /// η wraps around: row `n_eta - 1` duplicates row 0.
    pub periodic_eta: bool,
}

/// Location class of a node with respect to the stencil zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Boundary,
    /// Within two nodes of a non-periodic boundary, where one-sided stencils apply.
    NearBoundary,
    Interior,
}

impl ReferenceGrid {
    pub fn new(n_xi: usize, n_eta: usize) -> Result<Self> {
        Self::with_spacing(n_xi, n_eta, 1.0, 1.0)
    }

    pub fn with_spacing(n_xi: usize, n_eta: usize, d_xi: f64, d_eta: f64) -> Result<Self> {
        if n_xi < MIN_NODES {
            return Err(Error::GridTooSmall { axis: "xi", n: n_xi, min: MIN_NODES });
        }
        if n_eta < MIN_NODES {
            return Err(Error::GridTooSmall { axis: "eta", n: n_eta, min: MIN_NODES });
        }
        if !(d_xi > 0.0 && d_eta > 0.0 && d_xi.is_finite() && d_eta.is_finite()) {
            return Err(Error::Invalid(format!("spacings must be positive, got {d_xi}, {d_eta}")));
        }
        Ok(Self { n_xi, n_eta, d_xi, d_eta, periodic_xi: false, periodic_eta: false })
    }

    /// Unit-square reference rectangle: ξ, η ∈ [0, 1].
    pub fn unit(n_xi: usize, n_eta: usize) -> Result<Self> {
        Self::with_spacing(n_xi, n_eta, 1.0 / (n_xi - 1).max(1) as f64, 1.0 / (n_eta - 1).max(1) as f64)
    }

    pub fn periodic_in_xi(mut self, on: bool) -> Self {
        self.periodic_xi = on;
        self
    }

    pub fn periodic_in_eta(mut self, on: bool) -> Self {
        self.periodic_eta = on;
        self
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_xi * self.n_eta
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n_xi + i
    }

    pub fn xi(&self, i: usize) -> f64 {
        i as f64 * self.d_xi
    }

    pub fn eta(&self, j: usize) -> f64 {
        j as f64 * self.d_eta
    }

    /// Index of the node that owns the value at `(i, j)`; seam duplicates map
    /// back to their partner on the first column/row.
    #[inline]
    pub fn owner(&self, i: usize, j: usize) -> (usize, usize) {
        let i = if self.periodic_xi && i == self.n_xi - 1 { 0 } else { i };
        let j = if self.periodic_eta && j == self.n_eta - 1 { 0 } else { j };
        (i, j)
    }

    /// Whether `(i, j)` is a seam duplicate rather than an owned node.
    pub fn is_mirror(&self, i: usize, j: usize) -> bool {
        (self.periodic_xi && i == self.n_xi - 1) || (self.periodic_eta && j == self.n_eta - 1)
    }

    pub fn node_class(&self, i: usize, j: usize) -> NodeClass {
        let on_xi_edge = !self.periodic_xi && (i == 0 || i == self.n_xi - 1);
        let on_eta_edge = !self.periodic_eta && (j == 0 || j == self.n_eta - 1);
        if on_xi_edge || on_eta_edge {
            return NodeClass::Boundary;
        }
        let near_xi = !self.periodic_xi && (i < 2 || i + 2 >= self.n_xi);
        let near_eta = !self.periodic_eta && (j < 2 || j + 2 >= self.n_eta);
        if near_xi || near_eta {
            NodeClass::NearBoundary
        } else {
            NodeClass::Interior
        }
    }

    /// Nodes where PDE residuals enter the loss: every non-boundary node,
    /// counted once across a periodic seam.
    pub fn loss_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for j in 0..self.n_eta {
            for i in 0..self.n_xi {
                mask[self.idx(i, j)] =
                    self.node_class(i, j) != NodeClass::Boundary && !self.is_mirror(i, j);
            }
        }
        mask
    }

    /// Sample `f(ξ, η)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.n_eta {
            for i in 0..self.n_xi {
                out.push(f(self.xi(i), self.eta(j)));
            }
        }
        out
    }

    pub fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!(
                "{what}: expected {} values for a {}x{} grid, got {len}",
                self.len(),
                self.n_xi,
                self.n_eta
            )));
        }
        Ok(())
    }
}

/// One side of the reference rectangle.
///
/// Bottom and top run along ξ at η = 0 and η = max; left and right run along
/// η at ξ = 0 and ξ = max. Points on every edge are ordered by increasing
/// reference coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Edge {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    pub fn from_index(k: usize) -> Option<Edge> {
        Edge::ALL.get(k).copied()
    }

    pub fn from_name(s: &str) -> Option<Edge> {
        match s {
            "bottom" | "0" => Some(Edge::Bottom),
            "right" | "1" => Some(Edge::Right),
            "top" | "2" => Some(Edge::Top),
            "left" | "3" => Some(Edge::Left),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Edge::Bottom => "bottom",
            Edge::Right => "right",
            Edge::Top => "top",
            Edge::Left => "left",
        }
    }

    pub fn opposite(self) -> Edge {
        match self {
            Edge::Bottom => Edge::Top,
            Edge::Top => Edge::Bottom,
            Edge::Left => Edge::Right,
            Edge::Right => Edge::Left,
        }
    }

    /// Edges at constant η (bottom/top) run along ξ.
    pub fn is_eta_edge(self) -> bool {
        matches!(self, Edge::Bottom | Edge::Top)
    }

    /// Number of nodes along this edge.
    pub fn len(self, grid: &ReferenceGrid) -> usize {
        if self.is_eta_edge() {
            grid.n_xi
        } else {
            grid.n_eta
        }
    }

    /// Lattice coordinates of the `k`-th node of this edge.
    pub fn node(self, grid: &ReferenceGrid, k: usize) -> (usize, usize) {
        match self {
            Edge::Bottom => (k, 0),
            Edge::Top => (k, grid.n_eta - 1),
            Edge::Left => (0, k),
            Edge::Right => (grid.n_xi - 1, k),
        }
    }
}

/// A multi-channel scalar field on the reference lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub n_xi: usize,
    pub n_eta: usize,
    pub names: Vec<String>,
    /// Channel-major: `values[c * n_eta * n_xi + j * n_xi + i]`.
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(n_xi: usize, n_eta: usize, names: &[&str]) -> Self {
        Self {
            n_xi,
            n_eta,
            names: names.iter().map(|s| s.to_string()).collect(),
            values: vec![0.0; names.len() * n_xi * n_eta],
        }
    }

    pub fn from_channels(n_xi: usize, n_eta: usize, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let plane = n_xi * n_eta;
        let mut names = Vec::with_capacity(channels.len());
        let mut values = Vec::with_capacity(plane * channels.len());
        for (name, data) in channels {
            if data.len() != plane {
                return Err(Error::Shape(format!("channel {name}: {} values, expected {plane}", data.len())));
            }
            names.push(name);
            values.extend_from_slice(&data);
        }
        Ok(Self { n_xi, n_eta, names, values })
    }

    pub fn n_channels(&self) -> usize {
        self.names.len()
    }

    pub fn plane(&self) -> usize {
        self.n_xi * self.n_eta
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane();
        &self.values[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.plane();
        &mut self.values[c * p..(c + 1) * p]
    }

    pub fn channel_by_name(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|c| self.channel(c))
    }

    pub fn matches(&self, grid: &ReferenceGrid) -> bool {
        self.n_xi == grid.n_xi && self.n_eta == grid.n_eta
    }
}

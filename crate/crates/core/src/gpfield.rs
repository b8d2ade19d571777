//! Gaussian random source fields as truncated Karhunen-Loève expansions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::meshgen::CurvilinearMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPConfig {
    pub sigma0: f64,
    pub length_scale: f64,
    pub k: usize,
}

impl Default for GPConfig {
    fn default() -> Self {
        Self { sigma0: 100.0, length_scale: 0.5, k: 10 }
    }
}

impl GPConfig {
    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if !(self.sigma0 > 0.0) || !(self.length_scale > 0.0) {
            return Err(Error::Invalid("sigma0 and length scale must be positive".into()));
        }
        if self.k == 0 || self.k > n_nodes {
            return Err(Error::Invalid(format!("truncation k = {} outside 1..={n_nodes}", self.k)));
        }
        Ok(())
    }
}

/// K_ij = σ0² exp(−|x_i − x_j|² / (2l²)) over all mesh nodes, in physical coordinates.
pub fn build_kernel_matrix(mesh: &CurvilinearMesh, cfg: &GPConfig) -> DMatrix<f64> {
    let n = mesh.x.len();
    let s2 = cfg.sigma0 * cfg.sigma0;
    let inv = 1.0 / (2.0 * cfg.length_scale * cfg.length_scale);
    DMatrix::from_fn(n, n, |i, j| {
        let dx = mesh.x[i] - mesh.x[j];
        let dy = mesh.y[i] - mesh.y[j];
        s2 * (-(dx * dx + dy * dy) * inv).exp()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KLBasis {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm nodal modes, one per eigenvalue.
    pub modes: Vec<Vec<f64>>,
    /// Σλ_{1..k} / trace(K).
    pub energy_fraction: f64,
}

impl KLBasis {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn modes_field(&self, n_xi: usize, n_eta: usize) -> Result<GridField> {
        let ch = self.modes.iter().enumerate().map(|(i, m)| (format!("mode{}", i + 1), m.clone())).collect();
        GridField::from_channels(n_xi, n_eta, ch)
    }
}

/// Leading `k` eigenpairs of a symmetric matrix.
pub fn kl_decompose(kmat: &DMatrix<f64>, k: usize) -> Result<KLBasis> {
    let n = kmat.nrows();
    if kmat.ncols() != n {
        return Err(Error::Shape(format!("kernel matrix is {}x{}", n, kmat.ncols())));
    }
    let trace = kmat.trace();
    let eig = SymmetricEigen::new(kmat.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
    let positive = order.iter().filter(|&&i| eig.eigenvalues[i] > lmax * 1e-14 * n as f64).count();
    if k == 0 || k > positive {
        return Err(Error::Rank { requested: k, available: positive });
    }
    let mut eigenvalues = Vec::with_capacity(k);
    let mut modes = Vec::with_capacity(k);
    for &i in &order[..k] {
        eigenvalues.push(eig.eigenvalues[i]);
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        // fix the sign so the largest-magnitude entry is positive
        let big = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        modes.push(v);
    }
    let energy_fraction = eigenvalues.iter().sum::<f64>() / trace;
    Ok(KLBasis { eigenvalues, modes, energy_fraction })
}

/// f = Σ √λ_i φ_i ω_i.
pub fn sample_source(basis: &KLBasis, omega: &[f64]) -> Result<Vec<f64>> {
    if omega.len() != basis.k() {
        return Err(Error::Shape(format!("{} coefficients for {} modes", omega.len(), basis.k())));
    }
    let n = basis.modes.first().map_or(0, Vec::len);
    let mut f = vec![0.0; n];
    for ((lam, mode), w) in basis.eigenvalues.iter().zip(&basis.modes).zip(omega) {
        let a = lam.sqrt() * w;
        f.iter_mut().zip(mode).for_each(|(f, m)| *f += a * m);
    }
    Ok(f)
}

/// `k` independent standard-normal coefficients from a seeded stream.
pub fn draw_omega(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()
}

//! Synthetic ground-truth covariance generators and Gaussian sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::estimators::{cm_covariance, EstimatorError, KroneckerExpansion, SampleSet};
use crate::matcore::{
    eigh, kron, solve_discrete_lyapunov, spectral_norm, symmetrize, DenseMatrix, MatError,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("separation rank {r} out of range 1..={max}")]
    RankOutOfRange { r: usize, max: usize },
    #[error("target spectral norm must lie in (0, 1), got {0}")]
    TargetNormOutOfRange(f64),
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    IndefiniteCovariance { min_eig: f64 },
    #[error("draw produced a zero matrix; cannot rescale")]
    DegenerateDraw,
}

/// Seed plus stream id for the counter-based generator (ChaCha8). Identical
/// `(seed, stream)` pairs reproduce identical draws, so parallel Monte Carlo
/// substreams are reproducible independent of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed { seed, stream: 0 }
    }

    /// Same seed, different substream.
    pub fn stream(self, stream: u64) -> Self {
        RngSeed { seed: self.seed, stream }
    }

    pub(crate) fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_row_major(rows, cols, data).expect("normal draws are finite")
}

/// Ground truth produced by [`random_kp_sum_covariance`]: the covariance and
/// its canonical (SVD-orthogonalized) Kronecker expansion.
#[derive(Debug, Clone)]
pub struct KpSumTruth {
    pub sigma0: DenseMatrix,
    pub expansion: KroneckerExpansion,
}

/// Draws `Σ0 = Σ_{γ=1}^r A_γ ⊗ B_γ` with each factor `C Cᵀ` for a square
/// standard-normal `C`; positive definite with probability 1.
pub fn random_kp_sum_covariance(
    p: usize,
    q: usize,
    r: usize,
    seed: RngSeed,
) -> Result<KpSumTruth, GenError> {
    let max = (p * p).min(q * q);
    if r == 0 || r > max {
        return Err(GenError::RankOutOfRange { r, max });
    }
    let mut rng = seed.rng();
    let mut sigma0 = DenseMatrix::zeros(p * q, p * q);
    for _ in 0..r {
        let c_a = standard_normal_matrix(p, p, &mut rng);
        let a = &c_a * &c_a.transpose();
        let c_b = standard_normal_matrix(q, q, &mut rng);
        let b = &c_b * &c_b.transpose();
        sigma0 = &sigma0 + &kron(&a, &b)?;
    }
    let sigma0 = symmetrize(&sigma0)?;
    // Canonical expansion with orthogonal factors, from the rank-r
    // truncation in the rearranged domain (exact here by construction).
    let expansion = cm_covariance(&sigma0, r, p, q)?.expansion;
    Ok(KpSumTruth { sigma0, expansion })
}

/// Standard-normal square matrix rescaled to an exact spectral norm.
pub fn random_stable_matrix(m: usize, target_norm: f64, seed: RngSeed) -> Result<DenseMatrix, GenError> {
    if !(target_norm > 0.0 && target_norm < 1.0) {
        return Err(GenError::TargetNormOutOfRange(target_norm));
    }
    let mut rng = seed.rng();
    let g = standard_normal_matrix(m, m, &mut rng);
    let norm = spectral_norm(&g)?;
    if norm == 0.0 {
        return Err(GenError::DegenerateDraw);
    }
    Ok(g.scale(target_norm / norm))
}

/// First-order vector autoregression `Z_t = Φ Z_{t−1} + ε_t`.
///
/// `horizon` is the time index `N`; the block covariance spans `N + 1`
/// blocks of size `m`.
#[derive(Debug, Clone)]
pub struct Var1Spec {
    phi: DenseMatrix,
    sigma_eps: DenseMatrix,
    horizon: usize,
}

impl Var1Spec {
    pub fn new(phi: DenseMatrix, sigma_eps: DenseMatrix, horizon: usize) -> Result<Self, GenError> {
        if !phi.is_square() {
            return Err(GenError::Mat(MatError::NotSquare("Var1Spec")));
        }
        let norm = spectral_norm(&phi)?;
        if norm >= 1.0 {
            return Err(GenError::Mat(MatError::UnstableTransition { norm }));
        }
        if sigma_eps.rows() != phi.rows() || !sigma_eps.is_square() {
            return Err(GenError::Mat(MatError::DimensionMismatch {
                op: "Var1Spec",
                detail: format!(
                    "innovation covariance is {}x{} but the process dimension is {}",
                    sigma_eps.rows(),
                    sigma_eps.cols(),
                    phi.rows()
                ),
            }));
        }
        if sigma_eps.symmetry_defect() > 1e-8 * sigma_eps.max_abs().max(1.0) {
            return Err(GenError::Mat(MatError::InvalidArgument(
                "innovation covariance must be symmetric".into(),
            )));
        }
        Ok(Var1Spec { phi, sigma_eps, horizon })
    }

    /// Identity innovation covariance.
    pub fn with_identity_noise(phi: DenseMatrix, horizon: usize) -> Result<Self, GenError> {
        let m = phi.rows();
        Var1Spec::new(phi, DenseMatrix::identity(m), horizon)
    }

    pub fn process_dim(&self) -> usize {
        self.phi.rows()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn phi(&self) -> &DenseMatrix {
        &self.phi
    }
}

/// Lag-`τ` autocovariances `Σ(0), Σ(1), …, Σ(N)` of the stationary process:
/// `Σ(0)` solves the discrete Lyapunov equation and `Σ(τ) = Σ(0)(Φᵀ)^τ`.
pub fn var1_autocovariances(spec: &Var1Spec) -> Result<Vec<DenseMatrix>, GenError> {
    let sigma0 = solve_discrete_lyapunov(&spec.phi, &spec.sigma_eps)?;
    let phi_t = spec.phi.transpose();
    let mut blocks = Vec::with_capacity(spec.horizon + 1);
    blocks.push(sigma0);
    for tau in 1..=spec.horizon {
        let next = &blocks[tau - 1] * &phi_t;
        blocks.push(next);
    }
    Ok(blocks)
}

/// Block-Toeplitz covariance of the stacked process: block `(i, j)` equals
/// `Σ(j − i)`, with `Σ(−τ) = Σ(τ)ᵀ`, so `Σ(N)` sits in the top-right block.
pub fn var1_block_toeplitz(spec: &Var1Spec) -> Result<DenseMatrix, GenError> {
    let blocks = var1_autocovariances(spec)?;
    let m = spec.process_dim();
    let n_blocks = spec.horizon + 1;
    let transposed: Vec<DenseMatrix> = blocks.iter().map(|b| b.transpose()).collect();
    let mut out = DenseMatrix::zeros(n_blocks * m, n_blocks * m);
    for i in 0..n_blocks {
        for j in 0..n_blocks {
            let block = if j >= i { &blocks[j - i] } else { &transposed[i - j] };
            out.set_block(i * m, j * m, block);
        }
    }
    Ok(out)
}

/// Stationary sample path of length `len` (rows are `Z_0, Z_1, …`).
pub fn var1_series(spec: &Var1Spec, len: usize, seed: RngSeed) -> Result<DenseMatrix, GenError> {
    let m = spec.process_dim();
    let sigma0 = solve_discrete_lyapunov(&spec.phi, &spec.sigma_eps)?;
    let l0 = psd_square_root(&sigma0)?;
    let l_eps = psd_square_root(&spec.sigma_eps)?;
    let mut rng = seed.rng();
    let mut out = DenseMatrix::zeros(len, m);
    let mut state = {
        let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        l0.mul_vec(&g)
    };
    for t in 0..len {
        for (j, &v) in state.iter().enumerate() {
            out.set(t, j, v);
        }
        let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let noise = l_eps.mul_vec(&g);
        let propagated = spec.phi.mul_vec(&state);
        state = propagated.iter().zip(&noise).map(|(a, b)| a + b).collect();
    }
    Ok(out)
}

/// Symmetric psd square root via eigendecomposition, clipping eigenvalues
/// within `-1e-8·λmax` of zero; more negative values are rejected.
fn psd_square_root(sigma: &DenseMatrix) -> Result<DenseMatrix, GenError> {
    let (vals, vecs) = eigh(sigma)?;
    let lambda_max = vals.first().copied().unwrap_or(0.0).max(0.0);
    let floor = -1e-8 * lambda_max.max(1.0);
    let mut roots = Vec::with_capacity(vals.len());
    for &v in &vals {
        if v < floor {
            return Err(GenError::IndefiniteCovariance { min_eig: v });
        }
        roots.push(v.max(0.0).sqrt());
    }
    let n = sigma.rows();
    let mut scaled = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            scaled.set(i, j, vecs.get(i, j) * roots[j]);
        }
    }
    Ok(&scaled * &vecs.transpose())
}

/// Draws `n` zero-mean Gaussian samples with covariance `Σ0`.
pub fn sample_gaussian(
    sigma0: &DenseMatrix,
    p: usize,
    q: usize,
    n: usize,
    seed: RngSeed,
) -> Result<SampleSet, GenError> {
    let d = p * q;
    if sigma0.rows() != d || sigma0.cols() != d {
        return Err(GenError::Mat(MatError::DimensionMismatch {
            op: "sample_gaussian",
            detail: format!("covariance is {}x{}, expected {d}x{d}", sigma0.rows(), sigma0.cols()),
        }));
    }
    if sigma0.symmetry_defect() > 1e-8 * sigma0.max_abs().max(1.0) {
        return Err(GenError::Mat(MatError::InvalidArgument(
            "covariance must be symmetric".into(),
        )));
    }
    let root = psd_square_root(sigma0)?;
    let mut rng = seed.rng();
    let g = standard_normal_matrix(n, d, &mut rng);
    // Row t is (L g_t)ᵀ = g_tᵀ L for the symmetric root L.
    let data = &g * &root;
    Ok(SampleSet::new(p, q, data)?)
}

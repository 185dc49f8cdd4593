//! Empirical validation of the estimator's supporting theory: operator-norm
//! Monte Carlo for the rearranged sample covariance, the oracle inequality,
//! the Kronecker spectrum of block-Toeplitz covariances and its variational /
//! Gram-Schmidt / row-subtraction bounds, and the minimal separation rank.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::{self, min_theory_t, rate_ratio, scm, EstimatorError, SampleSet};
use crate::matcore::{rearrange, singular_values, DenseMatrix, MatError};
use crate::synthgen::{var1_autocovariances, var1_block_toeplitz, GenError, RngSeed, Var1Spec};

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("projector check failed: {0}")]
    NotProjector(String),
    #[error("grid must be non-empty")]
    EmptyGrid,
}

/// Parameters of the operator-norm tail bound: `c0` is the spectral norm of
/// the true covariance, `t` the tail parameter, `eps_prime` the net
/// resolution in `(0, 1/2)`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BoundParams {
    pub c0: f64,
    pub t: f64,
    pub eps_prime: f64,
}

impl BoundParams {
    /// Smallest admissible `t` for the given `eps_prime`, with the absolute
    /// constants of the Gaussian-chaos moment bound.
    pub fn with_min_t(c0: f64, eps_prime: f64) -> Self {
        BoundParams {
            c0,
            t: min_theory_t(eps_prime),
            eps_prime,
        }
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(BoundError::InvalidParams(format!(
                "c0 must be positive, got {}",
                self.c0
            )));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime < 0.5) {
            return Err(BoundError::InvalidParams(format!(
                "eps_prime must lie in (0, 1/2), got {}",
                self.eps_prime
            )));
        }
        let t_min = min_theory_t(self.eps_prime);
        if !(self.t.is_finite() && self.t >= t_min) {
            return Err(BoundError::InvalidParams(format!(
                "t = {} is below the minimum {t_min:.4} for eps_prime = {}",
                self.t, self.eps_prime
            )));
        }
        Ok(())
    }

    /// Nominal exception probability `2·M^(−t/4C)` with `C = max(C₁, C₂)`.
    pub fn exception_probability(&self, p: usize, q: usize, n: usize) -> f64 {
        let m = p.max(q).max(n) as f64;
        let c = estimators::chaos_constant_c1().max(estimators::chaos_constant_c2());
        2.0 * m.powf(-self.t / (4.0 * c))
    }
}

/// Spectral norm of the rearranged estimation error `R(Ŝ − Σ0)`.
pub fn permuted_error_norm(
    s_hat: &DenseMatrix,
    sigma0: &DenseMatrix,
    p: usize,
    q: usize,
) -> Result<f64, BoundError> {
    if s_hat.rows() != sigma0.rows() || s_hat.cols() != sigma0.cols() {
        return Err(BoundError::Mat(MatError::DimensionMismatch {
            op: "permuted_error_norm",
            detail: format!(
                "{}x{} vs {}x{}",
                s_hat.rows(),
                s_hat.cols(),
                sigma0.rows(),
                sigma0.cols()
            ),
        }));
    }
    let delta = rearrange(&(s_hat - sigma0), p, q)?;
    Ok(singular_values(&delta)?.first().copied().unwrap_or(0.0))
}

/// High-probability bound on `‖R(Ŝ − Σ0)‖₂`:
/// `(C₀ t / (1 − 2ε′)) · max{x, √x}` with `x = (p² + q² + log M)/n`.
pub fn opnorm_rate_bound(params: &BoundParams, p: usize, q: usize, n: usize) -> Result<f64, BoundError> {
    params.validate()?;
    if n == 0 {
        return Err(BoundError::InvalidParams("n must be positive".into()));
    }
    let x = rate_ratio(p, q, n);
    Ok(params.c0 * params.t / (1.0 - 2.0 * params.eps_prime) * x.max(x.sqrt()))
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `y = a·x² + b`.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Result<QuadraticFit, BoundError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(BoundError::EmptyGrid);
    }
    let n = xs.len() as f64;
    let sx2: f64 = xs.iter().map(|x| x * x).sum();
    let sx4: f64 = xs.iter().map(|x| x.powi(4)).sum();
    let sy: f64 = ys.iter().sum();
    let sx2y: f64 = xs.iter().zip(ys).map(|(x, y)| x * x * y).sum();
    let det = sx4 * n - sx2 * sx2;
    if det.abs() < 1e-12 * sx4.max(1.0) {
        return Err(BoundError::InvalidParams(
            "degenerate grid for the quadratic fit".into(),
        ));
    }
    let a = (sx2y * n - sx2 * sy) / det;
    let b = (sx4 * sy - sx2 * sx2y) / det;
    let mean = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (a * x * x + b)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(QuadraticFit { a, b, r_squared })
}

#[derive(Debug, Clone)]
pub struct OpnormGrowth {
    pub p_grid: Vec<usize>,
    /// Mean of `‖R(Ŝ − I)‖₂²` over trials, per grid point.
    pub means: Vec<f64>,
    pub fit: QuadraticFit,
}

/// Monte Carlo growth of the squared rearranged-error norm in `p`, under the
/// trivial separation-rank-1 covariance `Σ0 = I`, with a quadratic fit.
pub fn opnorm_growth_experiment(
    q: usize,
    n: usize,
    p_grid: &[usize],
    trials: usize,
    seed: RngSeed,
) -> Result<OpnormGrowth, BoundError> {
    if p_grid.is_empty() {
        return Err(BoundError::EmptyGrid);
    }
    if trials == 0 || n == 0 || q == 0 {
        return Err(BoundError::InvalidParams(
            "trials, n and q must be positive".into(),
        ));
    }
    let mut means = Vec::with_capacity(p_grid.len());
    for (pi, &p) in p_grid.iter().enumerate() {
        let d = p * q;
        let per_trial: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let stream = 1 + (pi * trials + trial) as u64;
                let mut rng = seed.stream(stream).rng();
                let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
                let z = DenseMatrix::from_row_major(n, d, data).expect("finite draws");
                let samples = SampleSet::new(p, q, z)?;
                let s_hat = scm(&samples)?;
                let norm = permuted_error_norm(&s_hat, &DenseMatrix::identity(d), p, q)?;
                Ok::<f64, BoundError>(norm * norm)
            })
            .collect::<Result<_, _>>()?;
        means.push(per_trial.iter().sum::<f64>() / trials as f64);
    }
    let xs: Vec<f64> = p_grid.iter().map(|&p| p as f64).collect();
    let fit = fit_quadratic(&xs, &means)?;
    Ok(OpnormGrowth {
        p_grid: p_grid.to_vec(),
        means,
        fit,
    })
}

/// Constant in front of the rank penalty of the oracle inequality.
pub fn oracle_penalty_constant() -> f64 {
    (1.0 + std::f64::consts::SQRT_2).powi(2) / 4.0
}

#[derive(Debug, Clone)]
pub struct OracleCheck {
    /// `‖R(Σ̂ − Σ0)‖_F²`.
    pub lhs: f64,
    /// `Σ_{k>r} σ_k²(R0) + ((1+√2)²/4)·λ²·r` for `r = 0..=r₀`.
    pub rhs_per_r: Vec<f64>,
    pub min_rhs: f64,
    pub argmin_r: usize,
    pub holds: bool,
}

/// Checks the oracle inequality for a fitted covariance against the truth at
/// the regularization level used. The hypothesis `λ ≥ 2‖R(Ŝ − Σ0)‖₂` is the
/// caller's to report; the check itself evaluates the conclusion.
pub fn oracle_inequality_check(
    sigma_hat: &DenseMatrix,
    sigma0: &DenseMatrix,
    lambda: f64,
    p: usize,
    q: usize,
) -> Result<OracleCheck, BoundError> {
    let diff = rearrange(&(sigma_hat - sigma0), p, q)?;
    let lhs = diff.frobenius_norm().powi(2);
    let sigma = kron_spectrum(sigma0, p, q)?;
    let kappa = oracle_penalty_constant();
    let r0 = sigma.len();
    // Tail sums Σ_{k>r} σ_k² computed back to front.
    let mut tails = vec![0.0f64; r0 + 1];
    for r in (0..r0).rev() {
        tails[r] = tails[r + 1] + sigma[r] * sigma[r];
    }
    let rhs_per_r: Vec<f64> = (0..=r0)
        .map(|r| tails[r] + kappa * lambda * lambda * r as f64)
        .collect();
    let (argmin_r, &min_rhs) = rhs_per_r
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .expect("non-empty");
    let holds = lhs <= min_rhs * (1.0 + 1e-12) + 1e-12;
    Ok(OracleCheck {
        lhs,
        rhs_per_r,
        min_rhs,
        argmin_r,
        holds,
    })
}

/// Singular values of the rearranged matrix, non-increasing, padded with
/// trailing zeros to length `min(p², q²)`.
pub fn kron_spectrum(sigma0: &DenseMatrix, p: usize, q: usize) -> Result<Vec<f64>, BoundError> {
    let r0 = rearrange(sigma0, p, q)?;
    let mut sigma = singular_values(&r0)?;
    sigma.resize((p * p).min(q * q), 0.0);
    Ok(sigma)
}

/// Variational upper bound on the squared `(k+1)`-th singular value:
/// `‖(I − P_k) R0ᵀ‖₂²` for an orthogonal projector `P_k` of the row space.
pub fn variational_bound(r0: &DenseMatrix, p_k: &DenseMatrix) -> Result<f64, BoundError> {
    let q2 = r0.cols();
    if p_k.rows() != q2 || p_k.cols() != q2 {
        return Err(BoundError::NotProjector(format!(
            "projector is {}x{}, expected {q2}x{q2}",
            p_k.rows(),
            p_k.cols()
        )));
    }
    let scale = p_k.max_abs().max(1.0);
    if p_k.symmetry_defect() > 1e-8 * scale {
        return Err(BoundError::NotProjector("not symmetric".into()));
    }
    let idempotency_defect = (&(p_k * p_k) - p_k).max_abs();
    if idempotency_defect > 1e-8 * scale {
        return Err(BoundError::NotProjector(format!(
            "not idempotent (defect {idempotency_defect:.3e})"
        )));
    }
    let rt = r0.transpose();
    let residual = &rt - &(p_k * &rt);
    let top = singular_values(&residual)?.first().copied().unwrap_or(0.0);
    Ok(top * top)
}

/// Orthonormal basis spanning the vectorized Toeplitz blocks, built by
/// Gram-Schmidt in the order `Σ(0), Σ(1), Σ(−1), Σ(2), Σ(−2), …` (the input
/// is expected interleaved that way). Entries whose residual falls below
/// `1e-10` of their original norm are linearly dependent and dropped.
pub fn gs_toeplitz_basis(blocks: &[DenseMatrix]) -> Result<Vec<Vec<f64>>, BoundError> {
    if blocks.is_empty() {
        return Err(BoundError::EmptyGrid);
    }
    let m = blocks[0].rows();
    if blocks.iter().any(|b| b.rows() != m || b.cols() != m) {
        return Err(BoundError::InvalidParams(
            "all blocks must be square with equal dimension".into(),
        ));
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for block in blocks {
        let v = block.vec_col_major();
        let original = norm(&v);
        if original == 0.0 {
            continue;
        }
        let mut residual = v;
        // Two projection passes keep the basis orthonormal to machine
        // precision even for nearly dependent inputs.
        for _ in 0..2 {
            for b in &basis {
                let coefficient = dot(&residual, b);
                for (r, e) in residual.iter_mut().zip(b) {
                    *r -= coefficient * e;
                }
            }
        }
        let remaining = norm(&residual);
        if remaining < 1e-10 * original {
            continue;
        }
        for r in residual.iter_mut() {
            *r /= remaining;
        }
        basis.push(residual);
    }
    Ok(basis)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Spectrum of the rearranged block-Toeplitz covariance with its bound
/// curves, each indexed by the projector rank `k`.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Singular values `σ_1 ≥ σ_2 ≥ …` of the rearranged covariance.
    pub sigma: Vec<f64>,
    /// `σ_{k+1}²`.
    pub exact: Vec<f64>,
    /// Frobenius relaxation at the optimal (SVD) basis: `‖(I − V_k V_kᵀ) R0ᵀ‖_F²`.
    pub frob_opt: Vec<f64>,
    /// Same relaxation with the Gram-Schmidt Toeplitz basis.
    pub frob_gs: Vec<f64>,
    /// Analytic row-subtraction tail, defined at odd `k` and linearly
    /// interpolated at even `k`.
    pub gs_tail: Vec<f64>,
}

/// Computes the exact Kronecker spectrum of the block-Toeplitz covariance of
/// a VAR(1) process together with its three upper-bound curves.
///
/// The factor dimensions must match the process: `p = N + 1` time blocks and
/// `q = m` process coordinates.
pub fn toeplitz_spectrum_bounds(
    spec: &Var1Spec,
    p: usize,
    q: usize,
) -> Result<SpectrumReport, BoundError> {
    if p != spec.horizon() + 1 || q != spec.process_dim() {
        return Err(BoundError::InvalidParams(format!(
            "factors ({p}, {q}) do not match the process: expected p = N+1 = {}, q = m = {}",
            spec.horizon() + 1,
            spec.process_dim()
        )));
    }
    let sigma0 = var1_block_toeplitz(spec)?;
    let r0 = rearrange(&sigma0, p, q)?;
    let decomp = crate::matcore::svd(&r0)?;
    let r_max = (p * p).min(q * q);
    let mut sigma = decomp.singular_values.clone();
    sigma.resize(r_max, 0.0);

    let exact: Vec<f64> = sigma.iter().map(|s| s * s).collect();

    // Frobenius relaxation of the variational bound, evaluated by explicitly
    // projecting out the leading right singular vectors one at a time.
    let rt = r0.transpose();
    let mut frob_opt = Vec::with_capacity(r_max);
    let mut residual = rt.clone();
    frob_opt.push(residual.frobenius_norm().powi(2));
    for k in 1..r_max {
        if k <= decomp.singular_values.len() {
            let v_k = decomp.v.column(k - 1);
            project_out(&mut residual, &v_k);
        }
        frob_opt.push(residual.frobenius_norm().powi(2));
    }

    // Same relaxation with the Gram-Schmidt basis built from the blocks in
    // the order Σ(0), Σ(1), Σ(−1), Σ(2), …
    let autocovs = var1_autocovariances(spec)?;
    let mut interleaved = Vec::with_capacity(2 * spec.horizon() + 1);
    interleaved.push(autocovs[0].clone());
    for tau in 1..=spec.horizon() {
        interleaved.push(autocovs[tau].clone());
        interleaved.push(autocovs[tau].transpose());
    }
    let gs = gs_toeplitz_basis(&interleaved)?;
    let mut frob_gs = Vec::with_capacity(r_max);
    let mut residual = rt;
    frob_gs.push(residual.frobenius_norm().powi(2));
    for k in 1..r_max {
        if k <= gs.len() {
            project_out(&mut residual, &gs[k - 1]);
        }
        frob_gs.push(residual.frobenius_norm().powi(2));
    }

    // Row-subtraction tail: at odd k = 2k′+1 the first k basis vectors
    // annihilate the Σ(0) rows and the ±τ rows up to |τ| = k′, leaving
    // p·Σ_{l>k′} (‖Σ(l)‖_F² + ‖Σ(−l)‖_F²). Even k interpolate linearly.
    let n_lags = spec.horizon();
    let block_energy: Vec<f64> = autocovs
        .iter()
        .map(|b| {
            let f = b.frobenius_norm();
            let ft = b.transpose().frobenius_norm();
            f * f + ft * ft
        })
        .collect();
    let odd_tail = |k_prime: usize| -> f64 {
        (k_prime + 1..=n_lags).map(|l| block_energy[l]).sum::<f64>() * p as f64
    };
    let gs_tail_at = |k: usize| -> f64 {
        if k == 0 {
            // σ₁² ≤ ‖R0‖_F², the trivial bound.
            exact.iter().sum::<f64>()
        } else if k % 2 == 1 {
            odd_tail((k - 1) / 2)
        } else {
            0.5 * (gs_tail_at_odd(k - 1, &odd_tail) + gs_tail_at_odd(k + 1, &odd_tail))
        }
    };
    fn gs_tail_at_odd(k: usize, odd_tail: &dyn Fn(usize) -> f64) -> f64 {
        odd_tail((k - 1) / 2)
    }
    let gs_tail: Vec<f64> = (0..r_max).map(gs_tail_at).collect();

    Ok(SpectrumReport {
        sigma,
        exact,
        frob_opt,
        frob_gs,
        gs_tail,
    })
}

/// Removes the component of every column of `m` along the unit vector `v`.
fn project_out(m: &mut DenseMatrix, v: &[f64]) {
    let cols = m.cols();
    for j in 0..cols {
        let mut coefficient = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            coefficient += vi * m.get(i, j);
        }
        for (i, &vi) in v.iter().enumerate() {
            m.set(i, j, m.get(i, j) - coefficient * vi);
        }
    }
}

/// Minimal separation rank guaranteeing approximation within tolerance `eps`
/// for exponentially decaying block norms: `⌈log(pq/ε) / log(1/u)⌉`.
pub fn min_separation_rank(p: usize, q: usize, u: f64, eps: f64) -> Result<usize, BoundError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(BoundError::InvalidParams(format!(
            "decay rate u must lie in (0, 1), got {u}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(BoundError::InvalidParams(format!(
            "tolerance must lie in (0, 1), got {eps}"
        )));
    }
    if p == 0 || q == 0 {
        return Err(BoundError::InvalidParams("dimensions must be positive".into()));
    }
    let ratio = ((p * q) as f64 / eps).ln() / (1.0 / u).ln();
    Ok(ratio.ceil().max(1.0) as usize)
}

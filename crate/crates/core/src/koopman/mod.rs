//! EDMD fit of the Koopman matrix, its generator, the generator basis, the
//! coefficient vector `Γ` and the identified Persidskii model.
//!
//! Representation convention: lifted snapshots satisfy
//! `P(y_k, u_{k+1}) ≈ K_repᵀ P(x_k, u_k)`, and the generator basis matrices
//! satisfy `L_{ij,rep}ᵀ P ≈ G_j ∂P/∂χ_i`, so that `L_rep ≈ Σ λ_{ij} L_{ij,rep}`.

mod extraction;
mod model;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dictionary::{DictError, Dictionary};
use crate::dynsys::{DynError, SnapshotDataset};
use crate::matlib::{matrix_exp, matrix_log_with, pinv_from_svd, vec, LinalgError, LogOptions, Mat, Svd};
use crate::scalar::Real;

pub use extraction::{extract_blocks, extract_uniform, extraction_btilde, extraction_e};
pub use model::{predict, IdentDiagnostics, ModelFile, PersidskiiModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoopmanError {
    #[error("dictionary does not match the data: {0}")]
    Dimension(String),
    #[error("generator undefined: {source}; try a smaller sampling period or richer excitation data")]
    Generator { source: LinalgError },
    #[error("generator-basis regression is rank deficient (rank {rank} of {count}); the lifting functions are inadequate on the sample points")]
    BasisRank { rank: usize, count: usize },
    #[error("invalid model: {0}")]
    Model(String),
    #[error(transparent)]
    Dict(#[from] DictError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Gram condition number above which the dictionary is flagged.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct KoopmanApprox<T> {
    pub k_rep: Mat<T>,
    pub l_rep: Option<Mat<T>>,
    pub t_c: T,
    /// `(1/N) Σ_k ‖P(y_k, u_{k+1}) − K_repᵀ P(x_k, u_k)‖`.
    pub residual: T,
    /// Condition number of the snapshot Gram matrix `XᵀX`.
    pub gram_condition: T,
    /// `‖exp(L_rep T_c) − K_rep‖_F`, set once the generator is computed.
    pub log_residual: Option<T>,
    pub warnings: Vec<String>,
}

fn lifted_rows<T: Real>(
    dict: &Dictionary<T>,
    data: &SnapshotDataset<T>,
) -> Result<(Mat<T>, Mat<T>), KoopmanError> {
    if data.state_dim() != dict.state_dim() || data.input_dim() != dict.input_dim() {
        return Err(KoopmanError::Dimension(format!(
            "data has (n, m) = ({}, {}), dictionary ({}, {})",
            data.state_dim(),
            data.input_dim(),
            dict.state_dim(),
            dict.input_dim()
        )));
    }
    let x_rows: Vec<Vec<T>> = data
        .pairs
        .iter()
        .map(|p| dict.eval_p(&p.x, &p.u))
        .collect::<Result<_, _>>()?;
    let y_rows: Vec<Vec<T>> = data
        .pairs
        .iter()
        .map(|p| dict.eval_p(&p.y, &p.u_next))
        .collect::<Result<_, _>>()?;
    Ok((Mat::from_rows(&x_rows)?, Mat::from_rows(&y_rows)?))
}

/// `K_rep = X† Y` with `X`, `Y` the stacked lifted snapshots.
pub fn edmd_fit<T: Real>(data: &SnapshotDataset<T>, dict: &Dictionary<T>) -> Result<KoopmanApprox<T>, KoopmanError> {
    data.validate()?;
    let (x, y) = lifted_rows(dict, data)?;
    let mut warnings = Vec::new();
    let (count, nh) = (data.len(), dict.lifting_len());
    if count < nh {
        warnings.push(format!("{count} snapshot pairs for {nh} lifting functions; the fit is underdetermined"));
    }
    let svd = Svd::new(&x)?;
    let k_rep = pinv_from_svd(&svd, svd.default_tolerance()).matmul(&y)?;
    let smin = svd.singular_values.last().copied().unwrap_or_else(T::zero);
    let smax = svd.singular_values.first().copied().unwrap_or_else(T::zero);
    let gram_condition = if smin > T::zero() {
        (smax / smin) * (smax / smin)
    } else {
        T::infinity()
    };
    if !(gram_condition <= T::lit(GRAM_CONDITION_LIMIT)) {
        warnings.push(format!(
            "snapshot Gram matrix is ill-conditioned (condition number {:.3e}); consider a smaller lifting dictionary",
            gram_condition.as_f64()
        ));
    }
    let pred = x.matmul(&k_rep)?;
    let residual = (0..count)
        .map(|k| {
            (0..nh)
                .map(|l| {
                    let d = y[(k, l)] - pred[(k, l)];
                    d * d
                })
                .sum::<T>()
                .sqrt()
        })
        .sum::<T>()
        / T::from_count(count);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(KoopmanApprox {
        k_rep,
        l_rep: None,
        t_c: data.t_c,
        residual,
        gram_condition,
        log_residual: None,
        warnings,
    })
}

/// `L_rep = ln(K_rep) / T_c` (principal branch).
pub fn generator_from_koopman<T: Real>(
    mut approx: KoopmanApprox<T>,
    opts: &LogOptions,
) -> Result<KoopmanApprox<T>, KoopmanError> {
    let log = matrix_log_with(&approx.k_rep, opts).map_err(|source| KoopmanError::Generator { source })?;
    let l_rep = log.scale(T::one() / approx.t_c);
    let recon = matrix_exp(&l_rep.scale(approx.t_c))?;
    approx.log_residual = Some((&recon - &approx.k_rep).norm_fro());
    approx.l_rep = Some(l_rep);
    Ok(approx)
}

/// The matrices `L_{ij,rep}` stored at `(i, j) ↦ i·N_F + j` (0-based).
#[derive(Clone, Debug)]
pub struct GeneratorBasis<T> {
    pub mats: Vec<Mat<T>>,
    /// Root-mean-square regression residual per `(i, j)`.
    pub fit_residuals: Vec<T>,
    pub coords: usize,
    pub basis_len: usize,
}

impl<T: Real> GeneratorBasis<T> {
    pub fn get(&self, i: usize, j: usize) -> &Mat<T> {
        &self.mats[i * self.basis_len + j]
    }

    pub fn max_residual(&self) -> T {
        self.fit_residuals.iter().fold(T::zero(), |a, &b| a.max(b))
    }
}

/// Least-squares representation of each `G_j ∂/∂χ_i` on `span{P}` over the
/// sample points `χ_s`: `C = argmin Σ_s ‖G_j(χ_s) ∂P/∂χ_i(χ_s) − Cᵀ P(χ_s)‖²`.
pub fn generator_basis<T: Real>(dict: &Dictionary<T>, samples: &[Vec<T>]) -> Result<GeneratorBasis<T>, KoopmanError> {
    let (n, m) = (dict.state_dim(), dict.input_dim());
    let (nh, nf) = (dict.lifting_len(), dict.basis_len());
    if let Some(bad) = samples.iter().find(|s| s.len() != n + m) {
        return Err(KoopmanError::Dimension(format!("sample point of length {}", bad.len())));
    }
    if samples.len() < 5 * nh {
        log::warn!(
            "{} generator-basis samples for {nh} lifting functions (at least {} recommended)",
            samples.len(),
            5 * nh
        );
    }
    let p_rows: Vec<Vec<T>> = samples.iter().map(|s| dict.eval_p_chi(s)).collect::<Result<_, _>>()?;
    let g_rows: Vec<Vec<T>> = samples.iter().map(|s| dict.eval_g_chi(s)).collect::<Result<_, _>>()?;
    let phi = Mat::from_rows(&p_rows)?;
    let svd = Svd::new(&phi)?;
    let tol = svd.default_tolerance();
    let rank = svd.rank(tol);
    if rank < nh {
        return Err(KoopmanError::BasisRank { rank, count: nh });
    }
    let phi_pinv = pinv_from_svd(&svd, tol);
    let scount = samples.len();
    let mut mats = Vec::with_capacity((n + m) * nf);
    let mut fit_residuals = Vec::with_capacity((n + m) * nf);
    for i in 0..n + m {
        let dp: Vec<Vec<T>> = samples.iter().map(|s| dict.eval_dp_chi(s, i)).collect::<Result<_, _>>()?;
        for j in 0..nf {
            let target = Mat::from_fn(scount, nh, |s, l| g_rows[s][j] * dp[s][l]);
            let c = phi_pinv.matmul(&target)?;
            let fit = phi.matmul(&c)?;
            let res = (&target - &fit).norm_fro() / T::from_count(scount).sqrt();
            mats.push(c);
            fit_residuals.push(res);
        }
    }
    Ok(GeneratorBasis {
        mats,
        fit_residuals,
        coords: n + m,
        basis_len: nf,
    })
}

/// The dataset's own points `(x_k, u_k)` followed by `extra` uniform draws
/// over their bounding box inflated by `inflate` (relative, per side).
pub fn generator_samples<T: Real>(data: &SnapshotDataset<T>, extra: usize, inflate: f64, seed: u64) -> Vec<Vec<T>> {
    let mut pts: Vec<Vec<T>> = data
        .pairs
        .iter()
        .map(|p| p.x.iter().chain(&p.u).copied().collect())
        .collect();
    let dims = data.state_dim() + data.input_dim();
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for p in &pts {
        for (d, v) in p.iter().enumerate() {
            lo[d] = lo[d].min(v.as_f64());
            hi[d] = hi[d].max(v.as_f64());
        }
    }
    for d in 0..dims {
        let half = 0.5 * (hi[d] - lo[d]);
        let pad = if half > 0.0 { inflate * half } else { inflate.max(1e-3) };
        lo[d] -= pad;
        hi[d] += pad;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        pts.push((0..dims).map(|d| T::lit(rng.random_range(lo[d]..=hi[d]))).collect());
    }
    pts
}

#[derive(Clone, Debug)]
pub struct GammaFit<T> {
    /// `Γ = [λ_11 … λ_{(n+m)N_F}]ᵀ`.
    pub gamma: Vec<T>,
    /// `‖Σ λ_{ij} L_{ij,rep} − L_rep‖_F`.
    pub residual: T,
    pub rank: usize,
    pub warnings: Vec<String>,
}

/// `Γ = [vec L_11,rep … vec L_{(n+m)N_F},rep]† vec(L_rep)`.
pub fn solve_gamma<T: Real>(approx: &KoopmanApprox<T>, basis: &GeneratorBasis<T>) -> Result<GammaFit<T>, KoopmanError> {
    let l_rep = approx
        .l_rep
        .as_ref()
        .ok_or_else(|| KoopmanError::Model("generator not computed".into()))?;
    solve_gamma_for(l_rep, basis)
}

pub fn solve_gamma_for<T: Real>(l_rep: &Mat<T>, basis: &GeneratorBasis<T>) -> Result<GammaFit<T>, KoopmanError> {
    let cols = basis.mats.len();
    if basis.mats.iter().any(|l| l.shape() != l_rep.shape()) {
        return Err(KoopmanError::Dimension("generator basis and generator have different sizes".into()));
    }
    let rows = l_rep.rows() * l_rep.cols();
    let mut stack = Mat::zeros(rows, cols);
    for (c, l) in basis.mats.iter().enumerate() {
        stack.as_mut_slice()[c * rows..(c + 1) * rows].copy_from_slice(l.as_slice());
    }
    let svd = Svd::new(&stack)?;
    let tol = svd.default_tolerance();
    let rank = svd.rank(tol);
    let mut warnings = Vec::new();
    if rank < cols {
        let w = format!("stacked generator basis has rank {rank} of {cols}; returning the minimum-norm coefficients");
        log::warn!("{w}");
        warnings.push(w);
    }
    let target = vec(l_rep);
    let gamma = pinv_from_svd(&svd, tol).mul_vec(&target);
    let fitted = stack.mul_vec(&gamma);
    let residual = fitted
        .iter()
        .zip(&target)
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum::<T>()
        .sqrt();
    Ok(GammaFit {
        gamma,
        residual,
        rank,
        warnings,
    })
}

/// Options of the identification chain.
#[derive(Clone, Debug)]
pub struct IdentifyOptions {
    pub log: LogOptions,
    /// Uniform draws added to the data points for the generator basis;
    /// `None` draws as many as there are snapshot pairs.
    pub extra_samples: Option<usize>,
    pub box_inflation: f64,
    pub sample_seed: u64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            log: LogOptions::default(),
            extra_samples: None,
            box_inflation: 0.2,
            sample_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Identification<T> {
    pub approx: KoopmanApprox<T>,
    pub basis: GeneratorBasis<T>,
    pub gamma: GammaFit<T>,
    pub model: PersidskiiModel<T>,
}

/// Runs EDMD, the generator, the generator basis, `Γ` and the extraction.
pub fn identify<T: Real>(
    data: &SnapshotDataset<T>,
    dict: &Dictionary<T>,
    opts: &IdentifyOptions,
) -> Result<Identification<T>, KoopmanError> {
    let approx = generator_from_koopman(edmd_fit(data, dict)?, &opts.log)?;
    let extra = opts.extra_samples.unwrap_or(data.len());
    let samples = generator_samples(data, extra, opts.box_inflation, opts.sample_seed);
    let basis = generator_basis(dict, &samples)?;
    let gamma = solve_gamma(&approx, &basis)?;
    let mut model = PersidskiiModel::from_gamma(&gamma.gamma, dict)?;
    model.diagnostics = Some(IdentDiagnostics {
        edmd_residual: approx.residual.as_f64(),
        gram_condition: approx.gram_condition.as_f64(),
        log_residual: approx.log_residual.map_or(0.0, |v| v.as_f64()),
        gamma_residual: gamma.residual.as_f64(),
        basis_max_residual: basis.max_residual().as_f64(),
        lifting: dict.lifting_names().to_vec(),
    });
    Ok(Identification {
        approx,
        basis,
        gamma,
        model,
    })
}

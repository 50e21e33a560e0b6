//! Empirical restricted-isometry estimation over the implicit Kronecker
//! dictionary, the closed-form `C sqrt(s ln n / m)` bound, and orthogonal
//! matching pursuit as the sparse-recovery counterpart of synthesis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CosaError, Result};
use crate::numerics::{cholesky_solve, condition_from_singular_values, mean_std, percentile, singular_values, Matrix};
use crate::projection::{DictionaryView, ProjectionPair};
use crate::randgen::{derive_seed, RngStream};

/// The fraction used for the empirical constant.
pub const RIP_PERCENTILE: f64 = 0.95;
/// Smallest Monte-Carlo sample count accepted by [`estimate_rip`].
pub const MIN_SAMPLES: usize = 100;
/// Ratios kept on an estimate for histogramming.
pub const RETAINED_RATIOS: usize = 100_000;
/// OMP refuses least-squares systems worse conditioned than this.
pub const OMP_MAX_CONDITION: f64 = 1e12;

/// An s-sparse coefficient vector over the `a * b` core positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Validates sorted distinct in-range support and nonzero finite values.
    pub fn new(dim: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(CosaError::arg("sparse vector needs a non-empty support"));
        }
        Self::check(dim, &support, &values)?;
        if values.iter().any(|&v| v == 0.0) {
            return Err(CosaError::arg("sparse vector values must be nonzero"));
        }
        Ok(SparseVector { dim, support, values })
    }

    /// Recovery output: may be empty and may carry exact zeros from a least-squares fit.
    fn recovered(dim: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::check(dim, &support, &values)?;
        Ok(SparseVector { dim, support, values })
    }

    fn check(dim: usize, support: &[usize], values: &[f64]) -> Result<()> {
        if support.len() != values.len() {
            return Err(CosaError::arg("support and values differ in length"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CosaError::arg("support must be strictly increasing"));
        }
        if support.last().is_some_and(|&k| k >= dim) {
            return Err(CosaError::arg(format!("support index out of range for dim {dim}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CosaError::arg("sparse vector values must be finite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn support(&self) -> &[usize] {
        &self.support
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&k, &v) in self.support.iter().zip(&self.values) {
            out[k] = v;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Result<SparseVector> {
        SparseVector::new(
            self.dim,
            self.support.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Uniform random `s`-subset of `0..dim` by partial Fisher-Yates, then N(0, 1)
/// values on the chosen positions, all from `RngStream::new(seed)`.
pub fn sample_sparse_vector(seed: u64, dim: usize, s: usize) -> Result<SparseVector> {
    if s == 0 || s > dim {
        return Err(CosaError::arg(format!("sparsity {s} must be in 1..={dim}")));
    }
    let mut rng = RngStream::new(seed);
    let mut idx: Vec<usize> = (0..dim).collect();
    for t in 0..s {
        let j = t + rng.next_below((dim - t) as u64) as usize;
        idx.swap(t, j);
    }
    let mut entries: Vec<(usize, f64)> = idx[..s]
        .iter()
        .map(|&k| {
            let mut v = rng.next_normal();
            while v == 0.0 {
                v = rng.next_normal();
            }
            (k, v)
        })
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    let (support, values) = entries.into_iter().unzip();
    SparseVector::new(dim, support, values)
}

/// `||Psi alpha||^2 / ||alpha||^2`.
pub fn isometry_ratio(view: &DictionaryView<'_>, alpha: &SparseVector) -> Result<f64> {
    let denom = alpha.norm_sq();
    if denom == 0.0 {
        return Err(CosaError::arg("isometry ratio of a zero vector"));
    }
    Ok(view.sparse_energy(alpha)? / denom)
}

/// Dense-core variant of [`isometry_ratio`]; goes through `L Y R` directly.
pub fn isometry_ratio_dense(view: &DictionaryView<'_>, alpha: &[f64]) -> Result<f64> {
    let denom: f64 = alpha.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(CosaError::arg("isometry ratio of a zero vector"));
    }
    let out = view.apply_dense(alpha)?;
    Ok(crate::numerics::frobenius_norm(&out).powi(2) / denom)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RipEstimate {
    pub s: usize,
    pub num_samples: usize,
    /// First [`RETAINED_RATIOS`] isometry ratios in sample order.
    pub ratios: Option<Vec<f64>>,
    pub delta: f64,
    pub base_seed: u64,
}

/// Monte-Carlo RIP constant: the 95th percentile of `|r_i - 1|` over `num_samples`
/// random s-sparse vectors, sample `i` drawn from `derive_seed(base_seed, i)`.
///
/// Samples run on the current rayon pool and are reduced in index order.
pub fn estimate_rip(view: &DictionaryView<'_>, s: usize, num_samples: usize, base_seed: u64) -> Result<RipEstimate> {
    estimate_rip_with(view, s, num_samples, base_seed, false)
}

pub fn estimate_rip_with(
    view: &DictionaryView<'_>,
    s: usize,
    num_samples: usize,
    base_seed: u64,
    keep_ratios: bool,
) -> Result<RipEstimate> {
    if num_samples < MIN_SAMPLES {
        return Err(CosaError::arg(format!(
            "at least {MIN_SAMPLES} samples are required, got {num_samples}"
        )));
    }
    let dim = view.pair().atoms();
    let ratios: Vec<f64> = (0..num_samples as u64)
        .into_par_iter()
        .map(|i| {
            let alpha = sample_sparse_vector(derive_seed(base_seed, i), dim, s)?;
            isometry_ratio(view, &alpha)
        })
        .collect::<Result<Vec<f64>>>()?;
    let deviations: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    let delta = percentile(&deviations, RIP_PERCENTILE)?;
    Ok(RipEstimate {
        s,
        num_samples,
        ratios: keep_ratios.then(|| ratios.into_iter().take(RETAINED_RATIOS).collect()),
        delta,
        base_seed,
    })
}

/// Parameters of `delta_s <= C sqrt(s ln(n_ambient) / m_eff)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipTheoryConfig {
    pub c: f64,
    pub m_eff: f64,
    pub n_ambient: f64,
    /// Failure probability the bound is quoted at; carried for reporting only.
    pub eta: f64,
}

impl RipTheoryConfig {
    pub fn new(c: f64, m_eff: f64, n_ambient: f64) -> Result<Self> {
        let cfg = RipTheoryConfig {
            c,
            m_eff,
            n_ambient,
            eta: 0.01,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.m_eff >= 1.0) || !(self.n_ambient >= 2.0) {
            return Err(CosaError::arg(format!(
                "bound needs C > 0, m_eff >= 1, n_ambient >= 2 (got C={}, m_eff={}, n_ambient={})",
                self.c, self.m_eff, self.n_ambient
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(CosaError::arg(format!("eta must be in (0, 1), got {}", self.eta)));
        }
        Ok(())
    }
}

/// `C * sqrt(s * ln(n_ambient) / m_eff)`, natural logarithm.
pub fn theoretical_bound(cfg: &RipTheoryConfig, s: usize) -> Result<f64> {
    cfg.validate()?;
    if s == 0 {
        return Err(CosaError::arg("bound needs s >= 1"));
    }
    Ok(cfg.c * (s as f64 * cfg.n_ambient.ln() / cfg.m_eff).sqrt())
}

/// `bound / delta`; infinite when the empirical constant is zero.
pub fn conservative_factor(empirical: &RipEstimate, bound: f64) -> f64 {
    factor(bound, empirical.delta)
}

fn factor(bound: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        f64::INFINITY
    } else {
        bound / delta
    }
}

/// How the bound parameters are chosen per study row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSettings {
    pub c: f64,
    /// Effective measurement count; `None` means `m * n`.
    pub m_eff: Option<f64>,
    /// Ambient dimension; `None` means `a * b`.
    pub n_ambient: Option<f64>,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            c: 1.0,
            m_eff: None,
            n_ambient: None,
        }
    }
}

impl BoundSettings {
    pub fn resolve(&self, m: usize, n: usize, a: usize, b: usize) -> Result<RipTheoryConfig> {
        RipTheoryConfig::new(
            self.c,
            self.m_eff.unwrap_or((m * n) as f64),
            self.n_ambient.unwrap_or((a * b) as f64),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipStudyConfig {
    pub m: usize,
    pub n: usize,
    pub configs: Vec<(usize, usize)>,
    pub sparsities: Vec<usize>,
    pub num_samples: usize,
    pub matrix_seeds: Vec<u64>,
    pub orthonormalize: bool,
    pub bound: BoundSettings,
}

impl RipStudyConfig {
    /// Base dims (512, 256), four compression configs, s in {5, 10, 20},
    /// 1000 samples, five matrix seeds.
    pub fn reference_preset() -> Self {
        RipStudyConfig {
            m: 512,
            n: 256,
            configs: vec![(32, 8), (64, 16), (128, 32), (256, 64)],
            sparsities: vec![5, 10, 20],
            num_samples: 1000,
            matrix_seeds: vec![1, 2, 3, 4, 5],
            orthonormalize: false,
            bound: BoundSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreDims {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipStudyRow {
    pub config: CoreDims,
    pub s: usize,
    pub delta_mean: f64,
    pub delta_std: f64,
    pub coherence: f64,
    pub bound: f64,
    /// `None` when the mean empirical constant is zero.
    pub conservative_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipStudyReport {
    pub rows: Vec<RipStudyRow>,
}

/// Sampling base seed for one (matrix seed, sparsity) cell. Indices 0 and 1 of a
/// matrix seed belong to `L` and `R`.
pub fn sample_base_seed(matrix_seed: u64, s: usize) -> u64 {
    derive_seed(derive_seed(matrix_seed, 2), s as u64)
}

/// Full cross product of configs and sparsities; each cell is averaged over the
/// matrix seeds (mean and population std of the per-seed estimates).
pub fn run_rip_study(cfg: &RipStudyConfig) -> Result<RipStudyReport> {
    if cfg.configs.is_empty() || cfg.sparsities.is_empty() || cfg.matrix_seeds.is_empty() {
        return Err(CosaError::arg("rip study needs configs, sparsities and matrix seeds"));
    }
    let mut rows = Vec::with_capacity(cfg.configs.len() * cfg.sparsities.len());
    for &(a, b) in &cfg.configs {
        let pairs = cfg
            .matrix_seeds
            .par_iter()
            .map(|&seed| ProjectionPair::new(seed, cfg.m, cfg.n, a, b, cfg.orthonormalize))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<DictionaryView<'_>> = pairs.iter().map(DictionaryView::new).collect();
        let coherences = if a * b >= 2 {
            views.iter().map(|v| v.coherence()).collect::<Result<Vec<_>>>()?
        } else {
            vec![0.0; views.len()]
        };
        let (coherence, _) = mean_std(&coherences);
        let theory = cfg.bound.resolve(cfg.m, cfg.n, a, b)?;
        for &s in &cfg.sparsities {
            let deltas = views
                .iter()
                .zip(&cfg.matrix_seeds)
                .map(|(view, &seed)| Ok(estimate_rip(view, s, cfg.num_samples, sample_base_seed(seed, s))?.delta))
                .collect::<Result<Vec<_>>>()?;
            let (delta_mean, delta_std) = mean_std(&deltas);
            let bound = theoretical_bound(&theory, s)?;
            let cf = factor(bound, delta_mean);
            rows.push(RipStudyRow {
                config: CoreDims { a, b },
                s,
                delta_mean,
                delta_std,
                coherence,
                bound,
                conservative_factor: cf.is_finite().then_some(cf),
            });
        }
    }
    Ok(RipStudyReport { rows })
}

/// Greedy recovery of an `s`-sparse core from `target ~ Psi alpha`.
///
/// Each round picks the atom with the largest normalized correlation to the
/// residual, then refits all selected coefficients by least squares on the
/// `|S| x |S|` Gram system (built from the factor Grams). Stops early once the
/// residual vanishes, so a zero target yields an empty support.
pub fn omp_recover(view: &DictionaryView<'_>, target: &Matrix, s: usize) -> Result<SparseVector> {
    let p = view.pair();
    let dim = p.atoms();
    if s > dim {
        return Err(CosaError::arg(format!("sparsity {s} exceeds atom count {dim}")));
    }
    if target.shape() != (p.m(), p.n()) {
        return Err(CosaError::Shape {
            op: "omp_recover",
            left: format!("{}x{}", p.m(), p.n()),
            right: format!("{}x{}", target.rows(), target.cols()),
        });
    }
    let norms = view.atom_norms();
    let target_corr = view.correlation_map(target)?;
    let target_norm = crate::numerics::frobenius_norm(target);
    let stop_at = target_norm * 1e-14;

    let mut selected: Vec<usize> = Vec::with_capacity(s);
    let mut coeffs: Vec<f64> = Vec::new();
    let mut residual = target.clone();
    for _ in 0..s {
        if crate::numerics::frobenius_norm(&residual) <= stop_at {
            break;
        }
        let corr = view.correlation_map(&residual)?;
        let mut best: Option<(usize, f64)> = None;
        for k in 0..dim {
            if selected.contains(&k) || norms[k] == 0.0 {
                continue;
            }
            let (i, j) = view.atom_position(k);
            let score = corr.get(i, j).abs() / norms[k];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((k, score));
            }
        }
        let Some((k, _)) = best else { break };
        selected.push(k);

        let t = selected.len();
        let mut gram = vec![0.0; t * t];
        for (r, &kr) in selected.iter().enumerate() {
            for (c, &kc) in selected.iter().enumerate() {
                gram[r * t + c] = view.atom_inner(kr, kc);
            }
        }
        let gram_mat = Matrix::from_vec(t, t, gram.clone())?;
        let cond = condition_from_singular_values(&singular_values(&gram_mat)?);
        if cond > OMP_MAX_CONDITION {
            return Err(CosaError::Numerical(format!(
                "omp gram system is ill-conditioned (condition {cond:e}) after selecting atoms {selected:?}"
            )));
        }
        let rhs: Vec<f64> = selected
            .iter()
            .map(|&k| {
                let (i, j) = view.atom_position(k);
                target_corr.get(i, j)
            })
            .collect();
        coeffs = cholesky_solve(&gram, t, &rhs)
            .ok_or_else(|| CosaError::Numerical("omp gram system is not positive definite".into()))?;

        let mut order: Vec<usize> = (0..t).collect();
        order.sort_unstable_by_key(|&q| selected[q]);
        let fit = SparseVector::recovered(
            dim,
            order.iter().map(|&q| selected[q]).collect(),
            order.iter().map(|&q| coeffs[q]).collect(),
        )?;
        residual = target.sub(&view.apply_sparse(&fit)?)?;
    }

    let mut entries: Vec<(usize, f64)> = selected.into_iter().zip(coeffs).collect();
    entries.sort_unstable_by_key(|e| e.0);
    let (support, values) = entries.into_iter().unzip();
    SparseVector::recovered(dim, support, values)
}

/// Planted coefficients for recovery trials: a uniform `s`-subset with
/// magnitudes `min_abs + |z|`, `z ~ N(0, 1)`, and random signs.
pub fn sample_planted(seed: u64, dim: usize, s: usize, min_abs: f64) -> Result<SparseVector> {
    if !(min_abs >= 0.0) || !min_abs.is_finite() {
        return Err(CosaError::arg(format!("minimum magnitude {min_abs} must be finite and non-negative")));
    }
    let base = sample_sparse_vector(seed, dim, s)?;
    let values = base.values().iter().map(|&v| v.signum() * (min_abs + v.abs())).collect();
    SparseVector::new(dim, base.support().to_vec(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpTrial {
    pub trial: usize,
    pub planted: Vec<usize>,
    pub recovered: Vec<usize>,
    pub exact_support: bool,
    /// Max coefficient error; only defined when the support matches.
    pub coefficient_error: Option<f64>,
}

/// Runs `trials` planted-support recoveries on one pair; trial `t` plants
/// `sample_planted(derive_seed(base_seed, t), ...)`.
pub fn omp_planted_trials(
    view: &DictionaryView<'_>,
    s: usize,
    trials: usize,
    min_abs: f64,
    base_seed: u64,
) -> Result<Vec<OmpTrial>> {
    let dim = view.pair().atoms();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let alpha = sample_planted(derive_seed(base_seed, t as u64), dim, s, min_abs)?;
            let target = view.apply_sparse(&alpha)?;
            let got = omp_recover(view, &target, s)?;
            let exact_support = got.support() == alpha.support();
            let coefficient_error = exact_support.then(|| {
                got.values()
                    .iter()
                    .zip(alpha.values())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
            });
            Ok(OmpTrial {
                trial: t,
                planted: alpha.support().to_vec(),
                recovered: got.support().to_vec(),
                exact_support,
                coefficient_error,
            })
        })
        .collect()
}

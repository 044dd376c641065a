//! Statistics over path ensembles and exact checks on the lazy auxiliary
//! walk: diffusivity and its bounds, CLT diagnostics, heat-kernel decay,
//! the edge-cut identity and the scenery variance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::env::{Environment, RateDecomposition};
use crate::error::{Error, Result};
use crate::rng::path_rng;
use crate::spectral::{covariance_spectrum, H1Functional};

/// Family-wise error rate of a nominal 3-SE band.
pub const THREE_SIGMA_ALPHA: f64 = 0.0027;
/// Fewest paths accepted by [`msd_diffusivity`].
pub const MIN_MSD_PATHS: usize = 1000;
/// Fewer expected jumps than this flags an estimate as pre-asymptotic.
pub const MIN_JUMPS: f64 = 10.0;
/// Frozen KS threshold, calibrated on the symmetric walk with `10⁴` paths.
pub const KS_THRESHOLD: f64 = 0.02;
/// CLT diagnostics below this many expected jumps are reported, not judged.
pub const CLT_MIN_JUMPS: f64 = 100.0;
/// 95% quantile of the Kolmogorov distribution.
pub const KOLMOGOROV_95: f64 = 1.358;

/// Whether an ensemble of `paths` samples can resolve [`KS_THRESHOLD`]:
/// the KS statistic of an exact normal sample is itself of order
/// `1.36 / sqrt(paths)`.
pub fn ks_resolvable(paths: usize) -> bool {
    KOLMOGOROV_95 / (paths as f64).sqrt() < KS_THRESHOLD
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided critical value keeping the family-wise level at `alpha` over
/// `m` simultaneous comparisons. `m = 1` gives `3.0` for the default level.
pub fn bonferroni_z(alpha: f64, m: usize) -> f64 {
    std_normal().inverse_cdf(1.0 - alpha / (2.0 * m.max(1) as f64))
}

/// `P(|Z| > z)` for a standard normal `Z`: the level of a `z`-wide band.
pub fn two_sided_level(z: f64) -> f64 {
    2.0 * (1.0 - std_normal().cdf(z))
}

/// Per-coordinate mean, covariance and standard error of the mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub paths: usize,
    pub horizon: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub se_mean: Vec<f64>,
}

impl EnsembleStats {
    pub fn from_samples(samples: &[Vec<f64>], horizon: f64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InsufficientSamples { got: n, need: 2 });
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::Structure("samples of unequal length".into()));
        }
        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut covariance = vec![vec![0.0; d]; d];
        for s in samples {
            for i in 0..d {
                for j in 0..d {
                    covariance[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
                }
            }
        }
        for row in covariance.iter_mut() {
            row.iter_mut().for_each(|c| *c /= (n - 1) as f64);
        }
        let se_mean = (0..d).map(|i| (covariance[i][i] / n as f64).sqrt()).collect();
        Ok(EnsembleStats {
            paths: n,
            horizon,
            mean,
            covariance,
            se_mean,
        })
    }
}

/// `σ̂² = Cov(X(t)) / t` with delete-one jackknife standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MsdEstimate {
    pub sigma2: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub paths: usize,
    pub horizon: f64,
    pub mean_jumps: Option<f64>,
    /// Too few jumps per path for the estimate to mean much.
    pub pre_asymptotic: bool,
}

impl MsdEstimate {
    /// Largest `|σ̂²_ij - σ²_ij| / SE_ij`.
    pub fn max_z(&self, oracle: &[Vec<f64>]) -> f64 {
        let d = self.sigma2.len();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let diff = (self.sigma2[i][j] - oracle[i][j]).abs();
                let z = if self.se[i][j] > 0.0 {
                    diff / self.se[i][j]
                } else if diff > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                worst = worst.max(z);
            }
        }
        worst
    }

    pub fn within(&self, oracle: &[Vec<f64>], z: f64) -> bool {
        self.max_z(oracle) <= z
    }
}

pub fn msd_diffusivity(endpoints: &[Vec<f64>], horizon: f64, mean_jumps: Option<f64>) -> Result<MsdEstimate> {
    let n = endpoints.len();
    if n < MIN_MSD_PATHS {
        return Err(Error::InsufficientSamples {
            got: n,
            need: MIN_MSD_PATHS,
        });
    }
    if !(horizon > 0.0) {
        return Err(Error::Parameter(format!("horizon {horizon} must be positive")));
    }
    let stats = EnsembleStats::from_samples(endpoints, horizon)?;
    let d = stats.mean.len();
    let nf = n as f64;
    let centred: Vec<Vec<f64>> = endpoints
        .iter()
        .map(|s| s.iter().zip(&stats.mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut sigma2 = vec![vec![0.0; d]; d];
    let mut se = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let s_ij = stats.covariance[i][j] * (nf - 1.0);
            // Leave-one-out covariances from the centred cross sums.
            let loo: Vec<f64> = centred
                .iter()
                .map(|c| (s_ij - c[i] * c[j] - c[i] * c[j] / (nf - 1.0)) / (nf - 2.0))
                .collect();
            let mean_loo = loo.iter().sum::<f64>() / nf;
            let var = loo.iter().map(|x| (x - mean_loo).powi(2)).sum::<f64>() * (nf - 1.0) / nf;
            sigma2[i][j] = stats.covariance[i][j] / horizon;
            se[i][j] = var.sqrt() / horizon;
            sigma2[j][i] = sigma2[i][j];
            se[j][i] = se[i][j];
        }
    }
    Ok(MsdEstimate {
        sigma2,
        se,
        paths: n,
        horizon,
        mean_jumps,
        pre_asymptotic: mean_jumps.is_some_and(|j| j < MIN_JUMPS),
    })
}

/// One quadratic-form check `2 s_* |v|² <= vᵀσ²v <= 6 s* |v|² + (24/s_*) vᵀ(C̃ + D̃)v`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub v: Vec<f64>,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Band half-width added on both sides.
    pub slack: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub checks: Vec<DirectionCheck>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.lower_ok && c.upper_ok)
    }

    pub fn lower_failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.lower_ok).count()
    }

    pub fn upper_failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.upper_ok).count()
    }
}

/// Random unit directions checked in addition to the axes.
pub const RANDOM_DIRECTIONS: usize = 20;

/// Checks the diffusivity bounds along the `2d` axis directions and
/// [`RANDOM_DIRECTIONS`] random unit vectors. With `se` given, each band is
/// widened by `z` standard errors of `vᵀσ²v`, bounded by `Σ |v_i v_j| SE_ij`.
pub fn bounds_check(
    sigma2: &[Vec<f64>],
    se: Option<(&[Vec<f64>], f64)>,
    s_star: f64,
    s_upper: f64,
    h1: &H1Functional,
    seed: u64,
) -> BoundsReport {
    let d = sigma2.len();
    let quad = |m: &[Vec<f64>], v: &[f64]| -> f64 {
        (0..d).map(|i| (0..d).map(|j| v[i] * m[i][j] * v[j]).sum::<f64>()).sum()
    };
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = sign;
            dirs.push(v);
        }
    }
    let mut rng = path_rng(seed, 0);
    for _ in 0..RANDOM_DIRECTIONS {
        let v: Vec<f64> = (0..d)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let nv = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        dirs.push(v.into_iter().map(|x| x / nv).collect());
    }
    let ct: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| h1.c_tilde[i][j] + h1.d_tilde[i][j]).collect())
        .collect();
    let checks = dirs
        .into_iter()
        .map(|v| {
            let v2: f64 = v.iter().map(|x| x * x).sum();
            let value = quad(sigma2, &v);
            let lower = 2.0 * s_star * v2;
            let upper = 6.0 * s_upper * v2 + 24.0 / s_star * quad(&ct, &v);
            let slack = se.map_or(0.0, |(se, z)| {
                z * (0..d)
                    .map(|i| (0..d).map(|j| (v[i] * v[j]).abs() * se[i][j]).sum::<f64>())
                    .sum::<f64>()
            });
            let tol = 1e-12 * upper.abs().max(1.0);
            DirectionCheck {
                lower_ok: value + slack + tol >= lower,
                upper_ok: value - slack - tol <= upper,
                v,
                value,
                lower,
                upper,
                slack,
            }
        })
        .collect();
    BoundsReport { checks }
}

/// Endpoint sample for the CLT diagnostics.
#[derive(Debug, Clone)]
pub struct CltSample<'a> {
    pub endpoints: &'a [Vec<f64>],
    /// Positions at `horizon / 2`, for the increment-independence check.
    pub midpoints: Option<&'a [Vec<f64>]>,
    pub horizon: f64,
    pub mean_jumps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltReport {
    pub paths: usize,
    pub ks: Vec<f64>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// Correlation of `X(t/2)` with `X(t) - X(t/2)`, per coordinate.
    pub increment_correlation: Option<Vec<f64>>,
    /// Critical values used for the moment and correlation checks.
    pub z: f64,
    pub pre_asymptotic: bool,
    /// False when the ensemble is too small for the KS threshold to mean
    /// anything; the verdict is then reported but not judged.
    pub resolvable: bool,
    pub passed: bool,
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Kolmogorov–Smirnov distance of a sample to the standard normal.
pub fn ks_normal(sample: &[f64]) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let g = std_normal();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = g.cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Inverse Cholesky factor of `σ² t`, refusing singular matrices.
fn whitener(sigma2: &[Vec<f64>], t: f64) -> Result<DMatrix<f64>> {
    let d = sigma2.len();
    let m = DMatrix::from_fn(d, d, |i, j| sigma2[i][j] * t);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Domain("σ² is singular or not positive definite".into()))?;
    let l = chol.l();
    l.try_inverse()
        .ok_or_else(|| Error::Domain("σ² is singular".into()))
}

/// Standardizes lattice endpoints by `(σ² t)^{-1/2}` and tests them against
/// the standard normal. Uniform jitter on `[-½, ½)` per coordinate smooths
/// the lattice before the KS comparison.
pub fn clt_diagnostics(sample: &CltSample<'_>, sigma2: &[Vec<f64>], seed: u64) -> Result<CltReport> {
    let n = sample.endpoints.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n, need: 2 });
    }
    let d = sigma2.len();
    let w = whitener(sigma2, sample.horizon)?;
    let mut rng = path_rng(seed, 0);
    let mut z_cols = vec![Vec::with_capacity(n); d];
    let mut raw_cols = vec![Vec::with_capacity(n); d];
    for e in sample.endpoints {
        let jittered = DVector::from_iterator(d, e.iter().map(|x| x + rng.random::<f64>() - 0.5));
        let raw = DVector::from_column_slice(e);
        let zj = &w * jittered;
        let zr = &w * raw;
        for i in 0..d {
            z_cols[i].push(zj[i]);
            raw_cols[i].push(zr[i]);
        }
    }
    let ks: Vec<f64> = z_cols.par_iter().map(|c| ks_normal(c)).collect();
    let (skewness, excess_kurtosis): (Vec<f64>, Vec<f64>) = raw_cols.iter().map(|c| moments(c)).unzip();
    let increment_correlation = sample.midpoints.map(|mid| {
        (0..d)
            .map(|i| {
                let a: Vec<f64> = mid.iter().map(|m| m[i]).collect();
                let b: Vec<f64> = mid.iter().zip(sample.endpoints).map(|(m, e)| e[i] - m[i]).collect();
                correlation(&a, &b)
            })
            .collect::<Vec<f64>>()
    });
    let checks = d * if increment_correlation.is_some() { 3 } else { 2 };
    let z = bonferroni_z(THREE_SIGMA_ALPHA, checks);
    let nf = n as f64;
    let pre_asymptotic = sample.mean_jumps < CLT_MIN_JUMPS;
    let passed = ks.iter().all(|&k| k < KS_THRESHOLD)
        && skewness.iter().all(|s| s.abs() <= z * (6.0 / nf).sqrt())
        && excess_kurtosis.iter().all(|k| k.abs() <= z * (24.0 / nf).sqrt())
        && increment_correlation
            .as_ref()
            .is_none_or(|c| c.iter().all(|r| r.abs() <= z / nf.sqrt()));
    Ok(CltReport {
        paths: n,
        ks,
        skewness,
        excess_kurtosis,
        increment_correlation,
        z,
        pre_asymptotic,
        resolvable: ks_resolvable(n),
        passed,
    })
}

/// `a_n = n^{d/2} sup_x P(Y_n = x)` for the lazy walk started at the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatKernelProfile {
    /// `a[n - 1] = a_n`, `n = 1..=n_max`.
    pub a: Vec<f64>,
    pub max: f64,
    pub argmax: usize,
}

/// Largest step count that keeps `√n` below `L/4`.
pub fn heat_kernel_horizon(side: usize) -> usize {
    (side / 4).pow(2)
}

/// Exact push-forward of the lazy chain: from `x` step to `x + k` with
/// probability `p_k(x) / (4d s_*)`, stay otherwise. For the auxiliary
/// environment the holding probability is exactly ½.
pub fn heat_kernel_profile(env_y: &Environment, n_max: usize) -> Result<HeatKernelProfile> {
    let torus = env_y.torus();
    let limit = heat_kernel_horizon(torus.side());
    if n_max > limit {
        return Err(Error::Parameter(format!(
            "n_max {n_max} exceeds the wrap-free horizon (L/4)² = {limit}"
        )));
    }
    if n_max == 0 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    let d = torus.dim();
    let scale = 1.0 / (4.0 * d as f64 * env_y.s_star());
    let stay: Vec<f64> = env_y.total_rate().iter().map(|p| 1.0 - p * scale).collect();
    if let Some(x) = stay.iter().position(|&s| s < -1e-12) {
        return Err(Error::Domain(format!("jump probabilities exceed one at site {x}")));
    }
    let mut p = vec![0.0; torus.len()];
    p[0] = 1.0;
    let mut a = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut q: Vec<f64> = p.iter().zip(&stay).map(|(a, b)| a * b).collect();
        for k in torus.directions() {
            let rates = env_y.rate_field(k);
            for (x, &y) in torus.neighbour_table(k).iter().enumerate() {
                q[y as usize] += p[x] * rates[x] * scale;
            }
        }
        p = q;
        let sup = p.iter().fold(0.0f64, |m, &v| m.max(v));
        a.push(sup * (n as f64).powf(d as f64 / 2.0));
    }
    let (argmax, max) = a
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(i0, m), (i, &v)| if v > m { (i, v) } else { (i0, m) });
    Ok(HeatKernelProfile {
        a,
        max,
        argmax: argmax + 1,
    })
}

/// `max_n a_n` for the lazy walk over constant rates: the reference constant.
pub fn symmetric_heat_kernel_constant(dim: usize, side: usize, n_max: usize) -> Result<f64> {
    let env = Environment::constant(dim, side, 1.0)?;
    Ok(heat_kernel_profile(&env, n_max)?.max)
}

/// Edge-cut identity for one site set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeCut {
    pub size: usize,
    /// `|∂S|`, the number of (inside, outside) nearest-neighbour pairs.
    pub boundary: usize,
    /// `Q(S, Sᶜ) = Σ_{x∈S, y∉S} P(x, y)`.
    pub flow: f64,
    /// `|Q(S, Sᶜ) - |∂S|/(4d)|`.
    pub residual: f64,
    /// `Q(S, Sᶜ) / |S|^{(d-1)/d}`.
    pub isoperimetric_ratio: f64,
}

/// True when `S` and its 1-neighbourhood sit strictly inside one fundamental
/// box, so that no edge of `S` crosses the periodic seam.
fn wrap_free(torus: &crate::lattice::Torus, set: &[usize]) -> bool {
    set.iter()
        .all(|&x| torus.coords(x).iter().all(|&c| c >= 1 && c + 1 < torus.side()))
}

pub fn edge_cut_identity(env_y: &Environment, set: &[usize]) -> Result<EdgeCut> {
    let torus = env_y.torus();
    let n = torus.len();
    if set.is_empty() || set.len() > n / 2 {
        return Err(Error::Parameter(format!("|S| = {} must be in 1..={}", set.len(), n / 2)));
    }
    if !wrap_free(torus, set) {
        return Err(Error::Parameter("site set wraps around the torus".into()));
    }
    let mut inside = vec![false; n];
    for &x in set {
        if x >= n {
            return Err(Error::Parameter(format!("site {x} outside the torus")));
        }
        inside[x] = true;
    }
    let d = torus.dim();
    let scale = 1.0 / (4.0 * d as f64 * env_y.s_star());
    let mut boundary = 0usize;
    let mut flow = 0.0;
    let mut distinct = 0usize;
    for (x, &i) in inside.iter().enumerate() {
        if !i {
            continue;
        }
        distinct += 1;
        for k in torus.directions() {
            if !inside[torus.neighbour(x, k)] {
                boundary += 1;
                flow += env_y.rate(x, k) * scale;
            }
        }
    }
    let residual = (flow - boundary as f64 / (4.0 * d as f64)).abs();
    Ok(EdgeCut {
        size: distinct,
        boundary,
        flow,
        residual,
        isoperimetric_ratio: flow / (distinct as f64).powf((d as f64 - 1.0) / d as f64),
    })
}

/// The discrete isoperimetric constant on `ℤ^d` in units of the lazy flow:
/// `|∂S| >= 2d |S|^{(d-1)/d}`, so the ratio is at least `½` with equality
/// for cubes.
pub const ISOPERIMETRIC_FLOOR: f64 = 0.5;

/// A connected set of `size` sites grown by random frontier additions from
/// the centre, kept clear of the periodic seam.
pub fn random_connected_set(torus: &crate::lattice::Torus, size: usize, seed: u64, index: u64) -> Result<Vec<usize>> {
    let interior = (torus.side().saturating_sub(2)).pow(torus.dim() as u32);
    if size == 0 || size > interior.min(torus.len() / 2) {
        return Err(Error::Parameter(format!("set size {size} out of range")));
    }
    let mut rng = path_rng(seed, index);
    let centre: Vec<i64> = vec![(torus.side() / 2) as i64; torus.dim()];
    let start = torus.index_of(&centre);
    let mut inside = vec![false; torus.len()];
    let mut set = vec![start];
    inside[start] = true;
    let mut frontier: Vec<usize> = Vec::new();
    let push_frontier = |x: usize, inside: &[bool], frontier: &mut Vec<usize>| {
        for k in torus.directions() {
            let y = torus.neighbour(x, k);
            if !inside[y] && wrap_free(torus, &[y]) {
                frontier.push(y);
            }
        }
    };
    push_frontier(start, &inside, &mut frontier);
    while set.len() < size {
        frontier.retain(|&y| !inside[y]);
        if frontier.is_empty() {
            return Err(Error::Internal("frontier exhausted".into()));
        }
        let y = frontier.swap_remove(rng.random_range(0..frontier.len()));
        inside[y] = true;
        set.push(y);
        push_frontier(y, &inside, &mut frontier);
    }
    Ok(set)
}

/// Axis-aligned cube of the given side, one site in from the seam.
pub fn box_set(torus: &crate::lattice::Torus, side: usize) -> Result<Vec<usize>> {
    if side == 0 || side + 2 > torus.side() {
        return Err(Error::Parameter(format!("box side {side} does not fit")));
    }
    let d = torus.dim();
    let count = side.pow(d as u32);
    Ok((0..count)
        .map(|mut c| {
            let coords: Vec<i64> = (0..d)
                .map(|_| {
                    let v = c % side;
                    c /= side;
                    (v + 1) as i64
                })
                .collect();
            torus.index_of(&coords)
        })
        .collect())
}

/// `T^{-1} Σ_i Var ∫_0^T φ_i(S_t) dt` against its exact value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneryReport {
    pub horizon: f64,
    pub paths: usize,
    pub estimate: f64,
    pub se: f64,
    /// `2 Σ_i Σ_{p≠0} (Ĉ_ii(p)/n) [1/λ - (1 - e^{-λT}) / (λ² T)]`.
    pub oracle: f64,
    /// The `T → ∞` value `2 Σ_i ⟨φ_i, |Δ|^{-1} φ_i⟩`.
    pub oracle_limit: f64,
    pub z: f64,
}

impl SceneryReport {
    pub fn within(&self, z: f64) -> bool {
        let diff = (self.estimate - self.oracle).abs();
        diff <= z * self.se || (self.se == 0.0 && diff <= 1e-12)
    }
}

/// Exact `T^{-1} Σ_i Var ∫_0^T φ_i(S_t) dt` for the rate-one-per-direction
/// walk from a uniform start.
pub fn scenery_oracle(dec: &RateDecomposition, horizon: f64) -> (f64, f64) {
    let spec = covariance_spectrum(dec);
    let fft = crate::spectral::TorusFft::new(&dec.torus);
    let lambda = fft.lambda();
    let n = dec.len() as f64;
    let mut finite = 0.0;
    let mut limit = 0.0;
    for (p, &l) in lambda.iter().enumerate().skip(1) {
        let c = spec.trace_c(p) / n;
        let lt = l * horizon;
        // (1 - e^{-x}) / x computed stably.
        let kernel = if lt < 1e-8 { 1.0 - lt / 2.0 } else { -(-lt).exp_m1() / lt };
        finite += 2.0 * c * (1.0 - kernel) / l;
        limit += 2.0 * c / l;
    }
    (finite, limit)
}

pub fn scenery_variance_check(dec: &RateDecomposition, samples: &[Vec<f64>], horizon: f64) -> Result<SceneryReport> {
    crate::spectral::require_no_drift(dec)?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n, need: 2 });
    }
    let stats = EnsembleStats::from_samples(samples, horizon)?;
    let nf = n as f64;
    let q: Vec<f64> = samples
        .iter()
        .map(|s| {
            s.iter().zip(&stats.mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>() * nf / (nf - 1.0) / horizon
        })
        .collect();
    let estimate = q.iter().sum::<f64>() / nf;
    let var_q = q.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var_q / nf).sqrt();
    let (oracle, oracle_limit) = scenery_oracle(dec, horizon);
    let z = if se > 0.0 { (estimate - oracle).abs() / se } else { 0.0 };
    Ok(SceneryReport {
        horizon,
        paths: n,
        estimate,
        se,
        oracle,
        oracle_limit,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::decompose;
    use crate::generators::{generate, GeneratorSpec};
    use crate::lattice::Torus;
    use crate::walker::auxiliary_env;

    #[test]
    fn bonferroni_reduces_to_three_sigma() {
        assert!((bonferroni_z(THREE_SIGMA_ALPHA, 1) - 3.0).abs() < 1e-3);
        assert!(bonferroni_z(THREE_SIGMA_ALPHA, 10) > 3.5);
    }

    #[test]
    fn jackknife_matches_normal_theory_for_gaussian_samples() {
        let mut rng = path_rng(1, 0);
        let samples: Vec<Vec<f64>> = (0..20000)
            .map(|_| {
                (0..2)
                    .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        let est = msd_diffusivity(&samples, 1.0, None).unwrap();
        // Var of the sample variance of N(0,1) is 2/N.
        let expect = (2.0f64 / 20000.0).sqrt();
        assert!((est.se[0][0] / expect - 1.0).abs() < 0.1, "{}", est.se[0][0]);
        assert!(est.within(&[vec![1.0, 0.0], vec![0.0, 1.0]], 4.0));
    }

    #[test]
    fn too_few_paths_refused() {
        let s = vec![vec![0.0, 1.0]; 10];
        assert!(matches!(msd_diffusivity(&s, 1.0, None), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn halved_constant_diffusivity_fails_lower_bound() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let h1 = crate::spectral::h1_functional(&decompose(&env)).unwrap();
        let good = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        assert!(bounds_check(&good, None, 1.0, 1.0, &h1, 0).passed());
        let bad = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = bounds_check(&bad, None, 1.0, 1.0, &h1, 0);
        assert_eq!(r.lower_failures(), 4 + RANDOM_DIRECTIONS);
    }

    #[test]
    fn single_site_and_box_cuts() {
        let g = generate(&GeneratorSpec::manhattan(2, 16, 3)).unwrap();
        let y = auxiliary_env(&g.env).unwrap();
        let t = y.torus().clone();
        let one = edge_cut_identity(&y, &[t.index_of(&[5, 5])]).unwrap();
        assert_eq!(one.boundary, 4);
        assert!(one.residual <= 1e-12);
        let cube = edge_cut_identity(&y, &box_set(&t, 4).unwrap()).unwrap();
        assert!((cube.isoperimetric_ratio - ISOPERIMETRIC_FLOOR).abs() < 1e-12);
        for i in 0..20 {
            let s = random_connected_set(&t, 1 + i * 3, 9, i as u64).unwrap();
            let c = edge_cut_identity(&y, &s).unwrap();
            assert!(c.residual <= 1e-12);
            assert!(c.isoperimetric_ratio >= ISOPERIMETRIC_FLOOR - 1e-12);
        }
    }

    #[test]
    fn wrapping_set_refused() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let t = Torus::new(2, 8).unwrap();
        assert!(edge_cut_identity(&env, &[t.index_of(&[0, 3])]).is_err());
    }

    #[test]
    fn heat_kernel_matches_binomial_in_one_axis() {
        let env = Environment::constant(2, 32, 1.0).unwrap();
        let prof = heat_kernel_profile(&env, 1).unwrap();
        assert!((prof.a[0] - 0.5).abs() < 1e-15);
        assert!(heat_kernel_profile(&env, 65).is_err());
        let prof = heat_kernel_profile(&env, 64).unwrap();
        assert!(prof.a.iter().all(|a| a.is_finite() && *a <= 1.0));
    }

    #[test]
    fn scenery_oracle_vanishes_without_flow() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let (f, l) = scenery_oracle(&decompose(&env), 10.0);
        assert_eq!((f, l), (0.0, 0.0));
    }

    #[test]
    fn scenery_oracle_increases_to_limit() {
        let g = generate(&GeneratorSpec::stream(2, 16, 2, 1.0)).unwrap();
        let dec = decompose(&g.env);
        let (a, lim) = scenery_oracle(&dec, 10.0);
        let (b, _) = scenery_oracle(&dec, 1000.0);
        assert!(a < b && b < lim);
    }

    #[test]
    fn ks_threshold_needs_large_ensembles() {
        assert!(!ks_resolvable(1000));
        assert!(!ks_resolvable(4000));
        assert!(ks_resolvable(5000));
    }
}

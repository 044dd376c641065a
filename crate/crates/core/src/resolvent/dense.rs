//! Dense materializations on the mean-zero subspace and the resolvent
//! factorization suite.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{OperatorBundle, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::lattice::norm;
use crate::rng::path_rng;
use crate::spectral::{apply_inv_sqrt_laplacian, apply_riesz, project_mean_zero};

/// Restrictions of `D`, `T`, `A` to an orthonormal basis of the mean-zero
/// subspace, with the spectral decompositions of `D` and `S` cached.
#[derive(Debug, Clone)]
pub struct DenseOperators {
    /// Householder vector `w` with `H = I - w wᵀ`; columns `1..n` of `H`
    /// span the mean-zero fields.
    w: DVector<f64>,
    pub d: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub d_eigen: SymmetricEigen<f64, nalgebra::Dyn>,
    pub s_eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

fn materialize(n: usize, op: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for x in 0..n {
        e[x] = 1.0;
        let col = op(&e);
        m.set_column(x, &DVector::from_vec(col));
        e[x] = 0.0;
    }
    m
}

impl DenseOperators {
    pub fn new(bundle: &OperatorBundle) -> Result<Self> {
        let n = bundle.len();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        let mut u = DVector::from_element(n, -1.0 / (n as f64).sqrt());
        u[0] += 1.0;
        let w = &u * (2.0f64.sqrt() / u.norm());
        let restrict = |m: DMatrix<f64>| -> DMatrix<f64> {
            let hm = &m - &w * (w.transpose() * &m);
            let hmh = &hm - (&hm * &w) * w.transpose();
            hmh.view((1, 1), (n - 1, n - 1)).into_owned()
        };
        let d = restrict(materialize(n, |f| bundle.d(f)));
        let t = restrict(materialize(n, |f| bundle.t(f)));
        let a = restrict(materialize(n, |f| bundle.a(f)));
        let d_eigen = d.clone().symmetric_eigen();
        let s_eigen = (&d + &t).symmetric_eigen();
        Ok(DenseOperators {
            w,
            d,
            t,
            a,
            d_eigen,
            s_eigen,
        })
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn s(&self) -> DMatrix<f64> {
        &self.d + &self.t
    }

    /// Coordinates of the mean-zero part of `f`.
    pub fn to_basis(&self, f: &[f64]) -> DVector<f64> {
        let f = DVector::from_column_slice(f);
        let hf = &f - &self.w * self.w.dot(&f);
        hf.rows(1, f.len() - 1).into_owned()
    }

    pub fn from_basis(&self, c: &DVector<f64>) -> Vec<f64> {
        let mut f = DVector::zeros(c.len() + 1);
        f.rows_mut(1, c.len()).copy_from(c);
        let hf = &f - &self.w * self.w.dot(&f);
        hf.as_slice().to_vec()
    }

    fn power(eig: &SymmetricEigen<f64, nalgebra::Dyn>, shift: f64, alpha: f64) -> DMatrix<f64> {
        let vals = eig.eigenvalues.map(|x| (shift + x.max(0.0)).powf(alpha));
        let q = &eig.eigenvectors;
        let scaled = q * DMatrix::from_diagonal(&vals);
        scaled * q.transpose()
    }

    /// `D^α` on the mean-zero subspace.
    pub fn d_power(&self, alpha: f64) -> DMatrix<f64> {
        Self::power(&self.d_eigen, 0.0, alpha)
    }

    /// `(λ + D)^α`.
    pub fn shifted_d_power(&self, lambda: f64, alpha: f64) -> DMatrix<f64> {
        Self::power(&self.d_eigen, lambda, alpha)
    }

    /// `(λ + S)^α`.
    pub fn shifted_s_power(&self, lambda: f64, alpha: f64) -> DMatrix<f64> {
        Self::power(&self.s_eigen, lambda, alpha)
    }

    /// `λ I - L = λ I + S - A` on the mean-zero subspace.
    pub fn shifted_negative_l(&self, lambda: f64) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::identity(m, m) * lambda + &self.d + &self.t - &self.a
    }

    /// Solve `(λ I - L) u = f` for mean-zero `f` by LU.
    pub fn solve_shifted(&self, lambda: f64, f: &[f64]) -> Result<Vec<f64>> {
        let b = self.to_basis(f);
        let lu = self.shifted_negative_l(lambda).lu();
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Internal("λ - L is singular on mean-zero fields".into()))?;
        Ok(self.from_basis(&x))
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// `B φ = -(1/s_*) Σ_l Γ_{-l} M_l |Δ|^{-1/2} φ`, matrix-free.
pub fn apply_b_limit(bundle: &OperatorBundle, phi: &[f64]) -> Result<Vec<f64>> {
    let g = apply_inv_sqrt_laplacian(&bundle.fft, phi)?;
    let mut out = vec![0.0; phi.len()];
    for l in bundle.torus.directions() {
        let h: Vec<f64> = g.iter().zip(&bundle.v[l.index()]).map(|(a, b)| a * b).collect();
        for (o, r) in out.iter_mut().zip(apply_riesz(&bundle.fft, &h, l.opposite())) {
            *o -= r / bundle.s_star;
        }
    }
    Ok(out)
}

/// Results at one rung of the ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RscLevel {
    pub lambda: f64,
    /// `max |C_λ + C_λᵀ|`.
    pub c_skew: f64,
    /// `max |B_λ + B_λᵀ|`.
    pub b_skew: f64,
    /// `‖(I - C_λ)^{-1}‖`.
    pub k_norm: f64,
    /// `max |(λ+S)^{-1/2} K_λ (λ+S)^{-1/2} (λ - L) - I|`.
    pub factorization: f64,
    /// `‖(λ+D)^{1/2} (λ+S)^{-1/2}‖`.
    pub v_norm: f64,
    /// `‖(λ+S)^{1/2} (λ+D)^{-1/2}‖`.
    pub v_inv_norm: f64,
    /// `‖B_λ φ - B φ‖` for each probe, unit-normalized.
    pub b_gaps: Vec<f64>,
    /// Same for a single low-frequency probe.
    pub b_gap_smooth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RscReport {
    pub c: f64,
    pub levels: Vec<RscLevel>,
    /// Largest `|Re μ|` over eigenvalues `μ` of `B`.
    pub b_spectrum_real: f64,
    /// Largest `|Re μ| / max |μ|`, scale-free.
    pub b_spectrum_real_relative: f64,
    /// Largest `‖Γ_k‖` over directions.
    pub riesz_norm: f64,
    /// `max |½ Σ_l Γ_l Γ_l^* - I|`.
    pub riesz_identity: f64,
}

impl RscReport {
    /// Each probe's gap never grows along the ladder (up to `slack`).
    pub fn b_gaps_decreasing(&self, slack: f64) -> bool {
        let probes = self.levels.first().map_or(0, |l| l.b_gaps.len());
        (0..probes).all(|j| {
            self.levels
                .windows(2)
                .all(|w| w[1].b_gaps[j] <= w[0].b_gaps[j] + slack)
        })
    }

    pub fn bounds_hold(&self, tol: f64) -> bool {
        let v_inv_bound = (1.0 + self.c).sqrt();
        self.riesz_norm <= 1.0 + tol
            && self.riesz_identity <= tol
            && self.levels.iter().all(|l| {
                l.c_skew <= tol
                    && l.b_skew <= tol
                    && l.k_norm <= 1.0 + tol
                    && l.factorization <= tol
                    && l.v_norm <= 1.0 + tol
                    && l.v_inv_norm <= v_inv_bound + tol
            })
    }
}

/// Number of random probes for the `B_λ → B` check.
pub const B_PROBES: usize = 20;

/// Dense check of the resolvent factorization and its norm bounds along
/// the ladder.
pub fn rsc_operator_suite(bundle: &OperatorBundle, lambdas: &[f64]) -> Result<RscReport> {
    let ops = DenseOperators::new(bundle)?;
    let m = ops.dim();
    let id = DMatrix::<f64>::identity(m, m);
    let c = bundle.sector_constant();

    let mut rng = path_rng(0xb1a5, 0);
    let mut probes: Vec<Vec<f64>> = (0..B_PROBES)
        .map(|_| {
            let f: Vec<f64> = (0..bundle.len()).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect();
            project_mean_zero(&f).0
        })
        .collect();
    let torus = &bundle.torus;
    let smooth: Vec<f64> = (0..bundle.len())
        .map(|x| {
            let c = torus.coords(x);
            (0..torus.dim())
                .map(|i| (std::f64::consts::TAU * c[i] as f64 / torus.side() as f64 + i as f64).cos())
                .sum()
        })
        .collect();
    probes.push(project_mean_zero(&smooth).0);
    for p in probes.iter_mut() {
        let s = norm(p);
        p.iter_mut().for_each(|x| *x /= s);
    }
    let limits: Vec<DVector<f64>> = probes
        .iter()
        .map(|p| apply_b_limit(bundle, p).map(|b| ops.to_basis(&b)))
        .collect::<Result<_>>()?;
    let coords: Vec<DVector<f64>> = probes.iter().map(|p| ops.to_basis(p)).collect();
    // Coordinates are orthonormal in the unnormalized product.
    let scale = (bundle.len() as f64).sqrt();

    let levels = lambdas
        .par_iter()
        .map(|&lambda| {
            let s_m = ops.shifted_s_power(lambda, -0.5);
            let d_m = ops.shifted_d_power(lambda, -0.5);
            let c_l = &s_m * &ops.a * &s_m;
            let b_l = &d_m * &ops.a * &d_m;
            let i_minus_c = &id - &c_l;
            let k_l = i_minus_c
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Internal("I - C_λ is singular".into()))?;
            let r_l = &s_m * &k_l * &s_m;
            let factorization = max_abs(&(&r_l * ops.shifted_negative_l(lambda) - &id));
            let v = ops.shifted_d_power(lambda, 0.5) * &s_m;
            let v_inv = ops.shifted_s_power(lambda, 0.5) * &d_m;
            let mut b_gaps: Vec<f64> = coords
                .iter()
                .zip(&limits)
                .map(|(p, b)| (&b_l * p - b).norm() / scale)
                .collect();
            let b_gap_smooth = b_gaps.pop().unwrap_or(0.0);
            Ok(RscLevel {
                lambda,
                c_skew: max_abs(&(&c_l + c_l.transpose())),
                b_skew: max_abs(&(&b_l + b_l.transpose())),
                k_norm: 1.0 / i_minus_c.singular_values().min(),
                factorization,
                v_norm: spectral_norm(&v),
                v_inv_norm: spectral_norm(&v_inv),
                b_gaps,
                b_gap_smooth,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let d_half = ops.d_power(-0.5);
    let b0 = &d_half * &ops.a * &d_half;
    let eig = b0.complex_eigenvalues();
    let b_spectrum_real = eig.iter().fold(0.0f64, |a, z| a.max(z.re.abs()));
    let b_scale = eig.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let b_spectrum_real_relative = if b_scale > 0.0 { b_spectrum_real / b_scale } else { 0.0 };

    // Γ_k and ½ Σ Γ_l Γ_l^* densely.
    let mut riesz_norm = 0.0f64;
    let mut sum = DMatrix::<f64>::zeros(m, m);
    let n = bundle.len();
    let mut mats = Vec::new();
    for k in torus.directions() {
        let full = materialize(n, |f| apply_riesz(&bundle.fft, &project_mean_zero(f).0, k));
        let w = &ops.w;
        let hm = &full - w * (w.transpose() * &full);
        let hmh = &hm - (&hm * w) * w.transpose();
        let g = hmh.view((1, 1), (m, m)).into_owned();
        riesz_norm = riesz_norm.max(spectral_norm(&g));
        mats.push(g);
    }
    for g in &mats {
        sum += g * g.transpose() * 0.5;
    }
    let riesz_identity = max_abs(&(sum - &id));

    Ok(RscReport {
        c,
        levels,
        b_spectrum_real,
        b_spectrum_real_relative,
        riesz_norm,
        riesz_identity,
    })
}

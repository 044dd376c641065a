//! Generator operators on the mean-zero function space of the torus, the
//! resolvent and corrector solvers, and the operator-inequality checks.
//!
//! The inner product is `⟨f, g⟩ = (1/n) Σ_x f(x) g(x)`. With
//! `N_l = s_l - s_*` and `M_l` the multiplication by `v_l`:
//! `D = -s_* Δ`, `T = -Σ_l N_l ∇_l = ½ Σ_l ∇_{-l} N_l ∇_l`,
//! `A = Σ_l M_l ∇_l = -Σ_l ∇_{-l} M_l`, `S = D + T`, `L = -S + A`.

pub mod dense;
pub mod krylov;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, RateDecomposition};
use crate::error::{Error, Result};
use crate::lattice::{dot, norm, Direction, Torus};
use crate::rng::path_rng;
use crate::spectral::{apply_gradient, apply_laplacian, TorusFft};

pub use dense::{rsc_operator_suite, DenseOperators, RscLevel, RscReport};
pub use krylov::{conjugate_gradient, gmres, KrylovOptions, KrylovOutcome};

/// Largest torus materialized densely.
pub const DENSE_LIMIT: usize = 4096;
/// Largest torus for which dense eigensolves replace iteration.
pub const DENSE_EIGEN_LIMIT: usize = 1024;

/// `λ_j = 2^{-j}` for `j = 0..=depth`.
pub fn ladder(depth: usize) -> Vec<f64> {
    (0..=depth).map(|j| 0.5f64.powi(j as i32)).collect()
}

/// Matrix-free operator actions for one environment.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub torus: Torus,
    pub fft: TorusFft,
    pub s_star: f64,
    pub s_upper: f64,
    /// `v_k` per direction.
    pub v: Vec<Vec<f64>>,
    /// `N_k = s_k - s_*` per direction.
    pub n: Vec<Vec<f64>>,
    /// `p_k` per direction.
    pub p: Vec<Vec<f64>>,
    /// `p(x) = Σ_k p_k(x)`.
    pub total: Vec<f64>,
}

impl OperatorBundle {
    #[inline]
    pub fn len(&self) -> usize {
        self.torus.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.torus.is_empty()
    }

    /// `c = d s* / s_*`.
    pub fn sector_constant(&self) -> f64 {
        self.torus.dim() as f64 * self.s_upper / self.s_star
    }

    pub fn grad(&self, f: &[f64], k: Direction) -> Vec<f64> {
        apply_gradient(&self.torus, f, k)
    }

    pub fn riesz(&self, f: &[f64], k: Direction) -> Vec<f64> {
        crate::spectral::apply_riesz(&self.fft, f, k)
    }

    /// `D f = -s_* Δ f`.
    pub fn d(&self, f: &[f64]) -> Vec<f64> {
        apply_laplacian(&self.torus, f)
            .into_iter()
            .map(|x| -self.s_star * x)
            .collect()
    }

    /// `T f = -Σ_l N_l ∇_l f`.
    pub fn t(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for l in self.torus.directions() {
            let nl = &self.n[l.index()];
            for (x, (&y, o)) in self.torus.neighbour_table(l).iter().zip(out.iter_mut()).enumerate() {
                *o -= nl[x] * (f[y as usize] - f[x]);
            }
        }
        out
    }

    /// `T f = ½ Σ_l ∇_{-l} N_l ∇_l f`.
    pub fn t_divergence_form(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for l in self.torus.directions() {
            let g: Vec<f64> = self
                .grad(f, l)
                .iter()
                .zip(&self.n[l.index()])
                .map(|(a, b)| a * b)
                .collect();
            for (o, h) in out.iter_mut().zip(self.grad(&g, l.opposite())) {
                *o += 0.5 * h;
            }
        }
        out
    }

    /// `A f = Σ_l M_l ∇_l f`.
    pub fn a(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for l in self.torus.directions() {
            let vl = &self.v[l.index()];
            for (x, (&y, o)) in self.torus.neighbour_table(l).iter().zip(out.iter_mut()).enumerate() {
                *o += vl[x] * (f[y as usize] - f[x]);
            }
        }
        out
    }

    /// `A f = -Σ_l ∇_{-l} M_l f`.
    pub fn a_divergence_form(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for l in self.torus.directions() {
            let g: Vec<f64> = f.iter().zip(&self.v[l.index()]).map(|(a, b)| a * b).collect();
            for (o, h) in out.iter_mut().zip(self.grad(&g, l.opposite())) {
                *o -= h;
            }
        }
        out
    }

    /// `S = D + T`.
    pub fn s(&self, f: &[f64]) -> Vec<f64> {
        self.d(f).iter().zip(self.t(f)).map(|(a, b)| a + b).collect()
    }

    /// `L f(x) = Σ_k p_k(x) (f(x + k) - f(x))`.
    pub fn l(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for k in self.torus.directions() {
            let pk = &self.p[k.index()];
            for (x, (&y, o)) in self.torus.neighbour_table(k).iter().zip(out.iter_mut()).enumerate() {
                *o += pk[x] * (f[y as usize] - f[x]);
            }
        }
        out
    }

    /// `-D - T + A`, assembled from the parts.
    pub fn l_from_parts(&self, f: &[f64]) -> Vec<f64> {
        let (d, t, a) = (self.d(f), self.t(f), self.a(f));
        (0..f.len()).map(|x| -d[x] - t[x] + a[x]).collect()
    }

    /// `L* = -S - A`.
    pub fn l_adjoint(&self, f: &[f64]) -> Vec<f64> {
        let (s, a) = (self.s(f), self.a(f));
        s.iter().zip(&a).map(|(x, y)| -x - y).collect()
    }

    /// `(λ I - L) f`.
    pub fn shifted_negative_l(&self, f: &[f64], lambda: f64) -> Vec<f64> {
        self.l(f)
            .iter()
            .zip(f)
            .map(|(lf, fx)| lambda * fx - lf)
            .collect()
    }
}

/// Build the operator bundle; refuses environments with `s_k < s_*`.
pub fn build_operators(dec: &RateDecomposition) -> Result<OperatorBundle> {
    let s_star = dec.s_star;
    let mut worst = 0.0f64;
    let n: Vec<Vec<f64>> = dec
        .s
        .iter()
        .map(|s| {
            s.iter()
                .map(|&x| {
                    worst = worst.min(x - s_star);
                    (x - s_star).max(0.0)
                })
                .collect()
        })
        .collect();
    if worst < -1e-12 * dec.s_upper {
        return Err(Error::Domain(format!(
            "symmetric part falls {:e} below the ellipticity floor",
            -worst
        )));
    }
    let p = dec.recombine();
    let total = (0..dec.len()).map(|x| p.iter().map(|f| f[x]).sum()).collect();
    Ok(OperatorBundle {
        torus: dec.torus.clone(),
        fft: TorusFft::new(&dec.torus),
        s_star,
        s_upper: dec.s_upper,
        v: dec.v.clone(),
        n,
        p,
        total,
    })
}

pub fn build_operators_for(env: &Environment) -> Result<OperatorBundle> {
    build_operators(&crate::env::decompose(env))
}

fn random_mean_zero(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let f: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    crate::spectral::project_mean_zero(&f).0
}

/// Identities checked on random mean-zero vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormReport {
    /// `|⟨f, A g⟩ + ⟨A f, g⟩|`, worst over pairs.
    pub a_skew: f64,
    /// `max |Σ M_l ∇_l f + Σ ∇_{-l} M_l f|`.
    pub a_forms: f64,
    /// `max |-Σ N_l ∇_l f - ½ Σ ∇_{-l} N_l ∇_l f|`.
    pub t_forms: f64,
    /// `max |L f - (-D - T + A) f|`.
    pub generator_split: f64,
    /// `|⟨f, D g⟩ - ⟨D f, g⟩|` and same for `T`.
    pub symmetric_parts: f64,
    /// Smallest `⟨f, -L f⟩ - s_* ⟨f, |Δ| f⟩`, which must be `>= 0`.
    pub dirichlet_gap: f64,
    /// `max |L 1|`.
    pub constant_kernel: f64,
}

impl FormReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.a_skew <= tol
            && self.a_forms <= tol
            && self.t_forms <= tol
            && self.generator_split <= tol
            && self.symmetric_parts <= tol
            && self.dirichlet_gap >= -tol
            && self.constant_kernel <= tol
    }
}

pub fn operator_forms(bundle: &OperatorBundle, pairs: usize, seed: u64) -> FormReport {
    let mut rng = path_rng(seed, 0);
    let n = bundle.len();
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut r = FormReport {
        a_skew: 0.0,
        a_forms: 0.0,
        t_forms: 0.0,
        generator_split: 0.0,
        symmetric_parts: 0.0,
        dirichlet_gap: f64::INFINITY,
        constant_kernel: 0.0,
    };
    for _ in 0..pairs {
        let f = random_mean_zero(n, &mut rng);
        let g = random_mean_zero(n, &mut rng);
        r.a_skew = r.a_skew.max((dot(&f, &bundle.a(&g)) + dot(&bundle.a(&f), &g)).abs());
        r.a_forms = r.a_forms.max(max_diff(&bundle.a(&f), &bundle.a_divergence_form(&f)));
        r.t_forms = r.t_forms.max(max_diff(&bundle.t(&f), &bundle.t_divergence_form(&f)));
        r.generator_split = r.generator_split.max(max_diff(&bundle.l(&f), &bundle.l_from_parts(&f)));
        r.symmetric_parts = r
            .symmetric_parts
            .max((dot(&f, &bundle.d(&g)) - dot(&bundle.d(&f), &g)).abs())
            .max((dot(&f, &bundle.t(&g)) - dot(&bundle.t(&f), &g)).abs());
        let lap = apply_laplacian(&bundle.torus, &f);
        let gap = -dot(&f, &bundle.l(&f)) + bundle.s_star * dot(&f, &lap);
        r.dirichlet_gap = r.dirichlet_gap.min(gap);
    }
    r.constant_kernel = bundle.l(&vec![1.0; n]).iter().fold(0.0, |m, v| m.max(v.abs()));
    r
}

/// Sector bound `0 <= T <= c D` and the Riesz identities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorReport {
    pub c: f64,
    /// `‖D^{-1/2} T D^{-1/2}‖` on mean-zero fields.
    pub dtd_norm: f64,
    /// Smallest eigenvalue of `c D - T` (dense) or its Rayleigh-quotient
    /// estimate (iterative).
    pub min_eig_cd_minus_t: f64,
    /// Smallest eigenvalue (or Rayleigh quotient) of `T`.
    pub min_eig_t: f64,
    /// `max |½ Σ_l Γ_l Γ_{-l} f - f|` on random mean-zero fields.
    pub riesz_identity: f64,
    /// Largest `‖Γ_k f‖ / ‖f‖` seen.
    pub riesz_norm: f64,
    pub dense: bool,
    pub passed: bool,
}

/// `D^{-1/2}` on mean-zero fields via the Fourier symbol.
fn d_inv_sqrt(bundle: &OperatorBundle, f: &[f64]) -> Vec<f64> {
    let s = bundle.s_star;
    let lambda = bundle.fft.lambda();
    bundle.fft.apply(f, |p| {
        num_complex::Complex64::new(if p == 0 { 0.0 } else { 1.0 / (s * lambda[p]).sqrt() }, 0.0)
    })
}

pub fn sector_checks(bundle: &OperatorBundle) -> Result<SectorReport> {
    sector_checks_scaled(bundle, 1.0)
}

/// Sector checks with `T` replaced by `t_scale · T`, for constructed
/// violations.
pub fn sector_checks_scaled(bundle: &OperatorBundle, t_scale: f64) -> Result<SectorReport> {
    let c = bundle.sector_constant();
    let tol = 1e-10 * c.max(1.0);
    let n = bundle.len();
    let mut rng = path_rng(0x5ec7, 0);
    let mut riesz_identity = 0.0f64;
    let mut riesz_norm = 0.0f64;
    for _ in 0..20 {
        let f = random_mean_zero(n, &mut rng);
        let mut acc = vec![0.0; n];
        for l in bundle.torus.directions() {
            let g = bundle.riesz(&f, l);
            riesz_norm = riesz_norm.max(norm(&g) / norm(&f));
            for (a, h) in acc.iter_mut().zip(bundle.riesz(&g, l.opposite())) {
                *a += 0.5 * h;
            }
        }
        // Γ_l^* = Γ_{-l}
        riesz_identity = riesz_identity.max(acc.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let (dtd_norm, min_cd_t, min_t, dense) = if n <= DENSE_EIGEN_LIMIT {
        let ops = DenseOperators::new(bundle)?;
        let t = &ops.t * t_scale;
        let cd_t = &ops.d * c - &t;
        let min_cd_t = cd_t.symmetric_eigenvalues().min();
        let min_t = t.clone().symmetric_eigenvalues().min();
        let dis = ops.d_power(-0.5);
        let m = &dis * &t * &dis;
        let dtd = m.symmetric_eigenvalues().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        (dtd, min_cd_t, min_t, true)
    } else {
        // Power iteration on D^{-1/2} T D^{-1/2}.
        let op = |f: &[f64]| -> Vec<f64> {
            let g = d_inv_sqrt(bundle, f);
            let h: Vec<f64> = bundle.t(&g).iter().map(|x| t_scale * x).collect();
            d_inv_sqrt(bundle, &h)
        };
        let mut f = random_mean_zero(n, &mut rng);
        let mut est = 0.0;
        for _ in 0..300 {
            let nf = norm(&f);
            f.iter_mut().for_each(|x| *x /= nf);
            let g = op(&f);
            est = dot(&f, &g) / dot(&f, &f);
            f = g;
        }
        let g = d_inv_sqrt(bundle, &f);
        let tg: Vec<f64> = bundle.t(&g).iter().map(|x| t_scale * x).collect();
        let quad_t = dot(&g, &tg);
        let quad_d = dot(&g, &bundle.d(&g));
        let min_cd_t = (c * quad_d - quad_t) / dot(&g, &g);
        (est, min_cd_t, quad_t / dot(&g, &g), false)
    };
    let passed = min_cd_t >= -tol
        && min_t >= -tol
        && dtd_norm <= c + tol
        && riesz_identity <= 1e-10
        && riesz_norm <= 1.0 + 1e-10;
    Ok(SectorReport {
        c,
        dtd_norm,
        min_eig_cd_minus_t: min_cd_t,
        min_eig_t: min_t,
        riesz_identity,
        riesz_norm,
        dense,
        passed,
    })
}

/// Solution of `(λ I - L) u = f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorSolution {
    pub lambda: f64,
    pub u: Vec<f64>,
    /// `‖(λ I - L) u - f‖ / ‖f‖`.
    pub residual: f64,
    pub iterations: usize,
    /// Mean removed from the right-hand side.
    pub discarded_mean: f64,
}

/// Solve `(λ I - L) u = f` on mean-zero fields by GMRES with Jacobi
/// preconditioning `(λ + p(x))^{-1}`; falls back to a dense solve for small
/// tori when GMRES stagnates.
pub fn solve_resolvent(bundle: &OperatorBundle, f: &[f64], lambda: f64) -> Result<CorrectorSolution> {
    solve_resolvent_with(bundle, f, lambda, KrylovOptions::default())
}

pub fn solve_resolvent_with(
    bundle: &OperatorBundle,
    f: &[f64],
    lambda: f64,
    opts: KrylovOptions,
) -> Result<CorrectorSolution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("λ = {lambda} must be >= 0")));
    }
    if f.len() != bundle.len() {
        return Err(Error::Structure("right-hand side size mismatch".into()));
    }
    let (rhs, discarded_mean) = crate::spectral::project_mean_zero(f);
    let diag: Vec<f64> = bundle.total.iter().map(|p| lambda + p).collect();
    let outcome = gmres(
        |u| bundle.shifted_negative_l(u, lambda),
        |r| r.iter().zip(&diag).map(|(a, b)| a / b).collect(),
        &rhs,
        opts,
    );
    let outcome = match outcome {
        Ok(o) => o,
        Err(Error::Stagnation { .. }) if bundle.len() <= DENSE_EIGEN_LIMIT => {
            let ops = DenseOperators::new(bundle)?;
            let x = ops.solve_shifted(lambda, &rhs)?;
            let ax = bundle.shifted_negative_l(&x, lambda);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(a, b)| a - b).collect();
            KrylovOutcome {
                residual: norm(&r) / norm(&rhs).max(f64::MIN_POSITIVE),
                x,
                iterations: 0,
            }
        }
        Err(e) => return Err(e),
    };
    let (u, _) = crate::spectral::project_mean_zero(&outcome.x);
    let au = bundle.shifted_negative_l(&u, lambda);
    let res: Vec<f64> = rhs.iter().zip(&au).map(|(a, b)| a - b).collect();
    let fnorm = norm(&rhs);
    let residual = if fnorm > 0.0 { norm(&res) / fnorm } else { 0.0 };
    Ok(CorrectorSolution {
        lambda,
        u,
        residual,
        iterations: outcome.iterations,
        discarded_mean,
    })
}

/// Exact effective diffusivity of one environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diffusivity {
    pub sigma2: Vec<Vec<f64>>,
    /// `χ_i` solving `L χ_i = -(φ_i + ψ_i)`.
    pub correctors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// `σ²_ij = (1/n) Σ_x Σ_k p_k(x) (k_i + ∇_k χ_i(x)) (k_j + ∇_k χ_j(x))`, the
/// quadratic-variation rate of the corrected martingale `X + χ(η)`.
pub fn corrector_diffusivity(bundle: &OperatorBundle, dec: &RateDecomposition) -> Result<Diffusivity> {
    let d = bundle.torus.dim();
    let drift = dec.total_drift();
    let mut correctors = Vec::with_capacity(d);
    let mut residuals = Vec::with_capacity(d);
    for f in &drift {
        let sol = solve_resolvent(bundle, f, 0.0)?;
        residuals.push(sol.residual);
        correctors.push(sol.u);
    }
    let n = bundle.len() as f64;
    let mut sigma2 = vec![vec![0.0; d]; d];
    for k in bundle.torus.directions() {
        let incs: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                bundle
                    .grad(&correctors[i], k)
                    .into_iter()
                    .map(|g| g + k.component(i))
                    .collect()
            })
            .collect();
        let pk = &bundle.p[k.index()];
        for i in 0..d {
            for j in i..d {
                let s: f64 = (0..bundle.len()).map(|x| pk[x] * incs[i][x] * incs[j][x]).sum();
                sigma2[i][j] += s / n;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            sigma2[i][j] = sigma2[j][i];
        }
    }
    Ok(Diffusivity {
        sigma2,
        correctors,
        residuals,
    })
}

/// Diagnostics of the Kipnis-Varadhan limits for one scalar functional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KvReport {
    pub lambdas: Vec<f64>,
    /// `λ^{1/2} ‖u_λ‖`.
    pub lambda_half_norm: Vec<f64>,
    /// `‖S^{1/2}(u_λ - u_0)‖`.
    pub s_half_gap: Vec<f64>,
    /// `⟨u_λ, f⟩`.
    pub pairing: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `σ²_KV = 2 ⟨u_0, f⟩`.
    pub sigma2_kv: f64,
    /// `16 ⟨f, (-L - L*)^{-1} f⟩ = 8 ⟨f, S^{-1} f⟩`.
    pub olla_bound: f64,
    /// `⟨f, |Δ|^{-1} f⟩`.
    pub h_minus_one: f64,
}

impl KvReport {
    /// True when the sequence never increases by more than `slack`
    /// (relative to its first entry) from one rung to the next.
    pub fn gap_decreasing(&self, slack: f64) -> bool {
        let scale = self.s_half_gap.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        self.s_half_gap.windows(2).all(|w| w[1] <= w[0] + slack * scale)
    }
}

pub fn kv_limits_check(bundle: &OperatorBundle, f: &[f64], lambdas: &[f64]) -> Result<KvReport> {
    let (f, _) = crate::spectral::project_mean_zero(f);
    let u0 = solve_resolvent(bundle, &f, 0.0)?;
    let mut report = KvReport {
        lambdas: lambdas.to_vec(),
        lambda_half_norm: Vec::new(),
        s_half_gap: Vec::new(),
        pairing: Vec::new(),
        residuals: Vec::new(),
        sigma2_kv: 2.0 * dot(&u0.u, &f),
        olla_bound: 0.0,
        h_minus_one: 0.0,
    };
    for &lambda in lambdas {
        let sol = solve_resolvent(bundle, &f, lambda)?;
        report.lambda_half_norm.push(lambda.sqrt() * norm(&sol.u));
        let gap: Vec<f64> = sol.u.iter().zip(&u0.u).map(|(a, b)| a - b).collect();
        report.s_half_gap.push(dot(&gap, &bundle.s(&gap)).max(0.0).sqrt());
        report.pairing.push(dot(&sol.u, &f));
        report.residuals.push(sol.residual);
    }
    let s_inv = conjugate_gradient(
        |g| {
            let (h, _) = crate::spectral::project_mean_zero(g);
            bundle.s(&h)
        },
        |r| {
            let lambda = bundle.fft.lambda();
            let s = bundle.s_star;
            bundle.fft.apply(r, |p| {
                num_complex::Complex64::new(if p == 0 { 0.0 } else { 1.0 / (s * lambda[p]) }, 0.0)
            })
        },
        &f,
        KrylovOptions::default(),
    )?;
    report.olla_bound = 8.0 * dot(&f, &s_inv.x);
    let g = crate::spectral::apply_inv_laplacian(&bundle.fft, &f)?;
    report.h_minus_one = dot(&f, &g);
    Ok(report)
}

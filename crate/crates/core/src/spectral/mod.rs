//! Fourier-side operators, covariance spectra, the `H_{-1}` functional and
//! stream-tensor reconstruction.

pub mod fft;
pub mod helmholtz;
pub mod tensor;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::env::{decompose, mean_drift, RateDecomposition};
use crate::error::{Error, Result};
use crate::generators::{generate, GeneratorSpec};
use crate::lattice::{max_abs, mean, Direction, Torus};

pub use fft::TorusFft;
pub use helmholtz::{helmholtz_cocycle, helmholtz_stationary, CocycleChecks, CocycleTensor};
pub use tensor::StreamTensor;

/// Fourier coefficients of a real field with the zero mode split off.
#[derive(Debug, Clone)]
pub struct SpectralField {
    /// Coefficients with the `p = 0` entry set to zero.
    pub coeffs: Vec<Complex64>,
    /// The field mean (`f̂(0) / n`).
    pub mean: f64,
}

impl SpectralField {
    pub fn from_real(fft: &TorusFft, f: &[f64]) -> Self {
        let mut coeffs = fft.forward(f);
        let mean = coeffs[0].re / f.len() as f64;
        coeffs[0] = Complex64::new(0.0, 0.0);
        SpectralField { coeffs, mean }
    }

    /// Real field including the mean.
    pub fn to_real(&self, fft: &TorusFft) -> Vec<f64> {
        let mut c = self.coeffs.clone();
        c[0] = Complex64::new(self.mean * c.len() as f64, 0.0);
        fft.inverse(&c)
    }

    /// Largest imaginary part of the inverse transform, a Hermitian-symmetry
    /// diagnostic.
    pub fn imaginary_residual(&self, fft: &TorusFft) -> f64 {
        fft.inverse_complex(&self.coeffs)
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }
}

/// `∇_k f(x) = f(x + k) - f(x)`.
pub fn apply_gradient(torus: &Torus, f: &[f64], k: Direction) -> Vec<f64> {
    torus
        .neighbour_table(k)
        .iter()
        .zip(f)
        .map(|(&y, fx)| f[y as usize] - fx)
        .collect()
}

/// `Δ f = Σ_l ∇_l f`.
pub fn apply_laplacian(torus: &Torus, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for k in torus.directions() {
        for (o, (&y, fx)) in out.iter_mut().zip(torus.neighbour_table(k).iter().zip(f)) {
            *o += f[y as usize] - fx;
        }
    }
    out
}

/// `Γ_k f = |Δ|^{-1/2} ∇_k f`; the mean of `f` is annihilated.
pub fn apply_riesz(fft: &TorusFft, f: &[f64], k: Direction) -> Vec<f64> {
    fft.apply(f, |p| fft.riesz_symbol(p, k))
}

/// Remove the mean; returns the projected field and the discarded mean.
pub fn project_mean_zero(f: &[f64]) -> (Vec<f64>, f64) {
    let m = mean(f);
    (f.iter().map(|x| x - m).collect(), m)
}

fn require_mean_zero(f: &[f64]) -> Result<()> {
    let m = mean(f);
    if m.abs() > 1e-12 * max_abs(f).max(f64::MIN_POSITIVE) {
        return Err(Error::Domain(format!(
            "field has mean {m:e}; |Δ|^(-1/2) is defined on mean-zero fields only"
        )));
    }
    Ok(())
}

/// `|Δ|^{-1/2} f` for mean-zero `f`.
pub fn apply_inv_sqrt_laplacian(fft: &TorusFft, f: &[f64]) -> Result<Vec<f64>> {
    require_mean_zero(f)?;
    let lambda = fft.lambda();
    Ok(fft.apply(f, |p| {
        if p == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0 / lambda[p].sqrt(), 0.0)
        }
    }))
}

/// `|Δ|^{-1} f` for mean-zero `f`.
pub fn apply_inv_laplacian(fft: &TorusFft, f: &[f64]) -> Result<Vec<f64>> {
    require_mean_zero(f)?;
    let lambda = fft.lambda();
    Ok(fft.apply(f, |p| {
        if p == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0 / lambda[p], 0.0)
        }
    }))
}

/// Empirical spectral matrices of the drift fields.
#[derive(Debug, Clone)]
pub struct CovarianceSpectrum {
    pub dim: usize,
    /// `Ĉ_ij(p) = conj(φ̂_i(p)) φ̂_j(p) / n`, stored at `[i * d + j][p]`.
    pub c_hat: Vec<Vec<Complex64>>,
    /// Same for `ψ`.
    pub d_hat: Vec<Vec<Complex64>>,
    /// `C̃_ij = (1/n) Σ_{p≠0} Ĉ_ij(p) / λ(p)` with `λ(p) = 2 Σ_j (1 - cos p_j)`.
    pub c_tilde: Vec<Vec<f64>>,
    pub d_tilde: Vec<Vec<f64>>,
}

impl CovarianceSpectrum {
    pub fn c(&self, i: usize, j: usize) -> &[Complex64] {
        &self.c_hat[i * self.dim + j]
    }

    pub fn trace_c(&self, p: usize) -> f64 {
        (0..self.dim).map(|i| self.c(i, i)[p].re).sum()
    }

    pub fn trace_c_tilde(&self) -> f64 {
        (0..self.dim).map(|i| self.c_tilde[i][i]).sum()
    }
}

fn cross_spectra(fft: &TorusFft, fields: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
    let n = fft.torus().len() as f64;
    let hats: Vec<Vec<Complex64>> = fields.iter().map(|f| fft.forward(f)).collect();
    let d = fields.len();
    (0..d * d)
        .map(|ij| {
            let (i, j) = (ij / d, ij % d);
            hats[i]
                .iter()
                .zip(&hats[j])
                .map(|(a, b)| a.conj() * b / n)
                .collect()
        })
        .collect()
}

fn tilde(fft: &TorusFft, spectra: &[Vec<Complex64>], d: usize) -> Vec<Vec<f64>> {
    let n = fft.torus().len() as f64;
    let lambda = fft.lambda();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    spectra[i * d + j]
                        .iter()
                        .zip(lambda)
                        .skip(1)
                        .map(|(c, l)| c.re / l)
                        .sum::<f64>()
                        / n
                })
                .collect()
        })
        .collect()
}

pub fn covariance_spectrum(dec: &RateDecomposition) -> CovarianceSpectrum {
    let fft = TorusFft::new(&dec.torus);
    covariance_spectrum_with(&fft, dec)
}

pub fn covariance_spectrum_with(fft: &TorusFft, dec: &RateDecomposition) -> CovarianceSpectrum {
    let d = dec.dim();
    let c_hat = cross_spectra(fft, &dec.phi);
    let d_hat = cross_spectra(fft, &dec.psi);
    let c_tilde = tilde(fft, &c_hat, d);
    let d_tilde = tilde(fft, &d_hat, d);
    CovarianceSpectrum {
        dim: d,
        c_hat,
        d_hat,
        c_tilde,
        d_tilde,
    }
}

/// Refuse environments whose drift fields have a mean.
pub fn require_no_drift(dec: &RateDecomposition) -> Result<()> {
    let tol = 1e-12 * dec.s_upper;
    let means: Vec<f64> = dec.phi.iter().chain(&dec.psi).map(|f| mean(f)).collect();
    if !mean_drift(dec).is_zero || means.iter().any(|m| m.abs() > tol) {
        return Err(Error::Drift(mean_drift(dec).mean));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1Functional {
    pub c_tilde: Vec<Vec<f64>>,
    pub d_tilde: Vec<Vec<f64>>,
    /// Largest `|Ĉ_ij(0)|`; zero for drift-free environments.
    pub zero_frequency: f64,
}

impl H1Functional {
    pub fn trace_c_tilde(&self) -> f64 {
        (0..self.c_tilde.len()).map(|i| self.c_tilde[i][i]).sum()
    }
}

/// `C̃` and `D̃` of one environment.
pub fn h1_functional(dec: &RateDecomposition) -> Result<H1Functional> {
    require_no_drift(dec)?;
    let spec = covariance_spectrum(dec);
    let zero_frequency = spec
        .c_hat
        .iter()
        .map(|c| c[0].norm())
        .fold(0.0, f64::max);
    Ok(H1Functional {
        c_tilde: spec.c_tilde,
        d_tilde: spec.d_tilde,
        zero_frequency,
    })
}

/// `‖|Δ|^{-1/2} φ_i‖^2` per coordinate, computed in real space.
pub fn h1_domain_norm(dec: &RateDecomposition) -> Result<Vec<f64>> {
    require_no_drift(dec)?;
    let fft = TorusFft::new(&dec.torus);
    dec.phi
        .iter()
        .map(|phi| {
            let g = apply_inv_sqrt_laplacian(&fft, phi)?;
            Ok(crate::lattice::dot(&g, &g))
        })
        .collect()
}

/// Ratio above which doubling `L` is read as divergence of the functional.
pub const GROWTH_RATIO_THRESHOLD: f64 = 1.25;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    pub sides: Vec<usize>,
    /// Seed-averaged `tr C̃` per side.
    pub trace_c_tilde: Vec<f64>,
    /// Standard error of each average.
    pub trace_se: Vec<f64>,
    /// `trace[i + 1] / trace[i]`.
    pub ratios: Vec<f64>,
    /// True when no ratio exceeds [`GROWTH_RATIO_THRESHOLD`].
    pub finite: bool,
}

/// `tr C̃` of the same generator at several side lengths, averaged over
/// `seeds` consecutive seeds starting at `spec.seed`.
pub fn h1_growth(spec: &GeneratorSpec, sides: &[usize], seeds: usize) -> Result<GrowthReport> {
    if sides.len() < 2 || seeds == 0 {
        return Err(Error::Parameter("growth test needs two sides and one seed".into()));
    }
    let mut trace_c_tilde = Vec::new();
    let mut trace_se = Vec::new();
    for &side in sides {
        let values: Vec<f64> = (0..seeds as u64)
            .map(|j| {
                let s = spec.clone().with_side(side).with_seed(spec.seed.wrapping_add(j));
                let env = generate(&s)?.env;
                Ok(h1_functional(&decompose(&env))?.trace_c_tilde())
            })
            .collect::<Result<_>>()?;
        let m = mean(&values);
        let var = if seeds > 1 {
            values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (seeds - 1) as f64
        } else {
            0.0
        };
        trace_c_tilde.push(m);
        trace_se.push((var / seeds as f64).sqrt());
    }
    let ratios: Vec<f64> = trace_c_tilde.windows(2).map(|w| w[1] / w[0]).collect();
    let finite = ratios.iter().all(|&r| r <= GROWTH_RATIO_THRESHOLD);
    Ok(GrowthReport {
        sides: sides.to_vec(),
        trace_c_tilde,
        trace_se,
        ratios,
        finite,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KozlovReport {
    /// `B̂_{k,l} = -e^{ip·k} B̂_{-k,l} = -e^{-ip·l} B̂_{k,-l} = e^{ip·(k-l)} B̂_{-k,-l}`.
    pub vector_residual: f64,
    /// Row and column sums of `B̂(p)`.
    pub divfree_residual: f64,
    /// `Σ_{k,l} (1 - e^{-ip·k})(1 - e^{ip·l}) B̂_{k,l}(p)`.
    pub quadratic_residual: f64,
    /// `φ̂_i conj(φ̂_j)/n = (1 + e^{-ip_i})(1 + e^{ip_j}) B̂_{e_i,e_j}`.
    pub covariance_residual: f64,
    /// Largest `|Ĉ_ij(0)|`.
    pub zero_frequency: f64,
    /// `Σ tr Ĉ(p) / Σ |p|^2` over `0 < |p| <= band`.
    pub fit_coefficient: f64,
    pub fit_frequencies: usize,
    pub band: f64,
}

impl KozlovReport {
    pub fn identities_hold(&self, tol: f64) -> bool {
        self.vector_residual <= tol
            && self.divfree_residual <= tol
            && self.quadratic_residual <= tol
            && self.covariance_residual <= tol
            && self.zero_frequency <= tol
    }
}

pub const DEFAULT_KOZLOV_BAND: f64 = std::f64::consts::FRAC_PI_4;

/// Structural identities of the velocity cross-spectrum `B̂_{k,l}(p) =
/// v̂_k(p) conj(v̂_l(p)) / n` and a small-`|p|` fit of `tr Ĉ(p) / |p|^2`.
/// Residuals are relative to `max(1, max |B̂|)`.
pub fn kozlov_regularity(dec: &RateDecomposition, band: f64) -> Result<KozlovReport> {
    require_no_drift(dec)?;
    let t = &dec.torus;
    let fft = TorusFft::new(t);
    let n = t.len() as f64;
    let m = t.num_directions();
    let vhat: Vec<Vec<Complex64>> = dec.v.iter().map(|v| fft.forward(v)).collect();
    let b = |k: Direction, l: Direction, p: usize| vhat[k.index()][p] * vhat[l.index()][p].conj() / n;
    let dirs: Vec<Direction> = t.directions().collect();
    let mut scale = 1.0f64;
    let (mut vec_r, mut div_r, mut quad_r, mut cov_r) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in 0..t.len() {
        let mut table = vec![Complex64::default(); m * m];
        for &k in &dirs {
            for &l in &dirs {
                let z = b(k, l, p);
                scale = scale.max(z.norm());
                table[k.index() * m + l.index()] = z;
            }
        }
        let at = |k: Direction, l: Direction| table[k.index() * m + l.index()];
        let mut quad = Complex64::default();
        for &k in &dirs {
            let mut row = Complex64::default();
            let mut col = Complex64::default();
            for &l in &dirs {
                let z = at(k, l);
                let ek = fft.shift_symbol(p, k);
                let el = fft.shift_symbol(p, l);
                vec_r = vec_r
                    .max((z + ek * at(k.opposite(), l)).norm())
                    .max((z + el.conj() * at(k, l.opposite())).norm())
                    .max((z - ek * el.conj() * at(k.opposite(), l.opposite())).norm());
                row += z;
                col += at(l, k);
                quad += (1.0 - ek.conj()) * (1.0 - el) * z;
            }
            div_r = div_r.max(row.norm()).max(col.norm());
        }
        quad_r = quad_r.max(quad.norm());
    }
    let phihat: Vec<Vec<Complex64>> = dec.phi.iter().map(|f| fft.forward(f)).collect();
    for p in 0..t.len() {
        for i in 0..t.dim() {
            for j in 0..t.dim() {
                let ei = Direction::new(i, true);
                let ej = Direction::new(j, true);
                let lhs = phihat[i][p] * phihat[j][p].conj() / n;
                let rhs = (1.0 + fft.shift_symbol(p, ei).conj())
                    * (1.0 + fft.shift_symbol(p, ej))
                    * b(ei, ej, p);
                cov_r = cov_r.max((lhs - rhs).norm());
            }
        }
    }
    let spec = covariance_spectrum_with(&fft, dec);
    let zero_frequency = spec.c_hat.iter().map(|c| c[0].norm()).fold(0.0, f64::max);
    let (mut num, mut den, mut count) = (0.0, 0.0, 0usize);
    for p in 1..t.len() {
        let p2 = fft.p_squared(p);
        if p2 <= band * band {
            num += spec.trace_c(p);
            den += p2;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Parameter(format!(
            "no nonzero frequency inside |p| <= {band} at L = {}",
            t.side()
        )));
    }
    Ok(KozlovReport {
        vector_residual: vec_r / scale,
        divfree_residual: div_r / scale,
        quadratic_residual: quad_r / scale,
        covariance_residual: cov_r / scale,
        zero_frequency: zero_frequency / scale,
        fit_coefficient: num / den,
        fit_frequencies: count,
        band,
    })
}

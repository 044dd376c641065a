//! Stream tensors reconstructed from a divergence-free flow.
//!
//! Sign convention: `h_{k,l} = |Δ|^{-1/2}(Γ_k v_l - Γ_l v_k)` and
//! `g_{m;k,l} = Γ_m(Γ_k v_l - Γ_l v_k)`, which give `Σ_l h_{k,l} = v_k` and
//! `Σ_l g_{m;k,l} = ∇_m v_k`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::TorusFft;
use super::tensor::{num_pairs, StreamTensor};
use super::{apply_gradient, require_no_drift};
use crate::env::RateDecomposition;
use crate::error::{Error, Result};
use crate::lattice::{max_abs, Direction, Torus};

/// `(Γ_k v_l - Γ_l v_k)^` at every frequency.
fn potential_hat(fft: &TorusFft, vhat: &[Vec<Complex64>], k: Direction, l: Direction) -> Vec<Complex64> {
    (0..fft.torus().len())
        .map(|p| fft.riesz_symbol(p, k) * vhat[l.index()][p] - fft.riesz_symbol(p, l) * vhat[k.index()][p])
        .collect()
}

fn inv_sqrt_symbol(fft: &TorusFft, p: usize) -> f64 {
    if p == 0 {
        0.0
    } else {
        1.0 / fft.lambda()[p].sqrt()
    }
}

/// The stationary stream tensor of a drift-free environment.
pub fn helmholtz_stationary(dec: &RateDecomposition) -> Result<StreamTensor> {
    require_no_drift(dec)?;
    let t = &dec.torus;
    let fft = TorusFft::new(t);
    let vhat: Vec<Vec<Complex64>> = dec.v.iter().map(|v| fft.forward(v)).collect();
    let mut plaquettes = Vec::with_capacity(num_pairs(t.dim()));
    for a in 0..t.dim() {
        for b in a + 1..t.dim() {
            let mut g = potential_hat(&fft, &vhat, Direction::new(a, true), Direction::new(b, true));
            g.iter_mut()
                .enumerate()
                .for_each(|(p, z)| *z *= inv_sqrt_symbol(&fft, p));
            plaquettes.push(fft.inverse(&g));
        }
    }
    StreamTensor::from_plaquettes(t.clone(), plaquettes)
}

/// Every component `h_{k,l}` computed from its own Fourier formula, indexed
/// `k * 2d + l`. Used to check the storage convention of [`StreamTensor`].
pub fn helmholtz_components(dec: &RateDecomposition) -> Result<Vec<Vec<f64>>> {
    require_no_drift(dec)?;
    let t = &dec.torus;
    let fft = TorusFft::new(t);
    let vhat: Vec<Vec<Complex64>> = dec.v.iter().map(|v| fft.forward(v)).collect();
    let mut out = Vec::with_capacity(t.num_directions().pow(2));
    for k in t.directions() {
        for l in t.directions() {
            let mut g = potential_hat(&fft, &vhat, k, l);
            g.iter_mut()
                .enumerate()
                .for_each(|(p, z)| *z *= inv_sqrt_symbol(&fft, p));
            out.push(fft.inverse(&g));
        }
    }
    Ok(out)
}

/// Residuals of the increment field `g` and of its integral `H`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CocycleChecks {
    /// `g_{m;l,k} = -g_{m;k,l}`, `g_{m;-k,l} = -T_{-k} g_{m;k,l}`,
    /// `g_{m;k,-l} = -T_{-l} g_{m;k,l}`.
    pub tensor_symmetry: f64,
    /// `g_m + T_m g_n = g_n + T_n g_m`.
    pub gradient_consistency: f64,
    /// `Σ_l g_{m;k,l} = ∇_m v_k`.
    pub divergence: f64,
    /// `H(x + m) - H(x) - g_m(x)` over every site and direction, including
    /// edges off the spanning tree and across the periodic boundary.
    pub path_independence: f64,
    /// Symmetries of `H` itself.
    pub h_symmetry: f64,
    /// `Σ_l H_{k,l} = v_k`.
    pub curl: f64,
}

impl CocycleChecks {
    pub fn worst(&self) -> f64 {
        [
            self.tensor_symmetry,
            self.gradient_consistency,
            self.divergence,
            self.path_independence,
            self.h_symmetry,
            self.curl,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Cocycle stream tensor: increments `g` and their pinned integral `H`.
#[derive(Debug, Clone)]
pub struct CocycleTensor {
    pub torus: Torus,
    /// `g_{m;k,l}` at `(m * 2d + k) * 2d + l`.
    pub g: Vec<Vec<f64>>,
    /// `H_{k,l}` at `k * 2d + l`.
    pub h: Vec<Vec<f64>>,
    /// `H_{k,l}(0)`.
    pub pins: Vec<f64>,
    pub checks: CocycleChecks,
}

impl CocycleTensor {
    fn idx(&self, k: Direction, l: Direction) -> usize {
        k.index() * self.torus.num_directions() + l.index()
    }

    pub fn g(&self, m: Direction, k: Direction, l: Direction) -> &[f64] {
        let n = self.torus.num_directions();
        &self.g[(m.index() * n + k.index()) * n + l.index()]
    }

    pub fn h(&self, k: Direction, l: Direction) -> &[f64] {
        &self.h[self.idx(k, l)]
    }
}

/// Pinned value `H_{k,l}(0)`.
fn pin(torus: &Torus, g: impl Fn(Direction, Direction, Direction) -> Vec<f64>, k: Direction, l: Direction) -> f64 {
    let (i, j) = (k.axis(), l.axis());
    if i == j {
        return 0.0;
    }
    if i > j {
        return -pin(torus, g, l, k);
    }
    let ei = Direction::new(i, true);
    let ej = Direction::new(j, true);
    match (k.is_positive(), l.is_positive()) {
        (true, true) => 0.0,
        (false, true) => -g(ei.opposite(), ei, ej)[0],
        (true, false) => -g(ej.opposite(), ei, ej)[0],
        (false, false) => {
            let minus_ei = torus.neighbour(0, ei.opposite());
            g(ei.opposite(), ei, ej)[0] + g(ej.opposite(), ei, ej)[minus_ei]
        }
    }
}

/// Integrate positive-direction increments along the axis-first spanning
/// tree from the origin.
fn integrate(torus: &Torus, start: f64, increments: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; torus.len()];
    out[0] = start;
    // Sites are ordered with axis 0 fastest, so walking indices in order
    // visits each site after its tree parent: the parent of x lowers the
    // highest nonzero coordinate by one.
    for x in 1..torus.len() {
        let axis = (0..torus.dim()).rev().find(|&a| torus.coord(x, a) != 0).unwrap();
        let parent = torus.neighbour(x, Direction::new(axis, false));
        out[x] = out[parent] + increments[axis][parent];
    }
    out
}

pub fn helmholtz_cocycle(dec: &RateDecomposition) -> Result<CocycleTensor> {
    let t = &dec.torus;
    let m = t.num_directions();
    let fft = TorusFft::new(t);
    let vhat: Vec<Vec<Complex64>> = dec.v.iter().map(|v| fft.forward(v)).collect();
    let dirs: Vec<Direction> = t.directions().collect();

    let mut g = Vec::with_capacity(m * m * m);
    for &mm in &dirs {
        for &k in &dirs {
            for &l in &dirs {
                let mut z = potential_hat(&fft, &vhat, k, l);
                z.iter_mut()
                    .enumerate()
                    .for_each(|(p, w)| *w *= fft.riesz_symbol(p, mm));
                g.push(fft.inverse(&z));
            }
        }
    }
    let gi = |a: Direction, k: Direction, l: Direction| (a.index() * m + k.index()) * m + l.index();
    let gf = |a: Direction, k: Direction, l: Direction| g[gi(a, k, l)].clone();

    let mut checks = CocycleChecks::default();
    for &a in &dirs {
        for &k in &dirs {
            for &l in &dirs {
                let gkl = &g[gi(a, k, l)];
                let glk = &g[gi(a, l, k)];
                let gmk = &g[gi(a, k.opposite(), l)];
                let gml = &g[gi(a, k, l.opposite())];
                for x in 0..t.len() {
                    let back_k = t.neighbour(x, k.opposite());
                    let back_l = t.neighbour(x, l.opposite());
                    checks.tensor_symmetry = checks
                        .tensor_symmetry
                        .max((glk[x] + gkl[x]).abs())
                        .max((gmk[x] + gkl[back_k]).abs())
                        .max((gml[x] + gkl[back_l]).abs());
                }
                for &b in &dirs {
                    let gb = &g[gi(b, k, l)];
                    for x in 0..t.len() {
                        let lhs = gkl[x] + gb[t.neighbour(x, a)];
                        let rhs = gb[x] + gkl[t.neighbour(x, b)];
                        checks.gradient_consistency = checks.gradient_consistency.max((lhs - rhs).abs());
                    }
                }
            }
            let grad = apply_gradient(t, &dec.v[k.index()], a);
            for x in 0..t.len() {
                let s: f64 = dirs.iter().map(|&l| g[gi(a, k, l)][x]).sum();
                checks.divergence = checks.divergence.max((s - grad[x]).abs());
            }
        }
    }

    let positive: Vec<Direction> = (0..t.dim()).map(|a| Direction::new(a, true)).collect();
    let mut h = Vec::with_capacity(m * m);
    let mut pins = Vec::with_capacity(m * m);
    for &k in &dirs {
        for &l in &dirs {
            let p0 = pin(t, &gf, k, l);
            let incs: Vec<&[f64]> = positive.iter().map(|&e| g[gi(e, k, l)].as_slice()).collect();
            h.push(integrate(t, p0, &incs));
            pins.push(p0);
        }
    }
    for &k in &dirs {
        for &l in &dirs {
            let hkl = &h[k.index() * m + l.index()];
            for &a in &dirs {
                let ga = &g[gi(a, k, l)];
                for x in 0..t.len() {
                    let r = hkl[t.neighbour(x, a)] - hkl[x] - ga[x];
                    checks.path_independence = checks.path_independence.max(r.abs());
                }
            }
        }
    }
    checks.h_symmetry = super::tensor::symmetry_residual(t, &h);
    for &k in &dirs {
        for x in 0..t.len() {
            let s: f64 = dirs.iter().map(|&l| h[k.index() * m + l.index()][x]).sum();
            checks.curl = checks.curl.max((s - dec.v[k.index()][x]).abs());
        }
    }

    let scale = dec.v.iter().map(|v| max_abs(v)).fold(1.0, f64::max);
    let structural = checks
        .tensor_symmetry
        .max(checks.gradient_consistency)
        .max(checks.divergence)
        .max(checks.path_independence);
    if structural > 1e-10 * scale {
        return Err(Error::Internal(format!(
            "cocycle consistency residual {structural:e} exceeds tolerance"
        )));
    }
    Ok(CocycleTensor {
        torus: t.clone(),
        g,
        h,
        pins,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::decompose;
    use crate::generators::{gen_stream_tensor, GeneratorSpec};
    use crate::spectral::tensor::symmetry_residual;

    #[test]
    fn stationary_tensor_reproduces_flow() {
        let (env, _) = gen_stream_tensor(&GeneratorSpec::stream(2, 16, 1, 1.0)).unwrap();
        let dec = decompose(&env);
        let h = helmholtz_stationary(&dec).unwrap();
        assert!(h.curl_residual(&dec.v) < 1e-10);
        let direct = helmholtz_components(&dec).unwrap();
        assert!(symmetry_residual(&dec.torus, &direct) < 1e-12);
        let stored = h.components();
        let diff = stored
            .iter()
            .zip(&direct)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn cocycle_is_consistent_and_shifts_stationary_by_constants() {
        let (env, _) = gen_stream_tensor(&GeneratorSpec::stream(3, 8, 4, 1.0)).unwrap();
        let dec = decompose(&env);
        let c = helmholtz_cocycle(&dec).unwrap();
        assert!(c.checks.worst() < 1e-10, "{:?}", c.checks);
        let direct = helmholtz_components(&dec).unwrap();
        for (hc, hs) in c.h.iter().zip(&direct) {
            let offset = hc[0] - hs[0];
            for (a, b) in hc.iter().zip(hs) {
                assert!((a - b - offset).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_flow_gives_zero_cocycle() {
        let env = crate::env::Environment::constant(2, 8, 1.0).unwrap();
        let c = helmholtz_cocycle(&decompose(&env)).unwrap();
        assert!(c.g.iter().flatten().all(|&x| x == 0.0));
        assert!(c.h.iter().flatten().all(|&x| x == 0.0));
    }
}

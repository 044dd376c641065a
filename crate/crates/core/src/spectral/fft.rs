//! Multidimensional DFT on the torus.
//!
//! Convention: `f̂(p) = Σ_x f(x) e^{-i p·x}` with `p = 2π m / L`, stored with
//! the same index layout as sites. Under it the shift `f(x + k)` has symbol
//! `e^{i p·k}`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::{Direction, Torus};

#[derive(Clone)]
pub struct TorusFft {
    torus: Torus,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `λ(p) = 2 Σ_j (1 - cos p_j)`, the symbol of `-Δ`.
    lambda: Vec<f64>,
    angles: Vec<f64>,
}

impl std::fmt::Debug for TorusFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusFft").field("torus", &self.torus).finish()
    }
}

impl TorusFft {
    pub fn new(torus: &Torus) -> Self {
        let mut planner = FftPlanner::new();
        let l = torus.side();
        let angles: Vec<f64> = (0..l).map(|m| 2.0 * PI * m as f64 / l as f64).collect();
        let lambda = (0..torus.len())
            .map(|x| {
                (0..torus.dim())
                    .map(|a| 2.0 * (1.0 - angles[torus.coord(x, a)].cos()))
                    .sum()
            })
            .collect();
        TorusFft {
            torus: torus.clone(),
            forward: planner.plan_fft_forward(l),
            inverse: planner.plan_fft_inverse(l),
            lambda,
            angles,
        }
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    /// Symbol of `-Δ` at every frequency.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Angle `p_a` of frequency index `p` along `axis`.
    #[inline]
    pub fn angle(&self, p: usize, axis: usize) -> f64 {
        self.angles[self.torus.coord(p, axis)]
    }

    /// Angle wrapped to `(-π, π]`.
    pub fn centered_angle(&self, p: usize, axis: usize) -> f64 {
        let a = self.angle(p, axis);
        if a > PI {
            a - 2.0 * PI
        } else {
            a
        }
    }

    /// `|p|^2` with angles in `(-π, π]`.
    pub fn p_squared(&self, p: usize) -> f64 {
        (0..self.torus.dim())
            .map(|a| self.centered_angle(p, a).powi(2))
            .sum()
    }

    /// `e^{i p·k}`, the symbol of the shift by `k`.
    #[inline]
    pub fn shift_symbol(&self, p: usize, k: Direction) -> Complex64 {
        Complex64::from_polar(1.0, k.sign() * self.angle(p, k.axis()))
    }

    /// `e^{i p·k} - 1`, the symbol of `∇_k`.
    #[inline]
    pub fn gradient_symbol(&self, p: usize, k: Direction) -> Complex64 {
        self.shift_symbol(p, k) - 1.0
    }

    /// Symbol of `Γ_k = |Δ|^{-1/2} ∇_k`; zero at `p = 0`.
    #[inline]
    pub fn riesz_symbol(&self, p: usize, k: Direction) -> Complex64 {
        if p == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.gradient_symbol(p, k) / self.lambda[p].sqrt()
        }
    }

    /// Index of `-p`.
    pub fn negate(&self, p: usize) -> usize {
        let l = self.torus.side();
        (0..self.torus.dim())
            .map(|a| ((l - self.torus.coord(p, a)) % l) * self.torus.stride(a))
            .sum()
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let t = &self.torus;
        let l = t.side();
        let n = t.len();
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        let mut lines = vec![Complex64::default(); n];
        for axis in 1..t.dim() {
            let stride = t.stride(axis);
            let block = stride * l;
            // Gather every line along `axis` into a contiguous buffer.
            let mut w = 0;
            for start in (0..n).step_by(block) {
                for o in 0..stride {
                    for j in 0..l {
                        lines[w] = data[start + o + j * stride];
                        w += 1;
                    }
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            let mut r = 0;
            for start in (0..n).step_by(block) {
                for o in 0..stride {
                    for j in 0..l {
                        data[start + o + j * stride] = lines[r];
                        r += 1;
                    }
                }
            }
        }
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    pub fn forward_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut data = f.to_vec();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform including the `1/n` factor.
    pub fn inverse_complex(&self, g: &[Complex64]) -> Vec<Complex64> {
        let mut data = g.to_vec();
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / self.torus.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
        data
    }

    /// Inverse transform of a Hermitian-symmetric spectrum; the imaginary
    /// part is dropped.
    pub fn inverse(&self, g: &[Complex64]) -> Vec<f64> {
        self.inverse_complex(g).into_iter().map(|z| z.re).collect()
    }

    /// Apply a Fourier multiplier to a real field. `symbol(p)` must satisfy
    /// `symbol(-p) = conj(symbol(p))` for the result to be real.
    pub fn apply(&self, f: &[f64], symbol: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let mut g = self.forward(f);
        g.iter_mut().enumerate().for_each(|(p, z)| *z *= symbol(p));
        self.inverse(&g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(t: &Torus, f: &[f64], p: usize) -> Complex64 {
        let fft = TorusFft::new(t);
        (0..t.len())
            .map(|x| {
                let phase: f64 = (0..t.dim())
                    .map(|a| fft.angle(p, a) * t.coord(x, a) as f64)
                    .sum();
                f[x] * Complex64::from_polar(1.0, -phase)
            })
            .sum()
    }

    #[test]
    fn matches_naive_dft() {
        let t = Torus::new(3, 4).unwrap();
        let fft = TorusFft::new(&t);
        let f: Vec<f64> = (0..t.len()).map(|x| ((x * 37) % 11) as f64 - 5.0).collect();
        let g = fft.forward(&f);
        for p in [0, 1, 5, 17, 63] {
            assert!((g[p] - naive_dft(&t, &f, p)).norm() < 1e-10);
        }
        let back = fft.inverse(&g);
        for (a, b) in back.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_has_exponential_symbol() {
        let t = Torus::new(2, 8).unwrap();
        let fft = TorusFft::new(&t);
        let f: Vec<f64> = (0..t.len()).map(|x| (x as f64 * 0.37).sin()).collect();
        for k in t.directions() {
            let direct = t.shifted(&f, k);
            let spectral = fft.apply(&f, |p| fft.shift_symbol(p, k));
            for (a, b) in direct.iter().zip(&spectral) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negate_is_involution() {
        let t = Torus::new(2, 8).unwrap();
        let fft = TorusFft::new(&t);
        for p in 0..t.len() {
            assert_eq!(fft.negate(fft.negate(p)), p);
            assert!((fft.lambda()[p] - fft.lambda()[fft.negate(p)]).abs() < 1e-14);
        }
    }
}

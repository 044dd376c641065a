//! Antisymmetric stream tensors on the torus.
//!
//! Only the plaquette fields `h_{e_a,e_b}` with `a < b` are stored. For
//! `k = σ e_a`, `l = τ e_b` with `a != b` the remaining components follow from
//! the tensor symmetries:
//!
//! `h_{k,l}(x) = σ τ ε(a,b) ψ_{min(a,b),max(a,b)}(x - [σ<0] e_a - [τ<0] e_b)`
//!
//! with `ε(a,b) = ±1` according as `a < b` or `a > b`. Components along a
//! single axis vanish.

use crate::error::{Error, Result};
use crate::lattice::{max_abs, Direction, Torus};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamTensor {
    torus: Torus,
    plaquettes: Vec<Vec<f64>>,
}

/// Position of the pair `(a, b)`, `a < b`, in lexicographic order.
pub fn pair_index(dim: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < dim);
    (0..a).map(|i| dim - 1 - i).sum::<usize>() + (b - a - 1)
}

pub fn num_pairs(dim: usize) -> usize {
    dim * (dim - 1) / 2
}

impl StreamTensor {
    pub fn zeros(torus: Torus) -> Self {
        let plaquettes = vec![vec![0.0; torus.len()]; num_pairs(torus.dim())];
        StreamTensor { torus, plaquettes }
    }

    pub fn from_plaquettes(torus: Torus, plaquettes: Vec<Vec<f64>>) -> Result<Self> {
        if plaquettes.len() != num_pairs(torus.dim())
            || plaquettes.iter().any(|p| p.len() != torus.len())
        {
            return Err(Error::Structure(
                "plaquette fields do not match the torus".into(),
            ));
        }
        Ok(StreamTensor { torus, plaquettes })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn plaquette(&self, a: usize, b: usize) -> &[f64] {
        &self.plaquettes[pair_index(self.torus.dim(), a, b)]
    }

    pub fn plaquette_mut(&mut self, a: usize, b: usize) -> &mut [f64] {
        let q = pair_index(self.torus.dim(), a, b);
        &mut self.plaquettes[q]
    }

    pub fn plaquettes(&self) -> &[Vec<f64>] {
        &self.plaquettes
    }

    pub fn scale(&mut self, factor: f64) {
        self.plaquettes
            .iter_mut()
            .flatten()
            .for_each(|h| *h *= factor);
    }

    /// `h_{k,l}` as a full field.
    pub fn component(&self, k: Direction, l: Direction) -> Vec<f64> {
        let t = &self.torus;
        let (a, b) = (k.axis(), l.axis());
        if a == b {
            return vec![0.0; t.len()];
        }
        let eps = if a < b { 1.0 } else { -1.0 };
        let sign = k.sign() * l.sign() * eps;
        let field = self.plaquette(a.min(b), a.max(b));
        let back_a = Direction::new(a, false);
        let back_b = Direction::new(b, false);
        (0..t.len())
            .map(|x| {
                let mut y = x;
                if !k.is_positive() {
                    y = t.neighbour(y, back_a);
                }
                if !l.is_positive() {
                    y = t.neighbour(y, back_b);
                }
                sign * field[y]
            })
            .collect()
    }

    /// `v_k = Σ_l h_{k,l}`.
    pub fn curl(&self) -> Vec<Vec<f64>> {
        let t = &self.torus;
        t.directions()
            .map(|k| {
                let mut v = vec![0.0; t.len()];
                for l in t.directions() {
                    for (acc, h) in v.iter_mut().zip(self.component(k, l)) {
                        *acc += h;
                    }
                }
                v
            })
            .collect()
    }

    /// Largest `|v_k(x) - Σ_l h_{k,l}(x)|`.
    pub fn curl_residual(&self, v: &[Vec<f64>]) -> f64 {
        self.curl()
            .iter()
            .zip(v)
            .map(|(c, v)| c.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.plaquettes.iter().map(|p| max_abs(p)).fold(0.0, f64::max)
    }
}

/// Largest violation of `h_{l,k} = -h_{k,l}` and
/// `h_{l,k}(x) = h_{-k,l}(x+k) = h_{k,-l}(x+l)` over a full component table
/// indexed `k * 2d + l`.
pub fn symmetry_residual(torus: &Torus, components: &[Vec<f64>]) -> f64 {
    let m = torus.num_directions();
    let mut worst = 0.0f64;
    for k in torus.directions() {
        for l in torus.directions() {
            let hkl = &components[k.index() * m + l.index()];
            let hlk = &components[l.index() * m + k.index()];
            let hmk = &components[k.opposite().index() * m + l.index()];
            let hml = &components[k.index() * m + l.opposite().index()];
            for x in 0..torus.len() {
                worst = worst
                    .max((hlk[x] + hkl[x]).abs())
                    .max((hlk[x] - hmk[torus.neighbour(x, k)]).abs())
                    .max((hlk[x] - hml[torus.neighbour(x, l)]).abs());
            }
        }
    }
    worst
}

impl StreamTensor {
    /// All `(2d)^2` components, indexed `k * 2d + l`.
    pub fn components(&self) -> Vec<Vec<f64>> {
        let t = &self.torus;
        t.directions()
            .flat_map(|k| t.directions().map(move |l| (k, l)))
            .map(|(k, l)| self.component(k, l))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_indices_are_dense() {
        for d in 2..=4 {
            let mut seen = Vec::new();
            for a in 0..d {
                for b in a + 1..d {
                    seen.push(pair_index(d, a, b));
                }
            }
            assert_eq!(seen, (0..num_pairs(d)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn unit_plaquette_flows_around_its_boundary() {
        let t = Torus::new(2, 8).unwrap();
        let mut h = StreamTensor::zeros(t.clone());
        let y = t.index_of(&[3, 4]);
        h.plaquette_mut(0, 1)[y] = 1.0;
        let v = h.curl();
        let e1 = Direction::new(0, true);
        let e2 = Direction::new(1, true);
        // counter-clockwise: y -> y+e1 -> y+e1+e2 -> y+e2 -> y
        let expected = [
            (y, e1, 1.0),
            (t.neighbour(y, e1), e2, 1.0),
            (t.neighbour(t.neighbour(y, e1), e2), e1.opposite(), 1.0),
            (t.neighbour(y, e2), e2.opposite(), 1.0),
            (t.neighbour(y, e1), e1.opposite(), -1.0),
            (t.neighbour(t.neighbour(y, e1), e2), e2.opposite(), -1.0),
            (t.neighbour(y, e2), e1, -1.0),
            (y, e2, -1.0),
        ];
        let mut nonzero = 0;
        for k in t.directions() {
            for x in 0..t.len() {
                let want = expected
                    .iter()
                    .find(|(s, d, _)| *s == x && *d == k)
                    .map_or(0.0, |e| e.2);
                assert_eq!(v[k.index()][x], want, "site {x} direction {k:?}");
                if want != 0.0 {
                    nonzero += 1;
                }
            }
        }
        assert_eq!(nonzero, 8);
    }

    #[test]
    fn storage_convention_is_symmetric() {
        let t = Torus::new(3, 8).unwrap();
        let mut h = StreamTensor::zeros(t.clone());
        for (q, p) in h.plaquettes.iter_mut().enumerate() {
            for (x, val) in p.iter_mut().enumerate() {
                *val = ((x * 31 + q * 17) % 13) as f64 - 6.0;
            }
        }
        assert_eq!(symmetry_residual(&t, &h.components()), 0.0);
    }
}

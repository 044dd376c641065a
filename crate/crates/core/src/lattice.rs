//! Periodic lattice geometry.
//!
//! Sites of the torus `Z_L^d` are stored in row-major order with coordinate 1
//! fastest: `index = x_1 + L x_2 + L^2 x_3 + ...`. The `2d` unit steps are
//! numbered `2i -> +e_{i+1}` and `2i + 1 -> -e_{i+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 4;

/// A nearest-neighbour step `±e_axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction(pub usize);

impl Direction {
    pub fn new(axis: usize, positive: bool) -> Self {
        Direction(2 * axis + usize::from(!positive))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0
    }

    #[inline]
    pub fn axis(self) -> usize {
        self.0 / 2
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 % 2 == 0
    }

    /// `+1.0` or `-1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn opposite(self) -> Self {
        Direction(self.0 ^ 1)
    }

    /// Component `i` of the unit vector.
    #[inline]
    pub fn component(self, i: usize) -> f64 {
        if self.axis() == i {
            self.sign()
        } else {
            0.0
        }
    }
}

/// The discrete torus `Z_L^d` with precomputed neighbour tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TorusShape", into = "TorusShape")]
pub struct Torus {
    dim: usize,
    side: usize,
    len: usize,
    neighbours: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct TorusShape {
    d: usize,
    side: usize,
}

impl TryFrom<TorusShape> for Torus {
    type Error = Error;
    fn try_from(s: TorusShape) -> Result<Self> {
        Torus::new(s.d, s.side)
    }
}

impl From<Torus> for TorusShape {
    fn from(t: Torus) -> Self {
        TorusShape {
            d: t.dim,
            side: t.side,
        }
    }
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::Parameter(format!(
                "dimension {dim} outside supported range {MIN_DIM}..={MAX_DIM}"
            )));
        }
        if side < 2 {
            return Err(Error::Parameter(format!("side length {side} < 2")));
        }
        let len = side
            .checked_pow(dim as u32)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::Parameter(format!("torus {side}^{dim} too large")))?;
        let mut torus = Torus {
            dim,
            side,
            len,
            neighbours: Vec::new(),
        };
        torus.neighbours = (0..2 * dim)
            .map(|k| {
                (0..len)
                    .map(|x| torus.shift_slow(x, Direction(k)) as u32)
                    .collect()
            })
            .collect();
        Ok(torus)
    }

    /// Like [`Torus::new`] but additionally requires `side` to be a power of
    /// two and at least 8.
    pub fn new_spectral(dim: usize, side: usize) -> Result<Self> {
        if !side.is_power_of_two() || side < 8 {
            return Err(Error::Parameter(format!(
                "side length {side} must be a power of two >= 8"
            )));
        }
        Self::new(dim, side)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of sites `L^d`.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn num_directions(&self) -> usize {
        2 * self.dim
    }

    pub fn directions(&self) -> impl Iterator<Item = Direction> {
        (0..2 * self.dim).map(Direction)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.side.pow(axis as u32)
    }

    #[inline]
    pub fn coord(&self, x: usize, axis: usize) -> usize {
        (x / self.stride(axis)) % self.side
    }

    pub fn coords(&self, x: usize) -> Vec<usize> {
        (0..self.dim).map(|a| self.coord(x, a)).collect()
    }

    /// Site index of (wrapped) integer coordinates.
    pub fn index_of(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let l = self.side as i64;
        coords
            .iter()
            .enumerate()
            .map(|(a, &c)| (c.rem_euclid(l) as usize) * self.stride(a))
            .sum()
    }

    fn shift_slow(&self, x: usize, k: Direction) -> usize {
        let axis = k.axis();
        let c = self.coord(x, axis);
        let stride = self.stride(axis);
        let nc = if k.is_positive() {
            (c + 1) % self.side
        } else {
            (c + self.side - 1) % self.side
        };
        x - c * stride + nc * stride
    }

    /// `x + k` on the torus.
    #[inline]
    pub fn neighbour(&self, x: usize, k: Direction) -> usize {
        self.neighbours[k.0][x] as usize
    }

    /// Neighbour table for one direction: `table[x] = x + k`.
    #[inline]
    pub fn neighbour_table(&self, k: Direction) -> &[u32] {
        &self.neighbours[k.0]
    }

    /// `x + y` for arbitrary site offsets.
    pub fn translate(&self, x: usize, offset: usize) -> usize {
        (0..self.dim)
            .map(|a| ((self.coord(x, a) + self.coord(offset, a)) % self.side) * self.stride(a))
            .sum()
    }

    /// `f(x + k)` as a new field.
    pub fn shifted(&self, f: &[f64], k: Direction) -> Vec<f64> {
        self.neighbour_table(k).iter().map(|&y| f[y as usize]).collect()
    }

    /// `f(x + offset)` as a new field.
    pub fn translated(&self, f: &[f64], offset: usize) -> Vec<f64> {
        (0..self.len).map(|x| f[self.translate(x, offset)]).collect()
    }
}

/// Spatial (π-) average.
pub fn mean(f: &[f64]) -> f64 {
    f.iter().sum::<f64>() / f.len() as f64
}

/// `⟨f, g⟩ = (1/n) Σ f g`.
pub fn dot(f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64
}

pub fn norm(f: &[f64]) -> f64 {
    dot(f, f).sqrt()
}

pub fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_wrap_and_invert() {
        let t = Torus::new(3, 4).unwrap();
        for x in 0..t.len() {
            for k in t.directions() {
                let y = t.neighbour(x, k);
                assert_eq!(t.neighbour(y, k.opposite()), x);
            }
        }
        assert_eq!(t.neighbour(3, Direction::new(0, true)), 0);
        assert_eq!(t.neighbour(0, Direction::new(2, false)), 48);
    }

    #[test]
    fn index_roundtrip() {
        let t = Torus::new(2, 8).unwrap();
        for x in 0..t.len() {
            let c: Vec<i64> = t.coords(x).into_iter().map(|c| c as i64).collect();
            assert_eq!(t.index_of(&c), x);
        }
        assert_eq!(t.index_of(&[-1, 0]), 7);
    }

    #[test]
    fn spectral_side_must_be_power_of_two() {
        assert!(Torus::new_spectral(2, 12).is_err());
        assert!(Torus::new_spectral(2, 4).is_err());
        assert!(Torus::new_spectral(2, 16).is_ok());
    }
}

//! Example environments.
//!
//! Every generator builds the antisymmetric part as a divergence-free flow
//! and adds it to a symmetric part respecting `s_k(x) = s_{-k}(x+k)`.
//! Generated values are truncated to multiples of `2^-24`, which keeps all
//! rate sums exact so the structural identities hold with zero residual.

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Provenance};
use crate::error::{Error, Result};
use crate::lattice::{max_abs, Direction, Torus};
use crate::rng::{counter_f64, counter_f64_open, tag};
use crate::spectral::tensor::{num_pairs, pair_index, StreamTensor};

const GRID: f64 = (1u64 << 24) as f64;

#[inline]
fn quantize(x: f64) -> f64 {
    (x * GRID).trunc() / GRID
}

fn default_clip() -> f64 {
    0.9
}

fn default_correlation() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoinPattern {
    /// Balanced random orientation per line.
    #[default]
    Random,
    /// Orientation alternates with the parity of the first transverse
    /// coordinate.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Curl of a random plaquette field. `tail_exponent = None` draws bounded
    /// uniform plaquettes; `Some(α)` draws symmetric Pareto plaquettes with
    /// `P(|h| > t) = t^-α`.
    StreamTensor {
        amplitude: f64,
        #[serde(default)]
        tail_exponent: Option<f64>,
        #[serde(default = "default_clip")]
        clip: f64,
    },
    /// Every line parallel to a coordinate axis carries a unit flow in a
    /// random direction.
    Manhattan {
        #[serde(default = "default_correlation")]
        correlation_length: usize,
        #[serde(default)]
        pattern: CoinPattern,
    },
    /// Superposition of oriented rectangular loops.
    Cyclic {
        density: f64,
        max_len: usize,
        weight: f64,
        #[serde(default = "default_clip")]
        clip: f64,
    },
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymmetricPart {
    /// `s_k ≡ s`.
    Constant { s: f64 },
    /// Random conductances `c_i(x)` uniform in `[min, max]` on the edge
    /// `(x, x + e_i)`; `s_{e_i}(x) = c_i(x)`, `s_{-e_i}(x) = c_i(x - e_i)`.
    Conductance { min: f64, max: f64 },
}

impl Default for SymmetricPart {
    fn default() -> Self {
        SymmetricPart::Constant { s: 1.0 }
    }
}

impl SymmetricPart {
    /// The ellipticity floor implied by this symmetric part.
    pub fn floor(&self) -> f64 {
        match *self {
            SymmetricPart::Constant { s } => s,
            SymmetricPart::Conductance { min, .. } => min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub d: usize,
    #[serde(rename = "L")]
    pub side: usize,
    pub seed: u64,
    #[serde(default)]
    pub symmetric: SymmetricPart,
}

impl GeneratorSpec {
    pub fn new(family: Family, d: usize, side: usize, seed: u64) -> Self {
        GeneratorSpec {
            family,
            d,
            side,
            seed,
            symmetric: SymmetricPart::default(),
        }
    }

    pub fn with_symmetric(mut self, symmetric: SymmetricPart) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_side(mut self, side: usize) -> Self {
        self.side = side;
        self
    }

    pub fn stream(d: usize, side: usize, seed: u64, amplitude: f64) -> Self {
        Self::new(
            Family::StreamTensor {
                amplitude,
                tail_exponent: None,
                clip: default_clip(),
            },
            d,
            side,
            seed,
        )
    }

    pub fn manhattan(d: usize, side: usize, seed: u64) -> Self {
        Self::new(
            Family::Manhattan {
                correlation_length: 1,
                pattern: CoinPattern::Random,
            },
            d,
            side,
            seed,
        )
    }

    pub fn tag(&self) -> &'static str {
        match self.family {
            Family::StreamTensor { .. } => "stream_tensor",
            Family::Manhattan { .. } => "manhattan",
            Family::Cyclic { .. } => "cyclic",
            Family::Symmetric => "symmetric",
        }
    }
}

/// A generated environment and, where the family has one, its stream tensor.
#[derive(Debug, Clone)]
pub struct Generated {
    pub env: Environment,
    pub tensor: Option<StreamTensor>,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    match spec.family {
        Family::StreamTensor { .. } => {
            gen_stream_tensor(spec).map(|(env, h)| Generated { env, tensor: Some(h) })
        }
        Family::Manhattan { .. } => gen_manhattan(spec).map(|env| Generated { env, tensor: None }),
        Family::Cyclic { .. } => {
            gen_cyclic(spec).map(|(env, h)| Generated { env, tensor: Some(h) })
        }
        Family::Symmetric => gen_symmetric(spec).map(|env| Generated { env, tensor: None }),
    }
}

/// Symmetric part `s_k(x)`, one field per direction.
fn symmetric_fields(spec: &GeneratorSpec, torus: &Torus) -> Result<Vec<Vec<f64>>> {
    match spec.symmetric {
        SymmetricPart::Constant { s } => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Parameter(format!("symmetric rate s = {s} must be positive")));
            }
            Ok(vec![vec![s; torus.len()]; torus.num_directions()])
        }
        SymmetricPart::Conductance { min, max } => {
            if !(min > 0.0 && max >= min && max.is_finite()) {
                return Err(Error::Parameter(format!(
                    "conductance range [{min}, {max}] must satisfy 0 < min <= max"
                )));
            }
            let mut s = vec![vec![0.0; torus.len()]; torus.num_directions()];
            for i in 0..torus.dim() {
                let plus = Direction::new(i, true);
                let c: Vec<f64> = (0..torus.len())
                    .map(|x| {
                        let u = counter_f64(spec.seed, tag::CONDUCTANCE, x as u64, i as u64);
                        (quantize(min + (max - min) * u)).max(min)
                    })
                    .collect();
                s[plus.opposite().index()] = torus.shifted(&c, plus.opposite());
                s[plus.index()] = c;
            }
            Ok(s)
        }
    }
}

fn assemble(
    spec: &GeneratorSpec,
    torus: Torus,
    v: &[Vec<f64>],
    s: Vec<Vec<f64>>,
) -> Result<Environment> {
    let rates: Vec<Vec<f64>> = s
        .into_iter()
        .zip(v)
        .map(|(s, v)| s.iter().zip(v).map(|(a, b)| a + b).collect())
        .collect();
    if let Some(p) = rates.iter().flatten().find(|p| **p < 0.0) {
        return Err(Error::Parameter(format!(
            "negative rate {p}: antisymmetric part exceeds the symmetric part"
        )));
    }
    let env = Environment::with_realized_ceiling(torus, rates, spec.symmetric.floor())?;
    Ok(env.with_provenance(Provenance {
        generator: spec.tag().to_string(),
        seed: spec.seed,
        spec: serde_json::to_value(spec)?,
    }))
}

/// Plaquette amplitudes before any rescaling.
pub fn raw_plaquettes(spec: &GeneratorSpec) -> Result<Vec<Vec<f64>>> {
    let Family::StreamTensor {
        amplitude,
        tail_exponent,
        ..
    } = spec.family
    else {
        return Err(Error::Parameter("not a stream_tensor spec".into()));
    };
    if let Some(alpha) = tail_exponent {
        if !(alpha > 0.0) {
            return Err(Error::Parameter(format!("tail exponent {alpha} must be positive")));
        }
    }
    let torus = Torus::new(spec.d, spec.side)?;
    Ok((0..num_pairs(spec.d))
        .map(|q| {
            (0..torus.len())
                .map(|y| {
                    let (site, ch) = (y as u64, 2 * q as u64);
                    let x = match tail_exponent {
                        None => 2.0 * counter_f64(spec.seed, tag::STREAM, site, ch) - 1.0,
                        Some(alpha) => {
                            let u = counter_f64_open(spec.seed, tag::STREAM, site, ch);
                            let sign = if counter_f64(spec.seed, tag::STREAM, site, ch + 1) < 0.5 {
                                -1.0
                            } else {
                                1.0
                            };
                            sign * u.powf(-1.0 / alpha)
                        }
                    };
                    amplitude * x
                })
                .collect()
        })
        .collect())
}

/// Rescale a tensor so its curl satisfies `max |v| <= clip * s_*`, then
/// truncate to the dyadic grid.
fn clipped(mut h: StreamTensor, clip: f64, floor: f64) -> StreamTensor {
    let cap = clip * floor;
    let top = h.curl().iter().map(|v| max_abs(v)).fold(0.0, f64::max);
    if top > cap {
        h.scale(cap / top);
    }
    let torus = h.torus().clone();
    let plaquettes = h
        .plaquettes()
        .iter()
        .map(|p| p.iter().map(|&x| quantize(x)).collect())
        .collect();
    StreamTensor::from_plaquettes(torus, plaquettes).expect("same shape")
}

fn check_clip(clip: f64) -> Result<()> {
    if !(clip > 0.0 && clip < 1.0) {
        return Err(Error::Parameter(format!(
            "clip {clip} must lie in (0, 1) to keep rates above zero"
        )));
    }
    Ok(())
}

pub fn gen_stream_tensor(spec: &GeneratorSpec) -> Result<(Environment, StreamTensor)> {
    let Family::StreamTensor { clip, .. } = spec.family else {
        return Err(Error::Parameter("not a stream_tensor spec".into()));
    };
    check_clip(clip)?;
    let torus = Torus::new(spec.d, spec.side)?;
    let s = symmetric_fields(spec, &torus)?;
    let h = StreamTensor::from_plaquettes(torus.clone(), raw_plaquettes(spec)?)?;
    let h = clipped(h, clip, spec.symmetric.floor());
    let env = assemble(spec, torus, &h.curl(), s)?;
    Ok((env, h))
}

/// Coin field `u_i` for axis `i`, indexed by the site with coordinate `i`
/// set to zero.
fn manhattan_coins(
    torus: &Torus,
    axis: usize,
    seed: u64,
    correlation_length: usize,
    pattern: CoinPattern,
) -> Vec<f64> {
    let lines: Vec<usize> = (0..torus.len()).filter(|&x| torus.coord(x, axis) == 0).collect();
    let mut coins = vec![0.0; torus.len()];
    match pattern {
        CoinPattern::Alternating => {
            let first = if axis == 0 { 1 } else { 0 };
            for &x in &lines {
                coins[x] = if torus.coord(x, first) % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        CoinPattern::Random => {
            let noise: Vec<f64> = (0..torus.len())
                .map(|x| counter_f64(seed, tag::MANHATTAN, x as u64, axis as u64))
                .collect();
            // Box-smooth the scores over the transverse coordinates.
            let mut score = vec![0.0; torus.len()];
            for &x in &lines {
                let mut acc = 0.0;
                let mut offsets = vec![0i64; torus.dim()];
                let base: Vec<i64> = torus.coords(x).into_iter().map(|c| c as i64).collect();
                let w = correlation_length.max(1) as i64;
                let transverse: Vec<usize> = (0..torus.dim()).filter(|&a| a != axis).collect();
                let count = (w as usize).pow(transverse.len() as u32);
                for mut c in 0..count {
                    for &a in &transverse {
                        offsets[a] = (c % w as usize) as i64;
                        c /= w as usize;
                    }
                    let y: Vec<i64> = base.iter().zip(&offsets).map(|(b, o)| b + o).collect();
                    acc += noise[torus.index_of(&y)];
                }
                score[x] = acc;
            }
            let mut order = lines.clone();
            order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
            let half = order.len() / 2;
            for (rank, &x) in order.iter().enumerate() {
                coins[x] = if rank < half { -1.0 } else { 1.0 };
            }
        }
    }
    coins
}

pub fn gen_manhattan(spec: &GeneratorSpec) -> Result<Environment> {
    let Family::Manhattan {
        correlation_length,
        pattern,
    } = spec.family
    else {
        return Err(Error::Parameter("not a manhattan spec".into()));
    };
    if spec.side % 2 != 0 {
        return Err(Error::Parameter(format!(
            "side {} is odd; balanced line orientations need an even side",
            spec.side
        )));
    }
    if spec.symmetric.floor() < 1.0 {
        return Err(Error::Parameter(
            "manhattan flows have unit strength; the symmetric part must be >= 1".into(),
        ));
    }
    let torus = Torus::new(spec.d, spec.side)?;
    let s = symmetric_fields(spec, &torus)?;
    let mut v = vec![vec![0.0; torus.len()]; torus.num_directions()];
    for i in 0..torus.dim() {
        let coins = manhattan_coins(&torus, i, spec.seed, correlation_length, pattern);
        let stride = torus.stride(i);
        let plus = Direction::new(i, true);
        for x in 0..torus.len() {
            let line = x - torus.coord(x, i) * stride;
            v[plus.index()][x] = coins[line];
            v[plus.opposite().index()][x] = -coins[line];
        }
    }
    assemble(spec, torus, &v, s)
}

/// Adds a rectangular loop to the plaquette field: the loop with lower-left
/// corner `corner`, sides `len_a` along `a` and `len_b` along `b` (`a < b`),
/// circulating with strength `w` (positive = from `e_a` towards `e_b`).
pub fn add_loop(
    h: &mut StreamTensor,
    corner: usize,
    a: usize,
    b: usize,
    len_a: usize,
    len_b: usize,
    w: f64,
) {
    let t = h.torus().clone();
    let (ea, eb) = (Direction::new(a, true), Direction::new(b, true));
    let field = h.plaquette_mut(a, b);
    let mut row = corner;
    for _ in 0..len_b {
        let mut y = row;
        for _ in 0..len_a {
            field[y] += w;
            y = t.neighbour(y, ea);
        }
        row = t.neighbour(row, eb);
    }
}

pub fn gen_cyclic(spec: &GeneratorSpec) -> Result<(Environment, StreamTensor)> {
    let Family::Cyclic {
        density,
        max_len,
        weight,
        clip,
    } = spec.family
    else {
        return Err(Error::Parameter("not a cyclic spec".into()));
    };
    check_clip(clip)?;
    if !(density >= 0.0 && density.is_finite()) {
        return Err(Error::Parameter(format!("cycle density {density} must be >= 0")));
    }
    if max_len == 0 || 2 * max_len > spec.side {
        return Err(Error::Parameter(format!(
            "max cycle length {max_len} must lie in 1..=L/2"
        )));
    }
    let torus = Torus::new(spec.d, spec.side)?;
    let s = symmetric_fields(spec, &torus)?;
    let count = (density * torus.len() as f64).round() as u64;
    let pairs: Vec<(usize, usize)> = (0..spec.d)
        .flat_map(|a| (a + 1..spec.d).map(move |b| (a, b)))
        .collect();
    let mut h = StreamTensor::zeros(torus.clone());
    for j in 0..count {
        let u = |ch: u64| counter_f64(spec.seed, tag::CYCLIC, j, ch);
        let (a, b) = pairs[(u(0) * pairs.len() as f64) as usize];
        let corner = (u(1) * torus.len() as f64) as usize;
        let len_a = 1 + (u(2) * max_len as f64) as usize;
        let len_b = 1 + (u(3) * max_len as f64) as usize;
        let orient = if u(4) < 0.5 { -1.0 } else { 1.0 };
        let w = weight * orient * counter_f64_open(spec.seed, tag::CYCLIC, j, 5);
        add_loop(&mut h, corner, a, b, len_a, len_b, w);
    }
    debug_assert_eq!(pair_index(spec.d, 0, 1), 0);
    let h = clipped(h, clip, spec.symmetric.floor());
    let env = assemble(spec, torus, &h.curl(), s)?;
    Ok((env, h))
}

pub fn gen_symmetric(spec: &GeneratorSpec) -> Result<Environment> {
    let torus = Torus::new(spec.d, spec.side)?;
    let s = symmetric_fields(spec, &torus)?;
    let zero = vec![vec![0.0; torus.len()]; torus.num_directions()];
    assemble(spec, torus, &zero, s)
}

//! Periodic bistochastic environments and their rate decomposition.
//!
//! The probability space is the orbit of one periodic configuration under the
//! `L^d` lattice shifts, with uniform weight; every environment average is a
//! spatial average over the torus.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{mean, Direction, Torus};

/// Provenance carried in file headers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    #[serde(default)]
    pub spec: serde_json::Value,
}

/// Jump-rate fields `p_k(x)` on a torus, one contiguous array per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    torus: Torus,
    rates: Vec<Vec<f64>>,
    s_star: f64,
    s_upper: f64,
    pub provenance: Provenance,
}

impl Environment {
    /// Structural construction only; numerical properties are checked by
    /// [`validate`].
    pub fn new(torus: Torus, rates: Vec<Vec<f64>>, s_star: f64, s_upper: f64) -> Result<Self> {
        if !torus.side().is_power_of_two() || torus.side() < 8 {
            return Err(Error::Structure(format!(
                "side {} is not a power of two >= 8",
                torus.side()
            )));
        }
        if rates.len() != torus.num_directions() {
            return Err(Error::Structure(format!(
                "expected {} rate fields, got {}",
                torus.num_directions(),
                rates.len()
            )));
        }
        for (k, field) in rates.iter().enumerate() {
            if field.len() != torus.len() {
                return Err(Error::Structure(format!(
                    "rate field {k} has {} entries, torus has {} sites",
                    field.len(),
                    torus.len()
                )));
            }
            if let Some(x) = field.iter().position(|p| !p.is_finite()) {
                return Err(Error::Structure(format!(
                    "rate field {k} is not finite at site {x}"
                )));
            }
        }
        if !(s_star > 0.0 && s_star.is_finite()) {
            return Err(Error::Parameter(format!("s_star = {s_star} must be positive")));
        }
        if !(s_upper >= s_star && s_upper.is_finite()) {
            return Err(Error::Parameter(format!(
                "s_upper = {s_upper} must be finite and >= s_star = {s_star}"
            )));
        }
        Ok(Environment {
            torus,
            rates,
            s_star,
            s_upper,
            provenance: Provenance::default(),
        })
    }

    /// As [`Environment::new`] with `s_upper` set to the largest rate present.
    pub fn with_realized_ceiling(torus: Torus, rates: Vec<Vec<f64>>, s_star: f64) -> Result<Self> {
        let top = rates
            .iter()
            .flatten()
            .fold(s_star, |m, &p| if p > m { p } else { m });
        Self::new(torus, rates, s_star, top)
    }

    /// Every rate equal to `s`.
    pub fn constant(dim: usize, side: usize, s: f64) -> Result<Self> {
        let torus = Torus::new(dim, side)?;
        let rates = vec![vec![s; torus.len()]; torus.num_directions()];
        let mut env = Self::new(torus, rates, s, s)?;
        env.provenance.generator = "constant".into();
        Ok(env)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    #[inline]
    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.torus.side()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.torus.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.torus.is_empty()
    }

    #[inline]
    pub fn s_star(&self) -> f64 {
        self.s_star
    }

    #[inline]
    pub fn s_upper(&self) -> f64 {
        self.s_upper
    }

    #[inline]
    pub fn rate(&self, x: usize, k: Direction) -> f64 {
        self.rates[k.index()][x]
    }

    pub fn rate_field(&self, k: Direction) -> &[f64] {
        &self.rates[k.index()]
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// Total jump rate `p(x) = Σ_k p_k(x)`.
    pub fn total_rate(&self) -> Vec<f64> {
        (0..self.len())
            .map(|x| self.rates.iter().map(|f| f[x]).sum())
            .collect()
    }

    /// The same environment seen from `offset`: `p_k(x + offset)`.
    pub fn translated(&self, offset: usize) -> Environment {
        let rates = self
            .rates
            .iter()
            .map(|f| self.torus.translated(f, offset))
            .collect();
        Environment {
            torus: self.torus.clone(),
            rates,
            s_star: self.s_star,
            s_upper: self.s_upper,
            provenance: self.provenance.clone(),
        }
    }

    /// Multiply every rate (and both bounds) by `factor`. The walk in the
    /// result is the original walk run at speed `factor`; `factor = 1/s_star`
    /// normalizes the ellipticity floor to 1.
    pub fn time_rescaled(&self, factor: f64) -> Result<Environment> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Parameter(format!("rescale factor {factor}")));
        }
        let rates = self
            .rates
            .iter()
            .map(|f| f.iter().map(|p| p * factor).collect())
            .collect();
        let mut env = Environment::new(
            self.torus.clone(),
            rates,
            self.s_star * factor,
            self.s_upper * factor,
        )?;
        env.provenance = self.provenance.clone();
        Ok(env)
    }
}

/// Antisymmetric and symmetric parts of the rates plus the two drift fields.
#[derive(Debug, Clone)]
pub struct RateDecomposition {
    pub torus: Torus,
    /// `v_k(x) = (p_k(x) - p_{-k}(x+k)) / 2`
    pub v: Vec<Vec<f64>>,
    /// `s_k(x) = (p_k(x) + p_{-k}(x+k)) / 2`
    pub s: Vec<Vec<f64>>,
    /// `φ(x) = Σ_k k v_k(x)`, one field per coordinate.
    pub phi: Vec<Vec<f64>>,
    /// `ψ(x) = Σ_k k s_k(x)`, one field per coordinate.
    pub psi: Vec<Vec<f64>>,
    pub s_star: f64,
    pub s_upper: f64,
}

impl RateDecomposition {
    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    pub fn len(&self) -> usize {
        self.torus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.torus.is_empty()
    }

    /// `p_k = s_k + v_k`.
    pub fn recombine(&self) -> Vec<Vec<f64>> {
        self.v
            .iter()
            .zip(&self.s)
            .map(|(v, s)| v.iter().zip(s).map(|(a, b)| a + b).collect())
            .collect()
    }

    /// `φ + ψ` per coordinate: the quenched local drift.
    pub fn total_drift(&self) -> Vec<Vec<f64>> {
        self.phi
            .iter()
            .zip(&self.psi)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect()
    }

    /// `v · φ` for a direction vector `v`.
    pub fn project_phi(&self, dir: &[f64]) -> Vec<f64> {
        project(&self.phi, dir)
    }

    pub fn project_psi(&self, dir: &[f64]) -> Vec<f64> {
        project(&self.psi, dir)
    }
}

pub(crate) fn project(fields: &[Vec<f64>], dir: &[f64]) -> Vec<f64> {
    let n = fields[0].len();
    (0..n)
        .map(|x| fields.iter().zip(dir).map(|(f, c)| c * f[x]).sum())
        .collect()
}

pub fn decompose(env: &Environment) -> RateDecomposition {
    let t = env.torus();
    let n = t.len();
    let mut v = Vec::with_capacity(t.num_directions());
    let mut s = Vec::with_capacity(t.num_directions());
    for k in t.directions() {
        let back = t.shifted(env.rate_field(k.opposite()), k);
        let pk = env.rate_field(k);
        v.push(pk.iter().zip(&back).map(|(a, b)| (a - b) / 2.0).collect::<Vec<f64>>());
        s.push(pk.iter().zip(&back).map(|(a, b)| (a + b) / 2.0).collect::<Vec<f64>>());
    }
    let axis_sum = |fields: &Vec<Vec<f64>>, i: usize| -> Vec<f64> {
        let plus = &fields[Direction::new(i, true).index()];
        let minus = &fields[Direction::new(i, false).index()];
        (0..n).map(|x| plus[x] - minus[x]).collect()
    };
    let phi = (0..t.dim()).map(|i| axis_sum(&v, i)).collect();
    let psi = (0..t.dim()).map(|i| axis_sum(&s, i)).collect();
    RateDecomposition {
        torus: t.clone(),
        v,
        s,
        phi,
        psi,
        s_star: env.s_star(),
        s_upper: env.s_upper(),
    }
}

/// One numerical check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Worst absolute violation, always `>= 0`.
    pub residual: f64,
    pub tolerance: f64,
    /// Site where the worst violation occurs.
    pub site: Option<usize>,
}

impl Check {
    pub fn new(name: &str, residual: f64, tolerance: f64, site: Option<usize>) -> Self {
        Check {
            name: name.to_string(),
            pass: residual <= tolerance,
            residual,
            tolerance,
            site,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn worst(values: impl Iterator<Item = (usize, f64)>) -> (f64, Option<usize>) {
    values.fold((0.0, None), |(m, at), (x, r)| if r > m { (r, Some(x)) } else { (m, at) })
}

/// True when every rate is an integer multiple of `2^-24` below `2^24`, so
/// short sums of rates are exact in double precision.
fn dyadic(env: &Environment) -> bool {
    const SCALE: f64 = (1u64 << 24) as f64;
    env.rates()
        .iter()
        .flatten()
        .all(|p| (p * SCALE).fract() == 0.0 && p.abs() < SCALE)
}

pub fn validate(env: &Environment) -> ValidationReport {
    let t = env.torus();
    let scale = env.s_upper();
    let rel = 1e-12 * scale;

    let bistoch_tol = if dyadic(env) { 0.0 } else { rel };
    let (r, at) = worst((0..t.len()).map(|x| {
        let out: f64 = t.directions().map(|k| env.rate(x, k)).sum();
        let inflow: f64 = t
            .directions()
            .map(|k| env.rate(t.neighbour(x, k), k.opposite()))
            .sum();
        (x, (out - inflow).abs())
    }));
    let mut checks = vec![Check::new("bistochasticity", r, bistoch_tol, at)];

    let (r, at) = worst((0..t.len()).map(|x| {
        let gap = t
            .directions()
            .map(|k| {
                let s = (env.rate(x, k) + env.rate(t.neighbour(x, k), k.opposite())) / 2.0;
                env.s_star() - s
            })
            .fold(0.0f64, f64::max);
        (x, gap)
    }));
    checks.push(Check::new("ellipticity", r, rel, at));

    let (r, at) = worst((0..t.len()).map(|x| {
        let over = t
            .directions()
            .map(|k| {
                let p = env.rate(x, k);
                (-p).max(p - env.s_upper())
            })
            .fold(0.0f64, f64::max);
        (x, over)
    }));
    checks.push(Check::new("boundedness", r, rel, at));

    let dec = decompose(env);
    let r = dec.v.iter().map(|v| mean(v).abs()).fold(0.0, f64::max);
    checks.push(Check::new("no_drift", r, rel, None));

    ValidationReport { checks }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub mean: Vec<f64>,
    pub is_zero: bool,
}

/// Spatial mean of `φ + ψ`.
pub fn mean_drift(dec: &RateDecomposition) -> DriftReport {
    let mean: Vec<f64> = dec
        .phi
        .iter()
        .zip(&dec.psi)
        .map(|(a, b)| crate::lattice::mean(a) + crate::lattice::mean(b))
        .collect();
    let tol = 1e-12 * dec.s_upper;
    DriftReport {
        is_zero: mean.iter().all(|m| m.abs() <= tol),
        mean,
    }
}

const MAGIC: &[u8; 4] = b"RWRE";
const FORMAT_VERSION: u32 = 1;

/// File header shared by the binary and JSON containers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvHeader {
    pub d: usize,
    #[serde(rename = "L")]
    pub side: usize,
    pub s_star: f64,
    pub s_upper: f64,
    pub generator: String,
    pub seed: u64,
    #[serde(default)]
    pub spec: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct JsonContainer {
    header: EnvHeader,
    rates: Vec<Vec<f64>>,
}

impl Environment {
    pub fn header(&self) -> EnvHeader {
        EnvHeader {
            d: self.dim(),
            side: self.side(),
            s_star: self.s_star,
            s_upper: self.s_upper,
            generator: self.provenance.generator.clone(),
            seed: self.provenance.seed,
            spec: self.provenance.spec.clone(),
        }
    }

    fn from_header(header: EnvHeader, rates: Vec<Vec<f64>>) -> Result<Self> {
        let torus = Torus::new(header.d, header.side)?;
        let env = Environment::new(torus, rates, header.s_star, header.s_upper)?;
        Ok(env.with_provenance(Provenance {
            generator: header.generator,
            seed: header.seed,
            spec: header.spec,
        }))
    }

    /// Binary layout: `RWRE`, u32 version, u32 header length, JSON header,
    /// then the `2d` rate arrays as little-endian f64 in direction order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for field in &self.rates {
            for p in field {
                w.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Structure("not an environment file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::Structure(format!("unsupported format version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut header)?;
        let header: EnvHeader = serde_json::from_slice(&header)?;
        let torus = Torus::new(header.d, header.side)?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let expected = 8 * torus.len() * torus.num_directions();
        if body.len() != expected {
            return Err(Error::Structure(format!(
                "payload has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rates = values.chunks(torus.len()).map(<[f64]>::to_vec).collect();
        Self::from_header(header, rates)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&JsonContainer {
            header: self.header(),
            rates: self.rates.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: JsonContainer = serde_json::from_str(text)?;
        Self::from_header(c.header, c.rates)
    }

    /// Writes JSON when the extension is `.json`, binary otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "json") {
            std::fs::write(path, self.to_json()?)?;
        } else {
            let f = std::io::BufWriter::new(std::fs::File::create(path)?);
            self.write_binary(f)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&std::fs::read_to_string(path)?)
        } else {
            Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rates_pass_with_zero_residual() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let report = validate(&env);
        assert!(report.passed());
        assert!(report.checks.iter().all(|c| c.residual == 0.0));
        let dec = decompose(&env);
        assert!(dec.v.iter().flatten().all(|&v| v == 0.0));
        assert!(dec.s.iter().flatten().all(|&s| s == 1.0));
        assert!(dec.phi.iter().chain(&dec.psi).flatten().all(|&f| f == 0.0));
        assert_eq!(mean_drift(&dec).mean, vec![0.0, 0.0]);
    }

    #[test]
    fn single_site_perturbation_is_located() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let mut rates = env.rates().to_vec();
        rates[0][10] += 0.1;
        let env = Environment::new(env.torus().clone(), rates, 1.0, 1.1).unwrap();
        let c = validate(&env).get("bistochasticity").cloned().unwrap();
        assert!(!c.pass);
        assert!((c.residual - 0.1).abs() < 1e-15);
        // Site 10 has excess outflow and site 11 excess inflow, both by 0.1.
        assert!(c.site == Some(10) || c.site == Some(11));
    }

    #[test]
    fn substitution_example() {
        // p_{e1}(x) = 1 + a(x), p_{-e1}(x) = 1 - a(x - e1)
        let torus = Torus::new(2, 8).unwrap();
        let a: Vec<f64> = (0..64).map(|x| 0.01 * ((x * 7 % 11) as f64 - 5.0)).collect();
        let mut rates = vec![vec![1.0; 64]; 4];
        let e1m = Direction::new(0, false);
        rates[0] = a.iter().map(|v| 1.0 + v).collect();
        rates[1] = (0..64).map(|x| 1.0 - a[torus.neighbour(x, e1m)]).collect();
        let env = Environment::with_realized_ceiling(torus, rates, 0.9).unwrap();
        let dec = decompose(&env);
        for x in 0..64 {
            assert!((dec.v[0][x] - a[x]).abs() < 1e-15);
            assert!((dec.s[0][x] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn offset_flow_reports_mean_drift() {
        // A constant flow around every row: p_{e1} = 1 + c, p_{-e1} = 1 - c.
        let c = 0.25;
        let torus = Torus::new(2, 8).unwrap();
        let mut rates = vec![vec![1.0; 64]; 4];
        rates[0] = vec![1.0 + c; 64];
        rates[1] = vec![1.0 - c; 64];
        let env = Environment::with_realized_ceiling(torus, rates, 0.5).unwrap();
        let report = validate(&env);
        assert!(report.get("bistochasticity").unwrap().pass);
        assert!(!report.get("no_drift").unwrap().pass);
        let drift = mean_drift(&decompose(&env));
        assert!(!drift.is_zero);
        assert_eq!(drift.mean, vec![2.0 * c, 0.0]);
    }

    #[test]
    fn loaders_reject_truncated_payload() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let mut buf = Vec::new();
        env.write_binary(&mut buf).unwrap();
        let back = Environment::read_binary(&buf[..]).unwrap();
        assert_eq!(back, env);
        buf.truncate(buf.len() - 8);
        assert!(matches!(
            Environment::read_binary(&buf[..]),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn field_size_mismatch_is_structural() {
        let torus = Torus::new(2, 8).unwrap();
        let rates = vec![vec![1.0; 64], vec![1.0; 64], vec![1.0; 63], vec![1.0; 64]];
        assert!(matches!(
            Environment::new(torus, rates, 1.0, 1.0),
            Err(Error::Structure(_))
        ));
    }
}

//! Path simulation: the continuous-time walk by uniformization, the lazy
//! discrete-time walk, martingale and forward-backward decompositions, the
//! auxiliary walk and the random-scenery integral.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, RateDecomposition};
use crate::error::{Error, Result};
use crate::lattice::{Direction, Torus};
use crate::rng::path_rng;

/// A continuous-time path: jump epochs and directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: usize,
    /// `θ_1 < θ_2 < ...`, all below `horizon`.
    pub times: Vec<f64>,
    /// Direction index of each jump.
    pub steps: Vec<u8>,
    pub horizon: f64,
    pub seed: u64,
    pub index: u64,
}

impl Trajectory {
    pub fn steps(&self) -> impl Iterator<Item = Direction> + '_ {
        self.steps.iter().map(|&k| Direction(k as usize))
    }

    /// Torus sites `η(θ_0), η(θ_1), ...`.
    pub fn sites(&self, torus: &Torus) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut x = self.start;
        out.push(x);
        for k in self.steps() {
            x = torus.neighbour(x, k);
            out.push(x);
        }
        out
    }

    /// Unwrapped displacement `X(θ_n) - X(0)` at every jump epoch.
    pub fn displacements(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut x = vec![0.0; dim];
        out.push(x.clone());
        for k in self.steps() {
            x[k.axis()] += k.sign();
            out.push(x.clone());
        }
        out
    }

    pub fn endpoint(&self, dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for k in self.steps() {
            x[k.axis()] += k.sign();
        }
        x
    }
}

/// A maximal holding interval `[t0, t1)` at `site`, closed by a jump in
/// direction `jump`, or by the horizon when `jump` is `None`.
#[derive(Debug, Clone, Copy)]
pub struct Holding {
    pub site: usize,
    pub t0: f64,
    pub t1: f64,
    pub jump: Option<Direction>,
}

/// Per-site cumulative rate tables for fast jump selection.
#[derive(Debug, Clone)]
pub struct JumpTable {
    dirs: usize,
    /// `cum[x * 2d + k] = Σ_{j <= k} p_j(x)`.
    cum: Vec<f64>,
    /// Uniformization rate `Λ = 2d s*`.
    pub clock: f64,
}

impl JumpTable {
    pub fn new(env: &Environment) -> Self {
        let dirs = env.torus().num_directions();
        let mut cum = Vec::with_capacity(dirs * env.len());
        for x in 0..env.len() {
            let mut acc = 0.0;
            for k in 0..dirs {
                acc += env.rates()[k][x];
                cum.push(acc);
            }
        }
        JumpTable {
            dirs,
            cum,
            clock: dirs as f64 * env.s_upper(),
        }
    }

    /// Direction selected by `u ∈ [0, Λ)`, or `None` for a self-loop.
    #[inline]
    pub fn select(&self, x: usize, u: f64) -> Option<Direction> {
        let row = &self.cum[x * self.dirs..(x + 1) * self.dirs];
        row.iter().position(|&c| u < c).map(Direction)
    }

    #[inline]
    pub fn total(&self, x: usize) -> f64 {
        self.cum[(x + 1) * self.dirs - 1]
    }
}

/// Run one path of the continuous-time walk up to `horizon`, reporting every
/// holding interval in order. A global Poisson clock of rate `Λ = 2d s*`
/// proposes moves; direction `k` is accepted with probability `p_k(x)/Λ`.
pub fn run_ct<R: Rng + ?Sized>(
    torus: &Torus,
    table: &JumpTable,
    start: usize,
    horizon: f64,
    rng: &mut R,
    mut visit: impl FnMut(Holding),
) {
    let mut t = 0.0;
    let mut t0 = 0.0;
    let mut x = start;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / table.clock;
        if t >= horizon {
            visit(Holding {
                site: x,
                t0,
                t1: horizon,
                jump: None,
            });
            return;
        }
        let u = rng.random::<f64>() * table.clock;
        if let Some(k) = table.select(x, u) {
            visit(Holding {
                site: x,
                t0,
                t1: t,
                jump: Some(k),
            });
            x = torus.neighbour(x, k);
            t0 = t;
        }
    }
}

/// Quenched path from `start` with its own stream `(seed, index)`.
pub fn simulate_ct(env: &Environment, start: usize, horizon: f64, seed: u64, index: u64) -> Result<Trajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon {horizon} must be positive")));
    }
    if start >= env.len() {
        return Err(Error::Parameter(format!("start site {start} outside the torus")));
    }
    let table = JumpTable::new(env);
    let mut rng = path_rng(seed, index);
    let mut traj = Trajectory {
        start,
        times: Vec::new(),
        steps: Vec::new(),
        horizon,
        seed,
        index,
    };
    run_ct(env.torus(), &table, start, horizon, &mut rng, |h| {
        if let Some(k) = h.jump {
            traj.times.push(h.t1);
            traj.steps.push(k.index() as u8);
        }
    });
    Ok(traj)
}

/// Discrete-time lazy path: from `x` move to `x + k` with probability
/// `p_k(x) / (2d s*)`, stay otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LazyTrajectory {
    pub sites: Vec<usize>,
    pub displacement: Vec<f64>,
}

pub fn simulate_lazy(env: &Environment, start: usize, n_steps: usize, seed: u64, index: u64) -> LazyTrajectory {
    let table = JumpTable::new(env);
    let mut rng = path_rng(seed, index);
    let t = env.torus();
    let mut sites = Vec::with_capacity(n_steps + 1);
    let mut displacement = vec![0.0; t.dim()];
    let mut x = start;
    sites.push(x);
    for _ in 0..n_steps {
        let u = rng.random::<f64>() * table.clock;
        if let Some(k) = table.select(x, u) {
            x = t.neighbour(x, k);
            displacement[k.axis()] += k.sign();
        }
        sites.push(x);
    }
    LazyTrajectory { sites, displacement }
}

/// Pointwise fields of the forward-backward decomposition:
/// `u_k = sgn(v_k) min(|v_k|, s_*)`, `w_k = v_k - u_k`, `q_k = s_* + u_k`,
/// `r_k = (s_k - s_*) + w_k`, and the drifts `φ̃ = Σ_k k u_k`, `ψ̃ = Σ_k k r_k`.
#[derive(Debug, Clone)]
pub struct KljFields {
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub phi_tilde: Vec<Vec<f64>>,
    pub psi_tilde: Vec<Vec<f64>>,
}

pub fn klj_fields(dec: &RateDecomposition) -> KljFields {
    let s_star = dec.s_star;
    let u: Vec<Vec<f64>> = dec
        .v
        .iter()
        .map(|v| v.iter().map(|&x| x.signum() * x.abs().min(s_star)).collect())
        .collect();
    let w: Vec<Vec<f64>> = dec
        .v
        .iter()
        .zip(&u)
        .map(|(v, u)| v.iter().zip(u).map(|(a, b)| a - b).collect())
        .collect();
    let q: Vec<Vec<f64>> = u.iter().map(|u| u.iter().map(|x| s_star + x).collect()).collect();
    let r: Vec<Vec<f64>> = dec
        .s
        .iter()
        .zip(&w)
        .map(|(s, w)| s.iter().zip(w).map(|(a, b)| (a - s_star) + b).collect())
        .collect();
    let axis_sum = |f: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..dec.dim())
            .map(|i| {
                let (p, m) = (Direction::new(i, true).index(), Direction::new(i, false).index());
                f[p].iter().zip(&f[m]).map(|(a, b)| a - b).collect()
            })
            .collect()
    };
    KljFields {
        phi_tilde: axis_sum(&u),
        psi_tilde: axis_sum(&r),
        u,
        w,
        q,
        r,
    }
}

/// Decomposition tracks sampled at `0, θ_1, ..., θ_n, T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionTracks {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// `M = X - I`.
    pub m: Vec<Vec<f64>>,
    /// `I(t) = ∫_0^t (φ + ψ)(η(s)) ds`.
    pub i: Vec<Vec<f64>>,
    pub klj: Option<KljTracks>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KljTracks {
    pub k: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    /// One coin per holding interval; the last one covers the interval cut
    /// by the horizon.
    pub alpha: Vec<bool>,
}

impl DecompositionTracks {
    /// Largest `|M + I - X|` and, when present, `|K + L + J - X|`.
    pub fn reconstruction_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (n, x) in self.x.iter().enumerate() {
            for a in 0..x.len() {
                worst = worst.max((self.m[n][a] + self.i[n][a] - x[a]).abs());
                if let Some(klj) = &self.klj {
                    worst = worst.max((klj.k[n][a] + klj.l[n][a] + klj.j[n][a] - x[a]).abs());
                }
            }
        }
        worst
    }
}

fn check_match(traj: &Trajectory, dec: &RateDecomposition) -> Result<()> {
    if traj.start >= dec.len() || traj.steps.iter().any(|&k| k as usize >= dec.torus.num_directions()) {
        return Err(Error::Structure("trajectory does not belong to this torus".into()));
    }
    Ok(())
}

fn epochs(traj: &Trajectory) -> Vec<f64> {
    let mut t = Vec::with_capacity(traj.times.len() + 2);
    t.push(0.0);
    t.extend_from_slice(&traj.times);
    t.push(traj.horizon);
    t
}

/// `M` and `I` along a recorded path.
pub fn decompose_mi(traj: &Trajectory, dec: &RateDecomposition) -> Result<DecompositionTracks> {
    check_match(traj, dec)?;
    let d = dec.dim();
    let drift = dec.total_drift();
    let sites = traj.sites(&dec.torus);
    let mut x = traj.displacements(d);
    x.push(x.last().unwrap().clone());
    let times = epochs(traj);
    let mut i = vec![vec![0.0; d]];
    for n in 0..times.len() - 1 {
        let dt = times[n + 1] - times[n];
        let prev = i[n].clone();
        i.push((0..d).map(|a| prev[a] + drift[a][sites[n]] * dt).collect());
    }
    let m = x
        .iter()
        .zip(&i)
        .map(|(x, i)| x.iter().zip(i).map(|(a, b)| a - b).collect())
        .collect();
    Ok(DecompositionTracks {
        times,
        x,
        m,
        i,
        klj: None,
    })
}

/// Coin for a holding interval closed by a jump in `jump`: `α = 1` with
/// probability `q_k(x) / p_k(x)`. Its marginal over the jump direction is
/// `q(x) / p(x)`. The interval cut by the horizon uses the marginal.
#[inline]
fn draw_coin<R: Rng + ?Sized>(rng: &mut R, fields: &KljFields, p: &[Vec<f64>], x: usize, jump: Option<Direction>) -> bool {
    let u: f64 = rng.random();
    match jump {
        Some(k) => u * p[k.index()][x] < fields.q[k.index()][x],
        None => {
            let q: f64 = fields.q.iter().map(|f| f[x]).sum();
            let tot: f64 = p.iter().map(|f| f[x]).sum();
            u * tot < q
        }
    }
}

/// `M, I` and `K, L, J` along a recorded path; coins come from the stream
/// `(seed2, traj.index)`, independent of the path stream.
pub fn decompose_klj(traj: &Trajectory, dec: &RateDecomposition, seed2: u64) -> Result<DecompositionTracks> {
    let mut tracks = decompose_mi(traj, dec)?;
    let d = dec.dim();
    let fields = klj_fields(dec);
    let p = dec.recombine();
    let sites = traj.sites(&dec.torus);
    if let Some(&x) = sites.iter().find(|&&x| p.iter().map(|f| f[x]).sum::<f64>() <= 0.0) {
        return Err(Error::Internal(format!("zero total rate at visited site {x}")));
    }
    let mut coins = path_rng(seed2, traj.index);
    let steps: Vec<Direction> = traj.steps().collect();
    let times = &tracks.times;
    let mut k = vec![vec![0.0; d]];
    let mut l = vec![vec![0.0; d]];
    let mut j = vec![vec![0.0; d]];
    let mut alpha = Vec::with_capacity(times.len() - 1);
    for n in 0..times.len() - 1 {
        let x = sites[n];
        let dt = times[n + 1] - times[n];
        let jump = steps.get(n).copied();
        let a = draw_coin(&mut coins, &fields, &p, x, jump);
        alpha.push(a);
        let (mut kn, mut ln, mut jn) = (k[n].clone(), l[n].clone(), j[n].clone());
        for c in 0..d {
            kn[c] -= fields.phi_tilde[c][x] * dt;
            ln[c] -= fields.psi_tilde[c][x] * dt;
            jn[c] += (fields.phi_tilde[c][x] + fields.psi_tilde[c][x]) * dt;
        }
        if let Some(step) = jump {
            let target = if a { &mut kn } else { &mut ln };
            target[step.axis()] += step.sign();
        }
        k.push(kn);
        l.push(ln);
        j.push(jn);
    }
    tracks.klj = Some(KljTracks { k, l, j, alpha });
    Ok(tracks)
}

/// `p^Y_k = s* + v_k`: the same flow over a constant symmetric part.
pub fn auxiliary_env(env: &Environment) -> Result<Environment> {
    let dec = crate::env::decompose(env);
    let s_up = env.s_upper();
    let rates = dec
        .v
        .iter()
        .map(|v| v.iter().map(|x| s_up + x).collect())
        .collect();
    let mut y = Environment::with_realized_ceiling(env.torus().clone(), rates, s_up)?;
    y.provenance = env.provenance.clone();
    y.provenance.generator = format!("auxiliary({})", env.provenance.generator);
    Ok(y)
}

/// How paths choose their starting site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Start {
    /// Uniform over the torus: the stationary (annealed) start.
    Uniform,
    Site(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub paths: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Draw forward-backward coins from this seed when set.
    pub coin_seed: Option<u64>,
    pub start: Start,
    /// Times at which the displacement is also recorded.
    pub checkpoints: Vec<f64>,
}

impl EnsembleOptions {
    pub fn new(paths: usize, horizon: f64, seed: u64) -> Self {
        EnsembleOptions {
            paths,
            horizon,
            seed,
            coin_seed: None,
            start: Start::Uniform,
            checkpoints: Vec::new(),
        }
    }

    pub fn with_coins(mut self, seed: u64) -> Self {
        self.coin_seed = Some(seed);
        self
    }

    pub fn with_checkpoints(mut self, times: Vec<f64>) -> Self {
        self.checkpoints = times;
        self
    }

    pub fn with_start(mut self, start: Start) -> Self {
        self.start = start;
        self
    }
}

/// Endpoint values of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub start: usize,
    pub x: Vec<f64>,
    pub i: Vec<f64>,
    pub k: Option<Vec<f64>>,
    pub l: Option<Vec<f64>>,
    pub j: Option<Vec<f64>>,
    /// `∫_0^T f(η(s)) ds` for each requested scalar field.
    pub integrals: Vec<f64>,
    pub checkpoints: Vec<Vec<f64>>,
    pub jumps: u64,
}

impl PathSummary {
    pub fn m(&self) -> Vec<f64> {
        self.x.iter().zip(&self.i).map(|(a, b)| a - b).collect()
    }
}

/// Simulate independent paths in parallel. Path `n` uses stream
/// `(opts.seed, n)` for its start and moves and `(coin_seed, n)` for coins,
/// so results do not depend on scheduling.
pub fn simulate_ensemble(
    env: &Environment,
    dec: &RateDecomposition,
    opts: &EnsembleOptions,
    fields: &[Vec<f64>],
) -> Result<Vec<PathSummary>> {
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon {} must be positive", opts.horizon)));
    }
    if let Start::Site(x) = opts.start {
        if x >= env.len() {
            return Err(Error::Parameter(format!("start site {x} outside the torus")));
        }
    }
    if fields.iter().any(|f| f.len() != env.len()) {
        return Err(Error::Structure("integrand field size mismatch".into()));
    }
    let torus = env.torus();
    let d = torus.dim();
    let table = JumpTable::new(env);
    let drift = dec.total_drift();
    let klj = opts.coin_seed.map(|_| klj_fields(dec));
    let rates = env.rates();
    let mut checkpoints = opts.checkpoints.clone();
    checkpoints.sort_by(f64::total_cmp);

    let run = |n: usize| -> PathSummary {
        let mut rng = path_rng(opts.seed, n as u64);
        let start = match opts.start {
            Start::Uniform => rng.random_range(0..env.len()),
            Start::Site(x) => x,
        };
        let mut coins = opts.coin_seed.map(|s| path_rng(s, n as u64));
        let mut x = vec![0.0; d];
        let mut i = vec![0.0; d];
        let (mut kk, mut ll, mut jj) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut integrals = vec![0.0; fields.len()];
        let mut marks = Vec::with_capacity(checkpoints.len());
        let mut next_mark = 0;
        let mut jumps = 0u64;
        run_ct(torus, &table, start, opts.horizon, &mut rng, |h| {
            let dt = h.t1 - h.t0;
            while next_mark < checkpoints.len() && checkpoints[next_mark] < h.t1 {
                marks.push(x.clone());
                next_mark += 1;
            }
            for c in 0..d {
                i[c] += drift[c][h.site] * dt;
            }
            for (acc, f) in integrals.iter_mut().zip(fields) {
                *acc += f[h.site] * dt;
            }
            if let (Some(fk), Some(cr)) = (&klj, coins.as_mut()) {
                let a = draw_coin(cr, fk, rates, h.site, h.jump);
                for c in 0..d {
                    kk[c] -= fk.phi_tilde[c][h.site] * dt;
                    ll[c] -= fk.psi_tilde[c][h.site] * dt;
                    jj[c] += (fk.phi_tilde[c][h.site] + fk.psi_tilde[c][h.site]) * dt;
                }
                if let Some(k) = h.jump {
                    let target = if a { &mut kk } else { &mut ll };
                    target[k.axis()] += k.sign();
                }
            }
            if let Some(k) = h.jump {
                x[k.axis()] += k.sign();
                jumps += 1;
            }
        });
        while marks.len() < checkpoints.len() {
            marks.push(x.clone());
        }
        let with_coins = klj.is_some();
        PathSummary {
            start,
            x,
            i,
            k: with_coins.then_some(kk),
            l: with_coins.then_some(ll),
            j: with_coins.then_some(jj),
            integrals,
            checkpoints: marks,
            jumps,
        }
    };
    Ok((0..opts.paths).into_par_iter().map(run).collect())
}

/// The full trajectory of path `index` of [`simulate_ensemble`] under the
/// same options: identical start, jump times and steps.
pub fn ensemble_trajectory(env: &Environment, opts: &EnsembleOptions, index: u64) -> Result<Trajectory> {
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon {} must be positive", opts.horizon)));
    }
    let table = JumpTable::new(env);
    let mut rng = path_rng(opts.seed, index);
    let start = match opts.start {
        Start::Uniform => rng.random_range(0..env.len()),
        Start::Site(x) if x < env.len() => x,
        Start::Site(x) => return Err(Error::Parameter(format!("start site {x} outside the torus"))),
    };
    let mut traj = Trajectory {
        start,
        times: Vec::new(),
        steps: Vec::new(),
        horizon: opts.horizon,
        seed: opts.seed,
        index,
    };
    run_ct(env.torus(), &table, start, opts.horizon, &mut rng, |h| {
        if let Some(k) = h.jump {
            traj.times.push(h.t1);
            traj.steps.push(k.index() as u8);
        }
    });
    Ok(traj)
}

/// `∫_0^T Φ(ω, S(t)) dt` for a simple symmetric walk `S` with rate 1 in each
/// of the `2d` directions (generator `Δ`), started from a uniform offset.
pub fn scenery_integral(dec: &RateDecomposition, horizon: f64, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    crate::spectral::require_no_drift(dec)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon {horizon} must be positive")));
    }
    let torus = &dec.torus;
    let d = torus.dim();
    let dirs = torus.num_directions();
    let clock = dirs as f64;
    let run = |n: usize| -> Vec<f64> {
        let mut rng = path_rng(seed, n as u64);
        let mut x = rng.random_range(0..torus.len());
        let mut acc = vec![0.0; d];
        let mut t = 0.0;
        loop {
            let e: f64 = Exp1.sample(&mut rng);
            let t1 = (t + e / clock).min(horizon);
            for c in 0..d {
                acc[c] += dec.phi[c][x] * (t1 - t);
            }
            if t1 >= horizon {
                return acc;
            }
            t = t1;
            x = torus.neighbour(x, Direction(rng.random_range(0..dirs)));
        }
    };
    Ok((0..n_paths).into_par_iter().map(run).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{decompose, validate};
    use crate::generators::{gen_stream_tensor, GeneratorSpec, SymmetricPart};

    fn stream_env(seed: u64) -> Environment {
        let spec = GeneratorSpec::stream(2, 8, seed, 1.0)
            .with_symmetric(SymmetricPart::Conductance { min: 1.0, max: 1.5 });
        gen_stream_tensor(&spec).unwrap().0
    }

    #[test]
    fn trajectory_times_increase_and_steps_are_units() {
        let env = stream_env(1);
        let traj = simulate_ct(&env, 5, 50.0, 3, 0).unwrap();
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        assert!(traj.times.iter().all(|&t| t > 0.0 && t < 50.0));
        assert!(traj.steps.iter().all(|&k| (k as usize) < 4));
    }

    #[test]
    fn decompositions_reconstruct_the_path() {
        let env = stream_env(2);
        let dec = decompose(&env);
        for idx in 0..5 {
            let traj = simulate_ct(&env, 7, 100.0, 11, idx).unwrap();
            let tr = decompose_klj(&traj, &dec, 99).unwrap();
            assert!(tr.reconstruction_residual() <= 1e-12);
            assert_eq!(tr.klj.as_ref().unwrap().alpha.len(), traj.steps.len() + 1);
        }
    }

    #[test]
    fn ensemble_agrees_with_recorded_paths() {
        let env = stream_env(3);
        let dec = decompose(&env);
        let opts = EnsembleOptions::new(4, 30.0, 21)
            .with_coins(22)
            .with_start(Start::Site(9));
        let fast = simulate_ensemble(&env, &dec, &opts, &[]).unwrap();
        for (n, summary) in fast.iter().enumerate() {
            let traj = simulate_ct(&env, 9, 30.0, 21, n as u64).unwrap();
            let tr = decompose_klj(&traj, &dec, 22).unwrap();
            let last = tr.x.len() - 1;
            assert_eq!(summary.x, tr.x[last]);
            let klj = tr.klj.unwrap();
            for c in 0..2 {
                assert!((summary.i[c] - tr.i[last][c]).abs() < 1e-9);
                assert!((summary.k.as_ref().unwrap()[c] - klj.k[last][c]).abs() < 1e-9);
                assert!((summary.l.as_ref().unwrap()[c] - klj.l[last][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_floor_env_has_trivial_klj() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let dec = decompose(&env);
        let traj = simulate_ct(&env, 0, 40.0, 5, 0).unwrap();
        let tr = decompose_klj(&traj, &dec, 6).unwrap();
        let klj = tr.klj.unwrap();
        assert!(klj.alpha.iter().all(|&a| a));
        assert!(klj.l.iter().flatten().all(|&v| v == 0.0));
        assert!(klj.j.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(klj.k, tr.x);
        assert!(tr.i.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn auxiliary_walk_is_valid() {
        for seed in 0..5 {
            let env = stream_env(seed);
            let y = auxiliary_env(&env).unwrap();
            assert!(validate(&y).passed());
            let dy = decompose(&y);
            let dx = decompose(&env);
            assert_eq!(dy.v, dx.v);
            assert!(dy.s.iter().flatten().all(|&s| s == env.s_upper()));
        }
        let sym = Environment::constant(2, 8, 1.0).unwrap();
        let y = auxiliary_env(&sym).unwrap();
        assert!(y.rates().iter().flatten().all(|&p| p == 1.0));
    }

    #[test]
    fn lazy_stay_probability_matches_rates() {
        // Empirical stay frequency at the start site against 1 - p(x)/(2d s*).
        let env = stream_env(4);
        let x0 = 13;
        let total: f64 = env.torus().directions().map(|k| env.rate(x0, k)).sum();
        let expect = 1.0 - total / (4.0 * env.s_upper());
        let n = 40_000;
        let stays = (0..n)
            .filter(|&i| simulate_lazy(&env, x0, 1, 8, i).sites[1] == x0)
            .count();
        let p = stays as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * se, "{p} vs {expect}");
    }

    #[test]
    fn scenery_of_zero_field_vanishes() {
        let env = Environment::constant(2, 8, 1.0).unwrap();
        let s = scenery_integral(&decompose(&env), 10.0, 16, 1).unwrap();
        assert!(s.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn ensemble_trajectory_matches_summary() {
        let env = stream_env(6);
        let dec = decompose(&env);
        let opts = EnsembleOptions::new(5, 40.0, 17);
        let paths = simulate_ensemble(&env, &dec, &opts, &[]).unwrap();
        for (n, p) in paths.iter().enumerate() {
            let t = ensemble_trajectory(&env, &opts, n as u64).unwrap();
            assert_eq!(t.start, p.start);
            assert_eq!(t.endpoint(2), p.x);
            assert_eq!(t.steps.len() as u64, p.jumps);
        }
    }
}

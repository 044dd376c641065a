//! Matrix-free Krylov solvers.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            tolerance: 1e-10,
            restart: 100,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖`, recomputed from the returned `x`.
    pub residual: f64,
}

/// Restarted GMRES with right preconditioning. `precond` applies an
/// approximation of `A^{-1}`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let m = opts.restart.max(1);
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let true_residual = |x: &[f64]| -> Vec<f64> {
        let ax = apply(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut r = b.to_vec();
    loop {
        let beta = norm(&r);
        if beta <= opts.tolerance * bnorm {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::Stagnation {
                iterations,
                residual: beta / bnorm,
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < opts.max_iterations {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                h[i][k] = hij;
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= hij * qi);
            }
            // One reorthogonalization pass keeps the basis orthogonal when
            // the operator is far from normal.
            for (i, q) in basis.iter().enumerate() {
                let c = dot(&w, q);
                h[i][k] += c;
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            if g[k].abs() <= 0.5 * opts.tolerance * bnorm || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, q) in y.iter().zip(&basis) {
            update.iter_mut().zip(q).for_each(|(u, qi)| *u += yi * qi);
        }
        let dz = precond(&update);
        x.iter_mut().zip(&dz).for_each(|(xi, d)| *xi += d);
        let prev = beta;
        r = true_residual(&x);
        if norm(&r) >= prev * (1.0 - 1e-12) && k < m {
            // Breakdown without progress.
            return Err(Error::Stagnation {
                iterations,
                residual: norm(&r) / bnorm,
            });
        }
    }
    let residual = norm(&r) / bnorm;
    Ok(KrylovOutcome {
        x,
        iterations,
        residual,
    })
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iterations {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        if norm(&r) <= opts.tolerance * bnorm {
            let ax = apply(&x);
            let res: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
            return Ok(KrylovOutcome {
                x,
                iterations: it,
                residual: norm(&res) / bnorm,
            });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::Stagnation {
        iterations: opts.max_iterations,
        residual: norm(&r) / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(x: &[f64], lo: f64, di: f64, up: f64) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut s = di * x[i];
                if i > 0 {
                    s += lo * x[i - 1];
                }
                if i + 1 < n {
                    s += up * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 300;
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let opts = KrylovOptions {
            restart: 20,
            ..Default::default()
        };
        let out = gmres(|x| tridiagonal(x, -1.3, 3.0, -0.6), |x| x.to_vec(), &b, opts).unwrap();
        assert!(out.residual <= 1e-10, "{}", out.residual);
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 200;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let out = conjugate_gradient(
            |x| tridiagonal(x, -1.0, 2.5, -1.0),
            |x| x.iter().map(|v| v / 2.5).collect(),
            &b,
            KrylovOptions::default(),
        )
        .unwrap();
        assert!(out.residual <= 1e-10);
    }
}

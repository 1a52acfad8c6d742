//! Independent reference computations used to validate the analytic solvers
//! on small instances: the deviation matrix by direct series summation, the
//! additive-functional matrix from taboo probabilities, and a Monte-Carlo
//! estimator for additive functionals up to the first return to an anchor.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, LuFactors, DEFAULT_PIVOT_TOL};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Settings for the Monte-Carlo estimator. Estimates are reproducible for a
/// fixed seed: path `p` draws from a ChaCha8 stream seeded with `seed + p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub path_count: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Confidence level in (0, 1) for the reported half-width.
    pub confidence: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            path_count: 10_000,
            max_steps: 1_000_000,
            seed: 0,
            confidence: 0.95,
        }
    }
}

/// Deviation matrix by partial sums of `P^n - e pi^T`.
///
/// Accumulation stops once the current term falls below
/// `tail_tol * (1 - rho)` for the observed per-step contraction `rho`, which
/// bounds the discarded tail by `tail_tol`. Periodic chains never contract
/// and are reported as `NoConvergence`.
pub fn deviation_by_series(
    p: &DenseMatrix,
    pi: &DenseVector,
    tail_tol: f64,
) -> Result<DenseMatrix> {
    let n = p.rows();
    let e_pi = DenseMatrix::outer(&DenseVector::ones(n), pi);
    let mut sum = DenseMatrix::identity(n).sub(&e_pi);
    let mut power = DenseMatrix::identity(n);
    let mut last_norm = f64::INFINITY;
    let max_terms = 200_000;
    for k in 1..=max_terms {
        power = power.matmul(p);
        let term = power.sub(&e_pi);
        let norm = term.infinity_norm();
        let rho = (norm / last_norm).min(0.999_999);
        if norm < tail_tol * (1.0 - rho) {
            return Ok(sum.add(&term));
        }
        sum = sum.add(&term);
        last_norm = norm.max(f64::MIN_POSITIVE);
        if k == max_terms {
            return Err(Error::NoConvergence {
                iterations: k,
                delta: norm,
            });
        }
    }
    unreachable!()
}

/// Taboo statistics of a chain with one state removed: expected visit counts
/// before the first return to `alpha`, and expected return times.
#[derive(Debug, Clone)]
pub struct TabooStats {
    /// `visits[i][j] = E_i[sum_{k=0}^{tau_alpha - 1} 1(Phi_k = j)]`.
    pub visits: DenseMatrix,
    /// `expected_return[i] = E_i[tau_alpha]`.
    pub expected_return: DenseVector,
}

/// Expected visit counts and hitting times for the taboo state `alpha`,
/// from the inverse of `I - P` restricted to the other states.
pub fn taboo_stats(p: &DenseMatrix, alpha: usize) -> Result<TabooStats> {
    let n = p.rows();
    if !p.is_square() {
        return Err(Error::DimensionMismatch(
            "taboo_stats needs a square P".into(),
        ));
    }
    if alpha >= n {
        return Err(Error::InvalidInput(format!(
            "taboo state {alpha} out of range"
        )));
    }
    let others: Vec<usize> = (0..n).filter(|&s| s != alpha).collect();
    let mut visits = DenseMatrix::zeros(n, n);
    let mut expected_return = DenseVector::zeros(n);
    if others.is_empty() {
        visits.set(0, 0, 1.0);
        expected_return[0] = 1.0;
        return Ok(TabooStats {
            visits,
            expected_return,
        });
    }
    let p_sub = p.submatrix(&others, &others);
    let i_minus = DenseMatrix::identity(others.len()).sub(&p_sub);
    let u = LuFactors::factor(&i_minus, DEFAULT_PIVOT_TOL)?
        .solve_matrix(&DenseMatrix::identity(others.len()));

    for (ii, &i) in others.iter().enumerate() {
        for (jj, &j) in others.iter().enumerate() {
            visits.set(i, j, u.get(ii, jj));
        }
        expected_return[i] = u.row(ii).iter().sum();
    }
    // From alpha itself: one step, then an excursion through the taboo set.
    visits.set(alpha, alpha, 1.0);
    let mut from_alpha = 1.0;
    for (ll, &l) in others.iter().enumerate() {
        let w = p.get(alpha, l);
        if w == 0.0 {
            continue;
        }
        for (jj, &j) in others.iter().enumerate() {
            visits.set(alpha, j, visits.get(alpha, j) + w * u.get(ll, jj));
        }
        from_alpha += w * u.row(ll).iter().sum::<f64>();
    }
    expected_return[alpha] = from_alpha;
    Ok(TabooStats {
        visits,
        expected_return,
    })
}

/// Additive-functional matrix `K(i, j) = visits(i, j) - pi(j) E_i[tau_alpha]`
/// computed exactly from taboo probabilities. Row `alpha` is zero.
pub fn k_by_taboo(p: &DenseMatrix, pi: &DenseVector, alpha: usize) -> Result<DenseMatrix> {
    let stats = taboo_stats(p, alpha)?;
    let n = p.rows();
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k.set(
                i,
                j,
                stats.visits.get(i, j) - pi[j] * stats.expected_return[i],
            );
        }
    }
    Ok(k)
}

/// Monte-Carlo estimate of `f_K(start) = E_start[sum_{k=0}^{tau_alpha - 1}
/// (g(Phi_k) - pi^T g)]` with a Student-t confidence half-width.
pub fn simulate_additive(
    p: &DenseMatrix,
    g: &DenseVector,
    alpha: usize,
    start: usize,
    pi: &DenseVector,
    cfg: &SimulationConfig,
) -> Result<(f64, f64)> {
    let n = p.rows();
    if g.len() != n || pi.len() != n || alpha >= n || start >= n {
        return Err(Error::DimensionMismatch(
            "simulate_additive shape mismatch".into(),
        ));
    }
    if cfg.path_count == 0 || !(0.0 < cfg.confidence && cfg.confidence < 1.0) {
        return Err(Error::InvalidInput(
            "need path_count >= 1 and confidence in (0,1)".into(),
        ));
    }
    let mean_g = pi.dot(g);
    // Per-row cumulative sums for inverse-CDF sampling.
    let cumulative: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut acc = 0.0;
            p.row(r)
                .iter()
                .map(|&x| {
                    acc += x;
                    acc
                })
                .collect()
        })
        .collect();

    let mut sums = Vec::with_capacity(cfg.path_count);
    for path in 0..cfg.path_count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(path as u64));
        let mut state = start;
        let mut total = g[state] - mean_g;
        let mut hit = false;
        for _ in 0..cfg.max_steps {
            let u: f64 = rng.gen();
            let row = &cumulative[state];
            state = match row.iter().position(|&c| u <= c) {
                Some(s) => s,
                // Row sums can fall a hair below 1 from rounding.
                None => n - 1,
            };
            if state == alpha {
                hit = true;
                break;
            }
            total += g[state] - mean_g;
        }
        if !hit {
            return Err(Error::PathBudgetExceeded {
                path,
                max_steps: cfg.max_steps,
            });
        }
        sums.push(total);
    }

    let count = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / count;
    if sums.len() == 1 {
        return Ok((mean, f64::INFINITY));
    }
    let var = sums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
    let t = StudentsT::new(0.0, 1.0, count - 1.0)
        .map_err(|e| Error::InvalidInput(format!("student-t setup: {e}")))?
        .inverse_cdf(0.5 + cfg.confidence / 2.0);
    Ok((mean, t * (var / count).sqrt()))
}

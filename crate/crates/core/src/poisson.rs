//! General solvers for the matrix form of Poisson's equation
//! `(I - P) X = I - e pi^T`: the censoring-based solution `X~`, the deviation
//! matrix `D`, the additive-functional matrix `K` anchored at a state, and
//! application of forcing functions.

use crate::censor::{censor_dtmc, Partition};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::linalg::{group_inverse, DenseMatrix, DenseVector};

/// Forcing function for Poisson's equation, either a named family or an
/// explicit per-state table.
#[derive(Debug, Clone, PartialEq)]
pub enum ForcingFunction {
    /// `g(i, j) = i * j` for state `(level i, phase j)` with 1-based phases.
    LevelTimesPhase,
    /// `g(i, .) = sqrt(i)` for states at level `i`.
    SqrtLevel,
    /// Explicit values by flat state index.
    Table(Vec<f64>),
}

impl ForcingFunction {
    /// Materializes the forcing values for `n_states` states arranged in
    /// levels of `block_size` phases.
    pub fn values(&self, block_size: usize, n_states: usize) -> Result<DenseVector> {
        match self {
            ForcingFunction::LevelTimesPhase => Ok(DenseVector::from_vec(
                (0..n_states)
                    .map(|s| {
                        let level = (s / block_size) as f64;
                        let phase = (s % block_size + 1) as f64;
                        level * phase
                    })
                    .collect(),
            )),
            ForcingFunction::SqrtLevel => Ok(DenseVector::from_vec(
                (0..n_states)
                    .map(|s| ((s / block_size) as f64).sqrt())
                    .collect(),
            )),
            ForcingFunction::Table(values) => {
                if values.len() < n_states {
                    return Err(Error::InvalidInput(format!(
                        "forcing table has {} entries but the model has {n_states} states",
                        values.len()
                    )));
                }
                Ok(DenseVector::from_vec(values[..n_states].to_vec()))
            }
        }
    }
}

/// Counters and truncation details reported alongside a solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveDiagnostics {
    pub g_iterations: usize,
    pub truncation_level: usize,
    pub tail_mass: f64,
}

/// A solution of Poisson's equation together with the optional centered and
/// anchored variants and the forcing applications.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub pi: DenseVector,
    pub x_tilde: DenseMatrix,
    pub d: Option<DenseMatrix>,
    pub k: Option<DenseMatrix>,
    pub anchor: Option<usize>,
    pub f_d: Option<DenseVector>,
    pub f_k: Option<DenseVector>,
    pub pi_abs_g: Option<f64>,
    pub residual_norm: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Infinity norm of `(I - P) X - (I - e pi^T)`.
pub fn residual(p: &DenseMatrix, x: &DenseMatrix, pi: &DenseVector) -> f64 {
    let n = p.rows();
    let e_pi = DenseMatrix::outer(&DenseVector::ones(n), pi);
    let lhs = x.sub(&p.matmul(x));
    let rhs = DenseMatrix::identity(n).sub(&e_pi);
    lhs.sub(&rhs).infinity_norm()
}

/// Period of an irreducible chain: gcd of cycle-length mismatches seen on a
/// breadth-first sweep of the transition graph.
pub fn chain_period(p: &DenseMatrix) -> usize {
    let n = p.rows();
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0);
    let mut g: u64 = 0;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p.get(u, v) <= 1e-14 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                g = gcd(g, diff);
            }
        }
    }
    if g == 0 {
        n.max(1) // no closing edge found; treat as fully periodic
    } else {
        g as usize
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct CensoredPieces {
    order: Vec<usize>,
    pi_perm: DenseVector,
    w: DenseMatrix,           // group inverse of I - P^(A)
    u: Option<DenseMatrix>,   // P_AB hatP_BB
    hat: Option<DenseMatrix>, // hatP_BB
    p_ba: Option<DenseMatrix>,
}

fn censored_pieces(p: &DenseMatrix, part: &Partition, pi: &DenseVector) -> Result<CensoredPieces> {
    if p.rows() != part.n() || pi.len() != part.n() {
        return Err(Error::DimensionMismatch(format!(
            "P is {}x{}, pi has {}, partition over {} states",
            p.rows(),
            p.cols(),
            pi.len(),
            part.n()
        )));
    }
    let cen = censor_dtmc(p, part)?;
    let w = group_inverse(&cen.p_cens, &cen.pi_cens)?;
    let order = part.permuted_order();
    let pi_perm = DenseVector::from_vec(order.iter().map(|&s| pi[s]).collect());
    match cen.hat_p_bb {
        None => Ok(CensoredPieces {
            order,
            pi_perm,
            w,
            u: None,
            hat: None,
            p_ba: None,
        }),
        Some(hat) => {
            let p_ab = p.submatrix(part.a(), part.b());
            let p_ba = p.submatrix(part.b(), part.a());
            let u = p_ab.matmul(&hat);
            Ok(CensoredPieces {
                order,
                pi_perm,
                w,
                u: Some(u),
                hat: Some(hat),
                p_ba: Some(p_ba),
            })
        }
    }
}

/// `N_A` and `N_B` of the first-return visit counts, stacked in the
/// permuted (A then B) order. Shared by `solve_xtilde` and `visit_matrix`.
fn visit_blocks(pieces: &CensoredPieces, na: usize) -> (DenseMatrix, Option<DenseMatrix>) {
    let n = pieces.order.len();
    let pi_row = &pieces.pi_perm;
    match (&pieces.u, &pieces.hat) {
        (Some(u), Some(hat)) => {
            let nb = n - na;
            let bracket_a = DenseMatrix::hstack(&[&DenseMatrix::identity(na), u]);
            let mut weight_a = DenseVector::ones(na);
            let u_row_sums = u.row_sums();
            for i in 0..na {
                weight_a[i] += u_row_sums[i];
            }
            let n_a = bracket_a.sub(&DenseMatrix::outer(&weight_a, pi_row));
            let bracket_b = DenseMatrix::hstack(&[&DenseMatrix::zeros(nb, na), hat]);
            let n_b = bracket_b.sub(&DenseMatrix::outer(&hat.row_sums(), pi_row));
            (n_a, Some(n_b))
        }
        _ => {
            let bracket = DenseMatrix::identity(na);
            let n_a = bracket.sub(&DenseMatrix::outer(&DenseVector::ones(na), pi_row));
            (n_a, None)
        }
    }
}

fn unpermute(x: &DenseMatrix, order: &[usize]) -> DenseMatrix {
    let n = order.len();
    let mut out = DenseMatrix::zeros(n, n);
    for (ri, &r) in order.iter().enumerate() {
        for (ci, &c) in order.iter().enumerate() {
            out.set(r, c, x.get(ri, ci));
        }
    }
    out
}

/// Solution `X~` of `(I - P) X = I - e pi^T` built from the censored chain
/// on `A`:
///
/// `X~_A = (I - P^(A))^# ([I, P_AB hatP_BB] - (e + P_AB hatP_BB e) pi^T)`
/// `X~_B = hatP_BB P_BA X~_A + [O, hatP_BB] - hatP_BB e pi^T`
///
/// Rows and columns of the result are in model state order.
pub fn solve_xtilde(
    p: &DenseMatrix,
    part: &Partition,
    pi: &DenseVector,
    config: &SolverConfig,
) -> Result<DenseMatrix> {
    let pieces = censored_pieces(p, part, pi)?;
    let na = part.a().len();
    let (n_a, n_b) = visit_blocks(&pieces, na);
    let x_a = pieces.w.matmul(&n_a);
    let x_perm = match (n_b, &pieces.hat, &pieces.p_ba) {
        (Some(n_b), Some(hat), Some(p_ba)) => {
            let x_b = hat.matmul(p_ba).matmul(&x_a).add(&n_b);
            DenseMatrix::vstack(&[&x_a, &x_b])
        }
        _ => x_a,
    };
    let x = unpermute(&x_perm, &pieces.order);
    let norm = residual(p, &x, pi);
    if norm > config.residual_tol {
        return Err(Error::ResidualTooLarge {
            norm,
            tol: config.residual_tol,
        });
    }
    Ok(x)
}

/// Expected centered visit counts before the first return to `A`:
/// `N_A = [I, P_AB hatP_BB] - (e + P_AB hatP_BB e) pi^T` and
/// `N_B = [O, hatP_BB] - hatP_BB e pi^T`, in model state order.
pub fn visit_matrix(p: &DenseMatrix, part: &Partition, pi: &DenseVector) -> Result<DenseMatrix> {
    let pieces = censored_pieces(p, part, pi)?;
    let na = part.a().len();
    let (n_a, n_b) = visit_blocks(&pieces, na);
    let stacked = match n_b {
        Some(n_b) => DenseMatrix::vstack(&[&n_a, &n_b]),
        None => n_a,
    };
    Ok(unpermute(&stacked, &pieces.order))
}

/// Deviation matrix `D = (I - e pi^T) X~`, the unique solution with
/// `pi^T D = 0`. Requires an aperiodic chain.
pub fn deviation_matrix(
    p: &DenseMatrix,
    part: &Partition,
    pi: &DenseVector,
    config: &SolverConfig,
) -> Result<DenseMatrix> {
    let period = chain_period(p);
    if period > 1 {
        return Err(Error::PeriodicChain { period });
    }
    let x = solve_xtilde(p, part, pi, config)?;
    Ok(center_solution(&x, pi))
}

/// `(I - e pi^T) X`: recenters any solution so that `pi^T D = 0`.
pub fn center_solution(x: &DenseMatrix, pi: &DenseVector) -> DenseMatrix {
    let shift = x.premul_vec(pi);
    x.sub(&DenseMatrix::outer(&DenseVector::ones(x.rows()), &shift))
}

/// Additive-functional matrix `K = X~ - e X~(alpha, .)`, the solution whose
/// `alpha` row is identically zero.
pub fn additive_matrix(
    p: &DenseMatrix,
    part: &Partition,
    pi: &DenseVector,
    alpha: usize,
    config: &SolverConfig,
) -> Result<DenseMatrix> {
    if !part.contains(alpha) {
        return Err(Error::AnchorNotInA { alpha });
    }
    let x = solve_xtilde(p, part, pi, config)?;
    Ok(anchor_solution(&x, alpha))
}

/// `X - e X(alpha, .)`: rebases any solution so that row `alpha` vanishes.
pub fn anchor_solution(x: &DenseMatrix, alpha: usize) -> DenseMatrix {
    let beta = DenseVector::from_vec(x.row(alpha).to_vec());
    x.sub(&DenseMatrix::outer(&DenseVector::ones(x.rows()), &beta))
}

/// Result of applying a forcing function through a solution matrix.
#[derive(Debug, Clone)]
pub struct ForcingApplication {
    /// `f = X (g - (pi^T g) e)`.
    pub values: DenseVector,
    /// `pi^T |g|`, the integrability diagnostic.
    pub pi_abs_g: f64,
}

const FORCING_OVERFLOW_GUARD: f64 = 1e12;

/// Applies a forcing vector: `f = X g - (pi^T g) X e`.
pub fn apply_forcing(
    x: &DenseMatrix,
    g: &DenseVector,
    pi: &DenseVector,
) -> Result<ForcingApplication> {
    if x.cols() != g.len() || pi.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "X is {}x{}, g has {}, pi has {}",
            x.rows(),
            x.cols(),
            g.len(),
            pi.len()
        )));
    }
    let pi_abs_g = pi.dot(&g.abs());
    if !pi_abs_g.is_finite() || pi_abs_g > FORCING_OVERFLOW_GUARD {
        return Err(Error::DivergentForcing { value: pi_abs_g });
    }
    let mean = pi.dot(g);
    let xg = x.mul_vec(g);
    let xe = x.mul_vec(&DenseVector::ones(g.len()));
    Ok(ForcingApplication {
        values: xg.sub(&xe.scale(mean)),
        pi_abs_g,
    })
}

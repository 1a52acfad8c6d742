//! Continuous-time analogue of the censoring machinery: censored generators,
//! the fundamental matrix `(-Q_BB)^{-1}`, and the solution of
//! `-Q X = I - e pi^T`.

use crate::censor::Partition;
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};

/// Conservative generator: nonnegative off-diagonals and zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    q: DenseMatrix,
}

impl Generator {
    pub fn new(q: DenseMatrix) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "generator must be square, got {}x{}",
                q.rows(),
                q.cols()
            )));
        }
        for r in 0..q.rows() {
            let mut sum = 0.0;
            for c in 0..q.cols() {
                let v = q.get(r, c);
                if r != c && v < -1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "negative off-diagonal rate at ({r},{c})"
                    )));
                }
                sum += v;
            }
            if sum.abs() > 1e-10 {
                return Err(Error::InvalidInput(format!("row {r} of Q sums to {sum}")));
            }
        }
        Ok(Generator { q })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn order(&self) -> usize {
        self.q.rows()
    }
}

/// Fundamental matrix `(-Q_BB)^{-1}` of a transient generator block, equal to
/// the expected time spent in each `B` state before leaving `B`.
pub fn q_fundamental(q_bb: &DenseMatrix) -> Result<DenseMatrix> {
    if !q_bb.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "fundamental matrix needs a square block, got {}x{}",
            q_bb.rows(),
            q_bb.cols()
        )));
    }
    linalg::invert(&q_bb.scale(-1.0))
}

/// Censored generator `Q^(A) = Q_AA + Q_AB (-Q_BB)^{-1} Q_BA`.
pub fn censor_ctmc(gen: &Generator, part: &Partition) -> Result<Generator> {
    let q = gen.matrix();
    if q.rows() != part.n() {
        return Err(Error::DimensionMismatch(format!(
            "partition over {} states but Q is {}x{}",
            part.n(),
            q.rows(),
            q.cols()
        )));
    }
    if part.b().is_empty() {
        return Generator::new(q.submatrix(part.a(), part.a()));
    }
    let q_aa = q.submatrix(part.a(), part.a());
    let q_ab = q.submatrix(part.a(), part.b());
    let q_ba = q.submatrix(part.b(), part.a());
    let q_bb = q.submatrix(part.b(), part.b());
    let hat = q_fundamental(&q_bb)?;
    Generator::new(q_aa.add(&q_ab.matmul(&hat).matmul(&q_ba)))
}

/// Stationary vector of a generator: `pi^T Q = 0`, `pi^T e = 1`, with the
/// last balance equation replaced by the normalization.
pub fn stationary_ctmc(gen: &Generator) -> Result<DenseVector> {
    let q = gen.matrix();
    let n = q.rows();
    if n == 1 {
        return Ok(DenseVector::ones(1));
    }
    let mut m = q.transpose();
    for c in 0..n {
        m.set(n - 1, c, 1.0);
    }
    let mut rhs = DenseMatrix::zeros(n, 1);
    rhs.set(n - 1, 0, 1.0);
    let sol = linalg::solve_linear(&m, &rhs)?;
    Ok(DenseVector::from_vec(
        (0..n).map(|i| sol.get(i, 0)).collect(),
    ))
}

/// Infinity norm of `(-Q) X - (I - e pi^T)`.
pub fn residual_ctmc(q: &DenseMatrix, x: &DenseMatrix, pi: &DenseVector) -> f64 {
    let n = q.rows();
    let e_pi = DenseMatrix::outer(&DenseVector::ones(n), pi);
    let lhs = q.scale(-1.0).matmul(x);
    let rhs = DenseMatrix::identity(n).sub(&e_pi);
    lhs.sub(&rhs).infinity_norm()
}

/// Solution of `-Q X = I - e pi^T` through the censored generator:
///
/// `X_A = (-Q^(A))^# ([I, Q_AB hatQ_BB] - (e + Q_AB hatQ_BB e) pi^T)`
/// `X_B = hatQ_BB Q_BA X_A + [O, hatQ_BB] - hatQ_BB e pi^T`
///
/// where `(-Q^(A))^#` is the rank-one corrected inverse
/// `(-Q^(A) + e pi_A^T)^{-1} - e pi_A^T` with the censored stationary
/// vector `pi_A`. Rows and columns come back in model state order.
pub fn xtilde_ctmc(
    gen: &Generator,
    part: &Partition,
    pi: &DenseVector,
    config: &SolverConfig,
) -> Result<DenseMatrix> {
    let q = gen.matrix();
    let n = q.rows();
    if pi.len() != n || part.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "Q is {n}x{n}, pi has {}, partition over {}",
            pi.len(),
            part.n()
        )));
    }
    let censored = censor_ctmc(gen, part)?;
    let pi_cens = stationary_ctmc(&censored)?;
    let na = part.a().len();
    let e_pi_a = DenseMatrix::outer(&DenseVector::ones(na), &pi_cens);
    let corrected = censored.matrix().scale(-1.0).add(&e_pi_a);
    let w = linalg::invert(&corrected)?.sub(&e_pi_a);

    let order = part.permuted_order();
    let pi_perm = DenseVector::from_vec(order.iter().map(|&s| pi[s]).collect());

    let x_perm = if part.b().is_empty() {
        let bracket =
            DenseMatrix::identity(na).sub(&DenseMatrix::outer(&DenseVector::ones(na), &pi_perm));
        w.matmul(&bracket)
    } else {
        let nb = part.b().len();
        let q_ab = q.submatrix(part.a(), part.b());
        let q_ba = q.submatrix(part.b(), part.a());
        let q_bb = q.submatrix(part.b(), part.b());
        let hat = q_fundamental(&q_bb)?;
        let u = q_ab.matmul(&hat);
        let mut weight = DenseVector::ones(na);
        let u_sums = u.row_sums();
        for i in 0..na {
            weight[i] += u_sums[i];
        }
        let bracket = DenseMatrix::hstack(&[&DenseMatrix::identity(na), &u])
            .sub(&DenseMatrix::outer(&weight, &pi_perm));
        let x_a = w.matmul(&bracket);
        let tail = DenseMatrix::hstack(&[&DenseMatrix::zeros(nb, na), &hat])
            .sub(&DenseMatrix::outer(&hat.row_sums(), &pi_perm));
        let x_b = hat.matmul(&q_ba).matmul(&x_a).add(&tail);
        DenseMatrix::vstack(&[&x_a, &x_b])
    };

    let mut x = DenseMatrix::zeros(n, n);
    for (ri, &r) in order.iter().enumerate() {
        for (ci, &c) in order.iter().enumerate() {
            x.set(r, c, x_perm.get(ri, ci));
        }
    }
    let norm = residual_ctmc(q, &x, pi);
    if norm > config.residual_tol {
        return Err(Error::ResidualTooLarge {
            norm,
            tol: config.residual_tol,
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_generator(n: usize, rng: &mut ChaCha8Rng) -> Generator {
        let mut q = DenseMatrix::zeros(n, n);
        for r in 0..n {
            let mut total = 0.0;
            for c in 0..n {
                if c != r {
                    let rate = rng.gen::<f64>() + 0.05;
                    q.set(r, c, rate);
                    total += rate;
                }
            }
            q.set(r, r, -total);
        }
        Generator::new(q).unwrap()
    }

    #[test]
    fn q_fundamental_exponential_sojourn() {
        let q_bb = DenseMatrix::from_rows(&[vec![-2.5]]).unwrap();
        let hat = q_fundamental(&q_bb).unwrap();
        assert!((hat.get(0, 0) - 0.4).abs() < 1e-14);
    }

    #[test]
    fn q_fundamental_block_diagonal() {
        let q_bb = DenseMatrix::from_rows(&[vec![-2.0, 0.0], vec![0.0, -5.0]]).unwrap();
        let hat = q_fundamental(&q_bb).unwrap();
        assert!((hat.get(0, 0) - 0.5).abs() < 1e-14);
        assert!((hat.get(1, 1) - 0.2).abs() < 1e-14);
        assert_eq!(hat.get(0, 1), 0.0);
    }

    #[test]
    fn q_fundamental_matches_uniformization_quadrature() {
        // (-Q_BB)^{-1} = sum_n P_u^n / lambda with P_u = I + Q_BB / lambda.
        let q_bb = DenseMatrix::from_rows(&[vec![-3.0, 1.0], vec![0.5, -2.0]]).unwrap();
        let hat = q_fundamental(&q_bb).unwrap();
        let lambda = 8.0;
        let p_u = DenseMatrix::identity(2).add(&q_bb.scale(1.0 / lambda));
        let mut acc = DenseMatrix::zeros(2, 2);
        let mut power = DenseMatrix::identity(2);
        for _ in 0..4000 {
            acc = acc.add(&power);
            power = power.matmul(&p_u);
        }
        assert!(hat.max_abs_diff(&acc.scale(1.0 / lambda)) < 1e-8);
    }

    #[test]
    fn censoring_preserves_zero_row_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let gen = random_generator(5, &mut rng);
        let part = Partition::new(&[0, 2], 5).unwrap();
        let censored = censor_ctmc(&gen, &part).unwrap();
        let sums = censored.matrix().row_sums();
        assert!(sums.max_abs() < 1e-8);
    }

    #[test]
    fn censoring_full_set_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let gen = random_generator(4, &mut rng);
        let part = Partition::leading(4, 4).unwrap();
        let censored = censor_ctmc(&gen, &part).unwrap();
        assert!(censored.matrix().max_abs_diff(gen.matrix()) < 1e-14);
    }

    #[test]
    fn birth_death_censored_to_single_state() {
        let q = DenseMatrix::from_rows(&[
            vec![-1.0, 1.0, 0.0],
            vec![2.0, -3.0, 1.0],
            vec![0.0, 2.0, -2.0],
        ])
        .unwrap();
        let gen = Generator::new(q).unwrap();
        let part = Partition::new(&[0], 3).unwrap();
        let censored = censor_ctmc(&gen, &part).unwrap();
        assert!(censored.matrix().get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn two_state_deviation_closed_form() {
        let (a, b) = (1.3, 0.6);
        let q = DenseMatrix::from_rows(&[vec![-a, a], vec![b, -b]]).unwrap();
        let gen = Generator::new(q.clone()).unwrap();
        let pi = stationary_ctmc(&gen).unwrap();
        assert!((pi[0] - b / (a + b)).abs() < 1e-13);
        let part = Partition::new(&[0], 2).unwrap();
        let config = SolverConfig {
            residual_tol: 1e-8,
            ..Default::default()
        };
        let x = xtilde_ctmc(&gen, &part, &pi, &config).unwrap();
        let d = crate::poisson::center_solution(&x, &pi);
        let scale = 1.0 / ((a + b) * (a + b));
        let expected =
            DenseMatrix::from_rows(&[vec![a * scale, -a * scale], vec![-b * scale, b * scale]])
                .unwrap();
        assert!(d.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn single_state_solution_is_zero() {
        let gen = Generator::new(DenseMatrix::from_rows(&[vec![0.0]]).unwrap()).unwrap();
        let part = Partition::new(&[0], 1).unwrap();
        let config = SolverConfig {
            residual_tol: 1e-8,
            ..Default::default()
        };
        let x = xtilde_ctmc(&gen, &part, &DenseVector::ones(1), &config).unwrap();
        assert!(x.get(0, 0).abs() < 1e-14);
    }

    #[test]
    fn exit_time_identity() {
        // hatQ_BB Q_BA e = e: exit from B is certain.
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let gen = random_generator(6, &mut rng);
        let part = Partition::new(&[1, 3], 6).unwrap();
        let q = gen.matrix();
        let hat = q_fundamental(&q.submatrix(part.b(), part.b())).unwrap();
        let hit = hat.matmul(&q.submatrix(part.b(), part.a())).row_sums();
        for i in 0..hit.len() {
            assert!((hit[i] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn uniformization_cross_check() {
        // For P = I + Q/lambda the discrete solution divided by lambda also
        // solves the continuous equation, so the two differ by constant rows.
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let gen = random_generator(4, &mut rng);
        let q = gen.matrix();
        let lambda = 2.0 * (0..4).map(|i| -q.get(i, i)).fold(0.0, f64::max);
        let p = DenseMatrix::identity(4).add(&q.scale(1.0 / lambda));
        let pi = stationary_ctmc(&gen).unwrap();
        let part = Partition::new(&[0], 4).unwrap();
        let config = SolverConfig {
            residual_tol: 1e-8,
            ..Default::default()
        };
        let x_d = crate::poisson::solve_xtilde(&p, &part, &pi, &config).unwrap();
        let x_c = xtilde_ctmc(&gen, &part, &pi, &config).unwrap();
        assert!(residual_ctmc(q, &x_d.scale(1.0 / lambda), &pi) < 1e-9);
        let diff = x_c.sub(&x_d.scale(1.0 / lambda));
        for r in 1..4 {
            for c in 0..4 {
                assert!((diff.get(r, c) - diff.get(0, c)).abs() < 1e-9);
            }
        }
    }
}

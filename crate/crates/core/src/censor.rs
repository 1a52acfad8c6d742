//! Censoring of a Markov chain on a subset of states: the fundamental matrix
//! of the complement block, the censored transition matrix, and
//! reconstruction of the global stationary vector from the censored one.

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};

/// Split of the state set into a censor set `A` and its complement `B`,
/// both kept in ascending model order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    a: Vec<usize>,
    b: Vec<usize>,
    n: usize,
}

impl Partition {
    /// Builds a partition of `{0, .., n-1}` from the censor set `a`.
    pub fn new(a: &[usize], n: usize) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidInput("censor set must be nonempty".into()));
        }
        let mut a: Vec<usize> = a.to_vec();
        a.sort_unstable();
        a.dedup();
        if let Some(&bad) = a.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidInput(format!(
                "censor state {bad} out of range for {n} states"
            )));
        }
        let mut in_a = vec![false; n];
        for &s in &a {
            in_a[s] = true;
        }
        let b = (0..n).filter(|&s| !in_a[s]).collect();
        Ok(Partition { a, b, n })
    }

    /// Censor set `A = {0, .., k-1}` (the leading states).
    pub fn leading(k: usize, n: usize) -> Result<Self> {
        Partition::new(&(0..k).collect::<Vec<_>>(), n)
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, state: usize) -> bool {
        self.a.binary_search(&state).is_ok()
    }

    /// States of `A` followed by states of `B`: the row/column order used by
    /// all block formulas.
    pub fn permuted_order(&self) -> Vec<usize> {
        self.a.iter().chain(self.b.iter()).copied().collect()
    }
}

/// Result of censoring a chain on `A`: the censored transition matrix, its
/// stationary vector, and the fundamental matrix of the `B` block
/// (`None` when `B` is empty).
#[derive(Debug, Clone)]
pub struct CensoredChain {
    pub p_cens: DenseMatrix,
    pub pi_cens: DenseVector,
    pub hat_p_bb: Option<DenseMatrix>,
}

/// Fundamental matrix `(I - P_BB)^{-1}` of a substochastic block.
///
/// Entry `(i, j)` is the expected number of visits to `j` before leaving `B`,
/// starting from `i`. Fails with `NotSubstochastic` when a row sums above
/// one, and with `SingularMatrix` when `B` contains an absorbing subset.
pub fn fundamental_matrix(p_bb: &DenseMatrix) -> Result<DenseMatrix> {
    if !p_bb.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "fundamental matrix needs a square block, got {}x{}",
            p_bb.rows(),
            p_bb.cols()
        )));
    }
    for r in 0..p_bb.rows() {
        let sum: f64 = p_bb.row(r).iter().sum();
        if sum > 1.0 + 1e-10 {
            return Err(Error::NotSubstochastic { row: r, sum });
        }
        if p_bb.row(r).iter().any(|&x| x < -1e-12) {
            return Err(Error::InvalidInput(format!("negative entry in row {r}")));
        }
    }
    let i_minus = DenseMatrix::identity(p_bb.rows()).sub(p_bb);
    linalg::invert(&i_minus)
}

/// Censors a stochastic chain on the partition's `A` set:
/// `P_cens = P_AA + P_AB (I - P_BB)^{-1} P_BA`, together with the stationary
/// vector of the censored chain (by direct solve of the balance equations).
pub fn censor_dtmc(p: &DenseMatrix, part: &Partition) -> Result<CensoredChain> {
    if !p.is_square() || p.rows() != part.n() {
        return Err(Error::DimensionMismatch(format!(
            "partition over {} states but P is {}x{}",
            part.n(),
            p.rows(),
            p.cols()
        )));
    }
    if part.b().is_empty() {
        let p_cens = p.submatrix(part.a(), part.a());
        let pi_cens = linalg::stationary_vector(&p_cens)?;
        return Ok(CensoredChain {
            p_cens,
            pi_cens,
            hat_p_bb: None,
        });
    }
    let p_aa = p.submatrix(part.a(), part.a());
    let p_ab = p.submatrix(part.a(), part.b());
    let p_ba = p.submatrix(part.b(), part.a());
    let p_bb = p.submatrix(part.b(), part.b());
    let hat = fundamental_matrix(&p_bb)?;
    let p_cens = p_aa.add(&p_ab.matmul(&hat).matmul(&p_ba));
    let pi_cens = linalg::stationary_vector(&p_cens)?;
    Ok(CensoredChain {
        p_cens,
        pi_cens,
        hat_p_bb: Some(hat),
    })
}

/// Reconstructs the full stationary vector from the censored one:
/// `pi_A = c * pi_cens` with `c = (pi_cens^T [I, P_AB hatP_BB] e)^{-1}` and
/// `pi_B = pi_A P_AB hatP_BB`. The result is returned in model state order.
pub fn stationary_via_censoring(p: &DenseMatrix, part: &Partition) -> Result<DenseVector> {
    let cen = censor_dtmc(p, part)?;
    let mut pi = DenseVector::zeros(part.n());
    match &cen.hat_p_bb {
        None => {
            for (k, &s) in part.a().iter().enumerate() {
                pi[s] = cen.pi_cens[k];
            }
        }
        Some(hat) => {
            let p_ab = p.submatrix(part.a(), part.b());
            let u = p_ab.matmul(hat);
            let mass_b = u.premul_vec(&cen.pi_cens).sum();
            let c = 1.0 / (1.0 + mass_b);
            let pi_a = cen.pi_cens.scale(c);
            let pi_b = u.premul_vec(&pi_a);
            for (k, &s) in part.a().iter().enumerate() {
                pi[s] = pi_a[k];
            }
            for (k, &s) in part.b().iter().enumerate() {
                pi[s] = pi_b[k];
            }
        }
    }
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_stochastic(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.02).collect();
            let sum: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|x| x / sum).collect());
        }
        DenseMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn fundamental_immediate_exit() {
        let p_bb = DenseMatrix::zeros(3, 3);
        let hat = fundamental_matrix(&p_bb).unwrap();
        assert!(hat.max_abs_diff(&DenseMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn fundamental_geometric_visits() {
        let p_bb = DenseMatrix::from_rows(&[vec![0.5]]).unwrap();
        let hat = fundamental_matrix(&p_bb).unwrap();
        assert!((hat.get(0, 0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fundamental_matches_neumann_series() {
        // hatP_BB = sum_k P_BB^k, accumulated directly.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_stochastic(5, &mut rng);
        let p_bb = p.submatrix(&[2, 3, 4], &[2, 3, 4]);
        let hat = fundamental_matrix(&p_bb).unwrap();
        let mut partial = DenseMatrix::identity(3);
        let mut power = DenseMatrix::identity(3);
        for _ in 0..2000 {
            power = power.matmul(&p_bb);
            partial = partial.add(&power);
        }
        assert!(hat.max_abs_diff(&partial) < 1e-8);
    }

    #[test]
    fn fundamental_rejects_superstochastic() {
        let p_bb = DenseMatrix::from_rows(&[vec![0.7, 0.6], vec![0.1, 0.2]]).unwrap();
        assert!(matches!(
            fundamental_matrix(&p_bb).unwrap_err(),
            Error::NotSubstochastic { row: 0, .. }
        ));
    }

    #[test]
    fn fundamental_rejects_absorbing_block() {
        let p_bb = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            fundamental_matrix(&p_bb).unwrap_err(),
            Error::SingularMatrix { .. }
        ));
    }

    #[test]
    fn censoring_full_set_is_identity_operation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_stochastic(4, &mut rng);
        let part = Partition::leading(4, 4).unwrap();
        let cen = censor_dtmc(&p, &part).unwrap();
        assert!(cen.p_cens.max_abs_diff(&p) < 1e-14);
        assert!(cen.hat_p_bb.is_none());
    }

    #[test]
    fn censored_chain_is_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in [3usize, 5, 8] {
            let p = random_stochastic(n, &mut rng);
            let part = Partition::new(&[0, n - 1], n).unwrap();
            let cen = censor_dtmc(&p, &part).unwrap();
            assert!(cen.p_cens.check_stochastic(1e-8).is_ok());
            // pi_cens solves the censored balance equations
            let diff = cen.p_cens.premul_vec(&cen.pi_cens).sub(&cen.pi_cens);
            assert!(diff.max_abs() < 1e-10);
        }
    }

    #[test]
    fn exit_probabilities_sum_to_one() {
        // hatP_BB P_BA e = e: from B the chain hits A with probability one.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_stochastic(6, &mut rng);
        let part = Partition::new(&[1, 4], 6).unwrap();
        let cen = censor_dtmc(&p, &part).unwrap();
        let hat = cen.hat_p_bb.unwrap();
        let p_ba = p.submatrix(part.b(), part.a());
        let hit = hat.matmul(&p_ba).row_sums();
        for i in 0..hit.len() {
            assert!((hit[i] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn two_state_stationary_via_censoring() {
        let (a, b) = (0.35, 0.15);
        let p = DenseMatrix::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap();
        let part = Partition::new(&[0], 2).unwrap();
        let pi = stationary_via_censoring(&p, &part).unwrap();
        assert!((pi[0] - b / (a + b)).abs() < 1e-12);
        assert!((pi[1] - a / (a + b)).abs() < 1e-12);
    }

    #[test]
    fn stationary_consistent_across_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = random_stochastic(7, &mut rng);
        let direct = linalg::stationary_vector(&p).unwrap();
        for a in [vec![0], vec![2, 5], vec![0, 1, 2, 3], vec![6]] {
            let part = Partition::new(&a, 7).unwrap();
            let pi = stationary_via_censoring(&p, &part).unwrap();
            assert!(pi.max_abs_diff(&direct) < 1e-8, "censor set {a:?}");
            let balance = p.premul_vec(&pi).sub(&pi);
            assert!(balance.max_abs() < 1e-8);
            assert!((pi.sum() - 1.0).abs() < 1e-10);
        }
    }
}

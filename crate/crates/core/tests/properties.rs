//! Property tests over randomly generated chains and systems.

use markov_poisson::censor::{censor_dtmc, stationary_via_censoring, Partition};
use markov_poisson::config::SolverConfig;
use markov_poisson::linalg::{solve_linear, stationary_vector, DenseMatrix, DenseVector};
use markov_poisson::poisson;
use proptest::prelude::*;

/// Row-stochastic matrix with strictly positive entries.
fn stochastic_matrix(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|row| {
                let sum: f64 = row.iter().sum();
                row.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        DenseMatrix::from_rows(&rows).unwrap()
    })
}

fn censor_sets(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..n).collect();
    (
        prop::sample::subsequence(all.clone(), 1..=n.max(2) - 1),
        prop::sample::subsequence(all, 1..=n.max(2) - 1),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn censored_chain_is_stochastic_and_partition_free(
        (p, (set_a, set_b)) in (3usize..8)
            .prop_flat_map(|n| (stochastic_matrix(n), censor_sets(n)))
    ) {
        let n = p.rows();
        let part_a = Partition::new(&set_a, n).unwrap();
        let part_b = Partition::new(&set_b, n).unwrap();
        let cen = censor_dtmc(&p, &part_a).unwrap();
        for r in 0..cen.p_cens.rows() {
            let sum: f64 = cen.p_cens.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-8, "row {r} sums to {sum}");
        }
        let pi_a = stationary_via_censoring(&p, &part_a).unwrap();
        let pi_b = stationary_via_censoring(&p, &part_b).unwrap();
        prop_assert!(pi_a.max_abs_diff(&pi_b) < 1e-8);
    }

    #[test]
    fn solution_residual_is_shift_invariant(
        (p, beta) in (2usize..7).prop_flat_map(|n| {
            (stochastic_matrix(n), prop::collection::vec(-5.0f64..5.0, n))
        })
    ) {
        let n = p.rows();
        let pi = stationary_vector(&p).unwrap();
        let part = Partition::new(&[0], n).unwrap();
        let config = SolverConfig { residual_tol: 1e-8, ..Default::default() };
        let x = poisson::solve_xtilde(&p, &part, &pi, &config).unwrap();
        let shift = DenseMatrix::outer(&DenseVector::ones(n), &DenseVector::from_vec(beta));
        let r0 = poisson::residual(&p, &x, &pi);
        let r1 = poisson::residual(&p, &x.add(&shift), &pi);
        prop_assert!((r0 - r1).abs() < 1e-9, "{r0:.3e} vs {r1:.3e}");
    }

    #[test]
    fn linear_solver_meets_residual_contract(
        (raw, rhs) in (2usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), n),
                prop::collection::vec(prop::collection::vec(-10.0f64..10.0, n), 2),
            )
        })
    ) {
        // diagonally dominant system built from the raw entries
        let n = raw.len();
        let mut m = DenseMatrix::from_rows(&raw).unwrap();
        for i in 0..n {
            let row_mass: f64 = m.row(i).iter().map(|x| x.abs()).sum();
            m.set(i, i, row_mass + 1.0);
        }
        let rhs_cols = DenseMatrix::from_rows(&rhs).unwrap().transpose();
        let x = solve_linear(&m, &rhs_cols).unwrap();
        let residual = m.matmul(&x).sub(&rhs_cols).infinity_norm();
        prop_assert!(residual <= 1e-10 * rhs_cols.infinity_norm().max(1.0));
    }
}

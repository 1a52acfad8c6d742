//! Cross-module checks tying the structured pipeline to the dense solvers
//! and the oracles on the built-in models.

use markov_poisson::censor::{censor_dtmc, Partition};
use markov_poisson::config::SolverConfig;
use markov_poisson::gig1::{self, TruncationMode};
use markov_poisson::linalg::{stationary_vector, DenseMatrix, DenseVector};
use markov_poisson::oracle::{self, SimulationConfig};
use markov_poisson::poisson::{self, ForcingFunction};
use markov_poisson::presets;

#[test]
fn measure_balance_identities() {
    // R_i (I - Psi0) = A_i + R_{i+1} (I - Psi0) G and
    // Psi0 = A_0 + R_1 (I - Psi0) G for a single-step-down interior.
    let model = presets::map_g1_negative();
    let g = gig1::iterate_g(&model, 1e-12, 10_000).unwrap().matrix;
    let measures = gig1::mg1_measures(&model, &g).unwrap();
    let m = model.block_size();
    let i_minus_psi0 = DenseMatrix::identity(m).sub(&measures.psi0);

    for i in 1..=2usize {
        let lhs = measures.r(i).unwrap().matmul(&i_minus_psi0);
        let mut rhs = model.a_block(i as i64).cloned().unwrap();
        if let Some(r_next) = measures.r(i + 1) {
            rhs = rhs.add(&r_next.matmul(&i_minus_psi0).matmul(&g));
        }
        assert!(lhs.max_abs_diff(&rhs) < 1e-6, "balance fails at R_{i}");
    }
    let rhs = model
        .a_block(0)
        .cloned()
        .unwrap()
        .add(&measures.r(1).unwrap().matmul(&i_minus_psi0).matmul(&g));
    assert!(
        measures.psi0.max_abs_diff(&rhs) < 1e-6,
        "Psi0 balance fails"
    );
}

#[test]
fn scalar_measures_match_closed_forms() {
    // G = (2 - sqrt 2)/2, psi0 = G/2, r_n = (2 - sqrt 2)^2 / 2^{n+1}.
    let model = presets::scalar_gig1();
    let g = gig1::iterate_g(&model, 1e-12, 10_000).unwrap().matrix;
    let root = (2.0 - 2f64.sqrt()) / 2.0;
    assert!((g.get(0, 0) - root).abs() < 1e-10);
    let measures = gig1::mg1_measures(&model, &g).unwrap();
    for n in 1..=8usize {
        let want = (2.0 - 2f64.sqrt()).powi(2) / 2f64.powi(n as i32 + 1);
        let got = measures.r(n).unwrap().get(0, 0);
        assert!(
            (got - want).abs() < 1e-4,
            "r_{n} = {got:.7}, expected {want:.7}"
        );
    }
}

#[test]
fn dense_censoring_reproduces_level0_chain() {
    let model = presets::map_g1_negative();
    let m = model.block_size();
    let p = model.dense_truncation(51, TruncationMode::Plain);
    let part = Partition::leading(m, p.rows()).unwrap();
    let cen = censor_dtmc(&p, &part).unwrap();
    let expected = DenseMatrix::from_rows(&[
        vec![0.2907, 0.1935, 0.5158],
        vec![0.1389, 0.4967, 0.3644],
        vec![0.1952, 0.3318, 0.4730],
    ])
    .unwrap();
    assert!(cen.p_cens.max_abs_diff(&expected) < 1e-3);
}

#[test]
fn visit_matrix_matches_structured_bracket() {
    // The level-0 columns of the dense visit matrix equal the structured
    // factor I - (I + sum_m S_m) e pi_0^T.
    let model = presets::map_g1_negative();
    let m = model.block_size();
    let config = SolverConfig {
        epsilon: 1e-12,
        max_levels: 40,
        ..Default::default()
    };
    let out = gig1::algorithm1(&model, None, &config).unwrap();

    let level_count = config.max_levels + 1;
    let p = model.dense_truncation(level_count, TruncationMode::Plain);
    let part = Partition::leading(m, p.rows()).unwrap();
    let pi = gig1::assemble_levels(&out.structured.pi_blocks);
    let n_matrix = poisson::visit_matrix(&p, &part, &pi).unwrap();

    let mut total_weight = DenseVector::ones(m);
    for s_j in &out.structured.level0.s {
        total_weight = total_weight.add(&s_j.mul_vec(&DenseVector::ones(m)));
    }
    let bracket = DenseMatrix::identity(m).sub(&DenseMatrix::outer(
        &total_weight,
        &out.structured.pi_blocks[0],
    ));
    let n_block = n_matrix.block(0, m, 0, m);
    assert!(n_block.max_abs_diff(&bracket) < 1e-6);
}

#[test]
fn solution_blocks_satisfy_column_identity() {
    // X_0j = X_00 S_j for every retained j.
    let model = presets::map_g1_negative();
    let config = SolverConfig {
        max_levels: 25,
        ..Default::default()
    };
    let out = gig1::algorithm1(&model, None, &config).unwrap();
    let x00 = out.structured.x_blocks.get(0, 0);
    for j in 1..=25usize {
        let expected = x00.matmul(&out.structured.level0.s[j - 1]);
        assert!(
            out.structured.x_blocks.get(0, j).max_abs_diff(&expected) < 1e-8,
            "column identity fails at j = {j}"
        );
    }
}

#[test]
fn forcing_shift_equals_anchor_value() {
    // f_D - f_K = f_D(alpha) e, and f_K vanishes at the anchor.
    let model = presets::scalar_gig1();
    let config = SolverConfig {
        anchor: Some(0),
        ..Default::default()
    };
    let out = gig1::algorithm1(&model, Some(&presets::scalar_gig1_forcing()), &config).unwrap();
    let f_d = out.solution.f_d.unwrap();
    let f_k = out.solution.f_k.unwrap();
    assert!(f_k[0].abs() < 1e-10);
    for i in 0..f_d.len() {
        assert!((f_d[i] - f_k[i] - f_d[0]).abs() < 1e-6, "state {i}");
    }
}

#[test]
fn simulation_covers_pipeline_value() {
    // The Monte-Carlo interval from the truncated chain contains the
    // analytic additive functional produced by the full pipeline.
    let model = presets::scalar_gig1();
    let config = SolverConfig {
        anchor: Some(0),
        ..Default::default()
    };
    let out = gig1::algorithm1(&model, Some(&presets::scalar_gig1_forcing()), &config).unwrap();
    let f_k = out.solution.f_k.unwrap();

    let p = model.dense_truncation(31, TruncationMode::AugmentSelfLoop);
    let pi = stationary_vector(&p).unwrap();
    let g = ForcingFunction::SqrtLevel.values(1, p.rows()).unwrap();
    let sim = SimulationConfig {
        path_count: 10_000,
        seed: 7,
        ..Default::default()
    };
    let (estimate, half_width) = oracle::simulate_additive(&p, &g, 0, 3, &pi, &sim).unwrap();
    assert!(
        (estimate - f_k[3]).abs() <= half_width,
        "{estimate:.4} +- {half_width:.4} misses {:.4}",
        f_k[3]
    );
}

#[test]
fn deviation_and_anchored_solution_differ_by_constant_rows() {
    let model = presets::scalar_gig1();
    let config = SolverConfig {
        anchor: Some(0),
        ..Default::default()
    };
    let out = gig1::algorithm1(&model, None, &config).unwrap();
    let d = out.solution.d.unwrap();
    let k = out.solution.k.unwrap();
    let diff = d.sub(&k);
    for r in 1..diff.rows() {
        for c in 0..diff.cols() {
            assert!(
                (diff.get(r, c) - diff.get(0, c)).abs() < 1e-8,
                "rows differ at ({r},{c})"
            );
        }
    }
}

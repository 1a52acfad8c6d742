//! Built-in demonstration models: a three-phase queue with negative arrivals
//! that clear the system, and a scalar chain with geometric block tails.

use std::collections::BTreeMap;

use crate::gig1::{build_map_g1_rca, BlockSequences};
use crate::linalg::DenseMatrix;
use crate::poisson::ForcingFunction;

/// Number of geometric tail terms stored for the scalar model; `2^-(L+1)`
/// is far below every tolerance used here.
pub const SCALAR_TAIL_TERMS: usize = 40;

fn m3(rows: [[f64; 3]; 3]) -> DenseMatrix {
    DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Three-phase queue with positive arrivals and system-clearing negative
/// arrivals. Block size 3, upward jumps of at most two levels, and the
/// clear-the-system column `B_{-2}` repeating below level 2.
pub fn map_g1_negative() -> BlockSequences {
    let b0 = m3([[0.2, 0.1, 0.2], [0.0, 0.4, 0.1], [0.0, 0.2, 0.1]]);
    let b1 = m3([[0.2, 0.0, 0.2], [0.3, 0.1, 0.0], [0.4, 0.2, 0.0]]);
    let b2 = m3([[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.1]]);
    let bm1 = m3([[0.1, 0.0, 0.4], [0.3, 0.2, 0.1], [0.0, 0.1, 0.3]]);
    let bm2 = m3([[0.0, 0.0, 0.2], [0.1, 0.1, 0.0], [0.0, 0.0, 0.1]]);
    let am1 = m3([[0.1, 0.0, 0.2], [0.2, 0.1, 0.1], [0.1, 0.1, 0.1]]);
    let a0 = m3([[0.0, 0.1, 0.2], [0.1, 0.1, 0.0], [0.0, 0.1, 0.2]]);
    let a1 = m3([[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.1, 0.1]]);
    let a2 = m3([[0.0, 0.1, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.1]]);

    let mut b = BTreeMap::new();
    b.insert(0, b0);
    b.insert(1, b1);
    b.insert(2, b2);
    b.insert(-1, bm1);
    b.insert(-2, bm2);
    let mut a = BTreeMap::new();
    a.insert(-1, am1);
    a.insert(0, a0);
    a.insert(1, a1);
    a.insert(2, a2);
    build_map_g1_rca(b, a).expect("built-in blocks are consistent")
}

/// Forcing function used with [`map_g1_negative`]: `g(i, j) = i * j`.
pub fn map_g1_negative_forcing() -> ForcingFunction {
    ForcingFunction::LevelTimesPhase
}

/// Anchor state `(0, 1)` as a flat index for [`map_g1_negative`].
pub const MAP_G1_NEGATIVE_ANCHOR: usize = 0;

/// Scalar chain with geometric tails: interior jumps `a_i = 2^{-i-2}` mapped
/// to displacements (`A_{-1} = a_0`, `A_n = a_{n+1}`), boundary rows
/// `b_i = 2^{-i-1}`, `B_{-1} = 3/4`, and `B_{-2} = 1/2` repeating below.
pub fn scalar_gig1() -> BlockSequences {
    let s = |v: f64| DenseMatrix::from_rows(&[vec![v]]).unwrap();
    let mut a = BTreeMap::new();
    a.insert(-1, s(0.25)); // a_0
    for n in 0..SCALAR_TAIL_TERMS as i64 {
        a.insert(n, s(0.5f64.powi(n as i32 + 3))); // a_{n+1}
    }
    let mut b = BTreeMap::new();
    for n in 0..SCALAR_TAIL_TERMS as i64 {
        b.insert(n, s(0.5f64.powi(n as i32 + 1)));
    }
    b.insert(-1, s(0.75));
    b.insert(-2, s(0.5));
    build_map_g1_rca(b, a).expect("built-in blocks are consistent")
}

/// Forcing function used with [`scalar_gig1`]: `g(i) = sqrt(i)`.
pub fn scalar_gig1_forcing() -> ForcingFunction {
    ForcingFunction::SqrtLevel
}

/// Anchor state 0 for [`scalar_gig1`].
pub const SCALAR_GIG1_ANCHOR: usize = 0;

/// Censor set used in the scalar experiments: the first two states.
pub const SCALAR_GIG1_CENSOR: [usize; 2] = [0, 1];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gig1::TruncationMode;

    #[test]
    fn builtin_models_have_stochastic_rows() {
        // rows whose upward reach stays inside the truncation sum to one
        let p = map_g1_negative().dense_truncation(12, TruncationMode::Plain);
        for r in 0..10 * 3 {
            let sum: f64 = p.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "row {r} sums to {sum}");
        }
        let p = scalar_gig1().dense_truncation(60, TruncationMode::Plain);
        for r in 0..20 {
            let sum: f64 = p.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn scalar_model_interior_masses() {
        let model = scalar_gig1();
        assert!((model.a_block(-1).unwrap().get(0, 0) - 0.25).abs() < 1e-15);
        assert!((model.a_block(0).unwrap().get(0, 0) - 0.125).abs() < 1e-15);
        assert!((model.b_block(-5).unwrap().get(0, 0) - 0.5).abs() < 1e-15);
    }
}

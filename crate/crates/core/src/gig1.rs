//! Structured solver for block Markov chains with repeating row families
//! `{A_i}` and boundary families `{B_i}`: the G-matrix fixed point, the
//! Psi/R measures, the blockwise fundamental matrix of the repeating part,
//! the stationary vector by level recursion, and the block solution of
//! Poisson's equation. Includes the specialization with a repeating
//! first-column block (queues where a negative arrival clears the system)
//! and the single-step-up specialization with geometric tails.

use std::collections::BTreeMap;

use crate::censor::Partition;
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};
use crate::poisson::{
    anchor_solution, apply_forcing, center_solution, ForcingFunction, PoissonSolution,
    SolveDiagnostics,
};

const ROW_SUM_TOL: f64 = 1e-8;

/// How to close the last retained levels when expanding to a finite matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationMode {
    /// Keep the truncated rows substochastic.
    Plain,
    /// Fold the missing mass of each row into a self-loop, producing a
    /// stochastic matrix (needed for simulation).
    AugmentSelfLoop,
}

/// The block families of a chain with repeating rows: `A_i` blocks for the
/// level-homogeneous part and `B_i` blocks for the boundary.
///
/// Missing indices are zero blocks. With `repeat_deepest_b` set, the most
/// negative stored `B` block repeats for all deeper levels (the
/// clear-the-system boundary column).
#[derive(Debug, Clone)]
pub struct BlockSequences {
    m: usize,
    a: BTreeMap<i64, DenseMatrix>,
    b: BTreeMap<i64, DenseMatrix>,
    repeat_deepest_b: bool,
}

impl BlockSequences {
    pub fn new(
        m: usize,
        a: BTreeMap<i64, DenseMatrix>,
        b: BTreeMap<i64, DenseMatrix>,
        repeat_deepest_b: bool,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("block size must be positive".into()));
        }
        for (name, map) in [("A", &a), ("B", &b)] {
            for (&i, blk) in map {
                if blk.rows() != m || blk.cols() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "{name}_{i} is {}x{}, expected {m}x{m}",
                        blk.rows(),
                        blk.cols()
                    )));
                }
                if blk.min_entry() < -1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "{name}_{i} has negative entries"
                    )));
                }
            }
        }
        let model = BlockSequences {
            m,
            a,
            b,
            repeat_deepest_b,
        };
        model.validate_row_sums()?;
        Ok(model)
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn repeats_deepest_b(&self) -> bool {
        self.repeat_deepest_b
    }

    pub fn a_blocks(&self) -> &BTreeMap<i64, DenseMatrix> {
        &self.a
    }

    pub fn b_blocks(&self) -> &BTreeMap<i64, DenseMatrix> {
        &self.b
    }

    pub fn a_block(&self, i: i64) -> Option<&DenseMatrix> {
        self.a.get(&i)
    }

    /// Boundary block for level displacement `i`; honors the repeating
    /// deepest block for `i` below the stored range.
    pub fn b_block(&self, i: i64) -> Option<&DenseMatrix> {
        if let Some(blk) = self.b.get(&i) {
            return Some(blk);
        }
        if self.repeat_deepest_b && i < 0 {
            if let Some((&deepest, blk)) = self.b.iter().next() {
                if deepest < 0 && i < deepest {
                    return Some(blk);
                }
            }
        }
        None
    }

    pub fn max_a_index(&self) -> i64 {
        self.a.keys().next_back().copied().unwrap_or(0)
    }

    pub fn min_a_index(&self) -> i64 {
        self.a.keys().next().copied().unwrap_or(0)
    }

    pub fn max_b_index(&self) -> i64 {
        self.b.keys().next_back().copied().unwrap_or(0)
    }

    pub fn min_b_index(&self) -> i64 {
        self.b.keys().next().copied().unwrap_or(0)
    }

    /// True when the repeating part only descends one level at a time.
    pub fn has_single_step_down(&self) -> bool {
        self.min_a_index() >= -1
    }

    /// True when the chain only ascends one level at a time.
    pub fn has_single_step_up(&self) -> bool {
        self.max_a_index() <= 1 && self.max_b_index() <= 1
    }

    fn zero_block(&self) -> DenseMatrix {
        DenseMatrix::zeros(self.m, self.m)
    }

    /// Row sums of every expanded level must be one: `sum_{i>=0} B_i` at
    /// level 0 and `B_{-j} + sum_{i>=-j+1} A_i` at level `j`. The interior
    /// family alone may be strictly substochastic (mass escaping through the
    /// boundary column) but never above one.
    fn validate_row_sums(&self) -> Result<()> {
        let mut level0 = DenseVector::zeros(self.m);
        for (&i, blk) in &self.b {
            if i >= 0 {
                level0 = level0.add(&blk.row_sums());
            }
        }
        for r in 0..self.m {
            if (level0[r] - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::StochasticityViolation(format!(
                    "level 0 row {r} sums to {}",
                    level0[r]
                )));
            }
        }
        if self.a.is_empty() && self.b.keys().all(|&i| i == 0) {
            // degenerate single-level chain: nothing beyond level 0
            return Ok(());
        }
        let depth = (-self.min_b_index()).max(-self.min_a_index() + 1).max(1) + 1;
        // suffix row masses of the A family, indexed by the lowest included i
        let min_a = self.min_a_index().min(-depth + 1);
        let top_a = self.max_a_index().max(0);
        let mut a_sums_from: BTreeMap<i64, DenseVector> = BTreeMap::new();
        let mut acc = DenseVector::zeros(self.m);
        for i in (min_a..=top_a).rev() {
            if let Some(blk) = self.a.get(&i) {
                acc = acc.add(&blk.row_sums());
            }
            a_sums_from.insert(i, acc.clone());
        }
        for j in 1..=depth {
            let b_row = self
                .b_block(-j)
                .map(|blk| blk.row_sums())
                .unwrap_or_else(|| DenseVector::zeros(self.m));
            let a_row = &a_sums_from[&(-j + 1)];
            for r in 0..self.m {
                let total = b_row[r] + a_row[r];
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::StochasticityViolation(format!(
                        "level {j} row {r} sums to {total}"
                    )));
                }
            }
        }
        for r in 0..self.m {
            let total = a_sums_from[&self.min_a_index()][r];
            if total > 1.0 + ROW_SUM_TOL {
                return Err(Error::StochasticityViolation(format!(
                    "interior row {r} sums to {total}"
                )));
            }
        }
        Ok(())
    }

    /// Finite expansion with levels `0..level_count`. Level 0 rows come from
    /// the `B_i`, level `l >= 1` rows from `B_{-l}` and the `A` family.
    pub fn dense_truncation(&self, level_count: usize, mode: TruncationMode) -> DenseMatrix {
        assert!(level_count >= 1, "need at least one level");
        let m = self.m;
        let n = level_count * m;
        let mut p = DenseMatrix::zeros(n, n);
        for level in 0..level_count {
            for col in 0..level_count {
                let blk = if level == 0 {
                    self.b_block(col as i64)
                } else if col == 0 {
                    self.b_block(-(level as i64))
                } else {
                    self.a_block(col as i64 - level as i64)
                };
                if let Some(blk) = blk {
                    p.set_block(level * m, col * m, blk);
                }
            }
        }
        if mode == TruncationMode::AugmentSelfLoop {
            for r in 0..n {
                let deficit = 1.0 - p.row(r).iter().sum::<f64>();
                if deficit > 0.0 {
                    p.set(r, r, p.get(r, r) + deficit);
                }
            }
        }
        p
    }
}

/// Assembles the chain with a repeating clear-the-system column:
/// level 0 rows `(B_0, B_1, ...)`, level 1 `(B_{-1}, A_0, A_1, ...)`, and
/// below that `(B_{-2}, 0, .., A_{-1}, A_0, ...)` with `B_{-2}` repeating.
pub fn build_map_g1_rca(
    b_blocks: BTreeMap<i64, DenseMatrix>,
    a_blocks: BTreeMap<i64, DenseMatrix>,
) -> Result<BlockSequences> {
    let m = b_blocks
        .values()
        .next()
        .map(DenseMatrix::rows)
        .ok_or_else(|| Error::InvalidInput("no boundary blocks given".into()))?;
    if let Some(&i) = a_blocks.keys().find(|&&i| i < -1) {
        return Err(Error::InvalidInput(format!(
            "interior must descend one level at a time, got A_{i}"
        )));
    }
    if let Some(&i) = b_blocks.keys().find(|&&i| i < -2) {
        return Err(Error::InvalidInput(format!(
            "boundary blocks below B_-2 are implied by repetition, got B_{i}"
        )));
    }
    BlockSequences::new(m, a_blocks, b_blocks, true)
}

/// Converged G matrix of the fixed point `G = sum_{n >= -1} A_n G^{n+1}`,
/// with the iteration count.
#[derive(Debug, Clone)]
pub struct GIteration {
    pub matrix: DenseMatrix,
    pub iterations: usize,
}

/// Iterates `G[k+1] = sum_{n >= -1} A_n (G[k])^{n+1}` from `G[0] = O` until
/// the step falls below `epsilon` in infinity norm. The iterates increase
/// entrywise towards the minimal nonnegative solution.
pub fn iterate_g(model: &BlockSequences, epsilon: f64, max_iter: usize) -> Result<GIteration> {
    if !model.has_single_step_down() {
        return Err(Error::InvalidInput(
            "G iteration needs a single-step-down interior (A_i = 0 for i < -1)".into(),
        ));
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let m = model.block_size();
    let top = model.max_a_index();
    let mut g = DenseMatrix::zeros(m, m);
    let mut delta = f64::INFINITY;
    for iteration in 1..=max_iter {
        // Horner evaluation of sum_n A_n G^{n+1} from the top power down.
        let mut acc = model
            .a_block(top)
            .cloned()
            .unwrap_or_else(|| model.zero_block());
        let mut n = top - 1;
        while n >= -1 {
            acc = acc.matmul(&g);
            if let Some(blk) = model.a_block(n) {
                acc = acc.add(blk);
            }
            n -= 1;
        }
        delta = acc.max_abs_diff(&g);
        g = acc;
        if delta < epsilon {
            return Ok(GIteration {
                matrix: g,
                iterations: iteration,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        delta,
    })
}

/// The censored-block measures of a single-step-down interior:
/// `Psi0 = sum_n A_n G^n`, `R_i = sum_{n>=i} A_n G^{n-i} (I - Psi0)^{-1}`,
/// and the boundary family `R_{0,i} = sum_{n>=i} B_n G^{n-i} (I - Psi0)^{-1}`.
#[derive(Debug, Clone)]
pub struct Mg1Measures {
    pub psi0: DenseMatrix,
    /// `(I - Psi0)^{-1}`, which is also the (1,1) fundamental block.
    pub fund: DenseMatrix,
    r: Vec<DenseMatrix>,
    r0: Vec<DenseMatrix>,
    m: usize,
}

impl Mg1Measures {
    /// `R_i` for `i >= 1`; `None` beyond the stored band means zero.
    pub fn r(&self, i: usize) -> Option<&DenseMatrix> {
        if i == 0 {
            return None;
        }
        self.r.get(i - 1)
    }

    /// `R_{0,i}` for `i >= 1`; `None` beyond the stored band means zero.
    pub fn r0(&self, i: usize) -> Option<&DenseMatrix> {
        if i == 0 {
            return None;
        }
        self.r0.get(i - 1)
    }

    pub fn r_band(&self) -> usize {
        self.r.len()
    }

    pub fn r0_band(&self) -> usize {
        self.r0.len()
    }

    pub fn block_size(&self) -> usize {
        self.m
    }
}

fn suffix_g_sums(
    blocks: impl Fn(i64) -> Option<DenseMatrix>,
    top: i64,
    g: &DenseMatrix,
    zero: &DenseMatrix,
) -> Vec<DenseMatrix> {
    // T_i = block_i + T_{i+1} G for i = top..1, returned as [T_1, .., T_top]
    if top < 1 {
        return Vec::new();
    }
    let mut suffix = blocks(top).unwrap_or_else(|| zero.clone());
    let mut stack = vec![suffix.clone()];
    for i in (1..top).rev() {
        suffix = suffix.matmul(g);
        if let Some(blk) = blocks(i) {
            suffix = suffix.add(&blk);
        }
        stack.push(suffix.clone());
    }
    stack.reverse();
    stack
}

pub fn mg1_measures(model: &BlockSequences, g: &DenseMatrix) -> Result<Mg1Measures> {
    let m = model.block_size();
    if g.rows() != m || g.cols() != m {
        return Err(Error::DimensionMismatch(format!(
            "G is {}x{}, expected {m}x{m}",
            g.rows(),
            g.cols()
        )));
    }
    let zero = model.zero_block();
    let top_a = model.max_a_index().max(0);
    // psi0 via Horner: sum_{n>=0} A_n G^n
    let mut psi0 = model
        .a_block(top_a)
        .cloned()
        .unwrap_or_else(|| zero.clone());
    for n in (0..top_a).rev() {
        psi0 = psi0.matmul(g);
        if let Some(blk) = model.a_block(n) {
            psi0 = psi0.add(blk);
        }
    }
    let fund =
        linalg::invert(&DenseMatrix::identity(m).sub(&psi0)).map_err(|_| Error::SingularPsi)?;

    let r = suffix_g_sums(|i| model.a_block(i).cloned(), top_a, g, &zero)
        .into_iter()
        .map(|t| t.matmul(&fund))
        .collect();
    let r0 = suffix_g_sums(
        |i| model.b_block(i).cloned(),
        model.max_b_index().max(0),
        g,
        &zero,
    )
    .into_iter()
    .map(|t| t.matmul(&fund))
    .collect();

    Ok(Mg1Measures {
        psi0,
        fund,
        r,
        r0,
        m,
    })
}

/// Blockwise fundamental matrix of the repeating part, `hatH_{ij}` for
/// `1 <= i, j <= level_count`, built by the three-case recursion with base
/// `hatH_11 = (I - Psi0)^{-1}`.
#[derive(Debug, Clone)]
pub struct HatH {
    m: usize,
    levels: usize,
    blocks: Vec<DenseMatrix>,
    /// Largest disagreement between the two diagonal recursions.
    pub diagonal_consistency: f64,
}

impl HatH {
    /// Block `(i, j)` with 1-based level indices.
    pub fn get(&self, i: usize, j: usize) -> &DenseMatrix {
        assert!((1..=self.levels).contains(&i) && (1..=self.levels).contains(&j));
        &self.blocks[(i - 1) * self.levels + (j - 1)]
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn block_size(&self) -> usize {
        self.m
    }
}

/// Recursion over explicit first-descent measures `G_i` and explicit `R_i`;
/// `g_measures[k-1]` holds `G_k` and `r_measures[k-1]` holds `R_k` (short
/// slices mean zero beyond the band).
pub fn hat_h_from_measures(
    fund: &DenseMatrix,
    g_measures: &[DenseMatrix],
    r_measures: &[DenseMatrix],
    level_count: usize,
) -> Result<HatH> {
    if level_count == 0 {
        return Err(Error::InvalidInput(
            "need at least one repeating level".into(),
        ));
    }
    let m = fund.rows();
    let zero = DenseMatrix::zeros(m, m);
    let g_of = |k: usize| g_measures.get(k - 1).unwrap_or(&zero);
    let r_of = |k: usize| r_measures.get(k - 1).unwrap_or(&zero);
    let mut blocks = vec![zero.clone(); level_count * level_count];
    let idx = |i: usize, j: usize| (i - 1) * level_count + (j - 1);
    let mut diag_gap: f64 = 0.0;
    for j in 1..=level_count {
        for i in 1..=level_count {
            let blk = if i > j {
                let mut acc = zero.clone();
                for n in 1..i {
                    let gk = g_of(i - n);
                    if gk.max_abs() > 0.0 {
                        acc = acc.add(&gk.matmul(&blocks[idx(n, j)]));
                    }
                }
                acc
            } else if i < j {
                let mut acc = zero.clone();
                for n in 1..j {
                    let rk = r_of(j - n);
                    if rk.max_abs() > 0.0 {
                        acc = acc.add(&blocks[idx(i, n)].matmul(rk));
                    }
                }
                acc
            } else {
                let mut acc = fund.clone();
                for n in 1..i {
                    let gk = g_of(i - n);
                    if gk.max_abs() > 0.0 {
                        acc = acc.add(&gk.matmul(&blocks[idx(n, j)]));
                    }
                }
                if i > 1 {
                    // the same block through the R-sums, as a cross-check
                    let mut alt = fund.clone();
                    for n in 1..j {
                        let rk = r_of(j - n);
                        if rk.max_abs() > 0.0 {
                            alt = alt.add(&blocks[idx(i, n)].matmul(rk));
                        }
                    }
                    diag_gap = diag_gap.max(acc.max_abs_diff(&alt));
                }
                acc
            };
            blocks[idx(i, j)] = blk;
        }
    }
    Ok(HatH {
        m,
        levels: level_count,
        blocks,
        diagonal_consistency: diag_gap,
    })
}

/// `hatH` for a single-step-down interior. The first entrance below a level
/// always lands one level down, so the descent measures are `G_1 = G` and
/// `G_i = O` for `i >= 2`.
pub fn hat_h_blocks(g: &DenseMatrix, measures: &Mg1Measures, level_count: usize) -> Result<HatH> {
    let r: Vec<DenseMatrix> = (1..=measures.r_band())
        .map(|i| measures.r(i).cloned().unwrap())
        .collect();
    hat_h_from_measures(&measures.fund, std::slice::from_ref(g), &r, level_count)
}

/// Level-0 censoring data computed from the structured blocks:
/// `P^(0) = B_0 + sum_m S_m B_{-m}` with `S_j = sum_n B_n hatH_{nj}`.
#[derive(Debug, Clone)]
pub struct Level0 {
    pub p0: DenseMatrix,
    /// Stationary vector of the censored chain at level 0.
    pub pi0_censored: DenseVector,
    /// Normalization constant tying the censored vector to the global one.
    pub c: f64,
    /// `S_j = sum_n B_n hatH_{nj}` for `j = 1..=level_count`.
    pub s: Vec<DenseMatrix>,
    /// Infinity norm of the deepest retained `S` block; a non-negligible
    /// value signals that the truncation level is too small.
    pub tail_summand_norm: f64,
}

pub fn censored_level0(model: &BlockSequences, hat_h: &HatH) -> Result<Level0> {
    let m = model.block_size();
    let levels = hat_h.levels();
    let n_top = (model.max_b_index().max(0) as usize).min(levels);
    let mut s = Vec::with_capacity(levels);
    for j in 1..=levels {
        let mut acc = DenseMatrix::zeros(m, m);
        for n in 1..=n_top {
            if let Some(b_n) = model.b_block(n as i64) {
                acc = acc.add(&b_n.matmul(hat_h.get(n, j)));
            }
        }
        s.push(acc);
    }
    let tail_summand_norm = s.last().map(DenseMatrix::infinity_norm).unwrap_or(0.0);
    let mut p0 = model
        .b_block(0)
        .cloned()
        .unwrap_or_else(|| DenseMatrix::zeros(m, m));
    for (idx, s_j) in s.iter().enumerate() {
        if let Some(b_down) = model.b_block(-(idx as i64) - 1) {
            p0 = p0.add(&s_j.matmul(b_down));
        }
    }
    let pi0_censored = linalg::stationary_vector(&p0)?;
    let e = DenseVector::ones(m);
    let mut mass = 1.0;
    for s_j in &s {
        mass += s_j.mul_vec(&e).dot(&pi0_censored);
    }
    Ok(Level0 {
        p0,
        pi0_censored,
        c: 1.0 / mass,
        s,
        tail_summand_norm,
    })
}

/// Stationary level vectors `pi_0 = c pi^(0)` and
/// `pi_n = pi_0 R_{0,n} + sum_{k=1}^{n-1} pi_k R_{n-k}` for `n < level_count`.
pub fn stationary_levels(
    measures: &Mg1Measures,
    level0: &Level0,
    level_count: usize,
    tail_mass_bound: f64,
) -> Result<(Vec<DenseVector>, f64)> {
    let mut pi_blocks = Vec::with_capacity(level_count);
    pi_blocks.push(level0.pi0_censored.scale(level0.c));
    for n in 1..level_count {
        let mut row = match measures.r0(n) {
            Some(r0n) => r0n.premul_vec(&pi_blocks[0]),
            None => DenseVector::zeros(measures.block_size()),
        };
        for k in 1..n {
            if let Some(rk) = measures.r(n - k) {
                row = row.add(&rk.premul_vec(&pi_blocks[k]));
            }
        }
        pi_blocks.push(row);
    }
    let total: f64 = pi_blocks.iter().map(DenseVector::sum).sum();
    let deficit = 1.0 - total;
    if deficit > tail_mass_bound {
        return Err(Error::TailMassTooLarge {
            deficit,
            bound: tail_mass_bound,
        });
    }
    Ok((pi_blocks, deficit))
}

/// Grid of `m x m` blocks indexed by level pairs `(i, j)`, `0 <= i, j < levels`.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    m: usize,
    levels: usize,
    blocks: Vec<DenseMatrix>,
}

impl BlockMatrix {
    pub fn get(&self, i: usize, j: usize) -> &DenseMatrix {
        assert!(i < self.levels && j < self.levels);
        &self.blocks[i * self.levels + j]
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.m * self.levels;
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..self.levels {
            for j in 0..self.levels {
                out.set_block(i * self.m, j * self.m, self.get(i, j));
            }
        }
        out
    }
}

/// Block solution of Poisson's equation for the structured chain censored on
/// level 0:
///
/// * `X_00 = (I - P^(0))^# (I - (I + sum_m S_m) e pi_0^T)`
/// * `X_0j = X_00 S_j`
/// * `X_i0 = U_i X_00 - v_i pi_0^T` with `U_i = sum_m hatH_im B_{-m}` and
///   `v_i = sum_m hatH_im e`
/// * `X_ij = U_i X_0j + hatH_ij - v_i pi_j^T`
pub fn xtilde_blocks(
    model: &BlockSequences,
    level0: &Level0,
    hat_h: &HatH,
    pi_blocks: &[DenseVector],
) -> Result<BlockMatrix> {
    let m = model.block_size();
    let levels = pi_blocks.len();
    if levels == 0 || hat_h.levels() + 1 < levels {
        return Err(Error::InvalidInput(format!(
            "need hatH blocks for {} repeating levels, have {}",
            levels.saturating_sub(1),
            hat_h.levels()
        )));
    }
    let w = linalg::group_inverse(&level0.p0, &level0.pi0_censored)?;

    let e = DenseVector::ones(m);
    let mut total_weight = e.clone(); // (I + sum_m S_m) e
    for s_j in &level0.s {
        total_weight = total_weight.add(&s_j.mul_vec(&e));
    }
    let x00 =
        w.matmul(&DenseMatrix::identity(m).sub(&DenseMatrix::outer(&total_weight, &pi_blocks[0])));

    let mut blocks = vec![DenseMatrix::zeros(m, m); levels * levels];
    blocks[0] = x00.clone();
    for j in 1..levels {
        blocks[j] = x00.matmul(&level0.s[j - 1]);
    }
    for i in 1..levels {
        let mut u_i = DenseMatrix::zeros(m, m);
        let mut v_i = DenseVector::zeros(m);
        for mm in 1..=hat_h.levels() {
            let h_im = hat_h.get(i, mm);
            if let Some(b_down) = model.b_block(-(mm as i64)) {
                u_i = u_i.add(&h_im.matmul(b_down));
            }
            v_i = v_i.add(&h_im.mul_vec(&e));
        }
        blocks[i * levels] = u_i
            .matmul(&x00)
            .sub(&DenseMatrix::outer(&v_i, &pi_blocks[0]));
        for j in 1..levels {
            let x0j = blocks[j].clone();
            let blk = u_i
                .matmul(&x0j)
                .add(hat_h.get(i, j))
                .sub(&DenseMatrix::outer(&v_i, &pi_blocks[j]));
            blocks[i * levels + j] = blk;
        }
    }
    Ok(BlockMatrix { m, levels, blocks })
}

/// Concatenates level vectors into one flat vector.
pub fn assemble_levels(pi_blocks: &[DenseVector]) -> DenseVector {
    let mut out = Vec::new();
    for blk in pi_blocks {
        out.extend_from_slice(blk.as_slice());
    }
    DenseVector::from_vec(out)
}

/// Residual of Poisson's equation on the finite expansion, measured only on
/// rows whose truncated transition row is complete (sums to one).
pub fn truncated_residual(
    model: &BlockSequences,
    x: &DenseMatrix,
    pi: &DenseVector,
    level_count: usize,
) -> f64 {
    let p = model.dense_truncation(level_count, TruncationMode::Plain);
    let n = p.rows();
    let e_pi = DenseMatrix::outer(&DenseVector::ones(n), pi);
    let err = x
        .sub(&p.matmul(x))
        .sub(&DenseMatrix::identity(n).sub(&e_pi));
    let mut worst: f64 = 0.0;
    for r in 0..n {
        if (p.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9 {
            worst = worst.max(err.row(r).iter().map(|x| x.abs()).sum());
        }
    }
    worst
}

/// Everything the structured pipeline produces besides the assembled
/// solution: the G matrix, measures, fundamental blocks, censored level-0
/// chain, normalizer, level vectors, and the solution blocks.
#[derive(Debug, Clone)]
pub struct Gig1Solution {
    pub g_matrix: DenseMatrix,
    pub g_iterations: usize,
    pub measures: Mg1Measures,
    pub hat_h: HatH,
    pub level0: Level0,
    pub pi_blocks: Vec<DenseVector>,
    pub x_blocks: BlockMatrix,
    pub tail_mass: f64,
}

/// Output of the end-to-end pipeline: the structured intermediates plus the
/// assembled dense solution with `D`, `K`, and forcing applications.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub structured: Gig1Solution,
    pub solution: PoissonSolution,
}

/// End-to-end pipeline for a single-step-down model: G iteration, measures,
/// `hatH`, level-0 censoring, stationary recursion, block solution, and
/// (when a forcing function is given) `f_D` and `f_K`.
pub fn algorithm1(
    model: &BlockSequences,
    forcing: Option<&ForcingFunction>,
    config: &SolverConfig,
) -> Result<PipelineOutput> {
    let g = iterate_g(model, config.epsilon, config.max_iterations)?;
    let measures = mg1_measures(model, &g.matrix)?;
    let level_count = config.max_levels + 1;
    let hat_levels = config.max_levels.max(1); // repeating levels 1..=max_levels
    let hat_h = hat_h_blocks(&g.matrix, &measures, hat_levels)?;
    let level0 = censored_level0(model, &hat_h)?;
    let (pi_blocks, tail_mass) =
        stationary_levels(&measures, &level0, level_count, config.tail_mass_bound)?;
    let x_blocks = xtilde_blocks(model, &level0, &hat_h, &pi_blocks)?;

    let pi = assemble_levels(&pi_blocks);
    let x = x_blocks.to_dense();
    let residual_norm = truncated_residual(model, &x, &pi, level_count);
    if residual_norm > config.residual_tol {
        return Err(Error::ResidualTooLarge {
            norm: residual_norm,
            tol: config.residual_tol,
        });
    }

    let d = center_solution(&x, &pi);
    let anchor = config.anchor.unwrap_or(0);
    if anchor >= x.rows() {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor} beyond truncated states"
        )));
    }
    let k = anchor_solution(&x, anchor);

    let (f_d, f_k, pi_abs_g) = match forcing {
        Some(forcing) => {
            let g_values = forcing.values(model.block_size(), x.rows())?;
            let fd = apply_forcing(&d, &g_values, &pi)?;
            let fk = apply_forcing(&k, &g_values, &pi)?;
            (Some(fd.values), Some(fk.values), Some(fd.pi_abs_g))
        }
        None => (None, None, None),
    };

    let solution = PoissonSolution {
        pi,
        x_tilde: x,
        d: Some(d),
        k: Some(k),
        anchor: Some(anchor),
        f_d,
        f_k,
        pi_abs_g,
        residual_norm,
        diagnostics: SolveDiagnostics {
            g_iterations: g.iterations,
            truncation_level: config.max_levels,
            tail_mass,
        },
    };
    Ok(PipelineOutput {
        structured: Gig1Solution {
            g_matrix: g.matrix,
            g_iterations: g.iterations,
            measures,
            hat_h,
            level0,
            pi_blocks,
            x_blocks,
            tail_mass,
        },
        solution,
    })
}

/// Solution of the single-step-up (geometric tail) specialization: `R` from
/// the coupled fixed point `R = A_1 (I - Psi0)^{-1}` with
/// `Psi0 = sum_k R^k A_{-k}`, level vectors `pi_j = pi_1 R^{j-1}`, and the
/// closed-form level-0 solution rows.
#[derive(Debug, Clone)]
pub struct Gim1Solution {
    pub r_matrix: DenseMatrix,
    pub psi0: DenseMatrix,
    pub iterations: usize,
    pub spectral_radius: f64,
    pub pi_blocks: Vec<DenseVector>,
    /// `X_0j` blocks for `j = 0..level_count`.
    pub x0_blocks: Vec<DenseMatrix>,
    pub p0: DenseMatrix,
    pub pi0_censored: DenseVector,
    pub c: f64,
}

pub fn gim1_solve(model: &BlockSequences, config: &SolverConfig) -> Result<Gim1Solution> {
    if !model.has_single_step_up() {
        return Err(Error::InvalidInput(
            "geometric-tail solver needs A_i = B_i = 0 for i >= 2".into(),
        ));
    }
    let m = model.block_size();
    let a1 = model
        .a_block(1)
        .cloned()
        .ok_or_else(|| Error::InvalidInput("missing A_1 block".into()))?;
    let depth = (-model.min_a_index()).max(0);

    let psi0_of = |r: &DenseMatrix| -> DenseMatrix {
        // sum_{k>=0} R^k A_{-k} by Horner from the deepest block
        let mut acc = model
            .a_block(-depth)
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(m, m));
        for k in (0..depth).rev() {
            acc = r.matmul(&acc);
            if let Some(blk) = model.a_block(-k) {
                acc = acc.add(blk);
            }
        }
        acc
    };

    let mut r = DenseMatrix::zeros(m, m);
    let mut psi0 = psi0_of(&r);
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        let fund =
            linalg::invert(&DenseMatrix::identity(m).sub(&psi0)).map_err(|_| Error::SingularPsi)?;
        let next = a1.matmul(&fund);
        let delta = next.max_abs_diff(&r);
        r = next;
        psi0 = psi0_of(&r);
        iterations = it;
        if delta < config.epsilon {
            break;
        }
        if it == config.max_iterations {
            return Err(Error::NoConvergence {
                iterations: it,
                delta,
            });
        }
    }
    let rho = spectral_radius(&r);
    if rho >= 1.0 {
        return Err(Error::UnstableR { rho });
    }
    let fund =
        linalg::invert(&DenseMatrix::identity(m).sub(&psi0)).map_err(|_| Error::SingularPsi)?;
    let geo = linalg::invert(&DenseMatrix::identity(m).sub(&r))?; // (I - R)^{-1}

    let b0 = model
        .b_block(0)
        .cloned()
        .unwrap_or_else(|| DenseMatrix::zeros(m, m));
    let b1 = model
        .b_block(1)
        .cloned()
        .unwrap_or_else(|| DenseMatrix::zeros(m, m));
    // P^(0) = B_0 + sum_m B_1 hatH_1m B_{-m} with hatH_1m = fund R^{m-1}
    let level_count = config.max_levels + 1;
    let depth_b = (-model.min_b_index()).max(0) as usize;
    let mut p0 = b0;
    let mut h1m = b1.matmul(&fund);
    for mm in 1..=depth_b.max(level_count) {
        if let Some(b_down) = model.b_block(-(mm as i64)) {
            p0 = p0.add(&h1m.matmul(b_down));
        }
        h1m = h1m.matmul(&r);
    }
    let pi0_censored = linalg::stationary_vector(&p0)?;
    let e = DenseVector::ones(m);
    let up_mass = b1.matmul(&fund).matmul(&geo).mul_vec(&e);
    let c = 1.0 / (1.0 + pi0_censored.dot(&up_mass));
    let pi0 = pi0_censored.scale(c);
    let pi1 = b1.matmul(&fund).premul_vec(&pi0);

    let mut pi_blocks = vec![pi0.clone(), pi1];
    for _ in 2..level_count {
        let prev = pi_blocks.last().unwrap();
        pi_blocks.push(r.premul_vec(prev));
    }
    pi_blocks.truncate(level_count);

    let w = linalg::group_inverse(&p0, &pi0_censored)?;
    let weight = e.add(&b1.matmul(&fund).matmul(&geo).mul_vec(&e));
    let x00 = w.matmul(&DenseMatrix::identity(m).sub(&DenseMatrix::outer(&weight, &pi0)));
    // X_0j = W (B_1 fund (I - geo e pi_1^T) - e pi_1^T) R^{j-1}
    let pi1 = &pi_blocks[1.min(pi_blocks.len() - 1)];
    let geo_e = geo.mul_vec(&e);
    let inner = b1
        .matmul(&fund)
        .matmul(&DenseMatrix::identity(m).sub(&DenseMatrix::outer(&geo_e, pi1)))
        .sub(&DenseMatrix::outer(&e, pi1));
    let base = w.matmul(&inner);
    let mut x0_blocks = vec![x00];
    let mut power = DenseMatrix::identity(m);
    for _ in 1..level_count {
        x0_blocks.push(base.matmul(&power));
        power = power.matmul(&r);
    }
    Ok(Gim1Solution {
        r_matrix: r,
        psi0,
        iterations,
        spectral_radius: rho,
        pi_blocks,
        x0_blocks,
        p0,
        pi0_censored,
        c,
    })
}

/// Spectral radius of a nonnegative matrix by power iteration on the ones
/// vector; deterministic and accurate enough for the stability test.
fn spectral_radius(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut v = DenseVector::ones(n);
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = m.mul_vec(&v);
        let norm = w.max_abs();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.scale(1.0 / norm);
    }
    lambda
}

/// Partition selecting the first `levels_in_a` levels of a chain expanded to
/// `level_count` levels of `m` phases.
pub fn level_partition(m: usize, levels_in_a: usize, level_count: usize) -> Result<Partition> {
    Partition::leading(levels_in_a * m, level_count * m)
}

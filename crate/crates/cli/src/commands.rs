//! Implementations of the CLI commands. Data goes to CSV files, diagnostics
//! to standard error.

use markov_poisson::censor::{censor_dtmc, stationary_via_censoring, Partition};
use markov_poisson::ctmc::{censor_ctmc, residual_ctmc, stationary_ctmc, xtilde_ctmc};
use markov_poisson::gig1::{self, TruncationMode};
use markov_poisson::linalg::{stationary_vector, DenseMatrix};
use markov_poisson::oracle::{self, SimulationConfig};
use markov_poisson::poisson::{self, anchor_solution, apply_forcing, ForcingFunction};
use markov_poisson::{Error, SolverConfig};

use crate::model::{LoadedModel, ModelKind};
use crate::output::{fmt_value, OutputWriter};

type Diag = Vec<(String, String)>;

fn diag(pairs: &mut Diag, key: &str, value: impl std::fmt::Display) {
    pairs.push((key.to_string(), value.to_string()));
}

fn diag_num(pairs: &mut Diag, key: &str, value: f64) {
    pairs.push((key.to_string(), fmt_value(value)));
}

fn dense_partition(loaded: &LoadedModel, n: usize) -> Result<Partition, Error> {
    Partition::new(&loaded.censor_set, n)
}

fn require_blocks(loaded: &LoadedModel) -> Result<&gig1::BlockSequences, Error> {
    loaded
        .blocks
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("command needs a block-structured model".into()))
}

fn forcing_or_default(loaded: &LoadedModel) -> ForcingFunction {
    loaded.forcing.clone().unwrap_or(ForcingFunction::SqrtLevel)
}

/// Geometric-tail route for models declared `gim1` and for any block model
/// whose interior descends more than one level at a time.
fn use_geometric_route(loaded: &LoadedModel) -> bool {
    loaded.kind == ModelKind::Gim1
        || loaded
            .blocks
            .as_ref()
            .is_some_and(|m| !m.has_single_step_down())
}

/// `stationary`: the stationary vector by the route matching the model kind.
pub fn stationary(loaded: &LoadedModel, writer: &OutputWriter) -> Result<(), Error> {
    let mut pairs = Diag::new();
    let pi = match loaded.kind {
        ModelKind::DtmcDense => {
            let p = loaded.dense.as_ref().unwrap();
            let part = dense_partition(loaded, p.rows())?;
            stationary_via_censoring(p, &part)?
        }
        ModelKind::CtmcDense => stationary_ctmc(loaded.generator.as_ref().unwrap())?,
        _ => {
            let model = require_blocks(loaded)?;
            if use_geometric_route(loaded) {
                let out = gig1::gim1_solve(model, &loaded.config)?;
                diag(&mut pairs, "r_iterations", out.iterations);
                diag_num(&mut pairs, "spectral_radius_R", out.spectral_radius);
                diag_num(&mut pairs, "normalizer_c", out.c);
                gig1::assemble_levels(&out.pi_blocks)
            } else {
                let out = gig1::algorithm1(model, None, &loaded.config)?;
                diag(&mut pairs, "g_iterations", out.structured.g_iterations);
                diag_num(&mut pairs, "normalizer_c", out.structured.level0.c);
                diag_num(&mut pairs, "tail_mass", out.structured.tail_mass);
                out.solution.pi
            }
        }
    };
    writer.write_pi(&pi, loaded.block_size)?;
    diag(&mut pairs, "states", pi.len());
    writer.write_diagnostics(&pairs)?;
    eprintln!(
        "stationary vector over {} states -> {}",
        pi.len(),
        writer.dir().display()
    );
    Ok(())
}

/// `poisson`: the solution matrix and its residual.
pub fn poisson_cmd(loaded: &LoadedModel, writer: &OutputWriter) -> Result<(), Error> {
    let mut pairs = Diag::new();
    match loaded.kind {
        ModelKind::DtmcDense => {
            let p = loaded.dense.as_ref().unwrap();
            let part = dense_partition(loaded, p.rows())?;
            let pi = stationary_via_censoring(p, &part)?;
            let x = poisson::solve_xtilde(p, &part, &pi, &loaded.config)?;
            diag_num(&mut pairs, "residual", poisson::residual(p, &x, &pi));
            writer.write_pi(&pi, loaded.block_size)?;
            writer.write_matrix(&x)?;
        }
        ModelKind::CtmcDense => {
            let gen = loaded.generator.as_ref().unwrap();
            let part = dense_partition(loaded, gen.order())?;
            let pi = stationary_ctmc(gen)?;
            let x = xtilde_ctmc(gen, &part, &pi, &loaded.config)?;
            diag_num(&mut pairs, "residual", residual_ctmc(gen.matrix(), &x, &pi));
            writer.write_pi(&pi, loaded.block_size)?;
            writer.write_matrix(&x)?;
        }
        _ => {
            let model = require_blocks(loaded)?;
            if use_geometric_route(loaded) {
                // the geometric-tail route exposes the level-0 block row
                let out = gig1::gim1_solve(model, &loaded.config)?;
                let refs: Vec<&DenseMatrix> = out.x0_blocks.iter().collect();
                let row = DenseMatrix::hstack(&refs);
                diag(&mut pairs, "r_iterations", out.iterations);
                diag(&mut pairs, "matrix", "level-0 block row of the solution");
                writer.write_pi(&gig1::assemble_levels(&out.pi_blocks), loaded.block_size)?;
                writer.write_matrix(&row)?;
            } else {
                let out = gig1::algorithm1(model, None, &loaded.config)?;
                diag(&mut pairs, "g_iterations", out.structured.g_iterations);
                diag_num(&mut pairs, "residual", out.solution.residual_norm);
                diag_num(&mut pairs, "tail_mass", out.structured.tail_mass);
                writer.write_pi(&out.solution.pi, loaded.block_size)?;
                writer.write_matrix(&out.solution.x_tilde)?;
            }
        }
    }
    writer.write_diagnostics(&pairs)?;
    eprintln!("solution written -> {}", writer.dir().display());
    Ok(())
}

/// `deviation`: the centered solution `D` (aperiodic chains only).
pub fn deviation(loaded: &LoadedModel, writer: &OutputWriter) -> Result<(), Error> {
    let mut pairs = Diag::new();
    let (d, pi) = match loaded.kind {
        ModelKind::DtmcDense => {
            let p = loaded.dense.as_ref().unwrap();
            let part = dense_partition(loaded, p.rows())?;
            let pi = stationary_via_censoring(p, &part)?;
            let d = poisson::deviation_matrix(p, &part, &pi, &loaded.config)?;
            (d, pi)
        }
        ModelKind::CtmcDense => {
            return Err(Error::InvalidInput(
                "deviation and kmatrix are defined for discrete-time models".into(),
            ))
        }
        _ => {
            let model = require_blocks(loaded)?;
            let out = gig1::algorithm1(model, None, &loaded.config)?;
            diag(&mut pairs, "g_iterations", out.structured.g_iterations);
            (out.solution.d.unwrap(), out.solution.pi)
        }
    };
    diag(&mut pairs, "matrix", "D");
    diag_num(&mut pairs, "pi_D_norm", d.premul_vec(&pi).max_abs());
    writer.write_pi(&pi, loaded.block_size)?;
    writer.write_matrix(&d)?;
    writer.write_diagnostics(&pairs)?;
    eprintln!("deviation matrix written -> {}", writer.dir().display());
    Ok(())
}

/// `kmatrix`: the solution with a zero anchor row. Requires an anchor.
pub fn kmatrix(loaded: &LoadedModel, writer: &OutputWriter) -> Result<(), Error> {
    let anchor = loaded
        .anchor
        .ok_or_else(|| Error::InvalidInput("kmatrix needs --anchor or a model anchor".into()))?;
    let mut pairs = Diag::new();
    let (k, pi) = match loaded.kind {
        ModelKind::DtmcDense => {
            let p = loaded.dense.as_ref().unwrap();
            let part = dense_partition(loaded, p.rows())?;
            let pi = stationary_via_censoring(p, &part)?;
            let k = poisson::additive_matrix(p, &part, &pi, anchor, &loaded.config)?;
            (k, pi)
        }
        ModelKind::CtmcDense => {
            return Err(Error::InvalidInput(
                "deviation and kmatrix are defined for discrete-time models".into(),
            ))
        }
        _ => {
            let model = require_blocks(loaded)?;
            let out = gig1::algorithm1(model, None, &loaded.config)?;
            diag(&mut pairs, "g_iterations", out.structured.g_iterations);
            (out.solution.k.unwrap(), out.solution.pi)
        }
    };
    diag(&mut pairs, "matrix", "K");
    diag(&mut pairs, "anchor", anchor);
    writer.write_pi(&pi, loaded.block_size)?;
    writer.write_matrix(&k)?;
    writer.write_diagnostics(&pairs)?;
    eprintln!("anchored solution written -> {}", writer.dir().display());
    Ok(())
}

/// `solve`: the full pipeline with forcing applications `f_D` and `f_K`.
pub fn solve(loaded: &LoadedModel, writer: &OutputWriter) -> Result<(), Error> {
    let forcing = loaded
        .forcing
        .clone()
        .ok_or_else(|| Error::InvalidInput("solve needs a forcing function in the model".into()))?;
    let mut pairs = Diag::new();
    match loaded.kind {
        ModelKind::CtmcDense => Err(Error::InvalidInput(
            "solve emits f_D/f_K, which are defined for discrete-time models; use poisson".into(),
        )),
        ModelKind::DtmcDense => {
            let p = loaded.dense.as_ref().unwrap();
            let part = dense_partition(loaded, p.rows())?;
            let anchor = loaded.anchor.unwrap_or(0);
            let pi = stationary_via_censoring(p, &part)?;
            let x = poisson::solve_xtilde(p, &part, &pi, &loaded.config)?;
            let d = poisson::deviation_matrix(p, &part, &pi, &loaded.config)?;
            let k = poisson::additive_matrix(p, &part, &pi, anchor, &loaded.config)?;
            let g = forcing.values(loaded.block_size, p.rows())?;
            let fd = apply_forcing(&d, &g, &pi)?;
            let fk = apply_forcing(&k, &g, &pi)?;
            diag_num(&mut pairs, "residual", poisson::residual(p, &x, &pi));
            diag_num(&mut pairs, "pi_abs_g", fd.pi_abs_g);
            diag(&mut pairs, "anchor", anchor);
            writer.write_pi(&pi, loaded.block_size)?;
            writer.write_matrix(&x)?;
            writer.write_f_values(&fd.values, &fk.values, loaded.block_size)?;
            writer.write_diagnostics(&pairs)?;
            eprintln!("solution bundle written -> {}", writer.dir().display());
            Ok(())
        }
        _ => {
            let model = require_blocks(loaded)?;
            let out = gig1::algorithm1(model, Some(&forcing), &loaded.config)?;
            diag(&mut pairs, "g_iterations", out.structured.g_iterations);
            diag_num(&mut pairs, "residual", out.solution.residual_norm);
            diag_num(&mut pairs, "tail_mass", out.structured.tail_mass);
            diag_num(&mut pairs, "normalizer_c", out.structured.level0.c);
            diag_num(&mut pairs, "pi_abs_g", out.solution.pi_abs_g.unwrap());
            diag(&mut pairs, "anchor", out.solution.anchor.unwrap());
            if out.structured.level0.tail_summand_norm > 1e-10 {
                eprintln!(
                    "warning: last retained boundary summand has norm {:.2e}; consider more levels",
                    out.structured.level0.tail_summand_norm
                );
            }
            writer.write_pi(&out.solution.pi, loaded.block_size)?;
            writer.write_matrix(&out.solution.x_tilde)?;
            writer.write_f_values(
                out.solution.f_d.as_ref().unwrap(),
                out.solution.f_k.as_ref().unwrap(),
                loaded.block_size,
            )?;
            writer.write_diagnostics(&pairs)?;
            eprintln!("solution bundle written -> {}", writer.dir().display());
            Ok(())
        }
    }
}

/// `export`: write the model document back out (round-trip safe).
pub fn export(json: &str, writer: &OutputWriter) -> Result<(), Error> {
    let path = writer.write_model(json)?;
    eprintln!("model written -> {}", path.display());
    Ok(())
}

struct Checker {
    failures: usize,
}

impl Checker {
    fn check(&mut self, name: &str, value: f64, bound: f64) {
        if value.is_finite() && value <= bound {
            eprintln!("ok   {name}: {value:.3e} <= {bound:.1e}");
        } else {
            eprintln!("FAIL {name}: {value:.3e} > {bound:.1e}");
            self.failures += 1;
        }
    }

    fn check_bool(&mut self, name: &str, pass: bool, detail: &str) {
        if pass {
            eprintln!("ok   {name}: {detail}");
        } else {
            eprintln!("FAIL {name}: {detail}");
            self.failures += 1;
        }
    }
}

/// `verify`: oracle cross-checks on a dense snapshot of the model.
/// Returns the number of failed checks.
pub fn verify(loaded: &LoadedModel, seed: u64) -> Result<usize, Error> {
    let mut checker = Checker { failures: 0 };
    if let Some(gen) = &loaded.generator {
        let part = dense_partition(loaded, gen.order())?;
        let pi = stationary_ctmc(gen)?;
        let x = xtilde_ctmc(gen, &part, &pi, &loaded.config)?;
        checker.check("ctmc residual", residual_ctmc(gen.matrix(), &x, &pi), 1e-8);
        let censored = censor_ctmc(gen, &part)?;
        checker.check(
            "censored generator row sums",
            censored.matrix().row_sums().max_abs(),
            1e-8,
        );
        if checker.failures > 0 {
            return Ok(checker.failures);
        }
        return Ok(0);
    }

    // dense snapshot for the oracle battery
    let (p, block_size) = match loaded.kind {
        ModelKind::DtmcDense => (loaded.dense.clone().unwrap(), loaded.block_size),
        _ => {
            let model = require_blocks(loaded)?;
            let levels = loaded.config.max_levels.min(30) + 1;
            (
                model.dense_truncation(levels, TruncationMode::AugmentSelfLoop),
                model.block_size(),
            )
        }
    };
    let n = p.rows();
    let anchor = loaded.anchor.unwrap_or(0).min(n - 1);
    let pi = stationary_vector(&p)?;
    let config = SolverConfig {
        residual_tol: 1e-6,
        ..loaded.config.clone()
    };

    // censoring consistency across two different censor sets
    let part_a = Partition::new(&[anchor], n)?;
    let second = loaded
        .censor_set
        .iter()
        .copied()
        .filter(|&s| s < n)
        .collect::<Vec<_>>();
    let part_b = if second.is_empty() {
        Partition::new(&[n - 1], n)?
    } else {
        Partition::new(&second, n)?
    };
    let via_a = stationary_via_censoring(&p, &part_a)?;
    let via_b = stationary_via_censoring(&p, &part_b)?;
    checker.check(
        "stationary, two censor sets agree",
        via_a.max_abs_diff(&via_b),
        1e-8,
    );
    checker.check("stationary vs direct solve", via_a.max_abs_diff(&pi), 1e-8);

    let x = poisson::solve_xtilde(&p, &part_a, &pi, &config)?;
    checker.check("poisson residual", poisson::residual(&p, &x, &pi), 1e-8);

    let k = anchor_solution(&x, anchor);
    let k_oracle = oracle::k_by_taboo(&p, &pi, anchor)?;
    checker.check(
        "anchored solution vs taboo kernel",
        k.max_abs_diff(&k_oracle),
        1e-8,
    );

    let stats = oracle::taboo_stats(&p, anchor)?;
    checker.check(
        "first-return identity at the anchor",
        (pi[anchor] * stats.expected_return[anchor] - 1.0).abs(),
        1e-8,
    );

    if poisson::chain_period(&p) == 1 {
        let d = poisson::deviation_matrix(&p, &part_a, &pi, &config)?;
        let d_series = oracle::deviation_by_series(&p, &pi, 1e-7)?;
        checker.check(
            "deviation matrix vs series oracle",
            d.max_abs_diff(&d_series),
            1e-5,
        );
        checker.check("pi^T D", d.premul_vec(&pi).max_abs(), 1e-8);
    } else {
        checker.check_bool("deviation matrix", true, "skipped (periodic chain)");
    }

    // Monte-Carlo containment for the additive functional
    let g = forcing_or_default(loaded).values(block_size, n)?;
    let start = 3.min(n - 1);
    let exact = k_oracle.mul_vec(&g);
    let sim_cfg = SimulationConfig {
        path_count: 4000,
        seed,
        ..Default::default()
    };
    let (estimate, half_width) = oracle::simulate_additive(&p, &g, anchor, start, &pi, &sim_cfg)?;
    checker.check_bool(
        "simulation interval covers the exact value",
        (estimate - exact[start]).abs() <= half_width,
        &format!("{estimate:.4} +- {half_width:.4} vs {:.4}", exact[start]),
    );

    let cen = censor_dtmc(&p, &part_b)?;
    checker.check(
        "censored chain stochastic",
        (0..cen.p_cens.rows())
            .map(|r| (cen.p_cens.row(r).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max),
        1e-8,
    );

    Ok(checker.failures)
}

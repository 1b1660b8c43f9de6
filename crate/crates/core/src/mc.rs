//! Monte-Carlo draws of squared `L₂` norms through the Karhunen–Loève
//! expansion `‖X‖² = Σ λ_i ξ_i²`.
//!
//! Replicates are split into blocks of `block` draws. Block `b` uses a
//! ChaCha8 generator seeded with `seed` on stream `b`, so the draw sequence
//! depends only on `(seed, block, reps, eigenvalues)` and not on the thread
//! count. Normals come from the inverse normal CDF applied to uniforms on
//! the open unit interval.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::opeval::eval;
use crate::opexpr::OperatorExpr;
use crate::spectral::{check_psd, sym_eig, sym_eigenvalues};

pub const MIN_REPS: usize = 100;
pub const DEFAULT_BLOCK: usize = 4096;
/// Largest truncation for which paths are synthesized on the grid.
pub const MAX_PATH_MODES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    pub trunc_m: usize,
    pub block: usize,
}

impl McConfig {
    pub fn new(reps: usize, seed: u64, trunc_m: usize) -> Self {
        McConfig {
            reps,
            seed,
            trunc_m,
            block: DEFAULT_BLOCK,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < MIN_REPS {
            return Err(Error::Argument(format!(
                "at least {MIN_REPS} replicates are required, got {}",
                self.reps
            )));
        }
        if self.block == 0 {
            return Err(Error::Argument("block size must be positive".into()));
        }
        if self.trunc_m == 0 {
            return Err(Error::Argument("at least one mode is required".into()));
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<(u64, usize)> {
        (0..self.reps.div_ceil(self.block))
            .map(|b| (b as u64, self.block.min(self.reps - b * self.block)))
            .collect()
    }
}

/// Standard normal stream of one block.
pub struct NormalStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NormalStream {
            rng,
            normal: Normal::standard(),
        }
    }

    /// Uniform on `(0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }
}

/// Draws of `Σ_{i ≤ trunc_m} λ_i ξ_i²` for the given eigenvalues.
pub fn sample_quadratic_form(eigenvalues: &[f64], cfg: &McConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.trunc_m > eigenvalues.len() {
        return Err(Error::Argument(format!(
            "{} modes requested but only {} eigenvalues available",
            cfg.trunc_m,
            eigenvalues.len()
        )));
    }
    let lam = &eigenvalues[..cfg.trunc_m];
    let blocks: Vec<Vec<f64>> = cfg
        .blocks()
        .into_par_iter()
        .map(|(b, len)| {
            let mut s = NormalStream::new(cfg.seed, b);
            (0..len)
                .map(|_| {
                    lam.iter()
                        .map(|l| {
                            let z = s.next_normal();
                            l * z * z
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(blocks.concat())
}

/// Eigenvalues of `e` on the grid, descending, with values below rounding set
/// to zero; every grid eigenpair counts as available.
fn grid_eigenvalues(e: &OperatorExpr, d: usize, n: usize) -> Result<Vec<f64>> {
    let op = eval(e, &Grid::new(n, d)?)?;
    let mut values = sym_eigenvalues(&op.matrix)?;
    check_psd(&values, e)?;
    let cut = 1e-12 * values.first().copied().unwrap_or(0.0).max(0.0);
    for v in &mut values {
        if *v <= cut {
            *v = 0.0;
        }
    }
    Ok(values)
}

/// Draws of the squared norm of the Gaussian field with covariance `e`.
pub fn sample_sqnorm(e: &OperatorExpr, d: usize, n: usize, cfg: &McConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let values = grid_eigenvalues(e, d, n)?;
    sample_quadratic_form(&values, cfg)
}

/// The same draws as [`sample_sqnorm`], computed by assembling each path
/// `X = Σ √λ_i ξ_i e_i` on the grid and integrating `X²` by quadrature.
pub fn sample_sqnorm_paths(e: &OperatorExpr, d: usize, n: usize, cfg: &McConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.trunc_m > MAX_PATH_MODES {
        return Err(Error::Argument(format!(
            "path synthesis supports at most {MAX_PATH_MODES} modes, got {}",
            cfg.trunc_m
        )));
    }
    let g = Grid::new(n, d)?;
    let op = eval(e, &g)?;
    let pairs = sym_eig(&op)?;
    check_psd(&pairs.values, e)?;
    if cfg.trunc_m > pairs.values.len() {
        return Err(Error::Argument(format!(
            "{} modes requested but only {} eigenvalues available",
            cfg.trunc_m,
            pairs.values.len()
        )));
    }
    let cut = 1e-12 * pairs.values[0].max(0.0);
    let norm = 1.0 / g.cell_volume().sqrt();
    // columns scaled so that each path is Σ ξ_i · column_i
    let modes: Vec<Vec<f64>> = (0..cfg.trunc_m)
        .map(|j| {
            let lam = pairs.values[j];
            let amp = if lam > cut { lam.sqrt() * norm } else { 0.0 };
            (0..g.len()).map(|i| amp * pairs.vectors[(i, j)]).collect()
        })
        .collect();
    let blocks: Vec<Vec<f64>> = cfg
        .blocks()
        .into_par_iter()
        .map(|(b, len)| {
            let mut s = NormalStream::new(cfg.seed, b);
            let mut x = vec![0.0; g.len()];
            (0..len)
                .map(|_| {
                    x.iter_mut().for_each(|v| *v = 0.0);
                    for m in &modes {
                        let z = s.next_normal();
                        for (xi, mi) in x.iter_mut().zip(m) {
                            *xi += z * mi;
                        }
                    }
                    g.inner(&x, &x).expect("grid-sized path")
                })
                .collect()
        })
        .collect();
    Ok(blocks.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub ks_stat: f64,
    pub p_approx: f64,
}

/// Kolmogorov tail `P(K > λ)` of the limiting two-sample statistic.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = (1..=8).map(|k: i32| y.powi((2 * k - 1) * (2 * k - 1))).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let x = (-2.0 * lambda * lambda).exp();
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100i32 {
            let term = x.powi(k * k);
            s += sign * term;
            if term < 1e-300 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic with the asymptotic p-value
/// using the small-sample correction `(√m + 0.12 + 0.11/√m) D`, where
/// `m = ab/(a+b)`.
pub fn two_sample_compare(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("two-sample comparison of an empty sample".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::Numeric("NaN in sample".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let m = na * nb / (na + nb);
    let lambda = (m.sqrt() + 0.12 + 0.11 / m.sqrt()) * d;
    Ok(KsResult {
        ks_stat: d,
        p_approx: kolmogorov_tail(lambda),
    })
}

/// Writes draws as a single-column CSV with a header.
pub fn write_draws_csv<W: Write>(mut w: W, header: &str, draws: &[f64]) -> Result<()> {
    writeln!(w, "{header}")?;
    for v in draws {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

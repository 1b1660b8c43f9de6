//! Spectral-equivalence checks for pairs of covariance expressions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{negative_controls, theorem_pairs, TheoremPair};
use crate::error::{Error, Result};
use crate::opeval::EvalOptions;
use crate::opexpr::{format, OperatorExpr};
use crate::spectral::{compare_spectra, grid_spectrum, nystrom_spectrum_with, Spectrum};

pub const MATRIX_EXACT_TOL: f64 = 1e-9;
pub const CONTINUUM_TOL: f64 = 1e-3;
pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Both sides on the same grid, compared at rounding level.
    MatrixExact,
    /// Extrapolated Nyström spectra at `n` and `2n`.
    Continuum,
}

impl Mode {
    pub fn tolerance(self) -> f64 {
        match self {
            Mode::MatrixExact => MATRIX_EXACT_TOL,
            Mode::Continuum => CONTINUUM_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub n: usize,
    pub max_rel_dev: f64,
    pub deviations: Vec<f64>,
    pub clusters_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivVerdict {
    pub id: String,
    pub mode: Mode,
    pub d: usize,
    pub k: usize,
    pub lhs: String,
    pub rhs: String,
    pub max_rel_dev: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Whether the pair is expected to be equivalent; `None` for ad-hoc pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<bool>,
    pub resolutions: Vec<Resolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EquivVerdict {
    /// The verdict agrees with the expectation, or there is none.
    pub fn as_expected(&self) -> bool {
        self.error.is_none() && self.expected.is_none_or(|e| e == self.pass)
    }
}

fn spectra_at(
    lhs: &OperatorExpr,
    rhs: &OperatorExpr,
    d: usize,
    n: usize,
    k: usize,
    mode: Mode,
    opts: EvalOptions,
) -> Result<(Spectrum, Spectrum)> {
    let one = |e: &OperatorExpr| match mode {
        Mode::MatrixExact => grid_spectrum(e, d, n, opts),
        Mode::Continuum => nystrom_spectrum_with(e, d, n, k, true, opts),
    };
    if std::ptr::eq(lhs, rhs) || lhs == rhs {
        let s = one(lhs)?;
        return Ok((s.clone(), s));
    }
    Ok((one(lhs)?, one(rhs)?))
}

/// Compares the top `k` nonzero eigenvalues of two covariance expressions.
///
/// A flipped clustering or a deviation above the mode tolerance fails the
/// verdict; evaluation problems are returned as errors.
pub fn check_pair(
    lhs: &OperatorExpr,
    rhs: &OperatorExpr,
    d: usize,
    n: usize,
    k: usize,
    mode: Mode,
) -> Result<EquivVerdict> {
    check_pair_with(lhs, rhs, d, n, k, mode, EvalOptions::default())
}

pub fn check_pair_with(
    lhs: &OperatorExpr,
    rhs: &OperatorExpr,
    d: usize,
    n: usize,
    k: usize,
    mode: Mode,
    opts: EvalOptions,
) -> Result<EquivVerdict> {
    if k == 0 {
        return Err(Error::Argument("k must be positive".into()));
    }
    let resolutions: Vec<usize> = match mode {
        Mode::MatrixExact => vec![n],
        Mode::Continuum => vec![n, 2 * n],
    };
    let tol = mode.tolerance();
    let mut table = Vec::new();
    for &m in &resolutions {
        let (a, b) = spectra_at(lhs, rhs, d, m, k, mode, opts)?;
        let cmp = compare_spectra(&a, &b, k, tol)?;
        table.push(Resolution {
            n: m,
            max_rel_dev: cmp.max_rel_dev,
            deviations: cmp.deviations,
            clusters_match: cmp.clusters_match,
        });
    }
    let max_rel_dev = table.iter().fold(0.0f64, |m, r| m.max(r.max_rel_dev));
    let pass = max_rel_dev <= tol && table.iter().all(|r| r.clusters_match);
    Ok(EquivVerdict {
        id: String::new(),
        mode,
        d,
        k,
        lhs: format(lhs),
        rhs: format(rhs),
        max_rel_dev,
        tolerance: tol,
        pass,
        expected: None,
        resolutions: table,
        error: None,
    })
}

/// Verifies one catalog pair; failures to evaluate end up in `error`.
pub fn check_theorem(pair: &TheoremPair, n: usize, k: usize, mode: Mode) -> EquivVerdict {
    let d = pair.dim();
    let (lhs, rhs) = (&pair.lhs.covariance, &pair.rhs.covariance);
    match check_pair(lhs, rhs, d, n, k, mode) {
        Ok(v) => EquivVerdict {
            id: pair.id.clone(),
            expected: Some(pair.expected),
            ..v
        },
        Err(e) => EquivVerdict {
            id: pair.id.clone(),
            mode,
            d,
            k,
            lhs: format(lhs),
            rhs: format(rhs),
            max_rel_dev: f64::NAN,
            tolerance: mode.tolerance(),
            pass: false,
            expected: Some(pair.expected),
            resolutions: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub dims: Vec<usize>,
    pub n_per_dim: BTreeMap<usize, usize>,
    pub k: usize,
    pub mode: Mode,
    pub include_controls: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            dims: vec![1, 2, 3],
            n_per_dim: BTreeMap::from([(1, 256), (2, 40), (3, 16)]),
            k: DEFAULT_K,
            mode: Mode::MatrixExact,
            include_controls: true,
        }
    }
}

impl SuiteConfig {
    pub fn resolution(&self, d: usize) -> Result<usize> {
        self.n_per_dim
            .get(&d)
            .copied()
            .ok_or_else(|| Error::Argument(format!("no grid resolution configured for d = {d}")))
    }
}

/// Runs every selected pair; verdicts come back ordered by dimension, then
/// by registry order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<EquivVerdict>> {
    run_pairs(cfg, theorem_pairs())
}

/// Runs `pairs` (plus the negative controls when configured) restricted to
/// `cfg.dims`.
pub fn run_pairs(cfg: &SuiteConfig, pairs: Vec<TheoremPair>) -> Result<Vec<EquivVerdict>> {
    let mut jobs: Vec<TheoremPair> = pairs;
    if cfg.include_controls {
        jobs.extend(negative_controls());
    }
    jobs.retain(|p| cfg.dims.contains(&p.dim()));
    jobs.sort_by_key(|p| p.dim());
    for d in &cfg.dims {
        cfg.resolution(*d)?;
    }
    Ok(jobs
        .par_iter()
        .map(|p| {
            let n = cfg.n_per_dim[&p.dim()];
            check_theorem(p, n, cfg.k, cfg.mode)
        })
        .collect())
}

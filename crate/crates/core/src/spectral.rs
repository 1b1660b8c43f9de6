//! Eigenvalues of covariance operators.
//!
//! Three routes: dense symmetric eigendecomposition of an evaluated operator,
//! Nyström spectra with Richardson extrapolation across two resolutions, and a
//! secular-equation solver for the pinned Brownian sheet, whose covariance is
//! the Brownian-sheet covariance minus the rank-one term `|g><g|`,
//! `g(x) = ∏ x_k`.

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::opeval::{eval_with, DiscreteOp, EvalOptions};
use crate::opexpr::{format, OperatorExpr};

/// Values below `ZERO_CUT_REL * λ₁` are treated as the kernel.
pub const ZERO_CUT_REL: f64 = 1e-12;
/// Relative width of a multiplicity cluster.
pub const CLUSTER_TOL: f64 = 1e-7;
/// Relative tolerance below which secular poles are merged.
pub const POLE_GROUP_TOL: f64 = 1e-13;
/// Negative eigenvalues down to `-PSD_TOL * λ_max` are accepted as rounding.
pub const PSD_TOL: f64 = 1e-10;
/// Largest acceptable truncation deficit of the secular coefficients.
pub const MAX_PARSEVAL_DEFICIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cluster {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Nonzero eigenvalues, descending.
    pub values: Vec<f64>,
    pub zero_cut: f64,
    /// Grid resolution, 0 for spectra that do not come from a grid.
    pub grid_n: usize,
    pub clusters: Vec<Cluster>,
    /// Indices where Richardson extrapolation was requested but skipped.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unextrapolated: Vec<usize>,
    /// `‖g‖² - Σ c²` of a truncated secular problem.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parseval_deficit: Option<f64>,
}

/// Groups consecutive descending values whose relative gap is within `tol`.
pub fn clusters_of(values: &[f64], tol: f64) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if {
                let prev = values[i - 1];
                (prev - v).abs() <= tol * prev.abs().max(v.abs())
            } =>
            {
                c.len += 1
            }
            _ => out.push(Cluster { start: i, len: 1 }),
        }
    }
    out
}

impl Spectrum {
    /// Sorts `values` descending and keeps those above `zero_cut_rel * max`.
    pub fn from_values(mut values: Vec<f64>, zero_cut_rel: f64, grid_n: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite eigenvalue".into()));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        let top = values.first().copied().unwrap_or(0.0).max(0.0);
        let zero_cut = zero_cut_rel * top;
        values.retain(|&v| v > zero_cut);
        let clusters = clusters_of(&values, CLUSTER_TOL);
        Ok(Spectrum {
            values,
            zero_cut,
            grid_n,
            clusters,
            unextrapolated: Vec::new(),
            parseval_deficit: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the `m` largest values.
    pub fn truncate(&mut self, m: usize) {
        self.values.truncate(m);
        self.clusters = clusters_of(&self.values, CLUSTER_TOL);
    }

    pub fn reciprocals(&self) -> Vec<f64> {
        self.values.iter().map(|v| 1.0 / v).collect()
    }
}

/// Eigenpairs in descending order; `vectors` columns are Euclidean-orthonormal.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

fn symmetrized(m: &Mat<f64>) -> Result<Mat<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Argument(format!(
            "eigendecomposition of a non-square {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    let mut scale = 0.0f64;
    let mut diff = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(Error::Numeric(format!("non-finite entry at ({i}, {j})")));
            }
            scale = scale.max(x.abs());
            diff = diff.max((x - m[(j, i)]).abs());
        }
    }
    if diff > 1e-8 * scale {
        return Err(Error::Numeric(format!(
            "matrix is not symmetric: max |M - M^T| = {diff:e}, max |M| = {scale:e}"
        )));
    }
    Ok(Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
}

/// Full eigendecomposition of a symmetric matrix.
pub fn sym_eig_matrix(m: &Mat<f64>) -> Result<EigenPairs> {
    let s = symmetrized(m)?;
    let n = s.nrows();
    let evd = s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
    let d = evd.S().column_vector();
    let u = evd.U();
    let values = (0..n).rev().map(|i| d[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(EigenPairs { values, vectors })
}

pub fn sym_eig(op: &DiscreteOp) -> Result<EigenPairs> {
    sym_eig_matrix(&op.matrix)
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn sym_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    let s = symmetrized(m)?;
    let mut v = s
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
    v.reverse();
    Ok(v)
}

/// Fails with a model error when the descending `values` contain a negative
/// eigenvalue beyond rounding.
pub fn check_psd(values: &[f64], expr: &OperatorExpr) -> Result<()> {
    let top = values.first().copied().unwrap_or(0.0);
    let bottom = values.last().copied().unwrap_or(0.0);
    if bottom < -PSD_TOL * top.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Model {
            expr: format(expr),
            msg: format!("not positive semi-definite: eigenvalue {bottom:e} against λ₁ = {top:e}"),
        });
    }
    Ok(())
}

/// Nonzero spectrum of `e` evaluated on the `n`-point grid in `d` dimensions.
pub fn grid_spectrum(e: &OperatorExpr, d: usize, n: usize, opts: EvalOptions) -> Result<Spectrum> {
    let g = Grid::new(n, d)?;
    let op = eval_with(e, &g, opts)?;
    let values = sym_eigenvalues(&op.matrix).map_err(|err| match err {
        Error::Numeric(msg) => Error::Model {
            expr: format(e),
            msg,
        },
        other => other,
    })?;
    check_psd(&values, e)?;
    Spectrum::from_values(values, ZERO_CUT_REL, n)
}

/// The `top_m` largest Nyström eigenvalues of `e`. With `extrapolate`, each
/// index is Richardson-combined with the spectrum at `n/2` as
/// `(4 λ(n) - λ(n/2)) / 3`, which removes the `O(h²)` error term; indices
/// whose cluster changes between the two resolutions are left as computed
/// and reported in `unextrapolated`.
pub fn nystrom_spectrum(
    e: &OperatorExpr,
    d: usize,
    n: usize,
    top_m: usize,
    extrapolate: bool,
) -> Result<Spectrum> {
    nystrom_spectrum_with(e, d, n, top_m, extrapolate, EvalOptions::default())
}

pub fn nystrom_spectrum_with(
    e: &OperatorExpr,
    d: usize,
    n: usize,
    top_m: usize,
    extrapolate: bool,
    opts: EvalOptions,
) -> Result<Spectrum> {
    let mut fine = grid_spectrum(e, d, n, opts)?;
    fine.truncate(top_m);
    if !extrapolate {
        return Ok(fine);
    }
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "extrapolation needs an even resolution of at least 4, got {n}"
        )));
    }
    let coarse = grid_spectrum(e, d, n / 2, opts)?;
    let coarse_clusters = clusters_of(&coarse.values, CLUSTER_TOL);
    let cluster_at = |cs: &[Cluster], i: usize| cs.iter().copied().find(|c| i < c.start + c.len);
    let mut values = fine.values.clone();
    let mut skipped = Vec::new();
    for (i, v) in values.iter_mut().enumerate() {
        let stable = i < coarse.values.len()
            && cluster_at(&fine.clusters, i) == cluster_at(&coarse_clusters, i);
        if stable {
            *v = (4.0 * fine.values[i] - coarse.values[i]) / 3.0;
        } else {
            skipped.push(i);
        }
    }
    let mut out = Spectrum::from_values(values, ZERO_CUT_REL, n)?;
    out.unextrapolated = skipped;
    Ok(out)
}

/// `diag(μ) - c cᵀ` with poles grouped by equality; `coeffs[g]` is the sum of
/// `c_i²` over the members of group `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneProblem {
    poles: Vec<f64>,
    coeffs: Vec<f64>,
    multiplicities: Vec<usize>,
}

impl RankOneProblem {
    pub fn new(poles: Vec<f64>, coeffs: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        if poles.len() != coeffs.len() || poles.len() != multiplicities.len() {
            return Err(Error::Argument(
                "poles, coefficients and multiplicities differ in length".into(),
            ));
        }
        if poles.iter().any(|p| !p.is_finite()) {
            return Err(Error::Argument("non-finite pole".into()));
        }
        if poles.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Argument("poles must be strictly descending".into()));
        }
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Argument(
                "squared coefficients must be finite and non-negative".into(),
            ));
        }
        if multiplicities.contains(&0) {
            return Err(Error::Argument("multiplicities must be positive".into()));
        }
        Ok(RankOneProblem {
            poles,
            coeffs,
            multiplicities,
        })
    }

    /// Builds a problem from raw diagonal entries and (unsquared) coefficients,
    /// merging poles equal within `rel_tol`.
    pub fn from_entries(diag: &[f64], c: &[f64], rel_tol: f64) -> Result<Self> {
        if diag.len() != c.len() {
            return Err(Error::Argument("diagonal and vector differ in length".into()));
        }
        let mut idx: Vec<usize> = (0..diag.len()).collect();
        idx.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]));
        let mut poles: Vec<f64> = Vec::new();
        let mut coeffs: Vec<f64> = Vec::new();
        let mut mult: Vec<usize> = Vec::new();
        let mut anchor = f64::NAN;
        for i in idx {
            let (mu, c2) = (diag[i], c[i] * c[i]);
            if !poles.is_empty() && (anchor - mu).abs() <= rel_tol * anchor.abs().max(mu.abs()) {
                let g = poles.len() - 1;
                coeffs[g] += c2;
                mult[g] += 1;
            } else {
                anchor = mu;
                poles.push(mu);
                coeffs.push(c2);
                mult.push(1);
            }
        }
        Self::new(poles, coeffs, mult)
    }

    pub fn poles(&self) -> &[f64] {
        &self.poles
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn coeff_total(&self) -> f64 {
        self.coeffs.iter().sum()
    }
}

/// `1 - Σ c_g² / (μ_g - λ)` and its derivative, with `λ = origin + tau` and
/// `shifted[g] = μ_g - origin`.
fn secular(shifted: &[f64], coeffs: &[f64], tau: f64) -> (f64, f64) {
    let mut f = 1.0;
    let mut df = 0.0;
    for (&s, &c) in shifted.iter().zip(coeffs) {
        let r = 1.0 / (s - tau);
        f -= c * r;
        df -= c * r * r;
    }
    (f, df)
}

/// Root of the secular function in `(lo, hi)`, where it decreases from
/// `+∞` to `-∞`.
fn secular_root(poles: &[f64], coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let probe = {
        let (f, _) = secular(
            &poles.iter().map(|p| p - mid).collect::<Vec<_>>(),
            coeffs,
            0.0,
        );
        f
    };
    // measure from the pole the root is closest to
    let origin = if probe < 0.0 { lo } else { hi };
    let shifted: Vec<f64> = poles.iter().map(|p| p - origin).collect();
    let (mut a, mut b) = (lo - origin, hi - origin);
    if probe < 0.0 {
        b = mid - origin;
    } else {
        a = mid - origin;
    }
    let mut tau = 0.5 * (a + b);
    for _ in 0..200 {
        let (f, df) = secular(&shifted, coeffs, tau);
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            a = tau;
        } else {
            b = tau;
        }
        let newton = tau - f / df;
        let next = if newton > a && newton < b && df < 0.0 {
            newton
        } else {
            0.5 * (a + b)
        };
        let scale = (origin + next).abs().max(f64::MIN_POSITIVE);
        let done = (next - tau).abs() <= 1e-15 * scale || (b - a) <= 1e-14 * scale;
        tau = next;
        if done {
            break;
        }
    }
    origin + tau
}

/// The `top_m` largest eigenvalues of `diag(μ) - c cᵀ`.
///
/// Each active group (nonzero coefficient) contributes one root, found in the
/// gap below its pole, and keeps `multiplicity - 1` copies of the pole.
/// Groups with zero coefficient keep their pole at full multiplicity.
pub fn secular_rankone(p: &RankOneProblem, top_m: usize) -> Result<Spectrum> {
    let active: Vec<usize> = (0..p.poles.len()).filter(|&g| p.coeffs[g] > 0.0).collect();
    let act_poles: Vec<f64> = active.iter().map(|&g| p.poles[g]).collect();
    let act_coeffs: Vec<f64> = active.iter().map(|&g| p.coeffs[g]).collect();
    let total = p.coeff_total();

    let mut values: Vec<f64> = Vec::new();
    for (g, &mu) in p.poles.iter().enumerate() {
        let keep = if p.coeffs[g] > 0.0 {
            p.multiplicities[g] - 1
        } else {
            p.multiplicities[g]
        };
        values.extend(std::iter::repeat_n(mu, keep.min(top_m)));
    }
    for a in 0..act_poles.len().min(top_m) {
        let hi = act_poles[a];
        let lo = act_poles.get(a + 1).copied().unwrap_or(hi - total);
        values.push(secular_root(&act_poles, &act_coeffs, lo, hi));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(top_m);
    Ok(Spectrum {
        clusters: clusters_of(&values, CLUSTER_TOL),
        values,
        zero_cut: 0.0,
        grid_n: 0,
        unextrapolated: Vec::new(),
        parseval_deficit: None,
    })
}

/// `((j - 1/2) π)⁻²`, the `j`-th eigenvalue of the Wiener covariance.
pub fn wiener_eigenvalue(j: usize) -> f64 {
    let a = (j as f64 - 0.5) * std::f64::consts::PI;
    1.0 / (a * a)
}

/// `⟨x, √2 sin((j - 1/2)πx)⟩ = √2 (-1)^(j+1) ((j - 1/2)π)⁻²`.
pub fn wiener_projection_of_x(j: usize) -> f64 {
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    sign * std::f64::consts::SQRT_2 * wiener_eigenvalue(j)
}

/// Upper bound on `J^d` for [`pinned_sheet_spectrum`].
pub const MAX_SECULAR_POLES: usize = 50_000_000;

/// Spectrum of the `d`-dimensional pinned Brownian sheet from its rank-one
/// structure, with the Brownian-sheet eigenbasis truncated to `modes_j`
/// functions per axis.
pub fn pinned_sheet_spectrum(d: usize, modes_j: usize, top_m: usize) -> Result<Spectrum> {
    if d == 0 {
        return Err(Error::Argument("dimension must be positive".into()));
    }
    if modes_j < 10 {
        return Err(Error::Argument(format!(
            "at least 10 modes per axis are needed, got {modes_j}"
        )));
    }
    let count = u32::try_from(d)
        .ok()
        .and_then(|d| modes_j.checked_pow(d))
        .filter(|&c| c <= MAX_SECULAR_POLES)
        .ok_or_else(|| Error::Capacity(format!("{modes_j}^{d} secular poles")))?;

    let lam: Vec<f64> = (1..=modes_j).map(wiener_eigenvalue).collect();
    let proj: Vec<f64> = (1..=modes_j).map(wiener_projection_of_x).collect();
    let captured: f64 = proj.iter().map(|c| c * c).sum::<f64>().powi(d as i32);
    let deficit = 3f64.powi(-(d as i32)) - captured;
    if deficit > MAX_PARSEVAL_DEFICIT {
        return Err(Error::Truncation(format!(
            "Parseval deficit {deficit:e} with {modes_j} modes per axis; use more modes"
        )));
    }

    let mut diag = Vec::with_capacity(count);
    let mut coef = Vec::with_capacity(count);
    let mut multi = vec![0usize; d];
    for _ in 0..count {
        let (mut mu, mut c) = (1.0, 1.0);
        for &j in &multi {
            mu *= lam[j];
            c *= proj[j];
        }
        diag.push(mu);
        coef.push(c);
        for slot in multi.iter_mut().rev() {
            *slot += 1;
            if *slot < modes_j {
                break;
            }
            *slot = 0;
        }
    }
    let problem = RankOneProblem::from_entries(&diag, &coef, POLE_GROUP_TOL)?;
    let mut s = secular_rankone(&problem, top_m)?;
    s.parseval_deficit = Some(deficit);
    Ok(s)
}

/// Result of pairing two spectra index by index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumMatch {
    pub k: usize,
    pub deviations: Vec<f64>,
    pub max_rel_dev: f64,
    pub clusters_match: bool,
    pub pass: bool,
}

/// Compares the top `k` values of two spectra. The relative deviation of a
/// pair is `|a - b| / max(|a|, |b|)`; multiplicity clusters of the two
/// prefixes must agree in size.
pub fn compare_spectra(a: &Spectrum, b: &Spectrum, k: usize, rel_tol: f64) -> Result<SpectrumMatch> {
    if a.len() < k || b.len() < k {
        return Err(Error::Argument(format!(
            "comparison of {k} eigenvalues, but only {} and {} are nonzero",
            a.len(),
            b.len()
        )));
    }
    let (pa, pb) = (&a.values[..k], &b.values[..k]);
    let deviations: Vec<f64> = pa
        .iter()
        .zip(pb)
        .map(|(x, y)| {
            let m = x.abs().max(y.abs());
            if m == 0.0 {
                0.0
            } else {
                (x - y).abs() / m
            }
        })
        .collect();
    let max_rel_dev = deviations.iter().fold(0.0f64, |m, &d| m.max(d));
    let size = |v: &[f64]| -> Vec<usize> { clusters_of(v, CLUSTER_TOL).iter().map(|c| c.len).collect() };
    let clusters_match = size(pa) == size(pb);
    Ok(SpectrumMatch {
        k,
        pass: clusters_match && max_rel_dev <= rel_tol,
        deviations,
        max_rel_dev,
        clusters_match,
    })
}

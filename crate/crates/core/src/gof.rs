//! Multivariate ω² goodness-of-fit test for product-form null hypotheses.
//!
//! A sample is mapped to the unit cube coordinate by coordinate with the
//! hypothesized marginal CDFs, the ω² statistic is evaluated in closed form,
//! and `n ω²` is referred to its limiting law `Σ λ_j Z_j²`, where `λ_j` are
//! the eigenvalues of the pinned Brownian sheet.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::catalog::process;
use crate::error::{Error, Result};
use crate::mc::{sample_quadratic_form, McConfig};
use crate::quad::gauss_legendre;
use crate::spectral::{nystrom_spectrum, pinned_sheet_spectrum, Spectrum};

/// Clamp margin for transformed values that rounding pushed out of `[0, 1]`.
pub const CLAMP_EPS: f64 = 1e-15;
/// Eigenvalues below this fraction of `λ₁` are replaced by their mean.
pub const KEEP_REL: f64 = 1e-6;
/// Most eigenvalues kept in the limiting law.
pub const MAX_KEPT: usize = 200;
/// Imhof integration stops where the integrand envelope falls below this.
pub const IMHOF_ENVELOPE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    rows: Vec<Vec<f64>>,
    d: usize,
    transformed: bool,
}

impl Sample {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || d == 0 {
            return Err(Error::Argument("sample needs at least one observation and one column".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Argument(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite value in row {i}")));
            }
        }
        Ok(Sample {
            rows,
            d,
            transformed: false,
        })
    }

    /// A sample already on the unit cube.
    pub fn uniform(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut s = Sample::new(rows)?;
        if s.rows.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument("transformed sample has values outside [0, 1]".into()));
        }
        s.transformed = true;
        Ok(s)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_transformed(&self) -> bool {
        self.transformed
    }
}

/// A continuous, strictly increasing marginal distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Margin {
    Uniform { a: f64, b: f64 },
    Exponential { rate: f64 },
    Normal { mu: f64, sigma: f64 },
    /// Linear interpolation of `(x, F(x))` knots; 0 below and 1 above.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl Margin {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Margin::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Margin::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Margin::Normal { mu, sigma } => Normal::new(*mu, *sigma).expect("validated").cdf(x),
            Margin::PiecewiseLinear { knots } => {
                let (x0, f0) = knots[0];
                let (xn, fn_) = knots[knots.len() - 1];
                if x <= x0 {
                    return if x < x0 { 0.0 } else { f0 };
                }
                if x >= xn {
                    return if x > xn { 1.0 } else { fn_ };
                }
                let k = knots.partition_point(|&(k, _)| k <= x);
                let ((xa, fa), (xb, fb)) = (knots[k - 1], knots[k]);
                fa + (fb - fa) * (x - xa) / (xb - xa)
            }
        }
    }

    fn validate(self) -> Result<Self> {
        let bad = |m: String| Err(Error::Argument(m));
        match &self {
            Margin::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                bad(format!("uniform margin needs a < b, got [{a}, {b}]"))
            }
            Margin::Exponential { rate } if !(rate.is_finite() && *rate > 0.0) => {
                bad(format!("exponential rate must be positive, got {rate}"))
            }
            Margin::Normal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && *sigma > 0.0) => {
                bad(format!("normal margin needs sigma > 0, got {sigma}"))
            }
            Margin::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return bad("piecewise-linear margin needs at least two knots".into());
                }
                if knots.iter().any(|(x, f)| !x.is_finite() || !(0.0..=1.0).contains(f)) {
                    return bad("piecewise-linear knots need finite x and F in [0, 1]".into());
                }
                if knots.windows(2).any(|w| !(w[0].0 < w[1].0 && w[0].1 < w[1].1)) {
                    return bad("piecewise-linear knots must be strictly increasing in x and F".into());
                }
                Ok(self)
            }
            _ => Ok(self),
        }
    }

    /// Parses `uniform[:a:b]`, `exp[:rate]`, `norm[:mu:sigma]` or
    /// `pwl:x0:F0:x1:F1:...`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.trim().split(':');
        let name = parts.next().unwrap_or("").trim();
        let args: Vec<f64> = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Argument(format!("margin `{text}`: `{p}` is not a number")))
            })
            .collect::<Result<_>>()?;
        let arity = |want: &[usize]| -> Result<()> {
            if want.contains(&args.len()) {
                Ok(())
            } else {
                Err(Error::Argument(format!("margin `{text}` has {} parameters", args.len())))
            }
        };
        let m = match name {
            "uniform" | "unif" => {
                arity(&[0, 2])?;
                match args[..] {
                    [a, b] => Margin::Uniform { a, b },
                    _ => Margin::Uniform { a: 0.0, b: 1.0 },
                }
            }
            "exp" | "exponential" => {
                arity(&[0, 1])?;
                Margin::Exponential {
                    rate: args.first().copied().unwrap_or(1.0),
                }
            }
            "norm" | "normal" => {
                arity(&[0, 2])?;
                match args[..] {
                    [mu, sigma] => Margin::Normal { mu, sigma },
                    _ => Margin::Normal { mu: 0.0, sigma: 1.0 },
                }
            }
            "pwl" => {
                if args.len() < 4 || !args.len().is_multiple_of(2) {
                    return Err(Error::Argument(format!(
                        "margin `{text}` needs an even number (at least 4) of knot values"
                    )));
                }
                Margin::PiecewiseLinear {
                    knots: args.chunks(2).map(|c| (c[0], c[1])).collect(),
                }
            }
            _ => return Err(Error::UnknownName(format!("margin `{name}`"))),
        };
        m.validate()
    }
}

/// Parses a comma-separated list of margins.
pub fn parse_margins(text: &str) -> Result<Vec<Margin>> {
    text.split(',').map(Margin::parse).collect()
}

/// Applies `u_k = F_k(x_k)` to every observation.
pub fn rosenblatt_product(s: &Sample, margins: &[Margin]) -> Result<Sample> {
    if margins.len() != s.dim() {
        return Err(Error::Dimension(format!(
            "{} margins for a {}-dimensional sample",
            margins.len(),
            s.dim()
        )));
    }
    let rows = s
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(margins)
                .map(|(&x, m)| {
                    let u = m.cdf(x);
                    if u < 0.0 {
                        CLAMP_EPS
                    } else if u > 1.0 {
                        1.0 - CLAMP_EPS
                    } else {
                        u
                    }
                })
                .collect()
        })
        .collect();
    Ok(Sample {
        rows,
        d: s.d,
        transformed: true,
    })
}

/// `∫ (F_n(z) - ∏ z_k)² dz` over the unit cube, in closed form.
pub fn omega2(s: &Sample) -> Result<f64> {
    if !s.transformed {
        return Err(Error::Argument("omega2 needs a sample transformed to the unit cube".into()));
    }
    if s.rows.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Argument("sample has values outside [0, 1]".into()));
    }
    let n = s.len() as f64;
    let d = s.dim() as i32;
    let single: f64 = s
        .rows
        .iter()
        .map(|x| x.iter().map(|v| 0.5 * (1.0 - v * v)).product::<f64>())
        .sum();
    let mut pairs = 0.0;
    for (i, x) in s.rows.iter().enumerate() {
        let diag: f64 = x.iter().map(|v| 1.0 - v).product();
        let mut off = 0.0;
        for y in &s.rows[i + 1..] {
            off += x.iter().zip(y).map(|(a, b)| 1.0 - a.max(*b)).product::<f64>();
        }
        pairs += diag + 2.0 * off;
    }
    Ok(3f64.powi(-d) - 2.0 / n * single + pairs / (n * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImhofResult {
    pub p_value: f64,
    /// Upper integration limit, in units of `1/λ_max`.
    pub upper: f64,
    /// Bound on the neglected tail of the integral, after scaling by `1/π`.
    pub error_bound: f64,
    pub panels: usize,
}

/// `P(Σ λ_j Z_j² > x)` by inversion of the characteristic function.
pub fn pvalue_imhof(eigs: &[f64], x: f64) -> Result<f64> {
    Ok(imhof(eigs, x)?.p_value)
}

pub fn imhof(eigs: &[f64], x: f64) -> Result<ImhofResult> {
    if eigs.is_empty() {
        return Err(Error::Argument("Imhof inversion of an empty eigenvalue list".into()));
    }
    if eigs.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::Argument("Imhof inversion needs positive eigenvalues".into()));
    }
    if !x.is_finite() {
        return Err(Error::Argument(format!("statistic value {x} is not finite")));
    }
    if x <= 0.0 {
        return Ok(ImhofResult {
            p_value: 1.0,
            upper: 0.0,
            error_bound: 0.0,
            panels: 0,
        });
    }
    let top = eigs.iter().cloned().fold(0.0, f64::max);
    let lam: Vec<f64> = eigs.iter().map(|l| l / top).collect();
    let x = x / top;

    let log_rho = |u: f64| 0.25 * lam.iter().map(|l| (l * l * u * u).ln_1p()).sum::<f64>();
    let integrand = |u: f64| {
        if u == 0.0 {
            return 0.5 * (lam.iter().sum::<f64>() - x);
        }
        let theta = 0.5 * lam.iter().map(|l| (l * u).atan()).sum::<f64>() - 0.5 * x * u;
        theta.sin() / (u * log_rho(u).exp())
    };
    let envelope = |u: f64| (-log_rho(u)).exp() / u;

    // smallest power of two past which the envelope stays below the target
    let mut upper = 1.0;
    while envelope(upper) >= IMHOF_ENVELOPE {
        upper *= 2.0;
    }
    let (lo, mut hi) = (upper / 2.0, upper);
    let mut lo = lo.max(0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if envelope(mid) < IMHOF_ENVELOPE {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let upper = hi;

    let rule = gauss_legendre(16);
    let mut total = 0.0;
    let mut u = 0.0;
    let mut panels = 0;
    while u < upper {
        let freq = 0.5 * lam.iter().map(|l| l / (1.0 + l * l * u * u)).sum::<f64>() + 0.5 * x;
        let decay = 1.0 / u.max(1.0) + 0.5 * lam.iter().map(|l| l * l * u / (1.0 + l * l * u * u)).sum::<f64>();
        let width = (std::f64::consts::PI / freq).min(0.5 / decay).min(upper - u);
        let (mid, half) = (u + 0.5 * width, 0.5 * width);
        total += half
            * rule
                .0
                .iter()
                .zip(&rule.1)
                .map(|(t, w)| w * integrand(mid + half * t))
                .sum::<f64>();
        u += width;
        panels += 1;
    }
    let p = 0.5 + total / std::f64::consts::PI;
    Ok(ImhofResult {
        p_value: p.clamp(0.0, 1.0),
        upper,
        error_bound: IMHOF_ENVELOPE * upper / std::f64::consts::PI,
        panels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum SpectrumSource {
    /// Secular equation with `modes` Brownian-sheet modes per axis.
    Secular { modes: usize },
    /// Extrapolated Nyström spectrum on an `n`-point grid.
    Nystrom { n: usize },
}

impl SpectrumSource {
    /// Mode counts that keep the secular problem at about 10⁴–10⁵ poles.
    pub fn default_for(d: usize) -> Self {
        let modes = match d {
            1 => 2000,
            2 => 100,
            3 => 40,
            _ => 12,
        };
        SpectrumSource::Secular { modes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum PValueMethod {
    Imhof,
    Montecarlo { reps: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofDiagnostics {
    pub eigenvalues_kept: usize,
    /// Mean of the discarded eigenvalue tail, added to the kept form.
    pub tail_shift: f64,
    pub trace: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parseval_deficit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integration_error_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_standard_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    /// `n ω²`, the value referred to the limiting law.
    pub scaled_statistic: f64,
    pub n: usize,
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub p_value: f64,
    pub method: PValueMethod,
    pub source: SpectrumSource,
    pub diagnostics: GofDiagnostics,
}

/// `∫ Q(x, x) dx = (1/2)^d - (1/3)^d`.
pub fn kernel_trace(d: usize) -> f64 {
    0.5f64.powi(d as i32) - (1.0 / 3.0f64).powi(d as i32)
}

/// Leading eigenvalues of the ω² kernel and the mean of the rest.
pub fn limiting_eigenvalues(d: usize, source: SpectrumSource) -> Result<(Vec<f64>, f64, Option<f64>)> {
    let spectrum: Spectrum = match source {
        SpectrumSource::Secular { modes } => pinned_sheet_spectrum(d, modes, MAX_KEPT)?,
        SpectrumSource::Nystrom { n } => {
            let cov = process("pinned-sheet", d)?.covariance;
            nystrom_spectrum(&cov, d, n, MAX_KEPT, true)?
        }
    };
    let top = spectrum.values.first().copied().ok_or_else(|| {
        Error::Numeric("pinned-sheet spectrum is empty".into())
    })?;
    let kept: Vec<f64> = spectrum
        .values
        .iter()
        .copied()
        .take_while(|&l| l > KEEP_REL * top)
        .collect();
    let shift = (kernel_trace(d) - kept.iter().sum::<f64>()).max(0.0);
    Ok((kept, shift, spectrum.parseval_deficit))
}

/// Transform, statistic and p-value in one call.
pub fn gof_test(
    s: &Sample,
    margins: &[Margin],
    source: SpectrumSource,
    method: PValueMethod,
) -> Result<GofResult> {
    let u = if s.is_transformed() {
        if !margins.is_empty() && margins.len() != s.dim() {
            return Err(Error::Dimension(format!(
                "{} margins for a {}-dimensional sample",
                margins.len(),
                s.dim()
            )));
        }
        s.clone()
    } else {
        rosenblatt_product(s, margins)?
    };
    let d = u.dim();
    let stat = omega2(&u)?;
    let scaled = u.len() as f64 * stat;
    let (eigs, shift, deficit) = limiting_eigenvalues(d, source)?;
    let target = scaled - shift;
    let mut diagnostics = GofDiagnostics {
        eigenvalues_kept: eigs.len(),
        tail_shift: shift,
        trace: kernel_trace(d),
        parseval_deficit: deficit,
        integration_error_bound: None,
        mc_standard_error: None,
    };
    let p_value = match method {
        PValueMethod::Imhof => {
            let r = imhof(&eigs, target)?;
            diagnostics.integration_error_bound = Some(r.error_bound);
            r.p_value
        }
        PValueMethod::Montecarlo { reps, seed } => {
            let draws = sample_quadratic_form(&eigs, &McConfig::new(reps, seed, eigs.len()))?;
            let p = draws.iter().filter(|&&v| v > target).count() as f64 / reps as f64;
            diagnostics.mc_standard_error = Some((p * (1.0 - p) / reps as f64).sqrt());
            p
        }
    };
    Ok(GofResult {
        statistic: stat,
        scaled_statistic: scaled,
        n: u.len(),
        d,
        eigenvalues: eigs,
        p_value,
        method,
        source,
        diagnostics,
    })
}

//! Dense realization of operator expressions on a midpoint grid.
//!
//! A [`DiscreteOp`] acts on node-value vectors. Uniform weights make the
//! adjoint in the grid inner product the plain transpose, and the half-weight
//! diagonal of `T` makes `T + T' = P` hold exactly, so the algebraic identities
//! used for covariance operators survive discretization verbatim.
//!
//! Tensor products are kept factored while composing, which avoids forming
//! `n^d x n^d` products of Kronecker matrices; only sums force a dense matrix.

use faer::Mat;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::opexpr::{format, lift, Atom, OperatorExpr};

/// Default cap on the number of rows of an evaluated operator.
pub const DEFAULT_MAX_ROWS: usize = 20_000;

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub max_rows: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_rows: DEFAULT_MAX_ROWS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOp {
    pub matrix: Mat<f64>,
    pub grid: Grid,
    pub expr: OperatorExpr,
}

impl DiscreteOp {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |M - M^T|`
    pub fn asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let n = m.nrows();
        let mut diff = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                diff = diff.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        diff
    }

    /// `max |M_ij|`
    pub fn max_abs(&self) -> f64 {
        let m = &self.matrix;
        (0..m.ncols())
            .flat_map(|j| m.col_as_slice(j).iter())
            .fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.size()).map(|i| self.matrix[(i, i)]).sum()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        if v.len() != n {
            return Err(Error::Argument(format!(
                "vector of length {} for an operator of size {n}",
                v.len()
            )));
        }
        let mut out = vec![0.0; n];
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.matrix.col_as_slice(j)) {
                *o += m * vj;
            }
        }
        Ok(out)
    }
}

fn toeplitz_lower(n: usize, g: impl Fn(usize) -> f64) -> Mat<f64> {
    let diag: Vec<f64> = (0..n).map(g).collect();
    Mat::from_fn(n, n, |i, j| if i >= j { diag[i - j] } else { 0.0 })
}

/// Orthonormal (in the grid inner product) basis of polynomials of degree
/// `<= m`, as columns. Built by twice-iterated modified Gram-Schmidt on
/// powers of `2x - 1`.
fn poly_basis(g: &Grid, m: usize) -> Vec<Vec<f64>> {
    let h = g.h();
    let ip = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * h;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..=m {
        if basis.len() == g.n() {
            break;
        }
        let mut v: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&x| (2.0 * x - 1.0).powi(k as i32))
            .collect();
        let norm0 = ip(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &basis {
                let c = ip(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = ip(&v, &v).sqrt();
        if norm <= 1e-12 * norm0.max(1.0) {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}

/// Matrix of a single atom on a one-dimensional grid.
pub fn atom_matrix(a: &Atom, g: &Grid) -> Result<Mat<f64>> {
    if g.dim() != 1 {
        return Err(Error::Dimension(format!(
            "atom matrices live on 1-d grids, got d={}",
            g.dim()
        )));
    }
    let n = g.n();
    let h = g.h();
    let x = g.nodes();
    let m = match a {
        Atom::Identity => Mat::identity(n, n),
        Atom::Integrate => toeplitz_lower(n, |k| if k == 0 { 0.5 * h } else { h }),
        Atom::IntegrateRight => atom_matrix(&Atom::Integrate, g)?.transpose().to_owned(),
        Atom::ConstProjector => Mat::from_fn(n, n, |_, _| h),
        Atom::Multiplier(w) => {
            Mat::from_fn(n, n, |i, j| if i == j { w.eval(x[i]) } else { 0.0 })
        }
        Atom::Flip => Mat::from_fn(n, n, |i, j| if i + j + 1 == n { 1.0 } else { 0.0 }),
        Atom::RiemannLiouville(alpha) => {
            let alpha = *alpha;
            if alpha.is_nan() || alpha <= 0.5 {
                return Err(Error::Argument(format!(
                    "Riemann-Liouville exponent must exceed 1/2, got {alpha}"
                )));
            }
            // exact integral of alpha (x_i - t)^(alpha-1) over cell j
            let pw = |t: f64| if t > 0.0 { t.powf(alpha) } else { 0.0 };
            toeplitz_lower(n, |k| pw((k as f64 + 0.5) * h) - pw((k as f64 - 0.5) * h))
        }
        Atom::PolyProjector(deg) => {
            let q = poly_basis(g, *deg);
            Mat::from_fn(n, n, |i, j| q.iter().map(|v| v[i] * v[j]).sum::<f64>() * h)
        }
    };
    Ok(m)
}

/// Most Kronecker terms kept before a sum is assembled densely.
const MAX_TERMS: usize = 64;

type Term = Vec<Mat<f64>>;

/// An operator either dense or as a sum of Kronecker products of square
/// factors (first factor on the slowest axis). Scalars live in the first
/// factor of each term.
enum Repr {
    Terms(Vec<Term>),
    Dense(Mat<f64>),
}

fn kron_size(f: &[Mat<f64>]) -> usize {
    f.iter().map(|m| m.nrows()).product()
}

fn kron_dense(f: &[Mat<f64>]) -> Mat<f64> {
    let mut acc = f[0].clone();
    for b in &f[1..] {
        let (ra, rb) = (acc.nrows(), b.nrows());
        acc = Mat::from_fn(ra * rb, ra * rb, |i, j| {
            acc[(i / rb, j / rb)] * b[(i % rb, j % rb)]
        });
    }
    acc
}

/// `(F_1 ⊗ ... ⊗ F_k) · M` via mode products, column by column.
fn kron_apply_left(f: &[Mat<f64>], m: &Mat<f64>) -> Mat<f64> {
    let size = kron_size(f);
    debug_assert_eq!(size, m.nrows());
    let mut out = m.clone();
    let mut scratch = vec![0.0; size];
    let mut x = Vec::new();
    let skip: Vec<bool> = f.iter().map(is_identity).collect();
    for c in 0..out.ncols() {
        let col = out.col_as_slice_mut(c);
        let mut stride = size;
        for (a, &skip) in f.iter().zip(&skip) {
            let s = a.nrows();
            stride /= s;
            if skip {
                continue;
            }
            let block = s * stride;
            x.resize(s, 0.0);
            for outer in (0..size).step_by(block) {
                for inner in 0..stride {
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi = col[outer + i * stride + inner];
                    }
                    for r in 0..s {
                        let mut acc = 0.0;
                        for (i, xi) in x.iter().enumerate() {
                            acc += a[(r, i)] * xi;
                        }
                        scratch[outer + r * stride + inner] = acc;
                    }
                }
            }
            col.copy_from_slice(&scratch);
        }
    }
    out
}

fn is_identity(a: &Mat<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|j| (0..n).all(|i| a[(i, j)] == if i == j { 1.0 } else { 0.0 }))
}

fn transpose(m: &Mat<f64>) -> Mat<f64> {
    m.transpose().to_owned()
}

fn partition(t: &Term) -> Vec<usize> {
    t.iter().map(|m| m.nrows()).collect()
}

fn same_partition(terms: &[Term]) -> bool {
    terms.windows(2).all(|w| partition(&w[0]) == partition(&w[1]))
}

fn add(a: Mat<f64>, b: Mat<f64>) -> Mat<f64> {
    a + b
}

impl Repr {
    /// Builds a term list, merging single-factor terms and falling back to
    /// a dense matrix when the list grows too long.
    fn from_terms(terms: Vec<Term>) -> Repr {
        if terms.len() > 1 && terms.iter().all(|t| t.len() == 1) && same_partition(&terms) {
            let m = terms.into_iter().map(|mut t| t.remove(0)).reduce(add);
            return Repr::Terms(vec![vec![m.expect("nonempty sum")]]);
        }
        if terms.len() > MAX_TERMS || !same_partition(&terms) {
            return Repr::Dense(Repr::Terms(terms).into_dense());
        }
        Repr::Terms(terms)
    }

    fn into_dense(self) -> Mat<f64> {
        match self {
            Repr::Dense(m) => m,
            Repr::Terms(terms) => terms
                .into_iter()
                .map(|t| {
                    if t.len() == 1 {
                        t.into_iter().next().unwrap()
                    } else {
                        kron_dense(&t)
                    }
                })
                .reduce(add)
                .expect("nonempty sum"),
        }
    }

    fn into_terms(self) -> Vec<Term> {
        match self {
            Repr::Terms(t) => t,
            Repr::Dense(m) => vec![vec![m]],
        }
    }

    fn transpose(self) -> Repr {
        match self {
            Repr::Terms(terms) => Repr::Terms(
                terms
                    .iter()
                    .map(|t| t.iter().map(transpose).collect())
                    .collect(),
            ),
            Repr::Dense(m) => Repr::Dense(transpose(&m)),
        }
    }

    fn scale(self, c: f64) -> Repr {
        match self {
            Repr::Terms(mut terms) => {
                for t in &mut terms {
                    t[0] = &t[0] * faer::Scale(c);
                }
                Repr::Terms(terms)
            }
            Repr::Dense(m) => Repr::Dense(&m * faer::Scale(c)),
        }
    }

    fn mul(self, rhs: Repr) -> Repr {
        match (self, rhs) {
            (Repr::Terms(a), Repr::Terms(b))
                if a.len() * b.len() <= MAX_TERMS
                    && same_partition(&a)
                    && same_partition(&b)
                    && partition(&a[0]) == partition(&b[0]) =>
            {
                let mut out = Vec::with_capacity(a.len() * b.len());
                for x in &a {
                    for y in &b {
                        out.push(x.iter().zip(y).map(|(p, q)| p * q).collect());
                    }
                }
                Repr::from_terms(out)
            }
            (Repr::Terms(a), rhs) => {
                let m = rhs.into_dense();
                Repr::Dense(
                    a.iter()
                        .map(|t| kron_apply_left(t, &m))
                        .reduce(add)
                        .expect("nonempty sum"),
                )
            }
            (Repr::Dense(a), Repr::Terms(b)) => {
                let at = transpose(&a);
                let sum = b
                    .iter()
                    .map(|t| {
                        let tt: Term = t.iter().map(transpose).collect();
                        kron_apply_left(&tt, &at)
                    })
                    .reduce(add)
                    .expect("nonempty sum");
                Repr::Dense(transpose(&sum))
            }
            (Repr::Dense(a), Repr::Dense(b)) => Repr::Dense(&a * &b),
        }
    }
}

struct Evaluator<'a> {
    axis: Grid,
    expr: &'a OperatorExpr,
}

impl Evaluator<'_> {
    /// Evaluates `e` acting on `dim` axes.
    fn eval(&self, e: &OperatorExpr, dim: usize) -> Result<Repr> {
        Ok(match e {
            OperatorExpr::Atom(Atom::Identity) => {
                let n = self.axis.n();
                Repr::Terms(vec![vec![Mat::identity(n, n); dim]])
            }
            OperatorExpr::Atom(a) => {
                if dim != 1 {
                    return Err(Error::Dimension(format!(
                        "atom `{a}` used on {dim} axes in `{}`",
                        format(self.expr)
                    )));
                }
                Repr::Terms(vec![vec![atom_matrix(a, &self.axis)?]])
            }
            OperatorExpr::Adjoint(x) => self.eval(x, dim)?.transpose(),
            OperatorExpr::Scale(c, x) => self.eval(x, dim)?.scale(*c),
            OperatorExpr::Tensor(parts) => {
                let mut acc: Vec<Term> = vec![Vec::new()];
                for p in parts {
                    let terms = self.eval(p, p.dim()?)?.into_terms();
                    let mut next = Vec::with_capacity(acc.len() * terms.len());
                    for a in &acc {
                        for t in &terms {
                            next.push(a.iter().chain(t).cloned().collect());
                        }
                    }
                    acc = next;
                }
                Repr::from_terms(acc)
            }
            OperatorExpr::Compose(parts) => {
                let mut it = parts.iter();
                let mut acc = match it.next() {
                    Some(p) => self.eval(p, dim)?,
                    None => return Err(self.empty("product")),
                };
                for p in it {
                    acc = acc.mul(self.eval(p, dim)?);
                }
                acc
            }
            OperatorExpr::Sum(terms) => {
                if terms.is_empty() {
                    return Err(self.empty("sum"));
                }
                let mut all: Vec<Term> = Vec::new();
                let mut dense: Option<Mat<f64>> = None;
                for (c, t) in terms {
                    match self.eval(t, dim)?.scale(*c) {
                        Repr::Terms(ts) => all.extend(ts),
                        Repr::Dense(m) => {
                            dense = Some(match dense {
                                None => m,
                                Some(a) => a + m,
                            })
                        }
                    }
                }
                match dense {
                    None => Repr::from_terms(all),
                    Some(m) if all.is_empty() => Repr::Dense(m),
                    Some(m) => Repr::Dense(m + Repr::Terms(all).into_dense()),
                }
            }
        })
    }

    fn empty(&self, what: &str) -> Error {
        Error::Argument(format!("empty {what} in `{}`", format(self.expr)))
    }
}

/// Evaluates `e` on `g`. One-dimensional expressions without tensor products
/// are lifted automatically when `g` has more than one axis.
pub fn eval(e: &OperatorExpr, g: &Grid) -> Result<DiscreteOp> {
    eval_with(e, g, EvalOptions::default())
}

pub fn eval_with(e: &OperatorExpr, g: &Grid, opts: EvalOptions) -> Result<DiscreteOp> {
    if g.len() > opts.max_rows {
        return Err(Error::Capacity(format!(
            "{} rows exceed the dense budget of {} (n={}, d={})",
            g.len(),
            opts.max_rows,
            g.n(),
            g.dim()
        )));
    }
    let hint = e.dim_hint()?;
    let dim = hint.unwrap_or(g.dim());
    let lifted;
    let e = if dim == g.dim() {
        e
    } else if dim == 1 && !e.contains_tensor() {
        lifted = lift(e, g.dim())?;
        &lifted
    } else {
        return Err(Error::Dimension(format!(
            "`{}` acts on {dim} axes but the grid has {}",
            format(e),
            g.dim()
        )));
    };
    let ev = Evaluator {
        axis: g.axis(),
        expr: e,
    };
    let matrix = ev.eval(e, g.dim())?.into_dense();
    if matrix.nrows() != g.len() {
        return Err(Error::Dimension(format!(
            "`{}` evaluated to size {} on a grid of {} points",
            format(e),
            matrix.nrows(),
            g.len()
        )));
    }
    Ok(DiscreteOp {
        matrix,
        grid: g.clone(),
        expr: e.clone(),
    })
}

/// Kronecker product of two dense matrices.
pub fn kron(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    kron_dense(&[a.clone(), b.clone()])
}

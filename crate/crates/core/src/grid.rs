//! Midpoint tensor grids on the unit cube.
//!
//! Every operator in the crate acts on node-value vectors of a [`Grid`]. The
//! flat index is lexicographic with the last axis varying fastest, which is the
//! same convention as the Kronecker product used when evaluating tensor
//! operators.

use crate::error::{Error, Result};

/// Largest number of flat points a grid may hold.
pub const MAX_POINTS: usize = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    d: usize,
    nodes: Vec<f64>,
    h: f64,
    len: usize,
}

impl Grid {
    /// Composite midpoint grid with `n` points per axis on `[0,1]^d`.
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Argument(format!(
                "grid needs n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        let len = u32::try_from(d)
            .ok()
            .and_then(|d| n.checked_pow(d))
            .filter(|&len| len <= MAX_POINTS)
            .ok_or_else(|| Error::Capacity(format!("{n}^{d} grid points")))?;
        let h = 1.0 / n as f64;
        let nodes = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        Ok(Grid { n, d, nodes, h, len })
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// One-dimensional abscissae `(i + 1/2)/n`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// One-dimensional weight `1/n`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Weight of one flat point, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    /// Number of flat points, `n^d`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The same grid restricted to one axis.
    pub fn axis(&self) -> Grid {
        Grid {
            n: self.n,
            d: 1,
            nodes: self.nodes.clone(),
            h: self.h,
            len: self.n,
        }
    }

    pub fn flatten(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.d {
            return Err(Error::Dimension(format!(
                "multi-index of length {} on a {}-dimensional grid",
                multi.len(),
                self.d
            )));
        }
        let mut flat = 0usize;
        for &i in multi {
            if i >= self.n {
                return Err(Error::Argument(format!("index {i} outside 0..{}", self.n)));
            }
            flat = flat * self.n + i;
        }
        Ok(flat)
    }

    pub fn unflatten(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.len {
            return Err(Error::Argument(format!(
                "flat index {flat} outside 0..{}",
                self.len
            )));
        }
        let mut multi = vec![0; self.d];
        for slot in multi.iter_mut().rev() {
            *slot = flat % self.n;
            flat /= self.n;
        }
        Ok(multi)
    }

    /// Coordinates of the flat point `flat`.
    pub fn point(&self, flat: usize) -> Result<Vec<f64>> {
        Ok(self
            .unflatten(flat)?
            .into_iter()
            .map(|i| self.nodes[i])
            .collect())
    }

    /// Evaluates `f` at every flat point, in flat order.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        let mut multi = vec![0usize; self.d];
        let mut out = Vec::with_capacity(self.len);
        for _ in 0..self.len {
            for (k, &i) in multi.iter().enumerate() {
                x[k] = self.nodes[i];
            }
            out.push(f(&x));
            for slot in multi.iter_mut().rev() {
                *slot += 1;
                if *slot < self.n {
                    break;
                }
                *slot = 0;
            }
        }
        out
    }

    /// Quadrature inner product `h^d Σ u_i v_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != self.len || v.len() != self.len {
            return Err(Error::Argument(format!(
                "vectors of length {} and {} on a grid of {} points",
                u.len(),
                v.len(),
                self.len
            )));
        }
        let s: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        Ok(s * self.cell_volume())
    }
}

pub fn make_grid(n: usize, d: usize) -> Result<Grid> {
    Grid::new(n, d)
}

pub fn inner(u: &[f64], v: &[f64], g: &Grid) -> Result<f64> {
    g.inner(u, v)
}

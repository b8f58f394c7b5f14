//! Sampled maps and pointwise linear structures on a [`Grid`].
//!
//! Complex vectors in `ℂⁿ` are identified with `ℝ²ⁿ` through the interleaved
//! ordering `(re₀, im₀, re₁, im₁, …)`; in these coordinates the standard
//! structure `J_st` (multiplication by `i`) is block diagonal with blocks
//! `[[0, −1], [1, 0]]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;

/// Default bound on `max‖J² + I‖` accepted by [`StructureField`].
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Values of a map `u: domain → ℂⁿ` at every lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSample {
    grid: Grid,
    dim: usize,
    values: Vec<Complex64>,
}

impl MapSample {
    pub fn new(grid: Grid, dim: usize, values: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("target dimension must be ≥ 1"));
        }
        if values.len() != grid.node_count() * dim {
            return Err(Error::Mismatch(format!(
                "{} values for {} nodes of dimension {dim}",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite { node: k / dim });
        }
        Ok(MapSample { grid, dim, values })
    }

    /// Samples `f` at every node; `f` writes the `dim` components.
    pub fn from_fn(grid: &Grid, dim: usize, f: impl Fn(Complex64, &mut [Complex64])) -> Result<Self> {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.node_count() * dim];
        for (k, chunk) in values.chunks_mut(dim.max(1)).enumerate() {
            f(grid.point(k), chunk);
        }
        Self::new(grid.clone(), dim, values)
    }

    /// Scalar (`n = 1`) sample.
    pub fn scalar(grid: &Grid, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::new(grid.clone(), 1, grid.points().map(f).collect())
    }

    pub fn constant(grid: &Grid, c: &[Complex64]) -> Result<Self> {
        Self::from_fn(grid, c.len(), |_, out| out.copy_from_slice(c))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[Complex64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    /// Largest component modulus over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Same grid and dimension, new values (validated).
    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        Self::new(self.grid.clone(), self.dim, values)
    }

    pub fn scaled(&self, s: f64) -> Self {
        MapSample {
            grid: self.grid.clone(),
            dim: self.dim,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &MapSample) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(MapSample {
            grid: self.grid.clone(),
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub(crate) fn check_compatible(&self, other: &MapSample) -> Result<()> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::Mismatch("samples live on different grids or dimensions".into()));
        }
        Ok(())
    }

    /// Diameter of the bounding box of the image over domain nodes.
    pub fn oscillation(&self) -> f64 {
        let mut lo = vec![f64::INFINITY; 2 * self.dim];
        let mut hi = vec![f64::NEG_INFINITY; 2 * self.dim];
        for node in 0..self.grid.node_count() {
            if !self.grid.node_in_domain(node) {
                continue;
            }
            for (c, v) in self.at(node).iter().enumerate() {
                lo[2 * c] = lo[2 * c].min(v.re);
                hi[2 * c] = hi[2 * c].max(v.re);
                lo[2 * c + 1] = lo[2 * c + 1].min(v.im);
                hi[2 * c + 1] = hi[2 * c + 1].max(v.im);
            }
        }
        lo.iter()
            .zip(&hi)
            .filter(|(l, h)| l.is_finite() && h.is_finite())
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }
}

/// `J_st` on `ℝ²ⁿ` in interleaved coordinates.
pub fn standard_structure(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for c in 0..n {
        j[(2 * c, 2 * c + 1)] = -1.0;
        j[(2 * c + 1, 2 * c)] = 1.0;
    }
    j
}

pub(crate) fn to_real(v: &[Complex64]) -> DVector<f64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|z| [z.re, z.im]))
}

/// `‖J² + I‖₂` for a single matrix.
pub fn square_defect(j: &DMatrix<f64>) -> f64 {
    let n = j.nrows();
    let d = j * j + DMatrix::<f64>::identity(n, n);
    d.singular_values().max()
}

/// A field of linear complex structures, one `2n × 2n` real matrix per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureField {
    grid: Grid,
    dim: usize,
    /// Row-major `2n × 2n` blocks, one per node.
    entries: Vec<f64>,
}

impl StructureField {
    /// The constant standard structure `J_st`.
    pub fn standard(grid: &Grid, dim: usize) -> Self {
        let j = standard_structure(dim);
        Self::build(grid, dim, |_| j.clone())
    }

    pub fn from_fn(grid: &Grid, dim: usize, f: impl Fn(Complex64) -> DMatrix<f64>) -> Result<Self> {
        Self::from_fn_with_tol(grid, dim, STRUCTURE_TOL, f)
    }

    pub fn from_fn_with_tol(
        grid: &Grid,
        dim: usize,
        tol: f64,
        f: impl Fn(Complex64) -> DMatrix<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("target dimension must be ≥ 1"));
        }
        let m = 2 * dim;
        let mut entries = Vec::with_capacity(grid.node_count() * m * m);
        for (node, z) in grid.points().enumerate() {
            let j = f(z);
            if j.nrows() != m || j.ncols() != m {
                return Err(Error::Mismatch(format!(
                    "structure at node {node} is {}x{}, expected {m}x{m}",
                    j.nrows(),
                    j.ncols()
                )));
            }
            if j.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { node });
            }
            let norm = square_defect(&j);
            if !(norm <= tol) {
                return Err(Error::NotComplexStructure { node, norm });
            }
            for r in 0..m {
                for c in 0..m {
                    entries.push(j[(r, c)]);
                }
            }
        }
        Ok(StructureField {
            grid: grid.clone(),
            dim,
            entries,
        })
    }

    fn build(grid: &Grid, dim: usize, f: impl Fn(Complex64) -> DMatrix<f64>) -> Self {
        let m = 2 * dim;
        let mut entries = Vec::with_capacity(grid.node_count() * m * m);
        for z in grid.points() {
            let j = f(z);
            for r in 0..m {
                for c in 0..m {
                    entries.push(j[(r, c)]);
                }
            }
        }
        StructureField {
            grid: grid.clone(),
            dim,
            entries,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self, node: usize) -> DMatrix<f64> {
        let m = 2 * self.dim;
        DMatrix::from_row_slice(m, m, &self.entries[node * m * m..(node + 1) * m * m])
    }

    /// `out = J(node)·v` with `v`, `out` as complex vectors.
    #[inline]
    pub fn apply(&self, node: usize, v: &[Complex64], out: &mut [Complex64]) {
        let m = 2 * self.dim;
        let block = &self.entries[node * m * m..(node + 1) * m * m];
        for (r, o) in out.iter_mut().enumerate() {
            let row_re = &block[(2 * r) * m..(2 * r + 1) * m];
            let row_im = &block[(2 * r + 1) * m..(2 * r + 2) * m];
            let mut re = 0.0;
            let mut im = 0.0;
            for (c, z) in v.iter().enumerate() {
                re += row_re[2 * c] * z.re + row_re[2 * c + 1] * z.im;
                im += row_im[2 * c] * z.re + row_im[2 * c + 1] * z.im;
            }
            *o = Complex64::new(re, im);
        }
    }

    /// `sup_z ‖J(z) − J_st‖₂` over domain nodes.
    pub fn distance_to_standard(&self) -> f64 {
        let st = standard_structure(self.dim);
        (0..self.grid.node_count())
            .filter(|&k| self.grid.node_in_domain(k))
            .map(|k| (self.matrix(k) - &st).singular_values().max())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_counts_and_nan() {
        let g = Grid::disk(1.0, 5).unwrap();
        assert!(MapSample::new(g.clone(), 1, vec![Complex64::new(0.0, 0.0); 24]).is_err());
        let mut v = vec![Complex64::new(0.0, 0.0); 25];
        v[7] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(MapSample::new(g, 1, v), Err(Error::NonFinite { node: 7 })));
    }

    #[test]
    fn structure_field_validates_square() {
        let g = Grid::disk(1.0, 5).unwrap();
        assert!(StructureField::from_fn(&g, 1, |_| standard_structure(1)).is_ok());
        let bad = StructureField::from_fn(&g, 1, |_| DMatrix::identity(2, 2));
        assert!(matches!(bad, Err(Error::NotComplexStructure { .. })));
        let conj = StructureField::from_fn(&g, 1, |_| {
            let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
            &p * standard_structure(1) * p.try_inverse().unwrap()
        });
        assert!(conj.is_ok());
    }

    #[test]
    fn standard_apply_is_multiplication_by_i() {
        let g = Grid::disk(1.0, 3).unwrap();
        let j = StructureField::standard(&g, 2);
        let v = [Complex64::new(1.5, -2.0), Complex64::new(0.25, 3.0)];
        let mut out = [Complex64::new(0.0, 0.0); 2];
        j.apply(0, &v, &mut out);
        for c in 0..2 {
            assert_eq!(out[c], Complex64::i() * v[c]);
        }
        assert_eq!(j.distance_to_standard(), 0.0);
    }

    #[test]
    fn oscillation_scales_linearly() {
        let g = Grid::disk(1.0, 9).unwrap();
        let u = MapSample::scalar(&g, |z| z * z).unwrap();
        let o1 = u.oscillation();
        let o2 = u.scaled(0.5).oscillation();
        assert!((o2 - 0.5 * o1).abs() < 1e-14);
    }
}

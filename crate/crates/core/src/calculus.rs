//! Discrete derivatives and the energy functionals.
//!
//! Energy follows the area convention `E(u) = ∫ |∂ₓu|² + |∂ᵧu|²` with no
//! factor ½; harmonic-map texts usually carry the ½.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Region, MIN_RESOLUTION};
use crate::sample::MapSample;

/// Nodal partial derivatives, laid out like [`MapSample::values`].
#[derive(Debug, Clone)]
pub struct Gradient {
    pub dim: usize,
    pub dx: Vec<Complex64>,
    pub dy: Vec<Complex64>,
}

impl Gradient {
    /// `|du|² = |∂ₓu|² + |∂ᵧu|²` per node.
    pub fn density(&self) -> Vec<f64> {
        self.dx
            .chunks(self.dim)
            .zip(self.dy.chunks(self.dim))
            .map(|(a, b)| {
                a.iter().map(|z| z.norm_sqr()).sum::<f64>() + b.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .collect()
    }
}

/// Second-order differences: centered inside, one-sided at non-periodic
/// ends, wrapped on the periodic cylinder axis.
pub fn gradient(u: &MapSample) -> Result<Gradient> {
    let g = u.grid();
    let [n0, n1] = g.shape();
    if n0 < MIN_RESOLUTION || n1 < MIN_RESOLUTION {
        return Err(Error::ResolutionTooSmall {
            axis: if n0 < MIN_RESOLUTION { 0 } else { 1 },
            got: n0.min(n1),
            need: MIN_RESOLUTION,
        });
    }
    let dim = u.dim();
    let vals = u.values();
    let [h0, h1] = g.spacing();
    let zero = Complex64::new(0.0, 0.0);
    let mut dx = vec![zero; vals.len()];
    let mut dy = vec![zero; vals.len()];
    let at = |i: usize, j: usize, c: usize| vals[(i * n1 + j) * dim + c];

    for i in 0..n0 {
        for j in 0..n1 {
            for c in 0..dim {
                let k = (i * n1 + j) * dim + c;
                dx[k] = if i == 0 {
                    (-3.0 * at(0, j, c) + 4.0 * at(1, j, c) - at(2, j, c)) / (2.0 * h0)
                } else if i == n0 - 1 {
                    (3.0 * at(i, j, c) - 4.0 * at(i - 1, j, c) + at(i - 2, j, c)) / (2.0 * h0)
                } else {
                    (at(i + 1, j, c) - at(i - 1, j, c)) / (2.0 * h0)
                };
                dy[k] = if g.axis(1).periodic {
                    let jp = if j + 1 == n1 { 0 } else { j + 1 };
                    let jm = if j == 0 { n1 - 1 } else { j - 1 };
                    (at(i, jp, c) - at(i, jm, c)) / (2.0 * h1)
                } else if j == 0 {
                    (-3.0 * at(i, 0, c) + 4.0 * at(i, 1, c) - at(i, 2, c)) / (2.0 * h1)
                } else if j == n1 - 1 {
                    (3.0 * at(i, j, c) - 4.0 * at(i, j - 1, c) + at(i, j - 2, c)) / (2.0 * h1)
                } else {
                    (at(i, j + 1, c) - at(i, j - 1, c)) / (2.0 * h1)
                };
            }
        }
    }
    Ok(Gradient { dim, dx, dy })
}

/// Cell quadrature of a nodal scalar: each cell contributes its area times
/// the mean of its four corner values. Summation order is row-major.
pub fn integrate_nodal(grid: &Grid, q: &[f64], region: &Region) -> Result<f64> {
    region.check(grid)?;
    if q.len() != grid.node_count() {
        return Err(Error::Mismatch("nodal field length".into()));
    }
    let area = grid.cell_area();
    let mut total = 0.0;
    for (ci, cj) in grid.cells_in(region) {
        let [a, b, c, d] = grid.cell_corners(ci, cj);
        total += 0.25 * (q[a] + q[b] + q[c] + q[d]) * area;
    }
    Ok(total)
}

/// Per-cell integrals of a nodal scalar over the whole lattice (cells
/// outside the domain are zero). Indexed `ci·c1 + cj`.
pub fn cell_integrals(grid: &Grid, q: &[f64]) -> Vec<f64> {
    let [c0, c1] = grid.cells();
    let area = grid.cell_area();
    let mut out = vec![0.0; c0 * c1];
    for ci in 0..c0 {
        for cj in 0..c1 {
            if grid.cell_in_domain(ci, cj) {
                let [a, b, c, d] = grid.cell_corners(ci, cj);
                out[ci * c1 + cj] = 0.25 * (q[a] + q[b] + q[c] + q[d]) * area;
            }
        }
    }
    out
}

/// `‖du‖²_{L²(region)}`.
pub fn energy(u: &MapSample, region: &Region) -> Result<f64> {
    let grad = gradient(u)?;
    integrate_nodal(u.grid(), &grad.density(), region)
}

/// Energy density `|du|²` at every node.
pub fn energy_density(u: &MapSample) -> Result<Vec<f64>> {
    Ok(gradient(u)?.density())
}

/// `(∫_region |du|^p)^{1/p}`.
pub fn lp_norm_du(u: &MapSample, p: f64, region: &Region) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be finite and ≥ 1, got {p}")));
    }
    let dens = gradient(u)?.density();
    let q: Vec<f64> = dens.iter().map(|d| d.powf(0.5 * p)).collect();
    Ok(integrate_nodal(u.grid(), &q, region)?.powf(1.0 / p))
}

/// `L^p` norm of a nodal vector field (complex components).
pub fn lp_norm_field(grid: &Grid, dim: usize, f: &[Complex64], p: f64, region: &Region) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be finite and ≥ 1, got {p}")));
    }
    let q: Vec<f64> = f
        .chunks(dim)
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().powf(0.5 * p))
        .collect();
    Ok(integrate_nodal(grid, &q, region)?.powf(1.0 / p))
}

/// Copies the nodes of `region`'s cell box into a sample on the sub-grid.
pub fn restrict(u: &MapSample, region: &Region) -> Result<MapSample> {
    let g = u.grid();
    let sub = g.window(region)?;
    if sub.cells_in(&Region::full(&sub)).next().is_none() {
        return Err(Error::InvalidRegion("region contains no domain cells".into()));
    }
    let [o0, o1] = [
        sub.axis(0).offset - g.axis(0).offset,
        sub.axis(1).offset - g.axis(1).offset,
    ];
    let dim = u.dim();
    let [m0, m1] = sub.shape();
    let mut values = Vec::with_capacity(m0 * m1 * dim);
    for i in 0..m0 {
        for j in 0..m1 {
            values.extend_from_slice(u.at(g.index(i + o0, j + o1)));
        }
    }
    MapSample::new(sub, dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn origin() -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    #[test]
    fn gradient_of_identity_is_exact() {
        let g = Grid::disk(1.0, 33).unwrap();
        let u = MapSample::scalar(&g, |z| z).unwrap();
        let grad = gradient(&u).unwrap();
        for k in 0..g.node_count() {
            assert!((grad.dx[k] - 1.0).norm() < 1e-12);
            assert!((grad.dy[k] - Complex64::i()).norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = Grid::cylinder(0.0, 2.0, 8, 16).unwrap();
        let u = MapSample::constant(&g, &[Complex64::new(2.0, -1.0), Complex64::new(0.5, 0.0)]).unwrap();
        let grad = gradient(&u).unwrap();
        assert!(grad.dx.iter().chain(&grad.dy).all(|z| z.norm() == 0.0));
        assert_eq!(energy(&u, &Region::full(&g)).unwrap(), 0.0);
    }

    fn max_dx_error(n: usize, f: fn(Complex64) -> Complex64, df: fn(Complex64) -> Complex64) -> f64 {
        let g = Grid::disk(1.0, n).unwrap();
        let u = MapSample::scalar(&g, f).unwrap();
        let grad = gradient(&u).unwrap();
        (0..g.node_count())
            .map(|k| (grad.dx[k] - df(g.point(k))).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_is_second_order() {
        // Both stencils are exact on quadratics, so z² has no truncation error
        // at all; the refinement ratio is measured on z³.
        assert!(max_dx_error(21, |z| z * z, |z| 2.0 * z) < 1e-12);
        let coarse = max_dx_error(21, |z| z * z * z, |z| 3.0 * z * z);
        let fine = max_dx_error(41, |z| z * z * z, |z| 3.0 * z * z);
        assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);
    }

    #[test]
    fn energy_of_identity_on_disk() {
        let g = Grid::disk(1.0, 129).unwrap();
        let u = MapSample::scalar(&g, |z| z).unwrap();
        let e = energy(&u, &Region::full(&g)).unwrap();
        assert!((e - 2.0 * PI).abs() < 0.02 * 2.0 * PI, "{e}");
    }

    #[test]
    fn energy_of_exponential_on_cylinder() {
        let g = Grid::cylinder(0.0, 1.0, 64, 64).unwrap();
        let u = MapSample::scalar(&g, |z| z.exp()).unwrap();
        let e = energy(&u, &Region::full(&g)).unwrap();
        let exact = 2.0 * PI * (1f64.exp().powi(2) - 1.0);
        assert!((e - exact).abs() < 0.02 * exact, "{e} vs {exact}");
    }

    #[test]
    fn lp_norms_of_identity() {
        let g = Grid::disk(1.0, 129).unwrap();
        let u = MapSample::scalar(&g, |z| z).unwrap();
        let l2 = lp_norm_du(&u, 2.0, &Region::full(&g)).unwrap();
        assert!((l2 - (2.0 * PI).sqrt()).abs() < 0.02 * (2.0 * PI).sqrt());
        let half = Region::disk(&g, origin(), 0.5).unwrap();
        let l4 = lp_norm_du(&u, 4.0, &half).unwrap();
        let exact = 2f64.sqrt() * (PI / 4.0).powf(0.25);
        assert!((l4 - exact).abs() < 0.02 * exact);
        assert!(lp_norm_du(&u, 0.5, &half).is_err());
        let c = MapSample::constant(&g, &[Complex64::new(1.0, 1.0)]).unwrap();
        assert_eq!(lp_norm_du(&c, 3.0, &half).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_additive_over_unit_segments() {
        let l = 6;
        let g = Grid::cylinder(0.0, l as f64, 10, 32).unwrap();
        let u = MapSample::scalar(&g, |z| (0.7 * z).exp() + (-1.3 * z).exp() * 0.2).unwrap();
        let total = energy(&u, &Region::full(&g)).unwrap();
        let parts: f64 = (0..l)
            .map(|i| energy(&u, &Region::t_band(&g, i as f64, i as f64 + 1.0).unwrap()).unwrap())
            .sum();
        assert!((parts - total).abs() <= 1e-10 * total);
    }

    #[test]
    fn energy_is_dilation_invariant() {
        let r = 0.4;
        let f = |z: Complex64| z * z + (2.0 * z).sin();
        let unit = Grid::disk(1.0, 161).unwrap();
        let small = Grid::disk(r, 161).unwrap();
        let ur = MapSample::scalar(&unit, |z| f(r * z)).unwrap();
        let u = MapSample::scalar(&small, f).unwrap();
        let a = energy(&ur, &Region::full(&unit)).unwrap();
        let b = energy(&u, &Region::full(&small)).unwrap();
        assert!((a - b).abs() < 0.02 * b);
    }

    #[test]
    fn restrict_full_is_identity_and_composes() {
        let g = Grid::strip(0.0, 4.0, 4, 9).unwrap();
        let u = MapSample::scalar(&g, |z| z * z * z).unwrap();
        assert_eq!(restrict(&u, &Region::full(&g)).unwrap(), u);

        let r1 = Region::cells(&g, 2..14, 0..8).unwrap();
        let once = restrict(&u, &r1).unwrap();
        let r2 = Region::cells(once.grid(), 3..9, 0..8).unwrap();
        let twice = restrict(&once, &r2).unwrap();
        let direct = restrict(&u, &Region::cells(&g, 5..11, 0..8).unwrap()).unwrap();
        assert_eq!(twice, direct);
    }

    #[test]
    fn restricted_energy_matches_region_energy() {
        let g = Grid::strip(0.0, 4.0, 16, 17).unwrap();
        let u = MapSample::scalar(&g, |z| (z * 0.8).exp()).unwrap();
        let r = Region::t_band(&g, 1.0, 2.0).unwrap();
        let sub = restrict(&u, &r).unwrap();
        let a = energy(&sub, &Region::full(sub.grid())).unwrap();
        let b = energy(&u, &r).unwrap();
        // Window boundary rows switch to one-sided differences; allow one cell.
        let dens = energy_density(&u).unwrap();
        let cell = cell_integrals(&g, &dens).into_iter().fold(0.0, f64::max);
        assert!((a - b).abs() <= cell, "{a} vs {b}");
    }
}

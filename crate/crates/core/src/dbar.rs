//! Cauchy-Green transform and `∂̄` operators.
//!
//! The transform is `(Tf)(z) = (1/π) ∬ f(w)/(z − w) dA(w)`, so that
//! `∂̄(Tf) = f` with `∂̄ = ½(∂ₓ + i∂ᵧ)`. Sources are the lattice nodes of a disk
//! grid, each carrying the part of its dual `h × h` cell inside the disk.
//! Cells within two spacings of the target are integrated exactly; the rest
//! use the midpoint rule.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{gradient, lp_norm_du, lp_norm_field};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridKind, Region};
use crate::sample::{standard_structure, MapSample, StructureField};

/// Default certificate threshold for [`TotallyRealSubspace`].
pub const TOTAL_REAL_TOL: f64 = 1e-8;
/// Default relative tolerance of the boundary check in [`reflect_extend`].
pub const BOUNDARY_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A totally real `n`-plane `W ⊂ ℂⁿ`, stored as an orthonormal real basis in
/// interleaved coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TotallyRealSubspace {
    basis: DMatrix<f64>,
    lower_angle: f64,
    /// `W = ℝⁿ`, where the reflection is plain conjugation.
    standard: bool,
}

impl TotallyRealSubspace {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        Self::with_tol(basis, TOTAL_REAL_TOL)
    }

    /// Accepts the span of the columns of a `2n × n` real matrix when the
    /// smallest singular value of `[B | J_st B]` (B orthonormalized) exceeds `tol`.
    pub fn with_tol(basis: DMatrix<f64>, tol: f64) -> Result<Self> {
        let (rows, n) = basis.shape();
        if n == 0 || rows != 2 * n {
            return Err(Error::Mismatch(format!("basis is {rows}x{n}, expected 2n x n")));
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(invalid("basis has non-finite entries"));
        }
        let sv = basis.clone().svd(true, false);
        let smax = sv.singular_values.max();
        let smin = sv.singular_values.min();
        if !(smax > 0.0 && smin > tol * smax) {
            return Err(Error::NotTotallyReal(format!("basis has rank < {n}")));
        }
        let standard = (0..n).all(|c| basis.row(2 * c + 1).iter().all(|&x| x == 0.0));
        let q = basis.qr().q();
        let jq = standard_structure(n) * &q;
        let mut both = DMatrix::zeros(2 * n, 2 * n);
        both.view_mut((0, 0), (2 * n, n)).copy_from(&q);
        both.view_mut((0, n), (2 * n, n)).copy_from(&jq);
        let certificate = both.singular_values().min();
        if !(certificate > tol) {
            return Err(Error::NotTotallyReal(format!(
                "W ∩ J_st·W is nontrivial (σ_min = {certificate:.3e})"
            )));
        }
        let cos_max = (q.transpose() * &jq).singular_values().max().min(1.0);
        Ok(TotallyRealSubspace {
            basis: q,
            lower_angle: cos_max.acos(),
            standard,
        })
    }

    /// `ℝⁿ ⊂ ℂⁿ`.
    pub fn real(n: usize) -> Self {
        Self::rotated(&vec![0.0; n]).expect("ℝⁿ is totally real")
    }

    /// `⊕ₖ e^{iβₖ}ℝ`.
    pub fn rotated(angles: &[f64]) -> Result<Self> {
        let n = angles.len();
        let mut b = DMatrix::zeros(2 * n, n);
        for (k, beta) in angles.iter().enumerate() {
            b[(2 * k, k)] = beta.cos();
            b[(2 * k + 1, k)] = beta.sin();
        }
        Self::new(b)
    }

    /// Real span of the columns of a complex `n × n` matrix.
    pub fn from_complex(a: &DMatrix<Complex64>) -> Result<Self> {
        let n = a.ncols();
        if a.nrows() != n {
            return Err(Error::Mismatch("complex basis must be square".into()));
        }
        let mut b = DMatrix::zeros(2 * n, n);
        for k in 0..n {
            for c in 0..n {
                b[(2 * c, k)] = a[(c, k)].re;
                b[(2 * c + 1, k)] = a[(c, k)].im;
            }
        }
        Self::new(b)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthonormal `2n × n` basis.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Smallest principal angle between `W` and `J_st·W`.
    pub fn lower_angle(&self) -> f64 {
        self.lower_angle
    }

    /// Euclidean distance from `v` to `W`.
    pub fn distance(&self, v: &[Complex64]) -> f64 {
        let x = crate::sample::to_real(v);
        let proj = &self.basis * (self.basis.transpose() * &x);
        (x - proj).norm()
    }

    /// The anti-linear reflection fixing `W`: `τ_W(v) = A·conj(A⁻¹v)` where
    /// the columns of `A` span `W` over `ℝ`.
    pub fn reflect(&self, v: &[Complex64]) -> Vec<Complex64> {
        if self.standard {
            return v.iter().map(|z| z.conj()).collect();
        }
        let a = self.complex_basis();
        let inv = a.clone().try_inverse().expect("totally real basis is a complex basis");
        let coeffs = inv * nalgebra::DVector::from_column_slice(v);
        let conj = coeffs.map(|z| z.conj());
        (a * conj).iter().copied().collect()
    }

    fn complex_basis(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |c, k| Complex64::new(self.basis[(2 * c, k)], self.basis[(2 * c + 1, k)]))
    }
}

/// `½(∂ₓu + i∂ᵧu)`.
pub fn dbar_std(u: &MapSample) -> Result<MapSample> {
    let g = gradient(u)?;
    let i = Complex64::i();
    let vals = g.dx.iter().zip(&g.dy).map(|(a, b)| 0.5 * (a + i * b)).collect();
    u.with_values(vals)
}

/// `∂ = ½(∂ₓu − i∂ᵧu)`.
pub fn d_std(u: &MapSample) -> Result<MapSample> {
    let g = gradient(u)?;
    let i = Complex64::i();
    let vals = g.dx.iter().zip(&g.dy).map(|(a, b)| 0.5 * (a - i * b)).collect();
    u.with_values(vals)
}

fn check_structure(u: &MapSample, j: &StructureField) -> Result<()> {
    if j.grid() != u.grid() || j.dim() != u.dim() {
        return Err(Error::Mismatch("structure field and sample differ in grid or dimension".into()));
    }
    Ok(())
}

/// `½(∂ₓu + J(z)·∂ᵧu)`.
pub fn dbar_j(u: &MapSample, j: &StructureField) -> Result<MapSample> {
    check_structure(u, j)?;
    let g = gradient(u)?;
    let dim = u.dim();
    let mut out = vec![ZERO; g.dx.len()];
    let mut jdy = vec![ZERO; dim];
    for node in 0..u.grid().node_count() {
        let r = node * dim..(node + 1) * dim;
        j.apply(node, &g.dy[r.clone()], &mut jdy);
        for (o, (a, b)) in out[r.clone()].iter_mut().zip(g.dx[r].iter().zip(&jdy)) {
            *o = 0.5 * (a + b);
        }
    }
    u.with_values(out)
}

/// `∬_{[x0,x1]×[y0,y1]} dA(ζ)/ζ` in closed form, for the rectangle in
/// coordinates centered at the target.
fn rect_inverse_integral(x0: f64, x1: f64, y0: f64, y1: f64) -> Complex64 {
    // Antiderivatives with ∂²G/∂ξ∂η = ξ/r² and η/r² respectively.
    fn xlog(a: f64, r2: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else {
            0.5 * a * r2.ln()
        }
    }
    fn xatan(a: f64, num: f64, den: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else {
            a * (num / den).atan()
        }
    }
    let g_xi = |x: f64, y: f64| xlog(y, x * x + y * y) + xatan(x, y, x);
    let g_eta = |x: f64, y: f64| xlog(x, x * x + y * y) + xatan(y, x, y);
    let box_sum = |g: &dyn Fn(f64, f64) -> f64| g(x1, y1) - g(x0, y1) - g(x1, y0) + g(x0, y0);
    // 1/ζ = (ξ − iη)/r².
    Complex64::new(box_sum(&g_xi), -box_sum(&g_eta))
}

/// Area of `[x0, x1] × [y0, y1] ∩ {|w| < r}`.
fn square_disk_area(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    let s = |x: f64| (r * r - x * x).max(0.0).sqrt();
    // ∫ √(r² − x²) dx.
    let big_s = |x: f64| {
        let x = x.clamp(-r, r);
        0.5 * (x * s(x) + r * r * (x / r).asin())
    };
    let mut cuts = vec![x0, x1];
    for y in [y0, y1] {
        if y.abs() <= r {
            let c = s(y);
            cuts.extend([-c, c]);
        }
    }
    cuts.extend([-r, r]);
    cuts.retain(|&c| c >= x0 && c <= x1);
    cuts.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let m = 0.5 * (a + b);
        if m.abs() >= r {
            continue;
        }
        let sm = s(m);
        let upper_is_curve = sm < y1;
        let lower_is_curve = -sm > y0;
        let up = if upper_is_curve { sm } else { y1 };
        let lo = if lower_is_curve { -sm } else { y0 };
        if up <= lo {
            continue;
        }
        let curve = big_s(b) - big_s(a);
        let top = if upper_is_curve { curve } else { y1 * (b - a) };
        let bottom = if lower_is_curve { -curve } else { y0 * (b - a) };
        area += top - bottom;
    }
    area
}

/// Cauchy-Green transform of `f` (componentwise), evaluated at every node of
/// the lattice, including bounding-box nodes outside the disk.
///
/// Each node whose dual cell meets the disk is a source weighted by the
/// covered fraction of its cell, so values at nodes just outside the disk
/// enter with small weight.
pub fn cauchy_transform(f: &MapSample) -> Result<MapSample> {
    let grid = f.grid();
    let GridKind::Disk { radius } = grid.kind() else {
        return Err(invalid(format!(
            "the Cauchy transform supports disk grids only, got {}",
            grid.kind().name()
        )));
    };
    if !grid.is_standard() {
        return Err(invalid("the Cauchy transform needs a full disk lattice"));
    }
    let dim = f.dim();
    let [_, n1] = grid.shape();
    let [h0, h1] = grid.spacing();
    let sources: Vec<(usize, f64)> = (0..grid.node_count())
        .filter_map(|k| {
            let w = grid.point(k);
            let a = square_disk_area(w.re - 0.5 * h0, w.re + 0.5 * h0, w.im - 0.5 * h1, w.im + 0.5 * h1, radius);
            (a > 0.0).then_some((k, a / (h0 * h1)))
        })
        .collect();
    let weight = h0 * h1 / std::f64::consts::PI;
    let near = 2usize;

    let values: Vec<Complex64> = (0..grid.node_count())
        .into_par_iter()
        .flat_map_iter(|t| {
            let z = grid.point(t);
            let (ti, tj) = (t / n1, t % n1);
            let mut acc = vec![ZERO; dim];
            for &(s, frac) in &sources {
                let (si, sj) = (s / n1, s % n1);
                let w = grid.point(s);
                let k = if si.abs_diff(ti) <= near && sj.abs_diff(tj) <= near {
                    let (dx, dy) = (w.re - z.re, w.im - z.im);
                    // ∬ 1/(z − w) = −∬ 1/ζ with ζ = w − z.
                    -rect_inverse_integral(dx - 0.5 * h0, dx + 0.5 * h0, dy - 0.5 * h1, dy + 0.5 * h1)
                        / std::f64::consts::PI
                } else {
                    weight / (z - w)
                };
                let k = k * frac;
                for (a, v) in acc.iter_mut().zip(f.at(s)) {
                    *a += k * v;
                }
            }
            acc
        })
        .collect();
    f.with_values(values)
}

/// `‖∂(Tf)‖_p / ‖f‖_p` over `Disk(0.9R)`, away from the kink of `Tf` on
/// the boundary circle.
pub fn cz_ratio(f: &MapSample, p: f64) -> Result<f64> {
    let grid = f.grid();
    let GridKind::Disk { radius } = grid.kind() else {
        return Err(invalid("cz_ratio needs a disk grid"));
    };
    let region = Region::disk(grid, ZERO, 0.9 * radius)?;
    let denom = lp_norm_field(grid, f.dim(), f.values(), p, &region)?;
    if denom == 0.0 {
        return Ok(0.0);
    }
    let dtf = d_std(&cauchy_transform(f)?)?;
    Ok(lp_norm_field(grid, f.dim(), dtf.values(), p, &region)? / denom)
}

/// Empirical lower estimate of `‖∂∘T‖_{L^p→L^p}` on `Disk(1)`; see [`cz_norm_estimate_on`].
pub fn cz_norm_estimate(p: f64, trials: usize, seed: u64) -> Result<f64> {
    cz_norm_estimate_on(&Grid::disk(1.0, 81)?, p, trials, seed)
}

/// Maximum of [`cz_ratio`] over `trials` test functions. The first is the
/// constant `f ≡ 1` (ratio 0); the others are `f = ∂̄φ` for seeded random
/// `φ = bump × polynomial` compactly supported inside the disk.
pub fn cz_norm_estimate_on(grid: &Grid, p: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be > 1, got {p}")));
    }
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let GridKind::Disk { radius } = grid.kind() else {
        return Err(invalid("cz_norm_estimate needs a disk grid"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = cz_ratio(&MapSample::constant(grid, &[Complex64::new(1.0, 0.0)])?, p)?;
    for _ in 1..trials {
        let c = Complex64::from_polar(0.3 * radius * rng.gen::<f64>().sqrt(), std::f64::consts::TAU * rng.gen::<f64>());
        let rho = (0.9 * radius - c.norm()) * rng.gen_range(0.5..1.0);
        let mut coef = [[ZERO; 3]; 3];
        for (j, row) in coef.iter_mut().enumerate() {
            for (k, a) in row.iter_mut().enumerate() {
                let scale = rho.powi(-((j + k) as i32));
                *a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            }
        }
        let f = MapSample::scalar(grid, |z| dbar_bump_poly(z - c, rho, &coef))?;
        best = best.max(cz_ratio(&f, p)?);
    }
    Ok(best)
}

/// `∂̄[(1 − |ζ|²/ρ²)⁴₊ · Σ a_jk ζ^j ζ̄^k]`.
fn dbar_bump_poly(zeta: Complex64, rho: f64, coef: &[[Complex64; 3]; 3]) -> Complex64 {
    let s = zeta.norm_sqr() / (rho * rho);
    if s >= 1.0 {
        return ZERO;
    }
    let b = (1.0 - s).powi(4);
    let db = -4.0 * (1.0 - s).powi(3) * zeta / (rho * rho);
    let zb = zeta.conj();
    let mut q = ZERO;
    let mut dq = ZERO;
    for (j, row) in coef.iter().enumerate() {
        for (k, a) in row.iter().enumerate() {
            q += a * zeta.powu(j as u32) * zb.powu(k as u32);
            if k > 0 {
                dq += a * k as f64 * zeta.powu(j as u32) * zb.powu(k as u32 - 1);
            }
        }
    }
    db * q + b * dq
}

/// `ε_p = 1/(1 + C_p)`.
pub fn epsilon_p(c_p: f64) -> Result<f64> {
    if !(c_p >= 0.0) {
        return Err(invalid(format!("C_p must be ≥ 0, got {c_p}")));
    }
    Ok(1.0 / (1.0 + c_p))
}

/// Outcome of [`neumann_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Ratio of successive residuals.
    pub contraction: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Exponent of the monitoring norm.
    pub p: f64,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        NeumannOptions {
            tol: 1e-8,
            max_iter: 50,
            p: 2.0,
        }
    }
}

/// Largest `‖J(z) − J_st‖₂` over every lattice node.
fn sup_distance(j: &StructureField) -> f64 {
    let st = standard_structure(j.dim());
    (0..j.grid().node_count())
        .map(|k| (j.matrix(k) - &st).singular_values().max())
        .fold(0.0, f64::max)
}

/// Solves `∂̄_J u = f` with the L² monitor; see [`neumann_solve_with`].
pub fn neumann_solve(f: &MapSample, j: &StructureField, tol: f64, max_iter: usize) -> Result<(MapSample, SolveReport)> {
    neumann_solve_with(f, j, &NeumannOptions { tol, max_iter, p: 2.0 })
}

/// Neumann iteration `g ← f − ½(J − J_st)∂ᵧ(Tg)`, `u = Tg`.
///
/// The residual of `u = Tg` is `‖g + ½(J − J_st)∂ᵧu − f‖_p`, which equals
/// `‖∂̄_J u − f‖_p` through `∂̄(Tg) = g`. It is recomputed from the returned
/// `u` at every step. Non-convergence is reported, not raised.
pub fn neumann_solve_with(f: &MapSample, j: &StructureField, opts: &NeumannOptions) -> Result<(MapSample, SolveReport)> {
    check_structure(f, j)?;
    if !(opts.tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(invalid("max_iter must be ≥ 1"));
    }
    let dist = sup_distance(j);
    if !(dist < 1.0) {
        return Err(Error::HypothesisViolated(format!("‖J − J_st‖_∞ = {dist:.4} ≥ 1")));
    }
    let grid = f.grid();
    let dim = f.dim();
    let region = Region::full(grid);
    let st = StructureField::standard(grid, dim);
    let mut g = f.values().to_vec();
    let mut report = SolveReport {
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
        contraction: Vec::new(),
    };
    let mut u = f.clone();
    let mut jd = vec![ZERO; dim];
    let mut sd = vec![ZERO; dim];
    for m in 1..=opts.max_iter {
        u = cauchy_transform(&f.with_values(g.clone())?)?;
        let dy = gradient(&u)?.dy;
        let mut k = vec![ZERO; g.len()];
        for node in 0..grid.node_count() {
            let r = node * dim..(node + 1) * dim;
            j.apply(node, &dy[r.clone()], &mut jd);
            st.apply(node, &dy[r.clone()], &mut sd);
            for (c, kc) in k[r].iter_mut().enumerate() {
                *kc = 0.5 * (jd[c] - sd[c]);
            }
        }
        let resid: Vec<Complex64> = g.iter().zip(&k).zip(f.values()).map(|((g, k), f)| g + k - f).collect();
        let r = lp_norm_field(grid, dim, &resid, opts.p, &region)?;
        if m > 1 && report.residual > 0.0 {
            report.contraction.push(r / report.residual);
        }
        report.iterations = m;
        report.residual = r;
        if r <= opts.tol {
            report.converged = true;
            break;
        }
        g = f.values().iter().zip(&k).map(|(f, k)| f - k).collect();
    }
    Ok((u, report))
}

/// `‖∂̄_J u − f‖_{L^p(region)}` with the fully discrete operator. Finite
/// differences do not resolve the derivative jump of `Tg` on the boundary
/// circle, so interior regions are the meaningful choice.
pub fn discrete_residual(u: &MapSample, f: &MapSample, j: &StructureField, p: f64, region: &Region) -> Result<f64> {
    let r = dbar_j(u, j)?.sub(f)?;
    lp_norm_field(u.grid(), u.dim(), r.values(), p, region)
}

/// Extends a half-disk sample to the full disk by `u(z̄) = τ_W u(z)`, where
/// `τ_W` is the reflection fixing `W`. Boundary values on the real segment
/// must lie in `W` within `BOUNDARY_TOL × max|u|`.
pub fn reflect_extend(u: &MapSample, w: &TotallyRealSubspace) -> Result<MapSample> {
    reflect_extend_with_tol(u, w, BOUNDARY_TOL)
}

pub fn reflect_extend_with_tol(u: &MapSample, w: &TotallyRealSubspace, tol: f64) -> Result<MapSample> {
    let grid = u.grid();
    let GridKind::HalfDisk { radius } = grid.kind() else {
        return Err(invalid("reflection extension needs a half-disk sample"));
    };
    if !grid.is_standard() {
        return Err(invalid("reflection extension needs a full half-disk lattice"));
    }
    if w.dim() != u.dim() {
        return Err(Error::Mismatch("subspace and sample dimensions differ".into()));
    }
    let [n0, n1] = grid.shape();
    let dim = u.dim();
    let tolerance = tol * u.max_abs();
    let mut worst = 0.0f64;
    for i in 0..n0 {
        let k = grid.index(i, 0);
        if grid.node_in_domain(k) {
            worst = worst.max(w.distance(u.at(k)));
        }
    }
    if worst > tolerance {
        return Err(Error::BoundaryCondition {
            max_distance: worst,
            tolerance,
        });
    }
    let disk = Grid::disk(radius, n0)?;
    let mid = n1 - 1;
    let mut values = vec![ZERO; disk.node_count() * dim];
    for i in 0..n0 {
        for jd in 0..n0 {
            let dst = disk.index(i, jd) * dim;
            if jd >= mid {
                let src = grid.index(i, jd - mid);
                values[dst..dst + dim].copy_from_slice(u.at(src));
            } else {
                let src = grid.index(i, mid - jd);
                values[dst..dst + dim].copy_from_slice(&w.reflect(u.at(src)));
            }
        }
    }
    MapSample::new(disk, dim, values)
}

/// `‖du‖_{L^p(Disk(R/2))} / ‖du‖_{L²(Disk(R))}` for a sample on `Disk(R)`.
pub fn first_apriori_ratio(u: &MapSample, p: f64) -> Result<f64> {
    let grid = u.grid();
    let GridKind::Disk { radius } = grid.kind() else {
        return Err(invalid("first apriori ratio needs a disk sample"));
    };
    if !(p > 2.0) {
        return Err(invalid(format!("p must exceed 2, got {p}")));
    }
    let full = lp_norm_du(u, 2.0, &Region::full(grid))?;
    if full == 0.0 {
        return Err(Error::HypothesisViolated("constant map: ratio undefined".into()));
    }
    let half = Region::disk(grid, Complex64::new(0.0, 0.0), 0.5 * radius)?;
    Ok(lp_norm_du(u, p, &half)? / full)
}

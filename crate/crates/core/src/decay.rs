//! Exponential decay on long cylinders and strips.
//!
//! Holomorphic maps on a cylinder `Z(a, b)` expand as `Σ v_k e^{k(t+iθ)}`;
//! the energy of a unit segment is then a positive combination of
//! `e^{2kt}`, which drives the three-annuli inequality and the geometric
//! decay of energy toward a puncture. On strips with totally real boundary
//! the same role is played by the eigenfunctions of `−∂²_θ` with the
//! boundary conditions of the pair `(W₀, W₁)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::calculus::{energy, lp_norm_du};
use crate::dbar::{TotallyRealSubspace, BOUNDARY_TOL};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridKind, Region};
use crate::sample::MapSample;

/// Threshold below which a discrete strip eigenvalue counts as zero.
pub const EIGEN_TOL: f64 = 1e-8;

/// Smallest strip discretization accepted by [`strip_eigs`].
pub const MIN_STRIP_CELLS: usize = 50;

/// The three-annuli constant `2/e²` for holomorphic cylinder maps.
pub fn gamma_annuli() -> f64 {
    2.0 * (-2.0f64).exp()
}

/// Per-circle Fourier coefficients of a cylinder sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    /// `t` coordinate of each circle.
    pub t: Vec<f64>,
    pub n_theta: usize,
    pub dim: usize,
    /// Reported window `|k| ≤ k_max`.
    pub k_max: usize,
    /// Full DFT, `coeffs[(i·dim + c)·n_theta + m]` with frequency `m` folded to `(−n/2, n/2]`.
    coeffs: Vec<Complex64>,
    /// Least-squares constants `v_k` in `c_k(t) ≈ v_k e^{kt}`, `fitted[c·(2K+1) + k + K]`.
    fitted: Vec<Complex64>,
    /// Relative misfit of `c_k(t) ∝ e^{kt}` over the window; zero for holomorphic input.
    pub holomorphy_residual: f64,
    /// Mean `|u|²` per circle, for the Parseval check.
    circle_mean_sq: Vec<f64>,
}

impl ModeSpectrum {
    pub fn circles(&self) -> usize {
        self.t.len()
    }

    fn slot(&self, k: i64) -> Option<usize> {
        let n = self.n_theta as i64;
        if k <= -((n + 1) / 2) || k > n / 2 {
            return None;
        }
        Some(k.rem_euclid(n) as usize)
    }

    /// `c_k(t_i)` for component `c`; zero outside the resolved band.
    pub fn coefficient(&self, i: usize, c: usize, k: i64) -> Complex64 {
        match self.slot(k) {
            Some(m) => self.coeffs[(i * self.dim + c) * self.n_theta + m],
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Fitted constant `v_k` for `|k| ≤ k_max`.
    pub fn fitted(&self, c: usize, k: i64) -> Complex64 {
        let kk = self.k_max as i64;
        if k.abs() > kk {
            return Complex64::new(0.0, 0.0);
        }
        self.fitted[c * (2 * self.k_max + 1) + (k + kk) as usize]
    }

    /// Largest `|Σ_k |c_k(t)|² − mean |u|²|` over circles, relative to the mean.
    pub fn parseval_defect(&self) -> f64 {
        (0..self.circles())
            .map(|i| {
                let s: f64 = self.coeffs[i * self.dim * self.n_theta..(i + 1) * self.dim * self.n_theta]
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum();
                let m = self.circle_mean_sq[i];
                (s - m).abs() / m.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

/// Per-circle DFT with the default window `K = n_θ/4`.
pub fn cylinder_modes(u: &MapSample) -> Result<ModeSpectrum> {
    cylinder_modes_with(u, u.grid().shape()[1] / 4)
}

/// Per-circle DFT of a sample on a cylinder with window `|k| ≤ k_max`.
pub fn cylinder_modes_with(u: &MapSample, k_max: usize) -> Result<ModeSpectrum> {
    let g = u.grid();
    if !matches!(g.kind(), GridKind::Cylinder { .. }) {
        return Err(invalid("mode analysis needs a cylinder grid"));
    }
    let ax = g.axis(1);
    if ax.offset != 0 || ax.len != g.resolution()[1] {
        return Err(invalid("mode analysis needs complete circles"));
    }
    let n = ax.len;
    if n < 2 * k_max + 2 {
        return Err(Error::ResolutionTooSmall {
            axis: 1,
            got: n,
            need: 2 * k_max + 2,
        });
    }
    let dim = u.dim();
    let rows = g.shape()[0];
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); rows * dim * n];
    let mut circle_mean_sq = vec![0.0; rows];
    for i in 0..rows {
        for c in 0..dim {
            let buf = &mut coeffs[(i * dim + c) * n..(i * dim + c + 1) * n];
            for (j, z) in buf.iter_mut().enumerate() {
                *z = u.at(g.index(i, j))[c];
            }
            circle_mean_sq[i] += buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
            fft.process(buf);
            let scale = 1.0 / n as f64;
            buf.iter_mut().for_each(|z| *z *= scale);
        }
    }
    let t: Vec<f64> = (0..rows).map(|i| g.axis(0).coord(i)).collect();
    let width = 2 * k_max + 1;
    let mut spec = ModeSpectrum {
        t,
        n_theta: n,
        dim,
        k_max,
        coeffs,
        fitted: vec![Complex64::new(0.0, 0.0); dim * width],
        holomorphy_residual: 0.0,
        circle_mean_sq,
    };
    let (mut misfit, mut total) = (0.0, 0.0);
    for c in 0..dim {
        for k in -(k_max as i64)..=k_max as i64 {
            // Center the exponentials to keep e^{kt} in range on long cylinders.
            let t0 = spec.t[spec.circles() / 2];
            let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
            for i in 0..rows {
                let e = (k as f64 * (spec.t[i] - t0)).exp();
                num += spec.coefficient(i, c, k) * e;
                den += e * e;
            }
            let v0 = num / den;
            for i in 0..rows {
                let ck = spec.coefficient(i, c, k);
                misfit += (ck - v0 * (k as f64 * (spec.t[i] - t0)).exp()).norm_sqr();
                total += ck.norm_sqr();
            }
            spec.fitted[c * width + (k + k_max as i64) as usize] = v0 * (-(k as f64) * t0).exp();
        }
    }
    spec.holomorphy_residual = if total > 0.0 { (misfit / total).sqrt() } else { 0.0 };
    Ok(spec)
}

/// `‖du‖²` on the circle at height `t`, from the fitted modes:
/// `4π Σ_k k²|v_k|² e^{2kt}`.
pub fn circle_energy_density(spec: &ModeSpectrum, t: f64) -> Result<f64> {
    let (lo, hi) = (spec.t[0], spec.t[spec.circles() - 1]);
    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    if !(t >= lo - slack && t <= hi + slack) {
        return Err(Error::OutOfDomain(format!("t = {t} outside [{lo}, {hi}]")));
    }
    let kk = spec.k_max as i64;
    let mut s = 0.0;
    for c in 0..spec.dim {
        for k in -kk..=kk {
            let kf = k as f64;
            s += kf * kf * spec.fitted(c, k).norm_sqr() * (2.0 * kf * t).exp();
        }
    }
    Ok(4.0 * PI * s)
}

/// `2E₃/(E₂ + E₄)`, the quantity bounded by `γ` in the three-annuli inequality.
pub fn three_segment_ratio(e2: f64, e3: f64, e4: f64) -> Result<f64> {
    if [e2, e3, e4].iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(invalid("segment energies must be finite and nonnegative"));
    }
    if e2 + e4 <= 0.0 {
        return Err(invalid("outer segments carry no energy"));
    }
    Ok(2.0 * e3 / (e2 + e4))
}

/// Root `λ ≥ 1` of `λ = (γ/2)(λ² + 1)`.
pub fn lambda_from_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid(format!("γ must lie in (0, 1], got {gamma}")));
    }
    Ok((1.0 + (1.0 - gamma * gamma).sqrt()) / gamma)
}

/// `λ^{−(k−2)}E₂ + λ^{−(l−1−k)}E_{l−1}` for segments `Z_1, …, Z_l`.
pub fn decay_envelope(e2: f64, e_last: f64, lambda: f64, k: usize, l: usize) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(invalid(format!("λ must exceed 1, got {lambda}")));
    }
    if k < 2 || k + 1 > l {
        return Err(invalid(format!("need 2 ≤ k ≤ l − 1, got k = {k}, l = {l}")));
    }
    Ok(lambda.powi(-((k - 2) as i32)) * e2 + lambda.powi(-((l - 1 - k) as i32)) * e_last)
}

/// Energies of the unit segments `Z(a+i, a+i+1)` of a cylinder or strip sample.
pub fn segment_energies(u: &MapSample) -> Result<Vec<f64>> {
    let g = u.grid();
    if !matches!(g.kind(), GridKind::Cylinder { .. } | GridKind::Strip { .. }) {
        return Err(invalid("segment energies need a cylinder or strip grid"));
    }
    let ax = g.axis(0);
    let (a, b) = (ax.coord(0), ax.coord(ax.len - 1));
    let count = ((b - a) + 1e-9).floor() as usize;
    (0..count)
        .map(|i| {
            let band = Region::t_band(g, a + i as f64, a + (i + 1) as f64)?;
            energy(u, &band)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemovabilityOptions {
    /// Energy threshold for the tail segments.
    pub epsilon: f64,
    /// First segment of the tail; defaults to half the segment count.
    pub tail_start: Option<usize>,
    /// Required decay factor per segment; defaults to `λ(2/e²)`.
    pub lambda_min: Option<f64>,
    /// Derive `λ_min` from the largest measured three-segment ratio instead.
    pub use_measured_gamma: bool,
    /// Relative slack for envelope violations.
    pub slack: f64,
}

impl Default for RemovabilityOptions {
    fn default() -> Self {
        RemovabilityOptions {
            epsilon: 1e-2,
            tail_start: None,
            lambda_min: None,
            use_measured_gamma: false,
            slack: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `E_i = ‖du‖²` on `Z(a+i, a+i+1)`.
    pub energies: Vec<f64>,
    pub epsilon: f64,
    pub tail_start: usize,
    pub tail_ok: bool,
    /// Slope of the least-squares line through `(i, log E_i)` over nonzero segments.
    pub rate: Option<f64>,
    /// Largest `2E_i/(E_{i−1} + E_{i+1})` over interior triples.
    pub measured_gamma: Option<f64>,
    pub lambda_min: f64,
    /// Segments exceeding the decay envelope by more than the slack.
    pub violations: Vec<usize>,
    pub removable: bool,
}

pub fn removability_diagnostic(u: &MapSample, epsilon: f64) -> Result<DecayReport> {
    removability_diagnostic_with(
        u,
        &RemovabilityOptions {
            epsilon,
            ..Default::default()
        },
    )
}

pub fn removability_diagnostic_with(u: &MapSample, opts: &RemovabilityOptions) -> Result<DecayReport> {
    if !matches!(u.grid().kind(), GridKind::Cylinder { .. }) {
        return Err(invalid("removability needs a cylinder grid"));
    }
    if !(opts.epsilon >= 0.0 && opts.slack >= 0.0) {
        return Err(invalid("epsilon and slack must be nonnegative"));
    }
    let energies = segment_energies(u)?;
    let l = energies.len();
    if l < 5 {
        return Err(invalid(format!("need at least 5 unit segments, got {l}")));
    }
    let tail_start = opts.tail_start.unwrap_or(l / 2);
    if tail_start >= l {
        return Err(invalid(format!("tail start {tail_start} beyond {l} segments")));
    }
    let tail_ok = energies[tail_start..].iter().all(|&e| e <= opts.epsilon);

    let measured_gamma = energies
        .windows(3)
        .filter_map(|w| three_segment_ratio(w[0], w[1], w[2]).ok())
        .reduce(f64::max);
    let lambda_min = match (opts.lambda_min, opts.use_measured_gamma, measured_gamma) {
        (Some(l), _, _) => {
            if !(l > 1.0) {
                return Err(invalid(format!("λ_min must exceed 1, got {l}")));
            }
            l
        }
        (None, true, Some(g)) if g > 0.0 && g < 1.0 => lambda_from_gamma(g)?,
        (None, true, _) => {
            return Err(Error::HypothesisViolated(
                "measured three-segment ratio is not in (0, 1)".into(),
            ))
        }
        (None, false, _) => lambda_from_gamma(gamma_annuli())?,
    };

    let pts: Vec<(f64, f64)> = energies
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.0)
        .map(|(i, &e)| (i as f64, e.ln()))
        .collect();
    let rate = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });

    // Segment i is Z_{i+1} in the one-based numbering of the envelope.
    let mut violations = Vec::new();
    for i in 1..l - 1 {
        let env = decay_envelope(energies[1], energies[l - 2], lambda_min, i + 1, l)?;
        if energies[i] > env * (1.0 + opts.slack) {
            violations.push(i);
        }
    }

    let removable = tail_ok && rate.is_none_or(|r| r <= -lambda_min.ln());
    Ok(DecayReport {
        energies,
        epsilon: opts.epsilon,
        tail_start,
        tail_ok,
        rate,
        measured_gamma,
        lambda_min,
        violations,
        removable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripEigenResult {
    /// Lowest eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    /// `dim_ℝ(W₀ ∩ W₁)`, from singular values of `[B₀ | B₁]`.
    pub zero_dim: usize,
    /// Smallest positive eigenvalue.
    pub lambda1: f64,
    pub gamma_w: f64,
    pub cells: usize,
}

/// Lowest eigenvalues of `−∂²_θ` on `[0, 1]` with `v(0) ∈ W₀`, `v(1) ∈ W₁`
/// and the natural conditions `v′(0) ⟂ W₀`, `v′(1) ⟂ W₁`.
///
/// Piecewise-linear Galerkin discretization of `∫|v′|²` against the
/// consistent mass matrix on `cells` elements; eigenvalues are computed by
/// inertia counting and bisection, and are upper bounds converging at
/// second order.
pub fn strip_eigs(w0: &TotallyRealSubspace, w1: &TotallyRealSubspace, cells: usize) -> Result<StripEigenResult> {
    let n = w0.dim();
    if w1.dim() != n {
        return Err(Error::Mismatch(format!("subspace dimensions {n} and {}", w1.dim())));
    }
    if cells < MIN_STRIP_CELLS {
        return Err(invalid(format!("need at least {MIN_STRIP_CELLS} cells, got {cells}")));
    }
    let (b0, b1) = (w0.basis(), w1.basis());
    let mut both = nalgebra::DMatrix::zeros(2 * n, 2 * n);
    both.view_mut((0, 0), (2 * n, n)).copy_from(b0);
    both.view_mut((0, n), (2 * n, n)).copy_from(b1);
    let rank = both.singular_values().iter().filter(|&&s| s > 1e-8).count();
    let zero_dim = 2 * n - rank;
    // Squared cosines of the principal angles between W₀ and W₁.
    let cos2: Vec<f64> = (b0.transpose() * b1)
        .singular_values()
        .iter()
        .map(|s| (s * s).min(1.0))
        .collect();

    let h = 1.0 / cells as f64;
    let count_below = |sigma: f64| -> usize {
        let db = 1.0 / h - sigma * h / 3.0;
        let di = 2.0 / h - sigma * 2.0 * h / 3.0;
        let o2 = (-1.0 / h - sigma * h / 6.0).powi(2);
        let nudge = |x: f64| if x == 0.0 { f64::MIN_POSITIVE } else { x };
        let mut neg = if db < 0.0 { n } else { 0 };
        let (mut alpha, mut beta) = (nudge(di - o2 / nudge(db)), di);
        for step in 1..cells {
            if step > 1 {
                alpha = nudge(di - o2 / alpha);
                beta = nudge(di - o2 / beta);
            }
            neg += n * (usize::from(alpha < 0.0) + usize::from(beta < 0.0));
        }
        neg + cos2
            .iter()
            .filter(|&&c| db - o2 * (c / alpha + (1.0 - c) / beta) < 0.0)
            .count()
    };

    let wanted = (zero_dim + 2 * n + 2).min(2 * n * cells);
    let mut eigenvalues = Vec::with_capacity(wanted);
    for m in 0..wanted {
        let mut lo = -1.0;
        let mut hi = 1.0;
        while count_below(hi) <= m {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-14 * hi.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > m {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        eigenvalues.push(0.5 * (lo + hi));
    }
    if eigenvalues[..zero_dim].iter().any(|&e| e > EIGEN_TOL) || eigenvalues[zero_dim] <= EIGEN_TOL {
        return Err(Error::Inconsistent(format!(
            "numerical zero eigenvalues disagree with dim(W₀ ∩ W₁) = {zero_dim}"
        )));
    }
    let lambda1 = eigenvalues[zero_dim];
    Ok(StripEigenResult {
        eigenvalues,
        zero_dim,
        lambda1,
        gamma_w: gamma_w(lambda1)?,
        cells,
    })
}

/// `2/(1 + cosh 2√λ₁)`.
pub fn gamma_w(lambda1: f64) -> Result<f64> {
    if !(lambda1 >= 0.0) {
        return Err(invalid(format!("λ₁ must be nonnegative, got {lambda1}")));
    }
    Ok(2.0 / (1.0 + (2.0 * lambda1.sqrt()).cosh()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeStrips {
    pub ratio: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `∫_c^d (ae^{αt} + be^{−αt})² dt` in closed form.
fn strip_integral(a: f64, b: f64, alpha: f64, c: f64, d: f64) -> f64 {
    let up = (2.0 * alpha * c).exp() * (2.0 * alpha * (d - c)).exp_m1() / (2.0 * alpha);
    let down = (-2.0 * alpha * c).exp() * -(-2.0 * alpha * (d - c)).exp_m1() / (2.0 * alpha);
    a * a * up + b * b * down + 2.0 * a * b * (d - c)
}

/// Compares `2∫₁²f²` with `∫₀¹f² + ∫₂³f²` for `f = ae^{αt} + be^{−αt}`,
/// against the bound `2/(1 + cosh 2α)`.
pub fn three_strips_check(a: f64, b: f64, alpha: f64) -> Result<ThreeStrips> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("α must be positive, got {alpha}")));
    }
    if a == 0.0 && b == 0.0 {
        return Err(invalid("(a, b) must be nonzero"));
    }
    let ratio = 2.0 * strip_integral(a, b, alpha, 1.0, 2.0)
        / (strip_integral(a, b, alpha, 0.0, 1.0) + strip_integral(a, b, alpha, 2.0, 3.0));
    let bound = 2.0 / (1.0 + (2.0 * alpha).cosh());
    Ok(ThreeStrips {
        ratio,
        bound,
        holds: ratio <= bound * (1.0 + 1e-12),
    })
}

/// Largest ratio over all `(a, b)`: the top root of `det(A − γB) = 0` for the
/// quadratic forms `A = 2∫₁²`, `B = ∫₀¹ + ∫₂³`. Returns `(γ*, (a, b))`.
pub fn three_strips_sharp(alpha: f64) -> Result<(f64, (f64, f64))> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("α must be positive, got {alpha}")));
    }
    let form = |c: f64, d: f64| {
        let p = strip_integral(1.0, 0.0, alpha, c, d);
        let q = strip_integral(0.0, 1.0, alpha, c, d);
        [p, d - c, q]
    };
    let mid = form(1.0, 2.0);
    let (l, r) = (form(0.0, 1.0), form(2.0, 3.0));
    let a = [2.0 * mid[0], 2.0 * mid[1], 2.0 * mid[2]];
    let b = [l[0] + r[0], l[1] + r[1], l[2] + r[2]];
    let qa = b[0] * b[2] - b[1] * b[1];
    let qb = -(a[0] * b[2] + a[2] * b[0] - 2.0 * a[1] * b[1]);
    let qc = a[0] * a[2] - a[1] * a[1];
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let gamma = (-qb + disc) / (2.0 * qa);
    // Null vector of A − γB.
    let (m00, m01) = (a[0] - gamma * b[0], a[1] - gamma * b[1]);
    let m11 = a[2] - gamma * b[2];
    let v = if m00.abs() + m01.abs() >= m01.abs() + m11.abs() {
        (-m01, m00)
    } else {
        (m11, -m01)
    };
    let norm = v.0.hypot(v.1);
    Ok((gamma, (v.0 / norm, v.1 / norm)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripScan {
    pub alpha: f64,
    pub worst_ratio: f64,
    pub worst_ab: (f64, f64),
    pub bound: f64,
    pub violations: usize,
    pub evaluated: usize,
}

/// Scans `(a, b)` over an `n × n` lattice of `[−1, 1]²`, then refines the
/// best direction by golden-section search on the angle.
pub fn three_strips_scan(alpha: f64, n: usize) -> Result<StripScan> {
    if n < 2 {
        return Err(invalid("scan needs at least 2 points per axis"));
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut violations = 0;
    let mut evaluated = 0;
    let mut bound = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let b = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let r = three_strips_check(a, b, alpha)?;
            evaluated += 1;
            bound = r.bound;
            if !r.holds {
                violations += 1;
            }
            if r.ratio > best.0 {
                best = (r.ratio, b.atan2(a));
            }
        }
    }
    let f = |phi: f64| three_strips_check(phi.cos(), phi.sin(), alpha).map(|r| r.ratio);
    let width = PI / (n - 1) as f64;
    let (mut lo, mut hi) = (best.1 - width, best.1 + width);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        }
        evaluated += 1;
    }
    let phi = if f1 > f2 { x1 } else { x2 };
    let refined = f(phi)?;
    if refined > bound * (1.0 + 1e-12) {
        violations += 1;
    }
    let (worst_ratio, angle) = if refined > best.0 { (refined, phi) } else { best };
    Ok(StripScan {
        alpha,
        worst_ratio,
        worst_ab: (angle.cos(), angle.sin()),
        bound,
        violations,
        evaluated,
    })
}

/// `p* = 2/(1 − α)`: `z^α` on a corner lies in `L^{1,p}` exactly for `p < p*`.
pub fn corner_sobolev_exponent(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("α must lie in (0, 1), got {alpha}")));
    }
    Ok(2.0 / (1.0 - alpha))
}

/// `4π/(2π − log λ_b)`, the integrability exponent from boundary decay rate `λ_b`.
pub fn boundary_decay_exponent(lambda_b: f64) -> Result<f64> {
    if !(lambda_b > 1.0 && lambda_b.ln() < TAU) {
        return Err(invalid(format!("λ_b must lie in (1, e^{{2π}}), got {lambda_b}")));
    }
    Ok(2.0 * TAU / (TAU - lambda_b.ln()))
}

/// Cumulative `‖d(z^α)‖_{L^p}` over the half-annuli `e^{−k} ≤ |z| ≤ 1`,
/// `Im z ≥ 0`, for `k = 1, …, rings`. Each ring `e^{−(k+1)} ≤ |z| < e^{−k}`
/// is sampled on its own half-disk lattice of `n` nodes across, so the mesh
/// refines toward the corner.
pub fn corner_ring_norms(alpha: f64, p: f64, rings: usize, n: usize) -> Result<Vec<f64>> {
    corner_sobolev_exponent(alpha)?;
    if rings == 0 {
        return Err(invalid("need at least one ring"));
    }
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(rings);
    for k in 0..rings {
        let outer = (-(k as f64)).exp();
        let grid = Grid::half_disk(outer, n)?;
        let u = MapSample::scalar(&grid, |z| z.powf(alpha))?;
        let ring = Region::annulus(&grid, Complex64::new(0.0, 0.0), outer * (-1.0f64).exp(), outer)?;
        acc += lp_norm_du(&u, p, &ring)?.powf(p);
        out.push(acc.powf(1.0 / p));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    /// `‖du‖²` on each unit segment `Θ(a+i, a+i+1)`.
    pub energies: Vec<f64>,
    pub epsilon: f64,
    /// First segment with energy above `ε`, if any.
    pub first_violation: Option<usize>,
    /// `max |u(x) − u(y)|` over all nodes.
    pub oscillation: f64,
    pub all_below: bool,
}

/// Energy gate for strip maps with boundary on `W₀` (`θ = 0`) and `W₁` (`θ = 1`):
/// a nonconstant map must put more than `ε` on some unit segment.
pub fn nonconstancy_energy_gate(
    u: &MapSample,
    w0: &TotallyRealSubspace,
    w1: &TotallyRealSubspace,
    epsilon: f64,
) -> Result<GateReport> {
    let g = u.grid();
    if !matches!(g.kind(), GridKind::Strip { .. }) {
        return Err(invalid("energy gate needs a strip grid"));
    }
    if w0.dim() != u.dim() || w1.dim() != u.dim() {
        return Err(Error::Mismatch("subspace and target dimensions differ".into()));
    }
    let ax = g.axis(1);
    if ax.offset != 0 || ax.len != g.resolution()[1] {
        return Err(invalid("energy gate needs both boundary rows"));
    }
    let tolerance = BOUNDARY_TOL * u.max_abs().max(1.0);
    let mut max_distance: f64 = 0.0;
    for i in 0..g.shape()[0] {
        max_distance = max_distance.max(w0.distance(u.at(g.index(i, 0))));
        max_distance = max_distance.max(w1.distance(u.at(g.index(i, ax.len - 1))));
    }
    if max_distance > tolerance {
        return Err(Error::BoundaryCondition {
            max_distance,
            tolerance,
        });
    }
    let energies = segment_energies(u)?;
    let first_violation = energies.iter().position(|&e| e > epsilon);
    Ok(GateReport {
        energies,
        epsilon,
        first_violation,
        oscillation: u.oscillation(),
        all_below: first_violation.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_integral_matches_midpoint_sum() {
        let (a, b, al) = (0.7, -1.3, 0.9);
        let n = 20000;
        let h = 1.0 / n as f64;
        let brute: f64 = (0..n)
            .map(|i| {
                let t = 1.0 + (i as f64 + 0.5) * h;
                (a * (al * t).exp() + b * (-al * t).exp()).powi(2) * h
            })
            .sum();
        assert!((strip_integral(a, b, al, 1.0, 2.0) - brute).abs() < 1e-7);
    }

    #[test]
    fn sharp_constant_is_attained_by_its_vector() {
        let (g, (a, b)) = three_strips_sharp(0.8).unwrap();
        let r = three_strips_check(a, b, 0.8).unwrap();
        assert!((r.ratio - g).abs() < 1e-12);
        assert!(g < r.bound);
    }

    #[test]
    fn fold_slot_covers_nyquist() {
        let g = Grid::cylinder(0.0, 1.0, 4, 8).unwrap();
        let u = MapSample::scalar(&g, |z| Complex64::new((4.0 * z.im).cos(), 0.0)).unwrap();
        let s = cylinder_modes_with(&u, 2).unwrap();
        assert!((s.coefficient(0, 0, 4).re - 1.0).abs() < 1e-12);
        assert_eq!(s.coefficient(0, 0, -4), Complex64::new(0.0, 0.0));
    }
}

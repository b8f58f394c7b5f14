//! Subcommand parameters and analyses.

use std::f64::consts::{E, PI};
use std::path::PathBuf;

use jcurve::bubble::{self, BubbleOptions, SequenceFamily};
use jcurve::calculus::lp_norm_field;
use jcurve::dbar::{self, NeumannOptions, TotallyRealSubspace};
use jcurve::decay::{self, RemovabilityOptions};
use jcurve::hyperbolic::{self, CollarSpec, PantsEdge, PantsGraph, PlumbingParams};
use jcurve::io::read_sample;
use jcurve::sample::standard_structure;
use jcurve::{Grid, GridKind, MapSample, Region, StructureField};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{cell, fmt_num, PlotSpec, Series, Table};
use crate::{positive, CliError, Context, Outcome, Params};

type Res = Result<Outcome, CliError>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn plot(title: &str, x: &str, y: &str, log_y: bool) -> PlotSpec {
    PlotSpec {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        log_y,
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Config(e.to_string()))
}

fn resolution(name: &str, n: usize, min: usize, max: usize) -> Result<(), String> {
    if (min..=max).contains(&n) {
        Ok(())
    } else {
        Err(format!("{name} must lie in [{min}, {max}], got {n}"))
    }
}

// ---------------------------------------------------------------- collar

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollarParams {
    pub lengths: Vec<f64>,
    pub a_star: f64,
    /// Lattice spacing of the curvature check.
    pub curvature_h: f64,
}

impl Default for CollarParams {
    fn default() -> Self {
        CollarParams {
            lengths: vec![0.25, 0.5, 1.0],
            a_star: hyperbolic::DEFAULT_A_STAR,
            curvature_h: 1e-3,
        }
    }
}

impl Params for CollarParams {
    fn validate(&self) -> Result<(), String> {
        if self.lengths.is_empty() {
            return Err("lengths must not be empty".into());
        }
        for &l in &self.lengths {
            positive("length", l)?;
        }
        positive("a_star", self.a_star)?;
        positive("curvature_h", self.curvature_h)?;
        if self.curvature_h > 0.1 {
            return Err(format!("curvature_h must be at most 0.1, got {}", self.curvature_h));
        }
        Ok(())
    }
}

/// Largest `|K + 1|` of the collar metric over `|ρ| ≤ min(1, π²/2ℓ)`.
fn curvature_defect(l: f64, h: f64) -> Result<f64, CliError> {
    let r = (0.5 * PI * PI / l).min(1.0);
    let n = (2.0 * r / h).round() as usize + 1;
    let g = Grid::new(GridKind::Strip { a: -r, b: r }, [n, 5])?;
    let factor = g
        .points()
        .map(|z| hyperbolic::collar_metric_factor(l, z.re))
        .collect::<jcurve::Result<Vec<f64>>>()?;
    let k = hyperbolic::gauss_curvature(&g, &factor)?;
    Ok(k.into_iter().flatten().map(|v| (v + 1.0).abs()).fold(0.0, f64::max))
}

pub fn collar(p: &CollarParams, _: &Context) -> Res {
    let mut table = Table::new(&[
        "length",
        "log_radius_upper",
        "annulus_log_radius_bound",
        "collar_width",
        "width_lower_bound",
        "bound_holds",
        "max_curvature_defect",
    ]);
    let mut rows = Vec::new();
    let (mut upper, mut width, mut lower) = (Vec::new(), Vec::new(), Vec::new());
    for &l in &p.lengths {
        let spec = CollarSpec::new(l, p.a_star)?;
        let up = hyperbolic::collar_log_radius_upper(l)?;
        let ann = hyperbolic::geodesic_annulus_log_radius_bound(l)?;
        let w = if l <= 1.0 { Some(hyperbolic::collar_width(&spec)?) } else { None };
        let lb = hyperbolic::collar_width_lower_bound(&spec);
        let holds = w.map(|w| w >= lb);
        let defect = curvature_defect(l, p.curvature_h)?;
        table.push(vec![
            fmt_num(l),
            fmt_num(up),
            fmt_num(ann),
            cell(w),
            fmt_num(lb),
            holds.map(|b| b.to_string()).unwrap_or_default(),
            fmt_num(defect),
        ]);
        rows.push(json!({
            "length": l,
            "log_radius_upper": up,
            "annulus_log_radius_bound": ann,
            "collar_width": w,
            "width_lower_bound": lb,
            "bound_holds": holds,
            "max_curvature_defect": defect,
        }));
        upper.push((l, up));
        lower.push((l, lb));
        if let Some(w) = w {
            width.push((l, w));
        }
    }
    Ok(Outcome {
        result: json!({ "a_star": p.a_star, "rows": rows }),
        tables: vec![("collar", table)],
        plots: vec![(
            "collar",
            plot("Collar bounds", "geodesic length", "log radius / width", true),
            vec![
                Series::new("upper bound", upper),
                Series::new("collar width", width),
                Series::new("width lower bound", lower),
            ],
        )],
        failure: None,
    })
}

// ---------------------------------------------------------------- plumb

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlumbParams {
    pub graph: PantsGraph,
    /// Parameters of each family member, in sequence order.
    pub family: Vec<PlumbingParams>,
}

impl Default for PlumbParams {
    /// Genus-two surface from two pants glued along three circles, with the
    /// first neck pinching.
    fn default() -> Self {
        let edge = PantsEdge { v: [0, 1], marked: false };
        PlumbParams {
            graph: PantsGraph {
                vertices: 2,
                edges: vec![edge; 3],
                tails: vec![],
                marked_tails: vec![],
            },
            family: [1e-1, 1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&s| PlumbingParams {
                    edges: vec![Some(c(s, 0.0)), Some(c(0.3, 0.0)), Some(c(0.0, 0.2))],
                    tails: vec![],
                })
                .collect(),
        }
    }
}

impl Params for PlumbParams {
    fn validate(&self) -> Result<(), String> {
        if self.family.is_empty() {
            return Err("family must not be empty".into());
        }
        Ok(())
    }
}

pub fn plumb(p: &PlumbParams, _: &Context) -> Res {
    let topology = p.graph.validate()?;
    let reports = p
        .family
        .iter()
        .map(|m| hyperbolic::validate_family(&p.graph, m))
        .collect::<jcurve::Result<Vec<_>>>()?;
    let trend = hyperbolic::degeneration_trend(&reports)?;
    let mut table = Table::new(&["member", "edge", "node", "neck_modulus", "model_length", "twist"]);
    for (i, r) in reports.iter().enumerate() {
        for e in &r.edges {
            table.push(vec![
                i.to_string(),
                e.edge.to_string(),
                e.node.to_string(),
                cell(e.neck_modulus),
                cell(e.model_length),
                cell(e.twist),
            ]);
        }
    }
    let series = trend
        .iter()
        .map(|t| {
            let pts = t.moduli.iter().enumerate().map(|(i, &m)| (i as f64, m)).collect();
            Series::new(format!("edge {}", t.edge), pts)
        })
        .collect();
    Ok(Outcome {
        result: json!({
            "genus": topology.genus,
            "marked": topology.marked,
            "boundary": topology.boundary,
            "teich_dimension": topology.teich_dimension(),
            "members": to_json(&reports)?,
            "trend": to_json(&trend)?,
        }),
        tables: vec![("plumb", table)],
        plots: vec![("plumb", plot("Neck moduli", "member", "neck modulus", false), series)],
        failure: None,
    })
}

// ---------------------------------------------------------------- cauchy

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CauchyParams {
    /// Nodes per axis on `Disk(1)`, one row each.
    pub resolutions: Vec<usize>,
    pub bump_center: [f64; 2],
    pub bump_width: f64,
    /// Residuals are measured on `Disk(interior_radius)`.
    pub interior_radius: f64,
    /// Exponents for the Calderon-Zygmund estimate.
    pub cz_exponents: Vec<f64>,
    pub cz_trials: usize,
    pub cz_resolution: usize,
}

impl Default for CauchyParams {
    fn default() -> Self {
        CauchyParams {
            resolutions: vec![65, 129],
            bump_center: [0.1, -0.05],
            bump_width: 0.25,
            interior_radius: 0.9,
            cz_exponents: vec![2.0, 4.0],
            cz_trials: 3,
            cz_resolution: 65,
        }
    }
}

impl Params for CauchyParams {
    fn validate(&self) -> Result<(), String> {
        if self.resolutions.is_empty() {
            return Err("resolutions must not be empty".into());
        }
        for &n in &self.resolutions {
            resolution("resolution", n, 9, 513)?;
        }
        positive("bump_width", self.bump_width)?;
        if !(self.interior_radius > 0.0 && self.interior_radius < 1.0) {
            return Err(format!("interior_radius must lie in (0, 1), got {}", self.interior_radius));
        }
        for &q in &self.cz_exponents {
            if !(q > 1.0 && q.is_finite()) {
                return Err(format!("cz exponent must exceed 1, got {q}"));
            }
        }
        resolution("cz_resolution", self.cz_resolution, 9, 257)?;
        resolution("cz_trials", self.cz_trials, 1, 64)?;
        Ok(())
    }
}

pub fn cauchy(p: &CauchyParams, ctx: &Context) -> Res {
    let mut table = Table::new(&["nodes", "h", "conj_error", "conj_error_over_h", "bump_residual_l2"]);
    let mut rows = Vec::new();
    let (mut err_pts, mut res_pts) = (Vec::new(), Vec::new());
    let bc = c(p.bump_center[0], p.bump_center[1]);
    for &n in &p.resolutions {
        let g = Grid::disk(1.0, n)?;
        let h = g.spacing()[0];
        let t = dbar::cauchy_transform(&MapSample::constant(&g, &[c(1.0, 0.0)])?)?;
        let conj_error = (0..g.node_count())
            .filter(|&k| g.point(k).norm() < 1.0)
            .map(|k| (t.at(k)[0] - g.point(k).conj()).norm())
            .fold(0.0, f64::max);
        let w2 = p.bump_width * p.bump_width;
        let f = MapSample::scalar(&g, |z| c((-(z - bc).norm_sqr() / w2).exp(), 0.0))?;
        let r = dbar::dbar_std(&dbar::cauchy_transform(&f)?)?.sub(&f)?;
        let region = Region::disk(&g, c(0.0, 0.0), p.interior_radius)?;
        let residual = lp_norm_field(&g, 1, r.values(), 2.0, &region)?;
        table.push(vec![
            n.to_string(),
            fmt_num(h),
            fmt_num(conj_error),
            fmt_num(conj_error / h),
            fmt_num(residual),
        ]);
        rows.push(json!({
            "nodes": n,
            "h": h,
            "conj_error": conj_error,
            "bump_residual_l2": residual,
        }));
        err_pts.push((n as f64, conj_error));
        res_pts.push((n as f64, residual));
    }
    let ratios = |v: &[(f64, f64)]| v.windows(2).map(|w| w[0].1 / w[1].1).collect::<Vec<_>>();
    let mut cz = Vec::new();
    let cz_grid = Grid::disk(1.0, p.cz_resolution)?;
    for &q in &p.cz_exponents {
        let est = dbar::cz_norm_estimate_on(&cz_grid, q, p.cz_trials, ctx.seed)?;
        cz.push(json!({ "p": q, "estimate": est, "epsilon_p": dbar::epsilon_p(est)? }));
    }
    Ok(Outcome {
        result: json!({
            "rows": rows,
            "conj_error_ratios": ratios(&err_pts),
            "bump_residual_ratios": ratios(&res_pts),
            "cz": cz,
        }),
        tables: vec![("cauchy", table)],
        plots: vec![(
            "cauchy",
            plot("Cauchy transform errors", "nodes per axis", "error", true),
            vec![Series::new("|Tf - conj z|", err_pts), Series::new("dbar(Tf) - f", res_pts)],
        )],
        failure: None,
    })
}

// ---------------------------------------------------------------- dbar-solve

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbarParams {
    pub resolution: usize,
    /// Shear of the structure field; `‖J − J_st‖` equals this value.
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub p: f64,
}

impl Default for DbarParams {
    fn default() -> Self {
        let o = NeumannOptions::default();
        DbarParams {
            resolution: 65,
            delta: 0.1,
            tol: o.tol,
            max_iter: o.max_iter,
            p: o.p,
        }
    }
}

impl Params for DbarParams {
    fn validate(&self) -> Result<(), String> {
        resolution("resolution", self.resolution, 9, 513)?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(format!("delta must be nonnegative, got {}", self.delta));
        }
        positive("tol", self.tol)?;
        resolution("max_iter", self.max_iter, 1, 10_000)?;
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(format!("p must exceed 1, got {}", self.p));
        }
        Ok(())
    }
}

/// `P J_st P⁻¹` with `P` stretching by `1 + δ` along direction `ψ`.
fn sheared(delta: f64, psi: f64) -> DMatrix<f64> {
    let r = DMatrix::from_row_slice(2, 2, &[psi.cos(), -psi.sin(), psi.sin(), psi.cos()]);
    let p = &r * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + delta, 1.0])) * r.transpose();
    let inv = p.clone().try_inverse().expect("stretch is invertible");
    &p * standard_structure(1) * inv
}

fn apply(j: &DMatrix<f64>, v: Complex64) -> Complex64 {
    c(j[(0, 0)] * v.re + j[(0, 1)] * v.im, j[(1, 0)] * v.re + j[(1, 1)] * v.im)
}

pub fn dbar_solve(p: &DbarParams, _: &Context) -> Res {
    let g = Grid::disk(1.0, p.resolution)?;
    let delta = p.delta;
    let jf = move |z: Complex64| sheared(delta, 0.3 * z.re + 0.2 * z.im);
    let j = StructureField::from_fn(&g, 1, jf)?;
    // Manufactured solution u = z̄² + ½ z z̄.
    let exact = MapSample::scalar(&g, |z| z.conj() * z.conj() + 0.5 * z * z.conj())?;
    let f = MapSample::scalar(&g, |z| {
        let zb = z.conj();
        let ux = 2.0 * zb + 0.5 * (zb + z);
        let uy = c(0.0, -2.0) * zb + c(0.0, 0.5) * (zb - z);
        0.5 * (ux + apply(&jf(z), uy))
    })?;
    let opts = NeumannOptions {
        tol: p.tol,
        max_iter: p.max_iter,
        p: p.p,
    };
    let (u, rep) = dbar::neumann_solve_with(&f, &j, &opts)?;
    let dbar_diff = dbar::dbar_j(&u.sub(&exact)?, &j)?;
    let interior = Region::disk(&g, c(0.0, 0.0), 0.9)?;
    let holo_defect = lp_norm_field(&g, 1, dbar_diff.values(), 2.0, &interior)?;
    let mut table = Table::new(&["step", "contraction"]);
    for (i, &q) in rep.contraction.iter().enumerate() {
        table.push(vec![(i + 1).to_string(), fmt_num(q)]);
    }
    let pts = rep.contraction.iter().enumerate().map(|(i, &q)| ((i + 1) as f64, q)).collect();
    let failure = (!rep.converged).then(|| {
        format!(
            "no convergence after {} iterations, residual {:.3e} > {:.1e}",
            rep.iterations, rep.residual, p.tol
        )
    });
    Ok(Outcome {
        result: json!({
            "structure_distance": j.distance_to_standard(),
            "solve": to_json(&rep)?,
            "exact_difference_dbar_l2": holo_defect,
        }),
        tables: vec![("dbar_solve", table)],
        plots: vec![(
            "dbar_solve",
            plot("Neumann iteration", "step", "residual ratio", false),
            vec![Series::new("contraction", pts)],
        )],
        failure,
    })
}

// ---------------------------------------------------------------- decay

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Puncture {
    /// The puncture lies beyond `t = a`.
    Start,
    /// The puncture lies beyond `t = b`.
    End,
}

/// One term `v e^{k(z − z_ref)}` of a synthetic map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// A stored sample: CSV values plus JSON grid descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleInput {
    pub csv: PathBuf,
    pub grid: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayParams {
    /// Analyze this sample instead of the synthetic map.
    pub input: Option<SampleInput>,
    /// Synthetic modes, normalized on the circle farthest from the puncture.
    pub modes: Vec<Mode>,
    pub a: f64,
    pub b: f64,
    pub per_unit: usize,
    pub n_theta: usize,
    pub puncture: Puncture,
    pub epsilon: f64,
    pub slack: f64,
    pub lambda_min: Option<f64>,
    pub use_measured_gamma: bool,
    /// Seeded random holomorphic maps for the three-annuli check.
    pub random_maps: usize,
    pub random_length: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        let o = RemovabilityOptions::default();
        DecayParams {
            input: None,
            modes: vec![Mode { k: 1, re: 1.0, im: 0.0 }],
            a: 0.0,
            b: 10.0,
            per_unit: 16,
            n_theta: 64,
            puncture: Puncture::Start,
            epsilon: o.epsilon,
            slack: o.slack,
            lambda_min: None,
            use_measured_gamma: false,
            random_maps: 100,
            random_length: 5.0,
        }
    }
}

impl Params for DecayParams {
    fn validate(&self) -> Result<(), String> {
        if self.input.is_none() {
            if !(self.a.is_finite() && self.b.is_finite() && self.b - self.a >= 5.0) {
                return Err(format!("need b − a ≥ 5, got [{}, {}]", self.a, self.b));
            }
            resolution("per_unit", self.per_unit, 2, 256)?;
            resolution("n_theta", self.n_theta, 8, 1024)?;
            if self.modes.iter().any(|m| m.k.abs() > 64 || !m.re.is_finite() || !m.im.is_finite()) {
                return Err("modes need |k| ≤ 64 and finite coefficients".into());
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(format!("epsilon must be nonnegative, got {}", self.epsilon));
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return Err(format!("slack must be nonnegative, got {}", self.slack));
        }
        if let Some(l) = self.lambda_min {
            if !(l > 1.0 && l.is_finite()) {
                return Err(format!("lambda_min must exceed 1, got {l}"));
            }
        }
        if self.random_maps > 0 && !(self.random_length >= 5.0 && self.random_length <= 50.0) {
            return Err(format!("random_length must lie in [5, 50], got {}", self.random_length));
        }
        Ok(())
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.input.iter().flat_map(|s| [s.csv.clone(), s.grid.clone()]).collect()
    }
}

fn synth(grid: &Grid, modes: &[(i64, Complex64)], t_ref: f64) -> jcurve::Result<MapSample> {
    MapSample::scalar(grid, |z| {
        modes
            .iter()
            .map(|&(k, v)| v * (k as f64 * (z - t_ref)).exp())
            .sum()
    })
}

/// `u(a + b − t, −θ)`: the holomorphic reflection swapping the two ends.
fn reverse_ends(u: &MapSample) -> jcurve::Result<MapSample> {
    let g = u.grid();
    let [n0, n1] = g.shape();
    let d = u.dim();
    let mut values = Vec::with_capacity(u.values().len());
    for i in 0..n0 {
        for j in 0..n1 {
            values.extend_from_slice(u.at(g.index(n0 - 1 - i, (n1 - j) % n1)));
        }
    }
    MapSample::new(g.clone(), d, values)
}

/// Random modes `|k| ≤ 8`, each of order one somewhere in `[0, len]`.
fn random_modes(rng: &mut ChaCha8Rng, len: f64) -> Vec<(i64, Complex64)> {
    let mut modes = Vec::new();
    for k in -8i64..=8 {
        if rng.gen_bool(0.6) {
            let tc: f64 = rng.gen_range(0.0..len);
            let v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            modes.push((k, v * (-(k as f64) * tc).exp()));
        }
    }
    modes
}

pub fn decay(p: &DecayParams, ctx: &Context) -> Res {
    let u = match &p.input {
        Some(s) => read_sample(&s.csv, &s.grid)?,
        None => {
            let g = Grid::cylinder(p.a, p.b, p.per_unit, p.n_theta)?;
            let t_ref = match p.puncture {
                Puncture::Start => p.b,
                Puncture::End => p.a,
            };
            let modes: Vec<_> = p.modes.iter().map(|m| (m.k, c(m.re, m.im))).collect();
            synth(&g, &modes, t_ref)?
        }
    };
    if !matches!(u.grid().kind(), GridKind::Cylinder { .. }) {
        return Err(CliError::Config("decay needs a cylinder sample".into()));
    }
    // Segments are numbered away from the far end, toward the puncture.
    let spectrum = decay::cylinder_modes(&u)?;
    let oriented = match p.puncture {
        Puncture::End => u,
        Puncture::Start => reverse_ends(&u)?,
    };
    let kk = spectrum.k_max as i64;
    let peak = (-kk..=kk)
        .flat_map(|k| (0..spectrum.dim).map(move |d| (d, k)))
        .map(|(d, k)| spectrum.fitted(d, k).norm())
        .fold(0.0, f64::max);
    let fitted: Vec<_> = (0..spectrum.dim)
        .flat_map(|d| (-kk..=kk).map(move |k| (d, k)))
        .filter_map(|(d, k)| {
            let v = spectrum.fitted(d, k);
            (peak > 0.0 && v.norm() > 1e-9 * peak).then(|| json!({ "component": d, "k": k, "re": v.re, "im": v.im }))
        })
        .collect();

    let opts = RemovabilityOptions {
        epsilon: p.epsilon,
        tail_start: None,
        lambda_min: p.lambda_min,
        use_measured_gamma: p.use_measured_gamma,
        slack: p.slack,
    };
    let report = decay::removability_diagnostic_with(&oriented, &opts)?;
    let e = &report.energies;
    let l = e.len();
    let ratio = decay::three_segment_ratio(e[1], e[2], e[3]).ok();
    let ratios: Vec<Option<f64>> = e.windows(3).map(|w| decay::three_segment_ratio(w[0], w[1], w[2]).ok()).collect();

    let mut table = Table::new(&["segment", "energy", "envelope", "three_segment_ratio"]);
    let mut energy_pts = Vec::new();
    let mut env_pts = Vec::new();
    for (i, &ei) in e.iter().enumerate() {
        let env = if (1..l - 1).contains(&i) {
            Some(decay::decay_envelope(e[1], e[l - 2], report.lambda_min, i + 1, l)?)
        } else {
            None
        };
        let r = if (1..l - 1).contains(&i) { ratios[i - 1] } else { None };
        table.push(vec![(i + 1).to_string(), fmt_num(ei), cell(env), cell(r)]);
        energy_pts.push(((i + 1) as f64, ei));
        if let Some(v) = env {
            env_pts.push(((i + 1) as f64, v));
        }
    }

    let random = if p.random_maps > 0 {
        let g = Grid::cylinder(0.0, p.random_length, p.per_unit, p.n_theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..p.random_maps {
            let modes = random_modes(&mut rng, p.random_length);
            let en = decay::segment_energies(&synth(&g, &modes, 0.0)?)?;
            if let Ok(r) = decay::three_segment_ratio(en[1], en[2], en[3]) {
                worst = worst.max(r);
            }
        }
        let bound = decay::gamma_annuli() + 0.01;
        Some(json!({
            "maps": p.random_maps,
            "length": p.random_length,
            "max_ratio": worst.is_finite().then_some(worst),
            "bound": bound,
            "holds": worst <= bound,
        }))
    } else {
        None
    };

    Ok(Outcome {
        result: json!({
            "puncture": p.puncture,
            "ratio": ratio,
            "max_ratio": ratios.iter().flatten().copied().reduce(f64::max),
            "gamma": decay::gamma_annuli(),
            "verdict": if report.removable { "removable" } else { "non-removable" },
            "removability": to_json(&report)?,
            "spectrum": {
                "k_max": spectrum.k_max,
                "mid_t": 0.5 * (spectrum.t[0] + spectrum.t[spectrum.circles() - 1]),
                "fitted": fitted,
                "holomorphy_residual": spectrum.holomorphy_residual,
                "parseval_defect": spectrum.parseval_defect(),
            },
            "random_family": random,
        }),
        tables: vec![("decay", table)],
        plots: vec![(
            "decay",
            plot("Segment energies", "segment", "energy", true),
            vec![Series::new("energy", energy_pts), Series::new("envelope", env_pts)],
        )],
        failure: None,
    })
}

// ---------------------------------------------------------------- strip-eigen

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripParams {
    /// Angles of `W₀ = ⊕ e^{iβ₀ₖ}ℝ`; the length is the dimension.
    pub w0_angles: Vec<f64>,
    /// Sweep: `W₁` rotates every angle of `W₀` by `β`.
    pub betas: Vec<f64>,
    pub cells: usize,
}

impl Default for StripParams {
    fn default() -> Self {
        StripParams {
            w0_angles: vec![0.0],
            betas: (1..=12).map(|k| k as f64 * PI / 12.0).collect(),
            cells: 1000,
        }
    }
}

impl Params for StripParams {
    fn validate(&self) -> Result<(), String> {
        resolution("dimension", self.w0_angles.len(), 1, 16)?;
        if self.betas.is_empty() {
            return Err("betas must not be empty".into());
        }
        if self.betas.iter().chain(&self.w0_angles).any(|b| !b.is_finite()) {
            return Err("angles must be finite".into());
        }
        resolution("cells", self.cells, decay::MIN_STRIP_CELLS, 100_000)
    }
}

pub fn strip_eigen(p: &StripParams, _: &Context) -> Res {
    let w0 = TotallyRealSubspace::rotated(&p.w0_angles)?;
    let mut table = Table::new(&["beta", "lambda1", "gamma_w", "zero_dim", "lambda2"]);
    let mut rows = Vec::new();
    let (mut l1, mut gw) = (Vec::new(), Vec::new());
    for &beta in &p.betas {
        let angles: Vec<f64> = p.w0_angles.iter().map(|a| a + beta).collect();
        let w1 = TotallyRealSubspace::rotated(&angles)?;
        let r = decay::strip_eigs(&w0, &w1, p.cells)?;
        let positive: Vec<f64> = r.eigenvalues[r.zero_dim..].to_vec();
        let lambda2 = positive.iter().copied().find(|&v| v > r.lambda1 * (1.0 + 1e-9));
        table.push(vec![
            fmt_num(beta),
            fmt_num(r.lambda1),
            fmt_num(r.gamma_w),
            r.zero_dim.to_string(),
            cell(lambda2),
        ]);
        l1.push((beta, r.lambda1));
        gw.push((beta, r.gamma_w));
        rows.push(json!({ "beta": beta, "result": to_json(&r)? }));
    }
    Ok(Outcome {
        result: json!({ "dimension": p.w0_angles.len(), "cells": p.cells, "rows": rows }),
        tables: vec![("strip_eigen", table)],
        plots: vec![
            (
                "strip_eigen",
                plot("Lowest positive eigenvalue", "angle", "lambda1", false),
                vec![Series::new("lambda1", l1)],
            ),
            (
                "strip_gamma",
                plot("Strip decay constant", "angle", "gamma_W", false),
                vec![Series::new("gamma_W", gw)],
            ),
        ],
        failure: None,
    })
}

// ---------------------------------------------------------------- three-strips

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreeStripsParams {
    pub alphas: Vec<f64>,
    /// Lattice points per axis of the `(a, b)` scan.
    pub n: usize,
}

impl Default for ThreeStripsParams {
    fn default() -> Self {
        ThreeStripsParams {
            alphas: vec![0.05, 0.25, 0.5, 1.0, 2.0],
            n: 20,
        }
    }
}

impl Params for ThreeStripsParams {
    fn validate(&self) -> Result<(), String> {
        if self.alphas.is_empty() {
            return Err("alphas must not be empty".into());
        }
        for &a in &self.alphas {
            positive("alpha", a)?;
        }
        resolution("n", self.n, 2, 1000)
    }
}

pub fn three_strips(p: &ThreeStripsParams, _: &Context) -> Res {
    let mut table = Table::new(&[
        "alpha",
        "worst_ratio",
        "worst_a",
        "worst_b",
        "sharp_gamma",
        "bound",
        "gap",
        "violations",
        "evaluated",
    ]);
    let mut rows = Vec::new();
    let (mut worst, mut bound) = (Vec::new(), Vec::new());
    let mut total_violations = 0;
    for &alpha in &p.alphas {
        let s = decay::three_strips_scan(alpha, p.n)?;
        let (sharp, _) = decay::three_strips_sharp(alpha)?;
        total_violations += s.violations;
        table.push(vec![
            fmt_num(alpha),
            fmt_num(s.worst_ratio),
            fmt_num(s.worst_ab.0),
            fmt_num(s.worst_ab.1),
            fmt_num(sharp),
            fmt_num(s.bound),
            fmt_num(s.bound - s.worst_ratio),
            s.violations.to_string(),
            s.evaluated.to_string(),
        ]);
        worst.push((alpha, s.worst_ratio));
        bound.push((alpha, s.bound));
        rows.push(json!({ "scan": to_json(&s)?, "sharp_gamma": sharp }));
    }
    Ok(Outcome {
        result: json!({ "n": p.n, "rows": rows, "violations": total_violations }),
        tables: vec![("three_strips", table)],
        plots: vec![(
            "three_strips",
            plot("Three-strips ratio", "alpha", "ratio", true),
            vec![Series::new("worst ratio", worst), Series::new("bound", bound)],
        )],
        failure: None,
    })
}

// ---------------------------------------------------------------- bubble-scan

/// Concentrating family `g((z − x)/2^{−n})`, `n_min ≤ n ≤ n_max`, with `g` a
/// bump of the given support and energy `energy_factor · ε`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFamily {
    pub n_min: i32,
    pub n_max: i32,
    pub resolution: usize,
    pub support: f64,
    pub energy_factor: f64,
    pub center: [f64; 2],
}

impl Default for SyntheticFamily {
    fn default() -> Self {
        SyntheticFamily {
            n_min: 2,
            n_max: 6,
            resolution: 257,
            support: 4.0,
            energy_factor: 5.0,
            center: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleParams {
    /// Directory holding `manifest.json` and member CSVs; overrides `synthetic`.
    pub family: Option<PathBuf>,
    pub synthetic: SyntheticFamily,
    pub epsilon: f64,
    pub initial_scale: Option<f64>,
    pub min_radius: Option<f64>,
    pub varrho: Option<f64>,
    pub out_radius: f64,
    pub bound_factor: f64,
}

impl Default for BubbleParams {
    fn default() -> Self {
        let o = BubbleOptions::new(1.0);
        BubbleParams {
            family: None,
            synthetic: SyntheticFamily::default(),
            epsilon: o.epsilon,
            initial_scale: o.initial_scale,
            min_radius: o.min_radius,
            varrho: o.varrho,
            out_radius: o.out_radius,
            bound_factor: o.bound_factor,
        }
    }
}

impl Params for BubbleParams {
    fn validate(&self) -> Result<(), String> {
        positive("epsilon", self.epsilon)?;
        positive("out_radius", self.out_radius)?;
        if !(self.bound_factor > 1.0 && self.bound_factor.is_finite()) {
            return Err(format!("bound_factor must exceed 1, got {}", self.bound_factor));
        }
        for (name, v) in [
            ("initial_scale", self.initial_scale),
            ("min_radius", self.min_radius),
            ("varrho", self.varrho),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if self.family.is_none() {
            let s = &self.synthetic;
            if !(0 <= s.n_min && s.n_min + 2 <= s.n_max && s.n_max <= 30) {
                return Err(format!("need 0 ≤ n_min, n_min + 2 ≤ n_max ≤ 30, got {}..{}", s.n_min, s.n_max));
            }
            resolution("resolution", s.resolution, 17, 1025)?;
            positive("support", s.support)?;
            positive("energy_factor", s.energy_factor)?;
            if !(s.center[0].hypot(s.center[1]) < 1.0) {
                return Err("center must lie in the unit disk".into());
            }
        }
        Ok(())
    }

    fn inputs(&self) -> Vec<PathBuf> {
        self.family.iter().cloned().collect()
    }
}

pub fn bubble_scan(p: &BubbleParams, _: &Context) -> Res {
    let (fam, truth) = match &p.family {
        Some(dir) => (SequenceFamily::load_dir(dir)?, None),
        None => {
            let s = &p.synthetic;
            let g = Grid::disk(1.0, s.resolution)?;
            let amp = (s.energy_factor * p.epsilon * 35.0 / (12.0 * PI)).sqrt() / s.support;
            let profile = bubble::bump_profile(amp, s.support);
            let at = c(s.center[0], s.center[1]);
            let scales: Vec<f64> = (s.n_min..=s.n_max).map(|n| 0.5f64.powi(n)).collect();
            let members = scales
                .iter()
                .map(|&r| MapSample::scalar(&g, |z| profile((z - at) / r)))
                .collect::<jcurve::Result<Vec<_>>>()?;
            (SequenceFamily::new(members)?, Some((at, scales)))
        }
    };
    let opts = BubbleOptions {
        epsilon: p.epsilon,
        initial_scale: p.initial_scale,
        min_radius: p.min_radius,
        varrho: p.varrho,
        out_radius: p.out_radius,
        bound_factor: p.bound_factor,
    };
    let report = bubble::analyze_family(&fam, &opts)?;
    let mut table = Table::new(&["index", "radius", "center_x", "center_y"]);
    for (i, (r, x)) in report.radii.iter().zip(&report.centers).enumerate() {
        table.push(vec![i.to_string(), fmt_num(*r), fmt_num(x[0]), fmt_num(x[1])]);
    }
    let pts = report.radii.iter().enumerate().map(|(i, &r)| (i as f64, r)).collect();
    let truth = truth.map(|(at, scales)| json!({ "point": [at.re, at.im], "scales": scales }));
    Ok(Outcome {
        result: json!({
            "members": fam.len(),
            "grid_spacing": fam.grid().spacing()[0],
            "report": to_json(&report)?,
            "truth": truth,
        }),
        tables: vec![("bubble", table)],
        plots: vec![(
            "bubble",
            plot("Maximal radii", "analyzed member", "radius", true),
            vec![Series::new("radius", pts)],
        )],
        failure: None,
    })
}

// ---------------------------------------------------------------- corner

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CornerParams {
    pub alpha: f64,
    /// Exponents for the ring norms of `d(z^α)`.
    pub exponents: Vec<f64>,
    pub rings: usize,
    /// Nodes across each ring lattice.
    pub nodes: usize,
    /// Boundary decay rates `λ_b` for the exponent table.
    pub lambda_b: Vec<f64>,
}

impl Default for CornerParams {
    fn default() -> Self {
        CornerParams {
            alpha: 0.5,
            exponents: vec![3.0, 5.0],
            rings: 12,
            nodes: 121,
            lambda_b: vec![E, E.powi(2), E.powi(3), E.powi(4), E.powi(5), E.powi(6)],
        }
    }
}

impl Params for CornerParams {
    fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.exponents.iter().any(|q| !(*q >= 1.0 && q.is_finite())) {
            return Err("exponents must be finite and at least 1".into());
        }
        resolution("rings", self.rings, 1, 40)?;
        resolution("nodes", self.nodes, 9, 1025)?;
        Ok(())
    }
}

pub fn corner(p: &CornerParams, _: &Context) -> Res {
    let p_star = decay::corner_sobolev_exponent(p.alpha)?;
    let mut norms = Vec::new();
    let mut summary = Vec::new();
    for &q in &p.exponents {
        let v = decay::corner_ring_norms(p.alpha, q, p.rings, p.nodes)?;
        let n = v.len();
        let last_change = (n >= 2).then(|| v[n - 1] / v[n - 2] - 1.0);
        summary.push(json!({
            "p": q,
            "below_critical": q < p_star,
            "norms": v,
            "last_relative_change": last_change,
        }));
        norms.push((q, v));
    }
    let mut header = vec!["ring".to_string()];
    header.extend(norms.iter().map(|(q, _)| format!("norm_p{}", fmt_num(*q))));
    let mut rings = Table {
        header,
        rows: Vec::new(),
    };
    for k in 0..p.rings {
        let mut row = vec![(k + 1).to_string()];
        row.extend(norms.iter().map(|(_, v)| fmt_num(v[k])));
        rings.push(row);
    }
    let mut exps = Table::new(&["lambda_b", "log_lambda_b", "exponent"]);
    let mut exp_rows = Vec::new();
    for &lb in &p.lambda_b {
        let x = decay::boundary_decay_exponent(lb)?;
        exps.push(vec![fmt_num(lb), fmt_num(lb.ln()), fmt_num(x)]);
        exp_rows.push(json!({ "lambda_b": lb, "exponent": x }));
    }
    let series = norms
        .iter()
        .map(|(q, v)| {
            let pts = v.iter().enumerate().map(|(k, &x)| ((k + 1) as f64, x)).collect();
            Series::new(format!("p = {}", fmt_num(*q)), pts)
        })
        .collect();
    Ok(Outcome {
        result: json!({
            "alpha": p.alpha,
            "p_star": p_star,
            "ring_norms": summary,
            "boundary_exponents": exp_rows,
        }),
        tables: vec![("corner_rings", rings), ("corner_exponents", exps)],
        plots: vec![(
            "corner",
            plot("Cumulative ring norms", "ring", "norm", true),
            series,
        )],
        failure: None,
    })
}

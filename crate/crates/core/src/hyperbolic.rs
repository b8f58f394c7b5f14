//! Collar geometry in curvature −1 and plumbing bookkeeping.
//!
//! A collar around a closed geodesic of length `ℓ` is conformal to
//! `{|ρ| < π²/ℓ} × S¹` with metric `((ℓ/2π) / cos(ℓρ/2π))² (dρ² + dθ²)`.
//! Degenerating families are tracked through plumbing parameters `λ`, with
//! the neck of an edge modelled by `{|λ| < |ζ| ≤ 1}` and `ζ·ζ′ = λ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;

/// Default collar area constant `a*`.
pub const DEFAULT_A_STAR: f64 = 2.0;

/// Topological type `(g, m, b)` of a surface with marked points and boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub genus: usize,
    pub marked: usize,
    pub boundary: usize,
}

impl Topology {
    pub fn new(genus: usize, marked: usize, boundary: usize) -> Result<Self> {
        let t = Topology {
            genus,
            marked,
            boundary,
        };
        if 2 * genus + marked + boundary < 3 {
            return Err(Error::HypothesisViolated(format!(
                "2g + m + b = {} < 3: surface is not stable",
                2 * genus + marked + boundary
            )));
        }
        Ok(t)
    }

    /// Complex dimension `3g − 3 + m + 2b` of the Teichmüller space.
    pub fn teich_dimension(&self) -> usize {
        3 * self.genus + self.marked + 2 * self.boundary - 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PantsEdge {
    pub v: [usize; 2],
    #[serde(default)]
    pub marked: bool,
}

/// Pants decomposition graph: vertices are pairs of pants, edges are inner
/// circles, tails are boundary circles and marked tails are punctures.
/// Tails and marked tails are listed by the vertex they hang from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PantsGraph {
    pub vertices: usize,
    #[serde(default)]
    pub edges: Vec<PantsEdge>,
    #[serde(default)]
    pub tails: Vec<usize>,
    #[serde(default)]
    pub marked_tails: Vec<usize>,
}

impl PantsGraph {
    /// Checks endpoints, trivalence and connectivity; returns the topology.
    pub fn validate(&self) -> Result<Topology> {
        let nv = self.vertices;
        if nv == 0 {
            return Err(invalid("pants graph has no vertices"));
        }
        let mut degree = vec![0usize; nv];
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (k, e) in self.edges.iter().enumerate() {
            let [a, b] = e.v;
            if a >= nv || b >= nv {
                return Err(invalid(format!("edge {k} has endpoint outside 0..{nv}")));
            }
            degree[a] += 1;
            degree[b] += 1;
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        for (what, list) in [("tail", &self.tails), ("marked tail", &self.marked_tails)] {
            for (k, &v) in list.iter().enumerate() {
                if v >= nv {
                    return Err(invalid(format!("{what} {k} attached to missing vertex {v}")));
                }
                degree[v] += 1;
            }
        }
        if let Some(v) = degree.iter().position(|&d| d != 3) {
            return Err(invalid(format!("vertex {v} has degree {} (expected 3)", degree[v])));
        }
        let root = find(&mut parent, 0);
        if (1..nv).any(|v| find(&mut parent, v) != root) {
            return Err(invalid("pants graph is not connected"));
        }
        // Each pair of pants has Euler characteristic −1.
        let b = self.tails.len();
        let m = self.marked_tails.len();
        let twice_g = 2 + nv - b - m;
        Topology::new(twice_g / 2, m, b)
    }

    pub fn topology(&self) -> Result<Topology> {
        self.validate()
    }

    /// Edges contracted to nodes.
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(|(_, e)| e.marked).map(|(k, _)| k)
    }
}

pub fn teich_dimension(g: &PantsGraph) -> Result<usize> {
    Ok(g.validate()?.teich_dimension())
}

/// Twist normalized into `[0, 2π)`.
pub fn normalize_twist(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

/// Fenchel-Nielsen coordinates: lengths and twists per tail and per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FNCoords {
    pub tail_lengths: Vec<f64>,
    pub tail_twists: Vec<f64>,
    pub edge_lengths: Vec<f64>,
    pub edge_twists: Vec<f64>,
}

impl FNCoords {
    pub fn new(
        tail_lengths: Vec<f64>,
        tail_twists: Vec<f64>,
        edge_lengths: Vec<f64>,
        edge_twists: Vec<f64>,
    ) -> Result<Self> {
        if tail_lengths.len() != tail_twists.len() || edge_lengths.len() != edge_twists.len() {
            return Err(Error::Mismatch("length and twist counts differ".into()));
        }
        for &l in tail_lengths.iter().chain(&edge_lengths) {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("length {l} must be positive and finite")));
            }
        }
        if tail_twists.iter().chain(&edge_twists).any(|t| !t.is_finite()) {
            return Err(invalid("twists must be finite"));
        }
        Ok(FNCoords {
            tail_lengths,
            tail_twists: tail_twists.into_iter().map(normalize_twist).collect(),
            edge_lengths,
            edge_twists: edge_twists.into_iter().map(normalize_twist).collect(),
        })
    }
}

/// Plumbing parameters. Marked edges carry no parameter (`None`): a node is
/// declared by marking the edge, never by `λ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlumbingParams {
    pub edges: Vec<Option<Complex64>>,
    #[serde(default)]
    pub tails: Vec<Complex64>,
}

/// Geodesic length `ℓ` and the constant `a*` of its collar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollarSpec {
    pub length: f64,
    #[serde(default = "default_a_star")]
    pub a_star: f64,
}

fn default_a_star() -> f64 {
    DEFAULT_A_STAR
}

impl CollarSpec {
    pub fn new(length: f64, a_star: f64) -> Result<Self> {
        check_length(length)?;
        if !(a_star > 0.0 && a_star.is_finite()) {
            return Err(invalid(format!("a* = {a_star} must be positive")));
        }
        Ok(CollarSpec { length, a_star })
    }
}

fn check_length(l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("geodesic length {l} must be positive and finite")))
    }
}

/// Conformal factor `(ℓ/2π) / cos(ℓρ/2π)` of the collar metric.
pub fn collar_metric_factor(l: f64, rho: f64) -> Result<f64> {
    check_length(l)?;
    let half = PI * PI / l;
    if !(rho.abs() < half) {
        return Err(Error::OutOfDomain(format!("|ρ| = {} ≥ π²/ℓ = {half}", rho.abs())));
    }
    Ok((l / (2.0 * PI)) / (l * rho / (2.0 * PI)).cos())
}

/// Gauss curvature `K = −Δ(log f)/f²` of the metric `f²|dz|²`, by the
/// five-point Laplacian. Entries are `None` where the stencil leaves the
/// grid or the domain.
pub fn gauss_curvature(grid: &Grid, factor: &[f64]) -> Result<Vec<Option<f64>>> {
    if factor.len() != grid.node_count() {
        return Err(Error::Mismatch(format!(
            "{} factor values for {} nodes",
            factor.len(),
            grid.node_count()
        )));
    }
    let [n0, n1] = grid.shape();
    if n0 < 5 || (n1 < 5 && !grid.axis(1).periodic) {
        return Err(Error::ResolutionTooSmall {
            axis: if n0 < 5 { 0 } else { 1 },
            got: n0.min(n1),
            need: 5,
        });
    }
    for (k, &f) in factor.iter().enumerate() {
        if grid.node_in_domain(k) && !(f > 0.0 && f.is_finite()) {
            return Err(Error::OutOfDomain(format!("metric factor {f} at node {k} is not positive")));
        }
    }
    let [h0, h1] = grid.spacing();
    let periodic = grid.axis(1).periodic;
    let log_f: Vec<f64> = factor.iter().map(|f| f.ln()).collect();
    let ok = |k: usize| grid.node_in_domain(k) && factor[k] > 0.0;
    let mut out = vec![None; grid.node_count()];
    for i in 1..n0 - 1 {
        for j in 0..n1 {
            let (jm, jp) = if periodic {
                ((j + n1 - 1) % n1, (j + 1) % n1)
            } else if j == 0 || j == n1 - 1 {
                continue;
            } else {
                (j - 1, j + 1)
            };
            let c = grid.index(i, j);
            let nb = [grid.index(i - 1, j), grid.index(i + 1, j), grid.index(i, jm), grid.index(i, jp)];
            if !ok(c) || nb.iter().any(|&k| !ok(k)) {
                continue;
            }
            let lap = (log_f[nb[0]] - 2.0 * log_f[c] + log_f[nb[1]]) / (h0 * h0)
                + (log_f[nb[2]] - 2.0 * log_f[c] + log_f[nb[3]]) / (h1 * h1);
            out[c] = Some(-lap / (factor[c] * factor[c]));
        }
    }
    Ok(out)
}

/// Upper bound `π²/ℓ` on the log conformal radius of a collar.
pub fn collar_log_radius_upper(l: f64) -> Result<f64> {
    check_length(l)?;
    Ok(PI * PI / l)
}

/// Bound `2π²/ℓ` on the log radius of the annulus around a short geodesic.
pub fn geodesic_annulus_log_radius_bound(l: f64) -> Result<f64> {
    Ok(2.0 * collar_log_radius_upper(l)?)
}

/// Collar half-width `ρ*` at which the enclosed area reaches `a*`.
pub fn collar_width(spec: &CollarSpec) -> Result<f64> {
    let CollarSpec { length: l, a_star } = CollarSpec::new(spec.length, spec.a_star)?;
    if l > 1.0 {
        return Err(Error::HypothesisViolated(format!("collar width needs ℓ ≤ 1, got ℓ = {l}")));
    }
    Ok(PI * PI / l - (2.0 * PI / l) * (l / a_star).atan())
}

/// Lower bound `π²/ℓ − 2π/a*` for the collar half-width.
pub fn collar_width_lower_bound(spec: &CollarSpec) -> f64 {
    PI * PI / spec.length - 2.0 * PI / spec.a_star
}

/// Hyperbolic length of `[ρ_lo, ρ_hi]` along the collar axis.
pub fn trim_width(l: f64, rho_lo: f64, rho_hi: f64) -> Result<f64> {
    check_length(l)?;
    let half = PI * PI / l;
    if !(0.0 <= rho_lo && rho_lo <= rho_hi && rho_hi < half) {
        return Err(Error::OutOfDomain(format!(
            "need 0 ≤ ρ_lo ≤ ρ_hi < π²/ℓ = {half}, got [{rho_lo}, {rho_hi}]"
        )));
    }
    let g = |rho: f64| {
        let x = PI / 4.0 - l * rho / (4.0 * PI);
        (1.0 / x.tan()).ln()
    };
    Ok(g(rho_hi) - g(rho_lo))
}

/// `ζ′ = λ/ζ`, the partner coordinate across a plumbed neck.
pub fn plumb(zeta: Complex64, lambda: Complex64) -> Result<Complex64> {
    if zeta == Complex64::new(0.0, 0.0) {
        return Err(Error::OutOfDomain("ζ = 0".into()));
    }
    if !(lambda.norm() < zeta.norm() && zeta.norm() <= 1.0) {
        return Err(Error::OutOfDomain(format!(
            "need |λ| < |ζ| ≤ 1, got |λ| = {}, |ζ| = {}",
            lambda.norm(),
            zeta.norm()
        )));
    }
    Ok(lambda / zeta)
}

/// Geodesic length of the model collar whose neck has modulus `log(1/|λ|)`.
pub fn model_length(neck_modulus: f64) -> Result<f64> {
    if !(neck_modulus > 0.0) {
        return Err(invalid("neck modulus must be positive"));
    }
    Ok(2.0 * PI * PI / neck_modulus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub edge: usize,
    pub node: bool,
    /// `log(1/|λ|)`; absent for nodes.
    pub neck_modulus: Option<f64>,
    /// Length of the model collar with this modulus.
    pub model_length: Option<f64>,
    pub twist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub genus: usize,
    pub marked: usize,
    pub boundary: usize,
    pub teich_dimension: usize,
    pub edges: Vec<EdgeReport>,
    pub tail_moduli: Vec<f64>,
}

/// Checks `params` against `g` and reports neck moduli per edge.
pub fn validate_family(g: &PantsGraph, params: &PlumbingParams) -> Result<FamilyReport> {
    let top = g.validate()?;
    if params.edges.len() != g.edges.len() {
        return Err(Error::Mismatch(format!(
            "{} edge parameters for {} edges",
            params.edges.len(),
            g.edges.len()
        )));
    }
    if params.tails.len() != g.tails.len() {
        return Err(Error::Mismatch(format!(
            "{} tail parameters for {} tails",
            params.tails.len(),
            g.tails.len()
        )));
    }
    let mut edges = Vec::with_capacity(g.edges.len());
    for (k, (e, p)) in g.edges.iter().zip(&params.edges).enumerate() {
        match (e.marked, p) {
            (true, None) => edges.push(EdgeReport {
                edge: k,
                node: true,
                neck_modulus: None,
                model_length: None,
                twist: None,
            }),
            (true, Some(_)) => {
                return Err(invalid(format!("edge {k} is a node and takes no plumbing parameter")))
            }
            (false, None) => return Err(invalid(format!("edge {k} is missing its parameter"))),
            (false, Some(lam)) => {
                let r = lam.norm();
                if !(r > 0.0 && r < 1.0) {
                    return Err(invalid(format!(
                        "edge {k}: need 0 < |λ| < 1, got {r} (declare nodes by marking the edge)"
                    )));
                }
                let modulus = -r.ln();
                edges.push(EdgeReport {
                    edge: k,
                    node: false,
                    neck_modulus: Some(modulus),
                    model_length: Some(model_length(modulus)?),
                    twist: Some(normalize_twist(lam.arg())),
                });
            }
        }
    }
    let mut tail_moduli = Vec::with_capacity(g.tails.len());
    for (k, lam) in params.tails.iter().enumerate() {
        let r = lam.norm();
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid(format!("tail {k}: need 0 < |λ| ≤ 1, got {r}")));
        }
        tail_moduli.push(-r.ln());
    }
    Ok(FamilyReport {
        genus: top.genus,
        marked: top.marked,
        boundary: top.boundary,
        teich_dimension: top.teich_dimension(),
        edges,
        tail_moduli,
    })
}

/// Per-edge verdict over a sequence of family reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTrend {
    pub edge: usize,
    pub moduli: Vec<f64>,
    /// Neck modulus strictly increasing along the sequence.
    pub degenerating: bool,
}

/// Flags edges whose neck modulus increases monotonically through `reports`,
/// i.e. edges pinching to a node.
pub fn degeneration_trend(reports: &[FamilyReport]) -> Result<Vec<EdgeTrend>> {
    let first = reports.first().ok_or_else(|| invalid("empty family sequence"))?;
    let ne = first.edges.len();
    if reports.iter().any(|r| r.edges.len() != ne) {
        return Err(Error::Mismatch("reports describe different graphs".into()));
    }
    Ok((0..ne)
        .map(|k| {
            let moduli: Vec<f64> = reports.iter().filter_map(|r| r.edges[k].neck_modulus).collect();
            let degenerating = moduli.len() == reports.len()
                && moduli.len() >= 2
                && moduli.windows(2).all(|w| w[1] > w[0]);
            EdgeTrend {
                edge: k,
                moduli,
                degenerating,
            }
        })
        .collect())
}

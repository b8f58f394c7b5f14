//! Energy concentration in sequences of sampled maps.
//!
//! A sequence `u_n` bubbles at `y*` when the energy in every fixed disk
//! around `y*` stays above a threshold `ε` while the scale `r_n` on which it
//! concentrates shrinks. The routines here locate such points with dyadic
//! patch covers, measure `r_n` and the centers `x_n`, rescale
//! `v_n(z) = u_n(x_n + r_n z)` and classify the relative sizes of `r_n`,
//! the distance `R_n = |x_n − y*|` and, near a boundary, the height `ρ_n`.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{cell_integrals, energy, energy_density};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridKind, Region};
use crate::io::{from_csv, read_text, GridDescriptor};
use crate::sample::{MapSample, StructureField};

/// Default window factor for the bounded/unbounded heuristic.
pub const DEFAULT_BOUND_FACTOR: f64 = 2.0;

/// Ratio of patch radius to the requested patch diameter `a`.
const PATCH_RADIUS: f64 = 0.49;

/// Hexagonal lattice spacing in units of the patch radius. Between
/// `2/√3 ≈ 1.155` (fourfold overlaps appear) and `√3` (gaps appear).
const HEX_SPACING: f64 = 1.0 / 0.7;

/// An ordered sequence of samples on one grid.
#[derive(Debug, Clone)]
pub struct SequenceFamily {
    members: Vec<MapSample>,
    structures: Option<Vec<StructureField>>,
}

impl SequenceFamily {
    pub fn new(members: Vec<MapSample>) -> Result<Self> {
        let first = members.first().ok_or_else(|| invalid("family is empty"))?;
        for (n, u) in members.iter().enumerate() {
            if u.grid() != first.grid() || u.dim() != first.dim() {
                return Err(Error::Mismatch(format!("member {n} lives on a different grid")));
            }
        }
        Ok(SequenceFamily {
            members,
            structures: None,
        })
    }

    pub fn with_structures(mut self, j: Vec<StructureField>) -> Result<Self> {
        if j.len() != self.members.len() {
            return Err(Error::Mismatch(format!(
                "{} structures for {} members",
                j.len(),
                self.members.len()
            )));
        }
        if j.iter().any(|f| f.grid() != self.grid() || f.dim() != self.members[0].dim()) {
            return Err(Error::Mismatch("structure field on a different grid".into()));
        }
        self.structures = Some(j);
        Ok(self)
    }

    pub fn members(&self) -> &[MapSample] {
        &self.members
    }

    pub fn structures(&self) -> Option<&[StructureField]> {
        self.structures.as_deref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.members[0].grid()
    }

    /// Loads `manifest.json` (`{"grid": <descriptor>, "members": ["u0.csv", …]}`)
    /// and the listed CSV files from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let manifest: FamilyManifest = serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let members = manifest
            .members
            .iter()
            .map(|name| {
                let p = dir.join(name);
                from_csv(&manifest.grid, &read_text(&p)?, &p.display().to_string())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub grid: GridDescriptor,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub center: Complex64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSpec {
    pub disks: Vec<Patch>,
    /// Largest number of disks containing a single domain node.
    pub multiplicity: usize,
}

fn domain_nodes(grid: &Grid) -> Vec<Complex64> {
    (0..grid.node_count())
        .filter(|&k| grid.node_in_domain(k))
        .map(|k| grid.point(k))
        .collect()
}

/// Hexagonal cover of the domain nodes by disks of diameter `0.98a`,
/// with every node in at least one and at most three disks.
pub fn patch_cover(grid: &Grid, a: f64) -> Result<CoverSpec> {
    if matches!(grid.kind(), GridKind::Cylinder { .. }) {
        return Err(invalid("patch covers are planar"));
    }
    let rho = PATCH_RADIUS * a;
    let h = grid.spacing()[0].max(grid.spacing()[1]);
    if !(a.is_finite() && rho >= h) {
        return Err(invalid(format!("patch radius {rho} below the grid spacing {h}")));
    }
    let nodes = domain_nodes(grid);
    if nodes.is_empty() {
        return Err(Error::InvalidGrid("grid has no domain nodes".into()));
    }
    let (mut lo, mut hi) = (nodes[0], nodes[0]);
    for z in &nodes {
        lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let mid = 0.5 * (lo + hi);
    let reach = nodes.iter().map(|z| (z - mid).norm()).fold(0.0, f64::max);
    let disks = if reach < rho {
        vec![Patch { center: mid, radius: rho }]
    } else {
        let s = HEX_SPACING * rho;
        let row = s * 3f64.sqrt() / 2.0;
        let nj = ((0.5 * (hi.im - lo.im) + rho) / row).ceil() as i64;
        let ni = ((0.5 * (hi.re - lo.re) + rho) / s).ceil() as i64 + 1;
        let mut disks = Vec::new();
        for j in -nj..=nj {
            let shift = if j.rem_euclid(2) == 1 { 0.5 * s } else { 0.0 };
            for i in -ni..=ni {
                let c = mid + Complex64::new(i as f64 * s + shift, j as f64 * row);
                if nodes.iter().any(|z| (z - c).norm() < rho) {
                    disks.push(Patch { center: c, radius: rho });
                }
            }
        }
        disks
    };
    let mut multiplicity = 0;
    for z in &nodes {
        let m = disks.iter().filter(|d| (z - d.center).norm() < d.radius).count();
        if m == 0 || m > 3 {
            return Err(Error::Inconsistent(format!("node {z} covered {m} times")));
        }
        multiplicity = multiplicity.max(m);
    }
    Ok(CoverSpec { disks, multiplicity })
}

/// Cell energies with row prefix sums for fast disk queries.
struct DiskEnergy<'a> {
    grid: &'a Grid,
    prefix: Vec<f64>,
    cols: usize,
}

impl<'a> DiskEnergy<'a> {
    fn new(u: &'a MapSample) -> Result<Self> {
        let grid = u.grid();
        let cells = cell_integrals(grid, &energy_density(u)?);
        let [c0, c1] = grid.cells();
        let mut prefix = vec![0.0; c0 * (c1 + 1)];
        for ci in 0..c0 {
            for cj in 0..c1 {
                prefix[ci * (c1 + 1) + cj + 1] = prefix[ci * (c1 + 1) + cj] + cells[ci * c1 + cj];
            }
        }
        Ok(DiskEnergy { grid, prefix, cols: c1 })
    }

    /// Energy of the cells whose centers lie in `Δ(x, r)`.
    fn disk(&self, x: Complex64, r: f64) -> f64 {
        let (a0, a1) = (self.grid.axis(0), self.grid.axis(1));
        let rows = a0.cells();
        let first = ((x.re - r - a0.cell_center(0)) / a0.step).floor().max(0.0) as usize;
        let base = a1.cell_center(0);
        let mut sum = 0.0;
        for ci in first..rows {
            let dx = a0.cell_center(ci) - x.re;
            if dx >= r {
                break;
            }
            let dy2 = r * r - dx * dx;
            if dy2 <= 0.0 {
                continue;
            }
            let dy = dy2.sqrt();
            let mut jlo = (((x.im - dy - base) / a1.step).floor() + 1.0).max(0.0) as usize;
            let mut jhi = (((x.im + dy - base) / a1.step).ceil()).clamp(0.0, self.cols as f64) as usize;
            // Settle ties on the circle exactly as `Clip::contains` does.
            let inside = |cj: usize| dx * dx + (a1.cell_center(cj) - x.im).powi(2) < r * r;
            while jlo > 0 && inside(jlo - 1) {
                jlo -= 1;
            }
            while jlo < jhi && !inside(jlo) {
                jlo += 1;
            }
            while jhi < self.cols && inside(jhi) {
                jhi += 1;
            }
            while jhi > jlo && !inside(jhi - 1) {
                jhi -= 1;
            }
            if jhi > jlo {
                let row = ci * (self.cols + 1);
                sum += self.prefix[row + jhi] - self.prefix[row + jlo];
            }
        }
        sum
    }
}

/// `‖du‖²` over the cells with centers in `Δ(x, r)`.
pub fn disk_energy(u: &MapSample, x: Complex64, r: f64) -> Result<f64> {
    Ok(DiskEnergy::new(u)?.disk(x, r))
}

/// Candidate centers: domain nodes at the corners of `region`'s cells, in index order.
fn region_nodes(grid: &Grid, region: &Region) -> Result<Vec<usize>> {
    region.check(grid)?;
    let mut nodes: Vec<usize> = grid
        .cells_in(region)
        .flat_map(|(ci, cj)| grid.cell_corners(ci, cj))
        .filter(|&k| grid.node_in_domain(k) && region.clip.is_none_or(|c| c.contains(grid.point(k))))
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.is_empty() {
        return Err(Error::InvalidRegion("no candidate centers in region".into()));
    }
    Ok(nodes)
}

/// Largest disk energy at radius `r` over `nodes`; ties go to the lowest index.
fn best_center(de: &DiskEnergy, nodes: &[usize], r: f64) -> (usize, f64) {
    nodes
        .par_iter()
        .map(|&k| (k, de.disk(de.grid.point(k), r)))
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        )
}

fn smallest_radius(grid: &Grid) -> f64 {
    let [h0, h1] = grid.spacing();
    0.5 * h0.hypot(h1) * (1.0 + 1e-9)
}

/// Largest `r ≤ ϱ/2` with `sup_x ‖du‖²_{Δ(x,r)} ≤ ε` over node centers in
/// `center_region`, found by bisection to `10⁻⁶` of the grid spacing.
pub fn maximal_radius(u: &MapSample, epsilon: f64, varrho: f64, center_region: &Region) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("ε must be positive, got {epsilon}")));
    }
    let grid = u.grid();
    let lo_r = smallest_radius(grid);
    let cap = 0.5 * varrho;
    if !(cap > lo_r && cap.is_finite()) {
        return Err(invalid(format!("ϱ = {varrho} is not resolvable on this grid")));
    }
    let nodes = region_nodes(grid, center_region)?;
    let de = DiskEnergy::new(u)?;
    let sup = |r: f64| best_center(&de, &nodes, r).1;
    if sup(cap) <= epsilon {
        return Ok(cap);
    }
    if sup(lo_r) > epsilon {
        return Err(Error::HypothesisViolated(format!(
            "energy above ε already at the smallest resolvable radius {lo_r:.3e}"
        )));
    }
    let (mut lo, mut hi) = (lo_r, cap);
    let stop = 1e-6 * grid.spacing()[0].min(grid.spacing()[1]);
    while hi - lo > stop {
        let mid = 0.5 * (lo + hi);
        if sup(mid) > epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub center: Complex64,
    /// Disk energy at the center.
    pub energy: f64,
    /// Energy of one cell-width ring at the center: the resolution of `energy`.
    pub quantization: f64,
}

/// Node center maximizing the energy of `Δ(x, r)`; ties go to the lowest
/// row-major node index. Fails unless the maximum reaches `ε` up to one
/// cell-width ring of energy.
pub fn concentration_center(u: &MapSample, r: f64, epsilon: f64, center_region: &Region) -> Result<Concentration> {
    if !(epsilon > 0.0 && r > 0.0) {
        return Err(invalid("ε and r must be positive"));
    }
    let grid = u.grid();
    let nodes = region_nodes(grid, center_region)?;
    let de = DiskEnergy::new(u)?;
    let (k, e) = best_center(&de, &nodes, r);
    let center = grid.point(k);
    let h = grid.spacing()[0].max(grid.spacing()[1]);
    let quantization = de.disk(center, r + h) - e;
    if e < epsilon - quantization || e <= 0.0 {
        return Err(Error::Inconsistent(format!(
            "largest disk energy {e:.6e} at radius {r:.6e} is below ε = {epsilon:.6e}"
        )));
    }
    Ok(Concentration {
        center,
        energy: e,
        quantization,
    })
}

/// Bilinear value of `u` at `z`, clamped to the lattice box.
fn bilinear(u: &MapSample, z: Complex64, out: &mut [Complex64]) {
    let g = u.grid();
    let [n0, n1] = g.shape();
    let locate = |ax: &crate::grid::Axis, x: f64, n: usize| {
        let f = ((x - ax.coord(0)) / ax.step).clamp(0.0, (n - 1) as f64);
        let i = (f.floor() as usize).min(n - 2);
        (i, f - i as f64)
    };
    let (i, fx) = locate(g.axis(0), z.re, n0);
    let (j, fy) = locate(g.axis(1), z.im, n1);
    let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
    let idx = [g.index(i, j), g.index(i + 1, j), g.index(i, j + 1), g.index(i + 1, j + 1)];
    for (c, o) in out.iter_mut().enumerate() {
        *o = idx.iter().zip(&w).map(|(&k, &wt)| u.at(k)[c] * wt).sum();
    }
}

/// `v(z) = u(x + r z)` on `Disk(out_radius)` with the same number of nodes
/// across as `u`'s first axis.
pub fn rescale(u: &MapSample, x: Complex64, r: f64, out_radius: f64) -> Result<MapSample> {
    let n = u.grid().resolution()[0];
    let n = if n.is_multiple_of(2) { n + 1 } else { n };
    rescale_to(u, x, r, out_radius, n)
}

pub fn rescale_to(u: &MapSample, x: Complex64, r: f64, out_radius: f64, n: usize) -> Result<MapSample> {
    if !(r > 0.0 && out_radius > 0.0) {
        return Err(invalid("scale and radius must be positive"));
    }
    let g = u.grid();
    if matches!(g.kind(), GridKind::Cylinder { .. }) {
        return Err(invalid("rescaling is planar"));
    }
    let reach = r * out_radius;
    let slack = 1e-9 * (1.0 + x.norm() + reach);
    let probes = std::iter::once(x).chain((0..256).map(|k| {
        let t = std::f64::consts::TAU * k as f64 / 256.0;
        x + Complex64::from_polar(reach, t)
    }));
    let [a0, a1] = [g.axis(0), g.axis(1)];
    let in_box = |z: Complex64| {
        z.re >= a0.coord(0) - slack
            && z.re <= a0.coord(a0.len - 1) + slack
            && z.im >= a1.coord(0) - slack
            && z.im <= a1.coord(a1.len - 1) + slack
    };
    for z in probes {
        if !(g.kind().contains_closed(z) || g.kind().contains_closed(z * (1.0 - 1e-12))) || !in_box(z) {
            return Err(Error::OutOfDomain(format!(
                "window Δ({x}, {reach}) leaves the domain near {z}"
            )));
        }
    }
    let out = Grid::disk(out_radius, n)?;
    MapSample::from_fn(&out, u.dim(), |z, o| bilinear(u, x + r * z, o))
}

/// Degeneration subcases for a bubble sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subcase {
    /// Interior, `R_n/r_n` bounded.
    #[serde(rename = "3'")]
    Prime,
    /// Interior, `R_n/r_n` unbounded.
    #[serde(rename = "3''")]
    DoublePrime,
    /// Boundary, `R_n/r_n` bounded.
    #[serde(rename = "3'_b")]
    PrimeB,
    /// Boundary, `R_n/r_n` unbounded, `ρ_n/r_n` bounded.
    #[serde(rename = "3''_b")]
    DoublePrimeB,
    /// Boundary, `ρ_n/r_n` unbounded, `R_n/ρ_n` bounded.
    #[serde(rename = "3'''_b")]
    TriplePrimeB,
    /// Boundary, `ρ_n/r_n` and `R_n/ρ_n` unbounded.
    #[serde(rename = "3''''_b")]
    QuadruplePrimeB,
    #[serde(rename = "none")]
    None,
}

impl Subcase {
    pub fn label(&self) -> &'static str {
        match self {
            Subcase::Prime => "3'",
            Subcase::DoublePrime => "3''",
            Subcase::PrimeB => "3'_b",
            Subcase::DoublePrimeB => "3''_b",
            Subcase::TriplePrimeB => "3'''_b",
            Subcase::QuadruplePrimeB => "3''''_b",
            Subcase::None => "none",
        }
    }
}

/// A finite series is treated as bounded when the maximum over its last
/// third is at most `factor` times the maximum over its first third.
pub fn looks_bounded(series: &[f64], factor: f64) -> bool {
    let m = (series.len() / 3).max(1);
    let head = series[..m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = series[series.len() - m..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    tail <= factor * head
}

/// Classifies with [`DEFAULT_BOUND_FACTOR`].
pub fn classify_subcase(big_r: &[f64], r: &[f64], rho: Option<&[f64]>) -> Result<Subcase> {
    classify_subcase_with(big_r, r, rho, DEFAULT_BOUND_FACTOR)
}

pub fn classify_subcase_with(big_r: &[f64], r: &[f64], rho: Option<&[f64]>, factor: f64) -> Result<Subcase> {
    let len = r.len();
    if len < 5 {
        return Err(invalid(format!("series need at least 5 terms, got {len}")));
    }
    if big_r.len() != len || rho.is_some_and(|p| p.len() != len) {
        return Err(Error::Mismatch("series lengths differ".into()));
    }
    if !(factor >= 1.0) {
        return Err(invalid(format!("bound factor must be ≥ 1, got {factor}")));
    }
    let finite_nonneg = |s: &[f64]| s.iter().all(|x| x.is_finite() && *x >= 0.0);
    if !finite_nonneg(big_r) || !r.iter().all(|x| x.is_finite() && *x > 0.0) || !rho.is_none_or(finite_nonneg) {
        return Err(invalid("series must be finite, with r_n > 0 and R_n, ρ_n ≥ 0"));
    }
    let ratio = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x / y).collect::<Vec<f64>>();
    let r_over_r = ratio(big_r, r);
    let Some(rho) = rho else {
        return Ok(if looks_bounded(&r_over_r, factor) {
            Subcase::Prime
        } else {
            Subcase::DoublePrime
        });
    };
    if looks_bounded(&r_over_r, factor) {
        return Ok(Subcase::PrimeB);
    }
    if looks_bounded(&ratio(rho, r), factor) {
        return Ok(Subcase::DoublePrimeB);
    }
    if rho.contains(&0.0) {
        return Err(Error::HypothesisViolated("ρ_n vanishes while ρ_n/r_n is unbounded".into()));
    }
    Ok(if looks_bounded(&ratio(big_r, rho), factor) {
        Subcase::TriplePrimeB
    } else {
        Subcase::QuadruplePrimeB
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationVerdict {
    pub energy: f64,
    pub oscillation: f64,
    pub candidate: bool,
}

/// A rescaled limit is a bubble candidate when its energy reaches `ε₃`.
pub fn quantization_gate(v: &MapSample, eps3: f64) -> Result<QuantizationVerdict> {
    if !(eps3 > 0.0) {
        return Err(invalid(format!("ε₃ must be positive, got {eps3}")));
    }
    let e = energy(v, &Region::full(v.grid()))?;
    Ok(QuantizationVerdict {
        energy: e,
        oscillation: v.oscillation(),
        candidate: e >= eps3,
    })
}

/// `A·z·(1 − |z|²/R²)³` inside `|z| < R`, zero outside.
pub fn bump_profile(amplitude: f64, support: f64) -> impl Fn(Complex64) -> Complex64 + Copy {
    move |z| {
        let s = 1.0 - z.norm_sqr() / (support * support);
        if s <= 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            amplitude * z * s * s * s
        }
    }
}

/// Exact energy of [`bump_profile`]: `12π A² R²/35`.
pub fn bump_profile_energy(amplitude: f64, support: f64) -> f64 {
    12.0 * std::f64::consts::PI * (amplitude * support).powi(2) / 35.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleOptions {
    pub epsilon: f64,
    /// Coarsest patch diameter; defaults to the domain half-width.
    pub initial_scale: Option<f64>,
    /// Finest patch radius; defaults to two grid spacings.
    pub min_radius: Option<f64>,
    /// Radius cap `ϱ` for the maximal-radius search; defaults to the domain half-width.
    pub varrho: Option<f64>,
    /// Radius of the rescaled profile disk.
    pub out_radius: f64,
    pub bound_factor: f64,
}

impl BubbleOptions {
    pub fn new(epsilon: f64) -> Self {
        BubbleOptions {
            epsilon,
            initial_scale: None,
            min_radius: None,
            varrho: None,
            out_radius: 2.0,
            bound_factor: DEFAULT_BOUND_FACTOR,
        }
    }
}

fn half_width(grid: &Grid) -> f64 {
    let [a0, a1] = [grid.axis(0), grid.axis(1)];
    0.5 * (a0.coord(a0.len - 1) - a0.coord(0)).max(a1.coord(a1.len - 1) - a1.coord(0))
}

pub fn find_bubble_points(fam: &SequenceFamily, epsilon: f64) -> Result<Vec<Complex64>> {
    find_bubble_points_with(fam, &BubbleOptions::new(epsilon))
}

/// Dyadic patch refinement. At scale `a, a/2, …` a patch is bad when the
/// last member carries energy `> ε` on it; at the coarsest scale every tail
/// member (last third, at least two) must be bad, and children are kept only
/// inside bad parents. Each cluster of bad patches at the finest scale
/// reached yields the node maximizing the last member's disk energy there,
/// provided the first member is not concentrated at that point and scale.
pub fn find_bubble_points_with(fam: &SequenceFamily, opts: &BubbleOptions) -> Result<Vec<Complex64>> {
    if !(opts.epsilon > 0.0) {
        return Err(invalid(format!("ε must be positive, got {}", opts.epsilon)));
    }
    if fam.len() < 3 {
        return Err(invalid(format!("need at least 3 members, got {}", fam.len())));
    }
    let grid = fam.grid();
    let eps = opts.epsilon;
    let energies = fam
        .members()
        .iter()
        .map(DiskEnergy::new)
        .collect::<Result<Vec<_>>>()?;
    let last = &energies[fam.len() - 1];
    let tail = &energies[fam.len() - (fam.len() / 3).max(2)..];
    let h = grid.spacing()[0].max(grid.spacing()[1]);
    let min_radius = opts.min_radius.unwrap_or(2.0 * h).max(h);
    let mut a = opts.initial_scale.unwrap_or_else(|| half_width(grid));

    let mut bad: Vec<Patch> = patch_cover(grid, a)?
        .disks
        .into_iter()
        .filter(|p| tail.iter().all(|de| de.disk(p.center, p.radius) > eps))
        .collect();
    loop {
        if bad.is_empty() {
            return Ok(Vec::new());
        }
        let next = 0.5 * a;
        if PATCH_RADIUS * next < min_radius {
            break;
        }
        let children: Vec<Patch> = patch_cover(grid, next)?
            .disks
            .into_par_iter()
            .filter(|c| {
                bad.iter().any(|p| (c.center - p.center).norm() < c.radius + p.radius)
                    && last.disk(c.center, c.radius) > eps
            })
            .collect();
        if children.is_empty() {
            break;
        }
        bad = children;
        a = next;
    }

    // Cluster the finest bad patches.
    let rho = bad[0].radius;
    let mut label: Vec<usize> = (0..bad.len()).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..bad.len() {
        for j in i + 1..bad.len() {
            if (bad[i].center - bad[j].center).norm() < 2.0 * rho + h {
                let (ri, rj) = (root(&mut label, i), root(&mut label, j));
                label[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let first = &energies[0];
    let mut points = Vec::new();
    for c in 0..bad.len() {
        if root(&mut label, c) != c {
            continue;
        }
        let members: Vec<Patch> = (0..bad.len())
            .filter(|&i| root(&mut label, i) == c)
            .map(|i| bad[i])
            .collect();
        let nodes: Vec<usize> = (0..grid.node_count())
            .filter(|&k| {
                let z = grid.point(k);
                grid.node_in_domain(k) && members.iter().any(|p| (z - p.center).norm() < p.radius)
            })
            .collect();
        let (k, e) = best_center(last, &nodes, rho);
        let y = grid.point(k);
        if e > eps && first.disk(y, rho) <= eps {
            points.push(y);
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleReport {
    pub points: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
    pub centers: Vec<[f64; 2]>,
    pub subcase: Subcase,
    pub profile_energy: f64,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// Full pipeline: bubble points, then for the first point the per-member
/// maximal radii and centers (members whose radius hits the cap are
/// skipped), the subcase, and the energy of the rescaled last profile.
pub fn analyze_family(fam: &SequenceFamily, opts: &BubbleOptions) -> Result<BubbleReport> {
    let points = find_bubble_points_with(fam, opts)?;
    let Some(&y) = points.first() else {
        return Ok(BubbleReport {
            points: Vec::new(),
            radii: Vec::new(),
            centers: Vec::new(),
            subcase: Subcase::None,
            profile_energy: 0.0,
        });
    };
    let grid = fam.grid();
    let varrho = opts.varrho.unwrap_or_else(|| half_width(grid));
    let region = Region::disk(grid, y, 0.5 * varrho)?;
    let mut radii = Vec::new();
    let mut centers = Vec::new();
    let mut last = None;
    for u in fam.members() {
        let r = match maximal_radius(u, opts.epsilon, varrho, &region) {
            Ok(r) if r < 0.5 * varrho => r,
            Ok(_) | Err(Error::HypothesisViolated(_)) => continue,
            Err(e) => return Err(e),
        };
        let c = concentration_center(u, r, opts.epsilon, &region)?;
        radii.push(r);
        centers.push(c.center);
        last = Some((u, c.center, r));
    }
    let subcase = if radii.len() >= 5 {
        // Node centers resolve R_n only to one spacing.
        let h = grid.spacing()[0].max(grid.spacing()[1]) * (1.0 + 1e-9);
        let big_r: Vec<f64> = centers
            .iter()
            .map(|x| (x - y).norm())
            .map(|d| if d <= h { 0.0 } else { d })
            .collect();
        let rho: Option<Vec<f64>> = matches!(grid.kind(), GridKind::HalfDisk { .. })
            .then(|| centers.iter().map(|x| x.im).collect());
        classify_subcase_with(&big_r, &radii, rho.as_deref(), opts.bound_factor)?
    } else {
        Subcase::None
    };
    let profile_energy = match last {
        Some((u, x, r)) => match rescale(u, x, r, opts.out_radius) {
            Ok(v) => energy(&v, &Region::full(v.grid()))?,
            Err(Error::OutOfDomain(_)) => disk_energy(u, x, r * opts.out_radius)?,
            Err(e) => return Err(e),
        },
        None => 0.0,
    };
    Ok(BubbleReport {
        points: points.into_iter().map(pair).collect(),
        radii,
        centers: centers.into_iter().map(pair).collect(),
        subcase,
        profile_energy,
    })
}

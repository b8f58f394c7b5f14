//! Structured lattices over the model domains.
//!
//! Every grid is a tensor-product lattice with two axes. Axis 0 carries the
//! real coordinate (`x` for planar kinds, `t` for cylinders and strips) and
//! axis 1 the imaginary one (`y`, resp. `θ`), so a node is the complex point
//! `coord0 + i·coord1`. Planar kinds (disk, half-disk, annulus) sample their
//! bounding box; the domain itself is a mask on nodes and cells.
//!
//! Nodes are stored row-major with axis 0 outermost: `index = i·n1 + j`.
//!
//! Quadrature is cell based. A non-periodic axis with `n` nodes has `n − 1`
//! cells, the periodic cylinder axis has `n`. A cell belongs to the domain
//! when its center does.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimal node count per axis accepted at construction.
pub const MIN_RESOLUTION: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridKind {
    Disk { radius: f64 },
    HalfDisk { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    /// `Z(a, b) = [a, b] × S¹`, angular coordinate in `[0, 2π)`.
    Cylinder { a: f64, b: f64 },
    /// `Θ(a, b) = [a, b] × [0, 1]`.
    Strip { a: f64, b: f64 },
}

impl GridKind {
    pub fn name(&self) -> &'static str {
        match self {
            GridKind::Disk { .. } => "disk",
            GridKind::HalfDisk { .. } => "half_disk",
            GridKind::Annulus { .. } => "annulus",
            GridKind::Cylinder { .. } => "cylinder",
            GridKind::Strip { .. } => "strip",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            GridKind::Disk { radius } | GridKind::HalfDisk { radius } => vec![radius],
            GridKind::Annulus { inner, outer } => vec![inner, outer],
            GridKind::Cylinder { a, b } | GridKind::Strip { a, b } => vec![a, b],
        }
    }

    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidGrid(format!(
                    "kind {name} takes {n} parameter(s), got {}",
                    params.len()
                )))
            }
        };
        match name {
            "disk" => want(1).map(|_| GridKind::Disk { radius: params[0] }),
            "half_disk" => want(1).map(|_| GridKind::HalfDisk { radius: params[0] }),
            "annulus" => want(2).map(|_| GridKind::Annulus {
                inner: params[0],
                outer: params[1],
            }),
            "cylinder" => want(2).map(|_| GridKind::Cylinder {
                a: params[0],
                b: params[1],
            }),
            "strip" => want(2).map(|_| GridKind::Strip {
                a: params[0],
                b: params[1],
            }),
            other => Err(Error::InvalidGrid(format!("unknown grid kind {other:?}"))),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.params().iter().all(|p| p.is_finite());
        if !finite {
            return Err(Error::InvalidGrid("non-finite domain parameter".into()));
        }
        match *self {
            GridKind::Disk { radius } | GridKind::HalfDisk { radius } if radius <= 0.0 => {
                Err(Error::InvalidGrid(format!("radius must be > 0, got {radius}")))
            }
            GridKind::Annulus { inner, outer } if !(0.0 < inner && inner < outer) => Err(
                Error::InvalidGrid(format!("annulus requires 0 < inner < outer, got {inner}, {outer}")),
            ),
            GridKind::Cylinder { a, b } | GridKind::Strip { a, b } if a >= b => {
                Err(Error::InvalidGrid(format!("requires a < b, got {a}, {b}")))
            }
            _ => Ok(()),
        }
    }

    /// Closed-domain membership, used for nodes.
    pub fn contains_closed(&self, z: Complex64) -> bool {
        let r2 = z.norm_sqr();
        let slack = 1e-12;
        match *self {
            GridKind::Disk { radius } => r2 <= radius * radius * (1.0 + slack),
            GridKind::HalfDisk { radius } => z.im >= 0.0 && r2 <= radius * radius * (1.0 + slack),
            GridKind::Annulus { inner, outer } => {
                r2 >= inner * inner * (1.0 - slack) && r2 <= outer * outer * (1.0 + slack)
            }
            GridKind::Cylinder { .. } | GridKind::Strip { .. } => true,
        }
    }

    /// Open-domain membership, used for cell centers.
    pub fn contains_open(&self, z: Complex64) -> bool {
        let r2 = z.norm_sqr();
        match *self {
            GridKind::Disk { radius } => r2 < radius * radius,
            GridKind::HalfDisk { radius } => z.im > 0.0 && r2 < radius * radius,
            GridKind::Annulus { inner, outer } => r2 > inner * inner && r2 < outer * outer,
            GridKind::Cylinder { .. } | GridKind::Strip { .. } => true,
        }
    }
}

/// One lattice axis: node `i` sits at `origin + (offset + i)·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub origin: f64,
    pub step: f64,
    pub offset: usize,
    pub len: usize,
    pub periodic: bool,
}

impl Axis {
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.origin + (self.offset + i) as f64 * self.step
    }

    pub fn cells(&self) -> usize {
        if self.periodic {
            self.len
        } else {
            self.len - 1
        }
    }

    #[inline]
    pub fn cell_center(&self, c: usize) -> f64 {
        self.origin + ((self.offset + c) as f64 + 0.5) * self.step
    }

    /// Index of the closest lattice node (clamped).
    pub fn nearest(&self, x: f64) -> usize {
        let f = ((x - self.coord(0)) / self.step).round();
        if f <= 0.0 {
            0
        } else {
            (f as usize).min(self.len - 1)
        }
    }
}

/// Annular (or disk, when `inner == 0`) restriction of cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub center: Complex64,
    pub inner: f64,
    pub outer: f64,
}

impl Clip {
    pub fn disk(center: Complex64, radius: f64) -> Self {
        Clip {
            center,
            inner: 0.0,
            outer: radius,
        }
    }

    #[inline]
    pub fn contains(&self, z: Complex64) -> bool {
        let d2 = (z - self.center).norm_sqr();
        d2 >= self.inner * self.inner && d2 < self.outer * self.outer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    kind: GridKind,
    resolution: [usize; 2],
    axes: [Axis; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    clips: Vec<Clip>,
}

impl Grid {
    /// Builds the standard lattice of `kind` with `resolution` nodes per axis.
    pub fn new(kind: GridKind, resolution: [usize; 2]) -> Result<Self> {
        kind.validate()?;
        for (axis, &n) in resolution.iter().enumerate() {
            if n < MIN_RESOLUTION {
                return Err(Error::ResolutionTooSmall {
                    axis,
                    got: n,
                    need: MIN_RESOLUTION,
                });
            }
        }
        let [n0, n1] = resolution;
        let span = |lo: f64, hi: f64, n: usize| Axis {
            origin: lo,
            step: (hi - lo) / (n - 1) as f64,
            offset: 0,
            len: n,
            periodic: false,
        };
        let axes = match kind {
            GridKind::Disk { radius } => [span(-radius, radius, n0), span(-radius, radius, n1)],
            GridKind::HalfDisk { radius } => [span(-radius, radius, n0), span(0.0, radius, n1)],
            GridKind::Annulus { outer, .. } => [span(-outer, outer, n0), span(-outer, outer, n1)],
            GridKind::Cylinder { a, b } => [
                span(a, b, n0),
                Axis {
                    origin: 0.0,
                    step: std::f64::consts::TAU / n1 as f64,
                    offset: 0,
                    len: n1,
                    periodic: true,
                },
            ],
            GridKind::Strip { a, b } => [span(a, b, n0), span(0.0, 1.0, n1)],
        };
        Ok(Grid {
            kind,
            resolution,
            axes,
            clips: Vec::new(),
        })
    }

    pub fn disk(radius: f64, n: usize) -> Result<Self> {
        Self::new(GridKind::Disk { radius }, [n, n])
    }

    /// Half-disk with square cells: `n` must be odd so that `y = 0` and the
    /// spacing match the full disk of the same `n`.
    pub fn half_disk(radius: f64, n: usize) -> Result<Self> {
        if n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "half-disk x-resolution must be odd, got {n}"
            )));
        }
        Self::new(GridKind::HalfDisk { radius }, [n, n / 2 + 1])
    }

    pub fn annulus(inner: f64, outer: f64, n: usize) -> Result<Self> {
        Self::new(GridKind::Annulus { inner, outer }, [n, n])
    }

    /// Cylinder `Z(a, b)` with `per_unit` cells per unit length along `t`.
    pub fn cylinder(a: f64, b: f64, per_unit: usize, n_theta: usize) -> Result<Self> {
        let n_t = ((b - a) * per_unit as f64).round() as usize + 1;
        Self::new(GridKind::Cylinder { a, b }, [n_t, n_theta])
    }

    /// Strip `Θ(a, b)` with `per_unit` cells per unit length along `t`.
    pub fn strip(a: f64, b: f64, per_unit: usize, n_theta: usize) -> Result<Self> {
        let n_t = ((b - a) * per_unit as f64).round() as usize + 1;
        Self::new(GridKind::Strip { a, b }, [n_t, n_theta])
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn resolution(&self) -> [usize; 2] {
        self.resolution
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    /// Whether the lattice is the full standard one (no window, no clip).
    pub fn is_standard(&self) -> bool {
        self.clips.is_empty() && self.axes.iter().zip(self.resolution).all(|(a, n)| a.offset == 0 && a.len == n)
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        [self.axes[0].len, self.axes[1].len]
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.axes[0].len * self.axes[1].len
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 2] {
        [self.axes[0].step, self.axes[1].step]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.axes[1].len + j
    }

    #[inline]
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.axes[1].len, idx % self.axes[1].len)
    }

    #[inline]
    pub fn point_ij(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.axes[0].coord(i), self.axes[1].coord(j))
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Complex64 {
        let (i, j) = self.split(idx);
        self.point_ij(i, j)
    }

    pub fn points(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.node_count()).map(move |k| self.point(k))
    }

    fn in_clips(&self, z: Complex64) -> bool {
        self.clips.iter().all(|c| c.contains(z))
    }

    /// Node membership in the (closed) domain.
    pub fn node_in_domain(&self, idx: usize) -> bool {
        let z = self.point(idx);
        self.kind.contains_closed(z) && self.in_clips(z)
    }

    #[inline]
    pub fn cells(&self) -> [usize; 2] {
        [self.axes[0].cells(), self.axes[1].cells()]
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.axes[0].step * self.axes[1].step
    }

    #[inline]
    pub fn cell_center(&self, ci: usize, cj: usize) -> Complex64 {
        Complex64::new(self.axes[0].cell_center(ci), self.axes[1].cell_center(cj))
    }

    pub fn cell_in_domain(&self, ci: usize, cj: usize) -> bool {
        let z = self.cell_center(ci, cj);
        self.kind.contains_open(z) && self.in_clips(z)
    }

    /// Corner node indices of cell `(ci, cj)`; the periodic axis wraps.
    #[inline]
    pub fn cell_corners(&self, ci: usize, cj: usize) -> [usize; 4] {
        let n1 = self.axes[1].len;
        let cj1 = if cj + 1 == n1 { 0 } else { cj + 1 };
        [
            self.index(ci, cj),
            self.index(ci + 1, cj),
            self.index(ci, cj1),
            self.index(ci + 1, cj1),
        ]
    }

    /// Cells of `region` inside the domain, in fixed row-major order.
    pub fn cells_in<'a>(&'a self, region: &'a Region) -> impl Iterator<Item = (usize, usize)> + 'a {
        region.cells[0]
            .clone()
            .flat_map(move |ci| region.cells[1].clone().map(move |cj| (ci, cj)))
            .filter(move |&(ci, cj)| {
                self.cell_in_domain(ci, cj)
                    && region.clip.is_none_or(|c| c.contains(self.cell_center(ci, cj)))
            })
    }

    /// Sub-lattice spanned by the nodes of `region`'s cell box. The region
    /// clip, if any, becomes part of the sub-grid's domain.
    pub fn window(&self, region: &Region) -> Result<Grid> {
        region.check(self)?;
        let mut axes = self.axes;
        for a in 0..2 {
            let r = &region.cells[a];
            if self.axes[a].periodic {
                if r.start != 0 || r.end != self.axes[a].cells() {
                    return Err(Error::InvalidRegion(
                        "a periodic axis can only be restricted as a whole".into(),
                    ));
                }
                continue;
            }
            let len = r.end - r.start + 1;
            if len < MIN_RESOLUTION {
                return Err(Error::ResolutionTooSmall {
                    axis: a,
                    got: len,
                    need: MIN_RESOLUTION,
                });
            }
            axes[a].offset += r.start;
            axes[a].len = len;
        }
        let mut clips = self.clips.clone();
        if let Some(c) = region.clip {
            if !clips.contains(&c) {
                clips.push(c);
            }
        }
        Ok(Grid {
            kind: self.kind,
            resolution: self.resolution,
            axes,
            clips,
        })
    }

    /// Node offset of this grid's window inside the standard lattice.
    pub fn window_offset(&self) -> [usize; 2] {
        [self.axes[0].offset, self.axes[1].offset]
    }

    pub(crate) fn with_window(&self, offset: [usize; 2], len: [usize; 2], clips: Vec<Clip>) -> Result<Grid> {
        let mut axes = self.axes;
        for a in 0..2 {
            if axes[a].periodic {
                if offset[a] != 0 || len[a] != self.resolution[a] {
                    return Err(Error::InvalidGrid("periodic axis window must be full".into()));
                }
                continue;
            }
            if offset[a] + len[a] > self.resolution[a] || len[a] < MIN_RESOLUTION {
                return Err(Error::InvalidGrid(format!("window out of range on axis {a}")));
            }
            axes[a].offset = offset[a];
            axes[a].len = len[a];
        }
        Ok(Grid {
            kind: self.kind,
            resolution: self.resolution,
            axes,
            clips,
        })
    }
}

/// A box of cells, optionally clipped to an annulus or disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub cells: [Range<usize>; 2],
    pub clip: Option<Clip>,
}

impl Region {
    pub fn full(grid: &Grid) -> Region {
        let [c0, c1] = grid.cells();
        Region {
            cells: [0..c0, 0..c1],
            clip: None,
        }
    }

    pub fn cells(grid: &Grid, r0: Range<usize>, r1: Range<usize>) -> Result<Region> {
        let r = Region {
            cells: [r0, r1],
            clip: None,
        };
        r.check(grid)?;
        Ok(r)
    }

    /// Cells whose centers lie in the disk `Δ(center, radius)`.
    pub fn disk(grid: &Grid, center: Complex64, radius: f64) -> Result<Region> {
        Self::annulus(grid, center, 0.0, radius)
    }

    /// Cells whose centers satisfy `inner ≤ |z − center| < outer`.
    pub fn annulus(grid: &Grid, center: Complex64, inner: f64, outer: f64) -> Result<Region> {
        if !(outer > 0.0 && inner >= 0.0 && inner < outer) {
            return Err(Error::InvalidRegion(format!(
                "bad radii inner={inner}, outer={outer}"
            )));
        }
        let cells = [
            cell_span(grid.axis(0), center.re - outer, center.re + outer),
            cell_span(grid.axis(1), center.im - outer, center.im + outer),
        ];
        if cells.iter().any(|r| r.is_empty()) {
            return Err(Error::InvalidRegion("disk misses the grid".into()));
        }
        Ok(Region {
            cells,
            clip: Some(Clip {
                center,
                inner,
                outer,
            }),
        })
    }

    /// The band `t0 ≤ t ≤ t1` (all of axis 1), snapped to cell boundaries.
    pub fn t_band(grid: &Grid, t0: f64, t1: f64) -> Result<Region> {
        let ax = grid.axis(0);
        let c0 = ((t0 - ax.coord(0)) / ax.step).round();
        let c1 = ((t1 - ax.coord(0)) / ax.step).round();
        if !(c0 >= 0.0 && c1 <= ax.cells() as f64 && c0 < c1) {
            return Err(Error::InvalidRegion(format!(
                "band [{t0}, {t1}] outside the grid or empty"
            )));
        }
        Region::cells(grid, c0 as usize..c1 as usize, 0..grid.cells()[1])
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        let [c0, c1] = grid.cells();
        if self.cells[0].is_empty() || self.cells[1].is_empty() {
            return Err(Error::InvalidRegion("empty region".into()));
        }
        if self.cells[0].end > c0 || self.cells[1].end > c1 {
            return Err(Error::InvalidRegion(format!(
                "cell box {:?} exceeds grid cells [{c0}, {c1}]",
                self.cells
            )));
        }
        Ok(())
    }
}

fn cell_span(ax: &Axis, lo: f64, hi: f64) -> Range<usize> {
    let n = ax.cells();
    if ax.periodic {
        return 0..n;
    }
    let first = ((lo - ax.coord(0)) / ax.step - 0.5).floor().max(0.0);
    let last = ((hi - ax.coord(0)) / ax.step - 0.5).ceil() + 1.0;
    let first = (first as usize).min(n);
    let last = if last <= 0.0 { 0 } else { (last as usize).min(n) };
    first..last.max(first)
}

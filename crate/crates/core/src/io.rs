//! Sample interchange: one CSV row per node plus a JSON grid descriptor.
//!
//! CSV header is `t,theta,re0,im0[,re1,im1,…]`; rows follow the node order
//! of [`Grid`] (axis 0 outermost). For planar grids the `t` and `theta`
//! columns carry `x` and `y`. Floats are written in shortest round-trip
//! form, so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Clip, Grid, GridKind};
use crate::sample::MapSample;

/// Sidecar JSON describing the grid of a CSV sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub kind: String,
    pub params: Vec<f64>,
    pub resolution: [usize; 2],
    pub target_dim: usize,
    /// `[[offset0, len0], [offset1, len1]]` for sub-grids; omitted for full lattices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[[usize; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clips: Vec<Clip>,
}

impl GridDescriptor {
    pub fn of(u: &MapSample) -> Self {
        let g = u.grid();
        let window = if g.axis(0).offset == 0
            && g.axis(1).offset == 0
            && g.shape() == g.resolution()
        {
            None
        } else {
            Some([
                [g.axis(0).offset, g.axis(0).len],
                [g.axis(1).offset, g.axis(1).len],
            ])
        };
        GridDescriptor {
            kind: g.kind().name().to_string(),
            params: g.kind().params(),
            resolution: g.resolution(),
            target_dim: u.dim(),
            window,
            clips: g.clips().to_vec(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let kind = GridKind::from_name(&self.kind, &self.params)?;
        let full = Grid::new(kind, self.resolution)?;
        match self.window {
            None if self.clips.is_empty() => Ok(full),
            None => full.with_window([0, 0], self.resolution, self.clips.clone()),
            Some([[o0, l0], [o1, l1]]) => full.with_window([o0, o1], [l0, l1], self.clips.clone()),
        }
    }
}

pub fn csv_header(dim: usize) -> String {
    let mut h = String::from("t,theta");
    for c in 0..dim {
        let _ = write!(h, ",re{c},im{c}");
    }
    h
}

pub fn to_csv(u: &MapSample) -> String {
    let g = u.grid();
    let mut out = csv_header(u.dim());
    out.push('\n');
    for k in 0..g.node_count() {
        let z = g.point(k);
        let _ = write!(out, "{},{}", z.re, z.im);
        for v in u.at(k) {
            let _ = write!(out, ",{},{}", v.re, v.im);
        }
        out.push('\n');
    }
    out
}

pub fn from_csv(desc: &GridDescriptor, text: &str, origin: &str) -> Result<MapSample> {
    let grid = desc.grid()?;
    let fmt = |message: String| Error::Format {
        path: origin.to_string(),
        message,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| fmt("empty file".into()))?;
    if header.trim() != csv_header(desc.target_dim) {
        return Err(fmt(format!("unexpected header {header:?}")));
    }
    let dim = desc.target_dim;
    let mut values = Vec::with_capacity(grid.node_count() * dim);
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 + 2 * dim {
            return Err(fmt(format!("row {}: expected {} fields", lineno + 2, 2 + 2 * dim)));
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| fmt(format!("row {}: {e}", lineno + 2)))?;
        if rows < grid.node_count() {
            let z = grid.point(rows);
            let tol = 1e-9 * (1.0 + z.norm());
            if (nums[0] - z.re).abs() > tol || (nums[1] - z.im).abs() > tol {
                return Err(fmt(format!(
                    "row {}: coordinates ({}, {}) do not match node {rows}",
                    lineno + 2,
                    nums[0],
                    nums[1]
                )));
            }
        }
        for c in 0..dim {
            values.push(Complex64::new(nums[2 + 2 * c], nums[3 + 2 * c]));
        }
        rows += 1;
    }
    if rows != grid.node_count() {
        return Err(fmt(format!("{rows} rows for {} nodes", grid.node_count())));
    }
    MapSample::new(grid, dim, values)
}

pub fn read_sample(csv_path: &Path, json_path: &Path) -> Result<MapSample> {
    let desc_text = read_text(json_path)?;
    let desc: GridDescriptor = serde_json::from_str(&desc_text).map_err(|e| Error::Format {
        path: json_path.display().to_string(),
        message: e.to_string(),
    })?;
    let text = read_text(csv_path)?;
    from_csv(&desc, &text, &csv_path.display().to_string())
}

pub fn write_sample(u: &MapSample, csv_path: &Path, json_path: &Path) -> Result<()> {
    let desc = serde_json::to_string_pretty(&GridDescriptor::of(u)).expect("descriptor serializes");
    write_text(json_path, &desc)?;
    write_text(csv_path, &to_csv(u))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Region;

    #[test]
    fn header_layout() {
        assert_eq!(csv_header(1), "t,theta,re0,im0");
        assert_eq!(csv_header(2), "t,theta,re0,im0,re1,im1");
    }

    #[test]
    fn descriptor_json_shape() {
        let g = Grid::cylinder(0.0, 2.0, 4, 8).unwrap();
        let u = MapSample::scalar(&g, |z| z.exp()).unwrap();
        let json = serde_json::to_value(GridDescriptor::of(&u)).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"kind":"cylinder","params":[0.0,2.0],"resolution":[9,8],"target_dim":1})
        );
    }

    #[test]
    fn rejects_mismatched_rows() {
        let g = Grid::disk(1.0, 3).unwrap();
        let u = MapSample::scalar(&g, |z| z).unwrap();
        let desc = GridDescriptor::of(&u);
        let csv = to_csv(&u);
        let truncated: String = csv.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(from_csv(&desc, &truncated, "mem").is_err());
        let bad_header = csv.replacen("t,theta", "x,y", 1);
        assert!(from_csv(&desc, &bad_header, "mem").is_err());
    }

    #[test]
    fn windowed_sample_round_trips() {
        let g = Grid::strip(0.0, 3.0, 4, 5).unwrap();
        let u = MapSample::scalar(&g, |z| z * z).unwrap();
        let sub = crate::calculus::restrict(&u, &Region::cells(&g, 4..8, 0..4).unwrap()).unwrap();
        let desc = GridDescriptor::of(&sub);
        assert!(desc.window.is_some());
        let back = from_csv(&desc, &to_csv(&sub), "mem").unwrap();
        assert_eq!(back, sub);
    }
}

//! Radial grids and nodal profiles of axisymmetric functions on the plane.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridScheme {
    Uniform,
    /// Node at 0, then geometric from `r_min`.
    Log { r_min: f64 },
    /// Uniform on `[0, r_core]`, geometric beyond.
    Hybrid { r_core: f64 },
    /// Nodes read back from a file.
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    scheme: GridScheme,
}

impl RadialGrid {
    pub fn new(nodes: Vec<f64>, scheme: GridScheme) -> Result<Self> {
        if nodes.len() < MIN_NODES {
            return Err(Error::Input(format!(
                "radial grid needs at least {MIN_NODES} nodes, got {}",
                nodes.len()
            )));
        }
        if !(nodes[0] >= 0.0) {
            return Err(Error::Input(format!(
                "first grid node must be >= 0, got {}",
                nodes[0]
            )));
        }
        for (i, w) in nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Input(format!(
                    "grid nodes must be finite and strictly increasing (at index {})",
                    i + 1
                )));
            }
        }
        Ok(Self { nodes, scheme })
    }

    pub fn uniform(r_max: f64, n: usize) -> Result<Self> {
        check_extent(r_max, n)?;
        let h = r_max / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        nodes[n - 1] = r_max;
        Self::new(nodes, GridScheme::Uniform)
    }

    pub fn log(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        check_extent(r_max, n)?;
        if !(r_min > 0.0 && r_min < r_max) {
            return Err(Error::Input(format!(
                "log grid needs 0 < r_min < r_max, got r_min = {r_min}"
            )));
        }
        let m = n - 1;
        let ratio = (r_max / r_min).ln() / (m - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        nodes.push(0.0);
        for i in 0..m {
            nodes.push(r_min * (ratio * i as f64).exp());
        }
        nodes[n - 1] = r_max;
        Self::new(nodes, GridScheme::Log { r_min })
    }

    /// Uniform core on `[0, r_core]` joined to a geometric tail reaching
    /// `r_max`; the core spacing matches the first geometric step.
    pub fn hybrid(r_core: f64, r_max: f64, n: usize) -> Result<Self> {
        check_extent(r_max, n)?;
        if !(r_core > 0.0 && r_core < r_max) {
            return Err(Error::Input(format!(
                "hybrid grid needs 0 < r_core < r_max, got r_core = {r_core}, r_max = {r_max}"
            )));
        }
        let span = (r_max / r_core).ln();
        let intervals = (n - 1) as f64;
        let n_core = ((intervals / (1.0 + span)).round() as usize).clamp(2, n - 3);
        let n_tail = n - 1 - n_core;
        let ratio = (span / n_tail as f64).exp();
        let h = r_core / n_core as f64;
        let mut nodes = Vec::with_capacity(n);
        for i in 0..=n_core {
            nodes.push(i as f64 * h);
        }
        nodes[n_core] = r_core;
        for i in 1..=n_tail {
            nodes.push(r_core * ratio.powi(i as i32));
        }
        nodes[n - 1] = r_max;
        Self::new(nodes, GridScheme::Hybrid { r_core })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    /// Same grid with every node multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Input(format!("grid scale factor must be positive, got {factor}")));
        }
        let scheme = match self.scheme {
            GridScheme::Log { r_min } => GridScheme::Log {
                r_min: r_min * factor,
            },
            GridScheme::Hybrid { r_core } => GridScheme::Hybrid {
                r_core: r_core * factor,
            },
            s => s,
        };
        Self::new(self.nodes.iter().map(|r| r * factor).collect(), scheme)
    }

    /// `w_j = 2π ∫ s φ_j(s) ds` for the piecewise-linear hat functions, so
    /// that `Σ w_j ρ_j` is the mass of the interpolated density.
    pub fn mass_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (j, p) in self.nodes.windows(2).enumerate() {
            let (a, b) = (p[0], p[1]);
            let h = b - a;
            w[j] += 2.0 * PI * h * (2.0 * a + b) / 6.0;
            w[j + 1] += 2.0 * PI * h * (a + 2.0 * b) / 6.0;
        }
        w
    }

    /// Index of the panel `[r_i, r_{i+1}]` holding `r`, clamped to the grid.
    pub fn panel_of(&self, r: f64) -> usize {
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|&x| x <= r);
        i.saturating_sub(1).min(n - 2)
    }

    /// SHA-256 of the node bit patterns, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.nodes {
            h.update(r.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn check_extent(r_max: f64, n: usize) -> Result<()> {
    if n < MIN_NODES {
        return Err(Error::Input(format!(
            "radial grid needs at least {MIN_NODES} nodes, got {n}"
        )));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::Input(format!("r_max must be positive, got {r_max}")));
    }
    Ok(())
}

/// Values of an axisymmetric function at the nodes of a grid, interpolated
/// linearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "profile has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("profile value at node {i} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// A profile that must be a density: nonnegative at every node.
    pub fn density(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        let p = Self::new(grid, values)?;
        p.check_density()?;
        Ok(p)
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn<F: FnMut(f64) -> f64>(grid: Arc<RadialGrid>, mut f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn check_density(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|&v| v < 0.0) {
            return Err(Error::Input(format!(
                "density is negative at node {i} (r = {}, value {})",
                self.grid.nodes()[i],
                self.values[i]
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: FnMut(f64) -> f64>(&self, f: F) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().copied().map(f).collect())
    }

    /// Linear interpolation; `outside` is returned beyond the last node.
    pub fn interpolate(&self, r: f64, outside: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r > self.grid.r_max() {
            return outside;
        }
        if r <= nodes[0] {
            return self.values[0];
        }
        let i = self.grid.panel_of(r);
        let t = (r - nodes[i]) / (nodes[i + 1] - nodes[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// `2π ∫ r·value dr` of the interpolant.
    pub fn mass(&self) -> f64 {
        self.grid
            .mass_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Nodal derivative from a cubic spline with zero slope at `r = 0` and a
    /// natural right end.
    pub fn spline_derivative(&self) -> Vec<f64> {
        CubicSpline::new(self.grid.nodes(), &self.values).nodal_derivatives()
    }

    pub fn to_csv_string(&self, metadata: &[(String, String)], column: &str) -> String {
        let mut s = String::new();
        for (k, v) in metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "r,{column}");
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{r:.16e},{v:.16e}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path, metadata: &[(String, String)], column: &str) -> Result<()> {
        std::fs::write(path, self.to_csv_string(metadata, column))?;
        Ok(())
    }

    /// Reads a two-column `r,<name>` CSV; `#` lines are skipped.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table = read_table(&text, 2).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if table.header[0] != "r" {
            return Err(Error::Parse(format!(
                "{}: first column must be `r`, got `{}`",
                path.display(),
                table.header[0]
            )));
        }
        let grid = Arc::new(RadialGrid::new(table.columns[0].clone(), GridScheme::Tabulated)?);
        Self::new(grid, table.columns[1].clone())
    }
}

/// Parsed numeric CSV: `#` comment lines, one header line, then rows.
#[derive(Debug, Clone)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

pub fn read_table(text: &str, min_columns: usize) -> Result<Table> {
    let mut comments = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => {
                if cells.len() < min_columns {
                    return Err(Error::Parse(format!(
                        "line {}: expected at least {min_columns} columns",
                        lineno + 1
                    )));
                }
                columns = vec![Vec::new(); cells.len()];
                header = Some(cells.iter().map(|s| s.to_string()).collect());
            }
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(Error::Parse(format!(
                        "line {}: expected {} columns, got {}",
                        lineno + 1,
                        h.len(),
                        cells.len()
                    )));
                }
                for (col, cell) in columns.iter_mut().zip(&cells) {
                    col.push(cell.parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: `{cell}`: {e}", lineno + 1))
                    })?);
                }
            }
        }
    }
    let header = header.ok_or_else(|| Error::Parse("missing header line".into()))?;
    Ok(Table {
        comments,
        header,
        columns,
    })
}

/// Cubic spline with `y'(x₀) = 0` and `y''(x_n) = 0`.
pub(crate) struct CubicSpline<'a> {
    x: &'a [f64],
    y: &'a [f64],
    /// second derivatives at the nodes
    m: Vec<f64>,
}

impl<'a> CubicSpline<'a> {
    pub(crate) fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        // tridiagonal system for the second derivatives
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        sup[0] = h[0];
        rhs[0] = 6.0 * (y[1] - y[0]) / h[0];
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        diag[n - 1] = 1.0;
        rhs[n - 1] = 0.0;
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Self { x, y, m }
    }

    pub(crate) fn nodal_derivatives(&self) -> Vec<f64> {
        let n = self.x.len();
        let mut d = vec![0.0; n];
        for i in 0..n - 1 {
            let h = self.x[i + 1] - self.x[i];
            d[i] = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
        }
        let h = self.x[n - 1] - self.x[n - 2];
        d[n - 1] =
            (self.y[n - 1] - self.y[n - 2]) / h + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0;
        d
    }

    /// Value at a point of panel `i`.
    pub(crate) fn value_at(&self, t: f64, i: usize) -> f64 {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// Derivative at a point of panel `i`.
    pub(crate) fn derivative_at(&self, t: f64, i: usize) -> f64 {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        (self.y[i + 1] - self.y[i]) / h
            + h * ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_grid_shape() {
        let g = RadialGrid::hybrid(1.0, 20.0, 512).unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.r_max(), 20.0);
        assert!(g.nodes().contains(&1.0));
    }

    #[test]
    fn grid_rejects_bad_nodes() {
        assert!(RadialGrid::new((0..10).map(f64::from).collect(), GridScheme::Tabulated).is_err());
        let mut v: Vec<f64> = (0..20).map(f64::from).collect();
        v[5] = v[4];
        assert!(RadialGrid::new(v, GridScheme::Tabulated).is_err());
        assert!(RadialGrid::new((0..20).map(|i| i as f64 - 1.0).collect(), GridScheme::Tabulated).is_err());
    }

    #[test]
    fn mass_weights_are_exact_for_linear_profiles() {
        let g = Arc::new(RadialGrid::log(0.01, 3.0, 40).unwrap());
        // ρ = 1 on [0,3] → 9π; ρ = 3 − r → 2π(27/2 − 9) = 9π
        let one = RadialProfile::from_fn(g.clone(), |_| 1.0).unwrap();
        assert!((one.mass() - 9.0 * PI).abs() < 1e-12);
        let lin = RadialProfile::from_fn(g, |r| 3.0 - r).unwrap();
        assert!((lin.mass() - 9.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn negative_density_rejected() {
        let g = Arc::new(RadialGrid::uniform(1.0, 16).unwrap());
        let mut v = vec![1.0; 16];
        v[3] = -1e-3;
        assert!(matches!(RadialProfile::density(g, v), Err(Error::Input(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Arc::new(RadialGrid::hybrid(0.7, 9.0, 33).unwrap());
        let p = RadialProfile::from_fn(g, |r| (1.0 + r).recip() / 3.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.write_csv(&path, &[("seed".into(), "7".into())], "value").unwrap();
        let back = RadialProfile::read_csv(&path).unwrap();
        assert_eq!(back.values(), p.values());
        assert_eq!(back.grid().nodes(), p.grid().nodes());
        assert_eq!(back.grid().hash(), p.grid().hash());
    }

    #[test]
    fn spline_derivative_of_smooth_even_function() {
        let g = Arc::new(RadialGrid::uniform(4.0, 201).unwrap());
        let p = RadialProfile::from_fn(g.clone(), |r| (-r * r).exp()).unwrap();
        let d = p.spline_derivative();
        for (i, &r) in g.nodes().iter().enumerate().take(180) {
            let exact = -2.0 * r * (-r * r).exp();
            assert!((d[i] - exact).abs() < 1e-4, "r={r}: {} vs {exact}", d[i]);
        }
    }

    #[test]
    fn interpolation_and_panels() {
        let g = Arc::new(RadialGrid::uniform(15.0, 16).unwrap());
        let p = RadialProfile::from_fn(g.clone(), |r| 2.0 * r).unwrap();
        assert_eq!(p.interpolate(3.5, 0.0), 7.0);
        assert_eq!(p.interpolate(16.0, -1.0), -1.0);
        assert_eq!(g.panel_of(15.0), 14);
        assert_eq!(g.panel_of(0.0), 0);
    }
}

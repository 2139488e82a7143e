//! Uniform tensor grids, grid functions and the discrete operators shared by
//! every solver: the mixed Dirichlet/Neumann Laplacian, the weighted inner
//! product and the time antiderivative `(1*v)(t) = ∫₀ᵗ v`.
//!
//! Two node layouts live on one grid:
//!
//! * [`Bc::Dirichlet`] fields store interior nodes only; boundary values are
//!   implicitly zero.
//! * [`Bc::Neumann`] fields store every node including the boundary; the
//!   Laplacian mirrors the first interior neighbour into the ghost slot.
//!
//! Quadrature weights are the cell volume `Π h` at interior nodes and halve
//! once per boundary axis on Neumann nodes. With these weights both discrete
//! Laplacians are symmetric, which is what makes the discrete adjoint an
//! exact transpose of the forward linearization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition attached to a field; decides its node layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Domain extent per axis (one entry in 1D, two in 2D).
    pub lengths: Vec<f64>,
    /// Cells per axis.
    pub cells: Vec<usize>,
    pub time_steps: usize,
    pub final_time: f64,
    /// Upper bound on `(time_steps + 1) × nodes`.
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_max_nodes() -> usize {
    50_000_000
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Axis {
    length: f64,
    cells: usize,
    h: f64,
}

/// Space-time mesh: a uniform tensor grid of an interval or rectangle and a
/// uniform time grid on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    time_steps: usize,
    final_time: f64,
    dt: f64,
}

impl Grid {
    pub fn new(config: &GridConfig) -> Result<Self> {
        let dim = config.lengths.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::config("grid.lengths", "expected one or two axes"));
        }
        if config.cells.len() != dim {
            return Err(Error::config(
                "grid.cells",
                format!("expected {dim} entries, got {}", config.cells.len()),
            ));
        }
        let mut axes = Vec::with_capacity(dim);
        for (&length, &cells) in config.lengths.iter().zip(&config.cells) {
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::config("grid.lengths", "extents must be positive"));
            }
            if cells < 2 {
                return Err(Error::config(
                    "grid.cells",
                    "need at least 2 cells per axis",
                ));
            }
            axes.push(Axis {
                length,
                cells,
                h: length / cells as f64,
            });
        }
        if config.time_steps == 0 {
            return Err(Error::config("grid.time_steps", "must be at least 1"));
        }
        if !(config.final_time.is_finite() && config.final_time > 0.0) {
            return Err(Error::config("grid.final_time", "must be positive"));
        }
        let grid = Grid {
            axes,
            time_steps: config.time_steps,
            final_time: config.final_time,
            dt: config.final_time / config.time_steps as f64,
        };
        let total = (grid.time_steps + 1).saturating_mul(grid.node_count(Bc::Neumann));
        if total > config.max_nodes {
            return Err(Error::config(
                "grid.max_nodes",
                format!(
                    "space-time node count {total} exceeds budget {}",
                    config.max_nodes
                ),
            ));
        }
        Ok(grid)
    }

    /// Convenience constructor for the 1D unit-length grids used throughout tests.
    pub fn interval(length: f64, cells: usize, time_steps: usize, final_time: f64) -> Result<Self> {
        Grid::new(&GridConfig {
            lengths: vec![length],
            cells: vec![cells],
            time_steps,
            final_time,
            max_nodes: default_max_nodes(),
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.h).collect()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.length).collect()
    }

    pub fn cells(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.cells).collect()
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    /// Same spatial mesh with a different number of time steps.
    pub fn with_time_steps(&self, time_steps: usize) -> Result<Self> {
        if time_steps == 0 {
            return Err(Error::config("grid.time_steps", "must be at least 1"));
        }
        Ok(Grid {
            axes: self.axes.clone(),
            time_steps,
            final_time: self.final_time,
            dt: self.final_time / time_steps as f64,
        })
    }

    fn axis_count(&self, axis: usize, bc: Bc) -> usize {
        match self.axes.get(axis) {
            None => 1,
            Some(a) => match bc {
                Bc::Dirichlet => a.cells - 1,
                Bc::Neumann => a.cells + 1,
            },
        }
    }

    /// Node counts along x and y for a layout (`y` is 1 in 1D).
    pub fn shape(&self, bc: Bc) -> [usize; 2] {
        [self.axis_count(0, bc), self.axis_count(1, bc)]
    }

    pub fn node_count(&self, bc: Bc) -> usize {
        let [nx, ny] = self.shape(bc);
        nx * ny
    }

    fn axis_coord(&self, axis: usize, bc: Bc, i: usize) -> f64 {
        match self.axes.get(axis) {
            None => 0.0,
            Some(a) => match bc {
                Bc::Dirichlet => (i + 1) as f64 * a.h,
                Bc::Neumann => i as f64 * a.h,
            },
        }
    }

    /// Physical coordinates `(x, y)` of node `idx`; `y` is 0 in 1D.
    pub fn coords(&self, bc: Bc, idx: usize) -> [f64; 2] {
        let nx = self.shape(bc)[0];
        [
            self.axis_coord(0, bc, idx % nx),
            self.axis_coord(1, bc, idx / nx),
        ]
    }

    /// Quadrature weight of every node of the layout.
    pub fn weights(&self, bc: Bc) -> Vec<f64> {
        let [nx, ny] = self.shape(bc);
        let axis_weight = |axis: usize, i: usize, count: usize| -> f64 {
            match self.axes.get(axis) {
                None => 1.0,
                Some(a) => {
                    if bc == Bc::Neumann && (i == 0 || i + 1 == count) {
                        0.5 * a.h
                    } else {
                        a.h
                    }
                }
            }
        };
        let mut w = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let wy = axis_weight(1, j, ny);
            for i in 0..nx {
                w.push(axis_weight(0, i, nx) * wy);
            }
        }
        w
    }

    /// For every Dirichlet (interior) node, the index of the same point in
    /// the Neumann layout.
    pub fn interior_to_full(&self) -> Vec<usize> {
        let [dx, dy] = self.shape(Bc::Dirichlet);
        let nx = self.shape(Bc::Neumann)[0];
        let y_offset = usize::from(self.dim() == 2);
        let mut map = Vec::with_capacity(dx * dy);
        for j in 0..dy {
            for i in 0..dx {
                map.push((j + y_offset) * nx + i + 1);
            }
        }
        map
    }

    /// Sparse rows of the discrete Laplacian as `(row, col, value)` triplets.
    /// Duplicate coordinates must be summed.
    pub fn laplacian_triplets(&self, bc: Bc) -> Vec<(usize, usize, f64)> {
        let [nx, ny] = self.shape(bc);
        let mut out = Vec::with_capacity(5 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let row = j * nx + i;
                for (axis, a) in self.axes.iter().enumerate() {
                    let inv_h2 = 1.0 / (a.h * a.h);
                    let (pos, count) = if axis == 0 { (i, nx) } else { (j, ny) };
                    out.push((row, row, -2.0 * inv_h2));
                    for nb in axis_neighbours(bc, pos, count).into_iter().flatten() {
                        let col = if axis == 0 { j * nx + nb } else { nb * nx + i };
                        out.push((row, col, inv_h2));
                    }
                }
            }
        }
        out
    }

    fn check(&self, f: &Field) -> Result<()> {
        let expected = self.node_count(f.bc);
        if f.values.len() != expected {
            return Err(Error::Shape(format!(
                "{:?} field has {} values, grid expects {expected}",
                f.bc,
                f.values.len()
            )));
        }
        Ok(())
    }
}

fn axis_neighbours(bc: Bc, i: usize, count: usize) -> [Option<usize>; 2] {
    match bc {
        Bc::Neumann => [
            Some(if i == 0 { 1 } else { i - 1 }),
            Some(if i + 1 == count { count - 2 } else { i + 1 }),
        ],
        Bc::Dirichlet => [i.checked_sub(1), (i + 1 < count).then_some(i + 1)],
    }
}

/// Grid function on one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub bc: Bc,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, bc: Bc) -> Self {
        Field::constant(grid, bc, 0.0)
    }

    pub fn constant(grid: &Grid, bc: Bc, value: f64) -> Self {
        Field {
            bc,
            values: vec![value; grid.node_count(bc)],
        }
    }

    pub fn from_fn(grid: &Grid, bc: Bc, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.node_count(bc))
            .map(|i| f(grid.coords(bc, i)))
            .collect();
        Field { bc, values }
    }

    pub fn new(grid: &Grid, bc: Bc, values: Vec<f64>) -> Result<Self> {
        let f = Field { bc, values };
        grid.check(&f)?;
        if let Some(v) = f.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value {v}")));
        }
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            bc: self.bc,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.values.len(), other.values.len());
        Field {
            bc: self.bc,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        self.map(|v| alpha * v)
    }
}

/// Discrete Laplacian of `f` with the boundary treatment of its layout.
pub fn laplacian_apply(grid: &Grid, f: &Field) -> Field {
    let mut out = vec![0.0; f.values.len()];
    for (row, col, v) in grid.laplacian_triplets(f.bc) {
        out[row] += v * f.values[col];
    }
    Field {
        bc: f.bc,
        values: out,
    }
}

/// Weighted spatial inner product `Σ wᵢ fᵢ gᵢ`.
pub fn inner_product(grid: &Grid, f: &Field, g: &Field) -> Result<f64> {
    if f.bc != g.bc {
        return Err(Error::Shape(format!(
            "inner product of {:?} and {:?} fields",
            f.bc, g.bc
        )));
    }
    grid.check(f)?;
    grid.check(g)?;
    Ok(weighted_dot(&grid.weights(f.bc), &f.values, &g.values))
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Samples a Neumann-layout field at the interior nodes (θ-equation view of φ).
pub fn restrict_to_interior(grid: &Grid, f: &Field) -> Field {
    debug_assert_eq!(f.bc, Bc::Neumann);
    Field {
        bc: Bc::Dirichlet,
        values: grid
            .interior_to_full()
            .iter()
            .map(|&k| f.values[k])
            .collect(),
    }
}

/// Embeds an interior field into the Neumann layout with zero boundary values.
pub fn extend_by_zero(grid: &Grid, f: &Field) -> Field {
    debug_assert_eq!(f.bc, Bc::Dirichlet);
    let mut values = vec![0.0; grid.node_count(Bc::Neumann)];
    for (&k, &v) in grid.interior_to_full().iter().zip(&f.values) {
        values[k] = v;
    }
    Field {
        bc: Bc::Neumann,
        values,
    }
}

/// One field per time level `0..=N`.
///
/// Controls and objective data use the same container; quantities that only
/// live on the new time levels (controls, sources) leave level 0 unused and
/// every space-time pairing below skips it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTime {
    pub levels: Vec<Field>,
}

impl SpaceTime {
    pub fn zeros(grid: &Grid, bc: Bc) -> Self {
        SpaceTime::constant(grid, bc, 0.0)
    }

    pub fn constant(grid: &Grid, bc: Bc, value: f64) -> Self {
        SpaceTime {
            levels: vec![Field::constant(grid, bc, value); grid.time_steps() + 1],
        }
    }

    pub fn from_fn(grid: &Grid, bc: Bc, mut f: impl FnMut(f64, [f64; 2]) -> f64) -> Self {
        SpaceTime {
            levels: (0..=grid.time_steps())
                .map(|n| {
                    let t = grid.time(n);
                    Field::from_fn(grid, bc, |x| f(t, x))
                })
                .collect(),
        }
    }

    pub fn bc(&self) -> Bc {
        self.levels[0].bc
    }

    pub fn check(&self, grid: &Grid, bc: Bc, what: &str) -> Result<()> {
        if self.levels.len() != grid.time_steps() + 1 {
            return Err(Error::Shape(format!(
                "{what}: {} time levels, grid has {}",
                self.levels.len(),
                grid.time_steps() + 1
            )));
        }
        for f in &self.levels {
            if f.bc != bc {
                return Err(Error::Shape(format!("{what}: expected {bc:?} layout")));
            }
            grid.check(f)?;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpaceTime {
        SpaceTime {
            levels: self.levels.iter().map(|l| l.map(&f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &SpaceTime, f: impl Fn(f64, f64) -> f64) -> SpaceTime {
        SpaceTime {
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.zip_map(b, &f))
                .collect(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &SpaceTime) {
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.axpy(alpha, b);
        }
    }

    pub fn scaled(&self, alpha: f64) -> SpaceTime {
        self.map(|v| alpha * v)
    }

    /// Largest magnitude over levels `1..=N`.
    pub fn max_abs(&self) -> f64 {
        self.levels[1..].iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }
}

/// Rectangle-rule space-time inner product over levels `1..=N`.
pub fn inner_product_q(grid: &Grid, a: &SpaceTime, b: &SpaceTime) -> Result<f64> {
    let bc = a.bc();
    a.check(grid, bc, "left operand")?;
    b.check(grid, bc, "right operand")?;
    let w = grid.weights(bc);
    let dt = grid.dt();
    Ok(a.levels[1..]
        .iter()
        .zip(&b.levels[1..])
        .map(|(x, y)| dt * weighted_dot(&w, &x.values, &y.values))
        .sum())
}

pub fn norm_q(grid: &Grid, a: &SpaceTime) -> Result<f64> {
    Ok(inner_product_q(grid, a, a)?.max(0.0).sqrt())
}

/// Cumulative rectangle rule: `(1*v)(t_n) = dt Σ_{k<n} v(t_{k+1})`, level 0 zero.
pub fn time_antiderivative(grid: &Grid, v: &SpaceTime) -> SpaceTime {
    let dt = grid.dt();
    let mut acc = Field {
        bc: v.bc(),
        values: vec![0.0; v.levels[0].len()],
    };
    let mut levels = Vec::with_capacity(v.levels.len());
    levels.push(acc.clone());
    for level in &v.levels[1..] {
        acc.axpy(dt, level);
        levels.push(acc.clone());
    }
    SpaceTime { levels }
}

/// θ, φ and ξ = β(φ) on every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub theta: SpaceTime,
    pub phi: SpaceTime,
    pub xi: SpaceTime,
    /// Newton iterations spent on each step `1..=N` (entry 0 is unused).
    pub newton_iterations: Vec<usize>,
}

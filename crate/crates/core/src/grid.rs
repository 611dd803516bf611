//! Uniform Cartesian lattice and grid-indexed scalar fields.
//!
//! All grids live on the global integer lattice `x = i * h`, `y = j * h`.
//! A [`GridSpec`] is a rectangle of that lattice; localized sub-grids share
//! the lattice of their parent, so node positions coincide bit-for-bit and
//! restriction between grids is an index translation, never an interpolation.

use crate::{Error, Result};

/// Spatial dimension of the lattice. The laboratory is 2-D.
pub const DIM: usize = 2;

/// Axis-aligned rectangle of lattice nodes with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub h: f64,
    /// Lattice index of the lower-left node (position `i0 * h`, `j0 * h`).
    pub i0: i64,
    pub j0: i64,
    /// Node counts per axis.
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Builds the smallest lattice rectangle containing the box `[lo, hi]`.
    /// Box side lengths must be (near-)integer multiples of `h`.
    pub fn from_box(h: f64, lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::GridSpec(format!("h must be positive, got {h}")));
        }
        if hi[0] <= lo[0] || hi[1] <= lo[1] {
            return Err(Error::GridSpec("box has non-positive extent".into()));
        }
        for (a, b) in [(lo[0], hi[0]), (lo[1], hi[1])] {
            let len = (b - a) / h;
            if (len - len.round()).abs() > 1e-9 * len.max(1.0) {
                return Err(Error::GridSpec(format!(
                    "box side length {} is not an integer multiple of h = {h}",
                    b - a
                )));
            }
        }
        let i0 = (lo[0] / h).round() as i64;
        let j0 = (lo[1] / h).round() as i64;
        let nx = ((hi[0] - lo[0]) / h).round() as usize + 1;
        let ny = ((hi[1] - lo[1]) / h).round() as usize + 1;
        Ok(GridSpec { h, i0, j0, nx, ny })
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Position of the local node (i, j).
    #[inline]
    pub fn pos(&self, i: usize, j: usize) -> [f64; 2] {
        [(self.i0 + i as i64) as f64 * self.h, (self.j0 + j as i64) as f64 * self.h]
    }

    /// Global lattice coordinates of the local node (i, j).
    #[inline]
    pub fn lattice(&self, i: usize, j: usize) -> (i64, i64) {
        (self.i0 + i as i64, self.j0 + j as i64)
    }

    /// Local coordinates of a global lattice node, when inside this grid.
    #[inline]
    pub fn local(&self, li: i64, lj: i64) -> Option<(usize, usize)> {
        let i = li - self.i0;
        let j = lj - self.j0;
        if i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }

    /// Local node nearest to a position (clamped to the grid).
    pub fn nearest(&self, p: [f64; 2]) -> (usize, usize) {
        let i = ((p[0] / self.h).round() as i64 - self.i0).clamp(0, self.nx as i64 - 1);
        let j = ((p[1] / self.h).round() as i64 - self.j0).clamp(0, self.ny as i64 - 1);
        (i as usize, j as usize)
    }

    pub fn lo(&self) -> [f64; 2] {
        self.pos(0, 0)
    }

    pub fn hi(&self) -> [f64; 2] {
        self.pos(self.nx - 1, self.ny - 1)
    }

    /// Iterator over all local nodes (i, j).
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nx = self.nx;
        (0..self.n_nodes()).map(move |k| (k % nx, k / nx))
    }
}

/// Real values attached to every node of a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField { spec, data: vec![0.0; spec.n_nodes()] }
    }

    pub fn constant(spec: GridSpec, v: f64) -> Self {
        ScalarField { spec, data: vec![v; spec.n_nodes()] }
    }

    /// Field sampled from a function of position.
    pub fn sample<F: Fn(f64, f64) -> f64>(spec: GridSpec, f: F) -> Self {
        let mut data = Vec::with_capacity(spec.n_nodes());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let p = spec.pos(i, j);
                data.push(f(p[0], p[1]));
            }
        }
        ScalarField { spec, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.spec.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.spec.idx(i, j);
        self.data[k] = v;
    }

    /// Value at a global lattice node, when covered by this field.
    #[inline]
    pub fn get_lattice(&self, li: i64, lj: i64) -> Option<f64> {
        self.spec.local(li, lj).map(|(i, j)| self.get(i, j))
    }

    /// Copies values from `src` at every lattice node both fields cover.
    pub fn pull_shared(&mut self, src: &ScalarField) {
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                let (li, lj) = self.spec.lattice(i, j);
                if let Some(v) = src.get_lattice(li, lj) {
                    self.set(i, j, v);
                }
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Checks that two fields share a grid, for operations that mix them.
pub fn check_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.spec != b.spec {
        return Err(Error::Precondition("fields live on different grids".into()));
    }
    Ok(())
}

//! Dense row-major 2-D matrices used for templates and images.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type BinaryGrid = Grid<u8>;
pub type Image = Grid<f64>;

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Grid { rows, cols, data: vec![value; rows * cols] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return param(format!("grid data length {} does not match {rows}x{cols}", data.len()));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// Sub-matrix starting at (r0, c0).
    pub fn window(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Grid<T> {
        Grid::from_fn(rows, cols, |r, c| self.at(r0 + r, c0 + c))
    }

    /// Clockwise rotation by `quarter_turns` × 90°.
    pub fn rotate90(&self, quarter_turns: usize) -> Grid<T> {
        let mut g = self.clone_grid();
        for _ in 0..quarter_turns % 4 {
            let src = g;
            g = Grid::from_fn(src.cols, src.rows, |r, c| src.at(src.rows - 1 - c, r));
        }
        g
    }

    fn clone_grid(&self) -> Grid<T> {
        Grid { rows: self.rows, cols: self.cols, data: self.data.clone() }
    }

    /// Nearest-neighbour block upsampling by an integer factor.
    pub fn upsample(&self, factor: usize) -> Grid<T> {
        Grid::from_fn(self.rows * factor, self.cols * factor, |r, c| self.at(r / factor, c / factor))
    }
}

impl Image {
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Block-average pooling by `factor`; trailing partial blocks are averaged over what exists.
    pub fn pool(&self, factor: usize) -> Image {
        let rows = self.rows.div_ceil(factor);
        let cols = self.cols.div_ceil(factor);
        Grid::from_fn(rows, cols, |r, c| {
            let (r1, c1) = (((r + 1) * factor).min(self.rows), ((c + 1) * factor).min(self.cols));
            let mut s = 0.0;
            for rr in r * factor..r1 {
                for cc in c * factor..c1 {
                    s += self.at(rr, cc);
                }
            }
            s / ((r1 - r * factor) * (c1 - c * factor)) as f64
        })
    }
}

impl BinaryGrid {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Ideal reflectance rendering: ink (1) → 0.0, paper (0) → 1.0.
    pub fn to_reflectance(&self) -> Image {
        self.map(|&v| if v != 0 { 0.0 } else { 1.0 })
    }

    pub fn to_f64(&self) -> Image {
        self.map(|&v| v as f64)
    }
}

//! Dense row-major grids and pixel addressing.
//!
//! Every per-pixel quantity in the crate (flow vectors, angles, losses, mask
//! bits, labels) lives in a [`Grid`]. Pixel `(row, col)` is stored at
//! `row * width + col`; `row` indexes height.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize) -> Self {
        Shape { height, width }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.row < self.height && p.col < self.width
    }

    pub fn index(&self, p: PixelCoord) -> usize {
        p.row * self.width + p.col
    }

    pub fn coord(&self, index: usize) -> PixelCoord {
        PixelCoord::new(index / self.width, index % self.width)
    }

    /// All pixel coordinates in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        (0..self.len()).map(move |i| self.coord(i))
    }

    fn check(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::domain(format!(
                "grid shape {}x{} must be at least 1x1",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Pixel position `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PixelCoord {
    pub row: usize,
    pub col: usize,
}

impl PixelCoord {
    pub fn new(row: usize, col: usize) -> Self {
        PixelCoord { row, col }
    }
}

impl From<(usize, usize)> for PixelCoord {
    fn from((row, col): (usize, usize)) -> Self {
        PixelCoord { row, col }
    }
}

/// Per-pixel flow displacement in pixels/frame. `x` is horizontal, `y` vertical.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Flow<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Flow<S> {
    pub fn new(x: S, y: S) -> Self {
        Flow { x, y }
    }

    pub fn zero() -> Self {
        Flow {
            x: S::zero(),
            y: S::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.x == S::zero() && self.y == S::zero()
    }

    pub fn norm_sq(&self) -> S {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(&self) -> S {
        self.x.hypot(self.y)
    }

    pub fn dist_sq(&self, other: &Self) -> S {
        (*self - *other).norm_sq()
    }

    /// Rotates the vector counter-clockwise in the (x, y) plane.
    pub fn rotated(&self, angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        Flow {
            x: self.x * c - self.y * s,
            y: self.x * s + self.y * c,
        }
    }

    pub fn cast<T: Scalar>(&self) -> Flow<T> {
        Flow {
            x: T::of(self.x.as_f64()),
            y: T::of(self.y.as_f64()),
        }
    }
}

impl<S: Scalar> Add for Flow<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Flow::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<S: Scalar> Sub for Flow<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Flow::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<S: Scalar> Mul<S> for Flow<S> {
    type Output = Self;
    fn mul(self, rhs: S) -> Self {
        Flow::new(self.x * rhs, self.y * rhs)
    }
}

/// A value that may be stored in a [`Grid`]. Constructors reject invalid cells.
pub trait Cell: Copy {
    fn is_valid(&self) -> bool {
        true
    }
}

impl Cell for f32 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}

impl Cell for f64 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}

impl<S: Scalar> Cell for Flow<S> {
    fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Cell for bool {}
impl Cell for u32 {}

/// Immutable H×W grid of cells in row-major order.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    shape: Shape,
    data: Vec<T>,
}

pub type FlowField<S> = Grid<Flow<S>>;
/// Per-pixel reals: angles θ in (−π, π] or directional differences δ.
pub type ScalarField<S> = Grid<S>;
pub type BoundaryMask = Grid<bool>;
/// Per-pixel segment labels; label 0 is background.
pub type LabelGrid = Grid<u32>;

impl<T: Cell> Grid<T> {
    /// Builds a grid from row-major data, rejecting bad shapes and invalid cells.
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        shape.check()?;
        if data.len() != shape.len() {
            return Err(Error::domain(format!(
                "grid {shape} needs {} cells, got {}",
                shape.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_valid()) {
            let p = shape.coord(i);
            return Err(Error::Validation {
                row: p.row,
                col: p.col,
                message: "non-finite value".into(),
            });
        }
        Ok(Grid { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(PixelCoord) -> T) -> Result<Self> {
        shape.check()?;
        let data = (0..shape.len()).map(|i| f(shape.coord(i))).collect();
        Self::new(shape, data)
    }

    pub fn filled(shape: Shape, value: T) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    /// Applies `f` per cell; the result is validated like any other grid.
    pub fn map<U: Cell>(&self, f: impl FnMut(&T) -> U) -> Result<Grid<U>> {
        Grid::new(self.shape, self.data.iter().map(f).collect())
    }

    /// Caller guarantees `data` matches `shape` and every cell is valid.
    pub(crate) fn from_raw(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        debug_assert!(data.iter().all(Cell::is_valid));
        Grid { shape, data }
    }
}

impl<T> Grid<T> {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, p: PixelCoord) -> Option<&T> {
        self.shape.contains(p).then(|| &self.data[self.shape.index(p)])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.shape == other.shape
    }

    pub(crate) fn require_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::domain(format!(
                "{what}: shape {} does not match {}",
                other.shape, self.shape
            )));
        }
        Ok(())
    }
}

impl<T: Copy> Grid<T> {
    /// Panics when `(row, col)` is out of bounds.
    pub fn at(&self, row: usize, col: usize) -> T {
        assert!(row < self.shape.height && col < self.shape.width);
        self.data[row * self.shape.width + col]
    }
}

impl<S: Scalar> FlowField<S> {
    pub fn cast<T: Scalar>(&self) -> Result<FlowField<T>> {
        self.map(|v| v.cast())
    }
}

impl BoundaryMask {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &BoundaryMask) -> bool {
        self.shape == other.shape && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

impl<T: fmt::Debug> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn require_in_bounds(p: PixelCoord, shape: Shape) -> Result<()> {
    if !shape.contains(p) {
        return Err(Error::domain(format!(
            "pixel ({}, {}) outside {shape} grid",
            p.row, p.col
        )));
    }
    Ok(())
}

/// In-bounds 4-neighbours of `p` in row-major order.
pub fn neighbors4(p: PixelCoord, shape: Shape) -> Result<Vec<PixelCoord>> {
    require_in_bounds(p, shape)?;
    let mut out = Vec::with_capacity(4);
    if p.row > 0 {
        out.push(PixelCoord::new(p.row - 1, p.col));
    }
    if p.col > 0 {
        out.push(PixelCoord::new(p.row, p.col - 1));
    }
    if p.col + 1 < shape.width {
        out.push(PixelCoord::new(p.row, p.col + 1));
    }
    if p.row + 1 < shape.height {
        out.push(PixelCoord::new(p.row + 1, p.col));
    }
    Ok(out)
}

/// In-bounds pixels within Chebyshev distance `radius` of `p`, `p` included, row-major.
pub fn chebyshev_neighborhood(p: PixelCoord, radius: usize, shape: Shape) -> Result<Vec<PixelCoord>> {
    require_in_bounds(p, shape)?;
    let rows = p.row.saturating_sub(radius)..=(p.row + radius).min(shape.height - 1);
    let cols = p.col.saturating_sub(radius)..=(p.col + radius).min(shape.width - 1);
    Ok(rows
        .flat_map(|r| cols.clone().map(move |c| PixelCoord::new(r, c)))
        .collect())
}

//! Reference sets Ω (balls and boxes), the bounding box Λ that carries the
//! exterior datum, the uniform Cartesian grid over Λ, and fields `u: Λ → [0,1]`
//! whose exterior cells are frozen to the datum `χ_{E₀}`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::MAX_DIM;

#[derive(Debug, Clone, PartialEq)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > MAX_DIM {
            return Err(Error::InvalidDomain(format!(
                "box corners have dimensions {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidDomain(format!("empty box {lo:?}..{hi:?}")));
        }
        Ok(Aabb { lo, hi })
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(alloc::vec![-half_width; dim], alloc::vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn measure(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box(Aabb),
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Ball { center, .. } => center.len(),
            Shape::Box(b) => b.dim(),
        }
    }

    /// Open-set membership; points on the boundary are outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2 < radius * radius
            }
            Shape::Box(b) => x
                .iter()
                .zip(b.lo.iter().zip(&b.hi))
                .all(|(v, (lo, hi))| lo < v && v < hi),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Shape::Ball { center, radius } => {
                math::unit_ball_volume(center.len()) * math::powi(*radius, center.len() as i32)
            }
            Shape::Box(b) => b.measure(),
        }
    }

    fn extent(&self, axis: usize) -> (f64, f64) {
        match self {
            Shape::Ball { center, radius } => (center[axis] - radius, center[axis] + radius),
            Shape::Box(b) => (b.lo[axis], b.hi[axis]),
        }
    }
}

/// Ω together with the computational box Λ ⊋ Ω̄.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    shape: Shape,
    bounding_box: Aabb,
    tail_radius: Option<f64>,
}

impl DomainSpec {
    pub fn new(shape: Shape, bounding_box: Aabb) -> Result<Self> {
        let dim = shape.dim();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        if bounding_box.dim() != dim {
            return Err(Error::InvalidDomain(format!(
                "shape has dimension {dim}, bounding box {}",
                bounding_box.dim()
            )));
        }
        match &shape {
            Shape::Ball { radius, .. } if !(*radius > 0.0 && radius.is_finite()) => {
                return Err(Error::InvalidDomain(format!("ball radius {radius} must be positive")));
            }
            Shape::Box(b) => {
                Aabb::new(b.lo.clone(), b.hi.clone())?;
            }
            _ => {}
        }
        let dom = DomainSpec {
            shape,
            bounding_box,
            tail_radius: None,
        };
        if !(dom.margin() > 0.0) {
            return Err(Error::InvalidDomain(
                "bounding box must strictly contain the closure of the domain".into(),
            ));
        }
        Ok(dom)
    }

    /// Ball of `radius` around `center` inside the cube that leaves `margin`
    /// on every side.
    pub fn ball_with_margin(center: Vec<f64>, radius: f64, margin: f64) -> Result<Self> {
        let lo = center.iter().map(|c| c - radius - margin).collect();
        let hi = center.iter().map(|c| c + radius + margin).collect();
        Self::new(Shape::Ball { center, radius }, Aabb::new(lo, hi)?)
    }

    /// Radius beyond which exterior interactions are only bounded, never
    /// sampled. Defaults to [`DomainSpec::margin`] and may not exceed it.
    pub fn with_tail_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= self.margin()) {
            return Err(Error::InvalidDomain(format!(
                "tail radius {r} must lie in (0, margin = {}]",
                self.margin()
            )));
        }
        self.tail_radius = Some(r);
        Ok(self)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bounding_box(&self) -> &Aabb {
        &self.bounding_box
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Distance from Ω to the boundary of Λ.
    pub fn margin(&self) -> f64 {
        (0..self.dim())
            .map(|k| {
                let (a, b) = self.shape.extent(k);
                (a - self.bounding_box.lo[k]).min(self.bounding_box.hi[k] - b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn tail_radius(&self) -> f64 {
        self.tail_radius.unwrap_or_else(|| self.margin())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.shape.contains(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellTag {
    /// Cell center in Ω.
    Interior,
    /// Cell center in Λ \ Ω.
    Exterior,
}

/// Uniform lattice of cells of side `h` covering Λ, row-major with the last
/// axis contiguous.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: DomainSpec,
    h: f64,
    counts: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    tags: Vec<CellTag>,
    exterior_mask: Vec<f64>,
    interior: Vec<usize>,
}

impl Grid {
    pub fn new(domain: DomainSpec, h: f64) -> Result<Arc<Self>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidDomain(format!("grid spacing {h} must be positive")));
        }
        let dim = domain.dim();
        let bb = domain.bounding_box();
        let mut counts = [1usize; MAX_DIM];
        for k in 0..dim {
            let len = bb.hi[k] - bb.lo[k];
            let n = math::round(len / h);
            if n < 1.0 || (n * h - len).abs() > 1e-9 * len {
                return Err(Error::InvalidDomain(format!(
                    "spacing {h} does not divide the box side {len} on axis {k}"
                )));
            }
            counts[k] = n as usize;
        }
        let mut strides = [0usize; MAX_DIM];
        let mut acc = 1;
        for k in (0..dim).rev() {
            strides[k] = acc;
            acc *= counts[k];
        }
        let total = acc;
        let mut grid = Grid {
            domain,
            h,
            counts,
            strides,
            tags: Vec::with_capacity(total),
            exterior_mask: Vec::with_capacity(total),
            interior: Vec::new(),
        };
        for cell in 0..total {
            let c = grid.center(cell);
            let tag = if grid.domain.contains(&c[..dim]) {
                grid.interior.push(cell);
                CellTag::Interior
            } else {
                CellTag::Exterior
            };
            grid.tags.push(tag);
            grid.exterior_mask.push(if tag == CellTag::Exterior { 1.0 } else { 0.0 });
        }
        if grid.interior.is_empty() {
            return Err(Error::InvalidDomain("no cell center lies inside the domain".into()));
        }
        Ok(Arc::new(grid))
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cell_volume(&self) -> f64 {
        math::powi(self.h, self.dim() as i32)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim()]
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides[..self.dim()]
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, cell: usize) -> CellTag {
        self.tags[cell]
    }

    pub fn tags(&self) -> &[CellTag] {
        &self.tags
    }

    /// 1.0 on exterior cells, 0.0 on interior cells.
    pub(crate) fn exterior_mask(&self) -> &[f64] {
        &self.exterior_mask
    }

    /// Interior cell indices in increasing order.
    pub fn interior_cells(&self) -> &[usize] {
        &self.interior
    }

    pub fn interior_measure(&self) -> f64 {
        self.interior.len() as f64 * self.cell_volume()
    }

    pub fn multi_index(&self, cell: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        let mut rest = cell;
        for k in 0..self.dim() {
            idx[k] = rest / self.strides[k];
            rest %= self.strides[k];
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Cell center, padded with zeros beyond `dim`.
    pub fn center(&self, cell: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(cell);
        let lo = &self.domain.bounding_box.lo;
        let mut c = [0.0; MAX_DIM];
        for k in 0..self.dim() {
            c[k] = lo[k] + (idx[k] as f64 + 0.5) * self.h;
        }
        c
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        core::ptr::eq(self, other)
            || (self.h == other.h && self.counts == other.counts && self.domain == other.domain)
    }
}

/// Per-cell values in `[0,1]`. Exterior cells hold the datum and cannot be
/// changed through this type once it is built.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

fn check_range(cell: usize, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfRange { cell, value: v })
    }
}

impl ScalarField {
    /// Evaluates `f` at every cell center (interior and exterior).
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: Arc<Grid>, mut f: F) -> Result<Self> {
        let dim = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        for cell in 0..grid.len() {
            let v = f(&grid.center(cell)[..dim]);
            check_range(cell, v)?;
            values.push(v);
        }
        Ok(ScalarField { grid, values })
    }

    /// All cell values, in cell order.
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidDomain(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        for (cell, &v) in values.iter().enumerate() {
            check_range(cell, v)?;
        }
        Ok(ScalarField { grid, values })
    }

    /// Copies the exterior of `datum` and fills interior cells with `f(cell, center)`.
    pub fn with_datum<F: FnMut(usize, &[f64]) -> f64>(datum: &ScalarField, mut f: F) -> Result<Self> {
        let mut out = datum.clone();
        let dim = out.grid.dim();
        for &cell in datum.grid.interior_cells() {
            let v = f(cell, &datum.grid.center(cell)[..dim]);
            check_range(cell, v)?;
            out.values[cell] = v;
        }
        Ok(out)
    }

    pub fn constant_interior(datum: &ScalarField, value: f64) -> Result<Self> {
        Self::with_datum(datum, |_, _| value)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    /// Sets an interior cell; exterior cells are frozen.
    pub fn set(&mut self, cell: usize, value: f64) -> Result<()> {
        if self.grid.tag(cell) == CellTag::Exterior {
            return Err(Error::FrozenCell(cell));
        }
        check_range(cell, value)?;
        self.values[cell] = value;
        Ok(())
    }

    /// Applies `f` to every interior value.
    pub fn map_interior<F: FnMut(usize, f64) -> f64>(&mut self, mut f: F) -> Result<()> {
        let grid = self.grid.clone();
        for &cell in grid.interior_cells() {
            let v = f(cell, self.values[cell]);
            check_range(cell, v)?;
            self.values[cell] = v;
        }
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// `1 − u`, including the exterior datum.
    pub fn complement(&self) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// First exterior cell where the two fields differ, if any.
    pub fn exterior_mismatch(&self, other: &ScalarField) -> Result<Option<usize>> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok((0..self.values.len()).find(|&c| {
            self.grid.tag(c) == CellTag::Exterior && self.values[c].to_bits() != other.values[c].to_bits()
        }))
    }

    /// `h^d Σ |u − v|`.
    pub fn l1_distance(&self, other: &ScalarField) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(s * self.grid.cell_volume())
    }
}

/// `1` where `center · n > offset`, else `0` (ties go to zero).
pub fn indicator_halfspace(grid: &Arc<Grid>, normal: &[f64], offset: f64) -> Result<ScalarField> {
    if normal.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: normal.len(),
        });
    }
    let len = math::norm(normal);
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::NonUnitNormal(len));
    }
    ScalarField::from_fn(grid.clone(), |c| {
        if math::dot(c, normal) > offset {
            1.0
        } else {
            0.0
        }
    })
}

/// Cellwise indicator of `u > t`.
pub fn superlevel(u: &ScalarField, t: f64) -> ScalarField {
    ScalarField {
        grid: u.grid.clone(),
        values: u.values.iter().map(|&v| if v > t { 1.0 } else { 0.0 }).collect(),
    }
}

/// `h^d · #{cells where a ≠ b}` for binary fields.
pub fn symdiff_measure(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if !a.is_binary() || !b.is_binary() {
        return Err(Error::NotBinary);
    }
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch);
    }
    let count = a.values.iter().zip(&b.values).filter(|(x, y)| x != y).count();
    Ok(count as f64 * a.grid.cell_volume())
}

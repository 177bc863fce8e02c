use crate::error::{Error, Result};
use crate::fem::StructuredGrid;

/// Unweighted neighbourhood mean: every element within `radius` (center to
/// center, the element itself included) contributes with equal weight.
#[derive(Clone, Debug)]
pub struct SensitivityFilter {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl SensitivityFilter {
    pub fn new(grid: &StructuredGrid, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidFilter(format!("radius must be positive, got {radius}")));
        }
        let r = radius / grid.elem_size();
        // relative slack so radii that hit a center distance exactly include it
        let r2 = r * r * (1.0 + 1e-12);
        let reach = r.floor() as isize;
        let (nelx, nely) = (grid.nelx() as isize, grid.nely() as isize);
        let mut offsets = Vec::with_capacity(grid.element_count() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for e in 0..grid.element_count() {
            let (ex, ey) = grid.element_position(e);
            let (ex, ey) = (ex as isize, ey as isize);
            for jx in (ex - reach).max(0)..=(ex + reach).min(nelx - 1) {
                for jy in (ey - reach).max(0)..=(ey + reach).min(nely - 1) {
                    let (dx, dy) = ((jx - ex) as f64, (jy - ey) as f64);
                    if dx * dx + dy * dy <= r2 {
                        neighbors.push(grid.element_index(jx as usize, jy as usize));
                    }
                }
            }
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn element_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighborhood(&self, e: usize) -> &[usize] {
        &self.neighbors[self.offsets[e]..self.offsets[e + 1]]
    }

    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("filtered field", self.element_count(), field.len())?;
        Ok((0..self.element_count())
            .map(|e| {
                let hood = self.neighborhood(e);
                hood.iter().map(|&j| field[j]).sum::<f64>() / hood.len() as f64
            })
            .collect())
    }
}

/// One-shot form of [`SensitivityFilter::apply`].
pub fn sensitivity_filter(field: &[f64], grid: &StructuredGrid, radius: f64) -> Result<Vec<f64>> {
    SensitivityFilter::new(grid, radius)?.apply(field)
}

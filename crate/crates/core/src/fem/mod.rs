//! Structured four-node plane-stress finite elements.
//!
//! Numbering follows the column-major convention of compact educational
//! topology codes: elements and nodes are counted down each column starting at
//! the top-left corner, node `(i, j)` (column `i`, row `j` from the top) has
//! index `j + i * (nely + 1)` and owns dofs `2 * node` (x) and `2 * node + 1`
//! (y, positive upward). Element `(ex, ey)` has index `ey + ex * nely`.

mod element;
mod model;

pub use element::{unit_element_stiffness, ElementMatrix};
pub use model::{
    assemble, compliance, element_energies, BoundaryConditions, FeModel, SymmetricMatrix,
};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredGrid {
    nelx: usize,
    nely: usize,
    elem_size: f64,
}

impl StructuredGrid {
    pub fn new(nelx: usize, nely: usize, elem_size: f64) -> Result<Self> {
        if nelx == 0 || nely == 0 {
            return Err(Error::InvalidModel(format!(
                "grid needs at least one element per direction, got {nelx}x{nely}"
            )));
        }
        if !(elem_size > 0.0 && elem_size.is_finite()) {
            return Err(Error::InvalidModel(format!("element size must be positive, got {elem_size}")));
        }
        Ok(Self {
            nelx,
            nely,
            elem_size,
        })
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn elem_size(&self) -> f64 {
        self.elem_size
    }

    pub fn element_count(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn node_count(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    /// Element index from column `ex` and row `ey` (row 0 at the top).
    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey + ex * self.nely
    }

    /// `(column, row)` of an element, row 0 at the top.
    pub fn element_position(&self, e: usize) -> (usize, usize) {
        (e / self.nely, e % self.nely)
    }

    /// Node index from column `i` and row `j` (row 0 at the top).
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j + i * (self.nely + 1)
    }

    /// Node coordinates with the origin at the bottom-left corner, y upward.
    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let i = node / (self.nely + 1);
        let j = node % (self.nely + 1);
        (
            i as f64 * self.elem_size,
            (self.nely - j) as f64 * self.elem_size,
        )
    }

    /// Element center with the origin at the bottom-left corner, y upward.
    pub fn element_center(&self, e: usize) -> (f64, f64) {
        let (ex, ey) = self.element_position(e);
        (
            (ex as f64 + 0.5) * self.elem_size,
            ((self.nely - ey) as f64 - 0.5) * self.elem_size,
        )
    }

    /// Global dofs of an element, counter-clockwise from the lower-left node,
    /// matching the local ordering of [`unit_element_stiffness`].
    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let (ex, ey) = self.element_position(e);
        let n1 = (self.nely + 1) * ex + ey;
        let n2 = (self.nely + 1) * (ex + 1) + ey;
        [
            2 * n1 + 2,
            2 * n1 + 3,
            2 * n2 + 2,
            2 * n2 + 3,
            2 * n2,
            2 * n2 + 1,
            2 * n1,
            2 * n1 + 1,
        ]
    }
}

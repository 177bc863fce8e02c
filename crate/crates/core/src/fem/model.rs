use std::collections::BTreeMap;

use super::{ElementMatrix, StructuredGrid};
use crate::error::{Error, Result};
use crate::linalg::{self, SpdPattern};

/// Dirichlet constraints and nodal point loads.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConditions {
    /// Sorted, unique `(dof, prescribed value)` pairs.
    fixed: Vec<(usize, f64)>,
    loads: Vec<(usize, f64)>,
}

impl BoundaryConditions {
    /// Homogeneous constraints on `fixed_dofs` with the given point loads.
    pub fn new(fixed_dofs: &[usize], loads: Vec<(usize, f64)>) -> Result<Self> {
        Self::with_prescribed(fixed_dofs.iter().map(|&d| (d, 0.0)).collect(), loads)
    }

    /// Constraints with prescribed (possibly nonzero) displacement values.
    pub fn with_prescribed(fixed: Vec<(usize, f64)>, loads: Vec<(usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (dof, value) in fixed {
            if let Some(prev) = map.insert(dof, value) {
                if prev != value {
                    return Err(Error::InvalidModel(format!(
                        "dof {dof} prescribed twice with different values"
                    )));
                }
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidModel("no fixed dofs: rigid-body modes remain".into()));
        }
        if let Some((dof, _)) = loads.iter().find(|(d, _)| map.contains_key(d)) {
            return Err(Error::InvalidModel(format!("load applied to fixed dof {dof}")));
        }
        Ok(Self {
            fixed: map.into_iter().collect(),
            loads,
        })
    }

    pub fn fixed_dofs(&self) -> impl Iterator<Item = usize> + '_ {
        self.fixed.iter().map(|&(d, _)| d)
    }

    pub fn fixed_count(&self) -> usize {
        self.fixed.len()
    }

    pub fn prescribed(&self) -> &[(usize, f64)] {
        &self.fixed
    }

    pub fn loads(&self) -> &[(usize, f64)] {
        &self.loads
    }

    /// Dense global force vector.
    pub fn force_vector(&self, dof_count: usize) -> Vec<f64> {
        let mut f = vec![0.0; dof_count];
        for &(dof, value) in &self.loads {
            f[dof] += value;
        }
        f
    }
}

/// Assembled symmetric matrix, lower triangle stored as summed coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    lower: BTreeMap<(usize, usize), f64>,
}

impl SymmetricMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i >= j { (i, j) } else { (j, i) };
        self.lower.get(&key).copied().unwrap_or(0.0)
    }

    pub fn nonzero_pattern(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lower.keys().copied()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.dim]; self.dim];
        for (&(i, j), &v) in &self.lower {
            dense[i][j] = v;
            dense[j][i] = v;
        }
        dense
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for (&(i, j), &v) in &self.lower {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }
}

fn check_moduli(grid: &StructuredGrid, moduli: &[f64]) -> Result<()> {
    Error::check_len("element moduli", grid.element_count(), moduli.len())?;
    if let Some((e, v)) = moduli.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidModel(format!(
            "element {e} has non-positive modulus {v}"
        )));
    }
    Ok(())
}

/// `K = sum_e E_e * scatter(k0)` over all dofs, before constraints.
pub fn assemble(
    grid: &StructuredGrid,
    moduli: &[f64],
    k0: &ElementMatrix,
) -> Result<SymmetricMatrix> {
    check_moduli(grid, moduli)?;
    let mut lower = BTreeMap::new();
    for (e, &modulus) in moduli.iter().enumerate() {
        let dofs = grid.element_dofs(e);
        for a in 0..8 {
            for b in 0..8 {
                if dofs[a] >= dofs[b] {
                    *lower.entry((dofs[a], dofs[b])).or_insert(0.0) += modulus * k0[a][b];
                }
            }
        }
    }
    Ok(SymmetricMatrix {
        dim: grid.dof_count(),
        lower,
    })
}

/// `c = F^T U`.
pub fn compliance(u: &[f64], f: &[f64]) -> f64 {
    linalg::dot(u, f)
}

/// Per-element `q_e = u_e^T k0 u_e`, so that `U^T K U = sum_e E_e q_e`.
pub fn element_energies(u: &[f64], grid: &StructuredGrid, k0: &ElementMatrix) -> Vec<f64> {
    (0..grid.element_count())
        .map(|e| {
            let dofs = grid.element_dofs(e);
            let ue: [f64; 8] = dofs.map(|d| u[d]);
            let mut q = 0.0;
            for a in 0..8 {
                let row: f64 = (0..8).map(|b| k0[a][b] * ue[b]).sum();
                q += ue[a] * row;
            }
            q
        })
        .collect()
}

/// Grid, constraints and the reduced sparsity pattern with its symbolic
/// factorization. Solving only refactorizes numerically.
pub struct FeModel {
    grid: StructuredGrid,
    bcs: BoundaryConditions,
    k0: ElementMatrix,
    /// Reduced index of every dof, `None` for constrained ones.
    free_index: Vec<Option<usize>>,
    pattern: SpdPattern,
    /// For each element, local `(a, b)` pairs in pattern entry order.
    scatter: Vec<(u8, u8)>,
    scatter_offsets: Vec<usize>,
}

/// Displacements with the relative residual reached on the free dofs.
#[derive(Clone, Debug)]
pub struct Solution {
    pub displacement: Vec<f64>,
    pub relative_residual: f64,
    pub backward_error: f64,
}

pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Solves that miss [`RESIDUAL_TOLERANCE`] are still accepted when refinement
/// has reached this normwise backward error, i.e. when the displacements are
/// so large that the residual bound is below double-precision resolution.
pub const BACKWARD_ERROR_TOLERANCE: f64 = 1e-14;

impl FeModel {
    pub fn new(grid: StructuredGrid, bcs: BoundaryConditions, k0: ElementMatrix) -> Result<Self> {
        let ndof = grid.dof_count();
        if let Some(d) = bcs
            .fixed_dofs()
            .chain(bcs.loads().iter().map(|&(d, _)| d))
            .find(|&d| d >= ndof)
        {
            return Err(Error::InvalidModel(format!("dof {d} outside grid with {ndof} dofs")));
        }
        let mut free_index = vec![None; ndof];
        let mut fixed = vec![false; ndof];
        for d in bcs.fixed_dofs() {
            fixed[d] = true;
        }
        let mut next = 0;
        for (d, slot) in free_index.iter_mut().enumerate() {
            if !fixed[d] {
                *slot = Some(next);
                next += 1;
            }
        }
        let nfree = next;

        let mut entries = Vec::with_capacity(grid.element_count() * 36);
        let mut scatter = Vec::with_capacity(grid.element_count() * 36);
        let mut scatter_offsets = Vec::with_capacity(grid.element_count() + 1);
        scatter_offsets.push(0);
        for e in 0..grid.element_count() {
            let dofs = grid.element_dofs(e);
            for a in 0..8 {
                for b in 0..8 {
                    if let (Some(fa), Some(fb)) = (free_index[dofs[a]], free_index[dofs[b]]) {
                        if fa >= fb {
                            entries.push((fa, fb));
                            scatter.push((a as u8, b as u8));
                        }
                    }
                }
            }
            scatter_offsets.push(scatter.len());
        }
        let pattern = SpdPattern::new(nfree, entries)?;
        Ok(Self {
            grid,
            bcs,
            k0,
            free_index,
            pattern,
            scatter,
            scatter_offsets,
        })
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bcs
    }

    pub fn unit_stiffness(&self) -> &ElementMatrix {
        &self.k0
    }

    pub fn free_dof_count(&self) -> usize {
        self.pattern.dim()
    }

    pub fn force_vector(&self) -> Vec<f64> {
        self.bcs.force_vector(self.grid.dof_count())
    }

    /// Solves `K(E) U = F` by eliminating constrained dofs. Constrained dofs
    /// take their prescribed values exactly.
    pub fn solve(&self, moduli: &[f64]) -> Result<Solution> {
        check_moduli(&self.grid, moduli)?;
        let ndof = self.grid.dof_count();
        let mut values = Vec::with_capacity(self.pattern.entry_count());
        for (e, &modulus) in moduli.iter().enumerate() {
            for &(a, b) in &self.scatter[self.scatter_offsets[e]..self.scatter_offsets[e + 1]] {
                values.push(modulus * self.k0[a as usize][b as usize]);
            }
        }

        let mut u = vec![0.0; ndof];
        for &(d, v) in self.bcs.prescribed() {
            u[d] = v;
        }
        let f = self.force_vector();
        let mut rhs = vec![0.0; self.pattern.dim()];
        for (d, slot) in self.free_index.iter().enumerate() {
            if let Some(i) = slot {
                rhs[*i] = f[d];
            }
        }
        if self.bcs.prescribed().iter().any(|&(_, v)| v != 0.0) {
            for (e, &modulus) in moduli.iter().enumerate() {
                let dofs = self.grid.element_dofs(e);
                for a in 0..8 {
                    let Some(fa) = self.free_index[dofs[a]] else { continue };
                    for b in 0..8 {
                        if self.free_index[dofs[b]].is_none() {
                            rhs[fa] -= modulus * self.k0[a][b] * u[dofs[b]];
                        }
                    }
                }
            }
        }

        if rhs.iter().all(|&v| v == 0.0) {
            return Ok(Solution {
                displacement: u,
                relative_residual: 0.0,
                backward_error: 0.0,
            });
        }
        let factor = self.pattern.factorize(&values)?;
        let solved = self.pattern.solve_refined(&factor, &rhs);
        let (x, rel) = (solved.x, solved.relative_residual);
        if !(rel <= RESIDUAL_TOLERANCE || solved.backward_error <= BACKWARD_ERROR_TOLERANCE) {
            return Err(Error::Solver(format!(
                "relative residual {rel:.3e} exceeds {RESIDUAL_TOLERANCE:.0e} with backward error {:.3e} (near-singular stiffness)",
                solved.backward_error
            )));
        }
        for (d, slot) in self.free_index.iter().enumerate() {
            if let Some(i) = slot {
                u[d] = x[*i];
            }
        }
        Ok(Solution {
            displacement: u,
            relative_residual: rel,
            backward_error: solved.backward_error,
        })
    }

    pub fn element_energies(&self, u: &[f64]) -> Vec<f64> {
        element_energies(u, &self.grid, &self.k0)
    }
}

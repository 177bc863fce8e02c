use crate::error::{Error, Result};
use crate::fem::StructuredGrid;
use crate::linalg::{SpdFactor, SpdPattern};

/// Helmholtz density filter `(-L^2 lap + I) g~ = g` with homogeneous Neumann
/// boundaries, discretized on element centers.
///
/// The operator is `A = L^2 K + M`, where `K` is the two-point flux Laplacian
/// between edge-sharing elements (unit coefficient on a square grid) and `M`
/// the lumped element-area mass. Filtering solves `A g~ = M g`; the factor is
/// computed once at construction.
pub struct HelmholtzFilter {
    elements: usize,
    mass: f64,
    values: Vec<f64>,
    pattern: SpdPattern,
    factor: SpdFactor,
}

impl HelmholtzFilter {
    pub fn new(grid: &StructuredGrid, length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidFilter(format!("length scale must be positive, got {length}")));
        }
        let ne = grid.element_count();
        let mass = grid.elem_size() * grid.elem_size();
        let coupling = length * length;
        let mut entries = Vec::with_capacity(3 * ne);
        let mut values = Vec::with_capacity(3 * ne);
        for e in 0..ne {
            entries.push((e, e));
            values.push(mass);
        }
        for e in 0..ne {
            let (ex, ey) = grid.element_position(e);
            let mut link = |f: usize| {
                let (hi, lo) = if e > f { (e, f) } else { (f, e) };
                entries.push((hi, lo));
                values.push(-coupling);
                entries.push((e, e));
                values.push(coupling);
                entries.push((f, f));
                values.push(coupling);
            };
            if ex + 1 < grid.nelx() {
                link(grid.element_index(ex + 1, ey));
            }
            if ey + 1 < grid.nely() {
                link(grid.element_index(ex, ey + 1));
            }
        }
        let pattern = SpdPattern::new(ne, entries)?;
        let factor = pattern
            .factorize(&values)
            .map_err(|e| Error::InvalidFilter(format!("Helmholtz operator: {e}")))?;
        Ok(Self {
            elements: ne,
            mass,
            values,
            pattern,
            factor,
        })
    }

    pub fn element_count(&self) -> usize {
        self.elements
    }

    /// Lumped mass of one element (its area).
    pub fn element_mass(&self) -> f64 {
        self.mass
    }

    /// Filtered field `A^{-1} M g`.
    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("Helmholtz input", self.elements, field.len())?;
        let mut x: Vec<f64> = field.iter().map(|v| v * self.mass).collect();
        self.pattern.solve_in_place(&self.factor, &mut x);
        Ok(x)
    }

    /// Pulls a sensitivity with respect to the filtered field back to the
    /// raw field: `M A^{-1} s` (transpose of [`Self::apply`]).
    pub fn chain(&self, sensitivity: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("Helmholtz sensitivity", self.elements, sensitivity.len())?;
        let mut x = sensitivity.to_vec();
        self.pattern.solve_in_place(&self.factor, &mut x);
        x.iter_mut().for_each(|v| *v *= self.mass);
        Ok(x)
    }

    /// `A x`, exposed for operator checks.
    pub fn operator_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("Helmholtz operand", self.elements, x.len())?;
        let mut y = vec![0.0; self.elements];
        self.pattern.symmetric_matvec(&self.values, x, &mut y);
        Ok(y)
    }
}

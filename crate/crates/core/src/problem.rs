//! Benchmark geometries: mesh, supports and the point load.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{unit_element_stiffness, BoundaryConditions, FeModel, StructuredGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Geometry {
    /// Left edge clamped, downward load at the bottom-right corner.
    Cantilever,
    /// Symmetric half of an MBB beam: roller symmetry on the left edge,
    /// simple support at the bottom-right corner, downward load at the
    /// top-left corner.
    MbbHalf,
    /// Left edge clamped, downward load at the middle of the right edge.
    /// Symmetric about the horizontal midline when `nely` is even.
    CantileverMidLoad,
}

impl Geometry {
    pub fn tag(self) -> &'static str {
        match self {
            Geometry::Cantilever => "cantilever",
            Geometry::MbbHalf => "mbb_half",
            Geometry::CantileverMidLoad => "cantilever_mid",
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cantilever" => Ok(Geometry::Cantilever),
            "mbb_half" | "mbb" => Ok(Geometry::MbbHalf),
            "cantilever_mid" => Ok(Geometry::CantileverMidLoad),
            other => Err(format!(
                "unknown problem `{other}` (expected cantilever, mbb_half or cantilever_mid)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemSpec {
    pub geometry: Geometry,
    pub width: f64,
    pub height: f64,
    pub nelx: usize,
    pub nely: usize,
    /// Magnitude of the point load; it always acts in `-y`.
    pub load: f64,
    pub poisson: f64,
}

impl ProblemSpec {
    /// 200 x 100 elements on a 2 x 1 domain, unit-thickness, nu = 0.3.
    pub fn benchmark(geometry: Geometry, load: f64) -> Self {
        Self {
            geometry,
            width: 2.0,
            height: 1.0,
            nelx: 200,
            nely: 100,
            load,
            poisson: 0.3,
        }
    }

    pub fn element_size(&self) -> f64 {
        self.width / self.nelx as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.nelx == 0 || self.nely == 0 {
            return Err(Error::InvalidModel("mesh needs at least one element per side".into()));
        }
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "domain {} x {} must have positive finite sides",
                self.width, self.height
            )));
        }
        let (hx, hy) = (self.width / self.nelx as f64, self.height / self.nely as f64);
        if ((hx - hy) / hx).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "elements must be square: {hx} x {hy}"
            )));
        }
        if !(self.load.is_finite() && self.load != 0.0) {
            return Err(Error::InvalidModel(format!("load must be finite and nonzero, got {}", self.load)));
        }
        if self.geometry == Geometry::CantileverMidLoad && self.nely % 2 != 0 {
            return Err(Error::InvalidModel("mid-edge load needs an even nely".into()));
        }
        Ok(())
    }
}

/// Grid plus boundary conditions for a spec.
pub fn boundary_conditions(spec: &ProblemSpec) -> Result<(StructuredGrid, BoundaryConditions)> {
    spec.validate()?;
    let grid = StructuredGrid::new(spec.nelx, spec.nely, spec.element_size())?;
    let (nelx, nely) = (spec.nelx, spec.nely);
    let left: Vec<usize> = (0..=nely).map(|j| grid.node_index(0, j)).collect();
    let bottom_right = grid.node_index(nelx, nely);
    let (fixed, load_dof): (Vec<usize>, usize) = match spec.geometry {
        Geometry::Cantilever => (
            left.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect(),
            2 * bottom_right + 1,
        ),
        Geometry::CantileverMidLoad => (
            left.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect(),
            2 * grid.node_index(nelx, nely / 2) + 1,
        ),
        Geometry::MbbHalf => {
            let mut fixed: Vec<usize> = left.iter().map(|&n| 2 * n).collect();
            fixed.push(2 * bottom_right + 1);
            (fixed, 2 * grid.node_index(0, 0) + 1)
        }
    };
    let bcs = BoundaryConditions::new(&fixed, vec![(load_dof, -spec.load)])?;
    Ok((grid, bcs))
}

/// Ready-to-solve finite element model for a spec.
pub fn build_problem(spec: &ProblemSpec) -> Result<FeModel> {
    let (grid, bcs) = boundary_conditions(spec)?;
    FeModel::new(grid, bcs, unit_element_stiffness(spec.poisson)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantilever_supports_and_load() {
        let (grid, bcs) = boundary_conditions(&ProblemSpec::benchmark(Geometry::Cantilever, 0.1)).unwrap();
        assert_eq!(bcs.fixed_count(), 202);
        assert_eq!(bcs.loads(), &[(grid.dof_count() - 1, -0.1)]);
        let (x, y) = grid.node_coords(grid.node_count() - 1);
        assert!((x - 2.0).abs() < 1e-12 && y.abs() < 1e-12);
    }

    #[test]
    fn mbb_supports_and_load() {
        let (grid, bcs) = boundary_conditions(&ProblemSpec::benchmark(Geometry::MbbHalf, 1.0)).unwrap();
        assert_eq!(bcs.fixed_count(), 102);
        let fixed: Vec<usize> = bcs.fixed_dofs().collect();
        assert_eq!(fixed.iter().filter(|&&d| d % 2 == 0).count(), 101);
        assert!(fixed.contains(&(grid.dof_count() - 1)));
        assert_eq!(bcs.loads(), &[(1, -1.0)]);
        let (x, y) = grid.node_coords(0);
        assert!(x.abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn load_is_never_on_a_fixed_dof() {
        for geometry in [Geometry::Cantilever, Geometry::MbbHalf, Geometry::CantileverMidLoad] {
            let spec = ProblemSpec { nelx: 8, nely: 4, width: 2.0, height: 1.0, ..ProblemSpec::benchmark(geometry, 1.0) };
            let (_, bcs) = boundary_conditions(&spec).unwrap();
            let fixed: Vec<usize> = bcs.fixed_dofs().collect();
            assert!(bcs.loads().iter().all(|(d, _)| !fixed.contains(d)));
        }
    }

    #[test]
    fn mid_load_sits_on_the_midline() {
        let spec = ProblemSpec { nelx: 6, nely: 4, width: 3.0, height: 2.0, ..ProblemSpec::benchmark(Geometry::CantileverMidLoad, 1.0) };
        let (grid, bcs) = boundary_conditions(&spec).unwrap();
        let node = bcs.loads()[0].0 / 2;
        assert_eq!(grid.node_coords(node), (3.0, 1.0));
    }

    #[test]
    fn rejects_bad_specs() {
        let base = ProblemSpec::benchmark(Geometry::Cantilever, 1.0);
        assert!(ProblemSpec { nelx: 0, ..base }.validate().is_err());
        assert!(ProblemSpec { height: 2.0, ..base }.validate().is_err());
        assert!(ProblemSpec { load: 0.0, ..base }.validate().is_err());
        assert!(ProblemSpec { geometry: Geometry::CantileverMidLoad, nely: 5, height: 0.05, nelx: 40, width: 0.4, ..base }
            .validate()
            .is_err());
        assert!("mbb".parse::<Geometry>().is_ok());
        assert!("bridge".parse::<Geometry>().is_err());
    }
}

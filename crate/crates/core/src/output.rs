//! Run artifacts: per-material PGM images, a combined PPM map, the history
//! CSV and an optional legacy VTK file.
//!
//! Fields are material-major occupancy values on the column-major element
//! numbering of [`StructuredGrid`]. Images put row 0 at the top of the domain.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::driver::{DesignField, OptimizationHistory};
use crate::error::{Error, Result};
use crate::fem::StructuredGrid;
use crate::interpolation::Scheme;

/// Fill colour of each material in the combined map; cycles past the end.
pub const PALETTE: [[u8; 3]; 8] = [
    [240, 200, 0],
    [0, 180, 200],
    [210, 30, 30],
    [40, 80, 200],
    [40, 160, 60],
    [170, 60, 170],
    [240, 130, 20],
    [90, 90, 90],
];
pub const BACKGROUND: [u8; 3] = [255, 255, 255];

fn to_gray(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Binary greyscale image, one pixel per element, `255 * value` rounded.
pub fn pgm_bytes(field: &[f64], grid: &StructuredGrid) -> Result<Vec<u8>> {
    let (nelx, nely) = (grid.nelx(), grid.nely());
    Error::check_len("image field", nelx * nely, field.len())?;
    let mut out = format!("P5\n{nelx} {nely}\n255\n").into_bytes();
    for ey in 0..nely {
        out.extend((0..nelx).map(|ex| to_gray(field[grid.element_index(ex, ey)])));
    }
    Ok(out)
}

/// Colour map of the dominant material: an element takes the colour of its
/// largest occupancy when that exceeds 1/2, otherwise the background.
pub fn combined_ppm_bytes(occupancy: &[f64], materials: usize, grid: &StructuredGrid) -> Result<Vec<u8>> {
    let (nelx, nely) = (grid.nelx(), grid.nely());
    let ne = nelx * nely;
    Error::check_len("occupancy field", materials * ne, occupancy.len())?;
    let mut out = format!("P6\n{nelx} {nely}\n255\n").into_bytes();
    for ey in 0..nely {
        for ex in 0..nelx {
            let e = grid.element_index(ex, ey);
            let best = (0..materials)
                .map(|i| (i, occupancy[i * ne + e]))
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, b)) if b >= v => acc,
                    _ => Some((i, v)),
                });
            let rgb = match best {
                Some((i, v)) if v > 0.5 => PALETTE[i % PALETTE.len()],
                _ => BACKGROUND,
            };
            out.extend_from_slice(&rgb);
        }
    }
    Ok(out)
}

/// `iter,compliance,V_1..,grayness_1..,change,beta`; `beta` is empty when
/// no projection is active.
pub fn history_csv(history: &OptimizationHistory, materials: usize) -> String {
    let mut out = String::from("iter,compliance");
    for i in 1..=materials {
        let _ = write!(out, ",V_{i}");
    }
    for i in 1..=materials {
        let _ = write!(out, ",grayness_{i}");
    }
    out.push_str(",change,beta\n");
    for r in &history.records {
        let _ = write!(out, "{},{}", r.iteration, r.compliance);
        for v in r.volumes.iter().chain(&r.grayness) {
            let _ = write!(out, ",{v}");
        }
        let _ = write!(out, ",{},", r.change);
        if let Some(b) = r.beta {
            let _ = write!(out, "{b}");
        }
        out.push('\n');
    }
    out
}

/// Legacy ASCII structured-points file with one cell scalar per material.
pub fn vtk_text(occupancy: &[f64], materials: usize, grid: &StructuredGrid) -> Result<String> {
    let (nelx, nely) = (grid.nelx(), grid.nely());
    let ne = nelx * nely;
    Error::check_len("occupancy field", materials * ne, occupancy.len())?;
    let h = grid.elem_size();
    let mut out = String::new();
    let _ = write!(
        out,
        "# vtk DataFile Version 3.0\nmaterial occupancy\nASCII\nDATASET STRUCTURED_POINTS\n\
         DIMENSIONS {} {} 1\nORIGIN 0 0 0\nSPACING {h} {h} {h}\nCELL_DATA {ne}\n",
        nelx + 1,
        nely + 1
    );
    for i in 0..materials {
        let _ = write!(out, "SCALARS material_{} double 1\nLOOKUP_TABLE default\n", i + 1);
        // VTK walks x fastest with y upward
        for ey in (0..nely).rev() {
            let row: Vec<String> = (0..nelx)
                .map(|ex| occupancy[i * ne + grid.element_index(ex, ey)].to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    Ok(out)
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes every artifact of a finished run into `dir`, creating it if
/// needed, and returns the paths written.
pub fn emit_artifacts(
    dir: &Path,
    history: &OptimizationHistory,
    design: &DesignField,
    scheme: Scheme,
    grid: &StructuredGrid,
    vtk: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = design.material_count();
    let ne = design.element_count();
    let occ = design.occupancy(scheme);
    let mut written = Vec::new();
    for i in 0..m {
        let bytes = pgm_bytes(&occ[i * ne..(i + 1) * ne], grid)?;
        written.push(write(dir.join(format!("material_{}.pgm", i + 1)), &bytes)?);
    }
    written.push(write(dir.join("combined.ppm"), &combined_ppm_bytes(&occ, m, grid)?)?);
    written.push(write(dir.join("history.csv"), history_csv(history, m).as_bytes())?);
    if vtk {
        written.push(write(dir.join("design.vtk"), vtk_text(&occ, m, grid)?.as_bytes())?);
    }
    Ok(written)
}

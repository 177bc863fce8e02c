use crate::error::{Error, Result};

pub type ElementMatrix = [[f64; 8]; 8];

/// Stiffness of a square bilinear plane-stress element with unit Young's
/// modulus and unit thickness. The result does not depend on the edge length.
///
/// Local dofs are `(u, v)` pairs of the corners counter-clockwise from the
/// lower-left one. This is the closed form of full 2x2 Gauss integration.
pub fn unit_element_stiffness(poisson: f64) -> Result<ElementMatrix> {
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::InvalidModel(format!(
            "Poisson ratio must lie in (-1, 0.5), got {poisson}"
        )));
    }
    let nu = poisson;
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    let idx: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = 1.0 / (1.0 - nu * nu);
    let mut ke = [[0.0; 8]; 8];
    for (row, idx_row) in ke.iter_mut().zip(idx.iter()) {
        for (v, &i) in row.iter_mut().zip(idx_row.iter()) {
            *v = scale * k[i];
        }
    }
    Ok(ke)
}

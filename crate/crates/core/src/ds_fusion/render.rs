use std::io::Write;

use super::grid::{GridSpec, OccupancyGrid};
use super::mass::MassAssignment;
use super::FusionError;
use crate::tensor_net::Tensor;

/// Channel-major `[3, H, W]` tensor of (occupied, free, unknown) masses,
/// the red/green/black channels of the usual grid rendering.
pub fn grid_to_tensor(grid: &OccupancyGrid) -> Tensor {
    let n = grid.spec().len();
    let mut data = vec![0.0; 3 * n];
    for (i, c) in grid.cells().iter().enumerate() {
        data[i] = c.m_occ();
        data[n + i] = c.m_free();
        data[2 * n + i] = c.m_unknown();
    }
    Tensor::from_vec(vec![3, grid.height(), grid.width()], data)
        .expect("shape matches data length")
}

/// Inverse of [`grid_to_tensor`].
pub fn tensor_to_grid(tensor: &Tensor, spec: GridSpec) -> Result<OccupancyGrid, FusionError> {
    if tensor.shape() != [3, spec.height, spec.width] {
        return Err(FusionError::BadTensorShape(tensor.shape().to_vec()));
    }
    let n = spec.len();
    let d = tensor.data();
    let cells = (0..n)
        .map(|i| MassAssignment::new(d[n + i], d[i], d[2 * n + i]))
        .collect::<Result<Vec<_>, _>>()?;
    OccupancyGrid::from_cells(spec, cells)
}

/// Binary PPM (P6): red = occupied mass, green = free mass, blue = 0.
/// Rows are written in storage order, row 0 first.
pub fn grid_to_ppm(grid: &OccupancyGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 3 * grid.spec().len());
    write!(out, "P6\n{} {}\n255\n", grid.width(), grid.height()).expect("write to Vec");
    for c in grid.cells() {
        out.push(to_byte(c.m_occ()));
        out.push(to_byte(c.m_free()));
        out.push(0);
    }
    out
}

fn to_byte(m: f64) -> u8 {
    (255.0 * m).round().clamp(0.0, 255.0) as u8
}

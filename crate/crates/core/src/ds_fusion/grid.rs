use serde::{Deserialize, Serialize};

use super::mass::{decay, ds_combine, MassAssignment};
use super::FusionError;

/// Lattice geometry. Cell `(col, row)` covers
/// `[origin_x + col·res, origin_x + (col+1)·res) × [origin_y + row·res, …)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::centered(125, 125, 0.25)
    }
}

impl GridSpec {
    /// A grid whose metric centre is the world origin.
    pub fn centered(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            origin_x: -(width as f64) * resolution / 2.0,
            origin_y: -(height as f64) * resolution / 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.width == 0 || self.height == 0 {
            return Err(FusionError::InvalidSpec(format!(
                "grid must be non-empty, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(FusionError::InvalidSpec(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Continuous cell coordinates of a metric point.
    pub fn to_cell_coords(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.resolution,
            (y - self.origin_y) / self.resolution,
        )
    }

    /// Cell containing a metric point, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (cx, cy) = self.to_cell_coords(x, y);
        let (col, row) = (cx.floor(), cy.floor());
        if col >= 0.0 && row >= 0.0 && (col as usize) < self.width && (row as usize) < self.height
        {
            Some((col as usize, row as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.resolution,
            self.origin_y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    spec: GridSpec,
    cells: Vec<MassAssignment>,
}

impl OccupancyGrid {
    /// An all-vacuous grid.
    pub fn vacuous(spec: GridSpec) -> Result<Self, FusionError> {
        spec.validate()?;
        Ok(Self {
            spec,
            cells: vec![MassAssignment::VACUOUS; spec.len()],
        })
    }

    pub fn from_cells(spec: GridSpec, cells: Vec<MassAssignment>) -> Result<Self, FusionError> {
        spec.validate()?;
        if cells.len() != spec.len() {
            return Err(FusionError::InvalidSpec(format!(
                "expected {} cells, got {}",
                spec.len(),
                cells.len()
            )));
        }
        Ok(Self { spec, cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[MassAssignment] {
        &self.cells
    }

    pub fn get(&self, col: usize, row: usize) -> &MassAssignment {
        &self.cells[self.spec.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, mass: MassAssignment) {
        let idx = self.spec.index(col, row);
        self.cells[idx] = mass;
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }
}

/// Cell-wise `ds_combine(decay(target, decay_factor), evidence)`.
///
/// A cell in total conflict is reset to the vacuous mass.
pub fn fuse(
    target: &OccupancyGrid,
    evidence: &OccupancyGrid,
    decay_factor: f64,
) -> Result<OccupancyGrid, FusionError> {
    if target.spec != evidence.spec {
        return Err(FusionError::SpecMismatch(target.spec, evidence.spec));
    }
    let cells = target
        .cells
        .iter()
        .zip(&evidence.cells)
        .map(|(t, e)| {
            ds_combine(&decay(t, decay_factor), e).unwrap_or(MassAssignment::VACUOUS)
        })
        .collect();
    Ok(OccupancyGrid {
        spec: target.spec,
        cells,
    })
}

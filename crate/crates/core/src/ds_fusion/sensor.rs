use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, OccupancyGrid};
use super::mass::MassAssignment;
use super::FusionError;

pub const DEFAULT_LAMBDA_FREE: f64 = 0.6;
pub const DEFAULT_LAMBDA_OCC: f64 = 0.7;

/// Metric sensor pose; `heading` is kept in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl SensorPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }
}

pub(crate) fn normalize_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// One sweep of range returns.
///
/// Beam `i` of `n` points at `heading − fov/2 + (i + ½)·fov/n` relative to
/// the sensor pose, so beams sit at the centres of `n` equal angular bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub fov: f64,
    pub max_range: f64,
    pub ranges: Vec<f64>,
}

impl LidarScan {
    pub fn n_beams(&self) -> usize {
        self.ranges.len()
    }

    /// Beam direction relative to the sensor heading.
    pub fn beam_angle(&self, i: usize) -> f64 {
        beam_angle(i, self.ranges.len(), self.fov)
    }
}

pub(crate) fn beam_angle(i: usize, n_beams: usize, fov: f64) -> f64 {
    -fov / 2.0 + (i as f64 + 0.5) * fov / n_beams as f64
}

/// Confidence assigned to a single free or occupied observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub lambda_free: f64,
    pub lambda_occ: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            lambda_free: DEFAULT_LAMBDA_FREE,
            lambda_occ: DEFAULT_LAMBDA_OCC,
        }
    }
}

/// Cells crossed by the segment between two points given in continuous
/// cell coordinates, in traversal order, starting with the cell holding the
/// first point and ending with the cell holding the second.
///
/// Grid traversal after Amanatides & Woo: at every step move into whichever
/// neighbour the segment reaches first, so diagonal runs never skip a cell.
pub fn traverse_cells(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<(i64, i64)> {
    let (mut cx, mut cy) = (x0.floor() as i64, y0.floor() as i64);
    let (ex, ey) = (x1.floor() as i64, y1.floor() as i64);
    let (dx, dy) = (x1 - x0, y1 - y0);

    let (step_x, t_delta_x, mut t_max_x) = axis_setup(x0, dx, cx);
    let (step_y, t_delta_y, mut t_max_y) = axis_setup(y0, dy, cy);

    let n = (ex - cx).unsigned_abs() + (ey - cy).unsigned_abs();
    let mut cells = Vec::with_capacity(n as usize + 1);
    cells.push((cx, cy));
    for _ in 0..n {
        // Once an axis has reached its end cell it must not move again.
        let x_done = cx == ex;
        let y_done = cy == ey;
        if !x_done && (y_done || t_max_x < t_max_y) {
            cx += step_x;
            t_max_x += t_delta_x;
        } else {
            cy += step_y;
            t_max_y += t_delta_y;
        }
        cells.push((cx, cy));
    }
    cells
}

fn axis_setup(origin: f64, delta: f64, cell: i64) -> (i64, f64, f64) {
    if delta > 0.0 {
        (1, 1.0 / delta, (cell as f64 + 1.0 - origin) / delta)
    } else if delta < 0.0 {
        (-1, -1.0 / delta, (origin - cell as f64) / -delta)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Label {
    Unknown,
    Free,
    Occupied,
}

/// Converts one scan into per-cell evidence.
///
/// Cells a beam passes through before its return are labelled free, the
/// cell holding the return is labelled occupied, and a beam with no return
/// (range at `max_range`) labels its whole path free. Within one scan an
/// occupied label is never overwritten by a free one. The sensor's own cell
/// is only ever labelled by a return inside it. Free cells receive
/// `(λ_free, 0, 1−λ_free)`, occupied cells `(0, λ_occ, 1−λ_occ)`, all other
/// cells stay vacuous.
pub fn inverse_sensor_model(
    scan: &LidarScan,
    pose: &SensorPose,
    spec: &GridSpec,
    model: &SensorModel,
) -> Result<OccupancyGrid, FusionError> {
    spec.validate()?;
    for (name, v) in [("lambda_free", model.lambda_free), ("lambda_occ", model.lambda_occ)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(FusionError::InvalidParameter(format!(
                "{name} must lie in (0, 1), got {v}"
            )));
        }
    }
    if spec.cell_of(pose.x, pose.y).is_none() {
        return Err(FusionError::PoseOutsideGrid {
            x: pose.x,
            y: pose.y,
        });
    }

    let mut labels = vec![Label::Unknown; spec.len()];
    let (sx, sy) = spec.to_cell_coords(pose.x, pose.y);
    for (i, &raw) in scan.ranges.iter().enumerate() {
        if !(raw.is_finite() && raw >= 0.0) {
            return Err(FusionError::InvalidParameter(format!(
                "beam {i} has invalid range {raw}"
            )));
        }
        let range = raw.min(scan.max_range);
        let has_return = range < scan.max_range;
        let angle = pose.heading + scan.beam_angle(i);
        let (ex, ey) = spec.to_cell_coords(
            pose.x + range * angle.cos(),
            pose.y + range * angle.sin(),
        );
        let path = traverse_cells(sx, sy, ex, ey);
        let last = path.len() - 1;
        for (k, &(col, row)) in path.iter().enumerate() {
            if col < 0 || row < 0 || col as usize >= spec.width || row as usize >= spec.height {
                // The grid is convex: a ray that leaves it never re-enters.
                break;
            }
            let idx = spec.index(col as usize, row as usize);
            if k == last && has_return {
                labels[idx] = Label::Occupied;
            } else if k > 0 && labels[idx] == Label::Unknown {
                labels[idx] = Label::Free;
            }
        }
    }

    let free = MassAssignment::new(model.lambda_free, 0.0, 1.0 - model.lambda_free)?;
    let occ = MassAssignment::new(0.0, model.lambda_occ, 1.0 - model.lambda_occ)?;
    let cells = labels
        .into_iter()
        .map(|l| match l {
            Label::Unknown => MassAssignment::VACUOUS,
            Label::Free => free,
            Label::Occupied => occ,
        })
        .collect();
    OccupancyGrid::from_cells(*spec, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::centered(21, 21, 0.5)
    }

    fn count(grid: &OccupancyGrid) -> (usize, usize) {
        let free = grid.cells().iter().filter(|c| c.m_free() > 0.0).count();
        let occ = grid.cells().iter().filter(|c| c.m_occ() > 0.0).count();
        (free, occ)
    }

    #[test]
    fn heading_normalisation() {
        assert!((SensorPose::new(0.0, 0.0, 3.0 * PI).heading - PI).abs() < 1e-12);
        assert!((SensorPose::new(0.0, 0.0, -PI).heading - PI).abs() < 1e-12);
        assert!((SensorPose::new(0.0, 0.0, -0.5).heading + 0.5).abs() < 1e-12);
    }

    #[test]
    fn traversal_is_connected_and_hits_endpoints() {
        let path = traverse_cells(0.5, 0.5, 7.3, 3.9);
        assert_eq!(path[0], (0, 0));
        assert_eq!(*path.last().unwrap(), (7, 3));
        for w in path.windows(2) {
            let step = (w[1].0 - w[0].0).abs() + (w[1].1 - w[0].1).abs();
            assert_eq!(step, 1);
        }
        let back = traverse_cells(7.3, 3.9, 0.5, 0.5);
        assert_eq!(back[0], (7, 3));
        assert_eq!(*back.last().unwrap(), (0, 0));
    }

    #[test]
    fn empty_scan_is_vacuous() {
        let scan = LidarScan {
            fov: PI,
            max_range: 10.0,
            ranges: vec![],
        };
        let g = inverse_sensor_model(&scan, &SensorPose::new(0.0, 0.0, 0.0), &spec(), &SensorModel::default())
            .unwrap();
        assert!(g.cells().iter().all(|c| c.is_vacuous()));
    }

    #[test]
    fn single_beam_one_cell_ahead() {
        let scan = LidarScan {
            fov: 0.0,
            max_range: 10.0,
            ranges: vec![0.5],
        };
        // Sensor at the centre of cell (10, 10).
        let g = inverse_sensor_model(&scan, &SensorPose::new(0.0, 0.0, 0.0), &spec(), &SensorModel::default())
            .unwrap();
        assert_eq!(count(&g), (0, 1));
        let hit = g.get(11, 10);
        assert_eq!((hit.m_free(), hit.m_occ()), (0.0, 0.7));
        assert!((hit.m_unknown() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn no_return_marks_path_free() {
        let scan = LidarScan {
            fov: 0.0,
            max_range: 2.0,
            ranges: vec![2.0],
        };
        let g = inverse_sensor_model(&scan, &SensorPose::new(0.0, 0.0, 0.0), &spec(), &SensorModel::default())
            .unwrap();
        // From the centre of cell 10 to x = 2.0 m, i.e. cells 11..=14.
        assert_eq!(count(&g), (4, 0));
        for col in 11..=14 {
            assert_eq!(g.get(col, 10).m_free(), 0.6);
        }
    }

    #[test]
    fn beam_leaving_grid_is_clipped() {
        let scan = LidarScan {
            fov: 0.0,
            max_range: 100.0,
            ranges: vec![50.0],
        };
        let g = inverse_sensor_model(&scan, &SensorPose::new(0.0, 0.0, 0.0), &spec(), &SensorModel::default())
            .unwrap();
        assert_eq!(count(&g), (10, 0));
    }

    #[test]
    fn pose_outside_grid() {
        let scan = LidarScan {
            fov: 0.0,
            max_range: 10.0,
            ranges: vec![1.0],
        };
        let err = inverse_sensor_model(&scan, &SensorPose::new(20.0, 0.0, 0.0), &spec(), &SensorModel::default());
        assert!(matches!(err, Err(FusionError::PoseOutsideGrid { .. })));
    }

    #[test]
    fn invalid_lambda() {
        let scan = LidarScan {
            fov: 0.0,
            max_range: 10.0,
            ranges: vec![1.0],
        };
        let model = SensorModel {
            lambda_free: 1.0,
            lambda_occ: 0.7,
        };
        assert!(inverse_sensor_model(&scan, &SensorPose::new(0.0, 0.0, 0.0), &spec(), &model).is_err());
    }
}

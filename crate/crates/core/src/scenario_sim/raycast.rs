use super::geometry::{Aabb, Segment};
use super::scene::Scene;
use crate::ds_fusion::sensor::beam_angle;
use crate::ds_fusion::{LidarScan, SensorPose};

/// Hits closer than this to the ray origin are ignored.
const MIN_HIT: f64 = 1e-12;

/// Distance along a unit ray to a segment, if they intersect ahead of the
/// origin. Parallel (including collinear) configurations count as misses.
pub fn ray_segment(origin: (f64, f64), dir: (f64, f64), seg: &Segment) -> Option<f64> {
    let e = (seg.b.0 - seg.a.0, seg.b.1 - seg.a.1);
    let denom = dir.0 * e.1 - dir.1 * e.0;
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = (seg.a.0 - origin.0, seg.a.1 - origin.1);
    let t = (w.0 * e.1 - w.1 * e.0) / denom;
    let s = (w.0 * dir.1 - w.1 * dir.0) / denom;
    (t > MIN_HIT && (0.0..=1.0).contains(&s)).then_some(t)
}

/// Distance along a unit ray to the boundary of a box (slab method). From
/// inside the box this is the exit distance.
pub fn ray_aabb(origin: (f64, f64), dir: (f64, f64), b: &Aabb) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, lo, hi) in [
        (origin.0, dir.0, b.min.0, b.max.0),
        (origin.1, dir.1, b.min.1, b.max.1),
    ] {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (t0, t1) = ((lo - o) / d, (hi - o) / d);
            t_near = t_near.max(t0.min(t1));
            t_far = t_far.min(t0.max(t1));
        }
    }
    if t_near > t_far {
        return None;
    }
    if t_near > MIN_HIT {
        Some(t_near)
    } else if t_far > MIN_HIT {
        Some(t_far)
    } else {
        None
    }
}

/// Simulated scan: each beam returns the nearest intersection with any
/// scene primitive, or `max_range` when nothing is hit within range.
pub fn cast_rays(
    scene: &Scene,
    pose: &SensorPose,
    n_beams: usize,
    fov: f64,
    max_range: f64,
) -> LidarScan {
    let origin = (pose.x, pose.y);
    let ranges = (0..n_beams)
        .map(|i| {
            let a = pose.heading + beam_angle(i, n_beams, fov);
            let dir = (a.cos(), a.sin());
            let seg_hits = scene.segments.iter().filter_map(|s| ray_segment(origin, dir, s));
            let box_hits = scene.boxes.iter().filter_map(|b| ray_aabb(origin, dir, b));
            seg_hits.chain(box_hits).fold(max_range, f64::min)
        })
        .collect();
    LidarScan {
        fov,
        max_range,
        ranges,
    }
}

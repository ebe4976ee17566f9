//! Parametric scene builders, one per driving context.
//!
//! The parameter ranges below are invented for the simulator; they
//! exaggerate the structural cues that separate the classes (road width,
//! curvature, obstacle density and layout).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::class::ContextClass;
use super::geometry::{Aabb, Segment};
use crate::ds_fusion::SensorPose;
use crate::rng;

/// Half-extent of the world square.
pub const WORLD_BOUND: f64 = 64.0;

/// Scene geometry stays within `±REACH` along the road.
const REACH: f64 = 60.0;

const CAR_LENGTH: f64 = 4.5;
const CAR_WIDTH: f64 = 1.8;
const LANE_WIDTH: f64 = 3.5;

/// Region around the ego vehicle that no obstacle may overlap.
fn ego_keep_out() -> Aabb {
    Aabb::centered(0.0, 0.0, 6.0, 2.4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub class: ContextClass,
    pub segments: Vec<Segment>,
    pub boxes: Vec<Aabb>,
    pub ego_pose: SensorPose,
}

impl Scene {
    fn new(class: ContextClass) -> Self {
        Self {
            class,
            segments: Vec::new(),
            boxes: Vec::new(),
            ego_pose: SensorPose::new(0.0, 0.0, 0.0),
        }
    }

    /// Adds a box unless it overlaps the ego vehicle or an existing box.
    fn try_add_box(&mut self, b: Aabb) -> bool {
        if b.intersects(&ego_keep_out()) || self.boxes.iter().any(|o| o.intersects(&b)) {
            return false;
        }
        self.boxes.push(b);
        true
    }

    /// Distance from the ego position to the closest primitive.
    pub fn nearest_obstacle_distance(&self) -> f64 {
        let p = (self.ego_pose.x, self.ego_pose.y);
        let s = self.segments.iter().map(|s| s.distance_to(p));
        let b = self.boxes.iter().map(|b| b.distance_to(p));
        s.chain(b).fold(f64::INFINITY, f64::min)
    }

    pub fn within_bounds(&self, bound: f64) -> bool {
        let inside = |p: (f64, f64)| p.0.abs() <= bound && p.1.abs() <= bound;
        self.segments.iter().all(|s| inside(s.a) && inside(s.b))
            && self.boxes.iter().all(|b| inside(b.min) && inside(b.max))
    }
}

/// Parameter ranges per class; `(lo, hi)` pairs are sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub highway_half_width: (f64, f64),
    pub highway_max_vehicles: usize,
    pub country_half_width: (f64, f64),
    pub country_curvature: (f64, f64),
    pub country_max_obstacles: usize,
    pub city_half_width: (f64, f64),
    pub city_boxes: (usize, usize),
    pub parking_rows: (usize, usize),
    pub parking_max_per_row: usize,
    pub jam_half_width: (f64, f64),
    pub jam_boxes: (usize, usize),
}

impl Default for ClassParams {
    fn default() -> Self {
        Self {
            highway_half_width: (7.0, 10.0),
            highway_max_vehicles: 3,
            country_half_width: (3.0, 4.0),
            country_curvature: (0.002, 0.01),
            country_max_obstacles: 1,
            city_half_width: (4.0, 6.0),
            city_boxes: (3, 8),
            parking_rows: (2, 4),
            parking_max_per_row: 14,
            jam_half_width: (5.0, 7.0),
            jam_boxes: (6, 12),
        }
    }
}

impl ClassParams {
    pub fn parking_box_bound(&self) -> usize {
        self.parking_rows.1 * self.parking_max_per_row
    }
}

pub fn build_scene(class: ContextClass, seed: u64) -> Scene {
    build_scene_with(class, seed, &ClassParams::default())
}

/// Deterministic scene for `(class, seed)`.
pub fn build_scene_with(class: ContextClass, seed: u64, params: &ClassParams) -> Scene {
    let mut rng = rng::stream(seed, &[class.index() as u64]);
    let mut scene = Scene::new(class);
    match class {
        ContextClass::Highway => highway(&mut scene, params, &mut rng),
        ContextClass::CountryRoad => country_road(&mut scene, params, &mut rng),
        ContextClass::InnerCity => inner_city(&mut scene, params, &mut rng),
        ContextClass::ParkingLot => parking_lot(&mut scene, params, &mut rng),
        ContextClass::TrafficJam => traffic_jam(&mut scene, params, &mut rng),
    }
    scene
}

fn uniform<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

fn count<R: Rng>(rng: &mut R, range: (usize, usize)) -> usize {
    rng.gen_range(range.0..=range.1.max(range.0))
}

fn car_along_road(x: f64, y: f64) -> Aabb {
    Aabb::centered(x, y, CAR_LENGTH, CAR_WIDTH)
}

/// Two long straight guard rails and a few vehicles in the lanes.
fn highway<R: Rng>(scene: &mut Scene, p: &ClassParams, rng: &mut R) {
    let half = uniform(rng, p.highway_half_width);
    for side in [-1.0, 1.0] {
        scene
            .segments
            .push(Segment::new((-REACH, side * half), (REACH, side * half)));
    }
    let lanes: Vec<f64> = [-2.0, -1.0, 0.0, 1.0, 2.0]
        .iter()
        .map(|k| k * LANE_WIDTH)
        .filter(|y| y.abs() + CAR_WIDTH / 2.0 + 0.5 < half)
        .collect();
    let n = rng.gen_range(0..=p.highway_max_vehicles);
    for _ in 0..n {
        let y = lanes[rng.gen_range(0..lanes.len())];
        let x = rng.gen_range(10.0..40.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        scene.try_add_box(car_along_road(x, y));
    }
}

/// Narrow, gently curving borders sampled as polylines.
fn country_road<R: Rng>(scene: &mut Scene, p: &ClassParams, rng: &mut R) {
    let half = uniform(rng, p.country_half_width);
    let curvature = uniform(rng, p.country_curvature) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let phase = rng.gen_range(-10.0..10.0);
    let centre = |x: f64| curvature * ((x - phase).powi(2) - phase * phase);
    let step = 2.0;
    let n = (2.0 * REACH / step) as usize;
    for side in [-1.0, 1.0] {
        for i in 0..n {
            let x0 = -REACH + i as f64 * step;
            let x1 = x0 + step;
            let a = (x0, (centre(x0) + side * half).clamp(-REACH, REACH));
            let b = (x1, (centre(x1) + side * half).clamp(-REACH, REACH));
            scene.segments.push(Segment::new(a, b));
        }
    }
    let n_obstacles = rng.gen_range(0..=p.country_max_obstacles);
    for _ in 0..n_obstacles {
        let x = rng.gen_range(12.0..40.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let y = centre(x) + if rng.gen_bool(0.5) { half + 2.0 } else { -half - 2.0 };
        scene.try_add_box(Aabb::centered(x, y.clamp(-REACH, REACH), 0.8, 0.8));
    }
}

/// Building fronts with side-street gaps bounded by perpendicular walls,
/// and cars parked along the kerbs.
fn inner_city<R: Rng>(scene: &mut Scene, p: &ClassParams, rng: &mut R) {
    let half = uniform(rng, p.city_half_width);
    for side in [-1.0, 1.0] {
        let wall_y = side * (half + rng.gen_range(1.5..3.0));
        let mut x = -REACH;
        while x < REACH {
            let len = rng.gen_range(8.0..20.0);
            let end = (x + len).min(REACH);
            scene.segments.push(Segment::new((x, wall_y), (end, wall_y)));
            if end >= REACH {
                break;
            }
            let gap = rng.gen_range(4.0..8.0);
            let depth = side * rng.gen_range(10.0..20.0);
            let outer = (wall_y + depth).clamp(-REACH, REACH);
            scene.segments.push(Segment::new((end, wall_y), (end, outer)));
            let next = (end + gap).min(REACH);
            scene.segments.push(Segment::new((next, wall_y), (next, outer)));
            x = next;
        }
    }
    let target = count(rng, p.city_boxes);
    let mut attempts = 0;
    while scene.boxes.len() < target && attempts < 200 {
        attempts += 1;
        let x = rng.gen_range(-25.0..25.0);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let b = if rng.gen_bool(0.7) {
            car_along_road(x, side * (half - CAR_WIDTH / 2.0 - 0.2))
        } else {
            // street furniture / pedestrians on the pavement
            Aabb::centered(x, side * (half + 0.7), 0.6, 0.6)
        };
        scene.try_add_box(b);
    }
}

/// Regular rows of perpendicular parking bays around an aisle, with a few
/// empty bays, inside an open area bounded far away.
fn parking_lot<R: Rng>(scene: &mut Scene, p: &ClassParams, rng: &mut R) {
    let rows = count(rng, p.parking_rows);
    let row_y = [5.75, -5.75, 12.75, -12.75, 19.75, -19.75];
    let pitch = rng.gen_range(2.5..2.9);
    let start = rng.gen_range(-22.0..-14.0);
    for &y in row_y.iter().take(rows) {
        for j in 0..p.parking_max_per_row {
            if rng.gen_bool(0.15) {
                continue;
            }
            let x = start + j as f64 * pitch;
            scene.try_add_box(Aabb::centered(x, y, CAR_WIDTH, CAR_LENGTH));
        }
    }
    let edge = rng.gen_range(24.0..30.0);
    scene.segments.push(Segment::new((-edge, -edge), (edge, -edge)));
    scene.segments.push(Segment::new((-edge, edge), (edge, edge)));
}

/// A multi-lane corridor packed with queued vehicles close to the ego.
fn traffic_jam<R: Rng>(scene: &mut Scene, p: &ClassParams, rng: &mut R) {
    let half = uniform(rng, p.jam_half_width);
    for side in [-1.0, 1.0] {
        scene
            .segments
            .push(Segment::new((-REACH, side * half), (REACH, side * half)));
    }
    let lanes: Vec<f64> = [-1.0, 0.0, 1.0]
        .iter()
        .map(|k| k * LANE_WIDTH)
        .filter(|y| y.abs() + CAR_WIDTH / 2.0 < half)
        .collect();
    let target = count(rng, p.jam_boxes);
    // Fill the queues outward from the ego, alternating ahead and behind.
    let mut queues: Vec<(f64, f64, f64)> = lanes
        .iter()
        .flat_map(|&y| {
            let offset = if y == 0.0 { 3.0 + CAR_LENGTH / 2.0 } else { rng.gen_range(-2.0..2.0) };
            [(y, offset, 1.0), (y, -offset, -1.0)]
        })
        .collect();
    let mut attempts = 0;
    while scene.boxes.len() < target && attempts < 200 {
        attempts += 1;
        let q = rng.gen_range(0..queues.len());
        let (y, x, dir) = queues[q];
        let jitter = rng.gen_range(-0.3..0.3);
        scene.try_add_box(car_along_road(x, y + jitter));
        queues[q].1 = x + dir * (CAR_LENGTH + rng.gen_range(0.8..2.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for class in ContextClass::ALL {
            assert_eq!(build_scene(class, 42), build_scene(class, 42));
        }
        assert_ne!(
            build_scene(ContextClass::InnerCity, 1),
            build_scene(ContextClass::InnerCity, 2)
        );
    }

    #[test]
    fn scenes_respect_invariants() {
        for class in ContextClass::ALL {
            for seed in 0..50 {
                let s = build_scene(class, seed);
                assert!(s.within_bounds(WORLD_BOUND), "{class} {seed}");
                assert!(
                    s.boxes.iter().all(|b| !b.contains((0.0, 0.0))),
                    "{class} {seed}"
                );
                assert!(s.boxes.iter().all(|b| !b.intersects(&ego_keep_out())));
            }
        }
    }

    #[test]
    fn class_signatures() {
        let p = ClassParams::default();
        for seed in 0..50 {
            let pl = build_scene(ContextClass::ParkingLot, seed);
            assert!(pl.boxes.len() <= p.parking_box_bound());
            let hw = build_scene(ContextClass::Highway, seed);
            assert!(hw.boxes.len() <= p.highway_max_vehicles);
            let rails: Vec<f64> = hw.segments.iter().map(|s| s.a.1).collect();
            assert!((rails[1] - rails[0]).abs() >= 14.0);
            let tj = build_scene(ContextClass::TrafficJam, seed);
            assert!(tj.boxes.len() >= p.jam_boxes.0 && tj.boxes.len() <= p.jam_boxes.1);
            let ic = build_scene(ContextClass::InnerCity, seed);
            assert!(ic.boxes.len() >= p.city_boxes.0 && ic.boxes.len() <= p.city_boxes.1);
        }
    }
}

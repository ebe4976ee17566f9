use serde::{Deserialize, Serialize};

/// Line segment between two points (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Segment {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Self {
        Self { a, b }
    }

    pub fn distance_to(&self, p: (f64, f64)) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (qx, qy) = (self.a.0 + t * dx, self.a.1 + t * dy);
        ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
    }
}

/// Axis-aligned rectangle (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl Aabb {
    pub fn centered(cx: f64, cy: f64, size_x: f64, size_y: f64) -> Self {
        Self {
            min: (cx - size_x / 2.0, cy - size_y / 2.0),
            max: (cx + size_x / 2.0, cy + size_y / 2.0),
        }
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.min.0 && p.0 <= self.max.0 && p.1 >= self.min.1 && p.1 <= self.max.1
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.0 < other.max.0
            && other.min.0 < self.max.0
            && self.min.1 < other.max.1
            && other.min.1 < self.max.1
    }

    pub fn distance_to(&self, p: (f64, f64)) -> f64 {
        let dx = (self.min.0 - p.0).max(0.0).max(p.0 - self.max.0);
        let dy = (self.min.1 - p.1).max(0.0).max(p.1 - self.max.1);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn edges(&self) -> [Segment; 4] {
        let (x0, y0, x1, y1) = (self.min.0, self.min.1, self.max.0, self.max.1);
        [
            Segment::new((x0, y0), (x1, y0)),
            Segment::new((x1, y0), (x1, y1)),
            Segment::new((x1, y1), (x0, y1)),
            Segment::new((x0, y1), (x0, y0)),
        ]
    }
}

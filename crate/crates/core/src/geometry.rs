//! Planar polygon primitives used by the zoning code.
//!
//! Rings are stored open (first vertex not repeated) and counterclockwise.

use serde::{Deserialize, Serialize};

/// `[x, y]`; for geographic data `[longitude, latitude]` in degrees.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon from a ring; a repeated closing vertex is dropped and
    /// the orientation normalised to counterclockwise.
    pub fn new(mut vertices: Vec<Point>) -> Self {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if ring_signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self { vertices }
    }

    pub fn rectangle(min: Point, max: Point) -> Self {
        Self::new(vec![min, [max[0], min[1]], max, [min[0], max[1]]])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// GeoJSON-style closed ring.
    pub fn closed_ring(&self) -> Vec<Point> {
        let mut ring = self.vertices.clone();
        if let Some(first) = ring.first().copied() {
            ring.push(first);
        }
        ring
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.vertices).abs()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3 || self.area() == 0.0
    }

    /// Area-weighted centroid; falls back to the vertex mean for degenerate rings.
    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let a = ring_signed_area(v);
        if v.is_empty() {
            return [0.0, 0.0];
        }
        if a == 0.0 {
            let n = v.len() as f64;
            let sx: f64 = v.iter().map(|p| p[0]).sum();
            let sy: f64 = v.iter().map(|p| p[1]).sum();
            return [sx / n, sy / n];
        }
        // shift to the first vertex for numerical stability
        let o = v[0];
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..v.len() {
            let p = [v[i][0] - o[0], v[i][1] - o[1]];
            let q = v[(i + 1) % v.len()];
            let q = [q[0] - o[0], q[1] - o[1]];
            let cross = p[0] * q[1] - q[0] * p[1];
            cx += (p[0] + q[0]) * cross;
            cy += (p[1] + q[1]) * cross;
        }
        [o[0] + cx / (6.0 * a), o[1] + cy / (6.0 * a)]
    }

    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &self.vertices {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        b
    }

    /// Even-odd ray casting. Points exactly on an edge may land on either side.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len().wrapping_sub(1);
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Shortest distance from `p` to any edge.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let v = &self.vertices;
        (0..v.len())
            .map(|i| segment_distance(p, v[i], v[(i + 1) % v.len()]))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if a == b {
                return false;
            }
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(a, b, v[j], v[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }

    /// Keeps the part of the polygon where `normal · p <= offset`
    /// (Sutherland–Hodgman against a single line).
    pub fn clip_half_plane(&self, normal: Point, offset: f64) -> Polygon {
        let v = &self.vertices;
        let side = |p: &Point| normal[0] * p[0] + normal[1] * p[1] - offset;
        let mut out = Vec::with_capacity(v.len() + 2);
        for i in 0..v.len() {
            let cur = v[i];
            let next = v[(i + 1) % v.len()];
            let (sc, sn) = (side(&cur), side(&next));
            if sc <= 0.0 {
                out.push(cur);
            }
            if (sc < 0.0 && sn > 0.0) || (sc > 0.0 && sn < 0.0) {
                let t = sc / (sc - sn);
                out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
            }
        }
        out.dedup();
        if out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        Polygon { vertices: out }
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon::new(self.vertices.iter().map(|p| f(*p)).collect())
    }
}

pub fn ring_signed_area(v: &[Point]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let o = v[0];
    let mut s = 0.0;
    for i in 1..v.len() - 1 {
        let a = [v[i][0] - o[0], v[i][1] - o[1]];
        let b = [v[i + 1][0] - o[0], v[i + 1][1] - o[1]];
        s += a[0] * b[1] - b[0] * a[1];
    }
    s / 2.0
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Local equirectangular projection: longitudes are shrunk by the cosine of
/// the reference latitude so Euclidean distances approximate ground distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin: Point,
    pub lon_scale: f64,
}

impl Projection {
    pub fn about(origin: Point) -> Self {
        Self {
            origin,
            lon_scale: origin[1].to_radians().cos(),
        }
    }

    pub fn forward(&self, p: Point) -> Point {
        [(p[0] - self.origin[0]) * self.lon_scale, p[1] - self.origin[1]]
    }

    pub fn inverse(&self, q: Point) -> Point {
        [q[0] / self.lon_scale + self.origin[0], q[1] + self.origin[1]]
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let (a, b) = (self.forward(a), self.forward(b));
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_is_normalised() {
        let cw = Polygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(cw.vertices().len(), 4);
        assert!(ring_signed_area(cw.vertices()) > 0.0);
        assert_eq!(cw.area(), 1.0);
    }

    #[test]
    fn centroid_of_rectangle() {
        let r = Polygon::rectangle([-5.0, -5.0], [15.0, 5.0]);
        let c = r.centroid();
        assert!((c[0] - 5.0).abs() < 1e-12 && c[1].abs() < 1e-12);
    }

    #[test]
    fn clip_splits_rectangle() {
        let r = Polygon::rectangle([-5.0, -5.0], [15.0, 5.0]);
        let left = r.clip_half_plane([1.0, 0.0], 5.0);
        let right = r.clip_half_plane([-1.0, 0.0], -5.0);
        assert!((left.area() - 100.0).abs() < 1e-12);
        assert!((right.area() - 100.0).abs() < 1e-12);
        assert!(left.contains([0.0, 0.0]) && !left.contains([10.0, 0.0]));
    }

    #[test]
    fn clip_can_empty_a_polygon() {
        let r = Polygon::rectangle([0.0, 0.0], [1.0, 1.0]);
        assert!(r.clip_half_plane([1.0, 0.0], -1.0).is_empty());
    }

    #[test]
    fn simplicity_check() {
        assert!(Polygon::rectangle([0.0, 0.0], [1.0, 1.0]).is_simple());
        let bowtie = Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
        };
        assert!(!bowtie.is_simple());
    }

    #[test]
    fn projection_round_trips() {
        let p = Projection::about([-86.1, 39.8]);
        let q = p.inverse(p.forward([-86.3, 39.6]));
        assert!((q[0] + 86.3).abs() < 1e-12 && (q[1] - 39.6).abs() < 1e-12);
    }
}

//! Planar geometry for mask regularization: convex hulls, centroid-anchored
//! scaling, and polygon rasterization.
//!
//! Coordinates are in pixel units; a pixel's center sits at integer
//! coordinates. Orientation language ("counter-clockwise", signed area)
//! follows the mathematical convention where positive shoelace area means
//! counter-clockwise.

use crate::imaging::BinaryMask;
use crate::{Error, Result};

/// 2-D point in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Closed polygon; edges run between consecutive vertices and wrap from the
/// last vertex back to the first. One- and two-vertex polygons are allowed
/// as degenerate cases (a point, a segment).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::invalid("polygon needs at least one vertex"));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::invalid("polygon vertices must be finite"));
        }
        Ok(Polygon { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
}

/// Twice the signed area of the triangle (o, a, b); positive when the turn
/// o -> a -> b is counter-clockwise.
#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(p: &Polygon) -> f64 {
    let v = p.vertices();
    let mut twice = 0.0;
    for i in 0..v.len() {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        twice += a.x * b.y - b.x * a.y;
    }
    twice / 2.0
}

/// Smallest convex polygon containing all input points (monotone chain).
///
/// Vertices come back counter-clockwise starting from the lexicographically
/// smallest point, with collinear interior points excluded. Degenerate
/// inputs collapse: one distinct point yields a 1-vertex polygon, a fully
/// collinear set yields its two extreme points.
pub fn convex_hull(points: &[Point]) -> Result<Polygon> {
    if points.is_empty() {
        return Err(Error::invalid("convex hull of an empty point set"));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::invalid("convex hull input must be finite"));
    }

    let mut pts = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).expect("finite coords"));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);

    if pts.len() <= 2 {
        return Polygon::new(pts);
    }

    // Andrew's monotone chain. Popping on cross <= 0 drops collinear points,
    // so the result is strictly convex.
    let mut lower: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }

    lower.pop();
    upper.pop();
    lower.extend(upper);
    Polygon::new(lower)
}

/// Area centroid for polygons with nonzero area; arithmetic vertex mean for
/// degenerate ones (fewer than 3 vertices, or collinear).
pub fn centroid(p: &Polygon) -> Point {
    let v = p.vertices();
    if v.len() >= 3 {
        let mut twice_area = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..v.len() {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            let c = a.x * b.y - b.x * a.y;
            twice_area += c;
            cx += (a.x + b.x) * c;
            cy += (a.y + b.y) * c;
        }
        if twice_area.abs() > 1e-12 {
            return Point::new(cx / (3.0 * twice_area), cy / (3.0 * twice_area));
        }
    }
    let n = v.len() as f64;
    Point::new(
        v.iter().map(|q| q.x).sum::<f64>() / n,
        v.iter().map(|q| q.y).sum::<f64>() / n,
    )
}

/// Scales every vertex away from the centroid: v -> c + factor * (v - c).
pub fn scale_polygon(p: &Polygon, factor: f64) -> Result<Polygon> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(Error::invalid(format!("scale factor must be positive, got {factor}")));
    }
    let c = centroid(p);
    let vertices = p
        .vertices()
        .iter()
        .map(|v| Point::new(c.x + factor * (v.x - c.x), c.y + factor * (v.y - c.y)))
        .collect();
    Polygon::new(vertices)
}

/// True when q lies on the closed segment a-b (within a small tolerance).
fn on_segment(q: Point, a: Point, b: Point) -> bool {
    let cr = cross(a, b, q);
    if cr.abs() > 1e-7 {
        return false;
    }
    let (lo_x, hi_x) = if a.x <= b.x { (a.x, b.x) } else { (b.x, a.x) };
    let (lo_y, hi_y) = if a.y <= b.y { (a.y, b.y) } else { (b.y, a.y) };
    q.x >= lo_x - 1e-9 && q.x <= hi_x + 1e-9 && q.y >= lo_y - 1e-9 && q.y <= hi_y + 1e-9
}

/// Even-odd point-in-polygon with the boundary counted as inside.
fn point_in_polygon(q: Point, poly: &Polygon) -> bool {
    let v = poly.vertices();
    for i in 0..v.len() {
        if on_segment(q, v[i], v[(i + 1) % v.len()]) {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..v.len() {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        if (a.y > q.y) != (b.y > q.y) {
            let x_int = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if q.x < x_int {
                inside = !inside;
            }
        }
    }
    inside
}

/// Marks every pixel whose center lies inside or on the polygon. Parts of
/// the polygon outside the raster are clipped by discarding out-of-range
/// pixels; the vertices themselves are never moved.
pub fn rasterize_polygon(p: &Polygon, width: u32, height: u32) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("raster dimensions must be positive"));
    }
    let mut mask = BinaryMask::blank(width, height);

    let min_x = p.vertices().iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
    let max_x = p.vertices().iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.vertices().iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let max_y = p.vertices().iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);

    // Candidate pixel range: the polygon's bounding box widened by one pixel
    // for tolerance, clipped to the raster.
    let x0 = (min_x.floor() - 1.0).max(0.0) as i64;
    let x1 = (max_x.ceil() + 1.0).min(width as f64 - 1.0) as i64;
    let y0 = (min_y.floor() - 1.0).max(0.0) as i64;
    let y1 = (max_y.ceil() + 1.0).min(height as f64 - 1.0) as i64;
    if x0 > x1 || y0 > y1 {
        return Ok(mask);
    }

    for y in y0..=y1 {
        for x in x0..=x1 {
            if point_in_polygon(Point::new(x as f64, y as f64), p) {
                mask.set(x as u32, y as u32, true);
            }
        }
    }
    Ok(mask)
}

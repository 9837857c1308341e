//! Planar polygon helpers for the anchor quadrilateral.

use crate::domain::Point2;

/// Distance from `p` to the segment `a`-`b`.
pub fn distance_to_segment(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the closed polygon boundary (vertices in order).
pub fn distance_to_boundary(p: &Point2, polygon: &[Point2]) -> f64 {
    let n = polygon.len();
    (0..n)
        .map(|i| distance_to_segment(p, &polygon[i], &polygon[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Even-odd point-in-polygon test. Points exactly on an edge may land on
/// either side.
pub fn contains(polygon: &[Point2], p: &Point2) -> bool {
    let n = polygon.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn centroid(points: &[Point2]) -> Point2 {
    points.iter().sum::<Point2>() / points.len() as f64
}

/// Twice the signed area of the triangle `a b c`.
pub fn cross(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (b - a).perp(&(c - a))
}

/// True when every point lies within `tolerance` meters of one line.
pub fn collinear(points: &[Point2], tolerance: f64) -> bool {
    let Some(&first) = points.first() else {
        return true;
    };
    let Some(far) = points
        .iter()
        .max_by(|a, b| (*a - first).norm().total_cmp(&(*b - first).norm()))
    else {
        return true;
    };
    let baseline = far - first;
    let len = baseline.norm();
    if len <= tolerance {
        return true;
    }
    points
        .iter()
        .all(|p| (baseline.perp(&(p - first)) / len).abs() <= tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn boundary_distance() {
        let sq = square();
        assert!((distance_to_boundary(&Point2::new(0.5, 0.5), &sq) - 0.5).abs() < 1e-15);
        assert!((distance_to_boundary(&Point2::new(0.5, -0.2), &sq) - 0.2).abs() < 1e-15);
        assert!((distance_to_boundary(&Point2::new(2.0, 2.0), &sq) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn containment() {
        let sq = square();
        assert!(contains(&sq, &Point2::new(0.3, 0.7)));
        assert!(!contains(&sq, &Point2::new(1.3, 0.7)));
        assert!(!contains(&sq, &Point2::new(0.3, -0.1)));
    }

    #[test]
    fn collinearity() {
        let line = [Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(3.0, 3.0)];
        assert!(collinear(&line, 1e-9));
        assert!(!collinear(&square(), 1e-9));
    }
}

//! Convex hull area via the monotone chain construction.

use crate::scalar::Scalar;

/// Area of the convex hull of `points`; 0 for fewer than three points or a
/// collinear set. Units are the square of the input units.
pub fn convex_hull_area<F: Scalar>(points: &[(F, F)]) -> F {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return F::zero();
    }
    // Shoelace over the hull polygon.
    let mut twice_area = F::zero();
    for i in 0..hull.len() {
        let (x1, y1) = hull[i];
        let (x2, y2) = hull[(i + 1) % hull.len()];
        twice_area = twice_area + (x1 * y2 - x2 * y1);
    }
    twice_area.abs() / (F::one() + F::one())
}

fn cross<F: Scalar>(o: (F, F), a: (F, F), b: (F, F)) -> F {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn convex_hull<F: Scalar>(points: &[(F, F)]) -> Vec<(F, F)> {
    let mut pts: Vec<(F, F)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("hull points are never NaN"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(F, F)> = Vec::with_capacity(pts.len() * 2);
    // Lower hull, then upper hull; strictly convex turns only.
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= F::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= F::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

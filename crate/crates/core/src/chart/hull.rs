//! Andrew's monotone chain convex hull.

pub type Point = [f64; 2];

/// Twice the signed area of triangle `o, a, b`; positive for a left turn.
#[inline]
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Minimal convex polygon around `points`, counterclockwise, starting at the
/// lowest (then leftmost) vertex. Collinear and duplicate points are dropped,
/// so a single distinct point gives one vertex and a collinear set gives its
/// two endpoints. Non-finite points are ignored.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points
        .iter()
        .copied()
        .filter(|p| p[0].is_finite() && p[1].is_finite())
        .collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return rotate_to_start(pts);
    }

    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // the last point repeats the first
    hull.pop();
    rotate_to_start(hull)
}

fn rotate_to_start(mut hull: Vec<Point>) -> Vec<Point> {
    if let Some(start) = (0..hull.len()).min_by(|&i, &j| {
        let (a, b) = (hull[i], hull[j]);
        a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0]))
    }) {
        hull.rotate_left(start);
    }
    hull
}

/// Whether `p` lies inside or on `polygon` (counterclockwise, as returned by
/// [`convex_hull`]), allowing `tol` of slack.
pub fn hull_contains(polygon: &[Point], p: Point, tol: f64) -> bool {
    match polygon.len() {
        0 => false,
        1 => (polygon[0][0] - p[0]).abs() <= tol && (polygon[0][1] - p[1]).abs() <= tol,
        2 => on_segment(polygon[0], polygon[1], p, tol),
        n => (0..n).all(|i| cross(polygon[i], polygon[(i + 1) % n], p) >= -tol),
    }
}

fn on_segment(a: Point, b: Point, p: Point, tol: f64) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let dist = cross(a, b, p).abs() / len.max(f64::MIN_POSITIVE);
    let within = |i: usize| p[i] >= a[i].min(b[i]) - tol && p[i] <= a[i].max(b[i]) + tol;
    dist <= tol && within(0) && within(1)
}

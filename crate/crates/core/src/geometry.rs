//! Pure 2D geometry kernel for GPS-to-segment matching: local planar
//! projection of lat/lon, perpendicular and colinear point-to-segment
//! distances, point projection, total-least-squares line fitting and angular
//! distance between lines.
//!
//! All functions are pure and operate on immutable values; nothing here does
//! I/O or holds state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius in meters used by the local planar projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate input")]
    NonFinite,
    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,
    #[error("negative distance input: {0}")]
    NegativeDistance(f64),
    #[error("line fit requires at least 2 distinct points")]
    InsufficientPoints,
    #[error("line fit produced coincident endpoints")]
    DegenerateFit,
    #[error("origin latitude/longitude out of range: ({0}, {1})")]
    OriginOutOfRange(f64, f64),
}

/// A point in the local planar frame, meters east (`x`) and north (`y`) of
/// the projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn distance_to(self, other: PlanarPoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

fn dot(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * bx + ay * by
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// A directed 2D line segment with distinct endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment2D {
    pub a: PlanarPoint,
    pub b: PlanarPoint,
}

impl Segment2D {
    pub fn new(a: PlanarPoint, b: PlanarPoint) -> Result<Self, GeometryError> {
        if ![a.x, a.y, b.x, b.y].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if a.distance_to(b) == 0.0 {
            return Err(GeometryError::DegenerateSegment);
        }
        Ok(Segment2D { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.distance_to(self.b)
    }

    fn direction(&self) -> (f64, f64) {
        (self.b.x - self.a.x, self.b.y - self.a.y)
    }
}

/// A line represented by two distinct points, as produced by
/// [`fit_local_line`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedLine {
    pub p1: PlanarPoint,
    pub p2: PlanarPoint,
}

/// Reference point of the equirectangular local projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lat0: f64,
    pub lon0: f64,
    pub earth_radius: f64,
}

impl GeoOrigin {
    pub fn new(lat0: f64, lon0: f64) -> Result<Self, GeometryError> {
        if !lat0.is_finite() || !lon0.is_finite() || lat0.abs() > 90.0 || lon0.abs() > 180.0 {
            return Err(GeometryError::OriginOutOfRange(lat0, lon0));
        }
        Ok(GeoOrigin { lat0, lon0, earth_radius: EARTH_RADIUS_M })
    }
}

/// Weights of the combined point-to-segment distance score.
///
/// Defaults are the perpendicular weight 1.0, colinear weight 2.0 and the
/// additive floor 1.0 that keeps reciprocal scores bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub w_perp: f64,
    pub w_colin: f64,
    pub epsilon: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        DistanceWeights { w_perp: 1.0, w_colin: 2.0, epsilon: 1.0 }
    }
}

/// Project a lat/lon coordinate into the local planar frame around `origin`.
///
/// Equirectangular: `x = R * (lon - lon0) * rad * cos(lat0 * rad)`,
/// `y = R * (lat - lat0) * rad`. Valid for trajectories within roughly a
/// degree of the origin.
pub fn to_local_plane(
    lat: f64,
    lon: f64,
    origin: &GeoOrigin,
) -> Result<PlanarPoint, GeometryError> {
    if !lat.is_finite() || !lon.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let rad = std::f64::consts::PI / 180.0;
    let x = origin.earth_radius * (lon - origin.lon0) * rad * (origin.lat0 * rad).cos();
    let y = origin.earth_radius * (lat - origin.lat0) * rad;
    Ok(PlanarPoint::new(x, y))
}

/// Distance from `p` to the infinite line through `seg`.
pub fn perpendicular_distance(p: PlanarPoint, seg: &Segment2D) -> f64 {
    let (dx, dy) = seg.direction();
    cross(dx, dy, seg.a.x - p.x, seg.a.y - p.y).abs() / seg.length()
}

/// Parameter `t` of the orthogonal projection of `p` onto the line through
/// `seg`, with `t = 0` at `a` and `t = 1` at `b`.
pub fn projection_parameter(p: PlanarPoint, seg: &Segment2D) -> f64 {
    let (dx, dy) = seg.direction();
    dot(p.x - seg.a.x, p.y - seg.a.y, dx, dy) / dot(dx, dy, dx, dy)
}

/// Orthogonal projection of `p` onto the infinite line through `seg`.
///
/// Built from the two rotated-offset candidates `p ± d_perp * n`; the
/// candidate that lands on the line (perpendicular distance ~0) is returned.
pub fn project_point(p: PlanarPoint, seg: &Segment2D) -> PlanarPoint {
    let (dx, dy) = seg.direction();
    let len = seg.length();
    let d_perp = perpendicular_distance(p, seg);
    // Unit normal: 90-degree rotation of the segment direction.
    let (nx, ny) = (-dy / len, dx / len);
    let plus = PlanarPoint::new(p.x + d_perp * nx, p.y + d_perp * ny);
    let minus = PlanarPoint::new(p.x - d_perp * nx, p.y - d_perp * ny);
    if perpendicular_distance(plus, seg) <= perpendicular_distance(minus, seg) {
        plus
    } else {
        minus
    }
}

/// How far the projection of `p` falls outside `seg`: zero when the
/// projection lies between the endpoints, otherwise the distance from the
/// projected point to the nearest endpoint.
pub fn colinear_distance(p: PlanarPoint, seg: &Segment2D) -> f64 {
    let t = projection_parameter(p, seg);
    if (0.0..=1.0).contains(&t) {
        return 0.0;
    }
    let q = project_point(p, seg);
    q.distance_to(seg.a).min(q.distance_to(seg.b))
}

/// Nearest point of `seg` to `p` (projection clamped to the segment).
pub fn nearest_point_on_segment(p: PlanarPoint, seg: &Segment2D) -> PlanarPoint {
    let t = projection_parameter(p, seg).clamp(0.0, 1.0);
    let (dx, dy) = seg.direction();
    PlanarPoint::new(seg.a.x + t * dx, seg.a.y + t * dy)
}

/// Distance from `p` to the nearest point of `seg`.
pub fn distance_to_segment(p: PlanarPoint, seg: &Segment2D) -> f64 {
    p.distance_to(nearest_point_on_segment(p, seg))
}

/// Weighted sum of perpendicular and colinear distances plus the epsilon
/// floor, using the default weights.
pub fn combined_distance(d_perp: f64, d_colin: f64) -> Result<f64, GeometryError> {
    combined_distance_with(d_perp, d_colin, &DistanceWeights::default())
}

pub fn combined_distance_with(
    d_perp: f64,
    d_colin: f64,
    weights: &DistanceWeights,
) -> Result<f64, GeometryError> {
    if d_perp < 0.0 {
        return Err(GeometryError::NegativeDistance(d_perp));
    }
    if d_colin < 0.0 {
        return Err(GeometryError::NegativeDistance(d_colin));
    }
    Ok(weights.w_perp * d_perp + weights.w_colin * d_colin + weights.epsilon)
}

/// Total-least-squares line through `samples`: the principal axis of the
/// sample covariance through the centroid, returned as the projections of
/// the first and last sample onto that axis.
pub fn fit_local_line(samples: &[PlanarPoint]) -> Result<FittedLine, GeometryError> {
    if samples.len() < 2 {
        return Err(GeometryError::InsufficientPoints);
    }
    let n = samples.len() as f64;
    let cx = samples.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = samples.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in samples {
        let (ex, ey) = (p.x - cx, p.y - cy);
        sxx += ex * ex;
        sxy += ex * ey;
        syy += ey * ey;
    }
    if sxx + syy == 0.0 {
        // All samples identical.
        return Err(GeometryError::InsufficientPoints);
    }
    // Principal eigenvector of [[sxx, sxy], [sxy, syy]].
    let lambda = 0.5 * (sxx + syy) + (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let cand1 = (sxy, lambda - sxx);
    let cand2 = (lambda - syy, sxy);
    let (vx, vy) =
        if dot(cand1.0, cand1.1, cand1.0, cand1.1) >= dot(cand2.0, cand2.1, cand2.0, cand2.1) {
            cand1
        } else {
            cand2
        };
    let norm = (vx * vx + vy * vy).sqrt();
    // Isotropic sample cloud: no preferred axis, fall back to east.
    let (ux, uy) = if norm > 0.0 { (vx / norm, vy / norm) } else { (1.0, 0.0) };

    let project = |p: &PlanarPoint| {
        let t = dot(p.x - cx, p.y - cy, ux, uy);
        PlanarPoint::new(cx + t * ux, cy + t * uy)
    };
    let p1 = project(&samples[0]);
    let p2 = project(samples.last().unwrap());
    if p1.distance_to(p2) == 0.0 {
        return Err(GeometryError::DegenerateFit);
    }
    Ok(FittedLine { p1, p2 })
}

/// Acute angle in degrees between the directions of a fitted line and a
/// segment, in `[0, 90]`; reversing either direction leaves it unchanged.
pub fn angular_distance(line: &FittedLine, seg: &Segment2D) -> Result<f64, GeometryError> {
    let (ux, uy) = (line.p2.x - line.p1.x, line.p2.y - line.p1.y);
    let (vx, vy) = seg.direction();
    let nu = (ux * ux + uy * uy).sqrt();
    let nv = (vx * vx + vy * vy).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(GeometryError::DegenerateSegment);
    }
    let cos = (dot(ux, uy, vx, vy).abs() / (nu * nv)).clamp(0.0, 1.0);
    Ok(cos.acos().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment2D {
        Segment2D::new(PlanarPoint::new(ax, ay), PlanarPoint::new(bx, by)).unwrap()
    }

    /// Minimum distance from `p` to the infinite line through `seg`, found by
    /// repeatedly zooming a dense parameter scan around the best sample.
    fn scan_line_distance(p: PlanarPoint, seg: &Segment2D) -> f64 {
        let (dx, dy) = (seg.b.x - seg.a.x, seg.b.y - seg.a.y);
        let at = |t: f64| PlanarPoint::new(seg.a.x + t * dx, seg.a.y + t * dy);
        let (mut lo, mut hi) = (-1e4, 1e4);
        let mut best = f64::INFINITY;
        for _ in 0..6 {
            let steps = 2000;
            let mut best_t = lo;
            best = f64::INFINITY;
            for i in 0..=steps {
                let t = lo + (hi - lo) * i as f64 / steps as f64;
                let d = p.distance_to(at(t));
                if d < best {
                    best = d;
                    best_t = t;
                }
            }
            let width = (hi - lo) / steps as f64;
            lo = best_t - width;
            hi = best_t + width;
        }
        best
    }

    #[test]
    fn local_plane_maps_origin_to_zero() {
        let origin = GeoOrigin::new(-37.8, 144.9).unwrap();
        let p = to_local_plane(-37.8, 144.9, &origin).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
    }

    #[test]
    fn local_plane_one_degree_north() {
        let origin = GeoOrigin::new(0.0, 0.0).unwrap();
        let p = to_local_plane(1.0, 0.0, &origin).unwrap();
        assert_relative_eq!(p.y, EARTH_RADIUS_M * PI / 180.0, max_relative = 1e-12);
        assert_abs_diff_eq!(p.y, 111_194.93, epsilon = 0.01);
        assert_eq!(p.x, 0.0);
    }

    #[test]
    fn local_plane_east_west_symmetry() {
        let origin = GeoOrigin::new(-37.8, 144.9).unwrap();
        let east = to_local_plane(-37.8, 145.9, &origin).unwrap();
        let west = to_local_plane(-37.8, 143.9, &origin).unwrap();
        assert_relative_eq!(east.x, -west.x, max_relative = 1e-12);
        assert!(east.x > 0.0);
    }

    #[test]
    fn local_plane_rejects_non_finite() {
        let origin = GeoOrigin::new(0.0, 0.0).unwrap();
        assert_eq!(to_local_plane(f64::NAN, 0.0, &origin), Err(GeometryError::NonFinite));
    }

    #[test]
    fn origin_rejects_out_of_range() {
        assert!(GeoOrigin::new(90.5, 0.0).is_err());
        assert!(GeoOrigin::new(0.0, 180.5).is_err());
    }

    #[test]
    fn perpendicular_unit_offset() {
        let s = seg(0.0, 0.0, 1.0, 0.0);
        assert_eq!(perpendicular_distance(PlanarPoint::new(0.0, 1.0), &s), 1.0);
        assert_eq!(perpendicular_distance(PlanarPoint::new(7.0, 0.0), &s), 0.0);
    }

    #[test]
    fn perpendicular_matches_line_scan() {
        let mut rng = oorandom(42);
        for _ in 0..50 {
            let s = seg(rng(), rng(), rng() + 0.5, rng() + 1.5);
            let p = PlanarPoint::new(rng() * 3.0, rng() * 3.0);
            let expect = scan_line_distance(p, &s);
            let got = perpendicular_distance(p, &s);
            assert!((got - expect).abs() <= 1e-6 * expect.max(1.0), "got {got} expect {expect}");
        }
    }

    // Tiny deterministic LCG so the scan tests need no external RNG.
    fn oorandom(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
        }
    }

    #[test]
    fn projection_of_point_on_segment_is_identity() {
        let s = seg(0.0, 0.0, 2.0, 2.0);
        let p = PlanarPoint::new(1.0, 1.0);
        let q = project_point(p, &s);
        assert_abs_diff_eq!(q.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_drops_to_axis() {
        let s = seg(0.0, 0.0, 1.0, 0.0);
        let q = project_point(PlanarPoint::new(0.5, 1.0), &s);
        assert_abs_diff_eq!(q.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn colinear_zero_inside_one_beyond() {
        let s = seg(0.0, 0.0, 1.0, 0.0);
        assert_eq!(colinear_distance(PlanarPoint::new(0.3, 5.0), &s), 0.0);
        assert_abs_diff_eq!(
            colinear_distance(PlanarPoint::new(2.0, 0.0), &s),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn combined_distance_examples() {
        assert_eq!(combined_distance(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(combined_distance(2.0, 3.0).unwrap(), 9.0);
        assert_eq!(combined_distance(-1.0, 0.0), Err(GeometryError::NegativeDistance(-1.0)));
    }

    #[test]
    fn fit_line_through_two_points() {
        let line =
            fit_local_line(&[PlanarPoint::new(0.0, 0.0), PlanarPoint::new(2.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(line.p1.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(line.p1.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(line.p2.x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(line.p2.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_line_collinear_samples_zero_residual() {
        let samples: Vec<_> = (0..10).map(|i| PlanarPoint::new(i as f64, 2.0 * i as f64)).collect();
        let line = fit_local_line(&samples).unwrap();
        let s = Segment2D::new(line.p1, line.p2).unwrap();
        for p in &samples {
            assert_abs_diff_eq!(perpendicular_distance(*p, &s), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fit_line_rejects_identical_points() {
        let p = PlanarPoint::new(1.0, 1.0);
        assert_eq!(fit_local_line(&[p, p, p]), Err(GeometryError::InsufficientPoints));
        assert_eq!(fit_local_line(&[p]), Err(GeometryError::InsufficientPoints));
    }

    /// Brute-force principal axis: scan the angle maximizing projected
    /// variance, then zoom.
    fn scan_principal_angle(samples: &[PlanarPoint]) -> f64 {
        let n = samples.len() as f64;
        let cx = samples.iter().map(|p| p.x).sum::<f64>() / n;
        let cy = samples.iter().map(|p| p.y).sum::<f64>() / n;
        let variance = |theta: f64| {
            let (c, s) = (theta.cos(), theta.sin());
            samples.iter().map(|p| ((p.x - cx) * c + (p.y - cy) * s).powi(2)).sum::<f64>()
        };
        let (mut lo, mut hi) = (0.0, PI);
        let mut best_t = 0.0;
        for _ in 0..8 {
            let steps = 1000;
            let mut best = f64::NEG_INFINITY;
            for i in 0..=steps {
                let t = lo + (hi - lo) * i as f64 / steps as f64;
                let v = variance(t);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            let width = (hi - lo) / steps as f64;
            lo = best_t - width;
            hi = best_t + width;
        }
        best_t
    }

    #[test]
    fn fit_line_direction_matches_eigen_scan() {
        let mut rng = oorandom(7);
        let samples: Vec<_> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.5;
                PlanarPoint::new(t + rng() * 0.02, t + rng() * 0.02)
            })
            .collect();
        let line = fit_local_line(&samples).unwrap();
        let fitted = (line.p2.y - line.p1.y).atan2(line.p2.x - line.p1.x);
        let expect = scan_principal_angle(&samples);
        let diff = (fitted - expect).rem_euclid(PI);
        let diff = diff.min(PI - diff);
        assert!(diff < 1e-6, "fitted angle {fitted} vs scanned {expect}");
    }

    #[test]
    fn angular_distance_basics() {
        let line = FittedLine { p1: PlanarPoint::new(0.0, 0.0), p2: PlanarPoint::new(1.0, 0.0) };
        assert_abs_diff_eq!(angular_distance(&line, &seg(5.0, 5.0, 9.0, 5.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(angular_distance(&line, &seg(9.0, 5.0, 5.0, 5.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            angular_distance(&line, &seg(0.0, 0.0, 0.0, 3.0)).unwrap(),
            90.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn degenerate_segment_rejected() {
        let p = PlanarPoint::new(1.0, 2.0);
        assert_eq!(Segment2D::new(p, p), Err(GeometryError::DegenerateSegment));
        assert!(Segment2D::new(p, PlanarPoint::new(f64::INFINITY, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn perpendicular_is_rigid_invariant(
            px in -100.0f64..100.0, py in -100.0f64..100.0,
            ax in -100.0f64..100.0, ay in -100.0f64..100.0,
            bx in -100.0f64..100.0, by in -100.0f64..100.0,
            theta in 0.0f64..(2.0 * PI), tx in -50.0f64..50.0, ty in -50.0f64..50.0,
        ) {
            prop_assume!((ax - bx).abs() > 1e-6 || (ay - by).abs() > 1e-6);
            let p = PlanarPoint::new(px, py);
            let s = seg(ax, ay, bx, by);
            let rot = |q: PlanarPoint| PlanarPoint::new(
                q.x * theta.cos() - q.y * theta.sin() + tx,
                q.x * theta.sin() + q.y * theta.cos() + ty,
            );
            let s2 = Segment2D::new(rot(s.a), rot(s.b)).unwrap();
            let d1 = perpendicular_distance(p, &s);
            let d2 = perpendicular_distance(rot(p), &s2);
            prop_assert!((d1 - d2).abs() < 1e-9, "{d1} vs {d2}");
        }

        #[test]
        fn colinear_zero_iff_projection_parameter_inside(
            px in -100.0f64..100.0, py in -100.0f64..100.0,
            ax in -100.0f64..100.0, ay in -100.0f64..100.0,
            bx in -100.0f64..100.0, by in -100.0f64..100.0,
        ) {
            prop_assume!((ax - bx).abs() > 1e-6 || (ay - by).abs() > 1e-6);
            let p = PlanarPoint::new(px, py);
            let s = seg(ax, ay, bx, by);
            let t = projection_parameter(p, &s);
            let zero = colinear_distance(p, &s) == 0.0;
            prop_assert_eq!(zero, (0.0..=1.0).contains(&t));
        }

        #[test]
        fn combined_distance_strictly_monotone(
            dp in 0.0f64..100.0, dc in 0.0f64..100.0, bump in 0.001f64..10.0,
        ) {
            let base = combined_distance(dp, dc).unwrap();
            prop_assert!(combined_distance(dp + bump, dc).unwrap() > base);
            prop_assert!(combined_distance(dp, dc + bump).unwrap() > base);
        }

        #[test]
        fn pythagorean_decomposition(
            px in -100.0f64..100.0, py in -100.0f64..100.0,
            ax in -100.0f64..100.0, ay in -100.0f64..100.0,
            bx in -100.0f64..100.0, by in -100.0f64..100.0,
        ) {
            prop_assume!((ax - bx).abs() > 1e-3 || (ay - by).abs() > 1e-3);
            let p = PlanarPoint::new(px, py);
            let s = seg(ax, ay, bx, by);
            let nearest = distance_to_segment(p, &s).powi(2);
            let decomposed = perpendicular_distance(p, &s).powi(2)
                + colinear_distance(p, &s).powi(2);
            prop_assert!(
                (nearest - decomposed).abs() <= 1e-6 * nearest.max(1e-9),
                "{nearest} vs {decomposed}"
            );
        }

        #[test]
        fn projected_point_lies_on_line(
            px in -100.0f64..100.0, py in -100.0f64..100.0,
            ax in -100.0f64..100.0, ay in -100.0f64..100.0,
            bx in -100.0f64..100.0, by in -100.0f64..100.0,
        ) {
            prop_assume!((ax - bx).abs() > 1e-3 || (ay - by).abs() > 1e-3);
            let q = project_point(PlanarPoint::new(px, py), &seg(ax, ay, bx, by));
            prop_assert!(perpendicular_distance(q, &seg(ax, ay, bx, by)) < 1e-9);
        }

        #[test]
        fn angular_distance_reversal_invariant(
            ax in -100.0f64..100.0, ay in -100.0f64..100.0,
            bx in -100.0f64..100.0, by in -100.0f64..100.0,
        ) {
            prop_assume!((ax - bx).abs() > 1e-3 || (ay - by).abs() > 1e-3);
            let line = FittedLine {
                p1: PlanarPoint::new(ax, ay),
                p2: PlanarPoint::new(bx, by),
            };
            let reversed = seg(bx, by, ax, ay);
            let d = angular_distance(&line, &reversed).unwrap();
            prop_assert!(d < 1e-4, "angle to own reversal was {d}");
        }
    }
}

//! Oriented rectangles: corners, rotated IoU by convex clipping, angle
//! arithmetic and grid-cell coverage.
//!
//! Orientation is the direction of the length axis, counter-clockwise from
//! east, normalized to `[0, 2π)`.

use serde::{Deserialize, Serialize};

use crate::grid::GridMeta;
use crate::scalar::Real;

/// Intersections smaller than this (m²) count as no overlap.
pub const MIN_INTERSECTION_AREA: f64 = 1e-12;

/// Corner sign pattern `(along length, along width)` by corner index; the
/// order is counter-clockwise.
pub const CORNER_SIGNS: [(i8, i8); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox<T = f64> {
    pub center_e: T,
    pub center_n: T,
    pub width: T,
    pub length: T,
    pub orientation: T,
}

/// Aspect `w / l` and length of a rectangle, independent of pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape<T = f64> {
    pub aspect: T,
    pub length: T,
}

impl<T: Real> Shape<T> {
    pub fn new(aspect: T, length: T) -> Self {
        Shape { aspect, length }
    }

    pub fn from_dims(width: T, length: T) -> Self {
        Shape {
            aspect: width / length,
            length,
        }
    }

    #[inline]
    pub fn width(&self) -> T {
        self.aspect * self.length
    }

    pub fn is_valid(&self) -> bool {
        self.aspect > T::zero() && self.length > T::zero() && self.aspect.is_finite() && self.length.is_finite()
    }
}

impl<T: Real> OrientedBox<T> {
    /// Builds a box, normalizing the orientation into `[0, 2π)`.
    pub fn new(center_e: T, center_n: T, width: T, length: T, orientation: T) -> Self {
        OrientedBox {
            center_e,
            center_n,
            width,
            length,
            orientation: normalize_angle(orientation),
        }
    }

    pub fn from_shape(shape: Shape<T>, center_e: T, center_n: T, orientation: T) -> Self {
        Self::new(center_e, center_n, shape.width(), shape.length, orientation)
    }

    pub fn shape(&self) -> Shape<T> {
        Shape::from_dims(self.width, self.length)
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.center_e, self.center_n, self.width, self.length, self.orientation]
            .iter()
            .all(|v| v.is_finite());
        finite
            && self.width > T::zero()
            && self.length > T::zero()
            && self.orientation >= T::zero()
            && self.orientation < T::TAU()
    }

    #[inline]
    pub fn area(&self) -> T {
        self.width * self.length
    }

    /// Unit vectors along the length and width axes.
    #[inline]
    pub fn axes(&self) -> ((T, T), (T, T)) {
        let (s, c) = self.orientation.sin_cos();
        ((c, s), (-s, c))
    }

    /// Coordinates of a world point in the box frame (along length, along
    /// width).
    #[inline]
    pub fn to_local(&self, e: T, n: T) -> (T, T) {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (de, dn) = (e - self.center_e, n - self.center_n);
        (de * ux + dn * uy, de * vx + dn * vy)
    }

    pub fn corner(&self, index: usize) -> (T, T) {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (su, sv) = CORNER_SIGNS[index];
        let half_l = self.length * T::of(0.5 * su as f64);
        let half_w = self.width * T::of(0.5 * sv as f64);
        (
            self.center_e + half_l * ux + half_w * vx,
            self.center_n + half_l * uy + half_w * vy,
        )
    }

    /// Corners `center + R(φ)·(±l/2, ±w/2)` in counter-clockwise order.
    pub fn corners(&self) -> [(T, T); 4] {
        std::array::from_fn(|i| self.corner(i))
    }

    /// Closed point-in-rectangle test with a small absolute slack (m).
    pub fn contains(&self, e: T, n: T, slack: T) -> bool {
        let (u, v) = self.to_local(e, n);
        let half = T::of(0.5);
        u.abs() <= half * self.length + slack && v.abs() <= half * self.width + slack
    }

    /// Radius of the circumscribed circle.
    #[inline]
    pub fn circumradius(&self) -> T {
        T::of(0.5) * self.width.hypot(self.length)
    }

    pub fn cast<U: Real>(&self) -> OrientedBox<U> {
        OrientedBox {
            center_e: U::of(self.center_e.as_f64()),
            center_n: U::of(self.center_n.as_f64()),
            width: U::of(self.width.as_f64()),
            length: U::of(self.length.as_f64()),
            orientation: U::of(self.orientation.as_f64()),
        }
    }
}

/// Maps any finite angle into `[0, 2π)`.
pub fn normalize_angle<T: Real>(phi: T) -> T {
    let tau = T::TAU();
    let mut r = phi % tau;
    if r < T::zero() {
        r = r + tau;
    }
    // `r + tau` can round up to exactly tau for tiny negative inputs.
    if r >= tau {
        r = T::zero();
    }
    r
}

/// Signed difference `a − b` wrapped into `(−π, π]`.
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    let (pi, tau) = (T::PI(), T::TAU());
    let mut d = (a - b) % tau;
    if d > pi {
        d = d - tau;
    } else if d <= -pi {
        d = d + tau;
    }
    d
}

/// Shoelace area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area<T: Real>(points: &[(T, T)]) -> T {
    let n = points.len();
    if n < 3 {
        return T::zero();
    }
    let mut twice = T::zero();
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        twice = twice + (x0 * y1 - x1 * y0);
    }
    twice * T::of(0.5)
}

/// Clips a convex polygon to the left half-plane of the directed edge
/// `a → b`. Points within `tol` of the line count as inside.
fn clip_half_plane<T: Real>(poly: &[(T, T)], a: (T, T), b: (T, T), tol: T, out: &mut Vec<(T, T)>) {
    out.clear();
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let side = |p: (T, T)| ex * (p.1 - a.1) - ey * (p.0 - a.0);
    let n = poly.len();
    for i in 0..n {
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let (dc, dn) = (side(cur), side(next));
        let (cur_in, next_in) = (dc >= -tol, dn >= -tol);
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            // Strictly on opposite sides beyond the tolerance band on at
            // least one end, so the denominator is non-zero.
            let t = dc / (dc - dn);
            if t > T::zero() && t < T::one() {
                out.push((cur.0 + t * (next.0 - cur.0), cur.1 + t * (next.1 - cur.1)));
            }
        }
    }
}

/// Area of the intersection of two oriented rectangles.
pub fn intersection_area<T: Real>(a: &OrientedBox<T>, b: &OrientedBox<T>) -> T {
    let dist = (a.center_e - b.center_e).hypot(a.center_n - b.center_n);
    if dist > a.circumradius() + b.circumradius() {
        return T::zero();
    }
    let scale = a.length.max(a.width).max(b.length).max(b.width);
    let tol = T::epsilon() * T::of(16.0) * scale * scale;

    let mut poly: Vec<(T, T)> = a.corners().to_vec();
    let mut scratch = Vec::with_capacity(8);
    let clip = b.corners();
    for i in 0..4 {
        clip_half_plane(&poly, clip[i], clip[(i + 1) % 4], tol, &mut scratch);
        std::mem::swap(&mut poly, &mut scratch);
        if poly.len() < 3 {
            return T::zero();
        }
    }
    polygon_area(&poly).max(T::zero())
}

/// Rotated intersection-over-union in `[0, 1]`.
pub fn rotated_iou<T: Real>(a: &OrientedBox<T>, b: &OrientedBox<T>) -> T {
    if a == b {
        return T::one();
    }
    let inter = intersection_area(a, b);
    if inter < T::of(MIN_INTERSECTION_AREA) {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one()).max(T::zero())
}

/// Cells whose centers lie inside or on the boundary of `bx`, as ascending
/// row-major indices.
pub fn cells_in_box<T: Real>(bx: &OrientedBox<T>, meta: &GridMeta) -> Vec<usize> {
    let bx: OrientedBox<f64> = bx.cast();
    let slack = 1e-9 * meta.cell_size;
    let corners = bx.corners();
    let (mut lo_e, mut hi_e, mut lo_n, mut hi_n) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (e, n) in corners {
        lo_e = lo_e.min(e);
        hi_e = hi_e.max(e);
        lo_n = lo_n.min(n);
        hi_n = hi_n.max(n);
    }
    let (x0, y0) = meta.to_cell_coords(lo_e, lo_n);
    let (x1, y1) = meta.to_cell_coords(hi_e, hi_n);
    // Cell c has its center at c + 0.5.
    let c_lo = (x0 - 0.5).ceil().max(0.0);
    let r_lo = (y0 - 0.5).ceil().max(0.0);
    let c_hi = (x1 - 0.5).floor().min(meta.width_cells as f64 - 1.0);
    let r_hi = (y1 - 0.5).floor().min(meta.height_cells as f64 - 1.0);
    if c_hi < c_lo || r_hi < r_lo {
        return Vec::new();
    }
    let mut cells = Vec::new();
    for row in r_lo as usize..=r_hi as usize {
        for col in c_lo as usize..=c_hi as usize {
            let (e, n) = meta.cell_center(col, row);
            if bx.contains(e, n, slack) {
                cells.push(meta.index(col, row));
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn bx(e: f64, n: f64, w: f64, l: f64, phi: f64) -> OrientedBox {
        OrientedBox::new(e, n, w, l, phi)
    }

    fn sorted_points(mut p: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        for q in p.iter_mut() {
            q.0 = (q.0 * 1e9).round() / 1e9 + 0.0;
            q.1 = (q.1 * 1e9).round() / 1e9 + 0.0;
        }
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p
    }

    #[test]
    fn axis_aligned_corners() {
        let c = bx(0.0, 0.0, 1.0, 2.0, 0.0).corners();
        assert_eq!(c, [(1.0, 0.5), (-1.0, 0.5), (-1.0, -0.5), (1.0, -0.5)]);
        assert!((polygon_area(&c) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn quarter_turn_corners() {
        let c = bx(0.0, 0.0, 1.0, 2.0, FRAC_PI_2).corners();
        let want = vec![(-0.5, 1.0), (-0.5, -1.0), (0.5, -1.0), (0.5, 1.0)];
        assert_eq!(sorted_points(c.to_vec()), sorted_points(want));
        assert!(polygon_area(&c) > 0.0, "counter-clockwise");
    }

    #[test]
    fn half_turn_has_same_point_set() {
        let a = bx(3.0, -1.0, 1.0, 2.0, 0.0).corners();
        let b = bx(3.0, -1.0, 1.0, 2.0, PI).corners();
        assert_eq!(sorted_points(a.to_vec()), sorted_points(b.to_vec()));
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 4.5, 0.3);
        assert_eq!(rotated_iou(&a, &a), 1.0);
        assert_eq!(rotated_iou(&a, &bx(100.0, 0.0, 2.0, 4.5, 0.3)), 0.0);

        let s = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        let shifted = bx(0.5, 0.0, 1.0, 1.0, 0.0);
        assert!((rotated_iou(&s, &shifted) - 1.0 / 3.0).abs() < 1e-12);
        let turned = bx(0.0, 0.0, 1.0, 1.0, FRAC_PI_2);
        assert!((rotated_iou(&s, &turned) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_square_overlap_matches_octagon_area() {
        // Unit square vs the same square turned 45°: the overlap is a
        // regular octagon with area 2(√2 − 1).
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = bx(0.0, 0.0, 1.0, 1.0, PI / 4.0);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        let want = inter / (2.0 - inter);
        assert!((rotated_iou(&a, &b) - want).abs() < 1e-12);
    }

    #[test]
    fn angle_diff_examples() {
        assert_eq!(angle_diff(0.0, 0.0), 0.0);
        assert!((angle_diff(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert_eq!(angle_diff(PI, 0.0), PI);
        assert_eq!(angle_diff(0.0, PI), PI);
        assert!((angle_diff(-0.1f64, 0.1) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(TAU), 0.0);
        assert!((normalize_angle(-FRAC_PI_2) - 1.5 * PI).abs() < 1e-12);
        assert_eq!(normalize_angle(-1e-300), 0.0);
    }

    #[test]
    fn single_cell_box() {
        let meta = GridMeta::new(20, 20, 0.15);
        let (e, n) = meta.cell_center(4, 7);
        let cells = cells_in_box(&bx(e, n, 0.1, 0.1, 0.0), &meta);
        assert_eq!(cells, vec![meta.index(4, 7)]);
    }

    #[test]
    fn box_west_of_grid_is_empty() {
        let meta = GridMeta::new(20, 20, 0.15);
        assert!(cells_in_box(&bx(-10.0, 1.0, 2.0, 4.0, 0.0), &meta).is_empty());
    }

    /// Independent point-in-convex-polygon test using edge cross products.
    fn brute_force_cells(b: &OrientedBox, meta: &GridMeta) -> Vec<usize> {
        let c = b.corners();
        (0..meta.n_cells())
            .filter(|&i| {
                let (e, n) = meta.index_center(i);
                (0..4).all(|k| {
                    let (ax, ay) = c[k];
                    let (bx, by) = c[(k + 1) % 4];
                    (bx - ax) * (n - ay) - (by - ay) * (e - ax) >= -1e-12
                })
            })
            .collect()
    }

    #[test]
    fn axis_aligned_three_by_two() {
        let meta = GridMeta::new(16, 16, 1.0);
        // Centers at 3.5, 4.5, 5.5 east and 7.5, 8.5 north.
        let b = bx(4.5, 8.0, 1.6, 2.6, 0.0);
        let cells = cells_in_box(&b, &meta);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells, brute_force_cells(&b, &meta));
    }

    /// Monte-Carlo membership estimate of IoU over the joint bounding square.
    fn monte_carlo_iou(a: &OrientedBox, b: &OrientedBox, samples: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = a.corners().into_iter().chain(b.corners()).collect();
        let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        let (mut inter, mut union) = (0usize, 0usize);
        for _ in 0..samples {
            let (x, y) = (rng.random_range(x0..x1), rng.random_range(y0..y1));
            let (ia, ib) = (a.contains(x, y, 0.0), b.contains(x, y, 0.0));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn offset_squares_agree_with_monte_carlo() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = bx(0.5, 0.0, 1.0, 1.0, 0.0);
        let mc = monte_carlo_iou(&a, &b, 1_000_000, 3);
        assert!((mc - 1.0 / 3.0).abs() < 0.01);
        assert!((rotated_iou(&a, &b) - mc).abs() < 0.01);
    }

    #[test]
    fn f32_and_f64_agree() {
        let a = bx(1.0, 2.0, 2.0, 4.5, 0.4);
        let b = bx(1.7, 2.3, 1.8, 4.0, 0.9);
        let d = rotated_iou(&a, &b);
        let s = rotated_iou(&a.cast::<f32>(), &b.cast::<f32>());
        assert!((d - s as f64).abs() < 1e-5);
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox> {
        (-5.0f64..5.0, -5.0f64..5.0, 0.2f64..4.0, 0.2f64..6.0, 0.0f64..TAU)
            .prop_map(|(e, n, w, l, p)| bx(e, n, w, l, p))
    }

    fn aligned_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
        let span = |c: f64, h: f64| (c - h / 2.0, c + h / 2.0);
        let (ax0, ax1) = span(a.center_e, a.length);
        let (ay0, ay1) = span(a.center_n, a.width);
        let (bx0, bx1) = span(b.center_e, b.length);
        let (by0, by1) = span(b.center_n, b.width);
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
        let i = iw * ih;
        if i < MIN_INTERSECTION_AREA {
            return 0.0;
        }
        i / (a.area() + b.area() - i)
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert!((rotated_iou(&a, &b) - rotated_iou(&b, &a)).abs() < 1e-12);
        }

        #[test]
        fn iou_is_rigid_invariant(a in arb_box(), b in arb_box(), te in -50.0f64..50.0, tn in -50.0f64..50.0, rot in 0.0f64..TAU) {
            let (s, c) = rot.sin_cos();
            let move_box = |x: &OrientedBox| {
                let e = c * x.center_e - s * x.center_n + te;
                let n = s * x.center_e + c * x.center_n + tn;
                bx(e, n, x.width, x.length, x.orientation + rot)
            };
            let before = rotated_iou(&a, &b);
            let after = rotated_iou(&move_box(&a), &move_box(&b));
            prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
        }

        #[test]
        fn axis_aligned_matches_closed_form(
            ae in -3.0f64..3.0, an in -3.0f64..3.0, aw in 0.2f64..3.0, al in 0.2f64..3.0,
            be in -3.0f64..3.0, bn in -3.0f64..3.0, bw in 0.2f64..3.0, bl in 0.2f64..3.0,
        ) {
            let a = bx(ae, an, aw, al, 0.0);
            let b = bx(be, bn, bw, bl, 0.0);
            prop_assert!((rotated_iou(&a, &b) - aligned_iou(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn contained_box_iou_is_area_ratio(a in arb_box(), s in 0.05f64..1.0) {
            let inner = bx(a.center_e, a.center_n, a.width * s, a.length * s, a.orientation);
            let want = inner.area() / a.area();
            prop_assert!((rotated_iou(&a, &inner) - want).abs() < 1e-9);
        }

        #[test]
        fn cells_match_brute_force(e in -1.0f64..11.0, n in -1.0f64..11.0, w in 0.1f64..4.0, l in 0.1f64..6.0, p in 0.0f64..TAU, size in 3usize..=64) {
            let meta = GridMeta::new(size, size, 10.0 / size as f64);
            let b = bx(e, n, w, l, p);
            prop_assert_eq!(cells_in_box(&b, &meta), brute_force_cells(&b, &meta));
        }

        #[test]
        fn angle_diff_range(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let d = angle_diff(a, b);
            prop_assert!(d > -PI && d <= PI);
            prop_assert!(((a - b - d) / TAU - ((a - b - d) / TAU).round()).abs() < 1e-9);
        }
    }
}

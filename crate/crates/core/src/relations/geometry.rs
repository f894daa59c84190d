use crate::model::Aabb3;

fn overlap_1d(a_min: f64, a_max: f64, b_min: f64, b_max: f64) -> f64 {
    (a_max.min(b_max) - a_min.max(b_min)).max(0.0)
}

/// Fraction of `a`'s horizontal footprint covered by `b`'s footprint.
///
/// A zero-area footprint yields 0.
pub fn footprint_overlap(a: &Aabb3, b: &Aabb3) -> f64 {
    let area = a.footprint_area();
    if area <= 0.0 {
        return 0.0;
    }
    let ix = overlap_1d(a.min.x, a.max.x, b.min.x, b.max.x);
    let iy = overlap_1d(a.min.y, a.max.y, b.min.y, b.max.y);
    (ix * iy / area).min(1.0)
}

/// Fraction of `a`'s volume lying inside `b`.
///
/// A zero-volume `a` counts as fully inside when its centroid lies in `b`.
pub fn containment_ratio(a: &Aabb3, b: &Aabb3) -> f64 {
    let vol = a.volume();
    if vol <= 0.0 {
        return if b.contains_point(&a.center()) { 1.0 } else { 0.0 };
    }
    let inter: f64 = (0..3)
        .map(|i| overlap_1d(a.min[i], a.max[i], b.min[i], b.max[i]))
        .product();
    (inter / vol).min(1.0)
}

/// Whether the xy projection of `p` lies in `b`'s footprint (inclusive).
pub fn projects_within_footprint(p: &crate::model::Vec3, b: &Aabb3) -> bool {
    p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y
}

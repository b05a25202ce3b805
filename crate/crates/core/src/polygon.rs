//! Convex-polygon helpers: clipping against half-planes of a linear field,
//! area and centroid.

use crate::scalar::Scalar;

/// A polygon vertex carrying the value of a linear field at that point.
pub type Tagged<T> = ([T; 2], T);

/// Keeps the part of a convex polygon where the tagged linear field is
/// `>= level` (`keep_above`) or `<= level` (otherwise).
pub fn clip<T: Scalar>(poly: &[Tagged<T>], level: T, keep_above: bool) -> Vec<Tagged<T>> {
    let inside = |v: T| if keep_above { v >= level } else { v <= level };
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (p, vp) = poly[i];
        let (q, vq) = poly[(i + 1) % n];
        let (ip, iq) = (inside(vp), inside(vq));
        if ip {
            out.push((p, vp));
        }
        if ip != iq {
            let t = (level - vp) / (vq - vp);
            let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
            out.push((x, level));
        }
    }
    out
}

/// Area and centroid of a simple polygon (counter-clockwise or clockwise).
/// Degenerate polygons return zero area and the vertex mean.
pub fn area_centroid<T: Scalar>(poly: &[Tagged<T>]) -> (T, [T; 2]) {
    let n = poly.len();
    if n < 3 {
        return (T::zero(), vertex_mean(poly));
    }
    let origin = poly[0].0;
    let mut a2 = T::zero();
    let mut cx = T::zero();
    let mut cy = T::zero();
    for i in 0..n {
        let p = poly[i].0;
        let q = poly[(i + 1) % n].0;
        let (px, py) = (p[0] - origin[0], p[1] - origin[1]);
        let (qx, qy) = (q[0] - origin[0], q[1] - origin[1]);
        let cross = px * qy - qx * py;
        a2 += cross;
        cx += (px + qx) * cross;
        cy += (py + qy) * cross;
    }
    if a2 == T::zero() {
        return (T::zero(), vertex_mean(poly));
    }
    let six = T::lit(3.0) * a2;
    (
        (a2 / T::lit(2.0)).abs(),
        [origin[0] + cx / six, origin[1] + cy / six],
    )
}

pub fn vertex_mean<T: Scalar>(poly: &[Tagged<T>]) -> [T; 2] {
    if poly.is_empty() {
        return [T::nan(), T::nan()];
    }
    let n = T::from_usize_lossy(poly.len());
    let sx: T = poly.iter().map(|v| v.0[0]).sum();
    let sy: T = poly.iter().map(|v| v.0[1]).sum();
    [sx / n, sy / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> Vec<Tagged<f64>> {
        // H = x on the unit right triangle
        vec![([0.0, 0.0], 0.0), ([1.0, 0.0], 1.0), ([0.0, 1.0], 0.0)]
    }

    #[test]
    fn area_and_centroid_of_triangle() {
        let (a, c) = area_centroid(&tri());
        assert!((a - 0.5).abs() < 1e-15);
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-15 && (c[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn clip_keeps_expected_fraction() {
        // {x >= 0.5} in the right triangle has area 1/8
        let above = clip(&tri(), 0.5, true);
        let (a, _) = area_centroid(&above);
        assert!((a - 0.125).abs() < 1e-15);
        let below = clip(&tri(), 0.5, false);
        let (b, _) = area_centroid(&below);
        assert!((a + b - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clip_outside_is_empty() {
        assert!(clip(&tri(), 2.0, true).is_empty());
        assert_eq!(area_centroid::<f64>(&[]).0, 0.0);
    }
}

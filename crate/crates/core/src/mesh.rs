//! Tensor grids and the triangulation of the `(k_r, r)` plane.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform one-dimensional cell grid on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RectGrid<T> {
    lo: T,
    hi: T,
    edges: Vec<T>,
    centers: Vec<T>,
    widths: Vec<T>,
}

impl<T: Scalar> RectGrid<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(
                "grid",
                format!("non-finite bounds ({lo}, {hi})"),
            ));
        }
        if lo >= hi {
            return Err(Error::config(
                "grid",
                format!("inverted bounds ({lo}, {hi})"),
            ));
        }
        if n == 0 {
            return Err(Error::config("grid", "cell count must be at least 1"));
        }
        let nf = T::from_usize_lossy(n);
        let mut edges: Vec<T> = (0..=n)
            .map(|i| lo + (hi - lo) * T::from_usize_lossy(i) / nf)
            .collect();
        edges[0] = lo;
        edges[n] = hi;
        // Widths are taken from the stored edges so that differences of
        // edge-sampled fields divided by widths are exact.
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let centers = edges
            .windows(2)
            .map(|w| (w[0] + w[1]) / T::lit(2.0))
            .collect();
        Ok(RectGrid {
            lo,
            hi,
            edges,
            centers,
            widths,
        })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn widths(&self) -> &[T] {
        &self.widths
    }

    pub fn length(&self) -> T {
        self.hi - self.lo
    }

    /// Index of the cell containing `x`, clamping points on or outside the
    /// boundary to the first/last cell.
    pub fn locate(&self, x: T) -> usize {
        let n = self.len();
        let t = (x - self.lo) / (self.hi - self.lo) * T::from_usize_lossy(n);
        let idx = t.floor().to_f64_lossy();
        if !(idx > 0.0) {
            0
        } else {
            (idx as usize).min(n - 1)
        }
    }
}

/// Triangulation of a rectangle in the `(k_r, r)` plane, two triangles per
/// grid rectangle split along the lower-left to upper-right diagonal.
///
/// Vertex `(a, b)` (column `a` along `k_r`, row `b` along `r`) has index
/// `b * (n_kr + 1) + a`; rectangle `(a, b)` owns triangles `2 * (b * n_kr + a)`
/// (below the diagonal) and `2 * (b * n_kr + a) + 1` (above it).
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T> {
    kr: RectGrid<T>,
    r: RectGrid<T>,
    vertices: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<T>,
    neighbors: Vec<Vec<usize>>,
}

impl<T: Scalar> TriMesh<T> {
    pub fn new(kr: RectGrid<T>, r: RectGrid<T>) -> Self {
        let (nk, nr) = (kr.len(), r.len());
        let mut vertices = Vec::with_capacity((nk + 1) * (nr + 1));
        for b in 0..=nr {
            for a in 0..=nk {
                vertices.push([kr.edges()[a], r.edges()[b]]);
            }
        }
        let vid = |a: usize, b: usize| b * (nk + 1) + a;
        let mut triangles = Vec::with_capacity(2 * nk * nr);
        for b in 0..nr {
            for a in 0..nk {
                let (v00, v10, v01, v11) =
                    (vid(a, b), vid(a + 1, b), vid(a, b + 1), vid(a + 1, b + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let areas = triangles
            .iter()
            .map(|t| signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
            .collect();

        let mut incident = vec![Vec::new(); vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                incident[v].push(t);
            }
        }
        let neighbors = triangles
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                let mut ns: Vec<usize> = tri
                    .iter()
                    .flat_map(|&v| incident[v].iter().copied())
                    .filter(|&s| s != t)
                    .collect();
                ns.sort_unstable();
                ns.dedup();
                ns
            })
            .collect();

        TriMesh {
            kr,
            r,
            vertices,
            triangles,
            areas,
            neighbors,
        }
    }

    pub fn kr_grid(&self) -> &RectGrid<T> {
        &self.kr
    }

    pub fn r_grid(&self) -> &RectGrid<T> {
        &self.r
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn areas(&self) -> &[T] {
        &self.areas
    }

    /// Triangles sharing at least one vertex with `t`, ascending.
    pub fn neighbors(&self, t: usize) -> &[usize] {
        &self.neighbors[t]
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn total_area(&self) -> T {
        self.kr.length() * self.r.length()
    }

    pub fn corners(&self, t: usize) -> [[T; 2]; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    pub fn centroid(&self, t: usize) -> [T; 2] {
        let c = self.corners(t);
        let three = T::lit(3.0);
        [
            (c[0][0] + c[1][0] + c[2][0]) / three,
            (c[0][1] + c[1][1] + c[2][1]) / three,
        ]
    }

    /// True when the vertex lies on `k_r = lo` or `k_r = hi`.
    pub fn on_kr_boundary(&self, v: usize) -> bool {
        let a = v % (self.kr.len() + 1);
        a == 0 || a == self.kr.len()
    }

    /// Vertices shared by triangles `s` and `t`.
    pub fn shared_vertices(&self, s: usize, t: usize) -> Vec<usize> {
        let ts = self.triangles[t];
        self.triangles[s]
            .iter()
            .copied()
            .filter(|v| ts.contains(v))
            .collect()
    }

    /// Triangle across the edge `(v0, v1)` of triangle `t`, if any.
    pub fn across_edge(&self, t: usize, v0: usize, v1: usize) -> Option<usize> {
        self.neighbors[t].iter().copied().find(|&s| {
            let tri = self.triangles[s];
            tri.contains(&v0) && tri.contains(&v1)
        })
    }

    /// Triangle containing the point, or `None` outside the rectangle.
    pub fn locate(&self, k: T, r: T) -> Option<usize> {
        if k < self.kr.lo() || k > self.kr.hi() || r < self.r.lo() || r > self.r.hi() {
            return None;
        }
        let a = self.kr.locate(k);
        let b = self.r.locate(r);
        let s = (k - self.kr.edges()[a]) / self.kr.widths()[a];
        let u = (r - self.r.edges()[b]) / self.r.widths()[b];
        let base = 2 * (b * self.kr.len() + a);
        Some(if u <= s { base } else { base + 1 })
    }
}

/// Counter-clockwise signed area of a triangle.
pub fn signed_area<T: Scalar>(p0: [T; 2], p1: [T; 2], p2: [T; 2]) -> T {
    ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])) / T::lit(2.0)
}

/// Barycentric coordinates of `p` with respect to the triangle `c`.
pub fn barycentric<T: Scalar>(c: &[[T; 2]; 3], p: [T; 2]) -> [T; 3] {
    let area = signed_area(c[0], c[1], c[2]);
    let l0 = signed_area(p, c[1], c[2]) / area;
    let l1 = signed_area(c[0], p, c[2]) / area;
    [l0, l1, T::one() - l0 - l1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_bisection() {
        let g = RectGrid::new(0.0, 1.0, 2).unwrap();
        assert_eq!(g.edges(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.centers(), &[0.25, 0.75]);
    }

    #[test]
    fn parallel_momentum_grid() {
        let g = RectGrid::<f64>::new(10.0, 25.0, 75).unwrap();
        assert_eq!(g.len(), 75);
        assert_eq!(g.edges()[0], 10.0);
        assert_eq!(g.edges()[75], 25.0);
        for w in g.widths() {
            assert!((w - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cell() {
        let g = RectGrid::new(0.0_f32, 1.0, 1).unwrap();
        assert_eq!(g.centers(), &[0.5]);
    }

    #[test]
    fn grid_errors() {
        assert!(RectGrid::new(0.0, 1.0, 0).is_err());
        assert!(RectGrid::new(1.0, 0.0, 3).is_err());
        assert!(RectGrid::new(f64::NAN, 1.0, 3).is_err());
        assert!(RectGrid::new(0.0, f64::INFINITY, 3).is_err());
    }

    #[test]
    fn single_rectangle_split() {
        let m = TriMesh::new(
            RectGrid::new(0.0, 1.0, 1).unwrap(),
            RectGrid::new(0.0, 1.0, 1).unwrap(),
        );
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.neighbors(0), &[1]);
        assert_eq!(m.neighbors(1), &[0]);
        // shared diagonal (0,0)-(1,1)
        let mut shared = m.shared_vertices(0, 1);
        shared.sort();
        assert_eq!(shared, vec![0, 3]);
        assert_eq!(m.areas(), &[0.5, 0.5]);
    }

    #[test]
    fn twenty_by_twenty_has_800_triangles() {
        let m = TriMesh::new(
            RectGrid::new(-1.0, 1.0, 20).unwrap(),
            RectGrid::new(0.0, 1.0, 20).unwrap(),
        );
        assert_eq!(m.n_triangles(), 800);
    }

    #[test]
    fn three_by_five_tiles() {
        let m = TriMesh::new(
            RectGrid::new(-1.0, 1.0, 3).unwrap(),
            RectGrid::new(0.0, 1.0, 5).unwrap(),
        );
        let s: f64 = m.areas().iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = TriMesh::new(
            RectGrid::new(-1.0, 1.0, 4).unwrap(),
            RectGrid::new(0.0, 1.0, 3).unwrap(),
        );
        for t in 0..m.n_triangles() {
            let c = m.centroid(t);
            assert_eq!(m.locate(c[0], c[1]), Some(t));
        }
        assert_eq!(m.locate(2.0, 0.5), None);
    }

    #[test]
    fn across_edge_is_edge_neighbor() {
        let m = TriMesh::new(
            RectGrid::new(0.0, 1.0, 2).unwrap(),
            RectGrid::new(0.0, 1.0, 2).unwrap(),
        );
        let tri = m.triangles()[0];
        let s = m.across_edge(0, tri[0], tri[2]).unwrap();
        assert_eq!(s, 1);
        assert_eq!(m.across_edge(0, tri[0], tri[1]), None);
    }

    proptest! {
        #[test]
        fn tiling_adjacency_and_determinism(nk in 1usize..50, nr in 1usize..50,
                                            lo in -3.0f64..0.0, w in 0.1f64..5.0) {
            let build = || TriMesh::new(
                RectGrid::new(lo, lo + w, nk).unwrap(),
                RectGrid::new(0.0, 1.0, nr).unwrap(),
            );
            let m = build();
            prop_assert_eq!(m.n_triangles(), 2 * nk * nr);
            let total: f64 = m.areas().iter().sum();
            prop_assert!(((total - w) / w).abs() < 1e-12);
            for t in 0..m.n_triangles() {
                prop_assert!(m.areas()[t] > 0.0);
                for &s in m.neighbors(t) {
                    prop_assert!(m.neighbors(s).contains(&t));
                    prop_assert!(!m.shared_vertices(s, t).is_empty());
                }
            }
            prop_assert_eq!(m, build());
        }
    }
}

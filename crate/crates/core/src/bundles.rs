//! Trajectory bundles: connected components of the level band
//! `{H_a < H < H_b}` on the triangulation, with the fraction of each cover
//! triangle that the band occupies.

use petgraph::unionfind::UnionFind;

use crate::error::{Error, Result};
use crate::hamiltonian::{PLHamiltonian, Stratification};
use crate::mesh::TriMesh;
use crate::polygon::{self, Tagged};
use crate::scalar::Scalar;

/// Open-interval test: does `[lo, hi]` meet `(a, b)`?
fn range_meets<T: Scalar>(lo: T, hi: T, (a, b): (T, T)) -> bool {
    hi > a && lo < b
}

fn min_max<T: Scalar>(vals: impl IntoIterator<Item = T>) -> (T, T) {
    vals.into_iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Triangle adjacency restricted to one open level interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMatrix {
    /// Triangles whose value range meets the interval.
    pub active: Vec<bool>,
    /// Connected pairs `(s, t)` with `s < t`, sorted.
    pub pairs: Vec<(usize, usize)>,
}

/// Two triangles are connected when the range of `H` over their shared vertex
/// or edge meets the open interval.
pub fn connection_matrix<T: Scalar>(
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    interval: (T, T),
) -> ConnectionMatrix {
    let nv = h.node_values();
    let active: Vec<bool> = (0..mesh.n_triangles())
        .map(|t| {
            let (lo, hi) = min_max(h.triangle_values(mesh, t));
            range_meets(lo, hi, interval)
        })
        .collect();
    let mut pairs = Vec::new();
    for s in 0..mesh.n_triangles() {
        if !active[s] {
            continue;
        }
        for &t in mesh.neighbors(s) {
            if t <= s || !active[t] {
                continue;
            }
            let shared = mesh.shared_vertices(s, t);
            let (lo, hi) = min_max(shared.iter().map(|&v| nv[v]));
            if range_meets(lo, hi, interval) {
                pairs.push((s, t));
            }
        }
    }
    ConnectionMatrix { active, pairs }
}

/// Connected components of the active triangles, each sorted ascending and
/// ordered by smallest triangle index.
pub fn connected_components(conn: &ConnectionMatrix) -> Vec<Vec<usize>> {
    let n = conn.active.len();
    let mut uf = UnionFind::<usize>::new(n);
    for &(s, t) in &conn.pairs {
        uf.union(s, t);
    }
    let mut slot = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for t in 0..n {
        if !conn.active[t] {
            continue;
        }
        let root = uf.find_mut(t);
        if slot[root] == usize::MAX {
            slot[root] = comps.len();
            comps.push(Vec::new());
        }
        comps[slot[root]].push(t);
    }
    comps
}

/// Fraction of a triangle's area where the linear interpolant of the nodal
/// values `h` exceeds `a`.
pub fn fraction_above<T: Scalar>(h: [T; 3], a: T) -> T {
    let mut s = h;
    s.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    let [h1, h2, h3] = s;
    if h1 == h3 {
        return if a < h1 { T::one() } else { T::zero() };
    }
    if a <= h1 {
        T::one()
    } else if a >= h3 {
        T::zero()
    } else if a >= h2 {
        ((h3 - a) / (h3 - h1)) * ((h3 - a) / (h3 - h2))
    } else {
        T::one() - ((a - h1) / (h2 - h1)) * ((a - h1) / (h3 - h1))
    }
}

/// Fraction of the triangle area lying in the band `a < H < b`.
pub fn proportion<T: Scalar>(h: [T; 3], (a, b): (T, T)) -> T {
    (fraction_above(h, a) - fraction_above(h, b)).max(T::zero())
}

/// Band fractions for every triangle in `cover`.
///
/// An endpoint strictly inside the range of `H` must not coincide with a node
/// value of a cover triangle.
pub fn proportions<T: Scalar>(
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    interval: (T, T),
    cover: &[usize],
) -> Result<Vec<T>> {
    let (a, b) = interval;
    let interior = |x: T| x > h.min_val() && x < h.max_val();
    cover
        .iter()
        .map(|&t| {
            let vals = h.triangle_values(mesh, t);
            for x in [a, b] {
                if interior(x) && vals.contains(&x) {
                    return Err(Error::Precondition(format!(
                        "level {x} coincides with a node value of triangle {t}"
                    )));
                }
            }
            Ok(proportion(vals, interval))
        })
        .collect()
}

/// Part of triangle `t` where `a <= H <= b`, with `H` tagged on each vertex.
pub fn band_polygon<T: Scalar>(
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    t: usize,
    (a, b): (T, T),
) -> Vec<Tagged<T>> {
    let c = mesh.corners(t);
    let v = h.triangle_values(mesh, t);
    let tri: Vec<Tagged<T>> = (0..3).map(|i| (c[i], v[i])).collect();
    let upper = polygon::clip(&tri, a, true);
    polygon::clip(&upper, b, false)
}

/// One connected component of a level band in one `(q_phi, k_z)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle<T> {
    /// Global index among retained bundles; assigned by the caller.
    pub id: usize,
    pub phz_cell: usize,
    pub phz_center: (T, T),
    pub phz_area: T,
    pub interval_index: usize,
    pub interval: (T, T),
    /// Sorted triangle indices.
    pub cover: Vec<usize>,
    /// Band fraction of each cover triangle.
    pub proportions: Vec<T>,
    /// Phase-space measure `sum_m r_m |V_m| * phz_area`.
    pub measure: T,
    /// Points of the in-band part of each cover triangle, used for sup-norm
    /// projection.
    pub samples: Vec<[T; 2]>,
    /// Largest interpolated frequency over the samples.
    pub omega_sup: T,
    pub touches_kr_boundary: bool,
}

/// Bundles of one `(q_phi, k_z)` cell split into retained ones and those
/// excluded for touching the `|k_r| = L` boundary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BundleFamily<T> {
    pub retained: Vec<TrajectoryBundle<T>>,
    pub excluded: Vec<TrajectoryBundle<T>>,
}

fn touches_boundary<T: Scalar>(
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    cover: &[usize],
    interval: (T, T),
) -> bool {
    let nv = h.node_values();
    cover.iter().any(|&t| {
        let on: Vec<T> = mesh.triangles()[t]
            .iter()
            .filter(|&&v| mesh.on_kr_boundary(v))
            .map(|&v| nv[v])
            .collect();
        if on.is_empty() {
            return false;
        }
        let (lo, hi) = min_max(on);
        range_meets(lo, hi, interval)
    })
}

/// Builds all bundles of one `(q_phi, k_z)` cell.
pub fn build_bundles<T: Scalar>(
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    strat: &Stratification<T>,
    phz_center: (T, T),
    phz_area: T,
) -> Result<BundleFamily<T>> {
    let mut family = BundleFamily::default();
    for (j, interval) in strat.intervals().enumerate() {
        let conn = connection_matrix(mesh, h, interval);
        for cover in connected_components(&conn) {
            let props = proportions(mesh, h, interval, &cover)?;
            let area: T = cover
                .iter()
                .zip(&props)
                .map(|(&t, &r)| r * mesh.areas()[t])
                .sum();
            let mut samples = Vec::new();
            let mut omega_sup = T::neg_infinity();
            for &t in &cover {
                let poly = band_polygon(mesh, h, t, interval);
                if poly.is_empty() {
                    continue;
                }
                samples.push(polygon::vertex_mean(&poly));
                for &(p, v) in &poly {
                    samples.push(p);
                    omega_sup = omega_sup.max(v);
                }
            }
            let touches = touches_boundary(mesh, h, &cover, interval);
            let bundle = TrajectoryBundle {
                id: 0,
                phz_cell: h.phz_cell(),
                phz_center,
                phz_area,
                interval_index: j,
                interval,
                cover,
                proportions: props,
                measure: area * phz_area,
                samples,
                omega_sup,
                touches_kr_boundary: touches,
            };
            if touches {
                family.excluded.push(bundle);
            } else {
                family.retained.push(bundle);
            }
        }
    }
    Ok(family)
}

/// Sup-norm projection `(Pi g)_b = sup over the bundle of g`, evaluated on the
/// stored sample points. `g` receives `(k_r, r, q_phi, k_z)`.
pub fn project_onto_bundles<T: Scalar, G>(g: G, bundles: &[TrajectoryBundle<T>]) -> Vec<T>
where
    G: Fn(T, T, T, T) -> T,
{
    bundles
        .iter()
        .map(|b| {
            let (q, kz) = b.phz_center;
            b.samples
                .iter()
                .map(|&[k, r]| g(k, r, q, kz))
                .fold(T::neg_infinity(), T::max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::RectGrid;
    use proptest::prelude::*;

    fn mesh(nk: usize, nr: usize) -> TriMesh<f64> {
        TriMesh::new(
            RectGrid::new(-1.0, 1.0, nk).unwrap(),
            RectGrid::new(0.0, 1.0, nr).unwrap(),
        )
    }

    fn field(m: &TriMesh<f64>, f: impl Fn(f64, f64) -> f64) -> PLHamiltonian<f64> {
        let v = m.vertices().iter().map(|&[k, r]| f(k, r)).collect();
        PLHamiltonian::from_node_values(0, v).unwrap()
    }

    #[test]
    fn fraction_examples() {
        assert_eq!(fraction_above([0.0, 1.0, 2.0], 0.0), 1.0);
        assert_eq!(fraction_above([0.0, 1.0, 2.0], 2.0), 0.0);
        // a = h2: (h3-a)^2/((h3-h1)(h3-h2)) = 1/2
        assert!((fraction_above([0.0f64, 1.0, 2.0], 1.0) - 0.5).abs() < 1e-15);
        assert!((fraction_above([2.0f64, 0.0, 1.0], 0.5) - (1.0 - 0.125)).abs() < 1e-15);
        assert_eq!(fraction_above([1.0, 1.0, 1.0], 0.5), 1.0);
        assert_eq!(fraction_above([1.0, 1.0, 1.0], 1.0), 0.0);
    }

    #[test]
    fn proportion_matches_clipped_area() {
        let m = mesh(3, 3);
        let h = field(&m, |k, r| 0.3 * k + 1.7 * r * r + 0.1 * k * r);
        for t in 0..m.n_triangles() {
            for iv in [(0.1, 0.4), (-0.2, 0.9), (0.55, 1.6)] {
                let poly = band_polygon(&m, &h, t, iv);
                let (a, _) = polygon::area_centroid(&poly);
                let r = proportion(h.triangle_values(&m, t), iv);
                assert!((r * m.areas()[t] - a).abs() < 1e-13, "t={t} {iv:?}");
            }
        }
    }

    #[test]
    fn ring_band_is_one_component_per_side() {
        // H = r gives horizontal bands spanning the whole k_r range
        let m = mesh(6, 6);
        let h = field(&m, |_, r| r);
        let s = crate::hamiltonian::stratify(&h, 3).unwrap();
        let fam = build_bundles(&m, &h, &s, (0.1, 0.1), 0.5).unwrap();
        assert!(fam.retained.is_empty());
        assert_eq!(fam.excluded.len(), 3);
        let total: f64 = fam.excluded.iter().map(|b| b.measure).sum();
        assert!((total - 2.0 * 0.5).abs() < 1e-13);
    }

    #[test]
    fn two_wells_give_two_components() {
        let m = mesh(20, 10);
        let h = field(&m, |k, r| {
            let a = (k + 0.5).powi(2) + (r - 0.5).powi(2);
            let b = (k - 0.5).powi(2) + (r - 0.5).powi(2);
            a.min(b)
        });
        let conn = connection_matrix(&m, &h, (0.0 - 1e-9, 0.05));
        let comps = connected_components(&conn);
        assert_eq!(comps.len(), 2);
        assert!(comps[0][0] < comps[1][0]);
        for c in &comps {
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn proportions_reject_interior_node_value() {
        let m = mesh(2, 2);
        let h = field(&m, |k, r| k + r);
        let v = h.node_values()[4];
        assert!(matches!(
            proportions(&m, &h, (v, h.max_val()), &[0, 1, 2]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn projection_of_constant_and_sup() {
        let m = mesh(8, 8);
        let h = field(&m, |k, r| k * k + r);
        let s = crate::hamiltonian::stratify(&h, 4).unwrap();
        let fam = build_bundles(&m, &h, &s, (0.2, 0.3), 1.0).unwrap();
        let all: Vec<_> = fam.retained.iter().chain(&fam.excluded).cloned().collect();
        let c = project_onto_bundles(|_, _, _, _| 2.5, &all);
        assert!(c.iter().all(|&x| x == 2.5));
        let kz = project_onto_bundles(|_, _, _, kz| kz, &all);
        assert!(kz.iter().all(|&x| x == 0.3));
        for b in &all {
            let hv = project_onto_bundles(
                |k, r, _, _| h.value_at(&m, k, r).unwrap(),
                std::slice::from_ref(b),
            )[0];
            assert!((hv - b.omega_sup).abs() < 1e-12);
            assert!(b.omega_sup <= b.interval.1 + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn bundle_measures_partition_the_cell(
            c in prop::collection::vec(-1.0f64..1.0, 6),
            n_s in 1usize..8,
        ) {
            let m = mesh(7, 5);
            let h = field(&m, |k, r| {
                c[0] * k + c[1] * r + c[2] * k * k + c[3] * k * r + c[4] * r * r
                    + 0.3 * (c[5] * 5.0 * k).sin()
            });
            prop_assume!(h.max_val() - h.min_val() > 1e-6);
            let s = crate::hamiltonian::stratify(&h, n_s).unwrap();
            let fam = build_bundles(&m, &h, &s, (0.0, 0.0), 1.0).unwrap();
            let total: f64 = fam.retained.iter().chain(&fam.excluded).map(|b| b.measure).sum();
            prop_assert!((total - m.total_area()).abs() < 1e-12);
            for b in fam.retained.iter().chain(&fam.excluded) {
                prop_assert!(b.proportions.iter().all(|&r| (0.0..=1.0 + 1e-15).contains(&r)));
                prop_assert!(b.cover.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn components_are_disjoint_within_interval(
            c in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let m = mesh(6, 6);
            let h = field(&m, |k, r| c[0] * k + c[1] * r + c[2] * (3.0 * k).cos() * c[3]);
            prop_assume!(h.max_val() - h.min_val() > 1e-6);
            let s = crate::hamiltonian::stratify(&h, 5).unwrap();
            for iv in s.intervals() {
                let comps = connected_components(&connection_matrix(&m, &h, iv));
                let mut seen = vec![false; m.n_triangles()];
                for comp in &comps {
                    for &t in comp {
                        prop_assert!(!seen[t]);
                        seen[t] = true;
                    }
                }
            }
        }
    }
}

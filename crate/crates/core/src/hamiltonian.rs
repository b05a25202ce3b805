//! Plasmon dispersion relation, its piecewise-linear interpolation on the
//! `(k_r, r)` triangulation, and the stratification of its range.

use crate::error::{Error, Result};
use crate::mesh::{barycentric, TriMesh};
use crate::scalar::Scalar;

/// Cylindrical wave-vector components at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector<T> {
    pub k_r: T,
    pub k_phi: T,
    pub k_z: T,
}

impl<T: Scalar> WaveVector<T> {
    /// Builds the physical wave vector from the canonical `q_phi = k_phi * r`.
    pub fn from_canonical(k_r: T, q_phi: T, k_z: T, r: T) -> Result<Self> {
        if !(r > T::zero()) {
            return Err(Error::Domain(format!(
                "k_phi = q_phi / r is undefined at r = {r}"
            )));
        }
        Ok(WaveVector {
            k_r,
            k_phi: q_phi / r,
            k_z,
        })
    }

    pub fn norm_sqr(&self) -> T {
        self.k_r * self.k_r + self.k_phi * self.k_phi + self.k_z * self.k_z
    }
}

/// Dispersion relation `omega(k; omega_pe(r), omega_ce(r))`.
///
/// Implementations must be pure; they are evaluated concurrently.
pub trait DispersionModel<T: Scalar>: Send + Sync {
    fn omega_pe(&self, r: T) -> T;

    fn omega_ce(&self, r: T) -> T;

    /// The wave frequency for a wave vector given the local frequencies.
    fn branch(&self, k: WaveVector<T>, omega_pe: T, omega_ce: T) -> T;

    fn omega(&self, k_r: T, q_phi: T, k_z: T, r: T) -> Result<T> {
        let k = WaveVector::from_canonical(k_r, q_phi, k_z, r)?;
        Ok(self.branch(k, self.omega_pe(r), self.omega_ce(r)))
    }
}

/// Radial electron-density shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityProfile {
    /// `n_e = n0 (1 - (r / R_max)^2)`.
    Parabolic,
    Uniform,
}

/// Default analytic branch `omega^2 = omega_pe^2(r) + |k|^2` (units `c = omega_0 = 1`)
/// with a uniform cyclotron frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ColdPlasmaDispersion<T> {
    pub profile: DensityProfile,
    /// Plasma frequency on the axis.
    pub omega_pe0: T,
    /// Cyclotron frequency of the uniform field.
    pub omega_ce0: T,
    pub r_max: T,
}

impl<T: Scalar> ColdPlasmaDispersion<T> {
    pub fn new(profile: DensityProfile, omega_pe0: T, omega_ce0: T, r_max: T) -> Self {
        ColdPlasmaDispersion {
            profile,
            omega_pe0,
            omega_ce0,
            r_max,
        }
    }
}

impl<T: Scalar> DispersionModel<T> for ColdPlasmaDispersion<T> {
    fn omega_pe(&self, r: T) -> T {
        match self.profile {
            DensityProfile::Uniform => self.omega_pe0,
            DensityProfile::Parabolic => {
                let x = r / self.r_max;
                self.omega_pe0 * (T::one() - x * x).max(T::zero()).sqrt()
            }
        }
    }

    fn omega_ce(&self, _r: T) -> T {
        self.omega_ce0
    }

    fn branch(&self, k: WaveVector<T>, omega_pe: T, _omega_ce: T) -> T {
        (omega_pe * omega_pe + k.norm_sqr()).sqrt()
    }
}

/// Continuous piecewise-linear Hamiltonian on a [`TriMesh`] for one
/// `(q_phi, k_z)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PLHamiltonian<T> {
    phz_cell: usize,
    node_values: Vec<T>,
    min_val: T,
    max_val: T,
}

impl<T: Scalar> PLHamiltonian<T> {
    pub fn from_node_values(phz_cell: usize, node_values: Vec<T>) -> Result<Self> {
        if node_values.is_empty() {
            return Err(Error::Precondition("no node values".into()));
        }
        if let Some(v) = node_values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite node value {v}")));
        }
        let min_val = node_values.iter().copied().fold(T::infinity(), T::min);
        let max_val = node_values.iter().copied().fold(T::neg_infinity(), T::max);
        Ok(PLHamiltonian {
            phz_cell,
            node_values,
            min_val,
            max_val,
        })
    }

    /// Nodal interpolation of `omega(., ., q_phi, k_z)` at the cell center.
    ///
    /// Vertices on the axis `r = 0`, where `k_phi` is undefined, take the value
    /// at half the height of the first triangle row.
    pub fn interpolate<M: DispersionModel<T> + ?Sized>(
        model: &M,
        mesh: &TriMesh<T>,
        phz_cell: usize,
        phz_center: (T, T),
    ) -> Result<Self> {
        let (q_phi, k_z) = phz_center;
        let r_axis = mesh.r_grid().widths()[0] / T::lit(2.0);
        let values = mesh
            .vertices()
            .iter()
            .map(|&[k_r, r]| {
                let r = if r > T::zero() { r } else { r_axis };
                model.omega(k_r, q_phi, k_z, r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_node_values(phz_cell, values)
    }

    pub fn phz_cell(&self) -> usize {
        self.phz_cell
    }

    pub fn node_values(&self) -> &[T] {
        &self.node_values
    }

    pub fn min_val(&self) -> T {
        self.min_val
    }

    pub fn max_val(&self) -> T {
        self.max_val
    }

    pub fn triangle_values(&self, mesh: &TriMesh<T>, t: usize) -> [T; 3] {
        let tri = mesh.triangles()[t];
        [
            self.node_values[tri[0]],
            self.node_values[tri[1]],
            self.node_values[tri[2]],
        ]
    }

    /// Interpolated value at a point inside triangle `t`.
    pub fn value_in(&self, mesh: &TriMesh<T>, t: usize, p: [T; 2]) -> T {
        let l = barycentric(&mesh.corners(t), p);
        let h = self.triangle_values(mesh, t);
        l[0] * h[0] + l[1] * h[1] + l[2] * h[2]
    }

    pub fn value_at(&self, mesh: &TriMesh<T>, k_r: T, r: T) -> Option<T> {
        mesh.locate(k_r, r)
            .map(|t| self.value_in(mesh, t, [k_r, r]))
    }

    /// Constant gradient `(dH/dk_r, dH/dr)` on triangle `t`.
    pub fn gradient(&self, mesh: &TriMesh<T>, t: usize) -> [T; 2] {
        let c = mesh.corners(t);
        let h = self.triangle_values(mesh, t);
        let (dx1, dy1) = (c[1][0] - c[0][0], c[1][1] - c[0][1]);
        let (dx2, dy2) = (c[2][0] - c[0][0], c[2][1] - c[0][1]);
        let (dh1, dh2) = (h[1] - h[0], h[2] - h[0]);
        let det = dx1 * dy2 - dx2 * dy1;
        [(dh1 * dy2 - dh2 * dy1) / det, (dx1 * dh2 - dx2 * dh1) / det]
    }

    /// Hamiltonian velocity `(dk_r/dt, dr/dt) = (-dH/dr, dH/dk_r)` on triangle `t`.
    pub fn velocity(&self, mesh: &TriMesh<T>, t: usize) -> [T; 2] {
        let g = self.gradient(mesh, t);
        [-g[1], g[0]]
    }
}

/// Levels `H_0 <= H_1 < ... < H_N` partitioning the range of a Hamiltonian.
/// Interior levels avoid every node value.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratification<T> {
    levels: Vec<T>,
}

impl<T: Scalar> Stratification<T> {
    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn n_intervals(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn interval(&self, j: usize) -> (T, T) {
        (self.levels[j], self.levels[j + 1])
    }

    pub fn intervals(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.levels.windows(2).map(|w| (w[0], w[1]))
    }
}

const MAX_NUDGE_DOUBLINGS: usize = 64;

/// Splits `[min_val, max_val]` into `n_s` uniform intervals, nudging any
/// interior level that coincides with a node value upwards.
pub fn stratify<T: Scalar>(h: &PLHamiltonian<T>, n_s: usize) -> Result<Stratification<T>> {
    if n_s == 0 {
        return Err(Error::config("grid.n_strata", "must be at least 1"));
    }
    let (lo, hi) = (h.min_val(), h.max_val());
    let range = hi - lo;
    if !(range > T::zero()) {
        return Err(Error::Degenerate(format!(
            "constant Hamiltonian (value {lo}) in phz cell {}",
            h.phz_cell()
        )));
    }
    let tol = T::lit(1e-12) * range;
    let nudge0 = T::lit(1e-9) * range;
    let mut sorted = h.node_values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite node values"));
    let collides = |x: T| {
        let idx = sorted.partition_point(|&v| v < x - tol);
        idx < sorted.len() && (sorted[idx] - x).abs() <= tol
    };

    let nf = T::from_usize_lossy(n_s);
    let mut levels = Vec::with_capacity(n_s + 1);
    levels.push(lo);
    for j in 1..n_s {
        let base = lo + range * T::from_usize_lossy(j) / nf;
        let mut level = base;
        let mut nudge = nudge0;
        let mut tries = 0;
        while collides(level) {
            if tries == MAX_NUDGE_DOUBLINGS {
                return Err(Error::Degenerate(format!(
                    "could not move level {base} off the node values"
                )));
            }
            level = base + nudge;
            nudge *= T::lit(2.0);
            tries += 1;
        }
        levels.push(level);
    }
    levels.push(hi);
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Degenerate(
            "stratification levels not increasing".into(),
        ));
    }
    Ok(Stratification { levels })
}

/// Result of following the interpolated Hamiltonian flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPoint<T> {
    pub position: [T; 2],
    pub triangle: usize,
    /// The trajectory left the meshed rectangle.
    pub exited: bool,
}

/// Advances a phase point along the exact flow of the piecewise-linear
/// Hamiltonian for `duration`: straight segments inside each triangle with
/// edge-crossing events between them.
pub fn advance_flow<T: Scalar>(
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    start: FlowPoint<T>,
    duration: T,
) -> FlowPoint<T> {
    const MAX_CROSSINGS: usize = 100_000;
    let mut pos = start.position;
    let mut tri = start.triangle;
    let mut remaining = duration;
    let mut stalled = 0;
    for _ in 0..MAX_CROSSINGS {
        if !(remaining > T::zero()) {
            break;
        }
        let v = h.velocity(mesh, tri);
        if v[0] == T::zero() && v[1] == T::zero() {
            break;
        }
        let corners = mesh.corners(tri);
        let l0 = barycentric(&corners, pos);
        let l1 = barycentric(&corners, [pos[0] + v[0], pos[1] + v[1]]);
        let mut t_exit = T::infinity();
        let mut exit_vertex = 0;
        for i in 0..3 {
            let rate = l1[i] - l0[i];
            if rate < T::zero() {
                let t = l0[i].max(T::zero()) / -rate;
                if t < t_exit {
                    t_exit = t;
                    exit_vertex = i;
                }
            }
        }
        if t_exit >= remaining {
            pos = [pos[0] + v[0] * remaining, pos[1] + v[1] * remaining];
            break;
        }
        pos = [pos[0] + v[0] * t_exit, pos[1] + v[1] * t_exit];
        remaining -= t_exit;
        let tv = mesh.triangles()[tri];
        let next = mesh.across_edge(tri, tv[(exit_vertex + 1) % 3], tv[(exit_vertex + 2) % 3]);
        match next {
            None => {
                return FlowPoint {
                    position: pos,
                    triangle: tri,
                    exited: true,
                }
            }
            Some(s) => {
                if t_exit <= T::epsilon() * remaining {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                tri = s;
                if stalled > 3 {
                    // Passing exactly through a vertex: relocate just past it.
                    let eps = T::lit(1e-12) * (mesh.kr_grid().length() + mesh.r_grid().length());
                    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
                    let probe = [pos[0] + v[0] / speed * eps, pos[1] + v[1] / speed * eps];
                    match mesh.locate(probe[0], probe[1]) {
                        Some(s) => tri = s,
                        None => {
                            return FlowPoint {
                                position: pos,
                                triangle: tri,
                                exited: true,
                            }
                        }
                    }
                    stalled = 0;
                }
            }
        }
    }
    FlowPoint {
        position: pos,
        triangle: tri,
        exited: false,
    }
}

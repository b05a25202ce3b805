//! Discontinuous-Galerkin discretisation (piecewise constants) on the
//! cylindrical momentum grid `(p_par, p_perp)`.
//!
//! Cell `(i, j)` has flat index `i * n_perp + j`. Discrete gradients use the
//! forward neighbour as the face trace and vanish on the last row/column,
//! which closes the domain with zero flux.

use crate::error::{Error, Result};
use crate::mesh::RectGrid;
use crate::scalar::Scalar;

/// Tensor-product momentum grid with cylindrical volume weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PGrid<T> {
    par: RectGrid<T>,
    perp: RectGrid<T>,
    volume: Vec<T>,
    rho: Vec<T>,
}

impl<T: Scalar> PGrid<T> {
    pub fn new(par: RectGrid<T>, perp: RectGrid<T>) -> Result<Self> {
        if perp.lo() < T::zero() {
            return Err(Error::config("domain.p_perp_min", "must be non-negative"));
        }
        let two_pi = T::lit(2.0) * T::PI();
        let (np, nq) = (par.len(), perp.len());
        let mut volume = Vec::with_capacity(np * nq);
        for i in 0..np {
            for j in 0..nq {
                volume.push(par.widths()[i] * perp.widths()[j] * two_pi * perp.centers()[j]);
            }
        }
        let rho = (0..nq)
            .map(|j| {
                if j + 1 == nq {
                    T::zero()
                } else {
                    perp.edges()[j + 1] / perp.centers()[j]
                }
            })
            .collect();
        Ok(PGrid {
            par,
            perp,
            volume,
            rho,
        })
    }

    pub fn par(&self) -> &RectGrid<T> {
        &self.par
    }

    pub fn perp(&self) -> &RectGrid<T> {
        &self.perp
    }

    pub fn n_par(&self) -> usize {
        self.par.len()
    }

    pub fn n_perp(&self) -> usize {
        self.perp.len()
    }

    pub fn n_cells(&self) -> usize {
        self.volume.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.perp.len() + j
    }

    pub fn cell(&self, c: usize) -> (usize, usize) {
        (c / self.perp.len(), c % self.perp.len())
    }

    /// Cylindrical cell volume `2 pi p_perp dp_par dp_perp`.
    pub fn volume(&self, c: usize) -> T {
        self.volume[c]
    }

    pub fn volumes(&self) -> &[T] {
        &self.volume
    }

    /// Metric ratio `p_perp(upper face) / p_perp(center)`, zero on the last column.
    pub fn rho(&self, j: usize) -> T {
        self.rho[j]
    }

    pub fn center(&self, c: usize) -> (T, T) {
        let (i, j) = self.cell(c);
        (self.par.centers()[i], self.perp.centers()[j])
    }

    /// Lower-left corner, where the projection samples.
    pub fn corner(&self, c: usize) -> (T, T) {
        let (i, j) = self.cell(c);
        (self.par.edges()[i], self.perp.edges()[j])
    }

    /// Discrete gradient `(d_par g, d_perp g)` on cell `c` of a single slice.
    pub fn local_gradient(&self, g: &[T], c: usize) -> [T; 2] {
        let (i, j) = self.cell(c);
        let n = self.perp.len();
        let gp = if i + 1 < self.par.len() {
            (g[c + n] - g[c]) / self.par.widths()[i]
        } else {
            T::zero()
        };
        let gq = if j + 1 < n {
            self.rho[j] * (g[c + 1] - g[c]) / self.perp.widths()[j]
        } else {
            T::zero()
        };
        [gp, gq]
    }

    pub fn gradient(&self, g: &[T]) -> Vec<[T; 2]> {
        (0..self.n_cells())
            .map(|c| self.local_gradient(g, c))
            .collect()
    }

    /// Adds `(grad phi_m)_c . z` for every basis function `phi_m`, i.e. the
    /// transpose of [`Self::local_gradient`] applied to the cell vector `z`.
    pub fn scatter_transpose(&self, z: [T; 2], c: usize, out: &mut [T]) {
        let (i, j) = self.cell(c);
        let n = self.perp.len();
        if i + 1 < self.par.len() {
            let a = z[0] / self.par.widths()[i];
            out[c] -= a;
            out[c + n] += a;
        }
        if j + 1 < n {
            let b = self.rho[j] * z[1] / self.perp.widths()[j];
            out[c] -= b;
            out[c + 1] += b;
        }
    }

    /// `Pi_p`: samples `f(p_par, p_perp)` at each cell's lower-left corner.
    pub fn project_corners(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        (0..self.n_cells())
            .map(|c| {
                let (a, b) = self.corner(c);
                f(a, b)
            })
            .collect()
    }

    pub fn sample_centers(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        (0..self.n_cells())
            .map(|c| {
                let (a, b) = self.center(c);
                f(a, b)
            })
            .collect()
    }

    /// `L_h g = beta . grad_h g` on cell `c`.
    pub fn apply_lh(&self, g: &[T], beta: [T; 2], c: usize) -> T {
        let d = self.local_gradient(g, c);
        beta[0] * d[0] + beta[1] * d[1]
    }

    /// Gradient assembled face by face from the weak form with upwind
    /// direction `u = (1, 1)`: face traces taken from the forward cell,
    /// cylindrical face areas, plus the metric source of the `p_perp`
    /// divergence. Matches [`Self::gradient`] up to rounding.
    pub fn flux_gradient(&self, g: &[T]) -> Vec<[T; 2]> {
        let (np, nq) = (self.par.len(), self.perp.len());
        let two_pi = T::lit(2.0) * T::PI();
        let mut acc = vec![[T::zero(); 2]; self.n_cells()];
        // p_par faces: edge index e in 0..=np
        for e in 0..=np {
            for j in 0..nq {
                let area = two_pi * self.perp.centers()[j] * self.perp.widths()[j];
                let left = e.checked_sub(1).map(|i| self.index(i, j));
                let right = (e < np).then(|| self.index(e, j));
                let trace = match (left, right) {
                    (_, Some(r)) => g[r],
                    (Some(l), None) => g[l],
                    (None, None) => unreachable!(),
                };
                if let Some(l) = left {
                    acc[l][0] += trace * area;
                }
                if let Some(r) = right {
                    acc[r][0] -= trace * area;
                }
            }
        }
        // p_perp faces
        for i in 0..np {
            for e in 0..=nq {
                let area = two_pi * self.perp.edges()[e] * self.par.widths()[i];
                let below = e.checked_sub(1).map(|j| self.index(i, j));
                let above = (e < nq).then(|| self.index(i, e));
                let trace = match (below, above) {
                    (_, Some(a)) => g[a],
                    (Some(b), None) => g[b],
                    (None, None) => unreachable!(),
                };
                if let Some(b) = below {
                    acc[b][1] += trace * area;
                }
                if let Some(a) = above {
                    acc[a][1] -= trace * area;
                }
            }
        }
        for (c, a) in acc.iter_mut().enumerate() {
            let (i, j) = self.cell(c);
            // -int g d(p_perp)/p_perp dV
            a[1] -= g[c] * two_pi * self.par.widths()[i] * self.perp.widths()[j];
            let v = self.volume[c];
            a[0] /= v;
            a[1] /= v;
        }
        acc
    }

    /// Discrete divergence of a cell vector field, assembled face by face
    /// with traces from the backward cell: the negative adjoint of the
    /// gradient in the volume-weighted inner product.
    pub fn flux_divergence(&self, z: &[[T; 2]]) -> Vec<T> {
        let (np, nq) = (self.par.len(), self.perp.len());
        let two_pi = T::lit(2.0) * T::PI();
        let mut acc = vec![T::zero(); self.n_cells()];
        for e in 1..np {
            for j in 0..nq {
                let (l, r) = (self.index(e - 1, j), self.index(e, j));
                let area = two_pi * self.perp.centers()[j] * self.perp.widths()[j];
                let flux = z[l][0] * area;
                acc[l] += flux;
                acc[r] -= flux;
            }
        }
        for i in 0..np {
            for e in 1..nq {
                let (b, a) = (self.index(i, e - 1), self.index(i, e));
                let area = two_pi * self.perp.edges()[e] * self.par.widths()[i];
                let flux = z[b][1] * area;
                acc[b] += flux;
                acc[a] -= flux;
            }
        }
        acc.iter()
            .enumerate()
            .map(|(c, &a)| a / self.volume[c])
            .collect()
    }
}

/// Projected energy and momentum on the grid and the coefficients of the
/// resonance operator.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGeometry<T> {
    /// `Pi_p sqrt(1 + |p|^2)`.
    pub energy: Vec<T>,
    /// `Pi_p p_par`.
    pub p_z: Vec<T>,
    pub grad_energy: Vec<[T; 2]>,
    /// `|p| / p_perp` at cell centers.
    pub p_over_perp: Vec<T>,
}

impl<T: Scalar> MomentumGeometry<T> {
    pub fn new(grid: &PGrid<T>) -> Self {
        let energy = grid.project_corners(|a, b| (T::one() + a * a + b * b).sqrt());
        let p_z = grid.project_corners(|a, _| a);
        let grad_energy = grid.gradient(&energy);
        let p_over_perp = grid.sample_centers(|a, b| (a * a + b * b).sqrt() / b);
        MomentumGeometry {
            energy,
            p_z,
            grad_energy,
            p_over_perp,
        }
    }

    /// `beta = [k_z d_perp E, omega - k_z d_par E] |p| / p_perp` on cell `c`.
    pub fn beta(&self, c: usize, k_z: T, omega: T) -> [T; 2] {
        let g = self.grad_energy[c];
        let s = self.p_over_perp[c];
        [k_z * g[1] * s, (omega - k_z * g[0]) * s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, m: usize) -> PGrid<f64> {
        PGrid::new(
            RectGrid::new(10.0, 25.0, n).unwrap(),
            RectGrid::new(0.0, 15.0, m).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gradient_of_linear_p_par_is_one() {
        let g = grid(7, 5);
        let pz = g.project_corners(|a, _| a);
        for c in 0..g.n_cells() {
            let (i, _) = g.cell(c);
            let d = g.local_gradient(&pz, c);
            if i + 1 < g.n_par() {
                assert!((d[0] - 1.0).abs() < 1e-14);
            } else {
                assert_eq!(d[0], 0.0);
            }
            assert_eq!(d[1], 0.0);
        }
    }

    #[test]
    fn beta_of_quiet_cell_is_zero_without_wave() {
        let g = grid(4, 4);
        let geo = MomentumGeometry::new(&g);
        let b = geo.beta(0, 0.0, 0.0);
        assert_eq!(b, [0.0, 0.0]);
        let b = geo.beta(0, 0.0, 2.0);
        assert_eq!(b[0], 0.0);
        assert!(b[1] > 0.0);
    }

    #[test]
    fn apply_lh_is_beta_dot_gradient() {
        let g = grid(5, 6);
        let f: Vec<f64> = (0..g.n_cells()).map(|c| (c as f64 * 0.37).sin()).collect();
        let c = g.index(2, 3);
        let d = g.local_gradient(&f, c);
        assert_eq!(g.apply_lh(&f, [0.5, -2.0], c), 0.5 * d[0] - 2.0 * d[1]);
    }

    proptest! {
        #[test]
        fn flux_gradient_matches(vals in prop::collection::vec(-1.0f64..1.0, 6 * 5)) {
            let g = grid(6, 5);
            let a = g.gradient(&vals);
            let b = g.flux_gradient(&vals);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x[0] - y[0]).abs() < 1e-13);
                prop_assert!((x[1] - y[1]).abs() < 1e-13);
            }
        }

        #[test]
        fn divergence_is_negative_adjoint(
            vals in prop::collection::vec(-1.0f64..1.0, 20),
            zs in prop::collection::vec(-1.0f64..1.0, 40),
        ) {
            let g = grid(4, 5);
            let z: Vec<[f64; 2]> = zs.chunks(2).map(|c| [c[0], c[1]]).collect();
            let grad = g.gradient(&vals);
            let div = g.flux_divergence(&z);
            let lhs: f64 = (0..20).map(|c| g.volume(c) * (grad[c][0] * z[c][0] + grad[c][1] * z[c][1])).sum();
            let rhs: f64 = (0..20).map(|c| -g.volume(c) * vals[c] * div[c]).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
            // scatter_transpose is the unweighted transpose
            let mut out = vec![0.0; 20];
            for c in 0..20 {
                g.scatter_transpose([g.volume(c) * z[c][0], g.volume(c) * z[c][1]], c, &mut out);
            }
            for c in 0..20 {
                prop_assert!((out[c] + g.volume(c) * div[c]).abs() < 1e-9 * (1.0 + out[c].abs()));
            }
        }
    }
}

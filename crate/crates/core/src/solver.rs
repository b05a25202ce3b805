//! Coupled particle/wave evolution: `M df/dt = -A[N] f`, `dN_b/dt = N_b q_b(f)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::banded::BandedSym;
use crate::error::{Error, Result};
use crate::interaction::DiffusionOperator;
use crate::ldg::{MomentumGeometry, PGrid};
use crate::scalar::Scalar;

/// Which unknown(s) are treated implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    FullyExplicit,
    /// Particles implicit, waves explicit.
    SemiImplicitF,
    /// Waves implicit, particles explicit.
    SemiImplicitN,
    FullyImplicit,
}

impl SchemeChoice {
    pub const ALL: [SchemeChoice; 4] = [
        SchemeChoice::FullyExplicit,
        SchemeChoice::SemiImplicitF,
        SchemeChoice::SemiImplicitN,
        SchemeChoice::FullyImplicit,
    ];

    pub fn implicit_f(self) -> bool {
        matches!(
            self,
            SchemeChoice::SemiImplicitF | SchemeChoice::FullyImplicit
        )
    }

    pub fn implicit_n(self) -> bool {
        matches!(
            self,
            SchemeChoice::SemiImplicitN | SchemeChoice::FullyImplicit
        )
    }
}

impl fmt::Display for SchemeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeChoice::FullyExplicit => "explicit",
            SchemeChoice::SemiImplicitF => "semi_implicit_f",
            SchemeChoice::SemiImplicitN => "semi_implicit_n",
            SchemeChoice::FullyImplicit => "fully_implicit",
        })
    }
}

impl FromStr for SchemeChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SchemeChoice::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| {
                format!("unknown scheme {s:?}; expected explicit, semi_implicit_f, semi_implicit_n or fully_implicit")
            })
    }
}

/// Particle distribution over `(slice, p-cell)` and wave populations per
/// bundle at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState<T> {
    pub t: T,
    pub step: u64,
    pub f: Vec<T>,
    pub n: Vec<T>,
}

/// Safety factor inside the diffusion step-size bound.
pub const CFL_FACTOR: f64 = 0.45;

/// Fixed-point iteration limits for the fully implicit scheme.
pub const IMPLICIT_MAX_ITERS: usize = 50;
pub const IMPLICIT_TOL: f64 = 1e-12;

/// Gershgorin bound on the spectral radius of `M^-1 A` for the
/// forward-difference gradient, returned as `CFL_FACTOR * 2 / lambda`.
///
/// `cell(s, c)` yields `(w, m, D)` for slice `s` and momentum cell `c`:
/// the flux weight, the mass weight and the diffusion tensor.
/// `rho[j]` is the metric ratio of the `p_perp` difference in column `j`.
fn gershgorin_dt<T: Scalar>(
    d_par: &[T],
    d_perp: &[T],
    rho: &[T],
    n_slices: usize,
    cell: impl Fn(usize, usize) -> (T, T, [T; 3]) + Sync,
) -> T {
    let (np, nq) = (d_par.len(), d_perp.len());
    let two = T::lit(2.0);
    let lambda = (0..n_slices)
        .into_par_iter()
        .map(|s| {
            let mut alpha = vec![T::zero(); np * nq];
            let mut beta = vec![T::zero(); np * nq];
            for c in 0..np * nq {
                let (i, j) = (c / nq, c % nq);
                let (w, _, d) = cell(s, c);
                let (dp, dq) = (d_par[i], d_perp[j]);
                let rho = rho[j];
                let cross = rho * d[1].abs() / (dp * dq);
                if i + 1 < np {
                    alpha[c] = two * w * (d[0] / (dp * dp) + cross);
                }
                if j + 1 < nq {
                    beta[c] = two * w * (rho * rho * d[2] / (dq * dq) + cross);
                }
            }
            let mut lmax = T::zero();
            for c in 0..np * nq {
                let (i, j) = (c / nq, c % nq);
                let mut s_c = alpha[c] + beta[c];
                if i > 0 {
                    s_c += alpha[c - nq];
                }
                if j > 0 {
                    s_c += beta[c - 1];
                }
                let (_, m, _) = cell(s, c);
                lmax = lmax.max(s_c / m);
            }
            lmax
        })
        .reduce(T::zero, T::max);
    if lambda > T::zero() {
        T::lit(CFL_FACTOR) * two / lambda
    } else {
        T::infinity()
    }
}

/// Diffusion step-size bound for a Cartesian grid with unit weights:
/// `0.45 * 2 / max(...)` with `D11 / dp^2 + |D12| / (dp dq)` and
/// `D22 / dq^2 + |D12| / (dp dq)` summed over the faces of each cell.
pub fn dt_cfl_cartesian<T: Scalar>(
    n_par: usize,
    n_perp: usize,
    d_par: T,
    d_perp: T,
    field: &[[T; 3]],
) -> Result<T> {
    if field.len() != n_par * n_perp {
        return Err(Error::Precondition(
            "field size does not match the grid".into(),
        ));
    }
    let mut rho = vec![T::one(); n_perp];
    if let Some(last) = rho.last_mut() {
        *last = T::zero();
    }
    Ok(gershgorin_dt(
        &vec![d_par; n_par],
        &vec![d_perp; n_perp],
        &rho,
        1,
        |_, c| (T::one(), T::one(), field[c]),
    ))
}

/// `(1 - delta) / max_b(-q_b)` for an explicit wave update; infinite when no
/// population decays.
pub fn dt_positivity<T: Scalar>(rates: &[T], delta: T) -> T {
    let worst = rates.iter().fold(T::zero(), |m, &q| m.max(-q));
    if worst > T::zero() {
        (T::one() - delta) / worst
    } else {
        T::infinity()
    }
}

/// Step bound for the implicit wave update `N / (1 - dt q)`: keeps the
/// denominator above `delta` for growing modes and the damping factor above
/// `delta` for decaying ones.
pub fn dt_positivity_implicit<T: Scalar>(rates: &[T], delta: T) -> T {
    let grow = rates.iter().fold(T::zero(), |m, &q| m.max(q));
    let decay = rates.iter().fold(T::zero(), |m, &q| m.max(-q));
    let a = if grow > T::zero() {
        (T::one() - delta) / grow
    } else {
        T::infinity()
    };
    let b = if decay > T::zero() {
        (T::one() / delta - T::one()) / decay
    } else {
        T::infinity()
    };
    a.min(b)
}

/// Discretised system with its precomputed operator.
#[derive(Debug, Clone)]
pub struct Solver<T> {
    pgrid: PGrid<T>,
    geometry: MomentumGeometry<T>,
    op: DiffusionOperator<T>,
    slice_volume: Vec<T>,
    cell_mass: Vec<T>,
    measure: Vec<T>,
    omega: Vec<T>,
    k_z: Vec<T>,
}

impl<T: Scalar> Solver<T> {
    /// `slice_volume[xi]` is the spatial volume of radial slice `xi`;
    /// `measure`, `omega`, `k_z` are the bundle measures and projected
    /// frequency and axial wave number.
    pub fn new(
        pgrid: PGrid<T>,
        op: DiffusionOperator<T>,
        slice_volume: Vec<T>,
        measure: Vec<T>,
        omega: Vec<T>,
        k_z: Vec<T>,
    ) -> Result<Self> {
        let nb = op.n_bundles();
        if op.n_p() != pgrid.n_cells() || op.n_slices() != slice_volume.len() {
            return Err(Error::Precondition(
                "operator does not match the grids".into(),
            ));
        }
        if measure.len() != nb || omega.len() != nb || k_z.len() != nb {
            return Err(Error::Precondition("bundle data length mismatch".into()));
        }
        if let Some(b) = measure.iter().position(|&g| !(g > T::zero())) {
            return Err(Error::Degenerate(format!("bundle {b} has zero measure")));
        }
        let geometry = MomentumGeometry::new(&pgrid);
        let cell_mass = slice_volume
            .iter()
            .flat_map(|&v| pgrid.volumes().iter().map(move |&w| v * w))
            .collect();
        Ok(Solver {
            pgrid,
            geometry,
            op,
            slice_volume,
            cell_mass,
            measure,
            omega,
            k_z,
        })
    }

    pub fn pgrid(&self) -> &PGrid<T> {
        &self.pgrid
    }

    pub fn geometry(&self) -> &MomentumGeometry<T> {
        &self.geometry
    }

    pub fn operator(&self) -> &DiffusionOperator<T> {
        &self.op
    }

    pub fn n_slices(&self) -> usize {
        self.slice_volume.len()
    }

    pub fn n_bundles(&self) -> usize {
        self.measure.len()
    }

    pub fn slice_volume(&self) -> &[T] {
        &self.slice_volume
    }

    /// `M_c = V_xi * w_ij`.
    pub fn cell_mass(&self) -> &[T] {
        &self.cell_mass
    }

    pub fn measure(&self) -> &[T] {
        &self.measure
    }

    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    pub fn k_z(&self) -> &[T] {
        &self.k_z
    }

    /// `D_eff = sum_b N_b omega_b block_b` on every cell.
    pub fn diffusion_field(&self, n: &[T]) -> Vec<[T; 3]> {
        let coeff: Vec<T> = n.iter().zip(&self.omega).map(|(&a, &b)| a * b).collect();
        self.op.effective_field(&coeff)
    }

    pub fn gradients(&self, f: &[T]) -> Vec<[T; 2]> {
        let n_p = self.pgrid.n_cells();
        f.par_chunks(n_p)
            .flat_map_iter(|slice| self.pgrid.gradient(slice))
            .collect()
    }

    /// `A[N] f = G^T (w D_eff G f)` slice by slice.
    pub fn apply(&self, field: &[[T; 3]], f: &[T]) -> Vec<T> {
        let n_p = self.pgrid.n_cells();
        let mut out = vec![T::zero(); f.len()];
        out.par_chunks_mut(n_p)
            .zip(f.par_chunks(n_p))
            .zip(field.par_chunks(n_p))
            .for_each(|((o, fs), ds)| {
                for c in 0..n_p {
                    let d = ds[c];
                    if d == [T::zero(); 3] {
                        continue;
                    }
                    let g = self.pgrid.local_gradient(fs, c);
                    let w = self.pgrid.volume(c);
                    let z = [
                        w * (d[0] * g[0] + d[1] * g[1]),
                        w * (d[1] * g[0] + d[2] * g[1]),
                    ];
                    self.pgrid.scatter_transpose(z, c, o);
                }
            });
        out
    }

    /// Growth rates `q_b(f)`.
    pub fn rates(&self, f: &[T]) -> Vec<T> {
        let grad_f = self.gradients(f);
        self.op.reaction_rates(
            &grad_f,
            &self.geometry.grad_energy,
            self.pgrid.volumes(),
            &self.measure,
        )
    }

    /// Assembles `M + dt A` for one slice as a banded matrix.
    pub fn implicit_matrix(&self, field: &[[T; 3]], slice: usize, dt: T) -> BandedSym<T> {
        let pg = &self.pgrid;
        let n_p = pg.n_cells();
        let nq = pg.n_perp();
        let mut a = BandedSym::zeros(n_p, nq);
        let ds = &field[slice * n_p..(slice + 1) * n_p];
        for c in 0..n_p {
            a.add(c, c, self.cell_mass[slice * n_p + c]);
            let d = ds[c];
            if d == [T::zero(); 3] {
                continue;
            }
            let (i, j) = pg.cell(c);
            let mut nodes: Vec<(usize, T, T)> = Vec::with_capacity(3);
            let mut ac = T::zero();
            let mut bc = T::zero();
            if i + 1 < pg.n_par() {
                let h = T::one() / pg.par().widths()[i];
                ac -= h;
                nodes.push((c + nq, h, T::zero()));
            }
            if j + 1 < nq {
                let h = pg.rho(j) / pg.perp().widths()[j];
                bc -= h;
                nodes.push((c + 1, T::zero(), h));
            }
            nodes.push((c, ac, bc));
            let s = dt * pg.volume(c);
            for &(m, am, bm) in &nodes {
                for &(n, an, bn) in &nodes {
                    if n > m {
                        continue;
                    }
                    let v = s * (am * an * d[0] + (am * bn + bm * an) * d[1] + bm * bn * d[2]);
                    a.add(m, n, v);
                }
            }
        }
        a
    }

    /// Solves `(M + dt A) x = M f` slice by slice.
    pub fn solve_implicit(&self, field: &[[T; 3]], f: &[T], dt: T) -> Result<Vec<T>> {
        let n_p = self.pgrid.n_cells();
        let parts: Vec<Vec<T>> = (0..self.n_slices())
            .into_par_iter()
            .map(|s| {
                let rhs: Vec<T> = (0..n_p)
                    .map(|c| self.cell_mass[s * n_p + c] * f[s * n_p + c])
                    .collect();
                let chol = self.implicit_matrix(field, s, dt).factor()?;
                Ok(chol.solve(&rhs))
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }

    /// Largest stable explicit step for the particle update with this field.
    pub fn dt_cfl(&self, field: &[[T; 3]]) -> T {
        let n_p = self.pgrid.n_cells();
        let rho: Vec<T> = (0..self.pgrid.n_perp())
            .map(|j| self.pgrid.rho(j))
            .collect();
        gershgorin_dt(
            self.pgrid.par().widths(),
            self.pgrid.perp().widths(),
            &rho,
            self.n_slices(),
            |s, c| {
                (
                    self.pgrid.volume(c),
                    self.cell_mass[s * n_p + c],
                    field[s * n_p + c],
                )
            },
        )
    }

    fn particle_update(&self, f: &[T], field: &[[T; 3]], f_flux: &[T], dt: T) -> Vec<T> {
        let af = self.apply(field, f_flux);
        f.iter()
            .zip(&af)
            .zip(&self.cell_mass)
            .map(|((&x, &a), &m)| x - dt * a / m)
            .collect()
    }

    fn implicit_waves(&self, n: &[T], q: &[T], dt: T) -> Result<Vec<T>> {
        n.iter()
            .zip(q)
            .enumerate()
            .map(|(b, (&x, &r))| {
                let den = T::one() - dt * r;
                if den > T::zero() {
                    Ok(x / den)
                } else {
                    Err(Error::Numerical(format!(
                        "implicit wave update singular for bundle {b} (dt q = {})",
                        dt * r
                    )))
                }
            })
            .collect()
    }

    /// One step of size `dt`. The particle update always takes the
    /// conservative form `f + dt M^-1 (-A[N] f_flux)` with the same `N` and
    /// `f_flux` that drive the wave update, so discrete mass, momentum and
    /// energy balance exactly.
    pub fn step(&self, s: &SystemState<T>, dt: T, scheme: SchemeChoice) -> Result<SystemState<T>> {
        let (f, n) = match scheme {
            SchemeChoice::FullyExplicit => {
                let field = self.diffusion_field(&s.n);
                let q = self.rates(&s.f);
                let f = self.particle_update(&s.f, &field, &s.f, dt);
                let n =
                    s.n.iter()
                        .zip(&q)
                        .map(|(&x, &r)| x * (T::one() + dt * r))
                        .collect();
                (f, n)
            }
            SchemeChoice::SemiImplicitF => {
                let field = self.diffusion_field(&s.n);
                let fs = self.solve_implicit(&field, &s.f, dt)?;
                let q = self.rates(&fs);
                let f = self.particle_update(&s.f, &field, &fs, dt);
                let n =
                    s.n.iter()
                        .zip(&q)
                        .map(|(&x, &r)| x * (T::one() + dt * r))
                        .collect();
                (f, n)
            }
            SchemeChoice::SemiImplicitN => {
                let q = self.rates(&s.f);
                let n = self.implicit_waves(&s.n, &q, dt)?;
                let field = self.diffusion_field(&n);
                let f = self.particle_update(&s.f, &field, &s.f, dt);
                (f, n)
            }
            SchemeChoice::FullyImplicit => {
                let mut nk = s.n.clone();
                let mut converged = false;
                let mut fs = s.f.clone();
                for _ in 0..IMPLICIT_MAX_ITERS {
                    let field = self.diffusion_field(&nk);
                    fs = self.solve_implicit(&field, &s.f, dt)?;
                    let q = self.rates(&fs);
                    let next = self.implicit_waves(&s.n, &q, dt)?;
                    let scale = next.iter().fold(T::zero(), |m, x| m.max(x.abs()));
                    let change = next
                        .iter()
                        .zip(&nk)
                        .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
                    nk = next;
                    if change <= T::lit(IMPLICIT_TOL) * scale.max(T::min_positive_value()) {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Numerical(format!(
                        "implicit iteration did not converge in {IMPLICIT_MAX_ITERS} sweeps"
                    )));
                }
                let field = self.diffusion_field(&nk);
                let f = self.particle_update(&s.f, &field, &fs, dt);
                (f, nk)
            }
        };
        if let Some(x) = f.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite distribution value {x}"
            )));
        }
        if let Some(b) = n.iter().position(|x| !(x.is_finite() && *x >= T::zero())) {
            return Err(Error::Numerical(format!(
                "wave population of bundle {b} became {}",
                n[b]
            )));
        }
        Ok(SystemState {
            t: s.t + dt,
            step: s.step + 1,
            f,
            n,
        })
    }

    /// Step-size bound for the current state: positivity of the waves and,
    /// when particles are explicit, the diffusion bound.
    pub fn dt_bound(&self, s: &SystemState<T>, scheme: SchemeChoice, delta: T) -> T {
        let q = self.rates(&s.f);
        let mut dt = if scheme.implicit_n() {
            dt_positivity_implicit(&q, delta)
        } else {
            dt_positivity(&q, delta)
        };
        if !scheme.implicit_f() {
            dt = dt.min(self.dt_cfl(&self.diffusion_field(&s.n)));
        }
        dt
    }

    /// Advances to `control.t_max`, calling `observe` after every accepted step.
    /// A rejected step is retried with half the step size.
    pub fn run(
        &self,
        mut state: SystemState<T>,
        control: &RunControl<T>,
        mut observe: impl FnMut(&SystemState<T>, T) -> Result<()>,
    ) -> Result<SystemState<T>> {
        while state.t < control.t_max {
            if control.max_steps.is_some_and(|m| state.step >= m) {
                break;
            }
            let bound = control.safety * self.dt_bound(&state, control.scheme, control.delta);
            let mut dt = bound.min(control.dt_max).min(control.t_max - state.t);
            if !(dt > T::zero()) || !dt.is_finite() {
                return Err(Error::Numerical(format!(
                    "no admissible step at t = {}",
                    state.t
                )));
            }
            let mut attempt = 0;
            let next = loop {
                match self.step(&state, dt, control.scheme) {
                    Ok(s) => break s,
                    Err(Error::Numerical(msg)) if attempt < MAX_HALVINGS => {
                        log::debug!("step rejected at t = {} ({msg}); halving dt", state.t);
                        dt /= T::lit(2.0);
                        attempt += 1;
                    }
                    Err(e) => return Err(e),
                }
            };
            state = next;
            // land exactly on t_max
            if control.t_max - state.t <= T::epsilon() * control.t_max {
                state.t = control.t_max;
            }
            observe(&state, dt)?;
        }
        Ok(state)
    }
}

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct RunControl<T> {
    pub scheme: SchemeChoice,
    pub delta: T,
    pub safety: T,
    pub t_max: T,
    pub dt_max: T,
    pub max_steps: Option<u64>,
}

//! Discrete conserved quantities and brute-force audit oracles.

use std::collections::VecDeque;

use rand::Rng;

use crate::bundles::TrajectoryBundle;
use crate::hamiltonian::PLHamiltonian;
use crate::mesh::TriMesh;
use crate::scalar::{pairwise_sum, relative_error, Scalar};
use crate::solver::{Solver, SystemState};

/// Total mass, axial momentum and energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Totals<T> {
    pub mass: T,
    pub momentum_z: T,
    pub energy: T,
}

/// Totals at one time with their drift relative to `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationRecord<T> {
    pub t: T,
    pub step: u64,
    pub totals: Totals<T>,
    pub e_rel_mass: T,
    pub e_rel_momentum: T,
    pub e_rel_energy: T,
}

/// `(f, 1)`, `(f, Pi p_z) + (N, Pi k_z)` and `(f, Pi E) + (N, Pi omega)` with
/// the mass weights of the solver.
pub fn totals<T: Scalar>(solver: &Solver<T>, state: &SystemState<T>) -> Totals<T> {
    let n_p = solver.pgrid().n_cells();
    let geo = solver.geometry();
    let m = solver.cell_mass();
    let mass: Vec<T> = state.f.iter().zip(m).map(|(&f, &w)| f * w).collect();
    let fp: Vec<T> = mass
        .iter()
        .enumerate()
        .map(|(c, &x)| x * geo.p_z[c % n_p])
        .collect();
    let fe: Vec<T> = mass
        .iter()
        .enumerate()
        .map(|(c, &x)| x * geo.energy[c % n_p])
        .collect();
    let gn: Vec<T> = state
        .n
        .iter()
        .zip(solver.measure())
        .map(|(&n, &g)| n * g)
        .collect();
    let nk: Vec<T> = gn.iter().zip(solver.k_z()).map(|(&a, &k)| a * k).collect();
    let nw: Vec<T> = gn
        .iter()
        .zip(solver.omega())
        .map(|(&a, &w)| a * w)
        .collect();
    Totals {
        mass: pairwise_sum(&mass),
        momentum_z: pairwise_sum(&fp) + pairwise_sum(&nk),
        energy: pairwise_sum(&fe) + pairwise_sum(&nw),
    }
}

/// Collects conservation records against the first totals it sees.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationMonitor<T> {
    initial: Totals<T>,
    records: Vec<ConservationRecord<T>>,
}

impl<T: Scalar> ConservationMonitor<T> {
    pub fn new(solver: &Solver<T>, initial: &SystemState<T>) -> Self {
        let mut m = ConservationMonitor {
            initial: totals(solver, initial),
            records: Vec::new(),
        };
        m.observe(solver, initial);
        m
    }

    pub fn record(&self, t: T, step: u64, tot: Totals<T>) -> ConservationRecord<T> {
        ConservationRecord {
            t,
            step,
            totals: tot,
            e_rel_mass: relative_error(tot.mass, self.initial.mass),
            e_rel_momentum: relative_error(tot.momentum_z, self.initial.momentum_z),
            e_rel_energy: relative_error(tot.energy, self.initial.energy),
        }
    }

    pub fn observe(&mut self, solver: &Solver<T>, s: &SystemState<T>) -> ConservationRecord<T> {
        let r = self.record(s.t, s.step, totals(solver, s));
        self.records.push(r);
        r
    }

    pub fn initial(&self) -> Totals<T> {
        self.initial
    }

    pub fn records(&self) -> &[ConservationRecord<T>] {
        &self.records
    }

    /// Largest relative drift seen so far for (mass, momentum, energy).
    pub fn max_drift(&self) -> (T, T, T) {
        self.records
            .iter()
            .fold((T::zero(), T::zero(), T::zero()), |(a, b, c), r| {
                (
                    a.max(r.e_rel_mass),
                    b.max(r.e_rel_momentum),
                    c.max(r.e_rel_energy),
                )
            })
    }
}

/// Share of the particle mass in the last `p_par` row of cells, where the
/// discrete momentum identity does not hold.
pub fn last_row_mass_fraction<T: Scalar>(solver: &Solver<T>, state: &SystemState<T>) -> T {
    let pg = solver.pgrid();
    let n_p = pg.n_cells();
    let last = pg.n_par() - 1;
    let m = solver.cell_mass();
    let all: Vec<T> = state
        .f
        .iter()
        .zip(m)
        .map(|(&f, &w)| (f * w).abs())
        .collect();
    let edge: Vec<T> = all
        .iter()
        .enumerate()
        .filter(|(c, _)| pg.cell(c % n_p).0 == last)
        .map(|(_, &x)| x)
        .collect();
    let total = pairwise_sum(&all);
    if total > T::zero() {
        pairwise_sum(&edge) / total
    } else {
        T::zero()
    }
}

/// `sum_b |N_b| omega_b G_b`.
pub fn l1_omega<T: Scalar>(solver: &Solver<T>, n: &[T]) -> T {
    let terms: Vec<T> = n
        .iter()
        .zip(solver.omega())
        .zip(solver.measure())
        .map(|((&x, &w), &g)| x.abs() * w * g)
        .collect();
    pairwise_sum(&terms)
}

/// `||f||_2` in the mass-weighted inner product.
pub fn l2_norm<T: Scalar>(solver: &Solver<T>, f: &[T]) -> T {
    let terms: Vec<T> = f
        .iter()
        .zip(solver.cell_mass())
        .map(|(&x, &m)| m * x * x)
        .collect();
    pairwise_sum(&terms).sqrt()
}

/// Brute-force labelling of `{H in (a, b)}` on a regular point sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FloodFill<T> {
    pub n: usize,
    /// Sample point `(k_r, r)` for index `iy * n + ix`.
    pub points: Vec<[T; 2]>,
    /// Triangle containing each point.
    pub triangles: Vec<usize>,
    /// Component label of in-band points.
    pub labels: Vec<Option<usize>>,
    pub count: usize,
}

/// Samples `n x n` cell-centred points over the mesh rectangle and labels the
/// in-band ones by 8-neighbour connectivity.
pub fn flood_fill_oracle<T: Scalar>(
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    (a, b): (T, T),
    n: usize,
) -> FloodFill<T> {
    let (kg, rg) = (mesh.kr_grid(), mesh.r_grid());
    let nf = T::from_usize_lossy(n);
    let mut points = Vec::with_capacity(n * n);
    let mut triangles = Vec::with_capacity(n * n);
    let mut inside = Vec::with_capacity(n * n);
    for iy in 0..n {
        let r = rg.lo() + rg.length() * (T::from_usize_lossy(iy) + T::lit(0.5)) / nf;
        for ix in 0..n {
            let k = kg.lo() + kg.length() * (T::from_usize_lossy(ix) + T::lit(0.5)) / nf;
            let t = mesh.locate(k, r).expect("sample inside the mesh");
            let v = h.value_in(mesh, t, [k, r]);
            points.push([k, r]);
            triangles.push(t);
            inside.push(v > a && v < b);
        }
    }
    let mut labels = vec![None; n * n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n * n {
        if !inside[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(count);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (iy, ix) = ((p / n) as isize, (p % n) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (y, x) = (iy + dy, ix + dx);
                    if y < 0 || x < 0 || y >= n as isize || x >= n as isize {
                        continue;
                    }
                    let q = y as usize * n + x as usize;
                    if inside[q] && labels[q].is_none() {
                        labels[q] = Some(count);
                        queue.push_back(q);
                    }
                }
            }
        }
        count += 1;
    }
    FloodFill {
        n,
        points,
        triangles,
        labels,
        count,
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: T,
}

/// Uniform point in a triangle.
pub fn sample_triangle<T: Scalar, R: Rng + ?Sized>(rng: &mut R, c: &[[T; 2]; 3]) -> [T; 2] {
    let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    let (u, v) = (T::lit(u), T::lit(v));
    [
        c[0][0] + u * (c[1][0] - c[0][0]) + v * (c[2][0] - c[0][0]),
        c[0][1] + u * (c[1][1] - c[0][1]) + v * (c[2][1] - c[0][1]),
    ]
}

/// Area of `{a < H < b}` inside a triangle with linear `H` given by its
/// vertex values.
pub fn monte_carlo_triangle<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    corners: &[[T; 2]; 3],
    values: [T; 3],
    (a, b): (T, T),
    samples: usize,
) -> Estimate<T> {
    let area = crate::mesh::signed_area(corners[0], corners[1], corners[2]).abs();
    let mut hits = 0usize;
    for _ in 0..samples {
        let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let (u, v) = (T::lit(u), T::lit(v));
        let h = values[0] + u * (values[1] - values[0]) + v * (values[2] - values[0]);
        if h > a && h < b {
            hits += 1;
        }
    }
    proportion_estimate(area, hits, samples)
}

fn proportion_estimate<T: Scalar>(area: T, hits: usize, samples: usize) -> Estimate<T> {
    let n = T::from_usize_lossy(samples);
    let p = T::from_usize_lossy(hits) / n;
    Estimate {
        value: area * p,
        std_error: area * (p * (T::one() - p) / n).sqrt(),
    }
}

/// Measure of a bundle's region by uniform sampling over its cover
/// triangles, scaled by the `(q_phi, k_z)` cell area.
pub fn monte_carlo_bundle<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    mesh: &TriMesh<T>,
    h: &PLHamiltonian<T>,
    bundle: &TrajectoryBundle<T>,
    samples: usize,
) -> Estimate<T> {
    let (a, b) = bundle.interval;
    let areas: Vec<T> = bundle.cover.iter().map(|&t| mesh.areas()[t]).collect();
    let total: T = areas.iter().copied().sum();
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = T::zero();
    for &x in &areas {
        acc += x;
        cdf.push((acc / total).to_f64_lossy());
    }
    let mut hits = 0usize;
    for _ in 0..samples {
        let u: f64 = rng.gen();
        let k = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        let t = bundle.cover[k];
        let p = sample_triangle(rng, &mesh.corners(t));
        let v = h.value_in(mesh, t, p);
        if v > a && v < b {
            hits += 1;
        }
    }
    let e = proportion_estimate(total, hits, samples);
    Estimate {
        value: e.value * bundle.phz_area,
        std_error: e.std_error * bundle.phz_area,
    }
}

/// Checks that union-find components and the flood-fill labels describe
/// the same partition of the in-band sample points: every component holds
/// sample points, and the two labelings map one-to-one.
pub fn label_agreement<T: Scalar>(
    components: &[Vec<usize>],
    n_triangles: usize,
    flood: &FloodFill<T>,
) -> std::result::Result<(), String> {
    let mut comp_of = vec![usize::MAX; n_triangles];
    for (ci, comp) in components.iter().enumerate() {
        for &t in comp {
            comp_of[t] = ci;
        }
    }
    let mut flood_to_comp = vec![usize::MAX; flood.count];
    let mut comp_to_flood = vec![usize::MAX; components.len()];
    for (p, label) in flood.labels.iter().enumerate() {
        let Some(l) = *label else { continue };
        let c = comp_of[flood.triangles[p]];
        if c == usize::MAX {
            return Err(format!("in-band point {p} lies in an inactive triangle"));
        }
        if flood_to_comp[l] == usize::MAX {
            flood_to_comp[l] = c;
        } else if flood_to_comp[l] != c {
            return Err(format!(
                "flood component {l} spans components {} and {c}",
                flood_to_comp[l]
            ));
        }
        if comp_to_flood[c] == usize::MAX {
            comp_to_flood[c] = l;
        } else if comp_to_flood[c] != l {
            return Err(format!(
                "component {c} split into flood components {} and {l}",
                comp_to_flood[c]
            ));
        }
    }
    if let Some(c) = comp_to_flood.iter().position(|&l| l == usize::MAX) {
        return Err(format!("component {c} contains no sample point"));
    }
    if flood.count != components.len() {
        return Err(format!(
            "{} flood components vs {} components",
            flood.count,
            components.len()
        ));
    }
    Ok(())
}

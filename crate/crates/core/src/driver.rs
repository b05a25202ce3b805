//! Builds a complete discretised system from a [`RunConfig`] and runs the
//! self-audit.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bundles::{self, build_bundles, TrajectoryBundle};
use crate::config::{AmplitudeChoice, RunConfig};
use crate::diagnostics;
use crate::error::Result;
use crate::hamiltonian::{stratify, ColdPlasmaDispersion, PLHamiltonian};
use crate::interaction::{
    assemble_diffusion, Amplitude, AssemblyInput, KernelSpec, RandomAmplitude, UnitAmplitude,
};
use crate::ldg::{MomentumGeometry, PGrid};
use crate::mesh::{RectGrid, TriMesh};
use crate::scalar::Scalar;
use crate::solver::{Solver, SystemState};

/// Everything derived from a configuration.
#[derive(Debug, Clone)]
pub struct Simulation<T: Scalar> {
    pub config: RunConfig,
    pub mesh: TriMesh<T>,
    pub q_phi: RectGrid<T>,
    pub k_z: RectGrid<T>,
    pub r_slices: RectGrid<T>,
    pub model: ColdPlasmaDispersion<T>,
    pub hamiltonians: Vec<PLHamiltonian<T>>,
    /// Bundles kept in the test space, with ids `0..len`.
    pub bundles: Vec<TrajectoryBundle<T>>,
    /// Bundles dropped for touching the `|k_r| = L` boundary.
    pub excluded: Vec<TrajectoryBundle<T>>,
    pub kernel: KernelSpec<T>,
    pub solver: Solver<T>,
}

fn grid<T: Scalar>(b: crate::config::Bounds, n: usize) -> Result<RectGrid<T>> {
    RectGrid::new(T::lit(b.lo), T::lit(b.hi), n)
}

/// The amplitude selected by the configuration.
pub fn amplitude_for<T: Scalar>(config: &RunConfig) -> Arc<dyn Amplitude<T>> {
    match config.physics.amplitude {
        AmplitudeChoice::Unit => Arc::new(UnitAmplitude),
        AmplitudeChoice::Random => Arc::new(RandomAmplitude::new(config.physics.seed)),
    }
}

impl<T: Scalar> Simulation<T> {
    pub fn build(config: &RunConfig) -> Result<Self> {
        let p = &config.physics;
        let kernel = KernelSpec::new(p.harmonic, T::lit(p.epsilon), amplitude_for(config))?;
        Self::build_with_kernel(config, kernel)
    }

    pub fn build_with_kernel(config: &RunConfig, kernel: KernelSpec<T>) -> Result<Self> {
        config.validate()?;
        let d = &config.domain;
        let g = &config.grid;
        let mesh = TriMesh::new(grid(d.k_r, g.n_tri_kr)?, grid(d.r, g.n_tri_r)?);
        let q_phi: RectGrid<T> = grid(d.q_phi, g.n_q_phi)?;
        let k_z: RectGrid<T> = grid(d.k_z, g.n_kz)?;
        let r_slices = grid(d.r, g.n_r)?;
        let model = ColdPlasmaDispersion::new(
            config.physics.profile,
            T::lit(config.physics.omega_pe0),
            T::lit(config.physics.b0),
            T::lit(d.r.hi),
        );

        let n_cells = q_phi.len() * k_z.len();
        let per_cell: Vec<(PLHamiltonian<T>, bundles::BundleFamily<T>)> = (0..n_cells)
            .into_par_iter()
            .map(|cell| {
                let (iq, iz) = (cell / k_z.len(), cell % k_z.len());
                let center = (q_phi.centers()[iq], k_z.centers()[iz]);
                let area = q_phi.widths()[iq] * k_z.widths()[iz];
                let h = PLHamiltonian::interpolate(&model, &mesh, cell, center)?;
                let strat = stratify(&h, g.n_strata)?;
                let fam = build_bundles(&mesh, &h, &strat, center, area)?;
                Ok((h, fam))
            })
            .collect::<Result<_>>()?;
        let mut hamiltonians = Vec::with_capacity(n_cells);
        let mut retained = Vec::new();
        let mut excluded = Vec::new();
        for (h, fam) in per_cell {
            hamiltonians.push(h);
            retained.extend(fam.retained);
            excluded.extend(fam.excluded);
        }
        for (i, b) in retained.iter_mut().enumerate() {
            b.id = i;
        }
        for (i, b) in excluded.iter_mut().enumerate() {
            b.id = i;
        }
        log::info!(
            "{} phz cells, {} bundles retained, {} excluded at the k_r boundary",
            n_cells,
            retained.len(),
            excluded.len()
        );

        let pgrid = PGrid::new(grid(d.p_par, g.n_p_par)?, grid(d.p_perp, g.n_p_perp)?)?;
        let geometry = MomentumGeometry::new(&pgrid);
        let op = assemble_diffusion(&AssemblyInput {
            mesh: &mesh,
            bundles: &retained,
            pgrid: &pgrid,
            geometry: &geometry,
            r_slices: &r_slices,
            spec: &kernel,
            model: &model,
        })?;
        log::info!(
            "interaction operator: {} blocks, {:.1} MiB",
            op.nnz(),
            op.memory_bytes() as f64 / (1024.0 * 1024.0)
        );
        let slice_volume = (0..r_slices.len())
            .map(|x| {
                let (lo, hi) = (r_slices.edges()[x], r_slices.edges()[x + 1]);
                T::PI() * (hi * hi - lo * lo)
            })
            .collect();
        let measure = retained.iter().map(|b| b.measure).collect();
        let omega = retained.iter().map(|b| b.omega_sup).collect();
        let kz = bundles::project_onto_bundles(|_, _, _, kz| kz, &retained);
        let solver = Solver::new(pgrid, op, slice_volume, measure, omega, kz)?;
        Ok(Simulation {
            config: config.clone(),
            mesh,
            q_phi,
            k_z,
            r_slices,
            model,
            hamiltonians,
            bundles: retained,
            excluded,
            kernel,
            solver,
        })
    }

    /// Gaussian bump `A / sqrt(pi) exp(-(p_par - c)^2 - p_perp^2)` sampled at
    /// cell centres in every slice, and uniform wave populations.
    pub fn initial_state(&self) -> SystemState<T> {
        let ic = &self.config.initial;
        let (a, c) = (T::lit(ic.f_amplitude), T::lit(ic.f_center));
        let slice = self
            .solver
            .pgrid()
            .sample_centers(|pp, pq| a / T::PI().sqrt() * (-((pp - c) * (pp - c)) - pq * pq).exp());
        let f = (0..self.solver.n_slices())
            .flat_map(|_| slice.iter().copied())
            .collect();
        SystemState {
            t: T::zero(),
            step: 0,
            f,
            n: vec![T::lit(ic.n_amplitude); self.bundles.len()],
        }
    }

    pub fn phz_area(&self, cell: usize) -> T {
        let (iq, iz) = (cell / self.k_z.len(), cell % self.k_z.len());
        self.q_phi.widths()[iq] * self.k_z.widths()[iz]
    }

    /// Area of the `(k_r, r)` rectangle times the `(q_phi, k_z)` rectangle.
    pub fn total_measure(&self) -> T {
        self.mesh.total_area() * self.q_phi.length() * self.k_z.length()
    }

    /// Measure of the points where `H` equals its extreme values (flat
    /// triangles at the minimum or maximum), which no open interval covers.
    pub fn complement_measure(&self) -> T {
        let parts: Vec<T> = self
            .hamiltonians
            .iter()
            .map(|h| {
                let range = (h.min_val(), h.max_val());
                let missing: T = (0..self.mesh.n_triangles())
                    .map(|t| {
                        let inside = bundles::proportion(h.triangle_values(&self.mesh, t), range);
                        self.mesh.areas()[t] * (T::one() - inside)
                    })
                    .sum();
                missing * self.phz_area(h.phz_cell())
            })
            .collect();
        crate::scalar::pairwise_sum(&parts)
    }
}

/// Outcome of one self-audit check.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for AuditLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn line(name: &str, passed: bool, detail: String) -> AuditLine {
    AuditLine {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Oracle checks on an assembled simulation: measure additivity, component
/// labelling against flood fill, proportions against Monte Carlo, operator
/// positivity and one-step conservation.
pub fn audit<T: Scalar>(sim: &Simulation<T>) -> Result<Vec<AuditLine>> {
    let mut out = Vec::new();

    let parts: Vec<T> = sim
        .bundles
        .iter()
        .chain(&sim.excluded)
        .map(|b| b.measure)
        .collect();
    let sum = crate::scalar::pairwise_sum(&parts) + sim.complement_measure();
    let total = sim.total_measure();
    let err = crate::scalar::relative_error(sum, total);
    out.push(line(
        "measure additivity",
        err <= T::lit(1e-10),
        format!("relative error {err:e}"),
    ));

    // Component labelling on a handful of phz cells.
    let stride = (sim.hamiltonians.len() / 4).max(1);
    let mut checked = 0;
    let mut failures = Vec::new();
    for h in sim.hamiltonians.iter().step_by(stride) {
        let strat = stratify(h, sim.config.grid.n_strata)?;
        for iv in strat.intervals() {
            let comps =
                bundles::connected_components(&bundles::connection_matrix(&sim.mesh, h, iv));
            let flood = diagnostics::flood_fill_oracle(&sim.mesh, h, iv, 400);
            if let Err(e) = diagnostics::label_agreement(&comps, sim.mesh.n_triangles(), &flood) {
                failures.push(format!("cell {}: {e}", h.phz_cell()));
            }
            checked += 1;
        }
    }
    out.push(line(
        "component labelling",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{checked} intervals agree with flood fill")
        } else {
            failures.join("; ")
        },
    ));

    // Bundle measures by Monte Carlo.
    let mut rng = ChaCha8Rng::seed_from_u64(sim.config.physics.seed);
    let mut worst = T::zero();
    let sample: Vec<&TrajectoryBundle<T>> = sim
        .bundles
        .iter()
        .step_by((sim.bundles.len() / 8).max(1))
        .collect();
    for b in &sample {
        let h = &sim.hamiltonians[b.phz_cell];
        let est = diagnostics::monte_carlo_bundle(&mut rng, &sim.mesh, h, b, 200_000);
        let cover_area: T = b.cover.iter().map(|&t| sim.mesh.areas()[t]).sum::<T>() * b.phz_area;
        // standard error from the exact fraction
        let p = b.measure / cover_area;
        let sigma = cover_area * (p * (T::one() - p) / T::lit(200_000.0)).sqrt();
        let z = (est.value - b.measure).abs() / sigma.max(T::min_positive_value());
        worst = worst.max(z);
    }
    out.push(line(
        "bundle measures vs Monte Carlo",
        worst <= T::lit(4.0),
        format!(
            "{} bundles, worst deviation {worst:.2} standard errors",
            sample.len()
        ),
    ));

    // Positive semidefinite diffusion tensors.
    let state = sim.initial_state();
    let field = sim.solver.diffusion_field(&state.n);
    let mut worst_eig = T::zero();
    for d in &field {
        let tr = d[0] + d[2];
        let disc = ((d[0] - d[2]) * (d[0] - d[2]) / T::lit(4.0) + d[1] * d[1]).sqrt();
        let lmin = tr / T::lit(2.0) - disc;
        if tr > T::zero() {
            worst_eig = worst_eig.min(lmin / tr);
        }
    }
    out.push(line(
        "diffusion tensors PSD",
        worst_eig >= T::lit(-1e-14),
        format!("min eigenvalue / trace = {worst_eig:e}"),
    ));

    // One explicit step.
    let monitor = diagnostics::ConservationMonitor::new(&sim.solver, &state);
    let dt = sim.config.solver.safety
        * sim
            .solver
            .dt_bound(
                &state,
                crate::solver::SchemeChoice::FullyExplicit,
                T::lit(sim.config.solver.delta),
            )
            .to_f64_lossy();
    let dt = T::lit(dt.min(sim.config.solver.dt_max).min(1e300));
    let next = sim
        .solver
        .step(&state, dt, crate::solver::SchemeChoice::FullyExplicit)?;
    let rec = monitor.record(next.t, next.step, diagnostics::totals(&sim.solver, &next));
    let edge = diagnostics::last_row_mass_fraction(&sim.solver, &next);
    out.push(line(
        "one-step conservation",
        rec.e_rel_mass <= T::lit(1e-13)
            && rec.e_rel_energy <= T::lit(1e-13)
            && rec.e_rel_momentum <= T::lit(1e-11),
        format!(
            "dt {dt:e}: mass {:e}, momentum {:e}, energy {:e}; last p_par row holds {edge:e} of the mass",
            rec.e_rel_mass, rec.e_rel_momentum, rec.e_rel_energy
        ),
    ));
    Ok(out)
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T> {
    pub steps: u64,
    pub t: T,
    pub max_drift: (T, T, T),
}

/// Runs the configured time integration, writing the effective
/// configuration, bundle dump, conservation series and snapshots under
/// `out`. On a failed step the last accepted state is written before the
/// error is returned.
pub fn execute_run<T: Scalar>(sim: &Simulation<T>, out: &std::path::Path) -> Result<RunSummary<T>> {
    use crate::error::Error;
    use crate::io;
    use crate::solver::RunControl;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg_path = out.join("config.txt");
    std::fs::write(&cfg_path, sim.config.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    io::write_bundles(&out.join("bundles.csv"), sim)?;

    let s = &sim.config.solver;
    let control = RunControl {
        scheme: s.scheme,
        delta: T::lit(s.delta),
        safety: T::lit(s.safety),
        t_max: T::lit(s.t_max),
        dt_max: T::lit(s.dt_max),
        max_steps: (s.max_steps > 0).then_some(s.max_steps),
    };
    let o = &sim.config.output;
    let state = sim.initial_state();
    let mut monitor = diagnostics::ConservationMonitor::new(&sim.solver, &state);
    let mut series = io::SeriesWriter::create(&out.join("conservation.csv"))?;
    series.write(&monitor.records()[0])?;
    io::write_snapshot(&io::snapshot_dir(out, 0), sim, &state)?;

    let mut last = state.clone();
    let result = sim.solver.run(state, &control, |st, dt| {
        let rec = monitor.observe(&sim.solver, st);
        if st.step % o.series_every == 0 {
            series.write(&rec)?;
        }
        if o.snapshot_every > 0 && st.step % o.snapshot_every == 0 {
            io::write_snapshot(&io::snapshot_dir(out, st.step), sim, st)?;
        }
        log::info!(
            "step {} t {:e} dt {:e} drift mass {:e} momentum {:e} energy {:e}",
            st.step,
            st.t,
            dt,
            rec.e_rel_mass,
            rec.e_rel_momentum,
            rec.e_rel_energy
        );
        last = st.clone();
        Ok(())
    });
    series.flush()?;
    let final_state = match result {
        Ok(s) => s,
        Err(e) => {
            io::write_snapshot(&io::snapshot_dir(out, last.step), sim, &last)?;
            return Err(e);
        }
    };
    io::write_snapshot(&io::snapshot_dir(out, final_state.step), sim, &final_state)?;
    Ok(RunSummary {
        steps: final_state.step,
        t: final_state.t,
        max_drift: monitor.max_drift(),
    })
}

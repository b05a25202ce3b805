#![allow(dead_code)]

use rand::Rng;

use wavekin::config::RunConfig;
use wavekin::diagnostics::{self, ConservationMonitor};
use wavekin::driver::Simulation;
use wavekin::hamiltonian::PLHamiltonian;
use wavekin::mesh::{RectGrid, TriMesh};
use wavekin::solver::{RunControl, SchemeChoice, SystemState};

pub fn unit_mesh(n: usize) -> TriMesh<f64> {
    TriMesh::new(
        RectGrid::new(-1.0, 1.0, n).unwrap(),
        RectGrid::new(0.0, 1.0, n).unwrap(),
    )
}

/// Smooth random field: a few low-frequency Fourier modes plus a tilt.
pub fn smooth_field<R: Rng>(mesh: &TriMesh<f64>, rng: &mut R) -> PLHamiltonian<f64> {
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let (tk, tr) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let vals = mesh
        .vertices()
        .iter()
        .map(|&[k, r]| {
            tk * k
                + tr * r
                + modes
                    .iter()
                    .map(|&(a, wk, wr, ph)| a * (wk * k + wr * r + ph).cos())
                    .sum::<f64>()
        })
        .collect();
    PLHamiltonian::from_node_values(0, vals).unwrap()
}

/// Node values where the topology of the sub-level sets can change: interior
/// vertices whose link does not have exactly two sign changes, and boundary
/// vertices whose link chain does not have exactly one.
pub fn critical_values(mesh: &TriMesh<f64>, h: &PLHamiltonian<f64>) -> Vec<f64> {
    let nk = mesh.kr_grid().len();
    let nr = mesh.r_grid().len();
    let nv = h.node_values();
    let mut out = Vec::new();
    let dirs: [(isize, isize); 6] = [(1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1)];
    for b in 0..=nr {
        for a in 0..=nk {
            let v = nv[b * (nk + 1) + a];
            let ring: Vec<Option<f64>> = dirs
                .iter()
                .map(|&(da, db)| {
                    let (x, y) = (a as isize + da, b as isize + db);
                    (x >= 0 && y >= 0 && x <= nk as isize && y <= nr as isize)
                        .then(|| nv[y as usize * (nk + 1) + x as usize] - v)
                })
                .collect();
            let critical = if ring.iter().all(|x| x.is_some()) {
                let s: Vec<bool> = ring.iter().map(|x| x.unwrap() > 0.0).collect();
                (0..6).filter(|&i| s[i] != s[(i + 1) % 6]).count() != 2
            } else {
                let start = ring.iter().position(|x| x.is_none()).unwrap();
                let chain: Vec<bool> = (1..=6)
                    .map(|o| ring[(start + o) % 6])
                    .filter_map(|x| x.map(|d| d > 0.0))
                    .collect();
                chain.windows(2).filter(|w| w[0] != w[1]).count() != 1
            };
            if critical {
                out.push(v);
            }
        }
    }
    out
}

/// Random sub-interval of the range of `h` whose endpoints stay `margin *
/// range` away from every critical value.
pub fn pick_interval<R: Rng>(
    h: &PLHamiltonian<f64>,
    crit: &[f64],
    rng: &mut R,
    margin: f64,
) -> (f64, f64) {
    let (lo, hi) = (h.min_val(), h.max_val());
    let gap = margin * (hi - lo);
    let ok = |x: f64| crit.iter().all(|c| (c - x).abs() > gap) && x - lo > gap && hi - x > gap;
    loop {
        let a = rng.gen_range(lo..hi);
        let b = rng.gen_range(lo..hi);
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if b - a > 4.0 * gap && ok(a) && ok(b) {
            return (a, b);
        }
    }
}

pub fn desk(max_steps: u64) -> RunConfig {
    let mut c = RunConfig::desk();
    c.solver.max_steps = max_steps;
    c
}

pub struct RunResult {
    pub monitor: ConservationMonitor<f64>,
    pub last: SystemState<f64>,
    pub min_n: f64,
    pub max_last_row: f64,
}

/// Adaptive run from the initial state without file output.
pub fn run(sim: &Simulation<f64>, scheme: SchemeChoice) -> RunResult {
    let s = &sim.config.solver;
    let control = RunControl {
        scheme,
        delta: s.delta,
        safety: s.safety,
        t_max: s.t_max,
        dt_max: s.dt_max,
        max_steps: (s.max_steps > 0).then_some(s.max_steps),
    };
    let state = sim.initial_state();
    let mut monitor = ConservationMonitor::new(&sim.solver, &state);
    let mut min_n = state.n.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_last_row = diagnostics::last_row_mass_fraction(&sim.solver, &state);
    let last = sim
        .solver
        .run(state, &control, |st, _| {
            monitor.observe(&sim.solver, st);
            min_n = st.n.iter().cloned().fold(min_n, f64::min);
            max_last_row = max_last_row.max(diagnostics::last_row_mass_fraction(&sim.solver, st));
            Ok(())
        })
        .unwrap();
    RunResult {
        monitor,
        last,
        min_n,
        max_last_row,
    }
}

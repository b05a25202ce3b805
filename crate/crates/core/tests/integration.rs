mod common;

use std::process::Command;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wavekin::bundles::{fraction_above, proportion};
use wavekin::config::{parse_config, RunConfig};
use wavekin::diagnostics::{self, totals};
use wavekin::driver::{execute_run, Simulation};
use wavekin::io::{read_snapshot, snapshot_dir, write_snapshot};
use wavekin::solver::{SchemeChoice, SystemState};

fn desk_sim() -> Simulation<f64> {
    Simulation::build(&common::desk(0)).unwrap()
}

#[test]
fn every_scheme_conserves_over_twenty_steps() {
    let sim = desk_sim();
    let s0 = sim.initial_state();
    let dt = sim.solver.dt_bound(&s0, SchemeChoice::FullyExplicit, 0.1);
    for scheme in SchemeChoice::ALL {
        let mut monitor = diagnostics::ConservationMonitor::new(&sim.solver, &s0);
        let mut s = s0.clone();
        for _ in 0..20 {
            s = sim.solver.step(&s, dt, scheme).unwrap();
            monitor.observe(&sim.solver, &s);
        }
        let (m, p, e) = monitor.max_drift();
        assert!(
            m < 1e-13 && p < 1e-11 && e < 1e-13,
            "{scheme}: {m:e} {p:e} {e:e}"
        );
        assert_ne!(s.f, s0.f, "{scheme} left f unchanged");
    }
}

#[test]
fn silent_waves_leave_particles_alone() {
    let sim = desk_sim();
    let mut s = sim.initial_state();
    s.n.iter_mut().for_each(|x| *x = 0.0);
    for scheme in SchemeChoice::ALL {
        let next = sim.solver.step(&s, 10.0, scheme).unwrap();
        assert_eq!(next.f, s.f, "{scheme}");
    }
}

#[test]
fn reaction_rates_balance_particle_energy() {
    // Particle energy lost in one explicit step equals the wave energy gained.
    let sim = desk_sim();
    let s = sim.initial_state();
    let dt = 5.0;
    let next = sim
        .solver
        .step(&s, dt, SchemeChoice::FullyExplicit)
        .unwrap();
    let n_p = sim.solver.pgrid().n_cells();
    let particle = |f: &[f64]| -> f64 {
        f.iter()
            .zip(sim.solver.cell_mass())
            .enumerate()
            .map(|(c, (x, m))| x * m * sim.solver.geometry().energy[c % n_p])
            .sum()
    };
    let gained: f64 = sim
        .solver
        .rates(&s.f)
        .iter()
        .zip(&s.n)
        .zip(sim.solver.measure())
        .zip(sim.solver.omega())
        .map(|(((q, n), mu), w)| dt * q * n * mu * w)
        .sum();
    let lost = particle(&s.f) - particle(&next.f);
    assert!(gained != 0.0);
    assert!(
        (lost - gained).abs() <= 1e-9 * gained.abs(),
        "{lost:e} vs {gained:e}"
    );
}

#[test]
fn diffusion_blocks_are_positive_semidefinite() {
    let sim = desk_sim();
    let op = sim.solver.operator();
    let mut seen = 0;
    for b in 0..op.n_bundles() {
        for (_, [d11, d12, d22]) in op.bundle_entries(b) {
            let scale = d11.abs().max(d22.abs());
            assert!(d11 >= 0.0 && d22 >= 0.0);
            assert!(d11 * d22 - d12 * d12 >= -1e-12 * scale * scale);
            seen += 1;
        }
    }
    assert_eq!(seen, op.nnz());
}

#[test]
fn builds_are_deterministic() {
    let a = desk_sim();
    let b = desk_sim();
    assert_eq!(a.bundles.len(), b.bundles.len());
    let sa = a
        .solver
        .step(&a.initial_state(), 1.0, SchemeChoice::FullyExplicit)
        .unwrap();
    let sb = b
        .solver
        .step(&b.initial_state(), 1.0, SchemeChoice::FullyExplicit)
        .unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn single_precision_build_runs() {
    let sim = Simulation::<f32>::build(&common::desk(0)).unwrap();
    let s0 = sim.initial_state();
    let dt = sim.solver.dt_bound(&s0, SchemeChoice::FullyExplicit, 0.1);
    let s1 = sim
        .solver
        .step(&s0, dt, SchemeChoice::FullyExplicit)
        .unwrap();
    let (a, b) = (totals(&sim.solver, &s0), totals(&sim.solver, &s1));
    assert!(((a.mass - b.mass) / a.mass).abs() < 1e-5);
    assert!(s1.n.iter().all(|x| *x >= 0.0));
}

#[test]
fn snapshot_round_trip_is_byte_identical() {
    let sim = desk_sim();
    let s = sim
        .solver
        .step(&sim.initial_state(), 3.0, SchemeChoice::FullyExplicit)
        .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("a");
    write_snapshot(&first, &sim, &s).unwrap();
    let (manifest, back): (_, SystemState<f64>) = read_snapshot(&first).unwrap();
    assert_eq!(back, s);
    assert_eq!(manifest.n_bundles, sim.bundles.len());
    let second = tmp.path().join("b");
    write_snapshot(&second, &sim, &back).unwrap();
    for name in ["manifest.txt", "f.csv", "n.csv"] {
        let x = std::fs::read(first.join(name)).unwrap();
        let y = std::fs::read(second.join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let rows = std::fs::read_to_string(first.join("f.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    assert_eq!(rows, sim.solver.n_slices() * sim.solver.pgrid().n_cells());
    let measure: f64 = std::fs::read_to_string(first.join("n.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
        .sum();
    let expected: f64 = sim.bundles.iter().map(|b| b.measure).sum();
    assert!((measure - expected).abs() <= 1e-12 * expected);
}

#[test]
fn short_run_writes_outputs() {
    let mut cfg = common::desk(5);
    cfg.output.snapshot_every = 2;
    let sim = Simulation::<f64>::build(&cfg).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let summary = execute_run(&sim, tmp.path()).unwrap();
    assert_eq!(summary.steps, 5);
    for step in [0, 2, 4, 5] {
        assert!(
            snapshot_dir(tmp.path(), step).join("manifest.txt").exists(),
            "step {step}"
        );
    }
    let series = std::fs::read_to_string(tmp.path().join("conservation.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 6);
    let text = std::fs::read_to_string(tmp.path().join("config.txt")).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
}

#[test]
fn presets_round_trip_through_text() {
    for cfg in [RunConfig::reference(), RunConfig::desk()] {
        let back = parse_config(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavekin"))
}

#[test]
fn cli_rejects_bad_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[grid]\nn_p_pars = 3\n").unwrap();
    let out = cli()
        .arg("--config")
        .arg(&path)
        .arg("bundles")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_p_pars"));
}

#[test]
fn cli_preset_and_audit() {
    let out = cli().args(["preset", "--desk"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(parse_config(&text).unwrap(), RunConfig::desk());

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("desk.toml");
    std::fs::write(&path, text).unwrap();
    let out = cli()
        .arg("--config")
        .arg(&path)
        .arg("audit")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("[PASS]")), "{stdout}");
}

#[test]
fn double_well_splits_into_two_components() {
    let mesh = common::unit_mesh(24);
    let h: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|&[k, r]| {
            let x = 2.0 * k;
            let y = 2.0 * r - 1.0;
            (x * x - 0.5).powi(2) + y * y
        })
        .collect();
    let h = wavekin::hamiltonian::PLHamiltonian::from_node_values(0, h).unwrap();
    let iv = (0.0, 0.1);
    let m = wavekin::bundles::connection_matrix(&mesh, &h, iv);
    let comps = wavekin::bundles::connected_components(&m);
    assert_eq!(comps.len(), 2);
    let iv = (0.0, 0.5);
    let m = wavekin::bundles::connection_matrix(&mesh, &h, iv);
    assert_eq!(wavekin::bundles::connected_components(&m).len(), 1);
}

fn mc_fraction(h: [f64; 3], iv: (f64, f64), n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut hit = 0;
    for _ in 0..n {
        let (mut a, mut b) = (rng.gen::<f64>(), rng.gen::<f64>());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        let v = h[0] * (1.0 - a - b) + h[1] * a + h[2] * b;
        if v > iv.0 && v < iv.1 {
            hit += 1;
        }
    }
    hit as f64 / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proportion_is_a_measure(
        h in prop::array::uniform3(-1.0f64..1.0),
        a in -1.5f64..1.5,
        w1 in 0.0f64..1.0,
        w2 in 0.0f64..1.0,
    ) {
        let b = a + w1;
        let c = b + w2;
        let p1 = proportion(h, (a, b));
        let p2 = proportion(h, (b, c));
        let p = proportion(h, (a, c));
        prop_assert!((0.0..=1.0).contains(&p1));
        prop_assert!((p1 + p2 - p).abs() < 1e-12);
        prop_assert!((fraction_above(h, f64::NEG_INFINITY) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn proportion_ignores_vertex_order(h in prop::array::uniform3(-1.0f64..1.0), a in -1.0f64..1.0, w in 0.0f64..1.0) {
        let iv = (a, a + w);
        let p = proportion(h, iv);
        for perm in [[1, 0, 2], [2, 1, 0], [0, 2, 1], [1, 2, 0]] {
            let q = proportion([h[perm[0]], h[perm[1]], h[perm[2]]], iv);
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn proportion_matches_sampling(h in prop::array::uniform3(-1.0f64..1.0), a in -1.0f64..1.0, w in 0.0f64..1.0) {
        let iv = (a, a + w);
        let n = 40_000;
        let p = proportion(h, iv);
        let est = mc_fraction(h, iv, n);
        let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
        prop_assert!((p - est).abs() <= 5.0 * sigma, "{} vs {}", p, est);
    }
}

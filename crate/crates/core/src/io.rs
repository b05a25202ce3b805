//! Text snapshots, conservation series and bundle dumps.
//!
//! Floating-point values are written with the shortest representation that
//! parses back to the same bits, so a snapshot read back reproduces the
//! state exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::ConservationRecord;
use crate::driver::Simulation;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solver::SystemState;

const SNAPSHOT_FORMAT: &str = "wavekin-snapshot-1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotManifest {
    pub config_hash: String,
    pub step: u64,
    pub t: String,
    pub n_r: usize,
    pub n_p_par: usize,
    pub n_p_perp: usize,
    pub n_bundles: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Directory name for the snapshot of a given step.
pub fn snapshot_dir(root: &Path, step: u64) -> PathBuf {
    root.join("snapshots").join(format!("step_{step:08}"))
}

/// Writes `manifest.txt`, `f.csv` and `n.csv` into `dir`.
pub fn write_snapshot<T: Scalar>(
    dir: &Path,
    sim: &Simulation<T>,
    state: &SystemState<T>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pg = sim.solver.pgrid();
    let n_p = pg.n_cells();

    let path = dir.join("manifest.txt");
    let mut w = create(&path)?;
    let m = SnapshotManifest {
        config_hash: sim.config.hash(),
        step: state.step,
        t: state.t.to_string(),
        n_r: sim.solver.n_slices(),
        n_p_par: pg.n_par(),
        n_p_perp: pg.n_perp(),
        n_bundles: state.n.len(),
    };
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "format = {SNAPSHOT_FORMAT}")?;
        writeln!(w, "config_hash = {}", m.config_hash)?;
        writeln!(w, "step = {}", m.step)?;
        writeln!(w, "t = {}", m.t)?;
        writeln!(w, "n_r = {}", m.n_r)?;
        writeln!(w, "n_p_par = {}", m.n_p_par)?;
        writeln!(w, "n_p_perp = {}", m.n_p_perp)?;
        writeln!(w, "n_bundles = {}", m.n_bundles)
    };
    write(&mut w).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;

    let path = dir.join("f.csv");
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "xi,i,j,r,p_par,p_perp,value")?;
        for (idx, v) in state.f.iter().enumerate() {
            let (xi, c) = (idx / n_p, idx % n_p);
            let (i, j) = pg.cell(c);
            let (pp, pq) = pg.center(c);
            let r = sim.r_slices.centers()[xi];
            writeln!(w, "{xi},{i},{j},{r},{pp},{pq},{v}")?;
        }
        Ok(())
    };
    write(&mut w).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)?;

    let path = dir.join("n.csv");
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "bundle,phz_cell,interval,measure,value")?;
        for (b, v) in sim.bundles.iter().zip(&state.n) {
            writeln!(
                w,
                "{},{},{},{},{v}",
                b.id, b.phz_cell, b.interval_index, b.measure
            )?;
        }
        Ok(())
    };
    write(&mut w).map_err(|e| Error::io(&path, e))?;
    finish(w, &path)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))
}

fn field<V: std::str::FromStr>(path: &Path, line: usize, raw: &str, what: &str) -> Result<V> {
    raw.trim()
        .parse()
        .map_err(|_| format_err(path, format!("line {line}: bad {what} {raw:?}")))
}

pub fn read_manifest(dir: &Path) -> Result<SnapshotManifest> {
    let path = dir.join("manifest.txt");
    let mut map = std::collections::HashMap::new();
    for (n, l) in read_lines(&path)?.iter().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| format_err(&path, format!("line {}: expected `key = value`", n + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        map.get(k)
            .cloned()
            .ok_or_else(|| format_err(&path, format!("missing {k}")))
    };
    if get("format")? != SNAPSHOT_FORMAT {
        return Err(format_err(&path, "unsupported snapshot format"));
    }
    let num = |k: &str| -> Result<usize> { field(&path, 0, &get(k)?, k) };
    Ok(SnapshotManifest {
        config_hash: get("config_hash")?,
        step: field(&path, 0, &get("step")?, "step")?,
        t: get("t")?,
        n_r: num("n_r")?,
        n_p_par: num("n_p_par")?,
        n_p_perp: num("n_p_perp")?,
        n_bundles: num("n_bundles")?,
    })
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot<T: Scalar>(dir: &Path) -> Result<(SnapshotManifest, SystemState<T>)> {
    let m = read_manifest(dir)?;
    let t: T = field(&dir.join("manifest.txt"), 0, &m.t, "time")?;

    let path = dir.join("f.csv");
    let n_cells = m.n_r * m.n_p_par * m.n_p_perp;
    let mut f = vec![T::nan(); n_cells];
    let mut filled = vec![false; n_cells];
    for (n, l) in read_lines(&path)?.iter().enumerate().skip(1) {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 7 {
            return Err(format_err(
                &path,
                format!("line {}: expected 7 columns", n + 1),
            ));
        }
        let xi: usize = field(&path, n + 1, cols[0], "xi")?;
        let i: usize = field(&path, n + 1, cols[1], "i")?;
        let j: usize = field(&path, n + 1, cols[2], "j")?;
        if xi >= m.n_r || i >= m.n_p_par || j >= m.n_p_perp {
            return Err(format_err(
                &path,
                format!("line {}: index out of range", n + 1),
            ));
        }
        let idx = (xi * m.n_p_par + i) * m.n_p_perp + j;
        if filled[idx] {
            return Err(format_err(&path, format!("line {}: duplicate cell", n + 1)));
        }
        filled[idx] = true;
        f[idx] = field(&path, n + 1, cols[6], "value")?;
    }
    if filled.iter().any(|x| !x) {
        return Err(format_err(&path, "missing cells"));
    }

    let path = dir.join("n.csv");
    let mut nv = vec![T::nan(); m.n_bundles];
    let mut seen = vec![false; m.n_bundles];
    for (n, l) in read_lines(&path)?.iter().enumerate().skip(1) {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 5 {
            return Err(format_err(
                &path,
                format!("line {}: expected 5 columns", n + 1),
            ));
        }
        let b: usize = field(&path, n + 1, cols[0], "bundle")?;
        if b >= m.n_bundles || seen[b] {
            return Err(format_err(
                &path,
                format!("line {}: bad bundle id {b}", n + 1),
            ));
        }
        seen[b] = true;
        nv[b] = field(&path, n + 1, cols[4], "value")?;
    }
    if seen.iter().any(|x| !x) {
        return Err(format_err(&path, "missing bundles"));
    }
    let state = SystemState {
        t,
        step: m.step,
        f,
        n: nv,
    };
    Ok((m, state))
}

/// Appends conservation records as comma-separated rows.
pub struct SeriesWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl SeriesWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = create(path)?;
        writeln!(
            out,
            "t,mass,momentum_z,energy,e_rel_mass,e_rel_momentum,e_rel_energy"
        )
        .map_err(|e| Error::io(path, e))?;
        Ok(SeriesWriter {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn write<T: Scalar>(&mut self, r: &ConservationRecord<T>) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{:e},{:e},{:e}",
            r.t,
            r.totals.mass,
            r.totals.momentum_z,
            r.totals.energy,
            r.e_rel_mass,
            r.e_rel_momentum,
            r.e_rel_energy
        )
        .map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// One row per bundle, retained and excluded.
pub fn write_bundles<T: Scalar>(path: &Path, sim: &Simulation<T>) -> Result<()> {
    let mut w = create(path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(
            w,
            "kind,id,phz_cell,interval,h_a,h_b,cover_size,measure,omega"
        )?;
        for (kind, list) in [("retained", &sim.bundles), ("excluded", &sim.excluded)] {
            for b in list {
                writeln!(
                    w,
                    "{kind},{},{},{},{},{},{},{},{}",
                    b.id,
                    b.phz_cell,
                    b.interval_index,
                    b.interval.0,
                    b.interval.1,
                    b.cover.len(),
                    b.measure,
                    b.omega_sup
                )?;
            }
        }
        Ok(())
    };
    write(&mut w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

//! Run configuration: a small `key = value` document with `[section]`
//! headers.
//!
//! ```text
//! # comment
//! [grid]
//! n_p_par = 24
//! solver.scheme = "fully_implicit"   # dotted keys work outside sections
//! ```
//!
//! Inside a section keys are relative to it; before the first header keys
//! must be fully qualified. Values are numbers, bare words or double-quoted
//! strings. Unknown or repeated keys are errors, and every omitted key takes
//! its value from the reference preset.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hamiltonian::DensityProfile;
use crate::solver::SchemeChoice;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub p_par: Bounds,
    pub p_perp: Bounds,
    pub r: Bounds,
    pub k_r: Bounds,
    pub q_phi: Bounds,
    pub k_z: Bounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n_p_par: usize,
    pub n_p_perp: usize,
    pub n_r: usize,
    pub n_q_phi: usize,
    pub n_kz: usize,
    pub n_tri_kr: usize,
    pub n_tri_r: usize,
    pub n_strata: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeChoice {
    Unit,
    /// Seeded smooth random amplitude, for testing kernel independence.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsConfig {
    pub profile: DensityProfile,
    pub omega_pe0: f64,
    /// Cyclotron frequency of the uniform magnetic field.
    pub b0: f64,
    pub epsilon: f64,
    pub harmonic: i32,
    pub amplitude: AmplitudeChoice,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub f_amplitude: f64,
    pub f_center: f64,
    pub n_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: SchemeChoice,
    pub delta: f64,
    pub safety: f64,
    pub t_max: f64,
    pub dt_max: f64,
    /// Zero means unlimited.
    pub max_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Steps between snapshots; zero writes only the initial and final state.
    pub snapshot_every: u64,
    pub series_every: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// The reference cylinder scenario at full resolution.
    pub fn reference() -> Self {
        RunConfig {
            domain: DomainConfig {
                p_par: Bounds { lo: 10.0, hi: 25.0 },
                p_perp: Bounds { lo: 0.0, hi: 15.0 },
                r: Bounds { lo: 0.0, hi: 1.0 },
                k_r: Bounds { lo: -1.0, hi: 1.0 },
                q_phi: Bounds { lo: 0.0, hi: 0.5 },
                k_z: Bounds { lo: 0.0, hi: 1.0 },
            },
            grid: GridConfig {
                n_p_par: 75,
                n_p_perp: 75,
                n_r: 20,
                n_q_phi: 20,
                n_kz: 40,
                n_tri_kr: 20,
                n_tri_r: 20,
                n_strata: 10,
            },
            physics: PhysicsConfig {
                profile: DensityProfile::Parabolic,
                omega_pe0: 1.0,
                b0: 1.0,
                epsilon: 0.1,
                harmonic: 1,
                amplitude: AmplitudeChoice::Unit,
                seed: 0,
            },
            initial: InitialConfig {
                f_amplitude: 1e-5,
                f_center: 20.0,
                n_amplitude: 1e-5,
            },
            solver: SolverConfig {
                scheme: SchemeChoice::FullyExplicit,
                delta: 0.1,
                safety: 0.9,
                t_max: 3.86e6,
                dt_max: f64::INFINITY,
                max_steps: 0,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                snapshot_every: 0,
                series_every: 1,
            },
        }
    }

    /// Reduced grids that run in minutes.
    pub fn desk() -> Self {
        let mut c = Self::reference();
        c.grid = GridConfig {
            n_p_par: 24,
            n_p_perp: 24,
            n_r: 8,
            n_q_phi: 8,
            n_kz: 10,
            n_tri_kr: 10,
            n_tri_r: 10,
            n_strata: 6,
        };
        c
    }

    /// Serialises every key; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (section, entries) in self.entries() {
            let _ = writeln!(s, "[{section}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn entries(&self) -> Vec<(&'static str, Vec<(&'static str, String)>)> {
        let d = &self.domain;
        let g = &self.grid;
        let p = &self.physics;
        let i = &self.initial;
        let s = &self.solver;
        let o = &self.output;
        let num = |x: f64| {
            if x.is_infinite() {
                if x > 0.0 { "inf" } else { "-inf" }.to_string()
            } else {
                format!("{x:?}")
            }
        };
        vec![
            (
                "domain",
                vec![
                    ("p_par_min", num(d.p_par.lo)),
                    ("p_par_max", num(d.p_par.hi)),
                    ("p_perp_min", num(d.p_perp.lo)),
                    ("p_perp_max", num(d.p_perp.hi)),
                    ("r_min", num(d.r.lo)),
                    ("r_max", num(d.r.hi)),
                    ("k_r_min", num(d.k_r.lo)),
                    ("k_r_max", num(d.k_r.hi)),
                    ("q_phi_min", num(d.q_phi.lo)),
                    ("q_phi_max", num(d.q_phi.hi)),
                    ("k_z_min", num(d.k_z.lo)),
                    ("k_z_max", num(d.k_z.hi)),
                ],
            ),
            (
                "grid",
                vec![
                    ("n_p_par", g.n_p_par.to_string()),
                    ("n_p_perp", g.n_p_perp.to_string()),
                    ("n_r", g.n_r.to_string()),
                    ("n_q_phi", g.n_q_phi.to_string()),
                    ("n_kz", g.n_kz.to_string()),
                    ("n_tri_kr", g.n_tri_kr.to_string()),
                    ("n_tri_r", g.n_tri_r.to_string()),
                    ("n_strata", g.n_strata.to_string()),
                ],
            ),
            (
                "physics",
                vec![
                    (
                        "profile",
                        match p.profile {
                            DensityProfile::Parabolic => "parabolic",
                            DensityProfile::Uniform => "uniform",
                        }
                        .to_string(),
                    ),
                    ("omega_pe0", num(p.omega_pe0)),
                    ("b0", num(p.b0)),
                    ("epsilon", num(p.epsilon)),
                    ("harmonic", p.harmonic.to_string()),
                    (
                        "amplitude",
                        match p.amplitude {
                            AmplitudeChoice::Unit => "unit",
                            AmplitudeChoice::Random => "random",
                        }
                        .to_string(),
                    ),
                    ("seed", p.seed.to_string()),
                ],
            ),
            (
                "initial",
                vec![
                    ("f_amplitude", num(i.f_amplitude)),
                    ("f_center", num(i.f_center)),
                    ("n_amplitude", num(i.n_amplitude)),
                ],
            ),
            (
                "solver",
                vec![
                    ("scheme", s.scheme.to_string()),
                    ("delta", num(s.delta)),
                    ("safety", num(s.safety)),
                    ("t_max", num(s.t_max)),
                    ("dt_max", num(s.dt_max)),
                    ("max_steps", s.max_steps.to_string()),
                ],
            ),
            (
                "output",
                vec![
                    ("dir", format!("{:?}", o.dir.to_string_lossy())),
                    ("snapshot_every", o.snapshot_every.to_string()),
                    ("series_every", o.series_every.to_string()),
                ],
            ),
        ]
    }

    fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let f = || parse_f64(key, raw);
        let u = || parse_usize(key, raw);
        let d = &mut self.domain;
        match key {
            "domain.p_par_min" => d.p_par.lo = f()?,
            "domain.p_par_max" => d.p_par.hi = f()?,
            "domain.p_perp_min" => d.p_perp.lo = f()?,
            "domain.p_perp_max" => d.p_perp.hi = f()?,
            "domain.r_min" => d.r.lo = f()?,
            "domain.r_max" => d.r.hi = f()?,
            "domain.k_r_min" => d.k_r.lo = f()?,
            "domain.k_r_max" => d.k_r.hi = f()?,
            "domain.q_phi_min" => d.q_phi.lo = f()?,
            "domain.q_phi_max" => d.q_phi.hi = f()?,
            "domain.k_z_min" => d.k_z.lo = f()?,
            "domain.k_z_max" => d.k_z.hi = f()?,
            "grid.n_p_par" => self.grid.n_p_par = u()?,
            "grid.n_p_perp" => self.grid.n_p_perp = u()?,
            "grid.n_r" => self.grid.n_r = u()?,
            "grid.n_q_phi" => self.grid.n_q_phi = u()?,
            "grid.n_kz" => self.grid.n_kz = u()?,
            "grid.n_tri_kr" => self.grid.n_tri_kr = u()?,
            "grid.n_tri_r" => self.grid.n_tri_r = u()?,
            "grid.n_strata" => self.grid.n_strata = u()?,
            "physics.profile" => {
                self.physics.profile = match raw {
                    "parabolic" => DensityProfile::Parabolic,
                    "uniform" => DensityProfile::Uniform,
                    _ => return Err(Error::config(key, "expected parabolic or uniform")),
                }
            }
            "physics.omega_pe0" => self.physics.omega_pe0 = f()?,
            "physics.b0" => self.physics.b0 = f()?,
            "physics.epsilon" => self.physics.epsilon = f()?,
            "physics.harmonic" => {
                self.physics.harmonic = raw
                    .parse()
                    .map_err(|_| Error::config(key, format!("not an integer: {raw:?}")))?
            }
            "physics.amplitude" => {
                self.physics.amplitude = match raw {
                    "unit" => AmplitudeChoice::Unit,
                    "random" => AmplitudeChoice::Random,
                    _ => return Err(Error::config(key, "expected unit or random")),
                }
            }
            "physics.seed" => self.physics.seed = u()? as u64,
            "initial.f_amplitude" => self.initial.f_amplitude = f()?,
            "initial.f_center" => self.initial.f_center = f()?,
            "initial.n_amplitude" => self.initial.n_amplitude = f()?,
            "solver.scheme" => {
                self.solver.scheme = raw.parse().map_err(|e: String| Error::config(key, e))?
            }
            "solver.delta" => self.solver.delta = f()?,
            "solver.safety" => self.solver.safety = f()?,
            "solver.t_max" => self.solver.t_max = f()?,
            "solver.dt_max" => self.solver.dt_max = f()?,
            "solver.max_steps" => self.solver.max_steps = u()? as u64,
            "output.dir" => self.output.dir = PathBuf::from(raw),
            "output.snapshot_every" => self.output.snapshot_every = u()? as u64,
            "output.series_every" => self.output.series_every = u()? as u64,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        for (name, b) in [
            ("p_par", d.p_par),
            ("p_perp", d.p_perp),
            ("r", d.r),
            ("k_r", d.k_r),
            ("q_phi", d.q_phi),
            ("k_z", d.k_z),
        ] {
            if !(b.lo.is_finite() && b.hi.is_finite()) {
                return Err(Error::config(
                    format!("domain.{name}_min"),
                    "bounds must be finite",
                ));
            }
            if b.lo >= b.hi {
                return Err(Error::config(
                    format!("domain.{name}_max"),
                    format!("must exceed domain.{name}_min ({} >= {})", b.lo, b.hi),
                ));
            }
        }
        if d.p_perp.lo < 0.0 {
            return Err(Error::config("domain.p_perp_min", "must be non-negative"));
        }
        if d.r.lo < 0.0 {
            return Err(Error::config("domain.r_min", "must be non-negative"));
        }
        let g = &self.grid;
        for (name, n) in [
            ("n_p_par", g.n_p_par),
            ("n_p_perp", g.n_p_perp),
            ("n_r", g.n_r),
            ("n_q_phi", g.n_q_phi),
            ("n_kz", g.n_kz),
            ("n_tri_kr", g.n_tri_kr),
            ("n_tri_r", g.n_tri_r),
            ("n_strata", g.n_strata),
        ] {
            if n == 0 {
                return Err(Error::config(format!("grid.{name}"), "must be at least 1"));
            }
        }
        let p = &self.physics;
        if !(p.omega_pe0 >= 0.0 && p.omega_pe0.is_finite()) {
            return Err(Error::config(
                "physics.omega_pe0",
                "must be finite and non-negative",
            ));
        }
        if !p.b0.is_finite() {
            return Err(Error::config("physics.b0", "must be finite"));
        }
        if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
            return Err(Error::config("physics.epsilon", "must be positive"));
        }
        let i = &self.initial;
        for (name, v) in [
            ("f_amplitude", i.f_amplitude),
            ("n_amplitude", i.n_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("initial.{name}"),
                    "must be finite and non-negative",
                ));
            }
        }
        if !i.f_center.is_finite() {
            return Err(Error::config("initial.f_center", "must be finite"));
        }
        let s = &self.solver;
        if !(s.delta > 0.0 && s.delta < 1.0) {
            return Err(Error::config("solver.delta", "must lie in (0, 1)"));
        }
        if !(s.safety > 0.0 && s.safety <= 1.0) {
            return Err(Error::config("solver.safety", "must lie in (0, 1]"));
        }
        if !(s.t_max >= 0.0 && s.t_max.is_finite()) {
            return Err(Error::config(
                "solver.t_max",
                "must be finite and non-negative",
            ));
        }
        if !(s.dt_max > 0.0) {
            return Err(Error::config("solver.dt_max", "must be positive"));
        }
        if self.output.series_every == 0 {
            return Err(Error::config("output.series_every", "must be at least 1"));
        }
        Ok(())
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    match raw {
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    raw.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::config(key, format!("not a number: {raw:?}")))
}

fn parse_usize(key: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|_| Error::config(key, format!("not a non-negative integer: {raw:?}")))
}

/// Strips a trailing comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(key: &str, v: &str) -> Result<String> {
    if let Some(rest) = v.strip_prefix('"') {
        let inner = rest
            .strip_suffix('"')
            .ok_or_else(|| Error::config(key, "unterminated string"))?;
        if inner.contains('"') {
            return Err(Error::config(key, "stray quote in string"));
        }
        Ok(inner.to_string())
    } else if v.is_empty() {
        Err(Error::config(key, "missing value"))
    } else if v.contains(char::is_whitespace) {
        Err(Error::config(
            key,
            "bare values cannot contain spaces; quote them",
        ))
    } else {
        Ok(v.to_string())
    }
}

/// Parses a configuration document on top of the reference preset.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_over(text, RunConfig::reference())
}

/// Parses a configuration document on top of `base`.
pub fn parse_config_over(text: &str, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = base;
    let mut section: Option<String> = None;
    let mut seen = std::collections::HashSet::new();
    for (n, raw_line) in text.lines().enumerate() {
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| {
                    Error::config(format!("line {}", n + 1), "malformed section header")
                })?
                .trim();
            if name.is_empty() || name.contains(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            {
                return Err(Error::config(
                    format!("line {}", n + 1),
                    format!("bad section name {name:?}"),
                ));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected `key = value`"))?;
        let k = k.trim();
        let key = match &section {
            Some(s) => format!("{s}.{k}"),
            None => k.to_string(),
        };
        if !seen.insert(key.clone()) {
            return Err(Error::config(&key, "repeated key"));
        }
        let value = unquote(&key, v.trim())?;
        cfg.set(&key, &value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

//! Run configuration in TOML.
//!
//! ```toml
//! [model]
//! sites = 6
//! u = 10          # in units of t0
//!
//! [run]
//! path = "full_eom"
//! ```
//!
//! Only `model.sites`, `model.u` and `run.path` are required. Unknown
//! tables or keys, repeated keys and malformed values are rejected with the
//! offending line.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::drive::{PulseParams, DEFAULT_A0, DEFAULT_CYCLES, DEFAULT_OMEGA_L};
use crate::dynamics::DEFAULT_KRYLOV_DIM;
use crate::error::{Error, Result};
use crate::lattice::{all_sectors, Sector, SectorBasis, SpinParity};
use crate::observables::{WindowMode, DEFAULT_WINDOW_HALFWIDTH};
use crate::operators::{sector_ground_energy, ModelParams, DEFAULT_LATTICE_SPACING, DEFAULT_T0};
use crate::persist::sha256_hex;
use crate::photonics::{mode_grid, DEFAULT_FOCK_CUTOFF, DEFAULT_G0};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Per-mode photonic equations of motion.
    FullEom,
    /// Closed-form coherent states; only valid without interaction.
    AnalyticU0,
    /// One-photon amplitudes to first order in the coupling.
    Perturbative,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::FullEom => "full_eom",
            PathKind::AnalyticU0 => "analytic_u0",
            PathKind::Perturbative => "perturbative",
        }
    }
}

/// One quantum number of the sector: chosen automatically, not used, or
/// fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection<T> {
    Auto,
    Unused,
    Fixed(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorSelection {
    pub momentum: Selection<usize>,
    pub parity: Selection<SpinParity>,
}

impl Default for SectorSelection {
    fn default() -> Self {
        SectorSelection {
            momentum: Selection::Auto,
            parity: Selection::Auto,
        }
    }
}

impl SectorSelection {
    /// Concrete sector at half filling. Automatic components pick the
    /// candidate with the lowest ground energy, ties going to the lower
    /// momentum and then the even parity.
    pub fn resolve(&self, params: &ModelParams) -> Result<Sector> {
        let sites = params.sites;
        if !sites.is_multiple_of(2) {
            return Err(Error::param(format!(
                "half filling needs an even number of sites, got {sites}"
            )));
        }
        let half = sites / 2;
        let momenta: Vec<Option<usize>> = match self.momentum {
            Selection::Auto => (0..sites).map(Some).collect(),
            Selection::Unused => vec![None],
            Selection::Fixed(k) if k < sites => vec![Some(k)],
            Selection::Fixed(k) => return Err(Error::param(format!("momentum index {k} out of 0..{sites}"))),
        };
        let parities: Vec<Option<SpinParity>> = match self.parity {
            Selection::Auto => vec![Some(SpinParity::Even), Some(SpinParity::Odd)],
            Selection::Unused => vec![None],
            Selection::Fixed(p) => vec![Some(p)],
        };
        let candidates: Vec<Sector> = momenta
            .iter()
            .flat_map(|&k| parities.iter().map(move |&p| Sector { momentum: k, parity: p }))
            .collect();
        if candidates.len() == 1 {
            return Ok(candidates[0]);
        }
        debug_assert!(candidates
            .iter()
            .all(|c| c.momentum.is_none() || all_sectors(sites, half, half).contains(c)));
        let mut best: Option<(Sector, f64)> = None;
        for sector in candidates {
            if SectorBasis::build(sites, half, half, sector)?.dimension() == 0 {
                continue;
            }
            let e = sector_ground_energy(params, half, half, sector)?;
            match best {
                Some((_, b)) if e >= b - 1e-10 * params.t0 => {}
                _ => best = Some((sector, e)),
            }
        }
        best.map(|(s, _)| s)
            .ok_or_else(|| Error::param("no non-empty sector matches the selection"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelParams,
    pub pulse: PulseParams,
    pub sector: SectorSelection,
    /// Number of lowest eigenstates kept as channels; `None` keeps all.
    pub states: Option<usize>,
    /// Mode grid in units of ω_L.
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_step: f64,
    pub g0: f64,
    pub fock_cutoff: usize,
    pub path: PathKind,
    pub dt: f64,
    pub krylov_dim: usize,
    pub output: PathBuf,
    /// 0 uses the available parallelism.
    pub workers: usize,
    pub window_halfwidth: f64,
    pub window_mode: WindowMode,
}

impl RunConfig {
    /// Defaults for everything except the three required keys.
    pub fn new(sites: usize, u_over_t0: f64, path: PathKind) -> Self {
        RunConfig {
            model: ModelParams::new(sites, u_over_t0),
            pulse: PulseParams::default(),
            sector: SectorSelection::default(),
            states: None,
            omega_min: 0.1,
            omega_max: 40.0,
            omega_step: 0.1,
            g0: DEFAULT_G0,
            fock_cutoff: DEFAULT_FOCK_CUTOFF,
            path,
            dt: 0.5,
            krylov_dim: DEFAULT_KRYLOV_DIM,
            output: PathBuf::from("output"),
            workers: 0,
            window_halfwidth: DEFAULT_WINDOW_HALFWIDTH,
            window_mode: WindowMode::Absolute,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pulse.validate()?;
        if !self.model.sites.is_multiple_of(2) {
            return Err(Error::param(
                "the chain is simulated at half filling and needs an even number of sites",
            ));
        }
        if self.path == PathKind::AnalyticU0 && self.model.u != 0.0 {
            return Err(Error::param(format!(
                "path analytic_u0 requires U = 0, got U = {} t0",
                self.model.u_over_t0()
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::param("dt must be positive"));
        }
        if self.krylov_dim < 2 {
            return Err(Error::param("krylov_dim must be at least 2"));
        }
        if !(self.g0 >= 0.0) {
            return Err(Error::param("g0 must be non-negative"));
        }
        if self.fock_cutoff < 1 {
            return Err(Error::param("fock_cutoff must be at least 1"));
        }
        if self.states == Some(0) {
            return Err(Error::param("states must keep at least one eigenstate"));
        }
        if !(self.window_halfwidth > 0.0) {
            return Err(Error::param("window_halfwidth must be positive"));
        }
        mode_grid(self.pulse.omega_l, self.omega_min, self.omega_max, self.omega_step)?;
        Ok(())
    }

    pub fn modes(&self) -> Vec<f64> {
        mode_grid(self.pulse.omega_l, self.omega_min, self.omega_max, self.omega_step).unwrap_or_default()
    }

    /// Output directory, with a relative path placed under `root` when given.
    pub fn output_dir(&self, root: Option<&Path>) -> PathBuf {
        match root {
            Some(r) if self.output.is_relative() => r.join(&self.output),
            _ => self.output.clone(),
        }
    }

    /// Hash of every setting that affects results (not output or workers).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        c.workers = 0;
        sha256_hex(c.to_text().as_bytes())
    }

    /// Hash of the settings that determine the transition-current table.
    pub fn table_hash(&self) -> String {
        let mut text = String::new();
        let _ = write!(
            text,
            "{:?}|{:?}|{:?}|{:?}|{}|{}|{}",
            self.model,
            self.pulse,
            self.sector,
            self.states,
            self.dt,
            self.krylov_dim,
            // the analytic path only needs the initial channel
            self.path == PathKind::AnalyticU0
        );
        sha256_hex(text.as_bytes())
    }

    /// Canonical text with every key spelled out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sel_k = match self.sector.momentum {
            Selection::Auto => quoted("auto"),
            Selection::Unused => quoted("none"),
            Selection::Fixed(k) => k.to_string(),
        };
        let sel_p = match self.sector.parity {
            Selection::Auto => quoted("auto"),
            Selection::Unused => quoted("none"),
            Selection::Fixed(p) => format!("{:+}", p.as_sign()),
        };
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "sites = {}", self.model.sites);
        let _ = writeln!(s, "u = {:?}", self.model.u_over_t0());
        let _ = writeln!(s, "t0 = {:?}", self.model.t0);
        let _ = writeln!(s, "lattice_spacing = {:?}", self.model.a);
        let _ = writeln!(s, "\n[pulse]");
        let _ = writeln!(s, "a0 = {:?}", self.pulse.a0);
        let _ = writeln!(s, "omega_l = {:?}", self.pulse.omega_l);
        let _ = writeln!(s, "cycles = {}", self.pulse.cycles);
        let _ = writeln!(s, "\n[sector]");
        let _ = writeln!(s, "momentum = {sel_k}");
        let _ = writeln!(s, "parity = {sel_p}");
        let _ = writeln!(s, "states = {}", self.states.map_or(quoted("all"), |n| n.to_string()));
        let _ = writeln!(s, "\n[modes]");
        let _ = writeln!(s, "omega_min = {:?}", self.omega_min);
        let _ = writeln!(s, "omega_max = {:?}", self.omega_max);
        let _ = writeln!(s, "omega_step = {:?}", self.omega_step);
        let _ = writeln!(s, "g0 = {:?}", self.g0);
        let _ = writeln!(s, "fock_cutoff = {}", self.fock_cutoff);
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "path = {}", quoted(self.path.as_str()));
        let _ = writeln!(s, "dt = {:?}", self.dt);
        let _ = writeln!(s, "krylov_dim = {}", self.krylov_dim);
        let _ = writeln!(s, "output = {}", quoted(&self.output.to_string_lossy()));
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "\n[observables]");
        let _ = writeln!(s, "window_halfwidth = {:?}", self.window_halfwidth);
        let _ = writeln!(
            s,
            "window = {}",
            quoted(match self.window_mode {
                WindowMode::Absolute => "absolute",
                WindowMode::Relative => "relative",
            })
        );
        s
    }
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

type Field<T> = Option<Spanned<T>>;

/// An integer or a keyword such as `"auto"`.
#[derive(Deserialize)]
#[serde(untagged)]
enum Word {
    Int(i64),
    Text(String),
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawFile {
    model: RawModel,
    pulse: RawPulse,
    sector: RawSector,
    modes: RawModes,
    run: RawRun,
    observables: RawObservables,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawModel {
    sites: Field<usize>,
    u: Field<f64>,
    t0: Field<f64>,
    lattice_spacing: Field<f64>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPulse {
    a0: Field<f64>,
    omega_l: Field<f64>,
    cycles: Field<u32>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSector {
    momentum: Field<Word>,
    parity: Field<Word>,
    states: Field<Word>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawModes {
    omega_min: Field<f64>,
    omega_max: Field<f64>,
    omega_step: Field<f64>,
    g0: Field<f64>,
    fock_cutoff: Field<usize>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawRun {
    path: Field<PathKind>,
    dt: Field<f64>,
    krylov_dim: Field<usize>,
    output: Field<PathBuf>,
    workers: Field<usize>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawObservables {
    window_halfwidth: Field<f64>,
    window: Field<WindowMode>,
}

/// Every key with its value span, used to locate earlier occurrences.
type KeySpans = BTreeMap<String, BTreeMap<String, Spanned<toml::Value>>>;

struct Source<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Source<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err(&self, line: Option<usize>, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.origin.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn toml_err(&self, e: toml::de::Error) -> Error {
        let line = e.span().map(|s| self.line(s.start));
        let msg = e.message().trim().to_string();
        if let (Some(second), Some(key)) = (line, msg.strip_prefix("duplicate key `")) {
            let key = key.split('`').next().unwrap_or_default();
            if let Some(first) = self.first_occurrence(second, key) {
                return self.err(
                    Some(second),
                    format!("duplicate key `{key}` (first set on line {first}, again on line {second})"),
                );
            }
        }
        self.err(line, msg)
    }

    /// Line of the earlier `key` that the duplicate on `second` repeats.
    fn first_occurrence(&self, second: usize, key: &str) -> Option<usize> {
        let blanked: String = self
            .text
            .lines()
            .enumerate()
            .map(|(i, l)| if i + 1 == second { "" } else { l })
            .collect::<Vec<_>>()
            .join("\n");
        let spans: KeySpans = toml::from_str(&blanked).ok()?;
        spans
            .values()
            .filter_map(|t| t.get(key))
            .map(|v| self.line(v.span().start))
            .filter(|&l| l < second)
            .max()
    }

    fn get<T: Clone>(&self, field: &Field<T>) -> Option<T> {
        field.as_ref().map(|s| s.get_ref().clone())
    }

    fn float(&self, field: &Field<f64>, key: &str) -> Result<Option<f64>> {
        match field {
            Some(s) if !s.get_ref().is_finite() => {
                Err(self.err(Some(self.line(s.span().start)), format!("`{key}` must be finite")))
            }
            _ => Ok(self.get(field)),
        }
    }

    fn word<T>(
        &self,
        field: &Field<Word>,
        key: &str,
        expected: &str,
        f: impl Fn(&Word) -> Option<T>,
    ) -> Result<Option<T>> {
        match field {
            None => Ok(None),
            Some(s) => f(s.get_ref())
                .map(Some)
                .ok_or_else(|| self.err(Some(self.line(s.span().start)), format!("`{key}` expects {expected}"))),
        }
    }

    fn required<'f, T>(&self, field: &'f Field<T>, key: &str) -> Result<&'f Spanned<T>> {
        field
            .as_ref()
            .ok_or_else(|| self.err(None, format!("missing required key `{key}`")))
    }
}

fn keyword<T>(w: &Word, words: &[(&str, T)]) -> Option<T>
where
    T: Copy,
{
    match w {
        Word::Text(s) => words.iter().find(|(k, _)| k == s).map(|(_, v)| *v),
        Word::Int(_) => None,
    }
}

/// Parse configuration text. `origin` names the source in error messages.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig> {
    let src = Source { text, origin };
    let raw: RawFile = toml::from_str(text).map_err(|e| src.toml_err(e))?;

    let sites = *src.required(&raw.model.sites, "model.sites")?.get_ref();
    src.required(&raw.model.u, "model.u")?;
    let u = src.float(&raw.model.u, "model.u")?.unwrap_or_default();
    let path = src.required(&raw.run.path, "run.path")?;
    let mut c = RunConfig::new(sites, u, *path.get_ref());
    c.model.t0 = src.float(&raw.model.t0, "model.t0")?.unwrap_or(DEFAULT_T0);
    c.model.u = u * c.model.t0;
    c.model.a = src
        .float(&raw.model.lattice_spacing, "model.lattice_spacing")?
        .unwrap_or(DEFAULT_LATTICE_SPACING);
    c.pulse.a0 = src.float(&raw.pulse.a0, "pulse.a0")?.unwrap_or(DEFAULT_A0);
    c.pulse.omega_l = src
        .float(&raw.pulse.omega_l, "pulse.omega_l")?
        .unwrap_or(DEFAULT_OMEGA_L);
    c.pulse.cycles = src.get(&raw.pulse.cycles).unwrap_or(DEFAULT_CYCLES);
    c.sector.momentum = src
        .word(
            &raw.sector.momentum,
            "sector.momentum",
            "\"auto\", \"none\" or an integer",
            |w| match w {
                Word::Int(k) => usize::try_from(*k).ok().map(Selection::Fixed),
                w => keyword(w, &[("auto", Selection::Auto), ("none", Selection::Unused)]),
            },
        )?
        .unwrap_or(Selection::Auto);
    c.sector.parity = src
        .word(
            &raw.sector.parity,
            "sector.parity",
            "\"auto\", \"none\", +1 or -1",
            |w| match w {
                Word::Int(p) => SpinParity::from_sign(*p).ok().map(Selection::Fixed),
                w => keyword(w, &[("auto", Selection::Auto), ("none", Selection::Unused)]),
            },
        )?
        .unwrap_or(Selection::Auto);
    c.states = src
        .word(
            &raw.sector.states,
            "sector.states",
            "\"all\" or a positive integer",
            |w| match w {
                Word::Int(n) => usize::try_from(*n).ok().map(Some),
                w => keyword(w, &[("all", None)]),
            },
        )?
        .unwrap_or(None);
    c.omega_min = src
        .float(&raw.modes.omega_min, "modes.omega_min")?
        .unwrap_or(c.omega_min);
    c.omega_max = src
        .float(&raw.modes.omega_max, "modes.omega_max")?
        .unwrap_or(c.omega_max);
    c.omega_step = src
        .float(&raw.modes.omega_step, "modes.omega_step")?
        .unwrap_or(c.omega_step);
    c.g0 = src.float(&raw.modes.g0, "modes.g0")?.unwrap_or(c.g0);
    c.fock_cutoff = src.get(&raw.modes.fock_cutoff).unwrap_or(c.fock_cutoff);
    c.dt = src.float(&raw.run.dt, "run.dt")?.unwrap_or(c.dt);
    c.krylov_dim = src.get(&raw.run.krylov_dim).unwrap_or(c.krylov_dim);
    c.output = src.get(&raw.run.output).unwrap_or(c.output);
    c.workers = src.get(&raw.run.workers).unwrap_or(c.workers);
    c.window_halfwidth = src
        .float(&raw.observables.window_halfwidth, "observables.window_halfwidth")?
        .unwrap_or(c.window_halfwidth);
    c.window_mode = src.get(&raw.observables.window).unwrap_or(WindowMode::Absolute);

    c.validate().map_err(|e| {
        let msg = match e {
            Error::Parameter(m) => m,
            other => other.to_string(),
        };
        // Point at the most likely culprit.
        let line = msg.contains("analytic_u0").then(|| src.line(path.span().start));
        src.err(line, msg)
    })?;
    Ok(c)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        line: None,
        msg: e.to_string(),
    })?;
    parse_config_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(e: &Error) -> Option<usize> {
        match e {
            Error::Config { line, .. } => *line,
            _ => panic!("not a config error: {e}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[model]\nsites = 4\nu = 0\n[run]\npath = \"analytic_u0\"\n", "t").unwrap();
        assert_eq!(c.model.sites, 4);
        assert_eq!(c.model.u, 0.0);
        assert_eq!(c.pulse.a0, 0.194);
        assert_eq!(c.pulse.omega_l, 0.005);
        assert_eq!(c.pulse.cycles, 10);
        assert_eq!(c.g0, 4e-8);
        assert_eq!(c.model.t0, 0.0191);
        assert_eq!(c.omega_step, 0.1);
        assert_eq!(c.path, PathKind::AnalyticU0);
        assert_eq!(c.sector, SectorSelection::default());
    }

    #[test]
    fn analytic_path_needs_zero_interaction() {
        let e = parse_config_str("[model]\nsites = 4\nu = 10\n[run]\npath = \"analytic_u0\"\n", "t").unwrap_err();
        assert_eq!(line_of(&e), Some(5));
        assert!(e.to_string().contains("U = 0"), "{e}");
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let e = parse_config_str("[model]\nsites = 4\nu = 0\n\nu = 1\n[run]\npath = \"full_eom\"\n", "t").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn unknown_and_malformed_entries_are_rejected() {
        let cases = [
            ("[model]\nsites = 4\nu = 0\nspin = 1\n[run]\npath = \"full_eom\"\n", 4),
            ("[model]\nsites = \"four\"\nu = 0\n[run]\npath = \"full_eom\"\n", 2),
            ("[model]\nsites = 4\nu = 0\n[run]\npath = \"exact\"\n", 5),
            ("sites = 4\n", 1),
            ("[laser]\n", 1),
            ("[model]\nsites 4\n", 2),
            ("[model]\nsites = 4\nu = 0\n[run]\npath = \"full_eom\"\ndt = nan\n", 6),
            (
                "[model]\nsites = 4\nu = 0\n[sector]\nparity = 2\n[run]\npath = \"full_eom\"\n",
                5,
            ),
            (
                "[model]\nsites = 4\nu = 0\n[sector]\nmomentum = \"any\"\n[run]\npath = \"full_eom\"\n",
                5,
            ),
        ];
        for (text, line) in cases {
            let e = parse_config_str(text, "t").unwrap_err();
            assert_eq!(line_of(&e), Some(line), "{text:?}: {e}");
        }
        let missing = parse_config_str("[model]\nsites = 4\n", "t").unwrap_err();
        assert!(missing.to_string().contains("model.u"));
    }

    #[test]
    fn comments_and_overrides() {
        let text = "# run\n[model]\nsites = 6 # six\nu = 10\n[sector]\nmomentum = 0\nparity = -1\nstates = 5\n\
                    [modes]\nomega_max = 12.5\n[run]\npath = \"full_eom\"\ndt = 0.25\n[observables]\nwindow = \"relative\"\n";
        let c = parse_config_str(text, "t").unwrap();
        assert_eq!(c.sector.momentum, Selection::Fixed(0));
        assert_eq!(c.sector.parity, Selection::Fixed(SpinParity::Odd));
        assert_eq!(c.states, Some(5));
        assert_eq!(c.omega_max, 12.5);
        assert_eq!(c.dt, 0.25);
        assert_eq!(c.window_mode, WindowMode::Relative);
        assert!((c.model.u - 0.191).abs() < 1e-15);
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = "[model]\nsites = 6\nu = 3.7\n[sector]\nparity = \"none\"\n[run]\npath = \"perturbative\"\noutput = \"a/b\"\n";
        let c = parse_config_str(text, "t").unwrap();
        let again = parse_config_str(&c.to_text(), "t").unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_text(), again.to_text());
        assert_eq!(c.config_hash(), again.config_hash());
        let mut moved = c.clone();
        moved.output = PathBuf::from("elsewhere");
        assert_eq!(moved.config_hash(), c.config_hash());
        assert_eq!(moved.table_hash(), c.table_hash());
        moved.g0 = 1e-7;
        assert_ne!(moved.config_hash(), c.config_hash());
        assert_eq!(moved.table_hash(), c.table_hash());
    }

    #[test]
    fn automatic_sector_is_the_ground_state_sector() {
        let p = ModelParams::new(4, 10.0);
        let auto = SectorSelection::default().resolve(&p).unwrap();
        let (direct, _) = crate::operators::ground_state_sector(&p).unwrap();
        assert_eq!(auto, direct);
        let fixed = SectorSelection {
            momentum: Selection::Fixed(0),
            parity: Selection::Unused,
        };
        assert_eq!(
            fixed.resolve(&p).unwrap(),
            Sector {
                momentum: Some(0),
                parity: None
            }
        );
    }

    #[test]
    fn output_root_applies_to_relative_paths() {
        let mut c = RunConfig::new(4, 0.0, PathKind::AnalyticU0);
        assert_eq!(c.output_dir(Some(Path::new("/r"))), PathBuf::from("/r/output"));
        c.output = PathBuf::from("/abs");
        assert_eq!(c.output_dir(Some(Path::new("/r"))), PathBuf::from("/abs"));
    }
}

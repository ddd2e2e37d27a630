//! Checkpointed run: eigenstates, transition currents, per-mode photonic
//! states and reduced spectra, each persisted under the output directory.
//!
//! ```text
//! <out>/config.toml     canonical configuration
//! <out>/eigenvalues.csv field-free spectrum of the sector
//! <out>/markers.csv     Mott gap and band width
//! <out>/currents.bin    transition-current table (see `persist`)
//! <out>/modes.jsonl     one record per finished mode
//! <out>/checkpoint.json hashes the mode file belongs to
//! <out>/spectrum.csv    summary per mode
//! <out>/manifest.json   written last
//! ```
//!
//! A rerun reuses a current table whose header hash matches the
//! configuration and continues the mode file where it stopped.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{parse_config_str, PathKind, RunConfig};
use crate::drive::time_grid;
use crate::dynamics::{diagonalize_field_free, stream_transition_currents, PropagationOptions};
use crate::error::{Error, Result};
use crate::lattice::SectorBasis;
use crate::observables::{
    fourier_transform, mandel_q, min_quadrature_variance, overlay_scaled, quantum_spectrum, semiclassical_spectrum,
    squeezing_db, time_resolved_occupation, window_average, window_average_defined, SpectrumKind,
};
use crate::operators::{mott_gap, single_particle_bandwidth};
use crate::persist::{
    append_mode_records, file_sha256, read_mode_records, truncate_mode_records, write_atomic, CsvTable, ModeRecord,
    TableReader, TableWriter,
};
use crate::photonics::{
    coherent_amplitude, integrate_modes, perturbative_state, IntegratorOptions, ModeConfig, ModeStateSet,
};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
/// Fock level above which the tail population is recorded.
pub const TAIL_LEVEL: usize = 15;
/// Modes integrated per pass over the table; also the resume granularity.
const MODE_BATCH: usize = 40;
const CHUNK_BYTES: usize = 256 << 20;

const CONFIG_FILE: &str = "config.toml";
const EIGEN_FILE: &str = "eigenvalues.csv";
const MARKERS_FILE: &str = "markers.csv";
const TABLE_FILE: &str = "currents.bin";
const MODES_FILE: &str = "modes.jsonl";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const SPECTRUM_FILE: &str = "spectrum.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Done,
    /// Valid output from an earlier run was reused.
    Reused,
    Failed,
    NotRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub config_hash: String,
    pub table_hash: String,
    pub sector: String,
    pub complete: bool,
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
    pub config: String,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

pub const STAGES: [&str; 4] = ["eigen", "currents", "modes", "spectrum"];

#[derive(Serialize, Deserialize, PartialEq)]
struct Checkpoint {
    config_hash: String,
    table_hash: String,
}

struct Run<'a> {
    config: &'a RunConfig,
    dir: PathBuf,
    stages: Vec<StageRecord>,
}

impl Run<'_> {
    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn timed<T>(&mut self, name: &str, body: impl FnOnce(&Self) -> Result<(T, StageStatus, String)>) -> Result<T> {
        let start = Instant::now();
        let out = body(self);
        let seconds = start.elapsed().as_secs_f64();
        let rec = self.stages.iter_mut().find(|s| s.name == name).expect("known stage");
        rec.seconds = seconds;
        match out {
            Ok((v, status, detail)) => {
                rec.status = status;
                rec.detail = detail;
                Ok(v)
            }
            Err(e) => {
                rec.status = StageStatus::Failed;
                rec.detail = e.to_string();
                Err(e)
            }
        }
    }
}

/// Run every stage and write the manifest. On failure the manifest is still
/// written, with `complete = false` and the failing stage marked.
pub fn run_pipeline(config: &RunConfig, output_root: Option<&Path>) -> Result<RunManifest> {
    config.validate()?;
    let dir = config.output_dir(output_root);
    fs::create_dir_all(&dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.workers > 0 {
        builder = builder.num_threads(config.workers);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::param(format!("cannot start {} workers: {e}", config.workers)))?;

    let mut run = Run {
        config,
        dir: dir.clone(),
        stages: STAGES
            .iter()
            .map(|s| StageRecord {
                name: s.to_string(),
                status: StageStatus::NotRun,
                seconds: 0.0,
                detail: String::new(),
            })
            .collect(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    // A stale manifest must not vouch for outputs that are about to change.
    let _ = fs::remove_file(&manifest_path);

    let mut sector_name = String::new();
    let outcome = pool.install(|| run_stages(&mut run, &mut sector_name));

    let mut files = Vec::new();
    for name in [
        CONFIG_FILE,
        EIGEN_FILE,
        MARKERS_FILE,
        TABLE_FILE,
        MODES_FILE,
        SPECTRUM_FILE,
    ] {
        let p = dir.join(name);
        if p.is_file() {
            files.push(FileRecord {
                path: name.to_string(),
                sha256: file_sha256(&p)?,
            });
        }
    }
    let manifest = RunManifest {
        code_version: CODE_VERSION.to_string(),
        config_hash: config.config_hash(),
        table_hash: config.table_hash(),
        sector: sector_name,
        complete: outcome.is_ok(),
        error: outcome.as_ref().err().map(|e| e.to_string()),
        stages: run.stages,
        files,
        config: config.to_text(),
    };
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    outcome.map(|_| manifest)
}

fn run_stages(run: &mut Run<'_>, sector_name: &mut String) -> Result<()> {
    let c = run.config;
    write_atomic(&run.file(CONFIG_FILE), c.to_text().as_bytes())?;

    let (basis, eigs) = run.timed("eigen", |r| {
        let sector = c.sector.resolve(&c.model)?;
        let half = c.model.sites / 2;
        let basis = SectorBasis::build(c.model.sites, half, half, sector)?;
        let eigs = diagonalize_field_free(&basis, &c.model)?;
        let wl = c.pulse.omega_l;
        let e0 = eigs.energies[0];
        let mut t = CsvTable::new(&["index", "energy", "energy_over_wL", "excitation_over_wL"]);
        for (i, &e) in eigs.energies.iter().enumerate() {
            t.push(vec![Some(i as f64), Some(e), Some(e / wl), Some((e - e0) / wl)])?;
        }
        t.write(&r.file(EIGEN_FILE))?;
        let gap = mott_gap(&c.model)?;
        let band = single_particle_bandwidth(&c.model)?;
        let mut m = CsvTable::new(&["ground_energy_over_wL", "mott_gap_over_wL", "band_over_wL"]);
        m.push(vec![Some(e0 / wl), Some(gap / wl), Some(band / wl)])?;
        m.write(&r.file(MARKERS_FILE))?;
        let detail = format!("sector {sector}, dimension {}", basis.dimension());
        Ok(((basis, eigs), StageStatus::Done, detail))
    })?;
    *sector_name = basis.sector().to_string();

    let table_hash = c.table_hash();
    let channels = match c.path {
        PathKind::AnalyticU0 => 1,
        _ => c.states.unwrap_or(eigs.count()).min(eigs.count()),
    };
    run.timed("currents", |r| {
        let path = r.file(TABLE_FILE);
        let grid = time_grid(&c.pulse, c.dt)?;
        if let Ok(reader) = TableReader::open(&path) {
            let h = reader.header();
            if h.config_hash == table_hash && h.channels == channels && h.times == grid {
                return Ok(((), StageStatus::Reused, format!("{channels} channels")));
            }
        }
        let mut writer = TableWriter::create(&path, channels, &grid, &table_hash)?;
        let opts = PropagationOptions {
            dt: c.dt,
            krylov_dim: c.krylov_dim,
        };
        let report = stream_transition_currents(
            eigs.vectors[..channels].to_vec(),
            &basis,
            &c.model,
            &c.pulse,
            &opts,
            |_, _, s| writer.push(s),
        )?;
        writer.finish()?;
        let detail = format!(
            "{channels} channels, {} steps, max norm drift {:.3e}",
            report.steps, report.max_norm_drift
        );
        Ok(((), StageStatus::Done, detail))
    })?;

    let omegas = c.modes();
    let records = run.timed("modes", |r| {
        let (records, resumed) = integrate_all_modes(c, &r.dir, &omegas, &table_hash)?;
        let status = if resumed == omegas.len() {
            StageStatus::Reused
        } else {
            StageStatus::Done
        };
        Ok((
            records,
            status,
            format!("{} modes, {resumed} from checkpoint", omegas.len()),
        ))
    })?;

    run.timed("spectrum", |r| {
        let mut reader = TableReader::open(&r.file(TABLE_FILE))?;
        let times = reader.header().times.clone();
        let j0 = reader.diagonal(0)?;
        let summary = spectrum_table(c, &times, &j0, &omegas, &records)?;
        summary.write(&r.file(SPECTRUM_FILE))?;
        Ok(((), StageStatus::Done, String::new()))
    })
}

/// Finish every mode, resuming from `modes.jsonl`. Returns the records in
/// grid order and how many were already present.
fn integrate_all_modes(
    c: &RunConfig,
    dir: &Path,
    omegas: &[f64],
    table_hash: &str,
) -> Result<(Vec<ModeRecord>, usize)> {
    let modes_path = dir.join(MODES_FILE);
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let ckpt = Checkpoint {
        config_hash: c.config_hash(),
        table_hash: table_hash.to_string(),
    };
    let matches = fs::read_to_string(&ckpt_path)
        .ok()
        .and_then(|s| serde_json::from_str::<Checkpoint>(&s).ok())
        .is_some_and(|old| old == ckpt);
    let mut done = if matches && modes_path.exists() {
        read_mode_records(&modes_path)?
    } else {
        Vec::new()
    };
    // Keep the prefix that agrees with the current grid.
    let wl = c.pulse.omega_l;
    let valid = done.iter().zip(omegas).take_while(|(r, &w)| r.ratio == w / wl).count();
    if valid == 0 {
        let _ = fs::remove_file(&modes_path);
        done.clear();
    } else {
        // Also drops a torn last line before appending.
        truncate_mode_records(&modes_path, valid)?;
        done.truncate(valid);
    }
    write_atomic(&ckpt_path, serde_json::to_string(&ckpt)?.as_bytes())?;
    let resumed = done.len();

    let table_path = dir.join(TABLE_FILE);
    for batch in omegas[resumed..].chunks(MODE_BATCH) {
        let modes = batch
            .iter()
            .map(|&w| ModeConfig::new(w, c.g0, c.fock_cutoff))
            .collect::<Result<Vec<_>>>()?;
        let mut reader = TableReader::open(&table_path)?;
        let records = match c.path {
            PathKind::AnalyticU0 => {
                let times = reader.header().times.clone();
                let j0 = reader.diagonal(0)?;
                let t_end = *times.last().unwrap();
                modes
                    .iter()
                    .map(|md| {
                        let beta = coherent_amplitude(&times, &j0, md, t_end);
                        ModeRecord {
                            ratio: md.omega / wl,
                            moments: beta.moments(),
                            levels: 0,
                            tail_population: poisson_tail(beta.n_mean(), TAIL_LEVEL, c.fock_cutoff),
                        }
                    })
                    .collect()
            }
            PathKind::Perturbative => perturbative_state(&mut reader, &modes, 0, CHUNK_BYTES)?
                .iter()
                .map(|s| state_record(s, wl))
                .collect(),
            PathKind::FullEom => {
                let opts = IntegratorOptions {
                    chunk_bytes: CHUNK_BYTES,
                    ..Default::default()
                };
                integrate_modes(&mut reader, &modes, &opts)?
                    .iter()
                    .map(|s| state_record(s, wl))
                    .collect::<Vec<_>>()
            }
        };
        append_mode_records(&modes_path, &records)?;
        done.extend(records);
    }
    Ok((done, resumed))
}

fn state_record(s: &ModeStateSet, omega_l: f64) -> ModeRecord {
    ModeRecord {
        ratio: s.mode.omega / omega_l,
        moments: s.moments(),
        levels: s.levels(),
        tail_population: s.tail_population(TAIL_LEVEL),
    }
}

/// `P(n > level)` of a Poisson distribution with mean `x`, truncated at
/// `cutoff`. Summed upwards so tiny means do not cancel against 1.
fn poisson_tail(x: f64, level: usize, cutoff: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut term = (-x).exp();
    let mut tail = 0.0;
    for n in 1..=cutoff {
        term *= x / n as f64;
        if n > level {
            tail += term;
        }
    }
    tail
}

pub const SPECTRUM_COLUMNS: [&str; 8] = [
    "omega_over_wL",
    "S_quantum",
    "S_classical",
    "Q",
    "eta_dB",
    "n_mean",
    "n2_mean",
    "min_variance",
];

fn spectrum_table(
    c: &RunConfig,
    times: &[f64],
    j0: &[f64],
    omegas: &[f64],
    records: &[ModeRecord],
) -> Result<CsvTable> {
    let wl = c.pulse.omega_l;
    let kind = match c.path {
        PathKind::FullEom => SpectrumKind::Quantum,
        PathKind::AnalyticU0 => SpectrumKind::AnalyticU0,
        PathKind::Perturbative => SpectrumKind::Perturbative,
    };
    let n: Vec<f64> = records.iter().map(|r| r.moments.n).collect();
    let quantum = quantum_spectrum(omegas, &n, c.g0, wl, kind)?;
    let classical = overlay_scaled(&semiclassical_spectrum(times, j0, omegas, wl));
    let mut t = CsvTable::new(&SPECTRUM_COLUMNS);
    for (i, r) in records.iter().enumerate() {
        let m = &r.moments;
        t.push(vec![
            Some(r.ratio),
            Some(quantum.values[i]),
            Some(classical.values[i]),
            mandel_q(m),
            Some(squeezing_db(m)),
            Some(m.n),
            Some(m.n2),
            Some(min_quadrature_variance(m)),
        ])?;
    }
    Ok(t)
}

fn require(dir: &Path, name: &str, stage: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::MissingStage {
            stage: stage.to_string(),
            path: p,
        })
    }
}

fn column(table: &CsvTable, name: &str, path: &Path) -> Result<Vec<Option<f64>>> {
    table.column(name).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        msg: format!("missing column `{name}`"),
    })
}

fn dense(values: Vec<Option<f64>>, name: &str, path: &Path) -> Result<Vec<f64>> {
    values
        .into_iter()
        .map(|v| {
            v.ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                msg: format!("empty cell in `{name}`"),
            })
        })
        .collect()
}

/// Channels shown in the transition-current spectra.
pub const FIG1_CHANNELS: usize = 8;
/// Harmonics whose occupation is followed in time.
pub const FIG5_HARMONICS: [u32; 4] = [2, 4, 5, 6];

/// Write the figure data next to the manifest in `figures/` and return the
/// files written.
pub fn export_figures_data(manifest_path: &Path) -> Result<Vec<PathBuf>> {
    if !manifest_path.exists() {
        return Err(Error::MissingStage {
            stage: "manifest".into(),
            path: manifest_path.to_path_buf(),
        });
    }
    let manifest = RunManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let c = parse_config_str(&manifest.config, &manifest_path.display().to_string())?;
    let wl = c.pulse.omega_l;

    let eig_path = require(&dir, EIGEN_FILE, "eigen")?;
    let markers_path = require(&dir, MARKERS_FILE, "eigen")?;
    let table_path = require(&dir, TABLE_FILE, "currents")?;
    let spec_path = require(&dir, SPECTRUM_FILE, "spectrum")?;
    let out = dir.join("figures");
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();

    let mut reader = TableReader::open(&table_path)?;
    let times = reader.header().times.clone();
    let channels = reader.header().channels;
    let omegas = c.modes();

    // Transition-current spectra ω² |j̃_{0,n}(ω)|².
    let shown = channels.min(FIG1_CHANNELS);
    let names: Vec<String> = (0..shown).map(|n| format!("j0_{n}")).collect();
    let mut header = vec!["omega_over_wL"];
    header.extend(names.iter().map(String::as_str));
    let series = (0..shown).map(|n| reader.series(0, n)).collect::<Result<Vec<_>>>()?;
    let cols: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        series
            .par_iter()
            .map(|s| {
                omegas
                    .iter()
                    .map(|&w| w * w * fourier_transform(&times, s, w).norm_sqr())
                    .collect()
            })
            .collect()
    };
    let mut fig1 = CsvTable::new(&header);
    for (i, &w) in omegas.iter().enumerate() {
        let mut row = vec![Some(w / wl)];
        row.extend(cols.iter().map(|c| Some(c[i])));
        fig1.push(row)?;
    }
    written.push(write_csv(&fig1, &out, "fig1.csv")?);

    let spec = CsvTable::read(&spec_path)?;
    let ratio = dense(column(&spec, "omega_over_wL", &spec_path)?, "omega_over_wL", &spec_path)?;
    let s_q = dense(column(&spec, "S_quantum", &spec_path)?, "S_quantum", &spec_path)?;
    let s_c = dense(column(&spec, "S_classical", &spec_path)?, "S_classical", &spec_path)?;
    let q = column(&spec, "Q", &spec_path)?;
    let eta = dense(column(&spec, "eta_dB", &spec_path)?, "eta_dB", &spec_path)?;

    let mut fig2 = CsvTable::new(&["omega_over_wL", "S_quantum", "S_classical", "odd_harmonic"]);
    for i in 0..ratio.len() {
        let nearest = ratio[i].round();
        let odd = (ratio[i] - nearest).abs() < 1e-9 && nearest as i64 % 2 == 1;
        fig2.push(vec![
            Some(ratio[i]),
            Some(s_q[i]),
            Some(s_c[i]),
            Some(if odd { 1.0 } else { 0.0 }),
        ])?;
    }
    written.push(write_csv(&fig2, &out, "fig2.csv")?);

    let eig = CsvTable::read(&eig_path)?;
    let markers = CsvTable::read(&markers_path)?;
    let mut fig3 = CsvTable::new(&["index", "energy_over_wL", "excitation_over_wL"]);
    let e = dense(column(&eig, "energy_over_wL", &eig_path)?, "energy_over_wL", &eig_path)?;
    let x = dense(
        column(&eig, "excitation_over_wL", &eig_path)?,
        "excitation_over_wL",
        &eig_path,
    )?;
    for i in 0..e.len() {
        fig3.push(vec![Some(i as f64), Some(e[i]), Some(x[i])])?;
    }
    written.push(write_csv(&fig3, &out, "fig3.csv")?);
    written.push(write_csv(&markers, &out, "fig3_markers.csv")?);

    let h = c.window_halfwidth;
    let mode = c.window_mode;
    let mut fig4 = CsvTable::new(&[
        "omega_over_wL",
        "S_quantum",
        "S_classical",
        "Q",
        "eta_dB",
        "S_quantum_avg",
        "Q_avg",
        "eta_dB_avg",
    ]);
    for i in 0..ratio.len() {
        let w = ratio[i];
        fig4.push(vec![
            Some(w),
            Some(s_q[i]),
            Some(s_c[i]),
            q[i],
            Some(eta[i]),
            window_average(&ratio, &s_q, w, h, mode).ok(),
            window_average_defined(&ratio, &q, w, h, mode).ok(),
            window_average(&ratio, &eta, w, h, mode).ok(),
        ])?;
    }
    written.push(write_csv(&fig4, &out, "fig4.csv")?);

    let j0 = reader.diagonal(0)?;
    let occ: Vec<Vec<f64>> = FIG5_HARMONICS
        .iter()
        .map(|&k| time_resolved_occupation(&times, &j0, k as f64 * wl))
        .collect();
    let names: Vec<String> = FIG5_HARMONICS.iter().map(|k| format!("h{k}")).collect();
    let mut header = vec!["t", "t_over_period"];
    header.extend(names.iter().map(String::as_str));
    let period = 2.0 * std::f64::consts::PI / wl;
    let mut fig5 = CsvTable::new(&header);
    for (k, &t) in times.iter().enumerate() {
        let mut row = vec![Some(t), Some(t / period)];
        row.extend(occ.iter().map(|o| Some(o[k])));
        fig5.push(row)?;
    }
    written.push(write_csv(&fig5, &out, "fig5.csv")?);
    Ok(written)
}

fn write_csv(t: &CsvTable, dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    t.write(&p)?;
    Ok(p)
}

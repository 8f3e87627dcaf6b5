//! Output records and file writers shared by the subcommands.
//!
//! Every data file carries provenance: JSON outputs embed a
//! [`RunManifest`], CSV outputs get one as a `<file>.manifest.json`
//! sidecar. Wall-clock timings are never written into data files (they
//! would break byte-for-byte reproducibility); they go to a separate
//! timing sidecar the manifest points at.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sbr_core::channel;
use sbr_core::scene::Scene;
use sbr_core::tracer::{sequence_key, Interaction, InteractionKind};
use sbr_core::Vec3;

/// Provenance block: tool identity, full flag echo, and the scene
/// fingerprint, so downstream tooling can refuse to mix incompatible
/// outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The pipeline itself is deterministic; the seed is recorded so
    /// reruns can assert byte-identical outputs.
    pub seed: u64,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_sha256: Option<String>,
    /// Name of the timing sidecar written next to the output, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_file: Option<String>,
}

pub fn manifest(
    command: &str,
    config: serde_json::Value,
    scene_sha256: Option<String>,
    timings_file: Option<String>,
) -> RunManifest {
    RunManifest {
        tool: "sbrt".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed: 0,
        config,
        scene_sha256,
        timings_file,
    }
}

/// Scene fingerprint: SHA-256 over the compact JSON of the on-disk
/// scene model.
pub fn scene_hash(scene: &Scene) -> Result<String> {
    let text = serde_json::to_string(&scene.to_file_model())?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// One traced path, flattened for plotting and comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    /// Compact identity: "LOS", "R3", "R3>R7", "D0", ...
    pub sequence: String,
    pub interactions: Vec<Interaction>,
    pub launch_direction: Vec3,
    pub arrival_direction: Vec3,
    pub length_m: f64,
    /// Angular reception miss in degrees; absent for exact
    /// backward-solved paths, which have no miss by construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_deg: Option<f64>,
    pub aod_azimuth_deg: f64,
    pub aod_pitch_deg: f64,
    pub aoa_azimuth_deg: f64,
    pub aoa_pitch_deg: f64,
    pub delay_ns: f64,
    pub power_dbm: f64,
    pub reflections: usize,
    pub diffractions: usize,
}

/// Human-readable form of a sequence key: reflections as `R<face>`,
/// diffractions as `D<wedge>`, joined by `>`; the empty sequence is
/// line of sight.
pub fn sequence_string(interactions: &[Interaction]) -> String {
    if interactions.is_empty() {
        return "LOS".to_string();
    }
    interactions
        .iter()
        .map(|i| match i.kind {
            InteractionKind::Reflection { face } => format!("R{face}"),
            InteractionKind::Diffraction { wedge, .. } => format!("D{wedge}"),
        })
        .collect::<Vec<_>>()
        .join(">")
}

/// Build the full record for one path, computing channel metrics.
pub fn path_record(
    scene: &Scene,
    interactions: &[Interaction],
    launch_direction: Vec3,
    arrival_direction: Vec3,
    length_m: f64,
    error_deg: Option<f64>,
    tx_power_dbm: f64,
) -> PathRecord {
    let m = channel::path_metrics(
        scene,
        interactions,
        launch_direction,
        arrival_direction,
        length_m,
        tx_power_dbm,
    );
    PathRecord {
        sequence: sequence_string(interactions),
        interactions: interactions.to_vec(),
        launch_direction,
        arrival_direction,
        length_m,
        error_deg,
        aod_azimuth_deg: m.aod.azimuth.to_degrees(),
        aod_pitch_deg: m.aod.pitch.to_degrees(),
        aoa_azimuth_deg: m.aoa.azimuth.to_degrees(),
        aoa_pitch_deg: m.aoa.pitch.to_degrees(),
        delay_ns: m.delay * 1e9,
        power_dbm: m.power_dbm,
        reflections: m.reflections,
        diffractions: m.diffractions,
    }
}

/// Deterministic output order: lexicographic over the sequence key, so
/// line of sight comes first, then reflections by face id, and so on.
pub fn sort_records(records: &mut [PathRecord]) {
    records.sort_by_key(|r| sequence_key(&r.interactions));
}

/// Top-level schema of a paths JSON file.
#[derive(Debug, Serialize, Deserialize)]
pub struct PathsFile {
    pub manifest: RunManifest,
    pub paths: Vec<PathRecord>,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_paths_file(path: &Path) -> Result<PathsFile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading paths file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing paths file {}", path.display()))
}

/// Write a CSV with a fixed header. Floats are formatted with the
/// shortest round-trip representation, which is deterministic.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Sidecar manifest next to a CSV output.
pub fn write_manifest_sidecar(out: &Path, manifest: &RunManifest) -> Result<()> {
    write_json(&sidecar_path(out, "manifest.json"), manifest)
}

/// Name (no directory) of a sidecar derived from an output file name.
pub fn sidecar_name(out: &Path, suffix: &str) -> String {
    let base = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    format!("{base}.{suffix}")
}

fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    out.with_file_name(sidecar_name(out, suffix))
}

#[derive(Serialize)]
struct StageRow {
    stage: &'static str,
    wall_ms: f64,
}

#[derive(Serialize)]
struct TimingsFile {
    stages: Vec<StageRow>,
}

/// Accumulates per-stage wall-clock laps and writes them as the timing
/// sidecar of an output file.
pub struct StageClock {
    stages: Vec<StageRow>,
    last: Instant,
}

impl StageClock {
    pub fn start() -> StageClock {
        StageClock { stages: Vec::new(), last: Instant::now() }
    }

    /// Close the current stage under `name` and start the next one.
    pub fn lap(&mut self, name: &'static str) {
        let now = Instant::now();
        let wall_ms = now.duration_since(self.last).as_secs_f64() * 1e3;
        self.stages.push(StageRow { stage: name, wall_ms });
        self.last = now;
    }

    pub fn write_sidecar(self, out: &Path) -> Result<()> {
        write_json(&sidecar_path(out, "timings.json"), &TimingsFile { stages: self.stages })
    }
}

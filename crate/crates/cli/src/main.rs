//! Command-line frontend for the ray tracing pipeline.
//!
//! Five subcommands: `trace` (forward shooting or exact backward
//! solve), `refine` (iterative cone refinement of forward-traced
//! paths), `compare` (per-path deltas between two runs on the same
//! scene), `density-map` (launch-grid uniformity data), and `bench`
//! (per-stage wall-clock timing). All outputs are machine-readable;
//! plotting is left to external tools.

mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sbr_core::image_method::{self, ImagePath};
use sbr_core::launcher::{self, LaunchGrid, Polyhedron, Scheme};
use sbr_core::refiner::{self, RefineConfig, RefinementTrace};
use sbr_core::scene::{self, Material, Scene};
use sbr_core::tracer::{self, sequence_key, PropagationPath, TraceConfig};
use sbr_core::{geometry, Vec3};

use report::{PathRecord, PathsFile};

#[derive(Parser)]
#[command(
    name = "sbrt",
    version,
    about = "Deterministic radio ray tracer: forward shooting with iterative \
             cone refinement, plus an exact mirror-image reference solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace propagation paths and write paths.json
    Trace(TraceArgs),
    /// Trace, then refine each path's launch direction; write paths.json
    Refine(RefineArgs),
    /// Per-path deltas between two paths.json files from the same scene
    Compare(CompareArgs),
    /// Launch-grid density map as CSV (x, y, nearest-neighbor angle)
    DensityMap(DensityArgs),
    /// Wall-clock timing of the backward solve, the forward trace, and
    /// refinement on one scene
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    /// Forward shooting-and-bouncing-rays
    Sbr,
    /// Exact backward mirror-image solve
    Im,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SchemeArg {
    Equidistant,
    Equiangular,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Equidistant => Scheme::Equidistant,
            SchemeArg::Equiangular => Scheme::Equiangular,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SolidArg {
    Icosahedron,
    Octahedron,
    Tetrahedron,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GenScene {
    /// Rectangular room, default 5 m x 4 m x 3 m concrete
    Shoebox,
    /// Ground plane with a triangular ridge; its apex is the only wedge
    Ridge,
}

/// Scene source: a JSON file or a built-in generator, with optional
/// endpoint and frequency overrides.
#[derive(Args, Serialize)]
struct SceneArgs {
    /// Scene JSON file
    #[arg(long, conflicts_with = "gen")]
    scene: Option<PathBuf>,
    /// Built-in scene generator
    #[arg(long, value_enum)]
    gen: Option<GenScene>,
    /// Transmitter position override, as x,y,z in meters
    #[arg(long, value_name = "X,Y,Z")]
    tx: Option<String>,
    /// Receiver position override, as x,y,z in meters
    #[arg(long, value_name = "X,Y,Z")]
    rx: Option<String>,
    /// Carrier frequency override, Hz
    #[arg(long)]
    frequency_hz: Option<f64>,
    /// Shoebox generator dimensions, as x,y,z in meters
    #[arg(long, value_name = "X,Y,Z")]
    dims: Option<String>,
    /// Shoebox generator: split every wall into NxN cells
    #[arg(long, default_value_t = 1)]
    divisions: usize,
}

#[derive(Args, Serialize)]
struct TraceArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, value_enum, default_value = "sbr")]
    method: Method,
    /// Subdivision count per icosahedron edge (10n^2+2 rays)
    #[arg(long, default_value_t = 21)]
    n: usize,
    #[arg(long, value_enum, default_value = "equiangular")]
    scheme: SchemeArg,
    /// Maximum number of reflections per path
    #[arg(long, default_value_t = 2)]
    refl_order: usize,
    /// Maximum number of diffractions per path (0 or 1)
    #[arg(long, default_value_t = 0)]
    diff_order: usize,
    /// Azimuth samples on the diffraction cone of a captured wedge
    #[arg(long, default_value_t = 180)]
    keller_samples: usize,
    /// Transmit power, dBm
    #[arg(long, default_value_t = 0.0)]
    tx_power_dbm: f64,
    /// Output JSON file
    #[arg(long, default_value = "paths.json")]
    out: PathBuf,
    /// Also write a power-delay profile CSV
    #[arg(long)]
    pdp: Option<PathBuf>,
    /// Save the traced scene (useful with --gen)
    #[arg(long)]
    dump_scene: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct RefineArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 21)]
    n: usize,
    #[arg(long, value_enum, default_value = "equiangular")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 2)]
    refl_order: usize,
    #[arg(long, default_value_t = 0)]
    diff_order: usize,
    #[arg(long, default_value_t = 180)]
    keller_samples: usize,
    #[arg(long, default_value_t = 0.0)]
    tx_power_dbm: f64,
    /// Refinement iterations per path
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Stop a path early once its error angle falls below this
    #[arg(long, default_value_t = 0.01)]
    tolerance_deg: f64,
    /// Write per-iteration convergence rows (vs the exact solver) here
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value = "paths.json")]
    out: PathBuf,
    /// Also write a power-delay profile CSV
    #[arg(long)]
    pdp: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// Forward-traced (or refined) paths.json
    #[arg(long)]
    sbr: PathBuf,
    /// Reference paths.json, typically from --method im
    #[arg(long)]
    im: PathBuf,
    #[arg(long, default_value = "compare.csv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct DensityArgs {
    #[arg(long, default_value_t = 21)]
    n: usize,
    #[arg(long, value_enum, default_value = "equiangular")]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value = "icosahedron")]
    solid: SolidArg,
    #[arg(long, default_value = "density.csv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 21)]
    n: usize,
    #[arg(long, value_enum, default_value = "equiangular")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 3)]
    refl_order: usize,
    #[arg(long, default_value_t = 0)]
    diff_order: usize,
    #[arg(long, default_value_t = 180)]
    keller_samples: usize,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Trace(args) => cmd_trace(args),
        Command::Refine(args) => cmd_refine(args),
        Command::Compare(args) => cmd_compare(args),
        Command::DensityMap(args) => cmd_density(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn parse_triple(text: &str, flag: &str) -> Result<Vec3> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("{flag} expects x,y,z but got {text:?}");
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .with_context(|| format!("{flag}: {part:?} is not a number"))?;
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn concrete() -> Material {
    Material { name: "concrete".to_string(), eps_r: 5.31, sigma: 0.139 }
}

/// Build the scene from a file or a generator, applying any endpoint
/// and frequency overrides, and surface mesh warnings on stderr.
fn build_scene(args: &SceneArgs) -> Result<Scene> {
    let tx = args.tx.as_deref().map(|t| parse_triple(t, "--tx")).transpose()?;
    let rx = args.rx.as_deref().map(|t| parse_triple(t, "--rx")).transpose()?;
    let scene = if let Some(path) = &args.scene {
        let loaded = Scene::load(path)
            .with_context(|| format!("loading scene file {}", path.display()))?;
        if tx.is_some() || rx.is_some() || args.frequency_hz.is_some() {
            let mut model = loaded.to_file_model();
            if let Some(p) = tx {
                model.tx = p;
            }
            if let Some(p) = rx {
                model.rx = p;
            }
            if let Some(f) = args.frequency_hz {
                model.frequency_hz = f;
            }
            Scene::from_file_model(model).context("applying scene overrides")?
        } else {
            loaded
        }
    } else {
        let frequency = args.frequency_hz.unwrap_or(2.4e9);
        match args.gen {
            Some(GenScene::Shoebox) => {
                let dims = args
                    .dims
                    .as_deref()
                    .map(|t| parse_triple(t, "--dims"))
                    .transpose()?
                    .unwrap_or(Vec3::new(5.0, 4.0, 3.0));
                scene::make_shoebox_divided(
                    dims,
                    concrete(),
                    tx.unwrap_or(Vec3::new(1.0, 1.1, 1.5)),
                    rx.unwrap_or(Vec3::new(4.0, 2.9, 1.3)),
                    frequency,
                    args.divisions,
                )
                .context("generating shoebox scene")?
            }
            Some(GenScene::Ridge) => scene::make_ridge_scene(
                3.0,
                3.0,
                40.0,
                60.0,
                concrete(),
                tx.unwrap_or(Vec3::new(-12.0, 0.5, 1.5)),
                rx.unwrap_or(Vec3::new(14.0, -0.8, 1.8)),
                frequency,
            )
            .context("generating ridge scene")?,
            None => bail!("no scene given: pass --scene FILE or --gen shoebox|ridge"),
        }
    };
    for warning in &scene.warnings {
        eprintln!("scene warning: {warning}");
    }
    Ok(scene)
}

fn build_grid(n: usize, scheme: SchemeArg) -> LaunchGrid {
    let ico = launcher::build_icosahedron();
    subdivide(&ico, n, scheme)
}

fn subdivide(poly: &Polyhedron, n: usize, scheme: SchemeArg) -> LaunchGrid {
    match scheme {
        SchemeArg::Equidistant => launcher::subdivide_equidistant(poly, n),
        SchemeArg::Equiangular => launcher::subdivide_equiangular(poly, n),
    }
}

/// Forward trace: shoot the grid, drop duplicate sequences, drop
/// candidates that fail re-validation against real face bounds.
fn forward_trace(scene: &Scene, grid: &LaunchGrid, cfg: &TraceConfig) -> Vec<PropagationPath> {
    tracer::dedup_paths(tracer::shoot(scene, grid, cfg))
        .into_iter()
        .filter(|p| tracer::validate_path(p, scene))
        .collect()
}

/// Backward solve: exact reflection paths up to the order, plus the
/// single-wedge diffraction paths when requested.
fn backward_solve(scene: &Scene, refl_order: usize, diff_order: usize) -> Vec<ImagePath> {
    let mut paths = image_method::im_reflections(scene, refl_order);
    if diff_order >= 1 {
        paths.extend(image_method::im_single_diffraction(scene));
    }
    paths
}

fn write_pdp(path: &Path, records: &[PathRecord], method: &str) -> Result<()> {
    let mut rows: Vec<(f64, f64, String)> = records
        .iter()
        .enumerate()
        .map(|(id, r)| {
            (
                r.delay_ns,
                r.power_dbm,
                format!(
                    "{},{},{method},{id},{},{}",
                    r.delay_ns, r.power_dbm, r.reflections, r.diffractions
                ),
            )
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let rows: Vec<String> = rows.into_iter().map(|(_, _, row)| row).collect();
    report::write_csv(path, "delay_ns,power_dbm,method,path_id,refl_order,diff_order", &rows)
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    let scene = build_scene(&args.scene)?;
    if let Some(path) = &args.dump_scene {
        scene.save(path).with_context(|| format!("saving scene to {}", path.display()))?;
    }
    let sha = report::scene_hash(&scene)?;
    let mut clock = report::StageClock::start();

    let mut records = match args.method {
        Method::Sbr => {
            let grid = build_grid(args.n, args.scheme);
            clock.lap("launch");
            let cfg = TraceConfig {
                max_reflection_order: args.refl_order,
                max_diffraction_order: args.diff_order,
                n: args.n,
                scheme: args.scheme.into(),
                keller_samples: args.keller_samples,
            };
            let paths = forward_trace(&scene, &grid, &cfg);
            clock.lap("trace");
            let records: Vec<PathRecord> = paths
                .iter()
                .map(|p| {
                    report::path_record(
                        &scene,
                        &p.interactions,
                        p.launch_direction,
                        p.arrival_direction,
                        p.total_length,
                        Some(p.error_angle.to_degrees()),
                        args.tx_power_dbm,
                    )
                })
                .collect();
            clock.lap("metrics");
            records
        }
        Method::Im => {
            let paths = backward_solve(&scene, args.refl_order, args.diff_order);
            clock.lap("trace");
            let records: Vec<PathRecord> = paths
                .iter()
                .map(|p| {
                    report::path_record(
                        &scene,
                        &p.interactions,
                        p.launch_direction,
                        p.arrival_direction,
                        p.total_length,
                        None,
                        args.tx_power_dbm,
                    )
                })
                .collect();
            clock.lap("metrics");
            records
        }
    };
    report::sort_records(&mut records);

    let method = if args.method == Method::Im { "im" } else { "sbr" };
    if let Some(pdp_path) = &args.pdp {
        write_pdp(pdp_path, &records, method)?;
    }
    let timings = report::sidecar_name(&args.out, "timings.json");
    let manifest = report::manifest(
        "trace",
        serde_json::to_value(&args)?,
        Some(sha.clone()),
        Some(timings),
    );
    if let Some(pdp_path) = &args.pdp {
        report::write_manifest_sidecar(pdp_path, &manifest)?;
    }
    let count = records.len();
    report::write_json(&args.out, &PathsFile { manifest, paths: records })?;
    clock.lap("write");
    clock.write_sidecar(&args.out)?;
    println!("wrote {count} paths to {}", args.out.display());
    Ok(())
}

/// Decibel form of an error value; minus infinity marks exact zero.
fn decibels(value: f64) -> f64 {
    if value > 0.0 {
        10.0 * value.log10()
    } else {
        f64::NEG_INFINITY
    }
}

fn cmd_refine(args: RefineArgs) -> Result<()> {
    let scene = build_scene(&args.scene)?;
    let sha = report::scene_hash(&scene)?;
    let mut clock = report::StageClock::start();

    let grid = build_grid(args.n, args.scheme);
    clock.lap("launch");
    let cfg = TraceConfig {
        max_reflection_order: args.refl_order,
        max_diffraction_order: args.diff_order,
        n: args.n,
        scheme: args.scheme.into(),
        keller_samples: args.keller_samples,
    };
    let captured = tracer::dedup_paths(tracer::shoot(&scene, &grid, &cfg));
    clock.lap("trace");

    let refine_cfg = RefineConfig {
        max_iterations: args.iterations,
        angle_tolerance: args.tolerance_deg.to_radians(),
        keep_history: args.history.is_some(),
    };
    // Refinement can move a path onto a coplanar neighbor face, so two
    // captures may collapse onto one sequence; keep the better one.
    let mut kept: BTreeMap<Vec<(u8, usize)>, (PropagationPath, PropagationPath, RefinementTrace)> =
        BTreeMap::new();
    for capture in &captured {
        let (refined, trace) = refiner::refine_path(capture, &scene, &refine_cfg);
        if !trace.final_valid {
            continue;
        }
        let key = sequence_key(&refined.interactions);
        let better = kept.get(&key).is_none_or(|(_, existing, _)| {
            (refined.error_angle, refined.grid_index)
                < (existing.error_angle, existing.grid_index)
        });
        if better {
            kept.insert(key, (capture.clone(), refined, trace));
        }
    }
    clock.lap("refine");

    if let Some(history_path) = &args.history {
        let exact_paths = backward_solve(&scene, args.refl_order, args.diff_order);
        let reference: BTreeMap<Vec<(u8, usize)>, &ImagePath> =
            exact_paths.iter().map(|p| (sequence_key(&p.interactions), p)).collect();
        let mut rows = Vec::new();
        for (path_id, (key, (capture, _, trace))) in kept.iter().enumerate() {
            let Some(exact) = reference.get(key) else {
                eprintln!(
                    "history: no exact reference for sequence {}; skipping",
                    report::sequence_string(&capture.interactions)
                );
                continue;
            };
            let exact_power = sbr_core::channel::path_power(
                &scene,
                &exact.interactions,
                exact.total_length,
                args.tx_power_dbm,
            );
            let mut push = |i: usize, error: f64, length: f64, interactions: &[_]| {
                let error_deg = error.to_degrees();
                let power = sbr_core::channel::path_power(
                    &scene,
                    interactions,
                    length,
                    args.tx_power_dbm,
                );
                rows.push(format!(
                    "{path_id},{i},{error_deg},{},{},{}",
                    decibels(error_deg),
                    (length - exact.total_length).abs(),
                    (power - exact_power).abs()
                ));
            };
            push(0, capture.error_angle, capture.total_length, &capture.interactions);
            for rec in &trace.iterations {
                let path = rec.path.as_ref().expect("history mode keeps iteration paths");
                push(rec.index, rec.error_angle, rec.total_length, &path.interactions);
            }
        }
        report::write_csv(
            history_path,
            "path_id,i,error_deg,error_db,distance_err_m,power_err_db",
            &rows,
        )?;
    }

    let mut records: Vec<PathRecord> = kept
        .values()
        .map(|(_, refined, _)| {
            report::path_record(
                &scene,
                &refined.interactions,
                refined.launch_direction,
                refined.arrival_direction,
                refined.total_length,
                Some(refined.error_angle.to_degrees()),
                args.tx_power_dbm,
            )
        })
        .collect();
    report::sort_records(&mut records);
    clock.lap("metrics");

    if let Some(pdp_path) = &args.pdp {
        write_pdp(pdp_path, &records, "refined")?;
    }
    let timings = report::sidecar_name(&args.out, "timings.json");
    let manifest = report::manifest(
        "refine",
        serde_json::to_value(&args)?,
        Some(sha),
        Some(timings),
    );
    if let Some(pdp_path) = &args.pdp {
        report::write_manifest_sidecar(pdp_path, &manifest)?;
    }
    if let Some(history_path) = &args.history {
        report::write_manifest_sidecar(history_path, &manifest)?;
    }
    let count = records.len();
    report::write_json(&args.out, &PathsFile { manifest, paths: records })?;
    clock.lap("write");
    clock.write_sidecar(&args.out)?;
    println!("wrote {count} refined paths to {}", args.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let left = report::read_paths_file(&args.sbr)?;
    let right = report::read_paths_file(&args.im)?;
    let (Some(sha_left), Some(sha_right)) =
        (&left.manifest.scene_sha256, &right.manifest.scene_sha256)
    else {
        bail!("input manifests carry no scene hash; cannot confirm the runs share a scene");
    };
    if sha_left != sha_right {
        bail!(
            "scene hash mismatch: {} has {sha_left}, {} has {sha_right}; \
             refusing to compare paths from different scenes",
            args.sbr.display(),
            args.im.display()
        );
    }

    let index = |file: &PathsFile| -> BTreeMap<Vec<(u8, usize)>, PathRecord> {
        file.paths.iter().map(|r| (sequence_key(&r.interactions), r.clone())).collect()
    };
    let left_paths = index(&left);
    let right_paths = index(&right);

    let mut rows = Vec::new();
    let mut deltas: Vec<[f64; 4]> = Vec::new();
    for (key, l) in &left_paths {
        let Some(r) = right_paths.get(key) else {
            continue;
        };
        let d = [
            geometry::angle_between(l.launch_direction, r.launch_direction).to_degrees(),
            geometry::angle_between(l.arrival_direction, r.arrival_direction).to_degrees(),
            (l.length_m - r.length_m).abs(),
            (l.power_dbm - r.power_dbm).abs(),
        ];
        rows.push(format!("path,{},{},{},{},{}", l.sequence, d[0], d[1], d[2], d[3]));
        deltas.push(d);
    }
    for (key, l) in &left_paths {
        if !right_paths.contains_key(key) {
            rows.push(format!("unmatched_sbr,{},,,,", l.sequence));
        }
    }
    for (key, r) in &right_paths {
        if !left_paths.contains_key(key) {
            rows.push(format!("unmatched_im,{},,,,", r.sequence));
        }
    }
    if deltas.is_empty() {
        rows.push("mean,,,,,".to_string());
        rows.push("max,,,,,".to_string());
    } else {
        let count = deltas.len() as f64;
        let mut mean = [0.0; 4];
        let mut max = [0.0f64; 4];
        for d in &deltas {
            for k in 0..4 {
                mean[k] += d[k] / count;
                max[k] = max[k].max(d[k]);
            }
        }
        rows.push(format!("mean,,{},{},{},{}", mean[0], mean[1], mean[2], mean[3]));
        rows.push(format!("max,,{},{},{},{}", max[0], max[1], max[2], max[3]));
    }

    report::write_csv(
        &args.out,
        "row,sequence,d_aod_deg,d_aoa_deg,d_length_m,d_power_db",
        &rows,
    )?;
    let manifest = report::manifest(
        "compare",
        serde_json::to_value(&args)?,
        Some(sha_left.clone()),
        None,
    );
    report::write_manifest_sidecar(&args.out, &manifest)?;
    println!(
        "compared {} matched sequences ({} only in {}, {} only in {}) into {}",
        deltas.len(),
        left_paths.len() - deltas.len(),
        args.sbr.display(),
        right_paths.len() - deltas.len(),
        args.im.display(),
        args.out.display()
    );
    Ok(())
}

fn cmd_density(args: DensityArgs) -> Result<()> {
    let poly = match args.solid {
        SolidArg::Icosahedron => launcher::build_icosahedron(),
        SolidArg::Octahedron => launcher::build_octahedron(),
        SolidArg::Tetrahedron => launcher::build_tetrahedron(),
    };
    let grid = subdivide(&poly, args.n, args.scheme);
    let stats = launcher::density_stats(&grid);
    let rows: Vec<String> = stats
        .projected
        .iter()
        .zip(&stats.nn_angles)
        .map(|((x, y), angle)| format!("{x},{y},{}", angle.to_degrees()))
        .collect();
    report::write_csv(&args.out, "x,y,nearest_neighbor_angle_deg", &rows)?;
    let manifest = report::manifest("density-map", serde_json::to_value(&args)?, None, None);
    report::write_manifest_sidecar(&args.out, &manifest)?;
    println!(
        "{} directions, coefficient of variation {}",
        grid.directions.len(),
        stats.coefficient_of_variation
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let scene = build_scene(&args.scene)?;
    let sha = report::scene_hash(&scene)?;

    let start = Instant::now();
    let exact = backward_solve(&scene, args.refl_order, args.diff_order);
    let im_ms = start.elapsed().as_secs_f64() * 1e3;

    let grid = build_grid(args.n, args.scheme);
    let cfg = TraceConfig {
        max_reflection_order: args.refl_order,
        max_diffraction_order: args.diff_order,
        n: args.n,
        scheme: args.scheme.into(),
        keller_samples: args.keller_samples,
    };
    let start = Instant::now();
    let traced = forward_trace(&scene, &grid, &cfg);
    let sbr_ms = start.elapsed().as_secs_f64() * 1e3;

    let refine_cfg = RefineConfig {
        max_iterations: args.iterations,
        angle_tolerance: 0.0,
        keep_history: false,
    };
    let start = Instant::now();
    let refined: Vec<_> =
        traced.iter().map(|p| refiner::refine_path(p, &scene, &refine_cfg)).collect();
    let refine_ms = start.elapsed().as_secs_f64() * 1e3;

    let rows = vec![
        format!("im,{im_ms}"),
        format!("sbr_trace,{sbr_ms}"),
        format!("refine,{refine_ms}"),
    ];
    report::write_csv(&args.out, "stage,wall_ms", &rows)?;
    let manifest =
        report::manifest("bench", serde_json::to_value(&args)?, Some(sha), None);
    report::write_manifest_sidecar(&args.out, &manifest)?;
    println!(
        "exact solver {} paths, forward trace {} paths, {} refined; timings in {}",
        exact.len(),
        traced.len(),
        refined.len(),
        args.out.display()
    );
    Ok(())
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use lacn_twin::metrics::{compare_report, coverage_ratios, difference_heatmap, CompareReport};
use lacn_twin::optimizer::{brute_force_optimize, greedy_optimize, objective, round_robin_order};
use lacn_twin::spectrum::{build_field, calibrate_offset, drift_check, TwinModel};
use lacn_twin::synth::{synthesize, SynthConfig, TrajectorySpec};
use lacn_twin::units::round4;
use lacn_twin::validation::{
    run_validation, FoldParams, KrigingConfig, KrigingPredictor, LayerScheme, MeasurementMapping,
    MeasurementSet, NearestNeighborPredictor, Predictor, TwinPredictor,
};
use lacn_twin::{
    build_sinr_field, build_voxel_grid, BeamAssignment, NoiseModel, RadioField, SceneConfig,
    SinrField, TwinError, VoxelGrid,
};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::params::{self, Override, RunParams};
use crate::{Cli, Command, MeasurementArgs, ReportArgs, SceneArgs};

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("--threads: {e}")))?;
    }
    let parsed = cli
        .overrides
        .iter()
        .map(|r| Override::parse(r))
        .collect::<CliResult<Vec<_>>>()?;
    let (run_overrides, scene_overrides) = params::partition(parsed);
    let session = Session {
        overrides: cli.overrides.clone(),
        run_overrides,
        scene_overrides,
        seed: cli.seed,
    };

    match cli.command {
        Command::Build(a) => {
            let ctx = session.open("build", &a.scene, &[], |_| {})?;
            let (field, sinr) = fields(&ctx, &ctx.assignment, ctx.params.offset_db)?;
            write_with(&ctx.out.join("radio_field.csv"), |w| field.write_csv(&ctx.grid, w))?;
            write_with(&ctx.out.join("sinr_field.csv"), |w| sinr.write_csv(&ctx.grid, w))
        }
        Command::Calibrate(a) => {
            let extra = measurement_paths(&a.data);
            let ctx = session.open("calibrate", &a.scene, &extra, |p| {
                p.drift_threshold_db = a.drift_threshold_db.or(p.drift_threshold_db);
            })?;
            let set = load_measurements(&a.data, &ctx.scene)?;
            let bare = TwinModel::new(&ctx.scene, &ctx.assignment, 0.0).predict_measurements(&set)?;
            let fit = calibrate_offset(&bare, &set)?;
            write_json(&ctx.out.join("calibration.json"), &fit)?;
            println!(
                "offset {:.4} dB, residual RMSE {:.4} dB over {} samples",
                fit.offset_db, fit.residual_rmse_db, fit.n_samples
            );
            if let Some(threshold) = ctx.params.drift_threshold_db {
                let model = TwinModel::new(&ctx.scene, &ctx.assignment, ctx.params.offset_db);
                let drift = drift_check(&model, &set, threshold)?;
                write_json(&ctx.out.join("drift_report.json"), &drift)?;
                println!(
                    "drift RMSE {:.4} dB against threshold {:.4} dB: {}",
                    drift.rmse_db,
                    threshold,
                    if drift.drift_detected { "recalibrate" } else { "ok" }
                );
            }
            Ok(())
        }
        Command::Validate(a) => {
            let extra = measurement_paths(&a.data);
            let ctx = session.open("validate", &a.scene, &extra, |p| {
                let v = &mut p.validation;
                v.train_fraction = a.train_fraction.unwrap_or(v.train_fraction);
                v.n_folds = a.n_folds.unwrap_or(v.n_folds);
                v.layer_height_m = a.layer_height_m.unwrap_or(v.layer_height_m);
            })?;
            let set = load_measurements(&a.data, &ctx.scene)?;
            let v = &ctx.params.validation;
            let layers = LayerScheme {
                layer_height_m: v.layer_height_m,
                ..LayerScheme::default()
            };
            let twin = TwinPredictor {
                scene: &ctx.scene,
                assignment: &ctx.assignment,
            };
            let kriging = KrigingPredictor {
                config: KrigingConfig {
                    layers,
                    neighbors: v.neighbors,
                    lag_bins: v.lag_bins,
                },
            };
            let nearest = NearestNeighborPredictor { layers };
            let predictors: [&dyn Predictor; 3] = [&twin, &kriging, &nearest];
            let fold_params = FoldParams {
                train_fraction: v.train_fraction,
                n_folds: v.n_folds,
                ..FoldParams::default()
            };
            let report = run_validation(&set, &predictors, &fold_params)?;
            write_text(&ctx.out.join("validation_report.json"), &report.to_json_string())?;
            for p in &report.pooled {
                match p.rmse_db {
                    Some(r) => println!("{}: pooled RMSE {r:.4} dB over {} errors", p.predictor, p.n_errors),
                    None => println!("{}: failed on every fold", p.predictor),
                }
            }
            Ok(())
        }
        Command::Optimize(a) => {
            let extra: Vec<(&str, PathBuf)> =
                a.report.mask.iter().map(|m| ("mask", m.clone())).collect();
            let ctx = session.open("optimize", &a.scene, &extra, |p| {
                let w = &mut p.weights;
                w.alpha = a.weights.alpha.unwrap_or(w.alpha);
                w.beta = a.weights.beta.unwrap_or(w.beta);
                w.margin_cap_db = a.weights.margin_cap_db.unwrap_or(w.margin_cap_db);
                w.epsilon_gain = a.weights.epsilon_gain.unwrap_or(w.epsilon_gain);
                p.brute_force_cap = a.cap.unwrap_or(p.brute_force_cap);
                report_overrides(&a.report, p);
            })?;
            // The optimizer models the uncalibrated twin; a global offset is
            // exactly a uniform shift of every cell's transmit power.
            let scene = shifted_scene(&ctx.scene, ctx.params.offset_db);
            let weights = &ctx.params.weights;
            let thresholds = &scene.thresholds;
            let optimized = if a.brute_force {
                let initial = objective(&scene, &ctx.grid, &ctx.assignment, weights, thresholds)?;
                let result = brute_force_optimize(
                    &scene,
                    &ctx.grid,
                    weights,
                    thresholds,
                    ctx.params.brute_force_cap as u128,
                )?;
                let summary = BruteForceSummary {
                    initial_objective: initial,
                    objective: result.objective,
                    evaluated: result.evaluated as u64,
                };
                write_json(&ctx.out.join("brute_force.json"), &summary)?;
                println!(
                    "objective {:.4} -> {:.4} after {} assignments",
                    initial, result.objective, result.evaluated
                );
                result.assignment
            } else {
                let order = round_robin_order(&scene);
                let (best, trace) =
                    greedy_optimize(&scene, &ctx.grid, &ctx.assignment, weights, thresholds, &order)?;
                write_text(&ctx.out.join("trace.json"), &trace.to_json_string())?;
                if let (Some(i), Some(f)) = (trace.initial_objective(), trace.final_objective()) {
                    println!("objective {i:.4} -> {f:.4} over {} steps", trace.steps.len());
                }
                best
            };
            write_text(&ctx.out.join("assignment.json"), &optimized.to_json_string())?;
            let shifted = Context {
                scene,
                ..ctx.clone()
            };
            report(&shifted, &ctx.assignment, &optimized, 0.0, a.report.mask.as_deref())
        }
        Command::Evaluate(a) => {
            let mut extra: Vec<(&str, PathBuf)> =
                a.report.mask.iter().map(|m| ("mask", m.clone())).collect();
            extra.extend(a.reference.iter().map(|r| ("reference", r.clone())));
            let ctx = session.open("evaluate", &a.scene, &extra, |p| report_overrides(&a.report, p))?;
            let reference = load_assignment(a.reference.as_deref(), &ctx.scene)?;
            report(&ctx, &reference, &ctx.assignment, ctx.params.offset_db, a.report.mask.as_deref())
        }
        Command::Synth(a) => {
            let extra = [("trajectory", a.trajectory.clone())];
            let ctx = session.open("synth", &a.scene, &extra, |p| {
                p.noise_sigma_db = a.noise_sigma_db.unwrap_or(p.noise_sigma_db);
            })?;
            let trajectory = TrajectorySpec::load(&a.trajectory)?;
            let config = SynthConfig {
                noise_sigma_db: ctx.params.noise_sigma_db,
                seed: session.seed,
                offset_db: ctx.params.offset_db,
            };
            let out = synthesize(&ctx.scene, &ctx.assignment, &trajectory, &config)?;
            write_with(&ctx.out.join("measurements.csv"), |w| out.set.write_csv(w))?;
            println!(
                "{} samples ({} path points clipped to the airspace)",
                out.set.len(),
                out.clipped_points
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct BruteForceSummary {
    initial_objective: f64,
    objective: f64,
    evaluated: u64,
}

struct Session {
    overrides: Vec<String>,
    run_overrides: Vec<Override>,
    scene_overrides: Vec<Override>,
    seed: u64,
}

#[derive(Clone)]
struct Context {
    scene: SceneConfig,
    grid: VoxelGrid,
    assignment: BeamAssignment,
    params: RunParams,
    out: PathBuf,
}

impl Session {
    /// Resolves parameters, loads the scene and assignment, and writes the
    /// manifest. `flags` applies command flags before `--set` overrides.
    fn open(
        &self,
        command: &str,
        args: &SceneArgs,
        extra_paths: &[(&str, PathBuf)],
        flags: impl FnOnce(&mut RunParams),
    ) -> CliResult<Context> {
        let mut params = RunParams::default();
        params.offset_db = args.offset_db.unwrap_or(params.offset_db);
        flags(&mut params);
        let params = params.with_overrides(&self.run_overrides)?;

        let scene = load_scene(&args.scene, &self.scene_overrides)?;
        let grid = build_voxel_grid(&scene.airspace)?;
        let assignment = load_assignment(args.assignment.as_deref(), &scene)?;

        let mut config_paths = BTreeMap::new();
        config_paths.insert("scene".to_owned(), args.scene.display().to_string());
        if let Some(p) = &args.assignment {
            config_paths.insert("assignment".to_owned(), p.display().to_string());
        }
        for (role, p) in extra_paths {
            config_paths.insert((*role).to_owned(), p.display().to_string());
        }
        std::fs::create_dir_all(&args.out).map_err(|e| {
            CliError::Input(format!("cannot create output directory {}: {e}", args.out.display()))
        })?;
        RunManifest {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_paths,
            overrides: self.overrides.clone(),
            seed: self.seed,
            output_dir: args.out.display().to_string(),
            params: params.clone(),
        }
        .write(&args.out)?;

        Ok(Context {
            scene,
            grid,
            assignment,
            params,
            out: args.out.clone(),
        })
    }
}

fn load_scene(path: &Path, overrides: &[Override]) -> CliResult<SceneConfig> {
    if overrides.is_empty() {
        return Ok(lacn_twin::load_scene(path)?);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for o in overrides {
        params::apply(&mut doc, o, true)?;
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(SceneConfig::from_json_str(&doc.to_string(), base)?)
}

fn load_assignment(path: Option<&Path>, scene: &SceneConfig) -> CliResult<BeamAssignment> {
    let a = match path {
        Some(p) => BeamAssignment::load(p)?,
        None => BeamAssignment::baseline(scene),
    };
    a.validate(scene)?;
    Ok(a)
}

fn measurement_paths(a: &MeasurementArgs) -> Vec<(&'static str, PathBuf)> {
    let mut v = vec![("measurements", a.measurements.clone())];
    v.extend(a.mapping.iter().map(|m| ("mapping", m.clone())));
    v
}

fn load_measurements(a: &MeasurementArgs, scene: &SceneConfig) -> CliResult<MeasurementSet> {
    let set = match &a.mapping {
        None => MeasurementSet::load(&a.measurements)?,
        Some(m) => {
            let mapping = MeasurementMapping::load(m)?;
            let file = File::open(&a.measurements).map_err(|e| {
                CliError::Input(format!("cannot read {}: {e}", a.measurements.display()))
            })?;
            mapping.ingest(file, a.measurements.display().to_string())?
        }
    };
    if let Err(e) = set.check_region(&scene.airspace) {
        log::warn!("measurements extend beyond the airspace: {e}");
    }
    Ok(set)
}

fn report_overrides(r: &ReportArgs, p: &mut RunParams) {
    if let Some(alts) = &r.heatmap_altitudes_m {
        p.heatmap_altitudes_m = alts.clone();
    }
}

fn shifted_scene(scene: &SceneConfig, offset_db: f64) -> SceneConfig {
    let mut s = scene.clone();
    for cell in s.sites.iter_mut().flat_map(|site| site.cells.iter_mut()) {
        cell.tx_power_dbm += offset_db;
    }
    s
}

fn fields(
    ctx: &Context,
    assignment: &BeamAssignment,
    offset_db: f64,
) -> CliResult<(RadioField, SinrField)> {
    let field = build_field(&ctx.scene, &ctx.grid, assignment, offset_db)?;
    let noise = NoiseModel::from(&ctx.scene.radio);
    let sinr = build_sinr_field(&field, &noise, ctx.scene.radio.activity_factor)?;
    Ok((field, sinr))
}

/// Marks the voxels containing at least one measurement position.
fn load_mask(path: &Path, grid: &VoxelGrid) -> CliResult<Vec<bool>> {
    let set = MeasurementSet::load(path)?;
    let mut mask = vec![false; grid.count()];
    for s in set.samples() {
        if let Some(v) = grid.nearest_voxel(s.position_m) {
            mask[v] = true;
        }
    }
    Ok(mask)
}

/// Writes the coverage of `after`, its comparison against `before`, and
/// serving-RSRP difference heatmaps.
fn report(
    ctx: &Context,
    before: &BeamAssignment,
    after: &BeamAssignment,
    offset_db: f64,
    mask_path: Option<&Path>,
) -> CliResult<()> {
    let mask = mask_path.map(|p| load_mask(p, &ctx.grid)).transpose()?;
    let mask = mask.as_deref();
    let thresholds = &ctx.scene.thresholds;
    let b = fields(ctx, before, offset_db)?;
    let a = fields(ctx, after, offset_db)?;
    let coverage = coverage_ratios(&ctx.grid, &a.0, &a.1, thresholds, mask)?;
    write_json(&ctx.out.join("coverage_report.json"), &coverage)?;
    let cmp: CompareReport = compare_report(&ctx.grid, (&b.0, &b.1), (&a.0, &a.1), thresholds, mask)?;
    write_text(&ctx.out.join("compare_report.json"), &cmp.to_json_string())?;
    for row in &cmp.rows {
        println!(
            "{:<12} {:>8.4} -> {:>8.4} ({:+.4})",
            row.metric, row.before, row.after, row.delta
        );
    }
    for &alt in &ctx.params.heatmap_altitudes_m {
        let map = match difference_heatmap(
            &ctx.grid,
            b.1.serving_rsrp_dbm(),
            a.1.serving_rsrp_dbm(),
            alt,
        ) {
            Ok(m) => m,
            Err(TwinError::UnknownLayer(z)) => {
                log::warn!("no voxel layer at {z} m; heatmap skipped");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let name = format!("heatmap_rsrp_delta_{}m.csv", fmt_altitude(alt));
        write_with(&ctx.out.join(name), |w| map.write_csv(w))?;
    }
    Ok(())
}

fn fmt_altitude(alt: f64) -> String {
    if alt.fract() == 0.0 {
        format!("{alt:.0}")
    } else {
        format!("{alt}").replace('.', "p")
    }
}

fn output_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut body = text.to_owned();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| output_error(path, e))
}

fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> lacn_twin::Result<()>,
) -> CliResult<()> {
    let file = File::create(path).map_err(|e| output_error(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| output_error(path, e))
}

/// Pretty JSON with every float rounded to four decimals.
fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_floats(&mut v);
    write_text(path, &serde_json::to_string_pretty(&v).expect("json value serializes"))
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round4(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

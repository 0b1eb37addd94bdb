//! `pcdim` subcommands.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use pcdim_core::analysis::{precision_boost, precision_confidence_curve, recall_boost, spectral_layout, Truth};
use pcdim_core::features::{Feature, FeatureProfile};
use pcdim_core::forest::{fit_on, kfold_eval_on, EvalReport, TrainConfig};
use pcdim_core::geom::Polygon;
use pcdim_core::octree::PplMode;
use pcdim_core::store::{Attribute, Filter, SpatialFilter};
use pcdim_core::synth::{generate, SceneSpec};
use pcdim_core::{Aabb, ClassId, GridSpec, PatchStore, Schema};

use crate::error::{Context, Error, Result};
use crate::ops::{self, DimMethod};
use crate::parallel::{Workers, WORKERS_ENV};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::{model_file, points, store_dir, tables};

#[derive(Parser, Debug)]
#[command(name = "pcdim", version, about = "Patch-based point cloud dimensionality and classification")]
pub struct Cli {
    /// Worker threads for per-patch stages and forest training.
    #[arg(long, global = true, env = WORKERS_ENV, default_value_t = 1)]
    pub workers: usize,
    /// Log level (error, warn, info, debug, trace); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Partition a CSV or PLY point cloud into a patch store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        cell_size: f64,
        /// 2-D columns (z unbounded) instead of cubes.
        #[arg(long)]
        columnar: bool,
        #[arg(long, value_parser = parse_triple)]
        origin: Option<[f64; 3]>,
        #[arg(long, default_value_t = 0.0)]
        reference_height: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List patches matching a spatial filter and attribute ranges.
    Query {
        #[arg(long)]
        store: PathBuf,
        /// x0,y0,z0,x1,y1,z1
        #[arg(long, value_parser = parse_bbox, conflicts_with = "polygon")]
        bbox: Option<Aabb>,
        /// x,y;x,y;... footprint in the xy plane
        #[arg(long)]
        polygon: Option<String>,
        /// name:lo:hi on a patch mean (z, intensity, num_echo, altitude); repeatable
        #[arg(long = "attr", value_parser = parse_attr)]
        attrs: Vec<(Attribute, f64, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occupancy per octree level for every patch.
    Describe {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value_t = 4)]
        levels: u32,
        #[arg(long, value_enum, default_value_t = ModeArg::Occupancy)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dim_LOD and Dim_cov per patch.
    Dim {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value_t = 4)]
        levels: u32,
        #[arg(long, value_enum, default_value_t = MethodArg::Ransac)]
        method: MethodArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 0.15)]
        inlier_tol: f64,
        #[arg(long, default_value_t = pcdim_core::dim::DEFAULT_MAD_K)]
        mad_k: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agreement report between Dim_LOD and Dim_cov as JSON.
    DimReport {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feature vector per patch.
    Features {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, value_enum, default_value_t = ProfileArg::Paris)]
        profile: ProfileArg,
        /// Comma-separated feature names for the custom profile.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a forest on all labelled rows.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Stratified K-fold evaluation.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Also write the out-of-fold predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Predict a class and confidence per patch.
    Classify {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral layout of an evaluation report's confusion matrix.
    Layout {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision against confidence threshold for one class.
    Curve {
        #[arg(long)]
        pred: PathBuf,
        /// Features table whose label column is the ground truth.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        class: ClassId,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep predictions of a class above a confidence threshold.
    BoostPrecision {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        class: ClassId,
        #[arg(long)]
        min_conf: f64,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add the patches around a class's predictions.
    BoostRecall {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        class: ClassId,
        #[arg(long, default_value_t = 2.0)]
        rxy: f64,
        #[arg(long, default_value_t = 0.5)]
        rz: f64,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labelled scene.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct StoreArg {
    #[arg(long = "store")]
    pub path: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Occupancy,
    Midoc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Ransac,
    Median,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProfileArg {
    Paris,
    Vosges,
    Custom,
}

fn parse_numbers(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| e.to_string())?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("expected {n} comma-separated finite numbers"));
    }
    Ok(v)
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v = parse_numbers(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_bbox(s: &str) -> std::result::Result<Aabb, String> {
    let v = parse_numbers(s, 6)?;
    if (0..3).any(|a| v[a] > v[a + 3]) {
        return Err("bbox min exceeds max".into());
    }
    Ok(Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
}

fn parse_attr(s: &str) -> std::result::Result<(Attribute, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [name, lo, hi] = parts[..] else { return Err("expected name:lo:hi".into()) };
    let attr = Attribute::parse(name).ok_or_else(|| format!("unknown attribute {name:?}"))?;
    let lo: f64 = lo.parse().map_err(|_| format!("bad bound {lo:?}"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad bound {hi:?}"))?;
    if lo > hi {
        return Err("range lower bound exceeds upper bound".into());
    }
    Ok((attr, lo, hi))
}

fn parse_polygon(s: &str) -> Result<Polygon> {
    let verts = s
        .split(';')
        .map(|pair| {
            let v = parse_numbers(pair, 2).map_err(|e| Error::Usage(format!("--polygon: {e}")))?;
            Ok([v[0], v[1]])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Polygon::new(verts)?)
}

fn train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let Some(path) = path else { return Ok(TrainConfig::default()) };
    let text = fs::read_to_string(path).at(path)?;
    let cfg: TrainConfig = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
}

/// Writes pretty JSON to `out`, or stdout.
fn emit_json<T: serde::Serialize>(out: Option<&Path>, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))? + "\n";
    match out {
        Some(p) => fs::write(p, text).at(p),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn truth_from(path: Option<&Path>) -> Result<Option<Truth>> {
    path.map(|p| tables::read_features(p).map(|t| t.truth())).transpose()
}

fn load_store(path: &Path) -> Result<PatchStore> {
    store_dir::load_store(path)
}

pub fn execute(cli: Cli) -> Result<()> {
    let workers = Workers::new(cli.workers)?;
    match cli.command {
        Command::Ingest { input, cell_size, columnar, origin, reference_height, out } => {
            let cloud = points::read_points(&input)?;
            let grid = if columnar { GridSpec::columnar(cell_size) } else { GridSpec::cubic(cell_size) };
            let grid = grid.with_origin(origin.unwrap_or([0.0; 3]));
            let store = PatchStore::ingest(cloud.points, grid, cloud.schema, reference_height)?;
            store_dir::save_store(&store, &out)?;
            info!("{} points in {} patches written to {}", store.point_count(), store.len(), out.display());
        }
        Command::Query { store, bbox, polygon, attrs, out } => {
            let store = load_store(&store)?;
            let spatial = match (bbox, polygon) {
                (Some(b), _) => SpatialFilter::Box(b),
                (None, Some(p)) => SpatialFilter::Polygon(parse_polygon(&p)?),
                (None, None) => SpatialFilter::Box(store.extent()),
            };
            let mut filter = Filter { spatial: Some(spatial), ranges: Vec::new() };
            for (a, lo, hi) in attrs {
                filter = filter.and(a, lo, hi);
            }
            let hits = store.query(&filter)?;
            let mut text = String::from("patch_id,i,j,k,count\n");
            for p in &hits {
                let [i, j, k] = p.grid_index;
                text += &format!("{},{i},{j},{k},{}\n", p.id, p.points.len());
            }
            match out {
                Some(p) => fs::write(&p, text).at(&p)?,
                None => print!("{text}"),
            }
        }
        Command::Describe { store, levels, mode, out } => {
            let store = load_store(&store.path)?;
            let mode = match mode {
                ModeArg::Occupancy => PplMode::Occupancy,
                ModeArg::Midoc => PplMode::Midoc,
            };
            let rows = ops::describe(&store, levels, mode, &workers)?;
            tables::write_ppl(&out, levels as usize, &rows)?;
        }
        Command::Dim { store, levels, method, seed, iterations, inlier_tol, mad_k, out } => {
            let store = load_store(&store.path)?;
            let method = match method {
                MethodArg::Ransac => DimMethod::Ransac { iterations, inlier_tol },
                MethodArg::Median => DimMethod::Median { k: mad_k },
            };
            let rows = ops::dims(&store, levels, method, seed, &workers)?;
            tables::write_dims(&out, &rows)?;
        }
        Command::DimReport { input, threshold, out } => {
            let rows = tables::read_dims(&input)?;
            emit_json(out.as_deref(), &ops::dim_report(&rows, threshold))?;
        }
        Command::Features { store, profile, features, out } => {
            let store = load_store(&store.path)?;
            let profile = match profile {
                ProfileArg::Paris => FeatureProfile::Paris,
                ProfileArg::Vosges => FeatureProfile::Vosges,
                ProfileArg::Custom => {
                    if features.is_empty() {
                        return Err(Error::Usage("--profile custom needs --features".into()));
                    }
                    let f = features
                        .iter()
                        .map(|n| Feature::parse(n).ok_or_else(|| Error::Usage(format!("unknown feature {n:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    FeatureProfile::Custom(f)
                }
            };
            let table = ops::features(&store, &profile, &workers)?;
            tables::write_features(&out, &table)?;
        }
        Command::Train { features, config, model } => {
            let cfg = train_config(config.as_deref())?;
            let data = tables::read_features(&features)?.dataset();
            let m = fit_on(&workers, &data, &cfg)?;
            model_file::save_model(&m, &model)?;
        }
        Command::Eval { features, config, report, predictions } => {
            let cfg = train_config(config.as_deref())?;
            let data = tables::read_features(&features)?.dataset();
            let r = kfold_eval_on(&workers, &data, &cfg)?;
            info!("accuracy {:.4}", r.accuracy());
            emit_json(Some(&report), &r)?;
            if let Some(p) = predictions {
                tables::write_predictions(&p, &r.out_of_fold)?;
            }
        }
        Command::Classify { features, model, out } => {
            let m = model_file::load_model(&model)?;
            let t = tables::read_features(&features)?;
            if t.feature_names != m.feature_names {
                return Err(Error::format(
                    &features,
                    format!("feature columns {:?} differ from the model's {:?}", t.feature_names, m.feature_names),
                ));
            }
            let preds = m.predict(&t.ids, &t.rows)?;
            tables::write_predictions(&out, &preds)?;
        }
        Command::Layout { report, out } => {
            let r: EvalReport = read_json(&report)?;
            let conf: Vec<Vec<f64>> = r.confusion.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect();
            let g = spectral_layout(&conf, &r.classes)?;
            if g.disconnected {
                info!("affinity graph is disconnected; components laid out side by side");
            }
            if g.degenerate {
                info!("repeated Laplacian eigenvalues; layout axes are arbitrary");
            }
            tables::write_layout(&out, &g)?;
        }
        Command::Curve { pred, truth, class, out } => {
            let preds = tables::read_predictions(&pred)?;
            let truth = tables::read_features(&truth)?.truth();
            tables::write_curve(&out, &precision_confidence_curve(&preds, &truth, class))?;
        }
        Command::BoostPrecision { pred, class, min_conf, truth, out } => {
            let preds = tables::read_predictions(&pred)?;
            let truth = truth_from(truth.as_deref())?;
            emit_json(out.as_deref(), &precision_boost(&preds, truth.as_ref(), class, min_conf))?;
        }
        Command::BoostRecall { store, pred, class, rxy, rz, truth, out } => {
            if rxy < 0.0 || rz < 0.0 {
                return Err(Error::Usage("radii must be >= 0".into()));
            }
            let store = load_store(&store.path)?;
            let preds = tables::read_predictions(&pred)?;
            let truth = truth_from(truth.as_deref())?;
            emit_json(out.as_deref(), &recall_boost(&store, &preds, truth.as_ref(), class, rxy, rz))?;
        }
        Command::Synth { spec, out } => {
            let s: SceneSpec = read_json(&spec)?;
            s.validate()?;
            let pts = generate(&s);
            let schema = Schema { intensity: true, num_echo: true, class: true };
            points::write_csv(&out, &pts, schema)?;
            info!("{} points written to {}", pts.len(), out.display());
        }
        Command::Pipeline { config, input, outdir } => {
            let cfg = match config {
                Some(p) => PipelineConfig::load(&p)?,
                None => PipelineConfig::default(),
            };
            run_pipeline(&cfg, &input, &outdir, &workers)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let env = env_logger::Env::default().default_filter_or(cli.log.clone());
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => 3,
    }
}

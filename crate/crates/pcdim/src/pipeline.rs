//! End-to-end run: ingest, describe, dimensionality, features, evaluation,
//! training, classification and boosting, each stage timed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use pcdim_core::analysis::{precision_boost, precision_confidence_curve, recall_boost, spectral_layout};
use pcdim_core::features::FeatureProfile;
use pcdim_core::forest::{class_mix, fit_on, kfold_eval_on, per_point_metrics, EvalReport, TrainConfig};
use pcdim_core::octree::PplMode;
use pcdim_core::{ClassId, GridSpec, PatchStore};
use serde::{Deserialize, Serialize};

use crate::error::{stage, Context, Error, Result};
use crate::ops::{self, DimMethod};
use crate::parallel::Workers;
use crate::{model_file, points, store_dir, tables};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cell_size: f64,
    #[serde(default)]
    pub columnar: bool,
    #[serde(default)]
    pub origin: [f64; 3],
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        let g = if self.columnar { GridSpec::columnar(self.cell_size) } else { GridSpec::cubic(self.cell_size) };
        g.with_origin(self.origin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    /// Class to boost; the smallest class id when unset.
    pub class: Option<ClassId>,
    pub min_confidence: f64,
    pub radius_xy: f64,
    pub radius_z: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { class: None, min_confidence: 0.8, radius_xy: 2.0, radius_z: 0.5 }
    }
}

/// Everything a pipeline run needs besides its input and output paths.
///
/// `train.seed` is ignored: all randomness derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub reference_height: f64,
    pub levels: u32,
    pub ppl_mode: PplMode,
    pub dim: DimMethod,
    pub agreement_threshold: f64,
    pub profile: FeatureProfile,
    pub train: TrainConfig,
    pub boost: BoostConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridConfig { cell_size: 1.0, columnar: false, origin: [0.0; 3] },
            reference_height: 0.0,
            levels: 4,
            ppl_mode: PplMode::Occupancy,
            dim: DimMethod::default(),
            agreement_threshold: 0.5,
            profile: FeatureProfile::Paris,
            train: TrainConfig::default(),
            boost: BoostConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).at(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub points: usize,
    pub patches: usize,
    pub workers: usize,
    pub labelled: bool,
    pub stages: Vec<StageTiming>,
}

impl PipelineSummary {
    pub fn seconds(&self, stage: &str) -> Option<f64> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.seconds)
    }

    /// Points per second per worker over the `describe` and `features` stages.
    pub fn descriptor_throughput(&self) -> Option<f64> {
        let t = self.seconds("describe")? + self.seconds("features")?;
        (t > 0.0).then(|| self.points as f64 / t / self.workers as f64)
    }
}

struct Timer {
    stages: Vec<StageTiming>,
}

impl Timer {
    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = stage(name, f())?;
        let seconds = start.elapsed().as_secs_f64();
        info!("stage {name}: {seconds:.3} s");
        self.stages.push(StageTiming { stage: name.to_string(), seconds });
        Ok(out)
    }
}

/// Paths of the artifacts written under the output directory.
pub struct Outputs {
    pub dir: PathBuf,
}

impl Outputs {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))? + "\n";
    fs::write(path, text).at(path)
}

fn write_point_metrics(path: &Path, report: &EvalReport, store: &PatchStore) -> Result<()> {
    let mix = class_mix(store.patches());
    let pm = per_point_metrics(report, &mix);
    let mut text = String::from("class,precision,recall,support,mix,point_precision,point_recall\n");
    for (m, p) in report.per_class.iter().zip(&pm) {
        let mx = mix.get(&m.class).map_or_else(String::new, |v| v.to_string());
        text += &format!("{},{},{},{},{},{},{}\n", m.class, m.precision, m.recall, m.support, mx, p.precision, p.recall);
    }
    fs::write(path, text).at(path)
}

/// Runs every stage, writing artifacts under `outdir`:
///
/// `store/`, `ppl.csv`, `dims.csv`, `dim_report.json`, `features.csv` and,
/// for labelled input, `report.json`, `metrics.csv`, `model.bin`,
/// `predictions.csv` (out-of-fold), `curve_<class>.csv`, `layout.csv`
/// (3+ classes), `boost_precision.json`, `boost_recall.json`. Timings go to
/// `timings.json`.
pub fn run_pipeline(config: &PipelineConfig, input: &Path, outdir: &Path, workers: &Workers) -> Result<PipelineSummary> {
    let out = Outputs { dir: outdir.to_path_buf() };
    fs::create_dir_all(outdir).at(outdir)?;
    config.save(&out.path("config.json"))?;
    let mut t = Timer { stages: Vec::new() };

    let store = t.run("ingest", || {
        let cloud = points::read_points(input)?;
        let store = PatchStore::ingest(cloud.points, config.grid.spec(), cloud.schema, config.reference_height)?;
        store_dir::save_store(&store, &out.path("store"))?;
        Ok(store)
    })?;
    info!("{} points in {} patches", store.point_count(), store.len());

    let levels = config.levels.max(config.profile.ppl_levels() as u32);
    t.run("describe", || {
        let ppl = ops::describe(&store, levels, config.ppl_mode, workers)?;
        tables::write_ppl(&out.path("ppl.csv"), levels as usize, &ppl)
    })?;
    t.run("features", || {
        let table = ops::features(&store, &config.profile, workers)?;
        tables::write_features(&out.path("features.csv"), &table)
    })?;
    t.run("dim", || {
        let rows = ops::dims(&store, config.levels, config.dim, config.seed, workers)?;
        tables::write_dims(&out.path("dims.csv"), &rows)?;
        write_json(&out.path("dim_report.json"), &ops::dim_report(&rows, config.agreement_threshold))
    })?;

    let table = tables::read_features(&out.path("features.csv"))?;
    let data = table.dataset();
    let labelled = !data.is_empty();
    if labelled {
        let train_cfg = config.train_config();
        let report = t.run("evaluate", || {
            let report = kfold_eval_on(workers, &data, &train_cfg)?;
            write_json(&out.path("report.json"), &report)?;
            write_point_metrics(&out.path("metrics.csv"), &report, &store)?;
            Ok(report)
        })?;
        t.run("train", || {
            let model = fit_on(workers, &data, &train_cfg)?;
            model_file::save_model(&model, &out.path("model.bin"))
        })?;
        t.run("classify", || tables::write_predictions(&out.path("predictions.csv"), &report.out_of_fold))?;
        t.run("analysis", || {
            let truth = table.truth();
            let preds = &report.out_of_fold;
            for &c in &report.classes {
                let curve = precision_confidence_curve(preds, &truth, c);
                tables::write_curve(&out.path(&format!("curve_{c}.csv")), &curve)?;
            }
            if report.classes.len() >= 3 {
                let conf: Vec<Vec<f64>> = report.confusion.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
                tables::write_layout(&out.path("layout.csv"), &spectral_layout(&conf, &report.classes)?)?;
            }
            let b = &config.boost;
            let class = b.class.unwrap_or(report.classes[0]);
            write_json(&out.path("boost_precision.json"), &precision_boost(preds, Some(&truth), class, b.min_confidence))?;
            let rb = recall_boost(&store, preds, Some(&truth), class, b.radius_xy.max(0.0), b.radius_z.max(0.0));
            write_json(&out.path("boost_recall.json"), &rb)
        })?;
    } else {
        info!("input carries no class labels; skipping evaluation, training and boosting");
    }

    let summary =
        PipelineSummary { points: store.point_count(), patches: store.len(), workers: workers.count(), labelled, stages: t.stages };
    if let Some(tp) = summary.descriptor_throughput() {
        info!("descriptor + features: {:.3} M points/s/worker", tp / 1e6);
    }
    write_json(&out.path("timings.json"), &summary)?;
    Ok(summary)
}

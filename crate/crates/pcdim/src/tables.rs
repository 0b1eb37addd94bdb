//! CSV tables exchanged between subcommands. Missing values are empty fields.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use pcdim_core::analysis::{AffinityGraph, CurvePoint, Truth};
use pcdim_core::forest::{Dataset, Prediction};
use pcdim_core::octree::PplVector;
use pcdim_core::{ClassId, PatchId};

use crate::error::{Context, Error, Result};

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

struct Out<'a> {
    path: &'a Path,
    w: csv::Writer<BufWriter<File>>,
}

impl<'a> Out<'a> {
    fn create(path: &'a Path, header: &[String]) -> Result<Self> {
        let w = csv::Writer::from_writer(BufWriter::new(File::create(path).at(path)?));
        let mut out = Out { path, w };
        out.row(header)?;
        Ok(out)
    }

    fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        self.w.write_record(fields).map_err(|e| Error::format(self.path, e.to_string()))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().at(self.path)
    }
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

struct In<'a> {
    path: &'a Path,
    header: Vec<String>,
    rdr: csv::Reader<File>,
}

impl<'a> In<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(File::open(path).at(path)?);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        Ok(Self { path, header, rdr })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::parse(self.path, 1, format!("missing column {name:?}")))
    }

    /// Calls `f(line, record)` for every data row.
    fn each(&mut self, mut f: impl FnMut(u64, &csv::StringRecord) -> std::result::Result<(), String>) -> Result<()> {
        for rec in self.rdr.records() {
            let rec = rec.map_err(|e| Error::parse(self.path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            f(line, &rec).map_err(|m| Error::parse(self.path, line, m))?;
        }
        Ok(())
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, name: &str) -> std::result::Result<T, String> {
    let s = rec.get(col).unwrap_or("");
    s.parse().map_err(|_| format!("bad {name} value {s:?}"))
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, name: &str) -> std::result::Result<Option<T>, String> {
    match rec.get(col).unwrap_or("") {
        "" => Ok(None),
        _ => field(rec, col, name).map(Some),
    }
}

/// `patch_id, O_1, .., O_n`.
pub fn write_ppl(path: &Path, levels: usize, rows: &[(PatchId, PplVector)]) -> Result<()> {
    let mut header = vec!["patch_id".to_string()];
    header.extend((1..=levels).map(|l| format!("O_{l}")));
    let mut out = Out::create(path, &header)?;
    for (id, ppl) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend(ppl.counts.iter().map(u64::to_string));
        out.row(&rec)?;
    }
    out.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimRow {
    pub patch_id: PatchId,
    pub dim_lod: Option<f64>,
    pub confidence: Option<f64>,
    pub dim_cov: Option<f64>,
    pub p_dim: Option<[f64; 3]>,
    pub abs_diff: Option<f64>,
    pub points: usize,
}

const DIM_HEADER: [&str; 9] = ["patch_id", "dim_lod", "confidence", "dim_cov", "p1", "p2", "p3", "abs_diff", "points"];

pub fn write_dims(path: &Path, rows: &[DimRow]) -> Result<()> {
    let mut out = Out::create(path, &strings(&DIM_HEADER))?;
    for r in rows {
        let p = r.p_dim.map_or([None; 3], |p| p.map(Some));
        out.row(&[
            r.patch_id.to_string(),
            num(r.dim_lod),
            num(r.confidence),
            num(r.dim_cov),
            num(p[0]),
            num(p[1]),
            num(p[2]),
            num(r.abs_diff),
            r.points.to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_dims(path: &Path) -> Result<Vec<DimRow>> {
    let mut t = In::open(path)?;
    let c: Vec<usize> = DIM_HEADER.iter().map(|h| t.col(h)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    t.each(|_, rec| {
        let p = [opt_field(rec, c[4], "p1")?, opt_field(rec, c[5], "p2")?, opt_field(rec, c[6], "p3")?];
        rows.push(DimRow {
            patch_id: PatchId(field(rec, c[0], "patch_id")?),
            dim_lod: opt_field(rec, c[1], "dim_lod")?,
            confidence: opt_field(rec, c[2], "confidence")?,
            dim_cov: opt_field(rec, c[3], "dim_cov")?,
            p_dim: match p {
                [Some(a), Some(b), Some(c)] => Some([a, b, c]),
                _ => None,
            },
            abs_diff: opt_field(rec, c[7], "abs_diff")?,
            points: field(rec, c[8], "points")?,
        });
        Ok(())
    })?;
    Ok(rows)
}

/// One row per patch: id, label (dominant class), mix and feature values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub ids: Vec<PatchId>,
    pub labels: Vec<Option<ClassId>>,
    pub mix: Vec<Option<f64>>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Labelled rows only.
    pub fn dataset(&self) -> Dataset {
        let keep: Vec<usize> = (0..self.ids.len()).filter(|&i| self.labels[i].is_some()).collect();
        Dataset {
            feature_names: self.feature_names.clone(),
            ids: keep.iter().map(|&i| self.ids[i]).collect(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i].unwrap()).collect(),
        }
    }

    pub fn truth(&self) -> Truth {
        self.ids.iter().zip(&self.labels).filter_map(|(id, l)| l.map(|l| (*id, l))).collect()
    }
}

pub fn write_features(path: &Path, t: &FeatureTable) -> Result<()> {
    let mut header = strings(&["patch_id", "label", "mix"]);
    header.extend(t.feature_names.iter().cloned());
    let mut out = Out::create(path, &header)?;
    for i in 0..t.ids.len() {
        let mut rec = vec![t.ids[i].to_string(), t.labels[i].map_or_else(String::new, |l| l.to_string()), num(t.mix[i])];
        rec.extend(t.rows[i].iter().map(|v| v.to_string()));
        out.row(&rec)?;
    }
    out.finish()
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut t = In::open(path)?;
    let (id_c, label_c, mix_c) = (t.col("patch_id")?, t.col("label")?, t.col("mix")?);
    let feat_cols: Vec<usize> = (0..t.header.len()).filter(|&i| ![id_c, label_c, mix_c].contains(&i)).collect();
    let feature_names: Vec<String> = feat_cols.iter().map(|&i| t.header[i].clone()).collect();
    let mut table = FeatureTable { feature_names, ids: vec![], labels: vec![], mix: vec![], rows: vec![] };
    t.each(|_, rec| {
        table.ids.push(PatchId(field(rec, id_c, "patch_id")?));
        table.labels.push(opt_field(rec, label_c, "label")?);
        table.mix.push(opt_field(rec, mix_c, "mix")?);
        let row = feat_cols
            .iter()
            .map(|&c| {
                let v: f64 = field(rec, c, "feature")?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("non-finite feature value {v}"))
                }
            })
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        table.rows.push(row);
        Ok(())
    })?;
    Ok(table)
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut out = Out::create(path, &strings(&["patch_id", "class", "confidence"]))?;
    for p in preds {
        out.row(&[p.patch_id.to_string(), p.class.to_string(), p.confidence.to_string()])?;
    }
    out.finish()
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut t = In::open(path)?;
    let c = [t.col("patch_id")?, t.col("class")?, t.col("confidence")?];
    let mut out = Vec::new();
    t.each(|_, rec| {
        out.push(Prediction {
            patch_id: PatchId(field(rec, c[0], "patch_id")?),
            class: field(rec, c[1], "class")?,
            confidence: field(rec, c[2], "confidence")?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut out = Out::create(path, &strings(&["threshold", "precision", "retained", "retained_fraction"]))?;
    for c in curve {
        out.row(&[c.threshold.to_string(), num(c.precision), c.retained.to_string(), c.retained_fraction.to_string()])?;
    }
    out.finish()
}

pub fn write_layout(path: &Path, g: &AffinityGraph) -> Result<()> {
    let mut out = Out::create(path, &strings(&["class", "x", "y", "disconnected", "degenerate"]))?;
    for (c, xy) in g.classes.iter().zip(&g.layout) {
        out.row(&[c.to_string(), xy[0].to_string(), xy[1].to_string(), g.disconnected.to_string(), g.degenerate.to_string()])?;
    }
    out.finish()
}

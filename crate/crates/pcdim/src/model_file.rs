//! Versioned little-endian binary format for trained forests.
//!
//! Layout: magic `PCDMRF`, `u16` version, then the feature schema (names),
//! classes, class weights, importance, degenerate flag and the trees. Strings
//! are a `u32` byte length followed by UTF-8; every sequence is prefixed by
//! its `u32` length.

use std::path::Path;

use pcdim_core::forest::{ForestModel, Node, Tree};

use crate::error::{Context, Error, Result};

const MAGIC: &[u8; 6] = b"PCDMRF";
const VERSION: u16 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("sequence longer than u32::MAX"));
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

pub fn encode(model: &ForestModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.len(model.feature_names.len());
    model.feature_names.iter().for_each(|n| w.str(n));
    w.len(model.classes.len());
    model.classes.iter().for_each(|c| w.u32(*c));
    w.f64s(&model.class_weights);
    w.f64s(&model.importance);
    w.u8(model.degenerate as u8);
    w.len(model.trees.len());
    for t in &model.trees {
        w.len(t.nodes.len());
        for n in &t.nodes {
            match n {
                Node::Split { feature, threshold, left, right } => {
                    w.u8(0);
                    w.len(*feature);
                    w.f64(*threshold);
                    w.len(*left);
                    w.len(*right);
                }
                Node::Leaf { dist } => {
                    w.u8(1);
                    w.f64s(dist);
                }
            }
        }
        w.f64s(&t.importance);
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("unexpected end of file")?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn len(&mut self) -> std::result::Result<usize, String> {
        let n = self.u32()? as usize;
        // every element takes at least one byte
        if n > self.buf.len() - self.at {
            return Err(format!("sequence length {n} exceeds file size"));
        }
        Ok(n)
    }
    fn index(&mut self) -> std::result::Result<usize, String> {
        Ok(self.u32()? as usize)
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> std::result::Result<Vec<f64>, String> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> std::result::Result<String, String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8 in feature name".to_string())
    }
}

pub fn decode(buf: &[u8]) -> std::result::Result<ForestModel, String> {
    let mut r = Reader { buf, at: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err("not a pcdim model file".into());
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported model version {version}"));
    }
    let nf = r.len()?;
    let feature_names = (0..nf).map(|_| r.str()).collect::<std::result::Result<Vec<_>, _>>()?;
    let nc = r.len()?;
    let classes = (0..nc).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
    let class_weights = r.f64s()?;
    let importance = r.f64s()?;
    let degenerate = r.u8()? != 0;
    let nt = r.len()?;
    let mut trees = Vec::with_capacity(nt);
    for _ in 0..nt {
        let nn = r.len()?;
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            nodes.push(match r.u8()? {
                0 => Node::Split { feature: r.index()?, threshold: r.f64()?, left: r.index()?, right: r.index()? },
                1 => Node::Leaf { dist: r.f64s()? },
                t => return Err(format!("unknown node tag {t}")),
            });
        }
        let importance = r.f64s()?;
        trees.push(Tree { nodes, importance });
    }
    if r.at != buf.len() {
        return Err("trailing bytes after model".into());
    }
    let model = ForestModel { feature_names, classes, class_weights, trees, importance, degenerate };
    validate(&model)?;
    Ok(model)
}

/// Structural checks so a corrupt file cannot make prediction panic.
fn validate(m: &ForestModel) -> std::result::Result<(), String> {
    let (d, k) = (m.feature_names.len(), m.classes.len());
    if k == 0 || m.class_weights.len() != k || m.importance.len() != d || m.trees.is_empty() {
        return Err("inconsistent model header".into());
    }
    for t in &m.trees {
        let n = t.nodes.len();
        if n == 0 {
            return Err("empty tree".into());
        }
        for (i, node) in t.nodes.iter().enumerate() {
            match node {
                Node::Split { feature, left, right, .. } => {
                    // children always follow their parent, so traversal terminates
                    if *feature >= d || *left >= n || *right >= n || *left <= i || *right <= i {
                        return Err("invalid split node".into());
                    }
                }
                Node::Leaf { dist } if dist.len() != k => return Err("leaf size differs from class count".into()),
                Node::Leaf { .. } => {}
            }
        }
    }
    Ok(())
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).at(path)
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    let buf = std::fs::read(path).at(path)?;
    decode(&buf).map_err(|m| Error::format(path, m))
}

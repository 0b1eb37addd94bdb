//! Point cloud readers (CSV, ASCII PLY) and a CSV writer.
//!
//! Both formats carry `x, y, z` and optionally `intensity`, `num_echo` and
//! `class`. Other columns are ignored. An empty `class` field marks an
//! unlabelled point.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use pcdim_core::{ClassId, Point, Schema};

use crate::error::{Context, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub schema: Schema,
}

/// Reads a `.ply` file as PLY and anything else as CSV.
pub fn read_points(path: &Path) -> Result<PointCloud> {
    let is_ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        read_ply(path)
    } else {
        read_csv(path)
    }
}

#[derive(Default)]
struct Columns {
    x: Option<usize>,
    y: Option<usize>,
    z: Option<usize>,
    intensity: Option<usize>,
    num_echo: Option<usize>,
    class: Option<usize>,
}

impl Columns {
    fn from_names<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Self {
        let mut c = Columns::default();
        for (i, n) in names.into_iter().enumerate() {
            let slot = match n.trim() {
                "x" => &mut c.x,
                "y" => &mut c.y,
                "z" => &mut c.z,
                "intensity" => &mut c.intensity,
                "num_echo" => &mut c.num_echo,
                "class" => &mut c.class,
                _ => continue,
            };
            slot.get_or_insert(i);
        }
        c
    }

    fn schema(&self) -> Schema {
        Schema { intensity: self.intensity.is_some(), num_echo: self.num_echo.is_some(), class: self.class.is_some() }
    }

    fn missing_xyz(&self) -> Option<&'static str> {
        [("x", self.x), ("y", self.y), ("z", self.z)].into_iter().find(|(_, c)| c.is_none()).map(|(n, _)| n)
    }

    fn point<'a>(&self, field: impl Fn(usize) -> Option<&'a str>) -> std::result::Result<Point, String> {
        let get = |col: usize, name: &str| field(col).ok_or_else(|| format!("missing field {name}"));
        let num = |col: usize, name: &str| -> std::result::Result<f64, String> {
            let s = get(col, name)?;
            s.trim().parse::<f64>().map_err(|_| format!("bad {name} value {s:?}"))
        };
        let mut p = Point::new(num(self.x.unwrap(), "x")?, num(self.y.unwrap(), "y")?, num(self.z.unwrap(), "z")?);
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if let Some(c) = self.intensity {
            p.intensity = num(c, "intensity")? as f32;
        }
        if let Some(c) = self.num_echo {
            let v = num(c, "num_echo")?;
            if !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                return Err(format!("num_echo must be an integer >= 1, got {v}"));
            }
            p.num_echo = v as u32;
        }
        if let Some(c) = self.class {
            let s = get(c, "class")?;
            let s = s.trim();
            if !s.is_empty() {
                p.class_label = Some(s.parse::<ClassId>().map_err(|_| format!("bad class value {s:?}"))?);
            }
        }
        Ok(p)
    }
}

pub fn read_csv(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).at(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = Columns::from_names(headers.iter());
    if let Some(m) = cols.missing_xyz() {
        return Err(Error::parse(path, 1, format!("header lacks column {m:?}")));
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let p = cols.point(|i| rec.get(i)).map_err(|m| Error::parse(path, line, m))?;
        points.push(p);
    }
    Ok(PointCloud { points, schema: cols.schema() })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

struct Lines<'a> {
    inner: std::io::Lines<BufReader<File>>,
    n: u64,
    path: &'a Path,
}

impl Lines<'_> {
    /// Next line and its 1-based number.
    fn next(&mut self) -> Result<(u64, Option<String>)> {
        self.n += 1;
        Ok((self.n, self.inner.next().transpose().at(self.path)?))
    }
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).at(path)?;
    let mut lines = Lines { inner: BufReader::new(file).lines(), n: 0, path };
    let (_, magic) = lines.next()?;
    if magic.as_deref().map(str::trim) != Some("ply") {
        return Err(Error::parse(path, 1, "missing 'ply' magic"));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (n, line) = lines.next()?;
        let line = line.ok_or_else(|| Error::parse(path, n, "header ends before end_header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(Error::parse(path, n, format!("unsupported PLY format {other}; only ascii"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| Error::parse(path, n, "bad element count"))?;
                elements.push(PlyElement { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements.last_mut().ok_or_else(|| Error::parse(path, n, "property before element"))?;
                el.properties.push(name.to_string());
            }
            ["end_header"] => break,
            _ => return Err(Error::parse(path, n, format!("unexpected header line {line:?}"))),
        }
    }
    let mut cloud = None;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                let (n, line) = lines.next()?;
                line.ok_or_else(|| Error::parse(path, n, format!("truncated {} element", el.name)))?;
            }
            continue;
        }
        let cols = Columns::from_names(el.properties.iter().map(String::as_str));
        if let Some(m) = cols.missing_xyz() {
            return Err(Error::format(path, format!("vertex element lacks property {m:?}")));
        }
        let mut points = Vec::with_capacity(el.count);
        for _ in 0..el.count {
            let (n, line) = lines.next()?;
            let line = line.ok_or_else(|| Error::parse(path, n, "fewer vertices than declared"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let p = cols.point(|i| fields.get(i).copied()).map_err(|m| Error::parse(path, n, m))?;
            points.push(p);
        }
        cloud = Some(PointCloud { points, schema: cols.schema() });
        break;
    }
    cloud.ok_or_else(|| Error::format(path, "no vertex element"))
}

/// Writes `x,y,z` plus the schema's attribute columns.
pub fn write_csv(path: &Path, points: &[Point], schema: Schema) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("x,y,z");
    for (on, name) in [(schema.intensity, ",intensity"), (schema.num_echo, ",num_echo"), (schema.class, ",class")] {
        if on {
            header.push_str(name);
        }
    }
    writeln!(w, "{header}").at(path)?;
    for p in points {
        write!(w, "{},{},{}", p.x, p.y, p.z).at(path)?;
        if schema.intensity {
            write!(w, ",{}", p.intensity).at(path)?;
        }
        if schema.num_echo {
            write!(w, ",{}", p.num_echo).at(path)?;
        }
        if schema.class {
            match p.class_label {
                Some(c) => write!(w, ",{c}").at(path)?,
                None => write!(w, ",").at(path)?,
            }
        }
        writeln!(w).at(path)?;
    }
    w.flush().at(path)
}

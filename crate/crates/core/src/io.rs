//! File formats: problem and perturbation JSON, grid potentials as CSV,
//! spectrum and eigenfunction exports.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), so files
//! round-trip exactly and identical runs produce identical bytes.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::function::VectorFunction;
use crate::grid::Grid;
use crate::linalg::Mat;
use crate::model::{BoundaryPair, MatrixPotential, Problem, SampledPotential};
use crate::transform::PerturbationEntry;

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with fixed-precision floats; non-finite values become `null`.
struct FixedFloat<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(format_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloat(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    ConstantDiagonal { values: Vec<f64> },
    Builtin { name: String },
    /// CSV path, relative to the problem file.
    Grid { csv: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub potential: PotentialSpec,
    pub left: PairSpec,
    pub right: PairSpec,
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Mat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!("{what} must be {n}x{n}")));
    }
    Ok(Mat::from_fn(n, n, |r, c| rows[r][c]))
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ProblemSpec {
    /// Build the problem; grid CSV paths resolve against `base`.
    pub fn to_problem(&self, base: &Path) -> Result<Problem> {
        let n = self.n;
        if n == 0 {
            return Err(Error::DimensionMismatch("n must be at least 1".into()));
        }
        let potential = match &self.potential {
            PotentialSpec::ConstantDiagonal { values } => MatrixPotential::ConstantDiagonal(values.clone()),
            PotentialSpec::Builtin { name } => MatrixPotential::builtin(name)?,
            PotentialSpec::Grid { csv } => {
                MatrixPotential::Sampled(read_potential_csv(fs::File::open(base.join(csv))?, n)?)
            }
        };
        if potential.dim() != n {
            return Err(Error::DimensionMismatch(format!("potential is {0}x{0}, n = {n}", potential.dim())));
        }
        let left = BoundaryPair::new(matrix(&self.left.a, n, "left A")?, matrix(&self.left.b, n, "left B")?);
        let right = BoundaryPair::new(matrix(&self.right.a, n, "right A")?, matrix(&self.right.b, n, "right B")?);
        Problem::new(potential, left, right)
    }

    /// Describe `p`; a sampled potential is referenced as `csv_name`.
    pub fn from_problem(p: &Problem, csv_name: &str) -> Self {
        let potential = match &p.potential {
            MatrixPotential::ConstantDiagonal(v) => PotentialSpec::ConstantDiagonal { values: v.clone() },
            MatrixPotential::Builtin { name, .. } => PotentialSpec::Builtin { name: name.clone() },
            MatrixPotential::Sampled(_) => PotentialSpec::Grid { csv: csv_name.to_string() },
        };
        Self {
            n: p.dim(),
            potential,
            left: PairSpec { a: rows(&p.left.a), b: rows(&p.left.b) },
            right: PairSpec { a: rows(&p.right.a), b: rows(&p.right.b) },
        }
    }
}

pub fn parse_problem(json: &str, base: &Path) -> Result<Problem> {
    let spec: ProblemSpec = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    spec.to_problem(base)
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    let text = fs::read_to_string(path)?;
    parse_problem(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Write `p` as JSON at `path`; a sampled potential goes to a CSV next to it.
pub fn save_problem(path: &Path, p: &Problem) -> Result<()> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
    let csv_name = format!("{stem}_potential.csv");
    if let MatrixPotential::Sampled(s) = &p.potential {
        let csv_path: PathBuf = path.with_file_name(&csv_name);
        write_potential_csv(fs::File::create(csv_path)?, s.grid(), s.samples())?;
    }
    write_json(path, &ProblemSpec::from_problem(p, &csv_name))
}

pub fn parse_perturbation(json: &str) -> Result<Vec<PerturbationEntry>> {
    serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_perturbation(path: &Path) -> Result<Vec<PerturbationEntry>> {
    parse_perturbation(&fs::read_to_string(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Header `x, p11, p12, ..., pNN` over the upper triangle, row-major.
pub fn potential_header(n: usize) -> Vec<String> {
    let mut h = vec!["x".to_string()];
    for i in 1..=n {
        for j in i..=n {
            h.push(format!("p{i}{j}"));
        }
    }
    h
}

/// Grid potential as CSV rows `x, upper triangle of P(x)`.
pub fn write_potential_csv<W: Write>(w: W, grid: &Grid, samples: &[Mat]) -> Result<()> {
    let n = samples.first().map_or(0, |m| m.nrows());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(potential_header(n)).map_err(csv_error)?;
    for (x, m) in grid.nodes().iter().zip(samples) {
        let mut rec = vec![format_f64(*x)];
        for i in 0..n {
            for j in i..n {
                rec.push(format_f64(m[(i, j)]));
            }
        }
        out.write_record(&rec).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a grid potential of size `n`. Accepts the upper-triangle layout
/// (mirrored) or all `N²` entries row-major.
pub fn read_potential_csv<R: Read>(r: R, n: usize) -> Result<SampledPotential> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let width = rdr.headers().map_err(csv_error)?.len();
    let tri = 1 + n * (n + 1) / 2;
    let full = 1 + n * n;
    if width != tri && width != full {
        return Err(Error::Parse(format!(
            "potential CSV has {width} columns; expected {tri} (upper triangle) or {full} (full) for n = {n}"
        )));
    }
    let mut xs = Vec::new();
    let mut samples = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}: {f:?}", line + 2))))
            .collect::<Result<_>>()?;
        xs.push(vals[0]);
        let mut m = Mat::zeros(n, n);
        if width == tri {
            let mut k = 1;
            for i in 0..n {
                for j in i..n {
                    m[(i, j)] = vals[k];
                    m[(j, i)] = vals[k];
                    k += 1;
                }
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = vals[1 + i * n + j];
                }
            }
        }
        samples.push(m);
    }
    SampledPotential::new(Grid::from_nodes(&xs)?, samples)
}

/// CSV rows `x, f_1, ..., f_N`.
pub fn write_function_csv<W: Write>(w: W, grid: &Grid, f: &VectorFunction) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string()];
    header.extend((1..=f.dim()).map(|i| format!("f{i}")));
    out.write_record(&header).map_err(csv_error)?;
    for (x, v) in grid.nodes().iter().zip(&f.values) {
        let mut rec = vec![format_f64(*x)];
        rec.extend(v.iter().map(|c| format_f64(*c)));
        out.write_record(&rec).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

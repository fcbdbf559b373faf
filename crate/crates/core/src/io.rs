//! File formats: `λ` checkpoints, CSV tables, density dumps and PGM images.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::basis::{feature_count, ExponentSet, FeatureKind};
use crate::distribution::{NaturalParams, PolyDistribution};
use crate::env::Transition;
use crate::error::{Error, Result};
use crate::quadrature::{product_grid, trapezoid_grid, GridKind};

const LAMBDA_MAGIC: &[u8; 8] = b"MEPOLYLM";
const LAMBDA_VERSION: u32 = 1;

/// Natural parameters together with everything needed to rebuild their
/// distribution: `dim`, `order`, feature kind and a full tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCheckpoint {
    pub dim: usize,
    pub order: usize,
    pub grid_size: usize,
    pub kind: FeatureKind,
    pub clip: f64,
    pub lambda: Vec<f64>,
}

impl LambdaCheckpoint {
    pub fn new(dist: &PolyDistribution, params: &NaturalParams) -> Result<Self> {
        if params.len() != dist.num_features() {
            return Err(Error::DimensionMismatch {
                expected: dist.num_features(),
                actual: params.len(),
            });
        }
        if dist.grid().kind() != GridKind::Full {
            return Err(Error::InvalidArgument("checkpoints need a full tensor grid".into()));
        }
        let grid_size = dist.grid().nodes_per_axis();
        Ok(Self {
            dim: dist.dim(),
            order: dist.basis().order(),
            grid_size,
            kind: dist.kind(),
            clip: params.clip(),
            lambda: params.as_slice().to_vec(),
        })
    }

    pub fn distribution(&self) -> Result<PolyDistribution> {
        let grid = product_grid(&trapezoid_grid(self.grid_size)?, self.dim)?;
        let basis = ExponentSet::new(self.dim, self.order)?;
        Ok(PolyDistribution::with_kind(basis, grid, self.kind)?.with_lambda_clip(self.clip))
    }

    pub fn params(&self) -> Result<NaturalParams> {
        NaturalParams::clipped(&self.lambda, self.clip)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.lambda.len());
        out.extend_from_slice(LAMBDA_MAGIC);
        for v in [
            LAMBDA_VERSION,
            self.dim as u32,
            self.order as u32,
            self.grid_size as u32,
            kind_code(self.kind),
            self.lambda.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.clip.to_le_bytes());
        for l in &self.lambda {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        take(&mut r, &mut magic)?;
        if &magic != LAMBDA_MAGIC {
            return Err(Error::Format("not a parameter checkpoint (bad magic bytes)".into()));
        }
        let version = take_u32(&mut r)?;
        if version != LAMBDA_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (expected {LAMBDA_VERSION})"
            )));
        }
        let dim = take_u32(&mut r)? as usize;
        let order = take_u32(&mut r)? as usize;
        let grid_size = take_u32(&mut r)? as usize;
        let kind = match take_u32(&mut r)? {
            0 => FeatureKind::Legendre,
            1 => FeatureKind::Monomial,
            k => return Err(Error::Format(format!("unknown feature kind code {k}"))),
        };
        let len = take_u32(&mut r)? as usize;
        let expected = feature_count(dim, order)?;
        if len != expected {
            return Err(Error::Format(format!(
                "{len} parameters stored, dim {dim} order {order} needs {expected}"
            )));
        }
        let mut clip = [0u8; 8];
        take(&mut r, &mut clip)?;
        let clip = f64::from_le_bytes(clip);
        if r.len() != 8 * len {
            return Err(Error::Format(format!(
                "payload holds {} bytes, expected {}",
                r.len(),
                8 * len
            )));
        }
        let lambda = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
            .collect();
        Ok(Self {
            dim,
            order,
            grid_size,
            kind,
            clip,
            lambda,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn kind_code(kind: FeatureKind) -> u32 {
    match kind {
        FeatureKind::Legendre => 0,
        FeatureKind::Monomial => 1,
    }
}

fn take(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated checkpoint".into()))
}

fn take_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    take(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write serializable rows as CSV with a header row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write a header and rows of numbers.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read the numeric columns of a CSV with a header row. Columns named
/// `log_prob` or `index` are skipped, so sample dumps read back as points.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let keep: Vec<usize> = r
        .headers()?
        .iter()
        .enumerate()
        .filter(|(_, h)| !matches!(h.trim(), "log_prob" | "index"))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::Format(format!("{}: no coordinate columns", path.display())));
    }
    let mut points = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let point = keep
            .iter()
            .map(|&i| {
                let field = record.get(i).unwrap_or("").trim();
                field.parse::<f64>().map_err(|_| {
                    Error::Format(format!(
                        "{}: row {}: {field:?} is not a number",
                        path.display(),
                        line + 2
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(point);
    }
    if points.is_empty() {
        return Err(Error::Empty("sample file"));
    }
    Ok(points)
}

/// Binary (P5) 8-bit PGM; `pixels` is row-major with row 0 at the top.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            actual: pixels.len(),
        });
    }
    let mut w = create(path)?;
    write!(w, "P5\n{width} {height}\n255\n")
        .and_then(|_| w.write_all(pixels))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Map values to gray levels `round(255·v/max)`; an all-zero input is black.
pub fn to_gray(values: &[f64]) -> Vec<u8> {
    let max = values.iter().copied().fold(0.0, f64::max);
    values
        .iter()
        .map(|v| {
            if max > 0.0 {
                (255.0 * v.max(0.0) / max).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Density `π(x) = exp(⟨λ, T(x)⟩ − A(λ))` over a 1D or 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDump {
    pub dim: usize,
    pub nodes: Vec<f64>,
    /// Grid points in grid order (first axis slowest).
    pub points: Vec<Vec<f64>>,
    pub density: Vec<f64>,
}

impl DensityDump {
    pub fn new(dist: &PolyDistribution, params: &NaturalParams) -> Result<Self> {
        let dim = dist.dim();
        if dim > 2 {
            return Err(Error::InvalidArgument(format!(
                "density export supports 1D and 2D, got dim {dim}"
            )));
        }
        if dist.grid().kind() != GridKind::Full {
            return Err(Error::InvalidArgument("density export needs a full tensor grid".into()));
        }
        let n = dist.grid().nodes_per_axis();
        let eval = dist.eval(params)?;
        let density = (0..dist.grid().len())
            .map(|i| eval.grid_log_prob(i).exp())
            .collect();
        let points: Vec<Vec<f64>> = dist.grid().points().map(|p| p.to_vec()).collect();
        let nodes = points.iter().take(n).map(|p| p[dim - 1]).collect();
        Ok(Self {
            dim,
            nodes,
            points,
            density,
        })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["x", "y"][..self.dim].iter().map(|s| s.to_string()).collect();
        h.push("density".into());
        h
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .zip(&self.density)
            .map(|(p, d)| {
                let mut row = p.clone();
                row.push(*d);
                row
            })
            .collect()
    }

    /// Image pixels: a single row for 1D; for 2D, columns run along `x` and
    /// row 0 is `y = +1`.
    pub fn image(&self) -> (usize, usize, Vec<u8>) {
        let n = self.nodes.len();
        let gray = to_gray(&self.density);
        if self.dim == 1 {
            return (n, 1, gray);
        }
        let mut pixels = vec![0u8; n * n];
        for row in 0..n {
            for col in 0..n {
                pixels[row * n + col] = gray[col * n + (n - 1 - row)];
            }
        }
        (n, n, pixels)
    }

    pub fn write(&self, csv_path: &Path, pgm_path: &Path) -> Result<()> {
        write_table(csv_path, &self.header(), &self.rows())?;
        let (w, h, pixels) = self.image();
        write_pgm(pgm_path, w, h, &pixels)
    }
}

/// One trajectory CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub episode: usize,
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub reward: f64,
    pub cause: &'static str,
}

/// Flatten episodes into `episode,t,x,y,vx,vy,reward,cause` rows; positions
/// are the states the actions were taken from.
pub fn trajectory_rows(episodes: &[Vec<Transition>]) -> Vec<TrajectoryRow> {
    episodes
        .iter()
        .enumerate()
        .flat_map(|(e, steps)| {
            steps.iter().enumerate().map(move |(t, tr)| TrajectoryRow {
                episode: e,
                t,
                x: tr.state[0],
                y: tr.state[1],
                vx: tr.action[0],
                vy: tr.action[1],
                reward: tr.reward,
                cause: tr.cause.as_str(),
            })
        })
        .collect()
}

/// Pretty JSON to `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
